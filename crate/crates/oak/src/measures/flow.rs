//! Univariate normalizing flow.
//!
//! Each layer shifts, scales, then applies a sinh-arcsinh warp:
//! `z = sinh(t * asinh(b * (x - shift)) + s)` with `b, t > 0`, which is
//! strictly increasing on the reals. A flow is a composition of such layers,
//! fitted per feature by minimizing the KL divergence between the transformed
//! sample and a standard Gaussian, then frozen before the GP is fitted.

use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};
use crate::opt::{self, OptimizeConfig};

/// One shift/scale/sinh-arcsinh layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowLayer {
    pub shift: f64,
    pub scale: f64,
    pub skew: f64,
    pub tail: f64,
}

impl FlowLayer {
    pub fn identity() -> Self {
        Self {
            shift: 0.0,
            scale: 1.0,
            skew: 0.0,
            tail: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = self.shift.is_finite()
            && self.scale.is_finite()
            && self.skew.is_finite()
            && self.tail.is_finite();
        if !finite {
            return Err(OakError::Invalid(
                "flow layer has non-finite parameters".into(),
            ));
        }
        if self.scale <= 0.0 || self.tail <= 0.0 {
            return Err(OakError::Invalid(format!(
                "flow layer needs scale > 0 and tail > 0, got scale={}, tail={}",
                self.scale, self.tail
            )));
        }
        Ok(())
    }

    fn forward(&self, x: f64) -> f64 {
        let w = self.scale * (x - self.shift);
        (self.tail * w.asinh() + self.skew).sinh()
    }

    /// log of dz/dx; finite for all finite x since scale and tail are positive.
    fn log_deriv(&self, x: f64) -> f64 {
        let w = self.scale * (x - self.shift);
        let theta = self.tail * w.asinh() + self.skew;
        self.tail.ln() + self.scale.ln() + ln_cosh(theta) - 0.5 * (1.0 + w * w).ln()
    }

    fn inverse(&self, z: f64) -> f64 {
        let u = ((z.asinh() - self.skew) / self.tail).sinh();
        self.shift + u / self.scale
    }
}

/// ln cosh with large-argument guard against overflow of cosh itself.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    if a > 20.0 {
        a - std::f64::consts::LN_2 + (-2.0 * a).exp().ln_1p()
    } else {
        a.cosh().ln()
    }
}

/// Parameters of a fitted flow: a composition of [`FlowLayer`]s applied in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    layers: Vec<FlowLayer>,
}

impl FlowParams {
    pub fn new(layers: Vec<FlowLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(OakError::Invalid("flow needs at least one layer".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        Ok(Self { layers })
    }

    pub fn identity(n_layers: usize) -> Self {
        Self {
            layers: vec![FlowLayer::identity(); n_layers.max(1)],
        }
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }
}

/// Apply the flow: `z = g(x)`.
pub fn flow_forward(params: &FlowParams, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(OakError::Invalid(format!(
            "flow input must be finite, got {x}"
        )));
    }
    Ok(params.layers.iter().fold(x, |v, layer| layer.forward(v)))
}

/// log g'(x), the sum of per-layer log-derivatives along the composition.
pub fn flow_log_deriv(params: &FlowParams, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(OakError::Invalid(format!(
            "flow input must be finite, got {x}"
        )));
    }
    let mut value = x;
    let mut acc = 0.0;
    for layer in &params.layers {
        acc += layer.log_deriv(value);
        value = layer.forward(value);
    }
    Ok(acc)
}

/// Invert the flow: the `x` with `g(x) = z`. Closed form per layer.
pub fn flow_inverse(params: &FlowParams, z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(OakError::Invalid(format!(
            "flow input must be finite, got {z}"
        )));
    }
    Ok(params
        .layers
        .iter()
        .rev()
        .fold(z, |v, layer| layer.inverse(v)))
}

/// Empirical KL divergence between the transformed sample and `N(0, 1)`,
/// up to an additive constant: `mean(z_i^2 / 2 - log g'(x_i))`.
pub fn flow_objective(params: &FlowParams, values: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &x in values {
        let z = flow_forward(params, x)?;
        total += 0.5 * z * z - flow_log_deriv(params, x)?;
    }
    Ok(total / values.len() as f64)
}

/// KL objective and its gradient with respect to the packed parameters
/// `[shift, ln scale, skew, ln tail]` per layer, by reverse accumulation
/// through the layer chain.
pub fn flow_objective_grad(params: &FlowParams, values: &[f64]) -> Result<(f64, Vec<f64>)> {
    struct LayerCache {
        w: f64,
        asinh_w: f64,
        cosh_warp: f64,
        tanh_warp: f64,
        /// d(warp)/dw = tail / sqrt(1 + w^2)
        warp_w: f64,
        /// d(log deriv)/dw
        logd_w: f64,
    }

    let layers = params.layers();
    let n_params = 4 * layers.len();
    let mut grad = vec![0.0; n_params];
    let mut total = 0.0;
    let mut caches: Vec<LayerCache> = Vec::with_capacity(layers.len());
    for &x in values {
        if !x.is_finite() {
            return Err(OakError::Invalid(format!(
                "flow input must be finite, got {x}"
            )));
        }
        caches.clear();
        let mut value = x;
        let mut log_deriv_sum = 0.0;
        for layer in layers {
            let w = layer.scale * (value - layer.shift);
            let asinh_w = w.asinh();
            let warp = layer.tail * asinh_w + layer.skew;
            let q = 1.0 + w * w;
            let warp_w = layer.tail / q.sqrt();
            let tanh_warp = warp.tanh();
            caches.push(LayerCache {
                w,
                asinh_w,
                cosh_warp: warp.cosh(),
                tanh_warp,
                warp_w,
                logd_w: tanh_warp * warp_w - w / q,
            });
            log_deriv_sum += layer.tail.ln() + layer.scale.ln() + ln_cosh(warp) - 0.5 * q.ln();
            value = warp.sinh();
        }
        let z = value;
        total += 0.5 * z * z - log_deriv_sum;

        // Reverse pass: adj is d(point objective)/d(layer output).
        let mut adj = z;
        for (k, layer) in layers.iter().enumerate().rev() {
            let cache = &caches[k];
            let out_warp = cache.cosh_warp;
            let out_w = out_warp * cache.warp_w;
            let shared = adj * out_w - cache.logd_w;
            let g = &mut grad[4 * k..4 * k + 4];
            g[0] += -layer.scale * shared;
            g[1] += shared * cache.w - 1.0;
            g[2] += adj * out_warp - cache.tanh_warp;
            g[3] += (adj * out_warp - cache.tanh_warp) * layer.tail * cache.asinh_w - 1.0;
            adj = layer.scale * shared;
        }
    }
    let n = values.len() as f64;
    for g in &mut grad {
        *g /= n;
    }
    Ok((total / n, grad))
}

fn pack(params: &FlowParams) -> Vec<f64> {
    params
        .layers
        .iter()
        .flat_map(|l| [l.shift, l.scale.ln(), l.skew, l.tail.ln()])
        .collect()
}

fn unpack(theta: &[f64]) -> Result<FlowParams> {
    let layers = theta
        .chunks_exact(4)
        .map(|c| FlowLayer {
            shift: c[0],
            scale: c[1].exp(),
            skew: c[2],
            tail: c[3].exp(),
        })
        .collect();
    FlowParams::new(layers)
}

/// Fit a flow to `values` by quasi-Newton descent on the KL objective with
/// finite-difference gradients. The returned parameters never score worse
/// than the identity flow.
pub fn fit_flow(values: &[f64], n_layers: usize, config: &OptimizeConfig) -> Result<FlowParams> {
    if n_layers == 0 {
        return Err(OakError::Config("flow needs at least one layer".into()));
    }
    if values.len() < 8 {
        return Err(OakError::Invalid(format!(
            "flow fitting needs at least 8 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(OakError::Invalid(
            "flow input contains non-finite values".into(),
        ));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(OakError::Invalid(
            "feature is constant; cannot fit a flow to it".into(),
        ));
    }

    // Start from plain standardization in the first layer.
    let mut init_layers = vec![FlowLayer::identity(); n_layers];
    init_layers[0] = FlowLayer {
        shift: mean,
        scale: 1.0 / var.sqrt(),
        skew: 0.0,
        tail: 1.0,
    };
    let init = FlowParams::new(init_layers)?;

    // Analytic gradient, with a finite-difference fallback if it degrades.
    let objective = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
        let params = unpack(theta)?;
        let (value, grad) = flow_objective_grad(&params, values)?;
        if value.is_finite() && grad.iter().any(|g| !g.is_finite()) {
            let fd = opt::finite_difference_gradient(
                |theta| flow_objective(&unpack(theta)?, values),
                theta,
                1e-6,
            )?;
            return Ok((value, fd));
        }
        Ok((value, grad))
    };
    let fitted = opt::minimize(objective, &pack(&init), config)?;
    let mut best_params = unpack(&fitted.x)?;
    let mut best_value = fitted.value;

    let identity = FlowParams::identity(n_layers);
    let identity_value = flow_objective(&identity, values)?;
    if best_value > identity_value {
        // The standardization start lost to the identity; retry from there.
        let retry = opt::minimize(objective, &pack(&identity), config)?;
        if retry.value < identity_value {
            best_params = unpack(&retry.x)?;
            best_value = retry.value;
        } else {
            best_params = identity;
            best_value = identity_value;
        }
    }
    debug_assert!(best_value <= identity_value + 1e-12);
    Ok(best_params)
}
