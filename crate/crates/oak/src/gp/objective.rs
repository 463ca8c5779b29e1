//! Exact-GP objectives: log marginal likelihood and its MAP variant with a
//! Gamma prior on the order variances, both with analytic gradients in the
//! unconstrained (log) parameterization.
//!
//! Parameter vector layout: `[log l_f for each continuous feature in feature
//! order, log sigma_sq_0 .. log sigma_sq_max_order, log noise_variance]`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{OakError, Result};
use crate::kernels::compose::{newton_girard_elementaries, OakHyperparams};
use crate::kernels::ConstrainedKernel;

use super::GammaPrior;

/// Relative jitter added to the diagonal before factorization, as a fraction
/// of the mean diagonal of the signal gram. Escalated once on Cholesky
/// failure.
pub(crate) const JITTER_FRACTION: f64 = 1e-6;
const JITTER_ESCALATION: f64 = 100.0;

/// Lower bound on the optimized noise variance. Without it the objective is
/// unbounded when the targets lie exactly in the kernel's span (constant
/// targets being the common case).
const NOISE_FLOOR: f64 = 1e-12;

/// Maps between [`OakHyperparams`] and the unconstrained parameter vector.
#[derive(Debug, Clone)]
pub(crate) struct ParamLayout {
    /// Indices of features that carry a lengthscale.
    pub continuous: Vec<usize>,
    pub n_orders: usize,
    pub n_features: usize,
}

impl ParamLayout {
    pub fn for_hyperparams(hp: &OakHyperparams) -> Self {
        Self {
            continuous: hp
                .lengthscales
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.is_some().then_some(i))
                .collect(),
            n_orders: hp.order_variances.len(),
            n_features: hp.lengthscales.len(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.continuous.len() + self.n_orders + 1
    }

    pub fn pack(&self, hp: &OakHyperparams) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.n_params());
        for &f in &self.continuous {
            theta.push(hp.lengthscales[f].expect("continuous feature").ln());
        }
        for &v in &hp.order_variances {
            theta.push(v.ln());
        }
        theta.push(hp.noise_variance.ln());
        theta
    }

    pub fn unpack(&self, theta: &[f64]) -> Result<OakHyperparams> {
        if theta.len() != self.n_params() {
            return Err(OakError::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                theta.len()
            )));
        }
        let mut lengthscales = vec![None; self.n_features];
        for (slot, &f) in self.continuous.iter().enumerate() {
            lengthscales[f] = Some(theta[slot].exp());
        }
        let orders_start = self.continuous.len();
        let order_variances: Vec<f64> = theta[orders_start..orders_start + self.n_orders]
            .iter()
            .map(|t| t.exp())
            .collect();
        let noise_variance = theta[self.n_params() - 1].exp() + NOISE_FLOOR;
        OakHyperparams::new(lengthscales, order_variances, noise_variance)
    }
}

/// Factorization of `K + (noise + jitter) I` together with everything the
/// gradient needs.
pub(crate) struct GramFactor {
    pub cholesky: Cholesky<f64, Dyn>,
    pub feature_grams: Vec<DMatrix<f64>>,
    pub feature_grad_grams: Vec<Option<DMatrix<f64>>>,
    pub elementaries: Vec<DMatrix<f64>>,
    /// Jitter expressed as `fraction * tr(K) / n`.
    pub jitter_fraction: f64,
    pub jitter: f64,
}

pub(crate) fn factorize(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x: &[Vec<f64>],
    with_grads: bool,
) -> Result<GramFactor> {
    hp.validate()?;
    if kernels.len() != x.len() || kernels.len() != hp.n_features() {
        return Err(OakError::Shape(format!(
            "{} kernels, {} data columns, {} feature hyperparameters",
            kernels.len(),
            x.len(),
            hp.n_features()
        )));
    }
    let n = x.first().map_or(0, Vec::len);
    if n < 2 {
        return Err(OakError::Invalid("need at least two rows".into()));
    }

    let mut feature_grams = Vec::with_capacity(kernels.len());
    let mut feature_grad_grams = Vec::with_capacity(kernels.len());
    for (f, kernel) in kernels.iter().enumerate() {
        let mut kernel = kernel.clone();
        match (kernel.is_categorical(), hp.lengthscales[f]) {
            (false, Some(l)) => kernel.set_lengthscale(l)?,
            (true, None) => {}
            _ => {
                return Err(OakError::Invalid(format!(
                    "feature {f}: lengthscale does not match kernel kind"
                )))
            }
        }
        if with_grads && !kernel.is_categorical() {
            let (gram, grad) = kernel.gram_with_grad(&x[f], &x[f])?;
            feature_grams.push(gram);
            feature_grad_grams.push(grad);
        } else {
            feature_grams.push(kernel.gram(&x[f], &x[f])?);
            feature_grad_grams.push(None);
        }
    }

    let elementaries = newton_girard_elementaries(&feature_grams, hp.max_order())?;
    let mut signal = DMatrix::zeros(n, n);
    for (variance, e) in hp.order_variances.iter().zip(&elementaries) {
        signal += *variance * e;
    }
    // Jitter is scaled by the non-constant part of the diagonal: the constant
    // kernel contributes a flat rank-one block that never drives
    // ill-conditioning, and keeping it out leaves shifted-target refits with
    // an unchanged factorization apart from the constant pathway.
    let mean_diag = hp
        .order_variances
        .iter()
        .zip(&elementaries)
        .skip(1)
        .map(|(variance, e)| variance * e.trace())
        .sum::<f64>()
        / n as f64;

    let mut jitter_fraction = JITTER_FRACTION;
    loop {
        let jitter = jitter_fraction * mean_diag;
        let mut a = signal.clone();
        for i in 0..n {
            a[(i, i)] += hp.noise_variance + jitter;
        }
        if let Some(cholesky) = Cholesky::new(a) {
            return Ok(GramFactor {
                cholesky,
                feature_grams,
                feature_grad_grams,
                elementaries,
                jitter_fraction,
                jitter,
            });
        }
        if jitter_fraction >= JITTER_FRACTION * JITTER_ESCALATION * JITTER_ESCALATION {
            return Err(OakError::Numerical(format!(
                "Cholesky factorization failed after jitter escalation; \
                 lengthscales {:?}, order variances {:?}, noise variance {}",
                hp.lengthscales, hp.order_variances, hp.noise_variance
            )));
        }
        jitter_fraction *= JITTER_ESCALATION;
    }
}

/// Log marginal likelihood of the additive GP and its gradient over the
/// unconstrained parameters.
pub fn log_marginal_likelihood(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x: &[Vec<f64>],
    y: &[f64],
) -> Result<(f64, Vec<f64>)> {
    evaluate(kernels, hp, x, y, None)
}

/// Log marginal likelihood plus the Gamma log-prior on every order variance
/// (up to an additive constant), with its gradient.
pub fn map_objective(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x: &[Vec<f64>],
    y: &[f64],
    prior: &GammaPrior,
) -> Result<(f64, Vec<f64>)> {
    evaluate(kernels, hp, x, y, Some(prior))
}

fn evaluate(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x: &[Vec<f64>],
    y: &[f64],
    prior: Option<&GammaPrior>,
) -> Result<(f64, Vec<f64>)> {
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OakError::Invalid(
            "targets contain non-finite values".into(),
        ));
    }
    let n = y.len();
    if x.first().map_or(0, Vec::len) != n {
        return Err(OakError::Shape(format!(
            "{} rows of features vs {} targets",
            x.first().map_or(0, Vec::len),
            n
        )));
    }
    let layout = ParamLayout::for_hyperparams(hp);
    let factor = factorize(kernels, hp, x, true)?;
    let y_vec = DVector::from_column_slice(y);
    let alpha = factor.cholesky.solve(&y_vec);

    let nf = n as f64;
    let log_det_half: f64 = factor
        .cholesky
        .l_dirty()
        .diagonal()
        .iter()
        .map(|d| d.ln())
        .sum();
    let mut value =
        -0.5 * y_vec.dot(&alpha) - log_det_half - 0.5 * nf * (2.0 * std::f64::consts::PI).ln();

    let precision = factor.cholesky.inverse();
    let trace_precision = precision.trace();
    let alpha_sq = alpha.dot(&alpha);

    // d value / d theta = 1/2 alpha^T dA alpha - 1/2 tr(A^{-1} dA), where dA
    // includes the jitter's dependence on the non-constant mean diagonal.
    let quad_minus_trace = |m: &DMatrix<f64>, with_jitter_shift: bool| -> f64 {
        let m_alpha = m * &alpha;
        let diag_shift = if with_jitter_shift {
            factor.jitter_fraction * m.trace() / nf
        } else {
            0.0
        };
        0.5 * (alpha.dot(&m_alpha) + diag_shift * alpha_sq)
            - 0.5 * (precision.dot(m) + diag_shift * trace_precision)
    };

    let mut grad = Vec::with_capacity(layout.n_params());
    let max_order = hp.max_order();
    for &f in &layout.continuous {
        let lengthscale = hp.lengthscales[f].expect("continuous feature");
        // Sum over orders of sigma_l^2 times the elementary symmetric
        // polynomial of the other features at order l - 1.
        let (nr, nc) = factor.feature_grams[f].shape();
        let mut excluded = DMatrix::from_element(nr, nc, 1.0);
        let mut weight = hp.order_variances[1] * &excluded;
        for order in 2..=max_order {
            excluded =
                &factor.elementaries[order - 1] - factor.feature_grams[f].component_mul(&excluded);
            weight += hp.order_variances[order] * &excluded;
        }
        let dk_dl = weight.component_mul(
            factor.feature_grad_grams[f]
                .as_ref()
                .expect("gradient gram for continuous feature"),
        );
        grad.push(lengthscale * quad_minus_trace(&dk_dl, true));
    }
    for (order, &variance) in hp.order_variances.iter().enumerate() {
        grad.push(variance * quad_minus_trace(&factor.elementaries[order], order > 0));
    }
    // Noise enters the diagonal directly, without the jitter pathway.
    grad.push(hp.noise_variance * (0.5 * alpha_sq - 0.5 * trace_precision));

    if let Some(prior) = prior {
        let orders_start = layout.continuous.len();
        for (order, &variance) in hp.order_variances.iter().enumerate() {
            if variance > 0.0 {
                value += (prior.shape - 1.0) * variance.ln() - prior.rate * variance;
            }
            grad[orders_start + order] += (prior.shape - 1.0) - prior.rate * variance;
        }
    }

    Ok((value, grad))
}
