//! Composition of per-feature constrained grams into the full additive gram.
//!
//! The sum over all feature subsets of size `<= max_order`, with one variance
//! per interaction order, is an elementary symmetric polynomial in the
//! per-feature gram entries. It is evaluated in polynomial time with the
//! Newton-Girard recurrence over elementwise power sums.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};
use crate::kernels::ConstrainedKernel;

/// Hyperparameters of the additive model: per-feature lengthscales (`None`
/// for categorical features), one variance per interaction order
/// `sigma_sq[0..=max_order]`, and the observation noise variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OakHyperparams {
    pub lengthscales: Vec<Option<f64>>,
    pub order_variances: Vec<f64>,
    pub noise_variance: f64,
}

impl OakHyperparams {
    pub fn new(
        lengthscales: Vec<Option<f64>>,
        order_variances: Vec<f64>,
        noise_variance: f64,
    ) -> Result<Self> {
        let hp = Self {
            lengthscales,
            order_variances,
            noise_variance,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order_variances.len() < 2 {
            return Err(OakError::Invalid(
                "need a constant variance and at least order 1".into(),
            ));
        }
        if self.max_order() > self.n_features() {
            return Err(OakError::Invalid(format!(
                "interaction order {} exceeds feature count {}",
                self.max_order(),
                self.n_features()
            )));
        }
        for &v in &self.order_variances {
            if !v.is_finite() || v < 0.0 {
                return Err(OakError::Invalid(format!(
                    "order variances must be nonnegative, got {v}"
                )));
            }
        }
        if !self.noise_variance.is_finite() || self.noise_variance <= 0.0 {
            return Err(OakError::Invalid(format!(
                "noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        for l in self.lengthscales.iter().flatten() {
            if !l.is_finite() || *l <= 0.0 {
                return Err(OakError::Invalid(format!(
                    "lengthscales must be positive, got {l}"
                )));
            }
        }
        Ok(())
    }

    /// Truncation order: the largest interaction order in the kernel sum.
    pub fn max_order(&self) -> usize {
        self.order_variances.len() - 1
    }

    pub fn n_features(&self) -> usize {
        self.lengthscales.len()
    }
}

fn check_same_shape(grams: &[DMatrix<f64>]) -> Result<(usize, usize)> {
    let first = grams
        .first()
        .ok_or_else(|| OakError::Invalid("need at least one per-feature gram".into()))?;
    let shape = first.shape();
    for g in grams {
        if g.shape() != shape {
            return Err(OakError::Shape(format!(
                "per-feature grams disagree: {:?} vs {:?}",
                shape,
                g.shape()
            )));
        }
    }
    Ok(shape)
}

/// Elementwise elementary symmetric polynomials `E_0..E_max_order` of the
/// per-feature grams, via `E_l = (1/l) sum_{k=1}^{l} (-1)^{k-1} E_{l-k} . S_k`
/// with power sums `S_k = sum_d K_d^k` (all products elementwise).
pub fn newton_girard_elementaries(
    grams: &[DMatrix<f64>],
    max_order: usize,
) -> Result<Vec<DMatrix<f64>>> {
    let (nrows, ncols) = check_same_shape(grams)?;
    if max_order > grams.len() {
        return Err(OakError::Invalid(format!(
            "interaction order {} exceeds feature count {}",
            max_order,
            grams.len()
        )));
    }

    // Elementwise powers built iteratively to avoid exponent drift.
    let mut power_sums: Vec<DMatrix<f64>> = Vec::with_capacity(max_order);
    let mut running: Vec<DMatrix<f64>> = grams.to_vec();
    for k in 0..max_order {
        if k > 0 {
            for (r, g) in running.iter_mut().zip(grams) {
                r.component_mul_assign(g);
            }
        }
        let mut s = DMatrix::zeros(nrows, ncols);
        for r in &running {
            s += r;
        }
        power_sums.push(s);
    }

    let mut elementaries = Vec::with_capacity(max_order + 1);
    elementaries.push(DMatrix::from_element(nrows, ncols, 1.0));
    for level in 1..=max_order {
        let mut e = DMatrix::zeros(nrows, ncols);
        let mut sign = 1.0;
        for k in 1..=level {
            e += sign * elementaries[level - k].component_mul(&power_sums[k - 1]);
            sign = -sign;
        }
        e /= level as f64;
        elementaries.push(e);
    }
    Ok(elementaries)
}

/// Additive gram `sum_l sigma_sq[l] E_l` over interaction orders
/// `0..=order_variances.len() - 1`.
pub fn newton_girard_gram(grams: &[DMatrix<f64>], order_variances: &[f64]) -> Result<DMatrix<f64>> {
    if order_variances.is_empty() {
        return Err(OakError::Invalid(
            "need at least the constant order variance".into(),
        ));
    }
    let elementaries = newton_girard_elementaries(grams, order_variances.len() - 1)?;
    let (nrows, ncols) = elementaries[0].shape();
    let mut total = DMatrix::zeros(nrows, ncols);
    for (variance, e) in order_variances.iter().zip(&elementaries) {
        total += *variance * e;
    }
    Ok(total)
}

/// The comparison composition `variance * prod_d (1 + K_d)` (elementwise),
/// which weights every interaction order equally.
pub fn product_form_gram(grams: &[DMatrix<f64>], variance: f64) -> Result<DMatrix<f64>> {
    let (nrows, ncols) = check_same_shape(grams)?;
    let mut total = DMatrix::from_element(nrows, ncols, variance);
    for g in grams {
        let shifted = g.map(|v| 1.0 + v);
        total.component_mul_assign(&shifted);
    }
    Ok(total)
}

/// Per-feature constrained grams between the columns of `x1` and `x2`
/// (or `x1` with itself), with lengthscales taken from `hp`.
pub fn oak_feature_grams(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x1: &[Vec<f64>],
    x2: Option<&[Vec<f64>]>,
) -> Result<Vec<DMatrix<f64>>> {
    validate_columns(kernels, hp, x1)?;
    if let Some(x2) = x2 {
        validate_columns(kernels, hp, x2)?;
    }
    kernels
        .iter()
        .enumerate()
        .map(|(f, kernel)| {
            let kernel = with_lengthscale(kernel, hp.lengthscales[f])?;
            let ys = x2.map_or(&x1[f], |x2| &x2[f]);
            kernel.gram(&x1[f], ys)
        })
        .collect()
}

/// The full additive gram between `x1` and `x2` (or `x1` with itself).
/// Symmetric and positive semidefinite up to jitter when `x2` is `None`.
pub fn oak_gram(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x1: &[Vec<f64>],
    x2: Option<&[Vec<f64>]>,
) -> Result<DMatrix<f64>> {
    let grams = oak_feature_grams(kernels, hp, x1, x2)?;
    newton_girard_gram(&grams, &hp.order_variances)
}

/// Diagonal of the additive gram at `x`, without forming the full matrix.
pub fn oak_diag(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x: &[Vec<f64>],
) -> Result<Vec<f64>> {
    validate_columns(kernels, hp, x)?;
    let n = x.first().map_or(0, Vec::len);
    let mut per_feature = Vec::with_capacity(kernels.len());
    for (f, kernel) in kernels.iter().enumerate() {
        let kernel = with_lengthscale(kernel, hp.lengthscales[f])?;
        per_feature.push(kernel.diag(&x[f])?);
    }

    let max_order = hp.max_order();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Scalar Newton-Girard over this point's per-feature values.
        let values: Vec<f64> = per_feature.iter().map(|col| col[i]).collect();
        let mut powers = values.clone();
        let mut power_sums = Vec::with_capacity(max_order);
        for k in 0..max_order {
            if k > 0 {
                for (p, v) in powers.iter_mut().zip(&values) {
                    *p *= v;
                }
            }
            power_sums.push(powers.iter().sum::<f64>());
        }
        let mut e = vec![1.0];
        for level in 1..=max_order {
            let mut acc = 0.0;
            let mut sign = 1.0;
            for k in 1..=level {
                acc += sign * e[level - k] * power_sums[k - 1];
                sign = -sign;
            }
            e.push(acc / level as f64);
        }
        out.push(hp.order_variances.iter().zip(&e).map(|(v, e)| v * e).sum());
    }
    Ok(out)
}

fn with_lengthscale(
    kernel: &ConstrainedKernel,
    lengthscale: Option<f64>,
) -> Result<ConstrainedKernel> {
    match (kernel.is_categorical(), lengthscale) {
        (false, Some(l)) => {
            let mut k = kernel.clone();
            k.set_lengthscale(l)?;
            Ok(k)
        }
        (true, None) => Ok(kernel.clone()),
        (false, None) => Err(OakError::Invalid(
            "continuous feature is missing its lengthscale".into(),
        )),
        (true, Some(_)) => Err(OakError::Invalid(
            "categorical feature cannot have a lengthscale".into(),
        )),
    }
}

fn validate_columns(
    kernels: &[ConstrainedKernel],
    hp: &OakHyperparams,
    x: &[Vec<f64>],
) -> Result<()> {
    if kernels.len() != hp.n_features() || x.len() != kernels.len() {
        return Err(OakError::Shape(format!(
            "{} kernels, {} lengthscales, {} data columns",
            kernels.len(),
            hp.n_features(),
            x.len()
        )));
    }
    let n = x.first().map_or(0, Vec::len);
    if x.iter().any(|col| col.len() != n) {
        return Err(OakError::Shape("data columns have unequal lengths".into()));
    }
    Ok(())
}
