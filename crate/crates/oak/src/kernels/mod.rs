//! Base kernels and their measure-constrained variants.
//!
//! A constrained kernel is the covariance of a GP conditioned on its integral
//! against the feature's input measure being zero. For the squared
//! exponential base this is closed form under Gaussian, mixture-of-Gaussian
//! and empirical measures; categorical features use a constrained level
//! matrix. [`compose`] assembles the per-feature constrained grams into the
//! full additive kernel across interaction orders.

pub mod compose;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};
use crate::measures::{
    CategoricalMeasure, EmpiricalMeasure, GaussianMeasure, Measure, MixtureMeasure,
};

/// Unit-variance squared exponential kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeKernel {
    pub lengthscale: f64,
}

impl SeKernel {
    pub fn new(lengthscale: f64) -> Result<Self> {
        if !lengthscale.is_finite() || lengthscale <= 0.0 {
            return Err(OakError::Invalid(format!(
                "lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        Ok(Self { lengthscale })
    }
}

/// `k(x, y) = exp(-(x - y)^2 / (2 l^2))`, in `(0, 1]`.
pub fn se_eval(kernel: &SeKernel, x: f64, y: f64) -> f64 {
    let d = x - y;
    (-d * d / (2.0 * kernel.lengthscale * kernel.lengthscale)).exp()
}

/// Categorical kernel over `M` levels, `A = W W^T + Diag(kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalKernel {
    w: DMatrix<f64>,
    kappa: Vec<f64>,
}

impl CategoricalKernel {
    pub fn new(w: DMatrix<f64>, kappa: Vec<f64>) -> Result<Self> {
        if w.nrows() != kappa.len() {
            return Err(OakError::Shape(format!(
                "W has {} rows but kappa has {} entries",
                w.nrows(),
                kappa.len()
            )));
        }
        if kappa.is_empty() {
            return Err(OakError::Invalid(
                "categorical kernel needs at least one level".into(),
            ));
        }
        if w.iter().any(|v| !v.is_finite()) || kappa.iter().any(|v| !v.is_finite()) {
            return Err(OakError::Invalid(
                "categorical kernel parameters must be finite".into(),
            ));
        }
        // kappa >= 0 keeps A = W W^T + Diag(kappa) positive semidefinite.
        if kappa.iter().any(|&k| k < 0.0) {
            return Err(OakError::Invalid(
                "kappa entries must be nonnegative".into(),
            ));
        }
        Ok(Self { w, kappa })
    }

    /// White kernel between levels: `A = I`.
    pub fn identity(n_levels: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n_levels, 0), vec![1.0; n_levels])
    }

    pub fn n_levels(&self) -> usize {
        self.kappa.len()
    }

    /// The induced level covariance `A`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let mut a = &self.w * self.w.transpose();
        for (i, &k) in self.kappa.iter().enumerate() {
            a[(i, i)] += k;
        }
        a
    }
}

/// Constrained squared exponential under a Gaussian measure:
/// `k(x, y) - l sqrt(l^2 + 2 d^2) / (l^2 + d^2) * exp(-((x-mu)^2 + (y-mu)^2) / (2 (l^2 + d^2)))`.
pub fn constrained_se_gaussian(lengthscale: f64, m: &GaussianMeasure, x: f64, y: f64) -> f64 {
    let l2 = lengthscale * lengthscale;
    let v = l2 + m.delta_sq;
    let coeff = lengthscale * (l2 + 2.0 * m.delta_sq).sqrt() / v;
    let dx = x - m.mu;
    let dy = y - m.mu;
    let d = x - y;
    (-d * d / (2.0 * l2)).exp() - coeff * (-(dx * dx + dy * dy) / (2.0 * v)).exp()
}

/// `E[S f(x)]` for the SE kernel under a Gaussian mixture:
/// `sum_k w_k l N(x | mu_k, delta_k + l^2) sqrt(2 pi)`.
pub(crate) fn mixture_cross_expectation(lengthscale: f64, m: &MixtureMeasure, x: f64) -> f64 {
    let l2 = lengthscale * lengthscale;
    m.components()
        .iter()
        .map(|c| {
            let v = c.variance + l2;
            let d = x - c.mean;
            c.weight * lengthscale / v.sqrt() * (-d * d / (2.0 * v)).exp()
        })
        .sum()
}

/// `E[S^2]` for the SE kernel under a Gaussian mixture:
/// `sum_ij w_i w_j l N(mu_i | mu_j, l^2 + delta_i + delta_j) sqrt(2 pi)`.
pub(crate) fn mixture_self_expectation(lengthscale: f64, m: &MixtureMeasure) -> Result<f64> {
    let l2 = lengthscale * lengthscale;
    let comps = m.components();
    let mut total = 0.0;
    for ci in comps {
        for cj in comps {
            let v = l2 + ci.variance + cj.variance;
            let d = ci.mean - cj.mean;
            total += ci.weight * cj.weight * lengthscale / v.sqrt() * (-d * d / (2.0 * v)).exp();
        }
    }
    if total <= 0.0 {
        return Err(OakError::Numerical(format!(
            "E[S^2] = {total} for mixture measure; measure or kernel is degenerate"
        )));
    }
    Ok(total)
}

/// Constrained SE under a mixture-of-Gaussians measure:
/// `k(x, y) - E[S f(x)] E[S^2]^{-1} E[S f(y)]`.
pub fn constrained_se_mixture(lengthscale: f64, m: &MixtureMeasure, x: f64, y: f64) -> Result<f64> {
    let kernel = SeKernel::new(lengthscale)?;
    let phi_x = mixture_cross_expectation(lengthscale, m, x);
    let phi_y = mixture_cross_expectation(lengthscale, m, y);
    let s2 = mixture_self_expectation(lengthscale, m)?;
    Ok(se_eval(&kernel, x, y) - phi_x * phi_y / s2)
}

pub(crate) fn empirical_cross<K: Fn(f64, f64) -> f64>(
    base: &K,
    m: &EmpiricalMeasure,
    x: f64,
) -> f64 {
    m.locations()
        .iter()
        .zip(m.weights())
        .map(|(&a, &w)| w * base(x, a))
        .sum()
}

pub(crate) fn empirical_self<K: Fn(f64, f64) -> f64>(base: &K, m: &EmpiricalMeasure) -> f64 {
    let locs = m.locations();
    let weights = m.weights();
    let mut total = 0.0;
    for (i, &a) in locs.iter().enumerate() {
        for (j, &b) in locs.iter().enumerate() {
            total += weights[i] * weights[j] * base(a, b);
        }
    }
    total
}

/// Constrained kernel under the empirical measure of `m`:
/// `k(x, y) - (sum_i w_i k(x, x_i)) (sum_ij w_i w_j k(x_i, x_j))^{-1} (sum_j w_j k(y, x_j))`.
pub fn constrained_empirical<K: Fn(f64, f64) -> f64>(
    base: K,
    m: &EmpiricalMeasure,
    x: f64,
    y: f64,
) -> Result<f64> {
    let denom = empirical_self(&base, m);
    if denom <= 0.0 {
        return Err(OakError::Numerical(format!(
            "empirical measure normalizer is {denom}; base kernel is not positive definite on the atoms"
        )));
    }
    Ok(base(x, y) - empirical_cross(&base, m, x) * empirical_cross(&base, m, y) / denom)
}

/// Constrained categorical level matrix `B = A - (A w)(A w)^T / (w^T A w)`,
/// which satisfies `B w = 0`.
pub fn constrained_categorical(
    kernel: &CategoricalKernel,
    m: &CategoricalMeasure,
) -> Result<DMatrix<f64>> {
    if kernel.n_levels() != m.n_levels() {
        return Err(OakError::Shape(format!(
            "kernel has {} levels but measure has {}",
            kernel.n_levels(),
            m.n_levels()
        )));
    }
    let a = kernel.a_matrix();
    let w = nalgebra::DVector::from_column_slice(m.probabilities());
    let aw = &a * &w;
    let waw = w.dot(&aw);
    if waw <= 0.0 {
        return Err(OakError::Numerical(format!(
            "w^T A w = {waw}; kernel/measure pair is degenerate"
        )));
    }
    Ok(a - &aw * aw.transpose() / waw)
}

/// Base kernel assigned to one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaseKernel {
    Se(SeKernel),
    Categorical(CategoricalKernel),
}

/// A base kernel paired with its input measure, exposing the zero-mean
/// constrained covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedKernel {
    base: BaseKernel,
    measure: Measure,
    /// `B` for categorical features, computed once.
    level_matrix: Option<DMatrix<f64>>,
}

impl ConstrainedKernel {
    pub fn new(base: BaseKernel, measure: Measure) -> Result<Self> {
        let level_matrix = match (&base, &measure) {
            (BaseKernel::Se(_), Measure::Gaussian(_))
            | (BaseKernel::Se(_), Measure::Mixture(_))
            | (BaseKernel::Se(_), Measure::Empirical(_)) => None,
            (BaseKernel::Categorical(k), Measure::Categorical(m)) => {
                Some(constrained_categorical(k, m)?)
            }
            _ => {
                return Err(OakError::Invalid(
                    "kernel and measure kinds do not match".into(),
                ))
            }
        };
        Ok(Self {
            base,
            measure,
            level_matrix,
        })
    }

    pub fn base(&self) -> &BaseKernel {
        &self.base
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.base, BaseKernel::Categorical(_))
    }

    /// The constrained level matrix `B` for categorical features.
    pub fn level_matrix(&self) -> Option<&DMatrix<f64>> {
        self.level_matrix.as_ref()
    }

    pub fn lengthscale(&self) -> Option<f64> {
        match &self.base {
            BaseKernel::Se(k) => Some(k.lengthscale),
            BaseKernel::Categorical(_) => None,
        }
    }

    pub fn set_lengthscale(&mut self, lengthscale: f64) -> Result<()> {
        match &mut self.base {
            BaseKernel::Se(k) => {
                *k = SeKernel::new(lengthscale)?;
                Ok(())
            }
            BaseKernel::Categorical(_) => Err(OakError::Invalid(
                "categorical kernels have no lengthscale".into(),
            )),
        }
    }

    /// Evaluate `k~(x, y)`. Categorical features expect level indices.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if !x.is_finite() || !y.is_finite() {
            return Err(OakError::Invalid("kernel inputs must be finite".into()));
        }
        match (&self.base, &self.measure) {
            (BaseKernel::Se(k), Measure::Gaussian(m)) => {
                Ok(constrained_se_gaussian(k.lengthscale, m, x, y))
            }
            (BaseKernel::Se(k), Measure::Mixture(m)) => {
                constrained_se_mixture(k.lengthscale, m, x, y)
            }
            (BaseKernel::Se(k), Measure::Empirical(m)) => {
                constrained_empirical(|a, b| se_eval(k, a, b), m, x, y)
            }
            (BaseKernel::Categorical(_), Measure::Categorical(_)) => {
                let b = self
                    .level_matrix
                    .as_ref()
                    .expect("precomputed at construction");
                Ok(b[(level_index(x, b.nrows())?, level_index(y, b.nrows())?)])
            }
            _ => unreachable!("pairing validated at construction"),
        }
    }

    /// Constrained gram between two point lists.
    pub fn gram(&self, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.gram_impl(xs, ys, false)?.0)
    }

    /// Constrained gram and its elementwise derivative with respect to the
    /// lengthscale (`None` for categorical features).
    pub fn gram_with_grad(
        &self,
        xs: &[f64],
        ys: &[f64],
    ) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        self.gram_impl(xs, ys, true)
    }

    fn gram_impl(
        &self,
        xs: &[f64],
        ys: &[f64],
        with_grad: bool,
    ) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(OakError::Invalid("kernel inputs must be finite".into()));
        }
        match (&self.base, &self.measure) {
            (BaseKernel::Se(k), Measure::Gaussian(m)) => {
                Ok(se_gaussian_gram(k.lengthscale, m, xs, ys, with_grad))
            }
            (BaseKernel::Se(k), Measure::Mixture(m)) => {
                se_correction_gram(k.lengthscale, xs, ys, with_grad, MixtureCorrection(m))
            }
            (BaseKernel::Se(k), Measure::Empirical(m)) => {
                se_correction_gram(k.lengthscale, xs, ys, with_grad, EmpiricalCorrection(m))
            }
            (BaseKernel::Categorical(_), Measure::Categorical(_)) => {
                let b = self
                    .level_matrix
                    .as_ref()
                    .expect("precomputed at construction");
                let mut gram = DMatrix::zeros(xs.len(), ys.len());
                for (i, &x) in xs.iter().enumerate() {
                    let xi = level_index(x, b.nrows())?;
                    for (j, &y) in ys.iter().enumerate() {
                        gram[(i, j)] = b[(xi, level_index(y, b.nrows())?)];
                    }
                }
                Ok((gram, None))
            }
            _ => unreachable!("pairing validated at construction"),
        }
    }

    /// Diagonal `k~(x, x)` for every point, without forming the full gram.
    pub fn diag(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.eval(x, x)).collect()
    }
}

pub(crate) fn level_index(value: f64, n_levels: usize) -> Result<usize> {
    let idx = value.round();
    if (value - idx).abs() > 1e-9 || idx < 0.0 || idx >= n_levels as f64 {
        return Err(OakError::Invalid(format!(
            "categorical value {value} is not a level index below {n_levels}"
        )));
    }
    Ok(idx as usize)
}

/// Gaussian-measure gram with the `exp(-(x-mu)^2 / (2(l^2+d^2)))` factors
/// computed once per point.
fn se_gaussian_gram(
    lengthscale: f64,
    m: &GaussianMeasure,
    xs: &[f64],
    ys: &[f64],
    with_grad: bool,
) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let l2 = lengthscale * lengthscale;
    let v = l2 + m.delta_sq;
    let coeff = lengthscale * (l2 + 2.0 * m.delta_sq).sqrt() / v;
    // d coeff / dl, via logarithmic differentiation.
    let coeff_dl =
        coeff * (1.0 / lengthscale + lengthscale / (l2 + 2.0 * m.delta_sq) - 2.0 * lengthscale / v);

    let half_factor = |points: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut e = Vec::with_capacity(points.len());
        let mut u = Vec::with_capacity(points.len());
        for &p in points {
            let d = p - m.mu;
            u.push(d * d);
            e.push((-d * d / (2.0 * v)).exp());
        }
        (e, u)
    };
    let (ex, ux) = half_factor(xs);
    let (ey, uy) = half_factor(ys);

    let mut gram = DMatrix::zeros(xs.len(), ys.len());
    let mut grad = with_grad.then(|| DMatrix::zeros(xs.len(), ys.len()));
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let d2 = (x - y) * (x - y);
            let main = (-d2 / (2.0 * l2)).exp();
            let corr = ex[i] * ey[j];
            gram[(i, j)] = main - coeff * corr;
            if let Some(g) = grad.as_mut() {
                let main_dl = main * d2 / (l2 * lengthscale);
                let corr_dl = corr * (coeff_dl + coeff * lengthscale * (ux[i] + uy[j]) / (v * v));
                g[(i, j)] = main_dl - corr_dl;
            }
        }
    }
    (gram, grad)
}

/// Rank-one correction `k - q(x) q(y) / s` shared by the mixture and
/// empirical measures, with per-point `q` and its lengthscale derivative.
trait SeCorrection {
    fn cross(&self, lengthscale: f64, x: f64) -> (f64, f64);
    fn normalizer(&self, lengthscale: f64) -> Result<(f64, f64)>;
}

struct MixtureCorrection<'a>(&'a MixtureMeasure);

impl SeCorrection for MixtureCorrection<'_> {
    fn cross(&self, lengthscale: f64, x: f64) -> (f64, f64) {
        let l2 = lengthscale * lengthscale;
        let mut value = 0.0;
        let mut deriv = 0.0;
        for c in self.0.components() {
            let v = c.variance + l2;
            let d2 = (x - c.mean) * (x - c.mean);
            let term = c.weight * lengthscale / v.sqrt() * (-d2 / (2.0 * v)).exp();
            value += term;
            deriv += term * (1.0 / lengthscale - lengthscale / v + lengthscale * d2 / (v * v));
        }
        (value, deriv)
    }

    fn normalizer(&self, lengthscale: f64) -> Result<(f64, f64)> {
        let l2 = lengthscale * lengthscale;
        let mut value = 0.0;
        let mut deriv = 0.0;
        for ci in self.0.components() {
            for cj in self.0.components() {
                let v = l2 + ci.variance + cj.variance;
                let d2 = (ci.mean - cj.mean) * (ci.mean - cj.mean);
                let term = ci.weight * cj.weight * lengthscale / v.sqrt() * (-d2 / (2.0 * v)).exp();
                value += term;
                deriv += term * (1.0 / lengthscale - lengthscale / v + lengthscale * d2 / (v * v));
            }
        }
        if value <= 0.0 {
            return Err(OakError::Numerical(format!(
                "E[S^2] = {value} for mixture measure; measure or kernel is degenerate"
            )));
        }
        Ok((value, deriv))
    }
}

struct EmpiricalCorrection<'a>(&'a EmpiricalMeasure);

impl SeCorrection for EmpiricalCorrection<'_> {
    fn cross(&self, lengthscale: f64, x: f64) -> (f64, f64) {
        let l2 = lengthscale * lengthscale;
        let mut value = 0.0;
        let mut deriv = 0.0;
        for (&a, &w) in self.0.locations().iter().zip(self.0.weights()) {
            let d2 = (x - a) * (x - a);
            let term = w * (-d2 / (2.0 * l2)).exp();
            value += term;
            deriv += term * d2 / (l2 * lengthscale);
        }
        (value, deriv)
    }

    fn normalizer(&self, lengthscale: f64) -> Result<(f64, f64)> {
        let l2 = lengthscale * lengthscale;
        let locs = self.0.locations();
        let weights = self.0.weights();
        let mut value = 0.0;
        let mut deriv = 0.0;
        for (i, &a) in locs.iter().enumerate() {
            for (j, &b) in locs.iter().enumerate() {
                let d2 = (a - b) * (a - b);
                let term = weights[i] * weights[j] * (-d2 / (2.0 * l2)).exp();
                value += term;
                deriv += term * d2 / (l2 * lengthscale);
            }
        }
        if value <= 0.0 {
            return Err(OakError::Numerical(format!(
                "empirical measure normalizer is {value}; base kernel is not positive definite on the atoms"
            )));
        }
        Ok((value, deriv))
    }
}

fn se_correction_gram<C: SeCorrection>(
    lengthscale: f64,
    xs: &[f64],
    ys: &[f64],
    with_grad: bool,
    correction: C,
) -> Result<(DMatrix<f64>, Option<DMatrix<f64>>)> {
    let l2 = lengthscale * lengthscale;
    let (s, s_dl) = correction.normalizer(lengthscale)?;
    let eval_points = |points: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut q = Vec::with_capacity(points.len());
        let mut dq = Vec::with_capacity(points.len());
        for &p in points {
            let (value, deriv) = correction.cross(lengthscale, p);
            q.push(value);
            dq.push(deriv);
        }
        (q, dq)
    };
    let (qx, dqx) = eval_points(xs);
    let (qy, dqy) = eval_points(ys);

    let mut gram = DMatrix::zeros(xs.len(), ys.len());
    let mut grad = with_grad.then(|| DMatrix::zeros(xs.len(), ys.len()));
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            let d2 = (x - y) * (x - y);
            let main = (-d2 / (2.0 * l2)).exp();
            gram[(i, j)] = main - qx[i] * qy[j] / s;
            if let Some(g) = grad.as_mut() {
                let main_dl = main * d2 / (l2 * lengthscale);
                let corr_dl =
                    ((dqx[i] * qy[j] + qx[i] * dqy[j]) * s - qx[i] * qy[j] * s_dl) / (s * s);
                g[(i, j)] = main_dl - corr_dl;
            }
        }
    }
    Ok((gram, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::GaussHermite;
    use approx::assert_relative_eq;

    #[test]
    fn se_eval_basics() {
        let k = SeKernel::new(1.0).unwrap();
        assert_relative_eq!(se_eval(&k, 0.7, 0.7), 1.0);
        assert_relative_eq!(se_eval(&k, 0.0, 1.0), (-0.5f64).exp(), epsilon = 1e-15);
        let k2 = SeKernel::new(2.0).unwrap();
        assert_relative_eq!(se_eval(&k2, 0.0, 2.0), (-0.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn constrained_se_gaussian_at_center() {
        let m = GaussianMeasure::standard();
        let got = constrained_se_gaussian(1.0, &m, 0.0, 0.0);
        assert_relative_eq!(got, 1.0 - 3.0f64.sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn constrained_se_gaussian_integrates_to_zero() {
        let rule = GaussHermite::new(64).unwrap();
        let m = GaussianMeasure::new(0.4, 1.7).unwrap();
        for x_prime in [-2.0, -0.3, 0.0, 1.1, 3.5] {
            let integral = rule.expect_gaussian(m.mu, m.delta_sq, |x| {
                constrained_se_gaussian(0.8, &m, x, x_prime)
            });
            assert!(integral.abs() < 1e-8, "integral = {integral}");
        }
    }

    #[test]
    fn constrained_se_gaussian_small_variance_limit() {
        let m = GaussianMeasure::new(0.3, 1e-12).unwrap();
        let k = SeKernel::new(1.0).unwrap();
        for (x, y) in [(0.0, 0.5), (-1.0, 2.0), (0.3, 0.3)] {
            let got = constrained_se_gaussian(1.0, &m, x, y);
            let want = se_eval(&k, x, y) - se_eval(&k, x, m.mu) * se_eval(&k, y, m.mu);
            assert_relative_eq!(got, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn mixture_single_component_reduces_to_gaussian() {
        let mixture = MixtureMeasure::new(vec![(1.0, 0.7, 1.3)]).unwrap();
        let gaussian = GaussianMeasure::new(0.7, 1.3).unwrap();
        for (x, y) in [(0.0, 0.0), (-1.2, 0.4), (2.0, -2.0)] {
            let got = constrained_se_mixture(0.9, &mixture, x, y).unwrap();
            let want = constrained_se_gaussian(0.9, &gaussian, x, y);
            assert_relative_eq!(got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn mixture_integrates_to_zero_by_quadrature() {
        let mixture = MixtureMeasure::new(vec![(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]).unwrap();
        let rule = GaussHermite::new(64).unwrap();
        for x_prime in [-1.5, 0.0, 0.8, 2.2] {
            let integral = rule.expect_mixture(&mixture, |x| {
                constrained_se_mixture(1.0, &mixture, x, x_prime).unwrap()
            });
            assert!(integral.abs() < 1e-7, "integral = {integral}");
        }
    }

    #[test]
    fn mixture_matches_quadrature_built_kernel() {
        // Rebuild the constrained kernel from its defining expectations with
        // quadrature only and compare.
        let mixture = MixtureMeasure::new(vec![(0.5, -1.0, 1.0), (0.5, 1.0, 1.0)]).unwrap();
        let lengthscale = 1.0;
        let kernel = SeKernel::new(lengthscale).unwrap();
        let rule = GaussHermite::new(96).unwrap();
        let cross = |point: f64| rule.expect_mixture(&mixture, |t| se_eval(&kernel, t, point));
        let self_term = rule.expect_mixture(&mixture, |t| {
            rule.expect_mixture(&mixture, |u| se_eval(&kernel, t, u))
        });
        for (x, y) in [(0.0, 0.0), (0.5, -0.25), (1.5, 2.0)] {
            let want = se_eval(&kernel, x, y) - cross(x) * cross(y) / self_term;
            let got = constrained_se_mixture(lengthscale, &mixture, x, y).unwrap();
            assert_relative_eq!(got, want, epsilon = 1e-7);
        }
    }

    #[test]
    fn empirical_orthogonal_over_atoms() {
        let locations: Vec<f64> = (0..20).map(|i| -1.0 + 2.0 * i as f64 / 19.0).collect();
        let weights = vec![0.05; 20];
        let m = EmpiricalMeasure::new(locations.clone(), weights.clone()).unwrap();
        let kernel = SeKernel::new(0.7).unwrap();
        let base = |a: f64, b: f64| se_eval(&kernel, a, b);
        let mut total = 0.0;
        for (i, &xp) in locations.iter().enumerate() {
            for (j, &xq) in locations.iter().enumerate() {
                total += weights[i] * weights[j] * constrained_empirical(base, &m, xp, xq).unwrap();
            }
        }
        assert!(total.abs() < 1e-10, "sum over atoms = {total}");
    }

    #[test]
    fn empirical_single_atom_rank_one_correction() {
        let m = EmpiricalMeasure::new(vec![0.4], vec![1.0]).unwrap();
        let kernel = SeKernel::new(1.1).unwrap();
        let base = |a: f64, b: f64| se_eval(&kernel, a, b);
        let (x, y) = (-0.3, 0.9);
        let got = constrained_empirical(base, &m, x, y).unwrap();
        let want = base(x, y) - base(x, 0.4) * base(y, 0.4) / base(0.4, 0.4);
        assert_relative_eq!(got, want, epsilon = 1e-14);
    }

    #[test]
    fn empirical_matches_independent_double_sum() {
        let locations: Vec<f64> = (0..20).map(|i| -1.0 + 2.0 * i as f64 / 19.0).collect();
        let m = EmpiricalMeasure::new(locations.clone(), vec![0.05; 20]).unwrap();
        let kernel = SeKernel::new(0.7).unwrap();
        let base = |a: f64, b: f64| se_eval(&kernel, a, b);
        // Direct re-implementation of the correction sums.
        let q = |p: f64| -> f64 { locations.iter().map(|&a| 0.05 * base(p, a)).sum() };
        let mut denom = 0.0;
        for &a in &locations {
            for &b in &locations {
                denom += 0.05 * 0.05 * base(a, b);
            }
        }
        for (x, y) in [(0.13, -0.7), (1.4, 0.2), (-2.0, 2.0)] {
            let got = constrained_empirical(base, &m, x, y).unwrap();
            let want = base(x, y) - q(x) * q(y) / denom;
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn categorical_annihilates_measure_vector() {
        let kernel = CategoricalKernel::new(
            DMatrix::from_row_slice(3, 2, &[0.5, -0.2, 1.0, 0.3, -0.4, 0.8]),
            vec![0.6, 0.1, 0.9],
        )
        .unwrap();
        let measure = CategoricalMeasure::new(vec![0.2, 0.5, 0.3]).unwrap();
        let b = constrained_categorical(&kernel, &measure).unwrap();
        let w = nalgebra::DVector::from_column_slice(measure.probabilities());
        let bw = &b * &w;
        assert!(bw.amax() < 1e-10, "B w = {bw:?}");
    }

    #[test]
    fn categorical_identity_uniform_is_centering_matrix() {
        let kernel = CategoricalKernel::identity(3).unwrap();
        let measure = CategoricalMeasure::new(vec![1.0 / 3.0; 3]).unwrap();
        let b = constrained_categorical(&kernel, &measure).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 - 1.0 / 3.0 } else { -1.0 / 3.0 };
                assert_relative_eq!(b[(i, j)], want, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn categorical_skewed_weights_zero_expectation() {
        let kernel = CategoricalKernel::identity(2).unwrap();
        let measure = CategoricalMeasure::new(vec![0.9, 0.1]).unwrap();
        let b = constrained_categorical(&kernel, &measure).unwrap();
        let w = nalgebra::DVector::from_column_slice(measure.probabilities());
        let expectation = (w.transpose() * &b * &w)[(0, 0)];
        assert!(expectation.abs() < 1e-12);
    }

    #[test]
    fn gram_matches_pointwise_eval() {
        let xs = [-1.4, -0.2, 0.3, 1.9];
        let ys = [0.1, 0.4, -0.8];
        let kernels = [
            ConstrainedKernel::new(
                BaseKernel::Se(SeKernel::new(0.8).unwrap()),
                Measure::Gaussian(GaussianMeasure::new(0.2, 1.4).unwrap()),
            )
            .unwrap(),
            ConstrainedKernel::new(
                BaseKernel::Se(SeKernel::new(1.2).unwrap()),
                Measure::Mixture(
                    MixtureMeasure::new(vec![(0.3, -1.0, 0.5), (0.7, 0.8, 1.5)]).unwrap(),
                ),
            )
            .unwrap(),
            ConstrainedKernel::new(
                BaseKernel::Se(SeKernel::new(0.6).unwrap()),
                Measure::Empirical(EmpiricalMeasure::from_sample(&[-1.0, 0.0, 0.3, 1.2]).unwrap()),
            )
            .unwrap(),
        ];
        for kernel in &kernels {
            let gram = kernel.gram(&xs, &ys).unwrap();
            for (i, &x) in xs.iter().enumerate() {
                for (j, &y) in ys.iter().enumerate() {
                    assert_relative_eq!(
                        gram[(i, j)],
                        kernel.eval(x, y).unwrap(),
                        max_relative = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn gram_lengthscale_grad_matches_finite_differences() {
        let xs = [-1.1, 0.0, 0.7, 2.3];
        let measures = [
            Measure::Gaussian(GaussianMeasure::new(-0.1, 0.9).unwrap()),
            Measure::Mixture(MixtureMeasure::new(vec![(0.4, -0.5, 0.8), (0.6, 1.0, 1.2)]).unwrap()),
            Measure::Empirical(
                EmpiricalMeasure::from_sample(&[-0.9, -0.1, 0.4, 1.1, 1.8]).unwrap(),
            ),
        ];
        let l = 0.85;
        let h = 1e-6;
        for measure in measures {
            let at = |lengthscale: f64| {
                ConstrainedKernel::new(
                    BaseKernel::Se(SeKernel::new(lengthscale).unwrap()),
                    measure.clone(),
                )
                .unwrap()
                .gram(&xs, &xs)
                .unwrap()
            };
            let kernel =
                ConstrainedKernel::new(BaseKernel::Se(SeKernel::new(l).unwrap()), measure.clone())
                    .unwrap();
            let (_, grad) = kernel.gram_with_grad(&xs, &xs).unwrap();
            let grad = grad.unwrap();
            let fd = (at(l + h) - at(l - h)) / (2.0 * h);
            for i in 0..xs.len() {
                for j in 0..xs.len() {
                    assert_relative_eq!(grad[(i, j)], fd[(i, j)], epsilon = 1e-6);
                }
            }
        }
    }

    #[test]
    fn categorical_gram_indexes_levels() {
        let kernel = ConstrainedKernel::new(
            BaseKernel::Categorical(CategoricalKernel::identity(3).unwrap()),
            Measure::Categorical(CategoricalMeasure::new(vec![0.5, 0.25, 0.25]).unwrap()),
        )
        .unwrap();
        let gram = kernel.gram(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        let b = kernel.level_matrix().unwrap();
        assert_relative_eq!(gram[(0, 1)], b[(0, 1)]);
        assert_relative_eq!(gram[(2, 2)], b[(2, 2)]);
        assert!(kernel.gram(&[0.5], &[0.0]).is_err());
        assert!(kernel.gram(&[3.0], &[0.0]).is_err());
    }

    #[test]
    fn mismatched_pairing_is_rejected() {
        let err = ConstrainedKernel::new(
            BaseKernel::Se(SeKernel::new(1.0).unwrap()),
            Measure::Categorical(CategoricalMeasure::new(vec![1.0]).unwrap()),
        );
        assert!(err.is_err());
    }
}
