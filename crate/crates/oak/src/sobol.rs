//! Analytic Sobol indices of the posterior-mean components.
//!
//! Each component's variance under the input measure reduces to a quadratic
//! form in the GP weights through per-feature cross matrices
//! `C_i[p, q] = int k~_i(x, X_p) k~_i(x, X_q) dp_i(x)`: closed form under a
//! Gaussian measure, exact sums for empirical and categorical measures, and
//! Gauss-Hermite quadrature for mixtures. Indices are normalized, ranked and
//! thresholded into a [`SobolReport`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};
use crate::gp::{normalize_subset, FittedModel};
use crate::kernels::ConstrainedKernel;
use crate::measures::{CategoricalMeasure, EmpiricalMeasure, GaussianMeasure, Measure};
use crate::quad::GaussHermite;

/// Absolute floor for the clamp on slightly negative Sobol indices. The
/// effective tolerance also scales with the roundoff of the quadratic form
/// (`eps * n * sigma^4 |alpha|^2 max_diag`); anything more negative signals a
/// broken cross matrix.
const NEGATIVE_INDEX_TOLERANCE: f64 = 1e-10;

/// Quadrature size used for mixture-measure cross matrices.
const MIXTURE_QUADRATURE_NODES: usize = 96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolEntry {
    /// Feature subset, sorted ascending.
    pub subset: Vec<usize>,
    /// Raw component variance `R_u`.
    pub index: f64,
    /// `R_u / sum_v R_v`; zero in a degenerate report.
    pub normalized: f64,
    /// Whether the normalized index fell below the report threshold.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    /// One entry per subset of size `1..=max_order`, ordered by size then
    /// lexicographically.
    pub entries: Vec<SobolEntry>,
    /// Total variance `R`.
    pub total: f64,
    /// Entry positions sorted by normalized index descending, ties broken
    /// lexicographically on the subset. Empty when degenerate.
    pub ranking: Vec<usize>,
    /// Prefix sums of the ranked normalized indices.
    pub cumulative: Vec<f64>,
    pub threshold: f64,
    /// Set when every index is zero and normalization is undefined.
    pub degenerate: bool,
}

/// `C[p, q] = int k~(x, xi_p) k~(x, xi_q) N(x; mu, delta_sq) dx` for the
/// constrained SE kernel, assembled from the four closed-form pieces.
pub fn sobol_cross_matrix_gaussian(
    lengthscale: f64,
    m: &GaussianMeasure,
    xi: &[f64],
) -> DMatrix<f64> {
    let n = xi.len();
    let mut c = DMatrix::zeros(n, n);
    for p in 0..n {
        for q in p..n {
            let value = gaussian_cross_entry(lengthscale, m, xi[p], xi[q]);
            c[(p, q)] = value;
            c[(q, p)] = value;
        }
    }
    c
}

/// One entry of the Gaussian cross matrix:
/// `term1 - term2(a, b) - term2(b, a) + term4`.
pub fn gaussian_cross_entry(lengthscale: f64, m: &GaussianMeasure, a: f64, b: f64) -> f64 {
    gaussian_term1(lengthscale, m, a, b)
        - gaussian_term2(lengthscale, m, a, b)
        - gaussian_term2(lengthscale, m, b, a)
        + gaussian_term4(lengthscale, m, a, b)
}

/// `int p(x) k(x, a) k(x, b) dx` for the unconstrained SE kernel.
pub(crate) fn gaussian_term1(lengthscale: f64, m: &GaussianMeasure, a: f64, b: f64) -> f64 {
    let l2 = lengthscale * lengthscale;
    let v = 2.0 * m.delta_sq + l2;
    let mid = m.mu - 0.5 * (a + b);
    lengthscale / v.sqrt() * (-(a - b) * (a - b) / (4.0 * l2)).exp() * (-mid * mid / v).exp()
}

/// `int p(x) k(x, a) khat(x, b) dx`, the SE-times-correction integral.
fn gaussian_term2(lengthscale: f64, m: &GaussianMeasure, a: f64, b: f64) -> f64 {
    let l2 = lengthscale * lengthscale;
    let v = l2 + m.delta_sq;
    let big_m = 1.0 / l2 + 1.0 / v;
    let center = (m.mu / v + a / l2) / big_m;
    let offset = a * a / l2 + m.mu * m.mu / v - center * center * big_m;
    let prefactor = lengthscale * (l2 + 2.0 * m.delta_sq).sqrt() / v;
    let db = b - m.mu;
    let dc = center - m.mu;
    prefactor / (m.delta_sq * big_m + 1.0).sqrt()
        * (-0.5 * offset).exp()
        * (-db * db / (2.0 * v)).exp()
        * (-dc * dc / (2.0 * (m.delta_sq + 1.0 / big_m))).exp()
}

/// `int p(x) khat(x, a) khat(x, b) dx`, the correction-squared integral.
fn gaussian_term4(lengthscale: f64, m: &GaussianMeasure, a: f64, b: f64) -> f64 {
    let l2 = lengthscale * lengthscale;
    let v = l2 + m.delta_sq;
    let da = a - m.mu;
    let db = b - m.mu;
    l2 * (l2 + 2.0 * m.delta_sq) * v.sqrt() / (v * v * (l2 + 3.0 * m.delta_sq).sqrt())
        * (-(da * da + db * db) / (2.0 * v)).exp()
}

/// Empirical-measure cross matrix: `sum_i w_i k~(xi, a_i) k~(xi, a_i)^T`
/// over the atoms, for any constrained kernel evaluation.
pub fn sobol_cross_matrix_empirical<K: Fn(f64, f64) -> f64>(
    constrained: K,
    m: &EmpiricalMeasure,
    xi: &[f64],
) -> DMatrix<f64> {
    let n = xi.len();
    // Columns of `v` are k~(xi, a_i) per atom.
    let mut c = DMatrix::zeros(n, n);
    for (&atom, &weight) in m.locations().iter().zip(m.weights()) {
        let column: Vec<f64> = xi.iter().map(|&x| constrained(x, atom)).collect();
        for p in 0..n {
            for q in p..n {
                let add = weight * column[p] * column[q];
                c[(p, q)] += add;
                if p != q {
                    c[(q, p)] += add;
                }
            }
        }
    }
    c
}

/// Categorical cross matrix: exact expectation over levels,
/// `C[p, q] = sum_i w_i B[i, idx_p] B[i, idx_q]`.
pub fn sobol_cross_matrix_categorical(
    b: &DMatrix<f64>,
    m: &CategoricalMeasure,
    level_indices: &[f64],
) -> Result<DMatrix<f64>> {
    if b.nrows() != m.n_levels() {
        return Err(OakError::Shape(format!(
            "level matrix has {} rows but measure has {} levels",
            b.nrows(),
            m.n_levels()
        )));
    }
    let idx: Vec<usize> = level_indices
        .iter()
        .map(|&v| crate::kernels::level_index(v, b.nrows()))
        .collect::<Result<_>>()?;
    let n = idx.len();
    let mut c = DMatrix::zeros(n, n);
    for (level, &weight) in m.probabilities().iter().enumerate() {
        for p in 0..n {
            for q in p..n {
                let add = weight * b[(level, idx[p])] * b[(level, idx[q])];
                c[(p, q)] += add;
                if p != q {
                    c[(q, p)] += add;
                }
            }
        }
    }
    Ok(c)
}

/// Cross matrix for one feature of a fitted model, dispatched on its measure.
/// Mixture measures fall back to Gauss-Hermite quadrature per component.
pub fn feature_cross_matrix(kernel: &ConstrainedKernel, xi: &[f64]) -> Result<DMatrix<f64>> {
    match kernel.measure() {
        Measure::Gaussian(m) => {
            let lengthscale = kernel
                .lengthscale()
                .ok_or_else(|| OakError::Invalid("Gaussian measure needs an SE kernel".into()))?;
            Ok(sobol_cross_matrix_gaussian(lengthscale, m, xi))
        }
        Measure::Empirical(m) => Ok(sobol_cross_matrix_empirical(
            |x, y| kernel.eval(x, y).expect("finite inputs"),
            m,
            xi,
        )),
        Measure::Categorical(m) => {
            let b = kernel.level_matrix().ok_or_else(|| {
                OakError::Invalid("categorical kernel lacks its level matrix".into())
            })?;
            sobol_cross_matrix_categorical(b, m, xi)
        }
        Measure::Mixture(m) => {
            let rule = GaussHermite::new(MIXTURE_QUADRATURE_NODES)?;
            let n = xi.len();
            let mut c = DMatrix::zeros(n, n);
            let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
            for component in m.components() {
                let scale = (2.0 * component.variance).sqrt();
                for (&node, &weight) in rule.nodes().iter().zip(rule.weights()) {
                    let x = component.mean + scale * node;
                    let column: Vec<f64> = xi
                        .iter()
                        .map(|&point| kernel.eval(x, point))
                        .collect::<Result<_>>()?;
                    let w = component.weight * weight * inv_sqrt_pi;
                    for p in 0..n {
                        for q in p..n {
                            let add = w * column[p] * column[q];
                            c[(p, q)] += add;
                            if p != q {
                                c[(q, p)] += add;
                            }
                        }
                    }
                }
            }
            Ok(c)
        }
    }
}

fn clamp_index(value: f64, roundoff_scale: f64) -> Result<f64> {
    let tolerance = NEGATIVE_INDEX_TOLERANCE.max(roundoff_scale);
    if value < -tolerance {
        return Err(OakError::Numerical(format!(
            "Sobol index {value} is negative beyond tolerance {tolerance}; \
             cross matrices are inconsistent"
        )));
    }
    Ok(value.max(0.0))
}

fn quadratic_form(
    cross: &[DMatrix<f64>],
    subset: &[usize],
    sigma_sq: f64,
    alpha: &DVector<f64>,
) -> Result<f64> {
    if sigma_sq == 0.0 {
        return Ok(0.0);
    }
    let n = alpha.len();
    let mut product = DMatrix::from_element(n, n, 1.0);
    for &f in subset {
        product.component_mul_assign(&cross[f]);
    }
    let value = sigma_sq * sigma_sq * alpha.dot(&(&product * alpha));
    // The product of PSD cross matrices is PSD, so a true index is
    // nonnegative. The computed entries carry absolute rounding at the scale
    // of the closed-form terms before cancellation (order one for unit
    // base kernels; near-dead features cancel to zero entirely), which the
    // quadratic form amplifies by |alpha|^2. Allow that much below zero and
    // no more; a genuinely broken cross matrix lands orders of magnitude
    // beyond it.
    let roundoff = f64::EPSILON
        * 1024.0
        * n as f64
        * sigma_sq
        * sigma_sq
        * alpha.norm_squared()
        * product.diagonal().amax().max(1.0);
    clamp_index(value, roundoff)
}

/// Sobol index of one component:
/// `R_u = sigma_sq_|u|^2 alpha^T (elementwise-prod_{i in u} C_i) alpha`.
pub fn sobol_index(model: &FittedModel, subset: &[usize]) -> Result<f64> {
    let subset = normalize_subset(subset, model.n_features(), model.max_order())?;
    let sigma_sq = model.hyperparams().order_variances[subset.len()];
    if sigma_sq == 0.0 {
        return Ok(0.0);
    }
    let n = model.n_train();
    let mut product = DMatrix::from_element(n, n, 1.0);
    for &f in &subset {
        let cross = feature_cross_matrix(&model.kernels()[f], &model.transformed_inputs()[f])?;
        product.component_mul_assign(&cross);
    }
    // Identity map over the already-multiplied product.
    quadratic_form(
        std::slice::from_ref(&product),
        &[0],
        sigma_sq,
        model.weights(),
    )
}

/// All subsets of `0..n_features` with `1 <= |u| <= max_order`, ordered by
/// size then lexicographically. Refuses to enumerate more than `cap`.
pub fn enumerate_subsets(
    n_features: usize,
    max_order: usize,
    cap: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut count: u128 = 0;
    for size in 1..=max_order.min(n_features) {
        count = count.saturating_add(binomial(n_features, size));
        if count > cap as u128 {
            return Err(OakError::Config(format!(
                "more than {cap} feature subsets up to order {max_order}; \
                 lower the interaction order or raise the subset cap"
            )));
        }
    }
    let mut subsets = Vec::with_capacity(count as usize);
    for size in 1..=max_order.min(n_features) {
        let mut current: Vec<usize> = (0..size).collect();
        'combinations: loop {
            subsets.push(current.clone());
            // Advance to the next combination in lexicographic order.
            let mut i = size;
            while i > 0 {
                i -= 1;
                if current[i] < i + n_features - size {
                    current[i] += 1;
                    for j in i + 1..size {
                        current[j] = current[j - 1] + 1;
                    }
                    continue 'combinations;
                }
            }
            break;
        }
    }
    Ok(subsets)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    result
}

/// Sobol indices for every subset up to the model's interaction order,
/// normalized, ranked and thresholded.
pub fn build_report(model: &FittedModel, threshold: f64) -> Result<SobolReport> {
    build_report_with_cap(model, threshold, 100_000)
}

pub fn build_report_with_cap(
    model: &FittedModel,
    threshold: f64,
    subset_cap: usize,
) -> Result<SobolReport> {
    if !(0.0..1.0).contains(&threshold) {
        return Err(OakError::Config(format!(
            "Sobol threshold must be in [0, 1), got {threshold}"
        )));
    }
    let d = model.n_features();
    let subsets = enumerate_subsets(d, model.max_order(), subset_cap)?;

    // Cross matrices depend only on the feature, not the subset; compute
    // each once and reuse it across subsets.
    let cross: Vec<DMatrix<f64>> = (0..d)
        .map(|f| feature_cross_matrix(&model.kernels()[f], &model.transformed_inputs()[f]))
        .collect::<Result<_>>()?;

    let order_variances = &model.hyperparams().order_variances;
    let mut entries: Vec<SobolEntry> = subsets
        .into_iter()
        .map(|subset| {
            let index = quadratic_form(
                &cross,
                &subset,
                order_variances[subset.len()],
                model.weights(),
            )?;
            Ok(SobolEntry {
                subset,
                index,
                normalized: 0.0,
                truncated: false,
            })
        })
        .collect::<Result<_>>()?;

    let total: f64 = entries.iter().map(|e| e.index).sum();
    let degenerate = total == 0.0;
    if !degenerate {
        for entry in &mut entries {
            entry.normalized = entry.index / total;
            entry.truncated = entry.normalized < threshold;
        }
    }

    let mut ranking: Vec<usize> = if degenerate {
        Vec::new()
    } else {
        (0..entries.len()).collect()
    };
    ranking.sort_by(|&a, &b| {
        entries[b]
            .normalized
            .total_cmp(&entries[a].normalized)
            .then_with(|| entries[a].subset.cmp(&entries[b].subset))
    });
    let mut cumulative = Vec::with_capacity(ranking.len());
    let mut acc = 0.0;
    for &i in &ranking {
        acc += entries[i].normalized;
        cumulative.push(acc);
    }

    Ok(SobolReport {
        entries,
        total,
        ranking,
        cumulative,
        threshold,
        degenerate,
    })
}

/// `(k, cumulative normalized index of the top-k entries)` for `k = 1..`.
pub fn cumulative_curve(report: &SobolReport) -> Vec<(usize, f64)> {
    report
        .cumulative
        .iter()
        .enumerate()
        .map(|(i, &c)| (i + 1, c))
        .collect()
}

impl SobolReport {
    /// Subsets of the top-`k` ranked entries.
    pub fn top_subsets(&self, k: usize) -> Vec<Vec<usize>> {
        self.ranking
            .iter()
            .take(k)
            .map(|&i| self.entries[i].subset.clone())
            .collect()
    }

    /// Entries at or above the threshold, in ranking order.
    pub fn retained_subsets(&self) -> Vec<Vec<usize>> {
        self.ranking
            .iter()
            .filter(|&&i| !self.entries[i].truncated)
            .map(|&i| self.entries[i].subset.clone())
            .collect()
    }
}
