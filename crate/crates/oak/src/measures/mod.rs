//! Per-feature input measures.
//!
//! Each feature carries a probability measure that the orthogonality
//! constraint of its kernel integrates against. Continuous features are
//! either mapped toward a standard Gaussian with a normalizing flow
//! ([`flow`]), declared Gaussian with moments taken from the sample, or
//! handled through the empirical measure of the observed values.
//! Categorical features use a discrete measure over their levels.

pub mod flow;

use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Gaussian measure `N(mu, delta_sq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMeasure {
    pub mu: f64,
    pub delta_sq: f64,
}

impl GaussianMeasure {
    pub fn new(mu: f64, delta_sq: f64) -> Result<Self> {
        if !mu.is_finite() || !delta_sq.is_finite() {
            return Err(OakError::Invalid("Gaussian measure must be finite".into()));
        }
        if delta_sq <= 0.0 {
            return Err(OakError::Invalid(format!(
                "Gaussian measure variance must be positive, got {delta_sq}"
            )));
        }
        Ok(Self { mu, delta_sq })
    }

    pub fn standard() -> Self {
        Self {
            mu: 0.0,
            delta_sq: 1.0,
        }
    }

    /// Measure with the sample mean and (population) variance of `values`.
    /// Used for features declared Gaussian, where no flow is fitted.
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(OakError::Invalid(
                "cannot estimate a Gaussian measure from an empty sample".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(OakError::Invalid(
                "sample for Gaussian measure contains non-finite values".into(),
            ));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(OakError::Invalid(
                "sample variance is zero; feature is constant".into(),
            ));
        }
        Self::new(mean, var)
    }
}

/// One component of a Gaussian mixture: weight, mean and variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Finite Gaussian mixture measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureMeasure {
    components: Vec<MixtureComponent>,
}

impl MixtureMeasure {
    /// `components` are `(weight, mean, variance)` triples. Weights must sum
    /// to one and variances must be positive.
    pub fn new(components: Vec<(f64, f64, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(OakError::Invalid(
                "mixture measure needs at least one component".into(),
            ));
        }
        let mut sum = 0.0;
        for &(w, m, v) in &components {
            if !(w.is_finite() && m.is_finite() && v.is_finite()) {
                return Err(OakError::Invalid("mixture component must be finite".into()));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(OakError::Invalid(format!(
                    "mixture weight {w} outside [0, 1]"
                )));
            }
            if v <= 0.0 {
                return Err(OakError::Invalid(format!(
                    "mixture component variance must be positive, got {v}"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(OakError::Invalid(format!(
                "mixture weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self {
            components: components
                .into_iter()
                .map(|(weight, mean, variance)| MixtureComponent {
                    weight,
                    mean,
                    variance,
                })
                .collect(),
        })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }
}

/// Weighted atoms `sum_i w_i 1{x = x_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(locations: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if locations.is_empty() {
            return Err(OakError::Invalid(
                "empirical measure needs at least one atom".into(),
            ));
        }
        if locations.len() != weights.len() {
            return Err(OakError::Shape(format!(
                "{} locations vs {} weights",
                locations.len(),
                weights.len()
            )));
        }
        if locations.iter().any(|x| !x.is_finite()) {
            return Err(OakError::Invalid(
                "empirical measure locations must be finite".into(),
            ));
        }
        validate_probability_vector(&weights)?;
        Ok(Self { locations, weights })
    }

    /// Empirical measure of a sample: distinct values as atoms, weighted by
    /// multiplicity.
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(OakError::Invalid(
                "cannot build an empirical measure from an empty sample".into(),
            ));
        }
        let mut sorted: Vec<f64> = values.to_vec();
        if sorted.iter().any(|v| !v.is_finite()) {
            return Err(OakError::Invalid(
                "sample for empirical measure contains non-finite values".into(),
            ));
        }
        sorted.sort_by(f64::total_cmp);
        let mut locations = Vec::new();
        let mut weights = Vec::new();
        let unit = 1.0 / values.len() as f64;
        for &v in &sorted {
            match locations.last() {
                Some(&last) if last == v => *weights.last_mut().unwrap() += unit,
                _ => {
                    locations.push(v);
                    weights.push(unit);
                }
            }
        }
        // Multiplicity counts are exact; renormalize away accumulation dust.
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self::new(locations, weights)
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// Probability vector over the levels of a categorical feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalMeasure {
    probabilities: Vec<f64>,
}

impl CategoricalMeasure {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.is_empty() {
            return Err(OakError::Invalid(
                "categorical measure needs at least one level".into(),
            ));
        }
        validate_probability_vector(&probabilities)?;
        Ok(Self { probabilities })
    }

    /// Level frequencies of an observed sample of level indices.
    pub fn from_level_counts(counts: &[usize]) -> Result<Self> {
        let total: usize = counts.iter().sum();
        if total == 0 {
            return Err(OakError::Invalid(
                "categorical measure needs at least one observation".into(),
            ));
        }
        Self::new(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn n_levels(&self) -> usize {
        self.probabilities.len()
    }
}

fn validate_probability_vector(weights: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for &w in weights {
        if !w.is_finite() || !(0.0..=1.0).contains(&w) {
            return Err(OakError::Invalid(format!("weight {w} outside [0, 1]")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(OakError::Invalid(format!(
            "weights sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// The measure attached to one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Measure {
    Gaussian(GaussianMeasure),
    Mixture(MixtureMeasure),
    Empirical(EmpiricalMeasure),
    Categorical(CategoricalMeasure),
}

/// Measure of a flow-transformed feature. The flow is fitted to pull the
/// sample toward a standard Gaussian, so the constrained kernel on the
/// transformed scale always integrates against `N(0, 1)`.
pub fn measure_of_transformed(values_after_flow: &[f64]) -> Result<GaussianMeasure> {
    if values_after_flow.is_empty() {
        return Err(OakError::Invalid(
            "no transformed values; flow was not applied".into(),
        ));
    }
    if values_after_flow.iter().any(|v| !v.is_finite()) {
        return Err(OakError::Invalid(
            "transformed values contain non-finite entries".into(),
        ));
    }
    Ok(GaussianMeasure::standard())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_measure_rejects_nonpositive_variance() {
        assert!(GaussianMeasure::new(0.0, 0.0).is_err());
        assert!(GaussianMeasure::new(0.0, -1.0).is_err());
        assert!(GaussianMeasure::new(0.0, 2.5).is_ok());
    }

    #[test]
    fn gaussian_from_sample_matches_moments() {
        let values = [1.0, 2.0, 3.0, 4.0];
        let m = GaussianMeasure::from_sample(&values).unwrap();
        assert!((m.mu - 2.5).abs() < 1e-15);
        assert!((m.delta_sq - 1.25).abs() < 1e-15);
    }

    #[test]
    fn mixture_weights_must_sum_to_one() {
        assert!(MixtureMeasure::new(vec![(0.5, 0.0, 1.0), (0.4, 1.0, 1.0)]).is_err());
        assert!(MixtureMeasure::new(vec![(0.5, 0.0, 1.0), (0.5, 1.0, 1.0)]).is_ok());
    }

    #[test]
    fn empirical_from_sample_merges_duplicates() {
        let m = EmpiricalMeasure::from_sample(&[2.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.locations(), &[1.0, 2.0, 3.0]);
        assert!((m.weights()[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn categorical_from_counts() {
        let m = CategoricalMeasure::from_level_counts(&[9, 1]).unwrap();
        assert_eq!(m.probabilities(), &[0.9, 0.1]);
        assert!(CategoricalMeasure::from_level_counts(&[0, 0]).is_err());
    }

    #[test]
    fn transformed_measure_is_standard_gaussian() {
        let m = measure_of_transformed(&[0.3, -1.2, 0.9]).unwrap();
        assert_eq!(m, GaussianMeasure::standard());
        assert!(measure_of_transformed(&[]).is_err());
        assert!(measure_of_transformed(&[f64::NAN]).is_err());
    }
}
