//! Gauss-Hermite quadrature.
//!
//! Nodes and weights are obtained with the Golub-Welsch algorithm: the nodes
//! are the eigenvalues of the symmetric tridiagonal Jacobi matrix of the
//! Hermite recurrence and the weights follow from the first components of its
//! eigenvectors. The physicists' convention is used, so
//! `sum_i w_i f(t_i) ~ int exp(-t^2) f(t) dt`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{OakError, Result};
use crate::measures::MixtureMeasure;

#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Build an `n`-node rule. Exact for polynomials of degree `2n - 1`
    /// against the weight `exp(-t^2)`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(OakError::Invalid(
                "quadrature rule needs at least one node".into(),
            ));
        }
        let mut jacobi = DMatrix::zeros(n, n);
        for k in 0..n - 1 {
            let beta = ((k as f64 + 1.0) / 2.0).sqrt();
            jacobi[(k, k + 1)] = beta;
            jacobi[(k + 1, k)] = beta;
        }
        let eigen = SymmetricEigen::new(jacobi);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eigen.eigenvalues[i];
                let v0 = eigen.eigenvectors[(0, i)];
                (node, sqrt_pi * v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Expectation of `f` under `N(mu, var)`.
    pub fn expect_gaussian<F: FnMut(f64) -> f64>(&self, mu: f64, var: f64, mut f: F) -> f64 {
        let scale = (2.0 * var).sqrt();
        let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mu + scale * t))
            .sum::<f64>()
            * inv_sqrt_pi
    }

    /// Expectation of `f` under a Gaussian mixture, one rule pass per component.
    pub fn expect_mixture<F: FnMut(f64) -> f64>(&self, mixture: &MixtureMeasure, mut f: F) -> f64 {
        mixture
            .components()
            .iter()
            .map(|c| c.weight * self.expect_gaussian(c.mean, c.variance, &mut f))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrates_monomials_exactly() {
        let rule = GaussHermite::new(8).unwrap();
        // E[z^k] for z ~ N(0, 1): 0, 1, 0, 3, 0, 15 for k = 1..6.
        let moments = [0.0, 1.0, 0.0, 3.0, 0.0, 15.0];
        for (k, want) in moments.iter().enumerate() {
            let got = rule.expect_gaussian(0.0, 1.0, |z| z.powi(k as i32 + 1));
            assert_relative_eq!(got, *want, epsilon = 1e-12);
        }
    }

    #[test]
    fn shifted_scaled_gaussian_moments() {
        let rule = GaussHermite::new(32).unwrap();
        let (mu, var) = (-1.3, 0.49);
        assert_relative_eq!(rule.expect_gaussian(mu, var, |x| x), mu, epsilon = 1e-12);
        assert_relative_eq!(
            rule.expect_gaussian(mu, var, |x| (x - mu) * (x - mu)),
            var,
            epsilon = 1e-12
        );
    }

    #[test]
    fn weights_sum_to_total_mass() {
        for n in [1, 2, 16, 64, 128] {
            let rule = GaussHermite::new(n).unwrap();
            let total: f64 = rule.weights().iter().sum();
            assert_relative_eq!(total, std::f64::consts::PI.sqrt(), epsilon = 1e-10);
        }
    }

    #[test]
    fn rejects_empty_rule() {
        assert!(GaussHermite::new(0).is_err());
    }
}
