//! Structural properties of the assembled additive gram over mixed feature
//! kinds: positive semidefiniteness, symmetry, and diagonal consistency.

use nalgebra::SymmetricEigen;
use oak::kernels::compose::{oak_diag, oak_gram, OakHyperparams};
use oak::kernels::{BaseKernel, CategoricalKernel, ConstrainedKernel, SeKernel};
use oak::measures::{
    CategoricalMeasure, EmpiricalMeasure, GaussianMeasure, Measure, MixtureMeasure,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mixed_kernels(rng: &mut ChaCha8Rng, d: usize) -> Vec<ConstrainedKernel> {
    (0..d)
        .map(|f| match f % 4 {
            0 => ConstrainedKernel::new(
                BaseKernel::Se(SeKernel::new(1.0).unwrap()),
                Measure::Gaussian(
                    GaussianMeasure::new(rng.random_range(-0.5..0.5), rng.random_range(0.5..1.5))
                        .unwrap(),
                ),
            )
            .unwrap(),
            1 => ConstrainedKernel::new(
                BaseKernel::Se(SeKernel::new(1.0).unwrap()),
                Measure::Mixture(
                    MixtureMeasure::new(vec![
                        (0.4, rng.random_range(-1.0..0.0), rng.random_range(0.3..1.0)),
                        (0.6, rng.random_range(0.0..1.0), rng.random_range(0.3..1.0)),
                    ])
                    .unwrap(),
                ),
            )
            .unwrap(),
            2 => {
                let sample: Vec<f64> = (0..30).map(|_| rng.random_range(-2.0..2.0)).collect();
                ConstrainedKernel::new(
                    BaseKernel::Se(SeKernel::new(1.0).unwrap()),
                    Measure::Empirical(EmpiricalMeasure::from_sample(&sample).unwrap()),
                )
                .unwrap()
            }
            _ => ConstrainedKernel::new(
                BaseKernel::Categorical(CategoricalKernel::identity(3).unwrap()),
                Measure::Categorical(CategoricalMeasure::new(vec![0.5, 0.3, 0.2]).unwrap()),
            )
            .unwrap(),
        })
        .collect()
}

fn random_inputs(rng: &mut ChaCha8Rng, kernels: &[ConstrainedKernel], n: usize) -> Vec<Vec<f64>> {
    kernels
        .iter()
        .map(|k| {
            (0..n)
                .map(|_| {
                    if k.is_categorical() {
                        f64::from(rng.random_range(0..3u8))
                    } else {
                        rng.random_range(-2.5..2.5)
                    }
                })
                .collect()
        })
        .collect()
}

fn random_hp(
    rng: &mut ChaCha8Rng,
    kernels: &[ConstrainedKernel],
    max_order: usize,
) -> OakHyperparams {
    OakHyperparams::new(
        kernels
            .iter()
            .map(|k| (!k.is_categorical()).then(|| rng.random_range(0.5..2.0)))
            .collect(),
        (0..=max_order)
            .map(|_| rng.random_range(0.0..1.5))
            .collect(),
        rng.random_range(0.01..0.5),
    )
    .unwrap()
}

#[test]
fn additive_gram_is_positive_semidefinite() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..20 {
        let d = rng.random_range(1..=4usize);
        let max_order = rng.random_range(1..=d);
        let n = rng.random_range(4..=64usize);
        let kernels = mixed_kernels(&mut rng, d);
        let hp = random_hp(&mut rng, &kernels, max_order);
        let x = random_inputs(&mut rng, &kernels, n);
        let gram = oak_gram(&kernels, &hp, &x, None).unwrap();
        let symmetrized = 0.5 * (&gram + gram.transpose());
        let trace = symmetrized.trace();
        let min_eig = SymmetricEigen::new(symmetrized).eigenvalues.min();
        assert!(
            min_eig >= -1e-8 * trace.max(1.0),
            "trial {trial}: min eigenvalue {min_eig} (trace {trace})"
        );
    }
}

#[test]
fn every_constrained_kernel_gram_is_psd() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    let kernels = mixed_kernels(&mut rng, 4);
    for kernel in &kernels {
        for n in [3usize, 17, 64] {
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    if kernel.is_categorical() {
                        f64::from(rng.random_range(0..3u8))
                    } else {
                        rng.random_range(-3.0..3.0)
                    }
                })
                .collect();
            let gram = kernel.gram(&x, &x).unwrap();
            let symmetrized = 0.5 * (&gram + gram.transpose());
            let min_eig = SymmetricEigen::new(symmetrized).eigenvalues.min();
            assert!(min_eig >= -1e-9, "min eigenvalue {min_eig} at n = {n}");
        }
    }
}

#[test]
fn gram_is_symmetric_and_diag_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    for _ in 0..10 {
        let d = rng.random_range(1..=4usize);
        let max_order = rng.random_range(1..=d);
        let kernels = mixed_kernels(&mut rng, d);
        let hp = random_hp(&mut rng, &kernels, max_order);
        let x = random_inputs(&mut rng, &kernels, 12);
        let gram = oak_gram(&kernels, &hp, &x, None).unwrap();
        for i in 0..12 {
            for j in 0..i {
                assert!((gram[(i, j)] - gram[(j, i)]).abs() <= 1e-12 * gram[(i, j)].abs().max(1.0));
            }
        }
        let diag = oak_diag(&kernels, &hp, &x).unwrap();
        for (i, d) in diag.iter().enumerate() {
            assert!((gram[(i, i)] - d).abs() <= 1e-10 * d.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Cross grams agree with the square gram on shared points.
    #[test]
    fn cross_gram_consistent_with_square_gram(
        seed in 0u64..1000,
        lengthscale in 0.4f64..2.5,
        sigma1 in 0.1f64..2.0,
        sigma2 in 0.0f64..1.5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kernels: Vec<ConstrainedKernel> = (0..2)
            .map(|_| {
                ConstrainedKernel::new(
                    BaseKernel::Se(SeKernel::new(1.0).unwrap()),
                    Measure::Gaussian(GaussianMeasure::standard()),
                )
                .unwrap()
            })
            .collect();
        let hp = OakHyperparams::new(
            vec![Some(lengthscale), Some(lengthscale * 0.7 + 0.2)],
            vec![0.3, sigma1, sigma2],
            0.1,
        )
        .unwrap();
        let x: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..8).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let square = oak_gram(&kernels, &hp, &x, None).unwrap();
        let cross = oak_gram(&kernels, &hp, &x, Some(&x)).unwrap();
        for (a, b) in square.iter().zip(cross.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }
}
