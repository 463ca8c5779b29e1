//! Exact GP regression with the orthogonal additive kernel.
//!
//! `fit` runs the whole pipeline: per-feature flows and measures, constrained
//! kernels, multi-restart quasi-Newton MAP estimation of the hyperparameters,
//! and the final Cholesky factorization. The resulting [`FittedModel`] is
//! immutable and exposes full predictions plus per-subset component
//! posteriors.

pub mod objective;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};
use crate::kernels::compose::{oak_diag, oak_gram, OakHyperparams};
use crate::kernels::{BaseKernel, CategoricalKernel, ConstrainedKernel, SeKernel};
use crate::measures::flow::{fit_flow, flow_forward, FlowParams};
use crate::measures::{
    measure_of_transformed, CategoricalMeasure, EmpiricalMeasure, GaussianMeasure, Measure,
};
use crate::opt::{self, OptimizeConfig};

pub use objective::{log_marginal_likelihood, map_objective};

/// Gamma prior on each order variance, parameterized by shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPrior {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && rate.is_finite()) || shape <= 0.0 || rate <= 0.0 {
            return Err(OakError::Invalid(format!(
                "Gamma prior needs positive shape and rate, got {shape}, {rate}"
            )));
        }
        Ok(Self { shape, rate })
    }
}

impl Default for GammaPrior {
    /// Weak shrinkage toward parsimonious models.
    fn default() -> Self {
        Self {
            shape: 1.0,
            rate: 0.2,
        }
    }
}

/// How one feature is handled by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureSpec {
    /// Continuous; fit a normalizing flow and use the standard Gaussian
    /// measure on the transformed scale.
    Flow,
    /// Continuous; Gaussian measure with sample moments, no flow.
    Gaussian,
    /// Continuous; empirical measure of the training values, no flow.
    Empirical,
    /// Categorical with level indices `0..n_levels`.
    Categorical { n_levels: usize },
}

#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Maximum interaction order; defaults to `min(D, 3)`.
    pub max_order: Option<usize>,
    pub restarts: usize,
    pub seed: u64,
    pub prior: GammaPrior,
    pub flow_layers: usize,
    /// Exact GP size cap; larger datasets are refused.
    pub n_cap: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_order: None,
            restarts: 5,
            seed: 0,
            prior: GammaPrior::default(),
            flow_layers: 1,
            n_cap: 4000,
            max_iters: 1000,
            grad_tol: 1e-6,
        }
    }
}

/// Outcome of one optimizer restart, in MAP-objective units (higher better).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub converged: bool,
}

/// An immutable fitted model: training data, fitted hyperparameters, the
/// Cholesky factor of `K + (noise + jitter) I` and the weight vector.
#[derive(Debug, Clone)]
pub struct FittedModel {
    x_raw: Vec<Vec<f64>>,
    x_transformed: Vec<Vec<f64>>,
    y: Vec<f64>,
    specs: Vec<FeatureSpec>,
    flows: Vec<Option<FlowParams>>,
    kernels: Vec<ConstrainedKernel>,
    hp: OakHyperparams,
    prior: GammaPrior,
    cholesky: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    objective: f64,
    restarts: Vec<RestartSummary>,
}

/// Fit the pipeline on raw feature columns. Deterministic given the seed.
pub fn fit(
    x_raw: &[Vec<f64>],
    y: &[f64],
    specs: &[FeatureSpec],
    config: &FitConfig,
) -> Result<FittedModel> {
    let d = x_raw.len();
    if d == 0 {
        return Err(OakError::Invalid("need at least one feature".into()));
    }
    if specs.len() != d {
        return Err(OakError::Shape(format!(
            "{} feature specs for {} feature columns",
            specs.len(),
            d
        )));
    }
    let n = y.len();
    if n < 4 {
        return Err(OakError::Invalid(format!("need at least 4 rows, got {n}")));
    }
    if n > config.n_cap {
        return Err(OakError::Config(format!(
            "{n} rows exceed the exact-GP cap of {}; subsample the data or raise the cap",
            config.n_cap
        )));
    }
    if x_raw.iter().any(|col| col.len() != n) {
        return Err(OakError::Shape(
            "feature columns and targets differ in length".into(),
        ));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OakError::Invalid(
            "targets contain non-finite values".into(),
        ));
    }
    for (f, col) in x_raw.iter().enumerate() {
        if col.iter().any(|v| !v.is_finite()) {
            return Err(OakError::Invalid(format!(
                "feature {f} contains non-finite values"
            )));
        }
    }
    let max_order = config.max_order.unwrap_or_else(|| d.min(3));
    if max_order == 0 || max_order > d {
        return Err(OakError::Config(format!(
            "interaction order {max_order} must be in [1, {d}]"
        )));
    }

    // Per-feature preprocessing: flows, measures, kernels.
    let flow_config = OptimizeConfig::default();
    let mut flows: Vec<Option<FlowParams>> = Vec::with_capacity(d);
    let mut x_transformed: Vec<Vec<f64>> = Vec::with_capacity(d);
    let mut kernels: Vec<ConstrainedKernel> = Vec::with_capacity(d);
    for (f, spec) in specs.iter().enumerate() {
        let column = &x_raw[f];
        match spec {
            FeatureSpec::Flow => {
                let flow = fit_flow(column, config.flow_layers, &flow_config)
                    .map_err(|e| OakError::Invalid(format!("feature {f}: {e}")))?;
                let transformed: Vec<f64> = column
                    .iter()
                    .map(|&v| flow_forward(&flow, v))
                    .collect::<Result<_>>()?;
                let measure = measure_of_transformed(&transformed)?;
                flows.push(Some(flow));
                x_transformed.push(transformed);
                kernels.push(ConstrainedKernel::new(
                    BaseKernel::Se(SeKernel::new(1.0)?),
                    Measure::Gaussian(measure),
                )?);
            }
            FeatureSpec::Gaussian => {
                let measure = GaussianMeasure::from_sample(column)
                    .map_err(|e| OakError::Invalid(format!("feature {f}: {e}")))?;
                flows.push(None);
                x_transformed.push(column.clone());
                kernels.push(ConstrainedKernel::new(
                    BaseKernel::Se(SeKernel::new(1.0)?),
                    Measure::Gaussian(measure),
                )?);
            }
            FeatureSpec::Empirical => {
                let measure = EmpiricalMeasure::from_sample(column)
                    .map_err(|e| OakError::Invalid(format!("feature {f}: {e}")))?;
                flows.push(None);
                x_transformed.push(column.clone());
                kernels.push(ConstrainedKernel::new(
                    BaseKernel::Se(SeKernel::new(1.0)?),
                    Measure::Empirical(measure),
                )?);
            }
            FeatureSpec::Categorical { n_levels } => {
                let mut counts = vec![0usize; *n_levels];
                for &v in column {
                    counts[crate::kernels::level_index(v, *n_levels)
                        .map_err(|e| OakError::Invalid(format!("feature {f}: {e}")))?] += 1;
                }
                let measure = CategoricalMeasure::from_level_counts(&counts)?;
                flows.push(None);
                x_transformed.push(column.clone());
                kernels.push(ConstrainedKernel::new(
                    BaseKernel::Categorical(CategoricalKernel::identity(*n_levels)?),
                    Measure::Categorical(measure),
                )?);
            }
        }
    }

    // Initialization: unit lengthscales on the (transformed) features, target
    // variance split across the orders, a tenth of it as noise. The constant
    // kernel also has to carry the target mean, so its start includes it.
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let y_var = y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / n as f64;
    let var_scale = if y_var > 0.0 { y_var } else { 1e-8 };
    let mut order_variances = vec![var_scale / (max_order as f64 + 1.0); max_order + 1];
    order_variances[0] += y_mean * y_mean;
    let init_hp = OakHyperparams::new(
        specs
            .iter()
            .map(|s| (!matches!(s, FeatureSpec::Categorical { .. })).then_some(1.0))
            .collect(),
        order_variances,
        0.1 * var_scale,
    )?;
    let layout = objective::ParamLayout::for_hyperparams(&init_hp);

    let opt_config = OptimizeConfig {
        max_iters: config.max_iters,
        grad_tol: config.grad_tol,
        ..OptimizeConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let lengthscale_jitter = Normal::new(0.0, 0.3).expect("valid scale");

    let mut restarts = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut first_error: Option<OakError> = None;
    for index in 0..config.restarts.max(1) {
        let mut hp_start = init_hp.clone();
        if index > 0 {
            for l in hp_start.lengthscales.iter_mut().flatten() {
                *l *= f64::exp(lengthscale_jitter.sample(&mut rng));
            }
        }
        let theta0 = layout.pack(&hp_start);
        let negated = |theta: &[f64]| -> Result<(f64, Vec<f64>)> {
            let hp = layout.unpack(theta)?;
            let (value, grad) = map_objective(&kernels, &hp, &x_transformed, y, &config.prior)?;
            Ok((-value, grad.into_iter().map(|g| -g).collect()))
        };
        let initial_objective = match map_objective(
            &kernels,
            &layout.unpack(&theta0)?,
            &x_transformed,
            y,
            &config.prior,
        ) {
            Ok((v, _)) => v,
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        let outcome = match opt::minimize(negated, &theta0, &opt_config) {
            Ok(o) => o,
            Err(e) => {
                first_error.get_or_insert(e);
                continue;
            }
        };
        let final_objective = -outcome.value;
        restarts.push(RestartSummary {
            index,
            initial_objective,
            final_objective,
            converged: outcome.converged,
        });
        if best
            .as_ref()
            .is_none_or(|(value, _)| final_objective > *value)
        {
            best = Some((final_objective, outcome.x));
        }
    }
    let Some((objective_value, best_theta)) = best else {
        return Err(
            first_error.unwrap_or_else(|| OakError::Numerical("all restarts failed".into()))
        );
    };

    let hp = layout.unpack(&best_theta)?;
    for (f, kernel) in kernels.iter_mut().enumerate() {
        if let Some(l) = hp.lengthscales[f] {
            kernel.set_lengthscale(l)?;
        }
    }
    let factor = objective::factorize(&kernels, &hp, &x_transformed, false)?;
    let alpha = factor.cholesky.solve(&DVector::from_column_slice(y));

    let model = FittedModel {
        x_raw: x_raw.to_vec(),
        x_transformed,
        y: y.to_vec(),
        specs: specs.to_vec(),
        flows,
        kernels,
        hp,
        prior: config.prior,
        cholesky: factor.cholesky,
        alpha,
        jitter: factor.jitter,
        objective: objective_value,
        restarts,
    };
    model.verify_invariants()?;
    Ok(model)
}

impl FittedModel {
    pub fn n_train(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x_raw.len()
    }

    pub fn max_order(&self) -> usize {
        self.hp.max_order()
    }

    pub fn hyperparams(&self) -> &OakHyperparams {
        &self.hp
    }

    pub fn kernels(&self) -> &[ConstrainedKernel] {
        &self.kernels
    }

    pub fn flows(&self) -> &[Option<FlowParams>] {
        &self.flows
    }

    pub fn feature_specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn prior(&self) -> &GammaPrior {
        &self.prior
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn raw_inputs(&self) -> &[Vec<f64>] {
        &self.x_raw
    }

    pub fn transformed_inputs(&self) -> &[Vec<f64>] {
        &self.x_transformed
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Best MAP objective across restarts.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    pub fn restart_summaries(&self) -> &[RestartSummary] {
        &self.restarts
    }

    /// The constant component's prediction: `sigma_sq_0 * sum(alpha)`.
    pub fn constant_component(&self) -> f64 {
        self.hp.order_variances[0] * self.alpha.sum()
    }

    /// Apply the per-feature flows to raw feature columns.
    pub fn transform(&self, x_raw: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if x_raw.len() != self.n_features() {
            return Err(OakError::Shape(format!(
                "model has {} features, data has {}",
                self.n_features(),
                x_raw.len()
            )));
        }
        let n = x_raw.first().map_or(0, Vec::len);
        if x_raw.iter().any(|col| col.len() != n) {
            return Err(OakError::Shape(
                "feature columns have unequal lengths".into(),
            ));
        }
        x_raw
            .iter()
            .zip(&self.flows)
            .map(|(col, flow)| match flow {
                Some(flow) => col.iter().map(|&v| flow_forward(flow, v)).collect(),
                None => {
                    if col.iter().any(|v| !v.is_finite()) {
                        return Err(OakError::Invalid("inputs contain non-finite values".into()));
                    }
                    Ok(col.clone())
                }
            })
            .collect()
    }

    /// Predictive mean and variance at raw inputs. With `include_noise`, the
    /// observation noise variance is added to the returned variances.
    pub fn predict(&self, x_raw: &[Vec<f64>], include_noise: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.transform(x_raw)?;
        self.predict_transformed(&z, include_noise)
    }

    /// As [`predict`](Self::predict) but on already-transformed inputs.
    pub fn predict_transformed(
        &self,
        z: &[Vec<f64>],
        include_noise: bool,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let k_star = oak_gram(&self.kernels, &self.hp, z, Some(&self.x_transformed))?;
        let mean = &k_star * &self.alpha;
        let prior_diag = oak_diag(&self.kernels, &self.hp, z)?;
        let solved = self.cholesky.solve(&k_star.transpose());
        let noise = if include_noise {
            self.hp.noise_variance
        } else {
            0.0
        };
        let variances = prior_diag
            .iter()
            .enumerate()
            .map(|(p, prior)| {
                let explained = k_star
                    .row(p)
                    .transpose()
                    .dot(&solved.column(p).into_owned());
                let var = prior - explained;
                debug_assert!(var > -1e-8 * (1.0 + prior.abs()));
                var.max(0.0) + noise
            })
            .collect();
        Ok((mean.iter().copied().collect(), variances))
    }

    /// Predictive mean only, on transformed inputs.
    pub fn predict_mean_transformed(&self, z: &[Vec<f64>]) -> Result<Vec<f64>> {
        let k_star = oak_gram(&self.kernels, &self.hp, z, Some(&self.x_transformed))?;
        Ok((&k_star * &self.alpha).iter().copied().collect())
    }

    /// Cross grams `k~_i(z_i, X_i)` for the features in `subset`, multiplied
    /// elementwise.
    fn subset_cross_gram(&self, subset: &[usize], z: &[Vec<f64>]) -> Result<DMatrix<f64>> {
        let mut product: Option<DMatrix<f64>> = None;
        for &f in subset {
            let gram = self.kernels[f].gram(&z[f], &self.x_transformed[f])?;
            product = Some(match product {
                Some(p) => p.component_mul(&gram),
                None => gram,
            });
        }
        Ok(product.expect("subset is non-empty"))
    }

    /// Posterior mean of the component for `subset`, at raw inputs:
    /// `sigma_sq_|u| (elementwise-prod_i k~_i(x_i, X_i)) alpha`.
    pub fn component_posterior_mean(
        &self,
        subset: &[usize],
        x_raw: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let z = self.transform(x_raw)?;
        self.component_posterior_mean_transformed(subset, &z)
    }

    /// As [`component_posterior_mean`](Self::component_posterior_mean) on
    /// already-transformed inputs.
    pub fn component_posterior_mean_transformed(
        &self,
        subset: &[usize],
        z: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let subset = normalize_subset(subset, self.n_features(), self.max_order())?;
        let sigma_sq = self.hp.order_variances[subset.len()];
        let n = z.first().map_or(0, Vec::len);
        if sigma_sq == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let cross = self.subset_cross_gram(&subset, z)?;
        Ok((sigma_sq * cross * &self.alpha).iter().copied().collect())
    }

    /// Posterior variance of the component for `subset` at raw inputs.
    pub fn component_posterior_variance(
        &self,
        subset: &[usize],
        x_raw: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let z = self.transform(x_raw)?;
        self.component_posterior_variance_transformed(subset, &z)
    }

    pub fn component_posterior_variance_transformed(
        &self,
        subset: &[usize],
        z: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let subset = normalize_subset(subset, self.n_features(), self.max_order())?;
        let sigma_sq = self.hp.order_variances[subset.len()];
        let n = z.first().map_or(0, Vec::len);
        if sigma_sq == 0.0 {
            return Ok(vec![0.0; n]);
        }
        let mut prior = vec![1.0; n];
        for &f in &subset {
            for (p, value) in self.kernels[f].diag(&z[f])?.into_iter().enumerate() {
                prior[p] *= value;
            }
        }
        let cross = self.subset_cross_gram(&subset, z)?;
        let solved = self.cholesky.solve(&cross.transpose());
        Ok((0..n)
            .map(|p| {
                let explained = cross.row(p).transpose().dot(&solved.column(p).into_owned());
                let var = sigma_sq * prior[p] - sigma_sq * sigma_sq * explained;
                debug_assert!(var > -1e-8 * (1.0 + sigma_sq * prior[p].abs()));
                var.max(0.0)
            })
            .collect())
    }

    /// Constant component plus the selected components' posterior means.
    pub fn truncated_predict(
        &self,
        subsets: &[Vec<usize>],
        x_raw: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let z = self.transform(x_raw)?;
        let mut seen = std::collections::BTreeSet::new();
        for subset in subsets {
            let normalized = normalize_subset(subset, self.n_features(), self.max_order())?;
            if !seen.insert(normalized) {
                return Err(OakError::Invalid(format!(
                    "duplicate subset {subset:?} in truncated prediction"
                )));
            }
        }
        let n = z.first().map_or(0, Vec::len);
        let mut total = vec![self.constant_component(); n];
        for subset in subsets {
            for (t, m) in total
                .iter_mut()
                .zip(self.component_posterior_mean_transformed(subset, &z)?)
            {
                *t += m;
            }
        }
        Ok(total)
    }

    /// Check the factorization invariants: `L L^T` reproduces the factorized
    /// matrix and the weights solve it against the targets.
    pub fn verify_invariants(&self) -> Result<()> {
        let n = self.n_train();
        let signal = oak_gram(&self.kernels, &self.hp, &self.x_transformed, None)?;
        let mut a = signal;
        for i in 0..n {
            a[(i, i)] += self.hp.noise_variance + self.jitter;
        }
        let l = self.cholesky.l_dirty();
        let mut recon_err: f64 = 0.0;
        let mut a_norm: f64 = 0.0;
        for i in 0..n {
            for j in 0..=i {
                let mut v = 0.0;
                for k in 0..=j {
                    v += l[(i, k)] * l[(j, k)];
                }
                recon_err = recon_err.max((v - a[(i, j)]).abs());
                a_norm = a_norm.max(a[(i, j)].abs());
            }
        }
        if recon_err > 1e-10 * a_norm.max(1.0) {
            return Err(OakError::Numerical(format!(
                "Cholesky factor does not reproduce the gram: error {recon_err}"
            )));
        }
        let y_vec = DVector::from_column_slice(&self.y);
        let residual = &a * &self.alpha - &y_vec;
        let y_norm = y_vec.norm().max(1.0);
        if residual.norm() > 1e-8 * y_norm {
            return Err(OakError::Numerical(format!(
                "weights do not solve the system: relative residual {}",
                residual.norm() / y_norm
            )));
        }
        Ok(())
    }

    /// Build a model from persisted or hand-assembled [`ModelParts`]:
    /// transform the raw inputs through the flows, rebuild the kernels,
    /// refactorize the gram and re-verify the model invariants.
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let ModelParts {
            x_raw,
            y,
            specs,
            flows,
            measures,
            categorical_kernels,
            hyperparams: hp,
            prior,
            objective,
            restarts,
        } = parts;
        let d = x_raw.len();
        if d == 0 || y.is_empty() {
            return Err(OakError::Invalid("model has no data".into()));
        }
        if specs.len() != d || flows.len() != d || measures.len() != d {
            return Err(OakError::Shape(
                "per-feature lists disagree in length".into(),
            ));
        }
        let mut kernels = Vec::with_capacity(d);
        for (f, measure) in measures.into_iter().enumerate() {
            let base = match (&specs[f], &categorical_kernels[f]) {
                (FeatureSpec::Categorical { .. }, Some(k)) => BaseKernel::Categorical(k.clone()),
                (FeatureSpec::Categorical { .. }, None) => {
                    return Err(OakError::Invalid(format!(
                        "feature {f}: categorical feature lacks its kernel"
                    )))
                }
                _ => BaseKernel::Se(SeKernel::new(hp.lengthscales[f].ok_or_else(|| {
                    OakError::Invalid(format!("feature {f}: missing lengthscale"))
                })?)?),
            };
            kernels.push(ConstrainedKernel::new(base, measure)?);
        }
        let mut x_transformed = Vec::with_capacity(d);
        for (col, flow) in x_raw.iter().zip(&flows) {
            match flow {
                Some(flow) => x_transformed.push(
                    col.iter()
                        .map(|&v| flow_forward(flow, v))
                        .collect::<Result<Vec<f64>>>()?,
                ),
                None => x_transformed.push(col.clone()),
            }
        }
        let factor = objective::factorize(&kernels, &hp, &x_transformed, false)?;
        let alpha = factor.cholesky.solve(&DVector::from_column_slice(&y));
        let model = Self {
            x_raw,
            x_transformed,
            y,
            specs,
            flows,
            kernels,
            hp,
            prior,
            cholesky: factor.cholesky,
            alpha,
            jitter: factor.jitter,
            objective,
            restarts,
        };
        model.verify_invariants()?;
        Ok(model)
    }

    /// The persistable parts of this model.
    pub fn to_parts(&self) -> ModelParts {
        ModelParts {
            x_raw: self.x_raw.clone(),
            y: self.y.clone(),
            specs: self.specs.clone(),
            flows: self.flows.clone(),
            measures: self.kernels.iter().map(|k| k.measure().clone()).collect(),
            categorical_kernels: self
                .kernels
                .iter()
                .map(|k| match k.base() {
                    BaseKernel::Categorical(c) => Some(c.clone()),
                    BaseKernel::Se(_) => None,
                })
                .collect(),
            hyperparams: self.hp.clone(),
            prior: self.prior,
            objective: self.objective,
            restarts: self.restarts.clone(),
        }
    }
}

/// Everything needed to rebuild a [`FittedModel`], exactly what persistence
/// stores.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub x_raw: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub specs: Vec<FeatureSpec>,
    pub flows: Vec<Option<FlowParams>>,
    pub measures: Vec<Measure>,
    pub categorical_kernels: Vec<Option<CategoricalKernel>>,
    pub hyperparams: OakHyperparams,
    pub prior: GammaPrior,
    pub objective: f64,
    pub restarts: Vec<RestartSummary>,
}

/// Sorted, deduplicated, validated feature subset.
pub fn normalize_subset(
    subset: &[usize],
    n_features: usize,
    max_order: usize,
) -> Result<Vec<usize>> {
    if subset.is_empty() {
        return Err(OakError::Invalid("subset must not be empty".into()));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != subset.len() {
        return Err(OakError::Invalid(format!(
            "subset {subset:?} has repeated features"
        )));
    }
    if sorted.len() > max_order {
        return Err(OakError::Invalid(format!(
            "subset of size {} exceeds the interaction order {max_order}",
            sorted.len()
        )));
    }
    if let Some(&last) = sorted.last() {
        if last >= n_features {
            return Err(OakError::Invalid(format!(
                "feature index {last} out of range for {n_features} features"
            )));
        }
    }
    Ok(sorted)
}
