//! Command-line surface: data ingestion, run configuration, the fit /
//! sobol / decompose / predict commands, and model persistence.

pub mod commands;
pub mod data;
pub mod persist;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OakError, Result};
use crate::gp::{FeatureSpec, FitConfig, GammaPrior};

use data::{FeatureKind, FeatureSchema};

/// Per-feature measure override for continuous features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureOverride {
    /// Normalizing flow toward a standard Gaussian (the default).
    Flow,
    /// Gaussian measure with sample moments, no flow.
    Gaussian,
    /// Empirical measure of the training values, no flow.
    Empirical,
}

/// Run configuration, mirrored one-to-one by the JSON config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Maximum interaction order; `null` means `min(D, 3)`.
    pub max_order: Option<usize>,
    pub flow_layers: usize,
    pub restarts: usize,
    pub gamma_shape: f64,
    pub gamma_rate: f64,
    pub sobol_threshold: f64,
    pub seed: u64,
    pub n_cap: usize,
    pub max_iters: usize,
    /// Feature name to measure override; features not listed use the flow.
    pub measures: BTreeMap<String, MeasureOverride>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            max_order: None,
            flow_layers: 1,
            restarts: 5,
            gamma_shape: 1.0,
            gamma_rate: 0.2,
            sobol_threshold: 0.01,
            seed: 0,
            n_cap: 4000,
            max_iters: 1000,
            measures: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| OakError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.flow_layers == 0 {
            return Err(OakError::Config("flow_layers must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(OakError::Config("restarts must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.sobol_threshold) {
            return Err(OakError::Config(format!(
                "sobol_threshold must be in [0, 1), got {}",
                self.sobol_threshold
            )));
        }
        if self.gamma_shape <= 0.0 || self.gamma_rate <= 0.0 {
            return Err(OakError::Config(
                "gamma_shape and gamma_rate must be positive".into(),
            ));
        }
        if let Some(order) = self.max_order {
            if order == 0 {
                return Err(OakError::Config("max_order must be at least 1".into()));
            }
        }
        if self.max_iters == 0 {
            return Err(OakError::Config("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        Ok(FitConfig {
            max_order: self.max_order,
            restarts: self.restarts,
            seed: self.seed,
            prior: GammaPrior::new(self.gamma_shape, self.gamma_rate)?,
            flow_layers: self.flow_layers,
            n_cap: self.n_cap,
            max_iters: self.max_iters,
            grad_tol: 1e-6,
        })
    }

    /// Map the dataset schema plus the configured overrides onto per-feature
    /// pipeline specs.
    pub fn feature_specs(&self, schema: &[FeatureSchema]) -> Result<Vec<FeatureSpec>> {
        for name in self.measures.keys() {
            if !schema.iter().any(|f| f.name == *name) {
                return Err(OakError::Config(format!(
                    "measure override for unknown feature '{name}'"
                )));
            }
        }
        schema
            .iter()
            .map(|feature| match &feature.kind {
                FeatureKind::Categorical { levels } => {
                    if self.measures.contains_key(&feature.name) {
                        return Err(OakError::Config(format!(
                            "feature '{}' is categorical; measure overrides apply to continuous features",
                            feature.name
                        )));
                    }
                    Ok(FeatureSpec::Categorical {
                        n_levels: levels.len(),
                    })
                }
                FeatureKind::Continuous => Ok(match self.measures.get(&feature.name) {
                    None | Some(MeasureOverride::Flow) => FeatureSpec::Flow,
                    Some(MeasureOverride::Gaussian) => FeatureSpec::Gaussian,
                    Some(MeasureOverride::Empirical) => FeatureSpec::Empirical,
                }),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_map_to_specs() {
        let schema = vec![
            FeatureSchema {
                name: "a".into(),
                kind: FeatureKind::Continuous,
            },
            FeatureSchema {
                name: "b".into(),
                kind: FeatureKind::Continuous,
            },
            FeatureSchema {
                name: "c".into(),
                kind: FeatureKind::Categorical {
                    levels: vec!["x".into(), "y".into()],
                },
            },
        ];
        let mut config = RunConfig::default();
        config
            .measures
            .insert("b".into(), MeasureOverride::Empirical);
        let specs = config.feature_specs(&schema).unwrap();
        assert_eq!(
            specs,
            vec![
                FeatureSpec::Flow,
                FeatureSpec::Empirical,
                FeatureSpec::Categorical { n_levels: 2 },
            ]
        );
    }

    #[test]
    fn override_on_categorical_feature_is_rejected() {
        let schema = vec![FeatureSchema {
            name: "c".into(),
            kind: FeatureKind::Categorical {
                levels: vec!["x".into()],
            },
        }];
        let mut config = RunConfig::default();
        config.measures.insert("c".into(), MeasureOverride::Flow);
        assert!(config.feature_specs(&schema).is_err());
    }

    #[test]
    fn unknown_override_is_rejected() {
        let mut config = RunConfig::default();
        config.measures.insert("nope".into(), MeasureOverride::Flow);
        assert!(config.feature_specs(&[]).is_err());
    }

    #[test]
    fn bad_threshold_is_rejected() {
        let config = RunConfig {
            sobol_threshold: 1.0,
            ..RunConfig::default()
        };
        assert!(config.validate().is_err());
    }
}
