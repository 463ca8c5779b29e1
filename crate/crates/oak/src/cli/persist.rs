//! Versioned JSON persistence for models, Sobol reports, decompositions and
//! predictions. All writes go through a temp-file-then-rename so a crash
//! never leaves a half-written artifact, and every document round-trips
//! byte-identically through parse and re-serialize.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::cli::data::FeatureSchema;
use crate::cli::RunConfig;
use crate::error::{OakError, Result};
use crate::gp::{FeatureSpec, FittedModel, GammaPrior, RestartSummary};
use crate::kernels::compose::OakHyperparams;
use crate::kernels::{BaseKernel, CategoricalKernel};
use crate::measures::flow::FlowParams;
use crate::measures::Measure;

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const DECOMPOSE_FORMAT_VERSION: u32 = 1;
pub const PREDICTIONS_FORMAT_VERSION: u32 = 1;

/// Training data, embedded in the model file or referenced externally with a
/// content hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "storage", rename_all = "snake_case")]
pub enum DataSection {
    Embedded {
        features: Vec<Vec<f64>>,
        targets: Vec<f64>,
    },
    Reference {
        path: String,
        /// FNV-1a 64 hash of the referenced file's bytes, hex encoded.
        hash: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub target: String,
    pub schema: Vec<FeatureSchema>,
    pub config: RunConfig,
    pub specs: Vec<FeatureSpec>,
    pub flows: Vec<Option<FlowParams>>,
    pub measures: Vec<Measure>,
    pub categorical_kernels: Vec<Option<CategoricalKernel>>,
    pub hyperparams: OakHyperparams,
    pub prior: GammaPrior,
    pub objective: f64,
    pub restarts: Vec<RestartSummary>,
    pub data: DataSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportEntryFile {
    pub features: Vec<String>,
    pub subset: Vec<usize>,
    pub index: f64,
    pub normalized: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportFile {
    pub format_version: u32,
    pub target: String,
    pub threshold: f64,
    pub total_variance: f64,
    pub degenerate: bool,
    pub entries: Vec<ReportEntryFile>,
    /// Positions into `entries`, best first.
    pub ranking: Vec<usize>,
    pub cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HistogramFile {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentFile {
    OneDim {
        feature: String,
        subset: Vec<usize>,
        normalized_sobol: f64,
        /// Grid in raw feature units.
        grid: Vec<f64>,
        mean: Vec<f64>,
        /// Two posterior standard deviations, the plotted band half-width.
        two_std: Vec<f64>,
        histogram: HistogramFile,
    },
    TwoDim {
        features: Vec<String>,
        subset: Vec<usize>,
        normalized_sobol: f64,
        grid_x: Vec<f64>,
        grid_y: Vec<f64>,
        /// Row-major mean values, `mean[i][j]` at `(grid_x[i], grid_y[j])`.
        mean: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposeFile {
    pub format_version: u32,
    pub components: Vec<ComponentFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionsFile {
    pub format_version: u32,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Root-mean-squared error against the targets, when present.
    pub rmse: Option<f64>,
    /// Subsets used by a truncated prediction, in ranking order.
    pub truncated_to: Option<Vec<Vec<usize>>>,
}

/// Serialize as pretty JSON with a trailing newline; the canonical encoding
/// for every artifact this crate writes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| OakError::Invalid(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Write atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let directory = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| OakError::Config(format!("not a file path: {}", path.display())))?;
    let mut temp = std::path::PathBuf::from(directory.unwrap_or_else(|| Path::new(".")));
    temp.push(format!(
        ".{}.tmp-{}",
        file_name.to_string_lossy(),
        std::process::id()
    ));
    std::fs::write(&temp, contents)?;
    std::fs::rename(&temp, path).map_err(|e| {
        let _ = std::fs::remove_file(&temp);
        OakError::Io(e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_canonical_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| OakError::Parse {
        line: e.line(),
        msg: format!("{}: {e}", path.display()),
    })
}

/// FNV-1a 64 of a byte stream, hex encoded; used to pin externally
/// referenced training data.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

/// Assemble the persistable form of a fitted model.
pub fn model_file(
    model: &FittedModel,
    target: &str,
    schema: &[FeatureSchema],
    config: &RunConfig,
    data: DataSection,
) -> ModelFile {
    ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        target: target.to_owned(),
        schema: schema.to_vec(),
        config: config.clone(),
        specs: model.feature_specs().to_vec(),
        flows: model.flows().to_vec(),
        measures: model
            .kernels()
            .iter()
            .map(|k| k.measure().clone())
            .collect(),
        categorical_kernels: model
            .kernels()
            .iter()
            .map(|k| match k.base() {
                BaseKernel::Categorical(c) => Some(c.clone()),
                BaseKernel::Se(_) => None,
            })
            .collect(),
        hyperparams: model.hyperparams().clone(),
        prior: *model.prior(),
        objective: model.objective(),
        restarts: model.restart_summaries().to_vec(),
        data,
    }
}

/// Save a fitted model. With `embed` the training data goes into the file;
/// otherwise it is referenced by path and content hash.
pub fn save_model(
    model: &FittedModel,
    target: &str,
    schema: &[FeatureSchema],
    config: &RunConfig,
    data_path_for_reference: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let data = match data_path_for_reference {
        None => DataSection::Embedded {
            features: model.raw_inputs().to_vec(),
            targets: model.targets().to_vec(),
        },
        Some(data_path) => {
            let bytes = std::fs::read(data_path)?;
            DataSection::Reference {
                path: data_path.to_string_lossy().into_owned(),
                hash: content_hash(&bytes),
            }
        }
    };
    write_json(out, &model_file(model, target, schema, config, data))
}

/// Load a model file, resolve its training data, rebuild the factorization
/// and re-verify the model invariants.
pub fn load_model(path: &Path) -> Result<(FittedModel, ModelFile)> {
    let file: ModelFile = read_json(path)?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(OakError::Config(format!(
            "model format version {} is not supported (expected {})",
            file.format_version, MODEL_FORMAT_VERSION
        )));
    }
    let (features, targets) = match &file.data {
        DataSection::Embedded { features, targets } => (features.clone(), targets.clone()),
        DataSection::Reference {
            path: data_path,
            hash,
        } => {
            let data_path = Path::new(data_path);
            let bytes = std::fs::read(data_path)?;
            let actual = content_hash(&bytes);
            if actual != *hash {
                return Err(OakError::Config(format!(
                    "referenced data {} has hash {actual}, expected {hash}",
                    data_path.display()
                )));
            }
            let dataset =
                crate::cli::data::ingest_with_schema(data_path, &file.target, &file.schema)?;
            let targets = dataset.targets.ok_or_else(|| {
                OakError::Config("referenced data lacks the target column".into())
            })?;
            (dataset.features, targets)
        }
    };
    let model = FittedModel::from_parts(crate::gp::ModelParts {
        x_raw: features,
        y: targets,
        specs: file.specs.clone(),
        flows: file.flows.clone(),
        measures: file.measures.clone(),
        categorical_kernels: file.categorical_kernels.clone(),
        hyperparams: file.hyperparams.clone(),
        prior: file.prior,
        objective: file.objective,
        restarts: file.restarts.clone(),
    })?;
    Ok((model, file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_round_trips_byte_identically() {
        let report = ReportFile {
            format_version: REPORT_FORMAT_VERSION,
            target: "y".into(),
            threshold: 0.01,
            total_variance: 1.5,
            degenerate: false,
            entries: vec![ReportEntryFile {
                features: vec!["a".into()],
                subset: vec![0],
                index: 1.5,
                normalized: 1.0,
                truncated: false,
            }],
            ranking: vec![0],
            cumulative: vec![1.0],
        };
        let text = to_canonical_json(&report).unwrap();
        let parsed: ReportFile = serde_json::from_str(&text).unwrap();
        assert_eq!(to_canonical_json(&parsed).unwrap(), text);
    }

    #[test]
    fn content_hash_matches_fnv_reference() {
        // FNV-1a 64 reference values.
        assert_eq!(content_hash(b""), "cbf29ce484222325");
        assert_eq!(content_hash(b"a"), "af63dc4c8601ec8c");
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, "one\n").unwrap();
        write_atomic(&path, "two\n").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two\n");
        // No temp files left behind.
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
