//! The fit / sobol / decompose / predict commands behind the binary.

use std::path::Path;
use std::time::Instant;

use crate::cli::data::{self, FeatureKind};
use crate::cli::persist::{
    self, ComponentFile, DecomposeFile, HistogramFile, PredictionsFile, ReportEntryFile,
    ReportFile, DECOMPOSE_FORMAT_VERSION, PREDICTIONS_FORMAT_VERSION, REPORT_FORMAT_VERSION,
};
use crate::cli::RunConfig;
use crate::error::{OakError, Result};
use crate::gp::{fit, FittedModel};
use crate::sobol::{self, SobolReport};

/// Ingest, fit and persist a model. With `reference_data` the training CSV is
/// referenced by path and hash instead of embedded.
pub fn cmd_fit(
    data_path: &Path,
    target: &str,
    config_path: Option<&Path>,
    seed_override: Option<u64>,
    reference_data: bool,
    out: &Path,
) -> Result<()> {
    let started = Instant::now();
    let mut config = match config_path {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed_override {
        config.seed = seed;
    }
    let dataset = data::ingest(data_path, target)?;
    let specs = config.feature_specs(&dataset.schema)?;
    let targets = dataset
        .targets
        .as_ref()
        .expect("training ingest has targets");
    let model = fit(&dataset.features, targets, &specs, &config.fit_config()?)?;
    persist::save_model(
        &model,
        target,
        &dataset.schema,
        &config,
        reference_data.then_some(data_path),
        out,
    )?;

    println!(
        "fitted {} rows x {} features in {:.2}s",
        model.n_train(),
        model.n_features(),
        started.elapsed().as_secs_f64()
    );
    println!("objective: {:.6}", model.objective());
    let hp = model.hyperparams();
    for (schema, lengthscale) in dataset.schema.iter().zip(&hp.lengthscales) {
        match lengthscale {
            Some(l) => println!("lengthscale[{}]: {:.6}", schema.name, l),
            None => println!("lengthscale[{}]: categorical", schema.name),
        }
    }
    for (order, variance) in hp.order_variances.iter().enumerate() {
        println!("order_variance[{order}]: {variance:.6e}");
    }
    println!("noise_variance: {:.6e}", hp.noise_variance);
    println!("model written to {}", out.display());
    Ok(())
}

fn subset_names(schema: &[data::FeatureSchema], subset: &[usize]) -> Vec<String> {
    subset.iter().map(|&f| schema[f].name.clone()).collect()
}

fn report_file(model_file: &persist::ModelFile, report: &SobolReport) -> ReportFile {
    ReportFile {
        format_version: REPORT_FORMAT_VERSION,
        target: model_file.target.clone(),
        threshold: report.threshold,
        total_variance: report.total,
        degenerate: report.degenerate,
        entries: report
            .entries
            .iter()
            .map(|e| ReportEntryFile {
                features: subset_names(&model_file.schema, &e.subset),
                subset: e.subset.clone(),
                index: e.index,
                normalized: e.normalized,
                truncated: e.truncated,
            })
            .collect(),
        ranking: report.ranking.clone(),
        cumulative: report.cumulative.clone(),
    }
}

/// Compute the Sobol report of a persisted model and write it as JSON.
pub fn cmd_sobol(model_path: &Path, out: &Path) -> Result<()> {
    let (model, model_file) = persist::load_model(model_path)?;
    let report = sobol::build_report(&model, model_file.config.sobol_threshold)?;
    persist::write_json(out, &report_file(&model_file, &report))?;
    if report.degenerate {
        println!("all Sobol indices are zero; ranking is empty");
    } else {
        for (rank, &i) in report.ranking.iter().take(10).enumerate() {
            let entry = &report.entries[i];
            println!(
                "#{}: {:?} normalized {:.4}",
                rank + 1,
                subset_names(&model_file.schema, &entry.subset),
                entry.normalized
            );
        }
    }
    println!("report written to {}", out.display());
    Ok(())
}

/// Parse `"1;2;1,2"`-style 1-based subset lists.
fn parse_subsets(text: &str, n_features: usize) -> Result<Vec<Vec<usize>>> {
    text.split(';')
        .filter(|part| !part.trim().is_empty())
        .map(|part| {
            part.split(',')
                .map(|idx| {
                    let idx: usize = idx.trim().parse().map_err(|_| {
                        OakError::Config(format!("subset index '{}' is not an integer", idx.trim()))
                    })?;
                    if idx == 0 || idx > n_features {
                        return Err(OakError::Config(format!(
                            "subset index {idx} out of range 1..={n_features}"
                        )));
                    }
                    Ok(idx - 1)
                })
                .collect()
        })
        .collect()
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + step * i as f64).collect()
}

/// Grid over one feature in raw units: the observed range for continuous
/// features, the level indices for categorical ones.
fn feature_grid(model: &FittedModel, schema: &data::FeatureSchema, f: usize, n: usize) -> Vec<f64> {
    match &schema.kind {
        FeatureKind::Categorical { levels } => (0..levels.len()).map(|l| l as f64).collect(),
        FeatureKind::Continuous => {
            let column = &model.raw_inputs()[f];
            let lo = column.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            linspace(lo, hi, n)
        }
    }
}

/// Freedman-Diaconis histogram of a raw feature column.
fn histogram(column: &[f64]) -> HistogramFile {
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let lo = sorted[0];
    let hi = sorted[n - 1];
    let q1 = sorted[n / 4];
    let q3 = sorted[(3 * n) / 4];
    let width = 2.0 * (q3 - q1) / (n as f64).cbrt();
    let bins = if width > 0.0 && hi > lo {
        (((hi - lo) / width).ceil() as usize).clamp(1, 200)
    } else {
        1
    };
    let edges = linspace(lo, hi, bins + 1);
    let mut counts = vec![0usize; bins];
    for &v in column {
        let mut b = if hi > lo {
            (((v - lo) / (hi - lo)) * bins as f64) as usize
        } else {
            0
        };
        if b >= bins {
            b = bins - 1;
        }
        counts[b] += 1;
    }
    HistogramFile { edges, counts }
}

/// Export posterior component functions over grids in raw feature units.
/// Subsets come either from an explicit `"1;2;1,2"` list or from the top-k
/// Sobol-ranked components.
pub fn cmd_decompose(
    model_path: &Path,
    subsets: Option<&str>,
    topk: Option<usize>,
    grid: usize,
    out: &Path,
) -> Result<()> {
    let (model, model_file) = persist::load_model(model_path)?;
    if grid < 2 {
        return Err(OakError::Config(format!(
            "grid must have at least 2 points, got {grid}"
        )));
    }
    let report = sobol::build_report(&model, model_file.config.sobol_threshold)?;
    let selected: Vec<Vec<usize>> = match (subsets, topk) {
        (Some(text), _) => parse_subsets(text, model.n_features())?,
        (None, Some(k)) => {
            if k == 0 {
                return Err(OakError::Config(
                    "topk must be at least 1 (no subsets selected)".into(),
                ));
            }
            report.top_subsets(k)
        }
        (None, None) => {
            return Err(OakError::Config(
                "select components with --subsets or --topk".into(),
            ))
        }
    };
    if selected.is_empty() {
        return Err(OakError::Config("no subsets selected".into()));
    }

    let normalized_of = |subset: &[usize]| -> f64 {
        report
            .entries
            .iter()
            .find(|e| e.subset == subset)
            .map_or(0.0, |e| e.normalized)
    };

    let mut components = Vec::new();
    for subset in &selected {
        let subset = crate::gp::normalize_subset(subset, model.n_features(), model.max_order())?;
        match subset.as_slice() {
            [f] => {
                let f = *f;
                let grid_points = feature_grid(&model, &model_file.schema[f], f, grid);
                let x_star = column_grid_1d(&model, f, &grid_points);
                let mean = model.component_posterior_mean(&subset, &x_star)?;
                let two_std = model
                    .component_posterior_variance(&subset, &x_star)?
                    .into_iter()
                    .map(|v| 2.0 * v.sqrt())
                    .collect();
                components.push(ComponentFile::OneDim {
                    feature: model_file.schema[f].name.clone(),
                    subset: subset.clone(),
                    normalized_sobol: normalized_of(&subset),
                    grid: grid_points,
                    mean,
                    two_std,
                    histogram: histogram(&model.raw_inputs()[f]),
                });
            }
            [fx, fy] => {
                let (fx, fy) = (*fx, *fy);
                let grid_x = feature_grid(&model, &model_file.schema[fx], fx, grid);
                let grid_y = feature_grid(&model, &model_file.schema[fy], fy, grid);
                let x_star = column_grid_2d(&model, fx, &grid_x, fy, &grid_y);
                let flat = model.component_posterior_mean(&subset, &x_star)?;
                let mean = flat.chunks(grid_y.len()).map(<[f64]>::to_vec).collect();
                components.push(ComponentFile::TwoDim {
                    features: vec![
                        model_file.schema[fx].name.clone(),
                        model_file.schema[fy].name.clone(),
                    ],
                    subset: subset.clone(),
                    normalized_sobol: normalized_of(&subset),
                    grid_x,
                    grid_y,
                    mean,
                });
            }
            _ => {
                return Err(OakError::Config(format!(
                    "subset {subset:?} has more than 2 features; only 1D and 2D components \
                     are exported (higher orders remain available through the library API)"
                )))
            }
        }
    }
    persist::write_json(
        out,
        &DecomposeFile {
            format_version: DECOMPOSE_FORMAT_VERSION,
            components,
        },
    )?;
    println!(
        "decomposition with {} component(s) written to {}",
        selected.len(),
        out.display()
    );
    Ok(())
}

/// Full feature columns for a 1D sweep: the swept feature takes the grid, the
/// others sit at a neutral value (their constrained kernels only enter
/// through feature `f`).
fn column_grid_1d(model: &FittedModel, f: usize, grid: &[f64]) -> Vec<Vec<f64>> {
    (0..model.n_features())
        .map(|j| {
            if j == f {
                grid.to_vec()
            } else {
                vec![neutral_value(model, j); grid.len()]
            }
        })
        .collect()
}

fn column_grid_2d(
    model: &FittedModel,
    fx: usize,
    grid_x: &[f64],
    fy: usize,
    grid_y: &[f64],
) -> Vec<Vec<f64>> {
    let n = grid_x.len() * grid_y.len();
    (0..model.n_features())
        .map(|j| {
            if j == fx {
                grid_x
                    .iter()
                    .flat_map(|&x| std::iter::repeat_n(x, grid_y.len()))
                    .collect()
            } else if j == fy {
                grid_y.iter().copied().cycle().take(n).collect()
            } else {
                vec![neutral_value(model, j); n]
            }
        })
        .collect()
}

/// A value for features outside the subset; component posteriors ignore it,
/// but the column must still pass validation (categorical levels, flows).
fn neutral_value(model: &FittedModel, f: usize) -> f64 {
    model.raw_inputs()[f][0]
}

/// Predict on new data. With `topk`, the mean comes from the truncated sum of
/// the top-k Sobol-ranked components; the variance is always the full
/// predictive variance including noise.
pub fn cmd_predict(
    model_path: &Path,
    data_path: &Path,
    topk: Option<usize>,
    out: &Path,
) -> Result<()> {
    let (model, model_file) = persist::load_model(model_path)?;
    let dataset = data::ingest_with_schema(data_path, &model_file.target, &model_file.schema)?;
    let (full_mean, variance) = model.predict(&dataset.features, true)?;
    let (mean, truncated_to) = match topk {
        None => (full_mean, None),
        Some(k) => {
            if k == 0 {
                return Err(OakError::Config("topk must be at least 1".into()));
            }
            let report = sobol::build_report(&model, model_file.config.sobol_threshold)?;
            let subsets = report.top_subsets(k);
            let mean = model.truncated_predict(&subsets, &dataset.features)?;
            (mean, Some(subsets))
        }
    };
    let rmse = dataset.targets.as_ref().map(|targets| {
        let sse: f64 = mean
            .iter()
            .zip(targets)
            .map(|(m, t)| (m - t) * (m - t))
            .sum();
        (sse / targets.len() as f64).sqrt()
    });
    persist::write_json(
        out,
        &PredictionsFile {
            format_version: PREDICTIONS_FORMAT_VERSION,
            mean,
            variance,
            rmse,
            truncated_to,
        },
    )?;
    if let Some(rmse) = rmse {
        println!("rmse: {rmse:.6}");
    }
    println!("predictions written to {}", out.display());
    Ok(())
}
