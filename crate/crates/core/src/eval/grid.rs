use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricsReport};
use crate::config::TrainConfig;
use crate::data::{labeling_rate, sample_few_labels};
use crate::error::{Error, Result};
use crate::nets::Checkpoint;
use crate::paired::PairedDataset;
use crate::pipeline::{finetune, pretrain_variant, train_supervised_baseline, PretrainVariant};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Mesen,
    Labeltrain,
    IntraNegativesAblation,
    CmfOnly,
    MpcOnly,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Mesen,
        Method::Labeltrain,
        Method::IntraNegativesAblation,
        Method::CmfOnly,
        Method::MpcOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mesen => "mesen",
            Method::Labeltrain => "labeltrain",
            Method::IntraNegativesAblation => "intra_negatives_ablation",
            Method::CmfOnly => "cmf_only",
            Method::MpcOnly => "mpc_only",
        }
    }

    /// Pretraining objective, or `None` for the from-scratch baseline.
    pub fn pretrain_variant(self) -> Option<PretrainVariant> {
        match self {
            Method::Mesen => Some(PretrainVariant::Mesen),
            Method::Labeltrain => None,
            Method::IntraNegativesAblation => Some(PretrainVariant::IntraNegatives),
            Method::CmfOnly => Some(PretrainVariant::CmfOnly),
            Method::MpcOnly => Some(PretrainVariant::MpcOnly),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Input(format!("unknown method {s:?}, expected one of {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub methods: Vec<Method>,
    /// Labels per class.
    pub label_budgets: Vec<usize>,
    pub repetitions: usize,
    /// Modalities to fine-tune and evaluate; empty means all of them.
    pub modalities: Vec<String>,
    /// Parallel worker threads; 0 lets the pool pick.
    pub workers: usize,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Input("grid needs at least one method".into()));
        }
        if self.label_budgets.is_empty() || self.label_budgets.contains(&0) {
            return Err(Error::Input("label budgets must be a nonempty list of values >= 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Input("repetitions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Unlabeled-or-labeled training windows plus a labeled test split.
#[derive(Debug, Clone)]
pub struct GridData {
    pub train: PairedDataset,
    pub test: PairedDataset,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub method: Method,
    pub budget: usize,
    pub modality: String,
    pub repetition: usize,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub method: Method,
    pub budget: usize,
    pub modality: String,
    pub labeling_rate: f64,
    pub repetitions: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridResults {
    pub cells: Vec<CellResult>,
    pub rows: Vec<GridRow>,
}

/// Percentage with two decimals, e.g. `0.35%`.
pub fn format_rate(rate: f64) -> String {
    format!("{:.2}%", rate * 100.0)
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl GridResults {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "method",
            "labels_per_class",
            "modality",
            "labeling_rate",
            "labeling_rate_pct",
            "repetitions",
            "accuracy_mean",
            "accuracy_sd",
            "macro_f1_mean",
            "macro_f1_sd",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_owned(),
                r.budget.to_string(),
                r.modality.clone(),
                r.labeling_rate.to_string(),
                format_rate(r.labeling_rate),
                r.repetitions.to_string(),
                r.accuracy_mean.to_string(),
                r.accuracy_sd.to_string(),
                r.macro_f1_mean.to_string(),
                r.macro_f1_sd.to_string(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let header = [
            "method",
            "n/class",
            "modality",
            "label rate",
            "accuracy (mean±sd)",
            "macro F1 (mean±sd)",
        ];
        let body: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.method.name().to_owned(),
                    r.budget.to_string(),
                    r.modality.clone(),
                    format_rate(r.labeling_rate),
                    format!("{:.4}±{:.4}", r.accuracy_mean, r.accuracy_sd),
                    format!("{:.4}±{:.4}", r.macro_f1_mean, r.macro_f1_sd),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(&header);
        for row in &body {
            line(&row.each_ref().map(String::as_str));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }
}

/// Seed of the label draw for one repetition and budget. Shared by all
/// methods so they see the same labeled windows.
fn selection_seed(rep_seed: u64, budget: usize) -> u64 {
    seed::derive(rep_seed, &format!("budget/{budget}"))
}

fn cell_name(method: Method, budget: usize, modality: &str, rep: usize) -> String {
    format!("method={method} budget={budget} modality={modality} repetition={rep}")
}

/// Run every (method, budget, modality, repetition) cell. Pretraining runs
/// once per (objective, repetition) and is shared across budgets and
/// modalities.
pub fn run_grid(data: &GridData, grid: &ExperimentGrid, config: &TrainConfig) -> Result<GridResults> {
    grid.validate()?;
    config.validate()?;
    let modalities: Vec<String> = if grid.modalities.is_empty() {
        data.train.modalities.clone()
    } else {
        grid.modalities.clone()
    };
    for m in &modalities {
        data.train.modality_index(m)?;
        data.test.modality_index(m)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(grid.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let rep_configs: Vec<TrainConfig> = (0..grid.repetitions)
        .map(|r| TrainConfig {
            seed: seed::repetition_seed(config.seed, r),
            ..config.clone()
        })
        .collect();

    let mut variants: Vec<PretrainVariant> = Vec::new();
    for v in grid.methods.iter().filter_map(|m| m.pretrain_variant()) {
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let pre_jobs: Vec<(PretrainVariant, usize)> = variants
        .iter()
        .flat_map(|&v| (0..grid.repetitions).map(move |r| (v, r)))
        .collect();
    let unlabeled = data.train.without_labels();

    let cells: Vec<(Method, usize, String, usize)> = grid
        .methods
        .iter()
        .flat_map(|&method| {
            let modalities = &modalities;
            grid.label_budgets.iter().flat_map(move |&budget| {
                modalities.iter().flat_map(move |m| {
                    (0..grid.repetitions).map(move |rep| (method, budget, m.clone(), rep))
                })
            })
        })
        .collect();

    let results: Vec<CellResult> = pool.install(|| -> Result<Vec<CellResult>> {
        let checkpoints: Vec<Checkpoint> = pre_jobs
            .par_iter()
            .map(|&(variant, rep)| {
                pretrain_variant(&unlabeled, &rep_configs[rep], variant).map_err(|e| {
                    Error::GridCell {
                        cell: format!("pretrain variant={variant:?} repetition={rep}"),
                        source: Box::new(e),
                    }
                })
            })
            .collect::<Result<_>>()?;
        let pretrained: HashMap<(PretrainVariant, usize), &Checkpoint> =
            pre_jobs.iter().copied().zip(checkpoints.iter()).collect();
        cells
            .par_iter()
            .map(|(method, budget, modality, rep)| {
                let run = || -> Result<MetricsReport> {
                    let cfg = &rep_configs[*rep];
                    let selection = sample_few_labels(&data.train, *budget, selection_seed(cfg.seed, *budget))?;
                    let model = match method.pretrain_variant() {
                        Some(v) => finetune(pretrained[&(v, *rep)], modality, &data.train, &selection, cfg)?,
                        None => train_supervised_baseline(modality, &data.train, &selection, cfg)?.model,
                    };
                    let mut report = evaluate(&model, &data.test, modality)?;
                    report.seed = cfg.seed;
                    Ok(report)
                };
                run()
                    .map(|metrics| CellResult {
                        method: *method,
                        budget: *budget,
                        modality: modality.clone(),
                        repetition: *rep,
                        metrics,
                    })
                    .map_err(|e| Error::GridCell {
                        cell: cell_name(*method, *budget, modality, *rep),
                        source: Box::new(e),
                    })
            })
            .collect()
    })?;

    let rows = results
        .chunks(grid.repetitions)
        .map(|group| {
            let first = &group[0];
            let acc: Vec<f64> = group.iter().map(|c| c.metrics.accuracy).collect();
            let f1: Vec<f64> = group.iter().map(|c| c.metrics.macro_f1).collect();
            let (accuracy_mean, accuracy_sd) = mean_sd(&acc);
            let (macro_f1_mean, macro_f1_sd) = mean_sd(&f1);
            GridRow {
                method: first.method,
                budget: first.budget,
                modality: first.modality.clone(),
                labeling_rate: labeling_rate(first.budget, data.train.class_count, data.train.len()),
                repetitions: group.len(),
                accuracy_mean,
                accuracy_sd,
                macro_f1_mean,
                macro_f1_sd,
            }
        })
        .collect();
    Ok(GridResults { cells: results, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_formatting() {
        assert_eq!(format_rate(labeling_rate(1, 6, 1714)), "0.35%");
        assert_eq!(format_rate(0.5), "50.00%");
    }

    #[test]
    fn mean_sd_sample_convention() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("bogus".parse::<Method>().is_err());
    }
}
