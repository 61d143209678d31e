//! Data loading and the two end-to-end experiments.

pub mod config;
pub mod gradsuite;
pub mod idx;
pub mod mnist;
pub mod relations;
pub mod spatial;
pub mod stats;
pub mod synth;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub use config::{parse_kv, Amount, ConfigError, ExperimentConfig, Task};
pub use idx::{load_idx, parse_idx, Idx, IdxError};
pub use mnist::{load_mnist, run_mnist_experiment, MnistData};
pub use relations::run_relations_experiment;
pub use spatial::{spatial_features, spatial_predicates, BBox, BoxPair, DegenerateBox, SpatialPredicates};
pub use stats::{mean_std, sign_test, SignTest};
pub use synth::{gen_synth_relations, SynthConfig, SynthData};

use crate::compiler::CompileError;
use crate::interp::InterpError;
use crate::trainer::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("data missing: {0}")]
    DataMissing(PathBuf),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("{0}")]
    Logic(String),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid vocabulary: {0}")]
    InvalidVocab(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

/// One line of the results CSV. `seed` is a number, or `mean`, `std` or
/// `all` for aggregate rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub task: String,
    pub seed: String,
    pub ntr: String,
    pub triples: String,
    pub knowledge: bool,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    /// Human-readable summary, one line per configuration.
    pub summary: String,
}

impl ResultsTable {
    /// Values of `metric` on `split` for the per-seed rows of one variant.
    pub fn per_seed(&self, knowledge: bool, split: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.knowledge == knowledge && r.split == split && r.metric == metric)
            .filter(|r| r.seed.parse::<u64>().is_ok())
            .map(|r| r.value)
            .collect()
    }

    /// Value of an aggregate row, such as the mean.
    pub fn aggregate(&self, seed: &str, knowledge: bool, split: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.seed == seed && r.knowledge == knowledge && r.split == split && r.metric == metric)
            .map(|r| r.value)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |e: &dyn std::fmt::Display| ExperimentError::Output {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| err(&e))?;
        }
        let mut w = csv::Writer::from_path(path).map_err(|e| err(&e))?;
        w.write_record([
            "task",
            "seed",
            "ntr",
            "triples",
            "knowledge",
            "split",
            "metric",
            "value",
        ])
        .map_err(|e| err(&e))?;
        for r in &self.rows {
            w.write_record([
                r.task.as_str(),
                &r.seed,
                &r.ntr,
                &r.triples,
                if r.knowledge { "on" } else { "off" },
                &r.split,
                &r.metric,
                &format!("{:.6}", r.value),
            ])
            .map_err(|e| err(&e))?;
        }
        w.flush().map_err(|e| err(&e))
    }

    /// Append mean and std rows for every per-seed (variant, split, metric).
    fn add_aggregates(&mut self) {
        let mut keys: Vec<(String, String, String, bool, String, String)> = Vec::new();
        for r in &self.rows {
            let k = (
                r.task.clone(),
                r.ntr.clone(),
                r.triples.clone(),
                r.knowledge,
                r.split.clone(),
                r.metric.clone(),
            );
            if r.seed.parse::<u64>().is_ok() && !keys.contains(&k) {
                keys.push(k);
            }
        }
        for (task, ntr, triples, knowledge, split, metric) in keys {
            let xs = self.per_seed(knowledge, &split, &metric);
            let (m, s) = mean_std(&xs);
            for (seed, value) in [("mean", m), ("std", s)] {
                self.rows.push(ResultRow {
                    task: task.clone(),
                    seed: seed.into(),
                    ntr: ntr.clone(),
                    triples: triples.clone(),
                    knowledge,
                    split: split.clone(),
                    metric: metric.clone(),
                    value,
                });
            }
        }
    }

    fn summarize(&mut self, line: impl std::fmt::Display) {
        let _ = writeln!(self.summary, "{line}");
    }
}

/// Directory for one run's metrics and checkpoints under `base`.
fn run_dir(base: Option<&Path>, name: String) -> Option<PathBuf> {
    base.map(|b| b.join(name))
}

/// `ntr` column for the synthetic task: the training regime as a percentage.
fn train_label(regime: f64) -> String {
    format!("{}%", regime * 100.0)
}
