//! Optimization of bound theories: Adam, the confidence curriculum, and the
//! training loop with metrics and checkpoints.

mod adam;
mod curriculum;

use std::fs::{self, File};
use std::path::{Path, PathBuf};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use curriculum::{CurriculumEvent, CurriculumState, Phase};

use crate::compiler::{evaluate, CompileError, Plan};
use crate::interp::{gather_rows, Interpretation, Sampler, SamplerSet, Strategy};
use crate::semantics::softmax;
use crate::tensor::{save_checkpoint, CheckpointError, Graph, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss at iteration {iteration}: {source}")]
    NonFiniteLogit { iteration: u64, source: CompileError },
    #[error("non-finite gradient for `{param}` at iteration {iteration}")]
    NonFiniteGradient { iteration: u64, param: String },
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("metrics output: {0}")]
    Metrics(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Training loss of a logit: `ln(1 + e^{-l})`.
pub fn loss(l: f64) -> f64 {
    crate::semantics::loss(l)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub curriculum: bool,
    /// Iterations between metrics rows.
    pub eval_every: u64,
    /// Where metrics and checkpoints go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 30_000,
            batch_size: 64,
            seed: 0,
            lr: 5e-5,
            curriculum: true,
            eval_every: 500,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    /// Set one field from its `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        let bad = || TrainError::Config(format!("bad value `{value}` for `{key}`"));
        match key {
            "iterations" => self.iterations = value.parse().map_err(|_| bad())?,
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = value.parse().map_err(|_| bad())?,
            "lr" => self.lr = value.parse().map_err(|_| bad())?,
            "curriculum" => self.curriculum = parse_switch(value).ok_or_else(bad)?,
            "eval_every" => self.eval_every = value.parse().map_err(|_| bad())?,
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            _ => return Err(TrainError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(TrainError::Config("eval_every must be at least 1".into()));
        }
        if !(self.lr > 0.0) {
            return Err(TrainError::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

pub fn parse_switch(v: &str) -> Option<bool> {
    match v {
        "on" | "true" | "yes" | "1" => Some(true),
        "off" | "false" | "no" | "0" => Some(false),
        _ => None,
    }
}

/// Shuffled mini-batch samplers for every sampled domain of the plan that
/// has none yet. Seeds are derived from `seed` and the domain's rank.
pub fn install_default_samplers(
    plan: &Plan,
    interp: &Interpretation,
    samplers: &mut SamplerSet,
    batch: usize,
    seed: u64,
) {
    for (k, d) in plan.sampled.iter().enumerate() {
        if samplers.get(d).is_none() {
            let size = interp.domain_size(d).unwrap_or(0);
            let s = Sampler::new(
                Strategy::Shuffled { batch },
                size,
                seed.wrapping_mul(1_000_003).wrapping_add(k as u64),
            );
            samplers.insert(d, s);
        }
    }
}

/// Wiring of the curriculum into a plan: which dataset it restricts, how
/// confidence is measured, and which axioms carry labeled data.
#[derive(Clone, Debug)]
pub struct CurriculumHook {
    pub state: CurriculumState,
    /// Dataset whose sampler is limited to the working set.
    pub dataset: String,
    /// Dataset rows per unit of working set (rows are interleaved by class).
    pub rows_per_unit: usize,
    /// Classifier whose top probability is the confidence signal.
    pub symbol: String,
    /// Column of the dataset whose elements feed the classifier.
    pub column: usize,
    /// Data sort holding the classifier's inputs.
    pub sort: String,
    /// Axioms removed in the rules-only phase.
    pub labeled_axioms: Vec<String>,
}

impl CurriculumHook {
    fn limit(&self) -> usize {
        self.state.working_set * self.rows_per_unit
    }
}

/// Held-out examples for a classifier symbol.
#[derive(Clone, Debug)]
pub struct TestSet {
    pub symbol: String,
    pub rows: Tensor,
    pub labels: Vec<usize>,
}

/// Index of the largest entry; ties go to the smaller index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows whose arg-max class output equals the label.
pub fn evaluate_classifier(
    interp: &Interpretation,
    symbol: &str,
    rows: &Tensor,
    labels: &[usize],
) -> Result<f64, TrainError> {
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    let n = rows.shape()[0];
    let chunk = 1000;
    for start in (0..n).step_by(chunk) {
        let ids: Vec<usize> = (start..(start + chunk).min(n)).collect();
        let out = interp
            .classify(symbol, &gather_rows(rows, &ids).map_err(CompileError::from)?)
            .map_err(CompileError::from)?;
        let k = out.shape()[1];
        for (r, row) in out.data().chunks_exact(k).enumerate() {
            if argmax(row) == labels[start + r] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iteration: u64,
    pub loss: f64,
    pub working_set: Option<usize>,
    pub p_c: Option<f64>,
    pub test_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    /// Loss of every iteration's mini-batch, before its update.
    pub losses: Vec<f64>,
    pub rows: Vec<MetricsRow>,
    pub best_accuracy: Option<f64>,
    pub final_accuracy: Option<f64>,
    /// Curriculum events with the iteration they happened at.
    pub events: Vec<(u64, CurriculumEvent)>,
}

struct MetricsWriter {
    w: Option<csv::Writer<File>>,
}

impl MetricsWriter {
    fn open(dir: Option<&Path>) -> Result<Self, TrainError> {
        let w = match dir {
            Some(d) => {
                fs::create_dir_all(d).map_err(|e| TrainError::Metrics(e.to_string()))?;
                let mut w =
                    csv::Writer::from_path(d.join("metrics.csv")).map_err(|e| TrainError::Metrics(e.to_string()))?;
                w.write_record(["iteration", "loss", "working_set", "p_c", "test_accuracy"])
                    .and_then(|_| w.flush().map_err(csv::Error::from))
                    .map_err(|e| TrainError::Metrics(e.to_string()))?;
                Some(w)
            }
            None => None,
        };
        Ok(Self { w })
    }

    fn row(&mut self, r: &MetricsRow) -> Result<(), TrainError> {
        let Some(w) = &mut self.w else { return Ok(()) };
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record([
            r.iteration.to_string(),
            format!("{:.9}", r.loss),
            opt(r.working_set.map(|v| v.to_string())),
            opt(r.p_c.map(|v| format!("{v:.6}"))),
            opt(r.test_accuracy.map(|v| format!("{v:.6}"))),
        ])
        .and_then(|_| w.flush().map_err(csv::Error::from))
        .map_err(|e| TrainError::Metrics(e.to_string()))
    }
}

/// Mean top-class probability of the classifier on the current working-set
/// draw.
fn confidence(interp: &Interpretation, hook: &CurriculumHook, ids: &[usize]) -> Result<f64, TrainError> {
    let Some(ds) = interp.dataset(&hook.dataset) else {
        return Ok(0.0);
    };
    let Some(crate::interp::Domain::Data { rows }) = interp.domain(&hook.sort) else {
        return Ok(0.0);
    };
    let elems: Vec<usize> = ids.iter().map(|&r| ds.rows[r][hook.column]).collect();
    let x = gather_rows(rows, &elems).map_err(CompileError::from)?;
    let out = interp.classify(&hook.symbol, &x).map_err(CompileError::from)?;
    let k = out.shape()[1];
    let total: f64 = out
        .data()
        .chunks_exact(k)
        .map(|row| softmax(row).into_iter().fold(0.0, f64::max))
        .sum();
    Ok(total / elems.len().max(1) as f64)
}

/// Run `config.iterations` steps of evaluate, backward and Adam. Metrics
/// rows are taken at iteration 0 and every `eval_every` iterations after.
pub fn train(
    plan: &mut Plan,
    interp: &mut Interpretation,
    samplers: &mut SamplerSet,
    config: &TrainConfig,
    mut curriculum: Option<&mut CurriculumHook>,
    test: Option<&TestSet>,
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let out_dir = config.out_dir.as_deref();
    let mut metrics = MetricsWriter::open(out_dir)?;
    let mut adam = AdamState::new(&interp.store, AdamConfig::new(config.lr));
    let mut report = TrainReport::default();
    let curriculum_on = config.curriculum && curriculum.is_some();
    if let Some(h) = curriculum.as_deref_mut().filter(|_| curriculum_on) {
        let limit = h.limit();
        if let Some(s) = samplers.get_mut(&h.dataset) {
            s.set_limit(Some(limit));
        }
    }
    for it in 0..config.iterations {
        interp.store.zero_grad();
        let mut g = Graph::new();
        let batch = evaluate(plan, interp, samplers, &mut g).map_err(|e| match e {
            CompileError::NonFiniteLogit(_) => TrainError::NonFiniteLogit {
                iteration: it,
                source: e,
            },
            e => TrainError::Compile(e),
        })?;
        let loss_value = g.value(batch.loss).item();
        report.losses.push(loss_value);
        let draw = curriculum
            .as_deref()
            .and_then(|h| batch.draws.iter().find(|d| d.domain == h.dataset))
            .map(|d| d.ids.clone());
        g.backward(batch.loss, &mut interp.store).map_err(CompileError::from)?;

        if it == 0 {
            record(
                &mut report,
                &mut metrics,
                interp,
                0,
                loss_value,
                curriculum.as_deref(),
                test,
                out_dir,
            )?;
        }
        adam_step(&mut interp.store, &mut adam).map_err(|e| match e {
            TrainError::NonFiniteGradient { param, .. } => TrainError::NonFiniteGradient { iteration: it, param },
            e => e,
        })?;

        if let (true, Some(h), Some(ids)) = (curriculum_on, curriculum.as_deref_mut(), draw) {
            let p = confidence(interp, h, &ids)?;
            let ev = h.state.update(p);
            match ev {
                CurriculumEvent::Grew { .. } => {
                    let limit = h.limit();
                    if let Some(s) = samplers.get_mut(&h.dataset) {
                        s.set_limit(Some(limit));
                    }
                }
                CurriculumEvent::EnteredRulesOnly => {
                    for a in &h.labeled_axioms {
                        plan.set_enabled(a, false);
                    }
                }
                CurriculumEvent::None => {}
            }
            if ev != CurriculumEvent::None {
                report.events.push((it, ev));
            }
        }

        let done = it + 1;
        if done % config.eval_every == 0 {
            record(
                &mut report,
                &mut metrics,
                interp,
                done,
                loss_value,
                curriculum.as_deref(),
                test,
                out_dir,
            )?;
        }
    }
    if let Some(d) = out_dir {
        save_checkpoint(&interp.store, &d.join("final.ckpt"))?;
        if report.best_accuracy.is_none() && report.rows.is_empty() {
            save_checkpoint(&interp.store, &d.join("best.ckpt"))?;
        }
    }
    report.final_accuracy = match test {
        Some(t) => Some(evaluate_classifier(interp, &t.symbol, &t.rows, &t.labels)?),
        None => None,
    };
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn record(
    report: &mut TrainReport,
    metrics: &mut MetricsWriter,
    interp: &Interpretation,
    iteration: u64,
    loss: f64,
    hook: Option<&CurriculumHook>,
    test: Option<&TestSet>,
    out_dir: Option<&Path>,
) -> Result<(), TrainError> {
    let acc = match test {
        Some(t) => Some(evaluate_classifier(interp, &t.symbol, &t.rows, &t.labels)?),
        None => None,
    };
    let row = MetricsRow {
        iteration,
        loss,
        working_set: hook.map(|h| h.state.working_set),
        p_c: hook.map(|h| h.state.p_c),
        test_accuracy: acc,
    };
    metrics.row(&row)?;
    report.rows.push(row);
    if let Some(a) = acc {
        if report.best_accuracy.is_none_or(|b| a > b) {
            report.best_accuracy = Some(a);
            if let Some(d) = out_dir {
                save_checkpoint(&interp.store, &d.join("best.ckpt"))?;
            }
        }
    }
    Ok(())
}
