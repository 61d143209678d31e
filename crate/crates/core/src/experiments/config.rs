use std::path::PathBuf;

use crate::trainer::{parse_switch, TrainConfig, TrainError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("bad value `{value}` for `{key}`")]
    Value { key: String, value: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// `key = value` pairs of a flat config file; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    MnistTriples,
    SynthRelations,
}

/// Labeled examples per class, or the whole training split.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Amount {
    PerClass(usize),
    All,
}

impl Amount {
    pub fn parse(s: &str) -> Option<Amount> {
        match s {
            "all" | "max" => Some(Amount::All),
            n => n.parse().ok().filter(|&n| n >= 1).map(Amount::PerClass),
        }
    }
}

impl std::fmt::Display for Amount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Amount::PerClass(n) => write!(f, "{n}"),
            Amount::All => f.write_str("all"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub task: Task,
    pub ntr: Amount,
    /// Unlabeled triples per class; `All` is the largest balanced set.
    pub triples: Amount,
    pub knowledge: bool,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub data_dir: Option<PathBuf>,
    /// Training images taken from the front of the training file.
    pub train_pool: usize,
    /// Curriculum starting working set, per class.
    pub initial_working_set: usize,
    pub rules_only_after: bool,
    /// Fraction of the synthetic pool used for training.
    pub regime: f64,
    /// Offset noise of the synthetic generator.
    pub noise: f64,
    /// Appearance noise of the synthetic generator.
    pub appearance_noise: f64,
}

impl ExperimentConfig {
    pub fn mnist() -> Self {
        Self {
            task: Task::MnistTriples,
            ntr: Amount::PerClass(2),
            triples: Amount::All,
            knowledge: true,
            train: TrainConfig::default(),
            seeds: (0..5).collect(),
            data_dir: None,
            train_pool: 50_000,
            initial_working_set: 10,
            rules_only_after: true,
            regime: 1.0,
            noise: 0.2,
            appearance_noise: 0.8,
        }
    }

    pub fn synth_relations() -> Self {
        Self {
            task: Task::SynthRelations,
            ntr: Amount::All,
            triples: Amount::All,
            knowledge: true,
            train: TrainConfig {
                iterations: 3000,
                lr: 3e-3,
                curriculum: false,
                ..TrainConfig::default()
            },
            seeds: (0..8).collect(),
            data_dir: None,
            train_pool: 50_000,
            initial_working_set: 10,
            rules_only_after: true,
            regime: 0.01,
            noise: 0.2,
            appearance_noise: 0.8,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::Value {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "task" => {
                self.task = match value {
                    "mnist" | "mnist-triples" => Task::MnistTriples,
                    "synth-rel" | "synth-relations" => Task::SynthRelations,
                    _ => return Err(bad()),
                }
            }
            "ntr" => self.ntr = Amount::parse(value).ok_or_else(bad)?,
            "triples" => self.triples = Amount::parse(value).ok_or_else(bad)?,
            "knowledge" => self.knowledge = parse_switch(value).ok_or_else(bad)?,
            "seeds" => self.seeds = parse_seeds(value).ok_or_else(bad)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "train_pool" => self.train_pool = value.parse().map_err(|_| bad())?,
            "initial_working_set" => self.initial_working_set = value.parse().map_err(|_| bad())?,
            "rules_only_after" => self.rules_only_after = parse_switch(value).ok_or_else(bad)?,
            "regime" => {
                self.regime = value
                    .parse()
                    .ok()
                    .filter(|r: &f64| *r > 0.0 && *r <= 1.0)
                    .ok_or_else(bad)?
            }
            "appearance_noise" => {
                self.appearance_noise = value.parse().ok().filter(|n: &f64| *n >= 0.0).ok_or_else(bad)?
            }
            "noise" => self.noise = value.parse().ok().filter(|n: &f64| *n > 0.0).ok_or_else(bad)?,
            _ => self.train.set(key, value).map_err(|e| match e {
                TrainError::Config(m) if m.starts_with("unknown") => ConfigError::UnknownKey(key.to_string()),
                _ => bad(),
            })?,
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::Invalid("at least one seed is required".into()));
        }
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// `5` means seeds 0..5; a comma list gives them explicitly.
pub fn parse_seeds(s: &str) -> Option<Vec<u64>> {
    if s.contains(',') {
        s.split(',').map(|p| p.trim().parse().ok()).collect()
    } else {
        s.trim()
            .parse::<u64>()
            .ok()
            .filter(|&n| n > 0)
            .map(|n| (0..n).collect())
    }
}

/// Keys accepted in config files, for help text.
pub const CONFIG_KEYS: &str = "task, ntr, triples, knowledge, seeds, data_dir, train_pool, \
initial_working_set, rules_only_after, regime, noise, appearance_noise, iterations, batch_size, seed, lr, curriculum, eval_every, out_dir";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_file() {
        let kv = parse_kv("# run\nntr = 5\n knowledge=off # no rules\n\nseeds = 1,4\n").unwrap();
        let mut c = ExperimentConfig::mnist();
        c.apply(&kv).unwrap();
        assert_eq!(c.ntr, Amount::PerClass(5));
        assert!(!c.knowledge);
        assert_eq!(c.seeds, vec![1, 4]);
        assert!(parse_kv("novalue").is_err());
        assert!(matches!(c.set("colour", "red"), Err(ConfigError::UnknownKey(_))));
        c.set("iterations", "10").unwrap();
        assert_eq!(c.train.iterations, 10);
        assert_eq!(parse_seeds("3"), Some(vec![0, 1, 2]));
    }
}
