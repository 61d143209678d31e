use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::compiler::{compile, fuse_loss};
use crate::interp::{
    bind_theory, build_triples, gather_rows, max_per_class, BindOptions, DataSources, ExternRegistry, SamplerSet,
    CLASSES,
};
use crate::logic::load_theory;
use crate::tensor::Tensor;
use crate::trainer::{install_default_samplers, train, CurriculumHook, CurriculumState, TestSet, TrainReport};

use super::idx::{load_idx, Idx};
use super::{run_dir, Amount, ExperimentConfig, ExperimentError, Result, ResultRow, ResultsTable};

const TASK: &str = "mnist-triples";

pub const FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

#[derive(Clone, Debug, PartialEq)]
pub struct MnistData {
    /// `n × 784` pixels in `[0, 1]`.
    pub train_images: Tensor,
    pub train_labels: Vec<usize>,
    pub test_images: Tensor,
    pub test_labels: Vec<usize>,
}

fn images(path: &Path) -> Result<Tensor> {
    match load_idx(path)? {
        Idx::Images { data, .. } => Ok(data),
        Idx::Labels(_) => Err(ExperimentError::Logic(format!(
            "{} holds labels, not images",
            path.display()
        ))),
    }
}

fn labels(path: &Path) -> Result<Vec<usize>> {
    match load_idx(path)? {
        Idx::Labels(l) => Ok(l),
        Idx::Images { .. } => Err(ExperimentError::Logic(format!(
            "{} holds images, not labels",
            path.display()
        ))),
    }
}

/// Read the four standard MNIST IDX files from `dir`.
pub fn load_mnist(dir: &Path) -> Result<MnistData> {
    for f in FILES {
        let p = dir.join(f);
        if !p.is_file() {
            return Err(ExperimentError::DataMissing(p));
        }
    }
    let d = MnistData {
        train_images: images(&dir.join(FILES[0]))?,
        train_labels: labels(&dir.join(FILES[1]))?,
        test_images: images(&dir.join(FILES[2]))?,
        test_labels: labels(&dir.join(FILES[3]))?,
    };
    if d.train_images.shape()[0] != d.train_labels.len() || d.test_images.shape()[0] != d.test_labels.len() {
        return Err(ExperimentError::Logic("image and label counts differ".into()));
    }
    if let Some(&l) = d.train_labels.iter().chain(&d.test_labels).find(|&&l| l >= CLASSES) {
        return Err(ExperimentError::Interp(crate::interp::InterpError::InvalidLabel(l)));
    }
    Ok(d)
}

/// Theory of the digit classifier: labeled examples and, with knowledge,
/// the modular sum rule over unlabeled triples.
pub fn mnist_theory(knowledge: bool) -> String {
    let mut s = String::from(
        "sort Image dim 784;\nsort Digit card 10;\ndata Labeled : Image x Digit;\n\
         rel digit : Image out 10 mlp 512 act sigmoid;\n\
         axiom labeled : forall (x, y) : Labeled . pi[y](digit(x));\n",
    );
    if knowledge {
        s += "data Triples : Image x Image x Image;\n\
              axiom sums : forall (x1, x2, x3) : Triples . forall y1 : Digit . forall y2 : Digit .\n    \
              pi[y1](digit(x1)) & pi[y2](digit(x2)) -> pi[(y1 + y2) mod 10](digit(x3));\n";
    }
    s
}

/// Disjoint labeled and unlabeled index sets over the training pool.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolSplit {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

/// `ntr` random examples of every class become labeled; the rest of the
/// pool is unlabeled.
pub fn split_pool(labels: &[usize], ntr: Amount, seed: u64) -> Result<PoolSplit> {
    let n = match ntr {
        Amount::All => {
            return Ok(PoolSplit {
                labeled: (0..labels.len()).collect(),
                unlabeled: Vec::new(),
            })
        }
        Amount::PerClass(n) => n,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let mut taken = [0usize; CLASSES];
    let mut split = PoolSplit {
        labeled: Vec::new(),
        unlabeled: Vec::new(),
    };
    for i in order {
        let c = labels[i];
        if taken[c] < n {
            taken[c] += 1;
            split.labeled.push(i);
        } else {
            split.unlabeled.push(i);
        }
    }
    if let Some(c) = (0..CLASSES).find(|&c| taken[c] < n) {
        return Err(ExperimentError::Interp(
            crate::interp::InterpError::InsufficientClassCount(c),
        ));
    }
    split.labeled.sort_unstable();
    split.unlabeled.sort_unstable();
    Ok(split)
}

#[derive(Clone, Debug)]
pub struct MnistRun {
    pub seed: u64,
    pub accuracy: f64,
    /// Triples per class actually used.
    pub triples: usize,
    pub report: TrainReport,
}

/// Train one seed of the configured MNIST variant.
pub fn run_mnist_seed(data: &MnistData, config: &ExperimentConfig, seed: u64) -> Result<MnistRun> {
    let pool = config.train_pool.min(data.train_labels.len());
    let pool_labels = &data.train_labels[..pool];
    let split = split_pool(pool_labels, config.ntr, seed)?;
    let rows =
        gather_rows(&data.train_images, &(0..pool).collect::<Vec<_>>()).map_err(crate::compiler::CompileError::from)?;
    let mut sources = DataSources::new().table("Image", rows).dataset(
        "Labeled",
        split.labeled.iter().map(|&i| vec![i, pool_labels[i]]).collect(),
    );
    let mut triples_used = 0;
    let knowledge = config.knowledge && !split.unlabeled.is_empty();
    if knowledge {
        let hidden: Vec<usize> = split.unlabeled.iter().map(|&i| pool_labels[i]).collect();
        let max = max_per_class(&hidden);
        triples_used = match config.triples {
            Amount::All => max,
            Amount::PerClass(n) => n.min(max),
        };
        let triples = build_triples(&hidden, triples_used, seed)?;
        let rows = triples
            .iter()
            .map(|t| t.iter().map(|&u| split.unlabeled[u]).collect())
            .collect();
        sources = sources.dataset("Triples", rows);
    }
    let theory = load_theory(&mnist_theory(knowledge))
        .map_err(|e| ExperimentError::Logic(e.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")))?;
    let options = BindOptions {
        seed,
        ..BindOptions::default()
    };
    let mut interp = bind_theory(&theory, &ExternRegistry::with_defaults(), &sources, options)?;
    let mut plan = fuse_loss(compile(&theory, &interp)?);
    let mut tc = config.train.clone();
    tc.seed = seed;
    tc.out_dir = run_dir(
        config.train.out_dir.as_deref(),
        format!(
            "{TASK}/ntr{}_t{}_k{}_seed{seed}",
            config.ntr,
            config.triples,
            if knowledge { "on" } else { "off" }
        ),
    );
    let mut samplers = SamplerSet::new();
    install_default_samplers(&plan, &interp, &mut samplers, tc.batch_size, seed);
    let mut hook = knowledge.then(|| {
        let mut state = CurriculumState::new(config.initial_working_set, triples_used);
        state.rules_only_after = config.rules_only_after;
        CurriculumHook {
            state,
            dataset: "Triples".into(),
            rows_per_unit: CLASSES,
            symbol: "digit".into(),
            column: 0,
            sort: "Image".into(),
            labeled_axioms: vec!["labeled".into()],
        }
    });
    let test = TestSet {
        symbol: "digit".into(),
        rows: data.test_images.clone(),
        labels: data.test_labels.clone(),
    };
    let report = train(&mut plan, &mut interp, &mut samplers, &tc, hook.as_mut(), Some(&test))?;
    Ok(MnistRun {
        seed,
        accuracy: report.final_accuracy.unwrap_or(f64::NAN),
        triples: triples_used,
        report,
    })
}

/// Every seed of the configured variant, with per-seed accuracy rows plus
/// mean and std.
pub fn run_mnist_experiment(config: &ExperimentConfig, data: &MnistData) -> Result<ResultsTable> {
    config.validate()?;
    let mut table = ResultsTable::default();
    let mut triples_label = String::from("-");
    for &seed in &config.seeds {
        let run = run_mnist_seed(data, config, seed)?;
        if config.knowledge && run.triples > 0 {
            triples_label = run.triples.to_string();
        }
        table.rows.push(ResultRow {
            task: TASK.into(),
            seed: seed.to_string(),
            ntr: config.ntr.to_string(),
            triples: triples_label.clone(),
            knowledge: config.knowledge,
            split: "test".into(),
            metric: "accuracy".into(),
            value: run.accuracy,
        });
    }
    table.add_aggregates();
    let mean = table
        .aggregate("mean", config.knowledge, "test", "accuracy")
        .unwrap_or(f64::NAN);
    let std = table
        .aggregate("std", config.knowledge, "test", "accuracy")
        .unwrap_or(f64::NAN);
    table.summarize(format!(
        "{TASK} ntr={} triples={} knowledge={} seeds={} iterations={}: accuracy {:.2} ± {:.2}",
        config.ntr,
        triples_label,
        if config.knowledge { "on" } else { "off" },
        config.seeds.len(),
        config.train.iterations,
        mean * 100.0,
        std * 100.0
    ));
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_disjoint_and_balanced() {
        let labels: Vec<usize> = (0..300).map(|i| (i * 7) % 10).collect();
        let s = split_pool(&labels, Amount::PerClass(2), 5).unwrap();
        assert_eq!(s.labeled.len(), 20);
        assert_eq!(s.labeled.len() + s.unlabeled.len(), 300);
        assert!(s.labeled.iter().all(|i| !s.unlabeled.contains(i)));
        let mut counts = [0; 10];
        s.labeled.iter().for_each(|&i| counts[labels[i]] += 1);
        assert_eq!(counts, [2; 10]);
        assert_ne!(s, split_pool(&labels, Amount::PerClass(2), 6).unwrap());
        assert!(split_pool(&labels, Amount::PerClass(31), 0).is_err());
    }

    #[test]
    fn theories_check() {
        assert!(load_theory(&mnist_theory(true)).is_ok());
        assert_eq!(load_theory(&mnist_theory(false)).unwrap().axioms.len(), 1);
    }

    #[test]
    fn missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_mnist(dir.path()), Err(ExperimentError::DataMissing(_))));
    }
}
