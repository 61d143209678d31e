use crate::compiler::{compile, evaluate_open, fuse_loss};
use crate::interp::{bind_theory, BindOptions, DataSources, ExternRegistry, SamplerSet};
use crate::logic::{load_theory, Binder, CheckedTheory, Formula};
use crate::semantics::softmax;
use crate::tensor::{Graph, Tensor};
use crate::trainer::{argmax, install_default_samplers, train, TrainConfig};

use super::synth::{gen_synth_relations, SynthConfig, SynthData, Vocabulary};
use super::{run_dir, sign_test, ExperimentConfig, ExperimentError, Result, ResultRow, ResultsTable};

const TASK: &str = "synth-relations";
const SPLITS: [&str; 2] = ["test", "zero_shot"];

/// Rule clause of each constrained predicate, such as
/// `(h_riding -> can_ride(s) & ridable(o) & above(p))`.
fn rule_clauses(v: &Vocabulary) -> Vec<String> {
    v.predicates
        .iter()
        .filter_map(|p| {
            let r = &p.rule;
            let mut conds = Vec::new();
            if let Some(s) = &r.subject {
                conds.push(format!("{s}(s)"));
            }
            if let Some(o) = &r.object {
                conds.push(format!("{o}(o)"));
            }
            if let Some(sp) = r.spatial {
                conds.push(format!("{}(p)", sp.extern_name()));
            }
            (!conds.is_empty()).then(|| format!("(h_{} -> {})", p.name, conds.join(" & ")))
        })
        .collect()
}

/// Theory source of the relationship task. With knowledge, the classifier
/// output is masked by the rule schema inside the softselect.
pub fn relations_theory(v: &Vocabulary, hidden: usize, knowledge: bool) -> String {
    let (np, nc) = (v.predicates.len(), v.classes.len());
    let mut s = format!(
        "sort Pair dim {};\nsort Pred card {np};\nsort Cls card {nc};\n",
        v.feature_width()
    );
    for d in ["Train", "Test", "ZeroShot"] {
        s += &format!("data {d} : Pair x Pred x Cls x Cls;\n");
    }
    s += &format!("rel vrd : Pair out {np} mlp {hidden} act relu;\n");
    if knowledge {
        for sp in ["above", "below", "left_of", "right_of"] {
            s += &format!("rel {sp} : Pair extern {sp};\n");
        }
        for (name, members) in &v.class_sets {
            let m: Vec<String> = members.iter().map(usize::to_string).collect();
            s += &format!("boolvec {name} : Cls = {{{}}};\n", m.join(", "));
        }
        for (i, p) in v.predicates.iter().enumerate() {
            let r = &p.rule;
            if r.subject.is_some() || r.object.is_some() || r.spatial.is_some() {
                s += &format!("boolvec h_{} : Pred = {{{i}}};\n", p.name);
            }
        }
        let clauses = rule_clauses(v).join(" & ");
        s += &format!("axiom knowledge : forall (p, y, s, o) : Train . pi[y](vrd(p) & {clauses});\n");
    } else {
        s += "axiom baseline : forall (p, y, s, o) : Train . pi[y](vrd(p));\n";
    }
    s
}

/// Per-split scores of one trained variant.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitScores {
    pub accuracy: f64,
    /// `(k, R@k)` pairs.
    pub recall: Vec<(usize, f64)>,
    /// Mean softmax mass per pair on predicates its rule excludes.
    pub masked_mass: f64,
    /// Largest such mass over the pairs.
    pub masked_mass_max: f64,
    /// Share of pairs whose top predicate breaks its rule.
    pub violation_rate: f64,
}

/// Accuracy, recall at each `k` and rule-violating mass of `[n, P]` output
/// logits for `pairs`.
pub fn score(v: &Vocabulary, logits: &Tensor, pairs: &[super::BoxPair], ks: &[usize]) -> SplitScores {
    let np = logits.shape()[1];
    let mut correct = 0usize;
    let mut hits = vec![0usize; ks.len()];
    let mut mass_sum = 0.0;
    let mut mass_max: f64 = 0.0;
    let mut violations = 0usize;
    for (row, pair) in logits.data().chunks_exact(np).zip(pairs) {
        let top = argmax(row);
        if top == pair.predicate {
            correct += 1;
        }
        if !v.rule_holds(top, pair) {
            violations += 1;
        }
        let mine = row[pair.predicate];
        // rank with ties resolved toward smaller indices, as argmax does
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(i, &x)| x > mine || (x == mine && i < pair.predicate))
            .count();
        for (h, &k) in hits.iter_mut().zip(ks) {
            if rank < k {
                *h += 1;
            }
        }
        let probs = softmax(row);
        let mass: f64 = (0..np).filter(|&c| !v.rule_holds(c, pair)).map(|c| probs[c]).sum();
        mass_sum += mass;
        mass_max = mass_max.max(mass);
    }
    let n = pairs.len().max(1) as f64;
    SplitScores {
        accuracy: correct as f64 / n,
        recall: ks.iter().zip(hits).map(|(&k, h)| (k, h as f64 / n)).collect(),
        masked_mass: mass_sum / n,
        masked_mass_max: mass_max,
        violation_rate: violations as f64 / n,
    }
}

fn dataset_rows(pairs: &[super::BoxPair], offset: usize) -> Vec<Vec<usize>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| vec![offset + i, p.predicate, p.subject_class, p.object_class])
        .collect()
}

/// Train one variant on `data` and score it on the test and zero-shot splits.
pub fn run_variant(
    synth: &SynthConfig,
    data: &SynthData,
    knowledge: bool,
    train_config: &TrainConfig,
) -> Result<Vec<SplitScores>> {
    let v = &synth.vocab;
    let theory = load_theory(&relations_theory(v, 64, knowledge))
        .map_err(|e| ExperimentError::Logic(e.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")))?;
    let (n_train, n_test) = (data.train.len(), data.test.len());
    let sources = DataSources::new()
        .table("Pair", data.features.clone())
        .dataset("Train", dataset_rows(&data.train, 0))
        .dataset("Test", dataset_rows(&data.test, n_train))
        .dataset("ZeroShot", dataset_rows(&data.zero_shot, n_train + n_test));
    let options = BindOptions {
        seed: train_config.seed,
        ..BindOptions::default()
    };
    let mut interp = bind_theory(&theory, &ExternRegistry::with_defaults(), &sources, options)?;
    let mut plan = fuse_loss(compile(&theory, &interp)?);
    let mut samplers = SamplerSet::new();
    install_default_samplers(
        &plan,
        &interp,
        &mut samplers,
        train_config.batch_size,
        train_config.seed,
    );
    train(&mut plan, &mut interp, &mut samplers, train_config, None, None)?;

    let ks = [1, 3, 5, v.predicates.len()];
    let mut out = Vec::new();
    for (domain, pairs) in [("Test", &data.test), ("ZeroShot", &data.zero_shot)] {
        let logits = open_logits(&theory, &interp, domain)?;
        out.push(score(v, &logits, pairs, &ks));
    }
    Ok(out)
}

/// Class logits of the axiom's selected vector for every row of `domain`.
fn open_logits(theory: &CheckedTheory, interp: &crate::interp::Interpretation, domain: &str) -> Result<Tensor> {
    let Formula::Forall(binder, body) = &theory.axioms[0].formula else {
        return Err(ExperimentError::Logic("expected a quantified axiom".into()));
    };
    let Formula::SoftSelect { vector, .. } = body.as_ref() else {
        return Err(ExperimentError::Logic("expected a softselect body".into()));
    };
    let b = Binder {
        vars: binder.vars.clone(),
        domain: domain.to_string(),
    };
    let mut g = Graph::new();
    let node = evaluate_open(theory, interp, &mut SamplerSet::new(), &mut g, &b, vector)?;
    Ok(g.value(node).clone())
}

/// Baseline and knowledge-masked classifiers on the synthetic task for every
/// seed, with per-seed rows, mean and std, and a sign test on zero-shot
/// accuracy.
pub fn run_relations_experiment(config: &ExperimentConfig) -> Result<ResultsTable> {
    config.validate()?;
    let synth = SynthConfig {
        regime: config.regime,
        noise: config.noise,
        appearance_noise: config.appearance_noise,
        ..SynthConfig::default()
    };
    let mut table = ResultsTable::default();
    let ntr = super::train_label(config.regime);
    for &seed in &config.seeds {
        let data = gen_synth_relations(&synth, seed)?;
        for knowledge in [false, true] {
            let mut tc = config.train.clone();
            tc.seed = seed;
            tc.curriculum = false;
            tc.out_dir = run_dir(
                config.train.out_dir.as_deref(),
                format!("{TASK}/k{}_seed{seed}", if knowledge { "on" } else { "off" }),
            );
            let scores = run_variant(&synth, &data, knowledge, &tc)?;
            for (split, s) in SPLITS.iter().zip(&scores) {
                let mut push = |metric: String, value: f64| {
                    table.rows.push(ResultRow {
                        task: TASK.into(),
                        seed: seed.to_string(),
                        ntr: ntr.clone(),
                        triples: "-".into(),
                        knowledge,
                        split: split.to_string(),
                        metric,
                        value,
                    })
                };
                push("accuracy".into(), s.accuracy);
                for &(k, r) in &s.recall {
                    push(format!("recall@{k}"), r);
                }
                push("masked_mass".into(), s.masked_mass);
                push("masked_mass_max".into(), s.masked_mass_max);
                push("violation_rate".into(), s.violation_rate);
            }
        }
    }
    table.add_aggregates();
    let base = table.per_seed(false, "zero_shot", "accuracy");
    let know = table.per_seed(true, "zero_shot", "accuracy");
    let st = sign_test(&base, &know);
    table.rows.push(ResultRow {
        task: TASK.into(),
        seed: "all".into(),
        ntr: ntr.clone(),
        triples: "-".into(),
        knowledge: true,
        split: "zero_shot".into(),
        metric: "sign_test_p".into(),
        value: st.p_value,
    });
    for split in SPLITS {
        let get = |k, s| table.aggregate(s, k, split, "accuracy").unwrap_or(f64::NAN) * 100.0;
        table.summarize(format!(
            "{TASK} {split}: baseline {:.1} ± {:.1}, knowledge {:.1} ± {:.1}",
            get(false, "mean"),
            get(false, "std"),
            get(true, "mean"),
            get(true, "std"),
        ));
    }
    table.summarize(format!(
        "{TASK} zero_shot sign test: {} wins, {} losses, {} ties, p = {:.4}",
        st.wins, st.losses, st.ties, st.p_value
    ));
    Ok(table)
}
