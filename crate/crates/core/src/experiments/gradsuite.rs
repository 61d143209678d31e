use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compiler::{compile, evaluate_with, CompileError};
use crate::interp::{bind_theory, BindOptions, DataSources, ExternRegistry, Mlp, ParamCache, SamplerSet};
use crate::logic::{check_theory, load_theory, Activation, Axiom};
use crate::oracle::FormulaGen;
use crate::semantics::softselect_nodes;
use crate::tensor::{grad_check, GradCheckReport, Graph, NodeId, ParamStore, Tensor, TensorError};

use super::{ExperimentError, Result};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    Primitive,
    Mlp,
    Plan,
}

impl CaseKind {
    pub fn name(self) -> &'static str {
        match self {
            CaseKind::Primitive => "primitive",
            CaseKind::Mlp => "mlp",
            CaseKind::Plan => "plan",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCase {
    pub trial: usize,
    pub kind: CaseKind,
    /// Short description of the graph.
    pub label: String,
    pub report: GradCheckReport,
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized")
}

/// A random chain of elementwise, broadcasting and indexing ops on a
/// `[2, 3]` parameter, closed by a random reduction.
fn primitive_case(rng: &mut ChaCha8Rng) -> std::result::Result<(String, GradCheckReport), TensorError> {
    let mut store = ParamStore::new();
    let a = store.add("a", uniform(&[2, 3], rng));
    let v = store.add("v", uniform(&[3], rng));
    let b = store.add("b", uniform(&[3, 2], rng));
    let ops: Vec<usize> = (0..rng.gen_range(2..6)).map(|_| rng.gen_range(0..11)).collect();
    let tail = rng.gen_range(0..4);
    let names = [
        "sigmoid",
        "tanh",
        "softplus",
        "log_sigmoid",
        "exp∘tanh",
        "neg",
        "add v",
        "mul v",
        "sub v",
        "div exp v",
        "gather",
    ];
    let mut label: Vec<&str> = ops.iter().map(|&k| names[k]).collect();
    label.push(["sum", "logsumexp", "matmul b", "max"][tail]);
    let f = |g: &mut Graph, s: &ParamStore| -> std::result::Result<NodeId, TensorError> {
        let mut x = g.param(s, a);
        let vn = g.param(s, v);
        for &k in &ops {
            x = match k {
                0 => g.sigmoid(x)?,
                1 => g.tanh(x)?,
                2 => g.softplus(x)?,
                3 => g.log_sigmoid(x)?,
                4 => {
                    let t = g.tanh(x)?;
                    g.exp(t)?
                }
                5 => g.neg(x)?,
                6 => g.add(x, vn)?,
                7 => g.mul(x, vn)?,
                8 => g.sub(vn, x)?,
                9 => {
                    let e = g.exp(vn)?;
                    g.div(x, e)?
                }
                _ => {
                    let rows = g.shape(x)[0];
                    let idx: Vec<usize> = (0..3).map(|i| (i * 7 + 1) % rows).collect();
                    g.gather(x, &idx)?
                }
            };
        }
        let y = match tail {
            0 => x,
            1 => g.logsumexp(x, 1)?,
            2 => {
                let bn = g.param(s, b);
                g.matmul(x, bn)?
            }
            _ => g.max(x, 1)?,
        };
        g.sum_all(y)
    };
    let report = grad_check(&mut store, f, STEP, TOLERANCE)?;
    Ok((label.join(", "), report))
}

/// A random small MLP on a fixed input, read out through softselect.
fn mlp_case(rng: &mut ChaCha8Rng) -> std::result::Result<(String, GradCheckReport), TensorError> {
    let mut store = ParamStore::new();
    let depth = rng.gen_range(1..4);
    let mut widths = vec![rng.gen_range(2..6)];
    widths.extend((0..depth).map(|_| rng.gen_range(2..6)));
    let act = *[Activation::Sigmoid, Activation::Tanh].choose(rng).unwrap();
    let mlp = Mlp::new(&mut store, "m", widths.clone(), act, rng);
    // move the zero biases off their initial value
    for p in store.iter_mut() {
        if p.name.contains(".b") {
            p.value = p
                .value
                .map(|_| 0.0)
                .zip_with(&uniform(p.value.shape(), rng), |_, r| 0.3 * r)
                .expect("same shape");
        }
    }
    let batch = rng.gen_range(1..5);
    let input = uniform(&[batch, widths[0]], rng);
    let picks: Vec<usize> = (0..batch).map(|_| rng.gen_range(0..*widths.last().unwrap())).collect();
    let f = |g: &mut Graph, s: &ParamStore| -> std::result::Result<NodeId, TensorError> {
        let x = g.constant(input.clone());
        let out = mlp.forward(g, s, &mut ParamCache::new(), x)?;
        let sel = softselect_nodes(g, out).map_err(|e| TensorError::Builder(e.to_string()))?;
        let chosen = g.take_last(sel, picks.clone())?;
        g.sum_all(chosen)
    };
    let w: Vec<String> = widths.iter().map(usize::to_string).collect();
    let report = grad_check(&mut store, f, STEP, TOLERANCE)?;
    Ok((format!("mlp {} act {}", w.join("-"), act.name()), report))
}

const PLAN_SIGNATURE: &str = "sort D card 3 dim 3;\nconst a : D learned;\nconst b : D learned;\n\
     rel P : D mlp 4 act tanh;\nrel R : D x D mlp 3 act sigmoid;\nfunc f : D -> D mlp 3 act tanh;\n";

/// A compiled plan over random formulas with learned constants, embedding
/// tables and neural symbols.
fn plan_case(rng: &mut ChaCha8Rng) -> Result<(String, GradCheckReport)> {
    let sig = load_theory(PLAN_SIGNATURE).map_err(|e| ExperimentError::Logic(format!("{e:?}")))?;
    let gen = FormulaGen::new(&sig);
    let mut t = sig.theory().clone();
    for i in 0..rng.gen_range(1..4) {
        t.axioms.push(Axiom {
            name: format!("ax{i}"),
            formula: gen.formula(rng.gen_range(1..=3), rng),
        });
    }
    let checked = check_theory(&t).map_err(|e| ExperimentError::Logic(format!("{e:?}")))?;
    let options = BindOptions {
        seed: rng.gen(),
        ..BindOptions::default()
    };
    let interp = bind_theory(&checked, &ExternRegistry::new(), &DataSources::new(), options)?;
    let plan = compile(&checked, &interp)?;
    let fused = rng.gen_bool(0.5);
    let mut store = interp.store.clone();
    let failure = std::cell::RefCell::new(None);
    let f = |g: &mut Graph, s: &ParamStore| -> std::result::Result<NodeId, TensorError> {
        let mut i = interp.clone();
        i.store = s.clone();
        evaluate_with(&plan, &i, &mut SamplerSet::new(), g, fused)
            .map(|b| b.loss)
            .map_err(|e| {
                let msg = e.to_string();
                *failure.borrow_mut() = Some(e);
                TensorError::Builder(msg)
            })
    };
    let report = grad_check(&mut store, f, STEP, TOLERANCE);
    if let Some(e) = failure.into_inner() {
        return Err(e.into());
    }
    let report = report.map_err(CompileError::from)?;
    let axioms: Vec<String> = checked.axioms.iter().map(|a| a.formula.to_string()).collect();
    Ok((
        format!("{} loss: {}", if fused { "fused" } else { "root" }, axioms.join(" ; ")),
        report,
    ))
}

/// Central-difference checks of `trials` random graphs, cycling through
/// primitive chains, MLPs and compiled plans.
pub fn gradcheck_suite(trials: usize, seed: u64) -> Result<Vec<GradCase>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for trial in 0..trials {
        let kind = [CaseKind::Primitive, CaseKind::Mlp, CaseKind::Plan][trial % 3];
        let (label, report) = match kind {
            CaseKind::Primitive => primitive_case(&mut rng).map_err(CompileError::from)?,
            CaseKind::Mlp => mlp_case(&mut rng).map_err(CompileError::from)?,
            CaseKind::Plan => plan_case(&mut rng)?,
        };
        out.push(GradCase {
            trial,
            kind,
            label,
            report,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let cases = gradcheck_suite(6, 11).unwrap();
        for c in &cases {
            assert!(c.report.passed(), "{c:?}");
        }
    }
}
