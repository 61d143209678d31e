//! Classical reference semantics on finite crisp models, and the checks that
//! compare them with compiled evaluation.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compiler::{compile, evaluate, evaluate_with, fuse_loss, CompileError, Plan};
use crate::interp::{
    bind_theory, BindOptions, DataSources, EqualityMode, ExternRegistry, InterpError, Interpretation, Sampler,
    SamplerSet, Strategy,
};
use crate::logic::{
    check_theory, desugar, ArithOp, Axiom, Binder, Binding, CheckedTheory, Formula, SortRepr, Term, Theory,
};
use crate::semantics::{loss, BIG};
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("sort mismatch: {0}")]
    SortMismatch(String),
    #[error("not expressible in a crisp model: {0}")]
    Unsupported(String),
    #[error("search space of {0} models exceeds 2^24")]
    SearchSpaceTooLarge(u128),
    #[error("theory does not check: {0}")]
    Logic(String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Interp(#[from] InterpError),
}

type Result<T> = std::result::Result<T, OracleError>;

/// Table of a function: argument sorts, result sort and one output per
/// argument tuple (row-major, first argument slowest).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncTable {
    pub args: Vec<String>,
    pub result: String,
    pub values: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelTable {
    pub args: Vec<String>,
    pub values: Vec<bool>,
}

/// A finite first-order structure; elements of a sort of size `n` are
/// `0..n` and equality is identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrispModel {
    pub sizes: BTreeMap<String, usize>,
    pub consts: BTreeMap<String, usize>,
    pub funcs: BTreeMap<String, FuncTable>,
    pub rels: BTreeMap<String, RelTable>,
}

impl fmt::Display for CrispModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (s, n) in &self.sizes {
            writeln!(f, "|{s}| = {n}")?;
        }
        for (c, v) in &self.consts {
            writeln!(f, "{c} = {v}")?;
        }
        for (name, t) in &self.funcs {
            writeln!(f, "{name} = {:?}", t.values)?;
        }
        for (name, t) in &self.rels {
            let bits: String = t.values.iter().map(|&b| if b { '1' } else { '0' }).collect();
            writeln!(f, "{name} = {bits}")?;
        }
        Ok(())
    }
}

impl CrispModel {
    fn size(&self, sort: &str) -> Result<usize> {
        self.sizes
            .get(sort)
            .copied()
            .ok_or_else(|| OracleError::Unsupported(format!("quantifier over `{sort}`")))
    }

    fn cell(&self, args: &[String], vals: &[i64]) -> Result<usize> {
        let mut idx = 0usize;
        for (s, &v) in args.iter().zip(vals) {
            let n = self.size(s)?;
            if v < 0 || v as usize >= n {
                return Err(OracleError::SortMismatch(format!("{v} is not an element of {s}")));
            }
            idx = idx * n + v as usize;
        }
        Ok(idx)
    }

    /// Uniformly random tables over the given sort sizes.
    pub fn random(theory: &Theory, sizes: &BTreeMap<String, usize>, rng: &mut impl Rng) -> Result<CrispModel> {
        let mut m = CrispModel {
            sizes: sizes.clone(),
            consts: BTreeMap::new(),
            funcs: BTreeMap::new(),
            rels: BTreeMap::new(),
        };
        for c in &theory.consts {
            let n = m.size(&c.sort)?;
            m.consts.insert(c.name.clone(), rng.gen_range(0..n));
        }
        for f in &theory.funcs {
            let cells = cells(&m, &f.args)?;
            let n = m.size(&f.result)?;
            let values = (0..cells).map(|_| rng.gen_range(0..n)).collect();
            m.funcs.insert(
                f.name.clone(),
                FuncTable {
                    args: f.args.clone(),
                    result: f.result.clone(),
                    values,
                },
            );
        }
        for r in &theory.rels {
            if r.out.is_some() {
                return Err(OracleError::Unsupported(format!("vector relation `{}`", r.name)));
            }
            let cells = cells(&m, &r.args)?;
            let values = (0..cells).map(|_| rng.gen_bool(0.5)).collect();
            m.rels.insert(
                r.name.clone(),
                RelTable {
                    args: r.args.clone(),
                    values,
                },
            );
        }
        Ok(m)
    }
}

fn cells(m: &CrispModel, args: &[String]) -> Result<usize> {
    args.iter().map(|s| m.size(s)).product()
}

/// Sort sizes given by the declared cardinalities.
pub fn declared_sizes(theory: &Theory) -> Result<BTreeMap<String, usize>> {
    theory
        .sorts
        .iter()
        .map(|s| {
            s.card()
                .map(|n| (s.name.clone(), n))
                .ok_or_else(|| OracleError::Unsupported(format!("sort `{}` has no cardinality", s.name)))
        })
        .collect()
}

/// Variable assignment, innermost binding last.
pub type Env = Vec<(String, i64)>;

fn eval_term(m: &CrispModel, t: &Term, env: &Env) -> Result<i64> {
    match t {
        Term::Var { name, .. } => env
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| OracleError::SortMismatch(format!("unbound variable `{name}`"))),
        Term::Const(c) => m
            .consts
            .get(c)
            .map(|&v| v as i64)
            .ok_or_else(|| OracleError::SortMismatch(format!("no value for constant `{c}`"))),
        Term::Int(v) => Ok(*v),
        Term::Arith(op, a, b) => {
            let (x, y) = (eval_term(m, a, env)?, eval_term(m, b, env)?);
            match op {
                ArithOp::Add => Ok(x + y),
                ArithOp::Mod if y > 0 => Ok(x.rem_euclid(y)),
                ArithOp::Mod => Err(OracleError::SortMismatch(format!("mod by {y}"))),
            }
        }
        Term::App(f, args) => {
            let table = m
                .funcs
                .get(f)
                .ok_or_else(|| OracleError::SortMismatch(format!("no table for `{f}`")))?;
            let vals = args.iter().map(|a| eval_term(m, a, env)).collect::<Result<Vec<_>>>()?;
            Ok(table.values[m.cell(&table.args, &vals)?] as i64)
        }
    }
}

/// Classical truth of a formula under `env`; quantifiers range over the
/// whole sort.
pub fn tarski_eval(m: &CrispModel, f: &Formula, env: &Env) -> Result<bool> {
    match f {
        Formula::Rel { name, args } => {
            let table = m
                .rels
                .get(name)
                .ok_or_else(|| OracleError::SortMismatch(format!("no table for `{name}`")))?;
            let vals = args.iter().map(|a| eval_term(m, a, env)).collect::<Result<Vec<_>>>()?;
            Ok(table.values[m.cell(&table.args, &vals)?])
        }
        Formula::Equals(a, b) => Ok(eval_term(m, a, env)? == eval_term(m, b, env)?),
        Formula::Not(g) => Ok(!tarski_eval(m, g, env)?),
        Formula::And(fs) => {
            for g in fs {
                if !tarski_eval(m, g, env)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(fs) => {
            for g in fs {
                if tarski_eval(m, g, env)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Implies(a, b) => Ok(!tarski_eval(m, a, env)? || tarski_eval(m, b, env)?),
        Formula::Forall(binder, body) | Formula::Exists(binder, body) => {
            let universal = matches!(f, Formula::Forall(..));
            if binder.vars.len() != 1 {
                return Err(OracleError::Unsupported(format!(
                    "dataset quantifier over `{}`",
                    binder.domain
                )));
            }
            let n = m.size(&binder.domain)?;
            let mut inner = env.clone();
            inner.push((binder.vars[0].clone(), 0));
            for v in 0..n {
                inner.last_mut().unwrap().1 = v as i64;
                if tarski_eval(m, body, &inner)? != universal {
                    return Ok(!universal);
                }
            }
            Ok(universal)
        }
        Formula::Bool(b) => Ok(*b),
        Formula::BoolVec(_) | Formula::SoftSelect { .. } | Formula::BoolVecAt { .. } => {
            Err(OracleError::Unsupported(f.to_string()))
        }
    }
}

/// Every model of the signature over the given sizes, in a fixed order.
pub fn enumerate_models(theory: &Theory, sizes: &BTreeMap<String, usize>) -> Result<impl Iterator<Item = CrispModel>> {
    let base = CrispModel {
        sizes: sizes.clone(),
        consts: BTreeMap::new(),
        funcs: BTreeMap::new(),
        rels: BTreeMap::new(),
    };
    // One digit per table cell with its radix.
    enum Slot {
        Const(String),
        Func(String, usize),
        Rel(String, usize),
    }
    let mut slots = Vec::new();
    let mut radices = Vec::new();
    for c in &theory.consts {
        slots.push(Slot::Const(c.name.clone()));
        radices.push(base.size(&c.sort)?);
    }
    for f in &theory.funcs {
        let n = base.size(&f.result)?;
        for i in 0..cells(&base, &f.args)? {
            slots.push(Slot::Func(f.name.clone(), i));
            radices.push(n);
        }
    }
    for r in &theory.rels {
        if r.out.is_some() {
            return Err(OracleError::Unsupported(format!("vector relation `{}`", r.name)));
        }
        for i in 0..cells(&base, &r.args)? {
            slots.push(Slot::Rel(r.name.clone(), i));
            radices.push(2);
        }
    }
    let total = radices
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r as u128))
        .unwrap_or(u128::MAX);
    if total > 1 << 24 {
        return Err(OracleError::SearchSpaceTooLarge(total));
    }
    let mut template = base;
    for f in &theory.funcs {
        let cells = cells(&template, &f.args)?;
        template.funcs.insert(
            f.name.clone(),
            FuncTable {
                args: f.args.clone(),
                result: f.result.clone(),
                values: vec![0; cells],
            },
        );
    }
    for r in &theory.rels {
        let cells = cells(&template, &r.args)?;
        template.rels.insert(
            r.name.clone(),
            RelTable {
                args: r.args.clone(),
                values: vec![false; cells],
            },
        );
    }
    Ok((0..total as u64).map(move |mut code| {
        let mut m = template.clone();
        for (slot, &radix) in slots.iter().zip(&radices) {
            let digit = (code % radix as u64) as usize;
            code /= radix as u64;
            match slot {
                Slot::Const(c) => {
                    m.consts.insert(c.clone(), digit);
                }
                Slot::Func(f, i) => m.funcs.get_mut(f).unwrap().values[*i] = digit,
                Slot::Rel(r, i) => m.rels.get_mut(r).unwrap().values[*i] = digit == 1,
            }
        }
        m
    }))
}

/// The model as a DASL interpretation: sorts become one-hot data rows,
/// relations return `±BIG`, functions return one-hot rows, and equality is
/// crisp. `axioms` replace those of `signature`.
pub fn crisp_interpretation(
    signature: &Theory,
    model: &CrispModel,
    axioms: Vec<Axiom>,
) -> Result<(CheckedTheory, Interpretation)> {
    let mut t = signature.clone();
    t.axioms = axioms;
    t.data.clear();
    let mut sources = DataSources::new();
    for s in &mut t.sorts {
        let n = model.size(&s.name)?;
        s.source = None;
        if s.is_index() {
            s.repr = SortRepr::Index { card: n };
        } else {
            s.repr = SortRepr::Data { dim: n };
            let mut eye = Tensor::zeros(&[n, n]);
            for i in 0..n {
                eye.data_mut()[i * n + i] = 1.0;
            }
            sources.tables.insert(s.name.clone(), eye);
        }
    }
    let index: BTreeMap<String, bool> = t.sorts.iter().map(|s| (s.name.clone(), s.is_index())).collect();
    // Column spans of each argument in an extern's input row.
    let spans = |args: &[String]| -> Vec<(usize, usize, bool)> {
        let mut at = 0;
        args.iter()
            .map(|a| {
                let raw = index[a];
                let w = if raw { 1 } else { model.sizes[a] };
                at += w;
                (at - w, w, raw)
            })
            .collect()
    };
    let decode = |row: &[f64], spans: &[(usize, usize, bool)]| -> Vec<i64> {
        spans
            .iter()
            .map(|&(start, w, raw)| {
                let chunk = &row[start..start + w];
                if raw {
                    chunk[0].round() as i64
                } else {
                    crate::trainer::argmax(chunk) as i64
                }
            })
            .collect()
    };
    let mut reg = ExternRegistry::new();
    for r in &mut t.rels {
        let table = model.rels[&r.name].clone();
        let sp = spans(&r.args);
        let m = model.clone();
        let ext = format!("crisp_{}", r.name);
        reg.register_real(&ext, move |x: &Tensor| {
            let w = x.shape()[1];
            let out: Vec<f64> = x
                .data()
                .chunks_exact(w)
                .map(|row| {
                    let cell = m.cell(&table.args, &decode(row, &sp)).expect("argument in range");
                    if table.values[cell] {
                        BIG
                    } else {
                        -BIG
                    }
                })
                .collect();
            Tensor::new(vec![out.len(), 1], out).unwrap()
        });
        r.binding = Binding::Extern(ext);
    }
    for f in &mut t.funcs {
        let table = model.funcs[&f.name].clone();
        let ext = format!("crisp_{}", f.name);
        let m = model.clone();
        if index[&f.result] {
            reg.register_index(&ext, move |args, _card| {
                table.values[m.cell(&table.args, args).expect("argument in range")] as i64
            });
        } else {
            let sp = spans(&f.args);
            let n = model.sizes[&f.result];
            reg.register_real(&ext, move |x: &Tensor| {
                let w = x.shape()[1];
                let rows = x.shape()[0];
                let mut out = vec![0.0; rows * n];
                for (r, row) in x.data().chunks_exact(w).enumerate() {
                    let cell = m.cell(&table.args, &decode(row, &sp)).expect("argument in range");
                    out[r * n + table.values[cell]] = 1.0;
                }
                Tensor::new(vec![rows, n], out).unwrap()
            });
        }
        f.binding = Binding::Extern(ext);
    }
    for c in &mut t.consts {
        c.learned = false;
        sources.constants.insert(c.name.clone(), model.consts[&c.name]);
    }
    let checked = check_theory(&t).map_err(|es| OracleError::Logic(format!("{es:?}")))?;
    let options = BindOptions {
        big: BIG,
        equality: EqualityMode::Crisp,
        ..BindOptions::default()
    };
    let interp = bind_theory(&checked, &reg, &sources, options)?;
    Ok((checked, interp))
}

/// Number of atom instances evaluated for `f` over full domains.
fn ground_atoms(m: &CrispModel, f: &Formula) -> usize {
    match f {
        Formula::Rel { .. }
        | Formula::Equals(..)
        | Formula::Bool(_)
        | Formula::BoolVec(_)
        | Formula::BoolVecAt { .. } => 1,
        Formula::Not(g) => ground_atoms(m, g),
        Formula::SoftSelect { vector, .. } => ground_atoms(m, vector),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().map(|g| ground_atoms(m, g)).sum(),
        Formula::Implies(a, b) => ground_atoms(m, a) + ground_atoms(m, b),
        Formula::Forall(b, g) | Formula::Exists(b, g) => {
            m.sizes.get(&b.domain).copied().unwrap_or(1) * ground_atoms(m, g)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SatisfactionReport {
    /// Classical verdict per axiom.
    pub per_axiom: Vec<(String, bool)>,
    pub overall: bool,
    /// Fused DASL loss of the crisp interpretation.
    pub loss: f64,
    pub theta: f64,
    /// `loss <= theta`.
    pub satisfied_at_theta: bool,
}

/// Compare classical satisfaction of `axioms` in `model` with the DASL
/// loss of its crisp encoding. The default threshold is
/// `n · L(σ(BIG))` for `n` ground atom instances.
pub fn satisfies_at_threshold(
    signature: &Theory,
    model: &CrispModel,
    axioms: &[Axiom],
    theta: Option<f64>,
) -> Result<SatisfactionReport> {
    let per_axiom = axioms
        .iter()
        .map(|a| Ok((a.name.clone(), tarski_eval(model, &a.formula, &Env::new())?)))
        .collect::<Result<Vec<_>>>()?;
    let overall = per_axiom.iter().all(|(_, v)| *v);
    let (t, interp) = crisp_interpretation(signature, model, axioms.to_vec())?;
    let plan = fuse_loss(compile(&t, &interp)?);
    let mut g = Graph::new();
    let b = evaluate(&plan, &interp, &mut SamplerSet::new(), &mut g)?;
    let value = g.value(b.loss).item();
    let n: usize = t.axioms.iter().map(|a| ground_atoms(model, &a.formula)).sum();
    let theta = theta.unwrap_or(n as f64 * loss(BIG) * (1.0 + 1e-6));
    Ok(SatisfactionReport {
        per_axiom,
        overall,
        loss: value,
        theta,
        satisfied_at_theta: value <= theta,
    })
}

/// Root logit of the crisp encoding of `model` with a single axiom `f`.
pub fn crisp_logit(signature: &Theory, model: &CrispModel, f: &Formula) -> Result<f64> {
    let ax = Axiom {
        name: "phi".into(),
        formula: f.clone(),
    };
    let (t, interp) = crisp_interpretation(signature, model, vec![ax])?;
    let plan = compile(&t, &interp)?;
    let mut g = Graph::new();
    let b = evaluate_with(&plan, &interp, &mut SamplerSet::new(), &mut g, false)?;
    Ok(g.value(b.root.expect("one axiom")).item())
}

/// Source of the default random-formula signature: one sort `D`, constants
/// `a` and `b`, unary `P`, binary `R` and unary function `f`.
pub fn default_signature(max_size: usize) -> String {
    format!(
        "sort D card {max_size} dim {max_size};\nconst a : D;\nconst b : D;\n\
         rel P : D extern P;\nrel R : D x D extern R;\nfunc f : D -> D extern f;\n"
    )
}

const VARS: [&str; 3] = ["x", "y", "z"];

/// Random closed formulas over a signature.
pub struct FormulaGen<'a> {
    theory: &'a Theory,
}

impl<'a> FormulaGen<'a> {
    pub fn new(theory: &'a Theory) -> Self {
        Self { theory }
    }

    /// A closed formula of depth at most `depth`.
    pub fn formula(&self, depth: usize, rng: &mut impl Rng) -> Formula {
        self.gen(depth, &mut Vec::new(), rng)
    }

    fn gen(&self, depth: usize, scope: &mut Vec<(String, String)>, rng: &mut impl Rng) -> Formula {
        if depth == 0 || rng.gen_bool(0.2) {
            return self.atom(scope, rng);
        }
        match rng.gen_range(0..6) {
            0 => Formula::not(self.gen(depth - 1, scope, rng)),
            1 => Formula::And(vec![self.gen(depth - 1, scope, rng), self.gen(depth - 1, scope, rng)]),
            2 => Formula::Or(vec![self.gen(depth - 1, scope, rng), self.gen(depth - 1, scope, rng)]),
            3 => Formula::implies(self.gen(depth - 1, scope, rng), self.gen(depth - 1, scope, rng)),
            k => {
                let sorts: Vec<&String> = self.theory.sorts.iter().map(|s| &s.name).collect();
                let sort = (*sorts.choose(rng).expect("signature has a sort")).clone();
                let var = VARS.choose(rng).unwrap().to_string();
                scope.push((var.clone(), sort.clone()));
                let body = self.gen(depth - 1, scope, rng);
                scope.pop();
                let binder = Binder {
                    vars: vec![var],
                    domain: sort,
                };
                if k == 4 {
                    Formula::Forall(binder, Box::new(body))
                } else {
                    Formula::Exists(binder, Box::new(body))
                }
            }
        }
    }

    fn atom(&self, scope: &[(String, String)], rng: &mut impl Rng) -> Formula {
        let rels: Vec<_> = self.theory.rels.iter().filter(|r| r.out.is_none()).collect();
        let n = rels.len() + self.theory.sorts.len();
        if n > 0 {
            for _ in 0..8 {
                let k = rng.gen_range(0..n);
                let f = if k < rels.len() {
                    let r = rels[k];
                    r.args
                        .iter()
                        .map(|s| self.term(s, scope, 2, rng))
                        .collect::<Option<Vec<_>>>()
                        .map(|args| Formula::rel(&r.name, args))
                } else {
                    let s = &self.theory.sorts[k - rels.len()].name;
                    match (self.term(s, scope, 2, rng), self.term(s, scope, 2, rng)) {
                        (Some(a), Some(b)) => Some(Formula::Equals(a, b)),
                        _ => None,
                    }
                };
                if let Some(f) = f {
                    return f;
                }
            }
        }
        Formula::Bool(rng.gen_bool(0.5))
    }

    fn term(&self, sort: &str, scope: &[(String, String)], budget: usize, rng: &mut impl Rng) -> Option<Term> {
        let mut options: Vec<Term> = Vec::new();
        // Innermost binding of each name only.
        for (i, (v, s)) in scope.iter().enumerate() {
            if s == sort && !scope[i + 1..].iter().any(|(w, _)| w == v) {
                options.push(Term::var(v));
            }
        }
        options.extend(
            self.theory
                .consts
                .iter()
                .filter(|c| c.sort == sort)
                .map(|c| Term::Const(c.name.clone())),
        );
        let funcs: Vec<_> = self.theory.funcs.iter().filter(|f| f.result == sort).collect();
        if budget > 0 && !funcs.is_empty() && (options.is_empty() || rng.gen_bool(0.25)) {
            let f = funcs.choose(rng).unwrap();
            let args = f
                .args
                .iter()
                .map(|s| self.term(s, scope, budget - 1, rng))
                .collect::<Option<Vec<_>>>();
            if let Some(args) = args {
                return Some(Term::App(f.name.clone(), args));
            }
        }
        options.choose(rng).cloned()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AgreementReport {
    pub trials: usize,
    pub agreements: usize,
    /// One line per trial.
    pub transcript: Vec<String>,
    /// Model and formula of every disagreement.
    pub counterexamples: Vec<String>,
}

impl AgreementReport {
    pub fn passed(&self) -> bool {
        self.agreements == self.trials
    }
}

/// Random (model, formula) pairs: the classical verdict, the verdict on the
/// desugared formula, the sign of the compiled crisp logit and the loss
/// threshold verdict must all coincide.
pub fn agreement_suite(signature: &CheckedTheory, depth: usize, trials: usize, seed: u64) -> Result<AgreementReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_sizes = declared_sizes(signature)?;
    let gen = FormulaGen::new(signature);
    let mut report = AgreementReport {
        trials,
        ..AgreementReport::default()
    };
    for trial in 0..trials {
        let sizes: BTreeMap<String, usize> = max_sizes
            .iter()
            .map(|(s, &n)| {
                let fixed = signature.sort(s).is_some_and(|d| d.is_index());
                (s.clone(), if fixed { n } else { rng.gen_range(1..=n.max(1)) })
            })
            .collect();
        let model = CrispModel::random(signature, &sizes, &mut rng)?;
        let d = rng.gen_range(0..=depth);
        let raw = gen.formula(d, &mut rng);
        // Round-trip through the checker so variables carry their sorts.
        let mut t = signature.theory().clone();
        t.axioms = vec![Axiom {
            name: "phi".into(),
            formula: raw,
        }];
        let checked = check_theory(&t).map_err(|es| OracleError::Logic(format!("{es:?}")))?;
        let f = checked.axioms[0].formula.clone();
        let classical = tarski_eval(&model, &f, &Env::new())?;
        let sugar_free = tarski_eval(&model, &desugar(&f), &Env::new())?;
        let logit = crisp_logit(signature, &model, &f)?;
        let sat = satisfies_at_threshold(signature, &model, &checked.axioms, None)?;
        let ok = classical == sugar_free && (logit > 0.0) == classical && sat.satisfied_at_theta == classical;
        report.transcript.push(format!(
            "trial {trial}: depth {d} sizes {:?} tarski {classical} logit {logit:.6} loss {:.3e} {}",
            sizes.values().collect::<Vec<_>>(),
            sat.loss,
            if ok { "ok" } else { "MISMATCH" }
        ));
        if ok {
            report.agreements += 1;
        } else {
            report.counterexamples.push(format!(
                "formula: {f}\nmodel:\n{model}tarski {classical}, desugared {sugar_free}, logit {logit}, loss {} (theta {})",
                sat.loss, sat.theta
            ));
        }
    }
    Ok(report)
}

/// Largest relative deviation between the fused loss over all of `domain`
/// and the sum of fused losses over a random partition of it into `k`
/// batches, over `partitions` random partitions.
pub fn partition_loss_check(
    plan: &Plan,
    interp: &Interpretation,
    domain: &str,
    k: usize,
    partitions: usize,
    seed: u64,
) -> Result<f64> {
    let plan = fuse_loss(plan.clone());
    let n = interp
        .domain_size(domain)
        .ok_or_else(|| OracleError::SortMismatch(format!("unknown domain `{domain}`")))?;
    if k == 0 || k > n {
        return Err(OracleError::SortMismatch(format!(
            "cannot split {n} elements into {k} batches"
        )));
    }
    let loss_on = |ids: Vec<usize>| -> Result<f64> {
        let mut s = SamplerSet::new();
        s.insert(domain, Sampler::new(Strategy::Fixed(ids), n, 0));
        let mut g = Graph::new();
        let b = evaluate(&plan, interp, &mut s, &mut g)?;
        Ok(g.value(b.loss).item())
    };
    let full = loss_on((0..n).collect())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..partitions {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut total = 0.0;
        for j in 0..k {
            let mut batch = perm[j * n / k..(j + 1) * n / k].to_vec();
            batch.sort_unstable();
            total += loss_on(batch)?;
        }
        let dev = (total - full).abs() / full.abs().max(f64::MIN_POSITIVE);
        worst = worst.max(dev);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{load_theory, parse_formula};

    fn sig() -> CheckedTheory {
        load_theory("sort D card 2 dim 2;\nrel P : D extern P;").unwrap()
    }

    fn model_p(bits: Vec<bool>) -> CrispModel {
        let n = bits.len();
        CrispModel {
            sizes: [("D".to_string(), n)].into(),
            consts: BTreeMap::new(),
            funcs: BTreeMap::new(),
            rels: [(
                "P".to_string(),
                RelTable {
                    args: vec!["D".into()],
                    values: bits,
                },
            )]
            .into(),
        }
    }

    fn checked(t: &CheckedTheory, src: &str) -> Formula {
        let mut th = t.theory().clone();
        th.axioms = vec![Axiom {
            name: "a".into(),
            formula: parse_formula(src).unwrap(),
        }];
        check_theory(&th).unwrap().axioms[0].formula.clone()
    }

    #[test]
    fn tarski_examples() {
        let t = sig();
        let m = model_p(vec![true, false]);
        assert!(!tarski_eval(&m, &checked(&t, "forall x: D . P(x)"), &Env::new()).unwrap());
        assert!(tarski_eval(&m, &checked(&t, "exists x: D . P(x)"), &Env::new()).unwrap());
        assert!(tarski_eval(&m, &checked(&t, "forall x: D . P(x) -> P(x)"), &Env::new()).unwrap());
    }

    #[test]
    fn enumeration_counts() {
        let t = sig();
        let two: BTreeMap<_, _> = [("D".to_string(), 2)].into();
        assert_eq!(enumerate_models(&t, &two).unwrap().count(), 4);
        let c = load_theory("sort D card 3 dim 3;\nconst a : D;").unwrap();
        let three: BTreeMap<_, _> = [("D".to_string(), 3)].into();
        let models: Vec<_> = enumerate_models(&c, &three).unwrap().collect();
        assert_eq!(models.len(), 3);
        let f = load_theory("sort D card 2 dim 2;\nfunc f : D -> D extern f;").unwrap();
        assert_eq!(enumerate_models(&f, &two).unwrap().count(), 4);
        let big = load_theory("sort D card 5 dim 5;\nrel R : D x D x D extern R;").unwrap();
        let five: BTreeMap<_, _> = [("D".to_string(), 5)].into();
        assert!(matches!(
            enumerate_models(&big, &five),
            Err(OracleError::SearchSpaceTooLarge(_))
        ));
    }

    #[test]
    fn threshold_reports() {
        let t = sig();
        let ax = |src: &str| Axiom {
            name: "a".into(),
            formula: checked(&t, src),
        };
        let sat = satisfies_at_threshold(&t, &model_p(vec![true, true]), &[ax("forall x: D . P(x)")], None).unwrap();
        assert!(sat.overall && sat.satisfied_at_theta);
        assert!(sat.loss <= 2.0 * 2.1e-9);
        let bad = satisfies_at_threshold(&t, &model_p(vec![true, false]), &[ax("forall x: D . P(x)")], None).unwrap();
        assert!(!bad.overall && !bad.satisfied_at_theta);
        assert!(bad.loss >= BIG - 1.0);
        let empty = satisfies_at_threshold(&t, &model_p(vec![true, false]), &[], None).unwrap();
        assert!(empty.overall && empty.loss == 0.0);
    }

    #[test]
    fn small_agreement_run() {
        let t = load_theory(&default_signature(3)).unwrap();
        let r = agreement_suite(&t, 3, 20, 1).unwrap();
        assert!(r.passed(), "{:?}", r.counterexamples);
        assert_eq!(r, agreement_suite(&t, 3, 20, 1).unwrap());
    }
}
