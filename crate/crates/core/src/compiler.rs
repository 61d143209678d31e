//! Lowering of bound theories to logit-space computation graphs.
//!
//! Every value produced while evaluating a formula carries one leading axis
//! per enclosing quantifier (size 1 when it does not depend on that
//! quantifier's variable). Vector formulas add a trailing class axis.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::interp::{
    ConstValue, EqualityMode, Extern, InterpError, Interpretation, ParamCache, SampleEnv, SamplerSet, SymbolImpl,
};
use crate::logic::{formula_kind, term_sort, ArithOp, Binder, CheckedTheory, Formula, Kind, Term};
use crate::semantics::{
    and_nodes, and_reduce, equality_nodes, implies_nodes, loss_node, or_nodes, softselect_nodes, SemanticsError,
};
use crate::tensor::{broadcast_shapes, Graph, NodeId, Tensor, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CompileError {
    #[error("symbol `{0}` has no binding")]
    UnboundSymbol(String),
    #[error("axiom `{axiom}`: {message}")]
    Sort { axiom: String, message: String },
    #[error("non-finite value in axiom `{0}`")]
    NonFiniteLogit(String),
    #[error("index {value} is outside 0..{card}")]
    IndexOutOfRange { value: i64, card: usize },
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Result<T> = std::result::Result<T, CompileError>;

#[derive(Clone, Debug)]
pub struct PlanAxiom {
    pub name: String,
    pub formula: Formula,
    pub enabled: bool,
    /// First listing step belonging to this axiom.
    pub first_step: usize,
}

#[derive(Clone, Debug)]
struct Step {
    depth: usize,
    text: String,
}

/// A checked theory lowered against one interpretation.
#[derive(Clone, Debug)]
pub struct Plan {
    theory: CheckedTheory,
    pub axioms: Vec<PlanAxiom>,
    /// Loss is the sum of per-conjunct losses rather than the loss of the
    /// root conjunction.
    pub fused: bool,
    /// Sorts and datasets whose quantifiers draw from a sampler.
    pub sampled: BTreeSet<String>,
    /// Chains of nested index-sort quantifiers enumerated exhaustively.
    pub enumerations: Vec<Vec<String>>,
    /// Function and relation symbols referenced.
    pub symbols: BTreeSet<String>,
    steps: Vec<Step>,
    symbol_lines: Vec<String>,
    total_params: usize,
}

impl Plan {
    pub fn theory(&self) -> &CheckedTheory {
        &self.theory
    }

    /// Include or exclude an axiom from the loss; false if no such axiom.
    pub fn set_enabled(&mut self, axiom: &str, enabled: bool) -> bool {
        match self.axioms.iter_mut().find(|a| a.name == axiom) {
            Some(a) => {
                a.enabled = enabled;
                true
            }
            None => false,
        }
    }

    pub fn enabled_axioms(&self) -> impl Iterator<Item = &PlanAxiom> {
        self.axioms.iter().filter(|a| a.enabled)
    }
}

/// Compile every axiom of `theory` against `interp`.
pub fn compile(theory: &CheckedTheory, interp: &Interpretation) -> Result<Plan> {
    let mut plan = Plan {
        theory: theory.clone(),
        axioms: Vec::new(),
        fused: false,
        sampled: BTreeSet::new(),
        enumerations: Vec::new(),
        symbols: BTreeSet::new(),
        steps: Vec::new(),
        symbol_lines: Vec::new(),
        total_params: interp.num_params(),
    };
    for ax in &theory.axioms {
        if formula_kind(theory, &ax.formula) != Kind::Scalar {
            return Err(CompileError::Sort {
                axiom: ax.name.clone(),
                message: "an axiom must be a scalar formula".into(),
            });
        }
        let first_step = plan.steps.len();
        plan.steps.push(Step {
            depth: 0,
            text: format!("axiom {}", ax.name),
        });
        lower(&mut plan, interp, &ax.formula, 1, false)?;
        plan.axioms.push(PlanAxiom {
            name: ax.name.clone(),
            formula: ax.formula.clone(),
            enabled: true,
            first_step,
        });
    }
    for name in &plan.symbols {
        let sym = interp
            .symbol(name)
            .ok_or_else(|| CompileError::UnboundSymbol(name.clone()))?;
        let line = match &sym.imp {
            SymbolImpl::Mlp(m) => {
                let widths: Vec<String> = m.widths.iter().map(usize::to_string).collect();
                format!(
                    "{name}: mlp {} act {}, {} params",
                    widths.join("-"),
                    m.act.name(),
                    m.num_params()
                )
            }
            SymbolImpl::Extern { name: ext, .. } => format!("{name}: extern {ext}"),
        };
        plan.symbol_lines.push(line);
    }
    Ok(plan)
}

/// Switch the plan to the fused loss.
pub fn fuse_loss(mut plan: Plan) -> Plan {
    plan.fused = true;
    plan
}

fn lower(plan: &mut Plan, interp: &Interpretation, f: &Formula, depth: usize, in_chain: bool) -> Result<()> {
    let theory = plan.theory.clone();
    let step = |plan: &mut Plan, text: String| plan.steps.push(Step { depth, text });
    match f {
        Formula::Rel { name, args } => {
            if interp.symbol(name).is_none() {
                return Err(CompileError::UnboundSymbol(name.clone()));
            }
            plan.symbols.insert(name.clone());
            let args: Vec<String> = args.iter().map(ToString::to_string).collect();
            step(plan, format!("atom {name}({})", args.join(", ")));
            for a in f_terms(f) {
                lower_term(plan, interp, a)?;
            }
        }
        Formula::Equals(a, b) => {
            let how = match interp.options.equality {
                EqualityMode::Gaussian(p) => format!("gaussian eps {} mu {} sigma {}", p.eps, p.mu, p.sigma),
                EqualityMode::Crisp => "crisp".to_string(),
            };
            step(plan, format!("equals {a} = {b} ({how})"));
            lower_term(plan, interp, a)?;
            lower_term(plan, interp, b)?;
        }
        Formula::Not(g) => {
            step(plan, "not".into());
            lower(plan, interp, g, depth + 1, false)?;
        }
        Formula::And(fs) | Formula::Or(fs) => {
            let op = if matches!(f, Formula::And(_)) { "and" } else { "or" };
            step(plan, format!("{op}/{}", fs.len()));
            for g in fs {
                lower(plan, interp, g, depth + 1, false)?;
            }
        }
        Formula::Implies(a, b) => {
            step(plan, "implies".into());
            lower(plan, interp, a, depth + 1, false)?;
            lower(plan, interp, b, depth + 1, false)?;
        }
        Formula::Forall(binder, body) | Formula::Exists(binder, body) => {
            let q = if matches!(f, Formula::Forall(..)) {
                "forall"
            } else {
                "exists"
            };
            let vars = binder.vars.join(", ");
            let how = match theory.sort(&binder.domain) {
                Some(s) if s.is_index() => {
                    if in_chain {
                        plan.enumerations.last_mut().unwrap().push(binder.domain.clone());
                    } else {
                        plan.enumerations.push(vec![binder.domain.clone()]);
                    }
                    format!("exhaustive over {} values", s.card().unwrap_or(0))
                }
                _ => {
                    let size = interp
                        .domain_size(&binder.domain)
                        .ok_or_else(|| CompileError::UnboundSymbol(binder.domain.clone()))?;
                    plan.sampled.insert(binder.domain.clone());
                    format!("sampler over {size} elements")
                }
            };
            step(plan, format!("{q} ({vars}) : {}  [{how}]", binder.domain));
            let chain = theory.sort(&binder.domain).is_some_and(|s| s.is_index())
                && matches!(&**body, Formula::Forall(b, _) | Formula::Exists(b, _)
                    if theory.sort(&b.domain).is_some_and(|s| s.is_index()));
            lower(plan, interp, body, depth + 1, chain)?;
        }
        Formula::SoftSelect { index, vector } => {
            step(plan, format!("softselect [{index}]"));
            lower_term(plan, interp, index)?;
            lower(plan, interp, vector, depth + 1, false)?;
        }
        Formula::Bool(b) => step(plan, format!("constant {b}")),
        Formula::BoolVec(name) | Formula::BoolVecAt { name, .. } => {
            if theory.boolvec(name).is_none() {
                return Err(CompileError::UnboundSymbol(name.clone()));
            }
            step(plan, format!("bool vector {name}"));
        }
    }
    Ok(())
}

fn f_terms(f: &Formula) -> &[Term] {
    match f {
        Formula::Rel { args, .. } => args,
        _ => &[],
    }
}

fn lower_term(plan: &mut Plan, interp: &Interpretation, t: &Term) -> Result<()> {
    match t {
        Term::App(name, args) => {
            if interp.symbol(name).is_none() {
                return Err(CompileError::UnboundSymbol(name.clone()));
            }
            plan.symbols.insert(name.clone());
            for a in args {
                lower_term(plan, interp, a)?;
            }
        }
        Term::Const(name) => {
            if interp.constant(name).is_none() {
                return Err(CompileError::UnboundSymbol(name.clone()));
            }
        }
        Term::Arith(_, a, b) => {
            lower_term(plan, interp, a)?;
            lower_term(plan, interp, b)?;
        }
        Term::Var { .. } | Term::Int(_) => {}
    }
    Ok(())
}

/// Indented listing of the plan: steps, samplers, enumerations and symbols.
pub fn explain(plan: &Plan) -> String {
    let mut out = String::new();
    let n = plan.axioms.len();
    if n == 0 {
        out.push_str("0 axioms; loss ≡ 0\n");
        return out;
    }
    let loss = if plan.fused { "fused" } else { "root conjunction" };
    let _ = writeln!(out, "{n} axiom{}; loss {loss}", if n == 1 { "" } else { "s" });
    for s in &plan.steps {
        let _ = writeln!(out, "{}{}", "  ".repeat(s.depth), s.text);
    }
    let _ = writeln!(out, "samplers: {}", plan.sampled.len());
    for d in &plan.sampled {
        let _ = writeln!(out, "  {d}");
    }
    let _ = writeln!(out, "exhaustive enumerations: {}", plan.enumerations.len());
    for e in &plan.enumerations {
        let _ = writeln!(out, "  {}", e.join(" x "));
    }
    let _ = writeln!(out, "symbols: {}", plan.symbol_lines.len());
    for l in &plan.symbol_lines {
        let _ = writeln!(out, "  {l}");
    }
    let _ = writeln!(out, "parameters: {}", plan.total_params);
    out
}

/// Elements drawn for one quantifier during an evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Draw {
    pub axiom: String,
    pub vars: Vec<String>,
    pub domain: String,
    pub ids: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct AxiomValue {
    pub name: String,
    /// Truth logit of the axiom; computed only without loss fusion.
    pub logit: Option<NodeId>,
    pub loss: NodeId,
}

/// Nodes produced by one evaluation on a tape.
#[derive(Clone, Debug)]
pub struct CompiledBatch {
    /// Rank-0 loss to minimize.
    pub loss: NodeId,
    /// Conjunction of every enabled axiom; `None` when fused or when no
    /// axiom is enabled.
    pub root: Option<NodeId>,
    pub axioms: Vec<AxiomValue>,
    pub draws: Vec<Draw>,
}

/// Evaluate the plan on a fresh draw from `samplers`.
pub fn evaluate(
    plan: &Plan,
    interp: &Interpretation,
    samplers: &mut SamplerSet,
    g: &mut Graph,
) -> Result<CompiledBatch> {
    evaluate_with(plan, interp, samplers, g, plan.fused)
}

pub fn evaluate_with(
    plan: &Plan,
    interp: &Interpretation,
    samplers: &mut SamplerSet,
    g: &mut Graph,
    fused: bool,
) -> Result<CompiledBatch> {
    samplers.begin_step();
    let mut cx = Ctx {
        theory: &plan.theory,
        interp,
        samplers,
        g,
        cache: ParamCache::new(),
        big: interp.options.big,
        axiom: String::new(),
        draws: Vec::new(),
    };
    let mut axioms = Vec::new();
    for ax in plan.enabled_axioms() {
        cx.axiom = ax.name.clone();
        let scope = Vec::new();
        let (logit, loss) = if fused {
            (None, cx.fused_loss(&ax.formula, 0, &scope)?)
        } else {
            let l = cx.formula(&ax.formula, 0, &scope)?.node;
            cx.check_finite(l)?;
            (Some(l), loss_node(cx.g, l)?)
        };
        cx.check_finite(loss)?;
        axioms.push(AxiomValue {
            name: ax.name.clone(),
            logit,
            loss,
        });
    }
    let g = cx.g;
    let draws = cx.draws;
    let (loss, root) = if axioms.is_empty() {
        (g.scalar(0.0), None)
    } else if fused {
        let mut total = axioms[0].loss;
        for a in &axioms[1..] {
            total = g.add(total, a.loss)?;
        }
        (total, None)
    } else {
        let logits: Vec<NodeId> = axioms.iter().filter_map(|a| a.logit).collect();
        let root = and_nodes(g, &logits)?;
        (loss_node(g, root)?, Some(root))
    };
    if !g.value(loss).all_finite() {
        return Err(CompileError::NonFiniteLogit("root".into()));
    }
    Ok(CompiledBatch {
        loss,
        root,
        axioms,
        draws,
    })
}

/// Values of a checked `body` for every element drawn for `binder`, without
/// the conjunction: shape `[m]`, or `[m, n]` for a vector body.
pub fn evaluate_open(
    theory: &CheckedTheory,
    interp: &Interpretation,
    samplers: &mut SamplerSet,
    g: &mut Graph,
    binder: &Binder,
    body: &Formula,
) -> Result<NodeId> {
    samplers.begin_step();
    let mut cx = Ctx {
        theory,
        interp,
        samplers,
        g,
        cache: ParamCache::new(),
        big: interp.options.big,
        axiom: "open".into(),
        draws: Vec::new(),
    };
    let (binds, m) = cx.draw(binder, 0, &[])?;
    let v = cx.formula(body, 1, &binds)?;
    let mut shape = cx.g.shape(v.node).to_vec();
    shape[0] = m;
    Ok(cx.g.expand(v.node, &shape)?)
}

#[derive(Clone, Debug)]
enum VarValue {
    Ids { sort: String, ids: Vec<usize> },
    Ints { sort: String, vals: Vec<i64> },
}

#[derive(Clone, Debug)]
struct VarBind {
    name: String,
    axis: usize,
    value: VarValue,
}

#[derive(Clone, Debug)]
enum TermVal {
    /// Elements of a data or embedding sort.
    Ids {
        sort: String,
        ids: Vec<usize>,
        shape: Vec<usize>,
    },
    /// Values of an index sort (sort unknown for bare literals).
    Ints {
        sort: Option<String>,
        vals: Vec<i64>,
        shape: Vec<usize>,
    },
    /// Feature vectors, shape `[frame..., width]`.
    Feat(NodeId),
}

struct Val {
    node: NodeId,
    vector: bool,
}

struct Ctx<'a> {
    theory: &'a CheckedTheory,
    interp: &'a Interpretation,
    samplers: &'a mut SamplerSet,
    g: &'a mut Graph,
    cache: ParamCache,
    big: f64,
    axiom: String,
    draws: Vec<Draw>,
}

fn ones(depth: usize) -> Vec<usize> {
    vec![1; depth]
}

/// Broadcast a row-major buffer of `shape` to `target` (same rank).
fn expand_vec<T: Copy>(vals: &[T], shape: &[usize], target: &[usize]) -> Vec<T> {
    if shape == target {
        return vals.to_vec();
    }
    let rank = target.len();
    let mut strides = vec![0; rank];
    let mut s = 1;
    for i in (0..rank).rev() {
        strides[i] = if shape[i] == 1 { 0 } else { s };
        s *= shape[i];
    }
    let n: usize = target.iter().product();
    let mut idx = vec![0; rank];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let off: usize = idx.iter().zip(&strides).map(|(a, b)| a * b).sum();
        out.push(vals[off]);
        for i in (0..rank).rev() {
            idx[i] += 1;
            if idx[i] < target[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    out
}

impl Ctx<'_> {
    fn check_finite(&self, n: NodeId) -> Result<()> {
        if self.g.value(n).all_finite() {
            Ok(())
        } else {
            Err(CompileError::NonFiniteLogit(self.axiom.clone()))
        }
    }

    fn crisp(&mut self, bits: Vec<bool>, shape: Vec<usize>) -> Result<NodeId> {
        let big = self.big;
        let data = bits.into_iter().map(|b| if b { big } else { -big }).collect();
        Ok(self.g.constant(Tensor::new(shape, data)?))
    }

    fn card(&self, sort: &str) -> usize {
        self.theory.sort(sort).and_then(|s| s.card()).unwrap_or(0)
    }

    /// Draw the elements of a quantifier; returns the bindings and the
    /// number of elements on the new axis.
    fn draw(&mut self, binder: &Binder, depth: usize, scope: &[VarBind]) -> Result<(Vec<VarBind>, usize)> {
        let dom = &binder.domain;
        if let Some(sort) = self.theory.sort(dom) {
            if sort.is_index() {
                let card = sort.card().unwrap_or(0);
                if card == 0 {
                    return Err(InterpError::EmptyDomain.into());
                }
                let bind = VarBind {
                    name: binder.vars[0].clone(),
                    axis: depth,
                    value: VarValue::Ints {
                        sort: dom.clone(),
                        vals: (0..card as i64).collect(),
                    },
                };
                return Ok((vec![bind], card));
            }
        }
        let env = SampleEnv {
            bindings: scope
                .iter()
                .map(|b| {
                    let ids = match &b.value {
                        VarValue::Ids { ids, .. } => ids.clone(),
                        VarValue::Ints { vals, .. } => vals.iter().map(|&v| v as usize).collect(),
                    };
                    (b.name.clone(), ids)
                })
                .collect(),
        };
        let size = self
            .interp
            .domain_size(dom)
            .ok_or_else(|| CompileError::UnboundSymbol(dom.clone()))?;
        let ids = self.samplers.draw(dom, size, &env)?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= size) {
            return Err(InterpError::SampleOutOfRange { index: bad, size }.into());
        }
        self.draws.push(Draw {
            axiom: self.axiom.clone(),
            vars: binder.vars.clone(),
            domain: dom.clone(),
            ids: ids.clone(),
        });
        let m = ids.len();
        let binds = if let Some(ds) = self.interp.dataset(dom) {
            binder
                .vars
                .iter()
                .zip(&ds.columns)
                .enumerate()
                .map(|(c, (v, col))| {
                    let column: Vec<usize> = ids.iter().map(|&r| ds.rows[r][c]).collect();
                    VarBind {
                        name: v.clone(),
                        axis: depth,
                        value: self.var_value(col, column),
                    }
                })
                .collect()
        } else {
            vec![VarBind {
                name: binder.vars[0].clone(),
                axis: depth,
                value: self.var_value(dom, ids),
            }]
        };
        Ok((binds, m))
    }

    fn var_value(&self, sort: &str, ids: Vec<usize>) -> VarValue {
        if self.theory.sort(sort).is_some_and(|s| s.is_index()) {
            VarValue::Ints {
                sort: sort.to_string(),
                vals: ids.into_iter().map(|i| i as i64).collect(),
            }
        } else {
            VarValue::Ids {
                sort: sort.to_string(),
                ids,
            }
        }
    }

    /// Conjoin `node` (rank > depth) over the quantifier axis `depth`.
    fn close_forall(&mut self, node: NodeId, depth: usize, m: usize) -> Result<NodeId> {
        let mut shape = self.g.shape(node).to_vec();
        shape[depth] = m;
        let e = self.g.expand(node, &shape)?;
        Ok(and_reduce(self.g, e, depth)?)
    }

    fn forall(&mut self, binder: &Binder, body: &Formula, depth: usize, scope: &[VarBind]) -> Result<Val> {
        let (binds, m) = self.draw(binder, depth, scope)?;
        let mut inner = scope.to_vec();
        inner.extend(binds);
        let v = self.formula(body, depth + 1, &inner)?;
        Ok(Val {
            node: self.close_forall(v.node, depth, m)?,
            vector: v.vector,
        })
    }

    /// Per-frame loss of a scalar formula; conjunctions and universal
    /// quantifiers become sums of their conjuncts' losses.
    fn fused_loss(&mut self, f: &Formula, depth: usize, scope: &[VarBind]) -> Result<NodeId> {
        match f {
            Formula::And(fs) if !fs.is_empty() => {
                let mut total = self.fused_loss(&fs[0], depth, scope)?;
                for c in &fs[1..] {
                    let l = self.fused_loss(c, depth, scope)?;
                    total = self.g.add(total, l)?;
                }
                Ok(total)
            }
            Formula::Forall(binder, body) => {
                let (binds, m) = self.draw(binder, depth, scope)?;
                let mut inner = scope.to_vec();
                inner.extend(binds);
                let l = self.fused_loss(body, depth + 1, &inner)?;
                let mut shape = self.g.shape(l).to_vec();
                shape[depth] = m;
                let e = self.g.expand(l, &shape)?;
                Ok(self.g.sum(e, depth)?)
            }
            _ => {
                let v = self.formula(f, depth, scope)?;
                self.check_finite(v.node)?;
                Ok(loss_node(self.g, v.node)?)
            }
        }
    }

    /// Bring scalars up to the rank of vectors when they are mixed.
    fn align(&mut self, vals: Vec<Val>) -> Result<(Vec<NodeId>, bool)> {
        let vector = vals.iter().any(|v| v.vector);
        let mut out = Vec::with_capacity(vals.len());
        for v in vals {
            if vector && !v.vector {
                let mut s = self.g.shape(v.node).to_vec();
                s.push(1);
                out.push(self.g.reshape(v.node, &s)?);
            } else {
                out.push(v.node);
            }
        }
        Ok((out, vector))
    }

    fn formula(&mut self, f: &Formula, depth: usize, scope: &[VarBind]) -> Result<Val> {
        match f {
            Formula::Rel { name, args } => {
                let decl = self
                    .theory
                    .rel(name)
                    .ok_or_else(|| CompileError::UnboundSymbol(name.clone()))?;
                let (node, frame) = self.apply_symbol(name, args, &decl.args, depth, scope)?;
                if decl.out.is_some() {
                    Ok(Val { node, vector: true })
                } else {
                    Ok(Val {
                        node: self.g.reshape(node, &frame)?,
                        vector: false,
                    })
                }
            }
            Formula::Equals(a, b) => {
                let sort = term_sort(self.theory, a).or_else(|| term_sort(self.theory, b));
                let ta = self.term(a, depth, scope, sort.as_deref())?;
                let tb = self.term(b, depth, scope, sort.as_deref())?;
                let crisp_ids = matches!(self.interp.options.equality, EqualityMode::Crisp);
                let node = match (&ta, &tb) {
                    (
                        TermVal::Ints {
                            vals: va, shape: sa, ..
                        },
                        TermVal::Ints {
                            vals: vb, shape: sb, ..
                        },
                    ) => {
                        let frame = broadcast_shapes(sa, sb)?;
                        let (xa, xb) = (expand_vec(va, sa, &frame), expand_vec(vb, sb, &frame));
                        self.crisp(xa.iter().zip(&xb).map(|(x, y)| x == y).collect(), frame)?
                    }
                    (TermVal::Ids { ids: ia, shape: sa, .. }, TermVal::Ids { ids: ib, shape: sb, .. }) if crisp_ids => {
                        let frame = broadcast_shapes(sa, sb)?;
                        let (xa, xb) = (expand_vec(ia, sa, &frame), expand_vec(ib, sb, &frame));
                        self.crisp(xa.iter().zip(&xb).map(|(x, y)| x == y).collect(), frame)?
                    }
                    _ => {
                        let sort = sort.ok_or_else(|| CompileError::Sort {
                            axiom: self.axiom.clone(),
                            message: format!("cannot infer the sort of {a} = {b}"),
                        })?;
                        let fa = self.features(ta, &sort, depth, false)?;
                        let fb = self.features(tb, &sort, depth, false)?;
                        let diff = self.g.sub(fa, fb)?;
                        match self.interp.options.equality {
                            EqualityMode::Gaussian(p) => equality_nodes(self.g, diff, &p)?,
                            EqualityMode::Crisp => {
                                let dv = self.g.value(diff);
                                let w = *dv.shape().last().unwrap();
                                let frame = dv.shape()[..dv.rank() - 1].to_vec();
                                let bits = dv
                                    .data()
                                    .chunks_exact(w.max(1))
                                    .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-9)
                                    .collect();
                                self.crisp(bits, frame)?
                            }
                        }
                    }
                };
                Ok(Val { node, vector: false })
            }
            Formula::Not(g) => {
                let v = self.formula(g, depth, scope)?;
                Ok(Val {
                    node: self.g.neg(v.node)?,
                    vector: v.vector,
                })
            }
            Formula::And(fs) | Formula::Or(fs) => {
                let vals = fs
                    .iter()
                    .map(|c| self.formula(c, depth, scope))
                    .collect::<Result<Vec<_>>>()?;
                let (nodes, vector) = self.align(vals)?;
                let node = if matches!(f, Formula::And(_)) {
                    and_nodes(self.g, &nodes)?
                } else {
                    or_nodes(self.g, &nodes)?
                };
                Ok(Val { node, vector })
            }
            Formula::Implies(a, b) => {
                let va = self.formula(a, depth, scope)?;
                let vb = self.formula(b, depth, scope)?;
                let (nodes, vector) = self.align(vec![va, vb])?;
                Ok(Val {
                    node: implies_nodes(self.g, nodes[0], nodes[1])?,
                    vector,
                })
            }
            Formula::Forall(binder, body) => self.forall(binder, body, depth, scope),
            Formula::Exists(binder, body) => {
                let inner = Formula::Not(body.clone());
                let v = self.forall(binder, &inner, depth, scope)?;
                Ok(Val {
                    node: self.g.neg(v.node)?,
                    vector: v.vector,
                })
            }
            Formula::SoftSelect { index, vector } => {
                let v = self.formula(vector, depth, scope)?;
                let n = *self.g.shape(v.node).last().unwrap_or(&0);
                let s = softselect_nodes(self.g, v.node)?;
                let (vals, shape) = self.ints(index, depth, scope, None)?;
                let vframe = self.g.shape(s)[..depth].to_vec();
                let frame = broadcast_shapes(&vframe, &shape)?;
                let mut full = frame.clone();
                full.push(n);
                let e = self.g.expand(s, &full)?;
                let idx = expand_vec(&vals, &shape, &frame)
                    .into_iter()
                    .map(|i| {
                        usize::try_from(i)
                            .ok()
                            .filter(|&u| u < n)
                            .ok_or(CompileError::IndexOutOfRange { value: i, card: n })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Val {
                    node: self.g.take_last(e, idx)?,
                    vector: false,
                })
            }
            Formula::Bool(b) => Ok(Val {
                node: self.crisp(vec![*b], ones(depth))?,
                vector: false,
            }),
            Formula::BoolVec(name) => {
                let (members, n) = self.boolvec(name)?;
                let mut shape = ones(depth);
                shape.push(n);
                let bits = (0..n).map(|i| members.contains(&i)).collect();
                Ok(Val {
                    node: self.crisp(bits, shape)?,
                    vector: true,
                })
            }
            Formula::BoolVecAt { name, index } => {
                let (members, n) = self.boolvec(name)?;
                let (vals, shape) = self.ints(index, depth, scope, None)?;
                let bits = vals
                    .iter()
                    .map(|&i| {
                        usize::try_from(i)
                            .ok()
                            .filter(|&u| u < n)
                            .map(|u| members.contains(&u))
                            .ok_or(CompileError::IndexOutOfRange { value: i, card: n })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Val {
                    node: self.crisp(bits, shape)?,
                    vector: false,
                })
            }
        }
    }

    fn boolvec(&self, name: &str) -> Result<(Vec<usize>, usize)> {
        let b = self
            .theory
            .boolvec(name)
            .ok_or_else(|| CompileError::UnboundSymbol(name.to_string()))?;
        Ok((b.members.clone(), self.card(&b.sort)))
    }

    fn ints(
        &mut self,
        t: &Term,
        depth: usize,
        scope: &[VarBind],
        expected: Option<&str>,
    ) -> Result<(Vec<i64>, Vec<usize>)> {
        match self.term(t, depth, scope, expected)? {
            TermVal::Ints { vals, shape, .. } => Ok((vals, shape)),
            TermVal::Ids { ids, shape, .. } => Ok((ids.into_iter().map(|i| i as i64).collect(), shape)),
            TermVal::Feat(_) => Err(CompileError::Sort {
                axiom: self.axiom.clone(),
                message: format!("{t} is not an index"),
            }),
        }
    }

    fn term(&mut self, t: &Term, depth: usize, scope: &[VarBind], expected: Option<&str>) -> Result<TermVal> {
        match t {
            Term::Var { name, .. } => {
                let b = scope
                    .iter()
                    .rev()
                    .find(|b| &b.name == name)
                    .ok_or_else(|| CompileError::UnboundSymbol(name.clone()))?;
                let mut shape = ones(depth);
                Ok(match &b.value {
                    VarValue::Ids { sort, ids } => {
                        shape[b.axis] = ids.len();
                        TermVal::Ids {
                            sort: sort.clone(),
                            ids: ids.clone(),
                            shape,
                        }
                    }
                    VarValue::Ints { sort, vals } => {
                        shape[b.axis] = vals.len();
                        TermVal::Ints {
                            sort: Some(sort.clone()),
                            vals: vals.clone(),
                            shape,
                        }
                    }
                })
            }
            Term::Const(name) => {
                let c = self
                    .interp
                    .constant(name)
                    .ok_or_else(|| CompileError::UnboundSymbol(name.clone()))?;
                let sort = self.theory.constant(name).map(|c| c.sort.clone()).unwrap_or_default();
                Ok(match c {
                    ConstValue::Element(id) if self.theory.sort(&sort).is_some_and(|s| s.is_index()) => TermVal::Ints {
                        sort: Some(sort),
                        vals: vec![id as i64],
                        shape: ones(depth),
                    },
                    ConstValue::Element(id) => TermVal::Ids {
                        sort,
                        ids: vec![id],
                        shape: ones(depth),
                    },
                    ConstValue::Param(p) => {
                        let node = crate::interp::param_node(self.g, &self.interp.store, &mut self.cache, p);
                        let w = self.g.shape(node).last().copied().unwrap_or(0);
                        let mut shape = ones(depth);
                        shape.push(w);
                        TermVal::Feat(self.g.reshape(node, &shape)?)
                    }
                })
            }
            Term::Int(v) => Ok(TermVal::Ints {
                sort: expected.map(str::to_string),
                vals: vec![*v],
                shape: ones(depth),
            }),
            Term::Arith(op, a, b) => {
                let (va, sa) = self.ints(a, depth, scope, expected)?;
                let (vb, sb) = self.ints(b, depth, scope, expected)?;
                let frame = broadcast_shapes(&sa, &sb)?;
                let (xa, xb) = (expand_vec(&va, &sa, &frame), expand_vec(&vb, &sb, &frame));
                let vals = xa
                    .iter()
                    .zip(&xb)
                    .map(|(&x, &y)| match op {
                        ArithOp::Add => Ok(x + y),
                        ArithOp::Mod if y > 0 => Ok(x.rem_euclid(y)),
                        ArithOp::Mod => Err(CompileError::IndexOutOfRange { value: y, card: 0 }),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(TermVal::Ints {
                    sort: expected.map(str::to_string).or_else(|| term_sort(self.theory, t)),
                    vals,
                    shape: frame,
                })
            }
            Term::App(name, args) => {
                let decl = self
                    .theory
                    .func(name)
                    .ok_or_else(|| CompileError::UnboundSymbol(name.clone()))?
                    .clone();
                let sym = self
                    .interp
                    .symbol(name)
                    .ok_or_else(|| CompileError::UnboundSymbol(name.clone()))?;
                if let SymbolImpl::Extern {
                    imp: Extern::Index(_), ..
                } = &sym.imp
                {
                    let mut cols = Vec::new();
                    let mut frame = ones(depth);
                    for (a, s) in args.iter().zip(&decl.args) {
                        let (v, sh) = self.ints(a, depth, scope, Some(s))?;
                        frame = broadcast_shapes(&frame, &sh)?;
                        cols.push((v, sh));
                    }
                    let cols: Vec<Vec<i64>> = cols.iter().map(|(v, sh)| expand_vec(v, sh, &frame)).collect();
                    let card = self.card(&decl.result);
                    let n: usize = frame.iter().product();
                    let vals = (0..n)
                        .map(|r| {
                            let row: Vec<i64> = cols.iter().map(|c| c[r]).collect();
                            self.interp.eval_index_symbol(name, &row, card)
                        })
                        .collect::<std::result::Result<Vec<_>, _>>()?;
                    return Ok(TermVal::Ints {
                        sort: Some(decl.result.clone()),
                        vals,
                        shape: frame,
                    });
                }
                let (node, _) = self.apply_symbol(name, args, &decl.args, depth, scope)?;
                Ok(TermVal::Feat(node))
            }
        }
    }

    /// Feature node `[frame..., width]` of a term of `sort`. Index values
    /// are one-hot, or a single raw column for externs.
    fn features(&mut self, t: TermVal, sort: &str, depth: usize, raw_index: bool) -> Result<NodeId> {
        match t {
            TermVal::Feat(n) => Ok(n),
            TermVal::Ids { sort: s, ids, shape } => {
                let rows = self.interp.element_features(self.g, &mut self.cache, &s, &ids)?;
                let w = self.g.shape(rows)[1];
                let mut full = shape;
                full.push(w);
                Ok(self.g.reshape(rows, &full)?)
            }
            TermVal::Ints { sort: own, vals, shape } => {
                let sort = own.as_deref().unwrap_or(sort);
                let mut full = shape;
                if raw_index {
                    full.push(1);
                    let data = vals.iter().map(|&v| v as f64).collect();
                    return Ok(self.g.constant(Tensor::new(full, data)?));
                }
                let card = self.card(sort);
                let ids = vals
                    .iter()
                    .map(|&v| {
                        usize::try_from(v)
                            .ok()
                            .filter(|&u| u < card)
                            .ok_or(CompileError::IndexOutOfRange { value: v, card })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let rows = self.interp.element_features(self.g, &mut self.cache, sort, &ids)?;
                full.push(card);
                debug_assert!(depth + 1 == full.len());
                Ok(self.g.reshape(rows, &full)?)
            }
        }
    }

    /// Evaluate a function or relation symbol; returns `[frame..., out]`
    /// and the frame.
    fn apply_symbol(
        &mut self,
        name: &str,
        args: &[Term],
        sorts: &[String],
        depth: usize,
        scope: &[VarBind],
    ) -> Result<(NodeId, Vec<usize>)> {
        let sym = self
            .interp
            .symbol(name)
            .ok_or_else(|| CompileError::UnboundSymbol(name.to_string()))?;
        let raw = matches!(sym.imp, SymbolImpl::Extern { .. });
        let out = sym.output_width;
        if args.is_empty() {
            return Err(CompileError::Sort {
                axiom: self.axiom.clone(),
                message: format!("symbol `{name}` takes no arguments and cannot be evaluated"),
            });
        }
        let mut feats = Vec::with_capacity(args.len());
        let mut frame = ones(depth);
        for (a, s) in args.iter().zip(sorts) {
            let tv = self.term(a, depth, scope, Some(s))?;
            let f = self.features(tv, s, depth, raw)?;
            frame = broadcast_shapes(&frame, &self.g.shape(f)[..depth])?;
            feats.push(f);
        }
        let m: usize = frame.iter().product();
        let mut rows = Vec::with_capacity(feats.len());
        for f in feats {
            let w = *self.g.shape(f).last().unwrap();
            let mut full = frame.clone();
            full.push(w);
            let e = self.g.expand(f, &full)?;
            rows.push(self.g.reshape(e, &[m, w])?);
        }
        let y = self.interp.eval_symbol(self.g, &mut self.cache, name, &rows)?;
        let mut full = frame.clone();
        full.push(out);
        Ok((self.g.reshape(y, &full)?, frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interp::{bind_theory, BindOptions, DataSources, ExternRegistry, Sampler, Strategy};
    use crate::logic::load_theory;
    use crate::semantics::BIG;

    fn crisp_p(bits: &[bool]) -> (CheckedTheory, Interpretation) {
        let t = load_theory("sort D dim 1;\nrel P : D extern p;\naxiom a : forall x: D . P(x);").unwrap();
        let mut reg = ExternRegistry::new();
        let bits = bits.to_vec();
        reg.register_real("p", move |x| {
            let v = x
                .data()
                .iter()
                .map(|&i| if bits[i as usize] { BIG } else { -BIG })
                .collect::<Vec<_>>();
            Tensor::new(vec![v.len(), 1], v).unwrap()
        });
        let n = 3;
        let table = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        let src = DataSources::new().table("D", table);
        let interp = bind_theory(&t, &reg, &src, BindOptions::default()).unwrap();
        (t, interp)
    }

    #[test]
    fn one_false_conjunct_dominates() {
        let (t, interp) = crisp_p(&[true, false, true]);
        let plan = compile(&t, &interp).unwrap();
        let mut g = Graph::new();
        let b = evaluate(&plan, &interp, &mut SamplerSet::new(), &mut g).unwrap();
        let root = g.value(b.root.unwrap()).item();
        assert!(root <= -BIG + 2.0);
        let (t, interp) = crisp_p(&[true, true, true]);
        let plan = compile(&t, &interp).unwrap();
        let mut g = Graph::new();
        let b = evaluate(&plan, &interp, &mut SamplerSet::new(), &mut g).unwrap();
        assert!(g.value(b.root.unwrap()).item() > BIG - 2.0);
    }

    #[test]
    fn empty_plan() {
        let t = load_theory("sort D card 2;").unwrap();
        let interp = bind_theory(&t, &ExternRegistry::new(), &DataSources::new(), BindOptions::default()).unwrap();
        let plan = compile(&t, &interp).unwrap();
        assert_eq!(explain(&plan), "0 axioms; loss ≡ 0\n");
        let mut g = Graph::new();
        let b = evaluate(&plan, &interp, &mut SamplerSet::new(), &mut g).unwrap();
        assert_eq!(g.value(b.loss).item(), 0.0);
        assert!(b.root.is_none());
    }

    #[test]
    fn draws_follow_sampler() {
        let (t, interp) = crisp_p(&[true, true, false]);
        let plan = compile(&t, &interp).unwrap();
        let mut s = SamplerSet::new();
        s.insert("D", Sampler::new(Strategy::Fixed(vec![0, 1]), 3, 0));
        let mut g = Graph::new();
        let b = evaluate(&plan, &interp, &mut s, &mut g).unwrap();
        assert_eq!(b.draws[0].ids, vec![0, 1]);
        assert!(g.value(b.root.unwrap()).item() > BIG - 2.0);
    }

    #[test]
    fn expand_vec_broadcasts() {
        assert_eq!(expand_vec(&[1, 2], &[2, 1], &[2, 3]), vec![1, 1, 1, 2, 2, 2]);
        assert_eq!(expand_vec(&[1, 2, 3], &[1, 3], &[2, 3]), vec![1, 2, 3, 1, 2, 3]);
    }
}
