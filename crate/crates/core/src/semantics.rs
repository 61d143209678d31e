//! Truth values as logits: connectives, softselect, equality, Boolean
//! vectors, and truth-space t-norms kept for comparison.

use crate::tensor::{sigmoid, softplus, CustomOp, Graph, NodeId, Tensor, TensorError};

/// Logit used for crisp truth: `true` is `+BIG`, `false` is `-BIG`.
pub const BIG: f64 = 20.0;

/// Above this minimum input the conjunction switches to `-ln Σ e^{-l}`.
pub const STABLE_SWITCH: f64 = 15.0;

const S_CEIL: f64 = -1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SemanticsError {
    #[error("conjunction of zero operands")]
    EmptyConjunction,
    #[error("disjunction of zero operands")]
    EmptyDisjunction,
    #[error("index {index} out of range for vector of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("softselect needs at least two entries, got {0}")]
    DegenerateVector(usize),
    #[error("invalid equality parameters: {0}")]
    InvalidParams(String),
    #[error("lengths {0} and {1} differ")]
    ShapeMismatch(usize, usize),
    #[error("truth value {0} outside [0, 1]")]
    DomainError(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

type Result<T> = std::result::Result<T, SemanticsError>;

/// A truth value `t = σ(l)` stored as its logit `l`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Logit(pub f64);

impl Logit {
    pub const TRUE: Logit = Logit(BIG);
    pub const FALSE: Logit = Logit(-BIG);

    pub fn from_truth(t: f64) -> Logit {
        Logit(logit(t))
    }

    pub fn truth(self) -> f64 {
        sigmoid(self.0)
    }
}

pub fn logit(t: f64) -> f64 {
    (t / (1.0 - t)).ln()
}

pub fn log_sigmoid(l: f64) -> f64 {
    -softplus(-l)
}

pub fn neg(l: f64) -> f64 {
    -l
}

/// Logit of `∏ σ(lᵢ)`.
pub fn and(ls: &[f64]) -> Result<f64> {
    if ls.is_empty() {
        return Err(SemanticsError::EmptyConjunction);
    }
    Ok(and_fiber(ls.iter().copied()))
}

pub fn or(ls: &[f64]) -> Result<f64> {
    if ls.is_empty() {
        return Err(SemanticsError::EmptyDisjunction);
    }
    Ok(-and_fiber(ls.iter().map(|&l| -l)))
}

pub fn implies(a: f64, b: f64) -> f64 {
    -and_fiber([a, -b].into_iter())
}

/// Cross-entropy loss of a logit against "true": `-ln σ(l)`.
pub fn loss(l: f64) -> f64 {
    softplus(-l)
}

fn and_fiber<I: Iterator<Item = f64> + Clone>(ls: I) -> f64 {
    let min = ls.clone().fold(f64::INFINITY, f64::min);
    if min > STABLE_SWITCH {
        let m = ls.clone().map(|l| -l).fold(f64::NEG_INFINITY, f64::max);
        -(m + ls.map(|l| (-l - m).exp()).sum::<f64>().ln())
    } else {
        let s = ls.map(log_sigmoid).sum::<f64>().min(S_CEIL);
        s - (-s.exp_m1()).ln()
    }
}

/// `d and / d lᵢ` for one fiber, written into `out`.
fn and_fiber_grad(ls: &[f64], out: &mut [f64]) {
    let min = ls.iter().copied().fold(f64::INFINITY, f64::min);
    if min > STABLE_SWITCH {
        let m = ls.iter().map(|l| -l).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = ls.iter().map(|l| (-l - m).exp()).sum();
        for (o, l) in out.iter_mut().zip(ls) {
            *o = (-l - m).exp() / z;
        }
    } else {
        let s: f64 = ls.iter().map(|&l| log_sigmoid(l)).sum();
        let ds = if s < S_CEIL { -1.0 / s.exp_m1() } else { 0.0 };
        for (o, &l) in out.iter_mut().zip(ls) {
            *o = ds * sigmoid(-l);
        }
    }
}

/// `πᵢ(v)`: logit of the i-th softmax probability.
pub fn softselect(v: &[f64], i: usize) -> Result<f64> {
    if v.len() < 2 {
        return Err(SemanticsError::DegenerateVector(v.len()));
    }
    if i >= v.len() {
        return Err(SemanticsError::IndexOutOfRange { index: i, len: v.len() });
    }
    Ok(v[i] - lse(v.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &x)| x)))
}

/// Softselect of every entry at once.
pub fn softselect_all(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(SemanticsError::DegenerateVector(v.len()));
    }
    let mut out = vec![0.0; v.len()];
    softselect_fiber(v, &mut out);
    Ok(out)
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let z = lse(v.iter().copied());
    v.iter().map(|x| (x - z).exp()).collect()
}

fn lse(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn lse_pair(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Prefix/suffix log-sum-exp gives every leave-one-out term in linear time.
fn softselect_fiber(v: &[f64], out: &mut [f64]) {
    let n = v.len();
    let mut suffix = vec![f64::NEG_INFINITY; n + 1];
    for j in (0..n).rev() {
        suffix[j] = lse_pair(suffix[j + 1], v[j]);
    }
    let mut prefix = f64::NEG_INFINITY;
    for i in 0..n {
        out[i] = v[i] - lse_pair(prefix, suffix[i + 1]);
        prefix = lse_pair(prefix, v[i]);
    }
}

/// Parameters of the equality density ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EqualityParams {
    /// Noise std when the two values are equal.
    pub eps: f64,
    /// Mean distance when they differ.
    pub mu: f64,
    /// Std of the distance when they differ.
    pub sigma: f64,
}

impl Default for EqualityParams {
    fn default() -> Self {
        Self {
            eps: 0.1,
            mu: 1.0,
            sigma: 0.5,
        }
    }
}

impl EqualityParams {
    pub fn new(eps: f64, mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { eps, mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !(ok(self.eps) && ok(self.mu) && ok(self.sigma)) {
            return Err(SemanticsError::InvalidParams(format!("{self:?} must be positive")));
        }
        if self.eps >= self.sigma {
            return Err(SemanticsError::InvalidParams(format!(
                "eps {} must be smaller than sigma {}",
                self.eps, self.sigma
            )));
        }
        Ok(())
    }

    /// Logit of "equal" at distance `x ≥ 0`.
    pub fn logit_at(&self, x: f64) -> f64 {
        let (e, m, s) = (self.eps, self.mu, self.sigma);
        let z = x * m / (s * s);
        let ln2cosh = z.abs() + (-2.0 * z.abs()).exp().ln_1p();
        let g = -(x * x + m * m) / (2.0 * s * s) + ln2cosh;
        (2.0 * s / e).ln() - x * x / (2.0 * e * e) - g
    }

    /// `f'(x) / x`, finite at `x = 0`.
    fn slope_over_x(&self, x: f64) -> f64 {
        let (e, m, s) = (self.eps, self.mu, self.sigma);
        let a = m / (s * s);
        let tanh_over_x = if x.abs() < 1e-8 { a } else { (a * x).tanh() / x };
        -1.0 / (e * e) + 1.0 / (s * s) - a * tanh_over_x
    }
}

/// Equality logit of two values at Euclidean distance `‖u − v‖`.
pub fn equality_logit(u: &[f64], v: &[f64], params: &EqualityParams) -> Result<f64> {
    params.validate()?;
    if u.len() != v.len() {
        return Err(SemanticsError::ShapeMismatch(u.len(), v.len()));
    }
    let x = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(params.logit_at(x))
}

/// Crisp truth vector: each bit becomes `±big`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoolVector {
    pub logits: Vec<f64>,
}

impl BoolVector {
    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.logits[i] > 0.0
    }
}

pub fn bool_vector(bits: &[bool]) -> BoolVector {
    bool_vector_with(bits, BIG)
}

pub fn bool_vector_with(bits: &[bool], big: f64) -> BoolVector {
    BoolVector {
        logits: bits.iter().map(|&b| if b { big } else { -big }).collect(),
    }
}

/// `class_c ∧ (mask_c → condition)` for every class.
pub fn mask_classes(class_logits: &[f64], mask: &BoolVector, condition: f64) -> Result<Vec<f64>> {
    if class_logits.len() != mask.len() {
        return Err(SemanticsError::ShapeMismatch(class_logits.len(), mask.len()));
    }
    Ok(class_logits
        .iter()
        .zip(&mask.logits)
        .map(|(&c, &m)| and_fiber([c, implies(m, condition)].into_iter()))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Connective {
    And,
    Or,
    Implies,
}

impl Connective {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Connective::And => and_fiber([a, b].into_iter()),
            Connective::Or => -and_fiber([-a, -b].into_iter()),
            Connective::Implies => implies(a, b),
        }
    }
}

/// Apply a binary connective after aligning `y` to the leading axes of `x`,
/// so `Z[i, j] = X[i, j] op y[i]`.
pub fn broadcast_connective(op: Connective, x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let (x, y) = align_leading(x, y)?;
    Ok(x.zip_with(&y, |a, b| op.apply(a, b))?)
}

fn align_leading(x: &Tensor, y: &Tensor) -> Result<(Tensor, Tensor)> {
    let rank = x.rank().max(y.rank());
    let pad = |t: &Tensor| {
        let mut s = t.shape().to_vec();
        s.resize(rank, 1);
        t.reshape(&s)
    };
    Ok((pad(x)?, pad(y)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TNorm {
    Product,
    GoedelMin,
    Lukasiewicz,
}

/// A truth value with its partial derivatives in each argument.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TNormValue {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

pub fn tnorm_eval(kind: TNorm, t1: f64, t2: f64) -> Result<TNormValue> {
    for t in [t1, t2] {
        if !(0.0..=1.0).contains(&t) {
            return Err(SemanticsError::DomainError(t));
        }
    }
    Ok(match kind {
        TNorm::Product => TNormValue {
            value: t1 * t2,
            d1: t2,
            d2: t1,
        },
        TNorm::GoedelMin if t1 <= t2 => TNormValue {
            value: t1,
            d1: 1.0,
            d2: 0.0,
        },
        TNorm::GoedelMin => TNormValue {
            value: t2,
            d1: 0.0,
            d2: 1.0,
        },
        TNorm::Lukasiewicz if t1 + t2 - 1.0 > 0.0 => TNormValue {
            value: t1 + t2 - 1.0,
            d1: 1.0,
            d2: 1.0,
        },
        TNorm::Lukasiewicz => TNormValue {
            value: 0.0,
            d1: 0.0,
            d2: 0.0,
        },
    })
}

/// Left fold of a t-norm over `ts`, with the gradient in every argument.
pub fn tnorm_fold(kind: TNorm, ts: &[f64]) -> Result<(f64, Vec<f64>)> {
    let Some((&first, rest)) = ts.split_first() else {
        return Err(SemanticsError::EmptyConjunction);
    };
    if !(0.0..=1.0).contains(&first) {
        return Err(SemanticsError::DomainError(first));
    }
    let mut value = first;
    let mut grads = vec![1.0];
    for &t in rest {
        let step = tnorm_eval(kind, value, t)?;
        grads.iter_mut().for_each(|g| *g *= step.d1);
        grads.push(step.d2);
        value = step.value;
    }
    Ok((value, grads))
}

// ---------------------------------------------------------------------------
// Graph operations

#[derive(Debug)]
struct AndReduce {
    axis: usize,
}

impl CustomOp for AndReduce {
    fn name(&self) -> &'static str {
        "and_reduce"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let x = inputs[0];
        let (outer, n, inner) = split(x.shape(), self.axis);
        let mut d = vec![0.0; x.len()];
        let mut fiber = vec![0.0; n];
        let mut fg = vec![0.0; n];
        for o in 0..outer {
            for i in 0..inner {
                for (j, f) in fiber.iter_mut().enumerate() {
                    *f = x.data()[(o * n + j) * inner + i];
                }
                and_fiber_grad(&fiber, &mut fg);
                let g = grad.data()[o * inner + i];
                for (j, v) in fg.iter().enumerate() {
                    d[(o * n + j) * inner + i] = g * v;
                }
            }
        }
        vec![Tensor::new(x.shape().to_vec(), d).unwrap()]
    }
}

fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

/// Conjunction over one axis, which is removed.
pub fn and_reduce(g: &mut Graph, x: NodeId, axis: usize) -> Result<NodeId> {
    let xv = g.value(x);
    if axis >= xv.rank() {
        return Err(TensorError::AxisOutOfRange { axis, rank: xv.rank() }.into());
    }
    let (outer, n, inner) = split(xv.shape(), axis);
    if n == 1 {
        let mut s = xv.shape().to_vec();
        s.remove(axis);
        return Ok(g.reshape(x, &s)?);
    }
    let mut out = Vec::with_capacity(outer * inner);
    for o in 0..outer {
        for i in 0..inner {
            let d = xv.data();
            let fiber = (0..n).map(move |j| d[(o * n + j) * inner + i]);
            out.push(and_fiber(fiber));
        }
    }
    let mut shape = xv.shape().to_vec();
    shape.remove(axis);
    let value = Tensor::new(shape, out)?;
    Ok(g.custom(Box::new(AndReduce { axis }), &[x], value)?)
}

/// Stack broadcast operands along a new trailing axis.
fn stack(g: &mut Graph, xs: &[NodeId]) -> Result<NodeId> {
    let mut shape: Vec<usize> = Vec::new();
    for &x in xs {
        shape = crate::tensor::broadcast_shapes(&shape, g.shape(x))?;
    }
    let mut col = shape.clone();
    col.push(1);
    let mut parts = Vec::with_capacity(xs.len());
    for &x in xs {
        let e = g.expand(x, &shape)?;
        parts.push(g.reshape(e, &col)?);
    }
    Ok(g.concat(&parts, shape.len())?)
}

/// n-ary conjunction of broadcast-compatible logit tensors.
pub fn and_nodes(g: &mut Graph, xs: &[NodeId]) -> Result<NodeId> {
    match xs {
        [] => Err(SemanticsError::EmptyConjunction),
        [x] => Ok(*x),
        _ => {
            let s = stack(g, xs)?;
            let axis = g.shape(s).len() - 1;
            and_reduce(g, s, axis)
        }
    }
}

pub fn or_nodes(g: &mut Graph, xs: &[NodeId]) -> Result<NodeId> {
    if xs.is_empty() {
        return Err(SemanticsError::EmptyDisjunction);
    }
    let negs = xs
        .iter()
        .map(|&x| g.neg(x))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let c = and_nodes(g, &negs)?;
    Ok(g.neg(c)?)
}

pub fn implies_nodes(g: &mut Graph, a: NodeId, b: NodeId) -> Result<NodeId> {
    let nb = g.neg(b)?;
    let c = and_nodes(g, &[a, nb])?;
    Ok(g.neg(c)?)
}

/// Per-element loss `softplus(-l)`.
pub fn loss_node(g: &mut Graph, l: NodeId) -> Result<NodeId> {
    let n = g.neg(l)?;
    Ok(g.softplus(n)?)
}

#[derive(Debug)]
struct SoftSelectAll;

impl CustomOp for SoftSelectAll {
    fn name(&self) -> &'static str {
        "softselect"
    }

    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let v = inputs[0];
        let n = *v.shape().last().unwrap();
        let mut d = vec![0.0; v.len()];
        for r in 0..v.len() / n {
            let vs = &v.data()[r * n..(r + 1) * n];
            let ys = &output.data()[r * n..(r + 1) * n];
            let gs = &grad.data()[r * n..(r + 1) * n];
            // out_i = v_i - L_i with L_i the leave-one-out LSE, so
            // d out_i / d v_j = [i = j] - [i ≠ j] exp(v_j - L_i).
            for j in 0..n {
                let mut acc = gs[j];
                for i in 0..n {
                    if i != j {
                        let li = vs[i] - ys[i];
                        acc -= gs[i] * (vs[j] - li).exp();
                    }
                }
                d[r * n + j] = acc;
            }
        }
        vec![Tensor::new(v.shape().to_vec(), d).unwrap()]
    }
}

/// Softselect of every entry along the last axis.
pub fn softselect_nodes(g: &mut Graph, v: NodeId) -> Result<NodeId> {
    let vv = g.value(v);
    let n = vv.shape().last().copied().unwrap_or(0);
    if n < 2 {
        return Err(SemanticsError::DegenerateVector(n));
    }
    let mut out = vec![0.0; vv.len()];
    for (src, dst) in vv.data().chunks_exact(n).zip(out.chunks_exact_mut(n)) {
        softselect_fiber(src, dst);
    }
    let value = Tensor::new(vv.shape().to_vec(), out)?;
    Ok(g.custom(Box::new(SoftSelectAll), &[v], value)?)
}

#[derive(Debug)]
struct EqualityOp {
    params: EqualityParams,
}

impl CustomOp for EqualityOp {
    fn name(&self) -> &'static str {
        "equality"
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Tensor> {
        let diff = inputs[0];
        let d = *diff.shape().last().unwrap();
        let mut out = vec![0.0; diff.len()];
        for (r, (src, dst)) in diff.data().chunks_exact(d).zip(out.chunks_exact_mut(d)).enumerate() {
            let x = src.iter().map(|v| v * v).sum::<f64>().sqrt();
            let k = grad.data()[r] * self.params.slope_over_x(x);
            for (o, s) in dst.iter_mut().zip(src) {
                *o = k * s;
            }
        }
        vec![Tensor::new(diff.shape().to_vec(), out).unwrap()]
    }
}

/// Equality logit of a difference tensor `[..., d]`; the last axis is the
/// vector dimension and is removed.
pub fn equality_nodes(g: &mut Graph, diff: NodeId, params: &EqualityParams) -> Result<NodeId> {
    params.validate()?;
    let dv = g.value(diff);
    if dv.rank() == 0 {
        return Err(TensorError::AxisOutOfRange { axis: 0, rank: 0 }.into());
    }
    let d = *dv.shape().last().unwrap();
    let out = dv
        .data()
        .chunks_exact(d)
        .map(|c| params.logit_at(c.iter().map(|v| v * v).sum::<f64>().sqrt()))
        .collect();
    let value = Tensor::new(dv.shape()[..dv.rank() - 1].to_vec(), out)?;
    Ok(g.custom(Box::new(EqualityOp { params: *params }), &[diff], value)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn negation() {
        assert_eq!(neg(0.0), 0.0);
        assert_eq!(neg(2.0), -2.0);
        assert_eq!(neg(neg(1.25)), 1.25);
    }

    #[test]
    fn conjunction_values() {
        assert!(close(and(&[0.0, 0.0]).unwrap(), (1.0f64 / 3.0).ln(), 1e-12));
        assert!(close(and(&[0.0, 0.0, 0.0]).unwrap(), (1.0f64 / 7.0).ln(), 1e-12));
        // Exact product semantics leave a residue of about e^(l - BIG).
        for l in [-10.0, -3.0, 0.0, 4.5, 6.0] {
            assert!(close(and(&[BIG, l]).unwrap(), l, 1e-6));
        }
        for l in [8.0, 10.0] {
            let direct = logit(sigmoid(BIG) * sigmoid(l));
            assert!(close(and(&[BIG, l]).unwrap(), direct, 1e-9));
            assert!(close(and(&[BIG, l]).unwrap(), l, 1e-4));
        }
        assert_eq!(and(&[]), Err(SemanticsError::EmptyConjunction));
        assert!(and(&[BIG, BIG, BIG]).unwrap().is_finite());
    }

    #[test]
    fn disjunction_and_implication() {
        assert!(close(or(&[0.0, 0.0]).unwrap(), 3.0f64.ln(), 1e-12));
        assert_eq!(or(&[]), Err(SemanticsError::EmptyDisjunction));
        for l in [-10.0, 0.0, 10.0] {
            assert!(implies(-BIG, l) >= BIG - 1.0);
            assert!(close(implies(BIG, l), l, 1e-4));
        }
        for l in [-6.0, 0.0, 6.0] {
            assert!(close(implies(BIG, l), l, 1e-6));
        }
    }

    #[test]
    fn softselect_values() {
        assert!(close(softselect(&[0.0, 0.0], 0).unwrap(), 0.0, 1e-15));
        assert!(close(softselect(&[1.0, 0.0, 0.0], 0).unwrap(), 1.0 - 2f64.ln(), 1e-12));
        assert!(close(softselect(&[0.0, 0.0, 0.0], 2).unwrap(), -(2f64.ln()), 1e-12));
        assert_eq!(softselect(&[1.0], 0), Err(SemanticsError::DegenerateVector(1)));
        assert!(matches!(
            softselect(&[1.0, 2.0], 2),
            Err(SemanticsError::IndexOutOfRange { .. })
        ));
        let v = [0.3, -1.2, 4.0, 2.2];
        let all = softselect_all(&v).unwrap();
        for (i, a) in all.iter().enumerate() {
            assert!(close(*a, softselect(&v, i).unwrap(), 1e-12));
        }
    }

    #[test]
    fn equality_defaults() {
        let p = EqualityParams::default();
        let at0 = equality_logit(&[0.5], &[0.5], &p).unwrap();
        assert!(close(at0, 10f64.ln() + 2.0 - 2f64.ln(), 1e-12));
        let at1 = p.logit_at(1.0);
        assert!(close(at1, 10f64.ln() - 50.0 - (-8f64).exp().ln_1p(), 1e-9));
        assert!(EqualityParams::new(0.5, 1.0, 0.1).is_err());
        assert!(EqualityParams::new(0.0, 1.0, 0.5).is_err());
        let u = [0.1, 0.7];
        let v = [0.3, -0.2];
        assert_eq!(equality_logit(&u, &v, &p).unwrap(), equality_logit(&v, &u, &p).unwrap());
    }

    #[test]
    fn bool_vectors() {
        assert_eq!(bool_vector(&[true, false]).logits, vec![BIG, -BIG]);
        assert!(bool_vector(&[]).is_empty());
        for l in bool_vector(&[true, false, true]).logits {
            let t = sigmoid(l);
            assert!(t <= 1e-8 || t >= 1.0 - 1e-8);
        }
    }

    #[test]
    fn masking() {
        let cls = [1.5, -0.5, 3.0];
        let off = bool_vector(&[false, false, false]);
        for (a, b) in mask_classes(&cls, &off, -BIG).unwrap().iter().zip(cls) {
            assert!(close(*a, b, 1e-6));
        }
        let on = bool_vector(&[true, true, true]);
        for (a, b) in mask_classes(&cls, &on, BIG).unwrap().iter().zip(cls) {
            assert!(close(*a, b, 1e-6));
        }
        let out = mask_classes(&[0.0], &bool_vector(&[true]), -BIG).unwrap();
        assert!(out[0] <= -15.0);
        assert!(mask_classes(&cls, &bool_vector(&[true]), 0.0).is_err());
    }

    #[test]
    fn broadcast_rows() {
        let x = Tensor::zeros(&[2, 2]);
        let y = Tensor::from_vec(vec![BIG, -BIG]).unwrap();
        let z = broadcast_connective(Connective::And, &x, &y).unwrap();
        assert!(close(z.get(&[0, 0]), 0.0, 1e-6) && close(z.get(&[0, 1]), 0.0, 1e-6));
        assert!(z.get(&[1, 0]) <= -BIG + 1.0 && z.get(&[1, 1]) <= -BIG + 1.0);
        let z = broadcast_connective(Connective::And, &x, &Tensor::scalar(BIG)).unwrap();
        assert!(z.data().iter().all(|v| v.abs() < 1e-6));
        assert!(broadcast_connective(Connective::And, &x, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn tnorms() {
        let l = tnorm_eval(TNorm::Lukasiewicz, 0.4, 0.5).unwrap();
        assert_eq!((l.value, l.d1, l.d2), (0.0, 0.0, 0.0));
        let m = tnorm_eval(TNorm::GoedelMin, 0.3, 0.7).unwrap();
        assert_eq!((m.value, m.d2), (0.3, 0.0));
        let (p, _) = tnorm_fold(TNorm::Product, &[0.99; 200]).unwrap();
        assert!(close(p, 0.99f64.powi(200), 1e-12));
        assert!(close(p, 0.1340, 1e-4));
        assert!(matches!(
            tnorm_eval(TNorm::Product, 1.5, 0.0),
            Err(SemanticsError::DomainError(_))
        ));
    }

    #[test]
    fn graph_and_matches_scalar() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::new(vec![2, 3], vec![0.0, 1.0, -2.0, 16.0, 18.0, 30.0]).unwrap());
        let r = and_reduce(&mut g, x, 1).unwrap();
        assert!(close(g.value(r).data()[0], and(&[0.0, 1.0, -2.0]).unwrap(), 1e-15));
        assert!(close(g.value(r).data()[1], and(&[16.0, 18.0, 30.0]).unwrap(), 1e-15));
        let r0 = and_reduce(&mut g, x, 0).unwrap();
        assert!(close(g.value(r0).data()[2], and(&[-2.0, 30.0]).unwrap(), 1e-15));
    }
}
