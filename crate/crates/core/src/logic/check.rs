use std::collections::HashSet;
use std::ops::Deref;

use super::ast::*;
use super::LogicError;

/// Whether a formula denotes one truth value or a vector of them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Scalar,
    Vector(usize),
}

impl Kind {
    fn describe(self) -> String {
        match self {
            Kind::Scalar => "scalar formula".into(),
            Kind::Vector(n) => format!("vector formula of length {n}"),
        }
    }
}

/// A theory that passed [`check_theory`]: symbols resolved, variables
/// annotated with sorts and renamed apart, constants marked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckedTheory {
    theory: Theory,
}

impl CheckedTheory {
    pub fn theory(&self) -> &Theory {
        &self.theory
    }

    pub fn into_inner(self) -> Theory {
        self.theory
    }
}

impl Deref for CheckedTheory {
    type Target = Theory;

    fn deref(&self) -> &Theory {
        &self.theory
    }
}

pub fn check_theory(theory: &Theory) -> Result<CheckedTheory, Vec<LogicError>> {
    let mut errors = Vec::new();
    check_decls(theory, &mut errors);
    if !errors.is_empty() {
        return Err(errors);
    }
    let mut out = theory.clone();
    let mut axiom_names = HashSet::new();
    for ax in &mut out.axioms {
        if !axiom_names.insert(ax.name.clone()) {
            errors.push(LogicError::Duplicate(ax.name.clone()));
            continue;
        }
        let mut cx = Checker {
            theory,
            scope: Vec::new(),
            used: HashSet::new(),
        };
        match cx.formula(&ax.formula) {
            Ok((f, Kind::Scalar)) => ax.formula = f,
            Ok((_, k)) => errors.push(LogicError::Sort {
                symbol: format!("axiom {}", ax.name),
                expected: "scalar formula".into(),
                found: k.describe(),
            }),
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(CheckedTheory { theory: out })
    } else {
        Err(errors)
    }
}

fn declared_names(t: &Theory) -> Vec<&str> {
    let mut names: Vec<&str> = Vec::new();
    names.extend(t.sorts.iter().map(|d| d.name.as_str()));
    names.extend(t.consts.iter().map(|d| d.name.as_str()));
    names.extend(t.funcs.iter().map(|d| d.name.as_str()));
    names.extend(t.rels.iter().map(|d| d.name.as_str()));
    names.extend(t.data.iter().map(|d| d.name.as_str()));
    names.extend(t.boolvecs.iter().map(|d| d.name.as_str()));
    names
}

fn check_decls(t: &Theory, errors: &mut Vec<LogicError>) {
    let mut seen = HashSet::new();
    for n in declared_names(t) {
        if !seen.insert(n) {
            errors.push(LogicError::Duplicate(n.to_string()));
        }
    }
    let sort_exists = |s: &str, owner: &str, errors: &mut Vec<LogicError>| {
        if t.sort(s).is_none() {
            errors.push(LogicError::Unbound(format!("{s} (sort used by {owner})")));
        }
    };
    for c in &t.consts {
        sort_exists(&c.sort, &c.name, errors);
        if let Some(s) = t.sort(&c.sort) {
            if c.learned && s.is_index() {
                errors.push(LogicError::Sort {
                    symbol: c.name.clone(),
                    expected: "embedding or data sort for a learned constant".into(),
                    found: format!("index sort {}", s.name),
                });
            }
        }
    }
    for f in &t.funcs {
        for a in &f.args {
            sort_exists(a, &f.name, errors);
        }
        sort_exists(&f.result, &f.name, errors);
        if let (Binding::Mlp { .. }, Some(s)) = (&f.binding, t.sort(&f.result)) {
            if s.is_index() {
                errors.push(LogicError::Sort {
                    symbol: f.name.clone(),
                    expected: "feature sort as result of a neural function".into(),
                    found: format!("index sort {}", s.name),
                });
            }
        }
    }
    for r in &t.rels {
        for a in &r.args {
            sort_exists(a, &r.name, errors);
        }
    }
    for d in &t.data {
        for c in &d.columns {
            sort_exists(c, &d.name, errors);
        }
    }
    for b in &t.boolvecs {
        match t
            .sort(&b.sort)
            .and_then(SortDecl::card)
            .filter(|_| t.sort(&b.sort).unwrap().is_index())
        {
            None => errors.push(LogicError::Sort {
                symbol: b.name.clone(),
                expected: "index sort".into(),
                found: b.sort.clone(),
            }),
            Some(card) => {
                if let Some(&m) = b.members.iter().find(|&&m| m >= card) {
                    errors.push(LogicError::Sort {
                        symbol: b.name.clone(),
                        expected: format!("members below {card}"),
                        found: m.to_string(),
                    });
                }
            }
        }
    }
}

struct Checker<'a> {
    theory: &'a Theory,
    /// (source name, renamed, sort), innermost last.
    scope: Vec<(String, String, String)>,
    used: HashSet<String>,
}

type Res<T> = Result<T, LogicError>;

fn sort_err(symbol: &str, expected: impl Into<String>, found: impl Into<String>) -> LogicError {
    LogicError::Sort {
        symbol: symbol.to_string(),
        expected: expected.into(),
        found: found.into(),
    }
}

fn combine(a: Kind, b: Kind, what: &str) -> Res<Kind> {
    match (a, b) {
        (Kind::Scalar, k) | (k, Kind::Scalar) => Ok(k),
        (Kind::Vector(n), Kind::Vector(m)) if n == m => Ok(a),
        (Kind::Vector(n), Kind::Vector(m)) => Err(sort_err(
            what,
            format!("vector of length {n}"),
            format!("vector of length {m}"),
        )),
    }
}

impl<'a> Checker<'a> {
    fn fresh(&mut self, name: &str) -> String {
        let declared = declared_names(self.theory);
        let taken = |n: &str, used: &HashSet<String>| used.contains(n) || declared.contains(&n);
        let mut candidate = name.to_string();
        let mut k = 1;
        while taken(&candidate, &self.used) {
            candidate = format!("{name}_{k}");
            k += 1;
        }
        self.used.insert(candidate.clone());
        candidate
    }

    fn is_index(&self, sort: &str) -> bool {
        self.theory.sort(sort).is_some_and(SortDecl::is_index)
    }

    fn expect_sort(&self, what: &str, expected: Option<&str>, found: &str) -> Res<()> {
        match expected {
            Some(e) if e != found => Err(sort_err(what, e, found)),
            _ => Ok(()),
        }
    }

    /// Returns the annotated term and its sort (`None` for a bare integer).
    fn term(&mut self, t: &Term, expected: Option<&str>) -> Res<(Term, Option<String>)> {
        match t {
            Term::Var { name, .. } => {
                if let Some((_, renamed, sort)) = self.scope.iter().rev().find(|(n, _, _)| n == name) {
                    let sort = sort.clone();
                    self.expect_sort(name, expected, &sort)?;
                    return Ok((
                        Term::Var {
                            name: renamed.clone(),
                            sort: Some(sort.clone()),
                        },
                        Some(sort),
                    ));
                }
                if self.theory.constant(name).is_some() {
                    return self.term(&Term::Const(name.clone()), expected);
                }
                if self.theory.func(name).is_some() {
                    return self.term(&Term::App(name.clone(), Vec::new()), expected);
                }
                Err(LogicError::Unbound(name.clone()))
            }
            Term::Const(name) => {
                let c = self
                    .theory
                    .constant(name)
                    .ok_or_else(|| LogicError::Unbound(name.clone()))?;
                self.expect_sort(name, expected, &c.sort)?;
                Ok((Term::Const(name.clone()), Some(c.sort.clone())))
            }
            Term::App(name, args) => {
                let Some(f) = self.theory.func(name) else {
                    if self.theory.rel(name).is_some() {
                        return Err(sort_err(name, "function", "relation"));
                    }
                    return Err(LogicError::Unbound(name.clone()));
                };
                if f.args.len() != args.len() {
                    return Err(sort_err(
                        name,
                        format!("{} argument(s)", f.args.len()),
                        format!("{} argument(s)", args.len()),
                    ));
                }
                let mut out = Vec::with_capacity(args.len());
                for (a, s) in args.iter().zip(&f.args) {
                    out.push(self.term(a, Some(s))?.0);
                }
                self.expect_sort(name, expected, &f.result)?;
                Ok((Term::App(name.clone(), out), Some(f.result.clone())))
            }
            Term::Int(n) => {
                if let Some(e) = expected {
                    let card = self.theory.sort(e).filter(|s| s.is_index()).and_then(SortDecl::card);
                    match card {
                        None => return Err(sort_err(&n.to_string(), e, "integer literal")),
                        Some(c) if *n < 0 || *n as usize >= c => {
                            return Err(sort_err(&n.to_string(), format!("value in 0..{c}"), n.to_string()))
                        }
                        _ => {}
                    }
                }
                Ok((Term::Int(*n), expected.map(str::to_string)))
            }
            Term::Arith(op, a, b) => {
                let what = match op {
                    ArithOp::Add => "+",
                    ArithOp::Mod => "mod",
                };
                if let Some(e) = expected {
                    if !self.is_index(e) {
                        return Err(sort_err(what, e, "index arithmetic"));
                    }
                }
                // Operands are plain integers; the range check applies to
                // the result, at evaluation time.
                let (ta, sa) = self.term(a, None)?;
                let (tb, sb) = self.term(b, None)?;
                for s in sa.iter().chain(sb.iter()) {
                    if !self.is_index(s) {
                        return Err(sort_err(what, "index sort", s.clone()));
                    }
                }
                if let Term::Int(k) = tb {
                    if *op == ArithOp::Mod && k <= 0 {
                        return Err(sort_err("mod", "positive modulus", k.to_string()));
                    }
                }
                let sort = expected.map(str::to_string).or(sa).or(sb);
                Ok((Term::Arith(*op, Box::new(ta), Box::new(tb)), sort))
            }
        }
    }

    fn formula(&mut self, f: &Formula) -> Res<(Formula, Kind)> {
        match f {
            Formula::Rel { name, args } => {
                if let Some(bv) = self.theory.boolvec(name) {
                    let card = self.theory.sort(&bv.sort).and_then(SortDecl::card).unwrap_or(0);
                    return match args.as_slice() {
                        [] => Ok((Formula::BoolVec(name.clone()), Kind::Vector(card))),
                        [i] => {
                            let sort = bv.sort.clone();
                            let (index, _) = self.term(i, Some(&sort))?;
                            Ok((
                                Formula::BoolVecAt {
                                    name: name.clone(),
                                    index,
                                },
                                Kind::Scalar,
                            ))
                        }
                        _ => Err(sort_err(
                            name,
                            "0 or 1 argument(s)",
                            format!("{} argument(s)", args.len()),
                        )),
                    };
                }
                let Some(r) = self.theory.rel(name) else {
                    if self.theory.func(name).is_some() || self.theory.constant(name).is_some() {
                        return Err(sort_err(name, "relation", "term symbol"));
                    }
                    return Err(LogicError::Unbound(name.clone()));
                };
                if r.args.len() != args.len() {
                    return Err(sort_err(
                        name,
                        format!("{} argument(s)", r.args.len()),
                        format!("{} argument(s)", args.len()),
                    ));
                }
                let sorts = r.args.clone();
                let kind = r.out.map(Kind::Vector).unwrap_or(Kind::Scalar);
                let mut out = Vec::with_capacity(args.len());
                for (a, s) in args.iter().zip(&sorts) {
                    out.push(self.term(a, Some(s))?.0);
                }
                Ok((
                    Formula::Rel {
                        name: name.clone(),
                        args: out,
                    },
                    kind,
                ))
            }
            Formula::Equals(a, b) => {
                let (_, sa) = self.term(a, None)?;
                let (tb, sb) = self.term(b, sa.as_deref())?;
                let (ta, _) = self.term(a, sb.as_deref())?;
                Ok((Formula::Equals(ta, tb), Kind::Scalar))
            }
            Formula::Not(g) => {
                let (g, k) = self.formula(g)?;
                Ok((Formula::not(g), k))
            }
            Formula::And(fs) | Formula::Or(fs) => {
                let what = if matches!(f, Formula::And(_)) { "&" } else { "|" };
                let mut kind = Kind::Scalar;
                let mut out = Vec::with_capacity(fs.len());
                for g in fs {
                    let (g, k) = self.formula(g)?;
                    kind = combine(kind, k, what)?;
                    out.push(g);
                }
                Ok((
                    if what == "&" {
                        Formula::And(out)
                    } else {
                        Formula::Or(out)
                    },
                    kind,
                ))
            }
            Formula::Implies(a, b) => {
                let (a, ka) = self.formula(a)?;
                let (b, kb) = self.formula(b)?;
                Ok((Formula::implies(a, b), combine(ka, kb, "->")?))
            }
            Formula::Forall(binder, body) | Formula::Exists(binder, body) => {
                let sorts: Vec<String> = if let Some(s) = self.theory.sort(&binder.domain) {
                    if binder.vars.len() != 1 {
                        return Err(sort_err(
                            &binder.domain,
                            "a single variable for a sort",
                            format!("{} variables", binder.vars.len()),
                        ));
                    }
                    vec![s.name.clone()]
                } else if let Some(d) = self.theory.dataset(&binder.domain) {
                    if binder.vars.len() != d.columns.len() {
                        return Err(sort_err(
                            &binder.domain,
                            format!("{} variable(s)", d.columns.len()),
                            format!("{} variable(s)", binder.vars.len()),
                        ));
                    }
                    d.columns.clone()
                } else {
                    return Err(LogicError::Unbound(binder.domain.clone()));
                };
                let depth = self.scope.len();
                let mut renamed = Vec::with_capacity(binder.vars.len());
                for (v, s) in binder.vars.iter().zip(sorts) {
                    let fresh = self.fresh(v);
                    renamed.push(fresh.clone());
                    self.scope.push((v.clone(), fresh, s));
                }
                let result = self.formula(body);
                self.scope.truncate(depth);
                let (body, k) = result?;
                if k != Kind::Scalar {
                    return Err(sort_err("quantifier body", "scalar formula", k.describe()));
                }
                let b = Binder {
                    vars: renamed,
                    domain: binder.domain.clone(),
                };
                Ok((
                    if matches!(f, Formula::Forall(..)) {
                        Formula::Forall(b, Box::new(body))
                    } else {
                        Formula::Exists(b, Box::new(body))
                    },
                    Kind::Scalar,
                ))
            }
            Formula::SoftSelect { index, vector } => {
                let (vector, k) = self.formula(vector)?;
                let Kind::Vector(n) = k else {
                    return Err(sort_err("pi", "vector formula", "scalar formula"));
                };
                let (index, sort) = self.term(index, None)?;
                match sort {
                    Some(s) => {
                        let card = self.theory.sort(&s).filter(|d| d.is_index()).and_then(SortDecl::card);
                        if card != Some(n) {
                            return Err(sort_err("pi", format!("index sort of cardinality {n}"), s));
                        }
                    }
                    None => {
                        if let Term::Int(i) = index {
                            if i < 0 || i as usize >= n {
                                return Err(sort_err("pi", format!("index in 0..{n}"), i.to_string()));
                            }
                        }
                    }
                }
                Ok((
                    Formula::SoftSelect {
                        index,
                        vector: Box::new(vector),
                    },
                    Kind::Scalar,
                ))
            }
            Formula::Bool(b) => Ok((Formula::Bool(*b), Kind::Scalar)),
            Formula::BoolVec(name) => {
                let bv = self
                    .theory
                    .boolvec(name)
                    .ok_or_else(|| LogicError::Unbound(name.clone()))?;
                let card = self.theory.sort(&bv.sort).and_then(SortDecl::card).unwrap_or(0);
                Ok((f.clone(), Kind::Vector(card)))
            }
            Formula::BoolVecAt { name, index } => {
                let bv = self
                    .theory
                    .boolvec(name)
                    .ok_or_else(|| LogicError::Unbound(name.clone()))?;
                let sort = bv.sort.clone();
                let (index, _) = self.term(index, Some(&sort))?;
                Ok((
                    Formula::BoolVecAt {
                        name: name.clone(),
                        index,
                    },
                    Kind::Scalar,
                ))
            }
        }
    }
}

/// Sort of a checked term, if it has one; bare integers have none.
pub fn term_sort(theory: &Theory, t: &Term) -> Option<String> {
    match t {
        Term::Var { sort, .. } => sort.clone(),
        Term::Const(n) => theory.constant(n).map(|c| c.sort.clone()),
        Term::App(n, _) => theory.func(n).map(|f| f.result.clone()),
        Term::Int(_) => None,
        Term::Arith(_, a, b) => term_sort(theory, a).or_else(|| term_sort(theory, b)),
    }
}

/// Kind of a checked formula.
pub fn formula_kind(theory: &Theory, f: &Formula) -> Kind {
    match f {
        Formula::Rel { name, .. } => theory
            .rel(name)
            .and_then(|r| r.out)
            .map(Kind::Vector)
            .unwrap_or(Kind::Scalar),
        Formula::BoolVec(name) => theory
            .boolvec(name)
            .and_then(|b| theory.sort(&b.sort))
            .and_then(SortDecl::card)
            .map(Kind::Vector)
            .unwrap_or(Kind::Scalar),
        Formula::Not(g) => formula_kind(theory, g),
        Formula::And(fs) | Formula::Or(fs) => fs
            .iter()
            .map(|g| formula_kind(theory, g))
            .find(|k| *k != Kind::Scalar)
            .unwrap_or(Kind::Scalar),
        Formula::Implies(a, b) => match formula_kind(theory, a) {
            Kind::Scalar => formula_kind(theory, b),
            k => k,
        },
        _ => Kind::Scalar,
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::parse_source;
    use super::*;

    const DECLS: &str = "sort D card 3;\nconst c : D;\nrel P : D extern p;\nrel R : D x D extern r;\n";

    fn check(axioms: &str) -> Result<CheckedTheory, Vec<LogicError>> {
        check_theory(&parse_source(&format!("{DECLS}{axioms}")).unwrap())
    }

    #[test]
    fn well_sorted_unary() {
        let t = check("axiom a : forall x: D . P(x);").unwrap();
        match &t.axioms[0].formula {
            Formula::Forall(_, body) => assert_eq!(
                **body,
                Formula::rel(
                    "P",
                    vec![Term::Var {
                        name: "x".into(),
                        sort: Some("D".into())
                    }]
                )
            ),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn arity_mismatch() {
        let e = check("axiom a : forall x: D . forall y: D . P(x, y);").unwrap_err();
        assert!(matches!(&e[0], LogicError::Sort { symbol, .. } if symbol == "P"));
    }

    #[test]
    fn unbound_relation_and_variable() {
        let e = check("axiom a : R(c, c) & S(c);").unwrap_err();
        assert_eq!(e[0], LogicError::Unbound("S".into()));
        let e = check("axiom a : P(y);").unwrap_err();
        assert_eq!(e[0], LogicError::Unbound("y".into()));
    }

    #[test]
    fn duplicates() {
        let e = check_theory(&parse_source("sort D card 2;\nrel D : D extern p;").unwrap()).unwrap_err();
        assert_eq!(e[0], LogicError::Duplicate("D".into()));
        let e = check("axiom a : P(c);\naxiom a : P(c);").unwrap_err();
        assert_eq!(e[0], LogicError::Duplicate("a".into()));
    }

    #[test]
    fn renames_apart_and_is_idempotent() {
        let t = check("axiom a : (forall x: D . P(x)) & forall x: D . forall x: D . R(x, c);").unwrap();
        let printed = t.axioms[0].formula.to_string();
        assert_eq!(
            printed,
            "(forall x: D . P(x)) & (forall x_1: D . forall x_2: D . R(x_2, c))"
        );
        let again = check_theory(t.theory()).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn vector_formulas() {
        let src = "sort Img dim 4;\nsort Digit card 3;\ndata L : Img x Digit;\n\
                   rel cls : Img out 3 mlp 5;\nboolvec odd : Digit = {1};\n";
        let ok = parse_source(&format!(
            "{src}axiom a : forall (x, y): L . pi[y](cls(x) & (odd -> false));"
        ))
        .unwrap();
        assert!(check_theory(&ok).is_ok());
        let bad = parse_source(&format!("{src}axiom a : forall (x, y): L . cls(x);")).unwrap();
        assert!(check_theory(&bad).is_err());
        let bad = parse_source(&format!("{src}axiom a : forall (x, y): L . pi[x](cls(x));")).unwrap();
        assert!(check_theory(&bad).is_err());
        let at = parse_source(&format!("{src}axiom a : forall (x, y): L . odd(y) -> pi[y](cls(x));")).unwrap();
        let t = check_theory(&at).unwrap();
        assert!(t.axioms[0].formula.to_string().contains("odd(y)"));
    }

    #[test]
    fn integer_terms() {
        assert!(check("axiom a : P(2);").is_ok());
        assert!(check("axiom a : P(3);").is_err());
        assert!(check("axiom a : forall x: D . forall y: D . R((x + y) mod 3, y);").is_ok());
    }
}
