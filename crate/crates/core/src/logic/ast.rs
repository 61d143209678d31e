use std::collections::BTreeSet;

/// How the elements of a sort are represented.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SortRepr {
    /// Learned `card × dim` table; elements are its rows.
    Embedding { card: usize, dim: usize },
    /// Fixed feature rows loaded from data.
    Data { dim: usize },
    /// The integers `0..card`.
    Index { card: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SortDecl {
    pub name: String,
    pub repr: SortRepr,
    pub source: Option<String>,
}

impl SortDecl {
    /// Width of one element when fed to a neural module: the feature
    /// dimension, or the cardinality for one-hot encoded indices.
    pub fn width(&self) -> usize {
        match self.repr {
            SortRepr::Embedding { dim, .. } | SortRepr::Data { dim } => dim,
            SortRepr::Index { card } => card,
        }
    }

    pub fn is_index(&self) -> bool {
        matches!(self.repr, SortRepr::Index { .. })
    }

    pub fn card(&self) -> Option<usize> {
        match self.repr {
            SortRepr::Embedding { card, .. } | SortRepr::Index { card } => Some(card),
            SortRepr::Data { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Relu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sigmoid" => Some(Activation::Sigmoid),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Semantics attached to a function or relation symbol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Binding {
    Mlp { hidden: Vec<usize>, act: Activation },
    Extern(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub sort: String,
    pub learned: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncDecl {
    pub name: String,
    pub args: Vec<String>,
    pub result: String,
    pub binding: Binding,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelDecl {
    pub name: String,
    pub args: Vec<String>,
    /// Number of output logits for a classifier relation.
    pub out: Option<usize>,
    pub binding: Binding,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DataDecl {
    pub name: String,
    pub columns: Vec<String>,
    pub source: Option<String>,
}

/// A fixed truth vector over an index sort, true exactly at `members`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoolVecDecl {
    pub name: String,
    pub sort: String,
    pub members: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Mod,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    /// A variable; `sort` is filled in by the checker.
    Var {
        name: String,
        sort: Option<String>,
    },
    Const(String),
    App(String, Vec<Term>),
    Int(i64),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var {
            name: name.to_string(),
            sort: None,
        }
    }
}

/// Variables introduced by a quantifier and the sort or dataset they range
/// over. Several variables are allowed only for datasets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Binder {
    pub vars: Vec<String>,
    pub domain: String,
}

impl Binder {
    pub fn single(var: &str, domain: &str) -> Binder {
        Binder {
            vars: vec![var.to_string()],
            domain: domain.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Formula {
    Rel {
        name: String,
        args: Vec<Term>,
    },
    Equals(Term, Term),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Forall(Binder, Box<Formula>),
    Exists(Binder, Box<Formula>),
    SoftSelect {
        index: Term,
        vector: Box<Formula>,
    },
    Bool(bool),
    BoolVec(String),
    /// One entry of a Boolean vector.
    BoolVecAt {
        name: String,
        index: Term,
    },
}

impl Formula {
    pub fn rel(name: &str, args: Vec<Term>) -> Formula {
        Formula::Rel {
            name: name.to_string(),
            args,
        }
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn forall(var: &str, domain: &str, body: Formula) -> Formula {
        Formula::Forall(Binder::single(var, domain), Box::new(body))
    }

    pub fn exists(var: &str, domain: &str, body: Formula) -> Formula {
        Formula::Exists(Binder::single(var, domain), Box::new(body))
    }

    /// Quantifier nesting plus connective depth; atoms have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            Formula::Rel { .. }
            | Formula::Equals(..)
            | Formula::Bool(_)
            | Formula::BoolVec(_)
            | Formula::BoolVecAt { .. } => 0,
            Formula::Not(f) | Formula::Forall(_, f) | Formula::Exists(_, f) => 1 + f.depth(),
            Formula::SoftSelect { vector, .. } => 1 + vector.depth(),
            Formula::And(fs) | Formula::Or(fs) => 1 + fs.iter().map(Formula::depth).max().unwrap_or(0),
            Formula::Implies(a, b) => 1 + a.depth().max(b.depth()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Axiom {
    pub name: String,
    pub formula: Formula,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decl {
    Sort(SortDecl),
    Const(ConstDecl),
    Func(FuncDecl),
    Rel(RelDecl),
    Data(DataDecl),
    BoolVec(BoolVecDecl),
    Axiom(Axiom),
}

/// Declarations and axioms in source order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Theory {
    pub sorts: Vec<SortDecl>,
    pub consts: Vec<ConstDecl>,
    pub funcs: Vec<FuncDecl>,
    pub rels: Vec<RelDecl>,
    pub data: Vec<DataDecl>,
    pub boolvecs: Vec<BoolVecDecl>,
    pub axioms: Vec<Axiom>,
}

impl Theory {
    pub fn push(&mut self, d: Decl) {
        match d {
            Decl::Sort(x) => self.sorts.push(x),
            Decl::Const(x) => self.consts.push(x),
            Decl::Func(x) => self.funcs.push(x),
            Decl::Rel(x) => self.rels.push(x),
            Decl::Data(x) => self.data.push(x),
            Decl::BoolVec(x) => self.boolvecs.push(x),
            Decl::Axiom(x) => self.axioms.push(x),
        }
    }

    pub fn sort(&self, name: &str) -> Option<&SortDecl> {
        self.sorts.iter().find(|s| s.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<&ConstDecl> {
        self.consts.iter().find(|s| s.name == name)
    }

    pub fn func(&self, name: &str) -> Option<&FuncDecl> {
        self.funcs.iter().find(|s| s.name == name)
    }

    pub fn rel(&self, name: &str) -> Option<&RelDecl> {
        self.rels.iter().find(|s| s.name == name)
    }

    pub fn dataset(&self, name: &str) -> Option<&DataDecl> {
        self.data.iter().find(|s| s.name == name)
    }

    pub fn boolvec(&self, name: &str) -> Option<&BoolVecDecl> {
        self.boolvecs.iter().find(|s| s.name == name)
    }

    pub fn axiom(&self, name: &str) -> Option<&Axiom> {
        self.axioms.iter().find(|s| s.name == name)
    }
}

/// Names of the variables occurring free in `f`.
pub fn free_variables(f: &Formula) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    collect_free(f, &mut Vec::new(), &mut out);
    out
}

fn collect_free(f: &Formula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match f {
        Formula::Rel { args, .. } => args.iter().for_each(|t| term_free(t, bound, out)),
        Formula::Equals(a, b) => {
            term_free(a, bound, out);
            term_free(b, bound, out);
        }
        Formula::Not(g) => collect_free(g, bound, out),
        Formula::And(fs) | Formula::Or(fs) => fs.iter().for_each(|g| collect_free(g, bound, out)),
        Formula::Implies(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Formula::Forall(b, g) | Formula::Exists(b, g) => {
            let n = bound.len();
            bound.extend(b.vars.iter().cloned());
            collect_free(g, bound, out);
            bound.truncate(n);
        }
        Formula::SoftSelect { index, vector } => {
            term_free(index, bound, out);
            collect_free(vector, bound, out);
        }
        Formula::BoolVecAt { index, .. } => term_free(index, bound, out),
        Formula::Bool(_) | Formula::BoolVec(_) => {}
    }
}

fn term_free(t: &Term, bound: &[String], out: &mut BTreeSet<String>) {
    match t {
        Term::Var { name, .. } => {
            if !bound.contains(name) {
                out.insert(name.clone());
            }
        }
        Term::App(_, args) => args.iter().for_each(|a| term_free(a, bound, out)),
        Term::Arith(_, a, b) => {
            term_free(a, bound, out);
            term_free(b, bound, out);
        }
        Term::Const(_) | Term::Int(_) => {}
    }
}
