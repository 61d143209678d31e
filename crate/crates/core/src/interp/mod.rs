//! Binding theory symbols to data, learned modules and deterministic code.

mod data;
mod externs;
mod mlp;
mod sampler;
mod triples;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::logic::{Binding, CheckedTheory, SortDecl, SortRepr};
use crate::semantics::{EqualityParams, SemanticsError, BIG};
use crate::tensor::{Graph, NodeId, ParamId, ParamStore, Tensor, TensorError};

pub use data::{load_csv_ids, load_csv_table};
pub use externs::{Extern, ExternRegistry};
pub use mlp::{param_node, Mlp, ParamCache};
pub use sampler::{SampleEnv, Sampler, SamplerSet, Strategy};
pub use triples::{build_triples, max_per_class, triple_holds, CLASSES};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterpError {
    #[error("no extern registered under `{0}`")]
    MissingExtern(String),
    #[error("extern `{0}` has the wrong kind for its declaration")]
    ExternKind(String),
    #[error("cannot load {path}: {message}")]
    DataLoad { path: String, message: String },
    #[error("no data supplied for `{0}`")]
    MissingData(String),
    #[error("width mismatch for `{symbol}`: expected {expected}, found {found}")]
    WidthMismatch {
        symbol: String,
        expected: usize,
        found: usize,
    },
    #[error("element {index} of `{name}` is outside a domain of size {size}")]
    ElementOutOfRange { name: String, index: usize, size: usize },
    #[error("sampler drew {index} from a domain of size {size}")]
    SampleOutOfRange { index: usize, size: usize },
    #[error("quantifier domain is empty")]
    EmptyDomain,
    #[error("class {0} has too few examples")]
    InsufficientClassCount(usize),
    #[error("label {0} is not a digit")]
    InvalidLabel(usize),
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

/// How `=` is interpreted between feature vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EqualityMode {
    /// Density-ratio logit of the Euclidean distance.
    Gaussian(EqualityParams),
    /// `±big` by identity of elements (or zero distance).
    Crisp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BindOptions {
    pub big: f64,
    pub equality: EqualityMode,
    /// Seed for parameter initialization.
    pub seed: u64,
    /// Directory against which `from "PATH"` sources are resolved.
    pub base_dir: PathBuf,
}

impl Default for BindOptions {
    fn default() -> Self {
        Self {
            big: BIG,
            equality: EqualityMode::Gaussian(EqualityParams::default()),
            seed: 0,
            base_dir: PathBuf::from("."),
        }
    }
}

/// In-memory data handed to [`bind_theory`]; entries here take precedence
/// over `from` paths in the theory.
#[derive(Clone, Debug, Default)]
pub struct DataSources {
    /// Feature rows of data sorts.
    pub tables: HashMap<String, Tensor>,
    /// Tuples of element ids for datasets.
    pub datasets: HashMap<String, Vec<Vec<usize>>>,
    /// Element ids of non-learned constants of data or index sorts.
    pub constants: HashMap<String, usize>,
}

impl DataSources {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn table(mut self, sort: &str, rows: Tensor) -> Self {
        self.tables.insert(sort.to_string(), rows);
        self
    }

    pub fn dataset(mut self, name: &str, rows: Vec<Vec<usize>>) -> Self {
        self.datasets.insert(name.to_string(), rows);
        self
    }

    pub fn constant(mut self, name: &str, id: usize) -> Self {
        self.constants.insert(name.to_string(), id);
        self
    }
}

/// The elements a sort ranges over.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Index { card: usize },
    Data { rows: Tensor },
    Embedding { param: ParamId, card: usize, dim: usize },
}

impl Domain {
    pub fn size(&self) -> usize {
        match self {
            Domain::Index { card } | Domain::Embedding { card, .. } => *card,
            Domain::Data { rows } => rows.shape()[0],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Clone, Debug)]
pub enum SymbolImpl {
    Mlp(Mlp),
    Extern { name: String, imp: Extern },
}

#[derive(Clone, Debug)]
pub struct SymbolBinding {
    pub name: String,
    pub arg_sorts: Vec<String>,
    pub input_width: usize,
    pub output_width: usize,
    pub imp: SymbolImpl,
}

impl SymbolBinding {
    pub fn num_params(&self) -> usize {
        match &self.imp {
            SymbolImpl::Mlp(m) => m.num_params(),
            SymbolImpl::Extern { .. } => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ConstValue {
    /// Learned vector `[1, dim]`.
    Param(ParamId),
    /// A fixed element of the constant's sort.
    Element(usize),
}

/// Every symbol of a checked theory bound to concrete semantics.
#[derive(Clone, Debug)]
pub struct Interpretation {
    theory: CheckedTheory,
    pub store: ParamStore,
    domains: BTreeMap<String, Domain>,
    datasets: BTreeMap<String, Dataset>,
    symbols: BTreeMap<String, SymbolBinding>,
    constants: BTreeMap<String, ConstValue>,
    pub options: BindOptions,
}

pub fn bind_theory(
    theory: &CheckedTheory,
    registry: &ExternRegistry,
    sources: &DataSources,
    options: BindOptions,
) -> Result<Interpretation, InterpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut store = ParamStore::new();
    let resolve = |p: &str| options.base_dir.join(p);

    let mut domains = BTreeMap::new();
    for s in &theory.sorts {
        let d = match s.repr {
            SortRepr::Index { card } => Domain::Index { card },
            SortRepr::Embedding { card, dim } => Domain::Embedding {
                param: store.add_glorot(format!("{}.table", s.name), card, dim, &mut rng),
                card,
                dim,
            },
            SortRepr::Data { dim } => {
                let rows = match (sources.tables.get(&s.name), &s.source) {
                    (Some(t), _) => t.clone(),
                    (None, Some(p)) => load_csv_table(&resolve(p))?,
                    (None, None) => return Err(InterpError::MissingData(s.name.clone())),
                };
                if rows.rank() != 2 || rows.shape()[1] != dim {
                    return Err(InterpError::WidthMismatch {
                        symbol: s.name.clone(),
                        expected: dim,
                        found: *rows.shape().last().unwrap_or(&0),
                    });
                }
                Domain::Data { rows }
            }
        };
        domains.insert(s.name.clone(), d);
    }

    let mut datasets = BTreeMap::new();
    for d in &theory.data {
        let rows = match (sources.datasets.get(&d.name), &d.source) {
            (Some(r), _) => r.clone(),
            (None, Some(p)) => load_csv_ids(&resolve(p))?,
            (None, None) => return Err(InterpError::MissingData(d.name.clone())),
        };
        if rows.is_empty() {
            return Err(InterpError::DataLoad {
                path: d.name.clone(),
                message: "dataset has no rows".into(),
            });
        }
        for row in &rows {
            if row.len() != d.columns.len() {
                return Err(InterpError::WidthMismatch {
                    symbol: d.name.clone(),
                    expected: d.columns.len(),
                    found: row.len(),
                });
            }
            for (&id, col) in row.iter().zip(&d.columns) {
                let size = domains[col].size();
                if id >= size {
                    return Err(InterpError::ElementOutOfRange {
                        name: d.name.clone(),
                        index: id,
                        size,
                    });
                }
            }
        }
        datasets.insert(
            d.name.clone(),
            Dataset {
                columns: d.columns.clone(),
                rows,
            },
        );
    }

    let width = |sort: &str| theory.sort(sort).map_or(0, SortDecl::width);
    let mut symbols = BTreeMap::new();
    let decls = theory
        .funcs
        .iter()
        .map(|f| (&f.name, &f.args, &f.binding, Some(&f.result), None))
        .chain(theory.rels.iter().map(|r| (&r.name, &r.args, &r.binding, None, r.out)));
    for (name, args, binding, result, out) in decls {
        // Externs see index arguments as one raw column.
        let is_extern = matches!(binding, Binding::Extern(_));
        let input_width: usize = args
            .iter()
            .map(|a| match theory.sort(a) {
                Some(s) if is_extern && s.is_index() => 1,
                _ => width(a),
            })
            .sum();
        let result_is_index = result.is_some_and(|r| theory.sort(r).is_some_and(SortDecl::is_index));
        let output_width = match (result, out) {
            (Some(_), _) if result_is_index => 1,
            (Some(r), _) => width(r),
            (None, Some(n)) => n,
            (None, None) => 1,
        };
        let imp = match binding {
            Binding::Mlp { hidden, act } => {
                let mut widths = vec![input_width];
                widths.extend(hidden);
                widths.push(output_width);
                SymbolImpl::Mlp(Mlp::new(&mut store, name, widths, *act, &mut rng))
            }
            Binding::Extern(ext) => {
                let imp = registry
                    .get(ext)
                    .ok_or_else(|| InterpError::MissingExtern(ext.clone()))?;
                if matches!(imp, Extern::Index(_)) != result_is_index {
                    return Err(InterpError::ExternKind(ext.clone()));
                }
                SymbolImpl::Extern {
                    name: ext.clone(),
                    imp: imp.clone(),
                }
            }
        };
        symbols.insert(
            name.clone(),
            SymbolBinding {
                name: name.clone(),
                arg_sorts: args.clone(),
                input_width,
                output_width,
                imp,
            },
        );
    }

    let mut constants = BTreeMap::new();
    let mut next_row: HashMap<&str, usize> = HashMap::new();
    for c in &theory.consts {
        let sort = theory.sort(&c.sort).expect("checked theory");
        let value = if c.learned {
            ConstValue::Param(store.add_glorot(format!("{}.const", c.name), 1, sort.width(), &mut rng))
        } else if let SortRepr::Embedding { card, .. } = sort.repr {
            let k = next_row.entry(&c.sort).or_insert(0);
            let id = *k;
            *k += 1;
            if id >= card {
                return Err(InterpError::ElementOutOfRange {
                    name: c.name.clone(),
                    index: id,
                    size: card,
                });
            }
            ConstValue::Element(id)
        } else {
            let id = *sources
                .constants
                .get(&c.name)
                .ok_or_else(|| InterpError::MissingData(c.name.clone()))?;
            let size = domains[&c.sort].size();
            if id >= size {
                return Err(InterpError::ElementOutOfRange {
                    name: c.name.clone(),
                    index: id,
                    size,
                });
            }
            ConstValue::Element(id)
        };
        constants.insert(c.name.clone(), value);
    }

    Ok(Interpretation {
        theory: theory.clone(),
        store,
        domains,
        datasets,
        symbols,
        constants,
        options,
    })
}

impl Interpretation {
    pub fn theory(&self) -> &CheckedTheory {
        &self.theory
    }

    pub fn domain(&self, sort: &str) -> Option<&Domain> {
        self.domains.get(sort)
    }

    pub fn dataset(&self, name: &str) -> Option<&Dataset> {
        self.datasets.get(name)
    }

    pub fn symbol(&self, name: &str) -> Option<&SymbolBinding> {
        self.symbols.get(name)
    }

    pub fn symbols(&self) -> impl Iterator<Item = &SymbolBinding> {
        self.symbols.values()
    }

    pub fn constant(&self, name: &str) -> Option<ConstValue> {
        self.constants.get(name).copied()
    }

    pub fn num_params(&self) -> usize {
        self.store.num_scalars()
    }

    /// Number of elements a sort or dataset ranges over.
    pub fn domain_size(&self, name: &str) -> Option<usize> {
        self.domains
            .get(name)
            .map(Domain::size)
            .or_else(|| self.datasets.get(name).map(Dataset::len))
    }

    /// Feature rows `[ids.len(), width]` of elements of `sort`. Index sorts
    /// are one-hot encoded.
    pub fn element_features(
        &self,
        g: &mut Graph,
        cache: &mut ParamCache,
        sort: &str,
        ids: &[usize],
    ) -> Result<NodeId, InterpError> {
        let dom = self
            .domains
            .get(sort)
            .ok_or_else(|| InterpError::UnknownSymbol(sort.to_string()))?;
        match dom {
            Domain::Index { card } => {
                let mut data = vec![0.0; ids.len() * card];
                for (r, &i) in ids.iter().enumerate() {
                    if i >= *card {
                        return Err(TensorError::IndexOutOfRange { index: i, size: *card }.into());
                    }
                    data[r * card + i] = 1.0;
                }
                Ok(g.constant(Tensor::new(vec![ids.len(), *card], data)?))
            }
            Domain::Data { rows } => Ok(g.constant(gather_rows(rows, ids)?)),
            Domain::Embedding { param, .. } => {
                let t = param_node(g, &self.store, cache, *param);
                Ok(g.gather(t, ids)?)
            }
        }
    }

    /// Apply a function or relation symbol to `[batch, w_i]` arguments,
    /// giving `[batch, output_width]`. Extern outputs are constants.
    pub fn eval_symbol(
        &self,
        g: &mut Graph,
        cache: &mut ParamCache,
        name: &str,
        args: &[NodeId],
    ) -> Result<NodeId, InterpError> {
        let sym = self
            .symbols
            .get(name)
            .ok_or_else(|| InterpError::UnknownSymbol(name.to_string()))?;
        let input = match args {
            [] => {
                return Err(InterpError::WidthMismatch {
                    symbol: name.to_string(),
                    expected: sym.input_width,
                    found: 0,
                })
            }
            [a] => *a,
            _ => g.concat(args, 1)?,
        };
        let found = g.shape(input).get(1).copied().unwrap_or(0);
        if g.shape(input).len() != 2 || found != sym.input_width {
            return Err(InterpError::WidthMismatch {
                symbol: name.to_string(),
                expected: sym.input_width,
                found,
            });
        }
        match &sym.imp {
            SymbolImpl::Mlp(m) => Ok(m.forward(g, &self.store, cache, input)?),
            SymbolImpl::Extern {
                imp: Extern::Real(f), ..
            } => {
                let out = f(g.value(input));
                let batch = g.shape(input)[0];
                if out.shape() != [batch, sym.output_width] {
                    return Err(InterpError::WidthMismatch {
                        symbol: name.to_string(),
                        expected: sym.output_width,
                        found: out.shape().last().copied().unwrap_or(0),
                    });
                }
                Ok(g.constant(out))
            }
            SymbolImpl::Extern { name: ext, .. } => Err(InterpError::ExternKind(ext.clone())),
        }
    }

    /// Apply an index-valued extern function to integer arguments.
    pub fn eval_index_symbol(&self, name: &str, args: &[i64], card: usize) -> Result<i64, InterpError> {
        match self.symbols.get(name).map(|s| &s.imp) {
            Some(SymbolImpl::Extern {
                imp: Extern::Index(f), ..
            }) => Ok(f(args, card)),
            Some(_) => Err(InterpError::ExternKind(name.to_string())),
            None => Err(InterpError::UnknownSymbol(name.to_string())),
        }
    }

    /// Outputs of a single-argument symbol on a batch of feature rows,
    /// evaluated without recording gradients.
    pub fn classify(&self, name: &str, rows: &Tensor) -> Result<Tensor, InterpError> {
        let mut g = Graph::new();
        let x = g.constant(rows.clone());
        let y = self.eval_symbol(&mut g, &mut ParamCache::new(), name, &[x])?;
        Ok(g.value(y).clone())
    }

    /// Parameter count per learned symbol and table, in name order.
    pub fn param_report(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = self
            .symbols
            .values()
            .filter(|s| s.num_params() > 0)
            .map(|s| (s.name.clone(), s.num_params()))
            .collect();
        for (name, d) in &self.domains {
            if let Domain::Embedding { card, dim, .. } = d {
                out.push((name.clone(), card * dim));
            }
        }
        for (name, c) in &self.constants {
            if let ConstValue::Param(p) = c {
                out.push((name.clone(), self.store.get(*p).value.len()));
            }
        }
        out.sort();
        out
    }
}

/// Rows `ids` of a `[n, d]` table.
pub fn gather_rows(rows: &Tensor, ids: &[usize]) -> Result<Tensor, TensorError> {
    let (n, d) = (rows.shape()[0], rows.shape()[1]);
    let mut data = Vec::with_capacity(ids.len() * d);
    for &i in ids {
        if i >= n {
            return Err(TensorError::IndexOutOfRange { index: i, size: n });
        }
        data.extend_from_slice(&rows.data()[i * d..(i + 1) * d]);
    }
    Tensor::new(vec![ids.len(), d], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::load_theory;

    #[test]
    fn binds_digit_classifier() {
        let t = load_theory(
            "sort Image dim 784;\nsort Digit card 10;\ndata L : Image x Digit;\n\
             rel digit : Image out 10 mlp 512 act sigmoid;\naxiom a : forall (x, y): L . pi[y](digit(x));",
        )
        .unwrap();
        let src = DataSources::new()
            .table("Image", Tensor::zeros(&[3, 784]))
            .dataset("L", vec![vec![0, 1], vec![2, 9]]);
        let interp = bind_theory(&t, &ExternRegistry::new(), &src, BindOptions::default()).unwrap();
        assert_eq!(interp.num_params(), 407_050);
        assert_eq!(interp.param_report(), vec![("digit".to_string(), 407_050)]);
        let out = interp.classify("digit", &Tensor::zeros(&[5, 784])).unwrap();
        assert_eq!(out.shape(), &[5, 10]);
    }

    #[test]
    fn missing_extern_and_bad_data() {
        let t = load_theory("sort B dim 8;\nrel above : B extern above;").unwrap();
        let src = DataSources::new().table("B", Tensor::zeros(&[2, 8]));
        let e = bind_theory(&t, &ExternRegistry::new(), &src, BindOptions::default()).unwrap_err();
        assert_eq!(e, InterpError::MissingExtern("above".into()));
        assert!(bind_theory(&t, &ExternRegistry::with_defaults(), &src, BindOptions::default()).is_ok());
        let wrong = DataSources::new().table("B", Tensor::zeros(&[2, 7]));
        assert!(matches!(
            bind_theory(&t, &ExternRegistry::with_defaults(), &wrong, BindOptions::default()),
            Err(InterpError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn embedding_table_and_constants() {
        let t = load_theory("sort W card 100 dim 16;\nconst a : W;\nconst b : W;\nconst v : W learned;").unwrap();
        let interp = bind_theory(&t, &ExternRegistry::new(), &DataSources::new(), BindOptions::default()).unwrap();
        let Some(Domain::Embedding { param, .. }) = interp.domain("W") else {
            panic!()
        };
        assert_eq!(interp.store.get(*param).value.shape(), &[100, 16]);
        assert_eq!(interp.constant("b"), Some(ConstValue::Element(1)));
        assert!(matches!(interp.constant("v"), Some(ConstValue::Param(_))));
    }
}
