use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::semantics::BIG;
use crate::tensor::Tensor;

type RealFn = dyn Fn(&Tensor) -> Tensor + Send + Sync;
type IndexFn = dyn Fn(&[i64], usize) -> i64 + Send + Sync;

/// A deterministic, batched symbol implementation.
#[derive(Clone)]
pub enum Extern {
    /// Maps `[batch, in]` raw argument values to `[batch, out]`: logits for
    /// a relation, feature rows for a function. Index arguments appear as a
    /// single column holding the integer value.
    Real(Arc<RealFn>),
    /// Maps integer arguments and the result sort's cardinality to an index.
    Index(Arc<IndexFn>),
}

impl fmt::Debug for Extern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extern::Real(_) => f.write_str("Extern::Real"),
            Extern::Index(_) => f.write_str("Extern::Index"),
        }
    }
}

/// Name to implementation table, fixed before binding.
#[derive(Clone, Debug, Default)]
pub struct ExternRegistry {
    map: BTreeMap<String, Extern>,
}

impl ExternRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `mod_add` and the four spatial predicates.
    pub fn with_defaults() -> Self {
        let mut r = Self::new();
        r.register_index("mod_add", |args, card| args.iter().sum::<i64>().rem_euclid(card as i64));
        r.register_real("above", spatial(|f| f[1] >= 0.0));
        r.register_real("below", spatial(|f| f[1] <= 0.0));
        r.register_real("right_of", spatial(|f| f[0] >= 0.0));
        r.register_real("left_of", spatial(|f| f[0] <= 0.0));
        r
    }

    pub fn register_real(&mut self, name: &str, f: impl Fn(&Tensor) -> Tensor + Send + Sync + 'static) {
        self.map.insert(name.to_string(), Extern::Real(Arc::new(f)));
    }

    pub fn register_index(&mut self, name: &str, f: impl Fn(&[i64], usize) -> i64 + Send + Sync + 'static) {
        self.map.insert(name.to_string(), Extern::Index(Arc::new(f)));
    }

    pub fn get(&self, name: &str) -> Option<&Extern> {
        self.map.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(String::as_str)
    }
}

/// Crisp relation over the relative spatial feature row of a box pair.
fn spatial(pred: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> impl Fn(&Tensor) -> Tensor + Send + Sync {
    move |x: &Tensor| {
        let d = x.shape()[1];
        let out = x
            .data()
            .chunks_exact(d)
            .map(|row| if pred(row) { BIG } else { -BIG })
            .collect::<Vec<_>>();
        Tensor::new(vec![out.len(), 1], out).expect("non-empty batch")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mod_add_wraps() {
        let r = ExternRegistry::with_defaults();
        let Some(Extern::Index(f)) = r.get("mod_add") else {
            panic!()
        };
        assert_eq!(f(&[3, 9], 10), 2);
        assert_eq!(f(&[0, 0], 10), 0);
    }

    #[test]
    fn spatial_boundaries() {
        let r = ExternRegistry::with_defaults();
        let eval = |name: &str, row: [f64; 8]| {
            let Some(Extern::Real(f)) = r.get(name) else { panic!() };
            f(&Tensor::new(vec![1, 8], row.to_vec()).unwrap()).item() > 0.0
        };
        let level = [0.5, 0.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert!(eval("above", level) && eval("below", level));
        assert!(eval("right_of", level) && !eval("left_of", level));
    }
}
