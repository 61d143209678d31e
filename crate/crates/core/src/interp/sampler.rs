use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::InterpError;

/// Bindings of the enclosing quantifiers, visible to nested samplers.
#[derive(Clone, Debug, Default)]
pub struct SampleEnv {
    /// Variable name to the ids drawn for it.
    pub bindings: Vec<(String, Vec<usize>)>,
}

impl SampleEnv {
    pub fn get(&self, var: &str) -> Option<&[usize]> {
        self.bindings
            .iter()
            .rev()
            .find(|(n, _)| n == var)
            .map(|(_, v)| v.as_slice())
    }
}

type CustomFn = dyn FnMut(&SampleEnv, usize, &mut ChaCha8Rng) -> Vec<usize> + Send;

pub enum Strategy {
    /// The whole domain in order.
    Full,
    /// Disjoint batches of a fresh permutation each epoch.
    Shuffled { batch: usize },
    /// `per_class` distinct elements of every label, drawn afresh each call.
    Balanced { per_class: usize, labels: Vec<usize> },
    /// Always the same elements.
    Fixed(Vec<usize>),
    /// Caller-provided draw given the outer bindings and the domain size.
    Custom(Box<CustomFn>),
}

impl fmt::Debug for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Full => f.write_str("full"),
            Strategy::Shuffled { batch } => write!(f, "shuffled(batch {batch})"),
            Strategy::Balanced { per_class, .. } => write!(f, "balanced({per_class} per class)"),
            Strategy::Fixed(ids) => write!(f, "fixed({} elements)", ids.len()),
            Strategy::Custom(_) => f.write_str("custom"),
        }
    }
}

/// Mini-batch generator over `0..size`, optionally restricted to a prefix.
#[derive(Debug)]
pub struct Sampler {
    strategy: Strategy,
    size: usize,
    limit: Option<usize>,
    rng: ChaCha8Rng,
    perm: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    pub fn new(strategy: Strategy, size: usize, seed: u64) -> Sampler {
        Sampler {
            strategy,
            size,
            limit: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            perm: Vec::new(),
            cursor: 0,
        }
    }

    pub fn strategy(&self) -> &Strategy {
        &self.strategy
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of elements currently eligible.
    pub fn active_size(&self) -> usize {
        self.limit.map_or(self.size, |l| l.min(self.size))
    }

    /// Restrict draws to the first `limit` elements; starts a new epoch
    /// when the restriction changes.
    pub fn set_limit(&mut self, limit: Option<usize>) {
        if limit != self.limit {
            self.limit = limit;
            self.perm.clear();
            self.cursor = 0;
        }
    }

    pub fn sample(&mut self, env: &SampleEnv) -> Result<Vec<usize>, InterpError> {
        let n = self.active_size();
        if n == 0 {
            return Err(InterpError::EmptyDomain);
        }
        let out = match &mut self.strategy {
            Strategy::Full => (0..n).collect(),
            Strategy::Shuffled { batch } => {
                if self.cursor >= self.perm.len() {
                    self.perm = (0..n).collect();
                    self.perm.shuffle(&mut self.rng);
                    self.cursor = 0;
                }
                let end = (self.cursor + *batch).min(self.perm.len());
                let b = self.perm[self.cursor..end].to_vec();
                self.cursor = end;
                b
            }
            Strategy::Balanced { per_class, labels } => {
                let classes = labels[..n].iter().copied().max().map_or(0, |m| m + 1);
                let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
                for (i, &l) in labels[..n].iter().enumerate() {
                    pools[l].push(i);
                }
                let mut out = Vec::with_capacity(classes * *per_class);
                for (c, pool) in pools.iter_mut().enumerate() {
                    if pool.len() < *per_class {
                        return Err(InterpError::InsufficientClassCount(c));
                    }
                    pool.shuffle(&mut self.rng);
                    out.extend_from_slice(&pool[..*per_class]);
                }
                out
            }
            Strategy::Fixed(ids) => ids.clone(),
            Strategy::Custom(f) => f(env, n, &mut self.rng),
        };
        if out.is_empty() {
            return Err(InterpError::EmptyDomain);
        }
        if let Some(&bad) = out.iter().find(|&&i| i >= n) {
            return Err(InterpError::SampleOutOfRange { index: bad, size: n });
        }
        Ok(out)
    }
}

/// Samplers keyed by the sort or dataset they range over. Quantifiers over
/// a domain without an entry use the whole domain.
#[derive(Debug, Default)]
pub struct SamplerSet {
    samplers: HashMap<String, Sampler>,
    /// When set, every quantifier over the same domain reuses one draw per
    /// step instead of drawing independently.
    pub shared_draw: bool,
    step_cache: HashMap<String, Vec<usize>>,
}

impl SamplerSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, domain: &str, sampler: Sampler) {
        self.samplers.insert(domain.to_string(), sampler);
    }

    pub fn get_mut(&mut self, domain: &str) -> Option<&mut Sampler> {
        self.samplers.get_mut(domain)
    }

    pub fn get(&self, domain: &str) -> Option<&Sampler> {
        self.samplers.get(domain)
    }

    /// Marks the start of a training step.
    pub fn begin_step(&mut self) {
        self.step_cache.clear();
    }

    pub fn draw(&mut self, domain: &str, size: usize, env: &SampleEnv) -> Result<Vec<usize>, InterpError> {
        if self.shared_draw {
            if let Some(ids) = self.step_cache.get(domain) {
                return Ok(ids.clone());
            }
        }
        let ids = match self.samplers.get_mut(domain) {
            Some(s) => s.sample(env)?,
            None if size == 0 => return Err(InterpError::EmptyDomain),
            None => (0..size).collect(),
        };
        if self.shared_draw {
            self.step_cache.insert(domain.to_string(), ids.clone());
        }
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_range() {
        let mut s = Sampler::new(Strategy::Full, 10, 0);
        assert_eq!(s.sample(&SampleEnv::default()).unwrap(), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn epoch_partition() {
        let mut s = Sampler::new(Strategy::Shuffled { batch: 64 }, 50_000, 7);
        let mut seen = Vec::new();
        let mut batches = 0;
        while seen.len() < 50_000 {
            let b = s.sample(&SampleEnv::default()).unwrap();
            assert!(b.len() == 64 || seen.len() + b.len() == 50_000);
            seen.extend(b);
            batches += 1;
        }
        assert_eq!(batches, 782);
        seen.sort_unstable();
        assert_eq!(seen, (0..50_000).collect::<Vec<_>>());
    }

    #[test]
    fn balanced_labels() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let mut s = Sampler::new(
            Strategy::Balanced {
                per_class: 2,
                labels: labels.clone(),
            },
            100,
            1,
        );
        let b = s.sample(&SampleEnv::default()).unwrap();
        assert_eq!(b.len(), 20);
        let mut counts = [0; 10];
        b.iter().for_each(|&i| counts[labels[i]] += 1);
        assert_eq!(counts, [2; 10]);
    }

    #[test]
    fn seeds_repeat_and_limit() {
        let draw = |seed| {
            let mut s = Sampler::new(Strategy::Shuffled { batch: 3 }, 10, seed);
            (0..5)
                .map(|_| s.sample(&SampleEnv::default()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(4), draw(4));
        assert_ne!(draw(4), draw(5));
        let mut s = Sampler::new(Strategy::Shuffled { batch: 4 }, 10, 0);
        s.set_limit(Some(3));
        assert!(s.sample(&SampleEnv::default()).unwrap().iter().all(|&i| i < 3));
        assert!(Sampler::new(Strategy::Full, 0, 0)
            .sample(&SampleEnv::default())
            .is_err());
    }
}
