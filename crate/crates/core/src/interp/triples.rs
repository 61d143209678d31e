use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::InterpError;

pub const CLASSES: usize = 10;

/// Index triples `(a, b, c)` into an unlabeled pool whose hidden labels
/// satisfy `(label[a] + label[b]) mod 10 = label[c]`.
///
/// For the k-th round and first label `c`, the second label is `k mod 10`,
/// so each round covers every first label once and each label is used the
/// same number of times overall. Images are drawn round-robin from shuffled
/// per-label pools and may repeat across triples. Rounds are emitted in
/// order, so every prefix of `10 m` triples is balanced.
pub fn build_triples(labels: &[usize], per_class: usize, seed: u64) -> Result<Vec<[usize; 3]>, InterpError> {
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        if l >= CLASSES {
            return Err(InterpError::InvalidLabel(l));
        }
        pools[l].push(i);
    }
    if let Some(c) = (0..CLASSES).find(|&c| pools[c].len() < per_class) {
        return Err(InterpError::InsufficientClassCount(c));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pools.iter_mut().for_each(|p| p.shuffle(&mut rng));
    let mut next = [0usize; CLASSES];
    let mut take = |c: usize| {
        let id = pools[c][next[c] % pools[c].len()];
        next[c] += 1;
        id
    };
    let mut out = Vec::with_capacity(per_class * CLASSES);
    for k in 0..per_class {
        for c in 0..CLASSES {
            let y2 = k % CLASSES;
            let y3 = (c + y2) % CLASSES;
            out.push([take(c), take(y2), take(y3)]);
        }
    }
    Ok(out)
}

/// Whether a label triple satisfies the modular sum rule.
pub fn triple_holds(y: [usize; 3]) -> bool {
    (y[0] + y[1]) % CLASSES == y[2]
}

/// Largest per-class budget the pool supports.
pub fn max_per_class(labels: &[usize]) -> usize {
    let mut counts = [0usize; CLASSES];
    labels.iter().filter(|&&l| l < CLASSES).for_each(|&l| counts[l] += 1);
    counts.into_iter().min().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        assert!(triple_holds([3, 9, 2]));
        assert!(triple_holds([0, 0, 0]));
        assert!(!triple_holds([5, 5, 1]));
    }

    #[test]
    fn sound_and_balanced() {
        let labels: Vec<usize> = (0..300).map(|i| (i * 7) % 10).collect();
        let t = build_triples(&labels, 20, 3).unwrap();
        assert_eq!(t.len(), 200);
        assert!(t
            .iter()
            .all(|&[a, b, c]| triple_holds([labels[a], labels[b], labels[c]])));
        for prefix in t.chunks(10) {
            let mut firsts: Vec<usize> = prefix.iter().map(|tr| labels[tr[0]]).collect();
            firsts.sort_unstable();
            assert_eq!(firsts, (0..10).collect::<Vec<_>>());
        }
        assert_eq!(build_triples(&labels, 20, 3).unwrap(), t);
    }

    #[test]
    fn needs_every_class() {
        let labels: Vec<usize> = (0..50).map(|i| i % 9).collect();
        assert!(matches!(
            build_triples(&labels, 1, 0),
            Err(InterpError::InsufficientClassCount(9))
        ));
        assert_eq!(max_per_class(&labels), 0);
    }
}
