use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spatial::{spatial_features, spatial_predicates, BBox, BoxPair};
use super::{ExperimentError, Result};
use crate::tensor::Tensor;

/// A spatial condition on the subject relative to the object.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spatial {
    Above,
    Below,
    LeftOf,
    RightOf,
}

impl Spatial {
    pub fn extern_name(self) -> &'static str {
        match self {
            Spatial::Above => "above",
            Spatial::Below => "below",
            Spatial::LeftOf => "left_of",
            Spatial::RightOf => "right_of",
        }
    }

    fn holds(self, pair: &BoxPair) -> bool {
        let p = spatial_predicates(pair);
        match self {
            Spatial::Above => p.above,
            Spatial::Below => p.below,
            Spatial::LeftOf => p.left_of,
            Spatial::RightOf => p.right_of,
        }
    }
}

/// Necessary conditions for a predicate to hold.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    /// Name of a class set the subject must belong to.
    pub subject: Option<String>,
    pub object: Option<String>,
    pub spatial: Option<Spatial>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predicate {
    pub name: String,
    pub rule: Rule,
    /// Mean subject offset from the object, in object widths and heights.
    pub offset: (f64, f64),
    /// Mirror the horizontal offset with probability one half.
    pub mirror: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    pub classes: Vec<String>,
    /// Typical box size of each class.
    pub class_size: Vec<f64>,
    pub class_sets: Vec<(String, Vec<usize>)>,
    pub predicates: Vec<Predicate>,
}

fn pred(
    name: &str,
    subject: Option<&str>,
    object: Option<&str>,
    spatial: Option<Spatial>,
    offset: (f64, f64),
    mirror: bool,
) -> Predicate {
    Predicate {
        name: name.into(),
        rule: Rule {
            subject: subject.map(str::to_string),
            object: object.map(str::to_string),
            spatial,
        },
        offset,
        mirror,
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        use Spatial::*;
        let classes = [
            "person",
            "child",
            "dog",
            "horse",
            "bike",
            "skateboard",
            "shirt",
            "hat",
            "table",
            "tree",
        ];
        Self {
            classes: classes.iter().map(|s| s.to_string()).collect(),
            class_size: vec![0.30, 0.20, 0.15, 0.35, 0.25, 0.12, 0.15, 0.08, 0.25, 0.45],
            class_sets: vec![
                ("can_ride".into(), vec![0, 1, 2]),
                ("ridable".into(), vec![3, 4, 5]),
                ("living".into(), vec![0, 1, 2, 3]),
                ("wearable".into(), vec![6, 7]),
            ],
            predicates: vec![
                pred(
                    "riding",
                    Some("can_ride"),
                    Some("ridable"),
                    Some(Above),
                    (0.0, 0.5),
                    false,
                ),
                pred("wear", Some("living"), Some("wearable"), None, (0.0, 0.1), false),
                pred("above", None, None, Some(Above), (0.0, 1.2), false),
                pred("below", None, None, Some(Below), (0.0, -1.2), false),
                pred("left_of", None, None, Some(LeftOf), (-1.2, 0.0), false),
                pred("right_of", None, None, Some(RightOf), (1.2, 0.0), false),
                pred("on", None, None, Some(Above), (0.0, 0.6), false),
                pred("under", None, None, Some(Below), (0.0, -0.6), false),
                pred("next_to", None, None, None, (0.9, 0.0), true),
                pred("near", None, None, None, (1.5, 0.8), true),
                pred("has", Some("living"), None, None, (0.2, 0.0), true),
                pred("holding", Some("living"), None, None, (0.4, 0.1), true),
            ],
        }
    }
}

impl Vocabulary {
    pub fn class_set(&self, name: &str) -> Option<&[usize]> {
        self.class_sets
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.predicates.iter().position(|p| p.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExperimentError::InvalidVocab(m));
        if self.classes.is_empty() || self.predicates.is_empty() {
            return bad("empty vocabulary".into());
        }
        if self.class_size.len() != self.classes.len() || self.class_size.iter().any(|&s| !(s > 0.0)) {
            return bad("one positive size per class is required".into());
        }
        for (name, members) in &self.class_sets {
            if let Some(&c) = members.iter().find(|&&c| c >= self.classes.len()) {
                return bad(format!("class set `{name}` names class {c}"));
            }
        }
        for required in ["riding", "wear", "above", "below", "left_of", "right_of"] {
            if self.predicate_index(required).is_none() {
                return bad(format!("predicate `{required}` is missing"));
            }
        }
        for p in &self.predicates {
            for set in [&p.rule.subject, &p.rule.object].into_iter().flatten() {
                if self.class_set(set).is_none() {
                    return bad(format!("predicate `{}` uses unknown class set `{set}`", p.name));
                }
            }
        }
        Ok(())
    }

    fn allows_class(&self, set: &Option<String>, class: usize) -> bool {
        set.as_ref()
            .is_none_or(|s| self.class_set(s).is_some_and(|m| m.contains(&class)))
    }

    /// Whether the classes of a `(predicate, subject, object)` combination
    /// are compatible with the predicate's rule.
    pub fn combo_allowed(&self, p: usize, s: usize, o: usize) -> bool {
        let r = &self.predicates[p].rule;
        self.allows_class(&r.subject, s) && self.allows_class(&r.object, o)
    }

    /// Whether predicate `p` is consistent with the pair's classes and
    /// geometry.
    pub fn rule_holds(&self, p: usize, pair: &BoxPair) -> bool {
        self.combo_allowed(p, pair.subject_class, pair.object_class)
            && self.predicates[p].rule.spatial.is_none_or(|sp| sp.holds(pair))
    }

    /// Width of a pair's feature row.
    pub fn feature_width(&self) -> usize {
        8 + 2 * self.classes.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub vocab: Vocabulary,
    /// Size of the pool the training regime is a fraction of.
    pub n_pool: usize,
    pub regime: f64,
    pub n_test: usize,
    pub n_zero_shot: usize,
    /// Share of each predicate's class combinations held out as zero-shot.
    pub zero_shot_fraction: f64,
    /// Base standard deviation of the offset noise.
    pub noise: f64,
    /// Base standard deviation of the appearance noise.
    pub appearance_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab: Vocabulary::default(),
            n_pool: 50_000,
            regime: 0.01,
            n_test: 2000,
            n_zero_shot: 2000,
            zero_shot_fraction: 0.2,
            noise: 0.2,
            appearance_noise: 0.8,
        }
    }
}

pub type Combo = (usize, usize, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct SynthData {
    pub train: Vec<BoxPair>,
    pub test: Vec<BoxPair>,
    pub zero_shot: Vec<BoxPair>,
    pub train_combos: BTreeSet<Combo>,
    pub zero_shot_combos: BTreeSet<Combo>,
    /// Rows for [`SynthData::all_pairs`], from [`pair_features`].
    pub features: Tensor,
}

impl SynthData {
    /// All pairs: train, then test, then zero-shot.
    pub fn all_pairs(&self) -> impl Iterator<Item = &BoxPair> {
        self.train.iter().chain(&self.test).chain(&self.zero_shot)
    }
}

/// Feature rows of `pairs`: the eight spatial features, then a noisy
/// appearance vector for the subject and one for the object. Appearance is
/// the one-hot class plus Gaussian noise whose scale grows with the class id.
pub fn pair_features<'a>(
    config: &SynthConfig,
    pairs: impl Iterator<Item = &'a BoxPair>,
    rng: &mut ChaCha8Rng,
) -> Tensor {
    let k = config.vocab.classes.len();
    let w = config.vocab.feature_width();
    let mut data = Vec::new();
    let mut n = 0;
    for p in pairs {
        data.extend(spatial_features(p).expect("generated boxes are positive"));
        for c in [p.subject_class, p.object_class] {
            let sd = config.appearance_noise * (1.0 + 0.1 * c as f64);
            let noise = Normal::<f64>::new(0.0, sd).expect("valid normal");
            data.extend((0..k).map(|j| f64::from(u8::from(j == c)) + noise.sample(rng)));
        }
        n += 1;
    }
    Tensor::new(vec![n, w], data).expect("sized rows")
}

/// Number of training pairs: the regime's share of the pool, rounded up.
pub fn train_count(config: &SynthConfig) -> usize {
    (config.regime * config.n_pool as f64 - 1e-9).ceil().max(1.0) as usize
}

/// Sample a synthetic predicate-detection task. Labels satisfy the rule
/// schema by construction, and zero-shot pairs use combinations that never
/// occur in training.
pub fn gen_synth_relations(config: &SynthConfig, seed: u64) -> Result<SynthData> {
    let v = &config.vocab;
    v.validate()?;
    if !(config.regime > 0.0 && config.regime <= 1.0) || !(0.0..1.0).contains(&config.zero_shot_fraction) {
        return Err(ExperimentError::InvalidVocab(
            "regime or zero-shot fraction out of range".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = v.classes.len();
    let mut train_by_pred = vec![Vec::new(); v.predicates.len()];
    let mut zs_by_pred = vec![Vec::new(); v.predicates.len()];
    for p in 0..v.predicates.len() {
        let mut combos: Vec<Combo> = (0..k)
            .flat_map(|s| (0..k).map(move |o| (p, s, o)))
            .filter(|&(p, s, o)| v.combo_allowed(p, s, o))
            .collect();
        if combos.is_empty() {
            return Err(ExperimentError::InvalidVocab(format!(
                "predicate `{}` admits no class pair",
                v.predicates[p].name
            )));
        }
        combos.shuffle(&mut rng);
        let held = ((combos.len() as f64 * config.zero_shot_fraction).round() as usize).min(combos.len() - 1);
        zs_by_pred[p] = combos.split_off(combos.len() - held);
        train_by_pred[p] = combos;
    }
    let train_combos = train_by_pred.iter().flatten().copied().collect();
    let zero_shot_combos = zs_by_pred.iter().flatten().copied().collect();
    let train = sample_pairs(config, &train_by_pred, train_count(config), &mut rng);
    let test = sample_pairs(config, &train_by_pred, config.n_test, &mut rng);
    let zero_shot = sample_pairs(config, &zs_by_pred, config.n_zero_shot, &mut rng);
    let features = pair_features(config, train.iter().chain(&test).chain(&zero_shot), &mut rng);
    Ok(SynthData {
        train,
        test,
        zero_shot,
        train_combos,
        zero_shot_combos,
        features,
    })
}

/// `n` pairs: a uniform predicate among those with combinations, then a
/// uniform combination of it.
fn sample_pairs(config: &SynthConfig, by_pred: &[Vec<Combo>], n: usize, rng: &mut ChaCha8Rng) -> Vec<BoxPair> {
    let preds: Vec<usize> = (0..by_pred.len()).filter(|&p| !by_pred[p].is_empty()).collect();
    (0..n)
        .map(|_| {
            let p = preds[rng.gen_range(0..preds.len())];
            let (p, s, o) = by_pred[p][rng.gen_range(0..by_pred[p].len())];
            sample_geometry(config, p, s, o, rng)
        })
        .collect()
}

/// Boxes around the predicate's mean offset with noise that grows with the
/// subject class id; resampled until the rule's spatial condition holds.
fn sample_geometry(config: &SynthConfig, p: usize, s: usize, o: usize, rng: &mut ChaCha8Rng) -> BoxPair {
    let v = &config.vocab;
    let jitter = Normal::<f64>::new(0.0, 0.2).expect("valid normal");
    let noise = Normal::<f64>::new(0.0, config.noise * (1.0 + 0.1 * s as f64)).expect("valid normal");
    let pr = &v.predicates[p];
    let size = |c: usize, rng: &mut ChaCha8Rng| {
        let base = v.class_size[c];
        (base * jitter.sample(rng).exp(), base * jitter.sample(rng).exp())
    };
    loop {
        let (ow, oh) = size(o, rng);
        let (sw, sh) = size(s, rng);
        let object = BBox::new(rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7), ow, oh);
        let sign = if pr.mirror && rng.gen_bool(0.5) { -1.0 } else { 1.0 };
        let dx = sign * pr.offset.0 + noise.sample(rng);
        let dy = pr.offset.1 + noise.sample(rng);
        let pair = BoxPair {
            subject: BBox::new(object.x + dx * ow, object.y + dy * oh, sw, sh),
            object,
            subject_class: s,
            object_class: o,
            predicate: p,
        };
        if pr.rule.spatial.is_none_or(|sp| sp.holds(&pair)) {
            return pair;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn riding_examples_follow_the_rule() {
        let c = SynthConfig::default();
        let d = gen_synth_relations(&c, 3).unwrap();
        let riding = c.vocab.predicate_index("riding").unwrap();
        let rides: Vec<_> = d.test.iter().filter(|p| p.predicate == riding).collect();
        assert!(!rides.is_empty());
        for p in rides {
            assert!([0, 1, 2].contains(&p.subject_class));
            assert!([3, 4, 5].contains(&p.object_class));
            assert!(p.subject.y >= p.object.y);
        }
    }

    #[test]
    fn one_percent_regime() {
        let c = SynthConfig::default();
        assert_eq!(train_count(&c), 500);
        let c = SynthConfig { n_pool: 1234, ..c };
        assert_eq!(train_count(&c), 13);
        assert_eq!(gen_synth_relations(&c, 0).unwrap().train.len(), 13);
    }

    #[test]
    fn bad_vocabulary() {
        let mut c = SynthConfig::default();
        c.vocab.predicates.retain(|p| p.name != "wear");
        assert!(matches!(
            gen_synth_relations(&c, 0),
            Err(ExperimentError::InvalidVocab(_))
        ));
        let mut c = SynthConfig::default();
        c.vocab.class_sets[0].1.push(10);
        assert!(gen_synth_relations(&c, 0).is_err());
    }
}
