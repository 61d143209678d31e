#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// Initial working set, no growth yet.
    Warm,
    Growing,
    /// Labeled data dropped; only the rules remain.
    RulesOnly,
}

/// Confidence-driven growth of the unlabeled working set.
#[derive(Clone, Debug, PartialEq)]
pub struct CurriculumState {
    /// Smoothed confidence.
    pub p_c: f64,
    pub alpha: f64,
    pub threshold: f64,
    /// Working-set size in elements per class.
    pub working_set: usize,
    pub max_size: usize,
    pub growth: usize,
    pub phase: Phase,
    /// Whether a crossing at maximum size enters the rules-only phase.
    pub rules_only_after: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurriculumEvent {
    None,
    Grew { from: usize, to: usize },
    EnteredRulesOnly,
}

impl CurriculumState {
    pub fn new(initial: usize, max_size: usize) -> Self {
        Self {
            p_c: 0.0,
            alpha: 0.1,
            threshold: 0.9,
            working_set: initial.min(max_size),
            max_size,
            growth: 2,
            phase: Phase::Warm,
            rules_only_after: true,
        }
    }

    /// Low-pass update with the batch confidence `p_max`; on crossing the
    /// threshold the working set grows (or the rules-only phase starts) and
    /// `p_c` is reset.
    pub fn update(&mut self, p_max: f64) -> CurriculumEvent {
        self.p_c = (1.0 - self.alpha) * self.p_c + self.alpha * p_max.clamp(0.0, 1.0);
        if self.p_c <= self.threshold || self.phase == Phase::RulesOnly {
            return CurriculumEvent::None;
        }
        self.p_c = 0.0;
        if self.working_set < self.max_size {
            let from = self.working_set;
            self.working_set = (from * self.growth).min(self.max_size);
            self.phase = Phase::Growing;
            CurriculumEvent::Grew {
                from,
                to: self.working_set,
            }
        } else if self.rules_only_after {
            self.phase = Phase::RulesOnly;
            CurriculumEvent::EnteredRulesOnly
        } else {
            CurriculumEvent::None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recursion_values() {
        let mut c = CurriculumState::new(10, 1000);
        c.update(0.8);
        assert!((c.p_c - 0.08).abs() < 1e-12);
        c.update(0.8);
        assert!((c.p_c - 0.152).abs() < 1e-12);
    }

    #[test]
    fn grows_then_rules_only() {
        let mut c = CurriculumState::new(10, 40);
        c.p_c = 0.95;
        assert_eq!(c.update(0.95), CurriculumEvent::Grew { from: 10, to: 20 });
        assert_eq!(c.p_c, 0.0);
        c.p_c = 0.95;
        assert_eq!(c.update(0.95), CurriculumEvent::Grew { from: 20, to: 40 });
        c.p_c = 0.95;
        assert_eq!(c.update(0.95), CurriculumEvent::EnteredRulesOnly);
        assert_eq!(c.phase, Phase::RulesOnly);
        assert_eq!(c.working_set, 40);
    }
}
