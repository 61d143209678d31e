/// Center-format box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }
}

/// A subject/object box pair with class ids and the predicate label.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxPair {
    pub subject: BBox,
    pub object: BBox,
    pub subject_class: usize,
    pub object_class: usize,
    pub predicate: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, thiserror::Error)]
#[error("box has non-positive width or height")]
pub struct DegenerateBox;

/// Relative position and log size ratios of the two boxes.
pub fn spatial_features(pair: &BoxPair) -> Result<[f64; 8], DegenerateBox> {
    let (s, o) = (pair.subject, pair.object);
    if !(s.w > 0.0 && s.h > 0.0 && o.w > 0.0 && o.h > 0.0) {
        return Err(DegenerateBox);
    }
    Ok([
        (s.x - o.x) / o.w,
        (s.y - o.y) / o.h,
        (o.x - s.x) / s.w,
        (o.y - s.y) / s.h,
        (s.w / o.w).ln(),
        (s.h / o.h).ln(),
        (o.w / s.w).ln(),
        (o.h / s.h).ln(),
    ])
}

/// Crisp spatial relations of a pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpatialPredicates {
    pub above: bool,
    pub below: bool,
    pub right_of: bool,
    pub left_of: bool,
}

pub fn spatial_predicates(pair: &BoxPair) -> SpatialPredicates {
    let (s, o) = (pair.subject, pair.object);
    SpatialPredicates {
        above: s.y >= o.y,
        below: s.y <= o.y,
        right_of: s.x >= o.x,
        left_of: s.x <= o.x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(s: BBox, o: BBox) -> BoxPair {
        BoxPair {
            subject: s,
            object: o,
            subject_class: 0,
            object_class: 0,
            predicate: 0,
        }
    }

    #[test]
    fn identical_boxes() {
        let b = BBox::new(3.0, 4.0, 1.5, 2.0);
        assert_eq!(spatial_features(&pair(b, b)).unwrap(), [0.0; 8]);
    }

    #[test]
    fn worked_example() {
        let f = spatial_features(&pair(BBox::new(2.0, 2.0, 2.0, 2.0), BBox::new(1.0, 1.0, 1.0, 1.0))).unwrap();
        let l2 = 2f64.ln();
        let want = [1.0, 1.0, -0.5, -0.5, l2, l2, -l2, -l2];
        for (a, b) in f.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn predicates_and_degenerate() {
        let p = pair(BBox::new(0.0, 3.0, 1.0, 1.0), BBox::new(1.0, 1.0, 1.0, 1.0));
        let r = spatial_predicates(&p);
        assert!(r.above && !r.below && r.left_of && !r.right_of);
        let level = spatial_predicates(&pair(BBox::new(0.0, 1.0, 1.0, 1.0), BBox::new(0.0, 1.0, 2.0, 2.0)));
        assert!(level.above && level.below);
        assert!(spatial_features(&pair(BBox::new(0.0, 0.0, 0.0, 1.0), BBox::new(0.0, 0.0, 1.0, 1.0))).is_err());
    }
}
