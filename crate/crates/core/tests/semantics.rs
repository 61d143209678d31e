use proptest::prelude::*;

use dasl::semantics::{
    and, bool_vector, equality_logit, implies, loss, mask_classes, neg, or, softmax, softselect, softselect_all,
    EqualityParams, BIG,
};

fn sigmoid(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

proptest! {
    #[test]
    fn conjunction_is_the_product_of_truths(ls in prop::collection::vec(-8.0f64..8.0, 1..6)) {
        let got = sigmoid(and(&ls).unwrap());
        let want: f64 = ls.iter().map(|&l| sigmoid(l)).product();
        prop_assert!((got - want).abs() <= 1e-12 + 1e-9 * want);
    }

    #[test]
    fn conjunction_is_symmetric_and_below_each_operand(a in -30.0f64..30.0, b in -30.0f64..30.0) {
        let ab = and(&[a, b]).unwrap();
        prop_assert_eq!(ab, and(&[b, a]).unwrap());
        prop_assert!(ab <= a.min(b) + 1e-9);
    }

    #[test]
    fn de_morgan_forms_agree(a in -30.0f64..30.0, b in -30.0f64..30.0) {
        prop_assert!((or(&[a, b]).unwrap() - neg(and(&[neg(a), neg(b)]).unwrap())).abs() < 1e-12);
        prop_assert!((implies(a, b) - or(&[neg(a), b]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn loss_of_a_conjunction_splits_into_terms(ls in prop::collection::vec(-8.0f64..8.0, 1..6)) {
        let sum: f64 = ls.iter().map(|&l| loss(l)).sum();
        prop_assert!((loss(and(&ls).unwrap()) - sum).abs() < 1e-9 * (1.0 + sum));
    }

    #[test]
    fn softselect_is_the_logit_of_softmax(v in prop::collection::vec(-10.0f64..10.0, 2..8)) {
        let p = softmax(&v);
        let all = softselect_all(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (i, (&l, &pi)) in all.iter().zip(&p).enumerate() {
            prop_assert!((sigmoid(l) - pi).abs() < 1e-12);
            prop_assert!((softselect(&v, i).unwrap() - l).abs() < 1e-12);
        }
    }

    #[test]
    fn softselect_ignores_a_common_shift(v in prop::collection::vec(-10.0f64..10.0, 2..8), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        for (a, b) in softselect_all(&v).unwrap().iter().zip(softselect_all(&shifted).unwrap()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn equality_is_symmetric_and_peaks_at_zero(u in prop::collection::vec(-3.0f64..3.0, 3), v in prop::collection::vec(-3.0f64..3.0, 3)) {
        let p = EqualityParams::default();
        let uv = equality_logit(&u, &v, &p).unwrap();
        prop_assert_eq!(uv, equality_logit(&v, &u, &p).unwrap());
        prop_assert!(uv <= equality_logit(&u, &u, &p).unwrap());
    }

    // the error grows like e^c · e^-BIG, so moderate class logits only
    #[test]
    fn unmasked_classes_pass_through(c in prop::collection::vec(-5.0f64..5.0, 1..6), cond in -BIG..BIG) {
        let mask = bool_vector(&vec![false; c.len()]);
        for (a, b) in c.iter().zip(mask_classes(&c, &mask, cond).unwrap()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn masked_class_under_false_condition_is_pushed_down() {
    let out = mask_classes(&[0.0, 0.0], &bool_vector(&[true, false]), -BIG).unwrap();
    assert!(out[0] <= -15.0);
    assert!(out[1].abs() < 1e-6);
    let p = softmax(&out);
    assert!(p[0] < 1e-8);
}

#[test]
fn empty_connectives_are_errors() {
    assert!(and(&[]).is_err());
    assert!(or(&[]).is_err());
    assert!(softselect(&[1.0], 0).is_err());
    assert!(softselect(&[1.0, 2.0], 2).is_err());
    assert!(EqualityParams::new(0.6, 1.0, 0.5).is_err());
}
