use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dasl::experiments::mnist::mnist_theory;
use dasl::experiments::relations::relations_theory;
use dasl::experiments::synth::Vocabulary;
use dasl::logic::{check_theory, desugar, is_core, load_theory, parse_formula, parse_source, Axiom, LogicError};
use dasl::oracle::{default_signature, tarski_eval, CrispModel, FormulaGen};

#[test]
fn printed_theories_parse_back() {
    let v = Vocabulary::default();
    let sources = [
        mnist_theory(false),
        mnist_theory(true),
        relations_theory(&v, 64, false),
        relations_theory(&v, 64, true),
        default_signature(3),
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../theories/family.dasl")).unwrap(),
    ];
    for src in sources {
        let t = parse_source(&src).unwrap();
        let printed = t.to_string();
        assert_eq!(parse_source(&printed).unwrap(), t, "{printed}");
        assert!(load_theory(&printed).is_ok());
    }
}

#[test]
fn random_formulas_print_and_parse() {
    let sig = load_theory(&default_signature(3)).unwrap();
    let gen = FormulaGen::new(sig.theory());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..300 {
        let f = gen.formula(4, &mut rng);
        let text = f.to_string();
        parse_formula(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
        // constants parse as names and are resolved by the checker
        let mut direct = sig.theory().clone();
        direct.axioms.push(Axiom {
            name: "t".into(),
            formula: f,
        });
        let direct = check_theory(&direct).unwrap();
        let parsed = load_theory(&format!("{}axiom t : {text};", default_signature(3))).unwrap();
        assert_eq!(parsed.theory().axioms, direct.theory().axioms, "{text}");
    }
}

#[test]
fn desugaring_keeps_classical_truth() {
    let sig = load_theory(&default_signature(3)).unwrap();
    let gen = FormulaGen::new(sig.theory());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sizes = BTreeMap::from([("D".to_string(), 3)]);
    for _ in 0..200 {
        let f = gen.formula(4, &mut rng);
        let core = desugar(&f);
        assert!(is_core(&core));
        let m = CrispModel::random(sig.theory(), &sizes, &mut rng).unwrap();
        let env = Default::default();
        assert_eq!(
            tarski_eval(&m, &f, &env).unwrap(),
            tarski_eval(&m, &core, &env).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn checker_reports_arity_and_unbound_symbols() {
    let base = "sort D card 2 dim 2;\nrel P : D extern P;\n";
    let errs = load_theory(&format!("{base}axiom a : forall x : D . forall y : D . P(x, y);")).unwrap_err();
    assert!(errs.iter().any(|e| matches!(e, LogicError::Sort { .. })), "{errs:?}");
    let errs = load_theory(&format!("{base}axiom a : forall x : D . R(x);")).unwrap_err();
    assert!(errs.contains(&LogicError::Unbound("R".into())), "{errs:?}");
    assert!(load_theory(&format!("{base}axiom a : forall x : D . P(x);")).is_ok());
}

#[test]
fn syntax_errors_carry_positions() {
    let err = parse_source("sort D card 2;\naxiom a : forall x D . P(x);").unwrap_err();
    match err {
        LogicError::Parse { pos, .. } => assert_eq!(pos.line, 2),
        other => panic!("{other:?}"),
    }
}
