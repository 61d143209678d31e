use super::ast::Formula;

/// Rewrite `|`, `->` and `exists` in terms of `~`, `&` and `forall`.
pub fn desugar(f: &Formula) -> Formula {
    match f {
        Formula::Not(g) => Formula::not(desugar(g)),
        Formula::And(fs) => Formula::And(fs.iter().map(desugar).collect()),
        Formula::Or(fs) => Formula::not(Formula::And(fs.iter().map(|g| Formula::not(desugar(g))).collect())),
        Formula::Implies(a, b) => Formula::not(Formula::And(vec![desugar(a), Formula::not(desugar(b))])),
        Formula::Forall(b, g) => Formula::Forall(b.clone(), Box::new(desugar(g))),
        Formula::Exists(b, g) => Formula::not(Formula::Forall(b.clone(), Box::new(Formula::not(desugar(g))))),
        Formula::SoftSelect { index, vector } => Formula::SoftSelect {
            index: index.clone(),
            vector: Box::new(desugar(vector)),
        },
        Formula::Rel { .. }
        | Formula::Equals(..)
        | Formula::Bool(_)
        | Formula::BoolVec(_)
        | Formula::BoolVecAt { .. } => f.clone(),
    }
}

/// True when `f` uses only the core connectives.
pub fn is_core(f: &Formula) -> bool {
    match f {
        Formula::Or(_) | Formula::Implies(..) | Formula::Exists(..) => false,
        Formula::Not(g) | Formula::Forall(_, g) => is_core(g),
        Formula::SoftSelect { vector, .. } => is_core(vector),
        Formula::And(fs) => fs.iter().all(is_core),
        _ => true,
    }
}

#[cfg(test)]
mod tests {
    use super::super::ast::{free_variables, Term};
    use super::*;

    fn p(n: &str) -> Formula {
        Formula::rel(n, vec![Term::var("x")])
    }

    #[test]
    fn de_morgan_forms() {
        assert_eq!(
            desugar(&Formula::Or(vec![p("P"), p("Q")])),
            Formula::not(Formula::And(vec![Formula::not(p("P")), Formula::not(p("Q"))]))
        );
        assert_eq!(
            desugar(&Formula::implies(p("P"), p("Q"))),
            Formula::not(Formula::And(vec![p("P"), Formula::not(p("Q"))]))
        );
        assert_eq!(
            desugar(&Formula::exists("x", "D", p("P"))),
            Formula::not(Formula::forall("x", "D", Formula::not(p("P"))))
        );
    }

    #[test]
    fn preserves_free_variables() {
        let f = Formula::implies(
            Formula::exists("x", "D", Formula::rel("R", vec![Term::var("x"), Term::var("y")])),
            Formula::Or(vec![p("P"), Formula::rel("Q", vec![Term::var("z")])]),
        );
        let d = desugar(&f);
        assert!(is_core(&d));
        assert_eq!(free_variables(&d), free_variables(&f));
    }
}
