//! Canonical concrete syntax. Printing then parsing yields the same AST.

use std::fmt::{self, Display, Formatter, Write};

use super::ast::*;

/// Where a formula is printed: at the top of a scope a quantifier may run
/// to the end; as an operand it needs at least `min` precedence.
#[derive(Clone, Copy)]
enum Ctx {
    Top,
    Operand(u8),
}

fn prec(f: &Formula) -> u8 {
    match f {
        Formula::Implies(..) => 1,
        Formula::Or(_) => 2,
        Formula::And(_) => 3,
        Formula::Not(_) => 4,
        Formula::Forall(..) | Formula::Exists(..) => 0,
        _ => 5,
    }
}

fn write_formula(out: &mut impl Write, f: &Formula, ctx: Ctx) -> fmt::Result {
    let paren = match ctx {
        Ctx::Top => false,
        Ctx::Operand(min) => prec(f) < min,
    };
    if paren {
        out.write_char('(')?;
    }
    match f {
        Formula::Rel { name, args } => {
            out.write_str(name)?;
            if !args.is_empty() {
                write_args(out, args)?;
            }
        }
        Formula::Equals(a, b) => write!(out, "{a} = {b}")?,
        Formula::Not(g) => {
            out.write_char('~')?;
            write_formula(out, g, Ctx::Operand(4))?;
        }
        Formula::And(fs) | Formula::Or(fs) => {
            let (sep, min) = if matches!(f, Formula::And(_)) {
                (" & ", 4)
            } else {
                (" | ", 3)
            };
            for (i, g) in fs.iter().enumerate() {
                if i > 0 {
                    out.write_str(sep)?;
                }
                write_formula(out, g, Ctx::Operand(min))?;
            }
        }
        Formula::Implies(a, b) => {
            write_formula(out, a, Ctx::Operand(2))?;
            out.write_str(" -> ")?;
            write_formula(out, b, Ctx::Operand(1))?;
        }
        Formula::Forall(b, g) | Formula::Exists(b, g) => {
            out.write_str(if matches!(f, Formula::Forall(..)) {
                "forall "
            } else {
                "exists "
            })?;
            if b.vars.len() == 1 {
                out.write_str(&b.vars[0])?;
            } else {
                write!(out, "({})", b.vars.join(", "))?;
            }
            write!(out, ": {} . ", b.domain)?;
            write_formula(out, g, Ctx::Top)?;
        }
        Formula::SoftSelect { index, vector } => {
            write!(out, "pi[{index}](")?;
            write_formula(out, vector, Ctx::Top)?;
            out.write_char(')')?;
        }
        Formula::Bool(b) => out.write_str(if *b { "true" } else { "false" })?,
        Formula::BoolVec(name) => out.write_str(name)?,
        Formula::BoolVecAt { name, index } => write!(out, "{name}({index})")?,
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

fn write_args(out: &mut impl Write, args: &[Term]) -> fmt::Result {
    out.write_char('(')?;
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.write_str(", ")?;
        }
        write!(out, "{a}")?;
    }
    out.write_char(')')
}

fn term_prec(t: &Term) -> u8 {
    match t {
        Term::Arith(ArithOp::Add, ..) => 1,
        Term::Arith(ArithOp::Mod, ..) => 2,
        _ => 3,
    }
}

fn write_term(out: &mut impl Write, t: &Term, min: u8) -> fmt::Result {
    let paren = term_prec(t) < min;
    if paren {
        out.write_char('(')?;
    }
    match t {
        Term::Var { name, .. } | Term::Const(name) => out.write_str(name)?,
        Term::App(name, args) => {
            out.write_str(name)?;
            write_args(out, args)?;
        }
        Term::Int(n) => write!(out, "{n}")?,
        Term::Arith(op, a, b) => {
            let (sym, p) = match op {
                ArithOp::Add => (" + ", 1),
                ArithOp::Mod => (" mod ", 2),
            };
            write_term(out, a, p)?;
            out.write_str(sym)?;
            write_term(out, b, p + 1)?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

impl Display for Term {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_term(f, self, 0)
    }
}

impl Display for Formula {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write_formula(f, self, Ctx::Top)
    }
}

fn write_binding(f: &mut Formatter<'_>, b: &Binding) -> fmt::Result {
    match b {
        Binding::Extern(name) => write!(f, " extern {name}"),
        Binding::Mlp { hidden, act } => {
            f.write_str(" mlp")?;
            for (i, h) in hidden.iter().enumerate() {
                write!(f, "{}{h}", if i == 0 { " " } else { ", " })?;
            }
            write!(f, " act {}", act.name())
        }
    }
}

impl Display for SortDecl {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        write!(f, "sort {}", self.name)?;
        match self.repr {
            SortRepr::Embedding { card, dim } => write!(f, " card {card} dim {dim}")?,
            SortRepr::Data { dim } => write!(f, " dim {dim}")?,
            SortRepr::Index { card } => write!(f, " card {card}")?,
        }
        if let Some(src) = &self.source {
            write!(f, " from {src:?}")?;
        }
        f.write_char(';')
    }
}

impl Display for Theory {
    fn fmt(&self, f: &mut Formatter<'_>) -> fmt::Result {
        for s in &self.sorts {
            writeln!(f, "{s}")?;
        }
        for c in &self.consts {
            writeln!(
                f,
                "const {} : {}{};",
                c.name,
                c.sort,
                if c.learned { " learned" } else { "" }
            )?;
        }
        for d in &self.data {
            write!(f, "data {} : {}", d.name, d.columns.join(" x "))?;
            if let Some(src) = &d.source {
                write!(f, " from {src:?}")?;
            }
            writeln!(f, ";")?;
        }
        for b in &self.boolvecs {
            let members: Vec<String> = b.members.iter().map(|m| m.to_string()).collect();
            writeln!(f, "boolvec {} : {} = {{{}}};", b.name, b.sort, members.join(", "))?;
        }
        for d in &self.funcs {
            write!(f, "func {} : {} -> {}", d.name, d.args.join(" x "), d.result)?;
            write_binding(f, &d.binding)?;
            writeln!(f, ";")?;
        }
        for d in &self.rels {
            write!(f, "rel {} : {}", d.name, d.args.join(" x "))?;
            if let Some(n) = d.out {
                write!(f, " out {n}")?;
            }
            write_binding(f, &d.binding)?;
            writeln!(f, ";")?;
        }
        for a in &self.axioms {
            writeln!(f, "axiom {} : {};", a.name, a.formula)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::super::parser::{parse_formula, parse_source};

    #[test]
    fn round_trips() {
        for src in [
            "P(x) -> Q(x) -> R(x)",
            "(P(x) -> Q(x)) -> R(x)",
            "(P(x) | Q(x)) & ~(R(x) & S(x))",
            "(forall x: D . P(x)) & Q(c)",
            "~(exists (a, b): T . a = b)",
            "pi[(y1 + y2) mod 10](digit(x) & mask)",
            "y1 + y2 mod 10 = y3 + (a + b)",
            "P & true | false",
        ] {
            let f = parse_formula(src).unwrap();
            let printed = f.to_string();
            assert_eq!(parse_formula(&printed).unwrap(), f, "{src} printed as {printed}");
        }
    }

    #[test]
    fn theory_round_trip() {
        let src = "sort D card 4;\nsort Img dim 3 from \"img.csv\";\nconst c : D;\n\
                   data T : Img x D;\nboolvec m : D = {1, 3};\n\
                   func f : D x D -> D mlp 8, 4 act relu;\nrel P : D extern pred;\n\
                   rel cls : Img out 4 mlp act tanh;\n\
                   axiom a : forall (x, y): T . pi[y](cls(x)) & P(f(y, c));\n";
        let t = parse_source(src).unwrap();
        assert_eq!(parse_source(&t.to_string()).unwrap(), t);
    }
}
