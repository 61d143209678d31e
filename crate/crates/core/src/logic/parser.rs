use super::ast::*;
use super::lexer::{tokenize, Pos, Tok, Token};
use super::LogicError;

type PResult<T> = Result<T, LogicError>;

/// Tokenize and parse a theory source.
pub fn parse_source(source: &str) -> PResult<Theory> {
    parse_theory(&tokenize(source)?)
}

/// Parse a single formula (no trailing `;`).
pub fn parse_formula(source: &str) -> PResult<Formula> {
    let toks = tokenize(source)?;
    let mut p = Parser::new(&toks);
    let f = p.formula()?;
    p.expect_end()?;
    Ok(f)
}

pub fn parse_theory(tokens: &[Token]) -> PResult<Theory> {
    let mut p = Parser::new(tokens);
    let mut theory = Theory::default();
    while !p.at_end() {
        theory.push(p.statement()?);
    }
    Ok(theory)
}

struct Parser<'a> {
    toks: &'a [Token],
    i: usize,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token]) -> Self {
        Self { toks, i: 0 }
    }

    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.i).map(|t| &t.tok)
    }

    fn pos(&self) -> Pos {
        match self.toks.get(self.i) {
            Some(t) => t.pos,
            None => self
                .toks
                .last()
                .map(|t| Pos {
                    line: t.pos.line,
                    col: t.pos.col + 1,
                })
                .unwrap_or(Pos { line: 1, col: 1 }),
        }
    }

    fn error(&self, expected: &[&str]) -> LogicError {
        LogicError::Parse {
            pos: self.pos(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self
                .peek()
                .map(|t| t.to_string())
                .unwrap_or_else(|| "end of input".into()),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.error(&[&tok.to_string()]))
        }
    }

    fn expect_end(&self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error(&["end of input"]))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match self.peek() {
            Some(Tok::Int(n)) => {
                let n = *n;
                self.i += 1;
                Ok(n)
            }
            _ => Err(self.error(&["integer"])),
        }
    }

    fn positive(&mut self) -> PResult<usize> {
        let pos = self.pos();
        let n = self.int()?;
        if n < 1 {
            return Err(LogicError::Parse {
                pos,
                expected: vec!["positive integer".into()],
                found: n.to_string(),
            });
        }
        Ok(n as usize)
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.i += 1;
                Ok(s)
            }
            _ => Err(self.error(&["string"])),
        }
    }

    fn statement(&mut self) -> PResult<Decl> {
        let kw = self.peek().cloned();
        let d = match kw {
            Some(Tok::KwSort) => {
                self.i += 1;
                self.sort_decl()?
            }
            Some(Tok::KwConst) => {
                self.i += 1;
                let name = self.ident()?;
                self.expect(Tok::Colon)?;
                let sort = self.ident()?;
                let learned = self.eat(&Tok::KwLearned);
                Decl::Const(ConstDecl { name, sort, learned })
            }
            Some(Tok::KwFunc) => {
                self.i += 1;
                let name = self.ident()?;
                self.expect(Tok::Colon)?;
                let args = self.sort_list()?;
                self.expect(Tok::Arrow)?;
                let result = self.ident()?;
                let binding = self.binding()?;
                Decl::Func(FuncDecl {
                    name,
                    args,
                    result,
                    binding,
                })
            }
            Some(Tok::KwRel) => {
                self.i += 1;
                let name = self.ident()?;
                self.expect(Tok::Colon)?;
                let args = self.sort_list()?;
                let out = if self.eat(&Tok::KwOut) {
                    Some(self.positive()?)
                } else {
                    None
                };
                let binding = self.binding()?;
                Decl::Rel(RelDecl {
                    name,
                    args,
                    out,
                    binding,
                })
            }
            Some(Tok::KwData) => {
                self.i += 1;
                let name = self.ident()?;
                self.expect(Tok::Colon)?;
                let columns = self.sort_list()?;
                let source = if self.eat(&Tok::KwFrom) {
                    Some(self.string()?)
                } else {
                    None
                };
                Decl::Data(DataDecl { name, columns, source })
            }
            Some(Tok::KwBoolvec) => {
                self.i += 1;
                let name = self.ident()?;
                self.expect(Tok::Colon)?;
                let sort = self.ident()?;
                self.expect(Tok::Eq)?;
                self.expect(Tok::LBrace)?;
                let mut members = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        let pos = self.pos();
                        let n = self.int()?;
                        if n < 0 {
                            return Err(LogicError::Parse {
                                pos,
                                expected: vec!["non-negative integer".into()],
                                found: n.to_string(),
                            });
                        }
                        members.push(n as usize);
                        if self.eat(&Tok::RBrace) {
                            break;
                        }
                        self.expect(Tok::Comma)?;
                    }
                }
                Decl::BoolVec(BoolVecDecl { name, sort, members })
            }
            Some(Tok::KwAxiom) => {
                self.i += 1;
                let name = self.ident()?;
                self.expect(Tok::Colon)?;
                let formula = self.formula()?;
                Decl::Axiom(Axiom { name, formula })
            }
            _ => return Err(self.error(&["sort", "const", "func", "rel", "data", "boolvec", "axiom"])),
        };
        self.expect(Tok::Semi)?;
        Ok(d)
    }

    fn sort_decl(&mut self) -> PResult<Decl> {
        let name = self.ident()?;
        let card = if self.eat(&Tok::KwCard) {
            Some(self.positive()?)
        } else {
            None
        };
        let dim = if self.eat(&Tok::KwDim) {
            Some(self.positive()?)
        } else {
            None
        };
        let source = if self.eat(&Tok::KwFrom) {
            Some(self.string()?)
        } else {
            None
        };
        let repr = match (card, dim) {
            (Some(card), Some(dim)) => SortRepr::Embedding { card, dim },
            (Some(card), None) => SortRepr::Index { card },
            (None, Some(dim)) => SortRepr::Data { dim },
            (None, None) => return Err(self.error(&["card", "dim"])),
        };
        Ok(Decl::Sort(SortDecl { name, repr, source }))
    }

    /// `S1 x S2 x ...`, where `x` is an ordinary identifier used as separator.
    fn sort_list(&mut self) -> PResult<Vec<String>> {
        let mut out = vec![self.ident()?];
        while self.peek() == Some(&Tok::Ident("x".into())) {
            self.i += 1;
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn binding(&mut self) -> PResult<Binding> {
        if self.eat(&Tok::KwExtern) {
            return Ok(Binding::Extern(self.ident()?));
        }
        if !self.eat(&Tok::KwMlp) {
            return Err(self.error(&["mlp", "extern"]));
        }
        let mut hidden = Vec::new();
        if matches!(self.peek(), Some(Tok::Int(_))) {
            hidden.push(self.positive()?);
            while self.eat(&Tok::Comma) {
                hidden.push(self.positive()?);
            }
        }
        let act = if self.eat(&Tok::KwAct) {
            let pos = self.pos();
            let name = self.ident()?;
            Activation::parse(&name).ok_or(LogicError::Parse {
                pos,
                expected: vec!["sigmoid".into(), "relu".into(), "tanh".into()],
                found: name,
            })?
        } else {
            Activation::Sigmoid
        };
        Ok(Binding::Mlp { hidden, act })
    }

    fn formula(&mut self) -> PResult<Formula> {
        let lhs = self.disjunction()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.formula()?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.conjunction()?];
        while self.eat(&Tok::Pipe) {
            parts.push(self.conjunction()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::Or(parts)
        })
    }

    fn conjunction(&mut self) -> PResult<Formula> {
        let mut parts = vec![self.unary()?];
        while self.eat(&Tok::Amp) {
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            Formula::And(parts)
        })
    }

    fn unary(&mut self) -> PResult<Formula> {
        if self.eat(&Tok::Tilde) {
            return Ok(Formula::not(self.unary()?));
        }
        self.primary()
    }

    fn binder(&mut self) -> PResult<Binder> {
        let vars = if self.eat(&Tok::LParen) {
            let mut vs = vec![self.ident()?];
            while self.eat(&Tok::Comma) {
                vs.push(self.ident()?);
            }
            self.expect(Tok::RParen)?;
            vs
        } else {
            vec![self.ident()?]
        };
        self.expect(Tok::Colon)?;
        let domain = self.ident()?;
        self.expect(Tok::Dot)?;
        Ok(Binder { vars, domain })
    }

    fn primary(&mut self) -> PResult<Formula> {
        match self.peek() {
            Some(Tok::KwForall) => {
                self.i += 1;
                let b = self.binder()?;
                Ok(Formula::Forall(b, Box::new(self.formula()?)))
            }
            Some(Tok::KwExists) => {
                self.i += 1;
                let b = self.binder()?;
                Ok(Formula::Exists(b, Box::new(self.formula()?)))
            }
            Some(Tok::KwPi) => {
                self.i += 1;
                self.expect(Tok::LBracket)?;
                let index = self.term()?;
                self.expect(Tok::RBracket)?;
                self.expect(Tok::LParen)?;
                let vector = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(Formula::SoftSelect {
                    index,
                    vector: Box::new(vector),
                })
            }
            Some(Tok::KwTrue) => {
                self.i += 1;
                Ok(Formula::Bool(true))
            }
            Some(Tok::KwFalse) => {
                self.i += 1;
                Ok(Formula::Bool(false))
            }
            Some(Tok::LParen | Tok::Ident(_) | Tok::Int(_)) => {
                let start = self.i;
                if let Ok(lhs) = self.term() {
                    if self.eat(&Tok::Eq) {
                        let rhs = self.term()?;
                        return Ok(Formula::Equals(lhs, rhs));
                    }
                }
                self.i = start;
                if self.eat(&Tok::LParen) {
                    let f = self.formula()?;
                    self.expect(Tok::RParen)?;
                    return Ok(f);
                }
                let name = self.ident()?;
                let args = if self.eat(&Tok::LParen) {
                    self.term_list()?
                } else {
                    Vec::new()
                };
                Ok(Formula::Rel { name, args })
            }
            _ => Err(self.error(&["formula"])),
        }
    }

    fn term_list(&mut self) -> PResult<Vec<Term>> {
        let mut args = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(args);
        }
        loop {
            args.push(self.term()?);
            if self.eat(&Tok::RParen) {
                return Ok(args);
            }
            self.expect(Tok::Comma)?;
        }
    }

    fn term(&mut self) -> PResult<Term> {
        let mut t = self.mod_term()?;
        while self.eat(&Tok::Plus) {
            let rhs = self.mod_term()?;
            t = Term::Arith(ArithOp::Add, Box::new(t), Box::new(rhs));
        }
        Ok(t)
    }

    fn mod_term(&mut self) -> PResult<Term> {
        let mut t = self.atom_term()?;
        while self.eat(&Tok::KwMod) {
            let rhs = self.atom_term()?;
            t = Term::Arith(ArithOp::Mod, Box::new(t), Box::new(rhs));
        }
        Ok(t)
    }

    fn atom_term(&mut self) -> PResult<Term> {
        match self.peek() {
            Some(Tok::Int(_)) => Ok(Term::Int(self.int()?)),
            Some(Tok::LParen) => {
                self.i += 1;
                let t = self.term()?;
                self.expect(Tok::RParen)?;
                Ok(t)
            }
            Some(Tok::Ident(_)) => {
                let name = self.ident()?;
                if self.eat(&Tok::LParen) {
                    Ok(Term::App(name, self.term_list()?))
                } else {
                    Ok(Term::var(&name))
                }
            }
            _ => Err(self.error(&["term"])),
        }
    }
}
