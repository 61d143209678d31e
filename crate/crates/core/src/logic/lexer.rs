use std::fmt;

use super::LogicError;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    KwSort,
    KwConst,
    KwFunc,
    KwRel,
    KwData,
    KwBoolvec,
    KwAxiom,
    KwForall,
    KwExists,
    KwCard,
    KwDim,
    KwFrom,
    KwLearned,
    KwMlp,
    KwAct,
    KwExtern,
    KwOut,
    KwMod,
    KwPi,
    KwTrue,
    KwFalse,
    Ident(String),
    Int(i64),
    Str(String),
    Colon,
    Semi,
    Comma,
    Dot,
    LParen,
    RParen,
    LBracket,
    RBracket,
    LBrace,
    RBrace,
    Tilde,
    Amp,
    Pipe,
    Arrow,
    Eq,
    Plus,
}

impl Tok {
    fn keyword(word: &str) -> Option<Tok> {
        Some(match word {
            "sort" => Tok::KwSort,
            "const" => Tok::KwConst,
            "func" => Tok::KwFunc,
            "rel" => Tok::KwRel,
            "data" => Tok::KwData,
            "boolvec" => Tok::KwBoolvec,
            "axiom" => Tok::KwAxiom,
            "forall" => Tok::KwForall,
            "exists" => Tok::KwExists,
            "card" => Tok::KwCard,
            "dim" => Tok::KwDim,
            "from" => Tok::KwFrom,
            "learned" => Tok::KwLearned,
            "mlp" => Tok::KwMlp,
            "act" => Tok::KwAct,
            "extern" => Tok::KwExtern,
            "out" => Tok::KwOut,
            "mod" => Tok::KwMod,
            "pi" => Tok::KwPi,
            "true" => Tok::KwTrue,
            "false" => Tok::KwFalse,
            _ => return None,
        })
    }
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::KwSort => "sort",
            Tok::KwConst => "const",
            Tok::KwFunc => "func",
            Tok::KwRel => "rel",
            Tok::KwData => "data",
            Tok::KwBoolvec => "boolvec",
            Tok::KwAxiom => "axiom",
            Tok::KwForall => "forall",
            Tok::KwExists => "exists",
            Tok::KwCard => "card",
            Tok::KwDim => "dim",
            Tok::KwFrom => "from",
            Tok::KwLearned => "learned",
            Tok::KwMlp => "mlp",
            Tok::KwAct => "act",
            Tok::KwExtern => "extern",
            Tok::KwOut => "out",
            Tok::KwMod => "mod",
            Tok::KwPi => "pi",
            Tok::KwTrue => "true",
            Tok::KwFalse => "false",
            Tok::Ident(s) => return write!(f, "identifier `{s}`"),
            Tok::Int(n) => return write!(f, "integer {n}"),
            Tok::Str(s) => return write!(f, "string {s:?}"),
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Comma => ",",
            Tok::Dot => ".",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Tilde => "~",
            Tok::Amp => "&",
            Tok::Pipe => "|",
            Tok::Arrow => "->",
            Tok::Eq => "=",
            Tok::Plus => "+",
        };
        write!(f, "`{s}`")
    }
}

/// 1-based source position.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn tokenize(source: &str) -> Result<Vec<Token>, LogicError> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        let mut advance = |n: usize, i: &mut usize| {
            *i += n;
            col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += i - start;
            let tok = Tok::keyword(&word).unwrap_or(Tok::Ident(word));
            out.push(Token { tok, pos });
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            col += i - start;
            let n = digits.parse().map_err(|_| LogicError::Lex {
                pos,
                message: format!("integer literal {digits} is too large"),
            })?;
            out.push(Token { tok: Tok::Int(n), pos });
            continue;
        }
        if c == '"' {
            let start = i + 1;
            let mut j = start;
            while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                j += 1;
            }
            if j >= chars.len() || chars[j] != '"' {
                return Err(LogicError::Lex {
                    pos,
                    message: "unterminated string literal".into(),
                });
            }
            let s: String = chars[start..j].iter().collect();
            col += j + 1 - i;
            i = j + 1;
            out.push(Token { tok: Tok::Str(s), pos });
            continue;
        }
        let tok = match c {
            ':' => Tok::Colon,
            ';' => Tok::Semi,
            ',' => Tok::Comma,
            '.' => Tok::Dot,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '~' => Tok::Tilde,
            '&' => Tok::Amp,
            '|' => Tok::Pipe,
            '=' => Tok::Eq,
            '+' => Tok::Plus,
            '-' if chars.get(i + 1) == Some(&'>') => {
                advance(2, &mut i);
                out.push(Token { tok: Tok::Arrow, pos });
                continue;
            }
            _ => {
                return Err(LogicError::Lex {
                    pos,
                    message: format!("unexpected character {c:?}"),
                })
            }
        };
        advance(1, &mut i);
        out.push(Token { tok, pos });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    fn id(s: &str) -> Tok {
        Tok::Ident(s.to_string())
    }

    #[test]
    fn quantifier_prefix() {
        assert_eq!(
            toks("forall x: D ."),
            vec![Tok::KwForall, id("x"), Tok::Colon, id("D"), Tok::Dot]
        );
    }

    #[test]
    fn empty_and_comments() {
        assert!(toks("").is_empty());
        assert!(toks("  # only a comment\n\t").is_empty());
    }

    #[test]
    fn axiom_statement() {
        assert_eq!(
            toks("axiom a1: P(c);"),
            vec![
                Tok::KwAxiom,
                id("a1"),
                Tok::Colon,
                id("P"),
                Tok::LParen,
                id("c"),
                Tok::RParen,
                Tok::Semi
            ]
        );
    }

    #[test]
    fn positions_and_errors() {
        let t = tokenize("a\n  -> b").unwrap();
        assert_eq!(t[1].pos, Pos { line: 2, col: 3 });
        assert_eq!(t[2].pos, Pos { line: 2, col: 6 });
        match tokenize("P(x) $") {
            Err(LogicError::Lex { pos, .. }) => assert_eq!(pos, Pos { line: 1, col: 6 }),
            other => panic!("{other:?}"),
        }
        assert!(tokenize("a - b").is_err());
        assert_eq!(toks("data T : A from \"f.csv\";")[5], Tok::Str("f.csv".into()));
    }
}
