//! The model formula language.
//!
//! Grammar (EBNF, whitespace-insensitive):
//!
//! ```text
//! formula     = element , { "+" , element } ;
//! element     = "offset" , "(" , term , ")"
//!             | "constraint" , "(" , base , cmp , INT , ")"
//!             | term ;
//! term        = factor , [ "*" , interaction ] ;
//! factor      = "sqrt" , "(" , base , ")"
//!             | "log"  , "(" , base , ")"
//!             | "power" , "(" , base , "," , NUMBER , ")"
//!             | "scale" , "(" , base , "," , NUMBER , ")"
//!             | base ;
//! base        = "edges" | "mutual" | "ttriad" | "fourcycle"
//!             | ( "nodematch" | "nodeicov" | "nodeocov" ) , "(" , IDENT , ")" ;
//! interaction = "I" , "(" , "n" , "==" , INT , ")"
//!             | "log" , "(" , "1" , "/" , "n" , ")" ;
//! cmp         = ">=" | "<=" ;
//! IDENT       = letter , { letter | digit | "_" | "." } ;
//! NUMBER      = [ "-" ] , digit , { digit } , [ "." , { digit } ] ;
//! INT         = NUMBER restricted to integers ;
//! ```
//!
//! The parser is a predictive recursive descent over this token set; errors
//! carry the byte position and what was expected. [`print_formula`] emits the
//! canonical text: `parse(print(m)) == m` for every valid model, and
//! `print(parse(s))` is idempotent canonicalization.

use crate::error::{Error, Result};
use crate::terms::{
    BaseTerm, Comparison, ConstraintSpec, Interaction, ModelSpec, OffsetSpec, TermSpec, Transform,
};

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(f64),
    Plus,
    Star,
    Slash,
    LParen,
    RParen,
    Comma,
    EqEq,
    Ge,
    Le,
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Number(v) => format!("number {v}"),
            Tok::Plus => "'+'".into(),
            Tok::Star => "'*'".into(),
            Tok::Slash => "'/'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::Comma => "','".into(),
            Tok::EqEq => "'=='".into(),
            Tok::Ge => "'>='".into(),
            Tok::Le => "'<='".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    fn error(&self, pos: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos,
            msg: msg.into(),
        }
    }

    fn next_token(&mut self) -> Result<(usize, Tok)> {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        if self.pos >= self.src.len() {
            return Ok((start, Tok::Eof));
        }
        let c = self.src[self.pos];
        let tok = match c {
            b'+' => {
                self.pos += 1;
                Tok::Plus
            }
            b'*' => {
                self.pos += 1;
                Tok::Star
            }
            b'/' => {
                self.pos += 1;
                Tok::Slash
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'=' => {
                if self.src.get(self.pos + 1) == Some(&b'=') {
                    self.pos += 2;
                    Tok::EqEq
                } else {
                    return Err(self.error(start, "expected '==' after '='"));
                }
            }
            b'>' | b'<' => {
                if self.src.get(self.pos + 1) == Some(&b'=') {
                    self.pos += 2;
                    if c == b'>' {
                        Tok::Ge
                    } else {
                        Tok::Le
                    }
                } else {
                    return Err(self.error(start, format!("expected '{}='", c as char)));
                }
            }
            b'-' | b'0'..=b'9' => {
                self.pos += 1;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                let v: f64 = text
                    .parse()
                    .map_err(|_| self.error(start, format!("invalid number '{text}'")))?;
                Tok::Number(v)
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                self.pos += 1;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric()
                        || self.src[self.pos] == b'_'
                        || self.src[self.pos] == b'.')
                {
                    self.pos += 1;
                }
                Tok::Ident(
                    std::str::from_utf8(&self.src[start..self.pos])
                        .unwrap()
                        .to_string(),
                )
            }
            other => {
                return Err(self.error(start, format!("unexpected character '{}'", other as char)))
            }
        };
        Ok((start, tok))
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
}

impl Parser {
    fn new(src: &str) -> Result<Self> {
        let mut lx = Lexer::new(src);
        let mut toks = Vec::new();
        loop {
            let (pos, tok) = lx.next_token()?;
            let done = tok == Tok::Eof;
            toks.push((pos, tok));
            if done {
                break;
            }
        }
        Ok(Parser { toks, at: 0 })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.at].1
    }

    fn pos(&self) -> usize {
        self.toks[self.at].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].1.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos(),
            msg: msg.into(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if *self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.error(format!(
                "expected {}, found {}",
                want.describe(),
                self.peek().describe()
            )))
        }
    }

    fn expect_ident(&mut self) -> Result<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.error(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn expect_number(&mut self) -> Result<f64> {
        match *self.peek() {
            Tok::Number(v) => {
                self.bump();
                Ok(v)
            }
            ref other => Err(self.error(format!("expected number, found {}", other.describe()))),
        }
    }

    fn expect_int(&mut self) -> Result<i64> {
        let pos = self.pos();
        let v = self.expect_number()?;
        if v.fract() != 0.0 || v.abs() > i64::MAX as f64 {
            return Err(Error::Parse {
                pos,
                msg: format!("expected integer literal, found {v}"),
            });
        }
        Ok(v as i64)
    }

    fn parse_base(&mut self) -> Result<BaseTerm> {
        let pos = self.pos();
        let name = self.expect_ident()?;
        match name.as_str() {
            "edges" => Ok(BaseTerm::Edges),
            "mutual" => Ok(BaseTerm::Mutual),
            "ttriad" => Ok(BaseTerm::Ttriad),
            "fourcycle" => Ok(BaseTerm::Fourcycle),
            "nodematch" | "nodeicov" | "nodeocov" => {
                self.expect(Tok::LParen)?;
                let attr = self.expect_ident()?;
                self.expect(Tok::RParen)?;
                Ok(match name.as_str() {
                    "nodematch" => BaseTerm::Nodematch(attr),
                    "nodeicov" => BaseTerm::Nodeicov(attr),
                    _ => BaseTerm::Nodeocov(attr),
                })
            }
            other => Err(Error::Parse {
                pos,
                msg: format!("unknown term '{other}'"),
            }),
        }
    }

    fn parse_factor(&mut self) -> Result<TermSpec> {
        if let Tok::Ident(name) = self.peek().clone() {
            let transform = match name.as_str() {
                "sqrt" => Some(Transform::Sqrt),
                "log" => Some(Transform::Log),
                "power" | "scale" => {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let base = self.parse_base()?;
                    self.expect(Tok::Comma)?;
                    let arg = self.expect_number()?;
                    self.expect(Tok::RParen)?;
                    let transform = if name == "power" {
                        Transform::Power(arg)
                    } else {
                        Transform::Scale(arg)
                    };
                    return Ok(TermSpec {
                        base,
                        transform: Some(transform),
                        interaction: None,
                    });
                }
                _ => None,
            };
            if let Some(tr) = transform {
                self.bump();
                self.expect(Tok::LParen)?;
                let base = self.parse_base()?;
                self.expect(Tok::RParen)?;
                return Ok(TermSpec {
                    base,
                    transform: Some(tr),
                    interaction: None,
                });
            }
        }
        Ok(TermSpec::base(self.parse_base()?))
    }

    fn parse_interaction(&mut self) -> Result<Interaction> {
        let pos = self.pos();
        let name = self.expect_ident()?;
        match name.as_str() {
            "I" => {
                self.expect(Tok::LParen)?;
                let npos = self.pos();
                let ident = self.expect_ident()?;
                if ident != "n" {
                    return Err(Error::Parse {
                        pos: npos,
                        msg: format!("expected 'n' in size indicator, found '{ident}'"),
                    });
                }
                self.expect(Tok::EqEq)?;
                let k = self.expect_int()?;
                if k < 1 {
                    return Err(Error::Parse {
                        pos: npos,
                        msg: format!("size indicator needs a positive size, found {k}"),
                    });
                }
                self.expect(Tok::RParen)?;
                Ok(Interaction::SizeIndicator(k as usize))
            }
            "log" => {
                self.expect(Tok::LParen)?;
                let onepos = self.pos();
                let one = self.expect_number()?;
                if one != 1.0 {
                    return Err(Error::Parse {
                        pos: onepos,
                        msg: "expected '1' in log(1/n)".to_string(),
                    });
                }
                self.expect(Tok::Slash)?;
                let npos = self.pos();
                let ident = self.expect_ident()?;
                if ident != "n" {
                    return Err(Error::Parse {
                        pos: npos,
                        msg: format!("expected 'n' in log(1/n), found '{ident}'"),
                    });
                }
                self.expect(Tok::RParen)?;
                Ok(Interaction::LogInverseSize)
            }
            other => Err(Error::Parse {
                pos,
                msg: format!("unknown interaction '{other}' (expected I(n == k) or log(1/n))"),
            }),
        }
    }

    fn parse_term(&mut self) -> Result<TermSpec> {
        let mut term = self.parse_factor()?;
        if *self.peek() == Tok::Star {
            self.bump();
            term.interaction = Some(self.parse_interaction()?);
        }
        Ok(term)
    }

    fn parse_element(&mut self, terms: &mut Vec<TermSpec>, offsets: &mut Vec<OffsetSpec>) -> Result<()> {
        if let Tok::Ident(name) = self.peek().clone() {
            if name == "offset" {
                self.bump();
                self.expect(Tok::LParen)?;
                let t = self.parse_term()?;
                self.expect(Tok::RParen)?;
                offsets.push(OffsetSpec::Term(t));
                return Ok(());
            }
            if name == "constraint" {
                self.bump();
                self.expect(Tok::LParen)?;
                let base = self.parse_base()?;
                let cmp = match self.peek() {
                    Tok::Ge => Comparison::Ge,
                    Tok::Le => Comparison::Le,
                    other => {
                        return Err(self.error(format!(
                            "expected '>=' or '<=', found {}",
                            other.describe()
                        )))
                    }
                };
                self.bump();
                let bound = self.expect_int()?;
                self.expect(Tok::RParen)?;
                offsets.push(OffsetSpec::Constraint(ConstraintSpec { base, cmp, bound }));
                return Ok(());
            }
        }
        terms.push(self.parse_term()?);
        Ok(())
    }
}

/// Parses formula text into a validated [`ModelSpec`].
pub fn parse_formula(text: &str, directed: bool) -> Result<ModelSpec> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::Parse {
            pos: 0,
            msg: "empty formula".to_string(),
        });
    }
    let mut p = Parser::new(text)?;
    let mut terms = Vec::new();
    let mut offsets = Vec::new();
    p.parse_element(&mut terms, &mut offsets)?;
    loop {
        match p.peek() {
            Tok::Eof => break,
            Tok::Plus => {
                p.bump();
                p.parse_element(&mut terms, &mut offsets)?;
            }
            other => {
                return Err(p.error(format!("expected '+' or end of input, found {}", other.describe())))
            }
        }
    }
    ModelSpec::new(terms, offsets, directed)
}

/// Canonical formula text for a model.
pub fn print_formula(model: &ModelSpec) -> String {
    let parts: Vec<String> = model
        .terms()
        .iter()
        .map(TermSpec::name)
        .chain(model.offsets().iter().map(OffsetSpec::name))
        .collect();
    parts.join(" + ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_basic() {
        let m = parse_formula("edges + ttriad", true).unwrap();
        assert_eq!(m.num_terms(), 2);
        assert!(m.offsets().is_empty());

        let m = parse_formula("edges + nodematch(gender) + sqrt(nodematch(gender))", true).unwrap();
        assert_eq!(m.num_terms(), 3);

        let m = parse_formula("edges + ttriad + offset(edges * log(1/n))", true).unwrap();
        assert_eq!(m.num_terms(), 2);
        assert_eq!(m.offsets().len(), 1);
    }

    #[test]
    fn parse_is_whitespace_insensitive() {
        let a = parse_formula("edges+ttriad*I(n==5)", true).unwrap();
        let b = parse_formula("  edges +  ttriad * I( n == 5 ) ", true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn print_roundtrip() {
        for f in [
            "edges + ttriad",
            "edges + edges * I(n == 5)",
            "edges + constraint(edges >= 5)",
            "edges + mutual + nodeicov(age) + offset(edges * log(1/n))",
            "nodematch(gender) + sqrt(nodematch(gender)) + power(edges, 2) + scale(ttriad, 0.5)",
            "edges + ttriad * log(1/n) + constraint(ttriad <= 3)",
        ] {
            let m = parse_formula(f, true).unwrap();
            let printed = print_formula(&m);
            let again = parse_formula(&printed, true).unwrap();
            assert_eq!(m, again, "roundtrip failed on {f}");
            assert_eq!(printed, print_formula(&again));
        }
    }

    #[test]
    fn errors_name_position_and_token() {
        let err = parse_formula("edgez", true).unwrap_err();
        match err {
            crate::error::Error::Parse { pos, msg } => {
                assert_eq!(pos, 0);
                assert!(msg.contains("edgez"));
            }
            other => panic!("unexpected error {other:?}"),
        }

        let err = parse_formula("edges + sqrt(edges", true).unwrap_err();
        assert!(matches!(err, crate::error::Error::Parse { .. }));

        let err = parse_formula("edges + edges", true).unwrap_err();
        assert!(matches!(err, crate::error::Error::Model(_)));

        let err = parse_formula("", true).unwrap_err();
        assert!(matches!(err, crate::error::Error::Parse { pos: 0, .. }));

        let err = parse_formula("edges + constraint(edges > 5)", true).unwrap_err();
        assert!(err.to_string().contains(">="));
    }

    proptest! {
        /// Random token soup either parses or yields a located error; the
        /// parser never panics.
        #[test]
        fn fuzz_never_panics(s in "[a-z0-9+*/(),.<>= _-]{0,60}") {
            let _ = parse_formula(&s, true);
        }

        #[test]
        fn print_parse_idempotent(pick in proptest::collection::vec(0usize..6, 1..5)) {
            let pool = [
                "edges", "mutual", "ttriad", "fourcycle",
                "nodematch(g)", "sqrt(nodematch(g))",
            ];
            let mut parts: Vec<&str> = pick.iter().map(|&i| pool[i]).collect();
            parts.dedup();
            parts.sort_unstable();
            parts.dedup();
            let text = parts.join(" + ");
            if let Ok(m) = parse_formula(&text, true) {
                let canon = print_formula(&m);
                let m2 = parse_formula(&canon, true).unwrap();
                prop_assert_eq!(canon.clone(), print_formula(&m2));
                prop_assert_eq!(m, m2);
            }
        }
    }
}
