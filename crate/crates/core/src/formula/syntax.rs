//! Textual syntax for symbolic heaps.
//!
//! ```text
//! heap   = [ "E" IDENT { IDENT } "." ] atom { ( "&" | "*" ) atom } ;
//! atom   = "emp"
//!        | term "=" term | term "!=" term | IDENT "=" INT
//!        | term "->" "(" [ IDENT ":" term { "," IDENT ":" term } ] ")"
//!        | "ls"  [ "[" IDENT "]" ]                    "(" INT "+" ";" term "," term ")"
//!        | "dls" [ "[" IDENT "," IDENT "]" ]          "(" INT "+" ";" term "," term "," term "," term ")"
//!        | "nls" [ "[" IDENT "," IDENT "," IDENT "]" ] "(" INT "+" ";" term "," term "," term ")"
//!        | "freed" "(" term ")" ;
//! term   = "nil" | IDENT ;
//! entail = heap "|-" heap ;
//! ```
//!
//! Identifiers bound by `E` are existentials, all others are program
//! variables. Link fields default to `next`, `prev`, `nested`.

use std::collections::BTreeSet;
use std::sync::Arc;

use super::{DllShape, NllShape, PureAtom, SllShape, SpatialAtom, SymbolicHeap, Var};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("formula syntax error at offset {offset}: {message}")]
pub struct FormulaParseError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(i64),
    Punct(&'static str),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, FormulaParseError> {
    const PUNCT: [&str; 16] = [
        "|-", "->", "!=", ".", ",", ";", "(", ")", "[", "]", "&", "*", "=", "+", ":", "-",
    ];
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
            continue;
        }
        let neg = c == '-' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit();
        if c.is_ascii_digit() || neg {
            let start = i;
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let value = src[start..i].parse().map_err(|_| FormulaParseError {
                offset: start,
                message: "integer out of range".into(),
            })?;
            out.push((start, Tok::Int(value)));
            continue;
        }
        for p in PUNCT {
            if src[i..].starts_with(p) {
                out.push((i, Tok::Punct(p)));
                i += p.len();
                continue 'outer;
            }
        }
        return Err(FormulaParseError {
            offset: i,
            message: format!("unexpected character {c:?}"),
        });
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    bound: BTreeSet<String>,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T, FormulaParseError> {
        Err(FormulaParseError {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn eat(&mut self, p: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Punct(q)) if *q == p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, p: &str) -> Result<(), FormulaParseError> {
        if self.eat(p) {
            Ok(())
        } else {
            self.err(format!("expected `{p}`"))
        }
    }

    fn ident(&mut self) -> Result<String, FormulaParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.err("expected identifier"),
        }
    }

    fn int(&mut self) -> Result<i64, FormulaParseError> {
        match self.peek() {
            Some(Tok::Int(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected integer"),
        }
    }

    fn term(&mut self) -> Result<Var, FormulaParseError> {
        let name = self.ident()?;
        Ok(self.var(&name))
    }

    fn var(&self, name: &str) -> Var {
        if name == "nil" {
            Var::Nil
        } else if self.bound.contains(name) {
            Var::Ex(Arc::from(name))
        } else {
            Var::Prog(Arc::from(name))
        }
    }

    fn min(&mut self) -> Result<u8, FormulaParseError> {
        let v = self.int()?;
        self.expect("+")?;
        self.expect(";")?;
        u8::try_from(v).or_else(|_| self.err("minimum length out of range"))
    }

    fn fields(&mut self, n: usize) -> Result<Option<Vec<String>>, FormulaParseError> {
        if !self.eat("[") {
            return Ok(None);
        }
        let mut out = vec![self.ident()?];
        while out.len() < n {
            self.expect(",")?;
            out.push(self.ident()?);
        }
        self.expect("]")?;
        Ok(Some(out))
    }

    fn heap(&mut self) -> Result<SymbolicHeap, FormulaParseError> {
        let mut h = SymbolicHeap::emp();
        if matches!(self.peek(), Some(Tok::Ident(e)) if e == "E")
            && matches!(self.peek_at(1), Some(Tok::Ident(_)))
        {
            self.pos += 1;
            let mut names = Vec::new();
            while !self.eat(".") {
                names.push(self.ident()?);
            }
            for n in names {
                if n == "nil" {
                    return self.err("nil cannot be bound");
                }
                h.exists.insert(Var::Ex(Arc::from(n.as_str())));
                self.bound.insert(n);
            }
        }
        loop {
            self.atom(&mut h)?;
            if !(self.eat("&") || self.eat("*")) {
                break;
            }
        }
        Ok(h)
    }

    fn atom(&mut self, h: &mut SymbolicHeap) -> Result<(), FormulaParseError> {
        let name = self.ident()?;
        let predicate = matches!(self.peek(), Some(Tok::Punct("(")) | Some(Tok::Punct("[")));
        match name.as_str() {
            "emp" => return Ok(()),
            "ls" if predicate => {
                let f = self.fields(1)?;
                self.expect("(")?;
                let min = self.min()?;
                let src = self.term()?;
                self.expect(",")?;
                let dst = self.term()?;
                self.expect(")")?;
                let shape = f
                    .map(|f| SllShape {
                        next: Arc::from(f[0].as_str()),
                    })
                    .unwrap_or_default();
                h.spatial.push(SpatialAtom::Ls {
                    min,
                    src,
                    dst,
                    shape,
                });
            }
            "dls" if predicate => {
                let f = self.fields(2)?;
                self.expect("(")?;
                let min = self.min()?;
                let first = self.term()?;
                self.expect(",")?;
                let last = self.term()?;
                self.expect(",")?;
                let prev = self.term()?;
                self.expect(",")?;
                let next = self.term()?;
                self.expect(")")?;
                let shape = f
                    .map(|f| DllShape {
                        next: Arc::from(f[0].as_str()),
                        prev: Arc::from(f[1].as_str()),
                    })
                    .unwrap_or_default();
                h.spatial.push(SpatialAtom::Dls {
                    min,
                    first,
                    last,
                    prev,
                    next,
                    shape,
                });
            }
            "nls" if predicate => {
                let f = self.fields(3)?;
                self.expect("(")?;
                let min = self.min()?;
                let src = self.term()?;
                self.expect(",")?;
                let dst = self.term()?;
                self.expect(",")?;
                let sink = self.term()?;
                self.expect(")")?;
                let shape = f
                    .map(|f| NllShape {
                        next: Arc::from(f[0].as_str()),
                        nested: Arc::from(f[1].as_str()),
                        inner: Arc::from(f[2].as_str()),
                    })
                    .unwrap_or_default();
                h.spatial.push(SpatialAtom::Nls {
                    min,
                    src,
                    dst,
                    sink,
                    shape,
                });
            }
            "freed" if predicate => {
                self.expect("(")?;
                let x = self.term()?;
                self.expect(")")?;
                h.spatial.push(SpatialAtom::Freed(x));
            }
            _ => {
                let lhs = self.var(&name);
                if self.eat("->") {
                    self.expect("(")?;
                    let mut fields = Vec::new();
                    if !self.eat(")") {
                        loop {
                            let f = self.ident()?;
                            self.expect(":")?;
                            let v = self.term()?;
                            fields.push((Arc::from(f.as_str()), v));
                            if self.eat(")") {
                                break;
                            }
                            self.expect(",")?;
                        }
                    }
                    h.spatial.push(SpatialAtom::points_to(lhs, fields));
                } else if self.eat("!=") {
                    let rhs = self.term()?;
                    h.pure.insert(PureAtom::neq(lhs, rhs));
                } else if self.eat("=") {
                    if let Some(Tok::Int(v)) = self.peek() {
                        let v = *v;
                        self.pos += 1;
                        h.pure.insert(PureAtom::IntVal(lhs, v));
                    } else {
                        let rhs = self.term()?;
                        h.pure.insert(PureAtom::eq(lhs, rhs));
                    }
                } else {
                    return self.err("expected `->`, `=` or `!=`");
                }
            }
        }
        Ok(())
    }

    fn finish(&self) -> Result<(), FormulaParseError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            self.err("trailing input")
        }
    }
}

fn parser(src: &str) -> Result<Parser, FormulaParseError> {
    Ok(Parser {
        toks: lex(src)?,
        pos: 0,
        end: src.len(),
        bound: BTreeSet::new(),
    })
}

pub fn parse_heap(src: &str) -> Result<SymbolicHeap, FormulaParseError> {
    let mut p = parser(src)?;
    let h = p.heap()?;
    p.finish()?;
    Ok(h)
}

/// Parses `lhs |- rhs`; binders on each side are local to that side.
pub fn parse_entailment(src: &str) -> Result<(SymbolicHeap, SymbolicHeap), FormulaParseError> {
    let mut p = parser(src)?;
    let lhs = p.heap()?;
    p.expect("|-")?;
    p.bound.clear();
    let rhs = p.heap()?;
    p.finish()?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn documented_example_round_trips() {
        let src = "E y z . x != nil & x -> (next: y) * ls(1+; y, nil) * freed(z)";
        let h = parse_heap(src).unwrap();
        assert_eq!(h.exists.len(), 2);
        assert_eq!(h.spatial.len(), 3);
        assert_eq!(h.to_string(), "E y z . nil != x & x -> (next: y) * ls(1+; y, nil) * freed(z)");
        assert_eq!(parse_heap(&h.to_string()).unwrap(), h);
    }

    #[test]
    fn custom_link_fields() {
        let h = parse_heap("dls[n, p](2+; a, b, nil, nil) * nls[nx, down, nx](0+; c, nil, nil)").unwrap();
        assert_eq!(parse_heap(&h.to_string()).unwrap(), h);
    }

    #[test]
    fn entailment_binders_are_per_side() {
        let (l, r) = parse_entailment("E y . x -> (next: y) |- y -> (next: nil)").unwrap();
        assert!(l.vars().contains(&Var::ex("y")));
        assert!(r.vars().contains(&Var::prog("y")));
    }

    #[test]
    fn errors_report_offset() {
        let e = parse_heap("x -> next").unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(parse_heap("ls(1+; x)").is_err());
        assert!(parse_heap("x = y extra").is_err());
    }

    fn var() -> impl Strategy<Value = &'static str> {
        prop_oneof![Just("x"), Just("y"), Just("nil"), Just("e")]
    }

    fn atom() -> impl Strategy<Value = String> {
        prop_oneof![
            (var(), var()).prop_map(|(a, b)| format!("{a} -> (next: {b})")),
            (0u8..3, var(), var()).prop_map(|(m, a, b)| format!("ls({m}+; {a}, {b})")),
            (0u8..3, var(), var(), var(), var())
                .prop_map(|(m, a, b, c, d)| format!("dls({m}+; {a}, {b}, {c}, {d})")),
            var().prop_map(|a| format!("freed({a})")),
            (var(), var()).prop_map(|(a, b)| format!("{a} != {b}")),
            (-5i64..=5).prop_map(|v| format!("i = {v}")),
        ]
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(atoms in prop::collection::vec(atom(), 0..5), bind in any::<bool>()) {
            let body = if atoms.is_empty() { "emp".to_string() } else { atoms.join(" * ") };
            let src = if bind { format!("E e . {body}") } else { body };
            let h = parse_heap(&src).unwrap();
            prop_assert_eq!(parse_heap(&h.to_string()).unwrap(), h);
        }
    }
}
