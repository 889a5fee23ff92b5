use num_bigint::BigUint;
use thiserror::Error;

use super::{pow_exact, BinOp, SpecExpr};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("syntax error at {pos}: {msg}")]
    SyntaxError { pos: usize, msg: String },
    #[error("unknown operator `{op}` at {pos}")]
    UnknownOperator { pos: usize, op: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Int(BigUint),
    Ident(String),
    Sym(&'static str),
    End,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

const SYMBOLS: &[(&str, &str)] = &[
    ("::", "::"),
    ("<=", "<="),
    (">=", ">="),
    ("==", "=="),
    ("!=", "!="),
    ("&&", "&&"),
    ("||", "||"),
    ("≤", "<="),
    ("≥", ">="),
    ("≠", "!="),
    ("∧", "&&"),
    ("∨", "||"),
    ("¬", "!"),
    ("(", "("),
    (")", ")"),
    ("[", "["),
    ("]", "]"),
    (".", "."),
    (",", ","),
    (":", ":"),
    ("^", "^"),
    ("+", "+"),
    ("-", "-"),
    ("*", "*"),
    ("/", "/"),
    ("<", "<"),
    (">", ">"),
    ("=", "=="),
    ("!", "!"),
];

impl<'a> Lexer<'a> {
    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        let rest = &self.src[self.pos..];
        let trimmed = rest.trim_start();
        self.pos += rest.len() - trimmed.len();
        let start = self.pos;
        let Some(c) = trimmed.chars().next() else {
            return Ok((start, Tok::End));
        };
        if c.is_ascii_digit() {
            let len = trimmed.find(|ch: char| !ch.is_ascii_alphanumeric()).unwrap_or(trimmed.len());
            let lit = &trimmed[..len];
            self.pos += len;
            let v = if let Some(h) = lit.strip_prefix("0x") {
                BigUint::parse_bytes(h.as_bytes(), 16)
            } else {
                BigUint::parse_bytes(lit.as_bytes(), 10)
            }
            .ok_or_else(|| ParseError::SyntaxError { pos: start, msg: format!("bad integer literal `{lit}`") })?;
            return Ok((start, Tok::Int(v)));
        }
        if c.is_alphabetic() || c == '_' || c == '$' {
            let len = trimmed
                .find(|ch: char| !(ch.is_alphanumeric() || ch == '_' || ch == '$'))
                .unwrap_or(trimmed.len());
            self.pos += len;
            return Ok((start, Tok::Ident(trimmed[..len].to_string())));
        }
        for (text, canon) in SYMBOLS {
            if trimmed.starts_with(text) {
                self.pos += text.len();
                return Ok((start, Tok::Sym(canon)));
            }
        }
        Err(ParseError::UnknownOperator { pos: start, op: c.to_string() })
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
}

/// Parses one property expression. See `docs/spec-language.md` for the grammar.
pub fn parse_spec(text: &str) -> Result<SpecExpr, ParseError> {
    let mut lexer = Lexer { src: text, pos: 0 };
    let mut toks = Vec::new();
    loop {
        let t = lexer.next()?;
        let end = t.1 == Tok::End;
        toks.push(t);
        if end {
            break;
        }
    }
    let mut p = Parser { toks, idx: 0 };
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(p.err(format!("unexpected {}", describe(t)))),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Int(v) => format!("integer {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::End => "end of input".to_string(),
    }
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.idx].1
    }

    fn pos(&self) -> usize {
        self.toks[self.idx].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.idx].1.clone();
        if t != Tok::End {
            self.idx += 1;
        }
        t
    }

    fn err(&self, msg: String) -> ParseError {
        ParseError::SyntaxError { pos: self.pos(), msg }
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(s) if *s == sym) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{sym}`, found {}", describe(self.peek()))))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.bump() {
            Tok::Ident(s) => Ok(s),
            t => {
                self.idx = self.idx.saturating_sub(1);
                Err(self.err(format!("expected identifier, found {}", describe(&t))))
            }
        }
    }

    fn expr(&mut self) -> Result<SpecExpr, ParseError> {
        if matches!(self.peek(), Tok::Ident(s) if s == "forall") {
            self.bump();
            let var = self.ident()?;
            self.expect(":")?;
            let sort = self.ident()?;
            if sort != "address" {
                return Err(self.err(format!("quantifiers range over `address` only, not `{sort}`")));
            }
            self.expect("::")?;
            let body = self.expr()?;
            return Ok(SpecExpr::Forall { var, body: Box::new(body) });
        }
        self.or()
    }

    fn or(&mut self) -> Result<SpecExpr, ParseError> {
        let mut l = self.and()?;
        while self.eat("||") {
            let r = self.and()?;
            l = SpecExpr::bin(BinOp::Or, l, r);
        }
        Ok(l)
    }

    fn and(&mut self) -> Result<SpecExpr, ParseError> {
        let mut l = self.not()?;
        while self.eat("&&") {
            let r = self.not()?;
            l = SpecExpr::bin(BinOp::And, l, r);
        }
        Ok(l)
    }

    fn not(&mut self) -> Result<SpecExpr, ParseError> {
        if self.eat("!") {
            let e = self.not()?;
            return Ok(SpecExpr::Not(Box::new(e)));
        }
        self.cmp()
    }

    fn cmp_op(&self) -> Option<BinOp> {
        match self.peek() {
            Tok::Sym("<") => Some(BinOp::Lt),
            Tok::Sym("<=") => Some(BinOp::Le),
            Tok::Sym("==") => Some(BinOp::Eq),
            Tok::Sym("!=") => Some(BinOp::Ne),
            Tok::Sym(">=") => Some(BinOp::Ge),
            Tok::Sym(">") => Some(BinOp::Gt),
            _ => None,
        }
    }

    /// Comparison chains `a <= b < c` become `a <= b && b < c`.
    fn cmp(&mut self) -> Result<SpecExpr, ParseError> {
        let first = self.add()?;
        let mut operands = vec![first];
        let mut ops = Vec::new();
        while let Some(op) = self.cmp_op() {
            self.bump();
            ops.push(op);
            operands.push(self.add()?);
        }
        if ops.is_empty() {
            return Ok(operands.pop().unwrap());
        }
        let mut acc: Option<SpecExpr> = None;
        for (i, op) in ops.iter().enumerate() {
            let c = SpecExpr::bin(*op, operands[i].clone(), operands[i + 1].clone());
            acc = Some(match acc {
                None => c,
                Some(prev) => SpecExpr::bin(BinOp::And, prev, c),
            });
        }
        Ok(acc.unwrap())
    }

    fn add(&mut self) -> Result<SpecExpr, ParseError> {
        let mut l = self.mul()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                break;
            };
            let r = self.mul()?;
            l = SpecExpr::bin(op, l, r);
        }
        Ok(l)
    }

    fn mul(&mut self) -> Result<SpecExpr, ParseError> {
        let mut l = self.unary()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                break;
            };
            let r = self.unary()?;
            l = SpecExpr::bin(op, l, r);
        }
        Ok(l)
    }

    fn unary(&mut self) -> Result<SpecExpr, ParseError> {
        if self.eat("!") {
            let e = self.unary()?;
            return Ok(SpecExpr::Not(Box::new(e)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<SpecExpr, ParseError> {
        let mut e = self.primary()?;
        loop {
            if self.eat(".") {
                let f = self.ident()?;
                e = SpecExpr::Field(Box::new(e), f);
            } else if self.eat("[") {
                let k = self.expr()?;
                self.expect("]")?;
                e = SpecExpr::Index(Box::new(e), Box::new(k));
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<SpecExpr, ParseError> {
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                if self.eat("^") {
                    let exp = match self.bump() {
                        Tok::Int(e) => e,
                        t => return Err(self.err(format!("expected exponent, found {}", describe(&t)))),
                    };
                    let value = pow_exact(&v, &exp).ok_or_else(|| self.err("exponent too large".to_string()))?;
                    return Ok(SpecExpr::Int(value));
                }
                Ok(SpecExpr::Int(v))
            }
            Tok::Ident(name) => {
                self.bump();
                match name.as_str() {
                    "true" => Ok(SpecExpr::Bool(true)),
                    "false" => Ok(SpecExpr::Bool(false)),
                    "old" | "sum" => {
                        self.expect("(")?;
                        let inner = self.expr()?;
                        self.expect(")")?;
                        Ok(if name == "old" {
                            SpecExpr::Old(Box::new(inner))
                        } else {
                            SpecExpr::Sum(Box::new(inner))
                        })
                    }
                    _ => Ok(SpecExpr::Name(name)),
                }
            }
            Tok::Sym("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            Tok::Sym(s) => Err(self.err(format!("unexpected `{s}`"))),
            Tok::End => Err(self.err("unexpected end of input".to_string())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_equation() {
        let e = parse_spec("sum(this.balances) == this.totalSupply").unwrap();
        let this = || Box::new(SpecExpr::name("this"));
        assert_eq!(
            e,
            SpecExpr::bin(
                BinOp::Eq,
                SpecExpr::Sum(Box::new(SpecExpr::Field(this(), "balances".into()))),
                SpecExpr::Field(this(), "totalSupply".into()),
            )
        );
    }

    #[test]
    fn forall_invariant() {
        let e = parse_spec("forall x:address :: (0 <= this.balances[x] && this.balances[x] <= this.totalSupply)").unwrap();
        match e {
            SpecExpr::Forall { var, body } => {
                assert_eq!(var, "x");
                assert!(matches!(*body, SpecExpr::Binary(BinOp::And, _, _)));
            }
            other => panic!("not a forall: {other:?}"),
        }
    }

    #[test]
    fn empty_is_syntax_error() {
        assert!(matches!(parse_spec(""), Err(ParseError::SyntaxError { pos: 0, .. })));
        assert!(matches!(parse_spec("   "), Err(ParseError::SyntaxError { .. })));
    }

    #[test]
    fn unknown_operator() {
        assert!(matches!(parse_spec("a % b"), Err(ParseError::UnknownOperator { pos: 2, .. })));
        assert!(matches!(parse_spec("a & b"), Err(ParseError::UnknownOperator { .. })));
    }

    #[test]
    fn chained_comparison_and_unicode() {
        let a = parse_spec("0 ≤ totalSupply < 2^255 ∧ _to ≠ msg.sender").unwrap();
        let b = parse_spec("0 <= totalSupply && totalSupply < 2^255 && _to != msg.sender").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_equals_is_equality() {
        assert_eq!(parse_spec("balances[msg.sender] = 0").unwrap(), parse_spec("balances[msg.sender] == 0").unwrap());
    }

    #[test]
    fn errors_carry_position() {
        match parse_spec("a < (b + ").unwrap_err() {
            ParseError::SyntaxError { pos, .. } => assert_eq!(pos, 9),
            e => panic!("{e:?}"),
        }
        assert!(parse_spec("forall x:uint256 :: x == x").is_err());
        assert!(parse_spec("a b").is_err());
    }
}
