//! Lexer and parser for the straight-line Boogie subset.

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(String),
    Real(String),
    Sym(&'static str),
    Eof,
}

const SYMBOLS: [&str; 28] = [
    "<==>", "==>", "<==", "::", ":=", "==", "!=", "<=", ">=", "&&", "||", "(", ")", "[", "]", "{", "}", ",", ";", ":", "<",
    ">", "!", "+", "-", "*", "/", "=",
];

fn ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || "_$#'`~^?\\".contains(c)
}

fn ident_char(c: char) -> bool {
    ident_start(c) || c.is_ascii_digit() || c == '.'
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, Error> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            col += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                if chars[i] == '\n' {
                    line += 1;
                    col = 1;
                } else {
                    col += 1;
                }
                i += 1;
            }
            i += 2;
            col += 2;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                real = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((if real { Tok::Real(text) } else { Tok::Int(text) }, pos));
            continue;
        }
        if ident_start(c) {
            while i < chars.len() && ident_char(chars[i]) {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            col += i - start;
            out.push((Tok::Ident(text), pos));
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 4)].iter().collect();
        let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
            return Err(Error::Parse { line, col, message: format!("unexpected character `{c}`") });
        };
        i += sym.len();
        col += sym.len();
        out.push((Tok::Sym(sym), pos));
    }
    out.push((Tok::Eof, Pos { line, col }));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Type {
    Int,
    Bool,
    Real,
    /// Alias declared with `type`.
    Named(String),
    Map(Box<Type>, Box<Type>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Iff,
    Implies,
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    RealDiv,
    Div,
    Mod,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(String),
    Real(String),
    Bool(bool),
    Var(String, Pos),
    Call(String, Vec<Expr>, Pos),
    Select(Box<Expr>, Box<Expr>),
    Store(Box<Expr>, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Ite(Box<Expr>, Box<Expr>, Box<Expr>),
    Forall(Vec<(String, Type)>, Box<Expr>),
    Exists(Vec<(String, Type)>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Assume(Expr),
    Assert(Expr, Pos),
    /// `target[i1][i2]... := value`
    Assign { target: String, indices: Vec<Expr>, value: Expr, pos: Pos },
    Havoc(Vec<String>, Pos),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Procedure {
    pub name: String,
    pub pos: Pos,
    pub locals: Vec<(String, Type)>,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decl {
    TypeAlias(String, Option<Type>),
    Const(String, Type),
    Var(String, Type),
    Function { name: String, params: Vec<Type>, ret: Type },
    Axiom(Expr),
    Procedure(Procedure),
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    i: usize,
}

type PResult<T> = Result<T, Error>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].0
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.i].0.clone();
        if t != Tok::Eof {
            self.i += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> PResult<T> {
        let p = self.pos();
        Err(Error::Parse { line: p.line, col: p.col, message: message.into() })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Ident(x) if x == k)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, k: &str) -> bool {
        if self.is_kw(k) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> PResult<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.err(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, k: &str) -> PResult<()> {
        if self.eat_kw(k) {
            Ok(())
        } else {
            self.err(format!("expected `{k}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.i += 1;
                Ok(s)
            }
            t => self.err(format!("expected identifier, found {}", describe(&t))),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        if self.eat_sym("[") {
            let k = self.ty()?;
            if self.is_sym(",") {
                return self.err("maps with several index types are not supported");
            }
            self.expect_sym("]")?;
            let v = self.ty()?;
            return Ok(Type::Map(Box::new(k), Box::new(v)));
        }
        if self.eat_sym("(") {
            let t = self.ty()?;
            self.expect_sym(")")?;
            return Ok(t);
        }
        let n = self.ident()?;
        Ok(match n.as_str() {
            "int" => Type::Int,
            "bool" => Type::Bool,
            "real" => Type::Real,
            _ => Type::Named(n),
        })
    }

    /// `a, b: T, c: U` as used by function parameters, quantifiers and vars.
    fn typed_ids(&mut self) -> PResult<Vec<(String, Type)>> {
        let mut out = Vec::new();
        loop {
            let mut names = vec![self.ident()?];
            while self.eat_sym(",") {
                names.push(self.ident()?);
            }
            self.expect_sym(":")?;
            let t = self.ty()?;
            for n in names {
                out.push((n, t.clone()));
            }
            if !self.eat_sym(",") {
                return Ok(out);
            }
        }
    }

    fn skip_attributes(&mut self) -> PResult<()> {
        while self.is_sym("{") {
            let mut depth = 0;
            loop {
                match self.bump() {
                    Tok::Sym("{") => depth += 1,
                    Tok::Sym("}") => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    Tok::Eof => return self.err("unterminated attribute"),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn expr(&mut self) -> PResult<Expr> {
        if self.is_kw("forall") || self.is_kw("exists") {
            let all = self.is_kw("forall");
            self.i += 1;
            let vars = self.typed_ids()?;
            self.expect_sym("::")?;
            self.skip_attributes()?;
            let body = Box::new(self.expr()?);
            return Ok(if all { Expr::Forall(vars, body) } else { Expr::Exists(vars, body) });
        }
        let mut l = self.implies()?;
        while self.eat_sym("<==>") {
            let r = self.implies()?;
            l = Expr::Bin(BinOp::Iff, Box::new(l), Box::new(r));
        }
        Ok(l)
    }

    fn implies(&mut self) -> PResult<Expr> {
        let l = self.logic()?;
        if self.eat_sym("==>") {
            let r = self.implies()?;
            return Ok(Expr::Bin(BinOp::Implies, Box::new(l), Box::new(r)));
        }
        if self.eat_sym("<==") {
            let r = self.logic()?;
            return Ok(Expr::Bin(BinOp::Implies, Box::new(r), Box::new(l)));
        }
        Ok(l)
    }

    fn logic(&mut self) -> PResult<Expr> {
        let mut l = self.relation()?;
        let mut seen: Option<BinOp> = None;
        loop {
            let op = if self.is_sym("&&") {
                BinOp::And
            } else if self.is_sym("||") {
                BinOp::Or
            } else {
                return Ok(l);
            };
            if seen.is_some_and(|s| s != op) {
                return self.err("`&&` and `||` must be separated by parentheses");
            }
            seen = Some(op);
            self.i += 1;
            let r = self.relation()?;
            l = Expr::Bin(op, Box::new(l), Box::new(r));
        }
    }

    fn relation(&mut self) -> PResult<Expr> {
        let l = self.additive()?;
        let op = match self.peek() {
            Tok::Sym("==") => BinOp::Eq,
            Tok::Sym("!=") => BinOp::Ne,
            Tok::Sym("<") => BinOp::Lt,
            Tok::Sym("<=") => BinOp::Le,
            Tok::Sym(">") => BinOp::Gt,
            Tok::Sym(">=") => BinOp::Ge,
            _ => return Ok(l),
        };
        self.i += 1;
        let r = self.additive()?;
        Ok(Expr::Bin(op, Box::new(l), Box::new(r)))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut l = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                _ => return Ok(l),
            };
            self.i += 1;
            let r = self.multiplicative()?;
            l = Expr::Bin(op, Box::new(l), Box::new(r));
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut l = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::RealDiv,
                Tok::Ident(k) if k == "div" => BinOp::Div,
                Tok::Ident(k) if k == "mod" => BinOp::Mod,
                _ => return Ok(l),
            };
            self.i += 1;
            let r = self.unary()?;
            l = Expr::Bin(op, Box::new(l), Box::new(r));
        }
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat_sym("!") {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        if self.eat_sym("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.atom()?;
        while self.eat_sym("[") {
            let idx = self.expr()?;
            if self.eat_sym(":=") {
                let v = self.expr()?;
                self.expect_sym("]")?;
                e = Expr::Store(Box::new(e), Box::new(idx), Box::new(v));
            } else {
                self.expect_sym("]")?;
                e = Expr::Select(Box::new(e), Box::new(idx));
            }
        }
        Ok(e)
    }

    fn atom(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.bump() {
            Tok::Int(s) => Ok(Expr::Int(s)),
            Tok::Real(s) => Ok(Expr::Real(s)),
            Tok::Sym("(") => {
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(k) if k == "true" => Ok(Expr::Bool(true)),
            Tok::Ident(k) if k == "false" => Ok(Expr::Bool(false)),
            Tok::Ident(k) if k == "if" => {
                let c = self.expr()?;
                self.expect_kw("then")?;
                let a = self.expr()?;
                self.expect_kw("else")?;
                let b = self.expr()?;
                Ok(Expr::Ite(Box::new(c), Box::new(a), Box::new(b)))
            }
            Tok::Ident(name) => {
                if self.eat_sym("(") {
                    let mut args = Vec::new();
                    if !self.eat_sym(")") {
                        loop {
                            args.push(self.expr()?);
                            if self.eat_sym(")") {
                                break;
                            }
                            self.expect_sym(",")?;
                        }
                    }
                    Ok(Expr::Call(name, args, pos))
                } else {
                    Ok(Expr::Var(name, pos))
                }
            }
            t => {
                self.i -= usize::from(t != Tok::Eof);
                self.err(format!("expected expression, found {}", describe(&t)))
            }
        }
    }

    fn stmt(&mut self, body: &mut Vec<Stmt>) -> PResult<()> {
        let pos = self.pos();
        if self.eat_kw("assume") {
            self.skip_attributes()?;
            body.push(Stmt::Assume(self.expr()?));
        } else if self.eat_kw("assert") {
            self.skip_attributes()?;
            body.push(Stmt::Assert(self.expr()?, pos));
        } else if self.eat_kw("havoc") {
            let mut names = vec![self.ident()?];
            while self.eat_sym(",") {
                names.push(self.ident()?);
            }
            body.push(Stmt::Havoc(names, pos));
        } else {
            let target = self.ident()?;
            let mut indices = Vec::new();
            while self.eat_sym("[") {
                indices.push(self.expr()?);
                self.expect_sym("]")?;
            }
            self.expect_sym(":=")?;
            let value = self.expr()?;
            body.push(Stmt::Assign { target, indices, value, pos });
        }
        self.expect_sym(";")
    }

    fn procedure(&mut self) -> PResult<Procedure> {
        let pos = self.pos();
        let name = self.ident()?;
        self.expect_sym("(")?;
        if !self.eat_sym(")") {
            return self.err("procedures with parameters are not supported");
        }
        while !self.is_sym("{") {
            if self.eat_kw("modifies") {
                while !self.eat_sym(";") {
                    if *self.peek() == Tok::Eof {
                        return self.err("unterminated modifies clause");
                    }
                    self.bump();
                }
            } else {
                return self.err(format!("unsupported procedure clause {}", describe(self.peek())));
            }
        }
        self.expect_sym("{")?;
        let mut locals = Vec::new();
        let mut body = Vec::new();
        while !self.eat_sym("}") {
            if *self.peek() == Tok::Eof {
                return self.err("unterminated procedure body");
            }
            if self.eat_kw("var") {
                locals.extend(self.typed_ids()?);
                self.expect_sym(";")?;
            } else {
                self.stmt(&mut body)?;
            }
        }
        Ok(Procedure { name, pos, locals, body })
    }

    fn program(&mut self) -> PResult<Vec<Decl>> {
        let mut out = Vec::new();
        loop {
            let kw = match self.peek() {
                Tok::Eof => return Ok(out),
                Tok::Ident(k) => k.clone(),
                t => return self.err(format!("expected declaration, found {}", describe(t))),
            };
            self.i += 1;
            match kw.as_str() {
                "type" => {
                    let name = self.ident()?;
                    let def = if self.eat_sym("=") { Some(self.ty()?) } else { None };
                    self.expect_sym(";")?;
                    out.push(Decl::TypeAlias(name, def));
                }
                "const" => {
                    self.eat_kw("unique");
                    for (n, t) in self.typed_ids()? {
                        out.push(Decl::Const(n, t));
                    }
                    self.expect_sym(";")?;
                }
                "var" => {
                    for (n, t) in self.typed_ids()? {
                        out.push(Decl::Var(n, t));
                    }
                    self.expect_sym(";")?;
                }
                "axiom" => {
                    out.push(Decl::Axiom(self.expr()?));
                    self.expect_sym(";")?;
                }
                "function" => {
                    let name = self.ident()?;
                    self.expect_sym("(")?;
                    let params = if self.eat_sym(")") {
                        Vec::new()
                    } else {
                        let p = self.typed_ids()?;
                        self.expect_sym(")")?;
                        p.into_iter().map(|(_, t)| t).collect()
                    };
                    self.expect_kw("returns")?;
                    self.expect_sym("(")?;
                    let ret = if matches!(self.toks.get(self.i + 1), Some((Tok::Sym(":"), _))) {
                        self.ident()?;
                        self.expect_sym(":")?;
                        self.ty()?
                    } else {
                        self.ty()?
                    };
                    self.expect_sym(")")?;
                    self.expect_sym(";")?;
                    out.push(Decl::Function { name, params, ret });
                }
                "procedure" => out.push(Decl::Procedure(self.procedure()?)),
                _ => {
                    self.i -= 1;
                    return self.err(format!("unsupported declaration `{kw}`"));
                }
            }
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) | Tok::Int(s) | Tok::Real(s) => format!("`{s}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}

pub fn parse(src: &str) -> Result<Vec<Decl>, Error> {
    let toks = lex(src)?;
    Parser { toks, i: 0 }.program()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_declarations() {
        let src = "type uint256 = int;\nconst Zero : uint256;\naxiom Zero == 0;\n\
                   function f(a,b:uint256) returns (uint256);\nvar m: [int] [int] int;\n\
                   procedure p ()\nmodifies m;\n{\n\tvar t: bool;\n\tt:= (1<2);\n\tm[1][2]:=3;\n\tassume(t);\n\tassert(forall x:int :: m[x][x] >= 0 ==> true);\n}\n";
        let d = parse(src).unwrap();
        assert_eq!(d.len(), 6);
        assert_eq!(d[0], Decl::TypeAlias("uint256".into(), Some(Type::Int)));
        let Decl::Procedure(p) = &d[5] else { panic!() };
        assert_eq!(p.body.len(), 4);
        assert!(matches!(&p.body[3], Stmt::Assert(Expr::Forall(..), Pos { line: 13, col: 2 })));
    }

    #[test]
    fn rejects_mixed_logic() {
        let e = parse("axiom true && false || true;").unwrap_err();
        assert!(e.to_string().contains("parentheses"), "{e}");
    }

    #[test]
    fn if_then_else_and_store() {
        let d = parse("axiom (if 1 < 2 then 1 else 0) == f(m[1:=2]);").unwrap();
        let Decl::Axiom(Expr::Bin(BinOp::Eq, l, r)) = &d[0] else { panic!() };
        assert!(matches!(**l, Expr::Ite(..)));
        assert!(matches!(&**r, Expr::Call(_, a, _) if matches!(a[0], Expr::Store(..))));
    }
}
