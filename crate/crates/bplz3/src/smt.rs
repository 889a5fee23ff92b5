//! Translation of parsed programs into SMT-LIB queries.
//!
//! Each procedure is put into SSA form. Every assert becomes one query that
//! asks whether the assumptions collected so far together with the negated
//! assertion are satisfiable. A checked assertion is assumed afterwards.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::syntax::{BinOp, Decl, Expr, Pos, Procedure, Stmt, Type};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Sort {
    Int,
    Bool,
    Real,
    Array(Box<Sort>, Box<Sort>),
}

impl Sort {
    fn smt(&self) -> String {
        match self {
            Sort::Int => "Int".into(),
            Sort::Bool => "Bool".into(),
            Sort::Real => "Real".into(),
            Sort::Array(k, v) => format!("(Array {} {})", k.smt(), v.smt()),
        }
    }

    fn name(&self) -> String {
        match self {
            Sort::Int => "int".into(),
            Sort::Bool => "bool".into(),
            Sort::Real => "real".into(),
            Sort::Array(k, v) => format!("[{}]{}", k.name(), v.name()),
        }
    }
}

/// One assertion check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub procedure: String,
    pub pos: Pos,
    /// Commands to run between `push` and `pop`; the last is `(check-sat)`.
    pub commands: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Translation {
    /// Declarations and axioms shared by every query.
    pub preamble: String,
    pub queries: Vec<Query>,
    /// Procedures and their query count, in source order.
    pub procedures: Vec<(String, usize)>,
}

fn quote(name: &str) -> String {
    format!("|{name}|")
}

struct Ctx {
    aliases: HashMap<String, Sort>,
    consts: HashMap<String, Sort>,
    globals: HashMap<String, Sort>,
    functions: HashMap<String, (Vec<Sort>, Sort)>,
}

/// Local naming state while translating one procedure.
struct Scope<'c> {
    ctx: &'c Ctx,
    locals: HashMap<String, Sort>,
    version: HashMap<String, usize>,
    bound: Vec<(String, Sort)>,
    decls: String,
}

impl Ctx {
    fn sort(&self, t: &Type) -> Result<Sort, Error> {
        Ok(match t {
            Type::Int => Sort::Int,
            Type::Bool => Sort::Bool,
            Type::Real => Sort::Real,
            Type::Named(n) => {
                self.aliases.get(n).cloned().ok_or_else(|| Error::Type(format!("unknown type `{n}`")))?
            }
            Type::Map(k, v) => Sort::Array(Box::new(self.sort(k)?), Box::new(self.sort(v)?)),
        })
    }
}

fn at(pos: Pos, msg: String) -> Error {
    Error::Type(format!("line {} col {}: {msg}", pos.line, pos.col))
}

impl Scope<'_> {
    fn current(&self, name: &str) -> String {
        match self.version.get(name) {
            Some(0) | None => quote(name),
            Some(k) => quote(&format!("{name}@{k}")),
        }
    }

    fn var_sort(&self, name: &str) -> Option<Sort> {
        self.locals.get(name).or_else(|| self.ctx.globals.get(name)).cloned()
    }

    /// Introduces a new SSA version of a mutable variable.
    fn fresh(&mut self, name: &str, sort: &Sort) -> String {
        let k = self.version.entry(name.to_string()).or_insert(0);
        *k += 1;
        let n = quote(&format!("{name}@{k}"));
        let _ = writeln!(self.decls, "(declare-const {n} {})", sort.smt());
        n
    }

    fn numeric(a: (String, Sort), b: (String, Sort), what: &str) -> Result<(String, String, Sort), Error> {
        match (a.1, b.1) {
            (Sort::Int, Sort::Int) => Ok((a.0, b.0, Sort::Int)),
            (Sort::Real, Sort::Real) => Ok((a.0, b.0, Sort::Real)),
            (Sort::Int, Sort::Real) => Ok((format!("(to_real {})", a.0), b.0, Sort::Real)),
            (Sort::Real, Sort::Int) => Ok((a.0, format!("(to_real {})", b.0), Sort::Real)),
            (x, y) => Err(Error::Type(format!("{what} applied to {} and {}", x.name(), y.name()))),
        }
    }

    fn boolean(e: (String, Sort), what: &str) -> Result<String, Error> {
        if e.1 == Sort::Bool {
            Ok(e.0)
        } else {
            Err(Error::Type(format!("{what} expects bool, found {}", e.1.name())))
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<(String, Sort), Error> {
        Ok(match e {
            Expr::Int(s) => (s.clone(), Sort::Int),
            Expr::Real(s) => (s.clone(), Sort::Real),
            Expr::Bool(b) => (b.to_string(), Sort::Bool),
            Expr::Var(n, pos) => {
                if let Some((_, s)) = self.bound.iter().rev().find(|(b, _)| b == n) {
                    return Ok((quote(n), s.clone()));
                }
                if let Some(s) = self.var_sort(n) {
                    return Ok((self.current(n), s));
                }
                if let Some(s) = self.ctx.consts.get(n) {
                    return Ok((quote(n), s.clone()));
                }
                return Err(at(*pos, format!("undeclared identifier `{n}`")));
            }
            Expr::Call(f, args, pos) => {
                let mut parts = Vec::new();
                for a in args {
                    parts.push(self.expr(a)?);
                }
                match f.as_str() {
                    "real" | "int" if parts.len() == 1 => {
                        let (t, s) = parts.pop().expect("one argument");
                        return Ok(match (f.as_str(), s) {
                            ("real", Sort::Int) => (format!("(to_real {t})"), Sort::Real),
                            ("int", Sort::Real) => (format!("(to_int {t})"), Sort::Int),
                            (_, s @ (Sort::Int | Sort::Real)) => (t, s),
                            (_, s) => return Err(at(*pos, format!("{f}() applied to {}", s.name()))),
                        });
                    }
                    _ => {}
                }
                let (params, ret) =
                    self.ctx.functions.get(f).ok_or_else(|| at(*pos, format!("undeclared function `{f}`")))?;
                if params.len() != parts.len() {
                    return Err(at(*pos, format!("`{f}` expects {} arguments, found {}", params.len(), parts.len())));
                }
                if params.is_empty() {
                    return Ok((quote(f), ret.clone()));
                }
                let mut text = format!("({}", quote(f));
                for ((t, s), want) in parts.into_iter().zip(params) {
                    let t = match (&s, want) {
                        (a, b) if a == b => t,
                        (Sort::Int, Sort::Real) => format!("(to_real {t})"),
                        _ => return Err(at(*pos, format!("`{f}` expects {}, found {}", want.name(), s.name()))),
                    };
                    text.push(' ');
                    text.push_str(&t);
                }
                text.push(')');
                (text, ret.clone())
            }
            Expr::Select(m, i) => {
                let (mt, ms) = self.expr(m)?;
                let (it, is) = self.expr(i)?;
                match ms {
                    Sort::Array(k, v) if *k == is => (format!("(select {mt} {it})"), *v),
                    Sort::Array(k, _) => return Err(Error::Type(format!("map indexed by {} with {}", k.name(), is.name()))),
                    s => return Err(Error::Type(format!("indexing a non-map of type {}", s.name()))),
                }
            }
            Expr::Store(m, i, v) => {
                let (mt, ms) = self.expr(m)?;
                let (it, _) = self.expr(i)?;
                let (vt, _) = self.expr(v)?;
                (format!("(store {mt} {it} {vt})"), ms)
            }
            Expr::Not(a) => {
                let t = Self::boolean(self.expr(a)?, "`!`")?;
                (format!("(not {t})"), Sort::Bool)
            }
            Expr::Neg(a) => {
                let (t, s) = self.expr(a)?;
                if !matches!(s, Sort::Int | Sort::Real) {
                    return Err(Error::Type(format!("unary minus applied to {}", s.name())));
                }
                (format!("(- {t})"), s)
            }
            Expr::Ite(c, a, b) => {
                let c = Self::boolean(self.expr(c)?, "`if`")?;
                let a = self.expr(a)?;
                let b = self.expr(b)?;
                if a.1 == b.1 {
                    (format!("(ite {c} {} {})", a.0, b.0), a.1)
                } else {
                    let (x, y, s) = Self::numeric(a, b, "`if` branches")?;
                    (format!("(ite {c} {x} {y})"), s)
                }
            }
            Expr::Forall(vars, body) | Expr::Exists(vars, body) => {
                let q = if matches!(e, Expr::Forall(..)) { "forall" } else { "exists" };
                let mut binders = String::new();
                for (n, t) in vars {
                    let s = self.ctx.sort(t)?;
                    let _ = write!(binders, "({} {})", quote(n), s.smt());
                    self.bound.push((n.clone(), s));
                }
                let b = self.expr(body);
                self.bound.truncate(self.bound.len() - vars.len());
                let b = Self::boolean(b?, "quantifier body")?;
                (format!("({q} ({binders}) {b})"), Sort::Bool)
            }
            Expr::Bin(op, l, r) => {
                let a = self.expr(l)?;
                let b = self.expr(r)?;
                let logic = |sym: &str, a, b| -> Result<(String, Sort), Error> {
                    let x = Self::boolean(a, sym)?;
                    let y = Self::boolean(b, sym)?;
                    Ok((format!("({sym} {x} {y})"), Sort::Bool))
                };
                match op {
                    BinOp::And => logic("and", a, b)?,
                    BinOp::Or => logic("or", a, b)?,
                    BinOp::Implies => logic("=>", a, b)?,
                    BinOp::Iff => logic("=", a, b)?,
                    BinOp::Eq | BinOp::Ne => {
                        let (x, y) = if a.1 == b.1 {
                            (a.0, b.0)
                        } else {
                            let (x, y, _) = Self::numeric(a, b, "`==`")?;
                            (x, y)
                        };
                        let eq = format!("(= {x} {y})");
                        (if *op == BinOp::Eq { eq } else { format!("(not {eq})") }, Sort::Bool)
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        let sym = match op {
                            BinOp::Lt => "<",
                            BinOp::Le => "<=",
                            BinOp::Gt => ">",
                            _ => ">=",
                        };
                        let (x, y, _) = Self::numeric(a, b, sym)?;
                        (format!("({sym} {x} {y})"), Sort::Bool)
                    }
                    BinOp::Add | BinOp::Sub | BinOp::Mul => {
                        let sym = match op {
                            BinOp::Add => "+",
                            BinOp::Sub => "-",
                            _ => "*",
                        };
                        let (x, y, s) = Self::numeric(a, b, sym)?;
                        (format!("({sym} {x} {y})"), s)
                    }
                    BinOp::RealDiv => {
                        let (x, y, s) = Self::numeric(a, b, "/")?;
                        let (x, y) = if s == Sort::Int { (format!("(to_real {x})"), format!("(to_real {y})")) } else { (x, y) };
                        (format!("(/ {x} {y})"), Sort::Real)
                    }
                    BinOp::Div | BinOp::Mod => {
                        let sym = if *op == BinOp::Div { "div" } else { "mod" };
                        if a.1 != Sort::Int || b.1 != Sort::Int {
                            return Err(Error::Type(format!("`{sym}` applied to {} and {}", a.1.name(), b.1.name())));
                        }
                        (format!("({sym} {} {})", a.0, b.0), Sort::Int)
                    }
                }
            }
        })
    }

    /// Nested store for `m[i1]..[in] := v`.
    fn update(&mut self, base: String, sort: &Sort, idx: &[String], value: String) -> Result<String, Error> {
        let Some((first, rest)) = idx.split_first() else { return Ok(value) };
        let Sort::Array(_, inner) = sort else {
            return Err(Error::Type(format!("indexing a non-map of type {}", sort.name())));
        };
        let sel = format!("(select {base} {first})");
        let v = self.update(sel, inner, rest, value)?;
        Ok(format!("(store {base} {first} {v})"))
    }

    fn procedure(&mut self, p: &Procedure, queries: &mut Vec<Query>) -> Result<usize, Error> {
        for (n, t) in &p.locals {
            let c = self.ctx;
            if c.globals.contains_key(n) || c.consts.contains_key(n) || c.functions.contains_key(n) || self.locals.contains_key(n) {
                return Err(at(p.pos, format!("local `{n}` clashes with another declaration")));
            }
            let s = c.sort(t)?;
            let _ = writeln!(self.decls, "(declare-const {} {})", quote(n), s.smt());
            self.locals.insert(n.clone(), s);
        }
        let mut path = Vec::new();
        let mut count = 0;
        for st in &p.body {
            match st {
                Stmt::Assume(e) => {
                    let t = self.expr(e)?;
                    path.push(Self::boolean(t, "assume")?);
                }
                Stmt::Assert(e, pos) => {
                    let t = Self::boolean(self.expr(e)?, "assert")?;
                    let mut cmds = self.decls.clone();
                    for a in &path {
                        let _ = writeln!(cmds, "(assert {a})");
                    }
                    let _ = writeln!(cmds, "(assert (not {t}))");
                    cmds.push_str("(check-sat)\n");
                    queries.push(Query { procedure: p.name.clone(), pos: *pos, commands: cmds });
                    path.push(t);
                    count += 1;
                }
                Stmt::Assign { target, indices, value, pos } => {
                    let sort = self.var_sort(target).ok_or_else(|| at(*pos, format!("assignment to undeclared `{target}`")))?;
                    let (vt, vs) = self.expr(value)?;
                    let mut idx = Vec::new();
                    for i in indices {
                        idx.push(self.expr(i)?.0);
                    }
                    let mut elem = &sort;
                    for _ in indices {
                        match elem {
                            Sort::Array(_, v) => elem = v,
                            _ => return Err(at(*pos, format!("`{target}` indexed too deeply"))),
                        }
                    }
                    let vt = match (&vs, elem) {
                        (a, b) if a == b => vt,
                        (Sort::Int, Sort::Real) => format!("(to_real {vt})"),
                        _ => return Err(at(*pos, format!("assigning {} to {}", vs.name(), elem.name()))),
                    };
                    let old = self.current(target);
                    let new_value = self.update(old, &sort, &idx, vt)?;
                    let new = self.fresh(target, &sort);
                    path.push(format!("(= {new} {new_value})"));
                }
                Stmt::Havoc(names, pos) => {
                    for n in names {
                        let sort = self.var_sort(n).ok_or_else(|| at(*pos, format!("havoc of undeclared `{n}`")))?;
                        self.fresh(n, &sort);
                    }
                }
            }
        }
        Ok(count)
    }
}

pub fn translate(decls: &[Decl]) -> Result<Translation, Error> {
    let mut ctx = Ctx { aliases: HashMap::new(), consts: HashMap::new(), globals: HashMap::new(), functions: HashMap::new() };
    let mut preamble = String::new();
    let mut axioms = Vec::new();
    for d in decls {
        match d {
            Decl::TypeAlias(n, def) => {
                let s = match def {
                    Some(t) => ctx.sort(t)?,
                    None => return Err(Error::Type(format!("uninterpreted type `{n}` is not supported"))),
                };
                ctx.aliases.insert(n.clone(), s);
            }
            Decl::Const(n, t) => {
                let s = ctx.sort(t)?;
                let _ = writeln!(preamble, "(declare-const {} {})", quote(n), s.smt());
                ctx.consts.insert(n.clone(), s);
            }
            Decl::Var(n, t) => {
                let s = ctx.sort(t)?;
                let _ = writeln!(preamble, "(declare-const {} {})", quote(n), s.smt());
                ctx.globals.insert(n.clone(), s);
            }
            Decl::Function { name, params, ret } => {
                let ps = params.iter().map(|t| ctx.sort(t)).collect::<Result<Vec<_>, _>>()?;
                let r = ctx.sort(ret)?;
                let args: Vec<String> = ps.iter().map(Sort::smt).collect();
                let _ = writeln!(preamble, "(declare-fun {} ({}) {})", quote(name), args.join(" "), r.smt());
                ctx.functions.insert(name.clone(), (ps, r));
            }
            Decl::Axiom(e) => axioms.push(e),
            Decl::Procedure(_) => {}
        }
    }
    {
        let mut scope = Scope { ctx: &ctx, locals: HashMap::new(), version: HashMap::new(), bound: Vec::new(), decls: String::new() };
        for a in axioms {
            let t = Scope::boolean(scope.expr(a)?, "axiom")?;
            let _ = writeln!(preamble, "(assert {t})");
        }
    }
    let mut queries = Vec::new();
    let mut procedures = Vec::new();
    for d in decls {
        if let Decl::Procedure(p) = d {
            let mut scope = Scope { ctx: &ctx, locals: HashMap::new(), version: HashMap::new(), bound: Vec::new(), decls: String::new() };
            let n = scope.procedure(p, &mut queries)?;
            procedures.push((p.name.clone(), n));
        }
    }
    Ok(Translation { preamble, queries, procedures })
}

/// Solver settings. Quantifiers are handled by e-matching only and arrays
/// are not extensional; both make the solver weaker, never unsound, and
/// let it give up quickly on obligations that need a model.
pub const SOLVER_OPTIONS: &str = "(set-option :auto_config false)\n(set-option :smt.mbqi false)\n(set-option :smt.array.extensional false)\n";

/// Whole solver script: preamble, then each query between push and pop,
/// each check preceded by an `@q` marker and followed by a reason query.
pub fn script(t: &Translation, timeout_ms: Option<u64>) -> String {
    let mut s = String::from(SOLVER_OPTIONS);
    if let Some(ms) = timeout_ms {
        let _ = writeln!(s, "(set-option :timeout {ms})");
    }
    s.push_str(&t.preamble);
    for (k, q) in t.queries.iter().enumerate() {
        s.push_str("(push 1)\n");
        let body = q.commands.strip_suffix("(check-sat)\n").unwrap_or(&q.commands);
        s.push_str(body);
        let _ = writeln!(s, "(echo \"@q {k}\")\n(check-sat)\n(get-info :reason-unknown)\n(pop 1)");
    }
    s
}

/// Parsed solver results, indexed like the queries.
pub fn parse_results(out: &str, n: usize) -> Result<Vec<(String, String)>, Error> {
    let mut res: BTreeMap<usize, (String, String)> = BTreeMap::new();
    let mut lines = out.lines().peekable();
    while let Some(l) = lines.next() {
        let l = l.trim();
        if let Some(k) = l.strip_prefix("@q ") {
            let k: usize = k.parse().map_err(|_| Error::Solver(format!("bad marker `{l}`")))?;
            let status = lines.next().unwrap_or("").trim().to_string();
            let reason = lines.next().unwrap_or("").trim().to_string();
            res.insert(k, (status, reason));
        } else if l.starts_with("(error") {
            return Err(Error::Solver(l.to_string()));
        }
    }
    Ok((0..n).map(|k| res.remove(&k).unwrap_or_else(|| ("missing".into(), String::new()))).collect())
}
