//! Property and hypothesis expression language.
//!
//! The same syntax serves three purposes:
//! - hypotheses, which are quantifier-free and evaluated concretely before a
//!   transaction runs ([`eval`]);
//! - contract invariants and function postconditions, which may use `forall`,
//!   `sum` and `old` and are only lowered into verification conditions
//!   ([`lower`]);
//! - derived-name assignments from contract manifests.
//!
//! Arithmetic is exact (unbounded integers). Wraparound only exists in the
//! `evmadd`/`evmsub` symbols of generated verification conditions.
//!
//! The grammar is documented in `docs/spec-language.md`.

mod eval;
mod lower;
mod parse;

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

pub use eval::{compute_derived, eval_hypothesis, CompiledHypothesis, eval_value, EvalContext, EvalError, StateView, Value};
pub use lower::{lower_to_vc, render_literal, DefVar, LowerEnv, LowerError, Lowered, Role, VcSort};
pub use parse::{parse_spec, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Ge => ">=",
            BinOp::Gt => ">",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub(crate) fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Lt | BinOp::Le | BinOp::Eq | BinOp::Ne | BinOp::Ge | BinOp::Gt => 3,
            BinOp::Add | BinOp::Sub => 4,
            BinOp::Mul | BinOp::Div => 5,
        }
    }

    pub fn is_comparison(self) -> bool {
        self.precedence() == 3
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

/// Abstract syntax of a property expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SpecExpr {
    Int(BigUint),
    Bool(bool),
    /// Bare identifier: transaction parameter, derived name, bound variable,
    /// a state variable of the entry contract, or one of `this`/`msg`/`tx`.
    Name(String),
    /// `obj.field`
    Field(Box<SpecExpr>, String),
    /// `map[key]`
    Index(Box<SpecExpr>, Box<SpecExpr>),
    Old(Box<SpecExpr>),
    Sum(Box<SpecExpr>),
    /// `forall var:address :: body`
    Forall { var: String, body: Box<SpecExpr> },
    Binary(BinOp, Box<SpecExpr>, Box<SpecExpr>),
    Not(Box<SpecExpr>),
}

impl SpecExpr {
    pub fn int(v: u64) -> SpecExpr {
        SpecExpr::Int(BigUint::from(v))
    }

    pub fn name(n: &str) -> SpecExpr {
        SpecExpr::Name(n.to_string())
    }

    pub fn bin(op: BinOp, l: SpecExpr, r: SpecExpr) -> SpecExpr {
        SpecExpr::Binary(op, Box::new(l), Box::new(r))
    }

    /// True when the expression contains no `forall`, `sum` or `old`.
    pub fn is_concrete(&self) -> bool {
        let mut ok = true;
        self.walk(&mut |e| {
            if matches!(e, SpecExpr::Forall { .. } | SpecExpr::Sum(_) | SpecExpr::Old(_)) {
                ok = false;
            }
        });
        ok
    }

    pub fn contains_division(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| {
            if matches!(e, SpecExpr::Binary(BinOp::Div, _, _)) {
                found = true;
            }
        });
        found
    }

    /// Pre-order traversal.
    pub fn walk(&self, f: &mut dyn FnMut(&SpecExpr)) {
        f(self);
        match self {
            SpecExpr::Int(_) | SpecExpr::Bool(_) | SpecExpr::Name(_) => {}
            SpecExpr::Field(b, _) => b.walk(f),
            SpecExpr::Index(m, k) => {
                m.walk(f);
                k.walk(f);
            }
            SpecExpr::Old(e) | SpecExpr::Sum(e) | SpecExpr::Not(e) => e.walk(f),
            SpecExpr::Forall { body, .. } => body.walk(f),
            SpecExpr::Binary(_, l, r) => {
                l.walk(f);
                r.walk(f);
            }
        }
    }

    /// Top-level conjuncts, left to right.
    pub fn conjuncts(&self) -> Vec<&SpecExpr> {
        match self {
            SpecExpr::Binary(BinOp::And, l, r) => {
                let mut v = l.conjuncts();
                v.extend(r.conjuncts());
                v
            }
            other => vec![other],
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            SpecExpr::Forall { .. } => 0,
            SpecExpr::Binary(op, _, _) => op.precedence(),
            // `!` binds looser than comparisons and tighter than `&&`.
            SpecExpr::Not(_) => 2,
            _ => 7,
        }
    }

    /// Canonical single-line rendering; `parse_spec` of the result is
    /// structurally equal to `self`.
    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

/// Prints integers that are powers of two (2^8 and above) as `2^k`.
pub(crate) fn format_int(v: &BigUint) -> String {
    if v.bits() > 8 && (v & (v - BigUint::one())).is_zero() {
        format!("2^{}", v.bits() - 1)
    } else {
        v.to_str_radix(10)
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &SpecExpr, need_parens: bool) -> fmt::Result {
    if need_parens {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for SpecExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecExpr::Int(v) => f.write_str(&format_int(v)),
            SpecExpr::Bool(b) => write!(f, "{b}"),
            SpecExpr::Name(n) => f.write_str(n),
            SpecExpr::Field(b, field) => {
                write_operand(f, b, b.precedence() < 7)?;
                write!(f, ".{field}")
            }
            SpecExpr::Index(m, k) => {
                write_operand(f, m, m.precedence() < 7)?;
                write!(f, "[{k}]")
            }
            SpecExpr::Old(e) => write!(f, "old({e})"),
            SpecExpr::Sum(e) => write!(f, "sum({e})"),
            SpecExpr::Forall { var, body } => write!(f, "forall {var}:address :: {body}"),
            SpecExpr::Not(e) => {
                f.write_str("!")?;
                write_operand(f, e, e.precedence() < 3)
            }
            SpecExpr::Binary(op, l, r) => {
                let p = op.precedence();
                let (lp, rp) = if op.is_comparison() {
                    (l.precedence() <= p, r.precedence() <= p)
                } else {
                    (l.precedence() < p, r.precedence() <= p)
                };
                write_operand(f, l, lp)?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, r, rp)
            }
        }
    }
}

/// Exact power helper used by the parser for `a^b` literals.
pub(crate) fn pow_exact(base: &BigUint, exp: &BigUint) -> Option<BigUint> {
    let e = exp.to_u32()?;
    if e > 4096 {
        return None;
    }
    Some(num_traits::pow(base.clone(), e as usize))
}
