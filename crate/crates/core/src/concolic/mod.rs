//! Concolic replay of a concrete trace into straight-line code.
//!
//! [`replay`] walks the trace events with a symbolic machine that mirrors the
//! concrete stack, memory and call frames. Storage reads become temps at the
//! point of the SLOAD; other expressions are flattened into temps in
//! post-order when a branch condition or a stored value needs them.

mod oracle;
mod replay;
mod svt;

use std::fmt;

use thiserror::Error;

use crate::asm::AbiType;
use crate::opcode::Opcode;
use crate::spec::render_literal;
use crate::words::{Address, Selector, Word256};

pub use oracle::{check_concrete, OracleReport};
pub use replay::replay;
pub use svt::{EnvVar, Node, NodeId, NodeKind, Sort, Svt, SvtOp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplayError {
    #[error("{class}: no storage variable at slot {slot}")]
    UnknownStorageSlot { class: String, slot: Word256 },
    #[error("storage key is neither a slot nor a mapping element: {0}")]
    OpaqueKey(String),
    #[error("unsupported opcode {0}")]
    UnsupportedOpcode(Opcode),
    #[error("symbolic/concrete divergence at depth {depth} pc {pc}: {detail}")]
    StackMismatch { depth: usize, pc: usize, detail: String },
    #[error("argument marshalling mismatch: {0}")]
    MarshallingMismatch(String),
    #[error("no manifest for contract {0}")]
    NoManifest(Address),
    #[error("{class} has no function with selector {selector}")]
    UnknownFunction { class: String, selector: Selector },
    #[error("reverted sub-call wrote storage")]
    RevertedSubcallWrites,
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    EvmAdd,
    EvmSub,
    EvmMul,
    EvmDiv,
    EvmMod,
    EvmAnd,
    EvmOr,
    EvmNot,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::EvmAdd => "evmadd",
            Func::EvmSub => "evmsub",
            Func::EvmMul => "evmmul",
            Func::EvmDiv => "evmdiv",
            Func::EvmMod => "evmmod",
            Func::EvmAnd => "evmand",
            Func::EvmOr => "evmor",
            Func::EvmNot => "evmnot",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Gt,
    Eq,
    Ne,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Gt => ">",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }
}

/// Straight-line expression. Operands of compound forms are always atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Word(Word256),
    Bool(bool),
    Temp(u32),
    Param(String),
    Env(EnvVar),
    Read(Box<Location>),
    Call(Func, Vec<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    BoolToInt(Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Word(w) => f.write_str(&render_literal(&w.to_biguint())),
            Expr::Bool(b) => write!(f, "{b}"),
            Expr::Temp(t) => write!(f, "tmp{t}"),
            Expr::Param(p) => f.write_str(p),
            Expr::Env(e) => f.write_str(e.vc_name()),
            Expr::Read(loc) => write!(f, "{loc}"),
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
            Expr::Cmp(op, a, b) => write!(f, "({a}{}{b})", op.symbol()),
            Expr::Not(a) => write!(f, "!{a}"),
            Expr::BoolToInt(a) => write!(f, "(if {a} then 1 else 0)"),
        }
    }
}

/// `Class.var[contract]` or `Class.var[contract][index]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub class: String,
    pub var: String,
    pub contract: Expr,
    pub index: Option<Expr>,
}

impl Location {
    /// Name of the global map holding this variable.
    pub fn global(&self) -> String {
        format!("{}.{}", self.class, self.var)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}[{}]", self.class, self.var, self.contract)?;
        if let Some(i) = &self.index {
            write!(f, "[{i}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Temp(u32),
    Storage(Location),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Temp(t) => write!(f, "tmp{t}"),
            Target::Storage(l) => write!(f, "{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stmt {
    Assume(Expr),
    /// `value` is the concrete value the target held on the traced run.
    Assign { target: Target, expr: Expr, value: Word256 },
    Havoc { temp: u32, value: Word256 },
}

impl Stmt {
    pub fn is_storage_assign(&self) -> bool {
        matches!(self, Stmt::Assign { target: Target::Storage(_), .. })
    }
}

impl fmt::Display for Stmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stmt::Assume(e) => write!(f, "assume({e});"),
            Stmt::Assign { target, expr: e @ Expr::Cmp(..), .. } => write!(f, "{target}:= {e};"),
            Stmt::Assign { target, expr, .. } => write!(f, "{target}:={expr};"),
            Stmt::Havoc { temp, .. } => write!(f, "havoc tmp{temp};"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TempType {
    Uint256,
    Address,
    Bool,
}

impl TempType {
    pub fn name(self) -> &'static str {
        match self {
            TempType::Uint256 => "uint256",
            TempType::Address => "address",
            TempType::Bool => "bool",
        }
    }
}

/// A contract whose code ran during the trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Touched {
    pub class: String,
    pub address: Address,
    pub reference: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StraightLine {
    pub stmts: Vec<Stmt>,
    /// Temp types indexed by temp number minus one.
    pub temps: Vec<TempType>,
    pub entry: Address,
    pub entry_class: String,
    pub function: String,
    pub selector: Selector,
    pub params: Vec<(String, AbiType)>,
    pub touched: Vec<Touched>,
    /// `assume(true)` statements dropped by cleanup.
    pub trivial_removed: usize,
}

impl StraightLine {
    pub fn assume_count(&self) -> usize {
        self.stmts.iter().filter(|s| matches!(s, Stmt::Assume(_))).count()
    }

    pub fn storage_assign_count(&self) -> usize {
        self.stmts.iter().filter(|s| s.is_storage_assign()).count()
    }

    /// Storage globals referenced by the statements, in first-use order.
    pub fn globals(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut add = |l: &Location| {
            let g = l.global();
            if !out.contains(&g) {
                out.push(g);
            }
        };
        for s in &self.stmts {
            match s {
                Stmt::Assign { target: Target::Storage(l), expr, .. } => {
                    add(l);
                    if let Expr::Read(r) = expr {
                        add(r);
                    }
                }
                Stmt::Assign { expr: Expr::Read(r), .. } => add(r),
                _ => {}
            }
        }
        out
    }
}

impl fmt::Display for StraightLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.stmts {
            writeln!(f, "{s}")?;
        }
        Ok(())
    }
}
