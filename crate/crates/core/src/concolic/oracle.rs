//! Concrete evaluation of straight-line code against the traced run.

use std::collections::{BTreeMap, HashMap};

use super::{CmpOp, EnvVar, Expr, Func, Location, StraightLine, Stmt, Target};
use crate::asm::mapping_key;
use crate::vm::{Transaction, WorldState};
use crate::words::{Address, Word256};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub assumes_checked: usize,
    pub assigns_checked: usize,
    pub mismatches: Vec<String>,
}

impl OracleReport {
    pub fn is_ok(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum V {
    W(Word256),
    B(bool),
}

impl V {
    fn word(self) -> Word256 {
        match self {
            V::W(w) => w,
            V::B(b) => Word256::from_bool(b),
        }
    }
}

struct Eval<'a> {
    pre: &'a WorldState,
    tx: &'a Transaction,
    params: HashMap<&'a str, Word256>,
    temps: HashMap<u32, V>,
    storage: BTreeMap<(Address, Word256), Word256>,
}

impl<'a> Eval<'a> {
    fn slot_of(&mut self, loc: &Location) -> Result<(Address, Word256), String> {
        let c = self.expr(&loc.contract)?.word();
        if c.bits() > 160 {
            return Err(format!("{loc}: contract reference {c} is not an address"));
        }
        let addr = Address::from_word(c);
        let m = self.pre.manifests.get(&addr).ok_or_else(|| format!("{loc}: no manifest at {addr}"))?;
        if m.name != loc.class {
            return Err(format!("{loc}: contract at {addr} is {}", m.name));
        }
        let var = m.storage_var(&loc.var).ok_or_else(|| format!("{loc}: unknown variable"))?;
        let key = match &loc.index {
            Some(i) => mapping_key(self.expr(i)?.word(), var.slot),
            None => var.slot,
        };
        Ok((addr, key))
    }

    fn read(&self, addr: Address, key: Word256) -> Word256 {
        self.storage.get(&(addr, key)).copied().unwrap_or_else(|| self.pre.sload(&addr, &key))
    }

    fn expr(&mut self, e: &Expr) -> Result<V, String> {
        Ok(match e {
            Expr::Word(w) => V::W(*w),
            Expr::Bool(b) => V::B(*b),
            Expr::Temp(t) => *self.temps.get(t).ok_or_else(|| format!("tmp{t} used before assignment"))?,
            Expr::Param(p) => V::W(*self.params.get(p.as_str()).ok_or_else(|| format!("unknown parameter {p}"))?),
            Expr::Env(EnvVar::Origin) => V::W(self.tx.origin.to_word()),
            Expr::Env(EnvVar::EntryContract) => V::W(self.tx.to.to_word()),
            Expr::Read(loc) => {
                let (a, k) = self.slot_of(loc)?;
                V::W(self.read(a, k))
            }
            Expr::Call(f, args) => {
                let mut w = Vec::new();
                for a in args {
                    w.push(self.expr(a)?.word());
                }
                let x = w[0];
                let y = w.get(1).copied().unwrap_or_default();
                V::W(match f {
                    Func::EvmAdd => x.wrapping_add(y),
                    Func::EvmSub => x.wrapping_sub(y),
                    Func::EvmMul => x.wrapping_mul(y),
                    Func::EvmDiv => x.evm_div(y),
                    Func::EvmMod => x.evm_mod(y),
                    Func::EvmAnd => x.bitand(y),
                    Func::EvmOr => x.bitor(y),
                    Func::EvmNot => x.bitnot(),
                })
            }
            Expr::Cmp(op, a, b) => {
                let (x, y) = (self.expr(a)?, self.expr(b)?);
                V::B(match (op, x, y) {
                    (CmpOp::Eq, V::B(p), V::B(q)) => p == q,
                    (CmpOp::Ne, V::B(p), V::B(q)) => p != q,
                    (_, V::W(p), V::W(q)) => match op {
                        CmpOp::Lt => p < q,
                        CmpOp::Gt => p > q,
                        CmpOp::Eq => p == q,
                        CmpOp::Ne => p != q,
                    },
                    _ => return Err(format!("ill-sorted comparison {e}")),
                })
            }
            Expr::Not(a) => match self.expr(a)? {
                V::B(b) => V::B(!b),
                V::W(_) => return Err(format!("`!` applied to an integer in {e}")),
            },
            Expr::BoolToInt(a) => match self.expr(a)? {
                V::B(b) => V::W(Word256::from_bool(b)),
                V::W(_) => return Err(format!("integer where a boolean was expected in {e}")),
            },
        })
    }
}

/// Evaluates `sl` over the concrete pre-state and transaction arguments.
///
/// Every assume must hold, every assignment must reproduce the traced value,
/// and, when `post` is given, the final storage of every written slot must
/// match it.
pub fn check_concrete(sl: &StraightLine, pre: &WorldState, tx: &Transaction, post: Option<&WorldState>) -> OracleReport {
    let mut params = HashMap::new();
    for (i, (name, _)) in sl.params.iter().enumerate() {
        params.insert(name.as_str(), tx.args.get(i).copied().unwrap_or_default());
    }
    let mut ev = Eval { pre, tx, params, temps: HashMap::new(), storage: BTreeMap::new() };
    let mut report = OracleReport::default();
    for (i, s) in sl.stmts.iter().enumerate() {
        let res: Result<(), String> = (|| {
            match s {
                Stmt::Assume(c) => {
                    report.assumes_checked += 1;
                    match ev.expr(c)? {
                        V::B(true) => {}
                        V::B(false) => return Err("assumption is false".into()),
                        V::W(_) => return Err("assumption is not boolean".into()),
                    }
                }
                Stmt::Havoc { temp, value } => {
                    ev.temps.insert(*temp, V::W(*value));
                }
                Stmt::Assign { target, expr, value } => {
                    report.assigns_checked += 1;
                    let v = ev.expr(expr)?;
                    if v.word() != *value {
                        return Err(format!("evaluates to {}, trace has {value}", v.word()));
                    }
                    match target {
                        Target::Temp(t) => {
                            ev.temps.insert(*t, v);
                        }
                        Target::Storage(loc) => {
                            let k = ev.slot_of(loc)?;
                            ev.storage.insert(k, v.word());
                        }
                    }
                }
            }
            Ok(())
        })();
        if let Err(msg) = res {
            report.mismatches.push(format!("statement {} `{s}`: {msg}", i + 1));
        }
    }
    if let Some(post) = post {
        for ((addr, key), v) in &ev.storage {
            let actual = post.sload(addr, key);
            if actual != *v {
                report.mismatches.push(format!("final storage {addr}[{key}] is {actual}, straight-line code gives {v}"));
            }
        }
    }
    report
}
