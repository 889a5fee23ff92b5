//! Lowering of property expressions into verification-condition text.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use super::{BinOp, SpecExpr};
use crate::asm::{AbiType, ContractManifest, ManifestRegistry, StorageKind, StorageVar};
use crate::words::Address;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LowerError {
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("name `{0}` resolves in more than one namespace")]
    AmbiguousName(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("cannot determine the contract class of `{0}`")]
    UnknownClass(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Hypothesis,
    InvariantPre,
    InvariantPost,
    Postcondition,
}

impl Role {
    pub fn is_assume(self) -> bool {
        matches!(self, Role::Hypothesis | Role::InvariantPre)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VcSort {
    Int,
    Real,
    Bool,
}

/// A local introduced before the hypothesis and assigned from pre-state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DefVar {
    pub name: String,
    pub ty: String,
    pub init: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lowered {
    /// One boolean fragment per emitted assume/assert.
    pub fragments: Vec<String>,
    pub def_vars: Vec<DefVar>,
}

/// Naming context for lowering.
pub struct LowerEnv<'a> {
    pub manifests: &'a ManifestRegistry,
    pub entry: &'a ContractManifest,
    /// VC name of `this`.
    pub entry_ref: String,
    /// VC name of `msg.sender` at the entry call.
    pub sender_ref: String,
    /// VC name of `tx.origin`.
    pub origin_ref: String,
    pub params: BTreeMap<String, AbiType>,
    pub derived: BTreeMap<String, AbiType>,
    /// Concrete addresses behind address-valued VC names, used to pick the
    /// contract class of `name.var` references.
    pub concrete: BTreeMap<String, Address>,
}

/// VC rendering of an integer literal using the axiom library's constants.
pub fn render_literal(v: &BigUint) -> String {
    if v.is_zero() {
        return "Zero".to_string();
    }
    if (v & (v - BigUint::one())).is_zero() {
        let k = v.bits() - 1;
        if matches!(k, 8 | 16 | 64 | 160 | 255 | 256) {
            return format!("TwoE{k}");
        }
    }
    v.to_str_radix(10)
}

/// Lowers one property under the given role.
pub fn lower_to_vc(expr: &SpecExpr, role: Role, env: &LowerEnv<'_>) -> Result<Lowered, LowerError> {
    if role == Role::Hypothesis && !expr.is_concrete() {
        return Err(LowerError::Unsupported(format!("hypothesis `{expr}` uses forall, sum or old")));
    }
    let mut lw = Lw { env, role, bound: Vec::new(), def_vars: Vec::new() };
    let parts: Vec<&SpecExpr> = if role == Role::Hypothesis { expr.conjuncts() } else { vec![expr] };
    let mut fragments = Vec::new();
    for p in parts {
        let t = lw.lower(p)?;
        if t.sort != VcSort::Bool {
            return Err(LowerError::TypeError(format!("`{p}` is not boolean")));
        }
        fragments.push(t.text);
    }
    Ok(Lowered { fragments, def_vars: lw.def_vars })
}

struct T {
    text: String,
    sort: VcSort,
    prec: u8,
    /// Top-level `&&`/`||` operator, if any.
    logic: Option<BinOp>,
}

impl T {
    fn atom(text: String, sort: VcSort) -> T {
        T { text, sort, prec: 7, logic: None }
    }

    fn op(text: String, sort: VcSort, prec: u8) -> T {
        T { text, sort, prec, logic: None }
    }

    fn wrapped(&self, need: bool) -> String {
        if need {
            format!("({})", self.text)
        } else {
            self.text.clone()
        }
    }

    fn as_real(self) -> T {
        match self.sort {
            VcSort::Int => T::atom(format!("real({})", self.text), VcSort::Real),
            _ => self,
        }
    }
}

fn sanitize(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

struct Lw<'e, 'a> {
    env: &'e LowerEnv<'a>,
    role: Role,
    bound: Vec<String>,
    def_vars: Vec<DefVar>,
}

enum NameKind<'m> {
    Param(AbiType),
    Derived(AbiType),
    State(&'m StorageVar),
}

impl<'e, 'a> Lw<'e, 'a> {
    fn classify(&self, n: &str) -> Result<NameKind<'e>, LowerError> {
        let p = self.env.params.get(n);
        let d = self.env.derived.get(n);
        let s = self.env.entry.storage_var(n);
        match (p, d, s) {
            (Some(t), None, None) => Ok(NameKind::Param(*t)),
            (None, Some(t), None) => Ok(NameKind::Derived(*t)),
            (None, None, Some(v)) => Ok(NameKind::State(v)),
            (None, None, None) => Err(LowerError::UnboundName(n.to_string())),
            _ => Err(LowerError::AmbiguousName(n.to_string())),
        }
    }

    fn qualified(&self, class: &ContractManifest, var: &StorageVar, obj_ref: &str) -> String {
        format!("{}.{}[{obj_ref}]", class.name, var.name)
    }

    fn def_var(&mut self, name: &str, ty: String, init: String) {
        if !self.def_vars.iter().any(|d| d.name == name) {
            self.def_vars.push(DefVar { name: name.to_string(), ty, init });
        }
    }

    /// State variable of the entry contract used by bare name.
    fn entry_state(&mut self, n: &str, var: &StorageVar) -> String {
        let q = self.qualified(self.env.entry, var, &self.env.entry_ref);
        if self.role == Role::Hypothesis {
            let ty = match var.kind {
                StorageKind::Scalar => var.value_type.name().to_string(),
                StorageKind::Mapping => format!("[address] {}", var.value_type.name()),
            };
            self.def_var(n, ty, q);
            n.to_string()
        } else {
            q
        }
    }

    /// Contract class and VC reference of an address-valued object expression.
    fn object(&self, obj: &SpecExpr) -> Result<(&'e ContractManifest, String), LowerError> {
        let by_ref = |r: &str| -> Result<(&'e ContractManifest, String), LowerError> {
            let addr = self.env.concrete.get(r).ok_or_else(|| LowerError::UnknownClass(r.to_string()))?;
            let m = self.env.manifests.get(addr).ok_or_else(|| LowerError::UnknownClass(r.to_string()))?;
            Ok((m, r.to_string()))
        };
        match obj {
            SpecExpr::Name(n) if n == "this" => Ok((self.env.entry, self.env.entry_ref.clone())),
            SpecExpr::Field(b, f) if matches!(b.as_ref(), SpecExpr::Name(m) if m == "msg") && f == "sender" => {
                by_ref(&self.env.sender_ref)
            }
            SpecExpr::Field(b, f) if matches!(b.as_ref(), SpecExpr::Name(t) if t == "tx") && f == "origin" => {
                by_ref(&self.env.origin_ref)
            }
            SpecExpr::Name(n) => match self.classify(n)? {
                NameKind::Param(AbiType::Address) | NameKind::Derived(AbiType::Address) => by_ref(n),
                _ => Err(LowerError::TypeError(format!("`{n}` is not an address"))),
            },
            other => Err(LowerError::Unsupported(format!("object expression `{other}`"))),
        }
    }

    /// Map-valued location text.
    fn map_loc(&mut self, e: &SpecExpr) -> Result<String, LowerError> {
        match e {
            SpecExpr::Name(n) if !self.bound.contains(n) => match self.classify(n)? {
                NameKind::State(v) if v.kind == StorageKind::Mapping => Ok(self.entry_state(n, v)),
                _ => Err(LowerError::TypeError(format!("`{n}` is not a mapping"))),
            },
            SpecExpr::Field(obj, f) => {
                let (class, r) = self.object(obj)?;
                let var = class
                    .storage_var(f)
                    .ok_or_else(|| LowerError::UnboundName(format!("{}.{f}", class.name)))?;
                if var.kind != StorageKind::Mapping {
                    return Err(LowerError::TypeError(format!("`{e}` is not a mapping")));
                }
                Ok(self.qualified(class, var, &r))
            }
            other => Err(LowerError::TypeError(format!("`{other}` is not a mapping"))),
        }
    }

    fn lower(&mut self, e: &SpecExpr) -> Result<T, LowerError> {
        match e {
            SpecExpr::Int(v) => Ok(T::atom(render_literal(v), VcSort::Int)),
            SpecExpr::Bool(b) => Ok(T::atom(b.to_string(), VcSort::Bool)),
            SpecExpr::Name(n) => {
                if self.bound.contains(n) {
                    return Ok(T::atom(n.clone(), VcSort::Int));
                }
                if n == "this" {
                    return Ok(T::atom(self.env.entry_ref.clone(), VcSort::Int));
                }
                match self.classify(n)? {
                    NameKind::Param(_) | NameKind::Derived(_) => Ok(T::atom(n.clone(), VcSort::Int)),
                    NameKind::State(v) if v.kind == StorageKind::Scalar => {
                        Ok(T::atom(self.entry_state(n, v), VcSort::Int))
                    }
                    NameKind::State(_) => Err(LowerError::TypeError(format!("mapping `{n}` used as a value"))),
                }
            }
            SpecExpr::Field(obj, f) => {
                if let SpecExpr::Name(b) = obj.as_ref() {
                    match (b.as_str(), f.as_str()) {
                        ("msg", "sender") => return Ok(T::atom(self.env.sender_ref.clone(), VcSort::Int)),
                        ("tx", "origin") => return Ok(T::atom(self.env.origin_ref.clone(), VcSort::Int)),
                        ("msg", _) | ("tx", _) => return Err(LowerError::UnboundName(format!("{b}.{f}"))),
                        _ => {}
                    }
                }
                let (class, r) = self.object(obj)?;
                let var = class
                    .storage_var(f)
                    .ok_or_else(|| LowerError::UnboundName(format!("{}.{f}", class.name)))?;
                if var.kind != StorageKind::Scalar {
                    return Err(LowerError::TypeError(format!("mapping `{e}` used as a value")));
                }
                Ok(T::atom(self.qualified(class, var, &r), VcSort::Int))
            }
            SpecExpr::Index(m, k) => {
                let loc = self.map_loc(m)?;
                let key = self.lower(k)?;
                if key.sort != VcSort::Int {
                    return Err(LowerError::TypeError(format!("index `{k}` is not an integer")));
                }
                Ok(T::atom(format!("{loc}[{}]", key.text), VcSort::Int))
            }
            SpecExpr::Sum(m) => {
                let loc = self.map_loc(m)?;
                Ok(T::atom(format!("sum( {loc} )"), VcSort::Int))
            }
            SpecExpr::Old(inner) => {
                let mut uses_bound = false;
                inner.walk(&mut |x| {
                    if let SpecExpr::Name(n) = x {
                        uses_bound |= self.bound.contains(n);
                    }
                });
                if uses_bound {
                    return Err(LowerError::Unsupported(format!("old(`{inner}`) over a bound variable")));
                }
                let t = self.lower(inner)?;
                let ty = match t.sort {
                    VcSort::Int => "uint256",
                    VcSort::Real => "real",
                    VcSort::Bool => "bool",
                };
                let name = format!("old_{}", sanitize(&inner.to_string()));
                self.def_var(&name, ty.to_string(), t.text);
                Ok(T::atom(name, t.sort))
            }
            SpecExpr::Forall { var, body } => {
                self.bound.push(var.clone());
                let b = self.lower(body);
                self.bound.pop();
                let b = b?;
                if b.sort != VcSort::Bool {
                    return Err(LowerError::TypeError(format!("quantifier body `{body}` is not boolean")));
                }
                Ok(T::op(format!("forall {var}:address :: {}", b.text), VcSort::Bool, 0))
            }
            SpecExpr::Not(inner) => {
                let t = self.lower(inner)?;
                if t.sort != VcSort::Bool {
                    return Err(LowerError::TypeError(format!("`{inner}` is not boolean")));
                }
                Ok(T::op(format!("!{}", t.wrapped(t.prec < 7)), VcSort::Bool, 6))
            }
            SpecExpr::Binary(op, l, r) => self.binary(*op, l, r),
        }
    }

    fn binary(&mut self, op: BinOp, l: &SpecExpr, r: &SpecExpr) -> Result<T, LowerError> {
        let a = self.lower(l)?;
        let b = self.lower(r)?;
        if op.is_logical() {
            if a.sort != VcSort::Bool || b.sort != VcSort::Bool {
                return Err(LowerError::TypeError(format!("operands of {} must be boolean", op.symbol())));
            }
            // && and || do not mix without parentheses in the target dialect.
            let wrap = |t: &T, right: bool| t.prec < 1 || (t.prec == 1 && (right || t.logic != Some(op)));
            let text = format!("{} {} {}", a.wrapped(wrap(&a, false)), op.symbol(), b.wrapped(wrap(&b, true)));
            return Ok(T { text, sort: VcSort::Bool, prec: 1, logic: Some(op) });
        }
        if a.sort == VcSort::Bool || b.sort == VcSort::Bool {
            if matches!(op, BinOp::Eq | BinOp::Ne) && a.sort == b.sort {
                let text = format!("({}) {} ({})", a.text, op.symbol(), b.text);
                return Ok(T::op(text, VcSort::Bool, 3));
            }
            return Err(LowerError::TypeError(format!("operands of {} must be numeric", op.symbol())));
        }
        let real = op == BinOp::Div || a.sort == VcSort::Real || b.sort == VcSort::Real;
        let (a, b) = if real { (a.as_real(), b.as_real()) } else { (a, b) };
        let sort = if real { VcSort::Real } else { VcSort::Int };
        if op.is_comparison() {
            let text = format!("{} {} {}", a.wrapped(a.prec <= 3), op.symbol(), b.wrapped(b.prec <= 3));
            return Ok(T::op(text, VcSort::Bool, 3));
        }
        let p = op.precedence();
        let text = format!("{} {} {}", a.wrapped(a.prec < p), op.symbol(), b.wrapped(b.prec <= p));
        Ok(T::op(text, sort, p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    fn registry() -> ManifestRegistry {
        let m = ContractManifest::from_json(
            r#"{"name":"MultiVulnToken","address":"0x00000000000000000000000000000000000000aa",
                "storage":[{"name":"owner","slot":0,"kind":"scalar","type":"address"},
                           {"name":"totalSupply","slot":1,"kind":"scalar","type":"uint256"},
                           {"name":"balances","slot":2,"kind":"mapping","type":"uint256"}]}"#,
            "t",
        )
        .unwrap();
        let mut r = ManifestRegistry::new();
        r.insert(m);
        r
    }

    fn env(reg: &ManifestRegistry) -> LowerEnv<'_> {
        let entry = reg.by_name("MultiVulnToken").unwrap();
        let mut params = BTreeMap::new();
        for (n, t) in [("_from", AbiType::Address), ("_to", AbiType::Address), ("_value", AbiType::Uint256), ("_fee", AbiType::Uint256)] {
            params.insert(n.to_string(), t);
        }
        let mut concrete = BTreeMap::new();
        concrete.insert("entry_contract".to_string(), entry.address);
        concrete.insert("_to".to_string(), entry.address);
        LowerEnv {
            manifests: reg,
            entry,
            entry_ref: "entry_contract".into(),
            sender_ref: "tx_origin".into(),
            origin_ref: "tx_origin".into(),
            params,
            derived: BTreeMap::new(),
            concrete,
        }
    }

    #[test]
    fn invariants_match_reference_lines() {
        let reg = registry();
        let env = env(&reg);
        let inv1 = parse_spec("forall x:address :: (0 <= this.balances[x] && this.balances[x] <= this.totalSupply)").unwrap();
        let inv2 = parse_spec("sum(this.balances) == this.totalSupply").unwrap();
        let l1 = lower_to_vc(&inv1, Role::InvariantPre, &env).unwrap();
        assert_eq!(
            l1.fragments,
            vec!["forall x:address :: Zero <= MultiVulnToken.balances[entry_contract][x] && MultiVulnToken.balances[entry_contract][x] <= MultiVulnToken.totalSupply[entry_contract]"]
        );
        let l2 = lower_to_vc(&inv2, Role::InvariantPost, &env).unwrap();
        assert_eq!(l2.fragments, vec!["sum( MultiVulnToken.balances[entry_contract] ) == MultiVulnToken.totalSupply[entry_contract]"]);
        assert!(l1.def_vars.is_empty());
    }

    #[test]
    fn hypothesis_split_and_def_vars() {
        let reg = registry();
        let env = env(&reg);
        let phi = parse_spec("0 <= _value && _value < 2^255 && 0 <= _fee && _fee < 2^255 && totalSupply < 2^255").unwrap();
        let l = lower_to_vc(&phi, Role::Hypothesis, &env).unwrap();
        assert_eq!(
            l.fragments,
            vec!["Zero <= _value", "_value < TwoE255", "Zero <= _fee", "_fee < TwoE255", "totalSupply < TwoE255"]
        );
        assert_eq!(
            l.def_vars,
            vec![DefVar {
                name: "totalSupply".into(),
                ty: "uint256".into(),
                init: "MultiVulnToken.totalSupply[entry_contract]".into()
            }]
        );
        let phi = parse_spec("balances[msg.sender] == 0").unwrap();
        let l = lower_to_vc(&phi, Role::Hypothesis, &env).unwrap();
        assert_eq!(l.fragments, vec!["balances[tx_origin] == Zero"]);
        assert_eq!(l.def_vars[0].ty, "[address] uint256");
    }

    #[test]
    fn old_snapshots() {
        let reg = registry();
        let env = env(&reg);
        let post = parse_spec("_to.totalSupply == old(_to.totalSupply) + 1").unwrap();
        let l = lower_to_vc(&post, Role::Postcondition, &env).unwrap();
        assert_eq!(l.fragments, vec!["MultiVulnToken.totalSupply[_to] == old__to_totalSupply + 1"]);
        assert_eq!(l.def_vars[0].init, "MultiVulnToken.totalSupply[_to]");
    }

    #[test]
    fn division_is_real() {
        let reg = registry();
        let env = env(&reg);
        let post = parse_spec("_value / _fee == totalSupply").unwrap();
        let l = lower_to_vc(&post, Role::Postcondition, &env).unwrap();
        assert_eq!(l.fragments, vec!["real(_value) / real(_fee) == real(MultiVulnToken.totalSupply[entry_contract])"]);
    }

    #[test]
    fn unbound_and_mixed_logic() {
        let reg = registry();
        let env = env(&reg);
        let e = lower_to_vc(&parse_spec("foo == 1").unwrap(), Role::Hypothesis, &env).unwrap_err();
        assert_eq!(e, LowerError::UnboundName("foo".into()));
        let l = lower_to_vc(&parse_spec("_value == 1 || _fee == 2 && _value == 3").unwrap(), Role::Postcondition, &env).unwrap();
        assert_eq!(l.fragments, vec!["_value == 1 || (_fee == 2 && _value == 3)"]);
    }
}
