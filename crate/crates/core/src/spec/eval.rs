use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint, Sign};
use thiserror::Error;

use super::{BinOp, SpecExpr};
use crate::asm::{mapping_key, ContractManifest, FunctionAbi, StorageKind};
use crate::words::{Address, Word256};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("not concretely evaluable: {0}")]
    NotConcretelyEvaluable(String),
    #[error("unbound name `{0}`")]
    UnboundName(String),
    #[error("name `{0}` resolves in more than one namespace")]
    AmbiguousName(String),
    #[error("type error: {0}")]
    TypeError(String),
    #[error("no manifest for contract {0}")]
    NoManifest(Address),
    #[error("`{0}` is not a valid address")]
    NotAnAddress(String),
    #[error("`{0}` does not fit in 256 bits")]
    OutOfRange(String),
}

/// Read access to world state needed by the evaluator.
pub trait StateView {
    fn manifest_at(&self, addr: &Address) -> Option<&ContractManifest>;
    fn storage_at(&self, addr: &Address, key: &Word256) -> Word256;
}

/// Concrete environment of a transaction about to run.
pub struct EvalContext<'a> {
    pub params: BTreeMap<String, Word256>,
    pub derived: BTreeMap<String, Word256>,
    /// Contract the transaction enters (`this`).
    pub entry: Address,
    /// `msg.sender` of the entry call.
    pub sender: Address,
    pub origin: Address,
    pub state: &'a dyn StateView,
}

impl<'a> EvalContext<'a> {
    /// Binds the entry function's parameters by position.
    pub fn for_call(
        state: &'a dyn StateView,
        entry: Address,
        origin: Address,
        func: &FunctionAbi,
        args: &[Word256],
    ) -> EvalContext<'a> {
        let params = func.params.iter().zip(args).map(|(p, v)| (p.name.clone(), *v)).collect();
        EvalContext { params, derived: BTreeMap::new(), entry, sender: origin, origin, state }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(BigInt),
    Bool(bool),
}

/// Exact integer with an allocation-free representation for the common
/// case of a value in `[0, 2^256)`.
#[derive(Debug, Clone)]
enum Num {
    Word(Word256),
    Big(BigInt),
}

impl Num {
    fn literal(v: &BigUint) -> Num {
        if v.bits() <= 256 {
            let mut limbs = [0u64; 4];
            for (i, d) in v.iter_u64_digits().enumerate() {
                limbs[i] = d;
            }
            let mut bytes = [0u8; 32];
            for (i, l) in limbs.iter().rev().enumerate() {
                bytes[8 * i..8 * i + 8].copy_from_slice(&l.to_be_bytes());
            }
            Num::Word(Word256::from_be_bytes(bytes))
        } else {
            Num::Big(BigInt::from_biguint(Sign::Plus, v.clone()))
        }
    }

    fn big(self) -> BigInt {
        match self {
            Num::Word(w) => BigInt::from_biguint(Sign::Plus, w.to_biguint()),
            Num::Big(b) => b,
        }
    }

    fn word(self) -> Option<Word256> {
        match self {
            Num::Word(w) => Some(w),
            Num::Big(b) => b.to_biguint().and_then(|u| Word256::from_biguint(&u)),
        }
    }

    fn add(self, rhs: Num) -> Num {
        if let (Num::Word(a), Num::Word(b)) = (&self, &rhs) {
            if let (s, false) = a.overflowing_add(*b) {
                return Num::Word(s);
            }
        }
        Num::Big(self.big() + rhs.big())
    }

    fn sub(self, rhs: Num) -> Num {
        if let (Num::Word(a), Num::Word(b)) = (&self, &rhs) {
            if a >= b {
                return Num::Word(a.wrapping_sub(*b));
            }
        }
        Num::Big(self.big() - rhs.big())
    }

    fn mul(self, rhs: Num) -> Num {
        if let (Num::Word(a), Num::Word(b)) = (&self, &rhs) {
            if a.bits() + b.bits() <= 256 {
                return Num::Word(a.wrapping_mul(*b));
            }
        }
        Num::Big(self.big() * rhs.big())
    }

    fn cmp(&self, rhs: &Num) -> Ordering {
        match (self, rhs) {
            (Num::Word(a), Num::Word(b)) => a.cmp(b),
            _ => self.clone().big().cmp(&rhs.clone().big()),
        }
    }
}

enum Val {
    Num(Num),
    Bool(bool),
}

impl Val {
    fn num(self, what: &SpecExpr) -> Result<Num, EvalError> {
        match self {
            Val::Num(n) => Ok(n),
            Val::Bool(_) => Err(EvalError::TypeError(format!("`{what}` is boolean, integer expected"))),
        }
    }

    fn boolean(self, what: &SpecExpr) -> Result<bool, EvalError> {
        match self {
            Val::Bool(b) => Ok(b),
            Val::Num(_) => Err(EvalError::TypeError(format!("`{what}` is an integer, boolean expected"))),
        }
    }
}

fn to_word(v: &BigInt, what: &SpecExpr) -> Result<Word256, EvalError> {
    v.to_biguint()
        .and_then(|u| Word256::from_biguint(&u))
        .ok_or_else(|| EvalError::OutOfRange(what.to_string()))
}

fn to_address(v: &BigInt, what: &SpecExpr) -> Result<Address, EvalError> {
    let limit = BigInt::from(1u8) << 160;
    if v.sign() == Sign::Minus || *v >= limit {
        return Err(EvalError::NotAnAddress(what.to_string()));
    }
    Ok(Address::from_word(to_word(v, what)?))
}

/// Evaluates a quantifier-free, `old`-free, `sum`-free boolean expression.
pub fn eval_hypothesis(expr: &SpecExpr, ctx: &EvalContext<'_>) -> Result<bool, EvalError> {
    match eval_value(expr, ctx)? {
        Value::Bool(b) => Ok(b),
        Value::Int(_) => Err(EvalError::TypeError(format!("`{expr}` is an integer, boolean expected"))),
    }
}

/// Evaluates any concretely evaluable expression.
pub fn eval_value(expr: &SpecExpr, ctx: &EvalContext<'_>) -> Result<Value, EvalError> {
    if !expr.is_concrete() {
        return Err(EvalError::NotConcretelyEvaluable(format!("`{expr}` uses forall, sum or old")));
    }
    if expr.contains_division() {
        return Err(EvalError::NotConcretelyEvaluable(format!("`{expr}` uses division")));
    }
    Ok(match (Evaluator { ctx }).eval(expr)? {
        Val::Bool(b) => Value::Bool(b),
        Val::Num(n) => Value::Int(n.big()),
    })
}

/// Evaluates a function's derived-name assignments in order.
pub fn compute_derived(func: &FunctionAbi, ctx: &mut EvalContext<'_>) -> Result<BTreeMap<String, Word256>, EvalError> {
    for (name, expr) in func.parsed_assignments() {
        let v = (Evaluator { ctx }).eval(&expr)?.num(&expr)?;
        let w = v.word().ok_or_else(|| EvalError::OutOfRange(expr.to_string()))?;
        ctx.derived.insert(name, w);
    }
    Ok(ctx.derived.clone())
}

struct Evaluator<'c, 'a> {
    ctx: &'c EvalContext<'a>,
}

enum Resolved<'m> {
    Value(Num),
    Mapping(Address, &'m crate::asm::StorageVar),
}

impl<'c, 'a> Evaluator<'c, 'a> {
    fn manifest(&self, addr: Address) -> Result<&'c ContractManifest, EvalError> {
        self.ctx.state.manifest_at(&addr).ok_or(EvalError::NoManifest(addr))
    }

    fn state_var(&self, addr: Address, name: &str) -> Result<Resolved<'c>, EvalError> {
        let m = self.manifest(addr)?;
        let var = m
            .storage_var(name)
            .ok_or_else(|| EvalError::UnboundName(format!("{}.{name}", m.name)))?;
        match var.kind {
            StorageKind::Scalar => Ok(Resolved::Value(Num::Word(self.ctx.state.storage_at(&addr, &var.slot)))),
            StorageKind::Mapping => Ok(Resolved::Mapping(addr, var)),
        }
    }

    fn resolve(&self, expr: &SpecExpr) -> Result<Resolved<'c>, EvalError> {
        match expr {
            SpecExpr::Name(n) => {
                if n == "this" {
                    return Ok(Resolved::Value(Num::Word(self.ctx.entry.to_word())));
                }
                let in_params = self.ctx.params.get(n);
                let in_derived = self.ctx.derived.get(n);
                let in_state = self.ctx.state.manifest_at(&self.ctx.entry).and_then(|m| m.storage_var(n)).is_some();
                let hits = in_params.is_some() as u8 + in_derived.is_some() as u8 + in_state as u8;
                if hits > 1 {
                    return Err(EvalError::AmbiguousName(n.clone()));
                }
                if let Some(v) = in_params.or(in_derived) {
                    return Ok(Resolved::Value(Num::Word(*v)));
                }
                if in_state {
                    return self.state_var(self.ctx.entry, n);
                }
                Err(EvalError::UnboundName(n.clone()))
            }
            SpecExpr::Field(obj, field) => {
                if let SpecExpr::Name(base) = obj.as_ref() {
                    match (base.as_str(), field.as_str()) {
                        ("msg", "sender") => return Ok(Resolved::Value(Num::Word(self.ctx.sender.to_word()))),
                        ("tx", "origin") => return Ok(Resolved::Value(Num::Word(self.ctx.origin.to_word()))),
                        ("msg", _) | ("tx", _) => return Err(EvalError::UnboundName(format!("{base}.{field}"))),
                        _ => {}
                    }
                }
                let addr = to_address(&self.eval(obj)?.num(obj)?.big(), obj)?;
                self.state_var(addr, field)
            }
            SpecExpr::Index(map, key) => {
                let (addr, var) = match self.resolve(map)? {
                    Resolved::Mapping(a, v) => (a, v),
                    Resolved::Value(_) => return Err(EvalError::TypeError(format!("`{map}` is not a mapping"))),
                };
                let k = self.eval(key)?.num(key)?.word().ok_or_else(|| EvalError::OutOfRange(key.to_string()))?;
                let slot = mapping_key(k, var.slot);
                Ok(Resolved::Value(Num::Word(self.ctx.state.storage_at(&addr, &slot))))
            }
            other => Ok(Resolved::Value(self.eval(other)?.num(other)?)),
        }
    }

    fn eval(&self, expr: &SpecExpr) -> Result<Val, EvalError> {
        match expr {
            SpecExpr::Int(v) => Ok(Val::Num(Num::literal(v))),
            SpecExpr::Bool(b) => Ok(Val::Bool(*b)),
            SpecExpr::Name(_) | SpecExpr::Field(..) | SpecExpr::Index(..) => match self.resolve(expr)? {
                Resolved::Value(v) => Ok(Val::Num(v)),
                Resolved::Mapping(..) => Err(EvalError::TypeError(format!("mapping `{expr}` used as a value"))),
            },
            SpecExpr::Old(_) | SpecExpr::Sum(_) | SpecExpr::Forall { .. } => {
                Err(EvalError::NotConcretelyEvaluable(expr.to_string()))
            }
            SpecExpr::Not(e) => Ok(Val::Bool(!self.eval(e)?.boolean(e)?)),
            SpecExpr::Binary(op, l, r) => match op {
                BinOp::And => {
                    if !self.eval(l)?.boolean(l)? {
                        return Ok(Val::Bool(false));
                    }
                    Ok(Val::Bool(self.eval(r)?.boolean(r)?))
                }
                BinOp::Or => {
                    if self.eval(l)?.boolean(l)? {
                        return Ok(Val::Bool(true));
                    }
                    Ok(Val::Bool(self.eval(r)?.boolean(r)?))
                }
                _ => {
                    let a = self.eval(l)?.num(l)?;
                    let b = self.eval(r)?.num(r)?;
                    arith(*op, a, b, expr)
                }
            },
        }
    }
}

fn arith(op: BinOp, a: Num, b: Num, expr: &SpecExpr) -> Result<Val, EvalError> {
    Ok(match op {
        BinOp::Add => Val::Num(a.add(b)),
        BinOp::Sub => Val::Num(a.sub(b)),
        BinOp::Mul => Val::Num(a.mul(b)),
        BinOp::Div => return Err(EvalError::NotConcretelyEvaluable(expr.to_string())),
        BinOp::Lt => Val::Bool(a.cmp(&b).is_lt()),
        BinOp::Le => Val::Bool(a.cmp(&b).is_le()),
        BinOp::Eq => Val::Bool(a.cmp(&b).is_eq()),
        BinOp::Ne => Val::Bool(a.cmp(&b).is_ne()),
        BinOp::Ge => Val::Bool(a.cmp(&b).is_ge()),
        BinOp::Gt => Val::Bool(a.cmp(&b).is_gt()),
        BinOp::And | BinOp::Or => unreachable!("logical operators short-circuit"),
    })
}

/// A hypothesis bound to one entry function. Parameters, scalar state
/// variables of the entry contract and the transaction environment are
/// resolved once; anything else goes through the general evaluator, so the
/// result always agrees with [`eval_hypothesis`].
#[derive(Debug, Clone)]
pub struct CompiledHypothesis {
    root: Op,
    source: SpecExpr,
    /// Set when some node needs the general evaluator or the function
    /// defines derived names.
    needs_context: bool,
}

#[derive(Debug, Clone)]
enum Op {
    Const(Num),
    Param(usize, String),
    Scalar(Word256),
    Sender,
    Origin,
    Dynamic(SpecExpr),
    Not(Box<Op>, SpecExpr),
    And(Box<Op>, Box<Op>, SpecExpr, SpecExpr),
    Or(Box<Op>, Box<Op>, SpecExpr, SpecExpr),
    Arith(BinOp, Box<Op>, Box<Op>, SpecExpr),
}

/// What the compiled form reads: either just the call, or a full context.
struct Env<'e, 'a> {
    state: &'e dyn StateView,
    entry: Address,
    origin: Address,
    args: &'e [Word256],
    ctx: Option<&'e EvalContext<'a>>,
}

impl CompiledHypothesis {
    pub fn compile(expr: &SpecExpr, manifest: &ContractManifest, func: &FunctionAbi) -> Result<Self, EvalError> {
        if !expr.is_concrete() {
            return Err(EvalError::NotConcretelyEvaluable(format!("`{expr}` uses forall, sum or old")));
        }
        if expr.contains_division() {
            return Err(EvalError::NotConcretelyEvaluable(format!("`{expr}` uses division")));
        }
        let mut dynamic = false;
        let root = lower_op(expr, manifest, func, &mut dynamic);
        Ok(CompiledHypothesis { root, source: expr.clone(), needs_context: dynamic || !func.assignments.is_empty() })
    }

    /// Evaluates against `ctx`, which must be built for the same entry
    /// function with its derived names already computed.
    pub fn holds(&self, ctx: &EvalContext<'_>) -> Result<bool, EvalError> {
        let args: Vec<Word256> = Vec::new();
        let env = Env { state: ctx.state, entry: ctx.entry, origin: ctx.origin, args: &args, ctx: Some(ctx) };
        run(&self.root, &env)?.boolean(&self.source)
    }

    /// Evaluates for a call of `func` on `entry`, building the general
    /// context only when the hypothesis needs it.
    pub fn holds_for_call(
        &self,
        state: &dyn StateView,
        entry: Address,
        origin: Address,
        func: &FunctionAbi,
        args: &[Word256],
    ) -> Result<bool, EvalError> {
        if self.needs_context {
            let mut ctx = EvalContext::for_call(state, entry, origin, func, args);
            compute_derived(func, &mut ctx)?;
            return self.holds(&ctx);
        }
        let env = Env { state, entry, origin, args, ctx: None };
        run(&self.root, &env)?.boolean(&self.source)
    }
}

fn lower_op(expr: &SpecExpr, manifest: &ContractManifest, func: &FunctionAbi, dynamic: &mut bool) -> Op {
    let mut fallback = || {
        *dynamic = true;
        Op::Dynamic(expr.clone())
    };
    match expr {
        SpecExpr::Int(v) => Op::Const(Num::literal(v)),
        SpecExpr::Name(n) if !func.assignments.iter().any(|a| &a.name == n) => {
            match (n.as_str(), func.param_index(n), manifest.storage_var(n)) {
                ("this", _, _) => fallback(),
                (_, Some(i), None) => Op::Param(i, n.clone()),
                (_, None, Some(v)) if v.kind == StorageKind::Scalar => Op::Scalar(v.slot),
                _ => fallback(),
            }
        }
        SpecExpr::Field(obj, field) => match (obj.as_ref(), field.as_str()) {
            (SpecExpr::Name(b), "sender") if b == "msg" => Op::Sender,
            (SpecExpr::Name(b), "origin") if b == "tx" => Op::Origin,
            _ => fallback(),
        },
        SpecExpr::Not(e) => Op::Not(Box::new(lower_op(e, manifest, func, dynamic)), (**e).clone()),
        SpecExpr::Binary(op, l, r) => {
            let lo = Box::new(lower_op(l, manifest, func, dynamic));
            let ro = Box::new(lower_op(r, manifest, func, dynamic));
            match op {
                BinOp::And => Op::And(lo, ro, (**l).clone(), (**r).clone()),
                BinOp::Or => Op::Or(lo, ro, (**l).clone(), (**r).clone()),
                _ => Op::Arith(*op, lo, ro, expr.clone()),
            }
        }
        _ => fallback(),
    }
}

fn run(op: &Op, env: &Env<'_, '_>) -> Result<Val, EvalError> {
    Ok(match op {
        Op::Const(n) => Val::Num(n.clone()),
        Op::Param(i, n) => {
            let v = match env.ctx {
                Some(ctx) => ctx.params.get(n),
                None => env.args.get(*i),
            };
            Val::Num(Num::Word(*v.ok_or_else(|| EvalError::UnboundName(n.clone()))?))
        }
        Op::Scalar(slot) => Val::Num(Num::Word(env.state.storage_at(&env.entry, slot))),
        // Entry calls come straight from the origin account.
        Op::Sender => Val::Num(Num::Word(env.ctx.map_or(env.origin, |c| c.sender).to_word())),
        Op::Origin => Val::Num(Num::Word(env.origin.to_word())),
        Op::Dynamic(e) => (Evaluator { ctx: env.ctx.expect("dynamic nodes force a full context") }).eval(e)?,
        Op::Not(e, se) => Val::Bool(!run(e, env)?.boolean(se)?),
        Op::And(l, r, sl, sr) => Val::Bool(run(l, env)?.boolean(sl)? && run(r, env)?.boolean(sr)?),
        Op::Or(l, r, sl, sr) => Val::Bool(run(l, env)?.boolean(sl)? || run(r, env)?.boolean(sr)?),
        Op::Arith(op, l, r, e) => {
            let SpecExpr::Binary(_, le, re) = e else { unreachable!("arithmetic comes from a binary node") };
            let a = run(l, env)?.num(le)?;
            let b = run(r, env)?.num(re)?;
            arith(*op, a, b, e)?
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    struct Fake {
        manifest: ContractManifest,
        storage: BTreeMap<Word256, Word256>,
    }

    impl StateView for Fake {
        fn manifest_at(&self, addr: &Address) -> Option<&ContractManifest> {
            (*addr == self.manifest.address).then_some(&self.manifest)
        }
        fn storage_at(&self, addr: &Address, key: &Word256) -> Word256 {
            if *addr != self.manifest.address {
                return Word256::ZERO;
            }
            self.storage.get(key).copied().unwrap_or_default()
        }
    }

    fn fake(total: u64, sender_balance: u64, sender: Address) -> Fake {
        let manifest = ContractManifest::from_json(
            r#"{"name":"T","address":"0x00000000000000000000000000000000000000aa",
                "storage":[{"name":"totalSupply","slot":1,"kind":"scalar","type":"uint256"},
                           {"name":"balances","slot":2,"kind":"mapping","type":"uint256"}]}"#,
            "t",
        )
        .unwrap();
        let mut storage = BTreeMap::new();
        storage.insert(Word256::ONE, Word256::from_u64(total));
        storage.insert(mapping_key(sender.to_word(), Word256::from_u64(2)), Word256::from_u64(sender_balance));
        Fake { manifest, storage }
    }

    fn ctx<'a>(state: &'a Fake, value: Word256, fee: Word256) -> EvalContext<'a> {
        let mut params = BTreeMap::new();
        params.insert("_value".to_string(), value);
        params.insert("_fee".to_string(), fee);
        EvalContext {
            params,
            derived: BTreeMap::new(),
            entry: state.manifest.address,
            sender: Address::from_low_u64(7),
            origin: Address::from_low_u64(7),
            state,
        }
    }

    const PHI: &str = "0 <= _value && _value < 2^255 && 0 <= _fee && _fee < 2^255 && totalSupply < 2^255";

    #[test]
    fn overflow_args_violate_hypothesis() {
        let st = fake(1000, 1, Address::from_low_u64(7));
        let phi = parse_spec(PHI).unwrap();
        let c = ctx(&st, Word256::pow2(255).wrapping_add(Word256::ONE), Word256::pow2(255));
        assert!(!eval_hypothesis(&phi, &c).unwrap());
    }

    #[test]
    fn benign_args_satisfy_hypothesis() {
        let st = fake(1000, 1, Address::from_low_u64(7));
        let phi = parse_spec(PHI).unwrap();
        assert!(eval_hypothesis(&phi, &ctx(&st, Word256::from_u64(10), Word256::ONE)).unwrap());
    }

    #[test]
    fn sender_balance_hypothesis() {
        let phi = parse_spec("balances[msg.sender] == 0").unwrap();
        let st = fake(1000, 0, Address::from_low_u64(7));
        assert!(eval_hypothesis(&phi, &ctx(&st, Word256::ZERO, Word256::ZERO)).unwrap());
        let st = fake(1000, 5, Address::from_low_u64(7));
        assert!(!eval_hypothesis(&phi, &ctx(&st, Word256::ZERO, Word256::ZERO)).unwrap());
        let phi = parse_spec("this.balances[tx.origin] == 5 && this.totalSupply == 1000").unwrap();
        assert!(eval_hypothesis(&phi, &ctx(&st, Word256::ZERO, Word256::ZERO)).unwrap());
    }

    #[test]
    fn errors() {
        let st = fake(1, 1, Address::from_low_u64(7));
        let c = ctx(&st, Word256::ONE, Word256::ONE);
        let e = |t: &str| eval_hypothesis(&parse_spec(t).unwrap(), &c).unwrap_err();
        assert_eq!(e("foo == 1"), EvalError::UnboundName("foo".into()));
        assert!(matches!(e("sum(this.balances) == 1"), EvalError::NotConcretelyEvaluable(_)));
        assert!(matches!(e("old(_value) == 1"), EvalError::NotConcretelyEvaluable(_)));
        assert!(matches!(e("forall x:address :: balances[x] == 0"), EvalError::NotConcretelyEvaluable(_)));
        assert!(matches!(e("_value / 2 == 0"), EvalError::NotConcretelyEvaluable(_)));
        assert!(matches!(e("_value + 1"), EvalError::TypeError(_)));
        assert!(matches!(e("balances == 1"), EvalError::TypeError(_)));
        let mut c2 = ctx(&st, Word256::ONE, Word256::ONE);
        c2.params.insert("totalSupply".into(), Word256::ONE);
        assert_eq!(
            eval_hypothesis(&parse_spec("totalSupply == 1").unwrap(), &c2).unwrap_err(),
            EvalError::AmbiguousName("totalSupply".into())
        );
    }

    #[test]
    fn exact_arithmetic() {
        let st = fake(1, 1, Address::from_low_u64(7));
        let c = ctx(&st, Word256::MAX, Word256::ONE);
        assert!(eval_hypothesis(&parse_spec("_value + _fee == 2^256").unwrap(), &c).unwrap());
        assert!(eval_hypothesis(&parse_spec("_fee - _value < 0").unwrap(), &c).unwrap());
    }
}
