use num_bigint::BigInt;
use proptest::prelude::*;

use tct_core::fixtures;
use tct_core::spec::{eval_hypothesis, eval_value, parse_spec, BinOp, CompiledHypothesis, EvalContext, SpecExpr, Value};
use tct_core::vm::WorldState;
use tct_core::words::{Address, Word256};

const OPS: [BinOp; 12] = [
    BinOp::Add,
    BinOp::Sub,
    BinOp::Mul,
    BinOp::Div,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::Ge,
    BinOp::Gt,
    BinOp::And,
    BinOp::Or,
];

fn any_expr() -> impl Strategy<Value = SpecExpr> {
    let leaf = prop_oneof![
        any::<u64>().prop_map(SpecExpr::int),
        (0u32..256).prop_map(|k| SpecExpr::Int(num_bigint::BigUint::from(1u8) << k)),
        prop::sample::select(vec!["_value", "_fee", "totalSupply", "x", "balances"]).prop_map(SpecExpr::name),
        any::<bool>().prop_map(SpecExpr::Bool),
    ];
    leaf.prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            (prop::sample::select(OPS.to_vec()), inner.clone(), inner.clone()).prop_map(|(op, l, r)| SpecExpr::bin(op, l, r)),
            inner.clone().prop_map(|e| SpecExpr::Not(Box::new(e))),
            (inner.clone(), inner.clone()).prop_map(|(m, k)| SpecExpr::Index(Box::new(m), Box::new(k))),
            inner.clone().prop_map(|e| SpecExpr::Old(Box::new(e))),
            inner.clone().prop_map(|e| SpecExpr::Sum(Box::new(e))),
            prop::sample::select(vec!["sender", "origin"]).prop_map(|f| SpecExpr::Field(Box::new(SpecExpr::name("msg")), f.to_string())),
            inner.prop_map(|b| SpecExpr::Forall { var: "y".into(), body: Box::new(b) }),
        ]
    })
}

/// Integer-only expressions over the two uint parameters, with a reference value.
fn arith() -> impl Strategy<Value = (SpecExpr, BigInt)> {
    let leaf = prop_oneof![
        any::<u32>().prop_map(|v| (SpecExpr::int(v as u64), BigInt::from(v))),
        Just((SpecExpr::name("_value"), BigInt::from(VALUE))),
        Just((SpecExpr::name("_fee"), BigInt::from(FEE))),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        (prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul]), inner.clone(), inner).prop_map(|(op, (l, lv), (r, rv))| {
            let v = match op {
                BinOp::Add => lv.clone() + rv.clone(),
                BinOp::Sub => lv.clone() - rv.clone(),
                _ => lv.clone() * rv.clone(),
            };
            (SpecExpr::bin(op, l, r), v)
        })
    })
}

const VALUE: u64 = 77;
const FEE: u64 = 5;

fn world() -> WorldState {
    let mut w = WorldState::new();
    for c in fixtures::all().unwrap() {
        w.deploy(c.manifest, c.code);
    }
    w
}

fn token() -> Address {
    "0x1000000000000000000000000000000000000001".parse().unwrap()
}

fn with_ctx<R>(args: [Word256; 4], f: impl FnOnce(&EvalContext<'_>) -> R) -> R {
    let mut w = world();
    w.set_scalar(token(), "totalSupply", Word256::from_u64(1000)).unwrap();
    let func = w.manifests.get(&token()).unwrap().function_by_name("transferProxy").unwrap().clone();
    let origin: Address = "0xa000000000000000000000000000000000000001".parse().unwrap();
    let ctx = EvalContext::for_call(&w, token(), origin, &func, &args);
    f(&ctx)
}

proptest! {
    #[test]
    fn canonical_text_round_trips(e in any_expr()) {
        let text = e.canonical();
        let back = parse_spec(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert_eq!(&back, &e, "{}", text);
        prop_assert_eq!(back.canonical(), text);
    }

    #[test]
    fn arithmetic_is_exact((e, want) in arith()) {
        let args = [Word256::ZERO, Word256::ZERO, Word256::from_u64(VALUE), Word256::from_u64(FEE)];
        let got = with_ctx(args, |ctx| eval_value(&e, ctx));
        prop_assert_eq!(got, Ok(Value::Int(want)));
    }

    #[test]
    fn compiled_hypothesis_agrees_with_interpreter(e in any_expr(), words in prop::array::uniform4(any::<[u8; 32]>())) {
        let args = words.map(Word256::from_be_bytes);
        let (want, got) = with_ctx(args, |ctx| {
            let manifest = ctx.state.manifest_at(&token()).unwrap();
            let func = manifest.function_by_name("transferProxy").unwrap();
            let compiled = CompiledHypothesis::compile(&e, manifest, func);
            let in_ctx = compiled.clone().and_then(|c| c.holds(ctx));
            let direct = compiled.and_then(|c| c.holds_for_call(ctx.state, ctx.entry, ctx.origin, func, &args));
            (eval_hypothesis(&e, ctx), (in_ctx, direct))
        });
        prop_assert_eq!(&got.0, &want, "{}", e);
        prop_assert_eq!(&got.1, &want, "{}", e);
    }
}

#[test]
fn overflow_guard_rejects_attack_arguments() {
    let h = parse_spec("0 <= _value && _value < 2^255 && 0 <= _fee && _fee < 2^255 && totalSupply < 2^255").unwrap();
    let big = Word256::pow2(255);
    let attack = [Word256::ZERO, Word256::ZERO, big.wrapping_add(Word256::from_u64(1)), big];
    assert_eq!(with_ctx(attack, |ctx| eval_hypothesis(&h, ctx)), Ok(false));
    let benign = [Word256::ZERO, Word256::ZERO, Word256::from_u64(10), Word256::from_u64(1)];
    assert_eq!(with_ctx(benign, |ctx| eval_hypothesis(&h, ctx)), Ok(true));
}

#[test]
fn quantified_expressions_are_not_evaluated() {
    let h = parse_spec("sum(balances) == totalSupply").unwrap();
    let args = [Word256::ZERO; 4];
    assert!(with_ctx(args, |ctx| eval_hypothesis(&h, ctx)).is_err());
}
