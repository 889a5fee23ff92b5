use tct_core::concolic::{check_concrete, replay, Expr, Stmt, StraightLine, Target};
use tct_core::fixtures;
use tct_core::vm::{execute_transaction, Receipt, Transaction, VmConfig, WorldState};
use tct_core::words::{Address, Selector, Word256};

fn addr(s: &str) -> Address {
    s.parse().unwrap()
}

fn token() -> Address {
    addr("0x1000000000000000000000000000000000000001")
}

fn attacker_contract() -> Address {
    addr("0xbad0000000000000000000000000000000000001")
}

fn benign_contract() -> Address {
    addr("0x5afe000000000000000000000000000000000002")
}

fn world() -> WorldState {
    let mut w = WorldState::new();
    for c in fixtures::all().unwrap() {
        w.deploy(c.manifest, c.code);
    }
    let u1 = addr("0xb000000000000000000000000000000000000001");
    let u2 = addr("0xb000000000000000000000000000000000000002");
    w.set_scalar(token(), "totalSupply", Word256::from_u64(1000)).unwrap();
    w.set_mapping(token(), "balances", u1.to_word(), Word256::from_u64(600)).unwrap();
    w.set_mapping(token(), "balances", u2.to_word(), Word256::from_u64(390)).unwrap();
    w.set_mapping(token(), "balances", attacker_contract().to_word(), Word256::from_u64(5)).unwrap();
    w.set_mapping(token(), "balances", benign_contract().to_word(), Word256::from_u64(5)).unwrap();
    w.set_scalar(attacker_contract(), "_to", u2.to_word()).unwrap();
    w
}

fn run(w: &WorldState, tx: &Transaction) -> (Receipt, WorldState, StraightLine) {
    let mut post = w.clone();
    let r = execute_transaction(&mut post, tx, &VmConfig::default());
    assert!(r.status.is_committed(), "{:?}", r.status);
    let sl = replay(&r.trace, &w.manifests, tx).unwrap();
    let rep = check_concrete(&sl, w, tx, Some(&post));
    assert!(rep.is_ok(), "{:#?}", rep.mismatches);
    (r, post, sl)
}

fn transfer_proxy(from: &str, to: &str, value: u64, fee: u64) -> Transaction {
    Transaction {
        origin: addr(from),
        to: token(),
        selector: Selector::of_signature("transferProxy(address,address,uint256,uint256)"),
        args: vec![addr(from).to_word(), addr(to).to_word(), Word256::from_u64(value), Word256::from_u64(fee)],
        theorem_hash: None,
    }
}

fn clear(origin: Address, to: &str) -> Transaction {
    Transaction {
        origin,
        to: token(),
        selector: Selector::of_signature("clear(address)"),
        args: vec![addr(to).to_word()],
        theorem_hash: None,
    }
}

#[test]
fn transfer_proxy_replays_to_reference_program() {
    let w = world();
    let tx = transfer_proxy("0xb000000000000000000000000000000000000001", "0xb000000000000000000000000000000000000002", 10, 1);
    let (_, _, sl) = run(&w, &tx);
    print!("{sl}");
    let text: Vec<String> = sl.stmts.iter().map(|s| s.to_string()).collect();
    let expected = [
        "tmp1:=MultiVulnToken.balances[entry_contract][_from];",
        "tmp2:=evmadd(_fee,_value);",
        "tmp3:= (tmp1<tmp2);",
        "tmp4:=!tmp3;",
        "assume(tmp4);",
        "tmp5:=MultiVulnToken.balances[entry_contract][_to];",
        "tmp6:=MultiVulnToken.balances[entry_contract][_to];",
        "tmp7:=evmadd(tmp6,_value);",
        "tmp8:= (tmp7<tmp5);",
        "tmp9:=!tmp8;",
        "assume(tmp9);",
        "tmp10:=MultiVulnToken.balances[entry_contract][tx_origin];",
        "tmp11:=MultiVulnToken.balances[entry_contract][tx_origin];",
        "tmp12:=evmadd(tmp11,_fee);",
        "tmp13:= (tmp12<tmp10);",
        "tmp14:=!tmp13;",
        "assume(tmp14);",
        "tmp15:=MultiVulnToken.balances[entry_contract][_to];",
        "tmp16:=evmadd(tmp15,_value);",
        "MultiVulnToken.balances[entry_contract][_to]:=tmp16;",
        "tmp17:=MultiVulnToken.balances[entry_contract][tx_origin];",
        "tmp18:=evmadd(tmp17,_fee);",
        "MultiVulnToken.balances[entry_contract][tx_origin]:=tmp18;",
        "tmp19:=MultiVulnToken.balances[entry_contract][_from];",
        "tmp20:=evmadd(_value,_fee);",
        "tmp21:=evmsub(tmp19,tmp20);",
        "MultiVulnToken.balances[entry_contract][_from]:=tmp21;",
    ];
    assert_eq!(text, expected);
    assert_eq!(sl.assume_count(), 3);
    assert_eq!(sl.storage_assign_count(), 3);
    assert!(sl.trivial_removed > 0);
}

#[test]
fn reentrant_clear_repeats_credit_ten_times() {
    let w = world();
    let tx = clear(attacker_contract(), "0xb000000000000000000000000000000000000002");
    let (_, post, sl) = run(&w, &tx);
    print!("{sl}");
    let credits = sl
        .stmts
        .iter()
        .filter(|s| matches!(s, Stmt::Assign { target: Target::Storage(l), expr: Expr::Temp(_), .. } if l.var == "balances"))
        .count();
    assert_eq!(credits, 10);
    let adds = sl.stmts.iter().filter(|s| s.to_string().contains(":=evmadd(tmp")).count();
    assert_eq!(adds, 10 + 9);
    let u2 = addr("0xb000000000000000000000000000000000000002");
    assert_eq!(post.get_var(token(), "balances", Some(u2.to_word())).unwrap(), Word256::from_u64(440));
}

#[test]
fn non_reentrant_clear() {
    let w = world();
    let tx = clear(benign_contract(), "0xb000000000000000000000000000000000000002");
    let (_, _, sl) = run(&w, &tx);
    print!("{sl}");
    assert_eq!(sl.storage_assign_count(), 2);
}

#[test]
fn stop_only_trace_is_empty() {
    let w = world();
    let tx = transfer_proxy("0xb000000000000000000000000000000000000001", "0xb000000000000000000000000000000000000002", 10, 1);
    let sl = replay(&[], &w.manifests, &tx).unwrap();
    assert!(sl.stmts.is_empty());
}
