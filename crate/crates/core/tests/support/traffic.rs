//! Shared fixtures for protocol tests: scenario loading and a random
//! transaction generator mixing benign transfers with the known attacks.


use std::path::{Path, PathBuf};

use rand::Rng;

use tct_core::sim::{load_scenario, Scenario, Sim};
use tct_core::theorem::Repository;
use tct_core::vc::{RecordedVerdicts, VerifierConfig};
use tct_core::vm::Transaction;
use tct_core::words::{Address, Selector, Word256};

pub const OVERFLOW_GUARD: &str = "0 <= _value && _value < 2^255 && 0 <= _fee && _fee < 2^255 && totalSupply < 2^255";
pub const NON_REENTRANT: &str = "0 <= totalSupply && totalSupply < 2^255 && _to != msg.sender";
pub const HARMLESS: &str = "balances[msg.sender] == 0";

pub fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn recorded() -> VerifierConfig {
    let text = std::fs::read_to_string(root().join("fixtures/verdicts.json")).unwrap();
    VerifierConfig::Recorded(RecordedVerdicts::from_json(&text).unwrap())
}

pub fn scenario(name: &str) -> Scenario {
    load_scenario(&root().join("fixtures/scenarios").join(name)).unwrap()
}

pub fn sim(name: &str) -> (Scenario, Sim) {
    let s = scenario(name);
    let sim = s.build(Repository::new(), recorded()).unwrap();
    (s, sim)
}

pub fn addr(s: &str) -> Address {
    s.parse().unwrap()
}

pub fn token() -> Address {
    addr("0x1000000000000000000000000000000000000001")
}

pub fn reentrant_contract() -> Address {
    addr("0xbad0000000000000000000000000000000000001")
}

pub fn benign_contract() -> Address {
    addr("0x5afe000000000000000000000000000000000002")
}

pub const USERS: [&str; 4] = [
    "0xb000000000000000000000000000000000000001",
    "0xb000000000000000000000000000000000000002",
    "0xa000000000000000000000000000000000000001",
    "0xa000000000000000000000000000000000000002",
];

pub fn transfer_proxy(origin: Address, from: Address, to: Address, value: Word256, fee: Word256) -> Transaction {
    Transaction {
        origin,
        to: token(),
        selector: Selector::of_signature("transferProxy(address,address,uint256,uint256)"),
        args: vec![from.to_word(), to.to_word(), value, fee],
        theorem_hash: None,
    }
}

pub fn clear(origin: Address, to: Address) -> Transaction {
    Transaction { origin, to: token(), selector: Selector::of_signature("clear(address)"), args: vec![to.to_word()], theorem_hash: None }
}

fn amount<R: Rng>(rng: &mut R) -> Word256 {
    match rng.gen_range(0..10) {
        0 => Word256::pow2(255).wrapping_add(Word256::from_u64(rng.gen_range(0..3))),
        1 => Word256::ZERO.wrapping_sub(Word256::from_u64(rng.gen_range(1..4))),
        _ => Word256::from_u64(rng.gen_range(0..60)),
    }
}

fn user<R: Rng>(rng: &mut R) -> Address {
    addr(USERS[rng.gen_range(0..USERS.len())])
}

/// A random transaction: mostly small transfers, plus overflow transfers
/// and re-entrant or benign `clear` calls.
pub fn random_tx<R: Rng>(rng: &mut R) -> Transaction {
    match rng.gen_range(0..10) {
        0 => {
            let big = Word256::pow2(255);
            let (a, b) = (user(rng), user(rng));
            transfer_proxy(a, a, b, big.wrapping_add(Word256::from_u64(1)), big)
        }
        1 => clear(reentrant_contract(), user(rng)),
        2 => clear(benign_contract(), user(rng)),
        3 => clear(user(rng), user(rng)),
        _ => {
            let origin = user(rng);
            let from = if rng.gen_bool(0.8) { origin } else { user(rng) };
            transfer_proxy(origin, from, user(rng), amount(rng), amount(rng))
        }
    }
}
