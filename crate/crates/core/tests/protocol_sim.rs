mod support;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use support::traffic::*;
use tct_core::sim::{check_supply, Applicability, Outcome, ProverGas, Rejection, HASH_BYTES};
use tct_core::spec::parse_spec;
use tct_core::theorem::Repository;
use tct_core::vc::{RecordedVerdicts, VerifierConfig};
use tct_core::words::{Hash32, Word256};

fn u(i: usize) -> tct_core::words::Address {
    addr(USERS[i])
}

#[test]
fn scenario_scripts_meet_their_expectations() {
    for name in ["attack1.json", "attack2.json", "harmless.json", "mixed.json"] {
        let (s, mut sim) = sim(name);
        for r in s.run(&mut sim).unwrap() {
            assert!(r.as_expected(), "{name} step {}: got {}, expected {:?}\n{}", r.index + 1, r.outcome.name(), r.expected, sim.log.render());
        }
    }
}

#[test]
fn protocol_log_is_reproducible() {
    let render = || {
        let (s, mut sim) = sim("attack2.json");
        s.run(&mut sim).unwrap();
        sim.log.render()
    };
    assert_eq!(render(), render());
}

#[test]
fn committed_flow_a_carries_sixty_four_bytes() {
    let (_, mut sim) = sim("mixed.json");
    let tx = transfer_proxy(u(0), u(0), u(1), Word256::from_u64(3), Word256::from_u64(1));
    let out = sim.flow_a(&tx, None);
    assert!(matches!(out, Outcome::Committed { .. }), "{out:?}");
    let run = sim.log.entries.last().unwrap().run;
    assert_eq!(sim.log.wire_bytes(run), 2 * HASH_BYTES);
    assert_eq!(2 * HASH_BYTES, 64);
}

#[test]
fn repeated_benign_transactions_reuse_one_proof() {
    let (_, mut sim) = sim("harmless.json");
    let h = parse_spec(HARMLESS).unwrap();
    for i in 0..5 {
        let out = sim.issue(&clear(reentrant_contract(), u(1)), Some(&h));
        assert!(matches!(out, Outcome::Committed { .. }), "round {i}: {out:?}");
    }
    assert_eq!(sim.node.stats.verifier_calls, 1);
    assert_eq!(sim.node.repo.len(), 1);
}

#[test]
fn flow_c_checks_the_hypothesis_before_proving() {
    let (_, mut sim) = sim("harmless.json");
    let out = sim.flow_c(&clear(u(0), u(1)), &parse_spec(HARMLESS).unwrap());
    assert!(matches!(out, Outcome::Rejected(Rejection::HypothesisFailed(_))), "{out:?}");
    assert_eq!(sim.node.stats.verifier_calls, 0);
}

#[test]
fn node_rechecks_the_hypothesis_on_its_own_state() {
    let (_, mut sim) = sim("harmless.json");
    let h = parse_spec(HARMLESS).unwrap();
    let tx = clear(reentrant_contract(), u(1));
    let Outcome::Committed { theorem, .. } = sim.flow_c(&tx, &h) else { panic!("{}", sim.log.render()) };
    // The state changes between the service's answer and execution.
    sim.node.world.set_mapping(token(), "balances", reentrant_contract().to_word(), Word256::from_u64(1)).unwrap();
    sim.node.world.set_scalar(token(), "totalSupply", Word256::from_u64(1001)).unwrap();
    let before = sim.node.world.clone();
    let err = sim.node.execute_with_theorem(&tx, theorem).unwrap_err();
    assert!(matches!(err, Rejection::HypothesisFailed(_)), "{err:?}");
    assert_eq!(sim.node.world, before);
}

#[test]
fn unknown_and_mismatched_theorems_are_refused() {
    let (_, mut sim) = sim("mixed.json");
    let tx = clear(benign_contract(), u(1));
    let missing = Hash32([7; 32]);
    assert_eq!(sim.node.execute_with_theorem(&tx, missing).unwrap_err(), Rejection::TheoremNotInRepo(missing));
    let transfer_theorem = *sim.node.repo.for_entry(token(), transfer_proxy(u(0), u(0), u(1), Word256::ZERO, Word256::ZERO).selector)[0].0;
    assert_eq!(sim.node.execute_with_theorem(&tx, transfer_theorem).unwrap_err(), Rejection::TheoremEntryMismatch(transfer_theorem));
}

#[test]
fn hypothesis_only_matching_defers_the_path_check_to_the_node() {
    let (_, mut sim) = sim("attack2.json");
    sim.mode = Applicability::HypothesisOnly;
    let before = sim.node.world.clone();
    let out = sim.flow_a(&clear(reentrant_contract(), u(1)), None);
    assert!(matches!(out, Outcome::Rejected(Rejection::PathHashMismatch { .. })), "{out:?}");
    assert_eq!(sim.node.world, before);
}

#[test]
fn prover_gas_runs_out() {
    let (_, mut sim) = sim("harmless.json");
    sim.node.gas = ProverGas { charge: 3, allowance: 5 };
    let h = parse_spec("_to != msg.sender").unwrap();
    let tx = clear(reentrant_contract(), u(1));
    let r = sim.node.test_run(&tx);
    let first = sim.flow_b(&tx, &r.trace, &h, r.path_hash);
    assert!(first.rejection().is_some(), "unrecorded VC yields a bridge error, but gas is still charged");
    let second = sim.flow_b(&tx, &r.trace, &h, r.path_hash);
    assert_eq!(second, Outcome::Rejected(Rejection::OutOfProverGas));
    assert_eq!(sim.node.stats.verifier_calls, 1);
    assert_eq!(sim.node.remaining_gas(&tx.origin), 2);
}

#[test]
fn flow_b_rejects_a_forged_path_hash() {
    let (_, mut sim) = sim("harmless.json");
    let tx = clear(reentrant_contract(), u(1));
    let r = sim.node.test_run(&tx);
    let out = sim.flow_b(&tx, &r.trace, &parse_spec(HARMLESS).unwrap(), Hash32([1; 32]));
    assert_eq!(out, Outcome::Rejected(Rejection::PathHashMismatch { actual: r.path_hash }));
    assert_eq!(sim.node.stats.verifier_calls, 0);
}

#[test]
fn verdicts_map_to_rejections() {
    let (_, mut sim) = sim("attack2.json");
    let tx = clear(reentrant_contract(), u(1));
    let out = sim.flow_c(&tx, &parse_spec(NON_REENTRANT).unwrap());
    let Outcome::Rejected(r @ Rejection::VerdictInvalid { .. }) = &out else { panic!("{out:?}") };
    assert_eq!(r.exit_code(), 4);
    // An empty verdict table cannot answer.
    let s = scenario("harmless.json");
    let mut sim = s.build(Repository::new(), VerifierConfig::Recorded(RecordedVerdicts::default())).unwrap();
    let out = sim.flow_c(&tx, &parse_spec(HARMLESS).unwrap());
    let Outcome::Rejected(r @ Rejection::BridgeError(_)) = &out else { panic!("{out:?}") };
    assert_eq!(r.exit_code(), 5);
}

#[test]
fn random_adversarial_traffic_preserves_supply_and_atomicity() {
    let (_, mut sim) = sim("mixed.json");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut commits, mut rejects) = (0, 0);
    for _ in 0..600 {
        let tx = random_tx(&mut rng);
        let before = sim.node.world.clone();
        let force = (rand::Rng::gen_bool(&mut rng, 0.5)).then(|| sim.node.repo.for_entry(tx.to, tx.selector).first().map(|(h, _)| **h)).flatten();
        match sim.flow_a(&tx, force) {
            Outcome::Committed { .. } => {
                commits += 1;
                check_supply(&sim.node.world, token()).unwrap_or_else(|v| panic!("after {tx:?}: {v}"));
            }
            Outcome::Rejected(_) => {
                rejects += 1;
                assert_eq!(sim.node.world, before, "rejected {tx:?} changed state");
            }
            Outcome::Accepted { .. } => unreachable!(),
        }
    }
    assert!(commits > 100 && rejects > 100, "{commits} commits, {rejects} rejections");
}
