//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::traffic::*;
use tct_core::asm::{AbiType, StorageKind, StorageVar};
use tct_core::concolic::{check_concrete, replay};
use tct_core::sim::{check_supply, find_theorem, Applicability, Outcome, Rejection};
use tct_core::spec::{parse_spec, CompiledHypothesis};
use tct_core::theorem::Repository;
use tct_core::vc::{emit_text, post_declaration_lines, LineKind, statement_kinds, verify_with_stats, weave, Verdict, VerifierConfig, AXIOMS};
use tct_core::vm::{execute_transaction, parse_trace_dump, VmConfig};
use tct_core::words::{keccak256, Address, Word256};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn tct() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tct"))
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, format!("{what} took {t:?}, limit {limit:?}"))?;
    Ok(t)
}

fn attack_one() -> tct_core::vm::Transaction {
    let a1 = addr(USERS[2]);
    let big = Word256::pow2(255);
    transfer_proxy(a1, a1, addr(USERS[3]), big.wrapping_add(Word256::ONE), big)
}

fn c1_attack_reproduction() -> Check {
    let start = Instant::now();
    let out = tct().args(["demo", "attack1"]).output().map_err(|e| e.to_string())?;
    let t = within(start, Duration::from_secs(1), "tct demo attack1")?;
    let text = String::from_utf8_lossy(&out.stdout);
    ensure(out.status.code() == Some(0), format!("exit {:?}: {text}", out.status.code()))?;
    ensure(text.contains("committed"), "not committed")?;
    let mut huge = Vec::new();
    for who in [USERS[2], USERS[3]] {
        let line = text.lines().find(|l| l.contains(&format!("balances[{who}]"))).ok_or(format!("no balance line for {who}"))?;
        let v: Word256 = line.rsplit("-> ").next().unwrap().trim().parse().map_err(|e| format!("{line}: {e:?}"))?;
        ensure(v.bit(255), format!("{who} balance {} is below 2^255", v.to_decimal()))?;
        huge.push(who);
    }
    Ok(format!("committed; {} and {} hold >= 2^255 tokens; {t:?}", huge[0], huge[1]))
}

fn c2_attack_prevention() -> Check {
    let (_, mut sim) = sim("attack1.json");
    let tx = attack_one();
    let theorem = *sim.node.repo.for_entry(tx.to, tx.selector).first().ok_or("overflow-guard theorem missing")?.0;
    ensure(sim.node.repo.len() == 1, "expected exactly the transferProxy theorem")?;
    let before = sim.node.world.clone();
    let start = Instant::now();
    let out = sim.flow_a(&tx, Some(theorem));
    let t1 = within(start, Duration::from_secs(1), "attack 1 under flow A")?;
    ensure(matches!(out, Outcome::Rejected(Rejection::HypothesisFailed(_))), format!("attack 1: {out:?}"))?;
    ensure(sim.node.world == before, "attack 1 changed state")?;

    let (_, mut sim2) = support::traffic::sim("attack2.json");
    let tx = clear(reentrant_contract(), addr(USERS[1]));
    let theorem = *sim2.node.repo.for_entry(tx.to, tx.selector).first().ok_or("non-reentrant theorem missing")?.0;
    let before = sim2.node.world.clone();
    let start = Instant::now();
    let out = sim2.flow_a(&tx, Some(theorem));
    let t2 = within(start, Duration::from_secs(1), "attack 2 under flow A")?;
    ensure(matches!(out, Outcome::Rejected(Rejection::PathHashMismatch { .. })), format!("attack 2: {out:?}"))?;
    ensure(sim2.node.world == before, "attack 2 changed state")?;

    let codes: Vec<_> = ["attack1", "attack2"]
        .iter()
        .map(|a| {
            tct()
                .args(["--recorded", root().join("fixtures/verdicts.json").to_str().unwrap(), "demo", a, "--protected"])
                .output()
                .map(|o| o.status.code())
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(codes == [Some(2), Some(3)], format!("CLI exit codes {codes:?}"))?;
    Ok(format!("HypothesisFailed in {t1:?}, PathHashMismatch in {t2:?}, state unchanged, exit codes 2/3"))
}

fn normalize(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split("//").next().unwrap_or("").split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect()
}

fn c3_golden_vc() -> Check {
    let r = root();
    let out = tct()
        .arg("translate")
        .arg(r.join("fixtures/scenarios/attack1.json"))
        .arg(r.join("fixtures/traces/transferProxy.trace"))
        .args(["--hypothesis", OVERFLOW_GUARD])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), String::from_utf8_lossy(&out.stderr).to_string())?;
    let got = String::from_utf8_lossy(&out.stdout).to_string();
    let golden = std::fs::read_to_string(r.join("fixtures/vc/transferProxy.bpl")).map_err(|e| e.to_string())?;
    ensure(normalize(&got) == normalize(&golden), "differs from fixtures/vc/transferProxy.bpl")?;
    let kinds: String = statement_kinds(&got)
        .iter()
        .map(|k| match k {
            LineKind::Assume => 'A',
            LineKind::Assert => 'X',
            LineKind::TempAssign => 'T',
            LineKind::StorageAssign => 'S',
            LineKind::Havoc => 'H',
        })
        .collect();
    let want: String = "AAAAA AA TTTTA TTTTTA TTTTTA TTS TTS TTTS XX".split_whitespace().collect();
    ensure(kinds == want, format!("statement kinds {kinds}, expected {want}"))?;
    let n = post_declaration_lines(&got);
    ensure((44..=50).contains(&n), format!("{n} post-declaration lines"))?;
    Ok(format!("matches golden file; {} statements in the expected order; {n} lines", kinds.len()))
}

fn z3_available() -> bool {
    let z3 = std::env::var_os("BPLZ3_Z3").unwrap_or_else(|| "z3".into());
    Command::new(z3).arg("--version").output().is_ok_and(|o| o.status.success())
}

fn vc_text(scenario: &str, trace: &str, hyp: &str) -> Result<String, String> {
    let s = load(scenario);
    let world = s.world().map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(root().join("fixtures/traces").join(trace)).map_err(|e| e.to_string())?;
    let dump = parse_trace_dump(&text).map_err(|e| e.to_string())?;
    let sl = replay(&dump.events, &world.manifests, &dump.tx).map_err(|e| e.to_string())?;
    let vc = weave(&sl, &world.manifests, &dump.tx, &parse_spec(hyp).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    Ok(emit_text(&vc))
}

fn load(name: &str) -> tct_core::sim::Scenario {
    scenario(name)
}

fn c4_proof_outcomes() -> Check {
    let (cfg, mode) = if z3_available() {
        (VerifierConfig::external(env!("CARGO_BIN_EXE_bplz3"), Duration::from_secs(60)), "live bplz3+z3")
    } else {
        (recorded(), "recorded verdicts")
    };
    let cases = [
        ("transferProxy + overflow guard", "attack1.json", "transferProxy.trace", OVERFLOW_GUARD, true),
        ("re-entrant clear + non-reentrant hypothesis", "attack2.json", "clear_reentrant.trace", NON_REENTRANT, false),
        ("re-entrant clear + zero sender balance", "attack2.json", "clear_reentrant.trace", HARMLESS, true),
    ];
    let mut parts = Vec::new();
    for (name, scen, trace, hyp, want_valid) in cases {
        let text = vc_text(scen, trace, hyp)?;
        let (v, t) = verify_with_stats(&text, &cfg);
        ensure(t < Duration::from_secs(60), format!("{name}: {t:?}"))?;
        let ok = if want_valid { v == Verdict::Valid } else { matches!(v, Verdict::Invalid { .. }) };
        ensure(ok, format!("{name}: {v:?}"))?;
        parts.push(format!("{} {:.2}s", if want_valid { "valid" } else { "invalid" }, t.as_secs_f64()));
    }
    Ok(format!("{mode}: {}", parts.join(", ")))
}

fn c5_axioms() -> Check {
    support::axioms::prelude_matches(AXIOMS)?;
    let start = Instant::now();
    let (applied, failures) = support::axioms::check_random_pairs(7, 100_000);
    let t = within(start, Duration::from_secs(10), "axiom checks")?;
    ensure(failures.is_empty(), format!("{} failures, first {:?}", failures.len(), failures.first()))?;
    Ok(format!("100000 pairs, {} clause instances, 0 failures, {t:?}", applied.iter().sum::<usize>()))
}

fn c6_concolic_oracle() -> Check {
    let dir = root().join("fixtures/traces");
    let mut files: Vec<_> = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.map(|e| e.unwrap().path()).collect();
    files.sort();
    let (mut assumes, mut assigns) = (0, 0);
    for f in &files {
        let name = f.file_name().unwrap().to_string_lossy().to_string();
        let scen = if name.starts_with("clear") { "attack2.json" } else { "attack1.json" };
        let pre = load(scen).world().map_err(|e| e.to_string())?;
        let dump = parse_trace_dump(&std::fs::read_to_string(f).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let mut post = pre.clone();
        let r = execute_transaction(&mut post, &dump.tx, &VmConfig::default());
        ensure(r.trace == dump.events, format!("{name}: trace does not reproduce from the scenario state"))?;
        let sl = replay(&dump.events, &pre.manifests, &dump.tx).map_err(|e| format!("{name}: {e}"))?;
        let rep = check_concrete(&sl, &pre, &dump.tx, Some(&post));
        ensure(rep.is_ok(), format!("{name}: {:?}", rep.mismatches))?;
        assumes += rep.assumes_checked;
        assigns += rep.assigns_checked;
    }
    Ok(format!("{} traces, {assumes} assumes and {assigns} stored values reproduced, 0 mismatches", files.len()))
}

fn c7_invariant_preservation() -> Check {
    let (_, mut sim) = sim("mixed.json");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let start = Instant::now();
    let (mut commits, mut attempts) = (0, 0);
    while commits < 1000 {
        attempts += 1;
        ensure(attempts < 20_000, format!("only {commits} commits in {attempts} attempts"))?;
        let tx = random_tx(&mut rng);
        let before = sim.node.world.clone();
        match sim.flow_a(&tx, None) {
            Outcome::Committed { .. } => {
                commits += 1;
                check_supply(&sim.node.world, token()).map_err(|v| format!("commit {commits}: {v}"))?;
            }
            _ => ensure(sim.node.world == before, "a rejected transaction changed state")?,
        }
    }
    let t = within(start, Duration::from_secs(30), "1000 commits")?;
    Ok(format!("1000 commits out of {attempts} attempts, supply equation held throughout, {t:?}"))
}

fn c8_overhead() -> Check {
    let (_, mut sim) = sim("attack1.json");
    let tx = transfer_proxy(addr(USERS[0]), addr(USERS[0]), addr(USERS[1]), Word256::from_u64(1), Word256::ZERO);
    let hyp = parse_spec(OVERFLOW_GUARD).map_err(|e| e.to_string())?;
    let theorem = find_theorem(&sim.node, &tx, Applicability::TestRun).map_err(|e| e.to_string())?;
    let proven = sim.node.repo.get(&theorem).unwrap().clone();
    let world = sim.node.world.clone();
    let manifest = world.manifests.get(&tx.to).unwrap();
    let func = manifest.function_by_selector(tx.selector).unwrap();
    // Compiled once per theorem, as the node does.
    let compiled = CompiledHypothesis::compile(&hyp, manifest, func).map_err(|e| e.to_string())?;
    const N: u32 = 2000;
    let (mut exec, mut check) = (Duration::ZERO, Duration::ZERO);
    for _ in 0..N {
        let mut w = world.clone();
        let start = Instant::now();
        let r = execute_transaction(&mut w, &tx, &VmConfig::default());
        exec += start.elapsed();
        let start = Instant::now();
        let holds = compiled.holds_for_call(&world, tx.to, tx.origin, func, &tx.args).map_err(|e| e.to_string())?;
        // Rehash the recorded path buffer rather than trusting the receipt.
        let covered = proven.contains_path(&r.path.hash());
        check += start.elapsed();
        ensure(holds && covered, "benign transfer not covered")?;
    }
    let ratio = check.as_secs_f64() / exec.as_secs_f64();
    ensure(ratio < 0.05, format!("checks are {:.2}% of execution time", ratio * 100.0))?;

    let calls = sim.node.stats.verifier_calls;
    for _ in 0..5 {
        let out = sim.flow_a(&tx, None);
        ensure(matches!(out, Outcome::Committed { .. }), format!("{out:?}"))?;
    }
    let extra = sim.node.stats.verifier_calls - calls;
    ensure(extra == 0, format!("{extra} verifier calls on repeat submissions"))?;
    Ok(format!("check/exec = {:.2}% ({:?} vs {:?} per tx); 0 verifier calls on 5 repeats", ratio * 100.0, check / N, exec / N))
}

fn c9_storage_keys() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for i in 0..100 {
        let mut a = [0u8; 20];
        rng.fill(&mut a);
        let who = Address(a);
        let slot = Word256::from_u64(rng.gen());
        let var = StorageVar { name: "m".into(), slot, kind: StorageKind::Mapping, value_type: AbiType::Uint256 };
        let got = var.storage_key(Some(who.to_word())).map_err(|e| e.to_string())?;
        let mut pre = Vec::with_capacity(64);
        pre.extend_from_slice(&who.to_word().to_be_bytes());
        pre.extend_from_slice(&slot.to_be_bytes());
        let want = Word256::from_be_bytes(support::keccak::keccak256(&pre));
        ensure(got == want, format!("pair {i}: {} vs {}", got.to_hex(), want.to_hex()))?;
    }
    Ok("100 random (slot, address) pairs bit-exact against the reference sponge".into())
}

fn c10_repository_growth() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("theorems.repo");
    let mut repo = Repository::open(&path).map_err(|e| e.to_string())?;
    let hyp = parse_spec(OVERFLOW_GUARD).map_err(|e| e.to_string())?;
    let tx = attack_one();
    repo.add_theorem(tx.to, tx.selector, &hyp, keccak256(b"first path"));
    repo.persist().map_err(|e| e.to_string())?;
    let base = file_len(&path)?;
    for i in 0..100u32 {
        repo.add_theorem(tx.to, tx.selector, &hyp, keccak256(&i.to_be_bytes()));
    }
    repo.persist().map_err(|e| e.to_string())?;
    let growth = file_len(&path)? - base;
    let reopened = Repository::open(&path).map_err(|e| e.to_string())?;
    ensure(reopened.len() == 1, format!("{} theorems", reopened.len()))?;
    let paths = reopened.iter().next().map(|(_, t)| t.path_hashes.len()).unwrap_or(0);
    ensure(paths == 101, format!("{paths} path hashes"))?;
    ensure((2880..=3520).contains(&growth), format!("file grew by {growth} bytes"))?;
    Ok(format!("1 theorem, 101 paths, file grew by {growth} bytes for 100 paths"))
}

fn file_len(p: &Path) -> Result<u64, String> {
    std::fs::metadata(p).map(|m| m.len()).map_err(|e| e.to_string())
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("attack reproduction", c1_attack_reproduction),
        ("attack prevention", c2_attack_prevention),
        ("golden VC", c3_golden_vc),
        ("proof outcomes", c4_proof_outcomes),
        ("arithmetic axiom consistency", c5_axioms),
        ("concrete-symbolic oracle", c6_concolic_oracle),
        ("invariant preservation", c7_invariant_preservation),
        ("overhead and reuse", c8_overhead),
        ("storage-key oracle", c9_storage_keys),
        ("repository economics", c10_repository_growth),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {e}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
