//! Structure of generated verification conditions.

use std::path::{Path, PathBuf};

use tct_core::concolic::replay;
use tct_core::fixtures;
use tct_core::spec::parse_spec;
use tct_core::vc::{emit_text, post_declaration_lines, statement_kinds, weave, LineKind};
use tct_core::vm::{parse_trace_dump, WorldState};

const OVERFLOW_GUARD: &str = "0 <= _value && _value < 2^255 && 0 <= _fee && _fee < 2^255 && totalSupply < 2^255";

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn world() -> WorldState {
    let mut w = WorldState::new();
    for c in fixtures::all().unwrap() {
        w.deploy(c.manifest, c.code);
    }
    w
}

fn vc_for(trace: &str, hypothesis: &str) -> String {
    let text = std::fs::read_to_string(repo_root().join("fixtures/traces").join(trace)).unwrap();
    let dump = parse_trace_dump(&text).unwrap();
    let w = world();
    let sl = replay(&dump.events, &w.manifests, &dump.tx).unwrap();
    emit_text(&weave(&sl, &w.manifests, &dump.tx, &parse_spec(hypothesis).unwrap()).unwrap())
}

/// Drops comments, blank lines and whitespace differences.
fn normalize(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split("//").next().unwrap_or("").split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect()
}

fn kinds(spec: &str) -> Vec<LineKind> {
    spec.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            'A' => LineKind::Assume,
            'X' => LineKind::Assert,
            'T' => LineKind::TempAssign,
            'S' => LineKind::StorageAssign,
            'H' => LineKind::Havoc,
            _ => panic!("bad kind {c}"),
        })
        .collect()
}

#[test]
fn transfer_proxy_matches_golden_file() {
    let got = vc_for("transferProxy.trace", OVERFLOW_GUARD);
    let golden = repo_root().join("fixtures/vc/transferProxy.bpl");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    let want = std::fs::read_to_string(&golden).unwrap();
    assert_eq!(normalize(&got), normalize(&want));
}

#[test]
fn transfer_proxy_statement_sequence() {
    let vc = vc_for("transferProxy.trace", OVERFLOW_GUARD);
    // Hypothesis, entry invariants, three guarded checks, three updates, exit invariants.
    let want = kinds("AAAAA AA  TTTTA TTTTTA TTTTTA  TTS TTS TTTS  XX");
    assert_eq!(statement_kinds(&vc), want);
    let n = post_declaration_lines(&vc);
    assert!((44..=50).contains(&n), "{n} lines after declarations");
}

#[test]
fn generation_is_deterministic() {
    assert_eq!(vc_for("transferProxy.trace", OVERFLOW_GUARD), vc_for("transferProxy.trace", OVERFLOW_GUARD));
    let h = "balances[msg.sender] == 0";
    assert_eq!(vc_for("clear_reentrant.trace", h), vc_for("clear_reentrant.trace", h));
}

#[test]
fn hypothesis_does_not_change_the_body() {
    let a = vc_for("transferProxy.trace", OVERFLOW_GUARD);
    let b = vc_for("transferProxy.trace", "_value < 10");
    let body = |s: &str| s.split("// insert invariant").nth(1).unwrap().to_string();
    assert_eq!(body(&a), body(&b));
}

fn count(vc: &str, prefix: &str) -> usize {
    vc.lines().filter(|l| l.trim().starts_with(prefix)).count()
}

#[test]
fn reentrant_clear_credits_ten_times() {
    let vc = vc_for("clear_reentrant.trace", "balances[msg.sender] == 0");
    // Balance writes in order: C for a credit, Z for zeroing the sender.
    let writes: String = vc
        .lines()
        .map(str::trim)
        .filter(|l| l.starts_with("MultiVulnToken.balances[entry_contract][") && l.contains(":="))
        .map(|l| if l.ends_with(":=Zero;") { 'Z' } else { 'C' })
        .collect();
    assert_eq!(writes, "CZ".repeat(10), "{vc}");
    // The outermost frame credits the transaction's own `_to`.
    assert_eq!(count(&vc, "MultiVulnToken.balances[entry_contract][_to]:="), 1);
}

#[test]
fn benign_clear_is_a_single_frame() {
    let vc = vc_for("clear_benign.trace", "0 <= totalSupply && totalSupply < 2^255 && _to != msg.sender");
    assert_eq!(count(&vc, "MultiVulnToken.balances[entry_contract][_to]:="), 1, "{vc}");
    assert_eq!(count(&vc, "MultiVulnToken.balances[entry_contract][tx_origin]:=Zero"), 1, "{vc}");
}

#[test]
fn attack_trace_takes_the_benign_path() {
    let a = std::fs::read_to_string(repo_root().join("fixtures/traces/transferProxy.trace")).unwrap();
    let b = std::fs::read_to_string(repo_root().join("fixtures/traces/transferProxy_attack.trace")).unwrap();
    let (a, b) = (parse_trace_dump(&a).unwrap(), parse_trace_dump(&b).unwrap());
    let ph = |e: &[_]| tct_core::vm::PathBuffer::of_trace(e).hash();
    assert_eq!(ph(&a.events), ph(&b.events));
}
