use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture(rel: &str) -> String {
    root().join("fixtures").join(rel).to_string_lossy().into_owned()
}

fn tct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tct")).args(args).output().expect("tct runs")
}

/// Same as [`tct`] but with the recorded verdict table.
fn tct_recorded(args: &[&str]) -> Output {
    let verdicts = fixture("verdicts.json");
    let mut all = vec!["--recorded", verdicts.as_str()];
    all.extend_from_slice(args);
    tct(&all)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn z3_available() -> bool {
    Command::new("z3").arg("--version").output().is_ok_and(|o| o.status.success())
}

const TRANSFER: [&str; 14] = [
    "--from", "u2", "--to", "MultiVulnToken", "-f", "transferProxy", "-a", "u1", "-a", "u2", "-a", "10", "-a", "1",
];

#[test]
fn protected_demos_exit_with_rejection_codes() {
    let a1 = tct_recorded(&["demo", "attack1", "--protected"]);
    assert_eq!(a1.status.code(), Some(2), "{}", stdout(&a1));
    assert!(stdout(&a1).contains("HypothesisFailed"));
    let a2 = tct_recorded(&["demo", "attack2", "--protected"]);
    assert_eq!(a2.status.code(), Some(3), "{}", stdout(&a2));
    assert!(stdout(&a2).contains("PathHashMismatch"));
}

#[test]
fn unprotected_attack2_drains_more_than_the_attacker_holds() {
    let o = tct(&["demo", "attack2"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("supply invariant violated"), "{}", stdout(&o));
}

#[test]
fn scenario_scripts_meet_their_expectations() {
    for name in ["attack1.json", "attack2.json", "harmless.json", "mixed.json"] {
        let o = tct_recorded(&["sim", "script", &fixture(&format!("scenarios/{name}"))]);
        assert_eq!(o.status.code(), Some(0), "{name}:\n{}", stdout(&o));
    }
}

#[test]
fn trace_dump_reproduces_the_fixture() {
    let o = tct(&[&["trace", &fixture("scenarios/attack1.json")][..], &TRANSFER[..]].concat());
    assert!(o.status.success());
    let want = std::fs::read_to_string(fixture("traces/transferProxy.trace")).unwrap();
    assert_eq!(stdout(&o), want);
}

#[test]
fn run_reports_state_changes_and_rejects_unknown_functions() {
    let o = tct(&[&["run", &fixture("scenarios/attack1.json")][..], &TRANSFER[..]].concat());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("balances[0xb000000000000000000000000000000000000002]: 390 -> 401"), "{}", stdout(&o));
    assert!(stdout(&o).contains("balances[0xb000000000000000000000000000000000000001]: 599 -> 588"));
    let bad = tct(&["run", &fixture("scenarios/attack1.json"), "--from", "u1", "--to", "MultiVulnToken", "-f", "mint"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn prove_stores_theorems_and_reports_invalid_paths() {
    let dir = tempfile::tempdir().unwrap();
    let repo = dir.path().join("r.repo");
    let thm = dir.path().join("t.json");
    let (repo_s, thm_s) = (repo.to_str().unwrap(), thm.to_str().unwrap());
    let hyp = "0 <= _value && _value < 2^255 && 0 <= _fee && _fee < 2^255 && totalSupply < 2^255";
    let ok = tct_recorded(&[
        "prove",
        &fixture("scenarios/attack1.json"),
        &fixture("traces/transferProxy.trace"),
        "--hypothesis",
        hyp,
        "--repo",
        repo_s,
        "--theorem-out",
        thm_s,
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(repo.exists() && thm.exists());

    let listed = tct(&["repo", "list", repo_s]);
    assert!(listed.status.success());
    assert_eq!(stdout(&listed).lines().filter(|l| l.starts_with("0x")).count(), 1, "{}", stdout(&listed));

    let other = dir.path().join("other.repo");
    let added = tct(&["repo", "add", other.to_str().unwrap(), thm_s]);
    assert!(added.status.success(), "{}", String::from_utf8_lossy(&added.stderr));
    assert_eq!(std::fs::read(&other).unwrap(), std::fs::read(&repo).unwrap());

    let found = tct(&[&["repo", "find", repo_s, &fixture("scenarios/attack1.json")][..], &TRANSFER[..]].concat());
    assert_eq!(found.status.code(), Some(0), "{}", stdout(&found));
    let attack = [
        "--from", "attacker1", "--to", "MultiVulnToken", "-f", "transferProxy", "-a", "attacker1", "-a", "attacker2", "-a",
        "2^255+1", "-a", "2^255",
    ];
    let none = tct(&[&["repo", "find", repo_s, &fixture("scenarios/attack1.json")][..], &attack[..]].concat());
    assert_eq!(none.status.code(), Some(2), "{}", stdout(&none));

    let invalid = tct_recorded(&[
        "prove",
        &fixture("scenarios/attack2.json"),
        &fixture("traces/clear_reentrant.trace"),
        "--hypothesis",
        "0 <= totalSupply && totalSupply < 2^255 && _to != msg.sender",
    ]);
    assert_eq!(invalid.status.code(), Some(4), "{}", stdout(&invalid));
}

#[test]
fn missing_verifier_is_a_bridge_error() {
    let o = tct(&[
        "--verifier",
        "/nonexistent/verifier",
        "prove",
        &fixture("scenarios/attack1.json"),
        &fixture("traces/transferProxy.trace"),
        "--hypothesis",
        "totalSupply < 2^255",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stdout(&o));
}

#[test]
fn verdict_missing_from_the_table_is_a_bridge_error() {
    let o = tct_recorded(&[
        "prove",
        &fixture("scenarios/attack1.json"),
        &fixture("traces/transferProxy.trace"),
        "--hypothesis",
        "totalSupply < 2^254",
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", stdout(&o));
}

#[test]
fn assembler_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let hex1 = dir.path().join("a.hex");
    let asm2 = dir.path().join("b.asm");
    let hex2 = dir.path().join("b.hex");
    let s = |p: &Path| p.to_str().unwrap().to_string();
    assert!(tct(&["asm", &fixture("contracts/multivuln.asm"), "-o", &s(&hex1)]).status.success());
    assert!(tct(&["asm", &s(&hex1), "--disassemble", "-o", &s(&asm2)]).status.success());
    assert!(tct(&["asm", &s(&asm2), "-o", &s(&hex2)]).status.success());
    assert_eq!(std::fs::read(&hex1).unwrap(), std::fs::read(&hex2).unwrap());
}

/// The recorded table must agree with the live verifier wherever z3 exists.
#[test]
fn recorded_verdicts_match_live_verifier() {
    if !z3_available() {
        eprintln!("z3 not found; live comparison skipped");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("v.json");
    for name in ["attack1.json", "attack2.json", "harmless.json", "mixed.json"] {
        let o = tct(&["--record-verdicts", table.to_str().unwrap(), "sim", "script", &fixture(&format!("scenarios/{name}"))]);
        assert_eq!(o.status.code(), Some(0), "{name}:\n{}", stdout(&o));
    }
    let live: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&table).unwrap()).unwrap();
    let recorded: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture("verdicts.json")).unwrap()).unwrap();
    assert_eq!(live, recorded);
}
