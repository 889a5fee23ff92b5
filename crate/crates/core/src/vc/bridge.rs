use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::words::{keccak256, Hash32};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    /// `failing_assert` is the 1-based index of the first assert reported as failing.
    Invalid {
        #[serde(default)]
        failing_assert: Option<usize>,
    },
    OutOfProverGas,
    BridgeError { message: String },
}

impl Verdict {
    pub fn is_valid(&self) -> bool {
        *self == Verdict::Valid
    }
}

/// Verdicts keyed by the Keccak-256 digest of the VC text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedVerdicts {
    pub verdicts: BTreeMap<Hash32, Verdict>,
}

impl RecordedVerdicts {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdict table serializes")
    }

    pub fn lookup(&self, vc_text: &str) -> Option<&Verdict> {
        self.verdicts.get(&keccak256(vc_text.as_bytes()))
    }

    pub fn record(&mut self, vc_text: &str, v: Verdict) {
        self.verdicts.insert(keccak256(vc_text.as_bytes()), v);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VerifierConfig {
    /// Runs `program args... <vc-file>` and parses its report.
    External { program: PathBuf, args: Vec<String>, timeout: Duration },
    Recorded(RecordedVerdicts),
}

impl VerifierConfig {
    pub fn external(program: impl Into<PathBuf>, timeout: Duration) -> Self {
        VerifierConfig::External { program: program.into(), args: Vec::new(), timeout }
    }
}

pub fn verify(vc_text: &str, config: &VerifierConfig) -> Verdict {
    verify_with_stats(vc_text, config).0
}

/// Like [`verify`], also returning the wall-clock time spent.
pub fn verify_with_stats(vc_text: &str, config: &VerifierConfig) -> (Verdict, Duration) {
    let start = Instant::now();
    let v = match config {
        VerifierConfig::Recorded(table) => table.lookup(vc_text).cloned().unwrap_or_else(|| Verdict::BridgeError {
            message: format!("no recorded verdict for VC digest {}", keccak256(vc_text.as_bytes())),
        }),
        VerifierConfig::External { program, args, timeout } => run_external(vc_text, program, args, *timeout),
    };
    (v, start.elapsed())
}

static COUNTER: AtomicU64 = AtomicU64::new(0);

fn run_external(vc_text: &str, program: &Path, args: &[String], timeout: Duration) -> Verdict {
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    let path = std::env::temp_dir().join(format!("tct-vc-{}-{n}.bpl", std::process::id()));
    if let Err(e) = std::fs::write(&path, vc_text) {
        return Verdict::BridgeError { message: format!("cannot write {}: {e}", path.display()) };
    }
    let v = run_on_file(&path, vc_text, program, args, timeout);
    let _ = std::fs::remove_file(&path);
    v
}

fn run_on_file(path: &Path, vc_text: &str, program: &Path, args: &[String], timeout: Duration) -> Verdict {
    let mut child = match Command::new(program)
        .args(args)
        .arg(path)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return Verdict::BridgeError { message: format!("cannot run {}: {e}", program.display()) },
    };
    let mut stdout = child.stdout.take().expect("piped stdout");
    let mut stderr = child.stderr.take().expect("piped stderr");
    let out_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let err_reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    match child.wait_timeout(timeout) {
        Ok(Some(_)) => {}
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            return Verdict::OutOfProverGas;
        }
        Err(e) => return Verdict::BridgeError { message: e.to_string() },
    }
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    parse_report(&out, &err, vc_text)
}

/// Interprets Boogie-style verifier output.
pub(crate) fn parse_report(out: &str, err: &str, vc_text: &str) -> Verdict {
    let lower = out.to_ascii_lowercase();
    if lower.contains("timed out") || lower.contains("out of resource") || lower.contains("out of prover gas") {
        return Verdict::OutOfProverGas;
    }
    let Some(summary) = out.lines().rev().find(|l| l.contains("finished with")) else {
        let msg = if err.trim().is_empty() { out.trim() } else { err.trim() };
        return Verdict::BridgeError { message: format!("unrecognized verifier output: {msg}") };
    };
    let count = |label: &str| -> Option<usize> {
        let i = summary.find(label)?;
        summary[..i].split_whitespace().last()?.parse().ok()
    };
    let errors = count(" error").unwrap_or(0);
    let verified = count(" verified").unwrap_or(0);
    if errors == 0 && verified > 0 {
        return Verdict::Valid;
    }
    if errors == 0 {
        return Verdict::BridgeError { message: format!("nothing verified: {summary}") };
    }
    let failing_line = out.lines().find(|l| l.contains("Error")).and_then(|l| {
        let open = l.find('(')?;
        let rest = &l[open + 1..];
        rest[..rest.find(',')?].parse::<usize>().ok()
    });
    let failing_assert = failing_line.map(|line| {
        vc_text.lines().take(line).filter(|l| l.trim_start().starts_with("assert")).count()
    });
    Verdict::Invalid { failing_assert }
}
