//! A checker for straight-line Boogie procedures.
//!
//! Supports the declarations and statements that verification conditions
//! for replayed transactions use: type aliases, constants, axioms,
//! uninterpreted functions, global variables with map types, and procedures
//! whose bodies consist of local declarations, assignments (including map
//! element updates), `assume`, `assert` and `havoc`. Each assertion is
//! checked by z3 and the result is reported in Boogie's output format.

mod smt;
mod syntax;

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::Duration;

use thiserror::Error;
use wait_timeout::ChildExt;

pub use smt::{Query, Translation};
pub use syntax::Pos;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line} col {col}: {message}")]
    Parse { line: usize, col: usize, message: String },
    #[error("type error: {0}")]
    Type(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("cannot run solver `{path}`: {source}")]
    Spawn { path: String, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct Options {
    pub z3: PathBuf,
    /// Per-assertion solver limit.
    pub check_timeout: Duration,
    /// Limit for the whole solver run.
    pub total_timeout: Duration,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            z3: std::env::var_os("BPLZ3_Z3").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("z3")),
            check_timeout: Duration::from_secs(10),
            total_timeout: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Proved,
    Failed,
    TimedOut,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertResult {
    pub procedure: String,
    pub pos: Pos,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub results: Vec<AssertResult>,
    pub procedures: Vec<String>,
}

impl Report {
    /// Procedures whose assertions all hold.
    pub fn verified(&self) -> usize {
        self.procedures.iter().filter(|p| self.results.iter().filter(|r| &r.procedure == *p).all(|r| r.outcome == Outcome::Proved)).count()
    }

    pub fn errors(&self) -> usize {
        self.results.iter().filter(|r| matches!(r.outcome, Outcome::Failed | Outcome::Unknown)).count()
    }

    pub fn timeouts(&self) -> usize {
        self.results.iter().filter(|r| r.outcome == Outcome::TimedOut).count()
    }

    pub fn all_proved(&self) -> bool {
        self.results.iter().all(|r| r.outcome == Outcome::Proved)
    }

    /// Boogie-style report text.
    pub fn render(&self, file: &str) -> String {
        let mut s = String::new();
        for r in &self.results {
            let (l, c) = (r.pos.line, r.pos.col);
            match r.outcome {
                Outcome::Proved => {}
                Outcome::Failed => {
                    let _ = writeln!(s, "{file}({l},{c}): Error: this assertion could not be proved");
                }
                Outcome::Unknown => {
                    let _ = writeln!(s, "{file}({l},{c}): Error: this assertion could not be proved (solver returned unknown)");
                }
                Outcome::TimedOut => {
                    let _ = writeln!(s, "{file}({l},{c}): Verification of '{}' timed out", r.procedure);
                }
            }
        }
        let _ = write!(s, "\nBoogie program verifier finished with {} verified, {} error{}", self.verified(), self.errors(), if self.errors() == 1 { "" } else { "s" });
        if self.timeouts() > 0 {
            let _ = write!(s, ", {} time out{}", self.timeouts(), if self.timeouts() == 1 { "" } else { "s" });
        }
        s.push('\n');
        s
    }
}

pub fn translate(src: &str) -> Result<Translation, Error> {
    smt::translate(&syntax::parse(src)?)
}

/// Solver script for `src` with the given per-check limit.
pub fn smt_script(src: &str, check_timeout: Option<Duration>) -> Result<String, Error> {
    let t = translate(src)?;
    Ok(smt::script(&t, check_timeout.map(|d| d.as_millis() as u64)))
}

pub fn check(src: &str, opts: &Options) -> Result<Report, Error> {
    let t = translate(src)?;
    let procedures = t.procedures.iter().map(|(p, _)| p.clone()).collect();
    if t.queries.is_empty() {
        return Ok(Report { results: Vec::new(), procedures });
    }
    let script = smt::script(&t, Some(opts.check_timeout.as_millis() as u64));
    let out = run_solver(&opts.z3, &script, opts.total_timeout)?;
    let raw = smt::parse_results(&out, t.queries.len())?;
    let results: Vec<_> = t
        .queries
        .iter()
        .zip(raw)
        .map(|(q, (status, reason))| {
            let o = match status.as_str() {
                "unsat" => Outcome::Proved,
                "sat" => Outcome::Failed,
                // Not reached before the wall-clock limit.
                "missing" | "" => Outcome::TimedOut,
                _ if reason.contains("timeout") || reason.contains("canceled") || reason.contains("resource") => Outcome::TimedOut,
                _ => Outcome::Unknown,
            };
            (q, o)
        })
        .collect();
    Ok(Report {
        results: results.into_iter().map(|(q, outcome)| AssertResult { procedure: q.procedure.clone(), pos: q.pos, outcome }).collect(),
        procedures,
    })
}

/// Runs z3 on `script`. When the wall-clock limit expires the solver is
/// killed and whatever it printed so far is returned.
fn run_solver(z3: &std::path::Path, script: &str, limit: Duration) -> Result<String, Error> {
    let mut child = Command::new(z3)
        .args(["-in", "-smt2"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|source| Error::Spawn { path: z3.display().to_string(), source })?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let script = script.to_string();
    let writer = std::thread::spawn(move || {
        let _ = stdin.write_all(script.as_bytes());
    });
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stdout.read_to_string(&mut s);
        s
    });
    let status = child.wait_timeout(limit).map_err(|e| Error::Solver(e.to_string()))?;
    if status.is_none() {
        let _ = child.kill();
        let _ = child.wait();
    }
    let _ = writer.join();
    Ok(reader.join().unwrap_or_default())
}
