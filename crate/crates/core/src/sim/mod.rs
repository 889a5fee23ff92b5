//! Deterministic in-process simulation of the transaction issuer, the
//! Web-API service and a node.
//!
//! * Flow A: the service finds a theorem covering the transaction, the
//!   issuer submits the transaction with that theorem's hash, and the node
//!   checks the theorem exists, the hypothesis holds and the executed path
//!   is one the theorem covers before committing.
//! * Flow B: a candidate theorem arrives with a code trace; the node checks
//!   the path hash, generates the proof obligation, verifies it and stores
//!   the theorem.
//! * Flow C: a transaction arrives with a hypothesis but no proven path; the
//!   node test-runs it, proves the path as in flow B, then executes it as in
//!   flow A.

mod log;
mod scenario;
mod supply;

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use thiserror::Error;

pub use log::{Entry, Flow, Party, ProtocolLog, Record};
pub use scenario::{load_scenario, parse_word_sum, Scenario, ScenarioError, Step, StepResult, TheoremInit, TheoremMode, TxSpec};
pub use supply::{check_supply, SupplyViolation};

use crate::asm::{AbiType, FunctionAbi};
use crate::concolic::replay;
use crate::spec::{compute_derived, eval_hypothesis, parse_spec, CompiledHypothesis, EvalContext, SpecExpr};
use crate::theorem::Repository;
use crate::vc::{emit_text, verify, weave, RecordedVerdicts, Verdict, VerifierConfig};
use crate::vm::{execute_transaction, PathBuffer, Receipt, Transaction, TraceEvent, TrapReason, VmConfig, WorldState};
use crate::words::{Address, Hash32};

/// Size of a theorem hash on the wire.
pub const HASH_BYTES: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Rejection {
    #[error("no applicable theorem")]
    NoApplicableTheorem,
    #[error("theorem {0} is not in the repository")]
    TheoremNotInRepo(Hash32),
    #[error("theorem {0} is for a different entry function")]
    TheoremEntryMismatch(Hash32),
    #[error("hypothesis failed: {0}")]
    HypothesisFailed(String),
    #[error("path hash {actual} is not covered by the theorem")]
    PathHashMismatch { actual: Hash32 },
    #[error("execution reverted: {0}")]
    ExecutionReverted(TrapReason),
    #[error("verdict invalid{}", .failing_assert.map(|i| format!(" (assert {i} fails)")).unwrap_or_default())]
    VerdictInvalid { failing_assert: Option<usize> },
    #[error("out of prover gas")]
    OutOfProverGas,
    #[error("cannot build proof obligation: {0}")]
    ProofObligation(String),
    #[error("verifier bridge error: {0}")]
    BridgeError(String),
    #[error("unknown entry: {0}")]
    UnknownEntry(String),
    #[error("repository: {0}")]
    Storage(String),
}

impl Rejection {
    pub fn name(&self) -> &'static str {
        match self {
            Rejection::NoApplicableTheorem => "NoApplicableTheorem",
            Rejection::TheoremNotInRepo(_) => "TheoremNotInRepo",
            Rejection::TheoremEntryMismatch(_) => "TheoremEntryMismatch",
            Rejection::HypothesisFailed(_) => "HypothesisFailed",
            Rejection::PathHashMismatch { .. } => "PathHashMismatch",
            Rejection::ExecutionReverted(_) => "ExecutionReverted",
            Rejection::VerdictInvalid { .. } => "VerdictInvalid",
            Rejection::OutOfProverGas => "OutOfProverGas",
            Rejection::ProofObligation(_) => "ProofObligation",
            Rejection::BridgeError(_) => "BridgeError",
            Rejection::UnknownEntry(_) => "UnknownEntry",
            Rejection::Storage(_) => "Storage",
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> u8 {
        match self {
            Rejection::NoApplicableTheorem
            | Rejection::TheoremNotInRepo(_)
            | Rejection::TheoremEntryMismatch(_)
            | Rejection::HypothesisFailed(_) => 2,
            Rejection::PathHashMismatch { .. } => 3,
            Rejection::VerdictInvalid { .. } | Rejection::OutOfProverGas | Rejection::ProofObligation(_) => 4,
            Rejection::BridgeError(_) => 5,
            Rejection::ExecutionReverted(_) | Rejection::UnknownEntry(_) | Rejection::Storage(_) => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Committed { theorem: Hash32, path_hash: Hash32 },
    /// Flow B stored the theorem.
    Accepted { theorem: Hash32 },
    Rejected(Rejection),
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Committed { .. } => "Committed",
            Outcome::Accepted { .. } => "Accepted",
            Outcome::Rejected(r) => r.name(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Rejected(r) => r.exit_code(),
            _ => 0,
        }
    }

    pub fn rejection(&self) -> Option<&Rejection> {
        match self {
            Outcome::Rejected(r) => Some(r),
            _ => None,
        }
    }
}

/// Per-submitter verification budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProverGas {
    /// Deducted for every verification attempt.
    pub charge: u64,
    pub allowance: u64,
}

impl Default for ProverGas {
    fn default() -> Self {
        ProverGas { charge: 1, allowance: 16 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NodeStats {
    pub verifier_calls: usize,
    pub commits: usize,
    pub rejections: usize,
    /// Time spent on hypothesis checks and path-hash comparisons.
    pub check_time: Duration,
    /// Time spent executing transactions.
    pub exec_time: Duration,
}

pub struct Node {
    pub world: WorldState,
    pub repo: Repository,
    pub verifier: VerifierConfig,
    pub vm: VmConfig,
    pub gas: ProverGas,
    spent: BTreeMap<Address, u64>,
    pub stats: NodeStats,
    /// When set, every verification's VC digest and verdict is added here.
    pub recorder: Option<RecordedVerdicts>,
    parsed: HashMap<String, SpecExpr>,
    compiled: HashMap<Hash32, CompiledHypothesis>,
}

fn entry_function<'w>(world: &'w WorldState, tx: &Transaction) -> Result<&'w FunctionAbi, Rejection> {
    let m = world.manifests.get(&tx.to).ok_or_else(|| Rejection::UnknownEntry(format!("no contract at {}", tx.to)))?;
    m.function_by_selector(tx.selector)
        .ok_or_else(|| Rejection::UnknownEntry(format!("{} has no function {}", m.name, tx.selector)))
}

/// Evaluates `hyp` for `tx` against `world`, derived names included.
fn hypothesis_holds(world: &WorldState, tx: &Transaction, hyp: &SpecExpr) -> Result<bool, Rejection> {
    let func = entry_function(world, tx)?;
    let mut ctx = EvalContext::for_call(world, tx.to, tx.origin, func, &tx.args);
    compute_derived(func, &mut ctx).map_err(|e| Rejection::HypothesisFailed(e.to_string()))?;
    eval_hypothesis(hyp, &ctx).map_err(|e| Rejection::HypothesisFailed(e.to_string()))
}

fn compiled_holds(world: &WorldState, tx: &Transaction, hyp: &CompiledHypothesis) -> Result<bool, Rejection> {
    let func = entry_function(world, tx)?;
    hyp.holds_for_call(world, tx.to, tx.origin, func, &tx.args).map_err(|e| Rejection::HypothesisFailed(e.to_string()))
}

impl Node {
    pub fn new(world: WorldState, repo: Repository, verifier: VerifierConfig) -> Node {
        Node {
            world,
            repo,
            verifier,
            vm: VmConfig::default(),
            gas: ProverGas::default(),
            spent: BTreeMap::new(),
            stats: NodeStats::default(),
            recorder: None,
            parsed: HashMap::new(),
            compiled: HashMap::new(),
        }
    }

    pub fn remaining_gas(&self, who: &Address) -> u64 {
        self.gas.allowance.saturating_sub(self.spent.get(who).copied().unwrap_or(0))
    }

    /// Runs `tx` on a copy of the world state.
    pub fn test_run(&self, tx: &Transaction) -> Receipt {
        let mut scratch = self.world.clone();
        execute_transaction(&mut scratch, tx, &self.vm)
    }

    fn parsed(&mut self, text: &str) -> Result<SpecExpr, Rejection> {
        if let Some(e) = self.parsed.get(text) {
            return Ok(e.clone());
        }
        let e = parse_spec(text).map_err(|e| Rejection::HypothesisFailed(format!("unparsable hypothesis: {e}")))?;
        self.parsed.insert(text.to_string(), e.clone());
        Ok(e)
    }

    /// The node's three checks around execution. On any failure the world
    /// state is left as it was.
    pub fn execute_with_theorem(&mut self, tx: &Transaction, theorem: Hash32) -> Result<(Hash32, Receipt), Rejection> {
        let res = self.execute_inner(tx, theorem);
        match &res {
            Ok(_) => self.stats.commits += 1,
            Err(_) => self.stats.rejections += 1,
        }
        res
    }

    fn execute_inner(&mut self, tx: &Transaction, theorem: Hash32) -> Result<(Hash32, Receipt), Rejection> {
        let current = self.repo.resolve(&theorem).ok_or(Rejection::TheoremNotInRepo(theorem))?;
        let t = self.repo.get(&current).expect("resolved");
        if t.address != tx.to || t.selector != tx.selector {
            return Err(Rejection::TheoremEntryMismatch(theorem));
        }
        if !self.compiled.contains_key(&current) {
            let text = t.hypothesis.clone();
            let hyp = self.parsed(&text)?;
            let func = entry_function(&self.world, tx)?;
            let manifest = self.world.manifests.get(&tx.to).expect("entry function found");
            let c = CompiledHypothesis::compile(&hyp, manifest, func).map_err(|e| Rejection::HypothesisFailed(e.to_string()))?;
            self.compiled.insert(current, c);
        }
        let start = Instant::now();
        let holds = compiled_holds(&self.world, tx, &self.compiled[&current]);
        self.stats.check_time += start.elapsed();
        let t = self.repo.get(&current).expect("resolved");
        if !holds? {
            return Err(Rejection::HypothesisFailed(format!("`{}` is false", t.hypothesis)));
        }
        let snapshot = self.world.clone();
        let start = Instant::now();
        let receipt = execute_transaction(&mut self.world, tx, &self.vm);
        self.stats.exec_time += start.elapsed();
        if let crate::vm::Status::Reverted(r) = &receipt.status {
            self.world = snapshot;
            return Err(Rejection::ExecutionReverted(r.clone()));
        }
        let start = Instant::now();
        let covered = t.contains_path(&receipt.path_hash);
        self.stats.check_time += start.elapsed();
        if !covered {
            self.world = snapshot;
            return Err(Rejection::PathHashMismatch { actual: receipt.path_hash });
        }
        Ok((current, receipt))
    }

    /// Flow B's node side: checks, proves and stores a single-path theorem.
    pub fn prove_and_store(
        &mut self,
        tx: &Transaction,
        trace: &[TraceEvent],
        hypothesis: &SpecExpr,
        claimed_path: Hash32,
        submitter: Address,
    ) -> Result<Hash32, Rejection> {
        let actual = PathBuffer::of_trace(trace).hash();
        if actual != claimed_path {
            return Err(Rejection::PathHashMismatch { actual });
        }
        entry_function(&self.world, tx)?;
        if self.remaining_gas(&submitter) < self.gas.charge {
            return Err(Rejection::OutOfProverGas);
        }
        let sl = replay(trace, &self.world.manifests, tx).map_err(|e| Rejection::ProofObligation(e.to_string()))?;
        let vc = weave(&sl, &self.world.manifests, tx, hypothesis).map_err(|e| Rejection::ProofObligation(e.to_string()))?;
        let text = emit_text(&vc);
        *self.spent.entry(submitter).or_insert(0) += self.gas.charge;
        self.stats.verifier_calls += 1;
        let verdict = verify(&text, &self.verifier);
        if let Some(r) = &mut self.recorder {
            r.record(&text, verdict.clone());
        }
        match verdict {
            Verdict::Valid => {
                let h = self.repo.add_theorem(tx.to, tx.selector, hypothesis, actual);
                if self.repo.backing_path().is_some() {
                    self.repo.persist().map_err(|e| Rejection::Storage(e.to_string()))?;
                }
                Ok(h)
            }
            Verdict::Invalid { failing_assert } => Err(Rejection::VerdictInvalid { failing_assert }),
            Verdict::OutOfProverGas => Err(Rejection::OutOfProverGas),
            Verdict::BridgeError { message } => Err(Rejection::BridgeError(message)),
        }
    }
}

/// How the service decides that a theorem applies to a transaction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Applicability {
    /// Test-run the transaction and require its path hash in the theorem.
    #[default]
    TestRun,
    /// Match on the hypothesis only; the path is checked by the node.
    HypothesisOnly,
}

/// Web-API service query: a theorem hash applicable to `tx`.
pub fn find_theorem(node: &Node, tx: &Transaction, mode: Applicability) -> Result<Hash32, Rejection> {
    let func = entry_function(&node.world, tx)?;
    let mut ctx = EvalContext::for_call(&node.world, tx.to, tx.origin, func, &tx.args);
    if compute_derived(func, &mut ctx).is_err() {
        return Err(Rejection::NoApplicableTheorem);
    }
    let found = node.repo.find_applicable(tx.to, tx.selector, &ctx);
    let path = match mode {
        Applicability::HypothesisOnly => None,
        Applicability::TestRun => {
            let r = node.test_run(tx);
            if !r.status.is_committed() {
                return Err(Rejection::NoApplicableTheorem);
            }
            Some(r.path_hash)
        }
    };
    found
        .hashes
        .into_iter()
        .find(|h| path.is_none_or(|p| node.repo.get(h).is_some_and(|t| t.contains_path(&p))))
        .ok_or(Rejection::NoApplicableTheorem)
}

/// Short description of a transaction for the log.
pub fn describe_tx(world: &WorldState, tx: &Transaction) -> String {
    let func = entry_function(world, tx).ok();
    let name = func.map(|f| f.name.clone()).unwrap_or_else(|| tx.selector.to_string());
    let args: Vec<String> = tx
        .args
        .iter()
        .enumerate()
        .map(|(i, a)| match func.and_then(|f| f.params.get(i)).map(|p| p.ty) {
            Some(AbiType::Address) if a.bits() <= 160 => Address::from_word(*a).to_string(),
            _ if a.bits() > 64 => a.to_hex(),
            _ => a.to_decimal(),
        })
        .collect();
    format!("{}({}) from {}", name, args.join(", "), tx.origin)
}

pub struct Sim {
    pub node: Node,
    pub mode: Applicability,
    pub log: ProtocolLog,
}

impl Sim {
    pub fn new(node: Node) -> Sim {
        Sim { node, mode: Applicability::default(), log: ProtocolLog::new() }
    }

    /// Flow A. When the service finds nothing and `force` is given, the
    /// issuer submits with that theorem anyway.
    pub fn flow_a(&mut self, tx: &Transaction, force: Option<Hash32>) -> Outcome {
        let run = self.log.begin();
        let f = Flow::A;
        self.log.message(run, f, Party::Issuer, Party::Service, format!("applicability query for {}", describe_tx(&self.node.world, tx)), 0);
        let found = find_theorem(&self.node, tx, self.mode);
        let theorem = match (found, force) {
            (Ok(h), _) => {
                self.log.message(run, f, Party::Service, Party::Issuer, format!("theorem {h}"), HASH_BYTES);
                h
            }
            (Err(e), Some(h)) => {
                self.log.message(run, f, Party::Service, Party::Issuer, format!("none: {e}"), 0);
                self.log.decision(run, f, Party::Issuer, format!("submits with theorem {h} regardless"));
                h
            }
            (Err(e), None) => {
                self.log.message(run, f, Party::Service, Party::Issuer, format!("none: {e}"), 0);
                self.log.decision(run, f, Party::Issuer, "gives up");
                return Outcome::Rejected(e);
            }
        };
        self.submit(run, f, tx, theorem)
    }

    fn submit(&mut self, run: usize, f: Flow, tx: &Transaction, theorem: Hash32) -> Outcome {
        self.log.message(run, f, Party::Issuer, Party::Node, format!("transaction {} with theorem {theorem}", describe_tx(&self.node.world, tx)), HASH_BYTES);
        match self.node.execute_with_theorem(tx, theorem) {
            Ok((current, receipt)) => {
                self.log.decision(run, f, Party::Node, format!("committed, path {}", receipt.path_hash));
                Outcome::Committed { theorem: current, path_hash: receipt.path_hash }
            }
            Err(e) => {
                self.log.decision(run, f, Party::Node, format!("rejected: {e}; state unchanged"));
                Outcome::Rejected(e)
            }
        }
    }

    /// Flow B for a trace produced by the issuer.
    pub fn flow_b(&mut self, tx: &Transaction, trace: &[TraceEvent], hypothesis: &SpecExpr, claimed_path: Hash32) -> Outcome {
        let run = self.log.begin();
        self.flow_b_in(run, Flow::B, tx, trace, hypothesis, claimed_path)
    }

    fn flow_b_in(&mut self, run: usize, f: Flow, tx: &Transaction, trace: &[TraceEvent], hyp: &SpecExpr, claimed: Hash32) -> Outcome {
        let text = hyp.canonical();
        self.log.message(
            run,
            f,
            Party::Issuer,
            Party::Node,
            format!("candidate theorem for {} hypothesis `{text}` path {claimed} ({} trace events)", describe_tx(&self.node.world, tx), trace.len()),
            20 + 4 + text.len() + HASH_BYTES,
        );
        match self.node.prove_and_store(tx, trace, hyp, claimed, tx.origin) {
            Ok(h) => {
                self.log.decision(run, f, Party::Node, format!("proof valid; stored theorem {h}"));
                Outcome::Accepted { theorem: h }
            }
            Err(e) => {
                self.log.decision(run, f, Party::Node, format!("rejected: {e}"));
                Outcome::Rejected(e)
            }
        }
    }

    /// Flow C: prove the transaction's own path under `hypothesis`, then run it.
    pub fn flow_c(&mut self, tx: &Transaction, hypothesis: &SpecExpr) -> Outcome {
        let run = self.log.begin();
        let f = Flow::C;
        self.log.message(run, f, Party::Issuer, Party::Node, format!("transaction {} with hypothesis `{}`", describe_tx(&self.node.world, tx), hypothesis.canonical()), 0);
        match hypothesis_holds(&self.node.world, tx, hypothesis) {
            Ok(true) => {}
            Ok(false) => {
                let e = Rejection::HypothesisFailed(format!("`{}` is false", hypothesis.canonical()));
                self.log.decision(run, f, Party::Node, format!("rejected: {e}"));
                return Outcome::Rejected(e);
            }
            Err(e) => {
                self.log.decision(run, f, Party::Node, format!("rejected: {e}"));
                return Outcome::Rejected(e);
            }
        }
        let receipt = self.node.test_run(tx);
        if let crate::vm::Status::Reverted(r) = &receipt.status {
            let e = Rejection::ExecutionReverted(r.clone());
            self.log.decision(run, f, Party::Node, format!("test run reverted: {e}"));
            return Outcome::Rejected(e);
        }
        self.log.decision(run, f, Party::Node, format!("test run path {}", receipt.path_hash));
        let theorem = match self.flow_b_in(run, f, tx, &receipt.trace, hypothesis, receipt.path_hash) {
            Outcome::Accepted { theorem } => theorem,
            other => return other,
        };
        self.submit(run, f, tx, theorem)
    }

    /// Issuer policy: flow A first, flow C with `hypothesis` when no theorem applies.
    pub fn issue(&mut self, tx: &Transaction, hypothesis: Option<&SpecExpr>) -> Outcome {
        match (self.flow_a(tx, None), hypothesis) {
            (Outcome::Rejected(Rejection::NoApplicableTheorem), Some(h)) => self.flow_c(tx, h),
            (o, _) => o,
        }
    }

    /// Stores a theorem for `tx`'s path without proof (trusted setup).
    pub fn admit(&mut self, tx: &Transaction, hypothesis: &SpecExpr) -> Result<Hash32, Rejection> {
        let run = self.log.begin();
        let r = self.node.test_run(tx);
        if let crate::vm::Status::Reverted(e) = &r.status {
            return Err(Rejection::ExecutionReverted(e.clone()));
        }
        let h = self.node.repo.add_theorem(tx.to, tx.selector, hypothesis, r.path_hash);
        self.log.decision(run, Flow::Setup, Party::Node, format!("admitted theorem {h} for {} path {}", describe_tx(&self.node.world, tx), r.path_hash));
        Ok(h)
    }
}
