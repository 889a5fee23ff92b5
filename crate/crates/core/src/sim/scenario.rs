//! JSON scenario files: contracts to deploy, initial storage, preloaded
//! theorems and a list of protocol steps.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::{Applicability, Node, Outcome, ProverGas, Sim};
use crate::asm::{load_contract, AbiType, ManifestError};
use crate::fixtures;
use crate::spec::{parse_spec, SpecExpr};
use crate::theorem::Repository;
use crate::vc::VerifierConfig;
use crate::vm::{Transaction, WorldState};
use crate::words::{Address, Hash32, Word256};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageInit {
    /// Contract name or address.
    pub contract: String,
    pub var: String,
    #[serde(default)]
    pub key: Option<String>,
    pub value: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxSpec {
    /// Account name, contract name or address.
    pub from: String,
    pub to: String,
    pub function: String,
    #[serde(default)]
    pub args: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum TheoremMode {
    /// Stored without a proof.
    Admit,
    /// Proved through flow B.
    #[default]
    Prove,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremInit {
    pub hypothesis: String,
    /// Transaction whose path the theorem covers.
    pub witness: TxSpec,
    #[serde(default)]
    pub mode: TheoremMode,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    /// `A`, `B`, `C` or `issue` (A with fallback to C).
    pub flow: String,
    pub tx: TxSpec,
    #[serde(default)]
    pub hypothesis: Option<String>,
    /// Theorem to submit when the service finds none: a hash, or `entry`
    /// for the first theorem stored for the transaction's entry function.
    #[serde(default)]
    pub force: Option<String>,
    /// Expected outcome name, checked by [`Scenario::run`].
    #[serde(default)]
    pub expect: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Manifest paths relative to the scenario file, or `bundled:<name>`
    /// for a contract compiled into the library.
    pub contracts: Vec<String>,
    /// Named accounts usable in `from`, `to`, keys and arguments.
    #[serde(default)]
    pub accounts: std::collections::BTreeMap<String, Address>,
    #[serde(default)]
    pub storage: Vec<StorageInit>,
    #[serde(default)]
    pub prover_gas: Option<ProverGasSpec>,
    #[serde(default)]
    pub hypothesis_only: bool,
    #[serde(default)]
    pub theorems: Vec<TheoremInit>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(skip)]
    base: PathBuf,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProverGasSpec {
    pub charge: u64,
    pub allowance: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub index: usize,
    pub outcome: Outcome,
    pub expected: Option<String>,
}

impl StepResult {
    pub fn as_expected(&self) -> bool {
        self.expected.as_deref().is_none_or(|e| e == self.outcome.name())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
    let mut s: Scenario = serde_json::from_str(&text)?;
    s.base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok(s)
}

/// Parses a word written as a sum of terms, e.g. `2^255+1`.
pub fn parse_word_sum(text: &str) -> Result<Word256, String> {
    let mut acc = Word256::ZERO;
    for term in text.split('+') {
        let w: Word256 = term.trim().parse().map_err(|e| format!("`{text}`: {e}"))?;
        let (sum, overflow) = acc.overflowing_add(w);
        if overflow {
            return Err(format!("`{text}` does not fit in 256 bits"));
        }
        acc = sum;
    }
    Ok(acc)
}

impl Scenario {
    pub fn from_json(text: &str, base: &Path) -> Result<Scenario, ScenarioError> {
        let mut s: Scenario = serde_json::from_str(text)?;
        s.base = base.to_path_buf();
        Ok(s)
    }

    /// Resolves an account name, contract name or literal address.
    pub fn address(&self, world: &WorldState, name: &str) -> Result<Address, ScenarioError> {
        if let Some(a) = self.accounts.get(name) {
            return Ok(*a);
        }
        if let Some(m) = world.manifests.by_name(name) {
            return Ok(m.address);
        }
        name.parse().map_err(|_| invalid(format!("unknown account `{name}`")))
    }

    fn word(&self, world: &WorldState, text: &str) -> Result<Word256, ScenarioError> {
        match parse_word_sum(text) {
            Ok(w) => Ok(w),
            Err(e) => self.address(world, text).map(|a| a.to_word()).map_err(|_| invalid(e)),
        }
    }

    pub fn transaction(&self, world: &WorldState, spec: &TxSpec) -> Result<Transaction, ScenarioError> {
        let origin = self.address(world, &spec.from)?;
        let to = self.address(world, &spec.to)?;
        let m = world.manifests.get(&to).ok_or_else(|| invalid(format!("no contract at `{}`", spec.to)))?;
        let f = m.function_by_name(&spec.function).ok_or_else(|| invalid(format!("{} has no function `{}`", m.name, spec.function)))?;
        if f.params.len() != spec.args.len() {
            return Err(invalid(format!("{} takes {} arguments, got {}", f.name, f.params.len(), spec.args.len())));
        }
        let mut args = Vec::new();
        for (p, a) in f.params.iter().zip(&spec.args) {
            let w = match p.ty {
                AbiType::Address => self.address(world, a)?.to_word(),
                AbiType::Uint256 => self.word(world, a)?,
            };
            args.push(w);
        }
        Ok(Transaction { origin, to, selector: f.selector(), args, theorem_hash: None })
    }

    /// Deploys the contracts and writes the initial storage.
    pub fn world(&self) -> Result<WorldState, ScenarioError> {
        let mut world = WorldState::new();
        for c in &self.contracts {
            let loaded = match c.strip_prefix("bundled:") {
                Some(name) => fixtures::by_file_name(name).ok_or_else(|| invalid(format!("no bundled contract `{name}`")))??,
                None => load_contract(&self.base.join(c))?,
            };
            world.deploy(loaded.manifest, loaded.code);
        }
        for s in &self.storage {
            let addr = self.address(&world, &s.contract)?;
            let value = self.word(&world, &s.value)?;
            match &s.key {
                None => world.set_scalar(addr, &s.var, value)?,
                Some(k) => {
                    let key = self.word(&world, k)?;
                    world.set_mapping(addr, &s.var, key, value)?
                }
            }
        }
        Ok(world)
    }

    fn hypothesis(text: &str) -> Result<SpecExpr, ScenarioError> {
        parse_spec(text).map_err(|e| invalid(format!("hypothesis `{text}`: {e}")))
    }

    /// Builds the simulation and loads the preloaded theorems. A theorem
    /// that fails to prove is an error.
    pub fn build(&self, repo: Repository, verifier: VerifierConfig) -> Result<Sim, ScenarioError> {
        self.build_with(repo, verifier, false)
    }

    /// Like [`Scenario::build`]; with `record` set, the node records every
    /// verdict from the start, preloaded theorems included.
    pub fn build_with(&self, repo: Repository, verifier: VerifierConfig, record: bool) -> Result<Sim, ScenarioError> {
        let world = self.world()?;
        let mut node = Node::new(world, repo, verifier);
        if record {
            node.recorder = Some(Default::default());
        }
        if let Some(g) = self.prover_gas {
            node.gas = ProverGas { charge: g.charge, allowance: g.allowance };
        }
        let mut sim = Sim::new(node);
        if self.hypothesis_only {
            sim.mode = Applicability::HypothesisOnly;
        }
        for t in &self.theorems {
            let tx = self.transaction(&sim.node.world, &t.witness)?;
            let hyp = Self::hypothesis(&t.hypothesis)?;
            match t.mode {
                TheoremMode::Admit => {
                    sim.admit(&tx, &hyp).map_err(|e| invalid(format!("admitting theorem: {e}")))?;
                }
                TheoremMode::Prove => {
                    let r = sim.node.test_run(&tx);
                    let out = sim.flow_b(&tx, &r.trace, &hyp, r.path_hash);
                    if let Outcome::Rejected(e) = out {
                        return Err(invalid(format!("preloaded theorem `{}` rejected: {e}", t.hypothesis)));
                    }
                }
            }
        }
        Ok(sim)
    }

    /// Resolves a `force` value: a theorem hash, or `entry`.
    pub fn forced(&self, sim: &Sim, tx: &Transaction, force: &str) -> Result<Hash32, ScenarioError> {
        if force == "entry" {
            return sim
                .node
                .repo
                .for_entry(tx.to, tx.selector)
                .first()
                .map(|(h, _)| **h)
                .ok_or_else(|| invalid("no theorem stored for the entry function"));
        }
        force.parse().map_err(|_| invalid(format!("bad theorem hash `{force}`")))
    }

    /// Executes one step.
    pub fn run_step(&self, sim: &mut Sim, step: &Step) -> Result<Outcome, ScenarioError> {
        let tx = self.transaction(&sim.node.world, &step.tx)?;
        let hyp = step.hypothesis.as_deref().map(Self::hypothesis).transpose()?;
        let out = match step.flow.as_str() {
            "A" => {
                let force = step.force.as_deref().map(|f| self.forced(sim, &tx, f)).transpose()?;
                sim.flow_a(&tx, force)
            }
            "B" => {
                let hyp = hyp.ok_or_else(|| invalid("flow B needs a hypothesis"))?;
                let r = sim.node.test_run(&tx);
                sim.flow_b(&tx, &r.trace, &hyp, r.path_hash)
            }
            "C" => {
                let hyp = hyp.ok_or_else(|| invalid("flow C needs a hypothesis"))?;
                sim.flow_c(&tx, &hyp)
            }
            "issue" => sim.issue(&tx, hyp.as_ref()),
            other => return Err(invalid(format!("unknown flow `{other}`"))),
        };
        Ok(out)
    }

    /// Executes every step in order.
    pub fn run(&self, sim: &mut Sim) -> Result<Vec<StepResult>, ScenarioError> {
        let mut out = Vec::new();
        for (index, step) in self.steps.iter().enumerate() {
            let outcome = self.run_step(sim, step)?;
            out.push(StepResult { index, outcome, expected: step.expect.clone() });
        }
        Ok(out)
    }
}
