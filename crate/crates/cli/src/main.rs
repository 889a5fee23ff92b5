use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use tct_core::asm::{assemble, disassemble, StorageKind};
use tct_core::concolic::replay;
use tct_core::fixtures;
use tct_core::sim::{self, check_supply, Applicability, Node, Outcome, Scenario, Sim};
use tct_core::spec::{parse_spec, SpecExpr};
use tct_core::theorem::{Repository, Theorem};
use tct_core::vc::{emit_text, verify, weave, RecordedVerdicts, Verdict, VerifierConfig};
use tct_core::vm::{execute_transaction, parse_trace_dump, write_trace_dump, Transaction, VmConfig, WorldState};
use tct_core::words::Address;

#[derive(Parser)]
#[command(name = "tct", version, about = "Theorem-carrying transactions on a small EVM")]
struct Cli {
    #[command(flatten)]
    verifier: VerifierArgs,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct VerifierArgs {
    /// Verifier command, run as `<cmd> <file.bpl>`. Defaults to the bplz3
    /// binary installed next to `tct`.
    #[arg(long, global = true, env = "TCT_VERIFIER")]
    verifier: Option<PathBuf>,
    /// JSON table of recorded verdicts, used instead of a verifier command.
    #[arg(long, global = true, env = "TCT_RECORDED_VERDICTS", conflicts_with = "verifier")]
    recorded: Option<PathBuf>,
    /// Seconds before a verifier run counts as out of prover gas.
    #[arg(long, global = true, default_value_t = 60)]
    verifier_timeout: u64,
    /// Write the verdict of every verification run to this JSON table.
    #[arg(long, global = true)]
    record_verdicts: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TxArgs {
    /// Sender: account name from the scenario, contract name or address.
    #[arg(long)]
    from: String,
    /// Target contract name or address.
    #[arg(long)]
    to: String,
    #[arg(long = "function", short = 'f')]
    function: String,
    /// Call argument, repeatable. Numbers may be sums such as `2^255+1`.
    #[arg(long = "arg", short = 'a', allow_hyphen_values = true)]
    args: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Assemble a `.asm` file to hex, or disassemble a hex file.
    Asm {
        input: PathBuf,
        #[arg(long)]
        disassemble: bool,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute a transaction without any theorem checks.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        tx: TxArgs,
    },
    /// Execute a transaction on a scratch copy and write its trace dump.
    Trace {
        scenario: PathBuf,
        #[command(flatten)]
        tx: TxArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Replay a trace dump and print the verification condition.
    Translate {
        scenario: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        hypothesis: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Verify a trace under a hypothesis; optionally store the theorem.
    Prove {
        scenario: PathBuf,
        trace: PathBuf,
        #[arg(long)]
        hypothesis: String,
        /// Repository to add the proven theorem to.
        #[arg(long)]
        repo: Option<PathBuf>,
        /// Write the proven theorem as an exchange file.
        #[arg(long)]
        theorem_out: Option<PathBuf>,
    },
    /// Inspect or modify a theorem repository.
    #[command(subcommand)]
    Repo(RepoCmd),
    /// Run protocol flows against a scenario.
    #[command(subcommand)]
    Sim(SimCmd),
    /// Replay the bundled attacks.
    #[command(subcommand)]
    Demo(DemoCmd),
}

#[derive(Subcommand)]
enum RepoCmd {
    /// Add a theorem exchange file.
    Add { repo: PathBuf, theorem: PathBuf },
    List { repo: PathBuf },
    /// List theorems applicable to a transaction.
    Find {
        repo: PathBuf,
        scenario: PathBuf,
        #[command(flatten)]
        tx: TxArgs,
        /// Match on hypotheses only, without test-running the transaction.
        #[arg(long)]
        hypothesis_only: bool,
    },
}

#[derive(Args)]
struct SimOpts {
    scenario: PathBuf,
    /// Theorem repository file; theorems proved during the run are stored in it.
    #[arg(long)]
    repo: Option<PathBuf>,
    #[arg(long)]
    hypothesis_only: bool,
}

#[derive(Subcommand)]
enum SimCmd {
    /// Find an applicable theorem and submit the transaction with it.
    #[command(name = "flowA")]
    FlowA {
        #[command(flatten)]
        opts: SimOpts,
        #[command(flatten)]
        tx: TxArgs,
        /// Theorem to submit when none applies: a hash, or `entry`.
        #[arg(long)]
        force: Option<String>,
    },
    /// Prove the transaction's path under a hypothesis and store the theorem.
    #[command(name = "flowB")]
    FlowB {
        #[command(flatten)]
        opts: SimOpts,
        #[command(flatten)]
        tx: TxArgs,
        #[arg(long)]
        hypothesis: String,
    },
    /// Prove, store and then execute the transaction.
    #[command(name = "flowC")]
    FlowC {
        #[command(flatten)]
        opts: SimOpts,
        #[command(flatten)]
        tx: TxArgs,
        #[arg(long)]
        hypothesis: String,
    },
    /// Run the steps listed in the scenario file.
    Script {
        #[command(flatten)]
        opts: SimOpts,
    },
}

#[derive(Subcommand)]
enum DemoCmd {
    /// Overflow through transferProxy.
    Attack1 {
        /// Run under flow A with the bundled theorem loaded.
        #[arg(long)]
        protected: bool,
    },
    /// Re-entrant clear.
    Attack2 {
        #[arg(long)]
        protected: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn verifier(a: &VerifierArgs) -> Result<VerifierConfig> {
    if let Some(p) = &a.recorded {
        let text = read(p)?;
        let table = RecordedVerdicts::from_json(&text).with_context(|| format!("parsing {}", p.display()))?;
        return Ok(VerifierConfig::Recorded(table));
    }
    let program = a.verifier.clone().unwrap_or_else(default_verifier);
    Ok(VerifierConfig::external(program, Duration::from_secs(a.verifier_timeout)))
}

fn default_verifier() -> PathBuf {
    let name = format!("bplz3{}", std::env::consts::EXE_SUFFIX);
    std::env::current_exe()
        .ok()
        .and_then(|exe| exe.parent().map(|d| d.join(&name)))
        .filter(|p| p.exists())
        .unwrap_or_else(|| PathBuf::from(name))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn scenario(path: &Path) -> Result<Scenario> {
    Ok(sim::load_scenario(path)?)
}

fn hypothesis(text: &str) -> Result<SpecExpr> {
    parse_spec(text).map_err(|e| anyhow!("hypothesis: {e}"))
}

fn tx_of(s: &Scenario, world: &WorldState, t: &TxArgs) -> Result<Transaction> {
    let spec = sim::TxSpec { from: t.from.clone(), to: t.to.clone(), function: t.function.clone(), args: t.args.clone() };
    Ok(s.transaction(world, &spec)?)
}

fn open_repo(path: Option<&Path>) -> Result<Repository> {
    Ok(match path {
        Some(p) => Repository::open(p)?,
        None => Repository::new(),
    })
}

/// Storage of every manifest variable that differs between two states.
fn state_changes(before: &WorldState, after: &WorldState) -> Vec<String> {
    let mut out = Vec::new();
    for m in after.manifests.iter() {
        for v in &m.storage {
            match v.kind {
                StorageKind::Scalar => {
                    let (a, b) = (before.get_var(m.address, &v.name, None), after.get_var(m.address, &v.name, None));
                    if let (Ok(a), Ok(b)) = (a, b) {
                        if a != b {
                            out.push(format!("{}.{}: {} -> {}", m.name, v.name, a.to_decimal(), b.to_decimal()));
                        }
                    }
                }
                StorageKind::Mapping => {
                    let mut keys: Vec<_> = after.mapping_entries(m.address, &v.name).into_iter().map(|(k, _)| k).collect();
                    keys.extend(before.mapping_entries(m.address, &v.name).into_iter().map(|(k, _)| k));
                    keys.sort();
                    keys.dedup();
                    for k in keys {
                        let a = before.get_var(m.address, &v.name, Some(k)).unwrap_or_default();
                        let b = after.get_var(m.address, &v.name, Some(k)).unwrap_or_default();
                        if a != b {
                            let key = if k.bits() <= 160 { Address::from_word(k).to_string() } else { k.to_hex() };
                            out.push(format!("{}.{}[{}]: {} -> {}", m.name, v.name, key, a.to_decimal(), b.to_decimal()));
                        }
                    }
                }
            }
        }
    }
    out
}

fn print_supply(world: &WorldState) {
    for m in world.manifests.iter() {
        if m.storage_var("totalSupply").is_some() && m.storage_var("balances").is_some() {
            match check_supply(world, m.address) {
                Ok(()) => println!("{}: sum(balances) == totalSupply holds", m.name),
                Err(v) => println!("{}: supply invariant violated: {v}", m.name),
            }
        }
    }
}

fn report(sim: &Sim, outcome: &Outcome) -> u8 {
    print!("{}", sim.log.render());
    match outcome {
        Outcome::Committed { theorem, path_hash } => println!("outcome: Committed (theorem {theorem}, path {path_hash})"),
        Outcome::Accepted { theorem } => println!("outcome: Accepted (theorem {theorem})"),
        Outcome::Rejected(r) => println!("outcome: {} ({r})", r.name()),
    }
    outcome.exit_code()
}

fn run(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Asm { input, disassemble: dis, output } => {
            let text = read(&input)?;
            let out = if dis {
                let t: String = text.split_whitespace().collect();
                let code = hex::decode(t.trim_start_matches("0x")).map_err(|e| anyhow!("{}: {e}", input.display()))?;
                disassemble(&code)
            } else {
                format!("0x{}\n", hex::encode(&assemble(&text)?))
            };
            write_or_print(output.as_deref(), &out)?;
            Ok(0)
        }
        Cmd::Run { scenario: path, tx } => {
            let s = scenario(&path)?;
            let before = s.world()?;
            let tx = tx_of(&s, &before, &tx)?;
            let mut after = before.clone();
            let r = execute_transaction(&mut after, &tx, &VmConfig::default());
            println!("transaction: {}", sim::describe_tx(&before, &tx));
            match &r.status {
                tct_core::vm::Status::Committed => println!("status: committed"),
                tct_core::vm::Status::Reverted(e) => println!("status: reverted ({e})"),
            }
            println!("gas used: {}", r.gas_used);
            println!("path hash: {}", r.path_hash);
            println!("output: 0x{}", hex::encode(&r.output));
            for line in state_changes(&before, &after) {
                println!("  {line}");
            }
            Ok(if r.status.is_committed() { 0 } else { 1 })
        }
        Cmd::Trace { scenario: path, tx, output } => {
            let s = scenario(&path)?;
            let mut world = s.world()?;
            let tx = tx_of(&s, &world, &tx)?;
            let r = execute_transaction(&mut world, &tx, &VmConfig::default());
            write_or_print(output.as_deref(), &write_trace_dump(&tx, &r.status, &r.trace))?;
            Ok(0)
        }
        Cmd::Translate { scenario: path, trace, hypothesis: h, output } => {
            let s = scenario(&path)?;
            let world = s.world()?;
            let dump = parse_trace_dump(&read(&trace)?)?;
            let sl = replay(&dump.events, &world.manifests, &dump.tx)?;
            let vc = weave(&sl, &world.manifests, &dump.tx, &hypothesis(&h)?)?;
            write_or_print(output.as_deref(), &emit_text(&vc))?;
            Ok(0)
        }
        Cmd::Prove { scenario: path, trace, hypothesis: h, repo, theorem_out } => {
            let cfg = verifier(&cli.verifier)?;
            let s = scenario(&path)?;
            let world = s.world()?;
            let dump = parse_trace_dump(&read(&trace)?)?;
            let hyp = hypothesis(&h)?;
            let sl = replay(&dump.events, &world.manifests, &dump.tx)?;
            let vc = weave(&sl, &world.manifests, &dump.tx, &hyp)?;
            let verdict = verify(&emit_text(&vc), &cfg);
            println!("verdict: {}", verdict_text(&verdict));
            let code = match &verdict {
                Verdict::Valid => 0,
                Verdict::Invalid { .. } | Verdict::OutOfProverGas => 4,
                Verdict::BridgeError { .. } => 5,
            };
            if verdict.is_valid() {
                let path_hash = tct_core::vm::PathBuffer::of_trace(&dump.events).hash();
                let t = Theorem::new(dump.tx.to, dump.tx.selector, &hyp, vec![path_hash]);
                if let Some(p) = theorem_out {
                    fs::write(&p, t.to_json()).with_context(|| format!("writing {}", p.display()))?;
                }
                if let Some(p) = repo {
                    let mut r = Repository::open(&p)?;
                    let h = r.add_theorem(t.address, t.selector, &hyp, path_hash);
                    r.persist()?;
                    println!("stored theorem {h}");
                } else {
                    println!("theorem {}", t.hash());
                }
            }
            Ok(code)
        }
        Cmd::Repo(RepoCmd::Add { repo, theorem }) => {
            let mut r = Repository::open(&repo)?;
            let t = Theorem::from_json(&read(&theorem)?)?;
            let h = r.add(&t)?;
            r.persist()?;
            println!("{h}");
            Ok(0)
        }
        Cmd::Repo(RepoCmd::List { repo }) => {
            let r = Repository::load(&repo)?;
            for (h, t) in r.iter() {
                println!("{h} {} {} paths={} `{}`", t.address, t.selector, t.path_hashes.len(), t.hypothesis);
            }
            for (old, new) in r.aliases() {
                println!("alias {old} -> {new}");
            }
            Ok(0)
        }
        Cmd::Repo(RepoCmd::Find { repo, scenario: path, tx, hypothesis_only }) => {
            let s = scenario(&path)?;
            let world = s.world()?;
            let tx = tx_of(&s, &world, &tx)?;
            let node = Node::new(world, Repository::load(&repo)?, VerifierConfig::Recorded(RecordedVerdicts::default()));
            let mode = if hypothesis_only { Applicability::HypothesisOnly } else { Applicability::TestRun };
            match sim::find_theorem(&node, &tx, mode) {
                Ok(h) => {
                    println!("{h}");
                    Ok(0)
                }
                Err(e) => {
                    println!("{e}");
                    Ok(e.exit_code())
                }
            }
        }
        Cmd::Sim(cmd) => run_sim(cmd, &cli.verifier),
        Cmd::Demo(d) => run_demo(d, &cli.verifier),
    }
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Valid => "valid".into(),
        Verdict::Invalid { failing_assert: Some(i) } => format!("invalid (assert {i})"),
        Verdict::Invalid { failing_assert: None } => "invalid".into(),
        Verdict::OutOfProverGas => "out of prover gas".into(),
        Verdict::BridgeError { message } => format!("bridge error: {message}"),
    }
}

fn build_sim(opts: &SimOpts, v: &VerifierArgs) -> Result<(Scenario, Sim)> {
    let s = scenario(&opts.scenario)?;
    let mut sim = s.build_with(open_repo(opts.repo.as_deref())?, verifier(v)?, v.record_verdicts.is_some())?;
    if opts.hypothesis_only {
        sim.mode = Applicability::HypothesisOnly;
    }
    Ok((s, sim))
}

fn save_recorded(sim: &Sim, v: &VerifierArgs) -> Result<()> {
    if let (Some(p), Some(r)) = (&v.record_verdicts, &sim.node.recorder) {
        // Merge into an existing table so several runs can build one file.
        let mut table = match fs::read_to_string(p) {
            Ok(text) => RecordedVerdicts::from_json(&text).with_context(|| format!("parsing {}", p.display()))?,
            Err(_) => RecordedVerdicts::default(),
        };
        table.verdicts.extend(r.verdicts.clone());
        fs::write(p, table.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run_sim(cmd: SimCmd, v: &VerifierArgs) -> Result<u8> {
    match cmd {
        SimCmd::FlowA { opts, tx, force } => {
            let (s, mut sim) = build_sim(&opts, v)?;
            let tx = tx_of(&s, &sim.node.world, &tx)?;
            let force = force.map(|f| s.forced(&sim, &tx, &f)).transpose()?;
            let out = sim.flow_a(&tx, force);
            save_recorded(&sim, v)?;
            Ok(report(&sim, &out))
        }
        SimCmd::FlowB { opts, tx, hypothesis: h } => {
            let (s, mut sim) = build_sim(&opts, v)?;
            let tx = tx_of(&s, &sim.node.world, &tx)?;
            let r = sim.node.test_run(&tx);
            let out = sim.flow_b(&tx, &r.trace, &hypothesis(&h)?, r.path_hash);
            save_recorded(&sim, v)?;
            Ok(report(&sim, &out))
        }
        SimCmd::FlowC { opts, tx, hypothesis: h } => {
            let (s, mut sim) = build_sim(&opts, v)?;
            let tx = tx_of(&s, &sim.node.world, &tx)?;
            let out = sim.flow_c(&tx, &hypothesis(&h)?);
            save_recorded(&sim, v)?;
            Ok(report(&sim, &out))
        }
        SimCmd::Script { opts } => {
            let (s, mut sim) = build_sim(&opts, v)?;
            let results = s.run(&mut sim)?;
            print!("{}", sim.log.render());
            let mut code = 0;
            for r in &results {
                let mark = if r.as_expected() { "" } else { "  UNEXPECTED" };
                println!("step {}: {}{}", r.index + 1, r.outcome.name(), mark);
                if !r.as_expected() {
                    code = 1;
                }
            }
            print_supply(&sim.node.world);
            save_recorded(&sim, v)?;
            Ok(code)
        }
    }
}

fn run_demo(d: DemoCmd, v: &VerifierArgs) -> Result<u8> {
    let (text, protected) = match d {
        DemoCmd::Attack1 { protected } => (fixtures::ATTACK1_SCENARIO, protected),
        DemoCmd::Attack2 { protected } => (fixtures::ATTACK2_SCENARIO, protected),
    };
    let s = Scenario::from_json(text, Path::new("."))?;
    let step = s.steps.first().ok_or_else(|| anyhow!("demo scenario has no steps"))?;
    if !protected {
        let before = s.world()?;
        let tx = s.transaction(&before, &step.tx)?;
        let mut after = before.clone();
        let r = execute_transaction(&mut after, &tx, &VmConfig::default());
        println!("transaction: {}", sim::describe_tx(&before, &tx));
        match &r.status {
            tct_core::vm::Status::Committed => println!("status: committed without checks"),
            tct_core::vm::Status::Reverted(e) => bail!("attack transaction reverted: {e}"),
        }
        for line in state_changes(&before, &after) {
            println!("  {line}");
        }
        print_supply(&after);
        return Ok(0);
    }
    let mut sim = s.build(Repository::new(), verifier(v)?)?;
    let before = sim.node.world.clone();
    let out = s.run_step(&mut sim, step)?;
    let code = report(&sim, &out);
    if sim.node.world == before {
        println!("world state unchanged");
    }
    Ok(code)
}
