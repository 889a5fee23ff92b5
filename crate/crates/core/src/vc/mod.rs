//! Verification-condition generation and the verifier bridge.
//!
//! [`weave`] combines a replayed [`StraightLine`] with the hypothesis, the
//! invariants of the contracts the trace touched and the entry function's
//! postconditions. [`emit_text`] renders the result in the Boogie dialect
//! understood by `bplz3` and by Boogie itself.

mod bridge;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::asm::{AbiType, ManifestRegistry, StorageKind};
use crate::concolic::{Expr, StraightLine, Stmt, Target};
use crate::spec::{lower_to_vc, DefVar, LowerEnv, LowerError, Role, SpecExpr};
use crate::vm::Transaction;
use crate::words::Address;

pub use bridge::{verify, verify_with_stats, RecordedVerdicts, Verdict, VerifierConfig};

/// Axiom and constant preamble shared by every VC.
pub const AXIOMS: &str = include_str!("axioms.bpl");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VcError {
    #[error("location refers to `{0}`, which has no manifest")]
    UnqualifiedVariable(String),
    #[error("no manifest for the entry contract {0}")]
    NoManifest(Address),
    #[error("{context}: {source}")]
    Lower { context: String, source: LowerError },
}

/// An assume or assert section with its header comment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub comment: String,
    pub lines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VcProgram {
    /// `(name, type)` of storage globals, e.g. `MultiVulnToken.balances`.
    pub storage_globals: Vec<(String, String)>,
    pub params: Vec<(String, AbiType)>,
    pub temps: Vec<&'static str>,
    pub def_vars: Vec<DefVar>,
    /// Extra assumes binding derived names, emitted with the def-vars.
    pub derived: Vec<String>,
    pub wellformed: Vec<String>,
    pub hypothesis: Vec<String>,
    pub inv_pre: Vec<Section>,
    pub body: Vec<Stmt>,
    pub inv_post: Vec<Section>,
    pub post: Vec<String>,
    /// Touched contracts whose invariants could not be stated at entry.
    pub skipped: Vec<String>,
}

fn lower_err(context: impl Into<String>) -> impl FnOnce(LowerError) -> VcError {
    let context = context.into();
    move |source| VcError::Lower { context, source }
}

fn abi_type(t: AbiType) -> &'static str {
    t.name()
}

/// Builds the proof obligation for `sl` under `hypothesis`.
pub fn weave<'m>(
    sl: &StraightLine,
    manifests: &'m ManifestRegistry,
    tx: &Transaction,
    hypothesis: &SpecExpr,
) -> Result<VcProgram, VcError> {
    let entry = manifests.get(&sl.entry).ok_or(VcError::NoManifest(sl.entry))?;
    let func = entry.function_by_selector(sl.selector);

    for s in &sl.stmts {
        let locs: Vec<&crate::concolic::Location> = match s {
            Stmt::Assign { target: Target::Storage(l), expr: Expr::Read(r), .. } => vec![l, r],
            Stmt::Assign { target: Target::Storage(l), .. } => vec![l],
            Stmt::Assign { expr: Expr::Read(r), .. } => vec![r],
            _ => vec![],
        };
        for l in locs {
            let known = manifests.by_name(&l.class).is_some_and(|m| m.storage_var(&l.var).is_some());
            if !known {
                return Err(VcError::UnqualifiedVariable(l.global()));
            }
        }
    }

    let params: BTreeMap<String, AbiType> = sl.params.iter().cloned().collect();
    let mut derived_types = BTreeMap::new();
    if let Some(f) = func {
        for d in &f.declarations {
            derived_types.insert(d.name.clone(), d.ty);
        }
    }
    let mut concrete = BTreeMap::new();
    concrete.insert("entry_contract".to_string(), tx.to);
    concrete.insert("tx_origin".to_string(), tx.origin);
    for (i, (name, ty)) in sl.params.iter().enumerate() {
        if *ty == AbiType::Address {
            if let Some(w) = tx.args.get(i) {
                if w.bits() <= 160 {
                    concrete.insert(name.clone(), Address::from_word(*w));
                }
            }
        }
    }
    let env_for = |class: &'m crate::asm::ContractManifest, reference: String| -> LowerEnv<'m> { LowerEnv {
        manifests,
        entry: class,
        entry_ref: reference,
        sender_ref: "tx_origin".into(),
        origin_ref: "tx_origin".into(),
        params: params.clone(),
        derived: derived_types.clone(),
        concrete: concrete.clone(),
    } };
    let entry_env = env_for(entry, "entry_contract".into());

    let mut def_vars: Vec<DefVar> = Vec::new();
    let merge = |ds: Vec<DefVar>, def_vars: &mut Vec<DefVar>| {
        for d in ds {
            if !def_vars.iter().any(|x| x.name == d.name) {
                def_vars.push(d);
            }
        }
    };

    let mut derived = Vec::new();
    if let Some(f) = func {
        for (name, expr) in f.parsed_assignments() {
            let eq = SpecExpr::bin(crate::spec::BinOp::Eq, SpecExpr::name(&name), expr);
            let l = lower_to_vc(&eq, Role::Hypothesis, &entry_env).map_err(lower_err(format!("assignment to {name}")))?;
            merge(l.def_vars, &mut def_vars);
            derived.extend(l.fragments);
        }
    }

    let hyp = lower_to_vc(hypothesis, Role::Hypothesis, &entry_env).map_err(lower_err("hypothesis"))?;
    merge(hyp.def_vars, &mut def_vars);

    let mut inv_pre = Vec::new();
    let mut inv_post = Vec::new();
    let mut skipped = Vec::new();
    for t in &sl.touched {
        let Some(class) = manifests.by_name(&t.class) else { continue };
        let invs = class.parsed_invariants();
        if invs.is_empty() {
            continue;
        }
        let reference = match &t.reference {
            Expr::Env(_) | Expr::Param(_) | Expr::Word(_) => t.reference.to_string(),
            other => {
                skipped.push(format!("{} at {other}", t.class));
                continue;
            }
        };
        let env = env_for(class, reference.clone());
        let (pre_c, post_c) = if reference == "entry_contract" {
            ("// insert invariant of entry contract".to_string(), "// (post) insert invariant of entry contract".to_string())
        } else {
            (format!("// insert invariant of {} at {reference}", t.class), format!("// (post) insert invariant of {} at {reference}", t.class))
        };
        let mut pre = Section { comment: pre_c, lines: Vec::new() };
        let mut post = Section { comment: post_c, lines: Vec::new() };
        for inv in &invs {
            let ctx = format!("invariant of {}", t.class);
            let a = lower_to_vc(inv, Role::InvariantPre, &env).map_err(lower_err(ctx.clone()))?;
            let b = lower_to_vc(inv, Role::InvariantPost, &env).map_err(lower_err(ctx))?;
            merge(a.def_vars, &mut def_vars);
            merge(b.def_vars, &mut def_vars);
            pre.lines.extend(a.fragments);
            post.lines.extend(b.fragments);
        }
        inv_pre.push(pre);
        inv_post.push(post);
    }

    let mut post = Vec::new();
    if let Some(f) = func {
        for p in f.parsed_postconditions() {
            let l = lower_to_vc(&p, Role::Postcondition, &entry_env).map_err(lower_err(format!("postcondition of {}", f.name)))?;
            merge(l.def_vars, &mut def_vars);
            post.extend(l.fragments);
        }
    }

    // Globals referenced anywhere in the program text.
    let mut text = String::new();
    for s in &sl.stmts {
        let _ = writeln!(text, "{s}");
    }
    for l in derived.iter().chain(&hyp.fragments).chain(&post) {
        text.push_str(l);
    }
    for s in inv_pre.iter().chain(&inv_post) {
        for l in &s.lines {
            text.push_str(l);
        }
    }
    for d in &def_vars {
        text.push_str(&d.init);
    }
    let mut classes: Vec<&crate::asm::ContractManifest> = manifests.iter().collect();
    classes.sort_by(|a, b| a.name.cmp(&b.name));
    let mut storage_globals = Vec::new();
    for m in classes {
        for v in &m.storage {
            let g = format!("{}.{}", m.name, v.name);
            if text.contains(&format!("{g}[")) && !storage_globals.iter().any(|(n, _)| *n == g) {
                let ty = match v.kind {
                    StorageKind::Scalar => format!("[address] {}", v.value_type.name()),
                    StorageKind::Mapping => format!("[address] [address] {}", v.value_type.name()),
                };
                storage_globals.push((g, ty));
            }
        }
    }

    let mut wellformed = Vec::new();
    let bound = |t: AbiType| if t == AbiType::Address { "TwoE160" } else { "TwoE256" };
    for (p, t) in &sl.params {
        wellformed.push(format!("Zero <= {p} && {p} < {}", bound(*t)));
    }
    for e in ["tx_origin", "entry_contract"] {
        wellformed.push(format!("Zero <= {e} && {e} < TwoE160"));
    }
    for (g, ty) in &storage_globals {
        let b = if ty.ends_with("address") { "TwoE160" } else { "TwoE256" };
        if ty.starts_with("[address] [address]") {
            wellformed.push(format!("(forall c:address, k:address :: Zero <= {g}[c][k] && {g}[c][k] < {b})"));
        } else {
            wellformed.push(format!("(forall c:address :: Zero <= {g}[c] && {g}[c] < {b})"));
        }
    }

    Ok(VcProgram {
        storage_globals,
        params: sl.params.clone(),
        temps: sl.temps.iter().map(|t| t.name()).collect(),
        def_vars,
        derived,
        wellformed,
        hypothesis: hyp.fragments,
        inv_pre,
        body: sl.stmts.clone(),
        inv_post,
        post,
        skipped,
    })
}

/// Renders the program. Identical inputs give identical bytes.
pub fn emit_text(vc: &VcProgram) -> String {
    let mut s = String::with_capacity(8192);
    s.push_str(AXIOMS);
    s.push('\n');
    let mut globals: Vec<String> = Vec::new();
    for (g, ty) in &vc.storage_globals {
        let _ = writeln!(s, "var {g}:  {ty};");
        globals.push(g.clone());
    }
    for (p, t) in &vc.params {
        let _ = writeln!(s, "var {p}:  {};", abi_type(*t));
        globals.push(p.clone());
    }
    s.push_str("\nprocedure straightline_code ()\n");
    if !globals.is_empty() {
        let _ = writeln!(s, "modifies {};", globals.join(", "));
    }
    s.push_str("{\n");
    s.push_str("\tvar tx_origin: address;\n\tvar entry_contract: address;\n\n");
    for (i, t) in vc.temps.iter().enumerate() {
        let _ = writeln!(s, "\tvar tmp{}:  {t};", i + 1);
    }
    s.push_str("\n\n\t// def-vars\n");
    for d in &vc.def_vars {
        let _ = writeln!(s, "\tvar {}:  {};", d.name, d.ty);
    }
    for d in &vc.def_vars {
        let _ = writeln!(s, "\t{}:= {};", d.name, d.init);
    }
    for l in &vc.derived {
        let _ = writeln!(s, "\tassume({l});");
    }
    s.push_str("\n\t// well-formedness\n");
    for l in &vc.wellformed {
        let _ = writeln!(s, "\tassume({l});");
    }
    s.push_str("\n\t// hypothesis \n");
    for l in &vc.hypothesis {
        let _ = writeln!(s, "\tassume({l});");
    }
    for sec in &vc.inv_pre {
        let _ = writeln!(s, "\n\t{}", sec.comment);
        for l in &sec.lines {
            let _ = writeln!(s, "\tassume({l});");
        }
    }
    s.push('\n');
    for (i, st) in vc.body.iter().enumerate() {
        let _ = writeln!(s, "\t{st}");
        let ends_block = matches!(st, Stmt::Assume(_)) || st.is_storage_assign();
        if ends_block && i + 1 < vc.body.len() {
            s.push('\n');
        }
    }
    s.push_str("\n\n");
    for (i, sec) in vc.inv_post.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        let _ = writeln!(s, "\t{}", sec.comment);
        for l in &sec.lines {
            let _ = writeln!(s, "\tassert({l});");
        }
    }
    if !vc.post.is_empty() {
        s.push_str("\n\t// postcondition\n");
        for l in &vc.post {
            let _ = writeln!(s, "\tassert({l});");
        }
    }
    s.push_str("}\n");
    s
}

/// Kind of one procedure-body line, used for structural comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Assume,
    Assert,
    /// Assignment to a temp.
    TempAssign,
    /// Assignment to a storage location.
    StorageAssign,
    Havoc,
}

/// Statement kinds from the hypothesis section through the end of the body.
pub fn statement_kinds(vc_text: &str) -> Vec<LineKind> {
    let mut out = Vec::new();
    let mut on = false;
    for l in vc_text.lines() {
        let t = l.trim();
        if t.starts_with("// hypothesis") {
            on = true;
            continue;
        }
        if !on || t.is_empty() || t.starts_with("//") || t == "}" {
            continue;
        }
        let kind = if t.starts_with("assume") {
            LineKind::Assume
        } else if t.starts_with("assert") {
            LineKind::Assert
        } else if t.starts_with("havoc") {
            LineKind::Havoc
        } else if t.starts_with("tmp") {
            LineKind::TempAssign
        } else {
            LineKind::StorageAssign
        };
        out.push(kind);
    }
    out
}

/// Lines from the first hypothesis statement through the last assert or
/// statement of the procedure, blank and comment lines included.
pub fn post_declaration_lines(vc_text: &str) -> usize {
    let lines: Vec<&str> = vc_text.lines().collect();
    let Some(h) = lines.iter().position(|l| l.trim().starts_with("// hypothesis")) else { return 0 };
    let first = h + 1;
    let Some(last) = lines.iter().rposition(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with("//") && t != "}"
    }) else {
        return 0;
    };
    if last < first {
        return 0;
    }
    last - first + 1
}
