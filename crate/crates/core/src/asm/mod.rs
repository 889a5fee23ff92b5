//! Two-pass assembler for the supported opcode subset, plus contract manifests.
//!
//! Source format, one instruction per line:
//!
//! ```text
//! ; comment
//! start:                     ; label definition
//!     PUSH1 0x02             ; hex immediate, at most n bytes
//!     PUSH2 @ok              ; label reference (must name a JUMPDEST)
//!     PUSH4 sel(balanceOf(address))
//!     JUMPI
//! ok: JUMPDEST
//! ```
//!
//! Decimal immediates are also accepted. Mnemonics are case-insensitive.

mod manifest;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_bigint::BigUint;
use thiserror::Error;

use crate::opcode::Opcode;
use crate::words::selector_of;

pub use manifest::{
    load_contract, load_manifest, mapping_key, AbiType, Assignment, ContractManifest, Declaration, FunctionAbi, LoadedContract, ManifestError,
    ManifestRegistry, Param, StorageKind, StorageVar,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AsmError {
    #[error("line {line}: unknown mnemonic `{mnemonic}`")]
    UnknownMnemonic { line: usize, mnemonic: String },
    #[error("line {line}: unresolved label `{label}`")]
    UnresolvedLabel { line: usize, label: String },
    #[error("line {line}: immediate for {mnemonic} must be {expected} bytes, got {found}")]
    ImmediateSizeMismatch { line: usize, mnemonic: String, expected: usize, found: usize },
    #[error("line {line}: duplicate label `{label}`")]
    DuplicateLabel { line: usize, label: String },
    #[error("line {line}: {mnemonic} needs an immediate")]
    MissingImmediate { line: usize, mnemonic: String },
    #[error("line {line}: {mnemonic} takes no immediate")]
    UnexpectedImmediate { line: usize, mnemonic: String },
    #[error("line {line}: malformed immediate `{text}`")]
    BadImmediate { line: usize, text: String },
    #[error("line {line}: label `{label}` does not mark a JUMPDEST")]
    LabelNotJumpDest { line: usize, label: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Immediate {
    /// Big-endian bytes, already left-padded to the PUSH width.
    Bytes(Vec<u8>),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmLine {
    pub line_no: usize,
    pub labels: Vec<String>,
    pub op: Option<Opcode>,
    pub immediate: Option<Immediate>,
}

/// Parsed program with resolved label offsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsmProgram {
    pub lines: Vec<AsmLine>,
    pub labels: BTreeMap<String, usize>,
}

fn is_label_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn parse_immediate(line: usize, op: Opcode, text: &str) -> Result<Immediate, AsmError> {
    let width = op.immediate_len();
    let mnemonic = op.to_string();
    if let Some(label) = text.strip_prefix('@') {
        if !is_label_name(label) {
            return Err(AsmError::BadImmediate { line, text: text.to_string() });
        }
        return Ok(Immediate::Label(label.to_string()));
    }
    let sel_arg = text
        .strip_prefix("sel(")
        .or_else(|| text.strip_prefix("selector("))
        .and_then(|rest| rest.strip_suffix(')'));
    let bytes: Vec<u8> = if let Some(sig) = sel_arg {
        selector_of(sig.trim()).to_vec()
    } else if let Some(h) = text.strip_prefix("0x") {
        if h.is_empty() || !h.chars().all(|c| c.is_ascii_hexdigit()) {
            return Err(AsmError::BadImmediate { line, text: text.to_string() });
        }
        let padded = if h.len() % 2 == 1 { format!("0{h}") } else { h.to_string() };
        hex::decode(padded).map_err(|_| AsmError::BadImmediate { line, text: text.to_string() })?
    } else if text.chars().all(|c| c.is_ascii_digit()) {
        let v = BigUint::parse_bytes(text.as_bytes(), 10)
            .ok_or_else(|| AsmError::BadImmediate { line, text: text.to_string() })?;
        let b = v.to_bytes_be();
        // Decimal literals carry no width; only their magnitude must fit.
        if b.len() > width {
            return Err(AsmError::ImmediateSizeMismatch { line, mnemonic, expected: width, found: b.len() });
        }
        b
    } else {
        return Err(AsmError::BadImmediate { line, text: text.to_string() });
    };
    if bytes.len() > width {
        return Err(AsmError::ImmediateSizeMismatch { line, mnemonic, expected: width, found: bytes.len() });
    }
    let mut out = vec![0u8; width - bytes.len()];
    out.extend(bytes);
    Ok(Immediate::Bytes(out))
}

impl AsmProgram {
    /// First pass: parse lines and assign label offsets.
    pub fn parse(text: &str) -> Result<AsmProgram, AsmError> {
        let mut lines = Vec::new();
        let mut labels = BTreeMap::new();
        let mut offset = 0usize;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let mut rest = raw.split(';').next().unwrap_or("").trim();
            let mut line_labels = Vec::new();
            while let Some(colon) = rest.find(':') {
                let candidate = rest[..colon].trim();
                if !is_label_name(candidate) || candidate.contains(char::is_whitespace) {
                    break;
                }
                if labels.insert(candidate.to_string(), offset).is_some() {
                    return Err(AsmError::DuplicateLabel { line: line_no, label: candidate.to_string() });
                }
                line_labels.push(candidate.to_string());
                rest = rest[colon + 1..].trim();
            }
            if rest.is_empty() {
                if !line_labels.is_empty() {
                    lines.push(AsmLine { line_no, labels: line_labels, op: None, immediate: None });
                }
                continue;
            }
            let (mnemonic, arg) = match rest.split_once(char::is_whitespace) {
                Some((m, a)) => (m, Some(a.trim())),
                None => (rest, None),
            };
            let op: Opcode = mnemonic
                .parse()
                .map_err(|_| AsmError::UnknownMnemonic { line: line_no, mnemonic: mnemonic.to_string() })?;
            let immediate = match (op.immediate_len(), arg) {
                (0, None) => None,
                (0, Some(_)) => {
                    return Err(AsmError::UnexpectedImmediate { line: line_no, mnemonic: op.to_string() })
                }
                (_, None) => return Err(AsmError::MissingImmediate { line: line_no, mnemonic: op.to_string() }),
                (_, Some(a)) => Some(parse_immediate(line_no, op, a)?),
            };
            offset += 1 + op.immediate_len();
            lines.push(AsmLine { line_no, labels: line_labels, op: Some(op), immediate });
        }
        Ok(AsmProgram { lines, labels })
    }

    /// Second pass: emit bytes with label references patched in.
    pub fn assemble(&self) -> Result<Vec<u8>, AsmError> {
        let mut jumpdests = BTreeMap::new();
        let mut pending: Vec<&str> = Vec::new();
        for l in &self.lines {
            pending.extend(l.labels.iter().map(String::as_str));
            if let Some(op) = l.op {
                for name in pending.drain(..) {
                    jumpdests.insert(name, op == Opcode::JumpDest);
                }
            }
        }
        let mut out = Vec::new();
        for l in &self.lines {
            let Some(op) = l.op else { continue };
            out.push(op.byte());
            match &l.immediate {
                None => {}
                Some(Immediate::Bytes(b)) => out.extend(b),
                Some(Immediate::Label(name)) => {
                    let target = *self
                        .labels
                        .get(name)
                        .ok_or_else(|| AsmError::UnresolvedLabel { line: l.line_no, label: name.clone() })?;
                    if !jumpdests.get(name.as_str()).copied().unwrap_or(false) {
                        return Err(AsmError::LabelNotJumpDest { line: l.line_no, label: name.clone() });
                    }
                    let width = op.immediate_len();
                    let be = (target as u64).to_be_bytes();
                    let significant = be.iter().skip_while(|b| **b == 0).count();
                    if significant > width {
                        return Err(AsmError::ImmediateSizeMismatch {
                            line: l.line_no,
                            mnemonic: op.to_string(),
                            expected: width,
                            found: significant,
                        });
                    }
                    let mut imm = vec![0u8; width.saturating_sub(8)];
                    imm.extend(&be[8usize.saturating_sub(width)..]);
                    out.extend(imm);
                }
            }
        }
        Ok(out)
    }
}

/// Assembles source text into bytecode.
pub fn assemble(text: &str) -> Result<Vec<u8>, AsmError> {
    AsmProgram::parse(text)?.assemble()
}

/// One decoded instruction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub pc: usize,
    /// `None` for bytes outside the supported subset.
    pub op: Option<Opcode>,
    pub byte: u8,
    pub immediate: Vec<u8>,
}

/// Linear sweep decode. A truncated trailing PUSH keeps the bytes present.
pub fn decode(code: &[u8]) -> Vec<Decoded> {
    let mut out = Vec::new();
    let mut pc = 0;
    while pc < code.len() {
        let byte = code[pc];
        let op = Opcode::from_byte(byte);
        let n = op.map(Opcode::immediate_len).unwrap_or(0);
        let end = (pc + 1 + n).min(code.len());
        out.push(Decoded { pc, op, byte, immediate: code[pc + 1..end].to_vec() });
        pc += 1 + n;
    }
    out
}

/// Renders bytecode as assembler source. Valid programs reassemble to the same bytes.
pub fn disassemble(code: &[u8]) -> String {
    let mut s = String::new();
    for d in decode(code) {
        match d.op {
            Some(op) if op.immediate_len() > 0 => {
                let _ = writeln!(s, "{op} 0x{}", hex::encode(&d.immediate));
            }
            Some(op) => {
                let _ = writeln!(s, "{op}");
            }
            None => {
                let _ = writeln!(s, "INVALID_{:02x}", d.byte);
            }
        }
    }
    s
}

/// Human-oriented listing with program counters.
pub fn listing(code: &[u8]) -> String {
    let mut s = String::new();
    for d in decode(code) {
        let text = match d.op {
            Some(op) if op.immediate_len() > 0 => format!("{op} 0x{}", hex::encode(&d.immediate)),
            Some(op) => op.to_string(),
            None => format!("INVALID_{:02x}", d.byte),
        };
        let _ = writeln!(s, "{:5} {text}", d.pc);
    }
    s
}
