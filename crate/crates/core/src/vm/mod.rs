//! Concrete interpreter for the supported EVM subset.
//!
//! Every executed instruction is recorded as a [`TraceEvent`]. Branches and
//! calls also feed a path buffer whose Keccak-256 digest is the path hash.

mod interp;
mod trace;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::asm::{ContractManifest, ManifestError, ManifestRegistry, StorageVar};
use crate::opcode::Opcode;
use crate::spec::StateView;
use crate::words::{keccak256, pad32, Address, Hash32, Selector, Word256};

pub use interp::execute_transaction;
pub use trace::{parse_trace_dump, write_trace_dump, TraceDump, TraceParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmConfig {
    pub gas_limit: u64,
    pub max_call_depth: usize,
    /// Memory ceiling per frame, in bytes.
    pub max_memory: usize,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig { gas_limit: 10_000_000, max_call_depth: 1024, max_memory: 1 << 20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    #[serde(with = "hex_bytes")]
    pub code: Vec<u8>,
    #[serde(default)]
    pub storage: BTreeMap<Word256, Word256>,
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("0x{}", hex::encode(b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s.trim_start_matches("0x")).map_err(serde::de::Error::custom)
    }
}

/// Accounts, their manifests, and the SHA3 preimages observed so far.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    pub accounts: BTreeMap<Address, Account>,
    pub manifests: ManifestRegistry,
    /// Inputs of 64-byte SHA3 computations (mapping keys), by digest word.
    pub preimages: BTreeMap<Word256, (Word256, Word256)>,
}

/// JSON form of [`WorldState`] accounts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub accounts: BTreeMap<Address, Account>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn deploy(&mut self, manifest: ContractManifest, code: Vec<u8>) {
        self.accounts.entry(manifest.address).or_default().code = code;
        self.manifests.insert(manifest);
    }

    pub fn sload(&self, addr: &Address, key: &Word256) -> Word256 {
        self.accounts.get(addr).and_then(|a| a.storage.get(key)).copied().unwrap_or_default()
    }

    /// Writes a slot; zero values are removed so equal states compare equal.
    pub fn sstore(&mut self, addr: Address, key: Word256, value: Word256) {
        let acct = self.accounts.entry(addr).or_default();
        if value.is_zero() {
            acct.storage.remove(&key);
        } else {
            acct.storage.insert(key, value);
        }
    }

    /// Sets `var` (scalar) of the contract at `addr` through its manifest.
    pub fn set_scalar(&mut self, addr: Address, var: &str, value: Word256) -> Result<(), ManifestError> {
        let key = self.var_key(addr, var, None)?;
        self.sstore(addr, key, value);
        Ok(())
    }

    /// Sets `var[index]` of a mapping and remembers the key preimage.
    pub fn set_mapping(
        &mut self,
        addr: Address,
        var: &str,
        index: Word256,
        value: Word256,
    ) -> Result<(), ManifestError> {
        let key = self.var_key(addr, var, Some(index))?;
        self.sstore(addr, key, value);
        Ok(())
    }

    pub fn get_var(&self, addr: Address, var: &str, index: Option<Word256>) -> Result<Word256, ManifestError> {
        let v = self.lookup_var(addr, var)?;
        Ok(self.sload(&addr, &v.storage_key(index)?))
    }

    fn lookup_var(&self, addr: Address, var: &str) -> Result<&StorageVar, ManifestError> {
        let m = self.manifests.get(&addr).ok_or_else(|| ManifestError::ParseError {
            context: addr.to_string(),
            msg: "no manifest at address".into(),
        })?;
        m.storage_var(var).ok_or_else(|| ManifestError::ParseError {
            context: m.name.clone(),
            msg: format!("no storage variable `{var}`"),
        })
    }

    fn var_key(&mut self, addr: Address, var: &str, index: Option<Word256>) -> Result<Word256, ManifestError> {
        let v = self.lookup_var(addr, var)?;
        let (key, slot) = (v.storage_key(index)?, v.slot);
        if let Some(i) = index {
            self.preimages.insert(key, (i, slot));
        }
        Ok(key)
    }

    /// Entries of a mapping variable whose keys have known preimages.
    pub fn mapping_entries(&self, addr: Address, var: &str) -> Vec<(Word256, Word256)> {
        let Some(slot) = self.manifests.get(&addr).and_then(|m| m.storage_var(var)).map(|v| v.slot) else {
            return Vec::new();
        };
        let Some(acct) = self.accounts.get(&addr) else { return Vec::new() };
        acct.storage
            .iter()
            .filter_map(|(k, v)| match self.preimages.get(k) {
                Some((index, s)) if *s == slot => Some((*index, *v)),
                _ => None,
            })
            .collect()
    }

    /// Storage keys of `addr` that are neither manifest scalars nor known mapping entries.
    pub fn unexplained_keys(&self, addr: Address) -> Vec<Word256> {
        let Some(acct) = self.accounts.get(&addr) else { return Vec::new() };
        let m = self.manifests.get(&addr);
        acct.storage
            .keys()
            .filter(|k| {
                let scalar = m.and_then(|m| m.storage_by_slot(**k)).is_some();
                let mapped = self
                    .preimages
                    .get(k)
                    .is_some_and(|(_, s)| m.and_then(|m| m.storage_by_slot(*s)).is_some());
                !scalar && !mapped
            })
            .copied()
            .collect()
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot { accounts: self.accounts.clone() }
    }

    /// Replaces accounts with a snapshot; manifests are kept.
    pub fn restore(&mut self, snap: StateSnapshot) {
        self.accounts = snap.accounts;
    }
}

impl StateView for WorldState {
    fn manifest_at(&self, addr: &Address) -> Option<&ContractManifest> {
        self.manifests.get(addr)
    }

    fn storage_at(&self, addr: &Address, key: &Word256) -> Word256 {
        self.sload(addr, key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub origin: Address,
    pub to: Address,
    pub selector: Selector,
    #[serde(default)]
    pub args: Vec<Word256>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theorem_hash: Option<Hash32>,
}

impl Transaction {
    /// `selector ++ pad32(arg_0) ++ pad32(arg_1) ++ ...`
    pub fn calldata(&self) -> Vec<u8> {
        let mut out = self.selector.0.to_vec();
        for a in &self.args {
            out.extend_from_slice(&pad32(a));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrapReason {
    /// Explicit REVERT.
    Revert,
    StackUnderflow,
    StackOverflow,
    InvalidOpcode(u8),
    InvalidJumpDest(usize),
    OutOfGas,
    CallDepthExceeded,
    StaticWrite,
    NonZeroValue,
    UnsupportedCall(String),
    MemoryLimit,
}

impl std::fmt::Display for TrapReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TrapReason::Revert => f.write_str("REVERT"),
            TrapReason::StackUnderflow => f.write_str("stack underflow"),
            TrapReason::StackOverflow => f.write_str("stack overflow"),
            TrapReason::InvalidOpcode(b) => write!(f, "invalid opcode 0x{b:02x}"),
            TrapReason::InvalidJumpDest(pc) => write!(f, "invalid jump destination {pc}"),
            TrapReason::OutOfGas => f.write_str("out of gas"),
            TrapReason::CallDepthExceeded => f.write_str("call depth exceeded"),
            TrapReason::StaticWrite => f.write_str("state write in static call"),
            TrapReason::NonZeroValue => f.write_str("call with nonzero value"),
            TrapReason::UnsupportedCall(op) => write!(f, "unsupported call kind {op}"),
            TrapReason::MemoryLimit => f.write_str("memory limit exceeded"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Committed,
    Reverted(TrapReason),
}

impl Status {
    pub fn is_committed(&self) -> bool {
        *self == Status::Committed
    }
}

/// Extra data attached to some trace events.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Aux {
    /// SLOAD (value read) or SSTORE (value written).
    Storage { key: Word256, value: Word256 },
    /// Message call; `callee` is the target account.
    Call { callee: Address, args_offset: usize, args_len: usize, ret_offset: usize, ret_len: usize },
    /// PC executed after a JUMP or JUMPI.
    Jump { next_pc: usize },
    /// Memory range touched by MLOAD, MSTORE, SHA3, RETURN and REVERT.
    Memory { offset: usize, len: usize },
}

/// One executed instruction. `popped` lists operands top of stack first;
/// `pushed` lists results in push order (last element ends on top).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub depth: usize,
    pub pc: usize,
    pub op: Opcode,
    pub contract: Address,
    pub popped: Vec<Word256>,
    pub pushed: Vec<Word256>,
    pub aux: Option<Aux>,
}

/// Branch targets and callee addresses of one execution.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PathBuffer {
    pub bytes: Vec<u8>,
}

impl PathBuffer {
    /// Appends the path contribution of `event`, if any.
    pub fn record(&mut self, event: &TraceEvent) {
        match (&event.op, &event.aux) {
            (Opcode::JumpI, Some(Aux::Jump { next_pc })) => {
                self.bytes.extend_from_slice(&pad32(&Word256::from_u64(*next_pc as u64)))
            }
            (op, Some(Aux::Call { callee, .. })) if op.is_call() => self.bytes.extend_from_slice(&callee.0),
            _ => {}
        }
    }

    pub fn hash(&self) -> Hash32 {
        keccak256(&self.bytes)
    }

    /// Path buffer of a whole trace.
    pub fn of_trace(trace: &[TraceEvent]) -> PathBuffer {
        let mut p = PathBuffer::default();
        for e in trace {
            p.record(e);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub status: Status,
    pub trace: Vec<TraceEvent>,
    pub path: PathBuffer,
    pub path_hash: Hash32,
    pub gas_used: u64,
    pub output: Vec<u8>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calldata_layout() {
        let tx = Transaction {
            origin: Address::from_low_u64(1),
            to: Address::from_low_u64(2),
            selector: Selector([0xa9, 0x05, 0x9c, 0xbb]),
            args: vec![Word256::from_u64(3), Word256::MAX],
            theorem_hash: None,
        };
        let cd = tx.calldata();
        assert_eq!(cd.len(), 4 + 64);
        assert_eq!(&cd[..4], &[0xa9, 0x05, 0x9c, 0xbb]);
        assert_eq!(cd[35], 3);
        assert!(cd[36..].iter().all(|b| *b == 0xff));
    }

    #[test]
    fn path_records() {
        let mut p = PathBuffer::default();
        let jumpi = TraceEvent {
            depth: 0,
            pc: 10,
            op: Opcode::JumpI,
            contract: Address::ZERO,
            popped: vec![],
            pushed: vec![],
            aux: Some(Aux::Jump { next_pc: 931 }),
        };
        p.record(&jumpi);
        assert_eq!(p.bytes, pad32(&Word256::from_u64(931)).to_vec());
        let call = TraceEvent {
            op: Opcode::Call,
            aux: Some(Aux::Call { callee: Address([7; 20]), args_offset: 0, args_len: 0, ret_offset: 0, ret_len: 0 }),
            ..jumpi.clone()
        };
        p.record(&call);
        assert_eq!(p.bytes.len(), 52);
        assert_eq!(&p.bytes[32..], &[7; 20]);
        let add = TraceEvent { op: Opcode::Add, aux: None, ..jumpi };
        p.record(&add);
        assert_eq!(p.bytes.len(), 52);
    }
}
