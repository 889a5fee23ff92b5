//! Contract manifests: the symbol information a compiler would otherwise supply.
//!
//! See `docs/formats.md` for the JSON schema.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{assemble, AsmError};
use crate::spec::{parse_spec, ParseError as SpecParseError, SpecExpr};
use crate::words::{keccak256, pad32, Address, Selector, Word256};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{context}: {msg}")]
    ParseError { context: String, msg: String },
    #[error("{contract}: functions `{first}` and `{second}` share selector {selector}")]
    DuplicateSelector { contract: String, first: String, second: String, selector: Selector },
    #[error("{contract}: storage variables `{first}` and `{second}` share slot {slot}")]
    DuplicateSlot { contract: String, first: String, second: String, slot: Word256 },
    #[error("{contract}: duplicate storage variable name `{name}`")]
    DuplicateName { contract: String, name: String },
    #[error("{contract}: bad expression in {entry}: {source}")]
    BadSpecExpr { contract: String, entry: String, source: SpecParseError },
    #[error("{contract}: function `{function}` declares selector {declared}, signature hashes to {computed}")]
    SelectorMismatch { contract: String, function: String, declared: Selector, computed: Selector },
    #[error("{contract}: assignment to undeclared name `{name}` in `{function}`")]
    UndeclaredAssignment { contract: String, function: String, name: String },
    #[error("storage variable `{var}`: {detail}")]
    IndexArityMismatch { var: String, detail: &'static str },
    #[error("{contract}: bytecode: {source}")]
    Assembly { contract: String, source: AsmError },
    #[error("{contract}: no bytecode reference")]
    NoBytecode { contract: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbiType {
    Uint256,
    Address,
}

impl AbiType {
    pub fn name(self) -> &'static str {
        match self {
            AbiType::Uint256 => "uint256",
            AbiType::Address => "address",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageKind {
    Scalar,
    /// `mapping(address => value type)`
    Mapping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StorageVar {
    pub name: String,
    pub slot: Word256,
    pub kind: StorageKind,
    #[serde(rename = "type")]
    pub value_type: AbiType,
}

impl StorageVar {
    /// Storage key of the variable (scalar) or of one of its entries (mapping).
    pub fn storage_key(&self, index: Option<Word256>) -> Result<Word256, ManifestError> {
        match (self.kind, index) {
            (StorageKind::Scalar, None) => Ok(self.slot),
            (StorageKind::Mapping, Some(i)) => Ok(mapping_key(i, self.slot)),
            (StorageKind::Scalar, Some(_)) => {
                Err(ManifestError::IndexArityMismatch { var: self.name.clone(), detail: "scalar takes no index" })
            }
            (StorageKind::Mapping, None) => {
                Err(ManifestError::IndexArityMismatch { var: self.name.clone(), detail: "mapping needs an index" })
            }
        }
    }
}

/// `keccak256(pad32(index) ++ pad32(slot))`
pub fn mapping_key(index: Word256, slot: Word256) -> Word256 {
    let mut pre = [0u8; 64];
    pre[..32].copy_from_slice(&pad32(&index));
    pre[32..].copy_from_slice(&pad32(&slot));
    keccak256(&pre).to_word()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AbiType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declaration {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: AbiType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub name: String,
    pub expr: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionAbi {
    pub name: String,
    /// Filled in from the signature during validation when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    #[serde(default)]
    pub params: Vec<Param>,
    #[serde(default)]
    pub postconditions: Vec<String>,
    #[serde(default)]
    pub declarations: Vec<Declaration>,
    #[serde(default)]
    pub assignments: Vec<Assignment>,
}

impl FunctionAbi {
    pub fn signature(&self) -> String {
        let types: Vec<&str> = self.params.iter().map(|p| p.ty.name()).collect();
        format!("{}({})", self.name, types.join(","))
    }

    pub fn selector(&self) -> Selector {
        self.selector.unwrap_or_else(|| Selector::of_signature(&self.signature()))
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.params.iter().position(|p| p.name == name)
    }

    pub fn parsed_postconditions(&self) -> Vec<SpecExpr> {
        self.postconditions.iter().map(|t| parse_spec(t).expect("validated manifest")).collect()
    }

    pub fn parsed_assignments(&self) -> Vec<(String, SpecExpr)> {
        self.assignments
            .iter()
            .map(|a| (a.name.clone(), parse_spec(&a.expr).expect("validated manifest")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractManifest {
    pub name: String,
    pub address: Address,
    #[serde(default)]
    pub functions: Vec<FunctionAbi>,
    #[serde(default)]
    pub storage: Vec<StorageVar>,
    #[serde(default)]
    pub invariants: Vec<String>,
    /// Path of the `.asm` (or `.hex`) file, relative to the manifest.
    #[serde(default, rename = "bytecode", skip_serializing_if = "Option::is_none")]
    pub bytecode_ref: Option<PathBuf>,
}

impl ContractManifest {
    /// Parses and validates manifest JSON.
    pub fn from_json(text: &str, context: &str) -> Result<ContractManifest, ManifestError> {
        let mut m: ContractManifest = serde_json::from_str(text)
            .map_err(|e| ManifestError::ParseError { context: context.to_string(), msg: e.to_string() })?;
        m.validate()?;
        Ok(m)
    }

    /// Checks every manifest invariant and fills in missing selectors.
    pub fn validate(&mut self) -> Result<(), ManifestError> {
        let contract = self.name.clone();
        let mut selectors: BTreeMap<Selector, String> = BTreeMap::new();
        for f in &mut self.functions {
            let computed = Selector::of_signature(&f.signature());
            match f.selector {
                Some(declared) if declared != computed => {
                    return Err(ManifestError::SelectorMismatch {
                        contract,
                        function: f.name.clone(),
                        declared,
                        computed,
                    })
                }
                _ => f.selector = Some(computed),
            }
            if let Some(first) = selectors.insert(computed, f.name.clone()) {
                return Err(ManifestError::DuplicateSelector {
                    contract,
                    first,
                    second: f.name.clone(),
                    selector: computed,
                });
            }
            let check = |entry: String, text: &str| {
                parse_spec(text).map(|_| ()).map_err(|source| ManifestError::BadSpecExpr {
                    contract: contract.clone(),
                    entry,
                    source,
                })
            };
            for (i, p) in f.postconditions.iter().enumerate() {
                check(format!("{}.postconditions[{i}]", f.name), p)?;
            }
            let declared: BTreeSet<&str> = f.declarations.iter().map(|d| d.name.as_str()).collect();
            for (i, a) in f.assignments.iter().enumerate() {
                if !declared.contains(a.name.as_str()) {
                    return Err(ManifestError::UndeclaredAssignment {
                        contract,
                        function: f.name.clone(),
                        name: a.name.clone(),
                    });
                }
                check(format!("{}.assignments[{i}]", f.name), &a.expr)?;
            }
        }
        let mut slots: BTreeMap<Word256, &str> = BTreeMap::new();
        let mut names = BTreeSet::new();
        for v in &self.storage {
            if let Some(first) = slots.insert(v.slot, &v.name) {
                return Err(ManifestError::DuplicateSlot {
                    contract,
                    first: first.to_string(),
                    second: v.name.clone(),
                    slot: v.slot,
                });
            }
            if !names.insert(v.name.as_str()) {
                return Err(ManifestError::DuplicateName { contract, name: v.name.clone() });
            }
        }
        for (i, inv) in self.invariants.iter().enumerate() {
            parse_spec(inv).map_err(|source| ManifestError::BadSpecExpr {
                contract: contract.clone(),
                entry: format!("invariants[{i}]"),
                source,
            })?;
        }
        Ok(())
    }

    pub fn function_by_selector(&self, sel: Selector) -> Option<&FunctionAbi> {
        self.functions.iter().find(|f| f.selector() == sel)
    }

    pub fn function_by_name(&self, name: &str) -> Option<&FunctionAbi> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn storage_var(&self, name: &str) -> Option<&StorageVar> {
        self.storage.iter().find(|v| v.name == name)
    }

    pub fn storage_by_slot(&self, slot: Word256) -> Option<&StorageVar> {
        self.storage.iter().find(|v| v.slot == slot)
    }

    pub fn parsed_invariants(&self) -> Vec<SpecExpr> {
        self.invariants.iter().map(|t| parse_spec(t).expect("validated manifest")).collect()
    }
}

/// A validated manifest together with its assembled code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedContract {
    pub manifest: ContractManifest,
    pub code: Vec<u8>,
}

impl LoadedContract {
    /// Builds from manifest JSON plus the text of the referenced bytecode file.
    pub fn from_sources(manifest_json: &str, code_text: &str, context: &str) -> Result<LoadedContract, ManifestError> {
        let manifest = ContractManifest::from_json(manifest_json, context)?;
        let code = code_from_text(&manifest, code_text)?;
        Ok(LoadedContract { manifest, code })
    }
}

fn code_from_text(m: &ContractManifest, text: &str) -> Result<Vec<u8>, ManifestError> {
    let is_hex = m.bytecode_ref.as_ref().and_then(|p| p.extension()).is_some_and(|e| e == "hex");
    if is_hex {
        let t: String = text.split_whitespace().collect();
        hex::decode(t.trim_start_matches("0x")).map_err(|e| ManifestError::ParseError {
            context: format!("{}: bytecode", m.name),
            msg: e.to_string(),
        })
    } else {
        assemble(text).map_err(|source| ManifestError::Assembly { contract: m.name.clone(), source })
    }
}

fn read(path: &Path) -> Result<String, ManifestError> {
    fs::read_to_string(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })
}

/// Loads and validates a manifest file (without its bytecode).
pub fn load_manifest(path: &Path) -> Result<ContractManifest, ManifestError> {
    ContractManifest::from_json(&read(path)?, &path.display().to_string())
}

/// Loads a manifest and assembles the bytecode it references.
pub fn load_contract(path: &Path) -> Result<LoadedContract, ManifestError> {
    let manifest = load_manifest(path)?;
    let rel = manifest.bytecode_ref.clone().ok_or_else(|| ManifestError::NoBytecode { contract: manifest.name.clone() })?;
    let code_path = path.parent().unwrap_or(Path::new(".")).join(rel);
    let code = code_from_text(&manifest, &read(&code_path)?)?;
    Ok(LoadedContract { manifest, code })
}

/// Manifests indexed by deployment address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManifestRegistry {
    by_address: BTreeMap<Address, ContractManifest>,
}

impl ManifestRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, m: ContractManifest) {
        self.by_address.insert(m.address, m);
    }

    pub fn get(&self, addr: &Address) -> Option<&ContractManifest> {
        self.by_address.get(addr)
    }

    pub fn by_name(&self, name: &str) -> Option<&ContractManifest> {
        self.by_address.values().find(|m| m.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ContractManifest> {
        self.by_address.values()
    }

    pub fn len(&self) -> usize {
        self.by_address.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_address.is_empty()
    }
}
