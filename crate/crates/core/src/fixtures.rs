//! Bundled example contracts.

use crate::asm::{LoadedContract, ManifestError};

pub const MULTIVULN_JSON: &str = include_str!("../../../fixtures/contracts/multivuln.json");
pub const MULTIVULN_ASM: &str = include_str!("../../../fixtures/contracts/multivuln.asm");
pub const REENTRANCY_JSON: &str = include_str!("../../../fixtures/contracts/reentrancy_attack.json");
pub const REENTRANCY_ASM: &str = include_str!("../../../fixtures/contracts/reentrancy_attack.asm");
pub const NO_REENTRANCY_JSON: &str = include_str!("../../../fixtures/contracts/no_reentrancy_attack.json");
pub const NO_REENTRANCY_ASM: &str = include_str!("../../../fixtures/contracts/no_reentrancy_attack.asm");

pub fn multivuln() -> Result<LoadedContract, ManifestError> {
    LoadedContract::from_sources(MULTIVULN_JSON, MULTIVULN_ASM, "multivuln.json")
}

pub fn reentrancy_attack() -> Result<LoadedContract, ManifestError> {
    LoadedContract::from_sources(REENTRANCY_JSON, REENTRANCY_ASM, "reentrancy_attack.json")
}

pub fn no_reentrancy_attack() -> Result<LoadedContract, ManifestError> {
    LoadedContract::from_sources(NO_REENTRANCY_JSON, NO_REENTRANCY_ASM, "no_reentrancy_attack.json")
}

pub const ATTACK1_SCENARIO: &str = include_str!("../../../fixtures/scenarios/attack1.json");
pub const ATTACK2_SCENARIO: &str = include_str!("../../../fixtures/scenarios/attack2.json");

/// Bundled contract by manifest file name, e.g. `multivuln.json`.
pub fn by_file_name(name: &str) -> Option<Result<LoadedContract, ManifestError>> {
    match name {
        "multivuln.json" => Some(multivuln()),
        "reentrancy_attack.json" => Some(reentrancy_attack()),
        "no_reentrancy_attack.json" => Some(no_reentrancy_attack()),
        _ => None,
    }
}

/// All bundled contracts.
pub fn all() -> Result<Vec<LoadedContract>, ManifestError> {
    Ok(vec![multivuln()?, reentrancy_attack()?, no_reentrancy_attack()?])
}
