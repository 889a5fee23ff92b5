//! Test-only oracles and fixtures shared by several test targets.

#![allow(dead_code)]

pub mod axioms;
pub mod keccak;
pub mod traffic;
