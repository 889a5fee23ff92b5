//! Theorem-carrying transactions for a small EVM subset.
//!
//! Transactions carry the hash of a proven theorem about the code path they
//! take. This crate holds the pieces a node needs to check them:
//!
//! * [`words`]: 256-bit words, addresses, Keccak-256.
//! * [`asm`] and [`opcode`]: an assembler and contract manifests.
//! * [`vm`]: an interpreter that records an execution trace and path hash.
//! * [`concolic`]: replays a trace into a straight-line symbolic program.
//! * [`spec`]: the hypothesis and invariant language.
//! * [`vc`]: verification-condition generation and the verifier bridge.
//! * [`theorem`]: the persistent theorem repository.
//! * [`sim`]: issuer, service and node simulation.

pub mod asm;
pub mod concolic;
pub mod fixtures;
pub mod opcode;
pub mod sim;
pub mod spec;
pub mod theorem;
pub mod vc;
pub mod vm;
pub mod words;
