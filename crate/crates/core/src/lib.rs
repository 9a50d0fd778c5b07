//! Governance toolkit for multi-agent systems: capability-bound
//! certificates, chain verification, a tamper-evident interaction ledger
//! and replay-based behavioral verification.

pub mod cbor;
pub mod certificates;
pub mod crypto;
pub mod fixtures;
pub mod harness;
pub mod ledger;
pub mod repro;
pub mod verifier;
