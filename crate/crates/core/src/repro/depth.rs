use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificates::{Certificate, NodeType, ReproLevel};
use crate::ledger::{chain_auditability_depth, InteractionRecord};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DepthError {
    #[error("chain must start at a principal (NA) anchor")]
    NotAnchored,
    #[error("chain has {chain} nodes but the ledger path has {path}")]
    LengthMismatch { chain: usize, path: usize },
    #[error("position {0}: chain and path name different agents")]
    AgentMismatch(usize),
}

/// First position `j >= 1` holding an agent that made no reproducibility
/// commitment; `chain.len() - 1` when there is none.
pub fn chain_verifiability_depth(chain: &[Certificate]) -> Result<usize, DepthError> {
    match chain.first() {
        Some(c) if c.node_type == NodeType::NA => {}
        _ => return Err(DepthError::NotAnchored),
    }
    let n = chain.len() - 1;
    Ok((1..=n)
        .find(|&j| chain[j].node_type == NodeType::AG && chain[j].repro.level == ReproLevel::None)
        .unwrap_or(n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthReport {
    pub n: usize,
    pub cvd: usize,
    pub cad: usize,
    pub effective: usize,
}

impl DepthReport {
    pub fn partial(&self) -> bool {
        self.effective < self.n
    }

    /// Whether the record for hop `j` (from node `j-1` to node `j`) must
    /// carry the partial-verifiability marker.
    pub fn marks_hop(&self, j: usize) -> bool {
        self.partial() && j > self.effective
    }
}

/// `min(CVD, CAD)` over a chain and the matching ledger path.
pub fn effective_verification_depth(
    chain: &[Certificate],
    path: &[&str],
    records: &[InteractionRecord],
) -> Result<DepthReport, DepthError> {
    if chain.len() != path.len() {
        return Err(DepthError::LengthMismatch {
            chain: chain.len(),
            path: path.len(),
        });
    }
    if let Some(i) = chain.iter().zip(path).position(|(c, p)| c.id != *p) {
        return Err(DepthError::AgentMismatch(i));
    }
    let cvd = chain_verifiability_depth(chain)?;
    let cad = chain_auditability_depth(path, records);
    Ok(DepthReport {
        n: chain.len() - 1,
        cvd,
        cad,
        effective: cvd.min(cad),
    })
}
