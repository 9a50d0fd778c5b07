use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Reason, TrustAnchors};
use crate::certificates::{constraint_leq, Certificate, NodeType};

/// Forest of certificates linked by `parent_id`.
#[derive(Clone, Debug, Default)]
pub struct TrustTree {
    pub nodes: BTreeMap<String, Certificate>,
    pub roots: TrustAnchors,
}

/// A rule broken on the edge `parent -> child`. Root problems are reported
/// with `parent == child`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeViolation {
    pub parent: String,
    pub child: String,
    pub rule: Reason,
}

impl TrustTree {
    pub fn new(roots: TrustAnchors) -> Self {
        Self {
            nodes: BTreeMap::new(),
            roots,
        }
    }

    pub fn insert(&mut self, cert: Certificate) {
        self.nodes.insert(cert.id.clone(), cert);
    }

    pub fn get(&self, id: &str) -> Option<&Certificate> {
        self.nodes.get(id)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.nodes
            .values()
            .filter(|c| !c.is_self_signed())
            .map(|c| (c.parent_id.as_str(), c.id.as_str()))
    }

    pub fn children<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Certificate> + 'a {
        self.nodes
            .values()
            .filter(move |c| !c.is_self_signed() && c.parent_id == id)
    }

    /// Root-to-leaf certificate chain ending at `id`, or `None` when the
    /// parent links are broken or cyclic.
    pub fn chain_to(&self, id: &str) -> Option<Vec<Certificate>> {
        let mut chain = Vec::new();
        let mut cur = self.nodes.get(id)?;
        loop {
            chain.push(cur.clone());
            if cur.is_self_signed() {
                break;
            }
            if chain.len() > self.nodes.len() {
                return None;
            }
            cur = self.nodes.get(&cur.parent_id)?;
        }
        chain.reverse();
        Some(chain)
    }
}

/// Every broken structural rule in the forest. Empty iff each edge meets
/// the type constraint and the propagation rule, each signature verifies,
/// and each tree hangs off a trusted root.
pub fn validate_tree(tree: &TrustTree) -> Vec<TreeViolation> {
    let mut out = Vec::new();
    let mut flag = |parent: &str, child: &str, rule| {
        out.push(TreeViolation {
            parent: parent.to_owned(),
            child: child.to_owned(),
            rule,
        })
    };
    for cert in tree.nodes.values() {
        if cert.is_self_signed() {
            if !tree.roots.trusts(cert) {
                flag(&cert.id, &cert.id, Reason::UntrustedRoot);
            }
            continue;
        }
        let Some(parent) = tree.nodes.get(&cert.parent_id) else {
            flag(&cert.parent_id, &cert.id, Reason::UntrustedRoot);
            continue;
        };
        if !cert.signature_valid_under(&parent.public_key) {
            flag(&parent.id, &cert.id, Reason::BadSignature);
        }
        if parent.node_type == NodeType::AG && cert.node_type != NodeType::AG {
            flag(&parent.id, &cert.id, Reason::TypeConstraint);
        }
        if parent.constraints.max_depth == 0 {
            flag(&parent.id, &cert.id, Reason::DepthExhausted);
        } else if !constraint_leq(&cert.constraints, &parent.constraints) {
            flag(&parent.id, &cert.id, Reason::ConstraintViolation);
        }
        if tree.chain_to(&cert.id).is_none() {
            flag(&parent.id, &cert.id, Reason::UntrustedRoot);
        }
    }
    out
}
