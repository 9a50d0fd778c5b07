use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{InteractionRecord, Ledger};
use crate::crypto::{Digest, PreparedKey, PublicKey};

/// Resolves an agent id to the public key its records are signed with.
pub trait KeyDirectory {
    fn public_key(&self, agent_id: &str) -> Option<PublicKey>;
}

impl KeyDirectory for BTreeMap<String, PublicKey> {
    fn public_key(&self, agent_id: &str) -> Option<PublicKey> {
        self.get(agent_id).copied()
    }
}

impl KeyDirectory for HashMap<String, PublicKey> {
    fn public_key(&self, agent_id: &str) -> Option<PublicKey> {
        self.get(agent_id).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditFailure {
    SigSender,
    SigReceiver,
    ChainBreak,
    SeqGap,
    /// Stored bytes do not decode to a record.
    Malformed,
}

impl AuditFailure {
    pub fn as_str(self) -> &'static str {
        match self {
            AuditFailure::SigSender => "SIG_SENDER",
            AuditFailure::SigReceiver => "SIG_RECEIVER",
            AuditFailure::ChainBreak => "CHAIN_BREAK",
            AuditFailure::SeqGap => "SEQ_GAP",
            AuditFailure::Malformed => "MALFORMED",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub ok: bool,
    pub first_bad_seq: Option<u64>,
    pub failure: Option<AuditFailure>,
    /// Records that passed every check.
    pub records_checked: u64,
    /// Hash of the last record that passed.
    pub head_hash: Digest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// State of an audit walk after some prefix of records: the seq the next
/// record must carry and the hash it must link to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Checkpoint {
    pub next_seq: u64,
    pub prev_hash: Digest,
}

impl Checkpoint {
    pub const GENESIS: Checkpoint = Checkpoint {
        next_seq: 1,
        prev_hash: Digest::ZERO,
    };

    pub fn after(record: &InteractionRecord) -> Self {
        Self {
            next_seq: record.seq + 1,
            prev_hash: record.record_hash(),
        }
    }
}

struct Walker<'a, K: ?Sized> {
    keys: &'a K,
    prepared: HashMap<String, Option<PreparedKey>>,
    at: Checkpoint,
    checked: u64,
}

impl<'a, K: KeyDirectory + ?Sized> Walker<'a, K> {
    fn new(keys: &'a K, at: Checkpoint) -> Self {
        Self {
            keys,
            prepared: HashMap::new(),
            at,
            checked: 0,
        }
    }

    fn key(&mut self, id: &str) -> Option<&PreparedKey> {
        if !self.prepared.contains_key(id) {
            let k = self.keys.public_key(id).and_then(|pk| PreparedKey::new(&pk));
            self.prepared.insert(id.to_owned(), k);
        }
        self.prepared[id].as_ref()
    }

    fn step(&mut self, r: &InteractionRecord) -> Result<(), (u64, AuditFailure, String)> {
        let expected = self.at.next_seq;
        if r.seq != expected {
            return Err((expected, AuditFailure::SeqGap, format!("found seq {}", r.seq)));
        }
        if r.prev_hash != self.at.prev_hash {
            return Err((expected, AuditFailure::ChainBreak, "prev_hash does not match predecessor".into()));
        }
        let body = r.body_bytes();
        let sender_ok = self.key(&r.sender_id).is_some_and(|k| k.verify(&body, &r.sender_sig));
        if !sender_ok {
            return Err((expected, AuditFailure::SigSender, format!("sender {}", r.sender_id)));
        }
        let receiver_ok = self
            .key(&r.receiver_id)
            .is_some_and(|k| k.verify(&body, &r.receiver_sig));
        if !receiver_ok {
            return Err((expected, AuditFailure::SigReceiver, format!("receiver {}", r.receiver_id)));
        }
        self.at = Checkpoint::after(r);
        self.checked += 1;
        Ok(())
    }

    fn report(self, failure: Option<(u64, AuditFailure, String)>) -> AuditReport {
        let (first_bad_seq, failure, detail) = match failure {
            Some((s, f, d)) => (Some(s), Some(f), Some(d)),
            None => (None, None, None),
        };
        AuditReport {
            ok: failure.is_none(),
            first_bad_seq,
            failure,
            records_checked: self.checked,
            head_hash: self.at.prev_hash,
            detail,
        }
    }
}

/// Walks the whole ledger checking sequence continuity, hash linkage and
/// both signatures, stopping at the first failure.
pub fn audit(ledger: &Ledger, keys: &(impl KeyDirectory + ?Sized)) -> AuditReport {
    audit_from(ledger.records(), Checkpoint::GENESIS, keys)
}

/// Audits `records` as the continuation of a prefix summarised by `at`.
pub fn audit_from(
    records: &[InteractionRecord],
    at: Checkpoint,
    keys: &(impl KeyDirectory + ?Sized),
) -> AuditReport {
    let mut w = Walker::new(keys, at);
    for r in records {
        if let Err(e) = w.step(r) {
            return w.report(Some(e));
        }
    }
    w.report(None)
}

/// Audits raw ledger storage, decoding frame by frame. Undecodable bytes
/// are reported as [`AuditFailure::Malformed`] at the seq that was due.
pub fn audit_bytes(bytes: &[u8], keys: &(impl KeyDirectory + ?Sized)) -> AuditReport {
    audit_bytes_from(bytes, Checkpoint::GENESIS, keys)
}

/// Like [`audit_bytes`] for a byte suffix starting at a frame boundary.
pub fn audit_bytes_from(
    bytes: &[u8],
    at: Checkpoint,
    keys: &(impl KeyDirectory + ?Sized),
) -> AuditReport {
    let mut w = Walker::new(keys, at);
    let mut pos = 0usize;
    while pos < bytes.len() {
        let malformed = |w: &Walker<'_, _>, msg: &str| Some((w.at.next_seq, AuditFailure::Malformed, msg.to_owned()));
        let Some(len_bytes) = bytes.get(pos..pos + 4) else {
            let f = malformed(&w, "truncated length prefix");
            return w.report(f);
        };
        let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
        let start = pos + 4;
        let Some(frame) = start.checked_add(len).and_then(|end| bytes.get(start..end)) else {
            let f = malformed(&w, "frame exceeds storage");
            return w.report(f);
        };
        let record = match InteractionRecord::decode(frame) {
            Ok(r) => r,
            Err(e) => {
                let f = malformed(&w, &e.to_string());
                return w.report(f);
            }
        };
        if let Err(e) = w.step(&record) {
            return w.report(Some(e));
        }
        pos = start + len;
    }
    w.report(None)
}

/// Smallest `j >= 1` such that no record carries the hop `path[j-1] ->
/// path[j]`; `path.len() - 1` when every hop is recorded.
pub fn chain_auditability_depth(path: &[&str], records: &[InteractionRecord]) -> usize {
    let n = path.len().saturating_sub(1);
    let recorded: HashSet<(&str, &str)> = records
        .iter()
        .map(|r| (r.sender_id.as_str(), r.receiver_id.as_str()))
        .collect();
    (1..=n)
        .find(|&j| !recorded.contains(&(path[j - 1], path[j])))
        .unwrap_or(n)
}
