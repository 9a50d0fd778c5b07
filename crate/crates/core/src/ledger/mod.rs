//! Verifiable interaction ledger.
//!
//! Records hold only commitments (digests) of exchanged content, are
//! signed by both parties over the same canonical body, and link to their
//! predecessor through `prev_hash`. On disk a ledger is a sequence of
//! frames, each a little-endian `u32` length followed by the record's
//! deterministic CBOR.

mod audit;
mod forensic;
mod record;

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::crypto::{Digest, KeyPair, PublicKey};

pub use audit::{
    audit, audit_bytes, audit_bytes_from, audit_from, chain_auditability_depth, AuditFailure,
    AuditReport, Checkpoint, KeyDirectory,
};
pub use forensic::{
    forensic_reconstruct, Disclosure, ForensicError, ForensicReport, ReplayCheck, StepOutcome,
};
pub use record::{record_hash, InteractionRecord, Marker, RecordDraft, ReproAnchor};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("malformed {0} commitment: expected 32 bytes")]
    MalformedCommitment(&'static str),
    #[error("SIGNING_FAILURE: {0}")]
    SigningFailure(String),
    #[error("STORAGE_FAILURE: {0}")]
    StorageFailure(#[from] std::io::Error),
    #[error("malformed ledger file at frame {frame}: {msg}")]
    Malformed { frame: usize, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Durability {
    /// fsync after every append.
    Durable,
    /// Write through the OS cache only.
    Buffered,
}

#[derive(Debug)]
struct Storage {
    path: PathBuf,
    file: File,
    durability: Durability,
}

/// Single-writer append-only ledger. Readers borrow the record slice and
/// always see a consistent prefix.
#[derive(Debug, Default)]
pub struct Ledger {
    records: Vec<InteractionRecord>,
    head_hash: Digest,
    storage: Option<Storage>,
    registered_keys: Option<BTreeMap<String, PublicKey>>,
}

/// Length-prefixed frame for one record.
pub fn encode_frame(record: &InteractionRecord, out: &mut Vec<u8>) {
    let body = record.encode();
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
}

/// Outcome of splitting a byte stream into records.
#[derive(Debug, Default)]
pub struct FrameScan {
    pub records: Vec<InteractionRecord>,
    /// Index of the first frame that could not be decoded, with the reason.
    pub error: Option<(usize, String)>,
}

pub fn decode_frames(bytes: &[u8]) -> FrameScan {
    let mut scan = FrameScan::default();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let idx = scan.records.len();
        let Some(len_bytes) = bytes.get(pos..pos + 4) else {
            scan.error = Some((idx, "truncated length prefix".into()));
            break;
        };
        let len = u32::from_le_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
        let start = pos + 4;
        let Some(frame) = start.checked_add(len).and_then(|end| bytes.get(start..end)) else {
            scan.error = Some((idx, "frame exceeds file".into()));
            break;
        };
        match InteractionRecord::decode(frame) {
            Ok(r) => scan.records.push(r),
            Err(e) => {
                scan.error = Some((idx, e.to_string()));
                break;
            }
        }
        pos = start + len;
    }
    scan
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self {
            head_hash: Digest::ZERO,
            ..Self::default()
        }
    }

    /// Builds an in-memory ledger from already-decoded records without
    /// checking them; run [`audit`] to find out whether they are sound.
    pub fn from_records(records: Vec<InteractionRecord>) -> Self {
        let head_hash = records.last().map_or(Digest::ZERO, |r| r.record_hash());
        Self {
            records,
            head_hash,
            ..Self::default()
        }
    }

    /// Opens (or creates) a ledger file and loads its records.
    pub fn open(path: &Path, durability: Durability) -> Result<Self, LedgerError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let scan = decode_frames(&bytes);
        if let Some((frame, msg)) = scan.error {
            return Err(LedgerError::Malformed { frame, msg });
        }
        let mut ledger = Self::from_records(scan.records);
        ledger.storage = Some(Storage {
            path: path.to_owned(),
            file,
            durability,
        });
        Ok(ledger)
    }

    /// Reads records from a file without opening it for writing.
    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let bytes = std::fs::read(path)?;
        let scan = decode_frames(&bytes);
        if let Some((frame, msg)) = scan.error {
            return Err(LedgerError::Malformed { frame, msg });
        }
        Ok(Self::from_records(scan.records))
    }

    /// Require that signing keys match these registered agent keys.
    pub fn with_registered_keys(mut self, keys: BTreeMap<String, PublicKey>) -> Self {
        self.registered_keys = Some(keys);
        self
    }

    pub fn path(&self) -> Option<&Path> {
        self.storage.as_ref().map(|s| s.path.as_path())
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn head_hash(&self) -> Digest {
        self.head_hash
    }

    pub fn next_seq(&self) -> u64 {
        self.records.last().map_or(1, |r| r.seq + 1)
    }

    fn check_signer(&self, id: &str, key: &KeyPair) -> Result<(), LedgerError> {
        if let Some(reg) = &self.registered_keys {
            if reg.get(id) != Some(&key.public_key()) {
                return Err(LedgerError::SigningFailure(format!(
                    "key does not match registered key for {id}"
                )));
            }
        }
        Ok(())
    }

    /// Seals `draft` as the next record: assigns `seq` and `prev_hash`,
    /// collects both signatures and persists the frame before returning.
    pub fn append(
        &mut self,
        draft: RecordDraft,
        sender_key: &KeyPair,
        receiver_key: &KeyPair,
    ) -> Result<&InteractionRecord, LedgerError> {
        self.check_signer(&draft.sender_id, sender_key)?;
        self.check_signer(&draft.receiver_id, receiver_key)?;
        let mut rec = InteractionRecord::unsigned(self.next_seq(), self.head_hash, draft);
        let body = rec.body_bytes();
        rec.sender_sig = sender_key.sign(&body);
        rec.receiver_sig = receiver_key.sign(&body);

        if let Some(storage) = &mut self.storage {
            let mut frame = Vec::with_capacity(body.len() + 140);
            encode_frame(&rec, &mut frame);
            storage.file.write_all(&frame)?;
            if storage.durability == Durability::Durable {
                storage.file.sync_data()?;
            }
        }
        self.head_hash = rec.record_hash();
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.records.len() * 300);
        for r in &self.records {
            encode_frame(r, &mut out);
        }
        out
    }

    /// One JSON object per line, digests and signatures as lowercase hex.
    pub fn export_jsonl(&self, mut out: impl Write) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
