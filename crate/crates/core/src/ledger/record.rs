use std::collections::BTreeSet;

use ciborium::value::Value;
use serde::{Deserialize, Serialize};

use super::LedgerError;
use crate::cbor::{self, CborError, Fields};
use crate::crypto::{self, Digest, Signature};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Marker {
    /// Upstream of this hop the chain is no longer verifiable.
    PartialVerifiability,
}

impl Marker {
    fn as_str(self) -> &'static str {
        match self {
            Marker::PartialVerifiability => "PARTIAL_VERIFIABILITY",
        }
    }

    fn parse(s: &str) -> Option<Marker> {
        match s {
            "PARTIAL_VERIFIABILITY" => Some(Marker::PartialVerifiability),
            _ => None,
        }
    }
}

/// What a replayer needs besides the disclosed input.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReproAnchor {
    pub seed: u64,
    pub model_ver: String,
    pub skills_hash: Digest,
}

/// Caller-supplied part of a record; the ledger assigns `seq` and
/// `prev_hash` and collects both signatures.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordDraft {
    pub timestamp: u64,
    pub sender_id: String,
    pub receiver_id: String,
    pub sender_cert_hash: Digest,
    pub receiver_cert_hash: Digest,
    pub input_commitment: Digest,
    pub output_commitment: Digest,
    pub anchor: ReproAnchor,
    pub markers: BTreeSet<Marker>,
}

impl RecordDraft {
    /// Draft with commitments computed from the plaintext exchange.
    #[allow(clippy::too_many_arguments)]
    pub fn for_exchange(
        timestamp: u64,
        sender_id: &str,
        receiver_id: &str,
        sender_cert_hash: Digest,
        receiver_cert_hash: Digest,
        input: &[u8],
        output: &[u8],
        anchor: ReproAnchor,
    ) -> Self {
        Self {
            timestamp,
            sender_id: sender_id.into(),
            receiver_id: receiver_id.into(),
            sender_cert_hash,
            receiver_cert_hash,
            input_commitment: crypto::digest(input),
            output_commitment: crypto::digest(output),
            anchor,
            markers: BTreeSet::new(),
        }
    }

    /// Replaces the commitments with externally computed ones, which must
    /// be 32 bytes each.
    pub fn with_commitments(mut self, input: &[u8], output: &[u8]) -> Result<Self, LedgerError> {
        self.input_commitment =
            Digest::from_slice(input).map_err(|_| LedgerError::MalformedCommitment("input"))?;
        self.output_commitment =
            Digest::from_slice(output).map_err(|_| LedgerError::MalformedCommitment("output"))?;
        Ok(self)
    }

    pub fn marked(mut self, marker: Marker) -> Self {
        self.markers.insert(marker);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub seq: u64,
    pub timestamp: u64,
    pub sender_id: String,
    pub receiver_id: String,
    pub sender_cert_hash: Digest,
    pub receiver_cert_hash: Digest,
    pub input_commitment: Digest,
    pub output_commitment: Digest,
    pub anchor: ReproAnchor,
    pub prev_hash: Digest,
    pub markers: BTreeSet<Marker>,
    pub sender_sig: Signature,
    pub receiver_sig: Signature,
}

const BODY_FIELDS: usize = 11;

impl InteractionRecord {
    pub(super) fn unsigned(seq: u64, prev_hash: Digest, d: RecordDraft) -> Self {
        Self {
            seq,
            timestamp: d.timestamp,
            sender_id: d.sender_id,
            receiver_id: d.receiver_id,
            sender_cert_hash: d.sender_cert_hash,
            receiver_cert_hash: d.receiver_cert_hash,
            input_commitment: d.input_commitment,
            output_commitment: d.output_commitment,
            anchor: d.anchor,
            prev_hash,
            markers: d.markers,
            sender_sig: Signature([0; 64]),
            receiver_sig: Signature([0; 64]),
        }
    }

    fn body_values(&self) -> Vec<Value> {
        vec![
            cbor::uint(self.seq),
            cbor::uint(self.timestamp),
            cbor::text(&self.sender_id),
            cbor::text(&self.receiver_id),
            cbor::bytes(self.sender_cert_hash.as_ref()),
            cbor::bytes(self.receiver_cert_hash.as_ref()),
            cbor::bytes(self.input_commitment.as_ref()),
            cbor::bytes(self.output_commitment.as_ref()),
            cbor::array(vec![
                cbor::uint(self.anchor.seed),
                cbor::text(&self.anchor.model_ver),
                cbor::bytes(self.anchor.skills_hash.as_ref()),
            ]),
            cbor::bytes(self.prev_hash.as_ref()),
            cbor::array(self.markers.iter().map(|m| cbor::text(m.as_str())).collect()),
        ]
    }

    /// Canonical body: every field except the two signatures. Both parties
    /// sign exactly these bytes.
    pub fn body_bytes(&self) -> Vec<u8> {
        cbor::encode(&cbor::array(self.body_values()))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut v = self.body_values();
        v.push(cbor::bytes(self.sender_sig.as_ref()));
        v.push(cbor::bytes(self.receiver_sig.as_ref()));
        cbor::encode(&cbor::array(v))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CborError> {
        let mut f = Fields::new(cbor::decode(bytes)?, BODY_FIELDS + 2, "interaction record")?;
        let seq = f.uint()?;
        let timestamp = f.uint()?;
        let sender_id = f.text()?;
        let receiver_id = f.text()?;
        let sender_cert_hash = f.digest()?;
        let receiver_cert_hash = f.digest()?;
        let input_commitment = f.digest()?;
        let output_commitment = f.digest()?;
        let mut a = Fields::new(f.value()?, 3, "repro anchor")?;
        let anchor = ReproAnchor {
            seed: a.uint()?,
            model_ver: a.text()?,
            skills_hash: a.digest()?,
        };
        let prev_hash = f.digest()?;
        let names = f.text_list()?;
        if names.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CborError::Shape("markers not strictly sorted".into()));
        }
        let markers = names
            .iter()
            .map(|n| Marker::parse(n).ok_or_else(|| CborError::Shape(format!("unknown marker {n}"))))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            seq,
            timestamp,
            sender_id,
            receiver_id,
            sender_cert_hash,
            receiver_cert_hash,
            input_commitment,
            output_commitment,
            anchor,
            prev_hash,
            markers,
            sender_sig: f.signature()?,
            receiver_sig: f.signature()?,
        })
    }

    /// Digest of the full record, signatures included; the successor's
    /// `prev_hash`.
    pub fn record_hash(&self) -> Digest {
        crypto::digest(&self.encode())
    }

    pub fn has_marker(&self, m: Marker) -> bool {
        self.markers.contains(&m)
    }
}

pub fn record_hash(record: &InteractionRecord) -> Digest {
    record.record_hash()
}
