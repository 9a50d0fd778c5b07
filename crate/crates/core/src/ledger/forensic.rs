//! Post-incident reconstruction of a delegation path from ledger records,
//! disclosed plaintexts and the certificates in force at the time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{audit_from, AuditReport, Checkpoint, InteractionRecord, KeyDirectory};
use crate::certificates::{Certificate, ReproLevel};
use crate::crypto;

/// Plaintext exchanged in one record, produced by the parties on request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disclosure {
    pub input: Vec<u8>,
    pub output: Vec<u8>,
}

impl Disclosure {
    pub fn new(input: impl Into<Vec<u8>>, output: impl Into<Vec<u8>>) -> Self {
        Self {
            input: input.into(),
            output: output.into(),
        }
    }
}

/// Result of re-executing the receiving agent on the disclosed input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayCheck {
    pub passed: bool,
    pub score: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: u8,
    pub name: String,
    pub passed: bool,
    pub first_divergent_seq: Option<u64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForensicReport {
    /// Seqs of the records chosen for each hop, in path order.
    pub selected: Vec<u64>,
    pub steps: Vec<StepOutcome>,
    pub audit: Option<AuditReport>,
    pub replays: Vec<(u64, ReplayCheck)>,
}

impl ForensicReport {
    pub fn passed(&self) -> bool {
        self.steps.len() == 5 && self.steps.iter().all(|s| s.passed)
    }

    pub fn first_failure(&self) -> Option<&StepOutcome> {
        self.steps.iter().find(|s| !s.passed)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForensicError {
    #[error("MISSING_DISCLOSURE: no plaintext disclosed for record {0}")]
    MissingDisclosure(u64),
}

fn outcome(step: u8, name: &str, bad: Option<(u64, String)>, ok_detail: String) -> StepOutcome {
    StepOutcome {
        step,
        name: name.into(),
        passed: bad.is_none(),
        first_divergent_seq: bad.as_ref().map(|b| b.0),
        detail: bad.map_or(ok_detail, |b| b.1),
    }
}

fn cert_at<'c>(certs: &'c [Certificate], id: &str, at: u64) -> Option<&'c Certificate> {
    certs.iter().find(|c| c.id == id && c.valid_at(at))
}

/// Runs the five reconstruction steps over the hops of `path`:
/// select one record per hop, audit the selected span, match disclosures
/// against commitments, match certificate hashes against the certificates
/// valid at each record's timestamp, and replay every receiving agent that
/// committed to reproducibility.
///
/// Steps after a failed selection are skipped. A missing disclosure for a
/// selected record aborts with [`ForensicError::MissingDisclosure`].
pub fn forensic_reconstruct<F>(
    records: &[InteractionRecord],
    path: &[&str],
    disclosures: &BTreeMap<u64, Disclosure>,
    certs: &[Certificate],
    keys: &(impl KeyDirectory + ?Sized),
    mut replay: F,
) -> Result<ForensicReport, ForensicError>
where
    F: FnMut(&InteractionRecord, &Certificate, &Disclosure) -> ReplayCheck,
{
    let mut report = ForensicReport {
        selected: Vec::new(),
        steps: Vec::new(),
        audit: None,
        replays: Vec::new(),
    };

    // 1. one record per hop
    let mut chosen: Vec<&InteractionRecord> = Vec::new();
    let mut missing = None;
    for (j, hop) in path.windows(2).enumerate() {
        match records
            .iter()
            .find(|r| r.sender_id == hop[0] && r.receiver_id == hop[1])
        {
            Some(r) => chosen.push(r),
            None => {
                missing = Some((j as u64 + 1, format!("no record for hop {} -> {}", hop[0], hop[1])));
                break;
            }
        }
    }
    report.selected = chosen.iter().map(|r| r.seq).collect();
    let selected_ok = missing.is_none();
    report.steps.push(outcome(
        1,
        "select",
        missing,
        format!("{} records", chosen.len()),
    ));
    if !selected_ok || chosen.is_empty() {
        return Ok(report);
    }

    // 2. integrity of the span covering the selected records
    let lo = chosen.iter().map(|r| r.seq).min().expect("non-empty");
    let hi = chosen.iter().map(|r| r.seq).max().expect("non-empty");
    let span: Vec<InteractionRecord> = records
        .iter()
        .filter(|r| (lo..=hi).contains(&r.seq))
        .cloned()
        .collect();
    let start = records.iter().position(|r| r.seq == lo).expect("selected");
    let at = match start.checked_sub(1) {
        Some(i) => Checkpoint::after(&records[i]),
        None => Checkpoint {
            next_seq: lo,
            prev_hash: records[start].prev_hash,
        },
    };
    let a = audit_from(&span, at, keys);
    let bad = (!a.ok).then(|| {
        (
            a.first_bad_seq.unwrap_or(lo),
            format!("audit {}", a.failure.map_or("FAILED", |f| f.as_str())),
        )
    });
    report
        .steps
        .push(outcome(2, "integrity", bad, format!("seq {lo}..={hi} intact")));
    report.audit = Some(a);

    // 3. disclosures against commitments
    let mut bad = None;
    for r in &chosen {
        let d = disclosures
            .get(&r.seq)
            .ok_or(ForensicError::MissingDisclosure(r.seq))?;
        if bad.is_none() {
            if crypto::digest(&d.input) != r.input_commitment {
                bad = Some((r.seq, "disclosed input does not match commitment".to_owned()));
            } else if crypto::digest(&d.output) != r.output_commitment {
                bad = Some((r.seq, "disclosed output does not match commitment".to_owned()));
            }
        }
    }
    report
        .steps
        .push(outcome(3, "commitments", bad, "all disclosures match".into()));

    // 4. certificate hashes at record time
    let mut bad = None;
    for r in &chosen {
        for (id, h, role) in [
            (&r.sender_id, r.sender_cert_hash, "sender"),
            (&r.receiver_id, r.receiver_cert_hash, "receiver"),
        ] {
            let ok = cert_at(certs, id, r.timestamp).is_some_and(|c| c.fingerprint() == h);
            if !ok && bad.is_none() {
                bad = Some((r.seq, format!("{role} certificate hash mismatch for {id}")));
            }
        }
    }
    report
        .steps
        .push(outcome(4, "certificates", bad, "certificate hashes match".into()));

    // 5. replay receivers that committed to reproducibility
    let mut bad = None;
    let mut skipped = 0usize;
    for r in &chosen {
        let Some(cert) = cert_at(certs, &r.receiver_id, r.timestamp) else {
            bad.get_or_insert((r.seq, format!("no certificate for {}", r.receiver_id)));
            continue;
        };
        if cert.repro.level == ReproLevel::None {
            skipped += 1;
            continue;
        }
        let check = replay(r, cert, &disclosures[&r.seq]);
        if !check.passed && bad.is_none() {
            bad = Some((r.seq, format!("replay diverged: {}", check.detail)));
        }
        report.replays.push((r.seq, check));
    }
    report.steps.push(outcome(
        5,
        "replay",
        bad,
        format!("{} replays verified, {skipped} skipped", report.replays.len()),
    ));
    Ok(report)
}
