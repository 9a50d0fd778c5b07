use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use govkit::certificates::{
    issue_certificate, issue_root, manifest_hash, to_pem, CertError, Certificate, GovernanceLevel, ModelBinding,
    NodeType, ReproCommitment, SkillsManifest, SubjectFields, Tier, TrustConstraints,
};
use govkit::crypto::{self, Digest, PublicKey};
use govkit::harness::{
    measure_overhead, run_attack, run_baseline_comparison, run_clean_pipeline, tamper_output_commitment,
    GovernanceMode, Pipeline, PipelineConfig, Resign, Scenario,
};
use govkit::ledger::{
    audit_bytes, decode_frames, Durability, Ledger, Marker, RecordDraft, ReproAnchor,
};
use govkit::repro::{
    approximate_budget, calibrate_thresholds, chain_verifiability_depth, effective_verification_depth,
    replay_verify, LabeledScores, PairLabel, ReplayError, SeededGenerator, VerificationBudget,
};
use govkit::verifier::{Credential, RevocationRegistry, RuntimeState, TrustAnchors, Verifier};

use crate::support::*;
use crate::{BudgetArgs, CertCommand, Command, KeySource, LedgerCommand, SimulateArgs, TamperMode};

const YEAR_MS: u64 = 365 * 24 * 3600 * 1000;

pub fn run(cmd: Command, now: Option<u64>) -> CliResult {
    let now = now_ms(now);
    match cmd {
        Command::Keygen { seed, out, id } => keygen(seed, out, id),
        Command::Cert(c) => cert(c, now),
        Command::Verify {
            chain,
            manifest,
            credential_tier,
            credential_id,
            roots,
            revocations,
            model,
        } => {
            let tier: Tier = credential_tier.parse()?;
            let chain = read_certs(&chain)?;
            let manifest: SkillsManifest = read_json(&manifest)?;
            let roots = read_certs(&[or_home(roots, "roots.pem")])?;
            let anchors = TrustAnchors::from_certs(roots.iter().filter(|c| c.is_self_signed()));
            let revocations = RevocationRegistry::load(&or_home(revocations, "revocations.jsonl"))?;
            let model: Option<ModelBinding> = model.as_deref().map(read_json).transpose()?;
            let runtime = RuntimeState {
                manifest: &manifest,
                model: model.as_ref(),
            };
            let credential = Credential::new(&credential_id, tier);
            let d = Verifier::new(&anchors, &revocations).verify(&chain, &credential, &runtime, now);
            let leaf = chain.last().map(|c| c.id.clone());
            let text = format!("{} {}", verdict_word(d.is_allow()), d.reason.as_str());
            Ok(Outcome::ok(json!({
                "verdict": d.verdict,
                "reason": d.reason,
                "phase": d.phase,
                "agent": leaf,
                "credential": credential,
                "chain": chain.iter().map(|c| &c.id).collect::<Vec<_>>(),
            }))?
            .flagged(!d.is_allow())
            .text(text))
        }
        Command::Ledger(c) => ledger(c, now),
        Command::ReplayVerify {
            cert,
            ledger,
            seq,
            input,
            output,
        } => replay(&cert, &or_home(ledger, "ledger.bin"), seq, &input, &output),
        Command::Budget(args) => budget(args),
        Command::Calibrate { pairs } => calibrate(&pairs),
        Command::Cvd { chain, ledger } => {
            let chain = read_certs(&chain)?;
            let cvd = chain_verifiability_depth(&chain)?;
            let Some(ledger) = ledger else {
                return Outcome::ok(json!({ "n": chain.len() - 1, "cvd": cvd }));
            };
            let records = Ledger::load(&ledger)?;
            let path: Vec<&str> = chain.iter().map(|c| c.id.as_str()).collect();
            let report = effective_verification_depth(&chain, &path, records.records())?;
            Ok(Outcome::ok(json!({
                "n": report.n,
                "cvd": report.cvd,
                "cad": report.cad,
                "effective": report.effective,
                "partial": report.partial(),
            }))?)
        }
        Command::Simulate(args) => simulate(args),
    }
}

fn verdict_word(allow: bool) -> &'static str {
    if allow {
        "ALLOW"
    } else {
        "DENY"
    }
}

fn keygen(seed: Option<String>, out: Option<PathBuf>, id: Option<String>) -> CliResult {
    let kp = match &seed {
        Some(s) => {
            let bytes = match hex::decode(s) {
                Ok(b) if b.len() == crypto::SEED_LEN => b,
                _ => crypto::digest(s.as_bytes()).0.to_vec(),
            };
            crypto::generate_keypair(&bytes)?
        }
        None => crypto::generate_keypair_os(),
    };
    let file = KeyFile::new(id.clone(), &kp);
    let path = out.or_else(|| id.as_ref().map(|i| home().join("keys").join(format!("{i}.json"))));
    let Some(path) = path else {
        return Outcome::ok(&file);
    };
    write_file(&path, serde_json::to_string_pretty(&file)?.as_bytes())?;
    Outcome::ok(json!({
        "id": id,
        "public_key": kp.public_key(),
        "path": path.display().to_string(),
    }))
}

/// Subject fields as written by hand; keys, hashes and validity default
/// from other flags.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubjectSpec {
    id: String,
    #[serde(default)]
    public_key: Option<PublicKey>,
    model: ModelBinding,
    #[serde(default)]
    manifest_hash: Option<Digest>,
    constraints: TrustConstraints,
    repro: ReproCommitment,
    governance_level: GovernanceLevel,
    node_type: NodeType,
    #[serde(default)]
    not_before: Option<u64>,
    #[serde(default)]
    not_after: Option<u64>,
}

fn cert_summary(c: &Certificate) -> serde_json::Value {
    let mut v = serde_json::to_value(c).expect("certificates serialize");
    v["fingerprint"] = json!(c.fingerprint());
    v["self_signed"] = json!(c.is_self_signed());
    v
}

fn cert(cmd: CertCommand, now: u64) -> CliResult {
    match cmd {
        CertCommand::Issue {
            subject,
            subject_key,
            manifest,
            issuer_cert,
            issuer_key,
            root,
            out,
        } => {
            let spec: SubjectSpec = read_json(&subject)?;
            let issuer_key = read_key(&issuer_key)?;
            let public_key = match (&subject_key, spec.public_key) {
                (Some(p), _) => read_key(p)?.public_key(),
                (None, Some(k)) => k,
                (None, None) if root => issuer_key.public_key(),
                (None, None) => return fail("subject has no public_key; pass --subject-key"),
            };
            let manifest_hash = match (&manifest, spec.manifest_hash) {
                (Some(p), _) => manifest_hash(&read_json::<SkillsManifest>(p)?)?,
                (None, Some(h)) => h,
                (None, None) => return fail("subject has no manifest_hash; pass --manifest"),
            };
            let not_before = spec.not_before.unwrap_or(now);
            let fields = SubjectFields {
                id: spec.id,
                public_key,
                model: spec.model,
                manifest_hash,
                constraints: spec.constraints,
                repro: spec.repro,
                governance_level: spec.governance_level,
                node_type: spec.node_type,
                not_before,
                not_after: spec.not_after.unwrap_or(not_before.saturating_add(YEAR_MS)),
            };
            let cert = if root {
                issue_root(fields, &issuer_key)?
            } else {
                let path = issuer_cert.expect("clap requires --issuer-cert without --root");
                let issuers = read_certs(&[path])?;
                let issuer = issuers.last().expect("read_certs rejects empty files");
                let reason = match issue_certificate(issuer, &issuer_key, fields, now) {
                    Ok(c) => Ok(c),
                    Err(CertError::TypeConstraint) => Err("TYPE_CONSTRAINT"),
                    Err(CertError::ConstraintViolation) => Err("CONSTRAINT_VIOLATION"),
                    Err(CertError::DepthExhausted) => Err("DEPTH_EXHAUSTED"),
                    Err(CertError::ExpiredIssuer { .. }) => Err("EXPIRED_ISSUER"),
                    Err(e) => return Err(e.into()),
                };
                match reason {
                    Ok(c) => c,
                    Err(reason) => {
                        return Ok(Outcome::ok(json!({ "issued": false, "issuer": issuer.id, "reason": reason }))?
                            .flagged(true)
                            .text(format!("REFUSED {reason}")))
                    }
                }
            };
            let pem = to_pem(&cert);
            let mut payload = json!({
                "issued": true,
                "id": cert.id,
                "parent_id": cert.parent_id,
                "fingerprint": cert.fingerprint(),
            });
            match out {
                Some(p) => {
                    write_file(&p, pem.as_bytes())?;
                    payload["path"] = json!(p.display().to_string());
                    Outcome::ok(payload)
                }
                None => {
                    payload["pem"] = json!(pem);
                    Ok(Outcome::ok(payload)?.text(pem.trim_end().to_owned()))
                }
            }
        }
        CertCommand::Inspect { files } => {
            let certs = read_certs(&files)?;
            Outcome::ok(json!({ "certificates": certs.iter().map(cert_summary).collect::<Vec<_>>() }))
        }
        CertCommand::ManifestHash { manifest } => {
            let m: SkillsManifest = read_json(&manifest)?;
            let h = manifest_hash(&m)?;
            Ok(Outcome::ok(json!({ "manifest_hash": h, "entries": m.entries.len() }))?.text(h.to_hex()))
        }
        CertCommand::Revoke { id, registry } => {
            let path = or_home(registry, "revocations.jsonl");
            let mut reg = RevocationRegistry::load(&path)?;
            reg.revoke_persistent(&path, &id, now)?;
            Outcome::ok(json!({
                "cert_id": id,
                "revoked_at": reg.revoked_at(&id),
                "registry": path.display().to_string(),
            }))
        }
    }
}

/// A record as supplied to `ledger append`: plaintext exchange or
/// precomputed commitments.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DraftSpec {
    #[serde(default)]
    timestamp: Option<u64>,
    sender_id: String,
    receiver_id: String,
    sender_cert_hash: Digest,
    receiver_cert_hash: Digest,
    #[serde(default)]
    input: Option<String>,
    #[serde(default)]
    output: Option<String>,
    #[serde(default)]
    input_commitment: Option<Digest>,
    #[serde(default)]
    output_commitment: Option<Digest>,
    anchor: ReproAnchor,
    #[serde(default)]
    markers: BTreeSet<Marker>,
}

fn commitment(text: Option<String>, digest: Option<Digest>, name: &str) -> Result<Digest, CliError> {
    match (text, digest) {
        (Some(t), None) => Ok(crypto::digest(t.as_bytes())),
        (None, Some(d)) => Ok(d),
        _ => fail(format!("record needs exactly one of {name} and {name}_commitment")),
    }
}

fn key_directory(src: &KeySource) -> Result<BTreeMap<String, PublicKey>, CliError> {
    let mut keys: BTreeMap<String, PublicKey> = match &src.keys {
        Some(p) => read_json(p)?,
        None => BTreeMap::new(),
    };
    for c in read_certs(&src.certs)? {
        keys.insert(c.id, c.public_key);
    }
    Ok(keys)
}

fn ledger(cmd: LedgerCommand, now: u64) -> CliResult {
    match cmd {
        LedgerCommand::Append {
            ledger,
            record,
            sender_key,
            receiver_key,
        } => {
            let path = or_home(ledger, "ledger.bin");
            let spec: DraftSpec = read_json(&record)?;
            let draft = RecordDraft {
                timestamp: spec.timestamp.unwrap_or(now),
                input_commitment: commitment(spec.input, spec.input_commitment, "input")?,
                output_commitment: commitment(spec.output, spec.output_commitment, "output")?,
                sender_id: spec.sender_id,
                receiver_id: spec.receiver_id,
                sender_cert_hash: spec.sender_cert_hash,
                receiver_cert_hash: spec.receiver_cert_hash,
                anchor: spec.anchor,
                markers: spec.markers,
            };
            let sender = read_key(&sender_key)?;
            let receiver = read_key(&receiver_key)?;
            let _lock = lock_ledger(&path)?;
            let mut l = Ledger::open(&path, Durability::Durable)?;
            let r = l.append(draft, &sender, &receiver)?;
            Outcome::ok(json!({
                "seq": r.seq,
                "record_hash": r.record_hash(),
                "prev_hash": r.prev_hash,
                "ledger": path.display().to_string(),
            }))
        }
        LedgerCommand::Audit { ledger, keys } => {
            let path = or_home(ledger, "ledger.bin");
            let keys = key_directory(&keys)?;
            let bytes = read_bytes(&path)?;
            let report = audit_bytes(&bytes, &keys);
            let text = match (report.failure, report.first_bad_seq) {
                (Some(f), Some(s)) => format!("FAIL {} at seq {s} ({} records verified)", f.as_str(), report.records_checked),
                _ => format!("OK {} records", report.records_checked),
            };
            Ok(Outcome::ok(&report)?.flagged(!report.ok).text(text))
        }
        LedgerCommand::Export { ledger, out } => {
            let path = or_home(ledger, "ledger.bin");
            let scan = decode_frames(&read_bytes(&path)?);
            if let Some((frame, msg)) = scan.error {
                return fail(format!("{}: frame {frame}: {msg}", path.display()));
            }
            let l = Ledger::from_records(scan.records);
            let mut buf = Vec::new();
            l.export_jsonl(&mut buf)?;
            let jsonl = String::from_utf8(buf)?;
            match out {
                Some(p) => {
                    write_file(&p, jsonl.as_bytes())?;
                    Outcome::ok(json!({ "records": l.len(), "path": p.display().to_string() }))
                }
                None => {
                    let records: Vec<serde_json::Value> =
                        l.records().iter().map(serde_json::to_value).collect::<Result<_, _>>()?;
                    let text = l
                        .records()
                        .iter()
                        .map(|r| format!("{} {} -> {} {}", r.seq, r.sender_id, r.receiver_id, r.record_hash()))
                        .collect::<Vec<_>>()
                        .join("\n");
                    Ok(Outcome::ok(json!({ "records": records }))?.text(text))
                }
            }
        }
        LedgerCommand::TamperDemo {
            agents,
            seed,
            seq,
            mode,
            out_dir,
        } => tamper_demo(agents, seed, seq, mode, out_dir),
    }
}

fn tamper_demo(agents: usize, seed: u64, seq: Option<u64>, mode: TamperMode, out_dir: Option<PathBuf>) -> CliResult {
    if agents == 0 {
        return fail("--agents must be at least 1");
    }
    let mut p = Pipeline::new(PipelineConfig::new(agents, seed))?;
    p.run_script();
    let records = p.ledger.records();
    let k = match seq {
        Some(s) if s >= 1 && s as usize <= records.len() => s as usize - 1,
        Some(s) => return fail(format!("seq {s} outside 1..={}", records.len())),
        None => records.len() / 2,
    };
    let target = &records[k];
    let sender = p.pki.key(&target.sender_id);
    let receiver = p.pki.key(&target.receiver_id);
    let resign = match mode {
        TamperMode::Edit => Resign::None,
        TamperMode::ResignSender => Resign::Sender(sender),
        TamperMode::ResignBoth => Resign::Both(sender, receiver),
    };
    let keys = p.key_directory();
    let clean = p.ledger.to_bytes();
    let tampered = tamper_output_commitment(records, k, resign);
    let before = audit_bytes(&clean, &keys);
    let after = audit_bytes(&tampered, &keys);
    if let Some(dir) = &out_dir {
        write_file(&dir.join("clean.ledger"), &clean)?;
        write_file(&dir.join("tampered.ledger"), &tampered)?;
        write_file(&dir.join("keys.json"), serde_json::to_string_pretty(&keys)?.as_bytes())?;
    }
    let mode_name = match mode {
        TamperMode::Edit => "edit",
        TamperMode::ResignSender => "resign-sender",
        TamperMode::ResignBoth => "resign-both",
    };
    let detected = !after.ok;
    let text = match (after.failure, after.first_bad_seq) {
        (Some(f), Some(s)) => format!(
            "tampered seq {} ({mode_name}): detected {} at seq {s}",
            k + 1,
            f.as_str()
        ),
        _ => format!("tampered seq {} ({mode_name}): not detected", k + 1),
    };
    Ok(Outcome::ok(json!({
        "agents": agents,
        "seed": seed,
        "records": records.len(),
        "tampered_seq": k + 1,
        "mode": mode_name,
        "before": before,
        "after": after,
        "detected": detected,
    }))?
    .flagged(detected)
    .text(text))
}

fn replay(cert: &Path, ledger: &Path, seq: u64, input: &Path, output: &Path) -> CliResult {
    let l = Ledger::load(ledger)?;
    let Some(record) = l.records().iter().find(|r| r.seq == seq) else {
        return fail(format!("{}: no record with seq {seq}", ledger.display()));
    };
    let certs = read_certs(&[cert.to_owned()])?;
    let Some(cert) = certs.iter().find(|c| c.id == record.receiver_id) else {
        return fail(format!("no certificate for receiver {}", record.receiver_id));
    };
    let input = read_bytes(input)?;
    let output = read_text(output)?;
    let mismatch = |what: &str| {
        Ok(Outcome::ok(json!({ "seq": seq, "agent": cert.id, "verdict": what }))?
            .flagged(true)
            .text(what.to_owned()))
    };
    if crypto::digest(output.as_bytes()) != record.output_commitment {
        return mismatch("OUTPUT_COMMITMENT_MISMATCH");
    }
    let executor = SeededGenerator::new(cert.model.clone());
    match replay_verify(cert, record, &output, &input, &executor) {
        Ok(v) => {
            let text = v.verdict.as_str().to_owned();
            let flagged = v.verdict == govkit::repro::Verdict::Violation;
            Ok(Outcome::ok(json!({
                "seq": seq,
                "agent": cert.id,
                "verdict": v.verdict,
                "theta": v.theta,
                "report": v.report,
            }))?
            .flagged(flagged)
            .text(text))
        }
        Err(ReplayError::InputCommitmentMismatch) => mismatch("INPUT_COMMITMENT_MISMATCH"),
        Err(e) => fail(e.to_string()),
    }
}

fn budget(args: BudgetArgs) -> CliResult {
    let alpha = args.alpha;
    let b = match (args.target.n, args.target.epsilon) {
        (Some(n), _) => VerificationBudget::for_trials(n, alpha)?,
        (None, Some(eps)) => {
            let b = VerificationBudget::for_epsilon(eps, alpha)?;
            let approx = approximate_budget(eps, alpha)?;
            let text = format!("n: {}\nalpha: {alpha}\nepsilon: {:.6}\napproximate_n: {approx}", b.n, b.epsilon);
            return Ok(Outcome::ok(json!({
                "n": b.n,
                "alpha": alpha,
                "epsilon": b.epsilon,
                "target_epsilon": eps,
                "approximate_n": approx,
            }))?
            .text(text));
        }
        (None, None) => return fail("pass --n or --epsilon"),
    };
    let text = format!("n: {}\nalpha: {alpha}\nepsilon: {:.6}", b.n, b.epsilon);
    Ok(Outcome::ok(b)?.text(text))
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum LabelIn {
    #[serde(alias = "same", alias = "SAME_MODEL")]
    SameModel,
    #[serde(alias = "cross", alias = "CROSS_MODEL")]
    CrossModel,
}

#[derive(Deserialize)]
struct PairIn {
    text_a: String,
    text_b: String,
    label: LabelIn,
}

fn calibrate(pairs: &Path) -> CliResult {
    let text = read_text(pairs)?;
    let mut scored = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: PairIn = serde_json::from_str(line)
            .map_err(|e| CliError(format!("{}:{}: {e}", pairs.display(), i + 1)))?;
        let label = match p.label {
            LabelIn::SameModel => PairLabel::SameModel,
            LabelIn::CrossModel => PairLabel::CrossModel,
        };
        scored.push(LabeledScores::from_texts(&p.text_a, &p.text_b, label));
    }
    let report = calibrate_thresholds(&scored)?;
    Outcome::ok(&report)
}

fn simulate(args: SimulateArgs) -> CliResult {
    let mode: GovernanceMode = args.mode.parse()?;
    if args.agents == 0 {
        return fail("--agents must be at least 1");
    }
    let cfg = PipelineConfig::new(args.agents, args.seed).mode(mode);
    let (payload, flagged, text) = if args.overhead {
        let r = measure_overhead(&[5, 10, 20], args.repetitions.max(1), Duration::ZERO)?;
        let mut lines = Vec::new();
        for row in &r.rows {
            lines.push(format!(
                "{} agents: {:.1} us per run ({:.1} per agent), G3 share {:.0}%, {} bytes",
                row.agents,
                row.median.total_us,
                row.per_agent_us,
                row.g3_share * 100.0,
                row.storage_bytes
            ));
        }
        (serde_json::to_value(&r)?, false, Some(lines.join("\n")))
    } else if args.baseline {
        let m = run_baseline_comparison(&cfg, &Scenario::END_TO_END)?;
        let lines: Vec<String> = m
            .rows
            .iter()
            .map(|r| format!("{}: {}/{} detected", r.mode, r.detected_count, m.scenarios.len()))
            .collect();
        (serde_json::to_value(&m)?, false, Some(lines.join("\n")))
    } else {
        let report = match &args.attack {
            Some(a) => run_attack(&cfg, a.parse::<Scenario>()?)?,
            None => run_clean_pipeline(&cfg)?,
        };
        let flagged = !report.detections.is_empty();
        (serde_json::to_value(&report)?, flagged, None)
    };
    if let Some(path) = &args.report {
        write_file(path, serde_json::to_string_pretty(&payload)?.as_bytes())?;
    }
    let mut out = Outcome::ok(payload)?.flagged(flagged);
    out.text = text;
    Ok(out)
}
