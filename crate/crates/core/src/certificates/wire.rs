//! Certificate wire format: deterministic CBOR of the field tuple in
//! declaration order, optionally wrapped in a PEM-like text envelope.

use base64::Engine;
use ciborium::value::Value;

use super::{
    CertError, Certificate, GovernanceLevel, ModelBinding, NodeType, Rate, ReproCommitment, Tier,
    TrustConstraints,
};
use crate::cbor::{self, Fields};

pub const PEM_BEGIN: &str = "-----BEGIN AGENT CERT-----";
pub const PEM_END: &str = "-----END AGENT CERT-----";

const BODY_FIELDS: usize = 11;

fn body_values(c: &Certificate) -> Vec<Value> {
    let k = &c.constraints;
    vec![
        cbor::text(&c.id),
        cbor::text(&c.parent_id),
        cbor::bytes(c.public_key.as_ref()),
        cbor::array(vec![
            cbor::text(&c.model.provider),
            cbor::text(&c.model.model_id),
            cbor::text(&c.model.model_ver),
        ]),
        cbor::bytes(c.manifest_hash.as_ref()),
        cbor::array(vec![
            cbor::uint(k.max_tier.index().into()),
            cbor::uint(k.max_depth.into()),
            cbor::array(k.allowed_models.iter().map(|m| cbor::text(m)).collect()),
            cbor::array(vec![cbor::uint(k.max_rate.numer()), cbor::uint(k.max_rate.denom())]),
        ]),
        cbor::array(vec![
            cbor::text(c.repro.level.as_str()),
            cbor::array(
                c.repro
                    .config
                    .iter()
                    .map(|(key, v)| cbor::array(vec![cbor::text(key), cbor::text(v)]))
                    .collect(),
            ),
        ]),
        cbor::text(c.governance_level.as_str()),
        cbor::text(c.node_type.as_str()),
        cbor::uint(c.not_before),
        cbor::uint(c.not_after),
    ]
}

pub(super) fn body_bytes(c: &Certificate) -> Vec<u8> {
    cbor::encode(&cbor::array(body_values(c)))
}

pub fn encode_certificate(c: &Certificate) -> Vec<u8> {
    let mut fields = body_values(c);
    fields.push(cbor::bytes(c.issuer_signature.as_ref()));
    cbor::encode(&cbor::array(fields))
}

fn malformed(msg: impl Into<String>) -> CertError {
    CertError::Malformed(msg.into())
}

pub fn decode_certificate(bytes: &[u8]) -> Result<Certificate, CertError> {
    let mut f = Fields::new(cbor::decode(bytes)?, BODY_FIELDS + 1, "certificate")?;
    let id = f.text()?;
    let parent_id = f.text()?;
    let public_key = f.public_key()?;

    let mut m = Fields::new(f.value()?, 3, "model binding")?;
    let model = ModelBinding {
        provider: m.text()?,
        model_id: m.text()?,
        model_ver: m.text()?,
    };
    let manifest_hash = f.digest()?;

    let mut k = Fields::new(f.value()?, 4, "trust constraints")?;
    let max_tier = Tier::from_index(k.uint()?).ok_or_else(|| malformed("tier out of range"))?;
    let max_depth = u32::try_from(k.uint()?).map_err(|_| malformed("depth out of range"))?;
    let models = k.text_list()?;
    if models.windows(2).any(|w| w[0] >= w[1]) {
        return Err(malformed("allowed_models not strictly sorted"));
    }
    let mut r = Fields::new(k.value()?, 2, "rate")?;
    let (numer, denom) = (r.uint()?, r.uint()?);
    let max_rate = Rate::new(numer, denom).map_err(|e| malformed(e.to_string()))?;
    if (max_rate.numer(), max_rate.denom()) != (numer, denom) {
        return Err(malformed("rate not in lowest terms"));
    }
    let constraints = TrustConstraints {
        max_tier,
        max_depth,
        allowed_models: models.into_iter().collect(),
        max_rate,
    };

    let mut rp = Fields::new(f.value()?, 2, "repro commitment")?;
    let level = rp.text()?.parse().map_err(|e: CertError| malformed(e.to_string()))?;
    let mut config = std::collections::BTreeMap::new();
    let mut last: Option<String> = None;
    for pair in rp.array()? {
        let mut p = Fields::new(pair, 2, "repro config entry")?;
        let key = p.text()?;
        if last.as_ref().is_some_and(|l| l >= &key) {
            return Err(malformed("repro config keys not strictly sorted"));
        }
        last = Some(key.clone());
        config.insert(key, p.text()?);
    }
    let repro = ReproCommitment { level, config };

    let governance_level: GovernanceLevel = f
        .text()?
        .parse()
        .map_err(|e: CertError| malformed(e.to_string()))?;
    let node_type: NodeType = f.text()?.parse().map_err(|e: CertError| malformed(e.to_string()))?;
    let not_before = f.uint()?;
    let not_after = f.uint()?;
    let issuer_signature = f.signature()?;

    Ok(Certificate {
        id,
        parent_id,
        public_key,
        model,
        manifest_hash,
        constraints,
        repro,
        governance_level,
        node_type,
        not_before,
        not_after,
        issuer_signature,
    })
}

pub fn to_pem(c: &Certificate) -> String {
    let b64 = base64::engine::general_purpose::STANDARD.encode(encode_certificate(c));
    let mut out = String::with_capacity(b64.len() + 64);
    out.push_str(PEM_BEGIN);
    out.push('\n');
    for chunk in b64.as_bytes().chunks(64) {
        out.push_str(std::str::from_utf8(chunk).expect("base64 is ascii"));
        out.push('\n');
    }
    out.push_str(PEM_END);
    out.push('\n');
    out
}

/// All certificate blocks in `text`, in order.
pub fn from_pem_many(text: &str) -> Result<Vec<Certificate>, CertError> {
    let mut certs = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find(PEM_BEGIN) {
        let after = &rest[start + PEM_BEGIN.len()..];
        let end = after
            .find(PEM_END)
            .ok_or_else(|| malformed("missing END marker"))?;
        let b64: String = after[..end].chars().filter(|c| !c.is_whitespace()).collect();
        let raw = base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| malformed(format!("base64: {e}")))?;
        certs.push(decode_certificate(&raw)?);
        rest = &after[end + PEM_END.len()..];
    }
    if certs.is_empty() {
        return Err(malformed("no certificate block found"));
    }
    Ok(certs)
}

pub fn from_pem(text: &str) -> Result<Certificate, CertError> {
    let mut certs = from_pem_many(text)?;
    if certs.len() != 1 {
        return Err(malformed(format!("expected one certificate, found {}", certs.len())));
    }
    Ok(certs.remove(0))
}
