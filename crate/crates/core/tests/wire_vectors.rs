//! Frozen encodings cross-checked against an independent CBOR and Ed25519
//! implementation. Keys come from `fixtures::key_for`.

use std::collections::{BTreeMap, BTreeSet};

use govkit::certificates::{
    canonical_encode, decode_certificate, encode_certificate, from_pem, manifest_hash, sign_unchecked,
    to_pem, GovernanceLevel, ModelBinding, NodeType, Rate, ReproCommitment, ReproLevel, SkillEntry,
    SkillsManifest, SubjectFields, Tier, TrustConstraints,
};
use govkit::crypto::{digest, Digest};
use govkit::fixtures::key_for;
use govkit::ledger::{Ledger, Marker, RecordDraft, ReproAnchor};

const MANIFEST_CBOR: &str = "82846a7064665f72656164657265302e392e3158204d12dc2c879dfa45084ea06704783d16fb7ce31d82635c2eaf539a94e55c0dd0816766733a72656164846a7765625f73656172636865312e322e3058202d381bc969240c3116d10fec8b425cf05193971462cd56deb43ebfcc5af9911682676e65743a646e73696e65743a6874747073";
const MANIFEST_HASH: &str = "930c728275f4659620e725fea008a7f59b950a66fcd5602930eed78f71fbbdaa";
const CERT_BODY: &str = "8b676167656e742d37636f7267582016b1dfb95b6d04ca107aec3452091090a6a780fc96e55db7198bf78042d6579c8369616e7468726f7069636f636c617564652d736f6e6e65742d346a323032352d30352d31345820930c728275f4659620e725fea008a7f59b950a66fcd5602930eed78f71fbbdaa8402018270636c617564652d6861696b752d342d356f636c617564652d736f6e6e65742d34820502826b737461746973746963616c82826b74656d706572617475726561308265746865746164302e38356a4c325f73616d706c65646241471b0000019b76daa8001b000001a2ce8bd400";
const CERT_SIG: &str = "951a2d949d0bdfbcb5b68d4d50b6f3a77869ce41df2c789ca066b01bd7bafdfe1fcd71964883c6ab1df5c458fd1c428c21bc47af552b8a6f09746232cef38401";
const CERT_FINGERPRINT: &str = "53a7307e1247d477db70025c02a68d01bf738e455c33f4330fd24ab7d170dc3a";
const RECORD_BODY: &str = "8b011b0000019b76daabe8676167656e742d37676167656e742d3858204c6d8bdbb751a35eee18487d683c01906860be20ca1845e6d5c61566f15e6bbf58208a7bf4f3e9a7a2822d9c63a25d291c01b1922a4ee245a9c4715b6fbd7883c2645820f7c39aa7e478d51b7d49669703d94df49f158ea1d73b58760601f9c1857c4bdf5820dccdea4f4696c420533a3471a9617fb5a3b3337e702b93f6fcb4213821fedf9683182a6a323032352d30352d31345820930c728275f4659620e725fea008a7f59b950a66fcd5602930eed78f71fbbdaa5820000000000000000000000000000000000000000000000000000000000000000081755041525449414c5f5645524946494142494c495459";
const RECORD_SENDER_SIG: &str = "750538da67f3c9403b3ed859273d5f053729a72812774eb69ad08d78f9c8ba106e590a78925b7e544ea8ccad899dd95f87de48b9cf78e6faa2552c57a0ac7c0f";
const RECORD_RECEIVER_SIG: &str = "95addca757ba1ac16c9211f3ec83adf283f23f202dc9cf33cce09a0df2065b596b508c32508e10c99fc466cbe7ea321ad2566aa74be1398495d4eb6020cef405";
const RECORD_HASH: &str = "9254ae79c52c5747e22c95e334c826a4793af3c7c87ea165526df0a7f4b184f6";

fn manifest() -> SkillsManifest {
    // out of order, with scopes to be sorted
    SkillsManifest::new(vec![
        SkillEntry::from_source("web_search", "1.2.0", b"web_search source", &["net:https", "net:dns", "net:https"]),
        SkillEntry::from_descriptor("pdf_reader", "0.9.1", "{\"pages\":\"int\"}", &["fs:read"]),
    ])
}

fn subject() -> SubjectFields {
    SubjectFields {
        id: "agent-7".into(),
        public_key: key_for("golden-subject").public_key(),
        model: ModelBinding::new("anthropic", "claude-sonnet-4", "2025-05-14"),
        manifest_hash: manifest_hash(&manifest()).unwrap(),
        constraints: TrustConstraints::new(
            Tier::T2,
            1,
            &["claude-sonnet-4", "claude-haiku-4-5"],
            // stored reduced, as 5/2
            Rate::new(10, 4).unwrap(),
        ),
        repro: ReproCommitment::statistical(0.85),
        governance_level: GovernanceLevel::L2Sampled,
        node_type: NodeType::AG,
        not_before: 1_767_225_600_000,
        not_after: 1_798_761_600_000,
    }
}

#[test]
fn manifest_vector() {
    assert_eq!(hex::encode(canonical_encode(&manifest()).unwrap()), MANIFEST_CBOR);
    assert_eq!(manifest_hash(&manifest()).unwrap().to_hex(), MANIFEST_HASH);
}

#[test]
fn certificate_vector() {
    let issuer = key_for("golden-issuer");
    let cert = sign_unchecked(&issuer, "org", subject());
    assert_eq!(hex::encode(cert.body_bytes()), CERT_BODY);
    assert_eq!(cert.issuer_signature.to_hex(), CERT_SIG);
    assert_eq!(cert.fingerprint().to_hex(), CERT_FINGERPRINT);
    assert!(cert.signature_valid_under(&issuer.public_key()));

    let bytes = encode_certificate(&cert);
    assert_eq!(decode_certificate(&bytes).unwrap(), cert);
    assert_eq!(from_pem(&to_pem(&cert)).unwrap(), cert);
    assert_eq!(cert.repro.level, ReproLevel::Statistical);
}

#[test]
fn certificate_decoding_rejects_non_canonical_forms() {
    let cert = sign_unchecked(&key_for("golden-issuer"), "org", subject());
    let bytes = encode_certificate(&cert);
    // trailing byte
    let mut long = bytes.clone();
    long.push(0);
    assert!(decode_certificate(&long).is_err());
    // max_depth 1 written with a one-byte argument instead of inline
    let depth = hex::decode("84020182").unwrap();
    let pos = bytes.windows(4).position(|w| w == depth.as_slice()).unwrap();
    let mut wide = bytes.clone();
    wide.splice(pos + 2..pos + 3, [0x18, 0x01]);
    assert!(decode_certificate(&wide).is_err());
    // truncated
    assert!(decode_certificate(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn record_vector() {
    let sender = key_for("golden-sender");
    let receiver = key_for("golden-receiver");
    let draft = RecordDraft {
        timestamp: 1_767_225_601_000,
        sender_id: "agent-7".into(),
        receiver_id: "agent-8".into(),
        sender_cert_hash: digest(b"s-cert"),
        receiver_cert_hash: digest(b"r-cert"),
        input_commitment: digest(b"input bytes"),
        output_commitment: digest(b"output text"),
        anchor: ReproAnchor {
            seed: 42,
            model_ver: "2025-05-14".into(),
            skills_hash: Digest::from_hex(MANIFEST_HASH).unwrap(),
        },
        markers: BTreeSet::from([Marker::PartialVerifiability]),
    };
    let mut ledger = Ledger::in_memory();
    let rec = ledger.append(draft, &sender, &receiver).unwrap().clone();
    assert_eq!(rec.seq, 1);
    assert_eq!(rec.prev_hash, Digest::ZERO);
    assert_eq!(hex::encode(rec.body_bytes()), RECORD_BODY);
    assert_eq!(rec.sender_sig.to_hex(), RECORD_SENDER_SIG);
    assert_eq!(rec.receiver_sig.to_hex(), RECORD_RECEIVER_SIG);
    assert_eq!(rec.record_hash().to_hex(), RECORD_HASH);
    assert_eq!(ledger.head_hash().to_hex(), RECORD_HASH);

    let keys = BTreeMap::from([
        ("agent-7".to_owned(), sender.public_key()),
        ("agent-8".to_owned(), receiver.public_key()),
    ]);
    assert!(govkit::ledger::audit(&ledger, &keys).ok);
}
