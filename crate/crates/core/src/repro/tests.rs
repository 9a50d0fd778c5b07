use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::certificates::{ReproCommitment, Tier};
use crate::fixtures::{haiku, sonnet, NodeSpec, Pki, EPOCH_MS};
use crate::ledger::{Ledger, Marker, RecordDraft, ReproAnchor};

fn naive_char_match(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let m = a.len().max(b.len());
    if m == 0 {
        return 1.0;
    }
    let mut same = 0;
    for i in 0..a.len().min(b.len()) {
        if a[i] == b[i] {
            same += 1;
        }
    }
    same as f64 / m as f64
}

#[test]
fn char_match_examples() {
    assert_eq!(char_match("abc", "abc"), 1.0);
    assert_eq!(char_match("abc", "abd"), 2.0 / 3.0);
    assert_eq!(char_match("ab", "abcd"), 0.5);
    assert_eq!(char_match("", ""), 1.0);
    assert_eq!(char_match("", "x"), 0.0);
    assert_eq!(char_match("héllo", "hello"), 0.8);
}

#[test]
fn char_match_agrees_with_index_loop() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let alphabet: Vec<char> = "ab c".chars().chain(['é', '漢']).collect();
    for _ in 0..10_000 {
        let mut s = || -> String {
            let len = rng.gen_range(0..12);
            (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
        };
        let (a, b) = (s(), s());
        assert_eq!(char_match(&a, &b), naive_char_match(&a, &b), "{a:?} {b:?}");
    }
}

#[test]
fn word_metric_examples() {
    assert_eq!(jaccard("x y", "y x"), 1.0);
    assert!((jaccard("a b", "b c") - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(jaccard("", ""), 1.0);
    assert_eq!(jaccard("A", "a"), 0.0);
    assert!((ngram_cosine("abcdef", "abcdef", 3) - 1.0).abs() < 1e-12);
    assert_eq!(ngram_cosine("ab", "ab", 3), 1.0);
    assert!((tfidf_cosine("the cat sat", "sat the cat") - 1.0).abs() < 1e-12);
    assert_eq!(tfidf_cosine("alpha", "beta"), 0.0);
}

#[test]
fn tfidf_matches_hand_computation() {
    // shared term weight 1, unique term weight ln(1.5) + 1
    let u = 1.5f64.ln() + 1.0;
    let expected = 1.0 / (1.0 + u * u);
    assert!((tfidf_cosine("a b", "a c") - expected).abs() < 1e-12);
}

#[test]
fn ensemble_rule() {
    let t = "the ledger records every delegation hop";
    let r = ensemble_evaluate(t, t, None);
    assert!(!r.ensemble_flagged);
    assert_eq!(r.thresholds_used.char_match, 0.146);
    assert_eq!(r.thresholds_used.jaccard, 0.408);
    assert_eq!(r.thresholds_used.ngram_cosine, 0.809);
    assert_eq!(r.thresholds_used.tfidf_cosine, 0.837);

    let honest = SeededGenerator::new(sonnet()).execute(b"q", 1, &ExecConfig::new());
    let attack = adversarial_text(b"q", honest.chars().count());
    let r = ensemble_evaluate(&honest, &attack, None);
    assert!(r.ensemble_flagged);
    assert_eq!(r.flagged_by(), Metric::ALL.to_vec());
    assert_eq!(r.char_match, 0.0);
}

fn text_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', ' ', 'é', 'Z']), 0..24)
        .prop_map(|v| v.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]
    #[test]
    fn metrics_symmetric_bounded_reflexive(a in text_strategy(), b in text_strategy()) {
        for m in Metric::ALL {
            let ab = m.score(&a, &b);
            let ba = m.score(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12, "{m} asymmetric");
            prop_assert!((0.0..=1.0).contains(&ab), "{m} out of range: {ab}");
            if !a.trim().is_empty() {
                prop_assert!((m.score(&a, &a) - 1.0).abs() < 1e-12, "{m} self");
            }
        }
    }
}

#[test]
fn budget_table_values() {
    for (n, eps) in [(10, 0.369), (25, 0.168), (100, 0.045), (200, 0.023), (500, 0.009)] {
        let e = epsilon_bound(n, 0.01).unwrap();
        assert!((e - eps).abs() <= 0.001, "n={n}: {e}");
    }
    // exact value rounds to 0.088
    let e50 = epsilon_bound(50, 0.01).unwrap();
    assert!((e50 - 0.087_989_160_644).abs() < 1e-9);
}

#[test]
fn budget_identity_and_monotonicity() {
    for alpha in [0.001, 0.01, 0.05, 0.3] {
        let mut prev = 1.0;
        for n in 1..=1000u64 {
            let e = epsilon_bound(n, alpha).unwrap();
            assert!((e - (1.0 - alpha.powf(1.0 / n as f64))).abs() < 1e-12);
            assert!(e < prev);
            prev = e;
            assert!(required_budget(e, alpha).unwrap() <= n);
        }
    }
    assert!((epsilon_bound(1, 0.05).unwrap() - 0.95).abs() < 1e-12);
}

#[test]
fn required_budget_is_minimal() {
    assert!(required_budget(0.089, 0.01).unwrap() <= 50);
    let n = required_budget(0.5, 0.01).unwrap();
    assert_eq!(n, 7);
    assert!(epsilon_bound(n, 0.01).unwrap() <= 0.5);
    assert!(epsilon_bound(n - 1, 0.01).unwrap() > 0.5);
    assert_eq!(approximate_budget(0.5, 0.01).unwrap(), 10);
}

#[test]
fn budget_domain_errors() {
    assert_eq!(epsilon_bound(0, 0.01), Err(BudgetError::ZeroTrials));
    assert!(epsilon_bound(10, 1.0).is_err());
    assert!(epsilon_bound(10, 0.0).is_err());
    assert!(required_budget(0.0, 0.01).is_err());
    assert!(required_budget(0.1, f64::NAN).is_err());
}

fn scores(v: f64) -> [f64; 4] {
    [v; 4]
}

#[test]
fn calibration_separable() {
    let mut pairs = Vec::new();
    for i in 0..20 {
        let d = i as f64 * 0.005;
        pairs.push(LabeledScores { scores: scores(0.9 - d), label: PairLabel::SameModel });
        pairs.push(LabeledScores { scores: scores(0.1 + d), label: PairLabel::CrossModel });
    }
    let rep = calibrate_thresholds(&pairs).unwrap();
    for c in &rep.metrics {
        assert_eq!(c.youden_j, 1.0);
        assert!(c.threshold > 0.1 + 19.0 * 0.005 && c.threshold < 0.9 - 19.0 * 0.005);
        assert_eq!(c.f1, 1.0);
        assert_eq!(c.cross_model_pass_rate, 0.0);
        assert!(c.cohens_d.unwrap() > 10.0);
        assert!(c.separation.unwrap() > 5.0);
    }
}

#[test]
fn calibration_two_points_and_degenerate() {
    let pairs = [
        LabeledScores { scores: scores(0.8), label: PairLabel::SameModel },
        LabeledScores { scores: scores(0.2), label: PairLabel::CrossModel },
    ];
    let c = calibrate_thresholds(&pairs).unwrap().metric(Metric::CharMatch).clone();
    assert!(c.threshold > 0.2 && c.threshold < 0.8);
    assert_eq!((c.youden_j, c.f1), (1.0, 1.0));
    assert_eq!(c.cohens_d, None);

    let flat: Vec<_> = (0..10)
        .map(|i| LabeledScores {
            scores: scores(0.5),
            label: if i % 2 == 0 { PairLabel::SameModel } else { PairLabel::CrossModel },
        })
        .collect();
    let rep = calibrate_thresholds(&flat).unwrap();
    for c in &rep.metrics {
        assert_eq!(c.youden_j, 0.0);
        assert_eq!(c.cohens_d, None);
        assert_eq!(c.separation, Some(1.0));
    }

    let one = [LabeledScores { scores: scores(0.5), label: PairLabel::SameModel }];
    assert_eq!(calibrate_thresholds(&one), Err(CalibrationError::SingleClass));
}

#[test]
fn cohens_d_pooled_convention() {
    // same: 1,2,3 (mean 2, var 1); cross: 0,0,0,... use 4,5,6 (mean 5, var 1) -> d = -3
    let mk = |v: f64, label| LabeledScores { scores: scores(v / 10.0), label };
    let pairs = [
        mk(1.0, PairLabel::SameModel),
        mk(2.0, PairLabel::SameModel),
        mk(3.0, PairLabel::SameModel),
        mk(4.0, PairLabel::CrossModel),
        mk(5.0, PairLabel::CrossModel),
        mk(6.0, PairLabel::CrossModel),
    ];
    let c = calibrate_thresholds(&pairs).unwrap().metric(Metric::Jaccard).clone();
    assert!((c.cohens_d.unwrap() + 3.0).abs() < 1e-9);
}

// -- replay --

struct Replay {
    pki: Pki,
    record: crate::ledger::InteractionRecord,
    input: Vec<u8>,
    output: String,
}

fn replay_case(repro: ReproCommitment, output: Option<String>) -> Replay {
    let mut pki = Pki::with_root("root", 3);
    pki.issue("root", NodeSpec::agent("coord", Tier::T1, 2)).unwrap();
    pki.issue("coord", NodeSpec::agent("writer", Tier::T2, 1).repro(repro)).unwrap();
    let input = b"summarise the quarterly risk review".to_vec();
    let cert = pki.cert("writer").clone();
    let honest = SeededGenerator::new(sonnet()).execute(&input, 42, &cert.repro.config);
    let output = output.unwrap_or(honest);
    let mut ledger = Ledger::in_memory();
    let draft = RecordDraft::for_exchange(
        EPOCH_MS + 5,
        "coord",
        "writer",
        pki.cert("coord").fingerprint(),
        cert.fingerprint(),
        &input,
        output.as_bytes(),
        ReproAnchor {
            seed: 42,
            model_ver: cert.model.model_ver.clone(),
            skills_hash: cert.manifest_hash,
        },
    );
    let record = ledger.append(draft, pki.key("coord"), pki.key("writer")).unwrap().clone();
    Replay { pki, record, input, output }
}

fn replay(case: &Replay, exec: &dyn ModelExecutor) -> Result<ReplayVerdict, ReplayError> {
    replay_verify(case.pki.cert("writer"), &case.record, &case.output, &case.input, exec)
}

#[test]
fn honest_deterministic_replay_verifies() {
    let case = replay_case(ReproCommitment::full(), None);
    let v = replay(&case, &SeededGenerator::new(sonnet())).unwrap();
    assert_eq!(v.verdict, Verdict::Verified);
    assert_eq!(v.report.unwrap().char_match, 1.0);
}

#[test]
fn substituted_output_is_a_violation() {
    let attack = adversarial_text(b"payload", 180);
    let case = replay_case(ReproCommitment::statistical(0.85), Some(attack));
    let v = replay(&case, &SeededGenerator::new(sonnet())).unwrap();
    assert_eq!(v.verdict, Verdict::Violation);
    assert_eq!(v.theta, Some(0.85));
    assert_eq!(v.report.unwrap().char_match, 0.0);
}

#[test]
fn no_commitment_is_inconclusive() {
    let case = replay_case(ReproCommitment::none(), None);
    let v = replay(&case, &SeededGenerator::new(sonnet())).unwrap();
    assert_eq!(v.verdict, Verdict::Inconclusive);
    assert!(v.report.is_none());
}

#[test]
fn tampered_disclosure_is_rejected_before_replay() {
    let mut case = replay_case(ReproCommitment::full(), None);
    case.input.push(b'!');
    assert_eq!(
        replay(&case, &SeededGenerator::new(sonnet())),
        Err(ReplayError::InputCommitmentMismatch)
    );
}

#[test]
fn executor_must_match_certified_model() {
    let case = replay_case(ReproCommitment::full(), None);
    assert!(matches!(
        replay(&case, &SeededGenerator::new(haiku())),
        Err(ReplayError::ExecutorMismatch { .. })
    ));
}

#[test]
fn noisy_executor_passes_statistical_gate_only() {
    let stat = replay_case(ReproCommitment::statistical(0.85), None);
    let noisy = ParaphraseNoise::new(SeededGenerator::new(sonnet()), 0.05, 9);
    for _ in 0..20 {
        let v = replay(&stat, &noisy).unwrap();
        assert_eq!(v.verdict, Verdict::Verified, "{:?}", v.report);
    }
    let full = replay_case(ReproCommitment::full(), None);
    assert_eq!(replay(&full, &noisy).unwrap().verdict, Verdict::Violation);
}

#[test]
fn deterministic_generator_is_bit_stable() {
    let g = SeededGenerator::new(sonnet());
    let cfg = ReproCommitment::full().config;
    assert_eq!(g.execute(b"x", 3, &cfg), g.execute(b"x", 3, &cfg));
    assert_ne!(g.execute(b"x", 3, &cfg), g.execute(b"x", 4, &cfg));
    assert_eq!(g.class(), crate::certificates::ReproLevel::Full);
}

#[test]
fn distinct_models_never_pass_ten_trials() {
    let (m, m2) = (SeededGenerator::new(sonnet()), SeededGenerator::new(haiku()));
    let cfg = ExecConfig::new();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut max_sim = 0.0f64;
    let mut passes = 0;
    for _ in 0..1000 {
        let all = (0..10).all(|_| {
            let x: [u8; 12] = rng.gen();
            let s = char_match(&m.execute(&x, 1, &cfg), &m2.execute(&x, 1, &cfg));
            max_sim = max_sim.max(s);
            s >= 0.85
        });
        passes += all as u32;
    }
    assert_eq!(passes, 0);
    assert!(max_sim < 0.85);
}

#[test]
fn monte_carlo_small() {
    let rep = monte_carlo_soundness(10, 0.01, 0.85, 2000, 7).unwrap();
    assert!(rep.undetected_rate() <= 0.01, "{rep:?}");
}

// -- depth --

fn chain_with(levels: &[Option<ReproCommitment>]) -> Vec<crate::certificates::Certificate> {
    let mut pki = Pki::with_root("n0", levels.len() as u32 + 1);
    let mut parent = "n0".to_string();
    for (i, lvl) in levels.iter().enumerate() {
        let id = format!("n{}", i + 1);
        let depth = (levels.len() - i - 1) as u32;
        let spec = match lvl {
            Some(r) => NodeSpec::agent(&id, Tier::T2, depth).repro(r.clone()),
            None => NodeSpec::principal(&id, depth),
        };
        pki.issue(&parent, spec).unwrap();
        parent = id;
    }
    pki.chain(&parent)
}

#[test]
fn cvd_examples() {
    let st = || Some(ReproCommitment::statistical(0.85));
    assert_eq!(chain_verifiability_depth(&chain_with(&[st(), st(), st(), st()])).unwrap(), 4);
    let lv = [
        Some(ReproCommitment::full()),
        Some(ReproCommitment::none()),
        Some(ReproCommitment::full()),
    ];
    assert_eq!(chain_verifiability_depth(&chain_with(&lv)).unwrap(), 2);
    assert_eq!(chain_verifiability_depth(&chain_with(&[Some(ReproCommitment::none())])).unwrap(), 1);
    let c = chain_with(&[st()]);
    assert_eq!(chain_verifiability_depth(&c[1..]), Err(DepthError::NotAnchored));
    assert_eq!(chain_verifiability_depth(&[]), Err(DepthError::NotAnchored));
}

fn path_ledger(chain: &[crate::certificates::Certificate], present: &[bool], depth_mark: bool) -> Ledger {
    let ids: Vec<&str> = chain.iter().map(|c| c.id.as_str()).collect();
    let rep = depth_mark.then(|| {
        let all: Vec<bool> = vec![true; present.len()];
        let full = path_ledger(chain, &all, false);
        effective_verification_depth(chain, &ids, full.records()).unwrap()
    });
    let mut l = Ledger::in_memory();
    for (j, hop) in ids.windows(2).enumerate() {
        if !present[j] {
            continue;
        }
        let mut d = RecordDraft::for_exchange(
            EPOCH_MS + j as u64,
            hop[0],
            hop[1],
            chain[j].fingerprint(),
            chain[j + 1].fingerprint(),
            b"in",
            b"out",
            ReproAnchor { seed: 0, model_ver: "v".into(), skills_hash: Default::default() },
        );
        if rep.is_some_and(|r| r.marks_hop(j + 1)) {
            d = d.marked(Marker::PartialVerifiability);
        }
        let k = crate::fixtures::key_for(hop[0]);
        let k2 = crate::fixtures::key_for(hop[1]);
        l.append(d, &k, &k2).unwrap();
    }
    l
}

#[test]
fn effective_depth_examples() {
    let st = || Some(ReproCommitment::statistical(0.85));
    let chain = chain_with(&[st(), st(), st(), st(), st()]);
    let ids: Vec<&str> = chain.iter().map(|c| c.id.as_str()).collect();
    let full = path_ledger(&chain, &[true; 5], false);
    assert_eq!(effective_verification_depth(&chain, &ids, full.records()).unwrap().effective, 5);

    let chain4 = chain_with(&[st(), st(), st(), st()]);
    let ids4: Vec<&str> = chain4.iter().map(|c| c.id.as_str()).collect();
    let gap = path_ledger(&chain4, &[true, false, true, true], false);
    let r = effective_verification_depth(&chain4, &ids4, gap.records()).unwrap();
    assert_eq!((r.cvd, r.cad, r.effective), (4, 2, 2));

    let lv = [st(), Some(ReproCommitment::none()), st(), st(), st()];
    let chain = chain_with(&lv);
    let ids: Vec<&str> = chain.iter().map(|c| c.id.as_str()).collect();
    let l = path_ledger(&chain, &[true; 5], true);
    let r = effective_verification_depth(&chain, &ids, l.records()).unwrap();
    assert_eq!((r.cvd, r.cad, r.effective), (2, 5, 2));
    let marked: Vec<bool> = l.records().iter().map(|x| x.has_marker(Marker::PartialVerifiability)).collect();
    assert_eq!(marked, vec![false, false, true, true, true]);

    assert!(matches!(
        effective_verification_depth(&chain, &ids[1..], l.records()),
        Err(DepthError::LengthMismatch { .. })
    ));
    let mut wrong = ids.clone();
    wrong[2] = "other";
    assert_eq!(
        effective_verification_depth(&chain, &wrong, l.records()),
        Err(DepthError::AgentMismatch(2))
    );
}

#[test]
fn depths_monotone_under_extension() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for _ in 0..40 {
        let len = rng.gen_range(1..6);
        let levels: Vec<_> = (0..len)
            .map(|_| match rng.gen_range(0..3) {
                0 => Some(ReproCommitment::none()),
                1 => Some(ReproCommitment::full()),
                _ => Some(ReproCommitment::statistical(0.9)),
            })
            .collect();
        let present: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.8)).collect();
        let chain = chain_with(&levels);
        let l = path_ledger(&chain, &present, false);
        let ids: Vec<&str> = chain.iter().map(|c| c.id.as_str()).collect();
        let mut prev_cvd = 0;
        let mut prev_cad = 0;
        for k in 2..=chain.len() {
            let cvd = chain_verifiability_depth(&chain[..k]).unwrap();
            let cad = crate::ledger::chain_auditability_depth(&ids[..k], l.records());
            assert!(cvd >= prev_cvd && cad >= prev_cad);
            prev_cvd = cvd;
            prev_cad = cad;
        }
    }
}
