mod common;

use std::collections::BTreeSet;
use std::io::Cursor;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uas_core::audit::{
    consensus, consensus_with, field_accuracy_report, sample_audit_set, stratum_quotas, wilson_interval, AuditField,
    AuditJudgment, AuditTask, AuditVerdict, Consensus, JudgmentSet, ReportOptions, SampleConfig, UnsurePolicy,
    DEFAULT_Z,
};
use uas_core::qa::{QaGenConfig, QaGenerator, QaKind, TemplateBank};
use uas_core::schema::{paths, parse_uas, serialize_canonical, CorpusEntry, DomainTag, ManifestReader, Ontology, ParseMode};

use common::*;

fn verdict() -> impl Strategy<Value = AuditVerdict> {
    prop_oneof![
        Just(AuditVerdict::Correct),
        Just(AuditVerdict::Incorrect),
        Just(AuditVerdict::Unsure)
    ]
}

fn corpus(sizes: [usize; 3]) -> Vec<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut out = Vec::new();
    for (tag, count) in DomainTag::ALL.iter().zip(sizes) {
        for _ in 0..count {
            let mut e = valid_entry(&mut rng, out.len());
            e.domain_tag = *tag;
            out.push(e);
        }
    }
    // Interleave so strata are not contiguous.
    out.sort_by_key(|e| serialize_canonical(e.uas.as_ref().unwrap()));
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn wilson_contains_estimate(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(s, n, DEFAULT_Z).unwrap();
        let p = s as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        let (olo, ohi) = wilson_oracle(s, n, DEFAULT_Z);
        prop_assert!((lo - olo).abs() < 1e-9 && (hi - ohi).abs() < 1e-9);
    }

    #[test]
    fn wilson_narrows_with_more_trials(n in 1u64..50_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(s, n, DEFAULT_Z).unwrap();
        let (lo2, hi2) = wilson_interval(2 * s, 2 * n, DEFAULT_Z).unwrap();
        prop_assert!(hi2 - lo2 < hi - lo);
    }

    #[test]
    fn wilson_symmetric(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(s, n, DEFAULT_Z).unwrap();
        let (mlo, mhi) = wilson_interval(n - s, n, DEFAULT_Z).unwrap();
        prop_assert!((lo - (1.0 - mhi)).abs() < 1e-12);
        prop_assert!((hi - (1.0 - mlo)).abs() < 1e-12);
    }

    #[test]
    fn wilson_wider_at_higher_confidence(n in 1u64..10_000, frac in 0.0f64..=1.0) {
        let s = ((n as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(s, n, 1.644854).unwrap();
        let (lo2, hi2) = wilson_interval(s, n, 2.575829).unwrap();
        prop_assert!(hi2 - lo2 > hi - lo);
    }

    #[test]
    fn wilson_rejects_bad_input(n in 0u64..1000, extra in 1u64..10) {
        prop_assert!(wilson_interval(n + extra, n, DEFAULT_Z).is_err());
        prop_assert!(wilson_interval(0, 0, DEFAULT_Z).is_err());
    }

    #[test]
    fn consensus_monotone(votes in prop::collection::vec(verdict(), 3), i in 0usize..3) {
        // Turning any vote into Correct never turns a Correct consensus away.
        let before = consensus(&votes);
        let mut up = votes.clone();
        up[i] = AuditVerdict::Correct;
        if before == Consensus::Correct {
            prop_assert_eq!(consensus(&up), Consensus::Correct);
        }
        let mut down = votes.clone();
        down[i] = AuditVerdict::Incorrect;
        if before == Consensus::NotCorrect {
            prop_assert_eq!(consensus(&down), Consensus::NotCorrect);
        }
    }

    #[test]
    fn consensus_matches_majority(votes in prop::collection::vec(verdict(), 0..6)) {
        let correct = votes.iter().filter(|v| **v == AuditVerdict::Correct).count();
        let expected = if votes.len() < 3 {
            Consensus::Pending
        } else if 2 * correct > votes.len() {
            Consensus::Correct
        } else {
            Consensus::NotCorrect
        };
        prop_assert_eq!(consensus(&votes), expected);
        // Abstaining on Unsure can only help.
        if expected == Consensus::Correct {
            prop_assert_eq!(consensus_with(&votes, 3, UnsurePolicy::Abstain), Consensus::Correct);
        }
    }

    #[test]
    fn report_conserves_tasks(
        votes in prop::collection::vec(prop::collection::vec(verdict(), 0..=3), 1..40)
    ) {
        let tasks: Vec<AuditTask> = (0..votes.len())
            .map(|i| AuditTask {
                task_id: format!("t{i}"),
                entry_id: format!("e{i}"),
                audio_ref: "a.wav".into(),
                domain_tag: DomainTag::Speech,
                fields: vec![AuditField { field_path: paths::AGE.into(), displayed_value: "Adult".into() }],
                assigned_annotators: vec!["a1".into(), "a2".into(), "a3".into()],
            })
            .collect();
        let mut set = JudgmentSet::default();
        for (task, vs) in tasks.iter().zip(&votes) {
            for (k, v) in vs.iter().enumerate() {
                set.record(AuditJudgment {
                    task_id: task.task_id.clone(),
                    annotator_id: format!("a{}", k + 1),
                    field_path: paths::AGE.into(),
                    verdict: *v,
                    submitted_at: None,
                });
            }
        }
        let rows = field_accuracy_report(&set, &tasks, ReportOptions::default());
        let age = rows.iter().find(|r| r.field_path == paths::AGE).unwrap();
        prop_assert_eq!(age.successes + age.not_correct + age.pending, tasks.len());
        prop_assert_eq!(age.complete, age.pending == 0);
        let decided = age.successes + age.not_correct;
        if decided > 0 {
            let acc = age.accuracy.unwrap();
            prop_assert!((acc - age.successes as f64 / decided as f64).abs() < 1e-12);
            prop_assert!(age.ci_lower.unwrap() <= acc && acc <= age.ci_upper.unwrap());
        } else {
            prop_assert!(age.accuracy.is_none());
        }
    }

    #[test]
    fn quotas_are_proportional(sizes in prop::collection::vec(0usize..5000, 1..5), frac in 0.0f64..=1.0) {
        let total: usize = sizes.iter().sum();
        let n = ((total as f64) * frac) as usize;
        let quotas = stratum_quotas(&sizes, n);
        prop_assert_eq!(quotas.iter().sum::<usize>(), if total == 0 { 0 } else { n });
        for (q, s) in quotas.iter().zip(&sizes) {
            prop_assert!(q <= s);
            if total > 0 {
                let exact = *s as f64 * n as f64 / total as f64;
                prop_assert!((*q as f64 - exact).abs() < 1.0 + 1e-9, "quota {} vs {}", q, exact);
            }
        }
    }

    #[test]
    fn parse_round_trip(seed in any::<u64>(), speech in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let record = valid_record(&mut rng, speech);
        let text = serialize_canonical(&record);
        let back = parse_uas(&text).unwrap();
        prop_assert_eq!(&back, &record);
        prop_assert_eq!(serialize_canonical(&back), text);
    }

    #[test]
    fn qa_deterministic_and_bounded(seed in any::<u64>(), record_seed in any::<u64>(), items in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(record_seed);
        let record = full_speech_record(&mut rng);
        let config = QaGenConfig { rng_seed: seed, items_per_record: items, ..QaGenConfig::default() };
        let gen = QaGenerator::new(Ontology::default(), TemplateBank::default(), config).unwrap();
        let a = gen.generate("r", &record);
        let b = gen.generate("r", &record);
        prop_assert_eq!(&a, &b);
        prop_assert!(!a.is_empty());
        prop_assert!(a.len() <= items.max(3));
        if items >= 3 {
            let kinds: BTreeSet<_> = a.iter().map(|i| format!("{:?}", i.kind)).collect();
            prop_assert_eq!(kinds.len(), 3);
        }
        for item in &a {
            prop_assert_eq!(&item.record_id, "r");
            if item.kind == QaKind::MultipleChoice {
                let options = item.options.as_ref().unwrap();
                let letters: String = options.iter().map(|o| o.letter).collect();
                prop_assert!("ABCD".starts_with(&letters));
                prop_assert!(options.iter().any(|o| item.answer == o.to_string()));
            } else {
                prop_assert!(item.options.is_none());
            }
        }
    }
}

#[test]
fn sampling_is_deterministic() {
    let entries = corpus([300, 200, 100]);
    let config = SampleConfig {
        n: 60,
        rng_seed: 42,
        ..SampleConfig::default()
    };
    let a = sample_audit_set(entries.clone(), &config).unwrap();
    let b = sample_audit_set(entries.clone(), &config).unwrap();
    assert_eq!(a, b);
    let c = sample_audit_set(entries, &SampleConfig { rng_seed: 43, ..config }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn stratified_sample_split() {
    let entries = corpus([2000, 1200, 800]);
    let tasks = sample_audit_set(entries, &SampleConfig::default()).unwrap();
    assert_eq!(tasks.len(), 400);
    let count = |tag| tasks.iter().filter(|t| t.domain_tag == tag).count();
    assert_eq!(
        (count(DomainTag::Speech), count(DomainTag::Music), count(DomainTag::Environment)),
        (200, 120, 80)
    );
    let ids: BTreeSet<_> = tasks.iter().map(|t| &t.entry_id).collect();
    assert_eq!(ids.len(), 400);
    for t in &tasks {
        assert_eq!(t.fields.len(), 9);
        assert_eq!(t.assigned_annotators.len(), 3);
        let distinct: BTreeSet<_> = t.assigned_annotators.iter().collect();
        assert_eq!(distinct.len(), 3);
    }
}

#[test]
fn manifest_reports_corrupt_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut text = String::new();
    for i in 0..10 {
        if i == 6 {
            text.push_str("{\"id\": \"broken\", \n");
        } else {
            text.push_str(&valid_entry(&mut rng, i).to_json());
            text.push('\n');
        }
    }
    let results: Vec<_> = ManifestReader::new(Cursor::new(text), ParseMode::Strict).collect();
    let first_err = results.iter().position(Result::is_err).unwrap();
    assert_eq!(first_err, 6);
    assert_eq!(results[6].as_ref().unwrap_err().line(), Some(7));
}

#[test]
fn manifest_rejects_duplicate_ids() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let e = valid_entry(&mut rng, 0);
    let text = format!("{}\n\n{}\n", e.to_json(), e.to_json());
    let results: Vec<_> = ManifestReader::new(Cursor::new(text), ParseMode::Strict).collect();
    assert!(results[0].is_ok());
    assert_eq!(results[1].as_ref().unwrap_err().line(), Some(3));
}
