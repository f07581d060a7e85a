mod common;

use ddi_core::annot::CodeVocabulary;
use ddi_core::corpus::{generate_corpus, parse_corpus, serialize_corpus, GeneratorSpec};
use ddi_core::ensemble::{merge, tally};
use ddi_core::score::{score, Criterion, Mode, Task};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scorer_matches_brute_force_oracle(seed in any::<u64>()) {
        let (gold, pred) = common::random_pair(seed);
        let report = score(&gold, &pred).unwrap();
        for c in Criterion::ALL {
            let s = report.get(c.task, c.mode);
            prop_assert_eq!((s.counts.tp, s.counts.fp, s.counts.fn_), common::oracle_counts(&gold, &pred, c));
        }
    }

    #[test]
    fn swapping_gold_and_prediction_swaps_errors(seed in any::<u64>()) {
        let (gold, pred) = common::random_pair(seed);
        let (ab, ba) = (score(&gold, &pred).unwrap(), score(&pred, &gold).unwrap());
        for c in Criterion::ALL {
            let (x, y) = (ab.get(c.task, c.mode), ba.get(c.task, c.mode));
            prop_assert_eq!((x.counts.tp, x.counts.fp, x.counts.fn_), (y.counts.tp, y.counts.fn_, y.counts.fp));
            prop_assert!((x.f1 - y.f1).abs() < 1e-12);
        }
    }

    /// Every primary hit survives as a relaxed hit. Distinct primary keys
    /// may share one relaxed key, so relaxed TP bounds the distinct
    /// projections of the primary hits, and primary TP whenever the
    /// projection is injective.
    #[test]
    fn relaxed_matching_never_loses_hits(seed in any::<u64>()) {
        let (gold, pred) = common::random_pair(seed);
        let r = score(&gold, &pred).unwrap();
        for task in [Task::Entity, Task::Relation] {
            let primary = Criterion { task, mode: Mode::Primary };
            let relaxed_pred = common::keys(&pred, Criterion { task, mode: Mode::Relaxed });
            let gold_keys = common::keys(&gold, primary);
            let pred_keys = common::keys(&pred, primary);
            let mut projected: Vec<common::Key> = Vec::new();
            for k in gold_keys.iter().filter(|k| pred_keys.contains(k)) {
                let p = common::relax(k);
                prop_assert!(relaxed_pred.contains(&p));
                if !projected.contains(&p) {
                    projected.push(p);
                }
            }
            let relaxed_tp = r.get(task, Mode::Relaxed).counts.tp;
            prop_assert!(relaxed_tp >= projected.len());
            let injective = |keys: &[common::Key]| {
                keys.iter().enumerate().all(|(i, a)| keys[..i].iter().all(|b| common::relax(a) != common::relax(b)))
            };
            if injective(&gold_keys) && injective(&pred_keys) {
                prop_assert!(relaxed_tp >= r.get(task, Mode::Primary).counts.tp);
            }
        }
    }

    #[test]
    fn corpus_serialization_round_trips(seed in any::<u64>(), labels in 1usize..4, sentences in 1usize..8) {
        let codes = CodeVocabulary::placeholder();
        let spec = GeneratorSpec { seed, labels, sentences_per_label: sentences, ..GeneratorSpec::default() };
        let corpus = generate_corpus(&spec, &codes).unwrap();
        let bytes = serialize_corpus(&corpus);
        let back = parse_corpus(&bytes, &codes).unwrap();
        prop_assert_eq!(&back, &corpus);
        prop_assert_eq!(serialize_corpus(&back), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ensemble_ignores_model_order(seed in any::<u64>(), perm in any::<u64>(), k in 2usize..6) {
        let sets = common::prediction_sets(seed, k);
        let shuffled = common::shuffled(&sets, perm);
        prop_assert_eq!(merge(&sets, 1).unwrap(), merge(&shuffled, 1).unwrap());
        prop_assert_eq!(tally(&sets).report(), tally(&shuffled).report());
    }

    #[test]
    fn single_model_ensemble_is_identity(seed in any::<u64>()) {
        let set = common::prediction_sets(seed, 1).remove(0);
        prop_assert_eq!(merge(std::slice::from_ref(&set), 1).unwrap(), set);
    }

    #[test]
    fn raising_min_votes_only_removes(seed in any::<u64>(), k in 2usize..6) {
        let sets = common::prediction_sets(seed, k);
        let gold = generate_corpus(
            &GeneratorSpec { seed, labels: 2, sentences_per_label: 5, ..GeneratorSpec::default() },
            &CodeVocabulary::placeholder(),
        )
        .unwrap();
        let mut prev = score(&gold, &merge(&sets, 1).unwrap()).unwrap();
        for m in 2..=k + 1 {
            let cur = score(&gold, &merge(&sets, m).unwrap()).unwrap();
            for c in Criterion::ALL {
                let (p, q) = (prev.get(c.task, c.mode).counts, cur.get(c.task, c.mode).counts);
                prop_assert!(q.tp <= p.tp && q.fp <= p.fp, "{} at min votes {}", c, m);
            }
            prev = cur;
        }
    }
}
