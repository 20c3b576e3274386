mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use prosody_tree::chart::ScoreChart;
use prosody_tree::decode::{brute_force_decode, decode, decode_augmented, dp_table, derivation_spans, DecodeError};
use prosody_tree::prosody::{hamming_delta, GeneralizedLabel, LabelVocabulary, ProsodicTree};

fn vocab_of_size(l: usize) -> LabelVocabulary {
    let all = LabelVocabulary::standard();
    LabelVocabulary::new(all.labels()[..l].to_vec()).unwrap()
}

#[test]
fn matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..200 {
        let l = if trial % 2 == 0 { 4 } else { 7 };
        let vocab = vocab_of_size(l);
        let n = rng.gen_range(1..=7);
        let chart = random_chart(&mut rng, n, &vocab);
        let got = decode(&chart).unwrap();
        let want = oracle_best(&chart, None);
        assert!((got.score - want).abs() < 1e-9, "n={n} L={l}: {} vs {want}", got.score);
        assert!((direct_score(&chart, &got.tree) - got.score).abs() < 1e-9);
        let bf = brute_force_decode(&chart, None).unwrap();
        assert!((bf.score - want).abs() < 1e-9);
    }
}

#[test]
fn augmented_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let vocab = LabelVocabulary::standard();
    for _ in 0..200 {
        let n = rng.gen_range(1..=6);
        let chart = random_chart(&mut rng, n, &vocab);
        let gold = random_tree(&mut rng, n);
        let got = decode_augmented(&chart, &gold).unwrap();
        let want = oracle_best(&chart, Some(&gold));
        assert!((got.score - want).abs() < 1e-9);
        let delta = direct_hamming(&got.derivation, &gold, &vocab) as f64;
        let plain: f64 = got.derivation.spans.iter().map(|s| chart.get(s.start, s.end, s.label)).sum();
        assert!((plain + delta - got.score).abs() < 1e-9);
    }
}

#[test]
fn single_character() {
    let vocab = LabelVocabulary::standard();
    let mut chart = ScoreChart::zeros(1, vocab.clone());
    chart.set(0, 1, 5, 0.5);
    chart.set(0, 1, 2, 0.7);
    let d = decode(&chart).unwrap();
    assert_eq!(d.score, 0.7);
    assert_eq!(d.tree.spans(), &[span(0, 1, "#2")]);

    let negative = ScoreChart::from_fn(1, vocab, |_, _, _| -1.0);
    let d = decode(&negative).unwrap();
    assert_eq!(d.score, 0.0);
    assert!(d.tree.spans().is_empty());
}

#[test]
fn all_zero_chart_gives_empty_tree() {
    for n in 1..6 {
        let d = decode(&ScoreChart::zeros(n, LabelVocabulary::standard())).unwrap();
        assert_eq!(d.score, 0.0);
        assert!(d.tree.spans().is_empty());
        // ties resolve to the smallest split: a right-branching spine
        let splits: Vec<(usize, usize)> = d.derivation.spans.iter().map(|s| (s.start, s.end)).collect();
        let mut want = Vec::new();
        for i in 0..n {
            want.push((i, n));
            if i + 1 < n {
                want.push((i, i + 1));
            }
        }
        assert_eq!(splits, want);
    }
}

#[test]
fn empty_chart_is_an_error() {
    let chart = ScoreChart::zeros(0, LabelVocabulary::standard());
    assert!(matches!(decode(&chart), Err(DecodeError::EmptyChart)));
}

#[test]
fn augmented_rejects_length_mismatch() {
    let chart = ScoreChart::zeros(3, LabelVocabulary::standard());
    let gold = ProsodicTree::new(2, vec![span(0, 2, "#3-#2-#1")]);
    assert!(matches!(
        decode_augmented(&chart, &gold),
        Err(DecodeError::LengthMismatch { chart: 3, gold: 2 })
    ));
}

#[test]
fn augmented_zero_chart_two_chars() {
    let vocab = LabelVocabulary::standard();
    let chart = ScoreChart::zeros(2, vocab.clone());
    let gold = ProsodicTree::new(2, vec![span(0, 2, "#3-#2-#1")]);
    let d = decode_augmented(&chart, &gold).unwrap();
    // hand count: root can differ from gold (+1), both leaves can be non-dummy (+1 each)
    assert_eq!(d.score, 3.0);
    assert!(hamming_delta(&d.derivation, &gold, &vocab).unwrap() >= 1);
    let bf = brute_force_decode(&chart, Some(&gold)).unwrap();
    assert_eq!(bf.score, 3.0);
    assert_eq!((bf.shapes, bf.labelings), (1, 343));
}

#[test]
fn margin_already_satisfied_returns_gold() {
    let vocab = LabelVocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let n = rng.gen_range(1..=10);
        let gold = random_tree(&mut rng, n);
        let gm = gold_map(&gold);
        let chart = ScoreChart::from_fn(n, vocab.clone(), |i, j, l| match gm.get(&(i, j)) {
            Some(g) if vocab.index_of(*g) == Some(l) => 100.0,
            _ => -100.0,
        });
        let d = decode_augmented(&chart, &gold).unwrap();
        assert_eq!(d.tree, gold);
        assert_eq!(d.score, direct_score(&chart, &gold));
    }
}

#[test]
fn decoded_tree_beats_random_valid_trees() {
    let vocab = LabelVocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let n = rng.gen_range(1..=20);
        let chart = random_chart(&mut rng, n, &vocab);
        let d = decode(&chart).unwrap();
        for _ in 0..50 {
            let t = random_tree(&mut rng, n);
            assert!(d.score >= direct_score(&chart, &t) - 1e-12);
        }
    }
}

#[test]
fn augmented_beats_random_derivations() {
    let vocab = LabelVocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let n = rng.gen_range(1..=15);
        let chart = random_chart(&mut rng, n, &vocab);
        let gold = random_tree(&mut rng, n);
        let d = decode_augmented(&chart, &gold).unwrap();
        for _ in 0..20 {
            let t = random_tree(&mut rng, n);
            let der = random_derivation_of(&mut rng, &t, &vocab);
            let s = direct_score(&chart, &t) + direct_hamming(&der, &gold, &vocab) as f64;
            assert!(d.score >= s - 1e-12);
        }
    }
}

#[test]
fn identical_charts_give_identical_output() {
    let vocab = LabelVocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // coarse values force plenty of ties
    let chart = ScoreChart::from_fn(12, vocab.clone(), |_, _, _| rng.gen_range(-1..=1) as f64);
    let a = decode(&chart).unwrap();
    let b = decode(&chart.clone()).unwrap();
    assert_eq!(a.tree, b.tree);
    assert_eq!(a.derivation, b.derivation);
}

#[test]
fn tie_prefers_lowest_label() {
    let vocab = LabelVocabulary::standard();
    let mut chart = ScoreChart::zeros(1, vocab.clone());
    chart.set(0, 1, 3, 1.0);
    chart.set(0, 1, 1, 1.0);
    assert_eq!(decode(&chart).unwrap().tree.spans(), &[span(0, 1, "#1")]);
    assert_eq!(vocab.label(1), GeneralizedLabel::PW);
}

#[test]
fn derivation_span_counts() {
    let vocab = LabelVocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1, 3, 5, 17, 40] {
        let chart = random_chart(&mut rng, n, &vocab);
        let table = dp_table(&chart).unwrap();
        let d = derivation_spans(&table);
        assert_eq!(d.spans.len(), 2 * n - 1);
        assert_eq!((d.spans[0].start, d.spans[0].end), (0, n));
        assert_eq!(table.split(0, 1), None);
        assert_eq!(table.split(0, n).is_some(), n > 1);
        assert!((table.root_score() - decode(&chart).unwrap().score).abs() < 1e-12);
    }
}

#[test]
fn brute_force_limits() {
    let chart = ScoreChart::zeros(9, LabelVocabulary::standard());
    assert!(matches!(
        brute_force_decode(&chart, None),
        Err(DecodeError::TooLong { n: 9, max: 8 })
    ));
    let chart = ScoreChart::zeros(1, LabelVocabulary::standard());
    let bf = brute_force_decode(&chart, None).unwrap();
    assert_eq!((bf.shapes, bf.labelings), (1, 7));
}

#[test]
fn brute_force_agrees_at_four() {
    let vocab = LabelVocabulary::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let chart = random_chart(&mut rng, 4, &vocab);
        let bf = brute_force_decode(&chart, None).unwrap();
        assert_eq!(bf.shapes, 5);
        assert!((bf.score - decode(&chart).unwrap().score).abs() < 1e-9);
        assert_eq!(bf.derivation.spans.len(), 7);
    }
}

proptest! {
    #![proptest_config(cases(64))]

    #[test]
    fn derivation_has_2n_minus_1_spans(n in 1usize..30, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chart = random_chart(&mut rng, n, &LabelVocabulary::standard());
        let d = decode(&chart).unwrap();
        prop_assert_eq!(d.derivation.spans.len(), 2 * n - 1);
        prop_assert_eq!(d.derivation.to_tree(chart.vocab()), d.tree);
    }

    #[test]
    fn augmented_score_is_score_plus_delta(n in 1usize..20, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = LabelVocabulary::standard();
        let chart = random_chart(&mut rng, n, &vocab);
        let gold = random_tree(&mut rng, n);
        let d = decode_augmented(&chart, &gold).unwrap();
        let delta = hamming_delta(&d.derivation, &gold, &vocab).unwrap();
        prop_assert_eq!(delta, direct_hamming(&d.derivation, &gold, &vocab));
        let plain = direct_score(&chart, &d.tree);
        prop_assert!((plain + delta as f64 - d.score).abs() < 1e-9);
        // the gold derivation itself is a candidate with delta 0
        prop_assert!(d.score >= direct_score(&chart, &gold) - 1e-12);
    }
}
