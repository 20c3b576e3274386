//! Exact bottom-up CKY search over labeled binary derivations.
//!
//! For a span `(i, j)` the best subtree score is the best label score plus
//! the best split `max_k best(i, k) + best(k, j)`; single-character spans
//! only pick a label. Label and split are chosen independently because the
//! score is additive. Ties go to the lowest label index, then the smallest
//! split point. Dummy-labeled nodes are dropped when the tree is rebuilt.
//! Cost is `O(n^3 + L n^2)`.

use crate::chart::ScoreChart;
use crate::prosody::{Derivation, DerivationSpan, GoldLabels, ProsodicTree, ProsodyError};

/// Longest sentence [`brute_force_decode`] accepts.
pub const BRUTE_FORCE_MAX_LEN: usize = 8;

/// Labelings per split shape above which [`brute_force_decode`] maximizes
/// each span's label separately instead of walking the full product.
pub const EXPLICIT_LABELING_LIMIT: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("cannot decode an empty chart")]
    EmptyChart,
    #[error("gold tree has length {gold}, chart has length {chart}")]
    LengthMismatch { chart: usize, gold: usize },
    #[error("brute force supports n <= {max}, got {n}")]
    TooLong { n: usize, max: usize },
    #[error(transparent)]
    Prosody(#[from] ProsodyError),
}

/// Filled dynamic-programming table: best subtree score, label and split for
/// every span.
#[derive(Debug, Clone)]
pub struct DpTable {
    n: usize,
    best: Vec<f64>,
    back_label: Vec<usize>,
    back_split: Vec<Option<usize>>,
}

impl DpTable {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.n + 1) + j
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    pub fn best(&self, i: usize, j: usize) -> f64 {
        self.best[self.idx(i, j)]
    }

    pub fn label(&self, i: usize, j: usize) -> usize {
        self.back_label[self.idx(i, j)]
    }

    pub fn split(&self, i: usize, j: usize) -> Option<usize> {
        self.back_split[self.idx(i, j)]
    }

    pub fn root_score(&self) -> f64 {
        self.best(0, self.n)
    }
}

/// Result of a decode: the n-ary tree, its full binarized derivation and the
/// optimal (possibly loss-augmented) score.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub tree: ProsodicTree,
    pub derivation: Derivation,
    pub score: f64,
}

fn fill_table(chart: &ScoreChart, gold: Option<&GoldLabels>) -> DpTable {
    let n = chart.sentence_len();
    let labels = chart.num_labels();
    let w = n + 1;
    let mut best = vec![0.0; w * w];
    // best_by_end[j * w + k] mirrors best[k * w + j] so the split scan is contiguous
    let mut best_by_end = vec![0.0; w * w];
    let mut back_label = vec![0; w * w];
    let mut back_split = vec![None; w * w];

    for len in 1..=n {
        for i in 0..=n - len {
            let j = i + len;
            let scores = chart.span_scores(i, j);
            let gold_label = gold.map(|g| g.get(i, j));
            let mut label_best = f64::NEG_INFINITY;
            let mut label_arg = 0;
            for (l, &s) in scores.iter().enumerate().take(labels) {
                let s = match gold_label {
                    Some(g) if g != l => s + 1.0,
                    _ => s,
                };
                if s > label_best {
                    label_best = s;
                    label_arg = l;
                }
            }
            let mut total = label_best;
            if len > 1 {
                let left = &best[i * w + i + 1..i * w + j];
                let right = &best_by_end[j * w + i + 1..j * w + j];
                let mut split_best = f64::NEG_INFINITY;
                let mut split_arg = i + 1;
                for (off, (a, b)) in left.iter().zip(right).enumerate() {
                    let s = a + b;
                    if s > split_best {
                        split_best = s;
                        split_arg = i + 1 + off;
                    }
                }
                total += split_best;
                back_split[i * w + j] = Some(split_arg);
            }
            best[i * w + j] = total;
            best_by_end[j * w + i] = total;
            back_label[i * w + j] = label_arg;
        }
    }
    DpTable {
        n,
        best,
        back_label,
        back_split,
    }
}

/// Walks the backpointers from the root; nodes come out in preorder and the
/// dummy-labeled binarization nodes are kept.
pub fn derivation_spans(table: &DpTable) -> Derivation {
    let n = table.sentence_len();
    let mut spans = Vec::with_capacity(2 * n.max(1) - 1);
    let mut stack = vec![(0, n)];
    while let Some((i, j)) = stack.pop() {
        spans.push(DerivationSpan {
            start: i,
            end: j,
            label: table.label(i, j),
        });
        if let Some(k) = table.split(i, j) {
            stack.push((k, j));
            stack.push((i, k));
        }
    }
    Derivation { n, spans }
}

fn finish(chart: &ScoreChart, table: &DpTable) -> Decoded {
    let derivation = derivation_spans(table);
    Decoded {
        tree: derivation.to_tree(chart.vocab()),
        derivation,
        score: table.root_score(),
    }
}

/// Fills the DP table over `chart`.
pub fn dp_table(chart: &ScoreChart) -> Result<DpTable, DecodeError> {
    if chart.sentence_len() == 0 {
        return Err(DecodeError::EmptyChart);
    }
    Ok(fill_table(chart, None))
}

/// Highest-scoring tree under `chart`.
pub fn decode(chart: &ScoreChart) -> Result<Decoded, DecodeError> {
    let table = dp_table(chart)?;
    Ok(finish(chart, &table))
}

/// Loss-augmented decode: every label that differs from gold's label of the
/// same extent (dummy included) gets `+1`. The returned score is
/// `s(T) + Δ(T, gold)` of the returned tree.
pub fn decode_augmented(chart: &ScoreChart, gold: &ProsodicTree) -> Result<Decoded, DecodeError> {
    let n = chart.sentence_len();
    if n == 0 {
        return Err(DecodeError::EmptyChart);
    }
    if gold.sentence_len() != n {
        return Err(DecodeError::LengthMismatch {
            chart: n,
            gold: gold.sentence_len(),
        });
    }
    let gold = GoldLabels::new(gold, chart.vocab())?;
    let table = fill_table(chart, Some(&gold));
    Ok(finish(chart, &table))
}

/// Outcome of exhaustive search.
#[derive(Debug, Clone)]
pub struct BruteForce {
    pub derivation: Derivation,
    pub score: f64,
    /// Number of split shapes enumerated.
    pub shapes: usize,
    /// Number of complete labeled derivations scored one by one; zero when
    /// every shape was too large and labels were maximized per span.
    pub labelings: usize,
}

fn shapes(i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
    if j == i + 1 {
        return vec![vec![(i, j)]];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        let lefts = shapes(i, k);
        let rights = shapes(k, j);
        for l in &lefts {
            for r in &rights {
                let mut s = Vec::with_capacity(1 + l.len() + r.len());
                s.push((i, j));
                s.extend_from_slice(l);
                s.extend_from_slice(r);
                out.push(s);
            }
        }
    }
    out
}

/// Exhaustive search over every binary split shape of `(0, n)` and every
/// label assignment, maximizing `s(T)` (plus `Δ(T, gold)` when `gold` is
/// given). Shapes whose labelings exceed [`EXPLICIT_LABELING_LIMIT`] are
/// scored by picking each span's best label on its own.
pub fn brute_force_decode(chart: &ScoreChart, gold: Option<&ProsodicTree>) -> Result<BruteForce, DecodeError> {
    let n = chart.sentence_len();
    if n == 0 {
        return Err(DecodeError::EmptyChart);
    }
    if n > BRUTE_FORCE_MAX_LEN {
        return Err(DecodeError::TooLong {
            n,
            max: BRUTE_FORCE_MAX_LEN,
        });
    }
    let gold = match gold {
        Some(g) if g.sentence_len() != n => {
            return Err(DecodeError::LengthMismatch {
                chart: n,
                gold: g.sentence_len(),
            })
        }
        Some(g) => Some(GoldLabels::new(g, chart.vocab())?),
        None => None,
    };
    let labels = chart.num_labels();
    let entry = |i: usize, j: usize, l: usize| -> f64 {
        let bonus = match &gold {
            Some(g) if g.get(i, j) != l => 1.0,
            _ => 0.0,
        };
        chart.get(i, j, l) + bonus
    };

    let all = shapes(0, n);
    let spans_per_shape = 2 * n - 1;
    let explicit = (labels as f64).powi(spans_per_shape as i32) <= EXPLICIT_LABELING_LIMIT as f64;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_spans: Vec<DerivationSpan> = Vec::new();
    let mut labelings = 0;
    for shape in &all {
        if explicit {
            let mut assignment = vec![0usize; shape.len()];
            loop {
                let score: f64 = shape
                    .iter()
                    .zip(&assignment)
                    .map(|(&(i, j), &l)| entry(i, j, l))
                    .sum();
                labelings += 1;
                if score > best_score {
                    best_score = score;
                    best_spans = shape
                        .iter()
                        .zip(&assignment)
                        .map(|(&(i, j), &l)| DerivationSpan { start: i, end: j, label: l })
                        .collect();
                }
                // odometer increment
                let mut pos = 0;
                while pos < assignment.len() {
                    assignment[pos] += 1;
                    if assignment[pos] < labels {
                        break;
                    }
                    assignment[pos] = 0;
                    pos += 1;
                }
                if pos == assignment.len() {
                    break;
                }
            }
        } else {
            let mut score = 0.0;
            let mut spans = Vec::with_capacity(shape.len());
            for &(i, j) in shape {
                let (mut lb, mut la) = (f64::NEG_INFINITY, 0);
                for l in 0..labels {
                    let s = entry(i, j, l);
                    if s > lb {
                        lb = s;
                        la = l;
                    }
                }
                score += lb;
                spans.push(DerivationSpan { start: i, end: j, label: la });
            }
            if score > best_score {
                best_score = score;
                best_spans = spans;
            }
        }
    }
    Ok(BruteForce {
        derivation: Derivation { n, spans: best_spans },
        score: best_score,
        shapes: all.len(),
        labelings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosody::{GeneralizedLabel, LabelVocabulary, LabeledSpan, ProsodicLevel};

    #[test]
    fn single_character_picks_best_label() {
        let mut c = ScoreChart::zeros(1, LabelVocabulary::standard());
        c.set(0, 1, 3, 0.7);
        c.set(0, 1, 5, 0.9);
        let d = decode(&c).unwrap();
        assert_eq!(d.score, 0.9);
        assert_eq!(d.tree.spans(), &[LabeledSpan::new(0, 1, LabelVocabulary::standard().label(5))]);

        let mut neg = ScoreChart::zeros(1, LabelVocabulary::standard());
        for l in 1..7 {
            neg.set(0, 1, l, -1.0);
        }
        let d = decode(&neg).unwrap();
        assert_eq!(d.score, 0.0);
        assert!(d.tree.spans().is_empty());
    }

    #[test]
    fn all_zero_chart_gives_empty_tree() {
        let c = ScoreChart::zeros(6, LabelVocabulary::standard());
        let d = decode(&c).unwrap();
        assert_eq!(d.score, 0.0);
        assert!(d.tree.spans().is_empty());
        // ties: smallest split everywhere gives a right-branching... left-most splits
        assert_eq!(d.derivation.spans[1], DerivationSpan { start: 0, end: 1, label: 0 });
    }

    #[test]
    fn derivation_has_two_n_minus_one_nodes() {
        for n in [1, 3, 5] {
            let c = ScoreChart::from_fn(n, LabelVocabulary::standard(), |i, j, l| ((i * 7 + j * 3 + l) % 5) as f64 - 2.0);
            let d = decode(&c).unwrap();
            assert_eq!(d.derivation.spans.len(), 2 * n - 1);
        }
    }

    #[test]
    fn empty_chart_is_an_error() {
        let c = ScoreChart::zeros(0, LabelVocabulary::standard());
        assert_eq!(decode(&c).unwrap_err(), DecodeError::EmptyChart);
    }

    #[test]
    fn augmented_decode_checks_length() {
        let c = ScoreChart::zeros(3, LabelVocabulary::standard());
        let gold = ProsodicTree::new(2, vec![]);
        assert!(matches!(decode_augmented(&c, &gold), Err(DecodeError::LengthMismatch { .. })));
    }

    #[test]
    fn brute_force_counts_for_two_characters() {
        let c = ScoreChart::from_fn(2, LabelVocabulary::standard(), |i, j, l| (i + 2 * j) as f64 * 0.1 - l as f64 * 0.05);
        let bf = brute_force_decode(&c, None).unwrap();
        assert_eq!(bf.shapes, 1);
        assert_eq!(bf.labelings, 7 * 7 * 7);
        let d = decode(&c).unwrap();
        assert!((bf.score - d.score).abs() < 1e-12);
    }

    #[test]
    fn brute_force_rejects_long_sentences() {
        let c = ScoreChart::zeros(9, LabelVocabulary::standard());
        assert!(matches!(brute_force_decode(&c, None), Err(DecodeError::TooLong { n: 9, .. })));
    }

    #[test]
    fn gold_label_outside_vocabulary() {
        let c = ScoreChart::zeros(2, LabelVocabulary::atomic());
        let gold = ProsodicTree::new(
            2,
            vec![LabeledSpan::new(0, 2, GeneralizedLabel::from_levels(ProsodicLevel::ALL))],
        );
        assert!(matches!(decode_augmented(&c, &gold), Err(DecodeError::Prosody(_))));
    }
}
