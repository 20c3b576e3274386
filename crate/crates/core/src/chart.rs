use crate::prosody::{LabelVocabulary, ProsodicTree, ProsodyError};

/// Dense scores `s(i, j, l)` for every span `0 <= i < j <= n` and label `l`.
///
/// The dummy label's score is pinned to exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreChart {
    n: usize,
    vocab: LabelVocabulary,
    data: Vec<f64>,
}

impl ScoreChart {
    pub fn zeros(n: usize, vocab: LabelVocabulary) -> Self {
        let data = vec![0.0; (n + 1) * (n + 1) * vocab.len()];
        ScoreChart { n, vocab, data }
    }

    /// Fills every non-dummy entry from `f(i, j, l)`.
    pub fn from_fn(n: usize, vocab: LabelVocabulary, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut chart = Self::zeros(n, vocab);
        let dummy = chart.vocab.dummy_index();
        for i in 0..n {
            for j in i + 1..=n {
                for l in 0..chart.vocab.len() {
                    if l != dummy {
                        chart.set(i, j, l, f(i, j, l));
                    }
                }
            }
        }
        chart
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    pub fn num_labels(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocab(&self) -> &LabelVocabulary {
        &self.vocab
    }

    pub fn num_spans(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        assert!(i < j && j <= self.n, "span ({i},{j}) outside chart of length {}", self.n);
        (i * (self.n + 1) + j) * self.vocab.len()
    }

    pub fn get(&self, i: usize, j: usize, l: usize) -> f64 {
        self.data[self.offset(i, j) + l]
    }

    /// Scores of all labels for span `(i, j)`.
    pub fn span_scores(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.data[o..o + self.vocab.len()]
    }

    /// Sets a non-dummy entry. Panics on the dummy label, whose score is fixed.
    pub fn set(&mut self, i: usize, j: usize, l: usize, value: f64) {
        assert!(l != self.vocab.dummy_index(), "the dummy label score is pinned to 0");
        let o = self.offset(i, j);
        self.data[o + l] = value;
    }

    pub fn add(&mut self, i: usize, j: usize, l: usize, delta: f64) {
        let v = self.get(i, j, l);
        self.set(i, j, l, v + delta);
    }

    /// Sum of chart entries over the spans of `tree`.
    pub fn tree_score(&self, tree: &ProsodicTree) -> Result<f64, ProsodyError> {
        tree_score(self, tree)
    }
}

/// `s(T)`: the sum of chart entries over the tree's labeled spans.
pub fn tree_score(chart: &ScoreChart, tree: &ProsodicTree) -> Result<f64, ProsodyError> {
    let n = chart.sentence_len();
    if tree.sentence_len() != n {
        return Err(ProsodyError::LengthMismatch {
            expected: n,
            found: tree.sentence_len(),
        });
    }
    let mut total = 0.0;
    for s in tree.spans() {
        if s.start >= s.end || s.end > n {
            return Err(ProsodyError::SpanOutOfRange { span: *s, n });
        }
        let l = chart
            .vocab()
            .index_of(s.label)
            .ok_or(ProsodyError::LabelNotInVocabulary(s.label))?;
        total += chart.get(s.start, s.end, l);
    }
    Ok(total)
}
