//! Span label scores from fencepost differences through a one-hidden-layer
//! feed-forward network: `s(i, j, ·) = W2 relu(W1 (v_j - v_i) + z1) + z2`
//! over the non-dummy labels.
//!
//! `W1 (v_j - v_i)` equals `P_j - P_i` with `P = V W1^T`, so the batched path
//! projects the `n+1` fenceposts once instead of every span.

use prosody_autodiff::{kernels, Tape, Tensor, Var};
use rand::Rng;

use crate::chart::ScoreChart;
use crate::prosody::LabelVocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams<T> {
    /// `d_hidden x d_model`
    pub w1: T,
    pub z1: T,
    /// `(L - 1) x d_hidden`
    pub w2: T,
    pub z2: T,
}

impl<T> ScorerParams<T> {
    pub fn visit<'a>(&'a self, out: &mut Vec<(String, &'a T)>) {
        out.push(("scorer.w1".into(), &self.w1));
        out.push(("scorer.z1".into(), &self.z1));
        out.push(("scorer.w2".into(), &self.w2));
        out.push(("scorer.z2".into(), &self.z2));
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        out.extend([&mut self.w1, &mut self.z1, &mut self.w2, &mut self.z2]);
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> ScorerParams<U> {
        ScorerParams {
            w1: f(&self.w1),
            z1: f(&self.z1),
            w2: f(&self.w2),
            z2: f(&self.z2),
        }
    }
}

impl ScorerParams<Tensor> {
    pub fn init(d_model: usize, d_hidden: usize, labels: &LabelVocabulary, rng: &mut impl Rng) -> Self {
        let scored = labels.len() - 1;
        let uniform = |rng: &mut dyn rand::RngCore, r: usize, c: usize| {
            let bound = 1.0 / (c as f64).sqrt();
            Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-bound..bound)).collect())
        };
        ScorerParams {
            w1: uniform(rng, d_hidden, d_model),
            z1: Tensor::zeros(&[d_hidden]),
            w2: uniform(rng, scored, d_hidden),
            z2: Tensor::zeros(&[scored]),
        }
    }

    fn check(&self, fenceposts: &Tensor, labels: &LabelVocabulary) -> Result<(), ScoreError> {
        let (h, d) = self.w1.dims2();
        let (l2, h2) = self.w2.dims2();
        let ok = fenceposts.cols() == d
            && self.z1.len() == h
            && h2 == h
            && self.z2.len() == l2
            && l2 + 1 == labels.len();
        if ok {
            Ok(())
        } else {
            Err(ScoreError::Dimensions(format!(
                "fenceposts {:?}, w1 {:?}, z1 {:?}, w2 {:?}, z2 {:?}, {} labels",
                fenceposts.shape(),
                self.w1.shape(),
                self.z1.shape(),
                self.w2.shape(),
                self.z2.shape(),
                labels.len()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("span ({i},{j}) is not valid for {n} characters")]
    BadSpan { i: usize, j: usize, n: usize },
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
}

/// `v_j - v_i` for fencepost matrix rows `0..=n`.
pub fn span_rep(fenceposts: &Tensor, i: usize, j: usize) -> Result<Vec<f64>, ScoreError> {
    let n = fenceposts.rows().saturating_sub(1);
    if i >= j || j > n {
        return Err(ScoreError::BadSpan { i, j, n });
    }
    Ok(fenceposts.row(j).iter().zip(fenceposts.row(i)).map(|(a, b)| a - b).collect())
}

fn fill_chart(n: usize, labels: &LabelVocabulary, out: &[f64]) -> ScoreChart {
    let scored = labels.len() - 1;
    let mut chart = ScoreChart::zeros(n, labels.clone());
    let mut row = 0;
    for i in 0..n {
        for j in i + 1..=n {
            let s = &out[row * scored..(row + 1) * scored];
            for l in 0..labels.len() {
                if let Some(c) = labels.scored_column(l) {
                    chart.set(i, j, l, s[c]);
                }
            }
            row += 1;
        }
    }
    chart
}

/// All span scores in two matrix products.
pub fn score_chart(
    fenceposts: &Tensor,
    params: &ScorerParams<Tensor>,
    labels: &LabelVocabulary,
) -> Result<ScoreChart, ScoreError> {
    params.check(fenceposts, labels)?;
    let (rows, d) = fenceposts.dims2();
    let n = rows - 1;
    let (h, _) = params.w1.dims2();
    let scored = labels.len() - 1;
    let p = kernels::matmul_nt(fenceposts.data(), params.w1.data(), rows, d, h);
    let num_spans = n * (n + 1) / 2;
    let mut hidden = Vec::with_capacity(num_spans * h);
    for i in 0..n {
        let pi = &p[i * h..(i + 1) * h];
        for j in i + 1..=n {
            let pj = &p[j * h..(j + 1) * h];
            hidden.extend(
                pj.iter()
                    .zip(pi)
                    .zip(params.z1.data())
                    .map(|((a, b), z)| (a - b + z).max(0.0)),
            );
        }
    }
    let mut out = kernels::matmul_nt(&hidden, params.w2.data(), num_spans, h, scored);
    for chunk in out.chunks_mut(scored) {
        for (o, z) in chunk.iter_mut().zip(params.z2.data()) {
            *o += z;
        }
    }
    Ok(fill_chart(n, labels, &out))
}

/// Span-by-span evaluation of the same network, without the projection
/// shortcut. Used to cross-check [`score_chart`].
pub fn score_chart_per_span(
    fenceposts: &Tensor,
    params: &ScorerParams<Tensor>,
    labels: &LabelVocabulary,
) -> Result<ScoreChart, ScoreError> {
    params.check(fenceposts, labels)?;
    let n = fenceposts.rows() - 1;
    let (h, d) = params.w1.dims2();
    let scored = labels.len() - 1;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..=n {
            let rep = span_rep(fenceposts, i, j)?;
            let hidden: Vec<f64> = (0..h)
                .map(|r| (kernels::dot(&params.w1.data()[r * d..(r + 1) * d], &rep) + params.z1.data()[r]).max(0.0))
                .collect();
            out.extend((0..scored).map(|r| kernels::dot(params.w2.row(r), &hidden) + params.z2.data()[r]));
        }
    }
    Ok(fill_chart(n, labels, &out))
}

/// A chart entry with a constant weight, used to build a differentiable
/// linear combination of span scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedEntry {
    pub start: usize,
    pub end: usize,
    /// Vocabulary index; must not be the dummy.
    pub label: usize,
    pub weight: f64,
}

/// `sum_k w_k s(i_k, j_k, l_k)` on the tape, evaluating the network only on
/// the listed spans. Entries sharing a span share one network evaluation.
pub fn weighted_span_scores(
    tape: &mut Tape,
    fenceposts: Var,
    params: &ScorerParams<Var>,
    labels: &LabelVocabulary,
    entries: &[WeightedEntry],
) -> Var {
    let scored = labels.len() - 1;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for e in entries {
        let col = labels
            .scored_column(e.label)
            .expect("dummy entries carry no score");
        let row = match pairs.iter().position(|&p| p == (e.start, e.end)) {
            Some(r) => r,
            None => {
                pairs.push((e.start, e.end));
                weights.extend(std::iter::repeat(0.0).take(scored));
                pairs.len() - 1
            }
        };
        weights[row * scored + col] += e.weight;
    }
    if pairs.is_empty() {
        let zero = tape.leaf(Tensor::scalar(0.0));
        return tape.scale(zero, 1.0);
    }
    let p = tape.matmul_nt(fenceposts, params.w1);
    let diff = tape.row_diff(p, &pairs);
    let pre = tape.add_row(diff, params.z1);
    let hidden = tape.relu(pre);
    let out = tape.matmul_nt(hidden, params.w2);
    let out = tape.add_row(out, params.z2);
    let weights = Tensor::matrix(pairs.len(), scored, weights);
    tape.weighted_sum(out, weights)
}
