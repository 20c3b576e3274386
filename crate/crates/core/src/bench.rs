//! Decode timing on random charts.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::ScoreChart;
use crate::decode::decode;
use crate::prosody::LabelVocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub trials: usize,
    /// Seconds per decode.
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

pub fn random_chart(n: usize, labels: &LabelVocabulary, rng: &mut impl Rng) -> ScoreChart {
    ScoreChart::from_fn(n, labels.clone(), |_, _, _| rng.gen_range(-1.0..1.0))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// Decodes repeatedly until about a millisecond has passed, so short
/// decodes are not lost in timer noise; returns seconds per decode.
fn time_decode(chart: &ScoreChart, reps: usize) -> f64 {
    let start = Instant::now();
    let mut sink = 0.0;
    for _ in 0..reps {
        sink += decode(chart).expect("non-empty chart").score;
    }
    let elapsed = start.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    elapsed / reps as f64
}

/// Times `decode` on fresh random charts at each length. Lengths are
/// interleaved within each trial so slow drifts in machine load hit all of
/// them alike.
pub fn bench_decode(lengths: &[usize], trials: usize, labels: &LabelVocabulary, seed: u64) -> Vec<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reps: Vec<usize> = lengths
        .iter()
        .map(|&n| {
            let probe = random_chart(n.max(1), labels, &mut rng);
            let once = time_decode(&probe, 1).max(1e-7);
            ((1e-3 / once).ceil() as usize).clamp(1, 10_000)
        })
        .collect();
    let mut times: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); lengths.len()];
    for _ in 0..trials {
        for (k, &n) in lengths.iter().enumerate() {
            let chart = random_chart(n.max(1), labels, &mut rng);
            times[k].push(time_decode(&chart, reps[k]));
        }
    }
    lengths
        .iter()
        .zip(times)
        .map(|(&n, mut t)| {
            let min = t.iter().copied().fold(f64::INFINITY, f64::min);
            let max = t.iter().copied().fold(0.0, f64::max);
            BenchRow {
                n,
                trials,
                median: if t.is_empty() { 0.0 } else { median(&mut t) },
                min,
                max,
            }
        })
        .collect()
}
