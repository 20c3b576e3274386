//! Boundary precision, recall and F1 per prosodic level, plus exact match.
//!
//! By default counting is cumulative: at a fencepost, level `l` is positive
//! when the mark is `l` or higher, so `#3` also counts as a PW and a PPH
//! boundary. The sentence-final mark is always `#3` and is not counted.
//! Counts are summed over the corpus before rates are computed.

use std::fmt;

use crate::prosody::{BoundarySequence, ProsodicLevel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Counting {
    /// `#3` counts for all three levels, `#2` for PW and PPH.
    #[default]
    Cumulative,
    /// A position counts only for the level of its own mark.
    ExactMarks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LevelCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl LevelCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{pred} predicted sentences but {gold} gold sentences")]
    CountMismatch { pred: usize, gold: usize },
    #[error("sentence {index}: predicted length {pred}, gold length {gold}")]
    LengthMismatch { index: usize, pred: usize, gold: usize },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    /// Indexed by level: PW, PPH, IPH.
    pub counts: [LevelCounts; 3],
    pub sentences: usize,
    pub exact: usize,
    pub counting: Counting,
}

fn positive(mark: Option<ProsodicLevel>, level: ProsodicLevel, counting: Counting) -> bool {
    match (mark, counting) {
        (None, _) => false,
        (Some(m), Counting::Cumulative) => m >= level,
        (Some(m), Counting::ExactMarks) => m == level,
    }
}

impl EvalReport {
    pub fn new(counting: Counting) -> Self {
        EvalReport {
            counting,
            ..Self::default()
        }
    }

    /// Adds one aligned sentence pair of mark lists.
    pub fn add(&mut self, pred: &[Option<ProsodicLevel>], gold: &[Option<ProsodicLevel>]) {
        assert_eq!(pred.len(), gold.len(), "aligned mark lists");
        let interior = pred.len().saturating_sub(1);
        for (level, counts) in ProsodicLevel::ALL.iter().zip(self.counts.iter_mut()) {
            for (&p, &g) in pred[..interior].iter().zip(&gold[..interior]) {
                match (positive(p, *level, self.counting), positive(g, *level, self.counting)) {
                    (true, true) => counts.tp += 1,
                    (true, false) => counts.fp += 1,
                    (false, true) => counts.fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        self.sentences += 1;
        if pred == gold {
            self.exact += 1;
        }
    }

    pub fn merge(&mut self, other: &EvalReport) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
        self.sentences += other.sentences;
        self.exact += other.exact;
    }

    pub fn level(&self, level: ProsodicLevel) -> &LevelCounts {
        &self.counts[level.rank() as usize - 1]
    }

    pub fn f1(&self, level: ProsodicLevel) -> f64 {
        self.level(level).f1()
    }

    pub fn exact_match(&self) -> f64 {
        ratio(self.exact, self.sentences)
    }

    /// Mean of the three level F1 scores.
    pub fn mean_f1(&self) -> f64 {
        self.counts.iter().map(LevelCounts::f1).sum::<f64>() / 3.0
    }

    /// Machine-readable `key=value` lines.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for level in ProsodicLevel::ALL {
            let c = self.level(level);
            let k = level.name().to_lowercase();
            out.push_str(&format!("{k}_precision={:.6}\n", c.precision()));
            out.push_str(&format!("{k}_recall={:.6}\n", c.recall()));
            out.push_str(&format!("{k}_f1={:.6}\n", c.f1()));
            out.push_str(&format!("{k}_tp={}\n{k}_fp={}\n{k}_fn={}\n", c.tp, c.fp, c.fn_));
        }
        out.push_str(&format!("exact_match={:.6}\n", self.exact_match()));
        out.push_str(&format!("sentences={}\n", self.sentences));
        out
    }
}

impl fmt::Display for EvalReport {
    /// Percentages in a `Pre Rec F1` block per level.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:^23}|{:^23}|{:^23}", "PW", "PPH", "IPH")?;
        let head = format!("{:>7}{:>7}{:>7}  ", "Pre", "Rec", "F1");
        writeln!(f, "{head}|{head}|{head}")?;
        let cells: Vec<String> = ProsodicLevel::ALL
            .iter()
            .map(|&l| {
                let c = self.level(l);
                format!(
                    "{:>7.2}{:>7.2}{:>7.2}  ",
                    100.0 * c.precision(),
                    100.0 * c.recall(),
                    100.0 * c.f1()
                )
            })
            .collect();
        writeln!(f, "{}", cells.join("|"))?;
        write!(
            f,
            "exact match: {:.2}% ({}/{})",
            100.0 * self.exact_match(),
            self.exact,
            self.sentences
        )
    }
}

/// Scores aligned predicted and gold sentences.
pub fn evaluate(
    pred: &[BoundarySequence],
    gold: &[BoundarySequence],
    counting: Counting,
) -> Result<EvalReport, MetricsError> {
    if pred.len() != gold.len() {
        return Err(MetricsError::CountMismatch {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    let mut report = EvalReport::new(counting);
    for (index, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(MetricsError::LengthMismatch {
                index,
                pred: p.len(),
                gold: g.len(),
            });
        }
        report.add(p.marks(), g.marks());
    }
    Ok(report)
}
