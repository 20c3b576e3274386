use std::fmt;

use super::label::{GeneralizedLabel, LabelVocabulary, ProsodicLevel};
use super::ProsodyError;

/// Constituent covering characters `start+1..=end` (1-based), i.e. the
/// fenceposts `start < end`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledSpan {
    pub start: usize,
    pub end: usize,
    pub label: GeneralizedLabel,
}

impl LabeledSpan {
    pub fn new(start: usize, end: usize, label: GeneralizedLabel) -> Self {
        LabeledSpan { start, end, label }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains_extent(&self, start: usize, end: usize) -> bool {
        self.start <= start && end <= self.end
    }

    /// True when the two extents overlap without one containing the other.
    pub fn crosses(&self, other: &LabeledSpan) -> bool {
        (self.start < other.start && other.start < self.end && self.end < other.end)
            || (other.start < self.start && self.start < other.end && other.end < self.end)
    }
}

impl fmt::Debug for LabeledSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.start, self.end, self.label)
    }
}

impl fmt::Display for LabeledSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.start, self.end, self.label)
    }
}

/// A set of labeled spans over a sentence of `n` characters, with an
/// implicit unlabeled root over `(0, n)`.
///
/// Construction does not enforce well-formedness; see [`validate_tree`].
/// Spans are kept in canonical order (start ascending, then end descending).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ProsodicTree {
    n: usize,
    spans: Vec<LabeledSpan>,
}

impl ProsodicTree {
    pub fn new(n: usize, mut spans: Vec<LabeledSpan>) -> Self {
        spans.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)).then(a.label.cmp(&b.label)));
        ProsodicTree { n, spans }
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    pub fn spans(&self) -> &[LabeledSpan] {
        &self.spans
    }

    pub fn into_spans(self) -> Vec<LabeledSpan> {
        self.spans
    }

    /// Label of extent `(start, end)`, or the dummy when absent.
    pub fn label_at(&self, start: usize, end: usize) -> GeneralizedLabel {
        self.spans
            .iter()
            .find(|s| s.start == start && s.end == end)
            .map_or(GeneralizedLabel::DUMMY, |s| s.label)
    }

    /// Spans carrying `level`, sorted by start.
    pub fn level_spans(&self, level: ProsodicLevel) -> Vec<LabeledSpan> {
        let mut v: Vec<LabeledSpan> = self
            .spans
            .iter()
            .filter(|s| s.label.contains(level))
            .copied()
            .collect();
        v.sort_by_key(|s| (s.start, s.end));
        v
    }

    pub fn count_level(&self, level: ProsodicLevel) -> usize {
        self.spans.iter().filter(|s| s.label.contains(level)).count()
    }

    /// Space-separated `start:end:label` list, e.g. `0:2:#1 0:4:#3-#2`.
    pub fn spans_text(&self) -> String {
        self.spans
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn parse_spans(n: usize, text: &str) -> Result<Self, ProsodyError> {
        let mut spans = Vec::new();
        for tok in text.split_whitespace() {
            let bad = || ProsodyError::BadSpan(tok.to_string());
            let mut parts = tok.splitn(3, ':');
            let start = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            let end = parts.next().and_then(|p| p.parse().ok()).ok_or_else(bad)?;
            let label = parts.next().ok_or_else(bad)?.parse()?;
            spans.push(LabeledSpan::new(start, end, label));
        }
        Ok(ProsodicTree::new(n, spans))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptySentence,
    OutOfRange(LabeledSpan),
    DummyLabel(LabeledSpan),
    /// Two spans share an extent; coextensive constituents must be one merged label.
    DuplicateExtent(LabeledSpan, LabeledSpan),
    Crossing(LabeledSpan, LabeledSpan),
    /// Characters `start+1..=end` are not covered at `level`.
    Gap {
        level: ProsodicLevel,
        start: usize,
        end: usize,
    },
    /// Two spans of the same level overlap.
    Overlap {
        level: ProsodicLevel,
        first: LabeledSpan,
        second: LabeledSpan,
    },
    /// `span` is not inside any span of the next level up.
    NotContained {
        span: LabeledSpan,
        level: ProsodicLevel,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySentence => write!(f, "empty sentence"),
            Violation::OutOfRange(s) => write!(f, "span {s:?} out of range"),
            Violation::DummyLabel(s) => write!(f, "span {s:?} carries the dummy label"),
            Violation::DuplicateExtent(a, b) => {
                write!(f, "duplicate extent {a:?} and {b:?} must be merged into one label")
            }
            Violation::Crossing(a, b) => write!(f, "overlap {a:?} x {b:?}"),
            Violation::Gap { level, start, end } => {
                write!(f, "{level} does not cover ({start},{end})")
            }
            Violation::Overlap { level, first, second } => {
                write!(f, "{level} spans {first:?} and {second:?} overlap")
            }
            Violation::NotContained { span, level } => {
                write!(f, "{span:?} is not inside any {level}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Checks nesting, per-level partition of `(0, n)` and level containment.
pub fn validate_tree(tree: &ProsodicTree) -> ValidationReport {
    let mut violations = Vec::new();
    let n = tree.n;
    if n == 0 {
        violations.push(Violation::EmptySentence);
        return ValidationReport { violations };
    }
    let mut usable = Vec::new();
    for s in &tree.spans {
        if s.start >= s.end || s.end > n {
            violations.push(Violation::OutOfRange(*s));
        } else if s.label.is_dummy() {
            violations.push(Violation::DummyLabel(*s));
        } else {
            usable.push(*s);
        }
    }
    for (k, a) in usable.iter().enumerate() {
        for b in &usable[k + 1..] {
            if a.start == b.start && a.end == b.end {
                violations.push(Violation::DuplicateExtent(*a, *b));
            } else if a.crosses(b) {
                violations.push(Violation::Crossing(*a, *b));
            }
        }
    }
    for level in ProsodicLevel::ALL {
        let mut spans: Vec<&LabeledSpan> = usable.iter().filter(|s| s.label.contains(level)).collect();
        spans.sort_by_key(|s| (s.start, s.end));
        let mut cursor = 0;
        let mut prev: Option<&LabeledSpan> = None;
        for s in spans {
            if s.start > cursor {
                violations.push(Violation::Gap {
                    level,
                    start: cursor,
                    end: s.start,
                });
            } else if s.start < cursor {
                violations.push(Violation::Overlap {
                    level,
                    first: *prev.expect("cursor > 0 implies a previous span"),
                    second: *s,
                });
            }
            if s.end > cursor {
                cursor = s.end;
                prev = Some(s);
            }
        }
        if cursor < n {
            violations.push(Violation::Gap {
                level,
                start: cursor,
                end: n,
            });
        }
    }
    for (lower, upper) in [
        (ProsodicLevel::Pw, ProsodicLevel::Pph),
        (ProsodicLevel::Pph, ProsodicLevel::Iph),
    ] {
        for s in usable.iter().filter(|s| s.label.contains(lower)) {
            let inside = usable
                .iter()
                .any(|t| t.label.contains(upper) && t.contains_extent(s.start, s.end));
            if !inside {
                violations.push(Violation::NotContained { span: *s, level: upper });
            }
        }
    }
    ValidationReport { violations }
}

/// One node of a binarized derivation; `label` indexes a [`LabelVocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DerivationSpan {
    pub start: usize,
    pub end: usize,
    pub label: usize,
}

/// A full binarized derivation over `n` characters, dummy nodes included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Derivation {
    pub n: usize,
    pub spans: Vec<DerivationSpan>,
}

impl Derivation {
    /// Drops dummy-labeled nodes and maps label indices through `vocab`.
    pub fn to_tree(&self, vocab: &LabelVocabulary) -> ProsodicTree {
        let spans = self
            .spans
            .iter()
            .filter(|s| s.label != vocab.dummy_index())
            .map(|s| LabeledSpan::new(s.start, s.end, vocab.label(s.label)))
            .collect();
        ProsodicTree::new(self.n, spans)
    }
}

/// Gold label index for every extent of a sentence (dummy where absent).
#[derive(Debug, Clone)]
pub struct GoldLabels {
    n: usize,
    table: Vec<usize>,
}

impl GoldLabels {
    pub fn new(gold: &ProsodicTree, vocab: &LabelVocabulary) -> Result<Self, ProsodyError> {
        let n = gold.sentence_len();
        let mut table = vec![vocab.dummy_index(); (n + 1) * (n + 1)];
        for s in gold.spans() {
            if s.start >= s.end || s.end > n {
                return Err(ProsodyError::SpanOutOfRange { span: *s, n });
            }
            let idx = vocab
                .index_of(s.label)
                .ok_or(ProsodyError::LabelNotInVocabulary(s.label))?;
            table[s.start * (n + 1) + s.end] = idx;
        }
        Ok(GoldLabels { n, table })
    }

    pub fn sentence_len(&self) -> usize {
        self.n
    }

    pub fn get(&self, start: usize, end: usize) -> usize {
        self.table[start * (self.n + 1) + end]
    }
}

/// Number of derivation nodes whose label differs from the gold label of the
/// same extent (the dummy when gold has no such span).
pub fn hamming_delta(
    derivation: &Derivation,
    gold: &ProsodicTree,
    vocab: &LabelVocabulary,
) -> Result<usize, ProsodyError> {
    if derivation.n != gold.sentence_len() {
        return Err(ProsodyError::LengthMismatch {
            expected: gold.sentence_len(),
            found: derivation.n,
        });
    }
    let gold = GoldLabels::new(gold, vocab)?;
    Ok(derivation
        .spans
        .iter()
        .filter(|s| s.label != gold.get(s.start, s.end))
        .count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosody::label::ProsodicLevel::*;

    fn span(i: usize, j: usize, levels: &[ProsodicLevel]) -> LabeledSpan {
        LabeledSpan::new(i, j, GeneralizedLabel::from_levels(levels.iter().copied()))
    }

    #[test]
    fn single_span_tree_is_valid() {
        let t = ProsodicTree::new(2, vec![span(0, 2, &[Pw, Pph, Iph])]);
        assert!(validate_tree(&t).is_valid());
    }

    #[test]
    fn crossing_spans_are_reported() {
        let t = ProsodicTree::new(
            4,
            vec![span(0, 3, &[Pw]), span(2, 4, &[Pw]), span(0, 4, &[Pph, Iph])],
        );
        let report = validate_tree(&t);
        assert!(report
            .violations
            .contains(&Violation::Crossing(span(0, 3, &[Pw]), span(2, 4, &[Pw]))));
        assert!(report.to_string().contains("overlap (0,3,#1) x (2,4,#1)"));
    }

    #[test]
    fn duplicate_extent_must_be_merged() {
        let t = ProsodicTree::new(2, vec![span(0, 2, &[Pw]), span(0, 2, &[Pph, Iph])]);
        let report = validate_tree(&t);
        assert!(matches!(report.violations[0], Violation::DuplicateExtent(..)));
    }

    #[test]
    fn higher_level_inside_lower_is_not_contained() {
        // PPHs (0,1),(1,2) inside a single PW (0,2)
        let t = ProsodicTree::new(
            2,
            vec![span(0, 2, &[Pw, Iph]), span(0, 1, &[Pph]), span(1, 2, &[Pph])],
        );
        let report = validate_tree(&t);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NotContained { level: Pph, .. })));
    }

    #[test]
    fn gaps_and_dummy_labels() {
        let t = ProsodicTree::new(
            3,
            vec![span(0, 1, &[Pw, Pph, Iph]), LabeledSpan::new(1, 3, GeneralizedLabel::DUMMY)],
        );
        let report = validate_tree(&t);
        assert!(report.violations.contains(&Violation::Gap { level: Pw, start: 1, end: 3 }));
        assert!(matches!(report.violations[0], Violation::DummyLabel(_)));
        assert_eq!(
            validate_tree(&ProsodicTree::new(0, vec![])).violations,
            vec![Violation::EmptySentence]
        );
    }

    #[test]
    fn span_text_round_trip() {
        let t = ProsodicTree::new(4, vec![span(0, 2, &[Pw]), span(2, 4, &[Pw]), span(0, 4, &[Pph, Iph])]);
        assert_eq!(t.spans_text(), "0:4:#3-#2 0:2:#1 2:4:#1");
        assert_eq!(ProsodicTree::parse_spans(4, &t.spans_text()).unwrap(), t);
        assert!(ProsodicTree::parse_spans(4, "0:x:#1").is_err());
    }

    #[test]
    fn hamming_counts_label_mismatches() {
        let vocab = LabelVocabulary::standard();
        let gold = ProsodicTree::new(2, vec![span(0, 1, &[Pw]), span(1, 2, &[Pw]), span(0, 2, &[Pph, Iph])]);
        let pw = vocab.index_of(GeneralizedLabel::PW).unwrap();
        let top = vocab.index_of(GeneralizedLabel::from_levels([Pph, Iph])).unwrap();
        let own = Derivation {
            n: 2,
            spans: vec![
                DerivationSpan { start: 0, end: 2, label: top },
                DerivationSpan { start: 0, end: 1, label: pw },
                DerivationSpan { start: 1, end: 2, label: pw },
            ],
        };
        assert_eq!(hamming_delta(&own, &gold, &vocab).unwrap(), 0);
        let mut one_off = own.clone();
        one_off.spans[2].label = vocab.dummy_index();
        assert_eq!(hamming_delta(&one_off, &gold, &vocab).unwrap(), 1);
        let short = Derivation { n: 1, spans: vec![] };
        assert!(hamming_delta(&short, &gold, &vocab).is_err());
    }
}
