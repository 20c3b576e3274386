use std::fmt;
use std::str::FromStr;

use super::ProsodyError;

/// The three prosodic levels, ordered `PW < PPH < IPH`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProsodicLevel {
    /// Prosodic word, boundary mark `#1`.
    Pw,
    /// Prosodic phrase, boundary mark `#2`.
    Pph,
    /// Intonational phrase, boundary mark `#3`.
    Iph,
}

impl ProsodicLevel {
    pub const ALL: [ProsodicLevel; 3] = [ProsodicLevel::Pw, ProsodicLevel::Pph, ProsodicLevel::Iph];

    /// 1 for PW, 2 for PPH, 3 for IPH: the digit of the boundary mark.
    pub fn rank(self) -> u8 {
        match self {
            ProsodicLevel::Pw => 1,
            ProsodicLevel::Pph => 2,
            ProsodicLevel::Iph => 3,
        }
    }

    pub fn from_rank(rank: u8) -> Option<Self> {
        match rank {
            1 => Some(ProsodicLevel::Pw),
            2 => Some(ProsodicLevel::Pph),
            3 => Some(ProsodicLevel::Iph),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProsodicLevel::Pw => "PW",
            ProsodicLevel::Pph => "PPH",
            ProsodicLevel::Iph => "IPH",
        }
    }

    pub fn mark(self) -> &'static str {
        match self {
            ProsodicLevel::Pw => "#1",
            ProsodicLevel::Pph => "#2",
            ProsodicLevel::Iph => "#3",
        }
    }

    fn bit(self) -> u8 {
        1 << (self.rank() - 1)
    }
}

impl fmt::Display for ProsodicLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A span label: either the dummy label `∅` used for binarization nodes, or a
/// non-empty set of coextensive prosodic levels (a merged label such as
/// `#2-#1` for a span that is both a PW and a PPH).
///
/// Stored as a bit set; the empty set is the dummy.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GeneralizedLabel(u8);

impl GeneralizedLabel {
    pub const DUMMY: GeneralizedLabel = GeneralizedLabel(0);
    pub const PW: GeneralizedLabel = GeneralizedLabel(0b001);
    pub const PPH: GeneralizedLabel = GeneralizedLabel(0b010);
    pub const IPH: GeneralizedLabel = GeneralizedLabel(0b100);

    pub fn from_levels(levels: impl IntoIterator<Item = ProsodicLevel>) -> Self {
        GeneralizedLabel(levels.into_iter().fold(0, |acc, l| acc | l.bit()))
    }

    pub fn single(level: ProsodicLevel) -> Self {
        GeneralizedLabel(level.bit())
    }

    pub fn is_dummy(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, level: ProsodicLevel) -> bool {
        self.0 & level.bit() != 0
    }

    pub fn with(self, level: ProsodicLevel) -> Self {
        GeneralizedLabel(self.0 | level.bit())
    }

    pub fn without(self, level: ProsodicLevel) -> Self {
        GeneralizedLabel(self.0 & !level.bit())
    }

    pub fn union(self, other: Self) -> Self {
        GeneralizedLabel(self.0 | other.0)
    }

    /// Levels in ascending order.
    pub fn levels(self) -> impl DoubleEndedIterator<Item = ProsodicLevel> {
        ProsodicLevel::ALL.into_iter().filter(move |l| self.contains(*l))
    }

    pub fn highest(self) -> Option<ProsodicLevel> {
        self.levels().last()
    }

    pub fn lowest(self) -> Option<ProsodicLevel> {
        self.levels().next()
    }
}

impl fmt::Display for GeneralizedLabel {
    /// Greatest level first: `#3-#2-#1`; the dummy prints as `∅`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_dummy() {
            return f.write_str("∅");
        }
        let marks: Vec<&str> = self.levels().rev().map(ProsodicLevel::mark).collect();
        f.write_str(&marks.join("-"))
    }
}

impl fmt::Debug for GeneralizedLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for GeneralizedLabel {
    type Err = ProsodyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "∅" {
            return Ok(GeneralizedLabel::DUMMY);
        }
        let mut label = GeneralizedLabel::DUMMY;
        for part in s.split('-') {
            let level = part
                .strip_prefix('#')
                .and_then(|d| d.parse::<u8>().ok())
                .and_then(ProsodicLevel::from_rank)
                .ok_or_else(|| ProsodyError::BadLabel(s.to_string()))?;
            if label.contains(level) {
                return Err(ProsodyError::BadLabel(s.to_string()));
            }
            label = label.with(level);
        }
        Ok(label)
    }
}

/// Indexed label set `0..L`; the dummy appears exactly once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<GeneralizedLabel>,
    dummy_index: usize,
}

impl LabelVocabulary {
    pub fn new(labels: Vec<GeneralizedLabel>) -> Result<Self, ProsodyError> {
        let dummies: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_dummy())
            .map(|(i, _)| i)
            .collect();
        if dummies.len() != 1 {
            return Err(ProsodyError::BadVocabulary(format!(
                "the dummy label must appear exactly once, found {}",
                dummies.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(ProsodyError::BadVocabulary(format!("duplicate label {a}")));
            }
        }
        Ok(LabelVocabulary {
            dummy_index: dummies[0],
            labels,
        })
    }

    /// The seven labels `∅, PW, PPH, IPH, PW·PPH, PW·PPH·IPH, PPH·IPH`.
    pub fn standard() -> Self {
        use ProsodicLevel::*;
        let labels = vec![
            GeneralizedLabel::DUMMY,
            GeneralizedLabel::from_levels([Pw]),
            GeneralizedLabel::from_levels([Pph]),
            GeneralizedLabel::from_levels([Iph]),
            GeneralizedLabel::from_levels([Pw, Pph]),
            GeneralizedLabel::from_levels([Pw, Pph, Iph]),
            GeneralizedLabel::from_levels([Pph, Iph]),
        ];
        Self::new(labels).expect("standard vocabulary is well formed")
    }

    /// `∅, PW, PPH, IPH`: the atomic labels only.
    pub fn atomic() -> Self {
        let labels = vec![
            GeneralizedLabel::DUMMY,
            GeneralizedLabel::PW,
            GeneralizedLabel::PPH,
            GeneralizedLabel::IPH,
        ];
        Self::new(labels).expect("atomic vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dummy_index(&self) -> usize {
        self.dummy_index
    }

    pub fn label(&self, index: usize) -> GeneralizedLabel {
        self.labels[index]
    }

    pub fn labels(&self) -> &[GeneralizedLabel] {
        &self.labels
    }

    pub fn index_of(&self, label: GeneralizedLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Position of label `index` among the non-dummy labels (the scorer's
    /// output column), or `None` for the dummy.
    pub fn scored_column(&self, index: usize) -> Option<usize> {
        match index.cmp(&self.dummy_index) {
            std::cmp::Ordering::Less => Some(index),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(index - 1),
        }
    }

    /// Comma-separated text form, e.g. `∅,#1,#2`.
    pub fn to_text(&self) -> String {
        self.labels
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_text(text: &str) -> Result<Self, ProsodyError> {
        let labels = text
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(labels)
    }
}

impl Default for LabelVocabulary {
    fn default() -> Self {
        Self::standard()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_are_ordered() {
        assert!(ProsodicLevel::Pw < ProsodicLevel::Pph);
        assert!(ProsodicLevel::Pph < ProsodicLevel::Iph);
    }

    #[test]
    fn merged_labels_print_greatest_first() {
        let l = GeneralizedLabel::from_levels([ProsodicLevel::Pw, ProsodicLevel::Pph]);
        assert_eq!(l.to_string(), "#2-#1");
        assert_eq!("#2-#1".parse::<GeneralizedLabel>().unwrap(), l);
        assert_eq!("#1-#2".parse::<GeneralizedLabel>().unwrap(), l);
        assert_eq!(GeneralizedLabel::DUMMY.to_string(), "∅");
        assert!("#4".parse::<GeneralizedLabel>().is_err());
        assert!("#1-#1".parse::<GeneralizedLabel>().is_err());
    }

    #[test]
    fn standard_vocabulary() {
        let v = LabelVocabulary::standard();
        assert_eq!(v.len(), 7);
        assert_eq!(v.dummy_index(), 0);
        assert_eq!(v.to_text(), "∅,#1,#2,#3,#2-#1,#3-#2-#1,#3-#2");
        assert_eq!(LabelVocabulary::from_text(&v.to_text()).unwrap(), v);
        assert_eq!(v.scored_column(0), None);
        assert_eq!(v.scored_column(6), Some(5));
    }

    #[test]
    fn vocabulary_needs_exactly_one_dummy() {
        assert!(LabelVocabulary::new(vec![GeneralizedLabel::PW]).is_err());
        assert!(LabelVocabulary::new(vec![GeneralizedLabel::DUMMY, GeneralizedLabel::DUMMY]).is_err());
        assert!(LabelVocabulary::new(vec![
            GeneralizedLabel::PW,
            GeneralizedLabel::DUMMY,
            GeneralizedLabel::PW
        ])
        .is_err());
    }
}
