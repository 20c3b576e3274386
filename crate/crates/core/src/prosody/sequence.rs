use std::collections::BTreeMap;
use std::fmt;

use super::label::{GeneralizedLabel, ProsodicLevel};
use super::tree::{validate_tree, LabeledSpan, ProsodicTree};
use super::ProsodyError;

/// Characters plus one boundary mark after each character.
///
/// `marks[k]` is the boundary after character `k+1`: `None`, or the level
/// whose boundary it is (`#1` PW, `#2` PPH, `#3` IPH). A higher mark implies
/// the lower boundaries. The final mark is always `#3`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BoundarySequence {
    chars: Vec<char>,
    marks: Vec<Option<ProsodicLevel>>,
}

impl BoundarySequence {
    pub fn new(chars: Vec<char>, marks: Vec<Option<ProsodicLevel>>) -> Result<Self, ProsodyError> {
        if chars.is_empty() {
            return Err(ProsodyError::EmptySentence);
        }
        if marks.len() != chars.len() {
            return Err(ProsodyError::LengthMismatch {
                expected: chars.len(),
                found: marks.len(),
            });
        }
        if marks[marks.len() - 1] != Some(ProsodicLevel::Iph) {
            return Err(ProsodyError::MissingFinalBoundary);
        }
        Ok(BoundarySequence { chars, marks })
    }

    /// Like [`BoundarySequence::new`], but forces the final mark to `#3`.
    pub fn normalized(
        chars: Vec<char>,
        mut marks: Vec<Option<ProsodicLevel>>,
    ) -> Result<Self, ProsodyError> {
        if let Some(last) = marks.last_mut() {
            *last = Some(ProsodicLevel::Iph);
        }
        Self::new(chars, marks)
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn marks(&self) -> &[Option<ProsodicLevel>] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn text(&self) -> String {
        self.chars.iter().collect()
    }

    /// Parses one corpus line such as `ab#1cd#3`, appending the final `#3`
    /// when it is missing.
    pub fn parse_line(line: &str) -> Result<Self, LineError> {
        let (chars, marks) = tokenize_line(line)?;
        Self::normalized(chars, marks).map_err(|_| LineError::EmptySentence)
    }
}

impl fmt::Display for BoundarySequence {
    /// Corpus line format: characters interleaved with `#1`/`#2`/`#3`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (c, m) in self.chars.iter().zip(&self.marks) {
            write!(f, "{c}")?;
            if let Some(level) = m {
                f.write_str(level.mark())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LineError {
    #[error("empty sentence")]
    EmptySentence,
    #[error("boundary before any character")]
    LeadingBoundary,
    #[error("malformed boundary token {token:?} at column {column}")]
    MalformedToken { token: String, column: usize },
    #[error("two boundary marks after character {index}")]
    RepeatedBoundary { index: usize },
}

/// Splits a line into characters and marks without normalizing the final
/// mark. Whitespace is ignored; `#` always starts a boundary token.
pub fn tokenize_line(line: &str) -> Result<(Vec<char>, Vec<Option<ProsodicLevel>>), LineError> {
    let mut chars = Vec::new();
    let mut marks: Vec<Option<ProsodicLevel>> = Vec::new();
    let mut it = line.chars().enumerate().peekable();
    while let Some((column, c)) = it.next() {
        if c.is_whitespace() {
            continue;
        }
        if c != '#' {
            chars.push(c);
            marks.push(None);
            continue;
        }
        let level = it
            .next_if(|(_, d)| matches!(d, '1'..='3'))
            .and_then(|(_, d)| ProsodicLevel::from_rank(d as u8 - b'0'));
        let Some(level) = level else {
            let token: String = std::iter::once(c)
                .chain(it.peek().map(|(_, d)| *d))
                .collect();
            return Err(LineError::MalformedToken { token, column });
        };
        match marks.last_mut() {
            None => return Err(LineError::LeadingBoundary),
            Some(Some(_)) => {
                return Err(LineError::RepeatedBoundary {
                    index: chars.len(),
                })
            }
            Some(slot) => *slot = Some(level),
        }
    }
    if chars.is_empty() {
        return Err(LineError::EmptySentence);
    }
    Ok((chars, marks))
}

/// Builds the tree whose level-`l` constituents are the maximal runs between
/// boundaries of level `>= l`, merging coextensive constituents.
pub fn sequence_to_tree(seq: &BoundarySequence) -> ProsodicTree {
    marks_to_tree(&seq.marks).expect("BoundarySequence invariants hold")
}

/// [`sequence_to_tree`] over raw marks; rejects empty input and a missing
/// final `#3`.
pub fn marks_to_tree(marks: &[Option<ProsodicLevel>]) -> Result<ProsodicTree, ProsodyError> {
    let n = marks.len();
    if n == 0 {
        return Err(ProsodyError::EmptySentence);
    }
    if marks[n - 1] != Some(ProsodicLevel::Iph) {
        return Err(ProsodyError::MissingFinalBoundary);
    }
    let mut extents: BTreeMap<(usize, usize), GeneralizedLabel> = BTreeMap::new();
    for level in ProsodicLevel::ALL {
        let mut start = 0;
        for (k, m) in marks.iter().enumerate() {
            if m.is_some_and(|m| m >= level) {
                let label = extents.entry((start, k + 1)).or_default();
                *label = label.with(level);
                start = k + 1;
            }
        }
    }
    let spans = extents
        .into_iter()
        .map(|((i, j), label)| LabeledSpan::new(i, j, label))
        .collect();
    Ok(ProsodicTree::new(n, spans))
}

/// Boundary marks of a valid tree: at each fencepost the highest level among
/// the constituents ending there.
pub fn tree_to_marks(tree: &ProsodicTree) -> Result<Vec<Option<ProsodicLevel>>, ProsodyError> {
    let report = validate_tree(tree);
    if !report.is_valid() {
        return Err(ProsodyError::InvalidTree(report));
    }
    let mut marks: Vec<Option<ProsodicLevel>> = vec![None; tree.sentence_len()];
    for s in tree.spans() {
        let slot = &mut marks[s.end - 1];
        *slot = (*slot).max(s.label.highest());
    }
    Ok(marks)
}

/// Pairs `chars` with the marks of `tree`.
pub fn tree_to_sequence(chars: &[char], tree: &ProsodicTree) -> Result<BoundarySequence, ProsodyError> {
    if chars.len() != tree.sentence_len() {
        return Err(ProsodyError::LengthMismatch {
            expected: tree.sentence_len(),
            found: chars.len(),
        });
    }
    let marks = tree_to_marks(tree)?;
    BoundarySequence::new(chars.to_vec(), marks)
}
