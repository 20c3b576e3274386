use std::collections::HashMap;

/// Index of the unknown-character token.
pub const UNK: usize = 0;
/// Index of the sentence-start token.
pub const BOS: usize = 1;
/// Index of the sentence-end token.
pub const EOS: usize = 2;
const RESERVED: usize = 3;

/// Character-to-index map; indices `0..3` are UNK, BOS and EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VocabError {
    #[error("duplicate character {0:?} in vocabulary")]
    Duplicate(char),
    #[error("bad character code {0:?}")]
    BadCode(String),
}

impl CharVocab {
    /// Builds from characters in order; fails on a repeat.
    pub fn new(chars: Vec<char>) -> Result<Self, VocabError> {
        let mut index = HashMap::with_capacity(chars.len());
        for (i, &c) in chars.iter().enumerate() {
            if index.insert(c, i + RESERVED).is_some() {
                return Err(VocabError::Duplicate(c));
            }
        }
        Ok(CharVocab { chars, index })
    }

    /// Every distinct character seen, sorted by code point.
    pub fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut all: Vec<char> = chars.into_iter().collect();
        all.sort_unstable();
        all.dedup();
        Self::new(all).expect("deduplicated")
    }

    /// Table size including the reserved tokens.
    pub fn size(&self) -> usize {
        self.chars.len() + RESERVED
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn get(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    /// `[BOS, c_1..c_n, EOS]` plus the number of characters mapped to UNK.
    pub fn tokens(&self, chars: &[char]) -> (Vec<usize>, usize) {
        let mut unknown = 0;
        let mut out = Vec::with_capacity(chars.len() + 2);
        out.push(BOS);
        for &c in chars {
            out.push(self.get(c).unwrap_or_else(|| {
                unknown += 1;
                UNK
            }));
        }
        out.push(EOS);
        (out, unknown)
    }

    /// Comma-separated code points; safe for any character.
    pub fn to_text(&self) -> String {
        self.chars
            .iter()
            .map(|&c| u32::from(c).to_string())
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let text = text.trim();
        if text.is_empty() {
            return Self::new(Vec::new());
        }
        let chars = text
            .split(',')
            .map(|code| {
                code.trim()
                    .parse::<u32>()
                    .ok()
                    .and_then(char::from_u32)
                    .ok_or_else(|| VocabError::BadCode(code.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(chars)
    }
}
