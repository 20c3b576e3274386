//! Corpus files in the boundary-mark line format, and a seeded generator of
//! synthetic corpora whose boundaries are signalled by cue characters.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{self, ConfigError, Settings};
use crate::prosody::{
    sequence_to_tree, tokenize_line, validate_tree, BoundarySequence, ProsodicLevel, ProsodicTree,
};

/// One annotated sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub sequence: BoundarySequence,
    pub tree: ProsodicTree,
}

impl Sentence {
    pub fn from_sequence(sequence: BoundarySequence) -> Self {
        let tree = sequence_to_tree(&sequence);
        Sentence { sequence, tree }
    }

    pub fn chars(&self) -> &[char] {
        self.sequence.chars()
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("synthetic corpus: {0}")]
    Synth(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

/// Summary of a corpus load.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadReport {
    pub loaded: usize,
    pub blank: usize,
    /// Lines whose missing final `#3` was appended.
    pub normalized: usize,
    pub rejected: Vec<LineIssue>,
}

impl fmt::Display for LoadReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "loaded {} sentences ({} normalized), rejected {} lines",
            self.loaded,
            self.normalized,
            self.rejected.len()
        )?;
        for issue in &self.rejected {
            write!(f, "\n  line {}: {}", issue.line, issue.message)?;
        }
        Ok(())
    }
}

/// Parses every non-blank line; bad lines are reported, not fatal.
pub fn parse_corpus(text: &str) -> (Vec<Sentence>, LoadReport) {
    let mut report = LoadReport::default();
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            report.blank += 1;
            continue;
        }
        let reject = |message: String| LineIssue { line: idx + 1, message };
        let (chars, marks) = match tokenize_line(line) {
            Ok(t) => t,
            Err(e) => {
                report.rejected.push(reject(e.to_string()));
                continue;
            }
        };
        if marks.last() != Some(&Some(ProsodicLevel::Iph)) {
            report.normalized += 1;
        }
        let sentence = match BoundarySequence::normalized(chars, marks) {
            Ok(seq) => Sentence::from_sequence(seq),
            Err(e) => {
                report.rejected.push(reject(e.to_string()));
                continue;
            }
        };
        let validation = validate_tree(&sentence.tree);
        if !validation.is_valid() {
            report.rejected.push(reject(validation.to_string()));
            continue;
        }
        report.loaded += 1;
        out.push(sentence);
    }
    (out, report)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Vec<Sentence>, LoadReport), CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_corpus(&text))
}

/// One sentence per line in the boundary-mark format.
pub fn write_corpus(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.sequence.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Debug view of the gold trees: `chars<TAB>i:j:label ...` per line.
pub fn write_tree_sidecar(path: impl AsRef<Path>, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    for s in sentences {
        writeln!(w, "{}\t{}", s.sequence.text(), s.tree.spans_text()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Inclusive count range for one branching decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

impl CountRange {
    pub const fn new(min: usize, max: usize) -> Self {
        CountRange { min, max }
    }
}

impl fmt::Display for CountRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

impl std::str::FromStr for CountRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once("..").ok_or_else(|| format!("expected `min..max`, got `{s}`"))?;
        let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| e.to_string());
        let r = CountRange::new(parse(a)?, parse(b)?);
        if r.min == 0 || r.min > r.max {
            return Err(format!("need 1 <= min <= max, got `{s}`"));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_sentences: usize,
    /// Characters used everywhere except cue positions.
    pub fillers: Vec<char>,
    /// Cue characters for constituents whose highest closing level is PW,
    /// PPH and IPH respectively.
    pub cues: [Vec<char>; 3],
    pub pw_per_pph: CountRange,
    pub pph_per_iph: CountRange,
    pub iph_per_sentence: CountRange,
    pub chars_per_pw: CountRange,
    /// Each extra unit above a range's minimum is this much less likely than
    /// the previous count (a truncated geometric law).
    pub decay: f64,
    /// Probability that a constituent ends in its level's cue. Where
    /// constituents share a final character the highest placed cue wins.
    pub cue_strength: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            n_sentences: 1000,
            fillers: "abcdefghijklmnop".chars().collect(),
            cues: [vec!['x'], vec!['y'], vec!['z']],
            pw_per_pph: CountRange::new(1, 3),
            pph_per_iph: CountRange::new(1, 3),
            iph_per_sentence: CountRange::new(1, 4),
            chars_per_pw: CountRange::new(1, 4),
            decay: 0.75,
            cue_strength: 1.0,
        }
    }
}

impl Settings for SynthConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool, ConfigError> {
        let chars = |v: &str| v.chars().filter(|c| !c.is_whitespace()).collect::<Vec<_>>();
        match key {
            "seed" => self.seed = config::value(key, v)?,
            "n_sentences" => self.n_sentences = config::value(key, v)?,
            "fillers" => self.fillers = chars(v),
            "cues_pw" => self.cues[0] = chars(v),
            "cues_pph" => self.cues[1] = chars(v),
            "cues_iph" => self.cues[2] = chars(v),
            "pw_per_pph" => self.pw_per_pph = config::value(key, v)?,
            "pph_per_iph" => self.pph_per_iph = config::value(key, v)?,
            "iph_per_sentence" => self.iph_per_sentence = config::value(key, v)?,
            "chars_per_pw" => self.chars_per_pw = config::value(key, v)?,
            "decay" => self.decay = config::value(key, v)?,
            "cue_strength" => self.cue_strength = config::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let s = |c: &[char]| c.iter().collect::<String>();
        vec![
            ("seed", self.seed.to_string()),
            ("n_sentences", self.n_sentences.to_string()),
            ("fillers", s(&self.fillers)),
            ("cues_pw", s(&self.cues[0])),
            ("cues_pph", s(&self.cues[1])),
            ("cues_iph", s(&self.cues[2])),
            ("pw_per_pph", self.pw_per_pph.to_string()),
            ("pph_per_iph", self.pph_per_iph.to_string()),
            ("iph_per_sentence", self.iph_per_sentence.to_string()),
            ("chars_per_pw", self.chars_per_pw.to_string()),
            ("decay", self.decay.to_string()),
            ("cue_strength", self.cue_strength.to_string()),
        ]
    }
}

impl SynthConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let mut cfg = SynthConfig::default();
        config::apply(&config::read_kv(path.as_ref())?, &mut [&mut cfg])?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Synth(m));
        if self.fillers.is_empty() {
            return bad("empty filler vocabulary".into());
        }
        if !(0.0..=1.0).contains(&self.cue_strength) {
            return bad(format!("cue_strength {} outside [0, 1]", self.cue_strength));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad(format!("decay {} outside (0, 1]", self.decay));
        }
        if self.cue_strength > 0.0 && self.cues.iter().any(Vec::is_empty) {
            return bad("every level needs at least one cue character".into());
        }
        let mut all: Vec<char> = self.fillers.iter().chain(self.cues.iter().flatten()).copied().collect();
        if all.iter().any(|&c| c == '#' || c.is_whitespace()) {
            return bad("`#` and whitespace cannot be corpus characters".into());
        }
        let total = all.len();
        all.sort_unstable();
        all.dedup();
        if all.len() != total {
            return bad("filler and cue characters must all be distinct".into());
        }
        for r in [self.pw_per_pph, self.pph_per_iph, self.iph_per_sentence, self.chars_per_pw] {
            if r.min == 0 || r.min > r.max {
                return bad(format!("bad range {r}"));
            }
        }
        Ok(())
    }

    /// Upper bound on generated sentence length.
    pub fn max_len(&self) -> usize {
        self.chars_per_pw.max * self.pw_per_pph.max * self.pph_per_iph.max * self.iph_per_sentence.max
    }
}

fn draw(rng: &mut impl Rng, range: CountRange, decay: f64) -> usize {
    let weights: Vec<f64> = (0..=range.max - range.min).map(|k| decay.powi(k as i32)).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return range.min + k;
        }
        u -= w;
    }
    range.max
}

fn generate_one(cfg: &SynthConfig, rng: &mut impl Rng) -> Sentence {
    let mut chars = Vec::new();
    let mut marks = Vec::new();
    let n_iph = draw(rng, cfg.iph_per_sentence, cfg.decay);
    for _ in 0..n_iph {
        let n_pph = draw(rng, cfg.pph_per_iph, cfg.decay);
        for pph in 0..n_pph {
            let n_pw = draw(rng, cfg.pw_per_pph, cfg.decay);
            for pw in 0..n_pw {
                let len = draw(rng, cfg.chars_per_pw, cfg.decay);
                for _ in 0..len {
                    chars.push(*cfg.fillers.choose(rng).expect("fillers checked"));
                    marks.push(None);
                }
                let level = if pw + 1 < n_pw {
                    ProsodicLevel::Pw
                } else if pph + 1 < n_pph {
                    ProsodicLevel::Pph
                } else {
                    ProsodicLevel::Iph
                };
                *marks.last_mut().expect("PW has a character") = Some(level);
                // every constituent ending here tries to place its own cue;
                // the highest one placed wins
                let placed = (1..=level.rank()).rev().find(|_| rng.gen::<f64>() < cfg.cue_strength);
                if let Some(rank) = placed {
                    let cues = &cfg.cues[rank as usize - 1];
                    *chars.last_mut().expect("PW has a character") = *cues.choose(rng).expect("cues checked");
                }
            }
        }
    }
    let seq = BoundarySequence::new(chars, marks).expect("generator closes the last IPH");
    Sentence::from_sequence(seq)
}

/// Samples `n_sentences` sentences top-down: IPHs per sentence, PPHs per IPH,
/// PWs per PPH and characters per PW.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<Sentence>, CorpusError> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.n_sentences).map(|_| generate_one(cfg, &mut rng)).collect())
}

/// Corpus size statistics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorpusStats {
    pub sentences: usize,
    pub max_len: usize,
    pub mean_len: f64,
    pub pw: usize,
    pub pph: usize,
    pub iph: usize,
}

pub fn corpus_stats(sentences: &[Sentence]) -> CorpusStats {
    let mut s = CorpusStats {
        sentences: sentences.len(),
        ..CorpusStats::default()
    };
    let mut total = 0;
    for sent in sentences {
        total += sent.len();
        s.max_len = s.max_len.max(sent.len());
        s.pw += sent.tree.count_level(ProsodicLevel::Pw);
        s.pph += sent.tree.count_level(ProsodicLevel::Pph);
        s.iph += sent.tree.count_level(ProsodicLevel::Iph);
    }
    if !sentences.is_empty() {
        s.mean_len = total as f64 / sentences.len() as f64;
    }
    s
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "S_num", "S_max", "S_ave", "PW", "PPH", "IPH")?;
        write!(
            f,
            "{:>8} {:>8} {:>8.1} {:>8} {:>8} {:>8}",
            self.sentences, self.max_len, self.mean_len, self.pw, self.pph, self.iph
        )
    }
}
