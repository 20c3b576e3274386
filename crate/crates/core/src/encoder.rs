//! Self-attention encoder producing one vector per fencepost.
//!
//! The token sequence is `[BOS, c_1..c_n, EOS]`. Row `k` of the output is the
//! hidden state of token `k` for `k = 0..=n`, so BOS supplies fencepost 0 and
//! the EOS state is computed but dropped. Blocks are post-norm: attention,
//! residual, layer norm, then feed-forward, residual, layer norm.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use prosody_autodiff::{Tape, Tensor, Var};
use rand::{Rng, RngCore};

use crate::vocab::CharVocab;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    /// Trainable table initialized from N(0, 0.02).
    Learned,
    /// Frozen vectors read from an embedding file.
    External,
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingSource::Learned => "learned",
            EmbeddingSource::External => "external",
        })
    }
}

impl FromStr for EmbeddingSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "learned" => Ok(EmbeddingSource::Learned),
            "external" | "external-file" => Ok(EmbeddingSource::External),
            other => Err(format!("expected `learned` or `external`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Rows of the embedding table, reserved tokens included.
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    /// Longest token sequence accepted, BOS and EOS included.
    pub max_len: usize,
    pub embedding_source: EmbeddingSource,
    /// Dropout on sublayer outputs during training; 0 disables it.
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 3,
            d_model: 64,
            n_blocks: 2,
            n_heads: 4,
            d_ff: 128,
            max_len: 512,
            embedding_source: EmbeddingSource::Learned,
            dropout: 0.0,
        }
    }
}

impl EncoderConfig {
    pub fn check(&self) -> Result<(), EncodeError> {
        let bad = |msg: String| Err(EncodeError::BadConfig(msg));
        if self.d_model == 0 || self.d_ff == 0 || self.n_heads == 0 {
            return bad("d_model, d_ff and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.max_len < 3 {
            return bad(format!("max_len {} leaves no room for a character", self.max_len));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Longest sentence in characters.
    pub fn max_chars(&self) -> usize {
        self.max_len - 2
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncodeError {
    #[error("sentence of {chars} characters exceeds the limit of {max}")]
    TooLong { chars: usize, max: usize },
    #[error("empty sentence")]
    Empty,
    #[error("bad encoder configuration: {0}")]
    BadConfig(String),
    #[error("embedding file line {line}: {msg}")]
    EmbeddingFile { line: usize, msg: String },
    #[error("embedding file: {0}")]
    EmbeddingIo(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams<T> {
    pub attn_q_w: T,
    pub attn_q_b: T,
    pub attn_k_w: T,
    pub attn_k_b: T,
    pub attn_v_w: T,
    pub attn_v_b: T,
    pub attn_o_w: T,
    pub attn_o_b: T,
    pub ln1_gain: T,
    pub ln1_bias: T,
    pub ffn_in_w: T,
    pub ffn_in_b: T,
    pub ffn_out_w: T,
    pub ffn_out_b: T,
    pub ln2_gain: T,
    pub ln2_bias: T,
}

impl<T> BlockParams<T> {
    const NAMES: [&'static str; 16] = [
        "attn.q.weight",
        "attn.q.bias",
        "attn.k.weight",
        "attn.k.bias",
        "attn.v.weight",
        "attn.v.bias",
        "attn.o.weight",
        "attn.o.bias",
        "ln1.gain",
        "ln1.bias",
        "ffn.in.weight",
        "ffn.in.bias",
        "ffn.out.weight",
        "ffn.out.bias",
        "ln2.gain",
        "ln2.bias",
    ];

    fn refs(&self) -> [&T; 16] {
        [
            &self.attn_q_w,
            &self.attn_q_b,
            &self.attn_k_w,
            &self.attn_k_b,
            &self.attn_v_w,
            &self.attn_v_b,
            &self.attn_o_w,
            &self.attn_o_b,
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ffn_in_w,
            &self.ffn_in_b,
            &self.ffn_out_w,
            &self.ffn_out_b,
            &self.ln2_gain,
            &self.ln2_bias,
        ]
    }

    fn refs_mut(&mut self) -> [&mut T; 16] {
        [
            &mut self.attn_q_w,
            &mut self.attn_q_b,
            &mut self.attn_k_w,
            &mut self.attn_k_b,
            &mut self.attn_v_w,
            &mut self.attn_v_b,
            &mut self.attn_o_w,
            &mut self.attn_o_b,
            &mut self.ln1_gain,
            &mut self.ln1_bias,
            &mut self.ffn_in_w,
            &mut self.ffn_in_b,
            &mut self.ffn_out_w,
            &mut self.ffn_out_b,
            &mut self.ln2_gain,
            &mut self.ln2_bias,
        ]
    }

    fn from_fn(mut f: impl FnMut(usize) -> T) -> Self {
        BlockParams {
            attn_q_w: f(0),
            attn_q_b: f(1),
            attn_k_w: f(2),
            attn_k_b: f(3),
            attn_v_w: f(4),
            attn_v_b: f(5),
            attn_o_w: f(6),
            attn_o_b: f(7),
            ln1_gain: f(8),
            ln1_bias: f(9),
            ffn_in_w: f(10),
            ffn_in_b: f(11),
            ffn_out_w: f(12),
            ffn_out_b: f(13),
            ln2_gain: f(14),
            ln2_bias: f(15),
        }
    }
}

/// Embedding table plus per-block weights. Linear weights are stored
/// `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T> {
    pub embedding: T,
    pub blocks: Vec<BlockParams<T>>,
}

impl<T> EncoderParams<T> {
    pub fn visit<'a>(&'a self, out: &mut Vec<(String, &'a T)>) {
        out.push(("embedding".to_string(), &self.embedding));
        for (b, block) in self.blocks.iter().enumerate() {
            for (name, t) in BlockParams::<T>::NAMES.iter().zip(block.refs()) {
                out.push((format!("block{b}.{name}"), t));
            }
        }
    }

    pub fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut T>) {
        out.push(&mut self.embedding);
        for block in &mut self.blocks {
            out.extend(block.refs_mut());
        }
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> EncoderParams<U> {
        EncoderParams {
            embedding: f(&self.embedding),
            blocks: self
                .blocks
                .iter()
                .map(|b| {
                    let r = b.refs();
                    BlockParams::from_fn(|i| f(r[i]))
                })
                .collect(),
        }
    }
}

fn uniform_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::matrix(rows, cols, data)
}

impl EncoderParams<Tensor> {
    /// Fresh parameters. With `embedding = None` the table is drawn from
    /// N(0, 0.02); otherwise the given table is used as is.
    pub fn init(cfg: &EncoderConfig, embedding: Option<Tensor>, rng: &mut impl Rng) -> Self {
        use rand_distr::{Distribution, Normal};
        let d = cfg.d_model;
        let embedding = embedding.unwrap_or_else(|| {
            let normal = Normal::new(0.0, 0.02).expect("valid normal");
            let data = (0..cfg.vocab_size * d).map(|_| normal.sample(rng)).collect();
            Tensor::matrix(cfg.vocab_size, d, data)
        });
        let blocks = (0..cfg.n_blocks)
            .map(|_| BlockParams {
                attn_q_w: uniform_matrix(rng, d, d),
                attn_q_b: Tensor::zeros(&[d]),
                attn_k_w: uniform_matrix(rng, d, d),
                attn_k_b: Tensor::zeros(&[d]),
                attn_v_w: uniform_matrix(rng, d, d),
                attn_v_b: Tensor::zeros(&[d]),
                attn_o_w: uniform_matrix(rng, d, d),
                attn_o_b: Tensor::zeros(&[d]),
                ln1_gain: Tensor::full(&[d], 1.0),
                ln1_bias: Tensor::zeros(&[d]),
                ffn_in_w: uniform_matrix(rng, cfg.d_ff, d),
                ffn_in_b: Tensor::zeros(&[cfg.d_ff]),
                ffn_out_w: uniform_matrix(rng, d, cfg.d_ff),
                ffn_out_b: Tensor::zeros(&[d]),
                ln2_gain: Tensor::full(&[d], 1.0),
                ln2_bias: Tensor::zeros(&[d]),
            })
            .collect();
        EncoderParams { embedding, blocks }
    }
}

/// Fixed sinusoidal encodings: `sin(p / 10000^(2i/d))` in even columns and
/// the matching cosine in odd ones.
pub fn positional_encoding(rows: usize, d: usize) -> Tensor {
    let mut t = Tensor::zeros(&[rows, d]);
    for p in 0..rows {
        let row = t.row_mut(p);
        for (c, v) in row.iter_mut().enumerate() {
            let pair = (c / 2) as f64;
            let angle = p as f64 / 10000f64.powf(2.0 * pair / d as f64);
            *v = if c % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    t
}

fn dropout(tape: &mut Tape, x: Var, p: f64, rng: &mut Option<&mut dyn RngCore>) -> Var {
    let Some(rng) = rng else { return x };
    if p == 0.0 {
        return x;
    }
    let shape = tape.value(x).shape().to_vec();
    let keep = 1.0 / (1.0 - p);
    let n: usize = shape.iter().product();
    let mask = (0..n)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    tape.mul_const(x, Tensor::new(shape, mask).expect("mask shape"))
}

fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Var {
    let y = tape.matmul_nt(x, w);
    tape.add_row(y, b)
}

fn attention(tape: &mut Tape, cfg: &EncoderConfig, b: &BlockParams<Var>, x: Var) -> Var {
    let q = linear(tape, x, b.attn_q_w, b.attn_q_b);
    let k = linear(tape, x, b.attn_k_w, b.attn_k_b);
    let v = linear(tape, x, b.attn_v_w, b.attn_v_b);
    let dh = cfg.d_model / cfg.n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let heads: Vec<Var> = (0..cfg.n_heads)
        .map(|h| {
            let (s, e) = (h * dh, (h + 1) * dh);
            let qh = tape.slice_cols(q, s, e);
            let kh = tape.slice_cols(k, s, e);
            let vh = tape.slice_cols(v, s, e);
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax_rows(scores);
            tape.matmul(weights, vh)
        })
        .collect();
    let joined = if heads.len() == 1 { heads[0] } else { tape.concat_cols(&heads) };
    linear(tape, joined, b.attn_o_w, b.attn_o_b)
}

/// Runs the encoder over `tokens` (which must already include BOS and EOS)
/// and returns the `(n+1) x d_model` fencepost matrix. Passing an RNG turns
/// on dropout.
pub fn encode(
    tape: &mut Tape,
    cfg: &EncoderConfig,
    params: &EncoderParams<Var>,
    tokens: &[usize],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<Var, EncodeError> {
    if tokens.len() < 3 {
        return Err(EncodeError::Empty);
    }
    if tokens.len() > cfg.max_len {
        return Err(EncodeError::TooLong {
            chars: tokens.len() - 2,
            max: cfg.max_chars(),
        });
    }
    let t = tokens.len();
    let emb = tape.embed(params.embedding, tokens);
    let pe = tape.leaf(positional_encoding(t, cfg.d_model));
    let mut h = tape.add(emb, pe);
    for b in &params.blocks {
        let a = attention(tape, cfg, b, h);
        let a = dropout(tape, a, cfg.dropout, &mut rng);
        let r = tape.add(h, a);
        h = tape.layer_norm(r, b.ln1_gain, b.ln1_bias, LAYER_NORM_EPS);

        let f = linear(tape, h, b.ffn_in_w, b.ffn_in_b);
        let f = tape.relu(f);
        let f = linear(tape, f, b.ffn_out_w, b.ffn_out_b);
        let f = dropout(tape, f, cfg.dropout, &mut rng);
        let r = tape.add(h, f);
        h = tape.layer_norm(r, b.ln2_gain, b.ln2_bias, LAYER_NORM_EPS);
    }
    Ok(tape.slice_rows(h, 0, t - 1))
}

/// Precomputed per-character vectors read from an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalEmbeddings {
    pub chars: CharVocab,
    /// `vocab.size() x dim`; the UNK, BOS and EOS rows are zero.
    pub table: Tensor,
}

impl ExternalEmbeddings {
    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    /// Parses `dim=<d>` followed by lines of one character, whitespace and
    /// `d` floats.
    pub fn parse(text: &str) -> Result<Self, EncodeError> {
        let err = |line: usize, msg: String| EncodeError::EmbeddingFile { line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| err(1, "missing `dim=<d>` header".into()))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| err(hl + 1, format!("expected `dim=<d>`, got `{}`", header.trim())))?;
        let mut chars = Vec::new();
        let mut rows: Vec<f64> = vec![0.0; 3 * dim];
        for (idx, line) in lines {
            let mut it = line.chars();
            let c = it.next().expect("non-empty line");
            let rest = it.as_str();
            if !rest.starts_with(char::is_whitespace) {
                return Err(err(idx + 1, "expected a single character followed by whitespace".into()));
            }
            let values = rest
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(idx + 1, e.to_string()))?;
            if values.len() != dim {
                return Err(err(idx + 1, format!("expected {dim} values, found {}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err(idx + 1, "non-finite value".into()));
            }
            chars.push(c);
            rows.extend(values);
        }
        let chars = CharVocab::new(chars).map_err(|e| EncodeError::EmbeddingIo(e.to_string()))?;
        let table = Tensor::matrix(chars.size(), dim, rows);
        Ok(ExternalEmbeddings { chars, table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncodeError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| EncodeError::EmbeddingIo(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}
