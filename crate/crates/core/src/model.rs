//! The full predictor: character vocabulary, encoder, span scorer, label
//! vocabulary, plus checkpoint I/O and the predict pipeline
//! (encode, score, decode, repair, convert).

use std::path::Path;

use prosody_autodiff::{Checkpoint, CheckpointError, Tape, Tensor, Var};
use rand::Rng;

use crate::chart::ScoreChart;
use crate::config::{self, ConfigError, Settings};
use crate::decode::{decode, DecodeError};
use crate::encoder::{encode, EmbeddingSource, EncodeError, EncoderConfig, EncoderParams, ExternalEmbeddings};
use crate::prosody::{repair_tree, tree_to_sequence, BoundarySequence, LabelVocabulary, ProsodicTree, ProsodyError};
use crate::scorer::{score_chart, ScoreError, ScorerParams};
use crate::vocab::CharVocab;

const MANIFEST_FORMAT: &str = "prosody-tree-model";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Hidden width of the span scorer.
    pub d_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            d_hidden: 128,
        }
    }
}

impl Settings for ModelConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool, ConfigError> {
        let e = &mut self.encoder;
        match key {
            "d_model" => e.d_model = config::value(key, v)?,
            "n_blocks" => e.n_blocks = config::value(key, v)?,
            "n_heads" => e.n_heads = config::value(key, v)?,
            "d_ff" => e.d_ff = config::value(key, v)?,
            "max_len" => e.max_len = config::value(key, v)?,
            "dropout" => e.dropout = config::value(key, v)?,
            "embedding_source" => e.embedding_source = config::value(key, v)?,
            "d_hidden" => self.d_hidden = config::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let e = &self.encoder;
        vec![
            ("d_model", e.d_model.to_string()),
            ("n_blocks", e.n_blocks.to_string()),
            ("n_heads", e.n_heads.to_string()),
            ("d_ff", e.d_ff.to_string()),
            ("max_len", e.max_len.to_string()),
            ("dropout", e.dropout.to_string()),
            ("embedding_source", e.embedding_source.to_string()),
            ("d_hidden", self.d_hidden.to_string()),
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Prosody(#[from] ProsodyError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("model manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Every learned tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub encoder: EncoderParams<T>,
    pub scorer: ScorerParams<T>,
}

impl<T> Params<T> {
    /// Tensors with their checkpoint names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        self.encoder.visit(&mut out);
        self.scorer.visit(&mut out);
        out
    }

    /// Same order as [`Params::named`].
    pub fn flat(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, t)| t).collect()
    }

    pub fn flat_mut(&mut self) -> Vec<&mut T> {
        let mut out = Vec::new();
        self.encoder.visit_mut(&mut out);
        self.scorer.visit_mut(&mut out);
        out
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Params<U> {
        Params {
            encoder: self.encoder.map(&mut f),
            scorer: self.scorer.map(&mut f),
        }
    }
}

impl Params<Tensor> {
    pub fn num_scalars(&self) -> usize {
        self.flat().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|t| t.is_finite())
    }

    /// Registers every tensor as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> Params<Var> {
        self.map(|t| tape.leaf(t.clone()))
    }
}

/// Output of [`Model::predict`].
#[derive(Debug, Clone)]
pub struct Prediction {
    /// Decoder output before repair.
    pub raw: ProsodicTree,
    pub tree: ProsodicTree,
    pub sequence: BoundarySequence,
    pub score: f64,
    /// Characters that were mapped to UNK.
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub chars: CharVocab,
    pub labels: LabelVocabulary,
    pub params: Params<Tensor>,
}

impl Model {
    /// Randomly initialized model with a learned embedding table.
    pub fn new_learned(
        mut config: ModelConfig,
        chars: CharVocab,
        labels: LabelVocabulary,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        config.encoder.embedding_source = EmbeddingSource::Learned;
        config.encoder.vocab_size = chars.size();
        config.encoder.check()?;
        let encoder = EncoderParams::init(&config.encoder, None, rng);
        let scorer = ScorerParams::init(config.encoder.d_model, config.d_hidden, &labels, rng);
        Ok(Model {
            config,
            chars,
            labels,
            params: Params { encoder, scorer },
        })
    }

    /// Randomly initialized model over frozen external embeddings, whose
    /// width must equal `d_model`.
    pub fn new_external(
        mut config: ModelConfig,
        embeddings: ExternalEmbeddings,
        labels: LabelVocabulary,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        if embeddings.dim() != config.encoder.d_model {
            return Err(EncodeError::BadConfig(format!(
                "embedding width {} differs from d_model {}",
                embeddings.dim(),
                config.encoder.d_model
            ))
            .into());
        }
        config.encoder.embedding_source = EmbeddingSource::External;
        config.encoder.vocab_size = embeddings.chars.size();
        config.encoder.check()?;
        let encoder = EncoderParams::init(&config.encoder, Some(embeddings.table), rng);
        let scorer = ScorerParams::init(config.encoder.d_model, config.d_hidden, &labels, rng);
        Ok(Model {
            config,
            chars: embeddings.chars,
            labels,
            params: Params { encoder, scorer },
        })
    }

    /// Per tensor, in [`Params::flat`] order: whether training updates it.
    /// External embeddings stay frozen.
    pub fn trainable(&self) -> Vec<bool> {
        self.params
            .named()
            .iter()
            .map(|(name, _)| !(name == "embedding" && self.config.encoder.embedding_source == EmbeddingSource::External))
            .collect()
    }

    pub fn max_chars(&self) -> usize {
        self.config.encoder.max_chars()
    }

    /// Fencepost matrix for `chars` and the number of unknown characters.
    pub fn fenceposts(&self, chars: &[char]) -> Result<(Tensor, usize), ModelError> {
        let (tokens, unknown) = self.chars.tokens(chars);
        let mut tape = Tape::new();
        let enc = self.params.encoder.map(&mut |t: &Tensor| tape.leaf(t.clone()));
        let v = encode(&mut tape, &self.config.encoder, &enc, &tokens, None)?;
        Ok((tape.value(v).clone(), unknown))
    }

    pub fn chart(&self, chars: &[char]) -> Result<(ScoreChart, usize), ModelError> {
        let (v, unknown) = self.fenceposts(chars)?;
        Ok((score_chart(&v, &self.params.scorer, &self.labels)?, unknown))
    }

    pub fn predict(&self, chars: &[char]) -> Result<Prediction, ModelError> {
        let (chart, unknown) = self.chart(chars)?;
        let decoded = decode(&chart)?;
        let tree = repair_tree(&decoded.tree);
        let sequence = tree_to_sequence(chars, &tree)?;
        Ok(Prediction {
            raw: decoded.tree,
            tree,
            sequence,
            score: decoded.score,
            unknown,
        })
    }

    pub fn manifest(&self) -> String {
        let mut out = format!("format = {MANIFEST_FORMAT}\n");
        out.push_str(&config::render(&[&self.config]));
        out.push_str(&format!("vocab_size = {}\n", self.config.encoder.vocab_size));
        out.push_str(&format!("labels = {}\n", self.labels.to_text()));
        out.push_str(&format!("chars = {}\n", self.chars.to_text()));
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            manifest: self.manifest(),
            tensors: self
                .params
                .named()
                .into_iter()
                .map(|(name, t)| (name, t.clone()))
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, ModelError> {
        let entries = config::parse_kv(&ckpt.manifest)?;
        let mut config = ModelConfig::default();
        let (mut labels, mut chars, mut format) = (None, None, None);
        for e in &entries {
            match e.key.as_str() {
                "format" => format = Some(e.value.clone()),
                "labels" => labels = Some(LabelVocabulary::from_text(&e.value)?),
                "chars" => {
                    chars = Some(CharVocab::from_text(&e.value).map_err(|err| ModelError::Manifest(err.to_string()))?)
                }
                "vocab_size" => {}
                key => {
                    if !config.set(key, &e.value)? {
                        return Err(ConfigError::UnknownKey(key.to_string()).into());
                    }
                }
            }
        }
        if format.as_deref() != Some(MANIFEST_FORMAT) {
            return Err(ModelError::Manifest(format!("expected format `{MANIFEST_FORMAT}`")));
        }
        let labels = labels.ok_or_else(|| ModelError::Manifest("missing labels".into()))?;
        let chars = chars.ok_or_else(|| ModelError::Manifest("missing chars".into()))?;
        config.encoder.vocab_size = chars.size();
        config.encoder.check()?;
        // shapes come from a freshly initialized template
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut params = Params {
            encoder: EncoderParams::init(&config.encoder, None, &mut rng),
            scorer: ScorerParams::init(config.encoder.d_model, config.d_hidden, &labels, &mut rng),
        };
        let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
        for (name, slot) in names.iter().zip(params.flat_mut()) {
            let t = ckpt.tensor(name)?;
            if t.shape() != slot.shape() {
                return Err(ModelError::Manifest(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t.clone();
        }
        Ok(Model {
            config,
            chars,
            labels,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        Ok(self.to_checkpoint().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                d_model: 8,
                n_blocks: 1,
                n_heads: 2,
                d_ff: 12,
                ..EncoderConfig::default()
            },
            d_hidden: 6,
        }
    }

    #[test]
    fn checkpoint_round_trip_in_memory() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = Model::new_learned(small(), CharVocab::from_chars("abc".chars()), LabelVocabulary::standard(), &mut rng)
            .unwrap();
        let back = Model::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back, m);
        assert_eq!(m.params.named().len(), 1 + 16 + 4);
    }

    #[test]
    fn prediction_is_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Model::new_learned(small(), CharVocab::from_chars("abc".chars()), LabelVocabulary::standard(), &mut rng)
            .unwrap();
        let p = m.predict(&['a', 'z', 'c', 'b']).unwrap();
        assert_eq!(p.unknown, 1);
        assert!(crate::prosody::validate_tree(&p.tree).is_valid());
        assert_eq!(p.sequence.len(), 4);
    }

    #[test]
    fn external_width_must_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ext = ExternalEmbeddings::parse("dim=2\na 1 2\n").unwrap();
        assert!(Model::new_external(small(), ext, LabelVocabulary::standard(), &mut rng).is_err());
    }
}
