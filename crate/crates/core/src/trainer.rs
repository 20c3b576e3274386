//! Max-margin training: structured hinge loss with Hamming-augmented
//! decoding, subgradient backpropagation through the chart entries of the
//! predicted and gold trees, and a mini-batch optimizer loop with early
//! stopping on a dev metric.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use prosody_autodiff::{Tape, Tensor, Var};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::{tree_score, ScoreChart};
use crate::config::{self, ConfigError, Settings};
use crate::corpus::Sentence;
use crate::decode::{decode_augmented, DecodeError, Decoded};
use crate::encoder::{encode, ExternalEmbeddings};
use crate::metrics::{Counting, EvalReport};
use crate::model::{Model, ModelConfig, ModelError, Params};
use crate::prosody::{hamming_delta, validate_tree, LabelVocabulary, ProsodicLevel, ProsodicTree, ProsodyError};
use crate::scorer::{score_chart, weighted_span_scores, WeightedEntry};
use crate::vocab::CharVocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    SgdMomentum,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::SgdMomentum => "sgd-momentum",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd-momentum" | "sgd" => Ok(OptimizerKind::SgdMomentum),
            other => Err(format!("expected `adam` or `sgd-momentum`, got `{other}`")),
        }
    }
}

/// Dev metric watched for early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopMetric {
    PwF1,
    PphF1,
    IphF1,
    MeanF1,
}

impl StopMetric {
    pub fn of(self, report: &EvalReport) -> f64 {
        match self {
            StopMetric::PwF1 => report.f1(ProsodicLevel::Pw),
            StopMetric::PphF1 => report.f1(ProsodicLevel::Pph),
            StopMetric::IphF1 => report.f1(ProsodicLevel::Iph),
            StopMetric::MeanF1 => report.mean_f1(),
        }
    }
}

impl fmt::Display for StopMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopMetric::PwF1 => "pw_f1",
            StopMetric::PphF1 => "pph_f1",
            StopMetric::IphF1 => "iph_f1",
            StopMetric::MeanF1 => "mean_f1",
        })
    }
}

impl FromStr for StopMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pw_f1" => Ok(StopMetric::PwF1),
            "pph_f1" => Ok(StopMetric::PphF1),
            "iph_f1" => Ok(StopMetric::IphF1),
            "mean_f1" => Ok(StopMetric::MeanF1),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// Momentum for `sgd-momentum`.
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient norm cap; 0 disables clipping.
    pub grad_clip_norm: f64,
    pub early_stop_metric: StopMetric,
    /// Stop as soon as dev exact match reaches this rate; 0 disables.
    pub target_exact_match: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            max_epochs: 30,
            patience: 3,
            seed: 0,
            grad_clip_norm: 5.0,
            early_stop_metric: StopMetric::PphF1,
            target_exact_match: 0.0,
        }
    }
}

impl Settings for TrainConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<bool, ConfigError> {
        match key {
            "learning_rate" => self.learning_rate = config::value(key, v)?,
            "optimizer" => self.optimizer = config::value(key, v)?,
            "momentum" => self.momentum = config::value(key, v)?,
            "beta1" => self.beta1 = config::value(key, v)?,
            "beta2" => self.beta2 = config::value(key, v)?,
            "adam_eps" => self.adam_eps = config::value(key, v)?,
            "batch_size" => self.batch_size = config::value(key, v)?,
            "max_epochs" => self.max_epochs = config::value(key, v)?,
            "patience" => self.patience = config::value(key, v)?,
            "seed" => self.seed = config::value(key, v)?,
            "grad_clip_norm" => self.grad_clip_norm = config::value(key, v)?,
            "early_stop_metric" => self.early_stop_metric = config::value(key, v)?,
            "target_exact_match" => self.target_exact_match = config::value(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("learning_rate", self.learning_rate.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("momentum", self.momentum.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("seed", self.seed.to_string()),
            ("grad_clip_norm", self.grad_clip_norm.to_string()),
            ("early_stop_metric", self.early_stop_metric.to_string()),
            ("target_exact_match", self.target_exact_match.to_string()),
        ]
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::BadConfig(m));
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if self.grad_clip_norm < 0.0 {
            return bad("grad_clip_norm must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("no usable training sentence ({0} rejected)")]
    AllInvalid(usize),
    #[error("bad training configuration: {0}")]
    BadConfig(String),
    #[error("loss is not finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },
    #[error("non-finite gradient for {param} at epoch {epoch}, step {step}")]
    NonFiniteGradient { param: String, epoch: usize, step: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<DecodeError> for TrainError {
    fn from(e: DecodeError) -> Self {
        TrainError::Model(e.into())
    }
}

impl From<ProsodyError> for TrainError {
    fn from(e: ProsodyError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Structured hinge loss of one sentence.
#[derive(Debug, Clone)]
pub struct HingeLoss {
    /// `max(0, augmented_score - gold_score)`.
    pub loss: f64,
    /// `s(T) + Δ(T, gold)` of the most violating tree `T`.
    pub augmented_score: f64,
    pub gold_score: f64,
    pub delta: usize,
    pub predicted: Decoded,
}

pub fn hinge_loss(chart: &ScoreChart, gold: &ProsodicTree) -> Result<HingeLoss, TrainError> {
    let predicted = decode_augmented(chart, gold)?;
    let gold_score = tree_score(chart, gold)?;
    let delta = hamming_delta(&predicted.derivation, gold, chart.vocab())?;
    Ok(HingeLoss {
        loss: (predicted.score - gold_score).max(0.0),
        augmented_score: predicted.score,
        gold_score,
        delta,
        predicted,
    })
}

/// Chart entries whose scores make up `s(T) - s(gold)`: `+1` on the
/// predicted derivation's labeled spans, `-1` on the gold spans.
pub fn loss_entries(h: &HingeLoss, gold: &ProsodicTree, labels: &LabelVocabulary) -> Vec<WeightedEntry> {
    let dummy = labels.dummy_index();
    let mut out: Vec<WeightedEntry> = h
        .predicted
        .derivation
        .spans
        .iter()
        .filter(|s| s.label != dummy)
        .map(|s| WeightedEntry {
            start: s.start,
            end: s.end,
            label: s.label,
            weight: 1.0,
        })
        .collect();
    for s in gold.spans() {
        out.push(WeightedEntry {
            start: s.start,
            end: s.end,
            label: labels.index_of(s.label).expect("gold labels checked by the decoder"),
            weight: -1.0,
        });
    }
    out
}

/// Builds `s(T) + Δ(T, gold) - s(gold)` on the tape, where `T` is the
/// loss-augmented argmax under the current parameter values. Passing an RNG
/// enables dropout.
pub fn loss_on_tape(
    tape: &mut Tape,
    config: &ModelConfig,
    labels: &LabelVocabulary,
    vars: &Params<Var>,
    tokens: &[usize],
    gold: &ProsodicTree,
    rng: Option<&mut dyn RngCore>,
) -> Result<(Var, HingeLoss), TrainError> {
    let v = encode(tape, &config.encoder, &vars.encoder, tokens, rng).map_err(ModelError::from)?;
    let scorer = vars.scorer.map(&mut |&var| tape.value(var).clone());
    let chart = score_chart(tape.value(v), &scorer, labels).map_err(ModelError::from)?;
    let h = hinge_loss(&chart, gold)?;
    let entries = loss_entries(&h, gold, labels);
    let diff = weighted_span_scores(tape, v, &vars.scorer, labels, &entries);
    Ok((tape.add_scalar(diff, h.delta as f64), h))
}

/// Loss and gradient (in [`Params::flat`] order) of one sentence. A zero
/// loss yields `None` for the gradient.
pub fn example_gradient(
    model: &Model,
    tokens: &[usize],
    gold: &ProsodicTree,
    rng: Option<&mut dyn RngCore>,
) -> Result<(HingeLoss, Option<Vec<Tensor>>), TrainError> {
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape);
    let (out, h) = loss_on_tape(&mut tape, &model.config, &model.labels, &vars, tokens, gold, rng)?;
    if h.loss <= 0.0 {
        return Ok((h, None));
    }
    let grads = tape.backward(out);
    let flat = vars
        .flat()
        .into_iter()
        .zip(model.params.flat())
        .map(|(&var, t)| grads.get_or_zeros(var, t))
        .collect();
    Ok((h, Some(flat)))
}

/// Adam or SGD with momentum over a flat list of tensors.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: TrainConfig,
    step: i32,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, params: &[&Tensor]) -> Self {
        let zeros = || params.iter().map(|t| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        Optimizer {
            cfg: cfg.clone(),
            step: 0,
            first: zeros(),
            second: zeros(),
        }
    }

    /// Applies one update to the tensors marked trainable.
    pub fn update(&mut self, params: Vec<&mut Tensor>, grads: &[Tensor], trainable: &[bool]) {
        self.step += 1;
        let c = &self.cfg;
        let lr = c.learning_rate;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            if !trainable[k] {
                continue;
            }
            let m = self.first[k].data_mut();
            match c.optimizer {
                OptimizerKind::SgdMomentum => {
                    for ((pv, gv), mv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()) {
                        *mv = c.momentum * *mv + gv;
                        *pv -= lr * *mv;
                    }
                }
                OptimizerKind::Adam => {
                    let v = self.second[k].data_mut();
                    let bc1 = 1.0 - c.beta1.powi(self.step);
                    let bc2 = 1.0 - c.beta2.powi(self.step);
                    for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mv = c.beta1 * *mv + (1.0 - c.beta1) * gv;
                        *vv = c.beta2 * *vv + (1.0 - c.beta2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= lr * mhat / (vhat.sqrt() + c.adam_eps);
                    }
                }
            }
        }
    }
}

/// Scales `grads` so their joint L2 norm over trainable tensors is at most
/// `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], trainable: &[bool], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .zip(trainable)
        .filter(|(_, &t)| t)
        .map(|(g, _)| g.sum_of_squares())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.scale_in_place(s);
        }
    }
    norm
}

/// Predicts every sentence and scores against its gold marks.
pub fn evaluate_model(model: &Model, sentences: &[Sentence], counting: Counting) -> Result<EvalReport, ModelError> {
    let mut report = EvalReport::new(counting);
    for s in sentences {
        let p = model.predict(s.chars())?;
        report.add(p.sequence.marks(), s.sequence.marks());
    }
    Ok(report)
}

/// Column names of the training log.
pub const LOG_HEADER: &str = "epoch, mean_loss, dev_PW_F1, dev_PPH_F1, dev_IPH_F1, seconds";

#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev: EvalReport,
    pub seconds: f64,
}

impl EpochLog {
    pub fn line(&self) -> String {
        format!(
            "{}, {:.6}, {:.6}, {:.6}, {:.6}, {:.2}",
            self.epoch,
            self.mean_loss,
            self.dev.f1(ProsodicLevel::Pw),
            self.dev.f1(ProsodicLevel::Pph),
            self.dev.f1(ProsodicLevel::Iph),
            self.seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    /// Training sentences skipped as invalid or too long.
    pub skipped: usize,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochLog {
        &self.log[self.best_epoch - 1]
    }
}

/// Fresh model for `train`: learned embeddings over the training characters,
/// or the given external table.
pub fn init_model(
    config: &ModelConfig,
    labels: LabelVocabulary,
    train: &[Sentence],
    external: Option<ExternalEmbeddings>,
    seed: u64,
) -> Result<Model, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match external {
        Some(e) => Model::new_external(config.clone(), e, labels, &mut rng),
        None => {
            let chars = CharVocab::from_chars(train.iter().flat_map(|s| s.chars().iter().copied()));
            Model::new_learned(config.clone(), chars, labels, &mut rng)
        }
    }
}

/// Mini-batch training with per-epoch dev evaluation and early stopping.
/// `on_epoch` sees every epoch's log as soon as it is complete.
pub fn train(
    mut model: Model,
    train: &[Sentence],
    dev: &[Sentence],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    cfg.check()?;
    if train.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let max_chars = model.max_chars();
    let examples: Vec<(Vec<usize>, &ProsodicTree)> = train
        .iter()
        .filter(|s| s.len() <= max_chars && validate_tree(&s.tree).is_valid())
        .map(|s| (model.chars.tokens(s.chars()).0, &s.tree))
        .collect();
    let skipped = train.len() - examples.len();
    if examples.is_empty() {
        return Err(TrainError::AllInvalid(skipped));
    }
    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let trainable = model.trainable();
    let mut optimizer = Optimizer::new(cfg, &model.params.flat());
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let use_dropout = model.config.encoder.dropout > 0.0;

    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, f64, usize, Params<Tensor>)> = None;
    let mut since_best = 0;
    let mut step = 0;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            // one tape per batch: parameters are bound once and the
            // backward pass sums the per-sentence gradients
            let mut tape = Tape::new();
            let vars = model.params.bind(&mut tape);
            let mut total: Option<Var> = None;
            for &i in batch {
                let (tokens, gold) = &examples[i];
                let rng: Option<&mut dyn RngCore> = if use_dropout { Some(&mut dropout_rng) } else { None };
                let (out, h) = loss_on_tape(&mut tape, &model.config, &model.labels, &vars, tokens, gold, rng)?;
                if !h.loss.is_finite() {
                    return Err(TrainError::Diverged { epoch, step });
                }
                total_loss += h.loss;
                if h.loss > 0.0 {
                    total = Some(match total {
                        None => out,
                        Some(t) => tape.add(t, out),
                    });
                }
            }
            let acc = total.map(|t| {
                let g = tape.backward(t);
                vars.flat()
                    .into_iter()
                    .zip(model.params.flat())
                    .map(|(&var, p)| g.get_or_zeros(var, p))
                    .collect::<Vec<Tensor>>()
            });
            let Some(mut grads) = acc else { continue };
            let scale = 1.0 / batch.len() as f64;
            for (k, g) in grads.iter_mut().enumerate() {
                g.scale_in_place(scale);
                if !g.is_finite() {
                    return Err(TrainError::NonFiniteGradient {
                        param: names[k].clone(),
                        epoch,
                        step,
                    });
                }
            }
            clip_global_norm(&mut grads, &trainable, cfg.grad_clip_norm);
            optimizer.update(model.params.flat_mut(), &grads, &trainable);
            if !model.params.is_finite() {
                return Err(TrainError::Diverged { epoch, step });
            }
        }
        let dev_report = evaluate_model(&model, dev, Counting::Cumulative)?;
        let entry = EpochLog {
            epoch,
            mean_loss: total_loss / examples.len() as f64,
            dev: dev_report,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&entry);
        let metric = cfg.early_stop_metric.of(&entry.dev);
        let exact = entry.dev.exact_match();
        let improved = match &best {
            None => true,
            Some((m, e, _, _)) => (metric, exact) > (*m, *e),
        };
        log.push(entry);
        if improved {
            best = Some((metric, exact, epoch, model.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        if cfg.target_exact_match > 0.0 && exact >= cfg.target_exact_match {
            break;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    let best_epoch = match best {
        Some((_, _, epoch, params)) => {
            model.params = params;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        skipped,
    })
}
