//! Generators and brute-force oracles shared by the integration tests. The
//! oracles deliberately avoid the library's own search and loss code.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;

use prosody_tree::chart::ScoreChart;
use prosody_tree::corpus::Sentence;
use prosody_tree::encoder::EncoderConfig;
use prosody_tree::model::ModelConfig;
use prosody_tree::prosody::{
    BoundarySequence, Derivation, GeneralizedLabel, LabelVocabulary, LabeledSpan, ProsodicLevel, ProsodicTree,
};

pub const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', '中', '文', ',', '。'];

pub fn random_sequence(rng: &mut impl Rng, max_len: usize) -> BoundarySequence {
    let n = rng.gen_range(1..=max_len);
    let chars = (0..n).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect();
    let mut marks: Vec<Option<ProsodicLevel>> = (0..n)
        .map(|_| match rng.gen_range(0..6) {
            0 => Some(ProsodicLevel::Pw),
            1 => Some(ProsodicLevel::Pph),
            2 => Some(ProsodicLevel::Iph),
            _ => None,
        })
        .collect();
    marks[n - 1] = Some(ProsodicLevel::Iph);
    BoundarySequence::new(chars, marks).unwrap()
}

/// A random well-formed tree over `n` characters.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> ProsodicTree {
    let mut marks: Vec<Option<ProsodicLevel>> = (0..n)
        .map(|_| match rng.gen_range(0..5) {
            0 => Some(ProsodicLevel::Pw),
            1 => Some(ProsodicLevel::Pph),
            2 => Some(ProsodicLevel::Iph),
            _ => None,
        })
        .collect();
    marks[n - 1] = Some(ProsodicLevel::Iph);
    prosody_tree::prosody::marks_to_tree(&marks).unwrap()
}

pub fn random_chart(rng: &mut impl Rng, n: usize, vocab: &LabelVocabulary) -> ScoreChart {
    ScoreChart::from_fn(n, vocab.clone(), |_, _, _| rng.gen_range(-2.0..2.0))
}

/// Every binary bracketing of `(i, j)` as a list of spans.
pub fn bracketings(i: usize, j: usize) -> Vec<Vec<(usize, usize)>> {
    if j - i == 1 {
        return vec![vec![(i, j)]];
    }
    let mut out = Vec::new();
    for k in i + 1..j {
        for l in bracketings(i, k) {
            for r in bracketings(k, j) {
                let mut v = vec![(i, j)];
                v.extend(&l);
                v.extend(&r);
                out.push(v);
            }
        }
    }
    out
}

/// Gold label per extent, dummy when absent.
pub fn gold_map(gold: &ProsodicTree) -> HashMap<(usize, usize), GeneralizedLabel> {
    gold.spans().iter().map(|s| ((s.start, s.end), s.label)).collect()
}

/// max over all labeled binary derivations of `s(T)` plus, when `gold` is
/// given, the number of spans whose label differs from gold's. The score is
/// additive over spans, so each span's label can be maximized on its own.
pub fn oracle_best(chart: &ScoreChart, gold: Option<&ProsodicTree>) -> f64 {
    let n = chart.sentence_len();
    let gm = gold.map(gold_map);
    let vocab = chart.vocab();
    let mut best = f64::NEG_INFINITY;
    for shape in bracketings(0, n) {
        let mut total = 0.0;
        for &(i, j) in &shape {
            let mut m = f64::NEG_INFINITY;
            for l in 0..vocab.len() {
                let mut s = chart.get(i, j, l);
                if let Some(g) = &gm {
                    let gl = g.get(&(i, j)).copied().unwrap_or(GeneralizedLabel::DUMMY);
                    if vocab.label(l) != gl {
                        s += 1.0;
                    }
                }
                m = m.max(s);
            }
            total += m;
        }
        best = best.max(total);
    }
    best
}

/// Sum of chart entries over a tree's spans, by direct lookup.
pub fn direct_score(chart: &ScoreChart, tree: &ProsodicTree) -> f64 {
    tree.spans()
        .iter()
        .map(|s| chart.get(s.start, s.end, chart.vocab().index_of(s.label).unwrap()))
        .sum()
}

/// Hamming distance of a derivation from gold, span by span.
pub fn direct_hamming(d: &Derivation, gold: &ProsodicTree, vocab: &LabelVocabulary) -> usize {
    let gm = gold_map(gold);
    d.spans
        .iter()
        .filter(|s| {
            let g = gm.get(&(s.start, s.end)).copied().unwrap_or(GeneralizedLabel::DUMMY);
            vocab.label(s.label) != g
        })
        .count()
}

/// A random binarized derivation of `tree`: its spans plus dummy-labeled
/// nodes, exactly `2n - 1` of them.
pub fn random_derivation_of(rng: &mut impl Rng, tree: &ProsodicTree, vocab: &LabelVocabulary) -> Derivation {
    let n = tree.sentence_len();
    let gm = gold_map(tree);
    let mut spans = Vec::new();
    // children of (i, j): maximal tree spans strictly inside, plus single characters elsewhere
    fn build(
        rng: &mut impl Rng,
        i: usize,
        j: usize,
        tree: &ProsodicTree,
        gm: &HashMap<(usize, usize), GeneralizedLabel>,
        vocab: &LabelVocabulary,
        out: &mut Vec<prosody_tree::prosody::DerivationSpan>,
    ) {
        let label = gm.get(&(i, j)).copied().unwrap_or(GeneralizedLabel::DUMMY);
        out.push(prosody_tree::prosody::DerivationSpan {
            start: i,
            end: j,
            label: vocab.index_of(label).unwrap(),
        });
        if j - i == 1 {
            return;
        }
        // candidate split points respecting nesting: k must not cut a tree span inside (i, j)
        let cuts: Vec<usize> = (i + 1..j)
            .filter(|&k| {
                !tree
                    .spans()
                    .iter()
                    .any(|s| s.start >= i && s.end <= j && (s.start, s.end) != (i, j) && s.start < k && k < s.end)
            })
            .collect();
        // some cut always exists unless a child covers everything, which cannot happen
        let k = cuts[rng.gen_range(0..cuts.len())];
        build(rng, i, k, tree, gm, vocab, out);
        build(rng, k, j, tree, gm, vocab, out);
    }
    build(rng, 0, n, tree, &gm, vocab, &mut spans);
    Derivation { n, spans }
}

pub fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            d_model: 8,
            n_blocks: 1,
            n_heads: 2,
            d_ff: 12,
            ..EncoderConfig::default()
        },
        d_hidden: 10,
    }
}

pub fn sentences(lines: &[&str]) -> Vec<Sentence> {
    lines
        .iter()
        .map(|l| Sentence::from_sequence(BoundarySequence::parse_line(l).unwrap()))
        .collect()
}

pub fn span(i: usize, j: usize, label: &str) -> LabeledSpan {
    LabeledSpan::new(i, j, label.parse().unwrap())
}

/// Proptest settings without on-disk regression files.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        failure_persistence: None,
        ..Default::default()
    }
}

/// Finite-difference check of the full hinge loss of one sentence with
/// respect to every model tensor. A decode tie or relu kink can sit inside
/// the difference step, so up to `retries` fresh jitters of the parameters
/// are tried before giving up.
pub fn model_grad_check(
    model: &prosody_tree::model::Model,
    sentence: &Sentence,
    tol: f64,
    retries: usize,
) -> (prosody_autodiff::GradCheckReport, Vec<String>, f64) {
    use prosody_autodiff::{grad_check, Tape, Tensor, Var};
    use prosody_tree::trainer::loss_on_tape;
    use rand::SeedableRng;

    let names: Vec<String> = model.params.named().into_iter().map(|(n, _)| n).collect();
    let (tokens, _) = model.chars.tokens(sentence.chars());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut params = model.params.clone();
    let mut last = None;
    for _ in 0..=retries {
        let template = params.clone();
        let config = model.config.clone();
        let labels = model.labels.clone();
        let gold = sentence.tree.clone();
        let toks = tokens.clone();
        let f = move |tape: &mut Tape, vars: &[Var]| {
            let mut k = 0;
            let bound = template.map(|_| {
                k += 1;
                vars[k - 1]
            });
            loss_on_tape(tape, &config, &labels, &bound, &toks, &gold, None).unwrap().0
        };
        let inputs: Vec<Tensor> = params.flat().into_iter().cloned().collect();
        let loss = {
            let mut tape = Tape::new();
            let vars = params.bind(&mut tape);
            loss_on_tape(&mut tape, &model.config, &model.labels, &vars, &tokens, &sentence.tree, None)
                .unwrap()
                .1
                .loss
        };
        let report = grad_check(f, &inputs, 1e-6, tol).unwrap();
        if report.passed() {
            return (report, names, loss);
        }
        last = Some((report, loss));
        for t in params.flat_mut() {
            for x in t.data_mut() {
                *x += rng.gen_range(-1e-3..1e-3);
            }
        }
    }
    let (report, loss) = last.unwrap();
    (report, names, loss)
}
