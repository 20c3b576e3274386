use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use prosody_tree::bench::bench_decode;
use prosody_tree::config::{self, ConfigError, Settings};
use prosody_tree::corpus::{self, corpus_stats, load_corpus, write_corpus, write_tree_sidecar, Sentence, SynthConfig};
use prosody_tree::encoder::ExternalEmbeddings;
use prosody_tree::metrics::{evaluate, Counting};
use prosody_tree::model::{Model, ModelConfig};
use prosody_tree::prosody::{tokenize_line, tree_to_sequence, validate_tree, LabelVocabulary, ProsodicTree};
use prosody_tree::trainer::{init_model, train, TrainConfig, LOG_HEADER};

/// Relative output paths are resolved under this directory when it is set.
const OUTPUT_DIR_ENV: &str = "PROSODY_TREE_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "prosody-tree", version, about = "Span-based prosodic structure prediction")]
struct Cli {
    /// Seed for every command that uses randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConvertMode {
    /// `chars<TAB>spans` lines to boundary-mark lines.
    TreeToSeq,
    /// Boundary-mark lines to `chars<TAB>spans` lines.
    SeqToTree,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write its checkpoint and log to a directory.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict boundary marks for raw sentences, one per line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted lines against gold lines.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Count each position only for its own mark instead of all lower levels.
        #[arg(long)]
        exact_marks: bool,
    },
    /// Convert between boundary-mark lines and span lists.
    Convert {
        #[arg(long, value_enum)]
        mode: ConvertMode,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time decoding on random charts.
    Bench {
        /// Comma-separated sentence lengths.
        #[arg(long, value_delimiter = ',', required = true)]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Use this checkpoint's label vocabulary instead of the default one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

fn output_path(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_checked(path: &Path, what: &str) -> Result<Vec<Sentence>> {
    let (sentences, report) = load_corpus(path)?;
    if !report.rejected.is_empty() || report.normalized > 0 {
        eprintln!("{what} {}: {report}", path.display());
    }
    Ok(sentences)
}

/// Keys of the training config file that are neither model nor optimizer
/// settings.
#[derive(Default)]
struct TrainFileExtras {
    embedding_file: Option<PathBuf>,
    labels: Option<LabelVocabulary>,
}

impl Settings for TrainFileExtras {
    fn set(&mut self, key: &str, value: &str) -> Result<bool, ConfigError> {
        match key {
            "embedding_file" => self.embedding_file = Some(PathBuf::from(value)),
            "labels" => {
                self.labels = Some(LabelVocabulary::from_text(value).map_err(|e| ConfigError::BadValue {
                    key: key.into(),
                    reason: e.to_string(),
                })?)
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(p) = &self.embedding_file {
            out.push(("embedding_file", p.display().to_string()));
        }
        if let Some(l) = &self.labels {
            out.push(("labels", l.to_text()));
        }
        out
    }
}

fn cmd_train(seed: Option<u64>, config_path: &Path, train_path: &Path, dev_path: &Path, out: &Path) -> Result<()> {
    let mut model_cfg = ModelConfig::default();
    let mut train_cfg = TrainConfig::default();
    let mut extras = TrainFileExtras::default();
    let entries = config::read_kv(config_path)?;
    config::apply(&entries, &mut [&mut model_cfg, &mut train_cfg, &mut extras])
        .with_context(|| format!("in {}", config_path.display()))?;
    if let Some(s) = seed {
        train_cfg.seed = s;
    }
    let external = match &extras.embedding_file {
        Some(p) => Some(ExternalEmbeddings::load(p)?),
        None => None,
    };
    let train_set = load_checked(train_path, "train")?;
    let dev_set = load_checked(dev_path, "dev")?;
    if train_set.is_empty() {
        bail!("no usable sentence in {}", train_path.display());
    }
    let labels = extras.labels.clone().unwrap_or_default();
    let model = init_model(&model_cfg, labels, &train_set, external, train_cfg.seed)?;

    let out = output_path(out);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut log = create(&out.join("train.log"))?;
    writeln!(log, "{LOG_HEADER}")?;
    println!("{LOG_HEADER}");
    let mut write_err = None;
    let outcome = train(model, &train_set, &dev_set, &train_cfg, &mut |e| {
        println!("{}", e.line());
        if let Err(err) = writeln!(log, "{}", e.line()).and_then(|_| log.flush()) {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).context("writing train.log");
    }
    outcome.model.save(out.join("model.ckpt"))?;
    std::fs::write(out.join("manifest.txt"), outcome.model.manifest())?;
    std::fs::write(
        out.join("config.txt"),
        config::render(&[&outcome.model.config, &train_cfg, &extras]),
    )?;
    if outcome.skipped > 0 {
        eprintln!("skipped {} training sentences (invalid or too long)", outcome.skipped);
    }
    eprintln!(
        "best epoch {} of {}; model written to {}",
        outcome.best_epoch,
        outcome.log.len(),
        out.join("model.ckpt").display()
    );
    Ok(())
}

/// A training output directory stands for the checkpoint inside it.
fn load_model(path: &Path) -> Result<Model> {
    let file = if path.is_dir() { path.join("model.ckpt") } else { path.to_path_buf() };
    Model::load(&file).with_context(|| format!("loading {}", file.display()))
}

fn cmd_predict(model_path: &Path, input: &Path, out: &Path) -> Result<()> {
    let model = load_model(model_path)?;
    let reader = BufReader::new(File::open(input).with_context(|| format!("opening {}", input.display()))?);
    let out = output_path(out);
    let mut w = create(&out)?;
    let (mut done, mut unknown, mut rejected) = (0, 0, 0);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let chars = match tokenize_line(&line) {
            Ok((chars, _)) => chars,
            Err(e) => {
                eprintln!("line {}: skipped: {e}", idx + 1);
                rejected += 1;
                continue;
            }
        };
        if chars.len() > model.max_chars() {
            eprintln!(
                "line {}: skipped: {} characters exceed the limit of {}",
                idx + 1,
                chars.len(),
                model.max_chars()
            );
            rejected += 1;
            continue;
        }
        let p = model.predict(&chars)?;
        unknown += p.unknown;
        writeln!(w, "{}", p.sequence)?;
        done += 1;
    }
    w.flush()?;
    eprintln!("predicted {done} sentences; {unknown} unknown characters; {rejected} lines rejected");
    Ok(())
}

fn cmd_eval(pred: &Path, gold: &Path, exact_marks: bool) -> Result<()> {
    let p = load_checked(pred, "pred")?;
    let g = load_checked(gold, "gold")?;
    let counting = if exact_marks {
        Counting::ExactMarks
    } else {
        Counting::Cumulative
    };
    let seq = |s: Vec<Sentence>| s.into_iter().map(|s| s.sequence).collect::<Vec<_>>();
    let report = evaluate(&seq(p), &seq(g), counting)?;
    println!("{report}");
    print!("{}", report.to_kv());
    Ok(())
}

fn cmd_convert(mode: ConvertMode, input: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let out = output_path(out);
    match mode {
        ConvertMode::SeqToTree => {
            let (sentences, report) = corpus::parse_corpus(&text);
            if let Some(issue) = report.rejected.first() {
                bail!("{} line {}: {}", input.display(), issue.line, issue.message);
            }
            write_tree_sidecar(&out, &sentences)?;
        }
        ConvertMode::TreeToSeq => {
            let mut w = create(&out)?;
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let at = || format!("{} line {}", input.display(), idx + 1);
                let (chars, spans) = line.split_once('\t').unwrap_or((line, ""));
                let chars: Vec<char> = chars.chars().collect();
                let tree = ProsodicTree::parse_spans(chars.len(), spans).with_context(at)?;
                let report = validate_tree(&tree);
                if !report.is_valid() {
                    bail!("{}: {report}", at());
                }
                writeln!(w, "{}", tree_to_sequence(&chars, &tree).with_context(at)?)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_gen(seed: Option<u64>, config_path: &Path, out: &Path) -> Result<()> {
    let mut cfg = SynthConfig::from_file(config_path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let sentences = corpus::generate(&cfg)?;
    let out = output_path(out);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_corpus(&out, &sentences)?;
    let mut sidecar = out.clone().into_os_string();
    sidecar.push(".trees");
    write_tree_sidecar(PathBuf::from(sidecar), &sentences)?;
    println!("{}", corpus_stats(&sentences));
    Ok(())
}

fn cmd_bench(seed: Option<u64>, lengths: &[usize], trials: usize, model: Option<&Path>) -> Result<()> {
    if let Some(&n) = lengths.iter().find(|&&n| n < 2) {
        bail!("lengths must be at least 2, got {n}");
    }
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    let labels = match model {
        Some(p) => load_model(p)?.labels,
        None => LabelVocabulary::standard(),
    };
    let rows = bench_decode(lengths, trials, &labels, seed.unwrap_or(0));
    println!("{:>6} {:>7} {:>14} {:>14} {:>14}", "n", "trials", "median_s", "min_s", "max_s");
    for r in &rows {
        println!(
            "{:>6} {:>7} {:>14.3e} {:>14.3e} {:>14.3e}",
            r.n, r.trials, r.median, r.min, r.max
        );
    }
    for pair in rows.windows(2) {
        println!("ratio n={}/n={}: {:.2}", pair[1].n, pair[0].n, pair[1].median / pair[0].median);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { config, train, dev, out } => cmd_train(cli.seed, config, train, dev, out),
        Command::Predict { model, input, out } => cmd_predict(model, input, out),
        Command::Eval { pred, gold, exact_marks } => cmd_eval(pred, gold, *exact_marks),
        Command::Convert { mode, input, out } => cmd_convert(*mode, input, out),
        Command::Gen { config, out } => cmd_gen(cli.seed, config, out),
        Command::Bench { lengths, trials, model } => cmd_bench(cli.seed, lengths, *trials, model.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', "; ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
