//! Subcommands of the `polagree` binary.

pub mod config;
pub mod report;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use polagree::attributes::AttributeSet;
use polagree::corpus::{annotate, balanced_split, read_jsonl, read_parallel, write_jsonl, AnnotatedPair};
use polagree::detector::{build_stopwords, Detector, LabeledPair};
use polagree::morpho::Lexicon;
use polagree::synth::{Grammar, GroupWeights};
use polagree_nmt::evaluate::ambid_batched;
use polagree_nmt::gradcheck::check_all_modes;
use polagree_nmt::train::log_tsv;
use polagree_nmt::{finetune, pretrain, Checkpoint, Translator};

use crate::config::{parse_modes, require_files, require_output_dirs, RunConfig};
use crate::report::{evaluate_all, Options};

#[derive(Debug, Parser)]
#[command(name = "polagree", version, about = "Speaker and interlocutor agreement for English to Polish translation")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ParallelInput {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect attributes of aligned sentence pairs; JSONL to stdout.
    Detect(ParallelInput),
    /// Annotate a parallel corpus as JSONL plus per-group counts.
    Annotate {
        #[command(flatten)]
        input: ParallelInput,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Build the fixed-gender noun stopword list and filter the corpus.
    Stopwords {
        #[command(flatten)]
        input: ParallelInput,
        /// Output directory for stopwords.txt, kept.tsv and report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic annotated corpus.
    Synth {
        #[arg(long)]
        n: usize,
        /// `uniform`, `paper` or a JSON object of group weights.
        #[arg(long, default_value = "uniform")]
        weights: String,
        #[arg(long, default_value_t = 0.0)]
        unannotated: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write this many attribute-ambivalent sources.
        #[arg(long)]
        ambivalent: Option<usize>,
        #[arg(long)]
        ambivalent_out: Option<PathBuf>,
    },
    /// Split an annotated corpus into balanced dev/test sets and the rest.
    Split {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        per_group: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for train.jsonl, dev.jsonl and test.jsonl.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the subword model and the unconditioned base model.
    Pretrain {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fine-tune a base checkpoint under one conditioning mode.
    Finetune {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        mode: String,
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Translate `attrs TAB source` lines (attrs comma-separated, may be empty).
    Translate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Score checkpoints under both protocols.
    Evaluate {
        /// Mode names, comma-separated, or `all`.
        #[arg(long)]
        modes: Option<String>,
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        ambivalent: Option<PathBuf>,
        /// Output directory for report.json, table.tsv and groups.tsv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// AmbID of one checkpoint on an ambivalent source list.
    Ambid {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        ambivalent: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Finite-difference gradient check over all modes.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-3)]
        tolerance: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Writes `bytes` to `path` through a temporary file in the same directory,
/// so a failed run leaves nothing behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_jsonl(items, &mut buf)?;
    Ok(buf)
}

fn load_pairs(path: &Path) -> Result<Vec<AnnotatedPair>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_jsonl(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

fn load_lines(path: &Path) -> Result<Vec<String>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f).lines().collect::<std::io::Result<Vec<_>>>()?.into_iter().filter(|l| !l.trim().is_empty()).collect())
}

fn lexicon(cfg: &RunConfig) -> Result<Lexicon> {
    match &cfg.lexicon {
        Some(p) => Lexicon::load(p).with_context(|| format!("loading lexicon {}", p.display())),
        None => Ok(Lexicon::builtin()),
    }
}

fn grammar(cfg: &RunConfig, det: &Detector<'_>) -> Result<Grammar> {
    match &cfg.grammar {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading grammar {}", p.display()))?;
            Ok(Grammar::parse(&text, det)?)
        }
        None => Ok(Grammar::builtin(det)?),
    }
}

fn weights(spec: &str) -> Result<GroupWeights> {
    Ok(match spec {
        "uniform" => GroupWeights::Uniform,
        "paper" => GroupWeights::PaperShape,
        json => GroupWeights::Custom(serde_json::from_str(json).context("parsing --weights")?),
    })
}

fn checkpoint_path(dir: &Path, mode: &str) -> PathBuf {
    dir.join(format!("{mode}.ckpt"))
}

fn log_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("log.tsv")
}

fn save_checkpoint(ckpt: &Checkpoint, out: &Path) -> Result<()> {
    write_atomic(out, &ckpt.to_bytes())?;
    write_atomic(&log_path(out), log_tsv(&ckpt.history).as_bytes())
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Detect(input) => {
            require_files([("--src", Some(&input.src)), ("--tgt", Some(&input.tgt))])?;
            let lex = lexicon(&cfg)?;
            let det = Detector::new(&lex);
            let pairs = read_parallel(&input.src, &input.tgt)?;
            let out: Vec<LabeledPair> = pairs
                .into_iter()
                .map(|(src, tgt)| {
                    let d = det.detect(&src, &tgt);
                    LabeledPair { src, tgt, attrs: d.attrs, evidence: d.evidence }
                })
                .collect();
            stdout.write_all(&jsonl(&out)?)?;
        }
        Command::Annotate { input, out, counts } => {
            require_files([("--src", Some(&input.src)), ("--tgt", Some(&input.tgt))])?;
            require_output_dirs([out.as_path()].into_iter().chain(counts.as_deref()))?;
            let lex = lexicon(&cfg)?;
            let det = Detector::new(&lex);
            let (pairs, report) = annotate(&read_parallel(&input.src, &input.tgt)?, &det);
            write_atomic(&out, &jsonl(&pairs)?)?;
            match counts {
                Some(c) => write_atomic(&c, report.to_tsv().as_bytes())?,
                None => eprint!("{}", report.to_tsv()),
            }
        }
        Command::Stopwords { input, out } => {
            require_files([("--src", Some(&input.src)), ("--tgt", Some(&input.tgt))])?;
            if !out.is_dir() {
                bail!("output directory {} does not exist", out.display());
            }
            let lex = lexicon(&cfg)?;
            let f = build_stopwords(read_parallel(&input.src, &input.tgt)?, &lex);
            let words: String = f.stopwords.iter().map(|w| format!("{w}\n")).collect();
            let kept: String = f.kept.iter().map(|(s, t)| format!("{s}\t{t}\n")).collect();
            write_atomic(&out.join("stopwords.txt"), words.as_bytes())?;
            write_atomic(&out.join("kept.tsv"), kept.as_bytes())?;
            write_atomic(&out.join("report.json"), serde_json::to_string_pretty(&f.report)?.as_bytes())?;
        }
        Command::Synth { n, weights: w, unannotated, seed, out, ambivalent, ambivalent_out } => {
            let seed = seed.unwrap_or(cfg.seed);
            let amb_out = match (ambivalent, &ambivalent_out) {
                (Some(_), None) => bail!("--ambivalent needs --ambivalent-out"),
                (_, p) => p.clone(),
            };
            require_output_dirs([out.as_path()].into_iter().chain(amb_out.as_deref()))?;
            let lex = lexicon(&cfg)?;
            let det = Detector::new(&lex);
            let g = grammar(&cfg, &det)?;
            let pairs = g.generate_corpus(n, unannotated, &weights(&w)?, seed)?;
            write_atomic(&out, &jsonl(&pairs)?)?;
            if let (Some(m), Some(p)) = (ambivalent, amb_out) {
                let text: String = g.generate_ambivalent(m, seed).iter().map(|s| format!("{s}\n")).collect();
                write_atomic(&p, text.as_bytes())?;
            }
        }
        Command::Split { corpus, per_group, seed, out } => {
            let corpus = corpus.or(cfg.corpus.clone());
            require_files([("--corpus", corpus.as_ref())])?;
            if !out.is_dir() {
                bail!("output directory {} does not exist", out.display());
            }
            let pairs = load_pairs(corpus.as_ref().unwrap())?;
            let s = balanced_split(&pairs, per_group, seed.unwrap_or(cfg.seed))?;
            write_atomic(&out.join("train.jsonl"), &jsonl(&s.remainder)?)?;
            write_atomic(&out.join("dev.jsonl"), &jsonl(&s.dev)?)?;
            write_atomic(&out.join("test.jsonl"), &jsonl(&s.test)?)?;
        }
        Command::Pretrain { train, dev, out, seed } => {
            let train = train.or(cfg.train.clone());
            let dev = dev.or(cfg.dev.clone());
            require_files([("--train", train.as_ref()), ("--dev", dev.as_ref())])?;
            require_output_dirs([out.as_path()])?;
            if let Some(s) = seed {
                cfg.pretrain.seed = s;
                cfg.model.seed = s;
            }
            let plain = |p: &Path| -> Result<Vec<(String, String)>> {
                Ok(load_pairs(p)?.into_iter().map(|p| (p.src, p.tgt)).collect())
            };
            let ckpt = pretrain(&cfg.model, &cfg.pretrain, &plain(train.as_ref().unwrap())?, &plain(dev.as_ref().unwrap())?)?;
            save_checkpoint(&ckpt, &out)?;
        }
        Command::Finetune { base, mode, train, dev, out, seed } => {
            let train = train.or(cfg.train.clone());
            let dev = dev.or(cfg.dev.clone());
            require_files([("--base", Some(&base)), ("--train", train.as_ref()), ("--dev", dev.as_ref())])?;
            require_output_dirs([out.as_path()])?;
            let modes = parse_modes(&[mode])?;
            if modes.len() != 1 {
                bail!("finetune takes exactly one mode");
            }
            if let Some(s) = seed {
                cfg.finetune.seed = s;
            }
            let lex = lexicon(&cfg)?;
            let det = Detector::new(&lex);
            let base = Checkpoint::load(&base)?;
            let ckpt = finetune(
                &base,
                modes[0],
                &cfg.finetune,
                &load_pairs(train.as_ref().unwrap())?,
                &load_pairs(dev.as_ref().unwrap())?,
                &det,
            )?;
            save_checkpoint(&ckpt, &out)?;
        }
        Command::Translate { checkpoint, input, beam } => {
            require_files([("--checkpoint", Some(&checkpoint)), ("--input", Some(&input))])?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let mut items = Vec::new();
            for (i, line) in load_lines(&input)?.iter().enumerate() {
                let (attrs, src) = line.split_once('\t').unwrap_or(("", line));
                let attrs = AttributeSet::parse_list(attrs).with_context(|| format!("line {}", i + 1))?;
                items.push((src.to_string(), attrs));
            }
            let tr = Translator::new(&ckpt.model, &ckpt.bpe, ckpt.mode);
            let refs: Vec<(&str, AttributeSet)> = items.iter().map(|(s, a)| (s.as_str(), *a)).collect();
            for h in tr.translate_batch(&refs, beam.unwrap_or(cfg.beam)) {
                writeln!(stdout, "{}", h.text)?;
            }
        }
        Command::Evaluate { modes, checkpoints, test, ambivalent, out } => {
            let modes = match modes {
                Some(m) => parse_modes(&[m])?,
                None => cfg.modes()?,
            };
            let dir = checkpoints.unwrap_or(cfg.checkpoints.clone());
            let test = test.or(cfg.test.clone());
            let ambivalent = ambivalent.or(cfg.ambivalent.clone());
            let out = out.unwrap_or(cfg.reports.clone());
            let paths: Vec<PathBuf> = modes.iter().map(|m| checkpoint_path(&dir, m.name())).collect();
            require_files([("--test", test.as_ref())])?;
            require_files(paths.iter().map(|p| ("checkpoint", Some(p))))?;
            if let Some(a) = &ambivalent {
                require_files([("--ambivalent", Some(a))])?;
            }
            if !out.is_dir() {
                bail!("output directory {} does not exist", out.display());
            }
            let lex = lexicon(&cfg)?;
            let det = Detector::new(&lex);
            let ckpts = paths.iter().map(Checkpoint::load).collect::<Result<Vec<_>, _>>()?;
            for (c, m) in ckpts.iter().zip(&modes) {
                if c.mode != *m {
                    bail!("checkpoint for {} was fine-tuned as {}", m.name(), c.mode.name());
                }
            }
            let amb = ambivalent.as_deref().map(load_lines).transpose()?.unwrap_or_default();
            let options = Options { beam: cfg.beam, bootstrap_samples: cfg.bootstrap_samples, seed: cfg.seed };
            let (mut report, _) = evaluate_all(&ckpts, &load_pairs(test.as_ref().unwrap())?, &amb, &det, &options)?;
            let keep = |p: &str| cfg.protocols.iter().any(|x| x == p);
            if !keep("isolated") {
                report.ties.remove("isolated");
            }
            if !keep("complete") {
                report.ties.remove("complete");
            }
            write_atomic(&out.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
            write_atomic(&out.join("table.tsv"), report.table().as_bytes())?;
            write_atomic(&out.join("groups.tsv"), report.per_group_table().as_bytes())?;
            stdout.write_all(report.table().as_bytes())?;
        }
        Command::Ambid { checkpoint, ambivalent, beam } => {
            let ambivalent = ambivalent.or(cfg.ambivalent.clone());
            require_files([("--checkpoint", Some(&checkpoint)), ("--ambivalent", ambivalent.as_ref())])?;
            let ckpt = Checkpoint::load(&checkpoint)?;
            let tr = Translator::new(&ckpt.model, &ckpt.bpe, ckpt.mode);
            let srcs = load_lines(ambivalent.as_ref().unwrap())?;
            writeln!(stdout, "{:.4}", ambid_batched(&tr, &srcs, beam.unwrap_or(cfg.beam))?)?;
        }
        Command::Gradcheck { epsilon, tolerance, seed } => {
            let mut worst = 0f64;
            let mut dead = BTreeMap::new();
            for r in check_all_modes(epsilon, seed.unwrap_or(cfg.seed)) {
                writeln!(stdout, "{}\t{:.3e}\t{}", r.mode, r.max_rel_error, r.worst)?;
                worst = worst.max(r.max_rel_error);
                if !r.dead_types.is_empty() {
                    dead.insert(r.mode, r.dead_types);
                }
            }
            if worst >= tolerance || !dead.is_empty() {
                bail!("gradient check failed: max relative error {worst:.3e}, dead types {dead:?}");
            }
        }
    }
    Ok(())
}
