//! JSON run configuration; command-line flags override its fields.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use polagree::conditioning::ConditioningMode;
use polagree_nmt::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Every field is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Word-form lexicon (TSV); the bundled one when absent.
    pub lexicon: Option<PathBuf>,
    /// Synthetic grammar (JSON); the bundled one when absent.
    pub grammar: Option<PathBuf>,
    /// Annotated corpus (JSONL).
    pub corpus: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Attribute-ambivalent sources, one per line.
    pub ambivalent: Option<PathBuf>,
    /// Directory of `<mode>.ckpt` files.
    pub checkpoints: PathBuf,
    /// Directory for reports and training logs.
    pub reports: PathBuf,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub modes: Vec<String>,
    pub seed: u64,
    pub beam: usize,
    pub bootstrap_samples: usize,
    /// `isolated`, `complete` or both.
    pub protocols: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lexicon: None,
            grammar: None,
            corpus: None,
            train: None,
            dev: None,
            test: None,
            ambivalent: None,
            checkpoints: PathBuf::from("checkpoints"),
            reports: PathBuf::from("reports"),
            model: ModelConfig::default(),
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::default(),
            modes: vec!["all".into()],
            seed: 1,
            beam: 5,
            bootstrap_samples: 2000,
            protocols: vec!["isolated".into(), "complete".into()],
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn modes(&self) -> Result<Vec<ConditioningMode>> {
        parse_modes(&self.modes)
    }
}

pub fn parse_modes(names: &[String]) -> Result<Vec<ConditioningMode>> {
    let mut out = Vec::new();
    for n in names {
        for part in n.split(',').filter(|p| !p.is_empty()) {
            if part.eq_ignore_ascii_case("all") {
                out.extend(ConditioningMode::ALL);
            } else {
                out.push(part.parse::<ConditioningMode>().map_err(|e| anyhow::anyhow!("{e}"))?);
            }
        }
    }
    out.dedup();
    if out.is_empty() {
        bail!("no conditioning modes given");
    }
    Ok(out)
}

/// Fails unless every path exists as a file.
pub fn require_files<'a>(paths: impl IntoIterator<Item = (&'a str, Option<&'a PathBuf>)>) -> Result<()> {
    for (what, p) in paths {
        match p {
            None => bail!("missing required path: {what}"),
            Some(p) if !p.is_file() => bail!("{what} {} does not exist", p.display()),
            _ => {}
        }
    }
    Ok(())
}

/// Fails unless the parent directory of every output path exists.
pub fn require_output_dirs<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        if !parent.is_dir() {
            bail!("output directory {} does not exist", parent.display());
        }
    }
    Ok(())
}
