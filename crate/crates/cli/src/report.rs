//! Multi-mode evaluation report in the layout of the results table.

use std::collections::BTreeMap;

use anyhow::Result;
use polagree::corpus::AnnotatedPair;
use polagree::detector::Detector;
use polagree::metrics::{BootstrapResult, ScoreReport};
use polagree_nmt::evaluate::{evaluate, tie_set, ModeEvaluation};
use polagree_nmt::{Checkpoint, Translator};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub mode: String,
    pub isolated: ScoreReport,
    pub complete: ScoreReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<Row>,
    /// Systems statistically tied with the best chrF, per protocol.
    pub ties: BTreeMap<String, BootstrapResult>,
}

pub struct Options {
    pub beam: usize,
    pub bootstrap_samples: usize,
    pub seed: u64,
}

/// Evaluates each checkpoint under its own mode and computes tie sets over
/// all of them.
pub fn evaluate_all(
    checkpoints: &[Checkpoint],
    test: &[AnnotatedPair],
    ambivalent: &[String],
    detector: &Detector<'_>,
    options: &Options,
) -> Result<(EvaluationReport, Vec<ModeEvaluation>)> {
    let mut evals = Vec::new();
    for c in checkpoints {
        let tr = Translator::new(&c.model, &c.bpe, c.mode);
        log::info!("evaluating {}", c.mode.name());
        evals.push(evaluate(&tr, test, ambivalent, detector, options.beam)?);
    }
    let mut ties = BTreeMap::new();
    if let Some(first) = evals.first() {
        for (protocol, refs) in [("isolated", &first.isolated.references), ("complete", &first.complete.references)] {
            let systems: BTreeMap<String, Vec<String>> = evals
                .iter()
                .map(|e| {
                    let p = if protocol == "isolated" { &e.isolated } else { &e.complete };
                    (e.mode.clone(), p.hypotheses.clone())
                })
                .collect();
            ties.insert(protocol.to_string(), tie_set(&systems, refs, options.bootstrap_samples, options.seed)?);
        }
    }
    let rows = evals
        .iter()
        .map(|e| Row {
            mode: e.mode.clone(),
            isolated: e.isolated.report.clone(),
            complete: e.complete.report.clone(),
        })
        .collect();
    Ok((EvaluationReport { rows, ties }, evals))
}

fn cell(x: Option<f64>, tied: bool) -> String {
    match x {
        Some(v) if tied => format!("*{v:.2}"),
        Some(v) => format!("{v:.2}"),
        None => "-".to_string(),
    }
}

impl EvaluationReport {
    fn tied(&self, protocol: &str, mode: &str) -> bool {
        self.ties.get(protocol).is_some_and(|t| t.tied.iter().any(|m| m == mode))
    }

    /// TSV with isolated chrF/BLEU/Agree, then complete chrF/BLEU/Agree and
    /// AmbID; `*` marks chrF tied with the best.
    pub fn table(&self) -> String {
        let mut s = String::from("model\tiso_chrf\tiso_bleu\tiso_agree\tcc_chrf\tcc_bleu\tcc_agree\tambid\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.mode,
                cell(Some(r.isolated.chrf), self.tied("isolated", &r.mode)),
                cell(Some(r.isolated.bleu), false),
                cell(r.isolated.agree, false),
                cell(Some(r.complete.chrf), self.tied("complete", &r.mode)),
                cell(Some(r.complete.bleu), false),
                cell(r.complete.agree, false),
                cell(r.complete.ambid, false),
            ));
        }
        s
    }

    /// Complete-context chrF per context group, one column per mode.
    pub fn per_group_table(&self) -> String {
        let mut groups: Vec<&String> = self.rows.iter().flat_map(|r| r.complete.per_group.keys()).collect();
        groups.sort();
        groups.dedup();
        let mut s = String::from("group");
        for r in &self.rows {
            s.push('\t');
            s.push_str(&r.mode);
        }
        s.push('\n');
        for g in groups {
            s.push_str(g);
            for r in &self.rows {
                s.push('\t');
                s.push_str(&cell(r.complete.per_group.get(g).copied(), false));
            }
            s.push('\n');
        }
        s
    }
}
