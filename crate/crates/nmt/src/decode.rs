//! Batched greedy and beam-search decoding.

use std::cmp::Ordering;

use polagree::conditioning::{condition, ConditionedInput, ConditioningMode, Phase, TagVocab, TypeEmbeddingTable};
use polagree::AttributeSet;
use serde::{Deserialize, Serialize};

use crate::bpe::{Bpe, EOS, RESERVED, SOS};
use crate::model::Model;
use crate::scalar::Scalar;

/// A decoded translation. `tokens` holds only generated subwords: no forced
/// prefix, no `<eos>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub text: String,
    /// Sum of token log-probabilities including `<eos>`.
    pub log_prob: f64,
    /// `log_prob` divided by the number of scored tokens.
    pub score: f64,
}

/// Sentences decoded per forward batch.
const CHUNK: usize = 64;

fn allowed(token: usize) -> bool {
    token == EOS as usize || token >= RESERVED
}

fn start<T>(input: &ConditionedInput<T>) -> Vec<u32> {
    let mut p = vec![SOS];
    p.extend(&input.decoder_forced_prefix);
    p
}

fn budget<T: Scalar, U>(model: &Model<T>, input: &ConditionedInput<U>) -> usize {
    model.config.max_len.saturating_sub(1 + input.decoder_forced_prefix.len())
}

/// Argmax decoding, one step per token.
pub fn greedy<T: Scalar>(model: &Model<T>, inputs: &[ConditionedInput<T>]) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(CHUNK) {
        let refs: Vec<&ConditionedInput<T>> = chunk.iter().collect();
        let memory = model.memory(&refs);
        let mut prefixes: Vec<Vec<u32>> = chunk.iter().map(start).collect();
        let mut generated: Vec<Vec<u32>> = vec![Vec::new(); chunk.len()];
        let mut live: Vec<usize> = (0..chunk.len()).filter(|&i| budget(model, &chunk[i]) > 0).collect();
        while !live.is_empty() {
            let pre: Vec<Vec<u32>> = live.iter().map(|&i| prefixes[i].clone()).collect();
            let lp = model.next_log_probs(&memory, &refs, &pre, &live);
            let mut next = Vec::new();
            for (row, &i) in lp.iter().zip(&live) {
                let mut best = EOS as usize;
                for (t, v) in row.iter().enumerate() {
                    if allowed(t) && *v > row[best] {
                        best = t;
                    }
                }
                if best != EOS as usize {
                    prefixes[i].push(best as u32);
                    generated[i].push(best as u32);
                    if generated[i].len() < budget(model, &chunk[i]) {
                        next.push(i);
                    }
                }
            }
            live = next;
        }
        out.extend(generated);
    }
    out
}

#[derive(Clone)]
struct Beam {
    prefix: Vec<u32>,
    generated: Vec<u32>,
    log_prob: f64,
}

fn normalized(log_prob: f64, len: usize) -> f64 {
    log_prob / len.max(1) as f64
}

fn finished_score(b: &Beam) -> f64 {
    normalized(b.log_prob, b.generated.len() + 1)
}

/// A sentence is done once `beam` hypotheses have finished and, for wider
/// beams, none of the live ones would beat the best of them by ending now.
fn done(finished: &[Beam], live: &[Beam], beam: usize) -> bool {
    if live.is_empty() || (beam == 1 && !finished.is_empty()) {
        return true;
    }
    if finished.len() < beam {
        return false;
    }
    let best = finished.iter().map(finished_score).fold(f64::NEG_INFINITY, f64::max);
    live.iter().all(|b| finished_score(b) <= best)
}

/// Length-normalised beam search; `score` is log-probability over length
/// with `<eos>` counted.
pub fn beam_search<T: Scalar>(model: &Model<T>, bpe: &Bpe, inputs: &[ConditionedInput<T>], beam: usize) -> Vec<Hypothesis> {
    let beam = beam.max(1);
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(CHUNK) {
        let refs: Vec<&ConditionedInput<T>> = chunk.iter().collect();
        let memory = model.memory(&refs);
        let mut beams: Vec<Vec<Beam>> = chunk
            .iter()
            .map(|c| {
                vec![Beam {
                    prefix: start(c),
                    generated: Vec::new(),
                    log_prob: 0.0,
                }]
            })
            .collect();
        let mut finished: Vec<Vec<Beam>> = vec![Vec::new(); chunk.len()];
        loop {
            let mut prefixes = Vec::new();
            let mut owner = Vec::new();
            for (i, bs) in beams.iter().enumerate() {
                for b in bs {
                    prefixes.push(b.prefix.clone());
                    owner.push(i);
                }
            }
            if prefixes.is_empty() {
                break;
            }
            let lp = model.next_log_probs(&memory, &refs, &prefixes, &owner);
            let mut row = 0;
            for i in 0..chunk.len() {
                let live = std::mem::take(&mut beams[i]);
                if live.is_empty() {
                    continue;
                }
                let mut cands: Vec<(f64, usize, u32)> = Vec::new();
                for (bi, b) in live.iter().enumerate() {
                    let r = &lp[row];
                    row += 1;
                    let mut top: Vec<(f64, u32)> = r
                        .iter()
                        .enumerate()
                        .filter(|(t, _)| allowed(*t))
                        .map(|(t, v)| (b.log_prob + v.to_f64().unwrap(), t as u32))
                        .collect();
                    top.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
                    top.truncate(beam);
                    cands.extend(top.into_iter().map(|(s, t)| (s, bi, t)));
                }
                cands.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .unwrap_or(Ordering::Equal)
                        .then(a.1.cmp(&b.1))
                        .then(a.2.cmp(&b.2))
                });
                let limit = budget(model, &chunk[i]);
                let mut next = Vec::new();
                for (rank, (s, bi, t)) in cands.into_iter().enumerate() {
                    if next.len() >= beam {
                        break;
                    }
                    let parent = &live[bi];
                    if t == EOS {
                        if rank < beam {
                            finished[i].push(Beam {
                                prefix: Vec::new(),
                                generated: parent.generated.clone(),
                                log_prob: s,
                            });
                        }
                        continue;
                    }
                    let mut b = parent.clone();
                    b.prefix.push(t);
                    b.generated.push(t);
                    b.log_prob = s;
                    if b.generated.len() >= limit {
                        finished[i].push(b);
                    } else {
                        next.push(b);
                    }
                }
                if !done(&finished[i], &next, beam) {
                    beams[i] = next;
                }
            }
        }
        for f in finished {
            let best = f
                .into_iter()
                .map(|b| {
                    let len = b.generated.len() + 1;
                    (normalized(b.log_prob, len), b)
                })
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(b.1.generated.cmp(&a.1.generated)));
            out.push(match best {
                Some((score, b)) => Hypothesis {
                    text: bpe.decode(&b.generated),
                    tokens: b.generated,
                    log_prob: b.log_prob,
                    score,
                },
                None => Hypothesis {
                    tokens: Vec::new(),
                    text: String::new(),
                    log_prob: 0.0,
                    score: 0.0,
                },
            });
        }
    }
    out
}

/// Encodes sources and applies one conditioning mode for inference.
pub struct Translator<'a, T: Scalar> {
    pub model: &'a Model<T>,
    pub bpe: &'a Bpe,
    pub mode: ConditioningMode,
    table: TypeEmbeddingTable<T>,
    tags: TagVocab,
}

impl<'a, T: Scalar> Translator<'a, T> {
    pub fn new(model: &'a Model<T>, bpe: &'a Bpe, mode: ConditioningMode) -> Self {
        Translator {
            model,
            bpe,
            mode,
            table: model.type_table(),
            tags: bpe.tag_vocab(),
        }
    }

    pub fn source_ids(&self, src: &str) -> Vec<u32> {
        let mut ids = self.bpe.encode(src);
        ids.push(EOS);
        ids
    }

    pub fn prepare(&self, src: &str, attrs: &AttributeSet) -> ConditionedInput<T> {
        condition(self.mode, attrs, &self.source_ids(src), &self.table, &self.tags, Phase::Infer, 0)
    }

    pub fn translate(&self, src: &str, attrs: &AttributeSet, beam: usize) -> Hypothesis {
        self.translate_batch(&[(src, *attrs)], beam).remove(0)
    }

    pub fn translate_batch(&self, items: &[(&str, AttributeSet)], beam: usize) -> Vec<Hypothesis> {
        let inputs: Vec<ConditionedInput<T>> = items.iter().map(|(s, a)| self.prepare(s, a)).collect();
        beam_search(self.model, self.bpe, &inputs, beam)
    }

    pub fn greedy_batch(&self, items: &[(&str, AttributeSet)]) -> Vec<String> {
        let inputs: Vec<ConditionedInput<T>> = items.iter().map(|(s, a)| self.prepare(s, a)).collect();
        greedy(self.model, &inputs).iter().map(|t| self.bpe.decode(t)).collect()
    }
}
