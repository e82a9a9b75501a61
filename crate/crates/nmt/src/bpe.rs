//! Joint byte-pair subword model over both sides of a corpus.

use std::collections::{BTreeMap, HashMap};

use polagree::attributes::AttributeType;
use polagree::conditioning::{TagVocab, NULL_TAG};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const NULL: u32 = 4;
/// The nine tags follow `<null>` in [`AttributeType::ALL`] order.
pub const FIRST_TAG: u32 = 5;
pub const RESERVED: usize = 5 + AttributeType::COUNT;

/// Word-initial marker.
pub const WORD: char = '▁';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BpeError {
    #[error("vocabulary of {requested} is smaller than {reserved} reserved plus {alphabet} base symbols")]
    VocabTooSmall {
        requested: usize,
        reserved: usize,
        alphabet: usize,
    },
    #[error("empty corpus")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bpe {
    tokens: Vec<String>,
    merges: Vec<(u32, u32)>,
    alphabet: usize,
    #[serde(skip)]
    index: HashMap<String, u32>,
    #[serde(skip)]
    ranks: HashMap<(u32, u32), (usize, u32)>,
}

/// Tag ids, which are the same in every subword model.
pub fn reserved_tag_vocab() -> TagVocab {
    let mut tags = [0u32; AttributeType::COUNT];
    for (i, t) in tags.iter_mut().enumerate() {
        *t = FIRST_TAG + i as u32;
    }
    TagVocab { tags, null: NULL }
}

fn reserved_tokens() -> Vec<String> {
    let mut t: Vec<String> = ["<pad>", "<sos>", "<eos>", "<unk>", NULL_TAG].iter().map(|s| s.to_string()).collect();
    t.extend(AttributeType::ALL.iter().map(|a| a.tag().to_string()));
    t
}

fn word_symbols(word: &str) -> impl Iterator<Item = String> + '_ {
    std::iter::once(WORD.to_string()).chain(word.chars().map(String::from))
}

impl Bpe {
    /// Learns `vocab_size - reserved - alphabet` merges, fewer if the corpus
    /// runs out of adjacent pairs.
    pub fn train<'a, I>(texts: I, vocab_size: usize) -> Result<Self, BpeError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for t in texts {
            for w in t.split_whitespace() {
                *counts.entry(w).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(BpeError::Empty);
        }
        let mut alphabet: Vec<String> = counts.keys().flat_map(|w| word_symbols(w)).collect();
        alphabet.sort();
        alphabet.dedup();
        if vocab_size < RESERVED + alphabet.len() {
            return Err(BpeError::VocabTooSmall {
                requested: vocab_size,
                reserved: RESERVED,
                alphabet: alphabet.len(),
            });
        }
        let mut bpe = Bpe {
            tokens: reserved_tokens(),
            merges: Vec::new(),
            alphabet: alphabet.len(),
            index: HashMap::new(),
            ranks: HashMap::new(),
        };
        bpe.tokens.extend(alphabet);
        bpe.rebuild();
        let mut words: Vec<(Vec<u32>, u64)> = counts
            .iter()
            .map(|(w, &c)| (word_symbols(w).map(|s| bpe.index[&s]).collect(), c))
            .collect();
        while bpe.tokens.len() < vocab_size {
            let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
            for (syms, c) in &words {
                for p in syms.windows(2) {
                    *pairs.entry((p[0], p[1])).or_default() += c;
                }
            }
            // Highest count; ties go to the pair whose joined string sorts first.
            let best = pairs.into_iter().max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ja = (&bpe.tokens[pa.0 as usize], &bpe.tokens[pa.1 as usize]);
                    let jb = (&bpe.tokens[pb.0 as usize], &bpe.tokens[pb.1 as usize]);
                    jb.cmp(&ja).then_with(|| pb.cmp(pa))
                })
            });
            let Some(((a, b), _)) = best else { break };
            let new = bpe.tokens.len() as u32;
            let joined = format!("{}{}", bpe.tokens[a as usize], bpe.tokens[b as usize]);
            bpe.tokens.push(joined.clone());
            bpe.index.insert(joined, new);
            bpe.ranks.insert((a, b), (bpe.merges.len(), new));
            bpe.merges.push((a, b));
            for (syms, _) in &mut words {
                *syms = apply_merge(syms, a, b, new);
            }
        }
        Ok(bpe)
    }

    fn rebuild(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let base = (RESERVED + self.alphabet) as u32;
        self.ranks = self
            .merges
            .iter()
            .enumerate()
            .map(|(r, &p)| (p, (r, base + r as u32)))
            .collect();
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let mut b: Bpe = serde_json::from_str(s)?;
        b.rebuild();
        Ok(b)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap()
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn tag_vocab(&self) -> TagVocab {
        reserved_tag_vocab()
    }

    pub fn is_reserved(id: u32) -> bool {
        (id as usize) < RESERVED
    }

    fn encode_word(&self, word: &str, out: &mut Vec<u32>) {
        let mut syms: Vec<u32> = word_symbols(word).map(|s| self.id(&s).unwrap_or(UNK)).collect();
        loop {
            let best = syms
                .windows(2)
                .filter_map(|p| self.ranks.get(&(p[0], p[1])).map(|&r| (r, (p[0], p[1]))))
                .min();
            let Some(((_, new), (a, b))) = best else { break };
            syms = apply_merge(&syms, a, b, new);
        }
        out.extend(syms);
    }

    /// Subword ids of `text`; whitespace-separated reserved strings such as
    /// tags encode to their single atom.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::new();
        for w in text.split_whitespace() {
            match self.index.get(w) {
                Some(&id) if Self::is_reserved(id) => out.push(id),
                _ => self.encode_word(w, &mut out),
            }
        }
        out
    }

    /// Text of `ids`, dropping every reserved token.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut s = String::new();
        for &id in ids {
            if !Self::is_reserved(id) && (id as usize) < self.tokens.len() {
                s.push_str(&self.tokens[id as usize]);
            }
        }
        s.replace(WORD, " ").trim_start().to_string()
    }
}

fn apply_merge(syms: &[u32], a: u32, b: u32, new: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(syms.len());
    let mut i = 0;
    while i < syms.len() {
        if i + 1 < syms.len() && syms[i] == a && syms[i + 1] == b {
            out.push(new);
            i += 2;
        } else {
            out.push(syms[i]);
            i += 1;
        }
    }
    out
}
