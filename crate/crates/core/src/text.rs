//! Query tokenization and the GRU word encoder.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use actorseg_tensor::{ParamStore, SeededRng, Tensor};

use crate::error::{ModelError, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const DEFAULT_MAX_WORDS: usize = 20;

/// Token/id bijection with the two reserved ids `PAD` and `UNK` in front.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self {
            ids: HashMap::new(),
            tokens: vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()],
        };
        for tok in tokens {
            let tok = tok.as_ref();
            if tok.is_empty() || tok.chars().any(char::is_whitespace) || tok != tok.to_lowercase() {
                return Err(ModelError::Validation(format!("invalid vocabulary token {tok:?}")));
            }
            if tok == PAD_TOKEN || tok == UNK_TOKEN || vocab.ids.contains_key(tok) {
                return Err(ModelError::Validation(format!("duplicate vocabulary token {tok:?}")));
            }
            vocab.ids.insert(tok.to_string(), vocab.tokens.len());
            vocab.tokens.push(tok.to_string());
        }
        Ok(vocab)
    }

    /// Number of ids including `PAD` and `UNK`.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() == 2
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Regular tokens in id order, excluding the reserved pair.
    pub fn tokens(&self) -> &[String] {
        &self.tokens[2..]
    }

    /// One token per line; line `k` (0-based) holds id `k + 2`.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ModelError::io(path, e))?;
        Self::new(text.lines().filter(|l| !l.is_empty()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = String::new();
        for tok in self.tokens() {
            text.push_str(tok);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| ModelError::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Query {
    pub text: String,
    pub ids: Vec<usize>,
}

/// Lowercases, splits on whitespace, maps words to ids and keeps the first
/// `n_max` of them.
pub fn tokenize(text: &str, vocab: &Vocabulary, n_max: usize) -> Result<Query> {
    if n_max == 0 {
        return Err(ModelError::Validation("n_max must be at least 1".into()));
    }
    let lower = text.to_lowercase();
    let ids: Vec<usize> = lower.split_whitespace().take(n_max).map(|w| vocab.id(w)).collect();
    if ids.is_empty() {
        return Err(ModelError::Validation("query text is empty".into()));
    }
    Ok(Query {
        text: text.to_string(),
        ids,
    })
}

/// Per-word features `L` (`N×C_L`).
#[derive(Clone, Debug)]
pub struct WordFeatures {
    pub words: Tensor,
}

impl WordFeatures {
    pub fn len(&self) -> usize {
        self.words.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> usize {
        self.words.shape()[1]
    }

    /// Sentence vector `l`, the mean of the word rows.
    pub fn pooled(&self) -> Result<Tensor> {
        Ok(self.words.mean_axis(0)?)
    }
}

/// Word embedding table followed by a single-layer unidirectional GRU.
#[derive(Clone, Debug)]
pub struct TextEncoder {
    pub embedding: Tensor,
    /// Input weights `[E×H]` for the update, reset and candidate gates.
    pub w: [Tensor; 3],
    /// Recurrent weights `[H×H]`, same gate order.
    pub u: [Tensor; 3],
    pub b: [Tensor; 3],
}

const GATES: [&str; 3] = ["z", "r", "h"];

impl TextEncoder {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        vocab_size: usize,
        embed_dim: usize,
        hidden: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        let embedding = store.uniform(format!("{prefix}.embedding"), &[vocab_size, embed_dim], 1, rng)?;
        let mut make = |kind: &str, shape: &[usize]| -> Result<[Tensor; 3]> {
            let mut out = Vec::with_capacity(3);
            for g in GATES {
                out.push(store.uniform(format!("{prefix}.gru.{kind}_{g}"), shape, hidden, rng)?);
            }
            Ok(out.try_into().expect("three gates"))
        };
        let w = make("w", &[embed_dim, hidden])?;
        let u = make("u", &[hidden, hidden])?;
        let b = make("b", &[hidden])?;
        Ok(Self { embedding, w, u, b })
    }

    pub fn hidden(&self) -> usize {
        self.u[0].shape()[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.shape()[1]
    }

    /// Runs the recurrence over the query at its true length from `h_0 = 0`;
    /// row `t` of the result is `h_t`.
    pub fn encode(&self, query: &Query) -> Result<WordFeatures> {
        let vocab = self.embedding.shape()[0];
        if let Some(&bad) = query.ids.iter().find(|&&id| id >= vocab) {
            return Err(ModelError::Validation(format!("token id {bad} outside vocabulary of {vocab}")));
        }
        if query.ids.is_empty() {
            return Err(ModelError::Validation("query has no tokens".into()));
        }
        let x = self.embedding.gather_rows(&query.ids)?;
        let mut h = Tensor::zeros(&[self.hidden()]);
        let mut rows = Vec::with_capacity(query.ids.len());
        for t in 0..query.ids.len() {
            let xt = x.select_first(t)?;
            let gate = |g: usize, hin: &Tensor| -> Result<Tensor> {
                Ok(xt.linear(&self.w[g], Some(&self.b[g]))?.add(&hin.linear(&self.u[g], None)?)?)
            };
            let z = gate(0, &h)?.sigmoid();
            let r = gate(1, &h)?.sigmoid();
            let cand = gate(2, &r.mul(&h)?)?.tanh();
            h = h.add(&z.mul(&cand.sub(&h)?)?)?;
            rows.push(h.clone());
        }
        Ok(WordFeatures {
            words: Tensor::stack_first(&rows)?,
        })
    }

    /// Multiply-accumulates of one `encode` call on `n` words.
    pub fn macs(&self, n: usize) -> u64 {
        let (e, h) = (self.embed_dim() as u64, self.hidden() as u64);
        n as u64 * 3 * (e + h) * h
    }
}
