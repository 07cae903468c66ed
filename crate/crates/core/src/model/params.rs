use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EmbeddingTable, LabelSpace, Sentence};
use crate::error::{Error, Result};
use crate::math::{Matrix, ParamTensor};
use crate::querygen::Setup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputLayer {
    Crf,
    Softmax,
}

impl fmt::Display for OutputLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputLayer::Crf => "crf",
            OutputLayer::Softmax => "softmax",
        })
    }
}

impl FromStr for OutputLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crf" => Ok(OutputLayer::Crf),
            "softmax" => Ok(OutputLayer::Softmax),
            _ => Err(Error::Config(format!("output layer must be `crf` or `softmax`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Filters of the context CNN.
    pub nk_c: usize,
    /// Filters of the entity CNN.
    pub nk_e: usize,
    /// Hidden units over the context features.
    pub h_c: usize,
    /// Hidden units over the entity features.
    pub h_e: usize,
    pub k: usize,
    pub emb_dim: usize,
    pub context_width: usize,
    pub entity_width: usize,
    pub output: OutputLayer,
}

impl HyperParams {
    /// Tuned sizes per setup and output layer; filter widths 3 and 2, k = 3,
    /// 50-dimensional embeddings.
    pub fn tuned(setup: Setup, output: OutputLayer) -> Self {
        let (nk_c, nk_e, h_c, h_e) = match (output, setup) {
            (OutputLayer::Crf, Setup::EntityPairs) => (200, 50, 100, 50),
            (OutputLayer::Crf, Setup::TableFilling) => (500, 100, 200, 50),
            _ => (500, 100, 100, 50),
        };
        HyperParams {
            nk_c,
            nk_e,
            h_c,
            h_e,
            k: 3,
            emb_dim: 50,
            context_width: 3,
            entity_width: 2,
            output,
        }
    }

    /// Width of each task's hidden representation.
    pub fn hidden(&self) -> usize {
        self.h_c + self.h_e
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nk_c", self.nk_c),
            ("nk_e", self.nk_e),
            ("h_c", self.h_c),
            ("h_e", self.h_e),
            ("k", self.k),
            ("emb_dim", self.emb_dim),
            ("context_width", self.context_width),
            ("entity_width", self.entity_width),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("hyperparameter `{name}` must be positive")));
        }
        Ok(())
    }

    /// Names and shapes of every tensor, in storage order.
    pub fn tensor_shapes(&self, vocab: usize) -> Vec<(&'static str, usize, usize)> {
        let (k, n, h) = (self.k, LabelSpace::N, self.hidden());
        vec![
            ("embeddings", vocab, self.emb_dim),
            ("context_filters", self.nk_c, self.context_width * self.emb_dim),
            ("context_bias", 1, self.nk_c),
            ("entity_filters", self.nk_e, self.entity_width * self.emb_dim),
            ("entity_bias", 1, self.nk_e),
            ("ec_context_weight", self.h_c, 2 * k * self.nk_c),
            ("ec_context_bias", 1, self.h_c),
            ("ec_entity_weight", self.h_e, k * self.nk_e),
            ("ec_entity_bias", 1, self.h_e),
            ("re_context_weight", self.h_c, 4 * k * self.nk_c),
            ("re_context_bias", 1, self.h_c),
            ("re_entity_weight", self.h_e, 2 * k * self.nk_e),
            ("re_entity_bias", 1, self.h_e),
            ("ec_output", n, h),
            ("re_output", n, h),
            ("transitions", LabelSpace::WITH_TAGS, LabelSpace::WITH_TAGS),
        ]
    }
}

/// Tensor positions inside [`ModelParams::tensors`].
pub mod slot {
    pub const EMBEDDINGS: usize = 0;
    pub const CONTEXT_FILTERS: usize = 1;
    pub const CONTEXT_BIAS: usize = 2;
    pub const ENTITY_FILTERS: usize = 3;
    pub const ENTITY_BIAS: usize = 4;
    pub const EC_CONTEXT_W: usize = 5;
    pub const EC_CONTEXT_B: usize = 6;
    pub const EC_ENTITY_W: usize = 7;
    pub const EC_ENTITY_B: usize = 8;
    pub const RE_CONTEXT_W: usize = 9;
    pub const RE_CONTEXT_B: usize = 10;
    pub const RE_ENTITY_W: usize = 11;
    pub const RE_ENTITY_B: usize = 12;
    pub const EC_OUTPUT: usize = 13;
    pub const RE_OUTPUT: usize = 14;
    pub const TRANSITIONS: usize = 15;
    pub const COUNT: usize = 16;
}

/// Word-to-row index shared by the embedding tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
    unk: usize,
}

impl Vocab {
    pub fn new(words: Vec<String>, unk: usize) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index, unk }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn unk(&self) -> usize {
        self.unk
    }

    pub fn lookup(&self, word: &str) -> usize {
        self.index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()))
            .copied()
            .unwrap_or(self.unk)
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t)).collect()
    }
}

/// Every trainable tensor of the network plus the vocabulary index.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hyper: HyperParams,
    pub vocab: Vocab,
    pub tensors: Vec<ParamTensor>,
    pub embeddings_trainable: bool,
}

impl ModelParams {
    pub fn tensor(&self, slot: usize) -> &ParamTensor {
        &self.tensors[slot]
    }

    pub fn value(&self, slot: usize) -> &Matrix {
        &self.tensors[slot].value
    }

    pub fn transitions(&self) -> &Matrix {
        self.value(slot::TRANSITIONS)
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(ParamTensor::zero_grad);
    }

    /// Tensors updated by the optimizer.
    pub fn is_trainable(&self, slot: usize) -> bool {
        match slot {
            slot::EMBEDDINGS => self.embeddings_trainable,
            slot::TRANSITIONS => self.hyper.output == OutputLayer::Crf,
            _ => true,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<usize> {
        self.vocab.encode(&sentence.tokens)
    }
}

fn scaled_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize, fan_out: usize) -> Matrix {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized above")
}

/// Fresh parameters: scaled-uniform weights with bound
/// `sqrt(6 / (fan_in + fan_out))`, zero biases, zero transitions. The
/// embedding tensor is taken from `embeddings`.
pub fn init_params(hyper: HyperParams, embeddings: EmbeddingTable, seed: u64) -> Result<ModelParams> {
    hyper.validate()?;
    if embeddings.dim() != hyper.emb_dim {
        return Err(Error::Config(format!(
            "embedding dimension {} does not match emb_dim {}",
            embeddings.dim(),
            hyper.emb_dim
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = Vocab::new(embeddings.words().to_vec(), embeddings.unk_row());
    let trainable = embeddings.trainable;
    let mut tensors = Vec::with_capacity(slot::COUNT);
    let mut emb = Some(embeddings.into_matrix());
    for (i, (name, rows, cols)) in hyper.tensor_shapes(vocab.len()).into_iter().enumerate() {
        let value = match i {
            slot::EMBEDDINGS => emb.take().expect("taken once"),
            slot::CONTEXT_FILTERS | slot::ENTITY_FILTERS => scaled_uniform(&mut rng, rows, cols, cols, rows),
            slot::EC_CONTEXT_W
            | slot::EC_ENTITY_W
            | slot::RE_CONTEXT_W
            | slot::RE_ENTITY_W
            | slot::EC_OUTPUT
            | slot::RE_OUTPUT => scaled_uniform(&mut rng, rows, cols, cols, rows),
            _ => Matrix::zeros(rows, cols),
        };
        tensors.push(ParamTensor::new(name, value));
    }
    Ok(ModelParams {
        hyper,
        vocab,
        tensors,
        embeddings_trainable: trainable,
    })
}
