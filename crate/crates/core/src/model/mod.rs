//! The siamese character-level network.
//!
//! ```text
//! question ─ embed ─ [conv → BN → act]⁺ ─ max-pool ─┐
//!                                                    ├─ join ─ dense → act → dropout ─ dense → softmax
//! answer ─── embed ─ [conv → BN → act]⁺ ─ max-pool ─┤
//!                            overlap features ───────┘
//! ```
//!
//! Both branches read the same [`ModelParams`]. In train mode batch-norm
//! statistics are pooled over every question and answer sequence of the
//! batch, so the two branches are normalized consistently with the single
//! set of running statistics used at inference.

mod checkpoint;
mod config;

pub use checkpoint::Checkpoint;
pub use config::{ConvSpec, RunConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::charvocab::{CharAlphabet, EncodedSentence, ALPHABET_SIZE};
use crate::dataio::QAPair;
use crate::error::{Error, Result};
use crate::features::{pair_features, IdfTable, N_FEATURES};
use crate::nn_ops::{self, BatchStats, BnBackward, BnCache, ConvBlockParams, Mode};
use crate::tensor::Tensor;

/// Number of output classes (incorrect, correct).
pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `d × |C|`, one column per character.
    pub embedding: Tensor,
    pub blocks: Vec<ConvBlockParams>,
    /// `hidden × join`
    pub hidden_w: Tensor,
    pub hidden_b: Vec<f64>,
    /// `2 × hidden`
    pub out_w: Tensor,
    pub out_b: Vec<f64>,
}

impl ModelParams {
    /// All-zero weights with identity batch-norm state, shaped by `config`.
    pub fn zeros(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(config.conv_blocks.len());
        let mut channels = config.embed_dim;
        for b in &config.conv_blocks {
            blocks.push(ConvBlockParams::new(b.n_filters, channels, b.width));
            channels = b.n_filters;
        }
        Ok(Self {
            embedding: Tensor::zeros(&[config.embed_dim, ALPHABET_SIZE]),
            blocks,
            hidden_w: Tensor::zeros(&[config.hidden_dim, config.join_dim(N_FEATURES)]),
            hidden_b: vec![0.0; config.hidden_dim],
            out_w: Tensor::zeros(&[N_CLASSES, config.hidden_dim]),
            out_b: vec![0.0; N_CLASSES],
        })
    }

    /// Checks every shape against `config`.
    pub fn check_shapes(&self, config: &RunConfig) -> Result<()> {
        let want = Self::zeros(config)?;
        let mismatch = |what: &str, a: &[usize], b: &[usize]| {
            Error::Contract(format!(
                "{what} has shape {a:?}, configuration implies {b:?}"
            ))
        };
        if self.embedding.shape() != want.embedding.shape() {
            return Err(mismatch(
                "embedding",
                self.embedding.shape(),
                want.embedding.shape(),
            ));
        }
        if self.blocks.len() != want.blocks.len() {
            return Err(Error::Contract(format!(
                "{} convolution blocks, configuration implies {}",
                self.blocks.len(),
                want.blocks.len()
            )));
        }
        for (i, (b, w)) in self.blocks.iter().zip(&want.blocks).enumerate() {
            let n = w.n_filters();
            if b.filters.shape() != w.filters.shape()
                || [&b.bias, &b.gamma, &b.beta, &b.running_mean, &b.running_var]
                    .iter()
                    .any(|v| v.len() != n)
            {
                return Err(mismatch(
                    &format!("block {i}"),
                    b.filters.shape(),
                    w.filters.shape(),
                ));
            }
        }
        if self.hidden_w.shape() != want.hidden_w.shape()
            || self.hidden_b.len() != want.hidden_b.len()
        {
            return Err(mismatch(
                "hidden layer",
                self.hidden_w.shape(),
                want.hidden_w.shape(),
            ));
        }
        if self.out_w.shape() != want.out_w.shape() || self.out_b.len() != N_CLASSES {
            return Err(mismatch(
                "output layer",
                self.out_w.shape(),
                want.out_w.shape(),
            ));
        }
        Ok(())
    }

    /// Trainable arrays in canonical order, paired with their names.
    pub fn trainable(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![("embedding".into(), self.embedding.data())];
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{i}.filters"), b.filters.data()));
            out.push((format!("block{i}.bias"), &b.bias));
            out.push((format!("block{i}.gamma"), &b.gamma));
            out.push((format!("block{i}.beta"), &b.beta));
        }
        out.push(("hidden_w".into(), self.hidden_w.data()));
        out.push(("hidden_b".into(), &self.hidden_b));
        out.push(("out_w".into(), self.out_w.data()));
        out.push(("out_b".into(), &self.out_b));
        out
    }

    /// Mutable view of the trainable arrays, same order as [`trainable`](Self::trainable).
    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.data_mut()];
        for b in &mut self.blocks {
            out.push(b.filters.data_mut());
            out.push(&mut b.bias);
            out.push(&mut b.gamma);
            out.push(&mut b.beta);
        }
        out.push(self.hidden_w.data_mut());
        out.push(&mut self.hidden_b);
        out.push(self.out_w.data_mut());
        out.push(&mut self.out_b);
        out
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable().iter().map(|(_, v)| v.len()).sum()
    }

    /// `Σ ‖F‖²` over the convolution filter banks.
    pub fn filter_sq_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.filters.sum_squares()).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub filters: Tensor,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Gradients, shape-congruent with the trainable part of [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub embedding: Tensor,
    pub blocks: Vec<BlockGrads>,
    pub hidden_w: Tensor,
    pub hidden_b: Vec<f64>,
    pub out_w: Tensor,
    pub out_b: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            embedding: Tensor::zeros(params.embedding.shape()),
            blocks: params
                .blocks
                .iter()
                .map(|b| BlockGrads {
                    filters: Tensor::zeros(b.filters.shape()),
                    bias: vec![0.0; b.n_filters()],
                    gamma: vec![0.0; b.n_filters()],
                    beta: vec![0.0; b.n_filters()],
                })
                .collect(),
            hidden_w: Tensor::zeros(params.hidden_w.shape()),
            hidden_b: vec![0.0; params.hidden_b.len()],
            out_w: Tensor::zeros(params.out_w.shape()),
            out_b: vec![0.0; params.out_b.len()],
        }
    }

    /// Same order as [`ModelParams::trainable`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.embedding.data()];
        for b in &self.blocks {
            out.push(b.filters.data());
            out.push(&b.bias);
            out.push(&b.gamma);
            out.push(&b.beta);
        }
        out.push(self.hidden_w.data());
        out.push(&self.hidden_b);
        out.push(self.out_w.data());
        out.push(&self.out_b);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }

    /// Adds `2λF` to each filter-bank gradient.
    pub fn add_l2(&mut self, params: &ModelParams, lambda: f64) {
        for (g, b) in self.blocks.iter_mut().zip(&params.blocks) {
            for (gv, &fv) in g.filters.data_mut().iter_mut().zip(b.filters.data()) {
                *gv += 2.0 * lambda * fv;
            }
        }
    }
}

/// A question/answer pair ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPair {
    pub question: EncodedSentence,
    pub answer: EncodedSentence,
    pub features: [f64; N_FEATURES],
    pub label: u8,
}

/// Encodes pairs with the configured lengths and computes overlap features.
pub fn encode_pairs(
    pairs: &[QAPair],
    config: &RunConfig,
    alphabet: &CharAlphabet,
    idf: &IdfTable,
) -> Vec<EncodedPair> {
    pairs
        .iter()
        .map(|p| EncodedPair {
            question: alphabet.encode(&p.question, config.max_len_q),
            answer: alphabet.encode(&p.answer, config.max_len_a),
            features: pair_features(&p.question, &p.answer, idf),
            label: p.label,
        })
        .collect()
}

/// Intermediates of one sequence through the convolution stack.
#[derive(Debug, Clone)]
struct SeqTrace {
    indices: EncodedSentence,
    embedded: Tensor,
    /// Output of each block after the nonlinearity.
    acts: Vec<Tensor>,
    argmax: Vec<usize>,
    pooled: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ItemTrace {
    join: Vec<f64>,
    hidden: Vec<f64>,
    dropout_mask: Vec<f64>,
    hidden_dropped: Vec<f64>,
    probs: [f64; N_CLASSES],
}

/// Everything a train-mode backward pass needs.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    n_items: usize,
    /// Questions first, then answers, in batch order.
    seqs: Vec<SeqTrace>,
    bn: Vec<Option<BnCache>>,
    items: Vec<ItemTrace>,
    signature: Vec<Vec<usize>>,
}

impl ForwardCache {
    pub fn probs(&self) -> Vec<[f64; N_CLASSES]> {
        self.items.iter().map(|i| i.probs).collect()
    }

    /// Per-block batch statistics (train mode with batch norm only).
    pub fn batch_stats(&self) -> Vec<Option<&BatchStats>> {
        self.bn
            .iter()
            .map(|c| c.as_ref().map(|c| &c.stats))
            .collect()
    }

    /// Pooled question and answer vectors of item `i`.
    pub fn pooled(&self, i: usize) -> (&[f64], &[f64]) {
        (&self.seqs[i].pooled, &self.seqs[self.n_items + i].pooled)
    }
}

fn signature(params: &ModelParams) -> Vec<Vec<usize>> {
    let mut s = vec![params.embedding.shape().to_vec()];
    s.extend(params.blocks.iter().map(|b| b.filters.shape().to_vec()));
    s.push(params.hidden_w.shape().to_vec());
    s.push(params.out_w.shape().to_vec());
    s
}

#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BackwardOptions {
    pub bn: BnBackward,
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: RunConfig,
    pub params: ModelParams,
}

/// Uniform(−s, s) weights (s = `init_scale`), zero biases, γ = 1, β = 0,
/// running mean 0 and variance 1.
pub fn init_model<R: Rng + ?Sized>(config: &RunConfig, rng: &mut R) -> Result<Model> {
    let mut params = ModelParams::zeros(config)?;
    let s = config.init_scale;
    let mut fill = |t: &mut Tensor| {
        for v in t.data_mut() {
            *v = if s > 0.0 { rng.gen_range(-s..s) } else { 0.0 };
        }
    };
    fill(&mut params.embedding);
    for b in &mut params.blocks {
        fill(&mut b.filters);
    }
    fill(&mut params.hidden_w);
    fill(&mut params.out_w);
    Ok(Model {
        config: config.clone(),
        params,
    })
}

impl Model {
    /// Initializes from `config.seed`.
    pub fn from_seed(config: &RunConfig) -> Result<Self> {
        init_model(config, &mut ChaCha8Rng::seed_from_u64(config.seed))
    }

    fn check_lengths(&self, s: &EncodedSentence) -> Result<()> {
        let min = self.config.min_input_len();
        if s.len() < min {
            return Err(Error::Shape(format!(
                "sequence of {} positions is shorter than the {min} the convolution stack consumes",
                s.len()
            )));
        }
        Ok(())
    }

    /// Runs a batch. In train mode batch-norm uses batch statistics and
    /// dropout draws from `rng`; in infer mode neither applies and `rng` is unused.
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        batch: &[&EncodedPair],
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardCache> {
        self.forward_with_embeddings(batch, mode, rng, [&self.params.embedding; 2])
    }

    /// As [`forward_batch`](Self::forward_batch), with separate lookup tables
    /// for the question and answer branches. Used to check weight sharing.
    #[doc(hidden)]
    pub fn forward_with_embeddings<R: Rng + ?Sized>(
        &self,
        batch: &[&EncodedPair],
        mode: Mode,
        rng: &mut R,
        embeddings: [&Tensor; 2],
    ) -> Result<ForwardCache> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let p = &self.params;
        let cfg = &self.config;
        let n_items = batch.len();
        let inputs: Vec<(&EncodedSentence, usize)> = batch
            .iter()
            .map(|b| (&b.question, 0))
            .chain(batch.iter().map(|b| (&b.answer, 1)))
            .collect();
        for (s, _) in &inputs {
            self.check_lengths(s)?;
        }

        let mut seqs: Vec<SeqTrace> = inputs
            .par_iter()
            .map(|(s, branch)| {
                Ok(SeqTrace {
                    indices: (*s).clone(),
                    embedded: nn_ops::embedding_lookup(embeddings[*branch], s)?,
                    acts: Vec::with_capacity(p.blocks.len()),
                    argmax: Vec::new(),
                    pooled: Vec::new(),
                })
            })
            .collect::<Result<_>>()?;

        let mut bn = Vec::with_capacity(p.blocks.len());
        for (k, block) in p.blocks.iter().enumerate() {
            let pre: Vec<Tensor> = seqs
                .par_iter()
                .map(|s| {
                    let input = if k == 0 { &s.embedded } else { &s.acts[k - 1] };
                    nn_ops::conv1d(block, input, cfg.conv_mode)
                })
                .collect::<Result<_>>()?;
            let (mut ys, cache) = if cfg.use_bn {
                nn_ops::batchnorm(&pre, block, mode, cfg.bn_eps)?
            } else {
                (pre, None)
            };
            ys.par_iter_mut()
                .for_each(|y| cfg.activation.apply(y.data_mut()));
            for (s, y) in seqs.iter_mut().zip(ys) {
                s.acts.push(y);
            }
            bn.push(cache);
        }

        for s in &mut seqs {
            let (pooled, argmax) =
                nn_ops::maxpool_time(s.acts.last().expect("at least one block"))?;
            s.pooled = pooled;
            s.argmax = argmax;
        }

        let mut items = Vec::with_capacity(n_items);
        for (i, pair) in batch.iter().enumerate() {
            let mut join = Vec::with_capacity(p.hidden_w.shape()[1]);
            join.extend_from_slice(&seqs[i].pooled);
            join.extend_from_slice(&seqs[n_items + i].pooled);
            join.extend_from_slice(&pair.features);
            let mut hidden = nn_ops::dense(&p.hidden_w, &p.hidden_b, &join)?;
            cfg.activation.apply(&mut hidden);
            let (hidden_dropped, dropout_mask) =
                nn_ops::dropout(&hidden, cfg.dropout_rate, mode, rng)?;
            let logits = nn_ops::dense(&p.out_w, &p.out_b, &hidden_dropped)?;
            let probs = nn_ops::softmax(&logits);
            if !probs.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite("output probabilities".into()));
            }
            items.push(ItemTrace {
                join,
                hidden,
                dropout_mask,
                hidden_dropped,
                probs: [probs[0], probs[1]],
            });
        }

        Ok(ForwardCache {
            mode,
            n_items,
            seqs,
            bn,
            items,
            signature: signature(p),
        })
    }

    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        dloss_dprobs: &[[f64; N_CLASSES]],
    ) -> Result<Gradients> {
        self.backward_batch_with(cache, dloss_dprobs, BackwardOptions::default())
    }

    /// Shared-parameter gradients are the sums of the question-branch and
    /// answer-branch contributions. The conv bias of a batch-normalized block
    /// gets an exact zero: the batch mean removes it from the output.
    #[doc(hidden)]
    pub fn backward_batch_with(
        &self,
        cache: &ForwardCache,
        dloss_dprobs: &[[f64; N_CLASSES]],
        opts: BackwardOptions,
    ) -> Result<Gradients> {
        let p = &self.params;
        let cfg = &self.config;
        if cache.signature != signature(p) {
            return Err(Error::Contract(
                "forward cache was produced with differently shaped parameters".into(),
            ));
        }
        if cache.mode != Mode::Train && cfg.use_bn {
            return Err(Error::Contract(
                "backward requires a train-mode forward pass".into(),
            ));
        }
        if dloss_dprobs.len() != cache.n_items {
            return Err(Error::Shape(format!(
                "{} output gradients for a batch of {}",
                dloss_dprobs.len(),
                cache.n_items
            )));
        }
        let n_items = cache.n_items;
        let mut grads = Gradients::zeros_like(p);
        let pooled_dim = cache.seqs[0].pooled.len();
        let mut d_pooled = vec![Vec::new(); 2 * n_items];

        for (i, (item, dp)) in cache.items.iter().zip(dloss_dprobs).enumerate() {
            let d_logits = nn_ops::softmax_backward(&item.probs, dp);
            let out = nn_ops::dense_backward(&p.out_w, &item.hidden_dropped, &d_logits);
            accumulate(grads.out_w.data_mut(), out.weight.data());
            accumulate(&mut grads.out_b, &out.bias);
            let mut d_hidden = nn_ops::dropout_backward(&out.input, &item.dropout_mask);
            cfg.activation.backward(&item.hidden, &mut d_hidden);
            let hid = nn_ops::dense_backward(&p.hidden_w, &item.join, &d_hidden);
            accumulate(grads.hidden_w.data_mut(), hid.weight.data());
            accumulate(&mut grads.hidden_b, &hid.bias);
            d_pooled[i] = hid.input[..pooled_dim].to_vec();
            d_pooled[n_items + i] = hid.input[pooled_dim..2 * pooled_dim].to_vec();
        }

        let mut d_acts: Vec<Tensor> = cache
            .seqs
            .iter()
            .zip(&d_pooled)
            .map(|(s, g)| nn_ops::maxpool_backward(g, &s.argmax, s.acts.last().unwrap().shape()[1]))
            .collect();

        for k in (0..p.blocks.len()).rev() {
            let block = &p.blocks[k];
            d_acts
                .par_iter_mut()
                .zip(&cache.seqs)
                .for_each(|(g, s)| cfg.activation.backward(s.acts[k].data(), g.data_mut()));
            let d_pre = match &cache.bn[k] {
                Some(bn_cache) => {
                    let bg =
                        nn_ops::batchnorm_backward_with(&d_acts, bn_cache, &block.gamma, opts.bn);
                    grads.blocks[k].gamma = bg.gamma;
                    grads.blocks[k].beta = bg.beta;
                    bg.input
                }
                None => d_acts,
            };
            let conv: Vec<nn_ops::ConvGrads> = cache
                .seqs
                .par_iter()
                .zip(&d_pre)
                .map(|(s, g)| {
                    let input = if k == 0 { &s.embedded } else { &s.acts[k - 1] };
                    nn_ops::conv1d_backward(block, input, g, cfg.conv_mode)
                })
                .collect::<Result<_>>()?;
            let bg = &mut grads.blocks[k];
            // fixed sequence order keeps the sums reproducible
            for c in &conv {
                accumulate(bg.filters.data_mut(), c.filters.data());
                if !cfg.use_bn {
                    accumulate(&mut bg.bias, &c.bias);
                }
            }
            d_acts = conv.into_iter().map(|c| c.input).collect();
        }

        for (s, g) in cache.seqs.iter().zip(&d_acts) {
            nn_ops::embedding_backward(g, &s.indices, &mut grads.embedding);
        }
        Ok(grads)
    }

    pub fn forward_pair<R: Rng + ?Sized>(
        &self,
        pair: &EncodedPair,
        mode: Mode,
        rng: &mut R,
    ) -> Result<([f64; N_CLASSES], ForwardCache)> {
        let cache = self.forward_batch(&[pair], mode, rng)?;
        Ok((cache.items[0].probs, cache))
    }

    pub fn backward_pair(
        &self,
        cache: &ForwardCache,
        dloss_dprobs: [f64; N_CLASSES],
    ) -> Result<Gradients> {
        self.backward_batch(cache, &[dloss_dprobs])
    }

    /// Probability that `pair` is a correct answer (inference mode).
    pub fn score(&self, pair: &EncodedPair) -> Result<f64> {
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let cache = self.forward_batch(&[pair], Mode::Infer, &mut unused)?;
        Ok(cache.items[0].probs[1])
    }

    /// Scores every pair independently in inference mode.
    pub fn score_all(&self, pairs: &[EncodedPair]) -> Result<Vec<f64>> {
        pairs.par_iter().map(|p| self.score(p)).collect()
    }

    /// Replaces the running batch-norm statistics with exact statistics of
    /// the given pairs' question and answer sequences, block by block.
    pub fn recompute_bn_stats(&mut self, pairs: &[EncodedPair]) -> Result<()> {
        if !self.config.use_bn || pairs.is_empty() {
            return Ok(());
        }
        let seqs: Vec<&EncodedSentence> = pairs
            .iter()
            .map(|p| &p.question)
            .chain(pairs.iter().map(|p| &p.answer))
            .collect();
        for k in 0..self.params.blocks.len() {
            let this = &*self;
            // per-sequence (count, mean, M2) merged in fixed order
            let partials: Vec<Vec<(f64, f64, f64)>> = seqs
                .par_iter()
                .map(|s| {
                    let pre = this.conv_output_infer(s, k)?;
                    let len = pre.shape()[1];
                    Ok(pre
                        .data()
                        .chunks(len)
                        .map(|row| {
                            let m = row.iter().sum::<f64>() / len as f64;
                            let m2 = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                            (len as f64, m, m2)
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            let n = self.params.blocks[k].n_filters();
            let mut acc = vec![(0.0f64, 0.0f64, 0.0f64); n];
            for part in &partials {
                for (a, &(nb, mb, m2b)) in acc.iter_mut().zip(part) {
                    let na = a.0;
                    let total = na + nb;
                    let delta = mb - a.1;
                    a.1 += delta * nb / total;
                    a.2 += m2b + delta * delta * na * nb / total;
                    a.0 = total;
                }
            }
            let block = &mut self.params.blocks[k];
            for (i, (cnt, mean, m2)) in acc.into_iter().enumerate() {
                block.running_mean[i] = mean;
                block.running_var[i] = m2 / (cnt - 1.0).max(1.0);
            }
        }
        Ok(())
    }

    /// Pre-normalization conv output of block `k`, earlier blocks in infer mode.
    fn conv_output_infer(&self, s: &EncodedSentence, k: usize) -> Result<Tensor> {
        let cfg = &self.config;
        let mut x = nn_ops::embedding_lookup(&self.params.embedding, s)?;
        for (j, block) in self.params.blocks.iter().enumerate() {
            let pre = nn_ops::conv1d(block, &x, cfg.conv_mode)?;
            if j == k {
                return Ok(pre);
            }
            let (mut ys, _) = nn_ops::batchnorm(&[pre], block, Mode::Infer, cfg.bn_eps)?;
            x = ys.pop().expect("one output");
            cfg.activation.apply(x.data_mut());
        }
        unreachable!("block index {k} out of range")
    }

    /// Applies the exponential moving average update from a train-mode pass.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let momentum = self.config.bn_momentum;
        for (block, stats) in self.params.blocks.iter_mut().zip(cache.batch_stats()) {
            if let Some(stats) = stats {
                nn_ops::update_running_stats(block, stats, momentum);
            }
        }
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
