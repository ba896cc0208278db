//! Loss, AdaDelta, the epoch loop with early stopping, and the gradient checker.

use std::fmt;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::charvocab::{build_alphabet, CharAlphabet};
use crate::dataio::QAPair;
use crate::error::{Error, Result};
use crate::features::{build_idf, IdfTable, N_FEATURES};
use crate::model::{
    encode_pairs, init_model, BackwardOptions, EncodedPair, Gradients, Model, ModelParams,
    RunConfig, N_CLASSES,
};
use crate::nn_ops::{BnBackward, Mode};
use crate::rankeval::{self, EvalReport, ScoredPair};

/// Mean cross-entropy over the batch plus `λ Σ‖F‖²`, and its gradient with
/// respect to the probabilities. The regularizer's gradient is added
/// separately with [`Gradients::add_l2`].
pub fn loss(
    probs: &[[f64; N_CLASSES]],
    labels: &[u8],
    lambda: f64,
    params: &ModelParams,
) -> Result<(f64, Vec<[f64; N_CLASSES]>)> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let n = probs.len() as f64;
    let mut ce = 0.0;
    let mut grad = vec![[0.0; N_CLASSES]; probs.len()];
    for ((p, &y), g) in probs.iter().zip(labels).zip(&mut grad) {
        let y = y as usize;
        if y >= N_CLASSES {
            return Err(Error::Contract(format!("label {y} is not 0 or 1")));
        }
        if p[y].is_nan() || p[y] <= 0.0 {
            return Err(Error::NonFinite(format!(
                "probability {} of the true class",
                p[y]
            )));
        }
        ce -= p[y].ln();
        g[y] = -1.0 / (n * p[y]);
    }
    Ok((ce / n + lambda * params.filter_sq_norm(), grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaDeltaState {
    pub acc_grad_sq: Vec<Vec<f64>>,
    pub acc_update_sq: Vec<Vec<f64>>,
    pub rho: f64,
    pub eps: f64,
}

impl AdaDeltaState {
    pub fn new(params: &ModelParams, rho: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .trainable()
            .iter()
            .map(|(_, v)| vec![0.0; v.len()])
            .collect();
        Self {
            acc_grad_sq: zeros.clone(),
            acc_update_sq: zeros,
            rho,
            eps,
        }
    }
}

/// One AdaDelta update of every trainable array.
pub fn adadelta_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdaDeltaState,
) -> Result<()> {
    let (rho, eps) = (state.rho, state.eps);
    let gs = grads.slices();
    let ps = params.trainable_mut();
    if gs.len() != ps.len() || ps.len() != state.acc_grad_sq.len() {
        return Err(Error::Shape(
            "gradient set does not match the parameters".into(),
        ));
    }
    for (((p, g), eg), ex) in ps
        .into_iter()
        .zip(gs)
        .zip(&mut state.acc_grad_sq)
        .zip(&mut state.acc_update_sq)
    {
        if p.len() != g.len() || p.len() != eg.len() {
            return Err(Error::Shape(
                "gradient array length differs from parameter".into(),
            ));
        }
        for i in 0..p.len() {
            eg[i] = rho * eg[i] + (1.0 - rho) * g[i] * g[i];
            let dx = -((ex[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g[i];
            ex[i] = rho * ex[i] + (1.0 - rho) * dx * dx;
            p[i] += dx;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best monitored value; stops after `patience` epochs without a
/// strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        if value > self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.stale = 0;
            StopDecision::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_map: f64,
    pub dev_mrr: f64,
}

impl fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch {} loss {:.6} dev_map {:.6} dev_mrr {:.6}",
            self.epoch, self.train_loss, self.dev_map, self.dev_mrr
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    /// Loss of every minibatch in training order.
    pub batch_losses: Vec<f64>,
}

/// Pairs with their identifiers and network inputs.
#[derive(Debug, Clone)]
pub struct PreparedSplit {
    pub pairs: Vec<QAPair>,
    pub encoded: Vec<EncodedPair>,
}

impl PreparedSplit {
    pub fn new(
        pairs: Vec<QAPair>,
        config: &RunConfig,
        alphabet: &CharAlphabet,
        idf: &IdfTable,
    ) -> Self {
        let encoded = encode_pairs(&pairs, config, alphabet, idf);
        Self { pairs, encoded }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Inference-mode scores in input order.
pub fn score_split(model: &Model, split: &PreparedSplit) -> Result<Vec<ScoredPair>> {
    let scores = model.score_all(&split.encoded)?;
    Ok(split
        .pairs
        .iter()
        .zip(scores)
        .map(|(p, s)| ScoredPair::new(p.qid.clone(), p.aid.clone(), s, p.label))
        .collect())
}

pub fn evaluate_split(model: &Model, split: &PreparedSplit) -> Result<EvalReport> {
    rankeval::evaluate(&score_split(model, split)?)
}

/// Fraction of pairs whose predicted class (p₁ > 0.5) matches the label.
pub fn accuracy(model: &Model, pairs: &[EncodedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Contract("accuracy of an empty set".into()));
    }
    let scores = model.score_all(pairs)?;
    let correct = scores
        .iter()
        .zip(pairs)
        .filter(|(s, p)| (**s > 0.5) == (p.label == 1))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Inference-mode loss (cross-entropy plus L2) over `pairs`.
pub fn dataset_loss(model: &Model, pairs: &[EncodedPair]) -> Result<f64> {
    let scores = model.score_all(pairs)?;
    let probs: Vec<[f64; N_CLASSES]> = scores.iter().map(|&s| [1.0 - s, s]).collect();
    let labels: Vec<u8> = pairs.iter().map(|p| p.label).collect();
    Ok(loss(&probs, &labels, model.config.lambda, &model.params)?.0)
}

/// Called after every epoch with the record and the current (not best)
/// model. Returning `Break` ends training early.
pub type EpochHook<'a> = dyn FnMut(&EpochRecord, &Model) -> ControlFlow<()> + 'a;

/// Hook that ignores every epoch.
pub fn no_hook(_: &EpochRecord, _: &Model) -> ControlFlow<()> {
    ControlFlow::Continue(())
}

/// Minibatch training from an initialized model. `monitor` returns the dev
/// (MAP, MRR) of a candidate model.
#[doc(hidden)]
pub fn train_with_monitor(
    mut model: Model,
    train: &[EncodedPair],
    rng: &mut ChaCha8Rng,
    mut monitor: impl FnMut(&Model) -> Result<(f64, f64)>,
    on_epoch: &mut EpochHook<'_>,
) -> Result<(Model, TrainHistory)> {
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    let mut state = AdaDeltaState::new(&model.params, cfg.adadelta_rho, cfg.adadelta_eps);
    let mut stopper = EarlyStopping::new(cfg.patience.max(1));
    let mut best = model.params.clone();
    let mut epochs = Vec::new();
    let mut batch_losses = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&EncodedPair> = chunk.iter().map(|&i| &train[i]).collect();
            let labels: Vec<u8> = batch.iter().map(|p| p.label).collect();
            let cache = model.forward_batch(&batch, Mode::Train, rng)?;
            let (value, dprobs) = loss(&cache.probs(), &labels, cfg.lambda, &model.params)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            let mut grads = model.backward_batch(&cache, &dprobs)?;
            grads.add_l2(&model.params, cfg.lambda);
            adadelta_step(&mut model.params, &grads, &mut state)?;
            model.update_running_stats(&cache);
            batch_losses.push(value);
            weighted += value * batch.len() as f64;
        }
        let (dev_map, dev_mrr) = monitor(&model)?;
        let record = EpochRecord {
            epoch,
            train_loss: weighted / train.len() as f64,
            dev_map,
            dev_mrr,
        };
        let flow = on_epoch(&record, &model);
        epochs.push(record);
        match stopper.observe(epoch, dev_map) {
            StopDecision::Improved => best = model.params.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
        if flow.is_break() {
            break;
        }
    }
    model.params = best;
    Ok((
        model,
        TrainHistory {
            epochs,
            best_epoch: stopper.best_epoch(),
            batch_losses,
        },
    ))
}

/// Trains from `config.seed`, keeping the parameters of the best dev-MAP
/// epoch. With `bn_exact_stats` the kept model's running statistics are then
/// recomputed over the training split.
pub fn train(
    train: &PreparedSplit,
    dev: &PreparedSplit,
    config: &RunConfig,
    on_epoch: &mut EpochHook<'_>,
) -> Result<(Model, TrainHistory)> {
    let probe: Vec<ScoredPair> = dev
        .pairs
        .iter()
        .map(|p| ScoredPair::new(p.qid.clone(), p.aid.clone(), 0.0, p.label))
        .collect();
    if !rankeval::rank(&probe).iter().any(|q| q.is_evaluable()) {
        return Err(Error::Config(
            "development split has no question with both a correct and an incorrect answer".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = init_model(config, &mut rng)?;
    let (mut model, history) = train_with_monitor(
        model,
        &train.encoded,
        &mut rng,
        |m| {
            let r = evaluate_split(m, dev)?;
            Ok((r.map, r.mrr))
        },
        on_epoch,
    )?;
    if config.bn_exact_stats {
        model.recompute_bn_stats(&train.encoded)?;
    }
    Ok((model, history))
}

/// A trained model with the IDF table its features were computed from.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: Model,
    pub idf: IdfTable,
    pub history: TrainHistory,
}

/// Builds IDF from the training answers, encodes both splits and trains.
pub fn fit(
    train_pairs: Vec<QAPair>,
    dev_pairs: Vec<QAPair>,
    config: &RunConfig,
    on_epoch: &mut EpochHook<'_>,
) -> Result<Fitted> {
    if dev_pairs.is_empty() {
        return Err(Error::Config("development split is empty".into()));
    }
    let alphabet = build_alphabet();
    let idf = build_idf(&train_pairs)?;
    let train_split = PreparedSplit::new(train_pairs, config, &alphabet, &idf);
    let dev_split = PreparedSplit::new(dev_pairs, config, &alphabet, &idf);
    let (model, history) = train(&train_split, &dev_split, config, on_epoch)?;
    Ok(Fitted {
        model,
        idf,
        history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Name and flat index of the worst coordinate.
    pub worst: (String, usize),
    /// Analytic and numeric gradient at the worst coordinate.
    pub worst_values: (f64, f64),
    pub n_checked: usize,
}

/// The configuration the gradient checker is meant for.
pub fn tiny_config() -> RunConfig {
    RunConfig {
        embed_dim: 4,
        conv_blocks: vec![crate::model::ConvSpec {
            width: 2,
            n_filters: 3,
        }],
        hidden_dim: 5,
        max_len_q: 8,
        max_len_a: 8,
        ..RunConfig::default()
    }
}

/// Compares the analytic gradient of the full training loss (cross-entropy
/// plus L2) with central differences at every trainable coordinate.
///
/// The conv bias of a batch-normalized block is skipped: its true gradient
/// is exactly zero, so a difference quotient there only measures roundoff.
pub fn grad_check(config: &RunConfig, seed: u64, h: f64) -> Result<GradCheckReport> {
    grad_check_with(config, seed, h, BnBackward::Full, 1e-8)
}

/// `floor` is the lower bound of the relative-error denominator.
#[doc(hidden)]
pub fn grad_check_with(
    config: &RunConfig,
    seed: u64,
    h: f64,
    bn: BnBackward,
    floor: f64,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = init_model(config, &mut rng)?;
    let batch = synthetic_batch(config, &mut rng);
    let refs: Vec<&EncodedPair> = batch.iter().collect();
    let labels: Vec<u8> = batch.iter().map(|p| p.label).collect();
    let dropout_seed: u64 = rng.gen();

    let objective = |m: &Model| -> Result<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
        let cache = m.forward_batch(&refs, Mode::Train, &mut r)?;
        Ok(loss(&cache.probs(), &labels, config.lambda, &m.params)?.0)
    };

    let mut r = ChaCha8Rng::seed_from_u64(dropout_seed);
    let cache = model.forward_batch(&refs, Mode::Train, &mut r)?;
    let (_, dprobs) = loss(&cache.probs(), &labels, config.lambda, &model.params)?;
    let mut grads = model.backward_batch_with(&cache, &dprobs, BackwardOptions { bn })?;
    grads.add_l2(&model.params, config.lambda);
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();
    let names: Vec<String> = model
        .params
        .trainable()
        .into_iter()
        .map(|(n, _)| n)
        .collect();

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        worst_values: (0.0, 0.0),
        n_checked: 0,
    };
    for (a, (name, ga)) in names.iter().zip(&analytic).enumerate() {
        if config.use_bn && name.starts_with("block") && name.ends_with(".bias") {
            continue;
        }
        for (i, &ga_i) in ga.iter().enumerate() {
            let orig = probe.params.trainable_mut()[a][i];
            probe.params.trainable_mut()[a][i] = orig + h;
            let up = objective(&probe)?;
            probe.params.trainable_mut()[a][i] = orig - h;
            let down = objective(&probe)?;
            probe.params.trainable_mut()[a][i] = orig;
            let gn = (up - down) / (2.0 * h);
            let err = (ga_i - gn).abs() / ga_i.abs().max(gn.abs()).max(floor);
            report.n_checked += 1;
            if err > report.max_rel_error || report.worst.0.is_empty() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = (name.clone(), i);
                report.worst_values = (ga_i, gn);
            }
        }
    }
    Ok(report)
}

/// Three pairs of random alphabet text with random features and mixed labels.
fn synthetic_batch(config: &RunConfig, rng: &mut ChaCha8Rng) -> Vec<EncodedPair> {
    let alphabet = build_alphabet();
    let chars: Vec<char> = "abcdefghij0123.,?".chars().collect();
    let text = |max: usize, rng: &mut ChaCha8Rng| -> String {
        let n = rng.gen_range(max / 2..=max).max(1);
        (0..n)
            .map(|_| chars[rng.gen_range(0..chars.len())])
            .collect()
    };
    (0..3)
        .map(|i| {
            let q = text(config.max_len_q, rng);
            let a = text(config.max_len_a, rng);
            let mut features = [0.0; N_FEATURES];
            features
                .iter_mut()
                .for_each(|f| *f = rng.gen_range(0.0..0.5));
            EncodedPair {
                question: alphabet.encode(&q, config.max_len_q),
                answer: alphabet.encode(&a, config.max_len_a),
                features,
                label: (i % 2) as u8,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConvSpec;
    use proptest::prelude::*;

    fn params() -> ModelParams {
        ModelParams::zeros(&tiny_config()).unwrap()
    }

    #[test]
    fn loss_examples() {
        let p = params();
        let (v, g) = loss(&[[0.5, 0.5]], &[1], 0.0, &p).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![[0.0, -2.0]]);
        assert_eq!(loss(&[[0.0, 1.0]], &[1], 0.0, &p).unwrap().0, 0.0);

        let mut q = p.clone();
        // four unit entries: ‖F‖² = 4
        q.blocks[0].filters.data_mut()[..4].fill(1.0);
        let (v, _) = loss(&[[0.0, 1.0]], &[1], 5e-4, &q).unwrap();
        assert!((v - 0.002).abs() < 1e-15);

        assert!(matches!(
            loss(&[[1.0, 0.0]], &[1], 0.0, &p),
            Err(Error::NonFinite(_))
        ));
        assert!(loss(&[], &[], 0.0, &p).is_err());
    }

    proptest! {
        #[test]
        fn loss_is_batch_permutation_invariant(
            rows in proptest::collection::vec((0.01f64..0.99, 0u8..2), 1..12),
            rot in 0usize..12,
        ) {
            let p = params();
            let probs: Vec<[f64; 2]> = rows.iter().map(|(x, _)| [1.0 - x, *x]).collect();
            let labels: Vec<u8> = rows.iter().map(|(_, y)| *y).collect();
            let (v, _) = loss(&probs, &labels, 0.0, &p).unwrap();
            let k = rot % rows.len();
            let mut pr = probs.clone();
            let mut lr = labels.clone();
            pr.rotate_left(k);
            lr.rotate_left(k);
            let (w, _) = loss(&pr, &lr, 0.0, &p).unwrap();
            prop_assert!((v - w).abs() < 1e-12);
        }
    }

    fn unit_grads(p: &ModelParams, value: f64) -> Gradients {
        let mut g = Gradients::zeros_like(p);
        g.out_b = vec![value; 2];
        g
    }

    #[test]
    fn adadelta_examples() {
        let mut p = params();
        let mut st = AdaDeltaState::new(&p, 0.95, 1e-6);
        let before = p.clone();
        let zero = Gradients::zeros_like(&p);
        adadelta_step(&mut p, &zero, &mut st).unwrap();
        assert_eq!(p, before);
        assert!(st.acc_grad_sq.iter().flatten().all(|&v| v == 0.0));

        let g = unit_grads(&p, 1.0);
        adadelta_step(&mut p, &g, &mut st).unwrap();
        let dx1 = p.out_b[0];
        let expect = -(1e-6f64).sqrt() / (0.05f64 + 1e-6).sqrt();
        assert!((dx1 - expect).abs() < 1e-15 * expect.abs());
        assert!((dx1 + 4.4721e-3).abs() < 1e-7);

        adadelta_step(&mut p, &g, &mut st).unwrap();
        let dx2 = p.out_b[0] - dx1;
        assert!(dx2.abs() > dx1.abs());
        assert!(st.acc_update_sq.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn early_stopping_contract() {
        let mut s = EarlyStopping::new(5);
        let maps = [0.5, 0.6, 0.7, 0.69, 0.68, 0.67, 0.66, 0.65, 0.64];
        let mut stopped = None;
        for (i, &m) in maps.iter().enumerate() {
            if s.observe(i + 1, m) == StopDecision::Stop {
                stopped = Some(i + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(8));
        assert_eq!(s.best_epoch(), 3);
        // ties are not improvements
        let mut s = EarlyStopping::new(1);
        assert_eq!(s.observe(1, 0.5), StopDecision::Improved);
        assert_eq!(s.observe(2, 0.5), StopDecision::Stop);
    }

    fn toy_pairs(n_q: usize) -> Vec<QAPair> {
        let mut out = Vec::new();
        for q in 0..n_q {
            for a in 0..4 {
                let label = (a == q % 4) as u8;
                out.push(QAPair {
                    qid: format!("q{q}"),
                    aid: format!("q{q}a{a}"),
                    question: format!("what is item {q}?"),
                    answer: if label == 1 {
                        format!("item {q} is thing")
                    } else {
                        format!("other {a} stuff")
                    },
                    label,
                });
            }
        }
        out
    }

    fn toy_config() -> RunConfig {
        let mut c = tiny_config();
        c.max_len_q = 16;
        c.max_len_a = 16;
        c.batch_size = 4;
        c.max_epochs = 3;
        c
    }

    #[test]
    fn train_keeps_best_epoch_params() {
        let c = toy_config();
        let alphabet = build_alphabet();
        let pairs = toy_pairs(3);
        let idf = build_idf(&pairs).unwrap();
        let split = PreparedSplit::new(pairs, &c, &alphabet, &idf);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let model = init_model(&c, &mut rng).unwrap();

        // dev MAP peaks at epoch 3 then decreases
        let mut c2 = c.clone();
        c2.max_epochs = 20;
        let model = Model {
            config: c2,
            params: model.params,
        };
        let maps = [0.5, 0.6, 0.7, 0.69, 0.68, 0.67, 0.66, 0.65, 0.64, 0.63];
        let mut calls = 0;
        let mut snapshots = Vec::new();
        let (best, hist) = train_with_monitor(
            model,
            &split.encoded,
            &mut rng,
            |m| {
                snapshots.push(m.params.clone());
                calls += 1;
                Ok((maps[calls - 1], 0.0))
            },
            &mut no_hook,
        )
        .unwrap();
        assert_eq!(hist.epochs.len(), 8);
        assert_eq!(hist.best_epoch, 3);
        assert_eq!(best.params, snapshots[2]);
        assert_ne!(best.params, snapshots[7]);
    }

    #[test]
    fn training_is_deterministic_and_logs() {
        let c = toy_config();
        let mut lines = Vec::new();
        let a = fit(toy_pairs(3), toy_pairs(2), &c, &mut |r, _| {
            lines.push(r.to_string());
            ControlFlow::Continue(())
        })
        .unwrap();
        let b = fit(toy_pairs(3), toy_pairs(2), &c, &mut no_hook).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(lines.len(), a.history.epochs.len());
        assert!(lines[0].starts_with("epoch 1 loss "));
        assert!(lines[0].contains(" dev_map ") && lines[0].contains(" dev_mrr "));
    }

    #[test]
    fn dev_without_evaluable_question_is_config_error() {
        let c = toy_config();
        let mut dev = toy_pairs(1);
        dev.iter_mut().for_each(|p| p.label = 0);
        assert!(matches!(
            fit(toy_pairs(2), dev, &c, &mut no_hook),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn evaluation_does_not_mutate_model() {
        let c = toy_config();
        let fitted = fit(toy_pairs(2), toy_pairs(2), &c, &mut no_hook).unwrap();
        let alphabet = build_alphabet();
        let split = PreparedSplit::new(toy_pairs(2), &c, &alphabet, &fitted.idf);
        let before = fitted.model.params.clone();
        evaluate_split(&fitted.model, &split).unwrap();
        accuracy(&fitted.model, &split.encoded).unwrap();
        assert_eq!(fitted.model.params, before);
    }

    #[test]
    fn grad_check_tiny_config() {
        let r = grad_check(&tiny_config(), 1, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        assert!(r.n_checked > 300);
    }

    #[test]
    fn grad_check_variants() {
        let mut c = tiny_config();
        c.lambda = 0.05;
        c.conv_blocks.push(ConvSpec {
            width: 3,
            n_filters: 2,
        });
        c.activation = crate::nn_ops::Activation::Tanh;
        c.conv_mode = crate::nn_ops::ConvMode::Wide;
        c.dropout_rate = 0.3;
        // with two tanh blocks and 0.05 weights many gradients shrink to
        // ~1e-8, where the difference quotient is mostly roundoff
        c.init_scale = 0.5;
        let r = grad_check(&c, 4, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
        c.use_bn = false;
        let r = grad_check(&c, 4, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn grad_check_notices_broken_bn_backward() {
        let r = grad_check_with(&tiny_config(), 1, 1e-5, BnBackward::StatsDetached, 1e-8).unwrap();
        assert!(r.max_rel_error > 1e-2, "{r:?}");
    }
}
