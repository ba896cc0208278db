use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::nn_ops::{Activation, ConvMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub width: usize,
    pub n_filters: usize,
}

/// Every architecture and training knob. Defaults are the CSR setup on TrecQA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub embed_dim: usize,
    pub conv_blocks: Vec<ConvSpec>,
    pub conv_mode: ConvMode,
    pub hidden_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
    pub use_bn: bool,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Replace the moving averages with exact training-set statistics after training.
    pub bn_exact_stats: bool,
    pub max_len_q: usize,
    pub max_len_a: usize,
    /// L2 weight on the convolution filter banks.
    pub lambda: f64,
    pub adadelta_rho: f64,
    pub adadelta_eps: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Half-width of the uniform initialization range.
    pub init_scale: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            embed_dim: 50,
            conv_blocks: vec![
                ConvSpec {
                    width: 3,
                    n_filters: 128,
                },
                ConvSpec {
                    width: 5,
                    n_filters: 32,
                },
            ],
            conv_mode: ConvMode::Narrow,
            hidden_dim: 100,
            activation: Activation::Relu,
            dropout_rate: 0.0,
            use_bn: true,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            bn_exact_stats: false,
            max_len_q: 192,
            max_len_a: 386,
            lambda: 5e-4,
            adadelta_rho: 0.95,
            adadelta_eps: 1e-6,
            batch_size: 64,
            patience: 5,
            max_epochs: 50,
            seed: 1,
            init_scale: 0.05,
        }
    }
}

fn parse_blocks(v: &str) -> Result<Vec<ConvSpec>> {
    v.split(',')
        .map(|spec| {
            let (w, n) = spec.trim().split_once(':').ok_or_else(|| {
                Error::Config(format!("conv block {spec:?} is not width:filters"))
            })?;
            Ok(ConvSpec {
                width: parse_num(w.trim(), "conv block width")?,
                n_filters: parse_num(n.trim(), "conv block filters")?,
            })
        })
        .collect()
}

fn parse_num<T: std::str::FromStr>(v: &str, key: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn parse_bool(v: &str, key: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" | "w" => Ok(true),
        "false" | "0" | "no" | "w/o" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
    }
}

impl RunConfig {
    pub fn for_dataset(dataset: Dataset) -> Self {
        let mut c = Self::default();
        match dataset {
            Dataset::TrecQa => {
                c.max_len_q = 192;
                c.max_len_a = 386;
            }
            Dataset::WikiQa => {
                c.max_len_q = 125;
                c.max_len_a = 386;
            }
        }
        c
    }

    pub const KEYS: &'static [&'static str] = &[
        "embed_dim",
        "conv_blocks",
        "conv_mode",
        "hidden_dim",
        "activation",
        "dropout_rate",
        "use_bn",
        "bn_momentum",
        "bn_eps",
        "bn_exact_stats",
        "max_len_q",
        "max_len_a",
        "lambda",
        "adadelta_rho",
        "adadelta_eps",
        "batch_size",
        "patience",
        "max_epochs",
        "seed",
        "init_scale",
    ];

    /// Sets one field from its textual form. `conv_blocks` is written
    /// `width:filters,width:filters`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "embed_dim" => self.embed_dim = parse_num(value, key)?,
            "conv_blocks" => self.conv_blocks = parse_blocks(value)?,
            "conv_mode" => {
                self.conv_mode = match value.trim() {
                    "narrow" => ConvMode::Narrow,
                    "wide" => ConvMode::Wide,
                    _ => {
                        return Err(Error::Config(format!(
                            "conv_mode must be narrow or wide, got {value:?}"
                        )))
                    }
                }
            }
            "hidden_dim" => self.hidden_dim = parse_num(value, key)?,
            "activation" => {
                self.activation = match value.trim() {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    _ => {
                        return Err(Error::Config(format!(
                            "activation must be relu or tanh, got {value:?}"
                        )))
                    }
                }
            }
            "dropout_rate" => self.dropout_rate = parse_num(value, key)?,
            "use_bn" => self.use_bn = parse_bool(value, key)?,
            "bn_momentum" => self.bn_momentum = parse_num(value, key)?,
            "bn_eps" => self.bn_eps = parse_num(value, key)?,
            "bn_exact_stats" => self.bn_exact_stats = parse_bool(value, key)?,
            "max_len_q" => self.max_len_q = parse_num(value, key)?,
            "max_len_a" => self.max_len_a = parse_num(value, key)?,
            "lambda" => self.lambda = parse_num(value, key)?,
            "adadelta_rho" => self.adadelta_rho = parse_num(value, key)?,
            "adadelta_eps" => self.adadelta_eps = parse_num(value, key)?,
            "batch_size" => self.batch_size = parse_num(value, key)?,
            "patience" => self.patience = parse_num(value, key)?,
            "max_epochs" => self.max_epochs = parse_num(value, key)?,
            "seed" => self.seed = parse_num(value, key)?,
            "init_scale" => self.init_scale = parse_num(value, key)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_kv_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    i + 1
                ))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_kv_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_kv_text(&text)
    }

    pub fn to_kv_text(&self) -> String {
        let blocks = self
            .conv_blocks
            .iter()
            .map(|b| format!("{}:{}", b.width, b.n_filters))
            .collect::<Vec<_>>()
            .join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("embed_dim", self.embed_dim.to_string());
        kv("conv_blocks", blocks);
        kv(
            "conv_mode",
            match self.conv_mode {
                ConvMode::Narrow => "narrow",
                ConvMode::Wide => "wide",
            }
            .into(),
        );
        kv("hidden_dim", self.hidden_dim.to_string());
        kv(
            "activation",
            match self.activation {
                Activation::Relu => "relu",
                Activation::Tanh => "tanh",
            }
            .into(),
        );
        kv("dropout_rate", self.dropout_rate.to_string());
        kv("use_bn", self.use_bn.to_string());
        kv("bn_momentum", self.bn_momentum.to_string());
        kv("bn_eps", self.bn_eps.to_string());
        kv("bn_exact_stats", self.bn_exact_stats.to_string());
        kv("max_len_q", self.max_len_q.to_string());
        kv("max_len_a", self.max_len_a.to_string());
        kv("lambda", self.lambda.to_string());
        kv("adadelta_rho", self.adadelta_rho.to_string());
        kv("adadelta_eps", self.adadelta_eps.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("patience", self.patience.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("seed", self.seed.to_string());
        kv("init_scale", self.init_scale.to_string());
        out
    }

    /// Positions lost to narrow convolutions across the stack, plus one.
    pub fn min_input_len(&self) -> usize {
        match self.conv_mode {
            ConvMode::Narrow => self.conv_blocks.iter().map(|b| b.width - 1).sum::<usize>() + 1,
            ConvMode::Wide => 1,
        }
    }

    /// Length of each block's output for an input of `len` characters.
    pub fn branch_lengths(&self, len: usize) -> Result<Vec<usize>> {
        let mut cur = len;
        let mut out = Vec::with_capacity(self.conv_blocks.len());
        for b in &self.conv_blocks {
            cur = self.conv_mode.output_len(cur, b.width)?;
            out.push(cur);
        }
        Ok(out)
    }

    pub fn pooled_dim(&self) -> usize {
        self.conv_blocks
            .last()
            .map_or(self.embed_dim, |b| b.n_filters)
    }

    pub fn join_dim(&self, n_features: usize) -> usize {
        2 * self.pooled_dim() + n_features
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return bad("embed_dim and hidden_dim must be positive".into());
        }
        if self.conv_blocks.is_empty() {
            return bad("at least one convolution block is required".into());
        }
        if self
            .conv_blocks
            .iter()
            .any(|b| b.width == 0 || b.n_filters == 0)
        {
            return bad("convolution widths and filter counts must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if !(0.0..1.0).contains(&self.adadelta_rho) || self.adadelta_eps <= 0.0 {
            return bad("adadelta_rho must be in [0, 1) and adadelta_eps positive".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || self.bn_eps < 0.0 {
            return bad("bn_momentum must be in (0, 1] and bn_eps non-negative".into());
        }
        if self.lambda < 0.0 || self.init_scale < 0.0 {
            return bad("lambda and init_scale must be non-negative".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive".into());
        }
        let min = self.min_input_len();
        if self.max_len_q < min || self.max_len_a < min {
            return bad(format!(
                "max lengths {}/{} are shorter than the {min} characters the convolution stack consumes",
                self.max_len_q, self.max_len_a
            ));
        }
        Ok(())
    }
}
