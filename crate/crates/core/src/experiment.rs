//! Multi-seed runs and their mean / dispersion summary.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub map: f64,
    pub mrr: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample variance (n − 1 denominator); 0 for a single run.
    pub variance: f64,
    pub std_dev: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("no runs to summarize".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = if values.len() < 2 {
            0.0
        } else {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        };
        Ok(Self {
            mean,
            variance,
            std_dev: variance.sqrt(),
        })
    }

    /// `mean ± std` with four decimals and no leading zero, e.g. `.7295 ± .0036`.
    pub fn table_entry(&self) -> String {
        format!(
            "{} ± {}",
            short_decimal(self.mean),
            short_decimal(self.std_dev)
        )
    }
}

fn short_decimal(v: f64) -> String {
    let s = format!("{v:.4}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => match s.strip_prefix("-0.") {
            Some(rest) => format!("-.{rest}"),
            None => s,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    /// Sorted by seed.
    pub runs: Vec<SeedResult>,
    pub map: MetricSummary,
    pub mrr: MetricSummary,
}

impl ExperimentReport {
    pub fn from_runs(mut runs: Vec<SeedResult>) -> Result<Self> {
        runs.sort_by_key(|r| r.seed);
        if runs.windows(2).any(|w| w[0].seed == w[1].seed) {
            return Err(Error::Config("duplicate seed in experiment runs".into()));
        }
        let maps: Vec<f64> = runs.iter().map(|r| r.map).collect();
        let mrrs: Vec<f64> = runs.iter().map(|r| r.mrr).collect();
        Ok(Self {
            map: MetricSummary::from_values(&maps)?,
            mrr: MetricSummary::from_values(&mrrs)?,
            runs,
        })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("seed\tmap\tmrr\tbest_epoch\n");
        for r in &self.runs {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{:.6}\t{}",
                r.seed, r.map, r.mrr, r.best_epoch
            );
        }
        let _ = writeln!(out, "mean\t{:.6}\t{:.6}\t", self.map.mean, self.mrr.mean);
        let _ = writeln!(
            out,
            "variance\t{:.8}\t{:.8}\t",
            self.map.variance, self.mrr.variance
        );
        let _ = writeln!(
            out,
            "std_dev\t{:.6}\t{:.6}\t",
            self.map.std_dev, self.mrr.std_dev
        );
        let _ = writeln!(
            out,
            "table\t{}\t{}\t",
            self.map.table_entry(),
            self.mrr.table_entry()
        );
        out
    }
}

/// Runs `run_seed` for `first_seed .. first_seed + n_seeds` in order.
pub fn run_seeds(
    first_seed: u64,
    n_seeds: usize,
    mut run_seed: impl FnMut(u64) -> Result<SeedResult>,
) -> Result<ExperimentReport> {
    if n_seeds == 0 {
        return Err(Error::Config("number of seeds must be at least 1".into()));
    }
    let runs = (0..n_seeds as u64)
        .map(|k| run_seed(first_seed + k))
        .collect::<Result<Vec<_>>>()?;
    ExperimentReport::from_runs(runs)
}
