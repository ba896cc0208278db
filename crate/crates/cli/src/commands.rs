use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::ControlFlow;
use std::path::Path;

use anyhow::{Context, Result};
use csr_core::charvocab::build_alphabet;
use csr_core::dataio::{self, compute_stats, reference_stats, Layout, QAPair, Split};
use csr_core::experiment::{run_seeds, SeedResult};
use csr_core::model::{Checkpoint, Model, RunConfig};
use csr_core::optim::{self, fit, tiny_config, EpochRecord, Fitted, PreparedSplit};
use csr_core::rankeval::{self, EvalReport};

use crate::{
    CheckFailed, DatasetArg, EvalArgs, ExperimentArgs, GradcheckArgs, PrepareArgs, TrainArgs,
};

pub fn alphabet(hash: bool) -> Result<()> {
    let a = build_alphabet();
    if hash {
        println!("{}", a.fingerprint());
    } else {
        print!("{}", a.dump());
    }
    Ok(())
}

pub fn prepare(args: &PrepareArgs) -> Result<()> {
    let layout = match args.dataset {
        DatasetArg::Wikiqa => Layout::WikiQa,
        DatasetArg::Trecqa | DatasetArg::Canonical => Layout::Canonical,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut mismatches = Vec::new();
    for (split, path, name) in [
        (Split::Train, &args.train, "train"),
        (Split::Dev, &args.dev, "dev"),
        (Split::Test, &args.test, "test"),
    ] {
        let pairs = dataio::load_split(path, layout)?;
        let stats = compute_stats(&pairs);
        println!("{name} {}", stats.summary_line());
        dataio::write_canonical_tsv(&pairs, args.out.join(format!("{name}.tsv")))?;
        rankeval::write_qrels(&pairs, args.out.join(format!("{name}.qrels")))?;
        if let (false, Some(dataset)) = (args.no_verify, args.dataset.dataset()) {
            if let Err(why) = reference_stats(dataset, split).check(&stats) {
                mismatches.push(format!("{name}: {why}"));
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(CheckFailed(format!(
            "split statistics differ from the published values: {}",
            mismatches.join("; ")
        ))
        .into());
    }
    Ok(())
}

fn load_pairs(path: &Path) -> Result<Vec<QAPair>> {
    let layout = Layout::detect(path)?;
    Ok(dataio::load_split(path, layout)?)
}

fn base_config(dataset: DatasetArg) -> RunConfig {
    dataset
        .dataset()
        .map(RunConfig::for_dataset)
        .unwrap_or_default()
}

/// Trains, streaming epoch lines to stdout and `log_path`.
fn fit_logged(
    train: Vec<QAPair>,
    dev: Vec<QAPair>,
    config: &RunConfig,
    log_path: &Path,
) -> Result<Fitted> {
    let mut log = BufWriter::new(
        File::create(log_path).with_context(|| format!("creating {}", log_path.display()))?,
    );
    let mut io_err = None;
    let fitted = fit(train, dev, config, &mut |r: &EpochRecord, _: &Model| {
        println!("{r}");
        match writeln!(log, "{r}") {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                io_err = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e).with_context(|| format!("writing {}", log_path.display()));
    }
    log.flush()
        .with_context(|| format!("writing {}", log_path.display()))?;
    Ok(fitted)
}

/// Scores `pairs`, writes `<stem>.run` and `<stem>.qrels` under `dir`.
fn score_and_write(
    model: &Model,
    idf: &csr_core::features::IdfTable,
    pairs: Vec<QAPair>,
    dir: &Path,
    stem: &str,
    tag: &str,
) -> Result<EvalReport> {
    let split = PreparedSplit::new(pairs, &model.config, &build_alphabet(), idf);
    let scored = optim::score_split(model, &split)?;
    rankeval::write_trec_run(&scored, tag, dir.join(format!("{stem}.run")))?;
    rankeval::write_qrels(&split.pairs, dir.join(format!("{stem}.qrels")))?;
    Ok(rankeval::evaluate(&scored)?)
}

fn report_line(label: &str, r: &EvalReport) -> String {
    format!(
        "{label} MAP {:.4} MRR {:.4} ({} questions, {} skipped)",
        r.map, r.mrr, r.n_evaluated, r.n_skipped
    )
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let config = args.config.resolve(base_config(args.dataset))?;
    let train = load_pairs(&args.train)?;
    let dev = load_pairs(&args.dev)?;
    let test = args.test.as_deref().map(load_pairs).transpose()?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("config.txt"), config.to_kv_text())?;

    let fitted = fit_logged(train, dev, &config, &args.out.join("train.log"))?;
    Checkpoint::new(&fitted.model, &build_alphabet(), Some(fitted.idf.clone()))
        .save(args.out.join("model.json"))?;
    println!("best epoch {}", fitted.history.best_epoch);
    if let Some(test) = test {
        let r = score_and_write(&fitted.model, &fitted.idf, test, &args.out, "test", "csr")?;
        println!("{}", report_line("test", &r));
    }
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.checkpoint, &build_alphabet())?;
    let idf = ck.idf.clone().ok_or_else(|| {
        csr_core::Error::Checkpoint(format!("{} has no IDF table", args.checkpoint.display()))
    })?;
    let pairs = load_pairs(&args.test)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let r = score_and_write(&ck.model(), &idf, pairs, &args.out, "eval", &args.tag)?;
    let line = report_line("eval", &r);
    fs::write(args.out.join("eval.txt"), format!("{line}\n"))?;
    println!("{line}");
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let config = args.config.resolve(tiny_config())?;
    let r = optim::grad_check(&config, config.seed, args.step)?;
    println!(
        "max relative error {:.3e} at {}[{}] over {} coordinates",
        r.max_rel_error, r.worst.0, r.worst.1, r.n_checked
    );
    if r.max_rel_error < args.threshold {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(CheckFailed(format!(
            "gradient check error {:.3e} is not below {:.1e}",
            r.max_rel_error, args.threshold
        ))
        .into())
    }
}

pub fn experiment(args: &ExperimentArgs) -> Result<()> {
    let config = args.config.resolve(base_config(args.dataset))?;
    if args.seeds == 0 {
        return Err(crate::UsageError("--seeds must be at least 1".into()).into());
    }
    let train = load_pairs(&args.train)?;
    let dev = load_pairs(&args.dev)?;
    let test = load_pairs(&args.test)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    fs::write(args.out.join("config.txt"), config.to_kv_text())?;

    let mut failure = None;
    let report = run_seeds(config.seed, args.seeds, |seed| {
        let mut c = config.clone();
        c.seed = seed;
        let dir = args.out.join(format!("seed-{seed}"));
        let run = || -> Result<SeedResult> {
            fs::create_dir_all(&dir)?;
            println!("seed {seed}");
            let fitted = fit_logged(train.clone(), dev.clone(), &c, &dir.join("train.log"))?;
            let r = score_and_write(
                &fitted.model,
                &fitted.idf,
                test.clone(),
                &dir,
                "test",
                &format!("csr-s{seed}"),
            )?;
            println!("{}", report_line(&format!("seed {seed} test"), &r));
            Ok(SeedResult {
                seed,
                map: r.map,
                mrr: r.mrr,
                best_epoch: fitted.history.best_epoch,
            })
        };
        run().map_err(|e| {
            let msg = format!("seed {seed}: {e:#}");
            failure = Some(e);
            csr_core::Error::Contract(msg)
        })
    });
    let report = match (report, failure) {
        (Ok(r), _) => r,
        (Err(_), Some(e)) => return Err(e),
        (Err(e), None) => return Err(e.into()),
    };
    let tsv = report.to_tsv();
    fs::write(args.out.join("report.tsv"), &tsv)?;
    print!("{tsv}");
    println!(
        "MAP {}  MRR {}  (mean ± std over {} seeds; variance {:.2e} / {:.2e})",
        report.map.table_entry(),
        report.mrr.table_entry(),
        report.runs.len(),
        report.map.variance,
        report.mrr.variance
    );
    Ok(())
}
