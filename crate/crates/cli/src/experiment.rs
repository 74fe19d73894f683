//! Repeated, paired-seed runs of one experiment config.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use dib_core::boosting::{
    beta, clamp_pseudo_loss, init_distribution, pseudo_loss, run_adaboost_m2_observed, weighted_vote, BoostOutcome,
    BoostRound, Ensemble, Hypothesis, RoundEvent, RunError,
};
use dib_core::dib::run_dib_observed;
use dib_core::nn::{argmax_rows, train, Network, TrainConfig};
use log::{info, warn};
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Method, Splits};
use crate::metrics::{
    metrics_path, read_record, run_stem, FinalLine, MetricsLine, MetricsRecord, MetricsWriter, RoundLine,
};
use crate::model_io::save_model;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Repetitions trained concurrently.
    pub workers: usize,
    /// Forces `train.deterministic`.
    pub deterministic: bool,
    /// Reuse finished runs whose recorded config matches.
    pub resume: bool,
    pub save_models: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunOptions { out: out.into(), workers: 1, deterministic: false, resume: true, save_models: true }
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    /// Some runs failed; their completed rounds are on disk.
    #[error("{} of {total} runs failed: {}", failed.len(), failed.iter().map(|(r, e)| format!("run {r}: {e}")).collect::<Vec<_>>().join("; "))]
    Runs { total: usize, failed: Vec<(usize, String)>, records: Vec<MetricsRecord> },
}

/// Seed of repetition `run`; AdaBoost.M2 and DIB runs with the same index
/// start from identical round-0 weights.
pub fn run_seed(base: u64, run: usize) -> u64 {
    base.wrapping_add(run as u64)
}

pub fn model_path(dir: &Path, method: Method, run: usize) -> PathBuf {
    dir.join(format!("{}.model", run_stem(method, run)))
}

/// Runs every repetition of `cfg`, writing `<method>-runNNN.jsonl` (and a
/// `.model` file) per run into `opts.out`. Config and data problems are
/// reported before any training starts.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<MetricsRecord>, ExperimentError> {
    let mut cfg = cfg.clone();
    if opts.deterministic {
        cfg.train.deterministic = true;
    }
    cfg.validate()?;
    let data = cfg.load_data()?;
    info!(
        "{}: {} train / {} valid / {} test examples, {} runs",
        cfg.method,
        data.train.len(),
        data.valid.len(),
        data.test.len(),
        cfg.repetitions
    );
    std::fs::create_dir_all(&opts.out)
        .map_err(|source| ExperimentError::Io { path: opts.out.display().to_string(), source })?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<MetricsRecord, String>)>> = Mutex::new(Vec::new());
    let workers = opts.workers.clamp(1, cfg.repetitions);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let run = next.fetch_add(1, Ordering::SeqCst);
                if run >= cfg.repetitions {
                    break;
                }
                let outcome = run_one(&cfg, &data, run, opts);
                if let Err(e) = &outcome {
                    warn!("{} run {run} failed: {e}", cfg.method);
                }
                results.lock().unwrap().push((run, outcome));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(r, _)| *r);
    let mut records = Vec::new();
    let mut failed = Vec::new();
    for (run, outcome) in results {
        match outcome {
            Ok(rec) => records.push(rec),
            Err(e) => failed.push((run, e)),
        }
    }
    if failed.is_empty() {
        Ok(records)
    } else {
        Err(ExperimentError::Runs { total: cfg.repetitions, failed, records })
    }
}

fn finished_record(path: &Path, cfg: &ExperimentConfig, run: usize) -> Option<MetricsRecord> {
    let rec = read_record(path).ok()??;
    (rec.is_complete() && rec.run == run && rec.config == *cfg).then_some(rec)
}

fn round_line(run: usize, event: &RoundEvent<'_>) -> RoundLine {
    let r = event.record;
    RoundLine {
        run,
        round: event.round,
        pseudo_loss: r.pseudo_loss,
        raw_pseudo_loss: r.raw_pseudo_loss,
        beta: r.beta,
        alpha: r.alpha,
        resample_seed: r.resample_seed,
        epochs: r.epochs,
        best_epoch: r.train_report.best_epoch,
        layers: r.member.spec().layers.len(),
        valid_errors: r.train_report.valid_errors.clone(),
        jaccard: event.overlap.map(|p| p.jaccard),
        wall_time_secs: r.train_report.wall_time_secs,
    }
}

fn run_one(cfg: &ExperimentConfig, data: &Splits, run: usize, opts: &RunOptions) -> Result<MetricsRecord, String> {
    let provenance = cfg.provenance();
    let path = metrics_path(&opts.out, cfg.method, run);
    if opts.resume {
        if let Some(rec) = finished_record(&path, &provenance, run) {
            info!("{} run {run}: reusing {}", cfg.method, path.display());
            return Ok(rec);
        }
    }
    let seed = run_seed(cfg.seed, run);
    let io = |e: std::io::Error| format!("{}: {e}", path.display());
    let mut writer = MetricsWriter::create(&path).map_err(io)?;
    writer
        .append(&MetricsLine::Config { run, seed, method: cfg.method, config: Box::new(provenance.clone()) })
        .map_err(io)?;

    let mut lines = Vec::new();
    let mut write_error = None;
    let mut observer = |event: &RoundEvent<'_>| {
        let line = round_line(run, event);
        if let Err(e) = writer.append(&MetricsLine::Round(line.clone())) {
            write_error.get_or_insert(e);
        }
        lines.push(line);
    };
    let outcome = match cfg.method {
        Method::Single => run_single(cfg, data, seed, &mut observer),
        Method::AdaboostM2 => {
            let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
            run_adaboost_m2_observed(
                &data.train,
                &data.valid,
                &cfg.network,
                &train_cfg,
                cfg.boosting.rounds,
                &mut observer,
            )
        }
        Method::Dib => {
            let dib = cfg.dib_config(seed).ok_or("method dib needs a [dib] section")?;
            run_dib_observed(&data.train, &data.valid, &cfg.network, &dib, &mut observer)
        }
    };
    if let Some(e) = write_error {
        return Err(io(e));
    }
    let config_value = serde_json::to_value(&provenance).expect("config serializes");
    let outcome = match outcome {
        Ok(o) => o,
        Err(err) => return Err(record_failure(&mut writer, err, run, cfg.method, opts, &config_value)),
    };

    let ensemble = &outcome.ensemble;
    let member_scores: Vec<Vec<f64>> = ensemble
        .rounds()
        .iter()
        .map(|r| r.member.class_scores(&data.test))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let classes = ensemble.classes();
    let error_of = |predicted: &[usize]| {
        predicted.iter().zip(data.test.labels()).filter(|(p, l)| p != l).count() as f64 / data.test.len() as f64
    };
    let member_test_errors = member_scores.iter().map(|s| error_of(&argmax_rows(s, classes))).collect();
    let test_error = error_of(&weighted_vote(&member_scores, &ensemble.vote_weights(), classes));
    let result = FinalLine {
        run,
        test_error,
        member_test_errors,
        rounds: ensemble.len(),
        total_epochs: lines.iter().map(|l| l.epochs).sum(),
        final_best_epoch: lines.last().map_or(0, |l| l.best_epoch),
        jaccard: outcome.overlap.pairs.iter().map(|p| p.jaccard).collect(),
        total_wall_time_secs: lines.iter().map(|l| l.wall_time_secs).sum(),
    };
    info!("{} run {run}: test error {:.4}", cfg.method, test_error);
    if opts.save_models {
        save_model(&model_path(&opts.out, cfg.method, run), ensemble, &config_value).map_err(|e| e.to_string())?;
    }
    writer.append(&MetricsLine::Final(result.clone())).map_err(io)?;
    Ok(MetricsRecord {
        run,
        seed,
        method: cfg.method,
        config: provenance,
        rounds: lines,
        result: Some(result),
        failure: None,
    })
}

/// Records a failed run: the failure line, and the completed rounds as a
/// partial model.
fn record_failure(
    writer: &mut MetricsWriter,
    err: RunError,
    run: usize,
    method: Method,
    opts: &RunOptions,
    config: &Value,
) -> String {
    let message = err.to_string();
    if let Err(e) = writer.append(&MetricsLine::Failed { run, round: err.round, error: message.clone() }) {
        warn!("could not record failure of run {run}: {e}");
    }
    if opts.save_models && !err.completed.is_empty() {
        let partial = opts.out.join(format!("{}.partial-model", run_stem(method, run)));
        match Ensemble::new(err.completed) {
            Ok(ens) => {
                if let Err(e) = save_model(&partial, &ens, config) {
                    warn!("could not save partial model: {e}");
                }
            }
            Err(e) => warn!("could not assemble partial model: {e}"),
        }
    }
    message
}

/// One network trained on the whole training set for `train.epochs`,
/// recorded as a one-round ensemble: its pseudo-loss is measured under the
/// uniform distribution, so the vote weight is well defined.
fn run_single(
    cfg: &ExperimentConfig,
    data: &Splits,
    seed: u64,
    observer: &mut dyn FnMut(&RoundEvent<'_>),
) -> Result<BoostOutcome, RunError> {
    let fail = |e: dib_core::Error| RunError { round: 0, completed: vec![], overlap: Default::default(), source: e };
    let dist = init_distribution(data.train.len()).map_err(|e| fail(e.into()))?;
    let start: Network = Network::build(cfg.network.clone(), seed).map_err(|e| fail(e.into()))?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let (member, report) = train(&start, &data.train, &data.valid, &train_cfg).map_err(|e| fail(e.into()))?;
    let raw = pseudo_loss(&member, &data.train, &dist).map_err(fail)?;
    let eps = clamp_pseudo_loss(raw);
    let b = beta(eps);
    let record = BoostRound {
        member,
        pseudo_loss: eps,
        raw_pseudo_loss: raw,
        beta: b,
        alpha: 1.0 / b,
        resample_seed: seed,
        epochs: cfg.train.epochs,
        train_report: report,
    };
    let ids = data.train.ids().to_vec();
    observer(&RoundEvent { round: 0, record: &record, distribution: &dist, resample_ids: &ids, overlap: None });
    let ensemble = Ensemble::new(vec![record]).map_err(|e| fail(e.into()))?;
    Ok(BoostOutcome { ensemble, distributions: vec![dist], resamples: vec![ids], overlap: Default::default() })
}
