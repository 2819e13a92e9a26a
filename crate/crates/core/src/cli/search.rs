//! Uniform random search over `q`, `R` and `C`, scored by ARI.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    labels_csv, scores, timed_fit, write_artifacts, DataArgs, Dataset, ModelArgs, RunReport,
};
use crate::engine::CohirfConfig;
use crate::seed::{stream, Purpose};
use crate::DataMatrix;

/// Trial budget used when none is given.
pub const DEFAULT_TRIALS: usize = 100;

/// Inclusive search box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub q: (usize, usize),
    pub repetitions: (usize, usize),
    pub clusters: (usize, usize),
}

impl SearchSpace {
    /// `q` in `[2, min(30, p - 1)]`, `R` and `C` in `[2, 10]`.
    pub fn for_features(p: usize) -> Self {
        Self {
            q: (2, CohirfConfig::default_q(p)),
            repetitions: (2, 10),
            clusters: (2, 10),
        }
    }

    pub fn contains(&self, q: usize, r: usize, c: usize) -> bool {
        (self.q.0..=self.q.1).contains(&q)
            && (self.repetitions.0..=self.repetitions.1).contains(&r)
            && (self.clusters.0..=self.clusters.1).contains(&c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub q: usize,
    pub r: usize,
    pub c: usize,
    pub seed: u64,
    pub ari: f64,
    pub ri: f64,
    pub n_clusters: usize,
    pub steps_run: usize,
    pub time_s: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub trials: Vec<TrialRecord>,
    /// Index into `trials` of the first trial with the highest ARI.
    pub best: usize,
    pub best_config: CohirfConfig,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> &TrialRecord {
        &self.trials[self.best]
    }

    pub fn summary_line(&self) -> String {
        let b = self.best_trial();
        format!(
            "best of {} trials: ARI {:.4} with q={} R={} C={} ({} clusters)",
            self.trials.len(),
            b.ari,
            b.q,
            b.r,
            b.c,
            b.n_clusters
        )
    }
}

/// Draws trial `t`'s configuration from the master seed alone, so the
/// sequence of trials does not depend on how they are scheduled.
pub fn trial_config(
    base: &CohirfConfig,
    space: &SearchSpace,
    master: u64,
    trial: usize,
) -> CohirfConfig {
    let mut rng = stream(master, Purpose::Trial, trial as u64, 0);
    let mut config = base.clone();
    config.q = rng.random_range(space.q.0..=space.q.1);
    config.repetitions = rng.random_range(space.repetitions.0..=space.repetitions.1);
    config.n_clusters = rng.random_range(space.clusters.0..=space.clusters.1);
    config.seed = rng.random();
    config
}

/// Runs `n_trials` fits on `x` and scores each against `truth`. The `base`
/// configuration supplies everything except `q`, `R`, `C` and the seed.
pub fn random_search(
    x: &DataMatrix,
    truth: &[usize],
    base: &CohirfConfig,
    n_trials: usize,
    master_seed: u64,
) -> crate::Result<SearchOutcome> {
    if n_trials == 0 {
        return Err(crate::Error::InvalidArgument(
            "at least one trial is required".into(),
        ));
    }
    let space = SearchSpace::for_features(x.ncols());
    let trials: Vec<TrialRecord> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let config = trial_config(base, &space, master_seed, t);
            let (fit, time_s) = timed_fit(x, &config)?;
            let (ari, ri) = scores(&fit.labels, Some(truth))?;
            Ok(TrialRecord {
                trial: t,
                q: config.q,
                r: config.repetitions,
                c: config.n_clusters,
                seed: config.seed,
                ari: ari.unwrap_or(0.0),
                ri: ri.unwrap_or(0.0),
                n_clusters: fit.n_clusters,
                steps_run: fit.steps_run,
                time_s,
            })
        })
        .collect::<crate::Result<_>>()?;

    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.ari > trials[best].ari {
            best = i;
        }
    }
    Ok(SearchOutcome {
        best_config: trial_config(base, &space, master_seed, best),
        trials,
        best,
    })
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Variant and fixed settings; q, R and C are searched.
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trials run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Directory receiving trials.csv, best_labels.csv and best_report.json.
    #[arg(long, default_value = "cohirf-search")]
    pub out_dir: PathBuf,
}

pub fn run_search_on(
    data: &Dataset,
    args: &SearchArgs,
) -> anyhow::Result<(SearchOutcome, RunReport, Vec<usize>)> {
    let Some(truth) = data.truth.as_deref() else {
        bail!("search needs ground-truth labels; pass --label-column or use --synthetic");
    };
    let base = args.model.config(&data.x, args.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.max(1))
        .build()
        .context("starting worker threads")?;
    let outcome = pool.install(|| random_search(&data.x, truth, &base, args.trials, args.seed))?;

    let (fit, seconds) = timed_fit(&data.x, &outcome.best_config)?;
    let report = RunReport::new(
        &outcome.best_config,
        args.model.variant,
        data.descriptor.clone(),
        Some(truth),
        &fit,
        seconds,
    )?;
    Ok((outcome, report, fit.labels))
}

pub fn cmd_search(args: &SearchArgs) -> anyhow::Result<SearchOutcome> {
    let data = args.data.load(args.seed)?;
    let (outcome, report, labels) = run_search_on(&data, args)?;

    let mut log = csv::Writer::from_writer(Vec::new());
    for t in &outcome.trials {
        log.serialize(t)?;
    }
    let log = log.into_inner().context("flushing trial log")?;
    write_artifacts(
        &args.out_dir,
        &[
            ("trials.csv", log),
            ("best_labels.csv", labels_csv(&labels)),
            ("best_report.json", serde_json::to_vec_pretty(&report)?),
        ],
    )?;
    Ok(outcome)
}
