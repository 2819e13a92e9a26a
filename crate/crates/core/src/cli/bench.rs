//! Scalability and separation benchmarks. Each run becomes one [`BenchRow`];
//! the CSV column set is fixed so output from several invocations can be
//! appended to one file.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{timed_fit, GeneratorArg, ModelArgs, Variant};
use crate::datagen::{SyntheticKind, SyntheticSpec, SCALE_GRID};
use crate::metrics::adjusted_rand_index;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub experiment: String,
    pub generator: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub delta: f64,
    pub variant: String,
    pub seed: u64,
    pub q: Option<usize>,
    pub r: Option<usize>,
    pub c: Option<usize>,
    /// `ok` or `skipped: <reason>`.
    pub status: String,
    pub ari: Option<f64>,
    pub time_s: Option<f64>,
    pub n_clusters: Option<usize>,
}

impl BenchRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sweep {
    N,
    P,
    Both,
}

/// Limits shared by both benchmarks. A run that would exceed them is logged
/// as skipped instead of aborting the whole benchmark.
#[derive(Debug, Clone, Args)]
pub struct BudgetArgs {
    /// Largest n * p attempted without --allow-large.
    #[arg(long, default_value_t = 10_000_000)]
    pub max_cells: usize,
    #[arg(long)]
    pub allow_large: bool,
    /// Once this many seconds have elapsed, remaining runs are skipped.
    #[arg(long)]
    pub time_budget_s: Option<f64>,
    /// Runs executed concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

impl Default for BudgetArgs {
    fn default() -> Self {
        Self {
            max_cells: 10_000_000,
            allow_large: false,
            time_budget_s: None,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Add rows to an existing file instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchScaleArgs {
    /// Values taken by the swept axis.
    #[arg(long, value_delimiter = ',', default_value = "100,347,1202")]
    pub grid: Vec<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub sweep: Sweep,
    /// Value of the axis held constant.
    #[arg(long, default_value_t = 347)]
    pub fixed: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cohirf")]
    pub variants: Vec<Variant>,
    /// Seeds per grid point.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
    /// First seed; run `i` uses `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 100.0)]
    pub delta: f64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchSepArgs {
    #[arg(long, value_delimiter = ',', default_value = "70,100,150,200")]
    pub deltas: Vec<f64>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, value_enum, default_value = "gaussians")]
    pub kind: GeneratorArg,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "cohirf")]
    pub variants: Vec<Variant>,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub budget: BudgetArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

struct Task {
    experiment: &'static str,
    spec: SyntheticSpec,
    variant: Variant,
}

fn generator_name(kind: SyntheticKind) -> &'static str {
    match kind {
        SyntheticKind::HypercubeVertices => "hypercube",
        SyntheticKind::SeparatedGaussians => "gaussians",
    }
}

fn run_task(
    task: &Task,
    model: &ModelArgs,
    budget: &BudgetArgs,
    out_of_time: &AtomicBool,
) -> anyhow::Result<BenchRow> {
    let spec = &task.spec;
    let mut row = BenchRow {
        experiment: task.experiment.to_string(),
        generator: generator_name(spec.kind).to_string(),
        n: spec.n,
        p: spec.p,
        k: spec.k,
        delta: spec.delta,
        variant: task.variant.name().to_string(),
        seed: spec.seed,
        q: None,
        r: None,
        c: None,
        status: "ok".to_string(),
        ari: None,
        time_s: None,
        n_clusters: None,
    };
    if !budget.allow_large && spec.n.saturating_mul(spec.p) > budget.max_cells {
        row.status = format!("skipped: n*p exceeds {}", budget.max_cells);
        return Ok(row);
    }
    if out_of_time.load(Ordering::Relaxed) {
        row.status = "skipped: time budget".to_string();
        return Ok(row);
    }

    let (x, truth) = spec.generate()?;
    let mut model = model.clone();
    model.variant = task.variant;
    let config = model.config(&x, spec.seed)?;
    let (fit, secs) = timed_fit(&x, &config)?;
    row.q = Some(if config.full_features {
        spec.p
    } else {
        config.q
    });
    row.r = Some(config.repetitions);
    row.c = Some(config.n_clusters);
    row.ari = Some(if spec.n >= 2 {
        adjusted_rand_index(&fit.labels, &truth)?
    } else {
        1.0
    });
    row.time_s = Some(secs);
    row.n_clusters = Some(fit.n_clusters);
    Ok(row)
}

fn run_tasks(
    tasks: &[Task],
    model: &ModelArgs,
    budget: &BudgetArgs,
) -> anyhow::Result<Vec<BenchRow>> {
    let start = Instant::now();
    let out_of_time = AtomicBool::new(false);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(budget.jobs.max(1))
        .build()
        .context("starting worker threads")?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|task| {
                let row = run_task(task, model, budget, &out_of_time);
                if budget
                    .time_budget_s
                    .is_some_and(|b| start.elapsed().as_secs_f64() > b)
                {
                    out_of_time.store(true, Ordering::Relaxed);
                }
                row
            })
            .collect()
    })
}

/// Hypercube timing runs over the requested grid, one row per
/// (grid point, variant, seed).
pub fn bench_scale(args: &BenchScaleArgs) -> anyhow::Result<Vec<BenchRow>> {
    if let Some(v) = args.grid.iter().find(|v| !SCALE_GRID.contains(v)) {
        bail!("grid value {v} is not one of {SCALE_GRID:?}");
    }
    let mut points = Vec::new();
    if matches!(args.sweep, Sweep::N | Sweep::Both) {
        points.extend(args.grid.iter().map(|&n| (n, args.fixed)));
    }
    if matches!(args.sweep, Sweep::P | Sweep::Both) {
        points.extend(args.grid.iter().map(|&p| (args.fixed, p)));
    }
    let mut tasks = Vec::new();
    for &(n, p) in &points {
        for &variant in &args.variants {
            for s in 0..args.seeds as u64 {
                tasks.push(Task {
                    experiment: "scale",
                    spec: SyntheticSpec::new(
                        SyntheticKind::HypercubeVertices,
                        n,
                        p,
                        args.k,
                        args.delta,
                        args.seed + s,
                    ),
                    variant,
                });
            }
        }
    }
    run_tasks(&tasks, &args.model, &args.budget)
}

/// One row per (delta, variant, seed).
pub fn bench_separation(args: &BenchSepArgs) -> anyhow::Result<Vec<BenchRow>> {
    let mut tasks = Vec::new();
    for &delta in &args.deltas {
        for &variant in &args.variants {
            for s in 0..args.seeds as u64 {
                tasks.push(Task {
                    experiment: "separation",
                    spec: SyntheticSpec::new(
                        args.kind.into(),
                        args.n,
                        args.p,
                        args.k,
                        delta,
                        args.seed + s,
                    ),
                    variant,
                });
            }
        }
    }
    run_tasks(&tasks, &args.model, &args.budget)
}

/// Writes `rows` as CSV. With `append`, an existing non-empty file keeps its
/// header and only gains rows.
pub fn write_rows(rows: &[BenchRow], output: &OutputArgs) -> anyhow::Result<()> {
    let (sink, header): (Box<dyn Write>, bool) = match &output.out {
        None => (Box::new(std::io::stdout().lock()), true),
        Some(path) => {
            let existing = output.append && path.metadata().map(|m| m.len() > 0).unwrap_or(false);
            let file = OpenOptions::new()
                .create(true)
                .write(true)
                .append(output.append)
                .truncate(!output.append)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            (Box::new(file), !existing)
        }
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(header)
        .from_writer(sink);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_bench_scale(args: &BenchScaleArgs) -> anyhow::Result<Vec<BenchRow>> {
    let rows = bench_scale(args)?;
    write_rows(&rows, &args.output)?;
    Ok(rows)
}

pub fn cmd_bench_separation(args: &BenchSepArgs) -> anyhow::Result<Vec<BenchRow>> {
    let rows = bench_separation(args)?;
    write_rows(&rows, &args.output)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Scale {
        #[command(flatten)]
        args: BenchScaleArgs,
    }

    #[derive(Parser)]
    struct Sep {
        #[command(flatten)]
        args: BenchSepArgs,
    }

    #[test]
    fn scale_grid_product() {
        let mut args =
            Scale::parse_from(["x", "--grid", "100,347", "--fixed", "100", "--q", "10"]).args;
        args.variants = vec![Variant::Cohirf, Variant::CohirfFull];
        let rows = bench_scale(&args).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(BenchRow::is_ok));
        assert_eq!(rows.iter().filter(|r| r.variant == "cohirf").count(), 4);
    }

    #[test]
    fn large_points_are_skipped() {
        let args =
            Scale::parse_from(["x", "--grid", "50000", "--sweep", "p", "--fixed", "1000"]).args;
        let rows = bench_scale(&args).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].status.starts_with("skipped"));
        assert_eq!(rows[0].ari, None);
    }

    #[test]
    fn off_grid_values_are_rejected() {
        let args = Scale::parse_from(["x", "--grid", "123"]).args;
        assert!(bench_scale(&args).is_err());
    }

    #[test]
    fn separation_rows_and_append() {
        let args = Sep::parse_from([
            "x", "--deltas", "70,200", "--n", "60", "--p", "40", "--seeds", "1", "--q", "10",
        ])
        .args;
        let rows = bench_separation(&args).unwrap();
        assert_eq!(rows.len(), 2);

        let dir = tempfile::tempdir().unwrap();
        let out = OutputArgs {
            out: Some(dir.path().join("sep.csv")),
            append: true,
        };
        write_rows(&rows, &out).unwrap();
        write_rows(&rows, &out).unwrap();
        let text = std::fs::read_to_string(dir.path().join("sep.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert!(lines[0].starts_with("experiment,generator,n,p,k,delta,variant,seed"));
        assert_eq!(
            lines.iter().filter(|l| l.starts_with("experiment")).count(),
            1
        );
    }
}
