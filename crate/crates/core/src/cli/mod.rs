//! Command-line front end.
//!
//! The commands are thin wrappers over library calls so they can be driven
//! from tests without spawning a process: [`search::random_search`],
//! [`bench::bench_scale`] and [`bench::bench_separation`] return plain data,
//! and the `cmd_*` functions only add file output.

pub mod bench;
pub mod report;
pub mod search;

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::datagen::{SyntheticKind, SyntheticSpec};
use crate::engine::{
    cohirf_fit, CohirfConfig, CohirfResult, DEFAULT_BATCH_SIZE, DEFAULT_MAX_STEPS,
};
use crate::io::{self, export_hierarchy, DatasetSchema, HierarchyFormat};
use crate::kmeans::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::medoid::{median_heuristic_gamma, MedoidMode, DEFAULT_CAP};
use crate::metrics::{adjusted_rand_index, rand_index};
use crate::{DataMatrix, Partition};

pub use report::RunReport;
pub use search::SearchArgs;

#[derive(Debug, Parser)]
#[command(
    name = "cohirf",
    version,
    about = "Consensus hierarchical random-feature clustering"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit once and write labels, hierarchy and a run report.
    Fit(FitArgs),
    /// Random search over q, R and C, maximizing ARI against known labels.
    Search(SearchArgs),
    /// Time fits on hypercube data over a grid of sample and feature counts.
    BenchScale(bench::BenchScaleArgs),
    /// Sweep the distance between cluster centers.
    BenchSep(bench::BenchSepArgs),
    /// Write a synthetic dataset to CSV.
    Generate(GenerateArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&args).map(|report| {
            println!("{}", report.summary_line());
        }),
        Command::Search(args) => search::cmd_search(&args).map(|outcome| {
            println!("{}", outcome.summary_line());
        }),
        Command::BenchScale(args) => bench::cmd_bench_scale(&args).map(|_| ()),
        Command::BenchSep(args) => bench::cmd_bench_separation(&args).map(|_| ()),
        Command::Generate(args) => cmd_generate(&args),
    }
}

/// Named presets for the published model variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Exact inner-product medoid on random feature subsets.
    Cohirf,
    /// Medoid computed on at most 1000 members per group.
    #[value(name = "cohirf-1000")]
    #[serde(rename = "cohirf-1000")]
    Cohirf1000,
    /// Only 1024 representatives take part in each step.
    CohirfSampled,
    /// RBF-kernel medoid.
    CohirfRbf,
    /// No feature subsampling.
    CohirfFull,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Cohirf => "cohirf",
            Variant::Cohirf1000 => "cohirf-1000",
            Variant::CohirfSampled => "cohirf-sampled",
            Variant::CohirfRbf => "cohirf-rbf",
            Variant::CohirfFull => "cohirf-full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MedoidArg {
    AbsInner,
    AbsInnerMax,
    Capped,
    Rbf,
    Centroid,
}

/// RBF bandwidth: `auto` is `1 / p`, `median` the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaArg {
    Auto,
    Median,
    Value(f64),
}

impl FromStr for GammaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "auto" => Ok(GammaArg::Auto),
            "median" => Ok(GammaArg::Median),
            v => v
                .parse::<f64>()
                .ok()
                .filter(|g| *g > 0.0 && g.is_finite())
                .map(GammaArg::Value)
                .ok_or_else(|| {
                    format!("gamma must be 'auto', 'median' or a positive number, got {v:?}")
                }),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Features per repetition [default: min(30, p - 1)].
    #[arg(long)]
    pub q: Option<usize>,
    /// Repetitions per step.
    #[arg(long = "r", default_value_t = 4)]
    pub repetitions: usize,
    /// Clusters per inner K-Means run.
    #[arg(long = "c", default_value_t = 3)]
    pub clusters: usize,
    #[arg(long, value_enum, default_value = "cohirf")]
    pub variant: Variant,
    /// Override the variant's medoid rule.
    #[arg(long, value_enum)]
    pub medoid: Option<MedoidArg>,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: usize,
    #[arg(long, default_value = "auto")]
    pub gamma: GammaArg,
    /// Override the variant's batch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub full_features: bool,
    /// Count each member's own term in the medoid objective.
    #[arg(long)]
    pub include_self: bool,
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    pub max_steps: usize,
}

impl Default for ModelArgs {
    fn default() -> Self {
        Self {
            q: None,
            repetitions: 4,
            clusters: 3,
            variant: Variant::Cohirf,
            medoid: None,
            cap: DEFAULT_CAP,
            gamma: GammaArg::Auto,
            batch_size: None,
            full_features: false,
            include_self: false,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl ModelArgs {
    /// Resolves the flags against the data into a full configuration.
    pub fn config(&self, x: &DataMatrix, seed: u64) -> anyhow::Result<CohirfConfig> {
        let p = x.ncols();
        let q = self.q.unwrap_or_else(|| CohirfConfig::default_q(p));
        let mut config = CohirfConfig::new(q, self.repetitions, self.clusters).with_seed(seed);
        config.kmeans_max_iter = self.max_iter;
        config.kmeans_tol = self.tol;
        config.max_steps = self.max_steps;
        config.medoid_include_self = self.include_self;

        let medoid = self.medoid.unwrap_or(match self.variant {
            Variant::Cohirf | Variant::CohirfSampled | Variant::CohirfFull => MedoidArg::AbsInner,
            Variant::Cohirf1000 => MedoidArg::Capped,
            Variant::CohirfRbf => MedoidArg::Rbf,
        });
        config.medoid = match medoid {
            MedoidArg::AbsInner => MedoidMode::AbsInnerArgmin,
            MedoidArg::AbsInnerMax => MedoidMode::AbsInnerArgmax,
            MedoidArg::Capped => MedoidMode::AbsInnerArgminCapped { cap: self.cap },
            MedoidArg::Centroid => MedoidMode::Centroid,
            MedoidArg::Rbf => MedoidMode::RbfArgmax {
                gamma: match self.gamma {
                    GammaArg::Auto => 1.0 / p as f64,
                    GammaArg::Median => median_heuristic_gamma(x.view(), 1000),
                    GammaArg::Value(g) => g,
                },
            },
        };
        config.batch_size = self
            .batch_size
            .or((self.variant == Variant::CohirfSampled).then_some(DEFAULT_BATCH_SIZE));
        config.full_features = self.full_features || self.variant == Variant::CohirfFull || p < 2;
        config.validate(p)?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorArg {
    Hypercube,
    Gaussians,
}

impl From<GeneratorArg> for SyntheticKind {
    fn from(g: GeneratorArg) -> Self {
        match g {
            GeneratorArg::Hypercube => SyntheticKind::HypercubeVertices,
            GeneratorArg::Gaussians => SyntheticKind::SeparatedGaussians,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long, conflicts_with = "synthetic")]
    pub csv: Option<PathBuf>,
    /// JSON file listing column kinds.
    #[arg(long, requires = "csv")]
    pub schema: Option<PathBuf>,
    /// Column holding ground-truth labels.
    #[arg(long, requires = "csv")]
    pub label_column: Option<String>,
    /// Keep continuous columns as read.
    #[arg(long)]
    pub no_standardize: bool,
    /// Generate data instead of reading a file.
    #[arg(long, value_enum)]
    pub synthetic: Option<GeneratorArg>,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 100.0)]
    pub delta: f64,
    /// Generator seed [default: the run seed].
    #[arg(long)]
    pub data_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetDescriptor {
    Csv {
        path: String,
        n: usize,
        p: usize,
        standardized: bool,
    },
    Synthetic(SyntheticSpec),
}

pub struct Dataset {
    pub x: DataMatrix,
    pub truth: Option<Partition>,
    pub descriptor: DatasetDescriptor,
}

impl DataArgs {
    pub fn load(&self, seed: u64) -> anyhow::Result<Dataset> {
        match (&self.csv, self.synthetic) {
            (Some(path), _) => {
                let mut schema = match &self.schema {
                    Some(s) => DatasetSchema::from_json_file(s)
                        .with_context(|| format!("reading schema {}", s.display()))?,
                    None => DatasetSchema::default(),
                };
                if let Some(label) = &self.label_column {
                    schema = schema.with_label(label);
                }
                let mut ds = io::load_csv(path, &schema)
                    .with_context(|| format!("loading {}", path.display()))?;
                if !self.no_standardize {
                    ds.standardize();
                }
                let (n, p) = ds.data.dim();
                Ok(Dataset {
                    x: ds.data,
                    truth: ds.labels,
                    descriptor: DatasetDescriptor::Csv {
                        path: path.display().to_string(),
                        n,
                        p,
                        standardized: !self.no_standardize,
                    },
                })
            }
            (None, Some(generator)) => {
                let spec = SyntheticSpec::new(
                    generator.into(),
                    self.n,
                    self.p,
                    self.k,
                    self.delta,
                    self.data_seed.unwrap_or(seed),
                );
                let (x, truth) = spec.generate()?;
                Ok(Dataset {
                    x,
                    truth: Some(truth),
                    descriptor: DatasetDescriptor::Synthetic(spec),
                })
            }
            (None, None) => bail!("either --csv or --synthetic is required"),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving labels.csv, report.json, hierarchy.dot and
    /// hierarchy.json.
    #[arg(long, default_value = "cohirf-out")]
    pub out_dir: PathBuf,
}

/// Fits `config` on `x`, timing only the fit itself.
pub fn timed_fit(x: &DataMatrix, config: &CohirfConfig) -> crate::Result<(CohirfResult, f64)> {
    let start = Instant::now();
    let fit = cohirf_fit(x.view(), config)?;
    Ok((fit, start.elapsed().as_secs_f64()))
}

/// ARI and RI against `truth`, when there is a truth and at least two samples.
pub fn scores(
    labels: &[usize],
    truth: Option<&[usize]>,
) -> crate::Result<(Option<f64>, Option<f64>)> {
    match truth {
        Some(t) if t.len() >= 2 => Ok((
            Some(adjusted_rand_index(labels, t)?),
            Some(rand_index(labels, t)?),
        )),
        _ => Ok((None, None)),
    }
}

/// Writes every artifact next to each other, or none of them: files are
/// staged under temporary names and renamed only once all of them exist.
pub(crate) fn write_artifacts(dir: &Path, files: &[(&str, Vec<u8>)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let staged: Vec<(PathBuf, PathBuf)> = files
        .iter()
        .map(|(name, _)| (dir.join(format!(".{name}.tmp")), dir.join(name)))
        .collect();
    let written = files
        .iter()
        .zip(&staged)
        .try_for_each(|((_, bytes), (tmp, _))| {
            fs::write(tmp, bytes).with_context(|| format!("writing {}", tmp.display()))
        });
    if let Err(e) = written {
        for (tmp, _) in &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e);
    }
    for (tmp, dest) in &staged {
        fs::rename(tmp, dest).with_context(|| format!("moving {} into place", dest.display()))?;
    }
    Ok(())
}

pub(crate) fn labels_csv(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::new();
    io::write_labels_csv(&mut out, labels).expect("in-memory write");
    out
}

pub fn cmd_fit(args: &FitArgs) -> anyhow::Result<RunReport> {
    let data = args.data.load(args.seed)?;
    let config = args.model.config(&data.x, args.seed)?;
    let (fit, seconds) = timed_fit(&data.x, &config)?;
    let report = RunReport::new(
        &config,
        args.model.variant,
        data.descriptor,
        data.truth.as_deref(),
        &fit,
        seconds,
    )?;

    write_artifacts(
        &args.out_dir,
        &[
            ("labels.csv", labels_csv(&fit.labels)),
            (
                "hierarchy.dot",
                export_hierarchy(&fit.hierarchy, HierarchyFormat::Dot),
            ),
            (
                "hierarchy.json",
                export_hierarchy(&fit.hierarchy, HierarchyFormat::Json),
            ),
            ("report.json", serde_json::to_vec_pretty(&report)?),
        ],
    )?;
    Ok(report)
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "hypercube")]
    pub kind: GeneratorArg,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 100.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; the last column holds the true label.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec::new(
        args.kind.into(),
        args.n,
        args.p,
        args.k,
        args.delta,
        args.seed,
    );
    let (x, labels) = spec.generate()?;
    let mut buf = Vec::new();
    io::write_dataset_csv(&mut buf, x.view(), Some(&labels))?;
    let dir = args
        .out
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = args
        .out
        .file_name()
        .and_then(|n| n.to_str())
        .context("output path needs a file name")?;
    write_artifacts(dir, &[(name, buf)])
}
