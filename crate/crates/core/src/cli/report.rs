use serde::{Deserialize, Serialize};

use super::{scores, DatasetDescriptor, Variant};
use crate::engine::{CohirfConfig, CohirfResult};

/// Summary of one fit, written as `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub config: CohirfConfig,
    pub dataset: DatasetDescriptor,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ari: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ri: Option<f64>,
    pub n_clusters: usize,
    pub per_step_counts: Vec<usize>,
    pub steps_run: usize,
    pub converged: bool,
    /// Wall-clock seconds spent inside the fit call.
    pub fit_time_s: f64,
    pub seed: u64,
}

impl RunReport {
    pub fn new(
        config: &CohirfConfig,
        variant: Variant,
        dataset: DatasetDescriptor,
        truth: Option<&[usize]>,
        fit: &CohirfResult,
        fit_time_s: f64,
    ) -> crate::Result<Self> {
        let (ari, ri) = scores(&fit.labels, truth)?;
        Ok(Self {
            variant,
            config: config.clone(),
            dataset,
            ari,
            ri,
            n_clusters: fit.n_clusters,
            per_step_counts: fit.per_step_counts.clone(),
            steps_run: fit.steps_run,
            converged: fit.converged,
            fit_time_s: fit_time_s.max(0.0),
            seed: config.seed,
        })
    }

    pub fn summary_line(&self) -> String {
        let ari = self
            .ari
            .map_or_else(|| "n/a".to_string(), |a| format!("{a:.4}"));
        format!(
            "{}: {} clusters after {} steps, ARI {ari}, {:.3}s",
            self.variant.name(),
            self.n_clusters,
            self.steps_run,
            self.fit_time_s
        )
    }
}
