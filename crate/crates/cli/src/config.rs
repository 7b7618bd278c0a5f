//! Run configuration: flags override the config file, which overrides the
//! preset, which overrides the built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use rid_core::dgp::DgpId;
use rid_core::importance::MrStrategy;
use rid_core::rid::{MetricId, RunConfig};
use rid_core::Seed;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file (keys as the long flags, with underscores).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tuned parameters for a process: monk1, monk3, chen or friedman.
    #[arg(long)]
    pub preset: Option<DgpId>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub bootstraps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Importance metric (sub_mr).
    #[arg(long)]
    pub metric: Option<MetricId>,
    /// e_divide or perm:K.
    #[arg(long)]
    pub strategy: Option<MrStrategy>,
    #[arg(long)]
    pub max_models: Option<usize>,
    #[arg(long)]
    pub max_thresholds: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    epsilon: Option<f64>,
    lambda: Option<f64>,
    depth: Option<usize>,
    bootstraps: Option<usize>,
    seed: Option<u64>,
    metric: Option<MetricId>,
    strategy: Option<MrStrategy>,
    max_models: Option<usize>,
    max_thresholds: Option<usize>,
}

fn overlay(cfg: &mut RunConfig, layer: &ConfigFile) {
    macro_rules! take {
        ($($field:ident),*) => {
            $(if let Some(v) = layer.$field { cfg.$field = v; })*
        };
    }
    take!(epsilon, lambda, depth, bootstraps, metric, strategy, max_models, max_thresholds);
    if let Some(s) = layer.seed {
        cfg.seed = Seed(s);
    }
}

fn read_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = self.preset.map(RunConfig::preset).unwrap_or_default();
        if let Some(path) = &self.config {
            overlay(&mut cfg, &read_file(path)?);
        }
        overlay(
            &mut cfg,
            &ConfigFile {
                epsilon: self.epsilon,
                lambda: self.lambda,
                depth: self.depth,
                bootstraps: self.bootstraps,
                seed: self.seed,
                metric: self.metric,
                strategy: self.strategy,
                max_models: self.max_models,
                max_thresholds: self.max_thresholds,
            },
        );
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}
