use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphdata::{DatasetSplit, RatingGraph, SocialGraph};
use crate::model::AblationConfig;
use crate::scalar::Scalar;
use crate::training::{train, TrainConfig};

use super::evaluate::{evaluate, EvalOptions};

/// One trained-and-tested configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub label: String,
    pub embed_dim: usize,
    pub best_epoch: usize,
    pub val_rmse: f64,
    pub test_mae: f64,
    pub test_rmse: f64,
    pub n_test: usize,
    pub config_fingerprint: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:>5} {:>6} {:>9} {:>9} {:>9}  config",
            "variant", "d", "epoch", "val_rmse", "mae", "rmse"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:>5} {:>6} {:>9.5} {:>9.5} {:>9.5}  {}",
                r.label, r.embed_dim, r.best_epoch, r.val_rmse, r.test_mae, r.test_rmse, r.config_fingerprint
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("label,embed_dim,best_epoch,val_rmse,test_mae,test_rmse,n_test,config\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.label, r.embed_dim, r.best_epoch, r.val_rmse, r.test_mae, r.test_rmse, r.n_test, r.config_fingerprint
            );
        }
        s
    }

    pub fn get(&self, label: &str) -> Option<&ExperimentRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// Trains once and reports test metrics.
pub fn run_experiment<T: Scalar>(
    label: &str,
    graph: &RatingGraph,
    social: &SocialGraph,
    split: &DatasetSplit,
    config: &TrainConfig,
    ablation: AblationConfig,
) -> Result<ExperimentRow> {
    if split.test.is_empty() {
        return Err(Error::Contract("test split is empty".into()));
    }
    let outcome = train::<T>(graph, social, split, config, ablation)?;
    let train_graph = graph.restricted_to(&split.train)?;
    let opts = EvalOptions {
        split_name: "test".into(),
        ..EvalOptions::for_training(config, ablation)
    };
    let report = evaluate(&outcome.params, &train_graph, social, &split.test, &opts)?;
    Ok(ExperimentRow {
        label: label.to_string(),
        embed_dim: config.embed_dim,
        best_epoch: outcome.best_epoch,
        val_rmse: outcome.best_val_rmse,
        test_mae: report.mae,
        test_rmse: report.rmse,
        n_test: report.n,
        config_fingerprint: report.config_fingerprint,
    })
}

/// One training run per variant, all from the same seed.
pub fn ablation_report<T: Scalar>(
    graph: &RatingGraph,
    social: &SocialGraph,
    split: &DatasetSplit,
    config: &TrainConfig,
    variants: &[AblationConfig],
) -> Result<ExperimentTable> {
    if variants.is_empty() {
        return Err(Error::Contract("ablation needs at least one variant".into()));
    }
    let rows = variants
        .iter()
        .map(|&v| run_experiment::<T>(&v.name(), graph, social, split, config, v))
        .collect::<Result<_>>()?;
    Ok(ExperimentTable { rows })
}

/// Embedding sizes tried by default.
pub const DEFAULT_SWEEP_SIZES: [usize; 6] = [8, 16, 32, 64, 128, 256];

/// One training run per embedding size, all from the same seed.
pub fn embedding_sweep<T: Scalar>(
    graph: &RatingGraph,
    social: &SocialGraph,
    split: &DatasetSplit,
    config: &TrainConfig,
    ablation: AblationConfig,
    sizes: &[usize],
) -> Result<ExperimentTable> {
    if sizes.is_empty() {
        return Err(Error::Contract("sweep needs at least one size".into()));
    }
    let rows = sizes
        .iter()
        .map(|&d| {
            let cfg = TrainConfig {
                embed_dim: d,
                ..config.clone()
            };
            run_experiment::<T>(&format!("d={d}"), graph, social, split, &cfg, ablation)
        })
        .collect::<Result<_>>()?;
    Ok(ExperimentTable { rows })
}
