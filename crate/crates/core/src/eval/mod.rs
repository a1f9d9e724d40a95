//! Metrics, split evaluation, experiment tables and a synthetic data
//! generator with controllable social homophily.

mod evaluate;
mod experiments;
mod metrics;
mod synth;

pub use evaluate::{evaluate, predict_pairs, EvalOptions};
pub use experiments::{
    ablation_report, embedding_sweep, run_experiment, ExperimentRow, ExperimentTable, DEFAULT_SWEEP_SIZES,
};
pub use metrics::{mae, rmse, MetricsReport};
pub use synth::{synth_generate, synth_generate_with, SynthConfig, SyntheticData};
