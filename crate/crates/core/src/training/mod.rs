//! Optimization: configuration, loss, RMSprop, early stopping and the
//! epoch loop.

mod config;
mod early_stopping;
mod loss;
mod rmsprop;
mod trainer;

pub use config::TrainConfig;
pub use early_stopping::{Decision, EarlyStopping};
pub use loss::{half_mse, half_mse_on_tape};
pub use rmsprop::{rmsprop_step, OptimizerState, RmsPropConfig};
pub use trainer::{init_params, train, write_history_csv, HistoryRow, TrainOutcome, Trainer};
