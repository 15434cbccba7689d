//! Test-set metrics, the experiment grid runner and feature export.

mod export;
mod grid;
mod metrics;

pub use export::{export_features, projector_features, write_loss_history};
pub use grid::{
    format_rate, mean_sd, run_grid, CellResult, ExperimentGrid, GridData, GridResults, GridRow,
    Method,
};
pub use metrics::{argmax, evaluate, metrics_from_predictions, predict, ClassScores, MetricsReport};
