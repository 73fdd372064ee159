//! Simulation laboratory: benchmark data-generating processes, their
//! ground-truth interventional oracles, and the metrics used to score
//! estimators against them.

mod metrics;
mod scenarios;

pub use metrics::{
    default_grid, eval_beta_error, eval_mean_mse, eval_qte_mae, eval_qte_rmse, stability_measure,
};
pub use scenarios::{OracleConfig, Scenario, ScenarioData, QTE_ALPHAS};
