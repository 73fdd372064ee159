//! Distributional instrumental-variable estimation.
//!
//! Fits a joint generative model of treatment and outcome given instruments
//! by minimizing an energy-score loss, then samples or summarizes the
//! interventional outcome distribution under do-interventions on the
//! treatment. Also ships classical IV baselines (two-stage least squares,
//! control functions, a distributional regression net) and a simulation
//! laboratory with ground-truth oracles.

pub mod acceptance;
pub mod baselines;
pub mod data;
pub mod energy;
mod error;
pub mod model;
pub mod nn;
pub mod serialize;
pub mod simlab;

pub use data::{ColStats, Dataset, Standardizer};
pub use energy::{energy_distance, energy_loss_parts, engression_loss, EnergyLossParts};
pub use error::{DivError, Result};
pub use model::{
    DivModel, FitConfig, JointSamples, ModelDims, NoiseConfig, OutcomeHead, TraceRecord,
    TrainTrace,
};
pub use serialize::{load_model, read_model, save_model, write_model};
