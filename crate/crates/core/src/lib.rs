//! Quadrotor flight in a tunnel: plant, near-surface aerodynamics, control
//! barrier functions, an SQP solver, MPC controllers and the closed-loop
//! scenario engine.
//!
//! Numerics are generic over [`scalar::Real`]; the aliases below fix them to
//! `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod aero;
pub mod cbf;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod mpc;
pub mod optimizer;
pub mod scalar;
pub mod sim;

pub use config::{apply_overrides, load_config, ConfigError};
pub use mpc::{ControllerMode, ScenarioCase};
pub use sim::{run_scenario, RunMetrics, ScenarioRun, StepRecord};

pub type Vec3 = linalg::Vec3<f64>;
pub type UavParams = dynamics::UavParams<f64>;
pub type UavState = dynamics::UavState<f64>;
pub type PidGains = dynamics::PidGains<f64>;
pub type TunnelGeometry = aero::TunnelGeometry<f64>;
pub type AeroConfig = aero::AeroConfig<f64>;
pub type CbfParams = cbf::CbfParams<f64>;
pub type MpcConfig = mpc::MpcConfig<f64>;
pub type ScenarioConfig = sim::ScenarioConfig<f64>;
