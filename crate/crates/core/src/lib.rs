//! Swarm-versus-swarm engagement simulation with agent attrition.
//!
//! Attackers follow pairwise potential forces and a virtual leader toward a
//! high-value unit (HVU); defenders fly Bernstein-polynomial trajectories.
//! Three deterministic survival models (P1, P2, P3) approximate the
//! stochastic engagement, which is itself enacted by Monte Carlo replay.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attrition;
pub mod bernstein;
pub mod dynamics;
pub mod error;
pub mod geom;
pub mod harness;
pub mod montecarlo;
pub mod ocp;
pub mod optimizer;
pub mod scenario;

pub use attrition::{IndexSet, SurvivalVector};
pub use bernstein::ControlPoints;
pub use dynamics::SwarmState;
pub use error::{Error, Result};
pub use montecarlo::{mc_ensemble, mc_run, MCRunRecord, MCStats};
pub use ocp::{propagate, EngagementResult, ModelKind};
pub use optimizer::{optimize, OptimizationTrace, OptimizerOptions};
pub use scenario::ScenarioConfig;
