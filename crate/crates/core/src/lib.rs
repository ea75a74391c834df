//! Locally optimal restricted designs for phase I/II dose-finding under the
//! four-parameter continuation-ratio model.
//!
//! The crate finds D- and c-optimal design measures on a continuous dose
//! interval or a discrete dose grid, under ethical restrictions (an MTD cap
//! or a therapeutic window), using particle swarm optimization with a
//! deterministic local polish. Solved designs are certified through
//! equivalence-theorem sensitivity checks and compared via D-/c-efficiency,
//! expected success proportion, and a benchmark random-walk-rule design.

use thiserror::Error as ThisError;

pub mod cr_model;
pub mod evaluation;
pub mod information;
pub mod numeric;
pub mod problems;
pub mod pso;
pub mod scenarios;
pub mod sym4;

pub use cr_model::{
    DiscreteTargets, DoseSpace, MinEdDefinition, OutcomeProbs, TargetDoses, ThetaParams,
};
pub use evaluation::{EfficiencyReport, SensitivityCurve, GET_TOLERANCE};
pub use information::{CVector, DesignMeasure, InfoMatrix};
pub use problems::{Criterion, DesignProblem, ResolvedBounds, Restriction};
pub use pso::{Encoding, PsoConfig, PsoResult};
pub use scenarios::Scenario;

/// Errors surfaced while building models, designs, or optimization problems.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("invalid model parameters: {0}")]
    InvalidTheta(String),
    #[error("{name} = {value} must lie strictly inside (0, 1)")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("invalid dose space: {0}")]
    InvalidDoseSpace(String),
    #[error("invalid design measure: {0}")]
    InvalidDesign(String),
    #[error("root bracketing failed on [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("outcome probability {class} vanished at dose {dose}")]
    DegenerateDose { dose: f64, class: usize },
    #[error("stationarity gradient vanished at the optimal biological dose")]
    DegenerateGradient,
    #[error("information matrix is singular: {0}")]
    SingularInformation(String),
    #[error("empty admissible dose set: {0}")]
    EmptyWindow(String),
    #[error("no safe dose: toxicity {prob:.4} at the lowest dose {dose} exceeds gamma = {gamma}")]
    NoSafeDose { dose: f64, prob: f64, gamma: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
