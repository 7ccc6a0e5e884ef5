//! Discrete Active Inference planning on region-extended Bethe coordinates.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the tabular generative model, its factor graph and the
//!   JSON model document.
//! * [`coords`] stores factor, region and singleton beliefs together with the
//!   observation channel `r(y | x, θ)`.
//! * [`objective`] evaluates global and Bethe-form free energies and the
//!   entropy corrections that distinguish the inference modes.
//! * [`engine`] runs the stationary fixed-point scheme.
//! * [`oracle`] provides enumeration ground truth and identity checks.
//! * [`planner`] turns converged action beliefs into decisions.
//! * [`cli`] implements the command-line surface.

pub mod cli;
pub mod coords;
pub mod engine;
pub mod error;
pub mod exec;
pub mod model;
pub mod objective;
pub mod oracle;
pub mod planner;
pub mod sampling;

pub use coords::{Coordinates, MultiplierSet};
pub use engine::{run_inference, EngineConfig, InferenceTrace, Schedule};
pub use error::{Error, Result};
pub use model::{Cardinalities, DiscreteModel, FactorGraph};
pub use objective::{FactorizedPosterior, InferenceMode, ObjectiveReport};
pub use planner::{plan, PlanResult};
