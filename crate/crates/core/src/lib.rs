//! Joint transmit-power and flight-speed planning for UAVs offloading data
//! to an access point over a multiple-access channel.
//!
//! The crate is generic over the floating-point type; the aliases below fix
//! it to `f64`, which the solver needs for its default tolerances.

pub mod analysis;
pub mod baselines;
pub mod capacity;
pub mod linalg;
pub mod model;
pub mod scalar;
pub mod solver;
pub mod transcription;

pub use scalar::Real;

pub type Scenario = model::ScenarioConfig<f64>;
pub type Node = model::NodeParams<f64>;
pub type Channel = model::ChannelParams<f64>;
pub type Drag = model::DragModel<f64>;
pub type Program = transcription::ConvexProgram<f64>;
pub type Solution = transcription::Solution<f64>;
pub type Stats = solver::SolveStats<f64>;
pub type Energy = transcription::EnergyBreakdown<f64>;
