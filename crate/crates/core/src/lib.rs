//! Critical-step guided policy optimization on tabular finite-horizon MDPs.
//!
//! The crate finds the step of a trajectory with the largest estimated
//! advantage, resets there and resamples continuations, and trains softmax
//! policies on the resulting data with a clipped policy-gradient objective or
//! one of several preference losses. Every quantity it estimates can be
//! checked against exact dynamic programming.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`.

pub mod advantage;
pub mod datagen;
pub mod experiment;
pub mod io;
pub mod mdp;
pub mod objectives;
pub mod parallel;
pub mod rng;
pub mod scalar;
pub mod stats;
pub mod trainer;
pub mod trajectory;

pub use scalar::Scalar;

pub type Mdp = mdp::TabularMdp<f64>;
pub type Policy = mdp::SoftmaxPolicy<f64>;
pub type Oracle = mdp::OracleValues<f64>;
pub type Occupancy = mdp::OccupancyTable<f64>;
pub type Traj = trajectory::Trajectory<f64>;
pub type Pair = trajectory::PreferencePair<f64>;
pub type Kto = trajectory::KtoExample<f64>;
pub type Profile = advantage::AdvantageProfile<f64>;
