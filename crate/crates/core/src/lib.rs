//! Certification of multiparticle entanglement from randomized local
//! measurements: exact moments and bounds, shot simulation, unbiased
//! estimators, error bars and measurement-budget planning.

pub mod bounds;
pub mod certify;
pub mod cli;
pub mod confidence;
pub mod error;
pub mod estimation;
pub mod moments;
pub mod planner;
pub mod rational;
pub mod sampling;
pub mod states;

pub use error::{Error, Result};
pub use rational::ExactRational;
