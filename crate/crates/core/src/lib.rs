//! Deterministic, batched, headless simulator and reward engine for
//! semantics-driven inspection path planning.

pub mod agent;
pub mod bridge;
pub mod env;
pub mod error;
pub mod geom;
pub mod mapping;
pub mod replay;
pub mod reward;
pub mod runner;
pub mod scene;
pub mod seeding;
pub mod sensors;

pub use error::{Result, SimError};
