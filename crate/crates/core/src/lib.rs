//! Traveling Thief Problem toolkit: instances, a portfolio of heuristics,
//! instance features, per-instance algorithm selection and portfolio
//! complementarity analysis.

pub mod analysis;
pub mod benchmark;
pub mod evaluation;
pub mod features;
pub mod instance;
pub mod pipeline;
pub mod selection;
pub mod solvers;

pub use evaluation::{objective, travel_time, validate, PackingPlan, Solution, Tour, Violation};
pub use instance::{
    generate_instance, parse_instance, write_instance, GeneratorParams, KpType, TtpInstance,
};
