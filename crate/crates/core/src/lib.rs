//! Exchangeable random measures on the quarter plane: a function language,
//! Poisson-based samplers for Kallenberg representations and multigraphexes,
//! adaptive quadrature, local-finiteness certification and a statistical
//! test harness.

pub mod cli;
pub mod config;
pub mod dsl;
pub mod finiteness;
pub mod harness;
pub mod model;
pub mod poisson;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod sum;
pub mod types;
