//! Nonlinear branch-and-bound for mixed-integer nonlinear programs.

pub mod bench;
pub mod cli;
pub mod engine;
mod extfloat;
pub mod fpump;
pub mod io;
pub mod model;
pub mod nlp;
pub mod parallel;
