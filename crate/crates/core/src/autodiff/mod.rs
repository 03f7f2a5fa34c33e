//! Minimal reverse-mode differentiation over dense arrays.
//!
//! A [`Graph`] records every operation as it runs; [`Graph::backward`]
//! replays the record in reverse. [`grad_check`] compares the analytic
//! gradients against central finite differences.

mod check;
mod graph;

pub use check::{central_difference, grad_check, grad_check_against, GradCheckReport, ParamReport, Parameterized};
pub use graph::{Activation, BinaryKind, Graph, Var};
