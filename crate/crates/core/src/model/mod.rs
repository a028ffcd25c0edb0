//! Diffusion specifications, normalization to unit diffusion coefficient,
//! Feller boundary classification and the sufficient-condition checks.

mod boundary;
mod conditions;
mod spec;
mod unit;

use thiserror::Error;

pub use boundary::{classify_boundary, BoundaryClass, FellerClass, IntegralStatus, Side};
pub use conditions::{check_gb, check_lp_prime, ConditionReport, GbVariant, LpReport};
pub use spec::{parse_model, parse_model_with, DiffusionSpec};
pub use unit::{to_unit_diffusion, to_unit_diffusion_with, CoordMap, DriftForm, UnitDiffusionModel};

use crate::expr::ParseError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("expression error at {0}")]
    Expr(#[from] ParseError),
    #[error("config error at {line}:{column}: {message}")]
    Config { line: usize, column: usize, message: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("boundary error: {0}")]
    Boundary(String),
    #[error("coordinate transform is not finite: {0}")]
    Transform(String),
}
