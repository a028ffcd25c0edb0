//! Eigenfunctions of the killed generator and its adjoint, the principal
//! eigenvalue λ̲, truncated spectra and the quasi-stationary density.
//!
//! Internally everything is solved in Liouville normal form: with
//! `u = e^{−B/2}φ = e^{B/2}ψ` both eigen-equations become `u″ = q u`, where
//! `q = b̃² + b̃′ + 2κ̃ − 2λ` is [`UnitDiffusionModel::potential`]. Zeros of
//! φ and ψ are zeros of `u`, which the Prüfer phase counts robustly.

mod principal;
mod prufer;
mod riccati;
mod shoot;
mod spectrum;

use serde::Serialize;
use thiserror::Error;

use crate::io::{Cell, Table};
use crate::model::UnitDiffusionModel;
use crate::numeric::ode::{OdeError, Tolerances};

pub use principal::{find_lambda_lower, find_lambda_lower_with, principal_eigenfunction, qsd_density, LowerOptions, PrincipalEigenvalue, QsdDensity, TruncationStep};
pub use riccati::{riccati_g, RiccatiTrace};
pub use shoot::{solve_phi, solve_phi_on, solve_psi, solve_psi_on};
pub use spectrum::{truncated_eigenfunction, truncated_spectrum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigenError {
    #[error("integration failed: {0}")]
    Integration(#[from] OdeError),
    #[error("drift is not finite at the left endpoint")]
    SingularDriftAtZero,
    #[error("no lambda above {floor} keeps phi free of zeros; the left boundary may be misclassified")]
    BracketFailure { floor: f64 },
    #[error("phi at lambda = {lambda} is not integrable")]
    NotNormalizable { lambda: f64 },
    #[error("eigenvalue {index} could not be resolved")]
    Unresolvable { index: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Integration tolerances shared by every solve.
pub fn default_tolerances() -> Tolerances {
    Tolerances { rtol: 1e-10, atol: 1e-12, ..Tolerances::default() }
}

/// φ_λ and ψ_λ sampled on a grid, with the first zero of φ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSolution {
    pub lambda: f64,
    pub grid: Vec<f64>,
    #[serde(serialize_with = "crate::io::ser_extended_vec")]
    pub phi: Vec<f64>,
    #[serde(serialize_with = "crate::io::ser_extended_vec")]
    pub psi: Vec<f64>,
    #[serde(serialize_with = "crate::io::ser_extended_vec")]
    pub dphi: Vec<f64>,
    /// `ln|φ|`, finite where `phi` itself overflows.
    #[serde(serialize_with = "crate::io::ser_extended_vec")]
    pub ln_abs_phi: Vec<f64>,
    /// ζ(λ): first zero of φ in `(0, x_max]`, `+∞` when there is none.
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub first_zero: f64,
    pub x_max: f64,
    /// Abscissa from which values come from the WKB continuation instead of
    /// direct integration.
    pub wkb_from: Option<f64>,
}

impl EigenSolution {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["x", "phi", "psi", "dphi"]);
        for i in 0..self.grid.len() {
            t.push(vec![
                Cell::from(self.grid[i]),
                self.phi[i].into(),
                self.psi[i].into(),
                self.dphi[i].into(),
            ]);
        }
        t
    }

    /// Trapezoid mass of φ over the grid.
    pub fn mass(&self) -> f64 {
        crate::numeric::quad::trapezoid(&self.grid, &self.phi)
    }
}

/// `u(0)` and `u′(0)` for the boundary parameter at 0.
pub(crate) fn initial_u(model: &UnitDiffusionModel) -> Result<(f64, f64), EigenError> {
    let b0 = model.drift_at_zero().ok_or(EigenError::SingularDriftAtZero)?;
    let p0 = model.p0;
    Ok((p0, 2.0 * (1.0 - p0) + b0 * p0))
}

/// Regular grid with `n` points on `[0, x_max]`.
pub(crate) fn uniform_grid(x_max: f64, n: usize) -> Vec<f64> {
    crate::numeric::linspace(0.0, x_max, n.max(2))
}
