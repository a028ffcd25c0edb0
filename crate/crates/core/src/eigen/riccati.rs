//! Log-derivative `g_λ = ψ′_{−λ}/ψ_{−λ}` of the forward solution at
//! parameter `−λ`, so that `g′ = 2(κ̃ + λ) − 2b̃g − g²`.
//!
//! Near a pole the reciprocal `w = 1/g`, with `w′ = 1 + 2b̃w − 2(κ̃ + λ)w²`,
//! is integrated instead; poles are the zeros of `w`.

use std::cell::Cell;

use serde::Serialize;

use super::prufer::crossing;
use super::{default_tolerances, uniform_grid, EigenError};
use crate::model::UnitDiffusionModel;
use crate::numeric::ode::{self, Control, Tolerances};

const DEFAULT_GRID: usize = 2001;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiccatiTrace {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// g on the grid; `±∞` at a grid point that is itself a pole.
    #[serde(serialize_with = "crate::io::ser_extended_vec")]
    pub g: Vec<f64>,
    /// Zeros of ψ_{−λ}, including 0 when `p0 = 0`.
    pub blowup_points: Vec<f64>,
}

/// Trace `g_λ` on `[0, x_max]`; λ follows the Laplace-transform convention.
pub fn riccati_g(model: &UnitDiffusionModel, lambda: f64, x_max: f64) -> Result<RiccatiTrace, EigenError> {
    let grid = uniform_grid(x_max, DEFAULT_GRID);
    let p0 = model.p0;
    // ψ(0) = p0, ψ′(0) = 2(1 − p0).
    let reciprocal = Cell::new(2.0 * (1.0 - p0) > p0);
    let v0 = if reciprocal.get() { p0 / (2.0 * (1.0 - p0)) } else { 2.0 * (1.0 - p0) / p0 };
    let mut blowup_points = Vec::new();
    if p0 == 0.0 {
        blowup_points.push(0.0);
    }
    let rhs = |x: f64, s: &[f64; 1]| {
        let b = model.drift(x);
        let c = 2.0 * (model.kappa(x) + lambda);
        let v = s[0];
        if reciprocal.get() {
            [1.0 + 2.0 * b * v - c * v * v]
        } else {
            [c - 2.0 * b * v - v * v]
        }
    };
    let value = |v: f64, recip: bool| if recip { 1.0 / v } else { v };
    let mut g = Vec::with_capacity(grid.len());
    g.push(value(v0, reciprocal.get()));
    let mut next = 1usize;
    let tol = Tolerances { h_max: x_max / 1000.0, ..default_tolerances() };
    ode::integrate(rhs, 0.0, [v0], x_max, &tol, |step| {
        let recip = reciprocal.get();
        while next < grid.len() && grid[next] <= step.x_new {
            g.push(value(step.eval(grid[next])[0], recip));
            next += 1;
        }
        if recip && step.y_old[0] < 0.0 && step.y_new[0] >= 0.0 {
            blowup_points.push(crossing(step, 0, 0.0));
        }
        let v = step.y_new[0];
        if v.abs() > 1.0 {
            reciprocal.set(!recip);
            return Control::Reset([1.0 / v]);
        }
        Control::Continue
    })?;
    Ok(RiccatiTrace { lambda, grid, g, blowup_points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::solve_psi;

    fn unit(drift: &str, kappa: &str, p0: f64) -> UnitDiffusionModel {
        UnitDiffusionModel::from_unit(drift, kappa, f64::INFINITY, p0, None).unwrap()
    }

    #[test]
    fn reciprocal_of_linear_solution() {
        let t = riccati_g(&unit("0", "0", 0.0), 0.0, 5.0).unwrap();
        assert_eq!(t.blowup_points, vec![0.0]);
        for (x, g) in t.grid.iter().zip(&t.g).skip(1) {
            assert!((g - 1.0 / x).abs() < 1e-9 * (1.0 / x));
        }
    }

    #[test]
    fn poles_match_zeros_of_direct_solve() {
        // Parameter −½ here is ψ_{1/2} = cos x: poles at π/2 + kπ.
        let m = unit("0", "0", 1.0);
        let t = riccati_g(&m, -0.5, 12.0).unwrap();
        let s = solve_psi(&m, 0.5, 12.0).unwrap();
        let mut zeros = Vec::new();
        for i in 1..s.grid.len() {
            if s.psi[i - 1] * s.psi[i] < 0.0 {
                zeros.push(i);
            }
        }
        assert_eq!(t.blowup_points.len(), zeros.len());
        for (k, p) in t.blowup_points.iter().enumerate() {
            let exact = std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI;
            assert!((p - exact).abs() < 1e-8, "pole {p} vs {exact}");
            // Within the grid cell where ψ changes sign.
            let i = zeros[k];
            assert!(*p >= s.grid[i - 1] && *p <= s.grid[i]);
        }
    }

    #[test]
    fn positive_without_poles_for_nonnegative_parameters() {
        let m = unit("0.5*sin(x)", "0.2*x", 0.0);
        for lambda in [0.0, 0.3, 2.0] {
            let t = riccati_g(&m, lambda, 10.0).unwrap();
            assert_eq!(t.blowup_points, vec![0.0]);
            assert!(t.g.iter().skip(1).all(|&g| g > 0.0));
        }
    }

    #[test]
    fn satisfies_riccati_equation() {
        let m = unit("0.3 - 0.1*x", "0.5", 1.0);
        let lambda = 0.4;
        let t = riccati_g(&m, lambda, 4.0).unwrap();
        let h = t.grid[1] - t.grid[0];
        for i in 1..t.grid.len() - 1 {
            let x = t.grid[i];
            let d = (t.g[i + 1] - t.g[i - 1]) / (2.0 * h);
            let rhs = 2.0 * (m.kappa(x) + lambda) - 2.0 * m.drift(x) * t.g[i] - t.g[i] * t.g[i];
            assert!((d - rhs).abs() < 1e-5 * (1.0 + rhs.abs()), "x = {x}");
        }
    }
}
