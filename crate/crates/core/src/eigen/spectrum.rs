//! Spectrum of the problem truncated to `(0, r)`.
//!
//! θ(r; λ) increases strictly in λ and tends to 0 as λ → −∞, so the k-th
//! eigenvalue is the unique root of `θ(r; λ) = α + kπ`, where α ∈ (0, π] is
//! the phase imposed by the boundary condition at r.

use std::f64::consts::PI;

use super::prufer::{phase_at, terminal_phase};
use super::shoot::{assemble, run, Form};
use super::{uniform_grid, EigenError, EigenSolution};
use crate::model::UnitDiffusionModel;
use crate::numeric::root::bisect_predicate;

const BRACKET_LIMIT: f64 = 1.152_921_504_606_847e18; // 2^60
const MAX_BISECTIONS: usize = 200;

/// Boundary parameter at `r`: the model's own when `r` is its right
/// endpoint, otherwise Dirichlet.
fn boundary_at(model: &UnitDiffusionModel, r: f64) -> f64 {
    match model.pr {
        Some(p) if r == model.right => p,
        _ => 0.0,
    }
}

/// The first `n` eigenvalues on `(0, r)`, increasing.
pub fn truncated_spectrum(model: &UnitDiffusionModel, r: f64, n: usize) -> Result<Vec<f64>, EigenError> {
    if !(r > 0.0 && r.is_finite()) || r > model.right {
        return Err(EigenError::InvalidArgument(format!("truncation point {r} must lie in (0, {}]", model.right)));
    }
    let p_r = boundary_at(model, r);
    let b_r = model.drift(r);
    let alpha = terminal_phase(p_r, if b_r.is_finite() { b_r } else { 0.0 });
    let mut out = Vec::with_capacity(n);
    let mut lower = None::<f64>;
    for k in 0..n {
        let target = alpha + k as f64 * PI;
        let below = |lambda: f64| phase_at(model, lambda, r).map(|t| t < target);
        // λ_lo: previous eigenvalue, or doubling down from 0.
        let mut lo = match lower {
            Some(l) => l,
            None => {
                let mut l = 0.0;
                let mut step = 1.0;
                while !below(l)? {
                    l -= step;
                    step *= 2.0;
                    if -l > BRACKET_LIMIT {
                        return Err(EigenError::Unresolvable { index: k });
                    }
                }
                l
            }
        };
        let mut hi = lo.max(0.0) + 1.0;
        let mut step = 1.0;
        while below(hi)? {
            lo = hi;
            step *= 2.0;
            hi += step;
            if hi > BRACKET_LIMIT {
                return Err(EigenError::Unresolvable { index: k });
            }
        }
        let mut failure = None;
        let (l, h, _) = bisect_predicate(
            |lambda| match below(lambda) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    true
                }
            },
            lo,
            hi,
            |m| 1e-13 * m.abs().max(1.0),
            MAX_BISECTIONS,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let lambda = 0.5 * (l + h);
        if out.last().is_some_and(|&prev| lambda <= prev) {
            return Err(EigenError::Unresolvable { index: k });
        }
        out.push(lambda);
        lower = Some(h);
    }
    Ok(out)
}

/// φ_λ on `n_grid` uniform points of `[0, r]`, integrated directly.
pub fn truncated_eigenfunction(model: &UnitDiffusionModel, r: f64, lambda: f64, n_grid: usize) -> Result<EigenSolution, EigenError> {
    let grid = uniform_grid(r, n_grid);
    let run = run(model, lambda, &grid, Form::Adjoint, false)?;
    Ok(assemble(lambda, grid, &run.samples, run.first_zero, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(drift: &str, kappa: &str, r: f64, p0: f64, pr: f64) -> UnitDiffusionModel {
        UnitDiffusionModel::from_unit(drift, kappa, r, p0, Some(pr)).unwrap()
    }

    #[test]
    fn dirichlet_sines() {
        let m = interval("0", "0", PI, 0.0, 0.0);
        let spec = truncated_spectrum(&m, PI, 4).unwrap();
        for (k, l) in spec.iter().enumerate() {
            let exact = ((k + 1) * (k + 1)) as f64 / 2.0;
            assert!((l - exact).abs() < 1e-7, "λ_{k} = {l}");
        }
    }

    #[test]
    fn eigenfunctions_have_k_interior_zeros() {
        let m = interval("0.3*x", "0.1", 3.0, 0.0, 0.0);
        let spec = truncated_spectrum(&m, 3.0, 4).unwrap();
        for (k, &l) in spec.iter().enumerate() {
            let s = truncated_eigenfunction(&m, 3.0, l, 3001).unwrap();
            let interior = &s.phi[1..s.phi.len() - 1];
            let changes = interior.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
            assert_eq!(changes, k, "λ_{k}");
        }
    }

    #[test]
    fn neumann_bottom_is_zero() {
        let m = interval("0", "0", PI, 1.0, 1.0);
        let spec = truncated_spectrum(&m, PI, 3).unwrap();
        assert!(spec[0].abs() < 1e-10);
        assert!((spec[1] - 0.5).abs() < 1e-9);
        let s = truncated_eigenfunction(&m, PI, spec[0], 101).unwrap();
        assert!(s.phi.iter().all(|p| (p - 1.0).abs() < 1e-8));
    }

    #[test]
    fn constant_killing_shifts_every_level() {
        let m = interval("0.2 - 0.1*x", "0.05*x", 2.5, 0.0, 0.4);
        let base = truncated_spectrum(&m, 2.5, 3).unwrap();
        let shifted = truncated_spectrum(&m.with_extra_killing(0.3), 2.5, 3).unwrap();
        for (a, b) in base.iter().zip(&shifted) {
            assert!((b - a - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn robin_condition_matches_transcendental_root() {
        // b = 0, Dirichlet at 0, p_r = ½ at r = 1: ψ = sin(kx) with
        // (1 − p_r) sin k = −½p_r k cos k, i.e. tan k = −k/2.
        let m = interval("0", "0", 1.0, 0.0, 0.5);
        let l = truncated_spectrum(&m, 1.0, 1).unwrap()[0];
        let k = (2.0 * l).sqrt();
        assert!((k.tan() + k / 2.0).abs() < 1e-8, "k = {k}");
        assert!(k > PI / 2.0 && k < PI);
    }
}
