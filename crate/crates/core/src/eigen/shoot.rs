//! Direct solution of the initial-value problems for φ_λ and ψ_λ.
//!
//! φ is integrated in Liouville form `u″ = q u` (`φ = e^{B/2}u`), ψ in its
//! own form `ψ″ = 2(κ̃ − λ)ψ − 2b̃ψ′`, so that `e^{B}ψ = φ` is a genuine
//! cross-check. Both carry a power-of-two scale that keeps the mantissas in
//! range. Once the solution is committed to monotone growth (u and u′ of one
//! sign beyond the last turning point) and has grown by `e^{40}`, the rest
//! of the grid is filled by the WKB continuation
//! `ln u = ln u_s + ∫√q − ¼ ln(q/q_s)`, which explicit steps could not reach
//! when q grows fast.

use super::prufer::{crossing, PotentialSamples};
use super::{default_tolerances, initial_u, uniform_grid, EigenError, EigenSolution};
use crate::model::UnitDiffusionModel;
use crate::numeric::ode::{self, Control, Tolerances};
use crate::numeric::quad;

const DEFAULT_GRID: usize = 2001;
const RESCALE_ABOVE: f64 = 1e150;
const RESCALE_BELOW: f64 = 1e-150;
/// Growth `∫√q` after commitment at which the WKB continuation takes over.
const WKB_SWITCH: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Form {
    /// State `[u, u′, B, S]`.
    Adjoint,
    /// State `[ψ, ψ′, B, S]`.
    Forward,
}

/// One grid sample: `φ = phi_m·e^{phi_log}`, `φ′ = dphi_m·e^{phi_log}`,
/// `ψ = psi_m·e^{psi_log}`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Sample {
    pub phi_m: f64,
    pub dphi_m: f64,
    pub phi_log: f64,
    pub psi_m: f64,
    pub psi_log: f64,
}

fn scaled(m: f64, log: f64) -> f64 {
    if m == 0.0 {
        0.0
    } else {
        m * log.exp()
    }
}

pub(crate) fn assemble(lambda: f64, grid: Vec<f64>, samples: &[Sample], first_zero: f64, wkb_from: Option<f64>) -> EigenSolution {
    let x_max = *grid.last().expect("non-empty grid");
    EigenSolution {
        lambda,
        phi: samples.iter().map(|s| scaled(s.phi_m, s.phi_log)).collect(),
        psi: samples.iter().map(|s| scaled(s.psi_m, s.psi_log)).collect(),
        dphi: samples.iter().map(|s| scaled(s.dphi_m, s.phi_log)).collect(),
        ln_abs_phi: samples.iter().map(|s| s.phi_m.abs().ln() + s.phi_log).collect(),
        grid,
        first_zero,
        x_max,
        wkb_from,
    }
}

fn sample_from_state(form: Form, b: f64, y: &[f64; 4], log_scale: f64) -> Sample {
    let (m, dm, big_b) = (y[0], y[1], y[2]);
    match form {
        Form::Adjoint => Sample {
            phi_m: m,
            dphi_m: dm + b * m,
            phi_log: log_scale + 0.5 * big_b,
            psi_m: m,
            psi_log: log_scale - 0.5 * big_b,
        },
        Form::Forward => Sample {
            phi_m: m,
            dphi_m: dm + 2.0 * b * m,
            phi_log: log_scale + big_b,
            psi_m: m,
            psi_log: log_scale,
        },
    }
}

/// `ln|u|` of the state, for either form.
fn ln_abs_u(form: Form, y: &[f64; 4], log_scale: f64) -> f64 {
    let base = y[0].abs().ln() + log_scale;
    match form {
        Form::Adjoint => base,
        Form::Forward => base + 0.5 * y[2],
    }
}

/// Whether u and u′ share a sign.
fn same_sign(form: Form, b: f64, y: &[f64; 4]) -> bool {
    match form {
        Form::Adjoint => y[0] * y[1] > 0.0,
        Form::Forward => y[0] * (y[1] + b * y[0]) > 0.0,
    }
}

pub(crate) struct DirectRun {
    pub samples: Vec<Sample>,
    pub first_zero: f64,
    pub wkb_from: Option<f64>,
}

/// Integrate from 0 across `grid` (increasing, starting at 0).
pub(crate) fn run(
    model: &UnitDiffusionModel,
    lambda: f64,
    grid: &[f64],
    form: Form,
    allow_wkb: bool,
) -> Result<DirectRun, EigenError> {
    if grid.is_empty() || grid[0] != 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EigenError::InvalidArgument("grid must start at 0 and increase strictly".into()));
    }
    let x_max = *grid.last().unwrap();
    let (u0, du0) = initial_u(model)?;
    let b0 = model.drift_at_zero().ok_or(EigenError::SingularDriftAtZero)?;
    let y0 = match form {
        Form::Adjoint => [u0, du0, 0.0, 0.0],
        Form::Forward => [u0, 2.0 * (1.0 - model.p0), 0.0, 0.0],
    };
    let mut samples = Vec::with_capacity(grid.len());
    samples.push(sample_from_state(form, b0, &y0, 0.0));
    if grid.len() == 1 {
        return Ok(DirectRun { samples, first_zero: f64::INFINITY, wkb_from: None });
    }

    let x_turn = if allow_wkb {
        PotentialSamples::new(model, x_max).last_nonpositive(lambda)
    } else {
        f64::INFINITY
    };
    let rhs = |x: f64, s: &[f64; 4]| {
        let b = model.drift(x);
        let q = model.potential(x, lambda);
        let second = match form {
            Form::Adjoint => q * s[0],
            Form::Forward => 2.0 * (model.kappa(x) - lambda) * s[0] - 2.0 * b * s[1],
        };
        [s[1], second, 2.0 * b, q.max(0.0).sqrt()]
    };
    let tol = Tolerances { h_max: x_max / 1000.0, ..default_tolerances() };
    let mut log_scale = 0.0f64;
    let mut next = 1usize;
    let mut first_zero = f64::INFINITY;
    let mut committed_at: Option<f64> = None;
    let mut switch: Option<(f64, f64)> = None;
    let out = ode::integrate(rhs, 0.0, y0, x_max, &tol, |step| {
        while next < grid.len() && grid[next] <= step.x_new {
            let x = grid[next];
            let y = step.eval(x);
            samples.push(sample_from_state(form, model.drift(x), &y, log_scale));
            next += 1;
        }
        let (a0, a1) = (step.y_old[0], step.y_new[0]);
        if first_zero.is_infinite() && (a0 * a1 < 0.0 || (a1 == 0.0 && step.x_new > 0.0)) {
            first_zero = if a1 == 0.0 { step.x_new } else { crossing(step, 0, 0.0) };
        }
        let x = step.x_new;
        let y = step.y_new;
        if allow_wkb && x >= x_turn && model.potential(x, lambda) > 0.0 && same_sign(form, model.drift(x), &y) {
            let s_c = *committed_at.get_or_insert(y[3]);
            if y[3] - s_c >= WKB_SWITCH && x < x_max {
                switch = Some((x, log_scale));
                return Control::Stop(x);
            }
        } else {
            committed_at = None;
        }
        let size = y[0].abs().max(y[1].abs());
        let factor = if size > RESCALE_ABOVE {
            -500
        } else if size < RESCALE_BELOW && size > 0.0 {
            500
        } else {
            0
        };
        if factor != 0 {
            let m = 2f64.powi(factor);
            log_scale -= f64::from(factor) * std::f64::consts::LN_2;
            return Control::Reset([y[0] * m, y[1] * m, y[2], y[3]]);
        }
        Control::Continue
    })?;

    let mut wkb_from = None;
    if let Some((x_s, ls)) = switch {
        wkb_from = Some(x_s);
        let y = out.y;
        let ln_u_s = ln_abs_u(form, &y, ls);
        let sign = y[0].signum();
        let q_s = model.potential(x_s, lambda);
        let (mut x_prev, mut big_b, mut s_rel) = (x_s, y[2], 0.0);
        for &x in &grid[next..] {
            let cell = |f: &dyn Fn(f64) -> f64| quad::integrate(f, x_prev, x, 1e-14, 1e-12, 2000).value;
            s_rel += cell(&|z| model.potential(z, lambda).max(0.0).sqrt());
            big_b += cell(&|z| 2.0 * model.drift(z));
            x_prev = x;
            let q = model.potential(x, lambda);
            let ln_u = ln_u_s + s_rel - 0.25 * (q / q_s).ln();
            samples.push(Sample {
                phi_m: sign,
                dphi_m: sign * (model.drift(x) + q.sqrt()),
                phi_log: ln_u + 0.5 * big_b,
                psi_m: sign,
                psi_log: ln_u - 0.5 * big_b,
            });
        }
    }
    debug_assert_eq!(samples.len(), grid.len());
    Ok(DirectRun { samples, first_zero, wkb_from })
}

/// φ_λ on a uniform grid of `[0, x_max]`.
pub fn solve_phi(model: &UnitDiffusionModel, lambda: f64, x_max: f64) -> Result<EigenSolution, EigenError> {
    solve_phi_on(model, lambda, &uniform_grid(x_max, DEFAULT_GRID))
}

/// φ_λ on a caller-supplied grid starting at 0.
pub fn solve_phi_on(model: &UnitDiffusionModel, lambda: f64, grid: &[f64]) -> Result<EigenSolution, EigenError> {
    let r = run(model, lambda, grid, Form::Adjoint, true)?;
    Ok(assemble(lambda, grid.to_vec(), &r.samples, r.first_zero, r.wkb_from))
}

/// ψ_λ on a uniform grid of `[0, x_max]`.
pub fn solve_psi(model: &UnitDiffusionModel, lambda: f64, x_max: f64) -> Result<EigenSolution, EigenError> {
    solve_psi_on(model, lambda, &uniform_grid(x_max, DEFAULT_GRID))
}

pub fn solve_psi_on(model: &UnitDiffusionModel, lambda: f64, grid: &[f64]) -> Result<EigenSolution, EigenError> {
    let r = run(model, lambda, grid, Form::Forward, true)?;
    Ok(assemble(lambda, grid.to_vec(), &r.samples, r.first_zero, r.wkb_from))
}
