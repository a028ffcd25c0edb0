//! Prüfer phase of `u″ = q u`: with `u = ρ sin θ`, `u′ = ρ cos θ`,
//! `θ′ = cos²θ − q sin²θ`. Zeros of `u` are exactly the crossings of
//! multiples of π, and those crossings are upward, so θ counts zeros
//! without aliasing.

use std::f64::consts::{FRAC_PI_2, PI};

use super::{default_tolerances, initial_u, EigenError};
use crate::model::UnitDiffusionModel;
use crate::numeric::ode::{self, Control, Step, Tolerances};
use crate::numeric::{geomspace, linspace};

/// `q + 2λ = b̃² + b̃′ + 2κ̃` on a fixed sample set of `[0, x_max]`.
///
/// λ only shifts the potential, so one sample set serves a whole bisection.
#[derive(Debug, Clone)]
pub(crate) struct PotentialSamples {
    xs: Vec<f64>,
    base: Vec<f64>,
}

impl PotentialSamples {
    pub fn new(model: &UnitDiffusionModel, x_max: f64) -> Self {
        let mut xs = linspace(0.0, x_max, 10_001);
        if x_max > 1e-3 {
            xs.extend(geomspace(1e-3, x_max, 2001));
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let base = xs
            .iter()
            .map(|&x| {
                let v = model.potential(x, 0.0);
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            })
            .collect();
        PotentialSamples { xs, base }
    }

    /// Largest sample abscissa with `q ≤ 0`, or 0 when q is positive on every sample.
    pub fn last_nonpositive(&self, lambda: f64) -> f64 {
        let level = 2.0 * lambda;
        self.xs
            .iter()
            .zip(&self.base)
            .rev()
            .find(|(_, &v)| v <= level)
            .map(|(&x, _)| x)
            .unwrap_or(0.0)
    }
}

pub(crate) fn theta_rhs(model: &UnitDiffusionModel, lambda: f64) -> impl Fn(f64, &[f64; 1]) -> [f64; 1] + '_ {
    move |x, s| {
        let (sn, cs) = s[0].sin_cos();
        [cs * cs - model.potential(x, lambda) * sn * sn]
    }
}

pub(crate) fn initial_theta(model: &UnitDiffusionModel) -> Result<f64, EigenError> {
    let (u0, du0) = initial_u(model)?;
    Ok(u0.atan2(du0))
}

/// Locate `x` in the step where component `i` of the dense output crosses `level`.
pub(crate) fn crossing<const N: usize>(step: &Step<N>, i: usize, level: f64) -> f64 {
    let (mut a, mut b) = (step.x_old, step.x_new);
    let fa = step.y_old[i] - level;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let fm = step.eval(m)[i] - level;
        if (fm > 0.0) == (fa > 0.0) && fm != 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Outcome of the zero test on `(0, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ZeroTest {
    Zero(f64),
    NoZero,
}

/// Whether φ_λ has a zero in `(0, x_max]`.
///
/// Stops early, without a zero, once `θ ∈ (0, π/2)` beyond the last sample
/// with `q ≤ 0`: there `θ′ < 0` at `θ = π/2`, so θ can never reach π.
pub(crate) fn zero_test(
    model: &UnitDiffusionModel,
    lambda: f64,
    x_max: f64,
    samples: &PotentialSamples,
) -> Result<ZeroTest, EigenError> {
    let theta0 = initial_theta(model)?;
    let x_turn = samples.last_nonpositive(lambda);
    let tol = Tolerances { h_max: x_max / 1000.0, ..default_tolerances() };
    let mut result = ZeroTest::NoZero;
    ode::integrate(theta_rhs(model, lambda), 0.0, [theta0], x_max, &tol, |step| {
        if step.y_new[0] >= PI {
            let z = crossing(step, 0, PI);
            result = ZeroTest::Zero(z);
            return Control::Stop(z);
        }
        let x = step.x_new;
        if step.y_new[0] < FRAC_PI_2 && step.y_new[0] > 0.0 && x >= x_turn && model.potential(x, lambda) > 0.0 {
            return Control::Stop(x);
        }
        Control::Continue
    })?;
    Ok(result)
}

/// θ at `r`, integrated through every zero.
pub(crate) fn phase_at(model: &UnitDiffusionModel, lambda: f64, r: f64) -> Result<f64, EigenError> {
    let theta0 = initial_theta(model)?;
    let tol = Tolerances { h_max: r / 200.0, ..default_tolerances() };
    let out = ode::integrate(theta_rhs(model, lambda), 0.0, [theta0], r, &tol, |_| Control::Continue)?;
    Ok(out.y[0])
}

/// Phase in `(0, π]` that the boundary condition at `r` imposes:
/// `(1 − p_r)ψ(r) = −½p_r ψ′(r)`, written in `u`.
pub(crate) fn terminal_phase(p_r: f64, b_r: f64) -> f64 {
    let a = (-0.5 * p_r).atan2((1.0 - p_r) - 0.5 * p_r * b_r);
    if a <= 0.0 {
        a + PI
    } else {
        a
    }
}
