//! Feller classification of the endpoints of a unit diffusion.
//!
//! With speed density `m = e^{B}` and scale density `s′ = e^{−B}`, the two
//! diagnostics toward an endpoint `e` from the reference point `c` are
//! `Σ = ∫_c^e s′(y) |∫_c^y m| dy` and `N = ∫_c^e m(y) |∫_c^y s′| dy`.
//! They are integrated as an ODE over windows that double in length toward
//! `∞` (or halve in distance toward a finite endpoint), and convergence is
//! judged from the ratio of successive window contributions.

use std::cell::Cell;

use serde::Serialize;

use super::UnitDiffusionModel;
use crate::numeric::ode::{self, Control, Tolerances};
use crate::numeric::stiff::rosenbrock4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FellerClass {
    Regular,
    Exit,
    Entrance,
    Natural,
    /// The evaluation budget ran out before either integral was certified.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntegralStatus {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryClass {
    pub side: Side,
    pub class: FellerClass,
    /// Σ; `+∞` when divergent.
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub sigma_integral: f64,
    /// N; `+∞` when divergent.
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub n_integral: f64,
    pub sigma_status: IntegralStatus,
    pub n_status: IntegralStatus,
    pub evaluations: usize,
}

const BUDGET_PER_INTEGRAL: usize = 10_000;
const RHO_DIVERGENT: f64 = 1.0 - 1e-3;
const RHO_CONVERGENT: f64 = 0.95;
const STREAK: usize = 3;
/// Geometrically extrapolated tail over running value needed to certify convergence.
const TAIL_RTOL: f64 = 1e-4;

#[derive(Debug, Clone)]
struct Tracker {
    status: IntegralStatus,
    value: f64,
    prev_log_delta: Option<f64>,
    div_streak: usize,
    conv_streak: usize,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            status: IntegralStatus::Inconclusive,
            value: 0.0,
            prev_log_delta: None,
            div_streak: 0,
            conv_streak: 0,
        }
    }

    fn decided(&self) -> bool {
        self.status != IntegralStatus::Inconclusive
    }

    /// Feed the log of the running integral before and after a window.
    fn update(&mut self, log_start: f64, log_end: f64) {
        if self.decided() {
            return;
        }
        if !log_end.is_finite() {
            self.status = IntegralStatus::Divergent;
            self.value = f64::INFINITY;
            return;
        }
        self.value = log_end.exp();
        let log_delta = if log_start == f64::NEG_INFINITY {
            log_end
        } else {
            log_end + (-(log_start - log_end).exp_m1()).ln()
        };
        if let Some(prev) = self.prev_log_delta {
            let log_rho = log_delta - prev;
            let rho = log_rho.exp();
            if rho >= RHO_DIVERGENT {
                self.div_streak += 1;
            } else {
                self.div_streak = 0;
            }
            if rho <= RHO_CONVERGENT {
                self.conv_streak += 1;
            } else {
                self.conv_streak = 0;
            }
            if self.div_streak >= STREAK {
                self.status = IntegralStatus::Divergent;
                self.value = f64::INFINITY;
            } else if self.conv_streak >= STREAK {
                let tail_log = log_delta + log_rho - (-rho).ln_1p();
                if tail_log - log_end <= TAIL_RTOL.ln() || log_delta == f64::NEG_INFINITY {
                    self.status = IntegralStatus::Convergent;
                    self.value += tail_log.exp();
                }
            }
        }
        self.prev_log_delta = Some(log_delta);
    }
}

/// Classify one endpoint of `model` by Feller's test.
pub fn classify_boundary(model: &UnitDiffusionModel, side: Side) -> BoundaryClass {
    let c = model.reference;
    let (e, dir) = match side {
        Side::Left => (0.0, -1.0),
        Side::Right => (model.right, 1.0),
    };
    let evals = Cell::new(0usize);
    let budget = 2 * BUDGET_PER_INTEGRAL;
    let tol = Tolerances { max_steps: budget, ..Tolerances::default() };
    let point = |k: u32| -> f64 {
        if e.is_finite() {
            e + (c - e) * 0.5f64.powi(k as i32)
        } else {
            c + (2f64.powi(k as i32) - 1.0)
        }
    };

    // First window in linear variables: [B, M, S, Σ, N] starting from zero.
    let first = point(1);
    let lin = |y: f64, s: &[f64; 5]| {
        evals.set(evals.get() + 1);
        let eb = s[0].exp();
        let emb = (-s[0]).exp();
        [2.0 * model.drift(y), dir * eb, dir * emb, dir * emb * s[1], dir * eb * s[2]]
    };
    let mut sig = Tracker::new();
    let mut nn = Tracker::new();
    let start = ode::integrate(lin, c, [0.0; 5], first, &tol, |_| Control::Continue);
    let mut state = match start {
        Ok(out) => {
            let s = out.y;
            [s[0], s[1].ln(), s[2].ln(), s[3].ln(), s[4].ln()]
        }
        Err(_) => {
            return finish(side, sig, nn, evals.get());
        }
    };
    sig.update(f64::NEG_INFINITY, state[3]);
    nn.update(f64::NEG_INFINITY, state[4]);

    // Later windows in logarithmic variables, which keep growth and decay in
    // range. Once an integrand runs away the log system is stiff, hence the
    // Rosenbrock steps. The parameter is arc length away from `c`, so the
    // integrands are positive; the abscissa rides along as component 0.
    let logf = |s: &[f64; 6]| {
        evals.set(evals.get() + 1);
        let (y, b, mu, sc, ls, ln) = (s[0], s[1], s[2], s[3], s[4], s[5]);
        [
            dir,
            dir * 2.0 * model.drift(y),
            (b - mu).exp(),
            (-b - sc).exp(),
            (-b + mu - ls).exp(),
            (b + sc - ln).exp(),
        ]
    };
    let jac = |s: &[f64; 6]| {
        evals.set(evals.get() + 1);
        let (y, b, mu, sc, ls, ln) = (s[0], s[1], s[2], s[3], s[4], s[5]);
        let f2 = (b - mu).exp();
        let f3 = (-b - sc).exp();
        let f4 = (-b + mu - ls).exp();
        let f5 = (b + sc - ln).exp();
        let mut j = [[0.0; 6]; 6];
        j[1][0] = dir * 2.0 * model.drift_prime(y);
        j[2][1] = f2;
        j[2][2] = -f2;
        j[3][1] = -f3;
        j[3][3] = -f3;
        j[4][1] = -f4;
        j[4][2] = f4;
        j[4][4] = -f4;
        j[5][1] = f5;
        j[5][3] = f5;
        j[5][5] = -f5;
        j
    };
    let stiff_tol = Tolerances { rtol: 1e-9, atol: 1e-11, ..tol };
    let mut k = 1u32;
    let mut a = first;
    while !(sig.decided() && nn.decided()) && evals.get() < budget {
        let b_pt = point(k + 1);
        if b_pt == a || !b_pt.is_finite() {
            break;
        }
        let remaining = Tolerances { max_steps: (budget - evals.get()) / 3 + 1, ..stiff_tol };
        let y0 = [a, state[0], state[1], state[2], state[3], state[4]];
        match rosenbrock4(logf, jac, y0, (b_pt - a).abs(), &remaining) {
            Ok(out) => {
                let y = out.y;
                sig.update(state[3], y[4]);
                nn.update(state[4], y[5]);
                state = [y[1], y[2], y[3], y[4], y[5]];
            }
            Err(_) => break,
        }
        a = b_pt;
        k += 1;
    }
    finish(side, sig, nn, evals.get())
}

fn finish(side: Side, sig: Tracker, nn: Tracker, evaluations: usize) -> BoundaryClass {
    use IntegralStatus::*;
    let class = match (sig.status, nn.status) {
        (Convergent, Convergent) => FellerClass::Regular,
        (Convergent, Divergent) => FellerClass::Exit,
        (Divergent, Convergent) => FellerClass::Entrance,
        (Divergent, Divergent) => FellerClass::Natural,
        _ => FellerClass::Inconclusive,
    };
    let value = |t: &Tracker| match t.status {
        Divergent => f64::INFINITY,
        _ => t.value,
    };
    BoundaryClass {
        side,
        class,
        sigma_integral: value(&sig),
        n_integral: value(&nn),
        sigma_status: sig.status,
        n_status: nn.status,
        evaluations,
    }
}
