//! The principal eigenvalue λ̲ by bisection on the zero structure of φ_λ,
//! and the principal eigenfunction.
//!
//! At λ̲ the eigenfunction is the decaying solution wherever q > 0, which
//! forward integration cannot follow. Beyond the last turning point it is
//! therefore recovered from the log-derivative `w = u′/u` integrated
//! backward from far out, where `w = −√q` is the attracting branch.

use serde::Serialize;

use super::prufer::{zero_test, PotentialSamples, ZeroTest};
use super::shoot::{assemble, run, Form, Sample};
use super::spectrum::{truncated_eigenfunction, truncated_spectrum};
use super::{default_tolerances, uniform_grid, EigenError, EigenSolution};
use crate::io::{Cell, Table};
use crate::model::UnitDiffusionModel;
use crate::numeric::ode::{self, Control, Tolerances};
use crate::numeric::quad::trapezoid;
use crate::numeric::root::bisect_predicate;

const BRACKET_LIMIT: f64 = 1.152_921_504_606_847e18; // 2^60
/// `∫√q` beyond the turning point that justifies stitching.
const STITCH_MIN_GROWTH: f64 = 40.0;
/// `∫√q` at which the backward sweep starts; `e^{−800}` is far below any output.
const STITCH_DEPTH: f64 = 800.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LowerOptions {
    /// Truncation points tried first, increasing.
    pub schedule: Vec<f64>,
    /// Doubling continues up to this truncation while estimates still move.
    pub max_truncation: f64,
    /// Bisection stops once the bracket is below `rel_tol·max(1, |λ|)`.
    pub rel_tol: f64,
    pub max_bisections: usize,
    pub grid_points: usize,
}

impl Default for LowerOptions {
    fn default() -> Self {
        LowerOptions {
            schedule: vec![50.0, 100.0, 200.0, 400.0],
            max_truncation: 102_400.0,
            rel_tol: 1e-10,
            max_bisections: 80,
            grid_points: 8001,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationStep {
    pub x_max: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrincipalEigenvalue {
    pub value: f64,
    /// Right endpoint of the model, `+∞` on a half-line.
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub domain_right: f64,
    /// φ has no zero on `[0, x_max]` at `bracket[0]` and has one at `bracket[1]`.
    pub bracket: [f64; 2],
    pub x_max: f64,
    pub truncation_history: Vec<TruncationStep>,
    /// Successive estimates agreed to within ten bracket tolerances.
    pub converged: bool,
    pub integrable: bool,
    /// ∫φ_λ̲; `+∞` when not integrable.
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub mass: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub eigenfunction: EigenSolution,
}

/// λ̲ with the default truncation schedule and tolerances.
pub fn find_lambda_lower(model: &UnitDiffusionModel) -> Result<PrincipalEigenvalue, EigenError> {
    find_lambda_lower_with(model, &LowerOptions::default())
}

pub fn find_lambda_lower_with(model: &UnitDiffusionModel, opts: &LowerOptions) -> Result<PrincipalEigenvalue, EigenError> {
    if opts.schedule.is_empty() || opts.schedule.windows(2).any(|w| w[1] <= w[0]) || opts.schedule[0] <= 0.0 {
        return Err(EigenError::InvalidArgument("schedule must be positive and increasing".into()));
    }
    if model.right.is_finite() {
        return finite_interval(model, opts);
    }
    let tol = |l: f64| opts.rel_tol * l.abs().max(1.0);
    let mut history: Vec<TruncationStep> = Vec::new();
    let mut warnings = Vec::new();
    let mut bracket: Option<(f64, f64)> = None;
    let mut converged = false;
    let mut x = opts.schedule[0];
    let mut k = 0usize;
    loop {
        let samples = PotentialSamples::new(model, x);
        let mut failure: Option<EigenError> = None;
        let mut high = |lambda: f64| match zero_test(model, lambda, x, &samples) {
            Ok(t) => matches!(t, ZeroTest::Zero(_)),
            Err(e) => {
                failure.get_or_insert(e);
                false
            }
        };
        let (mut lo, mut hi) = match bracket {
            None => initial_bracket(&mut high)?,
            // A zero on [0, x] persists on any longer interval, so hi stays high.
            Some((lo, hi)) => {
                let (mut lo, mut hi, mut step) = (lo, hi, (hi - lo).max(tol(lo)));
                while high(lo) {
                    hi = lo;
                    lo -= step;
                    step *= 2.0;
                    if -lo > BRACKET_LIMIT {
                        return Err(EigenError::BracketFailure { floor: lo });
                    }
                }
                (lo, hi)
            }
        };
        let (l, h, _) = bisect_predicate(|m| !high(m), lo, hi, tol, opts.max_bisections);
        if let Some(e) = failure {
            return Err(e);
        }
        lo = l;
        hi = h;
        bracket = Some((lo, hi));
        let estimate = 0.5 * (lo + hi);
        if let Some(prev) = history.last() {
            if estimate > prev.lambda + 1e-9 {
                warnings.push(format!(
                    "estimate rose from {} to {} when the truncation grew to {x}",
                    prev.lambda, estimate
                ));
            }
        }
        history.push(TruncationStep { x_max: x, lambda: estimate });
        k += 1;
        let n = history.len();
        if k >= opts.schedule.len() && n >= 2 && (history[n - 1].lambda - history[n - 2].lambda).abs() < 10.0 * tol(estimate) {
            converged = true;
            break;
        }
        x = if k < opts.schedule.len() { opts.schedule[k] } else { 2.0 * x };
        if x > opts.max_truncation {
            break;
        }
    }
    if !converged {
        warnings.push("truncation schedule exhausted before successive estimates agreed".into());
    }
    let (lo, hi) = bracket.expect("at least one truncation ran");
    let value = 0.5 * (lo + hi);
    let x_max = history.last().unwrap().x_max;
    let eigenfunction = principal_eigenfunction(model, value, x_max, opts.grid_points)?;
    let integrable = tail_is_integrable(&eigenfunction);
    let mass = if integrable { eigenfunction.mass() } else { f64::INFINITY };
    Ok(PrincipalEigenvalue {
        value,
        domain_right: model.right,
        bracket: [lo, hi],
        x_max,
        truncation_history: history,
        converged,
        integrable,
        mass,
        warnings,
        eigenfunction,
    })
}

/// Double outward from 0 until the classification differs.
fn initial_bracket(high: &mut impl FnMut(f64) -> bool) -> Result<(f64, f64), EigenError> {
    let mut step = 1.0;
    if high(0.0) {
        let mut hi = 0.0;
        loop {
            let lo = -step;
            if !high(lo) {
                return Ok((lo, hi));
            }
            hi = lo;
            step *= 2.0;
            if step > BRACKET_LIMIT {
                return Err(EigenError::BracketFailure { floor: -step });
            }
        }
    } else {
        let mut lo = 0.0;
        loop {
            if high(step) {
                return Ok((lo, step));
            }
            lo = step;
            step *= 2.0;
            if step > BRACKET_LIMIT {
                return Err(EigenError::Unresolvable { index: 0 });
            }
        }
    }
}

fn finite_interval(model: &UnitDiffusionModel, opts: &LowerOptions) -> Result<PrincipalEigenvalue, EigenError> {
    let r = model.right;
    let value = truncated_spectrum(model, r, 1)?[0];
    let eigenfunction = truncated_eigenfunction(model, r, value, opts.grid_points)?;
    let mass = eigenfunction.mass();
    Ok(PrincipalEigenvalue {
        value,
        domain_right: r,
        bracket: [value, value],
        x_max: r,
        truncation_history: vec![TruncationStep { x_max: r, lambda: value }],
        converged: true,
        integrable: mass.is_finite() && mass > 0.0,
        mass,
        warnings: Vec::new(),
        eigenfunction,
    })
}

/// Abscissa in `[from, to]` where `∫_from √q⁺` reaches `depth`, or `to`.
fn growth_point(model: &UnitDiffusionModel, lambda: f64, from: f64, to: f64, depth: f64) -> Result<(f64, f64), EigenError> {
    let tol = Tolerances { rtol: 1e-8, atol: 1e-10, h_max: (to - from) / 100.0, ..Tolerances::default() };
    let rhs = |x: f64, _: &[f64; 1]| [model.potential(x, lambda).max(0.0).sqrt()];
    let out = ode::integrate(rhs, from, [0.0], to, &tol, |step| {
        if step.y_new[0] >= depth {
            Control::Stop(super::prufer::crossing(step, 0, depth))
        } else {
            Control::Continue
        }
    })?;
    Ok((out.x, out.y[0]))
}

/// φ at λ on `[0, min(x_max, X_end)]`, stitched across the last turning
/// point when the solution must decay beyond it.
pub fn principal_eigenfunction(model: &UnitDiffusionModel, lambda: f64, x_max: f64, n_grid: usize) -> Result<EigenSolution, EigenError> {
    let samples = PotentialSamples::new(model, x_max);
    let x_t = samples.last_nonpositive(lambda);
    let (x_end, growth) = if x_t < x_max {
        growth_point(model, lambda, x_t, x_max, STITCH_DEPTH)?
    } else {
        (x_max, 0.0)
    };
    if growth < STITCH_MIN_GROWTH {
        let grid = uniform_grid(x_max, n_grid);
        let r = run(model, lambda, &grid, Form::Adjoint, true)?;
        return Ok(assemble(lambda, grid, &r.samples, r.first_zero, r.wkb_from));
    }
    let grid = uniform_grid(x_end, n_grid);
    let x_m = if x_t > 0.0 { x_t } else { (x_end / 4.0).min(1.0) };

    let split = grid.partition_point(|&x| x <= x_m);
    let mut forward_grid = grid[..split].to_vec();
    let matches_grid = forward_grid.last() == Some(&x_m);
    if !matches_grid {
        forward_grid.push(x_m);
    }
    let fwd = run(model, lambda, &forward_grid, Form::Adjoint, false)?;
    let at_m = *fwd.samples.last().unwrap();
    let big_b_m = at_m.phi_log - at_m.psi_log;
    let ln_u_m = at_m.phi_m.abs().ln() + 0.5 * (at_m.phi_log + at_m.psi_log);
    let sign = at_m.phi_m.signum();

    // Backward sweep of [w, ln u, B] from x_end down to x_m.
    let rhs = |x: f64, s: &[f64; 3]| [model.potential(x, lambda) - s[0] * s[0], s[0], 2.0 * model.drift(x)];
    let w_end = -model.potential(x_end, lambda).max(0.0).sqrt();
    let tol = Tolerances { h_max: (x_end - x_m) / 1000.0, ..default_tolerances() };
    let mut back: Vec<[f64; 3]> = Vec::with_capacity(grid.len() - split);
    let mut idx = grid.len();
    let y_end = [w_end, 0.0, 0.0];
    while idx > split && grid[idx - 1] >= x_end {
        back.push(y_end);
        idx -= 1;
    }
    let out = ode::integrate(rhs, x_end, y_end, x_m, &tol, |step| {
        while idx > split && grid[idx - 1] >= step.x_new {
            back.push(step.eval(grid[idx - 1]));
            idx -= 1;
        }
        Control::Continue
    })?;
    let (ell_m, bb_m) = (out.y[1], out.y[2]);
    back.reverse();

    let mut all = fwd.samples;
    if !matches_grid {
        all.pop();
    }
    for (i, s) in back.iter().enumerate() {
        let x = grid[split + i];
        let ln_u = ln_u_m + s[1] - ell_m;
        let big_b = big_b_m + s[2] - bb_m;
        all.push(Sample {
            phi_m: sign,
            dphi_m: sign * (model.drift(x) + s[0]),
            phi_log: ln_u + 0.5 * big_b,
            psi_m: sign,
            psi_log: ln_u - 0.5 * big_b,
        });
    }
    Ok(assemble(lambda, grid, &all, fwd.first_zero, None))
}

/// Tail decision on `[X/20, X/2]`: φ is not integrable when `ln φ` is
/// nondecreasing there or falls more slowly than `x^{−1}`.
pub(crate) fn tail_is_integrable(sol: &EigenSolution) -> bool {
    let x_max = sol.x_max;
    let pts: Vec<(f64, f64)> = sol
        .grid
        .iter()
        .zip(&sol.ln_abs_phi)
        .filter(|(&x, _)| x >= x_max / 20.0 && x <= x_max / 2.0)
        .map(|(&x, &l)| (x.ln(), l))
        .collect();
    if pts.len() < 3 || pts.iter().any(|p| !p.1.is_finite()) {
        return false;
    }
    if pts.windows(2).all(|w| w[1].1 >= w[0].1) {
        return false;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    sxy / sxx <= -1.0
}

/// Normalized quasi-stationary density on the eigenfunction grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsdDensity {
    pub lambda: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl QsdDensity {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["x", "density"]);
        for (x, d) in self.grid.iter().zip(&self.density) {
            t.push(vec![Cell::from(*x), (*d).into()]);
        }
        t
    }

    /// Density at `x` by linear interpolation; 0 outside the grid.
    pub fn at(&self, x: f64) -> f64 {
        if x < self.grid[0] || x > *self.grid.last().unwrap() {
            0.0
        } else {
            crate::numeric::quad::interp(&self.grid, &self.density, x)
        }
    }
}

/// `φ_λ̲ / ∫φ_λ̲` on the grid of `sol`.
pub fn qsd_density(pe: &PrincipalEigenvalue, sol: &EigenSolution) -> Result<QsdDensity, EigenError> {
    if !pe.integrable {
        return Err(EigenError::NotNormalizable { lambda: pe.value });
    }
    let mass = trapezoid(&sol.grid, &sol.phi);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(EigenError::NotNormalizable { lambda: pe.value });
    }
    Ok(QsdDensity {
        lambda: pe.value,
        grid: sol.grid.clone(),
        density: sol.phi.iter().map(|p| p / mass).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit(drift: &str, kappa: &str, p0: f64) -> UnitDiffusionModel {
        UnitDiffusionModel::from_unit(drift, kappa, f64::INFINITY, p0, None).unwrap()
    }

    #[test]
    fn reflected_brownian_motion_has_zero_bottom() {
        let pe = find_lambda_lower(&unit("0", "0", 1.0)).unwrap();
        assert!(pe.value.abs() < 1e-8, "{}", pe.value);
        assert!(!pe.integrable);
        assert_eq!(pe.mass, f64::INFINITY);
        assert!(matches!(qsd_density(&pe, &pe.eigenfunction), Err(EigenError::NotNormalizable { .. })));
        // Truncated Neumann–Dirichlet bottom π²/(8X²) at every step.
        for step in &pe.truncation_history {
            let exact = PI * PI / (8.0 * step.x_max * step.x_max);
            assert!((step.lambda - exact).abs() < 1e-10 * exact.max(1.0), "{step:?}");
        }
    }

    #[test]
    fn absorbed_ou_bottom_and_density() {
        let m = unit("-x", "0", 0.0);
        let pe = find_lambda_lower(&m).unwrap();
        assert!((pe.value - 1.0).abs() < 1e-8, "{}", pe.value);
        assert!(pe.integrable && pe.converged);
        let d = qsd_density(&pe, &pe.eigenfunction).unwrap();
        let mut tv = 0.0;
        for i in 1..d.grid.len() {
            let (x0, x1) = (d.grid[i - 1], d.grid[i]);
            if x1 > 6.0 {
                break;
            }
            let f = |x: f64| (d.at(x) - 2.0 * x * (-x * x).exp()).abs();
            tv += 0.5 * (x1 - x0) * (f(x0) + f(x1));
        }
        assert!(0.5 * tv < 1e-5, "tv {tv}");
        assert!((trapezoid(&d.grid, &d.density) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_killing_equivariance() {
        let m = unit("-x", "0", 0.0);
        let base = find_lambda_lower(&m).unwrap().value;
        for c in [0.1, 0.7, 3.0] {
            let shifted = find_lambda_lower(&m.with_extra_killing(c)).unwrap().value;
            let tol = 1e-10 * shifted.abs().max(1.0);
            assert!((shifted - base - c).abs() <= 2.0 * tol + 2e-10, "c = {c}: {}", shifted - base);
        }
    }

    #[test]
    fn zero_structure_around_the_bottom() {
        let m = unit("-x", "0.2*x", 0.0);
        let pe = find_lambda_lower(&m).unwrap();
        let t = 1e-10 * pe.value.abs().max(1.0);
        let x = pe.x_max;
        let samples = PotentialSamples::new(&m, x);
        assert_eq!(zero_test(&m, pe.value - 10.0 * t, x, &samples).unwrap(), ZeroTest::NoZero);
        assert!(matches!(zero_test(&m, pe.value + 1e-6, x, &samples).unwrap(), ZeroTest::Zero(_)));
        let history: Vec<f64> = pe.truncation_history.iter().map(|s| s.lambda).collect();
        assert!(history.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{history:?}");
    }

    #[test]
    fn dirichlet_interval_density_is_half_sine() {
        let m = UnitDiffusionModel::from_unit("0", "0", PI, 0.0, Some(0.0)).unwrap();
        let pe = find_lambda_lower(&m).unwrap();
        assert!((pe.value - 0.5).abs() < 1e-10);
        let d = qsd_density(&pe, &pe.eigenfunction).unwrap();
        for (x, p) in d.grid.iter().zip(&d.density) {
            assert!((p - 0.5 * x.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn stitched_eigenfunction_decays_like_oracle() {
        // λ̲ = 1 with φ = e^{B}ψ = 2x e^{−x²}: compare logs far into the tail.
        let m = unit("-x", "0", 0.0);
        let sol = principal_eigenfunction(&m, 1.0, 50.0, 8001).unwrap();
        assert!(sol.x_max < 50.0);
        for (x, l) in sol.grid.iter().zip(&sol.ln_abs_phi).skip(1) {
            let exact = (2.0 * x).ln() - x * x;
            assert!((l - exact).abs() < 1e-6 * exact.abs().max(1.0), "x = {x}: {l} vs {exact}");
        }
        assert!(tail_is_integrable(&sol));
    }
}
