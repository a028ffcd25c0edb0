//! Four-stage L-stable Rosenbrock method of order 4 with an embedded
//! third-order error estimate (Shampine's parameter set), for autonomous
//! systems whose Jacobian is cheap.
//!
//! Used where explicit Runge–Kutta steps are limited by stability rather
//! than accuracy, e.g. logarithms of integrals whose integrands grow like
//! `exp(y⁴)`.

use super::ode::{OdeError, Tolerances};

const GAM: f64 = 0.5;
const A21: f64 = 2.0;
const A31: f64 = 48.0 / 25.0;
const A32: f64 = 6.0 / 25.0;
const C21: f64 = -8.0;
const C31: f64 = 372.0 / 25.0;
const C32: f64 = 12.0 / 5.0;
const C41: f64 = -112.0 / 125.0;
const C42: f64 = -54.0 / 125.0;
const C43: f64 = -2.0 / 5.0;
const B1: f64 = 19.0 / 9.0;
const B2: f64 = 0.5;
const B3: f64 = 25.0 / 108.0;
const B4: f64 = 125.0 / 108.0;
const E1: f64 = 17.0 / 54.0;
const E2: f64 = 7.0 / 36.0;
const E3: f64 = 0.0;
const E4: f64 = 125.0 / 108.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffOutcome<const N: usize> {
    pub y: [f64; N],
    pub steps: usize,
    pub rejected: usize,
}

/// Solve `A z = rhs` by Gaussian elimination with partial pivoting.
fn solve<const N: usize>(mut a: [[f64; N]; N], mut rhs: [f64; N]) -> [f64; N] {
    for col in 0..N {
        let pivot = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        let d = a[col][col];
        for row in col + 1..N {
            let m = a[row][col] / d;
            if m != 0.0 {
                for k in col..N {
                    a[row][k] -= m * a[col][k];
                }
                rhs[row] -= m * rhs[col];
            }
        }
    }
    let mut z = [0.0; N];
    for row in (0..N).rev() {
        let mut s = rhs[row];
        for k in row + 1..N {
            s -= a[row][k] * z[k];
        }
        z[row] = s / a[row][row];
    }
    z
}

/// Integrate `y′ = f(y)` over a parameter length `span > 0` from `y0`.
///
/// `jac(y)` returns `∂f_i/∂y_j` as `[i][j]`. Only `rtol`, `atol`, `h_max`
/// and `max_steps` of `tol` are used.
pub fn rosenbrock4<const N: usize, F, J>(f: F, jac: J, y0: [f64; N], span: f64, tol: &Tolerances) -> Result<StiffOutcome<N>, OdeError>
where
    F: Fn(&[f64; N]) -> [f64; N],
    J: Fn(&[f64; N]) -> [[f64; N]; N],
{
    let mut y = y0;
    let mut s = 0.0;
    let mut h = (span * 1e-3).min(tol.h_max);
    let (mut steps, mut rejected) = (0usize, 0usize);
    while s < span {
        if steps + rejected >= tol.max_steps {
            return Err(OdeError::TooManySteps { x: s });
        }
        let last = s + h >= span;
        if last {
            h = span - s;
        }
        if h <= span * 1e-15 {
            return Err(OdeError::StepUnderflow { x: s });
        }
        let jm = jac(&y);
        let mut w = [[0.0; N]; N];
        for i in 0..N {
            for j in 0..N {
                w[i][j] = -jm[i][j];
            }
            w[i][i] += 1.0 / (GAM * h);
        }
        let f0 = f(&y);
        let g1 = solve(w, f0);
        let stage = |c: &[(f64, &[f64; N])]| {
            let mut out = y;
            for (coef, g) in c {
                for i in 0..N {
                    out[i] += coef * g[i];
                }
            }
            out
        };
        let f1 = f(&stage(&[(A21, &g1)]));
        let mut r = f1;
        for i in 0..N {
            r[i] += C21 * g1[i] / h;
        }
        let g2 = solve(w, r);
        let f2 = f(&stage(&[(A31, &g1), (A32, &g2)]));
        let mut r = f2;
        for i in 0..N {
            r[i] += (C31 * g1[i] + C32 * g2[i]) / h;
        }
        let g3 = solve(w, r);
        let mut r = f2;
        for i in 0..N {
            r[i] += (C41 * g1[i] + C42 * g2[i] + C43 * g3[i]) / h;
        }
        let g4 = solve(w, r);
        let y_new = stage(&[(B1, &g1), (B2, &g2), (B3, &g3), (B4, &g4)]);
        let mut err = 0.0f64;
        for i in 0..N {
            let sc = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            let e = (E1 * g1[i] + E2 * g2[i] + E3 * g3[i] + E4 * g4[i]) / sc;
            err = err.max(e.abs());
        }
        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            rejected += 1;
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            y = y_new;
            s = if last { span } else { s + h };
            steps += 1;
        } else {
            rejected += 1;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.25)).clamp(0.2, 5.0) };
        h = (h * factor).min(tol.h_max);
    }
    Ok(StiffOutcome { y, steps, rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_stiff_decay_tracks_forcing() {
        // y′ = −1e6 (y − cos t), t′ = 1: y stays within 1e−6 of cos t.
        let f = |s: &[f64; 2]| [-1e6 * (s[0] - s[1].cos()), 1.0];
        let j = |s: &[f64; 2]| [[-1e6, -1e6 * s[1].sin()], [0.0, 0.0]];
        let tol = Tolerances { rtol: 1e-8, atol: 1e-10, ..Tolerances::default() };
        let out = rosenbrock4(f, j, [1.0, 0.0], 2.0, &tol).unwrap();
        assert!((out.y[0] - 2f64.cos()).abs() < 1e-5);
        assert!(out.steps < 5_000, "{out:?}");
    }

    #[test]
    fn fourth_order_convergence() {
        // y′ = −y² + t′-coupled forcing; halving a fixed step should cut the error ~16×.
        let f = |s: &[f64; 2]| [-s[0] * s[0] + s[1].cos(), 1.0];
        let j = |s: &[f64; 2]| [[-2.0 * s[0], -s[1].sin()], [0.0, 0.0]];
        let reference = rosenbrock4(f, j, [1.0, 0.0], 1.0, &Tolerances { rtol: 1e-14, atol: 1e-14, ..Tolerances::default() }).unwrap().y[0];
        let fixed = |h: f64| {
            let tol = Tolerances { rtol: 1e3, atol: 1e3, h_max: h, max_steps: 1_000_000 };
            rosenbrock4(f, j, [1.0, 0.0], 1.0, &tol).unwrap().y[0]
        };
        let e1 = (fixed(0.1) - reference).abs();
        let e2 = (fixed(0.05) - reference).abs();
        let order = (e1 / e2).log2();
        assert!(order > 3.5 && order < 4.6, "observed order {order}");
    }

    #[test]
    fn exponential_growth() {
        let out = rosenbrock4(|s: &[f64; 1]| [s[0]], |_| [[1.0]], [1.0], 1.0, &Tolerances { rtol: 1e-10, atol: 1e-12, ..Tolerances::default() }).unwrap();
        assert!((out.y[0] - 1f64.exp()).abs() < 1e-7);
    }
}
