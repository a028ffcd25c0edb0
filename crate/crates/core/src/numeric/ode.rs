//! Dormand–Prince 5(4) with dense output and a step observer.
//!
//! The observer sees every accepted step together with its continuous
//! interpolant and may stop the integration or replace the state (used for
//! overflow rescaling and for switching representations mid-flight).

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|; `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            rtol: 1e-10,
            atol: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at x = {x}")]
    StepUnderflow { x: f64 },
    #[error("step budget exhausted at x = {x}")]
    TooManySteps { x: f64 },
    #[error("non-finite state at x = {x}")]
    NonFinite { x: f64 },
}

/// What the observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control<const N: usize> {
    Continue,
    /// Stop at the given abscissa, which must lie within the step just taken.
    Stop(f64),
    /// Continue from `x_new` with this state instead of the computed one.
    Reset([f64; N]),
}

/// One accepted step with its continuous extension.
pub struct Step<const N: usize> {
    pub x_old: f64,
    pub x_new: f64,
    pub y_old: [f64; N],
    pub y_new: [f64; N],
    h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> Step<N> {
    /// Fifth-order accurate interpolant on `[x_old, x_new]`.
    pub fn eval(&self, x: f64) -> [f64; N] {
        let theta = (x - self.x_old) / self.h;
        let theta1 = 1.0 - theta;
        let r = &self.rcont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r[0][i]
                + theta * (r[1][i] + theta1 * (r[2][i] + theta * (r[3][i] + theta1 * r[4][i])));
        }
        out
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = if self.h > 0.0 {
            (self.x_old, self.x_new)
        } else {
            (self.x_new, self.x_old)
        };
        x >= lo && x <= hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome<const N: usize> {
    pub x: f64,
    pub y: [f64; N],
    pub stopped: bool,
    pub steps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

fn initial_step<const N: usize, F>(f: &F, x0: f64, y0: &[f64; N], f0: &[f64; N], dir: f64, tol: &Tolerances) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = tol.atol + tol.rtol * y0[i].abs();
        dnf += (f0[i] / sk).powi(2);
        dny += (y0[i] / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(tol.h_max);
    let y1 = axpy(y0, dir * h, &[(1.0, f0)]);
    let f1 = f(x0 + dir * h, &y1);
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = tol.atol + tol.rtol * y0[i].abs();
        der2 += ((f1[i] - f0[i]) / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    (100.0 * h).min(h1).min(tol.h_max)
}

/// Integrate `y' = f(x, y)` from `x0` to `x_end` (either direction).
///
/// The observer runs after every accepted step, including the last one.
pub fn integrate<const N: usize, F, O>(
    f: F,
    x0: f64,
    y0: [f64; N],
    x_end: f64,
    tol: &Tolerances,
    mut observer: O,
) -> Result<Outcome<N>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    O: FnMut(&Step<N>) -> Control<N>,
{
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let mut x = x0;
    let mut y = y0;
    if x == x_end {
        return Ok(Outcome { x, y, stopped: false, steps: 0 });
    }
    let mut k1 = f(x, &y);
    let mut h = initial_step(&f, x, &y, &k1, dir, tol);
    let mut steps = 0usize;
    let mut reject_streak = false;
    loop {
        if steps >= tol.max_steps {
            return Err(OdeError::TooManySteps { x });
        }
        let remaining = (x_end - x) * dir;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= f64::EPSILON * x.abs().max(1.0) * 4.0 && !last {
            return Err(OdeError::StepUnderflow { x });
        }
        let hs = dir * h;
        let k2 = f(x + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = f(x + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(x + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            x + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            x + hs,
            &axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let x_new = if last { x_end } else { x + hs };
        let k7 = f(x_new, &y_new);
        let mut err = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = tol.atol + tol.rtol * y[i].abs().max(y_new[i].abs());
            err += (e / sk).powi(2);
            finite &= y_new[i].is_finite();
        }
        let err = (err / N as f64).sqrt();
        steps += 1;
        if !finite || !err.is_finite() {
            h *= 0.2;
            reject_streak = true;
            if !finite && h < 1e-300 {
                return Err(OdeError::NonFinite { x });
            }
            continue;
        }
        if err <= 1.0 {
            let mut rcont = [[0.0; N]; 5];
            for i in 0..N {
                let dy = y_new[i] - y[i];
                let bspl = hs * k1[i] - dy;
                rcont[0][i] = y[i];
                rcont[1][i] = dy;
                rcont[2][i] = bspl;
                rcont[3][i] = dy - hs * k7[i] - bspl;
                rcont[4][i] = hs
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = Step { x_old: x, x_new, y_old: y, y_new, h: hs, rcont };
            let control = observer(&step);
            x = x_new;
            y = y_new;
            k1 = k7;
            match control {
                Control::Continue => {}
                Control::Stop(at) => {
                    let ys = step.eval(at);
                    return Ok(Outcome { x: at, y: ys, stopped: true, steps });
                }
                Control::Reset(state) => {
                    y = state;
                    k1 = f(x, &y);
                }
            }
            if last {
                return Ok(Outcome { x, y, stopped: false, steps });
            }
            let mut fac = 0.9 * err.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if reject_streak {
                fac = fac.min(1.0);
            }
            reject_streak = false;
            h = (h * fac).min(tol.h_max);
        } else {
            let fac = (0.9 * err.powf(-0.2)).max(0.2);
            h *= fac;
            reject_streak = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let tol = Tolerances::default();
        let out = integrate(harmonic, 0.0, [0.0, 1.0], 20.0, &tol, |_| Control::Continue).unwrap();
        assert!((out.y[0] - 20f64.sin()).abs() < 1e-8);
        assert!((out.y[1] - 20f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn backward_integration() {
        let tol = Tolerances::default();
        let out = integrate(|_, y: &[f64; 1]| [y[0]], 1.0, [1.0], 0.0, &tol, |_| Control::Continue).unwrap();
        assert!((out.y[0] - (-1f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn dense_output_is_accurate_inside_steps() {
        let tol = Tolerances::default();
        let mut worst: f64 = 0.0;
        integrate(harmonic, 0.0, [0.0, 1.0], 10.0, &tol, |s| {
            let xm = 0.5 * (s.x_old + s.x_new);
            worst = worst.max((s.eval(xm)[0] - xm.sin()).abs());
            Control::Continue
        })
        .unwrap();
        assert!(worst < 1e-8, "worst dense error {worst}");
    }

    #[test]
    fn stop_returns_interpolated_state() {
        let tol = Tolerances::default();
        let out = integrate(harmonic, 0.0, [0.0, 1.0], 10.0, &tol, |s| {
            if s.y_old[0] >= 0.0 && s.y_new[0] < 0.0 {
                Control::Stop(bisect_sign(s, 0))
            } else {
                Control::Continue
            }
        })
        .unwrap();
        assert!(out.stopped);
        assert!((out.x - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn reset_rescales_linear_state() {
        let tol = Tolerances::default();
        let mut scale_log2 = 0i32;
        let out = integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], 400.0, &tol, |s| {
            if s.y_new[0] > 1e50 {
                scale_log2 += 100;
                Control::Reset([s.y_new[0] * 2f64.powi(-100)])
            } else {
                Control::Continue
            }
        })
        .unwrap();
        let log_value = out.y[0].ln() + scale_log2 as f64 * std::f64::consts::LN_2;
        assert!((log_value - 400.0).abs() < 1e-7);
    }

    fn bisect_sign<const N: usize>(s: &Step<N>, i: usize) -> f64 {
        let (mut a, mut b) = (s.x_old, s.x_new);
        let sa = s.eval(a)[i].signum();
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if s.eval(m)[i].signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}
