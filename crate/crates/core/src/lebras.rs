//! Closed-form solution for geometric diffusion `dX = σX dW + bX dt` on
//! `(1, ∞)`, reflected at 1 and killed at rate `kx`.
//!
//! With `Y = ln X / σ` this is Brownian motion with drift `b/σ − σ/2`
//! killed at rate `k e^{σy}`. The principal eigenfunction in the original
//! coordinates is `ξ(x) = x^{b/σ² − 3/2} K_{iỹ}(√(8kx)/σ)`, and ỹ is fixed
//! by the reflecting condition at `x = 1`.

use serde::Serialize;
use thiserror::Error;

use crate::io::{Cell, Table};
use crate::model::{ModelError, UnitDiffusionModel};
use crate::numeric::{geomspace, quad, root};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LeBrasError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("K_iy({x}) quadrature did not converge for y = {y}")]
    Quadrature { y: f64, x: f64 },
    #[error("boundary functional has no sign change for y below {cap} (value {last} at the cap)")]
    NoCrossing { cap: f64, last: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LeBrasParams {
    pub sigma: f64,
    pub b: f64,
    pub k: f64,
}

impl LeBrasParams {
    pub fn new(sigma: f64, b: f64, k: f64) -> Result<Self, LeBrasError> {
        if !(sigma > 0.0 && sigma.is_finite()) || !(k > 0.0 && k.is_finite()) || !b.is_finite() {
            return Err(LeBrasError::InvalidParams(format!("sigma = {sigma}, k = {k} must be positive, b = {b} finite")));
        }
        if b <= 0.5 * sigma * sigma {
            return Err(LeBrasError::InvalidParams(format!("b = {b} must exceed sigma^2/2 = {}", 0.5 * sigma * sigma)));
        }
        Ok(LeBrasParams { sigma, b, k })
    }

    /// Bessel argument at the reflecting point, `√(8k)/σ`.
    pub fn x0(&self) -> f64 {
        (8.0 * self.k).sqrt() / self.sigma
    }

    /// Drift of the unit form, `b/σ − σ/2`.
    pub fn drift_tilde(&self) -> f64 {
        self.b / self.sigma - 0.5 * self.sigma
    }

    /// `2b/σ² − 1`: the reflecting condition reads `x0 K′ = c K` with this `c`.
    pub fn flux_coefficient(&self) -> f64 {
        2.0 * self.b / (self.sigma * self.sigma) - 1.0
    }

    /// The unit-diffusion model on `(0, ∞)` with reflection at 0.
    pub fn unit_model(&self) -> Result<UnitDiffusionModel, LeBrasError> {
        let drift = format!("{:e}", self.drift_tilde());
        let kappa = format!("{:e}*exp({:e}*x)", self.k, self.sigma);
        Ok(UnitDiffusionModel::from_unit(&drift, &kappa, f64::INFINITY, 1.0, None)?)
    }
}

/// `K_{iy}(x)` and its x-derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BesselEval {
    pub order_y: f64,
    pub x: f64,
    pub k_value: f64,
    pub kprime_value: f64,
    /// Larger of the two absolute error estimates.
    pub quadrature_error: f64,
    /// `e^{x} K_{iy}(x)`, which stays representable for large `x`.
    pub scaled_k: f64,
}

const QUAD_BUDGET: usize = 400_000;
/// Cut-off: the scaled integrand is below `e^{−745}` beyond T.
const TAIL_EXPONENT: f64 = 745.0;

/// Quadrature of `∫₀^∞ e^{−x cosh t} cos(yt) dt` and of the derivative
/// integral, split at the zeros of `cos(yt)`.
pub fn bessel_k_imag(y: f64, x: f64) -> Result<BesselEval, LeBrasError> {
    bessel_k_imag_with(y, x, QUAD_BUDGET)
}

pub fn bessel_k_imag_with(y: f64, x: f64, budget: usize) -> Result<BesselEval, LeBrasError> {
    if !(x > 0.0 && x.is_finite()) || !y.is_finite() {
        return Err(LeBrasError::InvalidParams(format!("need x > 0 and finite y, got x = {x}, y = {y}")));
    }
    let y = y.abs();
    // Smallest T with x(cosh T − 1) − ln cosh T beyond the cut-off.
    let excess = |t: f64| x * (t.cosh() - 1.0) - t.cosh().ln() - TAIL_EXPONENT;
    let mut t_hi = 1.0;
    while excess(t_hi) < 0.0 {
        t_hi *= 2.0;
    }
    let t_end = root::bisect(excess, 0.0, t_hi, 1e-8, 200).unwrap_or(t_hi);
    let mut breaks = vec![0.0];
    if y > 0.0 {
        let period = std::f64::consts::PI / y;
        let n = (t_end / period - 0.5).floor().max(-1.0) as i64;
        if n > (budget / 60) as i64 {
            return Err(LeBrasError::Quadrature { y, x });
        }
        breaks.extend((0..=n).map(|j| (j as f64 + 0.5) * period).filter(|&t| t > 0.0 && t < t_end));
    }
    breaks.push(t_end);
    let k0 = quad::integrate_panels(|t| (-x * (t.cosh() - 1.0)).exp() * (y * t).cos(), &breaks, 1e-16, 1e-13, budget);
    let k1 = quad::integrate_panels(|t| (-x * (t.cosh() - 1.0)).exp() * t.cosh() * (y * t).cos(), &breaks, 1e-16, 1e-13, budget);
    if !(k0.converged && k1.converged) {
        return Err(LeBrasError::Quadrature { y, x });
    }
    let scale = (-x).exp();
    Ok(BesselEval {
        order_y: y,
        x,
        k_value: scale * k0.value,
        kprime_value: -scale * k1.value,
        quadrature_error: scale * k0.error.max(k1.error),
        scaled_k: k0.value,
    })
}

const SCAN_STEP: f64 = 0.05;
const Y_CAP: f64 = 100.0;

/// ỹ: the first `y > 0` where `x0 K′_{iy}(x0) − c K_{iy}(x0)` changes sign.
/// `c = 2b/σ² − 1` is the reflecting condition; `c = 0` gives the first
/// zero of `K′_{iy}(x0)` instead.
pub fn find_y_tilde(x0: f64, flux: f64) -> Result<f64, LeBrasError> {
    let functional = |y: f64| -> Result<f64, LeBrasError> {
        let e = bessel_k_imag(y, x0)?;
        Ok(x0 * e.kprime_value - flux * e.k_value)
    };
    let g0 = functional(0.0)?;
    let mut lo = 0.0;
    let mut last = g0;
    loop {
        let hi = lo + SCAN_STEP;
        if hi > Y_CAP {
            return Err(LeBrasError::NoCrossing { cap: Y_CAP, last });
        }
        let g = functional(hi)?;
        if g == 0.0 {
            return Ok(hi);
        }
        if g.signum() != g0.signum() {
            let mut failure = None;
            let root = root::bisect(
                |y| functional(y).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    f64::NAN
                }),
                lo,
                hi,
                1e-10 * hi,
                200,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            return root.ok_or(LeBrasError::NoCrossing { cap: hi, last: g });
        }
        lo = hi;
        last = g;
    }
}

/// Which boundary functional at the reflecting point fixes ỹ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum BoundaryForm {
    /// Zero probability flux at `x = 1`: `x0 K′ = (2b/σ² − 1) K`.
    #[default]
    ZeroFlux,
    /// `K′_{iy}(x0) = 0`, kept for comparison runs.
    DerivativeZero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeBrasSolution {
    pub params: LeBrasParams,
    pub boundary: BoundaryForm,
    pub x0: f64,
    pub y_tilde: f64,
    pub lambda_lower: f64,
    /// `K_{iỹ} > 0` on a geometric grid of `[x0, 1000·x0]`.
    pub positive_beyond_x0: bool,
    /// Normalized ξ on a geometric grid of `[1, x_max]`.
    pub x_grid: Vec<f64>,
    pub xi: Vec<f64>,
    /// The same density in unit coordinates, `y = ln x / σ`.
    pub y_grid: Vec<f64>,
    pub phi: Vec<f64>,
}

impl LeBrasSolution {
    pub fn qsd_x_table(&self) -> Table {
        let mut t = Table::new(&["x", "density"]);
        for (x, d) in self.x_grid.iter().zip(&self.xi) {
            t.push(vec![Cell::from(*x), (*d).into()]);
        }
        t
    }

    pub fn qsd_y_table(&self) -> Table {
        let mut t = Table::new(&["y", "density"]);
        for (y, d) in self.y_grid.iter().zip(&self.phi) {
            t.push(vec![Cell::from(*y), (*d).into()]);
        }
        t
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma": self.params.sigma,
            "b": self.params.b,
            "k": self.params.k,
            "x0": self.x0,
            "y_tilde": self.y_tilde,
            "lambda_lower": self.lambda_lower,
            "boundary": self.boundary,
            "positive_beyond_x0": self.positive_beyond_x0,
        })
    }
}

const QSD_POINTS: usize = 4001;
/// The grid ends where the Bessel argument reaches this value.
const QSD_ARGUMENT_END: f64 = 80.0;

/// `λ̲ = (σ²/8)[(2b/σ² − 1)² + ỹ²]` and the QSD in both coordinates.
pub fn lebras_lambda_lower(p: &LeBrasParams, boundary: BoundaryForm) -> Result<LeBrasSolution, LeBrasError> {
    let x0 = p.x0();
    let flux = match boundary {
        BoundaryForm::ZeroFlux => p.flux_coefficient(),
        BoundaryForm::DerivativeZero => 0.0,
    };
    let y_tilde = find_y_tilde(x0, flux)?;
    let s2 = p.sigma * p.sigma;
    let lambda_lower = s2 / 8.0 * (p.flux_coefficient().powi(2) + y_tilde * y_tilde);

    let mut positive_beyond_x0 = true;
    for z in geomspace(x0, 1000.0 * x0, 200) {
        if bessel_k_imag(y_tilde, z)?.scaled_k <= 0.0 {
            positive_beyond_x0 = false;
            break;
        }
    }

    let x_max = (QSD_ARGUMENT_END * p.sigma).powi(2) / (8.0 * p.k);
    let x_grid = geomspace(1.0, x_max.max(10.0), QSD_POINTS);
    let raw = x_grid.iter().map(|&x| xi_unnormalized(p, y_tilde, x)).collect::<Result<Vec<_>, _>>()?;
    let mass = quad::trapezoid(&x_grid, &raw);
    let xi: Vec<f64> = raw.iter().map(|v| v / mass).collect();
    let y_grid: Vec<f64> = x_grid.iter().map(|x| x.ln() / p.sigma).collect();
    let phi = x_grid.iter().zip(&xi).map(|(x, v)| p.sigma * x * v).collect();
    Ok(LeBrasSolution { params: *p, boundary, x0, y_tilde, lambda_lower, positive_beyond_x0, x_grid, xi, y_grid, phi })
}

/// `x^{b/σ² − 3/2} K_{iỹ}(√(8kx)/σ)`.
pub fn xi_unnormalized(p: &LeBrasParams, y_tilde: f64, x: f64) -> Result<f64, LeBrasError> {
    let z = (8.0 * p.k * x).sqrt() / p.sigma;
    Ok(x.powf(p.b / (p.sigma * p.sigma) - 1.5) * bessel_k_imag(y_tilde, z)?.k_value)
}

/// `σ e^{σy} ξ(e^{σy})`, unnormalized: φ in unit coordinates.
pub fn phi_unnormalized(p: &LeBrasParams, y_tilde: f64, y: f64) -> Result<f64, LeBrasError> {
    let x = (p.sigma * y).exp();
    Ok(p.sigma * x * xi_unnormalized(p, y_tilde, x)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCheck {
    pub range: [f64; 2],
    /// max |ln ξ − E| / |E| with `E = (b/σ² − 2) ln x − √(8kx)/σ`.
    pub max_relative_deviation: f64,
    /// |ln ξ − A| at both ends of the range, with `A` the leading-order
    /// asymptote including the `x^{−1/4}` factor and constant.
    pub leading_abs_deviation: [f64; 2],
}

/// Compare `ln ξ` (unnormalized) with its large-x forms on `[x_lo, x_hi]`.
pub fn tail_check(p: &LeBrasParams, y_tilde: f64, x_lo: f64, x_hi: f64) -> Result<TailCheck, LeBrasError> {
    let s2 = p.sigma * p.sigma;
    let ln_xi = |x: f64| -> Result<f64, LeBrasError> {
        let z = (8.0 * p.k * x).sqrt() / p.sigma;
        let e = bessel_k_imag(y_tilde, z)?;
        Ok((p.b / s2 - 1.5) * x.ln() + e.scaled_k.ln() - z)
    };
    let leading = |x: f64| {
        let z = (8.0 * p.k * x).sqrt() / p.sigma;
        (p.b / s2 - 1.5) * x.ln() + 0.5 * (std::f64::consts::PI / (2.0 * z)).ln() - z
    };
    let mut worst = 0.0f64;
    for x in geomspace(x_lo, x_hi, 200) {
        let printed = (p.b / s2 - 2.0) * x.ln() - (8.0 * p.k * x / s2).sqrt();
        worst = worst.max(((ln_xi(x)? - printed) / printed).abs());
    }
    Ok(TailCheck {
        range: [x_lo, x_hi],
        max_relative_deviation: worst,
        leading_abs_deviation: [(ln_xi(x_lo)? - leading(x_lo)).abs(), (ln_xi(x_hi)? - leading(x_hi)).abs()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// K_0 from its power series, independent of the quadrature.
    fn k0_series(x: f64) -> f64 {
        let euler = 0.577_215_664_901_532_9;
        let q = 0.25 * x * x;
        let (mut term, mut i0, mut sum, mut h) = (1.0, 1.0, 0.0, 0.0);
        for k in 1..60 {
            term *= q / (k as f64 * k as f64);
            h += 1.0 / k as f64;
            i0 += term;
            sum += term * h;
        }
        -((0.5 * x).ln() + euler) * i0 + sum
    }

    #[test]
    fn zero_order_matches_series() {
        for x in [0.5, 1.0, 3.0] {
            let e = bessel_k_imag(0.0, x).unwrap();
            assert!((e.k_value - k0_series(x)).abs() < 1e-10 * k0_series(x), "x = {x}");
        }
        let e = bessel_k_imag(0.0, 1.0).unwrap();
        assert!((e.k_value - 0.421_024_438_240_708_33).abs() < 1e-13);
        assert!((e.kprime_value + 0.601_907_230_197_234_57).abs() < 1e-13);
    }

    #[test]
    fn imaginary_orders_match_reference_values() {
        // Reference values from 30-digit arithmetic.
        let cases = [
            (1.5, 2.0, 0.070_695_017_157_808_28, -0.071_875_106_256_007_68),
            (4.0, 8f64.sqrt(), 0.002_663_031_342_065_371_4, -0.000_144_785_657_957_643_69),
            (0.3, 10.0, 1.770_383_657_968_536_7e-5, -1.856_154_485_926_602_9e-5),
        ];
        for (y, x, k, kp) in cases {
            let e = bessel_k_imag(y, x).unwrap();
            assert!((e.k_value - k).abs() < 1e-12 * k.abs().max(1e-3), "K_i{y}({x}) = {}", e.k_value);
            assert!((e.kprime_value - kp).abs() < 1e-12 * kp.abs().max(1e-3), "K'_i{y}({x}) = {}", e.kprime_value);
        }
    }

    #[test]
    fn even_in_order() {
        let a = bessel_k_imag(2.3, 1.7).unwrap();
        let b = bessel_k_imag(-2.3, 1.7).unwrap();
        assert_eq!(a.k_value, b.k_value);
        assert_eq!(a.kprime_value, b.kprime_value);
    }

    #[test]
    fn large_argument_asymptote() {
        for y in [0.0, 1.0, 4.0] {
            let x = 400.0;
            let e = bessel_k_imag(y, x).unwrap();
            let ratio = e.scaled_k * (2.0 * x / std::f64::consts::PI).sqrt();
            assert!((ratio - 1.0).abs() < (1.0 + 4.0 * y * y) / (8.0 * x) * 1.1 + 1e-6, "y = {y}: {ratio}");
        }
    }

    #[test]
    fn doubling_the_budget_stays_within_error_estimate() {
        for (y, x) in [(4.37, 2.83), (10.0, 1.0), (0.5, 30.0)] {
            let a = bessel_k_imag_with(y, x, 100_000).unwrap();
            let b = bessel_k_imag_with(y, x, 200_000).unwrap();
            assert!((a.k_value - b.k_value).abs() <= 10.0 * a.quadrature_error.max(1e-300) + 1e-17);
        }
    }

    #[test]
    fn y_tilde_for_unit_parameters() {
        let p = LeBrasParams::new(1.0, 1.0, 1.0).unwrap();
        let s = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
        assert!((s.y_tilde - 4.372_958_393_141_631).abs() < 1e-8, "{}", s.y_tilde);
        assert!((s.lambda_lower - 2.515_345_638_518_479).abs() < 1e-8);
        assert!(s.positive_beyond_x0);
        let d = lebras_lambda_lower(&p, BoundaryForm::DerivativeZero).unwrap();
        assert!((d.y_tilde - 4.059_596_382_540_954).abs() < 1e-8, "{}", d.y_tilde);
    }

    #[test]
    fn functional_brackets_y_tilde() {
        let x0 = 8f64.sqrt();
        let yt = find_y_tilde(x0, 1.0).unwrap();
        let g = |y: f64| {
            let e = bessel_k_imag(y, x0).unwrap();
            x0 * e.kprime_value - e.k_value
        };
        assert!(g(yt - 1e-4) < 0.0 && g(yt + 1e-4) > 0.0);
        let yt0 = find_y_tilde(x0, 0.0).unwrap();
        assert!(bessel_k_imag(yt0 - 1e-4, x0).unwrap().kprime_value < 0.0);
        assert!(bessel_k_imag(yt0 + 1e-4, x0).unwrap().kprime_value > 0.0);
    }

    #[test]
    fn y_tilde_nondecreasing_in_x0() {
        let mut prev = 0.0;
        for x0 in [0.5, 1.0, 2.0, 3.0, 5.0, 8.0] {
            let y = find_y_tilde(x0, 0.0).unwrap();
            assert!(y >= prev, "x0 = {x0}: {y} < {prev}");
            prev = y;
        }
    }

    #[test]
    fn lambda_exceeds_drift_floor_and_density_is_positive() {
        for (s, b, k) in [(1.0, 1.0, 1.0), (0.5, 0.4, 0.3), (1.0, 1.5, 2.0)] {
            let p = LeBrasParams::new(s, b, k).unwrap();
            let sol = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
            assert!(sol.lambda_lower > 0.5 * p.drift_tilde().powi(2));
            assert!(sol.xi.iter().all(|&v| v > 0.0));
            let mass = quad::trapezoid(&sol.y_grid, &sol.phi);
            assert!((mass - 1.0).abs() < 1e-3, "mass in y = {mass}");
        }
    }

    #[test]
    fn second_parameter_set_matches_reference() {
        let p = LeBrasParams::new(1.0, 1.5, 2.0).unwrap();
        let s = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
        assert!((s.y_tilde - 5.884_003_334_567_967).abs() < 1e-8, "{}", s.y_tilde);
        assert!((s.lambda_lower - 4.827_686_905_150_870).abs() < 1e-8);
    }

    #[test]
    fn leading_asymptote_error_shrinks() {
        let p = LeBrasParams::new(1.0, 1.0, 1.0).unwrap();
        let yt = find_y_tilde(p.x0(), p.flux_coefficient()).unwrap();
        let t = tail_check(&p, yt, 50.0, 500.0).unwrap();
        assert!(t.leading_abs_deviation[1] < t.leading_abs_deviation[0]);
        assert!(t.leading_abs_deviation[1] < 0.2);
    }

    #[test]
    fn rejects_subcritical_drift() {
        assert!(LeBrasParams::new(1.0, 0.4, 1.0).is_err());
        assert!(LeBrasParams::new(1.0, 1.0, 0.0).is_err());
    }
}
