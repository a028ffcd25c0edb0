//! Unit-diffusion form: `dY = b̃(Y)dt + dW`, killed at rate `κ̃(Y)`, on `(0, r̃)`.

use serde::Serialize;

use super::{DiffusionSpec, ModelError};
use crate::expr::Expr;
use crate::numeric::ode::{self, Control, Tolerances};
use crate::numeric::quad;

/// How the drift correction for a non-constant σ is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum DriftForm {
    /// `b/σ − σ′/2`, the form Itô's formula gives.
    #[default]
    Ito,
    /// `b/σ − σ′`, kept only for comparison runs.
    Uncorrected,
}

/// Inverse coordinate map `y ↦ x = F⁻¹(y)`, where `F(x) = ∫_l^x du/σ(u)`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoordMap {
    /// Constant σ = `scale`.
    Affine { left: f64, scale: f64 },
    /// σ(x) = `alpha + beta·x` with `beta ≠ 0`.
    Linear { left: f64, alpha: f64, beta: f64 },
    /// General σ: samples of `x(y)` solving `x′ = σ(x)`, with slopes, on a uniform `y` grid.
    Tabulated { step: f64, xs: Vec<f64>, slopes: Vec<f64> },
}

impl CoordMap {
    pub fn x(&self, y: f64) -> f64 {
        match self {
            CoordMap::Affine { left, scale } => left + scale * y,
            CoordMap::Linear { left, alpha, beta } => {
                let s_left = alpha + beta * left;
                (s_left * (beta * y).exp() - alpha) / beta
            }
            CoordMap::Tabulated { step, xs, slopes } => {
                let t = y / step;
                if !(t >= 0.0) || t > (xs.len() - 1) as f64 {
                    return f64::NAN;
                }
                let i = (t.floor() as usize).min(xs.len() - 2);
                hermite(xs[i], xs[i + 1], slopes[i] * step, slopes[i + 1] * step, t - i as f64)
            }
        }
    }

    pub fn y(&self, x: f64) -> f64 {
        match self {
            CoordMap::Affine { left, scale } => (x - left) / scale,
            CoordMap::Linear { left, alpha, beta } => ((alpha + beta * x) / (alpha + beta * left)).ln() / beta,
            CoordMap::Tabulated { step, xs, slopes } => {
                if x <= xs[0] {
                    return 0.0;
                }
                let n = xs.len();
                if x >= xs[n - 1] {
                    return if x == xs[n - 1] { (n - 1) as f64 * step } else { f64::NAN };
                }
                let i = xs.partition_point(|&v| v <= x) - 1;
                let (mut lo, mut hi) = (0.0, 1.0);
                let h = |t: f64| hermite(xs[i], xs[i + 1], slopes[i] * step, slopes[i + 1] * step, t);
                for _ in 0..200 {
                    let m = 0.5 * (lo + hi);
                    if h(m) < x {
                        lo = m;
                    } else {
                        hi = m;
                    }
                    if hi - lo < 1e-16 {
                        break;
                    }
                }
                (i as f64 + 0.5 * (lo + hi)) * step
            }
        }
    }
}

fn hermite(p0: f64, p1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
}

/// A diffusion with σ ≡ 1 on `(0, right)`, expressed through the original
/// coefficients and the coordinate map.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDiffusionModel {
    map: CoordMap,
    sigma: Expr,
    /// Drift in original coordinates, `b/σ − σ′/2` (or the uncorrected form).
    drift_x: Expr,
    drift_x_prime: Expr,
    kappa: Expr,
    /// When set to `R`, the model is viewed through `y ↦ R − y`.
    mirror: Option<f64>,
    pub right: f64,
    pub p0: f64,
    pub pr: Option<f64>,
    /// Image of the spec's reference point `x0`.
    pub reference: f64,
    pub drift_form: DriftForm,
}

/// Normalize with the Itô drift correction. `x0` is the reference point
/// reported as [`UnitDiffusionModel::reference`]; the left endpoint always
/// maps to 0.
pub fn to_unit_diffusion(spec: &DiffusionSpec, x0: Option<f64>) -> Result<UnitDiffusionModel, ModelError> {
    to_unit_diffusion_with(spec, x0, DriftForm::Ito)
}

pub fn to_unit_diffusion_with(
    spec: &DiffusionSpec,
    x0: Option<f64>,
    form: DriftForm,
) -> Result<UnitDiffusionModel, ModelError> {
    spec.validate()?;
    let sigma = spec.sigma.clone();
    let dsigma = sigma.derivative();
    let half = match form {
        DriftForm::Ito => 0.5,
        DriftForm::Uncorrected => 1.0,
    };
    let drift_x = Expr::Sub(
        Box::new(Expr::Div(Box::new(spec.drift.clone()), Box::new(sigma.clone()))),
        Box::new(Expr::Mul(Box::new(Expr::Const(half)), Box::new(dsigma.clone()))),
    )
    .simplify();
    let drift_x_prime = drift_x.derivative();

    let (map, right) = if let Some(s) = sigma.as_const() {
        (CoordMap::Affine { left: spec.left, scale: s }, (spec.right - spec.left) / s)
    } else if let Some(beta) = dsigma.as_const() {
        let alpha = sigma.eval(spec.left) - beta * spec.left;
        let map = CoordMap::Linear { left: spec.left, alpha, beta };
        let right = if spec.right.is_finite() { map.y(spec.right) } else if beta > 0.0 { f64::INFINITY } else { f64::NAN };
        (map, right)
    } else {
        tabulate(&sigma, spec.left, spec.right)?
    };
    if !(right > 0.0) {
        return Err(ModelError::Transform(format!("transformed right endpoint {right}")));
    }
    let s_left = sigma.eval(spec.left);
    if !(s_left > 0.0 && s_left.is_finite()) {
        return Err(ModelError::Transform(format!(
            "sigma({}) = {s_left}: the left endpoint does not map to a finite point",
            spec.left
        )));
    }
    let x_ref = x0.or(spec.x0);
    let reference = match x_ref {
        Some(x) => map.y(x),
        None => {
            if right.is_finite() {
                0.5 * right
            } else {
                1.0
            }
        }
    };
    if !(reference >= 0.0 && reference < right) {
        return Err(ModelError::Domain(format!("reference point maps to {reference}")));
    }
    Ok(UnitDiffusionModel {
        map,
        sigma,
        drift_x,
        drift_x_prime,
        kappa: spec.kappa.clone(),
        mirror: None,
        right,
        p0: spec.p0,
        pr: spec.pr,
        reference,
        drift_form: form,
    })
}

fn tabulate(sigma: &Expr, left: f64, right: f64) -> Result<(CoordMap, f64), ModelError> {
    const STEP: f64 = 1.0 / 64.0;
    const Y_CAP: f64 = 2000.0;
    let tol = Tolerances { h_max: STEP, ..Tolerances::default() };
    let mut xs = vec![left];
    let mut next = 1usize;
    let mut end: Option<f64> = None;
    let target = right.min(1e300);
    let f = |_: f64, s: &[f64; 1]| [sigma.eval(s[0])];
    let result = ode::integrate(f, 0.0, [left], Y_CAP, &tol, |step| {
        let mut done = false;
        while (next as f64) * STEP <= step.x_new {
            let x = step.eval(next as f64 * STEP)[0];
            if !x.is_finite() {
                done = true;
                break;
            }
            xs.push(x);
            next += 1;
            if x >= target {
                done = true;
                break;
            }
        }
        if end.is_none() && step.y_new[0] >= target {
            let (mut a, mut b) = (step.x_old, step.x_new);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if step.eval(m)[0] < target {
                    a = m;
                } else {
                    b = m;
                }
            }
            end = Some(0.5 * (a + b));
        }
        if done {
            Control::Stop(step.x_new)
        } else {
            Control::Continue
        }
    })
    .map_err(|e| ModelError::Transform(e.to_string()))?;
    let slopes: Vec<f64> = xs.iter().map(|&x| sigma.eval(x)).collect();
    let r_tilde = match end {
        Some(y) => y,
        None if right.is_infinite() => f64::INFINITY,
        None => result.x,
    };
    Ok((CoordMap::Tabulated { step: STEP, xs, slopes }, r_tilde))
}

impl UnitDiffusionModel {
    /// Model given directly in unit form on `(0, right)`.
    pub fn from_unit(drift: &str, kappa: &str, right: f64, p0: f64, pr: Option<f64>) -> Result<Self, ModelError> {
        let spec = DiffusionSpec {
            sigma: Expr::Const(1.0),
            drift: Expr::parse(drift)?,
            kappa: Expr::parse(kappa)?,
            left: 0.0,
            right,
            p0,
            pr,
            x0: None,
        };
        to_unit_diffusion(&spec, None)
    }

    pub fn coord_map(&self) -> &CoordMap {
        &self.map
    }

    #[inline]
    fn orig(&self, y: f64) -> f64 {
        match self.mirror {
            Some(r) => self.map.x(r - y),
            None => self.map.x(y),
        }
    }

    /// b̃(y).
    #[inline]
    pub fn drift(&self, y: f64) -> f64 {
        let v = self.drift_x.eval(self.orig(y));
        if self.mirror.is_some() {
            -v
        } else {
            v
        }
    }

    /// b̃′(y) = σ(x)·(d/dx)[drift in x].
    #[inline]
    pub fn drift_prime(&self, y: f64) -> f64 {
        let x = self.orig(y);
        self.sigma.eval(x) * self.drift_x_prime.eval(x)
    }

    /// κ̃(y).
    #[inline]
    pub fn kappa(&self, y: f64) -> f64 {
        self.kappa.eval(self.orig(y))
    }

    /// Potential of the Schrödinger form, `b̃² + b̃′ + 2κ̃ − 2λ`.
    #[inline]
    pub fn potential(&self, y: f64, lambda: f64) -> f64 {
        let x = self.orig(y);
        let b = self.drift_x.eval(x);
        b * b + self.sigma.eval(x) * self.drift_x_prime.eval(x) + 2.0 * self.kappa.eval(x) - 2.0 * lambda
    }

    /// b̃ at the left endpoint, taken as a right limit.
    pub fn drift_at_zero(&self) -> Option<f64> {
        [0.0, 1e-12, 1e-9]
            .into_iter()
            .map(|y| self.drift(y))
            .find(|v| v.is_finite())
    }

    /// `B(y) = 2∫₀ʸ b̃`.
    pub fn cumulative_drift(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let r = quad::integrate(|z| 2.0 * self.drift(z), 0.0, y, 1e-13, 1e-13, 200_000);
        r.value
    }

    /// `F(x)` for a point of the original domain.
    pub fn forward_map(&self, x: f64) -> f64 {
        let y = self.map.y(x);
        match self.mirror {
            Some(r) => r - y,
            None => y,
        }
    }

    /// `F⁻¹(y)`.
    pub fn inverse_map(&self, y: f64) -> f64 {
        self.orig(y)
    }

    /// Exact structural check for κ ≡ 0.
    pub fn kappa_is_literal_zero(&self) -> bool {
        self.kappa.is_literal_zero()
    }

    pub fn kappa_expr(&self) -> &Expr {
        &self.kappa
    }

    pub fn drift_expr(&self) -> &Expr {
        &self.drift_x
    }

    /// Same model with κ increased by a constant.
    pub fn with_extra_killing(&self, c: f64) -> Self {
        let mut m = self.clone();
        m.kappa = Expr::Add(Box::new(self.kappa.clone()), Box::new(Expr::Const(c))).simplify();
        m
    }

    /// The model seen through `y ↦ r̃ − y`; requires a finite right endpoint.
    pub fn reflected(&self) -> Option<Self> {
        if !self.right.is_finite() {
            return None;
        }
        let mut m = self.clone();
        m.mirror = match self.mirror {
            Some(_) => None,
            None => Some(self.right),
        };
        m.p0 = self.pr.unwrap_or(self.p0);
        m.pr = Some(self.p0);
        m.reference = self.right - self.reference;
        Some(m)
    }

    pub fn with_boundary(&self, p0: f64, pr: Option<f64>) -> Self {
        let mut m = self.clone();
        m.p0 = p0;
        m.pr = pr;
        m
    }

    /// Restrict to `(0, r)` with boundary parameter `pr` at the new endpoint.
    pub fn truncated(&self, r: f64, pr: f64) -> Self {
        let mut m = self.clone();
        m.right = r;
        m.pr = Some(pr);
        m
    }
}
