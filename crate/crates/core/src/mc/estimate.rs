//! Estimators over survival counts: killing rate, conditional survival
//! `a_t`, the ratio `ω_t` and the hitting bound `ω_*`.

use rand::Rng;
use serde::Serialize;

use super::engine::{hits_before_kill, path_rng, survival_steps};
use super::{alive_counts, InitialLaw, McError, SimConfig, SurvivalCurve};
use crate::io::{Cell, Table};
use crate::model::UnitDiffusionModel;

const BOOTSTRAP_RESAMPLES: usize = 200;
const BOOTSTRAP_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const MIN_FIT_POINTS: usize = 10;
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub value: f64,
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub se: f64,
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub ci_lo: f64,
    #[serde(serialize_with = "crate::io::ser_extended")]
    pub ci_hi: f64,
}

impl Estimate {
    fn normal(value: f64, se: f64) -> Self {
        Estimate { value, se, ci_lo: value - Z95 * se, ci_hi: value + Z95 * se }
    }

    fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0, ci_lo: value, ci_hi: value }
    }

    pub fn ci_contains(&self, v: f64) -> bool {
        self.ci_lo <= v && v <= self.ci_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AkrEstimate {
    pub eta: f64,
    /// Bootstrap standard deviation.
    pub se: f64,
    /// Percentile 95% interval.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub window: [f64; 2],
    pub points: usize,
    pub resamples: usize,
}

impl AkrEstimate {
    pub fn ci_contains(&self, v: f64) -> bool {
        self.ci_lo <= v && v <= self.ci_hi
    }
}

fn slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (sxy, sxx) = ts.iter().zip(ys).fold((0.0, 0.0), |a, (t, y)| (a.0 + (t - mt) * (y - my), a.1 + (t - mt).powi(2)));
    sxy / sxx
}

/// η as the least-squares slope of `−ln fraction` over `window`, with a
/// path-resampling bootstrap.
pub fn estimate_akr(curve: &SurvivalCurve, window: [f64; 2]) -> Result<AkrEstimate, McError> {
    let tol = 1e-9 * curve.dt;
    let idx: Vec<usize> = (0..curve.times.len())
        .filter(|&k| curve.times[k] >= window[0] - tol && curve.times[k] <= window[1] + tol)
        .collect();
    if idx.len() < MIN_FIT_POINTS {
        return Err(McError::WindowTooShort { points: idx.len() });
    }
    if let Some(&k) = idx.iter().find(|&&k| curve.alive[k] == 0) {
        return Err(McError::Extinction { t: curve.times[k] });
    }
    let ts: Vec<f64> = idx.iter().map(|&k| curve.times[k]).collect();
    let fit = |alive: &[u64]| {
        let ys: Vec<f64> = idx.iter().map(|&k| -(alive[k] as f64 / curve.n_paths as f64).ln()).collect();
        slope(&ts, &ys)
    };
    let eta = fit(&curve.alive);

    let n = curve.n_paths;
    let n_records = curve.times.len() - 1;
    let mut etas = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut picks = vec![0usize; n];
    for b in 0..BOOTSTRAP_RESAMPLES {
        let mut rng = path_rng(curve.master_seed ^ BOOTSTRAP_SALT, b as u64);
        picks.iter_mut().for_each(|p| *p = rng.random_range(0..n));
        let alive = alive_counts(&curve.death_steps, curve.record_every, n_records, |i| picks[i]);
        if idx.iter().all(|&k| alive[k] > 0) {
            etas.push(fit(&alive));
        }
    }
    etas.sort_by(f64::total_cmp);
    let m = etas.len();
    let (se, ci_lo, ci_hi) = if m >= 2 {
        let mean = etas.iter().sum::<f64>() / m as f64;
        let var = etas.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let q = |p: f64| etas[((p * (m - 1) as f64).round() as usize).min(m - 1)];
        (var.sqrt(), q(0.025).min(eta), q(0.975).max(eta))
    } else {
        (f64::NAN, f64::NEG_INFINITY, f64::INFINITY)
    };
    Ok(AkrEstimate { eta, se, ci_lo, ci_hi, window, points: idx.len(), resamples: m })
}

/// `a_t(ν, r) = alive(t + r)/alive(t)` with a binomial interval.
pub fn estimate_a(curve: &SurvivalCurve, t: f64, r: f64) -> Result<Estimate, McError> {
    let i = curve.index_of(t).ok_or(McError::NotOnGrid { t })?;
    let j = curve.index_of(t + r).ok_or(McError::NotOnGrid { t: t + r })?;
    let base = curve.alive[i];
    if base == 0 {
        return Err(McError::Extinction { t });
    }
    if j == i {
        return Ok(Estimate::exact(1.0));
    }
    let a = curve.alive[j] as f64 / base as f64;
    let e = Estimate::normal(a, (a * (1.0 - a) / base as f64).sqrt());
    Ok(Estimate { ci_lo: e.ci_lo.max(0.0), ci_hi: e.ci_hi.min(1.0), ..e })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OmegaRow {
    pub x: f64,
    pub t: f64,
    pub omega: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaTable {
    pub reference: f64,
    pub rows: Vec<OmegaRow>,
}

impl OmegaTable {
    pub fn get(&self, x: f64, t: f64) -> Option<&OmegaRow> {
        self.rows.iter().find(|r| r.x == x && r.t == t)
    }

    pub fn to_table(&self) -> Table {
        let mut out = Table::new(&["x", "t", "omega", "se"]);
        for r in &self.rows {
            out.push(vec![Cell::from(r.x), r.t.into(), r.omega.into(), r.se.into()]);
        }
        out
    }
}

/// `ω_t(x) = P_x{τ_∂ > t}/P_ref{τ_∂ > t}` with common random numbers: path
/// `i` uses the same stream from every starting point. The standard error
/// is the delta-method value for the paired ratio; a zero numerator count
/// is replaced by one in the variance so the error never collapses to 0.
pub fn estimate_omega(
    model: &UnitDiffusionModel,
    cfg: &SimConfig,
    xs: &[f64],
    ts: &[f64],
    reference: f64,
) -> Result<OmegaTable, McError> {
    let n_steps = cfg.n_steps();
    let steps: Vec<usize> = ts.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    if let Some(t) = ts.iter().zip(&steps).find(|(_, &s)| s > n_steps) {
        return Err(McError::InvalidConfig(format!("t = {} is beyond t_max", t.0)));
    }
    let run = |x: f64| {
        let c = SimConfig { initial: InitialLaw::Point(x), ..cfg.clone() };
        survival_steps(model, &c).map(|r| r.0)
    };
    let base = run(reference)?;
    let n = base.len() as f64;
    let mut rows = Vec::with_capacity(xs.len() * ts.len());
    for &x in xs {
        let deaths = if x == reference { base.clone() } else { run(x)? };
        for (&t, &s) in ts.iter().zip(&steps) {
            let s = s as u32;
            let (mut nx, mut n1, mut nb) = (0u64, 0u64, 0u64);
            for (&dx, &d1) in deaths.iter().zip(&base) {
                let (ax, a1) = (dx > s, d1 > s);
                nx += ax as u64;
                n1 += a1 as u64;
                nb += (ax && a1) as u64;
            }
            if n1 == 0 {
                return Err(McError::Extinction { t });
            }
            let omega = nx as f64 / n1 as f64;
            let p1 = n1 as f64 / n;
            let px = nx.max(1) as f64 / n;
            let pb = nb as f64 / n;
            let w = px / p1;
            let var = (px * (1.0 - px) - 2.0 * w * (pb - px * p1) + w * w * p1 * (1.0 - p1)) / (n * p1 * p1);
            rows.push(OmegaRow { x, t, omega, se: var.max(0.0).sqrt() });
        }
    }
    Ok(OmegaTable { reference, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaStar {
    pub x: f64,
    pub y: f64,
    pub hits: u64,
    pub n_paths: usize,
    /// `P_y{τ_x < τ_∂}`.
    pub hit_probability: Estimate,
    /// Its inverse; `+∞` with a one-sided interval when nothing hit.
    pub omega_star: Estimate,
}

/// `ω_*(x, y) = P_y{τ_x < τ_∂}^{−1}`, with hitting capped at `cfg.t_max`.
pub fn estimate_omega_star(model: &UnitDiffusionModel, cfg: &SimConfig, x: f64, y: f64) -> Result<OmegaStar, McError> {
    let n = cfg.n_paths;
    if x == y {
        return Ok(OmegaStar { x, y, hits: n as u64, n_paths: n, hit_probability: Estimate::exact(1.0), omega_star: Estimate::exact(1.0) });
    }
    let c = SimConfig { initial: InitialLaw::Point(y), ..cfg.clone() };
    let hits = hits_before_kill(model, &c, x)?;
    let p = hits as f64 / n as f64;
    let sp = (p * (1.0 - p) / n as f64).sqrt();
    let hit_probability = {
        let e = Estimate::normal(p, sp);
        Estimate { ci_lo: e.ci_lo.max(0.0), ci_hi: e.ci_hi.min(1.0), ..e }
    };
    let omega_star = if hits == 0 {
        // One-sided 95% bound on p with no successes.
        let p_up = 1.0 - 0.05f64.powf(1.0 / n as f64);
        Estimate { value: f64::INFINITY, se: f64::INFINITY, ci_lo: 1.0 / p_up, ci_hi: f64::INFINITY }
    } else {
        let lo = p - Z95 * sp;
        Estimate {
            value: 1.0 / p,
            se: sp / (p * p),
            ci_lo: 1.0 / (p + Z95 * sp).min(1.0),
            ci_hi: if lo > 0.0 { 1.0 / lo } else { f64::INFINITY },
        }
    };
    Ok(OmegaStar { x, y, hits, n_paths: n, hit_probability, omega_star })
}
