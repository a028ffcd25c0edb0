//! Monte Carlo simulation of the killed unit diffusion and estimators built
//! on the resulting survival counts.
//!
//! Every path draws from its own ChaCha8 stream, selected by the path index
//! under the master seed, so integer counts do not depend on how paths are
//! scheduled across threads.

mod engine;
mod estimate;
mod initial;

use serde::Serialize;
use thiserror::Error;

use crate::io::{Cell, Table};

pub use engine::{simulate_ensemble, Ensemble};
pub use estimate::{estimate_a, estimate_akr, estimate_omega, estimate_omega_star, AkrEstimate, Estimate, OmegaRow, OmegaStar, OmegaTable};
pub use initial::InitialLaw;

/// Histogram bins on `[0, z_display]`; one more bin collects `[z_display, ∞)`.
pub const HISTOGRAM_BINS: usize = 128;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("unsupported model for simulation: {0}")]
    Unsupported(String),
    #[error("fit window holds {points} record points, at least 10 are needed")]
    WindowTooShort { points: usize },
    #[error("no paths alive at t = {t}")]
    Extinction { t: f64 },
    #[error("t = {t} is not on the record grid")]
    NotOnGrid { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    pub initial: InitialLaw,
    /// Steps between survival records.
    pub record_every: usize,
    /// Right edge of the finite histogram bins; the default is the 99.9th
    /// percentile of survivors at the first snapshot.
    pub z_display: Option<f64>,
}

impl SimConfig {
    /// Records every 0.01 time units, or every step when `dt` is coarser.
    pub fn new(dt: f64, t_max: f64, n_paths: usize, master_seed: u64, initial: InitialLaw) -> Self {
        let record_every = ((0.01 / dt).round() as usize).max(1);
        SimConfig { dt, t_max, n_paths, master_seed, initial, record_every, z_display: None }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub(crate) fn validate(&self) -> Result<(), McError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(McError::InvalidConfig(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(McError::InvalidConfig(format!("t_max = {} must be at least dt", self.t_max)));
        }
        if self.n_paths == 0 {
            return Err(McError::InvalidConfig("n_paths must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(McError::InvalidConfig("record_every must be at least 1".into()));
        }
        if self.n_steps() >= u32::MAX as usize {
            return Err(McError::InvalidConfig("too many time steps".into()));
        }
        if let Some(z) = self.z_display {
            if !(z > 0.0 && z.is_finite()) {
                return Err(McError::InvalidConfig(format!("z_display = {z} must be positive")));
            }
        }
        self.initial.validate()
    }
}

/// `P{τ_∂ > t}` on the record grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub alive: Vec<u64>,
    pub fraction: Vec<f64>,
    pub n_paths: usize,
    /// Paths whose position overflowed; counted alive from then on.
    pub escaped: u64,
    pub dt: f64,
    pub record_every: usize,
    pub master_seed: u64,
    /// Step at which each path was killed, `u32::MAX` if never.
    #[serde(skip)]
    pub death_steps: Vec<u32>,
}

impl SurvivalCurve {
    pub(crate) fn from_death_steps(death_steps: Vec<u32>, escaped: u64, cfg: &SimConfig) -> Self {
        let n_records = cfg.n_steps() / cfg.record_every;
        let alive = alive_counts(&death_steps, cfg.record_every, n_records, |i| i);
        let n = death_steps.len();
        SurvivalCurve {
            times: (0..=n_records).map(|k| (k * cfg.record_every) as f64 * cfg.dt).collect(),
            fraction: alive.iter().map(|&a| a as f64 / n as f64).collect(),
            alive,
            n_paths: n,
            escaped,
            dt: cfg.dt,
            record_every: cfg.record_every,
            master_seed: cfg.master_seed,
            death_steps,
        }
    }

    /// Record index of `t`, if `t` is on the grid.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let spacing = self.dt * self.record_every as f64;
        let k = (t / spacing).round();
        let tol = 1e-9 * spacing.max(t.abs());
        (k >= 0.0 && (k * spacing - t).abs() <= tol && (k as usize) < self.times.len()).then_some(k as usize)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["t", "alive", "fraction"]);
        for i in 0..self.times.len() {
            t.push(vec![Cell::from(self.times[i]), self.alive[i].into(), self.fraction[i].into()]);
        }
        t
    }
}

/// Alive counts at record steps `0, every, 2·every, …` for the paths
/// `pick(0..m)`; a path killed at step `d` is alive at step `s` iff `d > s`.
pub(crate) fn alive_counts(death_steps: &[u32], every: usize, n_records: usize, pick: impl Fn(usize) -> usize) -> Vec<u64> {
    let mut deaths = vec![0u64; n_records + 1];
    let m = death_steps.len();
    for i in 0..m {
        let d = death_steps[pick(i)] as usize;
        // First record step s with s ≥ d.
        let k = d.div_ceil(every);
        if k <= n_records {
            deaths[k] += 1;
        }
    }
    let mut alive = Vec::with_capacity(n_records + 1);
    let mut left = m as u64;
    for d in deaths {
        left -= d;
        alive.push(left);
    }
    alive
}

/// Law of the surviving, non-escaped paths at one snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalHistogram {
    pub t: f64,
    /// `HISTOGRAM_BINS + 2` edges; the last is `+∞`.
    #[serde(serialize_with = "crate::io::ser_extended_vec")]
    pub bin_edges: Vec<f64>,
    pub probs: Vec<f64>,
    pub n_alive: u64,
    /// No survivors: `probs` are all zero.
    pub empty: bool,
}

impl ConditionalHistogram {
    pub(crate) fn from_positions(t: f64, positions: &[f64], z_display: f64) -> Self {
        let mut edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| z_display * i as f64 / HISTOGRAM_BINS as f64).collect();
        edges.push(f64::INFINITY);
        let mut counts = vec![0u64; HISTOGRAM_BINS + 1];
        for &x in positions {
            let i = ((x / z_display) * HISTOGRAM_BINS as f64).floor();
            let i = if i < 0.0 { 0 } else { (i as usize).min(HISTOGRAM_BINS) };
            counts[i] += 1;
        }
        let n = positions.len() as u64;
        let probs = counts.iter().map(|&c| if n > 0 { c as f64 / n as f64 } else { 0.0 }).collect();
        ConditionalHistogram { t, bin_edges: edges, probs, n_alive: n, empty: n == 0 }
    }

    /// Conditional mass of the bins lying inside `[0, z]`.
    pub fn mass_below(&self, z: f64) -> f64 {
        self.bin_edges
            .windows(2)
            .zip(&self.probs)
            .filter(|(w, _)| w[1] <= z * (1.0 + 1e-12))
            .map(|(_, p)| p)
            .sum()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["t", "bin_lo", "bin_hi", "prob"]);
        for (w, p) in self.bin_edges.windows(2).zip(&self.probs) {
            t.push(vec![Cell::from(self.t), w[0].into(), w[1].into(), (*p).into()]);
        }
        t
    }
}

/// One table holding several snapshots.
pub fn histograms_table(hists: &[ConditionalHistogram]) -> Table {
    let mut out = Table::new(&["t", "bin_lo", "bin_hi", "prob"]);
    for h in hists {
        out.rows.extend(h.to_table().rows);
    }
    out
}
