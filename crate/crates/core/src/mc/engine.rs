//! Euler–Maruyama paths with an exponential killing clock.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::{ConditionalHistogram, InitialLaw, McError, SimConfig, SurvivalCurve};
use crate::model::UnitDiffusionModel;

pub(crate) const NEVER: u32 = u32::MAX;
/// Positions beyond this are treated as overflow.
const ESCAPE_LEVEL: f64 = 1e100;
/// Bridge crossing probabilities below `e^{−40}` are not sampled.
const BRIDGE_CUTOFF: f64 = 40.0;
const BRIDGE_FLOOR: f64 = 1e-12;

/// Stream for path `index` under `seed`.
pub(crate) fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Edge {
    Open,
    Absorbing(f64),
    Reflecting(f64),
}

pub(crate) enum Move {
    Alive(f64),
    Killed,
    Escaped,
}

pub(crate) struct Stepper<'a> {
    model: &'a UnitDiffusionModel,
    dt: f64,
    sqrt_dt: f64,
    left: Edge,
    right: Edge,
    kills: bool,
}

impl<'a> Stepper<'a> {
    pub fn new(model: &'a UnitDiffusionModel, dt: f64) -> Result<Self, McError> {
        let left = match model.p0 {
            p if p == 0.0 => Edge::Absorbing(0.0),
            p if p == 1.0 => Edge::Reflecting(0.0),
            p => return Err(McError::Unsupported(format!("p0 = {p}: only absorption (0) or reflection (1) can be simulated"))),
        };
        let right = if model.right.is_finite() {
            match model.pr {
                Some(p) if p == 0.0 => Edge::Absorbing(model.right),
                Some(p) if p == 1.0 => Edge::Reflecting(model.right),
                other => {
                    return Err(McError::Unsupported(format!(
                        "finite right endpoint needs pr = 0 or 1, got {other:?}"
                    )))
                }
            }
        } else {
            Edge::Open
        };
        Ok(Stepper { model, dt, sqrt_dt: dt.sqrt(), left, right, kills: !model.kappa_is_literal_zero() })
    }

    /// Whether a path may start at `x`.
    pub fn admits(&self, x: f64) -> bool {
        let above = match self.left {
            Edge::Absorbing(_) => x > 0.0,
            _ => x >= 0.0,
        };
        let below = match self.right {
            Edge::Open => true,
            Edge::Absorbing(r) => x < r,
            Edge::Reflecting(r) => x <= r,
        };
        above && below
    }

    /// Unconstrained Euler–Maruyama proposal.
    #[inline]
    pub fn propose<R: Rng>(&self, x: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        x + self.model.drift(x) * self.dt + self.sqrt_dt * z
    }

    /// Boundary handling and killing for the step `x → raw`.
    #[inline]
    pub fn settle<R: Rng>(&self, x: f64, raw: f64, rng: &mut R) -> Move {
        if !raw.is_finite() || raw.abs() > ESCAPE_LEVEL {
            return Move::Escaped;
        }
        let y = match (self.left, self.right) {
            (Edge::Reflecting(_), Edge::Reflecting(r)) => {
                let t = raw.rem_euclid(2.0 * r);
                if t > r {
                    2.0 * r - t
                } else {
                    t
                }
            }
            (Edge::Reflecting(_), _) => raw.abs(),
            (_, Edge::Reflecting(r)) if raw > r => 2.0 * r - raw,
            _ => raw,
        };
        if let Edge::Absorbing(l) = self.left {
            if y <= l || self.bridge_hits(x - l, y - l, rng) {
                return Move::Killed;
            }
        }
        if let Edge::Absorbing(r) = self.right {
            if y >= r || self.bridge_hits(r - x, r - y, rng) {
                return Move::Killed;
            }
        }
        if self.kills {
            let rate = self.model.kappa(y);
            if rate > 0.0 && rng.random::<f64>() < -(-rate * self.dt).exp_m1() {
                return Move::Killed;
            }
        }
        Move::Alive(y)
    }

    /// Brownian-bridge crossing of a level at distances `a, b > 0` from the
    /// two endpoints of a step.
    #[inline]
    pub fn bridge_hits<R: Rng>(&self, a: f64, b: f64, rng: &mut R) -> bool {
        let e = 2.0 * a.max(BRIDGE_FLOOR) * b.max(BRIDGE_FLOOR) / self.dt;
        e < BRIDGE_CUTOFF && rng.random::<f64>() < (-e).exp()
    }
}

struct PathRecord {
    death: u32,
    escaped: bool,
    /// Position at each snapshot, NaN when killed or escaped by then.
    snaps: Vec<f64>,
}

fn run_path(st: &Stepper, x0: f64, n_steps: usize, rng: &mut ChaCha8Rng, snap_steps: &[usize]) -> PathRecord {
    let mut snaps = vec![f64::NAN; snap_steps.len()];
    let mut next = 0;
    while next < snap_steps.len() && snap_steps[next] == 0 {
        snaps[next] = x0;
        next += 1;
    }
    let mut x = x0;
    for n in 1..=n_steps {
        let raw = st.propose(x, rng);
        match st.settle(x, raw, rng) {
            Move::Alive(y) => x = y,
            Move::Killed => return PathRecord { death: n as u32, escaped: false, snaps },
            Move::Escaped => return PathRecord { death: NEVER, escaped: true, snaps },
        }
        while next < snap_steps.len() && snap_steps[next] == n {
            snaps[next] = x;
            next += 1;
        }
    }
    PathRecord { death: NEVER, escaped: false, snaps }
}

fn checked<'a>(model: &'a UnitDiffusionModel, cfg: &SimConfig) -> Result<Stepper<'a>, McError> {
    cfg.validate()?;
    let st = Stepper::new(model, cfg.dt)?;
    let (lo, hi) = cfg.initial.support();
    // A density puts no mass on the endpoints of its support.
    let inside = match cfg.initial {
        InitialLaw::Density { .. } => lo >= 0.0 && hi <= model.right,
        _ => st.admits(lo) && st.admits(hi),
    };
    if !inside {
        return Err(McError::InvalidConfig(format!("initial law on [{lo}, {hi}] leaves the domain")));
    }
    Ok(st)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub survival: SurvivalCurve,
    pub histograms: Vec<ConditionalHistogram>,
    /// Positions of the surviving, non-escaped paths at each snapshot.
    #[serde(skip)]
    pub survivors: Vec<Vec<f64>>,
}

impl Ensemble {
    /// Fraction of the non-escaped survivors at snapshot `j` lying below `z`.
    pub fn conditional_mass_below(&self, j: usize, z: f64) -> Option<f64> {
        let s = &self.survivors[j];
        (!s.is_empty()).then(|| s.iter().filter(|&&x| x < z).count() as f64 / s.len() as f64)
    }
}

/// Simulate `cfg.n_paths` paths up to `cfg.t_max`, recording survival and
/// the conditional law at `snapshot_times` (rounded to the step grid).
pub fn simulate_ensemble(model: &UnitDiffusionModel, cfg: &SimConfig, snapshot_times: &[f64]) -> Result<Ensemble, McError> {
    let st = checked(model, cfg)?;
    let n_steps = cfg.n_steps();
    let snap_steps: Vec<usize> = snapshot_times.iter().map(|t| (t / cfg.dt).round() as usize).collect();
    if let Some(t) = snapshot_times.iter().zip(&snap_steps).find(|(t, &s)| !(t.is_finite() && **t >= 0.0) || s > n_steps) {
        return Err(McError::InvalidConfig(format!("snapshot t = {} is outside [0, t_max]", t.0)));
    }
    if snap_steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(McError::InvalidConfig("snapshot times must be nondecreasing".into()));
    }
    let sampler = cfg.initial.sampler();
    let records: Vec<PathRecord> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.master_seed, i as u64);
            let x0 = sampler.draw(i, &mut rng);
            run_path(&st, x0, n_steps, &mut rng, &snap_steps)
        })
        .collect();

    let escaped = records.iter().filter(|r| r.escaped).count() as u64;
    let survivors: Vec<Vec<f64>> = (0..snap_steps.len())
        .map(|j| records.iter().map(|r| r.snaps[j]).filter(|x| !x.is_nan()).collect())
        .collect();
    let survival = SurvivalCurve::from_death_steps(records.into_iter().map(|r| r.death).collect(), escaped, cfg);
    let z_display = cfg.z_display.unwrap_or_else(|| default_display(&survivors));
    let histograms = snapshot_times
        .iter()
        .zip(&snap_steps)
        .zip(&survivors)
        .map(|((_, &s), pos)| ConditionalHistogram::from_positions(s as f64 * cfg.dt, pos, z_display))
        .collect();
    Ok(Ensemble { survival, histograms, survivors })
}

/// 99.9th percentile of the first nonempty snapshot, or 1.
fn default_display(survivors: &[Vec<f64>]) -> f64 {
    let Some(first) = survivors.iter().find(|s| !s.is_empty()) else {
        return 1.0;
    };
    let mut v = first.clone();
    v.sort_by(f64::total_cmp);
    let k = ((0.999 * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    if v[k] > 0.0 {
        v[k]
    } else {
        1.0
    }
}

/// Death steps of every path from a fixed start, and the number that escaped.
pub(crate) fn survival_steps(model: &UnitDiffusionModel, cfg: &SimConfig) -> Result<(Vec<u32>, u64), McError> {
    let st = checked(model, cfg)?;
    let n_steps = cfg.n_steps();
    let sampler = cfg.initial.sampler();
    let records: Vec<(u32, bool)> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.master_seed, i as u64);
            let x0 = sampler.draw(i, &mut rng);
            let r = run_path(&st, x0, n_steps, &mut rng, &[]);
            (r.death, r.escaped)
        })
        .collect();
    let escaped = records.iter().filter(|r| r.1).count() as u64;
    Ok((records.into_iter().map(|r| r.0).collect(), escaped))
}

/// Number of paths from `cfg.initial` that reach `target` before being
/// killed and before `cfg.t_max`.
pub(crate) fn hits_before_kill(model: &UnitDiffusionModel, cfg: &SimConfig, target: f64) -> Result<u64, McError> {
    let st = checked(model, cfg)?;
    let n_steps = cfg.n_steps();
    let sampler = cfg.initial.sampler();
    let hits = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(cfg.master_seed, i as u64);
            let mut x = sampler.draw(i, &mut rng);
            if x == target {
                return 1u64;
            }
            for _ in 0..n_steps {
                let raw = st.propose(x, &mut rng);
                let (a, b) = (x - target, raw - target);
                if a * b <= 0.0 || st.bridge_hits(a.abs(), b.abs(), &mut rng) {
                    return 1;
                }
                match st.settle(x, raw, &mut rng) {
                    Move::Alive(y) => x = y,
                    Move::Killed | Move::Escaped => return 0,
                }
            }
            0
        })
        .sum();
    Ok(hits)
}

#[cfg(test)]
mod tests {
    use super::super::InitialLaw;
    use super::*;

    fn unit(drift: &str, kappa: &str, p0: f64) -> UnitDiffusionModel {
        UnitDiffusionModel::from_unit(drift, kappa, f64::INFINITY, p0, None).unwrap()
    }

    fn within(p: f64, exact: f64, n: usize, k: f64) -> bool {
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        (p - exact).abs() <= k * se.max(1.0 / n as f64)
    }

    #[test]
    fn no_killing_keeps_everyone() {
        let cfg = SimConfig::new(1e-2, 5.0, 500, 7, InitialLaw::Point(1.0));
        let e = simulate_ensemble(&unit("-0.5*x + sin(x)", "0", 1.0), &cfg, &[5.0]).unwrap();
        assert!(e.survival.fraction.iter().all(|&f| f == 1.0));
        assert_eq!(e.histograms[0].n_alive, 500);
    }

    #[test]
    fn constant_clock_is_exponential() {
        let n = 20_000;
        let cfg = SimConfig::new(1e-2, 2.0, n, 11, InitialLaw::Point(1.0));
        let e = simulate_ensemble(&unit("0", "0.8", 1.0), &cfg, &[]).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let i = e.survival.index_of(t).unwrap();
            assert!(within(e.survival.fraction[i], (-0.8 * t).exp(), n, 3.0), "t = {t}");
        }
    }

    #[test]
    fn absorbed_brownian_motion_matches_reflection_principle() {
        // P_1{τ_0 > 1} = 2Φ(1) − 1.
        let n = 40_000;
        let cfg = SimConfig::new(1e-3, 1.0, n, 5, InitialLaw::Point(1.0));
        let e = simulate_ensemble(&unit("0", "0", 0.0), &cfg, &[]).unwrap();
        let f = *e.survival.fraction.last().unwrap();
        assert!(within(f, 0.682_689_492_137_085_9, n, 3.0), "f = {f}");
    }

    #[test]
    fn reflection_stays_in_domain() {
        let m = UnitDiffusionModel::from_unit("1", "0", 2.0, 1.0, Some(1.0)).unwrap();
        let cfg = SimConfig::new(1e-2, 3.0, 2000, 2, InitialLaw::Point(1.9));
        let e = simulate_ensemble(&m, &cfg, &[0.5, 3.0]).unwrap();
        for s in &e.survivors {
            assert_eq!(s.len(), 2000);
            assert!(s.iter().all(|&x| (0.0..=2.0).contains(&x)));
        }
    }

    #[test]
    fn counts_do_not_depend_on_thread_count() {
        let m = unit("-x", "0.2*x", 0.0);
        let cfg = SimConfig::new(1e-2, 3.0, 3000, 99, InitialLaw::Point(1.0));
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| simulate_ensemble(&m, &cfg, &[1.0, 3.0]).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.survival.alive, b.survival.alive);
        assert_eq!(a.histograms, b.histograms);
    }

    #[test]
    fn rejects_elastic_boundary_and_bad_start() {
        let cfg = SimConfig::new(1e-2, 1.0, 10, 0, InitialLaw::Point(1.0));
        assert!(matches!(simulate_ensemble(&unit("0", "0", 0.5), &cfg, &[]), Err(McError::Unsupported(_))));
        let cfg = SimConfig::new(1e-2, 1.0, 10, 0, InitialLaw::Point(0.0));
        assert!(matches!(simulate_ensemble(&unit("0", "0", 0.0), &cfg, &[]), Err(McError::InvalidConfig(_))));
    }

    #[test]
    fn overflowing_paths_are_censored_alive() {
        // Explosive drift: positions overflow in finite time.
        let cfg = SimConfig::new(1e-2, 2.0, 50, 1, InitialLaw::Point(2.0));
        let e = simulate_ensemble(&unit("x^3", "0", 1.0), &cfg, &[2.0]).unwrap();
        assert_eq!(e.survival.escaped, 50);
        assert_eq!(*e.survival.alive.last().unwrap(), 50);
        assert_eq!(e.histograms[0].n_alive, 0);
    }
}
