//! Checks that tie the simulation to the spectral solution.

use serde::Serialize;

use super::VerdictError;
use crate::eigen::{solve_psi_on, QsdDensity};
use crate::io::{Cell, Table};
use crate::mc::{simulate_ensemble, ConditionalHistogram, Estimate, InitialLaw, SimConfig, HISTOGRAM_BINS};
use crate::model::UnitDiffusionModel;
use crate::numeric::{linspace, quad::cumulative_trapezoid};

/// Below this conditional mass in the window the comparison is not meaningful.
pub const APPLICABLE_MASS: f64 = 0.05;

/// CDF of the piecewise-linear density, exact on each cell.
struct DensityCdf<'a> {
    qsd: &'a QsdDensity,
    cum: Vec<f64>,
}

impl<'a> DensityCdf<'a> {
    fn new(qsd: &'a QsdDensity) -> Self {
        DensityCdf { qsd, cum: cumulative_trapezoid(&qsd.grid, &qsd.density) }
    }

    fn at(&self, x: f64) -> f64 {
        let g = &self.qsd.grid;
        let d = &self.qsd.density;
        if x <= g[0] {
            return 0.0;
        }
        if x >= g[g.len() - 1] {
            return self.cum[g.len() - 1];
        }
        let i = g.partition_point(|&v| v <= x) - 1;
        let (h, s) = (x - g[i], (d[i + 1] - d[i]) / (g[i + 1] - g[i]));
        self.cum[i] + h * (d[i] + 0.5 * s * h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QsdComparison {
    pub tv_distance: f64,
    pub ks_distance: f64,
    /// Right end of the comparison window.
    pub z: f64,
    /// Conditional mass of the histogram inside the window.
    pub mass_in_window: f64,
    /// False when too little mass lies in the window; the distances are then
    /// not evidence for or against convergence.
    pub applicable: bool,
}

/// Distances between a conditional histogram and the QSD, both restricted to
/// `[0, z]` and renormalized. `z` defaults to the histogram's display edge and
/// is rounded down to a bin edge.
pub fn compare_mc_to_qsd(hist: &ConditionalHistogram, qsd: &QsdDensity, z: Option<f64>) -> Result<QsdComparison, VerdictError> {
    if hist.empty || hist.n_alive == 0 {
        return Err(VerdictError::EmptyHistogram);
    }
    let z_req = z.unwrap_or(hist.bin_edges[HISTOGRAM_BINS]);
    let bins: Vec<usize> = (0..hist.probs.len()).filter(|&i| hist.bin_edges[i + 1] <= z_req * (1.0 + 1e-12)).collect();
    let z_edge = bins.last().map_or(0.0, |&i| hist.bin_edges[i + 1]);
    let mass_in_window: f64 = bins.iter().map(|&i| hist.probs[i]).sum();
    let cdf = DensityCdf::new(qsd);
    let q_total = cdf.at(z_edge);
    if bins.is_empty() || mass_in_window <= 0.0 || q_total <= 0.0 {
        return Ok(QsdComparison { tv_distance: f64::NAN, ks_distance: f64::NAN, z: z_edge, mass_in_window, applicable: false });
    }
    let (mut tv, mut ks) = (0.0, 0.0f64);
    let (mut cum_p, mut cum_q) = (0.0, 0.0);
    for &i in &bins {
        let p = hist.probs[i] / mass_in_window;
        let q = (cdf.at(hist.bin_edges[i + 1]) - cdf.at(hist.bin_edges[i])) / q_total;
        tv += (p - q).abs();
        cum_p += p;
        cum_q += q;
        ks = ks.max((cum_p - cum_q).abs());
    }
    Ok(QsdComparison {
        tv_distance: 0.5 * tv,
        ks_distance: ks,
        z: z_edge,
        mass_in_window,
        applicable: mass_in_window >= APPLICABLE_MASS,
    })
}

/// The QSD binned like a simulation snapshot, for self-comparison.
pub fn bin_density(qsd: &QsdDensity, z_display: f64) -> ConditionalHistogram {
    let cdf = DensityCdf::new(qsd);
    let total = cdf.at(f64::INFINITY);
    let mut edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| z_display * i as f64 / HISTOGRAM_BINS as f64).collect();
    edges.push(f64::INFINITY);
    let probs = edges.windows(2).map(|w| (cdf.at(w[1]) - cdf.at(w[0])) / total).collect();
    ConditionalHistogram { t: f64::INFINITY, bin_edges: edges, probs, n_alive: u64::MAX, empty: false }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaLimit {
    pub eta: f64,
    pub reference: f64,
    pub grid: Vec<f64>,
    /// `ψ_η(x)/ψ_η(reference)`.
    pub ratio: Vec<f64>,
}

impl OmegaLimit {
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["x", "omega_limit"]);
        for (x, r) in self.grid.iter().zip(&self.ratio) {
            t.push(vec![Cell::from(*x), (*r).into()]);
        }
        t
    }
}

const REFERENCE_FLOOR: f64 = 1e-12;

/// `ψ_η(x)/ψ_η(reference)` at the given points.
pub fn omega_limit_at(eta: f64, model: &UnitDiffusionModel, xs: &[f64], reference: f64) -> Result<Vec<f64>, VerdictError> {
    let mut grid: Vec<f64> = xs.iter().copied().chain([0.0, reference]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let sol = solve_psi_on(model, eta, &grid)?;
    let at = |x: f64| sol.psi[grid.partition_point(|&g| g < x)];
    let base = at(reference);
    if !(base.abs() >= REFERENCE_FLOOR) {
        return Err(VerdictError::DegenerateReference { value: base });
    }
    Ok(xs.iter().map(|&x| if x == reference { 1.0 } else { at(x) / base }).collect())
}

/// The limit of `ω_t` tabulated on `n` points of `[0, x_max]`.
pub fn omega_limit_curve(eta: f64, model: &UnitDiffusionModel, x_max: f64, reference: f64, n: usize) -> Result<OmegaLimit, VerdictError> {
    let grid = linspace(0.0, x_max, n.max(2));
    let ratio = omega_limit_at(eta, model, &grid, reference)?;
    Ok(OmegaLimit { eta, reference, grid, ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceCheck {
    pub horizon: f64,
    pub z: f64,
    pub survival: Estimate,
    /// `e^{−λ̲·horizon}`.
    pub expected: f64,
    /// `(survival − expected)/se`, with the binomial se at the expected value.
    pub z_score: f64,
    pub comparison: QsdComparison,
}

/// Start from the QSD truncated to `[0, z]` and check that survival over
/// `horizon` is `e^{−λ̲·horizon}` and that the conditional law is unchanged.
pub fn check_lambda_invariance(
    model: &UnitDiffusionModel,
    qsd: &QsdDensity,
    z: f64,
    horizon: f64,
    cfg: &SimConfig,
) -> Result<InvarianceCheck, VerdictError> {
    let cfg = SimConfig {
        initial: InitialLaw::truncated_qsd(qsd, z)?,
        t_max: horizon,
        z_display: Some(cfg.z_display.unwrap_or(z)),
        ..cfg.clone()
    };
    let e = simulate_ensemble(model, &cfg, &[horizon])?;
    let n = e.survival.n_paths as f64;
    let p = *e.survival.fraction.last().unwrap();
    let expected = (-qsd.lambda * horizon).exp();
    let se_expected = (expected * (1.0 - expected) / n).sqrt();
    let se = (p * (1.0 - p) / n).sqrt();
    let survival = Estimate { value: p, se, ci_lo: p - 1.96 * se, ci_hi: p + 1.96 * se };
    let comparison = compare_mc_to_qsd(&e.histograms[0], qsd, Some(z))?;
    Ok(InvarianceCheck { horizon, z, survival, expected, z_score: (p - expected) / se_expected, comparison })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::{find_lambda_lower, qsd_density};

    fn unit(drift: &str, kappa: &str, p0: f64) -> UnitDiffusionModel {
        UnitDiffusionModel::from_unit(drift, kappa, f64::INFINITY, p0, None).unwrap()
    }

    fn triangle() -> QsdDensity {
        // Density 2x on [0, 1].
        QsdDensity { lambda: 1.0, grid: vec![0.0, 1.0], density: vec![0.0, 2.0] }
    }

    #[test]
    fn self_comparison_is_exact() {
        let q = triangle();
        let h = bin_density(&q, 1.0);
        assert!((h.probs[0] - 1.0 / (128.0 * 128.0)).abs() < 1e-15);
        let c = compare_mc_to_qsd(&h, &q, None).unwrap();
        assert!(c.tv_distance < 1e-12 && c.ks_distance < 1e-12, "{c:?}");
        assert!(c.applicable);
    }

    #[test]
    fn window_restriction_renormalizes() {
        // Density 2x restricted to [0, ½] is 8x there.
        let q = triangle();
        let h = bin_density(&q, 1.0);
        let c = compare_mc_to_qsd(&h, &q, Some(0.5)).unwrap();
        assert!((c.mass_in_window - 0.25).abs() < 1e-12);
        assert!(c.tv_distance < 1e-12);
    }

    #[test]
    fn distant_mass_is_not_applicable() {
        let q = triangle();
        let mut h = bin_density(&q, 10.0);
        h.probs.iter_mut().for_each(|p| *p = 0.0);
        h.probs[HISTOGRAM_BINS - 1] = 0.99;
        h.probs[0] = 0.01;
        let c = compare_mc_to_qsd(&h, &q, Some(5.0)).unwrap();
        assert!(!c.applicable && c.mass_in_window < APPLICABLE_MASS);
    }

    #[test]
    fn omega_limit_for_absorbed_ou_is_identity() {
        // ψ_1 = 2x for b = −x, p0 = 0.
        let m = unit("-x", "0", 0.0);
        let c = omega_limit_curve(1.0, &m, 4.0, 1.0, 401).unwrap();
        for (x, r) in c.grid.iter().zip(&c.ratio) {
            assert!((r - x).abs() < 1e-8, "x = {x}: {r}");
        }
        assert_eq!(omega_limit_at(1.0, &m, &[1.0], 1.0).unwrap(), vec![1.0]);
    }

    #[test]
    fn omega_limit_for_constant_killing_is_flat() {
        let m = unit("0", "0.7", 1.0);
        let c = omega_limit_curve(0.7, &m, 5.0, 1.0, 51).unwrap();
        assert!(c.ratio.iter().all(|r| (r - 1.0).abs() < 1e-9));
    }

    #[test]
    fn degenerate_reference_is_reported() {
        // ψ_{1/2} = 2 sin x vanishes at π.
        let m = unit("0", "0", 0.0);
        let r = omega_limit_at(0.5, &m, &[1.0], std::f64::consts::PI);
        assert!(matches!(r, Err(VerdictError::DegenerateReference { .. })) || r.is_ok_and(|v| v[0].abs() > 1e6));
    }

    #[test]
    fn ou_qsd_binned_against_itself_after_normalization() {
        let m = unit("-x", "0", 0.0);
        let pe = find_lambda_lower(&m).unwrap();
        let q = qsd_density(&pe, &pe.eigenfunction).unwrap();
        let c = compare_mc_to_qsd(&bin_density(&q, 3.0), &q, None).unwrap();
        assert!(c.tv_distance < 1e-12);
    }
}
