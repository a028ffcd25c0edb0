use qsd::mc::{estimate_akr, simulate_ensemble, InitialLaw, SimConfig};
use qsd::model::UnitDiffusionModel;

fn unit(drift: &str, kappa: &str, p0: f64) -> UnitDiffusionModel {
    UnitDiffusionModel::from_unit(drift, kappa, f64::INFINITY, p0, None).unwrap()
}

fn survival_at(m: &UnitDiffusionModel, dt: f64, t: f64, n: usize) -> (f64, f64) {
    let cfg = SimConfig::new(dt, t, n, 21, InitialLaw::Point(1.0));
    let p = *simulate_ensemble(m, &cfg, &[]).unwrap().survival.fraction.last().unwrap();
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[test]
fn bridge_corrected_survival_is_stable_under_refinement() {
    // Absorbed OU from 1: P{τ > t} = erf(e^{−t}/√(1 − e^{−2t})).
    let m = unit("-x", "0", 0.0);
    let (coarse, se_c) = survival_at(&m, 2e-2, 1.0, 40_000);
    let (fine, se_f) = survival_at(&m, 2e-3, 1.0, 40_000);
    assert!((coarse - fine).abs() < 4.0 * se_c.hypot(se_f), "{coarse} vs {fine}");
    let exact = 0.424_176_44;
    assert!((fine - exact).abs() < 4.0 * se_f, "{fine} vs {exact}");
}

#[test]
fn killing_clock_matches_exponential_law() {
    // Reflected BM with κ = 0.5: survival is exactly e^{−t/2}.
    let m = unit("0", "0.5", 1.0);
    for dt in [1e-1, 1e-2] {
        let (p, se) = survival_at(&m, dt, 2.0, 40_000);
        assert!((p - (-1.0f64).exp()).abs() < 4.0 * se, "dt = {dt}: {p}");
    }
}

#[test]
fn killing_rate_fit_converges_to_lambda() {
    // Absorbed OU has λ̲ = 1; constant κ = 1 shifts it to 2.
    let m = unit("-x", "1", 0.0);
    let cfg = SimConfig::new(5e-3, 3.0, 200_000, 5, InitialLaw::Point(1.0));
    let e = simulate_ensemble(&m, &cfg, &[]).unwrap();
    let akr = estimate_akr(&e.survival, [1.0, 3.0]).unwrap();
    assert!((akr.eta - 2.0).abs() < 0.1, "{akr:?}");
}
