use proptest::prelude::*;

use qsd::eigen::{find_lambda_lower, EigenSolution, PrincipalEigenvalue};
use qsd::lebras::{bessel_k_imag, lebras_lambda_lower, BoundaryForm, LeBrasParams};
use qsd::mc::{estimate_a, simulate_ensemble, InitialLaw, SimConfig};
use qsd::model::{check_gb, UnitDiffusionModel};
use qsd::verdict::{decide, Eta, KStatus, Mode};

fn unit(drift: &str, kappa: &str, p0: f64) -> UnitDiffusionModel {
    UnitDiffusionModel::from_unit(drift, kappa, f64::INFINITY, p0, None).unwrap()
}

fn bare_eigenvalue(value: f64, integrable: bool) -> PrincipalEigenvalue {
    PrincipalEigenvalue {
        value,
        domain_right: f64::INFINITY,
        bracket: [value, value],
        x_max: 400.0,
        truncation_history: Vec::new(),
        converged: true,
        integrable,
        mass: 1.0,
        warnings: Vec::new(),
        eigenfunction: EigenSolution {
            lambda: value,
            grid: vec![],
            phi: vec![],
            psi: vec![],
            dphi: vec![],
            ln_abs_phi: vec![],
            first_zero: f64::INFINITY,
            x_max: 400.0,
            wkb_from: None,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constant_killing_shifts_lambda(c in 0.0f64..3.0, slope in 0.5f64..2.0) {
        let m = unit(&format!("-{slope}*x"), "0", 0.0);
        let a = find_lambda_lower(&m).unwrap().value;
        let b = find_lambda_lower(&m.with_extra_killing(c)).unwrap().value;
        prop_assert!(((b - a) - c).abs() < 1e-6, "shift {} for c = {}", b - a, c);
        // ψ = x gives λ = slope.
        prop_assert!((a - slope).abs() < 1e-6);
    }

    #[test]
    fn bessel_order_is_even(y in 0.0f64..20.0, x in 0.2f64..30.0) {
        let a = bessel_k_imag(y, x).unwrap();
        let b = bessel_k_imag(-y, x).unwrap();
        prop_assert_eq!(a.k_value, b.k_value);
        prop_assert_eq!(a.kprime_value, b.kprime_value);
    }

    #[test]
    fn lebras_lambda_above_drift_floor(sigma in 0.5f64..1.5, excess in 0.05f64..1.5, k in 0.2f64..3.0) {
        let b = 0.5 * sigma * sigma + excess;
        let p = LeBrasParams::new(sigma, b, k).unwrap();
        let s = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
        prop_assert!(s.y_tilde > 0.0);
        prop_assert!(s.lambda_lower > 0.5 * p.drift_tilde().powi(2));
        prop_assert!(s.xi.iter().all(|&v| v > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_input_gets_a_verdict(lambda in 0.0f64..5.0, integrable: bool, k_kind in 0u8..3, k in 0.0f64..10.0) {
        let k = match k_kind {
            0 => KStatus::Finite(k),
            1 => KStatus::Infinite,
            _ => KStatus::None,
        };
        let cond = check_gb(&unit("0", "1", 1.0), 1e3);
        let v = decide(&bare_eigenvalue(lambda, integrable), k, &cond);
        prop_assert!(!v.rationale.is_empty());
        if v.mode == Mode::ConvergesToQSD {
            prop_assert_eq!(v.eta, Eta::Value(lambda));
        }
        if !integrable {
            prop_assert_eq!(v.mode, Mode::EscapesToInfinity);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn survival_counts_are_monotone_and_seeded(seed: u64, rate in 0.1f64..2.0, start in 0.2f64..3.0) {
        let m = unit("-0.5", &format!("{rate}*x"), 1.0);
        let cfg = SimConfig::new(1e-2, 2.0, 500, seed, InitialLaw::Point(start));
        let a = simulate_ensemble(&m, &cfg, &[1.0, 2.0]).unwrap();
        prop_assert!(a.survival.alive.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(a.survival.alive[0], 500);
        for h in a.histograms.iter().filter(|h| !h.empty) {
            prop_assert!((h.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let b = simulate_ensemble(&m, &cfg, &[1.0, 2.0]).unwrap();
        prop_assert_eq!(a.survival.to_table().to_csv_string(), b.survival.to_table().to_csv_string());
    }

    #[test]
    fn restart_ratios_compose(seed: u64, t in 1usize..5, r1 in 1usize..5, r2 in 1usize..5) {
        // a_t(r1 + r2) = a_t(r1)·a_{t+r1}(r2) holds exactly for counts.
        let m = unit("0", "0.8", 1.0);
        let cfg = SimConfig::new(1e-2, 0.2, 2000, seed, InitialLaw::Point(1.0));
        let c = simulate_ensemble(&m, &cfg, &[]).unwrap().survival;
        let (t, r1, r2) = (t as f64 * 0.01, r1 as f64 * 0.01, r2 as f64 * 0.01);
        let whole = estimate_a(&c, t, r1 + r2).unwrap().value;
        let split = estimate_a(&c, t, r1).unwrap().value * estimate_a(&c, t + r1, r2).unwrap().value;
        prop_assert!((whole - split).abs() < 1e-12);
    }
}
