use qsd::eigen::{find_lambda_lower, principal_eigenfunction};
use qsd::lebras::{lebras_lambda_lower, phi_unnormalized, tail_check, BoundaryForm, LeBrasParams};
use qsd::numeric::quad::interp;

fn unit_params() -> LeBrasParams {
    LeBrasParams::new(1.0, 1.0, 1.0).unwrap()
}

#[test]
fn closed_form_matches_spectral_solver() {
    let p = unit_params();
    let sol = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
    let pe = find_lambda_lower(&p.unit_model().unwrap()).unwrap();
    let rel = (sol.lambda_lower - pe.value).abs() / pe.value;
    assert!(rel < 1e-4, "closed form {} vs solver {}", sol.lambda_lower, pe.value);
    assert!(pe.integrable);
}

#[test]
fn printed_boundary_form_disagrees_with_solver() {
    let p = unit_params();
    let printed = lebras_lambda_lower(&p, BoundaryForm::DerivativeZero).unwrap();
    let pe = find_lambda_lower(&p.unit_model().unwrap()).unwrap();
    assert!((printed.lambda_lower - pe.value).abs() > 0.1);
}

#[test]
fn eigenfunctions_agree_after_normalization_at_one() {
    let p = unit_params();
    let sol = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
    let model = p.unit_model().unwrap();
    let num = principal_eigenfunction(&model, sol.lambda_lower, 20.0, 20001).unwrap();
    let num_at = |y: f64| interp(&num.grid, &num.ln_abs_phi, y).exp();
    let exact_ref = phi_unnormalized(&p, sol.y_tilde, 1.0).unwrap();
    let num_ref = num_at(1.0);
    let mut worst = 0.0f64;
    for i in 0..=200 {
        let y = 10.0 * i as f64 / 200.0;
        let exact = phi_unnormalized(&p, sol.y_tilde, y).unwrap() / exact_ref;
        let numeric = num_at(y) / num_ref;
        worst = worst.max((numeric / exact - 1.0).abs());
    }
    assert!(worst < 1e-3, "max relative deviation {worst}");
}

#[test]
fn tail_follows_printed_exponent() {
    let p = unit_params();
    let sol = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
    let t = tail_check(&p, sol.y_tilde, 50.0, 500.0).unwrap();
    assert!(t.max_relative_deviation < 0.02, "{t:?}");
}

#[test]
fn density_positive_across_parameters() {
    for (s, b, k) in [(0.7, 0.5, 0.2), (1.2, 2.0, 3.0), (1.0, 0.6, 1.0)] {
        let p = LeBrasParams::new(s, b, k).unwrap();
        let sol = lebras_lambda_lower(&p, BoundaryForm::ZeroFlux).unwrap();
        assert!(sol.positive_beyond_x0);
        assert!(sol.xi.iter().chain(&sol.phi).all(|&v| v > 0.0));
        assert!(sol.lambda_lower > 0.5 * p.drift_tilde().powi(2));
    }
}
