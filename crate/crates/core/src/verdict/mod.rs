//! Long-run verdict: convergence to the QSD, escape to infinity, or a case
//! the spectral data cannot settle, together with the asymptotic killing
//! rate η.
//!
//! The decision uses λ̲, the integrability of φ_λ̲ and the limit K of κ̃ at
//! infinity. Rationale entries are stable identifiers for the rule that
//! fired, so reports can be compared across runs.

mod compare;

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::eigen::{EigenError, PrincipalEigenvalue};
use crate::mc::{AkrEstimate, McError};
use crate::model::{ConditionReport, GbVariant, UnitDiffusionModel};
use crate::numeric::geomspace;

pub use compare::{
    bin_density, check_lambda_invariance, compare_mc_to_qsd, omega_limit_at, omega_limit_curve, InvarianceCheck, OmegaLimit, QsdComparison,
    APPLICABLE_MASS,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerdictError {
    #[error("histogram has no survivors")]
    EmptyHistogram,
    #[error("psi at the reference point is {value}, too small to normalize by")]
    DegenerateReference { value: f64 },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Mc(#[from] McError),
}

/// Limit of κ̃ at the right endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KStatus {
    Finite(f64),
    Infinite,
    /// No numerical limit detected (oscillation or slow convergence).
    None,
}

impl Serialize for KStatus {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KStatus::Finite(v) => s.serialize_f64(*v),
            KStatus::Infinite => s.serialize_str("inf"),
            KStatus::None => s.serialize_none(),
        }
    }
}

/// Asymptotic killing rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eta {
    Value(f64),
    Infinite,
    Unknown,
}

impl Eta {
    pub fn value(&self) -> Option<f64> {
        match self {
            Eta::Value(v) => Some(*v),
            _ => None,
        }
    }
}

impl Serialize for Eta {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Eta::Value(v) => s.serialize_f64(*v),
            Eta::Infinite => s.serialize_str("inf"),
            Eta::Unknown => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    ConvergesToQSD,
    EscapesToInfinity,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DichotomyVerdict {
    pub mode: Mode,
    pub eta: Eta,
    pub lambda_lower: f64,
    #[serde(rename = "K")]
    pub k: KStatus,
    pub integrable: bool,
    pub rationale: Vec<String>,
    /// For an undecided case, the outcome the growth bounds point towards.
    pub leaning: Option<Mode>,
    pub recommendation: Option<String>,
    pub evidence: BTreeMap<String, serde_json::Value>,
}

const K_GRID_POINTS: usize = 2048;
const K_ATOL: f64 = 1e-8;
const K_RTOL: f64 = 1e-6;

/// K from κ̃ over the last two decades of a geometric grid on `[1, y_max]`.
pub fn detect_kappa_limit(model: &UnitDiffusionModel, y_max: f64) -> KStatus {
    if model.right.is_finite() || !(y_max > 100.0) {
        return KStatus::None;
    }
    let grid = geomspace(1.0, y_max, K_GRID_POINTS);
    let tail: Vec<(f64, f64)> = grid.iter().filter(|&&y| y >= y_max / 100.0).map(|&y| (y, model.kappa(y))).collect();
    if tail.iter().any(|p| p.1.is_nan()) {
        return KStatus::None;
    }
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let last = tail.last().unwrap().1;
    if hi.is_finite() && hi - lo <= K_ATOL + K_RTOL * last.abs() {
        return KStatus::Finite(last);
    }
    let nondecreasing = tail.windows(2).all(|w| w[1].1 >= w[0].1 || w[1].1 >= w[0].1 - 1e-12 * w[0].1.abs());
    let at = |y: f64| tail.iter().find(|p| p.0 >= y).map_or(last, |p| p.1);
    let gain_prev = at(y_max / 10.0) - tail[0].1;
    let gain_last = last - at(y_max / 10.0);
    if nondecreasing && gain_last > 0.0 && gain_last >= 0.5 * gain_prev {
        KStatus::Infinite
    } else {
        KStatus::None
    }
}

/// `|K − λ̲|` below this counts as equality.
pub fn equality_tolerance(lambda_lower: f64) -> f64 {
    1e-6f64.max(1e-4 * lambda_lower.abs())
}

/// Apply the decision rules in order; every input maps to a verdict.
pub fn decide(pe: &PrincipalEigenvalue, k: KStatus, conditions: &ConditionReport) -> DichotomyVerdict {
    let lambda = pe.value;
    let mut v = DichotomyVerdict {
        mode: Mode::Ambiguous,
        eta: Eta::Unknown,
        lambda_lower: lambda,
        k,
        integrable: pe.integrable,
        rationale: Vec::new(),
        leaning: None,
        recommendation: None,
        evidence: BTreeMap::new(),
    };
    let because = |v: &mut DichotomyVerdict, r: &str| v.rationale.push(r.to_string());

    if pe.domain_right.is_finite() && pe.integrable {
        v.mode = Mode::ConvergesToQSD;
        v.eta = Eta::Value(lambda);
        because(&mut v, "compact_domain_discrete_spectrum");
        return v;
    }
    if !pe.integrable {
        v.mode = Mode::EscapesToInfinity;
        because(&mut v, "eigenfunction_not_integrable");
        v.eta = match k {
            KStatus::Finite(c) => {
                because(&mut v, "escape_rate_is_killing_limit");
                Eta::Value(c)
            }
            KStatus::Infinite => {
                because(&mut v, "escape_with_unbounded_killing");
                Eta::Infinite
            }
            KStatus::None => {
                because(&mut v, "killing_limit_not_detected");
                Eta::Unknown
            }
        };
        return v;
    }
    let tol = equality_tolerance(lambda);
    match k {
        KStatus::Infinite => {
            v.mode = Mode::ConvergesToQSD;
            v.eta = Eta::Value(lambda);
            because(&mut v, "killing_unbounded");
            because(&mut v, "killing_limit_exceeds_bottom");
        }
        KStatus::Finite(c) if c > lambda + tol => {
            v.mode = Mode::ConvergesToQSD;
            v.eta = Eta::Value(lambda);
            because(&mut v, "killing_limit_exceeds_bottom");
        }
        KStatus::Finite(c) if (c - lambda).abs() <= tol => {
            v.eta = Eta::Value(lambda);
            because(&mut v, "killing_limit_equals_bottom");
        }
        KStatus::Finite(c) => {
            because(&mut v, "killing_limit_below_bottom");
            if conditions.gb_variant != GbVariant::None {
                because(&mut v, "growth_bounds_hold");
                v.leaning = Some(Mode::ConvergesToQSD);
            }
            v.evidence.insert("eta_candidates".into(), serde_json::json!([lambda, c]));
            v.recommendation = Some(format!(
                "run the simulation with --with-mc and compare the fitted killing rate with {lambda} and {c}"
            ));
        }
        KStatus::None => {
            because(&mut v, "killing_limit_not_detected");
            v.recommendation = Some("run the simulation with --with-mc to estimate the killing rate".into());
        }
    }
    v
}

/// Settle the `K < λ̲` case from a fitted killing rate: the two candidate
/// outcomes are convergence with `η = λ̲` and escape with `η = K`. The
/// verdict changes only when the interval contains exactly one candidate.
pub fn resolve_with_rate(v: &mut DichotomyVerdict, fit: &AkrEstimate) {
    let KStatus::Finite(k) = v.k else { return };
    if v.mode != Mode::Ambiguous || !v.integrable || k >= v.lambda_lower - equality_tolerance(v.lambda_lower) {
        return;
    }
    let (bottom, limit) = (fit.ci_contains(v.lambda_lower), fit.ci_contains(k));
    match (bottom, limit) {
        (true, false) => {
            v.mode = Mode::ConvergesToQSD;
            v.eta = Eta::Value(v.lambda_lower);
            v.rationale.push("simulated_rate_matches_bottom".into());
        }
        (false, true) => {
            v.mode = Mode::EscapesToInfinity;
            v.eta = Eta::Value(k);
            v.rationale.push("simulated_rate_matches_killing_limit".into());
        }
        _ => v.rationale.push("simulated_rate_inconclusive".into()),
    }
    if v.mode != Mode::Ambiguous {
        v.leaning = None;
        v.recommendation = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::EigenSolution;
    use crate::model::check_gb;

    fn unit(drift: &str, kappa: &str, p0: f64) -> UnitDiffusionModel {
        UnitDiffusionModel::from_unit(drift, kappa, f64::INFINITY, p0, None).unwrap()
    }

    fn pe(value: f64, integrable: bool) -> PrincipalEigenvalue {
        PrincipalEigenvalue {
            value,
            domain_right: f64::INFINITY,
            bracket: [value, value],
            x_max: 400.0,
            truncation_history: Vec::new(),
            converged: true,
            integrable,
            mass: if integrable { 1.0 } else { f64::INFINITY },
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

    #[test]
    fn kappa_limits() {
        assert_eq!(detect_kappa_limit(&unit("0", "0.4", 1.0), 1e3), KStatus::Finite(0.4));
        assert_eq!(detect_kappa_limit(&unit("0", "exp(x)", 1.0), 1e3), KStatus::Infinite);
        assert_eq!(detect_kappa_limit(&unit("0", "x", 1.0), 1e3), KStatus::Infinite);
        assert_eq!(detect_kappa_limit(&unit("0", "log(1 + x)", 1.0), 1e3), KStatus::Infinite);
        assert_eq!(detect_kappa_limit(&unit("0", "2 + sin(x)", 1.0), 1e3), KStatus::None);
        match detect_kappa_limit(&unit("0", "1 - exp(-x)", 1.0), 1e4) {
            KStatus::Finite(c) => assert!((c - 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn clause_table_is_total() {
        let cond = check_gb(&unit("0", "1", 1.0), 1e3);
        let lambda = 0.8;
        for integrable in [false, true] {
            for k in [KStatus::Finite(0.3), KStatus::Finite(lambda), KStatus::Finite(2.0), KStatus::Infinite, KStatus::None] {
                let v = decide(&pe(lambda, integrable), k, &cond);
                assert!(!v.rationale.is_empty());
                if !integrable {
                    assert_eq!(v.mode, Mode::EscapesToInfinity);
                    if let KStatus::Finite(c) = k {
                        assert_eq!(v.eta, Eta::Value(c));
                    }
                }
                if v.mode == Mode::ConvergesToQSD {
                    assert_eq!(v.eta, Eta::Value(lambda));
                }
            }
        }
        let at = |k| decide(&pe(lambda, true), k, &cond);
        assert_eq!(at(KStatus::Infinite).mode, Mode::ConvergesToQSD);
        assert_eq!(at(KStatus::Finite(2.0)).mode, Mode::ConvergesToQSD);
        let eq = at(KStatus::Finite(lambda + 1e-7));
        assert_eq!((eq.mode, eq.eta), (Mode::Ambiguous, Eta::Value(lambda)));
        let below = at(KStatus::Finite(0.3));
        assert_eq!((below.mode, below.eta), (Mode::Ambiguous, Eta::Unknown));
        assert!(below.recommendation.is_some());
        assert_eq!(at(KStatus::None).mode, Mode::Ambiguous);
    }

    #[test]
    fn fitted_rate_settles_the_lower_limit_case() {
        let cond = check_gb(&unit("0", "1", 1.0), 1e3);
        let fit = |lo: f64, hi: f64| AkrEstimate {
            eta: 0.5 * (lo + hi),
            se: 0.1,
            ci_lo: lo,
            ci_hi: hi,
            window: [1.0, 2.0],
            points: 100,
            resamples: 200,
        };
        let base = decide(&pe(1.0, true), KStatus::Finite(0.0), &cond);
        let mut v = base.clone();
        resolve_with_rate(&mut v, &fit(0.8, 1.1));
        assert_eq!((v.mode, v.eta), (Mode::ConvergesToQSD, Eta::Value(1.0)));
        let mut v = base.clone();
        resolve_with_rate(&mut v, &fit(-0.1, 0.2));
        assert_eq!((v.mode, v.eta), (Mode::EscapesToInfinity, Eta::Value(0.0)));
        let mut v = base.clone();
        resolve_with_rate(&mut v, &fit(-0.1, 1.2));
        assert_eq!(v.mode, Mode::Ambiguous);
        // Equality and undetected limits stay as decided.
        let mut v = decide(&pe(1.0, true), KStatus::Finite(1.0), &cond);
        resolve_with_rate(&mut v, &fit(0.8, 1.1));
        assert_eq!(v.mode, Mode::Ambiguous);
    }

    #[test]
    fn serializes_extended_values() {
        let cond = check_gb(&unit("0", "1", 1.0), 1e3);
        let v = decide(&pe(0.0, false), KStatus::Infinite, &cond);
        let j = serde_json::to_value(&v).unwrap();
        assert_eq!(j["mode"], "EscapesToInfinity");
        assert_eq!(j["eta"], "inf");
        assert_eq!(j["K"], "inf");
        let v = decide(&pe(0.5, true), KStatus::None, &cond);
        let j = serde_json::to_value(&v).unwrap();
        assert!(j["eta"].is_null() && j["K"].is_null());
    }
}
