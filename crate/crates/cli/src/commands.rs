use std::fmt::Write as _;
use std::fs;

use qsd::eigen::{find_lambda_lower_with, EigenError, qsd_density, truncated_spectrum, LowerOptions, PrincipalEigenvalue};
use qsd::io::{Cell, Table};
use qsd::lebras::{lebras_lambda_lower, BoundaryForm, LeBrasParams};
use qsd::mc::{estimate_akr, estimate_omega, histograms_table, simulate_ensemble, Ensemble, InitialLaw, SimConfig};
use qsd::model::{check_gb, check_lp_prime, classify_boundary, parse_model_with, to_unit_diffusion, DiffusionSpec, Side, UnitDiffusionModel};
use qsd::verdict::{compare_mc_to_qsd, decide, detect_kappa_limit, resolve_with_rate, Mode};

use crate::artifacts::Run;
use crate::{CliError, EigenArgs, LebrasArgs, McArgs, ModelArgs, SimulateArgs, SpectrumArgs, Status, VerdictArgs};

/// Upper end of the grids used for growth conditions.
const CONDITION_Y_MAX: f64 = 1e3;
/// Upper end of the grid used to detect the limit of κ̃.
const K_Y_MAX: f64 = 1e4;

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn eigen_error(e: EigenError) -> CliError {
    match e {
        EigenError::InvalidArgument(m) => CliError::Config(m),
        other => numeric(other),
    }
}

struct Loaded {
    spec: DiffusionSpec,
    model: UnitDiffusionModel,
}

fn load(args: &ModelArgs) -> Result<Loaded, CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let spec = parse_model_with(&text, &args.set).map_err(|e| CliError::Config(e.to_string()))?;
    let model = to_unit_diffusion(&spec, None).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Loaded { spec, model })
}

/// Canonical model text followed by the subcommand's own settings.
fn settings(spec: &DiffusionSpec, subcommand: &str, extra: &[(&str, String)]) -> String {
    let mut s = format!("subcommand = {subcommand}\n{}", spec.to_config());
    if !s.ends_with('\n') {
        s.push('\n');
    }
    for (k, v) in extra {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

fn mc_settings(mc: &McArgs) -> Vec<(&'static str, String)> {
    vec![
        ("paths", mc.paths.to_string()),
        ("dt", format!("{:e}", mc.dt)),
        ("tmax", format!("{:e}", mc.tmax)),
        ("start", mc.start.map_or_else(|| "reference".into(), |x| format!("{x:e}"))),
    ]
}

fn sim_config(model: &UnitDiffusionModel, mc: &McArgs) -> SimConfig {
    SimConfig::new(mc.dt, mc.tmax, mc.paths, mc.seed, InitialLaw::Point(mc.start.unwrap_or(model.reference)))
}

fn lower(model: &UnitDiffusionModel, tol: f64) -> Result<PrincipalEigenvalue, CliError> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(CliError::Config(format!("--lambda-tol {tol} must lie in (0, 1)")));
    }
    find_lambda_lower_with(model, &LowerOptions { rel_tol: tol, ..LowerOptions::default() }).map_err(eigen_error)
}

pub fn classify(args: &ModelArgs) -> Result<Status, CliError> {
    let Loaded { spec, model } = load(args)?;
    let mut run = Run::start(&args.out, "classify", settings(&spec, "classify", &[]), None)?;
    let left = classify_boundary(&model, Side::Left);
    let right = classify_boundary(&model, Side::Right);
    let report = serde_json::json!({
        "model": spec.summary_json(),
        "left": left,
        "right": right,
        "lp_prime": check_lp_prime(&model, CONDITION_Y_MAX),
        "growth_bounds": check_gb(&model, CONDITION_Y_MAX),
        "K": detect_kappa_limit(&model, K_Y_MAX),
    });
    run.json("classify.json", &report)?;
    println!("left endpoint: {:?}, right endpoint: {:?}", left.class, right.class);
    println!("K = {}", report["K"]);
    run.finish()?;
    Ok(Status::Done)
}

pub fn eigen(args: &EigenArgs) -> Result<Status, CliError> {
    let Loaded { spec, model } = load(&args.model)?;
    let extra = [("lambda_tol", format!("{:e}", args.lambda_tol))];
    let mut run = Run::start(&args.model.out, "eigen", settings(&spec, "eigen", &extra), None)?;
    let pe = lower(&model, args.lambda_tol)?;
    run.json("lambda_lower.json", &pe)?;
    run.csv("phi.csv", pe.eigenfunction.to_table())?;
    if pe.integrable {
        let q = qsd_density(&pe, &pe.eigenfunction).map_err(numeric)?;
        run.csv("qsd.csv", q.to_table())?;
    }
    println!("lambda_lower = {:.12} (bracket width {:.1e})", pe.value, pe.bracket[1] - pe.bracket[0]);
    println!("integrable = {}, truncation x_max = {}", pe.integrable, pe.x_max);
    for w in &pe.warnings {
        println!("warning: {w}");
    }
    run.finish()?;
    Ok(Status::Done)
}

pub fn spectrum(args: &SpectrumArgs) -> Result<Status, CliError> {
    let Loaded { spec, model } = load(&args.model)?;
    let r = match args.r {
        Some(r) => r,
        None if model.right.is_finite() => model.right,
        None => return Err(CliError::Config("the domain is a half-line; pass --r".into())),
    };
    let extra = [("r", format!("{r:e}")), ("n", args.n.to_string())];
    let mut run = Run::start(&args.model.out, "spectrum", settings(&spec, "spectrum", &extra), None)?;
    let values = truncated_spectrum(&model, r, args.n).map_err(eigen_error)?;
    let mut t = Table::new(&["index", "lambda"]);
    for (i, v) in values.iter().enumerate() {
        t.push(vec![Cell::from(i), (*v).into()]);
    }
    run.csv("spectrum.csv", t)?;
    println!("first {} eigenvalues on (0, {r}): {values:?}", args.n);
    run.finish()?;
    Ok(Status::Done)
}

fn write_ensemble(run: &mut Run, e: &Ensemble) -> Result<(), CliError> {
    run.csv("survival.csv", e.survival.to_table())?;
    run.csv("histogram.csv", histograms_table(&e.histograms))
}

/// η fitted on the second half of the horizon, or the reason it could not be.
fn fitted_rate(e: &Ensemble, tmax: f64) -> serde_json::Value {
    match estimate_akr(&e.survival, [0.5 * tmax, tmax]) {
        Ok(a) => serde_json::to_value(a).unwrap_or(serde_json::Value::Null),
        Err(err) => serde_json::json!({ "error": err.to_string() }),
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<Status, CliError> {
    let Loaded { spec, model } = load(&args.model)?;
    let mut snapshots = if args.snapshots.is_empty() { vec![args.mc.tmax] } else { args.snapshots.clone() };
    snapshots.sort_by(f64::total_cmp);
    if snapshots.iter().any(|&t| !(t > 0.0 && t <= args.mc.tmax)) {
        return Err(CliError::Config(format!("snapshot times must lie in (0, {}]", args.mc.tmax)));
    }
    let mut extra = mc_settings(&args.mc);
    extra.push(("snapshots", format!("{snapshots:?}")));
    extra.push(("omega_x", format!("{:?}", args.omega_x)));
    let mut run = Run::start(&args.model.out, "simulate", settings(&spec, "simulate", &extra), Some(args.mc.seed))?;
    let cfg = sim_config(&model, &args.mc);
    let e = simulate_ensemble(&model, &cfg, &snapshots).map_err(sim_error)?;
    write_ensemble(&mut run, &e)?;
    if !args.omega_x.is_empty() {
        let w = estimate_omega(&model, &cfg, &args.omega_x, &snapshots, model.reference).map_err(sim_error)?;
        run.csv("omega.csv", w.to_table())?;
    }
    let last = *e.survival.fraction.last().unwrap_or(&0.0);
    let summary = serde_json::json!({
        "n_paths": e.survival.n_paths,
        "escaped": e.survival.escaped,
        "survival_at_tmax": last,
        "killing_rate_fit": fitted_rate(&e, args.mc.tmax),
    });
    run.json("simulate.json", &summary)?;
    println!("survival at t = {}: {last:.6} ({} paths, {} escaped)", args.mc.tmax, e.survival.n_paths, e.survival.escaped);
    run.finish()?;
    Ok(Status::Done)
}

fn sim_error(e: qsd::mc::McError) -> CliError {
    match e {
        qsd::mc::McError::InvalidConfig(m) | qsd::mc::McError::Unsupported(m) => CliError::Config(m),
        other => numeric(other),
    }
}

pub fn verdict(args: &VerdictArgs) -> Result<Status, CliError> {
    let Loaded { spec, model } = load(&args.model)?;
    let mut extra = mc_settings(&args.mc);
    extra.push(("lambda_tol", format!("{:e}", args.lambda_tol)));
    extra.push(("with_mc", args.with_mc.to_string()));
    // The seed is recorded even when the simulation turns out not to run.
    let mut run = Run::start(&args.model.out, "verdict", settings(&spec, "verdict", &extra), Some(args.mc.seed))?;
    let pe = lower(&model, args.lambda_tol)?;
    let cond = check_gb(&model, CONDITION_Y_MAX);
    let mut v = decide(&pe, detect_kappa_limit(&model, K_Y_MAX), &cond);
    v.evidence.insert("growth_bounds".into(), serde_json::to_value(&cond).unwrap_or_default());

    if v.mode == Mode::Ambiguous || args.with_mc {
        let cfg = sim_config(&model, &args.mc);
        let e = simulate_ensemble(&model, &cfg, &[args.mc.tmax]).map_err(sim_error)?;
        write_ensemble(&mut run, &e)?;
        if let Ok(a) = estimate_akr(&e.survival, [0.5 * args.mc.tmax, args.mc.tmax]) {
            resolve_with_rate(&mut v, &a);
        }
        let fit = fitted_rate(&e, args.mc.tmax);
        if let (Some(eta), Some(serde_json::Value::Array(c))) = (fit["eta"].as_f64(), v.evidence.get("eta_candidates")) {
            let nearest = c.iter().filter_map(|x| x.as_f64()).min_by(|a, b| (a - eta).abs().total_cmp(&(b - eta).abs()));
            v.evidence.insert("mc_nearest_candidate".into(), serde_json::json!(nearest));
        }
        v.evidence.insert("mc_killing_rate".into(), fit);
        if pe.integrable {
            let q = qsd_density(&pe, &pe.eigenfunction).map_err(numeric)?;
            if let Ok(c) = compare_mc_to_qsd(&e.histograms[0], &q, None) {
                v.evidence.insert("mc_qsd_distance".into(), serde_json::to_value(c).unwrap_or_default());
            }
        }
    }
    run.json("verdict.json", &v)?;
    println!("mode = {:?}, eta = {}, lambda_lower = {:.10}", v.mode, serde_json::to_string(&v.eta).unwrap_or_default(), v.lambda_lower);
    println!("rationale: {}", v.rationale.join(", "));
    if let Some(r) = &v.recommendation {
        println!("recommendation: {r}");
    }
    run.finish()?;
    Ok(if args.strict && v.mode == Mode::Ambiguous { Status::AmbiguousStrict } else { Status::Done })
}

pub fn lebras(args: &LebrasArgs) -> Result<Status, CliError> {
    let p = LeBrasParams::new(args.sigma, args.b, args.k).map_err(|e| CliError::Config(e.to_string()))?;
    let boundary = if args.derivative_zero { BoundaryForm::DerivativeZero } else { BoundaryForm::ZeroFlux };
    let canonical = format!("subcommand = lebras\nsigma = {:e}\nb = {:e}\nk = {:e}\nboundary = {boundary:?}\n", p.sigma, p.b, p.k);
    let mut run = Run::start(&args.out, "lebras", canonical, None)?;
    let sol = lebras_lambda_lower(&p, boundary).map_err(numeric)?;
    run.json("lebras.json", sol.summary_json())?;
    run.csv("qsd_x.csv", sol.qsd_x_table())?;
    run.csv("qsd_y.csv", sol.qsd_y_table())?;
    println!("x0 = {:.12}, y_tilde = {:.12}, lambda_lower = {:.12}", sol.x0, sol.y_tilde, sol.lambda_lower);
    run.finish()?;
    Ok(Status::Done)
}
