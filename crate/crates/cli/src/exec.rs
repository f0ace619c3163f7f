use std::path::Path;

use wtrap_core::analysis::{convergence_points, gate_and_fit, gate_offenders, ConvergencePoint};
use wtrap_core::benchmarks::{lookup_oracle, lookup_system, MomentOracle, SYSTEM_NAMES};
use wtrap_core::ensemble::{run_ensemble, EnsembleSpec, SchemeChoice};
use wtrap_core::error::AnalysisError;
use wtrap_core::report::{render_report, EnsembleRow, FitRow, Report};
use wtrap_core::richardson::run_richardson;
use wtrap_core::rng::derive_seed;
use wtrap_core::schemes::make_theta_scheme;
use wtrap_core::{fit_slope, Functional, SdeSystem};

use crate::args::{
    Cli, Command, CommonArgs, ConvergenceArgs, SimulateArgs, SweepMode, ThetaSweepArgs,
};
use crate::presets::{lookup_preset, DEFAULT_SCALE};

/// Usage problems exit 2 before anything is written; numerical or I/O
/// failures exit 1.
pub enum AppError {
    Usage(String),
    Failure(String),
}

type Result<T> = std::result::Result<T, AppError>;

const FUNCTIONAL_NAMES: &str = "x1, x1sq, x2sq, norm-sq";

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Convergence(args) => cmd_convergence(args),
        Command::ThetaSweep(args) => cmd_theta_sweep(args),
    }
}

/// Either a plain one-step scheme or the coupled extrapolation pair.
#[derive(Clone, Copy)]
enum RunScheme {
    Plain(SchemeChoice),
    Richardson,
}

impl RunScheme {
    fn name(&self) -> &'static str {
        match self {
            RunScheme::Plain(s) => s.name(),
            RunScheme::Richardson => "richardson",
        }
    }

    fn theta(&self) -> Option<f64> {
        match self {
            RunScheme::Plain(s) => s.theta(),
            RunScheme::Richardson => None,
        }
    }
}

fn parse_system(name: &str) -> Result<SdeSystem> {
    lookup_system(name).ok_or_else(|| {
        AppError::Usage(format!(
            "unknown system {name:?}; available: {}",
            SYSTEM_NAMES.join(", ")
        ))
    })
}

fn parse_functional(name: &str) -> Result<Functional> {
    Functional::parse(name).ok_or_else(|| {
        AppError::Usage(format!(
            "unknown functional {name:?}; available: {FUNCTIONAL_NAMES}"
        ))
    })
}

fn resolve_scheme(name: &str, theta: Option<f64>) -> Result<RunScheme> {
    match name {
        "wt" => {
            let theta = theta.ok_or_else(|| AppError::Usage("scheme wt needs --theta".into()))?;
            let scheme = make_theta_scheme(theta).map_err(|e| AppError::Usage(e.to_string()))?;
            Ok(RunScheme::Plain(SchemeChoice::WeakTrapezoidal(scheme)))
        }
        "euler" | "midpoint-drift" | "richardson" => {
            if theta.is_some() {
                return Err(AppError::Usage(format!(
                    "--theta only applies to the wt scheme, not {name}"
                )));
            }
            Ok(match name {
                "euler" => RunScheme::Plain(SchemeChoice::Euler),
                "midpoint-drift" => RunScheme::Plain(SchemeChoice::MidpointDrift),
                _ => RunScheme::Richardson,
            })
        }
        other => Err(AppError::Usage(format!(
            "unknown scheme {other:?}; available: wt, euler, midpoint-drift, richardson"
        ))),
    }
}

fn require_oracle(system: &str, functional: Functional) -> Result<MomentOracle> {
    lookup_oracle(system, functional).ok_or_else(|| {
        AppError::Usage(format!(
            "no closed-form moment is registered for system {system:?} with functional {:?}; \
             convergence runs need one to measure errors",
            functional.name()
        ))
    })
}

/// Pre-flight check of one planned ensemble; failures here are flag
/// problems, so they must surface before anything is written.
fn validate_run(
    system: &SdeSystem,
    h: f64,
    t_final: f64,
    paths: u64,
    functional: Functional,
) -> Result<()> {
    let probe = EnsembleSpec {
        system: system.clone(),
        scheme: SchemeChoice::Euler,
        h,
        t_final,
        n_paths: paths,
        master_seed: 0,
        functional,
    };
    probe
        .validate()
        .map(|_| ())
        .map_err(|e| AppError::Usage(e.to_string()))
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon_pool(workers)?;
    Ok(pool.install(f))
}

fn rayon_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AppError::Failure(format!("cannot build a {workers}-thread pool: {e}")))
}

fn out_label(common: &CommonArgs) -> String {
    common
        .out
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| "-".into())
}

fn write_report(out: Option<&Path>, report: &Report) -> Result<()> {
    let text = render_report(report);
    match out {
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| AppError::Failure(format!("cannot write to stdout: {e}")))
        }
        Some(path) => std::fs::write(path, text)
            .map_err(|e| AppError::Failure(format!("cannot write {}: {e}", path.display()))),
    }
}

fn join_floats(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn point_row(
    system: &str,
    scheme: &RunScheme,
    t_final: f64,
    functional: Functional,
    p: &ConvergencePoint,
) -> EnsembleRow {
    EnsembleRow {
        system: system.into(),
        scheme: scheme.name().into(),
        theta: scheme.theta(),
        h: p.h,
        t_final,
        n_paths: p.n_paths,
        seed: p.seed,
        functional: functional.name().into(),
        mean: p.mean,
        stderr: p.stderr,
        exact: Some(p.exact),
        error: Some(p.error),
        degenerate_fraction: p.degenerate_fraction,
    }
}

/// Convergence points for either scheme kind, per-h seeds derived from
/// the study seed in grid order.
fn study_points(
    system: &SdeSystem,
    scheme: &RunScheme,
    h_list: &[f64],
    t_final: f64,
    paths: u64,
    study_seed: u64,
    functional: Functional,
    oracle: MomentOracle,
) -> Result<Vec<ConvergencePoint>> {
    match scheme {
        RunScheme::Plain(choice) => convergence_points(
            system, *choice, h_list, t_final, paths, study_seed, functional, oracle,
        )
        .map_err(|e| AppError::Failure(e.to_string())),
        RunScheme::Richardson => {
            let exact = oracle(t_final, system.initial());
            let mut out = Vec::with_capacity(h_list.len());
            for (i, &h) in h_list.iter().enumerate() {
                let seed = derive_seed(study_seed, i as u64);
                let est = run_richardson(system, h, t_final, paths, seed, functional)
                    .map_err(|e| AppError::Failure(e.to_string()))?;
                out.push(ConvergencePoint {
                    h,
                    mean: est.value,
                    stderr: est.stderr,
                    exact,
                    error: exact - est.value,
                    degenerate_fraction: None,
                    n_paths: est.n_paths,
                    seed,
                });
            }
            Ok(out)
        }
    }
}

fn gate_failure_message(offenders: &[wtrap_core::GatedPoint]) -> String {
    AnalysisError::SamplingDominated(offenders.to_vec()).to_string()
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let system = parse_system(&args.system)?;
    let functional = parse_functional(&args.functional)?;
    let scheme = resolve_scheme(&args.scheme, args.theta)?;
    validate_run(&system, args.h, args.t_final, args.paths, functional)?;
    let oracle = lookup_oracle(&args.system, functional);

    let mut manifest = vec![
        (
            "tool".to_string(),
            format!("wtrap {}", env!("CARGO_PKG_VERSION")),
        ),
        ("command".to_string(), "simulate".to_string()),
        ("system".to_string(), args.system.clone()),
        ("scheme".to_string(), args.scheme.clone()),
    ];
    if let Some(theta) = scheme.theta() {
        manifest.push(("theta".to_string(), theta.to_string()));
    }
    manifest.extend([
        ("h".to_string(), args.h.to_string()),
        ("T".to_string(), args.t_final.to_string()),
        ("paths".to_string(), args.paths.to_string()),
        ("seed".to_string(), args.common.seed.to_string()),
        ("functional".to_string(), functional.name().to_string()),
        ("out".to_string(), out_label(&args.common)),
    ]);

    let row = with_workers(args.common.workers, || -> Result<EnsembleRow> {
        match scheme {
            RunScheme::Plain(choice) => {
                let spec = EnsembleSpec {
                    system: system.clone(),
                    scheme: choice,
                    h: args.h,
                    t_final: args.t_final,
                    n_paths: args.paths,
                    master_seed: args.common.seed,
                    functional,
                };
                let est = run_ensemble(&spec).map_err(|e| AppError::Failure(e.to_string()))?;
                let exact = oracle.map(|f| f(args.t_final, system.initial()));
                Ok(EnsembleRow {
                    system: args.system.clone(),
                    scheme: args.scheme.clone(),
                    theta: scheme.theta(),
                    h: args.h,
                    t_final: args.t_final,
                    n_paths: est.n_paths,
                    seed: args.common.seed,
                    functional: functional.name().into(),
                    mean: est.mean,
                    stderr: est.stderr,
                    exact,
                    error: exact.map(|e| e - est.mean),
                    degenerate_fraction: est.degenerate_fraction,
                })
            }
            RunScheme::Richardson => {
                let est = run_richardson(
                    &system,
                    args.h,
                    args.t_final,
                    args.paths,
                    args.common.seed,
                    functional,
                )
                .map_err(|e| AppError::Failure(e.to_string()))?;
                let exact = oracle.map(|f| f(args.t_final, system.initial()));
                Ok(EnsembleRow {
                    system: args.system.clone(),
                    scheme: "richardson".into(),
                    theta: None,
                    h: args.h,
                    t_final: args.t_final,
                    n_paths: est.n_paths,
                    seed: args.common.seed,
                    functional: functional.name().into(),
                    mean: est.value,
                    stderr: est.stderr,
                    exact,
                    error: exact.map(|e| e - est.value),
                    degenerate_fraction: None,
                })
            }
        }
    })??;

    let report = Report {
        manifest,
        rows: vec![row],
        fits: vec![],
    };
    write_report(args.common.out.as_deref(), &report)
}

fn cmd_convergence(args: ConvergenceArgs) -> Result<()> {
    if args.self_test {
        return cmd_self_test(args);
    }
    if args.preset.is_some() {
        return cmd_preset(args);
    }
    if args.scale.is_some() {
        return Err(AppError::Usage("--scale requires --preset".into()));
    }

    let system_name = args
        .system
        .ok_or_else(|| AppError::Usage("missing --system (or use --preset/--self-test)".into()))?;
    let scheme_name = args
        .scheme
        .ok_or_else(|| AppError::Usage("missing --scheme".into()))?;
    let h_list = args
        .h_list
        .ok_or_else(|| AppError::Usage("missing --h-list".into()))?;
    let paths = args
        .paths
        .ok_or_else(|| AppError::Usage("missing --paths".into()))?;
    let functional_name = args
        .functional
        .ok_or_else(|| AppError::Usage("missing --functional".into()))?;

    let system = parse_system(&system_name)?;
    let functional = parse_functional(&functional_name)?;
    let scheme = resolve_scheme(&scheme_name, args.theta)?;
    let oracle = require_oracle(&system_name, functional)?;
    if h_list.len() < 2 {
        return Err(AppError::Usage(
            "--h-list needs at least 2 step sizes to fit a slope; use `simulate` for one point"
                .into(),
        ));
    }
    for &h in &h_list {
        validate_run(&system, h, args.t_final, paths, functional)?;
    }

    let mut manifest = vec![
        (
            "tool".to_string(),
            format!("wtrap {}", env!("CARGO_PKG_VERSION")),
        ),
        ("command".to_string(), "convergence".to_string()),
        ("system".to_string(), system_name.clone()),
        ("scheme".to_string(), scheme_name.clone()),
    ];
    if let Some(theta) = scheme.theta() {
        manifest.push(("theta".to_string(), theta.to_string()));
    }
    manifest.extend([
        ("h-list".to_string(), join_floats(&h_list)),
        ("T".to_string(), args.t_final.to_string()),
        ("paths".to_string(), paths.to_string()),
        ("seed".to_string(), args.common.seed.to_string()),
        ("functional".to_string(), functional.name().to_string()),
        ("out".to_string(), out_label(&args.common)),
    ]);

    let points = with_workers(args.common.workers, || {
        study_points(
            &system,
            &scheme,
            &h_list,
            args.t_final,
            paths,
            args.common.seed,
            functional,
            oracle,
        )
    })??;

    let rows: Vec<EnsembleRow> = points
        .iter()
        .map(|p| point_row(&system_name, &scheme, args.t_final, functional, p))
        .collect();

    let offenders = gate_offenders(&points);
    if !offenders.is_empty() {
        let report = Report {
            manifest,
            rows,
            fits: vec![],
        };
        write_report(args.common.out.as_deref(), &report)?;
        return Err(AppError::Failure(gate_failure_message(&offenders)));
    }
    let fit = gate_and_fit(&points).map_err(|e| AppError::Failure(e.to_string()))?;
    let report = Report {
        manifest,
        rows,
        fits: vec![FitRow {
            scheme: scheme.name().into(),
            theta: scheme.theta(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            n_points: fit.n_points as u64,
        }],
    };
    write_report(args.common.out.as_deref(), &report)
}

fn cmd_preset(args: ConvergenceArgs) -> Result<()> {
    let name = args.preset.as_deref().expect("caller checked");
    let preset = lookup_preset(name).ok_or_else(|| {
        AppError::Usage(format!("unknown preset {name:?}; available: fig2a, fig2b"))
    })?;
    for (flag, given) in [
        ("--system", args.system.is_some()),
        ("--scheme", args.scheme.is_some()),
        ("--theta", args.theta.is_some()),
        ("--h-list", args.h_list.is_some()),
        ("--paths", args.paths.is_some()),
        ("--functional", args.functional.is_some()),
    ] {
        if given {
            return Err(AppError::Usage(format!("{flag} conflicts with --preset")));
        }
    }
    let scale = args.scale.unwrap_or(DEFAULT_SCALE);
    if !scale.is_finite() || scale < 1.0 {
        return Err(AppError::Usage(format!(
            "--scale must be a finite factor >= 1, got {scale}"
        )));
    }

    let system = parse_system(preset.system)?;
    let oracle = require_oracle(preset.system, preset.functional)?;
    for study in &preset.studies {
        for &h in &study.h_list {
            validate_run(
                &system,
                h,
                preset.t_final,
                study.paths_at(scale),
                preset.functional,
            )?;
        }
    }

    let manifest = vec![
        (
            "tool".to_string(),
            format!("wtrap {}", env!("CARGO_PKG_VERSION")),
        ),
        ("command".to_string(), "convergence".to_string()),
        ("preset".to_string(), preset.name.to_string()),
        ("scale".to_string(), scale.to_string()),
        ("system".to_string(), preset.system.to_string()),
        (
            "schemes".to_string(),
            preset
                .studies
                .iter()
                .map(|s| s.scheme_name)
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("T".to_string(), preset.t_final.to_string()),
        ("seed".to_string(), args.common.seed.to_string()),
        (
            "functional".to_string(),
            preset.functional.name().to_string(),
        ),
        ("out".to_string(), out_label(&args.common)),
    ];

    struct StudyOutcome {
        scheme: RunScheme,
        points: Vec<ConvergencePoint>,
    }

    let outcomes = with_workers(args.common.workers, || -> Result<Vec<StudyOutcome>> {
        preset
            .studies
            .iter()
            .enumerate()
            .map(|(i, study)| {
                let scheme = RunScheme::Plain(study.scheme());
                let points = study_points(
                    &system,
                    &scheme,
                    &study.h_list,
                    preset.t_final,
                    study.paths_at(scale),
                    derive_seed(args.common.seed, i as u64),
                    preset.functional,
                    oracle,
                )?;
                Ok(StudyOutcome { scheme, points })
            })
            .collect()
    })??;

    let rows: Vec<EnsembleRow> = outcomes
        .iter()
        .flat_map(|o| {
            o.points.iter().map(|p| {
                point_row(
                    preset.system,
                    &o.scheme,
                    preset.t_final,
                    preset.functional,
                    p,
                )
            })
        })
        .collect();

    let mut offenders = Vec::new();
    for o in &outcomes {
        offenders.extend(gate_offenders(&o.points));
    }
    if !offenders.is_empty() {
        let report = Report {
            manifest,
            rows,
            fits: vec![],
        };
        write_report(args.common.out.as_deref(), &report)?;
        return Err(AppError::Failure(gate_failure_message(&offenders)));
    }

    let mut fits = Vec::new();
    for o in &outcomes {
        let fit = gate_and_fit(&o.points).map_err(|e| AppError::Failure(e.to_string()))?;
        fits.push(FitRow {
            scheme: o.scheme.name().into(),
            theta: o.scheme.theta(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            n_points: fit.n_points as u64,
        });
    }
    let report = Report {
        manifest,
        rows,
        fits,
    };
    write_report(args.common.out.as_deref(), &report)
}

fn cmd_self_test(args: ConvergenceArgs) -> Result<()> {
    for (flag, given) in [
        ("--system", args.system.is_some()),
        ("--scheme", args.scheme.is_some()),
        ("--theta", args.theta.is_some()),
        ("--h-list", args.h_list.is_some()),
        ("--paths", args.paths.is_some()),
        ("--functional", args.functional.is_some()),
        ("--preset", args.preset.is_some()),
        ("--scale", args.scale.is_some()),
    ] {
        if given {
            return Err(AppError::Usage(format!(
                "{flag} conflicts with --self-test"
            )));
        }
    }

    // synthetic measurements mean = 3h² against exact 0: the pipeline
    // must report slope 2 from its own fit path
    let hs = [0.5, 0.25, 0.125, 0.0625];
    let manifest = vec![
        (
            "tool".to_string(),
            format!("wtrap {}", env!("CARGO_PKG_VERSION")),
        ),
        ("command".to_string(), "convergence".to_string()),
        ("self-test".to_string(), "true".to_string()),
        ("out".to_string(), out_label(&args.common)),
    ];
    let rows: Vec<EnsembleRow> = hs
        .iter()
        .map(|&h| EnsembleRow {
            system: "self-test".into(),
            scheme: "power-law".into(),
            theta: None,
            h,
            t_final: 1.0,
            n_paths: 0,
            seed: args.common.seed,
            functional: "x1".into(),
            mean: 3.0 * h * h,
            stderr: 0.0,
            exact: Some(0.0),
            error: Some(-3.0 * h * h),
            degenerate_fraction: None,
        })
        .collect();
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.h, r.error.unwrap().abs())).collect();
    let fit = fit_slope(&pairs).map_err(|e| AppError::Failure(e.to_string()))?;
    let report = Report {
        manifest,
        rows,
        fits: vec![FitRow {
            scheme: "power-law".into(),
            theta: None,
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            n_points: fit.n_points as u64,
        }],
    };
    write_report(args.common.out.as_deref(), &report)
}

fn cmd_theta_sweep(args: ThetaSweepArgs) -> Result<()> {
    let system = parse_system(&args.system)?;
    match args.mode {
        SweepMode::Frac => theta_sweep_frac(args, system),
        SweepMode::Slope => theta_sweep_slope(args, system),
    }
}

fn default_theta_grid() -> Vec<f64> {
    (1..=49).map(|k| 0.02 * k as f64).collect()
}

fn theta_sweep_frac(args: ThetaSweepArgs, system: SdeSystem) -> Result<()> {
    if args.h_list.is_some() {
        return Err(AppError::Usage("frac mode takes --h, not --h-list".into()));
    }
    let h = args
        .h
        .ok_or_else(|| AppError::Usage("frac mode needs --h".into()))?;
    let functional = match &args.functional {
        Some(name) => parse_functional(name)?,
        None => Functional::X1,
    };
    let thetas = args.theta_list.clone().unwrap_or_else(default_theta_grid);
    if thetas.is_empty() {
        return Err(AppError::Usage(
            "--theta-list must name at least one theta".into(),
        ));
    }
    let mut schemes = Vec::with_capacity(thetas.len());
    for &theta in &thetas {
        schemes.push(make_theta_scheme(theta).map_err(|e| AppError::Usage(e.to_string()))?);
    }
    validate_run(&system, h, args.t_final, args.paths, functional)?;
    let oracle = lookup_oracle(&args.system, functional);

    let manifest = vec![
        (
            "tool".to_string(),
            format!("wtrap {}", env!("CARGO_PKG_VERSION")),
        ),
        ("command".to_string(), "theta-sweep".to_string()),
        ("mode".to_string(), "frac".to_string()),
        ("system".to_string(), args.system.clone()),
        ("theta-list".to_string(), join_floats(&thetas)),
        ("h".to_string(), h.to_string()),
        ("T".to_string(), args.t_final.to_string()),
        ("paths".to_string(), args.paths.to_string()),
        ("seed".to_string(), args.common.seed.to_string()),
        ("functional".to_string(), functional.name().to_string()),
        ("out".to_string(), out_label(&args.common)),
    ];

    // every θ gets its own derived stream: the sweep compares clamp
    // frequencies, so runs must be independent rather than coupled
    let estimates = with_workers(args.common.workers, || -> Result<Vec<_>> {
        schemes
            .iter()
            .enumerate()
            .map(|(j, &scheme)| {
                let spec = EnsembleSpec {
                    system: system.clone(),
                    scheme: SchemeChoice::WeakTrapezoidal(scheme),
                    h,
                    t_final: args.t_final,
                    n_paths: args.paths,
                    master_seed: derive_seed(args.common.seed, j as u64),
                    functional,
                };
                run_ensemble(&spec)
                    .map(|est| (spec.master_seed, est))
                    .map_err(|e| AppError::Failure(e.to_string()))
            })
            .collect()
    })??;

    let exact = oracle.map(|f| f(args.t_final, system.initial()));
    let rows: Vec<EnsembleRow> = thetas
        .iter()
        .zip(&estimates)
        .map(|(&theta, (seed, est))| EnsembleRow {
            system: args.system.clone(),
            scheme: "wt".into(),
            theta: Some(theta),
            h,
            t_final: args.t_final,
            n_paths: est.n_paths,
            seed: *seed,
            functional: functional.name().into(),
            mean: est.mean,
            stderr: est.stderr,
            exact,
            error: exact.map(|e| e - est.mean),
            degenerate_fraction: est.degenerate_fraction,
        })
        .collect();

    let report = Report {
        manifest,
        rows,
        fits: vec![],
    };
    write_report(args.common.out.as_deref(), &report)
}

fn theta_sweep_slope(args: ThetaSweepArgs, system: SdeSystem) -> Result<()> {
    if args.h.is_some() {
        return Err(AppError::Usage("slope mode takes --h-list, not --h".into()));
    }
    let h_list = args
        .h_list
        .clone()
        .ok_or_else(|| AppError::Usage("slope mode needs --h-list".into()))?;
    if h_list.len() < 2 {
        return Err(AppError::Usage(
            "--h-list needs at least 2 step sizes to fit a slope; use `simulate` for one point"
                .into(),
        ));
    }
    let thetas = args
        .theta_list
        .clone()
        .ok_or_else(|| AppError::Usage("slope mode needs --theta-list".into()))?;
    if thetas.is_empty() {
        return Err(AppError::Usage(
            "--theta-list must name at least one theta".into(),
        ));
    }
    let functional_name = args
        .functional
        .clone()
        .ok_or_else(|| AppError::Usage("slope mode needs --functional".into()))?;
    let functional = parse_functional(&functional_name)?;
    let oracle = require_oracle(&args.system, functional)?;
    let mut run_schemes = Vec::with_capacity(thetas.len());
    for &theta in &thetas {
        let s = make_theta_scheme(theta).map_err(|e| AppError::Usage(e.to_string()))?;
        run_schemes.push(RunScheme::Plain(SchemeChoice::WeakTrapezoidal(s)));
    }
    for &h in &h_list {
        validate_run(&system, h, args.t_final, args.paths, functional)?;
    }

    let manifest = vec![
        (
            "tool".to_string(),
            format!("wtrap {}", env!("CARGO_PKG_VERSION")),
        ),
        ("command".to_string(), "theta-sweep".to_string()),
        ("mode".to_string(), "slope".to_string()),
        ("system".to_string(), args.system.clone()),
        ("theta-list".to_string(), join_floats(&thetas)),
        ("h-list".to_string(), join_floats(&h_list)),
        ("T".to_string(), args.t_final.to_string()),
        ("paths".to_string(), args.paths.to_string()),
        ("seed".to_string(), args.common.seed.to_string()),
        ("functional".to_string(), functional.name().to_string()),
        ("out".to_string(), out_label(&args.common)),
    ];

    // every θ reuses the master seed so point i of each sweep sees the
    // same driving noise; slope differences are then pure scheme effects
    let all_points = with_workers(
        args.common.workers,
        || -> Result<Vec<Vec<ConvergencePoint>>> {
            run_schemes
                .iter()
                .map(|scheme| {
                    study_points(
                        &system,
                        scheme,
                        &h_list,
                        args.t_final,
                        args.paths,
                        args.common.seed,
                        functional,
                        oracle,
                    )
                })
                .collect()
        },
    )??;

    let rows: Vec<EnsembleRow> = run_schemes
        .iter()
        .zip(&all_points)
        .flat_map(|(scheme, points)| {
            points
                .iter()
                .map(|p| point_row(&args.system, scheme, args.t_final, functional, p))
        })
        .collect();

    let mut offenders = Vec::new();
    for points in &all_points {
        offenders.extend(gate_offenders(points));
    }
    if !offenders.is_empty() {
        let report = Report {
            manifest,
            rows,
            fits: vec![],
        };
        write_report(args.common.out.as_deref(), &report)?;
        return Err(AppError::Failure(gate_failure_message(&offenders)));
    }

    let mut fits = Vec::new();
    for (scheme, points) in run_schemes.iter().zip(&all_points) {
        let fit = gate_and_fit(points).map_err(|e| AppError::Failure(e.to_string()))?;
        fits.push(FitRow {
            scheme: scheme.name().into(),
            theta: scheme.theta(),
            slope: fit.slope,
            intercept: fit.intercept,
            r_squared: fit.r_squared,
            n_points: fit.n_points as u64,
        });
    }
    let report = Report {
        manifest,
        rows,
        fits,
    };
    write_report(args.common.out.as_deref(), &report)
}
