//! Scenario-driven command line: `run`, `verify`, `synth`, `figures` and
//! `sweep`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 configuration error,
//! 3 runtime failure.

pub mod scenario;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::backstep::{synthesize, SynthesisOptions};
use crate::expr::Expr;
use crate::matched::{
    damped_controller, fit_rho_envelope, residual_radius, standard_controller, AdaptiveController, IosCertificate,
};
use crate::model::{validate_strict_feedback, DesignConstants, ModelFile, SampleGrid, System};
use crate::moore_greitzer::{self as mg, curve, FigureKind};
use crate::sim::{integrate, sweep, ClosedLoop, SimError, SimOptions, Trajectory};
use crate::verify::{
    check_exponential_envelope, check_ios, check_lyapunov, check_theorem1_comparison, Check, VerificationReport,
    ENVELOPE_SLACK,
};

use scenario::{CheckKind, ControllerKind, Scenario, SystemRef};

const FIGURE_PRESETS: [&str; 6] = [
    include_str!("../../figures/fig1.preset"),
    include_str!("../../figures/fig2.preset"),
    include_str!("../../figures/fig3.preset"),
    include_str!("../../figures/fig4.preset"),
    include_str!("../../figures/fig5.preset"),
    include_str!("../../figures/fig6.preset"),
];

/// The embedded preset for figure `number` (1 to 6).
pub fn figure_preset(number: usize) -> Option<&'static str> {
    FIGURE_PRESETS.get(number.checked_sub(1)?).copied()
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "kladapt", version, about = "Adaptive backstepping synthesis, simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Relative integration tolerance, overriding the scenario.
    #[arg(long, global = true)]
    pub rtol: Option<f64>,
    /// Absolute integration tolerance, overriding the scenario.
    #[arg(long, global = true)]
    pub atol: Option<f64>,
    /// Seed for random initial sets, overriding the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for all written artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Also write every check's margin series as CSV.
    #[arg(long, global = true)]
    pub dump_margins: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate every run of a scenario and write its CSV and SVG outputs.
    Run { scenario: PathBuf },
    /// Run a scenario and evaluate its listed checks.
    Verify { scenario: PathBuf },
    /// Synthesize a backstepping controller for a strict-feedback model file.
    Synth {
        model: PathBuf,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        omega: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        /// Comma-separated adaptation gains.
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Regenerate the example figures: `all` or a number from 1 to 6.
    Figures { which: String },
    /// Run the scenario's sweep section and report hitting times.
    Sweep { scenario: PathBuf },
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kladapt: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { scenario } => {
            let sc = load(cli, scenario)?;
            cmd_run(cli, &sc).map(|_| ())
        }
        Command::Verify { scenario } => {
            let sc = load(cli, scenario)?;
            cmd_verify(cli, &sc)
        }
        Command::Synth { model, r, alpha, omega, epsilon, gamma } => {
            cmd_synth(cli, model, [*r, *alpha, *omega, *epsilon], gamma.as_deref())
        }
        Command::Figures { which } => cmd_figures(cli, which),
        Command::Sweep { scenario } => {
            let sc = load(cli, scenario)?;
            cmd_sweep(cli, &sc)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<Scenario, CliError> {
    let mut sc = Scenario::load(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
    apply_overrides(cli, &mut sc)?;
    Ok(sc)
}

fn apply_overrides(cli: &Cli, sc: &mut Scenario) -> Result<(), CliError> {
    for (name, v) in [("--rtol", cli.rtol), ("--atol", cli.atol)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(format!("{name} must be positive, got {v}")));
            }
        }
    }
    if let Some(v) = cli.rtol {
        sc.rtol = v;
    }
    if let Some(v) = cli.atol {
        sc.atol = v;
    }
    if let Some(seed) = cli.seed {
        sc.reseed(seed);
    }
    Ok(())
}

fn sim_options(sc: &Scenario) -> SimOptions {
    SimOptions { report_points: sc.report_points, ..SimOptions::with_tolerances(sc.rtol, sc.atol) }
}

/// A controller together with the closed loop it forms on the scenario's
/// plant.
pub struct Prepared {
    pub system: System,
    pub controller: AdaptiveController,
    pub closed_loop: ClosedLoop,
}

fn prepare(sc: &Scenario, kind: &ControllerKind) -> Result<Prepared, CliError> {
    let unsupported = |what: &str| config(format!("controller `{}` is not available for {what}", kind.name()));
    let (system, controller) = match &sc.system {
        SystemRef::MooreGreitzer(cfg) => {
            let ctrl = match kind {
                ControllerKind::ExampleA => mg::controller_a(cfg),
                ControllerKind::ExampleB => mg::controller_b(cfg),
                ControllerKind::Backstep => mg::synthesized_controller(cfg).map_err(config)?,
                ControllerKind::OpenLoop => AdaptiveController::open_loop(2, 2),
                _ => return Err(unsupported("the builtin system")),
            };
            (System::StrictFeedback(mg::system()), ctrl)
        }
        SystemRef::Model { file, design, .. } => {
            let (n, p) = (file.system.n(), file.system.p());
            let ctrl = match (kind, &file.system) {
                (ControllerKind::OpenLoop, _) => AdaptiveController::open_loop(n, p),
                (ControllerKind::File, _) => {
                    file.controller.clone().ok_or_else(|| config("model file has no `controller` section"))?
                }
                (ControllerKind::Backstep, System::StrictFeedback(s)) => {
                    synthesize(s, design, &SynthesisOptions::default()).map_err(config)?.0
                }
                (ControllerKind::Standard, System::Matched(s)) => {
                    standard_controller(s, &design.adaptation_matrix()).map_err(config)?
                }
                (ControllerKind::Damped, System::Matched(s)) => damped_controller(s, design).map_err(config)?,
                _ => return Err(unsupported("this model class")),
            };
            (file.system.clone(), ctrl)
        }
    };
    let closed_loop = ClosedLoop::new(&system, &controller, &crate::model::TrueParameters(sc.theta.clone()))
        .map_err(config)?;
    Ok(Prepared { system, controller, closed_loop })
}

/// The certificate checked by `ios` and `exp-envelope`: the controller's own,
/// or else a candidate built from its `T1..Tn` diagnostics with the
/// scenario's rate and residual constants.
fn ios_candidate(sc: &Scenario, prep: &Prepared) -> Option<IosCertificate> {
    if let Some(c) = &prep.controller.ios {
        return Some(c.clone());
    }
    let output: Option<Vec<Expr>> =
        (1..=prep.controller.n).map(|i| prep.controller.diagnostics.get(&format!("T{i}")).cloned()).collect();
    let (omega, epsilon, r) = match &sc.system {
        SystemRef::MooreGreitzer(cfg) => (cfg.mu, cfg.epsilon, cfg.r),
        SystemRef::Model { design, .. } => (design.omega, design.epsilon, design.r),
    };
    output.map(|output| IosCertificate { output, omega, epsilon, r })
}

fn write(out_dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
    let path = out_dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| runtime(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(&path, contents).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn csv_bytes(tr: &Trajectory) -> Vec<u8> {
    let mut buf = Vec::new();
    tr.write_csv(&mut buf).expect("writing to memory cannot fail");
    buf
}

/// Integrates every run, writing CSVs and plots. Fails with a runtime error
/// after all runs if any of them stopped early.
fn cmd_run(cli: &Cli, sc: &Scenario) -> Result<RunOutput, CliError> {
    let opts = sim_options(sc);
    let mut cache: BTreeMap<ControllerKind, Prepared> = BTreeMap::new();
    let mut done = Vec::new();
    let mut failures = Vec::new();
    for run in &sc.runs {
        if !cache.contains_key(&run.controller) {
            cache.insert(run.controller.clone(), prepare(sc, &run.controller)?);
        }
        let prep = &cache[&run.controller];
        match integrate(&prep.closed_loop, &run.x0, &run.theta_hat0, run.t_end, &opts) {
            Ok(tr) => {
                if let Some(csv) = &run.csv {
                    let path = write(&cli.out_dir, csv, csv_bytes(&tr))?;
                    println!("{}: {tr}; wrote {}", run.name, path.display());
                } else {
                    println!("{}: {tr}", run.name);
                }
                done.push((run.name.clone(), run.controller.clone(), tr));
            }
            Err(e) => {
                let mut msg = match e.blow_up_time() {
                    Some(t) => format!("run `{}` ({}) blew up at t = {t}: {e}", run.name, run.controller.name()),
                    None => format!("run `{}` ({}): {e}", run.name, run.controller.name()),
                };
                if let (Some(partial), Some(csv)) = (e.partial(), &run.csv) {
                    let path = write(&cli.out_dir, csv, csv_bytes(partial))?;
                    let _ = write!(msg, "; partial trajectory in {}", path.display());
                }
                eprintln!("{msg}");
                failures.push(msg);
            }
        }
    }
    for plot in &sc.plots {
        let chosen: Vec<&(String, ControllerKind, Trajectory)> =
            done.iter().filter(|(name, _, _)| plot.runs.is_empty() || plot.runs.contains(name)).collect();
        let (x_label, y_label) = match plot.kind {
            FigureKind::PhasePlane => ("x1", "x2"),
            FigureKind::StateNorm => ("t", "|x|"),
            FigureKind::EstimateError => ("t", "|th - theta|"),
        };
        let fig = svg::Plot {
            title: plot.title.clone(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: chosen
                .iter()
                .map(|(name, _, tr)| svg::Series { label: name.clone(), points: curve(tr, plot.kind) })
                .collect(),
        };
        let path = write(&cli.out_dir, &plot.svg, fig.render())?;
        println!("{}: wrote {}", plot.name, path.display());
    }
    if !failures.is_empty() {
        return Err(CliError::Runtime(failures.join("\n")));
    }
    Ok(RunOutput { prepared: cache, runs: done })
}

struct RunOutput {
    prepared: BTreeMap<ControllerKind, Prepared>,
    runs: Vec<(String, ControllerKind, Trajectory)>,
}

fn run_checks(sc: &Scenario, name: &str, prep: &Prepared, tr: &Trajectory) -> Result<Vec<Check>, CliError> {
    let cl = &prep.closed_loop;
    let mut out = Vec::new();
    for spec in &sc.checks {
        let label = format!("{name}/{}", spec.kind.name());
        let mut checks = match spec.kind {
            CheckKind::Lyapunov => {
                let cert = prep.controller.lyapunov.as_ref().ok_or_else(|| {
                    config(format!("controller `{}` has no Lyapunov certificate", prep.controller.name))
                })?;
                vec![check_lyapunov(&label, tr, cl, &cert.function, &cert.bound, sc.tol)]
            }
            CheckKind::Ios | CheckKind::ExpEnvelope => {
                let cert = ios_candidate(sc, prep).ok_or_else(|| {
                    config(format!("controller `{}` has no output T for an IOS check", prep.controller.name))
                })?;
                if spec.kind == CheckKind::Ios {
                    vec![check_ios(&label, tr, cl, &cert, sc.tol)]
                } else {
                    vec![check_exponential_envelope(&label, tr, cl, &cert, ENVELOPE_SLACK, sc.tol)]
                }
            }
            CheckKind::Comparison => comparison_checks(sc, &label, prep, tr)?,
        };
        if spec.expect_fail {
            checks = checks.into_iter().map(Check::expecting_failure).collect();
        }
        out.extend(checks);
    }
    Ok(out)
}

fn comparison_checks(sc: &Scenario, label: &str, prep: &Prepared, tr: &Trajectory) -> Result<Vec<Check>, CliError> {
    let (System::Matched(sys), SystemRef::Model { design, .. }) = (&prep.system, &sc.system) else {
        return Err(config("the comparison check needs a matched model"));
    };
    let rho = fit_rho_envelope(&sys.p_clf, &sys.q_rate, sys.n(), &SampleGrid::default(), &sys.constants)
        .map_err(config)?;
    let theta = crate::model::TrueParameters(sc.theta.clone());
    let alpha = residual_radius(&theta, design, &rho).map_err(config)?.alpha;
    Ok(check_theorem1_comparison(tr, &prep.closed_loop, &sys.p_clf, &rho, alpha, design.lambda, sc.tol)
        .into_iter()
        .map(|c| {
            let name = format!("{label}/{}", c.name);
            Check { name, ..c }
        })
        .collect())
}

fn cmd_verify(cli: &Cli, sc: &Scenario) -> Result<(), CliError> {
    if sc.checks.is_empty() {
        return Err(config("scenario lists no `checks`"));
    }
    let out = cmd_run(cli, sc)?;
    let mut report = VerificationReport::default();
    for (name, kind, tr) in &out.runs {
        for c in run_checks(sc, name, &out.prepared[kind], tr)? {
            report.push(c);
        }
    }
    let text = report.render();
    print!("{text}");
    let path = write(&cli.out_dir, &format!("{}.verify.txt", sc.name), &text)?;
    println!("wrote {}", path.display());
    if cli.dump_margins {
        let path = write(&cli.out_dir, &format!("{}.margins.csv", sc.name), report.margins_csv())?;
        println!("wrote {}", path.display());
    }
    if report.all_as_expected() {
        Ok(())
    } else {
        Err(CliError::Verification(report.summary()))
    }
}

fn cmd_synth(cli: &Cli, model: &Path, overrides: [Option<f64>; 4], gamma: Option<&str>) -> Result<(), CliError> {
    if !model.is_file() {
        return Err(config(format!("model file {} does not exist", model.display())));
    }
    let file = ModelFile::load(model).map_err(config)?;
    let System::StrictFeedback(sys) = &file.system else {
        return Err(config("synth needs a strict-feedback model"));
    };
    let report = validate_strict_feedback(sys, &SampleGrid::default());
    if !report.is_valid() {
        return Err(config(format!("model does not validate:\n{}", report.render().trim_end())));
    }
    let p = sys.p();
    let base = file.design.clone().unwrap_or_else(|| DesignConstants::unit(p, 0.0));
    let [r, alpha, omega, epsilon] = overrides;
    let gamma = match gamma {
        Some(g) => crate::textfmt::parse_reals(g, 0).map_err(|e| config(format!("--gamma: {e}")))?,
        None => base.gamma.clone(),
    };
    if gamma.len() != p {
        return Err(config(format!("--gamma needs {p} values, found {}", gamma.len())));
    }
    let consts = DesignConstants::new(
        r.unwrap_or(base.r),
        alpha.unwrap_or(base.alpha),
        omega.unwrap_or(base.omega),
        epsilon.unwrap_or(base.epsilon),
        gamma,
    )
    .and_then(|c| c.with_matched(base.delta, base.lambda))
    .map_err(config)?;
    let (ctrl, trace, _) = synthesize(sys, &consts, &SynthesisOptions::default()).map_err(config)?;
    let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    let out = ModelFile { system: file.system.clone(), design: Some(consts), controller: Some(ctrl) };
    let trace_text = trace.render();
    print!("{trace_text}");
    let ctrl_path = write(&cli.out_dir, &format!("{stem}.controller.model"), out.render())?;
    let trace_path = write(&cli.out_dir, &format!("{stem}.trace.txt"), trace_text)?;
    println!("wrote {} and {}", ctrl_path.display(), trace_path.display());
    Ok(())
}

fn cmd_figures(cli: &Cli, which: &str) -> Result<(), CliError> {
    let numbers: Vec<usize> = if which == "all" {
        (1..=FIGURE_PRESETS.len()).collect()
    } else {
        match which.parse::<usize>() {
            Ok(k) if figure_preset(k).is_some() => vec![k],
            _ => return Err(config(format!("no figure `{which}`: expected `all` or 1 to {}", FIGURE_PRESETS.len()))),
        }
    };
    for k in numbers {
        let text = figure_preset(k).expect("checked above");
        let mut sc = Scenario::parse(text, Path::new("."), &format!("fig{k}"))
            .map_err(|e| config(format!("embedded preset fig{k}: {e}")))?;
        apply_overrides(cli, &mut sc)?;
        cmd_run(cli, &sc)?;
    }
    Ok(())
}

fn cmd_sweep(cli: &Cli, sc: &Scenario) -> Result<(), CliError> {
    let spec = sc.sweep.as_ref().ok_or_else(|| config("scenario has no `sweep` section"))?;
    let prep = prepare(sc, &spec.controller)?;
    let runs = sweep(&prep.closed_loop, &spec.set, &spec.theta_hat0, spec.t_end, &sim_options(sc)).map_err(runtime)?;
    let n = sc.n();
    let mut csv = String::from("index");
    for i in 1..=n {
        let _ = write!(csv, ",x0_{i}");
    }
    csv.push_str(",status,t_reached,final_norm");
    for e in &spec.eps {
        let _ = write!(csv, ",hit_{e}");
    }
    csv.push('\n');
    let mut failures = Vec::new();
    let mut worst: Vec<Option<f64>> = vec![Some(0.0); spec.eps.len()];
    for (k, run) in runs.iter().enumerate() {
        let _ = write!(csv, "{k}");
        for v in &run.x0 {
            let _ = write!(csv, ",{v:.16e}");
        }
        match &run.result {
            Ok(tr) => {
                let last = tr.x(tr.len() - 1);
                let norm = last.iter().map(|v| v * v).sum::<f64>().sqrt();
                let _ = write!(csv, ",ok,{:.16e},{norm:.16e}", tr.t[tr.len() - 1]);
                for (j, e) in spec.eps.iter().enumerate() {
                    let hit = crate::verify::hitting_time(tr, *e);
                    match hit {
                        Some(h) => {
                            let _ = write!(csv, ",{h:.16e}");
                        }
                        None => csv.push_str(",nan"),
                    }
                    worst[j] = match (worst[j], hit) {
                        (Some(a), Some(b)) => Some(a.max(b)),
                        _ => None,
                    };
                }
            }
            Err(e) => {
                let t = e.blow_up_time().unwrap_or(f64::NAN);
                let _ = write!(csv, ",{},{t:.16e},nan", status_name(e));
                for (j, _) in spec.eps.iter().enumerate() {
                    csv.push_str(",nan");
                    worst[j] = None;
                }
                failures.push(format!("run {k} from {:?}: {e}", run.x0));
            }
        }
        csv.push('\n');
    }
    let name = spec.csv.clone().unwrap_or_else(|| format!("{}.sweep.csv", sc.name));
    let path = write(&cli.out_dir, &name, csv)?;
    for (e, w) in spec.eps.iter().zip(&worst) {
        match w {
            Some(t) => println!("T(eps = {e}, R = {}) = {t}", spec.radius),
            None => println!("T(eps = {e}, R = {}) not attained by every run", spec.radius),
        }
    }
    println!("{} runs; wrote {}", runs.len(), path.display());
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(failures.join("\n")))
    }
}

fn status_name(e: &SimError) -> &'static str {
    match e {
        SimError::InvalidArgument(_) => "invalid",
        SimError::StepSizeUnderflow { .. } => "underflow",
        SimError::NonFiniteState { .. } => "non-finite",
        SimError::Escape { .. } => "escape",
        SimError::MaxSteps { .. } => "max-steps",
        SimError::Eval { .. } => "eval-error",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for k in 1..=6 {
            let sc = Scenario::parse(figure_preset(k).unwrap(), Path::new("."), "f").unwrap();
            assert!(!sc.runs.is_empty() && sc.plots.len() == 1, "fig{k}");
        }
        assert!(figure_preset(0).is_none() && figure_preset(7).is_none());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["kladapt", "bogus"]), 2);
        assert_eq!(main_with_args(["kladapt", "figures", "7"]), 2);
        assert_eq!(main_with_args(["kladapt", "--help"]), 0);
    }
}
