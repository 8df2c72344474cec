//! Closed-loop assembly, integration and batch runs.

pub mod dopri;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{Expr, Tape, TapeError};
use crate::matched::AdaptiveController;
use crate::model::{System, TrueParameters};

pub use dopri::{DopriOptions, StepStats, ESCAPE_NORM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("controller reads the true parameter in {0}")]
    ReadsTrueParameter(String),
    #[error("constant `{name}` has conflicting values {a} and {b}")]
    ConstantConflict { name: String, a: f64, b: f64 },
    #[error("controller does not compile without plant parameters: {0}")]
    Controller(TapeError),
    #[error(transparent)]
    Compile(#[from] TapeError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("step size underflow at t = {t} (blow-up)")]
    StepSizeUnderflow { t: f64, partial: Box<Trajectory> },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64, partial: Box<Trajectory> },
    #[error("state escaped (|y| = {norm:e}) at t = {t}")]
    Escape { t: f64, norm: f64, partial: Box<Trajectory> },
    #[error("step limit reached at t = {t}")]
    MaxSteps { t: f64, partial: Box<Trajectory> },
    #[error("evaluation failed at t = {t}: {source}")]
    Eval { t: f64, source: TapeError, partial: Box<Trajectory> },
}

impl SimError {
    /// The trajectory up to the failure, if integration started.
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            SimError::InvalidArgument(_) => None,
            SimError::StepSizeUnderflow { partial, .. }
            | SimError::NonFiniteState { partial, .. }
            | SimError::Escape { partial, .. }
            | SimError::MaxSteps { partial, .. }
            | SimError::Eval { partial, .. } => Some(partial),
        }
    }

    /// Time of finite escape, for the failures that indicate one.
    pub fn blow_up_time(&self) -> Option<f64> {
        match self {
            SimError::StepSizeUnderflow { t, .. } | SimError::NonFiniteState { t, .. } | SimError::Escape { t, .. } => {
                Some(*t)
            }
            _ => None,
        }
    }
}

/// Plant plus controller, evaluated on the stacked state `(x, θ̂)`.
///
/// The controller is compiled without the true parameters in scope, so it
/// cannot read them; the plant sees them as bound constants.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub n: usize,
    pub p: usize,
    pub theta: Vec<f64>,
    /// Symbolic field, `n + p` components, with the true parameters as named
    /// symbols `theta1..thetap`.
    pub field: Vec<Expr>,
    pub u: Expr,
    pub diag_names: Vec<String>,
    pub diag: Vec<Expr>,
    /// All named constants including the true-parameter bindings.
    pub constants: BTreeMap<String, f64>,
    controller: Tape,
    plant: Tape,
    report: Tape,
}

fn merge(into: &mut BTreeMap<String, f64>, from: &BTreeMap<String, f64>) -> Result<(), BuildError> {
    for (k, v) in from {
        match into.get(k) {
            Some(a) if a != v => return Err(BuildError::ConstantConflict { name: k.clone(), a: *a, b: *v }),
            _ => {
                into.insert(k.clone(), *v);
            }
        }
    }
    Ok(())
}

impl ClosedLoop {
    pub fn new(sys: &System, ctrl: &AdaptiveController, theta: &TrueParameters) -> Result<ClosedLoop, BuildError> {
        let (n, p) = (sys.n(), sys.p());
        let dims = [("controller state dimension", n, ctrl.n), ("controller parameter count", p, ctrl.p)];
        for (what, expected, got) in dims {
            if expected != got {
                return Err(BuildError::DimensionMismatch { what: what.into(), expected, got });
            }
        }
        if theta.0.len() != p {
            return Err(BuildError::DimensionMismatch { what: "true parameters".into(), expected: p, got: theta.0.len() });
        }
        if ctrl.w.len() != p {
            return Err(BuildError::DimensionMismatch { what: "update law".into(), expected: p, got: ctrl.w.len() });
        }
        if let Some(place) = ctrl.true_parameter_leak() {
            return Err(BuildError::ReadsTrueParameter(place));
        }
        let mut ctrl_consts = sys.constants().clone();
        merge(&mut ctrl_consts, &ctrl.constants)?;
        let mut all = ctrl_consts.clone();
        merge(&mut all, &theta.bindings())?;

        let mut ctrl_out = vec![ctrl.u.clone()];
        ctrl_out.extend(ctrl.w.iter().cloned());
        let controller = Tape::compile(&ctrl_out, &ctrl_consts).map_err(BuildError::Controller)?;

        let dynamics = sys.dynamics();
        let theta_syms = TrueParameters::symbols(p);
        let mut plant_out = Vec::with_capacity(3 * n);
        for i in 0..n {
            plant_out.push(dynamics.drift[i].clone());
            plant_out.push(dynamics.input[i].clone());
            plant_out.push(Expr::sum(dynamics.regressor[i].iter().zip(&theta_syms).map(|(a, b)| a * b)));
        }
        let plant = Tape::compile(&plant_out, &all)?;

        let mut field = dynamics.field(&ctrl.u, &theta_syms);
        field.extend(ctrl.w.iter().cloned());
        let diag_names: Vec<String> = ctrl.diagnostics.keys().cloned().collect();
        let diag: Vec<Expr> = ctrl.diagnostics.values().cloned().collect();
        let mut report_out = vec![ctrl.u.clone()];
        report_out.extend(diag.iter().cloned());
        let report = Tape::compile(&report_out, &all)?;
        Ok(ClosedLoop {
            n,
            p,
            theta: theta.0.clone(),
            field,
            u: ctrl.u.clone(),
            diag_names,
            diag,
            constants: all,
            controller,
            plant,
            report,
        })
    }

    /// `(ẋ, θ̂̇)` at the stacked state.
    pub fn eval_field(&self, y: &[f64], out: &mut [f64]) -> Result<(), TapeError> {
        let mut ws = Workspace::new(self);
        self.eval_field_with(y, out, &mut ws)
    }

    fn eval_field_with(&self, y: &[f64], out: &mut [f64], ws: &mut Workspace) -> Result<(), TapeError> {
        let (x, th) = y.split_at(self.n);
        self.controller.eval_into(x, th, &mut ws.ctrl, &mut ws.scratch)?;
        self.plant.eval_into(x, th, &mut ws.plant, &mut ws.scratch)?;
        let u = ws.ctrl[0];
        for i in 0..self.n {
            out[i] = ws.plant[3 * i] + ws.plant[3 * i + 1] * u + ws.plant[3 * i + 2];
        }
        out[self.n..self.n + self.p].copy_from_slice(&ws.ctrl[1..]);
        Ok(())
    }

    /// Control input at `(x, θ̂)`.
    pub fn control(&self, x: &[f64], theta_hat: &[f64]) -> Result<f64, TapeError> {
        Ok(self.controller.eval(x, theta_hat)?[0])
    }
}

struct Workspace {
    ctrl: Vec<f64>,
    plant: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(cl: &ClosedLoop) -> Self {
        Workspace { ctrl: vec![0.0; 1 + cl.p], plant: vec![0.0; 3 * cl.n], scratch: Vec::new() }
    }
}

/// Solution sampled on a uniform report grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub p: usize,
    pub t: Vec<f64>,
    /// Rows `(x, θ̂)`.
    pub y: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub diag_names: Vec<String>,
    /// Rows of diagnostic values, in `diag_names` order.
    pub diag: Vec<Vec<f64>>,
    pub stats: StepStats,
    pub theta: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn x(&self, k: usize) -> &[f64] {
        &self.y[k][..self.n]
    }

    pub fn theta_hat(&self, k: usize) -> &[f64] {
        &self.y[k][self.n..]
    }

    pub fn last(&self) -> Option<&[f64]> {
        self.y.last().map(Vec::as_slice)
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend((1..=self.n).map(|i| format!("x{i}")));
        h.extend((1..=self.p).map(|j| format!("th{j}")));
        h.push("u".into());
        h.extend(self.diag_names.iter().cloned());
        h
    }

    /// A column by header name.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header().iter().position(|h| h == name)?;
        Some((0..self.len()).map(|k| self.row(k)[idx]).collect())
    }

    fn row(&self, k: usize) -> Vec<f64> {
        let mut r = vec![self.t[k]];
        r.extend_from_slice(&self.y[k]);
        r.push(self.u[k]);
        r.extend_from_slice(&self.diag[k]);
        r
    }

    /// CSV with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header().join(","))?;
        for k in 0..self.len() {
            let cells: Vec<String> = self.row(k).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> io::Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = io::BufWriter::new(f);
        self.write_csv(&mut w)?;
        w.flush()
    }

    fn empty(cl: &ClosedLoop) -> Self {
        Trajectory {
            n: cl.n,
            p: cl.p,
            t: Vec::new(),
            y: Vec::new(),
            u: Vec::new(),
            diag_names: cl.diag_names.clone(),
            diag: Vec::new(),
            stats: StepStats::default(),
            theta: cl.theta.clone(),
        }
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} points on [0, {}], {} steps ({} rejected), error estimate {:e}",
            self.len(),
            self.t.last().copied().unwrap_or(0.0),
            self.stats.accepted,
            self.stats.rejected,
            self.stats.error_estimate
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub integrator: DopriOptions,
    pub report_points: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { integrator: DopriOptions::default(), report_points: 2000 }
    }
}

impl SimOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        SimOptions { integrator: DopriOptions { rtol, atol, ..Default::default() }, ..Default::default() }
    }
}

/// Integrates the closed loop from `(x0, θ̂0)` over `[0, t_end]`.
pub fn integrate(
    cl: &ClosedLoop,
    x0: &[f64],
    theta_hat0: &[f64],
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory, SimError> {
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(SimError::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    let o = &opts.integrator;
    if !(o.rtol > 0.0 && o.atol > 0.0) {
        return Err(SimError::InvalidArgument(format!("tolerances must be positive, got rtol {} atol {}", o.rtol, o.atol)));
    }
    if opts.report_points < 2 {
        return Err(SimError::InvalidArgument("at least two report points are needed".into()));
    }
    if x0.len() != cl.n || theta_hat0.len() != cl.p {
        return Err(SimError::InvalidArgument(format!(
            "initial condition has {} states and {} estimates, the loop needs {} and {}",
            x0.len(),
            theta_hat0.len(),
            cl.n,
            cl.p
        )));
    }
    let m = opts.report_points - 1;
    let times: Vec<f64> = (0..=m).map(|k| if k == m { t_end } else { t_end * k as f64 / m as f64 }).collect();
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(theta_hat0);
    let mut traj = Trajectory::empty(cl);
    let mut ws = Workspace::new(cl);
    let (stats, stop) = dopri::integrate(
        |y, dy| cl.eval_field_with(y, dy, &mut ws),
        &y0,
        t_end,
        &times,
        o,
        |t, y| {
            traj.t.push(t);
            traj.y.push(y.to_vec());
        },
    );
    traj.stats = stats;

    // diagnostics on the report grid
    let mut scratch = Vec::new();
    let mut vals = vec![0.0; 1 + cl.diag.len()];
    let mut diag_err = None;
    for k in 0..traj.t.len() {
        let (x, th) = traj.y[k].split_at(cl.n);
        if let Err(e) = cl.report.eval_into(x, th, &mut vals, &mut scratch) {
            diag_err = Some((k, e));
            break;
        }
        traj.u.push(vals[0]);
        traj.diag.push(vals[1..].to_vec());
    }
    if let Some((k, source)) = diag_err {
        let t = traj.t[k];
        traj.t.truncate(k);
        traj.y.truncate(k);
        return Err(SimError::Eval { t, source, partial: Box::new(traj) });
    }
    let partial = || Box::new(traj.clone());
    match stop {
        None => Ok(traj),
        Some(dopri::Stop::StepSizeUnderflow { t, .. }) => Err(SimError::StepSizeUnderflow { t, partial: partial() }),
        Some(dopri::Stop::NonFinite { t }) => Err(SimError::NonFiniteState { t, partial: partial() }),
        Some(dopri::Stop::Escape { t, norm }) => Err(SimError::Escape { t, norm, partial: partial() }),
        Some(dopri::Stop::MaxSteps { t }) => Err(SimError::MaxSteps { t, partial: partial() }),
        Some(dopri::Stop::Rhs { t, error: TapeError::NonFinite { .. } }) => {
            Err(SimError::NonFiniteState { t, partial: partial() })
        }
        Some(dopri::Stop::Rhs { t, error }) => Err(SimError::Eval { t, source: error, partial: partial() }),
    }
}

/// Initial states for a batch of runs.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSet {
    /// `count` evenly spaced points on the circle of `radius` in the
    /// `x1`-`x2` plane, other states zero.
    Circle { radius: f64, count: usize },
    /// Uniformly random points on the sphere `|x| = radius`.
    Sphere { radius: f64, count: usize, seed: u64 },
    /// Uniformly random points in the ball `|x| ≤ radius`.
    Ball { radius: f64, count: usize, seed: u64 },
    Points(Vec<Vec<f64>>),
}

impl InitialSet {
    pub fn points(&self, n: usize) -> Result<Vec<Vec<f64>>, SimError> {
        match self {
            InitialSet::Circle { radius, count } => {
                if n < 2 {
                    return Err(SimError::InvalidArgument("a circle needs at least two states".into()));
                }
                Ok((0..*count)
                    .map(|k| {
                        let a = 2.0 * std::f64::consts::PI * k as f64 / *count as f64;
                        let mut x = vec![0.0; n];
                        x[0] = radius * a.cos();
                        x[1] = radius * a.sin();
                        x
                    })
                    .collect())
            }
            InitialSet::Sphere { radius, count, seed } | InitialSet::Ball { radius, count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let ball = matches!(self, InitialSet::Ball { .. });
                let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
                Ok((0..*count)
                    .map(|_| {
                        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                        let scale = if ball { radius * unit.sample(&mut rng).powf(1.0 / n as f64) } else { *radius };
                        v.iter_mut().for_each(|a| *a *= scale / norm);
                        v
                    })
                    .collect())
            }
            InitialSet::Points(pts) => {
                if let Some(bad) = pts.iter().find(|p| p.len() != n) {
                    return Err(SimError::InvalidArgument(format!(
                        "initial point has {} components, expected {n}",
                        bad.len()
                    )));
                }
                Ok(pts.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub x0: Vec<f64>,
    pub theta_hat0: Vec<f64>,
    pub result: Result<Trajectory, SimError>,
}

/// Worker count for batch runs: `KLADAPT_THREADS` if set to a positive
/// integer, otherwise rayon's default.
pub fn thread_count() -> usize {
    std::env::var("KLADAPT_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs one integration per initial state, in parallel, returning results in
/// input order.
pub fn sweep(
    cl: &ClosedLoop,
    set: &InitialSet,
    theta_hat0: &[f64],
    t_end: f64,
    opts: &SimOptions,
) -> Result<Vec<SweepRun>, SimError> {
    let pts = set.points(cl.n)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count())
        .build()
        .map_err(|e| SimError::InvalidArgument(e.to_string()))?;
    Ok(pool.install(|| {
        pts.par_iter()
            .map(|x0| SweepRun {
                x0: x0.clone(),
                theta_hat0: theta_hat0.to_vec(),
                result: integrate(cl, x0, theta_hat0, t_end, opts),
            })
            .collect()
    }))
}
