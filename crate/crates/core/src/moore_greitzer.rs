//! Two-state Moore-Greitzer surge model `ẋ1 = θ1x1² + θ2x1³ + x2`, `ẋ2 = u`,
//! with two hand-derived adaptive controllers and the figure datasets.
//!
//! Controller A is the classical adaptive backstepping design. Controller B
//! adds estimate-dependent nonlinear damping; it is written with the damping
//! gain `M`, the error coordinate `z`, the aggregate gain `phi_gain` and the
//! cross gain `G`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::backstep::{synthesize, SynthesisError, SynthesisOptions};
use crate::expr::Expr;
use crate::matched::{AdaptiveController, IosCertificate, LyapunovCertificate};
use crate::model::{DesignConstants, ModelError, StrictFeedbackSystem, System, TrueParameters};
use crate::sim::{integrate, sweep, BuildError, ClosedLoop, InitialSet, SimError, SimOptions, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExampleError {
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("r must be nonnegative, got {0}")]
    NegativeR(f64),
    #[error("figure number must be between 1 and 6, got {0}")]
    NoSuchFigure(usize),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Gains and scenario of the example.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleConfig {
    pub q: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub mu: f64,
    pub epsilon: f64,
    pub r: f64,
    pub theta: [f64; 2],
    pub x0: [f64; 2],
    pub theta_hat0: [f64; 2],
}

impl Default for ExampleConfig {
    fn default() -> Self {
        ExampleConfig {
            q: 1.0,
            gamma1: 1.0,
            gamma2: 1.0,
            mu: 1.0,
            epsilon: 1.0,
            r: 2.0,
            theta: [-1.5, -0.5],
            x0: [0.4, -1.0],
            theta_hat0: [0.0, 0.0],
        }
    }
}

impl ExampleConfig {
    pub fn validate(&self) -> Result<(), ExampleError> {
        let pos = [
            ("Q", self.q),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("mu", self.mu),
            ("epsilon", self.epsilon),
        ];
        for (name, value) in pos {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ExampleError::NotPositive { name, value });
            }
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(ExampleError::NegativeR(self.r));
        }
        Ok(())
    }

    pub fn true_parameters(&self) -> TrueParameters {
        TrueParameters(self.theta.to_vec())
    }

    /// Constants for the synthesized controller: `α = ω = μ`.
    pub fn design_constants(&self) -> Result<DesignConstants, ModelError> {
        DesignConstants::new(self.r, self.mu, self.mu, self.epsilon, vec![self.gamma1, self.gamma2])
    }

    fn validated(&self) -> &Self {
        self.validate().expect("invalid example configuration");
        self
    }
}

fn x1() -> Expr {
    Expr::state(0)
}

fn x2() -> Expr {
    Expr::state(1)
}

fn th(j: usize) -> Expr {
    Expr::estimate(j)
}

pub fn system() -> StrictFeedbackSystem {
    StrictFeedbackSystem::new(
        vec![Expr::zero(), Expr::zero()],
        vec![Expr::one(), Expr::one()],
        vec![vec![x1().square(), x1().powi(3)], vec![Expr::zero(), Expr::zero()]],
    )
    .expect("two-state chain is well formed")
}

fn estimation_energy(cfg: &ExampleConfig) -> Expr {
    let theta = TrueParameters::symbols(2);
    (th(0) - &theta[0]).square() / (2.0 * cfg.gamma1) + (th(1) - &theta[1]).square() / (2.0 * cfg.gamma2)
}

/// `z_A = x2 + θ̂1x1² + θ̂2x1³ + μx1`.
pub fn controller_a_error(cfg: &ExampleConfig) -> Expr {
    x2() + th(0) * x1().square() + th(1) * x1().powi(3) + cfg.mu * x1()
}

/// Classical adaptive backstepping controller.
///
/// Diagnostics: `V`, `U = ½x1² + (Q/2)z_A²`, `z`, `T1 = x1`, `T2 = √Q z_A`.
/// The certificate is `V̇ ≤ −μx1² − μQz_A²`.
pub fn controller_a(cfg: &ExampleConfig) -> AdaptiveController {
    let cfg = cfg.validated();
    let (q, mu) = (cfg.q, cfg.mu);
    let z = controller_a_error(cfg);
    let drift_hat = th(0) * x1().square() + th(1) * x1().powi(3) + x2();
    let slope = 2.0 * th(0) * x1() + 3.0 * th(1) * x1().square();
    let w1 = cfg.gamma1 * q * x1().square() * &z * (&slope + mu) + cfg.gamma1 * x1().powi(3);
    let w2 = cfg.gamma2 * q * x1().powi(3) * &z * (&slope + mu) + cfg.gamma2 * x1().powi(4);
    let u = -((1.0 / q + mu * mu) * x1()) - &w1 * x1().square() - &w2 * x1().powi(3)
        - (&slope + 2.0 * mu) * drift_hat;
    let u_fn = 0.5 * x1().square() + 0.5 * q * z.square();
    let v = &u_fn + estimation_energy(cfg);
    let bound = -(mu * x1().square()) - mu * q * z.square();
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("V".into(), v.clone());
    diagnostics.insert("U".into(), u_fn);
    diagnostics.insert("z".into(), z.clone());
    diagnostics.insert("T1".into(), x1());
    diagnostics.insert("T2".into(), q.sqrt() * &z);
    AdaptiveController {
        name: "example-a".into(),
        n: 2,
        p: 2,
        u,
        w: vec![w1, w2],
        diagnostics,
        lyapunov: Some(LyapunovCertificate { function: v, bound }),
        ios: None,
        constants: BTreeMap::new(),
    }
}

/// The damping gain `M`, error coordinate `z`, aggregate gain and cross gain
/// `G` of controller B.
pub struct ControllerBTerms {
    pub m: Expr,
    pub z: Expr,
    pub phi_gain: Expr,
    pub g: Expr,
}

pub fn controller_b_terms(cfg: &ExampleConfig) -> ControllerBTerms {
    let (q, mu, eps, r) = (cfg.q, cfg.mu, cfg.epsilon, cfg.r);
    let est_sq = th(0).square() + th(1).square() + r;
    let m = 2.0 * mu + 0.5 * &est_sq + x1().square() + (1.0 + 1.0 / (2.0 * eps)) * x1().powi(4)
        + x1().powi(6) / (2.0 * eps);
    let z = x2() + th(0) * x1().square() + th(1) * x1().powi(3) + &m * x1();
    let phi_gain = 2.0 * th(0) * x1() + 3.0 * th(1) * x1().square() + &m
        + x1().square() * (2.0 + 2.0 * (2.0 * eps + 1.0) / eps * x1().square() + 3.0 / eps * x1().powi(4));
    let g = mu
        + q * x1().square() * (1.0 + x1().square()) * phi_gain.square()
            * (x1().square() / (2.0 * eps) + est_sq / mu);
    ControllerBTerms { m, z, phi_gain, g }
}

/// Controller with estimate-dependent nonlinear damping.
///
/// Diagnostics: `U = ½x1² + (Q/2)z²`, `W = U + Σ(θ̂ⱼ−θⱼ)²/(2γⱼ)`, `M`, `z`,
/// `T1 = x1`, `T2 = √Q z`. Certificates: `Ẇ ≤ −μU` and the output
/// `(x1, √Q z)` with rate `μ`, residual coefficient `ε` and level `r`.
pub fn controller_b(cfg: &ExampleConfig) -> AdaptiveController {
    let cfg = cfg.validated();
    let q = cfg.q;
    let ControllerBTerms { m, z, phi_gain, g } = controller_b_terms(cfg);
    let common = q * &z * &phi_gain + x1();
    let w1 = cfg.gamma1 * x1().square() * &common;
    let w2 = cfg.gamma2 * x1().powi(3) * &common;
    let u = -(x1() / q) - (x1() + th(0)) * x1() * &w1 - (x1().square() + th(1)) * x1() * &w2 - &g * &z
        + &phi_gain * (&m * x1() - &z);
    let u_fn = 0.5 * x1().square() + 0.5 * q * z.square();
    let w_fn = &u_fn + estimation_energy(cfg);
    let t2 = q.sqrt() * &z;
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("U".into(), u_fn.clone());
    diagnostics.insert("W".into(), w_fn.clone());
    diagnostics.insert("M".into(), m);
    diagnostics.insert("z".into(), z);
    diagnostics.insert("T1".into(), x1());
    diagnostics.insert("T2".into(), t2.clone());
    AdaptiveController {
        name: "example-b".into(),
        n: 2,
        p: 2,
        u,
        w: vec![w1, w2],
        diagnostics,
        lyapunov: Some(LyapunovCertificate { function: w_fn, bound: -(cfg.mu * u_fn) }),
        ios: Some(IosCertificate { output: vec![x1(), t2], omega: cfg.mu, epsilon: cfg.epsilon, r: cfg.r }),
        constants: BTreeMap::new(),
    }
}

/// The controller produced by recursive backstepping with `α = ω = μ`.
pub fn synthesized_controller(cfg: &ExampleConfig) -> Result<AdaptiveController, ExampleError> {
    cfg.validate()?;
    let (ctrl, _, _) = synthesize(&system(), &cfg.design_constants()?, &SynthesisOptions::default())?;
    Ok(ctrl)
}

/// Which of the example controllers to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExampleController {
    A,
    B,
    Synthesized,
}

impl ExampleController {
    pub fn build(self, cfg: &ExampleConfig) -> Result<AdaptiveController, ExampleError> {
        match self {
            ExampleController::A => Ok(controller_a(cfg)),
            ExampleController::B => Ok(controller_b(cfg)),
            ExampleController::Synthesized => synthesized_controller(cfg),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExampleController::A => "controller A",
            ExampleController::B => "controller B",
            ExampleController::Synthesized => "synthesized",
        }
    }
}

pub fn closed_loop(cfg: &ExampleConfig, which: ExampleController) -> Result<ClosedLoop, ExampleError> {
    let ctrl = which.build(cfg)?;
    Ok(ClosedLoop::new(&System::StrictFeedback(system()), &ctrl, &cfg.true_parameters())?)
}

/// A named scenario of the example.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub cfg: ExampleConfig,
}

/// Eight scenarios covering the captioned initial points, larger initial
/// data, nonzero initial estimates and other parameter values.
pub fn presets() -> Vec<Preset> {
    let base = ExampleConfig::default();
    let with = |x0: [f64; 2], theta_hat0: [f64; 2], theta: [f64; 2]| ExampleConfig { x0, theta_hat0, theta, ..base.clone() };
    let nominal = base.theta;
    vec![
        Preset { name: "nominal-a", cfg: with([0.4, -1.0], [0.0, 0.0], nominal) },
        Preset { name: "nominal-b", cfg: with([0.6, 0.5], [0.0, 0.0], nominal) },
        Preset { name: "large-initial", cfg: with([2.0, 3.0], [0.0, 0.0], nominal) },
        Preset { name: "negative-x1", cfg: with([-1.0, 2.0], [0.0, 0.0], nominal) },
        Preset { name: "estimate-offset", cfg: with([0.4, -1.0], [1.0, 1.0], nominal) },
        Preset { name: "estimate-far", cfg: with([2.0, -2.0], [-1.0, 0.5], nominal) },
        Preset { name: "inside-ball", cfg: with([0.4, -1.0], [0.0, 0.0], [-1.0, -0.5]) },
        Preset { name: "destabilizing", cfg: with([1.5, 0.0], [0.0, 0.0], [2.0, 1.0]) },
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    /// `x2` against `x1`.
    PhasePlane,
    /// `|x(t)|`.
    StateNorm,
    /// `|θ̂(t) − θ|`.
    EstimateError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureSeries {
    pub label: String,
    pub controller: ExampleController,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureDataset {
    pub number: usize,
    pub kind: FigureKind,
    pub title: String,
    pub series: Vec<FigureSeries>,
}

impl FigureSeries {
    /// Plotted points for the given figure kind.
    pub fn curve(&self, kind: FigureKind) -> Vec<(f64, f64)> {
        curve(&self.trajectory, kind)
    }
}

/// Points of `tr` as plotted by a figure of the given kind.
pub fn curve(tr: &Trajectory, kind: FigureKind) -> Vec<(f64, f64)> {
    (0..tr.len())
        .map(|k| match kind {
            FigureKind::PhasePlane => (tr.y[k][0], tr.y[k][1]),
            FigureKind::StateNorm => (tr.t[k], tr.x(k).iter().map(|v| v * v).sum::<f64>().sqrt()),
            FigureKind::EstimateError => (
                tr.t[k],
                tr.theta_hat(k).iter().zip(&tr.theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
            ),
        })
        .collect()
}

/// Initial states of the phase-plane figures: 12 points evenly spaced on the
/// circle of radius 1.2, then the two captioned points.
pub fn phase_plane_initial_states() -> Vec<Vec<f64>> {
    let mut pts = InitialSet::Circle { radius: 1.2, count: 12 }.points(2).expect("two states");
    pts.push(vec![0.4, -1.0]);
    pts.push(vec![0.6, 0.5]);
    pts
}

/// Horizon of the state figures.
pub const STATE_HORIZON: f64 = 20.0;
/// Horizon of the estimate figures.
pub const ESTIMATE_HORIZON: f64 = 50.0;

/// Regenerates the data behind figure `number` (1 to 6).
pub fn figure_dataset(number: usize, cfg: &ExampleConfig, opts: &SimOptions) -> Result<FigureDataset, ExampleError> {
    cfg.validate()?;
    let both = [ExampleController::A, ExampleController::B];
    let (kind, title, start, horizon) = match number {
        1 | 2 => (FigureKind::PhasePlane, "phase plane", None, STATE_HORIZON),
        3 => (FigureKind::StateNorm, "|x(t)| from (0.4, -1)", Some([0.4, -1.0]), STATE_HORIZON),
        4 => (FigureKind::StateNorm, "|x(t)| from (0.6, 0.5)", Some([0.6, 0.5]), STATE_HORIZON),
        5 => (FigureKind::EstimateError, "|th(t) - theta| from (0.4, -1)", Some([0.4, -1.0]), ESTIMATE_HORIZON),
        6 => (FigureKind::EstimateError, "|th(t) - theta| from (0.6, 0.5)", Some([0.6, 0.5]), ESTIMATE_HORIZON),
        other => return Err(ExampleError::NoSuchFigure(other)),
    };
    let mut series = Vec::new();
    match start {
        None => {
            let which = if number == 1 { ExampleController::A } else { ExampleController::B };
            let cl = closed_loop(cfg, which)?;
            let set = InitialSet::Points(phase_plane_initial_states());
            for run in sweep(&cl, &set, &cfg.theta_hat0, horizon, opts)? {
                series.push(FigureSeries {
                    label: format!("{} from ({}, {})", which.label(), run.x0[0], run.x0[1]),
                    controller: which,
                    trajectory: run.result?,
                });
            }
        }
        Some(x0) => {
            for which in both {
                let cl = closed_loop(cfg, which)?;
                series.push(FigureSeries {
                    label: which.label().to_string(),
                    controller: which,
                    trajectory: integrate(&cl, &x0, &cfg.theta_hat0, horizon, opts)?,
                });
            }
        }
    }
    let title = match number {
        1 => "controller A: phase plane".to_string(),
        2 => "controller B: phase plane".to_string(),
        _ => title.to_string(),
    };
    Ok(FigureDataset { number, kind, title, series })
}
