//! Adaptive controllers for plants with matched uncertainty.
//!
//! The standard certainty-equivalence scheme gives `V̇ ≤ −Q` for
//! `V = P + ½(θ̂−θ)'Γ⁻¹(θ̂−θ)` but no uniform convergence rate. The damped
//! scheme adds `−(δ/2·|φ|² + μ(r+|θ̂|²))·∇P·g` to the feedback, which yields
//! `Ṗ ≤ −½ρ(P) + (2δ)⁻¹(|θ|²−r)⁺` and hence a KL estimate for `P(x)` outside
//! the residual level `α`.

mod envelope;

pub use envelope::{
    fit_rho_envelope, residual_radius, ComparisonFunction, EnvelopeError, LinearComparison, ResidualRadius,
    RhoEnvelope,
};

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::expr::{Expr, Symbol, Tape, TapeError};
use crate::model::{DesignConstants, MatchedSystem, TrueParameters};

/// `d/dt function ≤ bound` along the closed loop.
#[derive(Debug, Clone)]
pub struct LyapunovCertificate {
    pub function: Expr,
    pub bound: Expr,
}

/// `d/dt ½|T|² ≤ −ω|T|² + ε(|θ|²−r)⁺` along the closed loop.
#[derive(Debug, Clone)]
pub struct IosCertificate {
    pub output: Vec<Expr>,
    pub omega: f64,
    pub epsilon: f64,
    pub r: f64,
}

/// Feedback `u(x, θ̂)` with estimate update `dθ̂/dt = w(x, θ̂)`.
///
/// `u` and `w` never mention the true parameters. Diagnostics and
/// certificates may, through the named constants `theta1..thetap`.
#[derive(Debug, Clone)]
pub struct AdaptiveController {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub u: Expr,
    pub w: Vec<Expr>,
    /// Extra named channels recorded along trajectories.
    pub diagnostics: BTreeMap<String, Expr>,
    pub lyapunov: Option<LyapunovCertificate>,
    pub ios: Option<IosCertificate>,
    /// Bindings for named design constants used by `u`, `w` or diagnostics.
    pub constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("controller reads the true parameter `{0}`")]
    ReadsTrueParameter(String),
    #[error("u({x:?}, {theta_hat:?}) = {value:e} does not vanish")]
    FeedbackAtOrigin { x: Vec<f64>, theta_hat: Vec<f64>, value: f64 },
    #[error("w[{index}]({x:?}, {theta_hat:?}) = {value:e} does not vanish")]
    UpdateAtOrigin { index: usize, x: Vec<f64>, theta_hat: Vec<f64>, value: f64 },
    #[error(transparent)]
    Eval(#[from] TapeError),
    #[error("adaptation matrix is singular")]
    SingularAdaptation,
}

impl AdaptiveController {
    /// `u ≡ 0`, `w ≡ 0`.
    pub fn open_loop(n: usize, p: usize) -> Self {
        AdaptiveController {
            name: "open-loop".into(),
            n,
            p,
            u: Expr::zero(),
            w: vec![Expr::zero(); p],
            diagnostics: BTreeMap::new(),
            lyapunov: None,
            ios: None,
            constants: BTreeMap::new(),
        }
    }

    /// First true-parameter symbol read by `u` or `w`, if any.
    pub fn true_parameter_leak(&self) -> Option<String> {
        std::iter::once(&self.u).chain(&self.w).find_map(|e| {
            e.free_symbols().into_iter().find_map(|s| match &s {
                Symbol::Named(name) if is_true_parameter_name(name) => Some(name.to_string()),
                _ => None,
            })
        })
    }

    /// Checks `u(0,θ̂) = 0` and `w(0,θ̂) = 0` on the given estimates.
    pub fn check_equilibrium(&self, estimates: &[Vec<f64>], tol: f64) -> Result<(), ControllerError> {
        let mut exprs = vec![self.u.clone()];
        exprs.extend(self.w.iter().cloned());
        let tape = Tape::compile(&exprs, &self.constants)?;
        let x = vec![0.0; self.n];
        for th in estimates {
            let v = tape.eval(&x, th)?;
            if v[0].abs() > tol {
                return Err(ControllerError::FeedbackAtOrigin { x, theta_hat: th.clone(), value: v[0] });
            }
            for (j, wj) in v[1..].iter().enumerate() {
                if wj.abs() > tol {
                    return Err(ControllerError::UpdateAtOrigin {
                        index: j + 1,
                        x,
                        theta_hat: th.clone(),
                        value: *wj,
                    });
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn is_true_parameter_name(name: &str) -> bool {
    name.strip_prefix("theta")
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
}

/// `V = P + ½(θ̂−θ)'Γ⁻¹(θ̂−θ)` with the true parameters as named symbols.
fn matched_lyapunov(sys: &MatchedSystem, gamma: &DMatrix<f64>) -> Result<Expr, ControllerError> {
    let inv = gamma.clone().try_inverse().ok_or(ControllerError::SingularAdaptation)?;
    let p = sys.p();
    let theta = TrueParameters::symbols(p);
    let err: Vec<Expr> = (0..p).map(|j| Expr::estimate(j) - &theta[j]).collect();
    let mut terms = vec![sys.p_clf.clone()];
    for a in 0..p {
        for b in 0..p {
            let c = inv[(a, b)];
            if c != 0.0 {
                terms.push(0.5 * c * &err[a] * &err[b]);
            }
        }
    }
    Ok(Expr::sum(terms))
}

fn update_law(sys: &MatchedSystem, gamma: &DMatrix<f64>, lg_p: &Expr) -> Vec<Expr> {
    let p = sys.p();
    (0..p)
        .map(|a| {
            Expr::sum((0..p).filter(|&b| gamma[(a, b)] != 0.0).map(|b| gamma[(a, b)] * &sys.phi[b])) * lg_p
        })
        .collect()
}

fn phi_dot_estimate(sys: &MatchedSystem) -> Expr {
    Expr::sum(sys.phi.iter().enumerate().map(|(j, ph)| ph * Expr::estimate(j)))
}

fn assemble(name: &str, sys: &MatchedSystem, u: Expr, w: Vec<Expr>, v: Expr) -> AdaptiveController {
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("P".to_string(), sys.p_clf.clone());
    diagnostics.insert("V".to_string(), v.clone());
    AdaptiveController {
        name: name.to_string(),
        n: sys.n(),
        p: sys.p(),
        u,
        w,
        diagnostics,
        lyapunov: Some(LyapunovCertificate { function: v, bound: -&sys.q_rate }),
        ios: None,
        constants: sys.constants.clone(),
    }
}

/// Certainty-equivalence scheme: `u = k0 − φ'θ̂`, `w = Γφ(∇P·g)`.
pub fn standard_controller(sys: &MatchedSystem, gamma: &DMatrix<f64>) -> Result<AdaptiveController, ControllerError> {
    let lg_p = sys.lg_p();
    let u = &sys.k0 - phi_dot_estimate(sys);
    let w = update_law(sys, gamma, &lg_p);
    let v = matched_lyapunov(sys, gamma)?;
    Ok(assemble("standard", sys, u, w, v))
}

/// The nonlinear damping term `−(δ/2·|φ|² + μ(r+|θ̂|²))·∇P·g`.
pub fn damping_term(sys: &MatchedSystem, delta: f64, r: f64) -> Expr {
    let phi_sq = Expr::sum(sys.phi.iter().map(|e| e.square()));
    let th_sq = Expr::sum((0..sys.p()).map(|j| Expr::estimate(j).square()));
    let gain = 0.5 * delta * phi_sq + &sys.mu * (th_sq + r);
    -(gain * sys.lg_p())
}

/// Damped scheme: the standard feedback plus [`damping_term`].
pub fn damped_controller(sys: &MatchedSystem, consts: &DesignConstants) -> Result<AdaptiveController, ControllerError> {
    let gamma = consts.adaptation_matrix();
    let lg_p = sys.lg_p();
    let u = &sys.k0 - phi_dot_estimate(sys) + damping_term(sys, consts.delta, consts.r);
    let w = update_law(sys, &gamma, &lg_p);
    let v = matched_lyapunov(sys, &gamma)?;
    Ok(assemble("damped", sys, u, w, v))
}

/// Projection onto the closed ball of radius `√r`.
pub fn project_ball(theta: &[f64], r: f64) -> Vec<f64> {
    let norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = r.max(0.0).sqrt();
    if norm <= radius {
        theta.to_vec()
    } else {
        theta.iter().map(|v| v * radius / norm).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{simplify, Point};

    fn x() -> Expr {
        Expr::state(0)
    }
    fn th() -> Expr {
        Expr::estimate(0)
    }

    fn demo() -> MatchedSystem {
        MatchedSystem::new(
            vec![-x()],
            vec![Expr::one()],
            vec![x()],
            0.5 * x().square(),
            x().square(),
            Expr::zero(),
            Expr::one(),
        )
        .unwrap()
    }

    fn same_values(a: &Expr, b: &Expr) {
        for &(xv, tv) in &[(0.3, -1.2), (2.0, 0.5), (-1.1, 3.0), (0.0, 7.0)] {
            let pt = Point::new(&[xv], &[tv]).with_true_parameters(&[0.7]);
            let (va, vb) = (a.eval(&pt).unwrap(), b.eval(&pt).unwrap());
            assert!((va - vb).abs() <= 1e-12 * va.abs().max(1.0), "{a} vs {b} at {xv},{tv}");
        }
    }

    #[test]
    fn standard_scheme_on_scalar_demo() {
        let c = standard_controller(&demo(), &DMatrix::identity(1, 1)).unwrap();
        same_values(&c.u, &-(x() * th()));
        same_values(&c.w[0], &x().square());
        c.check_equilibrium(&[vec![0.0], vec![-3.0], vec![10.0]], 0.0).unwrap();
    }

    #[test]
    fn damped_scheme_on_scalar_demo() {
        let consts = DesignConstants::new(0.0, 1.0, 1.0, 1.0, vec![1.0]).unwrap().with_matched(1.0, 0.5).unwrap();
        let c = damped_controller(&demo(), &consts).unwrap();
        let expected = -(x() * th()) - (0.5 * x().square() + th().square()) * x();
        same_values(&c.u, &expected);
        c.check_equilibrium(&[vec![2.0], vec![-1.0]], 0.0).unwrap();
        let s = standard_controller(&demo(), &consts.adaptation_matrix()).unwrap();
        let diff = simplify(&(&c.u - &s.u - damping_term(&demo(), 1.0, 0.0)));
        assert!(diff.is_zero());
    }

    #[test]
    fn lyapunov_function_uses_inverse_gain() {
        let c = standard_controller(&demo(), &DMatrix::from_element(1, 1, 4.0)).unwrap();
        let v = c.lyapunov.clone().unwrap().function;
        let pt = Point::new(&[2.0], &[1.5]).with_true_parameters(&[0.5]);
        assert!((v.eval(&pt).unwrap() - (2.0 + 0.125)).abs() < 1e-15);
        assert!(c.true_parameter_leak().is_none());
    }

    #[test]
    fn leak_detection() {
        let mut c = AdaptiveController::open_loop(1, 1);
        c.u = Expr::named("theta1") * x();
        assert_eq!(c.true_parameter_leak(), Some("theta1".into()));
        c.u = Expr::named("thetaX") * x();
        assert_eq!(c.true_parameter_leak(), None);
    }

    #[test]
    fn projection_examples() {
        let p = project_ball(&[-1.5, -0.5], 2.0);
        let s = (2.0f64 / 2.5).sqrt();
        assert!((p[0] + 1.5 * s).abs() < 1e-15 && (p[1] + 0.5 * s).abs() < 1e-15);
        assert!((p[0] - -1.341640786).abs() < 1e-9);
        assert_eq!(project_ball(&[1.0, 0.0], 2.0), vec![1.0, 0.0]);
        assert_eq!(project_ball(&[0.0, 0.0], 0.0), vec![0.0, 0.0]);
    }
}
