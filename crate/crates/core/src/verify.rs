//! Pointwise checks of Lyapunov, input-to-output and envelope inequalities
//! along simulated trajectories, plus empirical uniformity probes.
//!
//! Derivatives along the flow are symbolic Lie derivatives against the
//! closed-loop field; the trajectory only supplies the evaluation points.

use std::fmt::Write as _;

use crate::expr::{Expr, Symbol, Tape, TapeError};
use crate::matched::{ComparisonFunction, IosCertificate};
use crate::sim::dopri::{self, DopriOptions};
use crate::sim::{sweep, ClosedLoop, InitialSet, SimError, SimOptions, Trajectory};

/// Default absolute tolerance of the margin checks.
pub const DEFAULT_TOL: f64 = 1e-6;
/// Default multiplicative slack of the exponential envelope.
pub const ENVELOPE_SLACK: f64 = 1.0 + 1e-4;
/// Multiplicative slack of the comparison-ODE envelope.
pub const COMPARISON_SLACK: f64 = 1.0 + 1e-3;

/// Outcome of one inequality check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_time: f64,
    pub tolerance: f64,
    /// Set for falsification checks, which are meant to fail.
    pub expect_fail: bool,
    pub detail: String,
    /// `(t, margin)` at every evaluation point.
    pub margins: Vec<(f64, f64)>,
}

impl Check {
    fn from_margins(name: &str, margins: Vec<(f64, f64)>, tolerance: f64) -> Check {
        let (worst_time, worst_margin) = margins
            .iter()
            .copied()
            .fold((0.0, f64::INFINITY), |acc, (t, m)| if m < acc.1 || m.is_nan() { (t, m) } else { acc });
        Check {
            name: name.to_string(),
            pass: worst_margin >= -tolerance,
            worst_margin,
            worst_time,
            tolerance,
            expect_fail: false,
            detail: String::new(),
            margins,
        }
    }

    fn failed_eval(name: &str, err: &TapeError, tolerance: f64) -> Check {
        Check {
            name: name.to_string(),
            pass: false,
            worst_margin: f64::NEG_INFINITY,
            worst_time: f64::NAN,
            tolerance,
            expect_fail: false,
            detail: format!("evaluation failed: {err}"),
            margins: Vec::new(),
        }
    }

    /// Marks the check as a falsification run.
    pub fn expecting_failure(mut self) -> Check {
        self.expect_fail = true;
        self
    }

    /// Whether the outcome is the intended one.
    pub fn as_expected(&self) -> bool {
        self.pass != self.expect_fail
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Check {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn push(&mut self, c: Check) {
        self.checks.push(c);
    }

    /// True when every check came out as intended.
    pub fn all_as_expected(&self) -> bool {
        self.checks.iter().all(Check::as_expected)
    }

    pub fn summary(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.as_expected()).count();
        format!("{ok}/{} checks as expected", self.checks.len())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let verdict = match (c.pass, c.expect_fail) {
                (true, false) => "PASS",
                (false, false) => "FAIL",
                (false, true) => "FAIL (expected)",
                (true, true) => "PASS (expected failure did not occur)",
            };
            let _ = write!(
                s,
                "{verdict} {}: worst margin {:.6e} at t = {} (tol {:e})",
                c.name, c.worst_margin, c.worst_time, c.tolerance
            );
            if !c.detail.is_empty() {
                let _ = write!(s, " [{}]", c.detail);
            }
            s.push('\n');
        }
        let _ = writeln!(s, "{}", self.summary());
        s
    }

    /// CSV of all margin series: `check,t,margin`.
    pub fn margins_csv(&self) -> String {
        let mut s = String::from("check,t,margin\n");
        for c in &self.checks {
            for (t, m) in &c.margins {
                let _ = writeln!(s, "{},{t:.16e},{m:.16e}", c.name);
            }
        }
        s
    }
}

/// `L_F f = Σᵢ ∂f/∂xᵢ Fᵢ + Σⱼ ∂f/∂θ̂ⱼ F_{n+j}` for the stacked field `F`.
pub fn lie_derivative(f: &Expr, field: &[Expr], n: usize) -> Expr {
    let mut terms = Vec::with_capacity(field.len());
    for (k, fk) in field.iter().enumerate() {
        let sym = if k < n { Symbol::State(k) } else { Symbol::Estimate(k - n) };
        if f.depends_on(&sym) {
            terms.push(f.partial(&sym) * fk);
        }
    }
    Expr::sum(terms)
}

/// `(|θ|² − r)⁺`.
pub fn excess(theta: &[f64], r: f64) -> f64 {
    (theta.iter().map(|v| v * v).sum::<f64>() - r).max(0.0)
}

fn eval_series(
    traj: &Trajectory,
    cl: &ClosedLoop,
    exprs: &[Expr],
) -> Result<Vec<Vec<f64>>, TapeError> {
    let tape = Tape::compile(exprs, &cl.constants)?;
    let mut scratch = Vec::new();
    let mut out = vec![0.0; exprs.len()];
    let mut rows = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        tape.eval_into(traj.x(k), traj.theta_hat(k), &mut out, &mut scratch)?;
        rows.push(out.clone());
    }
    Ok(rows)
}

/// `bound − d/dt V ≥ −tol` at every report point.
pub fn check_lyapunov(name: &str, traj: &Trajectory, cl: &ClosedLoop, v: &Expr, bound: &Expr, tol: f64) -> Check {
    let vdot = lie_derivative(v, &cl.field, cl.n);
    match eval_series(traj, cl, &[vdot, bound.clone()]) {
        Ok(rows) => {
            let margins = traj.t.iter().zip(&rows).map(|(t, r)| (*t, r[1] - r[0])).collect();
            Check::from_margins(name, margins, tol)
        }
        Err(e) => Check::failed_eval(name, &e, tol),
    }
}

/// `d/dt ½|T|² ≤ −ω|T|² + ε(|θ|² − r)⁺` at every report point.
pub fn check_ios(name: &str, traj: &Trajectory, cl: &ClosedLoop, cert: &IosCertificate, tol: f64) -> Check {
    let IosCertificate { output, omega, epsilon, r } = cert;
    let (omega, epsilon, r) = (*omega, *epsilon, *r);
    let t_sq = Expr::sum(output.iter().map(Expr::square));
    let udot = lie_derivative(&(0.5 * &t_sq), &cl.field, cl.n);
    let residual = epsilon * excess(&cl.theta, r);
    let bound = -omega * t_sq + residual;
    match eval_series(traj, cl, &[udot, bound]) {
        Ok(rows) => {
            let margins = traj.t.iter().zip(&rows).map(|(t, r)| (*t, r[1] - r[0])).collect();
            Check::from_margins(name, margins, tol).with_detail(format!("residual {residual}"))
        }
        Err(e) => Check::failed_eval(name, &e, tol),
    }
}

/// `(|T(t)|² − ω⁻¹ε(|θ|²−r)⁺)⁺ ≤ slack · e^{−2ωt} (|T(0)|² − ω⁻¹ε(|θ|²−r)⁺)⁺`.
///
/// Margins are `rhs − lhs`; the absolute tolerance `tol` covers integration
/// error once both sides are tiny.
pub fn check_exponential_envelope(
    name: &str,
    traj: &Trajectory,
    cl: &ClosedLoop,
    cert: &IosCertificate,
    slack: f64,
    tol: f64,
) -> Check {
    let IosCertificate { output, omega, epsilon, r } = cert;
    let (omega, epsilon, r) = (*omega, *epsilon, *r);
    let t_sq = Expr::sum(output.iter().map(Expr::square));
    let level = epsilon * excess(&cl.theta, r) / omega;
    match eval_series(traj, cl, &[t_sq]) {
        Ok(rows) if !rows.is_empty() => {
            let lhs0 = (rows[0][0] - level).max(0.0);
            let margins = traj
                .t
                .iter()
                .zip(&rows)
                .map(|(t, r)| {
                    let lhs = (r[0] - level).max(0.0);
                    (*t, slack * (-2.0 * omega * *t).exp() * lhs0 - lhs)
                })
                .collect();
            Check::from_margins(name, margins, tol).with_detail(format!("level {level}"))
        }
        Ok(_) => Check::from_margins(name, Vec::new(), tol),
        Err(e) => Check::failed_eval(name, &e, tol),
    }
}

/// Checks around the matched-design comparison argument, with
/// `W = ½((P − α)⁺)²`:
///
/// * `implication`: where `W > 0`, `Ṗ ≤ −(λ/2)ρ(P)`;
/// * `monotone`: `(P − α)⁺` is nonincreasing on the report grid;
/// * `comparison`: `W(t) ≤ (1 + 1e-3)·W_c(t)` where `Ẇ_c = −ρ̃(W_c)`,
///   `W_c(0) = W(0)`, `ρ̃(s) = λ√(s/2)·ρ(√(2s))`.
pub fn check_theorem1_comparison(
    traj: &Trajectory,
    cl: &ClosedLoop,
    p_fn: &Expr,
    rho: &dyn ComparisonFunction,
    alpha: f64,
    lambda: f64,
    tol: f64,
) -> Vec<Check> {
    let pdot = lie_derivative(p_fn, &cl.field, cl.n);
    let rows = match eval_series(traj, cl, &[p_fn.clone(), pdot]) {
        Ok(r) => r,
        Err(e) => {
            return ["implication", "monotone", "comparison"]
                .iter()
                .map(|n| Check::failed_eval(n, &e, tol))
                .collect()
        }
    };
    let excess_p: Vec<f64> = rows.iter().map(|r| (r[0] - alpha).max(0.0)).collect();
    let implication = traj
        .t
        .iter()
        .zip(&rows)
        .zip(&excess_p)
        .filter(|(_, e)| **e > 0.0)
        .map(|((t, r), _)| (*t, -0.5 * lambda * rho.value(r[0]) - r[1]))
        .collect();
    let monotone = traj.t.windows(2).zip(excess_p.windows(2)).map(|(t, e)| (t[1], e[0] - e[1])).collect();

    let w: Vec<f64> = excess_p.iter().map(|e| 0.5 * e * e).collect();
    let rho_tilde = |s: f64| {
        let s = s.max(0.0);
        lambda * (s / 2.0).sqrt() * rho.value((2.0 * s).sqrt())
    };
    let mut w_comp = Vec::with_capacity(traj.len());
    let opts = DopriOptions { rtol: 1e-10, atol: 1e-14, ..Default::default() };
    let t_end = traj.t.last().copied().unwrap_or(0.0);
    let comparison = if t_end > 0.0 && !w.is_empty() {
        let (_, stop) = dopri::integrate::<(), _, _>(
            |y, dy| {
                dy[0] = -rho_tilde(y[0]);
                Ok(())
            },
            &[w[0]],
            t_end,
            &traj.t,
            &opts,
            |_, y| w_comp.push(y[0].max(0.0)),
        );
        let detail = match stop {
            Some(s) => format!("comparison solve stopped: {s:?}"),
            None => String::new(),
        };
        let margins = traj
            .t
            .iter()
            .zip(w.iter().zip(&w_comp))
            .map(|(t, (wt, wc))| (*t, COMPARISON_SLACK * wc - wt))
            .collect();
        Check::from_margins("comparison", margins, tol).with_detail(detail)
    } else {
        Check::from_margins("comparison", Vec::new(), tol)
    };
    vec![
        Check::from_margins("implication", implication, tol),
        Check::from_margins("monotone", monotone, tol),
        comparison,
    ]
}

/// Least-squares decay rate `−d ln v / dt` over samples with `t ∈ [t0, t1]`
/// and `v > floor`.
pub fn log_linear_rate(t: &[f64], v: &[f64], t0: f64, t1: f64, floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(v)
        .filter(|(ti, vi)| **ti >= t0 && **ti <= t1 && **vi > floor)
        .map(|(ti, vi)| (*ti, vi.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

/// First report time after which `|x|` stays at or below `eps`.
pub fn hitting_time(traj: &Trajectory, eps: f64) -> Option<f64> {
    let norms: Vec<f64> = (0..traj.len()).map(|k| traj.x(k).iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut first = None;
    for k in (0..norms.len()).rev() {
        if norms[k] > eps {
            break;
        }
        first = Some(traj.t[k]);
    }
    first
}

/// Empirical attainment times for one target level.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformityProbe {
    pub radius: f64,
    pub eps: f64,
    /// Hitting time per initial state, `None` when not attained by `t_end`.
    pub samples: Vec<Option<f64>>,
    /// Largest hitting time, `None` if some run never attained `eps`.
    pub t_max: Option<f64>,
}

impl UniformityProbe {
    pub fn all_attained(&self) -> bool {
        self.samples.iter().all(Option::is_some)
    }

    pub fn t_min(&self) -> Option<f64> {
        self.samples.iter().flatten().copied().reduce(f64::min)
    }
}

/// Runs the closed loop from every point of `set` (radius `radius`) and
/// records hitting times of `|x| ≤ eps` for each level.
pub fn uniformity_probe(
    cl: &ClosedLoop,
    set: &InitialSet,
    radius: f64,
    theta_hat0: &[f64],
    eps_list: &[f64],
    t_end: f64,
    opts: &SimOptions,
) -> Result<Vec<UniformityProbe>, SimError> {
    let count = set.points(cl.n)?.len();
    if count < 8 {
        return Err(SimError::InvalidArgument(format!("uniformity probe needs at least 8 samples, got {count}")));
    }
    let runs = sweep(cl, set, theta_hat0, t_end, opts)?;
    Ok(eps_list
        .iter()
        .map(|&eps| {
            let samples: Vec<Option<f64>> =
                runs.iter().map(|r| r.result.as_ref().ok().and_then(|tr| hitting_time(tr, eps))).collect();
            let t_max = if samples.iter().all(Option::is_some) {
                samples.iter().flatten().copied().reduce(f64::max)
            } else {
                None
            };
            UniformityProbe { radius, eps, samples, t_max }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matched::AdaptiveController;
    use crate::model::{StrictFeedbackSystem, System, TrueParameters};
    use crate::sim::integrate;

    fn x() -> Expr {
        Expr::state(0)
    }

    fn linear_demo() -> (ClosedLoop, Trajectory) {
        let sys = StrictFeedbackSystem::new(vec![-x()], vec![Expr::one()], vec![vec![Expr::zero()]]).unwrap();
        let cl = ClosedLoop::new(&System::StrictFeedback(sys), &AdaptiveController::open_loop(1, 1), &TrueParameters(vec![0.0]))
            .unwrap();
        let tr = integrate(&cl, &[1.5], &[0.0], 3.0, &SimOptions::default()).unwrap();
        (cl, tr)
    }

    #[test]
    fn equality_case_has_zero_margin() {
        let (cl, tr) = linear_demo();
        let c = check_lyapunov("v", &tr, &cl, &(0.5 * x().square()), &-x().square(), DEFAULT_TOL);
        assert!(c.pass);
        assert!(c.worst_margin.abs() < 1e-15);
        let wrong = check_lyapunov("v", &tr, &cl, &(0.5 * x().square()), &(-2.0 * x().square()), DEFAULT_TOL);
        assert!(!wrong.pass);
        assert_eq!(wrong.worst_time, 0.0);
    }

    #[test]
    fn envelope_checks() {
        let (cl, tr) = linear_demo();
        let cert = IosCertificate { output: vec![x()], omega: 1.0, epsilon: 1.0, r: 0.0 };
        let c = check_exponential_envelope("env", &tr, &cl, &cert, ENVELOPE_SLACK, 1e-12);
        assert!(c.pass, "{}", c.worst_margin);
        let doubled = IosCertificate { omega: 2.0, ..cert.clone() };
        assert!(!check_exponential_envelope("env", &tr, &cl, &doubled, ENVELOPE_SLACK, 1e-12).pass);
        let ios = check_ios("ios", &tr, &cl, &cert, DEFAULT_TOL);
        assert!(ios.pass);
    }

    #[test]
    fn tolerance_monotonicity() {
        let (cl, tr) = linear_demo();
        let c = check_lyapunov("v", &tr, &cl, &(0.5 * x().square()), &(-1.2 * x().square()), 0.0);
        for tol in [1e-3, 1e-1, 1.0, 10.0] {
            let c2 = check_lyapunov("v", &tr, &cl, &(0.5 * x().square()), &(-1.2 * x().square()), tol);
            assert!(!c.pass || c2.pass);
            assert_eq!(c2.pass, c2.worst_margin >= -tol);
        }
    }

    #[test]
    fn rate_fit_recovers_exponent() {
        let t: Vec<f64> = (0..100).map(|k| k as f64 * 0.05).collect();
        let v: Vec<f64> = t.iter().map(|s| 3.0 * (-2.5 * s).exp()).collect();
        let r = log_linear_rate(&t, &v, 0.0, 5.0, 0.0).unwrap();
        assert!((r - 2.5).abs() < 1e-12);
        assert_eq!(log_linear_rate(&t, &v, 10.0, 11.0, 0.0), None);
    }

    #[test]
    fn hitting_times() {
        let (cl, tr) = linear_demo();
        let h = hitting_time(&tr, 1.0).unwrap();
        assert!((h - (1.5f64).ln()).abs() < 3.0 / 1999.0 + 1e-9, "{h}");
        assert_eq!(hitting_time(&tr, 10.0), Some(0.0));
        assert_eq!(hitting_time(&tr, 1e-6), None);
        let probes = uniformity_probe(
            &cl,
            &InitialSet::Points((1..=8).map(|k| vec![k as f64 * 0.25]).collect()),
            2.0,
            &[0.0],
            &[0.1, 5.0],
            6.0,
            &SimOptions { report_points: 200, ..Default::default() },
        )
        .unwrap();
        assert!(probes[0].all_attained());
        assert_eq!(probes[1].t_max, Some(0.0));
        assert!(uniformity_probe(&cl, &InitialSet::Points(vec![vec![1.0]]), 1.0, &[0.0], &[0.1], 1.0, &SimOptions::default())
            .is_err());
    }

    #[test]
    fn report_rendering() {
        let (cl, tr) = linear_demo();
        let mut rep = VerificationReport::default();
        rep.push(check_lyapunov("good", &tr, &cl, &(0.5 * x().square()), &-x().square(), DEFAULT_TOL));
        rep.push(
            check_lyapunov("falsify", &tr, &cl, &(0.5 * x().square()), &(-2.0 * x().square()), DEFAULT_TOL).expecting_failure(),
        );
        assert!(rep.all_as_expected());
        let text = rep.render();
        assert!(text.contains("PASS good") && text.contains("FAIL (expected) falsify"));
        assert_eq!(rep.margins_csv().lines().count(), 1 + 2 * tr.len());
    }
}
