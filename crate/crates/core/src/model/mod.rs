//! Plant models, design constants and sampled well-formedness checks.
//!
//! Two plant classes are supported:
//!
//! * matched uncertainty, `ẋ = f(x) + g(x)u + g(x)φ(x)'θ`, together with a
//!   nominal feedback `k0`, a Lyapunov candidate `P`, its decay rate `Q` and a
//!   positive function `μ` with `|φ|² ≤ μQ`;
//! * parametric strict feedback, `ẋᵢ = fᵢ + gᵢ x_{i+1} + Σⱼ φᵢⱼ θⱼ` with
//!   `x_{n+1} = u` and every function of stage `i` depending on `x1..xi` only.
//!
//! The global assumptions behind both classes cannot be decided for general
//! expressions, so they are checked on sample grids.

mod file;

pub use file::{ModelFile, MODEL_SCHEMA};
pub(crate) use file::parse_design;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::expr::{simplify, Expr, Symbol, Tape, TapeError};

/// Smallest admissible `|gᵢ|` on a validation grid.
pub const MIN_INPUT_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} = {value} violates {requirement}")]
    InvalidConstant { name: String, value: f64, requirement: &'static str },
    #[error("adaptation matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("{what} must depend on the state only, but mentions `{symbol}`")]
    DependsOnEstimate { what: String, symbol: String },
    #[error("mu is the non-positive constant {0}")]
    NonPositiveMu(f64),
    #[error(transparent)]
    Text(#[from] crate::textfmt::TextError),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

/// Synthesis and damping constants.
///
/// `alpha`, `omega`, `epsilon`, `gamma` drive backstepping; `delta`,
/// `lambda` and the adaptation matrix drive the matched-uncertainty schemes.
/// `r` is the parameter-norm budget shared by both.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignConstants {
    pub r: f64,
    pub alpha: f64,
    pub omega: f64,
    pub epsilon: f64,
    pub gamma: Vec<f64>,
    pub delta: f64,
    pub lambda: f64,
    /// Full adaptation matrix; `None` means `diag(gamma)`.
    pub gamma_matrix: Option<DMatrix<f64>>,
}

impl DesignConstants {
    pub fn new(r: f64, alpha: f64, omega: f64, epsilon: f64, gamma: Vec<f64>) -> Result<Self, ModelError> {
        let c = DesignConstants {
            r,
            alpha,
            omega,
            epsilon,
            gamma,
            delta: 1.0,
            lambda: 0.5,
            gamma_matrix: None,
        };
        c.validate()?;
        Ok(c)
    }

    /// Unit constants for `p` parameters with budget `r`.
    pub fn unit(p: usize, r: f64) -> Self {
        DesignConstants::new(r, 1.0, 1.0, 1.0, vec![1.0; p]).expect("unit constants are valid")
    }

    pub fn with_matched(mut self, delta: f64, lambda: f64) -> Result<Self, ModelError> {
        self.delta = delta;
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_gamma_matrix(mut self, m: DMatrix<f64>) -> Result<Self, ModelError> {
        self.gamma_matrix = Some(m);
        self.validate()?;
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.gamma.len()
    }

    /// The adaptation matrix Γ.
    pub fn adaptation_matrix(&self) -> DMatrix<f64> {
        match &self.gamma_matrix {
            Some(m) => m.clone(),
            None => DMatrix::from_diagonal(&DVector::from_vec(self.gamma.clone())),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |name: &str, value: f64, requirement: &'static str| {
            Err(ModelError::InvalidConstant { name: name.to_string(), value, requirement })
        };
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return bad("r", self.r, "r >= 0");
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("omega", self.omega),
            ("epsilon", self.epsilon),
            ("delta", self.delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, v, "a positive finite value");
            }
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad("lambda", self.lambda, "0 < lambda < 1");
        }
        for (j, g) in self.gamma.iter().enumerate() {
            if !(*g > 0.0 && g.is_finite()) {
                return bad(&format!("gamma[{}]", j + 1), *g, "a positive finite value");
            }
        }
        if let Some(m) = &self.gamma_matrix {
            let p = self.gamma.len();
            if m.nrows() != p || m.ncols() != p {
                return Err(ModelError::DimensionMismatch {
                    what: "adaptation matrix".into(),
                    expected: p,
                    got: m.nrows(),
                });
            }
            let sym = (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0);
            if !sym || m.clone().cholesky().is_none() {
                return Err(ModelError::NotPositiveDefinite);
            }
        }
        Ok(())
    }
}

/// Ground-truth parameter vector. Only plant dynamics and diagnostics see it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueParameters(pub Vec<f64>);

impl TrueParameters {
    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    /// `(|θ|² − r)⁺`.
    pub fn excess(&self, r: f64) -> f64 {
        (self.norm_sq() - r).max(0.0)
    }

    /// Symbols `theta1..thetap` bound to the values.
    pub fn bindings(&self) -> BTreeMap<String, f64> {
        self.0
            .iter()
            .enumerate()
            .map(|(j, v)| (format!("theta{}", j + 1), *v))
            .collect()
    }

    /// Symbolic stand-ins `theta1..thetap`.
    pub fn symbols(p: usize) -> Vec<Expr> {
        (0..p).map(|j| Expr::symbol(Symbol::true_parameter(j))).collect()
    }
}

/// Control-affine, linearly parameterized form `ẋ = F(x) + G(x)u + Φ(x)θ`.
#[derive(Debug, Clone)]
pub struct AffineDynamics {
    pub drift: Vec<Expr>,
    pub input: Vec<Expr>,
    /// `regressor[i][j]` multiplies `θⱼ` in `ẋᵢ`.
    pub regressor: Vec<Vec<Expr>>,
}

impl AffineDynamics {
    /// Right-hand side with `u` and `θ` substituted.
    pub fn field(&self, u: &Expr, theta: &[Expr]) -> Vec<Expr> {
        self.drift
            .iter()
            .zip(&self.input)
            .zip(&self.regressor)
            .map(|((f, g), row)| {
                let mut terms = vec![f.clone(), g * u];
                terms.extend(row.iter().zip(theta).map(|(phi, th)| phi * th));
                Expr::sum(terms)
            })
            .collect()
    }
}

fn reject_estimates(what: &str, e: &Expr) -> Result<(), ModelError> {
    for s in e.free_symbols() {
        if let Symbol::Estimate(_) = s {
            return Err(ModelError::DependsOnEstimate { what: what.to_string(), symbol: s.to_string() });
        }
    }
    Ok(())
}

fn check_len(what: &str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected != got {
        return Err(ModelError::DimensionMismatch { what: what.to_string(), expected, got });
    }
    Ok(())
}

/// Plant with uncertainty entering through the input channel.
#[derive(Debug, Clone)]
pub struct MatchedSystem {
    pub f: Vec<Expr>,
    pub g: Vec<Expr>,
    pub phi: Vec<Expr>,
    pub p_clf: Expr,
    pub q_rate: Expr,
    pub k0: Expr,
    pub mu: Expr,
    /// Bindings for named constants appearing in the model.
    pub constants: BTreeMap<String, f64>,
}

impl MatchedSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        f: Vec<Expr>,
        g: Vec<Expr>,
        phi: Vec<Expr>,
        p_clf: Expr,
        q_rate: Expr,
        k0: Expr,
        mu: Expr,
    ) -> Result<Self, ModelError> {
        check_len("g", f.len(), g.len())?;
        if f.is_empty() {
            return Err(ModelError::DimensionMismatch { what: "state dimension".into(), expected: 1, got: 0 });
        }
        if let Some(c) = simplify(&mu).as_const() {
            if c <= 0.0 {
                return Err(ModelError::NonPositiveMu(c));
            }
        }
        let sys = MatchedSystem { f, g, phi, p_clf, q_rate, k0, mu, constants: BTreeMap::new() };
        for (name, e) in sys.named_exprs() {
            reject_estimates(&name, &e)?;
        }
        Ok(sys)
    }

    pub fn with_constants(mut self, constants: BTreeMap<String, f64>) -> Self {
        self.constants = constants;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn p(&self) -> usize {
        self.phi.len()
    }

    fn named_exprs(&self) -> Vec<(String, Expr)> {
        let mut v = Vec::new();
        for (i, e) in self.f.iter().enumerate() {
            v.push((format!("f[{}]", i + 1), e.clone()));
        }
        for (i, e) in self.g.iter().enumerate() {
            v.push((format!("g[{}]", i + 1), e.clone()));
        }
        for (j, e) in self.phi.iter().enumerate() {
            v.push((format!("phi[{}]", j + 1), e.clone()));
        }
        v.push(("P".into(), self.p_clf.clone()));
        v.push(("Q".into(), self.q_rate.clone()));
        v.push(("k0".into(), self.k0.clone()));
        v.push(("mu".into(), self.mu.clone()));
        v
    }

    /// `∇P·g`.
    pub fn lg_p(&self) -> Expr {
        Expr::sum(
            self.g
                .iter()
                .enumerate()
                .map(|(i, gi)| self.p_clf.partial(&Symbol::State(i)) * gi),
        )
    }

    pub fn dynamics(&self) -> AffineDynamics {
        AffineDynamics {
            drift: self.f.clone(),
            input: self.g.clone(),
            regressor: self
                .g
                .iter()
                .map(|gi| self.phi.iter().map(|phj| gi * phj).collect())
                .collect(),
        }
    }
}

/// Plant in parametric strict-feedback form.
#[derive(Debug, Clone)]
pub struct StrictFeedbackSystem {
    pub f: Vec<Expr>,
    pub g: Vec<Expr>,
    /// `phi[i][j]` multiplies `θⱼ` in `ẋᵢ`.
    pub phi: Vec<Vec<Expr>>,
    pub constants: BTreeMap<String, f64>,
}

impl StrictFeedbackSystem {
    pub fn new(f: Vec<Expr>, g: Vec<Expr>, phi: Vec<Vec<Expr>>) -> Result<Self, ModelError> {
        let n = f.len();
        if n == 0 {
            return Err(ModelError::DimensionMismatch { what: "state dimension".into(), expected: 1, got: 0 });
        }
        check_len("g", n, g.len())?;
        check_len("phi rows", n, phi.len())?;
        let p = phi[0].len();
        for (i, row) in phi.iter().enumerate() {
            check_len(&format!("phi[{}] columns", i + 1), p, row.len())?;
        }
        let sys = StrictFeedbackSystem { f, g, phi, constants: BTreeMap::new() };
        for (i, e) in sys.f.iter().enumerate() {
            reject_estimates(&format!("f[{}]", i + 1), e)?;
            reject_estimates(&format!("g[{}]", i + 1), &sys.g[i])?;
            for (j, e) in sys.phi[i].iter().enumerate() {
                reject_estimates(&format!("phi[{}][{}]", i + 1, j + 1), e)?;
            }
        }
        Ok(sys)
    }

    pub fn with_constants(mut self, constants: BTreeMap<String, f64>) -> Self {
        self.constants = constants;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn p(&self) -> usize {
        self.phi[0].len()
    }

    pub fn dynamics(&self) -> AffineDynamics {
        let n = self.n();
        let mut drift = Vec::with_capacity(n);
        let mut input = Vec::with_capacity(n);
        for i in 0..n {
            if i + 1 < n {
                drift.push(&self.f[i] + &self.g[i] * Expr::state(i + 1));
                input.push(Expr::zero());
            } else {
                drift.push(self.f[i].clone());
                input.push(self.g[i].clone());
            }
        }
        AffineDynamics { drift, input, regressor: self.phi.clone() }
    }
}

/// Either plant class.
#[derive(Debug, Clone)]
pub enum System {
    Matched(MatchedSystem),
    StrictFeedback(StrictFeedbackSystem),
}

impl System {
    pub fn n(&self) -> usize {
        match self {
            System::Matched(s) => s.n(),
            System::StrictFeedback(s) => s.n(),
        }
    }

    pub fn p(&self) -> usize {
        match self {
            System::Matched(s) => s.p(),
            System::StrictFeedback(s) => s.p(),
        }
    }

    pub fn dynamics(&self) -> AffineDynamics {
        match self {
            System::Matched(s) => s.dynamics(),
            System::StrictFeedback(s) => s.dynamics(),
        }
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        match self {
            System::Matched(s) => &s.constants,
            System::StrictFeedback(s) => &s.constants,
        }
    }
}

/// State-space sample set for validation.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleGrid {
    /// Tensor grid on `[-half_width, half_width]ⁿ` plus seeded uniform random
    /// points in the same box. The per-axis count is reduced in high
    /// dimension so that the tensor grid stays below 200 000 points.
    Box { per_axis: usize, half_width: f64, random: usize, seed: u64 },
    Points(Vec<Vec<f64>>),
}

impl Default for SampleGrid {
    fn default() -> Self {
        SampleGrid::Box { per_axis: 41, half_width: 3.0, random: 1000, seed: 0 }
    }
}

const MAX_TENSOR_POINTS: f64 = 200_000.0;

impl SampleGrid {
    pub fn points(&self, n: usize) -> Vec<Vec<f64>> {
        match self {
            SampleGrid::Points(pts) => pts.clone(),
            SampleGrid::Box { per_axis, half_width, random, seed } => {
                let cap = MAX_TENSOR_POINTS.powf(1.0 / n.max(1) as f64).floor() as usize;
                let m = (*per_axis).min(cap).max(2);
                let mut out = Vec::new();
                let mut idx = vec![0usize; n];
                let coord = |k: usize| -half_width + 2.0 * half_width * k as f64 / (m - 1) as f64;
                loop {
                    out.push(idx.iter().map(|&k| coord(k)).collect());
                    let mut d = 0;
                    while d < n {
                        idx[d] += 1;
                        if idx[d] < m {
                            break;
                        }
                        idx[d] = 0;
                        d += 1;
                    }
                    if d == n {
                        break;
                    }
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                for _ in 0..*random {
                    out.push((0..n).map(|_| rng.random_range(-*half_width..=*half_width)).collect());
                }
                out
            }
        }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub invariant: String,
    pub message: String,
    pub witness: Option<Vec<f64>>,
}

/// Outcome of a sampled validation: the list of violations and the worst
/// margin of each sampled inequality (non-negative means satisfied).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub worst_margins: BTreeMap<String, (f64, Vec<f64>)>,
    pub points_checked: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn violate(&mut self, invariant: &str, message: String, witness: Option<Vec<f64>>) {
        self.violations.push(Violation { invariant: invariant.to_string(), message, witness });
    }

    pub fn render(&self) -> String {
        let mut s = format!("points checked: {}\n", self.points_checked);
        for (name, (m, at)) in &self.worst_margins {
            s.push_str(&format!("worst margin {name}: {m:e} at {at:?}\n"));
        }
        if self.violations.is_empty() {
            s.push_str("valid\n");
        }
        for v in &self.violations {
            s.push_str(&format!("violation [{}]: {}", v.invariant, v.message));
            if let Some(w) = &v.witness {
                s.push_str(&format!(" at {w:?}"));
            }
            s.push('\n');
        }
        s
    }
}

fn is_origin(x: &[f64]) -> bool {
    x.iter().all(|v| *v == 0.0)
}

/// Tolerance for sampled inequalities, relative to the size of both sides.
fn slack(a: f64, b: f64) -> f64 {
    1e-9 * a.abs().max(b.abs()) + 1e-12
}

fn origin_value(e: &Expr, n: usize, constants: &BTreeMap<String, f64>) -> Result<f64, TapeError> {
    Tape::compile(std::slice::from_ref(e), constants)?
        .eval(&vec![0.0; n], &[])
        .map(|v| v[0])
}

/// Checks triangularity, vanishing at the origin and nonvanishing input gains.
pub fn validate_strict_feedback(sys: &StrictFeedbackSystem, grid: &SampleGrid) -> ValidationReport {
    let n = sys.n();
    let mut rep = ValidationReport::default();
    for i in 0..n {
        let mut named = vec![(format!("f[{}]", i + 1), &sys.f[i]), (format!("g[{}]", i + 1), &sys.g[i])];
        for (j, e) in sys.phi[i].iter().enumerate() {
            named.push((format!("phi[{}][{}]", i + 1, j + 1), e));
        }
        for (name, e) in &named {
            if let Some(m) = e.max_state_index() {
                if m > i {
                    rep.violate("triangularity", format!("{name} depends on x{}", m + 1), None);
                }
            }
        }
        for (name, e) in named.iter().filter(|(name, _)| !name.starts_with('g')) {
            match origin_value(e, n, &sys.constants) {
                Ok(v) if v == 0.0 => {}
                Ok(v) => rep.violate("origin", format!("{name}(0)={v}≠0"), Some(vec![0.0; n])),
                Err(err) => rep.violate("origin", format!("{name} cannot be evaluated at 0: {err}"), None),
            }
        }
    }
    let tape = match Tape::compile(&sys.g, &sys.constants) {
        Ok(t) => t,
        Err(err) => {
            rep.violate("input-gain", format!("g cannot be compiled: {err}"), None);
            return rep;
        }
    };
    let pts = grid.points(n);
    let mut worst = (f64::INFINITY, Vec::new());
    for x in &pts {
        match tape.eval(x, &[]) {
            Ok(vals) => {
                for (i, v) in vals.iter().enumerate() {
                    let m = v.abs() - MIN_INPUT_GAIN;
                    if m < worst.0 {
                        worst = (m, x.clone());
                    }
                    if m < 0.0 && rep.violations.iter().all(|v| v.invariant != "input-gain") {
                        rep.violate("input-gain", format!("|g[{}]| = {:e} < {MIN_INPUT_GAIN:e}", i + 1, v.abs()), Some(x.clone()));
                    }
                }
            }
            Err(err) => rep.violate("input-gain", format!("g not evaluable: {err}"), Some(x.clone())),
        }
    }
    rep.points_checked = pts.len();
    rep.worst_margins.insert("input-gain".into(), worst);
    rep
}

/// Samples the matched-class assumptions: `f(0)=0`, `φ(0)=0`, `P(0)=Q(0)=0`,
/// `P, Q > 0` away from the origin, `∇P·(f + g k0) ≤ −Q`, `|φ|² ≤ μQ` and
/// `μ > 0`.
pub fn validate_matched(sys: &MatchedSystem, grid: &SampleGrid) -> ValidationReport {
    let n = sys.n();
    let mut rep = ValidationReport::default();
    let mut at_origin: Vec<(String, &Expr)> = Vec::new();
    for (i, e) in sys.f.iter().enumerate() {
        at_origin.push((format!("f[{}]", i + 1), e));
    }
    for (j, e) in sys.phi.iter().enumerate() {
        at_origin.push((format!("phi[{}]", j + 1), e));
    }
    at_origin.push(("P".into(), &sys.p_clf));
    at_origin.push(("Q".into(), &sys.q_rate));
    for (name, e) in &at_origin {
        match origin_value(e, n, &sys.constants) {
            Ok(v) if v == 0.0 => {}
            Ok(v) => rep.violate("origin", format!("{name}(0)={v}≠0"), Some(vec![0.0; n])),
            Err(err) => rep.violate("origin", format!("{name} cannot be evaluated at 0: {err}"), None),
        }
    }

    let grad_p: Vec<Expr> = (0..n).map(|i| sys.p_clf.partial(&Symbol::State(i))).collect();
    let closed: Vec<Expr> = sys.f.iter().zip(&sys.g).map(|(f, g)| f + g * &sys.k0).collect();
    let lf_p = Expr::sum(grad_p.iter().zip(&closed).map(|(a, b)| a * b));
    let phi_sq = Expr::sum(sys.phi.iter().map(|e| e.square()));
    let exprs = [
        sys.p_clf.clone(),
        sys.q_rate.clone(),
        lf_p,
        phi_sq,
        sys.mu.clone(),
    ];
    let tape = match Tape::compile(&exprs, &sys.constants) {
        Ok(t) => t,
        Err(err) => {
            rep.violate("evaluation", format!("model cannot be compiled: {err}"), None);
            return rep;
        }
    };
    let pts = grid.points(n);
    let names = ["P-positive", "Q-positive", "decrease", "regressor-growth", "mu-positive"];
    let mut worst: Vec<(f64, Vec<f64>)> = vec![(f64::INFINITY, Vec::new()); names.len()];
    let mut failed = [false; 5];
    for x in &pts {
        let v = match tape.eval(x, &[]) {
            Ok(v) => v,
            Err(err) => {
                rep.violate("evaluation", format!("{err}"), Some(x.clone()));
                continue;
            }
        };
        let (p, q, lf, phi2, mu) = (v[0], v[1], v[2], v[3], v[4]);
        let mut margins = [f64::INFINITY; 5];
        if !is_origin(x) {
            margins[0] = p;
            margins[1] = q;
        }
        margins[2] = -q - lf + slack(q, lf);
        margins[3] = mu * q - phi2 + slack(mu * q, phi2);
        margins[4] = mu - f64::MIN_POSITIVE;
        for k in 0..names.len() {
            if margins[k] < worst[k].0 {
                worst[k] = (margins[k], x.clone());
            }
            let bad = if k < 2 { margins[k] <= 0.0 } else { margins[k] < 0.0 };
            if bad && !failed[k] {
                failed[k] = true;
            }
        }
    }
    let messages = [
        "P is not positive away from the origin",
        "Q is not positive away from the origin",
        "nominal feedback does not achieve dP/dt <= -Q",
        "|phi|^2 exceeds mu*Q",
        "mu is not positive",
    ];
    for k in 0..names.len() {
        if failed[k] {
            let (m, at) = &worst[k];
            rep.violate(names[k], format!("{} (worst margin {m:e})", messages[k]), Some(at.clone()));
        }
        rep.worst_margins.insert(names[k].to_string(), worst[k].clone());
    }
    rep.points_checked = pts.len();
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(i: usize) -> Expr {
        Expr::state(i)
    }

    fn scalar_demo(q: Expr) -> MatchedSystem {
        MatchedSystem::new(
            vec![-x(0)],
            vec![Expr::one()],
            vec![x(0)],
            0.5 * x(0).square(),
            q,
            Expr::zero(),
            Expr::one(),
        )
        .unwrap()
    }

    #[test]
    fn scalar_matched_demo_is_valid() {
        let rep = validate_matched(&scalar_demo(x(0).square()), &SampleGrid::default());
        assert!(rep.is_valid(), "{}", rep.render());
        assert!(rep.worst_margins["decrease"].0 >= 0.0);
    }

    #[test]
    fn too_fast_decay_rate_is_reported() {
        let rep = validate_matched(&scalar_demo(2.0 * x(0).square()), &SampleGrid::default());
        let v = rep.violations.iter().find(|v| v.invariant == "decrease").unwrap();
        assert!(v.witness.is_some());
        assert!(rep.worst_margins["decrease"].0 < -1.0);
    }

    #[test]
    fn zero_mu_is_rejected() {
        let err = MatchedSystem::new(
            vec![-x(0)],
            vec![Expr::one()],
            vec![x(0)],
            0.5 * x(0).square(),
            x(0).square(),
            Expr::zero(),
            Expr::zero(),
        )
        .unwrap_err();
        assert_eq!(err, ModelError::NonPositiveMu(0.0));
    }

    #[test]
    fn strict_feedback_violations() {
        let sys = StrictFeedbackSystem::new(
            vec![x(1), Expr::zero()],
            vec![Expr::one(), Expr::one()],
            vec![vec![x(0) + 1.0], vec![Expr::zero()]],
        )
        .unwrap();
        let rep = validate_strict_feedback(&sys, &SampleGrid::default());
        let msgs: Vec<&str> = rep.violations.iter().map(|v| v.message.as_str()).collect();
        assert!(msgs.contains(&"f[1] depends on x2"), "{msgs:?}");
        assert!(msgs.contains(&"phi[1][1](0)=1≠0"), "{msgs:?}");
    }

    #[test]
    fn vanishing_gain_is_reported() {
        let sys = StrictFeedbackSystem::new(vec![Expr::zero()], vec![x(0)], vec![vec![x(0)]]).unwrap();
        let rep = validate_strict_feedback(&sys, &SampleGrid::default());
        assert!(rep.violations.iter().any(|v| v.invariant == "input-gain"));
    }

    #[test]
    fn constants_are_range_checked() {
        assert!(DesignConstants::new(-1.0, 1.0, 1.0, 1.0, vec![1.0]).is_err());
        assert!(DesignConstants::new(0.0, 1.0, 0.0, 1.0, vec![1.0]).is_err());
        assert!(DesignConstants::new(0.0, 1.0, 1.0, 1.0, vec![0.0]).is_err());
        let c = DesignConstants::unit(2, 2.0);
        assert!(c.clone().with_matched(1.0, 1.0).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert_eq!(c.clone().with_gamma_matrix(bad), Err(ModelError::NotPositiveDefinite));
        let good = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(c.with_gamma_matrix(good).is_ok());
    }

    #[test]
    fn estimates_are_not_allowed_in_plants() {
        let err = StrictFeedbackSystem::new(vec![Expr::estimate(0)], vec![Expr::one()], vec![vec![x(0)]]);
        assert!(matches!(err, Err(ModelError::DependsOnEstimate { .. })));
    }

    #[test]
    fn grid_is_deterministic_and_sized() {
        let g = SampleGrid::default();
        let a = g.points(2);
        assert_eq!(a.len(), 41 * 41 + 1000);
        assert_eq!(a, g.points(2));
        assert!(a.iter().any(|p| is_origin(p)));
    }
}
