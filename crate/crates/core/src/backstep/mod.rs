//! Recursive adaptive backstepping with estimate-dependent nonlinear damping.
//!
//! Stage `s` covers the subsystem `x1..xs` with `x_{s+1}` as its input and
//! produces a virtual control `k(x1..xs, θ̂)`, an update law `w`, and
//! coordinates `T(x1..xs, θ̂)` in which
//!
//! ```text
//! d/dt V     ≤ −α|T|²                    V = ½|T|² + Σⱼ (θ̂ⱼ−θⱼ)²/(2γⱼ)
//! d/dt ½|T|² ≤ −ω_s|T|² + ε_s(|θ|²−r)⁺
//! ```
//!
//! hold whenever `x_{s+1} = k`. Adding a stage appends `e = x_{s+1} − k` to
//! `T`, extends the update law by `γⱼ e hⱼ` with
//! `hⱼ = φ_{s+1,j} − Σ_l ∂k/∂x_l φ_{l,j}`, and picks the next control so the
//! cross terms cancel exactly, leaving `−M e²` plus the estimation coupling
//! `−e Σⱼ hⱼ(θ̂ⱼ−θⱼ)`. The gain `M` dominates that coupling with the growth
//! bounds `|hⱼ| ≤ ρⱼ|T̃|`, which costs `ω/2` of the decay rate of the earlier
//! coordinates and doubles the residual coefficient. The base stage therefore
//! starts from `ω₁ = ω(1 + (n−1)/2)` and `ε₁ = 2⁻ⁿε`, so the full chain ends
//! with rate `ω` and residual `ε/2`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::expr::{ray_quadrature_rho, ray_quadrature_rho_unsimplified, simplify, Expr, Point, RayRho, RhoError, Symbol, Tape, DEFAULT_QUAD_ORDER};
use crate::matched::{AdaptiveController, IosCertificate, LyapunovCertificate};
use crate::model::{DesignConstants, StrictFeedbackSystem, TrueParameters};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("stage {stage}: growth bound for regressor {regressor}: {source}")]
    RhoPreconditionFailed { stage: usize, regressor: usize, source: RhoError },
    #[error("stage index {got} does not follow a stage of dimension {prev}")]
    StageOrder { prev: usize, got: usize },
    #[error("design constants carry {got} adaptation gains, the system has {expected} parameters")]
    GainCount { expected: usize, got: usize },
    #[error("g[{0}] is identically zero")]
    ZeroInputGain(usize),
}

/// Tuning knobs of the synthesis.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Gauss-Legendre order of the growth-bound quadrature.
    pub quad_order: usize,
    /// Expressions whose shared node count exceeds this are not expanded by
    /// the simplifier; they stay in factored form and rely on the tape's
    /// subexpression sharing.
    pub node_cap: usize,
    /// When false every intermediate expression is kept exactly as the
    /// recursion builds it.
    pub simplify: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { quad_order: DEFAULT_QUAD_ORDER, node_cap: 20_000, simplify: true }
    }
}

/// One level of the recursion.
#[derive(Debug, Clone)]
pub struct Stage {
    pub dim: usize,
    /// Coordinates `T(x1..x_dim, θ̂)`.
    pub t: Vec<Expr>,
    /// Inverse map, written with `x1..x_dim` standing for `z1..z_dim`.
    pub t_inv: Vec<Expr>,
    /// Control for `x_{dim+1}` (the plant input when `dim = n`).
    pub k: Expr,
    pub w: Vec<Expr>,
    /// Damping gain of this stage (`M̃` at the base).
    pub m_gain: Expr,
    /// Growth bounds of the regressor differences, in original coordinates.
    pub rho: Vec<RayRho>,
    pub omega: f64,
    pub epsilon: f64,
}

/// Audit record of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub dim: usize,
    pub omega: f64,
    pub epsilon: f64,
    pub k_tree_raw: u64,
    pub k_tree: u64,
    pub k_dag_raw: usize,
    pub k_dag: usize,
    pub m_dag: usize,
    pub w_dag: usize,
    pub simplified: bool,
    /// `(x, θ̂, [ρⱼ(x, θ̂)])` at fixed probe points.
    pub rho_probes: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthesisTrace {
    pub stages: Vec<StageRecord>,
}

impl SynthesisTrace {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.stages {
            let _ = writeln!(s, "stage {} {{", r.dim);
            let _ = writeln!(s, "  omega = {:?}", r.omega);
            let _ = writeln!(s, "  epsilon = {:?}", r.epsilon);
            let _ = writeln!(s, "  k_tree_raw = {}", r.k_tree_raw);
            let _ = writeln!(s, "  k_tree = {}", r.k_tree);
            let _ = writeln!(s, "  k_dag_raw = {}", r.k_dag_raw);
            let _ = writeln!(s, "  k_dag = {}", r.k_dag);
            let _ = writeln!(s, "  M_dag = {}", r.m_dag);
            let _ = writeln!(s, "  w_dag = {}", r.w_dag);
            let _ = writeln!(s, "  simplified = {}", r.simplified);
            for (i, (x, th, rho)) in r.rho_probes.iter().enumerate() {
                let _ = writeln!(s, "  probe[{}] = x {:?} th {:?} rho {:?}", i + 1, x, th, rho);
            }
            let _ = writeln!(s, "}}");
        }
        s
    }
}

fn x(i: usize) -> Expr {
    Expr::state(i)
}

fn th(j: usize) -> Expr {
    Expr::estimate(j)
}

fn theta_hat_sq(p: usize) -> Expr {
    Expr::sum((0..p).map(|j| th(j).square()))
}

/// `Σⱼ (√r + ½ + ½θ̂ⱼ²) ρⱼ`.
fn estimate_weighted_rho(rho: &[RayRho], r: f64) -> Expr {
    Expr::sum(
        rho.iter()
            .enumerate()
            .map(|(j, rj)| (r.sqrt() + 0.5 + 0.5 * th(j).square()) * rj.expr()),
    )
}

/// The simplified form when it is smaller, otherwise `e` itself.
fn tidy(e: &Expr, opts: &SynthesisOptions) -> (Expr, bool) {
    if !opts.simplify {
        return (e.clone(), false);
    }
    let raw = e.dag_size();
    if raw > opts.node_cap {
        return (e.clone(), false);
    }
    let s = simplify(e);
    if s.dag_size() <= raw {
        (s, true)
    } else {
        (e.clone(), false)
    }
}

/// Rates at stage `s` of an `n`-stage chain.
fn stage_rates(consts: &DesignConstants, n: usize, s: usize) -> (f64, f64) {
    let omega = consts.omega * (1.0 + (n - s) as f64 / 2.0);
    let epsilon = consts.epsilon * 2f64.powi(s as i32 - 1 - n as i32);
    (omega, epsilon)
}

fn check_gains(sys: &StrictFeedbackSystem, consts: &DesignConstants) -> Result<(), SynthesisError> {
    if consts.gamma.len() != sys.p() {
        return Err(SynthesisError::GainCount { expected: sys.p(), got: consts.gamma.len() });
    }
    for (i, g) in sys.g.iter().enumerate() {
        if simplify(g).is_zero() {
            return Err(SynthesisError::ZeroInputGain(i + 1));
        }
    }
    Ok(())
}

fn growth_bound(
    h: &Expr,
    dim: usize,
    stage: usize,
    regressor: usize,
    opts: &SynthesisOptions,
) -> Result<RayRho, SynthesisError> {
    let build = if opts.simplify { ray_quadrature_rho } else { ray_quadrature_rho_unsimplified };
    build(h, dim, opts.quad_order).map_err(|source| SynthesisError::RhoPreconditionFailed {
        stage,
        regressor: regressor + 1,
        source,
    })
}

fn probes(dim: usize, p: usize, rho: &[RayRho]) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let pts = [
        (vec![0.5; dim], vec![0.0; p]),
        (vec![1.0; dim], vec![1.0; p]),
        (
            (0..dim).map(|i| if i % 2 == 0 { -2.0 } else { 1.5 }).collect::<Vec<_>>(),
            vec![-1.0; p],
        ),
    ];
    pts.into_iter()
        .map(|(xv, tv)| {
            let pt = Point::new(&xv, &tv);
            let vals = rho.iter().map(|r| r.eval(&pt).unwrap_or(f64::NAN)).collect();
            (xv, tv, vals)
        })
        .collect()
}

/// The first stage: `T = x1`,
/// `k = −(f1 + Σⱼ φ1ⱼθ̂ⱼ + M̃x1)/g1`, `wⱼ = γⱼ x1 φ1ⱼ`, with
/// `M̃ = α + ω₁ + Σφ1ⱼ²/(4ε₁) + Σⱼ(√r + ½ + ½θ̂ⱼ²)ρⱼ`.
pub fn synthesize_base(
    sys: &StrictFeedbackSystem,
    consts: &DesignConstants,
    opts: &SynthesisOptions,
) -> Result<(Stage, StageRecord), SynthesisError> {
    check_gains(sys, consts)?;
    let n = sys.n();
    let p = sys.p();
    let (omega, epsilon) = stage_rates(consts, n, 1);
    let phi = &sys.phi[0];
    let rho = phi
        .iter()
        .enumerate()
        .map(|(j, h)| growth_bound(h, 1, 1, j, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let phi_sq = Expr::sum(phi.iter().map(|e| e.square()));
    let m_gain = consts.alpha + omega + phi_sq / (4.0 * epsilon) + estimate_weighted_rho(&rho, consts.r);
    let phi_th = Expr::sum(phi.iter().enumerate().map(|(j, e)| e * th(j)));
    let raw_k = -((&sys.f[0] + phi_th + &m_gain * x(0)) / &sys.g[0]);
    let (k, simplified) = tidy(&raw_k, opts);
    let w: Vec<Expr> = phi
        .iter()
        .enumerate()
        .map(|(j, e)| tidy(&(consts.gamma[j] * x(0) * e), opts).0)
        .collect();
    let record = StageRecord {
        dim: 1,
        omega,
        epsilon,
        k_tree_raw: raw_k.tree_size(),
        k_tree: k.tree_size(),
        k_dag_raw: raw_k.dag_size(),
        k_dag: k.dag_size(),
        m_dag: m_gain.dag_size(),
        w_dag: w.iter().map(Expr::dag_size).sum(),
        simplified,
        rho_probes: probes(1, p, &rho),
    };
    let stage = Stage {
        dim: 1,
        t: vec![x(0)],
        t_inv: vec![x(0)],
        k,
        w,
        m_gain,
        rho,
        omega,
        epsilon,
    };
    Ok((stage, record))
}

/// Adds the state `x_{stage_index}` to the chain.
pub fn backstep_stage(
    prev: &Stage,
    sys: &StrictFeedbackSystem,
    stage_index: usize,
    consts: &DesignConstants,
    opts: &SynthesisOptions,
) -> Result<(Stage, StageRecord), SynthesisError> {
    if stage_index != prev.dim + 1 || stage_index > sys.n() {
        return Err(SynthesisError::StageOrder { prev: prev.dim, got: stage_index });
    }
    check_gains(sys, consts)?;
    let n = sys.n();
    let p = sys.p();
    let s = prev.dim; // zero-based index of the new state y
    let (omega_new, epsilon_new) = stage_rates(consts, n, stage_index);
    let y = x(s);
    let k = &prev.k;
    let e = &y - k;
    let dk_dx: Vec<Expr> = (0..s).map(|l| tidy(&k.partial(&Symbol::State(l)), opts).0).collect();
    let dk_dth: Vec<Expr> = (0..p).map(|j| tidy(&k.partial(&Symbol::Estimate(j)), opts).0).collect();

    // regressor differences hⱼ = φ_{s+1,j} − Σ_l ∂k/∂x_l φ_{l,j}
    let h: Vec<Expr> = (0..p)
        .map(|j| {
            let mut terms = vec![sys.phi[s][j].clone()];
            terms.extend((0..s).map(|l| -(&dk_dx[l] * &sys.phi[l][j])));
            tidy(&Expr::sum(terms), opts).0
        })
        .collect();
    let w_new: Vec<Expr> = (0..p)
        .map(|j| &prev.w[j] + consts.gamma[j] * &e * &h[j])
        .collect();

    // stacked coordinates and their inverse
    let mut t_new = prev.t.clone();
    t_new.push(e.clone());
    let mut t_inv_new = prev.t_inv.clone();
    t_inv_new.push(x(s) + k.substitute_states(&prev.t_inv));

    // growth bounds |hⱼ| ≤ ρⱼ|T̃|: bound hⱼ∘T̃⁻¹ in z, then pull back
    let mut rho = Vec::with_capacity(p);
    for (j, hj) in h.iter().enumerate() {
        let in_z = tidy(&hj.substitute_states(&t_inv_new), opts).0;
        let rz = growth_bound(&in_z, s + 1, stage_index, j, opts)?;
        rho.push(rz.pulled_back(&t_new));
    }
    let rho_sum = Expr::sum(rho.iter().map(|r| r.expr().clone()));
    let h_sq = Expr::sum(h.iter().map(|e| e.square()));
    let m_gain = consts.alpha
        + omega_new
        + (theta_hat_sq(p) + consts.r) / consts.omega * rho_sum.square()
        + estimate_weighted_rho(&rho, consts.r)
        + h_sq / (4.0 * prev.epsilon);

    // T'∂T/∂θ̂ⱼ and T'∂T/∂x_s of the previous coordinates
    let t_dot = |sym: &Symbol| Expr::sum(prev.t.iter().map(|tc| tc * tc.partial(sym)));
    let mut terms = vec![-&sys.f[s]];
    terms.extend((0..p).map(|j| -(&sys.phi[s][j] * th(j))));
    for l in 0..s {
        let mut flow = vec![&sys.f[l] + &sys.g[l] * x(l + 1)];
        flow.extend((0..p).map(|j| &sys.phi[l][j] * th(j)));
        terms.push(&dk_dx[l] * Expr::sum(flow));
    }
    for j in 0..p {
        terms.push(&dk_dth[j] * &w_new[j]);
        terms.push(-(t_dot(&Symbol::Estimate(j)) * consts.gamma[j] * &h[j]));
    }
    terms.push(-(&sys.g[s - 1] * t_dot(&Symbol::State(s - 1))));
    terms.push(-(&m_gain * &e));
    let raw_k = Expr::sum(terms) / &sys.g[s];
    let (k_new, simplified) = tidy(&raw_k, opts);
    let w_new: Vec<Expr> = w_new.iter().map(|wj| tidy(wj, opts).0).collect();
    let record = StageRecord {
        dim: stage_index,
        omega: omega_new,
        epsilon: epsilon_new,
        k_tree_raw: raw_k.tree_size(),
        k_tree: k_new.tree_size(),
        k_dag_raw: raw_k.dag_size(),
        k_dag: k_new.dag_size(),
        m_dag: m_gain.dag_size(),
        w_dag: w_new.iter().map(Expr::dag_size).sum(),
        simplified,
        rho_probes: probes(stage_index, p, &rho),
    };
    let stage = Stage {
        dim: stage_index,
        t: t_new,
        t_inv: t_inv_new,
        k: k_new,
        w: w_new,
        m_gain,
        rho,
        omega: omega_new,
        epsilon: epsilon_new,
    };
    Ok((stage, record))
}

/// Full synthesis: the base stage followed by `n − 1` backstepping stages.
///
/// The controller carries `V = ½|T|² + Σ(θ̂ⱼ−θⱼ)²/(2γⱼ)` with bound `−α|T|²`,
/// the output `T` with rate `ω` and residual coefficient `ε/2`, and the
/// diagnostics `V`, `U = ½|T|²` and `T1..Tn`.
pub fn synthesize(
    sys: &StrictFeedbackSystem,
    consts: &DesignConstants,
    opts: &SynthesisOptions,
) -> Result<(AdaptiveController, SynthesisTrace, Stage), SynthesisError> {
    let (mut stage, rec) = synthesize_base(sys, consts, opts)?;
    let mut trace = SynthesisTrace { stages: vec![rec] };
    for i in 2..=sys.n() {
        let (next, rec) = backstep_stage(&stage, sys, i, consts, opts)?;
        trace.stages.push(rec);
        stage = next;
    }
    let p = sys.p();
    let theta = TrueParameters::symbols(p);
    let t_sq = Expr::sum(stage.t.iter().map(|t| t.square()));
    let u_fn = 0.5 * &t_sq;
    let v = Expr::sum(
        std::iter::once(u_fn.clone())
            .chain((0..p).map(|j| (th(j) - &theta[j]).square() / (2.0 * consts.gamma[j]))),
    );
    let mut diagnostics = BTreeMap::new();
    diagnostics.insert("V".to_string(), v.clone());
    diagnostics.insert("U".to_string(), u_fn);
    for (i, t) in stage.t.iter().enumerate() {
        diagnostics.insert(format!("T{}", i + 1), t.clone());
    }
    let ctrl = AdaptiveController {
        name: "backstep".into(),
        n: sys.n(),
        p,
        u: stage.k.clone(),
        w: stage.w.clone(),
        diagnostics,
        lyapunov: Some(LyapunovCertificate { function: v, bound: -consts.alpha * t_sq }),
        ios: Some(IosCertificate {
            output: stage.t.clone(),
            omega: stage.omega,
            epsilon: stage.epsilon,
            r: consts.r,
        }),
        constants: sys.constants.clone(),
    };
    Ok((ctrl, trace, stage))
}

impl Stage {
    /// Largest `|T⁻¹(T(x)) − x|` over the points.
    pub fn inverse_error(&self, points: &[(Vec<f64>, Vec<f64>)], constants: &BTreeMap<String, f64>) -> f64 {
        let fwd = Tape::compile(&self.t, constants).expect("coordinates compile");
        let inv = Tape::compile(&self.t_inv, constants).expect("inverse compiles");
        let mut worst: f64 = 0.0;
        for (xv, tv) in points {
            let Ok(z) = fwd.eval(xv, tv) else { return f64::INFINITY };
            match inv.eval(&z, tv) {
                Ok(back) => {
                    for (a, b) in back.iter().zip(xv) {
                        worst = worst.max((a - b).abs());
                    }
                }
                Err(_) => return f64::INFINITY,
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_strict_feedback, SampleGrid};

    fn moore_greitzer() -> StrictFeedbackSystem {
        StrictFeedbackSystem::new(
            vec![Expr::zero(), Expr::zero()],
            vec![Expr::one(), Expr::one()],
            vec![vec![x(0).square(), x(0).powi(3)], vec![Expr::zero(), Expr::zero()]],
        )
        .unwrap()
    }

    #[test]
    fn base_stage_structure() {
        let sys = moore_greitzer();
        assert!(validate_strict_feedback(&sys, &SampleGrid::default()).is_valid());
        let consts = DesignConstants::unit(2, 2.0);
        let (st, _) = synthesize_base(&sys, &consts, &SynthesisOptions::default()).unwrap();
        // w = (γ1 x1³, γ2 x1⁴)
        assert_eq!(st.w[0], simplify(&x(0).powi(3)));
        assert_eq!(st.w[1], simplify(&x(0).powi(4)));
        // k + th1 x1² + th2 x1³ + M̃ x1 = 0
        let resid = &st.k + th(0) * x(0).square() + th(1) * x(0).powi(3) + &st.m_gain * x(0);
        for &(a, b, c) in &[(0.3, 1.0, -2.0), (-1.7, 0.2, 0.4)] {
            let v = resid.eval(&Point::new(&[a], &[b, c])).unwrap();
            assert!(v.abs() < 1e-12, "{v}");
        }
        // base rates for n = 2: ω₁ = 1.5ω, ε₁ = ε/4
        assert_eq!((st.omega, st.epsilon), (1.5, 0.25));
        let m0 = st.m_gain.eval(&Point::new(&[0.0], &[0.0, 0.0])).unwrap();
        // α + ω₁ + Σ(√2 + ½)·1 at the origin
        assert!((m0 - (1.0 + 1.5 + 2.0 * (2f64.sqrt() + 0.5))).abs() < 1e-12);
    }

    #[test]
    fn full_synthesis_invariants() {
        let sys = moore_greitzer();
        let consts = DesignConstants::unit(2, 2.0);
        let (ctrl, trace, stage) = synthesize(&sys, &consts, &SynthesisOptions::default()).unwrap();
        assert_eq!(trace.stages.len(), 2);
        assert_eq!(stage.omega, 1.0);
        assert_eq!(stage.epsilon, 0.5);
        let ests: Vec<Vec<f64>> = (0..20).map(|k| vec![k as f64 * 0.3 - 3.0, 2.0 - k as f64 * 0.2]).collect();
        ctrl.check_equilibrium(&ests, 1e-12).unwrap();
        assert!(ctrl.true_parameter_leak().is_none());
        let pts: Vec<(Vec<f64>, Vec<f64>)> = (0..50)
            .map(|k| {
                let a = k as f64 * 0.13 - 3.0;
                (vec![a, 1.0 - 0.07 * k as f64], vec![0.5 * a, -1.0])
            })
            .collect();
        assert!(stage.inverse_error(&pts, &BTreeMap::new()) < 1e-9);
        // the last coordinate vanishes on the manifold y = k
        let t2 = &stage.t[1];
        let on_manifold = t2.substitute(&[(Symbol::State(1), trace_k1(&sys, &consts))].into_iter().collect());
        assert!(simplify(&on_manifold).is_zero());
    }

    fn trace_k1(sys: &StrictFeedbackSystem, consts: &DesignConstants) -> Expr {
        synthesize_base(sys, consts, &SynthesisOptions::default()).unwrap().0.k
    }

    #[test]
    fn single_stage_chain_is_the_base_stage() {
        let sys = StrictFeedbackSystem::new(vec![Expr::zero()], vec![Expr::one()], vec![vec![x(0)]]).unwrap();
        let consts = DesignConstants::unit(1, 1.0);
        let (ctrl, trace, _) = synthesize(&sys, &consts, &SynthesisOptions::default()).unwrap();
        let (base, _) = synthesize_base(&sys, &consts, &SynthesisOptions::default()).unwrap();
        assert_eq!(trace.stages.len(), 1);
        assert_eq!(ctrl.u, base.k);
        assert_eq!(ctrl.ios.unwrap().epsilon, 0.5);
    }

    #[test]
    fn nonvanishing_regressor_is_rejected() {
        let sys = StrictFeedbackSystem::new(vec![Expr::zero()], vec![Expr::one()], vec![vec![x(0) + 1.0]]).unwrap();
        let err = synthesize(&sys, &DesignConstants::unit(1, 1.0), &SynthesisOptions::default()).unwrap_err();
        assert!(matches!(err, SynthesisError::RhoPreconditionFailed { stage: 1, regressor: 1, .. }));
    }

    #[test]
    fn three_state_chain_synthesizes() {
        let sys = StrictFeedbackSystem::new(
            vec![Expr::zero(), Expr::zero(), Expr::zero()],
            vec![Expr::one(), Expr::one(), Expr::one()],
            vec![vec![x(0).square()], vec![x(0) * x(1)], vec![Expr::zero()]],
        )
        .unwrap();
        let (ctrl, trace, _) = synthesize(&sys, &DesignConstants::unit(1, 1.0), &SynthesisOptions::default()).unwrap();
        assert_eq!(trace.stages.len(), 3);
        ctrl.check_equilibrium(&[vec![0.7], vec![-2.0]], 1e-12).unwrap();
    }

    #[test]
    fn simplification_shrinks_two_state_control() {
        let sys = moore_greitzer();
        let consts = DesignConstants::unit(2, 2.0);
        let raw_opts = SynthesisOptions { simplify: false, ..Default::default() };
        let (raw, _, _) = synthesize(&sys, &consts, &raw_opts).unwrap();
        let (tidy, _, _) = synthesize(&sys, &consts, &SynthesisOptions::default()).unwrap();
        assert!(raw.u.dag_size() >= 2 * tidy.u.dag_size());
        for (xv, tv) in [([0.3, -0.2], [0.5, 1.0]), ([-1.1, 0.7], [-2.0, 0.3])] {
            let pt = Point::new(&xv, &tv);
            let a = raw.u.eval(&pt).unwrap();
            let b = tidy.u.eval(&pt).unwrap();
            assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn stage_order_is_enforced() {
        let sys = moore_greitzer();
        let consts = DesignConstants::unit(2, 2.0);
        let (st, _) = synthesize_base(&sys, &consts, &SynthesisOptions::default()).unwrap();
        assert!(matches!(
            backstep_stage(&st, &sys, 3, &consts, &SynthesisOptions::default()),
            Err(SynthesisError::StageOrder { .. })
        ));
    }
}
