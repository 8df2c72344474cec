//! Comparison functions `ρ` with `ρ(P(x)) ≤ Q(x)` and the residual level `α`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::expr::{Expr, Tape, TapeError};
use crate::model::{DesignConstants, SampleGrid, TrueParameters};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnvelopeError {
    #[error("sample grid has no points away from the origin")]
    EmptyGrid,
    #[error("lower envelope is not strictly increasing (Q vanishes or is flat at P = {at:e})")]
    EnvelopeDegenerate { at: f64 },
    #[error("P or Q is negative at a sample point ({p:e}, {q:e})")]
    NotPositive { p: f64, q: f64 },
    #[error("argument {argument:e} exceeds the sampled range of rho (max {max:e})")]
    ArgumentAboveRange { argument: f64, max: f64 },
    #[error(transparent)]
    Eval(#[from] TapeError),
}

/// A class-K∞ function of one variable, known numerically.
pub trait ComparisonFunction: Send + Sync {
    fn value(&self, s: f64) -> f64;

    /// Largest value for which [`ComparisonFunction::inverse`] is trusted.
    fn range_max(&self) -> f64;

    /// `ρ⁻¹(y)` by bisection to `1e-10` absolute.
    fn inverse(&self, y: f64) -> Result<f64, EnvelopeError> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        if y > self.range_max() {
            return Err(EnvelopeError::ArgumentAboveRange { argument: y, max: self.range_max() });
        }
        let mut hi = 1.0;
        while self.value(hi) < y {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// `ρ(s) = c·s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearComparison(pub f64);

impl ComparisonFunction for LinearComparison {
    fn value(&self, s: f64) -> f64 {
        self.0 * s.max(0.0)
    }

    fn range_max(&self) -> f64 {
        f64::INFINITY
    }
}

/// Piecewise-linear nondecreasing fit below the sampled pairs `(P, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhoEnvelope {
    /// Knots `(s, ρ(s))`, strictly increasing in both coordinates, starting
    /// at `(0, 0)`.
    pub knots: Vec<(f64, f64)>,
    /// `min (Q − ρ(P))` over the check grid.
    pub worst_margin: f64,
    /// Range of `P` on which the fit was checked.
    pub certified: (f64, f64),
}

impl ComparisonFunction for RhoEnvelope {
    fn value(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let k = &self.knots;
        let i = k.partition_point(|(a, _)| *a < s);
        let (a, b) = if i == 0 {
            (k[0], k[1])
        } else if i >= k.len() {
            (k[k.len() - 2], k[k.len() - 1])
        } else {
            (k[i - 1], k[i])
        };
        a.1 + (b.1 - a.1) * (s - a.0) / (b.0 - a.0)
    }

    fn range_max(&self) -> f64 {
        self.knots.last().map_or(0.0, |k| k.1)
    }
}

fn sample_pairs(
    p: &Expr,
    q: &Expr,
    pts: &[Vec<f64>],
    constants: &BTreeMap<String, f64>,
) -> Result<Vec<(f64, f64)>, EnvelopeError> {
    let tape = Tape::compile(&[p.clone(), q.clone()], constants)?;
    let mut out = Vec::with_capacity(pts.len());
    for x in pts {
        if x.iter().all(|v| *v == 0.0) {
            continue;
        }
        let v = tape.eval(x, &[])?;
        if v[0] < 0.0 || v[1] < 0.0 {
            return Err(EnvelopeError::NotPositive { p: v[0], q: v[1] });
        }
        out.push((v[0], v[1]));
    }
    Ok(out)
}

/// Fits `ρ` from the lower envelope `m(s) = min{Q(x): P(x) ≥ s}` of the grid
/// samples, then measures `Q − ρ(P)` on a denser grid over the sampled range
/// of `P`.
///
/// With `b₁ < b₂ < …` the levels where `m` jumps to `c₁ < c₂ < …`, the first
/// candidate interpolates the corners `(0,0), (b₁,c₁), (b₂,c₂), …`. If that
/// overshoots `Q` between samples (convex envelopes do), the knots are
/// lagged to `(0,0), (b₂,c₁), (b₃,c₂), …`, which reach each value one level
/// late and so stay below `Q`.
pub fn fit_rho_envelope(
    p: &Expr,
    q: &Expr,
    n: usize,
    grid: &SampleGrid,
    constants: &BTreeMap<String, f64>,
) -> Result<RhoEnvelope, EnvelopeError> {
    let mut pairs = sample_pairs(p, q, &grid.points(n), constants)?;
    if pairs.is_empty() {
        return Err(EnvelopeError::EmptyGrid);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // suffix minima of Q, then the right end of every flat stretch
    let mut suffix = vec![0.0; pairs.len()];
    let mut m = f64::INFINITY;
    for i in (0..pairs.len()).rev() {
        m = m.min(pairs[i].1);
        suffix[i] = m;
    }
    let mut corners: Vec<(f64, f64)> = Vec::new();
    for i in 0..pairs.len() {
        let last_of_level = i + 1 == pairs.len() || suffix[i + 1] > suffix[i];
        if last_of_level {
            corners.push((pairs[i].0, suffix[i]));
        }
    }
    if corners[0].1 <= 0.0 || corners[0].0 <= 0.0 {
        return Err(EnvelopeError::EnvelopeDegenerate { at: corners[0].0 });
    }
    let certified = (corners[0].0, corners[corners.len() - 1].0);
    let check = match grid {
        SampleGrid::Box { per_axis, half_width, random, seed } => SampleGrid::Box {
            per_axis: 2 * per_axis - 1,
            half_width: *half_width,
            random: 2 * random,
            seed: seed.wrapping_add(1),
        },
        SampleGrid::Points(pts) => SampleGrid::Points(pts.clone()),
    };
    let check_pairs: Vec<(f64, f64)> = sample_pairs(p, q, &check.points(n), constants)?
        .into_iter()
        .filter(|(pv, _)| *pv >= certified.0 && *pv <= certified.1)
        .collect();
    let margin = |env: &RhoEnvelope| {
        check_pairs
            .iter()
            .map(|(pv, qv)| qv - env.value(*pv))
            .fold(f64::INFINITY, f64::min)
    };

    let mut exact = vec![(0.0, 0.0)];
    exact.extend(corners.iter().copied());
    if exact.len() == 2 {
        exact.push((2.0 * exact[1].0, 2.0 * exact[1].1));
    }
    let mut env = RhoEnvelope { knots: exact, worst_margin: f64::INFINITY, certified };
    env.worst_margin = margin(&env);
    if env.worst_margin < -1e-9 && corners.len() > 1 {
        let mut lagged = vec![(0.0, 0.0)];
        lagged.extend(corners.windows(2).map(|w| (w[1].0, w[0].1)));
        if lagged.len() == 2 {
            lagged.push((2.0 * lagged[1].0, 2.0 * lagged[1].1));
        }
        env.knots = lagged;
        env.worst_margin = margin(&env);
    }
    Ok(env)
}

/// The residual level `α = ρ⁻¹((1−λ)⁻¹δ⁻¹(|θ|²−r)⁺)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRadius {
    pub alpha: f64,
    pub argument: f64,
    pub lambda: f64,
    pub delta: f64,
    pub r: f64,
    pub theta_norm_sq: f64,
}

pub fn residual_radius(
    theta: &TrueParameters,
    consts: &DesignConstants,
    rho: &dyn ComparisonFunction,
) -> Result<ResidualRadius, EnvelopeError> {
    let excess = theta.excess(consts.r);
    let argument = excess / ((1.0 - consts.lambda) * consts.delta);
    let alpha = if excess == 0.0 { 0.0 } else { rho.inverse(argument)? };
    Ok(ResidualRadius {
        alpha,
        argument,
        lambda: consts.lambda,
        delta: consts.delta,
        r: consts.r,
        theta_norm_sq: theta.norm_sq(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x() -> Expr {
        Expr::state(0)
    }

    fn grid() -> SampleGrid {
        SampleGrid::Box { per_axis: 41, half_width: 3.0, random: 0, seed: 0 }
    }

    #[test]
    fn quadratic_pair_gives_linear_rho() {
        let env = fit_rho_envelope(&(0.5 * x().square()), &x().square(), 1, &grid(), &BTreeMap::new()).unwrap();
        assert!(env.worst_margin >= -1e-9);
        // within one grid level of the exact 2s
        for s in [0.1, 0.5, 1.0, 2.0, 4.0] {
            let v = env.value(s);
            assert!(v <= 2.0 * s + 1e-12 && v >= 2.0 * s * 0.7, "rho({s}) = {v}");
        }
    }

    #[test]
    fn quartic_rate_passes_check_grid() {
        let env = fit_rho_envelope(&(0.5 * x().square()), &x().powi(4), 1, &grid(), &BTreeMap::new()).unwrap();
        assert!(env.worst_margin >= 0.0, "{}", env.worst_margin);
        let v = env.value(2.0);
        assert!(v <= 16.0 && v > 10.0, "{v}");
    }

    #[test]
    fn degenerate_inputs() {
        let empty = SampleGrid::Points(vec![]);
        assert_eq!(
            fit_rho_envelope(&x().square(), &x().square(), 1, &empty, &BTreeMap::new()),
            Err(EnvelopeError::EmptyGrid)
        );
        // Q vanishes along x2 = 0 while P does not
        let q = Expr::state(0).square();
        let p = Expr::state(0).square() + Expr::state(1).square();
        assert!(matches!(
            fit_rho_envelope(&p, &q, 2, &grid(), &BTreeMap::new()),
            Err(EnvelopeError::EnvelopeDegenerate { .. })
        ));
    }

    #[test]
    fn residual_radius_examples() {
        let consts = DesignConstants::unit(2, 2.0).with_matched(1.0, 0.5).unwrap();
        let rho = LinearComparison(2.0);
        let a = residual_radius(&TrueParameters(vec![-1.5, -0.5]), &consts, &rho).unwrap();
        assert!((a.argument - 1.0).abs() < 1e-15);
        assert!((a.alpha - 0.5).abs() < 1e-9);
        let inside = residual_radius(&TrueParameters(vec![1.0, 0.0]), &consts, &rho).unwrap();
        assert_eq!(inside.alpha, 0.0);
        let big_r = DesignConstants::unit(2, 1e300).with_matched(1.0, 0.5).unwrap();
        assert_eq!(residual_radius(&TrueParameters(vec![-1.5, -0.5]), &big_r, &rho).unwrap().alpha, 0.0);
    }

    #[test]
    fn argument_above_range() {
        let env = fit_rho_envelope(
            &(0.5 * x().square()),
            &x().square(),
            1,
            &SampleGrid::Box { per_axis: 5, half_width: 0.5, random: 0, seed: 0 },
            &BTreeMap::new(),
        )
        .unwrap();
        let consts = DesignConstants::unit(1, 0.0).with_matched(1.0, 0.5).unwrap();
        let err = residual_radius(&TrueParameters(vec![3.0]), &consts, &env).unwrap_err();
        assert!(matches!(err, EnvelopeError::ArgumentAboveRange { .. }));
    }
}
