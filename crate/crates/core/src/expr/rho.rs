//! Growth bounds along rays from the origin.
//!
//! For `h` vanishing at `x = 0`, `h(x) = ∫₀¹ ∇h(λx)·x dλ`, and Cauchy-Schwarz
//! gives `|h(x,θ̂)| ≤ ρ(x,θ̂)|x|` with
//!
//! ```text
//! ρ(x,θ̂) = sqrt(1 + Σᵢ ∫₀¹ (∂h/∂xᵢ(λx,θ̂))² dλ)
//! ```
//!
//! The integral is replaced by Gauss-Legendre quadrature, which is exact for
//! polynomial `h` once the order reaches the degree of `h`. The result is
//! returned both as an expression (so it can enter a damping gain) and as a
//! callable.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use thiserror::Error;

use super::{simplify, EvalError, Expr, Point, Symbol};

pub const DEFAULT_QUAD_ORDER: usize = 16;

const ORIGIN_TOL: f64 = 1e-12;

/// Above this many nodes the sum of squares is not expanded.
const EXPAND_ATTEMPT_CAP: usize = 4000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RhoError {
    #[error("function does not vanish at the origin: value {value:e} at th = {theta_hat:?}")]
    NonvanishingAtOrigin { value: f64, theta_hat: Vec<f64> },
    #[error("quadrature order must be at least 1")]
    ZeroOrder,
    #[error("function cannot be evaluated at the origin: {0}")]
    Unevaluable(EvalError),
}

/// The bound `ρ` for one function `h`.
#[derive(Debug, Clone)]
pub struct RayRho {
    expr: Expr,
    order: usize,
}

impl RayRho {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn eval(&self, pt: &Point) -> Result<f64, EvalError> {
        self.expr.eval(pt)
    }

    /// The same bound with its state arguments replaced by `images`.
    pub fn pulled_back(&self, images: &[Expr]) -> RayRho {
        RayRho { expr: self.expr.substitute_states(images), order: self.order }
    }
}

/// Gauss-Legendre nodes and weights mapped to `[0, 1]`.
pub(crate) fn unit_interval_rule(order: usize) -> Result<Vec<(f64, f64)>, RhoError> {
    let n = NonZeroUsize::new(order).ok_or(RhoError::ZeroOrder)?;
    let rule = GaussLegendre::new(n);
    Ok(rule
        .as_node_weight_pairs()
        .into_iter()
        .map(|(xi, w)| ((xi + 1.0) / 2.0, w / 2.0))
        .collect())
}

/// Checks `h(0, θ̂) = 0`, symbolically if possible and otherwise on a fixed
/// sample of estimate (and named-constant) values.
fn check_vanishes_at_origin(h: &Expr, n: usize) -> Result<(), RhoError> {
    let at_origin = simplify(&h.substitute_states(&vec![Expr::zero(); n]));
    if at_origin.is_zero() {
        return Ok(());
    }
    let syms = at_origin.free_symbols();
    let p = syms
        .iter()
        .filter_map(|s| match s {
            Symbol::Estimate(j) => Some(j + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let samples = [0.0, 1.0, -1.0, 0.5, -2.5, 3.0, 0.1, -0.7];
    for k in 0..samples.len() {
        let th: Vec<f64> = (0..p).map(|j| samples[(k + 3 * j) % samples.len()]).collect();
        let mut pt = Point::new(&vec![0.0; n], &th);
        let mut constants = BTreeMap::new();
        for (i, s) in syms.iter().enumerate() {
            if let Symbol::Named(name) = s {
                constants.insert(name.to_string(), samples[(k + i) % samples.len()]);
            }
        }
        pt.constants = constants;
        let v = at_origin.eval(&pt).map_err(RhoError::Unevaluable)?;
        if v.abs() >= ORIGIN_TOL {
            return Err(RhoError::NonvanishingAtOrigin { value: v, theta_hat: th });
        }
    }
    Ok(())
}

/// Builds `ρ` for `h` over the states `x1..xn`.
///
/// The sum under the root is kept in whichever of two forms is smaller: fully
/// expanded (which collapses to one polynomial when `h` is polynomial) or as
/// a weighted sum of squares of the simplified scaled derivatives.
pub fn ray_quadrature_rho(h: &Expr, n: usize, quad_order: usize) -> Result<RayRho, RhoError> {
    build(h, n, quad_order, true)
}

/// [`ray_quadrature_rho`] without any simplification of the result.
pub fn ray_quadrature_rho_unsimplified(h: &Expr, n: usize, quad_order: usize) -> Result<RayRho, RhoError> {
    build(h, n, quad_order, false)
}

fn smaller(e: Expr) -> Expr {
    let s = simplify(&e);
    if s.dag_size() <= e.dag_size() {
        s
    } else {
        e
    }
}

fn build(h: &Expr, n: usize, quad_order: usize, tidy: bool) -> Result<RayRho, RhoError> {
    let rule = unit_interval_rule(quad_order)?;
    check_vanishes_at_origin(h, n)?;
    let mut squares = vec![Expr::one()];
    for i in 0..n {
        let mut d = h.partial(&Symbol::State(i));
        if tidy {
            d = smaller(d);
            if d.is_zero() {
                continue;
            }
        }
        for &(lambda, w) in &rule {
            let scaled: Vec<Expr> = (0..n).map(|l| lambda * Expr::state(l)).collect();
            let mut at = d.substitute_states(&scaled);
            if tidy {
                at = smaller(at);
            }
            squares.push(w * at.square());
        }
    }
    let factored = Expr::sum(squares);
    let under = if tidy && factored.dag_size() <= EXPAND_ATTEMPT_CAP {
        let expanded = simplify(&factored);
        if expanded.dag_size() <= factored.dag_size() {
            expanded
        } else {
            factored
        }
    } else {
        factored
    };
    Ok(RayRho { expr: under.sqrt(), order: quad_order })
}
