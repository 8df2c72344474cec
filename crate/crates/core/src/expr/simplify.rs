//! Canonicalizing simplifier.
//!
//! Expressions are rewritten into a sum of monomials with numeric
//! coefficients. A monomial is a product of atoms raised to integer powers,
//! where an atom is a symbol or an opaque subexpression (square root, or the
//! reciprocal of a multi-term denominator) whose interior has itself been
//! simplified. Products of sums are expanded unless the expansion would exceed
//! [`EXPAND_CAP`] terms, in which case the larger operand is frozen into an
//! opaque atom. Powers of multi-term sums above [`EXPAND_POW_CAP`] are kept
//! as powers of a frozen base.
//!
//! Atom order is canonical (symbols by index, opaque atoms by structural
//! hash), so equal polynomials produce structurally equal output.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use super::{Expr, Node, Symbol};

/// Largest number of term products a single expansion may create.
pub const EXPAND_CAP: usize = 256;

/// Largest exponent to which a multi-term sum is expanded.
pub const EXPAND_POW_CAP: u32 = 4;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum AtomKey {
    Sym(Symbol),
    Opaque(u64, u32),
}

type Mono = Vec<(AtomKey, i32)>;
type Poly = BTreeMap<Mono, f64>;

struct AtomInfo {
    expr: Expr,
    /// For reciprocal atoms `1/d`, the denominator `d`.
    reciprocal_of: Option<Expr>,
}

#[derive(Default)]
struct Simplifier {
    atoms: HashMap<AtomKey, AtomInfo>,
    by_hash: HashMap<u64, Vec<(Expr, u32)>>,
    memo: HashMap<*const (), Rc<Poly>>,
    keep_alive: Vec<Expr>,
}

/// Returns an evaluation-equivalent expression in canonical expanded form.
pub fn simplify(e: &Expr) -> Expr {
    let mut s = Simplifier::default();
    let p = s.poly(e);
    s.to_expr(&p)
}

fn constant_poly(c: f64) -> Poly {
    let mut p = Poly::new();
    if c != 0.0 {
        p.insert(Vec::new(), c);
    }
    p
}

fn mono_mul(a: &Mono, b: &Mono) -> Mono {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => {
                out.push(a[i].clone());
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j].clone());
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                let e = a[i].1 + b[j].1;
                if e != 0 {
                    out.push((a[i].0.clone(), e));
                }
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn add_scaled(acc: &mut Poly, p: &Poly, scale: f64) {
    for (m, c) in p {
        let entry = acc.entry(m.clone()).or_insert(0.0);
        *entry += c * scale;
        if *entry == 0.0 {
            acc.remove(m);
        }
    }
}

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let m = mono_mul(ma, mb);
            let entry = out.entry(m).or_insert(0.0);
            *entry += ca * cb;
        }
    }
    out.retain(|_, c| *c != 0.0);
    out
}

fn as_constant(p: &Poly) -> Option<f64> {
    match p.len() {
        0 => Some(0.0),
        1 => p.get(&Vec::new()).copied(),
        _ => None,
    }
}

impl Simplifier {
    fn atom(&mut self, e: Expr, reciprocal_of: Option<Expr>) -> AtomKey {
        if let Node::Sym(s) = e.node() {
            let key = AtomKey::Sym(s.clone());
            self.atoms.entry(key.clone()).or_insert(AtomInfo { expr: e, reciprocal_of: None });
            return key;
        }
        let h = e.0.hash;
        let bucket = self.by_hash.entry(h).or_default();
        if let Some((_, tag)) = bucket.iter().find(|(x, _)| *x == e) {
            return AtomKey::Opaque(h, *tag);
        }
        let tag = bucket.len() as u32;
        bucket.push((e.clone(), tag));
        let key = AtomKey::Opaque(h, tag);
        self.atoms.insert(key.clone(), AtomInfo { expr: e, reciprocal_of });
        key
    }

    fn atom_poly(&mut self, e: Expr, reciprocal_of: Option<Expr>) -> Poly {
        let key = self.atom(e, reciprocal_of);
        let mut p = Poly::new();
        p.insert(vec![(key, 1)], 1.0);
        p
    }

    /// Freezes a multi-term polynomial into a single opaque atom.
    fn freeze(&mut self, p: &Poly) -> Poly {
        if p.len() <= 1 {
            return p.clone();
        }
        let e = self.to_expr(p);
        self.atom_poly(e, None)
    }

    fn mul_capped(&mut self, a: &Poly, b: &Poly) -> Poly {
        if a.len().saturating_mul(b.len()) <= EXPAND_CAP {
            return poly_mul(a, b);
        }
        let (a, b) = if a.len() >= b.len() {
            (self.freeze(a), b.clone())
        } else {
            (a.clone(), self.freeze(b))
        };
        if a.len().saturating_mul(b.len()) <= EXPAND_CAP {
            poly_mul(&a, &b)
        } else {
            let fa = self.freeze(&a);
            let fb = self.freeze(&b);
            poly_mul(&fa, &fb)
        }
    }

    fn poly(&mut self, e: &Expr) -> Rc<Poly> {
        if let Some(p) = self.memo.get(&e.ptr()) {
            return p.clone();
        }
        let p = match e.node() {
            Node::Const(c) => constant_poly(*c),
            Node::Sym(_) => self.atom_poly(e.clone(), None),
            Node::Add(xs) => {
                let mut acc = Poly::new();
                for x in xs {
                    let px = self.poly(x);
                    add_scaled(&mut acc, &px, 1.0);
                }
                acc
            }
            Node::Mul(xs) => {
                let mut acc = constant_poly(1.0);
                for x in xs {
                    let px = self.poly(x);
                    acc = self.mul_capped(&acc, &px);
                    if acc.is_empty() {
                        break;
                    }
                }
                acc
            }
            Node::Pow(b, k) => {
                let pb = self.poly(b);
                self.pow(&pb, *k)
            }
            Node::Div(a, b) => {
                let pa = self.poly(a);
                let pb = self.poly(b);
                self.quotient(&pa, &pb)
            }
            Node::Sqrt(a) => {
                let pa = self.poly(a);
                match as_constant(&pa) {
                    Some(c) if c >= 0.0 => constant_poly(c.sqrt()),
                    _ => {
                        let inner = self.to_expr(&pa);
                        self.atom_poly(inner.sqrt(), None)
                    }
                }
            }
        };
        let rc = Rc::new(p);
        self.memo.insert(e.ptr(), rc.clone());
        self.keep_alive.push(e.clone());
        rc
    }

    fn pow(&mut self, base: &Poly, k: u32) -> Poly {
        if k == 0 {
            return constant_poly(1.0);
        }
        if base.len() == 1 {
            let (m, c) = base.iter().next().unwrap();
            let m: Mono = m.iter().map(|(a, e)| (a.clone(), e * k as i32)).collect();
            let mut p = Poly::new();
            p.insert(m, c.powi(k as i32));
            return p;
        }
        if k > EXPAND_POW_CAP {
            let frozen = self.freeze(base);
            return self.pow(&frozen, k);
        }
        let mut result = constant_poly(1.0);
        let mut sq = base.clone();
        let mut k = k;
        loop {
            if k & 1 == 1 {
                result = self.mul_capped(&result, &sq);
            }
            k >>= 1;
            if k == 0 {
                break;
            }
            sq = self.mul_capped(&sq, &sq);
        }
        result
    }

    fn quotient(&mut self, num: &Poly, den: &Poly) -> Poly {
        if num.is_empty() {
            return Poly::new();
        }
        if den.len() == 1 {
            let (m, c) = den.iter().next().unwrap();
            let inv: Mono = m.iter().map(|(a, e)| (a.clone(), -e)).collect();
            let mut out = Poly::new();
            for (mn, cn) in num {
                let prod = mono_mul(mn, &inv);
                let entry = out.entry(prod).or_insert(0.0);
                *entry += cn / c;
            }
            out.retain(|_, c| *c != 0.0);
            return out;
        }
        // zero or multi-term denominator: keep an explicit reciprocal atom so
        // evaluation still checks it
        let d = self.to_expr(den);
        let recip = Expr::one().div(&d);
        let r = self.atom_poly(recip, Some(d));
        self.mul_capped(num, &r)
    }

    fn to_expr(&mut self, p: &Poly) -> Expr {
        let mut terms = Vec::with_capacity(p.len());
        for (m, c) in p {
            let mut num = vec![Expr::constant(*c)];
            let mut den = Vec::new();
            for (key, e) in m {
                let info = &self.atoms[key];
                match (&info.reciprocal_of, *e > 0) {
                    (Some(d), true) => den.push(d.powi(*e as u32)),
                    (Some(_), false) => num.push(info.expr.powi((-e) as u32)),
                    (None, true) => num.push(info.expr.powi(*e as u32)),
                    (None, false) => den.push(info.expr.powi((-e) as u32)),
                }
            }
            let n = Expr::product(num);
            terms.push(if den.is_empty() { n } else { n.div(&Expr::product(den)) });
        }
        Expr::sum(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Point;

    fn x(i: usize) -> Expr {
        Expr::state(i)
    }

    #[test]
    fn unit_laws() {
        let e = Expr::product([Expr::zero(), x(0)]);
        let e = Expr::sum([e, Expr::product([Expr::one(), Expr::estimate(1)])]);
        assert_eq!(simplify(&e), Expr::estimate(1));
    }

    #[test]
    fn power_collection() {
        let e = Expr::from_node(Node::Mul(vec![x(0), x(0)]));
        assert_eq!(simplify(&e), x(0).powi(2));
    }

    #[test]
    fn like_terms_cancel() {
        let a = (x(0) + Expr::estimate(0)).powi(3);
        let b = x(0).powi(3) + 3.0 * x(0).powi(2) * Expr::estimate(0)
            + 3.0 * x(0) * Expr::estimate(0).powi(2)
            + Expr::estimate(0).powi(3);
        assert!(simplify(&(a - b)).is_zero());
    }

    #[test]
    fn monomial_denominator_becomes_negative_power() {
        let e = (x(0).powi(3) + x(0)).div(&(2.0 * x(0)));
        let s = simplify(&e);
        let pt = Point::new(&[1.7], &[]);
        assert!((s.eval(&pt).unwrap() - (1.7f64.powi(2) + 1.0) / 2.0).abs() < 1e-14);
        // x cancels entirely, so the result is a polynomial
        assert!(s.eval(&Point::new(&[0.0], &[])).is_ok());
    }

    #[test]
    fn multi_term_denominator_is_still_checked() {
        let e = Expr::one().div(&(x(0) - x(1)));
        let s = simplify(&e);
        assert!(s.eval(&Point::new(&[1.0, 1.0], &[])).is_err());
        assert_eq!(s.eval(&Point::new(&[3.0, 1.0], &[])).unwrap(), 0.5);
    }

    #[test]
    fn high_powers_of_sums_stay_factored() {
        let base = Expr::estimate(1) + 0.8;
        let s = simplify(&base.powi(12));
        assert_eq!(s, simplify(&base).powi(12));
        // near the root the factored form keeps full relative accuracy
        let pt = Point::new(&[], &[0.0, -0.8 + 1e-3]);
        let exact = 1e-3f64.powi(12);
        assert!((s.eval(&pt).unwrap() - exact).abs() <= 1e-9 * exact);
    }

    #[test]
    fn sqrt_of_constant_folds() {
        let e = (Expr::constant(2.0) + 2.0).sqrt() * x(0);
        assert_eq!(simplify(&e), 2.0 * x(0));
    }

    #[test]
    fn canonical_form_is_order_independent() {
        let a = Expr::estimate(0) * x(0) + x(1).powi(2) * 3.0;
        let b = 3.0 * (x(1) * x(1)) + x(0) * Expr::estimate(0);
        assert_eq!(simplify(&a), simplify(&b));
    }

    #[test]
    fn expansion_cap_freezes_large_products() {
        let s: Expr = Expr::sum((0..60).map(|i| Expr::state(i % 6).powi(1 + i as u32 / 6)));
        let e = s.powi(3);
        let out = simplify(&e);
        let pt = Point::new(&[0.1, 0.2, -0.1, 0.05, 0.3, -0.2], &[]);
        let a = e.eval(&pt).unwrap();
        let b = out.eval(&pt).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
