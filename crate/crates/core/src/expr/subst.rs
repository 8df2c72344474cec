use std::collections::HashMap;

use super::{Expr, Node, Symbol};

impl Expr {
    /// Simultaneous substitution: every occurrence of a bound symbol is
    /// replaced by its image, and images are not themselves rewritten.
    pub fn substitute(&self, bindings: &HashMap<Symbol, Expr>) -> Expr {
        if bindings.is_empty() {
            return self.clone();
        }
        let mut memo = HashMap::new();
        subst_rec(self, bindings, &mut memo)
    }

    /// Substitutes the state symbols `x1..xk` by the given expressions.
    pub fn substitute_states(&self, images: &[Expr]) -> Expr {
        let map: HashMap<Symbol, Expr> = images
            .iter()
            .enumerate()
            .map(|(i, e)| (Symbol::State(i), e.clone()))
            .collect();
        self.substitute(&map)
    }

    /// Rebuilds the node with new children, reusing constructor folding.
    pub(crate) fn rebuild(&self, mut kids: Vec<Expr>) -> Expr {
        match self.node() {
            Node::Const(_) | Node::Sym(_) => self.clone(),
            Node::Add(_) => Expr::sum(kids),
            Node::Mul(_) => Expr::product(kids),
            Node::Pow(_, k) => kids.pop().unwrap().powi(*k),
            Node::Div(_, _) => {
                let b = kids.pop().unwrap();
                let a = kids.pop().unwrap();
                a.div(&b)
            }
            Node::Sqrt(_) => kids.pop().unwrap().sqrt(),
        }
    }
}

fn subst_rec(e: &Expr, b: &HashMap<Symbol, Expr>, memo: &mut HashMap<*const (), Expr>) -> Expr {
    if let Some(r) = memo.get(&e.ptr()) {
        return r.clone();
    }
    let r = match e.node() {
        Node::Const(_) => e.clone(),
        Node::Sym(s) => b.get(s).cloned().unwrap_or_else(|| e.clone()),
        _ => {
            let kids: Vec<Expr> = e.children().into_iter().map(|c| subst_rec(c, b, memo)).collect();
            if kids.iter().zip(e.children()).all(|(k, c)| k.ptr_eq(c)) {
                e.clone()
            } else {
                e.rebuild(kids)
            }
        }
    };
    memo.insert(e.ptr(), r.clone());
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{simplify, Point};

    #[test]
    fn shift_substitution() {
        let x1 = Expr::state(0);
        let e = x1.square();
        let mut b = HashMap::new();
        b.insert(Symbol::State(0), &x1 + 1.0);
        let s = e.substitute(&b);
        assert_eq!(s, (&x1 + 1.0).square());
    }

    #[test]
    fn substitution_is_simultaneous() {
        // swap x1 and x2
        let e = Expr::state(0) - 2.0 * Expr::state(1);
        let s = e.substitute_states(&[Expr::state(1), Expr::state(0)]);
        let v = s.eval(&Point::new(&[1.0, 10.0], &[])).unwrap();
        assert_eq!(v, 10.0 - 2.0);
    }

    #[test]
    fn residual_on_manifold_vanishes() {
        // y - k(x, th) with y -> k(x, th) is identically zero
        let k = -(Expr::estimate(0) * Expr::state(0).square() + 3.0 * Expr::state(0));
        let y = Expr::state(1);
        let mut b = HashMap::new();
        b.insert(Symbol::State(1), k.clone());
        let e = (&y - &k).substitute(&b);
        assert!(simplify(&e).is_zero());
    }
}
