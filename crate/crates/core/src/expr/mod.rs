//! Symbolic expressions over state, estimate and named-constant symbols.
//!
//! Every smooth map used by the synthesis (plant fields, regressors, feedback
//! laws, update laws, coordinate changes and damping gains) is an [`Expr`].
//! The node set is deliberately small: constants, symbols, n-ary sums and
//! products, non-negative integer powers, quotients and square roots. It is
//! closed under [`Expr::partial`], which is all backstepping needs.
//!
//! Expressions are immutable reference-counted DAGs. Each node caches its
//! structural hash, so structurally equal subtrees compare and hash cheaply,
//! which the simplifier and the [`Tape`] compiler use for sharing.

mod diff;
mod rho;
mod sexpr;
mod simplify;
mod subst;
mod tape;

pub use rho::{ray_quadrature_rho, ray_quadrature_rho_unsimplified, RayRho, RhoError, DEFAULT_QUAD_ORDER};
pub use sexpr::ParseError;
pub use simplify::simplify;
pub use tape::{Tape, TapeError};

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops;
use std::sync::Arc;

use thiserror::Error;

/// Absolute threshold below which a quotient denominator counts as vanishing.
pub const SINGULAR_DENOMINATOR: f64 = 1e-12;

/// A variable an expression may depend on.
///
/// Indices are zero-based; the textual forms are one-based (`x1` is
/// `State(0)`, `th2` is `Estimate(1)`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    /// Plant state component.
    State(usize),
    /// Parameter-estimate component.
    Estimate(usize),
    /// Named design or ground-truth constant, bound at evaluation time.
    Named(Arc<str>),
}

impl Symbol {
    pub fn named(name: &str) -> Symbol {
        Symbol::Named(Arc::from(name))
    }

    /// Name under which the true parameter `theta_j` is bound (one-based text).
    pub fn true_parameter(j: usize) -> Symbol {
        Symbol::named(&format!("theta{}", j + 1))
    }

    /// Parses the textual form. Anything not shaped like `x<k>` or `th<k>`
    /// (with `k >= 1`) is a named constant.
    pub fn parse(s: &str) -> Symbol {
        fn index(rest: &str) -> Option<usize> {
            if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            rest.parse::<usize>().ok().filter(|&k| k >= 1).map(|k| k - 1)
        }
        if let Some(i) = s.strip_prefix("th").and_then(index) {
            return Symbol::Estimate(i);
        }
        if let Some(i) = s.strip_prefix('x').and_then(index) {
            return Symbol::State(i);
        }
        Symbol::named(s)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::State(i) => write!(f, "x{}", i + 1),
            Symbol::Estimate(j) => write!(f, "th{}", j + 1),
            Symbol::Named(name) => f.write_str(name),
        }
    }
}

/// One node of an expression DAG.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    Sym(Symbol),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    /// Integer power with exponent >= 2 after construction-time folding.
    Pow(Expr, u32),
    /// Quotient; the denominator is required to be nonvanishing wherever the
    /// expression is evaluated.
    Div(Expr, Expr),
    /// Square root of a quantity required to be non-negative.
    Sqrt(Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    hash: u64,
    tree_size: u64,
}

/// Immutable, shareable symbolic expression.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

fn const_bits(c: f64) -> u64 {
    // -0.0 and 0.0 must hash alike since they compare equal.
    if c == 0.0 {
        0
    } else {
        c.to_bits()
    }
}

fn node_hash(node: &Node) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    match node {
        Node::Const(c) => {
            0u8.hash(&mut h);
            const_bits(*c).hash(&mut h);
        }
        Node::Sym(s) => {
            1u8.hash(&mut h);
            s.hash(&mut h);
        }
        Node::Add(xs) => {
            2u8.hash(&mut h);
            for x in xs {
                x.0.hash.hash(&mut h);
            }
        }
        Node::Mul(xs) => {
            3u8.hash(&mut h);
            for x in xs {
                x.0.hash.hash(&mut h);
            }
        }
        Node::Pow(b, k) => {
            4u8.hash(&mut h);
            b.0.hash.hash(&mut h);
            k.hash(&mut h);
        }
        Node::Div(a, b) => {
            5u8.hash(&mut h);
            a.0.hash.hash(&mut h);
            b.0.hash.hash(&mut h);
        }
        Node::Sqrt(a) => {
            6u8.hash(&mut h);
            a.0.hash.hash(&mut h);
        }
    }
    h.finish()
}

fn node_tree_size(node: &Node) -> u64 {
    let children: u64 = match node {
        Node::Const(_) | Node::Sym(_) => 0,
        Node::Add(xs) | Node::Mul(xs) => xs.iter().fold(0u64, |acc, x| acc.saturating_add(x.0.tree_size)),
        Node::Pow(b, _) => b.0.tree_size,
        Node::Div(a, b) => a.0.tree_size.saturating_add(b.0.tree_size),
        Node::Sqrt(a) => a.0.tree_size,
    };
    children.saturating_add(1)
}

impl Expr {
    fn from_node(node: Node) -> Expr {
        let hash = node_hash(&node);
        let tree_size = node_tree_size(&node);
        Expr(Arc::new(Inner { node, hash, tree_size }))
    }

    pub fn node(&self) -> &Node {
        &self.0.node
    }

    pub(crate) fn ptr(&self) -> *const () {
        Arc::as_ptr(&self.0) as *const ()
    }

    pub fn ptr_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    pub fn constant(c: f64) -> Expr {
        Expr::from_node(Node::Const(c))
    }

    pub fn zero() -> Expr {
        Expr::constant(0.0)
    }

    pub fn one() -> Expr {
        Expr::constant(1.0)
    }

    pub fn symbol(s: Symbol) -> Expr {
        Expr::from_node(Node::Sym(s))
    }

    /// State component `x_{i+1}` (zero-based index).
    pub fn state(i: usize) -> Expr {
        Expr::symbol(Symbol::State(i))
    }

    /// Estimate component `th_{j+1}` (zero-based index).
    pub fn estimate(j: usize) -> Expr {
        Expr::symbol(Symbol::Estimate(j))
    }

    pub fn named(name: &str) -> Expr {
        Expr::symbol(Symbol::named(name))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    /// Sum with constant folding and flattening.
    pub fn sum<I: IntoIterator<Item = Expr>>(terms: I) -> Expr {
        let mut out = Vec::new();
        let mut c = 0.0;
        for t in terms {
            match t.node() {
                Node::Const(v) => c += v,
                Node::Add(xs) => {
                    for x in xs {
                        match x.as_const() {
                            Some(v) => c += v,
                            None => out.push(x.clone()),
                        }
                    }
                }
                _ => out.push(t),
            }
        }
        if c != 0.0 {
            out.push(Expr::constant(c));
        }
        match out.len() {
            0 => Expr::zero(),
            1 => out.pop().unwrap(),
            _ => Expr::from_node(Node::Add(out)),
        }
    }

    /// Product with constant folding and flattening; any zero factor
    /// collapses the product.
    pub fn product<I: IntoIterator<Item = Expr>>(factors: I) -> Expr {
        let mut out = Vec::new();
        let mut c = 1.0;
        for f in factors {
            match f.node() {
                Node::Const(v) => c *= v,
                Node::Mul(xs) => {
                    for x in xs {
                        match x.as_const() {
                            Some(v) => c *= v,
                            None => out.push(x.clone()),
                        }
                    }
                }
                _ => out.push(f),
            }
        }
        if c == 0.0 {
            return Expr::zero();
        }
        if out.is_empty() {
            return Expr::constant(c);
        }
        if c != 1.0 {
            out.insert(0, Expr::constant(c));
        }
        if out.len() == 1 {
            out.pop().unwrap()
        } else {
            Expr::from_node(Node::Mul(out))
        }
    }

    pub fn powi(&self, k: u32) -> Expr {
        match (k, self.node()) {
            (0, _) => Expr::one(),
            (1, _) => self.clone(),
            (_, Node::Const(c)) => Expr::constant(c.powi(k as i32)),
            (_, Node::Pow(b, j)) => Expr::from_node(Node::Pow(b.clone(), j * k)),
            _ => Expr::from_node(Node::Pow(self.clone(), k)),
        }
    }

    pub fn square(&self) -> Expr {
        self.powi(2)
    }

    /// Quotient. Constant denominators other than zero are folded; a literal
    /// zero denominator is kept so that evaluation reports it.
    pub fn div(&self, den: &Expr) -> Expr {
        if self.is_zero() {
            return Expr::zero();
        }
        match (self.as_const(), den.as_const()) {
            (_, Some(d)) if d == 1.0 => self.clone(),
            (Some(a), Some(d)) if d != 0.0 => Expr::constant(a / d),
            _ => Expr::from_node(Node::Div(self.clone(), den.clone())),
        }
    }

    pub fn sqrt(&self) -> Expr {
        match self.as_const() {
            Some(c) if c >= 0.0 => Expr::constant(c.sqrt()),
            _ => Expr::from_node(Node::Sqrt(self.clone())),
        }
    }

    /// Direct children in order.
    pub fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::Sym(_) => Vec::new(),
            Node::Add(xs) | Node::Mul(xs) => xs.iter().collect(),
            Node::Pow(b, _) => vec![b],
            Node::Div(a, b) => vec![a, b],
            Node::Sqrt(a) => vec![a],
        }
    }

    /// Number of nodes counting repeated subtrees every time they occur
    /// (saturating).
    pub fn tree_size(&self) -> u64 {
        self.0.tree_size
    }

    /// Number of distinct nodes after structural sharing.
    pub fn dag_size(&self) -> usize {
        let mut seen: HashSet<Expr> = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if seen.contains(&e) {
                continue;
            }
            for c in e.children() {
                stack.push(c.clone());
            }
            seen.insert(e);
        }
        seen.len()
    }

    /// All symbols occurring in the expression.
    pub fn free_symbols(&self) -> BTreeSet<Symbol> {
        let mut out = BTreeSet::new();
        let mut seen: HashSet<*const ()> = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            if let Node::Sym(s) = e.node() {
                out.insert(s.clone());
            }
            for c in e.children() {
                stack.push(c.clone());
            }
        }
        out
    }

    pub fn depends_on(&self, sym: &Symbol) -> bool {
        self.free_symbols().contains(sym)
    }

    /// Largest state index (zero-based) the expression mentions.
    pub fn max_state_index(&self) -> Option<usize> {
        self.free_symbols()
            .iter()
            .filter_map(|s| match s {
                Symbol::State(i) => Some(*i),
                _ => None,
            })
            .max()
    }

    /// Evaluates at a point. Never returns NaN or an infinity.
    pub fn eval(&self, pt: &Point) -> Result<f64, EvalError> {
        let mut memo = HashMap::new();
        eval_rec(self, pt, &mut memo)
    }
}

fn eval_rec(e: &Expr, pt: &Point, memo: &mut HashMap<*const (), f64>) -> Result<f64, EvalError> {
    if let Some(v) = memo.get(&e.ptr()) {
        return Ok(*v);
    }
    let v = match e.node() {
        Node::Const(c) => *c,
        Node::Sym(s) => pt.lookup(s)?,
        Node::Add(xs) => {
            let mut acc = 0.0;
            for x in xs {
                acc += eval_rec(x, pt, memo)?;
            }
            acc
        }
        Node::Mul(xs) => {
            let mut acc = 1.0;
            for x in xs {
                acc *= eval_rec(x, pt, memo)?;
            }
            acc
        }
        Node::Pow(b, k) => eval_rec(b, pt, memo)?.powi(*k as i32),
        Node::Div(a, b) => {
            let den = eval_rec(b, pt, memo)?;
            if den.abs() < SINGULAR_DENOMINATOR {
                return Err(EvalError::NearSingularDenominator { value: den });
            }
            eval_rec(a, pt, memo)? / den
        }
        Node::Sqrt(a) => {
            let arg = eval_rec(a, pt, memo)?;
            if arg < 0.0 {
                return Err(EvalError::NegativeSqrt { value: arg });
            }
            arg.sqrt()
        }
    };
    if !v.is_finite() {
        return Err(EvalError::NonFinite);
    }
    memo.insert(e.ptr(), v);
    Ok(v)
}

impl PartialEq for Expr {
    fn eq(&self, other: &Expr) -> bool {
        if self.ptr_eq(other) {
            return true;
        }
        if self.0.hash != other.0.hash || self.0.tree_size != other.0.tree_size {
            return false;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a == b,
            (Node::Sym(a), Node::Sym(b)) => a == b,
            (Node::Add(a), Node::Add(b)) | (Node::Mul(a), Node::Mul(b)) => a == b,
            (Node::Pow(a, j), Node::Pow(b, k)) => j == k && a == b,
            (Node::Div(a1, b1), Node::Div(a2, b2)) => a1 == a2 && b1 == b2,
            (Node::Sqrt(a), Node::Sqrt(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.0.hash.hash(state);
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({self})")
    }
}

impl From<f64> for Expr {
    fn from(c: f64) -> Expr {
        Expr::constant(c)
    }
}

impl From<Symbol> for Expr {
    fn from(s: Symbol) -> Expr {
        Expr::symbol(s)
    }
}

macro_rules! binop {
    ($tr:ident, $method:ident, $body:expr) => {
        impl ops::$tr<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &rhs)
            }
        }
        impl ops::$tr<&Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, rhs)
            }
        }
        impl ops::$tr<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, rhs)
            }
        }
        impl ops::$tr<Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &rhs)
            }
        }
        impl ops::$tr<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&self, &Expr::constant(rhs))
            }
        }
        impl ops::$tr<f64> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(self, &Expr::constant(rhs))
            }
        }
        impl ops::$tr<Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&Expr::constant(self), &rhs)
            }
        }
        impl ops::$tr<&Expr> for f64 {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                let f: fn(&Expr, &Expr) -> Expr = $body;
                f(&Expr::constant(self), rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| Expr::sum([a.clone(), b.clone()]));
binop!(Sub, sub, |a, b| Expr::sum([a.clone(), -b]));
binop!(Mul, mul, |a, b| Expr::product([a.clone(), b.clone()]));
binop!(Div, div, |a, b| a.div(b));

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

impl ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self.as_const() {
            Some(c) => Expr::constant(-c),
            None => Expr::product([Expr::constant(-1.0), self.clone()]),
        }
    }
}

/// Evaluation context: a state vector, an estimate vector and bindings for
/// named constants.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Point {
    pub x: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub constants: BTreeMap<String, f64>,
}

impl Point {
    pub fn new(x: &[f64], theta_hat: &[f64]) -> Point {
        Point {
            x: x.to_vec(),
            theta_hat: theta_hat.to_vec(),
            constants: BTreeMap::new(),
        }
    }

    pub fn with_constant(mut self, name: &str, value: f64) -> Point {
        self.constants.insert(name.to_string(), value);
        self
    }

    /// Binds `theta1..thetap` to the given true parameter vector.
    pub fn with_true_parameters(mut self, theta: &[f64]) -> Point {
        for (j, v) in theta.iter().enumerate() {
            self.constants.insert(format!("theta{}", j + 1), *v);
        }
        self
    }

    fn lookup(&self, s: &Symbol) -> Result<f64, EvalError> {
        let v = match s {
            Symbol::State(i) => self.x.get(*i).copied(),
            Symbol::Estimate(j) => self.theta_hat.get(*j).copied(),
            Symbol::Named(name) => self.constants.get(name.as_ref()).copied(),
        };
        v.ok_or_else(|| EvalError::UnboundSymbol(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("symbol `{0}` is not bound at the evaluation point")]
    UnboundSymbol(String),
    #[error("denominator {value:e} is below the singularity threshold")]
    NearSingularDenominator { value: f64 },
    #[error("square root of negative value {value:e}")]
    NegativeSqrt { value: f64 },
    #[error("evaluation produced a non-finite value")]
    NonFinite,
}
