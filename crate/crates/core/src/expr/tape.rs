//! Flat evaluation tapes.
//!
//! A [`Tape`] compiles a list of expressions into a straight-line program with
//! common subexpressions merged, then evaluates it over a reusable scratch
//! buffer. Named constants are bound at compile time.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{Expr, Node, Symbol, SINGULAR_DENOMINATOR};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TapeError {
    #[error("named constant `{0}` has no binding")]
    UnboundSymbol(String),
    #[error("tape reads x{needed} but only {given} state components were supplied")]
    StateTooShort { needed: usize, given: usize },
    #[error("tape reads th{needed} but only {given} estimate components were supplied")]
    EstimateTooShort { needed: usize, given: usize },
    #[error("denominator {value:e} is below the singularity threshold")]
    NearSingularDenominator { value: f64 },
    #[error("square root of negative value {value:e}")]
    NegativeSqrt { value: f64 },
    #[error("output {output} is not finite")]
    NonFinite { output: usize },
}

#[derive(Debug, Clone)]
enum Op {
    Const(f64),
    State(usize),
    Est(usize),
    Sum(Box<[u32]>),
    Prod(Box<[u32]>),
    Powi(u32, i32),
    Div(u32, u32),
    Sqrt(u32),
}

/// Compiled multi-output evaluator.
#[derive(Debug, Clone)]
pub struct Tape {
    ops: Vec<Op>,
    outputs: Vec<u32>,
    n_states: usize,
    n_estimates: usize,
}

struct Compiler<'a> {
    ops: Vec<Op>,
    by_ptr: HashMap<*const (), u32>,
    by_value: HashMap<Expr, u32>,
    constants: &'a BTreeMap<String, f64>,
    n_states: usize,
    n_estimates: usize,
}

impl Compiler<'_> {
    fn push(&mut self, op: Op) -> u32 {
        self.ops.push(op);
        (self.ops.len() - 1) as u32
    }

    fn slot(&mut self, e: &Expr) -> Result<u32, TapeError> {
        if let Some(&s) = self.by_ptr.get(&e.ptr()) {
            return Ok(s);
        }
        if let Some(&s) = self.by_value.get(e) {
            self.by_ptr.insert(e.ptr(), s);
            return Ok(s);
        }
        let op = match e.node() {
            Node::Const(c) => Op::Const(*c),
            Node::Sym(Symbol::State(i)) => {
                self.n_states = self.n_states.max(i + 1);
                Op::State(*i)
            }
            Node::Sym(Symbol::Estimate(j)) => {
                self.n_estimates = self.n_estimates.max(j + 1);
                Op::Est(*j)
            }
            Node::Sym(Symbol::Named(name)) => match self.constants.get(name.as_ref()) {
                Some(v) => Op::Const(*v),
                None => return Err(TapeError::UnboundSymbol(name.to_string())),
            },
            Node::Add(xs) => Op::Sum(xs.iter().map(|x| self.slot(x)).collect::<Result<_, _>>()?),
            Node::Mul(xs) => Op::Prod(xs.iter().map(|x| self.slot(x)).collect::<Result<_, _>>()?),
            Node::Pow(b, k) => Op::Powi(self.slot(b)?, *k as i32),
            Node::Div(a, b) => Op::Div(self.slot(a)?, self.slot(b)?),
            Node::Sqrt(a) => Op::Sqrt(self.slot(a)?),
        };
        let s = self.push(op);
        self.by_ptr.insert(e.ptr(), s);
        self.by_value.insert(e.clone(), s);
        Ok(s)
    }
}

impl Tape {
    pub fn compile(exprs: &[Expr], constants: &BTreeMap<String, f64>) -> Result<Tape, TapeError> {
        let mut c = Compiler {
            ops: Vec::new(),
            by_ptr: HashMap::new(),
            by_value: HashMap::new(),
            constants,
            n_states: 0,
            n_estimates: 0,
        };
        let outputs = exprs.iter().map(|e| c.slot(e)).collect::<Result<Vec<_>, _>>()?;
        Ok(Tape {
            ops: c.ops,
            outputs,
            n_states: c.n_states,
            n_estimates: c.n_estimates,
        })
    }

    /// Number of instructions after sharing.
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    /// Evaluates into `out`, using `scratch` as working memory.
    pub fn eval_into(&self, x: &[f64], th: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) -> Result<(), TapeError> {
        if x.len() < self.n_states {
            return Err(TapeError::StateTooShort { needed: self.n_states, given: x.len() });
        }
        if th.len() < self.n_estimates {
            return Err(TapeError::EstimateTooShort { needed: self.n_estimates, given: th.len() });
        }
        scratch.clear();
        scratch.reserve(self.ops.len());
        for op in &self.ops {
            let v = match op {
                Op::Const(c) => *c,
                Op::State(i) => x[*i],
                Op::Est(j) => th[*j],
                Op::Sum(args) => args.iter().map(|&a| scratch[a as usize]).sum(),
                Op::Prod(args) => args.iter().map(|&a| scratch[a as usize]).product(),
                Op::Powi(b, k) => scratch[*b as usize].powi(*k),
                Op::Div(a, b) => {
                    let den = scratch[*b as usize];
                    if den.abs() < SINGULAR_DENOMINATOR {
                        return Err(TapeError::NearSingularDenominator { value: den });
                    }
                    scratch[*a as usize] / den
                }
                Op::Sqrt(a) => {
                    let arg = scratch[*a as usize];
                    if arg < 0.0 {
                        return Err(TapeError::NegativeSqrt { value: arg });
                    }
                    arg.sqrt()
                }
            };
            scratch.push(v);
        }
        for (k, (&s, o)) in self.outputs.iter().zip(out.iter_mut()).enumerate() {
            let v = scratch[s as usize];
            if !v.is_finite() {
                return Err(TapeError::NonFinite { output: k });
            }
            *o = v;
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], th: &[f64]) -> Result<Vec<f64>, TapeError> {
        let mut out = vec![0.0; self.outputs.len()];
        let mut scratch = Vec::new();
        self.eval_into(x, th, &mut out, &mut scratch)?;
        Ok(out)
    }
}
