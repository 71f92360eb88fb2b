//! A small expression language for Hamiltonians, generating-function cores
//! and diffeomorphism components, with exact forward-mode differentiation.
//!
//! Grammar (whitespace insignificant, case-sensitive):
//!
//! ```text
//! expr   := term (("+"|"-") term)* ;
//! term   := factor (("*"|"/") factor)* ;
//! factor := base ("^" integer)? ;
//! base   := number | var | func "(" expr ("," expr)* ")" | "(" expr ")" | "-" base ;
//! var    := ("q"|"p"|"xi") integer | "t" ;
//! func   := "sin"|"cos"|"exp"|"abs"|"min"|"max"|"sqrt"|"tanh"|"bump" ;
//! ```
//!
//! Variables live in the fixed layout `q1..qd, p1..pd, xi1..xik, t`; every
//! evaluation point is a flat slice in that order (trailing entries may be
//! omitted and read as zero).

pub mod ast;
mod jet;
mod parse;

use nalgebra::DMatrix;
use thiserror::Error;

pub use ast::{Func, Node, Var};
pub use jet::bump_with_derivatives;

/// Hard cap on the flat variable count `2d + k + 1`.
pub const MAX_VARS: usize = 16;

/// Absolute tolerance under which `abs`/`min`/`max` arguments count as ties.
pub const KINK_TOL: f64 = 1e-14;

/// Declared variable counts: `d` pairs of phase variables and `k` fiber
/// variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d: usize,
    pub k: usize,
}

impl Dims {
    pub fn phase(d: usize) -> Dims {
        Dims { d, k: 0 }
    }

    /// Flat variable count including the trailing time slot.
    pub fn nvars(self) -> usize {
        2 * self.d + self.k + 1
    }
}

/// Differentiability class carried by an expression.
///
/// `abs`/`min`/`max` anywhere in the tree demote the expression to
/// `C0Lipschitz`; the `C11` class is assigned only by an explicit author
/// flag (e.g. for `q1*abs(q1)/2`-style compositions).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Smooth,
    C11,
    C0Lipschitz,
}

#[derive(Debug, Error)]
pub enum HamlangError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("{line}:{col}: unknown identifier `{name}`")]
    UnknownIdentifier {
        line: usize,
        col: usize,
        name: String,
    },
    #[error("{line}:{col}: `{func}` expects {expected} argument(s), got {got}")]
    Arity {
        line: usize,
        col: usize,
        func: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{line}:{col}: variable index out of range: `{name}` (bound {bound})")]
    IndexOutOfRange {
        line: usize,
        col: usize,
        name: String,
        bound: usize,
    },
    #[error("variable layout too large: 2d+k+1 = {0} exceeds {MAX_VARS}")]
    TooManyVars(usize),
}

/// Evaluation-time failures.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    /// Differentiation hit a kink of `abs`/`min`/`max` (tied arguments).
    #[error("kink point: derivative undefined here")]
    Kink,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("evaluation overflowed to a non-finite value")]
    NonFinite,
}

/// An immutable parsed expression with its declared variable layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Expression {
    dims: Dims,
    root: Node,
    smoothness: Smoothness,
}

impl Expression {
    /// Parse `source` against the declared `(d, k)` layout.
    pub fn parse(source: &str, dims: Dims) -> Result<Expression, HamlangError> {
        if dims.nvars() > MAX_VARS {
            return Err(HamlangError::TooManyVars(dims.nvars()));
        }
        let root = parse::parse(source, dims)?;
        let smoothness = if root.has_kink_ops() {
            Smoothness::C0Lipschitz
        } else {
            Smoothness::Smooth
        };
        Ok(Expression {
            dims,
            root,
            smoothness,
        })
    }

    /// Author flag: promote a Lipschitz expression to the `C11` class.
    pub fn flagged(mut self, smoothness: Smoothness) -> Expression {
        self.smoothness = smoothness;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    /// True when the tree references any `p` variable.
    pub fn uses_momentum(&self) -> bool {
        self.root.references(&mut |v| matches!(v, Var::P(_)))
    }

    /// True when the tree references any fiber variable.
    pub fn uses_fiber(&self) -> bool {
        self.root.references(&mut |v| matches!(v, Var::Xi(_)))
    }

    pub fn uses_time(&self) -> bool {
        self.root.references(&mut |v| matches!(v, Var::T))
    }

    /// Evaluate at a flat point `(q.., p.., xi.., t)`; trailing entries may
    /// be omitted and are read as zero.
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        jet::eval_value(&self.root, self.dims, vars)
    }

    /// Exact forward-mode gradient with respect to the first `n` flat
    /// variables. Returns the kink-point signal at ties of `abs`/`min`/`max`.
    pub fn gradient_n(&self, vars: &[f64], n: usize) -> Result<Vec<f64>, EvalError> {
        let n = n.min(self.dims.nvars());
        let jet = jet::eval_jet(&self.root, self.dims, vars, n)?;
        Ok(jet.g[..n].to_vec())
    }

    /// Gradient over the full phase block `(q.., p..)` (length `2d`).
    pub fn gradient(&self, vars: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.gradient_n(vars, 2 * self.dims.d)
    }

    /// Value, gradient and Hessian with respect to the first `n` variables.
    pub fn value_grad_hess(
        &self,
        vars: &[f64],
        n: usize,
    ) -> Result<(f64, Vec<f64>, DMatrix<f64>), EvalError> {
        let n = n.min(self.dims.nvars());
        let jet = jet::eval_jet2(&self.root, self.dims, vars, n)?;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = jet.h[i][j];
            }
        }
        Ok((jet.v, jet.g[..n].to_vec(), h))
    }

    /// Canonical printed form; re-parsing it yields a structurally
    /// identical tree.
    pub fn canonical(&self) -> String {
        self.root.to_string()
    }
}

impl std::fmt::Display for Expression {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.root)
    }
}
