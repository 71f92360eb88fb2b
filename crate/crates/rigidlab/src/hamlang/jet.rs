use super::ast::{Func, Node, Var};
use super::{Dims, EvalError, KINK_TOL, MAX_VARS};

/// First-order jet: value plus gradient over at most [`MAX_VARS`] variables.
#[derive(Debug, Clone, Copy)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; MAX_VARS],
}

/// Second-order jet: value, gradient, dense Hessian.
#[derive(Debug, Clone, Copy)]
pub struct Jet2 {
    pub v: f64,
    pub g: [f64; MAX_VARS],
    pub h: [[f64; MAX_VARS]; MAX_VARS],
}

impl Jet {
    fn constant(v: f64) -> Jet {
        Jet {
            v,
            g: [0.0; MAX_VARS],
        }
    }
}

impl Jet2 {
    fn constant(v: f64) -> Jet2 {
        Jet2 {
            v,
            g: [0.0; MAX_VARS],
            h: [[0.0; MAX_VARS]; MAX_VARS],
        }
    }
}

pub fn var_index(v: Var, dims: Dims) -> usize {
    match v {
        Var::Q(i) => i,
        Var::P(i) => dims.d + i,
        Var::Xi(i) => 2 * dims.d + i,
        Var::T => 2 * dims.d + dims.k,
    }
}

fn read_var(vars: &[f64], idx: usize) -> f64 {
    vars.get(idx).copied().unwrap_or(0.0)
}

/// The quintic bump: 1 on `|r| <= 1/2`, 0 on `|r| >= 1`, a C² smoothstep
/// interpolant in between. Returns `(value, d/dr, d2/dr2)`.
pub fn bump_with_derivatives(r: f64) -> (f64, f64, f64) {
    let a = r.abs();
    if a <= 0.5 {
        (1.0, 0.0, 0.0)
    } else if a >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        let u = (a - 0.5) * 2.0;
        let s = u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
        let ds = 30.0 * u * u * (1.0 - u) * (1.0 - u);
        let d2s = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
        let sign = if r >= 0.0 { 1.0 } else { -1.0 };
        (1.0 - s, -ds * 2.0 * sign, -d2s * 4.0)
    }
}

fn pow_derivatives(u: f64, n: i32) -> Result<(f64, f64, f64), EvalError> {
    if n < 0 && u == 0.0 {
        return Err(EvalError::Domain("zero raised to a negative power".into()));
    }
    let nf = n as f64;
    let d1 = if n == 0 { 0.0 } else { nf * u.powi(n - 1) };
    let d2 = if n == 0 || n == 1 {
        0.0
    } else {
        nf * (nf - 1.0) * u.powi(n - 2)
    };
    Ok((u.powi(n), d1, d2))
}

fn unary_table(f: Func, u: f64) -> Result<(f64, f64, f64), EvalError> {
    match f {
        Func::Sin => Ok((u.sin(), u.cos(), -u.sin())),
        Func::Cos => Ok((u.cos(), -u.sin(), -u.cos())),
        Func::Exp => Ok((u.exp(), u.exp(), u.exp())),
        Func::Tanh => {
            let t = u.tanh();
            let sech2 = 1.0 - t * t;
            Ok((t, sech2, -2.0 * t * sech2))
        }
        Func::Sqrt => {
            if u < 0.0 {
                Err(EvalError::Domain("sqrt of a negative number".into()))
            } else if u == 0.0 {
                Err(EvalError::Domain("sqrt derivative at zero".into()))
            } else {
                let s = u.sqrt();
                Ok((s, 0.5 / s, -0.25 / (s * u)))
            }
        }
        Func::Bump => Ok(bump_with_derivatives(u)),
        _ => unreachable!("not a smooth unary function"),
    }
}

/// Plain value evaluation (no kink detection; `abs`/`min`/`max` are total).
pub fn eval_value(node: &Node, dims: Dims, vars: &[f64]) -> Result<f64, EvalError> {
    let v = match node {
        Node::Num(x) => *x,
        Node::Var(v) => read_var(vars, var_index(*v, dims)),
        Node::Add(a, b) => eval_value(a, dims, vars)? + eval_value(b, dims, vars)?,
        Node::Sub(a, b) => eval_value(a, dims, vars)? - eval_value(b, dims, vars)?,
        Node::Mul(a, b) => eval_value(a, dims, vars)? * eval_value(b, dims, vars)?,
        Node::Div(a, b) => eval_value(a, dims, vars)? / eval_value(b, dims, vars)?,
        Node::Pow(a, n) => eval_value(a, dims, vars)?.powi(*n),
        Node::Neg(a) => -eval_value(a, dims, vars)?,
        Node::Call(f, args) => {
            let u = eval_value(&args[0], dims, vars)?;
            match f {
                Func::Abs => u.abs(),
                Func::Min => u.min(eval_value(&args[1], dims, vars)?),
                Func::Max => u.max(eval_value(&args[1], dims, vars)?),
                Func::Sqrt => {
                    if u < 0.0 {
                        return Err(EvalError::Domain("sqrt of a negative number".into()));
                    }
                    u.sqrt()
                }
                Func::Bump => bump_with_derivatives(u).0,
                Func::Sin => u.sin(),
                Func::Cos => u.cos(),
                Func::Exp => u.exp(),
                Func::Tanh => u.tanh(),
            }
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn jet_mul(a: Jet, b: Jet, nv: usize) -> Jet {
    let mut out = Jet::constant(a.v * b.v);
    for i in 0..nv {
        out.g[i] = a.g[i] * b.v + b.g[i] * a.v;
    }
    out
}

fn jet_chain(f: (f64, f64, f64), u: Jet, nv: usize) -> Jet {
    let mut out = Jet::constant(f.0);
    for i in 0..nv {
        out.g[i] = f.1 * u.g[i];
    }
    out
}

pub fn eval_jet(node: &Node, dims: Dims, vars: &[f64], nv: usize) -> Result<Jet, EvalError> {
    let jet = match node {
        Node::Num(x) => Jet::constant(*x),
        Node::Var(v) => {
            let idx = var_index(*v, dims);
            let mut j = Jet::constant(read_var(vars, idx));
            if idx < nv {
                j.g[idx] = 1.0;
            }
            j
        }
        Node::Add(a, b) => {
            let (a, b) = (eval_jet(a, dims, vars, nv)?, eval_jet(b, dims, vars, nv)?);
            let mut out = Jet::constant(a.v + b.v);
            for i in 0..nv {
                out.g[i] = a.g[i] + b.g[i];
            }
            out
        }
        Node::Sub(a, b) => {
            let (a, b) = (eval_jet(a, dims, vars, nv)?, eval_jet(b, dims, vars, nv)?);
            let mut out = Jet::constant(a.v - b.v);
            for i in 0..nv {
                out.g[i] = a.g[i] - b.g[i];
            }
            out
        }
        Node::Mul(a, b) => jet_mul(
            eval_jet(a, dims, vars, nv)?,
            eval_jet(b, dims, vars, nv)?,
            nv,
        ),
        Node::Div(a, b) => {
            let (a, b) = (eval_jet(a, dims, vars, nv)?, eval_jet(b, dims, vars, nv)?);
            let recip = jet_chain((1.0 / b.v, -1.0 / (b.v * b.v), 0.0), b, nv);
            jet_mul(a, recip, nv)
        }
        Node::Pow(a, n) => {
            let a = eval_jet(a, dims, vars, nv)?;
            jet_chain(pow_derivatives(a.v, *n)?, a, nv)
        }
        Node::Neg(a) => {
            let a = eval_jet(a, dims, vars, nv)?;
            let mut out = Jet::constant(-a.v);
            for i in 0..nv {
                out.g[i] = -a.g[i];
            }
            out
        }
        Node::Call(f, args) => {
            let u = eval_jet(&args[0], dims, vars, nv)?;
            match f {
                Func::Abs => {
                    if u.v.abs() <= KINK_TOL {
                        return Err(EvalError::Kink);
                    }
                    jet_chain((u.v.abs(), u.v.signum(), 0.0), u, nv)
                }
                Func::Min | Func::Max => {
                    let w = eval_jet(&args[1], dims, vars, nv)?;
                    if (u.v - w.v).abs() <= KINK_TOL {
                        return Err(EvalError::Kink);
                    }
                    let pick_first = match f {
                        Func::Min => u.v < w.v,
                        _ => u.v > w.v,
                    };
                    if pick_first {
                        u
                    } else {
                        w
                    }
                }
                _ => jet_chain(unary_table(*f, u.v)?, u, nv),
            }
        }
    };
    if jet.v.is_finite() {
        Ok(jet)
    } else {
        Err(EvalError::NonFinite)
    }
}

fn jet2_mul(a: Jet2, b: Jet2, nv: usize) -> Jet2 {
    let mut out = Jet2::constant(a.v * b.v);
    for i in 0..nv {
        out.g[i] = a.g[i] * b.v + b.g[i] * a.v;
        for j in 0..nv {
            out.h[i][j] =
                a.h[i][j] * b.v + b.h[i][j] * a.v + a.g[i] * b.g[j] + b.g[i] * a.g[j];
        }
    }
    out
}

fn jet2_chain(f: (f64, f64, f64), u: Jet2, nv: usize) -> Jet2 {
    let mut out = Jet2::constant(f.0);
    for i in 0..nv {
        out.g[i] = f.1 * u.g[i];
        for j in 0..nv {
            out.h[i][j] = f.1 * u.h[i][j] + f.2 * u.g[i] * u.g[j];
        }
    }
    out
}

pub fn eval_jet2(node: &Node, dims: Dims, vars: &[f64], nv: usize) -> Result<Jet2, EvalError> {
    let jet = match node {
        Node::Num(x) => Jet2::constant(*x),
        Node::Var(v) => {
            let idx = var_index(*v, dims);
            let mut j = Jet2::constant(read_var(vars, idx));
            if idx < nv {
                j.g[idx] = 1.0;
            }
            j
        }
        Node::Add(a, b) => {
            let (a, b) = (eval_jet2(a, dims, vars, nv)?, eval_jet2(b, dims, vars, nv)?);
            let mut out = Jet2::constant(a.v + b.v);
            for i in 0..nv {
                out.g[i] = a.g[i] + b.g[i];
                for j in 0..nv {
                    out.h[i][j] = a.h[i][j] + b.h[i][j];
                }
            }
            out
        }
        Node::Sub(a, b) => {
            let (a, b) = (eval_jet2(a, dims, vars, nv)?, eval_jet2(b, dims, vars, nv)?);
            let mut out = Jet2::constant(a.v - b.v);
            for i in 0..nv {
                out.g[i] = a.g[i] - b.g[i];
                for j in 0..nv {
                    out.h[i][j] = a.h[i][j] - b.h[i][j];
                }
            }
            out
        }
        Node::Mul(a, b) => jet2_mul(
            eval_jet2(a, dims, vars, nv)?,
            eval_jet2(b, dims, vars, nv)?,
            nv,
        ),
        Node::Div(a, b) => {
            let (a, b) = (eval_jet2(a, dims, vars, nv)?, eval_jet2(b, dims, vars, nv)?);
            let bv = b.v;
            let recip = jet2_chain((1.0 / bv, -1.0 / (bv * bv), 2.0 / (bv * bv * bv)), b, nv);
            jet2_mul(a, recip, nv)
        }
        Node::Pow(a, n) => {
            let a = eval_jet2(a, dims, vars, nv)?;
            jet2_chain(pow_derivatives(a.v, *n)?, a, nv)
        }
        Node::Neg(a) => {
            let a = eval_jet2(a, dims, vars, nv)?;
            jet2_chain((-a.v, -1.0, 0.0), a, nv)
        }
        Node::Call(f, args) => {
            let u = eval_jet2(&args[0], dims, vars, nv)?;
            match f {
                Func::Abs => {
                    if u.v.abs() <= KINK_TOL {
                        return Err(EvalError::Kink);
                    }
                    jet2_chain((u.v.abs(), u.v.signum(), 0.0), u, nv)
                }
                Func::Min | Func::Max => {
                    let w = eval_jet2(&args[1], dims, vars, nv)?;
                    if (u.v - w.v).abs() <= KINK_TOL {
                        return Err(EvalError::Kink);
                    }
                    let pick_first = match f {
                        Func::Min => u.v < w.v,
                        _ => u.v > w.v,
                    };
                    if pick_first {
                        u
                    } else {
                        w
                    }
                }
                _ => jet2_chain(unary_table(*f, u.v)?, u, nv),
            }
        }
    };
    if jet.v.is_finite() {
        Ok(jet)
    } else {
        Err(EvalError::NonFinite)
    }
}
