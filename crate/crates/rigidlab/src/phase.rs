//! Phase-space calculus: points, scalar fields, the symplectic convention,
//! Poisson brackets, Hamiltonian vector fields and symplecticity checks.
//!
//! The sign convention is fixed once: `E = [[0, I], [-I, 0]]` in the
//! `(q1..qd, p1..pd)` ordering, so that `X_H = (dH/dp, -dH/dq)` and
//! `{q_i, p_j} = delta_ij`.

use std::sync::Arc;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::hamlang::{EvalError, Expression, Smoothness};

/// Cube-root-of-epsilon step rule for central differences.
pub fn fd_step(x: f64) -> f64 {
    (f64::EPSILON).cbrt() * x.abs().max(1.0)
}

#[derive(Debug, Error)]
pub enum PhaseError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("d must be at least 1")]
    DegenerateDimension,
    #[error("coordinates must be finite")]
    NonFinitePoint,
    #[error("gradient unavailable: {0}")]
    Gradient(#[from] EvalError),
    #[error("field is flagged finite-difference-unsafe; refusing second-order stencils")]
    InsufficientDifferentiability,
    #[error("unbounded domain without a declared support box")]
    UnboundedDomain,
    #[error("Jacobian is singular or non-finite at the sample point")]
    BadJacobian,
}

/// A point of `R^{2d}` in the ordering `(q1..qd, p1..pd)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    coords: Vec<f64>,
    d: usize,
}

impl PhasePoint {
    pub fn new(d: usize, coords: Vec<f64>) -> Result<PhasePoint, PhaseError> {
        if d == 0 {
            return Err(PhaseError::DegenerateDimension);
        }
        if coords.len() != 2 * d {
            return Err(PhaseError::DimensionMismatch(format!(
                "expected 2d = {} coordinates, got {}",
                2 * d,
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(PhaseError::NonFinitePoint);
        }
        Ok(PhasePoint { coords, d })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn q(&self) -> &[f64] {
        &self.coords[..self.d]
    }

    pub fn p(&self) -> &[f64] {
        &self.coords[self.d..]
    }
}

/// The standard symplectic matrix `E` with blocks `[[0, I], [-I, 0]]`.
#[derive(Debug, Clone, Copy)]
pub struct SymplecticConvention {
    pub d: usize,
}

impl SymplecticConvention {
    pub fn new(d: usize) -> Result<SymplecticConvention, PhaseError> {
        if d == 0 {
            return Err(PhaseError::DegenerateDimension);
        }
        Ok(SymplecticConvention { d })
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = 2 * self.d;
        let mut e = DMatrix::zeros(n, n);
        for i in 0..self.d {
            e[(i, self.d + i)] = 1.0;
            e[(self.d + i, i)] = -1.0;
        }
        e
    }

    /// `E v` without materializing the matrix: `(v_p, -v_q)`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; 2 * d];
        for i in 0..d {
            out[i] = v[d + i];
            out[d + i] = -v[i];
        }
        out
    }
}

/// How a field's gradient is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientMode {
    Exact,
    FiniteDifference,
    /// Nonsmooth sampled field: first-order stencils are tolerated,
    /// second-order ones are refused.
    FiniteDifferenceUnsafe,
}

/// Evaluation domain of a scalar field over `R^{2d}`.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// Axis-aligned box `[lo_i, hi_i]` (length `2d` each).
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Unit torus `[0,1)^{2d}`.
    Torus { dim: usize },
    /// All of `R^{2d}`; bounded operations require a declared support box.
    Full { dim: usize },
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Box { lo, .. } => lo.len(),
            Domain::Torus { dim } | Domain::Full { dim } => *dim,
        }
    }

    pub fn symmetric_box(dim: usize, radius: f64) -> Domain {
        Domain::Box {
            lo: vec![-radius; dim],
            hi: vec![radius; dim],
        }
    }

    /// Bounds usable for grid sampling, if any.
    pub fn bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            Domain::Box { lo, hi } => Some((lo.clone(), hi.clone())),
            Domain::Torus { dim } => Some((vec![0.0; *dim], vec![1.0; *dim])),
            Domain::Full { .. } => None,
        }
    }
}

type EvalFn = Arc<dyn Fn(&[f64]) -> Result<f64, EvalError> + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>, EvalError> + Send + Sync>;
type HessFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>, EvalError> + Send + Sync>;

/// A Hamiltonian (or generating-function core over phase variables):
/// evaluation plus gradient over a domain, with differentiability metadata.
#[derive(Clone)]
pub struct ScalarField {
    d: usize,
    domain: Domain,
    eval: EvalFn,
    grad: GradFn,
    hess: Option<HessFn>,
    mode: GradientMode,
    smoothness: Smoothness,
    lipschitz: Option<f64>,
    support: Option<(Vec<f64>, Vec<f64>)>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScalarField")
            .field("d", &self.d)
            .field("domain", &self.domain)
            .field("mode", &self.mode)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

fn fd_gradient(eval: &EvalFn, x: &[f64]) -> Result<Vec<f64>, EvalError> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        xp[i] = x[i] + h;
        let fp = (eval)(&xp)?;
        xp[i] = x[i] - h;
        let fm = (eval)(&xp)?;
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

impl ScalarField {
    /// Wrap a parsed expression (with `k = 0`) as an exact-gradient field.
    pub fn from_expression(expr: Expression, domain: Domain) -> Result<ScalarField, PhaseError> {
        let d = expr.dims().d;
        if d == 0 {
            return Err(PhaseError::DegenerateDimension);
        }
        if domain.dim() != 2 * d {
            return Err(PhaseError::DimensionMismatch(format!(
                "domain dimension {} does not match 2d = {}",
                domain.dim(),
                2 * d
            )));
        }
        let smoothness = expr.smoothness();
        let e1 = Arc::new(expr);
        let e2 = e1.clone();
        let e3 = e1.clone();
        let hess: Option<HessFn> = if smoothness == Smoothness::Smooth {
            Some(Arc::new(move |x: &[f64]| {
                e3.value_grad_hess(x, 2 * e3.dims().d).map(|(_, _, h)| h)
            }))
        } else {
            None
        };
        Ok(ScalarField {
            d,
            domain,
            eval: Arc::new(move |x: &[f64]| e1.eval(x)),
            grad: Arc::new(move |x: &[f64]| e2.gradient(x)),
            hess,
            mode: GradientMode::Exact,
            smoothness,
            lipschitz: None,
            support: None,
        })
    }

    /// Wrap a closure; the gradient falls back to central differences.
    pub fn from_fn<F>(d: usize, domain: Domain, f: F) -> Result<ScalarField, PhaseError>
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        if d == 0 {
            return Err(PhaseError::DegenerateDimension);
        }
        let eval: EvalFn = Arc::new(move |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(EvalError::NonFinite)
            }
        });
        let e2 = eval.clone();
        Ok(ScalarField {
            d,
            domain,
            eval,
            grad: Arc::new(move |x: &[f64]| fd_gradient(&e2, x)),
            hess: None,
            mode: GradientMode::FiniteDifference,
            smoothness: Smoothness::Smooth,
            lipschitz: None,
            support: None,
        })
    }

    pub fn with_mode(mut self, mode: GradientMode) -> ScalarField {
        self.mode = mode;
        self
    }

    pub fn with_smoothness(mut self, s: Smoothness) -> ScalarField {
        self.smoothness = s;
        self
    }

    pub fn with_lipschitz(mut self, l: f64) -> ScalarField {
        self.lipschitz = Some(l);
        self
    }

    pub fn with_support(mut self, lo: Vec<f64>, hi: Vec<f64>) -> ScalarField {
        self.support = Some((lo, hi));
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn mode(&self) -> GradientMode {
        self.mode
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        (self.eval)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        (self.grad)(x)
    }

    /// Gradient by the finite-difference step rule, regardless of mode.
    pub fn fd_gradient(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        fd_gradient(&self.eval, x)
    }

    pub fn has_hessian(&self) -> bool {
        self.hess.is_some()
    }

    pub fn hessian(&self, x: &[f64]) -> Option<Result<DMatrix<f64>, EvalError>> {
        self.hess.as_ref().map(|h| (h)(x))
    }

    /// Pointwise scale: `c * H`. Keeps the gradient route of `self`.
    pub fn scaled(&self, c: f64) -> ScalarField {
        let e = self.eval.clone();
        let g = self.grad.clone();
        ScalarField {
            d: self.d,
            domain: self.domain.clone(),
            eval: Arc::new(move |x| (e)(x).map(|v| c * v)),
            grad: Arc::new(move |x| (g)(x).map(|v| v.iter().map(|a| c * a).collect())),
            hess: self.hess.clone().map(|h| -> HessFn {
                Arc::new(move |x: &[f64]| (h)(x).map(|m| m * c))
            }),
            mode: self.mode,
            smoothness: self.smoothness,
            lipschitz: self.lipschitz.map(|l| l * c.abs()),
            support: self.support.clone(),
        }
    }

    /// Pointwise combination `self + c * other`.
    pub fn plus(&self, other: &ScalarField, c: f64) -> Result<ScalarField, PhaseError> {
        if self.d != other.d {
            return Err(PhaseError::DimensionMismatch(
                "fields live on different phase spaces".into(),
            ));
        }
        let (ea, eb) = (self.eval.clone(), other.eval.clone());
        let (ga, gb) = (self.grad.clone(), other.grad.clone());
        let mode = if self.mode == GradientMode::Exact && other.mode == GradientMode::Exact {
            GradientMode::Exact
        } else {
            GradientMode::FiniteDifference
        };
        Ok(ScalarField {
            d: self.d,
            domain: self.domain.clone(),
            eval: Arc::new(move |x| Ok((ea)(x)? + c * (eb)(x)?)),
            grad: Arc::new(move |x| {
                let a = (ga)(x)?;
                let b = (gb)(x)?;
                Ok(a.iter().zip(&b).map(|(u, v)| u + c * v).collect())
            }),
            hess: match (self.hess.clone(), other.hess.clone()) {
                (Some(ha), Some(hb)) => Some(Arc::new(move |x: &[f64]| {
                    Ok((ha)(x)? + (hb)(x)? * c)
                })),
                _ => None,
            },
            mode,
            smoothness: Smoothness::Smooth,
            lipschitz: None,
            support: None,
        })
    }
}

/// `{f, g}(x) = sum_i df/dq_i dg/dp_i - df/dp_i dg/dq_i`.
pub fn poisson_bracket(f: &ScalarField, g: &ScalarField, x: &PhasePoint) -> Result<f64, PhaseError> {
    if f.d() != g.d() || f.d() != x.d() {
        return Err(PhaseError::DimensionMismatch(
            "bracket operands live on different phase spaces".into(),
        ));
    }
    let gf = f.gradient(x.coords())?;
    let gg = g.gradient(x.coords())?;
    Ok(bracket_from_gradients(f.d(), &gf, &gg))
}

pub fn bracket_from_gradients(d: usize, gf: &[f64], gg: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..d {
        acc += gf[i] * gg[d + i] - gf[d + i] * gg[i];
    }
    acc
}

/// `X_H(x) = E DH(x) = (dH/dp, -dH/dq)`.
pub fn hamiltonian_vector_field(h: &ScalarField, x: &PhasePoint) -> Result<Vec<f64>, PhaseError> {
    if h.d() != x.d() {
        return Err(PhaseError::DimensionMismatch(
            "field and point dimensions differ".into(),
        ));
    }
    let g = h.gradient(x.coords())?;
    Ok(SymplecticConvention { d: h.d() }.apply(&g))
}

/// The pointwise bracket `{f, g}` as a new scalar field. The value route
/// uses the operands' own gradients; the derived field's gradient is
/// finite-difference (kink-aware by propagation of the kink signal).
pub fn bracket_field(f: &ScalarField, g: &ScalarField) -> Result<ScalarField, PhaseError> {
    if f.d() != g.d() {
        return Err(PhaseError::DimensionMismatch(
            "bracket operands live on different phase spaces".into(),
        ));
    }
    let d = f.d();
    let (fa, ga) = (f.clone(), g.clone());
    let eval: EvalFn = Arc::new(move |x: &[f64]| {
        let gf = fa.gradient(x)?;
        let gg = ga.gradient(x)?;
        Ok(bracket_from_gradients(d, &gf, &gg))
    });
    let e2 = eval.clone();
    Ok(ScalarField {
        d,
        domain: f.domain().clone(),
        eval,
        grad: Arc::new(move |x: &[f64]| fd_gradient(&e2, x)),
        hess: None,
        mode: GradientMode::FiniteDifference,
        smoothness: Smoothness::C0Lipschitz,
        lipschitz: None,
        support: None,
    })
}

pub fn bracket_gradient(
    f: &ScalarField,
    g: &ScalarField,
    x: &[f64],
) -> Result<Vec<f64>, PhaseError> {
    let d = f.d();
    if f.has_hessian() && g.has_hessian() {
        // exact: partial_m {f,g} from gradients and Hessians
        let gf = f.gradient(x)?;
        let gg = g.gradient(x)?;
        let hf = f.hessian(x).unwrap()?;
        let hg = g.hessian(x).unwrap()?;
        let mut out = vec![0.0; 2 * d];
        for m in 0..2 * d {
            let mut acc = 0.0;
            for i in 0..d {
                acc += hf[(i, m)] * gg[d + i] + gf[i] * hg[(d + i, m)];
                acc -= hf[(d + i, m)] * gg[i] + gf[d + i] * hg[(i, m)];
            }
            out[m] = acc;
        }
        Ok(out)
    } else {
        // nested central differences of the bracket value, one Richardson level
        let fa = f.clone();
        let ga = g.clone();
        let val = move |y: &[f64]| -> Result<f64, EvalError> {
            let gf = fa.gradient(y)?;
            let gg = ga.gradient(y)?;
            Ok(bracket_from_gradients(d, &gf, &gg))
        };
        let mut out = vec![0.0; 2 * d];
        let mut y = x.to_vec();
        for m in 0..2 * d {
            let h = fd_step(x[m]);
            let mut central = |step: f64| -> Result<f64, EvalError> {
                y[m] = x[m] + step;
                let fp = val(&y)?;
                y[m] = x[m] - step;
                let fm = val(&y)?;
                y[m] = x[m];
                Ok((fp - fm) / (2.0 * step))
            };
            let d_h = central(h)?;
            let d_h2 = central(h / 2.0)?;
            out[m] = (4.0 * d_h2 - d_h) / 3.0;
        }
        Ok(out)
    }
}

/// Absolute value of the cyclic Jacobi sum `{f,{g,h}} + {g,{h,f}} + {h,{f,g}}`.
pub fn jacobi_residual(
    f: &ScalarField,
    g: &ScalarField,
    h: &ScalarField,
    x: &PhasePoint,
) -> Result<f64, PhaseError> {
    for field in [f, g, h] {
        if field.mode() == GradientMode::FiniteDifferenceUnsafe {
            return Err(PhaseError::InsufficientDifferentiability);
        }
        if field.d() != x.d() {
            return Err(PhaseError::DimensionMismatch(
                "field and point dimensions differ".into(),
            ));
        }
    }
    let d = x.d();
    let term = |a: &ScalarField, b: &ScalarField, c: &ScalarField| -> Result<f64, PhaseError> {
        // {a, {b, c}}
        let ga = a.gradient(x.coords())?;
        let gbc = bracket_gradient(b, c, x.coords())?;
        Ok(bracket_from_gradients(d, &ga, &gbc))
    };
    Ok((term(f, g, h)? + term(g, h, f)? + term(h, f, g)?).abs())
}

type MapFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

/// A sampled diffeomorphism of `R^{2d}`: forward map, Jacobian, optional
/// inverse.
#[derive(Clone)]
pub struct DiffeoSample {
    d: usize,
    forward: MapFn,
    jacobian: JacFn,
    inverse: Option<MapFn>,
}

impl DiffeoSample {
    pub fn new<F, J>(d: usize, forward: F, jacobian: J) -> DiffeoSample
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        J: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        DiffeoSample {
            d,
            forward: Arc::new(forward),
            jacobian: Arc::new(jacobian),
            inverse: None,
        }
    }

    /// Forward map with the Jacobian taken by central differences.
    pub fn from_map<F>(d: usize, forward: F) -> DiffeoSample
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        let f = Arc::new(forward);
        let f2 = f.clone();
        let jac = move |x: &[f64]| -> DMatrix<f64> {
            let n = x.len();
            let mut j = DMatrix::zeros(n, n);
            let mut y = x.to_vec();
            for col in 0..n {
                let h = fd_step(x[col]);
                y[col] = x[col] + h;
                let fp = f2(&y);
                y[col] = x[col] - h;
                let fm = f2(&y);
                y[col] = x[col];
                for row in 0..n {
                    j[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
                }
            }
            j
        };
        DiffeoSample {
            d,
            forward: Arc::new(move |x: &[f64]| f(x)),
            jacobian: Arc::new(jac),
            inverse: None,
        }
    }

    pub fn identity(d: usize) -> DiffeoSample {
        DiffeoSample {
            d,
            forward: Arc::new(|x: &[f64]| x.to_vec()),
            jacobian: Arc::new(|x: &[f64]| DMatrix::identity(x.len(), x.len())),
            inverse: Some(Arc::new(|x: &[f64]| x.to_vec())),
        }
    }

    /// Linear map given by a `2d x 2d` matrix.
    pub fn linear(d: usize, m: DMatrix<f64>) -> DiffeoSample {
        let m2 = m.clone();
        let inv = m.clone().try_inverse();
        DiffeoSample {
            d,
            forward: Arc::new(move |x: &[f64]| {
                let v = nalgebra::DVector::from_column_slice(x);
                (&m * v).iter().copied().collect()
            }),
            jacobian: Arc::new(move |_x: &[f64]| m2.clone()),
            inverse: inv.map(|mi| -> MapFn {
                Arc::new(move |x: &[f64]| {
                    let v = nalgebra::DVector::from_column_slice(x);
                    (&mi * v).iter().copied().collect()
                })
            }),
        }
    }

    pub fn with_inverse<F>(mut self, inverse: F) -> DiffeoSample
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.inverse = Some(Arc::new(inverse));
        self
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (self.forward)(x)
    }

    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        (self.jacobian)(x)
    }

    pub fn inverse(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.inverse.as_ref().map(|f| (f)(x))
    }
}

/// Frobenius norm of `DPhi^T E DPhi - E`; zero iff symplectic at `x`.
pub fn symplecticity_defect(phi: &DiffeoSample, x: &PhasePoint) -> Result<f64, PhaseError> {
    let j = phi.jacobian(x.coords());
    if j.iter().any(|v| !v.is_finite()) {
        return Err(PhaseError::BadJacobian);
    }
    let e = SymplecticConvention { d: phi.d() }.matrix();
    Ok((j.transpose() * &e * &j - e).norm())
}

/// Entry `(i, j)` is the Poisson bracket of the i-th and j-th component
/// functions of `Phi` at `x`: the table `DPhi * E * DPhi^T`. For
/// symplectic `Phi` this equals `E`.
pub fn bracket_relation_table(phi: &DiffeoSample, x: &PhasePoint) -> Result<DMatrix<f64>, PhaseError> {
    let j = phi.jacobian(x.coords());
    if j.iter().any(|v| !v.is_finite()) {
        return Err(PhaseError::BadJacobian);
    }
    let e = SymplecticConvention { d: phi.d() }.matrix();
    Ok(&j * e * j.transpose())
}

/// `max - min` of `H` over a uniform sample grid on its bounded domain
/// (or declared support box).
pub fn c0_norm(h: &ScalarField, grid_resolution: usize) -> Result<f64, PhaseError> {
    let (lo, hi) = match h.domain().bounds() {
        Some(b) => b,
        None => match &h.support {
            Some((lo, hi)) => (lo.clone(), hi.clone()),
            None => return Err(PhaseError::UnboundedDomain),
        },
    };
    let torus = matches!(h.domain(), Domain::Torus { .. });
    let dim = lo.len();
    let res = grid_resolution.max(1);
    let points_per_axis = if torus { res } else { res + 1 };
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    loop {
        for a in 0..dim {
            let frac = idx[a] as f64 / res as f64;
            x[a] = lo[a] + (hi[a] - lo[a]) * frac;
        }
        let v = h.eval(&x)?;
        min = min.min(v);
        max = max.max(v);
        // odometer increment
        let mut a = 0;
        loop {
            if a == dim {
                return Ok(max - min);
            }
            idx[a] += 1;
            if idx[a] < points_per_axis {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamlang::{Dims, Expression};

    fn expr_field(src: &str, d: usize) -> ScalarField {
        let e = Expression::parse(src, Dims::phase(d)).unwrap();
        ScalarField::from_expression(e, Domain::Full { dim: 2 * d }).unwrap()
    }

    fn pt(coords: &[f64]) -> PhasePoint {
        PhasePoint::new(coords.len() / 2, coords.to_vec()).unwrap()
    }

    #[test]
    fn canonical_pair_bracket_is_one() {
        let f = expr_field("q1", 1);
        let g = expr_field("p1", 1);
        for x in [[0.3, -1.2], [5.0, 2.0]] {
            assert_eq!(poisson_bracket(&f, &g, &pt(&x)).unwrap(), 1.0);
        }
    }

    #[test]
    fn bracket_antisymmetry_forces_zero_on_diagonal() {
        let h = expr_field("p1^2/2 + cos(q1)", 1);
        let x = pt(&[0.7, 0.4]);
        assert_eq!(poisson_bracket(&h, &h, &x).unwrap(), 0.0);
    }

    #[test]
    fn pendulum_bracket_matches_symbolic() {
        // oracle: {p^2/2 + cos q, p} = -sin q, at q = pi/2 gives -1
        let f = expr_field("p1^2/2 + cos(q1)", 1);
        let g = expr_field("p1", 1);
        let x = pt(&[std::f64::consts::FRAC_PI_2, 0.0]);
        assert!((poisson_bracket(&f, &g, &x).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn vector_field_convention() {
        let h = expr_field("p1^2/2 + cos(q1)", 1);
        let v = hamiltonian_vector_field(&h, &pt(&[0.0, 1.0])).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-15);
        assert!(v[1].abs() < 1e-15);
        let c = expr_field("3", 1);
        assert_eq!(hamiltonian_vector_field(&c, &pt(&[1.0, 2.0])).unwrap(), vec![0.0, 0.0]);
        let p = expr_field("p1", 1);
        assert_eq!(hamiltonian_vector_field(&p, &pt(&[1.0, 2.0])).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn jacobi_identity_polynomials() {
        let f = expr_field("q1", 1);
        let g = expr_field("p1", 1);
        let h = expr_field("q1*p1", 1);
        let r = jacobi_residual(&f, &g, &h, &pt(&[0.4, -0.9])).unwrap();
        assert!(r < 1e-10, "residual {}", r);

        let c1 = expr_field("1", 1);
        let c2 = expr_field("2", 1);
        let c3 = expr_field("3", 1);
        assert_eq!(jacobi_residual(&c1, &c2, &c3, &pt(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn symplectic_convention_invariants() {
        let e = SymplecticConvention::new(3).unwrap().matrix();
        let id = DMatrix::identity(6, 6);
        assert_eq!(&e * &e, -&id);
        assert_eq!(e.transpose(), -e.clone());
    }

    #[test]
    fn defect_identity_and_scaling() {
        let x = pt(&[0.3, 0.8]);
        assert_eq!(symplecticity_defect(&DiffeoSample::identity(1), &x).unwrap(), 0.0);
        // (q,p) -> (2q,p): DPhi^T E DPhi = 2E, defect = |E|_F = sqrt(2)
        let scale = DiffeoSample::linear(1, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
        let defect = symplecticity_defect(&scale, &x).unwrap();
        assert!((defect - 2.0_f64.sqrt()).abs() < 1e-12);
        let table = bracket_relation_table(&scale, &x).unwrap();
        assert!((table[(0, 1)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn shear_is_symplectic() {
        // (q,p) -> (q + f(p), p) has analytic Jacobian [[1, f'],[0, 1]]
        let shear = DiffeoSample::from_map(1, |x: &[f64]| vec![x[0] + x[1].tanh(), x[1]]);
        let defect = symplecticity_defect(&shear, &pt(&[0.2, -0.4])).unwrap();
        assert!(defect < 1e-9, "defect {}", defect);
    }

    #[test]
    fn bracket_table_identity_is_e() {
        let table = bracket_relation_table(&DiffeoSample::identity(2), &pt(&[0.1, 0.2, 0.3, 0.4]))
            .unwrap();
        let e = SymplecticConvention::new(2).unwrap().matrix();
        assert_eq!(table, e);
    }

    #[test]
    fn c0_norm_cases() {
        let c = expr_field("42", 1);
        let c = ScalarField {
            domain: Domain::Torus { dim: 2 },
            ..c
        };
        assert_eq!(c0_norm(&c, 16).unwrap(), 0.0);

        let e = Expression::parse("sin(6.283185307179586*q1)", Dims::phase(1)).unwrap();
        let s = ScalarField::from_expression(e, Domain::Torus { dim: 2 }).unwrap();
        let n = c0_norm(&s, 256).unwrap();
        assert!((n - 2.0).abs() < 1e-3, "norm {}", n);

        let f = expr_field("q1", 1);
        assert!(matches!(c0_norm(&f, 8), Err(PhaseError::UnboundedDomain)));
    }
}
