//! Generating functions quadratic at infinity over the torus bases T^1, T^2:
//! construction from base functions or grids, stabilization, fiberwise
//! equivalence moves, the difference object `S1 (-) S2`, and wavefront
//! (Lagrangian) extraction by Newton polish of fiber critical points.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamlang::{Dims, EvalError, Expression};
use crate::phase::fd_step;

#[derive(Debug, Error)]
pub enum GfqiError {
    #[error("matrix is not symmetric within 1e-12")]
    NotSymmetric,
    #[error("quadratic form is degenerate: eigenvalue {0:.3e} within 1e-9 of zero")]
    Degenerate(f64),
    #[error("base function is not 1-periodic in q{0}")]
    NonPeriodic(usize),
    #[error("base dimensions differ: {0} vs {1}")]
    BaseMismatch(usize, usize),
    #[error("expression must depend only on q and xi variables")]
    BadVariables,
    #[error("fiber diffeomorphism is not the identity outside the cutoff (moved a point at |xi| = {0:.3})")]
    DiffeoNotIdentityOutside(f64),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("bad grid data: {0}")]
    BadGrid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// A nondegenerate symmetric quadratic form with its negative index.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    mat: DMatrix<f64>,
    neg_index: usize,
}

impl QuadraticForm {
    pub fn new(mat: DMatrix<f64>) -> Result<QuadraticForm, GfqiError> {
        let k = mat.nrows();
        assert_eq!(k, mat.ncols());
        for i in 0..k {
            for j in 0..k {
                if (mat[(i, j)] - mat[(j, i)]).abs() > 1e-12 {
                    return Err(GfqiError::NotSymmetric);
                }
            }
        }
        let sym = 0.5 * (&mat + mat.transpose());
        let eig = sym.clone().symmetric_eigen();
        let mut neg_index = 0;
        for ev in eig.eigenvalues.iter() {
            if ev.abs() < 1e-9 {
                return Err(GfqiError::Degenerate(*ev));
            }
            if *ev < 0.0 {
                neg_index += 1;
            }
        }
        Ok(QuadraticForm {
            mat: sym,
            neg_index,
        })
    }

    pub fn diagonal(entries: &[f64]) -> Result<QuadraticForm, GfqiError> {
        QuadraticForm::new(DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(
            entries,
        )))
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn neg_index(&self) -> usize {
        self.neg_index
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// `xi^T Q xi`
    pub fn eval(&self, xi: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += xi[i] * self.mat[(i, j)] * xi[j];
            }
        }
        acc
    }

    pub fn gradient(&self, xi: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| 2.0 * (0..self.dim()).map(|j| self.mat[(i, j)] * xi[j]).sum::<f64>())
            .collect()
    }

    pub fn negated(&self) -> QuadraticForm {
        QuadraticForm {
            mat: -self.mat.clone(),
            neg_index: self.dim() - self.neg_index,
        }
    }

    pub fn block_diag(&self, other: &QuadraticForm) -> QuadraticForm {
        let (a, b) = (self.dim(), other.dim());
        let mut mat = DMatrix::zeros(a + b, a + b);
        mat.view_mut((0, 0), (a, a)).copy_from(&self.mat);
        mat.view_mut((a, a), (b, b)).copy_from(&other.mat);
        QuadraticForm {
            mat,
            neg_index: self.neg_index + other.neg_index,
        }
    }
}

type CoreEval = Arc<dyn Fn(&[f64]) -> Result<f64, EvalError> + Send + Sync>;
type CoreGrad = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>, EvalError> + Send + Sync>;

/// A generating function quadratic at infinity `S(q; xi)` on `T^n x R^k`.
///
/// The core is an evaluator over the `n + k` inputs `(q, xi)`. Objects of
/// difference type (from [`ominus`]) match their quadratic form only where
/// both fiber blocks exceed their cutoffs; downstream filtrations handle
/// that via saturation on a bounded box.
#[derive(Clone)]
pub struct Gfqi {
    n: usize,
    k: usize,
    eval: CoreEval,
    grad: CoreGrad,
    quad: Option<QuadraticForm>,
    cutoff: f64,
    difference_type: bool,
    /// Base expression for fiberless objects built from one; lets flow
    /// images be formed analytically.
    base: Option<Expression>,
    pub label: String,
}

impl Gfqi {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn quad(&self) -> Option<&QuadraticForm> {
        self.quad.as_ref()
    }

    pub fn is_difference_type(&self) -> bool {
        self.difference_type
    }

    /// Negative index of the fiber quadratic form (0 when fiberless).
    pub fn neg_index(&self) -> usize {
        self.quad.as_ref().map_or(0, |q| q.neg_index())
    }

    pub fn eval(&self, q: &[f64], xi: &[f64]) -> Result<f64, EvalError> {
        debug_assert_eq!(q.len(), self.n);
        debug_assert_eq!(xi.len(), self.k);
        let mut x = Vec::with_capacity(self.n + self.k);
        x.extend_from_slice(q);
        x.extend_from_slice(xi);
        (self.eval)(&x)
    }

    /// Gradient split as `(dS/dq, dS/dxi)`.
    pub fn gradient(&self, q: &[f64], xi: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let mut x = Vec::with_capacity(self.n + self.k);
        x.extend_from_slice(q);
        x.extend_from_slice(xi);
        let g = (self.grad)(&x)?;
        Ok((g[..self.n].to_vec(), g[self.n..].to_vec()))
    }

    /// Fiberless generating function of `L = graph(df)`.
    pub fn from_base_function(f: &Expression) -> Result<Gfqi, GfqiError> {
        let n = f.dims().d;
        if f.uses_momentum() || f.uses_time() || f.uses_fiber() {
            return Err(GfqiError::BadVariables);
        }
        check_periodic(f, n)?;
        let (eval, grad) = expression_core(f.clone(), n, 0);
        Ok(Gfqi {
            n,
            k: 0,
            eval,
            grad,
            quad: None,
            cutoff: 1.0,
            difference_type: false,
            base: Some(f.clone()),
            label: format!("graph(d({}))", f.canonical()),
        })
    }

    /// GFQI from an expression in `q1..qn, xi1..xik` with an explicit
    /// quadratic form and cutoff.
    pub fn from_expression(
        s: &Expression,
        quad: QuadraticForm,
        cutoff: f64,
    ) -> Result<Gfqi, GfqiError> {
        let n = s.dims().d;
        let k = s.dims().k;
        if s.uses_momentum() || s.uses_time() {
            return Err(GfqiError::BadVariables);
        }
        assert_eq!(quad.dim(), k);
        check_periodic(s, n)?;
        let (eval, grad) = expression_core(s.clone(), n, k);
        Ok(Gfqi {
            n,
            k,
            eval,
            grad,
            quad: Some(quad),
            cutoff,
            difference_type: false,
            base: None,
            label: s.canonical(),
        })
    }

    /// Constant-zero GFQI representing the zero section.
    pub fn zero_section(n: usize) -> Gfqi {
        let f = Expression::parse("0", Dims::phase(n)).unwrap();
        let mut g = Gfqi::from_base_function(&f).unwrap();
        g.label = "zero-section".to_string();
        g
    }

    /// Base expression for fiberless objects built directly from one.
    pub fn base_function(&self) -> Option<&Expression> {
        self.base.as_ref()
    }

    /// `S + c`: wavefront and all critical values shift by exactly `c`.
    pub fn add_constant(&self, c: f64) -> Gfqi {
        let e = self.eval.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |x| Ok(e(x)? + c));
        out.base = self.base.as_ref().map(|f| {
            Expression::parse(&format!("({}) + ({})", f.canonical(), c), f.dims())
                .expect("shifting a parsed expression by a constant reparses")
        });
        out.label = format!("({}) + {}", self.label, c);
        out
    }

    /// `-S`: negated core and quadratic form; negative index becomes
    /// `k - neg_index`.
    pub fn negated(&self) -> Gfqi {
        let e = self.eval.clone();
        let g = self.grad.clone();
        let mut out = self.clone();
        out.eval = Arc::new(move |x| Ok(-e(x)?));
        out.grad = Arc::new(move |x| Ok(g(x)?.iter().map(|v| -v).collect()));
        out.quad = self.quad.as_ref().map(|q| q.negated());
        out.base = self.base.as_ref().map(|f| {
            Expression::parse(&format!("-({})", f.canonical()), f.dims())
                .expect("negating a parsed expression reparses")
        });
        out.label = format!("-({})", self.label);
        out
    }
}

/// `S1 (+) S2` with separate fiber blocks: core `S1(q;xi1) + S2(q;xi2)`,
/// quadratic form `blockdiag(Q1, Q2)`.
pub fn oplus(s1: &Gfqi, s2: &Gfqi) -> Result<Gfqi, GfqiError> {
    let sum = ominus(s1, &s2.negated())?;
    Ok(Gfqi {
        difference_type: false,
        label: format!("({}) oplus ({})", s1.label, s2.label),
        ..sum
    })
}

impl Gfqi {

    /// Stabilization `S(q;xi) + eta^T B eta` by `m = B.dim()` new fiber
    /// variables.
    pub fn stabilize(&self, b: &QuadraticForm) -> Gfqi {
        let m = b.dim();
        let (n, k) = (self.n, self.k);
        let e = self.eval.clone();
        let g = self.grad.clone();
        let (b1, b2) = (b.clone(), b.clone());
        let quad = match &self.quad {
            Some(q) => q.block_diag(b),
            None => b.clone(),
        };
        Gfqi {
            n,
            k: k + m,
            eval: Arc::new(move |x| {
                let eta = &x[n + k..];
                Ok(e(&x[..n + k])? + b1.eval(eta))
            }),
            grad: Arc::new(move |x| {
                let eta = &x[n + k..];
                let mut grad = g(&x[..n + k])?;
                grad.extend(b2.gradient(eta));
                Ok(grad)
            }),
            quad: Some(quad),
            cutoff: self.cutoff,
            difference_type: self.difference_type,
            base: None,
            label: format!("stab({})", self.label),
        }
    }

    /// Fiberwise equivalence move: reparametrize the fiber by a
    /// diffeomorphism that is the identity outside the cutoff, or add a
    /// constant.
    pub fn equivalence_move(&self, mv: &EquivalenceMove) -> Result<Gfqi, GfqiError> {
        match mv {
            EquivalenceMove::AddConstant(c) => Ok(self.add_constant(*c)),
            EquivalenceMove::FiberDiffeo(phi) => {
                let (n, k) = (self.n, self.k);
                // precondition: identity for |xi| > cutoff, sampled
                let mut rng = ChaCha8Rng::seed_from_u64(0x6f75745f6964);
                for _ in 0..200 {
                    let q: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                    let mut xi: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.5).collect();
                    let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                    let r = self.cutoff * (1.0 + rng.gen::<f64>());
                    for v in xi.iter_mut() {
                        *v *= r / norm;
                    }
                    let moved = phi(&q, &xi);
                    if moved
                        .iter()
                        .zip(&xi)
                        .any(|(a, b)| (a - b).abs() > 1e-12)
                    {
                        return Err(GfqiError::DiffeoNotIdentityOutside(r));
                    }
                }
                let e = self.eval.clone();
                let phi = phi.clone();
                let phi2 = phi.clone();
                let eval: CoreEval = Arc::new(move |x: &[f64]| {
                    let xi = phi(&x[..n], &x[n..]);
                    let mut y = x[..n].to_vec();
                    y.extend(xi);
                    e(&y)
                });
                let eval2 = eval.clone();
                // composite gradient by central differences (the diffeo is
                // an opaque closure)
                let grad: CoreGrad = Arc::new(move |x: &[f64]| {
                    let mut g = vec![0.0; x.len()];
                    let mut xp = x.to_vec();
                    for i in 0..x.len() {
                        let h = fd_step(x[i]);
                        xp[i] = x[i] + h;
                        let up = eval2(&xp)?;
                        xp[i] = x[i] - h;
                        let dn = eval2(&xp)?;
                        xp[i] = x[i];
                        g[i] = (up - dn) / (2.0 * h);
                    }
                    Ok(g)
                });
                let _ = phi2;
                Ok(Gfqi {
                    n,
                    k,
                    eval,
                    grad,
                    quad: self.quad.clone(),
                    cutoff: self.cutoff,
                    difference_type: self.difference_type,
                    base: None,
                    label: format!("fiberdiffeo({})", self.label),
                })
            }
        }
    }

    /// Max over sampled far fiber points of the xi-dependence of `S - Q`.
    /// Samples put every fiber coordinate beyond the cutoff — the region
    /// where quadraticity at infinity survives stabilization (a stabilized
    /// function still depends on the old fiber block near zero, so mere
    /// largeness of the fiber norm is not enough).
    pub fn quadraticity_defect(&self, samples: usize, seed: u64) -> Result<f64, GfqiError> {
        if self.k == 0 {
            return Ok(0.0);
        }
        let quad = self.quad.as_ref().expect("k > 0 implies a quadratic form");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let q: Vec<f64> = (0..self.n).map(|_| rng.gen::<f64>()).collect();
            let rest = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..self.k)
                    .map(|_| {
                        let mag = self.cutoff * (1.1 + rng.gen::<f64>());
                        if rng.gen::<bool>() {
                            mag
                        } else {
                            -mag
                        }
                    })
                    .collect()
            };
            let xi_a = rest(&mut rng);
            let xi_b = rest(&mut rng);
            let fa = self.eval(&q, &xi_a)? - quad.eval(&xi_a);
            let fb = self.eval(&q, &xi_b)? - quad.eval(&xi_b);
            worst = worst.max((fa - fb).abs());
        }
        Ok(worst)
    }
}

pub type FiberDiffeo = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

pub enum EquivalenceMove {
    AddConstant(f64),
    FiberDiffeo(FiberDiffeo),
}

impl EquivalenceMove {
    pub fn identity() -> EquivalenceMove {
        EquivalenceMove::FiberDiffeo(Arc::new(|_q: &[f64], xi: &[f64]| xi.to_vec()))
    }
}

/// `S1 (-) S2`: fiber `R^{k1+k2}`, core `S1(q;xi1) - S2(q;xi2)`, quadratic
/// form `blockdiag(Q1, -Q2)`. The result is flagged difference-type.
pub fn ominus(s1: &Gfqi, s2: &Gfqi) -> Result<Gfqi, GfqiError> {
    if s1.n != s2.n {
        return Err(GfqiError::BaseMismatch(s1.n, s2.n));
    }
    let n = s1.n;
    let (k1, k2) = (s1.k, s2.k);
    let (e1, e2) = (s1.eval.clone(), s2.eval.clone());
    let (g1, g2) = (s1.grad.clone(), s2.grad.clone());
    let quad = match (&s1.quad, &s2.quad) {
        (Some(a), Some(b)) => Some(a.block_diag(&b.negated())),
        (Some(a), None) => Some(a.clone()),
        (None, Some(b)) => Some(b.negated()),
        (None, None) => None,
    };
    Ok(Gfqi {
        n,
        k: k1 + k2,
        eval: Arc::new(move |x| {
            let mut y1 = x[..n].to_vec();
            y1.extend_from_slice(&x[n..n + k1]);
            let mut y2 = x[..n].to_vec();
            y2.extend_from_slice(&x[n + k1..]);
            Ok(e1(&y1)? - e2(&y2)?)
        }),
        grad: Arc::new(move |x| {
            let mut y1 = x[..n].to_vec();
            y1.extend_from_slice(&x[n..n + k1]);
            let mut y2 = x[..n].to_vec();
            y2.extend_from_slice(&x[n + k1..]);
            let a = g1(&y1)?;
            let b = g2(&y2)?;
            let mut g = vec![0.0; n + k1 + k2];
            for i in 0..n {
                g[i] = a[i] - b[i];
            }
            g[n..n + k1].copy_from_slice(&a[n..]);
            for j in 0..k2 {
                g[n + k1 + j] = -b[n + j];
            }
            Ok(g)
        }),
        quad,
        cutoff: s1.cutoff.max(s2.cutoff),
        difference_type: true,
        base: None,
        label: format!("({}) ominus ({})", s1.label, s2.label),
    })
}

fn check_periodic(s: &Expression, n: usize) -> Result<(), GfqiError> {
    let dims = s.dims();
    let nvars = dims.nvars();
    let mut rng = ChaCha8Rng::seed_from_u64(0x706572696f64);
    for axis in 0..n {
        for _ in 0..20 {
            let mut x: Vec<f64> = (0..nvars).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let v0 = s.eval(&x).map_err(GfqiError::Eval)?;
            x[axis] += 1.0;
            let v1 = s.eval(&x).map_err(GfqiError::Eval)?;
            if (v1 - v0).abs() > 1e-12 * (1.0 + v0.abs()) {
                return Err(GfqiError::NonPeriodic(axis + 1));
            }
        }
    }
    Ok(())
}

/// Adapt an `Expression` in `(q, xi)` to a core over `n + k` packed inputs.
fn expression_core(s: Expression, n: usize, k: usize) -> (CoreEval, CoreGrad) {
    let dims = s.dims();
    let pack = move |x: &[f64]| -> Vec<f64> {
        // expression layout: q(1..d), p(1..d), xi(1..k), t
        let mut full = vec![0.0; dims.nvars()];
        full[..n].copy_from_slice(&x[..n]);
        for j in 0..k {
            full[2 * dims.d + j] = x[n + j];
        }
        full
    };
    let s2 = s.clone();
    let eval: CoreEval = Arc::new(move |x| s.eval(&pack(x)));
    let d = dims.d;
    let grad: CoreGrad = Arc::new(move |x| {
        let full = pack(x);
        let g = s2.gradient_n(&full, 2 * d + k)?;
        let mut out = Vec::with_capacity(n + k);
        out.extend_from_slice(&g[..n]);
        out.extend_from_slice(&g[2 * d..2 * d + k]);
        Ok(out)
    });
    (eval, grad)
}

/// Points of the wavefront `{(q, dS/dq) : dS/dxi = 0}` with the worst
/// Newton residual recorded.
#[derive(Debug, Clone)]
pub struct WavefrontSample {
    pub points: Vec<(Vec<f64>, Vec<f64>)>,
    pub max_residual: f64,
    /// Set when fiber critical-point search failed at every seed.
    pub empty_warning: bool,
}

impl WavefrontSample {
    /// `sup_q |p(q) - other_p(q)|` matching points by the q coordinate.
    pub fn sup_p_distance(&self, other: &WavefrontSample) -> f64 {
        let mut sup = 0.0f64;
        for (q, p) in &self.points {
            let mut best = f64::INFINITY;
            for (q2, p2) in &other.points {
                let dq: f64 = q
                    .iter()
                    .zip(q2)
                    .map(|(a, b)| torus_dist(*a, *b))
                    .fold(0.0, f64::max);
                if dq < 1e-9 {
                    let dp = p
                        .iter()
                        .zip(p2)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    best = best.min(dp);
                }
            }
            if best.is_finite() {
                sup = sup.max(best);
            }
        }
        sup
    }
}

fn torus_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Scan `T^n x [-R, R]^k` with `R = cutoff + 1`, Newton-polish fiber
/// critical points, and return the wavefront sample.
pub fn wavefront(s: &Gfqi, resolution: usize, residual_tol: f64) -> Result<WavefrontSample, GfqiError> {
    use rayon::prelude::*;

    let n = s.n();
    let k = s.k();
    if k == 0 {
        // fiberless: every q is a wavefront point with p = Df(q)
        let qs = torus_grid(n, resolution);
        let mut points = Vec::with_capacity(qs.len());
        for q in qs {
            let (dq, _) = s.gradient(&q, &[])?;
            points.push((q, dq));
        }
        return Ok(WavefrontSample {
            points,
            max_residual: 0.0,
            empty_warning: false,
        });
    }

    let r = s.cutoff() + 1.0;
    let fiber_res = resolution.min(64).max(8);
    let spacing = (2.0 * r / fiber_res as f64).max(1.0 / resolution as f64);
    let qs = torus_grid(n, resolution);

    // Lipschitz estimate of |dS/dxi| over a coarse scan, for seeding
    let mut lip = 0.0f64;
    {
        let coarse = fiber_grid(k, r, 8);
        for q in qs.iter().step_by((qs.len() / 16).max(1)) {
            for xi in &coarse {
                let (_, dxi) = s.gradient(q, xi)?;
                lip = lip.max(norm(&dxi));
            }
        }
        lip = lip.max(1.0);
    }
    let seed_tol = 10.0 * spacing * lip;

    let fiber_points = fiber_grid(k, r, fiber_res);
    let per_q: Result<Vec<Vec<(Vec<f64>, Vec<f64>, f64)>>, GfqiError> = qs
        .par_iter()
        .map(|q| {
            let mut found: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
            for xi0 in &fiber_points {
                let (_, dxi) = s.gradient(q, xi0).map_err(GfqiError::Eval)?;
                if norm(&dxi) >= seed_tol {
                    continue;
                }
                if let Some((xi, res)) = newton_polish(s, q, xi0, residual_tol)? {
                    if xi.iter().any(|v| v.abs() > r + 1e-6) {
                        continue;
                    }
                    // dedup per q at 1e-6 in xi
                    if found
                        .iter()
                        .any(|(e, _, _)| e.iter().zip(&xi).all(|(a, b)| (a - b).abs() < 1e-6))
                    {
                        continue;
                    }
                    let (dq, _) = s.gradient(q, &xi).map_err(GfqiError::Eval)?;
                    found.push((xi, dq, res));
                }
            }
            Ok(found)
        })
        .collect();
    let per_q = per_q?;

    let mut points = Vec::new();
    let mut max_residual = 0.0f64;
    for (q, found) in qs.into_iter().zip(per_q) {
        for (_xi, p, res) in found {
            max_residual = max_residual.max(res);
            points.push((q.clone(), p));
        }
    }
    let empty_warning = points.is_empty();
    Ok(WavefrontSample {
        points,
        max_residual,
        empty_warning,
    })
}

/// Damped Newton on `dS/dxi = 0` at fixed `q`; at most 20 iterations,
/// step halving on residual increase.
fn newton_polish(
    s: &Gfqi,
    q: &[f64],
    xi0: &[f64],
    tol: f64,
) -> Result<Option<(Vec<f64>, f64)>, GfqiError> {
    let k = s.k();
    let mut xi = xi0.to_vec();
    let (_, mut dxi) = s.gradient(q, &xi).map_err(GfqiError::Eval)?;
    let mut res = norm(&dxi);
    for _ in 0..20 {
        if res <= tol {
            return Ok(Some((xi, res)));
        }
        // fiber Hessian by central differences of the xi gradient
        let mut hess = DMatrix::zeros(k, k);
        for j in 0..k {
            let h = fd_step(xi[j]);
            let mut up = xi.clone();
            up[j] += h;
            let mut dn = xi.clone();
            dn[j] -= h;
            let (_, gu) = s.gradient(q, &up).map_err(GfqiError::Eval)?;
            let (_, gd) = s.gradient(q, &dn).map_err(GfqiError::Eval)?;
            for i in 0..k {
                hess[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        let rhs = nalgebra::DVector::from_row_slice(&dxi);
        let step = match hess.lu().solve(&rhs) {
            Some(st) => st,
            None => return Ok(None),
        };
        let mut scale = 1.0;
        loop {
            let cand: Vec<f64> = (0..k).map(|i| xi[i] - scale * step[i]).collect();
            let (_, dc) = s.gradient(q, &cand).map_err(GfqiError::Eval)?;
            let rc = norm(&dc);
            if rc < res || scale < 1.0 / 32.0 {
                xi = cand;
                dxi = dc;
                res = rc;
                break;
            }
            scale *= 0.5;
        }
    }
    if res <= tol {
        Ok(Some((xi, res)))
    } else {
        Ok(None)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Uniform grid on `T^n`: `resolution` points per axis in `[0, 1)`.
pub fn torus_grid(n: usize, resolution: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for base in &out {
            for i in 0..resolution {
                let mut q = base.clone();
                q.push(i as f64 / resolution as f64);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn fiber_grid(k: usize, r: f64, res: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for base in &out {
            for i in 0..=res {
                let mut xi = base.clone();
                xi.push(-r + 2.0 * r * i as f64 / res as f64);
                next.push(xi);
            }
        }
        out = next;
    }
    out
}

/// Header of the grid-sampled GFQI interchange format. The sample file is
/// dense little-endian `f64`, row-major with the last axis fastest: the
/// `n` torus axes first (`resolutions[a]` samples at `i/resolutions[a]`),
/// then the `k` fiber axes (`resolutions[n+a]` samples uniform inclusive
/// on `[-R, R]`, `R = cutoff + 1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridHeader {
    pub n: usize,
    pub k: usize,
    pub resolutions: Vec<usize>,
    pub cutoff: f64,
    /// Row-major entries of the k x k fiber quadratic form; empty when k=0.
    pub q_entries: Vec<f64>,
    /// Path of the sample file, relative to the header file.
    pub data: String,
}

/// Import a grid-sampled GFQI from a JSON header file.
pub fn import_grid(header_path: &std::path::Path) -> Result<Gfqi, GfqiError> {
    let header: GridHeader = serde_json::from_str(&std::fs::read_to_string(header_path)?)?;
    let data_path = header_path
        .parent()
        .unwrap_or(std::path::Path::new("."))
        .join(&header.data);
    let bytes = std::fs::read(&data_path)?;
    if bytes.len() % 8 != 0 {
        return Err(GfqiError::BadGrid("sample file length not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    from_grid(&header, values)
}

pub fn from_grid(header: &GridHeader, values: Vec<f64>) -> Result<Gfqi, GfqiError> {
    let (n, k) = (header.n, header.k);
    if header.resolutions.len() != n + k {
        return Err(GfqiError::BadGrid(format!(
            "expected {} resolutions, got {}",
            n + k,
            header.resolutions.len()
        )));
    }
    if header.resolutions.iter().any(|r| *r < 2) {
        return Err(GfqiError::BadGrid("resolution < 2".into()));
    }
    let expect: usize = header.resolutions.iter().product();
    if values.len() != expect {
        return Err(GfqiError::BadGrid(format!(
            "expected {} samples, got {}",
            expect,
            values.len()
        )));
    }
    let quad = if k > 0 {
        if header.q_entries.len() != k * k {
            return Err(GfqiError::BadGrid("q_entries must have k*k entries".into()));
        }
        Some(QuadraticForm::new(DMatrix::from_row_slice(
            k,
            k,
            &header.q_entries,
        ))?)
    } else {
        None
    };
    let res = header.resolutions.clone();
    let r = header.cutoff + 1.0;
    let values = Arc::new(values);
    let v2 = values.clone();
    let res2 = res.clone();
    let interp = move |x: &[f64]| -> f64 {
        // fractional index per axis: periodic for q, clamped for xi
        let mut base = vec![0usize; n + k];
        let mut frac = vec![0.0f64; n + k];
        let mut wrap = vec![false; n + k];
        for a in 0..n + k {
            let ra = res2[a];
            if a < n {
                let s = x[a].rem_euclid(1.0) * ra as f64;
                base[a] = (s.floor() as usize).min(ra - 1);
                frac[a] = s - base[a] as f64;
                wrap[a] = true;
            } else {
                let h = 2.0 * r / (ra - 1) as f64;
                let s = ((x[a] + r) / h).clamp(0.0, (ra - 1) as f64 - 1e-12);
                base[a] = s.floor() as usize;
                frac[a] = s - base[a] as f64;
            }
        }
        let flat = |idx: &[usize]| -> usize {
            let mut f = 0;
            for a in 0..n + k {
                f = f * res2[a] + idx[a];
            }
            f
        };
        let mut acc = 0.0;
        for corner in 0..(1usize << (n + k)) {
            let mut w = 1.0;
            let mut idx = base.clone();
            for a in 0..n + k {
                if corner >> a & 1 == 1 {
                    idx[a] += 1;
                    if wrap[a] {
                        idx[a] %= res2[a];
                    }
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            acc += w * v2[flat(&idx)];
        }
        acc
    };
    let interp2 = interp.clone();
    let eval: CoreEval = Arc::new(move |x| Ok(interp(x)));
    let grad: CoreGrad = Arc::new(move |x| {
        let mut g = vec![0.0; x.len()];
        let mut xp = x.to_vec();
        for i in 0..x.len() {
            let h = fd_step(x[i]);
            xp[i] = x[i] + h;
            let up = interp2(&xp);
            xp[i] = x[i] - h;
            let dn = interp2(&xp);
            xp[i] = x[i];
            g[i] = (up - dn) / (2.0 * h);
        }
        Ok(g)
    });
    let _ = values;
    Ok(Gfqi {
        n,
        k,
        eval,
        grad,
        quad,
        cutoff: header.cutoff,
        difference_type: false,
        base: None,
        label: "grid-import".to_string(),
    })
}

/// Sample a GFQI onto the interchange grid and write header + data files.
pub fn export_grid(
    s: &Gfqi,
    resolutions: &[usize],
    header_path: &std::path::Path,
    data_name: &str,
) -> Result<(), GfqiError> {
    let (n, k) = (s.n(), s.k());
    assert_eq!(resolutions.len(), n + k);
    let r = s.cutoff() + 1.0;
    let mut values = Vec::new();
    let total: usize = resolutions.iter().product();
    for flat in 0..total {
        let mut rem = flat;
        let mut idx = vec![0usize; n + k];
        for a in (0..n + k).rev() {
            idx[a] = rem % resolutions[a];
            rem /= resolutions[a];
        }
        let mut q = vec![0.0; n];
        let mut xi = vec![0.0; k];
        for a in 0..n {
            q[a] = idx[a] as f64 / resolutions[a] as f64;
        }
        for a in 0..k {
            let ra = resolutions[n + a];
            xi[a] = -r + 2.0 * r * idx[n + a] as f64 / (ra - 1) as f64;
        }
        values.push(s.eval(&q, &xi)?);
    }
    let q_entries = match s.quad() {
        Some(q) => q.matrix().transpose().iter().cloned().collect(),
        None => Vec::new(),
    };
    let header = GridHeader {
        n,
        k,
        resolutions: resolutions.to_vec(),
        cutoff: s.cutoff(),
        q_entries,
        data: data_name.to_string(),
    };
    let dir = header_path.parent().unwrap_or(std::path::Path::new("."));
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in &values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(dir.join(data_name), bytes)?;
    std::fs::write(header_path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}
