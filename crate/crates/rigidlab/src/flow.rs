//! Symplectic time integration of Hamiltonian flows, commutator isotopies
//! and reconstruction of the generating Hamiltonian of an isotopy.
//!
//! The integrator is implicit midpoint with fixed-point iteration:
//! symplectic for general smooth Hamiltonians, second order. Inverse flows
//! are realized by integrating with negated time, never by map inversion.

use std::sync::Arc;

use thiserror::Error;

use crate::hamlang::EvalError;
use crate::phase::{
    Domain, GradientMode, PhaseError, PhasePoint, ScalarField, SymplecticConvention,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("fixed-point iteration did not converge within {0} iterations")]
    FixedPointDivergence(usize),
    #[error("trajectory left the field domain")]
    LeftDomain,
    #[error("field evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("phase error: {0}")]
    Phase(#[from] PhaseError),
    #[error("isotopy is not Hamiltonian to working precision: curl residual {residual:.3e} exceeds {tol:.3e}")]
    NotHamiltonian { residual: f64, tol: f64 },
}

/// Step size and fixed-point controls for the implicit midpoint scheme.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub fp_tol: f64,
    pub max_fp_iters: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            dt: 1e-3,
            fp_tol: 1e-12,
            max_fp_iters: 50,
        }
    }
}

impl IntegratorConfig {
    pub fn with_dt(dt: f64) -> IntegratorConfig {
        IntegratorConfig {
            dt,
            ..Default::default()
        }
    }
}

fn x_h(h: &ScalarField, x: &[f64]) -> Result<Vec<f64>, FlowError> {
    let g = h.gradient(x)?;
    Ok(SymplecticConvention { d: h.d() }.apply(&g))
}

fn inside_domain(h: &ScalarField, x: &[f64]) -> bool {
    match h.domain() {
        Domain::Box { lo, hi } => x
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(v, (l, u))| *v >= l - 1e-9 && *v <= u + 1e-9),
        _ => x.iter().all(|v| v.is_finite()),
    }
}

/// One implicit-midpoint step of size `dt` (which may be negative).
fn midpoint_step(
    h: &ScalarField,
    x: &[f64],
    dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, FlowError> {
    let n = x.len();
    let mut y = x.to_vec();
    // explicit Euler predictor
    let v0 = x_h(h, x)?;
    for i in 0..n {
        y[i] = x[i] + dt * v0[i];
    }
    let mut mid = vec![0.0; n];
    for iter in 0..cfg.max_fp_iters {
        for i in 0..n {
            mid[i] = 0.5 * (x[i] + y[i]);
        }
        let v = x_h(h, &mid)?;
        let mut delta = 0.0f64;
        for i in 0..n {
            let yi = x[i] + dt * v[i];
            delta = delta.max((yi - y[i]).abs());
            y[i] = yi;
        }
        if delta <= cfg.fp_tol {
            return Ok(y);
        }
        let _ = iter;
    }
    Err(FlowError::FixedPointDivergence(cfg.max_fp_iters))
}

/// Flow `x0` for time `t` (of either sign) under `H`.
pub fn integrate_flow(
    h: &ScalarField,
    x0: &PhasePoint,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<PhasePoint, FlowError> {
    let x = integrate_flow_raw(h, x0.coords(), t, cfg)?;
    Ok(PhasePoint::new(h.d(), x)?)
}

pub fn integrate_flow_raw(
    h: &ScalarField,
    x0: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>, FlowError> {
    if t == 0.0 {
        return Ok(x0.to_vec());
    }
    let steps = (t.abs() / cfg.dt).ceil().max(1.0) as usize;
    let dt = t / steps as f64;
    let mut x = x0.to_vec();
    for _ in 0..steps {
        x = midpoint_step(h, &x, dt, cfg)?;
        if !inside_domain(h, &x) {
            return Err(FlowError::LeftDomain);
        }
    }
    Ok(x)
}

/// How an isotopy was produced; carried as metadata.
#[derive(Debug, Clone)]
pub enum IsotopyRecipe {
    Flow { hamiltonian: String },
    Commutator { h: String, k: String, s: f64 },
    External(String),
}

type IsoMap = Arc<dyn Fn(f64, &[f64]) -> Result<Vec<f64>, FlowError> + Send + Sync>;

/// A time-indexed family of maps with `theta_0 = id`, evaluated on demand
/// by composing integrator flows.
#[derive(Clone)]
pub struct Isotopy {
    d: usize,
    forward: IsoMap,
    inverse: IsoMap,
    pub recipe: IsotopyRecipe,
}

impl Isotopy {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn forward(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, FlowError> {
        (self.forward)(t, x)
    }

    pub fn inverse(&self, t: f64, x: &[f64]) -> Result<Vec<f64>, FlowError> {
        (self.inverse)(t, x)
    }

    /// The isotopy `t -> phi^t` of the flow of `H`.
    pub fn flow(h: ScalarField, cfg: IntegratorConfig, name: &str) -> Isotopy {
        let d = h.d();
        let h2 = h.clone();
        Isotopy {
            d,
            forward: Arc::new(move |t, x| integrate_flow_raw(&h, x, t, &cfg)),
            inverse: Arc::new(move |t, x| integrate_flow_raw(&h2, x, -t, &cfg)),
            recipe: IsotopyRecipe::Flow {
                hamiltonian: name.to_string(),
            },
        }
    }

    pub fn identity(d: usize) -> Isotopy {
        Isotopy {
            d,
            forward: Arc::new(|_t, x| Ok(x.to_vec())),
            inverse: Arc::new(|_t, x| Ok(x.to_vec())),
            recipe: IsotopyRecipe::External("identity".to_string()),
        }
    }
}

/// The commutator isotopy `t -> phi^t psi^s phi^{-t} psi^{-s}` of the
/// flows of `H` and `K`.
pub fn commutator_isotopy(
    h: &ScalarField,
    k: &ScalarField,
    s: f64,
    cfg: IntegratorConfig,
) -> Isotopy {
    let d = h.d();
    let (hf, kf) = (h.clone(), k.clone());
    let (hb, kb) = (h.clone(), k.clone());
    Isotopy {
        d,
        forward: Arc::new(move |t, x| {
            let x = integrate_flow_raw(&kf, x, -s, &cfg)?;
            let x = integrate_flow_raw(&hf, &x, -t, &cfg)?;
            let x = integrate_flow_raw(&kf, &x, s, &cfg)?;
            integrate_flow_raw(&hf, &x, t, &cfg)
        }),
        inverse: Arc::new(move |t, x| {
            let x = integrate_flow_raw(&hb, x, -t, &cfg)?;
            let x = integrate_flow_raw(&kb, &x, -s, &cfg)?;
            let x = integrate_flow_raw(&hb, &x, t, &cfg)?;
            integrate_flow_raw(&kb, &x, s, &cfg)
        }),
        recipe: IsotopyRecipe::Commutator {
            h: "H".to_string(),
            k: "K".to_string(),
            s,
        },
    }
}

/// `sup_x |phi^t psi^s(x) - psi^s phi^t(x)|` over the given test points.
pub fn commutation_defect(
    h: &ScalarField,
    k: &ScalarField,
    s: f64,
    t: f64,
    grid: &[Vec<f64>],
    cfg: &IntegratorConfig,
) -> Result<f64, FlowError> {
    if s == 0.0 || t == 0.0 {
        return Ok(0.0);
    }
    let mut sup = 0.0f64;
    for x in grid {
        let a = integrate_flow_raw(k, x, s, cfg)?;
        let a = integrate_flow_raw(h, &a, t, cfg)?;
        let b = integrate_flow_raw(h, x, t, cfg)?;
        let b = integrate_flow_raw(k, &b, s, cfg)?;
        let dist = a
            .iter()
            .zip(&b)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        sup = sup.max(dist);
    }
    Ok(sup)
}

/// A uniform sample grid on an axis-aligned box: `res[i]` cells (hence
/// `res[i]+1` points) along axis `i`.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub res: Vec<usize>,
}

impl GridSpec {
    pub fn square(dim: usize, lo: f64, hi: f64, res: usize) -> GridSpec {
        GridSpec {
            lo: vec![lo; dim],
            hi: vec![hi; dim],
            res: vec![res; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn step(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.res[axis] as f64
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(a, i)| self.lo[a] + self.step(a) * *i as f64)
            .collect()
    }

    pub fn point_count(&self) -> usize {
        self.res.iter().map(|r| r + 1).product()
    }

    pub fn index_of_flat(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in 0..self.dim() {
            idx[a] = flat % (self.res[a] + 1);
            flat /= self.res[a] + 1;
        }
        idx
    }

    pub fn flat_of_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for a in (0..self.dim()).rev() {
            flat = flat * (self.res[a] + 1) + idx[a];
        }
        flat
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.point_count())
            .map(|f| self.point(&self.index_of_flat(f)))
            .collect()
    }
}

/// Controls for [`reconstruct_hamiltonian`].
#[derive(Debug, Clone, Copy)]
pub struct ReconstructOptions {
    /// Half-width of the central time difference for `d theta_t / dt`.
    pub time_delta: f64,
    /// Sup-norm tolerance of the closedness (curl) test.
    pub curl_tol: f64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        ReconstructOptions {
            time_delta: 1e-3,
            curl_tol: 1e-4,
        }
    }
}

/// Result of a Hamiltonian reconstruction: the grid-sampled field plus
/// diagnostics.
pub struct Reconstruction {
    pub field: ScalarField,
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub curl_residual: f64,
}

/// Reconstruct the generating Hamiltonian of `iso` at time `t` on `grid`:
/// computes `V_t = (d/dt theta_t) o theta_t^{-1}` by central time
/// differences, checks that `alpha = -E V_t` is closed, then line-integrates
/// `alpha` from the grid center, normalizing the value there to zero.
pub fn reconstruct_hamiltonian(
    iso: &Isotopy,
    grid: &GridSpec,
    t: f64,
    opts: &ReconstructOptions,
) -> Result<Reconstruction, FlowError> {
    use rayon::prelude::*;

    let dim = grid.dim();
    let d = iso.d();
    assert_eq!(dim, 2 * d, "grid must cover the full phase space");
    let delta = opts.time_delta;
    let conv = SymplecticConvention { d };

    // alpha = -E V at every grid point
    let npts = grid.point_count();
    let alpha: Result<Vec<Vec<f64>>, FlowError> = (0..npts)
        .into_par_iter()
        .map(|flat| {
            let y = grid.point(&grid.index_of_flat(flat));
            let x = iso.inverse(t, &y)?;
            let fwd = iso.forward(t + delta, &x)?;
            let bwd = iso.forward(t - delta, &x)?;
            let v: Vec<f64> = fwd
                .iter()
                .zip(&bwd)
                .map(|(a, b)| (a - b) / (2.0 * delta))
                .collect();
            // DH = -E V
            let ev = conv.apply(&v);
            Ok(ev.iter().map(|a| -a).collect())
        })
        .collect();
    let alpha = alpha?;

    // closedness: d alpha = 0 via centered grid differences
    let mut curl_residual = 0.0f64;
    for flat in 0..npts {
        let idx = grid.index_of_flat(flat);
        for i in 0..dim {
            for j in (i + 1)..dim {
                let di = partial_on_grid(grid, &alpha, &idx, j, i);
                let dj = partial_on_grid(grid, &alpha, &idx, i, j);
                if let (Some(di), Some(dj)) = (di, dj) {
                    curl_residual = curl_residual.max((di - dj).abs());
                }
            }
        }
    }
    if curl_residual > opts.curl_tol {
        return Err(FlowError::NotHamiltonian {
            residual: curl_residual,
            tol: opts.curl_tol,
        });
    }

    // line-integrate alpha axis by axis from the center index
    let center: Vec<usize> = grid.res.iter().map(|r| r / 2).collect();
    let mut values = vec![f64::NAN; npts];
    values[grid.flat_of_index(&center)] = 0.0;
    for axis in 0..dim {
        let h = grid.step(axis);
        // walk outward from the center along this axis
        for side in [1i64, -1i64] {
            let mut offset = 1i64;
            loop {
                let target = center[axis] as i64 + side * offset;
                if target < 0 || target > grid.res[axis] as i64 {
                    break;
                }
                // fill every point at this axis offset whose later axes are central
                for flat in 0..npts {
                    let idx = grid.index_of_flat(flat);
                    if idx[axis] as i64 != target {
                        continue;
                    }
                    if (axis + 1..dim).any(|a| idx[a] != center[a]) {
                        continue;
                    }
                    let mut prev = idx.clone();
                    prev[axis] = (target - side) as usize;
                    let pflat = grid.flat_of_index(&prev);
                    let a0 = alpha[pflat][axis];
                    let a1 = alpha[flat][axis];
                    values[flat] = values[pflat] + side as f64 * h * 0.5 * (a0 + a1);
                }
                offset += 1;
            }
        }
    }
    debug_assert!(values.iter().all(|v| v.is_finite()));

    let field = grid_field(grid, values.clone(), d)?;
    Ok(Reconstruction {
        field,
        grid: grid.clone(),
        values,
        curl_residual,
    })
}

fn partial_on_grid(
    grid: &GridSpec,
    vals: &[Vec<f64>],
    idx: &[usize],
    component: usize,
    axis: usize,
) -> Option<f64> {
    if idx[axis] == 0 || idx[axis] == grid.res[axis] {
        return None;
    }
    let mut up = idx.to_vec();
    up[axis] += 1;
    let mut dn = idx.to_vec();
    dn[axis] -= 1;
    let h = grid.step(axis);
    Some((vals[grid.flat_of_index(&up)][component] - vals[grid.flat_of_index(&dn)][component]) / (2.0 * h))
}

/// Multilinear interpolation of grid samples as a `ScalarField`.
pub fn grid_field(grid: &GridSpec, values: Vec<f64>, d: usize) -> Result<ScalarField, FlowError> {
    let g = grid.clone();
    let dim = grid.dim();
    let field = ScalarField::from_fn(
        d,
        Domain::Box {
            lo: grid.lo.clone(),
            hi: grid.hi.clone(),
        },
        move |x: &[f64]| {
            // clamp into the box, then multilinear interpolation
            let mut base = vec![0usize; dim];
            let mut frac = vec![0.0f64; dim];
            for a in 0..dim {
                let h = g.step(a);
                let s = ((x[a] - g.lo[a]) / h).clamp(0.0, g.res[a] as f64 - 1e-12);
                base[a] = s.floor() as usize;
                frac[a] = s - base[a] as f64;
            }
            let mut acc = 0.0;
            for corner in 0..(1usize << dim) {
                let mut w = 1.0;
                let mut idx = base.clone();
                for a in 0..dim {
                    if corner >> a & 1 == 1 {
                        idx[a] += 1;
                        w *= frac[a];
                    } else {
                        w *= 1.0 - frac[a];
                    }
                }
                acc += w * values[g.flat_of_index(&idx)];
            }
            acc
        },
    )?;
    Ok(field.with_mode(GradientMode::FiniteDifference))
}
