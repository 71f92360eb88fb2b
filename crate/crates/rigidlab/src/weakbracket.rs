//! Set-valued calculus for Lipschitz Hamiltonians: the weak Hamiltonian
//! vector field as a convex generator cloud, the Rampazzo-Sussmann bracket
//! of Lipschitz vector fields, the weak Lie bracket, support-function
//! Hausdorff comparisons, and the C0-commutation evidence harness.
//!
//! Sampling discretizes the limit sets: points are drawn on shrinking
//! shells around the base point; the kink set of a Lipschitz field has
//! measure zero, so samples land where the gradient exists almost surely,
//! and exact-gradient kink hits are discarded. Clouds are therefore inner
//! approximations of the true convex sets, never outer bounds.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::hamlang::{EvalError, Smoothness};
use crate::phase::{
    bracket_from_gradients, fd_step, PhaseError, PhasePoint, ScalarField, SymplecticConvention,
};

#[derive(Debug, Error)]
pub enum WeakBracketError {
    #[error("invalid schedule: {0}")]
    BadSchedule(&'static str),
    #[error("every shell sample hit a kink point; the field's kink set is not negligible near this point")]
    AllSamplesKinked,
    #[error("weak Lie bracket requires everywhere-defined first gradients (C^{{1,1}} or smooth flag)")]
    NotC11,
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("phase error: {0}")]
    Phase(#[from] PhaseError),
}

/// Shrinking-shell sampling plan; streams are split per (shell, index) so
/// results do not depend on worker count.
#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSchedule {
    pub r0: f64,
    pub shrink: f64,
    pub shells: usize,
    pub per_shell: usize,
    pub seed: u64,
}

impl SamplingSchedule {
    pub fn new(
        r0: f64,
        shrink: f64,
        shells: usize,
        per_shell: usize,
        seed: u64,
    ) -> Result<SamplingSchedule, WeakBracketError> {
        if r0 <= 0.0 {
            return Err(WeakBracketError::BadSchedule("r0 must be positive"));
        }
        if shells < 3 {
            return Err(WeakBracketError::BadSchedule("need at least 3 shells"));
        }
        if per_shell < 8 {
            return Err(WeakBracketError::BadSchedule(
                "need at least 8 samples per shell",
            ));
        }
        Ok(SamplingSchedule {
            r0,
            shrink,
            shells,
            per_shell,
            seed,
        })
    }

    pub fn default_with_seed(seed: u64) -> SamplingSchedule {
        SamplingSchedule {
            r0: 1e-2,
            shrink: 0.5,
            shells: 6,
            per_shell: 32,
            seed,
        }
    }

    fn radius(&self, shell: usize) -> f64 {
        self.r0 * self.shrink.powi(shell as i32)
    }

    /// Deterministic unit ray direction for a sample index; the same ray
    /// is traversed by every shell so per-ray limits can be estimated.
    fn unit_direction(&self, dim: usize, index: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        v.iter_mut().for_each(|a| *a /= norm);
        v
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Finite generator cloud of a convex set, with sampling provenance.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexSetCloud {
    pub points: Vec<Vec<f64>>,
    pub schedule: SamplingSchedule,
    pub kink_hits: usize,
}

impl ConvexSetCloud {
    pub fn singleton(v: Vec<f64>, schedule: SamplingSchedule) -> ConvexSetCloud {
        ConvexSetCloud {
            points: vec![v],
            schedule,
            kink_hits: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn is_singleton(&self) -> bool {
        self.points.len() == 1
    }

    /// Support function `h(u) = max_p <p, u>`.
    pub fn support(&self, u: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| p.iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, p) in self.points.iter().enumerate() {
            for q in &self.points[i + 1..] {
                let d = p
                    .iter()
                    .zip(q)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                best = best.max(d);
            }
        }
        best
    }

    pub fn translated(&self, shift: &[f64]) -> ConvexSetCloud {
        let points = self
            .points
            .iter()
            .map(|p| p.iter().zip(shift).map(|(a, b)| a + b).collect())
            .collect();
        ConvexSetCloud {
            points,
            schedule: self.schedule,
            kink_hits: self.kink_hits,
        }
    }

    pub fn scaled(&self, c: f64) -> ConvexSetCloud {
        let points = self
            .points
            .iter()
            .map(|p| p.iter().map(|a| a * c).collect())
            .collect();
        ConvexSetCloud {
            points,
            schedule: self.schedule,
            kink_hits: self.kink_hits,
        }
    }

    /// CSV of generator coordinates.
    pub fn csv(&self) -> String {
        let dim = self.dim();
        let mut out = String::new();
        for a in 0..dim {
            if a > 0 {
                out.push(',');
            }
            out.push_str(&format!("x{}", a + 1));
        }
        out.push('\n');
        for p in &self.points {
            let row: Vec<String> = p.iter().map(|v| format!("{:.16e}", v)).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Deterministic quasi-uniform unit directions (Kronecker sequence fed
/// through Box-Muller, normalized).
pub fn direction_set(dim: usize, count: usize) -> Vec<Vec<f64>> {
    if dim == 2 {
        return (0..count)
            .map(|k| {
                let theta = std::f64::consts::TAU * k as f64 / count as f64;
                vec![theta.cos(), theta.sin()]
            })
            .collect();
    }
    // R_m additive recurrence: alpha_i = phi_m^{-(i+1)} with phi_m the
    // generalized golden ratio x^{m+1} = x + 1
    let m = 2 * dim;
    let mut phi = 1.5f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (m as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=m).map(|i| phi.powi(-(i as i32)).fract()).collect();
    let mut out = Vec::with_capacity(count);
    let mut u = vec![0.5f64; m];
    for _ in 0..count {
        for (ui, ai) in u.iter_mut().zip(&alphas) {
            *ui = (*ui + ai).fract();
        }
        let mut v = Vec::with_capacity(dim);
        for pair in 0..dim {
            let a = u[2 * pair].max(1e-12);
            let b = u[2 * pair + 1];
            v.push((-2.0 * a.ln()).sqrt() * (std::f64::consts::TAU * b).cos());
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
        v.iter_mut().for_each(|a| *a /= norm);
        out.push(v);
    }
    out
}

/// `max_u |h_A(u) - h_B(u)|` over the deterministic direction set: the
/// Hausdorff distance between the convex hulls, exact as the count grows.
pub fn hausdorff_distance(a: &ConvexSetCloud, b: &ConvexSetCloud, direction_count: usize) -> f64 {
    assert_eq!(a.dim(), b.dim());
    direction_set(a.dim(), direction_count)
        .iter()
        .map(|u| (a.support(u) - b.support(u)).abs())
        .fold(0.0, f64::max)
}

const SINGLETON_DIAMETER: f64 = 1e-6;
const DEDUP_TOL: f64 = 1e-9;

fn dedup(points: &mut Vec<Vec<f64>>) {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in points.drain(..) {
        if !kept
            .iter()
            .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= DEDUP_TOL))
        {
            kept.push(p);
        }
    }
    *points = kept;
}

/// Sample vectors of `map` along shrinking shells around `x` and estimate
/// the per-ray limits; collapses to the singleton `{map(x)}` when the
/// estimated limit set is stable across rays.
///
/// On a ray whose values converge geometrically (the smooth and clean
/// one-sided cases) one Richardson step extrapolates the radius to zero;
/// erratic rays (e.g. finite differences straddling a kink) keep the raw
/// innermost value, which lies inside the hull, preserving the
/// inner-approximation guarantee.
fn shell_cloud(
    dim: usize,
    x: &[f64],
    sched: &SamplingSchedule,
    map: &dyn Fn(&[f64]) -> Result<Option<Vec<f64>>, WeakBracketError>,
) -> Result<ConvexSetCloud, WeakBracketError> {
    let mut kink_hits = 0usize;
    let mut limits: Vec<Vec<f64>> = Vec::new();
    for index in 0..sched.per_shell {
        let u = sched.unit_direction(dim, index);
        let mut ray: Vec<Vec<f64>> = Vec::new();
        for shell in 0..sched.shells {
            let r = sched.radius(shell);
            let p: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + r * b).collect();
            match map(&p)? {
                Some(v) => ray.push(v),
                None => kink_hits += 1,
            }
        }
        let m = ray.len();
        if m == 0 {
            continue;
        }
        let limit = if m >= 3 {
            let dist = |a: &[f64], b: &[f64]| -> f64 {
                a.iter()
                    .zip(b)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt()
            };
            let d1 = dist(&ray[m - 2], &ray[m - 3]);
            let d2 = dist(&ray[m - 1], &ray[m - 2]);
            if d2 <= 0.75 * d1 + 1e-12 {
                ray[m - 1]
                    .iter()
                    .zip(&ray[m - 2])
                    .map(|(a, b)| a + (a - b))
                    .collect()
            } else {
                ray[m - 1].clone()
            }
        } else {
            ray[m - 1].clone()
        };
        limits.push(limit);
    }
    if limits.is_empty() {
        return Err(WeakBracketError::AllSamplesKinked);
    }
    let stable = {
        let probe = ConvexSetCloud {
            points: limits.clone(),
            schedule: *sched,
            kink_hits,
        };
        probe.diameter() <= SINGLETON_DIAMETER
    };
    if stable {
        if let Some(v) = map(x)? {
            return Ok(ConvexSetCloud {
                points: vec![v],
                schedule: *sched,
                kink_hits,
            });
        }
    }
    dedup(&mut limits);
    Ok(ConvexSetCloud {
        points: limits,
        schedule: *sched,
        kink_hits,
    })
}

/// The weak Hamiltonian vector field `X_H(x)` as a generator cloud of
/// `E DH` values at shell samples where the gradient exists.
pub fn weak_hamiltonian_field(
    h: &ScalarField,
    x: &PhasePoint,
    sched: &SamplingSchedule,
) -> Result<ConvexSetCloud, WeakBracketError> {
    let d = h.d();
    let conv = SymplecticConvention { d };
    let map = |p: &[f64]| -> Result<Option<Vec<f64>>, WeakBracketError> {
        match h.gradient(p) {
            Ok(g) => Ok(Some(conv.apply(&g))),
            Err(EvalError::Kink) => Ok(None),
            Err(e) => Err(WeakBracketError::Eval(e)),
        }
    };
    shell_cloud(2 * d, x.coords(), sched, &map)
}

/// A Lipschitz vector field on `R^{2d}` given by an evaluator closure.
#[derive(Clone)]
pub struct VectorField {
    dim: usize,
    f: Arc<dyn Fn(&[f64]) -> Result<Vec<f64>, EvalError> + Send + Sync>,
}

impl VectorField {
    pub fn new(
        dim: usize,
        f: impl Fn(&[f64]) -> Result<Vec<f64>, EvalError> + Send + Sync + 'static,
    ) -> VectorField {
        VectorField { dim, f: Arc::new(f) }
    }

    /// `X_H = E DH` from the field's own gradient route.
    pub fn hamiltonian(h: &ScalarField) -> VectorField {
        let conv = SymplecticConvention { d: h.d() };
        let h = h.clone();
        VectorField {
            dim: 2 * h.d(),
            f: Arc::new(move |x| Ok(conv.apply(&h.gradient(x)?))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        (self.f)(x)
    }

    /// Jacobian by central differences.
    fn jacobian_fd(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, EvalError> {
        let n = self.dim;
        let mut jac = vec![vec![0.0; n]; n];
        let mut y = x.to_vec();
        for j in 0..n {
            let h = fd_step(x[j]);
            y[j] = x[j] + h;
            let up = self.eval(&y)?;
            y[j] = x[j] - h;
            let dn = self.eval(&y)?;
            y[j] = x[j];
            for i in 0..n {
                jac[i][j] = (up[i] - dn[i]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

/// Rampazzo-Sussmann bracket: the cloud of `Df g - Dg f` at shell samples
/// (Jacobians by finite differences, which avoid kink sets almost surely).
pub fn rs_lie_bracket(
    f: &VectorField,
    g: &VectorField,
    x: &PhasePoint,
    sched: &SamplingSchedule,
) -> Result<ConvexSetCloud, WeakBracketError> {
    assert_eq!(f.dim(), g.dim());
    let n = f.dim();
    let map = |p: &[f64]| -> Result<Option<Vec<f64>>, WeakBracketError> {
        let compute = || -> Result<Vec<f64>, EvalError> {
            let jf = f.jacobian_fd(p)?;
            let jg = g.jacobian_fd(p)?;
            let fv = f.eval(p)?;
            let gv = g.eval(p)?;
            let mut v = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    v[i] += jf[i][j] * gv[j] - jg[i][j] * fv[j];
                }
            }
            Ok(v)
        };
        match compute() {
            Ok(v) => Ok(Some(v)),
            Err(EvalError::Kink) => Ok(None),
            Err(e) => Err(WeakBracketError::Eval(e)),
        }
    };
    shell_cloud(n, x.coords(), sched, &map)
}

/// Weak Lie bracket `[[X_H, X_K]] = X_{{H,K}}`: the weak Hamiltonian field
/// of the pointwise bracket, which exists since `H, K` have
/// everywhere-defined first gradients.
pub fn weak_lie_bracket(
    h: &ScalarField,
    k: &ScalarField,
    x: &PhasePoint,
    sched: &SamplingSchedule,
) -> Result<ConvexSetCloud, WeakBracketError> {
    if h.smoothness() == Smoothness::C0Lipschitz || k.smoothness() == Smoothness::C0Lipschitz {
        return Err(WeakBracketError::NotC11);
    }
    let bracket = crate::phase::bracket_field(h, k)?;
    weak_hamiltonian_field(&bracket, x, sched)
}

/// One row of the C0-commutation harness.
#[derive(Debug, Clone, Serialize)]
pub struct C0CommuteRow {
    pub n: usize,
    pub h_distance: f64,
    pub k_distance: f64,
    pub bracket_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct C0CommuteReport {
    pub rows: Vec<C0CommuteRow>,
    pub tolerance: f64,
    /// All three columns non-increasing and the final bracket norm below
    /// tolerance.
    pub commuting_evidence: bool,
}

/// Measure `|H_n - H|, |K_n - K|, |{H_n, K_n}|` in sup norm over the grid
/// for each family member.
pub fn c0_commute_defect(
    h_seq: &[ScalarField],
    k_seq: &[ScalarField],
    h: &ScalarField,
    k: &ScalarField,
    grid: &[Vec<f64>],
    tolerance: f64,
) -> Result<C0CommuteReport, WeakBracketError> {
    assert_eq!(h_seq.len(), k_seq.len());
    let mut rows = Vec::with_capacity(h_seq.len());
    for (i, (hn, kn)) in h_seq.iter().zip(k_seq).enumerate() {
        let mut hd = 0.0f64;
        let mut kd = 0.0f64;
        let mut bn = 0.0f64;
        for x in grid {
            hd = hd.max((hn.eval(x)? - h.eval(x)?).abs());
            kd = kd.max((kn.eval(x)? - k.eval(x)?).abs());
            let gh = hn.gradient(x)?;
            let gk = kn.gradient(x)?;
            bn = bn.max(bracket_from_gradients(hn.d(), &gh, &gk).abs());
        }
        rows.push(C0CommuteRow {
            n: i + 1,
            h_distance: hd,
            k_distance: kd,
            bracket_norm: bn,
        });
    }
    let eps = 1e-12;
    let decreasing = rows.windows(2).all(|w| {
        w[1].h_distance <= w[0].h_distance + eps
            && w[1].k_distance <= w[0].k_distance + eps
            && w[1].bracket_norm <= w[0].bracket_norm + eps
    });
    let commuting_evidence =
        decreasing && rows.last().map_or(false, |r| r.bracket_norm <= tolerance);
    Ok(C0CommuteReport {
        rows,
        tolerance,
        commuting_evidence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamlang::{Dims, Expression};
    use crate::phase::Domain;

    fn field(src: &str, d: usize) -> ScalarField {
        let e = Expression::parse(src, Dims::phase(d)).unwrap();
        ScalarField::from_expression(e, Domain::Full { dim: 2 * d }).unwrap()
    }

    fn sched() -> SamplingSchedule {
        SamplingSchedule::default_with_seed(42)
    }

    fn pt(coords: &[f64]) -> PhasePoint {
        PhasePoint::new(coords.len() / 2, coords.to_vec()).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(SamplingSchedule::new(0.0, 0.5, 6, 32, 1).is_err());
        assert!(SamplingSchedule::new(1e-2, 0.5, 2, 32, 1).is_err());
        assert!(SamplingSchedule::new(1e-2, 0.5, 6, 4, 1).is_err());
        assert!(SamplingSchedule::new(1e-2, 0.5, 6, 32, 1).is_ok());
    }

    #[test]
    fn smooth_field_collapses_to_classical_vector() {
        let h = field("p1^2/2 + cos(q1)", 1);
        let x = pt(&[0.4, 0.8]);
        let cloud = weak_hamiltonian_field(&h, &x, &sched()).unwrap();
        assert!(cloud.is_singleton());
        let classical =
            crate::phase::hamiltonian_vector_field(&h, &x).unwrap();
        let oracle = ConvexSetCloud::singleton(classical, sched());
        assert!(hausdorff_distance(&cloud, &oracle, 64) <= 1e-6);
    }

    #[test]
    fn abs_kink_gives_segment() {
        // H = |q| at (0, p): one-sided gradients (+-1, 0), so
        // X_H(0, p) = hull{(0, -1), (0, +1)}
        let h = field("abs(q1)", 1);
        let cloud = weak_hamiltonian_field(&h, &pt(&[0.0, 0.7]), &sched()).unwrap();
        assert!(!cloud.is_singleton());
        let segment = ConvexSetCloud {
            points: vec![vec![0.0, -1.0], vec![0.0, 1.0]],
            schedule: sched(),
            kink_hits: 0,
        };
        let d = hausdorff_distance(&cloud, &segment, 64);
        assert!(d <= 1e-3, "hausdorff {}", d);
    }

    #[test]
    fn max_kink_on_diagonal() {
        // H = max(q, p) on q = p: branches give X = (0, -1) and (1, 0)
        let h = field("max(q1, p1)", 1);
        let cloud = weak_hamiltonian_field(&h, &pt(&[0.3, 0.3]), &sched()).unwrap();
        let oracle = ConvexSetCloud {
            points: vec![vec![0.0, -1.0], vec![1.0, 0.0]],
            schedule: sched(),
            kink_hits: 0,
        };
        let d = hausdorff_distance(&cloud, &oracle, 64);
        assert!(d <= 1e-3, "hausdorff {}", d);
    }

    #[test]
    fn hull_membership_soundness() {
        let h = field("max(q1, p1)", 1);
        let cloud = weak_hamiltonian_field(&h, &pt(&[0.3, 0.3]), &sched()).unwrap();
        // adding a convex combination of generators must not change support
        let mut fat = cloud.clone();
        let mid: Vec<f64> = cloud.points[0]
            .iter()
            .zip(&cloud.points[cloud.points.len() - 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        fat.points.push(mid);
        assert!(hausdorff_distance(&cloud, &fat, 64) <= 1e-12);
    }

    #[test]
    fn scaling_equivariance() {
        let h = field("abs(q1)", 1);
        let x = pt(&[0.0, 0.5]);
        let c = 3.0;
        let a = weak_hamiltonian_field(&h.scaled(c), &x, &sched()).unwrap();
        let b = weak_hamiltonian_field(&h, &x, &sched()).unwrap().scaled(c);
        assert!(hausdorff_distance(&a, &b, 64) <= 1e-9);
    }

    #[test]
    fn hausdorff_basics() {
        let s = sched();
        let a = ConvexSetCloud {
            points: vec![vec![0.0, -1.0], vec![0.0, 1.0]],
            schedule: s,
            kink_hits: 0,
        };
        assert_eq!(hausdorff_distance(&a, &a, 64), 0.0);
        let origin = ConvexSetCloud::singleton(vec![0.0, 0.0], s);
        let d = hausdorff_distance(&a, &origin, 256);
        assert!((d - 1.0).abs() <= 1e-9, "{}", d);
        let shifted = a.translated(&[0.25, -0.4]);
        let want = (0.25f64 * 0.25 + 0.4 * 0.4).sqrt();
        let d = hausdorff_distance(&a, &shifted, 4096);
        assert!((d - want).abs() <= 1e-4, "{} vs {}", d, want);
    }

    #[test]
    fn rs_bracket_trivial_cases() {
        let h = field("p1^2/2 + cos(q1)", 1);
        let f = VectorField::hamiltonian(&h);
        let x = pt(&[0.2, 0.5]);
        let cloud = rs_lie_bracket(&f, &f, &x, &sched()).unwrap();
        let zero = ConvexSetCloud::singleton(vec![0.0, 0.0], sched());
        assert!(hausdorff_distance(&cloud, &zero, 64) <= 1e-6);
        let c1 = VectorField::new(2, |_| Ok(vec![1.0, 2.0]));
        let c2 = VectorField::new(2, |_| Ok(vec![-3.0, 0.5]));
        let cloud = rs_lie_bracket(&c1, &c2, &x, &sched()).unwrap();
        assert!(hausdorff_distance(&cloud, &zero, 64) <= 1e-9);
    }

    #[test]
    fn rs_bracket_matches_symbolic_poisson_bracket() {
        // polynomial H, K of degree <= 3: [X_H, X_K] = X_{{H,K}}
        let h = field("q1^2 * p1", 1);
        let k = field("q1 + p1^2", 1);
        let x = pt(&[0.7, -0.3]);
        let cloud = rs_lie_bracket(
            &VectorField::hamiltonian(&h),
            &VectorField::hamiltonian(&k),
            &x,
            &sched(),
        )
        .unwrap();
        // oracle: exact gradient of {H,K} through Hessians, then E D{H,K}
        let grad = crate::phase::bracket_gradient(&h, &k, x.coords()).unwrap();
        let oracle = ConvexSetCloud::singleton(
            SymplecticConvention { d: 1 }.apply(&grad),
            sched(),
        );
        let d = hausdorff_distance(&cloud, &oracle, 64);
        assert!(d <= 1e-4, "hausdorff {}", d);
    }

    #[test]
    fn weak_lie_bracket_momentum_pair_is_zero() {
        let h = field("p1^2/2", 1);
        let k = field("tanh(p1)", 1);
        let cloud = weak_lie_bracket(&h, &k, &pt(&[0.3, 0.4]), &sched()).unwrap();
        let zero = ConvexSetCloud::singleton(vec![0.0, 0.0], sched());
        assert!(hausdorff_distance(&cloud, &zero, 64) <= 1e-6);
    }

    #[test]
    fn weak_lie_bracket_matches_rs_on_smooth_pair() {
        let h = field("p1^2/2 + cos(q1)", 1);
        let k = field("q1^2/2", 1);
        let x = pt(&[0.4, 0.6]);
        let a = weak_lie_bracket(&h, &k, &x, &sched()).unwrap();
        let b = rs_lie_bracket(
            &VectorField::hamiltonian(&h),
            &VectorField::hamiltonian(&k),
            &x,
            &sched(),
        )
        .unwrap();
        let d = hausdorff_distance(&a, &b, 64);
        assert!(d <= 5e-3, "hausdorff {}", d);
        // and the symbolic singleton
        let grad = crate::phase::bracket_gradient(&h, &k, x.coords()).unwrap();
        let oracle = ConvexSetCloud::singleton(
            SymplecticConvention { d: 1 }.apply(&grad),
            sched(),
        );
        assert!(hausdorff_distance(&a, &oracle, 64) <= 1e-4);
    }

    #[test]
    fn weak_lie_bracket_c11_segment() {
        // H = p^2/2 * bump(q/4) * bump(p/4), K = q|q|/2: near the origin
        // {H,K} = -p|q|, whose differential at (0,p) has one-sided limits
        // (-+ p, 0), so [[X_H, X_K]](0, p) = {0} x [-|p|, |p|]
        let h = field("p1^2/2 * bump(q1/4) * bump(p1/4)", 1);
        // q|q|/2 is genuinely C^{1,1}; the parser only sees the abs
        let k = field("q1 * abs(q1) / 2", 1).with_smoothness(Smoothness::C11);
        let p = 0.8;
        let cloud = weak_lie_bracket(&h, &k, &pt(&[0.0, p]), &sched()).unwrap();
        let oracle = ConvexSetCloud {
            points: vec![vec![0.0, -p], vec![0.0, p]],
            schedule: sched(),
            kink_hits: 0,
        };
        let d = hausdorff_distance(&cloud, &oracle, 64);
        assert!(d <= 1e-3, "hausdorff {}", d);
    }

    #[test]
    fn weak_lie_bracket_requires_c11() {
        let h = field("abs(q1)", 1);
        let k = field("p1^2/2", 1);
        assert!(matches!(
            weak_lie_bracket(&h, &k, &pt(&[0.1, 0.1]), &sched()),
            Err(WeakBracketError::NotC11)
        ));
    }

    #[test]
    fn determinism_across_runs() {
        let h = field("abs(q1)", 1);
        let a = weak_hamiltonian_field(&h, &pt(&[0.0, 0.7]), &sched()).unwrap();
        let b = weak_hamiltonian_field(&h, &pt(&[0.0, 0.7]), &sched()).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn c0_commute_harness() {
        let h = field("p1^2/2", 1);
        let k = field("tanh(p1)", 1);
        let grid: Vec<Vec<f64>> = (0..25)
            .map(|i| vec![(i % 5) as f64 * 0.3 - 0.6, (i / 5) as f64 * 0.3 - 0.6])
            .collect();
        // constant commuting families: bracket column identically ~0
        let hs: Vec<ScalarField> = (0..4).map(|_| h.clone()).collect();
        let ks: Vec<ScalarField> = (0..4).map(|_| k.clone()).collect();
        let report = c0_commute_defect(&hs, &ks, &h, &k, &grid, 1e-9).unwrap();
        assert!(report.commuting_evidence);
        for row in &report.rows {
            assert!(row.bracket_norm <= 1e-9);
        }

        // H_n = H + g/n with {g, K} nonzero: bracket column ~ |{g,K}|/n
        let g = field("sin(q1)", 1);
        let hs: Vec<ScalarField> = (1..=6)
            .map(|n| h.plus(&g, 1.0 / n as f64).unwrap())
            .collect();
        let ks: Vec<ScalarField> = (1..=6).map(|_| k.clone()).collect();
        let report = c0_commute_defect(&hs, &ks, &h, &k, &grid, 1e-2).unwrap();
        let gk = crate::phase::bracket_field(&g, &k).unwrap();
        let mut norm_gk = 0.0f64;
        for x in &grid {
            norm_gk = norm_gk.max(gk.eval(x).unwrap().abs());
        }
        for row in &report.rows {
            let want = norm_gk / row.n as f64;
            assert!(
                (row.bracket_norm - want).abs() <= 0.1 * want,
                "n {}: {} vs {}",
                row.n,
                row.bracket_norm,
                want
            );
        }

        // fixed non-commuting pair: constant positive bracket column
        let k2 = field("q1^2/2", 1);
        let hs: Vec<ScalarField> = (0..4).map(|_| h.clone()).collect();
        let ks: Vec<ScalarField> = (0..4).map(|_| k2.clone()).collect();
        let report = c0_commute_defect(&hs, &ks, &h, &k2, &grid, 1e-9).unwrap();
        assert!(!report.commuting_evidence);
        let first = report.rows[0].bracket_norm;
        assert!(first > 0.1);
        for row in &report.rows {
            assert!((row.bracket_norm - first).abs() <= 1e-12);
        }
    }

    #[test]
    fn cloud_csv_shape() {
        let s = sched();
        let a = ConvexSetCloud {
            points: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            schedule: s,
            kink_hits: 0,
        };
        let csv = a.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "x1,x2");
        assert_eq!(lines.count(), 2);
        // provenance sidecar serializes
        let sidecar = serde_json::to_string(&a.schedule).unwrap();
        assert!(sidecar.contains("\"seed\":42"));
    }
}
