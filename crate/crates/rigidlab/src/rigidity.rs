//! Numerical shadow of the C0-closedness argument for symplectomorphisms:
//! the coupling-matrix kernel (exact rational arithmetic), the tilde
//! transformation of component functions, the constancy system `A = DPhi E`,
//! the Jacobi-identity elimination step, and limit experiments on
//! C0-convergent families of symplectic maps.

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::hamlang::{Dims, EvalError, Expression};
use crate::phase::{
    bracket_from_gradients, bracket_gradient, bracket_relation_table, symplecticity_defect,
    DiffeoSample, Domain, PhaseError, PhasePoint, ScalarField, SymplecticConvention,
};

#[derive(Debug, Error)]
pub enum RigidityError {
    #[error("phase error: {0}")]
    Phase(#[from] PhaseError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("family member {n} is not symplectic on the grid: defect {defect:.3e}")]
    NonSymplecticMember { n: usize, defect: f64 },
    #[error("need {expected} component fields, got {got}")]
    ComponentCount { expected: usize, got: usize },
}

/// The d x d matrix `d I - ones` from the constancy system; row sums
/// vanish, so its kernel detects the equal-components vector.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub d: usize,
}

impl CouplingMatrix {
    pub fn entries(&self) -> Vec<Vec<i64>> {
        (0..self.d)
            .map(|i| {
                (0..self.d)
                    .map(|j| if i == j { self.d as i64 - 1 } else { -1 })
                    .collect()
            })
            .collect()
    }
}

/// Exact rank and kernel basis of the coupling matrix by Gaussian
/// elimination over the rationals. Pivots are normalized to 1, so every
/// intermediate value is a ratio of integers bounded by `d`; the machine
/// rationals used internally cannot overflow, and the result is converted
/// to arbitrary-precision rationals at the boundary.
pub fn coupling_matrix_kernel(d: usize) -> (usize, Vec<Vec<BigRational>>) {
    use num_rational::Rational64;
    assert!(d >= 1);
    let mut m: Vec<Vec<Rational64>> = CouplingMatrix { d }
        .entries()
        .into_iter()
        .map(|row| row.into_iter().map(Rational64::from_integer).collect())
        .collect();
    let mut pivot_cols = Vec::new();
    let mut row = 0usize;
    for col in 0..d {
        let Some(pr) = (row..d).find(|r| !m[*r][col].is_zero()) else {
            continue;
        };
        m.swap(row, pr);
        let p = m[row][col].clone();
        for v in m[row].iter_mut() {
            *v /= p.clone();
        }
        for r in 0..d {
            if r != row && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in 0..d {
                    let s = m[row][c].clone() * f.clone();
                    m[r][c] -= s;
                }
            }
        }
        pivot_cols.push(col);
        row += 1;
        if row == d {
            break;
        }
    }
    let rank = pivot_cols.len();
    // back-substitute free columns into kernel vectors
    let mut kernel = Vec::new();
    for free in 0..d {
        if pivot_cols.contains(&free) {
            continue;
        }
        let mut v = vec![Rational64::zero(); d];
        v[free] = Rational64::one();
        for (r, col) in pivot_cols.iter().enumerate() {
            v[*col] = -m[r][free];
        }
        kernel.push(
            v.into_iter()
                .map(|r| {
                    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
                })
                .collect(),
        );
    }
    (rank, kernel)
}

/// A diffeomorphism given by its `2d` component functions
/// `Q_1..Q_d, P_1..P_d`, each evaluable with gradients.
#[derive(Clone)]
pub struct RigidityMap {
    d: usize,
    components: Vec<ScalarField>,
}

impl RigidityMap {
    pub fn new(d: usize, components: Vec<ScalarField>) -> Result<RigidityMap, RigidityError> {
        if components.len() != 2 * d {
            return Err(RigidityError::ComponentCount {
                expected: 2 * d,
                got: components.len(),
            });
        }
        Ok(RigidityMap { d, components })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn identity(d: usize) -> RigidityMap {
        let mut components = Vec::with_capacity(2 * d);
        for i in 0..d {
            components.push(coordinate_field(d, format!("q{}", i + 1)));
        }
        for i in 0..d {
            components.push(coordinate_field(d, format!("p{}", i + 1)));
        }
        RigidityMap { d, components }
    }

    /// Linear map with exact component gradients (expressions built from
    /// the matrix entries).
    pub fn linear(d: usize, m: &DMatrix<f64>) -> RigidityMap {
        assert_eq!(m.nrows(), 2 * d);
        let mut components = Vec::with_capacity(2 * d);
        for row in 0..2 * d {
            let mut terms = Vec::new();
            for col in 0..2 * d {
                let c = m[(row, col)];
                if c == 0.0 {
                    continue;
                }
                let var = if col < d {
                    format!("q{}", col + 1)
                } else {
                    format!("p{}", col + 1 - d)
                };
                terms.push(format!("({:?}) * {}", c, var));
            }
            let src = if terms.is_empty() {
                "0".to_string()
            } else {
                terms.join(" + ")
            };
            components.push(coordinate_field(d, src));
        }
        RigidityMap { d, components }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        self.components.iter().map(|c| c.eval(x)).collect()
    }

    /// Sampled-diffeomorphism view: forward from the components, Jacobian
    /// from their gradients. Panics on evaluation failure inside, so
    /// intended for component fields total on the grid.
    pub fn to_diffeo(&self) -> DiffeoSample {
        let comps = self.components.clone();
        let comps2 = self.components.clone();
        let d = self.d;
        DiffeoSample::new(
            d,
            move |x: &[f64]| {
                comps
                    .iter()
                    .map(|c| c.eval(x).expect("component evaluation"))
                    .collect()
            },
            move |x: &[f64]| {
                let n = 2 * d;
                let mut j = DMatrix::zeros(n, n);
                for (row, c) in comps2.iter().enumerate() {
                    let g = c.gradient(x).expect("component gradient");
                    for col in 0..n {
                        j[(row, col)] = g[col];
                    }
                }
                j
            },
        )
    }
}

fn coordinate_field(d: usize, src: String) -> ScalarField {
    let e = Expression::parse(&src, Dims::phase(d)).expect("generated component source parses");
    ScalarField::from_expression(e, Domain::Full { dim: 2 * d }).expect("component field")
}

/// `Qt_i = Q_i + (1/sqrt d) sum_k P_k`, `Pt_i = P_i + (1/sqrt d) sum_k Q_k`.
/// For symplectic input every bracket `{Qt_i, Pt_i}` vanishes.
pub fn tilde_transform(phi: &RigidityMap) -> Result<RigidityMap, RigidityError> {
    let d = phi.d;
    let c = 1.0 / (d as f64).sqrt();
    let sum_of = |range: std::ops::Range<usize>| -> Result<ScalarField, PhaseError> {
        let mut acc: Option<ScalarField> = None;
        for i in range {
            acc = Some(match acc {
                None => phi.components[i].clone(),
                Some(a) => a.plus(&phi.components[i], 1.0)?,
            });
        }
        Ok(acc.expect("nonempty range"))
    };
    let sum_p = sum_of(d..2 * d)?;
    let sum_q = sum_of(0..d)?;
    let mut components = Vec::with_capacity(2 * d);
    for i in 0..d {
        components.push(phi.components[i].plus(&sum_p, c)?);
    }
    for i in 0..d {
        components.push(phi.components[d + i].plus(&sum_q, c)?);
    }
    Ok(RigidityMap { d, components })
}

/// `{Qt_i, Pt_i}` at `x` for every `i`.
pub fn tilde_brackets(phi: &RigidityMap, x: &PhasePoint) -> Result<Vec<f64>, RigidityError> {
    let t = tilde_transform(phi)?;
    let d = t.d;
    let mut out = Vec::with_capacity(d);
    for i in 0..d {
        out.push(crate::phase::poisson_bracket(
            &t.components[i],
            &t.components[d + i],
            x,
        )?);
    }
    Ok(out)
}

/// `A = DPhi(x) E` and its determinant; `det A != 0` is what forces the
/// conformal factor to be constant.
pub fn constancy_system(
    phi: &RigidityMap,
    x: &PhasePoint,
) -> Result<(DMatrix<f64>, f64), RigidityError> {
    let j = phi.to_diffeo().jacobian(x.coords());
    let e = SymplecticConvention { d: phi.d }.matrix();
    let a = j * e;
    let det = a.clone().determinant();
    Ok((a, det))
}

/// Max over `i != j` of `|{Q_i, {Q_j, P_j}}|` and `|{P_i, {Q_j, P_j}}|`:
/// the elimination step that kills the mixed terms for symplectic maps.
pub fn jacobi_elimination_check(
    phi: &RigidityMap,
    x: &PhasePoint,
) -> Result<f64, RigidityError> {
    let d = phi.d;
    let mut worst = 0.0f64;
    for j in 0..d {
        let inner = bracket_gradient(&phi.components[j], &phi.components[d + j], x.coords())?;
        for i in 0..d {
            if i == j {
                continue;
            }
            for comp in [i, d + i] {
                let g = phi.components[comp].gradient(x.coords())?;
                worst = worst.max(bracket_from_gradients(d, &g, &inner).abs());
            }
        }
    }
    Ok(worst)
}

/// Gaussian-weighted least-squares Jacobian over a stencil of width 3
/// cells; the mollified derivative used for declared C0 limits.
pub fn mollified_jacobian(
    map: &dyn Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    h: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let mut ata = DMatrix::zeros(n, n);
    let mut atb = DMatrix::zeros(n, n); // columns: sum w * delta * dPhi_row
    let f0 = map(x);
    let mut offsets = vec![vec![0.0f64; n]];
    // 3-wide stencil per axis plus diagonal shell, Gaussian weights
    let mut idx = vec![-1i32; n];
    loop {
        if idx.iter().any(|v| *v != 0) {
            offsets.push(idx.iter().map(|v| *v as f64 * h).collect());
        }
        let mut a = 0;
        loop {
            if a == n {
                break;
            }
            idx[a] += 1;
            if idx[a] <= 1 {
                break;
            }
            idx[a] = -1;
            a += 1;
        }
        if a == n {
            break;
        }
    }
    let sigma2 = h * h;
    for delta in &offsets[1..] {
        let w = (-delta.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma2)).exp();
        let y: Vec<f64> = x.iter().zip(delta).map(|(a, b)| a + b).collect();
        let fy = map(&y);
        for i in 0..n {
            for j in 0..n {
                ata[(i, j)] += w * delta[i] * delta[j];
            }
        }
        for row in 0..n {
            let df = fy[row] - f0[row];
            for i in 0..n {
                atb[(i, row)] += w * delta[i] * df;
            }
        }
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .expect("stencil covariance is nonsingular");
    // sol columns hold gradient of each output row
    sol.transpose()
}

/// One row of the limit experiment report.
#[derive(Debug, Clone)]
pub struct LimitExperimentRow {
    pub n: usize,
    pub sup_distance: f64,
    pub max_table_deviation: f64,
    pub c_estimate: f64,
    pub c_variance: f64,
    pub at_infinity_deviation: f64,
}

#[derive(Debug, Clone)]
pub struct LimitExperimentReport {
    pub rows: Vec<LimitExperimentRow>,
    /// Final row: the declared limit, with mollified finite differences.
    pub limit_row: LimitExperimentRow,
}

impl LimitExperimentReport {
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "n,sup_distance,max_table_deviation,C_estimate,C_variance,at_infinity_deviation\n",
        );
        for row in self.rows.iter().chain(std::iter::once(&self.limit_row)) {
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                row.n,
                row.sup_distance,
                row.max_table_deviation,
                row.c_estimate,
                row.c_variance,
                row.at_infinity_deviation
            ));
        }
        out
    }
}

fn table_stats(
    table_at: &dyn Fn(&[f64]) -> DMatrix<f64>,
    d: usize,
    grid: &[Vec<f64>],
    collar: &[Vec<f64>],
) -> (f64, f64, f64, f64) {
    let e = SymplecticConvention { d }.matrix();
    let mut max_dev = 0.0f64;
    let mut c_values = Vec::with_capacity(grid.len());
    for x in grid {
        let t = table_at(x);
        max_dev = max_dev.max((&t - &e).amax());
        let mut c = 0.0;
        for i in 0..d {
            c += t[(i, d + i)];
        }
        c_values.push(c / d as f64);
    }
    let mean = c_values.iter().sum::<f64>() / c_values.len() as f64;
    let var = c_values
        .iter()
        .map(|c| (c - mean) * (c - mean))
        .sum::<f64>()
        / c_values.len() as f64;
    let mut infinity_dev = 0.0f64;
    for x in collar {
        let t = table_at(x);
        infinity_dev = infinity_dev.max((&t - &e).amax());
    }
    (max_dev, mean, var, infinity_dev)
}

/// Collar sample points just outside the declared support box.
pub fn collar_points(lo: &[f64], hi: &[f64], margin: f64) -> Vec<Vec<f64>> {
    let n = lo.len();
    let mut out = Vec::new();
    // face centers and corners of the inflated box
    let mut idx = vec![-1i32; n];
    loop {
        if idx.iter().any(|v| *v != 0) {
            out.push(
                (0..n)
                    .map(|a| {
                        let mid = 0.5 * (lo[a] + hi[a]);
                        let half = 0.5 * (hi[a] - lo[a]) + margin;
                        mid + idx[a] as f64 * half
                    })
                    .collect(),
            );
        }
        let mut a = 0;
        loop {
            if a == n {
                break;
            }
            idx[a] += 1;
            if idx[a] <= 1 {
                break;
            }
            idx[a] = -1;
            a += 1;
        }
        if a == n {
            break;
        }
    }
    out
}

/// Per-member convergence and bracket-table report for a C0-convergent
/// family of symplectic maps with a declared limit and support box.
pub fn limit_rigidity_experiment(
    family: &[RigidityMap],
    limit: &RigidityMap,
    grid: &[Vec<f64>],
    support: (&[f64], &[f64]),
    mollify_h: f64,
) -> Result<LimitExperimentReport, RigidityError> {
    let d = limit.d();
    let collar = collar_points(support.0, support.1, 1.0);
    let mut rows = Vec::with_capacity(family.len());
    for (i, phi) in family.iter().enumerate() {
        let n = i + 1;
        let diffeo = phi.to_diffeo();
        // precondition: symplectic within 1e-8 on the grid
        for x in grid {
            let defect = symplecticity_defect(&diffeo, &PhasePoint::new(d, x.clone())?)?;
            if defect > 1e-8 {
                return Err(RigidityError::NonSymplecticMember { n, defect });
            }
        }
        let mut sup = 0.0f64;
        for x in grid {
            let a = phi.eval(x)?;
            let b = limit.eval(x)?;
            let dist = a
                .iter()
                .zip(&b)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            sup = sup.max(dist);
        }
        let table = |x: &[f64]| -> DMatrix<f64> {
            bracket_relation_table(&diffeo, &PhasePoint::new(d, x.to_vec()).unwrap())
                .expect("table on grid")
        };
        let (max_dev, c_mean, c_var, inf_dev) = table_stats(&table, d, grid, &collar);
        rows.push(LimitExperimentRow {
            n,
            sup_distance: sup,
            max_table_deviation: max_dev,
            c_estimate: c_mean,
            c_variance: c_var,
            at_infinity_deviation: inf_dev,
        });
    }
    // the declared limit, differentiated by mollified least squares
    let limit2 = limit.clone();
    let map = move |x: &[f64]| limit2.eval(x).expect("limit evaluation");
    let e = SymplecticConvention { d }.matrix();
    let table = |x: &[f64]| -> DMatrix<f64> {
        let j = mollified_jacobian(&map, x, mollify_h);
        &j * &e * j.transpose()
    };
    let (max_dev, c_mean, c_var, inf_dev) = table_stats(&table, d, grid, &collar);
    let limit_row = LimitExperimentRow {
        n: family.len() + 1,
        sup_distance: 0.0,
        max_table_deviation: max_dev,
        c_estimate: c_mean,
        c_variance: c_var,
        at_infinity_deviation: inf_dev,
    };
    Ok(LimitExperimentReport { rows, limit_row })
}

/// A random Hamiltonian-matrix exponential: exactly symplectic linear map.
pub fn random_linear_symplectic(d: usize, seed: u64, scale: f64) -> DMatrix<f64> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * d;
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = scale * (rng.gen::<f64>() - 0.5);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let e = SymplecticConvention { d }.matrix();
    (e * s).exp()
}
