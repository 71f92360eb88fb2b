//! Min-max critical values via persistent homology of cubical sublevel
//! filtrations on `T^n x [-R, R]^k`, the gamma invariant and distance, and
//! lower bounds on the gamma-hat displacement-style invariant.
//!
//! The relative pair `(S^lambda, S^{-c_box})` is encoded by coning the
//! deep-sublevel subcomplex at a vertex with value `-inf`; relative
//! homology then appears as the homology of a single filtration with one
//! spurious degree-0 class (the cone component) that is dropped.

use thiserror::Error;

use crate::gfqi::{ominus, oplus, Gfqi, GfqiError};
use crate::hamlang::{Dims, EvalError, Expression};
use crate::phase::fd_step;

#[derive(Debug, Error)]
pub enum MinmaxError {
    #[error("resolution {0} below the minimum of 8 per axis")]
    ResolutionTooSmall(usize),
    #[error("degree {degree}: expected {expected} essential classes, found {found} (c_box too small or invalid input)")]
    EssentialCensus {
        degree: usize,
        expected: usize,
        found: usize,
    },
    #[error("gfqi error: {0}")]
    Gfqi(#[from] GfqiError),
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("family member has no analytically available image (needs a fiberless GFQI built from a base expression)")]
    NoAnalyticImage,
    #[error("hamiltonian must depend on q only for the analytic-image family")]
    NotPositionOnly,
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    res: usize,
    periodic: bool,
    lo: f64,
    step: f64,
}

impl Axis {
    /// Doubled-coordinate count: even coordinates are vertices, odd are
    /// edges along this axis.
    fn coords(&self) -> usize {
        if self.periodic {
            2 * self.res
        } else {
            2 * self.res + 1
        }
    }

    fn vertex_count(&self) -> usize {
        if self.periodic {
            self.res
        } else {
            self.res + 1
        }
    }
}

/// Lower-star cubical filtration of `S` on `T^n x [-R, R]^k` with values
/// saturated at `+-c_box` and the deep sublevel set coned off.
pub struct CubicalFiltration {
    axes: Vec<Axis>,
    /// Per doubled-grid cell: saturated filtration value (max over
    /// vertices).
    values: Vec<f64>,
    /// Cells whose raw value is `<= -c_box`: the relative subcomplex.
    deep: Vec<bool>,
    c_box: f64,
    /// Max value oscillation over any single cell: the grid tolerance
    /// unit.
    cell_unit: f64,
}

/// Per-degree persistence pairs; `death = +inf` for essential classes.
#[derive(Debug, Clone, Default)]
pub struct PersistenceDiagram {
    /// (degree, birth, death) with death finite and > birth.
    pub pairs: Vec<(usize, f64, f64)>,
    /// (degree, birth) of essential classes.
    pub essential: Vec<(usize, f64)>,
    /// Grid tolerance unit inherited from the filtration.
    pub cell_unit: f64,
}

impl PersistenceDiagram {
    pub fn essential_births(&self, degree: usize) -> Vec<f64> {
        self.essential
            .iter()
            .filter(|(d, _)| *d == degree)
            .map(|(_, b)| *b)
            .collect()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut out = 1usize;
    for i in 0..k.min(n - k) {
        out = out * (n - i) / (i + 1);
    }
    out
}

/// Whether every degree carries exactly `binomial(n, degree - neg_index)`
/// essential classes.
pub fn census_ok(diagram: &PersistenceDiagram, n: usize, neg_index: usize) -> bool {
    let max_deg = neg_index + n + 1;
    (0..=max_deg).all(|deg| {
        let expected = if deg >= neg_index {
            binomial(n, deg - neg_index)
        } else {
            0
        };
        diagram.essential_births(deg).len() == expected
    })
}

impl CubicalFiltration {
    pub fn cell_unit(&self) -> f64 {
        self.cell_unit
    }

    pub fn c_box(&self) -> f64 {
        self.c_box
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    fn flat(&self, coord: &[usize]) -> usize {
        let mut f = 0;
        for (a, c) in self.axes.iter().zip(coord) {
            f = f * a.coords() + c;
        }
        f
    }

    fn coord_of_flat(&self, mut flat: usize) -> Vec<usize> {
        let mut coord = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            coord[a] = flat % self.axes[a].coords();
            flat /= self.axes[a].coords();
        }
        coord
    }

    fn cell_dim(&self, coord: &[usize]) -> usize {
        coord.iter().filter(|c| *c % 2 == 1).count()
    }

    /// Codimension-1 faces over Z/2.
    fn faces(&self, coord: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        for (a, axis) in self.axes.iter().enumerate() {
            if coord[a] % 2 == 0 {
                continue;
            }
            for delta in [-1i64, 1i64] {
                let mut f = coord.to_vec();
                let c = coord[a] as i64 + delta;
                f[a] = if axis.periodic {
                    c.rem_euclid(axis.coords() as i64) as usize
                } else {
                    c as usize
                };
                out.push(self.flat(&f));
            }
        }
        out
    }

    fn cell_count(&self) -> usize {
        self.axes.iter().map(|a| a.coords()).product()
    }
}

/// Build the filtration of `S` at `resolution` cells per axis with
/// deep-sublevel cutoff `c_box`.
pub fn build_filtration(
    s: &Gfqi,
    resolution: usize,
    c_box: f64,
) -> Result<CubicalFiltration, MinmaxError> {
    if resolution < 8 {
        return Err(MinmaxError::ResolutionTooSmall(resolution));
    }
    let (n, k) = (s.n(), s.k());
    let r = s.cutoff() + 1.0;
    let mut axes = Vec::with_capacity(n + k);
    for _ in 0..n {
        axes.push(Axis {
            res: resolution,
            periodic: true,
            lo: 0.0,
            step: 1.0 / resolution as f64,
        });
    }
    for _ in 0..k {
        axes.push(Axis {
            res: resolution,
            periodic: false,
            lo: -r,
            step: 2.0 * r / resolution as f64,
        });
    }

    // raw vertex values
    let vertex_counts: Vec<usize> = axes.iter().map(|a| a.vertex_count()).collect();
    let total_vertices: usize = vertex_counts.iter().product();
    let mut vertex_values = vec![0.0f64; total_vertices];
    {
        use rayon::prelude::*;
        let chunks: Result<Vec<f64>, MinmaxError> = (0..total_vertices)
            .into_par_iter()
            .map(|flat| {
                let mut rem = flat;
                let mut idx = vec![0usize; n + k];
                for a in (0..n + k).rev() {
                    idx[a] = rem % vertex_counts[a];
                    rem /= vertex_counts[a];
                }
                let q: Vec<f64> = (0..n).map(|a| idx[a] as f64 * axes[a].step).collect();
                let xi: Vec<f64> = (0..k)
                    .map(|a| axes[n + a].lo + idx[n + a] as f64 * axes[n + a].step)
                    .collect();
                Ok(s.eval(&q, &xi)?)
            })
            .collect();
        vertex_values.copy_from_slice(&chunks?);
    }
    let vflat = |idx: &[usize]| -> usize {
        let mut f = 0;
        for a in 0..n + k {
            f = f * vertex_counts[a] + idx[a];
        }
        f
    };

    let tmp = CubicalFiltration {
        axes: axes.clone(),
        values: Vec::new(),
        deep: Vec::new(),
        c_box,
        cell_unit: 0.0,
    };
    let count = tmp.cell_count();
    let mut values = vec![0.0f64; count];
    let mut deep = vec![false; count];
    let mut cell_unit = 0.0f64;
    for flat in 0..count {
        let coord = tmp.coord_of_flat(flat);
        // vertices: product over axes of {c/2} (even) or {(c-1)/2, (c+1)/2}
        let mut verts: Vec<Vec<usize>> = vec![Vec::new()];
        for (a, axis) in axes.iter().enumerate() {
            let c = coord[a];
            let opts: Vec<usize> = if c % 2 == 0 {
                vec![c / 2]
            } else {
                let up = (c + 1) / 2;
                let up = if axis.periodic { up % axis.res } else { up };
                vec![(c - 1) / 2, up]
            };
            let mut next = Vec::new();
            for v in &verts {
                for o in &opts {
                    let mut w = v.clone();
                    w.push(*o);
                    next.push(w);
                }
            }
            verts = next;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in &verts {
            let val = vertex_values[vflat(v)];
            lo = lo.min(val);
            hi = hi.max(val);
        }
        deep[flat] = hi <= -c_box;
        values[flat] = hi.clamp(-c_box, c_box);
        cell_unit = cell_unit.max(hi.clamp(-c_box, c_box) - lo.clamp(-c_box, c_box));
    }

    Ok(CubicalFiltration {
        axes,
        values,
        deep,
        c_box,
        cell_unit,
    })
}

/// Z/2 boundary-matrix reduction of the coned filtration. Deterministic
/// tie-breaking: (value, dimension, cell index), cone cells after their
/// base cell.
pub fn compute_persistence(f: &CubicalFiltration) -> PersistenceDiagram {
    let count = f.cell_count();
    let has_cone = f.deep.iter().any(|d| *d);

    // simplex ids: 0 = cone vertex (if present); base cell c -> 2c + 1;
    // cone cell over c -> 2c + 2
    #[derive(Clone, Copy)]
    struct Simplex {
        id: usize,
        value: f64,
        dim: usize,
    }
    let mut simplices = Vec::new();
    if has_cone {
        simplices.push(Simplex {
            id: 0,
            value: f64::NEG_INFINITY,
            dim: 0,
        });
    }
    for c in 0..count {
        let coord = f.coord_of_flat(c);
        let dim = f.cell_dim(&coord);
        simplices.push(Simplex {
            id: 2 * c + 1,
            value: f.values[c],
            dim,
        });
        if f.deep[c] {
            simplices.push(Simplex {
                id: 2 * c + 2,
                value: f.values[c],
                dim: dim + 1,
            });
        }
    }
    simplices.sort_by(|a, b| {
        a.value
            .partial_cmp(&b.value)
            .unwrap()
            .then(a.dim.cmp(&b.dim))
            .then(a.id.cmp(&b.id))
    });
    let mut position = vec![usize::MAX; 2 * count + 2];
    for (pos, s) in simplices.iter().enumerate() {
        position[s.id] = pos;
    }

    // boundary columns in sorted positions
    let boundary_of = |s: &Simplex| -> Vec<usize> {
        let mut rows: Vec<usize> = if s.id == 0 {
            Vec::new()
        } else if s.id % 2 == 1 {
            let c = (s.id - 1) / 2;
            let coord = f.coord_of_flat(c);
            f.faces(&coord).iter().map(|fc| position[2 * fc + 1]).collect()
        } else {
            // cone cell: boundary = base + cone of base faces (+ cone
            // vertex when the base is a vertex)
            let c = (s.id - 2) / 2;
            let coord = f.coord_of_flat(c);
            let mut rows = vec![position[2 * c + 1]];
            if f.cell_dim(&coord) == 0 {
                rows.push(position[0]);
            }
            for fc in f.faces(&coord) {
                debug_assert!(f.deep[fc]);
                rows.push(position[2 * fc + 2]);
            }
            rows
        };
        rows.sort_unstable();
        // Z/2: drop duplicate entries in pairs
        let mut out = Vec::with_capacity(rows.len());
        let mut i = 0;
        while i < rows.len() {
            if i + 1 < rows.len() && rows[i] == rows[i + 1] {
                i += 2;
            } else {
                out.push(rows[i]);
                i += 1;
            }
        }
        out
    };

    let m = simplices.len();
    let mut reduced: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut pivot_owner = vec![usize::MAX; m];
    let mut is_birth_paired = vec![false; m];
    let mut pairs = Vec::new();
    for j in 0..m {
        let mut col = boundary_of(&simplices[j]);
        while let Some(&piv) = col.last() {
            let owner = pivot_owner[piv];
            if owner == usize::MAX {
                break;
            }
            col = symm_diff(&col, &reduced[owner]);
        }
        if let Some(&piv) = col.last() {
            pivot_owner[piv] = j;
            is_birth_paired[piv] = true;
            let birth = simplices[piv].value;
            let death = simplices[j].value;
            if death > birth {
                pairs.push((simplices[piv].dim, birth, death));
            }
        }
        reduced.push(col);
    }

    let mut essential = Vec::new();
    for j in 0..m {
        if reduced[j].is_empty() && !is_birth_paired[j] {
            essential.push((simplices[j].dim, simplices[j].value));
        }
    }
    // drop the spurious degree-0 class of the cone component
    if has_cone {
        let pos = essential
            .iter()
            .position(|(d, b)| *d == 0 && *b == f64::NEG_INFINITY)
            .expect("the cone vertex class is essential");
        essential.remove(pos);
    }

    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    essential.sort_by(|a, b| a.partial_cmp(b).unwrap());
    PersistenceDiagram {
        pairs,
        essential,
        cell_unit: f.cell_unit,
    }
}

fn symm_diff(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassChoice {
    /// The class of `1 in H^0`: essential birth in degree `i^-`.
    Unit,
    /// The fundamental class `mu`: essential birth in degree `i^- + n`.
    Fundamental,
}

/// Both min-max values plus the grid tolerance unit, from one filtration.
pub fn minmax_pair(
    s: &Gfqi,
    resolution: usize,
    c_box: f64,
) -> Result<(f64, f64, f64), MinmaxError> {
    let filt = build_filtration(s, resolution, c_box)?;
    let diagram = compute_persistence(&filt);
    let c1 = select_essential(&diagram, s.neg_index(), s.n(), ClassChoice::Unit)?;
    let cmu = select_essential(&diagram, s.neg_index(), s.n(), ClassChoice::Fundamental)?;
    Ok((c1, cmu, filt.cell_unit()))
}

fn select_essential(
    diagram: &PersistenceDiagram,
    neg_index: usize,
    n: usize,
    which: ClassChoice,
) -> Result<f64, MinmaxError> {
    let degree = match which {
        ClassChoice::Unit => neg_index,
        ClassChoice::Fundamental => neg_index + n,
    };
    let births = diagram.essential_births(degree);
    if births.len() != 1 {
        return Err(MinmaxError::EssentialCensus {
            degree,
            expected: 1,
            found: births.len(),
        });
    }
    Ok(births[0])
}

/// `c(1, S)` or `c(mu, S)`: the essential birth in the selecting degree.
pub fn minmax_value(
    s: &Gfqi,
    which: ClassChoice,
    resolution: usize,
    c_box: f64,
) -> Result<f64, MinmaxError> {
    let (c1, cmu, _) = minmax_pair(s, resolution, c_box)?;
    Ok(match which {
        ClassChoice::Unit => c1,
        ClassChoice::Fundamental => cmu,
    })
}

/// True iff Newton polish from some grid seed lands on a point with
/// `|DS| <= tol` and `|S - lambda| <= tol`.
pub fn critical_value_check(
    s: &Gfqi,
    lambda: f64,
    tol: f64,
    resolution: usize,
) -> Result<bool, MinmaxError> {
    let (n, k) = (s.n(), s.k());
    let r = s.cutoff() + 1.0;
    let qgrid = crate::gfqi::torus_grid(n, resolution);
    let fibers: Vec<Vec<f64>> = if k == 0 {
        vec![Vec::new()]
    } else {
        let res = resolution.min(16);
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
    };
    for q0 in &qgrid {
        for xi0 in &fibers {
            let mut x: Vec<f64> = q0.iter().chain(xi0.iter()).cloned().collect();
            let mut grad = full_gradient(s, &x)?;
            let mut res = norm(&grad);
            for _ in 0..20 {
                if res <= tol {
                    break;
                }
                let m = x.len();
                let mut hess = nalgebra::DMatrix::zeros(m, m);
                for j in 0..m {
                    let h = fd_step(x[j]);
                    let mut up = x.clone();
                    up[j] += h;
                    let mut dn = x.clone();
                    dn[j] -= h;
                    let gu = full_gradient(s, &up)?;
                    let gd = full_gradient(s, &dn)?;
                    for i in 0..m {
                        hess[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
                    }
                }
                let rhs = nalgebra::DVector::from_row_slice(&grad);
                let step = match hess.lu().solve(&rhs) {
                    Some(st) => st,
                    None => break,
                };
                let mut scale = 1.0;
                loop {
                    let cand: Vec<f64> = (0..m).map(|i| x[i] - scale * step[i]).collect();
                    let gc = full_gradient(s, &cand)?;
                    let rc = norm(&gc);
                    if rc < res || scale < 1.0 / 32.0 {
                        x = cand;
                        grad = gc;
                        res = rc;
                        break;
                    }
                    scale *= 0.5;
                }
            }
            if res <= tol {
                let val = s.eval(&x[..n], &x[n..])?;
                if (val - lambda).abs() <= tol {
                    return Ok(true);
                }
            }
        }
    }
    Ok(false)
}

fn full_gradient(s: &Gfqi, x: &[f64]) -> Result<Vec<f64>, MinmaxError> {
    let (dq, dxi) = s.gradient(&x[..s.n()], &x[s.n()..])?;
    Ok(dq.into_iter().chain(dxi).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `gamma(L) = c(mu, S) - c(1, S)`, clamped to 0 within one grid cell.
pub fn gamma_invariant(s: &Gfqi, resolution: usize, c_box: f64) -> Result<f64, MinmaxError> {
    let (c1, cmu, unit) = minmax_pair(s, resolution, c_box)?;
    let g = cmu - c1;
    Ok(if g.abs() <= unit { 0.0 } else { g })
}

/// `gamma(L1, L2)`: the gamma invariant of `S1 (-) S2`.
pub fn gamma_distance(
    s1: &Gfqi,
    s2: &Gfqi,
    resolution: usize,
    c_box: f64,
) -> Result<f64, MinmaxError> {
    gamma_invariant(&ominus(s1, s2)?, resolution, c_box)
}

/// One instantiated inequality/equality with the values that entered it.
#[derive(Debug, Clone)]
pub struct PropertyLine {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Subadditivity `c(1, S1 (+) S2) >= c(1, S1) + c(1, S2)` (and the
/// `1 * mu` variant) plus the duality `c(1, -S1) = -c(mu, S1)`, each
/// within 2 grid cells.
pub fn property_checks(
    s1: &Gfqi,
    s2: &Gfqi,
    resolution: usize,
    c_box: f64,
) -> Result<Vec<PropertyLine>, MinmaxError> {
    let (c1_a, cmu_a, unit_a) = minmax_pair(s1, resolution, c_box)?;
    let (c1_b, _cmu_b, unit_b) = minmax_pair(s2, resolution, c_box)?;
    let sum = oplus(s1, s2)?;
    let (c1_s, cmu_s, unit_s) = minmax_pair(&sum, resolution, c_box)?;
    let (c1_neg, _, unit_n) = minmax_pair(&s1.negated(), resolution, c_box)?;
    let tol = 2.0 * unit_a.max(unit_b).max(unit_s).max(unit_n);
    let mut out = Vec::new();
    let lhs = c1_s;
    let rhs = c1_a + c1_b;
    out.push(PropertyLine {
        name: "subadditivity_unit_unit",
        lhs,
        rhs,
        tol,
        pass: lhs >= rhs - tol,
    });
    let lhs = cmu_s;
    let rhs = c1_b + cmu_a;
    out.push(PropertyLine {
        name: "subadditivity_unit_fundamental",
        lhs,
        rhs,
        tol,
        pass: lhs >= rhs - tol,
    });
    let lhs = c1_neg;
    let rhs = -cmu_a;
    out.push(PropertyLine {
        name: "duality",
        lhs,
        rhs,
        tol,
        pass: (lhs - rhs).abs() <= tol,
    });
    Ok(out)
}

/// Lower bound on `gamma-hat` of the time-1 flow of `H = h(q)`: the max of
/// `gamma(phi^t(L), L)` over the declared fiberless family and 11 uniform
/// times in `[0, 1]`. For position-only `H`, `phi^t(graph(df)) =
/// graph(d(f - t h))` exactly.
pub fn hatgamma_lower_bound(
    h: &Expression,
    family: &[Gfqi],
    resolution: usize,
    c_box: f64,
) -> Result<f64, MinmaxError> {
    if h.uses_momentum() || h.uses_time() || h.uses_fiber() {
        return Err(MinmaxError::NotPositionOnly);
    }
    let mut best = 0.0f64;
    for l in family {
        let f = l.base_function().ok_or(MinmaxError::NoAnalyticImage)?;
        if l.k() != 0 {
            return Err(MinmaxError::NoAnalyticImage);
        }
        for step in 0..11 {
            let t = step as f64 / 10.0;
            let image_src = format!("({}) - ({}) * ({})", f.canonical(), t, h.canonical());
            let image_expr = Expression::parse(
                &image_src,
                Dims {
                    d: h.dims().d.max(f.dims().d),
                    k: 0,
                },
            )
            .expect("difference of two parsed expressions reparses");
            let image = Gfqi::from_base_function(&image_expr)?;
            let g = gamma_distance(&image, l, resolution, c_box)?;
            best = best.max(g);
        }
    }
    Ok(best)
}

/// CSV export: `degree,birth,death` with death empty for essential
/// classes, sorted deterministically, floats at 17 significant digits.
pub fn diagram_csv(diagram: &PersistenceDiagram) -> String {
    let mut out = String::from("degree,birth,death\n");
    let mut rows: Vec<(usize, f64, Option<f64>)> = diagram
        .pairs
        .iter()
        .map(|(d, b, dd)| (*d, *b, Some(*dd)))
        .chain(diagram.essential.iter().map(|(d, b)| (*d, *b, None)))
        .collect();
    rows.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).unwrap())
            .then(a.2.partial_cmp(&b.2).unwrap())
    });
    for (deg, birth, death) in rows {
        match death {
            Some(dv) => out.push_str(&format!("{},{:.16e},{:.16e}\n", deg, birth, dv)),
            None => out.push_str(&format!("{},{:.16e},\n", deg, birth)),
        }
    }
    out
}
