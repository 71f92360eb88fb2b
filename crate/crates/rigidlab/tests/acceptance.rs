//! End-to-end acceptance suite. Each numbered criterion prints one
//! PASS/FAIL line; the test fails if any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rigidlab::catalog;
use rigidlab::experiment::{parse_config, run_experiment};
use rigidlab::flow::{
    commutation_defect, commutator_isotopy, reconstruct_hamiltonian, GridSpec, IntegratorConfig,
    Isotopy, ReconstructOptions,
};
use rigidlab::gfqi::{ominus, EquivalenceMove, Gfqi, QuadraticForm};
use rigidlab::hamlang::{Dims, Expression, Smoothness};
use rigidlab::minmax::{
    build_filtration, critical_value_check, gamma_distance, gamma_invariant, hatgamma_lower_bound,
    minmax_value, property_checks, ClassChoice,
};
use rigidlab::phase::{
    bracket_from_gradients, c0_norm, jacobi_residual, poisson_bracket, Domain, PhasePoint,
    ScalarField,
};
use rigidlab::rigidity::{
    coupling_matrix_kernel, limit_rigidity_experiment, random_linear_symplectic, tilde_brackets,
    RigidityMap,
};
use rigidlab::weakbracket::{
    hausdorff_distance, rs_lie_bracket, weak_hamiltonian_field, weak_lie_bracket, ConvexSetCloud,
    SamplingSchedule, VectorField,
};

struct Criterion {
    id: usize,
    desc: &'static str,
    pass: bool,
    detail: String,
}

fn check(results: &mut Vec<Criterion>, id: usize, desc: &'static str, f: impl FnOnce() -> Result<String, String>) {
    let started = Instant::now();
    let (pass, detail) = match f() {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    let line = format!("{} ({:.2}s)", detail, started.elapsed().as_secs_f64());
    println!(
        "AC{:02} {}: {} -- {}",
        id,
        if pass { "PASS" } else { "FAIL" },
        desc,
        line
    );
    results.push(Criterion {
        id,
        desc,
        pass,
        detail: line,
    });
}

fn field(src: &str, d: usize) -> ScalarField {
    let e = Expression::parse(src, Dims::phase(d)).unwrap();
    ScalarField::from_expression(e, Domain::Full { dim: 2 * d }).unwrap()
}

fn pt(coords: &[f64]) -> PhasePoint {
    PhasePoint::new(coords.len() / 2, coords.to_vec()).unwrap()
}

fn random_points(d: usize, count: usize, halfwidth: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..2 * d)
                .map(|_| halfwidth * (2.0 * rng.gen::<f64>() - 1.0))
                .collect()
        })
        .collect()
}

fn cosine_gf(a: f64) -> Gfqi {
    let src = format!("{:?} * cos(6.283185307179586 * q1)", a);
    let e = Expression::parse(&src, Dims::phase(1)).unwrap();
    Gfqi::from_base_function(&e).unwrap()
}

fn criterion_1_bracket_calculus() -> Result<String, String> {
    let start = Instant::now();
    let entries = catalog::smooth_hamiltonians();
    if entries.len() < 5 {
        return Err(format!("only {} smooth catalog Hamiltonians", entries.len()));
    }
    let mut max_rel = 0.0f64;
    for (i, a) in entries.iter().enumerate() {
        let f = a.scalar_field().unwrap();
        let partner = &entries[(i + 1) % entries.len()];
        let (f, g, d) = if f.d() == 1 {
            // pair with the next 1-dof entry (fall back to harmonic)
            let g = if partner.d == 1 {
                partner.scalar_field().unwrap()
            } else {
                field("(q1^2 + p1^2) / 2", 1)
            };
            (f, g, 1)
        } else {
            (f.clone(), field("q1 * p2 + q2 * p1", f.d()), f.d())
        };
        for x in random_points(d, 1000, 1.0, 40 + i as u64) {
            let p = pt(&x);
            let exact = poisson_bracket(&f, &g, &p).map_err(|e| e.to_string())?;
            let fd = bracket_from_gradients(
                d,
                &f.fd_gradient(&x).unwrap(),
                &g.fd_gradient(&x).unwrap(),
            );
            max_rel = max_rel.max((fd - exact).abs() / exact.abs().max(1.0));
        }
    }
    if max_rel > 1e-6 {
        return Err(format!("finite-difference relative error {:.3e}", max_rel));
    }
    // Jacobi identity on a smooth triple
    let (f, g, h) = (
        field("p1^2 / 2", 1),
        field("(q1^2 + p1^2) / 2", 1),
        field("p1^2 / 2 - cos(q1)", 1),
    );
    let mut max_jacobi = 0.0f64;
    for x in random_points(1, 200, 1.0, 77) {
        let r = jacobi_residual(&f, &g, &h, &pt(&x)).map_err(|e| e.to_string())?;
        max_jacobi = max_jacobi.max(r.abs());
    }
    if max_jacobi > 1e-6 {
        return Err(format!("Jacobi residual {:.3e}", max_jacobi));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 5.0 {
        return Err(format!("runtime {:.2}s >= 5s", secs));
    }
    Ok(format!(
        "fd rel err {:.2e}, Jacobi {:.2e}",
        max_rel, max_jacobi
    ))
}

fn criterion_2_coupling_matrix() -> Result<String, String> {
    let start = Instant::now();
    for d in 2..=50usize {
        let (rank, kernel) = coupling_matrix_kernel(d);
        if rank != d - 1 {
            return Err(format!("rank {} at d = {}", rank, d));
        }
        if kernel.len() != 1 {
            return Err(format!("kernel dimension {} at d = {}", kernel.len(), d));
        }
        let first = kernel[0][0].clone();
        if kernel[0].iter().any(|v| v != &first) {
            return Err(format!("kernel not the all-equal vector at d = {}", d));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 1.0 {
        return Err(format!("runtime {:.2}s >= 1s", secs));
    }
    Ok("rank d-1 and kernel span(1,..,1) for d in 2..50".to_string())
}

fn criterion_3_tilde_step() -> Result<String, String> {
    let mut worst = 0.0f64;
    for d in [1usize, 2, 3] {
        let mut maps = vec![RigidityMap::identity(d)];
        for seed in 0..10u64 {
            maps.push(RigidityMap::linear(
                d,
                &random_linear_symplectic(d, 100 + seed, 0.3),
            ));
        }
        for (mi, phi) in maps.iter().enumerate() {
            for x in random_points(d, 100, 1.0, 500 + d as u64 * 37 + mi as u64) {
                let brackets = tilde_brackets(phi, &pt(&x)).map_err(|e| e.to_string())?;
                for b in brackets {
                    worst = worst.max(b.abs());
                }
            }
        }
    }
    if worst > 1e-8 {
        return Err(format!("tilde bracket {:.3e} > 1e-8", worst));
    }
    Ok(format!("max |{{Qt_i, Pt_i}}| = {:.2e}", worst))
}

fn criterion_4_minmax_values() -> Result<String, String> {
    for a in [0.5f64, 1.0, 2.0] {
        let start = Instant::now();
        let s = cosine_gf(a);
        let c_box = 4.0 * a.max(1.0);
        let res = 256;
        let unit = build_filtration(&s, res, c_box)
            .map_err(|e| e.to_string())?
            .cell_unit();
        let c1 = minmax_value(&s, ClassChoice::Unit, res, c_box).map_err(|e| e.to_string())?;
        let cmu =
            minmax_value(&s, ClassChoice::Fundamental, res, c_box).map_err(|e| e.to_string())?;
        if (c1 + a).abs() > 2.0 * unit || (cmu - a).abs() > 2.0 * unit {
            return Err(format!(
                "a = {}: c(1) = {:.4} (want {:.4}), c(mu) = {:.4} (want {:.4}), unit {:.2e}",
                a, c1, -a, cmu, a, unit
            ));
        }
        for lambda in [c1, cmu] {
            if !critical_value_check(&s, lambda, 4.0 * unit, res).map_err(|e| e.to_string())? {
                return Err(format!("a = {}: {:.4} is not near a critical value", a, lambda));
            }
        }
        // invariance of the gap under the three equivalence moves
        let res2 = 64;
        let unit2 = build_filtration(&s, res2, c_box)
            .map_err(|e| e.to_string())?
            .cell_unit();
        let gap = cmu - c1;
        let gap_of = |g: &Gfqi| -> Result<f64, String> {
            let c1 = minmax_value(g, ClassChoice::Unit, res2, c_box).map_err(|e| e.to_string())?;
            let cm = minmax_value(g, ClassChoice::Fundamental, res2, c_box)
                .map_err(|e| e.to_string())?;
            Ok(cm - c1)
        };
        // stabilizations by B = (+1) and (-1), written out with a cutoff
        // wide enough that the fiber quadratic dominates the base on the
        // filtration boundary at this c_box
        let stab = |sign: f64| -> Result<Gfqi, String> {
            let src = format!(
                "{:?} * cos(6.283185307179586 * q1) + {:?} * xi1^2",
                a, sign
            );
            let e = Expression::parse(&src, Dims { d: 1, k: 1 }).unwrap();
            Gfqi::from_expression(&e, QuadraticForm::diagonal(&[sign]).unwrap(), 3.0)
                .map_err(|e| e.to_string())
        };
        for (label, variant) in [
            ("stabilize(+1)", stab(1.0)?),
            ("stabilize(-1)", stab(-1.0)?),
            (
                "added constant",
                s.equivalence_move(&EquivalenceMove::AddConstant(0.37))
                    .map_err(|e| e.to_string())?,
            ),
            (
                "fiber diffeomorphism",
                {
                    let stab = s.stabilize(&QuadraticForm::diagonal(&[1.0]).unwrap());
                    let cutoff = stab.cutoff();
                    stab.equivalence_move(&EquivalenceMove::FiberDiffeo(Arc::new(
                        move |_q: &[f64], xi: &[f64]| {
                            let (b, _, _) =
                                rigidlab::hamlang::bump_with_derivatives(xi[0] / cutoff);
                            vec![xi[0] + 0.05 * b]
                        },
                    )))
                    .map_err(|e| e.to_string())?
                },
            ),
        ] {
            let g = gap_of(&variant)?;
            if (g - gap).abs() > 2.0 * unit2 {
                return Err(format!(
                    "a = {}: gap after {} is {:.4}, base {:.4}, tol {:.2e}",
                    a, label, g, gap, 2.0 * unit2
                ));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        if secs >= 30.0 {
            return Err(format!("a = {}: runtime {:.2}s >= 30s", a, secs));
        }
    }
    Ok("c(1) = -a, c(mu) = +a, both critical, gap invariant under all moves".to_string())
}

fn criterion_5_properties() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for pair in 0..10 {
        let amp = |rng: &mut ChaCha8Rng| 0.2 + 0.6 * rng.gen::<f64>();
        let (a1, b1) = (amp(&mut rng), amp(&mut rng));
        let (a2, b2) = (amp(&mut rng), amp(&mut rng));
        let make = |a: f64, b: f64| -> Gfqi {
            let src = format!(
                "{:?} * cos(6.283185307179586 * q1) + {:?} * sin(6.283185307179586 * q1)",
                a, b
            );
            let e = Expression::parse(&src, Dims::phase(1)).unwrap();
            Gfqi::from_base_function(&e).unwrap()
        };
        let lines = property_checks(&make(a1, b1), &make(a2, b2), 48, 8.0)
            .map_err(|e| e.to_string())?;
        for l in &lines {
            if !l.pass {
                return Err(format!(
                    "pair {}: {} violated (lhs {:.4}, rhs {:.4}, tol {:.2e})",
                    pair, l.name, l.lhs, l.rhs, l.tol
                ));
            }
        }
    }
    Ok("duality and both subadditivity instantiations hold on 10 generated pairs".to_string())
}

fn criterion_6_gamma_metric() -> Result<String, String> {
    let res = 48;
    let c_box = 8.0;
    let s = cosine_gf(0.5);
    let unit = build_filtration(&s, res, c_box)
        .map_err(|e| e.to_string())?
        .cell_unit();
    let self_diff = gamma_invariant(&ominus(&s, &s).unwrap(), res, c_box)
        .map_err(|e| e.to_string())?;
    if self_diff != 0.0 {
        return Err(format!("gamma(S - S) = {:.3e}", self_diff));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut max_asym = 0.0f64;
    for _ in 0..5 {
        let g1 = cosine_gf(0.2 + 0.6 * rng.gen::<f64>());
        let g2 = cosine_gf(0.2 + 0.6 * rng.gen::<f64>());
        let d12 = gamma_distance(&g1, &g2, res, c_box).map_err(|e| e.to_string())?;
        let d21 = gamma_distance(&g2, &g1, res, c_box).map_err(|e| e.to_string())?;
        max_asym = max_asym.max((d12 - d21).abs());
    }
    if max_asym > 4.0 * unit {
        return Err(format!("gamma asymmetry {:.3e}", max_asym));
    }
    let a = 0.7;
    let dist = gamma_distance(&cosine_gf(a), &Gfqi::zero_section(1), res, c_box)
        .map_err(|e| e.to_string())?;
    if (dist - 2.0 * a).abs() > 2.0 * unit {
        return Err(format!(
            "gamma(graph, O) = {:.4}, want {:.4} within {:.2e}",
            dist,
            2.0 * a,
            2.0 * unit
        ));
    }
    Ok(format!(
        "gamma(S-S) = 0, symmetry within {:.1e}, gamma(graph, O) = 2a",
        max_asym
    ))
}

fn criterion_7_hatgamma_bound() -> Result<String, String> {
    let res = 64;
    let c_box = 8.0;
    let family = vec![Gfqi::zero_section(1), cosine_gf(0.3)];
    for a in [0.5f64, 1.0, 1.5] {
        let src = format!("{:?} * cos(6.283185307179586 * q1)", a);
        let h = Expression::parse(&src, Dims::phase(1)).unwrap();
        let unit = build_filtration(&family[1], res, c_box)
            .map_err(|e| e.to_string())?
            .cell_unit();
        let bound =
            hatgamma_lower_bound(&h, &family, res, c_box).map_err(|e| e.to_string())?;
        let osc = 2.0 * a;
        if (bound - osc).abs() > 4.0 * unit {
            return Err(format!(
                "a = {}: lower bound {:.4}, oscillation {:.4}, tol {:.2e}",
                a, bound, osc, 4.0 * unit
            ));
        }
        // validity: never exceeds the C0 norm of the Hamiltonian
        let hf = ScalarField::from_expression(
            Expression::parse(&src, Dims::phase(1)).unwrap(),
            Domain::Torus { dim: 2 },
        )
        .unwrap();
        let c0 = c0_norm(&hf, 256).map_err(|e| e.to_string())?;
        if bound > c0 + 4.0 * unit {
            return Err(format!(
                "a = {}: lower bound {:.4} exceeds C0 norm {:.4} + tol",
                a, bound, c0
            ));
        }
    }
    Ok("O_M lower bound equals osc(h) and respects the C0-norm ceiling".to_string())
}

fn criterion_8_weak_fields() -> Result<String, String> {
    let sched = SamplingSchedule::default_with_seed(17);
    // (i) singleton collapse on the smooth (hence C^1) catalog
    for entry in catalog::smooth_hamiltonians() {
        let h = entry.scalar_field().unwrap();
        let d = h.d();
        for x in random_points(d, 10, 0.8, 90 + d as u64) {
            let p = pt(&x);
            let cloud = weak_hamiltonian_field(&h, &p, &sched).map_err(|e| e.to_string())?;
            let classical = rigidlab::phase::hamiltonian_vector_field(&h, &p)
                .map_err(|e| e.to_string())?;
            let oracle = ConvexSetCloud::singleton(classical, sched);
            let dist = hausdorff_distance(&cloud, &oracle, 64);
            if dist > 1e-6 {
                return Err(format!(
                    "{}: Hausdorff to classical field {:.3e} at {:?}",
                    entry.name, dist, x
                ));
            }
        }
    }
    // (ii) |q| kink: segment {0} x [-1, 1]
    let kink = field("abs(q1)", 1);
    let cloud = weak_hamiltonian_field(&kink, &pt(&[0.0, 0.3]), &sched)
        .map_err(|e| e.to_string())?;
    let segment = ConvexSetCloud {
        points: vec![vec![0.0, -1.0], vec![0.0, 1.0]],
        schedule: sched,
        kink_hits: 0,
    };
    let d_seg = hausdorff_distance(&cloud, &segment, 64);
    if d_seg > 1e-3 {
        return Err(format!("kink segment error {:.3e}", d_seg));
    }
    // (iii) the C^{1,1} bracket example at (0, p)
    let h = field("p1^2/2 * bump(q1/4) * bump(p1/4)", 1);
    let k = field("q1 * abs(q1) / 2", 1).with_smoothness(Smoothness::C11);
    let p = 0.8;
    let cloud = weak_lie_bracket(&h, &k, &pt(&[0.0, p]), &sched).map_err(|e| e.to_string())?;
    let oracle = ConvexSetCloud {
        points: vec![vec![0.0, -p], vec![0.0, p]],
        schedule: sched,
        kink_hits: 0,
    };
    let d_c11 = hausdorff_distance(&cloud, &oracle, 64);
    if d_c11 > 1e-3 {
        return Err(format!("C^{{1,1}} segment error {:.3e}", d_c11));
    }
    // (iv) RS bracket against the symbolic commutator on polynomial pairs
    let mut worst_rs = 0.0f64;
    for (hs, ks) in [
        ("q1^2 * p1 / 2", "p1^2 / 2 + q1"),
        ("q1 * p1", "q1^3 / 3"),
        ("p1^2 / 2", "q1^2 / 2"),
    ] {
        let hf = field(hs, 1);
        let kf = field(ks, 1);
        let xh = VectorField::hamiltonian(&hf);
        let xk = VectorField::hamiltonian(&kf);
        let bracket = rigidlab::phase::bracket_field(&hf, &kf).map_err(|e| e.to_string())?;
        for x in random_points(1, 10, 0.7, 123) {
            let p = pt(&x);
            let rs = rs_lie_bracket(&xh, &xk, &p, &sched).map_err(|e| e.to_string())?;
            let symbolic = rigidlab::phase::hamiltonian_vector_field(&bracket, &p)
                .map_err(|e| e.to_string())?;
            let oracle = ConvexSetCloud::singleton(symbolic, sched);
            worst_rs = worst_rs.max(hausdorff_distance(&rs, &oracle, 64));
        }
    }
    if worst_rs > 1e-4 {
        return Err(format!("RS vs symbolic bracket {:.3e}", worst_rs));
    }
    Ok(format!(
        "singletons <= 1e-6, segments <= 1e-3 (kink {:.1e}, C11 {:.1e}), RS {:.1e}",
        d_seg, d_c11, worst_rs
    ))
}

fn criterion_9_commutation_chain() -> Result<String, String> {
    let cfg = IntegratorConfig::with_dt(1e-3);
    let tol = 5.0 * cfg.dt * cfg.dt;
    let grid = random_points(1, 10, 0.8, 55);
    let mut worst = 0.0f64;
    for (hs, ks) in [
        ("p1^2 / 2", "p1"),
        ("sin(p1)", "p1^3 / 3"),
        ("q1^2 / 2", "cos(q1)"),
    ] {
        let h = field(hs, 1);
        let k = field(ks, 1);
        let defect =
            commutation_defect(&h, &k, 1.0, 1.0, &grid, &cfg).map_err(|e| e.to_string())?;
        worst = worst.max(defect);
    }
    if worst > tol {
        return Err(format!("commutation defect {:.3e} > {:.1e}", worst, tol));
    }
    Ok(format!("flow commutation defect {:.2e} <= {:.1e}", worst, tol))
}

fn criterion_10_c0_harness() -> Result<String, String> {
    // H_n = H + g/n against K = p: |{H_n, K}| = |{g, K}|/n exactly
    let g = field("sin(q1)", 1);
    let k = field("p1", 1);
    let grid = random_points(1, 60, 1.0, 71)
        .into_iter()
        .chain(std::iter::once(vec![0.0, 0.0]))
        .collect::<Vec<_>>();
    let mut logs = Vec::new();
    for n in 1..=64usize {
        let gn = g.scaled(1.0 / n as f64);
        let mut norm = 0.0f64;
        for x in &grid {
            let b = poisson_bracket(&gn, &k, &pt(x)).map_err(|e| e.to_string())?;
            norm = norm.max(b.abs());
        }
        logs.push(((n as f64).ln(), norm.ln()));
    }
    // least-squares slope of log norm vs log n
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if (slope + 1.0).abs() > 0.1 {
        return Err(format!("log-log slope {:.4}, want -1.0 +- 0.1", slope));
    }
    Ok(format!("bracket norm decays with slope {:.4}", slope))
}

fn criterion_11_rigidity_experiment() -> Result<String, String> {
    // shrinking shears: full report including mollified limit and collar
    let entry = catalog::lookup("shear-family").unwrap();
    let mut family = Vec::new();
    for n in 1..=6usize {
        let src = entry.member_source(n);
        let q = field(&src, 1);
        let p = field("p1", 1);
        family.push(RigidityMap::new(1, vec![q, p]).unwrap());
    }
    let grid = random_points(1, 30, 0.9, 88);
    let lo = [-1.0, -1.0];
    let hi = [1.0, 1.0];
    let report = limit_rigidity_experiment(
        &family,
        &RigidityMap::identity(1),
        &grid,
        (&lo, &hi),
        0.05,
    )
    .map_err(|e| e.to_string())?;
    for row in &report.rows {
        let bound = 1.0 / (std::f64::consts::TAU * row.n as f64).powi(2);
        if row.sup_distance > bound + 1e-12 {
            return Err(format!(
                "shear n = {}: sup distance {:.3e} above bound {:.3e}",
                row.n, row.sup_distance, bound
            ));
        }
    }
    if report.limit_row.max_table_deviation > 1e-6
        || report.limit_row.at_infinity_deviation > 1e-6
    {
        return Err(format!(
            "limit table deviation {:.3e}, collar {:.3e}",
            report.limit_row.max_table_deviation, report.limit_row.at_infinity_deviation
        ));
    }
    // flows of H/n: closed-form displacement bound sup|X_H|/n
    let h = field("cos(q1) * bump(p1 / 2)", 1);
    let cfg = IntegratorConfig::with_dt(1e-2);
    for n in [1usize, 2, 4, 8] {
        let hn = h.scaled(1.0 / n as f64);
        let mut sup = 0.0f64;
        for x in &grid {
            let y = rigidlab::flow::integrate_flow_raw(&hn, x, 1.0, &cfg)
                .map_err(|e| e.to_string())?;
            let dist = y
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            sup = sup.max(dist);
        }
        let bound = 2.0f64.sqrt() / n as f64;
        if sup > bound + 1e-9 {
            return Err(format!(
                "flow family n = {}: displacement {:.3e} above bound {:.3e}",
                n, sup, bound
            ));
        }
    }
    Ok("both families within closed-form bounds; limit table = E to 1e-6 incl. collar"
        .to_string())
}

fn criterion_12_reconstruction() -> Result<String, String> {
    // recover a known Hamiltonian from its flow, up to an additive constant
    let h = field("p1^2 / 2 - cos(q1)", 1);
    let iso = Isotopy::flow(h.clone(), IntegratorConfig::with_dt(1e-3), "pendulum");
    let grid = GridSpec::square(2, -1.0, 1.0, 32);
    let rec = reconstruct_hamiltonian(&iso, &grid, 0.5, &ReconstructOptions::default())
        .map_err(|e| e.to_string())?;
    let center = grid.point(&grid.res.iter().map(|r| r / 2).collect::<Vec<_>>());
    let h0 = h.eval(&center).unwrap();
    let mut sup = 0.0f64;
    for flat in 0..grid.point_count() {
        let x = grid.point(&grid.index_of_flat(flat));
        sup = sup.max((rec.values[flat] - (h.eval(&x).unwrap() - h0)).abs());
    }
    if sup > 1e-3 {
        return Err(format!("reconstruction sup error {:.3e}", sup));
    }
    // commutator-isotopy norm decreases with the bracket norm
    let k = field("q1 * bump(q1 / 2) * bump(p1 / 2)", 1);
    let mut norms = Vec::new();
    for eps in [1.0f64, 0.5, 0.25] {
        let iso = commutator_isotopy(&h, &k.scaled(eps), 1.0, IntegratorConfig::with_dt(1e-2));
        let rec = reconstruct_hamiltonian(
            &iso,
            &GridSpec::square(2, -0.5, 0.5, 12),
            1.0,
            &ReconstructOptions {
                time_delta: 1e-2,
                curl_tol: 1.0,
            },
        )
        .map_err(|e| e.to_string())?;
        let norm = rec
            .values
            .iter()
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        norms.push(norm);
    }
    if !(norms[0] > norms[1] && norms[1] > norms[2]) {
        return Err(format!("commutator norms not decreasing: {:?}", norms));
    }
    Ok(format!(
        "flow recovery sup {:.2e}; commutator norms {:.2e} > {:.2e} > {:.2e}",
        sup, norms[0], norms[1], norms[2]
    ))
}

fn criterion_13_determinism() -> Result<String, String> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for kind in [
        "bracket",
        "flow",
        "minmax",
        "gamma",
        "weakfield",
        "c0commute",
        "rigidity",
        "property-suite",
    ] {
        let text = std::fs::read_to_string(root.join(format!("{}.json", kind)))
            .map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["output"] =
            serde_json::Value::String(dir.path().to_string_lossy().into_owned());
        let text = serde_json::to_string(&value).unwrap();
        let run_once = |threads: usize| -> Result<Vec<(String, Vec<u8>)>, String> {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| e.to_string())?;
            pool.install(|| {
                let (cfg, echo) = parse_config(&text).map_err(|e| e.to_string())?;
                run_experiment(&cfg, echo).map_err(|e| e.to_string())
            })?;
            let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
                .map_err(|e| e.to_string())?
                .map(|e| {
                    let e = e.unwrap();
                    (
                        e.file_name().to_string_lossy().into_owned(),
                        std::fs::read(e.path()).unwrap(),
                    )
                })
                .collect();
            files.sort();
            Ok(files)
        };
        let a = run_once(1)?;
        let b = run_once(4)?;
        if a != b {
            return Err(format!("{}: outputs differ across worker counts", kind));
        }
    }
    Ok("all 8 golden configs byte-identical across 1 and 4 workers".to_string())
}

#[test]
fn acceptance() {
    let mut results = Vec::new();
    check(&mut results, 1, "bracket calculus", criterion_1_bracket_calculus);
    check(&mut results, 2, "coupling matrix rank and kernel", criterion_2_coupling_matrix);
    check(&mut results, 3, "tilde transformation brackets vanish", criterion_3_tilde_step);
    check(&mut results, 4, "min-max values of a cos(2 pi q)", criterion_4_minmax_values);
    check(&mut results, 5, "duality and subadditivity of c", criterion_5_properties);
    check(&mut results, 6, "gamma metric behavior", criterion_6_gamma_metric);
    check(&mut results, 7, "hatgamma lower bound vs C0 norm", criterion_7_hatgamma_bound);
    check(&mut results, 8, "weak Hamiltonian fields and brackets", criterion_8_weak_fields);
    check(&mut results, 9, "commuting weak brackets give commuting flows", criterion_9_commutation_chain);
    check(&mut results, 10, "C0-commutation bracket decay", criterion_10_c0_harness);
    check(&mut results, 11, "rigidity limit experiment", criterion_11_rigidity_experiment);
    check(&mut results, 12, "Hamiltonian reconstruction", criterion_12_reconstruction);
    check(&mut results, 13, "deterministic golden outputs", criterion_13_determinism);
    let failures: Vec<String> = results
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("AC{:02} {}: {}", c.id, c.desc, c.detail))
        .collect();
    assert!(failures.is_empty(), "failed criteria:\n{}", failures.join("\n"));
}

// sanity check used by the DMatrix import above; keeps the unused-import
// lint honest if criteria evolve
#[allow(dead_code)]
fn _uses(_m: DMatrix<f64>) {}
