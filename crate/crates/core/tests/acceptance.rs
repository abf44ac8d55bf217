//! Acceptance run: one pass/fail line per criterion, nonzero exit if any fail.
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use common::{options, rel, rng, setup, POISSON};
use dls::assembly::{assemble_ne, assemble_overdetermined};
use dls::basis::{eval_basis, gauss_rule, MasterSpace};
use dls::element::{compute_element, condense_ls, condense_ne, element_ne, whiten};
use dls::formulation::{make_case, make_formulation, FormTables, FormulationKind, Parameters};
use dls::linalg::{least_squares_qr, relative_distance, solve_spd, DenseMatrix};
use dls::mesh::uniform_mesh;
use dls::solve::{solve_ls, solve_ne};
use dls::study::{compare_fosls, loglog_slope, run_study, Precision, SolverSet, StudyConfig, StudyKind, StudyReport};
use dls::{Scalar, C64};

type Outcome = (bool, String);

fn study(kind: StudyKind, form: FormulationKind, p: usize, meshes: &[usize]) -> StudyConfig {
    let mut cfg = StudyConfig::new(kind, form, p, 1, meshes.len());
    cfg.start = Some(meshes[0]);
    cfg
}

fn run(cfg: &StudyConfig) -> StudyReport {
    run_study(cfg).expect("study runs")
}

/// Fitted slope of `y` against `h` over the last three rows.
fn finest_slope(h: &[f64], y: &[f64]) -> f64 {
    let k = h.len() - 3;
    loglog_slope(&h[k..], &y[k..])
}

fn cond_squaring() -> Outcome {
    let t0 = Instant::now();
    let report = run(&study(StudyKind::Condition, FormulationKind::FoslsStrong, 2, &[2, 4, 8, 16]));
    let secs = t0.elapsed().as_secs_f64();
    let ratios: Vec<f64> = report
        .rows
        .iter()
        .map(|r| match (r.cond_a, r.cond_btilde) {
            (Some(a), Some(b)) => a / (b * b),
            _ => f64::NAN,
        })
        .collect();
    let ok = ratios.iter().all(|r| (0.99..=1.01).contains(r));
    (
        ok,
        format!("cond(A)/cond(Btilde)^2 = {ratios:.6?} ({secs:.1} s; target under 60 s)"),
    )
}

fn slopes() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in POISSON {
        let report = run(&study(StudyKind::Condition, kind, 2, &[2, 4, 8, 16]));
        let h: Vec<f64> = report.rows.iter().map(|r| r.h).collect();
        let ca: Vec<f64> = report.rows.iter().map(|r| r.cond_a.unwrap_or(f64::NAN)).collect();
        let cb: Vec<f64> = report.rows.iter().map(|r| r.cond_btilde.unwrap_or(f64::NAN)).collect();
        let (sa, sb) = (finest_slope(&h, &ca), finest_slope(&h, &cb));
        ok &= (-2.4..=-1.6).contains(&sa) && (-1.3..=-0.7).contains(&sb);
        detail.push(format!("{kind}: A {sa:.3}, Btilde {sb:.3}"));
    }
    (ok, detail.join("; "))
}

fn fosls_identity() -> Outcome {
    let case = make_case("poisson-sine").unwrap();
    let rows = compare_fosls(&case, 2, &[1], &[4]).unwrap();
    let r = &rows[0];
    (
        r.matrix_distance <= 1e-12 && r.solution_distance <= 1e-11,
        format!(
            "matrix distance {:.2e} (<= 1e-12), solution distance {:.2e} (<= 1e-11)",
            r.matrix_distance, r.solution_distance
        ),
    )
}

fn fosls_rates() -> Outcome {
    let case = make_case("poisson-alpha-sine").unwrap();
    let rows = compare_fosls(&case, 2, &[1, 2], &[2, 4, 8, 16]).unwrap();
    let rate = |dp| {
        let (h, d): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| r.dp == dp)
            .map(|r| (r.h, r.solution_distance))
            .unzip();
        loglog_slope(&h, &d)
    };
    let (r1, r2) = (rate(1), rate(2));
    (r2 > r1, format!("solution-distance rate dp=1 {r1:.3}, dp=2 {r2:.3}"))
}

fn ne_qr_agreement() -> Outcome {
    let (form, case) = setup(FormulationKind::PrimalDpg, 2, 1, "poisson-sine10");
    let opts = dls::assembly::AssemblyOptions::default();
    let mut worst: f64 = 0.0;
    let mut detail = Vec::new();
    for n in [4, 8, 16] {
        let mesh = uniform_mesh(n).unwrap();
        let ne = solve_ne(&assemble_ne::<f64>(&mesh, &form, &case, &opts).unwrap()).unwrap();
        let qr = solve_ls(&assemble_overdetermined::<f64>(&mesh, &form, &case, &opts).unwrap()).unwrap();
        let d = rel(&ne.coefficients, &qr.coefficients);
        worst = worst.max(d);
        detail.push(format!("n={n}: {d:.1e}"));
    }
    (worst <= 1e-8, format!("relative coefficient difference {}", detail.join(", ")))
}

/// Single precision. A level `L` qualifies when NE stalls there (error ratio
/// above 0.9, or breakdown) while QR keeps decreasing at `L` and `L+1`.
fn single_precision_failure() -> Outcome {
    let mut found = Vec::new();
    let mut detail = Vec::new();
    for p in 1..=3 {
        let mut rows = Vec::new();
        let mut n = 1;
        let mut extra = false;
        loop {
            let mut cfg = study(StudyKind::Failure, FormulationKind::UltraweakDpg, p, &[n]);
            cfg.precision = Precision::Single;
            let report = run(&cfg);
            rows.push(report.rows[0].clone());
            let last = rows.len() - 1;
            if extra {
                break;
            }
            let stalled = last >= 1 && {
                let (a, b) = (&rows[last - 1], &rows[last]);
                let ne_stalls = match (a.err_ne, b.err_ne) {
                    (Some(x), Some(y)) => y / x > 0.9,
                    _ => true,
                };
                let qr_drops = matches!((a.err_qr, b.err_qr), (Some(x), Some(y)) if y < x);
                ne_stalls && qr_drops
            };
            // Up to N ~ 1e4, plus one confirming level once NE has stalled.
            if stalled {
                extra = true;
            } else if rows[last].n_dofs > 10_000 {
                break;
            }
            n *= 2;
        }
        if extra {
            let k = rows.len() - 1;
            let (a, b) = (&rows[k - 1], &rows[k]);
            if matches!((a.err_qr, b.err_qr), (Some(x), Some(y)) if y < x) {
                found.push(format!("p={p} at n={}", a.n));
            }
        }
        let fmt = |e: Option<f64>| e.map_or("fail".to_string(), |v| format!("{v:.2e}"));
        detail.push(format!(
            "p={p} [{}]",
            rows.iter()
                .map(|r| format!("n={} N={} ne {} qr {}", r.n, r.n_dofs, fmt(r.err_ne), fmt(r.err_qr)))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    let ok = !found.is_empty();
    let head = if ok {
        format!("NE stalls while QR improves: {}", found.join(", "))
    } else {
        "no level where NE stalls and QR keeps improving".to_string()
    };
    (ok, format!("{head}; {}", detail.join("; ")))
}

fn acoustics() -> Outcome {
    let report = run(&study(StudyKind::Acoustics, FormulationKind::AcousticsUltraweak, 2, &[4, 8, 16, 32]));
    let finest = report.rows.last().unwrap();
    let (ne, qr) = (finest.err_ne.unwrap_or(f64::INFINITY), finest.err_qr.unwrap_or(f64::INFINITY));
    let near = report.rows.iter().find(|r| r.n == 16).and_then(|r| r.cond_a).unwrap_or(f64::NAN);

    let mut cfg = study(StudyKind::Acoustics, FormulationKind::AcousticsUltraweak, 2, &[16]);
    cfg.omega = Some(0.3 * 2.0 * std::f64::consts::PI);
    cfg.solvers = SolverSet { ne: true, qr: false };
    let far = run(&cfg).rows[0].cond_a.unwrap_or(f64::NAN);
    let ratio = near / far;
    (
        qr <= ne && ratio >= 10.0,
        format!("n=32 error qr {qr:.10e} <= ne {ne:.10e}; cond(A) at n=16 near/far = {near:.3e}/{far:.3e} = {ratio:.1}"),
    )
}

fn random_condensation<T: Scalar>(seed: u64) -> f64 {
    use rand::Rng;
    let mut r = rng(seed);
    let n = r.gen_range(3..9);
    let m = n + r.gen_range(0..6);
    let nb = r.gen_range(1..n);
    let bt: DenseMatrix<T> = common::random_matrix(&mut r, m, n);
    let lt: Vec<T> = common::random_vector(&mut r, m);
    let interface: Vec<usize> = (nb..n).collect();
    let bubbles: Vec<usize> = (0..nb).collect();

    let cls = condense_ls(&bt.select_columns(&interface), &bt.select_columns(&bubbles), &lt).unwrap();
    let ui = least_squares_qr(&cls.rows, &cls.rhs).unwrap();
    let shift = bt.select_columns(&interface).mat_vec(&ui);
    let rb: Vec<T> = lt.iter().zip(&shift).map(|(&a, &b)| a - b).collect();
    let ub = cls.recover(&rb).unwrap();
    let u_ls: Vec<T> = ub.iter().chain(&ui).copied().collect();

    let (a, f) = element_ne(&bt, &lt);
    let cne = condense_ne(&a, &f, &bubbles, &interface).unwrap();
    let vi = solve_spd(&cne.schur, &cne.rhs).unwrap();
    let vb = cne.recover(&vi).unwrap();
    let u_ne: Vec<T> = vb.iter().chain(&vi).copied().collect();
    rel(&u_ls, &u_ne)
}

fn condensation() -> Outcome {
    let mut local: f64 = 0.0;
    for seed in 0..50 {
        local = local.max(random_condensation::<f64>(seed));
        local = local.max(random_condensation::<C64>(seed + 1000));
    }
    let mut global: f64 = 0.0;
    for kind in POISSON {
        for n in [1, 2, 4] {
            let (form, case) = setup(kind, 2, 1, "poisson-sine");
            let mesh = uniform_mesh(n).unwrap();
            let opts = options(true, true, true);
            let ls = solve_ls(&assemble_overdetermined::<f64>(&mesh, &form, &case, &opts).unwrap()).unwrap();
            let ne = solve_ne(&assemble_ne::<f64>(&mesh, &form, &case, &opts).unwrap()).unwrap();
            global = global.max(rel(&ls.coefficients, &ne.coefficients));
        }
    }
    (
        local <= 1e-10 && global <= 1e-10,
        format!("max relative difference per element {local:.1e}, global {global:.1e}"),
    )
}

fn basis_checks() -> Result<(), String> {
    for p in 1..=4 {
        let rule = gauss_rule(p + 2);
        let y = eval_basis(MasterSpace::Y, p, &rule.points).unwrap();
        for i in 0..y.dim() {
            for j in 0..y.dim() {
                let g: f64 = (0..rule.weights.len())
                    .map(|k| rule.weights[k] * y.scalar(i, k) * y.scalar(j, k))
                    .sum();
                if (g - f64::from(u8::from(i == j))).abs() > 1e-13 {
                    return Err(format!("Y^{p} not orthonormal at ({i},{j})"));
                }
            }
        }
        // div V^p = Y^p: every divergence lies in Y^p and the map is onto.
        let v = eval_basis(MasterSpace::V, p, &rule.points).unwrap();
        let ym = DenseMatrix::from_fn(rule.points.len(), y.dim(), |k, j| y.scalar(j, k));
        let mut div = DenseMatrix::zeros(y.dim(), v.dim());
        for i in 0..v.dim() {
            let d: Vec<f64> = (0..rule.points.len()).map(|k| v.divergence(i, k)).collect();
            let c = least_squares_qr(&ym, &d).unwrap();
            let fit = ym.mat_vec(&c);
            if rel(&fit, &d) > 1e-12 && common::norm(&d) > 1e-12 {
                return Err(format!("div of V^{p} function {i} leaves Y^{p}"));
            }
            div.set_column(i, &c);
        }
        let sv = dls::linalg::singular_values(&div);
        if sv.len() != y.dim() {
            return Err(format!("div V^{p} -> Y^{p} has rank {} < {}", sv.len(), y.dim()));
        }
    }
    Ok(())
}

fn element_checks() -> Result<(), String> {
    let mut r = rng(3);
    for seed in 0..20u64 {
        use rand::Rng;
        let m = r.gen_range(2..10);
        let n = r.gen_range(1..m + 1);
        let l: DenseMatrix<C64> = common::random_matrix(&mut r, m, m);
        let g = l.gram().add(&DenseMatrix::identity(m));
        let b: DenseMatrix<C64> = common::random_matrix(&mut r, m, n);
        let lv: Vec<C64> = common::random_vector(&mut r, m);
        let (bt, lt) = whiten(&g, &b, &lv).unwrap();
        // B̃*B̃ = B*G⁻¹B and B̃*l̃ = B*G⁻¹l.
        let mut ginv_b = DenseMatrix::zeros(m, n);
        for j in 0..n {
            ginv_b.set_column(j, &solve_spd(&g, &b.column(j)).unwrap());
        }
        let ginv_l = solve_spd(&g, &lv).unwrap();
        if relative_distance(&bt.gram(), &b.adjoint_matmul(&ginv_b)) > 1e-10
            || rel(&bt.adjoint_mat_vec(&lt), &b.adjoint_mat_vec(&ginv_l)) > 1e-10
        {
            return Err(format!("whitening identity fails (seed {seed})"));
        }
        // (I − P) is idempotent and kills the bubble columns.
        if n >= 2 {
            let nb = 1 + (seed as usize) % (n - 1);
            let bub: Vec<usize> = (0..nb).collect();
            let int: Vec<usize> = (nb..n).collect();
            let c = condense_ls(&bt.select_columns(&int), &bt.select_columns(&bub), &lt).map_err(|e| e.to_string())?;
            let c2 = condense_ls(&c.rows, &bt.select_columns(&bub), &c.rhs).map_err(|e| e.to_string())?;
            let orth = bt.select_columns(&bub).adjoint_matmul(&c.rows).max_abs();
            if relative_distance(&c2.rows, &c.rows) > 1e-12 || orth > 1e-12 * bt.max_abs().max(1.0) {
                return Err(format!("projector fails (seed {seed})"));
            }
        }
    }
    let form = make_formulation(FormulationKind::FoslsStrong, 2, 1, Parameters::default()).unwrap();
    let case = make_case("poisson-sine").unwrap();
    let mesh = uniform_mesh(4).unwrap();
    let tables = FormTables::new(&form, mesh.h()).unwrap();
    let signs = vec![1i8; form.trial_dim()];
    for el in mesh.elements() {
        let g = compute_element(&form, el, &tables, &case, &signs).gram.unwrap();
        let off = (0..g.rows())
            .flat_map(|i| (0..g.cols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)].norm())
            .fold(0.0, f64::max);
        if off > 1e-13 * g.max_abs() {
            return Err("FOSLS Gram has off-diagonal entries".into());
        }
    }
    Ok(())
}

/// `(‖r̃‖², Ση_K²)`; without enrichment the test space is too small for a
/// well-posed solve, so only the assembly identity is checked there.
fn indicator_sums<T: Scalar>(ls: &dls::assembly::LsAssembly<T>, dp: usize) -> Result<(f64, f64), String> {
    if dp == 0 {
        return Ok((0.0, 0.0));
    }
    let s = solve_ls(ls).map_err(|e| e.to_string())?;
    Ok((common::norm(&s.residual).powi(2), s.indicators.iter().map(|e| e * e).sum()))
}

fn assembly_checks() -> Result<(), String> {
    let kinds = [
        FormulationKind::FoslsStrong,
        FormulationKind::PrimalDpg,
        FormulationKind::UltraweakDpg,
        FormulationKind::AcousticsUltraweak,
    ];
    for kind in kinds {
        let case_name = if kind.is_complex() { "acoustics-resonance" } else { "poisson-sine" };
        for n in [1, 2, 4] {
            for p in [1, 2] {
                for dp in [0, 1, 2] {
                    let (form, case) = setup(kind, p, dp, case_name);
                    let mesh = uniform_mesh(n).unwrap();
                    let opts = options(true, true, true);
                    let (d, ind) = if kind.is_complex() {
                        let ne = assemble_ne::<C64>(&mesh, &form, &case, &opts).map_err(|e| e.to_string())?;
                        let ls = assemble_overdetermined::<C64>(&mesh, &form, &case, &opts).map_err(|e| e.to_string())?;
                        let d = relative_distance(&ne.a.to_dense(), &ls.b.to_dense().gram());
                        (d, indicator_sums(&ls, dp)?)
                    } else {
                        let ne = assemble_ne::<f64>(&mesh, &form, &case, &opts).map_err(|e| e.to_string())?;
                        let ls = assemble_overdetermined::<f64>(&mesh, &form, &case, &opts).map_err(|e| e.to_string())?;
                        let d = relative_distance(&ne.a.to_dense(), &ls.b.to_dense().gram());
                        (d, indicator_sums(&ls, dp)?)
                    };
                    if d > 1e-12 {
                        return Err(format!("cross-assembly {kind} n={n} p={p} dp={dp}: {d:.1e}"));
                    }
                    if (ind.0 - ind.1).abs() > 1e-12 * ind.0 {
                        return Err(format!("indicators {kind} n={n} p={p} dp={dp}"));
                    }
                }
            }
        }
    }
    for kind in POISSON {
        for n in [1, 2, 4] {
            let (form, case) = setup(kind, 2, 1, "poisson-sine");
            let mesh = uniform_mesh(n).unwrap();
            let base = solve_ls(&assemble_overdetermined::<f64>(&mesh, &form, &case, &options(true, false, false)).unwrap())
                .unwrap();
            for (gram, global) in [(true, false), (false, true), (true, true)] {
                let s = solve_ls(&assemble_overdetermined::<f64>(&mesh, &form, &case, &options(true, gram, global)).unwrap())
                    .unwrap();
                let d = rel(&s.coefficients, &base.coefficients);
                if d > 1e-12 {
                    return Err(format!("argmin moved {kind} n={n} gram={gram} global={global}: {d:.1e}"));
                }
            }
        }
    }
    Ok(())
}

fn invariants() -> Outcome {
    let checks = [
        ("basis", basis_checks()),
        ("element", element_checks()),
        ("assembly", assembly_checks()),
    ];
    let failed: Vec<String> = checks
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    if failed.is_empty() {
        (true, "basis exact sequence and orthonormality, whitening identity, projector, diagonal FOSLS Gram, cross-assembly, indicators, argmin invariance".into())
    } else {
        (false, failed.join("; "))
    }
}

fn convergence() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in [FormulationKind::UltraweakDpg, FormulationKind::FoslsStrong] {
        for p in [1, 2] {
            let mut cfg = study(StudyKind::Converge, kind, p, &[2, 4, 8, 16, 32]);
            cfg.solvers = SolverSet { ne: false, qr: true };
            let report = run(&cfg);
            let h: Vec<f64> = report.rows.iter().map(|r| r.h).collect();
            let e: Vec<f64> = report.rows.iter().map(|r| r.err_qr.unwrap_or(f64::NAN)).collect();
            let rate = finest_slope(&h, &e);
            ok &= (rate - p as f64).abs() <= 0.3;
            detail.push(format!("{kind} p={p}: {rate:.3}"));
        }
    }
    (ok, format!("L2 rates {}", detail.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("cond squaring", cond_squaring),
        ("condition slopes", slopes),
        ("FOSLS identity", fosls_identity),
        ("FOSLS distance rates", fosls_rates),
        ("NE/QR agreement", ne_qr_agreement),
        ("single-precision failure", single_precision_failure),
        ("acoustics near resonance", acoustics),
        ("condensation equivalence", condensation),
        ("invariant suites", invariants),
        ("convergence rates", convergence),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let (ok, detail) = check();
        failures += usize::from(!ok);
        println!(
            "criterion {:2} {}: {} ({:.1} s) {detail}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            name,
            t0.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
