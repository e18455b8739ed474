//! Acceptance run: one PASS/FAIL line per criterion at its stated tolerance.
//!
//! Criteria are evaluated on the default configuration (tube and deposit
//! materials from the reference table, h = 0.5 mm, 40×120 grid, δ = 1%).
//! Lines marked `*` repeat a criterion with the deposit permeability set to
//! that of the background; they are reported for comparison and do not
//! replace the primary line. The process exits 0 so the rest of the test
//! suite runs; the summary counts the failures.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eclsm::config::RunConfig;
use eclsm::forward::{assemble, assemble_load, solve, ForwardOperator, SlicedRule};
use eclsm::green::{green_closed_form, green_quadrature};
use eclsm::io::{read_matrix, write_matrix};
use eclsm::lsm::{morozov_epsilon, tikhonov_solve, IncidentRhs, IndicatorField, MorozovFlag, RhsProvider, SvdFactors};
use eclsm::materials::{coefficients, MaterialField};
use eclsm::mesh::{build_structured_mesh, Point2};
use eclsm::pipeline::{
    degrade, experiment_config, inversion_mesh, metrics, run_experiment, synthesize_clean, Inverter, Metrics,
};
use eclsm::synth::{MultistaticMatrix, ProbeKind};
use eclsm::Result;

#[derive(Default)]
struct Report {
    passed: usize,
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, text: String) {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        println!("{} {id:<4} {text}", if pass { "PASS" } else { "FAIL" });
    }

    fn error(&mut self, id: &str, e: eclsm::Error) {
        self.line(id, false, format!("error: {e}"));
    }
}

fn mm(x: f64) -> f64 {
    x * 1e3
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn green(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = Point2::new(rng.gen_range(1e-4..0.05), rng.gen_range(-0.05..0.05));
        let x0 = Point2::new(rng.gen_range(1e-3..0.05), rng.gen_range(-0.05..0.05));
        if x.distance(&x0) < 1e-4 {
            continue;
        }
        let c = green_closed_form(x, x0).unwrap();
        let q = green_quadrature(x, x0, 16).unwrap();
        worst = worst.max((c - q).abs() / c.abs());
    }
    let x0 = Point2::new(8.165e-3, 0.0);
    // |x| → ∞: r₀² r / (4|x|³)
    let far = Point2::new(3.0, 4.0);
    let far_ratio = green_closed_form(far, x0).unwrap() / (x0.r * x0.r * far.r / (4.0 * 125.0));
    // r → 0: r₀² r / (4 (r² + r₀² + (z − z₀)²)^{3/2})
    let near = Point2::new(1e-6, 0.01);
    let d2 = near.r * near.r + x0.r * x0.r + (near.z - x0.z).powi(2);
    let near_ratio = green_closed_form(near, x0).unwrap() / (x0.r * x0.r * near.r / (4.0 * d2.powf(1.5)));
    let secs = start.elapsed().as_secs_f64();
    let in_band = |r: f64| (0.99..=1.01).contains(&r);
    report.line(
        "1",
        worst < 1e-9 && in_band(far_ratio) && in_band(near_ratio) && secs < 5.0,
        format!(
            "Green routes: max rel diff {worst:.2e} (< 1e-9) on 1000 pairs; far ratio {far_ratio:.6}, axis ratio {near_ratio:.6} (in [0.99, 1.01]); {secs:.2} s (< 5 s)"
        ),
    );
}

fn manufactured_l2_error(h: f64) -> f64 {
    let (mu, sigma, omega) = (1.0, 1.0, 1.0);
    let exact = |p: Point2| p.r * (1.0 - p.r) * (PI * p.z).sin();
    let mesh = Arc::new(build_structured_mesh(1.0, 0.0, 1.0, h).unwrap());
    let n = mesh.n_triangles();
    let mat = MaterialField::from_values(vec![sigma; n], vec![mu; n], false).unwrap();
    let mut sys = assemble(&mesh, &mat, omega).unwrap();
    let load = assemble_load(&mesh, |p| {
        let s = (PI * p.z).sin();
        let q = p.r * (1.0 - p.r);
        Complex64::new((3.0 + PI * PI * q) * s / mu, -omega * sigma * q * s)
    });
    sys.set_load(&load).unwrap();
    let u = solve(&sys).unwrap();
    let rule = SlicedRule::new(5, 5);
    let mut err = 0.0;
    for t in 0..n {
        let tri = mesh.triangles()[t];
        rule.for_each(&mesh.corners(t), |p, w| {
            let l = mesh.barycentric(t, p);
            let uh: Complex64 = (0..3).map(|k| u.values()[tri[k]] * l[k]).sum();
            err += w * p.r * (uh - exact(p)).norm_sqr();
        });
    }
    err.sqrt()
}

fn convergence(report: &mut Report) {
    let start = Instant::now();
    let errors: Vec<f64> = [8.0, 16.0, 32.0, 64.0].iter().map(|n| manufactured_l2_error(1.0 / n)).collect();
    let rates: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let secs = start.elapsed().as_secs_f64();
    report.line(
        "2",
        rates.iter().all(|r| (1.8..=2.2).contains(r)) && secs < 120.0,
        format!("FEM L2 orders {rates:.3?} over three refinements (in [1.8, 2.2]); {secs:.1} s (< 120 s)"),
    );
}

fn tikhonov_morozov(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = DMatrix::from_fn(16, 16, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let phi: Vec<Complex64> = (0..16).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let svd = SvdFactors::new(&z).unwrap();
    let eps = 1e-2 * svd.singular_values()[0].powi(2);
    let g = tikhonov_solve(&svd, &phi, eps).unwrap();
    let za = z.adjoint();
    let lhs = &za * &z + DMatrix::identity(16, 16) * Complex64::new(eps, 0.0);
    let direct = lhs.lu().solve(&(&za * DVector::from_column_slice(&phi))).unwrap();
    let diff = g.iter().zip(direct.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / direct.norm();
    report.line("5a", diff < 1e-10, format!("SVD vs normal-equation solve: rel diff {diff:.2e} (< 1e-10)"));

    let eye = SvdFactors::new(&DMatrix::identity(8, 8)).unwrap();
    let phi: Vec<Complex64> = (0..8).map(|k| Complex64::new(1.0 + k as f64, -0.5)).collect();
    let mut worst: f64 = 0.0;
    for delta in [1e-3, 1e-2, 0.1] {
        let c = morozov_epsilon(&eye, &phi, delta).unwrap();
        worst = worst.max((c.epsilon / delta).ln().abs());
    }
    report.line(
        "5c",
        worst <= 1e-8,
        format!("Z = I: |ln(eps*/delta)| max {worst:.2e} (bisection width 1e-8)"),
    );
}

/// Relative discrepancy `|‖Zg − φ‖ − δσ₁‖g‖| / (δσ₁‖g‖)` at every converged grid point.
fn discrepancy_check(report: &mut Report, cfg: &RunConfig, data: &MultistaticMatrix, ind: &IndicatorField) -> Result<()> {
    let mesh = inversion_mesh(cfg)?;
    let op = ForwardOperator::new(mesh.clone(), coefficients(&mesh, &cfg.effective_materials(), false)?, cfg.omega)?;
    let fields = op.incidents(&cfg.probes.sources())?;
    let rhs = IncidentRhs::new(&cfg.probes, &fields)?.normalized(cfg.lsm.normalize_rhs);
    let z = data.to_dmatrix();
    let svd = SvdFactors::from_matrix(data)?;
    let bound = ind.delta * svd.singular_values()[0];
    let (mut ok, mut converged, mut flagged) = (0, 0, 0);
    for (l, flag) in ind.flags.iter().enumerate() {
        if *flag != MorozovFlag::Converged {
            flagged += 1;
            continue;
        }
        converged += 1;
        let phi = rhs.rhs(ind.grid.point(l))?;
        let g = tikhonov_solve(&svd, &phi, ind.epsilon[l])?;
        let zg = &z * DVector::from_column_slice(&g);
        let r: Vec<Complex64> = zg.iter().zip(&phi).map(|(a, b)| a - b).collect();
        let target = bound * norm(&g);
        if ((norm(&r) - target) / target).abs() < 1e-6 {
            ok += 1;
        }
    }
    let total = ind.grid.len();
    let share = ok as f64 / total as f64;
    report.line(
        "5b",
        share >= 0.95,
        format!(
            "Morozov equality to 1e-6 on {ok}/{total} grid points ({:.1}%, >= 95%); {converged} converged, {flagged} flagged at a bracket end",
            100.0 * share
        ),
    );
    Ok(())
}

fn null_test(report: &mut Report) -> Result<()> {
    let mut worst = Vec::new();
    for kind in [ProbeKind::Point, ProbeKind::Coil] {
        let mut cfg = RunConfig::default();
        cfg.probes.kind = kind;
        cfg.geometry.deposits.clear();
        let empty = synthesize_clean(&cfg)?;
        // deposit region present, its material equal to the background
        let mut cfg = RunConfig::default();
        cfg.probes.kind = kind;
        cfg.materials.deposits = vec![cfg.materials.vacuum];
        let matched = synthesize_clean(&cfg)?;
        worst.push((kind, empty.frobenius(), matched.frobenius()));
    }
    let pass = worst.iter().all(|&(_, a, b)| a == 0.0 && b == 0.0);
    let text = worst
        .iter()
        .map(|(k, a, b)| format!("{k}: |Z| = {a:e} (no deposit), {b:e} (background deposit)"))
        .collect::<Vec<_>>()
        .join("; ");
    report.line("4", pass, format!("zero contrast gives exactly zero data: {text}"));
    Ok(())
}

struct BandSweep {
    clean: MultistaticMatrix,
    rows: Vec<(usize, Metrics)>,
}

/// `N = 32` data at `M ∈ {1, 2, 8, 32}` from one clean matrix and one set of incident fields.
fn band_sweep(id: &str, base: &RunConfig) -> Result<BandSweep> {
    let mut cfg = experiment_config(id, base)?;
    let clean = synthesize_clean(&cfg)?;
    let inverter = Inverter::new(&cfg)?;
    let mut rows = Vec::new();
    for m in [1, 2, 8, 32] {
        cfg.band.m = Some(m);
        let data = degrade(&cfg, &clean)?;
        let ind = inverter.invert(&data)?;
        rows.push((m, metrics(&ind, &cfg.geometry.deposits)));
    }
    Ok(BandSweep { clean, rows })
}

fn full_matrix(report: &mut Report, tag: &str, label: &str, prefix: &str, base: &RunConfig) -> Result<()> {
    let run16 = run_experiment(&experiment_config(&format!("{prefix}16"), base)?)?;
    let m = &run16.metrics;
    report.line(
        &format!("{tag}a"),
        m.argmax_inside,
        format!(
            "{label} N=16: argmax ({:.2}, {:.2}) mm inside deposit: {}",
            mm(m.argmax.r),
            mm(m.argmax.z),
            m.argmax_inside
        ),
    );
    report.line(
        &format!("{tag}b"),
        m.contrast > 2.0,
        format!("{label} N=16: contrast {:.3} (> 2)", m.contrast),
    );
    let run4 = run_experiment(&experiment_config(&format!("{prefix}4"), base)?)?;
    let d = run4.metrics.centroid_distance;
    report.line(
        &format!("{tag}c"),
        d <= 5e-3,
        format!("{label} N=4: argmax {:.2} mm from deposit centroid (<= 5 mm)", mm(d)),
    );
    Ok(())
}

fn banded(report: &mut Report, ids: [&str; 2], label: &str, sweep: &BandSweep) {
    let m1 = &sweep.rows[0].1;
    report.line(
        ids[0],
        m1.z_error <= 2.5e-3,
        format!("{label} M=1: |z(argmax) - z(centroid)| = {:.2} mm (<= 2.5 mm)", mm(m1.z_error)),
    );
    let contrasts: Vec<f64> = sweep.rows.iter().map(|(_, m)| m.contrast).collect();
    let monotone = contrasts.windows(2).all(|w| w[1] >= w[0]);
    let listed = sweep
        .rows
        .iter()
        .map(|(m, r)| format!("M={m}: {:.3}", r.contrast))
        .collect::<Vec<_>>()
        .join(", ");
    report.line(
        ids[1],
        monotone,
        format!("{label}: contrast non-decreasing in M ({listed})"),
    );
}

fn reciprocity(report: &mut Report, point: &MultistaticMatrix, coil: &MultistaticMatrix) {
    let (a, b) = (point.asymmetry(), coil.asymmetry());
    report.line(
        "3",
        a < 1e-2 && b < 1e-2,
        format!("clean N=32 matrices symmetric: point {a:.2e}, coil {b:.2e} (< 1e-2, max norm)"),
    );
}

fn two_deposits(report: &mut Report, base: &RunConfig) -> Result<()> {
    let run = run_experiment(&experiment_config("fig9_two_deposits", base)?)?;
    let m = &run.metrics;
    let peaks: Vec<String> = m
        .peaks
        .iter()
        .take(2)
        .map(|p| format!("({:.2}, {:.2})", mm(p.r), mm(p.z)))
        .collect();
    report.line(
        "9",
        m.peaks.len() >= 2 && m.components_found.iter().all(|&f| f),
        format!(
            "two deposits, coils, M=8: strongest smoothed maxima {} mm; component hits {:?}",
            peaks.join(" "),
            m.components_found
        ),
    );
    Ok(())
}

fn determinism(report: &mut Report, base: &RunConfig) -> Result<()> {
    let cfg = experiment_config("fig5_N16", base)?;
    let a = run_experiment(&cfg)?;
    let b = run_experiment(&cfg)?;
    let same_bits = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    let same_data = a
        .synthesis
        .data
        .entries()
        .iter()
        .zip(b.synthesis.data.entries())
        .all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits());
    let same_indicator = same_bits(&a.indicator.raw, &b.indicator.raw) && same_bits(&a.indicator.epsilon, &b.indicator.epsilon);

    let mut buf = Vec::new();
    write_matrix(&mut buf, &a.synthesis.data, &cfg.hash())?;
    let back = read_matrix(buf.as_slice())?;
    let round_trip = back.n() == a.synthesis.data.n()
        && back.band == a.synthesis.data.band
        && back.noise_level.to_bits() == a.synthesis.data.noise_level.to_bits()
        && back
            .entries()
            .iter()
            .zip(a.synthesis.data.entries())
            .all(|(p, q)| p.re.to_bits() == q.re.to_bits() && p.im.to_bits() == q.im.to_bits());
    report.line(
        "10",
        same_data && same_indicator && round_trip,
        format!("rerun bit-identical: data {same_data}, indicator {same_indicator}; matrix file round trip bit-exact: {round_trip}"),
    );
    Ok(())
}

/// Far-field truncation: doubling the outer radius changes the clean data by less than 1e-2.
fn truncation(report: &mut Report) -> Result<()> {
    let base = experiment_config("fig5_N16", &RunConfig::default())?;
    let near = synthesize_clean(&base)?;
    let mut wide = base.clone();
    wide.mesh.r_max *= 2.0;
    wide.mesh.z_margin *= 2.0;
    let far = synthesize_clean(&wide)?;
    let diff = near
        .entries()
        .iter()
        .zip(far.entries())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
        / far.max_abs();
    report.line(
        "T",
        diff < 1e-2,
        format!(
            "domain truncation: R_max {:.0} vs {:.0} mm changes point data by {diff:.2e} (< 1e-2, max norm)",
            mm(base.mesh.r_max),
            mm(wide.mesh.r_max)
        ),
    );
    Ok(())
}

fn main() {
    let start = Instant::now();
    let mut report = Report::default();
    let table = RunConfig::default();
    let matched = RunConfig {
        force_mu_match: true,
        ..RunConfig::default()
    };

    green(&mut report);
    convergence(&mut report);

    let point = band_sweep("fig6_M1", &table);
    let coil = band_sweep("fig8_coils_M1", &table);
    match (&point, &coil) {
        (Ok(p), Ok(c)) => reciprocity(&mut report, &p.clean, &c.clean),
        (Err(e), _) | (_, Err(e)) => report.line("3", false, format!("error: {e}")),
    }
    if let Err(e) = null_test(&mut report) {
        report.error("4", e);
    }

    tikhonov_morozov(&mut report);
    let morozov = (|| {
        let cfg = experiment_config("fig5_N16", &table)?;
        let run = run_experiment(&cfg)?;
        discrepancy_check(&mut report, &cfg, &run.synthesis.data, &run.indicator)
    })();
    if let Err(e) = morozov {
        report.error("5b", e);
    }

    if let Err(e) = full_matrix(&mut report, "6", "point", "fig5_N", &table) {
        report.error("6", e);
    }
    if let Err(e) = full_matrix(&mut report, "6*", "point, matched mu", "fig5_N", &matched) {
        report.error("6*", e);
    }
    match &point {
        Ok(s) => banded(&mut report, ["7a", "7b"], "point", s),
        Err(e) => report.line("7", false, format!("error: {e}")),
    }
    match band_sweep("fig6_M1", &matched) {
        Ok(s) => banded(&mut report, ["7*a", "7*b"], "point, matched mu", &s),
        Err(e) => report.error("7*", e),
    }

    if let Err(e) = full_matrix(&mut report, "8", "coil", "fig7_coils_N", &table) {
        report.error("8", e);
    }
    match &coil {
        Ok(s) => banded(&mut report, ["8d", "8e"], "coil", s),
        Err(e) => report.line("8", false, format!("error: {e}")),
    }

    if let Err(e) = two_deposits(&mut report, &table) {
        report.error("9", e);
    }
    if let Err(e) = determinism(&mut report, &table) {
        report.error("10", e);
    }
    if let Err(e) = truncation(&mut report) {
        report.error("T", e);
    }

    println!(
        "acceptance: {} passed, {} failed in {:.0} s",
        report.passed,
        report.failed,
        start.elapsed().as_secs_f64()
    );
}
