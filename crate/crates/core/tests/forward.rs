use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eclsm::forward::{
    assemble, assemble_load, element_matrices, evaluate, scattered_field, solve, Coil, ComplexField,
    ForwardOperator, ScatteringSolver, SourceSpec,
};
use eclsm::green::green_closed_form;
use eclsm::materials::{coefficients, default_table, MaterialField};
use eclsm::mesh::{build_structured_mesh, build_tensor_mesh, graded_lines, tag_regions, Band, Mesh, Point2, RegionSpec};
use eclsm::Error;

const MU0: f64 = 4.0e-7 * PI;
const OMEGA: f64 = 200.0 * PI;

fn uniform(mesh: &Mesh, sigma: f64, mu: f64) -> MaterialField {
    let n = mesh.n_triangles();
    MaterialField::from_values(vec![sigma; n], vec![mu; n], false).unwrap()
}

/// Tube of the default geometry plus an optional semi-disc deposit, on a graded mesh.
fn tube_mesh(h: f64, deposit: bool) -> Arc<Mesh> {
    tube_mesh_band(h, 0.012, deposit)
}

fn tube_mesh_band(h: f64, half_band: f64, deposit: bool) -> Arc<Mesh> {
    let r = graded_lines(
        0.0,
        0.072,
        4e-3,
        &[Band { lo: 6e-3, hi: 16e-3, h }],
        &[9.84e-3, 11.11e-3],
        1.3,
    )
    .unwrap();
    let z = graded_lines(-0.04, 0.04, 4e-3, &[Band { lo: -half_band, hi: half_band, h }], &[], 1.3).unwrap();
    let mut specs = vec![RegionSpec::TubeAnnulus {
        inner_radius: 9.84e-3,
        thickness: 1.27e-3,
    }];
    if deposit {
        specs.push(RegionSpec::SemiDiscDeposit {
            attachment_radius: 11.11e-3,
            radius_r: 3e-3,
            radius_z: 5e-3,
            center_z: 0.0,
        });
    }
    Arc::new(tag_regions(build_tensor_mesh(&r, &z).unwrap(), &specs).unwrap())
}

#[test]
fn single_triangle_matches_hand_integration() {
    let tri = [Point2::new(1.0, 0.0), Point2::new(2.0, 0.0), Point2::new(2.0, 1.0)];
    let (k, m) = element_matrices(&tri);
    let ln2 = 2f64.ln();
    let k_exact = [
        [0.560_744_611_093_552_1, -1.5 + ln2, -5.0 / 6.0 + ln2],
        [-1.5 + ln2, 41.0 / 18.0 - ln2 / 3.0, -19.0 / 36.0 - ln2 / 6.0],
        [-5.0 / 6.0 + ln2, -19.0 / 36.0 - ln2 / 6.0, 10.0 / 9.0 - ln2 / 3.0],
    ];
    let m_exact = [
        [7.0 / 60.0, 1.0 / 15.0, 1.0 / 15.0],
        [1.0 / 15.0, 0.15, 0.075],
        [1.0 / 15.0, 0.075, 0.15],
    ];
    for i in 0..3 {
        for j in 0..3 {
            assert!((k[i][j] - k_exact[i][j]).abs() < 1e-12, "K[{i}][{j}] = {}", k[i][j]);
            assert!((m[i][j] - m_exact[i][j]).abs() < 1e-12, "M[{i}][{j}] = {}", m[i][j]);
        }
    }
}

#[test]
fn static_operator_is_positive_definite() {
    let mesh = Arc::new(build_structured_mesh(1.0, 0.0, 1.0, 0.25).unwrap());
    let sys = assemble(&mesh, &uniform(&mesh, 0.0, 1.0), OMEGA).unwrap();
    let dense = sys.matrix.to_dense();
    let n = dense.len();
    assert_eq!(n, 9);
    assert!(dense.iter().flatten().all(|v| v.im == 0.0));
    let real = DMatrix::from_fn(n, n, |i, j| dense[i][j].re);
    let eig = real.symmetric_eigen();
    assert!(eig.eigenvalues.iter().all(|&l| l > 0.0), "{:?}", eig.eigenvalues);
}

#[test]
fn stiffness_scales_with_inverse_permeability() {
    let mesh = Arc::new(build_structured_mesh(1.0, -1.0, 1.0, 0.25).unwrap());
    let a1 = assemble(&mesh, &uniform(&mesh, 0.0, 1.0), OMEGA).unwrap().matrix;
    let a2 = assemble(&mesh, &uniform(&mesh, 0.0, 2.0), OMEGA).unwrap().matrix;
    let (d1, d2) = (a1.to_dense(), a2.to_dense());
    for (r1, r2) in d1.iter().zip(&d2) {
        for (x, y) in r1.iter().zip(r2) {
            assert_eq!(*x, 2.0 * y);
        }
    }
}

#[test]
fn assembled_matrix_is_exactly_symmetric() {
    let mesh = tube_mesh(1e-3, true);
    let mat = coefficients(&mesh, &default_table(), true).unwrap();
    let sys = assemble(&mesh, &mat, OMEGA).unwrap();
    assert!(sys.matrix.is_symmetric());
    assert!(sys.matrix.bandwidth() < mesh.grid().unwrap().r_lines.len());
}

#[test]
fn zero_load_gives_zero_field() {
    let mesh = Arc::new(build_structured_mesh(1.0, 0.0, 1.0, 0.1).unwrap());
    let sys = assemble(&mesh, &uniform(&mesh, 1.0, 1.0), 1.0).unwrap();
    let u = solve(&sys).unwrap();
    assert!(u.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
}

#[test]
fn algebraic_manufactured_solution() {
    let (rmax, l) = (1.0, 1.0);
    let mesh = Arc::new(build_structured_mesh(rmax, 0.0, l, 0.05).unwrap());
    let mut sys = assemble(&mesh, &uniform(&mesh, 3.0, 0.7), 2.0).unwrap();
    let exact: Vec<Complex64> = sys
        .dofs()
        .free_vertices()
        .iter()
        .map(|&v| {
            let p = mesh.vertices()[v];
            Complex64::new(p.r * (rmax - p.r) * (PI * p.z / l).sin(), p.r * p.z)
        })
        .collect();
    sys.rhs = sys.matrix.matvec(&exact);
    let u = solve(&sys).unwrap();
    let got = sys.dofs().restrict(u.values());
    let err = got.iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    let scale = exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(err < 1e-10 * scale, "max error {err:e}");
}

fn manufactured_l2_error(h: f64) -> f64 {
    let (mu, sigma, omega) = (1.0, 1.0, 1.0);
    let exact = |p: Point2| p.r * (1.0 - p.r) * (PI * p.z).sin();
    let mesh = Arc::new(build_structured_mesh(1.0, 0.0, 1.0, h).unwrap());
    let mut sys = assemble(&mesh, &uniform(&mesh, sigma, mu), omega).unwrap();
    let load = assemble_load(&mesh, |p| {
        let s = (PI * p.z).sin();
        let q = p.r * (1.0 - p.r);
        Complex64::new((3.0 + PI * PI * q) * s / mu, -omega * sigma * q * s)
    });
    sys.set_load(&load).unwrap();
    let u = solve(&sys).unwrap();
    let rule = eclsm::forward::SlicedRule::new(5, 5);
    let mut err = 0.0;
    for t in 0..mesh.n_triangles() {
        let corners = mesh.corners(t);
        let tri = mesh.triangles()[t];
        rule.for_each(&corners, |p, w| {
            let l = mesh.barycentric(t, p);
            let uh: Complex64 = (0..3).map(|k| u.values()[tri[k]] * l[k]).sum();
            err += w * p.r * (uh - exact(p)).norm_sqr();
        });
    }
    err.sqrt()
}

#[test]
fn p1_convergence_is_second_order() {
    let errors: Vec<f64> = [1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
        .iter()
        .map(|&h| manufactured_l2_error(h))
        .collect();
    for w in errors.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&rate), "rate {rate} from {errors:?}");
    }
}

#[test]
fn interpolation_contracts() {
    let mesh = Arc::new(build_structured_mesh(1.0, -1.0, 1.0, 0.25).unwrap());
    let values = mesh
        .vertices()
        .iter()
        .map(|p| Complex64::new(2.0 * p.r - p.z + 0.5, p.z))
        .collect();
    let f = ComplexField::new(mesh.clone(), values).unwrap();
    for (v, p) in mesh.vertices().iter().enumerate() {
        assert_eq!(evaluate(&f, *p).unwrap(), f.values()[v]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let p = Point2::new(rng.gen_range(0.0..1.0), rng.gen_range(-1.0..1.0));
        let u = f.evaluate(p).unwrap();
        assert!((u - Complex64::new(2.0 * p.r - p.z + 0.5, p.z)).norm() < 1e-13);
    }
    let tri = mesh.triangles()[7];
    let (a, b) = (mesh.vertices()[tri[0]], mesh.vertices()[tri[1]]);
    let mid = Point2::new(0.5 * (a.r + b.r), 0.5 * (a.z + b.z));
    let expected = 0.5 * (f.values()[tri[0]] + f.values()[tri[1]]);
    assert!((f.evaluate(mid).unwrap() - expected).norm() < 1e-14);
    assert!(matches!(f.evaluate(Point2::new(2.0, 0.0)), Err(Error::OutsideMesh { .. })));
}

#[test]
fn vacuum_point_source_is_the_scaled_green_function() {
    let mesh = tube_mesh(5e-4, false);
    let op = ForwardOperator::new(mesh.clone(), uniform(&mesh, 0.0, MU0), OMEGA).unwrap();
    let x0 = Point2::new(8.165e-3, 0.0);
    let u0 = op.incident(&SourceSpec::Point(x0)).unwrap();
    let lumped = op.incident(&SourceSpec::NodalDelta(x0)).unwrap();
    let (mut d_green, mut d_lumped, mut den) = (0.0, 0.0, 0.0);
    for p in mesh.vertices() {
        let d = p.distance(&x0);
        if p.r == 0.0 || !(2e-3..1e-2).contains(&d) {
            continue;
        }
        let exact = MU0 * green_closed_form(*p, x0).unwrap();
        let u = u0.evaluate(*p).unwrap();
        d_green += (u - exact).norm_sqr();
        d_lumped += (lumped.evaluate(*p).unwrap() - u).norm_sqr();
        den += exact * exact;
    }
    // only the truncation separates the field from μ₀Φ
    assert!((d_green / den).sqrt() < 2e-2, "vs green {}", (d_green / den).sqrt());
    assert!((d_lumped / den).sqrt() < 1e-2, "vs lumped {}", (d_lumped / den).sqrt());
    for (v, f) in mesh.flags().iter().enumerate() {
        if f.is_boundary() {
            assert_eq!(u0.nodal().values()[v], Complex64::new(0.0, 0.0));
        }
    }
}

#[test]
fn incident_field_reciprocity() {
    let mesh = tube_mesh(5e-4, false);
    let mat = coefficients(&mesh, &default_table(), false).unwrap();
    let op = ForwardOperator::new(mesh.clone(), mat, OMEGA).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sample = |rng: &mut ChaCha8Rng| {
        let r = if rng.gen_bool(0.5) {
            rng.gen_range(3e-3..9.5e-3)
        } else {
            rng.gen_range(11.5e-3..16e-3)
        };
        Point2::new(r, rng.gen_range(-0.01..0.01))
    };
    for _ in 0..20 {
        let (x, x0) = (sample(&mut rng), sample(&mut rng));
        if x.distance(&x0) < 1e-3 {
            continue;
        }
        let a = op.incident(&SourceSpec::Point(x0)).unwrap().evaluate(x).unwrap() * x.r;
        let b = op.incident(&SourceSpec::Point(x)).unwrap().evaluate(x0).unwrap() * x0.r;
        assert!((a - b).norm() < 1e-2 * a.norm(), "{x:?} {x0:?}: {a} vs {b}");
    }
}

#[test]
fn coil_approaches_equivalent_point_source_far_away() {
    let mesh = tube_mesh_band(2.5e-4, 0.025, false);
    let op = ForwardOperator::new(mesh.clone(), uniform(&mesh, 0.0, MU0), OMEGA).unwrap();
    let coil = Coil {
        center: Point2::new(8.165e-3, 0.0),
        width: 0.67e-3,
        height: 2e-3,
        current_density: 1.0,
    };
    let uc = op.incident(&SourceSpec::Coil(coil)).unwrap();
    let up = op.incident(&SourceSpec::Point(coil.center)).unwrap();
    let strength = Complex64::new(0.0, OMEGA * coil.current_density * coil.width * coil.height);
    for p in [Point2::new(8.165e-3, 0.02), Point2::new(8.165e-3, -0.02), Point2::new(14e-3, 0.02)] {
        let a = uc.evaluate(p).unwrap();
        let b = strength * up.evaluate(p).unwrap();
        assert!((a - b).norm() < 0.05 * b.norm(), "{p:?}: {a} vs {b}");
    }
}

#[test]
fn coil_overlapping_tube_is_rejected() {
    let mesh = tube_mesh(1e-3, false);
    let op = ForwardOperator::new(mesh.clone(), coefficients(&mesh, &default_table(), false).unwrap(), OMEGA).unwrap();
    let coil = Coil {
        center: Point2::new(10e-3, 0.0),
        width: 0.67e-3,
        height: 2e-3,
        current_density: 1.0,
    };
    assert!(op.incident(&SourceSpec::Coil(coil)).is_err());
    assert!(op.incident(&SourceSpec::Point(Point2::new(10.5e-3, 0.0))).is_err());
    assert!(op.incident(&SourceSpec::Point(Point2::new(0.0, 0.0))).is_err());
}

#[test]
fn zero_contrast_gives_zero_scattered_field() {
    let mesh = tube_mesh(1e-3, true);
    let table = default_table();
    let reference = coefficients(&mesh, &table, false).unwrap();
    let op = ForwardOperator::new(mesh.clone(), reference.clone(), OMEGA).unwrap();
    let u0 = op.incident(&SourceSpec::Point(Point2::new(8.165e-3, 0.0))).unwrap();
    let us = scattered_field(&mesh, &reference, &reference, OMEGA, u0.nodal()).unwrap();
    assert!(us.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    let other = Arc::new(build_structured_mesh(0.03, -0.03, 0.03, 1e-3).unwrap());
    let u_other = ComplexField::zeros(other);
    assert!(matches!(
        scattered_field(&mesh, &reference, &reference, OMEGA, &u_other),
        Err(Error::MeshMismatch)
    ));
}

#[test]
fn total_field_satisfies_perturbed_equation() {
    let mesh = tube_mesh(5e-4, true);
    let table = default_table();
    let reference = coefficients(&mesh, &table, false).unwrap();
    let perturbed = coefficients(&mesh, &table, true).unwrap();
    let op = ForwardOperator::new(mesh.clone(), reference.clone(), OMEGA).unwrap();
    let solver = ScatteringSolver::new(mesh.clone(), &reference, perturbed, OMEGA).unwrap();
    let coil = SourceSpec::Coil(Coil {
        center: Point2::new(8.165e-3, 2.5e-3),
        width: 0.67e-3,
        height: 2e-3,
        current_density: 1.0,
    });
    let u0 = op.incident(&coil).unwrap();
    let us = solver.scattered(u0.nodal()).unwrap();
    assert!(us.values().iter().any(|v| v.norm() > 0.0));
    let total = u0.nodal().add(&us).unwrap();
    let pert = solver.perturbed().unwrap();
    let dofs = pert.dofs();
    let lhs = pert.matrix().matvec(&dofs.restrict(total.values()));
    let b = dofs.restrict(&op.load(&coil).unwrap());
    let res: f64 = lhs.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    assert!(res < 1e-8 * norm, "relative residual {:e}", res / norm);
}

#[test]
fn scattered_field_reciprocity() {
    let mesh = tube_mesh(5e-4, true);
    let table = default_table();
    let reference = coefficients(&mesh, &table, false).unwrap();
    let perturbed = coefficients(&mesh, &table, true).unwrap();
    let op = ForwardOperator::new(mesh.clone(), reference.clone(), OMEGA).unwrap();
    let solver = ScatteringSolver::new(mesh.clone(), &reference, perturbed, OMEGA).unwrap();
    let probes: Vec<Point2> = [-5e-3, -2.5e-3, 0.0, 4e-3].iter().map(|&z| Point2::new(8.165e-3, z)).collect();
    let us: Vec<_> = probes
        .iter()
        .map(|p| {
            let u0 = op.incident(&SourceSpec::Point(*p)).unwrap();
            solver.scattered(u0.nodal()).unwrap()
        })
        .collect();
    let z: Vec<Vec<Complex64>> = (0..probes.len())
        .map(|i| us.iter().map(|u| u.evaluate(probes[i]).unwrap()).collect())
        .collect();
    let max = z.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    let asym = (0..probes.len())
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (z[i][j] - z[j][i]).norm())
        .fold(0.0, f64::max);
    assert!(max > 0.0);
    assert!(asym < 1e-2 * max, "asymmetry {:e} of {max:e}", asym);
}

#[test]
fn coil_reaction_is_symmetric() {
    let mesh = tube_mesh(5e-4, true);
    let table = default_table();
    let reference = coefficients(&mesh, &table, false).unwrap();
    let perturbed = coefficients(&mesh, &table, true).unwrap();
    let op = ForwardOperator::new(mesh.clone(), reference.clone(), OMEGA).unwrap();
    let solver = ScatteringSolver::new(mesh.clone(), &reference, perturbed, OMEGA).unwrap();
    let coil = |z: f64, j: f64| {
        SourceSpec::Coil(Coil {
            center: Point2::new(8.165e-3, z),
            width: 0.67e-3,
            height: 2e-3,
            current_density: j,
        })
    };
    let u0a = op.incident(&coil(-2.5e-3, 1.0)).unwrap().into_nodal();
    let u0b = op.incident(&coil(5e-3, 1.0)).unwrap().into_nodal();
    let ua = u0a.add(&solver.scattered(&u0a).unwrap()).unwrap();
    let ub = u0b.add(&solver.scattered(&u0b).unwrap()).unwrap();
    let zab = solver.reaction(&ua, &u0b).unwrap();
    let zba = solver.reaction(&ub, &u0a).unwrap();
    assert!(zab.norm() > 0.0);
    assert!((zab - zba).norm() < 1e-6 * zab.norm(), "{zab} vs {zba}");
    // bilinear in the current density
    let u0c = op.incident(&coil(5e-3, 2.0)).unwrap().into_nodal();
    let uc = u0c.add(&solver.scattered(&u0c).unwrap()).unwrap();
    let u0d = op.incident(&coil(-2.5e-3, 2.0)).unwrap().into_nodal();
    let zdc = solver.reaction(&uc, &u0d).unwrap();
    assert!((zdc - 4.0 * solver.reaction(&ub, &u0a).unwrap()).norm() < 1e-9 * zdc.norm());
}
