//! P1 finite elements for `∇·(1/(μr) ∇(r u)) + iωσ u = −iωJ` on the meridian half-plane.
//!
//! The discrete bilinear form is
//! `a(u, v) = ∫ 1/(μ r) ∇(r u)·∇(r v) − iωσ u v r dr dz`,
//! without conjugation, so the matrix is complex symmetric. Vertices on the
//! axis and on the truncation boundary carry homogeneous Dirichlet values.

mod banded;
mod quadrature;
mod sparse;

use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

pub use banded::BandedLdl;
pub use quadrature::{clip_to_rectangle, gauss_legendre, SlicedRule};
pub use sparse::{bilinear, CsrMatrix};

use crate::error::{invalid, Error, Result};
use crate::green::{green_eval, NEAR_DIAGONAL};
use crate::materials::MaterialField;
use crate::mesh::{Mesh, Point2, RegionTag, VertexFlag};

/// Relative residual required of every linear solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Nodal values of the azimuthal electric field on a mesh.
#[derive(Clone, Debug)]
pub struct ComplexField {
    mesh: Arc<Mesh>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(mesh: Arc<Mesh>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return invalid(format!(
                "field has {} values for {} vertices",
                values.len(),
                mesh.n_vertices()
            ));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<Mesh>) -> Self {
        let values = vec![ZERO; mesh.n_vertices()];
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    /// P1 interpolation at `p`.
    pub fn evaluate(&self, p: Point2) -> Result<Complex64> {
        let loc = self.mesh.locate(p)?;
        let tri = self.mesh.triangles()[loc.triangle];
        Ok((0..3).map(|k| self.values[tri[k]] * loc.weights[k]).sum())
    }

    pub fn add(&self, other: &ComplexField) -> Result<ComplexField> {
        if self.mesh.id() != other.mesh.id() {
            return Err(Error::MeshMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(Self {
            mesh: self.mesh.clone(),
            values,
        })
    }

    /// Writes `r,z,Re(u),Im(u)` per vertex.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "r,z,Re(u),Im(u)")?;
        for (p, u) in self.mesh.vertices().iter().zip(&self.values) {
            writeln!(w, "{:e},{:e},{:e},{:e}", p.r, p.z, u.re, u.im)?;
        }
        Ok(())
    }
}

/// P1 interpolation of `field` at `p`.
pub fn evaluate(field: &ComplexField, p: Point2) -> Result<Complex64> {
    field.evaluate(p)
}

/// Affine P1 basis on one triangle: `φ_k = (a_k + b_k r + c_k z)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct P1Basis {
    a: [f64; 3],
    b: [f64; 3],
    c: [f64; 3],
}

impl P1Basis {
    pub(crate) fn new(p: &[Point2; 3]) -> Self {
        let det = (p[1].r - p[0].r) * (p[2].z - p[0].z) - (p[2].r - p[0].r) * (p[1].z - p[0].z);
        let mut s = Self {
            a: [0.0; 3],
            b: [0.0; 3],
            c: [0.0; 3],
        };
        for k in 0..3 {
            let (q1, q2) = (p[(k + 1) % 3], p[(k + 2) % 3]);
            s.a[k] = (q1.r * q2.z - q2.r * q1.z) / det;
            s.b[k] = (q1.z - q2.z) / det;
            s.c[k] = (q2.r - q1.r) / det;
        }
        s
    }

    pub(crate) fn values(&self, p: Point2) -> [f64; 3] {
        [0, 1, 2].map(|k| self.a[k] + self.b[k] * p.r + self.c[k] * p.z)
    }

    /// `∂φ_k/∂r`, `∂φ_k/∂z`.
    pub(crate) fn gradient(&self, k: usize) -> (f64, f64) {
        (self.b[k], self.c[k])
    }
}

fn stiffness_rule() -> SlicedRule {
    SlicedRule::new(10, 3)
}

fn load_rule() -> SlicedRule {
    SlicedRule::new(4, 3)
}

/// `∫ (1/r) ∇(r φ_i)·∇(r φ_j)` and `∫ φ_i φ_j r` over one triangle.
pub fn element_matrices(corners: &[Point2; 3]) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    element_matrices_with(corners, &stiffness_rule())
}

fn element_matrices_with(corners: &[Point2; 3], rule: &SlicedRule) -> ([[f64; 3]; 3], [[f64; 3]; 3]) {
    let basis = P1Basis::new(corners);
    let mut k = [[0.0; 3]; 3];
    let mut m = [[0.0; 3]; 3];
    rule.for_each(corners, |p, w| {
        let phi = basis.values(p);
        for i in 0..3 {
            let (bi, ci) = basis.gradient(i);
            for j in i..3 {
                let (bj, cj) = basis.gradient(j);
                k[i][j] += w
                    * (phi[i] * phi[j] / p.r + phi[i] * bj + phi[j] * bi + p.r * (bi * bj + ci * cj));
                m[i][j] += w * phi[i] * phi[j] * p.r;
            }
        }
    });
    for i in 0..3 {
        for j in 0..i {
            k[i][j] = k[j][i];
            m[i][j] = m[j][i];
        }
    }
    (k, m)
}

/// Vertex-level matrix of `Σ_t (s_t K_t − iω σ_t M_t)` over the selected triangles.
fn vertex_matrix(
    mesh: &Mesh,
    triangles: &[usize],
    omega: f64,
    coeffs: impl Fn(usize) -> (f64, f64),
) -> CsrMatrix {
    let mut rows = vec![Vec::new(); mesh.n_vertices()];
    for &t in triangles {
        let tri = mesh.triangles()[t];
        for &a in &tri {
            rows[a].extend_from_slice(&tri);
        }
    }
    let mut matrix = CsrMatrix::from_pattern(mesh.n_vertices(), rows);
    let rule = stiffness_rule();
    for &t in triangles {
        let (s, sigma) = coeffs(t);
        if s == 0.0 && sigma == 0.0 {
            continue;
        }
        let (k, m) = element_matrices_with(&mesh.corners(t), &rule);
        let tri = mesh.triangles()[t];
        for i in 0..3 {
            for j in 0..3 {
                let v = Complex64::new(s * k[i][j], -omega * sigma * m[i][j]);
                matrix.add(tri[i], tri[j], v);
            }
        }
    }
    matrix
}

/// Numbering of the vertices that carry unknowns.
#[derive(Clone, Debug, PartialEq)]
pub struct DofMap {
    free: Vec<usize>,
    index: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut free = Vec::new();
        let mut index = vec![None; mesh.n_vertices()];
        for (v, flag) in mesh.flags().iter().enumerate() {
            if *flag == VertexFlag::Interior {
                index[v] = Some(free.len());
                free.push(v);
            }
        }
        Self { free, index }
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_vertices(&self) -> &[usize] {
        &self.free
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.index[vertex]
    }

    /// Entries of a vertex vector at the free vertices.
    pub fn restrict(&self, vertex_values: &[Complex64]) -> Vec<Complex64> {
        self.free.iter().map(|&v| vertex_values[v]).collect()
    }

    /// Vertex vector with `x` on the free vertices and zero elsewhere.
    pub fn lift(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.index.len()];
        for (&v, &xv) in self.free.iter().zip(x) {
            out[v] = xv;
        }
        out
    }
}

/// Assembled system on the free vertices.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<Complex64>,
    mesh: Arc<Mesh>,
    dofs: DofMap,
    // (free dof, fixed vertex, entry) couplings used to lift Dirichlet data
    coupling: Vec<(usize, usize, Complex64)>,
}

impl LinearSystem {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    /// Sets the right-hand side from a vector indexed by vertex.
    pub fn set_load(&mut self, vertex_load: &[Complex64]) -> Result<()> {
        if vertex_load.len() != self.mesh.n_vertices() {
            return invalid("load vector length differs from vertex count");
        }
        self.rhs = self.dofs.restrict(vertex_load);
        Ok(())
    }
}

fn check_inputs(mesh: &Mesh, mat: &MaterialField, omega: f64) -> Result<()> {
    if !omega.is_finite() || omega < 0.0 {
        return invalid(format!("angular frequency must be finite and >= 0, got {omega}"));
    }
    if mat.len() != mesh.n_triangles() {
        return invalid("material field does not match the mesh");
    }
    if mat.sigma().iter().chain(mat.mu()).any(|v| !v.is_finite()) {
        return invalid("non-finite material coefficient");
    }
    Ok(())
}

/// Assembles the matrix on the free vertices, with a zero load vector.
pub fn assemble(mesh: &Arc<Mesh>, mat: &MaterialField, omega: f64) -> Result<LinearSystem> {
    check_inputs(mesh, mat, omega)?;
    let all: Vec<usize> = (0..mesh.n_triangles()).collect();
    let full = vertex_matrix(mesh, &all, omega, |t| (1.0 / mat.mu()[t], mat.sigma()[t]));
    let dofs = DofMap::new(mesh);
    let matrix = full.restrict(dofs.free_vertices());
    let mut coupling = Vec::new();
    for (k, &v) in dofs.free_vertices().iter().enumerate() {
        for (j, a) in full.row(v) {
            if dofs.dof(j).is_none() && a != ZERO {
                coupling.push((k, j, a));
            }
        }
    }
    Ok(LinearSystem {
        rhs: vec![ZERO; dofs.n_free()],
        matrix,
        mesh: mesh.clone(),
        dofs,
        coupling,
    })
}

/// Factorizes and solves an assembled system.
pub fn solve(system: &LinearSystem) -> Result<ComplexField> {
    let factor = BandedLdl::factor(&system.matrix)?;
    let x = solve_refined(&system.matrix, &factor, &system.rhs)?;
    ComplexField::new(system.mesh.clone(), system.dofs.lift(&x))
}

fn solve_refined(a: &CsrMatrix, factor: &BandedLdl, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let bnorm = sparse::norm(b);
    if bnorm == 0.0 {
        return Ok(vec![ZERO; b.len()]);
    }
    let mut x = factor.solve(b);
    let mut residual = f64::INFINITY;
    for step in 0..=3 {
        let ax = a.matvec(&x);
        let r: Vec<Complex64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        residual = sparse::norm(&r) / bnorm;
        if residual <= 1e-14 || step == 3 {
            break;
        }
        for (xi, di) in x.iter_mut().zip(factor.solve(&r)) {
            *xi += di;
        }
    }
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(Error::Residual {
            residual,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    Ok(x)
}

/// Rectangular coil of constant azimuthal current density, centred at `center`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coil {
    pub center: Point2,
    pub width: f64,
    pub height: f64,
    pub current_density: f64,
}

impl Coil {
    /// `(r_lo, r_hi, z_lo, z_hi)`
    pub fn rectangle(&self) -> (f64, f64, f64, f64) {
        (
            self.center.r - 0.5 * self.width,
            self.center.r + 0.5 * self.width,
            self.center.z - 0.5 * self.height,
            self.center.z + 0.5 * self.height,
        )
    }
}

/// Excitation of the forward problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceSpec {
    /// Unit ring source, realized by splitting off the free-space Green function.
    Point(Point2),
    Coil(Coil),
    /// Unit ring source lumped onto the vertices of its triangle. Debugging aid only.
    NodalDelta(Point2),
}

/// Incident field of one source, keeping the analytic part of point sources.
#[derive(Clone, Debug)]
pub struct IncidentField {
    source: SourceSpec,
    nodal: ComplexField,
    // μ₀(x₀)Φ(·; x₀) + regular, for point sources
    singular: Option<(Point2, f64, ComplexField)>,
}

impl IncidentField {
    pub fn source(&self) -> SourceSpec {
        self.source
    }

    /// Nodal values; at a vertex coinciding with a point source the analytic part is regularized.
    pub fn nodal(&self) -> &ComplexField {
        &self.nodal
    }

    pub fn into_nodal(self) -> ComplexField {
        self.nodal
    }

    /// Value at `p`, with the Green-function part of point sources evaluated exactly.
    pub fn evaluate(&self, p: Point2) -> Result<Complex64> {
        match &self.singular {
            None => self.nodal.evaluate(p),
            Some((x0, scale, regular)) => {
                let smooth = regular.evaluate(p)?;
                if p.r == 0.0 {
                    return Ok(smooth);
                }
                Ok(smooth + scale * green_eval(p, *x0)?.value)
            }
        }
    }
}

/// Factorized operator for one medium, shared across sources.
#[derive(Debug)]
pub struct ForwardOperator {
    mesh: Arc<Mesh>,
    materials: MaterialField,
    omega: f64,
    matrix: CsrMatrix,
    dofs: DofMap,
    coupling: Vec<(usize, usize, Complex64)>,
    factor: BandedLdl,
}

impl ForwardOperator {
    pub fn new(mesh: Arc<Mesh>, materials: MaterialField, omega: f64) -> Result<Self> {
        let system = assemble(&mesh, &materials, omega)?;
        let factor = BandedLdl::factor(&system.matrix)?;
        log::debug!(
            "factorized {} dofs, bandwidth {}, pivot ratio {:.3e}",
            system.dofs.n_free(),
            factor.bandwidth(),
            factor.condition_estimate()
        );
        Ok(Self {
            mesh,
            materials,
            omega,
            matrix: system.matrix,
            dofs: system.dofs,
            coupling: system.coupling,
            factor,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn materials(&self) -> &MaterialField {
        &self.materials
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn condition_estimate(&self) -> f64 {
        self.factor.condition_estimate()
    }

    /// Solves for a load given per free vertex.
    pub fn solve_free(&self, b: &[Complex64]) -> Result<Vec<Complex64>> {
        if b.len() != self.dofs.n_free() {
            return invalid("load vector length differs from the number of free vertices");
        }
        solve_refined(&self.matrix, &self.factor, b)
    }

    /// Solves for a load given per vertex; entries at fixed vertices are ignored.
    pub fn solve_load(&self, vertex_load: &[Complex64]) -> Result<ComplexField> {
        if vertex_load.len() != self.mesh.n_vertices() {
            return invalid("load vector length differs from vertex count");
        }
        let x = self.solve_free(&self.dofs.restrict(vertex_load))?;
        ComplexField::new(self.mesh.clone(), self.dofs.lift(&x))
    }

    /// Vertex load of a coil or lumped source. Point sources have no finite load.
    /// Solves with prescribed values at the fixed vertices, taken from `boundary`.
    pub fn solve_with_boundary(
        &self,
        vertex_load: &[Complex64],
        boundary: &[Complex64],
    ) -> Result<ComplexField> {
        let n = self.mesh.n_vertices();
        if vertex_load.len() != n || boundary.len() != n {
            return invalid("load or boundary vector length differs from vertex count");
        }
        let mut b = self.dofs.restrict(vertex_load);
        for &(k, j, a) in &self.coupling {
            b[k] -= a * boundary[j];
        }
        let x = self.solve_free(&b)?;
        let mut values = self.dofs.lift(&x);
        for (v, value) in values.iter_mut().enumerate() {
            if self.dofs.dof(v).is_none() {
                *value = boundary[v];
            }
        }
        ComplexField::new(self.mesh.clone(), values)
    }

    pub fn load(&self, source: &SourceSpec) -> Result<Vec<Complex64>> {
        match *source {
            SourceSpec::Coil(coil) => self.coil_load(&coil),
            SourceSpec::NodalDelta(x0) => {
                let loc = self.check_point_source(x0)?;
                let mut load = vec![ZERO; self.mesh.n_vertices()];
                for (k, &v) in self.mesh.triangles()[loc.triangle].iter().enumerate() {
                    load[v] += x0.r * loc.weights[k];
                }
                Ok(load)
            }
            SourceSpec::Point(_) => invalid("point sources are realized through the Green function"),
        }
    }

    pub fn incident(&self, source: &SourceSpec) -> Result<IncidentField> {
        match *source {
            SourceSpec::Coil(_) | SourceSpec::NodalDelta(_) => Ok(IncidentField {
                source: *source,
                nodal: self.solve_load(&self.load(source)?)?,
                singular: None,
            }),
            SourceSpec::Point(x0) => self.point_incident(x0),
        }
    }

    /// Incident fields of several sources, solved concurrently.
    pub fn incidents(&self, sources: &[SourceSpec]) -> Result<Vec<IncidentField>> {
        sources.par_iter().map(|s| self.incident(s)).collect()
    }

    fn check_point_source(&self, x0: Point2) -> Result<crate::mesh::Location> {
        let (r_lo, r_hi, z_lo, z_hi) = self.mesh.bounds();
        if !(x0.r > r_lo && x0.r < r_hi && x0.z > z_lo && x0.z < z_hi) {
            return invalid(format!(
                "point source ({:e}, {:e}) must lie strictly inside the mesh",
                x0.r, x0.z
            ));
        }
        let loc = self.mesh.locate(x0)?;
        let t = loc.triangle;
        if self.mesh.tags()[t].is_deposit() || self.materials.sigma()[t] != 0.0 {
            return invalid(format!(
                "point source ({:e}, {:e}) must lie in a non-conductive region outside deposits",
                x0.r, x0.z
            ));
        }
        Ok(loc)
    }

    fn point_incident(&self, x0: Point2) -> Result<IncidentField> {
        let loc = self.check_point_source(x0)?;
        let scale = self.materials.mu()[loc.triangle];
        let rule = load_rule();
        let mut load = vec![ZERO; self.mesh.n_vertices()];
        for t in 0..self.mesh.n_triangles() {
            let contrast = 1.0 - scale / self.materials.mu()[t];
            let sigma = self.materials.sigma()[t];
            if contrast == 0.0 && sigma == 0.0 {
                continue;
            }
            let corners = self.mesh.corners(t);
            let basis = P1Basis::new(&corners);
            let mut local = [ZERO; 3];
            let mut failure = None;
            rule.for_each(&corners, |p, w| {
                let g = match green_eval(p, x0) {
                    Ok(g) => g,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return;
                    }
                };
                // ∇(rΦ) = (Φ + r ∂Φ/∂r, r ∂Φ/∂z)
                let (gr, gz) = (g.value + p.r * g.grad_r, p.r * g.grad_z);
                let phi = basis.values(p);
                for k in 0..3 {
                    let (bk, ck) = basis.gradient(k);
                    let stiff = contrast * (gr * (phi[k] + p.r * bk) + gz * p.r * ck) / p.r;
                    let mass = self.omega * sigma * scale * g.value * phi[k] * p.r;
                    local[k] += w * Complex64::new(stiff, mass);
                }
            });
            if let Some(e) = failure {
                return Err(e);
            }
            for (k, &v) in self.mesh.triangles()[t].iter().enumerate() {
                load[v] += local[k];
            }
        }
        // analytic part at the vertices; the regular part cancels it on the truncation boundary
        let mut analytic = vec![ZERO; self.mesh.n_vertices()];
        for (v, p) in self.mesh.vertices().iter().enumerate() {
            if p.r == 0.0 {
                continue;
            }
            let q = if p.distance(&x0) < 10.0 * NEAR_DIAGONAL * x0.r {
                Point2::new(x0.r, x0.z + 10.0 * NEAR_DIAGONAL * x0.r)
            } else {
                *p
            };
            analytic[v] = Complex64::new(scale * green_eval(q, x0)?.value, 0.0);
        }
        let boundary: Vec<Complex64> = analytic
            .iter()
            .zip(self.mesh.flags())
            .map(|(a, f)| if *f == VertexFlag::Outer { -a } else { ZERO })
            .collect();
        let regular = self.solve_with_boundary(&load, &boundary)?;
        let mut nodal: Vec<Complex64> = analytic.iter().zip(regular.values()).map(|(a, b)| a + b).collect();
        for (v, f) in self.mesh.flags().iter().enumerate() {
            if f.is_boundary() {
                nodal[v] = ZERO;
            }
        }
        Ok(IncidentField {
            source: SourceSpec::Point(x0),
            nodal: ComplexField::new(self.mesh.clone(), nodal)?,
            singular: Some((x0, scale, regular)),
        })
    }

    /// `∫ iωJ φ_i r` over the coil rectangle.
    fn coil_load(&self, coil: &Coil) -> Result<Vec<Complex64>> {
        let (r_lo, r_hi, z_lo, z_hi) = coil.rectangle();
        let (mr_lo, mr_hi, mz_lo, mz_hi) = self.mesh.bounds();
        if !(coil.width > 0.0 && coil.height > 0.0) || !coil.current_density.is_finite() {
            return invalid("coil needs positive width and height and finite current density");
        }
        if r_lo <= mr_lo || r_hi >= mr_hi || z_lo <= mz_lo || z_hi >= mz_hi {
            return invalid("coil rectangle must lie strictly inside the mesh, off the axis");
        }
        let rule = SlicedRule::new(3, 2);
        let factor = Complex64::new(0.0, self.omega * coil.current_density);
        let mut load = vec![ZERO; self.mesh.n_vertices()];
        for t in 0..self.mesh.n_triangles() {
            let corners = self.mesh.corners(t);
            if corners.iter().all(|p| p.r <= r_lo)
                || corners.iter().all(|p| p.r >= r_hi)
                || corners.iter().all(|p| p.z <= z_lo)
                || corners.iter().all(|p| p.z >= z_hi)
            {
                continue;
            }
            let poly = clip_to_rectangle(&corners, r_lo, r_hi, z_lo, z_hi);
            if poly.len() < 3 {
                continue;
            }
            if self.mesh.tags()[t] != RegionTag::Vacuum {
                return invalid("coil rectangle intersects the tube or a deposit");
            }
            let basis = P1Basis::new(&corners);
            let mut local = [0.0; 3];
            for k in 1..poly.len() - 1 {
                let sub = [poly[0], poly[k], poly[k + 1]];
                rule.for_each(&sub, |p, w| {
                    let phi = basis.values(p);
                    for i in 0..3 {
                        local[i] += w * phi[i] * p.r;
                    }
                });
            }
            for (k, &v) in self.mesh.triangles()[t].iter().enumerate() {
                load[v] += factor * local[k];
            }
        }
        Ok(load)
    }
}

/// Vertex load `∫ f φ_i r dr dz` of a volume source density `f`.
pub fn assemble_load(mesh: &Mesh, f: impl Fn(Point2) -> Complex64) -> Vec<Complex64> {
    let rule = SlicedRule::new(6, 4);
    let mut load = vec![ZERO; mesh.n_vertices()];
    for t in 0..mesh.n_triangles() {
        let corners = mesh.corners(t);
        let basis = P1Basis::new(&corners);
        let tri = mesh.triangles()[t];
        rule.for_each(&corners, |p, w| {
            let fv = f(p) * (w * p.r);
            let phi = basis.values(p);
            for k in 0..3 {
                load[tri[k]] += fv * phi[k];
            }
        });
    }
    load
}

/// Incident field `u⁰` of one source in the reference medium.
pub fn incident_field(
    mesh: &Arc<Mesh>,
    mat_ref: &MaterialField,
    omega: f64,
    source: &SourceSpec,
) -> Result<ComplexField> {
    ForwardOperator::new(mesh.clone(), mat_ref.clone(), omega)?
        .incident(source)
        .map(IncidentField::into_nodal)
}

/// Scattered-field solver for one reference/perturbed pair of media.
///
/// The load is `(A_ref − A_pert) u⁰`, assembled over deposit triangles only,
/// which is the discrete form of the contrast terms on the deposit. The same
/// operator gives the reaction `uᵀ (A_ref − A_pert) u⁰` used for coil impedances.
#[derive(Debug)]
pub struct ScatteringSolver {
    mesh: Arc<Mesh>,
    contrast: CsrMatrix,
    conductivity_contrast: CsrMatrix,
    perturbed: Option<ForwardOperator>,
}

impl ScatteringSolver {
    pub fn new(
        mesh: Arc<Mesh>,
        reference: &MaterialField,
        perturbed: MaterialField,
        omega: f64,
    ) -> Result<Self> {
        check_inputs(&mesh, reference, omega)?;
        check_inputs(&mesh, &perturbed, omega)?;
        let deposit: Vec<usize> = mesh.deposit_triangles().collect();
        for t in 0..mesh.n_triangles() {
            let same = reference.sigma()[t] == perturbed.sigma()[t] && reference.mu()[t] == perturbed.mu()[t];
            if !same && !mesh.tags()[t].is_deposit() {
                return invalid(format!("media differ outside the deposit at triangle {t}"));
            }
        }
        let contrast = vertex_matrix(&mesh, &deposit, omega, |t| {
            (
                1.0 / reference.mu()[t] - 1.0 / perturbed.mu()[t],
                reference.sigma()[t] - perturbed.sigma()[t],
            )
        });
        let conductivity_contrast = vertex_matrix(&mesh, &deposit, omega, |t| {
            (0.0, reference.sigma()[t] - perturbed.sigma()[t])
        });
        let has_contrast = (0..contrast.n()).any(|i| contrast.row(i).any(|(_, v)| v != ZERO));
        let perturbed = if has_contrast {
            Some(ForwardOperator::new(mesh.clone(), perturbed, omega)?)
        } else {
            None
        };
        Ok(Self {
            mesh,
            contrast,
            conductivity_contrast,
            perturbed,
        })
    }

    /// `A_ref − A_pert` as a vertex-indexed matrix.
    pub fn contrast(&self) -> &CsrMatrix {
        &self.contrast
    }

    /// Factorized perturbed operator; `None` when the media coincide.
    pub fn perturbed(&self) -> Option<&ForwardOperator> {
        self.perturbed.as_ref()
    }

    fn check_mesh(&self, field: &ComplexField) -> Result<()> {
        if field.mesh().id() != self.mesh.id() {
            return Err(Error::MeshMismatch);
        }
        Ok(())
    }

    /// Scattered field `u^s` for the incident field `u0`.
    pub fn scattered(&self, u0: &ComplexField) -> Result<ComplexField> {
        self.check_mesh(u0)?;
        match &self.perturbed {
            None => Ok(ComplexField::zeros(self.mesh.clone())),
            Some(op) => op.solve_load(&self.contrast.matvec(u0.values())),
        }
    }

    pub fn scattered_many(&self, u0: &[&ComplexField]) -> Result<Vec<ComplexField>> {
        u0.par_iter().map(|u| self.scattered(u)).collect()
    }

    /// `uᵀ (A_ref − A_pert) u0`.
    pub fn reaction(&self, u: &ComplexField, u0: &ComplexField) -> Result<Complex64> {
        self.check_mesh(u)?;
        self.check_mesh(u0)?;
        Ok(bilinear(&self.contrast, u.values(), u0.values()))
    }

    /// `iω ∫_D (σ − σ₀) u u0 r` over the deposit triangles.
    pub fn conductivity_reaction(&self, u: &ComplexField, u0: &ComplexField) -> Result<Complex64> {
        self.check_mesh(u)?;
        self.check_mesh(u0)?;
        Ok(bilinear(&self.conductivity_contrast, u.values(), u0.values()))
    }
}

/// Scattered field of `u0` caused by the difference between `mat_pert` and `mat_ref`.
pub fn scattered_field(
    mesh: &Arc<Mesh>,
    mat_ref: &MaterialField,
    mat_pert: &MaterialField,
    omega: f64,
    u0: &ComplexField,
) -> Result<ComplexField> {
    if u0.mesh().id() != mesh.id() {
        return Err(Error::MeshMismatch);
    }
    ScatteringSolver::new(mesh.clone(), mat_ref, mat_pert.clone(), omega)?.scattered(u0)
}
