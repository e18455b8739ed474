//! Conforming triangulations of the truncated meridian half-plane.
//!
//! Meshes are built on tensor-product coordinate lines in `(r, z)` and every
//! grid cell is split along its `(i, j) -> (i + 1, j + 1)` diagonal, so that
//! vertices and triangles come out in row-major order (`z` outer, `r` inner).
//! That ordering is what the banded solver in [`crate::forward`] relies on.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A point of the meridian half-plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub r: f64,
    pub z: f64,
}

impl Point2 {
    pub const fn new(r: f64, z: f64) -> Self {
        Self { r, z }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.r - other.r).hypot(self.z - other.z)
    }
}

/// Boundary marker of a mesh vertex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VertexFlag {
    /// On the symmetry axis `r = 0`.
    Axis,
    /// On one of the three truncation sides.
    Outer,
    Interior,
}

impl VertexFlag {
    pub fn is_boundary(self) -> bool {
        self != VertexFlag::Interior
    }
}

impl fmt::Display for VertexFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VertexFlag::Axis => "axis",
            VertexFlag::Outer => "outer",
            VertexFlag::Interior => "interior",
        })
    }
}

impl FromStr for VertexFlag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "axis" => Ok(VertexFlag::Axis),
            "outer" => Ok(VertexFlag::Outer),
            "interior" => Ok(VertexFlag::Interior),
            other => Err(format!("unknown vertex flag `{other}`")),
        }
    }
}

/// Material region of a triangle. Deposits carry their component index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionTag {
    Vacuum,
    Tube,
    Deposit(u16),
}

impl RegionTag {
    pub fn is_deposit(self) -> bool {
        matches!(self, RegionTag::Deposit(_))
    }
}

impl fmt::Display for RegionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionTag::Vacuum => f.write_str("vacuum"),
            RegionTag::Tube => f.write_str("tube"),
            RegionTag::Deposit(k) => write!(f, "deposit:{k}"),
        }
    }
}

impl FromStr for RegionTag {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vacuum" => Ok(RegionTag::Vacuum),
            "tube" => Ok(RegionTag::Tube),
            other => other
                .strip_prefix("deposit:")
                .and_then(|k| k.parse().ok())
                .map(RegionTag::Deposit)
                .ok_or_else(|| format!("unknown region tag `{other}`")),
        }
    }
}

/// Geometric description of a tagged region. All lengths in metres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    /// Tube wall `inner_radius < r < inner_radius + thickness`, infinite in `z`.
    TubeAnnulus { inner_radius: f64, thickness: f64 },
    /// Half ellipse glued to the line `r = attachment_radius`, bulging outwards.
    SemiDiscDeposit {
        attachment_radius: f64,
        radius_r: f64,
        radius_z: f64,
        center_z: f64,
    },
    EllipseDeposit {
        center_r: f64,
        center_z: f64,
        radius_r: f64,
        radius_z: f64,
    },
    /// Closed polygon given by its vertices (the closing edge is implicit).
    PolylineDeposit { vertices: Vec<Point2> },
}

impl RegionSpec {
    pub fn is_deposit(&self) -> bool {
        !matches!(self, RegionSpec::TubeAnnulus { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(format!("{name} must be positive and finite, got {v}"))
            }
        };
        match self {
            RegionSpec::TubeAnnulus {
                inner_radius,
                thickness,
            } => {
                positive("tube inner radius", *inner_radius)?;
                positive("tube thickness", *thickness)
            }
            RegionSpec::SemiDiscDeposit {
                attachment_radius,
                radius_r,
                radius_z,
                center_z,
            } => {
                positive("attachment radius", *attachment_radius)?;
                positive("deposit radius_r", *radius_r)?;
                positive("deposit radius_z", *radius_z)?;
                if !center_z.is_finite() {
                    return invalid("deposit center_z must be finite");
                }
                Ok(())
            }
            RegionSpec::EllipseDeposit {
                center_r,
                center_z,
                radius_r,
                radius_z,
            } => {
                positive("deposit radius_r", *radius_r)?;
                positive("deposit radius_z", *radius_z)?;
                if !center_z.is_finite() || !(center_r - radius_r > 0.0) {
                    return invalid("ellipse deposit must lie in r > 0");
                }
                Ok(())
            }
            RegionSpec::PolylineDeposit { vertices } => {
                if vertices.len() < 3 {
                    return invalid("polyline deposit needs at least 3 vertices");
                }
                if vertices
                    .iter()
                    .any(|p| !(p.r > 0.0) || !p.r.is_finite() || !p.z.is_finite())
                {
                    return invalid("polyline deposit vertices must lie in r > 0");
                }
                if polygon_signed_area(vertices).abs() == 0.0 {
                    return invalid("polyline deposit is degenerate");
                }
                Ok(())
            }
        }
    }

    pub fn contains(&self, p: Point2) -> bool {
        match self {
            RegionSpec::TubeAnnulus {
                inner_radius,
                thickness,
            } => p.r > *inner_radius && p.r < inner_radius + thickness,
            RegionSpec::SemiDiscDeposit {
                attachment_radius,
                radius_r,
                radius_z,
                center_z,
            } => {
                let u = (p.r - attachment_radius) / radius_r;
                let v = (p.z - center_z) / radius_z;
                p.r > *attachment_radius && u * u + v * v < 1.0
            }
            RegionSpec::EllipseDeposit {
                center_r,
                center_z,
                radius_r,
                radius_z,
            } => {
                let u = (p.r - center_r) / radius_r;
                let v = (p.z - center_z) / radius_z;
                u * u + v * v < 1.0
            }
            RegionSpec::PolylineDeposit { vertices } => point_in_polygon(vertices, p),
        }
    }

    /// Axis-aligned bounding box `(r_lo, r_hi, z_lo, z_hi)`; tubes are unbounded in `z`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            RegionSpec::TubeAnnulus {
                inner_radius,
                thickness,
            } => (
                *inner_radius,
                inner_radius + thickness,
                f64::NEG_INFINITY,
                f64::INFINITY,
            ),
            RegionSpec::SemiDiscDeposit {
                attachment_radius,
                radius_r,
                radius_z,
                center_z,
            } => (
                *attachment_radius,
                attachment_radius + radius_r,
                center_z - radius_z,
                center_z + radius_z,
            ),
            RegionSpec::EllipseDeposit {
                center_r,
                center_z,
                radius_r,
                radius_z,
            } => (
                center_r - radius_r,
                center_r + radius_r,
                center_z - radius_z,
                center_z + radius_z,
            ),
            RegionSpec::PolylineDeposit { vertices } => vertices.iter().fold(
                (
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                    f64::INFINITY,
                    f64::NEG_INFINITY,
                ),
                |(a, b, c, d), p| (a.min(p.r), b.max(p.r), c.min(p.z), d.max(p.z)),
            ),
        }
    }

    /// Exact area of the region in the meridian plane (infinite for tubes).
    pub fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match self {
            RegionSpec::TubeAnnulus { .. } => f64::INFINITY,
            RegionSpec::SemiDiscDeposit {
                radius_r, radius_z, ..
            } => 0.5 * PI * radius_r * radius_z,
            RegionSpec::EllipseDeposit {
                radius_r, radius_z, ..
            } => PI * radius_r * radius_z,
            RegionSpec::PolylineDeposit { vertices } => polygon_signed_area(vertices).abs(),
        }
    }

    /// Area centroid of the region in the meridian plane.
    pub fn centroid(&self) -> Point2 {
        use std::f64::consts::PI;
        match self {
            RegionSpec::TubeAnnulus {
                inner_radius,
                thickness,
            } => Point2::new(inner_radius + 0.5 * thickness, 0.0),
            RegionSpec::SemiDiscDeposit {
                attachment_radius,
                radius_r,
                center_z,
                ..
            } => Point2::new(attachment_radius + 4.0 * radius_r / (3.0 * PI), *center_z),
            RegionSpec::EllipseDeposit {
                center_r, center_z, ..
            } => Point2::new(*center_r, *center_z),
            RegionSpec::PolylineDeposit { vertices } => {
                let a = polygon_signed_area(vertices);
                let (mut cr, mut cz) = (0.0, 0.0);
                for (p, q) in polygon_edges(vertices) {
                    let cross = p.r * q.z - q.r * p.z;
                    cr += (p.r + q.r) * cross;
                    cz += (p.z + q.z) * cross;
                }
                Point2::new(cr / (6.0 * a), cz / (6.0 * a))
            }
        }
    }
}

fn polygon_edges(vertices: &[Point2]) -> impl Iterator<Item = (Point2, Point2)> + '_ {
    vertices
        .iter()
        .copied()
        .zip(vertices.iter().copied().cycle().skip(1))
}

fn polygon_signed_area(vertices: &[Point2]) -> f64 {
    0.5 * polygon_edges(vertices)
        .map(|(p, q)| p.r * q.z - q.r * p.z)
        .sum::<f64>()
}

fn point_in_polygon(vertices: &[Point2], p: Point2) -> bool {
    let mut inside = false;
    for (a, b) in polygon_edges(vertices) {
        if (a.z > p.z) != (b.z > p.z) {
            let r_cross = a.r + (p.z - a.z) / (b.z - a.z) * (b.r - a.r);
            if p.r < r_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// Coordinate lines of a tensor-product mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorGrid {
    pub r_lines: Vec<f64>,
    pub z_lines: Vec<f64>,
}

/// Triangle containing a point together with its barycentric weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Location {
    pub triangle: usize,
    pub weights: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Mesh {
    vertices: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    flags: Vec<VertexFlag>,
    tags: Vec<RegionTag>,
    grid: Option<TensorGrid>,
    id: u64,
}

impl Mesh {
    /// Assembles a mesh from raw parts, checking orientation and index bounds.
    pub fn from_parts(
        vertices: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        flags: Vec<VertexFlag>,
        tags: Vec<RegionTag>,
    ) -> Result<Self> {
        if flags.len() != vertices.len() || tags.len() != triangles.len() {
            return invalid("mesh part lengths disagree");
        }
        if vertices.iter().any(|p| !(p.r >= 0.0) || !p.z.is_finite()) {
            return invalid("mesh vertices must be finite with r >= 0");
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return invalid(format!("triangle {t} references a missing vertex"));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            if signed_area(a, b, c) <= 0.0 {
                return invalid(format!("triangle {t} is not counterclockwise"));
            }
        }
        let grid = detect_grid(&vertices, &triangles);
        let id = geometry_id(&vertices, &triangles);
        Ok(Self {
            vertices,
            triangles,
            flags,
            tags,
            grid,
            id,
        })
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn flags(&self) -> &[VertexFlag] {
        &self.flags
    }

    pub fn tags(&self) -> &[RegionTag] {
        &self.tags
    }

    pub fn grid(&self) -> Option<&TensorGrid> {
        self.grid.as_ref()
    }

    /// Fingerprint of the geometry; fields remember it to catch mesh mix-ups.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, t: usize) -> [Point2; 3] {
        self.triangles[t].map(|v| self.vertices[v])
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn centroid(&self, t: usize) -> Point2 {
        let [a, b, c] = self.corners(t);
        Point2::new((a.r + b.r + c.r) / 3.0, (a.z + b.z + c.z) / 3.0)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.area(t)).sum()
    }

    /// `(r_min, r_max, z_min, z_max)` of the vertex cloud.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
            ),
            |(a, b, c, d), p| (a.min(p.r), b.max(p.r), c.min(p.z), d.max(p.z)),
        )
    }

    pub fn deposit_triangles(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_deposit())
            .map(|(i, _)| i)
    }

    pub fn has_deposit(&self) -> bool {
        self.deposit_triangles().next().is_some()
    }

    pub fn barycentric(&self, t: usize, p: Point2) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let det = (b.r - a.r) * (c.z - a.z) - (c.r - a.r) * (b.z - a.z);
        let l1 = ((p.r - a.r) * (c.z - a.z) - (c.r - a.r) * (p.z - a.z)) / det;
        let l2 = ((b.r - a.r) * (p.z - a.z) - (p.r - a.r) * (b.z - a.z)) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Finds the triangle containing `p`.
    pub fn locate(&self, p: Point2) -> Result<Location> {
        if !p.r.is_finite() || !p.z.is_finite() {
            return Err(Error::OutsideMesh { r: p.r, z: p.z });
        }
        match &self.grid {
            Some(grid) => self.locate_in_grid(grid, p),
            None => self.locate_brute_force(p),
        }
    }

    fn locate_in_grid(&self, grid: &TensorGrid, p: Point2) -> Result<Location> {
        let (rl, zl) = (&grid.r_lines, &grid.z_lines);
        let tol_r = 1e-12 * (rl[rl.len() - 1] - rl[0]);
        let tol_z = 1e-12 * (zl[zl.len() - 1] - zl[0]);
        if p.r < rl[0] - tol_r
            || p.r > rl[rl.len() - 1] + tol_r
            || p.z < zl[0] - tol_z
            || p.z > zl[zl.len() - 1] + tol_z
        {
            return Err(Error::OutsideMesh { r: p.r, z: p.z });
        }
        let cell = |lines: &[f64], x: f64| {
            lines
                .partition_point(|&l| l <= x)
                .saturating_sub(1)
                .min(lines.len() - 2)
        };
        let i = cell(rl, p.r);
        let j = cell(zl, p.z);
        let s = (p.r - rl[i]) / (rl[i + 1] - rl[i]);
        let t = (p.z - zl[j]) / (zl[j + 1] - zl[j]);
        let c = j * (rl.len() - 1) + i;
        let triangle = if s >= t { 2 * c } else { 2 * c + 1 };
        Ok(Location {
            triangle,
            weights: self.barycentric(triangle, p),
        })
    }

    fn locate_brute_force(&self, p: Point2) -> Result<Location> {
        (0..self.n_triangles())
            .map(|t| (t, self.barycentric(t, p)))
            .find(|(_, w)| w.iter().all(|&x| x >= -1e-12))
            .map(|(triangle, weights)| Location { triangle, weights })
            .ok_or(Error::OutsideMesh { r: p.r, z: p.z })
    }
}

pub(crate) fn signed_area(a: Point2, b: Point2, c: Point2) -> f64 {
    0.5 * ((b.r - a.r) * (c.z - a.z) - (c.r - a.r) * (b.z - a.z))
}

fn geometry_id(vertices: &[Point2], triangles: &[[usize; 3]]) -> u64 {
    let mut h = DefaultHasher::new();
    vertices.len().hash(&mut h);
    for p in vertices {
        p.r.to_bits().hash(&mut h);
        p.z.to_bits().hash(&mut h);
    }
    triangles.hash(&mut h);
    h.finish()
}

/// Recognizes meshes laid out exactly as [`build_tensor_mesh`] produces them.
fn detect_grid(vertices: &[Point2], triangles: &[[usize; 3]]) -> Option<TensorGrid> {
    let z0 = vertices.first()?.z;
    let nr = vertices.iter().take_while(|p| p.z == z0).count();
    if nr < 2 || !vertices.len().is_multiple_of(nr) {
        return None;
    }
    let nz = vertices.len() / nr;
    if nz < 2 {
        return None;
    }
    let r_lines: Vec<f64> = vertices[..nr].iter().map(|p| p.r).collect();
    let z_lines: Vec<f64> = (0..nz).map(|j| vertices[j * nr].z).collect();
    let consistent = vertices
        .iter()
        .enumerate()
        .all(|(k, p)| p.r == r_lines[k % nr] && p.z == z_lines[k / nr]);
    if !consistent || triangles != grid_triangles(nr, nz).as_slice() {
        return None;
    }
    Some(TensorGrid { r_lines, z_lines })
}

fn grid_triangles(nr: usize, nz: usize) -> Vec<[usize; 3]> {
    let mut triangles = Vec::with_capacity(2 * (nr - 1) * (nz - 1));
    for j in 0..nz - 1 {
        for i in 0..nr - 1 {
            let v00 = j * nr + i;
            let v10 = v00 + 1;
            let v01 = v00 + nr;
            let v11 = v01 + 1;
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    triangles
}

/// Builds a mesh on arbitrary strictly increasing coordinate lines, with `r_lines[0] = 0`.
pub fn build_tensor_mesh(r_lines: &[f64], z_lines: &[f64]) -> Result<Mesh> {
    let increasing = |l: &[f64]| l.len() >= 2 && l.windows(2).all(|w| w[1] > w[0]);
    if !increasing(r_lines) || !increasing(z_lines) {
        return invalid("coordinate lines must be strictly increasing with at least two entries");
    }
    if r_lines.iter().chain(z_lines).any(|x| !x.is_finite()) {
        return invalid("coordinate lines must be finite");
    }
    if r_lines[0] != 0.0 {
        return invalid("the first r line must be the axis r = 0");
    }
    let (nr, nz) = (r_lines.len(), z_lines.len());
    let mut vertices = Vec::with_capacity(nr * nz);
    let mut flags = Vec::with_capacity(nr * nz);
    for (j, &z) in z_lines.iter().enumerate() {
        for (i, &r) in r_lines.iter().enumerate() {
            vertices.push(Point2::new(r, z));
            flags.push(if i == 0 {
                VertexFlag::Axis
            } else if i == nr - 1 || j == 0 || j == nz - 1 {
                VertexFlag::Outer
            } else {
                VertexFlag::Interior
            });
        }
    }
    let triangles = grid_triangles(nr, nz);
    let tags = vec![RegionTag::Vacuum; triangles.len()];
    let id = geometry_id(&vertices, &triangles);
    Ok(Mesh {
        vertices,
        triangles,
        flags,
        tags,
        grid: Some(TensorGrid {
            r_lines: r_lines.to_vec(),
            z_lines: z_lines.to_vec(),
        }),
        id,
    })
}

fn uniform_lines(lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let n = ((hi - lo) / h - 1e-9).ceil().max(1.0) as usize;
    (0..=n)
        .map(|k| {
            if k == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / n as f64
            }
        })
        .collect()
}

/// Uniform mesh of `[0, r_max] × [z_min, z_max]` with node spacing at most `h`.
pub fn build_structured_mesh(r_max: f64, z_min: f64, z_max: f64, h: f64) -> Result<Mesh> {
    if !h.is_finite() || h <= 0.0 {
        return invalid(format!("mesh size must be positive and finite, got {h}"));
    }
    if !(r_max > 0.0) || !(z_max > z_min) || !r_max.is_finite() || !(z_max - z_min).is_finite() {
        return invalid("mesh rectangle must have positive extent");
    }
    if h > 0.5 * r_max.min(z_max - z_min) {
        return invalid("mesh size must allow at least two cells per direction");
    }
    build_tensor_mesh(&uniform_lines(0.0, r_max, h), &uniform_lines(z_min, z_max, h))
}

/// A refinement band `[lo, hi]` inside which the spacing is at most `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
}

/// Coordinate lines on `[lo, hi]` honouring refinement bands.
///
/// Away from the bands the spacing grows linearly with distance at rate
/// `growth - 1` (geometric grading) and is capped at `base_h`. Every band
/// edge and every `feature` coordinate becomes a line.
pub fn graded_lines(
    lo: f64,
    hi: f64,
    base_h: f64,
    bands: &[Band],
    features: &[f64],
    growth: f64,
) -> Result<Vec<f64>> {
    if !(hi > lo) || !(base_h > 0.0) || !(growth >= 1.0) {
        return invalid("graded_lines needs hi > lo, base_h > 0 and growth >= 1");
    }
    if bands.iter().any(|b| !(b.h > 0.0) || !(b.hi >= b.lo)) {
        return invalid("refinement bands need h > 0 and hi >= lo");
    }
    let target = |x: f64| {
        bands.iter().fold(base_h, |acc, b| {
            let d = (b.lo - x).max(x - b.hi).max(0.0);
            acc.min(b.h + (growth - 1.0) * d)
        })
    };
    let tol = 1e-9 * (hi - lo);
    let mut breaks: Vec<f64> = vec![lo, hi];
    breaks.extend(
        bands
            .iter()
            .flat_map(|b| [b.lo, b.hi])
            .chain(features.iter().copied())
            .filter(|&x| x > lo + tol && x < hi - tol),
    );
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() <= tol);

    const SAMPLES: usize = 256;
    let mut lines = vec![lo];
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dx = (b - a) / SAMPLES as f64;
        // cumulative ∫ dx / target by the trapezoid rule on a fine table
        let mut cum = vec![0.0; SAMPLES + 1];
        for k in 0..SAMPLES {
            let x0 = a + dx * k as f64;
            cum[k + 1] = cum[k] + 0.5 * dx * (1.0 / target(x0) + 1.0 / target(x0 + dx));
        }
        let total = cum[SAMPLES];
        let n = (total - 1e-9).ceil().max(1.0) as usize;
        let mut k = 0;
        for m in 1..n {
            let q = total * m as f64 / n as f64;
            while cum[k + 1] < q {
                k += 1;
            }
            let frac = (q - cum[k]) / (cum[k + 1] - cum[k]);
            lines.push(a + dx * (k as f64 + frac));
        }
        lines.push(b);
    }
    Ok(lines)
}

/// Tags every triangle by the first spec containing its centroid.
pub fn tag_regions(mut mesh: Mesh, specs: &[RegionSpec]) -> Result<Mesh> {
    let (r_lo, r_hi, z_lo, z_hi) = mesh.bounds();
    for spec in specs {
        spec.validate()?;
        if spec.is_deposit() {
            let (a, b, c, d) = spec.bounds();
            if a < r_lo || b > r_hi || c < z_lo || d > z_hi {
                return invalid("deposit region extends beyond the mesh rectangle");
            }
        }
    }
    let mut deposit_index = Vec::with_capacity(specs.len());
    let mut next = 0u16;
    for spec in specs {
        if spec.is_deposit() {
            deposit_index.push(Some(next));
            next += 1;
        } else {
            deposit_index.push(None);
        }
    }
    for t in 0..mesh.n_triangles() {
        let c = mesh.centroid(t);
        let mut hits = specs.iter().enumerate().filter(|(_, s)| s.contains(c));
        let tag = match hits.next() {
            None => RegionTag::Vacuum,
            Some((first, _)) => {
                if let Some((second, _)) = hits.next() {
                    return Err(Error::OverlappingRegions {
                        triangle: t,
                        first,
                        second,
                    });
                }
                match deposit_index[first] {
                    Some(k) => RegionTag::Deposit(k),
                    None => RegionTag::Tube,
                }
            }
        };
        mesh.tags[t] = tag;
    }
    Ok(mesh)
}
