//! Multistatic measurement matrices, noise and band truncation.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forward::{Coil, ComplexField, ForwardOperator, IncidentField, ScatteringSolver, SourceSpec};
use crate::materials::{coefficients, MaterialTable};
use crate::mesh::{Mesh, Point2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    Point,
    Coil,
}

impl fmt::Display for ProbeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProbeKind::Point => "point",
            ProbeKind::Coil => "coil",
        })
    }
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" => Ok(ProbeKind::Point),
            "coil" => Ok(ProbeKind::Coil),
            other => invalid(format!("unknown probe kind `{other}`")),
        }
    }
}

/// How a coil pair's mutual impedance change is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoilImpedance {
    /// `(iω/r₀) ∫_D (σ − σ₀) u_i u⁰_j r`.
    #[default]
    Conductivity,
    /// `(1/r₀) u_iᵀ (A_ref − A_pert) u⁰_j`, which also carries the permeability contrast.
    Reaction,
}

/// Equally spaced probes on the line `r = radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeArray {
    pub kind: ProbeKind,
    pub count: usize,
    pub spacing: f64,
    pub radius: f64,
    pub z_center: f64,
    /// Radial extent of each coil.
    pub coil_width: f64,
    /// Axial extent of each coil.
    pub coil_height: f64,
    pub current_density: f64,
    pub impedance: CoilImpedance,
}

impl Default for ProbeArray {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Point,
            count: 32,
            spacing: 2.5e-3,
            radius: 8.165e-3,
            z_center: 0.0,
            coil_width: 0.67e-3,
            coil_height: 2e-3,
            current_density: 1.0,
            impedance: CoilImpedance::Conductivity,
        }
    }
}

impl ProbeArray {
    /// `z_j = z_center + (j − (N − 1)/2)·Δz`
    pub fn positions(&self) -> Vec<Point2> {
        let mid = (self.count as f64 - 1.0) / 2.0;
        (0..self.count)
            .map(|j| Point2::new(self.radius, self.z_center + (j as f64 - mid) * self.spacing))
            .collect()
    }

    pub fn sources(&self) -> Vec<SourceSpec> {
        self.positions()
            .into_iter()
            .map(|p| match self.kind {
                ProbeKind::Point => SourceSpec::Point(p),
                ProbeKind::Coil => SourceSpec::Coil(Coil {
                    center: p,
                    width: self.coil_width,
                    height: self.coil_height,
                    current_density: self.current_density,
                }),
            })
            .collect()
    }

    /// Checks the array against the inner wall radius of the tube.
    pub fn validate(&self, tube_inner_radius: f64) -> Result<()> {
        let mut errors = Vec::new();
        if self.count == 0 {
            errors.push("probe count must be at least 1".to_string());
        }
        if !(self.spacing > 0.0) {
            errors.push(format!("probe spacing must be positive, got {}", self.spacing));
        }
        if !(self.radius > 0.0) {
            errors.push(format!("probe radius must be positive, got {}", self.radius));
        }
        let outer = match self.kind {
            ProbeKind::Point => self.radius,
            ProbeKind::Coil => self.radius + 0.5 * self.coil_width,
        };
        if outer >= tube_inner_radius {
            errors.push(format!(
                "probes must stay inside the tube bore (r < {tube_inner_radius}), reach {outer}"
            ));
        }
        if self.kind == ProbeKind::Coil {
            if !(self.coil_width > 0.0 && self.coil_height > 0.0) {
                errors.push("coil width and height must be positive".to_string());
            }
            if self.coil_width >= 2.0 * self.radius {
                errors.push("coil must not reach the axis".to_string());
            }
            if !self.current_density.is_finite() || self.current_density == 0.0 {
                errors.push("coil current density must be finite and nonzero".to_string());
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// Which diagonals a band of size `M` keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandConvention {
    /// `|i − j| ≤ M − 1`, so `M = 1` is pure backscattering.
    #[default]
    Exclusive,
    /// `|i − j| ≤ M`.
    Inclusive,
}

impl BandConvention {
    pub fn keeps(self, m: usize, i: usize, j: usize) -> bool {
        let d = i.abs_diff(j);
        match self {
            BandConvention::Exclusive => d < m,
            BandConvention::Inclusive => d <= m,
        }
    }
}

impl fmt::Display for BandConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BandConvention::Exclusive => "exclusive",
            BandConvention::Inclusive => "inclusive",
        })
    }
}

impl FromStr for BandConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclusive" => Ok(BandConvention::Exclusive),
            "inclusive" => Ok(BandConvention::Inclusive),
            other => invalid(format!("unknown band convention `{other}`")),
        }
    }
}

/// Dense `N × N` matrix of scattered-field measurements, row `i` = receiver, column `j` = source.
#[derive(Clone, Debug, PartialEq)]
pub struct MultistaticMatrix {
    n: usize,
    entries: Vec<Complex64>,
    pub kind: ProbeKind,
    pub noise_level: f64,
    pub seed: Option<u64>,
    /// `None` for the full matrix.
    pub band: Option<usize>,
    pub convention: BandConvention,
}

impl MultistaticMatrix {
    pub fn new(n: usize, entries: Vec<Complex64>, kind: ProbeKind) -> Result<Self> {
        if entries.len() != n * n {
            return invalid(format!("{} entries for a {n}×{n} matrix", entries.len()));
        }
        Ok(Self {
            n,
            entries,
            kind,
            noise_level: 0.0,
            seed: None,
            band: None,
            convention: BandConvention::Exclusive,
        })
    }

    pub fn zeros(n: usize, kind: ProbeKind) -> Self {
        Self::new(n, vec![Complex64::new(0.0, 0.0); n * n], kind).expect("square by construction")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.n + j]
    }

    /// Row-major entries.
    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_level > 0.0
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `max |Z_ij − Z_ji| / max |Z|`, zero for the zero matrix.
    pub fn asymmetry(&self) -> f64 {
        let max = self.max_abs();
        if max == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).norm());
            }
        }
        worst / max
    }

    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<Complex64> {
        nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.entries)
    }
}

/// Shared factorizations for synthesizing data on one mesh.
pub struct Synthesizer {
    reference: ForwardOperator,
    scattering: ScatteringSolver,
}

impl Synthesizer {
    pub fn new(mesh: Arc<Mesh>, table: &MaterialTable, omega: f64) -> Result<Self> {
        let reference = coefficients(&mesh, table, false)?;
        let perturbed = coefficients(&mesh, table, true)?;
        let scattering = ScatteringSolver::new(mesh.clone(), &reference, perturbed, omega)?;
        let reference = ForwardOperator::new(mesh, reference, omega)?;
        Ok(Self {
            reference,
            scattering,
        })
    }

    pub fn reference(&self) -> &ForwardOperator {
        &self.reference
    }

    pub fn scattering(&self) -> &ScatteringSolver {
        &self.scattering
    }

    fn fields(&self, array: &ProbeArray) -> Result<Vec<(IncidentField, ComplexField)>> {
        array
            .sources()
            .par_iter()
            .map(|s| {
                let u0 = self.reference.incident(s)?;
                let us = self.scattering.scattered(u0.nodal())?;
                Ok((u0, us))
            })
            .collect()
    }

    /// `Z_ij = u^s(x_i; x_j)`.
    pub fn point(&self, array: &ProbeArray) -> Result<MultistaticMatrix> {
        if array.kind != ProbeKind::Point {
            return invalid("synthesize_point needs a point-probe array");
        }
        let n = array.count;
        if self.scattering.perturbed().is_none() {
            return Ok(MultistaticMatrix::zeros(n, ProbeKind::Point));
        }
        let positions = array.positions();
        let fields = self.fields(array)?;
        let mut entries = vec![Complex64::new(0.0, 0.0); n * n];
        for (j, (_, us)) in fields.iter().enumerate() {
            for (i, x) in positions.iter().enumerate() {
                entries[i * n + j] = us.evaluate(*x)?;
            }
        }
        MultistaticMatrix::new(n, entries, ProbeKind::Point)
    }

    /// Impedance change between coils `i` and `j`, `u_i` being the total field of coil `i`.
    pub fn coil(&self, array: &ProbeArray) -> Result<MultistaticMatrix> {
        if array.kind != ProbeKind::Coil {
            return invalid("synthesize_coil needs a coil-probe array");
        }
        let n = array.count;
        if self.scattering.perturbed().is_none() {
            log::warn!("no deposit contrast on the mesh; coil matrix is zero");
            return Ok(MultistaticMatrix::zeros(n, ProbeKind::Coil));
        }
        let fields = self.fields(array)?;
        let totals: Vec<ComplexField> = fields
            .iter()
            .map(|(u0, us)| u0.nodal().add(us))
            .collect::<Result<_>>()?;
        let r0 = array.radius;
        let entries: Vec<Complex64> = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                let (u, u0) = (&totals[i], fields[j].0.nodal());
                let z = match array.impedance {
                    CoilImpedance::Conductivity => self.scattering.conductivity_reaction(u, u0),
                    CoilImpedance::Reaction => self.scattering.reaction(u, u0),
                };
                z.map(|v| v / r0)
            })
            .collect::<Result<_>>()?;
        MultistaticMatrix::new(n, entries, ProbeKind::Coil)
    }
}

pub fn synthesize_point(
    mesh: Arc<Mesh>,
    table: &MaterialTable,
    omega: f64,
    array: &ProbeArray,
) -> Result<MultistaticMatrix> {
    Synthesizer::new(mesh, table, omega)?.point(array)
}

pub fn synthesize_coil(
    mesh: Arc<Mesh>,
    table: &MaterialTable,
    omega: f64,
    array: &ProbeArray,
) -> Result<MultistaticMatrix> {
    Synthesizer::new(mesh, table, omega)?.coil(array)
}

/// Multiplies every entry by `1 + η`, `Re η` and `Im η` uniform on `[−δ, δ]`, drawn row-major.
pub fn add_noise(m: &MultistaticMatrix, delta: f64, seed: u64) -> Result<MultistaticMatrix> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return invalid(format!("noise level must be finite and >= 0, got {delta}"));
    }
    let mut out = m.clone();
    out.seed = Some(seed);
    if delta == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for z in &mut out.entries {
        let eta = Complex64::new(rng.gen_range(-delta..=delta), rng.gen_range(-delta..=delta));
        *z *= Complex64::new(1.0, 0.0) + eta;
    }
    out.noise_level = delta;
    Ok(out)
}

/// Zeroes entries outside the band of size `m`.
pub fn band_truncate(
    matrix: &MultistaticMatrix,
    m: usize,
    convention: BandConvention,
) -> Result<MultistaticMatrix> {
    let n = matrix.n;
    if m < 1 || m > n {
        return invalid(format!("band size must lie in 1..={n}, got {m}"));
    }
    if matrix.band.is_some() && matrix.convention != convention {
        return invalid("cannot mix band conventions on one matrix");
    }
    let mut out = matrix.clone();
    for i in 0..n {
        for j in 0..n {
            if !convention.keeps(m, i, j) {
                out.entries[i * n + j] = Complex64::new(0.0, 0.0);
            }
        }
    }
    out.band = Some(matrix.band.map_or(m, |b| b.min(m)));
    out.convention = convention;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn random_matrix(n: usize, seed: u64) -> MultistaticMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = (0..n * n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        MultistaticMatrix::new(n, entries, ProbeKind::Point).unwrap()
    }

    #[test]
    fn positions_are_centred() {
        let mut a = ProbeArray {
            count: 4,
            ..ProbeArray::default()
        };
        let z: Vec<f64> = a.positions().iter().map(|p| p.z).collect();
        assert_eq!(z, vec![-3.75e-3, -1.25e-3, 1.25e-3, 3.75e-3]);
        a.z_center = 1e-3;
        a.count = 1;
        assert_eq!(a.positions()[0], Point2::new(8.165e-3, 1e-3));
        assert!(a.validate(9.84e-3).is_ok());
        a.radius = 1e-2;
        assert!(a.validate(9.84e-3).is_err());
    }

    #[test]
    fn noise_contract() {
        let m = random_matrix(8, 1);
        assert_eq!(add_noise(&m, 0.0, 3).unwrap().entries(), m.entries());
        let a = add_noise(&m, 0.01, 3).unwrap();
        let b = add_noise(&m, 0.01, 3).unwrap();
        let c = add_noise(&m, 0.01, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.entries(), c.entries());
        assert!(add_noise(&m, -0.1, 3).is_err());
    }

    #[test]
    fn noise_statistics() {
        let ones = MultistaticMatrix::new(100, vec![Complex64::new(1.0, 0.0); 10_000], ProbeKind::Point).unwrap();
        let delta = 0.05;
        let noisy = add_noise(&ones, delta, 99).unwrap();
        let etas: Vec<Complex64> = noisy.entries().iter().map(|z| z - 1.0).collect();
        let max = etas.iter().map(|e| e.norm()).fold(0.0, f64::max);
        assert!(max <= delta * 2f64.sqrt());
        let mean: Complex64 = etas.iter().sum::<Complex64>() / etas.len() as f64;
        // standard error of the mean is δ/√(3·10⁴) ≈ 2.9e-4
        assert!(mean.norm() < 1.5e-3, "{mean}");
        assert!(etas.iter().all(|e| e.re.abs() <= delta && e.im.abs() <= delta));
    }

    #[test]
    fn band_conventions() {
        let m = random_matrix(6, 2);
        let diag = band_truncate(&m, 1, BandConvention::Exclusive).unwrap();
        let tri = band_truncate(&m, 1, BandConvention::Inclusive).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(diag.get(i, j) != Complex64::new(0.0, 0.0), i == j);
                assert_eq!(tri.get(i, j) != Complex64::new(0.0, 0.0), i.abs_diff(j) <= 1);
            }
        }
        assert_eq!(band_truncate(&m, 6, BandConvention::Exclusive).unwrap().entries(), m.entries());
        assert!(band_truncate(&m, 0, BandConvention::Exclusive).is_err());
        assert!(band_truncate(&m, 7, BandConvention::Exclusive).is_err());
    }

    proptest! {
        #[test]
        fn band_composition(n in 1usize..12, a in 1usize..12, b in 1usize..12, seed in 0u64..1000, inclusive: bool) {
            let (a, b) = (a.min(n), b.min(n));
            let conv = if inclusive { BandConvention::Inclusive } else { BandConvention::Exclusive };
            let m = random_matrix(n, seed);
            let twice = band_truncate(&band_truncate(&m, a, conv).unwrap(), b, conv).unwrap();
            let once = band_truncate(&m, a.min(b), conv).unwrap();
            prop_assert_eq!(twice.entries(), once.entries());
            prop_assert_eq!(twice.band, Some(a.min(b)));
            let idem = band_truncate(&once, a.min(b), conv).unwrap();
            prop_assert_eq!(idem.entries(), once.entries());
        }

        #[test]
        fn band_error_decreases(n in 2usize..12, seed in 0u64..1000) {
            let m = random_matrix(n, seed);
            let mut last = f64::INFINITY;
            for band in 1..=n {
                let t = band_truncate(&m, band, BandConvention::Exclusive).unwrap();
                let diff: f64 = m.entries().iter().zip(t.entries()).map(|(a, b)| (a - b).norm_sqr()).sum();
                prop_assert!(diff <= last);
                last = diff;
            }
            prop_assert_eq!(last, 0.0);
        }
    }
}
