//! Run configuration: TOML text with every field optional, defaults taken
//! from the reference inspection setting.

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lsm::SamplingGrid;
use crate::materials::MaterialTable;
use crate::mesh::RegionSpec;
use crate::synth::{BandConvention, ProbeArray};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub tube_inner_radius: f64,
    pub tube_thickness: f64,
    pub deposits: Vec<RegionSpec>,
}

impl GeometryConfig {
    pub fn tube_outer_radius(&self) -> f64 {
        self.tube_inner_radius + self.tube_thickness
    }

    pub fn tube(&self) -> RegionSpec {
        RegionSpec::TubeAnnulus {
            inner_radius: self.tube_inner_radius,
            thickness: self.tube_thickness,
        }
    }

    /// Tube followed by the deposits, in tagging order.
    pub fn regions(&self) -> Vec<RegionSpec> {
        std::iter::once(self.tube()).chain(self.deposits.iter().cloned()).collect()
    }
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            tube_inner_radius: 9.84e-3,
            tube_thickness: 1.27e-3,
            deposits: vec![RegionSpec::SemiDiscDeposit {
                attachment_radius: 11.11e-3,
                radius_r: 3e-3,
                radius_z: 5e-3,
                center_z: 0.0,
            }],
        }
    }
}

/// Graded tensor meshes. The inversion mesh uses spacing `h` in the refined
/// band, the data mesh `h / data_refinement`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub h: f64,
    pub data_refinement: f64,
    /// Outer radius of the truncated domain.
    pub r_max: f64,
    /// Axial distance from the probed region to the truncation boundary.
    pub z_margin: f64,
    /// Largest spacing far from the refined band.
    pub coarse_h: f64,
    /// Ratio between neighbouring spacings in the graded zone.
    pub growth: f64,
    /// Margin around probes, sampling grid and deposits kept at spacing `h`.
    pub band_margin: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            h: 5e-4,
            data_refinement: 2.0,
            r_max: 0.072,
            z_margin: 0.033,
            coarse_h: 4e-3,
            growth: 1.3,
            band_margin: 2e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub delta: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { delta: 0.01, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandConfig {
    /// Band size; absent for the full matrix.
    pub m: Option<usize>,
    pub convention: BandConvention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsmConfig {
    /// Scale each right-hand side to unit norm before solving.
    pub normalize_rhs: bool,
    /// Noise level for the discrepancy principle when the matrix carries none.
    pub delta: Option<f64>,
}

impl Default for LsmConfig {
    fn default() -> Self {
        Self {
            normalize_rhs: true,
            delta: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardConfig {
    /// Probe index used as the source for field snapshots.
    pub source: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub omega: f64,
    /// Give deposits the vacuum permeability so that only σ differs.
    pub force_mu_match: bool,
    pub output_dir: PathBuf,
    pub geometry: GeometryConfig,
    pub materials: MaterialTable,
    pub probes: ProbeArray,
    pub mesh: MeshConfig,
    pub noise: NoiseConfig,
    pub band: BandConfig,
    pub grid: SamplingGrid,
    pub lsm: LsmConfig,
    pub forward: ForwardConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let geometry = GeometryConfig::default();
        let r_out = geometry.tube_outer_radius();
        Self {
            omega: 200.0 * PI,
            force_mu_match: false,
            output_dir: PathBuf::from("out"),
            geometry,
            materials: MaterialTable::default(),
            probes: ProbeArray::default(),
            mesh: MeshConfig::default(),
            noise: NoiseConfig::default(),
            band: BandConfig::default(),
            grid: SamplingGrid {
                r_lo: r_out,
                r_hi: r_out + 10e-3,
                z_lo: -0.04,
                z_hi: 0.04,
                n_r: 40,
                n_z: 120,
            },
            lsm: LsmConfig::default(),
            forward: ForwardConfig::default(),
        }
    }
}

impl Default for SamplingGrid {
    fn default() -> Self {
        RunConfig::default().grid
    }
}

fn positive(errors: &mut Vec<String>, name: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        errors.push(format!("{name} must be positive and finite, got {v}"));
    }
}

impl RunConfig {
    /// Material table after applying `force_mu_match`.
    pub fn effective_materials(&self) -> MaterialTable {
        if self.force_mu_match {
            self.materials.with_matched_mu()
        } else {
            self.materials.clone()
        }
    }

    /// Checks every invariant, reporting all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        positive(&mut errors, "omega", self.omega);

        let g = &self.geometry;
        positive(&mut errors, "geometry.tube_inner_radius", g.tube_inner_radius);
        positive(&mut errors, "geometry.tube_thickness", g.tube_thickness);
        let r_out = g.tube_outer_radius();
        for (k, d) in g.deposits.iter().enumerate() {
            if matches!(d, RegionSpec::TubeAnnulus { .. }) {
                errors.push(format!("geometry.deposits[{k}] must be a deposit shape"));
                continue;
            }
            if let Err(e) = d.validate() {
                errors.push(format!("geometry.deposits[{k}]: {e}"));
                continue;
            }
            let (r_lo, r_hi, _, _) = d.bounds();
            if r_lo < r_out * (1.0 - 1e-9) {
                errors.push(format!(
                    "geometry.deposits[{k}] reaches r = {r_lo}, inside the tube outer wall {r_out}"
                ));
            }
            if r_hi >= self.mesh.r_max {
                errors.push(format!("geometry.deposits[{k}] extends past mesh.r_max"));
            }
        }

        if let Err(e) = self.materials.validate() {
            errors.push(format!("materials: {e}"));
        }
        let n_dep = self.materials.deposits.len();
        if n_dep != 1 && n_dep != g.deposits.len() {
            errors.push(format!(
                "materials.deposits has {n_dep} entries; give one, or one per deposit ({})",
                g.deposits.len()
            ));
        }
        if self.materials.vacuum.sigma != 0.0 {
            errors.push("materials.vacuum.sigma must be 0".to_string());
        }

        match self.probes.validate(g.tube_inner_radius) {
            Err(Error::Config(list)) => errors.extend(list.into_iter().map(|e| format!("probes: {e}"))),
            Err(e) => errors.push(format!("probes: {e}")),
            Ok(()) => {}
        }

        let m = &self.mesh;
        positive(&mut errors, "mesh.h", m.h);
        positive(&mut errors, "mesh.r_max", m.r_max);
        positive(&mut errors, "mesh.z_margin", m.z_margin);
        positive(&mut errors, "mesh.coarse_h", m.coarse_h);
        positive(&mut errors, "mesh.band_margin", m.band_margin);
        if !(m.data_refinement >= 1.0 && m.data_refinement.is_finite()) {
            errors.push(format!("mesh.data_refinement must be >= 1, got {}", m.data_refinement));
        }
        if !(m.growth >= 1.0 && m.growth.is_finite()) {
            errors.push(format!("mesh.growth must be >= 1, got {}", m.growth));
        }
        if m.coarse_h < m.h {
            errors.push("mesh.coarse_h must not be smaller than mesh.h".to_string());
        }
        if m.r_max <= self.grid.r_hi.max(r_out) + m.band_margin {
            errors.push(format!(
                "mesh.r_max = {} must exceed the sampling grid and tube by mesh.band_margin",
                m.r_max
            ));
        }

        let n = &self.noise;
        if !(n.delta >= 0.0 && n.delta <= 0.5) {
            errors.push(format!("noise.delta must lie in [0, 0.5], got {}", n.delta));
        }
        if let Some(d) = self.lsm.delta {
            if !(d > 0.0 && d <= 0.5) {
                errors.push(format!("lsm.delta must lie in (0, 0.5], got {d}"));
            }
        }
        if let Some(mb) = self.band.m {
            if mb < 1 || mb > self.probes.count {
                errors.push(format!("band.m must lie in 1..={}, got {mb}", self.probes.count));
            }
        }

        let positions = self.probes.positions();
        let span = positions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.z), b.max(p.z)));
        if !positions.is_empty() {
            match self.grid.validate(r_out, span) {
                Err(Error::Config(list)) => errors.extend(list.into_iter().map(|e| format!("grid: {e}"))),
                Err(e) => errors.push(format!("grid: {e}")),
                Ok(()) => {}
            }
        }
        if self.forward.source >= self.probes.count.max(1) {
            errors.push(format!(
                "forward.source = {} is not a probe index (N = {})",
                self.forward.source, self.probes.count
            ));
        }

        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`RunConfig::to_toml`], ignoring `output_dir`.
    pub fn hash(&self) -> String {
        let mut inputs = self.clone();
        inputs.output_dir = PathBuf::new();
        let digest = Sha256::digest(inputs.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Parses and validates a configuration; missing fields take their defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
    cfg.validate()?;
    Ok(cfg)
}
