//! End-to-end runs: meshes from a configuration, data synthesis, inversion,
//! localization metrics and the canned experiments.

use std::sync::Arc;

use crate::config::RunConfig;
use crate::error::{invalid, Result};
use crate::forward::{ComplexField, ForwardOperator};
use crate::lsm::{run_lsm, IncidentRhs, IndicatorField, SamplingGrid};
use crate::materials::coefficients;
use crate::mesh::{build_tensor_mesh, graded_lines, tag_regions, Band, Mesh, Point2, RegionSpec};
use crate::synth::{add_noise, band_truncate, MultistaticMatrix, ProbeKind, Synthesizer};

/// Axial range holding the probes, the sampling grid and the deposits.
fn region_of_interest(cfg: &RunConfig) -> (f64, f64) {
    let half_coil = match cfg.probes.kind {
        ProbeKind::Point => 0.0,
        ProbeKind::Coil => 0.5 * cfg.probes.coil_height,
    };
    let mut lo = cfg.grid.z_lo;
    let mut hi = cfg.grid.z_hi;
    for p in cfg.probes.positions() {
        lo = lo.min(p.z - half_coil);
        hi = hi.max(p.z + half_coil);
    }
    for d in &cfg.geometry.deposits {
        let (_, _, z0, z1) = d.bounds();
        lo = lo.min(z0);
        hi = hi.max(z1);
    }
    (lo, hi)
}

/// Graded tensor mesh with spacing `h` around probes, tube, grid and deposits.
pub fn build_mesh(cfg: &RunConfig, h: f64, with_deposits: bool) -> Result<Arc<Mesh>> {
    let m = &cfg.mesh;
    let g = &cfg.geometry;
    let half_w = match cfg.probes.kind {
        ProbeKind::Point => 0.0,
        ProbeKind::Coil => 0.5 * cfg.probes.coil_width,
    };
    let r_hi = cfg
        .geometry
        .deposits
        .iter()
        .map(|d| d.bounds().1)
        .fold(cfg.grid.r_hi.max(g.tube_outer_radius()), f64::max);
    let r_band = Band {
        lo: (cfg.probes.radius - half_w - m.band_margin).max(0.0),
        hi: (r_hi + m.band_margin).min(m.r_max),
        h,
    };
    let mut r_features = vec![g.tube_inner_radius, g.tube_outer_radius()];
    if cfg.probes.kind == ProbeKind::Coil {
        r_features.extend([cfg.probes.radius - half_w, cfg.probes.radius + half_w]);
    }
    let r = graded_lines(0.0, m.r_max, m.coarse_h, &[r_band], &r_features, m.growth)?;

    let (lo, hi) = region_of_interest(cfg);
    let z_band = Band {
        lo: lo - m.band_margin,
        hi: hi + m.band_margin,
        h,
    };
    let z = graded_lines(lo - m.z_margin, hi + m.z_margin, m.coarse_h, &[z_band], &[], m.growth)?;

    let specs = if with_deposits {
        g.regions()
    } else {
        vec![g.tube()]
    };
    Ok(Arc::new(tag_regions(build_tensor_mesh(&r, &z)?, &specs)?))
}

/// Fine mesh carrying the deposits, used to synthesize data.
pub fn data_mesh(cfg: &RunConfig) -> Result<Arc<Mesh>> {
    build_mesh(cfg, cfg.mesh.h / cfg.mesh.data_refinement, true)
}

/// Deposit-free mesh used by the inversion.
pub fn inversion_mesh(cfg: &RunConfig) -> Result<Arc<Mesh>> {
    build_mesh(cfg, cfg.mesh.h, false)
}

pub struct Synthesis {
    pub clean: MultistaticMatrix,
    /// Noisy and, if configured, band-truncated.
    pub data: MultistaticMatrix,
}

/// Clean matrix on the data mesh.
pub fn synthesize_clean(cfg: &RunConfig) -> Result<MultistaticMatrix> {
    let synth = Synthesizer::new(data_mesh(cfg)?, &cfg.effective_materials(), cfg.omega)?;
    match cfg.probes.kind {
        ProbeKind::Point => synth.point(&cfg.probes),
        ProbeKind::Coil => synth.coil(&cfg.probes),
    }
}

/// Applies the configured noise and band to a clean matrix.
pub fn degrade(cfg: &RunConfig, clean: &MultistaticMatrix) -> Result<MultistaticMatrix> {
    let noisy = add_noise(clean, cfg.noise.delta, cfg.noise.seed)?;
    match cfg.band.m {
        Some(m) => band_truncate(&noisy, m, cfg.band.convention),
        None => Ok(noisy),
    }
}

pub fn synthesize(cfg: &RunConfig) -> Result<Synthesis> {
    let clean = synthesize_clean(cfg)?;
    let data = degrade(cfg, &clean)?;
    Ok(Synthesis { clean, data })
}

/// Incident, scattered and total field of one source on the data mesh.
pub struct ForwardFields {
    pub mesh: Arc<Mesh>,
    pub source: usize,
    pub incident: ComplexField,
    pub scattered: ComplexField,
    pub total: ComplexField,
}

pub fn forward_fields(cfg: &RunConfig) -> Result<ForwardFields> {
    let sources = cfg.probes.sources();
    let source = cfg.forward.source;
    let Some(spec) = sources.get(source) else {
        return invalid(format!("forward.source {source} out of range for {} probes", sources.len()));
    };
    let mesh = data_mesh(cfg)?;
    let synth = Synthesizer::new(mesh.clone(), &cfg.effective_materials(), cfg.omega)?;
    let incident = synth.reference().incident(spec)?.into_nodal();
    let scattered = synth.scattering().scattered(&incident)?;
    let total = incident.add(&scattered)?;
    Ok(ForwardFields {
        mesh,
        source,
        incident,
        scattered,
        total,
    })
}

/// Precomputed incident fields of the probe array on the inversion mesh.
pub struct Inverter {
    config: RunConfig,
    fields: Vec<crate::forward::IncidentField>,
}

impl Inverter {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        let mesh = inversion_mesh(cfg)?;
        let reference = coefficients(&mesh, &cfg.effective_materials(), false)?;
        let op = ForwardOperator::new(mesh, reference, cfg.omega)?;
        let fields = op.incidents(&cfg.probes.sources())?;
        Ok(Self {
            config: cfg.clone(),
            fields,
        })
    }

    /// Noise level for the discrepancy principle: the matrix's own, else `lsm.delta`, else `noise.delta`.
    pub fn noise_level(&self, matrix: &MultistaticMatrix) -> f64 {
        if matrix.noise_level > 0.0 {
            matrix.noise_level
        } else {
            self.config.lsm.delta.unwrap_or(self.config.noise.delta)
        }
    }

    pub fn invert(&self, matrix: &MultistaticMatrix) -> Result<IndicatorField> {
        self.invert_on(matrix, &self.config.grid)
    }

    pub fn invert_on(&self, matrix: &MultistaticMatrix, grid: &SamplingGrid) -> Result<IndicatorField> {
        let probes = &self.config.probes;
        if matrix.n() != probes.count || matrix.kind != probes.kind {
            return invalid(format!(
                "matrix is {} {}×{}, configuration has {} {} probes",
                matrix.kind,
                matrix.n(),
                matrix.n(),
                probes.count,
                probes.kind
            ));
        }
        let rhs = IncidentRhs::new(probes, &self.fields)?.normalized(self.config.lsm.normalize_rhs);
        run_lsm(matrix, grid, &rhs, self.noise_level(matrix))
    }
}

pub fn invert(cfg: &RunConfig, matrix: &MultistaticMatrix) -> Result<IndicatorField> {
    Inverter::new(cfg)?.invert(matrix)
}

/// Localization figures of merit of an indicator against the true deposits.
#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    pub argmax: Point2,
    pub argmax_inside: bool,
    /// Area-weighted centroid of all deposits.
    pub centroid: Point2,
    pub centroid_distance: f64,
    pub z_error: f64,
    /// Mean indicator inside the deposits over mean outside.
    pub contrast: f64,
    /// Local maxima of the 3×3-smoothed indicator, strongest first.
    pub peaks: Vec<Point2>,
    /// Per deposit: whether one of the `k` strongest peaks (`k` = number of deposits) lies inside it.
    pub components_found: Vec<bool>,
    pub converged_fraction: f64,
}

fn smoothed(grid: &SamplingGrid, v: &[f64]) -> Vec<f64> {
    let (nr, nz) = (grid.n_r as isize, grid.n_z as isize);
    let mut out = vec![0.0; v.len()];
    for j in 0..nz {
        for i in 0..nr {
            let (mut sum, mut count) = (0.0, 0.0);
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if a >= 0 && a < nr && b >= 0 && b < nz {
                        sum += v[(b * nr + a) as usize];
                        count += 1.0;
                    }
                }
            }
            out[(j * nr + i) as usize] = sum / count;
        }
    }
    out
}

/// Indices of strict local maxima over the 8-neighbourhood, strongest first.
pub fn local_maxima(grid: &SamplingGrid, v: &[f64]) -> Vec<usize> {
    let (nr, nz) = (grid.n_r as isize, grid.n_z as isize);
    let mut peaks = Vec::new();
    for j in 0..nz {
        for i in 0..nr {
            let c = v[(j * nr + i) as usize];
            let mut is_peak = true;
            for dj in -1..=1 {
                for di in -1..=1 {
                    let (a, b) = (i + di, j + dj);
                    if (di, dj) != (0, 0) && a >= 0 && a < nr && b >= 0 && b < nz && v[(b * nr + a) as usize] >= c {
                        is_peak = false;
                    }
                }
            }
            if is_peak {
                peaks.push((j * nr + i) as usize);
            }
        }
    }
    peaks.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    peaks
}

pub fn metrics(ind: &IndicatorField, deposits: &[RegionSpec]) -> Metrics {
    let grid = &ind.grid;
    let inside_any = |p: Point2| deposits.iter().any(|d| d.contains(p));
    let argmax = ind.argmax_point();
    let total_area: f64 = deposits.iter().map(|d| d.area()).sum();
    let centroid = if total_area > 0.0 {
        let (r, z) = deposits.iter().fold((0.0, 0.0), |(r, z), d| {
            let c = d.centroid();
            (r + d.area() * c.r, z + d.area() * c.z)
        });
        Point2::new(r / total_area, z / total_area)
    } else {
        Point2::new(f64::NAN, f64::NAN)
    };
    let (mut sin, mut nin, mut sout, mut nout) = (0.0, 0usize, 0.0, 0usize);
    for (l, v) in ind.raw.iter().enumerate() {
        if inside_any(grid.point(l)) {
            sin += v;
            nin += 1;
        } else {
            sout += v;
            nout += 1;
        }
    }
    let contrast = if nin > 0 && nout > 0 {
        (sin / nin as f64) / (sout / nout as f64)
    } else {
        f64::NAN
    };
    let smooth = smoothed(grid, &ind.raw);
    let peak_idx = local_maxima(grid, &smooth);
    let peaks: Vec<Point2> = peak_idx.iter().map(|&l| grid.point(l)).collect();
    let strongest = &peaks[..deposits.len().min(peaks.len())];
    let components_found = deposits
        .iter()
        .map(|d| strongest.iter().any(|p| d.contains(*p)))
        .collect();
    Metrics {
        argmax,
        argmax_inside: inside_any(argmax),
        centroid,
        centroid_distance: argmax.distance(&centroid),
        z_error: (argmax.z - centroid.z).abs(),
        contrast,
        peaks,
        components_found,
        converged_fraction: ind.converged_fraction(),
    }
}

pub const EXPERIMENT_IDS: &[&str] = &[
    "fig5_N4",
    "fig5_N8",
    "fig5_N16",
    "fig6_M1",
    "fig6_M2",
    "fig6_M8",
    "fig7_coils_N4",
    "fig7_coils_N8",
    "fig7_coils_N16",
    "fig8_coils_M1",
    "fig8_coils_M2",
    "fig8_coils_M8",
    "fig9_two_deposits",
    "fig10_drop",
];

/// Two semi-discs of different size whose centres are 24.5 mm apart.
pub fn two_deposits(attachment_radius: f64) -> Vec<RegionSpec> {
    vec![
        RegionSpec::SemiDiscDeposit {
            attachment_radius,
            radius_r: 3e-3,
            radius_z: 5e-3,
            center_z: -12.25e-3,
        },
        RegionSpec::SemiDiscDeposit {
            attachment_radius,
            radius_r: 2e-3,
            radius_z: 3.5e-3,
            center_z: 12.25e-3,
        },
    ]
}

/// Drop-shaped deposit on the wall, 50 mm long with a rounded head and a tapered tail.
///
/// Profile `r = a + t·√s(1 − s)/max` for `s ∈ [0, 1]` along `z`, peak thickness `t` = 4 mm.
pub fn drop_deposit(attachment_radius: f64) -> RegionSpec {
    let (length, thickness, samples) = (50e-3, 4e-3, 48);
    let peak = (1.0f64 / 3.0).sqrt() * (2.0 / 3.0);
    let vertices = (0..=samples)
        .map(|k| {
            let s = k as f64 / samples as f64;
            Point2::new(
                attachment_radius + thickness * s.sqrt() * (1.0 - s) / peak,
                -0.5 * length + s * length,
            )
        })
        .collect();
    RegionSpec::PolylineDeposit { vertices }
}

/// Configuration of a canned experiment, derived from `base`.
pub fn experiment_config(id: &str, base: &RunConfig) -> Result<RunConfig> {
    let mut cfg = base.clone();
    let r_out = cfg.geometry.tube_outer_radius();
    let set_count = |cfg: &mut RunConfig, n: usize| cfg.probes.count = n;
    let (kind, rest) = if let Some(rest) = id.strip_prefix("fig5_N") {
        (ProbeKind::Point, ("N", rest))
    } else if let Some(rest) = id.strip_prefix("fig6_M") {
        (ProbeKind::Point, ("M", rest))
    } else if let Some(rest) = id.strip_prefix("fig7_coils_N") {
        (ProbeKind::Coil, ("N", rest))
    } else if let Some(rest) = id.strip_prefix("fig8_coils_M") {
        (ProbeKind::Coil, ("M", rest))
    } else if id == "fig9_two_deposits" {
        cfg.geometry.deposits = two_deposits(r_out);
        (ProbeKind::Coil, ("M", "8"))
    } else if id == "fig10_drop" {
        cfg.geometry.deposits = vec![drop_deposit(r_out)];
        (ProbeKind::Coil, ("M", "8"))
    } else {
        return invalid(format!("unknown experiment `{id}`; known: {}", EXPERIMENT_IDS.join(", ")));
    };
    if !EXPERIMENT_IDS.contains(&id) {
        return invalid(format!("unknown experiment `{id}`; known: {}", EXPERIMENT_IDS.join(", ")));
    }
    cfg.probes.kind = kind;
    let value: usize = rest.1.parse().expect("ids carry numbers");
    match rest.0 {
        "N" => {
            set_count(&mut cfg, value);
            cfg.band.m = None;
        }
        _ => {
            set_count(&mut cfg, 32);
            cfg.band.m = Some(value);
        }
    }
    cfg.forward.source = cfg.forward.source.min(cfg.probes.count - 1);
    cfg.validate()?;
    Ok(cfg)
}

pub struct ExperimentRun {
    pub config: RunConfig,
    pub synthesis: Synthesis,
    pub indicator: IndicatorField,
    pub metrics: Metrics,
}

pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentRun> {
    let synthesis = synthesize(cfg)?;
    let indicator = invert(cfg, &synthesis.data)?;
    let metrics = metrics(&indicator, &cfg.geometry.deposits);
    Ok(ExperimentRun {
        config: cfg.clone(),
        synthesis,
        indicator,
        metrics,
    })
}
