//! Linear Sampling Method: Tikhonov-regularized solves of `Z g = φ_ξ` over a
//! sampling grid with a Morozov-calibrated parameter per point.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::forward::IncidentField;
use crate::mesh::{Point2, RegionTag};
use crate::synth::{MultistaticMatrix, ProbeArray, ProbeKind};

/// Singular values below this fraction of `σ₁` are dropped.
pub const RANK_FLOOR: f64 = 1e-14;
const BRACKET_LO: f64 = 1e-16;
const BRACKET_HI: f64 = 1e4;
const BISECTION_WIDTH: f64 = 1e-8;

/// Rectangle `[r_lo, r_hi] × [z_lo, z_hi]` sampled at the centres of `n_r × n_z` cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingGrid {
    pub r_lo: f64,
    pub r_hi: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub n_r: usize,
    pub n_z: usize,
}

impl SamplingGrid {
    pub fn len(&self) -> usize {
        self.n_r * self.n_z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (
            (self.r_hi - self.r_lo) / self.n_r as f64,
            (self.z_hi - self.z_lo) / self.n_z as f64,
        )
    }

    /// Point `ℓ = j·n_r + i`, `i` along `r` and `j` along `z`.
    pub fn point(&self, index: usize) -> Point2 {
        let (dr, dz) = self.cell_size();
        let (i, j) = (index % self.n_r, index / self.n_r);
        Point2::new(self.r_lo + (i as f64 + 0.5) * dr, self.z_lo + (j as f64 + 0.5) * dz)
    }

    pub fn points(&self) -> Vec<Point2> {
        (0..self.len()).map(|l| self.point(l)).collect()
    }

    /// Checks the rectangle lies beyond `r_min` and spans the probe array axially.
    pub fn validate(&self, r_min: f64, probe_z: (f64, f64)) -> Result<()> {
        let mut errors = Vec::new();
        if self.n_r == 0 || self.n_z == 0 {
            errors.push("sampling grid needs at least one cell in each direction".to_string());
        }
        if !(self.r_hi > self.r_lo && self.z_hi > self.z_lo) {
            errors.push("sampling grid bounds must be increasing".to_string());
        }
        if self.r_lo < r_min {
            errors.push(format!(
                "sampling grid must lie outside the tube wall (r_lo = {} < {r_min})",
                self.r_lo
            ));
        }
        if self.z_lo > probe_z.0 || self.z_hi < probe_z.1 {
            errors.push(format!(
                "sampling grid z range [{}, {}] does not cover the probe array [{}, {}]",
                self.z_lo, self.z_hi, probe_z.0, probe_z.1
            ));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

/// `Z = U Σ V*` with `σ` sorted in descending order.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    u: DMatrix<Complex64>,
    sigma: Vec<f64>,
    v_adjoint: DMatrix<Complex64>,
    rank: usize,
}

impl SvdFactors {
    pub fn new(z: &DMatrix<Complex64>) -> Result<Self> {
        if !z.is_square() || z.nrows() == 0 {
            return invalid("SVD expects a nonempty square matrix");
        }
        if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("matrix has non-finite entries");
        }
        let svd = z.clone().svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v)) => (u, v),
            _ => return Err(Error::Singular("SVD did not converge".into())),
        };
        let n = z.nrows();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
        let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
        let u = DMatrix::from_fn(n, n, |i, s| u[(i, order[s])]);
        let v_adjoint = DMatrix::from_fn(n, n, |s, j| v_t[(order[s], j)]);
        let floor = RANK_FLOOR * sigma[0];
        let rank = sigma.iter().take_while(|&&s| s > floor).count();
        Ok(Self {
            u,
            sigma,
            v_adjoint,
            rank,
        })
    }

    pub fn from_matrix(m: &MultistaticMatrix) -> Result<Self> {
        Self::new(&m.to_dmatrix())
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.sigma
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    pub fn u(&self) -> &DMatrix<Complex64> {
        &self.u
    }

    pub fn v_adjoint(&self) -> &DMatrix<Complex64> {
        &self.v_adjoint
    }

    pub fn reconstruct(&self) -> DMatrix<Complex64> {
        let n = self.n();
        let s = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(self.sigma[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        &self.u * s * &self.v_adjoint
    }

    fn spectrum(&self, phi: &[Complex64]) -> Result<Spectrum> {
        if phi.len() != self.n() {
            return invalid(format!("right-hand side has {} entries, expected {}", phi.len(), self.n()));
        }
        let beta = self.u.ad_mul(&DVector::from_column_slice(phi));
        let kept = self.rank;
        Ok(Spectrum {
            sigma: self.sigma[..kept].to_vec(),
            beta2: beta.iter().take(kept).map(|b| b.norm_sqr()).collect(),
            orthogonal: beta.iter().skip(kept).map(|b| b.norm_sqr()).sum(),
            beta,
        })
    }
}

struct Spectrum {
    sigma: Vec<f64>,
    beta: DVector<Complex64>,
    beta2: Vec<f64>,
    /// Energy of `φ` outside the numerical range.
    orthogonal: f64,
}

impl Spectrum {
    fn residual2(&self, eps: f64) -> f64 {
        self.sigma
            .iter()
            .zip(&self.beta2)
            .map(|(s, b)| {
                let f = eps / (s * s + eps);
                f * f * b
            })
            .sum::<f64>()
            + self.orthogonal
    }

    fn g_norm2(&self, eps: f64) -> f64 {
        self.sigma
            .iter()
            .zip(&self.beta2)
            .map(|(s, b)| {
                let f = s / (s * s + eps);
                f * f * b
            })
            .sum()
    }
}

/// `g = Σ_s σ_s/(σ_s² + ε) (u_s* φ) v_s`, the solution of `(εI + Z*Z) g = Z* φ`.
pub fn tikhonov_solve(svd: &SvdFactors, phi: &[Complex64], eps: f64) -> Result<Vec<Complex64>> {
    if !(eps > 0.0) || !eps.is_finite() {
        return invalid(format!("Tikhonov parameter must be positive, got {eps}"));
    }
    let spec = svd.spectrum(phi)?;
    Ok(filtered(svd, &spec, eps))
}

fn filtered(svd: &SvdFactors, spec: &Spectrum, eps: f64) -> Vec<Complex64> {
    let n = svd.n();
    let coeffs = DVector::from_fn(n, |s, _| {
        if s < svd.rank {
            let sg = svd.sigma[s];
            spec.beta[s] * (sg / (sg * sg + eps))
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    svd.v_adjoint.ad_mul(&coeffs).iter().copied().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MorozovFlag {
    Converged,
    /// Even the smallest bracketed ε leaves the discrepancy above `δσ₁‖g‖`.
    LowerBound,
    /// Even the largest bracketed ε leaves the discrepancy below `δσ₁‖g‖`.
    UpperBound,
}

impl MorozovFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            MorozovFlag::Converged => "converged",
            MorozovFlag::LowerBound => "lower_bound",
            MorozovFlag::UpperBound => "upper_bound",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MorozovChoice {
    pub epsilon: f64,
    pub flag: MorozovFlag,
    /// `‖Z g − φ‖`
    pub residual: f64,
    pub g_norm: f64,
}

/// Morozov discrepancy `‖Z g_ε − φ‖² − (δσ₁)² ‖g_ε‖²`.
///
/// `δ` is a relative noise level; the absolute bound is `δ‖Z‖₂ = δσ₁`.
pub fn discrepancy(svd: &SvdFactors, phi: &[Complex64], eps: f64, delta: f64) -> Result<f64> {
    let spec = svd.spectrum(phi)?;
    let d = delta * svd.sigma[0];
    Ok(spec.residual2(eps) - d * d * spec.g_norm2(eps))
}

/// Root of [`discrepancy`] by bisection on `log ε` over `[1e-16 σ₁², 1e4 σ₁²]`.
pub fn morozov_epsilon(svd: &SvdFactors, phi: &[Complex64], delta: f64) -> Result<MorozovChoice> {
    if !(delta > 0.0) || !delta.is_finite() {
        return invalid(format!("noise level must be positive for the discrepancy principle, got {delta}"));
    }
    let spec = svd.spectrum(phi)?;
    if spec.beta2.iter().sum::<f64>() + spec.orthogonal == 0.0 {
        return invalid("right-hand side is zero");
    }
    let s1 = svd.sigma[0];
    if s1 == 0.0 {
        return Err(Error::NoScatteringData);
    }
    let d2 = (delta * s1).powi(2);
    let f = |eps: f64| spec.residual2(eps) - d2 * spec.g_norm2(eps);
    let choice = |eps: f64, flag| MorozovChoice {
        epsilon: eps,
        flag,
        residual: spec.residual2(eps).sqrt(),
        g_norm: spec.g_norm2(eps).sqrt(),
    };
    let (mut lo, mut hi) = ((BRACKET_LO * s1 * s1).ln(), (BRACKET_HI * s1 * s1).ln());
    if f(lo.exp()) > 0.0 {
        return Ok(choice(lo.exp(), MorozovFlag::LowerBound));
    }
    if f(hi.exp()) < 0.0 {
        return Ok(choice(hi.exp(), MorozovFlag::UpperBound));
    }
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        if f(mid.exp()) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(choice((0.5 * (lo + hi)).exp(), MorozovFlag::Converged))
}

/// Produces the right-hand side `φ_ξ` for a sampling point.
pub trait RhsProvider: Sync {
    fn rhs(&self, xi: Point2) -> Result<Vec<Complex64>>;
}

impl<F> RhsProvider for F
where
    F: Fn(Point2) -> Result<Vec<Complex64>> + Sync,
{
    fn rhs(&self, xi: Point2) -> Result<Vec<Complex64>> {
        self(xi)
    }
}

/// Right-hand sides read off the incident fields of the probe array.
pub struct IncidentRhs<'a> {
    array: &'a ProbeArray,
    fields: &'a [IncidentField],
    normalize: bool,
}

impl<'a> IncidentRhs<'a> {
    pub fn new(array: &'a ProbeArray, fields: &'a [IncidentField]) -> Result<Self> {
        if fields.len() != array.count {
            return invalid(format!("{} incident fields for {} probes", fields.len(), array.count));
        }
        Ok(Self {
            array,
            fields,
            normalize: false,
        })
    }

    /// Scales every `φ_ξ` to unit norm, so that `1/‖g‖` does not simply track `1/‖φ_ξ‖`.
    pub fn normalized(mut self, normalize: bool) -> Self {
        self.normalize = normalize;
        self
    }
}

impl RhsProvider for IncidentRhs<'_> {
    fn rhs(&self, xi: Point2) -> Result<Vec<Complex64>> {
        let mut phi = match self.array.kind {
            ProbeKind::Point => rhs_point(self.array, xi, self.fields),
            ProbeKind::Coil => rhs_coil(self.array, xi, self.fields),
        }?;
        if self.normalize {
            let norm = phi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                phi.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(phi)
    }
}

fn check_sampling_point(array: &ProbeArray, xi: Point2, fields: &[IncidentField]) -> Result<()> {
    if fields.len() != array.count {
        return invalid(format!("{} incident fields for {} probes", fields.len(), array.count));
    }
    let Some(first) = fields.first() else {
        return invalid("probe array is empty");
    };
    let mesh = first.nodal().mesh();
    let loc = mesh.locate(xi)?;
    if mesh.tags()[loc.triangle] == RegionTag::Tube {
        return invalid(format!("sampling point ({}, {}) lies inside the tube wall", xi.r, xi.z));
    }
    if let Some(p) = array
        .positions()
        .iter()
        .find(|p| p.distance(&xi) <= 1e-9 * array.radius.max(xi.r))
    {
        return invalid(format!("sampling point coincides with the probe at ({}, {})", p.r, p.z));
    }
    Ok(())
}

/// `φ(i) = u⁰(x_i; ξ)`, via reciprocity `(r_ξ / r_i) u⁰(ξ; x_i)`.
pub fn rhs_point(array: &ProbeArray, xi: Point2, fields: &[IncidentField]) -> Result<Vec<Complex64>> {
    check_sampling_point(array, xi, fields)?;
    array
        .positions()
        .iter()
        .zip(fields)
        .map(|(x, u0)| Ok(u0.evaluate(xi)? * (xi.r / x.r)))
        .collect()
}

/// `φ(i) = u⁰_i(ξ)` for the field of coil `i`.
pub fn rhs_coil(array: &ProbeArray, xi: Point2, fields: &[IncidentField]) -> Result<Vec<Complex64>> {
    check_sampling_point(array, xi, fields)?;
    fields.iter().map(|u0| u0.evaluate(xi)).collect()
}

/// `1/‖g_ℓ‖` over a sampling grid with per-point diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorField {
    pub grid: SamplingGrid,
    pub raw: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub flags: Vec<MorozovFlag>,
    /// `‖Z g_ℓ − φ_ℓ‖`
    pub residual: Vec<f64>,
    pub delta: f64,
}

impl IndicatorField {
    /// Affine map of the raw values to `[0, 1]`.
    pub fn normalized(&self) -> Vec<f64> {
        let (lo, hi) = self
            .raw
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if hi > lo {
            self.raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; self.raw.len()]
        }
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (l, v) in self.raw.iter().enumerate() {
            if *v > self.raw[best] {
                best = l;
            }
        }
        best
    }

    pub fn argmax_point(&self) -> Point2 {
        self.grid.point(self.argmax())
    }

    pub fn converged_fraction(&self) -> f64 {
        let n = self.flags.iter().filter(|f| **f == MorozovFlag::Converged).count();
        n as f64 / self.flags.len().max(1) as f64
    }
}

/// Runs the sampling method over every grid point, sharing one SVD of `matrix`.
pub fn run_lsm(
    matrix: &MultistaticMatrix,
    grid: &SamplingGrid,
    rhs: &dyn RhsProvider,
    delta: f64,
) -> Result<IndicatorField> {
    if matrix.is_zero() {
        return Err(Error::NoScatteringData);
    }
    if grid.is_empty() {
        return invalid("sampling grid is empty");
    }
    let svd = SvdFactors::from_matrix(matrix)?;
    if svd.rank == 0 {
        return Err(Error::NoScatteringData);
    }
    let per_point: Vec<(f64, MorozovChoice)> = (0..grid.len())
        .into_par_iter()
        .map(|l| {
            let phi = rhs.rhs(grid.point(l))?;
            let choice = morozov_epsilon(&svd, &phi, delta)?;
            if !(choice.g_norm > 0.0) || !choice.g_norm.is_finite() {
                return Err(Error::Singular(format!(
                    "indicator undefined at sampling point {l}: ‖g‖ = {}",
                    choice.g_norm
                )));
            }
            Ok((1.0 / choice.g_norm, choice))
        })
        .collect::<Result<_>>()?;
    let unflagged = per_point
        .iter()
        .filter(|(_, c)| c.flag != MorozovFlag::Converged)
        .count();
    if unflagged > 0 {
        log::warn!("{unflagged} of {} sampling points hit the ε bracket", grid.len());
    }
    Ok(IndicatorField {
        grid: grid.clone(),
        raw: per_point.iter().map(|(v, _)| *v).collect(),
        epsilon: per_point.iter().map(|(_, c)| c.epsilon).collect(),
        flags: per_point.iter().map(|(_, c)| c.flag).collect(),
        residual: per_point.iter().map(|(_, c)| c.residual).collect(),
        delta,
    })
}
