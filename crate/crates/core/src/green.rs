//! Free-space Green function of the axisymmetric operator `∇·(1/r ∇(r ·))`.
//!
//! The kernel is the azimuthal component of a ring source in ℝ³. Two
//! independent evaluation routes are provided:
//!
//! * [`green_closed_form`] uses `Φ = (1/2π)·sqrt(r₀/r)·Q_{1/2}(t)` with
//!   `t = 1 + |x − x₀|²/(2 r r₀)`, the toroidal Legendre function being
//!   computed from complete elliptic integrals by the arithmetic-geometric
//!   mean. Both `Q_{1/2}` and `Q_{-1/2}` come out of a single AGM run with
//!   only positive terms summed, so there is no cancellation for large `t`.
//! * [`green_quadrature`] integrates the ring of ℝ³ point sources directly
//!   with adaptive Gauss–Kronrod quadrature.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::mesh::Point2;

/// Points closer than this fraction of `r₀` are refused.
pub const NEAR_DIAGONAL: f64 = 1e-6;

/// Value and gradient of the Green function at a field point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenEval {
    pub value: f64,
    pub grad_r: f64,
    pub grad_z: f64,
}

fn check_points(x: Point2, x0: Point2) -> Result<()> {
    if !(x.r > 0.0) || !(x0.r > 0.0) || !x.r.is_finite() || !x0.r.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "Green function needs r > 0 and r0 > 0, got r = {}, r0 = {}",
            x.r, x0.r
        )));
    }
    if !x.z.is_finite() || !x0.z.is_finite() {
        return Err(Error::InvalidArgument("non-finite z coordinate".into()));
    }
    if x.distance(&x0) < NEAR_DIAGONAL * x0.r {
        return Err(Error::Singular(format!(
            "field point ({:e}, {:e}) coincides with the source",
            x.r, x.z
        )));
    }
    Ok(())
}

/// `(Q_{1/2}(t), Q_{-1/2}(t))` from `t − 1 > 0`.
fn toroidal_pair(tm1: f64) -> (f64, f64) {
    // modulus k² = 2/(t + 1), complementary k' = sqrt((t − 1)/(t + 1))
    let k2 = 2.0 / (2.0 + tm1);
    let k = k2.sqrt();
    let kp = (tm1 / (2.0 + tm1)).sqrt();
    // AGM from (1, k'); c_{n+1} = c_n² / (4 a_{n+1}) avoids differences.
    let mut a = 0.5 * (1.0 + kp);
    let mut b = kp.sqrt();
    let mut c = k2 / (2.0 * (1.0 + kp));
    let mut weight = 1.0;
    // Σ_{n≥1} 2^{n-1} c_n², equal to (K − E)/K − k²/2
    let mut sum = c * c;
    for _ in 0..64 {
        let a_next = 0.5 * (a + b);
        let b_next = (a * b).sqrt();
        c = c * c / (4.0 * a_next);
        weight *= 2.0;
        let term = weight * c * c;
        sum += term;
        a = a_next;
        b = b_next;
        if term <= 1e-18 * sum && (a - b).abs() <= 1e-16 * a {
            break;
        }
    }
    let big_k = FRAC_PI_2 / a;
    (2.0 / k * big_k * sum, k * big_k)
}

fn argument_ok(t: f64) -> Result<f64> {
    if !(t > 1.0) || !t.is_finite() {
        return Err(Error::Singular(format!(
            "toroidal Legendre argument must exceed 1, got {t}"
        )));
    }
    Ok(t - 1.0)
}

/// Legendre function of the second kind `Q_{1/2}(t)` for `t > 1`.
pub fn legendre_q_half(t: f64) -> Result<f64> {
    Ok(toroidal_pair(argument_ok(t)?).0)
}

/// Legendre function of the second kind `Q_{-1/2}(t)` for `t > 1`.
pub fn legendre_q_minus_half(t: f64) -> Result<f64> {
    Ok(toroidal_pair(argument_ok(t)?).1)
}

/// Closed-form evaluation through `Q_{1/2}`.
pub fn green_closed_form(x: Point2, x0: Point2) -> Result<f64> {
    check_points(x, x0)?;
    let d2 = (x.r - x0.r).powi(2) + (x.z - x0.z).powi(2);
    let tm1 = d2 / (2.0 * x.r * x0.r);
    let (q, _) = toroidal_pair(tm1);
    Ok((x0.r / x.r).sqrt() * q / (2.0 * PI))
}

/// Value and gradient with respect to the field point `x`.
pub fn green_eval(x: Point2, x0: Point2) -> Result<GreenEval> {
    check_points(x, x0)?;
    let (r, r0) = (x.r, x0.r);
    let dz = x.z - x0.z;
    let d2 = (r - r0).powi(2) + dz * dz;
    let tm1 = d2 / (2.0 * r * r0);
    let t = 1.0 + tm1;
    let (q, qm) = toroidal_pair(tm1);
    // (t² − 1) Q'_ν = ν (t Q_ν − Q_{ν−1})
    let dq = 0.5 * (t * q - qm) / (tm1 * (tm1 + 2.0));
    let dt_dr = (r * r - r0 * r0 - dz * dz) / (2.0 * r * r * r0);
    let dt_dz = dz / (r * r0);
    let scale = (r0 / r).sqrt() / (2.0 * PI);
    Ok(GreenEval {
        value: scale * q,
        grad_r: scale * (dq * dt_dr - 0.5 * q / r),
        grad_z: scale * dq * dt_dz,
    })
}

/// `(∂Φ/∂r, ∂Φ/∂z)` at `x`.
pub fn green_gradient(x: Point2, x0: Point2) -> Result<(f64, f64)> {
    green_eval(x, x0).map(|g| (g.grad_r, g.grad_z))
}

/// Direct quadrature of `(1/4π) ∫₀^{2π} r₀ sinθ / (r² + r₀² − 2 r r₀ sinθ + Δz²)^{1/2} dθ`.
///
/// The constant part `sinθ / sqrt(a)` integrates to zero over a period and is
/// subtracted analytically, which leaves a positive integrand. `n_nodes`
/// sets the initial number of Kronrod nodes; panels are then bisected
/// adaptively until the estimated relative error drops below 1e-14.
pub fn green_quadrature(x: Point2, x0: Point2, n_nodes: usize) -> Result<f64> {
    if n_nodes < 16 {
        return Err(Error::InvalidArgument(format!(
            "green_quadrature needs at least 16 nodes, got {n_nodes}"
        )));
    }
    check_points(x, x0)?;
    let (r, r0) = (x.r, x0.r);
    let d2 = (r - r0).powi(2) + (x.z - x0.z).powi(2);
    let a = r * r + r0 * r0 + (x.z - x0.z).powi(2);
    let b = 2.0 * r * r0;
    let sa = a.sqrt();
    let integrand = |theta: f64| {
        let s = theta.sin();
        let one_minus_s = 2.0 * (FRAC_PI_4 - 0.5 * theta).sin().powi(2);
        let q = (d2 + b * one_minus_s).sqrt();
        r0 * b * s * s / (q * sa * (sa + q))
    };
    // the integrand peaks at θ = π/2; keep it on a panel edge
    let panels = (n_nodes / 15).max(2);
    let half = panels.div_ceil(2);
    let mut edges = Vec::with_capacity(2 * half + 1);
    for k in 0..=half {
        edges.push(-FRAC_PI_2 + PI * k as f64 / half as f64);
    }
    for k in 1..=half {
        edges.push(FRAC_PI_2 + PI * k as f64 / half as f64);
    }
    let integral = adaptive_kronrod(integrand, &edges, 1e-14, 4000);
    Ok(integral / (4.0 * PI))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let pair = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) over consecutive `edges`.
pub(crate) fn adaptive_kronrod<F: Fn(f64) -> f64>(
    f: F,
    edges: &[f64],
    rel_tol: f64,
    max_panels: usize,
) -> f64 {
    let mut panels: Vec<(f64, f64, f64, f64)> = edges
        .windows(2)
        .map(|w| {
            let (v, e) = kronrod15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || panels.len() >= max_panels {
            return total;
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, p)| {
                if p.3 > acc.1 {
                    (i, p.3)
                } else {
                    acc
                }
            });
        let (a, b, _, _) = panels.swap_remove(worst);
        let m = 0.5 * (a + b);
        for (lo, hi) in [(a, m), (m, b)] {
            let (v, e) = kronrod15(&f, lo, hi);
            panels.push((lo, hi, v, e));
        }
    }
}
