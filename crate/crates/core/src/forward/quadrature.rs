//! Quadrature on triangles for integrands carrying powers of `r`, including `1/r`.

use crate::mesh::Point2;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let step = p1 / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Product Gauss rule on triangles sliced along `r`.
///
/// The triangle is cut at the middle vertex's `r` into at most two pieces,
/// each bounded by two straight edges over an `r` interval. Gauss–Legendre
/// in `r` times Gauss–Legendre in `z` between the edges gives nodes strictly
/// inside the triangle, and the rule integrates `r^k` times any polynomial
/// in `z` exactly up to the stated orders. Integrands of the form
/// `polynomial / r` are integrated to near machine precision on triangles
/// away from the axis, and exactly on grid triangles touching it when the
/// numerator vanishes on the axis-side vertex.
#[derive(Clone, Debug)]
pub struct SlicedRule {
    r: (Vec<f64>, Vec<f64>),
    z: (Vec<f64>, Vec<f64>),
}

impl SlicedRule {
    pub fn new(n_r: usize, n_z: usize) -> Self {
        Self {
            r: gauss_legendre(n_r),
            z: gauss_legendre(n_z),
        }
    }

    /// Calls `f(point, weight)` for every node on the triangle `c`.
    pub fn for_each(&self, c: &[Point2; 3], mut f: impl FnMut(Point2, f64)) {
        let mut s = *c;
        s.sort_by(|a, b| a.r.total_cmp(&b.r));
        let [p1, p2, p3] = s;
        let long = |r: f64| edge_z(p1, p3, r);
        self.piece(p1.r, p2.r, &long, &|r| edge_z(p1, p2, r), &mut f);
        self.piece(p2.r, p3.r, &long, &|r| edge_z(p2, p3, r), &mut f);
    }

    fn piece(
        &self,
        ra: f64,
        rb: f64,
        e1: &dyn Fn(f64) -> f64,
        e2: &dyn Fn(f64) -> f64,
        f: &mut impl FnMut(Point2, f64),
    ) {
        let hr = 0.5 * (rb - ra);
        if hr <= 0.0 {
            return;
        }
        let cr = 0.5 * (ra + rb);
        for (xr, wr) in self.r.0.iter().zip(&self.r.1) {
            let r = cr + hr * xr;
            let (za, zb) = (e1(r), e2(r));
            let hz = 0.5 * (zb - za);
            let cz = 0.5 * (za + zb);
            for (xz, wz) in self.z.0.iter().zip(&self.z.1) {
                f(Point2::new(r, cz + hz * xz), wr * wz * hr * hz.abs());
            }
        }
    }
}

fn edge_z(a: Point2, b: Point2, r: f64) -> f64 {
    if b.r == a.r {
        return 0.5 * (a.z + b.z);
    }
    a.z + (r - a.r) / (b.r - a.r) * (b.z - a.z)
}

/// Intersection of triangle `tri` with the axis-aligned rectangle, as a convex polygon.
pub fn clip_to_rectangle(tri: &[Point2; 3], r_lo: f64, r_hi: f64, z_lo: f64, z_hi: f64) -> Vec<Point2> {
    let mut poly: Vec<Point2> = tri.to_vec();
    let planes: [(fn(&Point2) -> f64, f64, bool); 4] = [
        (|p| p.r, r_lo, true),
        (|p| p.r, r_hi, false),
        (|p| p.z, z_lo, true),
        (|p| p.z, z_hi, false),
    ];
    for (coord, level, keep_above) in planes {
        if poly.is_empty() {
            break;
        }
        let inside = |p: &Point2| {
            if keep_above {
                coord(p) >= level
            } else {
                coord(p) <= level
            }
        };
        let mut out = Vec::with_capacity(poly.len() + 2);
        for k in 0..poly.len() {
            let a = poly[k];
            let b = poly[(k + 1) % poly.len()];
            let (ia, ib) = (inside(&a), inside(&b));
            if ia {
                out.push(a);
            }
            if ia != ib {
                let t = (level - coord(&a)) / (coord(&b) - coord(&a));
                out.push(Point2::new(a.r + t * (b.r - a.r), a.z + t * (b.z - a.z)));
            }
        }
        poly = out;
    }
    poly
}
