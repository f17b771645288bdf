//! Second-order jets: value, gradient and Hessian of a scalar field on the
//! torus chart, plus a univariate variant for functions of the loop parameter.
//!
//! Dimensions up to three are stored inline; unused slots stay zero.

use std::ops::{Add, Mul, Neg, Sub};

pub const MAX_DIM: usize = 3;

pub type Vec3 = [f64; MAX_DIM];
pub type Mat3 = [[f64; MAX_DIM]; MAX_DIM];

/// Scalar field jet at a point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d: Vec3,
    pub dd: Mat3,
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            ..Default::default()
        }
    }

    /// The coordinate function `x_axis`.
    pub fn coordinate(value: f64, axis: usize) -> Self {
        let mut j = Jet::constant(value);
        j.d[axis] = 1.0;
        j
    }

    pub fn scale(self, s: f64) -> Self {
        let mut out = self;
        out.v *= s;
        for i in 0..MAX_DIM {
            out.d[i] *= s;
            for j in 0..MAX_DIM {
                out.dd[i][j] *= s;
            }
        }
        out
    }

    /// `f ∘ self` given `f`, `f'` and `f''` at `self.v`.
    pub fn compose(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut out = Jet::constant(f);
        for i in 0..MAX_DIM {
            out.d[i] = df * self.d[i];
            for j in 0..MAX_DIM {
                out.dd[i][j] = ddf * self.d[i] * self.d[j] + df * self.dd[i][j];
            }
        }
        out
    }

    /// `f ∘ self` for a univariate jet `f` evaluated at `self.v`.
    pub fn compose_dual(self, f: Dual2) -> Self {
        self.compose(f.v, f.d, f.dd)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut out = self;
        out.v += rhs.v;
        for i in 0..MAX_DIM {
            out.d[i] += rhs.d[i];
            for j in 0..MAX_DIM {
                out.dd[i][j] += rhs.dd[i][j];
            }
        }
        out
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + rhs.scale(-1.0)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let mut out = Jet::constant(self.v * rhs.v);
        for i in 0..MAX_DIM {
            out.d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
            for j in 0..MAX_DIM {
                out.dd[i][j] = self.dd[i][j] * rhs.v
                    + self.d[i] * rhs.d[j]
                    + self.d[j] * rhs.d[i]
                    + self.v * rhs.dd[i][j];
            }
        }
        out
    }
}

/// Univariate second-order jet `(f, f', f'')`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Dual2 {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Dual2 {
    pub fn new(v: f64, d: f64, dd: f64) -> Self {
        Dual2 { v, d, dd }
    }

    pub fn constant(v: f64) -> Self {
        Dual2 { v, d: 0.0, dd: 0.0 }
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.v;
        Dual2 {
            v: inv,
            d: -self.d * inv * inv,
            dd: (2.0 * self.d * self.d * inv - self.dd) * inv * inv,
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Dual2 {
            v: self.v * s,
            d: self.d * s,
            dd: self.dd * s,
        }
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(self, rhs: Dual2) -> Dual2 {
        Dual2::new(self.v + rhs.v, self.d + rhs.d, self.dd + rhs.dd)
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(self, rhs: Dual2) -> Dual2 {
        Dual2::new(self.v - rhs.v, self.d - rhs.d, self.dd - rhs.dd)
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, rhs: Dual2) -> Dual2 {
        Dual2::new(
            self.v * rhs.v,
            self.d * rhs.v + self.v * rhs.d,
            self.dd * rhs.v + 2.0 * self.d * rhs.d + self.v * rhs.dd,
        )
    }
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Inverse and determinant of the leading `dim × dim` block.
pub fn inverse(m: &Mat3, dim: usize) -> (Mat3, f64) {
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    match dim {
        1 => {
            let det = m[0][0];
            inv[0][0] = 1.0 / det;
            (inv, det)
        }
        2 => {
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            inv[0][0] = m[1][1] / det;
            inv[0][1] = -m[0][1] / det;
            inv[1][0] = -m[1][0] / det;
            inv[1][1] = m[0][0] / det;
            (inv, det)
        }
        3 => {
            let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
            let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
            let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
            let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
            inv[0][0] = c00 / det;
            inv[1][0] = c01 / det;
            inv[2][0] = c02 / det;
            inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
            inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
            inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
            inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
            inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
            inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
            (inv, det)
        }
        _ => panic!("unsupported dimension {dim}"),
    }
}

pub fn to_vec3(x: &[f64]) -> Vec3 {
    let mut v = [0.0; MAX_DIM];
    v[..x.len()].copy_from_slice(x);
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&Vec3) -> Jet, x: Vec3) {
        let h = 1e-5;
        let j = f(&x);
        for a in 0..MAX_DIM {
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            assert!((j.d[a] - (fp.v - fm.v) / (2.0 * h)).abs() < 1e-7);
            for b in 0..MAX_DIM {
                assert!((j.dd[a][b] - (fp.d[b] - fm.d[b]) / (2.0 * h)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn product_and_composition_match_finite_differences() {
        let f = |x: &Vec3| {
            let a = Jet::coordinate(x[0], 0);
            let b = Jet::coordinate(x[1], 1);
            let c = Jet::coordinate(x[2], 2);
            let p = a * b + c * c.scale(0.5);
            p.compose(p.v.sin(), p.v.cos(), -p.v.sin()) * a
        };
        fd_check(f, [0.3, -0.7, 1.1]);
    }

    #[test]
    fn dual_reciprocal() {
        // f(t) = 2 + t², 1/f at t = 0.5
        let t = 0.5;
        let f = Dual2::new(2.0 + t * t, 2.0 * t, 2.0);
        let r = f.recip();
        let g = |t: f64| 1.0 / (2.0 + t * t);
        let h = 1e-4;
        assert!((r.v - g(t)).abs() < 1e-15);
        assert!((r.d - (g(t + h) - g(t - h)) / (2.0 * h)).abs() < 1e-8);
        assert!((r.dd - (g(t + h) - 2.0 * g(t) + g(t - h)) / (h * h)).abs() < 1e-6);
    }

    #[test]
    fn inverse_three() {
        let m = [[2.0, 0.3, -0.1], [0.3, 1.5, 0.2], [-0.1, 0.2, -1.0]];
        let (inv, det) = inverse(&m, 3);
        assert!(det.abs() > 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| m[i][k] * inv[k][j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
