//! Tensor terms supported in a tube around a closed curve on the torus.
//!
//! A tube term is `scale · form · φ(r²/ρ²) · w(x) · f(θ*(x))` where `θ*` is
//! the parameter of the Euclidean closest point on the center curve, `φ` is a
//! C² cutoff equal to 1 for `r ≤ ρ/2` and 0 for `r ≥ ρ`, `w` is a weight that
//! is polynomial in the offset from the curve and `f` is a profile in θ.
//! All first and second derivatives are exact.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use super::jet::{dot, Dual2, Jet, Vec3, MAX_DIM};
use super::series::PeriodicSeries;
use crate::error::{invalid, Result};

/// Closed curve `c(θ) = θ·w + periodic(θ)` in the universal cover.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CenterCurve {
    pub winding: Vec<i64>,
    pub periodic: PeriodicSeries,
    #[serde(skip)]
    coarse: OnceLock<Coarse>,
}

impl PartialEq for CenterCurve {
    fn eq(&self, other: &Self) -> bool {
        self.winding == other.winding && self.periodic == other.periodic
    }
}

#[derive(Clone, Debug)]
struct Coarse {
    thetas: Vec<f64>,
    points: Vec<Vec3>,
    /// Upper bound on the distance from any curve point to the nearest sample.
    reach: f64,
}

/// Closest point data for a query point.
#[derive(Clone, Copy, Debug)]
pub struct Foot {
    pub theta: f64,
    /// `c, ċ, c̈, c⃛` at `theta`.
    pub curve: [Vec3; 4],
    /// Offset `x − m − c(θ)` for the minimizing lattice translate `m`.
    pub offset: Vec3,
    pub dist2: f64,
}

impl CenterCurve {
    pub fn new(winding: Vec<i64>, periodic: PeriodicSeries) -> Self {
        CenterCurve {
            winding,
            periodic,
            coarse: OnceLock::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.winding.len()
    }

    pub fn eval(&self, theta: f64) -> [Vec3; 4] {
        let mut e = self.periodic.eval(theta);
        for (i, &w) in self.winding.iter().enumerate() {
            e[0][i] += theta * w as f64;
            e[1][i] += w as f64;
        }
        e
    }

    fn coarse(&self) -> &Coarse {
        self.coarse.get_or_init(|| {
            let m = (64usize).max(16 * (self.periodic.max_mode() as usize + 1));
            let thetas: Vec<f64> = (0..m).map(|j| j as f64 / m as f64).collect();
            let points = thetas.iter().map(|&t| self.eval(t)[0]).collect();
            let fine = 4 * m;
            let max_speed = (0..fine)
                .map(|j| {
                    let d = self.eval(j as f64 / fine as f64)[1];
                    dot(&d, &d).sqrt()
                })
                .fold(0.0, f64::max);
            Coarse {
                thetas,
                points,
                reach: 1.1 * max_speed / (2.0 * m as f64) + 1e-12,
            }
        })
    }

    /// Closest point on the curve (modulo the lattice) if closer than `radius`.
    pub fn foot(&self, x: &[f64], radius: f64) -> Option<Foot> {
        let dim = self.dim();
        let coarse = self.coarse();
        let m = coarse.points.len();
        let mut dists = vec![f64::INFINITY; m];
        let mut shifts = vec![[0.0; MAX_DIM]; m];
        for (j, p) in coarse.points.iter().enumerate() {
            let mut d2 = 0.0;
            for i in 0..dim {
                let raw = x[i] - p[i];
                let lattice = raw.round();
                shifts[j][i] = lattice;
                d2 += (raw - lattice).powi(2);
            }
            dists[j] = d2.sqrt();
        }
        let cutoff = radius + coarse.reach;
        let mut best: Option<Foot> = None;
        for j in 0..m {
            let (prev, next) = (dists[(j + m - 1) % m], dists[(j + 1) % m]);
            if dists[j] > cutoff || dists[j] > prev || dists[j] > next {
                continue;
            }
            if let Some(f) = self.refine(x, coarse.thetas[j], &shifts[j]) {
                if best.is_none_or(|b| f.dist2 < b.dist2) {
                    best = Some(f);
                }
            }
        }
        best.filter(|f| f.dist2 < radius * radius)
    }

    fn refine(&self, x: &[f64], theta0: f64, lattice: &Vec3) -> Option<Foot> {
        let dim = self.dim();
        let mut theta = theta0;
        let offset_at = |c: &Vec3| {
            let mut n = [0.0; MAX_DIM];
            for i in 0..dim {
                n[i] = x[i] - lattice[i] - c[i];
            }
            n
        };
        for _ in 0..50 {
            let c = self.eval(theta);
            let n = offset_at(&c[0]);
            let f = dot(&n, &c[1]);
            let d = dot(&c[1], &c[1]) - dot(&n, &c[2]);
            if d <= 0.0 {
                return None;
            }
            let step = f / d;
            theta += step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        let c = self.eval(theta);
        let n = offset_at(&c[0]);
        Some(Foot {
            theta,
            curve: c,
            offset: n,
            dist2: dot(&n, &n),
        })
    }

    /// Checks that a tube of `radius` has a unique smooth closest-point map.
    pub fn check_tube(&self, radius: f64) -> Result<()> {
        let fine = 512;
        let mut min_speed = f64::INFINITY;
        for j in 0..fine {
            let c = self.eval(j as f64 / fine as f64);
            let speed2 = dot(&c[1], &c[1]);
            min_speed = min_speed.min(speed2.sqrt());
            let acc = dot(&c[2], &c[2]).sqrt();
            if speed2 - radius * acc < 0.5 * speed2 {
                return Err(invalid(format!(
                    "tube radius {radius} exceeds half the curvature radius of its center"
                )));
            }
        }
        // Other lattice images of the curve (other strands on the torus) and
        // far-apart arcs of the same strand must both stay 2ρ away.
        let coarse = self.coarse();
        let m = coarse.points.len();
        let dim = self.dim();
        let w: Vec<f64> = self.winding.iter().map(|v| *v as f64).collect();
        let is_winding_multiple = |l: &[f64]| {
            let k = w
                .iter()
                .zip(l)
                .find(|(wi, _)| **wi != 0.0)
                .map(|(wi, li)| li / wi);
            match k {
                Some(k) => w.iter().zip(l).all(|(wi, li)| (k * wi - li).abs() < 1e-9),
                None => l.iter().all(|v| *v == 0.0),
            }
        };
        let offsets = 3usize.pow(dim as u32);
        for a in 0..m {
            for s in 1..=m / 2 {
                let b = a + s;
                let lap = (b / m) as f64;
                let delta: Vec<f64> = (0..dim)
                    .map(|i| coarse.points[b % m][i] + lap * w[i] - coarse.points[a][i])
                    .collect();
                let arc = s as f64 / m as f64 * min_speed;
                let cover = delta.iter().map(|v| v * v).sum::<f64>().sqrt();
                if cover < 2.0 * radius && arc > std::f64::consts::PI * radius {
                    return Err(invalid(format!(
                        "tube of radius {radius} folds onto itself"
                    )));
                }
                for o in 0..offsets {
                    let mut code = o;
                    let lattice: Vec<f64> = delta
                        .iter()
                        .map(|d| {
                            let off = (code % 3) as f64 - 1.0;
                            code /= 3;
                            d.round() + off
                        })
                        .collect();
                    if lattice.iter().all(|v| *v == 0.0) || is_winding_multiple(&lattice) {
                        continue;
                    }
                    let dist = delta
                        .iter()
                        .zip(&lattice)
                        .map(|(d, l)| (d - l).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if dist < 2.0 * radius {
                        return Err(invalid(format!("tube of radius {radius} overlaps itself")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Direction field `a(θ)` along the center curve: the part of `base(θ)`
/// Euclidean-orthogonal to `ċ`, optionally divided by its squared length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionField {
    pub base: PeriodicSeries,
    pub normalize: bool,
}

impl DirectionField {
    fn eval(&self, theta: f64, curve: &[Vec3; 4], dim: usize) -> [Dual2; MAX_DIM] {
        let b = self.base.eval(theta);
        let v: Vec<Dual2> = (0..dim)
            .map(|i| Dual2::new(b[0][i], b[1][i], b[2][i]))
            .collect();
        let cd: Vec<Dual2> = (0..dim)
            .map(|i| Dual2::new(curve[1][i], curve[2][i], curve[3][i]))
            .collect();
        let sum = |a: &[Dual2], b: &[Dual2]| {
            a.iter()
                .zip(b)
                .fold(Dual2::constant(0.0), |acc, (x, y)| acc + *x * *y)
        };
        let ratio = sum(&v, &cd) * sum(&cd, &cd).recip();
        let p: Vec<Dual2> = (0..dim).map(|i| v[i] - ratio * cd[i]).collect();
        let mut out = [Dual2::default(); MAX_DIM];
        if self.normalize {
            let inv = sum(&p, &p).recip();
            for i in 0..dim {
                out[i] = p[i] * inv;
            }
        } else {
            out[..dim].copy_from_slice(&p);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OffsetWeight {
    /// `w = 1`.
    Unit,
    /// `w = ⟨x − c(θ*), a(θ*)⟩`; vanishes on the curve.
    Linear { field: DirectionField },
    /// `w = ⟨x − c(θ*), a(θ*)⟩²`; vanishes to second order on the curve.
    Quadratic { field: DirectionField },
}

/// Scalar profile `f(θ) = window(θ)·series(θ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaProfile {
    pub series: PeriodicSeries,
    /// C³ bump `(1 − u²)⁴` supported on the periodic interval `[a, b]`.
    pub window: Option<[f64; 2]>,
}

impl ThetaProfile {
    pub fn constant(v: f64) -> Self {
        ThetaProfile {
            series: PeriodicSeries::constant(vec![v]),
            window: None,
        }
    }

    pub fn eval(&self, theta: f64) -> Dual2 {
        let s = self.series.eval(theta);
        let base = Dual2::new(s[0][0], s[1][0], s[2][0]);
        match self.window {
            None => base,
            Some(w) => window_bump(theta, w) * base,
        }
    }
}

pub fn window_bump(theta: f64, [a, b]: [f64; 2]) -> Dual2 {
    let t = a + (theta - a).rem_euclid(1.0);
    let half = 0.5 * (b - a);
    let u = (t - 0.5 * (a + b)) / half;
    if u.abs() >= 1.0 {
        return Dual2::constant(0.0);
    }
    let s = 1.0 - u * u;
    let du = 1.0 / half;
    Dual2::new(
        s.powi(4),
        -8.0 * u * s.powi(3) * du,
        (-8.0 * s.powi(3) + 48.0 * u * u * s * s) * du * du,
    )
}

/// C² cutoff in `q = r²/ρ²`: 1 for `q ≤ 1/4`, 0 for `q ≥ 1`.
pub fn cutoff(q: f64) -> Dual2 {
    let t = (q - 0.25) / 0.75;
    if t <= 0.0 {
        return Dual2::constant(1.0);
    }
    if t >= 1.0 {
        return Dual2::constant(0.0);
    }
    let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    let dds = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    Dual2::new(1.0 - s, -ds / 0.75, -dds / (0.75 * 0.75))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeTerm {
    pub center: CenterCurve,
    pub radius: f64,
    pub weight: OffsetWeight,
    pub profile: ThetaProfile,
    /// Row-major symmetric `dim × dim` matrix.
    pub form: Vec<f64>,
    pub scale: f64,
}

impl TubeTerm {
    pub fn new(
        center: CenterCurve,
        radius: f64,
        weight: OffsetWeight,
        profile: ThetaProfile,
        form: Vec<f64>,
        scale: f64,
    ) -> Result<Self> {
        let dim = center.dim();
        if form.len() != dim * dim {
            return Err(invalid("tube form has wrong size"));
        }
        for i in 0..dim {
            for j in 0..dim {
                if form[i * dim + j] != form[j * dim + i] {
                    return Err(invalid("tube form must be symmetric"));
                }
            }
        }
        if !(radius > 0.0 && radius < 0.5) {
            return Err(invalid("tube radius must lie in (0, 0.5)"));
        }
        center.check_tube(radius)?;
        Ok(TubeTerm {
            center,
            radius,
            weight,
            profile,
            form,
            scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn form_entry(&self, i: usize, j: usize) -> f64 {
        self.form[i * self.dim() + j]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.center.foot(x, self.radius).is_some()
    }

    /// Scalar factor jet; `None` outside the support, where the term is exactly zero.
    pub fn scalar_jet(&self, x: &[f64]) -> Option<Jet> {
        let dim = self.dim();
        let foot = self.center.foot(x, self.radius)?;
        let rho2 = self.radius * self.radius;
        if foot.dist2 >= rho2 {
            return None;
        }
        let [_, cd, cdd, cddd] = foot.curve;
        let n = foot.offset;
        let d = dot(&cd, &cd) - dot(&n, &cdd);
        let d_theta = 3.0 * dot(&cd, &cdd) - dot(&n, &cddd);

        let mut theta = Jet::constant(foot.theta);
        for i in 0..dim {
            theta.d[i] = cd[i] / d;
            for j in 0..dim {
                theta.dd[i][j] = (cdd[i] * cd[j] + cd[i] * cdd[j]) / (d * d)
                    - cd[i] * cd[j] * d_theta / (d * d * d);
            }
        }
        let offsets: Vec<Jet> = (0..dim)
            .map(|i| {
                let mut o = Jet::constant(n[i]);
                for a in 0..dim {
                    o.d[a] = if a == i { 1.0 } else { 0.0 } - cd[i] * theta.d[a];
                    for b in 0..dim {
                        o.dd[a][b] = -cdd[i] * theta.d[a] * theta.d[b] - cd[i] * theta.dd[a][b];
                    }
                }
                o
            })
            .collect();

        let q = offsets
            .iter()
            .fold(Jet::constant(0.0), |acc, o| acc + *o * *o)
            .scale(1.0 / rho2);
        let phi = q.compose_dual(cutoff(q.v));
        if phi.v == 0.0 && phi.d.iter().all(|v| *v == 0.0) {
            return None;
        }

        let linear = |field: &DirectionField| {
            let a = field.eval(foot.theta, &foot.curve, dim);
            (0..dim).fold(Jet::constant(0.0), |acc, i| {
                acc + offsets[i] * theta.compose_dual(a[i])
            })
        };
        // Points on the curve itself get an exactly vanishing weight instead of
        // the rounding residue of the foot computation.
        let on_curve = foot.dist2 <= (1e-12 * self.radius).powi(2);
        let weight = match &self.weight {
            OffsetWeight::Unit => Jet::constant(1.0),
            OffsetWeight::Linear { field } => {
                let mut l = linear(field);
                if on_curve {
                    l.v = 0.0;
                }
                l
            }
            OffsetWeight::Quadratic { field } => {
                let mut l = linear(field);
                if on_curve {
                    l.v = 0.0;
                }
                l * l
            }
        };
        let profile = theta.compose_dual(self.profile.eval(foot.theta));
        Some((phi * weight * profile).scale(self.scale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(dim: usize, winding: Vec<i64>, offset: Vec<f64>) -> CenterCurve {
        let _ = dim;
        CenterCurve::new(winding, PeriodicSeries::constant(offset))
    }

    #[test]
    fn foot_on_straight_line() {
        let c = line(2, vec![1, 0], vec![0.0, 0.0]);
        let f = c.foot(&[0.3, 0.02], 0.1).unwrap();
        assert!((f.theta - 0.3).abs() < 1e-14);
        assert!((f.dist2.sqrt() - 0.02).abs() < 1e-14);
        // Through the lattice: y = 0.97 is 0.03 away from the line y = 0.
        let f = c.foot(&[0.6, 0.97], 0.1).unwrap();
        assert!((f.dist2.sqrt() - 0.03).abs() < 1e-14);
        assert!(c.foot(&[0.6, 0.5], 0.1).is_none());
    }

    #[test]
    fn cutoff_is_c2_and_clamped() {
        assert_eq!(cutoff(0.1).v, 1.0);
        assert_eq!(cutoff(1.0).v, 0.0);
        let h = 1e-6;
        for &q in &[0.3, 0.5, 0.9] {
            let c = cutoff(q);
            assert!((c.d - (cutoff(q + h).v - cutoff(q - h).v) / (2.0 * h)).abs() < 1e-6);
            assert!((c.dd - (cutoff(q + h).d - cutoff(q - h).d) / (2.0 * h)).abs() < 1e-5);
        }
        // Derivatives vanish at both ends.
        assert!(cutoff(0.25 + 1e-9).d.abs() < 1e-12);
        assert!(cutoff(1.0 - 1e-9).d.abs() < 1e-12);
    }

    fn curved_center() -> CenterCurve {
        let mut s = PeriodicSeries::constant(vec![0.0, 0.1]);
        s.modes.push(super::super::series::SeriesMode {
            k: 1,
            cos: vec![0.0, 0.0],
            sin: vec![0.0, 0.05],
        });
        CenterCurve::new(vec![1, 0], s)
    }

    #[test]
    fn tube_jet_matches_finite_differences() {
        let center = curved_center();
        let field = DirectionField {
            base: PeriodicSeries::constant(vec![0.3, 1.0]),
            normalize: true,
        };
        let mut profile = ThetaProfile::constant(1.0);
        profile.window = Some([0.1, 0.6]);
        for weight in [
            OffsetWeight::Unit,
            OffsetWeight::Linear {
                field: field.clone(),
            },
            OffsetWeight::Quadratic { field },
        ] {
            let term = TubeTerm::new(
                center.clone(),
                0.08,
                weight,
                profile.clone(),
                vec![1.0, 0.0, 0.0, 0.0],
                2.0,
            )
            .unwrap();
            let x = [
                0.33,
                0.1 + 0.05 * (std::f64::consts::TAU * 0.33).sin() + 0.05,
            ];
            let j = term.scalar_jet(&x).unwrap();
            let val = |x: &[f64]| term.scalar_jet(x).map_or(0.0, |j| j.v);
            let h = 1e-6;
            for a in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[a] += h;
                xm[a] -= h;
                let fd = (val(&xp) - val(&xm)) / (2.0 * h);
                assert!(
                    (j.d[a] - fd).abs() < 1e-6,
                    "{:?} d{a}: {} vs {fd}",
                    term.weight,
                    j.d[a]
                );
                let jp = term.scalar_jet(&xp).unwrap();
                let jm = term.scalar_jet(&xm).unwrap();
                for b in 0..2 {
                    let fd2 = (jp.d[b] - jm.d[b]) / (2.0 * h);
                    assert!(
                        (j.dd[a][b] - fd2).abs() < 1e-4,
                        "dd{a}{b}: {} vs {fd2}",
                        j.dd[a][b]
                    );
                }
            }
        }
    }

    #[test]
    fn linear_weight_vanishes_on_center() {
        let center = curved_center();
        let term = TubeTerm::new(
            center.clone(),
            0.08,
            OffsetWeight::Linear {
                field: DirectionField {
                    base: PeriodicSeries::constant(vec![0.0, 1.0]),
                    normalize: true,
                },
            },
            ThetaProfile::constant(1.0),
            vec![1.0, 0.0, 0.0, 1.0],
            1.0,
        )
        .unwrap();
        for k in 0..10 {
            let p = center.eval(k as f64 / 10.0)[0];
            let j = term.scalar_jet(&p[..2]).unwrap();
            assert!(j.v.abs() < 1e-15);
        }
    }

    #[test]
    fn oversized_tube_rejected() {
        let c = line(2, vec![1, 0], vec![0.0, 0.0]);
        assert!(TubeTerm::new(
            c,
            0.6,
            OffsetWeight::Unit,
            ThetaProfile::constant(1.0),
            vec![1.0, 0.0, 0.0, 1.0],
            1.0
        )
        .is_err());
        // Winding (1, 1) strands are 1/√2 apart.
        let c = line(2, vec![1, 1], vec![0.0, 0.0]);
        assert!(c.check_tube(0.3).is_ok());
        assert!(c.check_tube(0.4).is_err());
    }
}
