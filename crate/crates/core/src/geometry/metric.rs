use nalgebra::{DMatrix, Matrix2, Matrix3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::jet::{Mat3, Vec3, MAX_DIM};
use super::trig::{Phases, TrigPoly};
use super::tube::TubeTerm;
use crate::error::{invalid, Error, Result};

pub const DET_FLOOR: f64 = 1e-8;
pub const PD_FLOOR: f64 = 1e-8;

/// Grid used to check pointwise metric invariants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationGrid {
    pub points_per_axis: usize,
    pub det_floor: f64,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        ValidationGrid {
            points_per_axis: 64,
            det_floor: DET_FLOOR,
        }
    }
}

impl ValidationGrid {
    pub fn points(&self, dim: usize) -> impl Iterator<Item = Vec<f64>> + '_ {
        let n = self.points_per_axis;
        let total = n.pow(dim as u32);
        (0..total).map(move |idx| self.point(dim, idx))
    }

    /// Grid point with linear index `idx`, first axis fastest.
    pub fn point(&self, dim: usize, mut idx: usize) -> Vec<f64> {
        let n = self.points_per_axis;
        let mut x = vec![0.0; dim];
        for xi in x.iter_mut() {
            *xi = (idx % n) as f64 / n as f64;
            idx /= n;
        }
        x
    }
}

/// Value and exact derivatives of the metric components at a point.
/// `dg[i][j][a] = ∂_a g_ij`, `ddg[i][j][a][b] = ∂_a∂_b g_ij`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MetricJet {
    pub dim: usize,
    pub g: Mat3,
    pub dg: [[Vec3; MAX_DIM]; MAX_DIM],
    pub ddg: [[Mat3; MAX_DIM]; MAX_DIM],
}

/// Symmetric (0,2)-tensor field on the unit torus: trigonometric polynomial
/// components plus optional tube-supported terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricFile", into = "MetricFile")]
pub struct TorusMetric {
    pub id: String,
    pub dim: usize,
    pub declared_index: usize,
    entries: Vec<TrigPoly>,
    tubes: Vec<TubeTerm>,
}

fn tri(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * (i + 1) / 2 + j
}

impl TorusMetric {
    /// Identically zero tensor, to be filled with [`TorusMetric::add_term`].
    pub fn zero(id: impl Into<String>, dim: usize, declared_index: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1..=3");
        TorusMetric {
            id: id.into(),
            dim,
            declared_index,
            entries: vec![TrigPoly::zero(); dim * (dim + 1) / 2],
            tubes: Vec::new(),
        }
    }

    pub fn constant(id: impl Into<String>, m: &[Vec<f64>], declared_index: usize) -> Self {
        let dim = m.len();
        let mut g = TorusMetric::zero(id, dim, declared_index);
        for i in 0..dim {
            for j in i..dim {
                if m[i][j] != 0.0 {
                    g.add_term(i, j, vec![0; dim], m[i][j], 0.0);
                }
            }
        }
        g
    }

    pub fn euclidean(dim: usize) -> Self {
        let m: Vec<Vec<f64>> = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        TorusMetric::constant(format!("euclidean-{dim}"), &m, 0)
    }

    /// Adds `cos·cos(2πk·x) + sin·sin(2πk·x)` to `g_ij` (and `g_ji`).
    pub fn add_term(&mut self, i: usize, j: usize, freq: Vec<i32>, cos: f64, sin: f64) {
        assert_eq!(freq.len(), self.dim);
        let k = tri(self.dim, i, j);
        self.entries[k].add_term(freq, cos, sin);
    }

    pub fn add_tube(&mut self, term: TubeTerm) {
        assert_eq!(term.dim(), self.dim);
        self.tubes.push(term);
    }

    pub fn entry(&self, i: usize, j: usize) -> &TrigPoly {
        &self.entries[tri(self.dim, i, j)]
    }

    pub fn tubes(&self) -> &[TubeTerm] {
        &self.tubes
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn is_constant(&self) -> bool {
        self.tubes.is_empty() && self.entries.iter().all(|e| e.is_constant())
    }

    pub fn max_frequency(&self) -> i32 {
        self.entries
            .iter()
            .map(|e| e.max_frequency())
            .max()
            .unwrap_or(0)
    }

    /// `a·self + b·other`; ids and declared index are taken from `self`.
    pub fn combine(&self, a: f64, other: &TorusMetric, b: f64) -> TorusMetric {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (e, o) in out.entries.iter_mut().zip(&other.entries) {
            *e = e.scaled(a).axpy(b, o);
        }
        for t in out.tubes.iter_mut() {
            t.scale *= a;
        }
        for t in &other.tubes {
            let mut t = t.clone();
            t.scale *= b;
            out.tubes.push(t);
        }
        out.tubes.retain(|t| t.scale != 0.0);
        out
    }

    /// Straight-line path `(1 − t)·self + t·other`.
    pub fn lerp(&self, other: &TorusMetric, t: f64) -> TorusMetric {
        if t == 0.0 {
            return self.clone();
        }
        if t == 1.0 {
            return other.clone();
        }
        self.combine(1.0 - t, other, t)
    }

    pub fn eval(&self, x: &[f64]) -> Mat3 {
        self.jet(x, 0).g
    }

    /// `g(u, v)` at `x`.
    pub fn inner(&self, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        let g = self.eval(x);
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += g[i][j] * u[i] * v[j];
            }
        }
        s
    }

    pub fn jet(&self, x: &[f64], order: usize) -> MetricJet {
        let dim = self.dim;
        let mut out = MetricJet {
            dim,
            ..Default::default()
        };
        let max_freq = self
            .entries
            .iter()
            .map(TrigPoly::max_frequency)
            .max()
            .unwrap_or(0);
        let phases = Phases::new(x, max_freq);
        for i in 0..dim {
            for j in i..dim {
                let e = self.entries[tri(dim, i, j)].jet_with(&phases, order);
                out.g[i][j] = e.v;
                out.dg[i][j] = e.d;
                out.ddg[i][j] = e.dd;
            }
        }
        for tube in &self.tubes {
            if let Some(s) = tube.scalar_jet(x) {
                for i in 0..dim {
                    for j in i..dim {
                        let f = tube.form_entry(i, j);
                        if f == 0.0 {
                            continue;
                        }
                        out.g[i][j] += f * s.v;
                        for a in 0..dim {
                            out.dg[i][j][a] += f * s.d[a];
                            for b in 0..dim {
                                out.ddg[i][j][a][b] += f * s.dd[a][b];
                            }
                        }
                    }
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                out.g[i][j] = out.g[j][i];
                out.dg[i][j] = out.dg[j][i];
                out.ddg[i][j] = out.ddg[j][i];
            }
        }
        out
    }

    /// Checks nondegeneracy and the declared index on a grid.
    pub fn validate(&self, grid: &ValidationGrid) -> Result<()> {
        if self.declared_index > self.dim {
            return Err(invalid("declared index exceeds dimension"));
        }
        let floor = grid.det_floor.powf(1.0 / self.dim as f64);
        let n = grid.points_per_axis;
        let failure = (0..n.pow(self.dim as u32))
            .into_par_iter()
            .find_map_first(|idx| {
                let x = grid.point(self.dim, idx);
                let g = self.eval(&x);
                let det = det(&g, self.dim);
                let eig = sym_eigenvalues(&g, self.dim);
                let smallest = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
                if det.abs() < grid.det_floor || smallest < floor {
                    return Some(Error::DegenerateMetric {
                        point: x,
                        magnitude: smallest,
                    });
                }
                let neg = eig.iter().filter(|v| **v < 0.0).count();
                (neg != self.declared_index).then_some(Error::IndexMismatch {
                    declared: self.declared_index,
                    found: neg,
                    point: x,
                })
            });
        failure.map_or(Ok(()), Err)
    }

    pub fn validated(self, grid: &ValidationGrid) -> Result<Self> {
        self.validate(grid)?;
        Ok(self)
    }

    /// Coefficient-weighted C² seminorm of the trigonometric part:
    /// `Σ_{i,j} max_terms max(|cos|, |sin|)·(1 + 2π‖k‖_∞)²`.
    pub fn c2_seminorm(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let e = self.entry(i, j);
                total += e
                    .terms
                    .iter()
                    .map(|t| {
                        let k = t.freq.iter().map(|k| k.abs()).max().unwrap_or(0) as f64;
                        t.cos.abs().max(t.sin.abs()) * (1.0 + std::f64::consts::TAU * k).powi(2)
                    })
                    .fold(0.0, f64::max);
            }
        }
        total
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EntryRecord {
    i: usize,
    j: usize,
    freq: Vec<i32>,
    cos: f64,
    sin: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MetricFile {
    id: String,
    dim: usize,
    declared_index: usize,
    entries: Vec<EntryRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    tubes: Vec<TubeTerm>,
}

impl From<TorusMetric> for MetricFile {
    fn from(m: TorusMetric) -> Self {
        let mut entries = Vec::new();
        for i in 0..m.dim {
            for j in i..m.dim {
                for t in &m.entry(i, j).terms {
                    entries.push(EntryRecord {
                        i,
                        j,
                        freq: t.freq.clone(),
                        cos: t.cos,
                        sin: t.sin,
                    });
                }
            }
        }
        MetricFile {
            id: m.id,
            dim: m.dim,
            declared_index: m.declared_index,
            entries,
            tubes: m.tubes,
        }
    }
}

impl TryFrom<MetricFile> for TorusMetric {
    type Error = Error;
    fn try_from(f: MetricFile) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&f.dim) {
            return Err(invalid(format!("unsupported dimension {}", f.dim)));
        }
        let mut m = TorusMetric::zero(f.id, f.dim, f.declared_index);
        for e in f.entries {
            if e.i >= f.dim || e.j >= f.dim || e.freq.len() != f.dim {
                return Err(invalid("metric entry out of range"));
            }
            m.add_term(e.i, e.j, e.freq, e.cos, e.sin);
        }
        for t in f.tubes {
            if t.dim() != f.dim {
                return Err(invalid("tube term has wrong dimension"));
            }
            m.tubes.push(t);
        }
        Ok(m)
    }
}

/// Positive definite reference metric `g_R`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxRiemannianMetric {
    pub metric: TorusMetric,
}

impl AuxRiemannianMetric {
    pub fn euclidean(dim: usize) -> Self {
        AuxRiemannianMetric {
            metric: TorusMetric::euclidean(dim),
        }
    }

    pub fn new(metric: TorusMetric, grid: &ValidationGrid) -> Result<Self> {
        for x in grid.points(metric.dim) {
            let eig = sym_eigenvalues(&metric.eval(&x), metric.dim);
            if eig.iter().any(|v| *v < PD_FLOOR) {
                return Err(Error::NotPositiveDefinite { point: x });
            }
        }
        Ok(AuxRiemannianMetric {
            metric: metric.with_index(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.metric.dim
    }

    pub fn eval(&self, x: &[f64]) -> Mat3 {
        self.metric.eval(x)
    }

    pub fn inner(&self, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        self.metric.inner(x, u, v)
    }
}

impl TorusMetric {
    fn with_index(mut self, index: usize) -> Self {
        self.declared_index = index;
        self
    }
}

pub fn det(m: &Mat3, dim: usize) -> f64 {
    super::jet::inverse(m, dim).1
}

pub fn sym_eigenvalues(m: &Mat3, dim: usize) -> Vec<f64> {
    match dim {
        1 => vec![m[0][0]],
        2 => Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect(),
        3 => Matrix3::new(
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        )
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect(),
        _ => unreachable!(),
    }
}

pub fn to_dmatrix(m: &Mat3, dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| m[i][j])
}

/// Number of negative eigenvalues of `g_R⁻¹g` at `x`.
pub fn metric_index(metric: &TorusMetric, g_r: &AuxRiemannianMetric, x: &[f64]) -> Result<usize> {
    metric_index_with_floor(metric, g_r, x, DET_FLOOR)
}

pub fn metric_index_with_floor(
    metric: &TorusMetric,
    g_r: &AuxRiemannianMetric,
    x: &[f64],
    det_floor: f64,
) -> Result<usize> {
    let dim = metric.dim;
    let g = to_dmatrix(&metric.eval(x), dim);
    let r = to_dmatrix(&g_r.eval(x), dim);
    let chol = r
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite { point: x.to_vec() })?;
    let l_inv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::NotPositiveDefinite { point: x.to_vec() })?;
    let s = &l_inv * g * l_inv.transpose();
    let s = (&s + s.transpose()) * 0.5;
    let eig = s.symmetric_eigenvalues();
    let floor = det_floor.powf(1.0 / dim as f64);
    let smallest = eig.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if smallest < floor {
        return Err(Error::DegenerateMetric {
            point: x.to_vec(),
            magnitude: smallest,
        });
    }
    Ok(eig.iter().filter(|v| **v < 0.0).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hill(eps: f64) -> TorusMetric {
        let mut g = TorusMetric::euclidean(2).with_id("hill");
        g.add_term(0, 0, vec![0, 1], eps, 0.0);
        g
    }

    #[test]
    fn evaluation_examples() {
        let flat = TorusMetric::euclidean(2);
        assert_eq!(flat.eval(&[0.3, 0.7])[0], [1.0, 0.0, 0.0]);
        let lorentz = TorusMetric::constant("l", &[vec![1.0, 0.0], vec![0.0, -1.0]], 1);
        assert_eq!(lorentz.eval(&[0.1, 0.2])[1][1], -1.0);
        let g = hill(0.1).eval(&[0.0, 0.25]);
        assert!((g[0][0] - 1.0).abs() < 1e-15);
        assert_eq!(g[0][1], 0.0);
    }

    #[test]
    fn index_examples() {
        let gr = AuxRiemannianMetric::euclidean(2);
        let flat = TorusMetric::euclidean(2);
        assert_eq!(metric_index(&flat, &gr, &[0.2, 0.3]).unwrap(), 0);
        let lorentz = TorusMetric::constant("l", &[vec![1.0, 0.0], vec![0.0, -1.0]], 1);
        assert_eq!(metric_index(&lorentz, &gr, &[0.2, 0.3]).unwrap(), 1);
        let degenerate = TorusMetric::constant("d", &[vec![1.0, 0.0], vec![0.0, 0.0]], 0);
        assert!(matches!(
            metric_index(&degenerate, &gr, &[0.0, 0.0]),
            Err(Error::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn validation_rejects_wrong_index_and_degeneracy() {
        let grid = ValidationGrid {
            points_per_axis: 16,
            ..Default::default()
        };
        let mut wrong = TorusMetric::constant("w", &[vec![1.0, 0.0], vec![0.0, -1.0]], 0);
        assert!(matches!(
            wrong.validate(&grid),
            Err(Error::IndexMismatch { .. })
        ));
        wrong.declared_index = 1;
        assert!(wrong.validate(&grid).is_ok());
        let mut deg = TorusMetric::euclidean(2);
        deg.add_term(0, 0, vec![1, 0], -1.0, 0.0);
        assert!(matches!(
            deg.validate(&grid),
            Err(Error::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let mut g = hill(0.1);
        g.add_term(0, 1, vec![1, -2], 0.012345678901234567, -0.3);
        let s = g.to_json().unwrap();
        let back = TorusMetric::from_json(&s).unwrap();
        assert_eq!(g, back);
        assert_eq!(s, back.to_json().unwrap());
    }

    #[test]
    fn combine_is_linear() {
        let a = hill(0.1);
        let b = TorusMetric::euclidean(2);
        let mid = a.lerp(&b, 0.25);
        let x = [0.4, 0.1];
        let expect = 0.75 * a.eval(&x)[0][0] + 0.25;
        assert!((mid.eval(&x)[0][0] - expect).abs() < 1e-15);
    }
}
