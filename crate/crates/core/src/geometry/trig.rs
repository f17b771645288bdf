use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use super::jet::{Jet, MAX_DIM};

/// `cos·cos(2π k·x) + sin·sin(2π k·x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: Vec<i32>,
    pub cos: f64,
    pub sin: f64,
}

/// Real trigonometric polynomial on the unit torus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub terms: Vec<TrigTerm>,
}

impl TrigPoly {
    pub fn zero() -> Self {
        TrigPoly { terms: Vec::new() }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = TrigPoly::zero();
        if c != 0.0 {
            p.add_term(vec![0; dim], c, 0.0);
        }
        p
    }

    /// Adds a term, merging with an existing term of the same frequency.
    pub fn add_term(&mut self, freq: Vec<i32>, cos: f64, sin: f64) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.freq == freq) {
            t.cos += cos;
            t.sin += sin;
        } else {
            self.terms.push(TrigTerm { freq, cos, sin });
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.freq.iter().all(|&k| k == 0) || (t.cos == 0.0 && t.sin == 0.0))
    }

    pub fn max_frequency(&self) -> i32 {
        self.terms
            .iter()
            .flat_map(|t| t.freq.iter().map(|k| k.abs()))
            .max()
            .unwrap_or(0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        TrigPoly {
            terms: self
                .terms
                .iter()
                .map(|t| TrigTerm {
                    freq: t.freq.clone(),
                    cos: t.cos * s,
                    sin: t.sin * s,
                })
                .collect(),
        }
    }

    /// `self + s·other`, merging equal frequencies.
    pub fn axpy(&self, s: f64, other: &TrigPoly) -> Self {
        let mut out = self.clone();
        for t in &other.terms {
            out.add_term(t.freq.clone(), s * t.cos, s * t.sin);
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.jet(x, 0).v
    }

    /// Value and exact derivatives up to `order` (0, 1 or 2).
    pub fn jet(&self, x: &[f64], order: usize) -> Jet {
        self.jet_with(&Phases::new(x, self.max_frequency()), order)
    }

    pub fn jet_with(&self, phases: &Phases, order: usize) -> Jet {
        let dim = phases.dim;
        let mut out = Jet::default();
        for t in &self.terms {
            let (c, s) = phases.get(&t.freq);
            let val = t.cos * c + t.sin * s;
            out.v += val;
            if order == 0 {
                continue;
            }
            let dval = t.sin * c - t.cos * s;
            let mut k = [0.0; MAX_DIM];
            for (a, &f) in t.freq.iter().enumerate() {
                k[a] = TAU * f as f64;
            }
            for a in 0..dim {
                out.d[a] += k[a] * dval;
                if order >= 2 {
                    for b in 0..dim {
                        out.dd[a][b] -= k[a] * k[b] * val;
                    }
                }
            }
        }
        out
    }
}

/// `cos` and `sin` of `2π m x_a` for `|m| ≤ max_freq` on every axis, so a
/// term costs a few multiplications instead of a `sin_cos`.
pub struct Phases {
    dim: usize,
    max_freq: i32,
    table: Vec<(f64, f64)>,
}

impl Phases {
    pub fn new(x: &[f64], max_freq: i32) -> Self {
        let width = (max_freq + 1) as usize;
        let mut table = Vec::with_capacity(width * x.len());
        for &xi in x {
            for m in 0..=max_freq {
                let (s, c) = (TAU * m as f64 * xi).sin_cos();
                table.push((c, s));
            }
        }
        Phases {
            dim: x.len(),
            max_freq,
            table,
        }
    }

    /// `(cos, sin)` of `2π k·x`.
    pub fn get(&self, freq: &[i32]) -> (f64, f64) {
        let width = (self.max_freq + 1) as usize;
        let (mut c, mut s) = (1.0, 0.0);
        for (a, &k) in freq.iter().enumerate() {
            if k == 0 {
                continue;
            }
            let (ca, sa) = self.table[a * width + k.unsigned_abs() as usize];
            let sa = if k < 0 { -sa } else { sa };
            (c, s) = (c * ca - s * sa, s * ca + c * sa);
        }
        (c, s)
    }
}
