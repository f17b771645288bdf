//! Dormand–Prince 5(4) with adaptive steps and continuous (dense) output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const B: [f64; 6] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Use the max norm of the scaled error instead of the RMS norm.
    pub max_norm: bool,
    pub dense: bool,
}

impl Options {
    pub fn new(rtol: f64) -> Self {
        Options {
            rtol,
            atol: rtol,
            max_steps: 200_000,
            max_norm: false,
            dense: false,
        }
    }

    pub fn with_dense(mut self) -> Self {
        self.dense = true;
        self
    }
}

/// Interpolation data for one accepted step.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        (0..r1.len())
            .map(|i| r1[i] + s * (r2[i] + s1 * (r3[i] + s * (r4[i] + s1 * r5[i]))))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub t_end: f64,
    pub y_end: Vec<f64>,
    /// Accepted step nodes, including the start.
    pub nodes: Vec<(f64, Vec<f64>)>,
    pub steps: Vec<DenseStep>,
    pub n_eval: usize,
}

impl Solution {
    /// Dense output at `t` (requires `Options::dense`).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        assert!(!self.steps.is_empty(), "dense output was not recorded");
        let idx = self
            .steps
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.steps.len() - 1);
        self.steps[idx].eval(t)
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], opts: &Options) -> f64 {
    let mut acc: f64 = 0.0;
    for i in 0..err.len() {
        let sc = opts.atol + opts.rtol * y0[i].abs().max(y1[i].abs());
        let e = err[i] / sc;
        if opts.max_norm {
            acc = acc.max(e.abs());
        } else {
            acc += e * e;
        }
    }
    if opts.max_norm {
        acc
    } else {
        (acc / err.len() as f64).sqrt()
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn integrate<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], opts: &Options) -> Result<Solution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut n_eval = 0;
    f(t, &y, &mut k[0])?;
    n_eval += 1;

    // Initial step guess from the scaled size of y and y'.
    let span = t1 - t0;
    let mut h = {
        let sc: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
        let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (k[0]
            .iter()
            .zip(&sc)
            .map(|(v, s)| (v / s).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt();
        let guess = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        guess.min(span).max(1e-10 * span)
    };

    let mut sol = Solution {
        t_end: t1,
        y_end: Vec::new(),
        nodes: vec![(t, y.clone())],
        steps: Vec::new(),
        n_eval: 0,
    };
    let mut steps = 0;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::StepFailure { t, h });
        }
        steps += 1;
        let last = t + h >= t1 || (t1 - t - h) < 1e-12 * span;
        if last {
            h = t1 - t;
        }
        if h < 1e-14 * span.max(1.0) {
            return Err(Error::StepFailure { t, h });
        }
        let stages: [&[f64]; 5] = [&A2, &A3, &A4, &A5, &A6];
        for (s, a) in stages.iter().enumerate() {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, aj) in a.iter().enumerate() {
                    acc += aj * k[j][i];
                }
                tmp[i] = y[i] + h * acc;
            }
            f(t + C[s + 1] * h, &tmp, &mut k[s + 1])?;
        }
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..6 {
                acc += B[j] * k[j][i];
            }
            y_new[i] = y[i] + h * acc;
        }
        f(t + h, &y_new, &mut k[6])?;
        n_eval += 6;
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..7 {
                acc += E[j] * k[j][i];
            }
            err[i] = h * acc;
        }
        let en = error_norm(&err, &y, &y_new, opts);
        if !en.is_finite() {
            h *= 0.2;
            continue;
        }
        if en <= 1.0 {
            if opts.dense {
                let ydiff: Vec<f64> = (0..n).map(|i| y_new[i] - y[i]).collect();
                let bspl: Vec<f64> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
                let r4: Vec<f64> = (0..n).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
                let r5: Vec<f64> = (0..n)
                    .map(|i| h * (0..7).map(|j| D[j] * k[j][i]).sum::<f64>())
                    .collect();
                sol.steps.push(DenseStep {
                    t0: t,
                    h,
                    rcont: [y.clone(), ydiff, bspl, r4, r5],
                });
            }
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            sol.nodes.push((t, y.clone()));
            let fac = if en == 0.0 {
                5.0
            } else {
                (0.9 * en.powf(-0.2)).clamp(0.2, 5.0)
            };
            h *= fac;
        } else {
            h *= (0.9 * en.powf(-0.2)).clamp(0.1, 0.9);
        }
    }
    sol.y_end = y;
    sol.n_eval = n_eval;
    Ok(sol)
}
