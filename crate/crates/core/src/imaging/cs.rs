//! Total-variation regularized least squares,
//! `min_s TV(s) + (mu/2) |Q s - y|^2`, solved by monotone FISTA with an
//! anisotropic TV proximal step computed by projected dual ascent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::SensingMatrix;
use crate::error::{domain, Error, Result};

const POWER_STEPS: usize = 50;
/// Power iteration approaches the top eigenvalue from below.
const LIPSCHITZ_MARGIN: f64 = 1.01;
/// Squared operator norm bound of the 2-D forward-difference gradient.
const GRAD_NORM2: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsConfig {
    pub mu: f64,
    pub max_iter: usize,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    pub nonneg: bool,
    /// Dual ascent steps per TV proximal evaluation.
    pub inner_iter: usize,
}

impl Default for CsConfig {
    fn default() -> Self {
        Self { mu: 100.0, max_iter: 3000, tol: 1e-9, nonneg: true, inner_iter: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub s_hat: Vec<f64>,
    pub iterations: usize,
    /// Objective after each iteration, in units where `max |y| = 1`.
    pub objective_trace: Vec<f64>,
    /// `|Q s_hat - y| / |y|`.
    pub residual: f64,
}

/// Forward differences with replicate boundary: the last column (row) has zero
/// horizontal (vertical) difference.
fn grad(s: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            gx[k] = if j + 1 < w { s[k + 1] - s[k] } else { 0.0 };
            gy[k] = if i + 1 < h { s[k + w] - s[k] } else { 0.0 };
        }
    }
}

/// `div = -grad^T`.
fn div(px: &[f64], py: &[f64], w: usize, h: usize, out: &mut [f64]) {
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            let mut v = 0.0;
            if j + 1 < w {
                v += px[k];
            }
            if j > 0 {
                v -= px[k - 1];
            }
            if i + 1 < h {
                v += py[k];
            }
            if i > 0 {
                v -= py[k - w];
            }
            out[k] = v;
        }
    }
}

/// Anisotropic total variation `sum |dx| + |dy|`.
pub fn total_variation(s: &[f64], width: usize, height: usize) -> f64 {
    let n = width * height;
    let (mut gx, mut gy) = (vec![0.0; n], vec![0.0; n]);
    grad(s, width, height, &mut gx, &mut gy);
    gx.iter().chain(&gy).map(|v| v.abs()).sum()
}

struct TvProx {
    w: usize,
    h: usize,
    px: Vec<f64>,
    py: Vec<f64>,
    gx: Vec<f64>,
    gy: Vec<f64>,
    d: Vec<f64>,
    inner: usize,
    nonneg: bool,
}

impl TvProx {
    fn new(w: usize, h: usize, cfg: &CsConfig) -> Self {
        let n = w * h;
        Self { w, h, px: vec![0.0; n], py: vec![0.0; n], gx: vec![0.0; n], gy: vec![0.0; n], d: vec![0.0; n], inner: cfg.inner_iter.max(1), nonneg: cfg.nonneg }
    }

    fn primal(&mut self, v: &[f64], lambda: f64, x: &mut [f64]) {
        div(&self.px, &self.py, self.w, self.h, &mut self.d);
        for ((xi, vi), di) in x.iter_mut().zip(v).zip(&self.d) {
            let u = vi + lambda * di;
            *xi = if self.nonneg { u.max(0.0) } else { u };
        }
    }

    /// `argmin_x lambda TV(x) + |x - v|^2 / 2` over the feasible set; the dual
    /// variable is warm-started from the previous call.
    fn apply(&mut self, v: &[f64], lambda: f64, x: &mut [f64]) {
        let step = 1.0 / (GRAD_NORM2 * lambda);
        for _ in 0..self.inner {
            self.primal(v, lambda, x);
            grad(x, self.w, self.h, &mut self.gx, &mut self.gy);
            for (p, g) in self.px.iter_mut().zip(&self.gx).chain(self.py.iter_mut().zip(&self.gy)) {
                *p = (*p + step * g).clamp(-1.0, 1.0);
            }
        }
        self.primal(v, lambda, x);
    }
}

/// Dense copies of `Q` and `Q^T` for the solver's repeated products.
struct Operator {
    q: Vec<f64>,
    qt: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Operator {
    fn new(m: &SensingMatrix) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        let q: Vec<f64> = m.data().iter().map(|&v| v as f64).collect();
        let mut qt = vec![0.0; rows * cols];
        for t in 0..rows {
            for j in 0..cols {
                qt[j * rows + t] = q[t * cols + j];
            }
        }
        Self { q, qt, rows, cols }
    }

    fn apply(a: &[f64], width: usize, x: &[f64]) -> Vec<f64> {
        a.par_chunks(width).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn project(&self, s: &[f64]) -> Vec<f64> {
        Self::apply(&self.q, self.cols, s)
    }

    fn back_project(&self, r: &[f64]) -> Vec<f64> {
        Self::apply(&self.qt, self.rows, r)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest eigenvalue of `Q^T Q` by power iteration from the all-ones vector.
fn gram_top_eigenvalue(q: &Operator) -> f64 {
    let mut v = vec![1.0 / (q.cols as f64).sqrt(); q.cols];
    let mut lam = 0.0;
    for _ in 0..POWER_STEPS {
        let u = q.back_project(&q.project(&v));
        lam = norm2(&u);
        if lam == 0.0 {
            return 0.0;
        }
        v = u.into_iter().map(|x| x / lam).collect();
    }
    lam
}

pub fn cs_reconstruct(q: &SensingMatrix, y: &[f64], width: usize, height: usize, cfg: &CsConfig) -> Result<ReconstructionResult> {
    if width * height != q.cols() || y.len() != q.rows() {
        return Err(Error::Contract(format!(
            "{}x{} matrix, {} measurements and a {}x{} grid",
            q.rows(),
            q.cols(),
            y.len(),
            width,
            height
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(domain(format!("measurement {i} is {}", y[i])));
    }
    if !(cfg.mu.is_finite() && cfg.mu > 0.0) || cfg.tol.is_nan() || cfg.tol < 0.0 {
        return Err(domain(format!("mu = {} and tol = {} must be positive and finite", cfg.mu, cfg.tol)));
    }
    let n = q.cols();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(ReconstructionResult { s_hat: vec![0.0; n], iterations: 0, objective_trace: vec![0.0], residual: 0.0 });
    }
    let yn: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let op = Operator::new(q);
    let lip = cfg.mu * gram_top_eigenvalue(&op) * LIPSCHITZ_MARGIN;
    if lip.is_nan() || lip <= 0.0 {
        return Err(domain("sensing matrix has no non-zero entries"));
    }
    let step = 1.0 / lip;
    let objective = |s: &[f64]| {
        let r: f64 = op.project(s).iter().zip(&yn).map(|(a, b)| (a - b).powi(2)).sum();
        total_variation(s, width, height) + 0.5 * cfg.mu * r
    };

    let mut prox = TvProx::new(width, height, cfg);
    let mut x = vec![0.0; n];
    let mut fx = objective(&x);
    let mut yk = x.clone();
    let mut z = vec![0.0; n];
    let mut t = 1.0f64;
    let mut trace = vec![fx];
    let mut iterations = 0;
    for _ in 0..cfg.max_iter {
        iterations += 1;
        let r: Vec<f64> = op.project(&yk).iter().zip(&yn).map(|(a, b)| a - b).collect();
        let g = op.back_project(&r);
        let v: Vec<f64> = yk.iter().zip(&g).map(|(a, b)| a - step * cfg.mu * b).collect();
        prox.apply(&v, step, &mut z);
        let fz = objective(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        let f_prev = fx;
        if fz <= fx {
            x.copy_from_slice(&z);
            fx = fz;
        }
        for i in 0..n {
            yk[i] = x[i] + (t / t_next) * (z[i] - x[i]) + ((t - 1.0) / t_next) * (x[i] - x_prev[i]);
        }
        t = t_next;
        trace.push(fx);
        if f_prev - fx <= cfg.tol * f_prev.abs().max(f64::MIN_POSITIVE) && fz <= f_prev {
            break;
        }
    }
    let s_hat: Vec<f64> = x.iter().map(|v| v * scale).collect();
    let res: Vec<f64> = q.project(&s_hat).iter().zip(y).map(|(a, b)| a - b).collect();
    let residual = norm2(&res) / norm2(y);
    Ok(ReconstructionResult { s_hat, iterations, objective_trace: trace, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::phantom;
    use crate::mc_oracle::RngSeed;

    #[test]
    fn divergence_is_negative_adjoint_of_gradient() {
        let (w, h) = (5, 4);
        let s: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64).collect();
        let px: Vec<f64> = (0..20).map(|i| (i as f64 * 0.3).sin()).collect();
        let py: Vec<f64> = (0..20).map(|i| (i as f64 * 0.7).cos()).collect();
        let (mut gx, mut gy, mut d) = (vec![0.0; 20], vec![0.0; 20], vec![0.0; 20]);
        grad(&s, w, h, &mut gx, &mut gy);
        div(&px, &py, w, h, &mut d);
        let lhs: f64 = gx.iter().zip(&px).chain(gy.iter().zip(&py)).map(|(a, b)| a * b).sum();
        let rhs: f64 = -s.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn constant_scene_is_recovered() {
        let q = SensingMatrix::random(40, 64, 0.5, RngSeed::new(1)).unwrap();
        let s0 = vec![0.7; 64];
        let r = cs_reconstruct(&q, &q.project(&s0), 8, 8, &CsConfig::default()).unwrap();
        for v in &r.s_hat {
            assert!((v - 0.7).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn full_sampling_recovers_phantom() {
        let (w, h) = (16, 16);
        let s0 = phantom(w, h);
        let q = SensingMatrix::random(w * h, w * h, 0.5, RngSeed::new(4)).unwrap();
        let cfg = CsConfig { mu: 1000.0, ..CsConfig::default() };
        let r = cs_reconstruct(&q, &q.project(&s0), w, h, &cfg).unwrap();
        let err = norm2(&r.s_hat.iter().zip(&s0).map(|(a, b)| a - b).collect::<Vec<_>>()) / norm2(&s0);
        assert!(err < 1e-3, "relative error {err}");
        assert!(r.objective_trace.windows(2).all(|p| p[1] <= p[0] + 1e-9));
    }

    #[test]
    fn rejects_bad_input() {
        let q = SensingMatrix::random(4, 4, 0.5, RngSeed::new(1)).unwrap();
        assert!(cs_reconstruct(&q, &[1.0, f64::NAN, 0.0, 0.0], 2, 2, &CsConfig::default()).is_err());
        assert!(cs_reconstruct(&q, &[1.0; 3], 2, 2, &CsConfig::default()).is_err());
    }
}
