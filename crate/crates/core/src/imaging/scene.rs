use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, domain, Error, Result};
use crate::io::GrayImage;
use crate::mc_oracle::RngSeed;

/// Object transmission map in mean photons per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingScene {
    pub width: usize,
    pub height: usize,
    pub s0: Vec<f64>,
}

impl SensingScene {
    pub fn new(width: usize, height: usize, s0: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || s0.len() != width * height {
            return Err(Error::Contract(format!("{}x{} scene with {} pixels", width, height, s0.len())));
        }
        if let Some(i) = s0.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(domain(format!("pixel {i} = {} is not a finite non-negative value", s0[i])));
        }
        Ok(Self { width, height, s0 })
    }

    /// Unit-scaled image times `scale`.
    pub fn from_image(img: &GrayImage, scale: f64) -> Result<Self> {
        Self::new(img.width, img.height, img.to_unit().into_iter().map(|v| v * scale).collect())
    }

    pub fn len(&self) -> usize {
        self.s0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s0.is_empty()
    }

    /// Pixels with non-zero transmission.
    pub fn object_mask(&self) -> Vec<bool> {
        self.s0.iter().map(|&v| v > 0.0).collect()
    }

    /// Same shape with values rescaled so that a fill-`f` mask sees `n_t` on average.
    pub fn scaled_to_mean(&self, n_t: f64, fill_fraction: f64) -> Result<Self> {
        let total: f64 = self.s0.iter().sum();
        if total <= 0.0 || fill_fraction <= 0.0 {
            return Err(domain("cannot rescale a dark scene or an empty mask"));
        }
        let c = n_t / (fill_fraction * total);
        Self::new(self.width, self.height, self.s0.iter().map(|v| v * c).collect())
    }
}

/// Binary illumination patterns `Q`, one row per measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
    pub fill_fraction: f64,
    pub seed: Option<RngSeed>,
}

impl SensingMatrix {
    /// Bernoulli(`fill_fraction`) entries drawn from `seed`.
    pub fn random(rows: usize, cols: usize, fill_fraction: f64, seed: RngSeed) -> Result<Self> {
        check_range("fill_fraction", fill_fraction, 0.0, 1.0)?;
        if rows == 0 || cols == 0 {
            return Err(Error::Contract("sensing matrix needs at least one row and column".into()));
        }
        let mut rng = seed.rng();
        let data = (0..rows * cols).map(|_| rng.random_bool(fill_fraction) as u8).collect();
        Ok(Self { rows, cols, data, fill_fraction, seed: Some(seed) })
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Contract(format!("{rows}x{cols} matrix with {} entries", data.len())));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(domain("sensing matrix entries must be 0 or 1"));
        }
        let fill_fraction = data.iter().map(|&v| v as f64).sum::<f64>() / data.len() as f64;
        Ok(Self { rows, cols, data, fill_fraction, seed: None })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn row(&self, t: usize) -> &[u8] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    /// `Q s`.
    pub fn project(&self, s: &[f64]) -> Vec<f64> {
        debug_assert_eq!(s.len(), self.cols);
        (0..self.rows).map(|t| self.row(t).iter().zip(s).filter(|(&q, _)| q != 0).map(|(_, v)| v).sum()).collect()
    }

    /// `Q^T r`.
    pub fn back_project(&self, r: &[f64]) -> Vec<f64> {
        debug_assert_eq!(r.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (t, rt) in r.iter().enumerate() {
            for (o, &q) in out.iter_mut().zip(self.row(t)) {
                if q != 0 {
                    *o += rt;
                }
            }
        }
        out
    }

    /// Rows reordered by `perm`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.rows];
        if perm.len() != self.rows || perm.iter().any(|&p| p >= self.rows || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Contract("row permutation is not a bijection".into()));
        }
        let data = perm.iter().flat_map(|&p| self.row(p).iter().copied()).collect();
        Ok(Self { data, seed: None, ..self.clone() })
    }
}

/// Letter-like test object on a unit background of zero: three bars and a crossbar,
/// drawn on a 32x32 reference grid and sampled at pixel centres.
pub fn phantom(width: usize, height: usize) -> Vec<f64> {
    // (row_lo, row_hi, col_lo, col_hi) on the reference grid.
    const BARS: [(f64, f64, f64, f64); 4] = [(6.0, 26.0, 8.0, 11.0), (14.0, 17.0, 8.0, 22.0), (6.0, 26.0, 19.0, 22.0), (8.0, 10.0, 4.0, 14.0)];
    let mut out = vec![0.0; width * height];
    for i in 0..height {
        let y = (i as f64 + 0.5) * 32.0 / height as f64;
        for j in 0..width {
            let x = (j as f64 + 0.5) * 32.0 / width as f64;
            if BARS.iter().any(|&(r0, r1, c0, c1)| y >= r0 && y < r1 && x >= c0 && x < c1) {
                out[i * width + j] = 1.0;
            }
        }
    }
    out
}

/// Mean over the object region divided by the mean over the background, after
/// clipping negatives. Capped at `1e6` when the background is dark.
pub fn image_snr(s_hat: &[f64], object: &[bool]) -> Result<f64> {
    if s_hat.len() != object.len() {
        return Err(Error::Contract(format!("{} pixels against a {}-pixel mask", s_hat.len(), object.len())));
    }
    let (mut obj, mut n_obj, mut bg, mut n_bg) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &o) in s_hat.iter().zip(object) {
        if o {
            obj += v.max(0.0);
            n_obj += 1;
        } else {
            bg += v.max(0.0);
            n_bg += 1;
        }
    }
    if n_obj == 0 || n_bg == 0 {
        return Err(domain("image SNR needs non-empty object and background regions"));
    }
    let (obj, bg) = (obj / n_obj as f64, bg / n_bg as f64);
    Ok(if bg * 1e6 <= obj { 1e6 } else { obj / bg })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_matches_reference_grid() {
        let p = phantom(32, 32);
        let count = p.iter().filter(|&&v| v > 0.0).count();
        // Bars 60 + 42 + 60 + 20 pixels, minus overlaps 9 + 9 + 6.
        assert_eq!(count, 158);
        assert_eq!(p[15 * 32 + 15], 1.0);
        assert_eq!(p[0], 0.0);
        assert!(phantom(16, 16).iter().any(|&v| v > 0.0));
    }

    #[test]
    fn projections_are_adjoint() {
        let q = SensingMatrix::random(7, 11, 0.5, RngSeed::new(3)).unwrap();
        let s: Vec<f64> = (0..11).map(|i| (i as f64).sin()).collect();
        let r: Vec<f64> = (0..7).map(|i| (i as f64).cos()).collect();
        let lhs: f64 = q.project(&s).iter().zip(&r).map(|(a, b)| a * b).sum();
        let rhs: f64 = q.back_project(&r).iter().zip(&s).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn random_matrix_is_reproducible() {
        let a = SensingMatrix::random(4, 9, 0.5, RngSeed::new(9)).unwrap();
        let b = SensingMatrix::random(4, 9, 0.5, RngSeed::new(9)).unwrap();
        assert_eq!(a, b);
        assert!(SensingMatrix::from_data(2, 2, vec![0, 1, 2, 0]).is_err());
    }

    #[test]
    fn snr_edges() {
        let mask = [true, false, false, false];
        assert_eq!(image_snr(&[1.0, 0.0, 0.0, 0.0], &mask).unwrap(), 1e6);
        let v = image_snr(&[2.0, -1.0, 1.0, 0.5], &mask).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        let w = image_snr(&[6.0, -3.0, 3.0, 1.5], &mask).unwrap();
        assert!((v - w).abs() < 1e-12);
        assert!(image_snr(&[1.0; 4], &[false; 4]).is_err());
    }
}
