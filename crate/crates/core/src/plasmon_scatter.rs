//! Photon statistics of light after a plasmonic structure.
//!
//! A thermal source of mean `n_s` is split by polarization angle `theta`
//! (degrees from the vertical axis, `eta = cos^2 theta`). The branch weighted by
//! `eta` mixes coherently with a thermal plasmon field of mean `n_pl`; the other
//! branch is detected as an independent thermal mode. The detected count is the
//! sum of two independent thermal modes with means
//! `A = n_pl + eta n_s` and `B = (1 - eta) n_s`.

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, check_range, Result};
use crate::special::{ln_bose_einstein, ln_choose, ln_pow, LogSum};
use crate::states::{default_cutoff, g2_from_pmf, rounding_margin, PhotonNumberDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatterConfig {
    pub n_s: f64,
    pub n_pl: f64,
    pub theta_deg: f64,
}

impl ScatterConfig {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("n_s", self.n_s)?;
        check_nonneg("n_pl", self.n_pl)?;
        check_range("theta_deg", self.theta_deg, 0.0, 90.0)
    }

    pub fn eta(&self) -> f64 {
        self.theta_deg.to_radians().cos().powi(2)
    }

    pub fn a(&self) -> f64 {
        self.n_pl + self.eta() * self.n_s
    }

    pub fn b(&self) -> f64 {
        (1.0 - self.eta()) * self.n_s
    }
}

/// `p_det(n) = sum_m A^(n-m) B^m / ((A+1)^(n-m+1) (B+1)^(m+1))` on the default cutoff.
pub fn detected_pmf(cfg: &ScatterConfig) -> Result<PhotonNumberDistribution> {
    cfg.validate()?;
    let (a, b) = (cfg.a(), cfg.b());
    let n_max = default_cutoff(a + b);
    let ra = a / (a + 1.0);
    let rb = b / (b + 1.0);
    let norm = 1.0 / ((a + 1.0) * (b + 1.0));
    let probs: Vec<f64> = (0..=n_max as i32)
        .map(|n| (0..=n).map(|m| ra.powi(n - m) * rb.powi(m)).sum::<f64>() * norm)
        .collect();
    // P(X_A + X_B > n_max) = sum_k p_A(k) P(X_B > n_max - k) + P(X_A > n_max).
    let tail = (0..=n_max as i32).map(|k| (1.0 - ra) * ra.powi(k) * rb.powi(n_max as i32 - k + 1)).sum::<f64>()
        + ra.powi(n_max as i32 + 1);
    PhotonNumberDistribution::new(probs, (tail + rounding_margin(n_max + 1)).min(1.0))
}

/// `(theta, g2)` pairs sorted by angle.
pub fn g2_vs_angle(n_s: f64, n_pl: f64, theta_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut out = theta_grid
        .iter()
        .map(|&theta_deg| {
            let pmf = detected_pmf(&ScatterConfig { n_s, n_pl, theta_deg })?;
            Ok((theta_deg, g2_from_pmf(&pmf)?))
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(out)
}

/// Two thermal modes summed incoherently: `1 + (A^2 + B^2) / (A + B)^2`.
pub fn two_mode_g2(a: f64, b: f64) -> f64 {
    1.0 + (a * a + b * b) / ((a + b) * (a + b))
}

/// Photon-number distribution of the field whose P-function is the convolution
/// of two thermal P-functions with means `n1` and `n2`.
///
/// The displaced-thermal number distribution
/// `n1^n / (1+n1)^(n+1) exp(-|b|^2/(1+n1)) L_n(-|b|^2 / (n1 (1+n1)))`
/// is averaged over the Gaussian displacement distribution of mean `n2`. With
/// `x = 1/(n1 (1+n1))` and `c = 1/n2 + 1/(1+n1)` this is
/// `n1^n / (1+n1)^(n+1) / n2 * sum_k C(n,k) x^k / c^(k+1)`.
pub fn p_function_convolution_check(n1: f64, n2: f64) -> Result<PhotonNumberDistribution> {
    check_nonneg("n1", n1)?;
    check_nonneg("n2", n2)?;
    let n_max = default_cutoff(n1 + n2);
    let probs: Vec<f64> = (0..=n_max as u64)
        .map(|n| {
            if n2 == 0.0 {
                ln_bose_einstein(n1, n).exp()
            } else if n1 == 0.0 {
                // Displaced vacuum is a coherent state; average Poisson over an exponential.
                let c = 1.0 + 1.0 / n2;
                (-(n2.ln()) - (n as f64 + 1.0) * c.ln()).exp()
            } else {
                let x = 1.0 / (n1 * (1.0 + n1));
                let c = 1.0 / n2 + 1.0 / (1.0 + n1);
                let mut s = LogSum::default();
                for k in 0..=n {
                    s.add(ln_choose(n, k) + ln_pow(x, k) - (k as f64 + 1.0) * c.ln());
                }
                (ln_pow(n1, n) - (n as f64 + 1.0) * n1.ln_1p() - n2.ln() + s.ln()).exp()
            }
        })
        .collect();
    PhotonNumberDistribution::from_truncated(probs)
}
