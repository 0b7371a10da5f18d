//! Plasmon-subtracted thermal light and conditional phase sensing.
//!
//! A thermal input of mean `n_bar` couples a fraction `gamma_loss` into the
//! sensor; a fraction `xi` of that is photonic (mode e, read with efficiency
//! `eta_ph`) and `1 - xi` plasmonic (mode d, read with efficiency `eta_pl`).
//! Detecting `L` plasmons in mode d heralds a negative-binomial state in mode e.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, check_range, Error, Result};
use crate::special::{ln_bose_einstein, ln_choose, ln_pow, LogSum};
use crate::states::{default_cutoff, rounding_margin, PhotonNumberDistribution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub n_bar: f64,
    /// Analyte phase shift, radians.
    pub phi: f64,
    /// Photonic share of the coupled power.
    pub xi: f64,
    /// Total coupled power fraction.
    pub gamma_loss: f64,
    pub eta_ph: f64,
    pub eta_pl: f64,
}

impl SensorConfig {
    /// Coupling constants of the nanoslit sensor.
    pub fn thesis_ch5() -> Self {
        Self { n_bar: 3.75, phi: PI / 2.0, xi: 0.80, gamma_loss: 0.0941, eta_ph: 0.3, eta_pl: 0.3 }
    }

    /// Same sensor with the plasmonic share taken from the transmissions directly,
    /// `gamma (1 - xi) = T_pl = 0.0176`.
    pub fn thesis_ch5_transmission() -> Self {
        Self { xi: 1.0 - 0.0176 / 0.0941, ..Self::thesis_ch5() }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "thesis-ch5" => Some(Self::thesis_ch5()),
            "thesis-ch5-transmission" => Some(Self::thesis_ch5_transmission()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("n_bar", self.n_bar)?;
        check_range("phi", self.phi, 0.0, 2.0 * PI)?;
        check_range("xi", self.xi, 0.0, 1.0)?;
        check_range("gamma_loss", self.gamma_loss, 0.0, 1.0)?;
        check_range("eta_ph", self.eta_ph, 0.0, 1.0)?;
        check_range("eta_pl", self.eta_pl, 0.0, 1.0)
    }

    fn cos2(&self) -> f64 {
        (self.phi / 2.0).cos().powi(2)
    }
}

/// `(n+L)! n^n / (n! L! (1+n)^(L+1+n))` on the default cutoff for mean `(L+1) n_bar`.
pub fn subtracted_pmf(n_bar: f64, l: u64) -> Result<PhotonNumberDistribution> {
    check_nonneg("n_bar", n_bar)?;
    let n_max = default_cutoff((l as f64 + 1.0) * n_bar);
    let probs = (0..=n_max as u64)
        .map(|n| (ln_choose(n + l, l) + ln_pow(n_bar, n) - ((l + 1 + n) as f64) * n_bar.ln_1p()).exp())
        .collect();
    PhotonNumberDistribution::from_truncated(probs)
}

/// `(L + 2) / (L + 1)`.
pub fn g2_subtracted(l: u64) -> f64 {
    (l as f64 + 2.0) / (l as f64 + 1.0)
}

/// Mean occupation of the heralding mode, `n gamma (1 - xi) eta_pl sin^2(phi/2)`.
pub fn heralding_mean(cfg: &SensorConfig) -> f64 {
    cfg.n_bar * cfg.gamma_loss * (1.0 - cfg.xi) * cfg.eta_pl * (cfg.phi / 2.0).sin().powi(2)
}

/// Probability of detecting exactly `L` plasmons, `n_d^L / (1 + n_d)^(L+1)`.
pub fn subtraction_success_probability(cfg: &SensorConfig, l: u64) -> Result<f64> {
    cfg.validate()?;
    Ok(ln_bose_einstein(heralding_mean(cfg), l).exp())
}

/// Conditional mean count in mode e,
/// `n gamma xi eta_ph c (L+1) / (1 + n gamma (1-xi) eta_pl c)` with `c = cos^2(phi/2)`.
pub fn conditional_mean(cfg: &SensorConfig, l: u64) -> f64 {
    let c = cfg.cos2();
    let k = cfg.n_bar * cfg.gamma_loss * cfg.xi * cfg.eta_ph;
    let b = cfg.n_bar * cfg.gamma_loss * (1.0 - cfg.xi) * cfg.eta_pl;
    k * c * (l as f64 + 1.0) / (1.0 + b * c)
}

/// Conditional standard deviation, `mean / snr`.
pub fn conditional_std(cfg: &SensorConfig, l: u64) -> f64 {
    conditional_mean(cfg, l) / snr_value(cfg, l)
}

fn snr_value(cfg: &SensorConfig, l: u64) -> f64 {
    let c = cfg.cos2();
    let g = cfg.n_bar * cfg.gamma_loss;
    let num = (1.0 + l as f64) * g * cfg.eta_ph * cfg.xi * c;
    let den = 1.0 + g * (cfg.xi * cfg.eta_ph + (1.0 - cfg.xi) * cfg.eta_pl) * c;
    (num / den).sqrt()
}

/// `sqrt((1+L) n gamma eta_ph xi c / (1 + n gamma (xi eta_ph + (1-xi) eta_pl) c))`.
pub fn snr(cfg: &SensorConfig, l: u64) -> Result<f64> {
    cfg.validate()?;
    Ok(snr_value(cfg, l))
}

/// Without heralding: `sqrt(n_e / (1 + n_e))`, `n_e = n gamma xi eta_ph c`.
pub fn snr_unconditional(cfg: &SensorConfig) -> Result<f64> {
    cfg.validate()?;
    let ne = cfg.n_bar * cfg.gamma_loss * cfg.xi * cfg.eta_ph * cfg.cos2();
    Ok((ne / (1.0 + ne)).sqrt())
}

pub const PHASE_STEP: f64 = 1e-4;

/// `std / |d mean / d phi|` at `phi`, central difference with step [`PHASE_STEP`].
pub fn phase_uncertainty(cfg: &SensorConfig, l: u64, phi: f64) -> Result<f64> {
    let at = SensorConfig { phi, ..*cfg };
    at.validate()?;
    let lo = SensorConfig { phi: phi - PHASE_STEP, ..at };
    let hi = SensorConfig { phi: phi + PHASE_STEP, ..at };
    let deriv = (conditional_mean(&hi, l) - conditional_mean(&lo, l)) / (2.0 * PHASE_STEP);
    if deriv.abs() < 1e-12 {
        return Err(Error::SingularPoint(format!("d<n>/dphi = {deriv:e} at phi = {phi}")));
    }
    Ok(conditional_std(&at, l) / deriv.abs())
}

pub const MAX_CONDITIONAL_CUTOFF: u64 = 4000;
pub const CONDITIONAL_TAIL_TARGET: f64 = 1e-10;
pub const CONDITIONAL_TAIL_LIMIT: f64 = 1e-8;

/// Detected photon distribution in mode e given `L` plasmon detections.
///
/// The coupled light is thermal with mean `n gamma cos^2(phi/2)`. A total of
/// `m + n` photons splits binomially into `m` plasmons (probability `1 - xi`)
/// and `n` photons; the plasmon detector reports `L` with probability
/// `C(m, L) eta_pl^L (1 - eta_pl)^(m-L)`. The heralded photon distribution is
/// then thinned by `eta_ph`.
pub fn conditional_state_pmf(cfg: &SensorConfig, l: u64) -> Result<PhotonNumberDistribution> {
    cfg.validate()?;
    let mean = cfg.n_bar * cfg.gamma_loss * cfg.cos2();
    let (xi, eta) = (cfg.xi, cfg.eta_pl);
    let r = mean / (1.0 + mean);
    let mut total_max = default_cutoff((l as f64 + 1.0) * mean).max(l as usize + 1) as u64;
    loop {
        // Unnormalized u(n) over photon totals m + n <= total_max.
        let n_cap = total_max - l;
        let mut terms = vec![LogSum::default(); n_cap as usize + 1];
        for m in l..=total_max {
            let herald = ln_choose(m, l) + ln_pow(eta, l) + ln_pow(1.0 - eta, m - l) + ln_pow(1.0 - xi, m);
            if herald == f64::NEG_INFINITY {
                continue;
            }
            for n in 0..=(total_max - m) {
                let t = ln_bose_einstein(mean, m + n) + ln_choose(m + n, m) + ln_pow(xi, n) + herald;
                terms[n as usize].add(t);
            }
        }
        let u: Vec<f64> = terms.iter().map(LogSum::value).collect();
        let z: f64 = u.iter().sum();
        if z <= 0.0 {
            return Err(Error::Domain(format!("heralding on {l} plasmons has zero probability")));
        }
        // Mass beyond the cutoff is at most P(total > total_max) = r^(total_max + 1).
        let rel_tail = (total_max as f64 + 1.0) * r.ln() - z.ln();
        let rel_tail = rel_tail.exp();
        if rel_tail <= CONDITIONAL_TAIL_TARGET || total_max >= MAX_CONDITIONAL_CUTOFF {
            if rel_tail > CONDITIONAL_TAIL_LIMIT {
                return Err(Error::Accuracy(format!(
                    "conditional state tail {rel_tail:e} above {CONDITIONAL_TAIL_LIMIT:e} at cutoff {total_max}"
                )));
            }
            let heralded: Vec<f64> = u.iter().map(|x| x / z).collect();
            let thinned = thin(&heralded, cfg.eta_ph);
            let tail = (rel_tail + rounding_margin(thinned.len())).min(1.0);
            return PhotonNumberDistribution::new(thinned, tail);
        }
        total_max = (total_max * 2).min(MAX_CONDITIONAL_CUTOFF);
    }
}

/// Binomial thinning of a pmf by efficiency `eta`.
fn thin(p: &[f64], eta: f64) -> Vec<f64> {
    (0..p.len() as u64)
        .map(|k| {
            let mut s = LogSum::default();
            for (n, pn) in p.iter().enumerate().skip(k as usize) {
                if *pn > 0.0 {
                    let n = n as u64;
                    s.add(pn.ln() + ln_choose(n, k) + ln_pow(eta, k) + ln_pow(1.0 - eta, n - k));
                }
            }
            s.value()
        })
        .collect()
}

/// `(phi, L, snr, delta_phi)` rows; `delta_phi` is NaN where the derivative vanishes.
pub fn sensing_sweep(cfg: &SensorConfig, phis: &[f64], ls: &[u64]) -> Result<Vec<(f64, u64, f64, f64)>> {
    let mut out = Vec::with_capacity(phis.len() * ls.len());
    for &phi in phis {
        for &l in ls {
            let at = SensorConfig { phi, ..*cfg };
            let s = snr(&at, l)?;
            let dphi = match phase_uncertainty(&at, l, phi) {
                Ok(v) => v,
                Err(Error::SingularPoint(_)) => f64::NAN,
                Err(e) => return Err(e),
            };
            out.push((phi, l, s, dphi));
        }
    }
    Ok(out)
}

/// Tabulated subtraction probabilities for `n_bar` in {2, 1, 0.5, 0.3} and `L` in {1, 2, 3}.
pub const SUBTRACTION_TABLE: [(f64, [f64; 3]); 4] = [
    (2.0, [1.0e-2, 1.0e-4, 1.1e-6]),
    (1.0, [5.2e-3, 2.7e-5, 1.4e-7]),
    (0.5, [2.6e-3, 7.0e-6, 1.8e-8]),
    (0.3, [1.5e-3, 2.5e-6, 4.0e-9]),
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubtractionRow {
    pub n_bar: f64,
    pub l: u64,
    pub probability: f64,
    pub reference: f64,
    pub rel_err: f64,
}

/// Success probabilities at `phi = pi` for the tabulated `(n_bar, L)` cells.
pub fn subtraction_table(cfg: &SensorConfig) -> Result<Vec<SubtractionRow>> {
    let mut rows = Vec::with_capacity(12);
    for (n_bar, refs) in SUBTRACTION_TABLE {
        for (i, reference) in refs.iter().enumerate() {
            let l = i as u64 + 1;
            let at = SensorConfig { n_bar, phi: PI, ..*cfg };
            let probability = subtraction_success_probability(&at, l)?;
            rows.push(SubtractionRow { n_bar, l, probability, reference: *reference, rel_err: (probability - reference).abs() / reference });
        }
    }
    Ok(rows)
}

/// Analytic `d mean / d phi = -K (L+1) sin(phi) / (2 (1 + B c)^2)`.
pub fn conditional_mean_derivative(cfg: &SensorConfig, l: u64) -> f64 {
    let c = cfg.cos2();
    let k = cfg.n_bar * cfg.gamma_loss * cfg.xi * cfg.eta_ph;
    let b = cfg.n_bar * cfg.gamma_loss * (1.0 - cfg.xi) * cfg.eta_pl;
    -k * (l as f64 + 1.0) * cfg.phi.sin() / (2.0 * (1.0 + b * c).powi(2))
}
