//! Photon-number distributions of Fock, coherent and thermal light.
//!
//! Distributions are stored in linear space on `0..=n_max` together with an
//! upper bound on the probability mass that lies beyond the cutoff. Nothing is
//! renormalized behind the caller's back.

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, domain, Error, Result};
use crate::special::{ln_factorial, ln_poisson};

/// Allowance for floating-point rounding when summing `len` probabilities.
pub(crate) fn rounding_margin(len: usize) -> f64 {
    8.0 * f64::EPSILON * (len as f64 + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonNumberDistribution {
    probs: Vec<f64>,
    tail_bound: f64,
}

impl PhotonNumberDistribution {
    /// Wraps `probs` with a caller-certified tail bound.
    pub fn new(probs: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(domain("distribution needs at least one entry"));
        }
        if let Some((n, p)) = probs.iter().enumerate().find(|(_, p)| !(p.is_finite() && **p >= 0.0)) {
            return Err(domain(format!("p({n}) = {p} is not a probability")));
        }
        check_nonneg("tail_bound", tail_bound)?;
        let sum: f64 = probs.iter().sum();
        let slack = rounding_margin(probs.len());
        if sum > 1.0 + slack || sum < 1.0 - tail_bound - slack {
            return Err(domain(format!("mass {sum} inconsistent with tail bound {tail_bound}")));
        }
        Ok(Self { probs, tail_bound })
    }

    /// Tail bound is whatever mass is missing, plus a rounding allowance.
    pub fn from_truncated(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        let tail = (1.0 - sum).max(0.0) + rounding_margin(probs.len());
        Self::new(probs, tail)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `p(n)`, zero beyond the cutoff.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceSpec {
    Fock { n: u32 },
    Coherent { mean: f64 },
    Thermal { mean: f64 },
}

impl SourceSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            SourceSpec::Fock { n } => n as f64,
            SourceSpec::Coherent { mean } | SourceSpec::Thermal { mean } => mean,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceSpec::Fock { .. } => Ok(()),
            SourceSpec::Coherent { mean } | SourceSpec::Thermal { mean } => check_nonneg("mean", mean),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutoffPolicy {
    /// `max(16, ceil(30 (nbar + 1)))`.
    #[default]
    Default,
    Fixed(usize),
}

impl CutoffPolicy {
    pub fn n_max(&self, mean_total: f64) -> usize {
        match *self {
            CutoffPolicy::Default => default_cutoff(mean_total),
            CutoffPolicy::Fixed(n) => n,
        }
    }
}

/// Thermal tail beyond this cutoff is at most `exp(-30)`.
pub fn default_cutoff(mean_total: f64) -> usize {
    (30.0 * (mean_total + 1.0)).ceil().max(16.0) as usize
}

pub fn thermal_probs(nbar: f64, n_max: usize) -> Vec<f64> {
    let r = nbar / (1.0 + nbar);
    let mut p = Vec::with_capacity(n_max + 1);
    let mut cur = 1.0 / (1.0 + nbar);
    for _ in 0..=n_max {
        p.push(cur);
        cur *= r;
    }
    p
}

pub fn pmf(source: SourceSpec, policy: CutoffPolicy) -> Result<PhotonNumberDistribution> {
    source.validate()?;
    let n_max = policy.n_max(source.mean());
    match source {
        SourceSpec::Fock { n } => {
            let n = n as usize;
            let mut probs = vec![0.0; n_max.max(n) + 1];
            probs[n] = 1.0;
            PhotonNumberDistribution::new(probs, 0.0)
        }
        SourceSpec::Thermal { mean } => {
            let probs = thermal_probs(mean, n_max);
            let r = mean / (1.0 + mean);
            let tail = r.powi(n_max as i32 + 1) + rounding_margin(n_max + 1);
            PhotonNumberDistribution::new(probs, tail.min(1.0))
        }
        SourceSpec::Coherent { mean } => {
            let probs: Vec<f64> = (0..=n_max as u64).map(|n| ln_poisson(mean, n).exp()).collect();
            PhotonNumberDistribution::new(probs, poisson_tail_bound(mean, n_max))
        }
    }
}

/// Upper bound on `P(X > n_max)` for `X ~ Poisson(mean)`.
fn poisson_tail_bound(mean: f64, n_max: usize) -> f64 {
    let k = n_max as f64 + 1.0;
    let geometric = if mean < k + 1.0 {
        // Successive ratios beyond k are at most mean/(k+1).
        let next = (-mean + k * mean.ln() - ln_factorial(n_max as u64 + 1)).exp();
        next / (1.0 - mean / (k + 1.0))
    } else {
        1.0
    };
    (geometric + rounding_margin(n_max + 1)).min(1.0)
}

/// `(mean, variance)` with `variance = sum n^2 p(n) - mean^2`.
pub fn moments(dist: &PhotonNumberDistribution) -> (f64, f64) {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (n, p) in dist.probs.iter().enumerate() {
        let n = n as f64;
        m1 += n * p;
        m2 += n * n * p;
    }
    (m1, m2 - m1 * m1)
}

/// Single-mode `g2 = 1 + (var - mean) / mean^2`.
pub fn g2_from_pmf(dist: &PhotonNumberDistribution) -> Result<f64> {
    let (mean, var) = moments(dist);
    if mean <= 0.0 {
        return Err(Error::UndefinedG2);
    }
    Ok(1.0 + (var - mean) / (mean * mean))
}

/// Distribution of the sum of independent counts, on the full support `0..=na+nb`.
pub fn convolve(a: &PhotonNumberDistribution, b: &PhotonNumberDistribution) -> PhotonNumberDistribution {
    let len = a.probs.len() + b.probs.len() - 1;
    let mut out = vec![0.0; len];
    for (i, pa) in a.probs.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        for (j, pb) in b.probs.iter().enumerate() {
            out[i + j] += pa * pb;
        }
    }
    let (ta, tb) = (a.tail_bound, b.tail_bound);
    let tail = (ta + tb - ta * tb + rounding_margin(len)).min(1.0);
    PhotonNumberDistribution { probs: out, tail_bound: tail }
}

/// `(I_max - I_min) / (I_max + I_min)` over sampled `(k, I)` pairs.
pub fn visibility(samples: &[(f64, f64)]) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for &(k, i) in samples {
        if !(i.is_finite() && i >= 0.0) {
            return Err(domain(format!("intensity {i} at k = {k} must be finite and >= 0")));
        }
        lo = lo.min(i);
        hi = hi.max(i);
    }
    if hi <= 0.0 {
        return Err(domain("visibility needs at least one positive intensity"));
    }
    Ok((hi - lo) / (hi + lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn thermal(mean: f64) -> PhotonNumberDistribution {
        pmf(SourceSpec::Thermal { mean }, CutoffPolicy::Default).unwrap()
    }

    #[test]
    fn vacuum_and_fock_are_point_masses() {
        let t = thermal(0.0);
        assert_eq!(t.get(0), 1.0);
        assert!(t.probs()[1..].iter().all(|&p| p == 0.0));
        let f = pmf(SourceSpec::Fock { n: 1 }, CutoffPolicy::Default).unwrap();
        assert_eq!(f.get(1), 1.0);
        assert_eq!(f.total_mass(), 1.0);
        assert_eq!(f.tail_bound(), 0.0);
    }

    #[test]
    fn thermal_unit_mean_entry() {
        assert!((thermal(1.0).get(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn tabulated_moments() {
        let (m, v) = moments(&thermal(1.0));
        assert!((m - 1.0).abs() < 1e-12 && (v - 2.0).abs() < 1e-12);
        let c = pmf(SourceSpec::Coherent { mean: 4.0 }, CutoffPolicy::Default).unwrap();
        let (m, v) = moments(&c);
        assert!((m - 4.0).abs() < 1e-12 && (v - 4.0).abs() < 1e-11);
        let f = pmf(SourceSpec::Fock { n: 3 }, CutoffPolicy::Default).unwrap();
        assert_eq!(moments(&f), (3.0, 0.0));
    }

    #[test]
    fn g2_of_canonical_states() {
        for mean in [0.1, 1.0, 10.0] {
            assert!((g2_from_pmf(&thermal(mean)).unwrap() - 2.0).abs() < 1e-9, "mean {mean}");
            let c = pmf(SourceSpec::Coherent { mean }, CutoffPolicy::Default).unwrap();
            assert!((g2_from_pmf(&c).unwrap() - 1.0).abs() < 1e-9);
        }
        let f = pmf(SourceSpec::Fock { n: 2 }, CutoffPolicy::Default).unwrap();
        assert_eq!(g2_from_pmf(&f).unwrap(), 0.5);
        assert!(matches!(g2_from_pmf(&thermal(0.0)), Err(Error::UndefinedG2)));
    }

    #[test]
    fn negative_mean_is_rejected() {
        assert!(matches!(pmf(SourceSpec::Thermal { mean: -0.1 }, CutoffPolicy::Default), Err(Error::Domain(_))));
        assert!(matches!(pmf(SourceSpec::Coherent { mean: f64::NAN }, CutoffPolicy::Default), Err(Error::Domain(_))));
    }

    #[test]
    fn default_cutoff_tail_is_small() {
        for mean in [0.0, 0.1, 1.0, 3.75, 10.0, 40.0] {
            assert!(thermal(mean).tail_bound() <= 1e-10, "thermal {mean}");
            let c = pmf(SourceSpec::Coherent { mean }, CutoffPolicy::Default).unwrap();
            assert!(c.tail_bound() <= 1e-10, "coherent {mean}");
        }
    }

    #[test]
    fn fixed_cutoff_reports_honest_tail() {
        let t = pmf(SourceSpec::Thermal { mean: 1.0 }, CutoffPolicy::Fixed(3)).unwrap();
        assert!((t.tail_bound() - 0.0625).abs() < 1e-12);
        assert!((t.total_mass() + 0.0625 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn convolution_identity_and_means() {
        let a = thermal(1.3);
        let vac = pmf(SourceSpec::Fock { n: 0 }, CutoffPolicy::Fixed(0)).unwrap();
        assert_eq!(convolve(&a, &vac).probs(), a.probs());
        let s = convolve(&thermal(0.7), &thermal(2.1));
        assert!((s.mean() - 2.8).abs() < 1e-10);
        let g = g2_from_pmf(&convolve(&thermal(1.0), &thermal(1.0))).unwrap();
        assert!((g - 1.5).abs() < 1e-10);
    }

    #[test]
    fn visibility_cases() {
        let flat: Vec<_> = (0..50).map(|i| (i as f64, 3.0)).collect();
        assert_eq!(visibility(&flat).unwrap(), 0.0);
        let touching: Vec<_> = (0..=100).map(|i| {
            let k = i as f64 * 0.1;
            (k, 1.0 + k.cos())
        }).collect();
        assert!((visibility(&touching).unwrap() - 1.0).abs() < 1e-3);
        let ks: Vec<_> = (0..=64).map(|i| {
            let k = i as f64 * std::f64::consts::PI / 32.0;
            (k, 2.0 + k.cos())
        }).collect();
        assert!((visibility(&ks).unwrap() - 0.5).abs() < 1e-12);
        assert!(visibility(&[(0.0, 0.0), (1.0, 0.0)]).is_err());
        assert!(visibility(&[(0.0, -1.0)]).is_err());
    }
}
