use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scene::{SensingMatrix, SensingScene};
use crate::error::{check_nonneg, check_range, domain, Error, Result};
use crate::mc_oracle::{simulate, DetectorModel, RngSeed, SplitterNetwork};
use crate::special::{ln_bose_einstein, ln_choose, ln_factorial, ln_poisson, ln_pow, LogSum};
use crate::states::{default_cutoff, SourceSpec};

/// Fiber coupler of angle `theta` feeding detectors a (`cos^2`) and b (`sin^2`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoArmDetection {
    pub theta: f64,
    pub det_a: DetectorModel,
    pub det_b: DetectorModel,
}

impl TwoArmDetection {
    pub fn symmetric(theta: f64, efficiency: f64, dark_rate: f64) -> Self {
        let d = DetectorModel { efficiency, dark_rate };
        Self { theta, det_a: d, det_b: d }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("theta", self.theta, 0.0, FRAC_PI_2)?;
        self.det_a.validate()?;
        self.det_b.validate()
    }

    /// Detected signal means `(n eta_a cos^2, n eta_b sin^2)`.
    pub fn signal_means(&self, n_t: f64) -> (f64, f64) {
        (
            n_t * self.det_a.efficiency * self.theta.cos().powi(2),
            n_t * self.det_b.efficiency * self.theta.sin().powi(2),
        )
    }
}

fn check_inputs(n_t: f64, arms: &TwoArmDetection) -> Result<()> {
    check_nonneg("n_t", n_t)?;
    arms.validate()
}

/// Joint count distribution of the two noisy detectors,
/// `e^(-nu_a - nu_b) / (n! m!) sum_ij C(n,i) C(m,j) (i+j)! eta_a^i eta_b^j nu_a^(n-i) nu_b^(m-j)
///  cos^2i sin^2j n^(i+j) / (1 + n (eta_a cos^2 + eta_b sin^2))^(1+i+j)`.
pub fn joint_pmf_noisy(n_t: f64, arms: &TwoArmDetection, n: u64, m: u64) -> Result<f64> {
    check_inputs(n_t, arms)?;
    let (ea, eb) = (arms.det_a.efficiency, arms.det_b.efficiency);
    let (na, nb) = (arms.det_a.dark_rate, arms.det_b.dark_rate);
    let (c2, s2) = (arms.theta.cos().powi(2), arms.theta.sin().powi(2));
    let ln_den = (n_t * (ea * c2 + eb * s2)).ln_1p();
    let mut acc = LogSum::default();
    for i in 0..=n {
        let ai = ln_choose(n, i) + ln_pow(ea, i) + ln_pow(na, n - i) + ln_pow(c2, i);
        if ai == f64::NEG_INFINITY {
            continue;
        }
        for j in 0..=m {
            let t = ai + ln_choose(m, j) + ln_factorial(i + j) + ln_pow(eb, j) + ln_pow(nb, m - j) + ln_pow(s2, j)
                + ln_pow(n_t, i + j)
                - (1.0 + (i + j) as f64) * ln_den;
            acc.add(t);
        }
    }
    Ok((acc.ln() - na - nb - ln_factorial(n) - ln_factorial(m)).exp())
}

fn thermal_plus_poisson(signal: f64, noise: f64, n: u64) -> f64 {
    let mut acc = LogSum::default();
    for i in 0..=n {
        acc.add(ln_bose_einstein(signal, i) + ln_poisson(noise, n - i));
    }
    acc.value()
}

/// Arm-a counts: thermal signal plus Poisson dark counts.
pub fn marginal_a(n_t: f64, arms: &TwoArmDetection, n: u64) -> Result<f64> {
    check_inputs(n_t, arms)?;
    Ok(thermal_plus_poisson(arms.signal_means(n_t).0, arms.det_a.dark_rate, n))
}

pub fn marginal_b(n_t: f64, arms: &TwoArmDetection, m: u64) -> Result<f64> {
    check_inputs(n_t, arms)?;
    Ok(thermal_plus_poisson(arms.signal_means(n_t).1, arms.det_b.dark_rate, m))
}

/// Post-selection gain `p_a(N) / Poisson(nu_a)(N)`.
pub fn snr_post(n_t: f64, arms: &TwoArmDetection, n: u64) -> Result<f64> {
    check_inputs(n_t, arms)?;
    let nu = arms.det_a.dark_rate;
    if nu == 0.0 && n > 0 {
        return Err(Error::Saturated(format!("noise-free arm a has no {n}-count background")));
    }
    Ok(marginal_a(n_t, arms, n)? / ln_poisson(nu, n).exp())
}

/// Arm-a count distribution given `m = N` in arm b, summed from the joint law.
fn conditional_a(n_t: f64, arms: &TwoArmDetection, n_b: u64) -> Result<Vec<f64>> {
    check_inputs(n_t, arms)?;
    let (sa, _) = arms.signal_means(n_t);
    let n_max = default_cutoff((n_b as f64 + 1.0) * sa + arms.det_a.dark_rate) as u64;
    let joint: Vec<f64> = (0..=n_max).map(|n| joint_pmf_noisy(n_t, arms, n, n_b)).collect::<Result<_>>()?;
    let z: f64 = joint.iter().sum();
    if z.is_nan() || z <= 0.0 {
        return Err(domain(format!("arm b never records {n_b} counts")));
    }
    Ok(joint.into_iter().map(|p| p / z).collect())
}

/// `<n_a>` given `m = N`, from the joint law.
pub fn conditional_mean_a(n_t: f64, arms: &TwoArmDetection, n_b: u64) -> Result<f64> {
    let p = conditional_a(n_t, arms, n_b)?;
    Ok(p.iter().enumerate().map(|(n, q)| n as f64 * q).sum())
}

/// `<n_a>` given `m = N`, as a mixture over the signal part `j` of the arm-b count:
/// `nu_a + sum_j w_j (j + 1) A / (1 + B)`, `w_j ~ BE(B, j) Poisson(nu_b)(N - j)`.
pub fn conditional_mean_a_mixture(n_t: f64, arms: &TwoArmDetection, n_b: u64) -> Result<f64> {
    check_inputs(n_t, arms)?;
    let (a, b) = arms.signal_means(n_t);
    let w: Vec<f64> = (0..=n_b)
        .map(|j| (ln_bose_einstein(b, j) + ln_poisson(arms.det_b.dark_rate, n_b - j)).exp())
        .collect();
    let z: f64 = w.iter().sum();
    if z.is_nan() || z <= 0.0 {
        return Err(domain(format!("arm b never records {n_b} counts")));
    }
    let signal: f64 = w.iter().enumerate().map(|(j, wj)| wj * (j as f64 + 1.0) * a / (1.0 + b)).sum::<f64>() / z;
    Ok(arms.det_a.dark_rate + signal)
}

/// Photon-subtraction gain: conditional arm-a intensity over the noise-only value `nu_a`.
pub fn snr_sub(n_t: f64, arms: &TwoArmDetection, n_b: u64) -> Result<f64> {
    check_inputs(n_t, arms)?;
    let nu = arms.det_a.dark_rate;
    if nu == 0.0 {
        return Err(Error::Saturated("noise-free arm a has zero background intensity".into()));
    }
    Ok(conditional_mean_a(n_t, arms, n_b)? / nu)
}

/// Single-mode g2 of arm a given `m = N`.
pub fn conditional_g2_a(n_t: f64, arms: &TwoArmDetection, n_b: u64) -> Result<f64> {
    let p = conditional_a(n_t, arms, n_b)?;
    let (mut m1, mut m2) = (0.0, 0.0);
    for (n, q) in p.iter().enumerate() {
        m1 += n as f64 * q;
        m2 += (n * n) as f64 * q;
    }
    if m1 <= 0.0 {
        return Err(Error::UndefinedG2);
    }
    Ok(1.0 + (m2 - m1 * m1 - m1) / (m1 * m1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum AcquisitionMode {
    /// Mean arm-a count.
    Intensity,
    /// Frequency of `n`-count events in arm a.
    Post { n: u64 },
    /// Mean arm-a count given `n` counts in arm b.
    Subtract { n: u64 },
}

impl FromStr for AcquisitionMode {
    type Err = Error;

    /// `intensity`, `post:N` or `subtract:N`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let n = || -> Result<u64> {
            arg.ok_or_else(|| Error::Parse(format!("mode {kind} needs a count, e.g. {kind}:3")))?
                .parse()
                .map_err(|e| Error::Parse(format!("mode {s:?}: {e}")))
        };
        match kind {
            "intensity" if arg.is_none() => Ok(Self::Intensity),
            "post" => Ok(Self::Post { n: n()? }),
            "subtract" => Ok(Self::Subtract { n: n()? }),
            _ => Err(Error::Parse(format!("unknown acquisition mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for AcquisitionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Intensity => write!(f, "intensity"),
            Self::Post { n } => write!(f, "post:{n}"),
            Self::Subtract { n } => write!(f, "subtract:{n}"),
        }
    }
}

fn check_shapes(scene: &SensingScene, q: &SensingMatrix) -> Result<()> {
    if q.cols() != scene.len() {
        return Err(Error::Contract(format!("{} mask columns for {} pixels", q.cols(), scene.len())));
    }
    Ok(())
}

/// Infinite-shot measurement vector from the closed forms.
pub fn acquire_exact(scene: &SensingScene, q: &SensingMatrix, arms: &TwoArmDetection, mode: AcquisitionMode) -> Result<Vec<f64>> {
    check_shapes(scene, q)?;
    arms.validate()?;
    q.project(&scene.s0)
        .into_par_iter()
        .map(|n_t| match mode {
            AcquisitionMode::Intensity => Ok(arms.signal_means(n_t).0 + arms.det_a.dark_rate),
            AcquisitionMode::Post { n } => marginal_a(n_t, arms, n),
            AcquisitionMode::Subtract { n } => conditional_mean_a(n_t, arms, n),
        })
        .collect()
}

/// Sampled measurement vector, `shots` detection rounds per pattern; row `t`
/// draws from stream `t` of `seed`.
pub fn acquire(
    scene: &SensingScene,
    q: &SensingMatrix,
    arms: &TwoArmDetection,
    mode: AcquisitionMode,
    shots: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_shapes(scene, q)?;
    arms.validate()?;
    if shots == 0 {
        return Err(Error::Contract("shots must be >= 1".into()));
    }
    let net = SplitterNetwork::beam_splitter(arms.theta)?;
    let dets = [arms.det_a, arms.det_b];
    q.project(&scene.s0)
        .into_par_iter()
        .enumerate()
        .map(|(t, n_t)| {
            let counts = simulate(SourceSpec::Thermal { mean: n_t }, &net, &dets, shots, RngSeed::new(seed).with_stream(t as u64))?;
            match mode {
                AcquisitionMode::Intensity => Ok(counts.rows().map(|r| r[0] as f64).sum::<f64>() / shots as f64),
                AcquisitionMode::Post { n } => Ok(counts.rows().filter(|r| r[0] == n).count() as f64 / shots as f64),
                AcquisitionMode::Subtract { n } => {
                    let (mut sum, mut hits) = (0u64, 0u64);
                    for r in counts.rows().filter(|r| r[1] == n) {
                        sum += r[0];
                        hits += 1;
                    }
                    if hits == 0 {
                        return Err(domain(format!("pattern {t}: no heralding events with {n} counts in {shots} shots")));
                    }
                    Ok(sum as f64 / hits as f64)
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn noiseless_unsplit_arm_is_thermal() {
        let arms = TwoArmDetection::symmetric(0.0, 1.0, 0.0);
        for n in 0..10 {
            let th = ln_bose_einstein(0.9, n).exp();
            assert!((marginal_a(0.9, &arms, n).unwrap() - th).abs() < 1e-15);
            let sum: f64 = (0..60).map(|m| joint_pmf_noisy(0.9, &arms, n, m).unwrap()).sum();
            assert!((sum - th).abs() < 1e-14);
            assert_eq!(joint_pmf_noisy(0.9, &arms, n, 1).unwrap(), 0.0);
        }
    }

    #[test]
    fn dark_scene_is_poisson_product() {
        let arms = TwoArmDetection::symmetric(0.7, 0.4, 0.5);
        for (n, m) in [(0, 0), (2, 1), (3, 4)] {
            let want = (ln_poisson(0.5, n) + ln_poisson(0.5, m)).exp();
            assert!((joint_pmf_noisy(0.0, &arms, n, m).unwrap() - want).abs() < 1e-15);
        }
        assert!((snr_post(0.0, &arms, 3).unwrap() - 1.0).abs() < 1e-12);
        assert!((snr_sub(0.0, &arms, 2).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_normalizes_and_marginalizes() {
        let arms = TwoArmDetection { theta: 0.6, det_a: DetectorModel { efficiency: 0.7, dark_rate: 1.2 }, det_b: DetectorModel { efficiency: 0.4, dark_rate: 0.3 } };
        let n_t = 2.5;
        let mut total = 0.0;
        for n in 0..60 {
            let row: f64 = (0..60).map(|m| joint_pmf_noisy(n_t, &arms, n, m).unwrap()).sum();
            assert!((row - marginal_a(n_t, &arms, n).unwrap()).abs() < 1e-13);
            total += row;
        }
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn conditional_mean_two_routes_agree() {
        let arms = TwoArmDetection::symmetric(FRAC_PI_4, 0.55, 0.3);
        for n_b in 0..6 {
            let a = conditional_mean_a(0.8, &arms, n_b).unwrap();
            let b = conditional_mean_a_mixture(0.8, &arms, n_b).unwrap();
            assert!((a - b).abs() < 1e-10 * b, "N={n_b}");
        }
    }

    #[test]
    fn saturated_and_zero_probability_cases() {
        let quiet = TwoArmDetection::symmetric(FRAC_PI_4, 0.5, 0.0);
        assert!(matches!(snr_post(0.5, &quiet, 2), Err(Error::Saturated(_))));
        assert!(matches!(snr_sub(0.5, &quiet, 1), Err(Error::Saturated(_))));
        let blind_b = TwoArmDetection { theta: 0.0, det_a: DetectorModel { efficiency: 1.0, dark_rate: 0.2 }, det_b: DetectorModel::ideal() };
        assert!(matches!(snr_sub(0.5, &blind_b, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("intensity".parse::<AcquisitionMode>().unwrap(), AcquisitionMode::Intensity);
        assert_eq!("post:3".parse::<AcquisitionMode>().unwrap(), AcquisitionMode::Post { n: 3 });
        assert_eq!("subtract:1".parse::<AcquisitionMode>().unwrap().to_string(), "subtract:1");
        assert!("post".parse::<AcquisitionMode>().is_err());
        assert!("blur:2".parse::<AcquisitionMode>().is_err());
    }
}
