//! Multiphoton wavepacket correlations of thermal light and the plasmonic double slit.
//!
//! Covers the thermal beam-splitter joint statistics and `g~2(N, M)`, far-field
//! intensity and second-order correlation of a two-slit geometry where a
//! plasmonic mode carries part of the H polarization to the second slit, the
//! conditional (post-selected) correlation map, a classical Gaussian-field
//! quadrature that produces the diffraction envelope, and vacuum statistics of
//! the five-splitter pre-/post-selection network.

use std::f64::consts::{FRAC_PI_2, PI};

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, check_range, domain, ensure, Error, Result};
use crate::special::{ln_bose_einstein, ln_choose, ln_factorial, ln_pow};
use crate::states::{default_cutoff, thermal_probs};

/// Thermal light of mean `n_bar` behind a splitter sending `cos^2 theta` to arm a.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSplitterState {
    pub n_bar: f64,
    pub theta: f64,
}

impl ThermalSplitterState {
    pub fn new(n_bar: f64, theta: f64) -> Result<Self> {
        let s = Self { n_bar, theta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg("n_bar", self.n_bar)?;
        check_range("theta", self.theta, 0.0, FRAC_PI_2)
    }

    pub fn mean_a(&self) -> f64 {
        self.n_bar * self.theta.cos().powi(2)
    }

    pub fn mean_b(&self) -> f64 {
        self.n_bar * self.theta.sin().powi(2)
    }
}

/// `C(N+M, N) n^(N+M) / (1+n)^(N+M+1) cos^2N sin^2M`.
pub fn joint_pmf(state: &ThermalSplitterState, n: u64, m: u64) -> f64 {
    let (c2, s2) = (state.theta.cos().powi(2), state.theta.sin().powi(2));
    let t = n + m;
    (ln_choose(t, n) + ln_pow(state.n_bar, t) - (t as f64 + 1.0) * state.n_bar.ln_1p() + ln_pow(c2, n) + ln_pow(s2, m))
        .exp()
}

pub fn marginal_a(state: &ThermalSplitterState, n: u64) -> f64 {
    ln_bose_einstein(state.mean_a(), n).exp()
}

pub fn marginal_b(state: &ThermalSplitterState, m: u64) -> f64 {
    ln_bose_einstein(state.mean_b(), m).exp()
}

/// `C(N+M, N) (1 + n cos^2)^(N+1) (1 + n sin^2)^(M+1) / (1 + n)^(N+M+1)`.
pub fn gtilde2_thermal(state: &ThermalSplitterState, n: u64, m: u64) -> f64 {
    let (na, nb) = (state.mean_a(), state.mean_b());
    (ln_choose(n + m, n) + (n as f64 + 1.0) * na.ln_1p() + (m as f64 + 1.0) * nb.ln_1p()
        - ((n + m) as f64 + 1.0) * state.n_bar.ln_1p())
    .exp()
}

/// Row-major `(N, M, g~2)` for `N, M` in `0..=n_max`.
pub fn gtilde2_table(state: &ThermalSplitterState, n_max: u64) -> Vec<(u64, u64, f64)> {
    let mut out = Vec::with_capacity(((n_max + 1) * (n_max + 1)) as usize);
    for n in 0..=n_max {
        for m in 0..=n_max {
            out.push((n, m, gtilde2_thermal(state, n, m)));
        }
    }
    out
}

/// `sin(x) / x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn default_n_h() -> f64 {
    1.0
}
fn default_psi() -> f64 {
    PI / 4.0
}
fn default_d() -> f64 {
    9.05e-6
}
fn default_w() -> f64 {
    200e-9
}
fn default_distance() -> f64 {
    0.01
}
fn default_wavelength() -> f64 {
    780e-9
}
fn default_gamma() -> f64 {
    1.0
}
fn default_zeta() -> f64 {
    0.9
}

/// Double-slit geometry and coupling parameters. Far-field positions `k` are in
/// metres on the observation plane at distance `distance`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceConfig {
    #[serde(default = "default_n_h")]
    pub n_h: f64,
    #[serde(default)]
    pub n_v: f64,
    /// Plasmonic splitting angle, radians.
    #[serde(default = "default_psi")]
    pub psi: f64,
    /// Slit separation, m.
    #[serde(default = "default_d")]
    pub d: f64,
    /// Slit width, m.
    #[serde(default = "default_w")]
    pub w: f64,
    /// Propagation distance, m.
    #[serde(default = "default_distance")]
    pub distance: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength: f64,
    #[serde(default = "default_gamma")]
    pub gamma_fringe: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
    /// Envelope width; `None` means `4 / beta`.
    #[serde(default)]
    pub sigma_env: Option<f64>,
    #[serde(default)]
    pub k_offset: f64,
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        Self {
            n_h: default_n_h(),
            n_v: 0.0,
            psi: default_psi(),
            d: default_d(),
            w: default_w(),
            distance: default_distance(),
            wavelength: default_wavelength(),
            gamma_fringe: default_gamma(),
            zeta: default_zeta(),
            sigma_env: None,
            k_offset: 0.0,
        }
    }
}

impl InterferenceConfig {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("n_h", self.n_h)?;
        check_nonneg("n_v", self.n_v)?;
        ensure(self.n_h + self.n_v > 0.0, || "n_h + n_v must be positive".into())?;
        for (name, v) in [("d", self.d), ("w", self.w), ("distance", self.distance), ("wavelength", self.wavelength)] {
            ensure(v.is_finite() && v > 0.0, || format!("{name} = {v} must be a positive length"))?;
        }
        check_range("gamma_fringe", self.gamma_fringe, 0.0, 1.0)?;
        check_range("zeta", self.zeta, 0.0, 1.0)?;
        ensure(self.psi.is_finite(), || "psi must be finite".into())?;
        ensure(self.k_offset.is_finite(), || "k_offset must be finite".into())?;
        if let Some(s) = self.sigma_env {
            ensure(s.is_finite() && s > 0.0, || format!("sigma_env = {s} must be positive"))?;
        }
        Ok(())
    }

    /// `pi d / (lambda D)`, per metre.
    pub fn beta(&self) -> f64 {
        PI * self.d / (self.wavelength * self.distance)
    }

    /// `lambda D / (pi w)`, metres.
    pub fn alpha(&self) -> f64 {
        self.wavelength * self.distance / (PI * self.w)
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_env.unwrap_or(4.0 / self.beta())
    }

    /// Input polarization angle with `cos^2 theta_pl = n_H / (n_H + n_V)`.
    pub fn theta_pl(&self) -> f64 {
        (self.n_h / (self.n_h + self.n_v)).sqrt().clamp(0.0, 1.0).acos()
    }

    /// `sinc^2((k1 - k2 + k') / sigma)`.
    pub fn envelope(&self, k1: f64, k2: f64) -> f64 {
        sinc((k1 - k2 + self.k_offset) / self.sigma()).powi(2)
    }
}

/// `sinc^2(k/alpha) (n_V + n_H [1 + gamma sin(2 psi) cos(2 beta k)])`, unnormalized.
pub fn farfield_intensity(cfg: &InterferenceConfig, k: f64) -> f64 {
    sinc(k / cfg.alpha()).powi(2)
        * (cfg.n_v + cfg.n_h * (1.0 + cfg.gamma_fringe * (2.0 * cfg.psi).sin() * (2.0 * cfg.beta() * k).cos()))
}

/// Intensity samples scaled to a peak of 1.
pub fn farfield_profile(cfg: &InterferenceConfig, ks: &[f64]) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    let raw: Vec<f64> = ks.iter().map(|&k| farfield_intensity(cfg, k)).collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    ensure(peak > 0.0, || "intensity vanishes on the whole grid".into())?;
    Ok(ks.iter().zip(raw).map(|(&k, i)| (k, i / peak)).collect())
}

/// Normalized far-field intensity correlation, fringe term dropped from the means.
pub fn farfield_g2(cfg: &InterferenceConfig, k1: f64, k2: f64) -> f64 {
    let (h, v) = (cfg.n_h, cfg.n_v);
    let s2p = (2.0 * cfg.psi).sin().powi(2);
    let sb = (cfg.beta() * (k1 - k2)).sin().powi(2);
    (2.0 * h * h * (1.0 - 0.5 * s2p * sb) + 4.0 * h * v * (1.0 - 0.5 * s2p) + 2.0 * v * v) / ((h + v) * (h + v))
}

/// Joint thermal state seen by detectors at `k1`, `k2`:
/// `n cos^2 theta = <n(k1)>`, `n sin^2 theta = <n(k2)>`.
pub fn state_from_intensities(cfg: &InterferenceConfig, k1: f64, k2: f64) -> ThermalSplitterState {
    let (i1, i2) = (farfield_intensity(cfg, k1), farfield_intensity(cfg, k2));
    ThermalSplitterState { n_bar: i1 + i2, theta: i2.sqrt().atan2(i1.sqrt()) }
}

/// Post-selected correlation with imposed envelope:
/// `sinc^2((dk + k')/sigma) (1 + (1 - zeta sin^2(beta dk)) (g~2_th(n1, n2) - 1))`.
pub fn conditional_g2_map(
    cfg: &InterferenceConfig,
    state: &ThermalSplitterState,
    n1: u64,
    n2: u64,
    k1: f64,
    k2: f64,
) -> Result<f64> {
    cfg.validate()?;
    state.validate()?;
    let weight = 1.0 - cfg.zeta * (cfg.beta() * (k1 - k2)).sin().powi(2);
    Ok(cfg.envelope(k1, k2) * (1.0 + weight * (gtilde2_thermal(state, n1, n2) - 1.0)))
}

/// `sum_{n1,n2} n1 n2 p_a(n1) p_b(n2) g~2(k1,k2 | n1,n2) / (<n_a> <n_b>)` over the
/// default cutoff: the intensity correlation implied by the conditional model.
pub fn conditional_correlation_sum(cfg: &InterferenceConfig, state: &ThermalSplitterState, k1: f64, k2: f64) -> Result<f64> {
    let (ma, mb) = (state.mean_a(), state.mean_b());
    ensure(ma > 0.0 && mb > 0.0, || "both detector means must be positive".into())?;
    let cut = default_cutoff(state.n_bar);
    let pa = thermal_probs(ma, cut);
    let pb = thermal_probs(mb, cut);
    let mut acc = 0.0;
    for (n1, a) in pa.iter().enumerate().skip(1) {
        for (n2, b) in pb.iter().enumerate().skip(1) {
            let g = conditional_g2_map(cfg, state, n1 as u64, n2 as u64, k1, k2)?;
            acc += (n1 * n2) as f64 * a * b * g;
        }
    }
    Ok(acc / (ma * mb))
}

const QUAD_START: usize = 64;
const QUAD_MAX: usize = 1024;
const QUAD_RTOL: f64 = 1e-6;

struct QuadLevel {
    /// Node offsets from the slit centre.
    u: Vec<f64>,
    /// `w_i w_l exp(-(u_i - u_l)^2 / s)`, row-major.
    kernel: Vec<f64>,
}

/// Classical partially coherent field through the two slits, with a Gaussian
/// mutual coherence `exp(-|x - x'|^2 / s)` (`s` in m^2), evaluated by
/// Gauss-Legendre quadrature over each slit.
pub struct EnvelopeOracle {
    centres: [f64; 2],
    weights: [f64; 2],
    /// Far-field position to transverse wavenumber, `2 pi / (lambda D)`.
    k_to_q: f64,
    levels: Vec<QuadLevel>,
}

impl EnvelopeOracle {
    pub fn new(cfg: &InterferenceConfig, coherence_s: f64) -> Result<Self> {
        cfg.validate()?;
        ensure(coherence_s.is_finite() && coherence_s > 0.0, || format!("coherence s = {coherence_s} must be positive"))?;
        let mut levels = Vec::new();
        let mut order = QUAD_START;
        while order <= QUAD_MAX {
            let rule = GaussLegendre::new(order).map_err(|e| domain(e.to_string()))?;
            let half = cfg.w / 2.0;
            let (u, wt): (Vec<f64>, Vec<f64>) = rule.iter().map(|(x, w)| (x * half, w * half)).unzip();
            let mut kernel = vec![0.0; order * order];
            for i in 0..order {
                for l in 0..order {
                    kernel[i * order + l] = wt[i] * wt[l] * (-(u[i] - u[l]).powi(2) / coherence_s).exp();
                }
            }
            levels.push(QuadLevel { u, kernel });
            order *= 2;
        }
        let (ct, st) = (cfg.theta_pl().cos().powi(2), cfg.theta_pl().sin().powi(2));
        let (cp, sp) = (cfg.psi.cos().powi(2), cfg.psi.sin().powi(2));
        Ok(Self {
            centres: [cfg.d / 2.0, -cfg.d / 2.0],
            weights: [ct * cp + st, ct * sp],
            k_to_q: 2.0 * PI / (cfg.wavelength * cfg.distance),
            levels,
        })
    }

    /// `<E*(k1) E(k2)>` as `(re, im)` at one quadrature level.
    fn correlation(&self, level: &QuadLevel, k1: f64, k2: f64) -> (f64, f64) {
        let (q1, q2) = (k1 * self.k_to_q, k2 * self.k_to_q);
        let n = level.u.len();
        let (mut re, mut im) = (0.0, 0.0);
        for (c, weight) in self.centres.iter().zip(self.weights) {
            let b: Vec<(f64, f64)> = level.u.iter().map(|u| (-q2 * (c + u)).sin_cos()).collect();
            let (mut sr, mut si) = (0.0, 0.0);
            for i in 0..n {
                let row = &level.kernel[i * n..(i + 1) * n];
                let (mut rr, mut ri) = (0.0, 0.0);
                for (kv, (bs, bc)) in row.iter().zip(&b) {
                    rr += kv * bc;
                    ri += kv * bs;
                }
                let (ps, pc) = (q1 * (c + level.u[i])).sin_cos();
                sr += pc * rr - ps * ri;
                si += pc * ri + ps * rr;
            }
            re += weight * sr;
            im += weight * si;
        }
        (re, im)
    }

    fn g2_at(&self, level: &QuadLevel, k1: f64, k2: f64) -> f64 {
        let (r, i) = self.correlation(level, k1, k2);
        let g11 = self.correlation(level, k1, k1).0;
        let g22 = self.correlation(level, k2, k2).0;
        1.0 + (r * r + i * i) / (g11 * g22)
    }

    /// `1 + |G(k1,k2)|^2 / (G(k1,k1) G(k2,k2))`, doubling the order until stable.
    pub fn g2(&self, k1: f64, k2: f64) -> Result<f64> {
        let mut prev = self.g2_at(&self.levels[0], k1, k2);
        for level in &self.levels[1..] {
            let cur = self.g2_at(level, k1, k2);
            if ((cur - prev) / cur).abs() < QUAD_RTOL {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(Error::Accuracy(format!(
            "envelope quadrature not stable to {QUAD_RTOL} at order {QUAD_MAX} (k1 = {k1}, k2 = {k2})"
        )))
    }
}

pub fn classical_envelope_oracle(cfg: &InterferenceConfig, coherence_s: f64, k1: f64, k2: f64) -> Result<f64> {
    EnvelopeOracle::new(cfg, coherence_s)?.g2(k1, k2)
}

/// Fringe frequency `beta` recovered from the spacing of the oracle's maxima in
/// `g2(dk, 0)` for `dk` in `[0, span]`.
pub fn estimate_fringe_beta(oracle: &EnvelopeOracle, span: f64, points: usize) -> Result<f64> {
    ensure(points >= 8 && span > 0.0, || "need a positive span and at least 8 points".into())?;
    let h = span / (points - 1) as f64;
    let g: Vec<f64> = (0..points).map(|i| oracle.g2(i as f64 * h, 0.0)).collect::<Result<_>>()?;
    let mut peaks = vec![0.0];
    for i in 1..points - 1 {
        if g[i] > g[i - 1] && g[i] >= g[i + 1] {
            let denom = g[i - 1] - 2.0 * g[i] + g[i + 1];
            let shift = if denom != 0.0 { 0.5 * (g[i - 1] - g[i + 1]) / denom } else { 0.0 };
            peaks.push((i as f64 + shift) * h);
        }
    }
    ensure(peaks.len() >= 3, || format!("only {} fringe maxima in span", peaks.len()))?;
    let spacing = (peaks[peaks.len() - 1] - peaks[0]) / (peaks.len() - 1) as f64;
    // cos(2 beta dk) repeats every pi / beta.
    Ok(PI / spacing)
}

/// Five-splitter model of one pre-selection arm, two post-selection arms and
/// their losses. Angles in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreselectionNetwork {
    pub angles: [f64; 5],
    pub n_bar: f64,
}

impl PreselectionNetwork {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("n_bar", self.n_bar)?;
        for (i, a) in self.angles.iter().enumerate() {
            check_range(&format!("angles[{i}]"), *a, 0.0, FRAC_PI_2)?;
        }
        Ok(())
    }

    /// Probabilities of the six outcomes; modes 1-3 are detectors, 4-6 losses.
    pub fn route_probs(&self) -> [f64; 6] {
        let [t1, t2, t3, t4, t5] = self.angles;
        let (s, c) = (f64::sin, f64::cos);
        [
            (s(t1) * c(t4)).powi(2),
            (c(t1) * s(t2) * c(t5)).powi(2),
            (c(t1) * c(t2) * c(t3)).powi(2),
            (s(t1) * s(t4)).powi(2),
            (c(t1) * s(t2) * s(t5)).powi(2),
            (c(t1) * c(t2) * s(t3)).powi(2),
        ]
    }

    pub fn detected_fraction(&self) -> f64 {
        self.route_probs()[..3].iter().sum()
    }

    pub fn lost_fraction(&self) -> f64 {
        self.route_probs()[3..].iter().sum()
    }
}

/// `sum_k C(n,k) Gamma(n + 1/2 - k) Gamma(1/2 + k) / pi`, which equals `n!`.
pub fn gamma_sum(n: u64) -> f64 {
    (0..=n)
        .map(|k| libm::tgamma(n as f64 + 0.5 - k as f64) * libm::tgamma(0.5 + k as f64) * ln_choose(n, k).exp())
        .sum::<f64>()
        / PI
}

/// Six-mode outcome probability in its Gamma-sum form.
pub fn preselection_distribution_gamma(net: &PreselectionNetwork, counts: [u64; 6]) -> Result<f64> {
    net.validate()?;
    let n: u64 = counts.iter().sum();
    let p = net.route_probs();
    let mut ln = ln_bose_einstein(net.n_bar, n);
    for (c, pi) in counts.iter().zip(p) {
        ln += ln_pow(pi, *c) - ln_factorial(*c);
    }
    Ok(gamma_sum(n) * ln.exp())
}

/// Six-mode outcome probability as Bose-Einstein(n) times multinomial routing.
pub fn preselection_distribution(net: &PreselectionNetwork, counts: [u64; 6]) -> Result<f64> {
    net.validate()?;
    let n: u64 = counts.iter().sum();
    let p = net.route_probs();
    let mut ln = ln_bose_einstein(net.n_bar, n) + ln_factorial(n);
    for (c, pi) in counts.iter().zip(p) {
        ln += ln_pow(pi, *c) - ln_factorial(*c);
    }
    Ok(ln.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VacuumRow {
    pub input_photons: u64,
    /// All three detectors empty with `input_photons` photons lost.
    pub unconditional: f64,
    /// The same, given that all three detectors are empty.
    pub conditional: f64,
}

/// `P(n1 = n2 = n3 = 0) = 1 / (1 + n_bar * detected_fraction)`.
pub fn detector_vacuum_probability(net: &PreselectionNetwork) -> f64 {
    1.0 / (1.0 + net.n_bar * net.detected_fraction())
}

/// Vacuum-event probabilities per number of photons entering the network.
pub fn vacuum_table(net: &PreselectionNetwork, k_max: u64) -> Result<Vec<VacuumRow>> {
    net.validate()?;
    let p000 = detector_vacuum_probability(net);
    (0..=k_max)
        .map(|k| {
            let mut unconditional = 0.0;
            for n4 in 0..=k {
                for n5 in 0..=k - n4 {
                    unconditional += preselection_distribution(net, [0, 0, 0, n4, n5, k - n4 - n5])?;
                }
            }
            Ok(VacuumRow { input_photons: k, unconditional, conditional: unconditional / p000 })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn balanced(n_bar: f64) -> ThermalSplitterState {
        ThermalSplitterState::new(n_bar, FRAC_PI_4).unwrap()
    }

    #[test]
    fn joint_closed_form_values() {
        let s = balanced(1.0);
        assert!((joint_pmf(&s, 0, 0) - 0.5).abs() < 1e-15);
        assert!((joint_pmf(&s, 1, 0) - 0.125).abs() < 1e-15);
        assert!((joint_pmf(&s, 3, 1) - joint_pmf(&s, 1, 3)).abs() < 1e-16);
        let s = ThermalSplitterState::new(2.5, 0.3).unwrap();
        assert!((joint_pmf(&s, 0, 0) - 1.0 / 3.5).abs() < 1e-15);
    }

    #[test]
    fn gtilde_closed_form_values() {
        let s = balanced(1.0);
        assert!((gtilde2_thermal(&s, 0, 0) - 1.125).abs() < 1e-14);
        assert!((gtilde2_thermal(&s, 1, 1) - 1.265625).abs() < 1e-14);
        assert!(gtilde2_thermal(&s, 0, 5) < 1.0);
    }

    #[test]
    fn gtilde_is_joint_over_marginals() {
        let s = ThermalSplitterState::new(1.7, 0.4).unwrap();
        for n in 0..8 {
            for m in 0..8 {
                let ratio = joint_pmf(&s, n, m) / (marginal_a(&s, n) * marginal_b(&s, m));
                assert!((ratio - gtilde2_thermal(&s, n, m)).abs() < 1e-12 * ratio.max(1.0));
            }
        }
    }

    #[test]
    fn marginals_are_thermal() {
        let s = ThermalSplitterState::new(2.0, 0.6).unwrap();
        for n in 0..10 {
            let sum: f64 = (0..400).map(|m| joint_pmf(&s, n, m)).sum();
            assert!((sum - marginal_a(&s, n)).abs() < 1e-12);
        }
    }

    #[test]
    fn farfield_limits() {
        let mut cfg = InterferenceConfig { psi: 0.0, ..Default::default() };
        assert_eq!(farfield_g2(&cfg, 1e-4, 7e-4), 2.0);
        let ks: Vec<f64> = (-200..=200).map(|i| i as f64 * 1e-6).collect();
        let prof = farfield_profile(&cfg, &ks).unwrap();
        assert!(crate::states::visibility(&prof).unwrap() < 1e-3);
        cfg.psi = FRAC_PI_4;
        let quarter = PI / (2.0 * cfg.beta());
        assert!((farfield_g2(&cfg, quarter, 0.0) - 1.0).abs() < 1e-12);
        assert_eq!(farfield_g2(&cfg, 3e-4, 3e-4), 2.0);
    }

    #[test]
    fn visibility_of_partial_fringes() {
        let cfg = InterferenceConfig { n_h: 2.0, n_v: 1.0, psi: 0.3, gamma_fringe: 0.8, ..Default::default() };
        let period = PI / cfg.beta();
        let ks: Vec<f64> = (0..=4000).map(|i| i as f64 * period / 2000.0).collect();
        let raw: Vec<(f64, f64)> = ks.iter().map(|&k| (k, farfield_intensity(&cfg, k))).collect();
        let expect = 0.8 * 2.0 * (0.6f64).sin() / 3.0;
        assert!((crate::states::visibility(&raw).unwrap() - expect).abs() < 2e-3);
    }

    #[test]
    fn conditional_map_without_modulation_is_gtilde() {
        let cfg = InterferenceConfig { zeta: 0.0, sigma_env: Some(1e9), ..Default::default() };
        let s = balanced(1.3);
        for (k1, k2) in [(0.0, 3e-4), (1e-3, -2e-4)] {
            let v = conditional_g2_map(&cfg, &s, 2, 1, k1, k2).unwrap();
            assert!((v - gtilde2_thermal(&s, 2, 1)).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_sum_is_factorial() {
        let mut f = 1.0f64;
        for n in 0..=20u64 {
            if n > 0 {
                f *= n as f64;
            }
            assert!(((gamma_sum(n) - f) / f).abs() < 1e-9, "n = {n}");
        }
    }

    #[test]
    fn preselection_forms_agree_and_vacuum_is_enhanced() {
        let net = PreselectionNetwork { angles: [0.4, 0.7, 0.3, 1.1, 0.9], n_bar: 1.2 };
        let probs = net.route_probs();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for c in [[0, 0, 0, 0, 0, 0], [1, 0, 2, 0, 1, 0], [3, 1, 0, 2, 0, 4]] {
            let a = preselection_distribution(&net, c).unwrap();
            let b = preselection_distribution_gamma(&net, c).unwrap();
            assert!(((a - b) / a).abs() < 1e-9);
        }
        assert!((preselection_distribution(&net, [0; 6]).unwrap() - 1.0 / 2.2).abs() < 1e-15);
        let t = vacuum_table(&net, 3).unwrap();
        assert!(t[0].conditional > t[0].unconditional);
        let total: f64 = vacuum_table(&net, 60).unwrap().iter().map(|r| r.unconditional).sum();
        assert!((total - detector_vacuum_probability(&net)).abs() < 1e-12);
    }
}
