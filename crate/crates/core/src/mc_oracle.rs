//! Seeded Monte Carlo sampling of light sources through splitters, loss and
//! noisy photon-number-resolving detectors.
//!
//! Work is cut into fixed shards of [`SHARD_SIZE`] trials. Shard `s` draws from
//! its own window of the ChaCha keystream selected by `(seed, stream_id)`, so
//! results are bit-identical regardless of how many threads run the shards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, check_range, domain, Error, Result};
use crate::states::{PhotonNumberDistribution, SourceSpec};

pub const SHARD_SIZE: usize = 1 << 16;

/// Keystream words reserved for one shard.
const SHARD_WORDS_LOG2: u32 = 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        Self { seed, stream_id: 0 }
    }

    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    fn shard_rng(&self, shard: usize) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_word_pos((shard as u128) << SHARD_WORDS_LOG2);
        rng
    }
}

/// Evaluates `f(rng, trial)` for every trial, shard-parallel, in trial order.
pub fn sharded<T, F>(n: usize, seed: RngSeed, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng, usize) -> T + Sync,
{
    let shards = n.div_ceil(SHARD_SIZE);
    let parts: Vec<Vec<T>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = seed.shard_rng(s);
            let end = ((s + 1) * SHARD_SIZE).min(n);
            (s * SHARD_SIZE..end).map(|i| f(&mut rng, i)).collect()
        })
        .collect();
    parts.into_iter().flatten().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitterNetwork {
    routing_probs: Vec<f64>,
}

impl SplitterNetwork {
    /// One output per entry; `1 - sum` is lost.
    pub fn new(routing_probs: Vec<f64>) -> Result<Self> {
        if routing_probs.is_empty() {
            return Err(domain("splitter network needs at least one output"));
        }
        for (i, p) in routing_probs.iter().enumerate() {
            check_range(&format!("routing_probs[{i}]"), *p, 0.0, 1.0)?;
        }
        let sum: f64 = routing_probs.iter().sum();
        if sum > 1.0 + 1e-12 {
            return Err(domain(format!("routing probabilities sum to {sum} > 1")));
        }
        Ok(Self { routing_probs })
    }

    pub fn identity() -> Self {
        Self { routing_probs: vec![1.0] }
    }

    /// Outputs `cos^2 theta` and `sin^2 theta`.
    pub fn beam_splitter(theta: f64) -> Result<Self> {
        check_range("theta", theta, 0.0, std::f64::consts::FRAC_PI_2)?;
        Self::new(vec![theta.cos().powi(2), theta.sin().powi(2)])
    }

    pub fn mode_count(&self) -> usize {
        self.routing_probs.len()
    }

    pub fn routing_probs(&self) -> &[f64] {
        &self.routing_probs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub efficiency: f64,
    pub dark_rate: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_rate: f64) -> Result<Self> {
        let d = Self { efficiency, dark_rate };
        d.validate()?;
        Ok(d)
    }

    pub fn ideal() -> Self {
        Self { efficiency: 1.0, dark_rate: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        check_range("efficiency", self.efficiency, 0.0, 1.0)?;
        check_nonneg("dark_rate", self.dark_rate)
    }
}

enum CountSampler {
    Fixed(u64),
    Geometric(Geometric),
    Poisson(Poisson<f64>),
}

impl CountSampler {
    fn new(source: SourceSpec) -> Result<Self> {
        source.validate()?;
        Ok(match source {
            SourceSpec::Fock { n } => CountSampler::Fixed(n as u64),
            SourceSpec::Thermal { mean: 0.0 } => CountSampler::Fixed(0),
            SourceSpec::Coherent { mean: 0.0 } => CountSampler::Fixed(0),
            SourceSpec::Thermal { mean } => CountSampler::Geometric(
                Geometric::new(1.0 / (1.0 + mean)).map_err(|e| domain(e.to_string()))?,
            ),
            SourceSpec::Coherent { mean } => {
                CountSampler::Poisson(Poisson::new(mean).map_err(|e| domain(e.to_string()))?)
            }
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> u64 {
        match self {
            CountSampler::Fixed(n) => *n,
            CountSampler::Geometric(g) => g.sample(rng),
            CountSampler::Poisson(p) => p.sample(rng) as u64,
        }
    }
}

fn binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("p checked to lie in (0, 1)").sample(rng)
    }
}

fn poisson<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("mean checked positive").sample(rng) as u64
    }
}

/// I.i.d. photon counts: geometric for thermal, Poisson for coherent.
pub fn sample_source(source: SourceSpec, n_samples: usize, seed: RngSeed) -> Result<Vec<u64>> {
    if n_samples == 0 {
        return Err(Error::Contract("n_samples must be >= 1".into()));
    }
    let sampler = CountSampler::new(source)?;
    Ok(sharded(n_samples, seed, |rng, _| sampler.draw(rng)))
}

/// Per-trial detected counts, row-major `trials x modes`.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectedCounts {
    modes: usize,
    data: Vec<u64>,
}

impl DetectedCounts {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn trials(&self) -> usize {
        self.data.len() / self.modes
    }

    pub fn row(&self, trial: usize) -> &[u64] {
        &self.data[trial * self.modes..(trial + 1) * self.modes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.data.chunks(self.modes)
    }

    pub fn mode(&self, mode: usize) -> Vec<u64> {
        self.rows().map(|r| r[mode]).collect()
    }

    /// Audit dump with header `trial,mode,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,mode,count\n");
        for (t, row) in self.rows().enumerate() {
            for (m, c) in row.iter().enumerate() {
                out.push_str(&format!("{t},{m},{c}\n"));
            }
        }
        out
    }
}

/// Multinomial routing, binomial thinning by `efficiency`, then additive Poisson dark counts.
pub fn split_and_detect(
    counts: &[u64],
    network: &SplitterNetwork,
    detectors: &[DetectorModel],
    seed: RngSeed,
) -> Result<DetectedCounts> {
    let modes = network.mode_count();
    if detectors.len() != modes {
        return Err(Error::Contract(format!("{} detectors for {modes} modes", detectors.len())));
    }
    for d in detectors {
        d.validate()?;
    }
    let probs = network.routing_probs();
    let rows = sharded(counts.len(), seed, |rng, i| {
        let mut out = vec![0u64; modes];
        let mut remaining = counts[i];
        let mut mass = 1.0f64;
        for (k, slot) in out.iter_mut().enumerate() {
            let p = if mass > 0.0 { (probs[k] / mass).clamp(0.0, 1.0) } else { 0.0 };
            let routed = binomial(rng, remaining, p);
            remaining -= routed;
            mass -= probs[k];
            *slot = binomial(rng, routed, detectors[k].efficiency) + poisson(rng, detectors[k].dark_rate);
        }
        out
    });
    Ok(DetectedCounts { modes, data: rows.into_iter().flatten().collect() })
}

/// Source sampling followed by [`split_and_detect`] on a second stream.
pub fn simulate(
    source: SourceSpec,
    network: &SplitterNetwork,
    detectors: &[DetectorModel],
    n_samples: usize,
    seed: RngSeed,
) -> Result<DetectedCounts> {
    let counts = sample_source(source, n_samples, seed)?;
    split_and_detect(&counts, network, detectors, seed.with_stream(seed.stream_id ^ (1 << 63)))
}

/// Photon counts of a single mode whose amplitude is the coherent sum of independent
/// complex Gaussian amplitudes with `E|alpha_i|^2 = means[i]`, detected as Poisson(|alpha|^2).
pub fn sample_gaussian_superposition(means: &[f64], n_samples: usize, seed: RngSeed) -> Result<Vec<u64>> {
    for (i, m) in means.iter().enumerate() {
        check_nonneg(&format!("means[{i}]"), *m)?;
    }
    if n_samples == 0 {
        return Err(Error::Contract("n_samples must be >= 1".into()));
    }
    let scales: Vec<f64> = means.iter().map(|m| (m / 2.0).sqrt()).collect();
    Ok(sharded(n_samples, seed, |rng, _| {
        let (mut re, mut im) = (0.0, 0.0);
        for s in &scales {
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            re += s * x;
            im += s * y;
        }
        poisson(rng, re * re + im * im)
    }))
}

/// Empirical pmf and per-bin binomial standard errors.
pub fn estimate_pmf(samples: &[u64]) -> Result<(PhotonNumberDistribution, Vec<f64>)> {
    let hist = histogram(samples)?;
    let n = samples.len() as f64;
    let probs: Vec<f64> = hist.iter().map(|&c| c as f64 / n).collect();
    let se = probs.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok((PhotonNumberDistribution::new(probs, 0.0)?, se))
}

pub fn histogram(samples: &[u64]) -> Result<Vec<u64>> {
    let max = *samples.iter().max().ok_or_else(|| Error::Contract("need at least one sample".into()))?;
    let mut hist = vec![0u64; max as usize + 1];
    for &s in samples {
        hist[s as usize] += 1;
    }
    Ok(hist)
}

/// Counts of `(row[a], row[b])` pairs on `0..=n_max x 0..=m_max`; larger values are dropped.
pub fn joint_histogram(d: &DetectedCounts, a: usize, b: usize, n_max: usize, m_max: usize) -> Vec<Vec<u64>> {
    let mut h = vec![vec![0u64; m_max + 1]; n_max + 1];
    for row in d.rows() {
        let (x, y) = (row[a] as usize, row[b] as usize);
        if x <= n_max && y <= m_max {
            h[x][y] += 1;
        }
    }
    h
}

fn g2_from_hist(hist: &[u64]) -> Result<f64> {
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for (k, &c) in hist.iter().enumerate() {
        let (k, c) = (k as f64, c as f64);
        s0 += c;
        s1 += k * c;
        s2 += k * k * c;
    }
    if s1 <= 0.0 {
        return Err(Error::UndefinedG2);
    }
    let mean = s1 / s0;
    let var = s2 / s0 - mean * mean;
    Ok(1.0 + (var - mean) / (mean * mean))
}

pub fn sample_g2(samples: &[u64]) -> Result<f64> {
    g2_from_hist(&histogram(samples)?)
}

/// Bootstrap standard error of [`sample_g2`], resampling the histogram multinomially.
pub fn bootstrap_g2_se(samples: &[u64], n_boot: usize, seed: RngSeed) -> Result<f64> {
    let hist = histogram(samples)?;
    let n = samples.len() as u64;
    let reps: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = seed.with_stream(seed.stream_id.wrapping_add(b as u64 + 1)).rng();
            let mut remaining = n;
            let mut mass = n as f64;
            let resampled: Vec<u64> = hist
                .iter()
                .map(|&c| {
                    let k = binomial(&mut rng, remaining, if mass > 0.0 { c as f64 / mass } else { 0.0 });
                    remaining -= k;
                    mass -= c as f64;
                    k
                })
                .collect();
            g2_from_hist(&resampled)
        })
        .collect::<Result<_>>()?;
    let m = reps.iter().sum::<f64>() / n_boot as f64;
    let var = reps.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (n_boot as f64 - 1.0);
    Ok(var.sqrt())
}

/// Standardized deviation of an observed bin count from a model probability.
pub fn cell_z(count: u64, trials: u64, p: f64) -> f64 {
    let expected = trials as f64 * p;
    let var = expected * (1.0 - p);
    if var <= 0.0 {
        if (count as f64 - expected).abs() < 0.5 { 0.0 } else { f64::INFINITY }
    } else {
        (count as f64 - expected) / var.sqrt()
    }
}

/// Delta-method standard error of the estimator `P(N,M) / (P_a(N) P_b(M))` from
/// `trials` shots, evaluated at model probabilities.
pub fn gtilde2_model_se(p_joint: f64, p_a: f64, p_b: f64, trials: u64) -> f64 {
    let g = p_joint / (p_a * p_b);
    let var_ln = (1.0 / p_joint - 1.0 / p_a - 1.0 / p_b + 2.0 * g - 1.0) / trials as f64;
    g * var_ln.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fock_samples_are_constant() {
        let s = sample_source(SourceSpec::Fock { n: 2 }, 1000, RngSeed::new(9)).unwrap();
        assert!(s.iter().all(|&c| c == 2));
    }

    #[test]
    fn identical_seeds_reproduce_and_streams_differ() {
        let src = SourceSpec::Thermal { mean: 1.5 };
        let n = SHARD_SIZE * 2 + 17;
        let a = sample_source(src, n, RngSeed::new(3)).unwrap();
        let b = sample_source(src, n, RngSeed::new(3)).unwrap();
        let c = sample_source(src, n, RngSeed::new(3).with_stream(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let d = pool.install(|| sample_source(src, n, RngSeed::new(3)).unwrap());
        assert_eq!(a, d);
    }

    #[test]
    fn zero_samples_is_a_contract_error() {
        assert!(matches!(sample_source(SourceSpec::Fock { n: 1 }, 0, RngSeed::new(1)), Err(Error::Contract(_))));
    }

    #[test]
    fn lossless_identity_routing() {
        let counts = sample_source(SourceSpec::Thermal { mean: 2.0 }, 5000, RngSeed::new(1)).unwrap();
        let out = split_and_detect(&counts, &SplitterNetwork::identity(), &[DetectorModel::ideal()], RngSeed::new(2)).unwrap();
        assert_eq!(out.mode(0), counts);
    }

    #[test]
    fn detector_count_mismatch() {
        let net = SplitterNetwork::beam_splitter(0.3).unwrap();
        let r = split_and_detect(&[1, 2], &net, &[DetectorModel::ideal()], RngSeed::new(1));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn network_validation() {
        assert!(SplitterNetwork::new(vec![0.7, 0.4]).is_err());
        assert!(SplitterNetwork::new(vec![-0.1]).is_err());
        assert!(SplitterNetwork::new(vec![0.5, 0.5 + 1e-13]).is_ok());
        assert!(DetectorModel::new(1.2, 0.0).is_err());
        assert!(DetectorModel::new(0.5, -1.0).is_err());
    }

    #[test]
    fn constant_samples_have_zero_se() {
        let (p, se) = estimate_pmf(&[4; 100]).unwrap();
        assert_eq!(p.get(4), 1.0);
        assert!(se.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn delta_method_matches_independent_case() {
        // Independent cells: Var(ln X) = (1/P - 1/Pa - 1/Pb + 1)/n.
        let (pa, pb) = (0.3, 0.2);
        let se = gtilde2_model_se(pa * pb, pa, pb, 100);
        let expect = ((1.0 / (pa * pb) - 1.0 / pa - 1.0 / pb + 1.0) / 100.0f64).sqrt();
        assert!((se - expect).abs() < 1e-15);
    }
}
