use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::{Path, PathBuf};

use anyhow::Context as _;
use clap::{Args, Subcommand};
use photostat::imaging::{
    acquire, acquire_exact, cs_reconstruct, image_snr, joint_pmf_noisy, phantom, AcquisitionMode, CsConfig, SensingMatrix, SensingScene,
    TwoArmDetection,
};
use photostat::io::{mask_from_csv, mask_to_csv, read_pgm, write_pgm, GrayImage};
use photostat::mc_oracle::{
    bootstrap_g2_se, cell_z, estimate_pmf, histogram, joint_histogram, sample_g2, sample_gaussian_superposition, sample_source, simulate,
    DetectorModel, RngSeed, SplitterNetwork,
};
use photostat::plasmon_scatter::{detected_pmf, g2_vs_angle, two_mode_g2, ScatterConfig};
use photostat::sensing::{conditional_state_pmf, sensing_sweep, snr_unconditional, subtraction_table, SensorConfig};
use photostat::states::{g2_from_pmf, pmf, visibility, CutoffPolicy, SourceSpec};
use photostat::wavepacket::{
    conditional_g2_map, estimate_fringe_beta, farfield_g2, farfield_profile, gamma_sum, gtilde2_table, joint_pmf, state_from_intensities,
    vacuum_table, EnvelopeOracle, InterferenceConfig, PreselectionNetwork, ThermalSplitterState,
};
use photostat::PhotonNumberDistribution;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{config_error, Format, RunFile};
use crate::table::{Cell, Table};

/// Keystream reserved for mask generation; acquisition uses streams `0..M` and
/// their high-bit partners.
const MASK_STREAM: u64 = 1 << 62;
const Z_MAX: f64 = 3.0;
const MIN_EXPECTED: f64 = 100.0;

pub struct Ctx {
    pub out: PathBuf,
    pub seed: u64,
    pub format: Format,
}

pub struct Outcome {
    pub config: Value,
    pub artifacts: Vec<String>,
    pub summary: Value,
    /// Set when the run finished but an accuracy check did not hold.
    pub failure: Option<String>,
}

impl Ctx {
    fn write(&self, name: &str, contents: &str, artifacts: &mut Vec<String>) -> anyhow::Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        artifacts.push(name.to_owned());
        Ok(())
    }

    fn write_table(&self, stem: &str, table: &Table, artifacts: &mut Vec<String>) -> anyhow::Result<()> {
        let body = match self.format {
            Format::Csv => table.to_csv(),
            Format::Json => table.to_json(),
        };
        self.write(&format!("{stem}.{}", self.format.ext()), &body, artifacts)
    }

    fn write_pgm(&self, name: &str, img: &GrayImage, artifacts: &mut Vec<String>) -> anyhow::Result<()> {
        write_pgm(&self.out.join(name), img, true)?;
        artifacts.push(name.to_owned());
        Ok(())
    }
}

fn outcome<P: Serialize>(params: &P, artifacts: Vec<String>, summary: Value) -> anyhow::Result<Outcome> {
    Ok(Outcome { config: serde_json::to_value(params)?, artifacts, summary, failure: None })
}

fn pmf_table(d: &PhotonNumberDistribution) -> Table {
    let mut t = Table::new(&["n", "prob"]);
    for (n, p) in d.probs().iter().enumerate() {
        t.push(vec![(n as u64).into(), (*p).into()]);
    }
    t
}

/// `start, start + step, ...` up to `stop` inclusive.
fn grid(start: f64, stop: f64, step: f64) -> anyhow::Result<Vec<f64>> {
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(config_error(format!("grid {start}..{stop} step {step} is empty or invalid")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| (start + i as f64 * step).min(stop)).collect())
}

fn linspace(lo: f64, hi: f64, points: usize) -> anyhow::Result<Vec<f64>> {
    if points < 2 || lo.is_nan() || hi.is_nan() || hi <= lo {
        return Err(config_error(format!("need at least 2 points on a non-empty range, got {points} on [{lo}, {hi}]")));
    }
    Ok((0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect())
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// g2 of the scattered field against polarization angle.
    G2Scan(G2ScanArgs),
    /// Detected photon-number distribution after the plasmonic structure.
    Scatter(ScatterArgs),
    /// Far-field correlation map, optionally conditioned on photon numbers.
    CoherenceMap(CoherenceArgs),
    /// Normalized joint photon-number correlation table of split thermal light.
    GtildeTable(GtildeArgs),
    /// Classical partially coherent double-slit correlation and its fringe frequency.
    EnvelopeOracle(EnvelopeArgs),
    /// Vacuum statistics of the pre-selection splitter network.
    Preselect(PreselectArgs),
    /// Conditional sensing SNR and phase uncertainty against phase.
    SensingSnr(SensingArgs),
    /// Plasmon-subtraction success probabilities against tabulated values.
    SubtractTable(SubtractArgs),
    /// Single-pixel acquisition of a scene, with optional reconstruction.
    ImageSim(ImageArgs),
    /// Compressive reconstruction from a scene image or recorded measurements.
    Reconstruct(ReconstructArgs),
    /// Closed forms against the Monte Carlo pipeline.
    OracleCheck(OracleArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::G2Scan(_) => "g2-scan",
            Command::Scatter(_) => "scatter",
            Command::CoherenceMap(_) => "coherence-map",
            Command::GtildeTable(_) => "gtilde-table",
            Command::EnvelopeOracle(_) => "envelope-oracle",
            Command::Preselect(_) => "preselect",
            Command::SensingSnr(_) => "sensing-snr",
            Command::SubtractTable(_) => "subtract-table",
            Command::ImageSim(_) => "image-sim",
            Command::Reconstruct(_) => "reconstruct",
            Command::OracleCheck(_) => "oracle-check",
        }
    }

    pub fn run(&self, rf: &RunFile, ctx: &Ctx) -> anyhow::Result<Outcome> {
        match self {
            Command::G2Scan(a) => g2_scan(a, rf.params()?, ctx),
            Command::Scatter(a) => scatter(a, rf.params()?, ctx),
            Command::CoherenceMap(a) => coherence_map(a, rf.params()?, ctx),
            Command::GtildeTable(a) => gtilde_table(a, rf.params()?, ctx),
            Command::EnvelopeOracle(a) => envelope_oracle(a, rf.params()?, ctx),
            Command::Preselect(a) => preselect(a, rf.params()?, ctx),
            Command::SensingSnr(a) => sensing_snr(a, rf.params()?, ctx),
            Command::SubtractTable(a) => subtract_table(a, rf.params()?, ctx),
            Command::ImageSim(a) => image_sim(a, rf.params()?, ctx),
            Command::Reconstruct(a) => reconstruct(a, rf.params()?, ctx),
            Command::OracleCheck(a) => oracle_check(a, rf.params()?, ctx),
        }
    }
}

// ---- g2-scan ----

#[derive(Args, Debug)]
pub struct G2ScanArgs {
    #[arg(long)]
    n_s: Option<f64>,
    #[arg(long, conflicts_with = "n_pl_ratio")]
    n_pl: Option<f64>,
    /// Plasmon mean as a multiple of `n_s`.
    #[arg(long)]
    n_pl_ratio: Option<f64>,
    #[arg(long)]
    theta_step_deg: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct G2ScanParams {
    n_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pl: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_pl_ratio: Option<f64>,
    theta_start_deg: f64,
    theta_stop_deg: f64,
    theta_step_deg: f64,
}

impl Default for G2ScanParams {
    fn default() -> Self {
        Self { n_s: 3.0, n_pl: None, n_pl_ratio: None, theta_start_deg: 0.0, theta_stop_deg: 90.0, theta_step_deg: 5.0 }
    }
}

fn g2_scan(a: &G2ScanArgs, mut p: G2ScanParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    if let Some(v) = a.n_s {
        p.n_s = v;
    }
    if let Some(v) = a.n_pl {
        p.n_pl = Some(v);
        p.n_pl_ratio = None;
    }
    if let Some(v) = a.n_pl_ratio {
        p.n_pl_ratio = Some(v);
        p.n_pl = None;
    }
    if let Some(v) = a.theta_step_deg {
        p.theta_step_deg = v;
    }
    let n_pl = match (p.n_pl, p.n_pl_ratio) {
        (Some(_), Some(_)) => return Err(config_error("set either n_pl or n_pl_ratio, not both")),
        (Some(v), None) => v,
        (None, Some(r)) => r * p.n_s,
        (None, None) => 1.0,
    };
    let thetas = grid(p.theta_start_deg, p.theta_stop_deg, p.theta_step_deg)?;
    let curve = g2_vs_angle(p.n_s, n_pl, &thetas)?;
    let mut t = Table::new(&["theta_deg", "g2"]);
    for (theta, g) in &curve {
        t.push(vec![(*theta).into(), (*g).into()]);
    }
    let mut art = Vec::new();
    ctx.write_table("g2_scan", &t, &mut art)?;
    let (lo, hi) = curve.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), (_, g)| (lo.min(*g), hi.max(*g)));
    outcome(&p, art, json!({ "n_pl": n_pl, "g2_min": lo, "g2_max": hi, "g2_last": curve.last().map(|c| c.1) }))
}

// ---- scatter ----

#[derive(Args, Debug)]
pub struct ScatterArgs {
    #[arg(long)]
    n_s: Option<f64>,
    #[arg(long)]
    n_pl: Option<f64>,
    #[arg(long)]
    theta_deg: Option<f64>,
    /// Monte Carlo shots for the cross-check; 0 skips it.
    #[arg(long)]
    shots: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterParams {
    n_s: f64,
    n_pl: f64,
    theta_deg: f64,
    shots: usize,
}

impl Default for ScatterParams {
    fn default() -> Self {
        Self { n_s: 2.0, n_pl: 1.0, theta_deg: 45.0, shots: 200_000 }
    }
}

fn scatter(a: &ScatterArgs, mut p: ScatterParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    p.n_s = a.n_s.unwrap_or(p.n_s);
    p.n_pl = a.n_pl.unwrap_or(p.n_pl);
    p.theta_deg = a.theta_deg.unwrap_or(p.theta_deg);
    p.shots = a.shots.unwrap_or(p.shots);
    let cfg = ScatterConfig { n_s: p.n_s, n_pl: p.n_pl, theta_deg: p.theta_deg };
    let d = detected_pmf(&cfg)?;
    let mut art = Vec::new();
    ctx.write_table("pmf", &pmf_table(&d), &mut art)?;
    let mut summary = json!({
        "a": cfg.a(), "b": cfg.b(), "mean": d.mean(), "tail_bound": d.tail_bound(),
        "g2": g2_from_pmf(&d)?, "g2_two_mode": two_mode_g2(cfg.a(), cfg.b()),
    });
    if p.shots > 0 {
        let seed = RngSeed::new(ctx.seed);
        let mixed = sample_gaussian_superposition(&[cfg.n_pl, cfg.eta() * cfg.n_s], p.shots, seed)?;
        let other = sample_source(SourceSpec::Thermal { mean: cfg.b() }, p.shots, seed.with_stream(1))?;
        let total: Vec<u64> = mixed.iter().zip(&other).map(|(x, y)| x + y).collect();
        let (est, se) = estimate_pmf(&total)?;
        let mut t = Table::new(&["n", "prob", "se"]);
        for (n, (q, s)) in est.probs().iter().zip(&se).enumerate() {
            t.push(vec![(n as u64).into(), (*q).into(), (*s).into()]);
        }
        ctx.write_table("pmf_mc", &t, &mut art)?;
        summary["mc_g2"] = json!(sample_g2(&total)?);
        summary["mc_g2_se"] = json!(bootstrap_g2_se(&total, 200, seed.with_stream(2))?);
    }
    outcome(&p, art, summary)
}

// ---- coherence-map ----

#[derive(Args, Debug)]
pub struct CoherenceArgs {
    /// Condition on `n1` photons at the first detector (requires --n2).
    #[arg(long, requires = "n2")]
    n1: Option<u64>,
    #[arg(long, requires = "n1")]
    n2: Option<u64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceParams {
    geometry: InterferenceConfig,
    /// Far-field positions, m.
    k_min: f64,
    k_max: f64,
    points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    n1: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n2: Option<u64>,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        Self { geometry: InterferenceConfig::default(), k_min: -2e-3, k_max: 2e-3, points: 81, n1: None, n2: None }
    }
}

fn coherence_map(a: &CoherenceArgs, mut p: CoherenceParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    if a.n1.is_some() {
        (p.n1, p.n2) = (a.n1, a.n2);
    }
    p.points = a.points.unwrap_or(p.points);
    let g = p.geometry;
    g.validate()?;
    let ks = linspace(p.k_min, p.k_max, p.points)?;
    let cond = match (p.n1, p.n2) {
        (Some(x), Some(y)) => Some((x, y)),
        (None, None) => None,
        _ => return Err(config_error("n1 and n2 must be given together")),
    };
    let mut t = Table::new(&["k1", "k2", "value"]);
    for &k1 in &ks {
        for &k2 in &ks {
            let v = match cond {
                Some((n1, n2)) => conditional_g2_map(&g, &state_from_intensities(&g, k1, k2), n1, n2, k1, k2)?,
                None => farfield_g2(&g, k1, k2),
            };
            t.push(vec![k1.into(), k2.into(), v.into()]);
        }
    }
    let prof = farfield_profile(&g, &ks)?;
    let mut pt = Table::new(&["k", "intensity"]);
    for (k, i) in &prof {
        pt.push(vec![(*k).into(), (*i).into()]);
    }
    let mut art = Vec::new();
    ctx.write_table("coherence_map", &t, &mut art)?;
    ctx.write_table("profile", &pt, &mut art)?;
    let summary = json!({ "beta": g.beta(), "alpha": g.alpha(), "sigma": g.sigma(), "visibility": visibility(&prof)? });
    outcome(&p, art, summary)
}

// ---- gtilde-table ----

#[derive(Args, Debug)]
pub struct GtildeArgs {
    #[arg(long)]
    n_bar: Option<f64>,
    /// Splitter angle, radians.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    n_max: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GtildeParams {
    n_bar: f64,
    theta: f64,
    n_max: u64,
}

impl Default for GtildeParams {
    fn default() -> Self {
        Self { n_bar: 1.0, theta: FRAC_PI_4, n_max: 5 }
    }
}

fn gtilde_table(a: &GtildeArgs, mut p: GtildeParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    p.n_bar = a.n_bar.unwrap_or(p.n_bar);
    p.theta = a.theta.unwrap_or(p.theta);
    p.n_max = a.n_max.unwrap_or(p.n_max);
    let state = ThermalSplitterState::new(p.n_bar, p.theta)?;
    let rows = gtilde2_table(&state, p.n_max);
    let mut t = Table::new(&["N", "M", "gtilde2"]);
    for (n, m, g) in &rows {
        t.push(vec![(*n).into(), (*m).into(), (*g).into()]);
    }
    let mut art = Vec::new();
    ctx.write_table("gtilde_table", &t, &mut art)?;
    let above = rows.iter().filter(|r| r.2 > 1.0).count();
    outcome(&p, art, json!({ "cells": rows.len(), "cells_above_one": above }))
}

// ---- envelope-oracle ----

#[derive(Args, Debug)]
pub struct EnvelopeArgs {
    /// Transverse coherence area `s`, m^2.
    #[arg(long)]
    coherence_s: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeParams {
    geometry: InterferenceConfig,
    /// Defaults to `(w / 20)^2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    coherence_s: Option<f64>,
    /// Scan length in fringe periods.
    periods: f64,
    points: usize,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self { geometry: InterferenceConfig::default(), coherence_s: None, periods: 5.0, points: 401 }
    }
}

fn envelope_oracle(a: &EnvelopeArgs, mut p: EnvelopeParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    if a.coherence_s.is_some() {
        p.coherence_s = a.coherence_s;
    }
    p.points = a.points.unwrap_or(p.points);
    let g = p.geometry;
    let s = p.coherence_s.unwrap_or((g.w / 20.0).powi(2));
    p.coherence_s = Some(s);
    let oracle = EnvelopeOracle::new(&g, s)?;
    let span = p.periods * PI / g.beta();
    let dks = linspace(0.0, span, p.points)?;
    let mut t = Table::new(&["dk", "g2"]);
    for &dk in &dks {
        t.push(vec![dk.into(), oracle.g2(dk, 0.0)?.into()]);
    }
    let beta_hat = estimate_fringe_beta(&oracle, span, p.points)?;
    let mut art = Vec::new();
    ctx.write_table("envelope_oracle", &t, &mut art)?;
    let summary = json!({ "beta": g.beta(), "beta_estimate": beta_hat, "beta_rel_err": (beta_hat - g.beta()).abs() / g.beta() });
    outcome(&p, art, summary)
}

// ---- preselect ----

#[derive(Args, Debug)]
pub struct PreselectArgs {
    #[arg(long)]
    n_bar: Option<f64>,
    #[arg(long)]
    k_max: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreselectParams {
    /// Splitter angles, radians.
    angles: [f64; 5],
    n_bar: f64,
    k_max: u64,
}

impl Default for PreselectParams {
    fn default() -> Self {
        Self { angles: [0.4, 0.7, 0.3, 1.1, 0.9], n_bar: 1.0, k_max: 5 }
    }
}

fn preselect(a: &PreselectArgs, mut p: PreselectParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    p.n_bar = a.n_bar.unwrap_or(p.n_bar);
    p.k_max = a.k_max.unwrap_or(p.k_max);
    let net = PreselectionNetwork { angles: p.angles, n_bar: p.n_bar };
    let rows = vacuum_table(&net, p.k_max)?;
    let mut t = Table::new(&["input_photons", "unconditional", "conditional"]);
    for r in &rows {
        t.push(vec![r.input_photons.into(), r.unconditional.into(), r.conditional.into()]);
    }
    let mut art = Vec::new();
    ctx.write_table("vacuum_table", &t, &mut art)?;
    let mut fact = 1.0f64;
    let mut gamma_err = 0.0f64;
    for n in 0..=20u64 {
        if n > 0 {
            fact *= n as f64;
        }
        gamma_err = gamma_err.max(((gamma_sum(n) - fact) / fact).abs());
    }
    let summary = json!({
        "route_probs": net.route_probs(),
        "detected_fraction": net.detected_fraction(),
        "lost_fraction": net.lost_fraction(),
        "gamma_sum_max_rel_err": gamma_err,
    });
    outcome(&p, art, summary)
}

// ---- sensing-snr, subtract-table ----

fn resolve_sensor(preset_flag: &Option<String>, preset: &mut Option<String>, sensor: &mut Option<SensorConfig>) -> anyhow::Result<SensorConfig> {
    if let Some(name) = preset_flag {
        *preset = Some(name.clone());
        *sensor = None;
    }
    if let Some(s) = sensor {
        return Ok(*s);
    }
    let name = preset.get_or_insert_with(|| "thesis-ch5".to_owned());
    let cfg = SensorConfig::preset(name).ok_or_else(|| config_error(format!("unknown preset {name:?}; known: thesis-ch5, thesis-ch5-transmission")))?;
    *sensor = Some(cfg);
    Ok(cfg)
}

#[derive(Args, Debug)]
pub struct SensingArgs {
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    l_max: Option<u64>,
    #[arg(long)]
    phi_points: Option<usize>,
}

/// An explicit `sensor` takes precedence over `preset`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingParams {
    preset: Option<String>,
    sensor: Option<SensorConfig>,
    l_max: u64,
    phi_points: usize,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self { preset: None, sensor: None, l_max: 3, phi_points: 73 }
    }
}

fn sensing_snr(a: &SensingArgs, mut p: SensingParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    let cfg = resolve_sensor(&a.preset, &mut p.preset, &mut p.sensor)?;
    p.l_max = a.l_max.unwrap_or(p.l_max);
    p.phi_points = a.phi_points.unwrap_or(p.phi_points);
    let phis = linspace(0.0, 2.0 * PI, p.phi_points)?;
    let ls: Vec<u64> = (0..=p.l_max).collect();
    let rows = sensing_sweep(&cfg, &phis, &ls)?;
    let mut t = Table::new(&["phi", "L", "snr", "delta_phi"]);
    for (phi, l, s, d) in &rows {
        t.push(vec![(*phi).into(), (*l).into(), (*s).into(), (*d).into()]);
    }
    let mut art = Vec::new();
    ctx.write_table("sensing_snr", &t, &mut art)?;
    let at = SensorConfig { phi: FRAC_PI_2, ..cfg };
    outcome(&p, art, json!({ "snr_unconditional_half_pi": snr_unconditional(&at)? }))
}

#[derive(Args, Debug)]
pub struct SubtractArgs {
    /// `thesis-ch5` or `thesis-ch5-transmission`.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubtractParams {
    preset: Option<String>,
    sensor: Option<SensorConfig>,
}

fn subtract_table(a: &SubtractArgs, mut p: SubtractParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    let cfg = resolve_sensor(&a.preset, &mut p.preset, &mut p.sensor)?;
    let rows = subtraction_table(&cfg)?;
    let mut t = Table::new(&["n_bar", "L", "probability", "tabulated", "rel_err_vs_paper"]);
    for r in &rows {
        t.push(vec![r.n_bar.into(), r.l.into(), r.probability.into(), r.reference.into(), r.rel_err.into()]);
    }
    let mut art = Vec::new();
    ctx.write_table("subtract_table", &t, &mut art)?;
    let worst = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
    let within = rows.iter().filter(|r| r.rel_err <= 0.15).count();
    outcome(&p, art, json!({ "max_rel_err": worst, "cells_within_15_percent": within, "cells": rows.len() }))
}

// ---- image-sim, reconstruct ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Acquisition {
    /// Mean photons per pattern.
    n_t: f64,
    measurement_fraction: f64,
    fill_fraction: f64,
    /// Coupler angle, radians.
    theta: f64,
    efficiency: f64,
    dark_rate: f64,
    mode: AcquisitionMode,
    /// Detection rounds per pattern; absent for exact statistics.
    #[serde(skip_serializing_if = "Option::is_none")]
    shots: Option<usize>,
}

impl Default for Acquisition {
    fn default() -> Self {
        Self {
            n_t: 0.8,
            measurement_fraction: 0.25,
            fill_fraction: 0.5,
            theta: FRAC_PI_4,
            efficiency: 0.3,
            dark_rate: 0.8,
            mode: AcquisitionMode::Post { n: 3 },
            shots: None,
        }
    }
}

#[derive(Args, Debug)]
pub struct AcquisitionArgs {
    /// `intensity`, `post:N` or `subtract:N`.
    #[arg(long)]
    mode: Option<AcquisitionMode>,
    /// Sampled acquisition with this many shots per pattern.
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    dark_rate: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

impl AcquisitionArgs {
    fn apply(&self, acq: &mut Acquisition, cs: &mut CsConfig) {
        if let Some(m) = self.mode {
            acq.mode = m;
        }
        if self.shots.is_some() {
            acq.shots = self.shots;
        }
        acq.dark_rate = self.dark_rate.unwrap_or(acq.dark_rate);
        cs.mu = self.mu.unwrap_or(cs.mu);
        cs.max_iter = self.max_iter.unwrap_or(cs.max_iter);
    }
}

/// Masks and measurements for `scene`, written as artifacts.
fn simulate_measurements(
    scene: &SensingScene,
    acq: &Acquisition,
    ctx: &Ctx,
    art: &mut Vec<String>,
) -> anyhow::Result<(SensingScene, SensingMatrix, Vec<f64>)> {
    if !(acq.measurement_fraction > 0.0 && acq.measurement_fraction <= 1.0) {
        return Err(config_error(format!("measurement_fraction = {} outside (0, 1]", acq.measurement_fraction)));
    }
    let rows = ((scene.len() as f64 * acq.measurement_fraction).round() as usize).max(1);
    let q = SensingMatrix::random(rows, scene.len(), acq.fill_fraction, RngSeed::new(ctx.seed).with_stream(MASK_STREAM))?;
    let scaled = scene.scaled_to_mean(acq.n_t, acq.fill_fraction)?;
    let arms = TwoArmDetection::symmetric(acq.theta, acq.efficiency, acq.dark_rate);
    let y = match acq.shots {
        None => acquire_exact(&scaled, &q, &arms, acq.mode)?,
        Some(shots) => acquire(&scaled, &q, &arms, acq.mode, shots, ctx.seed)?,
    };
    ctx.write_pgm("scene.pgm", &GrayImage::from_values(scene.width, scene.height, &scene.s0), art)?;
    ctx.write("masks.csv", &mask_to_csv(q.rows(), q.cols(), q.data()), art)?;
    ctx.write_table("measurements", &measurement_table(&y), art)?;
    Ok((scaled, q, y))
}

fn measurement_table(y: &[f64]) -> Table {
    let mut t = Table::new(&["t", "y"]);
    for (i, v) in y.iter().enumerate() {
        t.push(vec![(i as u64).into(), (*v).into()]);
    }
    t
}

fn solve_and_write(
    q: &SensingMatrix,
    y: &[f64],
    (width, height): (usize, usize),
    cs: &CsConfig,
    truth: Option<&SensingScene>,
    ctx: &Ctx,
    art: &mut Vec<String>,
) -> anyhow::Result<Value> {
    let r = cs_reconstruct(q, y, width, height, cs)?;
    let mut t = Table::new(&["row", "col", "value"]);
    for (k, v) in r.s_hat.iter().enumerate() {
        t.push(vec![((k / width) as u64).into(), ((k % width) as u64).into(), (*v).into()]);
    }
    ctx.write_table("reconstruction", &t, art)?;
    ctx.write_pgm("reconstruction.pgm", &GrayImage::from_values(width, height, &r.s_hat), art)?;
    let mut summary = json!({
        "measurements": q.rows(),
        "iterations": r.iterations,
        "residual": r.residual,
        "objective": r.objective_trace.last(),
    });
    if let Some(scene) = truth {
        summary["image_snr"] = json!(image_snr(&r.s_hat, &scene.object_mask())?);
    }
    Ok(summary)
}

fn load_scene(path: &Path) -> anyhow::Result<SensingScene> {
    let img = read_pgm(path).map_err(|e| config_error(format!("cannot read scene {}: {e}", path.display())))?;
    Ok(SensingScene::from_image(&img, 1.0)?)
}

#[derive(Args, Debug)]
pub struct ImageArgs {
    /// Scene image (PGM); the built-in phantom when absent.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    no_reconstruct: bool,
    #[command(flatten)]
    acq: AcquisitionArgs,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    scene: Option<PathBuf>,
    width: usize,
    height: usize,
    acquisition: Acquisition,
    reconstruct: bool,
    cs: CsConfig,
}

impl Default for ImageParams {
    fn default() -> Self {
        Self { scene: None, width: 32, height: 32, acquisition: Acquisition::default(), reconstruct: true, cs: CsConfig::default() }
    }
}

fn image_sim(a: &ImageArgs, mut p: ImageParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    if a.scene.is_some() {
        p.scene = a.scene.clone();
    }
    if a.no_reconstruct {
        p.reconstruct = false;
    }
    a.acq.apply(&mut p.acquisition, &mut p.cs);
    let scene = match &p.scene {
        Some(path) => load_scene(path)?,
        None => SensingScene::new(p.width, p.height, phantom(p.width, p.height))?,
    };
    (p.width, p.height) = (scene.width, scene.height);
    let mut art = Vec::new();
    let (_, q, y) = simulate_measurements(&scene, &p.acquisition, ctx, &mut art)?;
    let summary = if p.reconstruct {
        solve_and_write(&q, &y, (scene.width, scene.height), &p.cs, Some(&scene), ctx, &mut art)?
    } else {
        json!({ "measurements": q.rows() })
    };
    outcome(&p, art, summary)
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    /// Scene image (PGM): simulated when no measurements are given, ground truth otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Mask rows as CSV of 0/1.
    #[arg(long, requires = "measurements")]
    masks: Option<PathBuf>,
    /// Measurement CSV with columns `t,y`.
    #[arg(long, requires = "masks")]
    measurements: Option<PathBuf>,
    #[command(flatten)]
    acq: AcquisitionArgs,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    masks: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    measurements: Option<PathBuf>,
    /// Grid shape when no input image fixes it.
    #[serde(skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    acquisition: Acquisition,
    cs: CsConfig,
}

fn read_input(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))
}

fn read_measurements(path: &Path) -> anyhow::Result<Vec<f64>> {
    let text = read_input(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some("t,y") {
        return Err(config_error(format!("{}: expected header t,y", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let (t, v) = l.split_once(',').ok_or_else(|| config_error(format!("{}: line {} has no comma", path.display(), i + 2)))?;
            if t.trim().parse::<usize>().ok() != Some(i) {
                return Err(config_error(format!("{}: rows must be numbered 0, 1, ...", path.display())));
            }
            v.trim().parse::<f64>().map_err(|e| config_error(format!("{}: line {}: {e}", path.display(), i + 2)))
        })
        .collect()
}

fn reconstruct(a: &ReconstructArgs, mut p: ReconstructParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    if a.input.is_some() {
        p.input = a.input.clone();
    }
    if a.masks.is_some() {
        (p.masks, p.measurements) = (a.masks.clone(), a.measurements.clone());
    }
    a.acq.apply(&mut p.acquisition, &mut p.cs);
    let truth = p.input.as_deref().map(load_scene).transpose()?;
    let mut art = Vec::new();
    let summary = match (&p.masks, &p.measurements) {
        (Some(mp), Some(yp)) => {
            let (rows, cols, data) = mask_from_csv(&read_input(mp)?).map_err(|e| config_error(format!("{}: {e}", mp.display())))?;
            let q = SensingMatrix::from_data(rows, cols, data).map_err(|e| config_error(format!("{}: {e}", mp.display())))?;
            let y = read_measurements(yp)?;
            let (w, h) = match (&truth, p.width, p.height) {
                (Some(s), _, _) => (s.width, s.height),
                (None, Some(w), Some(h)) => (w, h),
                _ => return Err(config_error("width and height are required without an input image")),
            };
            if w * h != cols || y.len() != rows {
                return Err(config_error(format!("{rows}x{cols} masks, {} measurements and a {w}x{h} grid do not match", y.len())));
            }
            (p.width, p.height) = (Some(w), Some(h));
            solve_and_write(&q, &y, (w, h), &p.cs, truth.as_ref(), ctx, &mut art)?
        }
        (None, None) => {
            let scene = truth.ok_or_else(|| config_error("reconstruct needs --input or both --masks and --measurements"))?;
            (p.width, p.height) = (Some(scene.width), Some(scene.height));
            let (_, q, y) = simulate_measurements(&scene, &p.acquisition, ctx, &mut art)?;
            solve_and_write(&q, &y, (scene.width, scene.height), &p.cs, Some(&scene), ctx, &mut art)?
        }
        _ => return Err(config_error("masks and measurements must be given together")),
    };
    outcome(&p, art, summary)
}

// ---- oracle-check ----

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    shots: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleParams {
    shots: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self { shots: 200_000 }
    }
}

/// `(cells compared, worst |z|)` for a 1-D histogram against a model pmf.
fn compare_1d(samples: &[u64], model: &PhotonNumberDistribution) -> anyhow::Result<(usize, f64)> {
    let hist = histogram(samples)?;
    let trials = samples.len() as u64;
    let mut cells = 0;
    let mut worst = 0.0f64;
    for n in 0..=model.n_max().max(hist.len()) {
        let p = model.get(n);
        if p * trials as f64 >= MIN_EXPECTED {
            worst = worst.max(cell_z(hist.get(n).copied().unwrap_or(0), trials, p).abs());
            cells += 1;
        }
    }
    Ok((cells, worst))
}

fn compare_2d(h: &[Vec<u64>], trials: u64, p: impl Fn(u64, u64) -> anyhow::Result<f64>) -> anyhow::Result<(usize, f64)> {
    let mut cells = 0;
    let mut worst = 0.0f64;
    for (n, row) in h.iter().enumerate() {
        for (m, &c) in row.iter().enumerate() {
            let q = p(n as u64, m as u64)?;
            if q * trials as f64 >= MIN_EXPECTED {
                worst = worst.max(cell_z(c, trials, q).abs());
                cells += 1;
            }
        }
    }
    Ok((cells, worst))
}

fn oracle_check(a: &OracleArgs, mut p: OracleParams, ctx: &Ctx) -> anyhow::Result<Outcome> {
    p.shots = a.shots.unwrap_or(p.shots);
    if p.shots == 0 {
        return Err(config_error("shots must be positive"));
    }
    let n = p.shots;
    let seed = |k: u64| RngSeed::new(ctx.seed).with_stream(k);
    let mut results: Vec<(&str, usize, f64)> = Vec::new();

    let th = SourceSpec::Thermal { mean: 1.5 };
    let (c, z) = compare_1d(&sample_source(th, n, seed(0))?, &pmf(th, CutoffPolicy::Default)?)?;
    results.push(("thermal_pmf", c, z));

    let sc = ScatterConfig { n_s: 2.0, n_pl: 1.0, theta_deg: 45.0 };
    let mixed = sample_gaussian_superposition(&[sc.n_pl, sc.eta() * sc.n_s], n, seed(1))?;
    let other = sample_source(SourceSpec::Thermal { mean: sc.b() }, n, seed(2))?;
    let total: Vec<u64> = mixed.iter().zip(&other).map(|(x, y)| x + y).collect();
    let (c, z) = compare_1d(&total, &detected_pmf(&sc)?)?;
    results.push(("scattered_pmf", c, z));

    let st = ThermalSplitterState::new(1.3, 0.5)?;
    let d = simulate(SourceSpec::Thermal { mean: st.n_bar }, &SplitterNetwork::beam_splitter(st.theta)?, &[DetectorModel::ideal(); 2], n, seed(3))?;
    let (c, z) = compare_2d(&joint_histogram(&d, 0, 1, 15, 15), n as u64, |i, j| Ok(joint_pmf(&st, i, j)))?;
    results.push(("split_thermal_joint", c, z));

    let arms = TwoArmDetection::symmetric(FRAC_PI_4, 0.55, 0.3);
    let d = simulate(SourceSpec::Thermal { mean: 0.8 }, &SplitterNetwork::beam_splitter(arms.theta)?, &[arms.det_a, arms.det_b], n, seed(4))?;
    let (c, z) = compare_2d(&joint_histogram(&d, 0, 1, 15, 15), n as u64, |i, j| Ok(joint_pmf_noisy(0.8, &arms, i, j)?))?;
    results.push(("noisy_joint", c, z));

    let sensor = SensorConfig { n_bar: 3.0, phi: 0.0, xi: 0.5, gamma_loss: 1.0, eta_ph: 0.6, eta_pl: 0.5 };
    let dets = [DetectorModel::new(sensor.eta_ph, 0.0)?, DetectorModel::new(sensor.eta_pl, 0.0)?];
    let d = simulate(SourceSpec::Thermal { mean: sensor.n_bar }, &SplitterNetwork::new(vec![sensor.xi, 1.0 - sensor.xi])?, &dets, n, seed(5))?;
    let heralded: Vec<u64> = d.rows().filter(|r| r[1] == 1).map(|r| r[0]).collect();
    if heralded.is_empty() {
        return Err(config_error("no heralding events; increase shots"));
    }
    let (c, z) = compare_1d(&heralded, &conditional_state_pmf(&sensor, 1)?)?;
    results.push(("heralded_state", c, z));

    let mut t = Table::new(&["check", "cells", "worst_abs_z", "pass"]);
    let mut failed = Vec::new();
    for (name, cells, z) in &results {
        let ok = *cells > 0 && *z <= Z_MAX;
        if !ok {
            failed.push(*name);
        }
        t.push(vec![Cell::from(*name), (*cells as u64).into(), (*z).into(), ok.into()]);
    }
    let mut art = Vec::new();
    ctx.write_table("oracle_check", &t, &mut art)?;
    let mut o = outcome(&p, art, json!({ "checks": results.len(), "failed": failed, "z_max": Z_MAX }))?;
    if !failed.is_empty() {
        o.failure = Some(format!("oracle disagreement beyond {Z_MAX} sigma in: {}", failed.join(", ")));
    }
    Ok(o)
}
