//! Trajectory classification into dynamical phases and parameter sweeps.
//!
//! The decision tree runs on the last `window` recorded steps:
//!
//! 1. the run diverged: `Crash`;
//! 2. real prices are stationary and sit on the competitive equilibrium:
//!    `CompetitiveEquilibrium`;
//! 3. real prices are stationary but offset, with non-zero mean profits or
//!    imbalances, falling wages and excess labour supply:
//!    `DeflationaryEquilibrium`;
//! 4. activity is quiescent most of the time and arrives in clustered bursts:
//!    `Crises`;
//! 5. anything else is a sustained fluctuation: `Oscillations`, periodic when
//!    the averaged spectrum has a dominant peak or the twin run does not
//!    separate, chaotic otherwise.
//!
//! Crises are tested before oscillations because a bursty run is also a
//! fluctuating one.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};

use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::abm::{run, Abm, RecordSpec, Trajectory};
use crate::config::{RunConfig, Scenario, SweepParam};
use crate::economy::{DynParams, Economy};
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::seeds::{Seeds, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OscillationKind {
    Periodic,
    Chaotic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PhaseLabel {
    CompetitiveEquilibrium,
    DeflationaryEquilibrium,
    Oscillations(OscillationKind),
    Crises,
    Crash,
}

impl PhaseLabel {
    /// Every label, in legend order.
    pub const ALL: [PhaseLabel; 6] = [
        PhaseLabel::CompetitiveEquilibrium,
        PhaseLabel::DeflationaryEquilibrium,
        PhaseLabel::Oscillations(OscillationKind::Periodic),
        PhaseLabel::Oscillations(OscillationKind::Chaotic),
        PhaseLabel::Crises,
        PhaseLabel::Crash,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PhaseLabel::CompetitiveEquilibrium => "competitive_equilibrium",
            PhaseLabel::DeflationaryEquilibrium => "deflationary_equilibrium",
            PhaseLabel::Oscillations(OscillationKind::Periodic) => "oscillations_periodic",
            PhaseLabel::Oscillations(OscillationKind::Chaotic) => "oscillations_chaotic",
            PhaseLabel::Crises => "crises",
            PhaseLabel::Crash => "crash",
        }
    }

    /// Phase without the oscillation sub-tag; votes are counted on this.
    pub fn phase(&self) -> PhaseLabel {
        match self {
            PhaseLabel::Oscillations(_) => PhaseLabel::Oscillations(OscillationKind::Periodic),
            other => *other,
        }
    }

    pub fn is_oscillation(&self) -> bool {
        matches!(self, PhaseLabel::Oscillations(_))
    }
}

impl fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PhaseLabel::ALL
            .iter()
            .find(|l| l.as_str() == s)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("unknown phase label `{s}`")))
    }
}

impl Serialize for PhaseLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for PhaseLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Classifier thresholds. All of them are reported next to every label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Largest per-step `|d log p_i|` over the window for "stationary".
    pub tol_eq: f64,
    /// Largest `|p / p_eq - 1|` at the end of the window for "on equilibrium".
    pub tol_dist: f64,
    /// Mean profit or excess ratio above which a stationary state is offset.
    pub tol_imbalance: f64,
    /// Mean log wage growth below `-tol_inflation` counts as deflation.
    pub tol_inflation: f64,
    /// Periodogram peak over median for a periodic oscillation.
    pub peak_prominence: f64,
    /// Coefficient of variation of exceedance interarrival times for crises.
    pub burst_cv: f64,
    /// Median over maximum per-step activity below which the run is quiescent.
    pub quiescence_ratio: f64,
    /// Relative price separation of the twin run.
    pub twin_separation: f64,
    /// Separation at which the twin run counts as decorrelated.
    pub twin_saturation: f64,
    /// Growth rate (per step) of the twin separation above which the run is chaotic.
    pub lyapunov_min: f64,
    /// Net monotone move of the mean log price over the window (natural log)
    /// beyond which a run that has not yet hit the divergence bound counts as crashing.
    pub runaway_log: f64,
    /// Activity in the last tenth of the window over the first tenth below
    /// which a monotone run counts as relaxing rather than moving.
    pub relax_ratio: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tol_eq: 1e-4,
            tol_dist: 1e-3,
            tol_imbalance: 1e-6,
            tol_inflation: 1e-8,
            peak_prominence: 5.0,
            burst_cv: 1.5,
            quiescence_ratio: 1e-3,
            twin_separation: 1e-9,
            twin_saturation: 1e-3,
            lyapunov_min: 5e-3,
            runaway_log: std::f64::consts::LN_10,
            relax_ratio: 0.1,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let pos = [
            ("tol_eq", self.tol_eq),
            ("tol_dist", self.tol_dist),
            ("tol_imbalance", self.tol_imbalance),
            ("tol_inflation", self.tol_inflation),
            ("peak_prominence", self.peak_prominence),
            ("burst_cv", self.burst_cv),
            ("quiescence_ratio", self.quiescence_ratio),
            ("twin_separation", self.twin_separation),
            ("twin_saturation", self.twin_saturation),
            ("runaway_log", self.runaway_log),
            ("relax_ratio", self.relax_ratio),
        ];
        for (name, x) in pos {
            if !(x.is_finite() && x > 0.0) {
                return Err(format!("{name} must be positive, got {x}"));
            }
        }
        if !self.lyapunov_min.is_finite() {
            return Err("lyapunov_min must be finite".into());
        }
        if self.twin_saturation <= self.twin_separation {
            return Err("twin_saturation must exceed twin_separation".into());
        }
        Ok(())
    }
}

/// Window statistics behind a label.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub window: usize,
    /// Largest per-step `|d log p_i|` over the window.
    pub drift: f64,
    /// `max_i |p_i / p_eq,i - 1|` at the last step; absent without an equilibrium.
    pub distance: Option<f64>,
    /// Mean log wage growth per step.
    pub mean_inflation: f64,
    /// Mean `L^s - L^d`.
    pub labor_gap: f64,
    pub mean_profit_ratio: f64,
    pub mean_excess_ratio: f64,
    /// Median over maximum of `max_i |d log p_i|`.
    pub activity_ratio: f64,
    /// Interarrival CV of activity exceedances.
    pub burst_cv: f64,
    pub exceedances: usize,
    #[serde(with = "crate::config::num_f64")]
    pub peak_prominence: f64,
    /// Period (in steps) of the dominant spectral peak.
    pub period: Option<f64>,
    /// Largest log-range of a real price over the window.
    pub amplitude: f64,
    /// Net change of the firm-averaged log price over the window.
    pub trend: f64,
    /// Total variation of the firm-averaged log price over the window.
    pub variation: f64,
    /// Mean activity in the last tenth of the window over the first tenth.
    pub decay: f64,
    pub lyapunov: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: PhaseLabel,
    pub features: Features,
}

/// Index of the first recorded row inside the last `window` steps.
fn window_start(tr: &Trajectory, window: usize) -> usize {
    let last = *tr.steps.last().unwrap_or(&0);
    let from = last.saturating_sub(window);
    tr.steps.partition_point(|s| *s < from)
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// `max_i |log p_i(t+1) - log p_i(t)|` for consecutive recorded rows.
pub fn activity(prices: &[Vec<f64>]) -> Vec<f64> {
    prices.windows(2).map(|w| w[0].iter().zip(&w[1]).map(|(a, b)| (b.ln() - a.ln()).abs()).fold(0.0, f64::max)).collect()
}

/// Exceedances of the log-midpoint between median and peak activity, and the
/// CV of their interarrival times. Quiescent runs with clustered bursts give
/// large CVs; the top-quantile rule puts every exceedance inside one burst.
pub fn burst_statistics(act: &[f64]) -> (f64, usize, f64) {
    let peak = act.iter().cloned().fold(0.0, f64::max);
    let med = median(&mut act.to_vec());
    let ratio = if peak > 0.0 { med / peak } else { 1.0 };
    let thr = (med.max(f64::MIN_POSITIVE) * peak).sqrt();
    let idx: Vec<usize> = act.iter().enumerate().filter(|(_, a)| **a > thr).map(|(k, _)| k).collect();
    let gaps: Vec<f64> = idx.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let cv = if gaps.len() >= 2 {
        let m = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let var = gaps.iter().map(|g| (g - m) * (g - m)).sum::<f64>() / gaps.len() as f64;
        var.sqrt() / m
    } else {
        0.0
    };
    (ratio, idx.len(), cv)
}

/// Firm-averaged Hann-windowed periodogram of `d log p_i`. Returns
/// (peak over median, period in rows of the dominant peak).
pub fn spectral_peak(prices: &[Vec<f64>]) -> (f64, Option<f64>) {
    let m = prices.len().saturating_sub(1);
    if m < 8 {
        return (0.0, None);
    }
    let n = prices[0].len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let hann: Vec<f64> = (0..m).map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (m - 1) as f64).cos()).collect();
    let half = m / 2;
    let mut power = vec![0.0; half + 1];
    let mut buf = vec![Complex::new(0.0, 0.0); m];
    for i in 0..n {
        let d: Vec<f64> = prices.windows(2).map(|w| w[1][i].ln() - w[0][i].ln()).collect();
        let mean = d.iter().sum::<f64>() / m as f64;
        for k in 0..m {
            buf[k] = Complex::new((d[k] - mean) * hann[k], 0.0);
        }
        fft.process(&mut buf);
        for k in 1..=half {
            power[k] += buf[k].norm_sqr();
        }
    }
    let band = &power[1..=half];
    let (kmax, pmax) = band.iter().enumerate().fold((0, 0.0), |acc, (k, p)| if *p > acc.1 { (k, *p) } else { acc });
    let med = median(&mut band.to_vec());
    if pmax <= 0.0 {
        return (0.0, None);
    }
    let prom = if med > 0.0 { pmax / med } else { f64::INFINITY };
    (prom, Some(m as f64 / (kmax + 1) as f64))
}

/// Time-averaged rescaled profits, imbalances and labour-market state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Imbalances {
    /// Per-firm mean `P_i / (G_i + L_i)`.
    pub profit: Vec<f64>,
    /// Per-firm mean `E_i / (S_i + D_i)`.
    pub excess: Vec<f64>,
    /// Mean `L^s - L^d`.
    pub labor_gap: f64,
    /// Mean `(L^s - L^d) / (L^s + L^d)`.
    pub labor_tension: f64,
    /// `max_i |alpha_i E_i + alpha'_i P_i - omega (L^s - L^d)/(L^s + L^d)|`.
    pub price_residual: f64,
    /// `|mean_i (beta'_i E_i - beta_i P_i)|`.
    pub target_residual: f64,
}

pub fn stationary_imbalances(tr: &Trajectory, params: &DynParams, window: usize) -> Imbalances {
    let start = window_start(tr, window).max(1);
    let rows = start..tr.len();
    let k = rows.len().max(1) as f64;
    let n = params.n();
    let mut profit = vec![0.0; n];
    let mut excess = vec![0.0; n];
    let (mut gap, mut tension) = (0.0, 0.0);
    for r in rows {
        if let (Some(p), Some(e)) = (tr.profit_ratios.get(r), tr.excess_ratios.get(r)) {
            for i in 0..n {
                profit[i] += p[i] / k;
                excess[i] += e[i] / k;
            }
        }
        let s = &tr.summaries[r];
        gap += (s.labor_supply - s.labor_demand) / k;
        let tot = s.labor_supply + s.labor_demand;
        if tot > 0.0 {
            tension += (s.labor_supply - s.labor_demand) / tot / k;
        }
    }
    let price_residual =
        (0..n).map(|i| (params.alpha[i] * excess[i] + params.alpha_p[i] * profit[i] - params.omega * tension).abs()).fold(0.0, f64::max);
    let target_residual = ((0..n).map(|i| params.beta_p[i] * excess[i] - params.beta[i] * profit[i]).sum::<f64>() / n as f64).abs();
    Imbalances { profit, excess, labor_gap: gap, labor_tension: tension, price_residual, target_residual }
}

/// Classifies a trajectory recorded at every step. `lyapunov` is the twin-run
/// growth rate, when available.
pub fn classify(tr: &Trajectory, p_eq: Option<&[f64]>, window: usize, th: &Thresholds, lyapunov: Option<f64>) -> Result<Classification> {
    if tr.diverged() {
        return Ok(Classification { label: PhaseLabel::Crash, features: Features { window, ..Features::default() } });
    }
    if window == 0 || tr.length < 2 * window {
        return Err(Error::InsufficientData(format!("{} steps, need {} for a window of {window}", tr.length, 2 * window)));
    }
    let start = window_start(tr, window);
    let prices = &tr.prices[start..];
    if prices.len() < 3 {
        return Err(Error::InsufficientData("fewer than three recorded rows in the window".into()));
    }
    let n = prices[0].len();

    let mut amplitude = 0.0f64;
    for i in 0..n {
        let (lo, hi) = prices.iter().map(|r| r[i].ln()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        amplitude = amplitude.max(hi - lo);
    }
    let last = prices.last().expect("non-empty");
    let distance = p_eq.map(|q| last.iter().zip(q).map(|(p, e)| (p / e - 1.0).abs()).fold(0.0, f64::max));
    let sm = &tr.summaries[start.max(1)..];
    let k = sm.len().max(1) as f64;
    let mean_inflation = sm.iter().map(|s| s.wage_growth).sum::<f64>() / k;
    let labor_gap = sm.iter().map(|s| s.labor_supply - s.labor_demand).sum::<f64>() / k;
    let mean_profit_ratio = sm.iter().map(|s| s.mean_profit_ratio).sum::<f64>() / k;
    let mean_excess_ratio = sm.iter().map(|s| s.mean_excess_ratio).sum::<f64>() / k;
    let act = activity(prices);
    let drift = act.iter().cloned().fold(0.0, f64::max);
    let (activity_ratio, exceedances, burst_cv) = burst_statistics(&act);
    let (peak_prominence, period) = spectral_peak(prices);
    let mean_log: Vec<f64> = prices.iter().map(|r| r.iter().map(|p| p.ln()).sum::<f64>() / n as f64).collect();
    let trend = mean_log[mean_log.len() - 1] - mean_log[0];
    let variation: f64 = mean_log.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let tenth = (act.len() / 10).max(1);
    let head = act[..tenth].iter().sum::<f64>();
    let tail = act[act.len() - tenth..].iter().sum::<f64>();
    let decay = if head > 0.0 { tail / head } else { 0.0 };

    let features = Features {
        window,
        drift,
        distance,
        mean_inflation,
        labor_gap,
        mean_profit_ratio,
        mean_excess_ratio,
        activity_ratio,
        burst_cv,
        exceedances,
        peak_prominence,
        period,
        amplitude,
        trend,
        variation,
        decay,
        lyapunov,
    };

    let stationary = drift < th.tol_eq;
    let on_equilibrium = distance.map(|d| d < th.tol_dist).unwrap_or(false);
    let offset = mean_profit_ratio.abs() > th.tol_imbalance || mean_excess_ratio.abs() > th.tol_imbalance;
    // A monotone move that keeps its pace over orders of magnitude hits the
    // divergence bound after the horizon; one that slows down is a transient
    // judged by where it is heading.
    let monotone = variation < 1.1 * trend.abs();
    let relaxing = monotone && decay < th.relax_ratio;
    let runaway = monotone && !relaxing && trend.abs() > th.runaway_log;
    let stationary = stationary || relaxing;
    let label = if runaway {
        PhaseLabel::Crash
    } else if stationary && on_equilibrium {
        PhaseLabel::CompetitiveEquilibrium
    } else if stationary && offset && mean_inflation < -th.tol_inflation && labor_gap > 0.0 {
        PhaseLabel::DeflationaryEquilibrium
    } else if activity_ratio < th.quiescence_ratio && burst_cv > th.burst_cv {
        PhaseLabel::Crises
    } else if peak_prominence >= th.peak_prominence || lyapunov.map(|l| l < th.lyapunov_min).unwrap_or(false) {
        PhaseLabel::Oscillations(OscillationKind::Periodic)
    } else {
        PhaseLabel::Oscillations(OscillationKind::Chaotic)
    };
    Ok(Classification { label, features })
}

/// Growth rate of the separation between `abm` and a copy with prices moved by
/// `separation` (relative), over at most `steps` steps: `ln(d(t*) / d(0)) / t*`
/// with `t*` the first step where the separation reaches `saturation`.
pub fn twin_growth_rate<R: Rng>(abm: &Abm, steps: usize, separation: f64, saturation: f64, rng: &mut R) -> Result<f64> {
    let mut a = abm.clone();
    let mut b = abm.clone();
    for p in b.state.prices.iter_mut() {
        *p *= 1.0 + separation * rng.gen_range(-1.0..=1.0);
    }
    let dist = |a: &Abm, b: &Abm| a.state.prices.iter().zip(&b.state.prices).map(|(x, y)| (x.ln() - y.ln()).abs()).fold(0.0, f64::max);
    let d0 = dist(&a, &b);
    if d0 == 0.0 {
        return Err(Error::InvalidParameter("twin separation vanished".into()));
    }
    for t in 1..=steps {
        let ok = a.step()? & b.step()?;
        if !ok {
            return Ok((saturation / d0).ln() / t as f64);
        }
        let d = dist(&a, &b);
        if d >= saturation || t == steps {
            return Ok((d.max(f64::MIN_POSITIVE) / d0).ln() / t as f64);
        }
    }
    Ok(0.0)
}

/// Run, classification and diagnostics of one scenario.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub classification: Classification,
    pub imbalances: Imbalances,
}

/// Runs `steps` steps from the scenario and classifies the last `window`.
///
/// The twin run starts from the state at the beginning of the window and is
/// only needed when the spectrum alone does not settle the oscillation type.
pub fn simulate_and_classify(sc: &Scenario, steps: usize, window: usize, th: &Thresholds, twin: bool) -> Result<RunOutcome> {
    let mut abm = Abm::new(&sc.econ, sc.params.clone(), sc.state.clone())?;
    let head = steps.saturating_sub(window);
    let mut tr = run(&mut abm, head, RecordSpec::default())?;
    let snapshot = if tr.diverged() { None } else { Some(abm.clone()) };
    if !tr.diverged() {
        let tail = run(&mut abm, steps - head, RecordSpec { stride: 1, start: 1 })?;
        append(&mut tr, tail);
    }
    let p_eq: Option<Vec<f64>> = sc.eq.as_ref().map(|e| e.prices.iter().copied().collect());
    let mut cl = classify(&tr, p_eq.as_deref(), window, th, None)?;
    if twin && cl.label == PhaseLabel::Oscillations(OscillationKind::Chaotic) {
        if let Some(snap) = snapshot {
            let mut rng = Seeds::new(sc.seed).rng(Stream::Twin);
            let l = twin_growth_rate(&snap, window, th.twin_separation, th.twin_saturation, &mut rng)?;
            cl = classify(&tr, p_eq.as_deref(), window, th, Some(l))?;
        }
    }
    let imbalances = stationary_imbalances(&tr, &sc.params, window);
    Ok(RunOutcome { trajectory: tr, classification: cl, imbalances })
}

/// Everything a single simulation produces, tagged with its configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub fingerprint: String,
    pub config: RunConfig,
    pub seed: u64,
    pub equilibrium_prices: Option<Vec<f64>>,
    pub label: PhaseLabel,
    pub features: Features,
    pub imbalances: Imbalances,
    /// Recorded every `output.stride` steps, endpoints included.
    pub trajectory: Trajectory,
}

/// Simulates the first seed of `cfg` and classifies the run.
pub fn simulate(cfg: &RunConfig) -> Result<SimulationReport> {
    let seed = cfg.run.seeds[0];
    let sc = cfg.scenario(seed)?;
    let out = simulate_and_classify(&sc, cfg.run.steps, cfg.run.window(), &cfg.classifier, cfg.run.twin)?;
    Ok(SimulationReport {
        fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        seed,
        equilibrium_prices: sc.eq.as_ref().map(|e| e.prices.iter().copied().collect()),
        label: out.classification.label,
        features: out.classification.features,
        imbalances: out.imbalances,
        trajectory: out.trajectory.downsample(cfg.output.stride),
    })
}

fn append(tr: &mut Trajectory, tail: Trajectory) {
    tr.steps.extend(tail.steps);
    tr.prices.extend(tail.prices);
    tr.gammas.extend(tail.gammas);
    tr.summaries.extend(tail.summaries);
    tr.profit_ratios.extend(tail.profit_ratios);
    tr.excess_ratios.extend(tail.excess_ratios);
    tr.status = tail.status;
    tr.length += tail.length;
}

/// Most frequent phase; ties go to the phase reached by the earliest seed.
/// The oscillation sub-tag is the majority among oscillating votes.
pub fn majority(votes: &[PhaseLabel]) -> PhaseLabel {
    let mut best: Option<(PhaseLabel, usize)> = None;
    for v in votes {
        let c = votes.iter().filter(|w| w.phase() == v.phase()).count();
        if best.map(|(_, bc)| c > bc).unwrap_or(true) {
            best = Some((v.phase(), c));
        }
    }
    let phase = best.map(|(p, _)| p).unwrap_or(PhaseLabel::Crash);
    if phase.is_oscillation() {
        let chaotic = votes.iter().filter(|v| **v == PhaseLabel::Oscillations(OscillationKind::Chaotic)).count();
        let periodic = votes.iter().filter(|v| **v == PhaseLabel::Oscillations(OscillationKind::Periodic)).count();
        if chaotic > periodic {
            return PhaseLabel::Oscillations(OscillationKind::Chaotic);
        }
    }
    phase
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: SweepParam,
    #[serde(with = "crate::config::num_vec")]
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub distance: Option<f64>,
    pub mean_inflation: f64,
    pub period: Option<f64>,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub ix: usize,
    pub iy: usize,
    #[serde(with = "crate::config::num_f64")]
    pub x: f64,
    #[serde(with = "crate::config::num_f64")]
    pub y: f64,
    pub label: PhaseLabel,
    pub votes: Vec<PhaseLabel>,
    /// Statistics of the first seed that voted for the winning phase.
    pub summary: CellSummary,
    /// Per-seed failure messages (counted as crashes).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagramMeta {
    pub fingerprint: String,
    pub eps: Option<f64>,
    pub steps: usize,
    pub window: usize,
    pub seeds: Vec<u64>,
    pub thresholds: Thresholds,
    pub legend: Vec<PhaseLabel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub x: Axis,
    pub y: Axis,
    /// Row-major in `y`: cell `(ix, iy)` sits at `iy * x.len + ix`.
    pub cells: Vec<Cell>,
    pub meta: DiagramMeta,
}

impl PhaseDiagram {
    pub fn count(&self, pred: impl Fn(PhaseLabel) -> bool) -> usize {
        self.cells.iter().filter(|c| pred(c.label)).count()
    }

    pub fn fraction(&self, pred: impl Fn(PhaseLabel) -> bool) -> f64 {
        self.count(pred) as f64 / self.cells.len().max(1) as f64
    }

    pub fn cell(&self, ix: usize, iy: usize) -> &Cell {
        &self.cells[iy * self.x.values.len() + ix]
    }
}

/// Progress reporting and cancellation for long sweeps.
#[derive(Default)]
pub struct SweepControl<'a> {
    pub cancel: Option<&'a AtomicBool>,
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

struct SeedBase {
    base: Result<Economy>,
    calibrated: Option<Result<(Economy, Option<Equilibrium>)>>,
}

type Vote = (PhaseLabel, CellSummary, Option<String>);

fn run_cell(cfg: &RunConfig, seed: u64, sb: &SeedBase, needs_calibration: bool) -> Result<Vote> {
    let (econ, eq) = if needs_calibration {
        let base = sb.base.as_ref().map_err(|e| e.clone())?;
        let econ = cfg.calibrate(base)?;
        let eq = RunConfig::equilibrium(&econ)?;
        (econ, eq)
    } else {
        sb.calibrated.as_ref().expect("precomputed").as_ref().map_err(|e| e.clone())?.clone()
    };
    let sc = cfg.scenario_on(econ, eq, seed)?;
    let out = simulate_and_classify(&sc, cfg.run.steps, cfg.run.window(), &cfg.classifier, cfg.run.twin)?;
    let f = &out.classification.features;
    let summary = CellSummary { distance: f.distance, mean_inflation: f.mean_inflation, period: f.period, amplitude: f.amplitude };
    Ok((out.classification.label, summary, None))
}

/// Phase diagram over the grid in `cfg.sweep`. Failing runs count as crashes.
pub fn sweep(cfg: &RunConfig, ctl: &SweepControl) -> Result<PhaseDiagram> {
    let spec = cfg.sweep.clone().unwrap_or_default();
    let xs = spec.x.resolve()?;
    let ys = spec.y.resolve()?;
    let seeds = cfg.run.seeds.clone();
    let needs_calibration = spec.x.param == SweepParam::Eps || spec.y.param == SweepParam::Eps;
    let bases: Vec<SeedBase> = seeds
        .par_iter()
        .map(|&s| {
            let base = cfg.base_economy(s);
            let calibrated = (!needs_calibration).then(|| {
                let base = base.as_ref().map_err(|e| e.clone())?;
                let econ = cfg.calibrate(base)?;
                let eq = RunConfig::equilibrium(&econ)?;
                Ok((econ, eq))
            });
            SeedBase { base, calibrated }
        })
        .collect();

    let (nx, ny, ns) = (xs.len(), ys.len(), seeds.len());
    let total = nx * ny * ns;
    let done = AtomicUsize::new(0);
    let cancelled = || ctl.cancel.map(|c| c.load(Ordering::Relaxed)).unwrap_or(false);
    let votes: Vec<Option<Vote>> = (0..total)
        .into_par_iter()
        .map(|task| {
            if cancelled() {
                return None;
            }
            let (cell, si) = (task / ns, task % ns);
            let (ix, iy) = (cell % nx, cell / nx);
            let c = cfg.with_param(spec.x.param, xs[ix]).with_param(spec.y.param, ys[iy]);
            let vote = run_cell(&c, seeds[si], &bases[si], needs_calibration).unwrap_or_else(|e| {
                let summary = CellSummary { distance: None, mean_inflation: 0.0, period: None, amplitude: 0.0 };
                (PhaseLabel::Crash, summary, Some(e.to_string()))
            });
            let k = done.fetch_add(1, Ordering::Relaxed) + 1;
            if let Some(p) = ctl.progress {
                p(k, total);
            }
            Some(vote)
        })
        .collect();
    if cancelled() || votes.iter().any(|v| v.is_none()) {
        return Err(Error::Cancelled);
    }
    let votes: Vec<Vote> = votes.into_iter().map(|v| v.expect("checked")).collect();

    let mut cells = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let vs = &votes[(iy * nx + ix) * ns..(iy * nx + ix + 1) * ns];
            let labels: Vec<PhaseLabel> = vs.iter().map(|v| v.0).collect();
            let label = majority(&labels);
            let rep = vs.iter().find(|v| v.0.phase() == label.phase()).expect("winner has a vote");
            cells.push(Cell {
                ix,
                iy,
                x: xs[ix],
                y: ys[iy],
                label,
                votes: labels,
                summary: rep.1.clone(),
                errors: vs.iter().filter_map(|v| v.2.clone()).collect(),
            });
        }
    }
    Ok(PhaseDiagram {
        x: Axis { param: spec.x.param, values: xs },
        y: Axis { param: spec.y.param, values: ys },
        cells,
        meta: DiagramMeta {
            fingerprint: cfg.fingerprint(),
            eps: cfg.eps,
            steps: cfg.run.steps,
            window: cfg.run.window(),
            seeds,
            thresholds: cfg.classifier.clone(),
            legend: PhaseLabel::ALL.to_vec(),
        },
    })
}
