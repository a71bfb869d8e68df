//! Library side of every subcommand. Each report carries the fingerprint of
//! the resolved configuration it was computed from.

use std::io::Write;

use firmnet::config::{num_f64, Format};
use firmnet::naive::shocks::{LinearShockSystem, VolatilityReport};
use firmnet::naive::stability::stability_report;
use firmnet::naive::{fit_relaxation_time, integrate, pack, perturbed_state, NaiveModel, NaiveParams, NaiveStatus, RelaxationFit};
use firmnet::output::{fmt_f64, write_json, write_phase_diagram_csv, write_trajectory_csv};
use firmnet::phase::{self, SweepControl};
use firmnet::{Complex64, Equilibrium, Error, PhaseDiagram, Result, RunConfig, Seeds, SimulationReport, Stream};
use serde::{Deserialize, Serialize};

/// Copy of `cfg` restricted to one seed, so the fingerprint identifies the run.
pub fn for_seed(cfg: &RunConfig, seed: u64) -> RunConfig {
    let mut c = cfg.clone();
    c.run.seeds = vec![seed];
    c
}

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumReport {
    pub fingerprint: String,
    pub seed: u64,
    pub equilibrium: Equilibrium,
}

/// Fails with `NotRealisable` when the calibrated economy has no equilibrium.
pub fn equilibrium(cfg: &RunConfig, seed: u64) -> Result<EquilibriumReport> {
    let cfg = for_seed(cfg, seed);
    let econ = cfg.economy(seed)?;
    let eq = firmnet::equilibrium::solve(&econ)?;
    Ok(EquilibriumReport { fingerprint: cfg.fingerprint(), seed, equilibrium: eq })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl From<Complex64> for Eigenvalue {
    fn from(z: Complex64) -> Self {
        Eigenvalue { re: z.re, im: z.im }
    }
}

/// Spectrum of the naive model's `2N x 2N` stability matrix at equilibrium.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumReport {
    pub fingerprint: String,
    pub seed: u64,
    pub eps: f64,
    pub params: NaiveParams,
    pub eigenvalues: Vec<Eigenvalue>,
    #[serde(with = "num_f64")]
    pub tau_relax_numeric: f64,
    #[serde(with = "num_f64")]
    pub tau_relax_analytic: f64,
    pub marginal_pair: [Eigenvalue; 2],
}

fn naive_setup(cfg: &RunConfig, seed: u64) -> Result<(NaiveModel, Equilibrium)> {
    let econ = cfg.naive_economy(seed)?;
    let model = NaiveModel::new(&econ, cfg.naive_params())?;
    let eq = model.equilibrium()?;
    Ok((model, eq))
}

pub fn spectrum(cfg: &RunConfig, seed: u64) -> Result<SpectrumReport> {
    let cfg = for_seed(cfg, seed);
    let (model, eq) = naive_setup(&cfg, seed)?;
    let rep = stability_report(&model, &eq)?;
    Ok(SpectrumReport {
        fingerprint: cfg.fingerprint(),
        seed,
        eps: eq.eps,
        params: model.params,
        eigenvalues: rep.eigenvalues.into_iter().map(Eigenvalue::from).collect(),
        tau_relax_numeric: rep.tau_relax_numeric,
        tau_relax_analytic: rep.tau_relax_analytic,
        marginal_pair: rep.marginal_pair.map(Eigenvalue::from),
    })
}

/// Relaxation run of the naive model from a perturbed equilibrium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveReport {
    pub fingerprint: String,
    pub seed: u64,
    pub eps: f64,
    pub params: NaiveParams,
    pub dt: f64,
    pub t_end: f64,
    #[serde(with = "num_f64")]
    pub tau_relax_analytic: f64,
    /// Exponential fit of `distance` over the second half of the run.
    pub fit: Option<RelaxationFit>,
    pub status: NaiveStatus,
    pub equilibrium: Vec<f64>,
    pub times: Vec<f64>,
    /// Relative distance `|x / x_eq - 1|` of the packed state.
    pub distance: Vec<f64>,
    /// Packed states `(p, gamma)`.
    pub states: Vec<Vec<f64>>,
}

impl NaiveReport {
    /// Keeps every `stride`-th record plus the last one.
    pub fn downsample(&self, stride: usize) -> NaiveReport {
        let stride = stride.max(1);
        let len = self.times.len();
        let keep: Vec<usize> = (0..len).filter(|k| k % stride == 0 || *k + 1 == len).collect();
        NaiveReport {
            times: keep.iter().map(|&k| self.times[k]).collect(),
            distance: keep.iter().map(|&k| self.distance[k]).collect(),
            states: keep.iter().map(|&k| self.states[k].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Horizon when `naive.t_end` is absent: ten analytic relaxation times, within `[1, 1e4]`.
const MAX_DEFAULT_T_END: f64 = 1e4;

pub fn naive(cfg: &RunConfig, seed: u64) -> Result<NaiveReport> {
    let cfg = for_seed(cfg, seed);
    let (model, eq) = naive_setup(&cfg, seed)?;
    let tau = firmnet::naive::stability::relaxation_time_analytic(&model.params, model.econ.z_max(), eq.eps)?;
    let t_end = cfg.naive.t_end.unwrap_or_else(|| (10.0 * tau).clamp(1.0, MAX_DEFAULT_T_END));
    let dt = cfg.naive.dt.unwrap_or_else(|| model.params.default_dt());
    let mut rng = Seeds::new(seed).rng(Stream::Perturbation);
    let x0 = perturbed_state(&eq, cfg.run.delta, &mut rng);
    let tr = integrate(&model, x0.as_slice(), t_end, dt, cfg.naive.stride)?;
    let x_eq = pack(&eq.prices, &eq.gammas);
    let distance: Vec<f64> =
        tr.states.iter().map(|x| x.iter().zip(x_eq.iter()).map(|(a, b)| (a / b - 1.0).powi(2)).sum::<f64>().sqrt()).collect();
    let fit = fit_relaxation_time(&tr.times, &distance).ok();
    Ok(NaiveReport {
        fingerprint: cfg.fingerprint(),
        seed,
        eps: eq.eps,
        params: model.params,
        dt,
        t_end,
        tau_relax_analytic: tau,
        fit,
        status: tr.status,
        equilibrium: x_eq.iter().copied().collect(),
        times: tr.times,
        distance,
        states: tr.states,
    })
}

/// Stationary response of the linearised naive model to productivity noise.
#[derive(Clone, Debug, Serialize)]
pub struct VolatilityOutput {
    pub fingerprint: String,
    pub seed: u64,
    pub eps: f64,
    pub shock_sigma: f64,
    pub correlation_time: f64,
    pub volatility: VolatilityReport,
}

pub fn volatility(cfg: &RunConfig, seed: u64) -> Result<VolatilityOutput> {
    let cfg = for_seed(cfg, seed);
    let (model, eq) = naive_setup(&cfg, seed)?;
    let sys = LinearShockSystem::new(&model, &eq)?;
    let v = sys.stationary_volatility(cfg.naive.shock_sigma, cfg.naive.correlation_time)?;
    Ok(VolatilityOutput {
        fingerprint: cfg.fingerprint(),
        seed,
        eps: eq.eps,
        shock_sigma: cfg.naive.shock_sigma,
        correlation_time: cfg.naive.correlation_time,
        volatility: v,
    })
}

pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<SimulationReport> {
    phase::simulate(&for_seed(cfg, seed))
}

pub fn sweep(cfg: &RunConfig, ctl: &SweepControl) -> Result<PhaseDiagram> {
    if cfg.sweep.is_none() {
        return Err(Error::Config { path: "sweep".into(), message: "a sweep block is required".into() });
    }
    phase::sweep(cfg, ctl)
}

/// CSV or JSON rendering of a report.
pub trait Artifact: Serialize + Sized {
    fn write_csv(&self, w: &mut dyn Write) -> Result<()>;

    fn render(&self, format: Format) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        match format {
            Format::Csv => self.write_csv(&mut buf)?,
            Format::Json => write_json(self, &mut buf)?,
        }
        Ok(buf)
    }
}

impl Artifact for EquilibriumReport {
    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let e = &self.equilibrium;
        writeln!(w, "# fingerprint: {}", self.fingerprint)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# eps: {}", fmt_f64(e.eps))?;
        writeln!(w, "# mu: {}", fmt_f64(e.mu))?;
        writeln!(w, "# profit_residual: {}", fmt_f64(e.residuals.profit))?;
        writeln!(w, "# clearing_residual: {}", fmt_f64(e.residuals.clearing))?;
        writeln!(w, "firm,price,production,consumption_budget")?;
        for i in 0..e.prices.len() {
            writeln!(w, "{i},{},{},{}", fmt_f64(e.prices[i]), fmt_f64(e.gammas[i]), fmt_f64(e.kappa[i]))?;
        }
        Ok(())
    }
}

impl Artifact for SpectrumReport {
    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# eps: {}", fmt_f64(self.eps))?;
        writeln!(w, "# tau_relax_numeric: {}", fmt_f64(self.tau_relax_numeric))?;
        writeln!(w, "# tau_relax_analytic: {}", fmt_f64(self.tau_relax_analytic))?;
        let eigs: Vec<Complex64> = self.eigenvalues.iter().map(|e| Complex64::new(e.re, e.im)).collect();
        firmnet::output::write_spectrum_csv(&eigs, &self.fingerprint, w)
    }
}

impl Artifact for NaiveReport {
    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let n = self.equilibrium.len() / 2;
        writeln!(w, "# fingerprint: {}", self.fingerprint)?;
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# eps: {}", fmt_f64(self.eps))?;
        writeln!(w, "# tau_relax_analytic: {}", fmt_f64(self.tau_relax_analytic))?;
        if let Some(f) = &self.fit {
            writeln!(w, "# tau_relax_fitted: {}", fmt_f64(f.tau))?;
        }
        writeln!(w, "# status: {}", serde_json::to_string(&self.status).map_err(|e| Error::Io(e.to_string()))?)?;
        let mut header = vec!["t".to_string(), "distance".to_string()];
        header.extend((0..n).map(|i| format!("p_{i}")));
        header.extend((0..n).map(|i| format!("gamma_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.times.len() {
            let mut row = vec![fmt_f64(self.times[k]), fmt_f64(self.distance[k])];
            row.extend(self.states[k].iter().map(|x| fmt_f64(*x)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

impl Artifact for VolatilityOutput {
    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        let v = &self.volatility;
        writeln!(w, "# fingerprint: {}", self.fingerprint)?;
        writeln!(w, "seed,eps,shock_sigma,correlation_time,price,production,marginal_plus,marginal_minus")?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            self.seed,
            fmt_f64(self.eps),
            fmt_f64(self.shock_sigma),
            fmt_f64(self.correlation_time),
            fmt_f64(v.price),
            fmt_f64(v.production),
            fmt_f64(v.marginal_plus),
            fmt_f64(v.marginal_minus)
        )?;
        Ok(())
    }
}

impl Artifact for SimulationReport {
    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        writeln!(w, "# seed: {}", self.seed)?;
        writeln!(w, "# label: {}", self.label)?;
        write_trajectory_csv(&self.trajectory, &self.fingerprint, w)
    }
}

impl Artifact for PhaseDiagram {
    fn write_csv(&self, w: &mut dyn Write) -> Result<()> {
        write_phase_diagram_csv(self, w)
    }
}
