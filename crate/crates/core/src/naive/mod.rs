//! Continuous-time tatonnement on a constant-returns Leontief economy.
//!
//! State layout is `[p_0..p_{N-1}, gamma_0..gamma_{N-1}]`. Prices are in wage
//! units (`p_0 = 1`), and the household spends `mu theta_i` on good `i` with
//! `mu = L0 / sum(theta)`.

pub mod bulk;
pub mod shocks;
pub mod stability;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::economy::{Economy, Elasticity};
use crate::equilibrium::{solve_leontief_crs, Equilibrium};
use crate::error::{Error, Result};
use crate::spectral::{network_matrix, network_matrix_raw};

pub use bulk::{bulk_spectrum_check, BulkCheck};
pub use shocks::{LinearShockSystem, ShockSpec, VolatilityReport};
pub use stability::{
    beta_c, fd_jacobian, marginal_eigs, relaxation_time_analytic, relaxation_time_high_z, stability_report, Regime, StabilityReport,
};

/// Adjustment speeds, shared by every firm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaiveParams {
    /// Price response to excess supply.
    pub alpha: f64,
    /// Price response to profits.
    pub alpha_p: f64,
    /// Production response to profits.
    pub beta: f64,
    /// Production response to excess supply.
    pub beta_p: f64,
}

impl NaiveParams {
    pub fn uniform(x: f64) -> Self {
        NaiveParams { alpha: x, alpha_p: x, beta: x, beta_p: x }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in [("alpha", self.alpha), ("alpha_prime", self.alpha_p), ("beta", self.beta), ("beta_prime", self.beta_p)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        Ok(())
    }

    pub fn max(&self) -> f64 {
        self.alpha.max(self.alpha_p).max(self.beta).max(self.beta_p)
    }

    /// `alpha + alpha' + beta'`: trace term of the per-mode quadratic.
    pub fn damping(&self) -> f64 {
        self.alpha + self.alpha_p + self.beta_p
    }

    /// `alpha beta + alpha' beta'`.
    pub fn coupling(&self) -> f64 {
        self.alpha * self.beta + self.alpha_p * self.beta_p
    }

    /// RK4 step `min(0.01, 0.01 / max speed)`.
    pub fn default_dt(&self) -> f64 {
        let m = self.max();
        if m > 0.0 {
            0.01f64.min(0.01 / m)
        } else {
            0.01
        }
    }
}

/// Row-compressed `M` for the right-hand side.
#[derive(Clone, Debug)]
struct Csr {
    start: Vec<usize>,
    col: Vec<usize>,
    val: Vec<f64>,
}

impl Csr {
    fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut start = vec![0];
        let mut col = Vec::new();
        let mut val = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    col.push(j);
                    val.push(m[(i, j)]);
                }
            }
            start.push(col.len());
        }
        Csr { start, col, val }
    }

    /// `out = M x`
    fn mul(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.start[i]..self.start[i + 1] {
                s += self.val[k] * x[self.col[k]];
            }
            *o = s;
        }
    }

    /// `out = M^T x`
    fn mul_t(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for i in 0..self.start.len() - 1 {
            for k in self.start[i]..self.start[i + 1] {
                out[self.col[k]] += self.val[k] * x[i];
            }
        }
    }
}

/// The naive model attached to one economy.
#[derive(Clone, Debug)]
pub struct NaiveModel {
    pub econ: Economy,
    pub params: NaiveParams,
    /// `diag(z) - J`.
    pub m: DMatrix<f64>,
    pub mu: f64,
    csr: Csr,
}

impl NaiveModel {
    pub fn new(econ: &Economy, params: NaiveParams) -> Result<Self> {
        params.validate()?;
        if !(econ.q == Elasticity::Leontief && econ.b == 1.0) {
            return Err(Error::InvalidParameter("naive dynamics need constant-returns Leontief technology".into()));
        }
        let m = network_matrix_raw(econ);
        let csr = Csr::from_dense(&m);
        let mu = econ.household.l0 / econ.theta0.sum();
        Ok(NaiveModel { econ: econ.clone(), params, m, mu, csr })
    }

    pub fn n(&self) -> usize {
        self.econ.n()
    }

    /// Consumption budgets `mu theta`.
    pub fn kappa(&self) -> DVector<f64> {
        &self.econ.theta0 * self.mu
    }

    /// Fixed point of the dynamics (errors when not realisable).
    pub fn equilibrium(&self) -> Result<Equilibrium> {
        let nm = network_matrix(&self.econ);
        let mut eq = solve_leontief_crs(&nm, &self.econ.labor_vector(), &self.kappa())?;
        eq.mu = self.mu;
        eq.residuals = crate::equilibrium::residuals(&self.econ, &eq.prices, &eq.gammas, &eq.kappa)?;
        Ok(eq)
    }

    /// Right-hand side on the packed state.
    ///
    /// With `E = M^T gamma - mu theta / p` (excess supply) and `P = M p - V` (unit profit):
    /// `dp/dt = -(alpha p E + alpha' gamma P) / (z gamma)`,
    /// `dgamma/dt = (beta gamma P - beta' p E) / (z p)`.
    pub fn rhs(&self, x: &[f64], dx: &mut [f64]) {
        let n = self.n();
        let (p, g) = x.split_at(n);
        let (dp, dg) = dx.split_at_mut(n);
        // dp holds M^T gamma, dg holds M p until the final combination.
        self.csr.mul_t(g, dp);
        self.csr.mul(p, dg);
        let NaiveParams { alpha, alpha_p, beta, beta_p } = self.params;
        for i in 0..n {
            let z = self.econ.z[i];
            let excess = dp[i] - self.mu * self.econ.theta0[i] / p[i];
            let profit = dg[i] - self.econ.labor(i);
            dp[i] = -(alpha * p[i] * excess + alpha_p * g[i] * profit) / (z * g[i]);
            dg[i] = (beta * g[i] * profit - beta_p * p[i] * excess) / (z * p[i]);
        }
    }

    pub fn rhs_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut dx = DVector::zeros(x.len());
        self.rhs(x.as_slice(), dx.as_mut_slice());
        dx
    }
}

/// Packs equilibrium prices and productions into one state vector.
pub fn pack(p: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    let n = p.len();
    DVector::from_fn(2 * n, |k, _| if k < n { p[k] } else { g[k - n] })
}

/// Equilibrium state with every component multiplied by `1 + delta u`, `u` uniform on `[-1, 1]`.
pub fn perturbed_state<R: Rng>(eq: &Equilibrium, delta: f64, rng: &mut R) -> DVector<f64> {
    pack(&eq.prices, &eq.gammas).map(|x| x * (1.0 + delta * rng.gen_range(-1.0..=1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NaiveStatus {
    Completed,
    /// A component left `(0, 1e12)` or became non-finite.
    Diverged {
        time: f64,
    },
    /// The observer asked to stop.
    Stopped {
        time: f64,
    },
}

#[derive(Clone, Debug)]
pub struct NaiveTrajectory {
    pub times: Vec<f64>,
    /// Packed states, one per recorded time.
    pub states: Vec<Vec<f64>>,
    pub status: NaiveStatus,
}

pub const DIVERGENCE_BOUND: f64 = 1e12;

fn out_of_bounds(x: &[f64]) -> bool {
    x.iter().any(|v| !(*v > 0.0 && *v < DIVERGENCE_BOUND))
}

/// Fixed-step RK4 from `x0` until `t_end`. `observe(t, x)` runs at every step
/// (including `t = 0`) and returns `false` to stop early.
pub fn integrate_with<F>(model: &NaiveModel, x0: &[f64], t_end: f64, dt: f64, mut observe: F) -> Result<NaiveStatus>
where
    F: FnMut(f64, &[f64]) -> bool,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if x0.len() != 2 * model.n() {
        return Err(Error::InvalidParameter(format!("state has {} entries, expected {}", x0.len(), 2 * model.n())));
    }
    let dim = x0.len();
    let mut x = x0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    if out_of_bounds(&x) {
        return Ok(NaiveStatus::Diverged { time: 0.0 });
    }
    if !observe(0.0, &x) {
        return Ok(NaiveStatus::Stopped { time: 0.0 });
    }
    let steps = (t_end / dt).round() as u64;
    for s in 1..=steps {
        model.rhs(&x, &mut k1);
        for k in 0..dim {
            tmp[k] = x[k] + 0.5 * dt * k1[k];
        }
        model.rhs(&tmp, &mut k2);
        for k in 0..dim {
            tmp[k] = x[k] + 0.5 * dt * k2[k];
        }
        model.rhs(&tmp, &mut k3);
        for k in 0..dim {
            tmp[k] = x[k] + dt * k3[k];
        }
        model.rhs(&tmp, &mut k4);
        for k in 0..dim {
            x[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        }
        let t = s as f64 * dt;
        if out_of_bounds(&x) {
            return Ok(NaiveStatus::Diverged { time: t });
        }
        if !observe(t, &x) {
            return Ok(NaiveStatus::Stopped { time: t });
        }
    }
    Ok(NaiveStatus::Completed)
}

/// RK4 trajectory recorded every `stride` steps; the final state is always kept.
pub fn integrate(model: &NaiveModel, x0: &[f64], t_end: f64, dt: f64, stride: usize) -> Result<NaiveTrajectory> {
    let stride = stride.max(1);
    let mut times = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut step = 0usize;
    let mut last: Option<(f64, Vec<f64>)> = None;
    let status = integrate_with(model, x0, t_end, dt, |t, x| {
        if step.is_multiple_of(stride) {
            times.push(t);
            states.push(x.to_vec());
            last = None;
        } else {
            last = Some((t, x.to_vec()));
        }
        step += 1;
        true
    })?;
    if let Some((t, x)) = last {
        times.push(t);
        states.push(x);
    }
    Ok(NaiveTrajectory { times, states, status })
}

/// Least-squares decay time of `log ||U||` over the tail of a relaxation run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationFit {
    pub tau: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
}

/// Fits `norm ~ exp(-t / tau)` over the second half (in time) of the samples.
pub fn fit_relaxation_time(times: &[f64], norms: &[f64]) -> Result<RelaxationFit> {
    if times.len() != norms.len() {
        return Err(Error::InvalidParameter("times and norms differ in length".into()));
    }
    let valid: Vec<(f64, f64)> = times.iter().zip(norms).filter(|(_, n)| **n > 0.0 && n.is_finite()).map(|(t, n)| (*t, n.ln())).collect();
    if valid.len() < 4 {
        return Err(Error::InsufficientData("fewer than four positive norm samples".into()));
    }
    let t_mid = 0.5 * (valid[0].0 + valid[valid.len() - 1].0);
    let tail: Vec<(f64, f64)> = valid.into_iter().filter(|(t, _)| *t >= t_mid).collect();
    if tail.len() < 3 {
        return Err(Error::InsufficientData("tail window too short".into()));
    }
    let k = tail.len() as f64;
    let mt = tail.iter().map(|v| v.0).sum::<f64>() / k;
    let my = tail.iter().map(|v| v.1).sum::<f64>() / k;
    let sxy: f64 = tail.iter().map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = tail.iter().map(|(t, _)| (t - mt).powi(2)).sum();
    let slope = sxy / sxx;
    let tau = if slope < 0.0 { -1.0 / slope } else { f64::INFINITY };
    Ok(RelaxationFit { tau, t_start: tail[0].0, t_end: tail[tail.len() - 1].0, points: tail.len() })
}

/// Perturbs the equilibrium by `delta`, integrates with RK4 until the rescaled
/// deviation has shrunk by `decay` (or `t_max`), then fits the tail.
pub fn measure_relaxation_time<R: Rng>(
    model: &NaiveModel,
    eq: &Equilibrium,
    delta: f64,
    decay: f64,
    t_max: f64,
    rng: &mut R,
) -> Result<RelaxationFit> {
    let x_eq = pack(&eq.prices, &eq.gammas);
    let x0 = perturbed_state(eq, delta, rng);
    let rel = |x: &[f64]| -> f64 { x.iter().zip(x_eq.iter()).map(|(a, b)| ((a - b) / b).powi(2)).sum::<f64>().sqrt() };
    let n0 = rel(x0.as_slice());
    let dt = model.params.default_dt();
    let record_every = 10usize;
    let (mut times, mut norms) = (Vec::new(), Vec::new());
    let mut step = 0usize;
    let status = integrate_with(model, x0.as_slice(), t_max, dt, |t, x| {
        let r = rel(x);
        if step.is_multiple_of(record_every) {
            times.push(t);
            norms.push(r);
        }
        step += 1;
        r > decay * n0
    })?;
    if let NaiveStatus::Diverged { time } = status {
        return Err(Error::InvalidParameter(format!("naive dynamics diverged at t = {time}")));
    }
    fit_relaxation_time(&times, &norms)
}
