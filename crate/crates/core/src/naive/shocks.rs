//! Linear response of the naive dynamics to random productivity shocks.
//!
//! Productivities fluctuate as `z_i + xi_i(t)` with iid Gaussian `xi`. To first
//! order the relative deviations `U = (dp/p, dgamma/gamma)` obey
//! `dU/dt = D U + B xi` where `D` is the rescaled stability matrix and column `i`
//! of `B` carries `-(alpha + alpha')/z_i` on the price row and `(beta - beta')/z_i`
//! on the production row.
//!
//! Noise normalisation: `<xi(t) xi(s)> = (sigma^2 / tau) exp(-|t - s| / tau)`,
//! whose `tau -> 0` limit is `2 sigma^2 delta(t - s)`. With `tau > 0` the state is
//! augmented with the Ornstein-Uhlenbeck process `xi`.
//!
//! Trajectories use the exact discretisation of the linear SDE on a fixed sampling
//! grid, so steps can be much longer than the fast relaxation times.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::stability::rescaled_stability_matrix;
use super::NaiveModel;
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::seeds::{Seeds, Stream};
use crate::spectral::eigenvalues;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    /// Shock amplitude `sigma`.
    pub sigma: f64,
    /// Correlation time of the shocks; 0 means white noise.
    pub correlation_time: f64,
    /// Measurement window after burn-in.
    pub t_end: f64,
    pub burn_in: f64,
    /// Sampling step of the exact discretisation.
    pub sample_dt: f64,
}

impl ShockSpec {
    /// Grid tied to the slowest time scale `T`: step `T/20`, burn-in `10 T`, window `200 T`.
    pub fn auto(system: &LinearShockSystem, sigma: f64, correlation_time: f64) -> Self {
        let t = system.tau_slow.max(correlation_time);
        ShockSpec { sigma, correlation_time, t_end: 200.0 * t, burn_in: 10.0 * t, sample_dt: t / 20.0 }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.sigma >= 0.0
            && self.sigma.is_finite()
            && self.correlation_time >= 0.0
            && self.correlation_time.is_finite()
            && self.t_end > 0.0
            && self.burn_in >= 0.0
            && self.sample_dt > 0.0
            && self.t_end.is_finite()
            && self.burn_in.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid shock specification {self:?}")))
        }
    }
}

/// Standard deviations of the stationary fluctuations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VolatilityReport {
    /// `sqrt(mean_i Var(dp_i / p_i))`.
    pub price: f64,
    /// `sqrt(mean_i Var(dgamma_i / gamma_i))`.
    pub production: f64,
    /// Raw amplitude along the slowest eigenvector pair (unit-norm in raw coordinates).
    pub marginal_plus: f64,
    pub marginal_minus: f64,
    pub samples: usize,
}

/// One slow eigen-direction of the rescaled stability matrix.
#[derive(Clone, Debug)]
pub struct MarginalMode {
    pub value: Complex64,
    /// Left eigenvector `w` (`w^T D = lambda w^T`), divided by `w^T r`.
    left: DVector<Complex64>,
    /// Norm of the right eigenvector mapped back to raw coordinates.
    raw_norm: f64,
}

impl MarginalMode {
    /// Raw amplitude of the rescaled deviation `u` along this mode.
    pub fn project(&self, u: &[f64]) -> Complex64 {
        let c: Complex64 = self.left.iter().zip(u).map(|(w, x)| w * x).sum();
        c * self.raw_norm
    }

    /// `E|project(U)|^2` for a real covariance of `U`.
    pub fn variance(&self, cov: &DMatrix<f64>) -> f64 {
        let w = &self.left;
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..w.len() {
            for b in 0..w.len() {
                s += w[a] * cov[(a, b)] * w[b].conj();
            }
        }
        s.re * self.raw_norm * self.raw_norm
    }
}

/// Right null vector of a complex square matrix (smallest singular direction).
fn null_vector(m: DMatrix<Complex64>) -> DVector<Complex64> {
    let n = m.nrows();
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let k = (0..svd.singular_values.len())
        .min_by(|a, b| svd.singular_values[*a].total_cmp(&svd.singular_values[*b]))
        .expect("non-empty matrix");
    DVector::from_fn(n, |j, _| v_t[(k, j)].conj())
}

fn marginal_modes(drift: &DMatrix<f64>, raw_scale: &DVector<f64>) -> Result<[MarginalMode; 2]> {
    let dim = drift.nrows();
    let mut ev = eigenvalues(drift);
    ev.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    if ev.len() < 2 {
        return Err(Error::InvalidEconomy("need at least two modes".into()));
    }
    let dc = drift.map(|x| Complex64::new(x, 0.0));
    let eye = DMatrix::<Complex64>::identity(dim, dim);
    let mode = |lambda: Complex64| -> Result<MarginalMode> {
        let r = null_vector(&dc - &eye * lambda);
        let w = null_vector(dc.transpose() - &eye * lambda);
        let wr: Complex64 = w.iter().zip(r.iter()).map(|(a, b)| a * b).sum();
        if wr.norm() < 1e-14 {
            return Err(Error::SolveFailure("defective marginal eigenvalue".into()));
        }
        let raw_norm = r.iter().zip(raw_scale.iter()).map(|(x, s)| (x * s).norm_sqr()).sum::<f64>().sqrt();
        Ok(MarginalMode { value: lambda, left: w / wr, raw_norm })
    };
    // The slower one first.
    let (a, b) = if ev[0].re >= ev[1].re { (ev[0], ev[1]) } else { (ev[1], ev[0]) };
    Ok([mode(a)?, mode(b)?])
}

/// Linearised shock response around one equilibrium.
#[derive(Clone, Debug)]
pub struct LinearShockSystem {
    /// Rescaled stability matrix.
    pub drift: DMatrix<f64>,
    /// Noise loading `B` (2N x N).
    pub loading: DMatrix<f64>,
    /// `(p_eq, gamma_eq)`: multiplies rescaled deviations into raw ones.
    pub raw_scale: DVector<f64>,
    pub modes: [MarginalMode; 2],
    /// `-1 / max Re(lambda)`.
    pub tau_slow: f64,
}

impl LinearShockSystem {
    pub fn new(model: &NaiveModel, eq: &Equilibrium) -> Result<Self> {
        let n = model.n();
        let drift = rescaled_stability_matrix(model, eq);
        let max_re = eigenvalues(&drift).iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        if !(max_re < 0.0) {
            return Err(Error::InvalidParameter(format!("linear dynamics not stable (max Re = {max_re})")));
        }
        let pr = model.params;
        let mut loading = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            let z = model.econ.z[i];
            loading[(i, i)] = -(pr.alpha + pr.alpha_p) / z;
            loading[(n + i, i)] = (pr.beta - pr.beta_p) / z;
        }
        let raw_scale = super::pack(&eq.prices, &eq.gammas);
        let modes = marginal_modes(&drift, &raw_scale)?;
        Ok(LinearShockSystem { drift, loading, raw_scale, modes, tau_slow: -1.0 / max_re })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    /// Continuous-time drift and noise intensity of the simulated state.
    pub fn generator(&self, sigma: f64, correlation_time: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dim();
        let n = self.loading.ncols();
        if correlation_time == 0.0 {
            let q = &self.loading * self.loading.transpose() * (2.0 * sigma * sigma);
            return (self.drift.clone(), q);
        }
        let mut a = DMatrix::zeros(d + n, d + n);
        a.view_mut((0, 0), (d, d)).copy_from(&self.drift);
        a.view_mut((0, d), (d, n)).copy_from(&self.loading);
        let mut q = DMatrix::zeros(d + n, d + n);
        for k in 0..n {
            a[(d + k, d + k)] = -1.0 / correlation_time;
            q[(d + k, d + k)] = 2.0 * sigma * sigma / (correlation_time * correlation_time);
        }
        (a, q)
    }

    /// Stationary covariance of `U`, by doubling the exact one-step recursion.
    pub fn stationary_covariance(&self, sigma: f64, correlation_time: f64) -> Result<DMatrix<f64>> {
        let (a, q) = self.generator(sigma, correlation_time);
        let h = self.tau_slow.max(correlation_time) / 20.0;
        let (mut f, mut cov) = discretize(&a, &q, h);
        for _ in 0..200 {
            if f.amax() < 1e-20 {
                let d = self.dim();
                return Ok(cov.view((0, 0), (d, d)).into_owned());
            }
            cov = &f * &cov * f.transpose() + &cov;
            f = &f * &f;
        }
        Err(Error::NoConvergence { iterations: 200, residual: f.amax() })
    }

    pub fn report_from_covariance(&self, cov: &DMatrix<f64>) -> VolatilityReport {
        let n = self.loading.ncols();
        let price = ((0..n).map(|i| cov[(i, i)]).sum::<f64>() / n as f64).sqrt();
        let production = ((n..2 * n).map(|i| cov[(i, i)]).sum::<f64>() / n as f64).sqrt();
        VolatilityReport {
            price,
            production,
            marginal_plus: self.modes[0].variance(cov).max(0.0).sqrt(),
            marginal_minus: self.modes[1].variance(cov).max(0.0).sqrt(),
            samples: 0,
        }
    }

    /// Stationary volatilities from the covariance (no sampling).
    pub fn stationary_volatility(&self, sigma: f64, correlation_time: f64) -> Result<VolatilityReport> {
        Ok(self.report_from_covariance(&self.stationary_covariance(sigma, correlation_time)?))
    }

    /// Samples one trajectory from the equilibrium and reports time variances over the window.
    ///
    /// Every `record_stride`-th sample of the rescaled deviation is kept (none when 0).
    pub fn simulate<R: Rng>(&self, spec: &ShockSpec, rng: &mut R, record_stride: usize) -> Result<ShockRun> {
        spec.validate()?;
        let (a, q) = self.generator(spec.sigma, spec.correlation_time);
        let (f, qd) = discretize(&a, &q, spec.sample_dt);
        let chol = psd_factor(&qd);
        let dim_total = a.nrows();
        let d = self.dim();
        let n = self.loading.ncols();
        let mut x = DVector::zeros(dim_total);
        let mut w = DVector::zeros(dim_total);
        let burn = (spec.burn_in / spec.sample_dt).ceil() as usize;
        let steps = (spec.t_end / spec.sample_dt).ceil() as usize;
        let mut sum = vec![0.0; d];
        let mut sum_sq = vec![0.0; d];
        let mut mode_sum = [Complex64::new(0.0, 0.0); 2];
        let mut mode_sq = [0.0; 2];
        let mut times = Vec::new();
        let mut states = Vec::new();
        for step in 0..burn + steps {
            w.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
            x = &f * &x + &chol * &w;
            if step < burn {
                continue;
            }
            let u = &x.as_slice()[..d];
            for k in 0..d {
                sum[k] += u[k];
                sum_sq[k] += u[k] * u[k];
            }
            for (m, mode) in self.modes.iter().enumerate() {
                let c = mode.project(u);
                mode_sum[m] += c;
                mode_sq[m] += c.norm_sqr();
            }
            let k = step - burn;
            if record_stride > 0 && k.is_multiple_of(record_stride) {
                times.push((k + 1) as f64 * spec.sample_dt);
                states.push(u.to_vec());
            }
        }
        let cnt = steps as f64;
        let var = |k: usize| (sum_sq[k] / cnt - (sum[k] / cnt).powi(2)).max(0.0);
        let price = ((0..n).map(var).sum::<f64>() / n as f64).sqrt();
        let production = ((n..2 * n).map(var).sum::<f64>() / n as f64).sqrt();
        let mode_vol = |m: usize| (mode_sq[m] / cnt - (mode_sum[m] / cnt).norm_sqr()).max(0.0).sqrt();
        let report = VolatilityReport { price, production, marginal_plus: mode_vol(0), marginal_minus: mode_vol(1), samples: steps };
        Ok(ShockRun { report, times, states })
    }
}

#[derive(Clone, Debug)]
pub struct ShockRun {
    pub report: VolatilityReport,
    /// Times measured from the end of burn-in.
    pub times: Vec<f64>,
    /// Recorded rescaled deviations `(dp/p, dgamma/gamma)`.
    pub states: Vec<Vec<f64>>,
}

/// Builds the linear system and samples one run with the `Shocks` stream of `seed`.
pub fn simulate_with_shocks(model: &NaiveModel, eq: &Equilibrium, spec: &ShockSpec, seed: u64) -> Result<ShockRun> {
    let sys = LinearShockSystem::new(model, eq)?;
    let mut rng: ChaCha8Rng = Seeds::new(seed).rng(Stream::Shocks);
    sys.simulate(spec, &mut rng, 1)
}

/// Exact transition `F = exp(A h)` and noise covariance `int_0^h e^{As} Q e^{A^T s} ds`.
///
/// Van Loan's block exponential on a short step, then repeated doubling up to `h`
/// (keeps the exponential of `-A` from overflowing on long steps).
pub fn discretize(a: &DMatrix<f64>, q: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let norm1 = (0..n).map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut doublings = 0u32;
    let mut h0 = h;
    while norm1 * h0 > 0.5 && doublings < 60 {
        h0 *= 0.5;
        doublings += 1;
    }
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n)).copy_from(&(-a * h0));
    c.view_mut((0, n), (n, n)).copy_from(&(q * h0));
    c.view_mut((n, n), (n, n)).copy_from(&(a.transpose() * h0));
    let e = c.exp();
    let mut f = e.view((n, n), (n, n)).transpose();
    let mut qd = &f * e.view((0, n), (n, n));
    for _ in 0..doublings {
        qd = &f * &qd * f.transpose() + &qd;
        f = &f * &f;
    }
    let qd = (&qd + qd.transpose()) * 0.5;
    (f, qd)
}

/// `L` with `L L^T = m` for a symmetric positive semi-definite `m`.
fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut l = eig.eigenvectors.clone();
    for (j, lam) in eig.eigenvalues.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        l.column_mut(j).scale_mut(s);
    }
    l
}
