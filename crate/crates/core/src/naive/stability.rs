//! Linearisation of the naive dynamics around equilibrium and the closed-form
//! relaxation predictors.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{pack, NaiveModel, NaiveParams};
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::spectral::eigenvalues;

#[derive(Clone, Debug)]
pub struct StabilityReport {
    /// Jacobian in raw coordinates `(delta p, delta gamma)`.
    pub d_matrix: DMatrix<f64>,
    /// Spectrum (computed on the rescaled, similar matrix).
    pub eigenvalues: Vec<Complex64>,
    /// `-1 / max Re(lambda)`, infinite if the spectrum is not strictly stable.
    pub tau_relax_numeric: f64,
    /// Closed form with the largest productivity as scale.
    pub tau_relax_analytic: f64,
    /// Closed form with the Perron root of `J` as scale.
    pub tau_relax_perron: f64,
    /// The two eigenvalues of smallest modulus.
    pub marginal_pair: [Complex64; 2],
}

/// Analytic Jacobian of the right-hand side at `eq`, raw coordinates.
///
/// Blocks (rows p then gamma, columns p then gamma):
/// `D1 = -alpha diag(mu theta / (z gamma p)) - alpha' diag(1/z) M`,
/// `D2 = -alpha diag(p / (z gamma)) M^T`,
/// `D3 = beta diag(gamma / (z p)) M - beta' diag(mu theta / (z p^2))`,
/// `D4 = -beta' diag(1/z) M^T`.
pub fn stability_matrix(model: &NaiveModel, eq: &Equilibrium) -> DMatrix<f64> {
    let n = model.n();
    let NaiveParams { alpha, alpha_p, beta, beta_p } = model.params;
    let (p, g, z, th) = (&eq.prices, &eq.gammas, &model.econ.z, &model.econ.theta0);
    let mu = model.mu;
    let m = &model.m;
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for k in 0..n {
            let mik = m[(i, k)];
            let mki = m[(k, i)];
            d[(i, k)] = -alpha_p * mik / z[i];
            d[(i, n + k)] = -alpha * p[i] / (z[i] * g[i]) * mki;
            d[(n + i, k)] = beta * g[i] / (z[i] * p[i]) * mik;
            d[(n + i, n + k)] = -beta_p * mki / z[i];
        }
        d[(i, i)] -= alpha * mu * th[i] / (z[i] * g[i] * p[i]);
        d[(n + i, i)] -= beta_p * mu * th[i] / (z[i] * p[i] * p[i]);
    }
    d
}

/// `S D S^-1` with `S = diag(1/p, 1/gamma)`: the Jacobian for relative deviations.
///
/// Same spectrum as the raw matrix, but entries stay O(1) when `p` and `gamma`
/// differ by many orders of magnitude (small `eps`).
pub fn rescaled_stability_matrix(model: &NaiveModel, eq: &Equilibrium) -> DMatrix<f64> {
    let n = model.n();
    let s: Vec<f64> = (0..2 * n).map(|k| if k < n { eq.prices[k] } else { eq.gammas[k - n] }).collect();
    let mut d = stability_matrix(model, eq);
    for a in 0..2 * n {
        for b in 0..2 * n {
            d[(a, b)] *= s[b] / s[a];
        }
    }
    d
}

/// Central finite differences of the right-hand side around the packed equilibrium.
pub fn fd_jacobian(model: &NaiveModel, eq: &Equilibrium, h_rel: f64) -> DMatrix<f64> {
    let x0 = pack(&eq.prices, &eq.gammas);
    let dim = x0.len();
    let mut jac = DMatrix::zeros(dim, dim);
    let mut x = x0.clone();
    for k in 0..dim {
        let h = h_rel * x0[k].abs();
        x[k] = x0[k] + h;
        let fp = model.rhs_vec(&x);
        x[k] = x0[k] - h;
        let fm = model.rhs_vec(&x);
        x[k] = x0[k];
        jac.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    jac
}

/// `||a - b||_F / ||a||_F`.
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / a.norm()
}

/// Largest real part in the spectrum of the firm-firm links.
pub fn perron_root(model: &NaiveModel) -> f64 {
    eigenvalues(&model.econ.firm_block()).iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Relaxation time for a homogeneous economy:
/// `(2 z_max / eps) / (s - sqrt(s^2 - 4c))` when `s^2 > 4c`, else `(2 z_max / eps) / s`,
/// with `s = alpha + alpha' + beta'` and `c = alpha beta + alpha' beta'`.
pub fn relaxation_time_analytic(params: &NaiveParams, z_max: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::NotRealisable { eps });
    }
    Ok(2.0 * z_max / eps * slow_rate_inverse(params))
}

/// Limit of [`relaxation_time_analytic`] when productivities dominate (`eps / z_max -> 1`).
pub fn relaxation_time_high_z(params: &NaiveParams) -> f64 {
    2.0 * slow_rate_inverse(params)
}

fn slow_rate_inverse(params: &NaiveParams) -> f64 {
    let s = params.damping();
    let disc = s * s - 4.0 * params.coupling();
    let denom = if disc > 0.0 { s - disc.sqrt() } else { s };
    if denom > 0.0 {
        1.0 / denom
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Productivities much larger than the link weights.
    HighZ,
    /// Economy close to the realisability boundary.
    LowEps,
}

/// Threshold on `beta` above which the slow pair turns complex in the small-`eps` regime.
pub fn beta_c(params: &NaiveParams) -> f64 {
    let s = params.damping();
    (s * s - 4.0 * params.alpha_p * params.beta_p) / (4.0 * params.alpha)
}

/// The two slowest eigenvalues `(sigma_+, sigma_-)`.
///
/// HighZ: roots of `sigma^2 + s sigma + c = 0`.
/// LowEps: `(eps / (2 rho_N)) (-s +- sqrt(s^2 - 4c))`, complex when `beta > beta_c`.
pub fn marginal_eigs(params: &NaiveParams, rho_n: f64, eps: f64, regime: Regime) -> (Complex64, Complex64) {
    let s = params.damping();
    let root = Complex64::new(s * s - 4.0 * params.coupling(), 0.0).sqrt();
    let scale = match regime {
        Regime::HighZ => 0.5,
        Regime::LowEps => eps / (2.0 * rho_n),
    };
    ((root - s) * scale, (-root - s) * scale)
}

pub fn stability_report(model: &NaiveModel, eq: &Equilibrium) -> Result<StabilityReport> {
    let d = stability_matrix(model, eq);
    let ev = eigenvalues(&rescaled_stability_matrix(model, eq));
    let max_re = ev.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    let tau_numeric = if max_re < 0.0 { -1.0 / max_re } else { f64::INFINITY };
    let tau_analytic = relaxation_time_analytic(&model.params, model.econ.z_max(), eq.eps)?;
    let tau_perron = relaxation_time_analytic(&model.params, perron_root(model), eq.eps)?;
    let mut by_modulus = ev.clone();
    by_modulus.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let marginal_pair = match by_modulus.len() {
        0 => return Err(Error::InvalidEconomy("empty economy".into())),
        1 => [by_modulus[0], by_modulus[0]],
        _ => [by_modulus[0], by_modulus[1]],
    };
    Ok(StabilityReport {
        d_matrix: d,
        eigenvalues: ev,
        tau_relax_numeric: tau_numeric,
        tau_relax_analytic: tau_analytic,
        tau_relax_perron: tau_perron,
        marginal_pair,
    })
}
