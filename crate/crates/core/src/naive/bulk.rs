//! Bulk of the stability spectrum on undirected regular networks.
//!
//! For small `eps` each adjacency eigenvalue `x` maps to the pair
//! `c_+- (1 - x / d)` with `c_+- = (-(alpha' + beta') +- sqrt((alpha' - beta')^2 - 4 alpha beta)) / 2`.
//! Adjacency eigenvalues of a large random `d`-regular graph follow the McKay law.

use num_complex::Complex64;
use serde::Serialize;

use super::stability::rescaled_stability_matrix;
use super::{NaiveModel, NaiveParams};
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::spectral::eigenvalues;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `(alpha' - beta')^2 < 4 alpha beta`: bulk eigenvalues come in conjugate pairs.
    Complex,
    Real,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BulkCheck {
    /// Kolmogorov-Smirnov distance between the real parts and the mapped McKay law.
    pub ks_distance: f64,
    pub branch: Branch,
    pub degree: usize,
    pub eigenvalues: usize,
}

/// McKay density of adjacency eigenvalues of a random `d`-regular graph.
pub fn mckay_density(x: f64, d: usize) -> f64 {
    let d = d as f64;
    let r2 = 4.0 * (d - 1.0);
    if x * x >= r2 {
        return 0.0;
    }
    d * (r2 - x * x).sqrt() / (2.0 * std::f64::consts::PI * (d * d - x * x))
}

/// Tabulated McKay distribution function.
///
/// Integrates in `x = R sin(phi)`, `R = 2 sqrt(d - 1)`, where the integrand is smooth.
pub struct McKayCdf {
    radius: f64,
    phis: Vec<f64>,
    cdf: Vec<f64>,
}

impl McKayCdf {
    pub fn new(d: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::InvalidParameter(format!("McKay law needs d >= 3, got {d}")));
        }
        let df = d as f64;
        let radius = 2.0 * (df - 1.0).sqrt();
        let half_pi = std::f64::consts::FRAC_PI_2;
        let n = 20_000;
        let h = 2.0 * half_pi / n as f64;
        let integrand = |phi: f64| {
            let (s, c) = phi.sin_cos();
            df * radius * radius * c * c / (2.0 * std::f64::consts::PI * (df * df - radius * radius * s * s))
        };
        let phis: Vec<f64> = (0..=n).map(|k| -half_pi + k as f64 * h).collect();
        let mut cdf = vec![0.0; n + 1];
        for k in 1..=n {
            // Simpson on each cell with its midpoint.
            let (a, b) = (phis[k - 1], phis[k]);
            let area = (b - a) / 6.0 * (integrand(a) + 4.0 * integrand(0.5 * (a + b)) + integrand(b));
            cdf[k] = cdf[k - 1] + area;
        }
        let total = cdf[n];
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(McKayCdf { radius, phis, cdf })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= -self.radius {
            return 0.0;
        }
        if x >= self.radius {
            return 1.0;
        }
        let phi = (x / self.radius).asin();
        let h = self.phis[1] - self.phis[0];
        let pos = (phi - self.phis[0]) / h;
        let k = (pos.floor() as usize).min(self.phis.len() - 2);
        let w = pos - k as f64;
        self.cdf[k] * (1.0 - w) + self.cdf[k + 1] * w
    }
}

/// `c_+-` of the module docs.
pub fn branch_rates(params: &NaiveParams) -> (Complex64, Complex64) {
    let t = params.alpha_p + params.beta_p;
    let disc = (params.alpha_p - params.beta_p).powi(2) - 4.0 * params.alpha * params.beta;
    let root = Complex64::new(disc, 0.0).sqrt();
    ((root - t) * 0.5, (-root - t) * 0.5)
}

pub fn branch(params: &NaiveParams) -> Branch {
    if (params.alpha_p - params.beta_p).powi(2) < 4.0 * params.alpha * params.beta {
        Branch::Complex
    } else {
        Branch::Real
    }
}

/// Largest gap between the empirical distribution of `sample` and `cdf`.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs()).max((f - (i + 1) as f64 / n).abs());
    }
    d
}

/// Compares real parts of the stability spectrum with the McKay law mapped through `c_+-`.
pub fn bulk_spectrum_check(model: &NaiveModel, eq: &Equilibrium) -> Result<BulkCheck> {
    let econ = &model.econ;
    if !econ.is_symmetric_network() {
        return Err(Error::InvalidNetwork("bulk check needs an undirected network".into()));
    }
    let z0 = econ.z[0];
    if econ.z.iter().any(|z| (z - z0).abs() > 1e-12 * z0.abs()) {
        return Err(Error::InvalidEconomy("bulk check needs homogeneous productivities".into()));
    }
    let block = econ.firm_block();
    let weight = block.iter().copied().find(|w| *w > 0.0).unwrap_or(0.0);
    if block.iter().any(|w| *w != 0.0 && *w != weight) {
        return Err(Error::InvalidNetwork("bulk check needs uniform link weights".into()));
    }
    let degree = econ.suppliers(0).len();
    if (0..econ.n()).any(|i| econ.suppliers(i).len() != degree) {
        return Err(Error::InvalidNetwork("bulk check needs a regular network".into()));
    }
    let mckay = McKayCdf::new(degree)?;
    let (cp, cm) = branch_rates(&model.params);
    if !(cp.re < 0.0 && cm.re < 0.0) {
        return Err(Error::InvalidParameter("bulk rates must be strictly negative".into()));
    }
    let d = degree as f64;
    // Re(c)(1 - x/d) <= y  <=>  x <= d (1 - y / Re(c)) since Re(c) < 0.
    let mapped = |c: f64, y: f64| mckay.cdf(d * (1.0 - y / c));
    let predicted = |y: f64| 0.5 * (mapped(cp.re, y) + mapped(cm.re, y));
    let ev = eigenvalues(&rescaled_stability_matrix(model, eq));
    let re: Vec<f64> = ev.iter().map(|c| c.re).collect();
    Ok(BulkCheck { ks_distance: ks_distance(&re, predicted), branch: branch(&model.params), degree, eigenvalues: re.len() })
}
