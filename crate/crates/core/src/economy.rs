use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Substitution regime of the CES production function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Elasticity {
    Leontief,
    Finite(f64),
    CobbDouglas,
}

impl Elasticity {
    /// Maps a numeric `q` onto the tagged representation (0 and infinity are the limits).
    pub fn from_q(q: f64) -> Result<Self> {
        if q.is_nan() || q < 0.0 {
            return Err(Error::InvalidParameter(format!("elasticity q must be >= 0, got {q}")));
        }
        Ok(if q == 0.0 {
            Elasticity::Leontief
        } else if q.is_infinite() {
            Elasticity::CobbDouglas
        } else {
            Elasticity::Finite(q)
        })
    }

    /// `1 / (1 + q)`; 1 for Leontief, 0 for Cobb-Douglas.
    pub fn zeta(&self) -> f64 {
        match *self {
            Elasticity::Leontief => 1.0,
            Elasticity::Finite(q) => 1.0 / (1.0 + q),
            Elasticity::CobbDouglas => 0.0,
        }
    }

    pub fn q(&self) -> f64 {
        match *self {
            Elasticity::Leontief => 0.0,
            Elasticity::Finite(q) => q,
            Elasticity::CobbDouglas => f64::INFINITY,
        }
    }
}

/// Representative household: Frisch index (may be infinite), work scale and work aversion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Household {
    pub frisch: f64,
    pub l0: f64,
    pub work_aversion: f64,
}

impl Default for Household {
    fn default() -> Self {
        Household { frisch: 1.0, l0: 1.0, work_aversion: 1.0 }
    }
}

/// Default prefactor of the log-updates.
///
/// With 1 the discrete rules reduce to the continuous-time ones at unit step;
/// 2 is the symmetric-normalisation form. See the README for the comparison.
pub const DEFAULT_UPDATE_FACTOR: f64 = 1.0;

/// Behavioural parameters. Firm-level coefficients are stored per firm.
#[derive(Clone, Debug, PartialEq)]
pub struct DynParams {
    pub alpha: Vec<f64>,
    pub alpha_p: Vec<f64>,
    pub beta: Vec<f64>,
    pub beta_p: Vec<f64>,
    pub omega: f64,
    pub omega_p: f64,
    /// Perishability; `f64::INFINITY` means goods vanish after one step.
    pub sigma: Vec<f64>,
    pub lambda: f64,
    /// Prefactor of every log-update (targets, prices, wage, confidence).
    pub update_factor: f64,
}

impl DynParams {
    /// Homogeneous parameters with `alpha = alpha' = beta = beta'` and `omega' = omega`.
    pub fn homogeneous(n: usize, alpha: f64, omega: f64, sigma: f64) -> Self {
        DynParams {
            alpha: vec![alpha; n],
            alpha_p: vec![alpha; n],
            beta: vec![alpha; n],
            beta_p: vec![alpha; n],
            omega,
            omega_p: omega,
            sigma: vec![sigma; n],
            lambda: 1.0,
            update_factor: DEFAULT_UPDATE_FACTOR,
        }
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let vecs: [(&str, &Vec<f64>); 5] = [
            ("alpha", &self.alpha),
            ("alpha_prime", &self.alpha_p),
            ("beta", &self.beta),
            ("beta_prime", &self.beta_p),
            ("sigma", &self.sigma),
        ];
        for (name, v) in vecs {
            if v.len() != n {
                return Err(Error::InvalidParameter(format!("{name} has {} entries, expected {n}", v.len())));
            }
            if let Some(x) = v.iter().find(|x| x.is_nan() || **x < 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be >= 0, got {x}")));
            }
            if name != "sigma" && v.iter().any(|x| x.is_infinite()) {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        for (name, x) in [("omega", self.omega), ("omega_prime", self.omega_p)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {x}")));
            }
        }
        if !(self.update_factor.is_finite() && self.update_factor > 0.0) {
            return Err(Error::InvalidParameter(format!("update_factor must be finite and > 0, got {}", self.update_factor)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("lambda must lie in [0,1], got {}", self.lambda)));
        }
        Ok(())
    }

    /// Survival factor `exp(-sigma_i)`, exactly zero for infinite perishability.
    pub fn survival(&self, i: usize) -> f64 {
        let s = self.sigma[i];
        if s.is_infinite() {
            0.0
        } else {
            (-s).exp()
        }
    }
}

/// Immutable description of one network economy.
///
/// Firms are indexed `0..n`. In `links` and `substitution` column 0 is labour
/// and column `j + 1` is the good of firm `j`.
#[derive(Clone, Debug)]
pub struct Economy {
    pub links: DMatrix<f64>,
    pub substitution: DMatrix<f64>,
    pub z: DVector<f64>,
    pub q: Elasticity,
    pub b: f64,
    pub theta0: DVector<f64>,
    pub household: Household,
    suppliers: Vec<Vec<usize>>,
    clients: Vec<Vec<usize>>,
}

impl Economy {
    pub fn new(
        links: DMatrix<f64>,
        substitution: DMatrix<f64>,
        z: DVector<f64>,
        q: Elasticity,
        b: f64,
        theta0: DVector<f64>,
        household: Household,
    ) -> Result<Self> {
        let n = links.nrows();
        let bad = |m: String| Err(Error::InvalidEconomy(m));
        if n == 0 {
            return bad("at least one firm is required".into());
        }
        if links.ncols() != n + 1 {
            return bad(format!("links must be {n}x{}, got {}x{}", n + 1, n, links.ncols()));
        }
        if substitution.shape() != links.shape() {
            return bad("substitution matrix shape differs from links".into());
        }
        if z.len() != n || theta0.len() != n {
            return bad("z and theta0 must have one entry per firm".into());
        }
        if links.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("links must be finite and non-negative".into());
        }
        for i in 0..n {
            if links[(i, i + 1)] != 0.0 {
                return bad(format!("firm {i} uses its own good as input"));
            }
            let row_sum: f64 = substitution.row(i).iter().sum();
            if (row_sum - 1.0).abs() > 1e-12 {
                return bad(format!("substitution row {i} sums to {row_sum}"));
            }
            for c in 0..=n {
                let a = substitution[(i, c)];
                if !(a.is_finite() && a >= 0.0) {
                    return bad(format!("substitution[{i},{c}] = {a} is invalid"));
                }
                if a > 0.0 && links[(i, c)] == 0.0 {
                    return bad(format!("substitution[{i},{c}] > 0 on a missing link"));
                }
            }
            if !links.row(i).iter().any(|x| *x > 0.0) {
                return bad(format!("firm {i} has no inputs"));
            }
        }
        if z.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return bad("productivities must be positive".into());
        }
        if !(b.is_finite() && b > 0.0) {
            return bad(format!("returns to scale must be positive, got {b}"));
        }
        if let Elasticity::Finite(q) = q {
            if !(q.is_finite() && q > 0.0) {
                return bad(format!("finite elasticity must be positive, got {q}"));
            }
        }
        if theta0.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return bad("preferences must be positive".into());
        }
        let tsum: f64 = theta0.iter().sum();
        if (tsum - 1.0).abs() > 1e-12 {
            return bad(format!("preferences sum to {tsum}, expected 1"));
        }
        let h = household;
        if !(h.frisch > 0.0 && h.l0.is_finite() && h.l0 > 0.0 && h.work_aversion.is_finite() && h.work_aversion > 0.0) {
            return bad("household parameters must be positive".into());
        }

        let mut suppliers = vec![Vec::new(); n];
        let mut clients = vec![Vec::new(); n];
        for i in 0..n {
            for j in 0..n {
                if links[(i, j + 1)] > 0.0 {
                    suppliers[i].push(j);
                    clients[j].push(i);
                }
            }
        }
        Ok(Economy { links, substitution, z, q, b, theta0, household, suppliers, clients })
    }

    /// Economy with substitution weights spread uniformly over each firm's inputs.
    pub fn with_uniform_substitution(
        links: DMatrix<f64>,
        z: DVector<f64>,
        q: Elasticity,
        b: f64,
        theta0: DVector<f64>,
        household: Household,
    ) -> Result<Self> {
        let a = uniform_substitution(&links);
        Economy::new(links, a, z, q, b, theta0, household)
    }

    pub fn n(&self) -> usize {
        self.links.nrows()
    }

    /// Labour requirement `V_i`.
    pub fn labor(&self, i: usize) -> f64 {
        self.links[(i, 0)]
    }

    pub fn labor_vector(&self) -> DVector<f64> {
        self.links.column(0).into_owned()
    }

    /// Firm-firm block of the links (N x N).
    pub fn firm_block(&self) -> DMatrix<f64> {
        self.links.columns(1, self.n()).into_owned()
    }

    /// Firms whose good enters firm `i`'s production.
    pub fn suppliers(&self, i: usize) -> &[usize] {
        &self.suppliers[i]
    }

    /// Firms that use good `j` as an input.
    pub fn clients(&self, j: usize) -> &[usize] {
        &self.clients[j]
    }

    pub fn link_row(&self, i: usize) -> Vec<f64> {
        self.links.row(i).iter().copied().collect()
    }

    pub fn substitution_row(&self, i: usize) -> Vec<f64> {
        self.substitution.row(i).iter().copied().collect()
    }

    pub fn z_max(&self) -> f64 {
        self.z.max()
    }

    /// Copy with new productivities (validated).
    pub fn with_productivities(&self, z: DVector<f64>) -> Result<Self> {
        Economy::new(self.links.clone(), self.substitution.clone(), z, self.q, self.b, self.theta0.clone(), self.household)
    }

    pub fn with_technology(&self, q: Elasticity, b: f64) -> Result<Self> {
        Economy::new(self.links.clone(), self.substitution.clone(), self.z.clone(), q, b, self.theta0.clone(), self.household)
    }

    pub fn is_symmetric_network(&self) -> bool {
        let m = self.firm_block();
        m == m.transpose()
    }
}

/// `a_ij = 1 / (number of inputs of i)` on the support of `links`.
pub fn uniform_substitution(links: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(links.nrows(), links.ncols());
    for i in 0..links.nrows() {
        let k = links.row(i).iter().filter(|x| **x > 0.0).count();
        if k == 0 {
            continue;
        }
        for c in 0..links.ncols() {
            if links[(i, c)] > 0.0 {
                a[(i, c)] = 1.0 / k as f64;
            }
        }
    }
    a
}

/// iid uniform preferences normalised to sum to one.
pub fn random_preferences<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    // Uniform on (0,1]: a zero draw would violate positivity.
    let raw: Vec<f64> = (0..n).map(|_| 1.0 - rng.gen::<f64>()).collect();
    let s: f64 = raw.iter().sum();
    DVector::from_iterator(n, raw.into_iter().map(|x| x / s))
}
