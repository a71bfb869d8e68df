//! Competitive equilibrium: zero profits and cleared markets.
//!
//! Prices are in units of the wage. Consumption at equilibrium is `kappa / p`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::economy::{Economy, Elasticity, Household};
use crate::error::{Error, Result};
use crate::production::{lambda_entry, optimal_quantities_into};
use crate::spectral::{network_matrix, NetworkMatrix};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;
const DAMPING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub profit: f64,
    pub clearing: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.profit.max(self.clearing)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Equilibrium {
    #[serde(serialize_with = "ser_vec")]
    pub prices: DVector<f64>,
    #[serde(serialize_with = "ser_vec")]
    pub gammas: DVector<f64>,
    #[serde(serialize_with = "ser_vec")]
    pub kappa: DVector<f64>,
    pub mu: f64,
    pub realisable: bool,
    pub residuals: Residuals,
    pub eps: f64,
    pub iterations: usize,
}

fn ser_vec<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

/// Household multiplier at equilibrium with zero savings: `theta_bar^(phi/(1+phi)) Gamma^(1/(1+phi))`.
pub fn equilibrium_mu(theta_bar: f64, h: &Household) -> f64 {
    if h.frisch.is_infinite() {
        theta_bar
    } else {
        let phi = h.frisch;
        theta_bar.powf(phi / (1.0 + phi)) * h.work_aversion.powf(1.0 / (1.0 + phi))
    }
}

/// Equilibrium nominal consumption budgets `kappa_i = p_i C_i`.
pub fn household_kappa(theta: &DVector<f64>, h: &Household) -> DVector<f64> {
    let mu = equilibrium_mu(theta.sum(), h);
    theta.map(|t| t * h.l0 / mu)
}

/// Equilibrium of `econ` with the consumption budgets implied by its household.
pub fn solve(econ: &Economy) -> Result<Equilibrium> {
    let kappa = household_kappa(&econ.theta0, &econ.household);
    let mu = equilibrium_mu(econ.theta0.sum(), &econ.household);
    let mut eq = solve_with_kappa(econ, &kappa)?;
    eq.mu = mu;
    Ok(eq)
}

/// Dispatches on the production branch.
pub fn solve_with_kappa(econ: &Economy, kappa: &DVector<f64>) -> Result<Equilibrium> {
    match econ.q {
        Elasticity::Leontief if econ.b == 1.0 => {
            let nm = network_matrix(econ);
            let mut eq = solve_leontief_crs(&nm, &econ.labor_vector(), kappa)?;
            eq.residuals = residuals(econ, &eq.prices, &eq.gammas, kappa)?;
            Ok(eq)
        }
        Elasticity::CobbDouglas => solve_cobb_douglas(econ, kappa),
        _ => solve_general_ces(econ, kappa, DEFAULT_TOL, DEFAULT_MAX_ITER),
    }
}

/// Leontief technology with constant returns: `M p = V`, then `M^T gamma = kappa / p`.
///
/// Residuals are left at zero; [`solve_with_kappa`] fills them from the economy.
pub fn solve_leontief_crs(nm: &NetworkMatrix, v: &DVector<f64>, kappa: &DVector<f64>) -> Result<Equilibrium> {
    if nm.eps <= 0.0 {
        return Err(Error::NotRealisable { eps: nm.eps });
    }
    let p = refined_solve(&nm.m, v)?;
    if p.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NotRealisable { eps: nm.eps });
    }
    let rhs = kappa.component_div(&p);
    let gamma = refined_solve(&nm.m.transpose(), &rhs)?;
    if gamma.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::NotRealisable { eps: nm.eps });
    }
    Ok(Equilibrium {
        prices: p,
        gammas: gamma,
        kappa: kappa.clone(),
        mu: 1.0,
        realisable: true,
        residuals: Residuals { profit: 0.0, clearing: 0.0 },
        eps: nm.eps,
        iterations: 0,
    })
}

/// LU solve with one step of iterative refinement.
fn refined_solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = m.clone().lu();
    let mut x = lu.solve(rhs).ok_or_else(|| Error::SolveFailure("singular matrix".into()))?;
    let r = rhs - m * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SolveFailure("non-finite solution".into()));
    }
    Ok(x)
}

/// General CES (finite `q`, including the Leontief limit with `b != 1`).
///
/// Damped fixed point in log space alternating two linear solves:
/// zero profit `z^zeta p^zeta gamma^(zeta(b-1)/b) = Lambda_0 + Lambda p^zeta` for `p^zeta` at fixed `gamma`,
/// then clearing `z gamma = kappa / p + sum_j Q_ji` for `gamma^e`, `e = zeta(bq+1)/b`,
/// with the diagonal frozen at the current `gamma`.
pub fn solve_general_ces(econ: &Economy, kappa: &DVector<f64>, tol: f64, max_iter: usize) -> Result<Equilibrium> {
    let n = econ.n();
    let b = econ.b;
    let (q, zeta) = match econ.q {
        Elasticity::Leontief => (0.0, 1.0),
        Elasticity::Finite(q) => (q, 1.0 / (1.0 + q)),
        Elasticity::CobbDouglas => return solve_cobb_douglas(econ, kappa),
    };
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::InvalidParameter(format!("returns to scale must lie in (0,1], got {b}")));
    }
    let eps = network_matrix(econ).eps;
    let mut lam_f = DMatrix::zeros(n, n);
    let mut lam_0 = DVector::zeros(n);
    for i in 0..n {
        for c in 0..=n {
            let (a, j) = (econ.substitution[(i, c)], econ.links[(i, c)]);
            if j <= 0.0 {
                continue;
            }
            let l = if q == 0.0 {
                j
            } else if a > 0.0 {
                lambda_entry(a, j, q, zeta)
            } else {
                0.0
            };
            if c == 0 {
                lam_0[i] = l;
            } else {
                lam_f[(i, c - 1)] = l;
            }
        }
    }
    let zz = econ.z.map(|x| x.powf(zeta));
    let e_p = zeta * (b - 1.0) / b;
    let e_g = zeta * (b * q + 1.0) / b;

    let mut gamma: DVector<f64> = DVector::from_element(n, 1.0);
    let mut log_p = DVector::zeros(n);
    let mut log_g = DVector::zeros(n);
    let mut first = true;

    for it in 1..=max_iter {
        // Price step.
        let mut mp = -lam_f.clone();
        for i in 0..n {
            mp[(i, i)] += zz[i] * gamma[i].powf(e_p);
        }
        let x = match mp.clone().lu().solve(&lam_0) {
            Some(x) => x,
            // Both systems are Z-matrices with a positive right-hand side: they have a
            // positive solution only when they are non-singular M-matrices.
            None => return Err(Error::NotRealisable { eps }),
        };
        // The linear steps are deterministic given gamma, so leaving the positive
        // orthant once means every later iteration does too.
        if x.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::NotRealisable { eps });
        }
        let p_new = x.map(|v| v.powf(1.0 / zeta));

        // Clearing step: Q_ji = c_ji * gamma_j^e_g.
        let mut mg = DMatrix::zeros(n, n);
        for i in 0..n {
            mg[(i, i)] = econ.z[i] * gamma[i].powf(1.0 - e_g);
        }
        for j in 0..n {
            for &i in econ.suppliers(j) {
                let l = lam_f[(j, i)];
                if l == 0.0 {
                    continue;
                }
                let c = l * p_new[i].powf(-q * zeta) * (econ.z[j] * p_new[j]).powf(q * zeta);
                mg[(i, j)] -= c;
            }
        }
        let rhs = kappa.component_div(&p_new);
        let g = match mg.lu().solve(&rhs) {
            Some(g) => g,
            None => return Err(Error::NotRealisable { eps }),
        };
        if g.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::NotRealisable { eps });
        }
        let lp_new = p_new.map(|v| v.ln());
        let lg_new = g.map(|v| v.ln() / e_g);
        if first {
            log_p = lp_new;
            log_g = lg_new;
            first = false;
        } else {
            log_p = &log_p * (1.0 - DAMPING) + lp_new * DAMPING;
            log_g = &log_g * (1.0 - DAMPING) + lg_new * DAMPING;
        }
        gamma = log_g.map(|v| v.exp());
        let p = log_p.map(|v| v.exp());
        let res = residuals(econ, &p, &gamma, kappa)?;
        if res.max() < tol {
            return Ok(Equilibrium {
                prices: p,
                gammas: gamma,
                kappa: kappa.clone(),
                mu: 1.0,
                realisable: true,
                residuals: res,
                eps,
                iterations: it,
            });
        }
        if it == max_iter {
            return Err(Error::NoConvergence { iterations: it, residual: res.max() });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: f64::NAN })
}

/// Cobb-Douglas technology: the value vector `w = z gamma p` solves `(I - a^T) w = kappa`,
/// then `(I/b - a) log p = ((1-b)/b) log w - (1/b) log z + h`.
///
/// `h_i = sum_c a_ic log(J_ic / a_ic)` runs over every used input, labour included.
pub fn solve_cobb_douglas(econ: &Economy, kappa: &DVector<f64>) -> Result<Equilibrium> {
    let n = econ.n();
    let b = econ.b;
    let a_f = econ.substitution.columns(1, n).into_owned();
    let value_matrix = DMatrix::identity(n, n) - a_f.transpose();
    let w = value_matrix.lu().solve(kappa).ok_or(Error::SingularSystem)?;
    if w.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::SingularSystem);
    }
    let mut h = DVector::zeros(n);
    for i in 0..n {
        for c in 0..=n {
            let (a, j) = (econ.substitution[(i, c)], econ.links[(i, c)]);
            if a > 0.0 && j > 0.0 {
                h[i] += a * (j / a).ln();
            }
        }
    }
    let lhs = DMatrix::identity(n, n) / b - &a_f;
    let rhs = w.map(|v| v.ln()) * ((1.0 - b) / b) - econ.z.map(|v| v.ln()) / b + h;
    let log_p = lhs.lu().solve(&rhs).ok_or(Error::SingularSystem)?;
    if log_p.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let p = log_p.map(|v| v.exp());
    let gamma = DVector::from_fn(n, |i, _| w[i] / (econ.z[i] * p[i]));
    let res = residuals(econ, &p, &gamma, kappa)?;
    let eps = network_matrix(econ).eps;
    Ok(Equilibrium { prices: p, gammas: gamma, kappa: kappa.clone(), mu: 1.0, realisable: true, residuals: res, eps, iterations: 0 })
}

/// Normalised profit and clearing residuals at optimal input demands and consumption `kappa / p`.
///
/// Profit: `max_i |p_i z_i gamma_i - cost_i| / (z_i gamma_i p_i)`;
/// clearing: `max_i |z_i gamma_i - sum_j Qhat_ji - kappa_i / p_i| / (z_i gamma_i)`.
pub fn residuals(econ: &Economy, p: &DVector<f64>, gamma: &DVector<f64>, kappa: &DVector<f64>) -> Result<Residuals> {
    let n = econ.n();
    let mut prices = Vec::with_capacity(n + 1);
    prices.push(1.0);
    prices.extend(p.iter().copied());
    let mut used = vec![0.0; n];
    let mut row = vec![0.0; n + 1];
    let mut profit: f64 = 0.0;
    for i in 0..n {
        let a_row = econ.substitution_row(i);
        let j_row = econ.link_row(i);
        optimal_quantities_into(gamma[i], &prices, econ.b, econ.q, &a_row, &j_row, &mut row)?;
        let cost: f64 = row.iter().zip(&prices).map(|(x, pr)| x * pr).sum();
        let revenue = p[i] * econ.z[i] * gamma[i];
        profit = profit.max((revenue - cost).abs() / revenue);
        for j in 0..n {
            used[j] += row[j + 1];
        }
    }
    let mut clearing: f64 = 0.0;
    for i in 0..n {
        let out = econ.z[i] * gamma[i];
        clearing = clearing.max((out - used[i] - kappa[i] / p[i]).abs() / out);
    }
    Ok(Residuals { profit, clearing })
}
