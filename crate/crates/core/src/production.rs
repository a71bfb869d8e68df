//! CES production technology and cost-minimising input demands.
//!
//! Rows follow the links layout: entry 0 is labour, entry `j + 1` is firm `j`'s good.
//! Only entries with a positive link take part.

use crate::economy::Elasticity;
use crate::error::{Error, Result};

/// Output of one firm given its inputs.
///
/// Leontief: `z * (min_j Q_j / J_j)^b`; Cobb-Douglas: `z * (prod_j (Q_j / J_j)^a_j)^b`;
/// finite `q`: `z * (sum_j a_j (Q_j / J_j)^(-1/q))^(-b q)`.
pub fn production(z: f64, b: f64, q: Elasticity, a_row: &[f64], j_row: &[f64], inputs: &[f64]) -> Result<f64> {
    if let Some((index, &value)) = inputs.iter().enumerate().find(|(_, x)| !(**x >= 0.0)) {
        return Err(Error::NegativeInput { index, value });
    }
    let support = j_row.iter().enumerate().filter(|(_, j)| **j > 0.0).map(|(k, j)| (k, *j));
    let level = match q {
        Elasticity::Leontief => {
            let mut m = f64::INFINITY;
            for (k, j) in support {
                m = m.min(inputs[k] / j);
            }
            if m.is_infinite() {
                0.0
            } else {
                m
            }
        }
        Elasticity::CobbDouglas => {
            let mut log_sum = 0.0;
            for (k, j) in support {
                let a = a_row[k];
                if a == 0.0 {
                    continue;
                }
                if inputs[k] == 0.0 {
                    return Ok(0.0);
                }
                log_sum += a * (inputs[k] / j).ln();
            }
            log_sum.exp()
        }
        Elasticity::Finite(qv) => {
            // Factor out the smallest ratio to keep the powers finite.
            let ratios: Vec<(f64, f64)> = support.filter(|(k, _)| a_row[*k] > 0.0).map(|(k, j)| (a_row[k], inputs[k] / j)).collect();
            let r_min = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
            if r_min == 0.0 {
                return Ok(0.0);
            }
            if r_min.is_infinite() {
                return Ok(0.0);
            }
            let s: f64 = ratios.iter().map(|(a, r)| a * (r / r_min).powf(-1.0 / qv)).sum();
            r_min * s.powf(-qv)
        }
    };
    Ok(z * level.powf(b))
}

/// Cost-minimising inputs delivering production level `gamma_hat = pi_hat / z`.
///
/// `prices[0]` is the wage, `prices[j + 1]` the price of firm `j`'s good.
pub fn optimal_quantities(gamma_hat: f64, prices: &[f64], b: f64, q: Elasticity, a_row: &[f64], j_row: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; j_row.len()];
    optimal_quantities_into(gamma_hat, prices, b, q, a_row, j_row, &mut out)?;
    Ok(out)
}

pub fn optimal_quantities_into(
    gamma_hat: f64,
    prices: &[f64],
    b: f64,
    q: Elasticity,
    a_row: &[f64],
    j_row: &[f64],
    out: &mut [f64],
) -> Result<()> {
    for (k, &j) in j_row.iter().enumerate() {
        if j > 0.0 && !(prices[k] > 0.0) {
            return Err(Error::NonPositivePrice { index: k, value: prices[k] });
        }
    }
    if !(gamma_hat >= 0.0) {
        return Err(Error::InvalidParameter(format!("target must be >= 0, got {gamma_hat}")));
    }
    out.iter_mut().for_each(|x| *x = 0.0);
    if gamma_hat == 0.0 {
        return Ok(());
    }
    let scale = gamma_hat.powf(1.0 / b);
    match q {
        Elasticity::Leontief => {
            for (k, &j) in j_row.iter().enumerate() {
                out[k] = j * scale;
            }
        }
        Elasticity::Finite(qv) => {
            let zeta = 1.0 / (1.0 + qv);
            // Lambda_k = a_k^(q zeta) J_k^zeta
            let mut s = 0.0;
            for (k, &j) in j_row.iter().enumerate() {
                if j > 0.0 && a_row[k] > 0.0 {
                    s += lambda_entry(a_row[k], j, qv, zeta) * prices[k].powf(zeta);
                }
            }
            let sq = s.powf(qv);
            for (k, &j) in j_row.iter().enumerate() {
                if j > 0.0 && a_row[k] > 0.0 {
                    out[k] = lambda_entry(a_row[k], j, qv, zeta) * prices[k].powf(-qv * zeta) * sq * scale;
                }
            }
        }
        Elasticity::CobbDouglas => {
            let mut log_cost = scale.ln();
            for (k, &j) in j_row.iter().enumerate() {
                let a = a_row[k];
                if j > 0.0 && a > 0.0 {
                    log_cost += a * (prices[k] * j / a).ln();
                }
            }
            let cost = log_cost.exp();
            for (k, &j) in j_row.iter().enumerate() {
                let a = a_row[k];
                if j > 0.0 && a > 0.0 {
                    out[k] = a * cost / prices[k];
                }
            }
        }
    }
    Ok(())
}

/// `a^(q zeta) * J^zeta`.
pub fn lambda_entry(a: f64, j: f64, q: f64, zeta: f64) -> f64 {
    a.powf(q * zeta) * j.powf(zeta)
}

/// Minimal cost of producing `gamma_hat`, i.e. `sum_k p_k Q_k` at the optimum.
pub fn input_cost(gamma_hat: f64, prices: &[f64], b: f64, q: Elasticity, a_row: &[f64], j_row: &[f64]) -> Result<f64> {
    let qs = optimal_quantities(gamma_hat, prices, b, q, a_row, j_row)?;
    Ok(qs.iter().zip(prices).map(|(x, p)| x * p).sum())
}
