//! Representative household: labour supply, consumption demand and confidence.

use crate::economy::Household;

/// Positive root of `Gamma^(-1/phi) mu^k + (S / W0) mu = theta_bar`, `k = 1 + 1/phi`.
///
/// Closed forms for `phi = inf` and `phi = 1, Gamma = 1`; safeguarded Newton otherwise.
pub fn solve_mu(savings: f64, w0: f64, theta_bar: f64, h: &Household) -> f64 {
    let s = savings / w0;
    let phi = h.frisch;
    if phi.is_infinite() {
        return theta_bar / (1.0 + s);
    }
    if phi == 1.0 && h.work_aversion == 1.0 {
        // (sqrt(s^2 + 4 theta) - s) / 2 without cancellation.
        return 2.0 * theta_bar / ((s * s + 4.0 * theta_bar).sqrt() + s);
    }
    let k = 1.0 + 1.0 / phi;
    let c = h.work_aversion.powf(-1.0 / phi);
    let f = |mu: f64| c * mu.powf(k) + s * mu - theta_bar;
    let df = |mu: f64| c * k * mu.powf(k - 1.0) + s;
    let mut lo = 0.0;
    let mut hi = (theta_bar / c).powf(1.0 / k);
    if s > 0.0 {
        hi = hi.min(theta_bar / s);
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let v = f(mu);
        if v.abs() <= 1e-15 * theta_bar {
            break;
        }
        if v > 0.0 {
            hi = mu;
        } else {
            lo = mu;
        }
        let step = mu - v / df(mu);
        mu = if step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    mu
}

/// `theta0 exp(k omega' (Ld - Ls) / (Ld + Ls))` with update factor `k`; unchanged when both are zero.
pub fn confidence_update(theta0: &[f64], labor_demand: f64, labor_supply: f64, omega_p: f64, factor: f64, out: &mut [f64]) {
    let f = (factor * omega_p * tension(labor_demand, labor_supply)).exp();
    for (o, t) in out.iter_mut().zip(theta0) {
        *o = t * f;
    }
}

/// `(d - s) / (d + s)`, zero when both vanish.
pub fn tension(demand: f64, supply: f64) -> f64 {
    let tot = demand + supply;
    if tot > 0.0 {
        (demand - supply) / tot
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HouseholdPlan {
    pub consumption_demand: Vec<f64>,
    pub labor_supply: f64,
    pub mu: f64,
}

/// Optimal demands `C_i = L0 (theta_i / mu) (p0 / p_i)` and supply `L0 (mu / Gamma)^(1/phi)`.
pub fn household_plan(savings: f64, prices: &[f64], wage: f64, theta: &[f64], h: &Household) -> HouseholdPlan {
    let theta_bar: f64 = theta.iter().sum();
    let mu = solve_mu(savings, wage * h.l0, theta_bar, h);
    let consumption_demand = theta.iter().zip(prices).map(|(t, p)| h.l0 * t / mu * wage / p).collect();
    let labor_supply = if h.frisch.is_infinite() { h.l0 } else { h.l0 * (mu / h.work_aversion).powf(1.0 / h.frisch) };
    HouseholdPlan { consumption_demand, labor_supply, mu }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn hh(frisch: f64) -> Household {
        Household { frisch, l0: 1.0, work_aversion: 1.0 }
    }

    #[test]
    fn mu_closed_forms() {
        assert_relative_eq!(solve_mu(1.0, 1.0, 1.0, &hh(f64::INFINITY)), 0.5, epsilon = 1e-15);
        assert_relative_eq!(solve_mu(0.0, 1.0, 1.0, &hh(1.0)), 1.0, epsilon = 1e-15);
        assert_relative_eq!(solve_mu(3.0, 1.0, 1.0, &hh(1.0)), (13f64.sqrt() - 3.0) / 2.0, epsilon = 1e-15);
        // phi = 2, no savings: mu^1.5 = theta_bar.
        assert_relative_eq!(solve_mu(0.0, 1.0, 0.7, &hh(2.0)), 0.7f64.powf(2.0 / 3.0), max_relative = 1e-13);
    }

    #[test]
    fn confidence_examples() {
        let th0 = [0.2, 0.8];
        let mut out = [0.0; 2];
        confidence_update(&th0, 1.0, 1.0, 0.3, 2.0, &mut out);
        assert_eq!(out, th0);
        confidence_update(&th0, 3.0, 1.0, 0.0, 2.0, &mut out);
        assert_eq!(out, th0);
        confidence_update(&th0, 3.0, 1.0, 0.1, 2.0, &mut out);
        assert_relative_eq!(out[1], 0.8 * 0.1f64.exp(), max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn mu_residual_and_budget(
            s in 0.0f64..50.0,
            w0 in 0.1f64..10.0,
            tb in 0.05f64..5.0,
            phi in prop_oneof![Just(1.0), Just(f64::INFINITY), 0.2f64..8.0],
            gamma in prop_oneof![Just(1.0), 0.3f64..3.0],
        ) {
            let h = Household { frisch: phi, l0: w0, work_aversion: gamma };
            let mu = solve_mu(s, w0, tb, &h);
            prop_assert!(mu > 0.0);
            let k = 1.0 + 1.0 / phi;
            let c = if phi.is_infinite() { 1.0 } else { gamma.powf(-1.0 / phi) };
            let resid = c * mu.powf(k) + s / w0 * mu - tb;
            prop_assert!(resid.abs() < 1e-10 * tb.max(1.0), "residual {}", resid);

            // Budget identity with wage 1 and L0 = w0.
            let theta = [0.3 * tb, 0.7 * tb];
            let prices = [0.9, 2.5];
            let plan = household_plan(s, &prices, 1.0, &theta, &h);
            let spend: f64 = plan.consumption_demand.iter().zip(&prices).map(|(c, p)| c * p).sum();
            prop_assert!((spend - (plan.labor_supply + s)).abs() < 1e-9 * (spend + 1.0));
        }
    }
}
