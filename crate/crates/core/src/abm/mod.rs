//! Causal agent-based dynamics with inventories, rationing and a work-elastic household.
//!
//! One step runs three epochs: planning (forecasts, targets, posted demands),
//! exchanges (hiring, proportional rationing, price and wage updates) and
//! production (inventories, wage rescaling, household planning for the next step).
//!
//! Firm-firm flows live on the edge list of the network: edge `e` means firm
//! `buyer[e]` uses the good of firm `supplier[e]`. Production levels are stored
//! as outputs `pi = z gamma`.

pub mod household;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::economy::{DynParams, Economy, Elasticity};
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::production::{optimal_quantities_into, production};

pub use household::{confidence_update, household_plan, solve_mu, tension, HouseholdPlan};

/// Bound beyond which a run is declared diverged.
pub const DIVERGENCE_BOUND: f64 = 1e12;

/// Edge-list view of the links.
#[derive(Clone, Debug)]
pub struct SparseNet {
    pub n: usize,
    pub buyer: Vec<usize>,
    pub supplier: Vec<usize>,
    /// `J_ij` on each edge.
    pub weight: Vec<f64>,
    /// `a_ij` on each edge.
    pub share: Vec<f64>,
    /// Edges of buyer `i` are `row_start[i]..row_start[i + 1]`.
    pub row_start: Vec<usize>,
    pub labor_weight: Vec<f64>,
    pub labor_share: Vec<f64>,
}

impl SparseNet {
    pub fn new(econ: &Economy) -> Self {
        let n = econ.n();
        let mut net = SparseNet {
            n,
            buyer: Vec::new(),
            supplier: Vec::new(),
            weight: Vec::new(),
            share: Vec::new(),
            row_start: vec![0],
            labor_weight: Vec::with_capacity(n),
            labor_share: Vec::with_capacity(n),
        };
        for i in 0..n {
            for &j in econ.suppliers(i) {
                net.buyer.push(i);
                net.supplier.push(j);
                net.weight.push(econ.links[(i, j + 1)]);
                net.share.push(econ.substitution[(i, j + 1)]);
            }
            net.row_start.push(net.buyer.len());
            net.labor_weight.push(econ.links[(i, 0)]);
            net.labor_share.push(econ.substitution[(i, 0)]);
        }
        net
    }

    pub fn edges(&self) -> usize {
        self.buyer.len()
    }

    pub fn row(&self, i: usize) -> std::ops::Range<usize> {
        self.row_start[i]..self.row_start[i + 1]
    }
}

/// Demands or exchanges of one step: firm-firm goods (per edge), labour (per firm), consumption (per good).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Flows {
    pub goods: Vec<f64>,
    pub labor: Vec<f64>,
    pub consumption: Vec<f64>,
}

impl Flows {
    pub fn zeros(n: usize, edges: usize) -> Self {
        Flows { goods: vec![0.0; edges], labor: vec![0.0; n], consumption: vec![0.0; n] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HouseholdLedger {
    pub savings: f64,
    /// Budget of the last exchange epoch.
    pub budget: f64,
    pub labor_supply: f64,
    /// Labour demand of the last exchange epoch.
    pub labor_demand: f64,
    pub mu: f64,
    pub theta: Vec<f64>,
    pub consumption_demand: Vec<f64>,
    /// Consumption realised in the last exchange epoch.
    pub consumption_real: Vec<f64>,
}

/// Everything carried from one step to the next.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AbmState {
    pub t: usize,
    pub prices: Vec<f64>,
    pub wage: f64,
    /// Outputs `pi_i` available at the start of the step.
    pub outputs: Vec<f64>,
    /// Output targets `pi_hat` set at the last planning.
    pub targets: Vec<f64>,
    /// Own-good stock `I_ii`.
    pub own_inventory: Vec<f64>,
    /// Input stocks `I_ij`, per edge.
    pub input_inventory: Vec<f64>,
    pub prev_demand: Flows,
    pub prev_exchange: Flows,
    pub household: HouseholdLedger,
}

/// Which input limited production.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Binding {
    Labor,
    Edge(usize),
    /// No limiting input (substitutable technology).
    None,
}

/// Per-step quantities, overwritten every step. Public so diagnostics can audit a step.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub supply: Vec<f64>,
    pub demand: Vec<f64>,
    pub rationing: Vec<f64>,
    pub optimal: Flows,
    pub posted: Flows,
    pub exchanged: Flows,
    /// Household consumption after the budget cap.
    pub consumption_real: Vec<f64>,
    pub sold: Vec<f64>,
    pub gains: Vec<f64>,
    pub losses: Vec<f64>,
    pub profit: Vec<f64>,
    pub excess: Vec<f64>,
    pub available: Vec<f64>,
    pub used: Vec<f64>,
    pub binding: Vec<Binding>,
    /// Start-of-step inventories (for accounting checks).
    pub own_inventory_before: Vec<f64>,
    pub input_inventory_before: Vec<f64>,
    pub budget: f64,
    pub spend: f64,
    pub labor_supply: f64,
    pub labor_demand: f64,
    pub hired: f64,
    /// `log(p0(t+1) / p0(t))` before rescaling.
    pub wage_growth: f64,
    a_buf: Vec<f64>,
    j_buf: Vec<f64>,
    p_buf: Vec<f64>,
    q_buf: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, edges: usize) -> Self {
        Workspace {
            supply: vec![0.0; n],
            demand: vec![0.0; n],
            rationing: vec![0.0; n],
            optimal: Flows::zeros(n, edges),
            posted: Flows::zeros(n, edges),
            exchanged: Flows::zeros(n, edges),
            consumption_real: vec![0.0; n],
            sold: vec![0.0; n],
            gains: vec![0.0; n],
            losses: vec![0.0; n],
            profit: vec![0.0; n],
            excess: vec![0.0; n],
            available: vec![0.0; edges],
            used: vec![0.0; edges],
            binding: vec![Binding::None; n],
            own_inventory_before: vec![0.0; n],
            input_inventory_before: vec![0.0; edges],
            budget: 0.0,
            spend: 0.0,
            labor_supply: 0.0,
            labor_demand: 0.0,
            hired: 0.0,
            wage_growth: 0.0,
            a_buf: Vec::new(),
            j_buf: Vec::new(),
            p_buf: Vec::new(),
            q_buf: Vec::new(),
        }
    }
}

/// Aggregates of one completed step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub wage_growth: f64,
    pub savings: f64,
    pub labor_supply: f64,
    pub labor_demand: f64,
    pub hired: f64,
    pub unemployment: f64,
    pub total_profit: f64,
    pub total_excess: f64,
    /// `mean_i P_i / (G_i + L_i)`.
    pub mean_profit_ratio: f64,
    /// `mean_i E_i / (S_i + D_i)`.
    pub mean_excess_ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { step: usize },
}

/// `x / y`, zero when `y` vanishes.
fn ratio(x: f64, y: f64) -> f64 {
    if y != 0.0 {
        x / y
    } else {
        0.0
    }
}

/// The model: static economy, behavioural parameters and mutable state.
#[derive(Clone, Debug)]
pub struct Abm {
    pub econ: Economy,
    pub params: DynParams,
    pub net: SparseNet,
    pub state: AbmState,
    pub work: Workspace,
    survival: Vec<f64>,
}

impl Abm {
    pub fn new(econ: &Economy, params: DynParams, state: AbmState) -> Result<Self> {
        params.validate(econ.n())?;
        let net = SparseNet::new(econ);
        if state.prices.len() != econ.n() || state.input_inventory.len() != net.edges() {
            return Err(Error::InvalidParameter("state does not match the economy".into()));
        }
        let survival = (0..econ.n()).map(|i| params.survival(i)).collect();
        let work = Workspace::new(econ.n(), net.edges());
        Ok(Abm { econ: econ.clone(), params, net, state, work, survival })
    }

    pub fn n(&self) -> usize {
        self.econ.n()
    }

    /// Advances one full step. Returns `false` when the new state diverged.
    pub fn step(&mut self) -> Result<bool> {
        self.plan()?;
        self.exchange();
        self.produce()?;
        self.state.t += 1;
        Ok(!self.diverged())
    }

    /// Forecasts, targets, optimal inputs and posted demands.
    fn plan(&mut self) -> Result<()> {
        let n = self.n();
        let lam = self.params.lambda;
        let k = self.params.update_factor;
        let st = &mut self.state;
        let w = &mut self.work;
        let net = &self.net;
        let fc = |d: f64, x: f64| lam * d + (1.0 - lam) * x;

        w.own_inventory_before.copy_from_slice(&st.own_inventory);
        w.input_inventory_before.copy_from_slice(&st.input_inventory);

        // Expected sales (to firms and household) and expected costs.
        let mut exp_sales = vec![0.0; n];
        let mut exp_costs = vec![0.0; n];
        for e in 0..net.edges() {
            let q = fc(st.prev_demand.goods[e], st.prev_exchange.goods[e]);
            exp_sales[net.supplier[e]] += q;
            exp_costs[net.buyer[e]] += st.prices[net.supplier[e]] * q;
        }
        for i in 0..n {
            exp_sales[i] += fc(st.prev_demand.consumption[i], st.prev_exchange.consumption[i]);
            exp_costs[i] += st.wage * fc(st.prev_demand.labor[i], st.prev_exchange.labor[i]);
        }
        for i in 0..n {
            let supply = st.outputs[i] + st.own_inventory[i];
            w.supply[i] = supply;
            let gains = st.prices[i] * exp_sales[i];
            let profit = gains - exp_costs[i];
            let excess = supply - exp_sales[i];
            let growth = k * self.params.beta[i] * ratio(profit, gains + exp_costs[i])
                - k * self.params.beta_p[i] * ratio(excess, supply + exp_sales[i]);
            st.targets[i] = st.outputs[i] * growth.exp();
        }

        // Optimal inputs for the targets, then posted demands net of stocks.
        for i in 0..n {
            let gamma_hat = st.targets[i] / self.econ.z[i];
            let row = net.row(i);
            if self.econ.q == Elasticity::Leontief {
                let scale = if gamma_hat > 0.0 { gamma_hat.powf(1.0 / self.econ.b) } else { 0.0 };
                w.optimal.labor[i] = net.labor_weight[i] * scale;
                for e in row {
                    w.optimal.goods[e] = net.weight[e] * scale;
                }
            } else {
                w.a_buf.clear();
                w.j_buf.clear();
                w.p_buf.clear();
                w.a_buf.push(net.labor_share[i]);
                w.j_buf.push(net.labor_weight[i]);
                w.p_buf.push(st.wage);
                for e in row.clone() {
                    w.a_buf.push(net.share[e]);
                    w.j_buf.push(net.weight[e]);
                    w.p_buf.push(st.prices[net.supplier[e]]);
                }
                w.q_buf.resize(w.a_buf.len(), 0.0);
                optimal_quantities_into(gamma_hat, &w.p_buf, self.econ.b, self.econ.q, &w.a_buf, &w.j_buf, &mut w.q_buf)?;
                w.optimal.labor[i] = w.q_buf[0];
                for (k, e) in row.enumerate() {
                    w.optimal.goods[e] = w.q_buf[k + 1];
                }
            }
            w.posted.labor[i] = w.optimal.labor[i];
        }
        for e in 0..net.edges() {
            w.posted.goods[e] = (w.optimal.goods[e] - st.input_inventory[e]).max(0.0);
        }
        w.posted.consumption.copy_from_slice(&st.household.consumption_demand);
        Ok(())
    }

    /// Hiring, trades, realised profits and price/wage updates (before rescaling).
    fn exchange(&mut self) {
        let n = self.n();
        let k = self.params.update_factor;
        let st = &mut self.state;
        let w = &mut self.work;
        let net = &self.net;

        let ls = st.household.labor_supply;
        let ld: f64 = w.posted.labor.iter().sum();
        let hire = if ld > 0.0 { (ls / ld).min(1.0) } else { 1.0 };
        for i in 0..n {
            w.exchanged.labor[i] = w.posted.labor[i] * hire;
        }
        w.labor_supply = ls;
        w.labor_demand = ld;
        w.hired = w.exchanged.labor.iter().sum();
        w.budget = st.household.savings + st.wage * w.hired;

        for i in 0..n {
            w.demand[i] = w.posted.consumption[i];
        }
        for e in 0..net.edges() {
            w.demand[net.supplier[e]] += w.posted.goods[e];
        }
        for i in 0..n {
            w.rationing[i] = if w.demand[i] > 0.0 { (w.supply[i] / w.demand[i]).min(1.0) } else { 1.0 };
            w.exchanged.consumption[i] = w.posted.consumption[i] * w.rationing[i];
        }
        for e in 0..net.edges() {
            w.exchanged.goods[e] = w.posted.goods[e] * w.rationing[net.supplier[e]];
        }
        let wanted: f64 = (0..n).map(|i| st.prices[i] * w.exchanged.consumption[i]).sum();
        let cap = if wanted > 0.0 { (w.budget / wanted).min(1.0) } else { 1.0 };
        for i in 0..n {
            w.consumption_real[i] = w.exchanged.consumption[i] * cap;
        }
        w.spend = (0..n).map(|i| st.prices[i] * w.consumption_real[i]).sum();

        for i in 0..n {
            w.sold[i] = w.consumption_real[i];
            w.losses[i] = st.wage * w.exchanged.labor[i];
        }
        for e in 0..net.edges() {
            w.sold[net.supplier[e]] += w.exchanged.goods[e];
            w.losses[net.buyer[e]] += st.prices[net.supplier[e]] * w.exchanged.goods[e];
        }
        for i in 0..n {
            w.gains[i] = st.prices[i] * w.sold[i];
            w.profit[i] = w.gains[i] - w.losses[i];
            w.excess[i] = w.supply[i] - w.demand[i];
        }

        // New prices and wage, still in the old wage unit.
        for i in 0..n {
            let g = -k * self.params.alpha[i] * ratio(w.excess[i], w.supply[i] + w.demand[i])
                - k * self.params.alpha_p[i] * ratio(w.profit[i], w.gains[i] + w.losses[i]);
            st.prices[i] *= g.exp();
        }
        w.wage_growth = k * self.params.omega * tension(ld, ls);
        // A binding budget is spent in full; otherwise spending stays below it and
        // the clamp only removes rounding residue.
        st.household.savings = if cap < 1.0 { 0.0 } else { (w.budget - w.spend).max(0.0) };
        st.household.budget = w.budget;
        st.household.labor_demand = ld;
        st.household.consumption_real.copy_from_slice(&w.consumption_real);
    }

    /// Production, inventories, rescaling to the new wage and household planning.
    fn produce(&mut self) -> Result<()> {
        let n = self.n();
        let st = &mut self.state;
        let w = &mut self.work;
        let net = &self.net;
        let leontief = self.econ.q == Elasticity::Leontief;

        for e in 0..net.edges() {
            w.available[e] = w.exchanged.goods[e] + st.input_inventory[e].min(w.optimal.goods[e]);
        }
        for i in 0..n {
            let row = net.row(i);
            let labor = w.exchanged.labor[i];
            if leontief {
                let mut level = f64::INFINITY;
                let mut bind = Binding::None;
                if net.labor_weight[i] > 0.0 {
                    level = labor / net.labor_weight[i];
                    bind = Binding::Labor;
                }
                for e in row.clone() {
                    let r = w.available[e] / net.weight[e];
                    if r < level {
                        level = r;
                        bind = Binding::Edge(e);
                    }
                }
                if !level.is_finite() {
                    level = 0.0;
                }
                w.binding[i] = bind;
                for e in row {
                    w.used[e] = net.weight[e] * level;
                }
                st.outputs[i] = self.econ.z[i] * level.powf(self.econ.b);
            } else {
                w.a_buf.clear();
                w.j_buf.clear();
                w.q_buf.clear();
                w.a_buf.push(net.labor_share[i]);
                w.j_buf.push(net.labor_weight[i]);
                w.q_buf.push(labor);
                for e in row.clone() {
                    w.a_buf.push(net.share[e]);
                    w.j_buf.push(net.weight[e]);
                    w.q_buf.push(w.available[e]);
                    w.used[e] = w.available[e];
                }
                w.binding[i] = Binding::None;
                st.outputs[i] = production(self.econ.z[i], self.econ.b, self.econ.q, &w.a_buf, &w.j_buf, &w.q_buf)?;
            }
        }
        for i in 0..n {
            // Unsold goods, including consumption cut by the budget cap, stay with the producer.
            // A rationed firm sells out, so only the budget cut is left; the difference
            // of supply and sales would be rounding noise.
            let unsold =
                if w.rationing[i] < 1.0 { w.exchanged.consumption[i] - w.consumption_real[i] } else { (w.supply[i] - w.sold[i]).max(0.0) };
            st.own_inventory[i] = self.survival[i] * unsold;
        }
        for e in 0..net.edges() {
            // Stock beyond the optimal quantity is not carried over.
            let unused = (w.available[e] - w.used[e]).max(0.0);
            st.input_inventory[e] = self.survival[net.supplier[e]] * unused;
        }

        // Rescale money to the new wage.
        let p0 = st.wage * w.wage_growth.exp();
        for p in st.prices.iter_mut() {
            *p /= p0;
        }
        st.household.savings /= p0;
        st.household.budget /= p0;
        st.wage = 1.0;

        // Household plans the next step.
        let h = self.econ.household;
        let ls = st.household.labor_supply;
        let ld = st.household.labor_demand;
        let theta0: Vec<f64> = self.econ.theta0.iter().copied().collect();
        confidence_update(&theta0, ld, ls, self.params.omega_p, self.params.update_factor, &mut st.household.theta);
        let plan = household_plan(st.household.savings, &st.prices, st.wage, &st.household.theta, &h);
        st.household.consumption_demand = plan.consumption_demand;
        st.household.labor_supply = plan.labor_supply;
        st.household.mu = plan.mu;

        st.prev_demand.goods.copy_from_slice(&w.posted.goods);
        st.prev_demand.labor.copy_from_slice(&w.posted.labor);
        st.prev_demand.consumption.copy_from_slice(&w.posted.consumption);
        st.prev_exchange.goods.copy_from_slice(&w.exchanged.goods);
        st.prev_exchange.labor.copy_from_slice(&w.exchanged.labor);
        st.prev_exchange.consumption.copy_from_slice(&w.consumption_real);
        Ok(())
    }

    pub fn diverged(&self) -> bool {
        let st = &self.state;
        let bad = |x: &f64| !(x.is_finite() && x.abs() < DIVERGENCE_BOUND);
        st.prices.iter().any(bad)
            || st.prices.iter().any(|p| !(*p > 0.0))
            || st.outputs.iter().any(bad)
            || st.own_inventory.iter().any(bad)
            || st.input_inventory.iter().any(bad)
            || bad(&st.household.savings)
    }

    pub fn summary(&self) -> StepSummary {
        let w = &self.work;
        let n = self.n() as f64;
        let unemployment = if w.labor_supply > 0.0 { (w.labor_supply - w.hired) / w.labor_supply } else { 0.0 };
        StepSummary {
            wage_growth: w.wage_growth,
            savings: self.state.household.savings,
            labor_supply: w.labor_supply,
            labor_demand: w.labor_demand,
            hired: w.hired,
            unemployment,
            total_profit: w.profit.iter().sum(),
            total_excess: w.excess.iter().sum(),
            mean_profit_ratio: (0..self.n()).map(|i| ratio(w.profit[i], w.gains[i] + w.losses[i])).sum::<f64>() / n,
            mean_excess_ratio: (0..self.n()).map(|i| ratio(w.excess[i], w.supply[i] + w.demand[i])).sum::<f64>() / n,
        }
    }
}

/// Flows a firm would demand at `(pi, p)` with empty stocks, and the household plan.
fn planned_flows(econ: &Economy, net: &SparseNet, outputs: &[f64], prices: &[f64], plan: &HouseholdPlan) -> Result<Flows> {
    let n = econ.n();
    let mut flows = Flows::zeros(n, net.edges());
    let mut pr = Vec::with_capacity(n + 1);
    pr.push(1.0);
    pr.extend_from_slice(prices);
    let mut buf = vec![0.0; n + 1];
    for i in 0..n {
        let a_row = econ.substitution_row(i);
        let j_row = econ.link_row(i);
        optimal_quantities_into(outputs[i] / econ.z[i], &pr, econ.b, econ.q, &a_row, &j_row, &mut buf)?;
        flows.labor[i] = buf[0];
        for e in net.row(i) {
            flows.goods[e] = buf[net.supplier[e] + 1];
        }
    }
    flows.consumption.copy_from_slice(&plan.consumption_demand);
    Ok(flows)
}

fn state_at(econ: &Economy, prices: Vec<f64>, outputs: Vec<f64>, seed_prices: &[f64], seed_outputs: &[f64]) -> Result<AbmState> {
    let n = econ.n();
    let net = SparseNet::new(econ);
    let theta: Vec<f64> = econ.theta0.iter().copied().collect();
    let plan = household_plan(0.0, &prices, 1.0, &theta, &econ.household);
    let seed_plan = household_plan(0.0, seed_prices, 1.0, &theta, &econ.household);
    let prev = planned_flows(econ, &net, seed_outputs, seed_prices, &seed_plan)?;
    Ok(AbmState {
        t: 0,
        prices,
        wage: 1.0,
        targets: outputs.clone(),
        outputs,
        own_inventory: vec![0.0; n],
        input_inventory: vec![0.0; net.edges()],
        prev_demand: prev.clone(),
        prev_exchange: prev,
        household: HouseholdLedger {
            savings: 0.0,
            budget: 0.0,
            labor_supply: plan.labor_supply,
            labor_demand: 0.0,
            mu: plan.mu,
            theta,
            consumption_demand: plan.consumption_demand,
            consumption_real: vec![0.0; n],
        },
    })
}

/// Equilibrium perturbed by `1 + delta u`, `u` uniform on `[-1, 1]`, for prices and outputs.
///
/// Forecasts start from the equilibrium flows; stocks and savings are empty.
pub fn init_near_equilibrium<R: Rng>(econ: &Economy, eq: &Equilibrium, delta: f64, rng: &mut R) -> Result<AbmState> {
    let n = econ.n();
    let p_eq: Vec<f64> = eq.prices.iter().copied().collect();
    let pi_eq: Vec<f64> = (0..n).map(|i| econ.z[i] * eq.gammas[i]).collect();
    let mut draw = |x: f64| if delta == 0.0 { x } else { x * (1.0 + delta * rng.gen_range(-1.0..=1.0)) };
    let prices: Vec<f64> = p_eq.iter().map(|p| draw(*p)).collect();
    let outputs: Vec<f64> = pi_eq.iter().map(|p| draw(*p)).collect();
    state_at(econ, prices, outputs, &p_eq, &pi_eq)
}

/// Prices and production levels uniform in `[lo, hi]` (used when no equilibrium exists).
///
/// Forecasts start from the flows planned at the initial state.
pub fn init_random<R: Rng>(econ: &Economy, lo: f64, hi: f64, rng: &mut R) -> Result<AbmState> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidParameter(format!("initial range [{lo}, {hi}] must be positive")));
    }
    let n = econ.n();
    let prices: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi)).collect();
    let outputs: Vec<f64> = (0..n).map(|i| econ.z[i] * rng.gen_range(lo..=hi)).collect();
    let (sp, so) = (prices.clone(), outputs.clone());
    state_at(econ, prices, outputs, &sp, &so)
}

/// Which steps to record: every `stride`-th step from `start` on, plus the last one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RecordSpec {
    pub stride: usize,
    pub start: usize,
}

impl Default for RecordSpec {
    fn default() -> Self {
        RecordSpec { stride: 1, start: 0 }
    }
}

/// Recorded time series. Row `k` of every series refers to `steps[k]`.
///
/// Step 0 is the initial state; its flow aggregates are zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<usize>,
    pub prices: Vec<Vec<f64>>,
    /// Production levels `pi / z`.
    pub gammas: Vec<Vec<f64>>,
    pub summaries: Vec<StepSummary>,
    /// Per-firm `P_i / (G_i + L_i)`; kept in memory for the stationary analysis only.
    #[serde(skip)]
    pub profit_ratios: Vec<Vec<f64>>,
    /// Per-firm `E_i / (S_i + D_i)`.
    #[serde(skip)]
    pub excess_ratios: Vec<Vec<f64>>,
    pub status: RunStatus,
    /// Steps actually simulated.
    pub length: usize,
}

impl Trajectory {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Every `stride`-th row plus the last one.
    pub fn downsample(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        let m = self.len();
        let mut keep: Vec<usize> = (0..m).step_by(stride).collect();
        if m > 0 && keep.last() != Some(&(m - 1)) {
            keep.push(m - 1);
        }
        let pick = |v: &Vec<Vec<f64>>| if v.len() == m { keep.iter().map(|&k| v[k].clone()).collect() } else { Vec::new() };
        Trajectory {
            steps: keep.iter().map(|&k| self.steps[k]).collect(),
            prices: pick(&self.prices),
            gammas: pick(&self.gammas),
            summaries: keep.iter().map(|&k| self.summaries[k]).collect(),
            profit_ratios: pick(&self.profit_ratios),
            excess_ratios: pick(&self.excess_ratios),
            status: self.status,
            length: self.length,
        }
    }
}

fn empty_summary(st: &AbmState) -> StepSummary {
    StepSummary {
        wage_growth: 0.0,
        savings: st.household.savings,
        labor_supply: st.household.labor_supply,
        labor_demand: 0.0,
        hired: 0.0,
        unemployment: 0.0,
        total_profit: 0.0,
        total_excess: 0.0,
        mean_profit_ratio: 0.0,
        mean_excess_ratio: 0.0,
    }
}

/// Runs `steps` steps, stopping early on divergence.
pub fn run(abm: &mut Abm, steps: usize, record: RecordSpec) -> Result<Trajectory> {
    let stride = record.stride.max(1);
    let z = abm.econ.z.clone();
    let mut tr = Trajectory {
        steps: Vec::new(),
        prices: Vec::new(),
        gammas: Vec::new(),
        summaries: Vec::new(),
        profit_ratios: Vec::new(),
        excess_ratios: Vec::new(),
        status: RunStatus::Completed,
        length: 0,
    };
    let push = |tr: &mut Trajectory, abm: &Abm, summary: StepSummary| {
        let w = &abm.work;
        if abm.state.t == 0 {
            tr.profit_ratios.push(vec![0.0; abm.n()]);
            tr.excess_ratios.push(vec![0.0; abm.n()]);
        } else {
            tr.profit_ratios.push((0..abm.n()).map(|i| ratio(w.profit[i], w.gains[i] + w.losses[i])).collect());
            tr.excess_ratios.push((0..abm.n()).map(|i| ratio(w.excess[i], w.supply[i] + w.demand[i])).collect());
        }
        tr.steps.push(abm.state.t);
        tr.prices.push(abm.state.prices.clone());
        tr.gammas.push(abm.state.outputs.iter().zip(z.iter()).map(|(p, z)| p / z).collect());
        tr.summaries.push(summary);
    };
    let t0 = abm.state.t;
    if record.start == 0 {
        push(&mut tr, abm, empty_summary(&abm.state));
    }
    for k in 1..=steps {
        let ok = abm.step()?;
        let rel = k;
        if !ok {
            tr.status = RunStatus::Diverged { step: t0 + k };
            let s = abm.summary();
            push(&mut tr, abm, s);
            tr.length = k;
            return Ok(tr);
        }
        if rel >= record.start && ((rel - record.start).is_multiple_of(stride) || k == steps) {
            let s = abm.summary();
            push(&mut tr, abm, s);
        }
    }
    tr.length = steps;
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economy::Household;
    use crate::equilibrium;
    use crate::network::regular_links;
    use crate::spectral::calibrate_epsilon;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn econ(n: usize, d: usize, eps: f64, b: f64) -> Economy {
        let links = regular_links(n, d, 7, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let theta = crate::economy::random_preferences(n, &mut rng);
        let e =
            Economy::with_uniform_substitution(links, DVector::from_element(n, 1.0), Elasticity::Leontief, b, theta, Household::default())
                .unwrap();
        calibrate_epsilon(&e, eps).unwrap()
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        for b in [1.0, 0.95] {
            let e = econ(12, 3, 2.0, b);
            let eq = equilibrium::solve(&e).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let st = init_near_equilibrium(&e, &eq, 0.0, &mut rng).unwrap();
            let mut abm = Abm::new(&e, DynParams::homogeneous(12, 0.5, 0.1, 0.5), st).unwrap();
            let p0 = abm.state.prices.clone();
            let o0 = abm.state.outputs.clone();
            for _ in 0..20 {
                assert!(abm.step().unwrap());
            }
            for (a, b) in abm.state.prices.iter().zip(&p0) {
                assert!((a / b - 1.0).abs() < 1e-9, "price drift {a} vs {b}");
            }
            for (a, b) in abm.state.outputs.iter().zip(&o0) {
                assert!((a / b - 1.0).abs() < 1e-9, "output drift {a} vs {b}");
            }
        }
    }

    #[test]
    fn frozen_parameters_keep_prices() {
        let e = econ(10, 2, 1.0, 1.0);
        let eq = equilibrium::solve(&e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let st = init_near_equilibrium(&e, &eq, 1e-2, &mut rng).unwrap();
        let mut params = DynParams::homogeneous(10, 0.0, 0.0, 0.5);
        params.omega_p = 0.0;
        let mut abm = Abm::new(&e, params, st).unwrap();
        let p0 = abm.state.prices.clone();
        for _ in 0..10 {
            abm.step().unwrap();
            assert_eq!(abm.state.prices, p0);
        }
    }

    #[test]
    fn wage_example() {
        // Factor 2, Ld = 3 Ls and omega = 0.1 give log growth 0.1.
        assert!((2.0 * 0.1 * tension(3.0, 1.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_steps_gives_initial_state_only() {
        let e = econ(8, 2, 1.0, 1.0);
        let eq = equilibrium::solve(&e).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let st = init_near_equilibrium(&e, &eq, 1e-3, &mut rng).unwrap();
        let mut abm = Abm::new(&e, DynParams::homogeneous(8, 0.5, 0.1, 0.5), st).unwrap();
        let tr = run(&mut abm, 0, RecordSpec::default()).unwrap();
        assert_eq!(tr.steps, vec![0]);
        assert_eq!(tr.status, RunStatus::Completed);
    }
}
