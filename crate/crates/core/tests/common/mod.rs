//! Step-level audits of the agent-based model, shared by the property suite and
//! the acceptance run.

#![allow(dead_code)]

use firmnet::abm::{Abm, Binding};
use firmnet::config::parse_config;
use firmnet::{AbmState, RunConfig};

/// Slack for sums that should hold exactly up to rounding.
const ROUND: f64 = 1e-12;

fn leq(a: f64, b: f64) -> bool {
    a <= b + ROUND * (1.0 + b.abs())
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

/// Every invariant that must hold after a completed, non-diverged step.
/// Returns a description of the first violation.
pub fn audit_step(abm: &Abm) -> Result<(), String> {
    let n = abm.n();
    let net = &abm.net;
    let w = &abm.work;
    let st = &abm.state;

    let mut shipped = vec![0.0; n];
    for e in 0..net.edges() {
        shipped[net.supplier[e]] += w.exchanged.goods[e];
    }
    for i in 0..n {
        let out = w.exchanged.consumption[i] + shipped[i];
        if !leq(out, w.supply[i]) {
            return Err(format!("firm {i} ships {out} out of a supply of {}", w.supply[i]));
        }
        if !leq(w.consumption_real[i], w.exchanged.consumption[i]) {
            return Err(format!("firm {i}: real consumption above the rationed demand"));
        }
    }
    if !leq(w.hired, w.labor_supply) {
        return Err(format!("hired {} above the labour supply {}", w.hired, w.labor_supply));
    }
    if !leq(w.spend, w.budget) {
        return Err(format!("spending {} above the budget {}", w.spend, w.budget));
    }

    // Goods accounting before decay: what was not sold is what the firm keeps.
    for i in 0..n {
        let left = w.supply[i] - w.sold[i];
        let kept = st.own_inventory[i];
        let sigma = abm.params.sigma[i];
        // `left` is a difference of flows of the size of the supply, so is its rounding.
        let slack = ROUND * (1.0 + w.supply[i]);
        let ok = if sigma.is_infinite() { kept == 0.0 } else { (kept * sigma.exp() - left.max(0.0)).abs() <= slack };
        if !ok {
            return Err(format!("firm {i}: supply minus sales {left} but inventory {kept} (sigma {sigma})"));
        }
    }

    let flows = [
        ("posted goods", &w.posted.goods),
        ("exchanged goods", &w.exchanged.goods),
        ("posted labour", &w.posted.labor),
        ("hired labour", &w.exchanged.labor),
        ("consumption", &w.consumption_real),
        ("outputs", &st.outputs),
        ("own inventory", &st.own_inventory),
        ("input inventory", &st.input_inventory),
        ("used inputs", &w.used),
    ];
    for (name, v) in flows {
        if let Some(x) = v.iter().find(|x| !(**x >= 0.0)) {
            return Err(format!("{name} has the negative or undefined entry {x}"));
        }
    }
    if !(st.household.savings >= 0.0) {
        return Err(format!("negative savings {}", st.household.savings));
    }

    for e in 0..net.edges() {
        if !leq(w.exchanged.goods[e], w.posted.goods[e]) {
            return Err(format!("edge {e}: exchange above demand"));
        }
        if !leq(w.used[e], w.available[e]) {
            return Err(format!("edge {e}: used {} of {} available", w.used[e], w.available[e]));
        }
    }
    for i in 0..n {
        if !leq(w.exchanged.labor[i], w.posted.labor[i]) {
            return Err(format!("firm {i}: hired above labour demand"));
        }
        if let Binding::Edge(e) = w.binding[i] {
            if st.input_inventory[e] > ROUND * (1.0 + w.available[e]) {
                return Err(format!("firm {i}: binding input {e} keeps a stock of {}", st.input_inventory[e]));
            }
        }
    }

    if st.wage != 1.0 {
        return Err(format!("wage {} after rescaling", st.wage));
    }
    // Planned spending matches wage income plus savings.
    let h = &st.household;
    let planned: f64 = h.consumption_demand.iter().zip(&st.prices).map(|(c, p)| c * p).sum();
    let income = st.wage * h.labor_supply + h.savings;
    if !close(planned, income, 1e-9) {
        return Err(format!("planned spending {planned} but income {income}"));
    }
    Ok(())
}

/// Randomised scenario drawn from `draw`: size, degree, technology, calibration and parameters.
pub fn random_config(draw: &[f64; 8]) -> RunConfig {
    let n = 2 + (draw[0] * 19.0) as usize;
    let d = 1 + (draw[1] * (n - 1).min(4) as f64) as usize;
    let q = ["0", "0.5", "\"inf\""][(draw[2] * 3.0) as usize % 3];
    let b = 0.8 + 0.2 * draw[3];
    // Negative calibrations need z = rho + eps > 0, and the Perron root is d.
    let eps = [-0.5 * d as f64, 0.5, 1.0, 10.0, 100.0][(draw[4] * 5.0) as usize % 5];
    let alpha = 0.05 + 0.95 * draw[5];
    let sigma = if draw[6] > 0.85 { "\"inf\"".to_string() } else { format!("{}", draw[6]) };
    let omega = 0.2 * draw[7];
    let doc = format!(
        r#"{{"economy": {{"n": {n}, "d": {d}, "q": {q}, "b": {b}}}, "eps": {eps},
            "dynamics": {{"alpha": [{alpha}, {a2}], "sigma": {sigma}, "omega": {omega}}}}}"#,
        a2 = (alpha + 0.2).min(1.0)
    );
    parse_config(&doc).unwrap_or_else(|e| panic!("{doc}: {e}"))
}

/// Runs up to `steps` steps, auditing each one; stops quietly on divergence.
/// Returns the number of audited steps.
pub fn audited_run(abm: &mut Abm, steps: usize) -> Result<usize, String> {
    for k in 0..steps {
        let ok = abm.step().map_err(|e| format!("step {k}: {e}"))?;
        if !ok {
            return Ok(k);
        }
        audit_step(abm).map_err(|m| format!("step {}: {m}", k + 1))?;
    }
    Ok(steps)
}

/// The initial state with every nominal quantity multiplied by `c`.
pub fn scaled_nominal(state: &AbmState, c: f64) -> AbmState {
    let mut s = state.clone();
    for p in s.prices.iter_mut() {
        *p *= c;
    }
    s.wage *= c;
    s.household.savings *= c;
    s.household.budget *= c;
    s
}

/// Largest relative gap between the prices, outputs and savings of two runs.
pub fn max_gap(a: &Abm, b: &Abm) -> f64 {
    let rel = |x: f64, y: f64| (x - y).abs() / (1.0 + x.abs().max(y.abs()));
    let sa = &a.state;
    let sb = &b.state;
    let mut g = rel(sa.household.savings, sb.household.savings).max(rel(sa.wage, sb.wage));
    for (x, y) in sa.prices.iter().zip(&sb.prices).chain(sa.outputs.iter().zip(&sb.outputs)) {
        g = g.max(rel(*x, *y));
    }
    g
}
