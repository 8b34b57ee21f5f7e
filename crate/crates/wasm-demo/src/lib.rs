//! Browser bindings for three small market demos. Each call returns a JSON string.

use revealmm::switch::plan_switch;
use revealmm::utility::util_event;
use revealmm::{CostModel, Observation};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn render(r: revealmm::Result<Value>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

/// Reveals the first coordinate of the two-coordinate market at state `(s1, s2)`, then
/// quotes the new cost and price range at `(q1, q2)`.
#[wasm_bindgen]
pub fn square_switch(s1: f64, s2: f64, q1: f64, q2: f64) -> String {
    render((|| {
        let m = CostModel::square();
        let obs = Observation::coordinate(m.space(), 0)?;
        let plan = plan_switch(&m, &obs, &[s1, s2])?;
        let q = [q1, q2];
        let price = plan.switched.price(&q)?;
        Ok(json!({
            "old_cost": m.cost(&q)?,
            "new_cost": plan.switched.cost(&q)?,
            "offsets": plan.offsets,
            "price_lo": price.lo(),
            "price_hi": price.hi(),
        }))
    })())
}

/// Prices of a logarithmic market at `q` and what knowing `event` is worth there.
#[wasm_bindgen]
pub fn lmsr_quote(q: Vec<f64>, event: Vec<u32>) -> String {
    let event: Vec<usize> = event.into_iter().map(|w| w as usize).collect();
    render((|| {
        let m = CostModel::lmsr(q.len());
        let u = util_event(&m, &event, &q)?;
        Ok(json!({
            "price": m.price(&q)?.center(),
            "utility": u.value,
            "conditional_price": u.conditional_price,
        }))
    })())
}

/// Whether revealing the count of the two coordinates at `(s1, s2)` yields a consistent cost.
#[wasm_bindgen]
pub fn count_consistency(s1: f64, s2: f64) -> String {
    render((|| {
        let m = CostModel::square();
        let obs = Observation::sum(m.space(), &[0, 1])?;
        let plan = plan_switch(&m, &obs, &[s1, s2])?;
        let c = &plan.consistency;
        Ok(json!({
            "consistent": c.consistent,
            "worst_violation": c.worst_violation,
            "witness": c.witness.as_ref().map(|w| json!({ "mu": w.mu, "violation": w.violation })),
        }))
    })())
}
