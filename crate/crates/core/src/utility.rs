//! Informational utility of beliefs and events at a market state.

use serde::Serialize;

use crate::cost::{restricted_cost, CostModel, PriceSet};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::market::{exposure_witness, Observation, OutcomeSpace};
use crate::num::dot;

#[derive(Debug, Clone, Serialize)]
pub struct EventUtility {
    /// `min over mu in M(E) of D(mu || q)`.
    pub value: f64,
    /// The minimizer: prices conditioned on the event.
    pub conditional_price: Vec<f64>,
    /// Solver optimality gap; zero for closed forms.
    pub residual: f64,
    pub converged: bool,
    /// Set when the minimizer is not unique; `conditional_price` is then one of them.
    pub non_unique: bool,
}

/// What a trader with belief `mu` expects to earn by moving prices to `mu`: `D(mu || q)`.
pub fn util_belief(m: &CostModel, mu: &[f64], q: &[f64]) -> Result<f64> {
    m.divergence(mu, q)
}

fn check_event(space: &OutcomeSpace, event: &[usize]) -> Result<Vec<usize>> {
    if event.is_empty() {
        return Err(Error::EmptyEvent);
    }
    if let Some(&bad) = event.iter().find(|&&w| w >= space.len()) {
        return Err(Error::InvalidParameter(format!("outcome {bad} out of range")));
    }
    let mut e = event.to_vec();
    e.sort_unstable();
    e.dedup();
    Ok(e)
}

/// The most a trader who knows the outcome lies in `event` can guarantee: `C(q) - C^E(q)`.
pub fn util_event(m: &CostModel, event: &[usize], q: &[f64]) -> Result<EventUtility> {
    check_dim(m.dim(), q.len())?;
    check_finite(q, "state")?;
    let event = check_event(m.space(), event)?;
    match m {
        CostModel::Switched(s) => s.util_event(&event, q),
        CostModel::Shifted { base, shift } if matches!(**base, CostModel::Switched(_)) => {
            util_event(base, &event, &crate::num::add(q, shift))
        }
        _ => {
            let r = restricted_cost(m, &event)?;
            let (value_e, price, residual) = value_price_gap(&r, q);
            Ok(EventUtility {
                value: m.value(q) - value_e,
                conditional_price: price.center(),
                residual,
                converged: residual <= crate::fw::FwOptions::default().gap_tol,
                non_unique: !price.is_singleton(1e-12),
            })
        }
    }
}

/// Value and price of a (possibly restricted) cost with a single projection.
fn value_price_gap(m: &CostModel, q: &[f64]) -> (f64, PriceSet, f64) {
    match m {
        CostModel::Restricted(r) if *r.form() == crate::cost::RestrictedForm::Numeric => {
            let p = r.project(q);
            (-p.value, PriceSet::point(p.mu), p.gap)
        }
        CostModel::Scaled { base, alpha } => {
            let qs: Vec<f64> = q.iter().map(|x| x / alpha).collect();
            let (v, p, g) = value_price_gap(base, &qs);
            (alpha * v, p, alpha * g)
        }
        CostModel::Shifted { base, shift } => value_price_gap(base, &crate::num::add(q, shift)),
        _ => (m.value(q), m.price_set(q), 0.0),
    }
}

/// Prices conditioned on `event`, and whether they are unique.
pub fn conditional_price(m: &CostModel, event: &[usize], q: &[f64]) -> Result<(Vec<f64>, bool)> {
    let u = util_event(m, event, q)?;
    Ok((u.conditional_price, !u.non_unique))
}

/// `D(mu || q) - Util(E; q)` for a belief `mu` supported on `event`.
pub fn excess_util(m: &CostModel, mu: &[f64], event: &[usize], q: &[f64]) -> Result<f64> {
    let space = m.space();
    let event = check_event(space, event)?;
    if crate::market::membership(space, mu, &event, crate::cost::DOMAIN_TOL)?.is_none() {
        return Err(Error::OutsidePriceSpace);
    }
    Ok(m.divergence(mu, q)? - util_event(m, &event, q)?.value)
}

/// Utility of each realization of an observation.
pub fn util_observation(m: &CostModel, obs: &Observation, q: &[f64]) -> Result<Vec<EventUtility>> {
    obs.cells().iter().map(|c| util_event(m, c, q)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizingSequence {
    pub conditional_price: Vec<f64>,
    pub initial_divergence: f64,
    /// States after each accepted step.
    pub states: Vec<Vec<f64>>,
    /// `D(conditional price || state)` after each accepted step; non-increasing.
    pub trace: Vec<f64>,
    /// Guaranteed payoff on the event after each accepted step.
    pub guaranteed: Vec<f64>,
}

/// Greedy trades that raise the payoff guaranteed on `event`.
///
/// Each step tries the event's exposure bundle and every coordinate direction in both signs,
/// keeps the move that most raises `min over w in E of rho(w).(q' - q) - C(q') + C(q)`
/// without increasing `D(conditional price || q')`, and adapts each direction's step length.
pub fn optimizing_sequence(m: &CostModel, event: &[usize], q: &[f64], n_steps: usize) -> Result<OptimizingSequence> {
    check_dim(m.dim(), q.len())?;
    check_finite(q, "state")?;
    let space = m.space();
    let event = check_event(space, event)?;
    let target = util_event(m, &event, q)?.conditional_price;
    let div = m.divergence_from(q)?;
    let base_cost = div.cost_q();
    let guaranteed = |qn: &[f64]| {
        let r: Vec<f64> = qn.iter().zip(q).map(|(a, b)| a - b).collect();
        event.iter().map(|&w| dot(space.payoff(w), &r)).fold(f64::INFINITY, f64::min) - m.value(qn) + base_cost
    };
    let divergence = |qn: &[f64]| m.divergence(&target, qn);

    let k = m.dim();
    let mut directions: Vec<Vec<f64>> = Vec::new();
    if event.len() < space.len() {
        let labels: Vec<String> = (0..space.len()).map(|w| (event.contains(&w) as u8).to_string()).collect();
        let obs = Observation::from_labels(space, &labels)?;
        let inside = obs.index_of("1")?;
        if let Some(w) = exposure_witness(space, &obs)?[inside].clone() {
            directions.push(w.v);
        }
    }
    for j in 0..k {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; k];
            e[j] = sign;
            directions.push(e);
        }
    }
    let mut steps = vec![1.0f64; directions.len()];

    let initial = divergence(q)?;
    let mut out = OptimizingSequence {
        conditional_price: target.clone(),
        initial_divergence: initial,
        states: Vec::new(),
        trace: Vec::new(),
        guaranteed: Vec::new(),
    };
    let mut cur = q.to_vec();
    let mut g_cur = guaranteed(&cur);
    let mut d_cur = initial;
    while out.trace.len() < n_steps && d_cur > 1e-14 {
        let mut best: Option<(usize, Vec<f64>, f64, f64)> = None;
        for (i, dir) in directions.iter().enumerate() {
            let cand: Vec<f64> = cur.iter().zip(dir).map(|(a, b)| a + steps[i] * b).collect();
            let g = guaranteed(&cand);
            if g <= g_cur + 1e-15 {
                continue;
            }
            let d = divergence(&cand)?;
            if d > d_cur {
                continue;
            }
            if best.as_ref().is_none_or(|b| g > b.2) {
                best = Some((i, cand, g, d));
            }
        }
        match best {
            Some((i, cand, g, d)) => {
                steps[i] *= 2.0;
                cur = cand;
                g_cur = g;
                d_cur = d;
                out.states.push(cur.clone());
                out.trace.push(d);
                out.guaranteed.push(g);
            }
            None => {
                steps.iter_mut().for_each(|s| *s *= 0.5);
                if steps.iter().all(|s| *s < 1e-12) {
                    break;
                }
            }
        }
    }
    Ok(out)
}
