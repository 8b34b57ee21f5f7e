use super::{support, support_price, CostModel, PriceSet};
use crate::error::{Error, Result};
use crate::fw::{self, FwOptions};
use crate::market::{OutcomeSpace, SpaceShape};
use crate::num::{dot, log_sum_exp, sigmoid, softmax, softplus};

/// How a restricted cost is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum RestrictedForm {
    /// Simplex base: log-sum-exp over the securities of the event.
    Lse,
    /// Cube base and a sub-cube event: fixed coordinates pay their fixed value.
    Subcube(Vec<Option<f64>>),
    /// Piecewise-linear base: support function of the sub-hull.
    Support,
    /// Entropic projection onto the sub-hull by conditional gradient.
    Numeric,
}

/// `C^E(q) = sup over mu in M(E) of q.mu - R(mu)`.
#[derive(Debug, Clone)]
pub struct Restricted {
    pub(crate) base: CostModel,
    event: Vec<usize>,
    form: RestrictedForm,
    opts: FwOptions,
}

/// Minimizer of `R(mu) - q.mu` over a sub-hull.
#[derive(Debug, Clone)]
pub struct Projection {
    pub mu: Vec<f64>,
    /// `min R(mu) - q.mu`, i.e. `-C^E(q)`.
    pub value: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The cost of a market whose outcome is known to lie in `event`.
pub fn restricted_cost(m: &CostModel, event: &[usize]) -> Result<CostModel> {
    restricted_cost_with(m, event, FwOptions::default())
}

pub fn restricted_cost_with(m: &CostModel, event: &[usize], opts: FwOptions) -> Result<CostModel> {
    let space = m.space();
    if event.is_empty() {
        return Err(Error::EmptyEvent);
    }
    if let Some(&bad) = event.iter().find(|&&w| w >= space.len()) {
        return Err(Error::InvalidParameter(format!("outcome {bad} out of range")));
    }
    let mut event = event.to_vec();
    event.sort_unstable();
    event.dedup();
    if event.len() == space.len() {
        return Ok(m.clone());
    }
    let form = match m {
        CostModel::Scaled { base, alpha } => {
            let inner = restricted_cost_with(base, &event, opts)?;
            return Ok(CostModel::Scaled { base: Box::new(inner), alpha: *alpha });
        }
        CostModel::Shifted { base, shift } => {
            let inner = restricted_cost_with(base, &event, opts)?;
            return Ok(CostModel::Shifted { base: Box::new(inner), shift: shift.clone() });
        }
        CostModel::Restricted(r) => {
            if event.iter().all(|w| r.event.contains(w)) {
                return restricted_cost_with(&r.base, &event, opts);
            }
            return Err(Error::Unsupported("restriction to an event outside the current one".into()));
        }
        CostModel::Switched(_) => {
            return Err(Error::Unsupported("restricting a switched cost".into()));
        }
        CostModel::Lmsr(_) => RestrictedForm::Lse,
        CostModel::Product(s) => subcube(s, &event).map(RestrictedForm::Subcube).unwrap_or(RestrictedForm::Numeric),
        CostModel::PiecewiseLinear(_) => RestrictedForm::Support,
        CostModel::Lcmm(_) => RestrictedForm::Numeric,
    };
    Ok(CostModel::Restricted(Box::new(Restricted { base: m.clone(), event, form, opts })))
}

/// Fixed coordinates if `event` is a sub-cube of the full cube.
fn subcube(space: &OutcomeSpace, event: &[usize]) -> Option<Vec<Option<f64>>> {
    debug_assert_eq!(space.shape(), SpaceShape::Cube);
    let k = space.dim();
    let first = space.payoff(event[0]);
    let fixed: Vec<Option<f64>> = (0..k)
        .map(|i| {
            if event.iter().all(|&w| space.payoff(w)[i] == first[i]) {
                Some(first[i])
            } else {
                None
            }
        })
        .collect();
    let free = fixed.iter().filter(|f| f.is_none()).count();
    (event.len() == 1 << free).then_some(fixed)
}

impl Restricted {
    pub fn event(&self) -> &[usize] {
        &self.event
    }

    pub fn form(&self) -> &RestrictedForm {
        &self.form
    }

    pub fn base(&self) -> &CostModel {
        &self.base
    }

    pub(crate) fn value(&self, q: &[f64]) -> f64 {
        match &self.form {
            RestrictedForm::Lse => log_sum_exp(&self.event.iter().map(|&w| q[w]).collect::<Vec<_>>()),
            RestrictedForm::Subcube(fixed) => fixed
                .iter()
                .zip(q)
                .map(|(f, &x)| match f {
                    Some(v) => v * x,
                    None => softplus(x),
                })
                .sum(),
            RestrictedForm::Support => support(self.base.space(), &self.event, q),
            RestrictedForm::Numeric => -self.project(q).value,
        }
    }

    pub(crate) fn price_set(&self, q: &[f64]) -> PriceSet {
        match &self.form {
            RestrictedForm::Lse => {
                let sub = softmax(&self.event.iter().map(|&w| q[w]).collect::<Vec<_>>());
                let mut p = vec![0.0; q.len()];
                for (&w, v) in self.event.iter().zip(sub) {
                    p[w] = v;
                }
                PriceSet::point(p)
            }
            RestrictedForm::Subcube(fixed) => PriceSet::point(
                fixed
                    .iter()
                    .zip(q)
                    .map(|(f, &x)| f.unwrap_or_else(|| sigmoid(x)))
                    .collect(),
            ),
            RestrictedForm::Support => support_price(self.base.space(), &self.event, q),
            RestrictedForm::Numeric => PriceSet::point(self.project(q).mu),
        }
    }

    pub(crate) fn in_domain(&self, mu: &[f64], tol: f64) -> Result<bool> {
        Ok(match &self.form {
            RestrictedForm::Lse => {
                self.base.in_domain(mu, tol)?
                    && mu.iter().enumerate().all(|(i, &x)| self.event.contains(&i) || x.abs() <= tol)
            }
            RestrictedForm::Subcube(fixed) => {
                self.base.in_domain(mu, tol)?
                    && fixed.iter().zip(mu).all(|(f, &x)| f.is_none_or(|v| (x - v).abs() <= tol))
            }
            _ => {
                let space = self.base.space();
                crate::lp::hull_membership(&space.vertices(&self.event), mu, tol)?.is_some()
            }
        })
    }

    pub(crate) fn hessian(&self, q: &[f64]) -> Option<Vec<Vec<f64>>> {
        let k = q.len();
        match &self.form {
            RestrictedForm::Lse => {
                let p = self.price_set(q).center();
                Some((0..k).map(|i| (0..k).map(|j| if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] }).collect()).collect())
            }
            RestrictedForm::Subcube(fixed) => Some(
                (0..k)
                    .map(|i| {
                        (0..k)
                            .map(|j| match (i == j, fixed[i]) {
                                (true, None) => sigmoid(q[i]) * sigmoid(-q[i]),
                                _ => 0.0,
                            })
                            .collect()
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Minimizes `R(mu) - q.mu` over the hull of the event.
    pub fn project(&self, q: &[f64]) -> Projection {
        project_onto(&self.base, &self.event, q, self.opts)
    }
}

/// Conditional-gradient projection over weights on the event's payoff vectors.
pub(crate) fn project_onto(base: &CostModel, event: &[usize], q: &[f64], opts: FwOptions) -> Projection {
    let space = base.space();
    let verts = space.vertices(event);
    let f = |lam: &[f64]| {
        let mu = space.combine(event, lam);
        let (r, g) = base
            .conj_grad(&mu)
            .expect("projection needs a conjugate with a closed-form gradient");
        let d: Vec<f64> = g.iter().zip(q).map(|(a, b)| a - b).collect();
        let grad = verts.iter().map(|v| dot(v, &d)).collect();
        (r - dot(q, &mu), grad)
    };
    let res = fw::minimize(f, fw::simplex_lmo, fw::simplex_barycenter(event.len()), opts);
    Projection {
        mu: space.combine(event, &res.x),
        value: res.value,
        gap: res.gap,
        iterations: res.iterations,
        converged: res.converged,
    }
}
