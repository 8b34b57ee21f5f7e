//! Convex cost functions, their price correspondences and conjugates.

mod price;
mod restricted;

use std::sync::Arc;

pub use price::PriceSet;
pub use restricted::{restricted_cost, Projection, Restricted, RestrictedForm};

use crate::error::{check_dim, check_finite, Error, Result};
use crate::lcmm::LcmmModel;
use crate::market::{OutcomeSpace, SpaceShape};
use crate::num::{dot, log_sum_exp, safe_ln, sigmoid, softmax, softplus, xlogx};
use crate::switch::SwitchedCost;

/// Slack allowed when testing whether a price vector lies in a domain.
pub const DOMAIN_TOL: f64 = 1e-9;

/// Relative tolerance for treating two affine pieces as simultaneously active.
pub(crate) const TIE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum CostModel {
    /// `ln sum exp(q_i)` over a simplex market.
    Lmsr(Arc<OutcomeSpace>),
    /// `sum ln(1 + e^{q_i})` over a full binary cube.
    Product(Arc<OutcomeSpace>),
    /// `max_w rho(w).q`: zero liquidity, conjugate is the hull indicator.
    PiecewiseLinear(Arc<OutcomeSpace>),
    Restricted(Box<Restricted>),
    Switched(Box<SwitchedCost>),
    Lcmm(Box<LcmmModel>),
    /// `alpha * C(q / alpha)`.
    Scaled { base: Box<CostModel>, alpha: f64 },
    /// `C(q + shift)`.
    Shifted { base: Box<CostModel>, shift: Vec<f64> },
}

impl CostModel {
    pub fn lmsr(k: usize) -> Self {
        CostModel::Lmsr(Arc::new(OutcomeSpace::simplex(k)))
    }

    pub fn square() -> Self {
        CostModel::Product(Arc::new(OutcomeSpace::square()))
    }

    /// The one-security binary market with `C(q) = max{0, q}`.
    pub fn piecewise_binary() -> Self {
        CostModel::PiecewiseLinear(Arc::new(OutcomeSpace::cube(1)))
    }

    pub fn lmsr_on(space: Arc<OutcomeSpace>) -> Result<Self> {
        if space.shape() != SpaceShape::Simplex {
            return Err(Error::InvalidMarket("LMSR needs unit-vector payoffs".into()));
        }
        Ok(CostModel::Lmsr(space))
    }

    pub fn product_on(space: Arc<OutcomeSpace>) -> Result<Self> {
        if space.shape() != SpaceShape::Cube {
            return Err(Error::InvalidMarket("product cost needs the full binary cube".into()));
        }
        Ok(CostModel::Product(space))
    }

    pub fn piecewise_on(space: Arc<OutcomeSpace>) -> Self {
        CostModel::PiecewiseLinear(space)
    }

    pub fn space(&self) -> &OutcomeSpace {
        match self {
            CostModel::Lmsr(s) | CostModel::Product(s) | CostModel::PiecewiseLinear(s) => s,
            CostModel::Restricted(r) => r.base.space(),
            CostModel::Switched(s) => s.space(),
            CostModel::Lcmm(l) => l.space(),
            CostModel::Scaled { base, .. } | CostModel::Shifted { base, .. } => base.space(),
        }
    }

    pub fn space_arc(&self) -> Arc<OutcomeSpace> {
        match self {
            CostModel::Lmsr(s) | CostModel::Product(s) | CostModel::PiecewiseLinear(s) => s.clone(),
            CostModel::Restricted(r) => r.base.space_arc(),
            CostModel::Switched(s) => s.base().space_arc(),
            CostModel::Lcmm(l) => l.space_arc(),
            CostModel::Scaled { base, .. } | CostModel::Shifted { base, .. } => base.space_arc(),
        }
    }

    pub fn dim(&self) -> usize {
        self.space().dim()
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CostModel::Lmsr(_) => "lmsr",
            CostModel::Product(_) => "product",
            CostModel::PiecewiseLinear(_) => "piecewise",
            CostModel::Restricted(_) => "restricted",
            CostModel::Switched(_) => "switched",
            CostModel::Lcmm(_) => "lcmm",
            CostModel::Scaled { .. } => "scaled",
            CostModel::Shifted { .. } => "shifted",
        }
    }

    fn check_state(&self, q: &[f64]) -> Result<()> {
        check_dim(self.dim(), q.len())?;
        check_finite(q, "state")
    }

    /// `C(q)`.
    pub fn cost(&self, q: &[f64]) -> Result<f64> {
        self.check_state(q)?;
        Ok(self.value(q))
    }

    /// `C(q + r) - C(q)`.
    pub fn trade_cost(&self, q: &[f64], r: &[f64]) -> Result<f64> {
        self.check_state(q)?;
        self.check_state(r)?;
        let qr: Vec<f64> = q.iter().zip(r).map(|(a, b)| a + b).collect();
        Ok(self.value(&qr) - self.value(q))
    }

    /// The set of subgradients of `C` at `q`.
    pub fn price(&self, q: &[f64]) -> Result<PriceSet> {
        self.check_state(q)?;
        Ok(self.price_set(q))
    }

    /// `R(mu)`; `+inf` outside the price space.
    pub fn conjugate(&self, mu: &[f64]) -> Result<f64> {
        check_dim(self.dim(), mu.len())?;
        check_finite(mu, "price")?;
        self.conj(mu)
    }

    /// `D(mu || q) = R(mu) + C(q) - q.mu`.
    pub fn divergence(&self, mu: &[f64], q: &[f64]) -> Result<f64> {
        self.check_state(q)?;
        let r = self.conjugate(mu)?;
        if r == f64::INFINITY {
            return Ok(f64::INFINITY);
        }
        Ok(r + self.value(q) - dot(q, mu))
    }

    /// Divergence from a fixed state, evaluating `C(q)` once.
    pub fn divergence_from(&self, q: &[f64]) -> Result<DivergenceFrom<'_>> {
        self.check_state(q)?;
        Ok(DivergenceFrom { model: self, q: q.to_vec(), cost_q: self.value(q) })
    }

    pub(crate) fn value(&self, q: &[f64]) -> f64 {
        match self {
            CostModel::Lmsr(_) => log_sum_exp(q),
            CostModel::Product(_) => q.iter().map(|&x| softplus(x)).sum(),
            CostModel::PiecewiseLinear(s) => support(s, &s.all(), q),
            CostModel::Restricted(r) => r.value(q),
            CostModel::Switched(s) => s.value(q),
            CostModel::Lcmm(l) => l.solve(q).value,
            CostModel::Scaled { base, alpha } => {
                let qs: Vec<f64> = q.iter().map(|x| x / alpha).collect();
                alpha * base.value(&qs)
            }
            CostModel::Shifted { base, shift } => base.value(&crate::num::add(q, shift)),
        }
    }

    pub(crate) fn price_set(&self, q: &[f64]) -> PriceSet {
        match self {
            CostModel::Lmsr(_) => PriceSet::point(softmax(q)),
            CostModel::Product(_) => PriceSet::point(q.iter().map(|&x| sigmoid(x)).collect()),
            CostModel::PiecewiseLinear(s) => support_price(s, &s.all(), q),
            CostModel::Restricted(r) => r.price_set(q),
            CostModel::Switched(s) => s.price_set(q),
            CostModel::Lcmm(l) => PriceSet::point(l.solve(q).price),
            CostModel::Scaled { base, alpha } => {
                let qs: Vec<f64> = q.iter().map(|x| x / alpha).collect();
                base.price_set(&qs)
            }
            CostModel::Shifted { base, shift } => base.price_set(&crate::num::add(q, shift)),
        }
    }

    pub(crate) fn conj(&self, mu: &[f64]) -> Result<f64> {
        match self {
            CostModel::Switched(s) => s.conjugate_value(mu),
            CostModel::Shifted { base, shift } => Ok(base.conj(mu)? - dot(mu, shift)),
            CostModel::Scaled { base, alpha } => Ok(alpha * base.conj(mu)?),
            _ => {
                if !self.in_domain(mu, DOMAIN_TOL)? {
                    return Ok(f64::INFINITY);
                }
                Ok(self.conj_grad(mu).map(|(v, _)| v).unwrap_or(f64::INFINITY))
            }
        }
    }

    /// Whether `R(mu)` is finite, up to `tol`.
    pub fn in_domain(&self, mu: &[f64], tol: f64) -> Result<bool> {
        Ok(match self {
            CostModel::Lmsr(_) => mu.iter().all(|&x| x >= -tol) && (mu.iter().sum::<f64>() - 1.0).abs() <= tol,
            CostModel::Product(_) => mu.iter().all(|&x| x >= -tol && x <= 1.0 + tol),
            CostModel::PiecewiseLinear(s) => crate::lp::hull_membership(&s.vertices(&s.all()), mu, tol)?.is_some(),
            CostModel::Restricted(r) => r.in_domain(mu, tol)?,
            CostModel::Switched(s) => {
                let all = s.space().all();
                crate::lp::hull_membership(&s.space().vertices(&all), mu, tol)?.is_some()
            }
            CostModel::Lcmm(l) => l.in_price_space(mu, tol),
            CostModel::Scaled { base, .. } | CostModel::Shifted { base, .. } => base.in_domain(mu, tol)?,
        })
    }

    /// `R(mu)` and its gradient for `mu` already known to be in the domain.
    /// `None` for kinds whose conjugate has no closed form.
    pub(crate) fn conj_grad(&self, mu: &[f64]) -> Option<(f64, Vec<f64>)> {
        match self {
            CostModel::Lmsr(_) => Some((
                mu.iter().map(|&x| xlogx(x)).sum(),
                mu.iter().map(|&x| 1.0 + safe_ln(x)).collect(),
            )),
            CostModel::Product(_) => Some((
                mu.iter().map(|&x| xlogx(x) + xlogx(1.0 - x)).sum(),
                mu.iter().map(|&x| safe_ln(x) - safe_ln(1.0 - x)).collect(),
            )),
            CostModel::PiecewiseLinear(_) => Some((0.0, vec![0.0; mu.len()])),
            CostModel::Restricted(r) => r.base.conj_grad(mu),
            CostModel::Switched(_) => None,
            CostModel::Lcmm(l) => Some(l.direct_sum_conj_grad(mu)),
            CostModel::Scaled { base, alpha } => {
                base.conj_grad(mu).map(|(v, g)| (alpha * v, g.into_iter().map(|x| alpha * x).collect()))
            }
            CostModel::Shifted { base, shift } => base
                .conj_grad(mu)
                .map(|(v, g)| (v - dot(mu, shift), g.iter().zip(shift).map(|(a, b)| a - b).collect())),
        }
    }

    /// Hessian of `C` at `q` for smooth kinds.
    pub fn hessian(&self, q: &[f64]) -> Option<Vec<Vec<f64>>> {
        match self {
            CostModel::Lmsr(_) => {
                let p = softmax(q);
                Some(
                    (0..p.len())
                        .map(|i| (0..p.len()).map(|j| if i == j { p[i] - p[i] * p[j] } else { -p[i] * p[j] }).collect())
                        .collect(),
                )
            }
            CostModel::Product(_) => {
                let k = q.len();
                Some(
                    (0..k)
                        .map(|i| {
                            (0..k)
                                .map(|j| if i == j { sigmoid(q[i]) * sigmoid(-q[i]) } else { 0.0 })
                                .collect()
                        })
                        .collect(),
                )
            }
            CostModel::Scaled { base, alpha } => {
                let qs: Vec<f64> = q.iter().map(|x| x / alpha).collect();
                base.hessian(&qs).map(|h| h.into_iter().map(|r| r.into_iter().map(|x| x / alpha).collect()).collect())
            }
            CostModel::Shifted { base, shift } => base.hessian(&crate::num::add(q, shift)),
            CostModel::Restricted(r) => r.hessian(q),
            _ => None,
        }
    }

    /// `alpha * C(q / alpha)` for `alpha` in `(0, 1]`.
    pub fn scale_liquidity(&self, alpha: f64) -> Result<CostModel> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("liquidity scale {alpha} outside (0, 1]")));
        }
        if alpha == 1.0 {
            return Ok(self.clone());
        }
        Ok(match self {
            CostModel::Scaled { base, alpha: a } => CostModel::Scaled { base: base.clone(), alpha: a * alpha },
            _ => CostModel::Scaled { base: Box::new(self.clone()), alpha },
        })
    }

    /// `q -> C(q + shift)`.
    pub fn shifted(&self, shift: Vec<f64>) -> Result<CostModel> {
        check_dim(self.dim(), shift.len())?;
        check_finite(&shift, "shift")?;
        if shift.iter().all(|x| *x == 0.0) {
            return Ok(self.clone());
        }
        Ok(CostModel::Shifted { base: Box::new(self.clone()), shift })
    }
}

/// `D(. || q)` with `C(q)` cached.
pub struct DivergenceFrom<'a> {
    model: &'a CostModel,
    q: Vec<f64>,
    cost_q: f64,
}

impl DivergenceFrom<'_> {
    pub fn at(&self, mu: &[f64]) -> Result<f64> {
        let r = self.model.conjugate(mu)?;
        if r == f64::INFINITY {
            return Ok(r);
        }
        Ok(r + self.cost_q - dot(&self.q, mu))
    }

    pub fn cost_q(&self) -> f64 {
        self.cost_q
    }
}

pub(crate) fn support(space: &OutcomeSpace, event: &[usize], q: &[f64]) -> f64 {
    event.iter().map(|&w| dot(space.payoff(w), q)).fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn support_price(space: &OutcomeSpace, event: &[usize], q: &[f64]) -> PriceSet {
    let vals: Vec<f64> = event.iter().map(|&w| dot(space.payoff(w), q)).collect();
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tie = TIE_TOL * (1.0 + m.abs());
    let verts = event
        .iter()
        .zip(&vals)
        .filter(|(_, v)| **v >= m - tie)
        .map(|(&w, _)| space.payoff(w).to_vec())
        .collect();
    PriceSet::from_vertices(verts)
}

/// Maximizes `mu.q' - C(q')` from `q0`; the optimum is a state whose price set contains `mu`.
///
/// Uses regularized Newton steps where a Hessian is available and the minimum-norm
/// supergradient otherwise, with Armijo backtracking in both cases.
pub fn best_response(model: &CostModel, mu: &[f64], q0: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    model.check_state(q0)?;
    check_dim(model.dim(), mu.len())?;
    let phi = |q: &[f64]| dot(mu, q) - model.value(q);
    let mut q = q0.to_vec();
    let mut f = phi(&q);
    let mut step = 1.0f64;
    let mut stalled = 0;
    for _ in 0..max_iter {
        let f_prev = f;
        let prices = model.price_set(&q);
        let g: Vec<f64> = crate::num::sub(mu, &prices.nearest(mu));
        if crate::num::norm_inf(&g) <= tol {
            break;
        }
        let newton = model.hessian(&q).and_then(|h| newton_direction(&h, &g));
        let mut improved = false;
        if let Some(d) = newton {
            let slope = dot(&g, &d);
            if slope > 0.0 {
                let mut t = 1.0;
                while t > 1e-10 {
                    let cand: Vec<f64> = q.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                    let fc = phi(&cand);
                    if fc >= f + 1e-4 * t * slope {
                        q = cand;
                        f = fc;
                        improved = true;
                        break;
                    }
                    t *= 0.5;
                }
            }
        }
        if !improved {
            let gg = dot(&g, &g);
            let mut t = (step * 4.0).min(1e6);
            while t > 1e-14 {
                let cand: Vec<f64> = q.iter().zip(&g).map(|(a, b)| a + t * b).collect();
                let fc = phi(&cand);
                if fc >= f + 1e-4 * t * gg {
                    q = cand;
                    f = fc;
                    improved = true;
                    break;
                }
                t *= 0.5;
            }
            step = t;
        }
        if !improved {
            break;
        }
        // Vertex beliefs are only reached at infinity; stop once the objective stops moving.
        stalled = if f - f_prev <= 1e-13 * (1.0 + f.abs()) { stalled + 1 } else { 0 };
        if stalled >= 5 {
            break;
        }
    }
    Ok(q)
}

fn newton_direction(h: &[Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let k = g.len();
    let trace: f64 = (0..k).map(|i| h[i][i]).sum();
    let reg = 1e-12 + 1e-10 * trace;
    let m = nalgebra::DMatrix::from_fn(k, k, |i, j| h[i][j] + if i == j { reg } else { 0.0 });
    let chol = m.cholesky()?;
    let d = chol.solve(&nalgebra::DVector::from_column_slice(g));
    Some(d.iter().cloned().collect())
}

/// `sup_q [mu.q - C(q)]` evaluated numerically from the origin.
pub fn numeric_conjugate(model: &CostModel, mu: &[f64]) -> Result<f64> {
    let q0 = vec![0.0; model.dim()];
    let q = best_response(model, mu, &q0, 1e-12, 20_000)?;
    Ok(dot(mu, &q) - model.value(&q))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lmsr_price_example() {
        let m = CostModel::lmsr(2);
        let p = m.price(&[0.0, 3f64.ln()]).unwrap();
        assert!(p.is_singleton(1e-15));
        assert!((p.center()[0] - 0.25).abs() < 1e-15);
        assert!((p.center()[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn square_price_at_origin() {
        let m = CostModel::square();
        let p = m.price(&[0.0, 0.0]).unwrap();
        assert_eq!(p.center(), vec![0.5, 0.5]);
    }

    #[test]
    fn piecewise_spread_at_kink() {
        let m = CostModel::piecewise_binary();
        let p = m.price(&[0.0]).unwrap();
        assert_eq!(p.lo(), vec![0.0]);
        assert_eq!(p.hi(), vec![1.0]);
        assert_eq!(m.price(&[0.5]).unwrap().center(), vec![1.0]);
        assert_eq!(m.conjugate(&[0.3]).unwrap(), 0.0);
        assert_eq!(m.conjugate(&[1.3]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn divergence_vanishes_at_price() {
        let m = CostModel::lmsr(3);
        let q = [0.2, -1.0, 0.7];
        let p = m.price(&q).unwrap().center();
        assert!(m.divergence(&p, &q).unwrap().abs() < 1e-14);
        assert_eq!(m.divergence(&[0.5, 0.6, 0.0], &q).unwrap(), f64::INFINITY);
    }

    #[test]
    fn rejects_bad_input() {
        let m = CostModel::lmsr(3);
        assert!(matches!(m.cost(&[0.0, 1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(m.cost(&[0.0, f64::NAN, 1.0]), Err(Error::NonFinite(_))));
        assert!(m.scale_liquidity(0.0).is_err());
        assert!(m.scale_liquidity(1.5).is_err());
    }

    #[test]
    fn scaled_cost_matches_definition() {
        let m = CostModel::lmsr(3).scale_liquidity(0.25).unwrap();
        let q = [1.0, 0.0, -2.0];
        let direct = 0.25 * log_sum_exp(&[4.0, 0.0, -8.0]);
        assert!((m.cost(&q).unwrap() - direct).abs() < 1e-14);
        let mu = [0.2, 0.3, 0.5];
        let r: f64 = mu.iter().map(|&x| xlogx(x)).sum();
        assert!((m.conjugate(&mu).unwrap() - 0.25 * r).abs() < 1e-14);
    }

    #[test]
    fn best_response_reaches_belief() {
        let m = CostModel::lmsr(3);
        let mu = [0.1, 0.3, 0.6];
        let q = best_response(&m, &mu, &[0.0; 3], 1e-12, 200).unwrap();
        assert!(m.divergence(&mu, &q).unwrap() < 1e-12);
        let num = numeric_conjugate(&m, &mu).unwrap();
        let exact: f64 = mu.iter().map(|&x| xlogx(x)).sum();
        assert!((num - exact).abs() < 1e-10);
    }

    #[test]
    fn best_response_on_piecewise() {
        let m = CostModel::piecewise_binary();
        let q = best_response(&m, &[0.4], &[2.0], 1e-12, 200).unwrap();
        assert!(m.price(&q).unwrap().contains(&[0.4], 1e-9));
    }
}
