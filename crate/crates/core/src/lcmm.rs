//! Linearly constrained market makers.
//!
//! The cost is `C(q) = inf over eta >= 0 of C_sum(q + A eta) - b.eta`, where `C_sum` is a
//! direct sum of block costs and the columns of `A` are linear constraints
//! `a_m . mu >= b_m` satisfied by every payoff vector. Moving the state by `A eta`
//! is the arbitrage an outside trader would extract from prices that violate them.

use std::sync::Arc;

use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{check_dim, check_finite, Error, Result};
use crate::market::{BlockStructure, OutcomeSpace};
use crate::num::{dot, norm_inf};

#[derive(Debug, Clone, Copy)]
pub struct LcmmOptions {
    /// Stop when the projected gradient in `eta` is below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial box bound on each `eta_m`; grown on boundary hits.
    pub initial_bound: f64,
}

impl Default for LcmmOptions {
    fn default() -> Self {
        LcmmOptions { tol: 1e-11, max_iter: 500, initial_bound: 64.0 }
    }
}

#[derive(Debug, Clone)]
pub struct LcmmModel {
    space: Arc<OutcomeSpace>,
    blocks: BlockStructure,
    block_costs: Vec<CostModel>,
    constraints: Vec<Vec<f64>>,
    bounds: Vec<f64>,
    opts: LcmmOptions,
}

/// Minimizer of the arbitrage problem at a state.
#[derive(Debug, Clone, Serialize)]
pub struct ArbitrageSolution {
    pub eta: Vec<f64>,
    /// `A eta`.
    pub delta: Vec<f64>,
    pub value: f64,
    /// Direct-sum price at `q + delta`, which is the market price.
    pub price: Vec<f64>,
    /// `D_sum(price || q + delta) + (A^T price - b).eta`.
    pub certificate_gap: f64,
    /// Largest violation of `A^T price >= b`.
    pub infeasibility: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LcmmModel {
    pub fn new(
        space: Arc<OutcomeSpace>,
        blocks: BlockStructure,
        block_costs: Vec<CostModel>,
        constraints: Vec<Vec<f64>>,
        bounds: Vec<f64>,
    ) -> Result<Self> {
        let k = space.dim();
        if blocks.dim() != k {
            return Err(Error::InvalidMarket(format!("blocks cover {} of {k} securities", blocks.dim())));
        }
        if block_costs.len() != blocks.len() {
            return Err(Error::InvalidMarket("one cost per block required".into()));
        }
        for (g, c) in block_costs.iter().enumerate() {
            check_dim(blocks.blocks()[g].len(), c.dim())?;
        }
        check_dim(constraints.len(), bounds.len())?;
        for a in &constraints {
            check_dim(k, a.len())?;
            check_finite(a, "constraint")?;
        }
        check_finite(&bounds, "constraint bound")?;
        let model = LcmmModel { space, blocks, block_costs, constraints, bounds, opts: LcmmOptions::default() };
        for w in 0..model.space.len() {
            let rho = model.space.payoff(w);
            for g in 0..model.blocks.len() {
                if !model.block_costs[g].in_domain(&model.blocks.gather(g, rho), 1e-9)? {
                    return Err(Error::InvalidMarket(format!(
                        "payoff of outcome {} is outside the domain of block {g}",
                        model.space.name(w)
                    )));
                }
            }
            if model.violation(rho) > 1e-9 {
                return Err(Error::InvalidMarket(format!(
                    "payoff of outcome {} violates a constraint",
                    model.space.name(w)
                )));
            }
        }
        Ok(model)
    }

    /// `n` binary events and their count: one binary block per event, one LMSR block for the
    /// count, and the expected-count identity as a pair of opposite inequalities.
    pub fn medal_counts(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("medal counts need n >= 1".into()));
        }
        let space = Arc::new(OutcomeSpace::medal_counts(n));
        let k = 2 * n + 1;
        let mut blocks: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        blocks.push((n..k).collect());
        let mut costs: Vec<CostModel> = (0..n).map(|_| CostModel::Product(Arc::new(OutcomeSpace::cube(1)))).collect();
        costs.push(CostModel::lmsr(n + 1));
        let mut a = vec![0.0; k];
        for (y, ay) in a.iter_mut().skip(n).enumerate() {
            *ay = y as f64;
        }
        for ai in a.iter_mut().take(n) {
            *ai = -1.0;
        }
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        Self::new(space, BlockStructure::new(blocks, k)?, costs, vec![a, neg], vec![0.0, 0.0])
    }

    /// Independent binary LMSRs on the square, with no constraints.
    pub fn square() -> Result<Self> {
        let space = Arc::new(OutcomeSpace::square());
        let costs = (0..2).map(|_| CostModel::Product(Arc::new(OutcomeSpace::cube(1)))).collect();
        Self::new(space, BlockStructure::new(vec![vec![0], vec![1]], 2)?, costs, vec![], vec![])
    }

    pub fn with_options(mut self, opts: LcmmOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }

    pub fn space_arc(&self) -> Arc<OutcomeSpace> {
        self.space.clone()
    }

    pub fn blocks(&self) -> &BlockStructure {
        &self.blocks
    }

    pub fn block_costs(&self) -> &[CostModel] {
        &self.block_costs
    }

    pub fn constraints(&self) -> &[Vec<f64>] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// Same constraints with block `g`'s cost replaced by `beta_g C_g(. / beta_g)`.
    pub fn with_block_scales(&self, betas: &[f64]) -> Result<Self> {
        check_dim(self.blocks.len(), betas.len())?;
        let block_costs = self
            .block_costs
            .iter()
            .zip(betas)
            .map(|(c, &b)| c.scale_liquidity(b))
            .collect::<Result<Vec<_>>>()?;
        Ok(LcmmModel { block_costs, ..self.clone() })
    }

    /// `A eta`.
    pub fn delta(&self, eta: &[f64]) -> Vec<f64> {
        let mut d = vec![0.0; self.space.dim()];
        for (a, e) in self.constraints.iter().zip(eta) {
            crate::num::axpy(&mut d, *e, a);
        }
        d
    }

    /// `A^T mu - b`.
    pub fn slack(&self, mu: &[f64]) -> Vec<f64> {
        self.constraints.iter().zip(&self.bounds).map(|(a, b)| dot(a, mu) - b).collect()
    }

    fn violation(&self, mu: &[f64]) -> f64 {
        self.slack(mu).iter().fold(0.0, |m, s| m.max(-s))
    }

    pub fn direct_sum_cost(&self, x: &[f64]) -> f64 {
        (0..self.blocks.len()).map(|g| self.block_costs[g].value(&self.blocks.gather(g, x))).sum()
    }

    pub fn direct_sum_price(&self, x: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; x.len()];
        for g in 0..self.blocks.len() {
            let pg = self.block_costs[g].price_set(&self.blocks.gather(g, x)).center();
            self.blocks.scatter(g, &pg, &mut p);
        }
        p
    }

    /// `R_sum(mu)` and gradient, for `mu` inside every block domain.
    pub fn direct_sum_conj_grad(&self, mu: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; mu.len()];
        let mut total = 0.0;
        for g in 0..self.blocks.len() {
            let (v, gg) = self.block_costs[g]
                .conj_grad(&self.blocks.gather(g, mu))
                .expect("block costs have closed-form conjugates");
            total += v;
            self.blocks.scatter(g, &gg, &mut grad);
        }
        (total, grad)
    }

    /// `R_sum(mu)`, `+inf` outside a block domain.
    pub fn direct_sum_conjugate(&self, mu: &[f64]) -> f64 {
        let mut total = 0.0;
        for g in 0..self.blocks.len() {
            let part = self.blocks.gather(g, mu);
            match self.block_costs[g].conj(&part) {
                Ok(v) if v.is_finite() => total += v,
                _ => return f64::INFINITY,
            }
        }
        total
    }

    /// `D_sum(mu || x)`.
    pub fn direct_sum_divergence(&self, mu: &[f64], x: &[f64]) -> f64 {
        self.direct_sum_conjugate(mu) + self.direct_sum_cost(x) - dot(mu, x)
    }

    /// Membership in the constraint polytope intersected with the block domains.
    pub fn in_price_space(&self, mu: &[f64], tol: f64) -> bool {
        (0..self.blocks.len()).all(|g| {
            self.block_costs[g].in_domain(&self.blocks.gather(g, mu), tol).unwrap_or(false)
        }) && self.violation(mu) <= tol
    }

    fn direct_sum_hessian(&self, x: &[f64]) -> Option<Vec<Vec<f64>>> {
        let k = x.len();
        let mut h = vec![vec![0.0; k]; k];
        for g in 0..self.blocks.len() {
            let hg = self.block_costs[g].hessian(&self.blocks.gather(g, x))?;
            let idx = &self.blocks.blocks()[g];
            for (a, &i) in idx.iter().enumerate() {
                for (b, &j) in idx.iter().enumerate() {
                    h[i][j] = hg[a][b];
                }
            }
        }
        Some(h)
    }

    fn objective(&self, q: &[f64], eta: &[f64]) -> f64 {
        let x = crate::num::add(q, &self.delta(eta));
        self.direct_sum_cost(&x) - dot(&self.bounds, eta)
    }

    /// Solves the arbitrage problem at `q` by projected Newton steps in `eta`.
    pub fn solve(&self, q: &[f64]) -> ArbitrageSolution {
        self.solve_from(q, &vec![0.0; self.constraints.len()])
    }

    pub fn solve_from(&self, q: &[f64], eta0: &[f64]) -> ArbitrageSolution {
        let mc = self.constraints.len();
        if mc == 0 {
            return self.finish(q, vec![], 0, true);
        }
        let mut eta: Vec<f64> = eta0.iter().map(|e| e.max(0.0)).collect();
        let mut cap = self.opts.initial_bound.max(eta.iter().cloned().fold(0.0, f64::max) * 2.0);
        let mut f = self.objective(q, &eta);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < self.opts.max_iter {
            iterations += 1;
            let x = crate::num::add(q, &self.delta(&eta));
            let g = self.slack(&self.direct_sum_price(&x));
            let at_lo = |m: usize| eta[m] <= 0.0 && g[m] >= 0.0;
            let at_hi = |m: usize| eta[m] >= cap && g[m] <= 0.0;
            let pg: Vec<f64> = (0..mc).map(|m| if at_lo(m) || at_hi(m) { 0.0 } else { g[m] }).collect();
            if norm_inf(&pg) <= self.opts.tol {
                if (0..mc).any(at_hi) {
                    cap *= 8.0;
                    continue;
                }
                converged = true;
                break;
            }
            let free: Vec<usize> = (0..mc).filter(|&m| !(at_lo(m) || at_hi(m))).collect();
            let mut stepped = false;
            if let Some(d) = self.newton_step(&x, &g, &free) {
                stepped = self.search(q, &mut eta, &mut f, &d, &g, cap);
            }
            if !stepped {
                let d: Vec<f64> = pg.iter().map(|v| -v).collect();
                stepped = self.search(q, &mut eta, &mut f, &d, &g, cap);
            }
            if !stepped {
                converged = norm_inf(&pg) <= 1e-8;
                break;
            }
        }
        self.finish(q, eta, iterations, converged)
    }

    fn newton_step(&self, x: &[f64], g: &[f64], free: &[usize]) -> Option<Vec<f64>> {
        if free.is_empty() {
            return None;
        }
        let h = self.direct_sum_hessian(x)?;
        let n = free.len();
        let hv: Vec<Vec<f64>> = free
            .iter()
            .map(|&m| {
                let a = &self.constraints[m];
                (0..a.len()).map(|i| dot(&h[i], a)).collect()
            })
            .collect();
        let mut mat = nalgebra::DMatrix::from_fn(n, n, |i, j| dot(&self.constraints[free[j]], &hv[i]));
        let trace: f64 = (0..n).map(|i| mat[(i, i)]).sum();
        for i in 0..n {
            mat[(i, i)] += 1e-14 + 1e-12 * trace;
        }
        let rhs = nalgebra::DVector::from_iterator(n, free.iter().map(|&m| -g[m]));
        let sol = mat.cholesky()?.solve(&rhs);
        let mut d = vec![0.0; g.len()];
        for (i, &m) in free.iter().enumerate() {
            d[m] = sol[i];
        }
        Some(d)
    }

    /// Armijo search along `d` with projection onto `[0, cap]`.
    fn search(&self, q: &[f64], eta: &mut Vec<f64>, f: &mut f64, d: &[f64], g: &[f64], cap: f64) -> bool {
        let mut t = 1.0;
        for _ in 0..60 {
            let cand: Vec<f64> = eta.iter().zip(d).map(|(e, di)| (e + t * di).clamp(0.0, cap)).collect();
            let step: Vec<f64> = cand.iter().zip(eta.iter()).map(|(a, b)| a - b).collect();
            let decrease = dot(g, &step);
            if decrease < 0.0 {
                let fc = self.objective(q, &cand);
                if fc <= *f + 1e-4 * decrease {
                    *eta = cand;
                    *f = fc;
                    return true;
                }
            }
            t *= 0.5;
        }
        false
    }

    fn finish(&self, q: &[f64], eta: Vec<f64>, iterations: usize, converged: bool) -> ArbitrageSolution {
        let delta = self.delta(&eta);
        let x = crate::num::add(q, &delta);
        let price = self.direct_sum_price(&x);
        let value = self.direct_sum_cost(&x) - dot(&self.bounds, &eta);
        let certificate_gap = self.direct_sum_divergence(&price, &x) + dot(&self.slack(&price), &eta);
        let infeasibility = self.violation(&price);
        ArbitrageSolution { eta, delta, value, price, certificate_gap, infeasibility, iterations, converged }
    }
}

/// Solves `inf over eta >= 0 of C_sum(q + A eta) - b.eta`.
pub fn lcmm_cost(model: &LcmmModel, q: &[f64]) -> Result<ArbitrageSolution> {
    check_dim(model.space.dim(), q.len())?;
    check_finite(q, "state")?;
    let sol = model.solve(q);
    if !sol.value.is_finite() {
        return Err(Error::NoConvergence("arbitrage problem value is not finite".into()));
    }
    Ok(sol)
}

/// Checks optimality of `eta` at `q`: the direct-sum price there must satisfy the constraints
/// and complementary slackness, up to `tol`.
pub fn certificate_check(model: &LcmmModel, q: &[f64], eta: &[f64], tol: f64) -> Result<bool> {
    check_dim(model.space.dim(), q.len())?;
    check_dim(model.constraints.len(), eta.len())?;
    if eta.iter().any(|e| *e < 0.0) {
        return Ok(false);
    }
    let x = crate::num::add(q, &model.delta(eta));
    let mu = model.direct_sum_price(&x);
    if !model.in_price_space(&mu, tol) {
        return Ok(false);
    }
    let gap = model.direct_sum_divergence(&mu, &x) + dot(&model.slack(&mu), eta);
    Ok(gap.abs() <= tol)
}

/// `D(mu || q) = D_sum(mu || q + delta*) + (A^T mu - b).eta*`, `+inf` outside the price space.
pub fn lcmm_divergence(model: &LcmmModel, mu: &[f64], q: &[f64]) -> Result<f64> {
    check_dim(model.space.dim(), mu.len())?;
    if !model.in_price_space(mu, crate::cost::DOMAIN_TOL) {
        return Ok(f64::INFINITY);
    }
    let sol = lcmm_cost(model, q)?;
    let x = crate::num::add(q, &sol.delta);
    Ok(model.direct_sum_divergence(mu, &x) + dot(&model.slack(mu), &sol.eta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medal_counts_one_closed_form() {
        // With n = 1 the count equals the event, so the price space is a segment and
        // C(q) = 2 ln(1 + e^{(q1 + q3 - q2) / 2}) + q2.
        let m = LcmmModel::medal_counts(1).unwrap();
        let q = [2.0, 0.0, 0.0];
        let sol = lcmm_cost(&m, &q).unwrap();
        assert!(sol.converged);
        assert!((sol.eta[0] - sol.eta[1] - 1.0).abs() < 1e-8);
        let expect = 2.0 * (1.0 + 1f64.exp()).ln();
        assert!((sol.value - expect).abs() < 1e-10);
        assert!(sol.certificate_gap.abs() < 1e-10);
        assert!(certificate_check(&m, &q, &sol.eta, 1e-8).unwrap());
        assert!(!certificate_check(&m, &q, &[0.0, 0.0], 1e-8).unwrap());
    }

    #[test]
    fn feasible_prices_need_no_arbitrage() {
        let m = LcmmModel::medal_counts(2).unwrap();
        // Independent fair coins: count is 0, 1, 2 with probability 1/4, 1/2, 1/4.
        let q = [0.0, 0.0, 0.0, 2f64.ln(), 0.0];
        let sol = lcmm_cost(&m, &q).unwrap();
        assert!(sol.eta.iter().all(|e| *e < 1e-12));
        assert!((sol.value - m.direct_sum_cost(&q)).abs() < 1e-14);
    }

    #[test]
    fn rejects_violated_constraint() {
        let space = Arc::new(OutcomeSpace::cube(1));
        let blocks = BlockStructure::new(vec![vec![0]], 1).unwrap();
        let costs = vec![CostModel::Product(Arc::new(OutcomeSpace::cube(1)))];
        let r = LcmmModel::new(space, blocks, costs, vec![vec![1.0]], vec![0.5]);
        assert!(matches!(r, Err(Error::InvalidMarket(_))));
    }

    #[test]
    fn divergence_routes_agree() {
        let m = LcmmModel::medal_counts(2).unwrap();
        let cm = CostModel::Lcmm(Box::new(m.clone()));
        let q = [1.0, -0.5, 0.3, 0.0, 2.0];
        let mu = m.space().combine(&[0, 1, 2, 3], &[0.1, 0.2, 0.3, 0.4]);
        let a = lcmm_divergence(&m, &mu, &q).unwrap();
        let b = cm.divergence(&mu, &q).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
