//! Liquidity that decays per block over time in a linearly constrained market.
//!
//! Block `g` at time `t` uses `beta_g(t) C_g(q_g / beta_g(t))`. Moving from `t` to `t~`
//! the state is rescaled around the arbitrage point, `q~_g = alpha_g (q_g + delta_g) - delta_g`
//! with `alpha_g = beta_g(t~) / beta_g(t)`, which keeps prices fixed and shrinks every
//! block's share of the divergence by `alpha_g`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::desiderata::{check_desiderata, CheckOptions, DesiderataReport, Desideratum};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::lcmm::{lcmm_cost, ArbitrageSolution, LcmmModel};
use crate::lp::{Cmp, Lp};
use crate::market::{membership, Observation};
use crate::num::{dist_inf, dot};
use crate::utility::util_event;

pub const DEFAULT_FLOOR: f64 = 1e-3;

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

/// Liquidity multiplier of one block as a function of elapsed time; equals 1 at the start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    /// `max(floor, 1 - rate * (t - t0))`.
    LinearToFloor {
        rate: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    /// `exp(-rate * (t - t0))`.
    Exponential { rate: f64 },
}

impl Schedule {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Schedule::Constant => true,
            Schedule::LinearToFloor { rate, floor } => rate >= 0.0 && floor > 0.0 && floor <= 1.0 && rate.is_finite(),
            Schedule::Exponential { rate } => rate >= 0.0 && rate.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("bad schedule {self:?}")))
        }
    }

    pub fn beta(&self, elapsed: f64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::LinearToFloor { rate, floor } => (1.0 - rate * elapsed).max(floor),
            Schedule::Exponential { rate } => (-rate * elapsed).exp(),
        }
    }
}

/// State of a decaying market with the arbitrage solution cached for `(q, t)`.
#[derive(Debug, Clone, Serialize)]
pub struct TimedState {
    pub q: Vec<f64>,
    pub t: f64,
    pub eta: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GradualMarket {
    model: LcmmModel,
    schedules: Vec<Schedule>,
    t0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Decomposition {
    /// `D~(mu || q~)` computed from the new cost directly.
    pub lhs: f64,
    /// `sum_g alpha_g D_g(mu_g || q_g + delta_g) + (A^T mu - b).eta`.
    pub rhs: f64,
    pub block_terms: Vec<f64>,
    pub constraint_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Tightness {
    /// Binary payoffs make every block value a face.
    TightByBinary,
    /// No counterexample found by the fiber search.
    Tight,
    /// A price with block value `x` that no mixture of outcomes with `rho_g = x` reaches.
    NotTight { realization: String, mu: Vec<f64> },
}

impl Tightness {
    pub fn is_tight(&self) -> bool {
        !matches!(self, Tightness::NotTight { .. })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DropRow {
    pub realization: String,
    pub measured: f64,
    pub predicted: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PartialDecreaseAudit {
    pub block: usize,
    pub alpha: f64,
    pub tightness: Tightness,
    pub drops: Vec<DropRow>,
    pub desiderata: DesiderataReport,
}

impl GradualMarket {
    pub fn new(model: LcmmModel, schedules: Vec<Schedule>, t0: f64) -> Result<Self> {
        check_dim(model.blocks().len(), schedules.len())?;
        for s in &schedules {
            s.validate()?;
        }
        if !t0.is_finite() {
            return Err(Error::NonFinite("start time"));
        }
        Ok(GradualMarket { model, schedules, t0 })
    }

    pub fn model(&self) -> &LcmmModel {
        &self.model
    }

    pub fn schedules(&self) -> &[Schedule] {
        &self.schedules
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn betas(&self, t: f64) -> Result<Vec<f64>> {
        if t.is_nan() || t < self.t0 {
            return Err(Error::TimeOrder { prev: self.t0, next: t });
        }
        Ok(self.schedules.iter().map(|s| s.beta(t - self.t0)).collect())
    }

    /// Ratios `beta_g(t_new) / beta_g(t)`.
    pub fn alphas(&self, t: f64, t_new: f64) -> Result<Vec<f64>> {
        if t_new < t {
            return Err(Error::TimeOrder { prev: t, next: t_new });
        }
        let b = self.betas(t)?;
        let bn = self.betas(t_new)?;
        Ok(bn.iter().zip(&b).map(|(n, o)| n / o).collect())
    }

    pub fn model_at(&self, t: f64) -> Result<LcmmModel> {
        self.model.with_block_scales(&self.betas(t)?)
    }

    pub fn cost_model_at(&self, t: f64) -> Result<CostModel> {
        Ok(CostModel::Lcmm(Box::new(self.model_at(t)?)))
    }

    /// `C(q; t)` and its arbitrage solution.
    pub fn time_cost(&self, q: &[f64], t: f64) -> Result<ArbitrageSolution> {
        lcmm_cost(&self.model_at(t)?, q)
    }

    pub fn initial_state(&self, q: &[f64]) -> Result<TimedState> {
        let sol = self.time_cost(q, self.t0)?;
        Ok(TimedState { q: q.to_vec(), t: self.t0, eta: sol.eta, delta: sol.delta })
    }

    pub fn state_at(&self, q: &[f64], t: f64) -> Result<TimedState> {
        let sol = self.time_cost(q, t)?;
        Ok(TimedState { q: q.to_vec(), t, eta: sol.eta, delta: sol.delta })
    }

    /// The state at `t_new` that keeps prices and rescales each block's divergence.
    pub fn new_state(&self, state: &TimedState, t_new: f64) -> Result<TimedState> {
        check_dim(self.model.space().dim(), state.q.len())?;
        check_finite(&state.q, "state")?;
        let alphas = self.alphas(state.t, t_new)?;
        let mut q = state.q.clone();
        for (g, block) in self.model.blocks().blocks().iter().enumerate() {
            for &i in block {
                q[i] = alphas[g] * (state.q[i] + state.delta[i]) - state.delta[i];
            }
        }
        Ok(TimedState { q, t: t_new, eta: state.eta.clone(), delta: state.delta.clone() })
    }

    /// Both sides of the divergence identity at `(mu, q, t) -> (q~, t~)`.
    pub fn divergence_decomposition(&self, mu: &[f64], q: &[f64], t: f64, t_new: f64) -> Result<Decomposition> {
        check_dim(self.model.space().dim(), mu.len())?;
        let state = self.state_at(q, t)?;
        let next = self.new_state(&state, t_new)?;
        let lhs = self.cost_model_at(t_new)?.divergence(mu, &next.q)?;
        let alphas = self.alphas(t, t_new)?;
        let at_t = self.model_at(t)?;
        let x = crate::num::add(q, &state.delta);
        let blocks = at_t.blocks();
        let block_terms: Vec<f64> = (0..blocks.len())
            .map(|g| {
                let c = &at_t.block_costs()[g];
                alphas[g] * c.divergence(&blocks.gather(g, mu), &blocks.gather(g, &x)).unwrap_or(f64::INFINITY)
            })
            .collect();
        let constraint_term = dot(&at_t.slack(mu), &state.eta);
        let rhs = block_terms.iter().sum::<f64>() + constraint_term;
        Ok(Decomposition { lhs, rhs, block_terms, constraint_term })
    }

    /// Largest price change across a state update.
    pub fn price_drift(&self, state: &TimedState, next: &TimedState) -> Result<f64> {
        let p = self.time_cost(&state.q, state.t)?.price;
        let pn = self.time_cost(&next.q, next.t)?.price;
        Ok(dist_inf(&p, &pn))
    }

    /// Whether fixing block `g`'s payoff to a value picks out a face of the price space.
    pub fn tightness_check(&self, g: usize) -> Result<Tightness> {
        let blocks = self.model.blocks();
        if g >= blocks.len() {
            return Err(Error::InvalidParameter(format!("no block {g}")));
        }
        let space = self.model.space();
        let idx = &blocks.blocks()[g];
        if space.rows().iter().all(|r| idx.iter().all(|&i| r[i] == 0.0 || r[i] == 1.0)) {
            return Ok(Tightness::TightByBinary);
        }
        let obs = Observation::block(space, idx)?;
        if obs.len() == 1 {
            return Ok(Tightness::Tight);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(g as u64);
        for x in 0..obs.len() {
            let cell = obs.cell(x);
            let value = blocks.gather(g, space.payoff(cell[0]));
            let outside: Vec<f64> = (0..space.len()).map(|w| if cell.contains(&w) { 0.0 } else { -1.0 }).collect();
            let mut objectives = vec![outside];
            for _ in 0..32 {
                objectives.push((0..space.len()).map(|_| rng.gen_range(-1.0..1.0)).collect());
            }
            for c in &objectives {
                let Some(lam) = fiber_vertex(space, idx, &value, c)? else { continue };
                let mu = space.combine(&space.all(), &lam);
                if membership(space, &mu, &cell, 1e-9)?.is_none() {
                    return Ok(Tightness::NotTight { realization: obs.realizations()[x].clone(), mu });
                }
            }
        }
        Ok(Tightness::Tight)
    }

    /// Audits a decrease of block `g` alone from `t` to `t_new` at state `q`.
    pub fn partial_decrease_audit(&self, g: usize, q: &[f64], t: f64, t_new: f64, opts: &CheckOptions) -> Result<PartialDecreaseAudit> {
        let alphas = self.alphas(t, t_new)?;
        if g >= alphas.len() {
            return Err(Error::InvalidParameter(format!("no block {g}")));
        }
        if alphas.iter().enumerate().any(|(h, a)| h != g && (a - 1.0).abs() > 1e-15) {
            return Err(Error::InvalidParameter(format!("blocks other than {g} change liquidity")));
        }
        let tightness = self.tightness_check(g)?;
        let state = self.state_at(q, t)?;
        let next = self.new_state(&state, t_new)?;
        let old = self.cost_model_at(t)?;
        let new = self.cost_model_at(t_new)?;
        let space = self.model.space();
        let blocks = self.model.blocks();
        let obs = Observation::block(space, &blocks.blocks()[g])?;
        let at_t = self.model_at(t)?;
        let x_shift = blocks.gather(g, &crate::num::add(q, &state.delta));
        let mut drops = Vec::new();
        for (x, cell) in obs.cells().iter().enumerate() {
            let u_old = util_event(&old, cell, q)?.value;
            let u_new = util_event(&new, cell, &next.q)?.value;
            let value = blocks.gather(g, space.payoff(cell[0]));
            let predicted = (1.0 - alphas[g]) * at_t.block_costs()[g].divergence(&value, &x_shift)?;
            let measured = u_old - u_new;
            drops.push(DropRow {
                realization: obs.realizations()[x].clone(),
                measured,
                predicted,
                error: (measured - predicted).abs(),
            });
        }
        let mut opts = opts.clone();
        opts.enabled.retain(|d| *d != Desideratum::ZeroUtil);
        if !tightness.is_tight() {
            opts.enabled.retain(|d| *d != Desideratum::DecUtil);
        }
        let desiderata = check_desiderata((&old, q), (&new, &next.q), &obs, &opts)?;
        Ok(PartialDecreaseAudit { block: g, alpha: alphas[g], tightness, drops, desiderata })
    }
}

/// A vertex of `{lambda in simplex : sum lambda_w rho_g(w) = value}` minimizing `c`.
fn fiber_vertex(space: &crate::market::OutcomeSpace, idx: &[usize], value: &[f64], c: &[f64]) -> Result<Option<Vec<f64>>> {
    let mut lp = Lp::minimize();
    let lam: Vec<usize> = c.iter().map(|&ci| lp.var(ci, 0.0, f64::INFINITY)).collect();
    lp.constraint(&lam.iter().map(|&i| (i, 1.0)).collect::<Vec<_>>(), Cmp::Eq, 1.0);
    for (d, &i) in idx.iter().enumerate() {
        let terms: Vec<(usize, f64)> = lam.iter().enumerate().map(|(w, &v)| (v, space.payoff(w)[i])).collect();
        lp.constraint(&terms, Cmp::Eq, value[d]);
    }
    Ok(lp.solve()?.map(|(_, x)| lam.iter().map(|&i| x[i].max(0.0)).collect()))
}
