//! Trading simulations for both switching protocols, with settlement and loss accounting.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{best_response, CostModel};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::gradual::{GradualMarket, TimedState};
use crate::market::Observation;
use crate::num::{add, dot, sub};
use crate::switch::{plan_switch_with, ConsistencyOptions, ConsistencyWitness};
use crate::utility::{optimizing_sequence, util_event};

/// Utility below which an arbitrageur does not bother trading.
const ARB_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraderKind {
    /// Moves prices to the belief `mu`.
    Belief { mu: Vec<f64> },
    /// Knows the outcome lies in `event` and greedily locks in a guaranteed profit.
    /// In a sudden-revelation run an empty event means "the revealed cell".
    Arbitrageur {
        #[serde(default)]
        event: Vec<usize>,
        #[serde(default = "default_arb_steps")]
        steps: usize,
    },
    /// Buys a uniformly random bundle in `[-scale, scale]^K`.
    Noise { scale: f64 },
    /// Buys the same bundle every time.
    Fixed { bundle: Vec<f64> },
}

fn default_arb_steps() -> usize {
    40
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraderAgent {
    pub id: String,
    #[serde(flatten)]
    pub kind: TraderKind,
    /// Largest amount the trader pays for one trade.
    #[serde(default)]
    pub budget: Option<f64>,
}

impl TraderAgent {
    pub fn new(id: impl Into<String>, kind: TraderKind) -> Self {
        TraderAgent { id: id.into(), kind, budget: None }
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.budget = Some(budget);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeRequest {
    pub time: f64,
    /// Index into the trader list.
    pub trader: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TradeRecord {
    pub time: f64,
    pub trader: String,
    pub bundle: Vec<f64>,
    pub cost: f64,
    pub state_before: Vec<f64>,
    pub state_after: Vec<f64>,
    pub price_center: Vec<f64>,
    /// Width `hi - lo` of the price set after the trade, per security.
    pub spread: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SwitchRecord {
    pub time: f64,
    pub state: Vec<f64>,
    pub realization: String,
    pub offsets: Vec<f64>,
    pub guaranteed: bool,
    pub consistent: bool,
    pub worst_violation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UpdateRecord {
    pub time: f64,
    pub state_before: Vec<f64>,
    pub state_after: Vec<f64>,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerEvent {
    Trade(TradeRecord),
    Switch(SwitchRecord),
    Update(UpdateRecord),
}

#[derive(Debug, Clone, Serialize)]
pub struct Settlement {
    pub outcome: String,
    /// `(trader id, paid, received)` in first-trade order.
    pub traders: Vec<(String, f64, f64)>,
    pub collected: f64,
    pub paid_out: f64,
    /// `paid_out - collected`.
    pub maker_loss: f64,
    /// `sum of trader P&L + maker P&L`; zero up to rounding.
    pub conservation_residual: f64,
}

impl Settlement {
    pub fn trader_pnl(&self, id: &str) -> Option<f64> {
        self.traders.iter().find(|t| t.0 == id).map(|t| t.2 - t.1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Ledger {
    pub initial_state: Vec<f64>,
    pub final_state: Vec<f64>,
    pub events: Vec<LedgerEvent>,
    pub settlement: Option<Settlement>,
}

impl Ledger {
    fn new(s: &[f64]) -> Self {
        Ledger { initial_state: s.to_vec(), final_state: s.to_vec(), events: Vec::new(), settlement: None }
    }

    pub fn trades(&self) -> impl Iterator<Item = &TradeRecord> {
        self.events.iter().filter_map(|e| match e {
            LedgerEvent::Trade(t) => Some(t),
            _ => None,
        })
    }

    pub fn maker_loss(&self) -> Option<f64> {
        self.settlement.as_ref().map(|s| s.maker_loss)
    }

    fn settle(&mut self, space: &crate::market::OutcomeSpace, outcome: usize) {
        let rho = space.payoff(outcome);
        let mut traders: Vec<(String, f64, f64)> = Vec::new();
        for t in self.trades() {
            let pay = dot(&t.bundle, rho);
            match traders.iter_mut().find(|e| e.0 == t.trader) {
                Some(e) => {
                    e.1 += t.cost;
                    e.2 += pay;
                }
                None => traders.push((t.trader.clone(), t.cost, pay)),
            }
        }
        let collected: f64 = traders.iter().map(|t| t.1).sum();
        // Liquidity updates move the state without trades, so pay out per bundle.
        let paid_out: f64 = traders.iter().map(|t| t.2).sum();
        let maker_loss = paid_out - collected;
        let trader_total: f64 = traders.iter().map(|t| t.2 - t.1).sum();
        self.settlement = Some(Settlement {
            outcome: space.name(outcome).to_string(),
            traders,
            collected,
            paid_out,
            maker_loss,
            conservation_residual: trader_total - maker_loss,
        });
    }
}

/// Which cost prices a trade timed exactly at the switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AtSwitch {
    #[default]
    New,
    Old,
}

#[derive(Debug, Clone)]
pub struct Protocol1Options {
    pub seed: u64,
    pub allow_inconsistent: bool,
    pub at_switch: AtSwitch,
    pub consistency: ConsistencyOptions,
    /// Skip the consistency probes when every cell has an exposure witness.
    pub trust_exposed: bool,
}

impl Default for Protocol1Options {
    fn default() -> Self {
        Protocol1Options {
            seed: 0,
            allow_inconsistent: false,
            at_switch: AtSwitch::New,
            consistency: ConsistencyOptions::default(),
            trust_exposed: false,
        }
    }
}

/// Raised when a switch plan fails its consistency check and no override was given.
#[derive(Debug, Clone, Serialize)]
pub struct InconsistentSwitch {
    pub ledger: Ledger,
    pub witness: Option<ConsistencyWitness>,
}

#[derive(Debug, Clone)]
pub enum RunError {
    /// The switch plan failed its consistency check and no override was set.
    Inconsistent(Box<InconsistentSwitch>),
    Core(Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Inconsistent(r) => match &r.witness {
                Some(w) => write!(f, "inconsistent switch: realization {} violates by {:.6e} at {:?}", w.realization, w.violation, w.mu),
                None => write!(f, "inconsistent switch: overlapping cells"),
            },
            RunError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for RunError {}

/// Maker loss above the bound, with the run that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct LossViolation {
    pub loss: f64,
    pub bound: f64,
    pub ledger: Ledger,
}

/// `max over outcomes of D(rho(w) || s)`: the most the maker can lose from state `s`.
pub fn wc_loss_bound(m: &CostModel, s: &[f64]) -> Result<f64> {
    let div = m.divergence_from(s)?;
    let space = m.space();
    let mut worst = f64::NEG_INFINITY;
    for w in 0..space.len() {
        worst = worst.max(div.at(space.payoff(w))?);
    }
    Ok(worst)
}

/// Checks a settled ledger against a loss bound; returns the slack `bound - loss`.
pub fn verify_loss(ledger: &Ledger, bound: f64, tol: f64) -> std::result::Result<f64, Box<LossViolation>> {
    let loss = ledger.maker_loss().unwrap_or(0.0);
    if loss <= bound + tol {
        Ok(bound - loss)
    } else {
        Err(Box::new(LossViolation { loss, bound, ledger: ledger.clone() }))
    }
}

/// Deterministic stream for one trader action.
fn action_rng(seed: u64, trader: usize, action: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trader as u64) << 32) | action as u64);
    rng
}

fn check_requests(requests: &[TradeRequest], n_traders: usize) -> Result<()> {
    for pair in requests.windows(2) {
        if pair[1].time < pair[0].time {
            return Err(Error::TimeOrder { prev: pair[0].time, next: pair[1].time });
        }
    }
    if let Some(r) = requests.iter().find(|r| r.trader >= n_traders || !r.time.is_finite()) {
        return Err(Error::InvalidParameter(format!("bad trade request {r:?}")));
    }
    Ok(())
}

/// The bundle a trader asks for at state `q` under cost `m`, or `None` to pass.
fn choose_bundle(
    agent: &TraderAgent,
    m: &CostModel,
    q: &[f64],
    revealed: Option<&[usize]>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<Vec<f64>>> {
    let k = m.dim();
    let bundle = match &agent.kind {
        TraderKind::Belief { mu } => {
            check_dim(k, mu.len())?;
            let target = best_response(m, mu, q, 1e-10, 300)?;
            sub(&target, q)
        }
        TraderKind::Arbitrageur { event, steps } => {
            let event: &[usize] = if event.is_empty() {
                match revealed {
                    Some(e) => e,
                    None => return Ok(None),
                }
            } else {
                event
            };
            if util_event(m, event, q)?.value <= ARB_THRESHOLD {
                return Ok(None);
            }
            let seq = optimizing_sequence(m, event, q, *steps)?;
            match seq.states.last() {
                Some(last) => sub(last, q),
                None => return Ok(None),
            }
        }
        TraderKind::Noise { scale } => (0..k).map(|_| rng.gen_range(-scale..=*scale)).collect(),
        TraderKind::Fixed { bundle } => {
            check_dim(k, bundle.len())?;
            bundle.clone()
        }
    };
    check_finite(&bundle, "bundle")?;
    let Some(budget) = agent.budget else { return Ok(Some(bundle)) };
    let price = |t: f64| -> Result<f64> { m.trade_cost(q, &bundle.iter().map(|b| t * b).collect::<Vec<_>>()) };
    if price(1.0)? <= budget {
        return Ok(Some(bundle));
    }
    // Largest fraction of the bundle the budget covers, by bisection.
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if price(mid)? <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(bundle.iter().map(|b| lo * b).collect()))
}

fn execute(
    ledger: &mut Ledger,
    m: &CostModel,
    q: &mut Vec<f64>,
    time: f64,
    agent: &TraderAgent,
    bundle: Vec<f64>,
) -> Result<()> {
    let cost = m.trade_cost(q, &bundle)?;
    let after = add(q, &bundle);
    let p = m.price(&after)?;
    let spread = sub(&p.hi(), &p.lo());
    ledger.events.push(LedgerEvent::Trade(TradeRecord {
        time,
        trader: agent.id.clone(),
        bundle,
        cost,
        state_before: q.clone(),
        state_after: after.clone(),
        price_center: p.center(),
        spread,
    }));
    *q = after;
    Ok(())
}

/// Sudden revelation: trade under `m`, switch costs at `switch_time` once `obs` is revealed,
/// keep trading under the switched cost, then settle on `outcome`.
#[allow(clippy::too_many_arguments)]
pub fn run_protocol1(
    m: &CostModel,
    s_ini: &[f64],
    obs: &Observation,
    traders: &[TraderAgent],
    requests: &[TradeRequest],
    switch_time: f64,
    outcome: usize,
    opts: &Protocol1Options,
) -> std::result::Result<Ledger, RunError> {
    check_dim(m.dim(), s_ini.len())?;
    check_finite(s_ini, "initial state")?;
    check_requests(requests, traders.len())?;
    if outcome >= m.space().len() {
        return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")).into());
    }
    let x = obs.realization_of(outcome);
    let cell = obs.cell(x);
    let mut ledger = Ledger::new(s_ini);
    let mut q = s_ini.to_vec();
    let mut current = m.clone();
    let mut switched = false;
    let mut actions = vec![0usize; traders.len()];

    let after_switch = |t: f64| match opts.at_switch {
        AtSwitch::New => t >= switch_time,
        AtSwitch::Old => t > switch_time,
    };
    let mut pending = requests.iter().peekable();
    loop {
        let next = pending.peek().copied();
        if !switched && next.is_none_or(|r| after_switch(r.time)) {
            let mut copts = opts.consistency;
            if opts.trust_exposed && crate::switch::feasibility_precheck(m.space(), obs)?.is_guaranteed() {
                copts.skip_probes = true;
            }
            let plan = plan_switch_with(m, obs, &q, copts)?;
            ledger.events.push(LedgerEvent::Switch(SwitchRecord {
                time: switch_time,
                state: q.clone(),
                realization: obs.realizations()[x].clone(),
                offsets: plan.offsets.clone(),
                guaranteed: plan.feasibility.is_guaranteed(),
                consistent: plan.consistency.consistent,
                worst_violation: plan.consistency.worst_violation,
            }));
            if !plan.consistency.consistent && !opts.allow_inconsistent {
                ledger.final_state = q.clone();
                return Err(RunError::Inconsistent(Box::new(InconsistentSwitch { ledger, witness: plan.consistency.witness })));
            }
            // A single cell reveals nothing and its switched cost equals the base cost.
            if obs.len() > 1 {
                current = plan.switched;
            }
            switched = true;
        }
        let Some(req) = pending.next() else { break };
        let agent = &traders[req.trader];
        let mut rng = action_rng(opts.seed, req.trader, actions[req.trader]);
        actions[req.trader] += 1;
        let revealed = if switched { Some(cell.as_slice()) } else { None };
        if let Some(bundle) = choose_bundle(agent, &current, &q, revealed, &mut rng)? {
            execute(&mut ledger, &current, &mut q, req.time, agent, bundle)?;
        }
    }
    ledger.final_state = q;
    ledger.settle(m.space(), outcome);
    Ok(ledger)
}

/// Gradual decrease: before each request the state is carried to the request time, then
/// the trade is priced at that time's cost. Settles on `outcome`.
pub fn run_protocol2(
    market: &GradualMarket,
    s0: &[f64],
    t0: f64,
    traders: &[TraderAgent],
    requests: &[TradeRequest],
    outcome: usize,
    seed: u64,
) -> Result<Ledger> {
    let space = market.model().space();
    check_dim(space.dim(), s0.len())?;
    check_finite(s0, "initial state")?;
    check_requests(requests, traders.len())?;
    if outcome >= space.len() {
        return Err(Error::InvalidParameter(format!("outcome {outcome} out of range")));
    }
    let mut state: TimedState = market.state_at(s0, t0)?;
    let mut ledger = Ledger::new(s0);
    let mut actions = vec![0usize; traders.len()];
    for req in requests {
        if req.time < state.t {
            return Err(Error::TimeOrder { prev: state.t, next: req.time });
        }
        if req.time > state.t {
            let next = market.new_state(&state, req.time)?;
            ledger.events.push(LedgerEvent::Update(UpdateRecord {
                time: req.time,
                state_before: state.q.clone(),
                state_after: next.q.clone(),
                alphas: market.alphas(state.t, req.time)?,
            }));
            state = next;
        }
        let m = market.cost_model_at(state.t)?;
        let agent = &traders[req.trader];
        let mut rng = action_rng(seed, req.trader, actions[req.trader]);
        actions[req.trader] += 1;
        let mut q = state.q.clone();
        if let Some(bundle) = choose_bundle(agent, &m, &q, None, &mut rng)? {
            execute(&mut ledger, &m, &mut q, req.time, agent, bundle)?;
            state = market.state_at(&q, state.t)?;
        }
    }
    ledger.final_state = state.q;
    ledger.settle(space, outcome);
    Ok(ledger)
}
