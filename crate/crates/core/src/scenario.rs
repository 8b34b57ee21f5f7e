//! Scripted runs described in TOML, and the record stream they produce.
//!
//! ```toml
//! seed = 7
//! protocol = "sudden"            # or "gradual"
//!
//! [market]
//! builder = "square"             # lmsr(K), simplex(K), cube(k), square, medal_counts(n)
//! # or: outcomes = ["a", "b"] and payoff = [[1, 0], [0, 1]]
//!
//! [cost]
//! kind = "product"               # lmsr, product, piecewise_linear, lcmm
//!
//! [observation]
//! kind = "coordinate"            # trivial, identity, coordinate, sum, block, labels
//! index = 0
//!
//! [sudden]
//! initial_state = [0.0, 0.0]
//! switch_time = 1.0
//!
//! [[traders]]
//! id = "arb"
//! kind = "arbitrageur"
//!
//! [[trades]]
//! trader = "arb"
//! times = [1.0, 2.0]
//!
//! [settlement]
//! outcome = "10"
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::CostModel;
use crate::desiderata::{check_desiderata, CheckOptions, Desideratum};
use crate::error::{Error, Result};
use crate::gradual::{GradualMarket, Schedule};
use crate::lcmm::LcmmModel;
use crate::market::{Observation, OutcomeSpace};
use crate::sim::{
    run_protocol1, run_protocol2, wc_loss_bound, AtSwitch, Ledger, LedgerEvent, Protocol1Options, RunError,
    TradeRequest, TraderAgent,
};
use crate::switch::{consistency_check, feasibility_precheck, plan_switch, ConsistencyOptions, SwitchedCost};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    seed: u64,
    protocol: Protocol,
    market: RawMarket,
    cost: RawCost,
    #[serde(default)]
    observation: Option<RawObservation>,
    #[serde(default)]
    sudden: Option<RawSudden>,
    #[serde(default)]
    gradual: Option<RawGradual>,
    #[serde(default)]
    traders: Vec<TraderAgent>,
    #[serde(default)]
    trades: Vec<RawTrade>,
    settlement: RawSettlement,
    #[serde(default)]
    checks: Checks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Sudden,
    Gradual,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    builder: Option<String>,
    outcomes: Option<Vec<String>>,
    payoff: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    kind: String,
    #[serde(default)]
    liquidity: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawObservation {
    Trivial,
    Identity,
    Coordinate { index: usize },
    Sum { securities: Vec<usize> },
    Block { securities: Vec<usize> },
    Labels { labels: Vec<String> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSudden {
    initial_state: Vec<f64>,
    switch_time: f64,
    #[serde(default)]
    at_switch: AtSwitch,
    #[serde(default)]
    allow_inconsistent: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGradual {
    initial_state: Vec<f64>,
    #[serde(default)]
    t0: f64,
    schedules: Vec<Schedule>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrade {
    trader: String,
    time: Option<f64>,
    times: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSettlement {
    outcome: String,
}

/// Which checks a run reports and how strictly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    /// Tolerance for loss bounds, price drift, the utility-drop formula and excess utility.
    pub tol: f64,
    pub tol_zero: f64,
    pub tol_cond: f64,
    /// Desiderata audited at the switch of a sudden run.
    pub desiderata: Vec<String>,
    pub samples: usize,
    pub loss_bound: bool,
    /// Block whose liquidity drop is audited from `t0` to `audit_until` in a gradual run.
    pub audit_block: Option<usize>,
    pub audit_until: Option<f64>,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            tol: 1e-6,
            tol_zero: 1e-8,
            tol_cond: 1e-7,
            desiderata: vec!["condprice".into(), "zeroutil".into(), "exutil".into(), "price".into()],
            samples: 100,
            loss_bound: true,
            audit_block: None,
            audit_until: None,
        }
    }
}

#[derive(Debug, Clone)]
enum Setup {
    Sudden { cost: CostModel, observation: Observation, s0: Vec<f64>, switch_time: f64, at_switch: AtSwitch, allow_inconsistent: bool },
    Gradual { market: GradualMarket, s0: Vec<f64>, t0: f64 },
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub protocol: Protocol,
    setup: Setup,
    space: std::sync::Arc<OutcomeSpace>,
    traders: Vec<TraderAgent>,
    requests: Vec<TradeRequest>,
    outcome: usize,
    pub checks: Checks,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

/// Splits `name(arg)` into its parts.
fn parse_builder(s: &str) -> Result<(&str, Option<usize>)> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s, None)),
        Some(open) => {
            let arg = s[open + 1..].strip_suffix(')').ok_or_else(|| bad(format!("unbalanced builder {s:?}")))?;
            let n = arg.trim().parse().map_err(|_| bad(format!("bad builder argument in {s:?}")))?;
            Ok((s[..open].trim(), Some(n)))
        }
    }
}

fn build_space(m: &RawMarket) -> Result<OutcomeSpace> {
    match (&m.builder, &m.outcomes, &m.payoff) {
        (Some(b), None, None) => {
            let (name, arg) = parse_builder(b)?;
            let need = |a: Option<usize>| a.filter(|n| *n > 0).ok_or_else(|| bad(format!("{name} needs a positive size")));
            match name {
                "lmsr" | "simplex" => Ok(OutcomeSpace::simplex(need(arg)?)),
                "cube" => Ok(OutcomeSpace::cube(need(arg)?)),
                "square" => Ok(OutcomeSpace::square()),
                "medal_counts" => Ok(OutcomeSpace::medal_counts(need(arg)?)),
                _ => Err(bad(format!("unknown market builder {name:?}"))),
            }
        }
        (None, Some(names), Some(rows)) => OutcomeSpace::new(names.clone(), rows.clone()),
        _ => Err(bad("market needs either `builder` or both `outcomes` and `payoff`")),
    }
}

fn build_cost(kind: &str, space: std::sync::Arc<OutcomeSpace>) -> Result<CostModel> {
    match kind {
        "lmsr" => CostModel::lmsr_on(space),
        "product" => CostModel::product_on(space),
        "piecewise_linear" => Ok(CostModel::piecewise_on(space)),
        _ => Err(bad(format!("unknown cost kind {kind:?}"))),
    }
}

fn build_observation(space: &OutcomeSpace, raw: &Option<RawObservation>) -> Result<Observation> {
    match raw {
        None | Some(RawObservation::Trivial) => Ok(Observation::trivial(space)),
        Some(RawObservation::Identity) => Ok(Observation::identity(space)),
        Some(RawObservation::Coordinate { index }) => Observation::coordinate(space, *index),
        Some(RawObservation::Sum { securities }) => Observation::sum(space, securities),
        Some(RawObservation::Block { securities }) => Observation::block(space, securities),
        Some(RawObservation::Labels { labels }) => Observation::from_labels(space, labels),
    }
}

fn build_lcmm(m: &RawMarket) -> Result<LcmmModel> {
    let builder = m.builder.as_deref().ok_or_else(|| bad("lcmm costs need a market builder"))?;
    match parse_builder(builder)? {
        ("medal_counts", Some(n)) => LcmmModel::medal_counts(n),
        ("square", None) => LcmmModel::square(),
        _ => Err(bad(format!("no linearly constrained cost for market {builder:?}"))),
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| bad(e.message().to_string()))?;
        Self::build(raw).map_err(|e| match e {
            Error::Scenario(_) => e,
            other => bad(other.to_string()),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    fn build(raw: RawScenario) -> Result<Self> {
        let liquidity = raw.cost.liquidity.unwrap_or(1.0);
        let (setup, space) = match raw.protocol {
            Protocol::Sudden => {
                let sd = raw.sudden.ok_or_else(|| bad("sudden protocol needs a [sudden] section"))?;
                if raw.gradual.is_some() {
                    return Err(bad("[gradual] given for a sudden protocol"));
                }
                let space = std::sync::Arc::new(build_space(&raw.market)?);
                let cost = build_cost(&raw.cost.kind, space.clone())?.scale_liquidity(liquidity)?;
                let observation = build_observation(&space, &raw.observation)?;
                crate::error::check_dim(space.dim(), sd.initial_state.len())?;
                crate::error::check_finite(&sd.initial_state, "initial state")?;
                if !sd.switch_time.is_finite() {
                    return Err(bad("switch_time must be finite"));
                }
                let setup = Setup::Sudden {
                    cost,
                    observation,
                    s0: sd.initial_state,
                    switch_time: sd.switch_time,
                    at_switch: sd.at_switch,
                    allow_inconsistent: sd.allow_inconsistent,
                };
                (setup, space)
            }
            Protocol::Gradual => {
                let gd = raw.gradual.ok_or_else(|| bad("gradual protocol needs a [gradual] section"))?;
                if raw.sudden.is_some() {
                    return Err(bad("[sudden] given for a gradual protocol"));
                }
                if raw.cost.kind != "lcmm" {
                    return Err(bad("gradual protocol needs cost kind \"lcmm\""));
                }
                if raw.observation.is_some() {
                    return Err(bad("gradual protocol takes no [observation]"));
                }
                let mut model = build_lcmm(&raw.market)?;
                if liquidity != 1.0 {
                    let n = model.blocks().len();
                    model = model.with_block_scales(&vec![liquidity; n])?;
                }
                let space = model.space_arc();
                crate::error::check_dim(space.dim(), gd.initial_state.len())?;
                crate::error::check_finite(&gd.initial_state, "initial state")?;
                let market = GradualMarket::new(model, gd.schedules, gd.t0)?;
                (Setup::Gradual { market, s0: gd.initial_state, t0: gd.t0 }, space)
            }
        };

        let mut requests = Vec::new();
        for t in &raw.trades {
            let trader = raw
                .traders
                .iter()
                .position(|a| a.id == t.trader)
                .ok_or_else(|| bad(format!("trade by unknown trader {:?}", t.trader)))?;
            let times: Vec<f64> = match (t.time, &t.times) {
                (Some(x), None) => vec![x],
                (None, Some(xs)) => xs.clone(),
                _ => return Err(bad("each trade entry needs exactly one of `time` or `times`")),
            };
            requests.extend(times.into_iter().map(|time| TradeRequest { time, trader }));
        }
        if requests.iter().any(|r| !r.time.is_finite()) {
            return Err(bad("trade times must be finite"));
        }
        requests.sort_by(|a, b| a.time.total_cmp(&b.time));
        for (i, a) in raw.traders.iter().enumerate() {
            if raw.traders[..i].iter().any(|b| b.id == a.id) {
                return Err(bad(format!("duplicate trader id {:?}", a.id)));
            }
        }
        let outcome = space.outcome_index(&raw.settlement.outcome)?;
        for name in &raw.checks.desiderata {
            desideratum(name)?;
        }
        Ok(Scenario {
            seed: raw.seed,
            protocol: raw.protocol,
            setup,
            space,
            traders: raw.traders,
            requests,
            outcome,
            checks: raw.checks,
        })
    }

    pub fn space(&self) -> &OutcomeSpace {
        &self.space
    }
}

fn desideratum(name: &str) -> Result<Desideratum> {
    Ok(match name {
        "price" => Desideratum::Price,
        "condprice" => Desideratum::CondPrice,
        "zeroutil" => Desideratum::ZeroUtil,
        "decutil" => Desideratum::DecUtil,
        "exutil" => Desideratum::ExUtil,
        _ => return Err(bad(format!("unknown desideratum {name:?}"))),
    })
}

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub allow_inconsistent: bool,
}

/// One line of output. Fields that do not apply to a record kind are null.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub ts: Option<f64>,
    pub kind: &'static str,
    pub state: Option<Vec<f64>>,
    pub price_center: Option<Vec<f64>>,
    pub spread: Option<Vec<f64>>,
    pub cost_delta: Option<f64>,
    pub trader: Option<String>,
    pub check: Option<String>,
    pub value: Option<f64>,
    pub pass: Option<bool>,
}

impl Record {
    fn new(kind: &'static str) -> Self {
        Record {
            ts: None,
            kind,
            state: None,
            price_center: None,
            spread: None,
            cost_delta: None,
            trader: None,
            check: None,
            value: None,
            pass: None,
        }
    }

    fn check(name: impl Into<String>, value: f64, pass: bool) -> Self {
        Record { check: Some(name.into()), value: Some(value), pass: Some(pass), ..Record::new("check") }
    }
}

/// Records of a run plus the overall verdict.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub records: Vec<Record>,
    /// Human-readable notes, e.g. an inconsistency witness.
    pub notes: Vec<String>,
    /// Names of the checks that failed the run.
    pub failures: Vec<String>,
    pub passed: bool,
}

impl Report {
    fn push_check(&mut self, name: impl Into<String>, value: f64, pass: bool) {
        let name = name.into();
        if !pass {
            self.passed = false;
            self.failures.push(format!("{name} = {value:e}"));
        }
        self.records.push(Record::check(name, value, pass));
    }

    fn push_rows(&mut self, rows: crate::desiderata::DesiderataReport) {
        for row in rows.rows {
            let name = match &row.realization {
                Some(x) => format!("{}[{x}]", row.desideratum.name()),
                None => row.desideratum.name().to_string(),
            };
            if row.informational {
                self.push_info(name, row.value, row.pass);
            } else {
                self.push_check(name, row.value, row.pass);
            }
        }
    }

    /// A check that is reported but never fails the run.
    fn push_info(&mut self, name: impl Into<String>, value: f64, pass: bool) {
        self.records.push(Record::check(name, value, pass));
    }
}

fn ledger_records(ledger: &Ledger, m_after: Option<&CostModel>, report: &mut Report) -> Result<()> {
    let mut last_ts = None;
    for ev in &ledger.events {
        let rec = match ev {
            LedgerEvent::Trade(t) => Record {
                ts: Some(t.time),
                state: Some(t.state_after.clone()),
                price_center: Some(t.price_center.clone()),
                spread: Some(t.spread.clone()),
                cost_delta: Some(t.cost),
                trader: Some(t.trader.clone()),
                ..Record::new("trade")
            },
            LedgerEvent::Switch(s) => {
                let (center, spread) = match m_after {
                    Some(m) => {
                        let p = m.price(&s.state)?;
                        (Some(p.center()), Some(crate::num::sub(&p.hi(), &p.lo())))
                    }
                    None => (None, None),
                };
                Record {
                    ts: Some(s.time),
                    state: Some(s.state.clone()),
                    price_center: center,
                    spread,
                    check: Some(format!("consistency[{}]", s.realization)),
                    value: Some(s.worst_violation),
                    pass: Some(s.consistent),
                    ..Record::new("switch")
                }
            }
            LedgerEvent::Update(u) => Record {
                ts: Some(u.time),
                state: Some(u.state_after.clone()),
                ..Record::new("update")
            },
        };
        last_ts = rec.ts;
        report.records.push(rec);
    }
    if let Some(st) = &ledger.settlement {
        report.records.push(Record {
            ts: last_ts,
            state: Some(ledger.final_state.clone()),
            cost_delta: Some(st.collected),
            value: Some(st.maker_loss),
            check: Some(format!("outcome[{}]", st.outcome)),
            ..Record::new("settlement")
        });
        for (id, paid, received) in &st.traders {
            report.records.push(Record {
                ts: last_ts,
                trader: Some(id.clone()),
                cost_delta: Some(*paid),
                value: Some(received - paid),
                ..Record::new("pnl")
            });
        }
    }
    Ok(())
}

fn check_options(checks: &Checks, tol: f64, seed: u64) -> Result<CheckOptions> {
    Ok(CheckOptions {
        tol_exutil: tol,
        tol_zero: checks.tol_zero,
        tol_cond: checks.tol_cond,
        samples: checks.samples,
        seed,
        price_informational: true,
        enabled: checks.desiderata.iter().map(|d| desideratum(d)).collect::<Result<_>>()?,
        ..CheckOptions::default()
    })
}

/// Runs the scenario's protocol and audits it.
pub fn run(sc: &Scenario, flags: &RunFlags) -> Result<Report> {
    let seed = flags.seed.unwrap_or(sc.seed);
    let tol = flags.tol.unwrap_or(sc.checks.tol);
    let mut report = Report { passed: true, ..Report::default() };
    match &sc.setup {
        Setup::Sudden { cost, observation, s0, switch_time, at_switch, allow_inconsistent } => {
            let opts = Protocol1Options {
                seed,
                allow_inconsistent: *allow_inconsistent || flags.allow_inconsistent,
                at_switch: *at_switch,
                consistency: ConsistencyOptions { seed, ..ConsistencyOptions::default() },
                trust_exposed: false,
            };
            let res = run_protocol1(cost, s0, observation, &sc.traders, &sc.requests, *switch_time, sc.outcome, &opts);
            let ledger = match res {
                Ok(l) => l,
                Err(RunError::Inconsistent(inc)) => {
                    ledger_records(&inc.ledger, None, &mut report)?;
                    report.passed = false;
                    let note = RunError::Inconsistent(inc).to_string();
                    report.notes.push(note);
                    return Ok(report);
                }
                Err(RunError::Core(e)) => return Err(e),
            };
            let s_switch = ledger
                .events
                .iter()
                .find_map(|e| match e {
                    LedgerEvent::Switch(s) => Some(s.state.clone()),
                    _ => None,
                })
                .unwrap_or_else(|| s0.clone());
            let plan = plan_switch(cost, observation, &s_switch)?;
            ledger_records(&ledger, Some(&plan.switched), &mut report)?;
            if !plan.consistency.consistent {
                report.notes.push("switch applied despite failed consistency check".into());
            }
            let copts = check_options(&sc.checks, tol, seed)?;
            let rows = check_desiderata((cost, &s_switch), (&plan.switched, &s_switch), observation, &copts)?;
            report.push_rows(rows);
            finish_ledger_checks(&ledger, cost, s0, tol, sc.checks.loss_bound, &mut report)?;
        }
        Setup::Gradual { market, s0, t0 } => {
            let ledger = run_protocol2(market, s0, *t0, &sc.traders, &sc.requests, sc.outcome, seed)?;
            ledger_records(&ledger, None, &mut report)?;
            // Prices must survive every liquidity update.
            let mut t_prev = *t0;
            for ev in &ledger.events {
                match ev {
                    LedgerEvent::Update(u) => {
                        let before = market.state_at(&u.state_before, t_prev)?;
                        let after = market.state_at(&u.state_after, u.time)?;
                        let drift = market.price_drift(&before, &after)?;
                        report.push_check(format!("price_drift@{}", u.time), drift, drift <= tol);
                        t_prev = u.time;
                    }
                    LedgerEvent::Trade(t) => t_prev = t.time,
                    LedgerEvent::Switch(_) => {}
                }
            }
            if let (Some(g), Some(until)) = (sc.checks.audit_block, sc.checks.audit_until) {
                let copts = check_options(&sc.checks, tol, seed)?;
                let audit = market.partial_decrease_audit(g, s0, *t0, until, &copts)?;
                report.push_info(format!("tight[{g}]"), audit.alpha, audit.tightness.is_tight());
                for d in &audit.drops {
                    report.push_check(format!("drop[{}]", d.realization), d.error, d.error <= tol);
                }
                report.push_rows(audit.desiderata);
            }
            let m0 = market.cost_model_at(*t0)?;
            finish_ledger_checks(&ledger, &m0, s0, tol, sc.checks.loss_bound, &mut report)?;
        }
    }
    Ok(report)
}

fn finish_ledger_checks(ledger: &Ledger, m0: &CostModel, s0: &[f64], tol: f64, loss_bound: bool, report: &mut Report) -> Result<()> {
    let st = ledger.settlement.as_ref().expect("protocol runs always settle");
    report.push_check("conservation", st.conservation_residual.abs(), st.conservation_residual.abs() <= 1e-9);
    if loss_bound {
        let bound = wc_loss_bound(m0, s0)?;
        report.push_check("loss_bound", bound - st.maker_loss, st.maker_loss <= bound + tol);
    }
    Ok(())
}

/// Static analysis of a scenario without trading.
pub fn check(sc: &Scenario, flags: &RunFlags) -> Result<Report> {
    let seed = flags.seed.unwrap_or(sc.seed);
    let tol = flags.tol.unwrap_or(sc.checks.tol);
    let mut report = Report { passed: true, ..Report::default() };
    match &sc.setup {
        Setup::Sudden { cost, observation, s0, allow_inconsistent, .. } => {
            let space = cost.space();
            let witnesses = crate::market::exposure_witness(space, observation)?;
            for (x, w) in witnesses.iter().enumerate() {
                let name = format!("exposed[{}]", observation.realizations()[x]);
                let margin = w.as_ref().and_then(|w| w.verified_margin(space, &observation.cell(x))).unwrap_or(0.0);
                report.push_info(name, margin, w.is_some());
            }
            let guaranteed = feasibility_precheck(space, observation)?.is_guaranteed();
            report.push_info("guaranteed", if guaranteed { 1.0 } else { 0.0 }, guaranteed);
            let plan = plan_switch(cost, observation, s0)?;
            let switched: &SwitchedCost = plan.switched_cost();
            let cr = consistency_check(switched, ConsistencyOptions { seed, ..ConsistencyOptions::default() })?;
            if *allow_inconsistent || flags.allow_inconsistent {
                report.push_info("consistency", cr.worst_violation, cr.consistent);
            } else {
                report.push_check("consistency", cr.worst_violation, cr.consistent);
            }
            if let Some(w) = &cr.witness {
                report.notes.push(format!(
                    "inconsistent switch: realization {} violates by {:.6e} at {:?}",
                    w.realization, w.violation, w.mu
                ));
            }
            for (a, b) in &cr.overlaps {
                report.notes.push(format!("cells {a} and {b} overlap"));
            }
            let bound = wc_loss_bound(cost, s0)?;
            report.push_info("wc_loss_bound", bound, bound.is_finite());
        }
        Setup::Gradual { market, s0, t0 } => {
            for g in 0..market.model().blocks().len() {
                let t = market.tightness_check(g)?;
                report.push_info(format!("tight[{g}]"), if t.is_tight() { 1.0 } else { 0.0 }, t.is_tight());
            }
            let sol = market.time_cost(s0, *t0)?;
            let gap_ok = sol.certificate_gap <= tol;
            report.push_check("certificate", sol.certificate_gap, gap_ok);
            let bound = wc_loss_bound(&market.cost_model_at(*t0)?, s0)?;
            report.push_info("wc_loss_bound", bound, bound.is_finite());
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

fn join(v: &Option<Vec<f64>>) -> String {
    v.as_ref().map(|v| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")).unwrap_or_default()
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Writes records as JSON lines or as CSV with `;`-joined vectors.
pub fn write_records<W: Write>(records: &[Record], format: Format, out: W) -> std::io::Result<()> {
    match format {
        Format::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["ts", "kind", "state", "price_center", "spread", "cost_delta", "trader", "check", "value", "pass"])?;
            for r in records {
                w.write_record([
                    opt(&r.ts),
                    r.kind.to_string(),
                    join(&r.state),
                    join(&r.price_center),
                    join(&r.spread),
                    opt(&r.cost_delta),
                    opt(&r.trader),
                    opt(&r.check),
                    opt(&r.value),
                    opt(&r.pass),
                ])?;
            }
            w.flush()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: &str = r#"
seed = 3
protocol = "sudden"
[market]
builder = "square"
[cost]
kind = "product"
[observation]
kind = "coordinate"
index = 0
[sudden]
initial_state = [0.5, -0.2]
switch_time = 1.0
[[traders]]
id = "arb"
kind = "arbitrageur"
[[trades]]
trader = "arb"
time = 1.5
[settlement]
outcome = "10"
"#;

    #[test]
    fn builder_names() {
        assert_eq!(parse_builder("medal_counts(3)").unwrap(), ("medal_counts", Some(3)));
        assert_eq!(parse_builder("square").unwrap(), ("square", None));
        assert!(parse_builder("lmsr(x)").is_err());
    }

    #[test]
    fn square_run_passes() {
        let sc = Scenario::from_toml_str(SQUARE).unwrap();
        let rep = run(&sc, &RunFlags::default()).unwrap();
        assert!(rep.passed, "{:#?}", rep.records);
        assert!(rep.records.iter().any(|r| r.kind == "switch"));
    }

    #[test]
    fn malformed_is_scenario_error() {
        assert!(matches!(Scenario::from_toml_str("seed = "), Err(Error::Scenario(_))));
        let no_seed = SQUARE.replace("seed = 3", "");
        assert!(matches!(Scenario::from_toml_str(&no_seed), Err(Error::Scenario(_))));
        let bad_outcome = SQUARE.replace("outcome = \"10\"", "outcome = \"zz\"");
        assert!(matches!(Scenario::from_toml_str(&bad_outcome), Err(Error::Scenario(_))));
    }

    #[test]
    fn csv_and_jsonl_have_same_rows() {
        let sc = Scenario::from_toml_str(SQUARE).unwrap();
        let rep = run(&sc, &RunFlags::default()).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_records(&rep.records, Format::Jsonl, &mut a).unwrap();
        write_records(&rep.records, Format::Csv, &mut b).unwrap();
        let lines = |v: &[u8]| String::from_utf8(v.to_vec()).unwrap().lines().count();
        assert_eq!(lines(&a) + 1, lines(&b));
    }
}
