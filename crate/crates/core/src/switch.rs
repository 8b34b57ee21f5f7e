//! Switching the cost function when the value of an observed variable is revealed.
//!
//! At the revelation state `s`, each realization `x` gets the cost restricted to its cell,
//! lifted by `b_x = C(s) - C^x(s)`, and the new cost is the pointwise maximum of the lifted
//! pieces. The state is kept, so `C~(s) = C(s)` and the maker's running loss is unchanged.
//!
//! The conjugate of the switched cost is the convex roof of the piecewise-lifted conjugate,
//! evaluated here as a small convex program over decompositions of `mu` into payoff vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::{restricted_cost, CostModel, PriceSet, TIE_TOL};
use crate::error::{check_dim, check_finite, Error, Result};
use crate::fw::{self, FwOptions};
use crate::lp;
use crate::market::{exposure_witness, ExposureWitness, Observation, OutcomeSpace};
use crate::num::{dot, dist_inf};
use crate::utility::EventUtility;

/// Decomposition slack used by the roof programs.
const ROOF_TOL: f64 = 1e-10;

/// `q -> max_x (b_x + C^x(q))`.
#[derive(Debug, Clone)]
pub struct SwitchedCost {
    base: CostModel,
    observation: Observation,
    cells: Vec<Vec<usize>>,
    pieces: Vec<CostModel>,
    offsets: Vec<f64>,
    roof_opts: FwOptions,
}

/// Optimal decomposition found by the roof program.
#[derive(Debug, Clone, Serialize)]
pub struct RoofSolution {
    pub value: f64,
    /// Weight on each outcome's payoff vector.
    pub weights: Vec<f64>,
    pub gap: f64,
}

impl SwitchedCost {
    pub fn new(base: CostModel, observation: Observation, offsets: Vec<f64>) -> Result<Self> {
        check_dim(observation.len(), offsets.len())?;
        check_finite(&offsets, "offset")?;
        let cells = observation.cells();
        let pieces = cells.iter().map(|c| restricted_cost(&base, c)).collect::<Result<Vec<_>>>()?;
        if base.conj_grad(base.space().payoff(0)).is_none() {
            return Err(Error::Unsupported("switching needs a base cost with a closed-form conjugate".into()));
        }
        Ok(SwitchedCost { base, observation, cells, pieces, offsets, roof_opts: FwOptions::default() })
    }

    pub fn space(&self) -> &OutcomeSpace {
        self.base.space()
    }

    pub fn base(&self) -> &CostModel {
        &self.base
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn pieces(&self) -> &[CostModel] {
        &self.pieces
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    fn piece_values(&self, q: &[f64]) -> Vec<f64> {
        self.pieces.iter().zip(&self.offsets).map(|(p, b)| b + p.value(q)).collect()
    }

    pub(crate) fn value(&self, q: &[f64]) -> f64 {
        self.piece_values(q).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Realizations whose lifted piece attains the maximum at `q`.
    pub fn active(&self, q: &[f64]) -> Vec<usize> {
        let vals = self.piece_values(q);
        let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let tie = TIE_TOL * (1.0 + m.abs());
        (0..vals.len()).filter(|&x| vals[x] >= m - tie).collect()
    }

    pub(crate) fn price_set(&self, q: &[f64]) -> PriceSet {
        let verts = self
            .active(q)
            .into_iter()
            .flat_map(|x| self.pieces[x].price_set(q).vertices().to_vec())
            .collect();
        PriceSet::from_vertices(verts)
    }

    /// `R(mu) - b_x` for `mu` in the hull of cell `x`.
    pub fn local_conjugate(&self, x: usize, mu: &[f64]) -> Result<f64> {
        Ok(self.base.conj(mu)? - self.offsets[x])
    }

    /// Gradient in the outcome weights of `sum_x lambda_x (R(nu_x / lambda_x) - b_x)`.
    fn roof_objective(&self, w: &[f64]) -> (f64, Vec<f64>) {
        let space = self.space();
        let mut grad = vec![0.0; w.len()];
        let mut total = 0.0;
        for (x, cell) in self.cells.iter().enumerate() {
            let lam: f64 = cell.iter().map(|&o| w[o]).sum();
            if lam <= 1e-300 {
                for &o in cell {
                    let (r, _) = self.base.conj_grad(space.payoff(o)).expect("checked on construction");
                    grad[o] = r - self.offsets[x];
                }
                continue;
            }
            let mut nu = vec![0.0; space.dim()];
            for &o in cell {
                crate::num::axpy(&mut nu, w[o] / lam, space.payoff(o));
            }
            let (r, g) = self.base.conj_grad(&nu).expect("checked on construction");
            total += lam * (r - self.offsets[x]);
            let gnu = dot(&g, &nu);
            for &o in cell {
                grad[o] = r + dot(&g, space.payoff(o)) - gnu - self.offsets[x];
            }
        }
        (total, grad)
    }

    /// Lowest value of `sum_x lambda_x (R(mu_x) - b_x)` over decompositions
    /// `mu = sum_x lambda_x mu_x` with `mu_x` in cell `x`'s hull. `None` outside the hull.
    pub fn roof(&self, mu: &[f64]) -> Result<Option<RoofSolution>> {
        let space = self.space();
        let all = space.all();
        let verts = space.vertices(&all);
        let start_obj = self.roof_objective(&vec![0.0; all.len()]).1;
        let start = match lp::min_over_decompositions(&verts, mu, &start_obj, ROOF_TOL)? {
            Some((_, w)) => w,
            None => return Ok(None),
        };
        let mut lp_error = None;
        let lmo = |g: &[f64]| match lp::min_over_decompositions(&verts, mu, g, ROOF_TOL) {
            Ok(Some((_, w))) => w,
            Ok(None) => start.clone(),
            Err(e) => {
                lp_error = Some(e);
                start.clone()
            }
        };
        let res = fw::minimize(|w| self.roof_objective(w), lmo, vec![(start.clone(), 1.0)], self.roof_opts);
        if let Some(e) = lp_error {
            return Err(e);
        }
        Ok(Some(RoofSolution { value: res.value, weights: res.x, gap: res.gap }))
    }

    pub(crate) fn conjugate_value(&self, mu: &[f64]) -> Result<f64> {
        Ok(self.roof(mu)?.map(|r| r.value).unwrap_or(f64::INFINITY))
    }

    /// `min over mu in M(event) of D~(mu || q)`, solved jointly over decompositions.
    pub fn util_event(&self, event: &[usize], q: &[f64]) -> Result<EventUtility> {
        let space = self.space();
        let all = space.all();
        let verts = space.vertices(&all);
        let ev = space.vertices(event);
        let n = all.len();
        let linear: Vec<f64> = all.iter().map(|&o| dot(q, space.payoff(o))).collect();
        let objective = |z: &[f64]| {
            let (v, g) = self.roof_objective(&z[..n]);
            let lin: f64 = z[..n].iter().zip(&linear).map(|(a, b)| a * b).sum();
            let mut grad: Vec<f64> = g.iter().zip(&linear).map(|(a, b)| a - b).collect();
            grad.extend(std::iter::repeat_n(0.0, event.len()));
            (v - lin, grad)
        };
        let mut lp_error = None;
        let mut lmo = |g: &[f64]| match lp::min_over_coupled(&verts, &ev, &g[..n], ROOF_TOL) {
            Ok(Some((w, u))) => [w, u].concat(),
            Ok(None) => vec![0.0; n + event.len()],
            Err(e) => {
                lp_error = Some(e);
                vec![0.0; n + event.len()]
            }
        };
        let start = lmo(&objective(&vec![0.0; n + event.len()]).1);
        if start.iter().all(|v| *v == 0.0) {
            return Err(lp_error.unwrap_or(Error::Lp("event hull is disjoint from the price space".into())));
        }
        let res = fw::minimize(objective, &mut lmo, vec![(start, 1.0)], self.roof_opts);
        if let Some(e) = lp_error {
            return Err(e);
        }
        let mu = space.combine(&all, &res.x[..n]);
        Ok(EventUtility {
            value: res.value + self.value(q),
            conditional_price: mu,
            residual: res.gap,
            converged: res.converged,
            non_unique: false,
        })
    }
}

/// Whether every cell's hull is an exposed face, with witnesses.
#[derive(Debug, Clone, Serialize)]
pub enum Feasibility {
    Guaranteed(Vec<ExposureWitness>),
    /// Realizations with no exposure witness; consistency must be checked directly.
    Unknown(Vec<String>),
}

impl Feasibility {
    pub fn is_guaranteed(&self) -> bool {
        matches!(self, Feasibility::Guaranteed(_))
    }
}

pub fn feasibility_precheck(space: &OutcomeSpace, obs: &Observation) -> Result<Feasibility> {
    let ws = exposure_witness(space, obs)?;
    if ws.iter().all(|w| w.is_some()) {
        Ok(Feasibility::Guaranteed(ws.into_iter().flatten().collect()))
    } else {
        Ok(Feasibility::Unknown(
            ws.iter()
                .enumerate()
                .filter(|(_, w)| w.is_none())
                .map(|(x, _)| obs.realizations()[x].clone())
                .collect(),
        ))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyWitness {
    pub realization: String,
    pub mu: Vec<f64>,
    /// `R(mu) - b_x`.
    pub local: f64,
    /// Best value over decompositions that mix cells.
    pub roof: f64,
    pub violation: f64,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub probes: usize,
    pub worst_violation: f64,
    /// Pairs of realizations whose hulls intersect.
    pub overlaps: Vec<(String, String)>,
    pub witness: Option<ConsistencyWitness>,
}

#[derive(Debug, Clone, Copy)]
pub struct ConsistencyOptions {
    pub tol: f64,
    pub random_probes: usize,
    pub seed: u64,
    /// Only test for overlapping hulls; used when exposure witnesses already settle the question.
    pub skip_probes: bool,
}

impl Default for ConsistencyOptions {
    fn default() -> Self {
        ConsistencyOptions { tol: 1e-7, random_probes: 32, seed: 0, skip_probes: false }
    }
}

/// Checks that on each cell's hull the roof agrees with the lifted local conjugate.
///
/// Probes the vertices, pairwise midpoints, centroid and seeded random points of every cell.
pub fn consistency_check(switched: &SwitchedCost, opts: ConsistencyOptions) -> Result<ConsistencyReport> {
    let space = switched.space();
    let names = switched.observation.realizations();
    let mut overlaps = Vec::new();
    for x in 0..switched.cells.len() {
        for y in x + 1..switched.cells.len() {
            let a = space.vertices(&switched.cells[x]);
            let b = space.vertices(&switched.cells[y]);
            if lp::hulls_intersect(&a, &b, 1e-12)? {
                overlaps.push((names[x].clone(), names[y].clone()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probes = 0;
    let mut worst = 0.0f64;
    let mut witness: Option<ConsistencyWitness> = None;
    for (x, cell) in switched.cells.iter().enumerate() {
        if switched.cells.len() == 1 || opts.skip_probes {
            break;
        }
        for mu in cell_probes(space, cell, opts.random_probes, &mut rng) {
            probes += 1;
            let local = switched.local_conjugate(x, &mu)?;
            let roof = switched.roof(&mu)?.ok_or(Error::OutsidePriceSpace)?;
            let violation = local - roof.value;
            if violation > worst {
                worst = violation;
                witness = Some(ConsistencyWitness {
                    realization: names[x].clone(),
                    mu,
                    local,
                    roof: roof.value,
                    violation,
                    weights: roof.weights,
                });
            }
        }
    }
    Ok(ConsistencyReport {
        consistent: overlaps.is_empty() && worst <= opts.tol,
        probes,
        worst_violation: worst,
        overlaps,
        witness: witness.filter(|w| w.violation > opts.tol),
    })
}

/// Vertices, pairwise midpoints, centroid and random points of a cell's hull.
pub(crate) fn cell_probes(space: &OutcomeSpace, cell: &[usize], random: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let push = |v: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        if !out.iter().any(|u| dist_inf(u, &v) <= 1e-15) {
            out.push(v);
        }
    };
    let verts = space.vertices(cell);
    for (i, a) in verts.iter().enumerate() {
        push(a.to_vec(), &mut out);
        for b in verts.iter().skip(i + 1) {
            push(a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect(), &mut out);
        }
    }
    push(crate::num::mean_rows(&verts), &mut out);
    for _ in 0..random {
        out.push(space.sample_hull(cell, rng));
    }
    out
}

/// Everything needed to switch costs at a revelation state.
#[derive(Debug, Clone)]
pub struct SwitchPlan {
    pub observation: Observation,
    pub state: Vec<f64>,
    pub offsets: Vec<f64>,
    pub conditional_prices: Vec<Vec<f64>>,
    pub switched: CostModel,
    /// State handed to the new cost; equal to `state`.
    pub new_state: Vec<f64>,
    pub shift: Vec<f64>,
    pub feasibility: Feasibility,
    pub consistency: ConsistencyReport,
}

impl SwitchPlan {
    pub fn switched_cost(&self) -> &SwitchedCost {
        match &self.switched {
            CostModel::Switched(s) => s,
            _ => unreachable!("a plan always holds a switched cost"),
        }
    }
}

/// Builds the switched cost for observation `obs` revealed at state `s`.
pub fn plan_switch(m: &CostModel, obs: &Observation, s: &[f64]) -> Result<SwitchPlan> {
    plan_switch_with(m, obs, s, ConsistencyOptions::default())
}

pub fn plan_switch_with(m: &CostModel, obs: &Observation, s: &[f64], opts: ConsistencyOptions) -> Result<SwitchPlan> {
    check_dim(m.dim(), s.len())?;
    check_finite(s, "state")?;
    check_dim(m.space().len(), (0..obs.len()).map(|x| obs.cell(x).len()).sum())?;
    let base_cost = m.value(s);
    let mut offsets = Vec::with_capacity(obs.len());
    let mut conditional_prices = Vec::with_capacity(obs.len());
    for cell in obs.cells() {
        let piece = restricted_cost(m, &cell)?;
        offsets.push(base_cost - piece.value(s));
        conditional_prices.push(piece.price_set(s).center());
    }
    let switched = SwitchedCost::new(m.clone(), obs.clone(), offsets.clone())?;
    let feasibility = feasibility_precheck(m.space(), obs)?;
    let consistency = consistency_check(&switched, opts)?;
    Ok(SwitchPlan {
        observation: obs.clone(),
        state: s.to_vec(),
        offsets,
        conditional_prices,
        switched: CostModel::Switched(Box::new(switched)),
        new_state: s.to_vec(),
        shift: vec![0.0; s.len()],
        feasibility,
        consistency,
    })
}

/// `q -> C~(q + s~ - s)`: the same cost viewed from state `s` instead of `s~`.
pub fn shift_state(switched: &CostModel, s_tilde: &[f64], s: &[f64]) -> Result<CostModel> {
    check_dim(switched.dim(), s_tilde.len())?;
    check_dim(switched.dim(), s.len())?;
    switched.shifted(crate::num::sub(s_tilde, s))
}
