//! Numerical audit of a cost change `(C, s) -> (C~, s~)` against an observed variable.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cost::CostModel;
use crate::error::{check_dim, Error, Result};
use crate::market::Observation;
use crate::num::dist_inf;
use crate::switch::cell_probes;
use crate::utility::util_event;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Desideratum {
    /// Prices at the new state equal prices at the old state.
    Price,
    /// Conditional prices on each realization are unchanged.
    CondPrice,
    /// No realization carries utility after the change.
    ZeroUtil,
    /// Every realization's utility does not grow, and shrinks where it was positive.
    DecUtil,
    /// Beliefs consistent with a realization keep their excess utility.
    ExUtil,
}

impl Desideratum {
    pub fn name(self) -> &'static str {
        match self {
            Desideratum::Price => "price",
            Desideratum::CondPrice => "condprice",
            Desideratum::ZeroUtil => "zeroutil",
            Desideratum::DecUtil => "decutil",
            Desideratum::ExUtil => "exutil",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOptions {
    pub tol_price: f64,
    pub tol_cond: f64,
    pub tol_zero: f64,
    pub tol_exutil: f64,
    /// Beliefs sampled per realization for the excess-utility check.
    pub samples: usize,
    pub seed: u64,
    /// Report the price row without letting it fail the audit.
    pub price_informational: bool,
    pub enabled: Vec<Desideratum>,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            tol_price: 1e-8,
            tol_cond: 1e-7,
            tol_zero: 1e-8,
            tol_exutil: 1e-6,
            samples: 100,
            seed: 0,
            price_informational: false,
            enabled: vec![
                Desideratum::Price,
                Desideratum::CondPrice,
                Desideratum::ZeroUtil,
                Desideratum::DecUtil,
                Desideratum::ExUtil,
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRow {
    pub desideratum: Desideratum,
    pub realization: Option<String>,
    /// Worst deviation found; its meaning depends on the row.
    pub value: f64,
    pub pass: bool,
    pub informational: bool,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct DesiderataReport {
    pub rows: Vec<CheckRow>,
}

impl DesiderataReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass || r.informational)
    }

    /// Worst value over the rows of one desideratum.
    pub fn worst(&self, d: Desideratum) -> Option<f64> {
        self.rows.iter().filter(|r| r.desideratum == d).map(|r| r.value).reduce(f64::max)
    }

    pub fn all_pass(&self, d: Desideratum) -> bool {
        self.rows.iter().filter(|r| r.desideratum == d).all(|r| r.pass)
    }
}

/// Audits the change from `(old, s)` to `(new, s_new)` on every realization of `obs`.
pub fn check_desiderata(
    old: (&CostModel, &[f64]),
    new: (&CostModel, &[f64]),
    obs: &Observation,
    opts: &CheckOptions,
) -> Result<DesiderataReport> {
    let (m, s) = old;
    let (mt, st) = new;
    check_dim(m.dim(), mt.dim())?;
    check_dim(m.dim(), s.len())?;
    check_dim(m.dim(), st.len())?;
    if m.space().rows() != mt.space().rows() {
        return Err(Error::InvalidParameter("old and new costs live on different outcome spaces".into()));
    }
    let on = |d: Desideratum| opts.enabled.contains(&d);
    let mut rows = Vec::new();

    if on(Desideratum::Price) {
        let dev = m.price(s)?.distance(&mt.price(st)?);
        rows.push(CheckRow {
            desideratum: Desideratum::Price,
            realization: None,
            value: dev,
            pass: dev <= opts.tol_price,
            informational: opts.price_informational,
        });
    }

    let space = m.space();
    let div_old = m.divergence_from(s)?;
    let div_new = mt.divergence_from(st)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for (x, cell) in obs.cells().iter().enumerate() {
        let name = Some(obs.realizations()[x].clone());
        let u_old = util_event(m, cell, s)?;
        let u_new = util_event(mt, cell, st)?;

        if on(Desideratum::CondPrice) {
            let dev = if u_old.non_unique || u_new.non_unique {
                // Compare as argmin sets: each conditional price must be optimal for the other side.
                let a = div_old.at(&u_new.conditional_price)? - u_old.value;
                let b = div_new.at(&u_old.conditional_price)? - u_new.value;
                a.abs().max(b.abs())
            } else {
                dist_inf(&u_old.conditional_price, &u_new.conditional_price)
            };
            rows.push(CheckRow {
                desideratum: Desideratum::CondPrice,
                realization: name.clone(),
                value: dev,
                pass: dev <= opts.tol_cond,
                informational: false,
            });
        }
        if on(Desideratum::ZeroUtil) {
            rows.push(CheckRow {
                desideratum: Desideratum::ZeroUtil,
                realization: name.clone(),
                value: u_new.value,
                pass: u_new.value <= opts.tol_zero,
                informational: false,
            });
        }
        if on(Desideratum::DecUtil) {
            let grew = u_new.value - u_old.value;
            let strict = u_old.value <= opts.tol_zero || grew < -opts.tol_zero;
            rows.push(CheckRow {
                desideratum: Desideratum::DecUtil,
                realization: name.clone(),
                value: grew,
                pass: grew <= opts.tol_zero && strict,
                informational: false,
            });
        }
        if on(Desideratum::ExUtil) {
            let extra = opts.samples.saturating_sub(cell.len() + 1);
            let mut probes = cell_probes(space, cell, extra, &mut rng);
            probes.truncate(opts.samples.max(1));
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut definitional = 0.0f64;
            for mu in &probes {
                let d_old = div_old.at(mu)?;
                let d_new = div_new.at(mu)?;
                let diff = d_old - d_new;
                lo = lo.min(diff);
                hi = hi.max(diff);
                definitional = definitional.max(((d_old - u_old.value) - (d_new - u_new.value)).abs());
            }
            let dev = (hi - lo).max(definitional);
            rows.push(CheckRow {
                desideratum: Desideratum::ExUtil,
                realization: name,
                value: dev,
                pass: dev <= opts.tol_exutil,
                informational: false,
            });
        }
    }
    Ok(DesiderataReport { rows })
}
