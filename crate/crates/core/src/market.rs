//! Outcome spaces, payoff vectors, observations and the geometry of their hulls.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp;

/// Shape of the payoff matrix, detected on construction. Closed forms key off it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceShape {
    /// Payoff rows are the unit vectors `e_1..e_K`.
    Simplex,
    /// Payoff rows are exactly the points of `{0,1}^K`.
    Cube,
    General,
}

/// A finite outcome set with one payoff vector per outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    names: Vec<String>,
    payoff: Vec<Vec<f64>>,
    shape: SpaceShape,
}

impl OutcomeSpace {
    pub fn new(names: Vec<String>, payoff: Vec<Vec<f64>>) -> Result<Self> {
        if payoff.is_empty() {
            return Err(Error::InvalidMarket("no outcomes".into()));
        }
        if names.len() != payoff.len() {
            return Err(Error::InvalidMarket(format!(
                "{} names for {} payoff rows",
                names.len(),
                payoff.len()
            )));
        }
        let k = payoff[0].len();
        if k == 0 {
            return Err(Error::InvalidMarket("no securities".into()));
        }
        for row in &payoff {
            crate::error::check_dim(k, row.len())?;
            crate::error::check_finite(row, "payoff")?;
        }
        let shape = detect_shape(&payoff);
        Ok(OutcomeSpace { names, payoff, shape })
    }

    /// `K` mutually exclusive outcomes with Arrow-Debreu securities.
    pub fn simplex(k: usize) -> Self {
        let payoff = (0..k)
            .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let names = (0..k).map(|i| i.to_string()).collect();
        OutcomeSpace { names, payoff, shape: SpaceShape::Simplex }
    }

    /// `{0,1}^k` with one security per coordinate; outcome names are bit strings.
    pub fn cube(k: usize) -> Self {
        let payoff: Vec<Vec<f64>> = (0..1usize << k)
            .map(|m| (0..k).map(|i| ((m >> (k - 1 - i)) & 1) as f64).collect())
            .collect();
        let names = payoff
            .iter()
            .map(|r| r.iter().map(|b| if *b > 0.5 { '1' } else { '0' }).collect())
            .collect();
        OutcomeSpace { names, payoff, shape: SpaceShape::Cube }
    }

    /// Two binary coordinates: outcomes 00, 01, 10, 11.
    pub fn square() -> Self {
        Self::cube(2)
    }

    /// `n` binary events plus the indicator of each possible count `0..=n`.
    pub fn medal_counts(n: usize) -> Self {
        let k = 2 * n + 1;
        let payoff: Vec<Vec<f64>> = (0..1usize << n)
            .map(|m| {
                let mut row = vec![0.0; k];
                let mut y = 0;
                for (i, r) in row.iter_mut().enumerate().take(n) {
                    let bit = (m >> (n - 1 - i)) & 1;
                    *r = bit as f64;
                    y += bit;
                }
                row[n + y] = 1.0;
                row
            })
            .collect();
        let names = (0..1usize << n)
            .map(|m| (0..n).map(|i| if (m >> (n - 1 - i)) & 1 == 1 { '1' } else { '0' }).collect())
            .collect();
        OutcomeSpace { names, payoff, shape: SpaceShape::General }
    }

    pub fn dim(&self) -> usize {
        self.payoff[0].len()
    }

    pub fn len(&self) -> usize {
        self.payoff.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payoff.is_empty()
    }

    pub fn shape(&self) -> SpaceShape {
        self.shape
    }

    pub fn name(&self, w: usize) -> &str {
        &self.names[w]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn payoff(&self, w: usize) -> &[f64] {
        &self.payoff[w]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.payoff
    }

    pub fn outcome_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .or_else(|| name.parse::<usize>().ok().filter(|i| *i < self.len()))
            .ok_or_else(|| Error::UnknownRealization(name.to_string()))
    }

    pub fn all(&self) -> Vec<usize> {
        (0..self.len()).collect()
    }

    /// Payoff vectors of the outcomes in `event`.
    pub fn vertices(&self, event: &[usize]) -> Vec<&[f64]> {
        event.iter().map(|&w| self.payoff[w].as_slice()).collect()
    }

    /// Maps convex weights over `event` to a point of its hull.
    pub fn combine(&self, event: &[usize], weights: &[f64]) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim()];
        for (&w, &l) in event.iter().zip(weights) {
            crate::num::axpy(&mut mu, l, &self.payoff[w]);
        }
        mu
    }

    /// A uniformly weighted random point of the hull of `event`.
    pub fn sample_hull<R: Rng>(&self, event: &[usize], rng: &mut R) -> Vec<f64> {
        let mut w: Vec<f64> = event.iter().map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        self.combine(event, &w)
    }
}

fn detect_shape(payoff: &[Vec<f64>]) -> SpaceShape {
    let k = payoff[0].len();
    let is_unit = |row: &Vec<f64>, i: usize| row.iter().enumerate().all(|(j, v)| *v == if i == j { 1.0 } else { 0.0 });
    if payoff.len() == k && payoff.iter().enumerate().all(|(i, r)| is_unit(r, i)) {
        return SpaceShape::Simplex;
    }
    if k < 20 && payoff.len() == 1 << k && payoff.iter().all(|r| r.iter().all(|v| *v == 0.0 || *v == 1.0)) {
        let mut seen: Vec<usize> = payoff
            .iter()
            .map(|r| r.iter().fold(0usize, |m, b| (m << 1) | (*b as usize)))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() == payoff.len() {
            return SpaceShape::Cube;
        }
    }
    SpaceShape::General
}

/// A partition of the outcomes into realizations of an observed variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    labels: Vec<usize>,
    realizations: Vec<String>,
    /// Set when the variable is the payoff sub-vector of these securities.
    block: Option<Vec<usize>>,
}

impl Observation {
    /// Builds from one label per outcome; realizations are ordered by first appearance.
    pub fn from_labels(space: &OutcomeSpace, labels: &[String]) -> Result<Self> {
        crate::error::check_dim(space.len(), labels.len())?;
        let mut realizations: Vec<String> = Vec::new();
        let mut idx = Vec::with_capacity(labels.len());
        for l in labels {
            match realizations.iter().position(|r| r == l) {
                Some(i) => idx.push(i),
                None => {
                    realizations.push(l.clone());
                    idx.push(realizations.len() - 1);
                }
            }
        }
        Ok(Observation { labels: idx, realizations, block: None })
    }

    pub fn from_fn<F: Fn(usize, &[f64]) -> String>(space: &OutcomeSpace, f: F) -> Self {
        let labels: Vec<String> = (0..space.len()).map(|w| f(w, space.payoff(w))).collect();
        Self::from_labels(space, &labels).expect("labels match outcome count")
    }

    /// Nothing is revealed.
    pub fn trivial(space: &OutcomeSpace) -> Self {
        Self::from_fn(space, |_, _| "*".to_string())
    }

    /// The outcome itself is revealed.
    pub fn identity(space: &OutcomeSpace) -> Self {
        Self::from_fn(space, |w, _| space.name(w).to_string())
    }

    /// The payoffs of the securities in `block` are revealed.
    pub fn block(space: &OutcomeSpace, block: &[usize]) -> Result<Self> {
        if block.is_empty() || block.iter().any(|&i| i >= space.dim()) {
            return Err(Error::InvalidParameter(format!("bad security block {block:?}")));
        }
        let mut obs = Self::from_fn(space, |_, row| {
            block.iter().map(|&i| fmt_num(row[i])).collect::<Vec<_>>().join(",")
        });
        obs.block = Some(block.to_vec());
        Ok(obs)
    }

    pub fn coordinate(space: &OutcomeSpace, i: usize) -> Result<Self> {
        Self::block(space, &[i])
    }

    /// The sum of the given securities' payoffs is revealed.
    pub fn sum(space: &OutcomeSpace, securities: &[usize]) -> Result<Self> {
        if securities.iter().any(|&i| i >= space.dim()) {
            return Err(Error::InvalidParameter(format!("bad securities {securities:?}")));
        }
        Ok(Self::from_fn(space, |_, row| fmt_num(securities.iter().map(|&i| row[i]).sum())))
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn realizations(&self) -> &[String] {
        &self.realizations
    }

    pub fn block_securities(&self) -> Option<&[usize]> {
        self.block.as_deref()
    }

    pub fn realization_of(&self, outcome: usize) -> usize {
        self.labels[outcome]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.realizations
            .iter()
            .position(|r| r == name)
            .ok_or_else(|| Error::UnknownRealization(name.to_string()))
    }

    /// Outcomes consistent with realization `x`.
    pub fn cell(&self, x: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&w| self.labels[w] == x).collect()
    }

    pub fn cells(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|x| self.cell(x)).collect()
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Outcomes consistent with the named realization.
pub fn conditional_outcomes(obs: &Observation, realization: &str) -> Result<Vec<usize>> {
    Ok(obs.cell(obs.index_of(realization)?))
}

/// Convex weights over `event` reproducing `mu` within `tol`, if `mu` lies in its hull.
pub fn membership(space: &OutcomeSpace, mu: &[f64], event: &[usize], tol: f64) -> Result<Option<Vec<f64>>> {
    crate::error::check_dim(space.dim(), mu.len())?;
    if event.is_empty() {
        return Err(Error::EmptyEvent);
    }
    lp::hull_membership(&space.vertices(event), mu, tol)
}

/// Is the hull of `event` a face of the full hull?
///
/// Probes the centroid, vertices and pairwise midpoints of the sub-hull and asks whether
/// any of them admits a decomposition with weight on payoff vectors outside the sub-hull.
/// The centroid probe alone is decisive: it lies in the relative interior of the smallest
/// face containing the sub-hull.
pub fn face_check(space: &OutcomeSpace, event: &[usize], tol: f64) -> Result<bool> {
    if event.is_empty() {
        return Err(Error::EmptyEvent);
    }
    let sub = space.vertices(event);
    let mut outside = Vec::new();
    for w in 0..space.len() {
        if !event.contains(&w) && lp::hull_membership(&sub, space.payoff(w), 1e-12)?.is_none() {
            outside.push(w);
        }
    }
    if outside.is_empty() {
        return Ok(true);
    }
    let mut probes: Vec<Vec<f64>> = vec![crate::num::mean_rows(&sub)];
    for (i, a) in sub.iter().enumerate() {
        probes.push(a.to_vec());
        for b in sub.iter().skip(i + 1) {
            probes.push(a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect());
        }
    }
    let all = space.all();
    let verts = space.vertices(&all);
    let c: Vec<f64> = all.iter().map(|w| if outside.contains(w) { -1.0 } else { 0.0 }).collect();
    for mu in &probes {
        if let Some((obj, _)) = lp::min_over_decompositions(&verts, mu, &c, 1e-12)? {
            if -obj > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// A vector whose payoff is the same on every outcome of a cell and higher than anywhere off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureWitness {
    pub v: Vec<f64>,
    pub margin: f64,
}

impl ExposureWitness {
    /// Smallest gap `v.rho(w) - v.rho(w')` over `w` in the cell and `w'` outside, or `None`
    /// if `v.rho` is not constant on the cell.
    pub fn verified_margin(&self, space: &OutcomeSpace, cell: &[usize]) -> Option<f64> {
        let vals: Vec<f64> = cell.iter().map(|&w| crate::num::dot(&self.v, space.payoff(w))).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-9 * (1.0 + hi.abs()) {
            return None;
        }
        let outside = (0..space.len())
            .filter(|w| !cell.contains(w))
            .map(|w| crate::num::dot(&self.v, space.payoff(w)))
            .fold(f64::NEG_INFINITY, f64::max);
        Some(lo - outside)
    }
}

/// One witness per realization, or `None` where the cell's hull is not exposed.
pub fn exposure_witness(space: &OutcomeSpace, obs: &Observation) -> Result<Vec<Option<ExposureWitness>>> {
    let binary_block = obs.block_securities().filter(|g| {
        space.rows().iter().all(|r| g.iter().all(|&i| r[i] == 0.0 || r[i] == 1.0))
    });
    let mut out = Vec::with_capacity(obs.len());
    for x in 0..obs.len() {
        let cell = obs.cell(x);
        if cell.len() == space.len() {
            out.push(Some(ExposureWitness { v: vec![0.0; space.dim()], margin: 1.0 }));
            continue;
        }
        let candidate = if space.shape() == SpaceShape::Simplex {
            let mut v = vec![0.0; space.dim()];
            cell.iter().for_each(|&w| v[w] = 1.0);
            Some(v)
        } else if let Some(g) = binary_block {
            let row = space.payoff(cell[0]);
            let mut v = vec![0.0; space.dim()];
            g.iter().for_each(|&i| v[i] = if row[i] == 1.0 { 1.0 } else { -1.0 });
            Some(v)
        } else {
            None
        };
        let witness = candidate
            .map(|v| ExposureWitness { v, margin: 1.0 })
            .filter(|w| w.verified_margin(space, &cell).is_some_and(|m| m >= 1.0 - 1e-12));
        let witness = match witness {
            Some(w) => Some(w),
            None => {
                let outside: Vec<usize> = (0..space.len()).filter(|w| !cell.contains(w)).collect();
                lp::exposing_direction(&space.vertices(&cell), &space.vertices(&outside))?
                    .map(|v| ExposureWitness { v, margin: 1.0 })
            }
        };
        out.push(witness);
    }
    Ok(out)
}

/// A partition of the security indices into blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockStructure {
    blocks: Vec<Vec<usize>>,
}

impl BlockStructure {
    pub fn new(blocks: Vec<Vec<usize>>, k: usize) -> Result<Self> {
        let mut seen = vec![false; k];
        for b in &blocks {
            if b.is_empty() {
                return Err(Error::InvalidMarket("empty block".into()));
            }
            for &i in b {
                if i >= k || seen[i] {
                    return Err(Error::InvalidMarket(format!("blocks do not partition 0..{k}")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidMarket(format!("blocks do not cover 0..{k}")));
        }
        Ok(BlockStructure { blocks })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).sum()
    }

    pub fn gather(&self, g: usize, v: &[f64]) -> Vec<f64> {
        self.blocks[g].iter().map(|&i| v[i]).collect()
    }

    pub fn scatter(&self, g: usize, part: &[f64], v: &mut [f64]) {
        for (&i, &x) in self.blocks[g].iter().zip(part) {
            v[i] = x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_are_detected() {
        assert_eq!(OutcomeSpace::simplex(3).shape(), SpaceShape::Simplex);
        assert_eq!(OutcomeSpace::square().shape(), SpaceShape::Cube);
        assert_eq!(OutcomeSpace::medal_counts(2).shape(), SpaceShape::General);
        let s = OutcomeSpace::new(vec!["a".into(), "b".into()], vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(s.shape(), SpaceShape::Cube);
    }

    #[test]
    fn medal_count_payoffs() {
        let s = OutcomeSpace::medal_counts(2);
        assert_eq!(s.dim(), 5);
        assert_eq!(s.payoff(3), &[1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.payoff(1), &[0.0, 1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn square_cells_and_faces() {
        let s = OutcomeSpace::square();
        let x1 = Observation::coordinate(&s, 0).unwrap();
        assert_eq!(x1.realizations(), &["0".to_string(), "1".to_string()]);
        assert_eq!(conditional_outcomes(&x1, "0").unwrap(), vec![0, 1]);
        assert!(face_check(&s, &x1.cell(0), 1e-9).unwrap());
        let count = Observation::sum(&s, &[0, 1]).unwrap();
        let one = conditional_outcomes(&count, "1").unwrap();
        assert_eq!(one, vec![1, 2]);
        assert!(!face_check(&s, &one, 1e-9).unwrap());
        assert!(face_check(&s, &conditional_outcomes(&count, "2").unwrap(), 1e-9).unwrap());
        assert!(matches!(conditional_outcomes(&count, "3"), Err(Error::UnknownRealization(_))));
    }

    #[test]
    fn square_face_membership() {
        let s = OutcomeSpace::square();
        let edge = vec![0, 1];
        assert!(membership(&s, &[0.0, 0.3], &edge, 1e-9).unwrap().is_some());
        assert!(membership(&s, &[0.5, 0.5], &edge, 1e-9).unwrap().is_none());
    }

    #[test]
    fn witnesses() {
        let s = OutcomeSpace::simplex(4);
        let obs = Observation::from_labels(&s, &["a".into(), "a".into(), "b".into(), "b".into()]).unwrap();
        let ws = exposure_witness(&s, &obs).unwrap();
        assert_eq!(ws[0].as_ref().unwrap().v, vec![1.0, 1.0, 0.0, 0.0]);

        let sq = OutcomeSpace::square();
        let x1 = Observation::coordinate(&sq, 0).unwrap();
        let ws = exposure_witness(&sq, &x1).unwrap();
        assert_eq!(ws[0].as_ref().unwrap().v, vec![-1.0, 0.0]);
        assert_eq!(ws[1].as_ref().unwrap().v, vec![1.0, 0.0]);

        let count = Observation::sum(&sq, &[0, 1]).unwrap();
        let ws = exposure_witness(&sq, &count).unwrap();
        assert!(ws[0].is_some() && ws[2].is_some());
        assert!(ws[1].is_none());
    }

    #[test]
    fn blocks_partition() {
        assert!(BlockStructure::new(vec![vec![0], vec![1, 2]], 3).is_ok());
        assert!(BlockStructure::new(vec![vec![0], vec![0, 2]], 3).is_err());
        assert!(BlockStructure::new(vec![vec![0]], 2).is_err());
    }
}
