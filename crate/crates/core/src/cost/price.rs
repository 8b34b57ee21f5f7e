use serde::{Deserialize, Serialize};

use crate::fw::{self, FwOptions};
use crate::num::{dist_inf, dot};

/// A polytope of prices given by its vertices. A singleton means `C` is differentiable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSet {
    vertices: Vec<Vec<f64>>,
}

impl PriceSet {
    pub fn point(p: Vec<f64>) -> Self {
        PriceSet { vertices: vec![p] }
    }

    pub fn from_vertices(vs: Vec<Vec<f64>>) -> Self {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(vs.len());
        for v in vs {
            if !out.iter().any(|u| dist_inf(u, &v) <= 1e-15) {
                out.push(v);
            }
        }
        PriceSet { vertices: out }
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn lo(&self) -> Vec<f64> {
        let k = self.vertices[0].len();
        (0..k).map(|i| self.vertices.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min)).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        let k = self.vertices[0].len();
        (0..k).map(|i| self.vertices.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max)).collect()
    }

    /// Midpoint of the bounding box.
    pub fn center(&self) -> Vec<f64> {
        if self.vertices.len() == 1 {
            return self.vertices[0].clone();
        }
        self.lo().iter().zip(self.hi()).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// Per-coordinate half-width of the bounding box.
    pub fn radius(&self) -> Vec<f64> {
        self.lo().iter().zip(self.hi()).map(|(a, b)| 0.5 * (b - a)).collect()
    }

    pub fn is_singleton(&self, tol: f64) -> bool {
        self.radius().iter().all(|r| *r <= tol)
    }

    /// Closest point of the set to `mu` in the Euclidean norm.
    pub fn nearest(&self, mu: &[f64]) -> Vec<f64> {
        if self.vertices.len() == 1 {
            return self.vertices[0].clone();
        }
        let vs = &self.vertices;
        let combine = |lam: &[f64]| {
            let mut p = vec![0.0; mu.len()];
            for (l, v) in lam.iter().zip(vs) {
                crate::num::axpy(&mut p, *l, v);
            }
            p
        };
        let f = |lam: &[f64]| {
            let r: Vec<f64> = combine(lam).iter().zip(mu).map(|(a, b)| a - b).collect();
            let g = vs.iter().map(|v| 2.0 * dot(v, &r)).collect();
            (dot(&r, &r), g)
        };
        let res = fw::minimize(
            f,
            fw::simplex_lmo,
            fw::simplex_barycenter(vs.len()),
            FwOptions { max_iter: 500, gap_tol: 1e-20 },
        );
        combine(&res.x)
    }

    pub fn contains(&self, mu: &[f64], tol: f64) -> bool {
        dist_inf(&self.nearest(mu), mu) <= tol
    }

    /// Largest distance from a vertex of either set to the other set.
    pub fn distance(&self, other: &PriceSet) -> f64 {
        let a = self.vertices.iter().map(|v| dist_inf(&other.nearest(v), v)).fold(0.0, f64::max);
        let b = other.vertices.iter().map(|v| dist_inf(&self.nearest(v), v)).fold(0.0, f64::max);
        a.max(b)
    }
}
