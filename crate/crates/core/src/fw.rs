//! Conditional-gradient (Frank-Wolfe) minimization with away steps.
//!
//! The feasible set is the convex hull of atoms produced by a linear
//! minimization oracle. The iterate is kept as an explicit convex combination
//! of the atoms seen so far, which is what makes away steps possible.

use crate::num::{dot, dist_inf};

#[derive(Debug, Clone, Copy)]
pub struct FwOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
}

impl Default for FwOptions {
    fn default() -> Self {
        FwOptions { max_iter: 1000, gap_tol: 1e-9 }
    }
}

#[derive(Debug, Clone)]
pub struct FwResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Frank-Wolfe duality gap at `x`; bounds `value - min`.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Active {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Active {
    fn point(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.atoms[0].len()];
        for (a, w) in self.atoms.iter().zip(&self.weights) {
            for (xi, ai) in x.iter_mut().zip(a) {
                *xi += w * ai;
            }
        }
        x
    }

    fn find(&self, atom: &[f64]) -> Option<usize> {
        self.atoms.iter().position(|a| dist_inf(a, atom) <= 1e-13)
    }
}

/// Minimizes `f` over the hull of atoms returned by `lmo(grad)`.
///
/// `f` returns value and gradient. `start` lists the initial atoms with weights summing to one.
pub fn minimize<F, L>(f: F, mut lmo: L, start: Vec<(Vec<f64>, f64)>, opts: FwOptions) -> FwResult
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
    L: FnMut(&[f64]) -> Vec<f64>,
{
    let mut act = Active {
        atoms: start.iter().map(|(a, _)| a.clone()).collect(),
        weights: start.iter().map(|(_, w)| *w).collect(),
    };
    let mut x = act.point();
    let (mut value, mut grad) = f(&x);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let s = lmo(&grad);
        let d_fw: Vec<f64> = s.iter().zip(&x).map(|(a, b)| a - b).collect();
        gap = -dot(&grad, &d_fw);
        if gap <= opts.gap_tol {
            break;
        }
        iterations += 1;

        // Away atom: the active atom with the largest directional derivative.
        let (away_idx, away_score) = act
            .atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, dot(&grad, a)))
            .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let away_gain = away_score - dot(&grad, &x);

        let use_away = act.atoms.len() > 1 && away_gain > gap;
        let (d, gamma_max) = if use_away {
            let w = act.weights[away_idx];
            let d: Vec<f64> = x.iter().zip(&act.atoms[away_idx]).map(|(a, b)| a - b).collect();
            (d, w / (1.0 - w))
        } else {
            (d_fw, 1.0)
        };
        let gamma = line_search(&f, &x, &d, gamma_max);
        if gamma <= 0.0 {
            break;
        }

        if use_away {
            for w in act.weights.iter_mut() {
                *w *= 1.0 + gamma;
            }
            act.weights[away_idx] -= gamma;
            if gamma >= gamma_max || act.weights[away_idx] <= 1e-15 {
                act.atoms.remove(away_idx);
                act.weights.remove(away_idx);
            }
        } else {
            for w in act.weights.iter_mut() {
                *w *= 1.0 - gamma;
            }
            if gamma >= 1.0 {
                act.atoms.clear();
                act.weights.clear();
            }
            match act.find(&s) {
                Some(i) => act.weights[i] += gamma,
                None => {
                    act.atoms.push(s);
                    act.weights.push(gamma);
                }
            }
            let keep: Vec<bool> = act.weights.iter().map(|w| *w > 1e-16).collect();
            let mut i = 0;
            act.atoms.retain(|_| {
                i += 1;
                keep[i - 1]
            });
            act.weights.retain(|w| *w > 1e-16);
        }
        let total: f64 = act.weights.iter().sum();
        for w in act.weights.iter_mut() {
            *w /= total;
        }
        x = act.point();
        let (v, g) = f(&x);
        value = v;
        grad = g;
    }
    FwResult { x, value, gap: gap.max(0.0), iterations, converged: gap <= opts.gap_tol }
}

/// Exact line search for a convex function along `d` on `[0, gamma_max]`,
/// by bisection on the sign of the directional derivative.
fn line_search<F>(f: &F, x: &[f64], d: &[f64], gamma_max: f64) -> f64
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let deriv = |g: f64| {
        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + g * b).collect();
        dot(&f(&y).1, d)
    };
    if deriv(0.0) >= 0.0 {
        return 0.0;
    }
    if deriv(gamma_max) <= 0.0 {
        return gamma_max;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Oracle for the standard simplex: the vertex with the smallest gradient entry.
pub fn simplex_lmo(grad: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, g) in grad.iter().enumerate() {
        if *g < grad[best] {
            best = i;
        }
    }
    let mut e = vec![0.0; grad.len()];
    e[best] = 1.0;
    e
}

/// Uniform start over all simplex vertices.
pub fn simplex_barycenter(n: usize) -> Vec<(Vec<f64>, f64)> {
    (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            (e, 1.0 / n as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projects_point_onto_simplex() {
        // min |x - c|^2 over the simplex, with c outside it.
        let c = [0.8, 0.6, -0.2];
        let f = |x: &[f64]| {
            let v = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum();
            let g = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            (v, g)
        };
        let r = minimize(f, simplex_lmo, simplex_barycenter(3), FwOptions { max_iter: 2000, gap_tol: 1e-14 });
        assert!(r.converged);
        assert!((r.x[0] - 0.6).abs() < 1e-7);
        assert!((r.x[1] - 0.4).abs() < 1e-7);
        assert!(r.x[2].abs() < 1e-7);
    }

    #[test]
    fn entropy_minimizer_is_uniform() {
        let f = |x: &[f64]| {
            let v = x.iter().map(|&a| crate::num::xlogx(a)).sum();
            let g = x.iter().map(|&a| 1.0 + crate::num::safe_ln(a)).collect();
            (v, g)
        };
        let start = vec![(vec![1.0, 0.0, 0.0, 0.0], 1.0)];
        let r = minimize(f, simplex_lmo, start, FwOptions { max_iter: 1000, gap_tol: 1e-12 });
        for xi in &r.x {
            assert!((xi - 0.25).abs() < 1e-6);
        }
        assert!((r.value + 4f64.ln()).abs() < 1e-11);
    }
}
