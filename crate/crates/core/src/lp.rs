//! Small linear programs over convex decompositions, backed by `minilp`.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};

use crate::error::{Error, Result};

/// Thin builder that drops zero coefficients and maps solver errors.
pub(crate) struct Lp {
    problem: Problem,
    vars: Vec<Variable>,
}

pub(crate) enum Cmp {
    Le,
    Ge,
    Eq,
}

impl Lp {
    pub fn minimize() -> Self {
        Lp { problem: Problem::new(OptimizationDirection::Minimize), vars: Vec::new() }
    }

    pub fn maximize() -> Self {
        Lp { problem: Problem::new(OptimizationDirection::Maximize), vars: Vec::new() }
    }

    /// Adds a variable and returns its index.
    pub fn var(&mut self, obj: f64, lo: f64, hi: f64) -> usize {
        self.vars.push(self.problem.add_var(obj, (lo, hi)));
        self.vars.len() - 1
    }

    pub fn constraint(&mut self, terms: &[(usize, f64)], cmp: Cmp, rhs: f64) {
        let expr: Vec<(Variable, f64)> = terms
            .iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|&(i, c)| (self.vars[i], c))
            .collect();
        let op = match cmp {
            Cmp::Le => ComparisonOp::Le,
            Cmp::Ge => ComparisonOp::Ge,
            Cmp::Eq => ComparisonOp::Eq,
        };
        self.problem.add_constraint(expr, op, rhs);
    }

    /// Returns the objective value and all variable values, or `None` if infeasible.
    pub fn solve(&self) -> Result<Option<(f64, Vec<f64>)>> {
        match self.problem.solve() {
            Ok(sol) => {
                let x = self.vars.iter().map(|v| *sol.var_value(*v)).collect();
                Ok(Some((sol.objective(), x)))
            }
            Err(minilp::Error::Infeasible) => Ok(None),
            Err(e) => Err(Error::Lp(e.to_string())),
        }
    }
}

/// Convex weights `lambda` with `|sum_i lambda_i v_i - mu|_inf <= tol`, if any.
pub fn hull_membership(vertices: &[&[f64]], mu: &[f64], tol: f64) -> Result<Option<Vec<f64>>> {
    if vertices.is_empty() {
        return Ok(None);
    }
    let mut lp = Lp::minimize();
    let lam: Vec<usize> = (0..vertices.len()).map(|_| lp.var(0.0, 0.0, f64::INFINITY)).collect();
    let t = lp.var(1.0, 0.0, f64::INFINITY);
    let ones: Vec<(usize, f64)> = lam.iter().map(|&i| (i, 1.0)).collect();
    lp.constraint(&ones, Cmp::Eq, 1.0);
    for (k, &m) in mu.iter().enumerate() {
        let mut terms: Vec<(usize, f64)> = lam.iter().zip(vertices).map(|(&i, v)| (i, v[k])).collect();
        terms.push((t, -1.0));
        lp.constraint(&terms, Cmp::Le, m);
        terms.pop();
        terms.push((t, 1.0));
        lp.constraint(&terms, Cmp::Ge, m);
    }
    match lp.solve()? {
        Some((obj, x)) if obj <= tol => Ok(Some(lam.iter().map(|&i| x[i].max(0.0)).collect())),
        _ => Ok(None),
    }
}

/// Minimizes `c . w` over `w` in the simplex with `|P^T w - mu|_inf <= tol`.
pub fn min_over_decompositions(
    vertices: &[&[f64]],
    mu: &[f64],
    c: &[f64],
    tol: f64,
) -> Result<Option<(f64, Vec<f64>)>> {
    let mut lp = Lp::minimize();
    let w: Vec<usize> = c.iter().map(|&ci| lp.var(ci, 0.0, f64::INFINITY)).collect();
    let ones: Vec<(usize, f64)> = w.iter().map(|&i| (i, 1.0)).collect();
    lp.constraint(&ones, Cmp::Eq, 1.0);
    for (k, &m) in mu.iter().enumerate() {
        let terms: Vec<(usize, f64)> = w.iter().zip(vertices).map(|(&i, v)| (i, v[k])).collect();
        lp.constraint(&terms, Cmp::Le, m + tol);
        lp.constraint(&terms, Cmp::Ge, m - tol);
    }
    Ok(lp
        .solve()?
        .map(|(obj, x)| (obj, w.iter().map(|&i| x[i].max(0.0)).collect())))
}

/// Minimizes `c . w` over `w` in one simplex and `u` in another, coupled by
/// `|P^T w - Q^T u|_inf <= tol`. Returns `(w, u)`.
pub fn min_over_coupled(
    w_vertices: &[&[f64]],
    u_vertices: &[&[f64]],
    c: &[f64],
    tol: f64,
) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
    let k = w_vertices[0].len();
    let mut lp = Lp::minimize();
    let w: Vec<usize> = c.iter().map(|&ci| lp.var(ci, 0.0, f64::INFINITY)).collect();
    let u: Vec<usize> = u_vertices.iter().map(|_| lp.var(0.0, 0.0, f64::INFINITY)).collect();
    lp.constraint(&w.iter().map(|&i| (i, 1.0)).collect::<Vec<_>>(), Cmp::Eq, 1.0);
    lp.constraint(&u.iter().map(|&i| (i, 1.0)).collect::<Vec<_>>(), Cmp::Eq, 1.0);
    for d in 0..k {
        let mut terms: Vec<(usize, f64)> = w.iter().zip(w_vertices).map(|(&i, v)| (i, v[d])).collect();
        terms.extend(u.iter().zip(u_vertices).map(|(&i, v)| (i, -v[d])));
        lp.constraint(&terms, Cmp::Le, tol);
        lp.constraint(&terms, Cmp::Ge, -tol);
    }
    Ok(lp.solve()?.map(|(_, x)| {
        (w.iter().map(|&i| x[i].max(0.0)).collect(), u.iter().map(|&i| x[i].max(0.0)).collect())
    }))
}

/// Do the hulls of two vertex sets intersect (within `tol`)?
pub fn hulls_intersect(a: &[&[f64]], b: &[&[f64]], tol: f64) -> Result<bool> {
    let k = a[0].len();
    let mut lp = Lp::minimize();
    let la: Vec<usize> = a.iter().map(|_| lp.var(0.0, 0.0, f64::INFINITY)).collect();
    let lb: Vec<usize> = b.iter().map(|_| lp.var(0.0, 0.0, f64::INFINITY)).collect();
    let t = lp.var(1.0, 0.0, f64::INFINITY);
    lp.constraint(&la.iter().map(|&i| (i, 1.0)).collect::<Vec<_>>(), Cmp::Eq, 1.0);
    lp.constraint(&lb.iter().map(|&i| (i, 1.0)).collect::<Vec<_>>(), Cmp::Eq, 1.0);
    for d in 0..k {
        let mut terms: Vec<(usize, f64)> = la.iter().zip(a).map(|(&i, v)| (i, v[d])).collect();
        terms.extend(lb.iter().zip(b).map(|(&i, v)| (i, -v[d])));
        terms.push((t, -1.0));
        lp.constraint(&terms, Cmp::Le, 0.0);
        terms.pop();
        terms.push((t, 1.0));
        lp.constraint(&terms, Cmp::Ge, 0.0);
    }
    Ok(matches!(lp.solve()?, Some((obj, _)) if obj <= tol))
}

/// Searches for `v` that is constant on `inside` and at least `margin` above every point of
/// `outside`, so that `inside` is exactly the argmax set. Returns `v` scaled to margin 1.
pub fn exposing_direction(inside: &[&[f64]], outside: &[&[f64]]) -> Result<Option<Vec<f64>>> {
    let k = inside[0].len();
    let mut lp = Lp::maximize();
    let v: Vec<usize> = (0..k).map(|_| lp.var(0.0, -1.0, 1.0)).collect();
    let z = lp.var(0.0, f64::NEG_INFINITY, f64::INFINITY);
    let t = lp.var(1.0, f64::NEG_INFINITY, 1.0);
    for a in inside {
        let mut terms: Vec<(usize, f64)> = v.iter().zip(a.iter()).map(|(&i, &c)| (i, c)).collect();
        terms.push((z, -1.0));
        terms.push((t, -1.0));
        lp.constraint(&terms, Cmp::Eq, 0.0);
    }
    for b in outside {
        let mut terms: Vec<(usize, f64)> = v.iter().zip(b.iter()).map(|(&i, &c)| (i, c)).collect();
        terms.push((z, -1.0));
        lp.constraint(&terms, Cmp::Le, 0.0);
    }
    match lp.solve()? {
        Some((margin, x)) if margin > 1e-9 => {
            Ok(Some(v.iter().map(|&i| x[i] / margin).collect()))
        }
        _ => Ok(None),
    }
}
