//! Exact optimal transport between finite measures.
//!
//! [`solve_assignment`] handles uniform measures with equal atom counts (the
//! optimum is a permutation); [`solve_general`] handles arbitrary weights with
//! a network simplex. Both return a [`CouplingPlan`] with dual potentials.

mod assignment;
mod simplex;

pub use simplex::PIVOT_TOLERANCE;

use crate::costs::{CostKind, GroundCost};
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, EmpiricalMeasure};

/// Default cap on m·n for [`solve_general`].
pub const DEFAULT_SIZE_CAP: usize = 40_000_000;

/// How optimality of a plan is certified.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Certificate {
    /// Optimal permutation `sigma` from the assignment solver.
    Permutation { sigma: Vec<usize> },
    /// Spanning-tree basis of the network simplex with nonnegative reduced costs.
    BasicFeasible,
    /// Exhaustive enumeration.
    Enumerated,
}

impl Certificate {
    pub fn name(&self) -> &'static str {
        match self {
            Certificate::Permutation { .. } => "permutation",
            Certificate::BasicFeasible => "basic_feasible",
            Certificate::Enumerated => "enumerated",
        }
    }
}

/// A positive-mass cell of a transport plan.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanEntry {
    pub row: usize,
    pub col: usize,
    pub mass: f64,
}

/// A transport plan between two discrete measures, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingPlan {
    /// Number of atoms of the first marginal.
    pub rows: usize,
    /// Number of atoms of the second marginal.
    pub cols: usize,
    /// Cells with positive mass, sorted by (row, col).
    pub entries: Vec<PlanEntry>,
    pub total_cost: f64,
    pub certificate: Certificate,
    /// Dual potentials with `row_potentials[i] + col_potentials[j] <= c(xᵢ, yⱼ)`
    /// up to the pivot tolerance, and equality on the plan's support.
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

impl CouplingPlan {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.rows];
        for e in &self.entries {
            s[e.row] += e.mass;
        }
        s
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for e in &self.entries {
            s[e.col] += e.mass;
        }
        s
    }

    pub fn dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for e in &self.entries {
            d[e.row][e.col] += e.mass;
        }
        d
    }

    /// Σ mass·cost recomputed from scratch.
    pub fn recompute_cost<C: GroundCost + ?Sized>(&self, xs: &[f64], ys: &[f64], dim: usize, cost: &C) -> f64 {
        self.entries
            .iter()
            .map(|e| e.mass * cost.cost(&xs[e.row * dim..(e.row + 1) * dim], &ys[e.col * dim..(e.col + 1) * dim]))
            .sum()
    }
}

fn check_dims(d1: usize, d2: usize) -> Result<()> {
    if d1 != d2 {
        return Err(Error::DimensionMismatch { expected: d1, found: d2 });
    }
    Ok(())
}

/// Optimal matching between two samples of equal size; each atom carries 1/n.
/// Repeated sample points stay distinct atoms.
pub fn solve_assignment<C: GroundCost + ?Sized>(
    a: &EmpiricalMeasure,
    b: &EmpiricalMeasure,
    cost: &C,
) -> Result<CouplingPlan> {
    check_dims(a.dim(), b.dim())?;
    let n = a.n();
    if n != b.n() {
        return Err(Error::SizeMismatch { left: n, right: b.n() });
    }
    let mut matrix = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            matrix.push(cost.cost(a.point(i), b.point(j)));
        }
    }
    let (sigma, u, v) = assignment::hungarian(n, &matrix);
    let w = 1.0 / n as f64;
    let entries: Vec<PlanEntry> = sigma.iter().enumerate().map(|(i, &j)| PlanEntry { row: i, col: j, mass: w }).collect();
    let total_cost = sigma.iter().enumerate().map(|(i, &j)| matrix[i * n + j]).sum::<f64>() * w;
    Ok(CouplingPlan {
        rows: n,
        cols: n,
        entries,
        total_cost,
        certificate: Certificate::Permutation { sigma },
        row_potentials: u.iter().map(|x| x * w).collect(),
        col_potentials: v.iter().map(|x| x * w).collect(),
    })
}

/// Optimal plan between weight vectors on flat coordinate buffers. Zero
/// weights are kept as atoms so the potentials cover every index.
pub fn solve_weights<C: GroundCost + ?Sized>(
    xs: &[f64],
    a: &[f64],
    ys: &[f64],
    b: &[f64],
    dim: usize,
    cost: &C,
    size_cap: usize,
) -> Result<CouplingPlan> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySupport);
    }
    if xs.len() != a.len() * dim || ys.len() != b.len() * dim {
        return Err(Error::DimensionMismatch { expected: a.len() * dim, found: xs.len() });
    }
    let entries_count = a.len().saturating_mul(b.len());
    if entries_count > size_cap {
        return Err(Error::SizeCapExceeded { entries: entries_count, cap: size_cap });
    }
    let sol = simplex::solve(xs, a, ys, b, dim, cost)?;
    let mut entries: Vec<PlanEntry> = sol
        .basis
        .iter()
        .filter(|&&(_, _, f)| f > 0.0)
        .map(|&(row, col, mass)| PlanEntry { row, col, mass })
        .collect();
    entries.sort_by_key(|e| (e.row, e.col));
    let total_cost = entries
        .iter()
        .map(|e| e.mass * cost.cost(&xs[e.row * dim..(e.row + 1) * dim], &ys[e.col * dim..(e.col + 1) * dim]))
        .sum();
    log::trace!("network simplex: {}x{} in {} pivots", a.len(), b.len(), sol.pivots);
    Ok(CouplingPlan {
        rows: a.len(),
        cols: b.len(),
        entries,
        total_cost,
        certificate: Certificate::BasicFeasible,
        row_potentials: sol.row_potentials,
        col_potentials: sol.col_potentials,
    })
}

/// Exact optimal plan between two discrete measures.
pub fn solve_general<C: GroundCost + ?Sized>(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, cost: &C) -> Result<CouplingPlan> {
    check_dims(nu1.dim(), nu2.dim())?;
    solve_weights(nu1.coords(), nu1.weights(), nu2.coords(), nu2.weights(), nu1.dim(), cost, DEFAULT_SIZE_CAP)
}

/// Optimal transport cost T_c(ν₁, ν₂).
pub fn t_cost<C: GroundCost + ?Sized>(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, cost: &C) -> Result<f64> {
    Ok(solve_general(nu1, nu2, cost)?.total_cost)
}

/// Wasserstein distance W_p for the Euclidean ground metric.
pub fn w_p(nu1: &DiscreteMeasure, nu2: &DiscreteMeasure, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("W_p needs p >= 1, got {p}")));
    }
    let t = t_cost(nu1, nu2, &CostKind::Power { p })?;
    Ok(if p == 1.0 { t } else { t.max(0.0).powf(1.0 / p) })
}

/// F_n(x) = W₂(L_n^x, μ) for a flat n-tuple of points of μ's dimension.
pub fn empirical_transport_fn(mu: &DiscreteMeasure, x: &[f64]) -> Result<f64> {
    let e = EmpiricalMeasure::new(mu.dim(), x.to_vec())?;
    w_p(&e.to_measure(), mu, 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostKind;

    fn line(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_flat(1, points.to_vec(), weights.to_vec()).unwrap()
    }

    #[test]
    fn assignment_two_atoms() {
        let a = EmpiricalMeasure::new(1, vec![0.0, 1.0]).unwrap();
        let b = EmpiricalMeasure::new(1, vec![0.0, 2.0]).unwrap();
        let plan = solve_assignment(&a, &b, &CostKind::Quadratic).unwrap();
        assert_eq!(plan.total_cost, 0.5);
        assert_eq!(plan.certificate, Certificate::Permutation { sigma: vec![0, 1] });
        let same = solve_assignment(&a, &a, &CostKind::Quadratic).unwrap();
        assert_eq!(same.total_cost, 0.0);
        let c = EmpiricalMeasure::new(1, vec![0.0]).unwrap();
        assert!(matches!(solve_assignment(&a, &c, &CostKind::Quadratic), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn two_by_two_polytope() {
        // one free parameter: the optimum moves |q - 1/2| across distance 1
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        for q in [0.0, 0.1, 0.37, 0.5, 0.9, 1.0] {
            let nu = line(&[0.0, 1.0], &[q, 1.0 - q]);
            let t = t_cost(&nu, &mu, &CostKind::Quadratic).unwrap();
            assert!((t - (q - 0.5f64).abs()).abs() < 1e-15, "q={q} t={t}");
        }
    }

    #[test]
    fn w_examples() {
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = line(&[0.0, 1.0], &[0.3, 0.7]);
        assert!((w_p(&mu, &nu, 1.0).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(w_p(&mu, &mu, 1.7).unwrap(), 0.0);
        let d0 = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let dm = DiscreteMeasure::dirac(&[-1.5]).unwrap();
        assert_eq!(w_p(&d0, &dm, 2.0).unwrap(), 1.5);
    }

    #[test]
    fn identical_measures_get_zero_cost() {
        let mu = DiscreteMeasure::new(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]], &[0.2, 0.3, 0.5]).unwrap();
        let plan = solve_general(&mu, &mu, &CostKind::Alpha { p: 1.5 }).unwrap();
        assert_eq!(plan.total_cost, 0.0);
        assert!(plan.entries.iter().all(|e| e.row == e.col));
    }

    #[test]
    fn potentials_are_dual_feasible() {
        let mu = line(&[0.0, 0.4, 1.3, 2.0], &[0.1, 0.2, 0.3, 0.4]);
        let nu = line(&[-1.0, 0.5, 3.0], &[0.5, 0.25, 0.25]);
        let cost = CostKind::Sg;
        let plan = solve_general(&mu, &nu, &cost).unwrap();
        let dual: f64 = mu.integrate(&plan.row_potentials) + nu.integrate(&plan.col_potentials);
        assert!((dual - plan.total_cost).abs() < 1e-12);
        for i in 0..4 {
            for j in 0..3 {
                let c = cost.eval(mu.point(i), nu.point(j));
                assert!(plan.row_potentials[i] + plan.col_potentials[j] <= c + 1e-12);
            }
        }
    }

    #[test]
    fn size_cap() {
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let err = solve_weights(mu.coords(), mu.weights(), mu.coords(), mu.weights(), 1, &CostKind::Quadratic, 3);
        assert!(matches!(err, Err(Error::SizeCapExceeded { entries: 4, cap: 3 })));
    }

    #[test]
    fn point_mass_fn_is_zero() {
        let mu = DiscreteMeasure::dirac(&[1.0, 2.0]).unwrap();
        assert_eq!(empirical_transport_fn(&mu, &[1.0, 2.0, 1.0, 2.0]).unwrap(), 0.0);
    }
}
