//! Sharp Poincaré constants as generalized eigenvalue problems.
//!
//! With M = diag(μ) and L the weighted graph Laplacian of the Dirichlet form,
//! the best constant in Var_μ(f) ≤ C·E(f) is 1/λ₂ where λ₂ is the second
//! smallest eigenvalue of M^{-1/2} L M^{-1/2}.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{dirichlet_edges, GradientModel};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Largest graph handled by the dense eigensolver.
pub const DENSE_EIGEN_CAP: usize = 2_000;

/// Sharp constant and a function attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct PoincareResult {
    pub constant: f64,
    /// Values on the atoms of μ of an extremal function.
    pub extremal: Vec<f64>,
}

/// Smallest C with Var_μ(f) ≤ C·E(f) for every f, where E is the Dirichlet
/// form of `model` (see [`super::dirichlet_energy`]).
pub fn poincare_constant_grid(mu: &DiscreteMeasure, model: &GradientModel) -> Result<f64> {
    Ok(poincare_solve(mu, model)?.constant)
}

pub fn poincare_solve(mu: &DiscreteMeasure, model: &GradientModel) -> Result<PoincareResult> {
    let k = mu.len();
    if k == 1 {
        return Ok(PoincareResult { constant: 0.0, extremal: vec![0.0] });
    }
    if let Some(i) = mu.weights().iter().position(|&w| w <= 0.0) {
        return Err(Error::InvalidParameter(format!("atom {i} has zero mass; drop it before solving")));
    }
    let edges = dirichlet_edges(mu, model)?;
    check_connected(k, &edges)?;
    let sqrt_w: Vec<f64> = mu.weights().iter().map(|w| w.sqrt()).collect();
    let (lambda, y) = match model {
        GradientModel::Grid1d => tridiagonal_second(k, &edges, &sqrt_w)?,
        _ => dense_second(k, &edges, &sqrt_w)?,
    };
    let mut extremal: Vec<f64> = y.iter().zip(&sqrt_w).map(|(v, s)| v / s).collect();
    let mean = mu.integrate(&extremal);
    extremal.iter_mut().for_each(|v| *v -= mean);
    Ok(PoincareResult { constant: 1.0 / lambda, extremal })
}

fn check_connected(k: usize, edges: &[(usize, usize, f64)]) -> Result<()> {
    let mut parent: Vec<usize> = (0..k).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = k;
    for &(a, b, w) in edges {
        if w <= 0.0 {
            continue;
        }
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra != rb {
            parent[ra] = rb;
            components -= 1;
        }
    }
    if components > 1 {
        return Err(Error::DisconnectedGraph);
    }
    Ok(())
}

fn dense_second(k: usize, edges: &[(usize, usize, f64)], sqrt_w: &[f64]) -> Result<(f64, Vec<f64>)> {
    if k > DENSE_EIGEN_CAP {
        return Err(Error::SupportTooLarge { size: k, max: DENSE_EIGEN_CAP });
    }
    let mut a = DMatrix::<f64>::zeros(k, k);
    for &(i, j, w) in edges {
        a[(i, i)] += w / (sqrt_w[i] * sqrt_w[i]);
        a[(j, j)] += w / (sqrt_w[j] * sqrt_w[j]);
        let off = w / (sqrt_w[i] * sqrt_w[j]);
        a[(i, j)] -= off;
        a[(j, i)] -= off;
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let idx = order[1];
    Ok((eig.eigenvalues[idx], eig.eigenvectors.column(idx).iter().cloned().collect()))
}

/// Second smallest eigenvalue of the symmetric tridiagonal matrix of a path
/// graph by Sturm-sequence bisection, with its eigenvector by inverse iteration.
fn tridiagonal_second(k: usize, edges: &[(usize, usize, f64)], sqrt_w: &[f64]) -> Result<(f64, Vec<f64>)> {
    // edges come in path order over the atoms sorted by coordinate
    let mut order = Vec::with_capacity(k);
    order.push(edges[0].0);
    for &(a, b, _) in edges {
        debug_assert_eq!(*order.last().unwrap(), a);
        order.push(b);
    }
    let mut diag = vec![0.0; k];
    let mut off = vec![0.0; k - 1];
    for (e, &(a, b, w)) in edges.iter().enumerate() {
        diag[e] += w / (sqrt_w[a] * sqrt_w[a]);
        diag[e + 1] += w / (sqrt_w[b] * sqrt_w[b]);
        off[e] = -w / (sqrt_w[a] * sqrt_w[b]);
    }
    // Gershgorin bound on the spectrum
    let mut hi = 0.0f64;
    for i in 0..k {
        let mut r = diag[i];
        if i > 0 {
            r += off[i - 1].abs();
        }
        if i + 1 < k {
            r += off[i].abs();
        }
        hi = hi.max(r);
    }
    let count_below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = 1.0;
        for i in 0..k {
            let b2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
            d = diag[i] - x - if i > 0 { b2 / d } else { 0.0 };
            if d == 0.0 {
                d = -f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let mut lo = 0.0f64;
    let mut up = hi;
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if mid <= lo || mid >= up {
            break;
        }
        if count_below(mid) >= 2 {
            up = mid;
        } else {
            lo = mid;
        }
    }
    let lambda = 0.5 * (lo + up);
    if !(lambda > 0.0) {
        return Err(Error::DisconnectedGraph);
    }
    // inverse iteration with the Thomas algorithm
    let shift = lambda * (1.0 - 1e-10);
    let mut v: Vec<f64> = (0..k).map(|i| ((i as f64 + 0.5) / k as f64 * std::f64::consts::PI).cos() + 0.01).collect();
    let mut cp = vec![0.0; k];
    let mut dp = vec![0.0; k];
    for _ in 0..4 {
        for i in 0..k {
            let a_i = if i > 0 { off[i - 1] } else { 0.0 };
            let b_i = diag[i] - shift;
            let c_i = if i + 1 < k { off[i] } else { 0.0 };
            let denom = if i > 0 { b_i - a_i * cp[i - 1] } else { b_i };
            let denom = if denom == 0.0 { f64::MIN_POSITIVE } else { denom };
            cp[i] = c_i / denom;
            dp[i] = (v[i] - if i > 0 { a_i * dp[i - 1] } else { 0.0 }) / denom;
        }
        for i in (0..k).rev() {
            v[i] = dp[i] - if i + 1 < k { cp[i] * v[i + 1] } else { 0.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
    }
    let mut y = vec![0.0; k];
    for (pos, &atom) in order.iter().enumerate() {
        y[atom] = v[pos];
    }
    Ok((lambda, y))
}
