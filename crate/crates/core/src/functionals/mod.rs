//! Entropy-side functionals and dual-side checks.

mod poincare;

pub use poincare::{poincare_constant_grid, poincare_solve, PoincareResult, DENSE_EIGEN_CAP};

use crate::costs::{alpha, CostKind};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::stats::weighted_line_fit;

/// Slack used by the dual checks: `satisfied` means ratio ≤ 1 + DUAL_TOLERANCE.
pub const DUAL_TOLERANCE: f64 = 1e-9;

fn check_len(mu: &DiscreteMeasure, f: &[f64]) -> Result<()> {
    if f.len() != mu.len() {
        return Err(Error::LengthMismatch { expected: mu.len(), found: f.len() });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("function values"));
    }
    Ok(())
}

/// H(ν|μ) = Σ ν log(ν/μ); `f64::INFINITY` when ν charges an atom μ does not.
pub fn relative_entropy(nu: &DiscreteMeasure, mu: &DiscreteMeasure) -> f64 {
    if nu.dim() != mu.dim() {
        return f64::INFINITY;
    }
    let index = mu.index_map();
    let mut h = 0.0;
    for (p, &w) in nu.points().zip(nu.weights()) {
        if w == 0.0 {
            continue;
        }
        let key: Vec<u64> = p.iter().map(|&c| (c + 0.0).to_bits()).collect();
        match index.get(&key) {
            Some(&j) if mu.weights()[j] > 0.0 => h += w * (w / mu.weights()[j]).ln(),
            _ => return f64::INFINITY,
        }
    }
    h.max(0.0)
}

/// Relative entropy between weight vectors on a common atom list.
pub fn relative_entropy_weights(nu: &[f64], mu: &[f64]) -> f64 {
    let mut h = 0.0;
    for (&v, &m) in nu.iter().zip(mu) {
        if v > 0.0 {
            if m <= 0.0 {
                return f64::INFINITY;
            }
            h += v * (v / m).ln();
        }
    }
    h.max(0.0)
}

/// Ent_μ(f) = ∫ f log f dμ − ∫ f dμ · log ∫ f dμ, for f ≥ 0.
pub fn entropy_functional(mu: &DiscreteMeasure, f: &[f64]) -> Result<f64> {
    check_len(mu, f)?;
    if f.iter().any(|&v| v < 0.0) {
        return Err(Error::NegativeInput);
    }
    let xlogx = |x: f64| if x > 0.0 { x * x.ln() } else { 0.0 };
    let m = mu.integrate(f);
    let values: Vec<f64> = f.iter().map(|&v| xlogx(v)).collect();
    Ok((mu.integrate(&values) - xlogx(m)).max(0.0))
}

/// Var_μ(f), computed around the mean.
pub fn variance(mu: &DiscreteMeasure, f: &[f64]) -> Result<f64> {
    check_len(mu, f)?;
    if f.iter().all(|&v| v == f[0]) {
        return Ok(0.0);
    }
    let m = mu.integrate(f);
    let sq: Vec<f64> = f.iter().map(|v| (v - m) * (v - m)).collect();
    Ok(mu.integrate(&sq))
}

/// Qf(x) = min over atoms y of f(y) + scale·c(x, y).
pub fn inf_convolution(f: &[f64], domain: &DiscreteMeasure, cost: &CostKind, scale: f64) -> Result<Vec<f64>> {
    check_len(domain, f)?;
    if !(scale > 0.0) {
        return Err(Error::InvalidParameter(format!("inf-convolution scale must be positive, got {scale}")));
    }
    Ok(domain
        .points()
        .map(|x| {
            domain
                .points()
                .zip(f)
                .map(|(y, &fy)| fy + scale * cost.eval(x, y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect())
}

fn log_integral_exp(mu: &DiscreteMeasure, g: &[f64]) -> f64 {
    let terms: Vec<f64> = mu
        .weights()
        .iter()
        .zip(g)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, v)| w.ln() + v)
        .collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

/// Outcome of a dual inequality check, with both sides also kept in log form.
#[derive(Clone, Debug, PartialEq)]
pub struct DualCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub log_lhs: f64,
    pub log_rhs: f64,
    /// lhs / rhs.
    pub ratio: f64,
    pub satisfied: bool,
}

impl DualCheck {
    fn from_logs(log_lhs: f64, log_rhs: f64) -> Self {
        let ratio = (log_lhs - log_rhs).exp();
        Self {
            lhs: log_lhs.exp(),
            rhs: log_rhs.exp(),
            log_lhs,
            log_rhs,
            ratio,
            satisfied: ratio <= 1.0 + DUAL_TOLERANCE,
        }
    }
}

/// ∫ e^{Qf} dμ ≤ e^{∫ f dμ} with Qf the inf-convolution at `scale`.
pub fn check_bg_dual(mu: &DiscreteMeasure, cost: &CostKind, scale: f64, f: &[f64]) -> Result<DualCheck> {
    let q = inf_convolution(f, mu, cost, scale)?;
    Ok(DualCheck::from_logs(log_integral_exp(mu, &q), mu.integrate(f)))
}

/// ∫ e^{Qf} dμ · ∫ e^{−f} dμ ≤ 1; `rhs` is 1.
pub fn check_tau(mu: &DiscreteMeasure, cost: &CostKind, scale: f64, f: &[f64]) -> Result<DualCheck> {
    let q = inf_convolution(f, mu, cost, scale)?;
    let neg: Vec<f64> = f.iter().map(|v| -v).collect();
    Ok(DualCheck::from_logs(log_integral_exp(mu, &q) + log_integral_exp(mu, &neg), 0.0))
}

/// Discrete model of the gradient length |∇f|.
#[derive(Clone, Debug, PartialEq)]
pub enum GradientModel {
    /// One-dimensional atoms sorted by coordinate: |∇f|(x) is the root mean
    /// square of the one-sided difference quotients to the adjacent atoms.
    Grid1d,
    /// |∇f|(x) = max over declared neighbors y of |f(x) − f(y)| / |x − y|.
    Graph { neighbors: Vec<Vec<usize>> },
    /// |∇⁻f|(x) = max over declared neighbors y of [f(y) − f(x)]₊ / |x − y|.
    GraphMinus { neighbors: Vec<Vec<usize>> },
}

impl GradientModel {
    /// Path graph over the atoms of a one-dimensional measure.
    pub fn path_neighbors(mu: &DiscreteMeasure) -> Result<Vec<Vec<usize>>> {
        let order = sorted_line(mu)?;
        let mut nb = vec![Vec::new(); mu.len()];
        for w in order.windows(2) {
            nb[w[0]].push(w[1]);
            nb[w[1]].push(w[0]);
        }
        Ok(nb)
    }

    fn neighbors(&self) -> Option<&[Vec<usize>]> {
        match self {
            GradientModel::Grid1d => None,
            GradientModel::Graph { neighbors } | GradientModel::GraphMinus { neighbors } => Some(neighbors),
        }
    }
}

fn sorted_line(mu: &DiscreteMeasure) -> Result<Vec<usize>> {
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, found: mu.dim() });
    }
    let c = mu.coords();
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| c[a].total_cmp(&c[b]));
    Ok(order)
}

fn check_neighbors(mu: &DiscreteMeasure, nb: &[Vec<usize>]) -> Result<()> {
    if nb.len() != mu.len() {
        return Err(Error::LengthMismatch { expected: mu.len(), found: nb.len() });
    }
    for (x, list) in nb.iter().enumerate() {
        if list.iter().any(|&y| y >= mu.len() || y == x) {
            return Err(Error::InvalidParameter(format!("bad neighbor list at atom {x}")));
        }
    }
    Ok(())
}

/// Pointwise gradient length of `f` under `model`.
pub fn gradient_norm(mu: &DiscreteMeasure, f: &[f64], model: &GradientModel) -> Result<Vec<f64>> {
    check_len(mu, f)?;
    match model {
        GradientModel::Grid1d => {
            let order = sorted_line(mu)?;
            let c = mu.coords();
            let mut sum = vec![0.0; mu.len()];
            let mut count = vec![0usize; mu.len()];
            for w in order.windows(2) {
                let s = (f[w[1]] - f[w[0]]) / (c[w[1]] - c[w[0]]);
                for &i in w {
                    sum[i] += s * s;
                    count[i] += 1;
                }
            }
            Ok(sum.iter().zip(&count).map(|(s, &k)| if k == 0 { 0.0 } else { (s / k as f64).sqrt() }).collect())
        }
        GradientModel::Graph { neighbors } | GradientModel::GraphMinus { neighbors } => {
            check_neighbors(mu, neighbors)?;
            let minus = matches!(model, GradientModel::GraphMinus { .. });
            Ok((0..mu.len())
                .map(|x| {
                    neighbors[x]
                        .iter()
                        .map(|&y| {
                            let rho = crate::costs::euclidean(mu.point(x), mu.point(y));
                            let diff = if minus { (f[y] - f[x]).max(0.0) } else { (f[x] - f[y]).abs() };
                            diff / rho
                        })
                        .fold(0.0, f64::max)
                })
                .collect())
        }
    }
}

/// Edges (a, b, w) with E(f) = Σ w·(f(a) − f(b))². For `Grid1d` the edges
/// follow the sorted path.
pub(crate) fn dirichlet_edges(mu: &DiscreteMeasure, model: &GradientModel) -> Result<Vec<(usize, usize, f64)>> {
    let w = mu.weights();
    match model.neighbors() {
        None => {
            let order = sorted_line(mu)?;
            let c = mu.coords();
            let k = order.len();
            let degree = |pos: usize| if pos == 0 || pos + 1 == k { 1.0 } else { 2.0 };
            Ok((0..k.saturating_sub(1))
                .map(|pos| {
                    let (a, b) = (order[pos], order[pos + 1]);
                    let h = c[b] - c[a];
                    (a, b, (w[a] / degree(pos) + w[b] / degree(pos + 1)) / (h * h))
                })
                .collect())
        }
        Some(neighbors) => {
            check_neighbors(mu, neighbors)?;
            let mut acc: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
            for (x, list) in neighbors.iter().enumerate() {
                for &y in list {
                    let rho = crate::costs::euclidean(mu.point(x), mu.point(y));
                    if rho == 0.0 {
                        return Err(Error::InvalidParameter("neighbors at distance zero".into()));
                    }
                    *acc.entry((x.min(y), x.max(y))).or_insert(0.0) += w[x] / (rho * rho);
                }
            }
            Ok(acc.into_iter().map(|((a, b), v)| (a, b, v)).collect())
        }
    }
}

/// Dirichlet energy of `f`: ∫|∇f|² dμ for `Grid1d`, and
/// Σ_x μ(x) Σ_{y∼x} ((f(x) − f(y))/|x − y|)² for the graph models.
pub fn dirichlet_energy(mu: &DiscreteMeasure, f: &[f64], model: &GradientModel) -> Result<f64> {
    check_len(mu, f)?;
    Ok(dirichlet_edges(mu, model)?.iter().map(|&(a, b, w)| w * (f[a] - f[b]) * (f[a] - f[b])).sum())
}

/// Report of the small-t expansion of ∫ e^{Q(tf)} dμ on a line grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SmallTReport {
    pub t_values: Vec<f64>,
    /// (∫ e^{Q(tf)} dμ − e^{t ∫ f dμ}) / t² for each t.
    pub d_values: Vec<f64>,
    /// Fitted limit of `d_values` as t → 0.
    pub coefficient: f64,
    /// ½ Var_μ(f) − (C₂/4) Σ μ(x) g(x)², with g the descent slope of f̃ at x.
    pub predicted: f64,
    /// Largest relative change of the fitted limit when one end of the t grid is dropped.
    pub relative_spread: f64,
    /// 1 / scale.
    pub c2: f64,
    pub variance: f64,
    /// ∫ |∇f|² dμ in the `Grid1d` model.
    pub gradient_energy: f64,
    /// Var_μ(f) − (C₂/2) ∫ |∇f|² dμ; nonpositive when the Poincaré bound holds.
    pub residual: f64,
}

impl SmallTReport {
    /// Fitted limit agrees with the prediction and the variance bound holds.
    pub fn passed(&self, rel_tol: f64) -> bool {
        let scale = self.variance.abs().max(self.c2 * self.gradient_energy).max(1e-300);
        (self.coefficient - self.predicted).abs() <= rel_tol * scale && self.residual <= 1e-12 * scale
    }
}

/// Default t grid for [`small_t_poincare_check`]: 9 points from 1e-1 to 1e-3.
pub fn default_t_list() -> Vec<f64> {
    (0..9).map(|k| 10f64.powf(-1.0 - k as f64 / 4.0)).collect()
}

/// One-dimensional cost profile for the small-t expansion; must be quadratic near 0.
fn line_cost(cost: &CostKind) -> Result<impl Fn(f64) -> f64> {
    let p = match *cost {
        CostKind::Quadratic => 2.0,
        CostKind::Power { p } if p == 2.0 => 2.0,
        CostKind::Alpha { p } => p,
        CostKind::Sg => 1.0,
        _ => {
            return Err(Error::InvalidParameter(format!(
                "small-t expansion needs a cost quadratic at 0, got {cost}"
            )))
        }
    };
    Ok(move |u: f64| alpha(p, u))
}

/// min over y ∈ [lo, hi] of t·(f0 + s·(y − y0)) + scale·c(|x − y|), where c
/// is convex on each side of x and on each side of |x − y| = 1.
fn segment_min(x: f64, lo: f64, hi: f64, f0: f64, y0: f64, s: f64, t: f64, scale: f64, c: &impl Fn(f64) -> f64) -> f64 {
    let g = |y: f64| t * (f0 + s * (y - y0)) + scale * c((x - y).abs());
    let mut cuts = vec![lo, hi];
    for b in [x - 1.0, x, x + 1.0] {
        if b > lo && b < hi {
            cuts.push(b);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut best = g(lo).min(g(hi));
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        // g is convex on [a, b]: golden-section search
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut l, mut r) = (a, b);
        let mut m1 = r - phi * (r - l);
        let mut m2 = l + phi * (r - l);
        let (mut g1, mut g2) = (g(m1), g(m2));
        for _ in 0..120 {
            if g1 <= g2 {
                r = m2;
                m2 = m1;
                g2 = g1;
                m1 = r - phi * (r - l);
                g1 = g(m1);
            } else {
                l = m1;
                m1 = m2;
                g1 = g2;
                m2 = l + phi * (r - l);
                g2 = g(m2);
            }
            if r - l <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        best = best.min(g1).min(g2).min(g(a)).min(g(b));
    }
    best
}

/// Inf-convolution of t·f̃, with f̃ the piecewise-linear interpolant of `f` on
/// the sorted atoms, evaluated at each atom.
fn interpolated_q(coords: &[f64], f: &[f64], order: &[usize], t: f64, scale: f64, c: &impl Fn(f64) -> f64) -> Vec<f64> {
    let k = order.len();
    let xs: Vec<f64> = order.iter().map(|&i| coords[i]).collect();
    let fs: Vec<f64> = order.iter().map(|&i| f[i]).collect();
    let fmin = fs.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut q = vec![0.0; coords.len()];
    for pos in 0..k {
        let x = xs[pos];
        // only y with scale·c(|x − y|) ≤ t·(f(x) − min f) can beat y = x
        let budget = t * (fs[pos] - fmin) / scale;
        let reach = if budget <= 1.0 { budget.sqrt() } else { budget.max(1.0) } + 1e-12;
        let left = xs.partition_point(|&y| y < x - reach).saturating_sub(1);
        let right = (xs.partition_point(|&y| y <= x + reach) + 1).min(k);
        let mut best = t * fs[pos];
        for j in left..right.saturating_sub(1).max(left) {
            let (a, b) = (xs[j], xs[j + 1]);
            let s = (fs[j + 1] - fs[j]) / (b - a);
            best = best.min(segment_min(x, a, b, fs[j], a, s, t, scale, c));
        }
        q[order[pos]] = best;
    }
    q
}

fn fit_limit(ts: &[f64], ds: &[f64]) -> f64 {
    // D(t) ≈ c0 + c1·t + c2·t², least squares with weight 1/t² so the
    // smallest t values dominate
    let k = ts.len();
    if k < 3 {
        let w = vec![1.0; k];
        return weighted_line_fit(ts, ds, &w).map(|(c0, _)| c0).unwrap_or(ds[0]);
    }
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let t_min = ts.iter().cloned().fold(f64::INFINITY, f64::min);
    for (&t, &d) in ts.iter().zip(ds) {
        let w = (t_min / t) * (t_min / t);
        let row = [1.0, t / t_min, (t / t_min) * (t / t_min)];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += w * row[r] * row[c];
            }
            atb[r] += w * row[r] * d;
        }
    }
    let m = nalgebra::Matrix3::from_fn(|r, c| ata[r][c]);
    let b = nalgebra::Vector3::from_fn(|r, _| atb[r]);
    m.lu().solve(&b).map(|x| x[0]).unwrap_or(f64::NAN)
}

/// Small-t expansion of the dual inequality on a one-dimensional grid measure.
///
/// For each t the interpolated inf-convolution Q(tf) is evaluated exactly at
/// the atoms, then D(t) = (∫e^{Q(tf)}dμ − e^{t∫f dμ})/t² is fitted by a
/// quadratic in t. The fitted constant term is compared with
/// ½Var_μ(f) − (C₂/4)∫|∇f|²dμ, where C₂ = 1/scale.
pub fn small_t_poincare_check(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    scale: f64,
    f: &[f64],
    t_list: &[f64],
) -> Result<SmallTReport> {
    check_len(mu, f)?;
    if !(scale > 0.0) || t_list.is_empty() || t_list.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::InvalidParameter("small-t check needs scale > 0 and positive t values".into()));
    }
    let c = line_cost(cost)?;
    let order = sorted_line(mu)?;
    let coords = mu.coords();
    let mean_f = mu.integrate(f);
    let d_values: Vec<f64> = t_list
        .iter()
        .map(|&t| {
            let q = interpolated_q(coords, f, &order, t, scale, &c);
            let e: Vec<f64> = q.iter().map(|v| v.exp_m1()).collect();
            (mu.integrate(&e) - (t * mean_f).exp_m1()) / (t * t)
        })
        .collect();
    let coefficient = fit_limit(t_list, &d_values);
    let mut spread = 0.0f64;
    if t_list.len() >= 5 {
        let mut idx: Vec<usize> = (0..t_list.len()).collect();
        idx.sort_by(|&a, &b| t_list[a].total_cmp(&t_list[b]));
        for sub in [&idx[1..], &idx[..idx.len() - 1]] {
            let ts: Vec<f64> = sub.iter().map(|&i| t_list[i]).collect();
            let ds: Vec<f64> = sub.iter().map(|&i| d_values[i]).collect();
            let c0 = fit_limit(&ts, &ds);
            spread = spread.max((c0 - coefficient).abs() / coefficient.abs().max(1e-300));
        }
    }
    let c2 = 1.0 / scale;
    let var = variance(mu, f)?;
    // descent slope at each atom of the interpolant
    let w = mu.weights();
    let mut descent = 0.0;
    for pos in 0..order.len() {
        let i = order[pos];
        let mut g = 0.0f64;
        if pos + 1 < order.len() {
            let j = order[pos + 1];
            g = g.max(-(f[j] - f[i]) / (coords[j] - coords[i]));
        }
        if pos > 0 {
            let j = order[pos - 1];
            g = g.max((f[i] - f[j]) / (coords[i] - coords[j]));
        }
        descent += w[i] * g * g;
    }
    let gradient_energy = dirichlet_energy(mu, f, &GradientModel::Grid1d)?;
    Ok(SmallTReport {
        t_values: t_list.to_vec(),
        d_values,
        coefficient,
        predicted: 0.5 * var - 0.25 * c2 * descent,
        relative_spread: spread,
        c2,
        variance: var,
        gradient_energy,
        residual: var - 0.5 * c2 * gradient_energy,
    })
}
