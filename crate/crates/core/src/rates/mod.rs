//! Rate functions R(t) = inf { H(ν|μ) : D(ν, μ) > t } over the simplex of
//! measures carried by the support of μ, their brute-force oracle, and the
//! best transport-entropy constants derived from them.
//!
//! The discrepancy D is W_p = T^{1/p} for the quadratic and power costs and
//! the raw optimal cost T for the α_p and sg costs.

mod tails;

pub use tails::{
    ds_lower_bound_check, ds_lower_bound_check_with_cap, empirical_mean_convergence, exact_expectation, exact_tail,
    for_each_type, mc_tail, DsReport, McTail, MeanRow, TailEstimate, DEFAULT_ENUMERATION_CAP,
};

pub(crate) use tails::{exact_distribution, sample_discrepancies, types_for, EVENT_MARGIN};

use rand::Rng;

use crate::costs::CostKind;
use crate::error::{Error, Result};
use crate::functionals::relative_entropy_weights;
use crate::measures::DiscreteMeasure;
use crate::rng::StreamId;
use crate::transport::{solve_weights, DEFAULT_SIZE_CAP};

/// Margin standing in for the strict inequality D > t.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Largest support accepted by [`rate_function_oracle`].
pub const ORACLE_MAX_SUPPORT: usize = 4;

/// Discrepancy between ν and μ used by the rate function for `cost`.
pub fn discrepancy(nu: &DiscreteMeasure, mu: &DiscreteMeasure, cost: &CostKind) -> Result<f64> {
    if nu.dim() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), found: nu.dim() });
    }
    let plan = solve_weights(nu.coords(), nu.weights(), mu.coords(), mu.weights(), mu.dim(), cost, DEFAULT_SIZE_CAP)?;
    Ok(from_cost(cost, plan.total_cost))
}

fn from_cost(cost: &CostKind, t: f64) -> f64 {
    let t = t.max(0.0);
    match cost.metric_exponent() {
        Some(p) if p == 1.0 => t,
        Some(p) if p == 2.0 => t.sqrt(),
        Some(p) => t.powf(1.0 / p),
        None => t,
    }
}

/// μ restricted to its positive-mass atoms, paired with a cost.
pub(crate) struct Target {
    pub mu: DiscreteMeasure,
    pub cost: CostKind,
}

impl Target {
    pub fn new(mu: &DiscreteMeasure, cost: &CostKind) -> Result<Self> {
        cost.validate()?;
        let keep: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
        let coords: Vec<f64> = keep.iter().flat_map(|&i| mu.point(i).to_vec()).collect();
        let weights: Vec<f64> = keep.iter().map(|&i| mu.weights()[i]).collect();
        Ok(Self { mu: DiscreteMeasure::normalized(mu.dim(), coords, weights)?, cost: *cost })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    /// (T, row potentials) for ν with weights `w` on μ's atoms.
    pub fn transport(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        let c = self.mu.coords();
        let plan = solve_weights(c, w, c, self.mu.weights(), self.mu.dim(), &self.cost, DEFAULT_SIZE_CAP)?;
        Ok((plan.total_cost.max(0.0), plan.row_potentials))
    }

    pub fn d_of(&self, t: f64) -> f64 {
        from_cost(&self.cost, t)
    }

    pub fn d(&self, w: &[f64]) -> Result<f64> {
        Ok(self.d_of(self.transport(w)?.0))
    }

    /// D and a subgradient of D with respect to the weights.
    pub fn d_grad(&self, w: &[f64]) -> Result<(f64, f64, Vec<f64>)> {
        let (t, u) = self.transport(w)?;
        let d = self.d_of(t);
        let factor = match self.cost.metric_exponent() {
            Some(p) if t > 0.0 && p != 1.0 => d / (p * t),
            _ => 1.0,
        };
        Ok((d, t, u.iter().map(|v| v * factor).collect()))
    }

    pub fn h(&self, w: &[f64]) -> f64 {
        relative_entropy_weights(w, self.mu.weights())
    }

    /// max over the simplex of D, attained at a vertex since T is convex.
    pub fn max_discrepancy(&self) -> Result<f64> {
        let k = self.k();
        let mut best = 0.0f64;
        for i in 0..k {
            let mut w = vec![0.0; k];
            w[i] = 1.0;
            best = best.max(self.d(&w)?);
        }
        Ok(best)
    }

    pub fn measure(&self, w: &[f64]) -> Result<DiscreteMeasure> {
        self.mu.with_weights(w)
    }
}

/// Minimization strategy for [`rate_function`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RateMethod {
    /// Exterior quadratic penalty, projected gradient, multi-start.
    PenaltyOptimizer,
    /// Exhaustive simplex grid with the given spacing (supports of size ≤ 4).
    GridOracle { resolution: f64 },
}

impl RateMethod {
    pub fn name(&self) -> &'static str {
        match self {
            RateMethod::PenaltyOptimizer => "penalty_optimizer",
            RateMethod::GridOracle { .. } => "grid_oracle",
        }
    }
}

/// Tuning of the penalty optimizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateOptions {
    /// Random Dirichlet starting points.
    pub starts: usize,
    /// Stream for the random starts.
    pub stream: StreamId,
    /// Penalty rounds, the weight growing ×10 per round from 1.
    pub rounds: usize,
    /// Projected-gradient iterations per round.
    pub inner_iterations: usize,
    /// Spacing of the coarse grid used to seed supports of size ≤ 4; 0 disables it.
    pub seed_resolution: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self { starts: 16, stream: StreamId::new(0x5eed, 0), rounds: 8, inner_iterations: 60, seed_resolution: 0.025 }
    }
}

/// One evaluation of the rate function.
#[derive(Clone, Debug, PartialEq)]
pub struct RatePoint {
    pub t: f64,
    pub value: f64,
    pub minimizer: DiscreteMeasure,
    /// D(minimizer, μ).
    pub discrepancy: f64,
    /// Optimal transport cost T(minimizer, μ).
    pub transport_cost: f64,
    /// False when the infimum is only approached (t = 0).
    pub attained: bool,
    pub method: RateMethod,
    /// Certified bound on |value − true infimum| (grid oracle only).
    pub error_bound: Option<f64>,
}

/// R(t) = inf { H(ν|μ) : D(ν, μ) ≥ t + 1e-9 } over ν carried by supp μ.
pub fn rate_function(mu: &DiscreteMeasure, cost: &CostKind, t: f64, method: RateMethod) -> Result<RatePoint> {
    rate_function_with(mu, cost, t, method, &RateOptions::default())
}

pub fn rate_function_with(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    t: f64,
    method: RateMethod,
    opts: &RateOptions,
) -> Result<RatePoint> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("threshold must be finite and nonnegative, got {t}")));
    }
    let target = Target::new(mu, cost)?;
    if t == 0.0 {
        return Ok(RatePoint {
            t,
            value: 0.0,
            minimizer: target.mu.clone(),
            discrepancy: 0.0,
            transport_cost: 0.0,
            attained: false,
            method,
            error_bound: Some(0.0),
        });
    }
    let tau = t + STRICT_MARGIN;
    let max = target.max_discrepancy()?;
    if tau > max {
        return Err(Error::Infeasible { t, max });
    }
    let (w, error_bound) = match method {
        RateMethod::PenaltyOptimizer => (minimize(&target, tau, opts)?, None),
        RateMethod::GridOracle { resolution } => {
            let o = GridOracle::build(&target, resolution)?;
            let r = o.query(tau);
            (r.weights, Some(r.error_bound))
        }
    };
    let (tc, _) = target.transport(&w)?;
    Ok(RatePoint {
        t,
        value: target.h(&w),
        minimizer: target.measure(&w)?,
        discrepancy: target.d_of(tc),
        transport_cost: tc,
        attained: true,
        method,
        error_bound,
    })
}

/// Oracle answer with its certified bracket.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleValue {
    /// Smallest entropy among grid points satisfying the constraint (an upper bound).
    pub value: f64,
    /// Lower bound on the true infimum.
    pub lower: f64,
    pub error_bound: f64,
    pub minimizer: DiscreteMeasure,
}

/// Brute-force rate function: exhaustive grid over the simplex.
pub fn rate_function_oracle(mu: &DiscreteMeasure, cost: &CostKind, t: f64, resolution: f64) -> Result<OracleValue> {
    let target = Target::new(mu, cost)?;
    if target.k() > ORACLE_MAX_SUPPORT {
        return Err(Error::SupportTooLarge { size: target.k(), max: ORACLE_MAX_SUPPORT });
    }
    if t == 0.0 {
        return Ok(OracleValue { value: 0.0, lower: 0.0, error_bound: 0.0, minimizer: target.mu.clone() });
    }
    let tau = t + STRICT_MARGIN;
    let max = target.max_discrepancy()?;
    if tau > max {
        return Err(Error::Infeasible { t, max });
    }
    let o = GridOracle::build(&target, resolution)?;
    let r = o.query(tau);
    Ok(OracleValue { value: r.value, lower: r.lower, error_bound: r.error_bound, minimizer: target.measure(&r.weights)? })
}

struct GridQuery {
    weights: Vec<f64>,
    value: f64,
    lower: f64,
    error_bound: f64,
}

/// Every composition of N = 1/resolution into k parts with its D and H.
pub(crate) struct GridOracle {
    k: usize,
    points: Vec<(Vec<usize>, f64, f64)>,
    steps: usize,
    omega_d: f64,
    omega_h: f64,
}

impl GridOracle {
    fn build(target: &Target, resolution: f64) -> Result<Self> {
        let k = target.k();
        if k > ORACLE_MAX_SUPPORT {
            return Err(Error::SupportTooLarge { size: k, max: ORACLE_MAX_SUPPORT });
        }
        if !(resolution > 0.0 && resolution <= 0.5) {
            return Err(Error::InvalidParameter(format!("grid resolution must lie in (0, 1/2], got {resolution}")));
        }
        let steps = (1.0 / resolution).round().max(1.0) as usize;
        let count = binomial(steps as u64 + k as u64 - 1, k as u64 - 1);
        if count > 5_000_000 {
            return Err(Error::EnumerationCapExceeded { size: count as u128, cap: 5_000_000 });
        }
        let mut points = Vec::with_capacity(count as usize);
        for_each_type(steps, k, |c| points.push(c.to_vec()));
        let evaluated: Vec<(Vec<usize>, f64, f64)> = {
            use rayon::prelude::*;
            points
                .into_par_iter()
                .map(|c| {
                    let w: Vec<f64> = c.iter().map(|&v| v as f64 / steps as f64).collect();
                    let d = target.d(&w).unwrap_or(f64::NAN);
                    let h = target.h(&w);
                    (c, d, h)
                })
                .collect()
        };
        // moduli of continuity over an ℓ₁ displacement of at most k/steps
        let delta = (k as f64 / steps as f64).min(2.0);
        let mu = target.mu.weights();
        let max_cost = (0..k)
            .flat_map(|i| (0..k).map(move |j| (i, j)))
            .map(|(i, j)| target.cost.eval(target.mu.point(i), target.mu.point(j)))
            .fold(0.0, f64::max);
        let omega_d = match target.cost.metric_exponent() {
            // W_p(ν, ν') ≤ diam·TV^{1/p}
            Some(p) => max_cost.powf(1.0 / p) * (0.5 * delta).powf(1.0 / p),
            None => max_cost * 0.5 * delta,
        };
        let per = 1.0 / steps as f64;
        let entropy_modulus = if per < (-1.0f64).exp() { -per * per.ln() } else { (-1.0f64).exp() };
        let max_log = mu.iter().map(|m| m.ln().abs()).fold(0.0, f64::max);
        let omega_h = k as f64 * entropy_modulus + max_log * delta;
        Ok(Self { k, points: evaluated, steps, omega_d, omega_h })
    }

    fn query(&self, tau: f64) -> GridQuery {
        let mut best: Option<(&Vec<usize>, f64)> = None;
        let mut relaxed = f64::INFINITY;
        for (c, d, h) in &self.points {
            if *d >= tau && best.is_none_or(|(_, b)| *h < b) {
                best = Some((c, *h));
            }
            if *d >= tau - self.omega_d {
                relaxed = relaxed.min(*h);
            }
        }
        let (c, value) = best.map(|(c, h)| (c.clone(), h)).unwrap_or((vec![0; self.k], f64::INFINITY));
        let lower = (relaxed - self.omega_h).max(0.0);
        GridQuery {
            weights: c.iter().map(|&v| v as f64 / self.steps as f64).collect(),
            value,
            lower,
            error_bound: value - lower,
        }
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    let mut r: u128 = 1;
    for i in 0..k as u128 {
        r = r * (n as u128 - i) / (i + 1);
    }
    r.min(u64::MAX as u128) as u64
}

const FLOOR: f64 = 1e-13;

/// Euclidean projection onto { w ≥ FLOOR, Σ w = 1 }.
fn project(v: &[f64]) -> Vec<f64> {
    let k = v.len();
    let mass = 1.0 - k as f64 * FLOOR;
    let shifted: Vec<f64> = v.iter().map(|x| x - FLOOR).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &s) in sorted.iter().enumerate() {
        cum += s;
        let candidate = (cum - mass) / (i + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    shifted.iter().map(|x| (x - theta).max(0.0) + FLOOR).collect()
}

/// Smallest s ∈ [0, s_max] with D(μ + s(w − μ)) ≥ tau; D is convex along the
/// ray and vanishes at μ, so the feasible part of the ray is an interval.
fn polish_on_ray(target: &Target, w: &[f64], tau: f64) -> Result<Option<Vec<f64>>> {
    let mu = target.mu.weights();
    let dir: Vec<f64> = w.iter().zip(mu).map(|(a, b)| a - b).collect();
    let mut s_max = f64::INFINITY;
    for (d, m) in dir.iter().zip(mu) {
        if *d < 0.0 {
            s_max = s_max.min(m / -d);
        }
    }
    if !s_max.is_finite() {
        return Ok(None);
    }
    let at = |s: f64| -> Vec<f64> { mu.iter().zip(&dir).map(|(m, d)| (m + s * d).max(0.0)).collect() };
    if target.d(&at(s_max))? < tau {
        return Ok(None);
    }
    let (mut lo, mut hi) = (0.0, s_max);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if target.d(&at(mid))? >= tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(at(hi)))
}

/// Among tilts μ·e^{λg} with g a subgradient of D at `w`, the least-entropy
/// feasible one; None when no tilt reaches the constraint.
fn tilt_step(target: &Target, g: &[f64], tau: f64) -> Result<Option<Vec<f64>>> {
    let mu = target.mu.weights();
    let spread = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - g.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(spread > 0.0) {
        return Ok(None);
    }
    let tilt = |lambda: f64| -> Vec<f64> {
        let top = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = mu.iter().zip(g).map(|(m, gi)| m * (lambda * (gi - top)).exp()).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|r| r / s).collect()
    };
    let mut hi = 1.0 / spread;
    let mut found = false;
    for _ in 0..60 {
        if target.d(&tilt(hi))? >= tau {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return Ok(None);
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if target.d(&tilt(mid))? >= tau {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(tilt(hi)))
}

fn penalty_descent(target: &Target, start: &[f64], tau: f64, opts: &RateOptions) -> Result<Vec<f64>> {
    let mu = target.mu.weights();
    let mut w = project(start);
    let mut rho = 1.0;
    for _ in 0..opts.rounds {
        let phi = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (d, _, gd) = target.d_grad(w)?;
            let viol = (tau - d).max(0.0);
            let h = target.h(w);
            let grad = w
                .iter()
                .zip(mu)
                .zip(&gd)
                .map(|((wi, mi), gi)| (wi / mi).ln() + 1.0 - 2.0 * rho * viol * gi)
                .collect();
            Ok((h + rho * viol * viol, grad))
        };
        let (mut val, mut grad) = phi(&w)?;
        let mut step = 0.1;
        for _ in 0..opts.inner_iterations {
            let mut accepted = false;
            for _ in 0..40 {
                let cand = project(&w.iter().zip(&grad).map(|(a, g)| a - step * g).collect::<Vec<_>>());
                let decrease: f64 = grad.iter().zip(&w).zip(&cand).map(|((g, a), b)| g * (a - b)).sum();
                let (cv, cg) = phi(&cand)?;
                if cv <= val - 1e-4 * decrease {
                    accepted = decrease > 1e-16;
                    w = cand;
                    val = cv;
                    grad = cg;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        rho *= 10.0;
    }
    Ok(w)
}

fn dirichlet_start<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Multi-start penalty minimization; returns the best feasible weights found.
fn minimize(target: &Target, tau: f64, opts: &RateOptions) -> Result<Vec<f64>> {
    let k = target.k();
    let mut rng = opts.stream.rng();
    let mut starts: Vec<Vec<f64>> = (0..opts.starts).map(|_| dirichlet_start(k, &mut rng)).collect();
    for i in 0..k {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        starts.push(v);
    }
    if k <= ORACLE_MAX_SUPPORT && opts.seed_resolution > 0.0 {
        let coarse = GridOracle::build(target, opts.seed_resolution)?;
        let q = coarse.query(tau);
        if q.value.is_finite() {
            starts.push(q.weights);
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let consider = |w: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>| -> Result<()> {
        if target.d(&w)? >= tau {
            let h = target.h(&w);
            if best.as_ref().is_none_or(|(b, _)| h < *b) {
                *best = Some((h, w));
            }
        }
        Ok(())
    };
    for start in starts {
        let Some(seed) = polish_on_ray(target, &start, tau)? else { continue };
        consider(seed.clone(), &mut best)?;
        let descended = penalty_descent(target, &seed, tau, opts)?;
        consider(descended.clone(), &mut best)?;
        let mut current = match polish_on_ray(target, &descended, tau)? {
            Some(p) => p,
            None => seed,
        };
        // fixed-point refinement ν ∝ μ·exp(λ ∂D(ν))
        for _ in 0..30 {
            let (_, _, g) = target.d_grad(&current)?;
            let Some(next) = tilt_step(target, &g, tau)? else { break };
            let improved = target.h(&next) < target.h(&current) - 1e-15;
            consider(current.clone(), &mut best)?;
            if !improved {
                break;
            }
            current = next;
        }
        consider(current, &mut best)?;
    }
    best.map(|(_, w)| w).ok_or(Error::Infeasible { t: tau - STRICT_MARGIN, max: target.max_discrepancy()? })
}

/// A rate function sampled on a grid of thresholds.
#[derive(Clone, Debug, PartialEq)]
pub struct RateCurve {
    pub thresholds: Vec<f64>,
    pub rates: Vec<f64>,
    pub minimizers: Vec<DiscreteMeasure>,
    pub points: Vec<RatePoint>,
    pub method: RateMethod,
    /// |optimizer − oracle| per threshold when both ran.
    pub gap_to_oracle: Option<Vec<f64>>,
}

/// Rate function on each threshold. Because the constraint sets shrink as t
/// grows, a minimizer found for a larger t is also feasible for smaller ones;
/// the curve keeps the better of the two, which makes it nondecreasing.
pub fn rate_curve(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    thresholds: &[f64],
    method: RateMethod,
    opts: &RateOptions,
) -> Result<RateCurve> {
    use rayon::prelude::*;
    let mut points: Vec<RatePoint> = thresholds
        .par_iter()
        .map(|&t| rate_function_with(mu, cost, t, method, opts))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| thresholds[a].total_cmp(&thresholds[b]));
    for w in (0..order.len().saturating_sub(1)).rev() {
        let (i, j) = (order[w], order[w + 1]);
        if points[j].value < points[i].value && thresholds[i] > 0.0 {
            let t = points[i].t;
            points[i] = RatePoint { t, ..points[j].clone() };
        }
    }
    Ok(RateCurve {
        thresholds: thresholds.to_vec(),
        rates: points.iter().map(|p| p.value).collect(),
        minimizers: points.iter().map(|p| p.minimizer.clone()).collect(),
        points,
        method,
        gap_to_oracle: None,
    })
}

/// Penalty curve with the oracle gap filled in (supports of size ≤ 4).
pub fn rate_curve_with_oracle(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    thresholds: &[f64],
    resolution: f64,
    opts: &RateOptions,
) -> Result<(RateCurve, Vec<OracleValue>)> {
    let mut curve = rate_curve(mu, cost, thresholds, RateMethod::PenaltyOptimizer, opts)?;
    let oracle: Vec<OracleValue> = thresholds
        .iter()
        .map(|&t| rate_function_oracle(mu, cost, t, resolution))
        .collect::<Result<_>>()?;
    curve.gap_to_oracle = Some(curve.rates.iter().zip(&oracle).map(|(r, o)| (r - o.value).abs()).collect());
    Ok((curve, oracle))
}

/// Which transport-entropy inequality a constant refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InequalityForm {
    /// T_c(ν, μ) ≤ C·H(ν|μ).
    Linear,
    /// D(ν, μ)² ≤ C·H(ν|μ), e.g. W₁² ≤ C·H.
    Squared,
}

/// Sup-ratio certificate for a transport-entropy constant.
#[derive(Clone, Debug, PartialEq)]
pub struct BestConstant {
    pub constant: f64,
    /// Ratio at each threshold's minimizer.
    pub ratios: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// For W₁ in the squared form, the ν → μ limit 2·sup Var_μ(f) over 1-Lipschitz f.
    pub small_t_limit: Option<f64>,
}

fn ratio(form: InequalityForm, p: &RatePoint) -> f64 {
    if p.value <= 0.0 {
        return 0.0;
    }
    match form {
        InequalityForm::Linear => p.transport_cost / p.value,
        InequalityForm::Squared => p.discrepancy * p.discrepancy / p.value,
    }
}

/// sup over the rate-curve minimizers of the ratio defining `form`. The
/// minimizers are the extremal measures: for each t they have the least
/// entropy among measures at discrepancy t.
pub fn best_constant(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    form: InequalityForm,
    thresholds: &[f64],
    opts: &RateOptions,
) -> Result<BestConstant> {
    let curve = rate_curve(mu, cost, thresholds, RateMethod::PenaltyOptimizer, opts)?;
    let ratios: Vec<f64> = curve.points.iter().map(|p| ratio(form, p)).collect();
    let mut constant = ratios.iter().cloned().fold(0.0, f64::max);
    let small_t_limit = if form == InequalityForm::Squared && *cost == (CostKind::Power { p: 1.0 }) {
        let limit = 2.0 * sup_lipschitz_variance(mu)?;
        constant = constant.max(limit);
        Some(limit)
    } else {
        None
    };
    Ok(BestConstant { constant, ratios, thresholds: thresholds.to_vec(), small_t_limit })
}

/// Transport-entropy constant valid for every ν with D(ν, μ) ≥ t_min.
#[derive(Clone, Debug, PartialEq)]
pub struct CertifiedConstant {
    /// max over cells [t_k, t_{k+1}] of N(t_{k+1}) / R(t_k).
    pub constant: f64,
    /// Plain sup of N(t_k) / R(t_k) over the grid.
    pub sup_ratio: f64,
    pub t_min: f64,
    pub thresholds: Vec<f64>,
    pub rates: Vec<f64>,
}

/// Certifies C in N(D(ν, μ)) ≤ C·H(ν|μ) over {ν : D(ν, μ) ≥ t_min}, where N is
/// the numerator of `form`. Any such ν with D in [t_k, t_{k+1}] has
/// H ≥ R(t_k) and N(D) ≤ N(t_{k+1}), so the cell maxima bound every ratio,
/// not just those at grid points. The thresholds are geometric from t_min
/// to max D.
pub fn certified_constant(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    form: InequalityForm,
    t_min: f64,
    count: usize,
    opts: &RateOptions,
) -> Result<CertifiedConstant> {
    let target = Target::new(mu, cost)?;
    let max = target.max_discrepancy()?;
    let top = max - 2.0 * STRICT_MARGIN;
    if !(t_min > 0.0 && t_min < top) || count < 2 {
        return Err(Error::InvalidParameter(format!(
            "certification needs 0 < t_min < max discrepancy {max} and at least two thresholds"
        )));
    }
    let ratio_step = (top / t_min).powf(1.0 / (count - 1) as f64);
    let thresholds: Vec<f64> = (0..count).map(|k| t_min * ratio_step.powi(k as i32)).collect();
    let curve = rate_curve(mu, cost, &thresholds, RateMethod::PenaltyOptimizer, opts)?;
    let numerator = |d: f64| -> f64 {
        match form {
            InequalityForm::Squared => d * d,
            InequalityForm::Linear => match cost.metric_exponent() {
                Some(p) => d.powf(p),
                None => d,
            },
        }
    };
    let mut constant = 0.0f64;
    let mut sup_ratio = 0.0f64;
    for k in 0..count {
        let upper = if k + 1 < count { thresholds[k + 1] } else { max };
        constant = constant.max(numerator(upper) / curve.rates[k]);
        sup_ratio = sup_ratio.max(numerator(thresholds[k]) / curve.rates[k]);
    }
    Ok(CertifiedConstant { constant, sup_ratio, t_min, thresholds, rates: curve.rates })
}

/// Thresholds spread over (0, max D) for constant certification.
pub fn default_thresholds(mu: &DiscreteMeasure, cost: &CostKind, count: usize) -> Result<Vec<f64>> {
    let max = Target::new(mu, cost)?.max_discrepancy()?;
    Ok((1..=count).map(|i| max * i as f64 / (count as f64 + 1.0)).collect())
}

/// Largest support accepted by [`sup_lipschitz_variance`].
pub const LIPSCHITZ_MAX_SUPPORT: usize = 7;

/// sup Var_μ(f) over f that are 1-Lipschitz for the Euclidean metric on the
/// atoms. Var is convex, so the sup sits at a vertex of the Lipschitz
/// polytope, where a spanning tree of constraints is tight.
pub fn sup_lipschitz_variance(mu: &DiscreteMeasure) -> Result<f64> {
    let target = Target::new(mu, &CostKind::Power { p: 1.0 })?;
    let m = &target.mu;
    let k = m.len();
    if k == 1 {
        return Ok(0.0);
    }
    if k > LIPSCHITZ_MAX_SUPPORT {
        return Err(Error::SupportTooLarge { size: k, max: LIPSCHITZ_MAX_SUPPORT });
    }
    let dist = |i: usize, j: usize| crate::costs::euclidean(m.point(i), m.point(j));
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    let mut best = 0.0f64;
    let mut chosen = Vec::with_capacity(k - 1);
    choose_trees(&pairs, k, 0, &mut chosen, &mut |tree: &[(usize, usize)]| {
        for signs in 0u32..(1 << (k - 1)) {
            // propagate values from atom 0 across the tight edges
            let mut f = vec![f64::NAN; k];
            f[0] = 0.0;
            for _ in 0..k {
                for (e, &(a, b)) in tree.iter().enumerate() {
                    let s = if signs >> e & 1 == 1 { 1.0 } else { -1.0 };
                    if f[a].is_finite() && !f[b].is_finite() {
                        f[b] = f[a] + s * dist(a, b);
                    } else if f[b].is_finite() && !f[a].is_finite() {
                        f[a] = f[b] - s * dist(a, b);
                    }
                }
            }
            let feasible = pairs.iter().all(|&(a, b)| (f[a] - f[b]).abs() <= dist(a, b) * (1.0 + 1e-12));
            if feasible {
                let mean = m.integrate(&f);
                let var: f64 = f.iter().zip(m.weights()).map(|(v, w)| w * (v - mean) * (v - mean)).sum();
                best = best.max(var);
            }
        }
    });
    Ok(best)
}

fn choose_trees(
    pairs: &[(usize, usize)],
    k: usize,
    from: usize,
    chosen: &mut Vec<(usize, usize)>,
    visit: &mut impl FnMut(&[(usize, usize)]),
) {
    if chosen.len() == k - 1 {
        // k - 1 edges without a cycle span the k atoms
        let mut parent: Vec<usize> = (0..k).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                x = p[x];
            }
            x
        }
        for &(a, b) in chosen.iter() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return;
            }
            parent[ra] = rb;
        }
        visit(chosen);
        return;
    }
    for i in from..pairs.len() {
        chosen.push(pairs[i]);
        choose_trees(pairs, k, i + 1, chosen, visit);
        chosen.pop();
    }
}

/// sup over random exponential tilts of μ of the ratio defining `form`;
/// an independent lower estimate of the best constant.
pub fn tilt_family_sup(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    form: InequalityForm,
    count: usize,
    min_discrepancy: f64,
    stream: StreamId,
) -> Result<f64> {
    let target = Target::new(mu, cost)?;
    let k = target.k();
    let mut rng = stream.rng();
    let mut best = 0.0f64;
    for _ in 0..count {
        let amplitude = 10f64.powf(rng.random_range(-3.0..1.0));
        let g: Vec<f64> = (0..k).map(|_| amplitude * (2.0 * rng.random::<f64>() - 1.0)).collect();
        let nu = target.mu.tilt_by(&g)?;
        let w = nu.weights();
        let h = target.h(w);
        let (t, _) = target.transport(w)?;
        let d = target.d_of(t);
        if h <= 0.0 || d < min_discrepancy {
            continue;
        }
        let r = match form {
            InequalityForm::Linear => t / h,
            InequalityForm::Squared => d * d / h,
        };
        best = best.max(r);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    fn kl_bernoulli(q: f64, p: f64) -> f64 {
        q * (q / p).ln() + (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln()
    }

    #[test]
    fn two_point_w1_rate() {
        let mu = two_point();
        let w1 = CostKind::Power { p: 1.0 };
        let r = rate_function(&mu, &w1, 0.2, RateMethod::PenaltyOptimizer).unwrap();
        let expected = kl_bernoulli(0.7, 0.5);
        assert!((expected - 0.08228).abs() < 1e-5);
        assert!((r.value - expected).abs() < 1e-7, "{r:?}");
        let q = r.minimizer.weights()[0];
        assert!((q - 0.7).abs() < 1e-6 || (q - 0.3).abs() < 1e-6);
        assert!(matches!(
            rate_function(&mu, &w1, 0.6, RateMethod::PenaltyOptimizer),
            Err(Error::Infeasible { .. })
        ));
        let zero = rate_function(&mu, &w1, 0.0, RateMethod::PenaltyOptimizer).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(!zero.attained);
    }

    #[test]
    fn oracle_agrees_on_two_points() {
        let mu = two_point();
        let w1 = CostKind::Power { p: 1.0 };
        let o = rate_function_oracle(&mu, &w1, 0.2, 1e-5).unwrap();
        let r = rate_function(&mu, &w1, 0.2, RateMethod::PenaltyOptimizer).unwrap();
        assert!((o.value - r.value).abs() < 1e-4);
        assert!(o.lower <= r.value + 1e-12 && r.value <= o.value + 1e-12);
        assert_eq!(rate_function_oracle(&mu, &w1, 0.0, 0.1).unwrap().value, 0.0);
    }

    #[test]
    fn oracle_support_limit() {
        let mu = DiscreteMeasure::uniform(1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            rate_function_oracle(&mu, &CostKind::Quadratic, 0.1, 0.1),
            Err(Error::SupportTooLarge { .. })
        ));
    }

    #[test]
    fn lipschitz_variance_on_line() {
        let mu = two_point();
        assert!((sup_lipschitz_variance(&mu).unwrap() - 0.25).abs() < 1e-15);
        let mu = DiscreteMeasure::uniform(1, vec![0.0, 1.0, 2.0]).unwrap();
        assert!((sup_lipschitz_variance(&mu).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn projection_lands_on_simplex() {
        let w = project(&[0.7, -0.3, 0.9]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w.iter().all(|&x| x >= FLOOR));
    }
}
