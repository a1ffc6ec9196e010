//! Ground costs, product metrics and the two-level ball geometry.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// α_p(u) = min(u², |u|^p).
#[inline]
pub fn alpha(p: f64, u: f64) -> f64 {
    let a = u.abs();
    if a <= 1.0 {
        a * a
    } else {
        a.powf(p)
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Euclidean distance.
#[inline]
pub fn euclidean(x: &[f64], y: &[f64]) -> f64 {
    sq_dist(x, y).sqrt()
}

/// Shape of a ground cost on ℝ^d.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostKind {
    /// |x − y|₂².
    Quadratic,
    /// |x − y|₂^p, p ≥ 1.
    Power { p: f64 },
    /// Σⱼ α_p(xⱼ − yⱼ), p ∈ [1, 2].
    Alpha { p: f64 },
    /// α₁(|x − y|₂).
    Sg,
}

impl CostKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CostKind::Power { p } if !(p >= 1.0 && p.is_finite()) => {
                Err(Error::InvalidParameter(format!("power cost needs p >= 1, got {p}")))
            }
            CostKind::Alpha { p } if !(1.0..=2.0).contains(&p) => {
                Err(Error::InvalidParameter(format!("alpha cost needs p in [1, 2], got {p}")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            CostKind::Quadratic => sq_dist(x, y),
            CostKind::Power { p } => {
                let d = euclidean(x, y);
                if p == 1.0 {
                    d
                } else if p == 2.0 {
                    d * d
                } else {
                    d.powf(p)
                }
            }
            CostKind::Alpha { p } => x.iter().zip(y).map(|(a, b)| alpha(p, a - b)).sum(),
            CostKind::Sg => alpha(1.0, euclidean(x, y)),
        }
    }

    /// Exponent turning the optimal cost into a distance, when the cost is a
    /// power of the Euclidean metric.
    pub fn metric_exponent(&self) -> Option<f64> {
        match *self {
            CostKind::Quadratic => Some(2.0),
            CostKind::Power { p } => Some(p),
            CostKind::Alpha { .. } | CostKind::Sg => None,
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::Quadratic => write!(f, "quadratic"),
            CostKind::Power { p } => write!(f, "power:p={p}"),
            CostKind::Alpha { p } => write!(f, "alpha:p={p}"),
            CostKind::Sg => write!(f, "sg"),
        }
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ParseCost { input: s.to_string() };
        let t = s.trim();
        let kind = match t {
            "quadratic" => CostKind::Quadratic,
            "sg" => CostKind::Sg,
            _ => {
                let (name, rest) = t.split_once(':').ok_or_else(bad)?;
                let value = rest.trim().strip_prefix("p=").ok_or_else(bad)?;
                let p: f64 = value.trim().parse().map_err(|_| bad())?;
                match name.trim() {
                    "power" => CostKind::Power { p },
                    "alpha" => CostKind::Alpha { p },
                    _ => return Err(bad()),
                }
            }
        };
        kind.validate().map_err(|_| bad())?;
        Ok(kind)
    }
}

/// How a cost on ℝ^d extends to n-tuples of points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProductRule {
    /// Σᵢ c(xⁱ, yⁱ) over `factors` blocks.
    Sum { factors: usize },
    /// ρ_pⁿ(x, y) = (Σᵢ |xⁱ − yⁱ|₂^p)^{1/p} over `factors` blocks; the cost kind is ignored.
    LpAggregate { factors: usize, p: f64 },
}

/// A ground cost together with its product extension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostSpec {
    pub kind: CostKind,
    pub rule: ProductRule,
}

impl CostSpec {
    pub fn new(kind: CostKind) -> Self {
        Self { kind, rule: ProductRule::Sum { factors: 1 } }
    }

    /// Additive extension of `kind` to `factors` blocks.
    pub fn additive(kind: CostKind, factors: usize) -> Self {
        Self { kind, rule: ProductRule::Sum { factors } }
    }

    pub fn factors(&self) -> usize {
        match self.rule {
            ProductRule::Sum { factors } | ProductRule::LpAggregate { factors, .. } => factors,
        }
    }

    /// Cost between two points of (ℝ^d)ⁿ given as flat vectors of length n·d.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
        }
        let n = self.factors();
        if n == 0 || x.len() % n != 0 {
            return Err(Error::DimensionMismatch { expected: n, found: x.len() });
        }
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.rule {
            ProductRule::Sum { factors: 1 } => self.kind.eval(x, y),
            ProductRule::Sum { factors } => {
                let d = x.len() / factors;
                x.chunks_exact(d).zip(y.chunks_exact(d)).map(|(a, b)| self.kind.eval(a, b)).sum()
            }
            ProductRule::LpAggregate { factors, p } => {
                rho_p_n_unchecked(x, y, x.len() / factors, p)
            }
        }
    }
}

impl From<CostKind> for CostSpec {
    fn from(kind: CostKind) -> Self {
        Self::new(kind)
    }
}

impl fmt::Display for CostSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)
    }
}

impl FromStr for CostSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(Self::new(s.parse()?))
    }
}

/// Anything that can price moving a unit of mass from `x` to `y`.
pub trait GroundCost: Sync {
    fn cost(&self, x: &[f64], y: &[f64]) -> f64;
}

impl GroundCost for CostKind {
    #[inline]
    fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval(x, y)
    }
}

impl GroundCost for CostSpec {
    #[inline]
    fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        self.eval_unchecked(x, y)
    }
}

impl<F: Fn(&[f64], &[f64]) -> f64 + Sync> GroundCost for F {
    #[inline]
    fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        self(x, y)
    }
}

/// ρ_pⁿ(x, y) = (Σᵢ |xⁱ − yⁱ|₂^p)^{1/p} for flat n-tuples of points in ℝ^d.
pub fn rho_p_n(x: &[f64], y: &[f64], d: usize, p: f64) -> Result<f64> {
    if d == 0 || x.len() != y.len() || x.len() % d != 0 {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("rho_p_n needs p >= 1, got {p}")));
    }
    Ok(rho_p_n_unchecked(x, y, d, p))
}

fn rho_p_n_unchecked(x: &[f64], y: &[f64], d: usize, p: f64) -> f64 {
    let dists = x.chunks_exact(d).zip(y.chunks_exact(d)).map(|(a, b)| euclidean(a, b));
    if p == 2.0 {
        dists.map(|r| r * r).sum::<f64>().sqrt()
    } else if p == 1.0 {
        dists.sum()
    } else {
        dists.map(|r| r.powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Parameters of the two-level ball B_{2,p}(r) ⊂ (ℝ^d)ⁿ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoLevelBallSpec {
    pub n: usize,
    pub d: usize,
    pub p: f64,
    pub r: f64,
}

/// x ∈ B_{2,p}(r), i.e. Σᵢⱼ α_p(xⁱⱼ) ≤ r.
pub fn in_two_level_ball(x: &[f64], spec: &TwoLevelBallSpec) -> Result<bool> {
    if x.len() != spec.n * spec.d {
        return Err(Error::DimensionMismatch { expected: spec.n * spec.d, found: x.len() });
    }
    Ok(x.iter().map(|&u| alpha(spec.p, u)).sum::<f64>() <= spec.r)
}

/// x ∈ D_{2,1}(r), i.e. Σᵢ α₁(|xⁱ|₂) ≤ r for blocks of size `d`.
pub fn in_d21_ball(x: &[f64], d: usize, r: f64) -> Result<bool> {
    if d == 0 || x.len() % d != 0 {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    let zero = vec![0.0; d];
    Ok(x.chunks_exact(d).map(|b| alpha(1.0, euclidean(b, &zero))).sum::<f64>() <= r)
}

/// Certified bracket for the distance-type quantity
/// V = min { ‖x − u‖_p^p : ‖u‖₂² ≤ r } behind Minkowski-sum membership.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinkowskiCertificate {
    /// Lower bound on V from a Lagrangian dual value.
    pub lower: f64,
    /// Upper bound on V from a feasible split.
    pub upper: f64,
    pub member: bool,
}

/// Relative tolerance of the Minkowski membership decision.
pub const MINKOWSKI_TOLERANCE: f64 = 1e-9;

/// x ∈ √r B₂ + r^{1/p} B_p, with B_p the unit ℓ_p ball of the flattened
/// coordinate vector.
pub fn in_minkowski_sum(x: &[f64], r: f64, p: f64) -> bool {
    minkowski_certificate(x, r, p).member
}

/// Decide Minkowski-sum membership by splitting x = u + v with ‖u‖₂² ≤ r and
/// minimizing ‖v‖_p^p through its Lagrangian; membership holds iff V ≤ r.
pub fn minkowski_certificate(x: &[f64], r: f64, p: f64) -> MinkowskiCertificate {
    let a: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    let lp = |u: &[f64]| -> f64 { a.iter().zip(u).map(|(ak, uk)| (ak - uk).max(0.0).powf(p)).sum() };
    let norm2: f64 = a.iter().map(|v| v * v).sum();
    if norm2 <= r {
        return MinkowskiCertificate { lower: 0.0, upper: 0.0, member: true };
    }
    if r <= 0.0 {
        let v = lp(&vec![0.0; a.len()]);
        return MinkowskiCertificate { lower: v, upper: v, member: v <= 0.0 };
    }
    // minimizer of (a − u)^p + λu² over u ∈ [0, a]
    let split = |lambda: f64, ak: f64| -> f64 {
        if ak == 0.0 {
            return 0.0;
        }
        if p == 1.0 {
            (0.5 / lambda).min(ak)
        } else if p == 2.0 {
            ak / (1.0 + lambda)
        } else {
            // safeguarded Newton on the increasing stationarity condition
            let (mut lo, mut hi) = (0.0, ak);
            let mut u = 0.5 * ak;
            for _ in 0..100 {
                let g = 2.0 * lambda * u - p * (ak - u).powf(p - 1.0);
                if g < 0.0 {
                    lo = u;
                } else {
                    hi = u;
                }
                let slope = 2.0 * lambda + p * (p - 1.0) * (ak - u).powf(p - 2.0);
                let mut next = u - g / slope;
                if !(next > lo && next < hi) {
                    next = 0.5 * (lo + hi);
                }
                if (next - u).abs() <= 1e-15 * ak {
                    return next;
                }
                u = next;
            }
            u
        }
    };
    let evaluate = |lambda: f64| -> (f64, f64, f64) {
        let u: Vec<f64> = a.iter().map(|&ak| split(lambda, ak)).collect();
        let u2: f64 = u.iter().map(|v| v * v).sum();
        let primal = lp(&u);
        (u2, primal, primal + lambda * (u2 - r))
    };
    let tol = MINKOWSKI_TOLERANCE * r.max(1.0);
    let mut hi = 1.0;
    while evaluate(hi).0 > r {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    let mut lower = 0.0f64;
    let mut upper = f64::INFINITY;
    for _ in 0..200 {
        let (u2h, primal_h, dual_h) = evaluate(hi);
        lower = lower.max(dual_h);
        if u2h <= r {
            upper = upper.min(primal_h);
        }
        if upper <= r || lower > r + tol || upper - lower <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let (u2, primal, dual) = evaluate(mid);
        lower = lower.max(dual);
        if u2 <= r {
            upper = upper.min(primal);
            hi = mid;
        } else {
            lo = mid;
        }
    }
    MinkowskiCertificate { lower, upper, member: upper <= r + tol }
}
