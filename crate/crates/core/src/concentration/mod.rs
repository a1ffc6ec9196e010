//! Concentration profiles of product measures: Marton's bound from a
//! transport constant, exact set enlargements on small product spaces, and
//! tail profiles of the empirical transport statistic F_n = D(L_n, μ).

mod experiments;

pub use experiments::{
    equivalence_experiment, equivalence_round_trip, two_level_experiment, Check, Direction, EquivalenceConfig,
    EquivalenceReport, NFit, RoundTrip, TwoLevelConfig, TwoLevelReport,
};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::costs::{alpha, euclidean, minkowski_certificate, CostKind};
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, ProductSpec};
use crate::rates::{exact_distribution, sample_discrepancies, types_for, Target, EVENT_MARGIN};
use crate::rng::StreamId;
use crate::stats::{self, wilson_interval, Z95};

/// Largest outcome count for which pairwise enlargement radii are tabulated.
const PAIRWISE_TABLE_CAP: usize = 2048;

/// Largest number of types for which tails are computed exactly.
pub const EXACT_TYPE_CAP: u128 = 200_000;

/// Shape of a concentration bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundShape {
    /// μⁿ(Aʳ) ≥ 1 − b·e^{−a(r−r₀)²} for r ≥ r₀.
    Gaussian,
    /// μⁿ(Aʳ) ≥ 1 − b·e^{−a(r−r₀)}.
    Exponential,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileParams {
    pub a: f64,
    pub b: f64,
    pub r0: f64,
    pub shape: BoundShape,
}

impl ProfileParams {
    /// Guaranteed upper bound on μⁿ((Aʳ)ᶜ), capped at 1.
    pub fn tail_bound(&self, r: f64) -> f64 {
        if self.a.is_infinite() {
            return if r > self.r0 { 0.0 } else { 1.0 };
        }
        let exponent = match self.shape {
            BoundShape::Gaussian => {
                if r < self.r0 {
                    return 1.0;
                }
                self.a * (r - self.r0) * (r - self.r0)
            }
            BoundShape::Exponential => self.a * (r - self.r0),
        };
        (self.b * (-exponent).exp()).min(1.0)
    }

    /// Guaranteed lower bound on μⁿ(Aʳ).
    pub fn lower_bound(&self, r: f64) -> f64 {
        1.0 - self.tail_bound(r)
    }
}

/// Marton's profile from W₁(ν, μ) ≤ √(C·H(ν|μ)): a = 1/C, b = 1, r₀ = √(C log 2).
/// C = 0 (a point mass) gives the trivial profile.
pub fn marton_profile(c: f64) -> Result<ProfileParams> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("Marton constant must be finite and nonnegative, got {c}")));
    }
    Ok(ProfileParams { a: 1.0 / c, b: 1.0, r0: (c * std::f64::consts::LN_2).sqrt(), shape: BoundShape::Gaussian })
}

/// Two-level profile implied by T_{2,p}(C): b = 2, a = 1/(2C).
pub fn two_level_profile(c: f64) -> Result<ProfileParams> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("transport constant must be finite and nonnegative, got {c}")));
    }
    Ok(ProfileParams { a: 1.0 / (2.0 * c), b: 2.0, r0: 0.0, shape: BoundShape::Exponential })
}

/// How a set A ⊂ (ℝ^d)ⁿ is enlarged to Aʳ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Enlargement {
    /// {x : ρ_pⁿ(x, A) ≤ r}.
    Rho { p: f64 },
    /// A + B_{2,p}(r), the ball of Σᵢⱼ α_p(xⁱⱼ) ≤ r.
    TwoLevel { p: f64 },
    /// A + D_{2,1}(r), the ball of Σᵢ α₁(|xⁱ|₂) ≤ r.
    D21,
    /// A + √r·B₂ + r^{1/p}·B_p.
    Minkowski { p: f64 },
}

impl Enlargement {
    fn validate(&self) -> Result<()> {
        match *self {
            Enlargement::Rho { p } | Enlargement::TwoLevel { p } | Enlargement::Minkowski { p } if !(p >= 1.0) => {
                Err(Error::InvalidParameter(format!("enlargement exponent must be at least 1, got {p}")))
            }
            Enlargement::TwoLevel { p } | Enlargement::Minkowski { p } if p > 2.0 => {
                Err(Error::InvalidParameter(format!("two-level exponent must lie in [1, 2], got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Enlargement::Rho { p } => format!("rho_{p}"),
            Enlargement::TwoLevel { p } => format!("two_level_{p}"),
            Enlargement::D21 => "d21".into(),
            Enlargement::Minkowski { p } => format!("minkowski_{p}"),
        }
    }

    /// Smallest r with `diff` inside the r-ball of this enlargement.
    fn radius(&self, diff: &[f64], d: usize) -> f64 {
        let zero = vec![0.0; d];
        match *self {
            Enlargement::Rho { p } => {
                let s: f64 = diff.chunks_exact(d).map(|b| euclidean(b, &zero).powf(p)).sum();
                s.powf(1.0 / p)
            }
            Enlargement::TwoLevel { p } => diff.iter().map(|&u| alpha(p, u)).sum(),
            Enlargement::D21 => diff.chunks_exact(d).map(|b| alpha(1.0, euclidean(b, &zero))).sum(),
            Enlargement::Minkowski { p } => {
                // B_{2,p}(r) lies inside the Minkowski ball, so r = Σ α_p(u) is a member
                let mut hi: f64 = diff.iter().map(|&u| alpha(p, u)).sum();
                if hi == 0.0 {
                    return 0.0;
                }
                while !minkowski_certificate(diff, hi, p).member {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if minkowski_certificate(diff, mid, p).member {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                hi
            }
        }
    }
}

/// Sets A with μⁿ(A) ≥ 1/2 to enlarge.
#[derive(Clone, Debug, PartialEq)]
pub enum SetFamily {
    /// `count` random sets of mass at least 1/2: half grown in uniformly
    /// random order, half along a random direction with noise.
    RandomHalf { count: usize },
    /// {x : D(L_n^x, μ) ≤ median}.
    SublevelFn { cost: CostKind },
    /// The whole product space.
    Whole,
}

impl SetFamily {
    pub fn name(&self) -> String {
        match self {
            SetFamily::RandomHalf { count } => format!("random_half({count})"),
            SetFamily::SublevelFn { cost } => format!("sublevel_fn({cost})"),
            SetFamily::Whole => "whole".into(),
        }
    }
}

/// Observed enlargement masses against a guaranteed profile.
#[derive(Clone, Debug, PartialEq)]
pub struct ConcentrationProfile {
    pub r_values: Vec<f64>,
    /// Guaranteed lower bounds on μⁿ(Aʳ).
    pub lower_bounds: Vec<f64>,
    /// Exact or estimated μⁿ(Aʳ), the minimum over the tested sets.
    pub observed: Vec<f64>,
    /// 95% intervals of `observed` when estimated.
    pub ci: Option<Vec<(f64, f64)>>,
    pub params: ProfileParams,
    pub family: String,
    pub sets_tested: usize,
    /// (set, r) pairs where the observation falls below the guarantee.
    pub violations: usize,
    /// min over sets and r of observed − guaranteed (using the CI upper end when estimated).
    pub worst_margin: f64,
}

/// Exact μⁿ(Aʳ) on the enumerated product space for every set of `family`.
#[allow(clippy::too_many_arguments)]
pub fn exact_product_concentration(
    mu: &DiscreteMeasure,
    n: usize,
    enlargement: &Enlargement,
    family: &SetFamily,
    r_list: &[f64],
    params: &ProfileParams,
    cap: u128,
    stream: StreamId,
) -> Result<ConcentrationProfile> {
    enlargement.validate()?;
    let d = mu.dim();
    let spec = ProductSpec::new(mu.clone(), n)?;
    let outcomes = spec.outcomes(cap)?;
    let m = outcomes.len();
    let probs: Vec<f64> = outcomes.iter().map(|(_, p)| *p).collect();
    let flat: Vec<Vec<f64>> =
        outcomes.iter().map(|(idx, _)| idx.iter().flat_map(|&i| mu.point(i).to_vec()).collect()).collect();
    let sets = build_sets(mu, n, &outcomes, &flat, family, stream)?;

    let pair = |x: usize, a: usize| -> f64 {
        let diff: Vec<f64> = flat[x].iter().zip(&flat[a]).map(|(u, v)| u - v).collect();
        enlargement.radius(&diff, d)
    };
    let table: Option<Vec<f64>> = if m <= PAIRWISE_TABLE_CAP {
        Some(match enlargement {
            Enlargement::Minkowski { .. } => {
                // the radius depends only on the sorted absolute differences
                let mut cache: HashMap<Vec<u64>, f64> = HashMap::new();
                let mut t = vec![0.0; m * m];
                for x in 0..m {
                    for a in 0..m {
                        let mut key: Vec<f64> = flat[x].iter().zip(&flat[a]).map(|(u, v)| (u - v).abs()).collect();
                        key.sort_by(f64::total_cmp);
                        let bits: Vec<u64> = key.iter().map(|v| v.to_bits()).collect();
                        t[x * m + a] = *cache.entry(bits).or_insert_with(|| enlargement.radius(&key, d));
                    }
                }
                t
            }
            _ => (0..m * m).into_par_iter().map(|e| pair(e / m, e % m)).collect(),
        })
    } else {
        None
    };

    let mut observed = vec![f64::INFINITY; r_list.len()];
    let lower_bounds: Vec<f64> = r_list.iter().map(|&r| params.lower_bound(r)).collect();
    let mut violations = 0;
    let mut worst_margin = f64::INFINITY;
    for set in &sets {
        let members: Vec<usize> = (0..m).filter(|&i| set[i]).collect();
        let gap: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|x| {
                if set[x] {
                    return 0.0;
                }
                members
                    .iter()
                    .map(|&a| match &table {
                        Some(t) => t[x * m + a],
                        None => pair(x, a),
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        for (j, &r) in r_list.iter().enumerate() {
            let tol = 1e-12 * r.max(1.0);
            let terms: Vec<f64> = (0..m).filter(|&x| gap[x] <= r + tol).map(|x| probs[x]).collect();
            let mass = stats::pairwise_sum(&terms).min(1.0);
            observed[j] = observed[j].min(mass);
            let margin = mass - lower_bounds[j];
            worst_margin = worst_margin.min(margin);
            if margin < -1e-12 {
                violations += 1;
            }
        }
    }
    Ok(ConcentrationProfile {
        r_values: r_list.to_vec(),
        lower_bounds,
        observed,
        ci: None,
        params: *params,
        family: format!("{} under {}", family.name(), enlargement.name()),
        sets_tested: sets.len(),
        violations,
        worst_margin,
    })
}

fn build_sets(
    mu: &DiscreteMeasure,
    n: usize,
    outcomes: &[(Vec<usize>, f64)],
    flat: &[Vec<f64>],
    family: &SetFamily,
    stream: StreamId,
) -> Result<Vec<Vec<bool>>> {
    let m = outcomes.len();
    match family {
        SetFamily::Whole => Ok(vec![vec![true; m]]),
        SetFamily::SublevelFn { cost } => {
            let target = Target::new(mu, cost)?;
            let k = mu.len();
            let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
            let mut f = Vec::with_capacity(m);
            for (idx, _) in outcomes {
                let mut counts = vec![0usize; k];
                for &i in idx {
                    counts[i] += 1;
                }
                let value = match cache.get(&counts) {
                    Some(v) => *v,
                    None => {
                        // zero-mass atoms of μ never occur in outcomes of positive probability
                        let w: Vec<f64> = (0..k)
                            .filter(|&i| mu.weights()[i] > 0.0)
                            .map(|i| counts[i] as f64 / n as f64)
                            .collect();
                        let v = if w.iter().sum::<f64>() < 1.0 - 1e-12 { f64::INFINITY } else { target.d(&w)? };
                        cache.insert(counts, v);
                        v
                    }
                };
                f.push(value);
            }
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
            let mut acc = 0.0;
            let mut median = f64::INFINITY;
            for &i in &order {
                acc += outcomes[i].1;
                if acc >= 0.5 - 1e-12 {
                    median = f[i];
                    break;
                }
            }
            Ok(vec![f.iter().map(|&v| v <= median + EVENT_MARGIN).collect()])
        }
        SetFamily::RandomHalf { count } => {
            let base = stream.labeled("random-half");
            let len = flat.first().map_or(0, |v| v.len());
            let sets = (0..*count as u64)
                .map(|i| {
                    let mut rng = base.substream(i).rng();
                    let mut order: Vec<usize> = (0..m).collect();
                    if i % 2 == 0 {
                        order.shuffle(&mut rng);
                    } else {
                        let theta: Vec<f64> = (0..len).map(|_| rng.random::<f64>() - 0.5).collect();
                        let noise = 0.5 * rng.random::<f64>();
                        let key: Vec<f64> = flat
                            .iter()
                            .map(|x| x.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + noise * rng.random::<f64>())
                            .collect();
                        order.sort_by(|&a, &b| key[a].total_cmp(&key[b]));
                    }
                    let mut set = vec![false; m];
                    let mut acc = 0.0;
                    for &x in &order {
                        if acc >= 0.5 {
                            break;
                        }
                        set[x] = true;
                        acc += outcomes[x].1;
                    }
                    set
                })
                .collect();
            Ok(sets)
        }
    }
}

/// Law of the statistic D(L_n, μ): exact by types or sampled.
pub(crate) enum Law {
    Exact { values: Vec<f64>, probs: Vec<f64> },
    Sampled { values: Vec<f64> },
}

impl Law {
    pub(crate) fn build(target: &Target, n: usize, source: &TailSource) -> Result<Self> {
        match *source {
            TailSource::Exact => {
                let (values, probs) = exact_distribution(target, n)?;
                Ok(Law::Exact { values, probs })
            }
            TailSource::MonteCarlo { trials, stream } => {
                Ok(Law::Sampled { values: sample_discrepancies(target, n, trials, stream)? })
            }
        }
    }

    /// Smallest m with P(D ≤ m) ≥ 1/2 (exact) or the sample median.
    pub(crate) fn median(&self) -> f64 {
        match self {
            Law::Exact { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if acc >= 0.5 - 1e-12 {
                        return *v;
                    }
                }
                values.last().copied().unwrap_or(0.0)
            }
            Law::Sampled { values } => stats::median(values),
        }
    }

    /// (P(D > s) or P(D ≥ s), interval, hits).
    fn tail(&self, s: f64, inclusive: bool) -> (f64, (f64, f64), Option<u64>) {
        let hit = |v: f64| if inclusive { v >= s - EVENT_MARGIN } else { v > s + EVENT_MARGIN };
        match self {
            Law::Exact { values, probs } => {
                let terms: Vec<f64> = values.iter().zip(probs).filter(|(v, _)| hit(**v)).map(|(_, p)| *p).collect();
                let p = stats::pairwise_sum(&terms).min(1.0);
                (p, (p, p), None)
            }
            Law::Sampled { values } => {
                let hits = values.iter().filter(|v| hit(**v)).count() as u64;
                let trials = values.len() as u64;
                (hits as f64 / trials as f64, wilson_interval(hits, trials, Z95), Some(hits))
            }
        }
    }

    fn trials(&self) -> Option<u64> {
        match self {
            Law::Exact { .. } => None,
            Law::Sampled { values } => Some(values.len() as u64),
        }
    }
}

/// Where tail probabilities come from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailSource {
    /// Type-class enumeration.
    Exact,
    MonteCarlo { trials: u64, stream: StreamId },
}

impl TailSource {
    /// Exact when the type count allows it, Monte Carlo otherwise.
    pub fn prefer_exact(k: usize, n: usize, trials: u64, stream: StreamId) -> Self {
        if types_for(n, k) <= EXACT_TYPE_CAP {
            TailSource::Exact
        } else {
            TailSource::MonteCarlo { trials, stream }
        }
    }
}

/// Tail probabilities of a statistic at thresholds indexed by r.
#[derive(Clone, Debug, PartialEq)]
pub struct TailProfile {
    pub n: usize,
    pub r_values: Vec<f64>,
    /// Event thresholds s(r) on the statistic.
    pub thresholds: Vec<f64>,
    pub tails: Vec<f64>,
    pub ci: Vec<(f64, f64)>,
    pub hits: Option<Vec<u64>>,
    pub trials: Option<u64>,
    pub median: f64,
    pub mean: f64,
    pub exact: bool,
}

impl TailProfile {
    fn from_law(law: &Law, n: usize, r_list: &[f64], threshold: impl Fn(f64, f64) -> f64, inclusive: bool) -> Self {
        let median = law.median();
        let mean = match law {
            Law::Exact { values, probs } => {
                stats::pairwise_sum(&values.iter().zip(probs).map(|(v, p)| v * p).collect::<Vec<_>>())
            }
            Law::Sampled { values } => stats::mean(values),
        };
        let thresholds: Vec<f64> = r_list.iter().map(|&r| threshold(median, r)).collect();
        let rows: Vec<_> = thresholds.iter().map(|&s| law.tail(s, inclusive)).collect();
        let hits = law.trials().map(|_| rows.iter().map(|r| r.2.unwrap_or(0)).collect());
        TailProfile {
            n,
            r_values: r_list.to_vec(),
            thresholds,
            tails: rows.iter().map(|r| r.0).collect(),
            ci: rows.iter().map(|r| r.1).collect(),
            hits,
            trials: law.trials(),
            median,
            mean,
            exact: matches!(law, Law::Exact { .. }),
        }
    }
}

/// P(F_n > m_n + r/√n) for F_n = D(L_n, μ) and m_n its median.
pub fn sublevel_tails(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    n: usize,
    r_list: &[f64],
    source: &TailSource,
) -> Result<TailProfile> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let target = Target::new(mu, cost)?;
    let law = Law::build(&target, n, source)?;
    let scale = (n as f64).sqrt();
    Ok(TailProfile::from_law(&law, n, r_list, |m, r| m + r / scale, false))
}

/// P(T(L_n, μ) ≥ 2m_n + 288·r/n), the event of the two-level converse.
pub(crate) fn two_level_tails(target: &Target, n: usize, r_list: &[f64], source: &TailSource) -> Result<TailProfile> {
    let law = Law::build(target, n, source)?;
    Ok(TailProfile::from_law(&law, n, r_list, |m, r| 2.0 * m + 288.0 * r / n as f64, true))
}

/// A profile fitted to observed tails.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FittedTail {
    pub params: ProfileParams,
    /// Weighted mean squared residual of log tails.
    pub residual: f64,
    pub points: usize,
    /// Thresholds with zero observed tail, left out of the fit.
    pub censored: usize,
    pub b_clamped: bool,
}

/// Bounds on b in fitted profiles.
pub const FIT_B_RANGE: (f64, f64) = (0.5, 2.0 * std::f64::consts::E);

/// Weighted least squares of log tail against (r − r₀)² (Gaussian) or r
/// (exponential, r₀ = 0). r₀ is scanned over a grid; b is clamped to
/// [`FIT_B_RANGE`] and a refitted when the clamp binds.
pub fn fit_tail(r: &[f64], tails: &[f64], weights: &[f64], shape: BoundShape) -> Option<FittedTail> {
    let censored = tails.iter().filter(|&&t| t <= 0.0).count();
    let usable: Vec<usize> = (0..r.len()).filter(|&i| tails[i] > 0.0 && weights[i] > 0.0).collect();
    if usable.len() < 3 {
        return None;
    }
    let r_max = usable.iter().map(|&i| r[i].abs()).fold(0.0, f64::max);
    let r0_grid: Vec<f64> = match shape {
        BoundShape::Gaussian => (0..=200).map(|j| -0.5 * r_max + r_max * j as f64 / 200.0).collect(),
        BoundShape::Exponential => vec![0.0],
    };
    let (lo_b, hi_b) = (FIT_B_RANGE.0.ln(), FIT_B_RANGE.1.ln());
    let mut best: Option<FittedTail> = None;
    for r0 in r0_grid {
        let pts: Vec<usize> = usable.iter().copied().filter(|&i| r[i] >= r0).collect();
        if pts.len() < 3 {
            continue;
        }
        let x: Vec<f64> = pts
            .iter()
            .map(|&i| match shape {
                BoundShape::Gaussian => (r[i] - r0) * (r[i] - r0),
                BoundShape::Exponential => r[i] - r0,
            })
            .collect();
        let y: Vec<f64> = pts.iter().map(|&i| tails[i].ln()).collect();
        let w: Vec<f64> = pts.iter().map(|&i| weights[i]).collect();
        let Some((c0, c1)) = stats::weighted_line_fit(&x, &y, &w) else { continue };
        let mut a = -c1;
        let mut ln_b = c0;
        let clamped = !(lo_b..=hi_b).contains(&ln_b);
        if clamped {
            ln_b = ln_b.clamp(lo_b, hi_b);
            let num: f64 = x.iter().zip(&y).zip(&w).map(|((xi, yi), wi)| wi * xi * (ln_b - yi)).sum();
            let den: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi * xi).sum();
            a = num / den;
        }
        if !(a > 0.0 && a.is_finite()) {
            continue;
        }
        let sw: f64 = w.iter().sum();
        let residual =
            x.iter().zip(&y).zip(&w).map(|((xi, yi), wi)| wi * (yi - ln_b + a * xi).powi(2)).sum::<f64>() / sw;
        if best.is_none_or(|b| residual < b.residual) {
            best = Some(FittedTail {
                params: ProfileParams { a, b: ln_b.exp(), r0, shape },
                residual,
                points: pts.len(),
                censored,
                b_clamped: clamped,
            });
        }
    }
    best
}

/// Fit weights for a tail profile: 1 for exact tails, hit counts otherwise.
pub fn fit_weights(profile: &TailProfile) -> Vec<f64> {
    match &profile.hits {
        Some(h) => h.iter().map(|&v| v as f64).collect(),
        None => vec![1.0; profile.tails.len()],
    }
}

/// Monte Carlo profile of the sublevel family {F_n ≤ m̂_n} and its fit.
#[derive(Clone, Debug, PartialEq)]
pub struct McProfile {
    pub tails: TailProfile,
    pub fit: Option<FittedTail>,
    /// 1 − tail against `reference` when given, else against the fit.
    pub profile: ConcentrationProfile,
}

pub fn mc_concentration_profile(
    mu: &DiscreteMeasure,
    n: usize,
    cost: &CostKind,
    r_list: &[f64],
    trials: u64,
    stream: StreamId,
    reference: Option<ProfileParams>,
) -> Result<McProfile> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let tails = sublevel_tails(mu, cost, n, r_list, &TailSource::MonteCarlo { trials, stream })?;
    let fit = fit_tail(&tails.r_values, &tails.tails, &fit_weights(&tails), BoundShape::Gaussian);
    let params = reference.or(fit.map(|f| f.params)).unwrap_or(ProfileParams {
        a: f64::INFINITY,
        b: 1.0,
        r0: 0.0,
        shape: BoundShape::Gaussian,
    });
    let profile = profile_from_tails(&tails, &params, "sublevel_fn");
    Ok(McProfile { tails, fit, profile })
}

/// Compares 1 − tail with the guarantee of `params`; estimated tails are
/// judged by the most favourable end of their interval.
pub fn profile_from_tails(tails: &TailProfile, params: &ProfileParams, family: &str) -> ConcentrationProfile {
    let lower_bounds: Vec<f64> = tails.r_values.iter().map(|&r| params.lower_bound(r)).collect();
    let observed: Vec<f64> = tails.tails.iter().map(|t| 1.0 - t).collect();
    let ci: Vec<(f64, f64)> = tails.ci.iter().map(|&(lo, hi)| (1.0 - hi, 1.0 - lo)).collect();
    let mut violations = 0;
    let mut worst_margin = f64::INFINITY;
    for (j, lb) in lower_bounds.iter().enumerate() {
        let best_case = if tails.exact { observed[j] } else { ci[j].1 };
        let margin = best_case - lb;
        worst_margin = worst_margin.min(margin);
        if margin < -1e-12 {
            violations += 1;
        }
    }
    ConcentrationProfile {
        r_values: tails.r_values.clone(),
        lower_bounds,
        observed,
        ci: (!tails.exact).then_some(ci),
        params: *params,
        family: family.to_string(),
        sets_tested: 1,
        violations,
        worst_margin,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn marton_constants() {
        let p = marton_profile(2.0).unwrap();
        assert!((p.r0 - 1.177_410_022_515_474_6).abs() < 1e-12);
        assert_eq!((p.a, p.b), (0.5, 1.0));
        assert_eq!(p.lower_bound(p.r0), 0.0);
        assert!((marton_profile(1.0).unwrap().r0 - std::f64::consts::LN_2.sqrt()).abs() < 1e-15);
        assert!(marton_profile(-1.0).is_err());
    }

    #[test]
    fn whole_space_and_large_r() {
        let mu = two_point();
        let params = marton_profile(5.0).unwrap();
        let whole = exact_product_concentration(
            &mu,
            4,
            &Enlargement::Rho { p: 1.0 },
            &SetFamily::Whole,
            &[0.0, 1.0, 3.0],
            &params,
            1 << 20,
            StreamId::new(1, 0),
        )
        .unwrap();
        assert!(whole.observed.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let random = exact_product_concentration(
            &mu,
            4,
            &Enlargement::Rho { p: 2.0 },
            &SetFamily::RandomHalf { count: 20 },
            &[2.0],
            &params,
            1 << 20,
            StreamId::new(1, 0),
        )
        .unwrap();
        assert!((random.observed[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hamming_ball_enlargement() {
        let mu = two_point();
        let sub = exact_product_concentration(
            &mu,
            4,
            &Enlargement::Rho { p: 1.0 },
            &SetFamily::SublevelFn { cost: CostKind::Power { p: 1.0 } },
            &[0.0, 1.0],
            &marton_profile(2.0).unwrap(),
            1 << 20,
            StreamId::new(1, 0),
        )
        .unwrap();
        // F_4 = |k/4 − 1/2| has median 1/4, so A = {1 ≤ weight ≤ 3} and one flip reaches everything
        assert!((sub.observed[0] - 14.0 / 16.0).abs() < 1e-15);
        assert!((sub.observed[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn minkowski_radius_brackets_two_level() {
        let e = Enlargement::Minkowski { p: 1.5 };
        let diff = [0.3, -2.0, 0.7];
        let r = e.radius(&diff, 1);
        let two_level = Enlargement::TwoLevel { p: 1.5 }.radius(&diff, 1);
        assert!(r <= two_level * (1.0 + 1e-9));
        assert!(minkowski_certificate(&diff, r, 1.5).member);
    }

    #[test]
    fn fit_recovers_gaussian_tail() {
        let r: Vec<f64> = (0..30).map(|i| 0.1 * i as f64).collect();
        let tails: Vec<f64> = r.iter().map(|&x| (0.8f64).ln().exp() * (-1.7 * (x - 0.4f64).powi(2)).exp()).collect();
        let f = fit_tail(&r, &tails, &[1.0; 30], BoundShape::Gaussian).unwrap();
        assert!((f.params.a - 1.7).abs() < 0.05, "{f:?}");
        assert!((f.params.r0 - 0.4).abs() < 0.05);
    }

    #[test]
    fn point_mass_profile_is_trivial() {
        let dirac = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let p = mc_concentration_profile(
            &dirac,
            5,
            &CostKind::Quadratic,
            &[0.0, 0.5, 1.0],
            1000,
            StreamId::new(2, 0),
            None,
        )
        .unwrap();
        assert!(p.tails.tails.iter().all(|&t| t == 0.0));
        assert!(p.fit.is_none());
    }
}
