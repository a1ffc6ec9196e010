//! Round trips between transport-entropy constants and concentration profiles.

use std::fmt;
use std::str::FromStr;

use super::{
    exact_product_concentration, fit_tail, fit_weights, marton_profile, sublevel_tails, two_level_profile,
    two_level_tails, BoundShape, ConcentrationProfile, Enlargement, FittedTail, ProfileParams, SetFamily,
    TailProfile, TailSource,
};
use crate::costs::{alpha, CostKind};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;
use crate::rates::{best_constant, default_thresholds, BestConstant, InequalityForm, RateOptions, Target};
use crate::rng::StreamId;

/// One named pass/fail check with the measured value and its limit.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when value ≤ limit.
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, passed: value <= limit }
    }
}

/// Which implication of the equivalence to exercise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Certified transport constant ⇒ Marton profile on product spaces.
    T2ToConcentration,
    /// Fitted concentration rate ⇒ transport inequality on the minimizer family.
    ConcentrationToT2,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::T2ToConcentration => "t2_to_concentration",
            Direction::ConcentrationToT2 => "concentration_to_t2",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "t2_to_concentration" => Ok(Direction::T2ToConcentration),
            "concentration_to_t2" => Ok(Direction::ConcentrationToT2),
            other => Err(Error::InvalidParameter(format!(
                "unknown direction {other:?}; expected t2_to_concentration or concentration_to_t2"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceConfig {
    /// W₁ (`power:p=1`) or W₂ (`quadratic`); sets both the statistic F_n and the inequality.
    pub cost: CostKind,
    pub n_list: Vec<usize>,
    /// Offsets r in the events {F_n > m_n + r/√n}.
    pub r_list: Vec<f64>,
    pub trials: u64,
    /// Use type-class enumeration when the type count allows it.
    pub exact_tails: bool,
    /// Product size for the exact Marton check; 0 skips it.
    pub n_exact: usize,
    pub sets: usize,
    pub thresholds: usize,
    /// Allowed relative disagreement between the two directions.
    pub slack: f64,
    pub stream: StreamId,
    pub rate_options: RateOptions,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            cost: CostKind::Power { p: 1.0 },
            n_list: vec![10, 20, 40, 80],
            r_list: (0..=60).map(|i| 0.05 * i as f64).collect(),
            trials: 100_000,
            exact_tails: true,
            n_exact: 10,
            sets: 1000,
            thresholds: 24,
            slack: 0.3,
            stream: StreamId::new(0xc0ffee, 0),
            rate_options: RateOptions::default(),
        }
    }
}

/// Fitted tail profile at one sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct NFit {
    pub n: usize,
    pub tails: TailProfile,
    pub fit: Option<FittedTail>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport {
    pub direction: Direction,
    /// C* for t2_to_concentration; 1/a_fit for concentration_to_t2.
    pub constant: f64,
    pub certified: BestConstant,
    pub profiles: Vec<NFit>,
    pub exact_product: Vec<ConcentrationProfile>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn exponent_of(cost: &CostKind) -> Result<f64> {
    match cost.metric_exponent() {
        Some(p) if p == 1.0 || p == 2.0 => Ok(p),
        _ => Err(Error::InvalidParameter(format!(
            "equivalence experiments need the W₁ or W₂ cost (power:p=1 or quadratic), got {cost}"
        ))),
    }
}

fn tails_for(mu: &DiscreteMeasure, cfg: &EquivalenceConfig, n: usize) -> Result<TailProfile> {
    let stream = cfg.stream.labeled("sublevel-tails");
    let source = if cfg.exact_tails {
        TailSource::prefer_exact(mu.weights().iter().filter(|&&w| w > 0.0).count(), n, cfg.trials, stream)
    } else {
        TailSource::MonteCarlo { trials: cfg.trials, stream }
    };
    sublevel_tails(mu, &cfg.cost, n, &cfg.r_list, &source)
}

/// Runs one direction of the equivalence between W_p² ≤ C·H and Gaussian
/// concentration of μⁿ.
///
/// For W₂ the product carries ρ₂ⁿ and the constant tensorizes unchanged. For
/// W₁ it carries ρ₁ⁿ with constant n·C. In both cases F_n = W_p(L_n, μ) is
/// Lipschitz with a constant that turns the Marton bound into
/// P(F_n > m_n + r/√n) ≤ e^{−(r − √(C log 2))²/C}.
pub fn equivalence_experiment(
    mu: &DiscreteMeasure,
    direction: Direction,
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    let p = exponent_of(&cfg.cost)?;
    let thresholds = default_thresholds(mu, &cfg.cost, cfg.thresholds)?;
    let certified = best_constant(mu, &cfg.cost, InequalityForm::Squared, &thresholds, &cfg.rate_options)?;
    let mut checks = Vec::new();
    let mut profiles = Vec::new();
    let mut exact_product = Vec::new();
    let constant = match direction {
        Direction::T2ToConcentration => {
            let c = certified.constant;
            let marton = marton_profile(c)?;
            if cfg.n_exact > 0 {
                let support = mu.len() as u128;
                let outcomes = support.saturating_pow(cfg.n_exact as u32);
                if outcomes <= super::PAIRWISE_TABLE_CAP as u128 {
                    let (enlargement, c_n) = if p == 2.0 {
                        (Enlargement::Rho { p: 2.0 }, c)
                    } else {
                        (Enlargement::Rho { p: 1.0 }, cfg.n_exact as f64 * c)
                    };
                    let params = marton_profile(c_n)?;
                    let r_max = (cfg.n_exact as f64).sqrt() * cfg.r_list.last().copied().unwrap_or(3.0) + params.r0;
                    let r_grid: Vec<f64> = (0..=80).map(|i| r_max * i as f64 / 80.0).collect();
                    for family in [SetFamily::RandomHalf { count: cfg.sets }, SetFamily::SublevelFn { cost: cfg.cost }] {
                        let prof = exact_product_concentration(
                            mu,
                            cfg.n_exact,
                            &enlargement,
                            &family,
                            &r_grid,
                            &params,
                            outcomes,
                            cfg.stream.labeled("marton-sets"),
                        )?;
                        checks.push(Check::at_most(
                            format!("marton_exact_{}_n{}", family.name(), cfg.n_exact),
                            prof.violations as f64,
                            0.0,
                        ));
                        exact_product.push(prof);
                    }
                }
            }
            for &n in &cfg.n_list {
                let tails = tails_for(mu, cfg, n)?;
                let excess = tails
                    .r_values
                    .iter()
                    .zip(tails.tails.iter().zip(&tails.ci))
                    .map(|(&r, (&t, &(lo, _)))| if tails.exact { t } else { lo } - marton.tail_bound(r))
                    .fold(f64::NEG_INFINITY, f64::max);
                checks.push(Check::at_most(format!("marton_sublevel_n{n}"), excess, 1e-12));
                profiles.push(NFit { n, tails, fit: None });
            }
            c
        }
        Direction::ConcentrationToT2 => {
            let mut a_fit = f64::INFINITY;
            for &n in &cfg.n_list {
                let tails = tails_for(mu, cfg, n)?;
                let fit = fit_tail(&tails.r_values, &tails.tails, &fit_weights(&tails), BoundShape::Gaussian);
                if let Some(f) = fit {
                    a_fit = a_fit.min(f.params.a);
                }
                profiles.push(NFit { n, tails, fit });
            }
            let c_fit = if a_fit.is_finite() { 1.0 / a_fit } else { 0.0 };
            checks.push(Check::at_most("t_inequality_on_minimizers", certified.constant, c_fit * (1.0 + cfg.slack)));
            c_fit
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    Ok(EquivalenceReport { direction, constant, certified, profiles, exact_product, checks, passed })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundTrip {
    pub forward: EquivalenceReport,
    pub backward: EquivalenceReport,
    /// |C_backward − C_forward| / C_forward (0 when both vanish).
    pub relative_gap: f64,
    pub passed: bool,
}

/// Both directions, and their agreement within `cfg.slack`.
pub fn equivalence_round_trip(mu: &DiscreteMeasure, cfg: &EquivalenceConfig) -> Result<RoundTrip> {
    let forward = equivalence_experiment(mu, Direction::T2ToConcentration, cfg)?;
    let backward = equivalence_experiment(mu, Direction::ConcentrationToT2, cfg)?;
    let (a, b) = (forward.constant, backward.constant);
    let relative_gap = if a == 0.0 && b == 0.0 { 0.0 } else { (b - a).abs() / a.abs().max(f64::MIN_POSITIVE) };
    let passed = forward.passed && backward.passed && relative_gap <= cfg.slack;
    Ok(RoundTrip { forward, backward, relative_gap, passed })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelConfig {
    /// Product size for the exact enlargement checks; 0 skips them.
    pub n_exact: usize,
    pub sets: usize,
    pub thresholds: usize,
    pub exact_tails: bool,
    pub stream: StreamId,
    pub rate_options: RateOptions,
}

impl Default for TwoLevelConfig {
    fn default() -> Self {
        Self {
            n_exact: 6,
            sets: 200,
            thresholds: 16,
            exact_tails: true,
            stream: StreamId::new(0x2e7e1, 0),
            rate_options: RateOptions::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoLevelReport {
    pub p: f64,
    pub n: usize,
    /// sup of T_{2,p}/H over the minimizer family.
    pub certified: BestConstant,
    /// b = 2, a = 1/(2C) from the certified constant.
    pub forward: ProfileParams,
    pub exact_two_level: Option<ConcentrationProfile>,
    pub exact_minkowski: Option<ConcentrationProfile>,
    /// P(T_{2,p}(L_n, μ) ≥ 2m_n + 288r/n).
    pub converse_tails: TailProfile,
    pub converse_fit: Option<FittedTail>,
    /// 288/a from the fitted converse rate.
    pub implied_constant: f64,
    /// Grid points where α_p(x/12) < α_p(x)/144.
    pub alpha_scaling_violations: usize,
    pub checks: Vec<Check>,
    pub passed: bool,
}

/// Both implications between T_{2,p}(C) and two-level concentration. An
/// empty `r_list` spans r ∈ [0, n·max T/288] with 41 points.
pub fn two_level_experiment(
    mu: &DiscreteMeasure,
    p: f64,
    n: usize,
    r_list: &[f64],
    trials: u64,
    cfg: &TwoLevelConfig,
) -> Result<TwoLevelReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::InvalidParameter(format!("two-level exponent must lie in [1, 2], got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let cost = CostKind::Alpha { p };
    let target = Target::new(mu, &cost)?;
    let thresholds = default_thresholds(mu, &cost, cfg.thresholds)?;
    let certified = best_constant(mu, &cost, InequalityForm::Linear, &thresholds, &cfg.rate_options)?;
    let forward = two_level_profile(certified.constant)?;
    let mut checks = Vec::new();

    let mut exact_two_level = None;
    let mut exact_minkowski = None;
    let outcomes = (mu.len() as u128).saturating_pow(cfg.n_exact as u32);
    if cfg.n_exact > 0 && outcomes <= super::PAIRWISE_TABLE_CAP as u128 {
        let r_max = cfg.n_exact as f64 * target.max_discrepancy()?.max(1.0);
        let r_grid: Vec<f64> = (0..=40).map(|i| r_max * i as f64 / 40.0).collect();
        for enlargement in [Enlargement::TwoLevel { p }, Enlargement::Minkowski { p }] {
            let mut worst: Option<ConcentrationProfile> = None;
            for family in [SetFamily::RandomHalf { count: cfg.sets }, SetFamily::SublevelFn { cost }] {
                let prof = exact_product_concentration(
                    mu,
                    cfg.n_exact,
                    &enlargement,
                    &family,
                    &r_grid,
                    &forward,
                    outcomes,
                    cfg.stream.labeled("two-level-sets"),
                )?;
                checks.push(Check::at_most(
                    format!("forward_{}_{}", enlargement.name(), family.name()),
                    prof.violations as f64,
                    0.0,
                ));
                if worst.as_ref().is_none_or(|w| prof.worst_margin < w.worst_margin) {
                    worst = Some(prof);
                }
            }
            match enlargement {
                Enlargement::TwoLevel { .. } => exact_two_level = worst,
                _ => exact_minkowski = worst,
            }
        }
    }

    let stream = cfg.stream.labeled("two-level-tails");
    let source = if cfg.exact_tails {
        TailSource::prefer_exact(target.k(), n, trials, stream)
    } else {
        TailSource::MonteCarlo { trials, stream }
    };
    let default_r: Vec<f64>;
    let r_list = if r_list.is_empty() {
        let span = n as f64 * target.max_discrepancy()? / 288.0;
        default_r = (0..=40).map(|i| span * i as f64 / 40.0).collect();
        &default_r[..]
    } else {
        r_list
    };
    let converse_tails = two_level_tails(&target, n, r_list, &source)?;
    let converse_fit = fit_tail(
        &converse_tails.r_values,
        &converse_tails.tails,
        &fit_weights(&converse_tails),
        BoundShape::Exponential,
    );
    let implied_constant = converse_fit.map_or(0.0, |f| 288.0 / f.params.a);
    checks.push(Check::at_most("converse_chain_288_over_a", certified.constant, implied_constant));

    let alpha_scaling_violations = (0..=20_000)
        .map(|i| 0.01 * i as f64)
        .filter(|&x| alpha(p, x / 12.0) < alpha(p, x) / 144.0 * (1.0 - 1e-12))
        .count();
    checks.push(Check::at_most("alpha_scaling_12_144", alpha_scaling_violations as f64, 0.0));

    let passed = checks.iter().all(|c| c.passed);
    Ok(TwoLevelReport {
        p,
        n,
        certified,
        forward,
        exact_two_level,
        exact_minkowski,
        converse_tails,
        converse_fit,
        implied_constant,
        alpha_scaling_violations,
        checks,
        passed,
    })
}
