//! Tail probabilities of D(L_n, μ): exact by type-class enumeration, and by
//! Monte Carlo.
//!
//! The empirical measure of n draws from a finite support depends only on the
//! type (the vector of counts), so sums over the |S|ⁿ outcomes collapse to
//! sums over C(n+|S|−1, |S|−1) types weighted by multinomial probabilities.

use rayon::prelude::*;

use super::Target;
use crate::costs::CostKind;
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, Sampler};
use crate::rng::StreamId;
use crate::stats::{self, ln_factorials, wilson_interval, Z95};

/// Default cap on |support|ⁿ for exact enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Cap on the number of types visited by [`exact_tail`].
const TYPE_CAP: u128 = 2_000_000;

/// Discrepancies within this margin of t count as not exceeding it, so that
/// thresholds sitting exactly on a lattice value behave like exact arithmetic.
pub(crate) const EVENT_MARGIN: f64 = 1e-12;

/// Calls `f` on every vector of k nonnegative counts summing to n, in
/// lexicographic order.
pub fn for_each_type(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    fn rec(remaining: usize, pos: usize, c: &mut [usize], f: &mut impl FnMut(&[usize])) {
        if pos + 1 == c.len() {
            c[pos] = remaining;
            f(c);
            return;
        }
        for v in 0..=remaining {
            c[pos] = v;
            rec(remaining - v, pos + 1, c, f);
        }
    }
    if k == 0 {
        return;
    }
    let mut c = vec![0usize; k];
    rec(n, 0, &mut c, &mut f);
}

fn type_count(n: usize, k: usize) -> u128 {
    let mut r: u128 = 1;
    for i in 0..(k as u128).saturating_sub(1) {
        r = r * (n as u128 + 1 + i) / (i + 1);
    }
    r
}

/// Every type with its discrepancy from μ.
struct TypeTable {
    n: usize,
    types: Vec<Vec<usize>>,
    discrepancy: Vec<f64>,
    lnfact: Vec<f64>,
}

impl TypeTable {
    fn build(target: &Target, n: usize) -> Result<Self> {
        let k = target.k();
        let count = type_count(n, k);
        if count > TYPE_CAP {
            return Err(Error::EnumerationCapExceeded { size: count, cap: TYPE_CAP });
        }
        let mut types = Vec::with_capacity(count as usize);
        for_each_type(n, k, |c| types.push(c.to_vec()));
        let discrepancy = types
            .par_iter()
            .map(|c| {
                let w: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
                target.d(&w)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { n, types, discrepancy, lnfact: ln_factorials(n) })
    }

    /// log of the multinomial probability of type `i` under i.i.d. draws from `law`.
    fn log_prob(&self, i: usize, ln_law: &[f64]) -> f64 {
        let c = &self.types[i];
        let mut acc = self.lnfact[self.n];
        for (&ci, &lw) in c.iter().zip(ln_law) {
            if ci > 0 {
                if lw == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                acc += ci as f64 * lw - self.lnfact[ci];
            }
        }
        acc
    }

    fn in_event(&self, i: usize, t: f64) -> bool {
        self.discrepancy[i] > t + EVENT_MARGIN
    }

    /// (log P(A), log P(Aᶜ)) under `law`.
    fn split(&self, t: f64, law: &[f64]) -> (f64, f64) {
        let ln_law: Vec<f64> = law.iter().map(|w| if *w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
        let mut inside = Vec::new();
        let mut outside = Vec::new();
        for i in 0..self.types.len() {
            let lp = self.log_prob(i, &ln_law);
            if self.in_event(i, t) {
                inside.push(lp);
            } else {
                outside.push(lp);
            }
        }
        (log_sum_exp(&inside), log_sum_exp(&outside))
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let terms: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    m + stats::pairwise_sum(&terms).ln()
}

/// Weights of `law` on the atoms of `target.mu`; fails unless law ≪ μ.
fn law_on_support(target: &Target, law: &DiscreteMeasure) -> Result<Vec<f64>> {
    if law.dim() != target.mu.dim() {
        return Err(Error::DimensionMismatch { expected: target.mu.dim(), found: law.dim() });
    }
    let mut w = vec![0.0; target.k()];
    for i in 0..law.len() {
        let m = law.weights()[i];
        if m == 0.0 {
            continue;
        }
        match target.mu.find(law.point(i)) {
            Some(j) => w[j] += m,
            None => return Err(Error::NotAbsolutelyContinuous),
        }
    }
    Ok(w)
}

/// P(D(L_n, μ) > t) where L_n is the empirical measure of n i.i.d. draws
/// from `law`, which must be carried by the support of μ.
pub fn exact_tail(mu: &DiscreteMeasure, law: &DiscreteMeasure, cost: &CostKind, n: usize, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let target = Target::new(mu, cost)?;
    let w = law_on_support(&target, law)?;
    let table = TypeTable::build(&target, n)?;
    Ok(table.split(t, &w).0.exp())
}

/// E[D(L_n, μ)] under i.i.d. draws from μ, by type enumeration.
pub fn exact_expectation(mu: &DiscreteMeasure, cost: &CostKind, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let target = Target::new(mu, cost)?;
    let table = TypeTable::build(&target, n)?;
    let ln_law: Vec<f64> = target.mu.weights().iter().map(|w| w.ln()).collect();
    let terms: Vec<f64> =
        (0..table.types.len()).map(|i| table.log_prob(i, &ln_law).exp() * table.discrepancy[i]).collect();
    Ok(stats::pairwise_sum(&terms))
}

/// Both sides of the change-of-measure lower bound
/// (1/n)·log(μⁿ(A)·e^{nH}) ≥ −H·νⁿ(Aᶜ)/νⁿ(A) + (1/n)·log νⁿ(A) − 1/(n·e·νⁿ(A))
/// for A = {W_p(L_n, μ) > t} and H = H(ν|μ).
#[derive(Clone, Debug, PartialEq)]
pub struct DsReport {
    pub n: usize,
    pub t: f64,
    pub p: f64,
    pub entropy: f64,
    pub mu_event: f64,
    pub nu_event: f64,
    pub nu_complement: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs − rhs.
    pub slack: f64,
    pub outcomes: u128,
}

impl DsReport {
    pub fn passed(&self) -> bool {
        self.slack >= -1e-12
    }
}

pub fn ds_lower_bound_check(mu: &DiscreteMeasure, nu: &DiscreteMeasure, n: usize, t: f64, p: f64) -> Result<DsReport> {
    ds_lower_bound_check_with_cap(mu, nu, n, t, p, DEFAULT_ENUMERATION_CAP)
}

pub fn ds_lower_bound_check_with_cap(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    n: usize,
    t: f64,
    p: f64,
    cap: u128,
) -> Result<DsReport> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    let cost = CostKind::Power { p };
    let target = Target::new(mu, &cost)?;
    let outcomes = (target.k() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if outcomes > cap {
        return Err(Error::EnumerationCapExceeded { size: outcomes, cap });
    }
    let w = law_on_support(&target, nu)?;
    let entropy = target.h(&w);
    let table = TypeTable::build(&target, n)?;
    let (ln_mu_a, _) = table.split(t, target.mu.weights());
    let (ln_nu_a, ln_nu_c) = table.split(t, &w);
    if ln_nu_a == f64::NEG_INFINITY {
        return Err(Error::EventEmpty);
    }
    let nf = n as f64;
    let nu_a = ln_nu_a.exp();
    let nu_c = ln_nu_c.exp();
    let lhs = ln_mu_a / nf + entropy;
    let rhs = -entropy * (nu_c / nu_a) + ln_nu_a / nf - 1.0 / (nf * std::f64::consts::E * nu_a);
    Ok(DsReport {
        n,
        t,
        p,
        entropy,
        mu_event: ln_mu_a.exp(),
        nu_event: nu_a,
        nu_complement: nu_c,
        lhs,
        rhs,
        slack: lhs - rhs,
        outcomes,
    })
}

/// Monte Carlo estimate of P(D(L_n, μ) > t).
#[derive(Clone, Debug, PartialEq)]
pub struct TailEstimate {
    pub n: usize,
    pub t: f64,
    pub trials: u64,
    pub hits: u64,
    pub p_hat: f64,
    pub ci95: (f64, f64),
    /// −(1/n)·log p_hat; None when censored.
    pub rate_hat: Option<f64>,
    pub censored: bool,
    /// (1/n)·log(trials) when censored: the true rate is at least about this.
    pub rate_lower_bound: Option<f64>,
}

/// Tail estimates for one sample size, with the sample median and mean of D.
#[derive(Clone, Debug, PartialEq)]
pub struct McTail {
    pub n: usize,
    pub trials: u64,
    pub estimates: Vec<TailEstimate>,
    pub median: f64,
    pub mean: f64,
}

/// Trial `i` at sample size n draws from `stream.labeled("n=<n>").substream(i)`,
/// so results depend only on (stream, n, trials), never on thread count.
pub fn mc_tail(
    mu: &DiscreteMeasure,
    cost: &CostKind,
    n: usize,
    t_list: &[f64],
    trials: u64,
    stream: StreamId,
) -> Result<McTail> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let target = Target::new(mu, cost)?;
    let values = sample_discrepancies(&target, n, trials, stream)?;
    let estimates = t_list
        .iter()
        .map(|&t| {
            let hits = values.iter().filter(|&&d| d > t + EVENT_MARGIN).count() as u64;
            let p_hat = hits as f64 / trials as f64;
            let censored = hits == 0;
            TailEstimate {
                n,
                t,
                trials,
                hits,
                p_hat,
                ci95: wilson_interval(hits, trials, Z95),
                rate_hat: (!censored).then(|| -p_hat.ln() / n as f64),
                censored,
                rate_lower_bound: censored.then(|| (trials as f64).ln() / n as f64),
            }
        })
        .collect();
    Ok(McTail { n, trials, estimates, median: stats::median(&values), mean: stats::mean(&values) })
}

/// Exact law of D(L_n, μ) under i.i.d. draws from μ as (values, probabilities),
/// sorted by value.
pub(crate) fn exact_distribution(target: &Target, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let table = TypeTable::build(target, n)?;
    let ln_law: Vec<f64> = target.mu.weights().iter().map(|w| w.ln()).collect();
    let mut pairs: Vec<(f64, f64)> =
        (0..table.types.len()).map(|i| (table.discrepancy[i], table.log_prob(i, &ln_law).exp())).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

/// Number of types for n draws on k atoms.
pub(crate) fn types_for(n: usize, k: usize) -> u128 {
    type_count(n, k)
}

pub(crate) fn sample_discrepancies(target: &Target, n: usize, trials: u64, stream: StreamId) -> Result<Vec<f64>> {
    let sampler = Sampler::new(&target.mu);
    let base = stream.labeled(&format!("n={n}"));
    let k = target.k();
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = base.substream(i).rng();
            let mut counts = vec![0usize; k];
            for j in sampler.draw_indices(n, &mut rng) {
                counts[j] += 1;
            }
            let w: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
            target.d(&w)
        })
        .collect()
}

/// One row of the E[W_p(L_n, μ)] table.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanRow {
    pub n: usize,
    pub trials: u64,
    pub mean: f64,
    pub std_err: f64,
    pub ci95: (f64, f64),
}

/// Monte Carlo E[W_p(L_n, μ)] for each n with normal-approximation intervals.
pub fn empirical_mean_convergence(
    mu: &DiscreteMeasure,
    p: f64,
    n_list: &[usize],
    trials: u64,
    stream: StreamId,
) -> Result<Vec<MeanRow>> {
    if trials < 2 {
        return Err(Error::InvalidParameter("at least two trials are needed for an interval".into()));
    }
    let target = Target::new(mu, &CostKind::Power { p })?;
    n_list
        .iter()
        .map(|&n| {
            if n == 0 {
                return Err(Error::InvalidSampleSize);
            }
            let values = sample_discrepancies(&target, n, trials, stream)?;
            let mean = stats::mean(&values);
            let std_err = (stats::sample_variance(&values) / trials as f64).sqrt();
            Ok(MeanRow { n, trials, mean, std_err, ci95: (mean - Z95 * std_err, mean + Z95 * std_err) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point() -> DiscreteMeasure {
        DiscreteMeasure::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn types_cover_outcomes() {
        let mut seen = 0;
        for_each_type(4, 3, |c| {
            assert_eq!(c.iter().sum::<usize>(), 4);
            seen += 1;
        });
        assert_eq!(seen as u128, type_count(4, 3));
        assert_eq!(seen, 15);
    }

    #[test]
    fn exact_tail_matches_binomial() {
        let mu = two_point();
        let w1 = CostKind::Power { p: 1.0 };
        let tail = exact_tail(&mu, &mu, &w1, 20, 0.2).unwrap();
        // |k/20 − 1/2| > 0.2 ⇔ k ≤ 5 or k ≥ 15
        let lnf = ln_factorials(20);
        let binom: f64 = (0..=20)
            .filter(|&k| k <= 5 || k >= 15)
            .map(|k| (lnf[20] - lnf[k] - lnf[20 - k] - 20.0 * 2f64.ln()).exp())
            .sum();
        assert!((tail - binom).abs() < 1e-14, "{tail} vs {binom}");
    }

    #[test]
    fn ds_reduces_when_nu_is_mu() {
        let mu = two_point();
        let r = ds_lower_bound_check(&mu, &mu, 4, 0.2, 1.0).unwrap();
        assert_eq!(r.entropy, 0.0);
        let expected = 1.0 / (4.0 * std::f64::consts::E * r.mu_event);
        assert!((r.slack - expected).abs() < 1e-12);
    }

    #[test]
    fn ds_example_and_errors() {
        let mu = two_point();
        let nu = mu.with_weights(&[0.8, 0.2]).unwrap();
        let r = ds_lower_bound_check(&mu, &nu, 4, 0.2, 1.0).unwrap();
        assert!(r.passed());
        assert_eq!(r.outcomes, 16);
        assert!(matches!(ds_lower_bound_check(&mu, &nu, 20, 0.2, 1.0), Err(Error::EnumerationCapExceeded { .. })));
        assert!(matches!(ds_lower_bound_check(&mu, &nu, 4, 0.6, 1.0), Err(Error::EventEmpty)));
        let outside = DiscreteMeasure::from_flat(1, vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert!(matches!(ds_lower_bound_check(&mu, &outside, 4, 0.2, 1.0), Err(Error::NotAbsolutelyContinuous)));
    }

    #[test]
    fn mc_tail_point_mass_and_reproducibility() {
        let dirac = DiscreteMeasure::dirac(&[1.5]).unwrap();
        let w2 = CostKind::Quadratic;
        let s = StreamId::new(3, 0);
        let r = mc_tail(&dirac, &w2, 5, &[0.1, 1.0], 100, s).unwrap();
        assert!(r.estimates.iter().all(|e| e.hits == 0 && e.censored));
        let mu = two_point();
        let a = mc_tail(&mu, &w2, 10, &[0.0, 0.3], 500, s).unwrap();
        let b = mc_tail(&mu, &w2, 10, &[0.0, 0.3], 500, s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn n_one_expectation_is_finite_sum() {
        let mu = DiscreteMeasure::from_flat(1, vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let w2 = CostKind::Quadratic;
        let direct: f64 = (0..3)
            .map(|i| {
                let d = DiscreteMeasure::dirac(mu.point(i)).unwrap();
                mu.weights()[i] * crate::transport::w_p(&d, &mu, 2.0).unwrap()
            })
            .sum();
        assert!((exact_expectation(&mu, &w2, 1).unwrap() - direct).abs() < 1e-14);
    }
}
