//! Finite-support probability measures on ℝ^d, empirical measures and
//! virtual product measures.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::StreamId;

/// Tolerance on the weight sum accepted by [`DiscreteMeasure::new`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Default cap on explicitly materialized product supports.
pub const DEFAULT_PRODUCT_CAP: u128 = 2_000_000;

/// Default cap on grid discretizations.
pub const DEFAULT_GRID_CAP: usize = 1_000_000;

/// A probability measure with finitely many atoms in ℝ^d.
///
/// Coordinates are stored row-major in one flat buffer. Atoms are distinct
/// (bitwise) and appear in order of first occurrence. Zero weights are
/// allowed, so the atom list may be larger than the support proper.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Validate and build a measure. Weights must be nonnegative and sum to
    /// one within [`WEIGHT_SUM_TOLERANCE`]; they are renormalized exactly.
    pub fn new(points: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let dim = points.first().ok_or(Error::EmptySupport)?.len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords, weights.to_vec())
    }

    /// Same as [`DiscreteMeasure::new`] on a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let sum = check_weights(dim, &coords, &weights)?;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::NotNormalized { sum, tolerance: WEIGHT_SUM_TOLERANCE });
        }
        Ok(Self::merge(dim, coords, weights, sum))
    }

    /// Build a measure from arbitrary nonnegative weights with positive total,
    /// dividing by the total.
    pub fn normalized(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let sum = check_weights(dim, &coords, &weights)?;
        if sum <= 0.0 {
            return Err(Error::NotNormalized { sum, tolerance: WEIGHT_SUM_TOLERANCE });
        }
        Ok(Self::merge(dim, coords, weights, sum))
    }

    /// Uniform measure on the given atoms (duplicates accumulate mass).
    pub fn uniform(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::EmptySupport);
        }
        let k = coords.len() / dim;
        Self::normalized(dim, coords, vec![1.0; k])
    }

    /// Unit mass at `point`.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::from_flat(point.len(), point.to_vec(), vec![1.0])
    }

    fn merge(dim: usize, coords: Vec<f64>, weights: Vec<f64>, sum: f64) -> Self {
        let k = weights.len();
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(k);
        let mut out_coords = Vec::with_capacity(coords.len());
        let mut out_weights: Vec<f64> = Vec::with_capacity(k);
        for (i, &w) in weights.iter().enumerate() {
            let p = &coords[i * dim..(i + 1) * dim];
            // -0.0 and 0.0 denote the same location
            let key: Vec<u64> = p.iter().map(|&c| (c + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&j) => out_weights[j] += w,
                None => {
                    index.insert(key, out_weights.len());
                    out_coords.extend(p.iter().map(|&c| c + 0.0));
                    out_weights.push(w);
                }
            }
        }
        for w in &mut out_weights {
            *w /= sum;
        }
        Self { dim, coords: out_coords, weights: out_weights }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of atoms.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same atoms, new weights (renormalized). Zero weights keep their atom.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::SizeMismatch { left: self.len(), right: weights.len() });
        }
        let sum = check_weights(self.dim, &self.coords, weights)?;
        if sum <= 0.0 {
            return Err(Error::NotNormalized { sum, tolerance: WEIGHT_SUM_TOLERANCE });
        }
        Ok(Self {
            dim: self.dim,
            coords: self.coords.clone(),
            weights: weights.iter().map(|w| w / sum).collect(),
        })
    }

    /// Index of the atom located exactly at `point`.
    pub fn find(&self, point: &[f64]) -> Option<usize> {
        self.points().position(|p| p.iter().zip(point).all(|(a, b)| a == b))
    }

    /// Map from atom location (bit pattern) to atom index.
    pub(crate) fn index_map(&self) -> HashMap<Vec<u64>, usize> {
        self.points()
            .enumerate()
            .map(|(i, p)| (p.iter().map(|&c| (c + 0.0).to_bits()).collect(), i))
            .collect()
    }

    /// Expectation of a function given by its values on the atoms.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.points().zip(&self.weights) {
            for (mj, pj) in m.iter_mut().zip(p) {
                *mj += w * pj;
            }
        }
        m
    }

    /// Shift every atom by `shift`.
    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: shift.len() });
        }
        let coords = self
            .coords
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(shift).map(|(a, b)| a + b))
            .collect();
        Self::normalized(self.dim, coords, self.weights.clone())
    }

    /// Exponential tilt: weights proportional to `w(x) exp(<lambda, x>)`.
    pub fn tilt(&self, lambda: &[f64]) -> Result<Self> {
        if lambda.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: lambda.len() });
        }
        let exponents: Vec<f64> = self
            .points()
            .map(|p| p.iter().zip(lambda).map(|(a, b)| a * b).sum())
            .collect();
        self.tilt_by(&exponents)
    }

    /// Reweight by `exp(g(x))` for arbitrary exponent values `g`.
    pub fn tilt_by(&self, exponents: &[f64]) -> Result<Self> {
        if exponents.len() != self.len() {
            return Err(Error::LengthMismatch { expected: self.len(), found: exponents.len() });
        }
        if exponents.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("tilt exponents"));
        }
        let top = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = self
            .weights
            .iter()
            .zip(exponents)
            .map(|(w, g)| w * (g - top).exp())
            .collect();
        self.with_weights(&weights)
    }

    /// Image under ω(u) = sign(u)·max(|u|, u²) applied to every coordinate.
    pub fn pushforward_omega(&self) -> Self {
        // ω is strictly increasing, so distinct atoms stay distinct
        Self {
            dim: self.dim,
            coords: self.coords.iter().map(|&u| omega(u)).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Product measure on ℝ^{d₁+d₂}; atom (i, j) sits at index `i·len(other) + j`.
    pub fn product(&self, other: &Self) -> Self {
        let dim = self.dim + other.dim;
        let mut coords = Vec::with_capacity(self.len() * other.len() * dim);
        let mut weights = Vec::with_capacity(self.len() * other.len());
        for (p, wp) in self.points().zip(&self.weights) {
            for (q, wq) in other.points().zip(&other.weights) {
                coords.extend_from_slice(p);
                coords.extend_from_slice(q);
                weights.push(wp * wq);
            }
        }
        Self { dim, coords, weights }
    }

    /// Whether the positive-mass atoms of `self` all carry positive mass in `other`.
    pub fn absolutely_continuous_wrt(&self, other: &Self) -> bool {
        let index = other.index_map();
        self.points().zip(&self.weights).all(|(p, &w)| {
            w == 0.0
                || index
                    .get(&p.iter().map(|&c| (c + 0.0).to_bits()).collect::<Vec<_>>())
                    .is_some_and(|&j| other.weights[j] > 0.0)
        })
    }
}

fn check_weights(dim: usize, coords: &[f64], weights: &[f64]) -> Result<f64> {
    if weights.is_empty() || dim == 0 {
        return Err(Error::EmptySupport);
    }
    if coords.len() != weights.len() * dim {
        return Err(Error::DimensionMismatch { expected: weights.len() * dim, found: coords.len() });
    }
    if coords.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("coordinates"));
    }
    for (index, &weight) in weights.iter().enumerate() {
        if !weight.is_finite() {
            return Err(Error::NonFinite("weights"));
        }
        if weight < 0.0 {
            return Err(Error::NegativeWeight { index, weight });
        }
    }
    Ok(weights.iter().sum())
}

/// ω(u) = sign(u)·max(|u|, u²).
pub fn omega(u: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    u.signum() * u.abs().max(u * u)
}

/// Uniform sample of `n` points; duplicates are kept as separate atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    sample: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, sample: Vec<f64>) -> Result<Self> {
        if dim == 0 || sample.is_empty() {
            return Err(Error::InvalidSampleSize);
        }
        if sample.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, found: sample.len() % dim });
        }
        if sample.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("sample"));
        }
        Ok(Self { dim, sample })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.sample.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.sample[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.sample
    }

    /// Merge repeated points into atoms of weight k/n.
    pub fn to_measure(&self) -> DiscreteMeasure {
        let n = self.n();
        DiscreteMeasure::merge(self.dim, self.sample.clone(), vec![1.0; n], n as f64)
    }
}

/// Reusable sampler for i.i.d. draws from a fixed measure.
#[derive(Clone, Debug)]
pub struct Sampler<'a> {
    measure: &'a DiscreteMeasure,
    index: WeightedIndex<f64>,
}

impl<'a> Sampler<'a> {
    pub fn new(measure: &'a DiscreteMeasure) -> Self {
        let index = WeightedIndex::new(measure.weights()).expect("validated weights");
        Self { measure, index }
    }

    /// Atom indices of `n` i.i.d. draws.
    pub fn draw_indices<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| self.index.sample(rng)).collect()
    }

    pub fn draw<R: Rng>(&self, n: usize, rng: &mut R) -> EmpiricalMeasure {
        let d = self.measure.dim();
        let mut sample = Vec::with_capacity(n * d);
        for _ in 0..n {
            sample.extend_from_slice(self.measure.point(self.index.sample(rng)));
        }
        EmpiricalMeasure { dim: d, sample }
    }
}

/// `n` i.i.d. draws from `mu`, determined by the stream identifier.
pub fn sample_empirical(mu: &DiscreteMeasure, n: usize, stream: StreamId) -> Result<EmpiricalMeasure> {
    if n == 0 {
        return Err(Error::InvalidSampleSize);
    }
    Ok(Sampler::new(mu).draw(n, &mut stream.rng()))
}

/// The product measure μⁿ, described implicitly.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductSpec {
    pub base: DiscreteMeasure,
    pub n: usize,
}

impl ProductSpec {
    pub fn new(base: DiscreteMeasure, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSampleSize);
        }
        Ok(Self { base, n })
    }

    /// |support|ⁿ, saturating.
    pub fn outcome_count(&self) -> u128 {
        (self.base.len() as u128).saturating_pow(self.n as u32)
    }

    fn check_cap(&self, cap: u128) -> Result<usize> {
        let size = self.outcome_count();
        if size > cap {
            return Err(Error::EnumerationCapExceeded { size, cap });
        }
        Ok(size as usize)
    }

    /// Every outcome as a tuple of atom indices (first factor varies slowest),
    /// with its probability.
    pub fn outcomes(&self, cap: u128) -> Result<Vec<(Vec<usize>, f64)>> {
        let size = self.check_cap(cap)?;
        let k = self.base.len();
        let w = self.base.weights();
        let mut out = Vec::with_capacity(size);
        let mut idx = vec![0usize; self.n];
        for _ in 0..size {
            out.push((idx.clone(), idx.iter().map(|&i| w[i]).product()));
            for pos in (0..self.n).rev() {
                idx[pos] += 1;
                if idx[pos] < k {
                    break;
                }
                idx[pos] = 0;
            }
        }
        Ok(out)
    }

    /// Explicit measure on (ℝ^d)ⁿ, one atom per outcome.
    pub fn materialize(&self, cap: u128) -> Result<DiscreteMeasure> {
        let d = self.base.dim();
        let outcomes = self.outcomes(cap)?;
        let mut coords = Vec::with_capacity(outcomes.len() * d * self.n);
        let mut weights = Vec::with_capacity(outcomes.len());
        for (idx, p) in outcomes {
            for i in idx {
                coords.extend_from_slice(self.base.point(i));
            }
            weights.push(p);
        }
        DiscreteMeasure::normalized(d * self.n, coords, weights)
    }
}

/// Discretize a density on the symmetric grid `{k·step : |k·step| ≤ halfwidth}`
/// with pointwise density weights.
pub fn discretize_density(
    halfwidth: f64,
    step: f64,
    cap: usize,
    density: impl Fn(f64) -> f64,
) -> Result<DiscreteMeasure> {
    if !(halfwidth > 0.0 && step > 0.0 && halfwidth.is_finite() && step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "grid halfwidth and step must be positive, got {halfwidth} and {step}"
        )));
    }
    let k = (halfwidth / step + 1e-9).floor();
    let size = 2.0 * k + 1.0;
    if size > cap as f64 {
        return Err(Error::GridTooLarge { size: size.min(usize::MAX as f64) as usize, cap });
    }
    let k = k as i64;
    let coords: Vec<f64> = (-k..=k).map(|i| i as f64 * step).collect();
    let weights: Vec<f64> = coords.iter().map(|&x| density(x)).collect();
    DiscreteMeasure::normalized(1, coords, weights)
}

/// Standard Gaussian restricted to a uniform grid.
pub fn discretize_gaussian(halfwidth: f64, step: f64) -> Result<DiscreteMeasure> {
    discretize_density(halfwidth, step, DEFAULT_GRID_CAP, |x| (-0.5 * x * x).exp())
}
