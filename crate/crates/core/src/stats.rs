//! Statistical kernel: two-sample KS statistic, resampling p-values,
//! fixed-range histograms over `[0, 1]` and sampling from them.
//!
//! Every function here is pure apart from the random source passed in by
//! the caller, so the same inputs and seed always give the same result.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of resamples for the p-value estimators.
pub const DEFAULT_PERMUTATIONS: usize = 1000;
/// Smallest resample count accepted by the p-value estimators.
pub const MIN_PERMUTATIONS: usize = 100;
/// Default histogram resolution.
pub const DEFAULT_BINS: usize = 100;

/// Tolerance used when comparing resampled statistics against the observed one.
const STAT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty-sample")]
    EmptySample,
    #[error("insufficient-observations: need at least {required}, got {got}")]
    InsufficientObservations { required: usize, got: usize },
    #[error("bin-mismatch: {left} bins vs {right} bins")]
    BinMismatch { left: usize, right: usize },
    #[error("invalid-weight: {0} is outside [0, 1]")]
    InvalidWeight(f64),
    #[error("invalid-probability: {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid bin count {0}: at least 2 bins are required")]
    InvalidBinCount(usize),
    #[error("too few resamples: {0} < {MIN_PERMUTATIONS}")]
    TooFewPermutations(usize),
    #[error("histogram mass must be finite, nonnegative and not all zero")]
    InvalidMass,
}

fn check_probability(v: f64) -> Result<(), StatsError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(StatsError::InvalidProbability(v))
    }
}

/// Model output probabilities, every value in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Sample(Vec<f64>);

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self, StatsError> {
        for &v in &values {
            check_probability(v)?;
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    fn sorted(&self) -> Vec<f64> {
        let mut v = self.0.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

impl TryFrom<Vec<f64>> for Sample {
    type Error = StatsError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<Sample> for Vec<f64> {
    fn from(s: Sample) -> Self {
        s.0
    }
}

/// Outcome of a two-sample test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// How the null distribution of the KS statistic is resampled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resampling {
    /// Re-split the pooled sample without replacement.
    #[default]
    Permutation,
    /// Draw both groups from the pooled sample with replacement.
    Bootstrap,
}

/// Two-sample KS statistic `sup |F_a - F_b|` over right-continuous ECDFs.
pub fn ks_statistic(a: &Sample, b: &Sample) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::EmptySample);
    }
    Ok(ks_sorted(&a.sorted(), &b.sorted()))
}

fn ecdf_gap(count_a: usize, n_a: usize, count_b: usize, n_b: usize) -> f64 {
    (count_a as f64 / n_a as f64 - count_b as f64 / n_b as f64).abs()
}

// Both inputs sorted ascending. Gaps are taken after each tie group is
// fully consumed, so equal values never open a spurious gap.
fn ks_sorted(xs: &[f64], ys: &[f64]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max(ecdf_gap(i, xs.len(), j, ys.len()));
    }
    // Once one side is exhausted the gap only shrinks towards zero.
    d
}

/// Pooled sorted sample with tie-group boundaries; reused across resamples.
struct Pooled {
    /// Exclusive end index of each group of equal values.
    group_ends: Vec<usize>,
    labels: Vec<bool>,
    counts_a: Vec<u32>,
    counts_b: Vec<u32>,
}

impl Pooled {
    fn new(a: &[f64], b: &[f64]) -> Self {
        let mut pooled: Vec<(f64, bool)> = a
            .iter()
            .map(|&v| (v, true))
            .chain(b.iter().map(|&v| (v, false)))
            .collect();
        pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut group_ends = Vec::new();
        for i in 1..pooled.len() {
            if pooled[i].0 != pooled[i - 1].0 {
                group_ends.push(i);
            }
        }
        group_ends.push(pooled.len());
        let n = pooled.len();
        Self {
            group_ends,
            labels: pooled.into_iter().map(|(_, l)| l).collect(),
            counts_a: vec![0; n],
            counts_b: vec![0; n],
        }
    }

    fn labeled_statistic(&self, n_a: usize, n_b: usize) -> f64 {
        let (mut ca, mut cb, mut start) = (0, 0, 0);
        let mut d = 0.0_f64;
        for &end in &self.group_ends {
            for &is_a in &self.labels[start..end] {
                if is_a {
                    ca += 1;
                } else {
                    cb += 1;
                }
            }
            start = end;
            d = d.max(ecdf_gap(ca, n_a, cb, n_b));
        }
        d
    }

    fn counted_statistic(&self, n_a: usize, n_b: usize) -> f64 {
        let (mut ca, mut cb, mut start) = (0usize, 0usize, 0);
        let mut d = 0.0_f64;
        for &end in &self.group_ends {
            for k in start..end {
                ca += self.counts_a[k] as usize;
                cb += self.counts_b[k] as usize;
            }
            start = end;
            d = d.max(ecdf_gap(ca, n_a, cb, n_b));
        }
        d
    }

    fn bootstrap_statistic<R: Rng + ?Sized>(&mut self, n_a: usize, n_b: usize, rng: &mut R) -> f64 {
        let n = self.labels.len();
        self.counts_a.iter_mut().for_each(|c| *c = 0);
        self.counts_b.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n_a {
            self.counts_a[rng.gen_range(0..n)] += 1;
        }
        for _ in 0..n_b {
            self.counts_b[rng.gen_range(0..n)] += 1;
        }
        self.counted_statistic(n_a, n_b)
    }
}

fn add_one_pvalue(exceed: usize, resamples: usize) -> f64 {
    (1 + exceed) as f64 / (resamples + 1) as f64
}

/// Resampling configuration for the sample-vs-sample KS test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PermutationTest {
    pub permutations: usize,
    pub resampling: Resampling,
}

impl Default for PermutationTest {
    fn default() -> Self {
        Self {
            permutations: DEFAULT_PERMUTATIONS,
            resampling: Resampling::Permutation,
        }
    }
}

impl PermutationTest {
    pub fn new(permutations: usize, resampling: Resampling) -> Self {
        Self {
            permutations,
            resampling,
        }
    }

    /// Runs the test. The p-value is `(1 + #{D* >= D_obs}) / (B + 1)`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        a: &Sample,
        b: &Sample,
        rng: &mut R,
    ) -> Result<KsResult, StatsError> {
        for s in [a, b] {
            if s.len() < 2 {
                return Err(StatsError::InsufficientObservations {
                    required: 2,
                    got: s.len(),
                });
            }
        }
        if self.permutations < MIN_PERMUTATIONS {
            return Err(StatsError::TooFewPermutations(self.permutations));
        }
        let observed = ks_statistic(a, b)?;
        let (n_a, n_b) = (a.len(), b.len());
        let mut pooled = Pooled::new(a.values(), b.values());
        let mut exceed = 0;
        for _ in 0..self.permutations {
            let d = match self.resampling {
                Resampling::Permutation => {
                    pooled.labels.shuffle(rng);
                    pooled.labeled_statistic(n_a, n_b)
                }
                Resampling::Bootstrap => pooled.bootstrap_statistic(n_a, n_b, rng),
            };
            if d >= observed - STAT_EPS {
                exceed += 1;
            }
        }
        Ok(KsResult {
            statistic: observed,
            p_value: add_one_pvalue(exceed, self.permutations),
        })
    }
}

/// Permutation KS test with `permutations` random re-splits of the pooled sample.
pub fn permutation_pvalue<R: Rng + ?Sized>(
    a: &Sample,
    b: &Sample,
    permutations: usize,
    rng: &mut R,
) -> Result<KsResult, StatsError> {
    PermutationTest::new(permutations, Resampling::Permutation).run(a, b, rng)
}

/// Probability mass over `K` equal-width bins partitioning `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    mass: Vec<f64>,
}

/// Bin of `value` among `bins` uniform bins; `1.0` lands in the last bin.
pub fn bin_index(value: f64, bins: usize) -> usize {
    ((value * bins as f64).floor() as usize).min(bins - 1)
}

/// Per-bin counts of `values`.
pub fn bin_counts(values: &[f64], bins: usize) -> Vec<u64> {
    let mut counts = vec![0u64; bins];
    for &v in values {
        counts[bin_index(v, bins)] += 1;
    }
    counts
}

impl Histogram {
    pub fn from_counts(counts: &[u64]) -> Result<Self, StatsError> {
        if counts.len() < 2 {
            return Err(StatsError::InvalidBinCount(counts.len()));
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(StatsError::EmptySample);
        }
        let total = total as f64;
        Ok(Self {
            mass: counts.iter().map(|&c| c as f64 / total).collect(),
        })
    }

    /// Normalizes arbitrary nonnegative weights into a histogram.
    pub fn from_weights(weights: &[f64]) -> Result<Self, StatsError> {
        if weights.len() < 2 {
            return Err(StatsError::InvalidBinCount(weights.len()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(StatsError::InvalidMass);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(StatsError::InvalidMass);
        }
        Ok(Self {
            mass: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn uniform(bins: usize) -> Result<Self, StatsError> {
        Self::from_weights(&vec![1.0; bins])
    }

    pub fn bin_count(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Lower and upper edge of bin `k`.
    pub fn bin_bounds(&self, k: usize) -> (f64, f64) {
        let width = 1.0 / self.bin_count() as f64;
        (k as f64 * width, (k + 1) as f64 * width)
    }

    /// Reference CDF at the interior edges `1/K, ..., (K-1)/K`.
    fn interior_cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.mass[..self.mass.len() - 1]
            .iter()
            .map(|m| {
                acc += m;
                acc
            })
            .collect()
    }
}

/// Normalized histogram of `s` over `bins` uniform bins on `[0, 1]`.
pub fn build_histogram(s: &Sample, bins: usize) -> Result<Histogram, StatsError> {
    if bins < 2 {
        return Err(StatsError::InvalidBinCount(bins));
    }
    if s.is_empty() {
        return Err(StatsError::EmptySample);
    }
    Histogram::from_counts(&bin_counts(s.values(), bins))
}

/// Convex combination `lambda * global + (1 - lambda) * center`.
pub fn blend(global: &Histogram, center: &Histogram, lambda: f64) -> Result<Histogram, StatsError> {
    if global.bin_count() != center.bin_count() {
        return Err(StatsError::BinMismatch {
            left: global.bin_count(),
            right: center.bin_count(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(StatsError::InvalidWeight(lambda));
    }
    let mass = global
        .mass
        .iter()
        .zip(&center.mass)
        .map(|(g, c)| lambda * g + (1.0 - lambda) * c)
        .collect();
    Ok(Histogram { mass })
}

// Max gap between the batch's binned CDF and the reference CDF over interior
// bin edges. The batch is binned exactly like the reference, so a value on an
// edge counts towards the upper bin on both sides.
fn edge_statistic(counts: &[u64], n: usize, ref_cdf: &[f64]) -> f64 {
    let mut cum = 0u64;
    let mut d = 0.0_f64;
    for (count, cdf) in counts.iter().zip(ref_cdf) {
        cum += count;
        d = d.max((cum as f64 / n as f64 - cdf).abs());
    }
    d
}

/// KS test of a batch against a histogram reference.
///
/// The null distribution comes from `permutations` synthetic batches of the
/// same size drawn from `reference`. The edge statistic only depends on bin
/// occupancy, so synthetic batches are drawn as bin counts; this is the same
/// statistic [`sample_from_histogram`] draws would produce.
pub fn ks_vs_histogram<R: Rng + ?Sized>(
    batch: &Sample,
    reference: &Histogram,
    permutations: usize,
    rng: &mut R,
) -> Result<KsResult, StatsError> {
    if batch.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if batch.len() < 2 {
        return Err(StatsError::InsufficientObservations {
            required: 2,
            got: batch.len(),
        });
    }
    if permutations < MIN_PERMUTATIONS {
        return Err(StatsError::TooFewPermutations(permutations));
    }
    let bins = reference.bin_count();
    let n = batch.len();
    let cdf = reference.interior_cdf();
    let observed = edge_statistic(&bin_counts(batch.values(), bins), n, &cdf);
    let picker = WeightedIndex::new(reference.mass()).map_err(|_| StatsError::InvalidMass)?;
    let mut counts = vec![0u64; bins];
    let mut exceed = 0;
    for _ in 0..permutations {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..n {
            counts[picker.sample(rng)] += 1;
        }
        if edge_statistic(&counts, n, &cdf) >= observed - STAT_EPS {
            exceed += 1;
        }
    }
    Ok(KsResult {
        statistic: observed,
        p_value: add_one_pvalue(exceed, permutations),
    })
}

/// Draws `n` values: a bin by mass, then a uniform position inside it.
pub fn sample_from_histogram<R: Rng + ?Sized>(
    reference: &Histogram,
    n: usize,
    rng: &mut R,
) -> Result<Sample, StatsError> {
    if n == 0 {
        return Err(StatsError::InsufficientObservations {
            required: 1,
            got: 0,
        });
    }
    let picker = WeightedIndex::new(reference.mass()).map_err(|_| StatsError::InvalidMass)?;
    let values = (0..n)
        .map(|_| {
            let (lo, hi) = reference.bin_bounds(picker.sample(rng));
            (lo + rng.gen::<f64>() * (hi - lo)).min(1.0)
        })
        .collect();
    Ok(Sample(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn s(v: &[f64]) -> Sample {
        Sample::new(v.to_vec()).unwrap()
    }

    // Independent oracle: evaluate both ECDFs at every pooled point.
    fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for &x in a.iter().chain(b) {
            let fa = a.iter().filter(|&&v| v <= x).count();
            let fb = b.iter().filter(|&&v| v <= x).count();
            d = d.max(ecdf_gap(fa, a.len(), fb, b.len()));
        }
        d
    }

    // Exact permutation p-value by enumerating every split of the pool.
    fn exact_pvalue(a: &[f64], b: &[f64]) -> f64 {
        let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
        let n = pooled.len();
        let observed = brute_ks(a, b);
        let (mut total, mut exceed) = (0usize, 0usize);
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != a.len() {
                continue;
            }
            let (x, y): (Vec<_>, Vec<_>) = (0..n).partition(|&i| mask & (1 << i) != 0);
            let x: Vec<f64> = x.into_iter().map(|i| pooled[i]).collect();
            let y: Vec<f64> = y.into_iter().map(|i| pooled[i]).collect();
            total += 1;
            if brute_ks(&x, &y) >= observed - STAT_EPS {
                exceed += 1;
            }
        }
        exceed as f64 / total as f64
    }

    #[test]
    fn ks_identical_samples_is_zero() {
        let a = s(&[0.1, 0.5, 0.9]);
        assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ks_separated_supports_is_one() {
        assert_eq!(ks_statistic(&s(&[0.1, 0.2]), &s(&[0.8, 0.9])).unwrap(), 1.0);
    }

    #[test]
    fn ks_hand_example() {
        let (a, b) = ([0.1, 0.4, 0.7], [0.2, 0.5]);
        let oracle = brute_ks(&a, &b);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(ks_statistic(&s(&a), &s(&b)).unwrap(), oracle);
    }

    #[test]
    fn ks_handles_ties_across_samples() {
        let (a, b) = ([0.2, 0.2, 0.5], [0.2, 0.5, 0.5]);
        assert_eq!(ks_statistic(&s(&a), &s(&b)).unwrap(), brute_ks(&a, &b));
        assert!((brute_ks(&a, &b) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ks_rejects_empty() {
        assert_eq!(
            ks_statistic(&s(&[]), &s(&[0.3])),
            Err(StatsError::EmptySample)
        );
    }

    #[test]
    fn sample_rejects_out_of_range() {
        assert_eq!(
            Sample::new(vec![0.5, 1.2]),
            Err(StatsError::InvalidProbability(1.2))
        );
        assert!(Sample::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn permutation_identical_samples_give_p_one() {
        let a = s(&[0.1, 0.3, 0.3, 0.8]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = permutation_pvalue(&a, &a, 200, &mut rng).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn permutation_matches_exact_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10 {
            let a: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
            let b: Vec<f64> = (0..4).map(|_| rng.gen::<f64>() * 0.8 + 0.2).collect();
            let exact = exact_pvalue(&a, &b);
            let est = permutation_pvalue(&s(&a), &s(&b), 5000, &mut rng).unwrap();
            assert!(
                (est.p_value - exact).abs() <= 0.03,
                "estimate {} vs exact {exact}",
                est.p_value
            );
        }
    }

    #[test]
    fn permutation_preconditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = permutation_pvalue(&s(&[0.1]), &s(&[0.2, 0.3]), 500, &mut rng).unwrap_err();
        assert_eq!(
            err,
            StatsError::InsufficientObservations {
                required: 2,
                got: 1
            }
        );
        let err = permutation_pvalue(&s(&[0.1, 0.2]), &s(&[0.2, 0.3]), 99, &mut rng).unwrap_err();
        assert_eq!(err, StatsError::TooFewPermutations(99));
    }

    #[test]
    fn permutation_is_deterministic_given_seed() {
        let a = s(&[0.1, 0.2, 0.35, 0.6]);
        let b = s(&[0.3, 0.5, 0.55, 0.9, 0.95]);
        for mode in [Resampling::Permutation, Resampling::Bootstrap] {
            let test = PermutationTest::new(300, mode);
            let r1 = test.run(&a, &b, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let r2 = test.run(&a, &b, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(r1, r2);
            assert!(r1.p_value > 0.0 && r1.p_value <= 1.0);
        }
    }

    #[test]
    fn bootstrap_detects_clear_shift() {
        let a = s(&[0.05, 0.1, 0.12, 0.15, 0.2, 0.22, 0.25, 0.3]);
        let b = s(&[0.7, 0.72, 0.75, 0.8, 0.85, 0.9, 0.95, 0.97]);
        let test = PermutationTest::new(1000, Resampling::Bootstrap);
        let r = test.run(&a, &b, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(
            build_histogram(&s(&[0.25, 0.75]), 2).unwrap().mass(),
            &[0.5, 0.5]
        );
        assert_eq!(
            build_histogram(&s(&[0.0, 0.0, 1.0, 1.0]), 4)
                .unwrap()
                .mass(),
            &[0.5, 0.0, 0.0, 0.5]
        );
        assert_eq!(build_histogram(&s(&[]), 4), Err(StatsError::EmptySample));
        assert_eq!(
            build_histogram(&s(&[0.5]), 1),
            Err(StatsError::InvalidBinCount(1))
        );
    }

    #[test]
    fn bin_index_edges() {
        assert_eq!(bin_index(0.0, 100), 0);
        assert_eq!(bin_index(0.5, 100), 50);
        assert_eq!(bin_index(1.0, 100), 99);
        assert_eq!(bin_index(0.999_999, 100), 99);
    }

    #[test]
    fn blend_examples() {
        let g = Histogram::from_weights(&[0.6, 0.4]).unwrap();
        let c = Histogram::from_weights(&[0.2, 0.8]).unwrap();
        let mid = blend(&g, &c, 0.5).unwrap();
        assert!((mid.mass()[0] - 0.4).abs() < 1e-12);
        assert!((mid.mass()[1] - 0.6).abs() < 1e-12);
        assert_eq!(blend(&g, &c, 1.0).unwrap(), g);
        assert_eq!(blend(&g, &c, 0.0).unwrap(), c);
        assert_eq!(blend(&g, &c, 1.5), Err(StatsError::InvalidWeight(1.5)));
        let three = Histogram::uniform(3).unwrap();
        assert_eq!(
            blend(&g, &three, 0.5),
            Err(StatsError::BinMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn histogram_test_matched_batch_is_not_flagged() {
        let reference = Histogram::uniform(10).unwrap();
        // Two values per bin: exactly the reference proportions.
        let batch: Vec<f64> = (0..20).map(|i| (i / 2) as f64 / 10.0 + 0.05).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = ks_vs_histogram(&s(&batch), &reference, 1000, &mut rng).unwrap();
        assert!(r.statistic < 1e-9);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn histogram_test_flags_concentrated_batch() {
        let reference = Histogram::uniform(100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let batch: Vec<f64> = (0..50).map(|_| 0.9 + rng.gen::<f64>() * 0.1).collect();
        // Oracle: the batch CDF is 0 at edge 0.9 while the reference has 0.9 below it.
        let r = ks_vs_histogram(&s(&batch), &reference, 1000, &mut rng).unwrap();
        assert!(
            (r.statistic - 0.9).abs() < 1e-9,
            "statistic {}",
            r.statistic
        );
        assert!(r.p_value < 0.05);
    }

    #[test]
    fn histogram_test_degenerate_reference_is_legal() {
        let reference = Histogram::from_counts(&[0, 5, 0, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = ks_vs_histogram(&s(&[0.3, 0.4, 0.45]), &reference, 200, &mut rng).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(ks_vs_histogram(&s(&[]), &reference, 200, &mut rng).is_err());
    }

    #[test]
    fn sampling_from_point_mass_stays_in_bin() {
        let mut counts = vec![0u64; 10];
        counts[0] = 1;
        let h = Histogram::from_counts(&counts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = sample_from_histogram(&h, 500, &mut rng).unwrap();
        assert!(draws.values().iter().all(|&v| (0.0..0.1).contains(&v)));
        assert!(sample_from_histogram(&h, 0, &mut rng).is_err());
    }

    #[test]
    fn sampling_from_uniform_matches_binomial_concentration() {
        let bins = 20;
        let n = 100_000;
        let h = Histogram::uniform(bins).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws = sample_from_histogram(&h, n, &mut rng).unwrap();
        let p = 1.0 / bins as f64;
        let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        for c in bin_counts(draws.values(), bins) {
            assert!((c as f64 / n as f64 - p).abs() <= tol);
        }
    }
}
