//! Cross-match statistic on an optimal non-bipartite matching.
//!
//! Two samples of equal size `N` are pooled, paired by a minimum-total-distance
//! perfect matching, and the pairs with one member from each sample are
//! counted. Under the null of identical distributions that count has a known
//! label-permutation distribution; a count at or above its lower `q` quantile
//! does not reject.

mod blossom;

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower quantile of the null distribution used as the cut-off.
pub const DEFAULT_QUANTILE: f64 = 0.05;
/// Default number of label permutations for the null quantile.
pub const DEFAULT_REPS: usize = 100_000;
/// Smallest accepted number of null replications.
pub const MIN_REPS: usize = 1000;
/// Seed of the cached default thresholds.
pub const THRESHOLD_SEED: u64 = 0x6e6270;

/// Resolution of the integer edge weights relative to the largest distance.
const WEIGHT_SCALE: f64 = 1e9;

/// A perfect matching with its total Euclidean length.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// Pairs `(i, j)` with `i < j`, sorted by `i`.
    pub pairs: Vec<(usize, usize)>,
    pub total_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossMatchResult {
    pub cross_count: usize,
    pub total_pairs: usize,
    pub threshold: usize,
    pub pass: bool,
    /// Pairs of pooled indices: `0..N` are rows of `a`, `N..2N` rows of `b`.
    pub matching: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossMatchOptions {
    pub quantile: f64,
    pub reps: usize,
    pub seed: u64,
    /// Scale each coordinate by its pooled standard deviation before matching.
    pub standardize: bool,
}

impl Default for CrossMatchOptions {
    fn default() -> Self {
        Self {
            quantile: DEFAULT_QUANTILE,
            reps: DEFAULT_REPS,
            seed: THRESHOLD_SEED,
            standardize: false,
        }
    }
}

fn distance(points: &DMatrix<f64>, i: usize, j: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(points.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Exact minimum-total-distance perfect matching of the rows of `points`.
pub fn min_weight_perfect_matching(points: &DMatrix<f64>) -> Result<Matching> {
    let m = points.nrows();
    if m % 2 == 1 {
        return Err(Error::OddPointCount(m));
    }
    if points.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("points must be finite".into()));
    }
    if m == 0 {
        return Ok(Matching { pairs: Vec::new(), total_distance: 0.0 });
    }
    let mut dist = vec![0.0; m * m];
    let mut d_max: f64 = 0.0;
    for i in 0..m {
        for j in i + 1..m {
            let d = distance(points, i, j);
            dist[i * m + j] = d;
            dist[j * m + i] = d;
            d_max = d_max.max(d);
        }
    }
    // Maximising sum(c - d) over a complete graph with positive weights yields
    // a perfect matching of minimum total distance.
    let scale = if d_max > 0.0 { WEIGHT_SCALE / d_max } else { 1.0 };
    let ceiling = (d_max * scale).round() as i64 + 1;
    let mates = blossom::Blossom::new(m, |i, j| ceiling - (dist[i * m + j] * scale).round() as i64).solve();
    let mut pairs = Vec::with_capacity(m / 2);
    let mut total_distance = 0.0;
    for (i, &j) in mates.iter().enumerate() {
        if j == usize::MAX || mates[j] != i {
            return Err(Error::InvalidInput("matching is not perfect".into()));
        }
        if i < j {
            pairs.push((i, j));
            total_distance += dist[i * m + j];
        }
    }
    Ok(Matching { pairs, total_distance })
}

fn pooled_sd(pooled: &DMatrix<f64>) -> Vec<f64> {
    let m = pooled.nrows() as f64;
    pooled
        .column_iter()
        .map(|c| {
            let mean = c.sum() / m;
            let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect()
}

/// Cross-match of `a` and `b` against the cached default null threshold.
pub fn cross_match(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<CrossMatchResult> {
    let threshold = default_threshold(a.nrows())?;
    cross_match_with_threshold(a, b, threshold, false)
}

/// Cross-match with the threshold simulated from `opts`.
pub fn cross_match_with(a: &DMatrix<f64>, b: &DMatrix<f64>, opts: &CrossMatchOptions) -> Result<CrossMatchResult> {
    check_samples(a, b)?;
    let mut rng = crate::rng::from_seed(opts.seed);
    let threshold = null_quantile(a.nrows(), opts.quantile, opts.reps, &mut rng)?;
    cross_match_with_threshold(a, b, threshold, opts.standardize)
}

fn check_samples(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::UnequalSamples(format!("{} vs {} draws", a.nrows(), b.nrows())));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::UnequalSamples(format!("dimension {} vs {}", a.ncols(), b.ncols())));
    }
    if a.nrows() == 0 {
        return Err(Error::InvalidInput("samples are empty".into()));
    }
    Ok(())
}

/// Cross-match with an explicit threshold.
///
/// The pooled points are matched in a canonical (lexicographic) order, so the
/// result does not depend on which sample is passed first.
pub fn cross_match_with_threshold(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    threshold: usize,
    standardize: bool,
) -> Result<CrossMatchResult> {
    check_samples(a, b)?;
    let n = a.nrows();
    let p = a.ncols();
    let mut pooled = DMatrix::zeros(2 * n, p);
    pooled.rows_mut(0, n).copy_from(a);
    pooled.rows_mut(n, n).copy_from(b);
    if standardize {
        for (j, sd) in pooled_sd(&pooled).into_iter().enumerate() {
            pooled.column_mut(j).unscale_mut(sd);
        }
    }
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&i, &j| {
        pooled
            .row(i)
            .iter()
            .zip(pooled.row(j).iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sorted = pooled.select_rows(order.iter());
    let matching = min_weight_perfect_matching(&sorted)?;
    let mut pairs: Vec<(usize, usize)> = matching
        .pairs
        .iter()
        .map(|&(i, j)| {
            let (x, y) = (order[i], order[j]);
            (x.min(y), x.max(y))
        })
        .collect();
    pairs.sort_unstable();
    let cross_count = pairs.iter().filter(|&&(i, j)| (i < n) != (j < n)).count();
    Ok(CrossMatchResult {
        cross_count,
        total_pairs: n,
        threshold,
        pass: cross_count >= threshold,
        matching: pairs,
    })
}

/// Lower `q` quantile of the cross count under random labelling of `n + n`
/// matched points, by Monte Carlo over `reps` labellings.
pub fn null_quantile<R: Rng + ?Sized>(n: usize, q: f64, reps: usize, rng: &mut R) -> Result<usize> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("quantile must lie in (0, 1), got {q}")));
    }
    if reps < MIN_REPS {
        return Err(Error::InvalidInput(format!("at least {MIN_REPS} replications required, got {reps}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let counts = null_counts(n, reps, rng);
    let mut hist = vec![0usize; n + 1];
    for c in counts {
        hist[c] += 1;
    }
    let needed = q * reps as f64;
    let mut cumulative = 0usize;
    for (c, &k) in hist.iter().enumerate() {
        cumulative += k;
        if cumulative as f64 >= needed {
            return Ok(c);
        }
    }
    Ok(n)
}

/// Cross counts of `reps` random balanced labellings of `n` fixed pairs.
pub fn null_counts<R: Rng + ?Sized>(n: usize, reps: usize, rng: &mut R) -> Vec<usize> {
    let mut labels: Vec<bool> = (0..2 * n).map(|i| i < n).collect();
    (0..reps)
        .map(|_| {
            labels.shuffle(rng);
            labels.chunks_exact(2).filter(|pair| pair[0] != pair[1]).count()
        })
        .collect()
}

/// Mean cross count under the null: each of the `n` pairs is mixed with
/// probability `n / (2n - 1)`.
pub fn null_mean(n: usize) -> f64 {
    let n = n as f64;
    n * n / (2.0 * n - 1.0)
}

/// Null 0.05 threshold for `n` per sample at the default replication count,
/// simulated once per `n` and cached.
pub fn default_threshold(n: usize) -> Result<usize> {
    static CACHE: OnceLock<Mutex<HashMap<usize, usize>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&t) = cache.lock().expect("threshold cache").get(&n) {
        return Ok(t);
    }
    let mut rng = crate::rng::from_seed(THRESHOLD_SEED);
    let t = null_quantile(n, DEFAULT_QUANTILE, DEFAULT_REPS, &mut rng)?;
    cache.lock().expect("threshold cache").insert(n, t);
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn line(xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(xs.len(), 1, xs)
    }

    fn brute_force(points: &DMatrix<f64>) -> f64 {
        fn go(points: &DMatrix<f64>, free: &mut Vec<usize>) -> f64 {
            if free.is_empty() {
                return 0.0;
            }
            let first = free.remove(0);
            let mut best = f64::INFINITY;
            for k in 0..free.len() {
                let other = free.remove(k);
                best = best.min(distance(points, first, other) + go(points, free));
                free.insert(k, other);
            }
            free.insert(0, first);
            best
        }
        go(points, &mut (0..points.nrows()).collect())
    }

    #[test]
    fn line_geometry_pairs_neighbours() {
        let m = min_weight_perfect_matching(&line(&[0.0, 1.0, 10.0, 11.0])).unwrap();
        assert_eq!(m.pairs, vec![(0, 1), (2, 3)]);
        assert!((m.total_distance - 2.0).abs() < 1e-12);
        let two = min_weight_perfect_matching(&line(&[3.0, -1.0])).unwrap();
        assert_eq!(two.pairs, vec![(0, 1)]);
    }

    #[test]
    fn odd_count_is_rejected() {
        assert!(matches!(min_weight_perfect_matching(&line(&[0.0, 1.0, 2.0])), Err(Error::OddPointCount(3))));
    }

    #[test]
    fn matches_brute_force_on_small_instances() {
        let mut rng = crate::rng::Rng::seed_from_u64(3);
        for trial in 0..300 {
            let m = 2 * (1 + trial % 5);
            let p = 1 + trial % 3;
            let pts = DMatrix::from_fn(m, p, |_, _| rng.random::<f64>() * 10.0);
            let got = min_weight_perfect_matching(&pts).unwrap();
            let want = brute_force(&pts);
            assert!((got.total_distance - want).abs() <= 1e-6 * want.max(1.0), "trial {trial}: {} vs {want}", got.total_distance);
        }
    }

    #[test]
    fn cross_counts_on_the_line() {
        let separated = cross_match_with_threshold(&line(&[0.0, 1.0]), &line(&[10.0, 11.0]), 1, false).unwrap();
        assert_eq!(separated.cross_count, 0);
        assert!(!separated.pass);
        let mixed = cross_match_with_threshold(&line(&[0.0, 10.0]), &line(&[1.0, 11.0]), 1, false).unwrap();
        assert_eq!(mixed.cross_count, 2);
        assert!(mixed.pass);
    }

    #[test]
    fn unequal_samples_are_rejected() {
        let r = cross_match_with_threshold(&line(&[0.0, 1.0]), &line(&[2.0]), 1, false);
        assert!(matches!(r, Err(Error::UnequalSamples(_))));
    }

    #[test]
    fn single_pair_null_is_forced() {
        let mut rng = crate::rng::from_seed(1);
        assert_eq!(null_quantile(1, 0.05, 1000, &mut rng).unwrap(), 1);
    }

    #[test]
    fn null_quantile_validates_inputs() {
        let mut rng = crate::rng::from_seed(1);
        assert!(null_quantile(10, 0.05, 999, &mut rng).is_err());
        assert!(null_quantile(10, 0.0, 1000, &mut rng).is_err());
        assert!(null_quantile(10, 1.0, 1000, &mut rng).is_err());
    }

    #[test]
    fn standardizing_ignores_coordinate_scale() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1000.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.1, 900.0, 0.9, 100.0]);
        let scaled_a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let scaled_b = DMatrix::from_row_slice(2, 2, &[0.1, 0.9, 0.9, 0.1]);
        let x = cross_match_with_threshold(&a, &b, 1, true).unwrap();
        let y = cross_match_with_threshold(&scaled_a, &scaled_b, 1, true).unwrap();
        assert_eq!(x, y);
    }
}
