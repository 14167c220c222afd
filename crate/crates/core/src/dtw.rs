//! Chunked dynamic time warping between two messages' feature series.
//!
//! The profile layout is fixed: 128 chunks each of `original` and
//! `smoothed`, then 58 chunks each of `envelope`, `variance`, `maximum`
//! and `minimum`, for 2 * 128 + 4 * 58 = 488 distances.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureSet, FEATURE_NAMES};
use crate::scalar::Real;

pub const SAMPLE_CHUNKS: usize = 128;
pub const BLOCK_CHUNKS: usize = 58;
/// Chunk count of each feature series, in [`FEATURE_NAMES`] order.
pub const CHUNK_LAYOUT: [usize; 6] = [
    SAMPLE_CHUNKS,
    SAMPLE_CHUNKS,
    BLOCK_CHUNKS,
    BLOCK_CHUNKS,
    BLOCK_CHUNKS,
    BLOCK_CHUNKS,
];
pub const PROFILE_LEN: usize = 2 * SAMPLE_CHUNKS + 4 * BLOCK_CHUNKS;

/// Minimum-cost monotone alignment of `x` and `y` with local cost
/// `|x(i) - y(j)|` and steps (1,0), (0,1), (1,1), from (0,0) to the last
/// pair. Exact, no window constraint.
pub fn dtw_distance<T: Real>(x: &[T], y: &[T]) -> Result<T> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptyInput("dtw sequence"));
    }
    let m = y.len();
    let mut prev = vec![T::infinity(); m];
    let mut curr = vec![T::infinity(); m];
    for (i, &xi) in x.iter().enumerate() {
        for j in 0..m {
            let cost = (xi - y[j]).abs();
            let best = match (i, j) {
                (0, 0) => T::zero(),
                (0, _) => curr[j - 1],
                (_, 0) => prev[0],
                _ => prev[j].min(curr[j - 1]).min(prev[j - 1]),
            };
            curr[j] = cost + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m - 1])
}

/// `[start, end)` bounds of `chunks` contiguous pieces of a length-`len`
/// series; the first `len % chunks` pieces are one element longer.
pub fn chunk_bounds(len: usize, chunks: usize) -> Result<Vec<(usize, usize)>> {
    if chunks == 0 || len < chunks {
        return Err(Error::SeriesTooShort { len, required: chunks.max(1) });
    }
    let base = len / chunks;
    let extra = len % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for k in 0..chunks {
        let size = base + usize::from(k < extra);
        out.push((start, start + size));
        start += size;
    }
    Ok(out)
}

/// 488 chunked DTW distances between two feature sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileVector<T> {
    distances: Vec<T>,
}

impl<T: Real> ProfileVector<T> {
    pub fn new(distances: Vec<T>) -> Result<Self> {
        if distances.len() != PROFILE_LEN {
            return Err(Error::DimensionMismatch {
                expected: PROFILE_LEN,
                actual: distances.len(),
            });
        }
        if distances.iter().any(|d| !d.is_finite() || *d < T::zero()) {
            return Err(Error::NonFinite("profile distances"));
        }
        Ok(Self { distances })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.distances
    }

    pub fn into_vec(self) -> Vec<T> {
        self.distances
    }

    /// Distances belonging to feature `index` (in [`FEATURE_NAMES`] order).
    pub fn feature(&self, index: usize) -> &[T] {
        let start: usize = CHUNK_LAYOUT[..index].iter().sum();
        &self.distances[start..start + CHUNK_LAYOUT[index]]
    }

    /// `original_000,...,minimum_057`.
    pub fn csv_header() -> String {
        let mut cols = Vec::with_capacity(PROFILE_LEN);
        for (name, &chunks) in FEATURE_NAMES.iter().zip(&CHUNK_LAYOUT) {
            for k in 0..chunks {
                cols.push(format!("{name}_{k:03}"));
            }
        }
        cols.join(",")
    }

    pub fn write_csv_row<W: Write>(&self, writer: &mut W) -> Result<()> {
        let cells: Vec<String> = self.distances.iter().map(|d| d.as_f64().to_string()).collect();
        writeln!(writer, "{}", cells.join(","))?;
        Ok(())
    }

    pub fn parse_csv_row(line: &str) -> Result<Self> {
        let values = line
            .trim()
            .split(',')
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map(T::lit)
                    .map_err(|e| Error::Format(format!("profile cell: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        Self::new(values)
    }
}

/// Chunk-by-chunk DTW between corresponding series of `a` and `b`. Each
/// series is chunked by its own length.
pub fn build_profile<T: Real>(a: &FeatureSet<T>, b: &FeatureSet<T>) -> Result<ProfileVector<T>> {
    let mut distances = Vec::with_capacity(PROFILE_LEN);
    for ((sa, sb), &chunks) in a.series().iter().zip(b.series()).zip(&CHUNK_LAYOUT) {
        let ca = chunk_bounds(sa.len(), chunks)?;
        let cb = chunk_bounds(sb.len(), chunks)?;
        for (&(a0, a1), &(b0, b1)) in ca.iter().zip(&cb) {
            distances.push(dtw_distance(&sa[a0..a1], &sb[b0..b1])?);
        }
    }
    ProfileVector::new(distances)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerates every monotone path from (0,0) to (n-1,m-1) explicitly and
    /// sums each one start to end.
    fn brute_force(x: &[f64], y: &[f64]) -> f64 {
        fn paths(n: usize, m: usize, i: usize, j: usize, prefix: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
            prefix.push((i, j));
            if i == n - 1 && j == m - 1 {
                out.push(prefix.clone());
            } else {
                if i + 1 < n {
                    paths(n, m, i + 1, j, prefix, out);
                }
                if j + 1 < m {
                    paths(n, m, i, j + 1, prefix, out);
                }
                if i + 1 < n && j + 1 < m {
                    paths(n, m, i + 1, j + 1, prefix, out);
                }
            }
            prefix.pop();
        }
        let mut all = Vec::new();
        paths(x.len(), y.len(), 0, 0, &mut Vec::new(), &mut all);
        all.iter()
            .map(|p| p.iter().fold(0.0, |acc, &(i, j)| acc + (x[i] - y[j]).abs()))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn small_examples() {
        assert_eq!(dtw_distance(&[0.0, 1.0], &[1.0]).unwrap(), 1.0);
        assert_eq!(dtw_distance(&[3.0, 1.0, 4.0], &[3.0, 1.0, 4.0]).unwrap(), 0.0);
        assert_eq!(dtw_distance(&[1.0f32], &[4.0]).unwrap(), 3.0);
        assert!(dtw_distance::<f64>(&[], &[1.0]).is_err());
    }

    #[test]
    fn chunking_is_near_equal() {
        assert_eq!(chunk_bounds(10, 3).unwrap(), vec![(0, 4), (4, 7), (7, 10)]);
        assert_eq!(chunk_bounds(58, 58).unwrap().len(), 58);
        assert!(chunk_bounds(57, 58).is_err());
        let b = chunk_bounds(3333, 128).unwrap();
        assert_eq!(b.last().unwrap().1, 3333);
        let sizes: Vec<usize> = b.iter().map(|(s, e)| e - s).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn layout_is_488() {
        assert_eq!(PROFILE_LEN, 488);
        assert_eq!(CHUNK_LAYOUT.iter().sum::<usize>(), 488);
        assert_eq!(ProfileVector::<f64>::csv_header().split(',').count(), 488);
        assert!(ProfileVector::new(vec![0.0f64; 487]).is_err());
        assert!(ProfileVector::new(vec![-1.0f64; 488]).is_err());
    }

    #[test]
    fn csv_row_round_trip() {
        let p = ProfileVector::new((0..488).map(|i| i as f64 / 7.0).collect()).unwrap();
        let mut buf = Vec::new();
        p.write_csv_row(&mut buf).unwrap();
        let back = ProfileVector::<f64>::parse_csv_row(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, p);
        assert_eq!(p.feature(2)[0], 256.0 / 7.0);
    }

    fn random_features(seed: u64, len: usize) -> FeatureSet<f64> {
        use num_complex::Complex;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Complex<f64>> = (0..len)
            .map(|_| Complex::new(rng.gen_range(0.5..1.5), rng.gen_range(-0.2..0.2)))
            .collect();
        crate::features::features_from_samples(&x, &Default::default()).unwrap()
    }

    #[test]
    fn profile_of_identical_sets_is_zero() {
        let a = random_features(1, 3000);
        let p = build_profile(&a, &a).unwrap();
        assert_eq!(p.as_slice().len(), 488);
        assert!(p.as_slice().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn profile_is_symmetric_across_lengths() {
        let a = random_features(2, 3000);
        let b = random_features(3, 3217);
        let ab = build_profile(&a, &b).unwrap();
        let ba = build_profile(&b, &a).unwrap();
        for (x, y) in ab.as_slice().iter().zip(ba.as_slice()) {
            assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
        assert!(ab.as_slice().iter().any(|&d| d > 0.0));
    }

    #[test]
    fn profile_rejects_short_series() {
        let a = random_features(4, 2000);
        assert!(matches!(build_profile(&a, &a), Err(Error::SeriesTooShort { len: 40, required: 58 })));
    }

    fn seq() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 1..7)
    }

    proptest! {
        #[test]
        fn matches_exhaustive_enumeration(x in seq(), y in seq()) {
            prop_assert_eq!(dtw_distance(&x, &y).unwrap(), brute_force(&x, &y));
        }

        #[test]
        fn symmetric_and_zero_on_self(x in prop::collection::vec(-5.0f64..5.0, 1..40), y in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            prop_assert_eq!(dtw_distance(&x, &x).unwrap(), 0.0);
            let d = dtw_distance(&x, &y).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert!((d - dtw_distance(&y, &x).unwrap()).abs() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn circular_shift_no_worse_than_pointwise(x in prop::collection::vec(-5.0f64..5.0, 2..60)) {
            let mut shifted = x.clone();
            shifted.rotate_right(1);
            let euclid: f64 = x.iter().zip(&shifted).map(|(a, b)| (a - b).abs()).sum();
            prop_assert!(dtw_distance(&x, &shifted).unwrap() <= euclid + 1e-12);
        }
    }
}
