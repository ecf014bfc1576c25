use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::scalar::Real;

/// Reduces `N × D` clip features to `T × D` by chunk means.
///
/// Chunk `j` covers clip rows `[⌊jN/T⌋, ⌊(j+1)N/T⌋)`. When that range is empty
/// (only possible for `N < T`) row `j` copies clip `min(⌊jN/T⌋, N−1)`.
pub fn aggregate_segments<T: Real>(clips: &Matrix<T>, segments: usize) -> Result<Matrix<T>> {
    let (n, d) = clips.shape();
    if n == 0 || segments == 0 {
        return Err(Error::Usage(format!(
            "cannot aggregate {n} clips into {segments} segments"
        )));
    }
    let bound = |j: usize| j * n / segments;
    let mut out = Matrix::zeros(segments, d);
    for j in 0..segments {
        let (lo, hi) = (bound(j), bound(j + 1));
        if lo == hi {
            let src = lo.min(n - 1);
            for k in 0..d {
                out.set(j, k, clips.get(src, k));
            }
            continue;
        }
        let count = T::from_count(hi - lo);
        for k in 0..d {
            let total = (lo..hi).fold(T::zero(), |acc, i| acc + clips.get(i, k));
            out.set(j, k, total / count);
        }
    }
    Ok(out)
}

/// Fisher–Yates permutation of `0..n` drawn from a ChaCha8 stream seeded with `seed`.
///
/// Walks `i` from `n−1` down to `1`, swapping position `i` with a uniform
/// index in `0..=i`.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        p.swap(i, j);
    }
    p
}

/// Permutes the columns (segments) of a `D × T` matrix.
pub fn shuffle_segments<T: Real>(features: &Matrix<T>, seed: u64) -> Matrix<T> {
    features.select_columns(&permutation(features.cols(), seed))
}

/// Concatenates audio features onto RGB features per segment.
///
/// Audio row `⌊i·N_a/N⌋` is paired with RGB row `i`.
pub fn fuse_audio<T: Real>(rgb: &Matrix<T>, audio: &Matrix<T>) -> Result<Matrix<T>> {
    let (n, d1) = rgb.shape();
    let (na, d2) = audio.shape();
    if n == 0 || na == 0 {
        return Err(Error::Usage(format!(
            "cannot fuse {n} rgb segments with {na} audio segments"
        )));
    }
    Ok(Matrix::from_fn(n, d1 + d2, |i, k| {
        if k < d1 {
            rgb.get(i, k)
        } else {
            audio.get(i * na / n, k - d1)
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clips(n: usize, d: usize) -> Matrix<f64> {
        Matrix::from_fn(n, d, |i, k| (i * 10 + k) as f64)
    }

    #[test]
    fn aggregation_identity_when_counts_match() {
        let c = clips(6, 3);
        assert_eq!(aggregate_segments(&c, 6).unwrap(), c);
    }

    #[test]
    fn aggregation_pairs() {
        let c = Matrix::from_fn(64, 2, |i, k| ((i * 31 + k * 7) % 17) as f64 * 0.25);
        let out = aggregate_segments(&c, 32).unwrap();
        for j in 0..32 {
            for k in 0..2 {
                assert_eq!(out.get(j, k), (c.get(2 * j, k) + c.get(2 * j + 1, k)) / 2.0);
            }
        }
    }

    #[test]
    fn aggregation_upsamples_short_videos() {
        let c = clips(5, 1);
        let out = aggregate_segments(&c, 8).unwrap();
        let src: Vec<f64> = out.column(0).iter().map(|v| v / 10.0).collect();
        assert_eq!(src, vec![0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 3.0, 4.0]);
    }

    #[test]
    fn aggregation_rejects_empty() {
        assert!(aggregate_segments(&Matrix::<f64>::zeros(0, 3), 4).is_err());
        assert!(aggregate_segments(&clips(3, 3), 0).is_err());
    }

    #[test]
    fn shuffle_golden_permutation() {
        // Frozen output of the seeded generator; changes here break reproducibility.
        assert_eq!(permutation(4, 0), GOLDEN_SEED0_T4.to_vec());
        let f = Matrix::from_fn(2, 4, |i, j| (i * 4 + j) as f64);
        let s = shuffle_segments(&f, 0);
        for (j, &src) in GOLDEN_SEED0_T4.iter().enumerate() {
            assert_eq!(s.column(j), f.column(src));
        }
    }

    const GOLDEN_SEED0_T4: [usize; 4] = [0, 1, 3, 2];

    #[test]
    fn single_segment_unchanged() {
        let f = Matrix::from_fn(3, 1, |i, _| i as f64);
        assert_eq!(shuffle_segments(&f, 42), f);
    }

    #[test]
    fn fusion() {
        let rgb = clips(4, 2);
        let audio = Matrix::from_fn(2, 1, |i, _| 100.0 + i as f64);
        let fused = fuse_audio(&rgb, &audio).unwrap();
        assert_eq!(fused.column(2), vec![100.0, 100.0, 101.0, 101.0]);
        assert_eq!(fused.column_range(0, 2), rgb);

        let same = fuse_audio(&rgb, &clips(4, 3)).unwrap();
        assert_eq!(same.row(2), &[20.0, 21.0, 20.0, 21.0, 22.0]);

        let wide = fuse_audio(&Matrix::<f64>::zeros(3, 1024), &Matrix::zeros(3, 128)).unwrap();
        assert_eq!(wide.cols(), 1152);
        assert!(fuse_audio(&rgb, &Matrix::zeros(0, 2)).is_err());
    }
}
