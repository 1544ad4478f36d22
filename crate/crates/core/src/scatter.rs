//! Deterministic segment reductions (sum, mean, max) over index-addressed
//! buckets.
//!
//! Every source row carries a bucket index; the reductions aggregate rows
//! into `dim_size` buckets in a single pass. Accumulation order within a
//! bucket is always ascending source-row order, so results are bit-identical
//! across runs and worker counts. Empty buckets are filled with zero, which
//! matches the "empty cell is background" semantics of the dense BEV maps
//! built downstream.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScatterError {
    #[error("bucket index {index} at row {row} is out of bounds for dim_size {dim_size}")]
    IndexOutOfBounds {
        row: usize,
        index: usize,
        dim_size: usize,
    },
    #[error("index has {index_len} entries but the source has {rows} rows")]
    LengthMismatch { index_len: usize, rows: usize },
    #[error("source length {len} is not a multiple of {channels} channels")]
    RaggedSource { len: usize, channels: usize },
    #[error("channel count must be positive")]
    ZeroChannels,
}

/// Bucket assignment for a set of source rows: one index per row, each
/// strictly below `dim_size`.
#[derive(Debug, Clone)]
pub struct SegmentIndex {
    index: Vec<u32>,
    dim_size: usize,
}

impl SegmentIndex {
    /// Validates that every index is below `dim_size`; reports the first
    /// offending row otherwise.
    pub fn new(index: Vec<u32>, dim_size: usize) -> Result<Self, ScatterError> {
        for (row, &i) in index.iter().enumerate() {
            if i as usize >= dim_size {
                return Err(ScatterError::IndexOutOfBounds {
                    row,
                    index: i as usize,
                    dim_size,
                });
            }
        }
        Ok(Self { index, dim_size })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn dim_size(&self) -> usize {
        self.dim_size
    }

    pub fn indices(&self) -> &[u32] {
        &self.index
    }

    /// Recovers the index vector (already validated against `dim_size`).
    pub fn into_indices(self) -> Vec<u32> {
        self.index
    }
}

/// Dense reduction output: `dim_size x channels` values plus the number of
/// source rows that landed in each bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub values: Vec<f64>,
    pub counts: Vec<u32>,
    pub dim_size: usize,
    pub channels: usize,
}

impl SegmentResult {
    fn zeros(dim_size: usize, channels: usize) -> Self {
        Self {
            values: vec![0.0; dim_size * channels],
            counts: vec![0; dim_size],
            dim_size,
            channels,
        }
    }

    /// Values of one bucket as a channel slice.
    pub fn bucket(&self, i: usize) -> &[f64] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn value(&self, bucket: usize, channel: usize) -> f64 {
        self.values[bucket * self.channels + channel]
    }
}

/// `scatter_max` output: per-bucket maxima plus the source row that supplied
/// each maximum (`-1` for empty buckets; ties go to the smallest row index).
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterMax {
    pub result: SegmentResult,
    pub argmax: Vec<i64>,
}

impl ScatterMax {
    pub fn argmax_of(&self, bucket: usize, channel: usize) -> i64 {
        self.argmax[bucket * self.result.channels + channel]
    }
}

fn check_shape(src: &[f64], channels: usize, idx: &SegmentIndex) -> Result<usize, ScatterError> {
    if channels == 0 {
        return Err(ScatterError::ZeroChannels);
    }
    if !src.len().is_multiple_of(channels) {
        return Err(ScatterError::RaggedSource {
            len: src.len(),
            channels,
        });
    }
    let rows = src.len() / channels;
    if rows != idx.len() {
        return Err(ScatterError::LengthMismatch {
            index_len: idx.len(),
            rows,
        });
    }
    Ok(rows)
}

/// Per-bucket sums. Single ascending pass over the rows.
pub fn scatter_sum(
    src: &[f64],
    channels: usize,
    idx: &SegmentIndex,
) -> Result<SegmentResult, ScatterError> {
    let rows = check_shape(src, channels, idx)?;
    let mut out = SegmentResult::zeros(idx.dim_size(), channels);
    for row in 0..rows {
        let bucket = idx.index[row] as usize;
        out.counts[bucket] += 1;
        let dst = &mut out.values[bucket * channels..(bucket + 1) * channels];
        let srow = &src[row * channels..(row + 1) * channels];
        for (d, s) in dst.iter_mut().zip(srow) {
            *d += s;
        }
    }
    Ok(out)
}

/// Per-bucket arithmetic means; empty buckets stay zero.
pub fn scatter_mean(
    src: &[f64],
    channels: usize,
    idx: &SegmentIndex,
) -> Result<SegmentResult, ScatterError> {
    let mut out = scatter_sum(src, channels, idx)?;
    divide_by_counts(&mut out, channels);
    Ok(out)
}

/// Zero-copy variant of [`scatter_mean`]: row `r` lives at
/// `src[r * row_stride ..]` and only its first `channels` values take part.
/// Lets callers reduce in place over wider interleaved records.
pub fn scatter_mean_strided(
    src: &[f64],
    channels: usize,
    row_stride: usize,
    idx: &SegmentIndex,
) -> Result<SegmentResult, ScatterError> {
    if channels == 0 || row_stride < channels {
        return Err(ScatterError::ZeroChannels);
    }
    if !src.len().is_multiple_of(row_stride) {
        return Err(ScatterError::RaggedSource {
            len: src.len(),
            channels: row_stride,
        });
    }
    let rows = src.len() / row_stride;
    if rows != idx.len() {
        return Err(ScatterError::LengthMismatch {
            index_len: idx.len(),
            rows,
        });
    }
    let mut out = SegmentResult::zeros(idx.dim_size(), channels);
    for row in 0..rows {
        let bucket = idx.index[row] as usize;
        out.counts[bucket] += 1;
        let dst = &mut out.values[bucket * channels..(bucket + 1) * channels];
        let srow = &src[row * row_stride..row * row_stride + channels];
        for (d, s) in dst.iter_mut().zip(srow) {
            *d += s;
        }
    }
    divide_by_counts(&mut out, channels);
    Ok(out)
}

fn divide_by_counts(out: &mut SegmentResult, channels: usize) {
    for bucket in 0..out.dim_size {
        let n = out.counts[bucket];
        if n > 0 {
            let inv = 1.0 / n as f64;
            for v in &mut out.values[bucket * channels..(bucket + 1) * channels] {
                *v *= inv;
            }
        }
    }
}

/// Per-bucket, per-channel maxima with argmax rows. Empty buckets hold 0 with
/// argmax -1.
pub fn scatter_max(
    src: &[f64],
    channels: usize,
    idx: &SegmentIndex,
) -> Result<ScatterMax, ScatterError> {
    let rows = check_shape(src, channels, idx)?;
    let dim_size = idx.dim_size();
    let mut result = SegmentResult::zeros(dim_size, channels);
    let mut argmax = vec![-1i64; dim_size * channels];
    for row in 0..rows {
        let bucket = idx.index[row] as usize;
        result.counts[bucket] += 1;
        let srow = &src[row * channels..(row + 1) * channels];
        let base = bucket * channels;
        for (c, &v) in srow.iter().enumerate() {
            // Strict > keeps the earliest row on ties.
            if argmax[base + c] < 0 || v > result.values[base + c] {
                result.values[base + c] = v;
                argmax[base + c] = row as i64;
            }
        }
    }
    Ok(ScatterMax { result, argmax })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn idx(values: &[u32], dim: usize) -> SegmentIndex {
        SegmentIndex::new(values.to_vec(), dim).unwrap()
    }

    /// Naive per-bucket loop used as the independent oracle: outer loop over
    /// buckets, inner ascending loop over rows.
    fn oracle_sum(src: &[f64], channels: usize, index: &[u32], dim: usize) -> Vec<f64> {
        let rows = src.len() / channels;
        let mut out = vec![0.0; dim * channels];
        for bucket in 0..dim {
            for row in 0..rows {
                if index[row] as usize == bucket {
                    for c in 0..channels {
                        out[bucket * channels + c] += src[row * channels + c];
                    }
                }
            }
        }
        out
    }

    fn oracle_max(src: &[f64], channels: usize, index: &[u32], dim: usize) -> Vec<f64> {
        let rows = src.len() / channels;
        let mut out = vec![0.0; dim * channels];
        for bucket in 0..dim {
            for c in 0..channels {
                let mut best: Option<f64> = None;
                for row in 0..rows {
                    if index[row] as usize == bucket {
                        let v = src[row * channels + c];
                        best = Some(match best {
                            Some(b) if b >= v => b,
                            _ => v,
                        });
                    }
                }
                out[bucket * channels + c] = best.unwrap_or(0.0);
            }
        }
        out
    }

    #[test]
    fn mean_of_two_rows_in_one_bucket() {
        let r = scatter_mean(&[1.0, 3.0], 1, &idx(&[0, 0], 1)).unwrap();
        assert_eq!(r.values, vec![2.0]);
        assert_eq!(r.counts, vec![2]);
    }

    #[test]
    fn mean_matches_loop_oracle_on_small_case() {
        let src = [1.0, 2.0, 3.0, 4.0];
        let index = [0u32, 1, 0, 1];
        let r = scatter_mean(&src, 1, &idx(&index, 2)).unwrap();
        // Oracle: sums per bucket divided by per-bucket counts.
        let sums = oracle_sum(&src, 1, &index, 2);
        assert_eq!(r.values, vec![sums[0] / 2.0, sums[1] / 2.0]);
        assert_eq!(r.values, vec![2.0, 3.0]);
    }

    #[test]
    fn empty_buckets_are_zero_with_count_zero() {
        let r = scatter_mean(&[5.0, 7.0], 1, &idx(&[1, 1], 3)).unwrap();
        assert_eq!(r.values, vec![0.0, 6.0, 0.0]);
        assert_eq!(r.counts, vec![0, 2, 0]);
    }

    #[test]
    fn max_reports_argmax_row() {
        let m = scatter_max(&[1.0, 5.0, 3.0], 1, &idx(&[0, 0, 0], 1)).unwrap();
        assert_eq!(m.result.values, vec![5.0]);
        assert_eq!(m.argmax, vec![1]);
    }

    #[test]
    fn max_tie_goes_to_earlier_row() {
        let m = scatter_max(&[2.0, 5.0, 5.0], 1, &idx(&[0, 0, 0], 1)).unwrap();
        assert_eq!(m.argmax, vec![1]);
    }

    #[test]
    fn empty_bucket_max_is_zero_with_sentinel() {
        let m = scatter_max(&[-3.0], 1, &idx(&[0], 2)).unwrap();
        assert_eq!(m.result.values, vec![-3.0, 0.0]);
        assert_eq!(m.argmax, vec![0, -1]);
    }

    #[test]
    fn sum_small_cases() {
        let r = scatter_sum(&[1.0, 1.0, 1.0], 1, &idx(&[0, 0, 1], 2)).unwrap();
        assert_eq!(r.values, vec![2.0, 1.0]);

        let r = scatter_sum(&[], 1, &idx(&[], 4)).unwrap();
        assert_eq!(r.values, vec![0.0; 4]);
        assert_eq!(r.counts, vec![0; 4]);
    }

    #[test]
    fn random_inputs_match_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let rows = rng.random_range(0..200);
            let channels = rng.random_range(1..5);
            let dim = rng.random_range(1..32);
            let src: Vec<f64> = (0..rows * channels)
                .map(|_| rng.random_range(-10.0..10.0))
                .collect();
            let index: Vec<u32> = (0..rows).map(|_| rng.random_range(0..dim as u32)).collect();
            let si = idx(&index, dim);

            let sum = scatter_sum(&src, channels, &si).unwrap();
            assert_eq!(sum.values, oracle_sum(&src, channels, &index, dim));

            let max = scatter_max(&src, channels, &si).unwrap();
            assert_eq!(max.result.values, oracle_max(&src, channels, &index, dim));

            let mean = scatter_mean(&src, channels, &si).unwrap();
            for b in 0..dim {
                for c in 0..channels {
                    let n = sum.counts[b];
                    let expect = if n == 0 {
                        0.0
                    } else {
                        sum.value(b, c) / n as f64
                    };
                    let got = mean.value(b, c);
                    assert!(
                        (got - expect).abs() <= 1e-9 * expect.abs().max(1.0),
                        "bucket {b} channel {c}: {got} vs {expect}"
                    );
                }
            }
        }
    }

    #[test]
    fn strided_mean_equals_contiguous_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..30 {
            let rows = rng.random_range(0..100);
            let channels = rng.random_range(1..4);
            let stride = channels + rng.random_range(0..5);
            let dim = rng.random_range(1..16);
            let wide: Vec<f64> = (0..rows * stride)
                .map(|_| rng.random_range(-5.0..5.0))
                .collect();
            let narrow: Vec<f64> = (0..rows)
                .flat_map(|r| wide[r * stride..r * stride + channels].to_vec())
                .collect();
            let index: Vec<u32> = (0..rows).map(|_| rng.random_range(0..dim as u32)).collect();
            let si = idx(&index, dim);
            let a = scatter_mean_strided(&wide, channels, stride, &si).unwrap();
            let b = scatter_mean(&narrow, channels, &si).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn out_of_bounds_index_reports_offending_row() {
        let err = SegmentIndex::new(vec![0, 3, 1], 3).unwrap_err();
        match err {
            ScatterError::IndexOutOfBounds { row, index, dim_size } => {
                assert_eq!((row, index, dim_size), (1, 3, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(matches!(
            scatter_sum(&[1.0, 2.0, 3.0], 2, &idx(&[0], 1)),
            Err(ScatterError::RaggedSource { .. })
        ));
        assert!(matches!(
            scatter_sum(&[1.0, 2.0], 1, &idx(&[0], 1)),
            Err(ScatterError::LengthMismatch { .. })
        ));
    }

    /// Wall time for 4N rows stays within 6x the time for N rows (N = 1e6),
    /// the observable form of the O(N) contract. Eight channels keep both
    /// working sets beyond cache, so the comparison measures the streaming
    /// regime at both sizes rather than cache speed against memory speed.
    #[test]
    fn runtime_scales_linearly() {
        let dim = 1 << 14;
        let channels = 8;
        let time_rows = |n: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
            let src: Vec<f64> = (0..n * channels)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let index: Vec<u32> = (0..n).map(|_| rng.random_range(0..dim as u32)).collect();
            let si = idx(&index, dim);
            let mut samples = Vec::new();
            for rep in 0..=5 {
                let t = std::time::Instant::now();
                let r = scatter_sum(&src, channels, &si).unwrap();
                std::hint::black_box(&r);
                if rep > 0 {
                    samples.push(t.elapsed().as_secs_f64());
                }
            }
            samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
            samples[samples.len() / 2]
        };
        let t1 = time_rows(1_000_000);
        let t4 = time_rows(4_000_000);
        assert!(
            t4 <= 6.0 * t1,
            "time(4N) = {:.1} ms vs time(N) = {:.1} ms",
            t4 * 1e3,
            t1 * 1e3
        );
    }

    proptest! {
        /// mean * count == sum, within 1e-9 relative.
        #[test]
        fn mean_times_count_is_sum(
            rows in 0usize..64,
            channels in 1usize..4,
            dim in 1usize..16,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let src: Vec<f64> = (0..rows * channels).map(|_| rng.random_range(-100.0..100.0)).collect();
            let index: Vec<u32> = (0..rows).map(|_| rng.random_range(0..dim as u32)).collect();
            let si = idx(&index, dim);
            let mean = scatter_mean(&src, channels, &si).unwrap();
            let sum = scatter_sum(&src, channels, &si).unwrap();
            for b in 0..dim {
                for c in 0..channels {
                    let lhs = mean.value(b, c) * mean.counts[b] as f64;
                    let rhs = sum.value(b, c);
                    prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
                }
            }
        }

        /// Permuting rows (and the index with them) leaves max bit-identical
        /// and sum exact on integer-valued inputs; mean stays within 1e-12
        /// relative on arbitrary reals.
        #[test]
        fn permutation_invariance(
            rows in 1usize..48,
            dim in 1usize..8,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Integer-valued reals make f64 addition exact regardless of order.
            let src: Vec<f64> = (0..rows).map(|_| rng.random_range(-50..50) as f64).collect();
            let index: Vec<u32> = (0..rows).map(|_| rng.random_range(0..dim as u32)).collect();

            let mut order: Vec<usize> = (0..rows).collect();
            for i in (1..rows).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let src_p: Vec<f64> = order.iter().map(|&i| src[i]).collect();
            let index_p: Vec<u32> = order.iter().map(|&i| index[i]).collect();

            let a = idx(&index, dim);
            let b = idx(&index_p, dim);
            prop_assert_eq!(
                scatter_sum(&src, 1, &a).unwrap().values,
                scatter_sum(&src_p, 1, &b).unwrap().values
            );
            prop_assert_eq!(
                scatter_max(&src, 1, &a).unwrap().result.values,
                scatter_max(&src_p, 1, &b).unwrap().result.values
            );

            // Mean over arbitrary reals: permutation changes rounding only.
            let srcf: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
            let srcf_p: Vec<f64> = order.iter().map(|&i| srcf[i]).collect();
            let m1 = scatter_mean(&srcf, 1, &a).unwrap();
            let m2 = scatter_mean(&srcf_p, 1, &b).unwrap();
            for bkt in 0..dim {
                let (x, y) = (m1.values[bkt], m2.values[bkt]);
                prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }

        /// A single-bucket input reduces to the plain mean / max of all rows.
        #[test]
        fn single_bucket_reduces_to_plain_stats(
            values in proptest::collection::vec(-1e6f64..1e6, 1..40),
        ) {
            let index = vec![0u32; values.len()];
            let si = idx(&index, 1);
            let mean = scatter_mean(&values, 1, &si).unwrap();
            let max = scatter_max(&values, 1, &si).unwrap();
            let plain_mean: f64 = values.iter().sum::<f64>() / values.len() as f64;
            let plain_max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((mean.values[0] - plain_mean).abs() <= 1e-9 * plain_mean.abs().max(1.0));
            prop_assert_eq!(max.result.values[0], plain_max);
        }
    }
}
