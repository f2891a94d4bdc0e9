//! Batch-means estimation of time averages along a correlated chain.

use crate::error::{GlaError, Result};

/// Monte Carlo mean with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Number of samples.
    pub n: u64,
    pub batches: usize,
}

impl MomentEstimate {
    /// `|self − other|` together with the combined standard error.
    pub fn difference(&self, reference: f64) -> (f64, f64) {
        ((self.mean - reference).abs(), self.stderr)
    }

    /// Whether `value` lies within `k` standard errors of the mean.
    pub fn within(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// Single-pass accumulator over a stream of known length, split into
/// `batches` contiguous blocks of (nearly) equal size.
#[derive(Debug, Clone)]
pub struct BatchAccumulator {
    total: u64,
    batches: usize,
    seen: u64,
    next_boundary: u64,
    batch_sum: f64,
    batch_len: u64,
    batch_means: Vec<f64>,
}

impl BatchAccumulator {
    pub fn new(total: u64, batches: usize) -> Self {
        let batches = batches.max(1);
        let mut acc = Self {
            total,
            batches,
            seen: 0,
            next_boundary: 0,
            batch_sum: 0.0,
            batch_len: 0,
            batch_means: Vec::with_capacity(batches),
        };
        acc.next_boundary = acc.boundary(0);
        acc
    }

    /// Exclusive end of batch `b`.
    fn boundary(&self, b: usize) -> u64 {
        ((b as u128 + 1) * self.total as u128 / self.batches as u128) as u64
    }

    #[inline]
    pub fn push(&mut self, value: f64) {
        self.batch_sum += value;
        self.batch_len += 1;
        self.seen += 1;
        if self.seen == self.next_boundary {
            self.close_batch();
        }
    }

    fn close_batch(&mut self) {
        self.batch_means.push(self.batch_sum / self.batch_len as f64);
        self.batch_sum = 0.0;
        self.batch_len = 0;
        let b = self.batch_means.len();
        self.next_boundary = if b < self.batches { self.boundary(b) } else { u64::MAX };
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    /// Mean of batch means and `sd(batch means) / √batches`.
    pub fn finish(&self) -> Result<MomentEstimate> {
        let required = 2 * self.batches as u64;
        if self.seen < required || self.seen != self.total {
            return Err(GlaError::TooFewSamples {
                samples: self.seen,
                batches: self.batches,
                required: required.max(self.total),
            });
        }
        Ok(estimate_from_batch_means(&self.batch_means, self.seen))
    }
}

fn estimate_from_batch_means(means: &[f64], n: u64) -> MomentEstimate {
    let k = means.len() as f64;
    let mean = means.iter().sum::<f64>() / k;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k - 1.0);
    MomentEstimate { mean, stderr: (var / k).sqrt(), n, batches: means.len() }
}

/// Batch-means estimate from a stored sample. Requires `n ≥ 2·batches`.
pub fn batch_means(samples: &[f64], batches: usize) -> Result<MomentEstimate> {
    if batches < 2 {
        return Err(GlaError::invalid("batch means needs at least 2 batches"));
    }
    let mut acc = BatchAccumulator::new(samples.len() as u64, batches);
    for &v in samples {
        acc.push(v);
    }
    acc.finish()
}

/// Combines estimates from independent chains of equal length: the mean of
/// means, with standard errors added in quadrature.
pub fn pool_estimates(parts: &[MomentEstimate]) -> Option<MomentEstimate> {
    if parts.is_empty() {
        return None;
    }
    let k = parts.len() as f64;
    let mean = parts.iter().map(|e| e.mean).sum::<f64>() / k;
    let stderr = parts.iter().map(|e| e.stderr * e.stderr).sum::<f64>().sqrt() / k;
    Some(MomentEstimate {
        mean,
        stderr,
        n: parts.iter().map(|e| e.n).sum(),
        batches: parts.iter().map(|e| e.batches).sum(),
    })
}
