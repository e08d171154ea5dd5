//! Samples, datasets and the exploration/holdout split.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One observation: a feature vector `x` and a scalar response `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { x, y })
    }

    pub fn as_ref(&self) -> SampleRef<'_> {
        SampleRef { x: &self.x, y: self.y }
    }
}

/// Borrowed view of a sample stored inside a [`Dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRef<'a> {
    pub x: &'a [f64],
    pub y: f64,
}

impl SampleRef<'_> {
    pub fn to_owned(&self) -> Sample {
        Sample {
            x: self.x.to_vec(),
            y: self.y,
        }
    }
}

/// Ordered samples sharing one feature dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::Dimension { expected: 1, got: 0 });
        }
        Ok(Self {
            d,
            x: Vec::new(),
            y: Vec::new(),
        })
    }

    pub fn with_capacity(d: usize, n: usize) -> Result<Self> {
        let mut data = Self::new(d)?;
        data.x.reserve(n * d);
        data.y.reserve(n);
        Ok(data)
    }

    pub fn from_samples<I>(d: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = Sample>,
    {
        let mut data = Self::new(d)?;
        for s in samples {
            data.push(s.as_ref())?;
        }
        Ok(data)
    }

    pub fn push(&mut self, sample: SampleRef<'_>) -> Result<()> {
        if sample.x.len() != self.d {
            return Err(Error::Dimension {
                expected: self.d,
                got: sample.x.len(),
            });
        }
        if !sample.y.is_finite() || sample.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        self.x.extend_from_slice(sample.x);
        self.y.push(sample.y);
        Ok(())
    }

    /// Appends without validation. Callers guarantee dimension and finiteness.
    pub(crate) fn push_unchecked(&mut self, x: &[f64], y: f64) {
        debug_assert_eq!(x.len(), self.d);
        self.x.extend_from_slice(x);
        self.y.push(y);
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<SampleRef<'_>> {
        let y = *self.y.get(i)?;
        Some(SampleRef {
            x: &self.x[i * self.d..(i + 1) * self.d],
            y,
        })
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = SampleRef<'_>> + '_ {
        self.x
            .chunks_exact(self.d)
            .zip(self.y.iter())
            .map(|(x, &y)| SampleRef { x, y })
    }

    /// Contiguous sub-range `[start, end)` as a new dataset.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start > end || end > self.len() {
            return Err(Error::Size {
                size: end,
                max: self.len(),
            });
        }
        Ok(Self {
            d: self.d,
            x: self.x[start * self.d..end * self.d].to_vec(),
            y: self.y[start..end].to_vec(),
        })
    }
}

/// Disjoint exploration and holdout parts of one source dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPartition {
    pub exploration: Dataset,
    pub holdout: Dataset,
}

/// Splits `data` into a uniformly random holdout of `holdout_size` samples
/// and the complementary exploration set. Source order is kept within each
/// part.
pub fn partition(data: &Dataset, holdout_size: usize, stream: &RngStream) -> Result<DataPartition> {
    let n = data.len();
    if holdout_size > n {
        return Err(Error::Size {
            size: holdout_size,
            max: n,
        });
    }
    let mut in_holdout = vec![false; n];
    let mut rng = stream.rng();
    for i in rand::seq::index::sample(&mut rng, n, holdout_size) {
        in_holdout[i] = true;
    }
    let mut exploration = Dataset::with_capacity(data.d, n - holdout_size)?;
    let mut holdout = Dataset::with_capacity(data.d, holdout_size)?;
    for (s, &h) in data.iter().zip(in_holdout.iter()) {
        if h {
            holdout.push_unchecked(s.x, s.y);
        } else {
            exploration.push_unchecked(s.x, s.y);
        }
    }
    Ok(DataPartition {
        exploration,
        holdout,
    })
}

/// Clamps `v` to `[lo, hi]`.
pub fn truncate(v: f64, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::Range { lo, hi });
    }
    Ok(v.clamp(lo, hi))
}

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) sum of a stream of values.
///
/// Blocks of 32 are summed sequentially and block sums are merged like a
/// binary counter, giving O(log n) error growth without buffering the input.
pub fn pairwise_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    // levels[i] holds the sum of 2^i blocks, when occupied
    let mut levels: [Option<f64>; 64] = [None; 64];
    let mut block = 0.0;
    let mut filled = 0;
    for v in values {
        block += v;
        filled += 1;
        if filled == PAIRWISE_BLOCK {
            let mut carry = block;
            for slot in levels.iter_mut() {
                match slot.take() {
                    Some(s) => carry += s,
                    None => {
                        *slot = Some(carry);
                        break;
                    }
                }
            }
            block = 0.0;
            filled = 0;
        }
    }
    let mut total = block;
    for s in levels.iter().flatten() {
        total += s;
    }
    total
}
