//! Per-sample loss functions.

use alloc::vec::Vec;

use crate::data::{pairwise_sum, Dataset, SampleRef};
use crate::error::{Error, Result};
use crate::model::{check_unit, dot};

#[derive(Debug, Clone, PartialEq)]
pub enum LossFunction {
    /// The same value for every sample.
    Constant(f64),
    /// `y * <w, x>`, unbounded.
    Correlation { w: Vec<f64> },
    /// `truncate_[-1,1](y * <w, x>)`.
    TruncatedCorrelation { w: Vec<f64> },
}

impl LossFunction {
    /// Truncated linear-predictor loss for a unit vector `w`.
    pub fn linear(w: Vec<f64>) -> Result<Self> {
        check_unit(&w)?;
        Ok(Self::TruncatedCorrelation { w })
    }

    /// Untruncated empirical-correlation loss for a unit vector `w`.
    pub fn correlation(w: Vec<f64>) -> Result<Self> {
        check_unit(&w)?;
        Ok(Self::Correlation { w })
    }

    pub fn eval(&self, s: SampleRef<'_>) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Correlation { w } => s.y * dot(w, s.x),
            Self::TruncatedCorrelation { w } => (s.y * dot(w, s.x)).clamp(-1.0, 1.0),
        }
    }

    pub fn direction(&self) -> Option<&[f64]> {
        match self {
            Self::Constant(_) => None,
            Self::Correlation { w } | Self::TruncatedCorrelation { w } => Some(w),
        }
    }

    /// Feature dimension the loss expects, if it depends on `x`.
    pub fn dim(&self) -> Option<usize> {
        self.direction().map(<[f64]>::len)
    }

    /// Whether every value lies in `[-1, 1]`.
    pub fn is_bounded(&self) -> bool {
        match self {
            Self::Constant(c) => (-1.0..=1.0).contains(c),
            Self::Correlation { .. } => false,
            Self::TruncatedCorrelation { .. } => true,
        }
    }

    /// Canonical byte encoding, used for test identity hashes.
    pub fn encode(&self, out: &mut Vec<u8>) {
        let (tag, values): (u8, &[f64]) = match self {
            Self::Constant(c) => (0, core::slice::from_ref(c)),
            Self::Correlation { w } => (1, w),
            Self::TruncatedCorrelation { w } => (2, w),
        };
        out.push(tag);
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
}

/// Arithmetic mean of the per-sample losses, summed pairwise.
pub fn empirical_mean_loss(loss: &LossFunction, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if let Some(d) = loss.dim() {
        if d != data.dim() {
            return Err(Error::Dimension {
                expected: data.dim(),
                got: d,
            });
        }
    }
    Ok(pairwise_sum(data.iter().map(|s| loss.eval(s))) / data.len() as f64)
}
