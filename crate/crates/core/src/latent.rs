use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Metric;

/// Default embedding width.
pub const DEFAULT_LATENT_DIM: usize = 64;

/// A point in the latent space. Coordinates are always finite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentPoint(Vec<f64>);

impl LatentPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(index) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self(coords))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &LatentPoint, metric: Metric) -> Result<f64> {
        crate::metric::distance(&self.0, &other.0, metric)
    }

    /// Coordinate-wise mean of a non-empty set of equal-length points.
    pub fn mean<'a, I>(points: I) -> Result<LatentPoint>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut iter = points.into_iter();
        let first = iter.next().ok_or(Error::Empty("mean of no points"))?;
        let mut acc = first.to_vec();
        let mut n = 1usize;
        for p in iter {
            if p.len() != acc.len() {
                return Err(Error::DimensionMismatch {
                    expected: acc.len(),
                    actual: p.len(),
                });
            }
            for (a, x) in acc.iter_mut().zip(p) {
                *a += x;
            }
            n += 1;
        }
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        LatentPoint::new(acc)
    }
}

impl Deref for LatentPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for LatentPoint {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for LatentPoint {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LatentPoint::new(v)
    }
}

impl From<LatentPoint> for Vec<f64> {
    fn from(p: LatentPoint) -> Self {
        p.0
    }
}
