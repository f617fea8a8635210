//! Distance functions over latent vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The norm used to measure latent distances.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(alias = "l1")]
    L1,
    #[serde(alias = "l2")]
    L2,
    #[serde(alias = "linf")]
    Linf,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::L1, Metric::L2, Metric::Linf];

    /// Distance between two equal-length slices. Panics in debug builds on
    /// length mismatch; use [`distance`] for the checked version.
    #[inline]
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Metric::L1 => diffs.sum(),
            Metric::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::Linf => diffs.fold(0.0, f64::max),
        }
    }

    /// Returns true when `eval(a, b) < threshold`, bailing out as soon as the
    /// partial sum settles the answer.
    #[inline]
    pub fn within(self, a: &[f64], b: &[f64], threshold: f64) -> bool {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::L1 => {
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    acc += (x - y).abs();
                    if acc >= threshold {
                        return false;
                    }
                }
                true
            }
            Metric::L2 => {
                let limit = threshold * threshold;
                let mut acc = 0.0;
                for (x, y) in a.iter().zip(b) {
                    let d = x - y;
                    acc += d * d;
                    if acc >= limit {
                        // partial sums are monotone, but sqrt rounding can
                        // disagree with eval() right at the boundary
                        return self.eval(a, b) < threshold;
                    }
                }
                acc.sqrt() < threshold
            }
            Metric::Linf => a.iter().zip(b).all(|(x, y)| (x - y).abs() < threshold),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "L1",
            Metric::L2 => "L2",
            Metric::Linf => "Linf",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" | "1" => Ok(Metric::L1),
            "l2" | "2" => Ok(Metric::L2),
            "linf" | "inf" | "l_inf" => Ok(Metric::Linf),
            other => Err(Error::InvalidParameter(format!(
                "unknown metric {other:?} (expected L1, L2 or Linf)"
            ))),
        }
    }
}

/// Checked distance between two latent vectors.
pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(metric.eval(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_norms() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert_eq!(distance(&a, &b, Metric::L1).unwrap(), 7.0);
        assert_eq!(distance(&a, &b, Metric::L2).unwrap(), 5.0);
        assert_eq!(distance(&a, &b, Metric::Linf).unwrap(), 4.0);
        for m in Metric::ALL {
            assert_eq!(distance(&b, &b, m).unwrap(), 0.0);
        }
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let err = distance(&[0.0], &[0.0, 1.0], Metric::L2).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn parse_names() {
        assert_eq!("l1".parse::<Metric>().unwrap(), Metric::L1);
        assert_eq!("Linf".parse::<Metric>().unwrap(), Metric::Linf);
        assert!("l3".parse::<Metric>().is_err());
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-50.0f64..50.0, 5)
    }

    proptest! {
        #[test]
        fn metric_axioms(a in vec3(), b in vec3(), c in vec3()) {
            for m in Metric::ALL {
                let ab = m.eval(&a, &b);
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, m.eval(&b, &a));
                prop_assert_eq!(ab == 0.0, a == b);
                prop_assert!(m.eval(&a, &c) <= ab + m.eval(&b, &c) + 1e-9);
            }
        }

        #[test]
        fn norm_ordering(a in vec3(), b in vec3()) {
            let l1 = Metric::L1.eval(&a, &b);
            let l2 = Metric::L2.eval(&a, &b);
            let li = Metric::Linf.eval(&a, &b);
            prop_assert!(li <= l2 + 1e-12);
            prop_assert!(l2 <= l1 + 1e-12);
        }

        #[test]
        fn within_agrees_with_eval(a in vec3(), b in vec3(), t in 0.01f64..200.0) {
            for m in Metric::ALL {
                prop_assert_eq!(m.within(&a, &b, t), m.eval(&a, &b) < t);
            }
        }
    }
}
