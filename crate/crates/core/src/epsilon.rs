//! Neighbourhood radius estimated from no-action pair distances.

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::tuple::TransitionTuple;

/// Mean and population standard deviation of the no-action pair distances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceMoments {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl DistanceMoments {
    pub fn from_distances(distances: &[f64]) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::Empty("no no-action pairs to estimate epsilon"));
        }
        let n = distances.len() as f64;
        let mean = distances.iter().sum::<f64>() / n;
        let var = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        Ok(Self {
            mean,
            std: var.sqrt(),
            count: distances.len(),
        })
    }

    pub fn epsilon(&self, w_eps: f64) -> Result<f64> {
        let eps = self.mean + w_eps * self.std;
        if eps > 0.0 && eps.is_finite() {
            Ok(eps)
        } else {
            Err(Error::InvalidParameter(format!(
                "epsilon = {eps} (mean {} + {w_eps} * std {}) is not positive; raise w_eps",
                self.mean, self.std
            )))
        }
    }
}

pub fn no_action_moments(pairs: &[TransitionTuple], metric: Metric) -> Result<DistanceMoments> {
    let mut distances = Vec::with_capacity(pairs.len());
    for t in pairs {
        if t.is_action() {
            return Err(Error::InvalidParameter(
                "epsilon estimation expects only no-action pairs".into(),
            ));
        }
        distances.push(t.z1.distance(&t.z2, metric)?);
    }
    DistanceMoments::from_distances(&distances)
}

/// `mean + w_eps * std` of the distances between the endpoints of the given
/// no-action pairs.
pub fn estimate_epsilon(no_action_pairs: &[TransitionTuple], metric: Metric, w_eps: f64) -> Result<f64> {
    no_action_moments(no_action_pairs, metric)?.epsilon(w_eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::LatentPoint;

    fn pairs(distances: &[f64]) -> Vec<TransitionTuple> {
        distances
            .iter()
            .map(|&d| {
                TransitionTuple::new(
                    LatentPoint::new(vec![0.0]).unwrap(),
                    LatentPoint::new(vec![d]).unwrap(),
                    None,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn mean_when_weight_zero() {
        let eps = estimate_epsilon(&pairs(&[1.0, 2.0, 3.0]), Metric::L1, 0.0).unwrap();
        assert!((eps - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_spread_ignores_weight() {
        for w in [-3.0, 0.0, 0.5, 10.0] {
            let eps = estimate_epsilon(&pairs(&[2.0, 2.0, 2.0]), Metric::L2, w).unwrap();
            assert_eq!(eps, 2.0);
        }
    }

    #[test]
    fn population_std() {
        let eps = estimate_epsilon(&pairs(&[1.0, 2.0, 3.0]), Metric::Linf, 0.5).unwrap();
        let expected = 2.0 + 0.5 * (2.0f64 / 3.0).sqrt();
        assert!((eps - expected).abs() < 1e-12);
        assert!((eps - 2.408).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        assert!(matches!(estimate_epsilon(&[], Metric::L1, 0.0), Err(Error::Empty(_))));
        assert!(estimate_epsilon(&pairs(&[1.0, 3.0]), Metric::L1, -2.0).is_err());
        let mut with_action = pairs(&[1.0]);
        with_action[0].action = Some(crate::action::ActionSpec::from_indices(0, 1).unwrap());
        assert!(estimate_epsilon(&with_action, Metric::L1, 0.0).is_err());
    }

    #[test]
    fn monotone_in_weight() {
        let p = pairs(&[0.5, 1.5, 4.0, 2.2]);
        let mut last = 0.0;
        for w in [0.0, 0.25, 0.5, 1.0, 2.0] {
            let eps = estimate_epsilon(&p, Metric::L1, w).unwrap();
            assert!(eps >= last);
            last = eps;
        }
    }
}
