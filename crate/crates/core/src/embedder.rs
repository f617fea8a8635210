//! Synthetic encoder/decoder over configuration labels.
//!
//! Each configuration gets a centroid; encoding adds isotropic jitter and
//! decoding returns the nearest centroid. When per-class feature vectors are
//! supplied, half of the latent coordinates are a random linear image of the
//! features and the other half are class-specific random directions, so a
//! transition is visible in the coordinates while unrelated configurations
//! still look unrelated.
//!
//! `Separated` centroids are scaled so the closest pair is just over `d_m`
//! apart, with repulsion as a fallback when centroids coincide.
//! `Overlapping` centroids live in a low-rank subspace with mean pairwise
//! distance `d_m` and no separation guarantee.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::LatentPoint;
use crate::losslab::norm_subgradient;
use crate::metric::Metric;
use crate::seed;
use crate::tuple::{ClassLabel, SymbolicTuple, TransitionTuple};

/// Expected no-action pair distance as a fraction of `d_m`.
pub const DEFAULT_NOISE_FRACTION: f64 = 0.1;
/// Largest rank at which the typical nearest-neighbour spacing of 288
/// centroids, about `d_m * 288^(-1/rank)`, is below the no-action distance.
pub const DEFAULT_OVERLAP_RANK: usize = 2;
pub const DEFAULT_STRUCTURED_FRACTION: f64 = 0.5;
const REPULSION_BUDGET: usize = 4000;
const RESTART_EVERY: usize = 500;
const SEPARATION_SLACK: f64 = 1.02;
const CALIBRATION_SAMPLES: usize = 20_000;
const CALIBRATION_SEED: u64 = 0x6A09_E667_F3BC_C908;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderMode {
    Separated,
    Overlapping,
}

impl std::str::FromStr for EmbedderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "separated" => Ok(Self::Separated),
            "overlapping" => Ok(Self::Overlapping),
            other => Err(Error::InvalidParameter(format!(
                "unknown embedder mode {other:?} (expected separated or overlapping)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub num_classes: usize,
    pub latent_dim: usize,
    pub metric: Metric,
    pub mode: EmbedderMode,
    pub d_m: f64,
    pub seed: u64,
    /// Per-coordinate jitter scale; `None` calibrates it so the expected
    /// no-action pair distance is `DEFAULT_NOISE_FRACTION * d_m`.
    pub noise_sigma: Option<f64>,
    /// Dimension of the subspace holding overlapping-mode centroids.
    pub overlap_rank: usize,
    /// Repulsion iterations allowed before separation is declared infeasible.
    pub repulsion_budget: usize,
    /// Share of latent coordinates derived linearly from the class features
    /// when features are supplied; the rest are per-class random.
    pub structured_fraction: f64,
}

impl EmbedderConfig {
    pub fn new(num_classes: usize, latent_dim: usize, metric: Metric, mode: EmbedderMode, d_m: f64, seed: u64) -> Self {
        Self {
            num_classes,
            latent_dim,
            metric,
            mode,
            d_m,
            seed,
            noise_sigma: None,
            overlap_rank: DEFAULT_OVERLAP_RANK,
            repulsion_budget: REPULSION_BUDGET,
            structured_fraction: DEFAULT_STRUCTURED_FRACTION,
        }
    }
}

/// Fitted centroids plus the jitter model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedder {
    pub latent_dim: usize,
    pub metric: Metric,
    pub mode: EmbedderMode,
    pub d_m: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub centroids: Vec<LatentPoint>,
}

/// The per-coordinate Gaussian scale whose expected pair distance
/// `E‖n − n′‖` under `metric` equals `target`. Estimated by Monte Carlo with
/// a fixed internal seed, so the result depends only on the arguments.
pub fn noise_sigma_for(latent_dim: usize, metric: Metric, target: f64) -> f64 {
    let mut rng = seed::rng(CALIBRATION_SEED ^ latent_dim as u64);
    let mut a = vec![0.0; latent_dim];
    let mut b = vec![0.0; latent_dim];
    let mut total = 0.0;
    for _ in 0..CALIBRATION_SAMPLES {
        a.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        b.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        total += metric.eval(&a, &b);
    }
    let unit = total / CALIBRATION_SAMPLES as f64;
    target / unit
}

fn pairwise_mean(points: &[Vec<f64>], metric: Metric) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += metric.eval(&points[i], &points[j]);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

fn min_pairwise(points: &[Vec<f64>], metric: Metric) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            best = best.min(metric.eval(&points[i], &points[j]));
        }
    }
    best
}

fn scale_all(points: &mut [Vec<f64>], factor: f64) {
    points.iter_mut().flatten().for_each(|x| *x *= factor);
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn initial_centroids<R: Rng>(cfg: &EmbedderConfig, features: Option<&[Vec<f64>]>, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let dim = cfg.latent_dim;
    let Some(features) = features else {
        return Ok((0..cfg.num_classes).map(|_| gaussian_vec(rng, dim)).collect());
    };
    if features.len() != cfg.num_classes {
        return Err(Error::InvalidParameter(format!(
            "{} feature vectors for {} classes",
            features.len(),
            cfg.num_classes
        )));
    }
    let fdim = features.first().map_or(0, Vec::len);
    if !(0.0..=1.0).contains(&cfg.structured_fraction) {
        return Err(Error::InvalidParameter(format!(
            "structured_fraction {} outside [0, 1]",
            cfg.structured_fraction
        )));
    }
    let structured = (dim as f64 * cfg.structured_fraction).round() as usize;
    let projection: Vec<Vec<f64>> = (0..structured).map(|_| gaussian_vec(rng, fdim)).collect();
    let mut left: Vec<Vec<f64>> = features
        .iter()
        .map(|f| {
            projection
                .iter()
                .map(|row| row.iter().zip(f).map(|(w, x)| w * x).sum())
                .collect()
        })
        .collect();
    let mut right: Vec<Vec<f64>> = (0..cfg.num_classes).map(|_| gaussian_vec(rng, dim - structured)).collect();
    // equal average spread in both blocks
    let (ml, mr) = (pairwise_mean(&left, Metric::L2), pairwise_mean(&right, Metric::L2));
    if ml > 0.0 {
        scale_all(&mut left, 1.0 / ml);
    }
    if mr > 0.0 {
        scale_all(&mut right, 1.0 / mr);
    }
    Ok(left
        .into_iter()
        .zip(right)
        .map(|(mut l, r)| {
            l.extend(r);
            l
        })
        .collect())
}

/// Orthonormal basis of a random `rank`-dimensional subspace.
fn random_subspace<R: Rng>(dim: usize, rank: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank.min(dim) {
        let mut v = gaussian_vec(rng, dim);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Jacobi-style hinge repulsion: every pair closer than `target` is pushed
/// apart along the distance subgradient by half its deficit per endpoint.
fn repel(points: &mut [Vec<f64>], metric: Metric, target: f64) -> bool {
    let n = points.len();
    let dim = points.first().map_or(0, Vec::len);
    let mut moves = vec![vec![0.0; dim]; n];
    let mut any = false;
    for i in 0..n {
        for j in i + 1..n {
            if metric.within(&points[i], &points[j], target) {
                any = true;
                let diff: Vec<f64> = points[i].iter().zip(&points[j]).map(|(a, b)| a - b).collect();
                let dist = metric.eval(&points[i], &points[j]);
                let mut g = norm_subgradient(&diff, metric);
                if g.iter().all(|&x| x == 0.0) {
                    g[i % dim] = 1.0;
                }
                let gg: f64 = g.iter().map(|x| x * x).sum();
                // directional derivative of the norm along its subgradient is ‖g‖²
                let step = 0.5 * (target - dist) / gg;
                for k in 0..dim {
                    moves[i][k] += step * g[k];
                    moves[j][k] -= step * g[k];
                }
            }
        }
    }
    for (p, m) in points.iter_mut().zip(&moves) {
        p.iter_mut().zip(m).for_each(|(x, d)| *x += d);
    }
    any
}

impl Embedder {
    /// Fits centroids for `cfg.num_classes` configurations. `features`, when
    /// given, holds one vector per class and seeds the structured half of the
    /// latent coordinates.
    pub fn fit(cfg: &EmbedderConfig, features: Option<&[Vec<f64>]>) -> Result<Embedder> {
        if cfg.num_classes == 0 {
            return Err(Error::InvalidParameter("num_classes must be at least 1".into()));
        }
        if cfg.latent_dim == 0 {
            return Err(Error::InvalidParameter("latent_dim must be positive".into()));
        }
        if !(cfg.d_m > 0.0 && cfg.d_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("d_m must be positive, got {}", cfg.d_m)));
        }
        let metric = cfg.metric;
        let mut rng = seed::rng(cfg.seed);
        let mut points = initial_centroids(cfg, features, &mut rng)?;

        if cfg.mode == EmbedderMode::Overlapping {
            let basis = random_subspace(cfg.latent_dim, cfg.overlap_rank.max(1), &mut rng);
            for p in points.iter_mut() {
                let coeffs: Vec<f64> = basis.iter().map(|b| b.iter().zip(p.iter()).map(|(x, y)| x * y).sum()).collect();
                let mut projected = vec![0.0; cfg.latent_dim];
                for (c, b) in coeffs.iter().zip(&basis) {
                    projected.iter_mut().zip(b).for_each(|(x, y)| *x += c * y);
                }
                *p = projected;
            }
        }

        // overlapping clouds keep a mean spacing of d_m; separated ones are
        // scaled so their closest pair sits just above d_m, which keeps the
        // drawn geometry intact and leaves repulsion for degenerate draws
        let spread = match cfg.mode {
            EmbedderMode::Overlapping => pairwise_mean(&points, metric) / cfg.d_m,
            EmbedderMode::Separated => min_pairwise(&points, metric) / (cfg.d_m * SEPARATION_SLACK),
        };
        if spread > 0.0 && spread.is_finite() {
            scale_all(&mut points, 1.0 / spread);
        } else if points.len() > 1 {
            let mean = pairwise_mean(&points, metric);
            if mean > 0.0 {
                scale_all(&mut points, cfg.d_m / mean);
            }
        }

        if cfg.mode == EmbedderMode::Separated && points.len() > 1 {
            let target = cfg.d_m * SEPARATION_SLACK;
            let mut best_min = min_pairwise(&points, metric);
            let mut stale = 0usize;
            let mut iterations = 0usize;
            while best_min < cfg.d_m {
                if iterations >= cfg.repulsion_budget {
                    return Err(Error::SeparationFailed {
                        iterations,
                        achieved: best_min,
                        target: cfg.d_m,
                    });
                }
                repel(&mut points, metric, target);
                iterations += 1;
                let now = min_pairwise(&points, metric);
                if now > best_min {
                    best_min = now;
                    stale = 0;
                } else {
                    stale += 1;
                }
                if stale >= RESTART_EVERY {
                    // rejection fallback: redraw one endpoint of the closest pair
                    let (i, _) = closest_pair(&points, metric);
                    let radius = cfg.d_m;
                    let fresh = gaussian_vec(&mut rng, cfg.latent_dim);
                    let norm = fresh.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    points[i] = fresh.into_iter().map(|x| x * radius / norm).collect();
                    best_min = min_pairwise(&points, metric);
                    stale = 0;
                }
            }
        }

        let noise_sigma = match cfg.noise_sigma {
            Some(s) if s >= 0.0 && s.is_finite() => s,
            Some(s) => return Err(Error::InvalidParameter(format!("noise_sigma must be nonnegative, got {s}"))),
            None => noise_sigma_for(cfg.latent_dim, metric, DEFAULT_NOISE_FRACTION * cfg.d_m),
        };
        let centroids = points.into_iter().map(LatentPoint::new).collect::<Result<_>>()?;
        Ok(Embedder {
            latent_dim: cfg.latent_dim,
            metric,
            mode: cfg.mode,
            d_m: cfg.d_m,
            noise_sigma,
            seed: cfg.seed,
            centroids,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroid(&self, label: ClassLabel) -> Result<&LatentPoint> {
        self.centroids.get(label).ok_or_else(|| {
            Error::InvalidParameter(format!("label {label} out of range 0..{}", self.centroids.len()))
        })
    }

    /// Centroid of `label` plus isotropic Gaussian jitter of scale `noise_sigma`.
    pub fn encode<R: Rng>(&self, label: ClassLabel, rng: &mut R) -> Result<LatentPoint> {
        let c = self.centroid(label)?;
        if self.noise_sigma == 0.0 {
            return Ok(c.clone());
        }
        let coords = c
            .iter()
            .map(|x| x + self.noise_sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        LatentPoint::new(coords)
    }

    pub fn encode_seeded(&self, label: ClassLabel, seed: u64) -> Result<LatentPoint> {
        self.encode(label, &mut seed::rng(seed))
    }

    /// Label of the nearest centroid; ties go to the smaller label.
    pub fn decode(&self, z: &[f64]) -> Result<ClassLabel> {
        if z.len() != self.latent_dim {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim,
                actual: z.len(),
            });
        }
        let mut best = (0, f64::INFINITY);
        for (i, c) in self.centroids.iter().enumerate() {
            let d = self.metric.eval(c, z);
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    /// Smallest distance between two centroids under the embedder metric.
    pub fn min_separation(&self) -> f64 {
        let pts: Vec<Vec<f64>> = self.centroids.iter().map(|c| c.to_vec()).collect();
        min_pairwise(&pts, self.metric)
    }

    /// Upgrades symbolic tuples to latent tuples with fresh jitter on every
    /// endpoint.
    pub fn embed_dataset(&self, tuples: &[SymbolicTuple], seed: u64) -> Result<Vec<TransitionTuple>> {
        let mut rng = seed::rng(seed);
        tuples
            .iter()
            .map(|t| {
                let z1 = self.encode(t.class1, &mut rng)?;
                let z2 = self.encode(t.class2, &mut rng)?;
                Ok(TransitionTuple::new(z1, z2, t.action)?.with_classes(t.class1, t.class2))
            })
            .collect()
    }
}

fn closest_pair(points: &[Vec<f64>], metric: Metric) -> (usize, usize) {
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d = metric.eval(&points[i], &points[j]);
            if d < best.2 {
                best = (i, j, d);
            }
        }
    }
    (best.0, best.1)
}

/// Convenience wrapper matching the usual call shape.
pub fn fit_centroids(cfg: &EmbedderConfig, features: Option<&[Vec<f64>]>) -> Result<Embedder> {
    Embedder::fit(cfg, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxworld::StateSpace;

    fn boxworld(metric: Metric, mode: EmbedderMode, d_m: f64, seed: u64) -> Embedder {
        let space = StateSpace::new();
        let cfg = EmbedderConfig::new(space.len(), 64, metric, mode, d_m, seed);
        Embedder::fit(&cfg, Some(&space.features())).unwrap()
    }

    #[test]
    fn single_class_is_trivially_separated() {
        let cfg = EmbedderConfig::new(1, 8, Metric::L2, EmbedderMode::Separated, 5.0, 0);
        let e = Embedder::fit(&cfg, None).unwrap();
        assert_eq!(e.num_classes(), 1);
        assert_eq!(e.min_separation(), f64::INFINITY);
    }

    #[test]
    fn separated_scan_all_metrics() {
        for (metric, d_m) in [(Metric::L1, 20.0), (Metric::L2, 5.0), (Metric::Linf, 2.5)] {
            let e = boxworld(metric, EmbedderMode::Separated, d_m, 1);
            let pts = &e.centroids;
            for i in 0..pts.len() {
                for j in i + 1..pts.len() {
                    assert!(metric.eval(&pts[i], &pts[j]) >= d_m, "{metric} {i} {j}");
                }
            }
        }
        // unstructured init also separates
        let cfg = EmbedderConfig::new(288, 64, Metric::L1, EmbedderMode::Separated, 20.0, 4);
        assert!(Embedder::fit(&cfg, None).unwrap().min_separation() >= 20.0);
    }

    #[test]
    fn overlapping_has_close_pairs() {
        let e = boxworld(Metric::L1, EmbedderMode::Overlapping, 20.0, 1);
        assert!(e.min_separation() < 20.0);
        let pts: Vec<Vec<f64>> = e.centroids.iter().map(|c| c.to_vec()).collect();
        assert!((pairwise_mean(&pts, Metric::L1) - 20.0).abs() < 1e-9);
    }

    #[test]
    fn impossible_separation_errors() {
        let cfg = EmbedderConfig {
            repulsion_budget: 0,
            structured_fraction: 1.0,
            ..EmbedderConfig::new(3, 8, Metric::L1, EmbedderMode::Separated, 20.0, 0)
        };
        let features = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let err = Embedder::fit(&cfg, Some(&features)).unwrap_err();
        assert!(matches!(err, Error::SeparationFailed { .. }));
        assert!(err.to_string().contains("latent_dim"));
        let bad = EmbedderConfig::new(0, 4, Metric::L1, EmbedderMode::Separated, 1.0, 0);
        assert!(Embedder::fit(&bad, None).is_err());
        let bad = EmbedderConfig::new(3, 4, Metric::L1, EmbedderMode::Separated, -1.0, 0);
        assert!(Embedder::fit(&bad, None).is_err());
    }

    #[test]
    fn zero_noise_encode_is_centroid() {
        let mut e = boxworld(Metric::L2, EmbedderMode::Separated, 5.0, 2);
        e.noise_sigma = 0.0;
        for label in [0, 100, 287] {
            let z = e.encode_seeded(label, 9).unwrap();
            assert_eq!(&z, e.centroid(label).unwrap());
            assert_eq!(e.decode(&z).unwrap(), label);
        }
        assert!(e.encode_seeded(288, 0).is_err());
    }

    #[test]
    fn decode_tie_goes_to_smaller_label() {
        let pts = |xs: &[f64]| xs.iter().map(|&x| LatentPoint::new(vec![x, 0.0]).unwrap()).collect();
        let e = Embedder {
            latent_dim: 2,
            metric: Metric::L2,
            mode: EmbedderMode::Separated,
            d_m: 1.0,
            noise_sigma: 0.0,
            seed: 0,
            centroids: pts(&[4.0, 2.0, 100.0]),
        };
        assert_eq!(e.decode(&[3.0, 0.0]).unwrap(), 0);
        assert_eq!(e.decode(&[1e6, -1e6]).unwrap(), 2);
        assert!(e.decode(&[0.0]).is_err());
    }

    #[test]
    fn calibrated_noise_matches_closed_form_l1() {
        // E|N(0, 2σ²)| = 2σ/√π per coordinate
        let dim = 64;
        let sigma = noise_sigma_for(dim, Metric::L1, 2.0);
        let exact = 2.0 * std::f64::consts::PI.sqrt() / (2.0 * dim as f64);
        assert!((sigma - exact).abs() / exact < 0.01, "{sigma} vs {exact}");
    }

    #[test]
    fn decode_survives_small_noise() {
        let e = boxworld(Metric::L2, EmbedderMode::Separated, 5.0, 3);
        let half = e.min_separation() / 2.0;
        let mut rng = seed::rng(5);
        for label in 0..e.num_classes() {
            let dir: Vec<f64> = gaussian_vec(&mut rng, 64);
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            let z: Vec<f64> = e.centroids[label]
                .iter()
                .zip(&dir)
                .map(|(c, d)| c + 0.99 * half * d / norm)
                .collect();
            assert_eq!(e.decode(&z).unwrap(), label);
        }
    }

    #[test]
    fn embed_dataset_is_deterministic() {
        let space = StateSpace::new();
        let e = boxworld(Metric::L1, EmbedderMode::Separated, 20.0, 1);
        let sym = space.generate_dataset(50, 0.5, 3).unwrap();
        let a = e.embed_dataset(&sym, 11).unwrap();
        assert_eq!(a, e.embed_dataset(&sym, 11).unwrap());
        assert_ne!(a, e.embed_dataset(&sym, 12).unwrap());
        assert!(a.iter().all(|t| t.class1.is_some() && t.z1.dim() == 64));
    }
}
