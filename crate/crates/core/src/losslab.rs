//! The contrastive action loss, its subgradients, and a free-embedding
//! optimizer that shows the latent structure the loss induces on its own.
//!
//! The optimizer replaces an image encoder by a per-configuration code plus a
//! shared per-dimension noise gain: sample `i` of configuration `c` sits at
//! `code[c] + gain ⊙ jitter[i]`, with `jitter[i]` fixed at initialization.
//! No-action pairs can then only shrink their distance by shrinking the gain
//! or by merging codes, mirroring an encoder that learns to ignore noise.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::embedder::noise_sigma_for;
use crate::error::{Error, Result};
use crate::latent::LatentPoint;
use crate::metric::Metric;
use crate::seed;
use crate::tuple::{ClassLabel, SymbolicTuple};

/// Weights of the action term and its quadratic prior surrogate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Minimum distance enforced between the endpoints of an action pair.
    pub d_m: f64,
    pub gamma: f64,
    pub lambda_prior: f64,
    pub metric: Metric,
}

impl LossConfig {
    pub fn new(d_m: f64, metric: Metric) -> Result<Self> {
        let cfg = Self {
            d_m,
            gamma: 1.0,
            lambda_prior: 1e-3,
            metric,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_m > 0.0 && self.d_m.is_finite()) {
            return Err(Error::InvalidParameter(format!("d_m must be positive, got {}", self.d_m)));
        }
        if !(self.gamma >= 0.0 && self.lambda_prior >= 0.0) {
            return Err(Error::InvalidParameter("gamma and lambda_prior must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `max(0, d_m - dist)` for an action pair, `dist` for a no-action pair.
pub fn action_loss(z1: &[f64], z2: &[f64], is_action: bool, cfg: &LossConfig) -> f64 {
    let dist = cfg.metric.eval(z1, z2);
    if is_action {
        (cfg.d_m - dist).max(0.0)
    } else {
        dist
    }
}

/// Subgradient of `‖diff‖` with respect to `diff`.
///
/// Conventions at kinks: L1 uses `sign(0) = 0`; L∞ puts the whole gradient on
/// the first coordinate of maximal magnitude; all metrics return zero at the
/// origin.
pub fn norm_subgradient(diff: &[f64], metric: Metric) -> Vec<f64> {
    let mut g = vec![0.0; diff.len()];
    match metric {
        Metric::L1 => {
            for (gi, &d) in g.iter_mut().zip(diff) {
                *gi = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
        }
        Metric::L2 => {
            let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
            if norm > 0.0 {
                for (gi, &d) in g.iter_mut().zip(diff) {
                    *gi = d / norm;
                }
            }
        }
        Metric::Linf => {
            let mut best = 0usize;
            for (i, d) in diff.iter().enumerate() {
                if d.abs() > diff[best].abs() {
                    best = i;
                }
            }
            if let Some(&d) = diff.get(best) {
                if d != 0.0 {
                    g[best] = d.signum();
                }
            }
        }
    }
    g
}

/// Gradients of [`action_loss`] with respect to `z1` and `z2`. The hinge uses
/// its flat branch at exactly `dist == d_m`.
pub fn action_loss_grad(z1: &[f64], z2: &[f64], is_action: bool, cfg: &LossConfig) -> (Vec<f64>, Vec<f64>) {
    let diff: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| a - b).collect();
    let mut g1 = norm_subgradient(&diff, cfg.metric);
    if is_action {
        let dist = cfg.metric.eval(z1, z2);
        if dist >= cfg.d_m {
            g1.iter_mut().for_each(|g| *g = 0.0);
        } else {
            g1.iter_mut().for_each(|g| *g = -*g);
        }
    }
    let g2 = g1.iter().map(|g| -g).collect();
    (g1, g2)
}

/// One embedded point per dataset sample, with its configuration label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub metric: Metric,
    pub points: Vec<LatentPoint>,
    pub labels: Vec<ClassLabel>,
}

impl EmbeddingSet {
    pub fn new(metric: Metric, points: Vec<LatentPoint>, labels: Vec<ClassLabel>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        Ok(Self { metric, points, labels })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    pub steps: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Standard deviation of the initial per-configuration codes.
    pub init_spread: f64,
    /// Per-coordinate scale of the fixed sample jitter; `None` picks the
    /// scale whose expected pair distance is a tenth of `d_m`.
    pub jitter: Option<f64>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            step_size: 1e-3,
            seed: 0,
            init_spread: 0.1,
            jitter: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub embeddings: EmbeddingSet,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub initial_max_norm: f64,
    pub final_max_norm: f64,
}

struct FreeEmbedding {
    dim: usize,
    codes: Vec<f64>,
    gain: Vec<f64>,
    jitter: Vec<f64>,
    labels: Vec<ClassLabel>,
}

impl FreeEmbedding {
    fn point(&self, sample: usize, out: &mut [f64]) {
        let d = self.dim;
        let code = &self.codes[self.labels[sample] * d..][..d];
        let jit = &self.jitter[sample * d..][..d];
        for k in 0..d {
            out[k] = code[k] + self.gain[k] * jit[k];
        }
    }

    fn max_norm(&self) -> f64 {
        let mut z = vec![0.0; self.dim];
        (0..self.labels.len())
            .map(|i| {
                self.point(i, &mut z);
                z.iter().map(|x| x * x).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Gradient descent with a constant step on
/// `Σ_pairs γ·action_loss(z1, z2) + λ·(‖z1‖² + ‖z2‖²)`.
pub fn optimize_embeddings(
    tuples: &[SymbolicTuple],
    latent_dim: usize,
    cfg: &LossConfig,
    opt: &OptimizeConfig,
) -> Result<OptimizeOutcome> {
    cfg.validate()?;
    if opt.steps == 0 {
        return Err(Error::InvalidParameter("steps must be at least 1".into()));
    }
    if tuples.is_empty() {
        return Err(Error::Empty("no tuples to embed"));
    }
    if latent_dim == 0 {
        return Err(Error::InvalidParameter("latent_dim must be positive".into()));
    }
    let n_classes = tuples.iter().map(|t| t.class1.max(t.class2)).max().unwrap() + 1;
    let mut labels = Vec::with_capacity(tuples.len() * 2);
    for t in tuples {
        labels.push(t.class1);
        labels.push(t.class2);
    }
    let jitter_scale = match opt.jitter {
        Some(j) => j,
        None => noise_sigma_for(latent_dim, cfg.metric, 0.1 * cfg.d_m),
    };
    let mut rng = seed::rng(opt.seed);
    let code_dist = Normal::new(0.0, opt.init_spread.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let jitter_dist = Normal::new(0.0, jitter_scale.max(0.0)).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let codes = (0..n_classes * latent_dim).map(|_| code_dist.sample(&mut rng)).collect();
    let jitter = (0..labels.len() * latent_dim).map(|_| jitter_dist.sample(&mut rng)).collect();
    let mut model = FreeEmbedding {
        dim: latent_dim,
        codes,
        gain: vec![1.0; latent_dim],
        jitter,
        labels,
    };

    let initial_max_norm = model.max_norm();
    let d = latent_dim;
    let mut z1 = vec![0.0; d];
    let mut z2 = vec![0.0; d];
    let mut code_grad = vec![0.0; n_classes * d];
    let mut gain_grad = vec![0.0; d];
    let mut initial_loss = f64::NAN;
    let mut loss = 0.0;
    for step in 0..=opt.steps {
        code_grad.iter_mut().for_each(|g| *g = 0.0);
        gain_grad.iter_mut().for_each(|g| *g = 0.0);
        loss = 0.0;
        for (p, t) in tuples.iter().enumerate() {
            let (i, j) = (2 * p, 2 * p + 1);
            model.point(i, &mut z1);
            model.point(j, &mut z2);
            let a = t.is_action();
            loss += cfg.gamma * action_loss(&z1, &z2, a, cfg);
            let (mut g1, mut g2) = if cfg.gamma > 0.0 {
                action_loss_grad(&z1, &z2, a, cfg)
            } else {
                (vec![0.0; d], vec![0.0; d])
            };
            for k in 0..d {
                loss += cfg.lambda_prior * (z1[k] * z1[k] + z2[k] * z2[k]);
                g1[k] = cfg.gamma * g1[k] + 2.0 * cfg.lambda_prior * z1[k];
                g2[k] = cfg.gamma * g2[k] + 2.0 * cfg.lambda_prior * z2[k];
            }
            for (sample, g) in [(i, &g1), (j, &g2)] {
                let c = model.labels[sample];
                let jit = &model.jitter[sample * d..][..d];
                let cg = &mut code_grad[c * d..][..d];
                for k in 0..d {
                    cg[k] += g[k];
                    gain_grad[k] += g[k] * jit[k];
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Diverged { step });
        }
        if step == 0 {
            initial_loss = loss;
        }
        if step == opt.steps {
            break;
        }
        for (c, g) in model.codes.iter_mut().zip(&code_grad) {
            *c -= opt.step_size * g;
        }
        for (s, g) in model.gain.iter_mut().zip(&gain_grad) {
            *s -= opt.step_size * g;
        }
    }

    let final_max_norm = model.max_norm();
    let mut points = Vec::with_capacity(model.labels.len());
    for i in 0..model.labels.len() {
        model.point(i, &mut z1);
        points.push(LatentPoint::new(z1.clone()).map_err(|_| Error::Diverged { step: opt.steps })?);
    }
    Ok(OptimizeOutcome {
        embeddings: EmbeddingSet::new(cfg.metric, points, model.labels)?,
        initial_loss,
        final_loss: loss,
        initial_max_norm,
        final_max_norm,
    })
}

/// Intra- and inter-class distance statistics for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_id: ClassLabel,
    pub count: usize,
    pub intra_mean: f64,
    pub intra_std: f64,
    pub inter_mean: f64,
    pub inter_std: f64,
    /// Minimum inter-class distance minus maximum intra-class distance.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassStatsReport {
    pub classes: Vec<ClassStats>,
    /// Labels in `0..=max_label` with no samples.
    pub excluded: usize,
}

impl ClassStatsReport {
    pub fn mean_of(&self, f: impl Fn(&ClassStats) -> f64) -> f64 {
        self.classes.iter().map(f).sum::<f64>() / self.classes.len() as f64
    }

    pub fn positive_margin_fraction(&self) -> f64 {
        self.classes.iter().filter(|c| c.margin > 0.0).count() as f64 / self.classes.len() as f64
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Intra distances are sample-to-own-centroid; inter distances are
/// centroid-to-other-centroids.
pub fn class_distance_stats(emb: &EmbeddingSet, metric: Metric) -> Result<ClassStatsReport> {
    let Some(&max_label) = emb.labels.iter().max() else {
        return Err(Error::Empty("embedding set has no points"));
    };
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); max_label + 1];
    for (p, &l) in emb.points.iter().zip(&emb.labels) {
        members[l].push(p.as_slice());
    }
    let present: Vec<ClassLabel> = (0..=max_label).filter(|&c| !members[c].is_empty()).collect();
    let excluded = max_label + 1 - present.len();
    if excluded > 0 {
        log::warn!("{excluded} classes without samples excluded from distance statistics");
    }
    if present.len() < 2 {
        return Err(Error::InvalidParameter("distance statistics need at least two classes".into()));
    }
    let centroids: Vec<LatentPoint> = present
        .iter()
        .map(|&c| LatentPoint::mean(members[c].iter().copied()))
        .collect::<Result<_>>()?;
    let mut classes = Vec::with_capacity(present.len());
    for (ci, &c) in present.iter().enumerate() {
        let intra: Vec<f64> = members[c].iter().map(|p| metric.eval(p, &centroids[ci])).collect();
        let inter: Vec<f64> = centroids
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != ci)
            .map(|(_, o)| metric.eval(o, &centroids[ci]))
            .collect();
        let (intra_mean, intra_std) = mean_std(&intra);
        let (inter_mean, inter_std) = mean_std(&inter);
        let max_intra = intra.iter().copied().fold(0.0, f64::max);
        let min_inter = inter.iter().copied().fold(f64::INFINITY, f64::min);
        classes.push(ClassStats {
            class_id: c,
            count: intra.len(),
            intra_mean,
            intra_std,
            inter_mean,
            inter_std,
            margin: min_inter - max_intra,
        });
    }
    Ok(ClassStatsReport { classes, excluded })
}
