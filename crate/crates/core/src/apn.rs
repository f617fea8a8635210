//! Action proposal network: a diamond-shaped ReLU perceptron mapping a
//! concatenated latent pair to pick and release cells (two 9-way heads),
//! plus a nearest-neighbour reference proposer.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::action::{ActionSpec, CELLS};
use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::seed;
use crate::tuple::TransitionTuple;

/// Output width: two heads of nine cell logits.
pub const OUTPUTS: usize = 2 * CELLS;

/// Default layer widths for a given latent dimension: `2d → 4d → 8d → 4d → 18`.
pub fn diamond_widths(latent_dim: usize) -> Vec<usize> {
    vec![2 * latent_dim, 4 * latent_dim, 8 * latent_dim, 4 * latent_dim, OUTPUTS]
}

/// Concatenated `(z1, z2)` inputs with their pick and release cell targets.
#[derive(Clone, Debug, PartialEq)]
pub struct ApnDataset {
    pub inputs: Array2<f64>,
    pub pick: Vec<usize>,
    pub release: Vec<usize>,
}

impl ApnDataset {
    pub fn len(&self) -> usize {
        self.pick.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pick.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn from_tuples(tuples: &[TransitionTuple]) -> Result<Self> {
        augment_pairs(tuples, 0, 0.0, 0)
    }

    fn subset(&self, idx: &[usize]) -> ApnDataset {
        ApnDataset {
            inputs: self.inputs.select(Axis(0), idx),
            pick: idx.iter().map(|&i| self.pick[i]).collect(),
            release: idx.iter().map(|&i| self.release[i]).collect(),
        }
    }
}

/// Emits every action pair as is plus `s` copies whose endpoints are jittered
/// with isotropic Gaussian noise of scale `posterior_sigma`, giving
/// `(s + 1) * tuples.len()` rows. Rows for the same source pair are adjacent.
pub fn augment_pairs(tuples: &[TransitionTuple], s: usize, posterior_sigma: f64, seed: u64) -> Result<ApnDataset> {
    let Some(first) = tuples.first() else {
        return Err(Error::Empty("no action pairs to build an APN dataset from"));
    };
    if !(posterior_sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("posterior_sigma must be nonnegative, got {posterior_sigma}")));
    }
    let dim = first.z1.dim();
    let rows = (s + 1) * tuples.len();
    let mut inputs = Array2::zeros((rows, 2 * dim));
    let mut pick = Vec::with_capacity(rows);
    let mut release = Vec::with_capacity(rows);
    let mut rng = seed::rng(seed);
    let mut r = 0;
    for t in tuples {
        let Some(u) = t.action else {
            return Err(Error::InvalidParameter("APN training data must contain only action pairs".into()));
        };
        if t.z1.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: t.z1.dim() });
        }
        for copy in 0..=s {
            let mut row = inputs.row_mut(r);
            for (k, &x) in t.z1.iter().chain(t.z2.iter()).enumerate() {
                let noise = if copy == 0 || posterior_sigma == 0.0 {
                    0.0
                } else {
                    posterior_sigma * rng.sample::<f64, _>(StandardNormal)
                };
                row[k] = x + noise;
            }
            pick.push(u.pick.index());
            release.push(u.release.index());
            r += 1;
        }
    }
    Ok(ApnDataset { inputs, pick, release })
}

/// A fully connected ReLU network with two softmax heads on its last layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct ApnModel {
    pub widths: Vec<usize>,
    /// `weights[l]` has shape `(widths[l], widths[l + 1])`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Per-feature standardization applied before the first layer.
    pub input_mean: Array1<f64>,
    pub input_scale: Array1<f64>,
}

struct Forward {
    /// Layer inputs: `acts[0]` is the standardized batch, `acts[l]` the
    /// post-ReLU output of hidden layer `l`.
    acts: Vec<Array2<f64>>,
    logits: Array2<f64>,
}

/// Gradients with the same layout as the model parameters.
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

fn log_softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

impl ApnModel {
    /// He-initialized network with identity input standardization.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.last() != Some(&OUTPUTS) || widths.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "layer widths {widths:?} must be non-empty and end in {OUTPUTS}"
            )));
        }
        let mut rng = seed::rng(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let std = (2.0 / w[0] as f64).sqrt();
            let dist = Normal::new(0.0, std).expect("positive std");
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| dist.sample(&mut rng)));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Self {
            widths: widths.to_vec(),
            weights,
            biases,
            input_mean: Array1::zeros(widths[0]),
            input_scale: Array1::ones(widths[0]),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.input_mean) * &self.input_scale
    }

    fn forward(&self, x: ArrayView2<f64>) -> Forward {
        let mut acts = vec![self.standardize(x)];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = acts[l].dot(w) + b;
            if l == last {
                return Forward { acts, logits: z };
            }
            acts.push(z.mapv(|v| v.max(0.0)));
        }
        unreachable!("at least one layer")
    }

    /// Output logits, one row per input row.
    pub fn logits(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward(x).logits
    }

    /// Mean over the batch of the summed pick and release cross-entropies,
    /// with its gradient.
    pub fn loss_and_grad(&self, x: ArrayView2<f64>, pick: &[usize], release: &[usize]) -> (f64, Gradients) {
        let fwd = self.forward(x);
        let n = x.nrows() as f64;
        let mut delta = Array2::zeros(fwd.logits.raw_dim());
        let mut loss = 0.0;
        for (head, targets) in [(0usize, pick), (1, release)] {
            let cols = s![.., head * CELLS..(head + 1) * CELLS];
            let logp = log_softmax_rows(fwd.logits.slice(cols));
            for (i, &t) in targets.iter().enumerate() {
                loss -= logp[[i, t]];
            }
            let mut d = logp.mapv(f64::exp);
            for (i, &t) in targets.iter().enumerate() {
                d[[i, t]] -= 1.0;
            }
            delta.slice_mut(cols).assign(&(d / n));
        }
        loss /= n;

        let layers = self.weights.len();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        for l in (0..layers).rev() {
            gw.push(fwd.acts[l].t().dot(&delta));
            gb.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                back.zip_mut_with(&fwd.acts[l], |g, &a| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
                delta = back;
            }
        }
        gw.reverse();
        gb.reverse();
        (loss, Gradients { weights: gw, biases: gb })
    }

    pub fn loss(&self, x: ArrayView2<f64>, pick: &[usize], release: &[usize]) -> f64 {
        self.loss_and_grad(x, pick, release).0
    }

    /// Pre-activations of every hidden unit, for locating ReLU kinks.
    pub fn hidden_preactivations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut h = self.standardize(x);
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases).take(self.weights.len() - 1) {
            let z = h.dot(w) + b;
            h = z.mapv(|v| v.max(0.0));
            out.push(z);
        }
        out
    }

    /// All parameters flattened: each layer's weights (row-major) then bias.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            v.extend(w.iter());
            v.extend(b.iter());
        }
        v
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        let total: usize = self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>();
        if params.len() != total {
            return Err(Error::DimensionMismatch { expected: total, actual: params.len() });
        }
        let mut it = params.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = it.next().unwrap());
            b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        Ok(())
    }

    fn step(&mut self, grads: &Gradients, step_size: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-step_size, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-step_size, g);
        }
    }

    /// Most likely pick and release cells for each row; ties go to the
    /// smaller cell index.
    pub fn predict_cells(&self, x: ArrayView2<f64>) -> Vec<(usize, usize)> {
        let logits = self.logits(x);
        logits
            .rows()
            .into_iter()
            .map(|row| {
                let p = argmax(row.iter().take(CELLS).copied());
                let r = argmax(row.iter().skip(CELLS).copied());
                (p, r)
            })
            .collect()
    }

    /// Fractions of rows with the correct pick, release, and both.
    pub fn accuracy(&self, ds: &ApnDataset) -> (f64, f64, f64) {
        if ds.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        let preds = self.predict_cells(ds.inputs.view());
        let (mut p, mut r, mut both) = (0, 0, 0);
        for (i, &(pp, rr)) in preds.iter().enumerate() {
            let (okp, okr) = (pp == ds.pick[i], rr == ds.release[i]);
            p += okp as usize;
            r += okr as usize;
            both += (okp && okr) as usize;
        }
        let n = ds.len() as f64;
        (p as f64 / n, r as f64 / n, both as f64 / n)
    }
}

/// Action between two latent states. When both heads agree on a cell, the
/// release falls back to the best-scoring other cell.
pub fn propose_action(model: &ApnModel, z1: &[f64], z2: &[f64]) -> Result<ActionSpec> {
    if z1.len() != z2.len() || z1.len() + z2.len() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: z1.len() + z2.len(),
        });
    }
    let x = Array2::from_shape_vec((1, model.input_dim()), z1.iter().chain(z2).copied().collect())
        .expect("shape checked");
    let logits = model.logits(x.view());
    let row = logits.row(0);
    let pick = argmax(row.iter().take(CELLS).copied());
    let release = argmax(row.iter().skip(CELLS).enumerate().map(|(i, &v)| if i == pick { f64::NEG_INFINITY } else { v }));
    ActionSpec::from_indices(pick, release)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub widths: Vec<usize>,
    pub epochs: usize,
    pub step_size: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_latent_dim(latent_dim: usize, seed: u64) -> Self {
        Self {
            widths: diamond_widths(latent_dim),
            epochs: 30,
            step_size: 0.05,
            batch_size: 32,
            val_fraction: 0.2,
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: ApnModel,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
}

/// Mini-batch SGD on the summed head cross-entropies. A seeded
/// `val_fraction` of the rows is held out to pick the best epoch.
pub fn train_apn(ds: &ApnDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if ds.is_empty() {
        return Err(Error::Empty("empty APN training set"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::InvalidParameter("epochs and batch_size must be positive".into()));
    }
    if cfg.widths.first() != Some(&ds.input_dim()) {
        return Err(Error::DimensionMismatch {
            expected: cfg.widths.first().copied().unwrap_or(0),
            actual: ds.input_dim(),
        });
    }
    let mut rng = seed::derived_rng(cfg.seed, 1, 0);
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((ds.len() as f64) * cfg.val_fraction.clamp(0.0, 0.9)).round() as usize;
    let n_val = if ds.len() > 1 { n_val.min(ds.len() - 1) } else { 0 };
    let (val_idx, train_idx) = order.split_at(n_val);
    let train = ds.subset(train_idx);
    let val = if val_idx.is_empty() { train.clone() } else { ds.subset(val_idx) };

    let mut model = ApnModel::new(&cfg.widths, seed::derive(cfg.seed, 2, 0))?;
    model.input_mean = train.inputs.mean_axis(Axis(0)).expect("non-empty");
    model.input_scale = train
        .inputs
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });

    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut train_losses = Vec::with_capacity(cfg.epochs);
    let mut val_losses = Vec::with_capacity(cfg.epochs);
    let mut idx: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=cfg.epochs {
        idx.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in idx.chunks(cfg.batch_size) {
            let x = train.inputs.select(Axis(0), batch);
            let p: Vec<usize> = batch.iter().map(|&i| train.pick[i]).collect();
            let r: Vec<usize> = batch.iter().map(|&i| train.release[i]).collect();
            let (loss, grads) = model.loss_and_grad(x.view(), &p, &r);
            if !loss.is_finite() {
                return Err(Error::Diverged { step: epoch });
            }
            total += loss * batch.len() as f64;
            model.step(&grads, cfg.step_size);
        }
        train_losses.push(total / train.len() as f64);
        let v = model.loss(val.inputs.view(), &val.pick, &val.release);
        if !v.is_finite() {
            return Err(Error::Diverged { step: epoch });
        }
        val_losses.push(v);
        if v < best.0 {
            best = (v, epoch, model.clone());
        }
    }
    Ok(TrainOutcome {
        model: best.2,
        best_epoch: best.1,
        train_losses,
        val_losses,
    })
}

/// Majority action among the `k` training rows nearest to `(z1, z2)` under
/// `metric`; ties go to the smallest `(pick, release)` cell pair.
pub fn knn_propose(train: &ApnDataset, z1: &[f64], z2: &[f64], k: usize, metric: Metric) -> Result<ActionSpec> {
    if train.is_empty() {
        return Err(Error::Empty("empty training set for nearest-neighbour proposals"));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let query: Vec<f64> = z1.iter().chain(z2).copied().collect();
    if query.len() != train.input_dim() {
        return Err(Error::DimensionMismatch { expected: train.input_dim(), actual: query.len() });
    }
    let mut scored: Vec<(f64, usize)> = train
        .inputs
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| (metric.eval(row.as_slice().expect("standard layout"), &query), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = [[0usize; CELLS]; CELLS];
    for &(_, i) in scored.iter().take(k) {
        votes[train.pick[i]][train.release[i]] += 1;
    }
    let mut best = (0, 0, 0);
    for (p, row) in votes.iter().enumerate() {
        for (r, &v) in row.iter().enumerate() {
            if v > best.2 {
                best = (p, r, v);
            }
        }
    }
    ActionSpec::from_indices(best.0, best.1)
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    widths: Vec<usize>,
    /// Row-major `(in, out)` matrices as nested rows.
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    input_mean: Vec<f64>,
    input_scale: Vec<f64>,
}

impl From<ApnModel> for ModelRecord {
    fn from(m: ApnModel) -> Self {
        ModelRecord {
            widths: m.widths,
            weights: m
                .weights
                .iter()
                .map(|w| w.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            input_mean: m.input_mean.to_vec(),
            input_scale: m.input_scale.to_vec(),
        }
    }
}

impl TryFrom<ModelRecord> for ApnModel {
    type Error = Error;

    fn try_from(r: ModelRecord) -> Result<Self> {
        let mut model = ApnModel::new(&r.widths, 0)?;
        if r.weights.len() != model.weights.len() || r.biases.len() != model.biases.len() {
            return Err(Error::InvalidRecord("layer count does not match widths".into()));
        }
        for (l, rows) in r.weights.into_iter().enumerate() {
            let (ni, no) = model.weights[l].dim();
            if rows.len() != ni || rows.iter().any(|row| row.len() != no) {
                return Err(Error::InvalidRecord(format!("layer {l} weights are not {ni}x{no}")));
            }
            model.weights[l] = Array2::from_shape_vec((ni, no), rows.into_iter().flatten().collect())
                .map_err(|e| Error::InvalidRecord(e.to_string()))?;
        }
        for (l, b) in r.biases.into_iter().enumerate() {
            if b.len() != model.biases[l].len() {
                return Err(Error::InvalidRecord(format!("layer {l} bias has wrong length")));
            }
            model.biases[l] = Array1::from(b);
        }
        if r.input_mean.len() != model.widths[0] || r.input_scale.len() != model.widths[0] {
            return Err(Error::InvalidRecord("input standardization has wrong length".into()));
        }
        model.input_mean = Array1::from(r.input_mean);
        model.input_scale = Array1::from(r.input_scale);
        Ok(model)
    }
}
