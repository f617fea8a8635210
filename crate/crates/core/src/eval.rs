//! Planning benchmarks over encoded boxworld states: roadmap plans, the
//! straight-line baseline, full plans with proposed actions, and ε sweeps.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apn::{propose_action, ApnModel};
use crate::boxworld::StateSpace;
use crate::embedder::Embedder;
use crate::epsilon::estimate_epsilon;
use crate::error::{Error, Result};
use crate::lsr::{linear_interpolation_plan, Roadmap, DEFAULT_PATH_CAP};
use crate::metric::Metric;
use crate::seed;
use crate::tuple::{ClassLabel, TransitionTuple};

/// Grid used when none is given.
pub const DEFAULT_W_EPS_GRID: [f64; 4] = [-0.5, 0.0, 0.5, 1.0];

const TRIAL_STREAM: u64 = 0x74_7269_616c;
const MAX_RESAMPLES: usize = 10_000;

/// Planning scores for one configuration. `trans_pct` counts every
/// transition of every returned path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub n_trials: usize,
    pub all_pct: f64,
    pub any_pct: f64,
    pub trans_pct: f64,
    pub metric: Metric,
    pub w_eps: Option<f64>,
    pub epsilon: Option<f64>,
    pub paths: usize,
    pub transitions: usize,
    /// Share of proposed actions on valid paths whose pick, release, or both
    /// match the oracle move. `None` when no model was evaluated.
    pub apn_pick_acc: Option<f64>,
    pub apn_release_acc: Option<f64>,
    pub apn_action_pct: Option<f64>,
    pub seed: u64,
    pub warning: Option<String>,
}

/// Flat CSV row of a report.
#[derive(Serialize)]
struct ReportRow<'a> {
    kind: &'a str,
    n_trials: usize,
    all_pct: f64,
    any_pct: f64,
    trans_pct: f64,
    metric: &'a str,
    w_eps: Option<f64>,
    epsilon: Option<f64>,
    paths: usize,
    transitions: usize,
    apn_pick_acc: Option<f64>,
    apn_release_acc: Option<f64>,
    apn_action_pct: Option<f64>,
    seed: u64,
    warning: &'a str,
}

impl EvalReport {
    fn row(&self) -> ReportRow<'_> {
        ReportRow {
            kind: &self.kind,
            n_trials: self.n_trials,
            all_pct: self.all_pct,
            any_pct: self.any_pct,
            trans_pct: self.trans_pct,
            metric: self.metric.name(),
            w_eps: self.w_eps,
            epsilon: self.epsilon,
            paths: self.paths,
            transitions: self.transitions,
            apn_pick_acc: self.apn_pick_acc,
            apn_release_acc: self.apn_release_acc,
            apn_action_pct: self.apn_action_pct,
            seed: self.seed,
            warning: self.warning.as_deref().unwrap_or(""),
        }
    }

    pub fn with_w_eps(mut self, w_eps: f64) -> Self {
        self.w_eps = Some(w_eps);
        self
    }
}

/// Reports as CSV with a header row.
pub fn reports_to_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r.row()).map_err(|e| Error::InvalidRecord(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidRecord(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub n_trials: usize,
    pub seed: u64,
    /// Maximum number of shortest paths scored per trial.
    pub path_cap: usize,
}

impl EvalConfig {
    pub fn new(n_trials: usize, seed: u64) -> Self {
        Self { n_trials, seed, path_cap: DEFAULT_PATH_CAP }
    }
}

/// A sampled start/goal pair with fresh latent encodings.
#[derive(Clone, Debug)]
pub struct Trial {
    pub start: ClassLabel,
    pub goal: ClassLabel,
    pub z_start: Vec<f64>,
    pub z_goal: Vec<f64>,
}

/// Draws trial `index` of the run seeded by `master`: two distinct labels
/// encoded with fresh noise, redrawn until their encodings decode apart and
/// `accept` holds.
pub fn sample_trial(
    embedder: &Embedder,
    master: u64,
    index: usize,
    accept: impl Fn(&Trial) -> Result<bool>,
) -> Result<Trial> {
    let n = embedder.num_classes();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two classes to sample trials".into()));
    }
    let mut rng = seed::derived_rng(master, TRIAL_STREAM, index as u64);
    for _ in 0..MAX_RESAMPLES {
        let start = rng.random_range(0..n);
        let mut goal = rng.random_range(0..n - 1);
        if goal >= start {
            goal += 1;
        }
        let z_start = embedder.encode(start, &mut rng)?.into_inner();
        let z_goal = embedder.encode(goal, &mut rng)?.into_inner();
        if embedder.decode(&z_start)? == embedder.decode(&z_goal)? {
            continue;
        }
        let t = Trial { start, goal, z_start, z_goal };
        if accept(&t)? {
            return Ok(t);
        }
    }
    Err(Error::InvalidParameter(format!("no acceptable trial after {MAX_RESAMPLES} draws")))
}

fn check_compatible(roadmap: &Roadmap, embedder: &Embedder, space: &StateSpace) -> Result<()> {
    if roadmap.metric != embedder.metric {
        return Err(Error::InvalidParameter(format!(
            "roadmap metric {} differs from embedder metric {}",
            roadmap.metric, embedder.metric
        )));
    }
    if roadmap.latent_dim != embedder.latent_dim {
        return Err(Error::DimensionMismatch { expected: embedder.latent_dim, actual: roadmap.latent_dim });
    }
    if roadmap.nodes.is_empty() {
        return Err(Error::EmptyRoadmap);
    }
    check_classes(embedder, space)
}

fn check_classes(embedder: &Embedder, space: &StateSpace) -> Result<()> {
    if embedder.num_classes() != space.len() {
        return Err(Error::InvalidParameter(format!(
            "embedder has {} classes but the world has {} states",
            embedder.num_classes(),
            space.len()
        )));
    }
    Ok(())
}

/// Per-trial tallies, summed in trial order.
#[derive(Clone, Copy, Debug, Default)]
struct Tally {
    all: usize,
    any: usize,
    paths: usize,
    transitions: usize,
    valid_transitions: usize,
    proposals: usize,
    pick_ok: usize,
    release_ok: usize,
    action_ok: usize,
}

impl std::ops::Add for Tally {
    type Output = Tally;
    fn add(self, o: Tally) -> Tally {
        Tally {
            all: self.all + o.all,
            any: self.any + o.any,
            paths: self.paths + o.paths,
            transitions: self.transitions + o.transitions,
            valid_transitions: self.valid_transitions + o.valid_transitions,
            proposals: self.proposals + o.proposals,
            pick_ok: self.pick_ok + o.pick_ok,
            release_ok: self.release_ok + o.release_ok,
            action_ok: self.action_ok + o.action_ok,
        }
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Scores decoded label paths for one trial. Returns the tally and which
/// paths were valid.
fn score_paths(space: &StateSpace, trial: &Trial, paths: &[Vec<ClassLabel>]) -> (Tally, Vec<bool>) {
    let mut t = Tally { paths: paths.len(), ..Tally::default() };
    let mut valid = Vec::with_capacity(paths.len());
    for labels in paths {
        let mut ok = labels.first() == Some(&trial.start) && labels.last() == Some(&trial.goal);
        for w in labels.windows(2) {
            t.transitions += 1;
            if space.transition(w[0], w[1]).is_some() {
                t.valid_transitions += 1;
            } else {
                ok = false;
            }
        }
        valid.push(ok);
    }
    let n_valid = valid.iter().filter(|&&v| v).count();
    t.any = (n_valid > 0) as usize;
    t.all = (n_valid > 0 && n_valid == paths.len()) as usize;
    (t, valid)
}

fn report(kind: &str, metric: Metric, epsilon: Option<f64>, cfg: &EvalConfig, n: usize, t: Tally, with_apn: bool) -> EvalReport {
    let warning = if n == 0 {
        Some("no trials evaluated".to_string())
    } else if t.transitions == 0 {
        Some("no transitions scored".to_string())
    } else {
        None
    };
    let apn = |x: usize| with_apn.then(|| pct(x, t.proposals));
    EvalReport {
        kind: kind.to_string(),
        n_trials: n,
        all_pct: pct(t.all, n),
        any_pct: pct(t.any, n),
        trans_pct: pct(t.valid_transitions, t.transitions),
        metric,
        w_eps: None,
        epsilon,
        paths: t.paths,
        transitions: t.transitions,
        apn_pick_acc: apn(t.pick_ok),
        apn_release_acc: apn(t.release_ok),
        apn_action_pct: apn(t.action_ok),
        seed: cfg.seed,
        warning,
    }
}

fn decode_all(embedder: &Embedder, states: &[crate::latent::LatentPoint]) -> Result<Vec<ClassLabel>> {
    states.iter().map(|z| embedder.decode(z)).collect()
}

fn run_trials(
    embedder: &Embedder,
    cfg: &EvalConfig,
    accept: impl Fn(&Trial) -> Result<bool> + Sync,
    score: impl Fn(&Trial) -> Result<Tally> + Sync,
) -> Result<Tally> {
    let tallies: Vec<Tally> = (0..cfg.n_trials)
        .into_par_iter()
        .map(|i| {
            let trial = sample_trial(embedder, cfg.seed, i, &accept)?;
            score(&trial)
        })
        .collect::<Result<_>>()?;
    Ok(tallies.into_iter().fold(Tally::default(), |a, b| a + b))
}

/// Plans between fresh encodings of random start and goal states and scores
/// the decoded plans with the world's move rules.
pub fn evaluate_planning(roadmap: &Roadmap, embedder: &Embedder, cfg: &EvalConfig) -> Result<EvalReport> {
    evaluate_with(roadmap, embedder, None, cfg)
}

/// As [`evaluate_planning`], additionally proposing an action for each
/// consecutive pair of every valid plan and checking that applying it to the
/// decoded state yields the next decoded state.
pub fn evaluate_full_pipeline(roadmap: &Roadmap, embedder: &Embedder, model: &ApnModel, cfg: &EvalConfig) -> Result<EvalReport> {
    if model.input_dim() != 2 * embedder.latent_dim {
        return Err(Error::DimensionMismatch { expected: 2 * embedder.latent_dim, actual: model.input_dim() });
    }
    evaluate_with(roadmap, embedder, Some(model), cfg)
}

fn evaluate_with(roadmap: &Roadmap, embedder: &Embedder, model: Option<&ApnModel>, cfg: &EvalConfig) -> Result<EvalReport> {
    let space = StateSpace::new();
    check_compatible(roadmap, embedder, &space)?;
    let tally = run_trials(embedder, cfg, |_| Ok(true), |trial| {
        let plans = roadmap.plan(&trial.z_start, &trial.z_goal, cfg.path_cap)?;
        let decoded: Vec<Vec<ClassLabel>> = plans.iter().map(|p| decode_all(embedder, &p.states)).collect::<Result<_>>()?;
        let (mut t, valid) = score_paths(&space, trial, &decoded);
        if let Some(model) = model {
            for ((plan, labels), _) in plans.iter().zip(&decoded).zip(&valid).filter(|(_, &v)| v) {
                for (k, w) in labels.windows(2).enumerate() {
                    let u = propose_action(model, &plan.states[k], &plan.states[k + 1])?;
                    let truth = space.transition(w[0], w[1]).expect("valid path");
                    t.proposals += 1;
                    t.pick_ok += (u.pick == truth.pick) as usize;
                    t.release_ok += (u.release == truth.release) as usize;
                    let from = space.state(w[0])?;
                    let reaches = from.apply_action(u).ok().as_ref() == Some(space.state(w[1])?);
                    t.action_ok += reaches as usize;
                }
            }
        }
        Ok(t)
    })?;
    let kind = if model.is_some() { "full_pipeline" } else { "roadmap" };
    Ok(report(kind, roadmap.metric, Some(roadmap.epsilon), cfg, cfg.n_trials, tally, model.is_some()))
}

/// Straight-line latent paths between the same kind of trials, with as many
/// points as the roadmap's shortest path. Trials whose shortest path has
/// fewer than three nodes are redrawn, since a two-point line is just the
/// endpoints.
pub fn evaluate_linear_baseline(roadmap: &Roadmap, embedder: &Embedder, cfg: &EvalConfig) -> Result<EvalReport> {
    let space = StateSpace::new();
    check_compatible(roadmap, embedder, &space)?;
    let shortest_len = |t: &Trial| -> Result<Option<usize>> {
        let s = roadmap.nearest_node(&t.z_start)?;
        let g = roadmap.nearest_node(&t.z_goal)?;
        Ok(roadmap.all_shortest_paths(s, g, 1)?.first().map(|p| p.len()))
    };
    let tally = run_trials(
        embedder,
        cfg,
        |t| Ok(shortest_len(t)?.is_some_and(|n| n >= 3)),
        |trial| {
            let n = shortest_len(trial)?.expect("accepted trials have a path");
            let line = linear_interpolation_plan(&trial.z_start, &trial.z_goal, n)?;
            let labels = decode_all(embedder, &line)?;
            Ok(score_paths(&space, trial, &[labels]).0)
        },
    )?;
    Ok(report("linear", roadmap.metric, Some(roadmap.epsilon), cfg, cfg.n_trials, tally, false))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub w_eps: f64,
    pub epsilon: f64,
    pub nodes: usize,
    pub edges: usize,
    pub report: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    /// Index of the best entry by All, then Any, then Trans. Earlier entries
    /// win exact ties.
    pub best: usize,
}

impl SweepResult {
    pub fn best_entry(&self) -> &SweepEntry {
        &self.entries[self.best]
    }
}

/// Builds one roadmap per `w_eps` in `grid` and evaluates each on the same
/// trials.
pub fn sweep_w_eps(
    tuples: &[TransitionTuple],
    embedder: &Embedder,
    grid: &[f64],
    min_samples: usize,
    cfg: &EvalConfig,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(Error::Empty("w_eps grid"));
    }
    let no_action: Vec<TransitionTuple> = tuples.iter().filter(|t| !t.is_action()).cloned().collect();
    let mut entries = Vec::with_capacity(grid.len());
    for &w in grid {
        let epsilon = estimate_epsilon(&no_action, embedder.metric, w)?;
        let roadmap = Roadmap::build(tuples, epsilon, embedder.metric, min_samples)?;
        let report = evaluate_planning(&roadmap, embedder, cfg)?.with_w_eps(w);
        log::info!(
            "w_eps {w}: eps {epsilon:.4}, {} nodes, all {:.1}% any {:.1}% trans {:.1}%",
            roadmap.nodes.len(),
            report.all_pct,
            report.any_pct,
            report.trans_pct
        );
        entries.push(SweepEntry { w_eps: w, epsilon, nodes: roadmap.nodes.len(), edges: roadmap.edges.len(), report });
    }
    let key = |e: &SweepEntry| (e.report.all_pct, e.report.any_pct, e.report.trans_pct);
    let mut best = 0;
    for (i, e) in entries.iter().enumerate() {
        if key(e).partial_cmp(&key(&entries[best])) == Some(std::cmp::Ordering::Greater) {
            best = i;
        }
    }
    Ok(SweepResult { entries, best })
}
