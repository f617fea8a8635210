use std::path::Path;

use lsr_core::apn::{self, ApnDataset, ApnModel, TrainConfig};
use lsr_core::embedder::DEFAULT_OVERLAP_RANK;
use lsr_core::eval::{self, EvalConfig, EvalReport, DEFAULT_W_EPS_GRID};
use lsr_core::io::{self, AccuracyRow, DatasetHeader};
use lsr_core::losslab::{self, LossConfig, OptimizeConfig};
use lsr_core::lsr::DEFAULT_PATH_CAP;
use lsr_core::seed;
use lsr_core::{
    estimate_epsilon, BoxState, ClassLabel, Embedder, EmbedderConfig, EmbedderMode, Metric, Roadmap, StateSpace,
    TransitionTuple,
};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::args::*;
use crate::CliError;

/// Prints a line to stdout, exiting quietly once a downstream reader such as
/// `head` has closed the pipe.
macro_rules! say {
    () => {
        emit(format_args!(""))
    };
    ($($arg:tt)*) => {
        emit(format_args!($($arg)*))
    };
}

fn emit(line: std::fmt::Arguments) {
    use std::io::Write;
    if let Err(e) = writeln!(std::io::stdout().lock(), "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("failed writing to stdout: {e}");
    }
}

const TRANS_NOTE: &str = "trans_pct counts every transition of every returned shortest path";

pub fn gen(a: GenArgs) -> Result<(), CliError> {
    let out = required(a.out, "out")?;
    let n = a.n.unwrap_or(5000);
    let fraction = a.action_fraction.unwrap_or(0.65);
    let seed = a.seed.unwrap_or(0);
    let space = StateSpace::new();
    let tuples = space.generate_dataset(n, fraction, seed)?;
    io::write_symbolic_dataset(&out, &DatasetHeader::symbolic(seed), &tuples)?;
    let actions = tuples.iter().filter(|t| t.is_action()).count();
    say!("wrote {n} tuples ({actions} action, {} no-action) to {}", n - actions, out.display());
    Ok(())
}

pub fn embed(a: EmbedArgs) -> Result<(), CliError> {
    let dataset = required(a.dataset, "dataset")?;
    let out = required(a.out, "out")?;
    let embedder_out = required(a.embedder_out, "embedder-out")?;
    let seed = a.seed.unwrap_or(0);
    let space = StateSpace::new();
    let (_, sym) = io::read_symbolic_dataset(&dataset)?;
    let mut cfg = EmbedderConfig::new(
        space.len(),
        a.latent_dim.unwrap_or(64),
        a.metric.unwrap_or(Metric::L1),
        a.mode.unwrap_or(EmbedderMode::Separated),
        a.d_m.unwrap_or(20.0),
        seed,
    );
    cfg.noise_sigma = a.noise_sigma;
    cfg.overlap_rank = a.overlap_rank.unwrap_or(DEFAULT_OVERLAP_RANK);
    if let Some(b) = a.repulsion_budget {
        cfg.repulsion_budget = b;
    }
    let embedder = Embedder::fit(&cfg, Some(&space.features()))?;
    let tuples = embedder.embed_dataset(&sym, seed::derive(seed, 1, 0))?;
    io::write_latent_dataset(&out, &DatasetHeader::latent(cfg.latent_dim, cfg.metric, seed), &tuples)?;
    io::write_json(&embedder_out, &embedder)?;
    say!(
        "embedded {} tuples into {} dims ({} mode, min centroid distance {:.3}, noise sigma {:.4})",
        tuples.len(),
        cfg.latent_dim,
        match cfg.mode {
            EmbedderMode::Separated => "separated",
            EmbedderMode::Overlapping => "overlapping",
        },
        embedder.min_separation(),
        embedder.noise_sigma
    );
    Ok(())
}

fn dataset_metric(header: &DatasetHeader, path: &Path) -> Result<Metric, CliError> {
    header
        .metric
        .ok_or_else(|| CliError::Usage(format!("{} has no metric in its header; embed it first", path.display())))
}

fn no_action(tuples: &[TransitionTuple]) -> Vec<TransitionTuple> {
    tuples.iter().filter(|t| !t.is_action()).cloned().collect()
}

pub fn build(a: BuildArgs) -> Result<(), CliError> {
    let dataset = required(a.dataset, "dataset")?;
    let out = required(a.out, "out")?;
    let (header, tuples) = io::read_latent_dataset(&dataset)?;
    let metric = dataset_metric(&header, &dataset)?;
    let epsilon = match a.epsilon {
        Some(e) => e,
        None => estimate_epsilon(&no_action(&tuples), metric, a.w_eps.unwrap_or(0.5))?,
    };
    let roadmap = Roadmap::build(&tuples, epsilon, metric, a.min_samples.unwrap_or(1))?;
    io::write_roadmap(&out, &roadmap)?;
    say!("roadmap: {} nodes, {} edges, epsilon {epsilon:.6} ({metric})", roadmap.nodes.len(), roadmap.edges.len());
    Ok(())
}

fn parse_label(space: &StateSpace, text: &str) -> Result<ClassLabel, CliError> {
    if let Ok(label) = text.parse::<usize>() {
        space.state(label).map_err(|e| CliError::Usage(e.to_string()))?;
        return Ok(label);
    }
    let state = BoxState::parse(text).map_err(|e| CliError::Usage(format!("bad configuration {text:?}: {e}")))?;
    space
        .label(&state)
        .ok_or_else(|| CliError::Usage(format!("{text:?} is not a valid configuration")))
}

pub fn plan(a: PlanArgs) -> Result<(), CliError> {
    let roadmap = io::read_roadmap(&required(a.roadmap, "roadmap")?)?;
    let embedder: Embedder = io::read_json(&required(a.embedder, "embedder")?)?;
    let model: Option<ApnModel> = a.model.as_deref().map(io::read_json).transpose()?;
    let space = StateSpace::new();
    let start = parse_label(&space, &required(a.start, "start")?)?;
    let goal = parse_label(&space, &required(a.goal, "goal")?)?;
    let mut rng = seed::rng(a.seed.unwrap_or(0));
    let z_start = embedder.encode(start, &mut rng)?;
    let z_goal = embedder.encode(goal, &mut rng)?;
    let plans = roadmap.plan(&z_start, &z_goal, a.cap.unwrap_or(DEFAULT_PATH_CAP))?;
    say!("start {start} {}  goal {goal} {}", space.state(start)?.serialize(), space.state(goal)?.serialize());
    if plans.is_empty() {
        say!("no path between the start and goal regions");
        return Ok(());
    }
    say!("{} shortest path(s) with {} node(s)", plans.len(), plans[0].nodes.len());
    for (k, plan) in plans.iter().enumerate() {
        let labels: Vec<ClassLabel> = plan.states.iter().map(|z| embedder.decode(z)).collect::<Result<_, _>>()?;
        let states: Vec<BoxState> = labels.iter().map(|&l| space.state(l).copied()).collect::<Result<_, _>>()?;
        let actions: Vec<_> = labels.windows(2).map(|w| space.transition(w[0], w[1])).collect();
        let valid = labels.first() == Some(&start)
            && labels.last() == Some(&goal)
            && actions.iter().all(|u| u.is_some());
        say!("path {}: {}", k + 1, if valid { "valid" } else { "invalid" });
        for (i, (&node, s)) in plan.nodes.iter().zip(&states).enumerate() {
            say!("  {i:>2} node {node:>4} state {:>3} {}", labels[i], s.serialize());
            if i + 1 < plan.nodes.len() {
                let oracle = actions[i].map_or("none".to_string(), |u| u.to_string());
                match &model {
                    Some(m) => {
                        let u = apn::propose_action(m, &plan.states[i], &plan.states[i + 1])?;
                        say!("       proposed {u}  oracle {oracle}");
                    }
                    None => say!("       move {oracle}"),
                }
            }
        }
    }
    Ok(())
}

fn percent(x: f64) -> f64 {
    100.0 * x
}

pub fn train_apn(a: TrainApnArgs) -> Result<(), CliError> {
    let dataset = required(a.dataset, "dataset")?;
    let out = required(a.out, "out")?;
    let seed = a.seed.unwrap_or(0);
    let (header, tuples) = io::read_latent_dataset(&dataset)?;
    let sigma = match (a.posterior_sigma, &a.embedder) {
        (Some(s), _) => s,
        (None, Some(path)) => io::read_json::<Embedder>(path)?.noise_sigma,
        (None, None) => return Err(CliError::Usage("need --embedder or --posterior-sigma".into())),
    };
    let mut pairs: Vec<TransitionTuple> = tuples.into_iter().filter(|t| t.is_action()).collect();
    if pairs.is_empty() {
        return Err(CliError::Usage(format!("{} contains no action pairs", dataset.display())));
    }
    pairs.shuffle(&mut seed::derived_rng(seed, 3, 0));
    let test_fraction = a.test_fraction.unwrap_or(0.2);
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(CliError::Usage(format!("test_fraction {test_fraction} outside [0, 1)")));
    }
    let n_test = (pairs.len() as f64 * test_fraction).round() as usize;
    let (test, train) = pairs.split_at(n_test);
    let ds = apn::augment_pairs(train, a.s.unwrap_or(1), sigma, seed::derive(seed, 4, 0))?;
    let dim = header.latent_dim.expect("latent dataset header");
    let mut cfg = TrainConfig::for_latent_dim(dim, seed);
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.step_size = a.step_size.unwrap_or(cfg.step_size);
    cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
    let outcome = apn::train_apn(&ds, &cfg)?;
    io::write_json(&out, &outcome.model)?;
    let eval_set = if test.is_empty() { ds.clone() } else { ApnDataset::from_tuples(test)? };
    let (pick, release, both) = outcome.model.accuracy(&eval_set);
    let row = AccuracyRow { seed, pick_acc: percent(pick), release_acc: percent(release), both_acc: percent(both) };
    if let Some(report) = &a.report {
        io::write_csv(report, &[row])?;
    }
    say!(
        "trained on {} rows, best epoch {}; {} pick {:.2}% release {:.2}% both {:.2}%",
        ds.len(),
        outcome.best_epoch,
        if test.is_empty() { "training" } else { "held-out" },
        row.pick_acc,
        row.release_acc,
        row.both_acc
    );
    if let Some(min) = a.min_acc {
        if row.pick_acc < min || row.release_acc < min {
            return Err(CliError::Threshold(format!(
                "pick {:.2}% / release {:.2}% below {min}%",
                row.pick_acc, row.release_acc
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    note: &'a str,
    #[serde(flatten)]
    body: T,
}

fn print_report(r: &EvalReport) {
    print!(
        "{:<14} trials {:>5}  all {:>6.2}%  any {:>6.2}%  trans {:>6.2}%",
        r.kind, r.n_trials, r.all_pct, r.any_pct, r.trans_pct
    );
    if let Some(p) = r.apn_action_pct {
        print!("  actions {p:>6.2}%");
    }
    if let Some(w) = &r.warning {
        print!("  ({w})");
    }
    say!();
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let roadmap = io::read_roadmap(&required(a.roadmap, "roadmap")?)?;
    let embedder: Embedder = io::read_json(&required(a.embedder, "embedder")?)?;
    let model: Option<ApnModel> = a.model.as_deref().map(io::read_json).transpose()?;
    let mut cfg = EvalConfig::new(a.n_trials.unwrap_or(1000), a.seed.unwrap_or(0));
    cfg.path_cap = a.cap.unwrap_or(DEFAULT_PATH_CAP);
    let echo = |r: EvalReport| match a.w_eps {
        Some(w) => r.with_w_eps(w),
        None => r,
    };
    let main = echo(eval::evaluate_planning(&roadmap, &embedder, &cfg)?);
    let mut reports = vec![main.clone()];
    if a.linear.unwrap_or(false) {
        reports.push(echo(eval::evaluate_linear_baseline(&roadmap, &embedder, &cfg)?));
    }
    if let Some(m) = &model {
        reports.push(echo(eval::evaluate_full_pipeline(&roadmap, &embedder, m, &cfg)?));
    }
    reports.iter().for_each(print_report);
    if let Some(path) = &a.csv {
        io::write_atomic(path, eval::reports_to_csv(&reports)?.as_bytes())?;
    }
    if let Some(path) = &a.summary {
        #[derive(Serialize)]
        struct Body<'a> {
            reports: &'a [EvalReport],
        }
        io::write_json(path, &Summary { note: TRANS_NOTE, body: Body { reports: &reports } })?;
    }

    let mut failed = Vec::new();
    let mut check = |name: &str, value: Option<f64>, min: Option<f64>| {
        if let Some(min) = min {
            let v = value.unwrap_or(0.0);
            if v < min {
                failed.push(format!("{name} {v:.2}% < {min}%"));
            }
        }
    };
    check("all", Some(main.all_pct), a.min_all);
    check("any", Some(main.any_pct), a.min_any);
    check("trans", Some(main.trans_pct), a.min_trans);
    let apn = reports.iter().find_map(|r| r.apn_action_pct);
    check("actions", apn, a.min_apn);
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Threshold(failed.join(", ")))
    }
}

pub fn optimize(a: OptimizeArgs) -> Result<(), CliError> {
    let dataset = required(a.dataset, "dataset")?;
    let out = required(a.out, "out")?;
    let (_, sym) = io::read_symbolic_dataset(&dataset)?;
    let metric = a.metric.unwrap_or(Metric::L1);
    let mut loss = LossConfig::new(a.d_m.unwrap_or(20.0), metric)?;
    loss.gamma = a.gamma.unwrap_or(loss.gamma);
    loss.lambda_prior = a.lambda_prior.unwrap_or(loss.lambda_prior);
    let defaults = OptimizeConfig::default();
    let opt = OptimizeConfig {
        steps: a.steps.unwrap_or(defaults.steps),
        step_size: a.step_size.unwrap_or(defaults.step_size),
        seed: a.seed.unwrap_or(0),
        init_spread: a.init_spread.unwrap_or(defaults.init_spread),
        jitter: None,
    };
    let outcome = losslab::optimize_embeddings(&sym, a.latent_dim.unwrap_or(64), &loss, &opt)?;
    io::write_json(&out, &outcome.embeddings)?;
    let stats = losslab::class_distance_stats(&outcome.embeddings, metric)?;
    if let Some(path) = &a.stats {
        io::write_stats_csv(path, &stats)?;
    }
    let positive = percent(stats.positive_margin_fraction());
    say!(
        "loss {:.3} -> {:.3}; {} classes: inter mean {:.3}, intra mean {:.3}, mean margin {:.3}, positive margin {positive:.1}%",
        outcome.initial_loss,
        outcome.final_loss,
        stats.classes.len(),
        stats.mean_of(|c| c.inter_mean),
        stats.mean_of(|c| c.intra_mean),
        stats.mean_of(|c| c.margin),
    );
    if let Some(min) = a.min_positive_margin {
        if positive < min {
            return Err(CliError::Threshold(format!("positive margin {positive:.1}% < {min}%")));
        }
    }
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<(), CliError> {
    let dataset = required(a.dataset, "dataset")?;
    let (_, tuples) = io::read_latent_dataset(&dataset)?;
    let embedder: Embedder = io::read_json(&required(a.embedder, "embedder")?)?;
    let grid = a.grid.unwrap_or_else(|| DEFAULT_W_EPS_GRID.to_vec());
    let min_samples = a.min_samples.unwrap_or(1);
    let cfg = EvalConfig::new(a.n_trials.unwrap_or(1000), a.seed.unwrap_or(0));
    let result = eval::sweep_w_eps(&tuples, &embedder, &grid, min_samples, &cfg)?;
    for e in &result.entries {
        say!("w_eps {:>5}  epsilon {:.4}  nodes {:>4}  edges {:>5}", e.w_eps, e.epsilon, e.nodes, e.edges);
        print_report(&e.report);
    }
    let best = result.best_entry();
    say!("best w_eps {}", best.w_eps);
    if let Some(path) = &a.out {
        let reports: Vec<EvalReport> = result.entries.iter().map(|e| e.report.clone()).collect();
        io::write_atomic(path, eval::reports_to_csv(&reports)?.as_bytes())?;
    }
    if let Some(path) = &a.summary {
        io::write_json(path, &Summary { note: TRANS_NOTE, body: &result })?;
    }
    if let Some(path) = &a.roadmap_out {
        let roadmap = Roadmap::build(&tuples, best.epsilon, embedder.metric, min_samples)?;
        io::write_roadmap(path, &roadmap)?;
    }
    Ok(())
}
