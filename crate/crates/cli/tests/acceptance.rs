//! End-to-end acceptance checks A1-A10 at desk scale. Runs as a plain binary
//! so every criterion prints exactly one PASS or FAIL line; pass criterion
//! ids (e.g. `A3 A5`) as arguments to run a subset.

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use lsr_core::apn::{self, ApnDataset, ApnModel, TrainConfig, OUTPUTS};
use lsr_core::boxworld::{enumerate_states, NUM_STATES};
use lsr_core::embedder::DEFAULT_OVERLAP_RANK;
use lsr_core::epsilon::no_action_moments;
use lsr_core::eval::{self, EvalConfig, SweepResult, DEFAULT_W_EPS_GRID};
use lsr_core::losslab::{self, LossConfig, OptimizeConfig};
use lsr_core::lsr::cluster_epsilon;
use lsr_core::{estimate_epsilon, Embedder, EmbedderConfig, EmbedderMode, Metric, Roadmap, StateSpace, TransitionTuple};
use ndarray::Array2;
use rand::{Rng, SeedableRng};

const LATENT_DIM: usize = 64;
const D_M: f64 = 20.0;
const N_TUPLES: usize = 5000;
const ACTION_FRACTION: f64 = 0.65;
const N_TRIALS: usize = 1000;

const A1_MIN_PCT: f64 = 99.0;
const A2_MIN_GAP: f64 = 20.0;
const A2_SEEDS: [u64; 3] = [11, 12, 13];
const A4_MIN_ACC: f64 = 0.99;
const A4_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const A4_TEST_PAIRS: usize = 1491;
const A4_EPOCHS: usize = 30;
const A5_INSTANCES: usize = 200;
const A6_MIN_IDENTITY: f64 = 0.999;
const A6_SAMPLES: usize = 10_000;
const A7_INTER_TOL: f64 = 0.10;
const A7_MAX_INTRA: f64 = 2.0;
const A7_MIN_POSITIVE: f64 = 0.95;
const A9_POINTS: usize = 1000;
const A9_MAX_REL_ERR: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const KINK_MARGIN: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Setup {
    embedder: Embedder,
    tuples: Vec<TransitionTuple>,
}

fn setup(metric: Metric, mode: EmbedderMode, seed: u64) -> Setup {
    let space = StateSpace::new();
    let mut cfg = EmbedderConfig::new(space.len(), LATENT_DIM, metric, mode, D_M, seed);
    cfg.overlap_rank = DEFAULT_OVERLAP_RANK;
    let embedder = Embedder::fit(&cfg, Some(&space.features())).expect("embedder fits");
    let sym = space.generate_dataset(N_TUPLES, ACTION_FRACTION, seed).unwrap();
    let tuples = embedder.embed_dataset(&sym, seed ^ 0x5eed).unwrap();
    Setup { embedder, tuples }
}

fn sweep(s: &Setup, seed: u64) -> SweepResult {
    eval::sweep_w_eps(&s.tuples, &s.embedder, &DEFAULT_W_EPS_GRID, 1, &EvalConfig::new(N_TRIALS, seed)).unwrap()
}

fn no_action(tuples: &[TransitionTuple]) -> Vec<TransitionTuple> {
    tuples.iter().filter(|t| !t.is_action()).cloned().collect()
}

fn a1() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for metric in [Metric::L1, Metric::L2] {
        let s = setup(metric, EmbedderMode::Separated, 1);
        let res = sweep(&s, 1);
        let b = res.best_entry();
        let r = &b.report;
        pass &= r.all_pct >= A1_MIN_PCT && r.any_pct >= A1_MIN_PCT && r.trans_pct >= A1_MIN_PCT;
        parts.push(format!(
            "{metric}: w_eps {} all {:.1}% any {:.1}% trans {:.2}%",
            b.w_eps, r.all_pct, r.any_pct, r.trans_pct
        ));
    }
    outcome(pass, format!("{} (bar {A1_MIN_PCT}%)", parts.join("; ")))
}

fn a2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in A2_SEEDS {
        let trans = |metric, mode| sweep(&setup(metric, mode, seed), seed).best_entry().report.trans_pct;
        let sep: Vec<f64> = Metric::ALL.iter().map(|&m| trans(m, EmbedderMode::Separated)).collect();
        let overlap = Metric::ALL.iter().map(|&m| trans(m, EmbedderMode::Overlapping)).fold(0.0, f64::max);
        let ordered = sep[0] >= sep[1] && sep[1] >= sep[2];
        let gap = sep.iter().copied().fold(f64::INFINITY, f64::min) - overlap;
        pass &= ordered && gap >= A2_MIN_GAP;
        parts.push(format!(
            "seed {seed}: L1 {:.2} L2 {:.2} Linf {:.2} overlap(max) {overlap:.2}",
            sep[0], sep[1], sep[2]
        ));
    }
    outcome(pass, format!("{} (gap >= {A2_MIN_GAP} pts)", parts.join("; ")))
}

fn a3() -> Outcome {
    let s = setup(Metric::L1, EmbedderMode::Separated, 1);
    let best = sweep(&s, 1).best_entry().clone();
    let roadmap = Roadmap::build(&s.tuples, best.epsilon, Metric::L1, 1).unwrap();
    let cfg = EvalConfig::new(N_TRIALS, 1);
    let lin = eval::evaluate_linear_baseline(&roadmap, &s.embedder, &cfg).unwrap();
    let planned = eval::evaluate_planning(&roadmap, &s.embedder, &cfg).unwrap();
    outcome(
        lin.all_pct == 0.0 && lin.n_trials == N_TRIALS && lin.trans_pct < planned.trans_pct,
        format!(
            "linear all {:.1}% trans {:.2}% over {} trials; roadmap trans {:.2}%",
            lin.all_pct, lin.trans_pct, lin.n_trials, planned.trans_pct
        ),
    )
}

fn a4() -> Outcome {
    let space = StateSpace::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for seed in A4_SEEDS {
        let s = setup(Metric::L1, EmbedderMode::Separated, seed);
        let train: Vec<TransitionTuple> = s.tuples.iter().filter(|t| t.is_action()).cloned().collect();
        let ds = apn::augment_pairs(&train, 1, s.embedder.noise_sigma, seed).unwrap();
        assert_eq!(ds.len(), 2 * train.len());
        let held_out_sym = space.generate_dataset(A4_TEST_PAIRS, 1.0, seed + 1000).unwrap();
        let held_out = s.embedder.embed_dataset(&held_out_sym, seed + 2000).unwrap();
        let test = ApnDataset::from_tuples(&held_out).unwrap();
        let mut cfg = TrainConfig::for_latent_dim(LATENT_DIM, seed);
        cfg.epochs = A4_EPOCHS;
        let out = apn::train_apn(&ds, &cfg).unwrap();
        let (pick, release, _) = out.model.accuracy(&test);
        pass &= pick >= A4_MIN_ACC && release >= A4_MIN_ACC;
        parts.push(format!("seed {seed}: pick {:.2}% release {:.2}%", 100.0 * pick, 100.0 * release));
    }
    outcome(pass, format!("{} on {A4_TEST_PAIRS} held-out pairs", parts.join("; ")))
}

/// Connected components of the strict `< eps` graph by union-find over all
/// pairs, as sorted member lists.
fn oracle_partition(points: &[Vec<f64>], eps: f64, metric: Metric) -> BTreeSet<Vec<usize>> {
    let n = points.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = match metric {
                Metric::L1 => points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).abs()).sum(),
                Metric::L2 => points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
                Metric::Linf => points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            };
            if d < eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups = std::collections::BTreeMap::<usize, Vec<usize>>::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

fn a5() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut checked = 0;
    for k in 0..A5_INSTANCES {
        let metric = Metric::ALL[k % 3];
        let n = rng.random_range(1..=200);
        let dim = rng.random_range(1..=8);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let eps = rng.random_range(0.05..6.0);
        let got: BTreeSet<Vec<usize>> = cluster_epsilon(&points, eps, metric)
            .unwrap()
            .into_iter()
            .map(|r| {
                let mut m = r.members;
                m.sort_unstable();
                m
            })
            .collect();
        checked += 1;
        if got != oracle_partition(&points, eps, metric) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches} mismatching partitions in {checked} instances"))
}

fn a6() -> Outcome {
    let s = setup(Metric::L1, EmbedderMode::Separated, 1);
    let na = no_action(&s.tuples);
    let moments = no_action_moments(&na, Metric::L1).unwrap();
    let eps = estimate_epsilon(&na, Metric::L1, 0.5).unwrap();
    let min_action = s
        .tuples
        .iter()
        .filter(|t| t.is_action())
        .map(|t| Metric::L1.eval(&t.z1, &t.z2))
        .fold(f64::INFINITY, f64::min);
    let max_no_action = na.iter().map(|t| Metric::L1.eval(&t.z1, &t.z2)).fold(0.0, f64::max);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
    let hits = (0..A6_SAMPLES)
        .filter(|_| {
            let label = rng.random_range(0..NUM_STATES);
            let z = s.embedder.encode(label, &mut rng).unwrap();
            s.embedder.decode(&z).unwrap() == label
        })
        .count();
    let identity = hits as f64 / A6_SAMPLES as f64;
    outcome(
        moments.mean < eps && eps < min_action && identity >= A6_MIN_IDENTITY,
        format!(
            "mean no-action {:.3} < eps {eps:.3} < min action {min_action:.3} (max no-action {max_no_action:.3}); decode identity {:.2}%",
            moments.mean,
            100.0 * identity
        ),
    )
}

fn a7() -> Outcome {
    let space = StateSpace::new();
    let sym = space.generate_dataset(N_TUPLES, ACTION_FRACTION, 7).unwrap();
    let cfg = LossConfig::new(D_M, Metric::L1).unwrap();
    let opt = OptimizeConfig { seed: 7, ..OptimizeConfig::default() };
    let out = losslab::optimize_embeddings(&sym, LATENT_DIM, &cfg, &opt).unwrap();
    let stats = losslab::class_distance_stats(&out.embeddings, Metric::L1).unwrap();
    let inter = stats.mean_of(|c| c.inter_mean);
    let intra = stats.mean_of(|c| c.intra_mean);
    let positive = stats.positive_margin_fraction();
    outcome(
        (inter - D_M).abs() <= A7_INTER_TOL * D_M && intra <= A7_MAX_INTRA && positive >= A7_MIN_POSITIVE,
        format!(
            "inter mean {inter:.3} (target {D_M} +/- {:.0}%), intra mean {intra:.3}, positive margin {:.1}% of {} classes",
            100.0 * A7_INTER_TOL,
            100.0 * positive,
            stats.classes.len()
        ),
    )
}

/// Height profiles of four boxes in three columns of height at most three.
fn height_profiles() -> usize {
    (0..=3usize).flat_map(|a| (0..=3usize).map(move |b| (a, b))).filter(|&(a, b)| a + b <= 4 && 4 - a - b <= 3).count()
}

fn a8() -> Outcome {
    let states = enumerate_states();
    let expected = height_profiles() * (1..=4).product::<usize>();
    let space = StateSpace::new();
    let mut seen = vec![false; space.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        let s = space.state(i).unwrap();
        for u in s.legal_actions() {
            let j = space.label(&s.apply_action(u).unwrap()).unwrap();
            if !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    let reached = seen.iter().filter(|&&v| v).count();
    // every move can be undone, so reaching everything from one state makes
    // the graph strongly connected
    let reversible = (0..space.len()).all(|i| {
        let s = space.state(i).unwrap();
        s.legal_actions().into_iter().all(|u| s.apply_action(u).unwrap().action_to(s).is_some())
    });
    outcome(
        states.len() == expected && expected == 288 && reached == states.len() && reversible,
        format!("{} states, combinatorial count {expected}, {reached} reachable from state 0, moves reversible: {reversible}", states.len()),
    )
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let err = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

fn loss_near_kink(z1: &[f64], z2: &[f64], action: bool, cfg: &LossConfig) -> bool {
    let diff: Vec<f64> = z1.iter().zip(z2).map(|(a, b)| (a - b).abs()).collect();
    if action && (cfg.metric.eval(z1, z2) - cfg.d_m).abs() < KINK_MARGIN {
        return true;
    }
    match cfg.metric {
        Metric::L1 => diff.iter().any(|&d| d < KINK_MARGIN),
        Metric::L2 => diff.iter().all(|&d| d < KINK_MARGIN),
        Metric::Linf => {
            let mut sorted = diff.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            sorted.len() > 1 && sorted[0] - sorted[1] < KINK_MARGIN
        }
    }
}

fn loss_fd_worst(metric: Metric, rng: &mut impl Rng) -> f64 {
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < A9_POINTS {
        let dim = rng.random_range(1..=12);
        let scale = rng.random_range(0.5..15.0);
        let z1: Vec<f64> = (0..dim).map(|_| rng.random_range(-scale..scale)).collect();
        let z2: Vec<f64> = (0..dim).map(|_| rng.random_range(-scale..scale)).collect();
        let action = rng.random_bool(0.5);
        let mut cfg = LossConfig::new(rng.random_range(1.0..30.0), metric).unwrap();
        cfg.lambda_prior = 0.0;
        if loss_near_kink(&z1, &z2, action, &cfg) {
            continue;
        }
        let (g1, g2) = losslab::action_loss_grad(&z1, &z2, action, &cfg);
        let analytic: Vec<f64> = g1.into_iter().chain(g2).collect();
        let mut x: Vec<f64> = z1.iter().chain(&z2).copied().collect();
        let mut numeric = Vec::with_capacity(x.len());
        for k in 0..x.len() {
            let orig = x[k];
            x[k] = orig + FD_STEP;
            let up = losslab::action_loss(&x[..dim], &x[dim..], action, &cfg);
            x[k] = orig - FD_STEP;
            let down = losslab::action_loss(&x[..dim], &x[dim..], action, &cfg);
            x[k] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
        checked += 1;
    }
    worst
}

fn apn_fd_worst(rng: &mut impl Rng) -> f64 {
    let widths = [4, 6, 8, 6, OUTPUTS];
    let mut worst = 0.0f64;
    let mut checked = 0;
    while checked < A9_POINTS {
        let mut model = ApnModel::new(&widths, rng.random()).unwrap();
        let rows = rng.random_range(1..=3);
        let x = Array2::from_shape_fn((rows, widths[0]), |_| rng.random_range(-2.0..2.0));
        if model.hidden_preactivations(x.view()).iter().any(|z| z.iter().any(|v| v.abs() < KINK_MARGIN)) {
            continue;
        }
        let pick: Vec<usize> = (0..rows).map(|_| rng.random_range(0..9)).collect();
        let release: Vec<usize> = (0..rows).map(|_| rng.random_range(0..9)).collect();
        let (_, grads) = model.loss_and_grad(x.view(), &pick, &release);
        let analytic: Vec<f64> = grads
            .weights
            .iter()
            .zip(&grads.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
            .collect();
        let mut params = model.parameters();
        let mut numeric = Vec::with_capacity(params.len());
        for k in 0..params.len() {
            let orig = params[k];
            params[k] = orig + FD_STEP;
            model.set_parameters(&params).unwrap();
            let up = model.loss(x.view(), &pick, &release);
            params[k] = orig - FD_STEP;
            model.set_parameters(&params).unwrap();
            let down = model.loss(x.view(), &pick, &release);
            params[k] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        worst = worst.max(relative_error(&analytic, &numeric));
        checked += 1;
    }
    worst
}

fn a9() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let losses: Vec<(Metric, f64)> = Metric::ALL.iter().map(|&m| (m, loss_fd_worst(m, &mut rng))).collect();
    let net = apn_fd_worst(&mut rng);
    let pass = losses.iter().all(|&(_, e)| e < A9_MAX_REL_ERR) && net < A9_MAX_REL_ERR;
    let parts: Vec<String> = losses.iter().map(|(m, e)| format!("{m} {e:.1e}")).collect();
    outcome(pass, format!("worst relative error: loss {}, network {net:.1e} (bound {A9_MAX_REL_ERR:.0e})", parts.join(" ")))
}

fn lsr(dir: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_lsr"))
        .args(args)
        .current_dir(dir)
        .stdout(std::process::Stdio::null())
        .status()
        .expect("binary runs");
    assert!(status.success(), "lsr {args:?} failed with {status}");
}

fn a10() -> Outcome {
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        lsr(d, &["gen", "--out", "sym.jsonl", "--seed", "10"]);
        lsr(d, &["embed", "--dataset", "sym.jsonl", "--out", "lat.jsonl", "--embedder-out", "emb.json", "--seed", "10"]);
        lsr(d, &["build", "--dataset", "lat.jsonl", "--out", "rm.jsonl", "--w-eps", "0.5"]);
        lsr(d, &["eval", "--roadmap", "rm.jsonl", "--embedder", "emb.json", "--linear", "--seed", "10", "--csv", "r.csv", "--summary", "s.json"]);
        ["sym.jsonl", "lat.jsonl", "emb.json", "rm.jsonl", "r.csv", "s.json"].map(|f| std::fs::read(d.join(f)).unwrap())
    };
    let (a, b) = (run(), run());
    let same = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    outcome(same == a.len(), format!("{same}/{} artifacts byte-identical across two runs", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] =
        [("A1", a1), ("A2", a2), ("A3", a3), ("A4", a4), ("A5", a5), ("A6", a6), ("A7", a7), ("A8", a8), ("A9", a9), ("A10", a10)];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, check) in criteria {
        if !wanted.is_empty() && !wanted.iter().any(|w| w.eq_ignore_ascii_case(id)) {
            continue;
        }
        let t = Instant::now();
        let o = check();
        println!("{id:<4}{}  {}  [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, t.elapsed().as_secs_f64());
        failed += !o.pass as usize;
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
