//! Acceptance run: one PASS/FAIL line per criterion, with the measured values,
//! the pinned tolerances and wall-clock time. Runs without the libtest harness
//! so the lines always reach the log; exits nonzero if any criterion fails.
//!
//! The end-to-end benchmark trains ten MCReSAnet ensembles and ten MLPs on
//! 10 000 synthetic rows, so this takes a while on one core.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mcresanet::cli::{execute, RunConfig};
use mcresanet::data::{
    destandardize, fit_standardizer, flag_column, preprocess, remove_outliers, split, standardize, synthesize,
    train_count, Dataset, GenConfig, GroundTruth, HarmonicRecord, Prepared, PreprocessConfig, SplitMode,
};
use mcresanet::explain::{
    coalition_value, exact_from_table, exact_shapley, importance_matrix, mc_from_table, mc_shapley, Background,
    Coalition, CoalitionTable, Estimator,
};
use mcresanet::metrics::{evaluate, mae, r_squared, rmse, RSquaredMode};
use mcresanet::models::{
    grad_check_network, predict_network, McresanetConfig, McresanetHead, Model, ModelKind,
};
use mcresanet::nn::{
    grad_check, grad_check_input, Graph, ParamId, ParamKind, ParamSet, Tensor, Var, GRAD_CHECK_STEP,
};
use mcresanet::seeds;
use mcresanet::train::{train, train_network, uncertainty_with_seeds, RunMetrics, TrainConfig, UncertaintyReport};

const GRAD_TOL: f64 = 1e-4;
const SHAP_TOL: f64 = 1e-9;
const NULL_TOL: f64 = 1e-12;
const MC_TOL: f64 = 0.02;
const REPS: u64 = 5;

struct Verdict {
    id: &'static str,
    pass: bool,
    detail: String,
    secs: f64,
}

fn report(v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {:>2} ({:.1} s): {}", v.id, v.secs, v.detail);
}

fn timed(id: &'static str, f: impl FnOnce() -> (bool, String)) -> Verdict {
    let t = Instant::now();
    let (pass, detail) = f();
    let v = Verdict { id, pass, detail, secs: t.elapsed().as_secs_f64() };
    report(&v);
    v
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Scalar contraction of an arbitrary output with fixed random weights.
fn contract(g: &mut Graph, out: Var, seed: u64) -> mcresanet::Result<Var> {
    let c = random(g.value(out).shape(), &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let c = g.input(c);
    let m = g.mul(out, c)?;
    Ok(g.sum(m))
}

fn criterion_1() -> (bool, String) {
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut note = |name: &str, e: f64| match worst.iter_mut().find(|(n, _)| n == name) {
        Some((_, w)) => *w = w.max(e),
        None => worst.push((name.to_string(), e)),
    };
    let (mut checked, mut skipped) = (0usize, 0usize);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let param_cases: Vec<(&str, ParamSet, Box<dyn Fn(&mut Graph, &ParamSet, &[ParamId]) -> mcresanet::Result<Var>>, Vec<ParamId>)> = {
            let mut v: Vec<(&str, ParamSet, Box<dyn Fn(&mut Graph, &ParamSet, &[ParamId]) -> mcresanet::Result<Var>>, Vec<ParamId>)> = Vec::new();
            let x = random(&[3, 4], &mut rng);
            let mut set = ParamSet::new();
            let ids = vec![set.add("w", ParamKind::Weight, random(&[5, 4], &mut rng)), set.add("b", ParamKind::Bias, random(&[5], &mut rng))];
            v.push(("linear", set, Box::new(move |g, p, id| {
                let xi = g.input(x.clone());
                let (w, b) = (g.param(p, id[0]), g.param(p, id[1]));
                let y = g.linear(xi, w, Some(b))?;
                contract(g, y, seed)
            }), ids));
            let x = random(&[3, 6], &mut rng);
            let mut set = ParamSet::new();
            let ids = vec![set.add("gain", ParamKind::Gain, random(&[6], &mut rng)), set.add("shift", ParamKind::Shift, random(&[6], &mut rng))];
            v.push(("layer_norm", set, Box::new(move |g, p, id| {
                let xi = g.input(x.clone());
                let (a, b) = (g.param(p, id[0]), g.param(p, id[1]));
                let y = g.layer_norm(xi, a, b, 1e-5)?;
                contract(g, y, seed)
            }), ids));
            let x = random(&[2, 10], &mut rng);
            let mut set = ParamSet::new();
            let ids = vec![set.add("k", ParamKind::Weight, random(&[3, 6], &mut rng)), set.add("kb", ParamKind::Bias, random(&[3], &mut rng))];
            v.push(("conv1d", set, Box::new(move |g, p, id| {
                let xi = g.input(x.clone());
                let (w, b) = (g.param(p, id[0]), g.param(p, id[1]));
                let y = g.conv1d(xi, w, b, 2, 5)?;
                contract(g, y, seed)
            }), ids));
            let x = random(&[16, 8], &mut rng);
            let mut set = ParamSet::new();
            let ids: Vec<ParamId> = ["wq", "wk", "wv", "wo"].iter().map(|n| set.add(*n, ParamKind::Weight, random(&[8, 8], &mut rng))).collect();
            v.push(("attention", set, Box::new(move |g, p, id| {
                let xi = g.input(x.clone());
                let w: Vec<Var> = id.iter().map(|&i| g.param(p, i)).collect();
                let q = g.matmul(xi, w[0])?;
                let k = g.matmul(xi, w[1])?;
                let vv = g.matmul(xi, w[2])?;
                let s = g.batch_matmul(q, k, 2, true)?;
                let s = g.scale(s, 1.0 / 8f64.sqrt());
                let a = g.softmax_rows(s);
                let o = g.batch_matmul(a, vv, 2, false)?;
                let y = g.matmul(o, w[3])?;
                contract(g, y, seed)
            }), ids));
            v
        };
        for (name, set, f, ids) in &param_cases {
            let r = grad_check(set, GRAD_CHECK_STEP, |g, p| f(g, p, ids)).unwrap();
            note(name, r.max_rel_error);
        }
        let x = random(&[3, 8], &mut rng);
        let free: Vec<(&str, Box<dyn Fn(&mut Graph, Var) -> mcresanet::Result<Var>>)> = vec![
            ("gelu", Box::new(|g, x| Ok(g.gelu(x)))),
            ("relu", Box::new(|g, x| Ok(g.relu(x)))),
            ("softmax", Box::new(|g, x| Ok(g.softmax_rows(x)))),
            ("maxpool", Box::new(|g, x| g.maxpool1d(x, 2, 4))),
            ("block_transpose", Box::new(|g, x| {
                let r = g.reshape(x, &[6, 4])?;
                g.block_transpose(r, 2)
            })),
            ("mse", Box::new(|g, x| g.mse(x, Tensor::filled(&[3, 8], 0.25)))),
        ];
        for (name, f) in &free {
            let e = grad_check_input(&x, GRAD_CHECK_STEP, |g, xi| {
                let y = f(g, xi)?;
                contract(g, y, seed)
            })
            .unwrap();
            note(name, e);
        }
        let cfg = McresanetConfig::default();
        let head = McresanetHead::new(cfg, &mut seeds::rng(seed, seeds::stream::INIT), "h").unwrap();
        let r = grad_check_network(&head, seed).unwrap();
        (checked, skipped) = (checked + r.checked, skipped + r.skipped);
        note("mcresanet_head", r.max_rel_error);
        for kind in [ModelKind::Mlp, ModelKind::Cnn] {
            let r = match Model::new(kind, cfg, seed).unwrap() {
                Model::Mlp(m) => grad_check_network(&m, seed).unwrap(),
                Model::Cnn(c) => grad_check_network(&c, seed).unwrap(),
                Model::Mcresanet(_) => unreachable!(),
            };
            (checked, skipped) = (checked + r.checked, skipped + r.skipped);
            note(kind.as_str(), r.max_rel_error);
        }
    }
    let max = worst.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let list: Vec<String> = worst.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    (
        max <= GRAD_TOL,
        format!(
            "gradient fidelity, 5 seeds, max rel err {max:.2e} <= {GRAD_TOL:e} [{}]; model coordinates {checked} checked, {skipped} skipped at ReLU/max-pool kinks",
            list.join(", ")
        ),
    )
}

fn criterion_2() -> (bool, String) {
    let mut problems = Vec::new();
    for seed in 0..3 {
        match Model::new(ModelKind::Mcresanet, McresanetConfig::default(), seed).unwrap() {
            Model::Mcresanet(e) => {
                for h in e.heads() {
                    if let Err(err) = h.audit() {
                        problems.push(err.to_string());
                    }
                }
            }
            _ => unreachable!(),
        }
        for kind in [ModelKind::Mlp, ModelKind::Cnn] {
            let r = match Model::new(kind, McresanetConfig::default(), seed).unwrap() {
                Model::Mlp(m) => m.audit(),
                Model::Cnn(c) => c.audit(),
                Model::Mcresanet(_) => unreachable!(),
            };
            if let Err(err) = r {
                problems.push(err.to_string());
            }
        }
    }
    use mcresanet::models::{cnn, mcresanet as mc, mlp};
    let tables = mc::EXTRACT_WIDTHS[..3] == [32, 64, 128]
        && mc::COMPRESSION_WIDTHS == [4, 8, 16, 32, 64, 128]
        && mc::FEATURE_WIDTH == 64
        && mc::GRID == 8
        && cnn::CNN_HEAD_WIDTHS == [128, 64, 32, 10]
        && cnn::FLATTEN_WIDTH == 128
        && mlp::MLP_WIDTHS[0] == 10
        && mlp::MLP_WIDTHS[mlp::MLP_WIDTHS.len() - 1] == 10;
    (
        problems.is_empty() && tables,
        format!("architecture audit of 3 models x 3 seeds: {} shape failures, width tables match: {tables}", problems.len()),
    )
}

fn zscore_columns(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = t.clone();
    for j in 0..c {
        let col: Vec<f64> = (0..r).map(|i| t.get(i, j)).collect();
        let m = col.iter().sum::<f64>() / r as f64;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (r as f64 - 1.0)).sqrt();
        for i in 0..r {
            out.data_mut()[i * c + j] = (col[i] - m) / s;
        }
    }
    out
}

fn criterion_3() -> (bool, String) {
    let (raw, _) = synthesize(&GenConfig { n: 32, noise: 0.0, seed: 11, ..GenConfig::default() }).unwrap();
    let rows = raw.all_rows();
    let x = zscore_columns(&raw.features(&rows).unwrap());
    let y = zscore_columns(&raw.targets(&rows).unwrap()).column(0).unwrap();
    let mut head = McresanetHead::new(McresanetConfig::default(), &mut seeds::rng(3, seeds::stream::INIT), "h").unwrap();
    let cfg = TrainConfig {
        max_epochs: 2000,
        patience: 0,
        decay_factor: 1.0,
        batch_size: 32,
        l2: 0.0,
        validation_fraction: 0.0,
        early_stopping: false,
        ..TrainConfig::default()
    };
    let h = train_network(&mut head, &x, &y, None, &cfg, seeds::rng(3, seeds::stream::SHUFFLE), "overfit").unwrap();
    let pred = predict_network(&head, &x).unwrap();
    let mse = pred.data().iter().zip(y.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 32.0;
    // first epoch at which the recorded training loss dropped below the bar
    let hit = h.train_loss.iter().position(|&l| l < 1e-3).map_or("never".into(), |e| (e + 1).to_string());
    (mse < 1e-3, format!("overfit 32 noiseless rows, one head: final mse {mse:.2e} < 1e-3 (epoch loss first < 1e-3 at {hit} of {})", h.epochs()))
}

fn record(c: usize, value: f64) -> HarmonicRecord {
    let mut r = HarmonicRecord { timestamp: None, v: [1.0; 10], i: [1.0; 10] };
    if c < 10 {
        r.v[c] = value;
    } else {
        r.i[c - 10] = value;
    }
    r
}

fn criterion_4() -> (bool, String) {
    let mut checks: Vec<(&str, bool)> = Vec::new();
    for (n, want) in [(19usize, vec![19.0]), (99, vec![95.0, 96.0, 97.0, 98.0, 99.0])] {
        let values: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let (_, flags) = flag_column("i3", &values, 95.0);
        let dropped: Vec<f64> = values.iter().zip(&flags).filter(|(_, f)| **f).map(|(v, _)| *v).collect();
        checks.push((if n == 19 { "N=19 drops {19}" } else { "N=99 drops 5" }, dropped == want));
        let ds = Dataset::new((1..=n).map(|v| record(12, v as f64)).collect(), "hand");
        let (kept, rep) = remove_outliers(&ds, 95.0).unwrap();
        checks.push(("dataset-level removal agrees", kept.len() == n - want.len() && rep.dropped == want.len()));
    }

    let (raw, _) = synthesize(&GenConfig { n: 2000, seed: 4, ..GenConfig::default() }).unwrap();
    let sp = split(&raw, 0.85, 4, SplitMode::Shuffled).unwrap();
    let train_rows = sp.train_rows().unwrap().to_vec();
    let stats = fit_standardizer(&sp, &train_rows).unwrap();
    let z = standardize(&sp, &stats).unwrap();
    let (mut worst_mean, mut worst_std, mut worst_trip) = (0.0f64, 0.0f64, 0.0f64);
    for c in 0..20 {
        let col: Vec<f64> = train_rows.iter().map(|&r| z.records[r].value(c)).collect();
        let n = col.len() as f64;
        let m = col.iter().sum::<f64>() / n;
        let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        worst_mean = worst_mean.max(m.abs());
        worst_std = worst_std.max((s - 1.0).abs());
        let all: Vec<f64> = z.records.iter().map(|r| r.value(c)).collect();
        let back = destandardize(&all, &stats, &vec![c; all.len()]).unwrap();
        for (b, r) in back.iter().zip(&sp.records) {
            worst_trip = worst_trip.max((b - r.value(c)).abs() / r.value(c).abs().max(1.0));
        }
    }
    checks.push(("train mean <= 1e-10", worst_mean <= 1e-10));
    checks.push(("train std within 1e-10 of 1", worst_std <= 1e-10));
    checks.push(("round trip within 1e-12", worst_trip <= 1e-12));

    for (n, tr, te) in [(10374usize, 8818usize, 1556usize), (8165, 6940, 1225)] {
        let ds = Dataset::new((0..n).map(|v| record(0, v as f64)).collect(), "counts");
        let s = split(&ds, 0.85, 0, SplitMode::Shuffled).unwrap();
        let ok = train_count(n, 0.85) == tr && s.train_rows().unwrap().len() == tr && s.test_rows().unwrap().len() == te;
        checks.push((if n == 10374 { "split 8818/1556" } else { "split 6940/1225" }, ok));
    }
    let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    (
        failed.is_empty(),
        format!(
            "preprocessing oracles: {}/{} pass (mean {worst_mean:.1e}, std dev {worst_std:.1e}, round trip {worst_trip:.1e}){}",
            checks.len() - failed.len(),
            checks.len(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn criterion_5() -> (bool, String) {
    let w = [0.5, -1.25, 2.0, 0.0, 0.75, -0.3, 1.1, 0.0, -2.2, 0.9];
    let f = move |x: &Tensor| {
        let y = (0..x.rows()).map(|r| x.row(r).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.3);
        Tensor::matrix(x.rows(), 1, y.collect())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bg = Background::new(random(&[100, 10], &mut rng)).unwrap();
    let (mut closed, mut eff, mut null) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..5 {
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let phi = exact_shapley(&f, &x, &bg).unwrap()[0];
        let m = bg.mean();
        for j in 0..10 {
            closed = closed.max((phi[j] - w[j] * (x[j] - m[j])).abs());
        }
        let fx = coalition_value(&f, &x, Coalition::FULL, &bg).unwrap()[0];
        let v0 = coalition_value(&f, &x, Coalition::EMPTY, &bg).unwrap()[0];
        eff = eff.max((phi.iter().sum::<f64>() - (fx - v0)).abs());
        null = null.max(phi[3].abs()).max(phi[7].abs());
    }
    (
        closed <= SHAP_TOL && eff <= SHAP_TOL && null <= NULL_TOL,
        format!("exact Shapley on a linear head, B = 100: closed form {closed:.1e} <= 1e-9, efficiency {eff:.1e} <= 1e-9, null player {null:.1e} <= 1e-12"),
    )
}

fn criterion_7() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..50);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        if rmse(&a, &p).unwrap() < mae(&a, &p).unwrap() {
            violations += 1;
        }
    }
    let actual: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..5.0)).collect();
    let mean = actual.iter().sum::<f64>() / 50.0;
    let self_r2 = r_squared(&actual, &actual).unwrap();
    let mean_r2 = r_squared(&actual, &vec![mean; 50]).unwrap();
    let hand = r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
    let pass = violations == 0 && self_r2 == 1.0 && mean_r2.abs() <= 1e-12 && (hand - 0.5).abs() <= 1e-12;
    (pass, format!("metric identities: rmse < mae in {violations}/10000, R2(a,a) = {self_r2}, R2(a,mean) = {mean_r2:.1e}, hand case {hand}"))
}

/// Every file of `a` equals its namesake in `b`; histories ignore wall-clock time.
fn same_outputs(a: &Path, b: &Path) -> Vec<String> {
    let mut diffs = Vec::new();
    for entry in fs::read_dir(a).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name.starts_with("config_") {
            continue; // `out` differs by construction
        }
        let (x, y) = (fs::read(&path).unwrap(), fs::read(b.join(&name)).unwrap_or_default());
        let same = if name.starts_with("history_") {
            let strip = |bytes: &[u8]| {
                let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap_or_default();
                if let Some(list) = v.as_array_mut() {
                    list.iter_mut().for_each(|h| h["duration_secs"] = 0.into());
                }
                v
            };
            strip(&x) == strip(&y)
        } else {
            x == y
        };
        if !same {
            diffs.push(name);
        }
    }
    diffs
}

fn criterion_9(tmp: &Path) -> (bool, String) {
    let run = |dir: &str| {
        let out = tmp.join(dir);
        let base = RunConfig { seed: 9, out: out.clone(), ..RunConfig::default() };
        let mut synth = base.clone();
        synth.synth.n = 600;
        synth.synth.seed = 9;
        execute("synth", &synth).unwrap();
        let data = RunConfig { data: Some(out.join("dataset.csv")), ..base };
        let mut t = data.clone();
        t.train.max_epochs = 2;
        t.train.patience = 1;
        for kind in ModelKind::ALL {
            execute("train", &RunConfig { model: kind, ..t.clone() }).unwrap();
        }
        let ck = |k: &str| Some(out.join(format!("checkpoint_{k}.json")));
        execute("evaluate", &RunConfig { checkpoint: ck("mcresanet"), ..data.clone() }).unwrap();
        let baselines = vec![out.join("checkpoint_mlp.json"), out.join("checkpoint_cnn.json")];
        execute("compare", &RunConfig { checkpoint: ck("mcresanet"), baselines, ..data.clone() }).unwrap();
        let mut e = RunConfig { checkpoint: ck("mcresanet"), ..data.clone() };
        e.explain.background = 10;
        e.explain.samples = 3;
        e.explain.estimator = Estimator::MonteCarlo { permutations: 20 };
        execute("explain", &e).unwrap();
        let mut u = RunConfig { model: ModelKind::Mlp, runs: 2, ..t.clone() };
        u.train.max_epochs = 1;
        execute("uncertainty", &u).unwrap();
        out
    };
    let (a, b) = (run("det_a"), run("det_b"));
    let files = fs::read_dir(&a).unwrap().count();
    let diffs = same_outputs(&a, &b);
    (diffs.is_empty(), format!("determinism: all six commands twice, {files} files, {} differ {:?}", diffs.len(), diffs))
}

struct Benchmark {
    raw: Dataset,
    truth: GroundTruth,
    prepared: Prepared,
    reports: Vec<UncertaintyReport>,
    /// Independent train + evaluate of every (model, seed), in report order.
    rerun: Vec<Vec<RunMetrics>>,
    /// The seed-0 MCReSAnet from the independent route, used for attribution.
    model: Model,
    prepare_secs: f64,
    /// Train + evaluate time of each MCReSAnet rerun.
    mc_secs: Vec<f64>,
    mlp_secs: Vec<f64>,
}

fn pooled_mae(r: &RunMetrics) -> f64 {
    // every output has the same number of test rows, so pooling equals averaging
    r.mae.iter().sum::<f64>() / r.mae.len() as f64
}

fn benchmark() -> Benchmark {
    let t = Instant::now();
    let (raw, truth) = synthesize(&GenConfig { n: 10_000, seed: 2024, ..GenConfig::default() }).unwrap();
    let prepared = preprocess(&raw, &PreprocessConfig::default(), 2024).unwrap();
    let prepare_secs = t.elapsed().as_secs_f64();
    let (ds, stats) = (&prepared.dataset, &prepared.stats);
    let cfg = TrainConfig::default();
    let seeds: Vec<u64> = (0..REPS).collect();
    let mut reports = Vec::new();
    let mut rerun = Vec::new();
    let mut model = None;
    let (mut mc_secs, mut mlp_secs) = (Vec::new(), Vec::new());
    for kind in [ModelKind::Mcresanet, ModelKind::Mlp] {
        let t = Instant::now();
        reports.push(uncertainty_with_seeds(kind, McresanetConfig::default(), ds, stats, &cfg, &seeds).unwrap());
        println!("    {kind}: five-run report in {:.0} s", t.elapsed().as_secs_f64());
        let mut runs = Vec::new();
        for &s in &seeds {
            let t = Instant::now();
            let mut m = Model::new(kind, McresanetConfig::default(), s).unwrap();
            train(&mut m, ds, &TrainConfig { seed: s, ..cfg }).unwrap();
            let rep = evaluate(&m, kind.as_str(), ds, stats, RSquaredMode::Standard).unwrap();
            let secs = t.elapsed().as_secs_f64();
            let rows = &rep.rows[..10];
            runs.push(RunMetrics { seed: s, mae: rows.iter().map(|r| r.mae).collect(), rmse: rows.iter().map(|r| r.rmse).collect() });
            println!("    {kind} seed {s}: pooled mae {:.4e}, train + evaluate {secs:.0} s", rep.total().mae);
            match kind {
                ModelKind::Mcresanet => mc_secs.push(secs),
                _ => mlp_secs.push(secs),
            }
            if kind == ModelKind::Mcresanet && s == 0 {
                model = Some(m);
            }
        }
        rerun.push(runs);
    }
    Benchmark { raw, truth, prepared, reports, rerun, model: model.unwrap(), prepare_secs, mc_secs, mlp_secs }
}

fn criterion_8(b: &Benchmark) -> (bool, String) {
    let pipeline = b.prepare_secs + b.mc_secs.iter().copied().fold(0.0, f64::max);
    let (mc, mlp) = (&b.reports[0].runs, &b.reports[1].runs);
    let wins = mc.iter().zip(mlp).filter(|(a, m)| pooled_mae(a) <= pooled_mae(m)).count();
    let pairs: Vec<String> = mc.iter().zip(mlp).map(|(a, m)| format!("{:.4}/{:.4}", pooled_mae(a), pooled_mae(m))).collect();

    // attribution of the seed-0 ensemble against the generator's own sensitivities
    let t = Instant::now();
    let ds = &b.prepared.dataset;
    let bg = Background::sample(ds, 50, 8).unwrap();
    let test = ds.test_rows().unwrap();
    let samples = ds.features(&test[..50.min(test.len())]).unwrap();
    let matrix = importance_matrix(&b.model, &samples, &bg, Estimator::Exact, 8).unwrap();
    let voltages: Vec<[f64; 10]> = b.raw.records.iter().take(2000).map(|r| r.v).collect();
    let drivers = b.truth.dominant_drivers(&voltages);
    let hits = (0..10).filter(|&o| drivers[o] == Some(matrix.ranking(o)[0])).count();
    let names = mcresanet::models::FEATURE_NAMES;
    let misses: Vec<String> = (0..10)
        .filter(|&o| drivers[o] != Some(matrix.ranking(o)[0]))
        .map(|o| format!("{} top {} vs driver {}", matrix.outputs[o], names[matrix.ranking(o)[0]], drivers[o].map_or("none", |d| names[d])))
        .collect();
    let explain_secs = t.elapsed().as_secs_f64();
    (
        pipeline < 900.0 && wins >= 3 && hits >= 8,
        format!(
            "synthetic benchmark: pipeline {pipeline:.0} s < 900 s; MCReSAnet pooled MAE <= MLP in {wins}/5 runs (>= 3) [{}]; \
             top-ranked voltage = generator driver in {hits}/10 rows (>= 8){} (attribution {explain_secs:.0} s, B = 50, 50 samples)",
            pairs.join(", "),
            if misses.is_empty() { String::new() } else { format!(" misses: {}", misses.join("; ")) }
        ),
    )
}

fn criterion_6(b: &Benchmark) -> (bool, String) {
    let Model::Mcresanet(ens) = &b.model else { unreachable!() };
    let head = &ens.heads()[0];
    let f = |x: &Tensor| predict_network(head, x);
    let ds = &b.prepared.dataset;
    let bg = Background::sample(ds, 100, 6).unwrap();
    let x = ds.features(&ds.test_rows().unwrap()[..1]).unwrap();
    let table = CoalitionTable::compute(&f, x.row(0), &bg).unwrap();
    let exact = exact_from_table(&table)[0];
    let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let err = |phi: &[f64; 10]| phi.iter().zip(&exact).map(|(a, e)| (a - e).abs()).fold(0.0, f64::max) / scale;
    let mut medians = Vec::new();
    for m in [100usize, 1000, 10_000] {
        let mut e: Vec<f64> = (0..20).map(|s| err(&mc_from_table(&table, m, s).unwrap()[0])).collect();
        e.sort_by(f64::total_cmp);
        medians.push((e[9] + e[10]) / 2.0);
    }
    // the table shortcut is the same estimator as the direct one
    let direct = mc_shapley(&f, x.row(0), &bg, 10_000, 0).unwrap()[0];
    let shortcut = mc_from_table(&table, 10_000, 0).unwrap()[0];
    let agree = direct.iter().zip(&shortcut).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let monotone = medians[0] >= medians[1] && medians[1] >= medians[2];
    (
        medians[2] <= MC_TOL && monotone && agree <= 1e-12,
        format!(
            "Monte-Carlo vs exact on a trained head, B = 100, 20 seeds: median rel err {:.2e} / {:.2e} / {:.2e} at M = 100 / 1000 / 10000 (<= {MC_TOL} at 10000, non-increasing: {monotone}); direct vs tabled estimator {agree:.1e}",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn criterion_10(b: &Benchmark) -> (bool, String) {
    let mut bad = Vec::new();
    for (rep, rerun) in b.reports.iter().zip(&b.rerun) {
        let shape = rep.outputs.len() == 10
            && rep.runs.len() == REPS as usize
            && rep.outputs.iter().all(|o| [o.mae_mean, o.mae_std, o.rmse_mean, o.rmse_std].iter().all(|v| v.is_finite() && *v >= 0.0));
        if !shape {
            bad.push(format!("{} report shape", rep.model));
        }
        let seeds: Vec<u64> = rep.runs.iter().map(|r| r.seed).collect();
        if seeds != (0..REPS).collect::<Vec<_>>() {
            bad.push(format!("{} seeds {seeds:?}", rep.model));
        }
        for (a, r) in rep.runs.iter().zip(rerun) {
            if a != r {
                bad.push(format!("{} seed {}", rep.model, a.seed));
            }
        }
        // mean and sample std of one column, recomputed by hand
        let v: Vec<f64> = rep.runs.iter().map(|r| r.mae[0]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt();
        if (m - rep.outputs[0].mae_mean).abs() > 1e-15 * m.abs().max(1.0) || (sd - rep.outputs[0].mae_std).abs() > 1e-12 {
            bad.push(format!("{} aggregate", rep.model));
        }
    }
    let budget = 5.0 * b.mc_secs.iter().copied().fold(0.0, f64::max);
    let spent: f64 = b.mc_secs.iter().sum();
    (
        bad.is_empty() && spent <= budget,
        format!(
            "five-run uncertainty for MCReSAnet and MLP: 10 outputs x MAE/RMSE x mean/std, every per-run value equals an independent train + evaluate ({} mismatches{}); MCReSAnet runs {spent:.0} s <= 5 x slowest single run {budget:.0} s; MLP runs {:.0} s",
            bad.len(),
            if bad.is_empty() { String::new() } else { format!(": {}", bad.join(", ")) },
            b.mlp_secs.iter().sum::<f64>()
        ),
    )
}

fn main() -> ExitCode {
    // behave like libtest under `cargo test -- --list`
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let tmp = tempfile::tempdir().unwrap();
    let mut verdicts = vec![
        timed("1", criterion_1),
        timed("2", criterion_2),
        timed("3", criterion_3),
        timed("4", criterion_4),
        timed("5", criterion_5),
        timed("7", criterion_7),
        timed("9", || criterion_9(tmp.path())),
    ];
    let t = Instant::now();
    let bench = benchmark();
    println!("    benchmark training finished in {:.0} s", t.elapsed().as_secs_f64());
    verdicts.push(timed("8", || criterion_8(&bench)));
    verdicts.push(timed("10", || criterion_10(&bench)));
    verdicts.push(timed("6", || criterion_6(&bench)));
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} of {} criteria pass", verdicts.len() - failed, verdicts.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
