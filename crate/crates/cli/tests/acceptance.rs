//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Run with `cargo test --test acceptance` (release profile recommended for timings).

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use adview_cli::settings::{RunConfig, Settings};
use adview_cli::{cmd_compare, with_threads};
use adview_core::analysis::rmse;
use adview_core::features::FeatureMatrix;
use adview_core::models::{
    fit_forest, fit_linear, fit_svr, fit_tree, load_model, save_model, AnnConfig, AnnModel,
    ForestConfig, ModelBundle, ModelConfig, ModelKind, Regressor, SvrConfig, TreeConfig,
};
use adview_core::preprocess::{fit_minmax, train_test_split};
use adview_core::rng::seeded_rng;
use adview_core::testkit::{
    brute_force_best_split, finite_difference_gradients, generate_synthetic, max_relative_error,
    split_score, BestSplit, SyntheticKind, SyntheticSpec,
};
use ndarray::Array2;
use rand::RngExt;
use rand_distr::{Distribution, Normal};

type Rng = adview_core::rng::SeededRng;
type Check = Box<dyn Fn() -> Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() < limit_secs
}

fn uniform_matrix(rng: &mut Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

fn features(values: Array2<f64>) -> FeatureMatrix {
    let names = (0..values.ncols()).map(|j| format!("f{j}")).collect();
    FeatureMatrix {
        values,
        feature_names: names,
    }
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let mut rng = seeded_rng(101);
    let shapes: [&[usize]; 3] = [&[], &[4], &[8, 4]];
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut configs, mut worst, mut redraws) = (0, 0.0f64, 0);
    while configs < 30 {
        let hidden = shapes[configs % shapes.len()].to_vec();
        let d = rng.random_range(1..=4);
        let x = uniform_matrix(&mut rng, 3, d, -1.0, 1.0);
        let y: Vec<f64> = (0..3).map(|_| normal.sample(&mut rng)).collect();
        let config = AnnConfig {
            hidden_sizes: hidden,
            seed: rng.random(),
            ..AnnConfig::default()
        };
        let model = AnnModel::initialize(d, &config).unwrap();
        // A hidden unit sitting on the ReLU kink has no derivative to check.
        if model.min_hidden_preactivation(x.view()) <= 1e-3 {
            redraws += 1;
            continue;
        }
        let (_, grads) = model.loss_and_gradients(x.view(), &y);
        let numeric = finite_difference_gradients(&model, x.view(), &y, 1e-5);
        worst = worst.max(max_relative_error(&grads.flatten(), &numeric, 1e-6));
        configs += 1;
    }
    let elapsed = started.elapsed();
    outcome(
        worst <= 1e-4 && within(elapsed, 10.0),
        format!(
            "{configs} configs ({redraws} kink redraws), max relative error {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn cart_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = seeded_rng(202);
    let config = TreeConfig {
        max_depth: 1,
        min_samples_leaf: 1,
    };
    let (mut failures, mut same_choice) = (0, 0);
    let datasets = 200;
    for k in 0..datasets {
        let n = rng.random_range(2..=12);
        let d = rng.random_range(1..=2);
        // Every other dataset draws from a coarse grid so ties are common.
        let x = if k % 2 == 0 {
            Array2::from_shape_fn((n, d), |_| rng.random_range(0..4) as f64)
        } else {
            uniform_matrix(&mut rng, n, d, -10.0, 10.0)
        };
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let tree = fit_tree(x.view(), &y, &config).unwrap();
        let oracle = brute_force_best_split(x.view(), &y).unwrap();
        let ok = match (tree.root_split(), oracle) {
            (Some((f, t)), BestSplit::Split { feature, threshold, weighted_mse }) => {
                if (f, t) == (feature, threshold) {
                    same_choice += 1;
                }
                split_score(x.view(), &y, f, t) == weighted_mse
            }
            (None, BestSplit::NoSplit) => {
                same_choice += 1;
                true
            }
            (None, BestSplit::Split { weighted_mse, .. }) => {
                // A root leaf is right only when no split beats the parent.
                let parent = adview_core::testkit::two_pass_sse(&y) / n as f64;
                weighted_mse >= parent
            }
            (Some(_), BestSplit::NoSplit) => false,
        };
        if !ok {
            failures += 1;
        }
    }
    let elapsed = started.elapsed();
    outcome(
        failures == 0 && within(elapsed, 5.0),
        format!(
            "{datasets} datasets, {failures} mismatches, {same_choice} identical choices, {:.2} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn ols_recovery() -> Outcome {
    let n = 21;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let x = Array2::from_shape_vec((n, 1), xs.clone()).unwrap();
    let y: Vec<f64> = xs.iter().map(|v| 2.0 * v + 1.0).collect();
    let ols = fit_linear(x.view(), &y).unwrap();
    let coef_err = (ols.weights[0] - 2.0).abs().max((ols.intercept - 1.0).abs());
    let svr = fit_svr(
        x.view(),
        &y,
        &SvrConfig {
            epsilon: 0.0,
            c: 100.0,
            learning_rate: 1e-5,
            epochs: 5000,
            seed: 7,
        },
    )
    .unwrap();
    let ols_pred = ols.predict(x.view());
    let mean = ols_pred.iter().sum::<f64>() / n as f64;
    let spread = (ols_pred.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let relative = rmse(&svr.predict(x.view()), &ols_pred).unwrap() / spread;
    outcome(
        coef_err <= 1e-8 && relative <= 0.05,
        format!("OLS coefficient error {coef_err:.2e}; SVR relative RMSE {:.3}%", relative * 100.0),
    )
}

fn forest_degeneracy() -> Outcome {
    let mut rng = seeded_rng(404);
    let mut mismatched = 0;
    let datasets = 50;
    for _ in 0..datasets {
        let n = rng.random_range(10..=200);
        let d = rng.random_range(1..=6);
        let x = uniform_matrix(&mut rng, n, d, 0.0, 1.0);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..500.0)).collect();
        let config = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            m_try: Some(d),
            seed: rng.random(),
            ..ForestConfig::default()
        };
        let tree = fit_tree(x.view(), &y, &config.tree_config()).unwrap();
        let forest = fit_forest(x.view(), &y, &config).unwrap();
        let probe = uniform_matrix(&mut rng, 64, d, -0.2, 1.2);
        let same = |a: Vec<f64>, b: Vec<f64>| a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same(tree.predict(x.view()), forest.predict(x.view()))
            || !same(tree.predict(probe.view()), forest.predict(probe.view()))
        {
            mismatched += 1;
        }
    }
    outcome(
        mismatched == 0,
        format!("{datasets} datasets, {mismatched} with differing bits"),
    )
}

fn scaler_round_trip() -> Outcome {
    let mut rng = seeded_rng(505);
    let (mut worst, mut out_of_range, mut nonzero_constant) = (0.0f64, 0, 0);
    let matrices = 10;
    for m in 0..matrices {
        let mut x = uniform_matrix(&mut rng, 1000, 10, -100.0, 100.0);
        let constant = m % 10;
        x.column_mut(constant).fill(rng.random_range(-100.0..100.0));
        let fm = features(x);
        let scaler = fit_minmax(&fm).unwrap();
        let scaled = scaler.transform(&fm).unwrap();
        out_of_range += scaled.values.iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
        nonzero_constant += scaled.values.column(constant).iter().filter(|&&v| v != 0.0).count();
        let back = scaler.inverse_transform(&scaled).unwrap();
        worst = back
            .values
            .iter()
            .zip(fm.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(worst, f64::max);
    }
    outcome(
        worst <= 1e-12 && out_of_range == 0 && nonzero_constant == 0,
        format!(
            "{matrices} matrices of 1000x10, max error {worst:.2e}, {out_of_range} entries outside [0,1], {nonzero_constant} nonzero constant entries"
        ),
    )
}

fn split_contract() -> Outcome {
    let mut rng = seeded_rng(606);
    let mut failures = 0;
    let pairs = 100;
    for _ in 0..pairs {
        let n = rng.random_range(2..=5000);
        let seed: u64 = rng.random();
        let s = train_test_split(n, 0.8, seed).unwrap();
        let mut all: Vec<usize> = s.train_indices.iter().chain(&s.test_indices).copied().collect();
        all.sort_unstable();
        let ok = s.train_indices.len() == (0.8 * n as f64).floor() as usize
            && all == (0..n).collect::<Vec<_>>()
            && train_test_split(n, 0.8, seed).unwrap() == s;
        if !ok {
            failures += 1;
        }
    }
    outcome(failures == 0, format!("{pairs} (n, seed) pairs, {failures} violations"))
}

fn write_synthetic(dir: &Path, kind: SyntheticKind, name: &str) -> std::path::PathBuf {
    let table = generate_synthetic(&SyntheticSpec::new(kind, 2000, 42)).unwrap();
    let path = dir.join(name);
    fs::write(&path, table.to_csv()).unwrap();
    path
}

fn run_config(data: &Path, out: &Path, threads: Option<usize>) -> RunConfig {
    RunConfig::resolve(Settings {
        data: Some(data.to_path_buf()),
        out: Some(out.to_path_buf()),
        seed: Some(42),
        threads,
        ..Settings::default()
    })
    .unwrap()
}

fn compare_rmse(data: &Path, out: &Path) -> Result<(f64, f64), String> {
    let config = run_config(data, out, None);
    let result = cmd_compare(&config).map_err(|e| e.to_string())?;
    let report = &result.comparison.report;
    let get = |kind| {
        report
            .row(kind)
            .and_then(|r| r.rmse())
            .ok_or_else(|| format!("{} produced no RMSE", kind.display_name()))
    };
    Ok((get(ModelKind::Tree)?, get(ModelKind::Linear)?))
}

fn qualitative_ranking(dir: &Path) -> Outcome {
    let started = Instant::now();
    let tree_data = write_synthetic(dir, SyntheticKind::TreeStructured, "tree_structured.csv");
    let linear_data = write_synthetic(dir, SyntheticKind::Linear, "linear.csv");
    let runs = compare_rmse(&tree_data, &dir.join("out_tree"))
        .and_then(|t| compare_rmse(&linear_data, &dir.join("out_linear")).map(|l| (t, l)));
    let elapsed = started.elapsed();
    match runs {
        Ok(((dt_tree, lr_tree), (dt_lin, lr_lin))) => outcome(
            dt_tree < lr_tree && lr_lin <= dt_lin && within(elapsed, 60.0),
            format!(
                "tree data DT {dt_tree:.3} vs LR {lr_tree:.3}; linear data LR {lr_lin:.3} vs DT {dt_lin:.3}; {:.2} s",
                elapsed.as_secs_f64()
            ),
        ),
        Err(e) => outcome(false, e),
    }
}

fn persistence(dir: &Path) -> Outcome {
    let mut rng = seeded_rng(808);
    let n = 200;
    let x = uniform_matrix(&mut rng, n, 3, 0.0, 1.0);
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| 50.0 * r[0] - 20.0 * r[1] + if r[2] > 0.5 { 30.0 } else { 0.0 })
        .collect();
    let fm = features(x.clone());
    let scaler = fit_minmax(&fm).unwrap();
    let probe = uniform_matrix(&mut rng, 32, 3, -0.25, 1.25);
    let mut failed = Vec::new();
    for kind in ModelKind::ALL {
        let config = ModelConfig::default_for(kind).with_seed(9);
        let model = Regressor::fit(&config, x.view(), &y).unwrap();
        let expected = model.predict(probe.view()).unwrap();
        let bundle = ModelBundle {
            model,
            scaler: scaler.clone(),
            label_encoders: Vec::new(),
            feature_names: fm.feature_names.clone(),
            target_name: "adview".into(),
            schema: adview_core::dataset::Schema::builtin(),
        };
        let path = dir.join(format!("{}.json", kind.tag()));
        let loaded = save_model(&bundle, &path).and_then(|()| load_model(&path));
        let identical = loaded.ok().and_then(|b| b.model.predict(probe.view()).ok()).is_some_and(|got| {
            got.iter().zip(&expected).all(|(a, b)| a.to_bits() == b.to_bits())
        });
        if !identical {
            failed.push(kind.tag());
        }
    }
    let detail = if failed.is_empty() {
        "all five kinds bit-identical on a 32x3 probe".to_string()
    } else {
        format!("differing kinds: {}", failed.join(", "))
    };
    outcome(failed.is_empty(), detail)
}

fn snapshot(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = ["report.txt", "report.tsv"]
        .iter()
        .map(|n| (n.to_string(), fs::read(out.join(n)).unwrap_or_default()))
        .collect();
    let mut bundles: Vec<_> = fs::read_dir(out.join("models"))
        .map(|it| it.filter_map(Result::ok).map(|e| e.path()).collect())
        .unwrap_or_else(|_| Vec::new());
    bundles.sort();
    for path in bundles {
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.push((name, fs::read(&path).unwrap()));
    }
    files
}

fn determinism(dir: &Path) -> Outcome {
    let data = write_synthetic(dir, SyntheticKind::NoisyMixed, "noisy.csv");
    let mut snapshots = Vec::new();
    for (run, threads) in [Some(1), Some(4), Some(4)].into_iter().enumerate() {
        let out = dir.join(format!("run{run}"));
        let config = run_config(&data, &out, threads);
        if let Err(e) = with_threads(config.threads, || cmd_compare(&config)) {
            return outcome(false, format!("run {run} failed: {e}"));
        }
        snapshots.push(snapshot(&out));
    }
    let files = snapshots[0].len();
    let identical = snapshots.windows(2).all(|w| w[0] == w[1]);
    outcome(
        identical && files == 7,
        format!("3 runs (1, 4, 4 threads), {files} files each, identical: {identical}"),
    )
}

fn rmse_oracle() -> Outcome {
    let anchor = rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
    let anchor_err = (anchor - 12.5f64.sqrt()).abs();
    let mut rng = seeded_rng(1010);
    let (mut asymmetric, mut shift_err) = (0, 0.0f64);
    for _ in 0..100 {
        let n = rng.random_range(1..=50);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let c = rng.random_range(-100.0..100.0);
        let base = rmse(&p, &a).unwrap();
        if base != rmse(&a, &p).unwrap() {
            asymmetric += 1;
        }
        let ps: Vec<f64> = p.iter().map(|v| v + c).collect();
        let as_: Vec<f64> = a.iter().map(|v| v + c).collect();
        shift_err = shift_err.max((rmse(&ps, &as_).unwrap() - base).abs());
    }
    outcome(
        anchor_err <= 1e-12 && asymmetric == 0 && shift_err <= 1e-12,
        format!(
            "anchor error {anchor_err:.1e}; 100 pairs: {asymmetric} asymmetric, max shift error {shift_err:.1e}"
        ),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().expect("temporary directory");
    let sub = |name: &str| {
        let p = dir.path().join(name);
        fs::create_dir_all(&p).unwrap();
        p
    };
    let criteria: Vec<(&str, Check)> = vec![
        ("gradient check", Box::new(gradient_check)),
        ("CART oracle", Box::new(cart_oracle)),
        ("OLS recovery", Box::new(ols_recovery)),
        ("forest degeneracy", Box::new(forest_degeneracy)),
        ("scaler round trip", Box::new(scaler_round_trip)),
        ("split contract", Box::new(split_contract)),
        ("qualitative ranking", Box::new({
            let d = sub("ranking");
            move || qualitative_ranking(&d)
        })),
        ("persistence", Box::new({
            let d = sub("persistence");
            move || persistence(&d)
        })),
        ("determinism", Box::new({
            let d = sub("determinism");
            move || determinism(&d)
        })),
        ("RMSE oracle", Box::new(rmse_oracle)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        if !result.pass {
            failed += 1;
        }
        let status = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {status} {name}: {}", i + 1, result.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
