//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any of them fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{finite_difference_gradient, naive_centers, naive_center_labels, naive_loss, naive_pdf_scores, Instance, Mat};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbfdh::classify::{center_classify, center_distances, pdf_scores, PdfConfig};
use rbfdh::data::{load_csv, split, ClassIndex, LabelColumn, Scaling};
use rbfdh::kernel::KernelMap;
use rbfdh::model::{loss, loss_and_gradient, DHParams, Gradients};
use rbfdh::optimizer::{train, TrainConfig};
use rbfdh::pipeline::{PipelineConfig, TrainedModel};

const PROPERTY_CASES: u32 = 200;
const REPEATS: usize = 10;
const BASE_SEED: u64 = 42;

struct Outcome {
    pass: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: true,
        detail: detail.into(),
    }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome {
        pass: false,
        detail: detail.into(),
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    Outcome { pass: ok, detail }
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn to_lib(inst: &Instance) -> (Array2<f64>, ClassIndex, DHParams) {
    let n = inst.w.len();
    let x = Array2::from_shape_vec((inst.x.len(), n), inst.x.iter().flatten().copied().collect()).unwrap();
    let classes = ClassIndex::new(inst.labels.clone(), inst.m).unwrap();
    let params = DHParams {
        w: Array2::from_shape_vec((n, n), inst.w.iter().flatten().copied().collect()).unwrap(),
        b: Array1::from(inst.b.clone()),
        r: Array1::from(inst.r.clone()),
    };
    (x, classes, params)
}

fn to_array(m: &Mat) -> Array2<f64> {
    let cols = m.first().map_or(0, Vec::len);
    Array2::from_shape_vec((m.len(), cols), m.iter().flatten().copied().collect()).unwrap()
}

fn flat(g: &Gradients) -> Vec<f64> {
    g.w.iter().chain(g.b.iter()).chain(g.r.iter()).copied().collect()
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let (mut checked, mut skipped, mut worst) = (0, 0, 0.0f64);
    let mut seed = 0;
    while checked < 20 {
        let inst = Instance::random(5000 + seed, 12, 3, 2);
        seed += 1;
        let naive = naive_loss(&inst);
        if naive.kink_args.iter().any(|a| a.abs() < 1e-7) {
            skipped += 1;
            continue;
        }
        let (x, c, p) = to_lib(&inst);
        let (_, g) = loss_and_gradient(x.view(), &c, &p, inst.penalty);
        let fd = finite_difference_gradient(&inst, 1e-5);
        for (a, f) in flat(&g).iter().zip(&fd) {
            worst = worst.max((a - f).abs() / a.abs().max(f.abs()).max(1.0));
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    check(
        worst < 1e-4 && elapsed < Duration::from_secs(10),
        format!("20 instances ({skipped} skipped near kinks), max relative error {worst:.2e}, {elapsed:.2?}"),
    )
}

fn toy_constraints() -> Outcome {
    let start = Instant::now();
    let x = array![[-2.0], [-1.0], [1.0], [2.0]];
    let classes = ClassIndex::new(vec![0, 0, 1, 1], 2).unwrap();
    let cfg = TrainConfig {
        penalty: 0.0,
        iterations: 500,
        ..TrainConfig::default()
    };
    let (params, trace) = train(x.view(), &classes, &cfg).unwrap();
    let elapsed = start.elapsed();
    let d = trace.final_loss.d_total;
    check(
        d < 1e-3 && params.r.iter().all(|&r| r > 0.0) && elapsed < Duration::from_secs(5),
        format!("d_total {d:.3e}, radii {:?}, {elapsed:.2?}", params.r.to_vec()),
    )
}

/// Pinned settings from the grid search over sigma, P and iterations.
struct Table2Cell {
    name: &'static str,
    file: &'static str,
    rtt: f64,
    reference: f64,
    sigma: f64,
    penalty: f64,
    iterations: usize,
    learning_rate: f64,
    bandwidth: f64,
}

const TABLE2: [Table2Cell; 4] = [
    Table2Cell {
        name: "Iris",
        file: "iris.csv",
        rtt: 0.2,
        reference: 98.3,
        sigma: 2.0,
        penalty: -0.1,
        iterations: 500,
        learning_rate: 0.01,
        bandwidth: 0.1,
    },
    Table2Cell {
        name: "Wine",
        file: "wine.csv",
        rtt: 0.1,
        reference: 99.4,
        sigma: 2.0,
        penalty: -0.1,
        iterations: 1000,
        learning_rate: 0.01,
        bandwidth: 0.1,
    },
    // Not tuned: the seeds data is unavailable here, so this reuses the Iris settings.
    Table2Cell {
        name: "Seed",
        file: "seeds.csv",
        rtt: 0.2,
        reference: 97.7,
        sigma: 2.0,
        penalty: -0.1,
        iterations: 500,
        learning_rate: 0.01,
        bandwidth: 0.1,
    },
    Table2Cell {
        name: "Sonar",
        file: "sonar.csv",
        rtt: 0.1,
        reference: 91.4,
        sigma: 1.0,
        penalty: 0.01,
        iterations: 500,
        learning_rate: 0.01,
        bandwidth: 0.3,
    },
];

fn cell_config(cell: &Table2Cell, use_kernel: bool) -> PipelineConfig {
    assert!([0.5, 1.0, 2.0].contains(&cell.sigma));
    assert!([0.0, 0.01, -0.01, 0.1, -0.1].contains(&cell.penalty));
    assert!(cell.iterations <= 2000);
    PipelineConfig {
        train: TrainConfig {
            iterations: cell.iterations,
            learning_rate: cell.learning_rate,
            penalty: cell.penalty,
            sigma: cell.sigma,
            ..TrainConfig::default()
        },
        use_kernel,
        pdf: PdfConfig {
            bandwidth: cell.bandwidth,
        },
        radius_adjusted: false,
        scaling: Scaling::MinMax,
    }
}

struct CellRun {
    mean_pdf: f64,
    mean_center: f64,
    mean_combined: f64,
    worst_rpen: f64,
}

fn run_cell(cell: &Table2Cell, use_kernel: bool) -> Result<CellRun, String> {
    let path = data_dir().join(cell.file);
    if !path.exists() {
        return Err(format!("{} not found; the dataset is not bundled", path.display()));
    }
    let ds = load_csv(&path, &LabelColumn::Last).map_err(|e| e.to_string())?;
    let config = cell_config(cell, use_kernel);
    let (mut pdf, mut center, mut combined, mut worst_rpen) = (0.0, 0.0, 0.0, 0.0f64);
    for r in 0..REPEATS {
        let parts = split(&ds, cell.rtt, BASE_SEED + r as u64).map_err(|e| e.to_string())?;
        let (model, trace) = TrainedModel::fit(&parts.train, &config).map_err(|e| e.to_string())?;
        let acc = model.evaluate(&parts.test).map_err(|e| e.to_string())?;
        pdf += acc.pdf;
        center += acc.center;
        combined += acc.combined;
        worst_rpen = worst_rpen.max(trace.final_loss.rpen_sum());
    }
    let n = REPEATS as f64;
    Ok(CellRun {
        mean_pdf: 100.0 * pdf / n,
        mean_center: 100.0 * center / n,
        mean_combined: 100.0 * combined / n,
        worst_rpen,
    })
}

fn table2(cell: &Table2Cell) -> Outcome {
    let start = Instant::now();
    match run_cell(cell, true) {
        Err(e) => fail(format!("{} {:.0}%: {e}", cell.name, cell.rtt * 100.0)),
        Ok(run) => check(
            (run.mean_combined - cell.reference).abs() <= 3.0 && run.worst_rpen < 1e-6,
            format!(
                "{} {:.0}%: combined {:.1} vs reference {:.1} (pdf {:.1}, center {:.1}), max radius penalty {:.1e}, {:.1?}",
                cell.name,
                cell.rtt * 100.0,
                run.mean_combined,
                cell.reference,
                run.mean_pdf,
                run.mean_center,
                run.worst_rpen,
                start.elapsed()
            ),
        ),
    }
}

fn random_classifier_case(seed: u64) -> (Mat, Mat, Vec<usize>, usize, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=6);
    let m = rng.random_range(2..=4);
    let n = rng.random_range(m..=20);
    let t = rng.random_range(1..=10);
    let point = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let train = (0..n).map(|_| point(&mut rng)).collect();
    let test = (0..t).map(|_| point(&mut rng)).collect();
    let labels = (0..n).map(|k| if k < m { k } else { rng.random_range(0..m) }).collect();
    (test, train, labels, m, rng.random_range(0.3..3.0))
}

fn classifier_oracles() -> Outcome {
    let mut worst = 0.0f64;
    let mut label_mismatches = 0;
    for seed in 0..50 {
        let (test, train, labels, m, bw) = random_classifier_case(9000 + seed);
        let classes = ClassIndex::new(labels.clone(), m).unwrap();
        let scores = pdf_scores(to_array(&test).view(), to_array(&train).view(), &classes, &PdfConfig { bandwidth: bw }).unwrap();
        for (j, row) in naive_pdf_scores(&test, &train, &labels, m, bw).iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                worst = worst.max((scores.values[[j, i]] - v).abs());
            }
        }
        let centers = naive_centers(&train, &labels, m);
        let got = center_classify(to_array(&test).view(), to_array(&centers).view(), None).unwrap();
        label_mismatches += got.iter().zip(naive_center_labels(&test, &centers)).filter(|(a, b)| **a != *b).count();
    }
    check(
        worst < 1e-12 && label_mismatches == 0,
        format!("50 instances, max pdf score difference {worst:.1e}, {label_mismatches} center label mismatches"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let iris = format!("iris={}", data_dir().join("iris.csv").display());
    let wine = format!("wine={}", data_dir().join("wine.csv").display());
    let mut reports = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("report{i}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_rbfdh"))
            .args(["bench", "--data", &iris, "--data", &wine, "--rtts", "10,20", "--repeats", "3"])
            .args(["--scaling", "minmax", "--sigma", "2", "--penalty", "-0.1", "--lr", "0.01", "--pdf-bandwidth", "0.1"])
            .arg("--out")
            .arg(&out)
            .stderr(std::process::Stdio::null())
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        if !status.success() {
            return fail(format!("bench run {i} exited with {status}"));
        }
        reports.push(std::fs::read(&out).unwrap());
    }
    check(
        reports[0] == reports[1],
        format!("two bench runs, {} byte reports, identical: {}", reports[0].len(), reports[0] == reports[1]),
    )
}

fn run_property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config {
        cases: PROPERTY_CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn points(rows: std::ops::Range<usize>, dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(proptest::collection::vec(lo..hi, dim), rows)
}

fn invariant_suite() -> Outcome {
    let mut failures = Vec::new();
    let mut record = |r: Result<(), String>| {
        if let Err(e) = r {
            failures.push(e);
        }
    };

    record(run_property("non-negativity", (any::<u64>(), 2usize..4), |(seed, m)| {
        let inst = Instance::random(seed, 12, 3, m);
        let (x, c, p) = to_lib(&inst);
        let l = loss(x.view(), &c, &p, inst.penalty);
        prop_assert!(l.d1.iter().chain(&l.d2).chain(&l.rpen).all(|&v| v >= 0.0) && l.d3 >= 0.0 && l.intra_sum >= 0.0);
        Ok(())
    }));

    record(run_property("decomposition", (any::<u64>(), 2usize..4), |(seed, m)| {
        let inst = Instance::random(seed, 12, 3, m);
        let (x, c, p) = to_lib(&inst);
        let l = loss(x.view(), &c, &p, inst.penalty);
        let total = l.d1.iter().chain(&l.d2).chain(&l.rpen).sum::<f64>() + l.d3;
        prop_assert!((total - l.d_total).abs() <= 1e-12 * (1.0 + total));
        prop_assert!((l.loss + inst.penalty * l.intra_sum - l.d_total).abs() <= 1e-12 * (1.0 + l.d_total));
        Ok(())
    }));

    record(run_property("permutation invariance", (any::<u64>(), any::<u64>()), |(seed, shuffle)| {
        use rand::seq::SliceRandom;
        let inst = Instance::random(seed, 12, 3, 2);
        let mut order: Vec<usize> = (0..12).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let mut permuted = inst.clone();
        permuted.x = order.iter().map(|&j| inst.x[j].clone()).collect();
        permuted.labels = order.iter().map(|&j| inst.labels[j]).collect();
        let (x, c, p) = to_lib(&inst);
        let (xp, cp, pp) = to_lib(&permuted);
        let a = loss(x.view(), &c, &p, inst.penalty).loss;
        let b = loss(xp.view(), &cp, &pp, inst.penalty).loss;
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        Ok(())
    }));

    record(run_property(
        "center translation invariance",
        (points(1..8, 3, -3.0, 3.0), points(2..5, 3, -3.0, 3.0), proptest::collection::vec(-50.0f64..50.0, 3)),
        |(test, centers, shift)| {
            let d = center_distances(to_array(&test).view(), to_array(&centers).view()).unwrap();
            for row in d.rows() {
                let mut v = row.to_vec();
                v.sort_by(f64::total_cmp);
                prop_assume!(v[1] - v[0] > 1e-9);
            }
            let moved = |m: &Mat| -> Mat { m.iter().map(|r| r.iter().zip(&shift).map(|(a, s)| a + s).collect()).collect() };
            let a = center_classify(to_array(&test).view(), to_array(&centers).view(), None).unwrap();
            let b = center_classify(to_array(&moved(&test)).view(), to_array(&moved(&centers)).view(), None).unwrap();
            prop_assert_eq!(a, b);
            Ok(())
        },
    ));

    record(run_property(
        "kernel range",
        (points(1..8, 2, -2.0, 2.0), proptest::collection::vec(-2.0f64..2.0, 2), 0.5f64..5.0),
        |(anchors, x, sigma)| {
            let km = KernelMap::fit(to_array(&anchors).view(), sigma).unwrap();
            let v = km.map(Array1::from(x).view()).unwrap();
            prop_assert!(v.iter().all(|&f| f > 0.0 && f <= 1.0));
            Ok(())
        },
    ));

    record(run_property(
        "kernel symmetry",
        (proptest::collection::vec(-4.0f64..4.0, 3), proptest::collection::vec(-4.0f64..4.0, 3), 0.1f64..5.0),
        |(a, b, sigma)| {
            let ab = KernelMap::fit(to_array(&vec![a.clone()]).view(), sigma).unwrap().map(Array1::from(b.clone()).view()).unwrap()[0];
            let ba = KernelMap::fit(to_array(&vec![b]).view(), sigma).unwrap().map(Array1::from(a).view()).unwrap()[0];
            prop_assert_eq!(ab, ba);
            Ok(())
        },
    ));

    if failures.is_empty() {
        pass(format!("6 properties x {PROPERTY_CASES} cases"))
    } else {
        fail(failures.join("; "))
    }
}

fn ablation() -> Outcome {
    let cell = &TABLE2[0];
    match (run_cell(cell, true), run_cell(cell, false)) {
        (Ok(rbf), Ok(dh)) => check(
            rbf.mean_combined >= dh.mean_combined - 1.0,
            format!("Iris 20%: RBFDH {:.1} vs DH {:.1}", rbf.mean_combined, dh.mean_combined),
        ),
        (Err(e), _) | (_, Err(e)) => fail(e),
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        fail(format!("panicked: {msg}"))
    })
}

fn main() {
    // `cargo test -- <filter>` passes arguments; the gate always runs in full.
    let mut criteria: Vec<(String, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("1 gradient oracle".into(), Box::new(gradient_oracle)),
        ("2 constraint satisfiability".into(), Box::new(toy_constraints)),
    ];
    for cell in &TABLE2 {
        criteria.push((format!("3 table reproduction ({})", cell.name), Box::new(move || table2(cell))));
    }
    criteria.push(("4 classifier oracles".into(), Box::new(classifier_oracles)));
    criteria.push(("5 determinism".into(), Box::new(determinism)));
    criteria.push(("6 invariant suite".into(), Box::new(invariant_suite)));
    criteria.push(("7 ablation direction".into(), Box::new(ablation)));

    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = guarded(f);
        failed += usize::from(!outcome.pass);
        println!("[{}] criterion {name}: {}", if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
    }
    println!("acceptance: {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
