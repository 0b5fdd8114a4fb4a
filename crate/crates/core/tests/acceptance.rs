//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! fails. Criterion 9 needs a real dataset: point `APTOS_DIR` at a directory
//! holding `train.csv` and `train_images/`.

mod common;

use std::collections::HashMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::gradcheck::{max_rel_error, random_case, KINDS, TOLERANCE as GRAD_TOLERANCE};
use drgrade::cli::{cmd_evaluate, cmd_predict, cmd_preprocess, cmd_synth, cmd_train, CliConfig, PredictInput, TrainPaths};
use drgrade::data::load_png;
use drgrade::grading::{decode_raw, qwk, ConfusionMatrix};
use drgrade::imgproc::{clahe, clahe_with_mappings, median_filter, preprocess, Image8, PipelineConfig};

const QWK_TOLERANCE: f64 = 1e-12;
const QWK_BUDGET: Duration = Duration::from_secs(5);
const MEDIAN_BUDGET: Duration = Duration::from_secs(10);
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const TRAIN_BUDGET: Duration = Duration::from_secs(300);
const MIN_HELD_OUT_QWK: f64 = 0.90;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(budget: Duration, start: Instant) -> Result<String, String> {
    let t = start.elapsed();
    check(t < budget, format!("took {:.1}s, budget {:.0}s", t.as_secs_f64(), budget.as_secs_f64()))?;
    Ok(format!("{:.2}s", t.as_secs_f64()))
}

fn kappa(t: &[usize], p: &[usize], k: usize) -> Option<f64> {
    qwk(&ConfusionMatrix::from_labels(t, p, k).ok()?).ok().map(|b| b.qwk)
}

fn random_labels(r: &mut drgrade::rng::Xoshiro256StarStar) -> (usize, Vec<usize>, Vec<usize>) {
    let k = 2 + r.below(5) as usize;
    let n = 2 + r.below(199) as usize;
    let t = (0..n).map(|_| r.below(k as u64) as usize).collect();
    let p = (0..n).map(|_| r.below(k as u64) as usize).collect();
    (k, t, p)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let (k, t, p) = random_labels(&mut r);
        match (common::oracle_qwk(&t, &p, k), kappa(&t, &p, k)) {
            (Some(a), Some(b)) => worst = worst.max((a - b).abs()),
            (None, None) => {}
            (a, b) => return Err(format!("pair {i}: oracle {a:?}, library {b:?}")),
        }
    }
    check(worst <= QWK_TOLERANCE, format!("max |diff| {worst:e}"))?;
    Ok(format!("1000 pairs, max |diff| {worst:.1e}, {}", within(QWK_BUDGET, start)?))
}

fn criterion_2() -> Outcome {
    let mut r = common::rng(2);
    for _ in 0..50 {
        let (k, t, _) = random_labels(&mut r);
        if let Some(q) = kappa(&t, &t, k) {
            check(q == 1.0, format!("diagonal gave {q}"))?;
        }
    }
    let anti = kappa(&[0, 2], &[2, 0], 3);
    check(anti == Some(-1.0), format!("anti-diagonal gave {anti:?}"))?;
    check(common::oracle_qwk(&[0, 2], &[2, 0], 3) == Some(-1.0), "oracle disagrees on anti-diagonal")?;
    for i in 0..200 {
        let (k, t, p) = random_labels(&mut r);
        let mut idx: Vec<usize> = (0..t.len()).collect();
        r.shuffle(&mut idx);
        let t2: Vec<usize> = idx.iter().map(|&j| t[j]).collect();
        let p2: Vec<usize> = idx.iter().map(|&j| p[j]).collect();
        let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => (a - b).abs() <= QWK_TOLERANCE,
            (a, b) => a.is_none() && b.is_none(),
        };
        check(close(kappa(&t, &p, k), kappa(&p, &t, k)), format!("instance {i} not symmetric"))?;
        check(close(kappa(&t, &p, k), kappa(&t2, &p2, k)), format!("instance {i} not permutation invariant"))?;
    }
    Ok("diagonal 1.0, anti-diagonal -1.0, 200 symmetric/permuted instances".into())
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(3);
    for i in 0..100 {
        let (w, h) = (1 + r.below(64) as usize, 1 + r.below(64) as usize);
        let img = common::random_gray(&mut r, w, h);
        for k in [3, 5] {
            let got = median_filter(&img, k).map_err(|e| e.to_string())?;
            check(got == common::oracle_median(&img, k), format!("image {i} ({w}x{h}) kernel {k} differs"))?;
        }
    }
    Ok(format!("100 images x kernels 3,5 exact, {}", within(MEDIAN_BUDGET, start)?))
}

fn criterion_4() -> Outcome {
    for v in [0u8, 1, 77, 128, 254, 255] {
        let out = clahe(&Image8::filled(64, 48, v).unwrap(), 8, 2.0).map_err(|e| e.to_string())?;
        let (lo, hi) = (out.pixels().iter().min().unwrap(), out.pixels().iter().max().unwrap());
        check(hi - lo <= 1, format!("constant {v} spread to {lo}..{hi}"))?;
    }
    let mut r = common::rng(4);
    for i in 0..20 {
        let (w, h) = (1 + r.below(80) as usize, 1 + r.below(80) as usize);
        let img = common::random_gray(&mut r, w, h);
        let got = clahe(&img, 1, f64::INFINITY).map_err(|e| e.to_string())?;
        check(got.pixels() == common::oracle_global_he(&img).as_slice(), format!("global HE mismatch on image {i}"))?;
    }
    for i in 0..50 {
        let (w, h) = (8 + r.below(100) as usize, 8 + r.below(100) as usize);
        let img = common::random_gray(&mut r, w, h);
        let out = clahe_with_mappings(&img, 8, r.uniform(0.5, 4.0)).map_err(|e| e.to_string())?;
        check(out.mappings.iter().all(|m| m.windows(2).all(|p| p[0] <= p[1])), format!("non-monotone mapping in image {i}"))?;
    }
    let ramp = Image8::from_fn(128, 96, |x, y| 100 + ((x + y) % 41) as u8).unwrap();
    let std = |p: &[u8]| {
        let m = p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
        (p.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / p.len() as f64).sqrt()
    };
    let (before, after) = (std(ramp.pixels()), std(clahe(&ramp, 8, 2.0).unwrap().pixels()));
    check(after > before, format!("std {before:.2} -> {after:.2}"))?;
    Ok(format!("constant, global HE, 50 monotone, std {before:.1} -> {after:.1}"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut r = common::rng(5);
    let mut parts = Vec::new();
    for kind in KINDS {
        let mut worst = 0.0f64;
        for i in 0..20 {
            let e = max_rel_error(random_case(kind, &mut r));
            check(e < GRAD_TOLERANCE, format!("{kind} shape {i}: rel error {e:.2e}"))?;
            worst = worst.max(e);
        }
        parts.push(format!("{kind} {worst:.0e}"));
    }
    Ok(format!("6 kinds x 20 shapes, worst {}; {}", parts.join(", "), within(GRAD_BUDGET, start)?))
}

fn criterion_6() -> Outcome {
    let mut prev = 0u8;
    let mut grades = Vec::new();
    for i in 0..=600 {
        let s = -1.0 + 0.01 * i as f64;
        let g = decode_raw(s).map_err(|e| e.to_string())?.value();
        check(g <= 4, format!("score {s} gave {g}"))?;
        check(g >= prev, format!("decode decreased at {s}"))?;
        check(g as f64 == s.clamp(0.0, 4.0).round(), format!("score {s} gave {g}"))?;
        prev = g;
        grades.push(g);
    }
    check(grades[0] == 0 && *grades.last().unwrap() == 4, "clamp endpoints")?;
    Ok("601 scores monotone in [0,4], endpoints 0 and 4".into())
}

/// Working state shared by criteria 7 and 8.
struct Run {
    root: PathBuf,
}

impl Run {
    fn synth(&self) -> PathBuf {
        self.root.join("synth")
    }
    fn tensors(&self) -> PathBuf {
        self.root.join("tensors")
    }
}

fn train_dir(run: &Run, cfg: &CliConfig, name: &str) -> Result<(PathBuf, f64), String> {
    let out = run.root.join(name);
    let paths = TrainPaths {
        tensor_dir: run.tensors(),
        manifest: run.synth().join("manifest.csv"),
        out_dir: out.clone(),
        checkpoint: None,
    };
    let t = Instant::now();
    cmd_train(&paths, cfg).map_err(|e| e.to_string())?;
    Ok((out, t.elapsed().as_secs_f64()))
}

fn criterion_7(run: &Run) -> Outcome {
    let start = Instant::now();
    let mut cfg = CliConfig::default();
    cfg.synth.n_per_class = 100;
    cfg.set_seed(42);
    cmd_synth(&cfg, &run.synth()).map_err(|e| e.to_string())?;
    let pre = cmd_preprocess(&run.synth().join("manifest.csv"), &run.synth().join("images"), &run.tensors(), &cfg, false)
        .map_err(|e| e.to_string())?;
    check(pre.success, "preprocess reported failures")?;
    let (out, _) = train_dir(run, &cfg, "train_a")?;

    let val = out.join("val_manifest.csv");
    let preds = out.join("val_predictions.csv");
    cmd_predict(&out.join("model.drck"), &PredictInput::Tensors(run.tensors()), Some(&val), &preds, &cfg)
        .map_err(|e| e.to_string())?;
    let report = cmd_evaluate(&val, &preds, None, &cfg).map_err(|e| e.to_string())?;
    let held_out = report.summary["qwk"].as_f64().ok_or("no qwk in report")?;
    let elapsed = start.elapsed();

    let (again, _) = train_dir(run, &cfg, "train_b")?;
    let log_a = fs::read(out.join("train_log.jsonl")).map_err(|e| e.to_string())?;
    let log_b = fs::read(again.join("train_log.jsonl")).map_err(|e| e.to_string())?;

    check(held_out >= MIN_HELD_OUT_QWK, format!("held-out QWK {held_out:.4} < {MIN_HELD_OUT_QWK}"))?;
    check(elapsed < TRAIN_BUDGET, format!("synth+preprocess+train+evaluate took {:.0}s", elapsed.as_secs_f64()))?;
    check(!log_a.is_empty() && log_a == log_b, "rerun TrainLog differs")?;
    Ok(format!(
        "held-out QWK {held_out:.4} on {} images in {:.0}s, rerun log identical",
        report.summary["n"],
        elapsed.as_secs_f64()
    ))
}

fn fdt_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map(|d| d.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    v.retain(|p| p.extension().is_some_and(|e| e == "fdt"));
    v.sort();
    v
}

fn criterion_8(run: &Run) -> Outcome {
    let cfg = CliConfig::default();
    let manifest = run.synth().join("manifest.csv");
    if !manifest.is_file() {
        cmd_synth(&CliConfig { synth: drgrade::data::SynthConfig { n_per_class: 4, ..cfg.synth }, ..cfg.clone() }, &run.synth())
            .map_err(|e| e.to_string())?;
    }
    let (a, b) = (run.root.join("det_a"), run.root.join("det_b"));
    for dir in [&a, &b] {
        let o = cmd_preprocess(&manifest, &run.synth().join("images"), dir, &cfg, false).map_err(|e| e.to_string())?;
        check(o.success, "preprocess reported failures")?;
    }
    let files = fdt_files(&a);
    check(!files.is_empty() && files.len() == fdt_files(&b).len(), "tensor counts differ")?;
    for f in &files {
        let other = b.join(f.file_name().unwrap());
        check(fs::read(f).ok() == fs::read(&other).ok(), format!("{} differs between runs", f.display()))?;
    }

    let src = load_png(&common::fixture_path("golden_disc.png")).map_err(|e| e.to_string())?;
    check(src == common::golden_source(), "golden source image drifted")?;
    let got = preprocess(&src, &PipelineConfig::default()).map_err(|e| e.to_string())?.to_bytes();
    let want = fs::read(common::fixture_path("golden_disc.fdt")).map_err(|e| e.to_string())?;
    check(got == want, "golden tensor differs")?;
    Ok(format!("{} tensors identical across runs, golden fixture matches", files.len()))
}

fn criterion_9(run: &Run, dir: PathBuf) -> Outcome {
    {
        let images = dir.join("train_images");
        let manifest = dir.join("train.csv");
        let mut cfg = CliConfig::default();
        if let Some(e) = std::env::var("APTOS_EPOCHS").ok().and_then(|v| v.parse().ok()) {
            cfg.train.epochs = e;
        }
        let tensors = run.root.join("aptos_tensors");
        let pre = cmd_preprocess(&manifest, &images, &tensors, &cfg, false).map_err(|e| e.to_string())?;
        check(pre.success, format!("{} images failed to preprocess", pre.summary["failures"].as_array().map_or(0, Vec::len)))?;
        let out = run.root.join("aptos_train");
        let paths = TrainPaths { tensor_dir: tensors.clone(), manifest, out_dir: out.clone(), checkpoint: None };
        cmd_train(&paths, &cfg).map_err(|e| e.to_string())?;
        let val = out.join("val_manifest.csv");
        let preds = out.join("val_predictions.csv");
        cmd_predict(&out.join("model.drck"), &PredictInput::Tensors(tensors), Some(&val), &preds, &cfg)
            .map_err(|e| e.to_string())?;
        let report = cmd_evaluate(&val, &preds, Some(&out.join("report.json")), &cfg).map_err(|e| e.to_string())?;
        let s: HashMap<String, serde_json::Value> =
            serde_json::from_value(report.summary.clone()).map_err(|e| e.to_string())?;
        for key in ["qwk", "accuracy", "mse", "confusion", "n", "class_counts"] {
            check(s.contains_key(key), format!("report lacks {key}"))?;
        }
        Ok(format!("{} images preprocessed, report qwk {} on {} held out", pre.summary["processed"], s["qwk"], s["n"]))
    }
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
    })
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let run = Run { root: tmp.path().to_path_buf() };
    let mut failed = 0;
    let mut report = |n: u8, name: &str, outcome: Option<Outcome>| {
        let line = match outcome {
            Some(Ok(d)) => format!("PASS  {d}"),
            Some(Err(e)) => {
                failed += 1;
                format!("FAIL  {e}")
            }
            None => "SKIP  APTOS_DIR not set".to_string(),
        };
        println!("criterion {n}  {name:<24} {line}");
    };
    report(1, "qwk oracle equivalence", Some(guarded(criterion_1)));
    report(2, "qwk anchor values", Some(guarded(criterion_2)));
    report(3, "median exactness", Some(guarded(criterion_3)));
    report(4, "clahe properties", Some(guarded(criterion_4)));
    report(5, "gradient checks", Some(guarded(criterion_5)));
    report(6, "decode contract", Some(guarded(criterion_6)));
    report(7, "end-to-end learning", Some(guarded(|| criterion_7(&run))));
    report(8, "pipeline determinism", Some(guarded(|| criterion_8(&run))));
    report(9, "full dataset pathway", std::env::var_os("APTOS_DIR").map(|d| guarded(|| criterion_9(&run, d.into()))));
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
