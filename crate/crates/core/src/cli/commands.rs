use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{CliConfig, CliError, Outcome, TOOL_VERSION};
use crate::data::{
    load_manifest, load_png, read_predictions, save_gray_png, stratified_split, write_predictions,
    write_synth_dataset, ClassDistribution, Manifest, PredictionRow,
};
use crate::grading::{evaluate, Grade, Score};
use crate::imgproc::{preprocess, preprocess_stages, FundusTensor, FUNDUS_CHANNELS, FUNDUS_SIDE};
use crate::nnet::{
    build_reference_model_with, load_checkpoint, predict_examples, save_checkpoint, train_with_progress, Example,
    Network,
};
use crate::verify::{all_passed, format_table, run_verify, VerifyOptions};

fn summary(command: &str, cfg: &CliConfig, body: Value) -> Value {
    let mut out = json!({ "tool_version": TOOL_VERSION, "command": command, "config": cfg.to_json() });
    if let (Value::Object(o), Value::Object(b)) = (&mut out, body) {
        o.extend(b);
    }
    out
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} does not exist", path.display())))
    }
}

fn require_dir(path: &Path, what: &str) -> Result<(), CliError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{what} {} is not a directory", path.display())))
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn usage_manifest(path: &Path, image_dir: Option<&Path>) -> Result<Manifest, CliError> {
    require_file(path, "manifest")?;
    load_manifest(path, image_dir).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Comma-joined ids, cut off after the first few.
fn id_list(ids: &[&str]) -> String {
    const SHOWN: usize = 10;
    let mut out = ids.iter().take(SHOWN).copied().collect::<Vec<_>>().join(", ");
    if ids.len() > SHOWN {
        out.push_str(&format!(" and {} more", ids.len() - SHOWN));
    }
    out
}

fn tensor_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.fdt"))
}

/// Materialize a synthetic dataset: `images/`, `manifest.csv` and a summary.
pub fn cmd_synth(cfg: &CliConfig, out_dir: &Path) -> Result<Outcome, CliError> {
    cfg.validate()?;
    create_dir(out_dir)?;
    let manifest = write_synth_dataset(&cfg.synth, out_dir)?;
    let s = summary(
        "synth",
        cfg,
        json!({
            "count": manifest.len(),
            "class_counts": manifest.distribution().counts,
            "manifest": out_dir.join("manifest.csv"),
            "images": out_dir.join("images"),
        }),
    );
    write_json(&out_dir.join("synth_summary.json"), &s)?;
    Ok(Outcome { summary: s, success: true })
}

/// Preprocess every manifest image into `<out_dir>/<id>.fdt`, optionally
/// with post-CLAHE previews under `<out_dir>/previews/`. Per-image failures
/// are collected; any failure makes the outcome unsuccessful.
pub fn cmd_preprocess(
    manifest_path: &Path,
    image_dir: &Path,
    out_dir: &Path,
    cfg: &CliConfig,
    previews: bool,
) -> Result<Outcome, CliError> {
    cfg.validate()?;
    require_dir(image_dir, "image directory")?;
    let manifest = usage_manifest(manifest_path, None)?;
    create_dir(out_dir)?;
    let preview_dir = out_dir.join("previews");
    if previews {
        create_dir(&preview_dir)?;
    }

    let results: Vec<(usize, Result<(), String>)> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let run = || -> Result<(), String> {
                let img = load_png(&image_dir.join(format!("{}.png", e.id_code))).map_err(|e| e.to_string())?;
                let stages = preprocess_stages(&img, &cfg.pipeline).map_err(|e| e.to_string())?;
                std::fs::write(tensor_path(out_dir, &e.id_code), stages.tensor.to_bytes())
                    .map_err(|e| e.to_string())?;
                if previews {
                    save_gray_png(&stages.enhanced, &preview_dir.join(format!("{}.png", e.id_code)))
                        .map_err(|e| e.to_string())?;
                }
                Ok(())
            };
            (i, run())
        })
        .collect();

    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (i, r) in results {
        let e = &manifest.entries[i];
        match r {
            Ok(()) => ok.push(e.diagnosis),
            Err(msg) => failures.push(json!({ "id_code": e.id_code, "error": msg })),
        }
    }
    let s = summary(
        "preprocess",
        cfg,
        json!({
            "manifest": manifest_path,
            "image_dir": image_dir,
            "out_dir": out_dir,
            "total": manifest.len(),
            "processed": ok.len(),
            "class_counts": ClassDistribution::from_grades(ok).counts,
            "manifest_distribution": manifest.distribution(),
            "failures": failures,
        }),
    );
    write_json(&out_dir.join("preprocess_summary.json"), &s)?;
    Ok(Outcome { success: failures.is_empty(), summary: s })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPaths {
    pub tensor_dir: PathBuf,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/model.drck`.
    pub checkpoint: Option<PathBuf>,
}

fn load_tensors(dir: &Path, manifest: &Manifest) -> Result<Vec<FundusTensor>, CliError> {
    let missing: Vec<&str> = manifest
        .entries
        .iter()
        .filter(|e| !tensor_path(dir, &e.id_code).is_file())
        .map(|e| e.id_code.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!(
            "{} tensor files missing from {}: {}",
            missing.len(),
            dir.display(),
            id_list(&missing)
        )));
    }
    manifest
        .entries
        .iter()
        .map(|e| {
            let p = tensor_path(dir, &e.id_code);
            let bytes = std::fs::read(&p).map_err(|err| CliError::Failed(format!("{}: {err}", p.display())))?;
            FundusTensor::from_bytes(&bytes).map_err(|err| CliError::Failed(format!("{}: {err}", p.display())))
        })
        .collect()
}

fn examples<'a>(m: &Manifest, tensors: &'a [FundusTensor]) -> Vec<Example<'a>> {
    m.entries.iter().zip(tensors).map(|(e, t)| Example { input: t.values(), grade: e.diagnosis }).collect()
}

/// Split, train the reference model, and write the checkpoint, the JSON-lines
/// log and both split manifests into `out_dir`.
pub fn cmd_train(paths: &TrainPaths, cfg: &CliConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    require_dir(&paths.tensor_dir, "tensor directory")?;
    let manifest = usage_manifest(&paths.manifest, None)?;
    let (train_m, val_m) = stratified_split(&manifest, &cfg.split).map_err(|e| CliError::Usage(e.to_string()))?;
    let train_t = load_tensors(&paths.tensor_dir, &train_m)?;
    let val_t = load_tensors(&paths.tensor_dir, &val_m)?;
    create_dir(&paths.out_dir)?;
    train_m.write(&paths.out_dir.join("train_manifest.csv"))?;
    val_m.write(&paths.out_dir.join("val_manifest.csv"))?;

    let mut net = build_reference_model_with::<f32>(FUNDUS_SIDE, cfg.train.seed, cfg.train.dropout_rate)?;
    let train_x = examples(&train_m, &train_t);
    let val_x = examples(&val_m, &val_t);
    let start = Instant::now();
    let log_path = paths.out_dir.join("train_log.jsonl");
    let trained = train_with_progress(&mut net, &train_x, Some(&val_x), &cfg.train, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  val_qwk {}  ({:.1}s)",
            r.epoch,
            r.loss,
            r.val_qwk.map_or("n/a".to_string(), |q| format!("{q:.4}")),
            start.elapsed().as_secs_f64()
        );
    });
    let log = match trained {
        Ok(log) => log,
        Err(e) => {
            let s = summary("train", cfg, json!({ "error": e.to_string() }));
            write_json(&paths.out_dir.join("train_summary.json"), &s)?;
            return Err(CliError::Failed(e.to_string()));
        }
    };
    std::fs::write(&log_path, log.to_jsonl())?;
    let ckpt = paths.checkpoint.clone().unwrap_or_else(|| paths.out_dir.join("model.drck"));
    let file = std::fs::File::create(&ckpt).map_err(|e| CliError::Failed(format!("{}: {e}", ckpt.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    save_checkpoint(&net, log.epochs.len(), &mut writer)?;
    std::io::Write::flush(&mut writer)?;

    let s = summary(
        "train",
        cfg,
        json!({
            "train_size": train_m.len(),
            "val_size": val_m.len(),
            "train_class_counts": train_m.distribution().counts,
            "val_class_counts": val_m.distribution().counts,
            "epochs": log.epochs,
            "final_val_qwk": log.last().and_then(|r| r.val_qwk),
            "checkpoint": ckpt,
            "log": log_path,
            "seconds": start.elapsed().as_secs_f64(),
        }),
    );
    write_json(&paths.out_dir.join("train_summary.json"), &s)?;
    Ok(Outcome { summary: s, success: true })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictInput {
    /// Directory of `<id>.fdt` files.
    Tensors(PathBuf),
    /// Directory of raw `<id>.png` files; each goes through the pipeline.
    Images(PathBuf),
}

fn list_ids(dir: &Path, ext: &str) -> Result<Vec<String>, CliError> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Score inputs with a checkpoint and write `id_code,score,grade`.
///
/// Ids come from `manifest` when given, otherwise from the directory listing
/// in name order.
pub fn cmd_predict(
    checkpoint: &Path,
    input: &PredictInput,
    manifest: Option<&Path>,
    out_csv: &Path,
    cfg: &CliConfig,
) -> Result<Outcome, CliError> {
    cfg.validate()?;
    require_file(checkpoint, "checkpoint")?;
    let (dir, ext) = match input {
        PredictInput::Tensors(d) => (d, "fdt"),
        PredictInput::Images(d) => (d, "png"),
    };
    require_dir(dir, "input directory")?;
    let ids = match manifest {
        Some(p) => usage_manifest(p, None)?.entries.into_iter().map(|e| e.id_code).collect(),
        None => list_ids(dir, ext)?,
    };
    let missing: Vec<&str> =
        ids.iter().filter(|id| !dir.join(format!("{id}.{ext}")).is_file()).map(String::as_str).collect();
    if !missing.is_empty() {
        return Err(CliError::Usage(format!("{} missing inputs: {}", missing.len(), id_list(&missing))));
    }

    let bytes = std::fs::read(checkpoint)?;
    let (net, header): (Network<f32>, _) = load_checkpoint(&bytes[..])?;
    if net.input_shape() != [FUNDUS_CHANNELS, FUNDUS_SIDE, FUNDUS_SIDE] {
        return Err(CliError::Failed(format!(
            "checkpoint expects input {:?}, pipeline produces [{FUNDUS_CHANNELS}, {FUNDUS_SIDE}, {FUNDUS_SIDE}]",
            net.input_shape()
        )));
    }

    let tensors: Vec<FundusTensor> = ids
        .par_iter()
        .map(|id| -> Result<FundusTensor, CliError> {
            let p = dir.join(format!("{id}.{ext}"));
            let ctx = |e: String| CliError::Failed(format!("{}: {e}", p.display()));
            match input {
                PredictInput::Tensors(_) => {
                    let b = std::fs::read(&p).map_err(|e| ctx(e.to_string()))?;
                    FundusTensor::from_bytes(&b).map_err(|e| ctx(e.to_string()))
                }
                PredictInput::Images(_) => {
                    let img = load_png(&p).map_err(|e| ctx(e.to_string()))?;
                    preprocess(&img, &cfg.pipeline).map_err(|e| ctx(e.to_string()))
                }
            }
        })
        .collect::<Result<_, _>>()?;

    // The grade is a placeholder; prediction never looks at it.
    let xs: Vec<Example<'_>> = tensors.iter().map(|t| Example { input: t.values(), grade: Grade::MIN }).collect();
    let scored = predict_examples(&net, &xs, cfg.train.batch_size)?;
    let rows: Vec<PredictionRow> =
        ids.iter().zip(&scored).map(|(id, (s, _))| PredictionRow::new(id.clone(), *s)).collect();
    if let Some(parent) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_predictions(&rows, out_csv)?;
    let counts = ClassDistribution::from_grades(rows.iter().map(|r| r.grade)).counts;
    let s = summary(
        "predict",
        cfg,
        json!({
            "checkpoint": checkpoint,
            "checkpoint_epoch": header.epoch,
            "count": rows.len(),
            "predicted_class_counts": counts,
            "predictions": out_csv,
        }),
    );
    Ok(Outcome { summary: s, success: true })
}

/// Join predictions to ground truth on `id_code` and report QWK and friends.
/// Ids present on only one side are an error.
pub fn cmd_evaluate(
    truth_csv: &Path,
    pred_csv: &Path,
    out_json: Option<&Path>,
    cfg: &CliConfig,
) -> Result<Outcome, CliError> {
    let truth = usage_manifest(truth_csv, None)?;
    require_file(pred_csv, "prediction file")?;
    let preds = read_predictions(pred_csv).map_err(|e| CliError::Usage(format!("{}: {e}", pred_csv.display())))?;
    let by_id: HashMap<&str, Score> = preds.iter().map(|r| (r.id_code.as_str(), r.score)).collect();
    let truth_ids: HashSet<&str> = truth.entries.iter().map(|e| e.id_code.as_str()).collect();
    let missing: Vec<&str> =
        truth.entries.iter().map(|e| e.id_code.as_str()).filter(|id| !by_id.contains_key(id)).collect();
    let extra: Vec<&str> =
        preds.iter().map(|r| r.id_code.as_str()).filter(|id| !truth_ids.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(CliError::Failed(format!(
            "join mismatch: {} ids without predictions [{}]; {} predicted ids not in truth [{}]",
            missing.len(),
            id_list(&missing),
            extra.len(),
            id_list(&extra)
        )));
    }
    let grades: Vec<Grade> = truth.entries.iter().map(|e| e.diagnosis).collect();
    let scores: Vec<Score> = truth.entries.iter().map(|e| by_id[e.id_code.as_str()]).collect();
    let report = evaluate(&grades, &scores)?;
    let mut s = summary("evaluate", cfg, report.to_json());
    s["truth"] = json!(truth_csv);
    s["predictions"] = json!(pred_csv);
    if let Some(p) = out_json {
        if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_json(p, &s)?;
    }
    Ok(Outcome { summary: s, success: true })
}

/// Run the built-in oracle suites. The summary's `table` field holds the
/// printable pass/fail table.
pub fn cmd_verify(opts: &VerifyOptions, cfg: &CliConfig) -> Result<Outcome, CliError> {
    let results = run_verify(opts);
    let passed = all_passed(&results);
    let s = summary(
        "verify",
        cfg,
        json!({
            "options": opts,
            "passed": passed,
            "suites": results,
            "table": format_table(&results),
        }),
    );
    Ok(Outcome { summary: s, success: passed })
}
