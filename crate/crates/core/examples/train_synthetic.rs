//! Train the reference model on a small synthetic set held in memory, then
//! score the held-out split and save a checkpoint.
//!
//!     cargo run --release --example train_synthetic -- [epochs]

use drgrade::data::{stratified_split, synth_samples, Manifest, ManifestEntry, SplitSpec, SynthConfig};
use drgrade::nnet::{build_reference_model, load_checkpoint, predict_examples, save_checkpoint, train_with_progress, Example, Network, TrainConfig};
use drgrade::{evaluate, preprocess, FundusTensor, PipelineConfig};
use std::collections::HashMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(10);
    let samples = synth_samples(&SynthConfig { n_per_class: 40, ..Default::default() })?;
    let pipeline = PipelineConfig::default();
    let tensors: HashMap<String, FundusTensor> = samples
        .iter()
        .map(|s| Ok((s.id_code.clone(), preprocess(&s.image, &pipeline)?)))
        .collect::<Result<_, drgrade::imgproc::ImgError>>()?;

    let manifest = Manifest::new(
        samples.iter().map(|s| ManifestEntry { id_code: s.id_code.clone(), diagnosis: s.grade }).collect(),
    );
    let (train, val) = stratified_split(&manifest, &SplitSpec::default())?;
    let examples = |m: &Manifest| -> Vec<Example<'_>> {
        m.entries.iter().map(|e| Example { input: tensors[&e.id_code].values(), grade: e.diagnosis }).collect()
    };
    let (tx, vx) = (examples(&train), examples(&val));

    let cfg = TrainConfig { epochs, ..TrainConfig::reference() };
    let mut net = build_reference_model::<f32>(224, cfg.seed)?;
    let log = train_with_progress(&mut net, &tx, Some(&vx), &cfg, |r| {
        println!("epoch {:>2}  loss {:.4}  val qwk {:.3}", r.epoch, r.loss, r.val_qwk.unwrap_or(f64::NAN));
    })?;

    let mut bytes = Vec::new();
    save_checkpoint(&net, log.epochs.len(), &mut bytes)?;
    let (restored, _): (Network<f32>, _) = load_checkpoint(&bytes[..])?;
    let scored = predict_examples(&restored, &vx, 16)?;
    let truth: Vec<_> = vx.iter().map(|e| e.grade).collect();
    let scores: Vec<_> = scored.iter().map(|(s, _)| *s).collect();
    let report = evaluate(&truth, &scores)?;
    println!("held out: qwk {:.4}  accuracy {:.3}  mse {:.4}  ({} KiB checkpoint)", report.qwk(), report.accuracy, report.mse, bytes.len() / 1024);
    Ok(())
}
