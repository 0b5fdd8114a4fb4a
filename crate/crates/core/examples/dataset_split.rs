//! Write a synthetic dataset to disk, reload the manifest and split it.
//!
//!     cargo run --example dataset_split -- [out_dir]

use std::path::PathBuf;

use drgrade::data::{load_manifest, stratified_split, write_synth_dataset, SplitSpec, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth_small".into()));
    let cfg = SynthConfig { n_per_class: 12, side: 128, ..Default::default() };
    write_synth_dataset(&cfg, &out)?;

    let m = load_manifest(&out.join("manifest.csv"), Some(&out.join("images")))?;
    let d = m.distribution();
    println!("{} images, counts {:?}", m.len(), d.counts);

    let (train, val) = stratified_split(&m, &SplitSpec::default())?;
    println!("train {:?}", train.distribution().counts);
    println!("val   {:?}", val.distribution().counts);
    let ids: Vec<&str> = val.entries.iter().take(5).map(|e| e.id_code.as_str()).collect();
    println!("first val ids {ids:?}");
    Ok(())
}
