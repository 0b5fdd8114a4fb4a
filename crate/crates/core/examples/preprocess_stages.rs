//! Run one synthetic fundus image through the pipeline and save every stage.
//!
//!     cargo run --example preprocess_stages -- [out_dir]

use std::path::PathBuf;

use drgrade::data::{save_gray_png, save_png, synth_samples, SynthConfig};
use drgrade::imgproc::{preprocess_stages, Image8, PipelineConfig};

fn describe(name: &str, img: &Image8) {
    let p = img.pixels();
    let mean = p.iter().map(|&v| v as f64).sum::<f64>() / p.len() as f64;
    let sd = (p.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / p.len() as f64).sqrt();
    println!("{name:<9} {:>4}x{:<4} mean {mean:6.1}  sd {sd:5.1}", img.width(), img.height());
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "stages".into()));
    std::fs::create_dir_all(&out)?;

    let cfg = SynthConfig { n_per_class: 1, side: 320, noise_sd: 4.0, seed: 7 };
    let sample = synth_samples(&cfg)?.swap_remove(4);
    println!("{} (grade {}, {} lesions)", sample.id_code, sample.grade, sample.lesions.len());

    let s = preprocess_stages(&sample.image, &PipelineConfig::default())?;
    save_png(&sample.image, &out.join("0_input.png"))?;
    save_png(&s.masked, &out.join("1_masked.png"))?;
    for (i, (name, img)) in
        [("green", &s.green), ("denoised", &s.denoised), ("enhanced", &s.enhanced), ("resized", &s.resized)]
            .into_iter()
            .enumerate()
    {
        describe(name, img);
        save_gray_png(img, &out.join(format!("{}_{name}.png", i + 2)))?;
    }
    std::fs::write(out.join("tensor.fdt"), s.tensor.to_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}
