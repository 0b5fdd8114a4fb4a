use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{save_png, DataError, Manifest, ManifestEntry};
use crate::grading::{Grade, NUM_GRADES};
use crate::imgproc::ImageRgb8;
use crate::rng::{SplitMix64, Xoshiro256StarStar};

/// How much darker than the disc a lesion square is.
pub const LESION_DEPTH: u8 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_per_class: usize,
    pub side: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { n_per_class: 100, side: 256, noise_sd: 4.0, seed: 42 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_per_class == 0 {
            return Err(DataError::InvalidParams("n_per_class must be at least 1".into()));
        }
        if self.side < 16 {
            return Err(DataError::InvalidParams(format!("side must be at least 16, got {}", self.side)));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(DataError::InvalidParams(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSample {
    pub id_code: String,
    pub grade: Grade,
    pub image: ImageRgb8,
    /// Top-left corners of the lesion squares.
    pub lesions: Vec<(usize, usize)>,
}

struct Disc {
    c: f64,
    r2: f64,
}

impl Disc {
    fn new(side: usize) -> Self {
        let r = 0.4 * side as f64;
        Self { c: side as f64 / 2.0, r2: r * r }
    }

    fn contains(&self, x: usize, y: usize) -> bool {
        let dx = x as f64 + 0.5 - self.c;
        let dy = y as f64 + 0.5 - self.c;
        dx * dx + dy * dy <= self.r2
    }
}

fn place_lesions(rng: &mut Xoshiro256StarStar, disc: &Disc, side: usize, count: usize) -> Vec<(usize, usize)> {
    let s = (side / 16).max(1);
    let mut placed: Vec<(usize, usize)> = Vec::with_capacity(count);
    while placed.len() < count {
        let x = rng.below((side - s + 1) as u64) as usize;
        let y = rng.below((side - s + 1) as u64) as usize;
        let (x1, y1) = (x + s - 1, y + s - 1);
        let inside = [(x, y), (x1, y), (x, y1), (x1, y1)].iter().all(|&(px, py)| disc.contains(px, py));
        let clear = placed.iter().all(|&(ox, oy)| x >= ox + s || ox >= x + s || y >= oy + s || oy >= y + s);
        if inside && clear {
            placed.push((x, y));
        }
    }
    placed
}

fn render(grade: Grade, cfg: &SynthConfig, seed: u64, id_code: String) -> SynthSample {
    let side = cfg.side;
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let disc = Disc::new(side);
    let lesions = place_lesions(&mut rng, &disc, side, grade.index());
    let s = (side / 16).max(1);
    let base = 40 + 40 * grade.value();
    let dark = base - LESION_DEPTH;
    let in_lesion = |x: usize, y: usize| lesions.iter().any(|&(lx, ly)| x >= lx && x < lx + s && y >= ly && y < ly + s);

    let mut pixels = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let v = if !disc.contains(x, y) {
                0
            } else if in_lesion(x, y) {
                dark
            } else {
                base
            };
            pixels.push([v; 3]);
        }
    }
    if cfg.noise_sd > 0.0 {
        for px in &mut pixels {
            for c in px.iter_mut() {
                let v = *c as f64 + cfg.noise_sd * rng.normal();
                *c = v.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let image = ImageRgb8::new(side, side, pixels).expect("side >= 16");
    SynthSample { id_code, grade, image, lesions }
}

/// Grade-major synthetic set with ids `synth_<grade>_<index>`.
///
/// Each image draws from its own generator, seeded from `cfg.seed` and the
/// image's position, so generation order does not affect the pixels.
pub fn synth_samples(cfg: &SynthConfig) -> Result<Vec<SynthSample>, DataError> {
    cfg.validate()?;
    let mut master = SplitMix64::new(cfg.seed);
    let jobs: Vec<(Grade, usize, u64)> = Grade::all()
        .flat_map(|g| (0..cfg.n_per_class).map(move |i| (g, i)))
        .map(|(g, i)| (g, i, master.next_u64()))
        .collect();
    debug_assert_eq!(jobs.len(), NUM_GRADES * cfg.n_per_class);
    Ok(jobs
        .into_par_iter()
        .map(|(g, i, seed)| render(g, cfg, seed, format!("synth_{g}_{i:04}")))
        .collect())
}

pub fn synth_dataset(
    n_per_class: usize,
    side: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<Vec<(ImageRgb8, Grade)>, DataError> {
    let cfg = SynthConfig { n_per_class, side, noise_sd, seed };
    Ok(synth_samples(&cfg)?.into_iter().map(|s| (s.image, s.grade)).collect())
}

/// Writes `<dir>/images/<id>.png` and `<dir>/manifest.csv`.
pub fn write_synth_dataset(cfg: &SynthConfig, dir: &Path) -> Result<Manifest, DataError> {
    let samples = synth_samples(cfg)?;
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| DataError::io(&images, e))?;
    samples
        .par_iter()
        .try_for_each(|s| save_png(&s.image, &images.join(format!("{}.png", s.id_code))))?;
    let mut manifest = Manifest::new(
        samples
            .iter()
            .map(|s| ManifestEntry { id_code: s.id_code.clone(), diagnosis: s.grade })
            .collect(),
    );
    manifest.write(&dir.join("manifest.csv"))?;
    manifest.source_dir = Some(images);
    Ok(manifest)
}
