use serde::{Deserialize, Serialize};

use super::{DataError, Manifest};
use crate::grading::NUM_GRADES;
use crate::rng::Xoshiro256StarStar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub val_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { val_fraction: 0.2, seed: 42, stratified: true }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(DataError::InvalidParams(format!(
                "val_fraction must be in (0, 1), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

fn val_count(count: usize, fraction: f64) -> usize {
    let n = (count as f64 * fraction).round() as usize;
    if count >= 2 {
        n.clamp(1, count - 1)
    } else {
        n.min(count)
    }
}

/// Split into (train, val). Both halves keep the manifest's original order.
///
/// Stratified: each grade is shuffled separately, grades processed 0..=4 with
/// one shared generator. Otherwise the whole manifest is shuffled at once.
pub fn stratified_split(m: &Manifest, spec: &SplitSpec) -> Result<(Manifest, Manifest), DataError> {
    spec.validate()?;
    let mut rng = Xoshiro256StarStar::seed_from_u64(spec.seed);
    let mut in_val = vec![false; m.len()];

    let groups: Vec<Vec<usize>> = if spec.stratified {
        let mut g = vec![Vec::new(); NUM_GRADES];
        for (i, e) in m.entries.iter().enumerate() {
            g[e.diagnosis.index()].push(i);
        }
        if let Some(empty) = g.iter().position(Vec::is_empty) {
            return Err(DataError::EmptyClass(empty as u8));
        }
        g
    } else {
        vec![(0..m.len()).collect()]
    };

    for mut idx in groups {
        rng.shuffle(&mut idx);
        for &i in &idx[..val_count(idx.len(), spec.val_fraction)] {
            in_val[i] = true;
        }
    }

    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (e, &v) in m.entries.iter().zip(&in_val) {
        if v { &mut val } else { &mut train }.push(e.clone());
    }
    let wrap = |entries| Manifest { entries, source_dir: m.source_dir.clone() };
    Ok((wrap(train), wrap(val)))
}
