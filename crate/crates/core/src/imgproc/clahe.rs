use super::{quantize, Image8, ImgError};

const BINS: usize = 256;

/// CLAHE result together with the per-tile lookup tables it was built from.
#[derive(Debug, Clone)]
pub struct ClaheOutput {
    pub image: Image8,
    /// Row-major `tiles × tiles` grid of 256-entry intensity mappings.
    pub mappings: Vec<[u8; BINS]>,
    pub tiles: usize,
    pub tile_width: usize,
    pub tile_height: usize,
}

impl ClaheOutput {
    pub fn mapping(&self, tile_row: usize, tile_col: usize) -> &[u8; BINS] {
        &self.mappings[tile_row * self.tiles + tile_col]
    }
}

/// Contrast limited adaptive histogram equalization over a `tiles × tiles` grid.
///
/// `clip` is relative: a bin is capped at `clip × tile_area / 256` and the
/// clipped mass is spread evenly over all bins in one pass. `f64::INFINITY`
/// disables clipping.
pub fn clahe(img: &Image8, tiles: usize, clip: f64) -> Result<Image8, ImgError> {
    clahe_with_mappings(img, tiles, clip).map(|o| o.image)
}

pub fn clahe_with_mappings(img: &Image8, tiles: usize, clip: f64) -> Result<ClaheOutput, ImgError> {
    if tiles == 0 {
        return Err(ImgError::BadTiles(tiles));
    }
    if !(clip > 0.0) {
        return Err(ImgError::BadClip(clip));
    }
    let (w, h) = (img.width(), img.height());
    if w < tiles || h < tiles {
        return Err(ImgError::SmallerThanGrid { width: w, height: h, tiles });
    }

    // Right/bottom padding by replication; tiles cover the padded frame exactly.
    let tile_w = w.div_ceil(tiles);
    let tile_h = h.div_ceil(tiles);
    let area = (tile_w * tile_h) as f64;
    let ceiling = clip * area / BINS as f64;

    let mut mappings = Vec::with_capacity(tiles * tiles);
    let mut hist = [0u32; BINS];
    for ty in 0..tiles {
        for tx in 0..tiles {
            hist.fill(0);
            for py in ty * tile_h..(ty + 1) * tile_h {
                let sy = py.min(h - 1);
                let row = &img.pixels()[sy * w..(sy + 1) * w];
                for px in tx * tile_w..(tx + 1) * tile_w {
                    hist[row[px.min(w - 1)] as usize] += 1;
                }
            }
            mappings.push(tile_mapping(&hist, ceiling, area));
        }
    }

    let cols: Vec<(usize, usize, f64)> = (0..w).map(|x| blend_axis(x, tile_w, tiles)).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        let (r0, r1, wy) = blend_axis(y, tile_h, tiles);
        for (x, &(c0, c1, wx)) in cols.iter().enumerate() {
            let v = img.pixels()[y * w + x] as usize;
            let m00 = mappings[r0 * tiles + c0][v] as f64;
            let m01 = mappings[r0 * tiles + c1][v] as f64;
            let m10 = mappings[r1 * tiles + c0][v] as f64;
            let m11 = mappings[r1 * tiles + c1][v] as f64;
            let top = (1.0 - wx) * m00 + wx * m01;
            let bottom = (1.0 - wx) * m10 + wx * m11;
            out.push(quantize((1.0 - wy) * top + wy * bottom));
        }
    }

    Ok(ClaheOutput {
        image: Image8::new(w, h, out)?,
        mappings,
        tiles,
        tile_width: tile_w,
        tile_height: tile_h,
    })
}

/// Clip, redistribute, integrate. The result is monotone because every
/// redistributed bin is non-negative.
fn tile_mapping(hist: &[u32; BINS], ceiling: f64, area: f64) -> [u8; BINS] {
    let mut clipped = [0f64; BINS];
    let mut excess = 0.0;
    for (c, &count) in clipped.iter_mut().zip(hist) {
        let count = count as f64;
        if count > ceiling {
            excess += count - ceiling;
            *c = ceiling;
        } else {
            *c = count;
        }
    }
    let share = excess / BINS as f64;
    let mut mapping = [0u8; BINS];
    let mut cum = 0.0;
    for (m, c) in mapping.iter_mut().zip(clipped) {
        cum += c + share;
        *m = quantize(255.0 * (cum / area));
    }
    mapping
}

/// Neighbouring tile indices and the weight of the second one along one axis.
/// Tile `i` is centred at tile-space coordinate `i`; outside the outermost
/// centres the coordinate is clamped.
#[inline]
fn blend_axis(pos: usize, tile: usize, tiles: usize) -> (usize, usize, f64) {
    let g = ((pos as f64 + 0.5) / tile as f64 - 0.5).clamp(0.0, (tiles - 1) as f64);
    let i0 = g.floor() as usize;
    let i1 = (i0 + 1).min(tiles - 1);
    (i0, i1, g - i0 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_dev(px: &[u8]) -> f64 {
        let n = px.len() as f64;
        let mean = px.iter().map(|&v| v as f64).sum::<f64>() / n;
        (px.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    }

    #[test]
    fn rejects_bad_arguments() {
        let img = Image8::filled(4, 4, 0).unwrap();
        assert!(matches!(clahe(&img, 0, 2.0), Err(ImgError::BadTiles(0))));
        assert!(matches!(clahe(&img, 2, 0.0), Err(ImgError::BadClip(_))));
        assert!(matches!(clahe(&img, 2, f64::NAN), Err(ImgError::BadClip(_))));
        assert!(matches!(clahe(&img, 5, 2.0), Err(ImgError::SmallerThanGrid { .. })));
    }

    #[test]
    fn constant_input_stays_constant() {
        for v in [0u8, 1, 37, 128, 254, 255] {
            let img = Image8::filled(61, 45, v).unwrap();
            let out = clahe(&img, 8, 2.0).unwrap();
            let first = out.pixels()[0];
            assert!(out.pixels().iter().all(|&p| p.abs_diff(first) <= 1));
        }
    }

    #[test]
    fn compressed_gradient_gains_contrast() {
        // diagonal ramp over [100, 140], period 41, so every tile sees the full range
        let img = Image8::from_fn(128, 96, |x, y| (100 + (x + y) % 41) as u8).unwrap();
        let out = clahe(&img, 8, 2.0).unwrap();
        assert!(std_dev(out.pixels()) > std_dev(img.pixels()));
    }

    #[test]
    fn mappings_are_monotone() {
        let img = Image8::from_fn(50, 33, |x, y| ((x * 7 + y * 13) % 256) as u8).unwrap();
        let out = clahe_with_mappings(&img, 4, 1.5).unwrap();
        assert_eq!(out.mappings.len(), 16);
        for m in &out.mappings {
            assert!(m.windows(2).all(|p| p[0] <= p[1]));
            assert_eq!(m[255], 255);
        }
    }

    #[test]
    fn blend_axis_clamps_outside_centres() {
        // tile width 10, 3 tiles: centres at pixel 4.5, 14.5, 24.5
        assert_eq!(blend_axis(0, 10, 3), (0, 1, 0.0));
        assert_eq!(blend_axis(29, 10, 3), (2, 2, 0.0));
        let (i0, i1, w) = blend_axis(9, 10, 3);
        assert_eq!((i0, i1), (0, 1));
        assert!((w - 0.45).abs() < 1e-12);
    }

    #[test]
    fn padding_uses_edge_replication() {
        // 9 wide with 2 tiles -> tile width 5, right tile holds cols 5..8 plus one replica of col 8.
        let img = Image8::from_fn(9, 4, |x, _| if x == 8 { 200 } else { 10 }).unwrap();
        let out = clahe_with_mappings(&img, 2, f64::INFINITY).unwrap();
        let right = out.mapping(0, 1);
        // right tile: 5x2 area = 10, value 200 present twice (col 8 + padding) per row.
        assert_eq!(right[10], 153); // 6/10 * 255
        assert_eq!(right[200], 255);
    }
}
