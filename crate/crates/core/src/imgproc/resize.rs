use super::{quantize, Image8, ImgError};

/// One output coordinate's source neighbours and blend weight.
#[derive(Debug, Clone, Copy)]
struct Tap {
    lo: usize,
    hi: usize,
    frac: f64,
}

fn taps(src: usize, dst: usize) -> Vec<Tap> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            Tap { lo, hi: (lo + 1).min(src - 1), frac: s - lo as f64 }
        })
        .collect()
}

/// Bilinear resize to `side × side` with half-pixel centres and clamped
/// source coordinates.
pub fn resize_bilinear(img: &Image8, side: usize) -> Result<Image8, ImgError> {
    if side == 0 {
        return Err(ImgError::BadSide);
    }
    let w = img.width();
    let xs = taps(w, side);
    let ys = taps(img.height(), side);
    let px = img.pixels();
    let mut out = Vec::with_capacity(side * side);
    for ty in &ys {
        let top = &px[ty.lo * w..(ty.lo + 1) * w];
        let bottom = &px[ty.hi * w..(ty.hi + 1) * w];
        for tx in &xs {
            let a = (1.0 - tx.frac) * top[tx.lo] as f64 + tx.frac * top[tx.hi] as f64;
            let b = (1.0 - tx.frac) * bottom[tx.lo] as f64 + tx.frac * bottom[tx.hi] as f64;
            out.push(quantize((1.0 - ty.frac) * a + ty.frac * b));
        }
    }
    Image8::new(side, side, out)
}
