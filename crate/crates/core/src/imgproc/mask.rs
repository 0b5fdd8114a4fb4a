use super::{quantize, ImageRgb8};

/// Integer luma `round(0.299 r + 0.587 g + 0.114 b)`.
#[inline]
pub fn luma(p: [u8; 3]) -> u8 {
    quantize(0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
}

/// Crop to the tight bounding box of pixels whose luma exceeds `threshold`.
///
/// An image with no such pixel is returned unchanged.
pub fn mask_background(img: &ImageRgb8, threshold: u8) -> ImageRgb8 {
    let (w, h) = (img.width(), img.height());
    let mut min_x = usize::MAX;
    let mut max_x = 0;
    let mut min_y = usize::MAX;
    let mut max_y = 0;
    for (y, row) in img.pixels().chunks_exact(w).enumerate() {
        let first = row.iter().position(|&p| luma(p) > threshold);
        let Some(first) = first else { continue };
        let last = row.iter().rposition(|&p| luma(p) > threshold).unwrap_or(first);
        min_x = min_x.min(first);
        max_x = max_x.max(last);
        min_y = min_y.min(y);
        max_y = y;
    }
    if min_x == usize::MAX {
        return img.clone();
    }
    debug_assert!(max_x < w && max_y < h);
    img.crop(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1)
}
