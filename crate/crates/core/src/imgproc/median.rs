use super::{Image8, ImgError};

/// Median of the `kernel × kernel` window around each pixel, borders by edge
/// replication. `kernel` must be odd.
pub fn median_filter(img: &Image8, kernel: usize) -> Result<Image8, ImgError> {
    if kernel == 0 || kernel % 2 == 0 {
        return Err(ImgError::EvenKernel(kernel));
    }
    if kernel == 1 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let r = (kernel / 2) as isize;
    let mid = kernel * kernel / 2;
    let mut window = Vec::with_capacity(kernel * kernel);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            window.clear();
            for dy in -r..=r {
                for dx in -r..=r {
                    window.push(img.get_clamped(x + dx, y + dy));
                }
            }
            let (_, m, _) = window.select_nth_unstable(mid);
            out.push(*m);
        }
    }
    Image8::new(w, h, out)
}
