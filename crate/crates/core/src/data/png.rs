use std::path::Path;

use image::{DynamicImage, ImageReader, RgbImage};

use super::DataError;
use crate::imgproc::ImageRgb8;

/// Decode an 8-bit PNG. Gray is promoted to RGB by replication; alpha is dropped.
pub fn load_png(path: &Path) -> Result<ImageRgb8, DataError> {
    let reader = ImageReader::open(path)
        .map_err(|e| DataError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| DataError::io(path, e))?;
    let decoded = reader
        .decode()
        .map_err(|source| DataError::Image { path: path.to_path_buf(), source })?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let pixels: Vec<[u8; 3]> = match decoded {
        DynamicImage::ImageLuma8(img) => img.pixels().map(|p| [p[0]; 3]).collect(),
        DynamicImage::ImageLumaA8(img) => img.pixels().map(|p| [p[0]; 3]).collect(),
        DynamicImage::ImageRgb8(img) => img.pixels().map(|p| p.0).collect(),
        DynamicImage::ImageRgba8(img) => img.pixels().map(|p| [p[0], p[1], p[2]]).collect(),
        other => {
            return Err(DataError::UnsupportedDepth {
                path: path.to_path_buf(),
                format: format!("{:?}", other.color()),
            })
        }
    };
    Ok(ImageRgb8::new(w, h, pixels)?)
}

/// Encode as 8-bit RGB PNG.
pub fn save_png(img: &ImageRgb8, path: &Path) -> Result<(), DataError> {
    let raw: Vec<u8> = img.pixels().iter().flatten().copied().collect();
    let buf = RgbImage::from_raw(img.width() as u32, img.height() as u32, raw)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| DataError::Image { path: path.to_path_buf(), source })
}

/// Encode a single-channel image as 8-bit gray PNG.
pub fn save_gray_png(img: &crate::imgproc::Image8, path: &Path) -> Result<(), DataError> {
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| DataError::Image { path: path.to_path_buf(), source })
}
