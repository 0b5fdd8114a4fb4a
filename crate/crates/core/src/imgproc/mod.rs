//! Fundus preprocessing.
//!
//! Five pure stages applied in a fixed order:
//!
//! 1. [`mask_background`] crops away the black surround.
//! 2. [`green_channel`] keeps the G plane.
//! 3. [`median_filter`] removes impulse noise.
//! 4. [`clahe`] equalizes contrast tile by tile.
//! 5. [`resize_bilinear`] + [`replicate_channels`] produce the 3×224×224
//!    network input.
//!
//! All intermediate stages work on 8-bit intensities; normalization to
//! `[0, 1]` only happens in the last step.

mod clahe;
mod mask;
mod median;
mod resize;
mod tensor;

pub use clahe::{clahe, clahe_with_mappings, ClaheOutput};
pub use mask::{luma, mask_background};
pub use median::median_filter;
pub use resize::resize_bilinear;
pub use tensor::{replicate_channels, FundusTensor, FDT_MAGIC, FUNDUS_CHANNELS, FUNDUS_SIDE};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ImgError {
    #[error("pixel buffer has {got} entries, expected {width}x{height}")]
    BadBuffer { width: usize, height: usize, got: usize },
    #[error("image dimensions must be at least 1x1")]
    Empty,
    #[error("median kernel must be odd and >= 1, got {0}")]
    EvenKernel(usize),
    #[error("clahe tile grid must be >= 1, got {0}")]
    BadTiles(usize),
    #[error("clahe clip factor must be positive, got {0}")]
    BadClip(f64),
    #[error("image {width}x{height} is smaller than the {tiles}x{tiles} tile grid")]
    SmallerThanGrid { width: usize, height: usize, tiles: usize },
    #[error("resize target side must be >= 1")]
    BadSide,
    #[error("expected a {expected}x{expected} image, got {width}x{height}")]
    WrongSize { expected: usize, width: usize, height: usize },
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("malformed tensor file: {0}")]
    TensorFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRgb8 {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl ImageRgb8 {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self, ImgError> {
        if width == 0 || height == 0 {
            return Err(ImgError::Empty);
        }
        if pixels.len() != width * height {
            return Err(ImgError::BadBuffer { width, height, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImgError> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self, ImgError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Copy of the rectangle `[x0, x0+w) × [y0, y0+h)`; caller guarantees bounds.
    pub(crate) fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        let mut pixels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            pixels.extend_from_slice(&self.pixels[row + x0..row + x0 + w]);
        }
        Self { width: w, height: h, pixels }
    }
}

/// Row-major single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image8 {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image8 {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImgError> {
        if width == 0 || height == 0 {
            return Err(ImgError::Empty);
        }
        if pixels.len() != width * height {
            return Err(ImgError::BadBuffer { width, height, got: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, v: u8) -> Result<Self, ImgError> {
        Self::new(width, height, vec![v; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self, ImgError> {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    /// Sample with coordinates clamped into the image (edge replication).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> u8 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.pixels[cy * self.width + cx]
    }
}

/// Extract the G plane. Dimensions are preserved.
pub fn green_channel(img: &ImageRgb8) -> Image8 {
    Image8 {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|p| p[1]).collect(),
    }
}

/// Parameters of the five-stage pipeline. Serialized as a flat JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub mask_threshold: u8,
    pub median_kernel: usize,
    pub clahe_tiles: usize,
    pub clahe_clip: f64,
    pub output_side: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mask_threshold: 10,
            median_kernel: 3,
            clahe_tiles: 8,
            clahe_clip: 2.0,
            output_side: FUNDUS_SIDE,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ImgError> {
        if self.median_kernel == 0 || self.median_kernel % 2 == 0 {
            return Err(ImgError::EvenKernel(self.median_kernel));
        }
        if self.clahe_tiles == 0 {
            return Err(ImgError::BadTiles(self.clahe_tiles));
        }
        if !(self.clahe_clip > 0.0) {
            return Err(ImgError::BadClip(self.clahe_clip));
        }
        if self.output_side != FUNDUS_SIDE {
            return Err(ImgError::Config(format!(
                "output_side must be {FUNDUS_SIDE}, got {}",
                self.output_side
            )));
        }
        Ok(())
    }
}

/// Every stage output, for inspection and previews.
#[derive(Debug, Clone)]
pub struct PipelineStages {
    pub masked: ImageRgb8,
    pub green: Image8,
    pub denoised: Image8,
    pub enhanced: Image8,
    pub resized: Image8,
    pub tensor: FundusTensor,
}

/// Run mask → green → median → CLAHE → resize → replicate.
pub fn preprocess(img: &ImageRgb8, cfg: &PipelineConfig) -> Result<FundusTensor, ImgError> {
    preprocess_stages(img, cfg).map(|s| s.tensor)
}

pub fn preprocess_stages(img: &ImageRgb8, cfg: &PipelineConfig) -> Result<PipelineStages, ImgError> {
    cfg.validate()?;
    let masked = mask_background(img, cfg.mask_threshold);
    let green = green_channel(&masked);
    let denoised = median_filter(&green, cfg.median_kernel)?;
    let enhanced = clahe(&denoised, cfg.clahe_tiles, cfg.clahe_clip)?;
    let resized = resize_bilinear(&enhanced, cfg.output_side)?;
    let tensor = replicate_channels(&resized)?;
    Ok(PipelineStages { masked, green, denoised, enhanced, resized, tensor })
}

/// Round half away from zero and saturate into `u8`.
#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}
