use std::io::{Read, Write};

use super::{Image8, ImgError};

pub const FUNDUS_SIDE: usize = 224;
pub const FUNDUS_CHANNELS: usize = 3;
/// Magic bytes of the raw tensor file format.
pub const FDT_MAGIC: &[u8; 4] = b"FDT1";

/// 3×224×224 network input, channel-major then row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundusTensor {
    values: Vec<f32>,
}

impl FundusTensor {
    pub const LEN: usize = FUNDUS_CHANNELS * FUNDUS_SIDE * FUNDUS_SIDE;

    pub fn from_values(values: Vec<f32>) -> Result<Self, ImgError> {
        if values.len() != Self::LEN {
            return Err(ImgError::TensorFormat(format!(
                "expected {} values, got {}",
                Self::LEN,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ImgError::TensorFormat(format!("value {v} outside [0, 1]")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = FUNDUS_SIDE * FUNDUS_SIDE;
        &self.values[c * plane..(c + 1) * plane]
    }

    /// Serialize as `FDT1` + u32 channels + u32 height + u32 width (LE) + f32 LE values.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ImgError> {
        let mut buf = Vec::with_capacity(16 + 4 * self.values.len());
        buf.extend_from_slice(FDT_MAGIC);
        for dim in [FUNDUS_CHANNELS, FUNDUS_SIDE, FUNDUS_SIDE] {
            buf.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ImgError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ImgError> {
        if bytes.len() < 16 || &bytes[0..4] != FDT_MAGIC {
            return Err(ImgError::TensorFormat("missing FDT1 header".into()));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (c, h, w) = (dim(4), dim(8), dim(12));
        if (c, h, w) != (FUNDUS_CHANNELS, FUNDUS_SIDE, FUNDUS_SIDE) {
            return Err(ImgError::TensorFormat(format!("unexpected shape {c}x{h}x{w}")));
        }
        let body = &bytes[16..];
        if body.len() != 4 * Self::LEN {
            return Err(ImgError::TensorFormat(format!(
                "body has {} bytes, expected {}",
                body.len(),
                4 * Self::LEN
            )));
        }
        let values = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Self::from_values(values)
    }
}

/// Replicate a 224×224 grayscale image into three channels scaled by 1/255.
pub fn replicate_channels(img: &Image8) -> Result<FundusTensor, ImgError> {
    if img.width() != FUNDUS_SIDE || img.height() != FUNDUS_SIDE {
        return Err(ImgError::WrongSize {
            expected: FUNDUS_SIDE,
            width: img.width(),
            height: img.height(),
        });
    }
    let plane: Vec<f32> = img.pixels().iter().map(|&v| v as f32 / 255.0).collect();
    let mut values = Vec::with_capacity(FundusTensor::LEN);
    for _ in 0..FUNDUS_CHANNELS {
        values.extend_from_slice(&plane);
    }
    Ok(FundusTensor { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints() {
        let white = replicate_channels(&Image8::filled(224, 224, 255).unwrap()).unwrap();
        assert!(white.values().iter().all(|&v| v == 1.0));
        let black = replicate_channels(&Image8::filled(224, 224, 0).unwrap()).unwrap();
        assert!(black.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_size_rejected() {
        let img = Image8::filled(223, 224, 0).unwrap();
        assert!(matches!(replicate_channels(&img), Err(ImgError::WrongSize { .. })));
    }

    #[test]
    fn file_roundtrip_and_header() {
        let img = Image8::from_fn(224, 224, |x, y| ((x + 3 * y) % 256) as u8).unwrap();
        let t = replicate_channels(&img).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[0..4], b"FDT1");
        assert_eq!(&bytes[4..16], &[3, 0, 0, 0, 224, 0, 0, 0, 224, 0, 0, 0]);
        assert_eq!(bytes.len(), 16 + 4 * FundusTensor::LEN);
        assert_eq!(FundusTensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn truncated_file_rejected() {
        let t = replicate_channels(&Image8::filled(224, 224, 9).unwrap()).unwrap();
        let bytes = t.to_bytes();
        assert!(FundusTensor::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(FundusTensor::from_bytes(b"FDT2").is_err());
    }
}
