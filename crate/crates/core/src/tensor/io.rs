//! PNG and CXT file I/O.
//!
//! CXT layout (little-endian, no padding, no checksum):
//!
//! ```text
//! "CXT1" | u32 ndim | ndim x u32 dims | prod(dims) x f32 payload (row-major)
//! ```
//!
//! Rank-2 files are matrices. Rank-3 files are `H x W x C` grids: they load as
//! an [`ImageGrid`] when `C` is 1 or 3 and every value is in `[0, 1]`, and as a
//! [`FeatureMap`] otherwise, so that payloads are never rescaled or clamped.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{FeatureSet, ImageGrid, ImageShape, Matrix};
use crate::error::{Error, Result};

pub const CXT_MAGIC: &[u8; 4] = b"CXT1";

/// A rank-3 grid of arbitrary channel count and value range, e.g. a feature
/// map produced by an external network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub shape: ImageShape,
    pub data: Vec<f64>,
}

impl FeatureMap {
    /// One feature per grid cell, dimension = channel count.
    pub fn to_feature_set(&self) -> FeatureSet {
        grid_to_features(self.shape, &self.data)
    }
}

/// Anything a CXT file can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    Matrix(Matrix),
    Image(ImageGrid),
    FeatureMap(FeatureMap),
}

impl Tensor {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Tensor::Matrix(m) => vec![m.rows(), m.cols()],
            Tensor::Image(img) => {
                let s = img.shape();
                vec![s.height, s.width, s.channels]
            }
            Tensor::FeatureMap(f) => vec![f.shape.height, f.shape.width, f.shape.channels],
        }
    }

    pub fn payload(&self) -> &[f64] {
        match self {
            Tensor::Matrix(m) => m.data(),
            Tensor::Image(img) => img.data(),
            Tensor::FeatureMap(f) => &f.data,
        }
    }

    /// Interprets the tensor as a feature set: matrix rows are features; for
    /// grids every pixel is a feature whose dimension is the channel count.
    pub fn to_feature_set(&self) -> FeatureSet {
        match self {
            Tensor::Matrix(m) => FeatureSet::new(m.clone()),
            Tensor::Image(img) => grid_to_features(img.shape(), img.data()),
            Tensor::FeatureMap(f) => f.to_feature_set(),
        }
    }
}

fn grid_to_features(shape: ImageShape, data: &[f64]) -> FeatureSet {
    let n = shape.height * shape.width;
    let features = Matrix::from_vec(n, shape.channels, data.to_vec())
        .expect("grid payload length matches its shape");
    let origins = (0..shape.height)
        .flat_map(|r| (0..shape.width).map(move |c| (r, c)))
        .collect();
    FeatureSet::with_origins(features, origins).expect("one origin per pixel")
}

/// Reads an 8-bit grayscale or RGB PNG, scaling bytes by `1/255`.
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageGrid> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_png(&bytes)
}

/// [`load_png`] on an in-memory PNG stream.
pub fn decode_png(bytes: &[u8]) -> Result<ImageGrid> {
    let decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = decoder.read_info()?;
    let info = reader.info();
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedPng(format!(
            "bit depth {:?}; only 8-bit images are supported",
            info.bit_depth
        )));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::UnsupportedPng(format!(
                "color type {other:?}; only grayscale and RGB are supported"
            )))
        }
    };
    let (width, height) = (info.width as usize, info.height as usize);
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| {
        Error::UnsupportedPng("image too large to decode".to_string())
    })?];
    let frame = reader.next_frame(&mut buf)?;
    let row_bytes = width * channels;
    let mut data = Vec::with_capacity(height * row_bytes);
    for r in 0..height {
        let start = r * frame.line_size;
        data.extend(buf[start..start + row_bytes].iter().map(|&b| b as f64 / 255.0));
    }
    ImageGrid::new(height, width, channels, data)
}

/// Writes an image as an 8-bit PNG, quantizing with `round(v * 255)`.
pub fn save_png(image: &ImageGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(
        BufWriter::new(file),
        image.width() as u32,
        image.height() as u32,
    );
    encoder.set_color(if image.channels() == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    });
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    let bytes: Vec<u8> = image
        .data()
        .iter()
        .map(|&v| (v * 255.0).round() as u8)
        .collect();
    writer.write_image_data(&bytes)?;
    writer.finish()?;
    Ok(())
}

/// Decodes CXT bytes.
pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 4 || &bytes[..4] != CXT_MAGIC {
        return Err(Error::BadMagic);
    }
    let mut pos = 4;
    let read_u32 = |pos: &mut usize| -> Result<u32> {
        let end = *pos + 4;
        if end > bytes.len() {
            return Err(Error::Truncated {
                expected: end,
                found: bytes.len(),
            });
        }
        let v = u32::from_le_bytes(bytes[*pos..end].try_into().unwrap());
        *pos = end;
        Ok(v)
    };
    let ndim = read_u32(&mut pos)? as usize;
    if ndim != 2 && ndim != 3 {
        return Err(Error::UnsupportedRank(ndim));
    }
    let dims: Vec<u32> = (0..ndim)
        .map(|_| read_u32(&mut pos))
        .collect::<Result<_>>()?;
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .and_then(|c| c.checked_mul(4).map(|_| c))
        .ok_or_else(|| Error::DimOverflow(dims.clone()))?;
    let expected = pos + count * 4;
    if bytes.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let payload: Vec<f64> = bytes[pos..expected]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let dims: Vec<usize> = dims.iter().map(|&d| d as usize).collect();
    match dims[..] {
        [rows, cols] => Ok(Tensor::Matrix(Matrix::from_vec(rows, cols, payload)?)),
        [h, w, c] => {
            let in_range = payload.iter().all(|v| (0.0..=1.0).contains(v));
            if (c == 1 || c == 3) && in_range {
                Ok(Tensor::Image(ImageGrid::new(h, w, c, payload)?))
            } else {
                Ok(Tensor::FeatureMap(FeatureMap {
                    shape: ImageShape::new(h, w, c),
                    data: payload,
                }))
            }
        }
        _ => unreachable!("rank checked above"),
    }
}

/// Encodes dims and payload as CXT bytes; values are narrowed to `f32`.
pub fn encode_tensor(dims: &[usize], payload: &[f64]) -> Result<Vec<u8>> {
    let count: usize = dims.iter().product();
    if count != payload.len() {
        return Err(Error::Shape(format!(
            "dims {dims:?} need {count} values, got {}",
            payload.len()
        )));
    }
    let mut out = Vec::with_capacity(8 + 4 * dims.len() + 4 * count);
    out.extend_from_slice(CXT_MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        let d = u32::try_from(d)
            .map_err(|_| Error::DimOverflow(dims.iter().map(|&d| d as u32).collect()))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in payload {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_tensor(&bytes)
}

pub fn save_tensor(tensor: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_tensor(&tensor.dims(), tensor.payload())?;
    File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|e| Error::io(path, e))
}
