//! Dense containers shared by every other module: row-major matrices,
//! images with values in `[0, 1]`, and feature sets.
//!
//! All arithmetic is `f64`; file payloads are narrowed on write (see [`io`]).

pub mod io;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} values, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Returns a copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }
}

/// Height, width and channel count of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }
}

/// An image with 1 or 3 channels stored row-major as `(row, col, channel)`.
///
/// Every value lies in `[0, 1]`. Constructors clamp their input, so callers
/// may hand over unconstrained optimizer iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    shape: ImageShape,
    data: Vec<f64>,
}

impl ImageGrid {
    /// Builds an image, clamping every value into `[0, 1]` (NaN maps to 0).
    pub fn new(height: usize, width: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        let shape = ImageShape::new(height, width, channels);
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "image {height}x{width}x{channels} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Ok(Self { shape, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.shape.index(row, col, channel)]
    }

    /// Copies the window `[top, top + height) x [left, left + width)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<ImageGrid> {
        if top + height > self.height() || left + width > self.width() {
            return Err(Error::Shape(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds image {}x{}",
                self.height(),
                self.width()
            )));
        }
        let c = self.channels();
        let mut data = Vec::with_capacity(height * width * c);
        for r in top..top + height {
            let start = self.shape.index(r, left, 0);
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Ok(ImageGrid {
            shape: ImageShape::new(height, width, c),
            data,
        })
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// A set of `N` feature vectors of dimension `D`, optionally tagged with the
/// image coordinate `(row, col)` each feature was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    features: Matrix,
    origins: Option<Vec<(usize, usize)>>,
}

impl FeatureSet {
    pub fn new(features: Matrix) -> Self {
        Self {
            features,
            origins: None,
        }
    }

    pub fn with_origins(features: Matrix, origins: Vec<(usize, usize)>) -> Result<Self> {
        if origins.len() != features.rows() {
            return Err(Error::Shape(format!(
                "{} origins for {} features",
                origins.len(),
                features.rows()
            )));
        }
        Ok(Self {
            features,
            origins: Some(origins),
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Ok(Self::new(Matrix::from_rows(rows)?))
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    #[inline]
    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn origins(&self) -> Option<&[(usize, usize)]> {
        self.origins.as_deref()
    }

    /// Keeps the features at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> FeatureSet {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.feature(i));
        }
        FeatureSet {
            features: Matrix {
                rows: indices.len(),
                cols: d,
                data,
            },
            origins: self
                .origins
                .as_ref()
                .map(|o| indices.iter().map(|&i| o[i]).collect()),
        }
    }

    /// Returns a copy whose features are all multiplied by `c`.
    pub fn scaled(&self, c: f64) -> FeatureSet {
        FeatureSet {
            features: self.features.scaled(c),
            origins: self.origins.clone(),
        }
    }
}
