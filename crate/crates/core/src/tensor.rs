use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Channel, height and width of an [`ImageTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    /// Validates the grid: at least one channel, even spatial sides of at
    /// least two so the spectrum has an exact center bin.
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        let fail = |reason| Error::InvalidShape {
            channels,
            height,
            width,
            reason,
        };
        if channels == 0 {
            return Err(fail("need at least one channel"));
        }
        if height < 2 || width < 2 {
            return Err(fail("height and width must be at least 2"));
        }
        if height % 2 != 0 || width % 2 != 0 {
            return Err(fail("height and width must be even"));
        }
        Ok(Shape {
            channels,
            height,
            width,
        })
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Ambient dimension C·H·W.
    pub fn dim(&self) -> usize {
        self.channels * self.plane()
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A C×H×W sample stored row-major in (c, i, j) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    shape: Shape,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for {shape}", shape.dim()),
                actual: format!("{} values", data.len()),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(ImageTensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        ImageTensor {
            shape,
            data: vec![0.0; shape.dim()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        ImageTensor {
            shape,
            data: vec![value; shape.dim()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.plane();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.shape.plane();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[(c * self.shape.height + i) * self.shape.width + j]
    }

    pub fn ensure_same_shape(&self, other: &ImageTensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.to_string(),
                actual: other.shape.to_string(),
            });
        }
        Ok(())
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    pub fn add(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(ImageTensor {
            shape: self.shape,
            data,
        })
    }

    pub fn sub(&self, other: &ImageTensor) -> Result<ImageTensor> {
        self.ensure_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(ImageTensor {
            shape: self.shape,
            data,
        })
    }

    pub fn scaled(&self, factor: f64) -> ImageTensor {
        ImageTensor {
            shape: self.shape,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
