use ndarray::Array2;

use crate::error::{Error, Result};

/// A square `side × side` grid of finite samples on `[0,1]²`.
///
/// Row `i`, column `k` samples the pixel centred at
/// `((k + ½) / side, (i + ½) / side)`; rows grow downwards along `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array2<f64>,
}

impl Image {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        let (rows, cols) = pixels.dim();
        if rows != cols {
            return Err(Error::input(format!(
                "image must be square, got {rows}×{cols}"
            )));
        }
        if rows < 2 || !rows.is_power_of_two() {
            return Err(Error::input(format!(
                "image side must be a power of two ≥ 2, got {rows}"
            )));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite pixel value {v}")));
        }
        Ok(Image { pixels })
    }

    pub fn zeros(side: usize) -> Result<Self> {
        Self::new(Array2::zeros((side, side)))
    }

    pub fn from_fn(side: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((side, side), |(r, c)| f(r, c)))
    }

    pub fn from_vec(side: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != side * side {
            return Err(Error::input(format!(
                "expected {} values for side {side}, got {}",
                side * side,
                values.len()
            )));
        }
        let pixels = Array2::from_shape_vec((side, side), values)
            .map_err(|e| Error::input(e.to_string()))?;
        Self::new(pixels)
    }

    pub fn side(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[[row, col]]
    }

    /// Sum of squared pixel values.
    pub fn norm_sq(&self) -> f64 {
        self.pixels.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.pixels.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, factor: f64) -> Image {
        Image {
            pixels: &self.pixels * factor,
        }
    }

    /// Largest absolute pixel difference. Panics on side mismatch.
    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.side(), other.side(), "side mismatch");
        self.pixels
            .iter()
            .zip(other.pixels.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
