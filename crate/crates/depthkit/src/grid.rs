//! Dense row-major 2D containers and the masked depth map built on them.

use crate::error::{Error, Result};

/// Row-major H×W grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "grid data length {} does not match {}x{}",
                data.len(),
                height,
                width
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Iterate `(row, col, &value)` in row-major order.
    pub fn iter_indexed(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .map(move |(i, v)| (i / w, i % w, v))
    }

    pub fn map<U: Clone>(&self, f: impl Fn(&T) -> U) -> Grid<U> {
        Grid {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl<T> std::ops::Index<(usize, usize)> for Grid<T> {
    type Output = T;

    #[inline]
    fn index(&self, (row, col): (usize, usize)) -> &T {
        &self.data[row * self.width + col]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Grid<T> {
    #[inline]
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        &mut self.data[row * self.width + col]
    }
}

/// Depth values in meters paired with a validity mask.
///
/// Statistics (median, metrics, losses) are computed over valid pixels only;
/// invalid pixels carry the sentinel value 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub values: Grid<f64>,
    pub valid: Grid<bool>,
}

impl DepthMap {
    pub fn new(values: Grid<f64>, valid: Grid<bool>) -> Result<Self> {
        if values.shape() != valid.shape() {
            return Err(Error::Shape(format!(
                "depth values {:?} vs mask {:?}",
                values.shape(),
                valid.shape()
            )));
        }
        Ok(Self { values, valid })
    }

    /// Fully valid map from raw values.
    pub fn from_values(values: Grid<f64>) -> Self {
        let valid = Grid::filled(values.height(), values.width(), true);
        Self { values, valid }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn height(&self) -> usize {
        self.values.height()
    }

    pub fn width(&self) -> usize {
        self.values.width()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.data().iter().filter(|v| **v).count()
    }

    /// Values at valid pixels, in row-major order.
    pub fn valid_values(&self) -> Vec<f64> {
        self.values
            .data()
            .iter()
            .zip(self.valid.data())
            .filter(|(_, m)| **m)
            .map(|(v, _)| *v)
            .collect()
    }

    /// Median of the valid values. Errors when no pixel is valid.
    pub fn median(&self) -> Result<f64> {
        median_of(&self.valid_values())
    }

    /// Number of valid pixels holding a non-positive value (diagnostic for
    /// compositions that may undershoot zero).
    pub fn count_nonpositive(&self) -> usize {
        self.values
            .data()
            .iter()
            .zip(self.valid.data())
            .filter(|(v, m)| **m && **v <= 0.0)
            .count()
    }
}

/// Median with the even-count rule: mean of the two middle values.
pub fn median_of(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Degenerate("median of an empty set".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}
