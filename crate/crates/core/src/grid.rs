//! Dense rectangular candidate grids.

use crate::{Error, Result};

/// Per-dimension `(low, high)` pair.
pub type Bounds = (f64, f64);

/// Every candidate location of a campaign, laid out row-major (the last
/// dimension varies fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationGrid {
    bounds: Vec<Bounds>,
    resolution: Vec<usize>,
    points: Vec<Vec<f64>>,
}

/// `n` evenly spaced values from `low` to `high`, both endpoints included.
pub fn linspace(low: f64, high: f64, n: usize) -> Vec<f64> {
    let step = (high - low) / (n - 1) as f64;
    (0..n)
        .map(|i| if i + 1 == n { high } else { low + step * i as f64 })
        .collect()
}

impl EvaluationGrid {
    pub fn new(bounds: &[Bounds], resolution: &[usize]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidGrid("at least one dimension is required".into()));
        }
        if bounds.len() != resolution.len() {
            return Err(Error::InvalidGrid(format!(
                "{} bounds but {} resolutions",
                bounds.len(),
                resolution.len()
            )));
        }
        for (dim, (&(low, high), &n)) in bounds.iter().zip(resolution).enumerate() {
            if !low.is_finite() || !high.is_finite() {
                return Err(Error::InvalidGrid(format!("dimension {dim}: non-finite bounds")));
            }
            if low >= high {
                return Err(Error::InvalidGrid(format!(
                    "dimension {dim}: low {low} must be below high {high}"
                )));
            }
            if n < 2 {
                return Err(Error::InvalidGrid(format!(
                    "dimension {dim}: resolution {n} is below 2"
                )));
            }
        }

        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .zip(resolution)
            .map(|(&(low, high), &n)| linspace(low, high, n))
            .collect();
        let total: usize = resolution.iter().product();
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut point = vec![0.0; axes.len()];
            for dim in (0..axes.len()).rev() {
                let n = resolution[dim];
                point[dim] = axes[dim][rem % n];
                rem /= n;
            }
            points.push(point);
        }

        Ok(EvaluationGrid {
            bounds: bounds.to_vec(),
            resolution: resolution.to_vec(),
            points,
        })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, index: usize) -> &[f64] {
        &self.points[index]
    }

    /// Index of the grid point closest (per dimension) to `x`.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let mut flat = 0;
        for (dim, &value) in x.iter().enumerate() {
            let (low, high) = self.bounds[dim];
            let n = self.resolution[dim];
            let t = ((value - low) / (high - low) * (n - 1) as f64).round();
            let i = t.clamp(0.0, (n - 1) as f64) as usize;
            flat = flat * n + i;
        }
        flat
    }

    /// Whether `x` lies inside the bounds, allowing a relative slack of 1e-12.
    pub fn contains(&self, x: &[f64]) -> bool {
        within_bounds(&self.bounds, x)
    }
}

pub(crate) fn within_bounds(bounds: &[Bounds], x: &[f64]) -> bool {
    x.len() == bounds.len()
        && x.iter().zip(bounds).all(|(&v, &(low, high))| {
            let slack = 1e-12 * (high - low).abs().max(1.0);
            v.is_finite() && v >= low - slack && v <= high + slack
        })
}
