//! Training data and the affine maps between raw and model units.

use serde::{Deserialize, Serialize};

use crate::grid::{within_bounds, Bounds};
use crate::{Error, Result};

/// Smallest standard deviation a [`Standardizer`] will divide by.
pub const STD_FLOOR: f64 = 1e-12;

/// Observed `(input, target)` pairs inside a declared domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    bounds: Vec<Bounds>,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(bounds: Vec<Bounds>, inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InvalidData("a dataset needs at least one pair".into()));
        }
        if inputs.len() != targets.len() {
            return Err(Error::InvalidData(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let mut data = Dataset {
            bounds,
            inputs: Vec::with_capacity(inputs.len()),
            targets: Vec::with_capacity(targets.len()),
        };
        for (x, y) in inputs.into_iter().zip(targets) {
            data.append(x, y)?;
        }
        Ok(data)
    }

    /// Adds one observation. Earlier entries are never touched.
    pub fn append(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.bounds.len() {
            return Err(Error::DimensionMismatch {
                expected: self.bounds.len(),
                actual: x.len(),
            });
        }
        if !within_bounds(&self.bounds, &x) {
            return Err(Error::OutOfBounds(x));
        }
        if !y.is_finite() {
            return Err(Error::InvalidData(format!("non-finite target {y}")));
        }
        self.inputs.push(x);
        self.targets.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[Bounds] {
        &self.bounds
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn last(&self) -> Option<(&[f64], f64)> {
        let i = self.len().checked_sub(1)?;
        Some((&self.inputs[i], self.targets[i]))
    }
}

/// Per-dimension affine maps used to present data to the surrogates in
/// O(1) units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: f64,
    pub target_std: f64,
}

fn moments(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt().max(STD_FLOOR))
}

impl Standardizer {
    /// Population moments of both inputs and targets.
    pub fn fit(data: &Dataset) -> Self {
        let (input_mean, input_std) = (0..data.dim())
            .map(|k| moments(data.inputs.iter().map(move |x| x[k])))
            .unzip();
        let (target_mean, target_std) = moments(data.targets.iter().copied());
        Standardizer {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    /// Inputs mapped onto `[-1, 1]` through the domain bounds; targets
    /// z-scored with the current data. This is what the surrogates use, so the
    /// candidate grid keeps one representation for the whole campaign.
    pub fn for_domain(data: &Dataset) -> Self {
        let (input_mean, input_std) = data
            .bounds
            .iter()
            .map(|&(low, high)| (0.5 * (low + high), (0.5 * (high - low)).max(STD_FLOOR)))
            .unzip();
        let (target_mean, target_std) = moments(data.targets.iter().copied());
        Standardizer {
            input_mean,
            input_std,
            target_mean,
            target_std,
        }
    }

    pub fn standardize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }

    pub fn unstandardize_input(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(&v, (&m, &s))| v * s + m)
            .collect()
    }

    pub fn standardize_target(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn unstandardize_target(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    /// Maps a variance in standardized target units back to raw units.
    pub fn unstandardize_variance(&self, v: f64) -> f64 {
        v * self.target_std * self.target_std
    }

    pub fn standardize_inputs(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.standardize_input(x)).collect()
    }

    pub fn standardize_targets(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.standardize_target(y)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(targets: &[f64]) -> Dataset {
        let n = targets.len();
        let inputs = (0..n).map(|i| vec![i as f64]).collect();
        Dataset::new(vec![(0.0, n as f64)], inputs, targets.to_vec()).unwrap()
    }

    #[test]
    fn zero_variance_targets_hit_the_floor() {
        let s = Standardizer::fit(&line(&[1.0, 1.0, 1.0]));
        assert_eq!(s.target_mean, 1.0);
        assert_eq!(s.target_std, STD_FLOOR);
    }

    #[test]
    fn two_point_population_moments() {
        let s = Standardizer::fit(&line(&[0.0, 2.0]));
        assert_eq!(s.target_mean, 1.0);
        assert_eq!(s.target_std, 1.0);
    }

    #[test]
    fn input_moments() {
        let data = Dataset::new(vec![(0.0, 10.0)], vec![vec![0.0], vec![10.0]], vec![1.0, 2.0])
            .unwrap();
        let s = Standardizer::fit(&data);
        assert_eq!(s.input_mean, vec![5.0]);
        assert_eq!(s.input_std, vec![5.0]);
        // Domain scaling agrees here since the data spans the bounds.
        let d = Standardizer::for_domain(&data);
        assert_eq!(d.input_mean, vec![5.0]);
        assert_eq!(d.input_std, vec![5.0]);
        assert_eq!(d.standardize_input(&[0.0]), vec![-1.0]);
        assert_eq!(d.standardize_input(&[10.0]), vec![1.0]);
    }

    #[test]
    fn append_grows_by_one() {
        let mut data = line(&[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(data.len(), 4);
        data.append(vec![2.5], 7.0).unwrap();
        assert_eq!(data.len(), 5);
        assert_eq!(data.last(), Some((&[2.5][..], 7.0)));
        assert_eq!(&data.targets()[..4], &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn append_rejects_bad_pairs() {
        let mut data = line(&[0.0, 1.0]);
        assert!(data.append(vec![0.5], f64::NAN).is_err());
        assert!(data.append(vec![0.5], f64::INFINITY).is_err());
        assert!(matches!(data.append(vec![3.0], 1.0), Err(Error::OutOfBounds(_))));
        assert!(data.append(vec![0.5, 0.5], 1.0).is_err());
        assert_eq!(data.len(), 2);
    }

    #[test]
    fn construction_invariants() {
        assert!(Dataset::new(vec![(0.0, 1.0)], vec![], vec![]).is_err());
        assert!(Dataset::new(vec![(0.0, 1.0)], vec![vec![0.5]], vec![]).is_err());
        assert!(Dataset::new(vec![(0.0, 1.0)], vec![vec![f64::NAN]], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn standardize_round_trip(
            values in prop::collection::vec(-1e6f64..1e6, 2..20),
            probe in -1e6f64..1e6,
        ) {
            let data = Dataset::new(
                vec![(-1e6, 1e6)],
                values.iter().map(|&v| vec![v]).collect(),
                values.clone(),
            ).unwrap();
            for s in [Standardizer::fit(&data), Standardizer::for_domain(&data)] {
                // Relative to the magnitudes entering the affine map.
                let back = s.unstandardize_target(s.standardize_target(probe));
                let scale = probe.abs() + s.target_mean.abs() + s.target_std;
                prop_assert!((back - probe).abs() <= 1e-12 * scale);
                let xb = s.unstandardize_input(&s.standardize_input(&[probe]))[0];
                let scale = probe.abs() + s.input_mean[0].abs() + s.input_std[0];
                prop_assert!((xb - probe).abs() <= 1e-12 * scale);
            }
        }
    }
}
