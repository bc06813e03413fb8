//! Per-draw predictions of an ensemble and the summaries built from them.
//!
//! All sums over ensemble members are taken in a canonical (sorted) order,
//! so permuting the draws leaves every summary bit-identical.

/// Predictive mean and acquisition uncertainty at each grid point, in raw
/// target units.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveSummary {
    pub mean: Vec<f64>,
    pub uncertainty: Vec<f64>,
}

/// How the ensemble members' uncertainties combine into `U(x*)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncertaintyRule {
    /// Spread of the member means plus the mean observation-noise variance.
    /// The closed form of averaging squared deviations of posterior
    /// predictive samples around the ensemble mean.
    MeansPlusNoise,
    /// Mean of the members' latent variances plus the spread of their means.
    LatentPlusSpread,
}

/// Predictions of `n_draws` ensemble members at `n_points` locations, in raw
/// target units. Storage is point-major: entry `(i, j)` is at
/// `i * n_draws + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawPredictions {
    pub n_points: usize,
    pub n_draws: usize,
    pub means: Vec<f64>,
    /// Variance of the latent function per member, zero for networks.
    pub latent_var: Vec<f64>,
    /// Observation-noise variance of each member.
    pub noise_var: Vec<f64>,
}

pub(crate) fn canonical_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}

impl DrawPredictions {
    pub fn point_means(&self, i: usize) -> &[f64] {
        &self.means[i * self.n_draws..(i + 1) * self.n_draws]
    }

    pub fn point_latent_var(&self, i: usize) -> &[f64] {
        &self.latent_var[i * self.n_draws..(i + 1) * self.n_draws]
    }

    /// Variance of the predictive density of member `j` at point `i`,
    /// observation noise included.
    pub fn predictive_var(&self, i: usize, j: usize) -> f64 {
        self.latent_var[i * self.n_draws + j] + self.noise_var[j]
    }

    pub fn summarize(&self, rule: UncertaintyRule) -> PredictiveSummary {
        let n = self.n_draws as f64;
        let mut scratch = vec![0.0; self.n_draws];
        let mean_noise = canonical_sum(&mut self.noise_var.clone()) / n;
        let mut mean = Vec::with_capacity(self.n_points);
        let mut uncertainty = Vec::with_capacity(self.n_points);
        for i in 0..self.n_points {
            let row = self.point_means(i);
            scratch.copy_from_slice(row);
            let mu = canonical_sum(&mut scratch) / n;
            for (s, m) in scratch.iter_mut().zip(row) {
                *s = (m - mu) * (m - mu);
            }
            let spread = canonical_sum(&mut scratch) / n;
            let u = match rule {
                UncertaintyRule::MeansPlusNoise => spread + mean_noise,
                UncertaintyRule::LatentPlusSpread => {
                    scratch.copy_from_slice(self.point_latent_var(i));
                    canonical_sum(&mut scratch) / n + spread
                }
            };
            mean.push(mu);
            uncertainty.push(u);
        }
        PredictiveSummary { mean, uncertainty }
    }
}
