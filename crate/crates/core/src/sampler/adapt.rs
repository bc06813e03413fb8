//! Dual-averaging step size adaptation.

/// Smallest and largest step sizes adaptation may produce.
pub const STEP_SIZE_RANGE: (f64, f64) = (1e-8, 1e2);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualAveragingSettings {
    pub gamma: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl Default for DualAveragingSettings {
    fn default() -> Self {
        DualAveragingSettings {
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
        }
    }
}

/// Drives `log(step)` so that the running acceptance statistic approaches
/// `target_accept`. The shrinkage point is the initial step itself, which
/// makes a perfectly calibrated history a fixed point.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    settings: DualAveragingSettings,
    target_accept: f64,
    mu: f64,
    log_step: f64,
    log_step_bar: f64,
    h_bar: f64,
    count: u64,
}

fn clamp_log(log_step: f64) -> f64 {
    log_step.clamp(STEP_SIZE_RANGE.0.ln(), STEP_SIZE_RANGE.1.ln())
}

impl DualAveraging {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        Self::with_settings(initial_step, target_accept, DualAveragingSettings::default())
    }

    pub fn with_settings(
        initial_step: f64,
        target_accept: f64,
        settings: DualAveragingSettings,
    ) -> Self {
        let log_step = clamp_log(initial_step.ln());
        DualAveraging {
            settings,
            target_accept,
            mu: log_step,
            log_step,
            log_step_bar: log_step,
            h_bar: 0.0,
            count: 0,
        }
    }

    /// Feeds one acceptance statistic and returns the next step size to use.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let accept_stat = if accept_stat.is_nan() { 0.0 } else { accept_stat.clamp(0.0, 1.0) };
        self.count += 1;
        let t = self.count as f64;
        let DualAveragingSettings { gamma, t0, kappa } = self.settings;
        let w = 1.0 / (t + t0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target_accept - accept_stat);
        self.log_step = clamp_log(self.mu - t.sqrt() / gamma * self.h_bar);
        let eta = t.powf(-kappa);
        self.log_step_bar = clamp_log(eta * self.log_step + (1.0 - eta) * self.log_step_bar);
        self.current()
    }

    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    /// The averaged step size to freeze once warmup ends.
    pub fn adapted(&self) -> f64 {
        self.log_step_bar.exp()
    }
}

/// Step sizes produced by dual averaging over a whole warmup history.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSizeSchedule {
    /// Step used for transition `i + 1` after observing `history[i]`.
    pub steps: Vec<f64>,
    /// Frozen step size for the sampling phase.
    pub adapted: f64,
}

pub fn adapt_step_size(initial_step: f64, history: &[f64], target_accept: f64) -> StepSizeSchedule {
    let mut da = DualAveraging::new(initial_step, target_accept);
    let steps = history.iter().map(|&a| da.update(a)).collect();
    StepSizeSchedule {
        steps,
        adapted: da.adapted(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrated_history_is_a_fixed_point() {
        let schedule = adapt_step_size(0.37, &[0.8; 200], 0.8);
        for s in &schedule.steps {
            assert!((s - 0.37).abs() < 1e-12);
        }
        assert!((schedule.adapted - 0.37).abs() < 1e-12);
    }

    #[test]
    fn zero_acceptance_shrinks_monotonically() {
        let schedule = adapt_step_size(1.0, &[0.0; 300], 0.8);
        for pair in schedule.steps.windows(2) {
            assert!(pair[1] <= pair[0]);
        }
        assert!(schedule.steps[299] < 1e-3);
        assert!(schedule.adapted < 1.0);
    }

    #[test]
    fn full_acceptance_grows() {
        let schedule = adapt_step_size(0.01, &[1.0; 100], 0.8);
        assert!(schedule.adapted > 0.01);
    }

    #[test]
    fn step_size_stays_in_range() {
        let tiny = adapt_step_size(1e-7, &[0.0; 2000], 0.8);
        assert!(tiny.steps.iter().all(|&s| s >= STEP_SIZE_RANGE.0 * (1.0 - 1e-12)));
        let huge = adapt_step_size(50.0, &[1.0; 2000], 0.8);
        assert!(huge.steps.iter().all(|&s| s <= STEP_SIZE_RANGE.1 * (1.0 + 1e-12)));
    }
}
