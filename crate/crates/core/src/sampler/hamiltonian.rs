use super::LogDensity;

/// Energy error (in nats) beyond which a trajectory counts as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// A position/momentum pair with the log-density and gradient cached at the
/// position. The mass matrix is the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub grad: Vec<f64>,
    pub log_density: f64,
}

impl PhasePoint {
    pub fn new<T: LogDensity + ?Sized>(target: &T, position: Vec<f64>, momentum: Vec<f64>) -> Self {
        let mut grad = vec![0.0; position.len()];
        let log_density = target.log_density_grad(&position, &mut grad);
        PhasePoint {
            position,
            momentum,
            grad,
            log_density,
        }
    }

    /// Potential plus kinetic energy; `+inf` when the density is not finite.
    pub fn energy(&self) -> f64 {
        let kinetic = 0.5 * self.momentum.iter().map(|r| r * r).sum::<f64>();
        let h = -self.log_density + kinetic;
        if h.is_nan() {
            f64::INFINITY
        } else {
            h
        }
    }

    /// One half-kick / drift / half-kick update in place. A negative `step`
    /// integrates backwards in time.
    pub fn leapfrog_in_place<T: LogDensity + ?Sized>(&mut self, target: &T, step: f64) {
        let half = 0.5 * step;
        for (r, g) in self.momentum.iter_mut().zip(&self.grad) {
            *r += half * g;
        }
        for (z, r) in self.position.iter_mut().zip(&self.momentum) {
            *z += step * r;
        }
        self.log_density = target.log_density_grad(&self.position, &mut self.grad);
        for (r, g) in self.momentum.iter_mut().zip(&self.grad) {
            *r += half * g;
        }
    }
}

/// Outcome of a single [`leapfrog`] step.
#[derive(Debug, Clone, PartialEq)]
pub struct LeapfrogStep {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    /// Set when the new log-density is not finite or the energy error exceeds
    /// [`DIVERGENCE_THRESHOLD`].
    pub divergent: bool,
    pub energy_error: f64,
}

/// Advances `(position, momentum)` by one leapfrog step of size `step`.
pub fn leapfrog<T: LogDensity + ?Sized>(
    target: &T,
    position: &[f64],
    momentum: &[f64],
    step: f64,
) -> LeapfrogStep {
    let mut point = PhasePoint::new(target, position.to_vec(), momentum.to_vec());
    let h0 = point.energy();
    point.leapfrog_in_place(target, step);
    let energy_error = point.energy() - h0;
    let divergent = !point.log_density.is_finite() || !(energy_error <= DIVERGENCE_THRESHOLD);
    LeapfrogStep {
        position: point.position,
        momentum: point.momentum,
        divergent,
        energy_error,
    }
}
