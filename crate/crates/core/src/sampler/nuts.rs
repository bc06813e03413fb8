//! One NUTS transition: trajectory doubling with multinomial proposal
//! selection and the generalized (momentum-sum) U-turn criterion, including
//! the extra checks across each pair of merged subtrees.

use rand::Rng;
use rand_distr::StandardNormal;

use super::hamiltonian::{PhasePoint, DIVERGENCE_THRESHOLD};
use super::LogDensity;

#[derive(Debug, Clone)]
pub(crate) struct Transition {
    pub point: PhasePoint,
    pub accept_stat: f64,
    pub divergent: bool,
    pub depth: usize,
    pub n_leapfrog: usize,
}

struct Subtree {
    proposal: PhasePoint,
    log_weight: f64,
    rho: Vec<f64>,
    /// Momentum at the end adjacent to the existing trajectory.
    p_inner: Vec<f64>,
    /// Momentum at the far end.
    p_outer: Vec<f64>,
}

struct Builder<'a, T: ?Sized, R> {
    target: &'a T,
    rng: &'a mut R,
    step: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_accept: f64,
    divergent: bool,
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// No U-turn between the two ends of a trajectory with momentum sum `rho`.
fn no_u_turn(p_start: &[f64], p_end: &[f64], rho: &[f64]) -> bool {
    dot(p_start, rho) > 0.0 && dot(p_end, rho) > 0.0
}

impl<T: LogDensity + ?Sized, R: Rng> Builder<'_, T, R> {
    /// Extends `edge` by `2^depth` leapfrog steps in the direction of
    /// `self.step`. Returns `None` when the new subtree diverged or turned
    /// back on itself, in which case it must be discarded.
    fn build(&mut self, edge: &mut PhasePoint, depth: usize) -> Option<Subtree> {
        if depth == 0 {
            edge.leapfrog_in_place(self.target, self.step);
            self.n_leapfrog += 1;
            let h = edge.energy();
            let log_weight = self.h0 - h;
            self.sum_accept += if log_weight > 0.0 { 1.0 } else { log_weight.exp() };
            if !(h - self.h0 <= DIVERGENCE_THRESHOLD) {
                self.divergent = true;
                return None;
            }
            return Some(Subtree {
                proposal: edge.clone(),
                log_weight,
                rho: edge.momentum.clone(),
                p_inner: edge.momentum.clone(),
                p_outer: edge.momentum.clone(),
            });
        }

        let first = self.build(edge, depth - 1)?;
        let second = self.build(edge, depth - 1)?;

        let log_weight = log_add_exp(first.log_weight, second.log_weight);
        let take_second = self.rng.gen::<f64>() < (second.log_weight - log_weight).exp();
        let rho = add(&first.rho, &second.rho);

        let ok = no_u_turn(&first.p_inner, &second.p_outer, &rho)
            && no_u_turn(&first.p_inner, &second.p_inner, &add(&first.rho, &second.p_inner))
            && no_u_turn(&first.p_outer, &second.p_outer, &add(&second.rho, &first.p_outer));
        if !ok {
            return None;
        }
        Some(Subtree {
            proposal: if take_second { second.proposal } else { first.proposal },
            log_weight,
            rho,
            p_inner: first.p_inner,
            p_outer: second.p_outer,
        })
    }
}

pub(crate) fn transition<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    current: &PhasePoint,
    step: f64,
    max_depth: usize,
    rng: &mut R,
) -> Transition {
    let mut start = current.clone();
    for r in start.momentum.iter_mut() {
        *r = rng.sample(StandardNormal);
    }
    let h0 = start.energy();

    let mut left = start.clone();
    let mut right = start.clone();
    let mut rho = start.momentum.clone();
    let mut log_weight = 0.0;
    let mut sample = start;
    let mut depth = 0;

    let mut n_leapfrog = 0;
    let mut sum_accept = 0.0;
    let mut divergent = false;

    while depth < max_depth {
        let forward = rng.gen::<bool>();
        // The far end of the existing trajectory and the end the new subtree
        // attaches to.
        let (p_far, p_near) = if forward {
            (left.momentum.clone(), right.momentum.clone())
        } else {
            (right.momentum.clone(), left.momentum.clone())
        };
        let (edge, signed_step) = if forward { (&mut right, step) } else { (&mut left, -step) };

        let mut builder = Builder {
            target,
            rng: &mut *rng,
            step: signed_step,
            h0,
            n_leapfrog: 0,
            sum_accept: 0.0,
            divergent: false,
        };
        let subtree = builder.build(edge, depth);
        n_leapfrog += builder.n_leapfrog;
        sum_accept += builder.sum_accept;
        divergent |= builder.divergent;

        let Some(subtree) = subtree else { break };
        depth += 1;

        if subtree.log_weight > log_weight
            || rng.gen::<f64>() < (subtree.log_weight - log_weight).exp()
        {
            sample = subtree.proposal.clone();
        }
        log_weight = log_add_exp(log_weight, subtree.log_weight);

        let old_rho = std::mem::replace(&mut rho, Vec::new());
        rho = add(&old_rho, &subtree.rho);
        // The criterion is symmetric in its two end momenta, so orientation
        // does not matter here.
        let ok = no_u_turn(&p_far, &subtree.p_outer, &rho)
            && no_u_turn(&p_far, &subtree.p_inner, &add(&old_rho, &subtree.p_inner))
            && no_u_turn(&p_near, &subtree.p_outer, &add(&subtree.rho, &p_near));
        if !ok {
            break;
        }
    }

    let accept_stat = if n_leapfrog > 0 { sum_accept / n_leapfrog as f64 } else { 0.0 };
    Transition {
        point: sample,
        accept_stat,
        divergent,
        depth,
        n_leapfrog,
    }
}
