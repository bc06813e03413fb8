use serde::{Deserialize, Serialize};

use super::SampleChain;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub mean: f64,
    pub std: f64,
    pub rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerSummary {
    pub parameters: Vec<ParameterSummary>,
    pub divergences: usize,
    pub chains: usize,
    pub draws_per_chain: usize,
    pub mean_accept_stat: f64,
    pub max_rhat: f64,
}

/// Split-R̂ over the given chains of a single scalar parameter. Each chain is
/// cut into two halves (the middle draw of odd-length chains is dropped).
///
/// A pooled variance of zero yields 1.0; zero within-chain variance with
/// disagreeing chains yields infinity.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    let half = chains.iter().map(|c| c.len() / 2).min().unwrap_or(0);
    if half < 2 {
        return f64::NAN;
    }
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let n = c.len();
        halves.push(&c[..half]);
        halves.push(&c[n - half..]);
    }
    let n = half as f64;
    let m = halves.len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| h.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let between = n / (m - 1.0) * means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>();
    let within = halves
        .iter()
        .zip(&means)
        .map(|(h, mu)| h.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let pooled = (n - 1.0) / n * within + between / n;
    if pooled == 0.0 {
        return 1.0;
    }
    if within == 0.0 {
        return f64::INFINITY;
    }
    (pooled / within).sqrt()
}

pub fn diagnostics(chains: &[SampleChain]) -> SamplerSummary {
    let dim = chains.first().and_then(|c| c.draws.first()).map_or(0, Vec::len);
    let draws_per_chain = chains.iter().map(|c| c.draws.len()).min().unwrap_or(0);
    let parameters: Vec<ParameterSummary> = (0..dim)
        .map(|k| {
            let columns: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.draws.iter().map(|d| d[k]).collect())
                .collect();
            let all: Vec<f64> = columns.iter().flatten().copied().collect();
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
            ParameterSummary {
                mean,
                std: var.sqrt(),
                rhat: split_rhat(&refs),
            }
        })
        .collect();
    let max_rhat = parameters
        .iter()
        .map(|p| p.rhat)
        .filter(|r| !r.is_nan())
        .fold(f64::NAN, f64::max);
    let total: usize = chains.iter().map(|c| c.draws.len()).sum();
    let mean_accept_stat = chains
        .iter()
        .map(|c| c.accept_stat_mean * c.draws.len() as f64)
        .sum::<f64>()
        / total.max(1) as f64;
    SamplerSummary {
        parameters,
        divergences: chains.iter().map(|c| c.divergence_count).sum(),
        chains: chains.len(),
        draws_per_chain,
        mean_accept_stat,
        max_rhat,
    }
}
