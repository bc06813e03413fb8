use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;

/// Second implementation of the forward pass with explicit matrices.
fn oracle_forward(input_dim: usize, hidden: &[usize], w: &[f64], x: &[f64]) -> f64 {
    let mut widths = vec![input_dim];
    widths.extend_from_slice(hidden);
    widths.push(1);
    let mut a = x.to_vec();
    let mut off = 0;
    for l in 0..widths.len() - 1 {
        let (fi, fo) = (widths[l], widths[l + 1]);
        let mat: Vec<Vec<f64>> = (0..fi).map(|i| w[off + i * fo..off + (i + 1) * fo].to_vec()).collect();
        let bias = &w[off + fi * fo..off + fi * fo + fo];
        off += (fi + 1) * fo;
        let mut z = vec![0.0; fo];
        for j in 0..fo {
            z[j] = bias[j];
            for i in 0..fi {
                z[j] += a[i] * mat[i][j];
            }
        }
        if l + 2 < widths.len() {
            z = z.iter().map(|v| v.tanh()).collect();
        }
        a = z;
    }
    assert_eq!(off, w.len());
    a[0]
}

fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    (1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt()) * (-(x - mean).powi(2) / (2.0 * sd * sd)).exp()).ln()
}

struct Config {
    target: BnnTarget,
    params: BnnParameters,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    hidden: Vec<usize>,
    prior: NoisePrior,
}

fn random_config(seed: u64) -> Config {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=2);
    let n_layers = rng.gen_range(0..=3);
    let hidden: Vec<usize> = (0..n_layers).map(|_| rng.gen_range(1..=6)).collect();
    let n = rng.gen_range(1..=8);
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let prior = match seed % 3 {
        0 => NoisePrior::HalfNormal { scale: 1.0 },
        1 => NoisePrior::HalfNormal { scale: 0.1 },
        _ => NoisePrior::LogNormal { mu: 0.0, sigma: 1.0 },
    };
    let arch = MlpArchitecture::new(d, hidden.clone()).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let params = BnnParameters {
        weights: (0..arch.n_params()).map(|_| normal.sample(&mut rng)).collect(),
        noise_scale: rng.gen_range(0.2..1.5),
    };
    Config {
        target: BnnTarget::new(arch, prior, &inputs, &targets).unwrap(),
        params,
        inputs,
        targets,
        hidden,
        prior,
    }
}

fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
        .fold(0.0, f64::max)
}

pub(crate) fn central_differences<T: LogDensity>(target: &T, z: &[f64], h: f64) -> Vec<f64> {
    let mut scratch = vec![0.0; z.len()];
    (0..z.len())
        .map(|k| {
            let mut plus = z.to_vec();
            let mut minus = z.to_vec();
            plus[k] += h;
            minus[k] -= h;
            (target.log_density_grad(&plus, &mut scratch) - target.log_density_grad(&minus, &mut scratch)) / (2.0 * h)
        })
        .collect()
}

#[test]
fn parameter_count() {
    let arch = MlpArchitecture::new(1, DEFAULT_HIDDEN.to_vec()).unwrap();
    assert_eq!(arch.n_params(), 2 * 32 + 33 * 16 + 17 * 8 + 9);
    let arch2 = MlpArchitecture::new(2, vec![64, 32, 16]).unwrap();
    assert_eq!(arch2.n_params(), 3 * 64 + 65 * 32 + 33 * 16 + 17);
    assert!(MlpArchitecture::new(1, vec![4, 0]).is_err());
}

#[test]
fn zero_network_outputs_zero() {
    let arch = MlpArchitecture::new(2, vec![5, 3]).unwrap();
    let w = vec![0.0; arch.n_params()];
    assert_eq!(forward(&arch, &w, &[0.3, -0.9]).unwrap(), 0.0);
}

#[test]
fn linear_network_is_affine() {
    let arch = MlpArchitecture::new(1, vec![]).unwrap();
    assert_eq!(forward(&arch, &[2.0, 1.0], &[3.0]).unwrap(), 7.0);
    assert!(matches!(forward(&arch, &[2.0], &[3.0]), Err(Error::DimensionMismatch { .. })));
    assert!(forward(&arch, &[2.0, 1.0], &[3.0, 1.0]).is_err());
}

#[test]
fn forward_matches_matrix_oracle() {
    for seed in 0..20 {
        let c = random_config(seed);
        for x in &c.inputs {
            let fast = forward(c.target.architecture(), &c.params.weights, x).unwrap();
            let slow = oracle_forward(x.len(), &c.hidden, &c.params.weights, x);
            assert!((fast - slow).abs() <= 1e-12 * slow.abs().max(1.0), "seed {seed}: {fast} vs {slow}");
        }
    }
}

#[test]
fn zero_residual_likelihood() {
    let arch = MlpArchitecture::new(1, vec![3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let w: Vec<f64> = (0..arch.n_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y = forward(&arch, &w, &[0.4]).unwrap();
    let target = BnnTarget::new(arch, NoisePrior::default(), &[vec![0.4]], &[y]).unwrap();
    let params = BnnParameters {
        weights: w,
        noise_scale: 1.0,
    };
    let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
    assert!((target.log_likelihood(&params) - expected).abs() < 1e-15);
}

#[test]
fn weight_prior_at_origin() {
    let arch = MlpArchitecture::new(1, vec![4, 2]).unwrap();
    let p = arch.n_params();
    let target = BnnTarget::new(arch, NoisePrior::default(), &[vec![0.0]], &[0.0]).unwrap();
    let params = BnnParameters {
        weights: vec![0.0; p],
        noise_scale: 0.5,
    };
    let noise = NoisePrior::default().log_density_log_scale(0.5f64.ln()).0;
    let expected = -(p as f64) / 2.0 * (2.0 * std::f64::consts::PI).ln();
    assert!((target.log_prior(&params) - noise - expected).abs() < 1e-12);
}

#[test]
fn log_joint_matches_term_by_term_oracle() {
    for seed in 0..20 {
        let c = random_config(seed);
        let sigma = c.params.noise_scale;
        let mut oracle = 0.0;
        for (x, y) in c.inputs.iter().zip(&c.targets) {
            let g = oracle_forward(x.len(), &c.hidden, &c.params.weights, x);
            oracle += log_normal_pdf(*y, g, sigma);
        }
        for w in &c.params.weights {
            oracle += log_normal_pdf(*w, 0.0, 1.0);
        }
        oracle += match c.prior {
            NoisePrior::HalfNormal { scale } => (2.0f64).ln() + log_normal_pdf(sigma, 0.0, scale),
            NoisePrior::LogNormal { mu, sigma: s } => log_normal_pdf(sigma.ln(), mu, s) - sigma.ln(),
        };
        // Jacobian of sampling log(sigma).
        oracle += sigma.ln();
        let fast = c.target.log_joint(&c.params);
        assert!((fast - oracle).abs() <= 1e-12 * oracle.abs().max(1.0), "seed {seed}: {fast} vs {oracle}");
        let mut g = vec![0.0; c.target.dim()];
        let via_sampler = c.target.log_density_grad(&c.params.to_unconstrained(), &mut g);
        assert!((via_sampler - fast).abs() <= 1e-12 * fast.abs());
    }
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..20 {
        let c = random_config(seed);
        let z = c.params.to_unconstrained();
        let analytic = c.target.grad_log_joint(&c.params);
        let numeric = central_differences(&c.target, &z, 1e-5);
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-5, "seed {seed}: relative error {err}");
    }
}

#[test]
fn prior_score_is_negative_weights() {
    let c = random_config(4);
    let z = c.params.to_unconstrained();
    let mut g = vec![0.0; z.len()];
    c.target.prior_score(&z, &mut g);
    for (gi, wi) in g.iter().zip(&c.params.weights) {
        assert_eq!(*gi, -wi);
    }
}

#[test]
fn gradient_vanishes_at_the_mode_of_a_linear_model() {
    // Linear network g = a x + b with Normal(0, 1) priors: for fixed sigma the
    // mode in (a, b) is a ridge solution, and log(sigma) solves a scalar
    // equation that bisection pins down.
    let xs = [-1.0, -0.5, 0.0, 0.5, 1.0];
    let ys = [-1.9, -1.1, 0.05, 0.9, 2.1];
    let arch = MlpArchitecture::new(1, vec![]).unwrap();
    let inputs: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let target = BnnTarget::new(arch, NoisePrior::default(), &inputs, &ys).unwrap();

    let ridge = |s2: f64| {
        let (sxx, sx, n) = (xs.iter().map(|x| x * x).sum::<f64>(), xs.iter().sum::<f64>(), xs.len() as f64);
        let (sxy, sy) = (xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>(), ys.iter().sum::<f64>());
        let (a11, a12, a22) = (sxx / s2 + 1.0, sx / s2, n / s2 + 1.0);
        let (b1, b2) = (sxy / s2, sy / s2);
        let det = a11 * a22 - a12 * a12;
        ((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det)
    };
    let score_u = |u: f64| {
        let s2 = (2.0 * u).exp();
        let (a, b) = ridge(s2);
        let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
        -(xs.len() as f64) + sse / s2 + 1.0 - s2
    };
    let (mut lo, mut hi) = (-10.0, 2.0);
    assert!(score_u(lo) > 0.0 && score_u(hi) < 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score_u(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u = 0.5 * (lo + hi);
    let (a, b) = ridge((2.0 * u).exp());
    let mut g = vec![0.0; 3];
    target.log_density_grad(&[a, b, u], &mut g);
    for gi in &g {
        assert!(gi.abs() < 1e-10, "gradient {g:?}");
    }
}

#[test]
fn noise_priors_parse_and_normalize() {
    for name in ["half-normal-1", "half-normal-0.1", "log-normal-0-1", "log-normal--1-0.5"] {
        let prior: NoisePrior = name.parse().unwrap();
        assert_eq!(prior.to_string(), name);
        // Density over log(sigma) integrates to one.
        let h = 1e-3;
        let total: f64 = (-20_000..20_000)
            .map(|i| prior.log_density_log_scale(i as f64 * h).0.exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-6, "{name}: {total}");
    }
    assert!("half-normal-0".parse::<NoisePrior>().is_err());
    assert!("gamma-1".parse::<NoisePrior>().is_err());
}

fn identity_standardizer() -> Standardizer {
    Standardizer {
        input_mean: vec![0.0],
        input_std: vec![1.0],
        target_mean: 0.0,
        target_std: 1.0,
    }
}

fn random_ensemble(seed: u64, n: usize) -> BnnPosterior {
    let arch = MlpArchitecture::new(1, vec![4, 3]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = (0..n)
        .map(|_| BnnParameters {
            weights: (0..arch.n_params()).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            noise_scale: rng.gen_range(0.05..0.8),
        })
        .collect();
    BnnPosterior::from_draws(arch, draws, identity_standardizer(), vec![(-1.0, 1.0)]).unwrap()
}

#[test]
fn single_draw_mean_is_the_network() {
    let post = random_ensemble(3, 1);
    let x = vec![0.25];
    let summary = post.predict(&[x.clone()]).unwrap();
    let g = forward(post.architecture(), &post.draws()[0].weights, &x).unwrap();
    assert_eq!(summary.mean[0], g);
}

#[test]
fn identical_draws_leave_only_noise() {
    let base = random_ensemble(5, 1).draws()[0].clone();
    let draws = vec![BnnParameters { noise_scale: 0.3, ..base }; 6];
    let arch = MlpArchitecture::new(1, vec![4, 3]).unwrap();
    let post = BnnPosterior::from_draws(arch, draws, identity_standardizer(), vec![(-1.0, 1.0)]).unwrap();
    let u = post.predict(&[vec![0.1], vec![-0.7]]).unwrap().uncertainty;
    for v in u {
        assert!((v - 0.09).abs() < 1e-15);
    }
}

#[test]
fn uncertainty_is_rescaled_to_raw_units() {
    let mut post = random_ensemble(8, 5);
    let points = vec![vec![0.0], vec![0.5]];
    let unit = post.predict(&points).unwrap();
    post.standardizer.target_mean = 10.0;
    post.standardizer.target_std = 3.0;
    let scaled = post.predict(&points).unwrap();
    for i in 0..2 {
        assert!((scaled.mean[i] - (3.0 * unit.mean[i] + 10.0)).abs() < 1e-12);
        assert!((scaled.uncertainty[i] - 9.0 * unit.uncertainty[i]).abs() < 1e-12);
    }
}

#[test]
fn closed_form_uncertainty_matches_sampled_estimator() {
    let post = random_ensemble(11, 7);
    let x = vec![0.3];
    let u = post.predict(&[x.clone()]).unwrap().uncertainty[0];
    let preds = post.draw_predictions(&[x]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let reps = 20_000;
    let n = preds.n_draws as f64;
    let mu = preds.means.iter().sum::<f64>() / n;
    let estimates: Vec<f64> = (0..reps)
        .map(|_| {
            (0..preds.n_draws)
                .map(|j| {
                    let y = preds.means[j] + preds.noise_var[j].sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    (y - mu).powi(2)
                })
                .sum::<f64>()
                / n
        })
        .collect();
    let m = estimates.iter().sum::<f64>() / reps as f64;
    let sd = (estimates.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    let se = sd / (reps as f64).sqrt();
    assert!((m - u).abs() < 3.0 * se, "closed form {u}, sampled {m} +- {se}");
}

#[test]
fn permuting_draws_is_bit_identical() {
    let post = random_ensemble(13, 9);
    let mut draws = post.draws().to_vec();
    draws.reverse();
    draws.swap(0, 4);
    let permuted = BnnPosterior::from_draws(post.arch.clone(), draws, identity_standardizer(), vec![(-1.0, 1.0)]).unwrap();
    let points: Vec<Vec<f64>> = (0..11).map(|i| vec![-1.0 + 0.2 * i as f64]).collect();
    assert_eq!(post.predict(&points).unwrap(), permuted.predict(&points).unwrap());
}

#[test]
fn uncertainty_has_aleatoric_floor() {
    let post = random_ensemble(17, 12);
    let mean_noise = post.draws().iter().map(|d| d.noise_scale.powi(2)).sum::<f64>() / 12.0;
    let points: Vec<Vec<f64>> = (0..21).map(|i| vec![-1.0 + 0.1 * i as f64]).collect();
    for u in post.predict(&points).unwrap().uncertainty {
        assert!(u >= mean_noise - 1e-12);
    }
}

#[test]
fn predict_rejects_points_outside_the_domain() {
    let post = random_ensemble(1, 2);
    assert!(matches!(post.predict(&[vec![1.5]]), Err(Error::OutOfBounds(_))));
}

fn line_data(n: usize, slope: f64, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let xs: Vec<f64> = crate::grid::linspace(-1.0, 1.0, n);
    let ys = xs.iter().map(|x| slope * x + normal.sample(&mut rng)).collect();
    Dataset::new(vec![(-1.0, 1.0)], xs.into_iter().map(|x| vec![x]).collect(), ys).unwrap()
}

#[test]
fn fit_recovers_a_line() {
    let data = line_data(20, 2.0, 0.05, 1);
    let cfg = BnnConfig {
        nuts: NutsConfig {
            warmup: 300,
            samples: 200,
            ..NutsConfig::default()
        },
        ..BnnConfig::default()
    };
    let post = fit(&data, &cfg, RngState::new(7, 0)).unwrap();
    assert_eq!(post.len(), cfg.nuts.chains * cfg.nuts.samples);
    let mu = post.predict(&[vec![0.5]]).unwrap().mean[0];
    assert!((mu - 1.0).abs() < 0.1, "mean at 0.5 is {mu}");
}

#[test]
fn refit_is_deterministic() {
    let data = line_data(6, -1.0, 0.05, 2);
    let cfg = BnnConfig {
        hidden: vec![4],
        nuts: NutsConfig {
            warmup: 30,
            samples: 20,
            chains: 2,
            ..NutsConfig::default()
        },
        ..BnnConfig::default()
    };
    let a = fit(&data, &cfg, RngState::new(3, 1)).unwrap();
    let b = fit(&data, &cfg, RngState::new(3, 1)).unwrap();
    assert_eq!(a.draws(), b.draws());
    assert_eq!(a.len(), 40);
}

#[test]
fn linear_model_approaches_least_squares() {
    let data = line_data(10, 1.5, 0.02, 4);
    let xs: Vec<f64> = data.inputs().iter().map(|x| x[0]).collect();
    let ys = data.targets();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let intercept = my - slope * mx;

    let cfg = BnnConfig {
        hidden: vec![],
        noise_prior: NoisePrior::HalfNormal { scale: 0.01 },
        nuts: NutsConfig::default(),
    };
    let post = fit(&data, &cfg, RngState::new(5, 0)).unwrap();
    let mean = post.predict(data.inputs()).unwrap().mean;
    for (x, m) in xs.iter().zip(mean) {
        let ls = slope * x + intercept;
        assert!((m - ls).abs() <= 0.05 * ls.abs().max(0.1), "at {x}: {m} vs {ls}");
    }
}

#[test]
fn fast_exp_matches_libm() {
    for i in 0..=40_000 {
        let t = -40.0 * i as f64 / 40_000.0;
        let (a, b) = (super::exp_nonpositive(t), t.exp());
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * b, "t={t}: {a} vs {b}");
    }
}

#[test]
fn fast_tanh_matches_libm() {
    for i in -30_000..=30_000 {
        let x = i as f64 / 1000.0;
        let (a, b) = (super::tanh(x), x.tanh());
        assert!((a - b).abs() <= 4.0 * f64::EPSILON, "x={x}: {a} vs {b}");
    }
    assert_eq!(super::tanh(1e3), 1.0);
    assert_eq!(super::tanh(-1e3), -1.0);
    assert_eq!(super::tanh(0.0), 0.0);
}
