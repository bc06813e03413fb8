use super::*;

/// Standard normal CDF via the Numerical Recipes erfc approximation
/// (fractional error below 1.2e-7).
fn normal_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.5 * z);
    let poly = -z * z - 1.265_512_23
        + t * (1.000_023_68
            + t * (0.374_091_96
                + t * (0.096_784_18
                    + t * (-0.186_288_06
                        + t * (0.278_868_07
                            + t * (-1.135_203_98
                                + t * (1.488_515_87 + t * (-0.822_152_23 + t * 0.170_872_77))))))));
    let erfc = t * poly.exp();
    if x >= 0.0 {
        1.0 - 0.5 * erfc
    } else {
        0.5 * erfc
    }
}

fn diag_gaussian(variances: Vec<f64>) -> FnDensity<impl Fn(&[f64], &mut [f64]) -> f64 + Sync> {
    FnDensity::new(variances.len(), move |z: &[f64], g: &mut [f64]| {
        let mut lp = 0.0;
        for ((zi, gi), v) in z.iter().zip(g.iter_mut()).zip(&variances) {
            *gi = -zi / v;
            lp -= 0.5 * zi * zi / v;
        }
        lp
    })
}

fn column(chains: &[SampleChain], k: usize) -> Vec<f64> {
    chains.iter().flat_map(|c| c.draws.iter().map(move |d| d[k])).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn standard_gaussian_moments() {
    let chains = nuts_sample(&diag_gaussian(vec![1.0]), &[0.3], &NutsConfig::default(), RngState::new(11, 0)).unwrap();
    let (m, v) = mean_var(&column(&chains, 0));
    assert!(m.abs() <= 0.15, "mean {m}");
    assert!((0.8..=1.2).contains(&v), "variance {v}");
}

#[test]
fn anisotropic_gaussian_variances() {
    let truth = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    let cfg = NutsConfig {
        chains: 4,
        ..NutsConfig::default()
    };
    let chains = nuts_sample(&diag_gaussian(truth.clone()), &[0.0; 5], &cfg, RngState::new(5, 0)).unwrap();
    for (k, t) in truth.iter().enumerate() {
        let (m, v) = mean_var(&column(&chains, k));
        assert!(m.abs() < 0.15, "coordinate {k} mean {m}");
        assert!((v - t).abs() / t < 0.2, "coordinate {k} variance {v} vs {t}");
    }
    assert!(chains.iter().all(|c| c.divergence_count == 0));
}

#[test]
fn banana_has_no_divergences() {
    let banana = FnDensity::new(2, |z: &[f64], g: &mut [f64]| {
        let (x, y) = (z[0], z[1]);
        let u = y - x * x;
        g[0] = -x + 2.0 * x * u;
        g[1] = -u;
        -0.5 * x * x - 0.5 * u * u
    });
    let cfg = NutsConfig {
        target_accept: 0.9,
        max_tree_depth: 10,
        ..NutsConfig::default()
    };
    let chains = nuts_sample(&banana, &[0.1, 0.1], &cfg, RngState::new(2, 0)).unwrap();
    assert_eq!(chains[0].divergence_count, 0);
}

#[test]
fn adapted_acceptance_hits_target() {
    let chains = nuts_sample(&diag_gaussian(vec![1.0; 3]), &[0.0; 3], &NutsConfig::default(), RngState::new(8, 0)).unwrap();
    let a = chains[0].accept_stat_mean;
    assert!((0.7..=0.9).contains(&a), "accept stat {a}");
}

#[test]
fn kolmogorov_smirnov_against_standard_normal() {
    let cfg = NutsConfig {
        warmup: 500,
        samples: 2000,
        ..NutsConfig::default()
    };
    let chains = nuts_sample(&diag_gaussian(vec![1.0]), &[0.0], &cfg, RngState::new(21, 0)).unwrap();
    let mut draws = column(&chains, 0);
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let d = draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal_cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    // Asymptotic critical value at significance 0.01.
    let critical = 1.628 / n.sqrt();
    assert!(d < critical, "KS statistic {d} >= {critical}");
}

#[test]
fn trajectories_respect_depth_cap() {
    let cfg = NutsConfig {
        max_tree_depth: 3,
        ..NutsConfig::default()
    };
    // Very different scales force long trajectories.
    let chains = nuts_sample(&diag_gaussian(vec![1e-4, 1e2]), &[0.0, 0.0], &cfg, RngState::new(4, 0)).unwrap();
    let c = &chains[0];
    assert!(c.n_leapfrog.iter().all(|&n| n < 1 << 3));
    assert!(c.tree_depths.iter().all(|&d| d <= 3));
    assert!(c.tree_depths.iter().any(|&d| d == 3));
}

#[test]
fn identical_inputs_give_identical_chains() {
    let cfg = NutsConfig {
        warmup: 50,
        samples: 50,
        chains: 2,
        ..NutsConfig::default()
    };
    let target = diag_gaussian(vec![1.0, 2.0]);
    let a = nuts_sample(&target, &[0.5, 0.5], &cfg, RngState::new(9, 3)).unwrap();
    let b = nuts_sample(&target, &[0.5, 0.5], &cfg, RngState::new(9, 3)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].draws, a[1].draws);
}

#[test]
fn multi_chain_rhat_is_small() {
    let cfg = NutsConfig {
        chains: 4,
        ..NutsConfig::default()
    };
    let chains = nuts_sample(&diag_gaussian(vec![1.0, 4.0]), &[0.0, 0.0], &cfg, RngState::new(12, 0)).unwrap();
    let summary = diagnostics(&chains);
    assert!(summary.max_rhat < 1.05, "rhat {}", summary.max_rhat);
    assert_eq!(summary.chains, 4);
}

#[test]
fn pathological_target_is_rejected() {
    // The density jumps to -inf on a fine lattice of points, so nearly every
    // trajectory diverges.
    let spiky = FnDensity::new(1, |z: &[f64], g: &mut [f64]| {
        g[0] = -z[0];
        if (z[0] * 1e3).fract().abs() > 1e-3 {
            f64::NEG_INFINITY
        } else {
            -0.5 * z[0] * z[0]
        }
    });
    let cfg = NutsConfig {
        warmup: 10,
        samples: 20,
        initial_step_size: Some(0.5),
        ..NutsConfig::default()
    };
    let err = nuts_sample(&spiky, &[0.0], &cfg, RngState::new(1, 0)).unwrap_err();
    assert!(matches!(err, Error::TooManyDivergences { .. }));
}

#[test]
fn config_validation() {
    assert!(NutsConfig { warmup: 5, ..NutsConfig::default() }.validate().is_err());
    assert!(NutsConfig { target_accept: 1.0, ..NutsConfig::default() }.validate().is_err());
    assert!(NutsConfig { max_tree_depth: 16, ..NutsConfig::default() }.validate().is_err());
    assert!(NutsConfig { samples: 0, ..NutsConfig::default() }.validate().is_err());
    let target = diag_gaussian(vec![1.0]);
    assert!(matches!(
        nuts_sample(&target, &[0.0, 1.0], &NutsConfig::default(), RngState::new(0, 0)),
        Err(Error::DimensionMismatch { .. })
    ));
}
