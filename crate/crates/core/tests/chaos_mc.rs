use bachelier::chaos::{hermite_all, ChaosExtension};
use bachelier::Execution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn mean_and_stderr(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn hermite_levels_are_orthogonal() {
    let zs = normals(200_000, 3);
    let basis: Vec<Vec<f64>> = zs.iter().map(|&z| hermite_all(6, z)).collect();
    let mut factorial = 1.0;
    for i in 0..=6 {
        if i > 0 {
            factorial *= i as f64;
        }
        for j in 0..=i {
            let (mean, se) = mean_and_stderr(basis.iter().map(|h| h[i] * h[j]));
            let expected = if i == j { 1.0 / factorial } else { 0.0 };
            assert!(
                (mean - expected).abs() <= 3.0 * se + 1e-15,
                "E[H_{i} H_{j}] = {mean} ± {se}, expected {expected}"
            );
        }
    }
}

#[test]
fn chaos_levels_are_centered() {
    let ext = ChaosExtension::new(4, 100.0, 0.3).unwrap();
    let t: f64 = 0.7;
    let zs = normals(100_000, 17);
    for n in 1..=4 {
        let (mean, se) =
            mean_and_stderr(zs.iter().map(|&z| ext.chaos_level(n, t, t.sqrt() * z).unwrap()));
        assert!(mean.abs() <= 3.0 * se, "level {n}: {mean} ± {se}");
    }
    assert_eq!(ext.chaos_level(0, t, 1.3).unwrap(), 100.0);
}

#[test]
fn bachelier_is_the_best_degree_one_extension() {
    let (s0, sigma, t) = (100.0, 0.2, 1.0f64);
    let ext = ChaosExtension::new(1, s0, sigma).unwrap();
    let ws: Vec<f64> = normals(200_000, 23).into_iter().map(|z| z * t.sqrt()).collect();
    let target: Vec<f64> = ws.iter().map(|&w| ext.black_scholes(t, w)).collect();
    let distance = |beta: f64| {
        ws.iter()
            .zip(&target)
            .map(|(w, s)| (s - s0 - beta * w).powi(2))
            .sum::<f64>()
    };
    let step = 0.01 * s0 * sigma;
    let best = (-20..=20)
        .map(|i| s0 * sigma + i as f64 * step)
        .min_by(|a, b| distance(*a).total_cmp(&distance(*b)))
        .unwrap();
    assert!((best - s0 * sigma).abs() <= step, "best β = {best}");
}

#[test]
fn short_time_error_scales_like_the_theorem() {
    let (s0, sigma) = (100.0, 0.2);
    for n in 1..=3 {
        let ext = ChaosExtension::new(n, s0, sigma).unwrap();
        let ratios: Vec<f64> = [0.01, 0.04, 0.16]
            .iter()
            .map(|&t: &f64| {
                let r = ext.mc_l2_distance(t, 200_000, 90 + n as u64).unwrap();
                assert!(r.within(3.0), "{r:?}");
                r.mc_err / t.powf((n + 1) as f64 / 2.0)
            })
            .collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        assert!(hi / lo < 1.1, "N={n}: {ratios:?}");
    }
}

#[test]
fn bound_holds_on_grid() {
    for n in 1..=6 {
        let ext = ChaosExtension::new(n, 50.0, 0.35).unwrap();
        for t in [0.01, 0.1, 0.5, 1.0, 2.0] {
            let d = ext.analytic_l2_distance(t).unwrap();
            assert!(d <= ext.l2_bound(t, t).unwrap() * (1.0 + 1e-12));
            assert!(d <= ext.l2_bound(t, 2.0).unwrap() * (1.0 + 1e-12));
        }
    }
}

#[test]
fn results_do_not_depend_on_execution_mode() {
    let ext = ChaosExtension::new(2, 100.0, 0.25).unwrap();
    let seq = ext
        .mc_l2_distance_with(Execution::Sequential, 0.5, 70_000, 5)
        .unwrap();
    let par = ext
        .mc_l2_distance_with(Execution::Parallel, 0.5, 70_000, 5)
        .unwrap();
    assert_eq!(seq, par);
    let seq = ext
        .martingale_check_with(Execution::Sequential, 2, 0.25, 0.5, 50_000, 8)
        .unwrap();
    let par = ext
        .martingale_check_with(Execution::Parallel, 2, 0.25, 0.5, 50_000, 8)
        .unwrap();
    assert_eq!(seq, par);
}

#[test]
fn martingale_property_of_levels() {
    let ext = ChaosExtension::new(3, 100.0, 0.4).unwrap();
    for n in 1..=3 {
        let r = ext.martingale_check(n, 0.5, 1.0, 200_000, 40 + n as u64).unwrap();
        assert!(r.max_z_score <= 4.0, "level {n}: {r:?}");
    }
    let zero = ext.martingale_check(0, 0.5, 1.0, 10_000, 1).unwrap();
    assert_eq!(zero.max_deviation, 0.0);
}
