//! Wiener-chaos extensions of the Bachelier model towards Black-Scholes.
//!
//! The Black-Scholes price `S_t = S_0 exp(σW_t − σ²t/2)` decomposes into the
//! chaos levels `M_t^{(n)} = S_0 σⁿ t^{n/2} H_n(W_t/√t)` where `H_n` follows
//! `(n+1)H_{n+1}(x) = xH_n(x) − H_{n−1}(x)`, `H_0 = 1`, `H_1 = x`, so that
//! `E[H_n(Z)²] = 1/n!`. Summing levels `0..=N` gives the extension of degree `N`;
//! degree 1 is the Bachelier model `S_0 + S_0σW_t`.
//!
//! Monte Carlo routines sample `W_t` exactly from `N(0, t)`. Paths are split
//! into fixed-size chunks, each with its own ChaCha stream, and chunk results
//! are merged pairwise in chunk order, so reports are bit-identical for a
//! given seed regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::exec::{map_range, pairwise_merge, Execution, Moments};

/// Paths per RNG substream.
pub const CHUNK_PATHS: usize = 1 << 14;
/// Smallest accepted Monte Carlo sample.
pub const MIN_PATHS: usize = 10_000;

/// `H_n(x)` in the normalization `E[H_n(Z)²] = 1/n!`.
pub fn hermite_eval(n: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..n {
        let next = (x * cur - prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    cur
}

/// `[H_0(x), …, H_max(x)]`
pub fn hermite_all(max_degree: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_degree + 1);
    out.push(1.0);
    if max_degree >= 1 {
        out.push(x);
    }
    for k in 1..max_degree {
        out.push((x * out[k] - out[k - 1]) / (k + 1) as f64);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosExtension {
    degree: usize,
    s0: f64,
    sigma: f64,
}

impl ChaosExtension {
    pub fn new(degree: usize, s0: f64, sigma: f64) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("degree", 0.0, "must be at least 1"));
        }
        Ok(Self {
            degree,
            s0: ensure_positive("s0", s0)?,
            sigma: ensure_positive("sigma", sigma)?,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `M_t^{(n)}` given `W_t = w`.
    pub fn chaos_level(&self, n: usize, t: f64, w: f64) -> Result<f64> {
        ensure_positive("t", t)?;
        if n > self.degree {
            return Err(Error::invalid("n", n as f64, "exceeds the extension degree"));
        }
        let root = t.sqrt();
        Ok(self.s0 * (self.sigma * root).powi(n as i32) * hermite_eval(n, w / root))
    }

    /// `S_t^{(N)} = Σ_{n ≤ N} M_t^{(n)}`.
    pub fn value(&self, t: f64, w: f64) -> Result<f64> {
        ensure_positive("t", t)?;
        Ok(self.value_unchecked(t.sqrt(), w))
    }

    fn value_unchecked(&self, root_t: f64, w: f64) -> f64 {
        let z = w / root_t;
        let v = self.sigma * root_t;
        let (mut prev, mut cur) = (1.0, z);
        let mut scale = v;
        let mut sum = 1.0 + v * z;
        for k in 1..self.degree {
            let next = (z * cur - prev) / (k + 1) as f64;
            prev = cur;
            cur = next;
            scale *= v;
            sum += scale * cur;
        }
        self.s0 * sum
    }

    /// Black-Scholes price `S_0 exp(σw − σ²t/2)`.
    pub fn black_scholes(&self, t: f64, w: f64) -> f64 {
        self.s0 * (self.sigma * w - 0.5 * self.sigma * self.sigma * t).exp()
    }

    /// `Σ_{m > N} (σ²t)^m / m!`, summed directly to avoid cancellation.
    fn tail_sum(&self, t: f64) -> f64 {
        let y = self.sigma * self.sigma * t;
        let mut term = 1.0;
        for m in 1..=self.degree + 1 {
            term *= y / m as f64;
        }
        let mut sum = 0.0;
        let mut m = self.degree + 1;
        while term > f64::EPSILON * 1e-3 * sum || sum == 0.0 {
            sum += term;
            m += 1;
            term *= y / m as f64;
            if term == 0.0 {
                break;
            }
        }
        sum
    }

    /// Exact `‖S_t − S_t^{(N)}‖₂`.
    pub fn analytic_l2_distance(&self, t: f64) -> Result<f64> {
        ensure_positive("t", t)?;
        Ok(self.s0 * self.tail_sum(t).sqrt())
    }

    /// `C_N` at time `t`: `C_N² = Σ_{m ≥ N+1} (σ√t)^{2(m−N−1)} / m!`.
    pub fn sharp_constant(&self, t: f64) -> Result<f64> {
        ensure_positive("t", t)?;
        let y = self.sigma * self.sigma * t;
        Ok((self.tail_sum(t) / y.powi(self.degree as i32 + 1)).sqrt())
    }

    /// `C_N S_0 σ^{N+1} t^{(N+1)/2}` with `C_N` evaluated at `horizon ≥ t`.
    pub fn l2_bound(&self, t: f64, horizon: f64) -> Result<f64> {
        ensure_positive("t", t)?;
        if horizon < t {
            return Err(Error::invalid("horizon", horizon, "must not precede t"));
        }
        let c = self.sharp_constant(horizon)?;
        Ok(c * self.s0 * (self.sigma * t.sqrt()).powi(self.degree as i32 + 1))
    }

    pub fn mc_l2_distance(&self, t: f64, paths: usize, seed: u64) -> Result<L2ErrorReport> {
        self.mc_l2_distance_with(Execution::default(), t, paths, seed)
    }

    pub fn mc_l2_distance_with(
        &self,
        exec: Execution,
        t: f64,
        paths: usize,
        seed: u64,
    ) -> Result<L2ErrorReport> {
        ensure_positive("t", t)?;
        check_paths(paths)?;
        let root = t.sqrt();
        let moments = chunked(exec, paths, seed, |rng, n| {
            let mut acc = Moments::default();
            for _ in 0..n {
                let z: f64 = StandardNormal.sample(rng);
                let w = root * z;
                let d = self.black_scholes(t, w) - self.value_unchecked(root, w);
                acc.push(d * d);
            }
            acc
        });
        let mean_sq = moments.mean;
        let mc_err = mean_sq.sqrt();
        let mc_sq_stderr = moments.std_error();
        Ok(L2ErrorReport {
            n: self.degree,
            t,
            analytic_err: self.analytic_l2_distance(t)?,
            mc_err,
            // delta method: se(√X̄) = se(X̄) / (2√X̄)
            mc_stderr: if mc_err > 0.0 { mc_sq_stderr / (2.0 * mc_err) } else { 0.0 },
            mc_sq_stderr,
            bound: self.l2_bound(t, t)?,
        })
    }

    /// Regresses `M_t^{(n)}` on `H_0..H_n(W_s/√s)` and compares the fitted
    /// conditional mean with `M_s^{(n)}` at `W_s/√s ∈ {−2, −1, 0, 1, 2}`.
    pub fn martingale_check(
        &self,
        n: usize,
        s: f64,
        t: f64,
        paths: usize,
        seed: u64,
    ) -> Result<MartingaleReport> {
        self.martingale_check_with(Execution::default(), n, s, t, paths, seed)
    }

    pub fn martingale_check_with(
        &self,
        exec: Execution,
        n: usize,
        s: f64,
        t: f64,
        paths: usize,
        seed: u64,
    ) -> Result<MartingaleReport> {
        ensure_positive("s", s)?;
        if s >= t {
            return Err(Error::invalid("s", s, "must be strictly before t"));
        }
        if n > self.degree {
            return Err(Error::invalid("n", n as f64, "exceeds the extension degree"));
        }
        check_paths(paths)?;
        if n == 0 {
            return Ok(MartingaleReport {
                max_deviation: 0.0,
                max_z_score: 0.0,
                stderr_at_max: 0.0,
            });
        }
        let dim = n + 1;
        let (root_s, root_gap) = (s.sqrt(), (t - s).sqrt());
        let sample = |rng: &mut ChaCha8Rng| {
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let y = self
                .chaos_level(n, t, root_s * z1 + root_gap * z2)
                .unwrap_or(f64::NAN);
            (hermite_all(n, z1), y)
        };
        let normal = chunked(exec, paths, seed, |rng, count| {
            let mut acc = NormalEquations::new(dim);
            for _ in 0..count {
                let (x, y) = sample(rng);
                acc.push(&x, y);
            }
            acc
        });
        let beta = solve_linear(normal.xtx.clone(), normal.xty.clone(), dim)?;
        // Var(M_t | W_s) depends on W_s, so use the sandwich estimator:
        // replay the same paths and accumulate Σ e² x xᵀ.
        let meat = chunked(exec, paths, seed, |rng, count| {
            let mut acc = NormalEquations::new(dim);
            for _ in 0..count {
                let (x, y) = sample(rng);
                let e = y - x.iter().zip(&beta).map(|(h, b)| h * b).sum::<f64>();
                let scaled: Vec<f64> = x.iter().map(|h| h * e).collect();
                acc.push(&scaled, 0.0);
            }
            acc
        });

        let mut report = MartingaleReport {
            max_deviation: 0.0,
            max_z_score: 0.0,
            stderr_at_max: 0.0,
        };
        for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
            let basis = hermite_all(n, z);
            let fitted: f64 = basis.iter().zip(&beta).map(|(h, b)| h * b).sum();
            let target = self.chaos_level(n, s, root_s * z)?;
            let weights = solve_linear(normal.xtx.clone(), basis.clone(), dim)?;
            let var: f64 = (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| weights[i] * meat.xtx[i * dim + j] * weights[j])
                .sum();
            let se = var.max(0.0).sqrt();
            let dev = (fitted - target).abs();
            let zscore = if se > 0.0 { dev / se } else { 0.0 };
            if dev > report.max_deviation {
                report.max_deviation = dev;
                report.stderr_at_max = se;
            }
            report.max_z_score = report.max_z_score.max(zscore);
        }
        Ok(report)
    }
}

fn check_paths(paths: usize) -> Result<()> {
    if paths < MIN_PATHS {
        return Err(Error::invalid("paths", paths as f64, "need at least 10000 paths"));
    }
    Ok(())
}

trait Mergeable: Send {
    fn merge(self, other: Self) -> Self;
}

impl Mergeable for Moments {
    fn merge(self, other: Self) -> Self {
        Moments::merge(self, other)
    }
}

fn chunked<A, F>(exec: Execution, paths: usize, seed: u64, work: F) -> A
where
    A: Mergeable,
    F: Fn(&mut ChaCha8Rng, usize) -> A + Sync + Send,
{
    let chunks = paths.div_ceil(CHUNK_PATHS);
    let parts = map_range(exec, chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let n = CHUNK_PATHS.min(paths - c * CHUNK_PATHS);
        work(&mut rng, n)
    });
    pairwise_merge(parts, A::merge).expect("at least one chunk")
}

#[derive(Debug, Clone)]
struct NormalEquations {
    count: u64,
    xtx: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
}

impl NormalEquations {
    fn new(dim: usize) -> Self {
        Self {
            count: 0,
            xtx: vec![0.0; dim * dim],
            xty: vec![0.0; dim],
            yty: 0.0,
        }
    }

    fn push(&mut self, x: &[f64], y: f64) {
        let dim = x.len();
        self.count += 1;
        for i in 0..dim {
            for j in 0..dim {
                self.xtx[i * dim + j] += x[i] * x[j];
            }
            self.xty[i] += x[i] * y;
        }
        self.yty += y * y;
    }
}

impl Mergeable for NormalEquations {
    fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        self.xtx.iter_mut().zip(&other.xtx).for_each(|(a, b)| *a += b);
        self.xty.iter_mut().zip(&other.xty).for_each(|(a, b)| *a += b);
        self.yty += other.yty;
        self
    }
}

/// Gaussian elimination with partial pivoting on a row-major `dim × dim` system.
fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>, dim: usize) -> Result<Vec<f64>> {
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&i, &j| a[i * dim + col].abs().total_cmp(&a[j * dim + col].abs()))
            .unwrap();
        if a[pivot * dim + col].abs() < 1e-300 {
            return Err(Error::invalid("design", 0.0, "singular regression matrix"));
        }
        if pivot != col {
            for k in 0..dim {
                a.swap(col * dim + k, pivot * dim + k);
            }
            b.swap(col, pivot);
        }
        for row in col + 1..dim {
            let f = a[row * dim + col] / a[col * dim + col];
            for k in col..dim {
                a[row * dim + k] -= f * a[col * dim + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for row in (0..dim).rev() {
        let tail: f64 = (row + 1..dim).map(|k| a[row * dim + k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row * dim + row];
    }
    Ok(x)
}

/// One row of the strong-error comparison between Black-Scholes and its
/// degree-`n` chaos extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L2ErrorReport {
    pub n: usize,
    pub t: f64,
    pub analytic_err: f64,
    pub mc_err: f64,
    /// Standard error of `mc_err`.
    pub mc_stderr: f64,
    /// Standard error of `mc_err²`, the sample mean of squared distances.
    pub mc_sq_stderr: f64,
    pub bound: f64,
}

impl L2ErrorReport {
    /// `|mc_err² − analytic_err²| ≤ k · se(mc_err²)`
    pub fn within(&self, k: f64) -> bool {
        (self.mc_err * self.mc_err - self.analytic_err * self.analytic_err).abs()
            <= k * self.mc_sq_stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    /// Largest `|Ê[M_t | W_s] − M_s|` on the evaluation grid.
    pub max_deviation: f64,
    /// Largest deviation in units of its regression standard error.
    pub max_z_score: f64,
    pub stderr_at_max: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn low_degree_hermite() {
        assert_eq!(hermite_eval(0, 3.7), 1.0);
        assert_eq!(hermite_eval(1, 3.7), 3.7);
        assert_eq!(hermite_eval(2, 3.0), 4.0);
        for x in [-1.5, 0.0, 0.4, 2.2] {
            assert_relative_eq!(hermite_eval(2, x), (x * x - 1.0) / 2.0, max_relative = 1e-15, epsilon = 1e-16);
            assert_relative_eq!(hermite_eval(3, x), (x * x * x - 3.0 * x) / 6.0, max_relative = 1e-14, epsilon = 1e-16);
            let all = hermite_all(8, x);
            for (n, h) in all.iter().enumerate() {
                assert_eq!(*h, hermite_eval(n, x));
            }
        }
    }

    #[test]
    fn generating_function() {
        for &v in &[0.1f64, 0.3, 0.5] {
            for i in 0..=16 {
                let z = -4.0 + 0.5 * i as f64;
                let series: f64 = hermite_all(30, z)
                    .iter()
                    .enumerate()
                    .map(|(n, h)| v.powi(n as i32) * h)
                    .sum();
                let exact = (v * z - 0.5 * v * v).exp();
                assert!((series - exact).abs() <= 1e-12 * exact.max(1.0), "v={v} z={z}");
            }
        }
    }

    #[test]
    fn explicit_levels() {
        let ext = ChaosExtension::new(3, 1.0, 1.0).unwrap();
        assert_eq!(ext.chaos_level(0, 1.0, 2.0).unwrap(), 1.0);
        assert_relative_eq!(ext.chaos_level(2, 1.0, 2.0).unwrap(), 1.5, max_relative = 1e-15);
        let ext = ChaosExtension::new(2, 50.0, 0.3).unwrap();
        let (t, w) = (0.7, -0.4);
        assert_relative_eq!(ext.chaos_level(1, t, w).unwrap(), 50.0 * 0.3 * w, max_relative = 1e-14);
        assert_relative_eq!(
            ext.chaos_level(2, t, w).unwrap(),
            50.0 * 0.09 * (w * w - t) / 2.0,
            max_relative = 1e-13
        );
        // degree 1 is the Bachelier model S_0 + S_0σW_t
        let one = ChaosExtension::new(1, 50.0, 0.3).unwrap();
        assert_relative_eq!(one.value(t, w).unwrap(), 50.0 + 15.0 * w, max_relative = 1e-15);
        assert!(ext.chaos_level(3, t, w).is_err());
        assert!(ext.chaos_level(1, 0.0, w).is_err());
        assert!(ChaosExtension::new(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn value_is_sum_of_levels() {
        let ext = ChaosExtension::new(5, 80.0, 0.25).unwrap();
        for w in [-1.2, 0.1, 0.9] {
            let sum: f64 = (0..=5).map(|n| ext.chaos_level(n, 0.6, w).unwrap()).sum();
            assert_relative_eq!(ext.value(0.6, w).unwrap(), sum, max_relative = 1e-13);
        }
    }

    #[test]
    fn analytic_distance_cases() {
        let ext = ChaosExtension::new(1, 100.0, 0.2).unwrap();
        let d = ext.analytic_l2_distance(1.0).unwrap();
        assert_relative_eq!(d, 100.0 * (0.04f64.exp() - 1.0 - 0.04).sqrt(), max_relative = 1e-12);
        assert_relative_eq!(d, 2.847_409_686_694_605, max_relative = 1e-13);
        let mut prev = f64::INFINITY;
        for n in 1..20 {
            let e = ChaosExtension::new(n, 100.0, 0.2).unwrap();
            let d = e.analytic_l2_distance(1.0).unwrap();
            assert!(d < prev);
            prev = d;
            let b = e.l2_bound(1.0, 1.0).unwrap();
            assert_relative_eq!(d * d, b * b, max_relative = 1e-13);
        }
        assert!(prev < 1e-15);
        assert!(ext.analytic_l2_distance(0.0).is_err());
    }

    #[test]
    fn sharp_constant_increases_in_time() {
        let ext = ChaosExtension::new(2, 1.0, 0.4).unwrap();
        let grid: Vec<f64> = (1..=50).map(|i| 0.05 * i as f64).collect();
        let cs: Vec<f64> = grid.iter().map(|&t| ext.sharp_constant(t).unwrap()).collect();
        assert!(cs.windows(2).all(|w| w[1] > w[0]));
        // bound with the constant taken at the horizon dominates the pointwise one
        for &t in &grid {
            assert!(ext.l2_bound(t, 2.5).unwrap() >= ext.analytic_l2_distance(t).unwrap());
        }
        // C_N(0+)² = 1/(N+1)!
        assert_relative_eq!(ext.sharp_constant(1e-12).unwrap(), (1.0f64 / 6.0).sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn reconstruction_relative_error() {
        let ext = ChaosExtension::new(12, 100.0, 0.5).unwrap();
        let rel = ext.analytic_l2_distance(1.0).unwrap() / (100.0 * (0.125f64).exp());
        assert!(rel < 1e-8, "{rel}");
    }

    #[test]
    fn mc_determinism_and_validation() {
        let ext = ChaosExtension::new(2, 100.0, 0.2).unwrap();
        let a = ext.mc_l2_distance_with(Execution::Sequential, 1.0, 50_000, 11).unwrap();
        let b = ext.mc_l2_distance_with(Execution::Parallel, 1.0, 50_000, 11).unwrap();
        assert_eq!(a, b);
        let c = ext.mc_l2_distance(1.0, 50_000, 12).unwrap();
        assert_ne!(a.mc_err, c.mc_err);
        assert!(ext.mc_l2_distance(1.0, 9_999, 1).is_err());
        assert!(ext.mc_l2_distance(0.0, 10_000, 1).is_err());
        assert!(a.within(3.0), "{a:?}");
    }

    #[test]
    fn martingale_checks() {
        let ext = ChaosExtension::new(3, 1.0, 0.5).unwrap();
        let r = ext.martingale_check(0, 0.5, 1.0, 10_000, 1).unwrap();
        assert_eq!(r.max_deviation, 0.0);
        for n in 1..=3 {
            let r = ext.martingale_check(n, 0.5, 1.0, 200_000, 5 + n as u64).unwrap();
            assert!(r.max_z_score < 3.0, "n={n}: {r:?}");
        }
        assert!(ext.martingale_check(2, 1.0, 1.0, 10_000, 1).is_err());
        assert!(ext.martingale_check(2, 1.5, 1.0, 10_000, 1).is_err());
        assert!(ext.martingale_check(4, 0.5, 1.0, 10_000, 1).is_err());
    }

    #[test]
    fn solve_linear_small_system() {
        let x = solve_linear(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0], 2).unwrap();
        assert_relative_eq!(x[0], 0.8, max_relative = 1e-14);
        assert_relative_eq!(x[1], 1.4, max_relative = 1e-14);
        assert!(solve_linear(vec![0.0; 4], vec![1.0, 1.0], 2).is_err());
    }
}
