//! Power-series expansion of the call price in the moneyness `m = K − S_0`,
//! the quadratic "rules of thumb" built on it, and the call/put reciprocity.
//!
//! For any displacement density `ψ` of `S_T − S_0` that is analytic near zero,
//! `C(m) = Σ c_k m^k` with `c_0 = ∫_0^∞ xψ`, `c_1 = −∫_0^∞ ψ` and
//! `c_k = ψ^{(k−2)}(0)/k!` for `k ≥ 2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::models::{norm_cdf, BachelierParams, BlackScholesParams, MoneynessFrame, FRAC_1_SQRT_2PI, SQRT_2PI};
use crate::pricing::{atm_binary_and_dirac, bachelier_call_frame, bachelier_call_raw, bachelier_put_frame};

/// Highest order with hard-coded Gaussian coefficients.
pub const MAX_CLOSED_FORM_ORDER: usize = 6;

/// Quadratic coefficient of `C(m)P(m) / a²` in `m/a`: `−(π − 2)/(4π)`.
pub const PRODUCT_COEFF: f64 = -(PI - 2.0) / (4.0 * PI);
/// Quadratic coefficient of `C(m)P(m)(C(m)+P(m))/2 / a³` in `m/a`: `−(π − 3)/(4π)`.
pub const TRIPLE_PRODUCT_COEFF: f64 = -(PI - 3.0) / (4.0 * PI);

/// Radius of convergence of an expansion, as far as it is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Radius {
    Unbounded,
    Finite(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    /// `c_0 ..= c_order`
    pub coeffs: Vec<f64>,
    pub radius_hint: Radius,
    pub density_id: String,
}

impl ExpansionCoefficients {
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Copy keeping only `c_0 ..= c_order`.
    pub fn truncated(&self, order: usize) -> Self {
        Self {
            coeffs: self.coeffs[..=order.min(self.order())].to_vec(),
            radius_hint: self.radius_hint,
            density_id: self.density_id.clone(),
        }
    }
}

/// What the expansion needs to know about the density `ψ` of `S_T − S_0`.
pub trait DisplacementDensity {
    fn id(&self) -> String;

    fn density(&self, x: f64) -> f64;

    /// Characteristic width, used to scale finite-difference steps.
    fn scale(&self) -> f64;

    /// `∫_0^∞ ψ(x) dx`
    fn upper_mass(&self) -> f64;

    /// `∫_0^∞ x ψ(x) dx`
    fn upper_first_moment(&self) -> f64;

    /// `∫ |x| ψ(x) dx`; must be finite for the expansion to exist.
    fn first_absolute_moment(&self) -> f64;

    fn radius_hint(&self) -> Radius {
        Radius::Unbounded
    }

    /// `ψ^{(order)}(0)`. The default uses Richardson-extrapolated central
    /// differences (error `O(h⁴)`) with step `h = ε^{1/(order+4)} · scale`.
    fn derivative_at_zero(&self, order: usize) -> f64 {
        if order == 0 {
            return self.density(0.0);
        }
        let h = f64::EPSILON.powf(1.0 / (order as f64 + 4.0)) * self.scale();
        let coarse = central_difference(|x| self.density(x), order, h);
        let fine = central_difference(|x| self.density(x), order, 0.5 * h);
        (4.0 * fine - coarse) / 3.0
    }
}

/// `order`-th central difference quotient at zero, error `O(h²)`.
fn central_difference(f: impl Fn(f64) -> f64, order: usize, h: f64) -> f64 {
    let mut binom = 1.0;
    let mut sum = 0.0;
    for i in 0..=order {
        let x = (0.5 * order as f64 - i as f64) * h;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom * f(x);
        binom = binom * (order - i) as f64 / (i + 1) as f64;
    }
    sum / h.powi(order as i32)
}

/// Centered Gaussian displacement with ATM price `a`, i.e. variance `2πa²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDisplacement {
    pub a: f64,
}

impl GaussianDisplacement {
    pub fn new(a: f64) -> Result<Self> {
        Ok(Self {
            a: ensure_positive("a", a)?,
        })
    }

    fn variance(&self) -> f64 {
        2.0 * PI * self.a * self.a
    }
}

impl DisplacementDensity for GaussianDisplacement {
    fn id(&self) -> String {
        format!("gaussian(a={})", self.a)
    }

    fn density(&self, x: f64) -> f64 {
        crate::models::gaussian_density_in_a(self.a, x)
    }

    fn scale(&self) -> f64 {
        self.a * SQRT_2PI
    }

    fn upper_mass(&self) -> f64 {
        0.5
    }

    fn upper_first_moment(&self) -> f64 {
        self.a
    }

    fn first_absolute_moment(&self) -> f64 {
        2.0 * self.a
    }

    /// `ψ^{(2k)}(0) = ψ(0) (−1)^k (2k−1)!! / v^k`, odd derivatives vanish.
    fn derivative_at_zero(&self, order: usize) -> f64 {
        if order % 2 == 1 {
            return 0.0;
        }
        let v = self.variance();
        let mut value = 1.0 / (2.0 * PI * self.a);
        for j in 0..order / 2 {
            value *= -((2 * j + 1) as f64) / v;
        }
        value
    }
}

/// Law of `S_T − S_0` under Black-Scholes; shifted lognormal, analytic only
/// on `|x| < S_0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LognormalDisplacement {
    pub params: BlackScholesParams,
}

impl DisplacementDensity for LognormalDisplacement {
    fn id(&self) -> String {
        format!(
            "lognormal(s0={}, sigma={}, t={})",
            self.params.s0(),
            self.params.sigma_rel(),
            self.params.maturity()
        )
    }

    fn density(&self, x: f64) -> f64 {
        let s = self.params.s0() + x;
        if s <= 0.0 {
            return 0.0;
        }
        let v = self.params.total_vol();
        let z = ((s / self.params.s0()).ln() + 0.5 * v * v) / v;
        FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / (s * v)
    }

    fn scale(&self) -> f64 {
        self.params.s0() * self.params.total_vol()
    }

    fn upper_mass(&self) -> f64 {
        norm_cdf(-0.5 * self.params.total_vol())
    }

    fn upper_first_moment(&self) -> f64 {
        atm_binary_and_dirac(self.params).c0
    }

    fn first_absolute_moment(&self) -> f64 {
        2.0 * self.upper_first_moment()
    }

    fn radius_hint(&self) -> Radius {
        Radius::Finite(self.params.s0())
    }
}

/// Gaussian coefficients `a, −1/2, 1/(4πa), 0, −1/(96π²a³), 0, 1/(1920π³a⁵)` up to `order ≤ 6`.
pub fn expansion_coefficients_gaussian(a: f64, order: usize) -> Result<ExpansionCoefficients> {
    ensure_positive("a", a)?;
    if order > MAX_CLOSED_FORM_ORDER {
        return Err(Error::invalid(
            "order",
            order as f64,
            "closed-form Gaussian coefficients stop at order 6; use the generic expansion",
        ));
    }
    let all = [
        a,
        -0.5,
        1.0 / (4.0 * PI * a),
        0.0,
        -1.0 / (96.0 * PI * PI * a.powi(3)),
        0.0,
        1.0 / (1920.0 * PI.powi(3) * a.powi(5)),
    ];
    Ok(ExpansionCoefficients {
        coeffs: all[..=order].to_vec(),
        radius_hint: Radius::Unbounded,
        density_id: format!("gaussian(a={a})"),
    })
}

pub fn expansion_coefficients_generic(
    psi: &impl DisplacementDensity,
    order: usize,
) -> Result<ExpansionCoefficients> {
    let moment = psi.first_absolute_moment();
    if !moment.is_finite() {
        return Err(Error::invalid(
            "first_absolute_moment",
            moment,
            "density must have a finite first moment",
        ));
    }
    let mut coeffs = Vec::with_capacity(order + 1);
    coeffs.push(psi.upper_first_moment());
    if order >= 1 {
        coeffs.push(-psi.upper_mass());
    }
    let mut factorial = 1.0;
    for k in 2..=order {
        factorial *= k as f64;
        coeffs.push(psi.derivative_at_zero(k - 2) / factorial);
    }
    Ok(ExpansionCoefficients {
        coeffs,
        radius_hint: psi.radius_hint(),
        density_id: psi.id(),
    })
}

/// `Σ c_k m^k` by Horner's rule.
pub fn eval_series(coeffs: &ExpansionCoefficients, m: f64) -> f64 {
    coeffs.coeffs.iter().rev().fold(0.0, |acc, &c| acc * m + c)
}

/// Dimensionless Bachelier series `F(x)` with `C(m) = a F(m/a)`, truncated at `order ≤ 6`.
pub fn dimensionless_f(x: f64, order: usize) -> Result<f64> {
    Ok(eval_series(&expansion_coefficients_gaussian(1.0, order)?, x))
}

/// Recovers π from the ATM price and a call/put pair at the same strike,
/// using the quadratic term: `C + P − 2a ≈ m²/(2πa)`.
pub fn estimate_pi(a: f64, m: f64, call: f64, put: f64) -> Result<f64> {
    ensure_positive("a", a)?;
    ensure_finite("m", m)?;
    let excess = call + put - 2.0 * a;
    ensure_positive("call + put - 2a", excess)?;
    Ok(m * m / (2.0 * a * excess))
}

/// Quadratic approximation `C(0) − B(0) m + ψ(0) m²/2`.
pub fn rule_of_thumb_1(c0: f64, b0: f64, psi0: f64, m: f64) -> f64 {
    c0 - b0 * m + 0.5 * psi0 * m * m
}

/// Bachelier instance `a − m/2 + m²/(4πa)`.
pub fn bachelier_rule_of_thumb_1(a: f64, m: f64) -> f64 {
    rule_of_thumb_1(a, 0.5, 1.0 / (2.0 * PI * a), m)
}

/// Strike offset `m` whose quadratic approximation equals `price`, taking the
/// root that tends to zero as `price → c0`. `None` below the parabola's minimum.
pub fn invert_rule_of_thumb_1(c0: f64, b0: f64, psi0: f64, price: f64) -> Option<f64> {
    let disc = b0 * b0 - 2.0 * psi0 * (c0 - price);
    if disc < 0.0 {
        return None;
    }
    Some(2.0 * (c0 - price) / (b0 + disc.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThumbReport {
    pub m_over_a: f64,
    pub exact: f64,
    pub approx: f64,
    pub abs_err: f64,
}

/// Exact Bachelier call against its quadratic approximation.
pub fn thumb_report(frame: &MoneynessFrame) -> ThumbReport {
    let exact = bachelier_call_frame(frame);
    let approx = bachelier_rule_of_thumb_1(frame.a, frame.m);
    ThumbReport {
        m_over_a: frame.ratio(),
        exact,
        approx,
        abs_err: (exact - approx).abs(),
    }
}

/// Normalized call-put products and their quadratic predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductRatios {
    pub m_over_a: f64,
    /// `C(m)P(m) / a²`
    pub a_ratio: f64,
    /// `C(m)P(m)(C(m)+P(m))/2 / a³`
    pub b_ratio: f64,
    pub predicted_a: f64,
    pub predicted_b: f64,
}

pub fn rule_of_thumb_2(params: &BachelierParams, m: f64) -> Result<ProductRatios> {
    let frame = MoneynessFrame::new(params.atm_price(), m)?;
    Ok(product_ratios(&frame))
}

pub fn product_ratios(frame: &MoneynessFrame) -> ProductRatios {
    let a = frame.a;
    let c = bachelier_call_frame(frame);
    let p = bachelier_put_frame(frame);
    let x = frame.ratio();
    ProductRatios {
        m_over_a: x,
        a_ratio: c * p / (a * a),
        b_ratio: c * p * 0.5 * (c + p) / (a * a * a),
        predicted_a: 1.0 + PRODUCT_COEFF * x * x,
        predicted_b: 1.0 + TRIPLE_PRODUCT_COEFF * x * x,
    }
}

/// Least-squares fit `y ≈ q0 + q1 x + q2 x²`; returns `[q0, q1, q2]`.
pub fn quadratic_fit(xs: &[f64], ys: &[f64]) -> Result<[f64; 3]> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(Error::invalid(
            "points",
            xs.len() as f64,
            "need at least three (x, y) pairs of equal length",
        ));
    }
    let mut normal = [[0.0; 4]; 3];
    for (&x, &y) in xs.iter().zip(ys) {
        let basis = [1.0, x, x * x];
        for i in 0..3 {
            for j in 0..3 {
                normal[i][j] += basis[i] * basis[j];
            }
            normal[i][3] += basis[i] * y;
        }
    }
    // Gauss-Jordan with partial pivoting on the augmented 3×4 system
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| normal[i][col].abs().total_cmp(&normal[j][col].abs()))
            .unwrap();
        normal.swap(col, pivot);
        let p = normal[col][col];
        if p.abs() < 1e-300 {
            return Err(Error::invalid("points", p, "degenerate abscissae"));
        }
        for row in 0..3 {
            if row != col {
                let factor = normal[row][col] / p;
                for k in col..4 {
                    normal[row][k] -= factor * normal[col][k];
                }
            }
        }
    }
    Ok([
        normal[0][3] / normal[0][0],
        normal[1][3] / normal[1][1],
        normal[2][3] / normal[2][2],
    ])
}

/// Strike offset `m` at which the Bachelier call with ATM price `a` costs `c`.
pub fn moneyness_for_call_price(c: f64, a: f64) -> Result<f64> {
    ensure_positive("c", c)?;
    ensure_positive("a", a)?;
    let s = MoneynessFrame::new(a, 0.0)?.total_std();
    let call = |m: f64| bachelier_call_raw(m, s);
    // C(m) ≥ −m, so C(−c) ≥ c; C decreases to zero as m → ∞
    let mut lo = -c;
    let mut hi = a;
    while call(hi) >= c {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::invalid("c", c, "outside the range of the call price"));
        }
    }
    let mut m = if c < a { 0.0f64.max(lo) } else { lo.max(-c) };
    for _ in 0..300 {
        let f = call(m) - c;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
        // C'(m) = −Φ(−m/s)
        let slope = -norm_cdf(-m / s);
        let newton = m - f / slope;
        let next = if slope < 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let tol = 4.0 * f64::EPSILON * next.abs().max(s);
        let done = (next - m).abs() <= tol || hi - lo <= tol;
        m = next;
        if done {
            break;
        }
    }
    Ok(m)
}

/// The self-inverse map `I` with `P = I(C)` for fixed `a`.
pub fn reciprocity(c: f64, a: f64) -> Result<f64> {
    let m = moneyness_for_call_price(c, a)?;
    let s = MoneynessFrame::new(a, 0.0)?.total_std();
    Ok(bachelier_call_raw(-m, s))
}
