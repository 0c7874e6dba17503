//! Model parameter types, the moneyness frame and the Gaussian building blocks
//! shared by the pricing, series and chaos code.
//!
//! All prices are forward ("true") prices: payments happen at maturity, so no
//! discounting appears anywhere.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Result};

/// 1/√(2π)
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// √(2π)
pub const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

/// Arithmetic Brownian motion `S_t = S_0 + σ W_t` with absolute volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BachelierParams {
    s0: f64,
    sigma_abs: f64,
    maturity: f64,
}

impl BachelierParams {
    pub fn new(s0: f64, sigma_abs: f64, maturity: f64) -> Result<Self> {
        Ok(Self {
            s0: ensure_positive("s0", s0)?,
            sigma_abs: ensure_positive("sigma_abs", sigma_abs)?,
            maturity: ensure_positive("maturity", maturity)?,
        })
    }

    /// Bachelier model whose ATM price equals `a`, i.e. `σ√T = a√(2π)` with `T = 1`.
    pub fn from_atm_price(s0: f64, a: f64) -> Result<Self> {
        ensure_positive("a", a)?;
        Self::new(s0, a * SQRT_2PI, 1.0)
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn sigma_abs(&self) -> f64 {
        self.sigma_abs
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// Standard deviation of `S_T - S_0`.
    pub fn total_std(&self) -> f64 {
        self.sigma_abs * self.maturity.sqrt()
    }

    /// Coefficient of nervousness `H = σ/√(2π)`, the ATM price per unit √time.
    pub fn nervousness(&self) -> f64 {
        self.sigma_abs * FRAC_1_SQRT_2PI
    }

    /// ATM option price `a = σ√T/√(2π)`.
    pub fn atm_price(&self) -> f64 {
        self.total_std() * FRAC_1_SQRT_2PI
    }
}

/// Geometric Brownian motion `S_t = S_0 exp(σ W_t − σ²t/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlackScholesParams {
    s0: f64,
    sigma_rel: f64,
    maturity: f64,
}

impl BlackScholesParams {
    pub fn new(s0: f64, sigma_rel: f64, maturity: f64) -> Result<Self> {
        Ok(Self {
            s0: ensure_positive("s0", s0)?,
            sigma_rel: ensure_positive("sigma_rel", sigma_rel)?,
            maturity: ensure_positive("maturity", maturity)?,
        })
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn sigma_rel(&self) -> f64 {
        self.sigma_rel
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    /// `σ√T`
    pub fn total_vol(&self) -> f64 {
        self.sigma_rel * self.maturity.sqrt()
    }

    /// Bachelier model with the matched volatility `σ_B = S_0 σ`.
    pub fn matched_bachelier(&self) -> BachelierParams {
        BachelierParams {
            s0: self.s0,
            sigma_abs: self.s0 * self.sigma_rel,
            maturity: self.maturity,
        }
    }
}

/// Either model, for operations defined on both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Bachelier(BachelierParams),
    BlackScholes(BlackScholesParams),
}

impl From<BachelierParams> for ModelParams {
    fn from(p: BachelierParams) -> Self {
        ModelParams::Bachelier(p)
    }
}

impl From<BlackScholesParams> for ModelParams {
    fn from(p: BlackScholesParams) -> Self {
        ModelParams::BlackScholes(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    strike: f64,
    kind: OptionKind,
}

impl OptionSpec {
    pub fn new(strike: f64, kind: OptionKind) -> Result<Self> {
        Ok(Self {
            strike: ensure_positive("strike", strike)?,
            kind,
        })
    }

    pub fn call(strike: f64) -> Result<Self> {
        Self::new(strike, OptionKind::Call)
    }

    pub fn put(strike: f64) -> Result<Self> {
        Self::new(strike, OptionKind::Put)
    }

    pub fn strike(&self) -> f64 {
        self.strike
    }

    pub fn kind(&self) -> OptionKind {
        self.kind
    }
}

/// Bachelier's shifted coordinates: ATM price `a` and moneyness `m = K − S_0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoneynessFrame {
    pub a: f64,
    pub m: f64,
}

impl MoneynessFrame {
    pub fn new(a: f64, m: f64) -> Result<Self> {
        Ok(Self {
            a: ensure_positive("a", a)?,
            m: ensure_finite("m", m)?,
        })
    }

    pub fn from_params(params: &BachelierParams, spec: &OptionSpec) -> Self {
        Self {
            a: params.atm_price(),
            m: spec.strike() - params.s0(),
        }
    }

    /// Standard deviation `σ√T = a√(2π)` of the displacement `S_T − S_0`.
    pub fn total_std(&self) -> f64 {
        self.a * SQRT_2PI
    }

    /// Dimensionless moneyness `m/a`.
    pub fn ratio(&self) -> f64 {
        self.m / self.a
    }
}

/// Standard normal density without input checks; NaN propagates.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function via `erfc`, accurate in both tails.
#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `Φ(x/2) − Φ(−x/2)`, computed without cancellation for small `x`.
#[inline]
pub fn central_mass(x: f64) -> f64 {
    libm::erf(0.5 * x * FRAC_1_SQRT_2)
}

/// Normal loss function `E[(Z − x)⁺] = φ(x) − x Φ(−x)`, with full relative
/// accuracy in the upper tail. Negative arguments use `L(x) = −x + L(−x)`.
pub fn normal_loss(x: f64) -> f64 {
    if x < 0.0 {
        -x + normal_loss(-x)
    } else if x < LOSS_CF_THRESHOLD {
        norm_pdf(x) - x * norm_cdf(-x)
    } else {
        norm_pdf(x) * loss_ratio(x)
    }
}

const LOSS_CF_THRESHOLD: f64 = 3.0;

/// `L(w)/φ(w) = 1 − w Φ(−w)/φ(w)`. Above the threshold it comes from the
/// Laplace continued fraction of the Mills ratio, `Φ(−w)/φ(w) = 1/(w + R)`,
/// which gives `R/(w + R)` with no subtraction.
pub(crate) fn loss_ratio(w: f64) -> f64 {
    if w < LOSS_CF_THRESHOLD {
        return 1.0 - w * norm_cdf(-w) / norm_pdf(w);
    }
    let mut tail = 0.0;
    for k in (2..=60).rev() {
        tail = k as f64 / (w + tail);
    }
    let r = 1.0 / (w + tail);
    r / (w + r)
}

pub fn std_normal_pdf(x: f64) -> Result<f64> {
    Ok(norm_pdf(ensure_finite("x", x)?))
}

pub fn std_normal_cdf(x: f64) -> Result<f64> {
    Ok(norm_cdf(ensure_finite("x", x)?))
}

/// Density of the displacement `S_T − S_0` in the Bachelier model.
pub fn bachelier_terminal_density(params: &BachelierParams, x: f64) -> Result<f64> {
    ensure_finite("x", x)?;
    let sd = params.total_std();
    Ok(norm_pdf(x / sd) / sd)
}

/// The same density in the `a` parametrization: `ψ(x) = exp(−x²/(4πa²)) / (2πa)`.
pub fn gaussian_density_in_a(a: f64, x: f64) -> f64 {
    (-x * x / (4.0 * PI * a * a)).exp() / (2.0 * PI * a)
}
