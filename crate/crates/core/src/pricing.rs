//! Closed-form European prices in both models, parity, and the at-the-money
//! call / binary / Dirac instruments.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::models::{
    central_mass, loss_ratio, norm_cdf, norm_pdf, normal_loss, BachelierParams, BlackScholesParams, ModelParams,
    MoneynessFrame, OptionKind, OptionSpec, FRAC_1_SQRT_2PI,
};

/// Below this total volatility `σ√T` prices collapse to intrinsic value.
pub const DEGENERATE_TOTAL_VOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Model {
    Bachelier,
    BlackScholes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub price: f64,
    pub model: Model,
}

/// Bachelier call in the `(a, m)` frame: `−m Φ(−m/s) + s φ(−m/s)` with `s = a√(2π)`.
pub fn bachelier_call_frame(frame: &MoneynessFrame) -> f64 {
    bachelier_call_raw(frame.m, frame.total_std())
}

/// Bachelier put in the `(a, m)` frame. Evaluated as the reflected call
/// `C(−m)`, which equals `C(m) + m` but keeps full relative accuracy out of
/// the money.
pub fn bachelier_put_frame(frame: &MoneynessFrame) -> f64 {
    bachelier_call_raw(-frame.m, frame.total_std())
}

pub(crate) fn bachelier_call_raw(m: f64, total_std: f64) -> f64 {
    if total_std < DEGENERATE_TOTAL_VOL {
        return (-m).max(0.0);
    }
    if m < 0.0 {
        // intrinsic value exactly, plus the (positive) time value
        -m + total_std * normal_loss(-m / total_std)
    } else {
        total_std * normal_loss(m / total_std)
    }
}

/// `∂C/∂σ_B` for the Bachelier call.
pub(crate) fn bachelier_vega_raw(m: f64, sigma_abs: f64, maturity: f64) -> f64 {
    let sqrt_t = maturity.sqrt();
    let s = sigma_abs * sqrt_t;
    if s < DEGENERATE_TOTAL_VOL {
        return 0.0;
    }
    sqrt_t * norm_pdf(m / s)
}

pub fn bachelier_call(params: &BachelierParams, spec: &OptionSpec) -> PriceResult {
    PriceResult {
        price: bachelier_call_frame(&MoneynessFrame::from_params(params, spec)),
        model: Model::Bachelier,
    }
}

pub fn bachelier_put(params: &BachelierParams, spec: &OptionSpec) -> PriceResult {
    PriceResult {
        price: bachelier_put_frame(&MoneynessFrame::from_params(params, spec)),
        model: Model::Bachelier,
    }
}

/// Call or put according to `spec.kind()`.
pub fn bachelier_price(params: &BachelierParams, spec: &OptionSpec) -> PriceResult {
    match spec.kind() {
        OptionKind::Call => bachelier_call(params, spec),
        OptionKind::Put => bachelier_put(params, spec),
    }
}

pub(crate) fn bs_call_raw(s0: f64, strike: f64, total_vol: f64) -> f64 {
    if total_vol < DEGENERATE_TOTAL_VOL {
        return (s0 - strike).max(0.0);
    }
    if strike == s0 {
        return s0 * central_mass(total_vol);
    }
    let d1 = ((s0 / strike).ln() + 0.5 * total_vol * total_vol) / total_vol;
    if d1 < 0.0 && total_vol < 1.0 {
        return s0 * norm_pdf(d1) * otm_integral(-d1, total_vol);
    }
    let d2 = d1 - total_vol;
    s0 * norm_cdf(d1) - strike * norm_cdf(d2)
}

/// `∫_u^{u+v} L(w)/φ(w) dw` by 16-point Gauss-Legendre. Out of the money,
/// `S_0 Φ(d_1) − K Φ(d_2) = S_0 φ(d_1) · ∫_{−d_1}^{−d_2} L(w)/φ(w) dw`
/// because `K φ(d_2) = S_0 φ(d_1)`; the integrand is positive and smooth.
fn otm_integral(u: f64, v: f64) -> f64 {
    const NODES: [(f64, f64); 8] = [
        (0.095_012_509_837_637_45, 0.189_450_610_455_068_6),
        (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
        (0.458_016_777_657_227_4, 0.169_156_519_395_002_6),
        (0.617_876_244_402_643_8, 0.149_595_988_816_576_8),
        (0.755_404_408_355_003, 0.124_628_971_255_534),
        (0.865_631_202_387_831_8, 0.095_158_511_682_492_59),
        (0.944_575_023_073_232_6, 0.062_253_523_938_647_71),
        (0.989_400_934_991_649_9, 0.027_152_459_411_754_04),
    ];
    let (mid, half) = (u + 0.5 * v, 0.5 * v);
    let sum: f64 = NODES
        .iter()
        .map(|&(x, w)| w * (loss_ratio(mid - half * x) + loss_ratio(mid + half * x)))
        .sum();
    half * sum
}

/// `∂C/∂σ` for the Black-Scholes call.
pub(crate) fn bs_vega_raw(s0: f64, strike: f64, sigma: f64, maturity: f64) -> f64 {
    let sqrt_t = maturity.sqrt();
    let total_vol = sigma * sqrt_t;
    if total_vol < DEGENERATE_TOTAL_VOL {
        return 0.0;
    }
    let d1 = ((s0 / strike).ln() + 0.5 * total_vol * total_vol) / total_vol;
    s0 * sqrt_t * norm_pdf(d1)
}

pub fn bs_call(params: &BlackScholesParams, spec: &OptionSpec) -> PriceResult {
    PriceResult {
        price: bs_call_raw(params.s0(), spec.strike(), params.total_vol()),
        model: Model::BlackScholes,
    }
}

pub fn bs_put(params: &BlackScholesParams, spec: &OptionSpec) -> PriceResult {
    let call = bs_call(params, spec).price;
    PriceResult {
        price: call + (spec.strike() - params.s0()),
        model: Model::BlackScholes,
    }
}

pub fn bs_price(params: &BlackScholesParams, spec: &OptionSpec) -> PriceResult {
    match spec.kind() {
        OptionKind::Call => bs_call(params, spec),
        OptionKind::Put => bs_put(params, spec),
    }
}

/// Call price from a put quote by parity under zero rates: `C = P − (K − S_0)`.
pub fn put_to_call(put: f64, s0: f64, strike: f64) -> f64 {
    put - (strike - s0)
}

/// At-the-money call `C(0)`, binary `B(0) = P[S_T ≥ S_0]` and Dirac value
/// `ψ(0)`, the density of `S_T − S_0` at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtmInstruments {
    pub c0: f64,
    pub b0: f64,
    pub psi0: f64,
}

pub fn atm_binary_and_dirac(model: impl Into<ModelParams>) -> AtmInstruments {
    match model.into() {
        ModelParams::Bachelier(p) => {
            let a = p.atm_price();
            AtmInstruments {
                c0: a,
                b0: 0.5,
                psi0: FRAC_1_SQRT_2PI / p.total_std(),
            }
        }
        ModelParams::BlackScholes(p) => {
            let v = p.total_vol();
            AtmInstruments {
                c0: bs_call_raw(p.s0(), p.s0(), v),
                b0: norm_cdf(-0.5 * v),
                // lognormal density of S_T evaluated at S_0
                psi0: FRAC_1_SQRT_2PI / (p.s0() * v) * (-v * v / 8.0).exp(),
            }
        }
    }
}

/// At-the-money comparison of the two models under the coupling `σ_B = S_0 σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtmPriceGap {
    pub bachelier: f64,
    pub black_scholes: f64,
    /// `C_B − C_BS`
    pub gap: f64,
    /// `S_0 σ³ T^{3/2} / (12√(2π))`
    pub bound: f64,
    /// `S_0 σ³ T^{3/2} / (24√(2π))`, the constant reached by the integral estimate.
    pub sharp_bound: f64,
    /// `(C_B − C_BS) / C_B`
    pub relative_gap: f64,
    /// `T σ² / 12`
    pub relative_bound: f64,
}

impl AtmPriceGap {
    pub fn holds(&self) -> bool {
        self.gap >= 0.0 && self.gap <= self.bound && self.relative_gap <= self.relative_bound
    }

    pub fn holds_sharp(&self) -> bool {
        self.gap >= 0.0 && self.gap <= self.sharp_bound
    }
}

pub fn atm_price_gap(s0: f64, sigma: f64, maturity: f64) -> Result<AtmPriceGap> {
    let bs = BlackScholesParams::new(s0, sigma, maturity)?;
    let x = bs.total_vol();
    let bachelier = s0 * x * FRAC_1_SQRT_2PI;
    let black_scholes = s0 * central_mass(x);
    let gap = bachelier - black_scholes;
    let cube = s0 * x * x * x * FRAC_1_SQRT_2PI;
    Ok(AtmPriceGap {
        bachelier,
        black_scholes,
        gap,
        bound: cube / 12.0,
        sharp_bound: cube / 24.0,
        relative_gap: gap / bachelier,
        relative_bound: x * x / 12.0,
    })
}

/// Intrinsic value of a call, `(S_0 − K)_+`.
pub fn call_intrinsic(s0: f64, strike: f64) -> f64 {
    (s0 - strike).max(0.0)
}
