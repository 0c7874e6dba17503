//! Implied volatility in both models.
//!
//! Inversion is a safeguarded Newton iteration on `ln C`, on a bracket kept
//! valid by monotonicity of the call price in volatility: every evaluation
//! shrinks the bracket, Newton steps that leave it are replaced by a
//! (geometric) bisection step. Tolerances are in price space.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_positive, Error, Result};
use crate::models::{OptionKind, SQRT_2PI};
use crate::pricing::{
    bachelier_call_raw, bachelier_vega_raw, bs_call_raw, bs_vega_raw, call_intrinsic, put_to_call,
    Model,
};

/// Relative price tolerance: `|C(σ) − price| ≤ PRICE_TOLERANCE · price`.
pub const PRICE_TOLERANCE: f64 = 1e-10;

const MAX_ITERATIONS: u32 = 300;
const MAX_BRACKET_STEPS: u32 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpliedVolResult {
    /// Absolute volatility for Bachelier, relative for Black-Scholes.
    pub vol: f64,
    pub iterations: u32,
    /// `C(vol) − price`
    pub residual: f64,
}

/// `σ_B = C √(2π/T)` for an at-the-money price.
pub fn atm_implied_bachelier(price: f64, maturity: f64) -> Result<f64> {
    ensure_positive("price", price)?;
    ensure_positive("maturity", maturity)?;
    Ok(price * (2.0 * PI / maturity).sqrt())
}

/// Bachelier implied volatility of a call quote.
pub fn implied_bachelier(price: f64, s0: f64, strike: f64, maturity: f64) -> Result<ImpliedVolResult> {
    ensure_finite("price", price)?;
    ensure_positive("s0", s0)?;
    ensure_positive("strike", strike)?;
    ensure_positive("maturity", maturity)?;
    let intrinsic = call_intrinsic(s0, strike);
    if price <= intrinsic {
        return Err(Error::BelowIntrinsic { price, intrinsic });
    }
    let m = strike - s0;
    let sqrt_t = maturity.sqrt();
    let guess = (price - intrinsic) * SQRT_2PI / sqrt_t;
    solve(
        price,
        |sigma| bachelier_call_raw(m, sigma * sqrt_t),
        |sigma| bachelier_vega_raw(m, sigma, maturity),
        (1e-10 * s0, 100.0 * s0),
        guess,
        f64::INFINITY,
    )
}

/// Black-Scholes implied volatility of a call quote.
pub fn implied_bs(price: f64, s0: f64, strike: f64, maturity: f64) -> Result<ImpliedVolResult> {
    ensure_finite("price", price)?;
    ensure_positive("s0", s0)?;
    ensure_positive("strike", strike)?;
    ensure_positive("maturity", maturity)?;
    let intrinsic = call_intrinsic(s0, strike);
    if price <= intrinsic {
        return Err(Error::BelowIntrinsic { price, intrinsic });
    }
    if price >= s0 {
        return Err(Error::AboveUpperBound { price, bound: s0 });
    }
    let sqrt_t = maturity.sqrt();
    let guess = (price - intrinsic) * SQRT_2PI / (s0 * sqrt_t);
    solve(
        price,
        |sigma| bs_call_raw(s0, strike, sigma * sqrt_t),
        |sigma| bs_vega_raw(s0, strike, sigma, maturity),
        (1e-10, 10.0),
        guess,
        // σ√T beyond this prices every call at S_0 in double precision
        80.0 / sqrt_t,
    )
}

/// Implied volatility of a call or put quote; puts go through parity first.
pub fn implied_vol(
    model: Model,
    kind: OptionKind,
    price: f64,
    s0: f64,
    strike: f64,
    maturity: f64,
) -> Result<ImpliedVolResult> {
    let call = match kind {
        OptionKind::Call => price,
        OptionKind::Put => {
            ensure_finite("price", price)?;
            if price <= call_intrinsic(strike, s0) {
                return Err(Error::BelowIntrinsic {
                    price,
                    intrinsic: call_intrinsic(strike, s0),
                });
            }
            if model == Model::BlackScholes && price >= strike {
                return Err(Error::AboveUpperBound {
                    price,
                    bound: strike,
                });
            }
            put_to_call(price, s0, strike)
        }
    };
    match model {
        Model::Bachelier => implied_bachelier(call, s0, strike, maturity),
        Model::BlackScholes => implied_bs(call, s0, strike, maturity),
    }
}

fn solve(
    target: f64,
    price: impl Fn(f64) -> f64,
    vega: impl Fn(f64) -> f64,
    (mut lo, mut hi): (f64, f64),
    guess: f64,
    hi_cap: f64,
) -> Result<ImpliedVolResult> {
    let tolerance = PRICE_TOLERANCE * target;
    let mut iterations = 0u32;

    let mut expansions = 0;
    while price(hi) < target {
        if hi >= hi_cap || expansions == MAX_BRACKET_STEPS {
            return Err(Error::NoConvergence {
                iterations,
                residual: price(hi) - target,
            });
        }
        lo = hi;
        hi = (hi * 2.0).min(hi_cap);
        expansions += 1;
        iterations += 1;
    }
    expansions = 0;
    while price(lo) > target {
        if expansions == MAX_BRACKET_STEPS {
            return Err(Error::NoConvergence {
                iterations,
                residual: price(lo) - target,
            });
        }
        hi = lo;
        lo *= 0.5;
        expansions += 1;
        iterations += 1;
    }

    let mut x = if guess > lo && guess < hi {
        guess
    } else {
        (lo * hi).sqrt()
    };
    loop {
        iterations += 1;
        let p = price(x);
        let f = p - target;
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // Newton on ln C: same step as plain Newton near the root, but far
        // out of the money it is not stalled by the exponential tail.
        let slope = vega(x);
        let newton = x - (p / target).ln() * p / slope;
        let next = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else if hi > 4.0 * lo {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        let converged =
            (next - x).abs() <= 4.0 * f64::EPSILON * x || hi - lo <= 4.0 * f64::EPSILON * hi;
        x = next;
        if converged || iterations >= MAX_ITERATIONS {
            break;
        }
    }

    let residual = price(x) - target;
    if residual.abs() > tolerance {
        return Err(Error::NoConvergence {
            iterations,
            residual,
        });
    }
    Ok(ImpliedVolResult {
        vol: x,
        iterations,
        residual,
    })
}

/// At-the-money implied volatilities of one price in both models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolGap {
    pub bs_vol: f64,
    /// Absolute Bachelier volatility `σ_B`.
    pub bachelier_vol: f64,
    /// `σ_BS − σ_B/S_0`
    pub gap: f64,
    /// `T σ_BS³ / 12`
    pub bound: f64,
    pub holds: bool,
}

pub fn implied_vol_gap_bound(c0: f64, s0: f64, maturity: f64) -> Result<VolGap> {
    ensure_positive("s0", s0)?;
    ensure_positive("maturity", maturity)?;
    ensure_finite("c0", c0)?;
    if c0 <= 0.0 {
        return Err(Error::BelowIntrinsic {
            price: c0,
            intrinsic: 0.0,
        });
    }
    if c0 >= s0 {
        return Err(Error::AboveUpperBound {
            price: c0,
            bound: s0,
        });
    }
    let bachelier_vol = atm_implied_bachelier(c0, maturity)?;
    let bs_vol = implied_bs(c0, s0, s0, maturity)?.vol;
    let gap = bs_vol - bachelier_vol / s0;
    let bound = maturity * bs_vol.powi(3) / 12.0;
    Ok(VolGap {
        bs_vol,
        bachelier_vol,
        gap,
        bound,
        holds: (0.0..=bound).contains(&gap),
    })
}
