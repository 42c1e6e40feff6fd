//! Competitive parameters and the pseudo-cost functions built from them.

use serde::{Deserialize, Serialize};

use super::lambert::lambert_w0;
use crate::error::{Result, SoadError};

/// Which pseudo-cost to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// `psi`, parameterized by `eta`.
    Robust,
    /// `psi^(eps)`, parameterized by `gamma^(eps)`.
    Clip,
}

/// Bounds of an instance together with the derived parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoCostParams {
    pub upper: f64,
    pub lower: f64,
    pub d: f64,
    pub tau: f64,
    pub eta: f64,
    pub gamma_eps: Option<f64>,
    pub epsilon: Option<f64>,
}

impl PseudoCostParams {
    pub fn robust(upper: f64, lower: f64, d: f64, tau: f64) -> Result<Self> {
        let eta = solve_eta(upper, lower, d, tau)?;
        Ok(PseudoCostParams { upper, lower, d, tau, eta, gamma_eps: None, epsilon: None })
    }

    pub fn with_epsilon(upper: f64, lower: f64, d: f64, tau: f64, epsilon: f64) -> Result<Self> {
        let mut p = Self::robust(upper, lower, d, tau)?;
        p.gamma_eps = Some(solve_gamma(upper, lower, d, tau, epsilon)?);
        p.epsilon = Some(epsilon);
        Ok(p)
    }

    /// The function as `alpha + kappa * exp(z / theta)`.
    pub fn curve(&self, variant: Variant) -> ExpCurve {
        let (u, d, tau) = (self.upper, self.d, self.tau);
        match variant {
            Variant::Robust => {
                let eta = self.eta;
                ExpCurve { alpha: u - tau, kappa: u / eta - u + d + tau, theta: eta }
            }
            Variant::Clip => {
                let g = self.gamma_eps.expect("clip variant needs gamma");
                ExpCurve { alpha: u + d - tau, kappa: (u + d) / g - u + d + tau, theta: g }
            }
        }
    }

    pub fn psi(&self, z: f64, variant: Variant) -> f64 {
        self.curve(variant).value(z)
    }

    pub fn psi_integral(&self, a: f64, b: f64, variant: Variant) -> f64 {
        self.curve(variant).integral(a, b)
    }
}

/// `alpha + kappa * exp(z / theta)` with its antiderivative and inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpCurve {
    pub alpha: f64,
    pub kappa: f64,
    pub theta: f64,
}

impl ExpCurve {
    pub fn value(&self, z: f64) -> f64 {
        self.alpha + self.kappa * (z / self.theta).exp()
    }

    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let t = self.theta;
        self.alpha * (b - a) + self.kappa * t * ((b / t).exp() - (a / t).exp())
    }

    /// Point `z` with `value(z) = s`, if the curve reaches `s`.
    pub fn inverse(&self, s: f64) -> Option<f64> {
        if self.kappa == 0.0 {
            return None;
        }
        let r = (s - self.alpha) / self.kappa;
        if r > 0.0 {
            Some(self.theta * r.ln())
        } else {
            None
        }
    }
}

fn check_assumptions(upper: f64, lower: f64, d: f64, tau: f64) -> Result<()> {
    if !(lower > 0.0) || !(upper > lower) || !(d >= 0.0) || !(tau >= 0.0) {
        return Err(SoadError::Domain(format!("need 0 < L < U, D >= 0, tau >= 0; got U={upper} L={lower} D={d} tau={tau}")));
    }
    let slack = upper - lower - d - 2.0 * tau;
    if slack < -1e-12 * upper {
        return Err(SoadError::Domain(format!("D + 2tau > U - L (slack {slack})")));
    }
    Ok(())
}

/// Closed form for `eta`:
/// `1 / [W0(((D + L - U + 2tau)/U) exp((D - U)/U)) + (U - D)/U]`.
pub fn solve_eta(upper: f64, lower: f64, d: f64, tau: f64) -> Result<f64> {
    check_assumptions(upper, lower, d, tau)?;
    let a = ((upper - lower - d - 2.0 * tau) / upper).max(0.0);
    let b = (upper - d) / upper;
    let w = lambert_w0(-a * (-b).exp())?;
    Ok(1.0 / (w + b))
}

/// Residual `ln((U-L-D-2tau)/(U-U/eta-D)) - 1/eta` of the defining equation.
pub fn eta_residual(upper: f64, lower: f64, d: f64, tau: f64, eta: f64) -> f64 {
    ((upper - lower - d - 2.0 * tau) / (upper - upper / eta - d)).ln() - 1.0 / eta
}

/// Independent route to `eta`: bisection on `x = 1/eta` for
/// `(b - x) e^x = a` on `[0, b)`, where the left side is decreasing.
pub fn solve_eta_bisection(upper: f64, lower: f64, d: f64, tau: f64) -> Result<f64> {
    check_assumptions(upper, lower, d, tau)?;
    let a = (upper - lower - d - 2.0 * tau) / upper;
    let b = (upper - d) / upper;
    let phi = |x: f64| (b - x) * x.exp() - a;
    let (mut lo, mut hi) = (0.0f64, b);
    if phi(lo) < 0.0 {
        return Err(SoadError::NoBracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-17 {
            break;
        }
    }
    Ok(1.0 / (0.5 * (lo + hi)))
}

/// Residual of the `gamma^(eps)` fixed-point equation.
pub fn gamma_residual(upper: f64, lower: f64, d: f64, tau: f64, eps: f64, g: f64) -> f64 {
    let num = upper - lower - d - 2.0 * tau;
    let den = upper - upper / g - d - 2.0 * tau;
    g - eps - upper / lower + g * (upper - lower + d) / lower * (num / den).ln()
}

/// Solves for `gamma^(eps)` by bisection on `[max(eta, pole), U/L]`, where the
/// pole `U / (U - D - 2tau)` is the point at which the logarithm blows up.
pub fn solve_gamma(upper: f64, lower: f64, d: f64, tau: f64, eps: f64) -> Result<f64> {
    check_assumptions(upper, lower, d, tau)?;
    if !(eps > 0.0) {
        return Err(SoadError::Domain(format!("epsilon must be positive, got {eps}")));
    }
    let eta = solve_eta(upper, lower, d, tau)?;
    let pole = upper / (upper - d - 2.0 * tau);
    let hi0 = upper / lower;
    let mut lo = eta.max(pole * (1.0 + 1e-12));
    let mut hi = hi0;
    let r = |g: f64| gamma_residual(upper, lower, d, tau, eps, g);
    let (rlo, rhi) = (r(lo), r(hi));
    if rlo.abs() < 1e-12 {
        return Ok(lo);
    }
    if !(rhi < 0.0) || !(rlo > 0.0) {
        return Err(SoadError::NoBracket { lo, hi });
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        let v = r(mid);
        if v > 0.0 || v.is_nan() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-16 * hi {
            break;
        }
    }
    // Pick the endpoint with the smaller residual.
    Ok(if r(lo).abs() < r(hi).abs() { lo } else { hi })
}
