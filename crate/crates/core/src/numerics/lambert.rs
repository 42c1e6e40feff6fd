//! Principal branch of the Lambert W function on the reals.

use std::f64::consts::E;

use crate::error::{Result, SoadError};

const MAX_ITER: usize = 64;

/// `W0(x)` for `x >= -1/e`, solved by Halley iteration.
pub fn lambert_w0(x: f64) -> Result<f64> {
    let branch = -1.0 / E;
    if x.is_nan() || x < branch - 1e-15 {
        return Err(SoadError::Domain(format!("lambert_w0 undefined at {x}")));
    }
    if x <= branch {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = initial_guess(x);
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1.abs() < 1e-300 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        let next = w - step;
        if !next.is_finite() {
            break;
        }
        let done = (next - w).abs() <= 1e-16 * (1.0 + next.abs());
        w = next;
        if done {
            break;
        }
    }
    Ok(w.max(-1.0))
}

fn initial_guess(x: f64) -> f64 {
    if x < -0.25 {
        // Series about the branch point.
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x < 3.0 {
        let l = x.ln_1p();
        l * (1.0 - l.ln_1p() / (2.0 + l))
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    }
}
