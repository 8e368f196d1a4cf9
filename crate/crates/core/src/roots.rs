//! Bracketed bisection for monotone nonincreasing profiles in τ².

use crate::error::Result;

/// Search interval for τ²: start with [0, `initial_hi`], double up to `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub initial_hi: f64,
    pub cap: f64,
    /// Absolute width at which bisection stops.
    pub tol: f64,
}

impl Default for Bracket {
    fn default() -> Self {
        Self {
            initial_hi: 5.0,
            cap: 100.0,
            tol: 1e-10,
        }
    }
}

/// Result of solving f(τ²) = target for a nonincreasing f.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RootOutcome {
    Found(f64),
    /// f(0) < target: the solution would be negative.
    BelowZero,
    /// f(cap) > target: no solution inside the bracket cap.
    AboveCap,
}

impl RootOutcome {
    pub fn found(&self) -> Option<f64> {
        match *self {
            RootOutcome::Found(x) => Some(x),
            _ => None,
        }
    }
}

/// Solves f(τ²) = target for nonincreasing f on [0, cap].
pub fn decreasing_root<F>(mut f: F, target: f64, bracket: Bracket) -> Result<RootOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    let at_zero = f(0.0)?;
    if at_zero < target {
        return Ok(RootOutcome::BelowZero);
    }
    if at_zero == target {
        return Ok(RootOutcome::Found(0.0));
    }
    let mut lo = 0.0;
    let mut hi = bracket.initial_hi.min(bracket.cap);
    loop {
        if f(hi)? <= target {
            break;
        }
        if hi >= bracket.cap {
            return Ok(RootOutcome::AboveCap);
        }
        lo = hi;
        hi = (hi * 2.0).min(bracket.cap);
    }
    while hi - lo > bracket.tol {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RootOutcome::Found(0.5 * (lo + hi)))
}
