//! Scalar root finding shared by the level-curve and path solvers.

use crate::error::{Error, Result};

/// Safeguarded Newton iteration on a sign-changing bracket.
///
/// `f` returns the value and derivative. The bracket `[lo, hi]` must satisfy
/// `f(lo) * f(hi) <= 0`; Newton steps that leave it fall back to bisection.
pub(crate) fn newton_bisect<F>(mut f: F, lo: f64, hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let (mut lo, mut hi) = (lo.min(hi), lo.max(hi));
    let (f_lo, _) = f(lo)?;
    let (f_hi, _) = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { upper: hi });
    }
    // Orient so that f(lo) < 0 < f(hi).
    let increasing = f_lo < 0.0;
    let mut x = 0.5 * (lo + hi);
    let mut best = (f64::INFINITY, x);
    for _ in 0..300 {
        let (fx, dfx) = f(x)?;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let next = if dfx != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(1e-300) || hi - lo <= 0.0 {
            let (fn_, _) = f(next)?;
            if fn_.abs() < best.0 {
                best = (fn_.abs(), next);
            }
            return Ok(best.1);
        }
        x = next;
    }
    Ok(best.1)
}

/// Expands `start + k * step` (doubling `step`) until `pred` holds or the
/// bound is crossed; returns the first point satisfying `pred`.
pub(crate) fn expand_until<P>(start: f64, step: f64, bound: f64, mut pred: P) -> Result<Option<f64>>
where
    P: FnMut(f64) -> Result<bool>,
{
    let mut step = step;
    let mut x = start;
    loop {
        x += step;
        if (step > 0.0 && x > bound) || (step < 0.0 && x < bound) {
            return Ok(None);
        }
        if pred(x)? {
            return Ok(Some(x));
        }
        step *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = newton_bisect(|x| Ok((x * x - 2.0, 2.0 * x)), 0.0, 2.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn decreasing_function() {
        let r = newton_bisect(|x| Ok((1.0 - x.exp(), -x.exp())), -1.0, 3.0).unwrap();
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_bracket() {
        assert!(newton_bisect(|x| Ok((x * x + 1.0, 2.0 * x)), -1.0, 1.0).is_err());
    }
}
