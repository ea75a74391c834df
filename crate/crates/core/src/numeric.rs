//! Scalar root finding and line minimization used by the model and the
//! design polish step.

use crate::Error;

/// Numerically stable logistic function `1 / (1 + exp(-x))`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse logistic. `p` must lie strictly inside (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Expands `[lo, hi]` geometrically around its midpoint until `f` changes
/// sign over the interval. Returns the bracketing endpoints.
pub(crate) fn expand_bracket<F: Fn(f64) -> f64>(
    f: &F,
    mut lo: f64,
    mut hi: f64,
    max_expansions: usize,
) -> Result<(f64, f64, f64, f64), Error> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    for _ in 0..max_expansions {
        if flo == 0.0 || fhi == 0.0 || (flo < 0.0) != (fhi < 0.0) {
            return Ok((lo, hi, flo, fhi));
        }
        let mid = 0.5 * (lo + hi);
        let half = hi - mid;
        lo = mid - 2.0 * half;
        hi = mid + 2.0 * half;
        flo = f(lo);
        fhi = f(hi);
    }
    Err(Error::BracketFailure { lo, hi })
}

/// Brent's method on `[lo, hi]`, expanding the bracket geometrically when the
/// endpoints do not straddle a sign change. Iterates until `|f| <= f_tol` or
/// the bracket collapses to machine precision.
pub(crate) fn brent_root<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    f_tol: f64,
) -> Result<f64, Error> {
    let (mut a, mut b, mut fa, mut fb) = expand_bracket(&f, lo, hi, 80)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    // Keep b as the best estimate.
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 1e-15;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= f_tol {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // Inverse quadratic interpolation, falling back to secant.
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
    }
    Ok(b)
}

/// Golden-section minimization of `f` on `[a, b]` down to interval width
/// `x_tol`. Assumes `f` is unimodal on the interval.
pub(crate) fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, x_tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    if b < a {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > x_tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Local minimization of `f` around `x0`, constrained to `[lo, hi]`.
///
/// Probes a growing neighbourhood of `x0` for a descent bracket, then
/// refines with golden-section search. Returns `x0` when no improvement is
/// found nearby.
pub(crate) fn local_min_1d<F: Fn(f64) -> f64>(
    f: F,
    x0: f64,
    lo: f64,
    hi: f64,
    x_tol: f64,
) -> f64 {
    let f0 = f(x0);
    let mut step = 1e-3 * (hi - lo).max(1e-6);
    let mut a = (x0 - step).max(lo);
    let mut b = (x0 + step).min(hi);
    // Expand until the neighbourhood contains a point no worse than x0's
    // immediate surroundings, or the full interval is covered.
    let mut best_x = x0;
    let mut best_f = f0;
    for _ in 0..40 {
        let fa = f(a);
        let fb = f(b);
        if fa < best_f {
            best_f = fa;
            best_x = a;
        }
        if fb < best_f {
            best_f = fb;
            best_x = b;
        }
        if (fa > best_f && fb > best_f) || (a <= lo && b >= hi) {
            break;
        }
        step *= 2.0;
        a = (best_x - step).max(lo);
        b = (best_x + step).min(hi);
    }
    let x = golden_min(&f, (best_x - step).max(lo), (best_x + step).min(hi), x_tol);
    if f(x) < f0 {
        x
    } else {
        x0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_midpoint_and_tails() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(800.0) <= 1.0 && logistic(800.0) > 0.999);
        assert!(logistic(-800.0) >= 0.0 && logistic(-800.0) < 1e-100);
        assert!((logistic(logit(0.2)) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn brent_finds_cubic_root() {
        let root = brent_root(|x| x * x * x - 2.0, -50.0, 50.0, 1e-12).unwrap();
        assert!((root - 2.0f64.powf(1.0 / 3.0)).abs() < 1e-10);
    }

    #[test]
    fn brent_expands_bracket() {
        // Root at 1e4 sits far outside the initial bracket.
        let root = brent_root(|x| x - 1.0e4, -1.0, 1.0, 1e-12).unwrap();
        assert!((root - 1.0e4).abs() < 1e-6);
    }

    #[test]
    fn golden_min_quadratic() {
        let x = golden_min(|x| (x - 0.3) * (x - 0.3), -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn local_min_respects_bounds() {
        // Unconstrained minimum at 2.0; the upper bound cuts it off at 1.0.
        let x = local_min_1d(|x| (x - 2.0) * (x - 2.0), 0.5, 0.0, 1.0, 1e-10);
        assert!((x - 1.0).abs() < 1e-6);
    }
}
