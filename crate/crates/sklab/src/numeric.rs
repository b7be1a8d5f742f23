//! Small scalar optimisation and root-finding helpers shared by the solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
///
/// Returns `(argmax, max)`. Stops when the bracket is narrower than `tol`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iters = 0;
    while hi - lo > tol && iters < 200 {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        iters += 1;
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bisection for a sign change of `f` on `[lo, hi]`, where `f(lo) <= 0 < f(hi)`.
///
/// Stops when `hi - lo <= width(mid)` or after 400 halvings.
pub fn bisect_increasing<F, W>(mut f: F, mut lo: f64, mut hi: f64, width: W) -> f64
where
    F: FnMut(f64) -> f64,
    W: Fn(f64) -> f64,
{
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= width(mid) || mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Central finite difference of order 1.
pub fn diff1<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Central finite difference of order 2.
pub fn diff2<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
}
