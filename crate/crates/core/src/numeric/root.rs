//! Bracketing root finders.

/// Bisection on a sign change of `f` in `[a, b]`. Returns `None` when the
/// endpoints do not bracket a root.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64, max_iter: usize) -> Option<f64> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    for _ in 0..max_iter {
        if (b - a).abs() <= xtol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return Some(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Some(0.5 * (a + b))
}

/// Bisection on a monotone predicate: `low(lo)` holds, `low(hi)` fails.
/// Returns the final `(lo, hi)` bracket and the number of steps taken.
pub fn bisect_predicate<P: FnMut(f64) -> bool>(
    mut low: P,
    mut lo: f64,
    mut hi: f64,
    tol: impl Fn(f64) -> f64,
    max_iter: usize,
) -> (f64, f64, usize) {
    let mut n = 0;
    while n < max_iter && hi - lo > tol(0.5 * (lo + hi)) {
        let m = 0.5 * (lo + hi);
        if m <= lo || m >= hi {
            break;
        }
        if low(m) {
            lo = m;
        } else {
            hi = m;
        }
        n += 1;
    }
    (lo, hi, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_none());
    }

    #[test]
    fn predicate_bracket_shrinks() {
        let (lo, hi, n) = bisect_predicate(|x| x < 0.3, 0.0, 1.0, |_| 1e-12, 80);
        assert!(lo < 0.3 && hi >= 0.3 && hi - lo <= 1e-12);
        assert!(n <= 80);
    }
}
