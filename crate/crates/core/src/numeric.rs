//! Small numerical building blocks shared across the crate: scalar root
//! bracketing/bisection, golden-section minimisation and deterministic
//! pairwise summation.

/// Golden-section search for the minimum of `f` on `[a, b]`.
///
/// `f` is assumed unimodal on the interval. Returns `(x_min, f_min)`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if f1 < f2 {
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
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Bisection for a root of `f` on `[lo, hi]`, given `f(lo)` and `f(hi)` of
/// opposite (weak) sign. Shrinks the bracket to width `tol` and returns the
/// midpoint.
pub fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo * fhi < 0.0, "bisect_root needs a sign change");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol || mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Deterministic pairwise (tree) summation. The result does not depend on
/// how the inputs were produced, only on their order in the slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance
/// `tol`. Generic utility; the analytic modules use closed forms and the
/// test oracles use this to check them.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
        force: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        // `force` levels of mandatory subdivision stop a sharply localised
        // integrand from hiding between the first few probe points.
        if depth == 0 || (force == 0 && delta.abs() <= 15.0 * tol) {
            return left + right + delta / 15.0;
        }
        let nf = force.saturating_sub(1);
        recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1, nf)
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1, nf)
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48, 12)
}

/// Linear interpolation of tabulated `values` on the uniform grid
/// `x0 + k*h`. `x` must lie within the grid span.
pub fn lerp_uniform(x0: f64, h: f64, values: &[f64], x: f64) -> f64 {
    let n = values.len() - 1;
    let t = (x - x0) / h;
    if t <= 0.0 {
        return values[0];
    }
    if t >= n as f64 {
        return values[n];
    }
    let k = t.floor() as usize;
    let frac = t - k as f64;
    values[k] + frac * (values[k + 1] - values[k])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_section_finds_parabola_min() {
        // position accuracy saturates at sqrt(eps) for a quadratic bowl
        let (x, fx) = golden_section_min(|x| (x - 1.25) * (x - 1.25) + 3.0, -4.0, 6.0, 1e-12);
        assert!((x - 1.25).abs() < 1e-6);
        assert!((fx - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_finds_cosine_root() {
        let r = bisect_root(|x| x.cos(), 0.0, 2.0, 1e-14);
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_sequential_on_benign_input() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let seq: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - seq).abs() < 1e-9);
    }

    #[test]
    fn lerp_hits_nodes_and_midpoints() {
        let vals = vec![0.0, 2.0, 6.0];
        assert_eq!(lerp_uniform(0.0, 0.5, &vals, 0.5), 2.0);
        assert!((lerp_uniform(0.0, 0.5, &vals, 0.75) - 4.0).abs() < 1e-15);
    }
}
