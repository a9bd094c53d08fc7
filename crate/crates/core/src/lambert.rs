//! Principal-branch Lambert W, the inverse of w ↦ w·e^w on [-1/e, ∞).

use std::f64::consts::E;

/// Series for W₀ near the branch point x = -1/e, in terms of
/// p = sqrt(2(1 + e·x)). Accurate to ~1e-13 for p ≤ 0.01.
pub(crate) fn w0_branch_series(p: f64) -> f64 {
    let p2 = p * p;
    let p3 = p2 * p;
    let p4 = p2 * p2;
    let p5 = p4 * p;
    let p6 = p3 * p3;
    -1.0 + p - p2 / 3.0 + 11.0 / 72.0 * p3 - 43.0 / 540.0 * p4 + 769.0 / 17280.0 * p5
        - 221.0 / 8505.0 * p6
}

/// Principal branch W₀(x) for x ≥ -1/e.
///
/// Safeguarded Newton on w·e^w = x with a bisection bracket; near the
/// branch point the series above is used directly because the Newton
/// correction degenerates there. Returns NaN for x below -1/e (beyond a
/// small rounding allowance).
pub fn lambert_w0(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    let q = 1.0 + E * x; // distance from the branch point, scaled
    if q < -1e-12 {
        return f64::NAN;
    }
    if x == 0.0 {
        return 0.0;
    }
    let p = (2.0 * q.max(0.0)).sqrt();
    if p < 1e-2 {
        return w0_branch_series(p);
    }
    // Initial guess and bracket.
    let (mut w, mut lo, mut hi) = if x < 0.0 {
        (w0_branch_series(p).clamp(-1.0, -1e-300), -1.0, 0.0)
    } else {
        ((1.0 + x).ln(), 0.0, 1.0 + x)
    };
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - x;
        if f > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let df = ew * (1.0 + w);
        let mut step = if df != 0.0 { f / df } else { 0.0 };
        let mut w_new = w - step;
        if !(w_new > lo && w_new < hi) || step == 0.0 {
            w_new = 0.5 * (lo + hi);
            step = w - w_new;
        }
        let done = step.abs() <= 1e-15 * (1.0 + w_new.abs());
        w = w_new;
        if done {
            break;
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    // independent oracle: bisect w*e^w = x on a known bracket
    fn w0_bisect(x: f64) -> f64 {
        let (mut lo, mut hi) = if x < 0.0 { (-1.0, 0.0) } else { (0.0, x.max(1.0)) };
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m * m.exp() > x {
                hi = m;
            } else {
                lo = m;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn known_points() {
        assert_eq!(lambert_w0(0.0), 0.0);
        assert!((lambert_w0(-1.0 / E) + 1.0).abs() < 1e-7);
        assert!((lambert_w0(E) - 1.0).abs() < 1e-14);
        // W(-e^-2) has no elementary form; check the defining identity instead.
        let w = lambert_w0(-(-2.0_f64).exp());
        assert!((w * w.exp() + (-2.0_f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn matches_bisection_oracle() {
        for &x in &[-0.367, -0.3, -0.2, -0.05, -1e-4, 0.1, 0.5, 2.0, 10.0] {
            let w = lambert_w0(x);
            assert!(
                (w - w0_bisect(x)).abs() < 1e-11,
                "x={x}: {w} vs {}",
                w0_bisect(x)
            );
        }
    }

    #[test]
    fn identity_residual_small() {
        let mut x = -1.0 / E + 1e-9;
        while x < 5.0 {
            let w = lambert_w0(x);
            let res = w * w.exp() - x;
            assert!(res.abs() < 1e-12 * (1.0 + x.abs()), "x={x} res={res}");
            x += 0.037;
        }
    }

    #[test]
    fn out_of_domain_is_nan() {
        assert!(lambert_w0(-1.0).is_nan());
        assert!(lambert_w0(f64::NAN).is_nan());
    }

    #[test]
    fn monotone_on_grid() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..400 {
            let x = -1.0 / E + i as f64 * 0.01;
            let w = lambert_w0(x);
            assert!(w >= prev);
            prev = w;
        }
    }
}
