//! Fritsch–Carlson monotone piecewise-cubic interpolation.
//!
//! Used to turn tabulated CDF points into a C¹ distribution function whose
//! derivative (the implied density) never changes sign.

#[derive(Debug, Clone)]
pub(crate) struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// knot derivatives
    ds: Vec<f64>,
    /// running integral of the interpolant up to each knot
    iys: Vec<f64>,
}

impl Pchip {
    /// `xs` strictly increasing, `ys` the data values; both length ≥ 2.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        assert_eq!(xs.len(), ys.len());
        assert!(xs.len() >= 2);
        let n = xs.len();
        let h: Vec<f64> = (0..n - 1).map(|i| xs[i + 1] - xs[i]).collect();
        let s: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ds = vec![0.0; n];
        for i in 1..n - 1 {
            if s[i - 1] * s[i] <= 0.0 {
                ds[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ds[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
            }
        }
        ds[0] = edge_slope(h[0], h.get(1).copied().unwrap_or(h[0]), s[0], s.get(1).copied().unwrap_or(s[0]));
        ds[n - 1] = edge_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            s[n - 2],
            if n >= 3 { s[n - 3] } else { s[n - 2] },
        );
        let mut iys = vec![0.0; n];
        for i in 0..n - 1 {
            // exact integral of the Hermite cubic over the cell
            iys[i + 1] = iys[i] + h[i] * (0.5 * (ys[i] + ys[i + 1]) + h[i] * (ds[i] - ds[i + 1]) / 12.0);
        }
        Self { xs, ys, ds, iys }
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.xs[0]
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn cell(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    /// Interpolant value; clamps to the end values outside the knot range.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.x_min() {
            return self.ys[0];
        }
        if x >= self.x_max() {
            return *self.ys.last().unwrap();
        }
        let i = self.cell(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (h00, h10, h01, h11) = hermite_basis(t);
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    /// Derivative of the interpolant; 0 outside the knot range.
    pub fn deriv(&self, x: f64) -> f64 {
        if x < self.x_min() || x > self.x_max() {
            return 0.0;
        }
        let i = self.cell(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = ((x - self.xs[i]) / h).clamp(0.0, 1.0);
        let (d00, d10, d01, d11) = hermite_basis_deriv(t);
        (d00 * self.ys[i] + d01 * self.ys[i + 1]) / h + d10 * self.ds[i] + d11 * self.ds[i + 1]
    }

    /// ∫ interpolant from the first knot up to `x` (clamped to the range).
    pub fn integral_from_start(&self, x: f64) -> f64 {
        if x <= self.x_min() {
            return 0.0;
        }
        if x >= self.x_max() {
            return *self.iys.last().unwrap();
        }
        let i = self.cell(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (i00, i10, i01, i11) = hermite_basis_integral(t);
        self.iys[i]
            + h * (i00 * self.ys[i] + i10 * h * self.ds[i] + i01 * self.ys[i + 1] + i11 * h * self.ds[i + 1])
    }

    /// Solve eval(x) = y for strictly monotone data; bisection with a
    /// Newton polish, accurate to ~1e-14 of the cell width.
    pub fn invert(&self, y: f64) -> f64 {
        let n = self.ys.len();
        if y <= self.ys[0] {
            return self.xs[0];
        }
        if y >= self.ys[n - 1] {
            return self.xs[n - 1];
        }
        let i = match self.ys.binary_search_by(|v| v.partial_cmp(&y).unwrap()) {
            Ok(i) => return self.xs[i],
            Err(i) => i - 1,
        };
        let (mut lo, mut hi) = (self.xs[i], self.xs[i + 1]);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let f = self.eval(x) - y;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.deriv(x);
            let mut xn = if d > 0.0 { x - f / d } else { 0.5 * (lo + hi) };
            if !(xn >= lo && xn <= hi) {
                xn = 0.5 * (lo + hi);
            }
            if (xn - x).abs() <= 1e-15 * (1.0 + x.abs()) || hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                return xn;
            }
            x = xn;
        }
        x
    }
}

fn edge_slope(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    // three-point end slope with the standard monotonicity fixups
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 < 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

#[inline]
fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (
        2.0 * t3 - 3.0 * t2 + 1.0,
        t3 - 2.0 * t2 + t,
        -2.0 * t3 + 3.0 * t2,
        t3 - t2,
    )
}

#[inline]
fn hermite_basis_deriv(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    (
        6.0 * t2 - 6.0 * t,
        3.0 * t2 - 4.0 * t + 1.0,
        -6.0 * t2 + 6.0 * t,
        3.0 * t2 - 2.0 * t,
    )
}

#[inline]
fn hermite_basis_integral(t: f64) -> (f64, f64, f64, f64) {
    // antiderivatives of the basis polynomials, zero at t = 0
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t2 * t2;
    (
        0.5 * t4 - t3 + t,
        0.25 * t4 - 2.0 / 3.0 * t3 + 0.5 * t2,
        -0.5 * t4 + t3,
        0.25 * t4 - t3 / 3.0,
    )
}
