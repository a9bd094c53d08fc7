//! Scalar initial-value-problem integrator: Dormand–Prince 5(4) with
//! embedded error control, fourth-order dense output, and event location
//! by bisection on the dense interpolant.
//!
//! The equilibrium constructions only ever need a single scalar state, so
//! the integrator is specialized to `f64` rather than vectors.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("right-hand side returned a non-finite value at t = {t}")]
    NonFiniteRhs { t: f64 },
    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),
    #[error("invalid integration span [{t0}, {t1}]")]
    BadSpan { t0: f64, t1: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-10, max_step: f64::INFINITY, initial_step: None }
    }
}

/// One accepted step with its dense-output coefficients.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    cont: [f64; 5],
}

impl DenseStep {
    #[inline]
    fn eval(&self, theta: f64) -> f64 {
        let th1 = 1.0 - theta;
        self.cont[0]
            + theta
                * (self.cont[1] + th1 * (self.cont[2] + theta * (self.cont[3] + th1 * self.cont[4])))
    }
}

/// Why the integration stopped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopReason {
    ReachedEnd,
    /// The event function changed sign; location bisected on dense output.
    Event { t: f64, y: f64 },
    /// The controller could not make progress (step underflow), typically a
    /// singularity of the right-hand side. Carries the furthest point.
    StepUnderflow { t: f64, y: f64 },
}

/// Integrated solution with continuous evaluation over the covered span.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    steps: Vec<DenseStep>,
    pub t_start: f64,
    pub t_end: f64,
    pub y_start: f64,
    pub y_end: f64,
}

impl OdeSolution {
    /// Evaluate at `t`, clamped to the covered span.
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t_start {
            return self.y_start;
        }
        if t >= self.t_end {
            return self.y_end;
        }
        let i = match self
            .steps
            .binary_search_by(|s| s.t0.partial_cmp(&t).unwrap())
        {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        let s = &self.steps[i];
        s.eval((t - s.t0) / s.h)
    }

    /// Accepted step endpoints, including the final (possibly event-cut) one.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = self.steps.iter().map(|s| (s.t0, s.eval(0.0))).collect();
        out.push((self.t_end, self.y_end));
        out
    }
}

// Dormand–Prince coefficients.
const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
];
const A7: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
// b − b̂ (5th-order minus embedded 4th-order weights)
const ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
// dense-output weights
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const MAX_STEPS: usize = 2_000_000;

/// Integrate y' = f(t, y) from `(t0, y0)` toward `t1 > t0`.
///
/// If `event` is given, integration stops where the event function changes
/// sign along the solution; the crossing is located on the dense output to
/// ~1e-12 of the span.
pub fn integrate<F, G>(
    f: F,
    t0: f64,
    y0: f64,
    t1: f64,
    opts: &OdeOptions,
    event: Option<G>,
) -> Result<(OdeSolution, StopReason), OdeError>
where
    F: Fn(f64, f64) -> f64,
    G: Fn(f64, f64) -> f64,
{
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(OdeError::BadSpan { t0, t1 });
    }
    let span = t1 - t0;
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, y);
    if !k1.is_finite() {
        return Err(OdeError::NonFiniteRhs { t });
    }
    let mut g_prev = event.as_ref().map(|g| g(t, y));

    // initial step: 0.01 * d0/d1 heuristic, clamped into the span
    let sk = opts.atol + opts.rtol * y.abs();
    let mut h = opts.initial_step.unwrap_or_else(|| {
        let d0 = y.abs() / sk;
        let d1 = k1.abs() / sk;
        let guess = if d1 > 1e-10 { 0.01 * d0.max(1e-6) / d1 } else { 1e-3 * span };
        guess.clamp(1e-12 * span, 1e-2 * span)
    });
    h = h.min(opts.max_step).min(span);

    let mut steps: Vec<DenseStep> = Vec::new();
    let mut sol_end = (t, y);
    let mut reason = StopReason::ReachedEnd;

    for _ in 0..MAX_STEPS {
        if t >= t1 {
            break;
        }
        if h < 16.0 * f64::EPSILON * t.abs().max(span) {
            reason = StopReason::StepUnderflow { t, y };
            break;
        }
        h = h.min(t1 - t).min(opts.max_step);

        let k2 = f(t + C[1] * h, y + h * A2[0] * k1);
        let k3 = f(t + C[2] * h, y + h * (A3[0] * k1 + A3[1] * k2));
        let k4 = f(t + C[3] * h, y + h * (A4[0] * k1 + A4[1] * k2 + A4[2] * k3));
        let k5 = f(
            t + C[4] * h,
            y + h * (A5[0] * k1 + A5[1] * k2 + A5[2] * k3 + A5[3] * k4),
        );
        let k6 = f(
            t + C[5] * h,
            y + h * (A6[0] * k1 + A6[1] * k2 + A6[2] * k3 + A6[3] * k4 + A6[4] * k5),
        );
        let y1 = y + h * (A7[0] * k1 + A7[2] * k3 + A7[3] * k4 + A7[4] * k5 + A7[5] * k6);
        let k7 = f(t + h, y1);

        let ks = [k1, k2, k3, k4, k5, k6, k7];
        if ks.iter().any(|k| !k.is_finite()) || !y1.is_finite() {
            // treat like an over-large step; singularities end up as underflow
            h *= 0.25;
            continue;
        }

        let err_raw: f64 = h * ks.iter().zip(ERR.iter()).map(|(k, e)| k * e).sum::<f64>();
        let sk = opts.atol + opts.rtol * y.abs().max(y1.abs());
        let err = (err_raw / sk).abs();

        if err <= 1.0 {
            // accept: build dense coefficients (Hairer's CONTD5 layout)
            let ydiff = y1 - y;
            let bspl = h * k1 - ydiff;
            let dsum: f64 = ks.iter().zip(D.iter()).map(|(k, d)| k * d).sum();
            let step = DenseStep {
                t0: t,
                h,
                cont: [y, ydiff, bspl, ydiff - h * k7 - bspl, h * dsum],
            };

            // event check across the accepted step
            if let (Some(g), Some(g0v)) = (event.as_ref(), g_prev) {
                let g1v = g(t + h, y1);
                if crossed(g0v, g1v) {
                    // retake wide straddling steps smaller first: the dense
                    // interpolant's O(h^5) error would otherwise limit how
                    // precisely the crossing can be placed
                    if h > 1e-5 * span {
                        h *= 0.25;
                        continue;
                    }
                    let (te, ye) = locate_event(g, &step, span);
                    steps.push(step);
                    sol_end = (te, ye);
                    reason = StopReason::Event { t: te, y: ye };
                    break;
                }
                g_prev = Some(g1v);
            }

            steps.push(step);
            t += h;
            y = y1;
            k1 = k7; // FSAL
            sol_end = (t, y);
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
            h *= fac;
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            h *= fac;
        }
    }
    if t < t1 && matches!(reason, StopReason::ReachedEnd) && steps.len() >= MAX_STEPS {
        return Err(OdeError::TooManySteps(MAX_STEPS));
    }

    Ok((
        OdeSolution {
            steps,
            t_start: t0,
            t_end: sol_end.0,
            y_start: y0,
            y_end: sol_end.1,
        },
        reason,
    ))
}

#[inline]
fn crossed(g0: f64, g1: f64) -> bool {
    (g0 < 0.0 && g1 >= 0.0) || (g0 > 0.0 && g1 <= 0.0)
}

fn locate_event<G: Fn(f64, f64) -> f64>(g: &G, step: &DenseStep, span: f64) -> (f64, f64) {
    let g0 = g(step.t0, step.eval(0.0));
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gm = g(step.t0 + mid * step.h, step.eval(mid));
        if crossed(g0, gm) {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) * step.h.abs() < 1e-13 * span.max(1.0) {
            break;
        }
    }
    let theta = hi;
    (step.t0 + theta * step.h, step.eval(theta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(rtol: f64, atol: f64) -> OdeOptions {
        OdeOptions { rtol, atol, ..OdeOptions::default() }
    }

    #[test]
    fn exponential_growth() {
        let (sol, reason) =
            integrate(|_, y| y, 0.0, 1.0, 2.0, &opts(1e-10, 1e-12), None::<fn(f64, f64) -> f64>)
                .unwrap();
        assert_eq!(reason, StopReason::ReachedEnd);
        assert!((sol.y_end - 2.0_f64.exp()).abs() < 1e-9);
        // dense output accuracy at off-step points
        for i in 0..=50 {
            let t = 2.0 * i as f64 / 50.0;
            assert!((sol.eval(t) - t.exp()).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn cosine_solution() {
        let (sol, _) = integrate(
            |t: f64, _| t.cos(),
            0.0,
            0.0,
            6.0,
            &opts(1e-11, 1e-13),
            None::<fn(f64, f64) -> f64>,
        )
        .unwrap();
        for i in 0..=60 {
            let t = 6.0 * i as f64 / 60.0;
            assert!((sol.eval(t) - t.sin()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn tightening_tolerance_converges() {
        let run = |rtol: f64| {
            integrate(
                |t, y| -2.0 * t * y,
                0.0,
                1.0,
                3.0,
                &opts(rtol, rtol * 0.1),
                None::<fn(f64, f64) -> f64>,
            )
            .unwrap()
            .0
            .y_end
        };
        let exact = (-9.0_f64).exp();
        let coarse = (run(1e-6) - exact).abs();
        let fine = (run(1e-10) - exact).abs();
        assert!(fine < coarse);
        assert!(fine < 1e-11);
    }

    #[test]
    fn event_located_precisely() {
        // y' = 1, event at y = 0.625
        let (sol, reason) = integrate(
            |_, _| 1.0,
            0.0,
            0.0,
            1.0,
            &opts(1e-9, 1e-12),
            Some(|_t: f64, y: f64| y - 0.625),
        )
        .unwrap();
        match reason {
            StopReason::Event { t, y } => {
                assert!((t - 0.625).abs() < 1e-10);
                assert!((y - 0.625).abs() < 1e-10);
            }
            other => panic!("expected event, got {other:?}"),
        }
        assert!(sol.t_end <= 0.625 + 1e-10);
    }

    #[test]
    fn event_on_nonlinear_path() {
        // y' = y, stop when y = 2 → t = ln 2
        let (_, reason) = integrate(
            |_, y| y,
            0.0,
            1.0,
            2.0,
            &opts(1e-11, 1e-13),
            Some(|_t: f64, y: f64| y - 2.0),
        )
        .unwrap();
        match reason {
            StopReason::Event { t, .. } => {
                assert!((t - 2.0_f64.ln()).abs() < 1e-10, "t = {t}");
            }
            other => panic!("expected event, got {other:?}"),
        }
    }

    #[test]
    fn singularity_reports_underflow() {
        // y' = 1/(1 - t) blows up at t = 1
        let (sol, reason) = integrate(
            |t: f64, _| (1.0 - t).recip(),
            0.0,
            0.0,
            2.0,
            &opts(1e-9, 1e-11),
            None::<fn(f64, f64) -> f64>,
        )
        .unwrap();
        match reason {
            StopReason::StepUnderflow { t, .. } => assert!((t - 1.0).abs() < 1e-6),
            other => panic!("expected underflow, got {other:?}"),
        }
        assert!(sol.t_end <= 1.0);
    }

    #[test]
    fn nodes_cover_span() {
        let (sol, _) = integrate(
            |_, y| y,
            0.0,
            1.0,
            1.0,
            &opts(1e-9, 1e-11),
            None::<fn(f64, f64) -> f64>,
        )
        .unwrap();
        let nodes = sol.nodes();
        assert_eq!(nodes.first().unwrap().0, 0.0);
        assert_eq!(nodes.last().unwrap().0, 1.0);
        assert!(nodes.windows(2).all(|w| w[1].0 > w[0].0));
    }
}
