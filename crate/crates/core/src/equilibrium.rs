//! Separating-equilibrium schedules for the bribe-and-request game.
//!
//! Bidder 1 of type v₁ proposes a bribe b(v₁) and requests r(v₁) = v₁ − R
//! (R the reserve, 0 without one). On the separating branch the bribe
//! solves
//!
//! ```text
//! b'(v₁) = 1 / (f₂(b+v₁)·b + F₂(b+v₁)) − 1,     b(start) = 0,
//! ```
//!
//! which keeps b+v₁ strictly increasing, so the proposal reveals the type
//! and bidder 2 accepts the bribe exactly when v₂ ≤ b(v₁)+v₁. Once
//! b(v¹)+v¹ reaches the top of bidder 2's support the bribe is accepted
//! with probability one and the schedule is flat above the crossing type
//! v¹. The right-hand side is singular at the initial condition whenever
//! F₂(start) = 0; integration is then seeded a hair above the start with
//! the square-root asymptote obtained by balancing b' ≈ 1/(f₂·(2b+Δv)).

use std::f64::consts::E;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::distributions::pchip::Pchip;
use crate::distributions::Distribution;
use crate::lambert::{lambert_w0, w0_branch_series};
use crate::ode::{integrate, OdeError, OdeOptions, OdeSolution, StopReason};

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("trivial case (lowest own type {lo1} >= opponent top {hi2}); pass trivial_case to get b = 0, r = v1")]
    TrivialCase { lo1: f64, hi2: f64 },
    #[error("trivial_case requested but {lo1} < {hi2} is a non-trivial configuration")]
    NotTrivial { lo1: f64, hi2: f64 },
    #[error("invalid type range [{lo1}, {hi1}]")]
    BadRange { lo1: f64, hi1: f64 },
    #[error("reserve {reserve} out of range (need 0 <= R < min of both support tops)")]
    ReserveOutOfRange { reserve: f64 },
    #[error("opponent support must start at or below the schedule start {start} (got {lo2}); the initial condition is ill-posed otherwise")]
    UnsupportedSupport { lo2: f64, start: f64 },
    #[error("cannot seed the singular start: f2({at}) = {density}")]
    SingularSeed { at: f64, density: f64 },
    #[error("v1 = {v1} outside the schedule range [{lo1}, {hi1}]")]
    OutOfRange { v1: f64, lo1: f64, hi1: f64 },
    #[error("v1 = {v1} outside the separating branch [0, 2/e] of the uniform closed form")]
    OutsideClosedFormBranch { v1: f64 },
    #[error("incentive-compatibility ODE denominator vanished at v1 = {v1}")]
    DenominatorVanished { v1: f64 },
    #[error("request rule invalid at v1 = {v1}: {reason}")]
    InvalidGamma { v1: f64, reason: String },
    #[error("integration stalled at v1 = {v1}")]
    Stalled { v1: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("schedule nodes invalid: {0}")]
    BadNodes(String),
}

/// Solver controls. `max_step` defaults to 1/64 of the type range.
///
/// `rtol`/`atol` bound the schedule values. Integration internally runs a
/// thousandfold stricter so the dense interpolant's slope also satisfies
/// the incentive ODE between nodes; the audits evaluate interpolated
/// schedules inside non-smooth max operations and a loose interpolant
/// would contaminate them.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    /// Explicit opt-in for the degenerate configuration v̲₁ ≥ v̄₂.
    pub trivial_case: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-10, max_step: None, trivial_case: false }
    }
}

/// Fraction of the type range used as the singular-start seed offset.
const SEED_FRAC: f64 = 1e-8;
/// Guard below which an IC denominator counts as vanished.
pub(crate) const DEN_GUARD: f64 = 1e-12;
/// Internal integration runs this much tighter than the advertised
/// tolerances so the dense-output slope meets the residual contract.
pub(crate) const TOL_SAFETY: f64 = 1e-3;

/// The crossing type v¹ where b(v¹)+v¹ first reaches the top of the
/// opponent support, with the flat bribe level beyond it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Crossing {
    pub v1: f64,
    pub bribe: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum SeedKind {
    /// b = c·sqrt(v − start)
    Sqrt(f64),
    /// b = c·(v − start)
    Linear(f64),
}

/// A solved curve: zero at `start`, an asymptotic seed sliver, then the
/// dense ODE solution.
#[derive(Debug, Clone)]
pub(crate) struct SolvedCurve {
    pub start: f64,
    pub seed_end: f64,
    pub seed: SeedKind,
    pub sol: OdeSolution,
}

impl SolvedCurve {
    pub fn eval(&self, v: f64) -> f64 {
        if v <= self.start {
            return 0.0;
        }
        if v < self.seed_end {
            return match self.seed {
                SeedKind::Sqrt(c) => c * (v - self.start).sqrt(),
                SeedKind::Linear(c) => c * (v - self.start),
            };
        }
        self.sol.eval(v)
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out = vec![(self.start, 0.0)];
        if self.seed_end > self.start {
            out.push((self.seed_end, self.eval(self.seed_end)));
        }
        for (t, y) in self.sol.nodes() {
            if t > self.seed_end {
                out.push((t, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Curve {
    Solved(SolvedCurve),
    Interp(Pchip),
    Zero,
}

/// One exported row of a solved schedule.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScheduleRow {
    pub v1: f64,
    pub b: f64,
    pub r: f64,
    pub pi: f64,
}

/// The solved equilibrium bribing schedule b(·) together with the request
/// rule r(v₁) = max(v₁ − R, 0), the crossing type and the opponent
/// distribution it was solved against.
#[derive(Debug, Clone)]
pub struct BribeSchedule {
    curve: Curve,
    crossing: Option<Crossing>,
    reserve: f64,
    lo1: f64,
    hi1: f64,
    start: f64,
    dist2: Distribution,
    trivial: bool,
    rtol: f64,
    atol: f64,
}

impl BribeSchedule {
    pub fn lo1(&self) -> f64 {
        self.lo1
    }

    pub fn hi1(&self) -> f64 {
        self.hi1
    }

    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    pub fn crossing(&self) -> Option<Crossing> {
        self.crossing
    }

    pub fn dist2(&self) -> &Distribution {
        &self.dist2
    }

    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    pub fn tolerances(&self) -> (f64, f64) {
        (self.rtol, self.atol)
    }

    pub fn request_rule(&self) -> &'static str {
        if self.trivial {
            "r = v1 (trivial case)"
        } else {
            "r = max(v1 - reserve, 0) on the solved branch"
        }
    }

    fn check_range(&self, v1: f64) -> Result<(), SolveError> {
        let slack = 1e-12 * (1.0 + self.hi1.abs());
        if v1 < self.lo1 - slack || v1 > self.hi1 + slack || !v1.is_finite() {
            return Err(SolveError::OutOfRange { v1, lo1: self.lo1, hi1: self.hi1 });
        }
        Ok(())
    }

    /// Equilibrium bribe at `v1`; errors outside the type range.
    pub fn bribe(&self, v1: f64) -> Result<f64, SolveError> {
        self.check_range(v1)?;
        Ok(self.bribe_clamped(v1))
    }

    /// Bribe with the argument clamped into the type range.
    pub fn bribe_clamped(&self, v1: f64) -> f64 {
        let v1 = v1.clamp(self.lo1, self.hi1);
        if let Some(c) = self.crossing {
            if v1 >= c.v1 {
                return c.bribe;
            }
        }
        match &self.curve {
            Curve::Solved(c) => c.eval(v1).max(0.0),
            Curve::Interp(p) => p.eval(v1),
            Curve::Zero => 0.0,
        }
    }

    /// Equilibrium request at `v1`.
    pub fn request(&self, v1: f64) -> f64 {
        if self.trivial {
            v1
        } else {
            (v1 - self.reserve).max(0.0)
        }
    }

    /// Acceptance threshold b(v₁) + r(v₁) + R: bidder 2 takes the bribe
    /// iff v₂ is at or below it, and the request otherwise.
    pub fn threshold(&self, v1: f64) -> f64 {
        self.bribe_clamped(v1) + self.request(v1) + self.reserve
    }

    /// Interim expected payoff of the proposer: (v₁ − R) − F₂(b+v₁)·b on
    /// the solved branch, 0 for types below the reserve.
    pub fn payoff(&self, v1: f64) -> Result<f64, SolveError> {
        self.check_range(v1)?;
        Ok(self.payoff_clamped(v1))
    }

    pub fn payoff_clamped(&self, v1: f64) -> f64 {
        let v1 = v1.clamp(self.lo1, self.hi1);
        if !self.trivial && v1 <= self.reserve {
            return 0.0;
        }
        let b = self.bribe_clamped(v1);
        (v1 - self.reserve) - self.dist2.cdf(self.threshold(v1)) * b
    }

    /// Invert the acceptance threshold on the separating branch.
    pub fn threshold_inverse(&self, y: f64) -> f64 {
        let hi = self.crossing.map(|c| c.v1).unwrap_or(self.hi1);
        let lo = self.start.max(self.lo1);
        if y <= self.threshold(lo) {
            return lo;
        }
        if y >= self.threshold(hi) {
            return hi;
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if self.threshold(m) < y {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// Schedule nodes (v₁, b): the solver's accepted steps plus the
    /// boundary, crossing and flat-branch markers.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        if self.lo1 < self.start {
            out.push((self.lo1, 0.0));
        }
        match &self.curve {
            Curve::Solved(c) => out.extend(c.nodes()),
            Curve::Interp(_) => out.extend(
                (0..=256).map(|i| {
                    let v = self.lo1 + (self.hi1 - self.lo1) * i as f64 / 256.0;
                    (v, self.bribe_clamped(v))
                }),
            ),
            Curve::Zero => out.push((self.lo1, 0.0)),
        }
        if let Some(c) = self.crossing {
            out.retain(|&(v, _)| v < c.v1);
            out.push((c.v1, c.bribe));
        }
        if out.last().map(|&(v, _)| v < self.hi1).unwrap_or(true) {
            out.push((self.hi1, self.bribe_clamped(self.hi1)));
        }
        out.dedup_by(|a, b| a.0 == b.0);
        out
    }

    /// Uniform export grid of `n` rows over the type range.
    pub fn sample_grid(&self, n: usize) -> Vec<ScheduleRow> {
        assert!(n >= 2);
        (0..n)
            .map(|i| {
                let v1 = self.lo1 + (self.hi1 - self.lo1) * i as f64 / (n - 1) as f64;
                ScheduleRow {
                    v1,
                    b: self.bribe_clamped(v1),
                    r: self.request(v1),
                    pi: self.payoff_clamped(v1),
                }
            })
            .collect()
    }

    /// Rebuild a schedule from explicit nodes (monotone cubic between
    /// them). Used for golden-file import and corrupted-schedule fixtures.
    pub fn from_nodes(
        nodes: &[(f64, f64)],
        crossing: Option<Crossing>,
        reserve: f64,
        dist2: Distribution,
        range: (f64, f64),
    ) -> Result<Self, SolveError> {
        if nodes.len() < 4 {
            return Err(SolveError::BadNodes("need at least 4 nodes".into()));
        }
        if !nodes.windows(2).all(|w| w[1].0 > w[0].0) {
            return Err(SolveError::BadNodes("node abscissae must increase strictly".into()));
        }
        if nodes.iter().any(|&(_, b)| !(b >= 0.0) || !b.is_finite()) {
            return Err(SolveError::BadNodes("bribes must be finite and nonnegative".into()));
        }
        let xs: Vec<f64> = nodes.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = nodes.iter().map(|p| p.1).collect();
        Ok(Self {
            curve: Curve::Interp(Pchip::new(xs, ys)),
            crossing,
            reserve,
            lo1: range.0,
            hi1: range.1,
            start: range.0.max(reserve),
            dist2,
            trivial: false,
            rtol: f64::NAN,
            atol: f64::NAN,
        })
    }

    /// Negative-control variant with every bribe scaled by `factor`.
    pub fn with_scaled_bribes(&self, factor: f64) -> Self {
        let nodes: Vec<(f64, f64)> = self
            .sample_grid(2049)
            .into_iter()
            .map(|row| (row.v1, row.b * factor))
            .collect();
        Self::from_nodes(&nodes, None, self.reserve, self.dist2.clone(), (self.lo1, self.hi1))
            .expect("scaled nodes are valid")
    }
}

/// Solve the Prop.-1 schedule on `v1_range` against `d2` (no reserve).
pub fn solve_bribing_schedule(
    d2: &Distribution,
    v1_range: (f64, f64),
    opts: &SolveOptions,
) -> Result<BribeSchedule, SolveError> {
    solve_inner(d2, v1_range, 0.0, opts)
}

/// Reserve-price variant: bribes are zero at and below R and the request
/// is v₁ − R above it; the IC ODE keeps the same form with acceptance
/// threshold b+r+R = b+v₁, so R = 0 reproduces `solve_bribing_schedule`
/// exactly.
pub fn solve_with_reserve(
    d1: &Distribution,
    d2: &Distribution,
    reserve: f64,
    opts: &SolveOptions,
) -> Result<BribeSchedule, SolveError> {
    if !(reserve >= 0.0) || (reserve > 0.0 && reserve >= d1.hi().min(d2.hi())) {
        return Err(SolveError::ReserveOutOfRange { reserve });
    }
    solve_inner(d2, (d1.lo(), d1.hi()), reserve, opts)
}

fn solve_inner(
    d2: &Distribution,
    (lo1, hi1): (f64, f64),
    reserve: f64,
    opts: &SolveOptions,
) -> Result<BribeSchedule, SolveError> {
    if !(lo1.is_finite() && hi1.is_finite() && lo1 < hi1) {
        return Err(SolveError::BadRange { lo1, hi1 });
    }
    let hi2 = d2.hi();
    if opts.trivial_case {
        if lo1 < hi2 {
            return Err(SolveError::NotTrivial { lo1, hi2 });
        }
        if reserve > 0.0 {
            return Err(SolveError::ReserveOutOfRange { reserve });
        }
        return Ok(BribeSchedule {
            curve: Curve::Zero,
            crossing: None,
            reserve: 0.0,
            lo1,
            hi1,
            start: lo1,
            dist2: d2.clone(),
            trivial: true,
            rtol: opts.rtol,
            atol: opts.atol,
        });
    }
    if lo1 >= hi2 {
        return Err(SolveError::TrivialCase { lo1, hi2 });
    }

    let start = lo1.max(reserve);
    if d2.lo() > start {
        return Err(SolveError::UnsupportedSupport { lo2: d2.lo(), start });
    }

    let rhs = |v: f64, b: f64| {
        let (cf, pf) = d2.cdf_pdf(b + v);
        (pf * b + cf).recip() - 1.0
    };
    let event = |v: f64, b: f64| b + v - hi2;
    let ode_opts = OdeOptions {
        rtol: opts.rtol * TOL_SAFETY,
        atol: opts.atol * TOL_SAFETY,
        max_step: opts.max_step.unwrap_or((hi1 - lo1) / 64.0),
        initial_step: None,
    };

    let (seed, seed_end, y0) = if d2.cdf(start) == 0.0 {
        let fs = d2.pdf(start);
        if !(fs > 0.0) {
            return Err(SolveError::SingularSeed { at: start, density: fs });
        }
        let eps = SEED_FRAC * (hi1 - lo1);
        let c = fs.recip().sqrt();
        (SeedKind::Sqrt(c), start + eps, c * eps.sqrt())
    } else {
        (SeedKind::Sqrt(0.0), start, 0.0)
    };

    let (sol, reason) = integrate(rhs, seed_end, y0, hi1, &ode_opts, Some(event))?;
    let crossing = match reason {
        StopReason::ReachedEnd => None,
        StopReason::Event { t, y } => Some(Crossing { v1: t, bribe: y }),
        StopReason::StepUnderflow { t, .. } => return Err(SolveError::Stalled { v1: t }),
    };

    Ok(BribeSchedule {
        curve: Curve::Solved(SolvedCurve { start, seed_end, seed, sol }),
        crossing,
        reserve,
        lo1,
        hi1,
        start,
        dist2: d2.clone(),
        trivial: false,
        rtol: opts.rtol,
        atol: opts.atol,
    })
}

/// Closed form for the uniform(0,1) opponent on the separating branch
/// [0, 2/e]:  b(v₁) = ½(2·W(−e^{−v₁/2−1}) − v₁ + 2)  with W the principal
/// Lambert branch. Near the branch point the series in p = sqrt(2(1+e·x))
/// is used with 1+e·x = −expm1(−v₁/2) computed without cancellation.
pub fn closed_form_uniform_bribe(v1: f64) -> Result<f64, SolveError> {
    let v_max = 2.0 / E;
    if !v1.is_finite() || v1 < -1e-12 || v1 > v_max + 1e-12 {
        return Err(SolveError::OutsideClosedFormBranch { v1 });
    }
    let v = v1.clamp(0.0, v_max);
    let q = -(-v / 2.0).exp_m1();
    let p = (2.0 * q).sqrt();
    let w = if p < 1e-2 {
        w0_branch_series(p)
    } else {
        lambert_w0(-(-v / 2.0 - 1.0).exp())
    };
    Ok((w + 1.0 - v / 2.0).max(0.0))
}

// ---------------------------------------------------------------------------
// General separating families (β, γ)
// ---------------------------------------------------------------------------

/// A candidate request rule γ for an alternative separating family.
pub trait RequestRule: Send + Sync {
    fn value(&self, v1: f64) -> f64;
    fn slope(&self, v1: f64) -> f64;
}

/// γ(v₁) = scale·v₁ + offset.
#[derive(Debug, Clone, Copy)]
pub struct AffineRequest {
    pub scale: f64,
    pub offset: f64,
}

impl RequestRule for AffineRequest {
    fn value(&self, v1: f64) -> f64 {
        self.scale * v1 + self.offset
    }

    fn slope(&self, _v1: f64) -> f64 {
        self.scale
    }
}

/// A (β, γ) separating family: γ is the given request rule and β solves
/// the general incentive-compatibility ODE with β(v̲₁) = 0. Segments where
/// γ(v₁) > v₁ have never-accepted requests, so β follows the bribe-only
/// IC there instead.
#[derive(Clone)]
pub struct GeneralSchedule {
    curve: SolvedCurve,
    /// type where the acceptance argument reaches the opponent top; β is
    /// flat beyond it
    crossing: Option<Crossing>,
    rule: Arc<dyn RequestRule>,
    dist2: Distribution,
    lo1: f64,
    hi1: f64,
}

impl GeneralSchedule {
    pub fn lo1(&self) -> f64 {
        self.lo1
    }

    pub fn hi1(&self) -> f64 {
        self.hi1
    }

    pub fn dist2(&self) -> &Distribution {
        &self.dist2
    }

    pub fn bribe(&self, v1: f64) -> Result<f64, SolveError> {
        if v1 < self.lo1 - 1e-12 || v1 > self.hi1 + 1e-12 {
            return Err(SolveError::OutOfRange { v1, lo1: self.lo1, hi1: self.hi1 });
        }
        Ok(self.bribe_clamped(v1))
    }

    pub fn bribe_clamped(&self, v1: f64) -> f64 {
        let v1 = v1.clamp(self.lo1, self.hi1);
        if let Some(c) = self.crossing {
            if v1 >= c.v1 {
                return c.bribe;
            }
        }
        self.curve.eval(v1).max(0.0)
    }

    pub fn crossing(&self) -> Option<Crossing> {
        self.crossing
    }

    pub fn request(&self, v1: f64) -> f64 {
        self.rule.value(v1)
    }

    /// (v₁, β, γ) at the solver's nodes.
    pub fn nodes(&self) -> Vec<(f64, f64, f64)> {
        self.curve
            .nodes()
            .into_iter()
            .map(|(v, b)| (v, b, self.rule.value(v)))
            .collect()
    }
}

/// Solve the general-family IC ODE for β given the request rule γ.
///
/// On segments with γ(v₁) ≤ v₁:  β' = γ'/(F₂(A) − f₂(A)(v₁−A)) − γ' with
/// A = β+γ; the choice γ(v₁) = v₁ reproduces `solve_bribing_schedule`.
/// On segments with γ(v₁) > v₁ the request is never accepted and β obeys
/// the bribe-only IC ODE. Negative requests are rejected, as is a
/// vanishing denominator (reported with its location).
pub fn solve_general_family(
    d2: &Distribution,
    rule: Arc<dyn RequestRule>,
    v1_range: (f64, f64),
    opts: &SolveOptions,
) -> Result<GeneralSchedule, SolveError> {
    let (lo1, hi1) = v1_range;
    if !(lo1.is_finite() && hi1.is_finite() && lo1 < hi1) {
        return Err(SolveError::BadRange { lo1, hi1 });
    }
    if lo1 >= d2.hi() {
        return Err(SolveError::TrivialCase { lo1, hi2: d2.hi() });
    }

    // admissibility scan of the rule
    for i in 0..=256 {
        let v = lo1 + (hi1 - lo1) * i as f64 / 256.0;
        let g = rule.value(v);
        if !g.is_finite() || g < -1e-12 {
            return Err(SolveError::InvalidGamma { v1: v, reason: format!("request {g} is negative") });
        }
        if g <= v && rule.slope(v) <= 0.0 {
            return Err(SolveError::InvalidGamma {
                v1: v,
                reason: format!("slope {} is not positive on an accepted-request segment", rule.slope(v)),
            });
        }
    }

    let den_at = |v: f64, beta: f64| {
        let g = rule.value(v);
        if g <= v {
            let a = beta + g;
            let (cf, pf) = d2.cdf_pdf(a);
            cf - pf * (v - a)
        } else {
            let x = beta + v;
            let (cf, pf) = d2.cdf_pdf(x);
            cf - pf * (v - beta)
        }
    };
    // acceptance argument whose hitting the opponent top flattens beta
    let accept_arg = |v: f64, beta: f64| {
        let g = rule.value(v);
        if g <= v {
            beta + g
        } else {
            beta + v
        }
    };
    let rhs = |v: f64, beta: f64| {
        let g = rule.value(v);
        if g <= v {
            let a = beta + g;
            let (cf, pf) = d2.cdf_pdf(a);
            let den = cf - pf * (v - a);
            let gp = rule.slope(v);
            gp / den - gp
        } else {
            let x = beta + v;
            let (cf, pf) = d2.cdf_pdf(x);
            let den = cf - pf * (v - beta);
            pf * (v - beta) / den
        }
    };
    // single stop condition: denominator death or the crossing, whichever
    // comes first (both expressions start positive and decrease)
    let event = |v: f64, beta: f64| (den_at(v, beta) - DEN_GUARD).min(d2.hi() - accept_arg(v, beta));

    let g0 = rule.value(lo1);
    let eps = SEED_FRAC * (hi1 - lo1);
    let (seed, seed_end, y0) = if g0 <= lo1 {
        // accepted-request regime at the start
        if d2.cdf(g0) > 0.0 {
            if den_at(lo1, 0.0) <= DEN_GUARD {
                return Err(SolveError::DenominatorVanished { v1: lo1 });
            }
            (SeedKind::Sqrt(0.0), lo1, 0.0)
        } else {
            // singular start: needs gamma(lo1) = lo1 = lo2 and positive density
            if (lo1 - g0).abs() > 1e-9 * (1.0 + lo1.abs()) || d2.lo() < g0 - 1e-12 {
                return Err(SolveError::DenominatorVanished { v1: lo1 });
            }
            let fs = d2.pdf(lo1);
            if !(fs > 0.0) {
                return Err(SolveError::SingularSeed { at: lo1, density: fs });
            }
            let c = (rule.slope(lo1) / fs).sqrt();
            (SeedKind::Sqrt(c), lo1 + eps, c * eps.sqrt())
        }
    } else {
        // never-accepted-request regime at the start: bribe-only IC
        if d2.cdf(lo1) > 0.0 {
            if den_at(lo1, 0.0) <= DEN_GUARD {
                return Err(SolveError::DenominatorVanished { v1: lo1 });
            }
            (SeedKind::Sqrt(0.0), lo1, 0.0)
        } else {
            if lo1 != d2.lo() || lo1 != 0.0 {
                return Err(SolveError::DenominatorVanished { v1: lo1 });
            }
            (SeedKind::Linear(0.5), lo1 + eps, 0.5 * eps)
        }
    };

    let ode_opts = OdeOptions {
        rtol: opts.rtol * TOL_SAFETY,
        atol: opts.atol * TOL_SAFETY,
        max_step: opts.max_step.unwrap_or((hi1 - lo1) / 64.0),
        initial_step: None,
    };
    let (sol, reason) = integrate(rhs, seed_end, y0, hi1, &ode_opts, Some(event))?;
    let crossing = match reason {
        StopReason::ReachedEnd => None,
        StopReason::Event { t, y } => {
            if den_at(t, y) <= 2.0 * DEN_GUARD {
                return Err(SolveError::DenominatorVanished { v1: t });
            }
            Some(Crossing { v1: t, bribe: y })
        }
        StopReason::StepUnderflow { t, .. } => return Err(SolveError::Stalled { v1: t }),
    };

    Ok(GeneralSchedule {
        curve: SolvedCurve { start: lo1, seed_end, seed, sol },
        crossing,
        rule,
        dist2: d2.clone(),
        lo1,
        hi1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn uniform01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    fn solved() -> BribeSchedule {
        solve_bribing_schedule(&uniform01(), (0.0, 1.0), &SolveOptions::default()).unwrap()
    }

    const V_CROSS: f64 = 0.735_758_882_342_884_6; // 2/e
    const B_CROSS: f64 = 0.264_241_117_657_115_36; // 1 - 2/e

    #[test]
    fn closed_form_known_values() {
        assert_eq!(closed_form_uniform_bribe(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            closed_form_uniform_bribe(0.4).unwrap(),
            0.306_760_576_224_846_55,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            closed_form_uniform_bribe(0.01).unwrap(),
            0.091_694_817_068_237_82,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(closed_form_uniform_bribe(V_CROSS).unwrap(), B_CROSS, epsilon = 1e-12);
        assert!(closed_form_uniform_bribe(0.8).is_err());
        assert!(closed_form_uniform_bribe(-0.1).is_err());
    }

    #[test]
    fn uniform_solution_matches_closed_form() {
        let s = solved();
        for i in 0..=200 {
            let v = V_CROSS * i as f64 / 200.0;
            let b = s.bribe(v).unwrap();
            let want = closed_form_uniform_bribe(v).unwrap();
            assert!((b - want).abs() < 1e-7, "v={v}: {b} vs {want}");
        }
    }

    #[test]
    fn crossing_and_flat_branch() {
        let s = solved();
        let c = s.crossing().expect("uniform case crosses");
        assert_abs_diff_eq!(c.v1, V_CROSS, epsilon = 1e-8);
        assert_abs_diff_eq!(c.bribe, B_CROSS, epsilon = 1e-8);
        assert_eq!(s.bribe(0.9).unwrap(), c.bribe);
        assert_eq!(s.bribe(1.0).unwrap(), c.bribe);
        assert_eq!(s.request(0.9), 0.9);
    }

    #[test]
    fn initial_condition_and_low_type_asymptote() {
        let s = solved();
        assert_eq!(s.bribe(0.0).unwrap(), 0.0);
        // bribe exceeds the valuation for low types
        let b = s.bribe(0.01).unwrap();
        assert!(b > 0.01 && (0.09..=0.10).contains(&b));
        // sqrt asymptote: b(1e-4) ~ sqrt(1e-4 / f2(0)) = 0.01
        assert_abs_diff_eq!(s.bribe(1e-4).unwrap(), 0.01, epsilon = 1e-3);
        assert_abs_diff_eq!(s.bribe(1e-4).unwrap(), 0.009_916_694_481_504_57, epsilon = 1e-7);
    }

    #[test]
    fn payoff_values_and_identity() {
        let s = solved();
        let d2 = uniform01();
        assert_eq!(s.payoff(0.0).unwrap(), 0.0); // pi(lo1) = lo1
        assert_abs_diff_eq!(s.payoff(0.4).unwrap(), 0.183_193_718_384_261_49, epsilon = 1e-7);
        assert_abs_diff_eq!(s.payoff(V_CROSS).unwrap(), 4.0 / E - 1.0, epsilon = 1e-7);
        // pi = F2(b+r)(v - (b+r)) + r with r = v
        for i in 0..=32 {
            let v = i as f64 / 32.0;
            let b = s.bribe(v).unwrap();
            let alt = d2.cdf(b + v) * (v - (b + v)) + v;
            assert_abs_diff_eq!(s.payoff(v).unwrap(), alt, epsilon = 1e-10);
        }
    }

    #[test]
    fn separation_and_nonnegativity() {
        let s = solved();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=2048 {
            let v = i as f64 / 2048.0;
            let b = s.bribe(v).unwrap();
            assert!(b >= 0.0);
            let tau = b + v;
            if v < s.crossing().unwrap().v1 {
                assert!(tau > prev, "threshold not strictly increasing at v={v}");
                prev = tau;
            }
        }
    }

    #[test]
    fn ode_residual_small_at_node_midpoints() {
        // the interpolated schedule satisfies the IC ODE between nodes
        let s = solved();
        let d2 = uniform01();
        let cross = s.crossing().unwrap().v1;
        let h = 1e-7;
        for w in s.nodes().windows(2) {
            let m = 0.5 * (w[0].0 + w[1].0);
            // skip where the finite-difference probe itself breaks down:
            // the square-root start (values there are pinned by the closed
            // form) and the slope kink at the crossing
            if m < 5e-3 || m + h > 1.0 || (m - cross).abs() < 1e-4 {
                continue;
            }
            let db = (s.bribe_clamped(m + h) - s.bribe_clamped(m - h)) / (2.0 * h);
            let b = s.bribe_clamped(m);
            let (cf, pf) = d2.cdf_pdf(b + m);
            let rhs = (pf * b + cf).recip() - 1.0;
            assert!((db - rhs).abs() <= 1e-6, "residual {} at v1 = {m}", db - rhs);
        }
    }

    #[test]
    fn eval_exact_at_solver_nodes() {
        let s = solved();
        for (v, b) in s.nodes() {
            assert_eq!(s.bribe_clamped(v), b, "node at v1 = {v}");
        }
    }

    #[test]
    fn payoff_increasing_and_convex() {
        let s = solved();
        let n = 1024;
        let pis: Vec<f64> = (0..=n).map(|i| s.payoff_clamped(i as f64 / n as f64)).collect();
        for w in pis.windows(2) {
            assert!(w[1] > w[0] - 1e-12);
        }
        for w in pis.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
        }
    }

    #[test]
    fn envelope_identity() {
        let s = solved();
        let d2 = uniform01();
        let h = 1e-4;
        for i in 1..64 {
            let v = i as f64 / 64.0;
            let fd = (s.payoff_clamped(v + h) - s.payoff_clamped(v - h)) / (2.0 * h);
            let want = d2.cdf(s.bribe_clamped(v) + v);
            assert!((fd - want).abs() < 1e-4, "v={v}: {fd} vs {want}");
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let s = solved();
        assert!(s.bribe(1.2).is_err());
        assert!(s.payoff(-0.5).is_err());
    }

    #[test]
    fn whenever_bribe_zero_slope_positive() {
        // proof invariant: b = 0 => b' > 0 (below the crossing)
        let d2 = uniform01();
        for i in 0..64 {
            let v = 0.73 * i as f64 / 63.0;
            let (cf, pf) = d2.cdf_pdf(v);
            if cf < 1.0 {
                assert!((pf * 0.0 + cf).recip() - 1.0 > 0.0, "rhs at (v={v}, b=0)");
            }
        }
    }

    #[test]
    fn reserve_zero_reproduces_plain_solve() {
        let d = uniform01();
        let a = solve_bribing_schedule(&d, (0.0, 1.0), &SolveOptions::default()).unwrap();
        let b = solve_with_reserve(&d, &d, 0.0, &SolveOptions::default()).unwrap();
        let na = a.nodes();
        let nb = b.nodes();
        assert_eq!(na.len(), nb.len());
        for (x, y) in na.iter().zip(nb.iter()) {
            assert_eq!(x, y);
        }
    }

    // closed form for the reserve case, derived by the same separation
    // y = 2b + v used for the R = 0 example
    fn reserve_closed_form(v: f64, r: f64) -> f64 {
        1.0 - v / 2.0 + lambert_w0(-((2.0 - r) / 2.0) * (r - v / 2.0 - 1.0).exp())
    }

    #[test]
    fn reserve_schedule_matches_derived_closed_form() {
        let d = uniform01();
        let r = 0.3;
        let s = solve_with_reserve(&d, &d, r, &SolveOptions::default()).unwrap();
        assert_eq!(s.bribe(0.1).unwrap(), 0.0);
        assert_eq!(s.request(0.1), 0.0);
        assert_eq!(s.bribe(0.3).unwrap(), 0.0);
        assert_eq!(s.request(0.3), 0.0);
        let c = s.crossing().unwrap();
        let want_cross = (2.0 - r) * (r - 1.0_f64).exp();
        assert_abs_diff_eq!(c.v1, want_cross, epsilon = 1e-8);
        for i in 0..=100 {
            let v = r + (want_cross - r) * i as f64 / 100.0;
            let b = s.bribe(v).unwrap();
            assert!((b - reserve_closed_form(v, r)).abs() < 1e-7, "v={v}");
        }
        // payoff shifted by R
        let v = 0.6;
        let b = s.bribe(v).unwrap();
        assert_abs_diff_eq!(
            s.payoff(v).unwrap(),
            (v - r) - d.cdf(b + v) * b,
            epsilon = 1e-12
        );
        assert!(solve_with_reserve(&d, &d, 1.0, &SolveOptions::default()).is_err());
        assert!(solve_with_reserve(&d, &d, -0.1, &SolveOptions::default()).is_err());
    }

    #[test]
    fn trivial_case_gated_by_flag() {
        let d2 = Distribution::uniform(0.0, 1.0).unwrap();
        let err = solve_bribing_schedule(&d2, (1.5, 2.0), &SolveOptions::default());
        assert!(matches!(err, Err(SolveError::TrivialCase { .. })));
        let opts = SolveOptions { trivial_case: true, ..Default::default() };
        let s = solve_bribing_schedule(&d2, (1.5, 2.0), &opts).unwrap();
        assert!(s.is_trivial());
        assert_eq!(s.bribe(1.7).unwrap(), 0.0);
        assert_eq!(s.request(1.7), 1.7);
        assert_eq!(s.payoff(1.7).unwrap(), 1.7);
        // flag on a non-trivial configuration is rejected
        assert!(matches!(
            solve_bribing_schedule(&d2, (0.0, 1.0), &opts),
            Err(SolveError::NotTrivial { .. })
        ));
    }

    #[test]
    fn unsupported_support_rejected() {
        let d2 = Distribution::uniform(0.5, 1.5).unwrap();
        assert!(matches!(
            solve_bribing_schedule(&d2, (0.0, 1.0), &SolveOptions::default()),
            Err(SolveError::UnsupportedSupport { .. })
        ));
    }

    #[test]
    fn general_family_specializes_to_main_schedule() {
        let d2 = uniform01();
        let g = solve_general_family(
            &d2,
            Arc::new(AffineRequest { scale: 1.0, offset: 0.0 }),
            (0.0, 1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        let s = solved();
        for i in 0..=128 {
            let v = i as f64 / 128.0;
            let beta = g.bribe(v).unwrap();
            let b = s.bribe(v).unwrap();
            assert!((beta - b).abs() < 1e-8, "v={v}: {beta} vs {b}");
        }
    }

    #[test]
    fn general_family_scaled_request_solves() {
        let d2 = uniform01();
        let g = solve_general_family(
            &d2,
            Arc::new(AffineRequest { scale: 0.8, offset: 0.0 }),
            (0.0, 1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        // beta >= 0 and beta + gamma nondecreasing
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=512 {
            let v = i as f64 / 512.0;
            let beta = g.bribe(v).unwrap();
            assert!(beta >= 0.0);
            let a = beta + g.request(v);
            assert!(a >= prev - 1e-10);
            prev = a;
        }
        // sqrt(0.8 v) asymptote at the singular start
        assert_abs_diff_eq!(g.bribe(1e-4).unwrap(), (0.8e-4_f64).sqrt(), epsilon = 2e-4);
    }

    #[test]
    fn general_family_never_accepted_request_uses_bribe_only_ic() {
        // gamma = v + 0.1 > v everywhere: beta must follow the bribe-only
        // separating schedule, which for uniform(0,1) is v/2.
        let d2 = uniform01();
        let g = solve_general_family(
            &d2,
            Arc::new(AffineRequest { scale: 1.0, offset: 0.1 }),
            (0.0, 1.0),
            &SolveOptions::default(),
        )
        .unwrap();
        for i in 1..=100 {
            let v = 0.66 * i as f64 / 100.0;
            assert!((g.bribe(v).unwrap() - v / 2.0).abs() < 1e-6, "v={v}");
        }
    }

    #[test]
    fn general_family_rejects_negative_requests() {
        let d2 = uniform01();
        let err = solve_general_family(
            &d2,
            Arc::new(AffineRequest { scale: 1.0, offset: -0.2 }),
            (0.0, 1.0),
            &SolveOptions::default(),
        );
        assert!(matches!(err, Err(SolveError::InvalidGamma { .. })));
    }

    #[test]
    fn step_control_halving_is_stable() {
        let d2 = uniform01();
        let coarse = solve_bribing_schedule(&d2, (0.0, 1.0), &SolveOptions::default()).unwrap();
        let fine_opts = SolveOptions {
            rtol: 1e-9 / 32.0,
            atol: 1e-10 / 32.0,
            ..Default::default()
        };
        let fine = solve_bribing_schedule(&d2, (0.0, 1.0), &fine_opts).unwrap();
        for i in 0..=256 {
            let v = i as f64 / 256.0;
            assert!(
                (coarse.bribe_clamped(v) - fine.bribe_clamped(v)).abs() <= 1e-7,
                "v={v}"
            );
        }
    }

    #[test]
    fn from_nodes_round_trip_and_scaling() {
        let s = solved();
        let nodes: Vec<(f64, f64)> =
            s.sample_grid(513).into_iter().map(|r| (r.v1, r.b)).collect();
        let rebuilt = BribeSchedule::from_nodes(
            &nodes,
            s.crossing(),
            0.0,
            uniform01(),
            (0.0, 1.0),
        )
        .unwrap();
        // away from the square-root start the cubic tracks tightly; near it
        // interpolation error is dominated by the unbounded curvature
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            let tol = if v < 0.05 { 2e-3 } else { 1e-6 };
            assert!(
                (rebuilt.bribe_clamped(v) - s.bribe_clamped(v)).abs() < tol,
                "v={v}"
            );
        }
        let corrupted = s.with_scaled_bribes(0.5);
        assert_abs_diff_eq!(corrupted.bribe_clamped(0.4), 0.5 * s.bribe_clamped(0.4), epsilon = 1e-9);
    }
}
