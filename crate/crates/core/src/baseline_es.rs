//! Bribe-only benchmark equilibrium and the payoff-dominance comparison.
//!
//! In the single-option model the proposer can only offer a bribe. The
//! refinement-surviving equilibria have a separating branch B(v₁) solving
//!
//! ```text
//! B' = f₂(v₁+B)(v₁−B) / (F₂(v₁+B) − f₂(v₁+B)(v₁−B)),   B(v̲₁) = 0,
//! ```
//!
//! and a pooled bribe B̂ above a threshold v̂ chosen so that B̂ is accepted
//! by every opponent type: B̂ ≥ v̄₂ − E[v₁ | v₁ ≥ v̂]. The ODE denominator
//! can vanish, in which case the separating branch dies; if that happens
//! before any admissible v̂ the benchmark equilibrium does not exist and
//! the solver reports where and why instead of inventing one.

use serde::Serialize;
use thiserror::Error;

use crate::distributions::Distribution;
use crate::equilibrium::{BribeSchedule, SolveError, SolveOptions, DEN_GUARD, TOL_SAFETY};
use crate::equilibrium::{SeedKind, SolvedCurve};
use crate::ode::{integrate, OdeOptions, StopReason};
use crate::quad::adaptive_simpson;

#[derive(Debug, Error)]
pub enum EsError {
    #[error("benchmark equilibrium does not exist: {0}")]
    DoesNotExist(String),
    #[error("type ranges differ: [{0}, {1}] vs [{2}, {3}]")]
    MismatchedRanges(f64, f64, f64, f64),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Why the separating branch stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchStop {
    RangeEnd,
    DenominatorZero,
}

/// The single-option benchmark: separating branch, pooling threshold v̂ and
/// pooled bribe B̂ when an equilibrium exists.
pub struct EsEquilibrium {
    curve: SolvedCurve,
    /// largest type the separating branch reaches
    v_stop: f64,
    stop: BranchStop,
    v_hat: Option<f64>,
    b_hat: Option<f64>,
    /// admissible pooling thresholds found on the scan grid
    admissible: Option<(f64, f64)>,
    exists: bool,
    diagnostic: Option<String>,
    d2: Distribution,
    lo1: f64,
    hi1: f64,
}

impl EsEquilibrium {
    pub fn exists(&self) -> bool {
        self.exists
    }

    pub fn diagnostic(&self) -> Option<&str> {
        self.diagnostic.as_deref()
    }

    pub fn v_hat(&self) -> Option<f64> {
        self.v_hat
    }

    pub fn b_hat(&self) -> Option<f64> {
        self.b_hat
    }

    pub fn admissible_range(&self) -> Option<(f64, f64)> {
        self.admissible
    }

    pub fn branch_stop(&self) -> (f64, BranchStop) {
        (self.v_stop, self.stop)
    }

    pub fn lo1(&self) -> f64 {
        self.lo1
    }

    pub fn hi1(&self) -> f64 {
        self.hi1
    }

    /// Separating-branch bribe B_es(v₁); only valid up to the branch stop.
    pub fn separating_bribe(&self, v1: f64) -> Result<f64, EsError> {
        if v1 < self.lo1 - 1e-12 || v1 > self.v_stop + 1e-12 {
            return Err(EsError::Solve(SolveError::OutOfRange {
                v1,
                lo1: self.lo1,
                hi1: self.v_stop,
            }));
        }
        Ok(self.curve.eval(v1.clamp(self.lo1, self.v_stop)).max(0.0))
    }

    /// Equilibrium bribe B(v₁): separating below v̂, pooled B̂ above.
    pub fn bribe(&self, v1: f64) -> Result<f64, EsError> {
        let (v_hat, b_hat) = self.require_exists()?;
        if v1 < v_hat {
            self.separating_bribe(v1)
        } else {
            Ok(b_hat)
        }
    }

    /// Expected payoff Π(v₁): acceptance-weighted below v̂ (the bribe is
    /// taken only by opponents with v₂ ≤ v₁+B), v₁ − B̂ above because the
    /// pooled bribe is accepted by everyone.
    pub fn payoff(&self, v1: f64) -> Result<f64, EsError> {
        let (v_hat, b_hat) = self.require_exists()?;
        if v1 < v_hat {
            let b = self.separating_bribe(v1)?;
            Ok(self.d2.cdf(v1 + b) * (v1 - b))
        } else {
            Ok(v1 - b_hat)
        }
    }

    /// Separating-branch nodes (v₁, B_es).
    pub fn separating_nodes(&self) -> Vec<(f64, f64)> {
        self.curve.nodes()
    }

    fn require_exists(&self) -> Result<(f64, f64), EsError> {
        match (self.exists, self.v_hat, self.b_hat) {
            (true, Some(v), Some(b)) => Ok((v, b)),
            _ => Err(EsError::DoesNotExist(
                self.diagnostic.clone().unwrap_or_else(|| "unknown".into()),
            )),
        }
    }
}

/// E[v₁ | v₁ ≥ v] by adaptive quadrature on d1.
fn conditional_mean_above(d1: &Distribution, v: f64) -> f64 {
    let tail = 1.0 - d1.cdf(v);
    if tail < 1e-12 {
        return d1.hi();
    }
    adaptive_simpson(|t| t * d1.pdf(t), v.max(d1.lo()), d1.hi(), 1e-10) / tail
}

/// Solve the bribe-only benchmark for the distribution pair.
pub fn solve_es(
    d1: &Distribution,
    d2: &Distribution,
    opts: &SolveOptions,
) -> Result<EsEquilibrium, SolveError> {
    let (lo1, hi1) = (d1.lo(), d1.hi());
    if lo1 >= d2.hi() {
        return Err(SolveError::TrivialCase { lo1, hi2: d2.hi() });
    }

    let den_at = |v: f64, b: f64| {
        let (cf, pf) = d2.cdf_pdf(v + b);
        cf - pf * (v - b)
    };
    let rhs = |v: f64, b: f64| {
        let (cf, pf) = d2.cdf_pdf(v + b);
        pf * (v - b) / (cf - pf * (v - b))
    };
    let event = |v: f64, b: f64| den_at(v, b) - DEN_GUARD;

    // start analysis
    let eps = 1e-8 * (hi1 - lo1);
    let seeded = if d2.cdf(lo1) == 0.0 {
        // only the common-zero start admits the B ~ v/2 balance
        if lo1 == d2.lo() && lo1 == 0.0 && d2.pdf(0.0) > 0.0 {
            Some((SeedKind::Linear(0.5), lo1 + eps, 0.5 * eps))
        } else {
            None
        }
    } else if den_at(lo1, 0.0) > DEN_GUARD {
        Some((SeedKind::Sqrt(0.0), lo1, 0.0))
    } else {
        None
    };

    let (curve, v_stop, stop) = match seeded {
        Some((seed, seed_end, y0)) => {
            let ode_opts = OdeOptions {
                rtol: opts.rtol * TOL_SAFETY,
                atol: opts.atol * TOL_SAFETY,
                max_step: opts.max_step.unwrap_or((hi1 - lo1) / 64.0),
                initial_step: None,
            };
            let (sol, reason) = integrate(rhs, seed_end, y0, hi1, &ode_opts, Some(event))?;
            let (v_stop, stop) = match reason {
                StopReason::ReachedEnd => (hi1, BranchStop::RangeEnd),
                StopReason::Event { t, .. } => (t, BranchStop::DenominatorZero),
                // the singularity is an infinite-slope blow-up; treat the
                // stall point as the denominator death
                StopReason::StepUnderflow { t, .. } => (t, BranchStop::DenominatorZero),
            };
            (SolvedCurve { start: lo1, seed_end, seed, sol }, v_stop, stop)
        }
        None => {
            // denominator nonpositive at the very first type
            let (sol, _) = integrate(
                |_, _| 0.0,
                lo1,
                0.0,
                hi1,
                &OdeOptions::default(),
                None::<fn(f64, f64) -> f64>,
            )?;
            (
                SolvedCurve { start: lo1, seed_end: lo1, seed: SeedKind::Sqrt(0.0), sol },
                lo1,
                BranchStop::DenominatorZero,
            )
        }
    };

    // pooling threshold: smallest admissible v̂ on [lo1, v_stop], located by
    // scan + bisection on g(v̂) = B̂(v̂) − (v̄₂ − E[v₁ | v₁ ≥ v̂])
    let b_es = |v: f64| curve.eval(v).max(0.0);
    let b_hat_at = |v: f64| {
        let b = b_es(v);
        v - d2.cdf(v + b) * (v - b)
    };
    let g = |v: f64| b_hat_at(v) - (d2.hi() - conditional_mean_above(d1, v));

    let scan_n = 512;
    let mut first_ok: Option<f64> = None;
    let mut last_ok: Option<f64> = None;
    let mut prev: Option<(f64, f64)> = None;
    for i in 0..=scan_n {
        let v = lo1 + (v_stop - lo1) * i as f64 / scan_n as f64;
        let gv = g(v);
        if gv >= 0.0 {
            if first_ok.is_none() {
                let refined = match prev {
                    Some((pv, pg)) if pg < 0.0 => {
                        let (mut a, mut b) = (pv, v);
                        for _ in 0..80 {
                            let m = 0.5 * (a + b);
                            if g(m) >= 0.0 {
                                b = m;
                            } else {
                                a = m;
                            }
                        }
                        b
                    }
                    _ => v,
                };
                first_ok = Some(refined);
            }
            last_ok = Some(v);
        }
        prev = Some((v, gv));
    }

    let (exists, v_hat, b_hat, admissible, diagnostic) = match first_ok {
        Some(v_hat) => (
            true,
            Some(v_hat),
            Some(b_hat_at(v_hat)),
            Some((v_hat, last_ok.unwrap())),
            None,
        ),
        None => {
            let why = match stop {
                BranchStop::DenominatorZero => format!(
                    "separating-branch denominator F2 - f2*(v1-B) vanished at v1 = {v_stop:.6} \
                     before any admissible pooling threshold"
                ),
                BranchStop::RangeEnd => format!(
                    "no pooling threshold on [{lo1}, {v_stop}] satisfies \
                     B_hat >= v2_top - E[v1 | v1 >= v_hat]"
                ),
            };
            (false, None, None, None, Some(why))
        }
    };

    Ok(EsEquilibrium {
        curve,
        v_stop,
        stop,
        v_hat,
        b_hat,
        admissible,
        exists,
        diagnostic,
        d2: d2.clone(),
        lo1,
        hi1,
    })
}

/// One row of the dominance comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DominanceRow {
    pub v1: f64,
    pub b: f64,
    pub b_es: f64,
    pub pi: f64,
    pub pi_es: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub rows: Vec<DominanceRow>,
    pub min_gap: f64,
    pub argmin_v1: f64,
    pub violation: bool,
}

/// Per-type gap π(v₁) − Π(v₁) on a uniform grid; flags a violation when
/// the minimum dips below −1e-9.
pub fn dominance_compare(
    s: &BribeSchedule,
    e: &EsEquilibrium,
    grid: usize,
) -> Result<DominanceReport, EsError> {
    if (s.lo1() - e.lo1).abs() > 1e-12 || (s.hi1() - e.hi1).abs() > 1e-12 {
        return Err(EsError::MismatchedRanges(s.lo1(), s.hi1(), e.lo1, e.hi1));
    }
    e.require_exists()?;
    let n = grid.max(2);
    let mut rows = Vec::with_capacity(n);
    let mut min_gap = f64::INFINITY;
    let mut argmin = s.lo1();
    for i in 0..n {
        let v1 = s.lo1() + (s.hi1() - s.lo1()) * i as f64 / (n - 1) as f64;
        let pi = s.payoff_clamped(v1);
        let pi_es = e.payoff(v1)?;
        let gap = pi - pi_es;
        if gap < min_gap {
            min_gap = gap;
            argmin = v1;
        }
        rows.push(DominanceRow {
            v1,
            b: s.bribe_clamped(v1),
            b_es: e.bribe(v1)?,
            pi,
            pi_es,
            gap,
        });
    }
    Ok(DominanceReport { rows, min_gap, argmin_v1: argmin, violation: min_gap < -1e-9 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use crate::equilibrium::solve_bribing_schedule;

    fn uniform01() -> Distribution {
        Distribution::uniform(0.0, 1.0).unwrap()
    }

    fn solved_es() -> EsEquilibrium {
        let d = uniform01();
        solve_es(&d, &d, &SolveOptions::default()).unwrap()
    }

    const V_HAT: f64 = 0.422_649_730_810_374_24; // 1 - 1/sqrt(3)
    const B_HAT: f64 = 0.288_675_134_594_812_88; // sqrt(3)/6

    #[test]
    fn uniform_separating_branch_is_half_value() {
        let e = solved_es();
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            let b = e.separating_bribe(v).unwrap();
            let want = if v <= 2.0 / 3.0 { v / 2.0 } else { 1.0 / 3.0 };
            assert!((b - want).abs() < 1e-7, "v={v}: {b} vs {want}");
            assert!(b <= v + 1e-9, "separating bribe exceeds valuation at {v}");
        }
        assert_eq!(e.branch_stop().1, BranchStop::RangeEnd);
    }

    #[test]
    fn uniform_pooling_threshold() {
        let e = solved_es();
        assert!(e.exists());
        assert_abs_diff_eq!(e.v_hat().unwrap(), V_HAT, epsilon = 1e-6);
        assert_abs_diff_eq!(e.b_hat().unwrap(), B_HAT, epsilon = 1e-6);
        // the bound binds at the smallest admissible threshold
        let (lo, hi) = e.admissible_range().unwrap();
        assert!(lo < hi && lo >= 0.0 && hi <= 1.0);
    }

    #[test]
    fn payoff_branches_and_continuity() {
        let e = solved_es();
        assert_abs_diff_eq!(e.payoff(0.4).unwrap(), 0.12, epsilon = 1e-7);
        assert_abs_diff_eq!(e.payoff(0.9).unwrap(), 0.9 - B_HAT, epsilon = 1e-6);
        assert_eq!(e.payoff(0.0).unwrap(), 0.0); // F2(lo)*lo
        let v = e.v_hat().unwrap();
        let below = e.payoff(v - 1e-9).unwrap();
        let above = e.payoff(v + 1e-9).unwrap();
        assert!((below - above).abs() < 1e-8, "discontinuous at v_hat: {below} vs {above}");
    }

    #[test]
    fn pooled_branch_has_unit_slope() {
        let e = solved_es();
        let v_hat = e.v_hat().unwrap();
        let h = (1.0 - v_hat) / 64.0;
        let mut prev = e.payoff(v_hat + 1e-6).unwrap();
        let mut v = v_hat + 1e-6 + h;
        while v < 1.0 {
            let p = e.payoff(v).unwrap();
            assert_abs_diff_eq!((p - prev) / h, 1.0, epsilon = 1e-8);
            prev = p;
            v += h;
        }
    }

    #[test]
    fn separating_envelope_identity() {
        let e = solved_es();
        let d2 = uniform01();
        let v_hat = e.v_hat().unwrap();
        let h = 1e-4;
        for i in 1..64 {
            let v = v_hat * i as f64 / 64.0;
            if v + h >= v_hat {
                break;
            }
            let fd = (e.payoff(v + h).unwrap() - e.payoff(v - h).unwrap()) / (2.0 * h);
            let want = d2.cdf(e.bribe(v).unwrap() + v);
            assert!((fd - want).abs() < 1e-4, "v={v}: {fd} vs {want}");
        }
    }

    #[test]
    fn dominance_uniform() {
        let d = uniform01();
        let s = solve_bribing_schedule(&d, (0.0, 1.0), &SolveOptions::default()).unwrap();
        let e = solved_es();
        let rep = dominance_compare(&s, &e, 512).unwrap();
        assert!(!rep.violation, "min gap {} at {}", rep.min_gap, rep.argmin_v1);
        assert!(rep.min_gap >= -1e-9);
        // gap at 0.4 from the two closed forms: 0.183194 - 0.12
        let near = rep
            .rows
            .iter()
            .min_by(|a, b| {
                (a.v1 - 0.4).abs().partial_cmp(&(b.v1 - 0.4).abs()).unwrap()
            })
            .unwrap();
        assert!((near.gap - 0.063_193_718_384_261_49).abs() < 1e-3);
    }

    #[test]
    fn gap_at_lowest_type_formula() {
        // gap(lo1) = lo1 * (1 - F2(lo1)): zero for the uniform pair at 0
        let d = uniform01();
        let s = solve_bribing_schedule(&d, (0.0, 1.0), &SolveOptions::default()).unwrap();
        let e = solved_es();
        let gap0 = s.payoff_clamped(0.0) - e.payoff(0.0).unwrap();
        assert_eq!(gap0, 0.0);
    }

    #[test]
    fn nonexistence_fixture_reports_location() {
        // spike density: branch denominator dies as v1+B climbs the ramp
        let d2 = Distribution::piecewise_linear_density(
            vec![0.0, 0.2, 0.3, 0.4, 1.0],
            vec![0.2, 0.2, 8.2, 0.2, 0.2],
        )
        .unwrap();
        let d1 = Distribution::uniform(0.0, 0.5).unwrap();
        let e = solve_es(&d1, &d2, &SolveOptions::default()).unwrap();
        assert!(!e.exists());
        let (v_stop, stop) = e.branch_stop();
        assert_eq!(stop, BranchStop::DenominatorZero);
        assert!((v_stop - 0.135).abs() < 0.01, "v_stop = {v_stop}");
        assert!(e.diagnostic().unwrap().contains("denominator"));
        // the denominator sign flips right where the branch stopped
        let den = |v: f64| {
            let b = e.separating_bribe(v).unwrap();
            let (cf, pf) = d2.cdf_pdf(v + b);
            cf - pf * (v - b)
        };
        assert!(den(v_stop * 0.5) > 0.0);
        assert!(den((v_stop - 1e-4).max(0.0)) > 0.0);
        // payoff queries must fail
        assert!(e.payoff(0.2).is_err());
    }

    #[test]
    fn mismatched_ranges_rejected() {
        let d = uniform01();
        let s = solve_bribing_schedule(&d, (0.0, 0.9), &SolveOptions::default()).unwrap();
        let e = solved_es();
        assert!(matches!(
            dominance_compare(&s, &e, 64),
            Err(EsError::MismatchedRanges(..))
        ));
    }
}
