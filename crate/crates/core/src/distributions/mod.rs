//! Bidder value distributions.
//!
//! Every distribution lives on a compact support `[lo, hi]` with `lo ≥ 0`
//! and carries a continuous density that is positive in the interior, the
//! regularity the game analysis relies on. Evaluation outside the support
//! clamps (CDF to 0/1, density to 0) because the equilibrium solver probes
//! `F₂` above the top of the opponent's support.
//!
//! Four families are built in:
//!
//! | family                    | parameters            | CDF                      |
//! |---------------------------|-----------------------|--------------------------|
//! | `uniform`                 | lo, hi                | (x−lo)/(hi−lo)           |
//! | `power`                   | lo, hi, k ≥ 1         | ((x−lo)/(hi−lo))^k       |
//! | `piecewise-linear-density`| density knots         | piecewise quadratic      |
//! | `table`                   | (x, cdf) rows         | monotone cubic (PCHIP)   |

pub(crate) mod pchip;

use pchip::Pchip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::adaptive_simpson;

#[derive(Debug, Error)]
pub enum DistError {
    #[error("invalid support [{lo}, {hi}]: need 0 <= lo < hi, both finite")]
    InvalidSupport { lo: f64, hi: f64 },
    #[error("density must be positive on the support ({detail})")]
    NonPositiveDensity { detail: String },
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("table must have at least {need} rows, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("cdf column must increase strictly from 0 to 1 ({detail})")]
    BadCdfTable { detail: String },
    #[error("density does not integrate to 1 (got {integral})")]
    NotNormalized { integral: f64 },
    #[error("constructed distribution failed validation: {0}")]
    Validation(String),
}

/// Declarative description of a distribution, as read from configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DistributionSpec {
    Uniform { lo: f64, hi: f64 },
    Power { lo: f64, hi: f64, k: f64 },
    PiecewiseLinearDensity { xs: Vec<f64>, densities: Vec<f64> },
    /// Rows of (x, cdf(x)).
    Table { points: Vec<(f64, f64)> },
}

/// A validated value distribution. Immutable after construction and safe
/// to share across threads.
#[derive(Debug, Clone)]
pub struct Distribution {
    lo: f64,
    hi: f64,
    kind: Kind,
}

#[derive(Debug, Clone)]
enum Kind {
    Uniform,
    Power {
        k: f64,
    },
    Piecewise {
        xs: Vec<f64>,
        fs: Vec<f64>,
        /// cdf at knots
        cum: Vec<f64>,
        /// ∫ t f(t) dt from lo at knots
        cum_xm: Vec<f64>,
    },
    Table {
        cdf: Pchip,
    },
}

/// Build a distribution from its declarative spec. This is the single
/// construction entry point used by configuration loading.
pub fn make_distribution(spec: &DistributionSpec) -> Result<Distribution, DistError> {
    match spec {
        DistributionSpec::Uniform { lo, hi } => Distribution::uniform(*lo, *hi),
        DistributionSpec::Power { lo, hi, k } => Distribution::power(*lo, *hi, *k),
        DistributionSpec::PiecewiseLinearDensity { xs, densities } => {
            Distribution::piecewise_linear_density(xs.clone(), densities.clone())
        }
        DistributionSpec::Table { points } => Distribution::from_cdf_table(points.clone()),
    }
}

fn check_support(lo: f64, hi: f64) -> Result<(), DistError> {
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(DistError::InvalidSupport { lo, hi });
    }
    Ok(())
}

impl Distribution {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, DistError> {
        check_support(lo, hi)?;
        let d = Self { lo, hi, kind: Kind::Uniform };
        d.validate()?;
        Ok(d)
    }

    /// CDF ((x−lo)/(hi−lo))^k. Requires k ≥ 1 so the density stays finite;
    /// k = 1 coincides with the uniform family.
    pub fn power(lo: f64, hi: f64, k: f64) -> Result<Self, DistError> {
        check_support(lo, hi)?;
        if !(k.is_finite() && k >= 1.0) {
            return Err(DistError::BadParameter(format!(
                "power exponent k must be finite and >= 1, got {k}"
            )));
        }
        let d = Self { lo, hi, kind: Kind::Power { k } };
        d.validate()?;
        Ok(d)
    }

    /// Density given by linear interpolation of `(xs[i], densities[i])`;
    /// the knot densities are rescaled so the total mass is exactly 1.
    pub fn piecewise_linear_density(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self, DistError> {
        if xs.len() < 2 || xs.len() != fs.len() {
            return Err(DistError::TooFewPoints { need: 2, got: xs.len().min(fs.len()) });
        }
        check_support(xs[0], *xs.last().unwrap())?;
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(DistError::BadParameter(format!(
                    "density knots must increase strictly: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for (&x, &f) in xs.iter().zip(fs.iter()) {
            if !(f.is_finite() && f > 0.0) {
                return Err(DistError::NonPositiveDensity {
                    detail: format!("knot density {f} at x = {x}"),
                });
            }
        }
        let mass: f64 = xs
            .windows(2)
            .zip(fs.windows(2))
            .map(|(x, f)| 0.5 * (f[0] + f[1]) * (x[1] - x[0]))
            .sum();
        let fs: Vec<f64> = fs.iter().map(|f| f / mass).collect();
        let n = xs.len();
        let mut cum = vec![0.0; n];
        let mut cum_xm = vec![0.0; n];
        for i in 0..n - 1 {
            let h = xs[i + 1] - xs[i];
            cum[i + 1] = cum[i] + 0.5 * (fs[i] + fs[i + 1]) * h;
            let m = (fs[i + 1] - fs[i]) / h;
            let (a, b) = (xs[i], xs[i + 1]);
            cum_xm[i + 1] = cum_xm[i]
                + fs[i] * (b * b - a * a) / 2.0
                + m * ((b * b * b - a * a * a) / 3.0 - a * (b * b - a * a) / 2.0);
        }
        cum[n - 1] = 1.0; // kill the last rounding so cdf(hi) is exactly 1
        let d = Self {
            lo: xs[0],
            hi: xs[n - 1],
            kind: Kind::Piecewise { xs, fs, cum, cum_xm },
        };
        d.validate()?;
        Ok(d)
    }

    /// Build from tabulated `(x, cdf)` rows. The CDF is interpolated with a
    /// monotone cubic so the implied density cannot go negative; a flat cell
    /// (equal adjacent cdf values) means a zero-density region and is
    /// rejected.
    pub fn from_cdf_table(points: Vec<(f64, f64)>) -> Result<Self, DistError> {
        if points.len() < 3 {
            return Err(DistError::TooFewPoints { need: 3, got: points.len() });
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let mut ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        check_support(xs[0], *xs.last().unwrap())?;
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(DistError::BadCdfTable {
                    detail: format!("x column must increase strictly: {} then {}", w[0], w[1]),
                });
            }
        }
        if ys[0].abs() > 1e-9 || (ys[ys.len() - 1] - 1.0).abs() > 1e-9 {
            return Err(DistError::BadCdfTable {
                detail: format!(
                    "cdf must run from 0 to 1, got {} .. {}",
                    ys[0],
                    ys[ys.len() - 1]
                ),
            });
        }
        ys[0] = 0.0;
        let last = ys.len() - 1;
        ys[last] = 1.0;
        for (i, w) in ys.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(DistError::NonPositiveDensity {
                    detail: format!(
                        "zero-density cell: cdf {} at x = {} does not increase by x = {}",
                        w[0],
                        xs[i],
                        xs[i + 1]
                    ),
                });
            }
        }
        let d = Self {
            lo: xs[0],
            hi: *xs.last().unwrap(),
            kind: Kind::Table { cdf: Pchip::new(xs, ys) },
        };
        d.validate()?;
        Ok(d)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn family_tag(&self) -> &'static str {
        match &self.kind {
            Kind::Uniform => "uniform",
            Kind::Power { .. } => "power",
            Kind::Piecewise { .. } => "piecewise-linear-density",
            Kind::Table { .. } => "table",
        }
    }

    /// Reconstructable description of this distribution.
    pub fn spec(&self) -> DistributionSpec {
        match &self.kind {
            Kind::Uniform => DistributionSpec::Uniform { lo: self.lo, hi: self.hi },
            Kind::Power { k } => DistributionSpec::Power { lo: self.lo, hi: self.hi, k: *k },
            Kind::Piecewise { xs, fs, .. } => DistributionSpec::PiecewiseLinearDensity {
                xs: xs.clone(),
                densities: fs.clone(),
            },
            Kind::Table { cdf } => DistributionSpec::Table {
                points: (0..=64)
                    .map(|i| {
                        let x = self.lo + (self.hi - self.lo) * i as f64 / 64.0;
                        (x, cdf.eval(x))
                    })
                    .collect(),
            },
        }
    }

    /// CDF, clamped to 0 below and 1 above the support.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        match &self.kind {
            Kind::Uniform => (x - self.lo) / (self.hi - self.lo),
            Kind::Power { k } => ((x - self.lo) / (self.hi - self.lo)).powf(*k),
            Kind::Piecewise { xs, fs, cum, .. } => {
                let i = cell_index(xs, x);
                let dx = x - xs[i];
                let m = (fs[i + 1] - fs[i]) / (xs[i + 1] - xs[i]);
                (cum[i] + fs[i] * dx + 0.5 * m * dx * dx).clamp(0.0, 1.0)
            }
            Kind::Table { cdf } => cdf.eval(x).clamp(0.0, 1.0),
        }
    }

    /// Density, 0 outside the support.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        match &self.kind {
            Kind::Uniform => (self.hi - self.lo).recip(),
            Kind::Power { k } => {
                let s = (x - self.lo) / (self.hi - self.lo);
                k * s.powf(k - 1.0) / (self.hi - self.lo)
            }
            Kind::Piecewise { xs, fs, .. } => {
                let i = cell_index(xs, x);
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                fs[i] + t * (fs[i + 1] - fs[i])
            }
            Kind::Table { cdf } => cdf.deriv(x).max(0.0),
        }
    }

    /// CDF and density together.
    pub fn cdf_pdf(&self, x: f64) -> (f64, f64) {
        (self.cdf(x), self.pdf(x))
    }

    /// Quantile (inverse CDF); the probability argument is clamped to [0, 1].
    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            Kind::Uniform => self.lo + u * (self.hi - self.lo),
            Kind::Power { k } => self.lo + (self.hi - self.lo) * u.powf(k.recip()),
            Kind::Piecewise { xs, fs, cum, .. } => {
                let i = match cum.binary_search_by(|v| v.partial_cmp(&u).unwrap()) {
                    Ok(i) => return xs[i.min(xs.len() - 1)],
                    Err(i) => i.clamp(1, xs.len() - 1) - 1,
                };
                let c = u - cum[i];
                let h = xs[i + 1] - xs[i];
                let m = (fs[i + 1] - fs[i]) / h;
                // stable quadratic root: d = 2c / (f + sqrt(f^2 + 2mc))
                let disc = (fs[i] * fs[i] + 2.0 * m * c).max(0.0);
                let d = 2.0 * c / (fs[i] + disc.sqrt());
                (xs[i] + d).clamp(self.lo, self.hi)
            }
            Kind::Table { cdf } => cdf.invert(u),
        }
    }

    /// Partial first moment ∫ t·f(t) dt from lo up to min(x, hi); 0 below lo.
    pub fn partial_mean(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        let x = x.min(self.hi);
        let w = self.hi - self.lo;
        match &self.kind {
            Kind::Uniform => (x * x - self.lo * self.lo) / (2.0 * w),
            Kind::Power { k } => {
                let s = (x - self.lo) / w;
                self.lo * s.powf(*k) + w * k * s.powf(k + 1.0) / (k + 1.0)
            }
            Kind::Piecewise { xs, fs, cum_xm, .. } => {
                let i = cell_index(xs, x);
                let (a, t) = (xs[i], x);
                let m = (fs[i + 1] - fs[i]) / (xs[i + 1] - xs[i]);
                cum_xm[i]
                    + fs[i] * (t * t - a * a) / 2.0
                    + m * ((t * t * t - a * a * a) / 3.0 - a * (t * t - a * a) / 2.0)
            }
            // ∫ t c'(t) dt = x·c(x) − lo·c(lo) − ∫ c(t) dt
            Kind::Table { cdf } => x * cdf.eval(x) - cdf.integral_from_start(x),
        }
    }

    /// Mean of the distribution.
    pub fn mean(&self) -> f64 {
        self.partial_mean(self.hi)
    }

    /// Post-construction invariant battery. Cheap enough to run on every
    /// construction; rejects specs whose implied density dips to zero.
    fn validate(&self) -> Result<(), DistError> {
        let w = self.hi - self.lo;
        if self.cdf(self.lo) != 0.0 || self.cdf(self.hi) != 1.0 {
            return Err(DistError::Validation("cdf endpoints not 0/1".into()));
        }
        // density positive strictly inside (endpoint zeros are allowed,
        // e.g. power k > 1 at lo)
        for i in 1..128 {
            let x = self.lo + w * i as f64 / 128.0;
            if !(self.pdf(x) > 0.0) {
                return Err(DistError::NonPositiveDensity {
                    detail: format!("pdf({x}) = {} in the interior", self.pdf(x)),
                });
            }
        }
        let mass = adaptive_simpson(|x| self.pdf(x), self.lo, self.hi, 1e-9);
        if (mass - 1.0).abs() > 1e-6 {
            return Err(DistError::NotNormalized { integral: mass });
        }
        let mut prev = -1.0;
        for i in 0..=64 {
            let u = i as f64 / 64.0;
            let q = self.quantile(u);
            let back = self.cdf(q);
            if (back - u).abs() > 1e-9 && q > self.lo && q < self.hi {
                return Err(DistError::Validation(format!(
                    "cdf(quantile({u})) = {back}, off by {}",
                    back - u
                )));
            }
            let c = self.cdf(self.lo + w * u);
            if c < prev {
                return Err(DistError::Validation("cdf not monotone".into()));
            }
            prev = c;
        }
        Ok(())
    }
}

#[inline]
fn cell_index(xs: &[f64], x: f64) -> usize {
    match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(xs.len() - 2),
        Err(i) => i.saturating_sub(1).min(xs.len() - 2),
    }
}
