//! Extensive-form playouts of the collusion game and seeded Monte Carlo.
//!
//! A draw is played as: bidder 1 proposes (b(v₁), r(v₁)); bidder 2 takes
//! the bribe iff v₂ ≤ b+r+R and the request otherwise (under equilibrium
//! strategies the proposal is never rejected); any sale clears at the
//! reserve. Draws are indexed streams of a counter-based generator and
//! block sums are merged in fixed order, so a summary is byte-identical
//! for any worker count.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::Distribution;
use crate::equilibrium::BribeSchedule;
use crate::rng::CounterRng;

/// How bidder 1 behaves in the playout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// solved proposal, opponent best-responds per the equilibrium
    Equilibrium,
    /// no proposal is made; both bid truthfully in the auction
    NoCollusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    AcceptedBribe,
    AcceptedRequest,
    Rejected,
}

/// One playout. `transfer` is signed bidder1 → bidder2 money; `price`
/// is what the winner pays the seller (0 when there is no sale).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimOutcome {
    pub v1: f64,
    pub v2: f64,
    pub bribe: f64,
    pub request: f64,
    pub action: Action,
    pub winner: Option<u8>,
    pub price: f64,
    pub transfer: f64,
    pub payoff1: f64,
    pub payoff2: f64,
    /// a transfer changed hands but the winner declined to pay the
    /// reserve, so no sale happened (off-path corner under a reserve)
    pub no_sale_with_transfer: bool,
}

impl SimOutcome {
    /// Realized social value of the allocation.
    pub fn social_value(&self) -> f64 {
        match self.winner {
            Some(1) => self.v1,
            Some(2) => self.v2,
            _ => 0.0,
        }
    }
}

/// Everything needed to play draws.
pub struct GameSetup {
    pub schedule: BribeSchedule,
    pub d1: Distribution,
    pub strategy: Strategy,
}

/// Play a single profile of values.
///
/// Payoff bookkeeping is arranged so the accounting identity
/// payoff1 + payoff2 + price = social value holds exactly in floating
/// point: one side's payoff is a verbatim transfer copy and the other is
/// defined as (social value − price) − that copy.
pub fn play_once(v1: f64, v2: f64, s: &BribeSchedule, strategy: Strategy) -> SimOutcome {
    let reserve = s.reserve();
    if strategy == Strategy::NoCollusion {
        return auction_outcome(v1, v2, reserve, 0.0, 0.0);
    }
    let b = s.bribe_clamped(v1);
    let r = s.request(v1);
    let threshold = s.threshold(v1);
    if v2 <= threshold {
        // bribe accepted: bidder 2 bids zero, bidder 1 buys iff worth it
        let sale = v1 >= reserve;
        let (winner, price) = if sale { (Some(1), reserve) } else { (None, 0.0) };
        let sv = if sale { v1 } else { 0.0 };
        let payoff2 = b;
        let payoff1 = (sv - price) - payoff2;
        SimOutcome {
            v1,
            v2,
            bribe: b,
            request: r,
            action: Action::AcceptedBribe,
            winner,
            price,
            transfer: b,
            payoff1,
            payoff2,
            no_sale_with_transfer: !sale && b != 0.0,
        }
    } else {
        // request accepted: bidder 1 bids zero, bidder 2 buys iff worth it
        let sale = v2 >= reserve;
        let (winner, price) = if sale { (Some(2), reserve) } else { (None, 0.0) };
        let sv = if sale { v2 } else { 0.0 };
        let payoff1 = r;
        let payoff2 = (sv - price) - payoff1;
        SimOutcome {
            v1,
            v2,
            bribe: b,
            request: r,
            action: Action::AcceptedRequest,
            winner,
            price,
            transfer: -r,
            payoff1,
            payoff2,
            no_sale_with_transfer: !sale && r != 0.0,
        }
    }
}

/// Truthful second-price auction with a reserve.
fn auction_outcome(v1: f64, v2: f64, reserve: f64, bribe: f64, request: f64) -> SimOutcome {
    let high = v1.max(v2);
    let low = v1.min(v2);
    let (winner, price) = if high < reserve {
        (None, 0.0)
    } else {
        let w = if v1 >= v2 { 1u8 } else { 2u8 };
        (Some(w), low.max(reserve))
    };
    let sv = match winner {
        Some(1) => v1,
        Some(2) => v2,
        _ => 0.0,
    };
    let (payoff1, payoff2) = match winner {
        Some(1) => ((sv - price) - 0.0, 0.0),
        Some(2) => (0.0, (sv - price) - 0.0),
        _ => (0.0, 0.0),
    };
    SimOutcome {
        v1,
        v2,
        bribe,
        request,
        action: Action::Rejected,
        winner,
        price,
        transfer: 0.0,
        payoff1,
        payoff2,
        no_sale_with_transfer: false,
    }
}

/// Summary statistics of a Monte Carlo run. Standard errors are sample
/// standard deviation over √n.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SimSummary {
    pub n: u64,
    pub seed: u64,
    pub reserve: f64,
    pub strategy: Strategy,
    pub collusion_rate: f64,
    pub mean_payoff1: f64,
    pub se_payoff1: f64,
    pub mean_payoff2: f64,
    pub se_payoff2: f64,
    pub mean_revenue: f64,
    pub se_revenue: f64,
    pub efficiency_loss: f64,
    pub se_efficiency_loss: f64,
    pub sale_frequency: f64,
    pub se_sale_frequency: f64,
    /// common sale price when every sale cleared at the same price,
    /// otherwise total revenue over sales; absent without sales
    pub revenue_per_sale: Option<f64>,
    pub no_sale_with_transfer_count: u64,
}

#[derive(Clone, Copy, Default)]
struct Acc {
    payoff1: f64,
    payoff1_sq: f64,
    payoff2: f64,
    payoff2_sq: f64,
    revenue: f64,
    revenue_sq: f64,
    eff_loss: f64,
    eff_loss_sq: f64,
    sales: u64,
    collusions: u64,
    flagged: u64,
    sale_price_min: f64,
    sale_price_max: f64,
}

impl Acc {
    fn new() -> Self {
        Self { sale_price_min: f64::INFINITY, sale_price_max: f64::NEG_INFINITY, ..Default::default() }
    }

    fn add(&mut self, o: &SimOutcome, reserve: f64) {
        self.payoff1 += o.payoff1;
        self.payoff1_sq += o.payoff1 * o.payoff1;
        self.payoff2 += o.payoff2;
        self.payoff2_sq += o.payoff2 * o.payoff2;
        self.revenue += o.price;
        self.revenue_sq += o.price * o.price;
        let efficient = {
            let high = o.v1.max(o.v2);
            if high >= reserve {
                high
            } else {
                0.0
            }
        };
        let loss = efficient - o.social_value();
        self.eff_loss += loss;
        self.eff_loss_sq += loss * loss;
        if o.winner.is_some() {
            self.sales += 1;
            self.sale_price_min = self.sale_price_min.min(o.price);
            self.sale_price_max = self.sale_price_max.max(o.price);
        }
        if o.action != Action::Rejected {
            self.collusions += 1;
        }
        if o.no_sale_with_transfer {
            self.flagged += 1;
        }
    }

    fn merge(&mut self, other: &Acc) {
        self.payoff1 += other.payoff1;
        self.payoff1_sq += other.payoff1_sq;
        self.payoff2 += other.payoff2;
        self.payoff2_sq += other.payoff2_sq;
        self.revenue += other.revenue;
        self.revenue_sq += other.revenue_sq;
        self.eff_loss += other.eff_loss;
        self.eff_loss_sq += other.eff_loss_sq;
        self.sales += other.sales;
        self.collusions += other.collusions;
        self.flagged += other.flagged;
        self.sale_price_min = self.sale_price_min.min(other.sale_price_min);
        self.sale_price_max = self.sale_price_max.max(other.sale_price_max);
    }
}

fn se(sum: f64, sum_sq: f64, n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    (var / nf).sqrt()
}

const BLOCK: u64 = 4096;

/// Run `n` seeded draws. Blocks of draws are processed (possibly in
/// parallel) and merged in index order, so identical `(setup, n, seed)`
/// give a byte-identical summary for 1, 4 or 64 workers.
pub fn run_monte_carlo(setup: &GameSetup, n: u64, seed: u64, threads: usize) -> SimSummary {
    assert!(n >= 1, "need at least one draw");
    let rng = CounterRng::new(seed);
    let blocks: u64 = n.div_ceil(BLOCK);
    let play_block = |block: u64| {
        let mut acc = Acc::new();
        let start = block * BLOCK;
        let end = (start + BLOCK).min(n);
        for i in start..end {
            let (u1, u2) = rng.draw_pair(i);
            let v1 = setup.d1.quantile(u1);
            let v2 = setup.schedule.dist2().quantile(u2);
            let o = play_once(v1, v2, &setup.schedule, setup.strategy);
            acc.add(&o, setup.schedule.reserve());
        }
        acc
    };

    let partials: Vec<Acc> = if threads > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool")
            .install(|| (0..blocks).into_par_iter().map(play_block).collect())
    } else {
        (0..blocks).map(play_block).collect()
    };

    let mut total = Acc::new();
    for p in &partials {
        total.merge(p);
    }

    let nf = n as f64;
    let sale_freq = total.sales as f64 / nf;
    SimSummary {
        n,
        seed,
        reserve: setup.schedule.reserve(),
        strategy: setup.strategy,
        collusion_rate: total.collusions as f64 / nf,
        mean_payoff1: total.payoff1 / nf,
        se_payoff1: se(total.payoff1, total.payoff1_sq, n),
        mean_payoff2: total.payoff2 / nf,
        se_payoff2: se(total.payoff2, total.payoff2_sq, n),
        mean_revenue: total.revenue / nf,
        se_revenue: se(total.revenue, total.revenue_sq, n),
        efficiency_loss: total.eff_loss / nf,
        se_efficiency_loss: se(total.eff_loss, total.eff_loss_sq, n),
        sale_frequency: sale_freq,
        se_sale_frequency: (sale_freq * (1.0 - sale_freq) / nf).sqrt(),
        revenue_per_sale: if total.sales == 0 {
            None
        } else if total.sale_price_min == total.sale_price_max {
            Some(total.sale_price_min)
        } else {
            Some(total.revenue / total.sales as f64)
        },
        no_sale_with_transfer_count: total.flagged,
    }
}

/// Reserve-price variant; identical machinery, the reserve lives in the
/// schedule. With R = 0 the output is bit-identical to `run_monte_carlo`.
pub fn run_reserve_monte_carlo(setup: &GameSetup, n: u64, seed: u64, threads: usize) -> SimSummary {
    run_monte_carlo(setup, n, seed, threads)
}

/// Regenerate the first `take` outcomes of a run, for per-draw export.
pub fn sample_outcomes(setup: &GameSetup, n: u64, seed: u64, take: usize) -> Vec<SimOutcome> {
    let rng = CounterRng::new(seed);
    (0..n.min(take as u64))
        .map(|i| {
            let (u1, u2) = rng.draw_pair(i);
            play_once(
                setup.d1.quantile(u1),
                setup.schedule.dist2().quantile(u2),
                &setup.schedule,
                setup.strategy,
            )
        })
        .collect()
}
