//! Plot-ready CSV and JSON serialization.
//!
//! Floating-point values are written with 17 significant digits so golden
//! files round-trip exactly.

use std::io::Write;

use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter, Serializer};

use crate::baseline_es::DominanceReport;
use crate::equilibrium::BribeSchedule;

/// 17-significant-digit scientific form; round-trips any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct SigDigits;

impl Formatter for SigDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        CompactFormatter.begin_array_value(writer, first)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> std::io::Result<()> {
        CompactFormatter.begin_object_key(writer, first)
    }
}

/// Serialize with full-precision floats.
pub fn to_json_string<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut out = Vec::with_capacity(256);
    let mut ser = Serializer::with_formatter(&mut out, SigDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf8"))
}

/// Schedule CSV on a uniform grid: `v1,b,r,pi`.
pub fn schedule_csv(s: &BribeSchedule, rows: usize) -> String {
    let mut out = String::from("v1,b,r,pi\n");
    for row in s.sample_grid(rows) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(row.v1),
            fmt_f64(row.b),
            fmt_f64(row.r),
            fmt_f64(row.pi)
        ));
    }
    out
}

/// Schedule JSON: solver nodes plus metadata.
pub fn schedule_json(s: &BribeSchedule) -> serde_json::Result<String> {
    #[derive(Serialize)]
    struct Meta<'a> {
        crossing_v1: Option<f64>,
        crossing_bribe: Option<f64>,
        reserve: f64,
        request_rule: &'a str,
        trivial: bool,
        rtol: f64,
        atol: f64,
        dist2: crate::distributions::DistributionSpec,
        nodes: Vec<(f64, f64)>,
    }
    let (rtol, atol) = s.tolerances();
    to_json_string(&Meta {
        crossing_v1: s.crossing().map(|c| c.v1),
        crossing_bribe: s.crossing().map(|c| c.bribe),
        reserve: s.reserve(),
        request_rule: s.request_rule(),
        trivial: s.is_trivial(),
        rtol,
        atol,
        dist2: s.dist2().spec(),
        nodes: s.nodes(),
    })
}

/// Dominance comparison CSV: `v1,B,Pi,pi,gap`.
pub fn comparison_csv(rep: &DominanceReport) -> String {
    let mut out = String::from("v1,B,Pi,pi,gap\n");
    for row in &rep.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(row.v1),
            fmt_f64(row.b_es),
            fmt_f64(row.pi_es),
            fmt_f64(row.pi),
            fmt_f64(row.gap)
        ));
    }
    out
}

/// Per-draw CSV: `v1,v2,action,winner,price,transfer`.
pub fn draws_csv(outcomes: &[crate::simulation::SimOutcome]) -> String {
    let mut out = String::from("v1,v2,action,winner,price,transfer\n");
    for o in outcomes {
        let action = match o.action {
            crate::simulation::Action::AcceptedBribe => "accepted-bribe",
            crate::simulation::Action::AcceptedRequest => "accepted-request",
            crate::simulation::Action::Rejected => "rejected",
        };
        let winner = o.winner.map(|w| w.to_string()).unwrap_or_else(|| "none".into());
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(o.v1),
            fmt_f64(o.v2),
            action,
            winner,
            fmt_f64(o.price),
            fmt_f64(o.transfer)
        ));
    }
    out
}
