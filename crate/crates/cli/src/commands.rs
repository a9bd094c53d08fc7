//! The solve / verify / compare / simulate / sweep workflows.

use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use collusion_lab::baseline_es::{dominance_compare, solve_es};
use collusion_lab::distributions::Distribution;
use collusion_lab::equilibrium::{
    solve_general_family, solve_with_reserve, AffineRequest, BribeSchedule, SolveOptions,
};
use collusion_lab::export;
use collusion_lab::simulation::{
    run_monte_carlo, sample_outcomes, GameSetup, SimSummary, Strategy,
};
use collusion_lab::verification::{d1_audit, ic_audit, prop4_audit, D1AuditOptions, IcAuditOptions};

use crate::config::LoadedConfig;
use crate::report::RunReport;

pub struct Workspace {
    pub loaded: LoadedConfig,
    pub d1: Distribution,
    pub d2: Distribution,
    pub out_dir: std::path::PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Workspace {
    pub fn prepare(
        loaded: LoadedConfig,
        out_override: Option<&Path>,
        seed_override: Option<u64>,
        threads_override: Option<usize>,
    ) -> Result<Self> {
        let d1 = collusion_lab::make_distribution(
            &loaded.config.dist1.resolve(&loaded.base_dir)?,
        )
        .context("dist1")?;
        let d2 = collusion_lab::make_distribution(
            &loaded.config.dist2.resolve(&loaded.base_dir)?,
        )
        .context("dist2")?;
        let out_dir = out_override
            .map(|p| p.to_path_buf())
            .unwrap_or_else(|| loaded.base_dir.join(&loaded.config.output.dir));
        std::fs::create_dir_all(&out_dir)
            .with_context(|| format!("creating output dir {}", out_dir.display()))?;
        let seed = seed_override.unwrap_or(loaded.config.game.seed);
        let threads = threads_override.unwrap_or(loaded.config.game.threads).max(1);
        Ok(Self { loaded, d1, d2, out_dir, seed, threads })
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            rtol: self.loaded.config.solver.rtol,
            atol: self.loaded.config.solver.atol,
            max_step: None,
            trivial_case: self.loaded.config.game.trivial_case,
        }
    }

    pub fn solve_schedule(&self) -> Result<BribeSchedule> {
        let cfg = &self.loaded.config;
        solve_with_reserve(&self.d1, &self.d2, cfg.game.reserve, &self.solve_options())
            .context("solving the bribing schedule")
    }

    fn report(&self, command: &str) -> RunReport {
        RunReport::new(command, &self.loaded.canonical, true)
    }
}

pub fn cmd_solve(ws: &Workspace) -> Result<RunReport> {
    let mut report = ws.report("solve");
    let schedule = ws.solve_schedule()?;
    let rows = ws.loaded.config.solver.export_nodes;
    report.write_artifact(&ws.out_dir, "schedule.csv", &export::schedule_csv(&schedule, rows))?;
    report.write_artifact(&ws.out_dir, "schedule.json", &export::schedule_json(&schedule)?)?;
    if let Some(c) = schedule.crossing() {
        report.note(format!("crossing type {} with flat bribe {}", c.v1, c.bribe));
    }
    report.finalize(&ws.out_dir)
}

pub fn cmd_verify(ws: &Workspace) -> Result<RunReport> {
    let mut report = ws.report("verify");
    let cfg = &ws.loaded.config;
    let mut schedule = ws.solve_schedule()?;
    if cfg.audits.negative_control_scale != 1.0 {
        schedule = schedule.with_scaled_bribes(cfg.audits.negative_control_scale);
        report.note(format!(
            "negative control: bribes scaled by {}",
            cfg.audits.negative_control_scale
        ));
    }

    if cfg.audits.ic {
        let rep = ic_audit(
            &schedule,
            &IcAuditOptions {
                type_grid: cfg.audits.ic_types,
                mimic_grid: cfg.audits.ic_mimics,
                tolerance: cfg.audits.tolerance,
                threads: ws.threads,
            },
        );
        report.record_pass("ic", rep.passed());
        report.write_artifact(&ws.out_dir, "ic_audit.json", &export::to_json_string(&rep)?)?;
    }

    if cfg.audits.d1 {
        if schedule.is_trivial() || schedule.reserve() > 0.0 {
            report.note(
                "d1 audit skipped: the off-path belief analysis applies to the \
                 non-trivial zero-reserve game",
            );
        } else {
            let rep = d1_audit(
                &schedule,
                &ws.d1,
                &D1AuditOptions {
                    proposal_grid_b: cfg.audits.d1_grid_b,
                    proposal_grid_r: cfg.audits.d1_grid_r,
                    cutoff_grid: cfg.audits.d1_cutoff_grid,
                    type_grid: cfg.audits.d1_type_grid,
                    tolerance: cfg.audits.tolerance,
                    threads: ws.threads,
                },
            );
            report.record_pass("d1", rep.passed());
            report.write_artifact(&ws.out_dir, "d1_audit.json", &export::to_json_string(&rep)?)?;
        }
    }

    if cfg.audits.prop4 {
        if schedule.is_trivial() || schedule.reserve() > 0.0 {
            report.note("family dominance audit skipped for trivial or reserve schedules");
        } else {
            let mut reps = Vec::new();
            for &(scale, offset) in &cfg.audits.gamma_families {
                let family = solve_general_family(
                    &ws.d2,
                    Arc::new(AffineRequest { scale, offset }),
                    (ws.d1.lo(), ws.d1.hi()),
                    &ws.solve_options(),
                )
                .with_context(|| format!("request family scale {scale} offset {offset}"))?;
                let rep = prop4_audit(&schedule, &family, 512, 1e-9)?;
                report.record_pass(&format!("prop4[{scale}v+{offset}]"), rep.passed());
                reps.push(rep);
            }
            report.write_artifact(
                &ws.out_dir,
                "prop4_audit.json",
                &export::to_json_string(&reps)?,
            )?;
        }
    }

    let report = report.finalize(&ws.out_dir)?;
    for (name, pass) in &report.passes {
        println!("{name}: {}", if *pass { "pass" } else { "FAIL" });
    }
    Ok(report)
}

pub fn cmd_compare(ws: &Workspace) -> Result<RunReport> {
    let mut report = ws.report("compare");
    let schedule = ws.solve_schedule()?;
    let es = solve_es(&ws.d1, &ws.d2, &ws.solve_options()).context("benchmark solve")?;
    if !es.exists() {
        // a finding, not a failure: report it and make no dominance claim
        let diag = es.diagnostic().unwrap_or("unknown").to_string();
        report.note(format!("benchmark equilibrium does not exist: {diag}; no dominance claim"));
        let summary = serde_json::json!({
            "benchmark_exists": false,
            "diagnostic": diag,
            "branch_stop_v1": es.branch_stop().0,
        });
        report.write_artifact(
            &ws.out_dir,
            "comparison_summary.json",
            &export::to_json_string(&summary)?,
        )?;
        println!("benchmark equilibrium does not exist; no dominance claim");
        return report.finalize(&ws.out_dir);
    }
    let rep = dominance_compare(&schedule, &es, ws.loaded.config.compare.grid)?;
    report.record_pass("dominance", !rep.violation);
    report.note(format!("min gap {} at v1 = {}", rep.min_gap, rep.argmin_v1));
    report.write_artifact(&ws.out_dir, "comparison.csv", &export::comparison_csv(&rep))?;
    let summary = serde_json::json!({
        "benchmark_exists": true,
        "v_hat": es.v_hat(),
        "b_hat": es.b_hat(),
        "admissible_v_hat": es.admissible_range(),
        "min_gap": rep.min_gap,
        "argmin_v1": rep.argmin_v1,
        "violation": rep.violation,
    });
    report.write_artifact(
        &ws.out_dir,
        "comparison_summary.json",
        &export::to_json_string(&summary)?,
    )?;
    let report = report.finalize(&ws.out_dir)?;
    println!(
        "dominance: {} (min gap {:.3e})",
        if rep.violation { "FAIL" } else { "pass" },
        rep.min_gap
    );
    Ok(report)
}

fn run_sim(ws: &Workspace, n: u64, seed: u64, reserve: f64) -> Result<(GameSetup, SimSummary)> {
    let cfg = &ws.loaded.config;
    let schedule = if cfg.game.trivial_case {
        ws.solve_schedule()?
    } else {
        solve_with_reserve(&ws.d1, &ws.d2, reserve, &ws.solve_options())?
    };
    let setup = GameSetup {
        schedule,
        d1: ws.d1.clone(),
        strategy: Strategy::from(cfg.game.strategy),
    };
    let summary = run_monte_carlo(&setup, n, seed, ws.threads);
    Ok((setup, summary))
}

pub fn cmd_simulate(ws: &Workspace, n_override: Option<u64>) -> Result<RunReport> {
    let mut report = ws.report("simulate");
    let cfg = &ws.loaded.config;
    let n = n_override.unwrap_or(cfg.sim.n);
    let (setup, summary) = run_sim(ws, n, ws.seed, cfg.game.reserve)?;
    report.write_artifact(&ws.out_dir, "summary.json", &export::to_json_string(&summary)?)?;
    if cfg.sim.write_draws {
        let take = cfg.sim.max_draw_rows.min(1_000_000);
        let outcomes = sample_outcomes(&setup, n, ws.seed, take);
        report.write_artifact(&ws.out_dir, "draws.csv", &export::draws_csv(&outcomes))?;
    }
    report.note(format!(
        "n = {n}, collusion rate {}, mean proposer payoff {}",
        summary.collusion_rate, summary.mean_payoff1
    ));
    report.finalize(&ws.out_dir)
}

pub fn cmd_sweep(ws: &Workspace) -> Result<RunReport> {
    let mut report = ws.report("sweep");
    let cfg = &ws.loaded.config;
    let mut csv = String::from(
        "parameter,value,n,seed,reserve,collusion_rate,mean_payoff1,se_payoff1,mean_payoff2,se_payoff2,\
         mean_revenue,se_revenue,efficiency_loss,se_efficiency_loss,sale_frequency,se_sale_frequency,\
         revenue_per_sale,no_sale_with_transfer_count\n",
    );
    for &value in &cfg.sweep.values {
        let (seed, reserve) = match cfg.sweep.parameter.as_str() {
            "seed" => (value as u64, cfg.game.reserve),
            _ => (ws.seed, value),
        };
        let (_, s) = run_sim(ws, cfg.sim.n, seed, reserve)
            .with_context(|| format!("sweep point {value}"))?;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            cfg.sweep.parameter,
            export::fmt_f64(value),
            s.n,
            s.seed,
            export::fmt_f64(s.reserve),
            export::fmt_f64(s.collusion_rate),
            export::fmt_f64(s.mean_payoff1),
            export::fmt_f64(s.se_payoff1),
            export::fmt_f64(s.mean_payoff2),
            export::fmt_f64(s.se_payoff2),
            export::fmt_f64(s.mean_revenue),
            export::fmt_f64(s.se_revenue),
            export::fmt_f64(s.efficiency_loss),
            export::fmt_f64(s.se_efficiency_loss),
            export::fmt_f64(s.sale_frequency),
            export::fmt_f64(s.se_sale_frequency),
            s.revenue_per_sale.map(export::fmt_f64).unwrap_or_else(|| "none".into()),
            s.no_sale_with_transfer_count,
        ));
    }
    report.write_artifact(&ws.out_dir, "sweep.csv", &csv)?;
    report.note(format!(
        "{} points over {}",
        cfg.sweep.values.len(),
        cfg.sweep.parameter
    ));
    report.finalize(&ws.out_dir)
}
