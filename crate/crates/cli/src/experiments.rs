use oma_va_core::bs_engine::{bs_solve_bellman, solve_bellman, BellmanSolution, BsParams};
use oma_va_core::decomposition::{
    attribution_report, estimate_v1_alpha, theorem1_quadrature, verify_theorem1, verify_theorem2, AttributionRow,
    DecompositionReport,
};
use oma_va_core::hedging::{hedge_study, implied_variances, HedgeRun, PNL_BINS};
use oma_va_core::market::Market;
use oma_va_core::{ContractValuation, Estimate, Histogram, PathSet};
use serde::Serialize;
use serde_json::json;

use crate::config::{Experiment, ModelConfig, RunConfig};
use crate::error::{CliError, Context};
use crate::output::{histogram_rows, num, OutputDir, Table};

pub fn run(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    match config.experiment {
        Experiment::Price => price(config, out),
        Experiment::Hedge => hedge(config, out),
        Experiment::Figures => figures(config, out),
        Experiment::Decompose2p => decompose2p(config, out),
        Experiment::DecomposeMp => decompose_mp(config, out),
        Experiment::Attribution => attribution(config, out),
    }
}

fn mark(config: &RunConfig, v: f64) -> Result<BsParams, CliError> {
    BsParams::new(v, config.model.rate()).map_err(|e| CliError::config("bs_mark_v", e))
}

const VALUE_FUNCTION_HEADER: &str = "variance,time,x,value,a_star";

fn value_rows(table: &mut Table, solution: &BellmanSolution, v: f64, dates: impl Iterator<Item = usize>) {
    let big_n = solution.spec().n_periods;
    for n in dates {
        let grid = solution.value_grid(n);
        for (j, (&x, &value)) in grid.nodes().iter().zip(grid.values()).enumerate() {
            let a = if n < big_n { solution.policy(n)[j] } else { 0.0 };
            table.row(&[num(v), num(grid.time()), num(x), num(value), num(a)]);
        }
    }
}

fn price(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = &config.contract;
    let params = mark(config, config.bs_mark_v)?;
    let solution = bs_solve_bellman(spec, &params, &config.grid()).during("bs_solve_bellman")?;
    let bs_price = solution.value_at(0, spec.x0).during("bs_solve_bellman")?;
    let mut table = Table::new(VALUE_FUNCTION_HEADER);
    value_rows(&mut table, &solution, config.bs_mark_v, 0..=spec.n_periods);
    out.table("value_function.csv", &table)?;
    let true_price = match &config.model {
        ModelConfig::Bs { v, r } => {
            let s = bs_solve_bellman(spec, &BsParams::new(*v, *r).during("solve_bellman")?, &config.grid())
                .during("solve_bellman")?;
            Some(s.value_at(0, spec.x0).during("solve_bellman")?)
        }
        ModelConfig::Detvol { .. } => {
            let m = config.model.detvol(spec).expect("detvol");
            let w: Vec<f64> = m.period_variances(spec.n_periods);
            let s = solve_bellman(spec, &w, m.rate, &config.grid()).during("solve_bellman")?;
            Some(s.value_at(0, spec.x0).during("solve_bellman")?)
        }
        ModelConfig::Heston(_) => None,
    };
    out.json(
        "price.json",
        &json!({ "bs_price": bs_price, "bs_mark_v": config.bs_mark_v, "true_price": true_price }),
    )
}

fn simulate(config: &RunConfig, market: &Market) -> Result<PathSet, CliError> {
    let spec = &config.contract;
    market
        .simulate(spec.x0, spec.date(1), config.n_steps(), config.n_paths(), config.seed)
        .during("simulate")
}

fn valuations(config: &RunConfig) -> Result<Vec<ContractValuation>, CliError> {
    config
        .v_list()
        .iter()
        .map(|&v| ContractValuation::new(&config.contract, &mark(config, v)?, &config.grid()).during("bs_solve_bellman"))
        .collect()
}

fn write_hedge_runs(runs: &[HedgeRun], out: &mut OutputDir, with_ledger: bool) -> Result<(), CliError> {
    let mut summary = Table::new("v,stride,n_paths,mean,std,fraction_positive,mean_slippage,mean_leakage");
    let mut hist = Table::new("v,stride,bin,lower,upper,count");
    let mut paths = Table::new("v,stride,path,x1,xi1,slippage,leakage,marked_pnl,final_pnl");
    let mut ledger = Table::new("v,stride,path,step,time,asset,hedge_value,delta,marked_pnl");
    for run in runs {
        let s = &run.summary;
        summary.row(&[
            num(s.v),
            s.stride.to_string(),
            s.n_paths.to_string(),
            num(s.mean),
            num(s.std),
            num(s.fraction_positive),
            num(s.mean_slippage),
            num(s.mean_leakage),
        ]);
        histogram_rows(&mut hist, &[num(s.v), s.stride.to_string()], &s.histogram);
        for (m, l) in run.ledgers.iter().enumerate() {
            let last = l.steps.last().expect("ledger has steps");
            paths.row(&[
                num(s.v),
                s.stride.to_string(),
                m.to_string(),
                num(last.asset),
                num(l.xi1),
                num(l.slippage),
                num(l.leakage),
                num(l.marked_final()),
                num(l.final_pnl),
            ]);
            if with_ledger {
                for (i, st) in l.steps.iter().enumerate() {
                    ledger.row(&[
                        num(s.v),
                        s.stride.to_string(),
                        m.to_string(),
                        i.to_string(),
                        num(st.time),
                        num(st.asset),
                        num(st.hedge_value),
                        num(st.delta),
                        num(st.marked_pnl),
                    ]);
                }
            }
        }
    }
    out.table("hedge_summary.csv", &summary)?;
    out.table("pnl_hist.csv", &hist)?;
    out.table("hedge_paths.csv", &paths)?;
    if with_ledger {
        out.table("hedge_ledger.csv", &ledger)?;
    }
    Ok(())
}

fn hedge(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let market = config.model.market(&config.contract)?;
    let paths = simulate(config, &market)?;
    let vals = valuations(config)?;
    let runs = hedge_study(&paths, &vals, &config.strides(), &market).during("hedge_study")?;
    write_hedge_runs(&runs, out, true)
}

fn figures(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = &config.contract;
    let market = config.model.market(spec)?;
    let paths = simulate(config, &market)?;
    let base = ContractValuation::new(spec, &mark(config, config.bs_mark_v)?, &config.grid()).during("bs_solve_bellman")?;
    let xi = implied_variances(&paths, &base, &market).during("implied_variance")?;
    let x1: Vec<f64> = paths.paths().map(|p| p.terminal()).collect();
    let mut terminal = Table::new("path,x1,alpha1,xi1");
    for (m, p) in paths.paths().enumerate() {
        let alpha = p.terminal_variance().map(num).unwrap_or_default();
        terminal.row(&[m.to_string(), num(x1[m]), alpha, num(xi[m])]);
    }
    out.table("terminal_states.csv", &terminal)?;
    for (name, samples) in [("xi1_hist.csv", &xi), ("x1_hist.csv", &x1)] {
        let mut t = Table::new("bin,lower,upper,count");
        histogram_rows(&mut t, &[], &Histogram::new(samples, PNL_BINS));
        out.table(name, &t)?;
    }
    let runs = hedge_study(&paths, &valuations(config)?, &config.strides(), &market).during("hedge_study")?;
    write_hedge_runs(&runs, out, false)?;
    let mut vf = Table::new(VALUE_FUNCTION_HEADER);
    for &v in &config.value_function_v() {
        let s = bs_solve_bellman(spec, &mark(config, v)?, &config.grid()).during("bs_solve_bellman")?;
        value_rows(&mut vf, &s, v, std::iter::once(1));
    }
    out.table("value_function.csv", &vf)
}

#[derive(Serialize)]
struct TwoPeriodOutput {
    report: DecompositionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    va_realized_alpha: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature: Option<DecompositionReport>,
}

fn decomposition_csv(out: &mut OutputDir, report: &DecompositionReport) -> Result<(), CliError> {
    let mut t = Table::new(DecompositionReport::CSV_HEADER);
    t.line(&report.csv_row());
    out.table("decomposition.csv", &t)
}

fn decompose2p(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = &config.contract;
    let market = config.model.market(spec)?;
    let paths = simulate(config, &market)?;
    let val = ContractValuation::new(spec, &mark(config, config.bs_mark_v)?, &config.grid()).during("bs_solve_bellman")?;
    let report = verify_theorem1(&paths, &val, &market).during("verify_theorem1")?;
    let va_realized_alpha = if paths.has_variance() {
        Some(estimate_v1_alpha(&paths, &val).during("estimate_v1")?)
    } else {
        None
    };
    let quadrature = match config.model {
        ModelConfig::Bs { v, r } => {
            Some(theorem1_quadrature(spec, v, config.bs_mark_v, r, &config.grid()).during("theorem1_quadrature")?)
        }
        _ => None,
    };
    decomposition_csv(out, &report)?;
    out.json(
        "decomposition.json",
        &TwoPeriodOutput {
            report,
            va_realized_alpha,
            quadrature,
        },
    )
}

fn decompose_mp(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = &config.contract;
    let model = config.model.detvol(spec).expect("validated detvol");
    let d = verify_theorem2(&model, spec, config.bs_mark_v, &config.grid()).during("verify_theorem2")?;
    decomposition_csv(out, &d.report)?;
    out.json("decomposition.json", &d)
}

fn attribution(config: &RunConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let spec = &config.contract;
    let model = config.model.detvol(spec).expect("validated detvol");
    let paths = Market::DetVol(model.clone())
        .simulate(spec.x0, spec.date(1), config.n_steps(), 1, config.seed)
        .during("simulate")?;
    let report = attribution_report(&model, spec, config.bs_mark_v, &config.grid(), &paths.path(0))
        .during("attribution_report")?;
    let mut t = Table::new(AttributionRow::CSV_HEADER);
    for r in &report.rows {
        t.line(&r.csv_row());
    }
    out.table("attribution.csv", &t)?;
    out.json(
        "attribution.json",
        &json!({
            "start_value": report.start_value,
            "end_value": report.end_value,
            "telescoping_error": report.telescoping_error,
            "max_abs_row": report.max_abs_row,
            "n_steps": report.rows.len(),
        }),
    )
}
