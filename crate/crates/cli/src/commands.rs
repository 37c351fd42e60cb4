use std::fmt::Write as _;
use std::path::Path;

use oscid_core::ident::{noise_balance_report, write_balance_csv, write_lhs_csv, BalanceRow, FitReport, Method};
use oscid_core::io::{load_time_series, save_time_series};
use oscid_core::signal::segment_series;
use oscid_core::{dominant_frequency, prepare, simulate_vdp, Theta, TimeSeries};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Axis, Mode, RunConfig};
use crate::error::{CliError, CliResult, ErrorJson};
use crate::output::{OutDir, SIDECAR};

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} workers: {e}")))
}

/// The record itself, or its segments when a window is configured.
fn pieces(ts: TimeSeries, cfg: &RunConfig) -> CliResult<Vec<TimeSeries>> {
    match cfg.segment {
        Some(w) => Ok(segment_series(&ts, w)?),
        None => Ok(vec![ts]),
    }
}

fn fit(ts: &TimeSeries, method: Method, cfg: &RunConfig) -> CliResult<FitReport> {
    let prep = prepare(ts, &cfg.identify)?;
    Ok(oscid_core::identify(&prep, method, &cfg.identify)?)
}

fn trajectory_csv(report: &FitReport) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    report.write_trajectory_csv(&mut buf)?;
    Ok(buf)
}

/// Empty for missing values so spreadsheets read a blank, not `NaN`.
fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

pub fn simulate(cfg: &RunConfig, force: bool) -> CliResult<()> {
    let model = cfg.model.model()?;
    let out = OutDir::new(&cfg.output_dir, force)?;
    let mut names: Vec<String> = cfg.seeds.iter().map(|s| format!("seed_{s}.csv")).collect();
    names.push(SIDECAR.into());
    out.claim(&names)?;
    let records: Vec<CliResult<TimeSeries>> = pool(cfg.jobs)?.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&s| Ok(simulate_vdp(&model, &cfg.sim.with_seed(s))?))
            .collect()
    });
    for (name, ts) in names.iter().zip(records) {
        save_time_series(&ts?, &out.path(name))?;
    }
    out.sidecar(Mode::Simulate, None, cfg)?;
    println!("wrote {} records to {}", cfg.seeds.len(), cfg.output_dir.display());
    Ok(())
}

pub fn identify(cfg: &RunConfig, input: &Path, force: bool) -> CliResult<()> {
    let segments = pieces(load_time_series(input)?, cfg)?;
    let out = OutDir::new(&cfg.output_dir, force)?;
    let single = cfg.segment.is_none();
    let names: Vec<String> = if single {
        vec!["fit.json".into(), "trajectory.csv".into(), "error.json".into()]
    } else {
        let mut n: Vec<String> = (0..segments.len())
            .flat_map(|k| [format!("fit_{k:03}.json"), format!("trajectory_{k:03}.csv"), format!("error_{k:03}.json")])
            .collect();
        n.push("segments.csv".into());
        n
    };
    out.claim(&[&names[..], &[SIDECAR.to_owned()]].concat())?;

    let fits: Vec<CliResult<FitReport>> =
        pool(cfg.jobs)?.install(|| segments.par_iter().map(|s| fit(s, cfg.method, cfg)).collect());
    let mut first_err = None;
    let mut table = String::from("segment,t_start,eps_hat,alpha_hat,d_hat,cost,residual_evals,converged,error\n");
    for (k, (seg, result)) in segments.iter().zip(fits).enumerate() {
        let suffix = if single { String::new() } else { format!("_{k:03}") };
        match result {
            Ok(r) => {
                out.write_json(&format!("fit{suffix}.json"), &r)?;
                out.write(&format!("trajectory{suffix}.csv"), &trajectory_csv(&r)?)?;
                let t = r.theta_hat;
                let _ = writeln!(
                    table,
                    "{k},{},{},{},{},{},{},{},",
                    seg.t0,
                    t.epsilon,
                    t.alpha,
                    t.d,
                    num(r.cost_min),
                    r.residual_evals,
                    r.converged
                );
                println!("segment {k}: {} via {} ({} evaluations, converged {})", t, r.method, r.residual_evals, r.converged);
            }
            Err(e) => {
                out.write_json(&format!("error{suffix}.json"), &serde_json::json!({ "error": e.to_json() }))?;
                let _ = writeln!(table, "{k},{},,,,,,false,{}", seg.t0, e.kind());
                eprintln!("segment {k}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if !single {
        out.write("segments.csv", table.as_bytes())?;
    }
    out.sidecar(Mode::Identify, Some(input), cfg)?;
    first_err.map_or(Ok(()), Err)
}

struct SweepRow {
    value: f64,
    method: Method,
    seed: u64,
    theta: Option<Theta>,
    cost: f64,
    evals: usize,
    converged: bool,
}

const SWEEP_METHODS: [Method; 3] = [Method::Extrap, Method::Nm, Method::Prop];

fn sweep_cell(cfg: &RunConfig, value: f64, seed: u64) -> Vec<SweepRow> {
    let mut block = cfg.model.clone();
    match cfg.sweep.axis {
        Axis::Epsilon => block.epsilon = value,
        Axis::Alpha => block.alpha = value,
    }
    let failed = |method| SweepRow { value, method, seed, theta: None, cost: f64::NAN, evals: 0, converged: false };
    let prep = block
        .model()
        .and_then(|m| simulate_vdp(&m, &cfg.sim.with_seed(seed)))
        .and_then(|ts| prepare(&ts, &cfg.identify));
    let prep = match prep {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{:?} = {value}, seed {seed}: {e}", cfg.sweep.axis);
            return SWEEP_METHODS.iter().map(|&m| failed(m)).collect();
        }
    };
    SWEEP_METHODS
        .iter()
        .map(|&m| match oscid_core::identify(&prep, m, &cfg.identify) {
            Ok(r) => SweepRow {
                value,
                method: m,
                seed,
                theta: Some(r.theta_hat),
                cost: r.cost_min,
                evals: r.residual_evals,
                converged: r.converged,
            },
            Err(e) => {
                eprintln!("{:?} = {value}, seed {seed}, {m}: {e}", cfg.sweep.axis);
                failed(m)
            }
        })
        .collect()
}

pub fn sweep(cfg: &RunConfig, force: bool) -> CliResult<()> {
    let values = cfg.sweep.values()?;
    let out = OutDir::new(&cfg.output_dir, force)?;
    out.claim(&["sweep.csv", SIDECAR])?;
    let cells: Vec<(f64, u64)> = values.iter().flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s))).collect();
    let rows: Vec<SweepRow> = pool(cfg.jobs)?
        .install(|| cells.par_iter().map(|&(v, s)| sweep_cell(cfg, v, s)).collect::<Vec<_>>())
        .into_iter()
        .flatten()
        .collect();

    let mut csv = String::from("axis_value,method,seed,eps_hat,alpha_hat,d_hat,cost,residual_evals,converged\n");
    for r in &rows {
        let t = r.theta.map_or([f64::NAN; 3], Theta::to_array);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{}",
            r.value,
            r.method,
            r.seed,
            num(t[0]),
            num(t[1]),
            num(t[2]),
            num(r.cost),
            r.evals,
            r.converged
        );
    }
    // means over converged seeds; `converged` then counts them
    if cfg.seeds.len() > 1 {
        for &v in &values {
            for m in SWEEP_METHODS {
                let ok: Vec<&SweepRow> =
                    rows.iter().filter(|r| r.value == v && r.method == m && r.converged && r.theta.is_some()).collect();
                let n = ok.len() as f64;
                let mean = |f: &dyn Fn(&SweepRow) -> f64| if ok.is_empty() { f64::NAN } else { ok.iter().map(|r| f(r)).sum::<f64>() / n };
                let _ = writeln!(
                    csv,
                    "{v},{m},mean,{},{},{},{},{},{}/{}",
                    num(mean(&|r| r.theta.unwrap().epsilon)),
                    num(mean(&|r| r.theta.unwrap().alpha)),
                    num(mean(&|r| r.theta.unwrap().d)),
                    num(mean(&|r| r.cost)),
                    num(mean(&|r| r.evals as f64)),
                    ok.len(),
                    cfg.seeds.len()
                );
            }
        }
    }
    out.write("sweep.csv", csv.as_bytes())?;
    out.sidecar(Mode::Sweep, None, cfg)?;
    println!("wrote {} rows for {} axis values to {}", rows.len(), values.len(), out.path("sweep.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct MethodResult {
    method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<FitReport>,
    /// `(cumulative residual evaluations, E - E_min)` per accepted iterate.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    energy_curve: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorJson>,
}

#[derive(Serialize)]
struct Comparison {
    initial: Theta,
    omega: f64,
    /// Smallest converged cost over both methods.
    e_min: Option<f64>,
    /// Proposed over Nelder-Mead residual evaluations, when both converged.
    evaluation_ratio: Option<f64>,
    methods: Vec<MethodResult>,
}

pub fn compare(cfg: &RunConfig, input: &Path, force: bool) -> CliResult<()> {
    let ts = load_time_series(input)?;
    let out = OutDir::new(&cfg.output_dir, force)?;
    out.claim(&["compare.json", "trajectory_prop.csv", "trajectory_nm.csv", SIDECAR])?;
    let prep = prepare(&ts, &cfg.identify)?;
    let results: Vec<(Method, CliResult<FitReport>)> = [Method::Prop, Method::Nm]
        .into_iter()
        .map(|m| (m, oscid_core::identify(&prep, m, &cfg.identify).map_err(CliError::from)))
        .collect();

    let converged: Vec<&FitReport> = results.iter().filter_map(|(_, r)| r.as_ref().ok()).filter(|r| r.converged).collect();
    let e_min = converged.iter().map(|r| r.cost_min).reduce(f64::min);
    let evaluation_ratio = match &results[..] {
        [(_, Ok(p)), (_, Ok(n))] if p.converged && n.converged => Some(p.residual_evals as f64 / n.residual_evals as f64),
        _ => None,
    };
    let mut first_err = None;
    let mut methods = Vec::new();
    for (m, r) in results {
        match r {
            Ok(rep) => {
                out.write(&format!("trajectory_{m}.csv"), &trajectory_csv(&rep)?)?;
                let floor = e_min.unwrap_or(rep.cost_min);
                let energy_curve = rep.trajectory.iter().map(|p| (p.residual_evals, p.cost - floor)).collect();
                println!("{m}: {} in {} evaluations, converged {}", rep.theta_hat, rep.residual_evals, rep.converged);
                methods.push(MethodResult { method: m, report: Some(rep), energy_curve, error: None });
            }
            Err(e) => {
                eprintln!("{m}: {e}");
                methods.push(MethodResult { method: m, report: None, energy_curve: Vec::new(), error: Some(e.to_json()) });
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(q) = evaluation_ratio {
        println!("evaluation ratio prop/nm = {q:.3}");
    }
    out.write_json("compare.json", &Comparison { initial: prep.initial, omega: prep.omega, e_min, evaluation_ratio, methods })?;
    out.sidecar(Mode::Compare, Some(input), cfg)?;
    first_err.map_or(Ok(()), Err)
}

pub fn report(cfg: &RunConfig, input: &Path, force: bool) -> CliResult<()> {
    let ts = load_time_series(input)?;
    let single = cfg.segment.is_none();
    let segments = pieces(ts, cfg)?;
    let out = OutDir::new(&cfg.output_dir, force)?;
    let names: &[&str] = if single { &["balance.csv", "lhs.csv", SIDECAR] } else { &["balance.csv", SIDECAR] };
    out.claim(names)?;

    let rows: Vec<CliResult<BalanceRow>> = pool(cfg.jobs)?.install(|| {
        segments
            .par_iter()
            .enumerate()
            .map(|(k, seg)| {
                let theta = match cfg.report.theta {
                    Some(t) => t,
                    None => fit(seg, cfg.method, cfg)?.theta_hat,
                };
                let omega = match cfg.identify.omega {
                    Some(w) => w,
                    None => dominant_frequency(seg)?,
                };
                let balance = noise_balance_report(seg, &theta, omega)?;
                Ok(BalanceRow { segment: k, t_start: seg.t0, theta, balance })
            })
            .collect()
    });
    let mut first_err = None;
    let mut good = Vec::new();
    for (k, r) in rows.into_iter().enumerate() {
        match r {
            Ok(row) => good.push(row),
            Err(e) => {
                eprintln!("segment {k}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let mut buf = Vec::new();
    write_balance_csv(&good, &mut buf)?;
    out.write("balance.csv", &buf)?;
    if single {
        if let Some(row) = good.first() {
            let omega = match cfg.identify.omega {
                Some(w) => w,
                None => dominant_frequency(&segments[0])?,
            };
            let mut buf = Vec::new();
            write_lhs_csv(&segments[0], &row.theta, omega, &mut buf)?;
            out.write("lhs.csv", &buf)?;
        }
    }
    for row in &good {
        println!("segment {}: ratio {:.4} at {}", row.segment, row.balance.ratio, row.theta);
    }
    out.sidecar(Mode::Report, Some(input), cfg)?;
    first_err.map_or(Ok(()), Err)
}
