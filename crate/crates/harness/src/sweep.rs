//! Grid enumeration, parallel execution and CSV output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anm_modal::AnmError;

use crate::config::ExperimentConfig;
use crate::trial::{child_seed, run_trial, GridPoint, ResultRow};
use crate::HarnessError;

/// All grid points, in output order.
pub fn grid(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &scheme in &cfg.schemes {
        for &method in &cfg.methods {
            for &sensors in &cfg.sensors {
                for &order in &cfg.orders {
                    for &budget in &cfg.budgets {
                        for sigma in cfg.noise.sigmas() {
                            out.push(GridPoint { scheme, method, sensors, order, budget, sigma });
                        }
                    }
                }
            }
        }
    }
    out
}

/// A numerical breakdown inside one trial is scored as a failed trial.
fn failed_row(cfg: &ExperimentConfig, point: &GridPoint, trial: usize, err: &AnmError) -> ResultRow {
    log::warn!("trial {trial} at {point:?} failed: {err}");
    ResultRow {
        preset: cfg.name.clone(),
        point: *point,
        samples: cfg.samples(),
        trial,
        seed: child_seed(cfg.seed, point, trial),
        sample_interval: f64::NAN,
        mac: Vec::new(),
        freq_err: Vec::new(),
        freq_hat: Vec::new(),
        rel_fro_err: None,
        mse: None,
        k_hat: 0,
        shape_success: false,
        data_success: false,
        iters: 0,
        converged: false,
        wall_ms: 0.0,
    }
}

/// Runs every (grid point, trial) on `threads` workers. Rows come back in
/// grid order regardless of scheduling.
pub fn run_sweep(cfg: &ExperimentConfig, threads: usize) -> Result<Vec<ResultRow>, HarnessError> {
    cfg.validate()?;
    let jobs: Vec<(GridPoint, usize)> =
        grid(cfg).into_iter().flat_map(|p| (0..cfg.trials).map(move |t| (p, t))).collect();
    let slots: Vec<Mutex<Option<Result<ResultRow, HarnessError>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some((p, t)) = jobs.get(i) else { break };
        let row = match run_trial(cfg, p, *t) {
            Err(HarnessError::Core(e)) if !matches!(e, AnmError::Validation(_)) => Ok(failed_row(cfg, p, *t, &e)),
            r => r,
        };
        *slots[i].lock().expect("slot lock") = Some(row);
    };
    let threads = threads.clamp(1, jobs.len().max(1));
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    slots.into_iter().map(|s| s.into_inner().expect("slot lock").expect("every job ran")).collect()
}

fn max_order(cfg: &ExperimentConfig) -> usize {
    cfg.orders.iter().copied().max().unwrap_or(0)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn padded(v: &[f64], k: usize) -> impl Iterator<Item = String> + '_ {
    (0..k).map(move |i| v.get(i).map(|x| x.to_string()).unwrap_or_default())
}

pub fn header(kmax: usize) -> Vec<String> {
    let mut h: Vec<String> = ["preset", "method", "scheme", "M", "N", "K", "budget", "sigma", "trial", "seed", "ts"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for prefix in ["mac", "freq_err", "freq_hat"] {
        h.extend((1..=kmax).map(|i| format!("{prefix}_{i}")));
    }
    h.extend(
        ["rel_fro_err", "mse", "k_hat", "shape_success", "data_success", "iters", "converged", "wall_ms"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

pub fn record(row: &ResultRow, kmax: usize) -> Vec<String> {
    let p = &row.point;
    let mut r = vec![
        row.preset.clone(),
        p.method.name().to_string(),
        p.scheme.name().to_string(),
        row.samples.to_string(),
        p.sensors.to_string(),
        p.order.to_string(),
        p.budget.to_string(),
        p.sigma.to_string(),
        row.trial.to_string(),
        row.seed.to_string(),
        row.sample_interval.to_string(),
    ];
    r.extend(padded(&row.mac, kmax));
    r.extend(padded(&row.freq_err, kmax));
    r.extend(padded(&row.freq_hat, kmax));
    r.extend([
        opt(row.rel_fro_err),
        opt(row.mse),
        row.k_hat.to_string(),
        row.shape_success.to_string(),
        row.data_success.to_string(),
        row.iters.to_string(),
        row.converged.to_string(),
        format!("{:.3}", row.wall_ms),
    ]);
    r
}

pub fn write_rows<W: Write>(out: W, rows: &[ResultRow], kmax: usize) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(kmax))?;
    for row in rows {
        w.write_record(record(row, kmax))?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregate over the trials of one grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub point: GridPoint,
    pub trials: usize,
    pub shape_success_rate: f64,
    pub data_success_rate: f64,
    pub converged_rate: f64,
    /// Per-row mean over the K true modes (unmatched modes count as 0).
    pub mean_mac: f64,
    pub mean_mse: Option<f64>,
    pub mean_rel_err: Option<f64>,
    pub mean_iters: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { f64::NAN } else { s / n as f64 }
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let all: Option<Vec<f64>> = v.collect();
    all.filter(|a| !a.is_empty()).map(|a| mean(a.into_iter()))
}

pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<(GridPoint, Vec<&ResultRow>)> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows {
        let key = format!("{:?}", r.point);
        let i = *index.entry(key).or_insert_with(|| {
            groups.push((r.point, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(r);
    }
    groups
        .into_iter()
        .map(|(point, rs)| {
            let rate = |f: fn(&ResultRow) -> bool| mean(rs.iter().map(|r| f(r) as u8 as f64));
            SummaryRow {
                point,
                trials: rs.len(),
                shape_success_rate: rate(|r| r.shape_success),
                data_success_rate: rate(|r| r.data_success),
                converged_rate: rate(|r| r.converged),
                mean_mac: mean(rs.iter().map(|r| r.mac.iter().sum::<f64>() / point.order.max(1) as f64)),
                mean_mse: mean_opt(rs.iter().map(|r| r.mse)),
                mean_rel_err: mean_opt(rs.iter().map(|r| r.rel_fro_err)),
                mean_iters: mean(rs.iter().map(|r| r.iters as f64)),
            }
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, preset: &str, rows: &[SummaryRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "preset",
        "method",
        "scheme",
        "N",
        "K",
        "budget",
        "sigma",
        "trials",
        "shape_success_rate",
        "data_success_rate",
        "converged_rate",
        "mean_mac",
        "mean_mse",
        "mean_rel_err",
        "mean_iters",
    ])?;
    for s in rows {
        let p = &s.point;
        w.write_record([
            preset.to_string(),
            p.method.name().to_string(),
            p.scheme.name().to_string(),
            p.sensors.to_string(),
            p.order.to_string(),
            p.budget.to_string(),
            p.sigma.to_string(),
            s.trials.to_string(),
            s.shape_success_rate.to_string(),
            s.data_success_rate.to_string(),
            s.converged_rate.to_string(),
            s.mean_mac.to_string(),
            opt(s.mean_mse),
            opt(s.mean_rel_err),
            s.mean_iters.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `r.csv` → `r.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

/// Runs the sweep and writes the row and summary CSVs.
pub fn run_to_files(cfg: &ExperimentConfig, out: &Path, threads: usize) -> Result<Vec<SummaryRow>, HarnessError> {
    let rows = run_sweep(cfg, threads)?;
    let summary = summarize(&rows);
    write_rows(std::fs::File::create(out)?, &rows, max_order(cfg))?;
    write_summary(std::fs::File::create(summary_path(out))?, &cfg.name, &summary)?;
    Ok(summary)
}
