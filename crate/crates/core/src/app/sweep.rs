use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{delayed_setup, format_sig, Grid, Method, OutputPaths, SweepSpec};
use crate::dual_mdp::{bsc_bound, bsc_certificate, dec_bound, dec_feedback_capacity, dual_upper_bound, RviOpts};
use crate::error::{Error, Result};
use crate::graph_bounds::{bcjr_lower_bound, upper_bound, BcjrOpts, UpperOpts};

pub const CSV_HEADER: [&str; 7] = ["param", "method", "value", "residual", "iterations", "runtime_ms", "status"];

/// One grid point under one method. `value` and `residual` are absent when `status` is not `ok`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub method: String,
    pub value: Option<f64>,
    /// Method-specific accuracy: duality gap, Bellman violation, BCJR or stationarity residual.
    pub residual: Option<f64>,
    pub iterations: usize,
    pub runtime_ms: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    /// Row index in the CSV, header excluded.
    pub row: usize,
    pub param: f64,
    pub method: String,
    pub seed: u64,
    pub runtime_ms: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Spec with the grid expanded and methods in canonical form.
    pub config: SweepSpec,
    pub seeds: Vec<u64>,
    pub jobs: usize,
    /// `sha256("blob <len>\0" + config JSON)`.
    pub input_hash: String,
    pub tasks: Vec<TaskRecord>,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub manifest: RunManifest,
}

impl SweepOutput {
    pub fn csv(&self) -> String {
        rows_to_csv(&self.rows)
    }

    /// Writes the CSV and the manifest to whichever paths are set.
    pub fn write(&self, paths: &OutputPaths) -> Result<()> {
        if let Some(p) = &paths.csv {
            std::fs::write(p, self.csv())?;
        }
        if let Some(p) = &paths.manifest {
            std::fs::write(p, serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            format_sig(r.param),
            r.method.clone(),
            opt(r.value),
            opt(r.residual),
            r.iterations.to_string(),
            format!("{:.3}", r.runtime_ms),
            r.status.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn git_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// `(value, residual, iterations)` of one method at one parameter.
fn evaluate(channel: &str, p: f64, method: &Method, seed: u64) -> Result<(f64, f64, usize)> {
    let upper = UpperOpts { seed, ..UpperOpts::default() };
    let named = format!("{channel}:p={p}");
    match method {
        Method::AnalyticThm => match channel {
            "bsc-rll" => {
                let b = bsc_bound(p)?;
                let report = bsc_certificate(p, b.params)?.verify(1e-9)?;
                Ok((b.value, report.max_violation, 0))
            }
            _ if p == 0.5 => {
                let b = dec_bound()?;
                Ok((b.value, b.violation, 0))
            }
            _ => Err(Error::ParameterOutOfRange(format!("closed-form dicode bound only at p = 0.5, got {p}"))),
        },
        Method::DecFb => {
            if channel != "dec" {
                return Err(Error::ParameterOutOfRange(format!("dec-fb needs the dec channel, got {channel}")));
            }
            Ok((dec_feedback_capacity(p)?.value, 0.0, 0))
        }
        Method::DualUb { qgraph, delay } => {
            let (ch, g) = delayed_setup(&named, *delay, qgraph)?;
            let b = dual_upper_bound(&ch, &g, &upper, &RviOpts::default())?;
            Ok((b.value, b.gap, b.iterations))
        }
        Method::QgraphUb { qgraph, delay } => {
            let (ch, g) = delayed_setup(&named, *delay, qgraph)?;
            let r = upper_bound(&ch, &g, &upper)?;
            Ok((r.value, r.stationarity_residual, r.iterations))
        }
        Method::BcjrLb { qgraph, delay } => {
            let (ch, g) = delayed_setup(&named, *delay, qgraph)?;
            let r = bcjr_lower_bound(&ch, &g, &upper, &BcjrOpts::default())?;
            Ok((r.value, r.bcjr_residual.unwrap_or(0.0), r.iterations))
        }
    }
}

/// Evaluates every method at every grid point on a pool of `jobs` workers
/// (0 for one per core). Rows come out in grid order, methods in spec order.
/// A failing point is recorded in its row's status; only an invalid spec is an error.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepOutput> {
    let (points, methods) = spec.resolve()?;
    let started = Instant::now();
    let tasks: Vec<(f64, &Method)> = points.iter().flat_map(|&p| methods.iter().map(move |m| (p, m))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::ParameterOutOfRange(format!("worker pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, m)| {
                let t = Instant::now();
                let out = evaluate(&spec.channel, p, m, spec.seed);
                let runtime_ms = t.elapsed().as_secs_f64() * 1e3;
                let (value, residual, iterations, status) = match out {
                    Ok((v, r, it)) => (Some(v), Some(r), it, "ok".to_string()),
                    Err(e) => (None, None, 0, format!("error: {e}")),
                };
                SweepRow { param: p, method: m.to_string(), value, residual, iterations, runtime_ms, status }
            })
            .collect()
    });
    let config = SweepSpec {
        grid: Grid::Values(points),
        methods: methods.iter().map(Method::to_string).collect(),
        ..spec.clone()
    };
    let input_hash = git_hash(serde_json::to_string(&config)?.as_bytes());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seeds: vec![spec.seed],
        jobs: pool.current_num_threads(),
        input_hash,
        tasks: rows
            .iter()
            .enumerate()
            .map(|(i, r)| TaskRecord {
                row: i,
                param: r.param,
                method: r.method.clone(),
                seed: spec.seed,
                runtime_ms: r.runtime_ms,
                status: r.status.clone(),
            })
            .collect(),
        total_ms: started.elapsed().as_secs_f64() * 1e3,
        config,
    };
    Ok(SweepOutput { rows, manifest })
}
