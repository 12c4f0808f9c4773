//! Sweeps, run manifests, named reproduction targets and the `fscap` command line.

pub mod cli;
mod reproduce;
mod sweep;


pub use reproduce::{reproduce, Check, ReproduceReport, TARGETS};
pub use sweep::{rows_to_csv, run_sweep, RunManifest, SweepOutput, SweepRow, TaskRecord, CSV_HEADER};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::{builtin_channel, UnifilarFsc};
use crate::delay::transform;
use crate::error::{Error, Result};
use crate::qgraph::{builtin_qgraph, QGraph};

/// Parameter grid, either listed or as an inclusive range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    /// Grid points in order. Range endpoints are included up to a 1e-9 step fraction.
    pub fn points(&self) -> Result<Vec<f64>> {
        let pts = match self {
            Grid::Values(v) => v.clone(),
            &Grid::Range { start, stop, step } => {
                if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
                    return Err(Error::ParameterOutOfRange(format!("grid step {step} must be positive")));
                }
                let n = ((stop - start) / step + 1e-9).floor();
                if n < 0.0 {
                    Vec::new()
                } else {
                    // Rounded to 12 decimals so that 0.1 + 2 * 0.1 prints as 0.3.
                    (0..=n as usize).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect()
                }
            }
        };
        if pts.is_empty() {
            return Err(Error::ParameterOutOfRange("parameter grid is empty".into()));
        }
        if pts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::ParameterOutOfRange("parameter grid must be strictly increasing".into()));
        }
        Ok(pts)
    }
}

impl FromStr for Grid {
    type Err = Error;

    /// `start:stop:step` or a comma-separated list.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("grid value {t:?}: {e}")));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [a, b, c] => Ok(Grid::Range { start: num(a)?, stop: num(b)?, step: num(c)? }),
            [list] => Ok(Grid::Values(list.split(',').filter(|t| !t.trim().is_empty()).map(num).collect::<Result<_>>()?)),
            _ => Err(Error::Parse(format!("grid {s:?}, expected start:stop:step or a list"))),
        }
    }
}

/// Bound computed at every grid point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    /// Closed-form dual bound: the BSC theorem or the dicode bound at `p = 0.5`.
    AnalyticThm,
    /// Dicode feedback capacity formula.
    DecFb,
    /// RVI dual bound on the test law induced by the Q-graph optimum.
    DualUb { qgraph: String, delay: usize },
    /// Q-graph upper bound alone.
    QgraphUb { qgraph: String, delay: usize },
    /// Certified BCJR-invariant lower bound.
    BcjrLb { qgraph: String, delay: usize },
}

impl Method {
    /// Parses a method token; `dual-ub`, `qgraph-ub` and `bcjr-lb` take an
    /// optional `-<graph>-d<delay>` suffix and otherwise use the defaults.
    pub fn parse(token: &str, default_qgraph: &str, default_delay: usize) -> Result<Self> {
        match token {
            "analytic-thm" => return Ok(Method::AnalyticThm),
            "dec-fb" => return Ok(Method::DecFb),
            _ => {}
        }
        let (kind, rest) = ["dual-ub", "qgraph-ub", "bcjr-lb"]
            .iter()
            .find_map(|k| token.strip_prefix(k).map(|r| (*k, r)))
            .ok_or_else(|| Error::UnknownName(format!("method {token:?}")))?;
        let (qgraph, delay) = if rest.is_empty() {
            (default_qgraph.to_string(), default_delay)
        } else {
            let body = rest.strip_prefix('-').ok_or_else(|| Error::UnknownName(format!("method {token:?}")))?;
            let (g, d) = body.rsplit_once("-d").ok_or_else(|| Error::Parse(format!("method {token:?}: missing -d<delay>")))?;
            let d = d.parse::<usize>().map_err(|e| Error::Parse(format!("method {token:?}: {e}")))?;
            (g.to_string(), d)
        };
        qgraph_name(&qgraph)?;
        Ok(match kind {
            "dual-ub" => Method::DualUb { qgraph, delay },
            "qgraph-ub" => Method::QgraphUb { qgraph, delay },
            _ => Method::BcjrLb { qgraph, delay },
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::AnalyticThm => write!(f, "analytic-thm"),
            Method::DecFb => write!(f, "dec-fb"),
            Method::DualUb { qgraph, delay } => write!(f, "dual-ub-{qgraph}-d{delay}"),
            Method::QgraphUb { qgraph, delay } => write!(f, "qgraph-ub-{qgraph}-d{delay}"),
            Method::BcjrLb { qgraph, delay } => write!(f, "bcjr-lb-{qgraph}-d{delay}"),
        }
    }
}

/// Maps the short graph names `markov<k>`, `appendixA`, `appendixC` (and the
/// long form `markov:k=<k>`) to the library's builtin names.
pub fn qgraph_name(short: &str) -> Result<String> {
    if short == "appendixA" || short == "appendixC" || short.starts_with("markov:k=") {
        return Ok(short.to_string());
    }
    match short.strip_prefix("markov").map(str::parse::<usize>) {
        Some(Ok(k)) => Ok(format!("markov:k={k}")),
        _ => Err(Error::UnknownName(format!("q-graph {short:?}"))),
    }
}

/// Builtin channel after the delay transform, with a Q-graph resolved for its outputs.
pub fn delayed_setup(channel: &str, delay: usize, qgraph: &str) -> Result<(UnifilarFsc, QGraph)> {
    let ch = transform(&builtin_channel(channel)?, delay)?.into_channel();
    let g = builtin_qgraph(&qgraph_name(qgraph)?, ch.output_count())?;
    Ok((ch, g))
}

/// Files written by a sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
}

/// Sweep configuration, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// Channel family swept over `p`: `bsc-rll` or `dec`.
    pub channel: String,
    #[serde(default = "default_delay")]
    pub delay: usize,
    pub grid: Grid,
    pub methods: Vec<String>,
    /// Graph used by methods given without a suffix.
    #[serde(default = "default_qgraph")]
    pub qgraph: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_delay() -> usize {
    2
}

fn default_qgraph() -> String {
    "markov3".into()
}

impl SweepSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Grid points and parsed methods, or the first validation error.
    pub fn resolve(&self) -> Result<(Vec<f64>, Vec<Method>)> {
        if !matches!(self.channel.as_str(), "bsc-rll" | "dec") {
            return Err(Error::UnknownName(format!("sweep channel {:?}, expected bsc-rll or dec", self.channel)));
        }
        if self.delay == 0 {
            return Err(Error::InvalidDelay(0));
        }
        let points = self.grid.points()?;
        if let Some(p) = points.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::ParameterOutOfRange(format!("p = {p} not in [0, 1]")));
        }
        if self.methods.is_empty() {
            return Err(Error::ParameterOutOfRange("no methods given".into()));
        }
        let methods = self.methods.iter().map(|m| Method::parse(m, &self.qgraph, self.delay)).collect::<Result<_>>()?;
        Ok((points, methods))
    }
}

/// `v` with 10 significant digits and trailing zeros dropped, like C's `%.10g`.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let trim = |s: String| if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
    let sci = format!("{v:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let e: i32 = exp.parse().expect("integer exponent");
    if !(-4..10).contains(&e) {
        return format!("{}e{e}", trim(mantissa.to_string()));
    }
    trim(format!("{v:.*}", (9 - e) as usize))
}
