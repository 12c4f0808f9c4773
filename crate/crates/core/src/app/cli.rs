//! `fscap` command line. Exit status: 0 on success, 1 when a computation fails
//! or a check does not pass, 2 on a usage error.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use super::{delayed_setup, qgraph_name, reproduce, run_sweep, Grid, OutputPaths, SweepSpec};
use crate::channels::builtin_channel;
use crate::delay::transform;
use crate::dual_mdp::{
    bsc_bound, bsc_certificate, dec_bound, dec_certificate_with, dec_feedback_capacity, dual_upper_bound,
    relative_value_iteration, trapdoor_certificate, BundleJson, CertificateBundle, DecValueFunction,
    GraphTestDistribution, RviOpts, TestJson,
};
use crate::error::Error;
use crate::graph_bounds::{
    bcjr_lower_bound, lower_bound, monte_carlo_rate, rate, search_lower_bound, search_upper_bound, small_graphs,
    upper_bound, BcjrOpts, UpperOpts, BCJR_TOL,
};
use crate::qgraph::{markov_qgraph, InputPolicy, PolicyJson};

#[derive(Debug, Parser)]
#[command(name = "fscap", version, about = "Capacity bounds for unifilar finite-state channels with delayed feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Q-graph bound on the delay-transformed channel.
    Bound(BoundArgs),
    /// Dual MDP bound by relative value iteration.
    Dual(DualArgs),
    /// Check a Bellman certificate.
    Verify(VerifyArgs),
    /// Closed-form bounds.
    Analytic {
        #[command(subcommand)]
        which: Analytic,
    },
    /// Best bound over a family of Q-graphs.
    Search(SearchArgs),
    /// Evaluate methods over a parameter grid and write CSV.
    Sweep(SweepArgs),
    /// Run a named pipeline and report pass/fail.
    Reproduce {
        /// One of the names in `fscap reproduce --list`.
        #[arg(required_unless_present = "list")]
        target: Option<String>,
        #[arg(long)]
        list: bool,
        #[arg(long, env = "FSCAP_JOBS", default_value_t = 0)]
        jobs: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Setup {
    /// `trapdoor`, `bsc-rll:p=<p>` or `dec:p=<p>`.
    #[arg(long, default_value = "trapdoor")]
    pub channel: String,
    #[arg(long, default_value_t = 1)]
    pub delay: usize,
    /// `markov<k>`, `markov:k=<k>`, `appendixA` or `appendixC`.
    #[arg(long, default_value = "markov1")]
    pub qgraph: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random restarts besides the uniform start.
    #[arg(long, default_value_t = 16)]
    pub starts: usize,
}

impl Setup {
    fn upper(&self) -> UpperOpts {
        UpperOpts { seed: self.seed, starts: self.starts, ..UpperOpts::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Upper,
    Lower,
    MonteCarlo,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    pub kind: Kind,
    #[command(flatten)]
    pub setup: Setup,
    /// Policy JSON; `lower` then certifies it instead of searching, `monte-carlo` simulates it.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long, default_value_t = 1_000_000)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct DualArgs {
    #[command(flatten)]
    pub setup: Setup,
    /// Test distribution JSON; by default induced by the Q-graph optimum.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// `builtin:trapdoorA`, `bscB:p=<p>[,a=..,b=..,c=..,d=..]`,
    /// `decC:a=<a>[,exponent=3][,h=printed]` or a bundle JSON file.
    #[arg(long)]
    pub certificate: String,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Also write the bundle as JSON.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Analytic {
    /// BSC with the no-consecutive-ones constraint, delay 2.
    Bsc {
        #[arg(long)]
        p: f64,
    },
    /// Dicode erasure channel at p = 0.5, delay 2.
    Dec,
    /// Dicode erasure channel feedback capacity.
    DecFb {
        #[arg(long)]
        p: f64,
    },
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[command(flatten)]
    pub setup: Setup,
    /// Enumerate every graph with at most this many nodes.
    #[arg(long, conflicts_with = "markov_max")]
    pub max_nodes: Option<usize>,
    /// Markov graphs of order 1..=k instead.
    #[arg(long)]
    pub markov_max: Option<usize>,
    /// Search for a certified lower bound instead.
    #[arg(long)]
    pub lower: bool,
    /// Graphs tried for the lower bound.
    #[arg(long, default_value_t = 10)]
    pub candidates: usize,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// JSON sweep spec; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub channel: Option<String>,
    #[arg(long)]
    pub delay: Option<usize>,
    /// `start:stop:step` or a comma-separated list.
    #[arg(long)]
    pub grid: Option<String>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub qgraph: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub csv: Option<String>,
    #[arg(long)]
    pub manifest: Option<String>,
    #[arg(long, env = "FSCAP_JOBS", default_value_t = 0)]
    pub jobs: usize,
}

/// Why a command stopped.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Compute(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::UnknownName(_) | Error::Parse(_) | Error::Io(_) | Error::InvalidDelay(_) | Error::AlphabetMismatch(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Compute(e.to_string()),
        }
    }
}

type Outcome = std::result::Result<bool, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Writes to stdout; a closed pipe ends output quietly.
fn print_out(text: &str) -> std::result::Result<(), Failure> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::Compute(e.to_string())),
        _ => Ok(()),
    }
}

fn emit<T: Serialize>(v: &T) -> Outcome {
    print_out(&(serde_json::to_string_pretty(v).map_err(|e| Failure::Compute(e.to_string()))? + "\n"))?;
    Ok(true)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> std::result::Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn bound(a: &BoundArgs) -> Outcome {
    let s = &a.setup;
    let (ch, g) = delayed_setup(&s.channel, s.delay, &s.qgraph)?;
    let label = |r: crate::graph_bounds::BoundReport| r.labelled(&s.channel, s.delay, &s.qgraph);
    let given = match &a.policy {
        Some(p) => Some(InputPolicy::from_json(&read_json::<PolicyJson>(p)?).map_err(|e| usage(e.to_string()))?),
        None => None,
    };
    match a.kind {
        Kind::Upper => emit(&label(upper_bound(&ch, &g, &s.upper())?)),
        Kind::Lower => {
            let r = match given {
                Some(pol) => lower_bound(&ch, &g, &pol, BCJR_TOL)?,
                None => bcjr_lower_bound(&ch, &g, &s.upper(), &BcjrOpts::default())?,
            };
            emit(&label(r))
        }
        Kind::MonteCarlo => {
            let pol = match given {
                Some(p) => p,
                None => upper_bound(&ch, &g, &s.upper())?.policy()?,
            };
            let mc = monte_carlo_rate(&ch, &g, &pol, a.steps, s.seed)?;
            let exact = rate(&ch, &g, &pol)?;
            emit(&serde_json::json!({
                "channel": s.channel, "delay": s.delay, "qgraph": s.qgraph, "kind": "monte-carlo",
                "value": mc.value, "ci_half_width": mc.half_width, "steps": mc.steps,
                "rate": exact, "inside": mc.contains(exact),
            }))
        }
    }
}

fn dual(a: &DualArgs) -> Outcome {
    let s = &a.setup;
    let (ch, g) = delayed_setup(&s.channel, s.delay, &s.qgraph)?;
    let opts = RviOpts { tol: a.tol, max_iter: a.max_iter, ..RviOpts::default() };
    match &a.test {
        Some(path) => {
            let t = GraphTestDistribution::from_json(&read_json::<TestJson>(path)?).map_err(|e| usage(e.to_string()))?;
            emit(&relative_value_iteration(&ch, &g, &t, &opts)?)
        }
        None => emit(&dual_upper_bound(&ch, &g, &s.upper(), &opts)?),
    }
}

fn fields(spec: &str) -> std::result::Result<Vec<(String, String)>, Failure> {
    spec.split(',')
        .filter(|f| !f.is_empty())
        .map(|f| {
            f.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| usage(format!("certificate field {f:?}, expected key=value")))
        })
        .collect()
}

fn number(fs: &[(String, String)], key: &str) -> std::result::Result<Option<f64>, Failure> {
    fs.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.parse::<f64>().map_err(|e| usage(format!("{key}={v}: {e}"))))
        .transpose()
}

/// Resolves the `--certificate` argument of `fscap verify`.
pub fn load_certificate(spec: &str) -> std::result::Result<CertificateBundle, Failure> {
    if spec == "builtin:trapdoorA" {
        return Ok(trapdoor_certificate());
    }
    if let Some(rest) = spec.strip_prefix("bscB:") {
        let fs = fields(rest)?;
        let p = number(&fs, "p")?.ok_or_else(|| usage("bscB needs p=<value>"))?;
        let params = match ["a", "b", "c", "d"].map(|k| number(&fs, k)) {
            [Ok(Some(a)), Ok(Some(b)), Ok(Some(c)), Ok(Some(d))] => [a, b, c, d],
            [Ok(None), Ok(None), Ok(None), Ok(None)] => bsc_bound(p)?.params,
            _ => return Err(usage("bscB takes all of a, b, c, d or none")),
        };
        return Ok(bsc_certificate(p, params)?);
    }
    if let Some(rest) = spec.strip_prefix("decC:") {
        let fs = fields(rest)?;
        let a = number(&fs, "a")?.ok_or_else(|| usage("decC needs a=<value>"))?;
        let exponent = number(&fs, "exponent")?.unwrap_or(2.0) as i32;
        let which = match fs.iter().find(|(k, _)| k == "h").map(|(_, v)| v.as_str()) {
            None | Some("corrected") => DecValueFunction::Corrected,
            Some("printed") => DecValueFunction::AsPrinted,
            Some(v) => return Err(usage(format!("h={v}, expected printed or corrected"))),
        };
        return Ok(dec_certificate_with(a, exponent, which)?);
    }
    if spec.contains(':') && !std::path::Path::new(spec).exists() {
        return Err(usage(format!("certificate {spec:?}: unknown scheme")));
    }
    let j: BundleJson = read_json(&PathBuf::from(spec))?;
    CertificateBundle::from_json(&j).map_err(|e| usage(e.to_string()))
}

fn verify(a: &VerifyArgs) -> Outcome {
    let bundle = load_certificate(&a.certificate)?;
    if let Some(path) = &a.export {
        let text = serde_json::to_string_pretty(&bundle.to_json()).map_err(|e| Failure::Compute(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))?;
    }
    let report = bundle.verify(a.tol)?;
    emit(&serde_json::json!({ "name": bundle.name, "report": report }))?;
    Ok(report.passed)
}

fn analytic(a: &Analytic) -> Outcome {
    match *a {
        Analytic::Bsc { p } => emit(&bsc_bound(p)?),
        Analytic::Dec => emit(&dec_bound()?),
        Analytic::DecFb { p } => emit(&dec_feedback_capacity(p)?),
    }
}

fn search(a: &SearchArgs) -> Outcome {
    let s = &a.setup;
    let ch = transform(&builtin_channel(&s.channel)?, s.delay)?.into_channel();
    let ny = ch.output_count();
    let (graphs, family) = match (a.max_nodes, a.markov_max) {
        (Some(n), None) => (small_graphs(n, ny), format!("all graphs with <= {n} nodes")),
        (None, Some(k)) => (
            (1..=k).map(|k| markov_qgraph(k, ny)).collect::<crate::error::Result<Vec<_>>>()?,
            format!("markov k <= {k}"),
        ),
        _ => return Err(usage("give exactly one of --max-nodes or --markov-max")),
    };
    let found = if a.lower {
        search_lower_bound(&ch, graphs, a.candidates, &s.upper(), &BcjrOpts::default())?
    } else {
        search_upper_bound(&ch, graphs, &s.upper())?
    };
    emit(&serde_json::json!({
        "family": family,
        "evaluated": found.evaluated,
        "qualified": found.qualified,
        "graph": found.graph.to_vectors(),
        "report": found.report.labelled(&s.channel, s.delay, "search"),
    }))
}

/// Spec from `--config` with flag overrides applied.
pub fn sweep_spec(a: &SweepArgs) -> std::result::Result<SweepSpec, Failure> {
    let mut spec = match &a.config {
        Some(path) => read_json::<SweepSpec>(path)?,
        None => SweepSpec {
            channel: a.channel.clone().ok_or_else(|| usage("--channel or --config is required"))?,
            delay: 2,
            grid: Grid::Values(Vec::new()),
            methods: Vec::new(),
            qgraph: "markov3".into(),
            seed: 0,
            output: OutputPaths::default(),
        },
    };
    if let Some(c) = &a.channel {
        spec.channel = c.clone();
    }
    if let Some(d) = a.delay {
        spec.delay = d;
    }
    if let Some(g) = &a.grid {
        spec.grid = g.parse().map_err(|e: Error| usage(e.to_string()))?;
    }
    if let Some(m) = &a.methods {
        spec.methods = m.clone();
    }
    if let Some(q) = &a.qgraph {
        qgraph_name(q)?;
        spec.qgraph = q.clone();
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if a.csv.is_some() {
        spec.output.csv = a.csv.clone();
    }
    if a.manifest.is_some() {
        spec.output.manifest = a.manifest.clone();
    }
    spec.resolve().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn sweep(a: &SweepArgs) -> Outcome {
    let spec = sweep_spec(a)?;
    let out = run_sweep(&spec, a.jobs)?;
    out.write(&spec.output)?;
    if spec.output.csv.is_none() {
        print_out(&out.csv())?;
    }
    Ok(true)
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Bound(a) => bound(a),
        Command::Dual(a) => dual(a),
        Command::Verify(a) => verify(a),
        Command::Analytic { which } => analytic(which),
        Command::Search(a) => search(a),
        Command::Sweep(a) => sweep(a),
        Command::Reproduce { list: true, .. } => {
            print_out(&(super::TARGETS.join("\n") + "\n"))?;
            Ok(true)
        }
        Command::Reproduce { target, jobs, .. } => {
            let target = target.as_deref().expect("clap requires a target");
            let report = reproduce(target, *jobs)?;
            emit(&report)?;
            Ok(report.passed)
        }
    }
}

/// Parses `std::env::args`, runs the command and returns the exit status.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("fscap: usage error: {m}"),
                Failure::Compute(m) => eprintln!("fscap: {m}"),
            }
            f.code()
        }
    }
}
