use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("channel is not unifilar: next state undefined at (s={state}, x={input}, y={output})")]
    NotUnifilar {
        state: usize,
        input: usize,
        output: usize,
    },

    #[error("delay must be at least 1, got {0}")]
    InvalidDelay(usize),

    #[error("invalid q-graph: {0}")]
    InvalidQGraph(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid test distribution: {0}")]
    InvalidTestDistribution(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("index {index} out of range (size {size})")]
    OutOfRange { index: usize, size: usize },

    #[error("multichain: {0} closed communicating classes")]
    Multichain(usize),

    #[error("periodic: closed class has period {0}")]
    Periodic(usize),

    #[error("not BCJR-invariant: residual {0:e}")]
    NotBcjrInvariant(f64),

    #[error("did not converge: best residual {residual:e} after {iterations} iterations")]
    DidNotConverge { residual: f64, iterations: usize },

    #[error("no unichain policy found")]
    NoUnichainPolicy,

    #[error("infinite reward at every start state")]
    UnreachableInfiniteReward,

    #[error("value iteration did not converge: span {span:e} after {iterations} iterations")]
    NotConverged { span: f64, iterations: usize },

    #[error("support not closed: ({from_state},{from_node}) -> ({to_state},{to_node}) under x={input}")]
    SupportNotClosed {
        from_state: usize,
        from_node: usize,
        input: usize,
        to_state: usize,
        to_node: usize,
    },

    #[error("infinite reward inside support at (s={state}, q={node}), x={input}")]
    InfiniteRewardInSupport {
        state: usize,
        node: usize,
        input: usize,
    },

    #[error("value function undefined at (s={state}, q={node})")]
    UndefinedValue { state: usize, node: usize },

    #[error("parameters violate constraint {index}: log-ratio {value:e} < 0")]
    ConstraintViolated { index: usize, value: f64 },

    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("no feasible point found")]
    NoFeasiblePoint,

    #[error("unknown name: {0}")]
    UnknownName(String),

    #[error("{0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
