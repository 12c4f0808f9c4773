//! Unifilar finite-state channels: data model, validation and built-ins.
//!
//! A channel is given by its kernel `P(y|x,s)`, a deterministic next-state
//! table `f(s,x,y)` and, per state, the set of admissible inputs. Input
//! constraints (such as the no-consecutive-ones constraint) live in the
//! admissible sets; rows of inadmissible inputs are ignored everywhere.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance used by [`UnifilarFsc::validate`].
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Human-readable names for states, inputs and outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub states: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub outputs: Vec<String>,
}

/// Crossover or erasure probability of a parametric built-in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    p: f64,
}

impl ChannelParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ParameterOutOfRange(format!("p = {p} not in [0,1]")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// A unifilar finite-state channel.
#[derive(Debug, Clone, PartialEq)]
pub struct UnifilarFsc {
    states: usize,
    inputs: usize,
    outputs: usize,
    /// `P(y|x,s)` at `(s * inputs + x) * outputs + y`.
    kernel: Vec<f64>,
    /// `f(s,x,y)`, same layout as `kernel`.
    next_state: Vec<Option<usize>>,
    admissible: Vec<Vec<usize>>,
    labels: Labels,
}

/// A single broken invariant found by [`UnifilarFsc::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape(String),
    RowSum { state: usize, input: usize, sum: f64 },
    EntryOutOfRange { state: usize, input: usize, output: usize, value: f64 },
    MissingNextState { state: usize, input: usize, output: usize },
    NextStateOutOfRange { state: usize, input: usize, output: usize, next: usize },
    EmptyActionSet { state: usize },
    AdmissibleOutOfRange { state: usize, input: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "{msg}"),
            Violation::RowSum { state, input, sum } => {
                write!(f, "row (s={state},x={input}) sums to {sum}")
            }
            Violation::EntryOutOfRange { state, input, output, value } => write!(
                f,
                "entry P(y={output}|x={input},s={state}) = {value} outside [0,1]"
            ),
            Violation::MissingNextState { state, input, output } => write!(
                f,
                "next state undefined at (s={state},x={input},y={output})"
            ),
            Violation::NextStateOutOfRange { state, input, output, next } => write!(
                f,
                "next state {next} at (s={state},x={input},y={output}) out of range"
            ),
            Violation::EmptyActionSet { state } => write!(f, "state {state} has empty action set"),
            Violation::AdmissibleOutOfRange { state, input } => {
                write!(f, "admissible input {input} at state {state} out of range")
            }
        }
    }
}

/// Outcome of [`UnifilarFsc::validate`]; empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        match self.violations.first() {
            None => Ok(()),
            Some(Violation::MissingNextState { state, input, output }) => Err(Error::NotUnifilar {
                state: *state,
                input: *input,
                output: *output,
            }),
            Some(_) => Err(Error::InvalidChannel(
                self.violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            )),
        }
    }
}

impl UnifilarFsc {
    /// Builds a channel from flat tables laid out `(s * inputs + x) * outputs + y`.
    ///
    /// Nothing is validated here; call [`validate`](Self::validate).
    pub fn from_parts(
        states: usize,
        inputs: usize,
        outputs: usize,
        kernel: Vec<f64>,
        next_state: Vec<Option<usize>>,
        admissible: Vec<Vec<usize>>,
    ) -> Self {
        Self {
            states,
            inputs,
            outputs,
            kernel,
            next_state,
            admissible,
            labels: Labels::default(),
        }
    }

    pub fn with_labels(mut self, labels: Labels) -> Self {
        self.labels = labels;
        self
    }

    pub fn state_count(&self) -> usize {
        self.states
    }

    pub fn input_count(&self) -> usize {
        self.inputs
    }

    pub fn output_count(&self) -> usize {
        self.outputs
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    #[inline]
    fn idx(&self, s: usize, x: usize, y: usize) -> usize {
        (s * self.inputs + x) * self.outputs + y
    }

    /// `P(y|x,s)`.
    #[inline]
    pub fn prob(&self, s: usize, x: usize, y: usize) -> f64 {
        self.kernel[self.idx(s, x, y)]
    }

    /// The output distribution `P(.|x,s)`.
    #[inline]
    pub fn row(&self, s: usize, x: usize) -> &[f64] {
        let start = self.idx(s, x, 0);
        &self.kernel[start..start + self.outputs]
    }

    /// `f(s,x,y)`; `None` where the transition has no mass.
    #[inline]
    pub fn next_state(&self, s: usize, x: usize, y: usize) -> Option<usize> {
        self.next_state[self.idx(s, x, y)]
    }

    /// `f(s,x,y)` for a transition known to carry mass.
    ///
    /// Panics on an undefined entry; valid channels define every such entry.
    #[inline]
    pub fn next(&self, s: usize, x: usize, y: usize) -> usize {
        self.next_state[self.idx(s, x, y)].expect("next state undefined on a positive transition")
    }

    pub fn admissible(&self, s: usize) -> &[usize] {
        &self.admissible[s]
    }

    pub fn is_admissible(&self, s: usize, x: usize) -> bool {
        self.admissible[s].contains(&x)
    }

    /// Outputs with positive probability from `(s,x)`, with their probability and next state.
    pub fn transitions(&self, s: usize, x: usize) -> impl Iterator<Item = (usize, f64, usize)> + '_ {
        (0..self.outputs).filter_map(move |y| {
            let p = self.prob(s, x, y);
            (p > 0.0).then(|| (y, p, self.next(s, x, y)))
        })
    }

    /// Checks every structural invariant and lists each violation.
    pub fn validate(&self) -> ValidationReport {
        let mut v = Vec::new();
        let cells = self.states * self.inputs * self.outputs;
        if self.states == 0 || self.inputs == 0 || self.outputs == 0 {
            v.push(Violation::Shape("alphabet sizes must be positive".into()));
        }
        if self.kernel.len() != cells {
            v.push(Violation::Shape(format!(
                "kernel has {} entries, expected {cells}",
                self.kernel.len()
            )));
        }
        if self.next_state.len() != cells {
            v.push(Violation::Shape(format!(
                "next_state has {} entries, expected {cells}",
                self.next_state.len()
            )));
        }
        if self.admissible.len() != self.states {
            v.push(Violation::Shape(format!(
                "admissible has {} rows, expected {}",
                self.admissible.len(),
                self.states
            )));
        }
        if !v.is_empty() {
            return ValidationReport { violations: v };
        }
        for s in 0..self.states {
            if self.admissible[s].is_empty() {
                v.push(Violation::EmptyActionSet { state: s });
            }
            for &x in &self.admissible[s] {
                if x >= self.inputs {
                    v.push(Violation::AdmissibleOutOfRange { state: s, input: x });
                    continue;
                }
                let mut sum = 0.0;
                for y in 0..self.outputs {
                    let p = self.prob(s, x, y);
                    if !(0.0..=1.0).contains(&p) || p.is_nan() {
                        v.push(Violation::EntryOutOfRange { state: s, input: x, output: y, value: p });
                    }
                    sum += p;
                    if p > 0.0 {
                        match self.next_state(s, x, y) {
                            None => v.push(Violation::MissingNextState { state: s, input: x, output: y }),
                            Some(n) if n >= self.states => v.push(Violation::NextStateOutOfRange {
                                state: s,
                                input: x,
                                output: y,
                                next: n,
                            }),
                            Some(_) => {}
                        }
                    }
                }
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    v.push(Violation::RowSum { state: s, input: x, sum });
                }
            }
        }
        ValidationReport { violations: v }
    }

    /// True iff every state reaches every other state with positive
    /// probability under some admissible input sequence.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.states;
        let mut adj = vec![Vec::new(); n];
        for s in 0..n {
            for &x in &self.admissible[s] {
                for (_, _, t) in self.transitions(s, x) {
                    adj[s].push(t);
                }
            }
        }
        (0..n).all(|src| {
            let mut seen = vec![false; n];
            let mut stack = vec![src];
            seen[src] = true;
            while let Some(u) = stack.pop() {
                for &w in &adj[u] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
            seen.iter().all(|&b| b)
        })
    }

    /// Serializes to the channel JSON schema.
    pub fn to_json(&self) -> ChannelJson {
        let mut kernel = Vec::with_capacity(self.states);
        let mut next = Vec::with_capacity(self.states);
        for s in 0..self.states {
            let mut krow = Vec::with_capacity(self.inputs);
            let mut nrow = Vec::with_capacity(self.inputs);
            for x in 0..self.inputs {
                krow.push(self.row(s, x).to_vec());
                nrow.push((0..self.outputs).map(|y| self.next_state(s, x, y)).collect());
            }
            kernel.push(krow);
            next.push(nrow);
        }
        ChannelJson {
            states: self.states,
            inputs: self.inputs,
            outputs: self.outputs,
            kernel,
            next_state: next,
            admissible: self.admissible.clone(),
            labels: self.labels.clone(),
            decode: None,
        }
    }

    /// Builds a channel from the JSON schema, checking shapes only.
    pub fn from_json(j: &ChannelJson) -> Result<Self> {
        let shape_err = |what: &str| Error::InvalidChannel(format!("{what} has the wrong shape"));
        if j.kernel.len() != j.states || j.next_state.len() != j.states {
            return Err(shape_err("kernel/next_state"));
        }
        let mut kernel = Vec::with_capacity(j.states * j.inputs * j.outputs);
        let mut next = Vec::with_capacity(kernel.capacity());
        for s in 0..j.states {
            if j.kernel[s].len() != j.inputs || j.next_state[s].len() != j.inputs {
                return Err(shape_err("kernel/next_state"));
            }
            for x in 0..j.inputs {
                if j.kernel[s][x].len() != j.outputs || j.next_state[s][x].len() != j.outputs {
                    return Err(shape_err("kernel/next_state"));
                }
                kernel.extend_from_slice(&j.kernel[s][x]);
                next.extend_from_slice(&j.next_state[s][x]);
            }
        }
        Ok(Self {
            states: j.states,
            inputs: j.inputs,
            outputs: j.outputs,
            kernel,
            next_state: next,
            admissible: j.admissible.clone(),
            labels: j.labels.clone(),
        })
    }
}

/// On-disk channel layout (s-major, then x, then y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelJson {
    pub states: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub next_state: Vec<Vec<Vec<Option<usize>>>>,
    pub admissible: Vec<Vec<usize>>,
    #[serde(default)]
    pub labels: Labels,
    /// Extended-state decoding for delay-transformed channels:
    /// `"index" -> {"state": s, "history": [...]}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<BTreeMap<String, DecodeEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeEntry {
    pub state: usize,
    pub history: Vec<usize>,
}

fn binary_labels(prefix_outputs: &[&str]) -> Labels {
    Labels {
        states: vec!["0".into(), "1".into()],
        inputs: vec!["0".into(), "1".into()],
        outputs: prefix_outputs.iter().map(|s| s.to_string()).collect(),
    }
}

/// The trapdoor channel: the output is the stored ball or the new one with
/// equal probability, and the other ball stays, `f(s,x,y) = x ^ y ^ s`.
pub fn make_trapdoor() -> UnifilarFsc {
    let mut kernel = vec![0.0; 8];
    let mut next = vec![None; 8];
    for s in 0..2 {
        for x in 0..2 {
            for y in 0..2 {
                let p = if x == s {
                    if y == x {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    0.5
                };
                let i = (s * 2 + x) * 2 + y;
                kernel[i] = p;
                next[i] = Some(x ^ y ^ s);
            }
        }
    }
    UnifilarFsc::from_parts(2, 2, 2, kernel, next, vec![vec![0, 1], vec![0, 1]])
        .with_labels(binary_labels(&["0", "1"]))
}

/// BSC(p) with a no-consecutive-ones input constraint; the state is the previous input.
pub fn make_bsc_rll(params: ChannelParams) -> UnifilarFsc {
    let p = params.p();
    let mut kernel = vec![0.0; 8];
    let mut next = vec![None; 8];
    for s in 0..2 {
        for x in 0..2 {
            for y in 0..2 {
                let i = (s * 2 + x) * 2 + y;
                kernel[i] = if y == x { 1.0 - p } else { p };
                next[i] = Some(x);
            }
        }
    }
    UnifilarFsc::from_parts(2, 2, 2, kernel, next, vec![vec![0, 1], vec![0]])
        .with_labels(binary_labels(&["0", "1"]))
}

/// Output index of the erasure symbol in the dicode erasure channel.
pub const DEC_ERASURE: usize = 3;

/// Maps a dicode difference `x - s` in {-1,0,1} to its output index.
pub fn dec_output_index(diff: i32) -> usize {
    (diff + 1) as usize
}

/// Dicode erasure channel: `y = x - s` w.p. `1-p`, erased w.p. `p`; outputs ordered `[-1, 0, 1, ?]`.
pub fn make_dec(params: ChannelParams) -> UnifilarFsc {
    let p = params.p();
    let mut kernel = vec![0.0; 16];
    let mut next = vec![None; 16];
    for s in 0..2 {
        for x in 0..2 {
            let base = (s * 2 + x) * 4;
            let y = dec_output_index(x as i32 - s as i32);
            kernel[base + y] = 1.0 - p;
            kernel[base + DEC_ERASURE] += p;
            for yy in 0..4 {
                next[base + yy] = Some(x);
            }
        }
    }
    UnifilarFsc::from_parts(2, 2, 4, kernel, next, vec![vec![0, 1], vec![0, 1]])
        .with_labels(binary_labels(&["-1", "0", "1", "?"]))
}

fn parse_param(spec: &str, key: &str) -> Result<f64> {
    let rest = spec
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| Error::UnknownName(format!("expected {key}=<value>, got {spec:?}")))?;
    rest.trim()
        .parse::<f64>()
        .map_err(|e| Error::Parse(format!("{rest:?}: {e}")))
}

/// Resolves `"trapdoor"`, `"bsc-rll:p=<float>"` or `"dec:p=<float>"`.
pub fn builtin_channel(name: &str) -> Result<UnifilarFsc> {
    let (head, tail) = match name.split_once(':') {
        Some((h, t)) => (h, Some(t)),
        None => (name, None),
    };
    match (head, tail) {
        ("trapdoor", None) => Ok(make_trapdoor()),
        ("bsc-rll", Some(t)) => Ok(make_bsc_rll(ChannelParams::new(parse_param(t, "p")?)?)),
        ("dec", Some(t)) => Ok(make_dec(ChannelParams::new(parse_param(t, "p")?)?)),
        _ => Err(Error::UnknownName(format!("channel {name:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builtins_are_valid() {
        for ch in [
            make_trapdoor(),
            make_bsc_rll(ChannelParams::new(0.2).unwrap()),
            make_dec(ChannelParams::new(0.5).unwrap()),
            make_dec(ChannelParams::new(1.0).unwrap()),
        ] {
            assert!(ch.validate().is_valid(), "{:?}", ch.validate());
        }
    }

    #[test]
    fn trapdoor_tables() {
        let t = make_trapdoor();
        assert_eq!(t.prob(0, 0, 0), 1.0);
        assert_eq!(t.prob(0, 1, 0), 0.5);
        assert_eq!(t.next(0, 1, 1), 0);
        for s in 0..2 {
            for x in 0..2 {
                for (y, _, n) in t.transitions(s, x) {
                    assert_eq!(x + s, y + n, "weight conservation at ({s},{x},{y})");
                }
            }
        }
    }

    #[test]
    fn bsc_rll_tables() {
        let p = 0.13;
        let c = make_bsc_rll(ChannelParams::new(p).unwrap());
        assert!((c.prob(0, 1, 1) - (1.0 - p)).abs() < 1e-15);
        assert_eq!(c.admissible(1), &[0]);
        let c0 = make_bsc_rll(ChannelParams::new(0.0).unwrap());
        for s in 0..2 {
            for x in 0..2 {
                assert_eq!(c0.prob(s, x, x), 1.0);
            }
        }
    }

    #[test]
    fn bsc_rll_never_emits_consecutive_ones() {
        let c = make_bsc_rll(ChannelParams::new(0.3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut s = 0;
        let mut prev_x = 0;
        for _ in 0..10_000 {
            let adm = c.admissible(s);
            let x = adm[rng.gen_range(0..adm.len())];
            assert!(!(prev_x == 1 && x == 1));
            let y = if rng.gen::<f64>() < c.prob(s, x, 0) { 0 } else { 1 };
            s = c.next(s, x, y);
            prev_x = x;
        }
    }

    #[test]
    fn dec_tables() {
        let p = 0.37;
        let c = make_dec(ChannelParams::new(p).unwrap());
        assert!((c.prob(1, 0, 0) - (1.0 - p)).abs() < 1e-15);
        for s in 0..2 {
            for x in 0..2 {
                assert_eq!(c.prob(s, x, DEC_ERASURE), p);
            }
        }
        let all_erased = make_dec(ChannelParams::new(1.0).unwrap());
        for s in 0..2 {
            for x in 0..2 {
                assert_eq!(all_erased.row(s, x), &[0.0, 0.0, 0.0, 1.0]);
            }
        }
    }

    #[test]
    fn validation_reports_violations() {
        let mut c = make_trapdoor();
        c.kernel[0] = 0.5;
        c.kernel[1] = 0.6;
        let rep = c.validate();
        assert!(rep
            .violations
            .iter()
            .any(|v| v.to_string() == "row (s=0,x=0) sums to 1.1"));

        let mut c = make_trapdoor();
        c.admissible[1].clear();
        let msgs: Vec<_> = c.validate().violations.iter().map(ToString::to_string).collect();
        assert!(msgs.contains(&"state 1 has empty action set".to_string()));

        let mut c = make_trapdoor();
        c.next_state[3] = None; // (s=0,x=1,y=1) has positive probability
        assert!(matches!(
            c.validate().into_result(),
            Err(Error::NotUnifilar { .. })
        ));
    }

    #[test]
    fn strong_connectivity() {
        assert!(make_trapdoor().is_strongly_connected());
        for p in [0.01, 0.3, 0.99] {
            assert!(make_bsc_rll(ChannelParams::new(p).unwrap()).is_strongly_connected());
        }
        // state 0 absorbing
        let absorbing = UnifilarFsc::from_parts(
            2,
            1,
            1,
            vec![1.0, 1.0],
            vec![Some(0), Some(0)],
            vec![vec![0], vec![0]],
        );
        assert!(absorbing.validate().is_valid());
        assert!(!absorbing.is_strongly_connected());
    }

    #[test]
    fn names_resolve() {
        assert_eq!(builtin_channel("trapdoor").unwrap(), make_trapdoor());
        let b = builtin_channel("bsc-rll:p=0.25").unwrap();
        assert_eq!(b.prob(0, 0, 1), 0.25);
        assert_eq!(builtin_channel("dec:p=0.5").unwrap().output_count(), 4);
        assert!(builtin_channel("dec:p=1.5").is_err());
        assert!(builtin_channel("erasure").is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = make_dec(ChannelParams::new(0.4).unwrap());
        let text = serde_json::to_string(&c.to_json()).unwrap();
        let back = UnifilarFsc::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
