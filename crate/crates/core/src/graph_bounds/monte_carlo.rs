//! Simulation estimate of `I(X,S;Y|Q)`, independent of the stationary solver.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::UnifilarFsc;
use crate::error::{Error, Result};
use crate::info::entropy;
use crate::qgraph::{InputPolicy, QGraph};

const BURN_IN: usize = 1_000;
const BATCHES: usize = 20;

/// Plug-in estimate with a 95% batch-means interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub half_width: f64,
    pub steps: usize,
}

impl McEstimate {
    pub fn contains(&self, v: f64) -> bool {
        (v - self.value).abs() <= self.half_width
    }
}

fn sample(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Counts `n(q, s, x, y)` and returns the plug-in `H(Y|Q) - H(Y|X,S,Q)`.
fn plug_in(counts: &[u64], ns: usize, nq: usize, nx: usize, ny: usize) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let mut h_y_q = 0.0;
    let mut h_y_xsq = 0.0;
    let mut buf = vec![0.0; ny];
    for q in 0..nq {
        buf.iter_mut().for_each(|v| *v = 0.0);
        let mut nqc = 0.0;
        for s in 0..ns {
            for x in 0..nx {
                let o = ((q * ns + s) * nx + x) * ny;
                let cell = &counts[o..o + ny];
                let m: u64 = cell.iter().sum();
                if m == 0 {
                    continue;
                }
                let m = m as f64;
                let row: Vec<f64> = cell.iter().map(|&c| c as f64 / m).collect();
                h_y_xsq += m / total * entropy(&row);
                for y in 0..ny {
                    buf[y] += cell[y] as f64;
                }
                nqc += m;
            }
        }
        if nqc > 0.0 {
            buf.iter_mut().for_each(|v| *v /= nqc);
            h_y_q += nqc / total * entropy(&buf);
        }
    }
    (h_y_q - h_y_xsq).max(0.0)
}

/// Simulates `steps` uses after a burn-in of 1000, starting from `(s, q) = (0, 0)`.
pub fn monte_carlo_rate(
    channel: &UnifilarFsc,
    g: &QGraph,
    policy: &InputPolicy,
    steps: usize,
    seed: u64,
) -> Result<McEstimate> {
    policy.validate(channel, g)?;
    if steps < BATCHES {
        return Err(Error::ParameterOutOfRange(format!("need at least {BATCHES} steps")));
    }
    let (ns, nq, nx, ny) = (channel.state_count(), g.node_count(), channel.input_count(), channel.output_count());
    let cells = nq * ns * nx * ny;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut q) = (0, 0);
    let step = |rng: &mut ChaCha8Rng, s: &mut usize, q: &mut usize| -> usize {
        let x = sample(rng, policy.row(*s, *q));
        let y = sample(rng, channel.row(*s, x));
        let cell = ((*q * ns + *s) * nx + x) * ny + y;
        *s = channel.next(*s, x, y);
        *q = g.next(*q, y);
        cell
    };
    for _ in 0..BURN_IN {
        step(&mut rng, &mut s, &mut q);
    }
    let mut all = vec![0u64; cells];
    let mut batch_values = Vec::with_capacity(BATCHES);
    let per = steps / BATCHES;
    for b in 0..BATCHES {
        let len = if b + 1 == BATCHES { steps - per * (BATCHES - 1) } else { per };
        let mut counts = vec![0u64; cells];
        for _ in 0..len {
            counts[step(&mut rng, &mut s, &mut q)] += 1;
        }
        batch_values.push(plug_in(&counts, ns, nq, nx, ny));
        for (a, c) in all.iter_mut().zip(&counts) {
            *a += c;
        }
    }
    let value = plug_in(&all, ns, nq, nx, ny);
    let mean = batch_values.iter().sum::<f64>() / BATCHES as f64;
    let var = batch_values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    // Student-t 97.5% quantile, 19 degrees of freedom.
    let half_width = 2.093 * var.sqrt() / (BATCHES as f64).sqrt();
    Ok(McEstimate { value, half_width, steps })
}
