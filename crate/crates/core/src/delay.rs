//! Delayed feedback as instantaneous feedback over an extended state.
//!
//! With feedback delayed by `d` steps, the channel is rewritten with state
//! `(s_{t-d}, x_{t-d+1}, ..., x_{t-1})`, output `y_{t-d+1}` and unchanged
//! input. The rewritten channel is again unifilar, and its output no longer
//! depends on the current input.
//!
//! Extended states are numbered in mixed radix: base state most significant,
//! then the history from oldest to newest. Histories that break the base
//! channel's input constraint are pruned and the survivors renumbered in
//! increasing code order.

use std::collections::{BTreeMap, BTreeSet};

use crate::channels::{ChannelJson, DecodeEntry, Labels, UnifilarFsc};
use crate::error::{Error, Result};

/// A base channel together with its delay-`d` rewrite.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedChannel {
    base: UnifilarFsc,
    delay: usize,
    channel: UnifilarFsc,
    decode: Vec<(usize, Vec<usize>)>,
}

impl TransformedChannel {
    pub fn base(&self) -> &UnifilarFsc {
        &self.base
    }

    pub fn delay(&self) -> usize {
        self.delay
    }

    /// The instantaneous-feedback channel over extended states.
    pub fn channel(&self) -> &UnifilarFsc {
        &self.channel
    }

    pub fn into_channel(self) -> UnifilarFsc {
        self.channel
    }

    /// Extended-state index to `(base state, input history)`.
    pub fn decode_state(&self, index: usize) -> Result<(usize, Vec<usize>)> {
        self.decode.get(index).cloned().ok_or(Error::OutOfRange {
            index,
            size: self.decode.len(),
        })
    }

    /// Inverse of [`decode_state`](Self::decode_state); `None` if pruned or malformed.
    pub fn encode_state(&self, state: usize, history: &[usize]) -> Option<usize> {
        self.decode
            .iter()
            .position(|(s, h)| *s == state && h.as_slice() == history)
    }

    /// Channel JSON with the `decode` annex filled in.
    pub fn to_json(&self) -> ChannelJson {
        let mut j = self.channel.to_json();
        j.decode = Some(
            self.decode
                .iter()
                .enumerate()
                .map(|(i, (s, h))| {
                    (
                        i.to_string(),
                        DecodeEntry {
                            state: *s,
                            history: h.clone(),
                        },
                    )
                })
                .collect::<BTreeMap<_, _>>(),
        );
        j
    }
}

fn unpack(code: usize, inputs: usize, hist_len: usize) -> (usize, Vec<usize>) {
    let mut hist = vec![0; hist_len];
    let mut c = code;
    for slot in hist.iter_mut().rev() {
        *slot = c % inputs;
        c /= inputs;
    }
    (c, hist)
}

fn pack(state: usize, hist: &[usize], inputs: usize) -> usize {
    hist.iter().fold(state, |acc, &x| acc * inputs + x)
}

/// Base states possible after `hist` starting from `s`, or `None` if some
/// history input is not admissible at every possible state along the way.
fn reachable_after(base: &UnifilarFsc, s: usize, hist: &[usize]) -> Option<BTreeSet<usize>> {
    let mut set = BTreeSet::from([s]);
    for &x in hist {
        if !set.iter().all(|&r| base.is_admissible(r, x)) {
            return None;
        }
        set = set
            .iter()
            .flat_map(|&r| base.transitions(r, x).map(|(_, _, n)| n))
            .collect();
    }
    Some(set)
}

/// Rewrites `base` under feedback delay `d >= 1`.
pub fn transform(base: &UnifilarFsc, d: usize) -> Result<TransformedChannel> {
    if d == 0 {
        return Err(Error::InvalidDelay(d));
    }
    base.validate().into_result()?;
    if d == 1 {
        return Ok(TransformedChannel {
            base: base.clone(),
            delay: 1,
            channel: base.clone(),
            decode: (0..base.state_count()).map(|s| (s, Vec::new())).collect(),
        });
    }

    let xs = base.input_count();
    let ys = base.output_count();
    let hist_len = d - 1;
    let total = base.state_count() * xs.pow(hist_len as u32);

    // candidate admissible sets per code; None = pruned
    let mut adm: Vec<Option<Vec<usize>>> = (0..total)
        .map(|code| {
            let (s, hist) = unpack(code, xs, hist_len);
            let reach = reachable_after(base, s, &hist)?;
            let a: Vec<usize> = (0..xs)
                .filter(|&x| reach.iter().all(|&r| base.is_admissible(r, x)))
                .collect();
            (!a.is_empty()).then_some(a)
        })
        .collect();

    let next_code = |code: usize, x: usize, y: usize| -> Option<usize> {
        let (s, hist) = unpack(code, xs, hist_len);
        let s_next = base.next_state(s, hist[0], y)?;
        let mut h = hist[1..].to_vec();
        h.push(x);
        Some(pack(s_next, &h, xs))
    };

    // drop inputs that lead into pruned states until nothing changes
    loop {
        let mut changed = false;
        for code in 0..total {
            let Some(a) = adm[code].clone() else { continue };
            let (s, hist) = unpack(code, xs, hist_len);
            let kept: Vec<usize> = a
                .into_iter()
                .filter(|&x| {
                    base.transitions(s, hist[0])
                        .all(|(y, _, _)| next_code(code, x, y).is_some_and(|n| adm[n].is_some()))
                })
                .collect();
            let new = (!kept.is_empty()).then_some(kept);
            if new != adm[code] {
                adm[code] = new;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let kept: Vec<usize> = (0..total).filter(|&c| adm[c].is_some()).collect();
    let mut compact = vec![usize::MAX; total];
    for (i, &c) in kept.iter().enumerate() {
        compact[c] = i;
    }

    let n = kept.len();
    let mut kernel = vec![0.0; n * xs * ys];
    let mut next = vec![None; n * xs * ys];
    let mut admissible = Vec::with_capacity(n);
    let mut decode = Vec::with_capacity(n);
    for (i, &code) in kept.iter().enumerate() {
        let (s, hist) = unpack(code, xs, hist_len);
        let row = base.row(s, hist[0]);
        for x in 0..xs {
            let off = (i * xs + x) * ys;
            kernel[off..off + ys].copy_from_slice(row);
            for y in 0..ys {
                if let Some(nc) = next_code(code, x, y) {
                    if adm[nc].is_some() {
                        next[off + y] = Some(compact[nc]);
                    }
                }
            }
        }
        admissible.push(adm[code].clone().unwrap());
        decode.push((s, hist));
    }

    let base_labels = base.labels();
    let name = |v: &[String], i: usize| v.get(i).cloned().unwrap_or_else(|| i.to_string());
    let labels = Labels {
        states: decode
            .iter()
            .map(|(s, h)| {
                let mut parts = vec![name(&base_labels.states, *s)];
                parts.extend(h.iter().map(|&x| name(&base_labels.inputs, x)));
                format!("({})", parts.join(","))
            })
            .collect(),
        inputs: base_labels.inputs.clone(),
        outputs: base_labels.outputs.clone(),
    };

    let channel =
        UnifilarFsc::from_parts(n, xs, ys, kernel, next, admissible).with_labels(labels);
    debug_assert!(channel.validate().is_valid());
    Ok(TransformedChannel {
        base: base.clone(),
        delay: d,
        channel,
        decode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{make_bsc_rll, make_dec, make_trapdoor, ChannelParams};

    #[test]
    fn trapdoor_delay_two() {
        let tc = transform(&make_trapdoor(), 2).unwrap();
        let c = tc.channel();
        assert_eq!(c.state_count(), 4);
        assert!(c.validate().is_valid());
        let idx = |s, h| tc.encode_state(s, &[h]).unwrap();
        assert_eq!(c.row(idx(0, 0), 0), &[1.0, 0.0]);
        assert_eq!(c.row(idx(0, 1), 1), &[0.5, 0.5]);
        assert_eq!(c.row(idx(1, 0), 0), &[0.5, 0.5]);
        assert_eq!(c.row(idx(1, 1), 0), &[0.0, 1.0]);
        // (s,x1) --x,y--> (s ^ x1 ^ y, x)
        assert_eq!(c.next(idx(0, 1), 1, 1), idx(0, 1));
        assert_eq!(c.next(idx(0, 1), 0, 0), idx(1, 0));
        assert_eq!(tc.decode_state(idx(1, 0)).unwrap(), (1, vec![0]));
    }

    #[test]
    fn delay_one_is_identity() {
        for base in [
            make_trapdoor(),
            make_bsc_rll(ChannelParams::new(0.1).unwrap()),
            make_dec(ChannelParams::new(0.3).unwrap()),
        ] {
            let tc = transform(&base, 1).unwrap();
            assert_eq!(tc.channel(), &base);
            assert_eq!(tc.decode_state(1).unwrap(), (1, vec![]));
        }
    }

    #[test]
    fn bsc_rll_prunes_double_one() {
        let p = 0.2;
        let tc = transform(&make_bsc_rll(ChannelParams::new(p).unwrap()), 2).unwrap();
        let c = tc.channel();
        assert_eq!(c.state_count(), 3);
        assert_eq!(tc.encode_state(1, &[1]), None);
        let s00 = tc.encode_state(0, &[0]).unwrap();
        assert!((c.prob(s00, 0, 0) - (1.0 - p)).abs() < 1e-15);
        for s in [0, 1] {
            let i = tc.encode_state(s, &[1]);
            if let Some(i) = i {
                assert_eq!(c.admissible(i), &[0]);
            }
        }
        assert_eq!(c.admissible(tc.encode_state(0, &[1]).unwrap()), &[0]);
        assert_eq!(c.admissible(s00), &[0, 1]);
    }

    #[test]
    fn dec_delay_three_decodes() {
        let tc = transform(&make_dec(ChannelParams::new(0.5).unwrap()), 3).unwrap();
        assert_eq!(tc.channel().state_count(), 8);
        let i = tc.encode_state(0, &[1, 0]).unwrap();
        assert_eq!(tc.decode_state(i).unwrap(), (0, vec![1, 0]));
        assert!(tc.decode_state(8).is_err());
    }

    #[test]
    fn output_ignores_current_input() {
        for d in 2..=4 {
            let tc = transform(&make_trapdoor(), d).unwrap();
            let c = tc.channel();
            assert_eq!(c.state_count(), 2 * 2usize.pow(d as u32 - 1));
            for s in 0..c.state_count() {
                assert_eq!(c.row(s, 0), c.row(s, 1));
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(transform(&make_trapdoor(), 0), Err(Error::InvalidDelay(0)));
        let broken = UnifilarFsc::from_parts(
            1,
            1,
            2,
            vec![0.5, 0.5],
            vec![Some(0), None],
            vec![vec![0]],
        );
        assert!(matches!(transform(&broken, 2), Err(Error::NotUnifilar { .. })));
    }

    proptest::proptest! {
        #[test]
        fn encode_inverts_decode(kind in 0usize..3, p in 0.0f64..=1.0, d in 1usize..=4) {
            let params = ChannelParams::new(p).unwrap();
            let base = [make_trapdoor(), make_bsc_rll(params), make_dec(params)][kind].clone();
            let tc = transform(&base, d).unwrap();
            for i in 0..tc.channel().state_count() {
                let (s, h) = tc.decode_state(i).unwrap();
                proptest::prop_assert_eq!(h.len(), d - 1);
                proptest::prop_assert_eq!(tc.encode_state(s, &h), Some(i));
            }
        }
    }
}
