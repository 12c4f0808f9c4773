//! Closed-form certificates for the trapdoor, input-constrained BSC and
//! dicode erasure channels, all under feedback delayed by two steps.

use serde::{Deserialize, Serialize};

use super::optim::{golden_min, nelder_mead};
use super::{verify_certificate, BellmanCertificate, CertificateJson, GraphTestDistribution, MdpSpec, Reward, TestJson, VerificationReport};
use crate::channels::{make_bsc_rll, make_dec, make_trapdoor, ChannelJson, ChannelParams, UnifilarFsc};
use crate::delay::{transform, TransformedChannel};
use crate::error::{Error, Result};
use crate::info::binary_entropy;
use crate::qgraph::{appendix_a_qgraph, appendix_c_qgraph, markov_qgraph, QGraph, QGraphJson};

/// Everything needed to re-check a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateBundle {
    pub name: String,
    pub channel: UnifilarFsc,
    pub qgraph: QGraph,
    pub test: GraphTestDistribution,
    pub certificate: BellmanCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleJson {
    pub name: String,
    pub channel: ChannelJson,
    pub qgraph: QGraphJson,
    pub test: TestJson,
    pub certificate: CertificateJson,
}

impl CertificateBundle {
    pub fn verify(&self, tol: f64) -> Result<VerificationReport> {
        verify_certificate(&self.channel, &self.qgraph, &self.test, &self.certificate, tol)
    }

    pub fn to_json(&self) -> BundleJson {
        BundleJson {
            name: self.name.clone(),
            channel: self.channel.to_json(),
            qgraph: self.qgraph.to_json(),
            test: self.test.to_json(),
            certificate: self.certificate.to_json(),
        }
    }

    pub fn from_json(j: &BundleJson) -> Result<Self> {
        Ok(Self {
            name: j.name.clone(),
            channel: UnifilarFsc::from_json(&j.channel)?,
            qgraph: QGraph::from_json(&j.qgraph)?,
            test: GraphTestDistribution::from_json(&j.test)?,
            certificate: BellmanCertificate::from_json(&j.certificate)?,
        })
    }
}

fn state_of(tc: &TransformedChannel, s: usize, last: usize) -> usize {
    tc.encode_state(s, &[last]).expect("extended state exists")
}

/// Smallest input attaining `max_x [g + E h]`, or `None` where undefined.
fn greedy_policy(mdp: &MdpSpec, h: &[Option<f64>]) -> Vec<Option<usize>> {
    (0..mdp.size())
        .map(|z| {
            let mut best: Option<(f64, usize)> = None;
            for x in mdp.actions(z) {
                let Some(Reward::Finite(r)) = mdp.reward(z, x) else { return None };
                let mut v = r;
                for &(n, p) in mdp.successors(z, x) {
                    v += p * h[n]?;
                }
                if best.map_or(true, |b| v > b.0 + 1e-12) {
                    best = Some((v, x));
                }
            }
            best.map(|b| b.1)
        })
        .collect()
}

/// Trapdoor with delay 2, first-order Markov graph, `T(0|q) = [2/3, 1/3]`,
/// `rho = log2(3/2)` and `h = 1` at `((0,0), q=1)` and `((1,1), q=0)`.
pub fn trapdoor_certificate() -> CertificateBundle {
    let tc = transform(&make_trapdoor(), 2).expect("trapdoor is unifilar");
    let g = markov_qgraph(1, 2).expect("static graph");
    let test = GraphTestDistribution::binary(&[2.0 / 3.0, 1.0 / 3.0]).expect("static table");
    let nq = g.node_count();
    let ns = tc.channel().state_count();
    let mut h = vec![0.0; ns * nq];
    h[state_of(&tc, 0, 0) * nq + 1] = 1.0;
    h[state_of(&tc, 1, 1) * nq] = 1.0;
    let certificate = BellmanCertificate::full(1.5f64.log2(), ns, nq, h, vec![0; ns * nq]).expect("shapes match");
    CertificateBundle { name: "trapdoorA".into(), channel: tc.into_channel(), qgraph: g, test, certificate }
}

struct Logs {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    ab: f64,
    bb: f64,
    cb: f64,
    db: f64,
}

impl Logs {
    fn new(v: [f64; 4]) -> Self {
        let l = |x: f64| x.log2();
        Self {
            a: l(v[0]),
            b: l(v[1]),
            c: l(v[2]),
            d: l(v[3]),
            ab: l(1.0 - v[0]),
            bb: l(1.0 - v[1]),
            cb: l(1.0 - v[2]),
            db: l(1.0 - v[3]),
        }
    }

    /// `log2(abar b c dbar / (a bbar cbar d))`.
    fn k(&self) -> f64 {
        self.ab + self.b + self.c + self.db - self.a - self.bb - self.cb - self.d
    }
}

fn bsc_rho_logs(p: f64, l: &Logs) -> f64 {
    let (p2, p3) = (p * p, p * p * p);
    -binary_entropy(p) + (p3 - 3.0 * p2 + 3.0 * p - 1.0) * l.a + (p3 - p2) * (l.bb + l.cb + l.d)
        - (p3 - 2.0 * p2 + p) * (l.ab + l.b + l.c)
        - p3 * l.db
}

fn bsc_constraints_logs(p: f64, l: &Logs) -> [f64; 2] {
    let (p2, p3) = (p * p, p * p * p);
    let c1 = (4.0 * p3 - 12.0 * p2 + 11.0 * p - 3.0) * l.a + (4.0 * p3 - 6.0 * p2 + 2.0 * p) * (l.bb + l.d)
        + (4.0 * p3 - 4.0 * p2 + p) * l.cb
        - (4.0 * p3 - 8.0 * p2 + 5.0 * p - 1.0) * (l.ab + l.c)
        - (4.0 * p3 - 10.0 * p2 + 6.0 * p - 1.0) * l.b
        - (4.0 * p3 - 2.0 * p2) * l.db;
    let c2 = (4.0 * p3 - 10.0 * p2 + 8.0 * p - 2.0) * l.a + (4.0 * p3 - 4.0 * p2 + p) * (l.bb + l.d)
        + (4.0 * p3 - 2.0 * p2 - 2.0 * p + 1.0) * l.cb
        - (4.0 * p3 - 6.0 * p2 + 2.0 * p) * (l.ab + l.c)
        - (4.0 * p3 - 8.0 * p2 + 5.0 * p - 1.0) * l.b
        - (4.0 * p3 - p) * l.db;
    [c1, c2]
}

/// The BSC bound objective `rho(p; a, b, c, d)` in bits.
pub fn bsc_rho(p: f64, params: [f64; 4]) -> f64 {
    bsc_rho_logs(p, &Logs::new(params))
}

/// Base-2 logarithms of the two constraint ratios; feasible iff both are `>= 0`.
pub fn bsc_constraints(p: f64, params: [f64; 4]) -> [f64; 2] {
    bsc_constraints_logs(p, &Logs::new(params))
}

/// `h` for last input 0 (`q`-indexed) and last input 1.
fn bsc_values(p: f64, l: &Logs) -> ([f64; 4], [f64; 4]) {
    let (p2, p3) = (p * p, p * p * p);
    let k = l.k();
    let v1 = p * l.cb + l.d + p * l.db + (1.0 - 2.0 * p) * l.c - 2.0 * p * l.ab - p * l.b - (2.0 - 3.0 * p) * l.a + p2 * k;
    let v2 = l.d - l.b + p * (l.b + l.db - l.bb - l.d);
    let v3 = (2.0 * p - 1.0) * l.a + l.d + p * l.db - p * (l.ab + l.b + l.c) + p2 * k;
    let w1 = (6.0 * p2 - 6.0 * p + 1.0) * l.a + (2.0 * p2 - p) * l.bb + 2.0 * p2 * l.cb + (2.0 * p2 - p + 1.0) * l.d
        + p * l.db
        - (4.0 * p2 - 2.0 * p + 1.0) * l.ab
        - (4.0 * p2 - 3.0 * p + 1.0) * l.b
        - (4.0 * p2 - 2.0 * p) * l.c
        + 2.0 * p3 * k;
    let w2 = (5.0 * p2 - 4.0 * p + 1.0) * l.a + p * (l.ab + l.c + l.d) + p2 * (l.bb + l.cb + l.d + l.db)
        - (1.0 - p) * l.bb
        - 3.0 * p2 * (l.ab + l.b + l.c)
        + 2.0 * p3 * k;
    let w3 = (6.0 * p2 - 5.0 * p + 1.0) * l.a + (2.0 * p2 - p) * l.bb + (2.0 * p2 + p - 1.0) * l.cb
        + (2.0 * p2 - p + 1.0) * l.d
        + p * l.db
        - (4.0 * p2 - p) * l.ab
        - (4.0 * p2 - 3.0 * p + 1.0) * l.b
        - (4.0 * p2 - p) * l.c
        + 2.0 * p3 * k;
    let w4 = (5.0 * p2 - 4.0 * p + 1.0) * l.a + p2 * (l.bb + l.cb + l.d + l.db)
        - (3.0 * p2 - p) * (l.ab + l.b + l.c)
        - (1.0 - p) * l.db
        + 2.0 * p3 * k;
    ([v1, v2, v3, 0.0], [w1, w2, w3, w4])
}

fn check_open_unit(name: &str, v: f64, hi: f64) -> Result<()> {
    if v > 0.0 && v < hi {
        Ok(())
    } else {
        Err(Error::ParameterOutOfRange(format!("{name} = {v} not in (0, {hi})")))
    }
}

/// Input-constrained BSC with delay 2 on the 4-node graph, `T(0|q) = [a, b, c, d]`.
/// The policy is the greedy maximizer under the closed-form `h`.
pub fn bsc_certificate(p: f64, params: [f64; 4]) -> Result<CertificateBundle> {
    check_open_unit("p", p, 1.0)?;
    for (n, v) in ["a", "b", "c", "d"].iter().zip(params) {
        check_open_unit(n, v, 1.0)?;
    }
    let l = Logs::new(params);
    for (i, &c) in bsc_constraints_logs(p, &l).iter().enumerate() {
        if c < 0.0 {
            return Err(Error::ConstraintViolated { index: i + 1, value: c });
        }
    }
    let tc = transform(&make_bsc_rll(ChannelParams::new(p)?), 2)?;
    let g = appendix_a_qgraph();
    let test = GraphTestDistribution::binary(&params)?;
    let (zero, one) = bsc_values(p, &l);
    let (ns, nq) = (tc.channel().state_count(), g.node_count());
    let mut h = vec![0.0; ns * nq];
    for s in 0..ns {
        let (_, hist) = tc.decode_state(s)?;
        let row = if hist[0] == 1 { &one } else { &zero };
        h[s * nq..(s + 1) * nq].copy_from_slice(row);
    }
    let channel = tc.into_channel();
    let mdp = MdpSpec::new(&channel, &g, &test)?;
    let hs: Vec<Option<f64>> = h.iter().copied().map(Some).collect();
    let policy = greedy_policy(&mdp, &hs);
    let certificate = BellmanCertificate {
        rho: bsc_rho_logs(p, &l),
        states: ns,
        nodes: nq,
        h: hs,
        policy,
        support: (0..ns * nq).collect(),
    };
    Ok(CertificateBundle { name: format!("bscB:p={p}"), channel, qgraph: g, test, certificate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BscBound {
    pub p: f64,
    pub value: f64,
    /// `(a, b, c, d)`.
    pub params: [f64; 4],
    /// Constraint log-ratios at `params`, both `>= 0`.
    pub constraints: [f64; 2],
}

const BSC_STARTS: usize = 3;

/// Minimizes `bsc_rho` over the feasible set: grid of step 0.02, then
/// Nelder-Mead on logit coordinates with a shrinking log barrier.
pub fn bsc_bound(p: f64) -> Result<BscBound> {
    check_open_unit("p", p, 1.0)?;
    let grid: Vec<f64> = (0..50).map(|i| 0.01 + 0.02 * i as f64).collect();
    let mut best: Vec<(f64, [f64; 4])> = Vec::new();
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                for &d in &grid {
                    let v = [a, b, c, d];
                    let l = Logs::new(v);
                    let [c1, c2] = bsc_constraints_logs(p, &l);
                    if c1 <= 0.0 || c2 <= 0.0 {
                        continue;
                    }
                    let r = bsc_rho_logs(p, &l);
                    if best.len() < BSC_STARTS || r < best[BSC_STARTS - 1].0 {
                        best.push((r, v));
                        best.sort_by(|x, y| x.0.total_cmp(&y.0));
                        best.truncate(BSC_STARTS);
                    }
                }
            }
        }
    }
    if best.is_empty() {
        return Err(Error::NoFeasiblePoint);
    }
    let sigmoid = |u: f64| 1.0 / (1.0 + (-u).exp());
    let to_params = |u: &[f64]| [sigmoid(u[0]), sigmoid(u[1]), sigmoid(u[2]), sigmoid(u[3])];
    let mut out: Option<BscBound> = None;
    for (_, start) in best {
        let mut u: Vec<f64> = start.iter().map(|&x| (x / (1.0 - x)).ln()).collect();
        let mut mu = 1e-3;
        while mu >= 1e-13 {
            let barrier = |u: &[f64]| {
                let l = Logs::new(to_params(u));
                let [c1, c2] = bsc_constraints_logs(p, &l);
                if !(c1 > 0.0 && c2 > 0.0) {
                    return 1e10;
                }
                bsc_rho_logs(p, &l) - mu * (c1.ln() + c2.ln())
            };
            for scale in [0.05, 0.005] {
                u = nelder_mead(barrier, &u, scale, 4000)?.0;
            }
            mu *= 0.1;
        }
        let params = to_params(&u);
        let constraints = bsc_constraints(p, params);
        if constraints.iter().any(|&c| c < 0.0) {
            continue;
        }
        let value = bsc_rho(p, params);
        if out.as_ref().map_or(true, |b| value < b.value) {
            out = Some(BscBound { p, value, params, constraints });
        }
    }
    out.ok_or(Error::NoFeasiblePoint)
}

/// `gamma_1(a)` and `gamma_2(a)` of the dicode test distribution.
pub fn dec_gammas(a: f64) -> (f64, f64) {
    let ab = 1.0 - a;
    let g1 = ((2.0 - 4.0 * a) * (a * a + 0.25).sqrt() + 4.0 * a * ab - 1.0) / (4.0 * a);
    let g2 = ((4.0 * a * a - 4.0 * a + 1.0) * (1.0 + 4.0 * a * a).sqrt() - 8.0 * a * a * ab + 1.0) / (4.0 - 6.0 * a);
    (g1, g2)
}

/// The dicode bound objective with `sqrt(1 + 4 a^exponent)` under the root;
/// the bound statement prints exponent 3, the gamma formulas use exponent 2.
pub fn dec_rho(a: f64, exponent: i32) -> f64 {
    let ab = 1.0 - a;
    let root = (1.0 + 4.0 * a.powi(exponent)).sqrt();
    0.25 * ((2.0 - 3.0 * a) / ((1.0 - 2.0 * a) * (1.0 + 8.0 * a * a * ab - 3.0 * a - (1.0 - 4.0 * a * ab) * root))).log2()
}

/// Which `h` table to use for the dicode certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecValueFunction {
    /// As printed, including the entries at `((0,1), q=0)` and `((1,0), q in {2,3,7})`.
    AsPrinted,
    /// With `((0,1), 0) = 1/4 log2(a (1-2a)^2 / (1-2g1)^3)` and
    /// `((1,0), {2,3,7}) = 1/4 log2(g2 (1-2a) / (a (1-2g2)))`.
    Corrected,
}

/// `h[s][q]` with `s` in order `(0,0), (0,1), (1,0), (1,1)` and 0-based `q`.
fn dec_values(a: f64, which: DecValueFunction) -> [[f64; 8]; 4] {
    let (g1, g2) = dec_gammas(a);
    let l = |x: f64| x.log2();
    let (m, m1, m2) = (1.0 - 2.0 * a, 1.0 - 2.0 * g1, 1.0 - 2.0 * g2);
    let mut h = [[0.0; 8]; 4];
    let mut set = |s: usize, qs: &[usize], v: f64| {
        for &q in qs {
            h[s][q - 1] = v;
        }
    };
    set(0, &[1, 6], 0.25 * l(a * m * g2 / (4.0 * m2 * g1 * g1)));
    set(0, &[2, 5, 7], 0.25 * l(4.0 * a * g1 * g1 * g2 / (m * m2.powi(3))));
    set(0, &[3, 4, 8], 0.25 * l(4.0 * a * g1 * g1 * g2 / (m.powi(3) * m2)));
    let v01 = match which {
        DecValueFunction::AsPrinted => 0.25 * l(a * (1.0 - 2.0 * a * a) / m1.powi(3)),
        DecValueFunction::Corrected => 0.25 * l(a * m * m / m1.powi(3)),
    };
    set(1, &[1], v01);
    set(1, &[2, 5, 7], 0.25 * l(a * m * m / (g2 * g2 * m1)));
    set(1, &[3, 4, 8], 0.25 * l(m * m / (a * m1)));
    set(1, &[6], 0.25 * l(a * m * m / m1));
    set(2, &[1], 0.25 * l(a * g2 * m / m2));
    set(2, &[2, 5, 7], 0.25 * l(a * m / (g2 * m2)));
    let v10 = match which {
        DecValueFunction::AsPrinted => 0.25 * l(a * m2 / (g2 * m)),
        DecValueFunction::Corrected => 0.25 * l(g2 * m / (a * m2)),
    };
    set(2, &[3, 4, 8], v10);
    set(2, &[6], 0.25 * l(a * g2 * m / (m1 * m1 * m2)));
    set(3, &[1], l(m / (2.0 * g1)));
    set(3, &[2, 5, 7], 0.5 * l(m / m2));
    set(3, &[3, 4, 8], 0.0);
    set(3, &[6], 0.25 * l(a * m * m / (4.0 * g1 * g1 * m1)));
    h
}

/// `T(y|q)` over `[-1, 0, 1, ?]` for the 8-node graph.
fn dec_test(a: f64) -> Result<GraphTestDistribution> {
    let (g1, g2) = dec_gammas(a);
    let mid = |g: f64| vec![g / 2.0, 0.5 - g, g / 2.0, 0.5];
    let rows = vec![
        vec![0.0, g1, 0.5 - g1, 0.5],
        mid(g2),
        mid(a),
        mid(a),
        mid(g2),
        vec![0.5 - g1, g1, 0.0, 0.5],
        mid(g2),
        mid(a),
    ];
    GraphTestDistribution::from_rows(&rows)
}

/// Dicode erasure channel (`p = 0.5`) with delay 2 on the 8-node graph, with
/// the chosen `rho` exponent and `h` table. The support is the recurrent
/// class of the safe `(s, q)` pairs.
pub fn dec_certificate_with(a: f64, exponent: i32, which: DecValueFunction) -> Result<CertificateBundle> {
    check_open_unit("a", a, 0.5)?;
    let (g1, g2) = dec_gammas(a);
    check_open_unit("gamma_1", g1, 0.5)?;
    check_open_unit("gamma_2", g2, 0.5)?;
    let tc = transform(&make_dec(ChannelParams::new(0.5)?), 2)?;
    let g = appendix_c_qgraph();
    let test = dec_test(a)?;
    let values = dec_values(a, which);
    let (ns, nq) = (tc.channel().state_count(), g.node_count());
    let mut h = vec![None; ns * nq];
    let mut policy = vec![Some(0); ns * nq];
    for s in 0..ns {
        let (first, hist) = tc.decode_state(s)?;
        let row = &values[2 * first + hist[0]];
        for q in 0..nq {
            h[s * nq + q] = Some(row[q]);
        }
    }
    policy[state_of(&tc, 1, 1) * nq] = Some(1);
    let channel = tc.into_channel();
    let mdp = MdpSpec::new(&channel, &g, &test)?;
    let mut support: Vec<usize> = mdp.recurrent_classes().concat();
    support.sort_unstable();
    let certificate = BellmanCertificate { rho: dec_rho(a, exponent), states: ns, nodes: nq, h, policy, support };
    Ok(CertificateBundle { name: format!("decC:a={a}"), channel, qgraph: g, test, certificate })
}

/// [`dec_certificate_with`] using exponent 2 and the corrected `h`.
pub fn dec_certificate(a: f64) -> Result<CertificateBundle> {
    dec_certificate_with(a, 2, DecValueFunction::Corrected)
}

const DEC_LO: f64 = 1e-6;
const DEC_HI: f64 = 0.5 - 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecBound {
    /// Minimizer and minimum of the exponent-2 objective.
    pub a: f64,
    pub value: f64,
    /// Max Bellman violation of the exponent-2 certificate at `a`.
    pub violation: f64,
    /// Minimizer and minimum of the exponent-3 objective as printed.
    pub printed_a: f64,
    pub printed_value: f64,
    /// Max Bellman violation when `rho` uses exponent 3 at `printed_a`.
    pub printed_violation: f64,
}

/// Tightest certified dicode bound at `p = 0.5`: the certificate holds for
/// every `a`, so the objective is minimized over `[1e-6, 0.5 - 1e-6]`.
pub fn dec_bound() -> Result<DecBound> {
    let (a, value) = golden_min(|a| dec_rho(a, 2), DEC_LO, DEC_HI, 1e-10)?;
    let (printed_a, printed_value) = golden_min(|a| dec_rho(a, 3), DEC_LO, DEC_HI, 1e-10)?;
    let violation = dec_certificate(a)?.verify(1e-8)?.max_violation;
    let printed_violation = dec_certificate_with(printed_a, 3, DecValueFunction::Corrected)?
        .verify(1e-8)?
        .max_violation;
    Ok(DecBound { a, value, violation, printed_a, printed_value, printed_violation })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCapacity {
    pub p: f64,
    pub value: f64,
    pub epsilon: f64,
}

/// `max_e (1-p)(e + p H2(e)) / (p + (1-p) e)` over `e in [0, 1]`.
pub fn dec_feedback_capacity(p: f64) -> Result<FeedbackCapacity> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::ParameterOutOfRange(format!("p = {p} not in [0, 1]")));
    }
    if p == 0.0 {
        return Ok(FeedbackCapacity { p, value: 1.0, epsilon: 1.0 });
    }
    if p == 1.0 {
        return Ok(FeedbackCapacity { p, value: 0.0, epsilon: 0.0 });
    }
    let f = |e: f64| (1.0 - p) * (e + p * binary_entropy(e)) / (p + (1.0 - p) * e);
    let (e, v) = golden_min(|e| -f(e), 0.0, 1.0, 1e-10)?;
    let (value, epsilon) = if f(1.0) >= -v { (f(1.0), 1.0) } else { (-v, e) };
    Ok(FeedbackCapacity { p, value, epsilon })
}
