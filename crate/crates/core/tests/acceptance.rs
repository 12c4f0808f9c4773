//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stderr (bypassing the test harness capture) and the test fails if any does.

use std::io::Write;
use std::time::{Duration, Instant};

use fscap::app::{run_sweep, Grid, OutputPaths, SweepSpec};
use fscap::channels::{make_trapdoor, UnifilarFsc};
use fscap::delay::transform;
use fscap::dual_mdp::{
    bsc_bound, bsc_certificate, dec_bound, dec_certificate, dec_feedback_capacity, kl_reward,
    relative_value_iteration, trapdoor_certificate, GraphTestDistribution, Reward, RviOpts,
};
use fscap::graph_bounds::{
    lower_bound, monte_carlo_rate, oracle_fixtures, random_policy, rate, rate_gradient, search_lower_bound,
    search_upper_bound, small_graphs, stationary_distribution, trapdoor_encoder, upper_bound, BcjrOpts, UpperOpts,
    BCJR_TOL,
};
use fscap::qgraph::{markov_qgraph, InputPolicy, QGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn report(n: usize, title: &str, limit: Duration, f: impl FnOnce() -> Result<Outcome, String>) -> bool {
    let t = Instant::now();
    let (passed, detail) = match f() {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let elapsed = t.elapsed();
    let in_time = elapsed <= limit;
    let ok = passed && in_time;
    let line = format!(
        "criterion {n} {}: {title}: {detail} [{:.1}s of {:.0}s]",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs_f64()
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    ok
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn criterion_1() -> Result<Outcome, String> {
    let target = 1.5f64.log2();
    let (ch, g, pol) = trapdoor_encoder();
    let lb = lower_bound(&ch, &g, &pol, BCJR_TOL).map_err(e)?.value;
    let b = trapdoor_certificate();
    let v = b.verify(1e-12).map_err(e)?;
    let rho = relative_value_iteration(&b.channel, &b.qgraph, &b.test, &RviOpts::default()).map_err(e)?.rho;
    let passed = (lb - target).abs() <= 1e-12 && v.passed && (rho - target).abs() <= 1e-6;
    Ok(outcome(
        passed,
        format!(
            "lb-log2(3/2)={:.1e}, certificate violation {:.1e}, rvi-log2(3/2)={:.1e}",
            lb - target,
            v.max_violation,
            rho - target
        ),
    ))
}

fn criterion_2() -> Result<Outcome, String> {
    let ch = make_trapdoor();
    let graphs = small_graphs(4, 2);
    let ub = search_upper_bound(&ch, graphs.clone(), &UpperOpts::default()).map_err(e)?.report.value;
    let lb = search_lower_bound(&ch, graphs, 10, &UpperOpts::default(), &BcjrOpts::default())
        .map_err(e)?
        .report
        .value;
    let passed = (0.6941..=0.6943).contains(&ub) && (lb - 0.69424).abs() <= 1e-3;
    Ok(outcome(passed, format!("ub={ub:.10} in [0.6941,0.6943], lb={lb:.10} within 1e-3 of 0.69424")))
}

fn markov_ub(d: usize) -> Result<f64, String> {
    let ch = transform(&make_trapdoor(), d).map_err(e)?.into_channel();
    let graphs: Vec<QGraph> = (1..=3).map(|k| markov_qgraph(k, 2)).collect::<Result<_, _>>().map_err(e)?;
    Ok(search_upper_bound(&ch, graphs, &UpperOpts::default()).map_err(e)?.report.value)
}

fn criterion_3() -> Result<Outcome, String> {
    let (u2, u3, u4) = (markov_ub(2)?, markov_ub(3)?, markov_ub(4)?);
    let (t3, t4) = (0.5782 + 2e-3, 0.5765 + 2e-3);
    let targets = u3 <= t3 && u4 <= t4;
    let fallback = u4 <= u3 + 1e-9 && u3 <= u2 + 1e-9 && (u2 - 0.58496).abs() <= 1e-5 && u4 >= 0.572;
    let detail = format!(
        "ub(d=2)={u2:.6} ub(d=3)={u3:.6} (target {t3:.4}) ub(d=4)={u4:.6} (target {t4:.4}); {}",
        if targets {
            "targets met".to_string()
        } else {
            format!("targets missed, fallback ordering {}", if fallback { "holds" } else { "violated" })
        }
    );
    Ok(outcome(targets || fallback, detail))
}

/// `pi(s|q')` after observing `y` at node `q`, by Bayes' rule over one channel use.
fn bayes_update(ch: &UnifilarFsc, pol: &InputPolicy, pi: &[f64], nodes: usize, q: usize, y: usize) -> Vec<f64> {
    let ns = ch.state_count();
    let mass_q: f64 = (0..ns).map(|s| pi[s * nodes + q]).sum();
    let mut next = vec![0.0; ns];
    for s in 0..ns {
        for x in 0..ch.input_count() {
            let w = pi[s * nodes + q] / mass_q * pol.get(s, q, x) * ch.prob(s, x, y);
            if w > 0.0 {
                next[ch.next(s, x, y)] += w;
            }
        }
    }
    let total: f64 = next.iter().sum();
    next.iter().map(|v| v / total).collect()
}

fn criterion_4() -> Result<Outcome, String> {
    // Rows are nodes 1..4, columns the states (0,0), (0,1), (1,0), (1,1).
    const TABLE: [[f64; 4]; 4] = [
        [1. / 6., 1. / 12., 1. / 36., 1. / 18.],
        [1. / 36., 1. / 18., 0., 1. / 12.],
        [1. / 12., 0., 1. / 18., 1. / 36.],
        [1. / 18., 1. / 36., 1. / 12., 1. / 6.],
    ];
    let tc = transform(&make_trapdoor(), 2).map_err(e)?;
    let (ch, g, pol) = trapdoor_encoder();
    let pi = stationary_distribution(&ch, &g, &pol).map_err(e)?;
    let nq = g.node_count();
    let mut worst: f64 = 0.0;
    for (q, row) in TABLE.iter().enumerate() {
        for (col, want) in row.iter().enumerate() {
            let s = tc.encode_state(col / 2, &[col % 2]).ok_or("state missing")?;
            worst = worst.max((pi[s * nq + q] - want).abs());
        }
    }
    let s00 = tc.encode_state(0, &[0]).ok_or("state missing")?;
    let post = bayes_update(&ch, &pol, &pi, nq, 0, 1)[s00];
    let q2 = g.next(0, 1);
    let mass2: f64 = (0..ch.state_count()).map(|s| pi[s * nq + q2]).sum();
    let cond = pi[s00 * nq + q2] / mass2;
    let passed = worst <= 1e-12 && (post - 1. / 6.).abs() <= 1e-12 && (cond - 1. / 6.).abs() <= 1e-12 && q2 == 1;
    Ok(outcome(passed, format!("max table error {worst:.1e}, Bayes update {post:.12}, pi((0,0)|2) {cond:.12}")))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn sweep_spec(channel: &str, grid: Vec<f64>, methods: &[&str], seed: u64) -> SweepSpec {
    SweepSpec {
        channel: channel.into(),
        delay: 2,
        grid: Grid::Values(grid),
        methods: methods.iter().map(|m| m.to_string()).collect(),
        qgraph: "markov3".into(),
        seed,
        output: OutputPaths::default(),
    }
}

fn criterion_5() -> Result<Outcome, String> {
    let grid = linspace(0.05, 0.45, 20);
    let mut worst_violation: f64 = 0.0;
    let mut range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut analytic = Vec::new();
    for &p in &grid {
        let b = bsc_bound(p).map_err(e)?;
        let r = bsc_certificate(p, b.params).map_err(e)?.verify(1e-9).map_err(e)?;
        if !r.passed || r.checks.len() != 12 {
            return Ok(outcome(false, format!("certificate fails at p={p}: violation {:.1e}", r.max_violation)));
        }
        worst_violation = worst_violation.max(r.max_violation);
        range = (range.0.min(b.value), range.1.max(b.value));
        analytic.push(b.value);
    }
    let out = run_sweep(&sweep_spec("bsc-rll", grid.clone(), &["dual-ub-markov3-d2"], 0), 0).map_err(e)?;
    let mut excess = f64::NEG_INFINITY;
    for (row, a) in out.rows.iter().zip(&analytic) {
        let v = row.value.ok_or_else(|| format!("p={}: {}", row.param, row.status))?;
        excess = excess.max(v - a);
    }
    let passed = worst_violation <= 1e-9 && range.1 <= 0.6942 && range.0 >= 0.0 && excess <= 1e-6;
    Ok(outcome(
        passed,
        format!(
            "20 certificates verify (max {:.1e}), bound in [{:.6}, {:.6}], max numeric-analytic {:.2e}",
            worst_violation, range.0, range.1, excess
        ),
    ))
}

fn criterion_6() -> Result<Outcome, String> {
    let (f0, f1) = (dec_feedback_capacity(0.0).map_err(e)?.value, dec_feedback_capacity(1.0).map_err(e)?.value);
    let b = dec_bound().map_err(e)?;
    let fb = dec_feedback_capacity(0.5).map_err(e)?.value;
    let cert = dec_certificate(b.a).map_err(e)?.verify(1e-8).map_err(e)?;
    let grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let out = run_sweep(&sweep_spec("dec", grid, &["dec-fb", "dual-ub-appendixC-d2"], 0), 0).map_err(e)?;
    let mut min_gap = f64::INFINITY;
    for pair in out.rows.chunks(2) {
        let (f, u) = (pair[0].value.ok_or(&pair[0].status)?, pair[1].value.ok_or(&pair[1].status)?);
        min_gap = min_gap.min(f - u);
    }
    let passed = f0 == 1.0 && f1 == 0.0 && b.value < fb && cert.passed && min_gap > 0.0;
    Ok(outcome(
        passed,
        format!(
            "fb(0)={f0} fb(1)={f1}, bound {:.10} < fb(0.5) {:.10} (gap {:.2e}), certificate violation {:.1e} on {} pairs, min curve gap {:.2e}",
            b.value,
            fb,
            fb - b.value,
            cert.max_violation,
            cert.checks.len(),
            min_gap
        ),
    ))
}

fn random_channel(rng: &mut ChaCha8Rng) -> UnifilarFsc {
    let (ns, nx, ny) = (rng.gen_range(1..=3), 2, 2);
    let mut kernel = Vec::new();
    let mut next = Vec::new();
    for _ in 0..ns * nx {
        let a: f64 = rng.gen_range(0.05..0.95);
        kernel.extend([a, 1.0 - a]);
        for _ in 0..ny {
            next.push(Some(rng.gen_range(0..ns)));
        }
    }
    UnifilarFsc::from_parts(ns, nx, ny, kernel, next, vec![vec![0, 1]; ns])
}

fn criterion_7() -> Result<Outcome, String> {
    let mut notes = Vec::new();
    let mut passed = true;

    // Gradient against central differences along e_i - e_j within each row.
    let fixtures = oracle_fixtures(11);
    let mut worst_rel: f64 = 0.0;
    let mut checked = 0usize;
    for (ch, g, pol) in &fixtures {
        let grad = rate_gradient(ch, g, pol).map_err(e)?;
        let nx = ch.input_count();
        for s in 0..ch.state_count() {
            let adm = ch.admissible(s);
            if adm.len() < 2 {
                continue;
            }
            for q in 0..g.node_count() {
                let (i, j) = (adm[0], adm[1]);
                let h = 1e-6;
                let row = pol.row(s, q);
                if row[i].min(row[j]) < 1e-4 {
                    continue;
                }
                checked += 1;
                let shifted = |sign: f64| {
                    let mut p = pol.clone();
                    p.row_mut(s, q)[i] += sign * h;
                    p.row_mut(s, q)[j] -= sign * h;
                    rate(ch, g, &p)
                };
                let fd = (shifted(1.0).map_err(e)? - shifted(-1.0).map_err(e)?) / (2.0 * h);
                let z = s * g.node_count() + q;
                let an = grad[z * nx + i] - grad[z * nx + j];
                worst_rel = worst_rel.max((fd - an).abs() / an.abs().max(1e-3));
            }
        }
    }
    passed &= worst_rel <= 1e-5 && checked > 0;
    notes.push(format!("gradient rel err {worst_rel:.1e} over {checked} directions"));

    // KL rewards are nonnegative and vanish when the test law equals the channel row.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kl_min = f64::INFINITY;
    let mut kl_zero: f64 = 0.0;
    for _ in 0..200 {
        let ch = random_channel(&mut rng);
        let t0: f64 = rng.gen_range(0.0..=1.0);
        let t = GraphTestDistribution::binary(&[t0]).map_err(e)?;
        for s in 0..ch.state_count() {
            for x in 0..2 {
                if let Reward::Finite(v) = kl_reward(&ch, &t, s, x, 0).map_err(e)? {
                    kl_min = kl_min.min(v);
                }
                let own = GraphTestDistribution::binary(&[ch.prob(s, x, 0)]).map_err(e)?;
                kl_zero = kl_zero.max(kl_reward(&ch, &own, s, x, 0).map_err(e)?.finite().unwrap_or(f64::INFINITY).abs());
            }
        }
    }
    passed &= kl_min >= -1e-15 && kl_zero <= 1e-12;
    notes.push(format!("KL min {kl_min:.1e}"));

    // Any policy's rate stays below the graph's upper bound.
    let graphs = small_graphs(3, 2);
    let mut checked = 0;
    let mut worst_gap = f64::INFINITY;
    let mut seed = 0u64;
    while checked < 50 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        seed += 1;
        let ch = random_channel(&mut rng);
        let g = &graphs[rng.gen_range(0..graphs.len())];
        let pol = random_policy(&ch, g, &mut rng);
        let (Ok(ub), Ok(r)) = (upper_bound(&ch, g, &UpperOpts::quick()), rate(&ch, g, &pol)) else { continue };
        worst_gap = worst_gap.min(ub.value - r);
        checked += 1;
    }
    passed &= worst_gap >= -1e-9;
    notes.push(format!("sandwich 50 instances, min ub-rate {worst_gap:.1e}"));

    // Exact rate inside the 95% batch-means interval; fixture i uses seed i.
    let mut inside = 0;
    for (i, (ch, g, pol)) in fixtures.iter().enumerate() {
        let exact = rate(ch, g, pol).map_err(e)?;
        if monte_carlo_rate(ch, g, pol, 200_000, i as u64).map_err(e)?.contains(exact) {
            inside += 1;
        }
    }
    passed &= inside == fixtures.len();
    notes.push(format!("Monte Carlo {inside}/{} inside CI", fixtures.len()));

    // Identical spec and seed give identical CSV apart from runtimes.
    let spec = sweep_spec("bsc-rll", vec![0.1, 0.25, 0.4], &["analytic-thm", "dual-ub-markov2-d2"], 5);
    let strip = |csv: String| -> Vec<String> {
        csv.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(5);
                f.join(",")
            })
            .collect()
    };
    let a = strip(run_sweep(&spec, 1).map_err(e)?.csv());
    let b = strip(run_sweep(&spec, 2).map_err(e)?.csv());
    passed &= a == b;
    notes.push(format!("sweep determinism {}", if a == b { "ok" } else { "differs" }));

    Ok(outcome(passed, notes.join(", ")))
}

#[test]
fn acceptance() {
    let minutes = |m: u64| Duration::from_secs(60 * m);
    let results = [
        report(1, "trapdoor delay-2 capacity", Duration::from_secs(1), criterion_1),
        report(2, "trapdoor feedback capacity bounds", minutes(10), criterion_2),
        report(3, "trapdoor delay-3/4 upper bounds", minutes(60), criterion_3),
        report(4, "stationary table and BCJR spot value", Duration::from_secs(1), criterion_4),
        report(5, "BSC analytic bound", minutes(30), criterion_5),
        report(6, "dicode erasure channel", minutes(10), criterion_6),
        report(7, "property suites", minutes(30), criterion_7),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
