use super::*;
use crate::channels::{make_bsc_rll, ChannelParams};
use crate::qgraph::markov_qgraph;
use approx::assert_abs_diff_eq;

fn single_node(outputs: usize) -> QGraph {
    QGraph::new(1, outputs, vec![0; outputs]).unwrap()
}

#[test]
fn trapdoor_encoder_rate_and_outputs() {
    let (ch, g, p) = trapdoor_encoder();
    assert_abs_diff_eq!(rate(&ch, &g, &p).unwrap(), 1.5f64.log2(), epsilon = 1e-12);
    let py = output_given_node(&ch, &g, &p).unwrap();
    for (q, want) in [2. / 3., 1. / 3., 2. / 3., 1. / 3.].iter().enumerate() {
        assert_abs_diff_eq!(py[q][0], want, epsilon = 1e-12);
    }
    assert!(bcjr_residual(&ch, &g, &p).unwrap() <= 1e-12);
    let lb = lower_bound(&ch, &g, &p, BCJR_TOL).unwrap();
    assert_eq!(lb.kind, BoundKind::Lower);
    assert!(lb.stationarity_residual <= 1e-12);
}

#[test]
fn perturbed_encoder_is_not_bcjr() {
    let (ch, g, p) = trapdoor_encoder();
    let mut t = p.as_slice().to_vec();
    // P(.|s=(0,0), q=1): 2/3 -> 2/3 + 0.05
    t[0] += 0.05;
    t[1] -= 0.05;
    let bad = InputPolicy::from_table(4, 4, 2, t).unwrap();
    assert!(matches!(lower_bound(&ch, &g, &bad, BCJR_TOL), Err(Error::NotBcjrInvariant(_))));
}

#[test]
fn uniform_policy_is_bcjr_on_second_order_graph() {
    // i.i.d. uniform inputs make the state belief a function of the last two outputs
    let (ch, g, _) = trapdoor_encoder();
    let u = InputPolicy::uniform(&ch, &g);
    assert!(bcjr_residual(&ch, &g, &u).unwrap() <= 1e-12);
    let lb = lower_bound(&ch, &g, &u, BCJR_TOL).unwrap();
    assert!(lb.value < 1.5f64.log2());
}

#[test]
fn memoryless_collapse() {
    let bsc = UnifilarFsc::from_parts(1, 2, 2, vec![0.9, 0.1, 0.1, 0.9], vec![Some(0); 4], vec![vec![0, 1]]);
    let g = single_node(2);
    let p = InputPolicy::uniform(&bsc, &g);
    let want = 1.0 - crate::info::binary_entropy(0.1);
    assert_abs_diff_eq!(rate(&bsc, &g, &p).unwrap(), want, epsilon = 1e-14);
    let ub = upper_bound(&bsc, &g, &UpperOpts::quick()).unwrap();
    assert_abs_diff_eq!(ub.value, want, epsilon = 1e-9);
}

#[test]
fn output_determined_state_has_zero_residual() {
    let one_state = UnifilarFsc::from_parts(1, 2, 2, vec![0.8, 0.2, 0.4, 0.6], vec![Some(0); 4], vec![vec![0, 1]]);
    let g = single_node(2);
    let p = InputPolicy::from_fn(&one_state, &g, |_, _, x| if x == 0 { 0.3 } else { 0.7 });
    assert_eq!(bcjr_residual(&one_state, &g, &p).unwrap(), 0.0);
    // noiseless RLL tracked by the last output: the node pins the state
    let ch = make_bsc_rll(ChannelParams::new(0.0).unwrap());
    let g = markov_qgraph(1, 2).unwrap();
    let p = InputPolicy::from_fn(&ch, &g, |s, _, x| match (s, x) {
        (0, 0) => 0.3,
        (0, _) => 0.7,
        (_, 0) => 1.0,
        _ => 0.0,
    });
    assert!(bcjr_residual(&ch, &g, &p).unwrap() <= 1e-15);
}

#[test]
fn upper_bound_trapdoor_delay_two() {
    let (ch, g, p) = trapdoor_encoder();
    let ub = upper_bound(&ch, &g, &UpperOpts { starts: 4, ..UpperOpts::default() }).unwrap();
    assert!((ub.value - 1.5f64.log2()).abs() < 1e-6, "{}", ub.value);
    assert!(ub.value >= rate(&ch, &g, &p).unwrap() - 1e-9);
}

#[test]
fn bcjr_search_keeps_fixed_point() {
    let (ch, g, p) = trapdoor_encoder();
    let s = find_bcjr_policy(&ch, &g, &p, &BcjrOpts::default()).unwrap();
    assert_eq!(s.iterations, 0);
    assert_eq!(s.policy, p);
}

#[test]
fn gradient_matches_finite_differences() {
    let ch = make_bsc_rll(ChannelParams::new(0.2).unwrap());
    let tc = transform(&ch, 2).unwrap();
    let g = markov_qgraph(2, 2).unwrap();
    let p = InputPolicy::from_fn(tc.channel(), &g, |s, q, x| {
        let adm = tc.channel().admissible(s);
        if !adm.contains(&x) {
            0.0
        } else if adm.len() == 1 {
            1.0
        } else {
            let a = 0.2 + 0.1 * ((s + 2 * q) % 5) as f64;
            if x == 0 { a } else { 1.0 - a }
        }
    });
    let grad = rate_gradient(tc.channel(), &g, &p).unwrap();
    let h = 1e-6;
    for z in 0..p.state_count() * p.node_count() {
        let (s, q) = (z / g.node_count(), z % g.node_count());
        if tc.channel().admissible(s).len() < 2 {
            continue;
        }
        let mut plus = p.clone();
        plus.row_mut(s, q)[0] += h;
        plus.row_mut(s, q)[1] -= h;
        let mut minus = p.clone();
        minus.row_mut(s, q)[0] -= h;
        minus.row_mut(s, q)[1] += h;
        let fd = (rate(tc.channel(), &g, &plus).unwrap() - rate(tc.channel(), &g, &minus).unwrap()) / (2.0 * h);
        let an = grad[z * 2] - grad[z * 2 + 1];
        assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "z={z}: fd {fd} vs {an}");
    }
}

#[test]
fn zero_budget_search_does_not_converge() {
    let (ch, g, p) = trapdoor_encoder();
    let mut t = p.as_slice().to_vec();
    t[0] += 0.05;
    t[1] -= 0.05;
    let bad = InputPolicy::from_table(4, 4, 2, t).unwrap();
    let opts = BcjrOpts { max_iter: 0, ..BcjrOpts::default() };
    match find_bcjr_policy(&ch, &g, &bad, &opts) {
        Err(Error::DidNotConverge { residual, iterations }) => {
            assert!(residual > 1e-3);
            assert_eq!(iterations, 0);
        }
        other => panic!("expected DidNotConverge, got {other:?}"),
    }
}

#[test]
fn monte_carlo_agrees_with_rate() {
    let mut inside = 0;
    let fixtures = oracle_fixtures(11);
    for (i, (ch, g, pol)) in fixtures.iter().enumerate() {
        let exact = rate(ch, g, pol).unwrap_or_else(|e| panic!("fixture {i}: {e}"));
        let mc = monte_carlo_rate(ch, g, pol, 200_000, 100 + i as u64).unwrap();
        if mc.contains(exact) {
            inside += 1;
        }
        assert!((mc.value - exact).abs() < 2.0 * mc.half_width.max(1e-4), "fixture {i}: {exact} vs {mc:?}");
    }
    assert!(inside + 1 >= fixtures.len(), "{inside} of {} inside", fixtures.len());
}

#[test]
fn monte_carlo_encoder_long_run() {
    let (ch, g, pol) = trapdoor_encoder();
    let mc = monte_carlo_rate(&ch, &g, &pol, 1_000_000, 5).unwrap();
    assert!(mc.contains(1.5f64.log2()), "{mc:?}");
}

#[test]
fn monte_carlo_deterministic_has_zero_width() {
    let ch = make_bsc_rll(ChannelParams::new(0.0).unwrap());
    let g = markov_qgraph(1, 2).unwrap();
    let pol = InputPolicy::from_fn(&ch, &g, |_, _, x| if x == 0 { 1.0 } else { 0.0 });
    let mc = monte_carlo_rate(&ch, &g, &pol, 10_000, 1).unwrap();
    assert_eq!(mc.half_width, 0.0);
    assert_eq!(mc.value, 0.0);
    assert!(monte_carlo_rate(&ch, &g, &pol, 5, 1).is_err());
}

#[test]
fn monte_carlo_interval_shrinks() {
    let (ch, g, pol) = trapdoor_encoder();
    let w = |n| {
        let widths: Vec<f64> = (0..8).map(|s| monte_carlo_rate(&ch, &g, &pol, n, s).unwrap().half_width).collect();
        widths.iter().sum::<f64>() / widths.len() as f64
    };
    let ratio = w(10_000) / w(40_000);
    assert!(ratio > 1.5 && ratio < 2.7, "ratio {ratio}");
}

#[test]
fn delay_refinement_does_not_raise_upper_bound() {
    for base in [crate::channels::make_trapdoor(), make_bsc_rll(ChannelParams::new(0.2).unwrap())] {
        let mut prev = f64::INFINITY;
        for d in 1..=3 {
            let ch = transform(&base, d).unwrap().into_channel();
            let g = markov_qgraph(d, 2).unwrap();
            let ub = upper_bound(&ch, &g, &UpperOpts { starts: 2, ..UpperOpts::default() }).unwrap();
            assert!(ub.value <= prev + 1e-9, "d={d}: {} > {prev}", ub.value);
            prev = ub.value;
        }
    }
}

mod sandwich {
    use super::*;
    use proptest::prelude::*;

    fn instance(seed: u64) -> (UnifilarFsc, QGraph, InputPolicy) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
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
        let ch = UnifilarFsc::from_parts(ns, nx, ny, kernel, next, vec![vec![0, 1]; ns]);
        let graphs = small_graphs(3, 2);
        let g = graphs[rng.gen_range(0..graphs.len())].clone();
        let pol = random_policy(&ch, &g, &mut rng);
        (ch, g, pol)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn lower_bounds_stay_below_upper(seed in 0u64..1_000_000) {
            let (ch, g, pol) = instance(seed);
            let ub = match upper_bound(&ch, &g, &UpperOpts::quick()) {
                Ok(r) => r,
                Err(Error::NoUnichainPolicy) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            if let Ok(r) = rate(&ch, &g, &pol) {
                prop_assert!(r >= 0.0);
                prop_assert!(r <= ub.value + 1e-9, "rate {} > ub {}", r, ub.value);
            }
            let uniform = InputPolicy::uniform(&ch, &g);
            if let Ok(s) = search_bcjr_policy(&ch, &g, &uniform, &BcjrOpts::default()) {
                if let Ok(lb) = lower_bound(&ch, &g, &s.policy, BCJR_TOL) {
                    prop_assert!(lb.value <= ub.value + 1e-9, "lb {} > ub {}", lb.value, ub.value);
                }
            }
        }
    }
}


