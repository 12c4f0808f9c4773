use super::*;
use crate::channels::{make_trapdoor, UnifilarFsc};
use crate::delay::transform;
use crate::graph_bounds::{lower_bound, trapdoor_encoder};
use crate::qgraph::markov_qgraph;
use approx::assert_abs_diff_eq;
use proptest::prelude::*;

fn trapdoor_two() -> UnifilarFsc {
    transform(&make_trapdoor(), 2).unwrap().into_channel()
}

#[test]
fn trapdoor_rewards() {
    let ch = trapdoor_two();
    let t = GraphTestDistribution::binary(&[2.0 / 3.0, 1.0 / 3.0]).unwrap();
    for x in 0..2 {
        assert_abs_diff_eq!(kl_reward(&ch, &t, 0, x, 0).unwrap().finite().unwrap(), 1.5f64.log2(), epsilon = 1e-15);
        assert_abs_diff_eq!(kl_reward(&ch, &t, 0, x, 1).unwrap().finite().unwrap(), 3f64.log2(), epsilon = 1e-15);
    }
    let same = GraphTestDistribution::binary(&[0.5, 0.5]).unwrap();
    assert_eq!(kl_reward(&ch, &same, 1, 0, 0).unwrap(), Reward::Finite(0.0));
    let hard = GraphTestDistribution::binary(&[0.0, 1.0]).unwrap();
    assert_eq!(kl_reward(&ch, &hard, 0, 0, 0).unwrap(), Reward::Infinite);
}

#[test]
fn test_distribution_rejects_bad_rows() {
    assert!(matches!(GraphTestDistribution::binary(&[1.2]), Err(Error::InvalidTestDistribution(_))));
    assert!(GraphTestDistribution::from_rows(&[vec![0.5, 0.6]]).is_err());
}

#[test]
fn trapdoor_certificate_verifies() {
    let b = trapdoor_certificate();
    assert_eq!(b.certificate.support.len(), 8);
    let r = b.verify(1e-12).unwrap();
    assert!(r.passed, "{r:?}");
    assert!(r.max_violation <= 1e-12);
    assert!(r.policy_attains_max);
    assert!(r.excluded.is_empty());
}

#[test]
fn trapdoor_certificate_failures() {
    let b = trapdoor_certificate();
    let mut bad = b.clone();
    bad.certificate.h[1] = Some(0.0);
    let r = bad.verify(1e-9).unwrap();
    assert!(!r.passed);
    let c = r.check(0, 1).unwrap();
    assert_abs_diff_eq!(c.violation, 1.0, epsilon = 1e-12);

    let shifted = b.certificate.clone().with_rho(b.certificate.rho + 1e-3);
    let r = verify_certificate(&b.channel, &b.qgraph, &b.test, &shifted, 1e-9).unwrap();
    assert_eq!(r.failures().count(), 8);
    for c in &r.checks {
        assert_abs_diff_eq!(c.violation, -1e-3, epsilon = 1e-12);
    }
}

#[test]
fn trapdoor_certificate_is_tight() {
    let (ch, g, pol) = trapdoor_encoder();
    let lb = lower_bound(&ch, &g, &pol, 1e-9).unwrap();
    assert_abs_diff_eq!(lb.value, trapdoor_certificate().certificate.rho, epsilon = 1e-12);
}

#[test]
fn value_iteration_trapdoor() {
    let b = trapdoor_certificate();
    let r = relative_value_iteration(&b.channel, &b.qgraph, &b.test, &RviOpts::default()).unwrap();
    assert_abs_diff_eq!(r.rho, 1.5f64.log2(), epsilon = 1e-6);
    assert_eq!(r.support.len(), 8);
    let shifted = RviOpts { init: Some(vec![3.0; 8]), ..RviOpts::default() };
    let r2 = relative_value_iteration(&b.channel, &b.qgraph, &b.test, &shifted).unwrap();
    assert_abs_diff_eq!(r.rho, r2.rho, epsilon = 1e-9);
}

#[test]
fn value_iteration_constant_output() {
    let ch = UnifilarFsc::from_parts(1, 2, 2, vec![1.0, 0.0, 1.0, 0.0], vec![Some(0), None, Some(0), None], vec![vec![0, 1]]);
    let g = markov_qgraph(1, 2).unwrap();
    let t = GraphTestDistribution::binary(&[1.0, 1.0]).unwrap();
    let r = relative_value_iteration(&ch, &g, &t, &RviOpts::default()).unwrap();
    assert_abs_diff_eq!(r.rho, 0.0, epsilon = 1e-12);
}

#[test]
fn value_iteration_all_infinite() {
    let ch = trapdoor_two();
    let g = markov_qgraph(1, 2).unwrap();
    let t = GraphTestDistribution::binary(&[0.0, 1.0]).unwrap();
    assert_eq!(
        relative_value_iteration(&ch, &g, &t, &RviOpts::default()).unwrap_err(),
        Error::UnreachableInfiniteReward
    );
}

#[test]
fn value_iteration_budget() {
    let b = trapdoor_certificate();
    let opts = RviOpts { max_iter: 1, ..RviOpts::default() };
    assert!(matches!(
        relative_value_iteration(&b.channel, &b.qgraph, &b.test, &opts),
        Err(Error::NotConverged { .. })
    ));
}

#[test]
fn verification_errors() {
    let b = trapdoor_certificate();
    let mut partial = b.certificate.clone();
    partial.support = vec![0];
    assert!(matches!(
        verify_certificate(&b.channel, &b.qgraph, &b.test, &partial, 1e-9),
        Err(Error::SupportNotClosed { .. })
    ));
    let hard = GraphTestDistribution::binary(&[1.0, 0.0]).unwrap();
    assert!(matches!(
        verify_certificate(&b.channel, &b.qgraph, &hard, &b.certificate, 1e-9),
        Err(Error::InfiniteRewardInSupport { .. })
    ));
    let mut undefined = b.certificate.clone();
    undefined.h[3] = None;
    assert!(matches!(
        verify_certificate(&b.channel, &b.qgraph, &b.test, &undefined, 1e-9),
        Err(Error::UndefinedValue { .. })
    ));
}

#[test]
fn bundle_json_round_trip() {
    let b = trapdoor_certificate();
    let text = serde_json::to_string(&b.to_json()).unwrap();
    let back = CertificateBundle::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back, b);
    assert!(text.contains("\"(0,1)\":1.0"));
}

#[test]
fn bsc_collapse_is_a_single_divergence() {
    let p = 0.2;
    let ch = transform(&crate::channels::make_bsc_rll(crate::channels::ChannelParams::new(p).unwrap()), 2)
        .unwrap()
        .into_channel();
    for t in [0.3, 0.55, 0.8] {
        let test = GraphTestDistribution::binary(&[t; 4]).unwrap();
        let direct = kl_reward(&ch, &test, 0, 0, 0).unwrap().finite().unwrap();
        assert_abs_diff_eq!(bsc_rho(p, [t; 4]), direct, epsilon = 1e-12);
    }
}

#[test]
fn bsc_rejects_infeasible_parameters() {
    let err = bsc_certificate(0.2, [0.9, 0.1, 0.9, 0.1]).unwrap_err();
    assert!(matches!(err, Error::ConstraintViolated { .. }), "{err:?}");
    assert!(bsc_certificate(0.2, [0.0, 0.5, 0.5, 0.5]).is_err());
    assert!(bsc_certificate(1.0, [0.5; 4]).is_err());
}

#[test]
fn bsc_bound_certificate_verifies() {
    let b = bsc_bound(0.2).unwrap();
    assert!(b.constraints.iter().all(|&c| c >= 0.0));
    let cert = bsc_certificate(0.2, b.params).unwrap();
    let r = cert.verify(1e-9).unwrap();
    assert!(r.passed, "max violation {}", r.max_violation);
    assert_abs_diff_eq!(cert.certificate.rho, b.value, epsilon = 1e-15);
    assert!(b.value > 0.0 && b.value < 0.6942);
}

#[test]
fn bsc_bound_noiseless_limit() {
    let golden = ((1.0 + 5f64.sqrt()) / 2.0).log2();
    let b = bsc_bound(1e-4).unwrap();
    assert!((b.value - golden).abs() < 5e-3, "{}", b.value);
}

#[test]
fn dec_test_rows_sum_to_one() {
    for a in [0.1, 0.3, 0.45] {
        let b = dec_certificate(a).unwrap();
        for q in 0..8 {
            assert_abs_diff_eq!(b.test.row(q).iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        }
    }
}

#[test]
fn dec_certificate_support_excludes_infinite_pairs() {
    let b = dec_certificate(0.3).unwrap();
    let r = b.verify(1e-8).unwrap();
    assert!(r.passed, "max violation {}", r.max_violation);
    assert!(r.excluded.contains(&(2, 0)), "{:?}", r.excluded);
    assert!(r.excluded.contains(&(1, 5)), "{:?}", r.excluded);
    assert!(r.policy_attains_max);
}

#[test]
fn dec_printed_forms_fail() {
    let a = 0.3;
    let printed_h = dec_certificate_with(a, 2, DecValueFunction::AsPrinted).unwrap().verify(1e-8).unwrap();
    assert!(!printed_h.passed);
    let printed_rho = dec_certificate_with(a, 3, DecValueFunction::Corrected).unwrap().verify(1e-8).unwrap();
    assert!(!printed_rho.passed);
}

#[test]
fn dec_bound_beats_feedback() {
    let b = dec_bound().unwrap();
    let fb = dec_feedback_capacity(0.5).unwrap();
    assert!(b.value < fb.value, "{} vs {}", b.value, fb.value);
    assert!(b.a > 1e-3 && b.a < 0.5 - 1e-3);
    assert!(b.violation <= 1e-8);
    assert!(b.printed_violation > 1e-8);
    let cert = dec_certificate(b.a).unwrap();
    let r = relative_value_iteration(&cert.channel, &cert.qgraph, &cert.test, &RviOpts::default()).unwrap();
    assert!(r.rho <= b.value + 1e-6, "{} vs {}", r.rho, b.value);
    assert_abs_diff_eq!(r.rho, b.value, epsilon = 1e-6);
}

#[test]
fn dec_feedback_capacity_endpoints() {
    assert_eq!(dec_feedback_capacity(0.0).unwrap().value, 1.0);
    assert_eq!(dec_feedback_capacity(1.0).unwrap().value, 0.0);
    assert!(dec_feedback_capacity(1.5).is_err());
    let mid = dec_feedback_capacity(0.5).unwrap();
    assert!(mid.value > 0.6 && mid.value < 0.7);
}

#[test]
fn dec_rejects_out_of_range() {
    assert!(dec_certificate(0.5).is_err());
    assert!(dec_certificate(0.0).is_err());
}

proptest! {
    #[test]
    fn kl_reward_is_nonnegative(zero in proptest::collection::vec(0.0f64..=1.0, 2)) {
        let ch = trapdoor_two();
        let t = GraphTestDistribution::binary(&zero).unwrap();
        for s in 0..4 {
            for x in 0..2 {
                for q in 0..2 {
                    if let Reward::Finite(v) = kl_reward(&ch, &t, s, x, q).unwrap() {
                        prop_assert!(v >= -1e-15);
                        let equal = (0..2).all(|y| (ch.prob(s, x, y) - t.get(q, y)).abs() < 1e-15);
                        if equal {
                            prop_assert!(v.abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn value_iteration_ignores_constant_shift(c in -5.0f64..5.0, t0 in 0.05f64..0.95, t1 in 0.05f64..0.95) {
        let ch = trapdoor_two();
        let g = markov_qgraph(1, 2).unwrap();
        let t = GraphTestDistribution::binary(&[t0, t1]).unwrap();
        let base = relative_value_iteration(&ch, &g, &t, &RviOpts::default()).unwrap();
        let shifted = relative_value_iteration(&ch, &g, &t, &RviOpts { init: Some(vec![c; 8]), ..RviOpts::default() }).unwrap();
        prop_assert!((base.rho - shifted.rho).abs() <= 1e-9);
    }
}
