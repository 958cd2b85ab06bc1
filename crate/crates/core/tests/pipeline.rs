use ia_core::aiding::verify_conditions;
use ia_core::channel::{random_channel, GainBounds};
use ia_core::design::{
    design_plan, design_plan_forced, plan_with_multiplier, synthesize_plan_channel,
    verify_alignment, PeelingPlan, TargetSpec,
};
use ia_core::graph::{build_alignment_graph, cycle_conditions};
use ia_core::lp::{build_lp, solve_optimal_dof};
use ia_core::sim::{dof_slope, matched_filter_rates, sweep};
use ia_core::DemandNetwork;
use num_traits::ToPrimitive;

fn net(k: usize, sets: &[&[usize]]) -> DemandNetwork {
    DemandNetwork::from_one_based(k, sets).unwrap()
}

fn plan(network: &DemandNetwork, mult: usize) -> PeelingPlan {
    let d = solve_optimal_dof(&build_lp(network)).unwrap().0;
    plan_with_multiplier(network, &d, mult).unwrap()
}

fn fixtures() -> Vec<(&'static str, DemandNetwork, usize)> {
    vec![
        ("6x3 n=1", net(6, &[&[1, 4], &[2, 5], &[3, 6]]), 1),
        ("6x3 n=2", net(6, &[&[1, 4], &[2, 5], &[3, 6]]), 2),
        ("5x3", net(5, &[&[1, 5], &[1, 2], &[3, 4, 5]]), 1),
        ("4x3", net(4, &[&[1, 2], &[1, 3], &[1, 4]]), 1),
        ("3-user", net(3, &[&[1], &[2], &[3]]), 1),
    ]
}

#[test]
fn aided_channels_align_perfectly() {
    for (name, network, mult) in fixtures() {
        let p = plan(&network, mult);
        let spec = TargetSpec::Random {
            distinct: p.rounds[0].streams,
        };
        for seed in 0..10 {
            let ch =
                synthesize_plan_channel(&network, &p, &spec, seed, GainBounds::default()).unwrap();
            assert!(ch.within_bounds(), "{name}");
            let design = design_plan(&ch, &p, 1e-9, seed).unwrap();
            let report = verify_alignment(&ch, &network, &design.beamformers);
            assert!(report.all_decodable(), "{name} seed {seed}\n{report}");
            for r in &report.receivers {
                assert_eq!(r.desired_dim + r.interference_dim, r.joint_dim);
            }
        }
    }
}

#[test]
fn six_by_three_dimensions_fill_the_extension() {
    let network = net(6, &[&[1, 4], &[2, 5], &[3, 6]]);
    for mult in [1, 2] {
        let p = plan(&network, mult);
        let ch = synthesize_plan_channel(
            &network,
            &p,
            &TargetSpec::Random { distinct: mult },
            3,
            GainBounds::default(),
        )
        .unwrap();
        let design = design_plan(&ch, &p, 1e-9, 3).unwrap();
        let report = verify_alignment(&ch, &network, &design.beamformers);
        for r in &report.receivers {
            assert_eq!(r.interference_dim, mult);
            assert_eq!(r.desired_dim, 2 * mult);
            assert_eq!(r.joint_dim, 3 * mult);
        }
    }
}

#[test]
fn generic_channels_fail() {
    let network = net(6, &[&[1, 4], &[2, 5], &[3, 6]]);
    for mult in [1, 2] {
        let p = plan(&network, mult);
        for seed in 0..10 {
            let ch = random_channel(3 * mult, 6, 3, seed, GainBounds::default()).unwrap();
            let graph = build_alignment_graph(&network, &ch).unwrap();
            let ts: Vec<_> = cycle_conditions(&graph).into_iter().map(|c| c.t).collect();
            assert!(
                !verify_conditions(3 * mult, &ts, mult, 1e-9)
                    .unwrap()
                    .feasible
            );
            assert!(design_plan(&ch, &p, 1e-9, seed).is_err());
            let forced = design_plan_forced(&ch, &p, 1e-9, seed).unwrap();
            assert!(!verify_alignment(&ch, &network, &forced.beamformers).all_decodable());
        }
    }
}

#[test]
fn slopes_track_lp_totals() {
    let snrs = [30.0, 40.0, 50.0, 60.0];
    for (name, network, mult) in fixtures() {
        let total = solve_optimal_dof(&build_lp(&network))
            .unwrap()
            .0
            .total
            .to_f64()
            .unwrap();
        let p = plan(&network, mult);
        let spec = TargetSpec::Random {
            distinct: p.rounds[0].streams,
        };
        let ch = synthesize_plan_channel(&network, &p, &spec, 11, GainBounds::default()).unwrap();
        let v = design_plan(&ch, &p, 1e-9, 11).unwrap().beamformers;
        let slope = dof_slope(&ch, &network, &v, &snrs).unwrap();
        assert!(
            (slope.estimate - total).abs() <= 0.05 * total,
            "{name}: {slope:?} vs {total}"
        );
    }
}

#[test]
fn slope_error_shrinks_with_top_snr() {
    let network = net(5, &[&[1, 5], &[1, 2], &[3, 4, 5]]);
    let p = plan(&network, 1);
    let ch = synthesize_plan_channel(
        &network,
        &p,
        &TargetSpec::Random { distinct: 1 },
        5,
        GainBounds::default(),
    )
    .unwrap();
    let v = design_plan(&ch, &p, 1e-9, 5).unwrap().beamformers;
    let errors: Vec<f64> = [30.0, 40.0, 50.0, 60.0]
        .windows(2)
        .map(|w| (dof_slope(&ch, &network, &v, w).unwrap().estimate - 1.4).abs())
        .collect();
    assert!(errors.windows(2).all(|e| e[1] < e[0]), "{errors:?}");
}

#[test]
fn treating_interference_as_noise_saturates() {
    let network = net(6, &[&[1, 4], &[2, 5], &[3, 6]]);
    let p = plan(&network, 1);
    let ch = synthesize_plan_channel(
        &network,
        &p,
        &TargetSpec::Random { distinct: 1 },
        2,
        GainBounds::default(),
    )
    .unwrap();
    let v = design_plan(&ch, &p, 1e-9, 2).unwrap().beamformers;
    let zf = sweep(&ch, &network, &v, &[50.0, 60.0]).unwrap();
    let mf = [50.0, 60.0].map(|s| matched_filter_rates(&ch, &network, &v, s).unwrap().sum_rate);
    assert!((mf[1] - mf[0]).abs() < 0.1);
    assert!(zf[1].sum_rate - zf[0].sum_rate > 6.0);
}
