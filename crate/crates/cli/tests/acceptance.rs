//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::Path;
use std::time::{Duration, Instant};

use ia_cli::{execute, Command, Options};
use ia_core::aiding::verify_conditions;
use ia_core::channel::{random_channel, GainBounds};
use ia_core::design::{
    design_plan, design_plan_forced, plan_with_multiplier, synthesize_plan_channel,
    verify_alignment, PeelingPlan, TargetSpec,
};
use ia_core::diag::DiagonalMatrix;
use ia_core::graph::{
    build_alignment_graph, cycle_conditions, AlignmentGraph, AlignmentTopology, Step,
};
use ia_core::lp::{
    build_lp, optimal_face_probe, rational, solve_optimal_dof, verify_kkt, Rational,
};
use ia_core::sim::dof_slope;
use ia_core::DemandNetwork;
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::networks::theorem_demands;
use support::vertex_oracle::{vertex_optimum, Q};

/// Relative error allowed on the dependency identity.
const IDENTITY_TOL: f64 = 1e-12;
/// Relative slope error allowed against the LP total.
const SLOPE_TOL: f64 = 0.05;
const SNR_DB: [f64; 4] = [30.0, 40.0, 50.0, 60.0];
const LP_TIME: Duration = Duration::from_secs(1);
const SLOPE_TIME: Duration = Duration::from_secs(10);
/// Random K = 6 networks in the oracle comparison.
const ORACLE_SAMPLES: usize = 3000;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn net(k: usize, sets: &[&[usize]]) -> DemandNetwork {
    DemandNetwork::from_one_based(k, sets).unwrap()
}

fn six() -> DemandNetwork {
    net(6, &[&[1, 4], &[2, 5], &[3, 6]])
}

fn five() -> DemandNetwork {
    net(5, &[&[1, 5], &[1, 2], &[3, 4, 5]])
}

fn mac() -> DemandNetwork {
    net(2, &[&[1, 2]])
}

fn plan(network: &DemandNetwork, mult: usize) -> PeelingPlan {
    let d = solve_optimal_dof(&build_lp(network)).unwrap().0;
    plan_with_multiplier(network, &d, mult).unwrap()
}

fn to_big(q: &Q) -> Rational {
    Rational::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lp_exactness() -> Verdict {
    let third = rational(1, 3);
    let (f, h) = (rational(1, 5), rational(2, 5));
    let half = rational(1, 2);
    let cases = [
        ("6x3", six(), vec![third.clone(); 6], rational(2, 1)),
        (
            "5x3",
            five(),
            vec![h.clone(), h, f.clone(), f.clone(), f],
            rational(7, 5),
        ),
        (
            "4x3",
            net(4, &[&[1, 2], &[1, 3], &[1, 4]]),
            vec![rational(0, 1), half.clone(), half.clone(), half],
            rational(3, 2),
        ),
    ];
    let mut notes = Vec::new();
    for (name, network, d, total) in cases {
        let start = Instant::now();
        let (got, _) =
            solve_optimal_dof(&build_lp(&network)).map_err(|e| format!("{name}: {e}"))?;
        let elapsed = start.elapsed();
        if got.d != d || got.total != total || elapsed > LP_TIME {
            return Err(format!(
                "{name}: d = {got} total {} in {elapsed:?}",
                got.total
            ));
        }
        notes.push(format!("{name} {elapsed:.1?}"));
    }
    Ok(notes.join(", "))
}

/// Steps from `from` to `to` through receiver `rx`'s interference star, one-based.
fn via(topo: &AlignmentTopology, rx: usize, from: usize, to: usize) -> Vec<Step> {
    let (rx, from, to) = (rx - 1, from - 1, to - 1);
    let anchor = topo.edges().iter().find(|e| e.receiver == rx).unwrap().from;
    let mut steps = Vec::new();
    if from != anchor {
        steps.push(Step {
            edge: topo.find_edge(rx, anchor, from).unwrap(),
            forward: false,
        });
    }
    if to != anchor {
        steps.push(Step {
            edge: topo.find_edge(rx, anchor, to).unwrap(),
            forward: true,
        });
    }
    steps
}

fn closed_walk(graph: &AlignmentGraph, legs: &[(usize, usize, usize)]) -> DiagonalMatrix {
    let topo = graph.topology();
    let w: Vec<Step> = legs
        .iter()
        .flat_map(|&(rx, a, b)| via(topo, rx, a, b))
        .collect();
    graph.walk_product(&w)
}

fn condition_counting() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let ch = random_channel(3, 6, 3, seed, GainBounds::default()).unwrap();
        let graph = build_alignment_graph(&six(), &ch).unwrap();
        let count = cycle_conditions(&graph).len();
        if count != 4 {
            return Err(format!("seed {seed}: {count} conditions"));
        }
        // T21, T24, T51, T54 for receiver 3
        let t21 = closed_walk(&graph, &[(2, 1, 3), (1, 3, 2), (3, 2, 1)]);
        let t24 = closed_walk(&graph, &[(2, 4, 3), (1, 3, 2), (3, 2, 4)]);
        let t51 = closed_walk(&graph, &[(2, 1, 3), (1, 3, 5), (3, 5, 1)]);
        let t54 = closed_walk(&graph, &[(2, 4, 3), (1, 3, 5), (3, 5, 4)]);
        let rhs = &(&t24 * &t21.inverse().unwrap()) * &t51;
        worst = worst.max(t54.max_relative_gap(&rhs).unwrap());
    }
    check(
        worst <= IDENTITY_TOL,
        format!("4 conditions on 50 channels, identity error {worst:.1e}"),
    )
}

fn negative_control() -> Verdict {
    let network = six();
    let mut notes = Vec::new();
    let mut ok = true;
    for mult in [1, 2] {
        let p = plan(&network, mult);
        let (mut infeasible, mut broken) = (0, 0);
        for seed in 0..50 {
            let ch = random_channel(3 * mult, 6, 3, seed, GainBounds::default()).unwrap();
            let graph = build_alignment_graph(&network, &ch).unwrap();
            let ts: Vec<DiagonalMatrix> =
                cycle_conditions(&graph).into_iter().map(|c| c.t).collect();
            if !verify_conditions(3 * mult, &ts, mult, 1e-9)
                .unwrap()
                .feasible
            {
                infeasible += 1;
            }
            let forced = design_plan_forced(&ch, &p, 1e-9, seed).unwrap();
            if !verify_alignment(&ch, &network, &forced.beamformers).all_decodable() {
                broken += 1;
            }
        }
        ok &= infeasible == 50 && broken >= 49;
        notes.push(format!(
            "n={mult}: infeasible {infeasible}/50, non-decodable {broken}/50"
        ));
    }
    check(ok, notes.join("; "))
}

fn positive_control() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, network, mult) in [
        ("6x3 n=1", six(), 1),
        ("6x3 n=2", six(), 2),
        ("5x3", five(), 1),
    ] {
        let p = plan(&network, mult);
        let spec = TargetSpec::Random {
            distinct: p.rounds[0].streams,
        };
        let mut good = 0;
        for seed in 0..50 {
            let run = || -> Option<bool> {
                let ch = synthesize_plan_channel(&network, &p, &spec, seed, GainBounds::default())
                    .ok()?;
                let design = design_plan(&ch, &p, 1e-9, seed).ok()?;
                let report = verify_alignment(&ch, &network, &design.beamformers);
                let dims = report.receivers.iter().all(|r| {
                    r.desired_dim + r.interference_dim == p.extension
                        && (name == "5x3" || r.interference_dim == mult)
                });
                Some(report.all_decodable() && dims)
            };
            if run() == Some(true) {
                good += 1;
            }
        }
        ok &= good == 50;
        notes.push(format!("{name} {good}/50"));
    }
    check(ok, notes.join(", "))
}

fn slopes() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;
    for (name, network) in [("6x3", six()), ("5x3", five()), ("MAC", mac())] {
        let start = Instant::now();
        let total = solve_optimal_dof(&build_lp(&network))
            .unwrap()
            .0
            .total
            .to_f64()
            .unwrap();
        let p = plan(&network, 1);
        let spec = TargetSpec::Random {
            distinct: p.rounds[0].streams,
        };
        let ch = synthesize_plan_channel(&network, &p, &spec, 1, GainBounds::default())
            .map_err(|e| e.to_string())?;
        let v = design_plan(&ch, &p, 1e-9, 1)
            .map_err(|e| e.to_string())?
            .beamformers;
        let slope = dof_slope(&ch, &network, &v, &SNR_DB)
            .map_err(|e| e.to_string())?
            .estimate;
        let elapsed = start.elapsed();
        ok &= (slope - total).abs() <= SLOPE_TOL * total && elapsed < SLOPE_TIME;
        notes.push(format!("{name} {slope:.4} vs {total} ({elapsed:.1?})"));
    }
    check(ok, notes.join(", "))
}

fn top_two_equal() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let k = rng.random_range(3..=8);
        let sets = theorem_demands(&mut rng, k);
        let network = DemandNetwork::new(k, sets.clone()).unwrap();
        let lp = build_lp(&network);
        let (d, dual) = solve_optimal_dof(&lp).map_err(|e| e.to_string())?;
        let probe = optimal_face_probe(&lp, &d).map_err(|e| e.to_string())?;
        let kkt = verify_kkt(&lp, &d, &dual).holds();
        if !(probe.top_two_equal && probe.max_component <= rational(1, 2) && kkt) {
            return Err(format!(
                "instance {i}: K={k} {sets:?}: {probe:?}, kkt {kkt}"
            ));
        }
    }
    Ok("100 random networks, K in 3..=8".into())
}

/// Antichains of at most `g` nonempty subsets of `0..k`, as bitmasks.
fn antichains(k: usize, g: usize) -> Vec<Vec<u32>> {
    fn extend(k: usize, g: usize, start: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if !current.is_empty() {
            out.push(current.clone());
        }
        if current.len() == g {
            return;
        }
        for m in start..(1u32 << k) {
            if current.iter().all(|&c| c & m != c && c & m != m) {
                current.push(m);
                extend(k, g, m + 1, current, out);
                current.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(k, g, 1, &mut Vec::new(), &mut out);
    out
}

fn sets_of(k: usize, masks: &[u32]) -> Vec<Vec<usize>> {
    masks
        .iter()
        .map(|m| (0..k).filter(|t| m >> t & 1 == 1).collect())
        .collect()
}

fn oracle_equivalence() -> Verdict {
    let compare = |k: usize, sets: Vec<Vec<usize>>| -> Result<(), String> {
        let network = DemandNetwork::new(k, sets.clone()).map_err(|e| e.to_string())?;
        let (d, _) = solve_optimal_dof(&build_lp(&network)).map_err(|e| e.to_string())?;
        let (value, _) = vertex_optimum(k, &sets);
        if d.total == to_big(&value) {
            Ok(())
        } else {
            Err(format!("K={k} {sets:?}: lp {} oracle {value}", d.total))
        }
    };
    let mut exhaustive = 0;
    for k in 1..=5 {
        for masks in antichains(k, 4) {
            compare(k, sets_of(k, &masks))?;
            exhaustive += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sampled = 0;
    for k in [6] {
        for _ in 0..ORACLE_SAMPLES {
            let g = rng.random_range(1..=4);
            let sets = (0..g)
                .map(|_| rng.random_range(1u32..(1 << k)))
                .collect::<Vec<_>>();
            compare(k, sets_of(k, &sets))?;
            sampled += 1;
        }
    }
    Ok(format!(
        "{exhaustive} antichains for K <= 5 exhaustively, {sampled} sampled networks for K = 6"
    ))
}

fn match_rates(dir: &Path, name: &str, body: &str) -> Result<Vec<(f64, f64)>, String> {
    let path = dir.join(format!("{name}.txt"));
    let text =
        format!("K=6\nS1=1,4\nS2=2,5\nS3=3,6\nslots=3000\nseed=8\nstream_file={name}.dat\n{body}");
    std::fs::write(&path, text).map_err(|e| e.to_string())?;
    let opts = Options {
        scenario: path,
        seed: None,
        out: None,
        generic: false,
    };
    execute(Command::Stream, &opts).map_err(|e| e.to_string())?;
    let csv = execute(Command::Match, &opts).map_err(|e| e.to_string())?;
    Ok(csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            (f[0], f[1])
        })
        .collect())
}

fn approximate_matching() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let q = match_rates(
        dir.path(),
        "quantized",
        "stream=quantized\nlevels=8\neps_match=1e-1,1e-2,1e-3\n",
    )?;
    let c = match_rates(dir.path(), "continuous", "stream=continuous\neps_match=0\n")?;
    let rates: Vec<f64> = q.iter().map(|r| r.1).collect();
    let nonincreasing = rates.windows(2).all(|w| w[1] <= w[0]);
    check(
        nonincreasing && rates[0] > 0.0 && c[0].1 == 0.0,
        format!(
            "quantized rates {rates:?} at 1e-1, 1e-2, 1e-3; continuous rate {} at 0",
            c[0].1
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("LP exactness", lp_exactness),
        ("condition counting", condition_counting),
        ("generic-channel negative control", negative_control),
        ("aided-channel positive control", positive_control),
        ("DoF slope", slopes),
        ("top two optimal DoF equal and at most 1/2", top_two_equal),
        ("oracle equivalence", oracle_equivalence),
        ("approximate matching", approximate_matching),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let verdict = f();
        let elapsed = start.elapsed();
        match verdict {
            Ok(detail) => println!("PASS {} {name}: {detail} [{elapsed:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail} [{elapsed:.1?}]", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
