//! Beamformer construction, peeling schedules for irregular networks, and
//! rank-based alignment checks.

use std::f64::consts::TAU;
use std::fmt;
use std::fmt::Write as _;

use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::aiding::{
    check_targets, random_structures, synthesize_targets, verify_conditions, AidingError,
    AidingVerdict, ConditionTarget, JointPartition,
};
use crate::channel::{random_channel, ExtendedChannel, GainBounds};
use crate::diag::DiagonalMatrix;
use crate::graph::{
    cycle_conditions, AlignmentGraph, AlignmentTopology, ConditionTemplate, GraphError,
};
use crate::linalg::{self, CMatrix};
use crate::lp::{common_denominator, DoFAssignment, Rational};
use crate::network::DemandNetwork;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error(transparent)]
    Aiding(#[from] AidingError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("round {round}: conditions infeasible: {reason}")]
    Infeasible { round: usize, reason: String },
    #[error("{blocks} blocks cannot all be covered by {columns} columns")]
    Uncoverable { blocks: usize, columns: usize },
    #[error("{columns} columns exceed block capacity {capacity}")]
    TooManyColumns { columns: usize, capacity: usize },
    #[error("beamformer has rank {rank} with {columns} columns")]
    RankDeficient { rank: usize, columns: usize },
    #[error("beamformer span contains e_{0}")]
    BasisVectorInSpan(usize),
    #[error("beamformer row {0} is zero")]
    ZeroRow(usize),
    #[error("DoF assignment is invalid: {0}")]
    InvalidDof(String),
    #[error("beamformer dump line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Per-transmitter τ×d_k precoding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSet {
    tau: usize,
    v: Vec<CMatrix>,
}

impl BeamformingSet {
    pub fn empty(tau: usize, transmitters: usize) -> Self {
        Self {
            tau,
            v: vec![CMatrix::zeros(tau, 0); transmitters],
        }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn num_transmitters(&self) -> usize {
        self.v.len()
    }

    pub fn columns(&self, k: usize) -> usize {
        self.v[k].ncols()
    }

    pub fn dof(&self) -> Vec<usize> {
        self.v.iter().map(|m| m.ncols()).collect()
    }

    pub fn matrix(&self, k: usize) -> &CMatrix {
        &self.v[k]
    }

    /// Appends columns to transmitter `k`.
    pub fn append(&mut self, k: usize, block: &CMatrix) {
        self.v[k] = linalg::hstack(self.tau, &[self.v[k].clone(), block.clone()]);
    }

    /// One line per column: `V k col re1 im1 ...`, one-based.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        for (k, m) in self.v.iter().enumerate() {
            for c in 0..m.ncols() {
                write!(out, "V {} {}", k + 1, c + 1).unwrap();
                for z in m.column(c).iter() {
                    write!(out, " {:?} {:?}", z.re, z.im).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`BeamformingSet::to_dump`] output for `transmitters` users.
    /// Columns of each transmitter must appear in order 1, 2, ...
    pub fn from_dump(text: &str, transmitters: usize) -> Result<Self, DesignError> {
        let mut tau = None;
        let mut cols: Vec<Vec<Vec<Complex64>>> = vec![Vec::new(); transmitters];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: &str| DesignError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let mut fields = line.split_whitespace();
            if fields.next() != Some("V") {
                return Err(err("expected leading 'V'"));
            }
            let k: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .filter(|&k| k >= 1 && k <= transmitters)
                .ok_or_else(|| err("bad transmitter index"))?;
            let c: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("bad column index"))?;
            if c != cols[k - 1].len() + 1 {
                return Err(err("columns out of order"));
            }
            let values: Vec<f64> = fields
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| err("bad float"))?;
            if values.is_empty() || !values.len().is_multiple_of(2) {
                return Err(err("expected re/im pairs"));
            }
            let col: Vec<Complex64> = values
                .chunks(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            match tau {
                None => tau = Some(col.len()),
                Some(t) if t != col.len() => return Err(err("inconsistent column length")),
                _ => {}
            }
            cols[k - 1].push(col);
        }
        let tau = tau.ok_or(DesignError::Parse {
            line: 0,
            reason: "no beamformer columns".into(),
        })?;
        let v = cols
            .into_iter()
            .map(|cs| {
                let mut m = CMatrix::zeros(tau, cs.len());
                for (c, col) in cs.iter().enumerate() {
                    for (r, z) in col.iter().enumerate() {
                        m[(r, c)] = *z;
                    }
                }
                m
            })
            .collect();
        Ok(Self { tau, v })
    }
}

/// Rejects root beamformers that cannot align: rank deficiency, a standard
/// basis vector in the span, or an all-zero row.
pub fn check_root(v: &CMatrix) -> Result<(), DesignError> {
    let r = linalg::rank(v);
    if r < v.ncols() {
        return Err(DesignError::RankDeficient {
            rank: r,
            columns: v.ncols(),
        });
    }
    for i in 0..v.nrows() {
        if v.row(i).iter().all(|z| z.is_zero()) {
            return Err(DesignError::ZeroRow(i));
        }
        if linalg::contains_basis_vector(v, i) {
            return Err(DesignError::BasisVectorInSpan(i));
        }
    }
    Ok(())
}

/// Columns per block: proportional to block size when the partition is
/// balanced, otherwise round-robin over blocks by descending size. Each
/// block gets at least one and at most `|B| - 1` columns.
pub fn allocate_columns(
    partition: &JointPartition,
    columns: usize,
) -> Result<Vec<usize>, DesignError> {
    let sizes = partition.sizes();
    let blocks = sizes.len();
    if blocks > columns {
        return Err(DesignError::Uncoverable { blocks, columns });
    }
    let capacity: usize = sizes.iter().map(|s| s.saturating_sub(1)).sum();
    if columns > capacity {
        return Err(DesignError::TooManyColumns { columns, capacity });
    }
    if partition.is_balanced(columns) {
        let unit = partition.tau() / columns;
        return Ok(sizes.iter().map(|s| s / unit).collect());
    }
    let mut order: Vec<usize> = (0..blocks).collect();
    order.sort_by_key(|&b| (std::cmp::Reverse(sizes[b]), b));
    let mut alloc = vec![0; blocks];
    let mut left = columns;
    while left > 0 {
        for &b in &order {
            if left > 0 && alloc[b] + 1 < sizes[b] {
                alloc[b] += 1;
                left -= 1;
            }
        }
    }
    Ok(alloc)
}

fn coefficient<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(0.0..TAU))
}

/// Root precoder: per block, generic columns supported on that block.
pub fn root_beamformer<R: Rng + ?Sized>(
    partition: &JointPartition,
    columns: usize,
    rng: &mut R,
) -> Result<CMatrix, DesignError> {
    let alloc = allocate_columns(partition, columns)?;
    let mut v = CMatrix::zeros(partition.tau(), columns);
    let mut col = 0;
    for (block, &count) in partition.blocks().iter().zip(&alloc) {
        for _ in 0..count {
            for &p in block {
                v[(p, col)] = coefficient(rng);
            }
            col += 1;
        }
    }
    check_root(&v)?;
    Ok(v)
}

/// Designs `columns` streams per node of `graph`: a structured root per
/// component, propagated along the spanning forest as `V_to = M V_from`.
/// Isolated nodes get a dense generic precoder.
pub fn design_beamformers(
    graph: &AlignmentGraph,
    partition: &JointPartition,
    columns: usize,
    transmitters: usize,
    seed: u64,
) -> Result<BeamformingSet, DesignError> {
    let tau = partition.tau();
    let topo = graph.topology();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BeamformingSet::empty(tau, transmitters);
    if columns == 0 {
        return Ok(out);
    }
    for &(node, step) in topo.propagation_order() {
        let v = match step {
            None => {
                let isolated = topo.edges().iter().all(|e| e.from != node && e.to != node);
                if isolated {
                    if columns > tau {
                        return Err(DesignError::TooManyColumns {
                            columns,
                            capacity: tau,
                        });
                    }
                    CMatrix::from_fn(tau, columns, |_, _| coefficient(&mut rng))
                } else {
                    root_beamformer(partition, columns, &mut rng)?
                }
            }
            Some(step) => {
                let parent = topo.step_source(step);
                let label = graph.label(step.edge);
                let m = if step.forward {
                    label.clone()
                } else {
                    label.inverse().expect("labels are invertible")
                };
                linalg::diag_mul(&m, out.matrix(parent))
            }
        };
        out.v[node] = v;
    }
    Ok(out)
}

/// One receiver's dimension counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverReport {
    pub receiver: usize,
    pub desired_dim: usize,
    pub expected_desired: usize,
    pub interference_dim: usize,
    pub joint_dim: usize,
    pub decodable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentReport {
    pub tau: usize,
    pub receivers: Vec<ReceiverReport>,
}

impl AlignmentReport {
    pub fn all_decodable(&self) -> bool {
        self.receivers.iter().all(|r| r.decodable)
    }

    pub fn max_interference_dim(&self) -> usize {
        self.receivers
            .iter()
            .map(|r| r.interference_dim)
            .max()
            .unwrap_or(0)
    }
}

impl fmt::Display for AlignmentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.receivers {
            writeln!(
                f,
                "receiver {}: desired {}/{} interference {} joint {} of {} {}",
                r.receiver + 1,
                r.desired_dim,
                r.expected_desired,
                r.interference_dim,
                r.joint_dim,
                self.tau,
                if r.decodable {
                    "decodable"
                } else {
                    "NOT decodable"
                }
            )?;
        }
        write!(
            f,
            "all receivers decodable: {}",
            if self.all_decodable() { "yes" } else { "no" }
        )
    }
}

/// Rank accounting at every receiver.
pub fn verify_alignment(
    channel: &ExtendedChannel,
    network: &DemandNetwork,
    v: &BeamformingSet,
) -> AlignmentReport {
    let tau = v.tau();
    let receivers = (0..network.num_receivers())
        .map(|j| {
            let demand = network.demand(j);
            let images = |ks: &mut dyn Iterator<Item = usize>| -> Vec<CMatrix> {
                ks.filter(|&k| v.columns(k) > 0)
                    .map(|k| linalg::diag_mul(channel.gain(j, k), v.matrix(k)))
                    .collect()
            };
            let desired = images(&mut demand.iter().copied());
            let interfering =
                images(&mut (0..v.num_transmitters()).filter(|k| !demand.contains(k)));
            let expected_desired: usize = demand.iter().map(|&k| v.columns(k)).sum();
            let desired_m = linalg::hstack(tau, &desired);
            let interf_m = linalg::hstack(tau, &interfering);
            let desired_dim = linalg::rank(&desired_m);
            let interference_dim = linalg::rank(&interf_m);
            let joint_dim = linalg::rank(&linalg::hstack(tau, &[desired_m, interf_m]));
            let decodable = joint_dim == desired_dim + interference_dim
                && desired_dim == expected_desired
                && interference_dim + expected_desired <= tau;
            ReceiverReport {
                receiver: j,
                desired_dim,
                expected_desired,
                interference_dim,
                joint_dim,
                decodable,
            }
        })
        .collect();
    AlignmentReport { tau, receivers }
}

/// One peeling round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelRound {
    /// Columns each transmitter sends in this round (0 when not active).
    pub columns: Vec<usize>,
    pub streams: usize,
    pub active: Vec<bool>,
    /// Per receiver: desired and interfering transmitters still active.
    pub sets: Vec<(Vec<usize>, Vec<usize>)>,
    pub topology: AlignmentTopology,
    pub templates: Vec<ConditionTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeelingPlan {
    pub extension: usize,
    pub multiplier: usize,
    /// `extension * d_k`.
    pub integer_dof: Vec<usize>,
    pub rounds: Vec<PeelRound>,
    /// Rounds whose stream count exceeds half the extension while some
    /// receiver still sees interference.
    pub violations: Vec<String>,
}

impl PeelingPlan {
    pub fn num_conditions(&self) -> usize {
        self.rounds.iter().map(|r| r.templates.len()).sum()
    }
}

/// Peeling schedule over the minimal extension `lcm(denominators)`.
pub fn plan_irregular(
    network: &DemandNetwork,
    d: &DoFAssignment,
) -> Result<PeelingPlan, DesignError> {
    plan_with_multiplier(network, d, 1)
}

/// Peeling schedule over `multiplier * lcm(denominators)` slots.
pub fn plan_with_multiplier(
    network: &DemandNetwork,
    d: &DoFAssignment,
    multiplier: usize,
) -> Result<PeelingPlan, DesignError> {
    let k = network.num_transmitters();
    if d.d.len() != k {
        return Err(DesignError::InvalidDof(format!(
            "{} entries for {k} transmitters",
            d.d.len()
        )));
    }
    if d.d.iter().any(Signed::is_negative) {
        return Err(DesignError::InvalidDof("negative entry".into()));
    }
    if multiplier == 0 {
        return Err(DesignError::InvalidDof(
            "extension multiplier must be positive".into(),
        ));
    }
    if d.d.iter().all(Zero::is_zero) {
        return Err(DesignError::InvalidDof(
            "no transmitter has positive DoF".into(),
        ));
    }
    let lcm = common_denominator(d)
        .to_usize()
        .ok_or_else(|| DesignError::InvalidDof("denominator too large".into()))?;
    let extension = lcm * multiplier;
    let scale = Rational::from_integer(extension.into());
    let integer_dof: Vec<usize> =
        d.d.iter()
            .map(|x| (x * &scale).to_integer().to_usize().unwrap_or(0))
            .collect();
    let primes = network.prime_receivers();
    let mut remaining = integer_dof.clone();
    let mut rounds = Vec::new();
    let mut violations = Vec::new();
    while let Some(streams) = remaining.iter().copied().filter(|&r| r > 0).min() {
        let active: Vec<bool> = remaining.iter().map(|&r| r > 0).collect();
        let columns: Vec<usize> = active
            .iter()
            .map(|&a| if a { streams } else { 0 })
            .collect();
        let sets = network.restricted_sets(&active);
        let interference: Vec<(usize, Vec<usize>)> = primes
            .indices
            .iter()
            .map(|&j| (j, sets[j].1.clone()))
            .collect();
        let nodes: Vec<usize> = (0..k).filter(|&t| active[t]).collect();
        let topology = AlignmentTopology::new(&nodes, &interference);
        let templates = topology.condition_templates();
        if 2 * streams > extension && interference.iter().any(|(_, s)| !s.is_empty()) {
            violations.push(format!(
                "round {}: {streams} streams exceed half of extension {extension}",
                rounds.len() + 1
            ));
        }
        for (r, a) in remaining.iter_mut().zip(&active) {
            if *a {
                *r -= streams;
            }
        }
        rounds.push(PeelRound {
            columns,
            streams,
            active,
            sets,
            topology,
            templates,
        });
    }
    Ok(PeelingPlan {
        extension,
        multiplier,
        integer_dof,
        rounds,
        violations,
    })
}

/// How the aided channel's condition targets are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSpec {
    /// Random shared block layout with this many value classes.
    Random { distinct: usize },
    /// The same explicit diagonal for every condition.
    Explicit(DiagonalMatrix),
}

/// Channel meeting every round's conditions exactly.
pub fn synthesize_plan_channel(
    network: &DemandNetwork,
    plan: &PeelingPlan,
    spec: &TargetSpec,
    seed: u64,
    bounds: GainBounds,
) -> Result<ExtendedChannel, DesignError> {
    let tau = plan.extension;
    let mut targets = Vec::new();
    for (s, round) in plan.rounds.iter().enumerate() {
        if round.templates.is_empty() {
            continue;
        }
        let diagonals: Vec<DiagonalMatrix> = match spec {
            TargetSpec::Explicit(t) => {
                if t.size() != tau {
                    return Err(AidingError::SizeMismatch {
                        index: 0,
                        expected: tau,
                        got: t.size(),
                    }
                    .into());
                }
                vec![t.clone(); round.templates.len()]
            }
            TargetSpec::Random { distinct } => {
                let distinct = if s == 0 {
                    *distinct
                } else {
                    (*distinct).min(round.streams)
                };
                random_structures(
                    round.templates.len(),
                    tau,
                    round.streams,
                    distinct,
                    seed.wrapping_add(s as u64),
                )?
                .iter()
                .map(|st| st.assembled())
                .collect()
            }
        };
        let round_targets: Vec<ConditionTarget> = round
            .templates
            .iter()
            .cloned()
            .zip(diagonals)
            .map(|(template, target)| ConditionTarget { template, target })
            .collect();
        check_targets(tau, &round_targets, round.streams).map_err(|e| match e {
            AidingError::Infeasible(reason) => DesignError::Infeasible {
                round: s + 1,
                reason,
            },
            other => other.into(),
        })?;
        targets.extend(round_targets);
    }
    let (k, n) = (network.num_transmitters(), network.num_receivers());
    if targets.is_empty() {
        return Ok(random_channel(tau, k, n, seed, bounds).map_err(AidingError::from)?);
    }
    Ok(synthesize_targets(k, n, &targets, tau, seed, bounds)?)
}

/// Per-round verification outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub conditions: Vec<DiagonalMatrix>,
    pub verdict: AidingVerdict,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanDesign {
    pub beamformers: BeamformingSet,
    pub rounds: Vec<RoundOutcome>,
}

impl PlanDesign {
    pub fn feasible(&self) -> bool {
        self.rounds.iter().all(|r| r.verdict.feasible)
    }
}

fn round_outcome(
    graph: &AlignmentGraph,
    tau: usize,
    streams: usize,
    eps: f64,
) -> Result<RoundOutcome, DesignError> {
    let conditions: Vec<DiagonalMatrix> =
        cycle_conditions(graph).into_iter().map(|c| c.t).collect();
    let verdict = verify_conditions(tau, &conditions, streams, eps)?;
    Ok(RoundOutcome {
        conditions,
        verdict,
    })
}

/// Verifies each round's conditions on `channel` and designs its columns on
/// the resulting partition.
pub fn design_plan(
    channel: &ExtendedChannel,
    plan: &PeelingPlan,
    eps: f64,
    seed: u64,
) -> Result<PlanDesign, DesignError> {
    run_plan(channel, plan, eps, seed, false)
}

/// Same rounds but every root is generic over all slots, ignoring the
/// conditions.
pub fn design_plan_forced(
    channel: &ExtendedChannel,
    plan: &PeelingPlan,
    eps: f64,
    seed: u64,
) -> Result<PlanDesign, DesignError> {
    run_plan(channel, plan, eps, seed, true)
}

fn run_plan(
    channel: &ExtendedChannel,
    plan: &PeelingPlan,
    eps: f64,
    seed: u64,
    forced: bool,
) -> Result<PlanDesign, DesignError> {
    let tau = plan.extension;
    let k = channel.num_transmitters();
    let mut beamformers = BeamformingSet::empty(tau, k);
    let mut rounds = Vec::new();
    for (s, round) in plan.rounds.iter().enumerate() {
        let graph = AlignmentGraph::new(round.topology.clone(), channel)?;
        let outcome = round_outcome(&graph, tau, round.streams, eps)?;
        let partition = if forced {
            JointPartition::whole(tau)
        } else if outcome.verdict.feasible {
            if round.templates.is_empty() {
                JointPartition::whole(tau)
            } else {
                outcome.verdict.partition.clone()
            }
        } else {
            return Err(DesignError::Infeasible {
                round: s + 1,
                reason: outcome.verdict.reason.clone(),
            });
        };
        let part = design_beamformers(
            &graph,
            &partition,
            round.streams,
            k,
            seed.wrapping_add(s as u64),
        )?;
        for t in 0..k {
            if round.active[t] {
                beamformers.append(t, part.matrix(t));
            }
        }
        rounds.push(outcome);
    }
    Ok(PlanDesign {
        beamformers,
        rounds,
    })
}
