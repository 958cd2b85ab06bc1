//! Channel aiding: checking the block structure of `T` matrices, building
//! channels that satisfy it exactly, and matching slots to it approximately.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::{Signed, ToPrimitive};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{random_channel, ChannelError, ExtendedChannel, GainBounds};
use crate::diag::{approx_eq, relative_gap, DiagonalMatrix};
use crate::graph::{AlignmentTopology, ChannelFactor, ConditionTemplate};
use crate::lp::{build_lp, common_denominator, solve_optimal_dof, LpError, Rational};
use crate::network::DemandNetwork;

/// Redraws allowed per slot when a solved gain leaves the magnitude bounds.
pub const RETRY_BUDGET: usize = 32;

/// Default relative tolerance for approximate slot matching.
pub const EPS_MATCH: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AidingError {
    #[error("condition {index} has size {got}, expected {expected}")]
    SizeMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid aiding structure: {0}")]
    InvalidStructure(String),
    #[error("prescribed structure is infeasible: {0}")]
    Infeasible(String),
    #[error("no designated channel available for condition {0}")]
    NoDesignatedChannel(usize),
    #[error("slot {position}: solved gains left the bounds after {attempts} redraws")]
    BoundsExhausted { position: usize, attempts: usize },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("slot stream is empty")]
    EmptyStream,
    #[error("tolerance must be finite and nonnegative, got {0}")]
    InvalidTolerance(f64),
}

/// Positions `0..tau` grouped by simultaneous equality across conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointPartition {
    tau: usize,
    blocks: Vec<Vec<usize>>,
}

impl JointPartition {
    /// A single block holding every position.
    pub fn whole(tau: usize) -> Self {
        Self {
            tau,
            blocks: vec![(0..tau).collect()],
        }
    }

    /// Greedy grouping: each position joins the first block whose first
    /// member agrees with it on every condition within `eps`.
    pub fn build(tau: usize, conditions: &[&DiagonalMatrix], eps: f64) -> Self {
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        for p in 0..tau {
            let home = blocks.iter().position(|b| {
                conditions
                    .iter()
                    .all(|t| approx_eq(t.get(p), t.get(b[0]), eps))
            });
            match home {
                Some(b) => blocks[b].push(p),
                None => blocks.push(vec![p]),
            }
        }
        Self { tau, blocks }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }

    pub fn block_of(&self, position: usize) -> Option<usize> {
        self.blocks.iter().position(|b| b.contains(&position))
    }

    /// Every block size is a multiple of `tau / n`, so `n` streams can be
    /// split so that each block carries its proportional share.
    pub fn is_balanced(&self, n: usize) -> bool {
        n > 0 && self.tau.is_multiple_of(n) && {
            let unit = self.tau / n;
            self.blocks.iter().all(|b| b.len() % unit == 0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AidingVerdict {
    pub feasible: bool,
    /// Feasible and each block size is a multiple of `tau / n`.
    pub balanced: bool,
    pub partition: JointPartition,
    pub reason: String,
}

/// Checks the aiding structure on the joint diagonal multiset: every block of
/// the joint partition has at least two positions, there are at most `n`
/// blocks, and the blocks can host `n` vectors (`tau - blocks >= n`).
/// An empty condition list is trivially feasible.
pub fn verify_conditions<'a, I>(
    tau: usize,
    conditions: I,
    n: usize,
    eps: f64,
) -> Result<AidingVerdict, AidingError>
where
    I: IntoIterator<Item = &'a DiagonalMatrix>,
{
    let conditions: Vec<&DiagonalMatrix> = conditions.into_iter().collect();
    for (index, t) in conditions.iter().enumerate() {
        if t.size() != tau {
            return Err(AidingError::SizeMismatch {
                index,
                expected: tau,
                got: t.size(),
            });
        }
    }
    let partition = JointPartition::build(tau, &conditions, eps);
    let blocks = partition.blocks().len();
    let reason = if n == 0 {
        Some("n must be positive".to_string())
    } else if conditions.is_empty() {
        None
    } else if let Some(b) = partition.blocks().iter().find(|b| b.len() < 2) {
        Some(format!("position {} has a unique diagonal value", b[0] + 1))
    } else if blocks > n {
        Some(format!("{blocks} blocks exceed n = {n}"))
    } else if tau - blocks < n {
        Some(format!(
            "{blocks} blocks over {tau} positions cannot host {n} vectors"
        ))
    } else {
        None
    };
    let feasible = reason.is_none();
    Ok(AidingVerdict {
        feasible,
        balanced: feasible && partition.is_balanced(n),
        partition,
        reason: reason.unwrap_or_else(|| "ok".to_string()),
    })
}

/// `P diag(T~, T~, f(T~)) P^T` for one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct AidingStructure {
    n: usize,
    permutation: Vec<usize>,
    tilde: Vec<Complex64>,
    mapping: Vec<usize>,
}

impl AidingStructure {
    /// `permutation[q]` is the diagonal position receiving entry `q` of the
    /// unpermuted layout; `mapping` indexes into `tilde`.
    pub fn new(
        n: usize,
        permutation: Vec<usize>,
        tilde: Vec<Complex64>,
        mapping: Vec<usize>,
    ) -> Result<Self, AidingError> {
        let tau = permutation.len();
        let bad = |m: &str| Err(AidingError::InvalidStructure(m.to_string()));
        if tilde.is_empty() || tilde.len() > n {
            return bad("block T~ needs between 1 and n values");
        }
        if 2 * tilde.len() > tau {
            return bad("extension too short for two copies of T~");
        }
        if mapping.len() != tau - 2 * tilde.len() {
            return bad("mapping length must be tau - 2 n1");
        }
        if mapping.iter().any(|&m| m >= tilde.len()) {
            return bad("mapping refers outside T~");
        }
        let mut seen = permutation.clone();
        seen.sort_unstable();
        if seen != (0..tau).collect::<Vec<_>>() {
            return bad("permutation is not a bijection");
        }
        if tilde.iter().any(|z| z.norm() == 0.0 || !z.is_finite()) {
            return bad("T~ values must be finite and nonzero");
        }
        Ok(Self {
            n,
            permutation,
            tilde,
            mapping,
        })
    }

    /// `kappa I_tau`.
    pub fn scaled_identity(tau: usize, n: usize, kappa: Complex64) -> Result<Self, AidingError> {
        if tau < 2 {
            return Err(AidingError::Infeasible(format!(
                "extension of length {tau} cannot hold a repeated value"
            )));
        }
        Self::new(n, (0..tau).collect(), vec![kappa], vec![0; tau - 2])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> usize {
        self.permutation.len()
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    pub fn tilde(&self) -> &[Complex64] {
        &self.tilde
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    /// Same permutation and mapping with other block values.
    pub fn with_values(&self, tilde: Vec<Complex64>) -> Result<Self, AidingError> {
        Self::new(
            self.n,
            self.permutation.clone(),
            tilde,
            self.mapping.clone(),
        )
    }

    pub fn assembled(&self) -> DiagonalMatrix {
        let layout: Vec<Complex64> = self
            .tilde
            .iter()
            .chain(&self.tilde)
            .copied()
            .chain(self.mapping.iter().map(|&m| self.tilde[m]))
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); layout.len()];
        for (q, &p) in self.permutation.iter().enumerate() {
            out[p] = layout[q];
        }
        DiagonalMatrix::new(out)
    }
}

/// Random block value with magnitude in `[0.8, 1.25]`.
fn tilde_value<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(rng.random_range(0.8..=1.25), rng.random_range(0.0..TAU))
}

/// `count` structures sharing one random permutation and mapping, with
/// `distinct` value classes whose sizes are multiples of `tau / n`. Each
/// condition gets its own random block values.
pub fn random_structures(
    count: usize,
    tau: usize,
    n: usize,
    distinct: usize,
    seed: u64,
) -> Result<Vec<AidingStructure>, AidingError> {
    if n == 0 || distinct == 0 || distinct > n {
        return Err(AidingError::Infeasible(format!(
            "need 1 <= distinct values ({distinct}) <= n ({n})"
        )));
    }
    if !tau.is_multiple_of(n) || tau / n < 2 {
        return Err(AidingError::Infeasible(format!(
            "extension {tau} is not a multiple of 2n = {}",
            2 * n
        )));
    }
    let unit = tau / n;
    let mut mapping = Vec::new();
    for b in 0..distinct {
        let share = n / distinct + usize::from(b < n % distinct);
        mapping.extend(std::iter::repeat_n(b, unit * share - 2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut permutation: Vec<usize> = (0..tau).collect();
    permutation.shuffle(&mut rng);
    (0..count)
        .map(|_| {
            let tilde = (0..distinct).map(|_| tilde_value(&mut rng)).collect();
            AidingStructure::new(n, permutation.clone(), tilde, mapping.clone())
        })
        .collect()
}

/// A condition template with the diagonal its product must equal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionTarget {
    pub template: ConditionTemplate,
    pub target: DiagonalMatrix,
}

/// Channel gain solved for, per condition.
fn designated_factors(targets: &[ConditionTarget]) -> Result<Vec<ChannelFactor>, AidingError> {
    let mut chosen: Vec<ChannelFactor> = Vec::new();
    for (c, t) in targets.iter().enumerate() {
        let earlier: BTreeSet<(usize, usize)> = targets[..c]
            .iter()
            .flat_map(|o| {
                o.template
                    .factors
                    .iter()
                    .map(|f| (f.receiver, f.transmitter))
            })
            .collect();
        let taken = |f: &ChannelFactor| {
            earlier.contains(&(f.receiver, f.transmitter))
                || chosen
                    .iter()
                    .any(|g| (g.receiver, g.transmitter) == (f.receiver, f.transmitter))
        };
        let closing = t.template.factors.iter().find(|f| {
            f.receiver == t.template.receiver
                && f.transmitter == t.template.to
                && f.exponent.abs() == 1
        });
        let pick = closing
            .filter(|f| !taken(f))
            .or_else(|| {
                t.template
                    .factors
                    .iter()
                    .find(|f| f.exponent.abs() == 1 && !taken(f))
            })
            .ok_or(AidingError::NoDesignatedChannel(c))?;
        chosen.push(*pick);
    }
    Ok(chosen)
}

/// Draws a base channel and then, slot by slot, solves one designated gain
/// per condition so that every cycle product equals its target exactly.
/// Gains feeding later conditions are redrawn when a solved gain falls
/// outside the bounds.
pub fn synthesize_targets(
    transmitters: usize,
    receivers: usize,
    targets: &[ConditionTarget],
    tau: usize,
    seed: u64,
    bounds: GainBounds,
) -> Result<ExtendedChannel, AidingError> {
    for (index, t) in targets.iter().enumerate() {
        if t.target.size() != tau {
            return Err(AidingError::SizeMismatch {
                index,
                expected: tau,
                got: t.target.size(),
            });
        }
    }
    let mut channel = random_channel(tau, transmitters, receivers, seed, bounds)?;
    let designated = designated_factors(targets)?;
    let is_designated = |r: usize, k: usize| {
        designated
            .iter()
            .any(|f| f.receiver == r && f.transmitter == k)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a1d5_0f00_d17e);

    for p in 0..tau {
        let mut solved = false;
        for _ in 0..RETRY_BUDGET {
            let mut locked: BTreeSet<(usize, usize)> = BTreeSet::new();
            let mut all_ok = true;
            for (t, d) in targets.iter().zip(&designated) {
                let free: Vec<(usize, usize)> = t
                    .template
                    .factors
                    .iter()
                    .map(|f| (f.receiver, f.transmitter))
                    .filter(|&(r, k)| !is_designated(r, k) && !locked.contains(&(r, k)))
                    .collect();
                let mut ok = false;
                for attempt in 0..RETRY_BUDGET {
                    if attempt > 0 {
                        if free.is_empty() {
                            break;
                        }
                        for &(r, k) in &free {
                            channel.gain_mut(r, k).entries_mut()[p] = bounds.sample(&mut rng);
                        }
                    }
                    let rest = t
                        .template
                        .factors
                        .iter()
                        .filter(|f| (f.receiver, f.transmitter) != (d.receiver, d.transmitter))
                        .fold(Complex64::new(1.0, 0.0), |acc, f| {
                            acc * channel
                                .gain(f.receiver, f.transmitter)
                                .get(p)
                                .powi(f.exponent)
                        });
                    let value = (t.target.get(p) / rest).powi(d.exponent);
                    if bounds.contains(value) {
                        channel.gain_mut(d.receiver, d.transmitter).entries_mut()[p] = value;
                        ok = true;
                        break;
                    }
                }
                if !ok {
                    all_ok = false;
                    break;
                }
                locked.extend(
                    t.template
                        .factors
                        .iter()
                        .map(|f| (f.receiver, f.transmitter)),
                );
            }
            if all_ok {
                solved = true;
                break;
            }
            // start the slot over from fresh non-designated gains
            for r in 0..receivers {
                for k in 0..transmitters {
                    if !is_designated(r, k) {
                        channel.gain_mut(r, k).entries_mut()[p] = bounds.sample(&mut rng);
                    }
                }
            }
        }
        if !solved {
            return Err(AidingError::BoundsExhausted {
                position: p,
                attempts: RETRY_BUDGET,
            });
        }
    }
    Ok(channel)
}

/// Aided channel for the network's alignment graph, one structure per
/// fundamental cycle. The structures must jointly pass verification with
/// `n` streams.
pub fn synthesize_aided_channel(
    network: &DemandNetwork,
    n: usize,
    seed: u64,
    bounds: GainBounds,
    structures: &[AidingStructure],
) -> Result<ExtendedChannel, AidingError> {
    let templates = AlignmentTopology::from_network(network).condition_templates();
    if structures.len() != templates.len() {
        return Err(AidingError::InvalidStructure(format!(
            "{} structures for {} conditions",
            structures.len(),
            templates.len()
        )));
    }
    let Some(tau) = structures.first().map(AidingStructure::tau) else {
        return Err(AidingError::InvalidStructure(
            "network has no aiding conditions; use random_channel".into(),
        ));
    };
    let targets: Vec<ConditionTarget> = templates
        .into_iter()
        .zip(structures)
        .map(|(template, s)| ConditionTarget {
            template,
            target: s.assembled(),
        })
        .collect();
    check_targets(tau, &targets, n)?;
    synthesize_targets(
        network.num_transmitters(),
        network.num_receivers(),
        &targets,
        tau,
        seed,
        bounds,
    )
}

/// Rejects target sets that do not jointly verify exactly.
pub fn check_targets(tau: usize, targets: &[ConditionTarget], n: usize) -> Result<(), AidingError> {
    let verdict = verify_conditions(tau, targets.iter().map(|t| &t.target), n, 0.0)?;
    if verdict.feasible {
        Ok(())
    } else {
        Err(AidingError::Infeasible(verdict.reason))
    }
}

/// Outcome of greedy slot matching.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    /// Slot indices of each assembled extension, in position order.
    pub groups: Vec<Vec<usize>>,
    pub consumed: usize,
    pub matched: usize,
    /// `matched` over the consumed slots rounded down to whole extensions.
    pub match_rate: f64,
    /// Largest relative gap between a position and its block's first member.
    pub worst_residual: f64,
}

/// Extension length and per-extension stream count of the network's first
/// alignment round: `tau = n * lcm(denominators)`, `streams = tau * min d`.
pub fn extension_shape(network: &DemandNetwork, n: usize) -> Result<(usize, usize), AidingError> {
    let (d, _) = solve_optimal_dof(&build_lp(network))?;
    let lcm = common_denominator(&d).to_usize().unwrap_or(usize::MAX);
    let tau = n.saturating_mul(lcm);
    let min = d.d.iter().filter(|x| x.is_positive()).min().cloned();
    let streams = min
        .map(|m| {
            (m * Rational::from_integer(BigInt::from(tau)))
                .to_integer()
                .to_usize()
                .unwrap_or(0)
        })
        .unwrap_or(0);
    Ok((tau, streams))
}

/// Groups slots of `stream` (one slot per diagonal position) into extensions
/// whose cycle conditions verify within `eps`.
pub fn match_slots(
    stream: &ExtendedChannel,
    network: &DemandNetwork,
    n: usize,
    eps: f64,
    budget: usize,
) -> Result<MatchReport, AidingError> {
    let (tau, streams) = extension_shape(network, n)?;
    let templates = AlignmentTopology::from_network(network).condition_templates();
    match_slots_with(stream, &templates, tau, streams, eps, budget)
}

/// [`match_slots`] with explicit templates and extension shape.
pub fn match_slots_with(
    stream: &ExtendedChannel,
    templates: &[ConditionTemplate],
    tau: usize,
    streams: usize,
    eps: f64,
    budget: usize,
) -> Result<MatchReport, AidingError> {
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(AidingError::InvalidTolerance(eps));
    }
    if stream.tau() == 0 {
        return Err(AidingError::EmptyStream);
    }
    if streams == 0 || !tau.is_multiple_of(streams) {
        return Err(AidingError::Infeasible(format!(
            "{streams} streams do not divide extension {tau}"
        )));
    }
    let unit = tau / streams;
    let values = templates
        .iter()
        .map(|t| t.evaluate(stream))
        .collect::<Result<Vec<_>, _>>()?;
    let signature_eq =
        |a: usize, b: usize| values.iter().all(|t| approx_eq(t.get(a), t.get(b), eps));

    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut groups = Vec::new();
    let mut worst: f64 = 0.0;
    let consumed = budget.min(stream.tau());
    for slot in 0..consumed {
        match clusters.iter_mut().find(|c| signature_eq(c[0], slot)) {
            Some(c) => c.push(slot),
            None => clusters.push(vec![slot]),
        }
        let units: usize = clusters.iter().map(|c| c.len() / unit).sum();
        if units < streams {
            continue;
        }
        // take whole units from the largest clusters first
        let mut order: Vec<usize> = (0..clusters.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(clusters[i].len() / unit));
        let mut need = streams;
        let mut picked: Vec<(usize, usize)> = Vec::new();
        for i in order {
            if need == 0 {
                break;
            }
            let take = (clusters[i].len() / unit).min(need);
            if take > 0 {
                picked.push((i, take * unit));
                need -= take;
            }
        }
        let mut group: Vec<usize> = picked
            .iter()
            .flat_map(|&(i, len)| clusters[i][..len].iter().copied())
            .collect();
        group.sort_unstable();
        let sub = stream.select_slots(&group);
        let ts = templates
            .iter()
            .map(|t| t.evaluate(&sub))
            .collect::<Result<Vec<_>, _>>()?;
        let verdict = verify_conditions(tau, &ts, streams, eps)?;
        if verdict.balanced {
            for block in verdict.partition.blocks() {
                for t in &ts {
                    for &p in block {
                        worst = worst.max(relative_gap(t.get(p), t.get(block[0])));
                    }
                }
            }
            for &(i, len) in &picked {
                clusters[i].drain(..len);
            }
            clusters.retain(|c| !c.is_empty());
            groups.push(group);
        } else {
            // drop the oldest slot of the first picked cluster and move on
            let (i, _) = picked[0];
            clusters[i].remove(0);
            clusters.retain(|c| !c.is_empty());
        }
    }
    let matched = groups.len() * tau;
    Ok(MatchReport {
        groups,
        consumed,
        matched,
        match_rate: match consumed - consumed % tau {
            0 => 0.0,
            usable => matched as f64 / usable as f64,
        },
        worst_residual: worst,
    })
}

/// Slot stream whose gains have unit magnitude and one of `levels` phases.
pub fn quantized_stream(
    slots: usize,
    transmitters: usize,
    receivers: usize,
    levels: usize,
    seed: u64,
) -> ExtendedChannel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let levels = levels.max(1);
    ExtendedChannel::from_fn(
        slots,
        receivers,
        transmitters,
        GainBounds::default(),
        |_, _| {
            DiagonalMatrix::new(
                (0..slots)
                    .map(|_| {
                        let q = rng.random_range(0..levels) as f64;
                        Complex64::from_polar(1.0, TAU * q / levels as f64)
                    })
                    .collect(),
            )
        },
    )
}

/// Slot stream repeating one random slot.
pub fn constant_stream(
    slots: usize,
    transmitters: usize,
    receivers: usize,
    seed: u64,
    bounds: GainBounds,
) -> Result<ExtendedChannel, AidingError> {
    let base = random_channel(1, transmitters, receivers, seed, bounds)?;
    Ok(ExtendedChannel::from_fn(
        slots,
        receivers,
        transmitters,
        bounds,
        |j, k| DiagonalMatrix::scaled_identity(slots, base.gain(j, k).get(0)),
    ))
}
