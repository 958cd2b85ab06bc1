//! Alignment multigraph and its fundamental-cycle aiding conditions.
//!
//! Nodes are transmitters. Each receiver `i` with at least two interferers
//! contributes a star of edges anchored at its lowest-index interferer `a`:
//! edge `a -> j` carries the label `M = (H^[ij])^-1 H^[ia]`, so that
//! propagating `V^[j] = M V^[a]` aligns `H^[ij] V^[j]` with `H^[ia] V^[a]`.
//!
//! A breadth-first spanning forest fixes every beamformer relative to its
//! component root. Each non-tree edge closes one fundamental cycle, and the
//! ordered product of labels around it is the diagonal matrix `T` whose
//! structure decides whether the cycle can be closed consistently.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::channel::{ChannelError, ExtendedChannel};
use crate::diag::DiagonalMatrix;
use crate::network::DemandNetwork;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("walk is not closed")]
    OpenWalk,
    #[error("walk step {step} does not continue from node {at}")]
    BrokenWalk { step: usize, at: usize },
    #[error("channel has {got} transmitters/receivers, topology needs {need}")]
    ChannelTooSmall { got: usize, need: usize },
}

/// `H^[receiver, transmitter]` raised to `exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelFactor {
    pub receiver: usize,
    pub transmitter: usize,
    pub exponent: i32,
}

impl fmt::Display for ChannelFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H[{},{}]", self.receiver + 1, self.transmitter + 1)?;
        if self.exponent != 1 {
            write!(f, "^{}", self.exponent)?;
        }
        Ok(())
    }
}

/// Evaluates `prod H^e` entrywise.
pub fn evaluate_factors(
    factors: &[ChannelFactor],
    channel: &ExtendedChannel,
) -> Result<DiagonalMatrix, ChannelError> {
    let mut acc = DiagonalMatrix::identity(channel.tau());
    for f in factors {
        let h = channel.gain(f.receiver, f.transmitter);
        let p = h.powi(f.exponent).map_err(|_| ChannelError::Singular {
            receiver: f.receiver,
            transmitter: f.transmitter,
        })?;
        acc = &acc * &p;
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub receiver: usize,
    pub from: usize,
    pub to: usize,
}

/// One traversal of an edge; `forward` means `from -> to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub edge: usize,
    pub forward: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub root: usize,
    pub nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FundamentalCycle {
    /// The non-tree edge that closes the cycle; traversed forward first.
    pub edge: usize,
    pub root: usize,
    pub walk: Vec<Step>,
}

/// Channel-independent structure of the alignment graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentTopology {
    nodes: Vec<usize>,
    edges: Vec<Edge>,
    in_tree: Vec<bool>,
    parent: BTreeMap<usize, Step>,
    components: Vec<Component>,
    /// Nodes in breadth-first order, each with the tree step that reached it.
    order: Vec<(usize, Option<Step>)>,
    cycles: Vec<FundamentalCycle>,
}

impl AlignmentTopology {
    /// Builds the star multigraph from `(receiver, interferers)` pairs. `nodes`
    /// lists transmitters that belong to the graph even if isolated.
    pub fn new(nodes: &[usize], interference: &[(usize, Vec<usize>)]) -> Self {
        let mut node_set: Vec<usize> = nodes.to_vec();
        let mut edges = Vec::new();
        for (receiver, interferers) in interference {
            let mut set = interferers.clone();
            set.sort_unstable();
            set.dedup();
            node_set.extend(&set);
            if let Some((&anchor, rest)) = set.split_first() {
                for &to in rest {
                    edges.push(Edge {
                        receiver: *receiver,
                        from: anchor,
                        to,
                    });
                }
            }
        }
        node_set.sort_unstable();
        node_set.dedup();

        let mut adjacency: BTreeMap<usize, Vec<(usize, usize, bool)>> =
            node_set.iter().map(|&n| (n, Vec::new())).collect();
        for (idx, e) in edges.iter().enumerate() {
            adjacency.get_mut(&e.from).unwrap().push((idx, e.to, true));
            adjacency.get_mut(&e.to).unwrap().push((idx, e.from, false));
        }

        let mut in_tree = vec![false; edges.len()];
        let mut parent = BTreeMap::new();
        let mut depth: BTreeMap<usize, usize> = BTreeMap::new();
        let mut components = Vec::new();
        let mut order = Vec::new();
        for &start in &node_set {
            if depth.contains_key(&start) {
                continue;
            }
            let mut members = vec![start];
            depth.insert(start, 0);
            order.push((start, None));
            let mut queue = VecDeque::from([start]);
            while let Some(node) = queue.pop_front() {
                for &(idx, other, forward) in &adjacency[&node] {
                    if depth.contains_key(&other) {
                        continue;
                    }
                    let step = Step { edge: idx, forward };
                    in_tree[idx] = true;
                    parent.insert(other, step);
                    depth.insert(other, depth[&node] + 1);
                    order.push((other, Some(step)));
                    members.push(other);
                    queue.push_back(other);
                }
            }
            members.sort_unstable();
            components.push(Component {
                root: start,
                nodes: members,
            });
        }

        let mut topo = Self {
            nodes: node_set,
            edges,
            in_tree,
            parent,
            components,
            order,
            cycles: Vec::new(),
        };
        let cycles = (0..topo.edges.len())
            .filter(|&idx| !topo.in_tree[idx])
            .map(|idx| topo.fundamental_cycle(idx, &depth))
            .collect();
        topo.cycles = cycles;
        topo
    }

    /// Graph over the prime receivers' interference sets, with every active
    /// transmitter as a node.
    pub fn from_network(network: &DemandNetwork) -> Self {
        let interference: Vec<(usize, Vec<usize>)> = network
            .prime_receivers()
            .indices
            .iter()
            .map(|&j| (j, network.interference_set(j).expect("receiver exists")))
            .collect();
        Self::new(&network.active_transmitters(), &interference)
    }

    pub fn step_target(&self, step: Step) -> usize {
        let e = self.edges[step.edge];
        if step.forward {
            e.to
        } else {
            e.from
        }
    }

    pub fn step_source(&self, step: Step) -> usize {
        let e = self.edges[step.edge];
        if step.forward {
            e.from
        } else {
            e.to
        }
    }

    fn fundamental_cycle(&self, idx: usize, depth: &BTreeMap<usize, usize>) -> FundamentalCycle {
        let e = self.edges[idx];
        let parent_of = |n: usize| self.step_source(self.parent[&n]);
        // b climbs towards the common ancestor; a's side is collected and reversed.
        let (mut a, mut b) = (e.from, e.to);
        let mut up = Vec::new();
        let mut down = Vec::new();
        while a != b {
            if depth[&b] >= depth[&a] {
                let s = self.parent[&b];
                up.push(Step {
                    edge: s.edge,
                    forward: !s.forward,
                });
                b = parent_of(b);
            } else {
                down.push(self.parent[&a]);
                a = parent_of(a);
            }
        }
        let mut walk = vec![Step {
            edge: idx,
            forward: true,
        }];
        walk.extend(up);
        walk.extend(down.into_iter().rev());
        let root = self
            .components
            .iter()
            .find(|c| c.nodes.binary_search(&e.from).is_ok())
            .map(|c| c.root)
            .unwrap();
        FundamentalCycle {
            edge: idx,
            root,
            walk,
        }
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_tree_edge(&self, edge: usize) -> bool {
        self.in_tree[edge]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn cycles(&self) -> &[FundamentalCycle] {
        &self.cycles
    }

    /// Breadth-first visiting order with the tree step reaching each node.
    pub fn propagation_order(&self) -> &[(usize, Option<Step>)] {
        &self.order
    }

    pub fn find_edge(&self, receiver: usize, from: usize, to: usize) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.receiver == receiver && e.from == from && e.to == to)
    }

    /// Symbolic product of the labels along a walk, with cancellations applied.
    pub fn walk_factors(&self, walk: &[Step]) -> Vec<ChannelFactor> {
        let mut exps: BTreeMap<(usize, usize), i32> = BTreeMap::new();
        for step in walk {
            let e = self.edges[step.edge];
            let sign = if step.forward { 1 } else { -1 };
            *exps.entry((e.receiver, e.to)).or_default() -= sign;
            *exps.entry((e.receiver, e.from)).or_default() += sign;
        }
        exps.into_iter()
            .filter(|&(_, e)| e != 0)
            .map(|((receiver, transmitter), exponent)| ChannelFactor {
                receiver,
                transmitter,
                exponent,
            })
            .collect()
    }

    /// Expresses a closed walk in the fundamental-cycle basis: entry `c` is
    /// the exponent of cycle `c`'s condition in the walk's product.
    pub fn cycle_coordinates(&self, walk: &[Step]) -> Result<Vec<i64>, GraphError> {
        let Some(first) = walk.first() else {
            return Ok(vec![0; self.cycles.len()]);
        };
        let start = self.step_source(*first);
        let mut at = start;
        let mut net = vec![0i64; self.edges.len()];
        for (i, step) in walk.iter().enumerate() {
            if self.step_source(*step) != at {
                return Err(GraphError::BrokenWalk { step: i, at });
            }
            at = self.step_target(*step);
            net[step.edge] += if step.forward { 1 } else { -1 };
        }
        if at != start {
            return Err(GraphError::OpenWalk);
        }
        Ok(self.cycles.iter().map(|c| net[c.edge]).collect())
    }

    /// Independent-cycle count `#edges - #nodes + #components`.
    pub fn cyclomatic_number(&self) -> usize {
        self.edges.len() + self.components.len() - self.nodes.len()
    }

    /// Channel-independent form of each fundamental-cycle condition.
    pub fn condition_templates(&self) -> Vec<ConditionTemplate> {
        self.cycles
            .iter()
            .enumerate()
            .map(|(index, cycle)| {
                let e = self.edges[cycle.edge];
                ConditionTemplate {
                    cycle: index,
                    root: cycle.root,
                    receiver: e.receiver,
                    from: e.from,
                    to: e.to,
                    factors: self.walk_factors(&cycle.walk),
                }
            })
            .collect()
    }
}

/// Alignment topology with edge labels evaluated on a channel.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentGraph {
    topology: AlignmentTopology,
    labels: Vec<DiagonalMatrix>,
}

impl AlignmentGraph {
    pub fn new(topology: AlignmentTopology, channel: &ExtendedChannel) -> Result<Self, GraphError> {
        let need_rx = topology
            .edges
            .iter()
            .map(|e| e.receiver + 1)
            .max()
            .unwrap_or(0);
        let need_tx = topology.nodes.iter().map(|n| n + 1).max().unwrap_or(0);
        if channel.num_receivers() < need_rx {
            return Err(GraphError::ChannelTooSmall {
                got: channel.num_receivers(),
                need: need_rx,
            });
        }
        if channel.num_transmitters() < need_tx {
            return Err(GraphError::ChannelTooSmall {
                got: channel.num_transmitters(),
                need: need_tx,
            });
        }
        let labels = topology
            .edges
            .iter()
            .map(|e| {
                let inv = channel.gain(e.receiver, e.to).inverse().map_err(|_| {
                    ChannelError::Singular {
                        receiver: e.receiver,
                        transmitter: e.to,
                    }
                })?;
                if !channel.gain(e.receiver, e.from).is_invertible() {
                    return Err(ChannelError::Singular {
                        receiver: e.receiver,
                        transmitter: e.from,
                    });
                }
                Ok(&inv * channel.gain(e.receiver, e.from))
            })
            .collect::<Result<Vec<_>, ChannelError>>()?;
        Ok(Self { topology, labels })
    }

    pub fn topology(&self) -> &AlignmentTopology {
        &self.topology
    }

    pub fn label(&self, edge: usize) -> &DiagonalMatrix {
        &self.labels[edge]
    }

    /// Ordered product of labels along a walk, inverting backward steps.
    pub fn walk_product(&self, walk: &[Step]) -> DiagonalMatrix {
        let tau = self.labels.first().map(|l| l.size()).unwrap_or(1);
        walk.iter()
            .fold(DiagonalMatrix::identity(tau), |acc, step| {
                let label = &self.labels[step.edge];
                if step.forward {
                    &acc * label
                } else {
                    &acc * &label.inverse().expect("labels are invertible")
                }
            })
    }
}

pub fn build_alignment_graph(
    network: &DemandNetwork,
    channel: &ExtendedChannel,
) -> Result<AlignmentGraph, GraphError> {
    AlignmentGraph::new(AlignmentTopology::from_network(network), channel)
}

/// A fundamental-cycle condition before a channel is attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionTemplate {
    pub cycle: usize,
    /// Component root `u` whose beamformer the condition constrains.
    pub root: usize,
    /// Receiver `i` and endpoints of the closing edge (`j` is `to`).
    pub receiver: usize,
    pub from: usize,
    pub to: usize,
    pub factors: Vec<ChannelFactor>,
}

impl ConditionTemplate {
    pub fn evaluate(&self, channel: &ExtendedChannel) -> Result<DiagonalMatrix, ChannelError> {
        evaluate_factors(&self.factors, channel)
    }

    pub fn symbolic(&self) -> String {
        self.factors
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for ConditionTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T[{}; {},{}] = {}",
            self.receiver + 1,
            self.to + 1,
            self.root + 1,
            self.symbolic()
        )
    }
}

/// A channel aiding condition: the cycle template plus its evaluated `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct AidingCondition {
    pub template: ConditionTemplate,
    pub t: DiagonalMatrix,
}

/// One condition per fundamental cycle of the graph.
pub fn cycle_conditions(graph: &AlignmentGraph) -> Vec<AidingCondition> {
    graph
        .topology
        .condition_templates()
        .into_iter()
        .map(|template| {
            let cycle = &graph.topology.cycles[template.cycle];
            AidingCondition {
                t: graph.walk_product(&cycle.walk),
                template,
            }
        })
        .collect()
}
