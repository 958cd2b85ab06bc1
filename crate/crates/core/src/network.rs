//! Demand topologies for single-antenna interference networks.
//!
//! Transmitter and receiver indices are zero-based throughout the crate. The
//! text formats (scenario files, dumps, reports) use one-based indices and
//! convert at the boundary.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetworkError {
    #[error("network needs at least one transmitter")]
    NoTransmitters,
    #[error("network needs at least one receiver")]
    NoReceivers,
    #[error("receiver {receiver} requests no messages")]
    EmptyDemand { receiver: usize },
    #[error("receiver {receiver} requests transmitter {index}, but K = {k}")]
    IndexOutOfRange {
        receiver: usize,
        index: usize,
        k: usize,
    },
    #[error("receiver {receiver} does not exist (N = {n})")]
    NoSuchReceiver { receiver: usize, n: usize },
}

/// A K-transmitter, N-receiver network where receiver `j` decodes the
/// messages of the transmitters listed in `demands[j]`.
///
/// Construction validates and canonicalizes: demand sets are sorted and
/// deduplicated, and transmitters requested by nobody are flagged inactive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DemandNetwork {
    k: usize,
    demands: Vec<Vec<usize>>,
    active: Vec<bool>,
}

impl DemandNetwork {
    pub fn new(k: usize, demands: Vec<Vec<usize>>) -> Result<Self, NetworkError> {
        if k == 0 {
            return Err(NetworkError::NoTransmitters);
        }
        if demands.is_empty() {
            return Err(NetworkError::NoReceivers);
        }
        let mut active = vec![false; k];
        let mut canonical = Vec::with_capacity(demands.len());
        for (receiver, mut set) in demands.into_iter().enumerate() {
            if set.is_empty() {
                return Err(NetworkError::EmptyDemand { receiver });
            }
            if let Some(&index) = set.iter().find(|&&t| t >= k) {
                return Err(NetworkError::IndexOutOfRange { receiver, index, k });
            }
            set.sort_unstable();
            set.dedup();
            for &t in &set {
                active[t] = true;
            }
            canonical.push(set);
        }
        Ok(Self {
            k,
            demands: canonical,
            active,
        })
    }

    /// Builds a network from one-based indices, the way demand sets are
    /// usually written down (`{1,4}, {2,5}, {3,6}`).
    pub fn from_one_based(k: usize, demands: &[&[usize]]) -> Result<Self, NetworkError> {
        let mut converted = Vec::with_capacity(demands.len());
        for (receiver, set) in demands.iter().enumerate() {
            let mut zero = Vec::with_capacity(set.len());
            for &t in set.iter() {
                if t == 0 || t > k {
                    return Err(NetworkError::IndexOutOfRange {
                        receiver,
                        index: t,
                        k,
                    });
                }
                zero.push(t - 1);
            }
            converted.push(zero);
        }
        Self::new(k, converted)
    }

    pub fn num_transmitters(&self) -> usize {
        self.k
    }

    pub fn num_receivers(&self) -> usize {
        self.demands.len()
    }

    pub fn demands(&self) -> &[Vec<usize>] {
        &self.demands
    }

    pub fn demand(&self, receiver: usize) -> &[usize] {
        &self.demands[receiver]
    }

    pub fn is_active(&self, transmitter: usize) -> bool {
        self.active[transmitter]
    }

    pub fn active_transmitters(&self) -> Vec<usize> {
        (0..self.k).filter(|&t| self.active[t]).collect()
    }

    pub fn num_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Active transmitters whose messages interfere at `receiver`.
    pub fn interference_set(&self, receiver: usize) -> Result<Vec<usize>, NetworkError> {
        let demand = self
            .demands
            .get(receiver)
            .ok_or(NetworkError::NoSuchReceiver {
                receiver,
                n: self.demands.len(),
            })?;
        Ok((0..self.k)
            .filter(|&t| self.active[t] && demand.binary_search(&t).is_err())
            .collect())
    }

    /// Receivers whose demand set is maximal under inclusion. Among receivers
    /// with identical sets only the lowest index is kept.
    pub fn prime_receivers(&self) -> PrimeReceiverSet {
        let indices =
            (0..self.demands.len())
                .filter(|&j| {
                    let sj = &self.demands[j];
                    !self.demands.iter().enumerate().any(|(i, si)| {
                        i != j && is_subset(sj, si) && (si.len() > sj.len() || i < j)
                    })
                })
                .collect();
        PrimeReceiverSet { indices }
    }

    /// Same demand structure restricted to the given transmitters. Interference
    /// sets of the restriction are the original ones intersected with `keep`.
    pub fn restricted_sets(&self, keep: &[bool]) -> Vec<(Vec<usize>, Vec<usize>)> {
        (0..self.demands.len())
            .map(|j| {
                let desired = self.demands[j]
                    .iter()
                    .copied()
                    .filter(|&t| keep[t])
                    .collect();
                let interferers = self
                    .interference_set(j)
                    .expect("receiver index in range")
                    .into_iter()
                    .filter(|&t| keep[t])
                    .collect();
                (desired, interferers)
            })
            .collect()
    }
}

impl fmt::Display for DemandNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} network:", self.k, self.demands.len())?;
        for (j, set) in self.demands.iter().enumerate() {
            let items: Vec<String> = set.iter().map(|t| (t + 1).to_string()).collect();
            write!(f, " S{}={{{}}}", j + 1, items.join(","))?;
        }
        Ok(())
    }
}

fn is_subset(small: &[usize], large: &[usize]) -> bool {
    small.iter().all(|t| large.binary_search(t).is_ok())
}

/// Receivers with maximal demand sets; `G` in the DoF region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrimeReceiverSet {
    pub indices: Vec<usize>,
}

impl PrimeReceiverSet {
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, receiver: usize) -> bool {
        self.indices.contains(&receiver)
    }
}
