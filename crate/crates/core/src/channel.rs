//! Diagonal channel extensions `H^[jk] = diag(h^[jk](1), ..., h^[jk](τ))`.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::diag::DiagonalMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid gain bounds [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
    #[error("extension length must be at least 1")]
    EmptyExtension,
    #[error("channel H[{receiver},{transmitter}] is singular")]
    Singular { receiver: usize, transmitter: usize },
    #[error("channel dump line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("channel dump is missing H[{receiver},{transmitter}]")]
    Missing { receiver: usize, transmitter: usize },
}

/// Magnitude bounds `0 < min <= |h| <= max < inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainBounds {
    pub min: f64,
    pub max: f64,
}

impl GainBounds {
    pub fn new(min: f64, max: f64) -> Result<Self, ChannelError> {
        if !(min > 0.0 && min <= max && max.is_finite()) {
            return Err(ChannelError::InvalidBounds { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, z: Complex64) -> bool {
        let m = z.norm();
        m >= self.min && m <= self.max
    }

    /// Complex gain with magnitude uniform in the bounds and uniform phase.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let mag = if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        };
        Complex64::from_polar(mag, rng.random_range(0.0..TAU))
    }
}

impl Default for GainBounds {
    fn default() -> Self {
        Self { min: 0.5, max: 2.0 }
    }
}

/// Fully connected extended channel: one τ×τ diagonal matrix per
/// (receiver, transmitter) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedChannel {
    tau: usize,
    receivers: usize,
    transmitters: usize,
    gains: Vec<DiagonalMatrix>,
    bounds: GainBounds,
}

impl ExtendedChannel {
    pub fn from_fn(
        tau: usize,
        receivers: usize,
        transmitters: usize,
        bounds: GainBounds,
        mut gain: impl FnMut(usize, usize) -> DiagonalMatrix,
    ) -> Self {
        let mut gains = Vec::with_capacity(receivers * transmitters);
        for j in 0..receivers {
            for k in 0..transmitters {
                let h = gain(j, k);
                assert_eq!(h.size(), tau, "gain H[{j},{k}] has wrong size");
                gains.push(h);
            }
        }
        Self {
            tau,
            receivers,
            transmitters,
            gains,
            bounds,
        }
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers
    }

    pub fn num_transmitters(&self) -> usize {
        self.transmitters
    }

    pub fn bounds(&self) -> GainBounds {
        self.bounds
    }

    pub fn gain(&self, receiver: usize, transmitter: usize) -> &DiagonalMatrix {
        &self.gains[receiver * self.transmitters + transmitter]
    }

    pub fn gain_mut(&mut self, receiver: usize, transmitter: usize) -> &mut DiagonalMatrix {
        &mut self.gains[receiver * self.transmitters + transmitter]
    }

    pub fn within_bounds(&self) -> bool {
        self.gains
            .iter()
            .all(|h| h.entries().iter().all(|&z| self.bounds.contains(z)))
    }

    /// First singular gain matrix, if any.
    pub fn check_invertible(&self) -> Result<(), ChannelError> {
        for j in 0..self.receivers {
            for k in 0..self.transmitters {
                if !self.gain(j, k).is_invertible() {
                    return Err(ChannelError::Singular {
                        receiver: j,
                        transmitter: k,
                    });
                }
            }
        }
        Ok(())
    }

    /// Channel over a subset of slots, in the given order.
    pub fn select_slots(&self, slots: &[usize]) -> Self {
        Self::from_fn(
            slots.len(),
            self.receivers,
            self.transmitters,
            self.bounds,
            |j, k| {
                let h = self.gain(j, k);
                DiagonalMatrix::new(slots.iter().map(|&p| h.get(p)).collect())
            },
        )
    }

    /// One line per (j, k): `H j k re1 im1 re2 im2 ...`, one-based indices.
    /// Floats use the shortest representation that round-trips exactly.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        for j in 0..self.receivers {
            for k in 0..self.transmitters {
                write!(out, "H {} {}", j + 1, k + 1).unwrap();
                for z in self.gain(j, k).entries() {
                    write!(out, " {:?} {:?}", z.re, z.im).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    /// Parses [`ExtendedChannel::to_dump`] output. Blank lines and `#`
    /// comments are skipped; every (j, k) pair up to the largest index seen
    /// must be present, all with the same τ.
    pub fn from_dump(text: &str, bounds: GainBounds) -> Result<Self, ChannelError> {
        let mut entries: Vec<(usize, usize, DiagonalMatrix)> = Vec::new();
        let mut tau = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: &str| ChannelError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let mut fields = line.split_whitespace();
            if fields.next() != Some("H") {
                return Err(parse_err("expected leading 'H'"));
            }
            let j: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .filter(|&v| v >= 1)
                .ok_or_else(|| parse_err("bad receiver index"))?;
            let k: usize = fields
                .next()
                .and_then(|s| s.parse().ok())
                .filter(|&v| v >= 1)
                .ok_or_else(|| parse_err("bad transmitter index"))?;
            let values: Vec<f64> = fields
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| parse_err("bad float"))?;
            if values.is_empty() || !values.len().is_multiple_of(2) {
                return Err(parse_err("expected re/im pairs"));
            }
            let diag: Vec<Complex64> = values
                .chunks(2)
                .map(|p| Complex64::new(p[0], p[1]))
                .collect();
            match tau {
                None => tau = Some(diag.len()),
                Some(t) if t != diag.len() => {
                    return Err(parse_err("inconsistent extension length"))
                }
                _ => {}
            }
            entries.push((j - 1, k - 1, DiagonalMatrix::new(diag)));
        }
        let tau = tau.ok_or(ChannelError::EmptyExtension)?;
        let receivers = entries.iter().map(|e| e.0).max().unwrap() + 1;
        let transmitters = entries.iter().map(|e| e.1).max().unwrap() + 1;
        let mut slots: Vec<Option<DiagonalMatrix>> = vec![None; receivers * transmitters];
        for (j, k, h) in entries {
            slots[j * transmitters + k] = Some(h);
        }
        let mut gains = Vec::with_capacity(slots.len());
        for (idx, h) in slots.into_iter().enumerate() {
            gains.push(h.ok_or(ChannelError::Missing {
                receiver: idx / transmitters,
                transmitter: idx % transmitters,
            })?);
        }
        Ok(Self {
            tau,
            receivers,
            transmitters,
            gains,
            bounds,
        })
    }
}

/// Deterministic i.i.d. channel: magnitudes uniform in `bounds`, phases uniform.
pub fn random_channel(
    tau: usize,
    transmitters: usize,
    receivers: usize,
    seed: u64,
    bounds: GainBounds,
) -> Result<ExtendedChannel, ChannelError> {
    if tau == 0 {
        return Err(ChannelError::EmptyExtension);
    }
    GainBounds::new(bounds.min, bounds.max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ExtendedChannel::from_fn(
        tau,
        receivers,
        transmitters,
        bounds,
        |_, _| DiagonalMatrix::new((0..tau).map(|_| bounds.sample(&mut rng)).collect()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_per_seed() {
        let a = random_channel(3, 6, 3, 11, GainBounds::default()).unwrap();
        let b = random_channel(3, 6, 3, 11, GainBounds::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn respects_bounds() {
        let ch = random_channel(8, 5, 4, 3, GainBounds::new(0.5, 2.0).unwrap()).unwrap();
        assert!(ch.within_bounds());
        ch.check_invertible().unwrap();
    }

    #[test]
    fn bad_bounds_rejected() {
        assert!(GainBounds::new(0.0, 1.0).is_err());
        assert!(GainBounds::new(2.0, 1.0).is_err());
        assert!(GainBounds::new(1.0, f64::INFINITY).is_err());
        let bad = GainBounds {
            min: -1.0,
            max: 1.0,
        };
        assert!(random_channel(2, 2, 2, 0, bad).is_err());
        assert_eq!(
            random_channel(0, 2, 2, 0, GainBounds::default()),
            Err(ChannelError::EmptyExtension)
        );
    }

    #[test]
    fn seeds_give_distinct_entries() {
        // 1000 draws from two seeds; a continuous distribution never collides.
        let a = random_channel(1000, 1, 1, 1, GainBounds::default()).unwrap();
        let b = random_channel(1000, 1, 1, 2, GainBounds::default()).unwrap();
        let collisions = a
            .gain(0, 0)
            .entries()
            .iter()
            .zip(b.gain(0, 0).entries())
            .filter(|(x, y)| x == y)
            .count();
        assert_eq!(collisions, 0);
    }

    #[test]
    fn dump_rejects_garbage() {
        let err = ExtendedChannel::from_dump("H 1 1 0.5", GainBounds::default()).unwrap_err();
        assert!(matches!(err, ChannelError::Parse { line: 1, .. }));
        let err = ExtendedChannel::from_dump("H 1 1 1 0\nH 2 2 1 0\n", GainBounds::default())
            .unwrap_err();
        assert!(matches!(err, ChannelError::Missing { .. }));
        let err = ExtendedChannel::from_dump("H 1 1 1 0\nH 1 2 1 0 1 0\n", GainBounds::default())
            .unwrap_err();
        assert!(matches!(err, ChannelError::Parse { line: 2, .. }));
    }

    #[test]
    fn slot_selection() {
        let ch = random_channel(5, 2, 2, 9, GainBounds::default()).unwrap();
        let sub = ch.select_slots(&[4, 0]);
        assert_eq!(sub.tau(), 2);
        assert_eq!(sub.gain(1, 0).get(0), ch.gain(1, 0).get(4));
        assert_eq!(sub.gain(1, 0).get(1), ch.gain(1, 0).get(0));
    }

    proptest! {
        #[test]
        fn dump_round_trip_is_lossless(seed in any::<u64>(), tau in 1usize..5, k in 1usize..4, n in 1usize..4) {
            let ch = random_channel(tau, k, n, seed, GainBounds::default()).unwrap();
            let back = ExtendedChannel::from_dump(&ch.to_dump(), ch.bounds()).unwrap();
            prop_assert_eq!(back, ch);
        }
    }
}
