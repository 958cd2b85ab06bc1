//! Zero-forcing rates over an SNR sweep and DoF slope estimation.

use std::fmt::Write as _;

use num_complex::Complex64;
use thiserror::Error;

use crate::channel::ExtendedChannel;
use crate::design::{verify_alignment, AlignmentReport, BeamformingSet};
use crate::linalg::{self, CMatrix};
use crate::network::DemandNetwork;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration is not decodable:\n{0}")]
    NotDecodable(AlignmentReport),
    #[error("need at least 2 SNR points, got {0}")]
    TooFewPoints(usize),
    #[error("power must be finite and nonnegative, got {0}")]
    InvalidPower(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub snr_db: f64,
    pub power: f64,
    /// Bits per original channel use, one per message.
    pub message_rates: Vec<f64>,
    pub sum_rate: f64,
}

pub fn db_to_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn images(channel: &ExtendedChannel, v: &BeamformingSet, j: usize, ks: &[usize]) -> Vec<CMatrix> {
    ks.iter()
        .filter(|&&k| v.columns(k) > 0)
        .map(|&k| linalg::diag_mul(channel.gain(j, k), &linalg::normalize_columns(v.matrix(k))))
        .collect()
}

fn point(snr_db: f64, per_receiver: Vec<Vec<Option<f64>>>, k: usize) -> RatePoint {
    // a message counts at the rate every receiver requesting it can decode
    let message_rates: Vec<f64> = (0..k)
        .map(|m| {
            per_receiver
                .iter()
                .filter_map(|r| r[m])
                .fold(f64::INFINITY, f64::min)
        })
        .map(|r| if r.is_finite() { r.max(0.0) } else { 0.0 })
        .collect();
    RatePoint {
        snr_db,
        power: db_to_power(snr_db),
        sum_rate: message_rates.iter().sum(),
        message_rates,
    }
}

/// Rates with zero-forcing receivers: each message's streams are projected
/// onto the orthogonal complement of the interference and of the other
/// desired messages, then `(1/τ) log2 det(I + (P/d_k) G^H G)`.
pub fn zf_rates(
    channel: &ExtendedChannel,
    network: &DemandNetwork,
    v: &BeamformingSet,
    snr_db: f64,
) -> Result<RatePoint, SimError> {
    let report = verify_alignment(channel, network, v);
    if !report.all_decodable() {
        return Err(SimError::NotDecodable(report));
    }
    zf_rates_unchecked(channel, network, v, snr_db)
}

fn zf_rates_unchecked(
    channel: &ExtendedChannel,
    network: &DemandNetwork,
    v: &BeamformingSet,
    snr_db: f64,
) -> Result<RatePoint, SimError> {
    let power = db_to_power(snr_db);
    if !(power.is_finite() && power >= 0.0) {
        return Err(SimError::InvalidPower(power));
    }
    let tau = v.tau();
    let k = v.num_transmitters();
    let per_receiver = (0..network.num_receivers())
        .map(|j| {
            let demand = network.demand(j);
            (0..k)
                .map(|m| {
                    if !demand.contains(&m) || v.columns(m) == 0 {
                        return None;
                    }
                    let others: Vec<usize> = (0..k).filter(|&t| t != m).collect();
                    let q =
                        linalg::column_basis(&linalg::hstack(tau, &images(channel, v, j, &others)));
                    let own = images(channel, v, j, &[m]).remove(0);
                    let g = linalg::project_out(&q, &own);
                    Some(linalg::log2_det_gram(&g, power / v.columns(m) as f64) / tau as f64)
                })
                .collect()
        })
        .collect();
    Ok(point(snr_db, per_receiver, k))
}

/// Baseline that treats interference as noise: each stream is decoded from
/// a matched filter, with every other stream counted as noise.
pub fn matched_filter_rates(
    channel: &ExtendedChannel,
    network: &DemandNetwork,
    v: &BeamformingSet,
    snr_db: f64,
) -> Result<RatePoint, SimError> {
    let power = db_to_power(snr_db);
    if !(power.is_finite() && power >= 0.0) {
        return Err(SimError::InvalidPower(power));
    }
    let tau = v.tau();
    let k = v.num_transmitters();
    let per_receiver = (0..network.num_receivers())
        .map(|j| {
            let all: Vec<(usize, CMatrix)> = (0..k)
                .filter(|&t| v.columns(t) > 0)
                .map(|t| (t, images(channel, v, j, &[t]).remove(0)))
                .collect();
            let demand = network.demand(j);
            (0..k)
                .map(|m| {
                    if !demand.contains(&m) || v.columns(m) == 0 {
                        return None;
                    }
                    let own = &all.iter().find(|(t, _)| *t == m).unwrap().1;
                    let mut bits = 0.0;
                    for c in 0..own.ncols() {
                        let h = own.column(c);
                        let hh = h.norm_squared();
                        let mut noise = hh;
                        for (t, img) in &all {
                            let share = power / v.columns(*t) as f64;
                            for u in 0..img.ncols() {
                                if *t == m && u == c {
                                    continue;
                                }
                                let inner: Complex64 = (h.adjoint() * img.column(u))[(0, 0)];
                                noise += share * inner.norm_sqr();
                            }
                        }
                        let signal = power / own.ncols() as f64 * hh * hh;
                        bits += (1.0 + signal / noise).log2();
                    }
                    Some(bits / tau as f64)
                })
                .collect()
        })
        .collect();
    Ok(point(snr_db, per_receiver, k))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeEstimate {
    pub estimate: f64,
    /// Lowest and highest SNR (dB) in the fit.
    pub snr_range: (f64, f64),
    /// Root-mean-square residual of the linear fit, in bits.
    pub residual: f64,
}

/// Least-squares slope of sum rate against `log2 P` over the points within
/// 20 dB of the highest SNR.
pub fn dof_slope_from_points(points: &[RatePoint]) -> Result<SlopeEstimate, SimError> {
    let top = points
        .iter()
        .map(|p| p.snr_db)
        .fold(f64::NEG_INFINITY, f64::max);
    let fit: Vec<&RatePoint> = points.iter().filter(|p| p.snr_db >= top - 20.0).collect();
    if fit.len() < 2 {
        return Err(SimError::TooFewPoints(fit.len()));
    }
    let xs: Vec<f64> = fit.iter().map(|p| p.power.log2()).collect();
    let ys: Vec<f64> = fit.iter().map(|p| p.sum_rate).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let low = fit.iter().map(|p| p.snr_db).fold(f64::INFINITY, f64::min);
    Ok(SlopeEstimate {
        estimate: slope,
        snr_range: (low, top),
        residual,
    })
}

/// Zero-forcing sweep, sorted by SNR.
pub fn sweep(
    channel: &ExtendedChannel,
    network: &DemandNetwork,
    v: &BeamformingSet,
    snr_list_db: &[f64],
) -> Result<Vec<RatePoint>, SimError> {
    let report = verify_alignment(channel, network, v);
    if !report.all_decodable() {
        return Err(SimError::NotDecodable(report));
    }
    let mut snrs = snr_list_db.to_vec();
    snrs.sort_by(f64::total_cmp);
    snrs.iter()
        .map(|&s| zf_rates_unchecked(channel, network, v, s))
        .collect()
}

pub fn dof_slope(
    channel: &ExtendedChannel,
    network: &DemandNetwork,
    v: &BeamformingSet,
    snr_list_db: &[f64],
) -> Result<SlopeEstimate, SimError> {
    if snr_list_db.len() < 2 {
        return Err(SimError::TooFewPoints(snr_list_db.len()));
    }
    dof_slope_from_points(&sweep(channel, network, v, snr_list_db)?)
}

/// `snr_db,sum_rate_bits,msg_1,...,msg_K` with one row per point.
pub fn rates_csv(points: &[RatePoint]) -> String {
    let k = points.first().map(|p| p.message_rates.len()).unwrap_or(0);
    let mut out = String::from("snr_db,sum_rate_bits");
    for m in 1..=k {
        write!(out, ",msg_{m}").unwrap();
    }
    out.push('\n');
    for p in points {
        write!(out, "{},{:.6}", p.snr_db, p.sum_rate).unwrap();
        for r in &p.message_rates {
            write!(out, ",{r:.6}").unwrap();
        }
        out.push('\n');
    }
    out
}
