//! Key-value scenario files.
//!
//! One `key=value` per line; `#` starts a comment. Demand sets are
//! `S<j>=<t>,<t>,...` with one-based indices. Relative paths are resolved
//! against the scenario file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ia_core::aiding::EPS_MATCH;
use ia_core::channel::GainBounds;
use ia_core::diag::{DiagonalMatrix, EPS_EQ};
use ia_core::DemandNetwork;
use num_complex::Complex64;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    Continuous,
    Quantized,
    Constant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: DemandNetwork,
    /// Extension multiplier: the extension is `n` times the smallest one.
    pub n: usize,
    pub distinct_values: Option<usize>,
    pub t_target: Option<DiagonalMatrix>,
    pub seed: u64,
    pub bounds: GainBounds,
    pub snr_db: Vec<f64>,
    /// Tolerance for verifying conditions on a channel.
    pub eps: f64,
    pub eps_match: Vec<f64>,
    pub slots: usize,
    pub budget: Option<usize>,
    pub levels: usize,
    pub stream: StreamKind,
    pub channel: Option<PathBuf>,
    pub beamformers: Option<PathBuf>,
    pub stream_file: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(format!("[scenario] {}", msg.into()))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| input(format!("{key}: cannot parse '{s}'")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| input(format!("{key}: cannot parse '{value}'")))
}

fn parse_complex(s: &str) -> Option<Complex64> {
    match s.split_once(':') {
        Some((re, im)) => Some(Complex64::new(
            re.trim().parse().ok()?,
            im.trim().parse().ok()?,
        )),
        None => Some(Complex64::new(s.trim().parse().ok()?, 0.0)),
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| input(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| input(format!("line {}: expected key=value", lineno + 1)))?;
            let key = key.trim().to_string();
            if kv
                .insert(key.clone(), (lineno + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(input(format!("line {}: duplicate key {key}", lineno + 1)));
            }
        }
        let mut take = |key: &str| kv.remove(key).map(|(_, v)| v);

        let k: usize = parse_one("K", &take("K").ok_or_else(|| input("missing K"))?)?;
        let mut sets: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        let demand_keys: Vec<String> = kv
            .keys()
            .filter(|key| key.starts_with('S') && key[1..].parse::<usize>().is_ok())
            .cloned()
            .collect();
        for key in demand_keys {
            let j: usize = key[1..].parse().unwrap();
            let (_, value) = kv.remove(&key).unwrap();
            let members: Vec<usize> = parse_list(&key, &value)?;
            if j == 0 || members.iter().any(|&t| t == 0 || t > k) {
                return Err(input(format!("{key}: indices must be in 1..={k}")));
            }
            sets.insert(j, members.into_iter().map(|t| t - 1).collect());
        }
        let n_rx = sets.keys().copied().max().unwrap_or(0);
        if let Some(declared) = kv.remove("N").map(|(_, v)| v) {
            let declared: usize = parse_one("N", &declared)?;
            if declared != n_rx || sets.len() != n_rx {
                return Err(input(format!(
                    "N={declared} but demand sets S1..S{n_rx} given"
                )));
            }
        }
        if sets.len() != n_rx {
            return Err(input(
                "demand sets must be numbered S1, S2, ... without gaps",
            ));
        }
        let network = DemandNetwork::new(k, sets.into_values().collect())
            .map_err(|e| CliError::Input(format!("[network-model] {e}")))?;

        let mut take = |key: &str| kv.remove(key).map(|(_, v)| v);
        let n = take("n")
            .map(|v| parse_one("n", &v))
            .transpose()?
            .unwrap_or(1);
        if n == 0 {
            return Err(input("n must be positive"));
        }
        let distinct_values = take("distinct_values")
            .map(|v| parse_one("distinct_values", &v))
            .transpose()?;
        let t_target = match take("T_target") {
            Some(v) => {
                let entries = v
                    .split(',')
                    .map(|s| {
                        parse_complex(s).ok_or_else(|| input(format!("T_target: bad value '{s}'")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if entries.is_empty() {
                    return Err(input("T_target is empty"));
                }
                Some(DiagonalMatrix::new(entries))
            }
            None => None,
        };
        let seed = take("seed")
            .map(|v| parse_one("seed", &v))
            .transpose()?
            .unwrap_or(0);
        let g_min = take("g_min").map(|v| parse_one("g_min", &v)).transpose()?;
        let g_max = take("g_max").map(|v| parse_one("g_max", &v)).transpose()?;
        let default = GainBounds::default();
        let bounds = GainBounds::new(g_min.unwrap_or(default.min), g_max.unwrap_or(default.max))
            .map_err(|e| CliError::Input(format!("[channel-core] {e}")))?;
        let snr_db = take("snr_db")
            .map(|v| parse_list("snr_db", &v))
            .transpose()?
            .unwrap_or_else(|| vec![30.0, 40.0, 50.0, 60.0]);
        let eps = take("eps")
            .map(|v| parse_one("eps", &v))
            .transpose()?
            .unwrap_or(EPS_EQ);
        let eps_match = take("eps_match")
            .map(|v| parse_list("eps_match", &v))
            .transpose()?
            .unwrap_or_else(|| vec![EPS_MATCH]);
        if eps_match
            .iter()
            .chain([&eps])
            .any(|e: &f64| !(e.is_finite() && *e >= 0.0))
        {
            return Err(input("tolerances must be finite and nonnegative"));
        }
        let slots = take("slots")
            .map(|v| parse_one("slots", &v))
            .transpose()?
            .unwrap_or(10_000);
        let budget = take("budget")
            .map(|v| parse_one("budget", &v))
            .transpose()?;
        let levels = take("levels")
            .map(|v| parse_one("levels", &v))
            .transpose()?
            .unwrap_or(8);
        let stream = match take("stream").as_deref() {
            None | Some("quantized") => StreamKind::Quantized,
            Some("continuous") => StreamKind::Continuous,
            Some("constant") => StreamKind::Constant,
            Some(other) => return Err(input(format!("stream: unknown kind '{other}'"))),
        };
        let path = |v: Option<String>| v.map(|p| base.join(p));
        let channel = path(take("channel"));
        let beamformers = path(take("beamformers"));
        let stream_file = path(take("stream_file"));
        let out = path(take("out"));

        if let Some((key, (line, _))) = kv.into_iter().next() {
            return Err(input(format!("line {line}: unknown key {key}")));
        }
        Ok(Self {
            network,
            n,
            distinct_values,
            t_target,
            seed,
            bounds,
            snr_db,
            eps,
            eps_match,
            slots,
            budget,
            levels,
            stream,
            channel,
            beamformers,
            stream_file,
            out,
        })
    }
}
