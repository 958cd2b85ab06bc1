//! Optimal DoF assignment as an exact linear program.
//!
//! The region constraint `sum_{k in S_j} d_k + max_{i in Sbar_j} d_i <= 1` is
//! linearized into one row per (prime receiver, interferer) pair, each with
//! ones at `S_j ∪ {i}`. Inactive transmitters never enter a row and are
//! pinned to zero by leaving them out of the simplex.

pub mod simplex;

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::network::DemandNetwork;
use simplex::{Constraint, Problem, Sense, SimplexError};

pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("simplex failed: {0}")]
    Simplex(#[from] SimplexError),
    #[error("expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },
}

pub fn rational(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Formats a rational the way reports print it: `2/5`, `2`, `-1/3`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().ok()?;
            let d: BigInt = d.trim().parse().ok()?;
            if d.is_zero() {
                None
            } else {
                Some(Rational::new(n, d))
            }
        }
        None => s.parse::<BigInt>().ok().map(Rational::from_integer),
    }
}

/// One linearized region row: `sum_{k in support} d_k <= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LpRow {
    pub receiver: usize,
    /// `None` when the receiver sees no interference.
    pub interferer: Option<usize>,
    pub support: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    num_transmitters: usize,
    active: Vec<bool>,
    pub objective: Vec<Rational>,
    pub rows: Vec<LpRow>,
}

impl LinearProgram {
    pub fn num_transmitters(&self) -> usize {
        self.num_transmitters
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    fn columns(&self) -> Vec<usize> {
        (0..self.num_transmitters)
            .filter(|&k| self.active[k])
            .collect()
    }

    /// Dense 0/1 constraint matrix over all K transmitters.
    pub fn matrix(&self) -> Vec<Vec<Rational>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![Rational::zero(); self.num_transmitters];
                for &k in &row.support {
                    dense[k] = Rational::one();
                }
                dense
            })
            .collect()
    }

    /// Same feasible region, objective multiplied by `factor`.
    pub fn scaled(&self, factor: &Rational) -> Self {
        let mut lp = self.clone();
        for w in &mut lp.objective {
            *w = &*w * factor;
        }
        lp
    }

    fn region_constraints(&self, cols: &[usize]) -> Vec<Constraint> {
        self.rows
            .iter()
            .map(|row| Constraint {
                coeffs: cols
                    .iter()
                    .map(|k| {
                        if row.support.contains(k) {
                            Rational::one()
                        } else {
                            Rational::zero()
                        }
                    })
                    .collect(),
                sense: Sense::Le,
                rhs: Rational::one(),
            })
            .collect()
    }

    fn row_value(&self, row: &LpRow, d: &[Rational]) -> Rational {
        row.support.iter().map(|&k| &d[k]).sum()
    }
}

pub fn build_lp(network: &DemandNetwork) -> LinearProgram {
    let k = network.num_transmitters();
    let mut rows = Vec::new();
    for &j in &network.prime_receivers().indices {
        let demand = network.demand(j);
        let interferers = network.interference_set(j).expect("prime receiver exists");
        if interferers.is_empty() {
            rows.push(LpRow {
                receiver: j,
                interferer: None,
                support: demand.to_vec(),
            });
        }
        for i in interferers {
            let mut support = demand.to_vec();
            support.push(i);
            support.sort_unstable();
            rows.push(LpRow {
                receiver: j,
                interferer: Some(i),
                support,
            });
        }
    }
    LinearProgram {
        num_transmitters: k,
        active: (0..k).map(|t| network.is_active(t)).collect(),
        objective: vec![Rational::one(); k],
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DoFAssignment {
    pub d: Vec<Rational>,
    pub total: Rational,
}

impl DoFAssignment {
    pub fn new(d: Vec<Rational>) -> Self {
        let total = d.iter().sum();
        Self { d, total }
    }

    pub fn zeros(k: usize) -> Self {
        Self::new(vec![Rational::zero(); k])
    }
}

impl fmt::Display for DoFAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.d.iter().map(format_rational).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Dual solution of the region LP: `A^T lambda - gamma = w`, `lambda, gamma >= 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualCertificate {
    /// One multiplier per LP row.
    pub row_multipliers: Vec<Rational>,
    /// Row multipliers summed per prime receiver, in prime-receiver order.
    pub receiver_multipliers: Vec<(usize, Rational)>,
    /// Multipliers of `d >= 0`, one per transmitter.
    pub gamma: Vec<Rational>,
    pub value: Rational,
}

impl DualCertificate {
    pub fn zeros(lp: &LinearProgram) -> Self {
        Self {
            row_multipliers: vec![Rational::zero(); lp.rows.len()],
            receiver_multipliers: Vec::new(),
            gamma: vec![Rational::zero(); lp.num_transmitters],
            value: Rational::zero(),
        }
    }

    fn from_rows(lp: &LinearProgram, row_multipliers: Vec<Rational>) -> Self {
        let mut receiver_multipliers: Vec<(usize, Rational)> = Vec::new();
        for (row, y) in lp.rows.iter().zip(&row_multipliers) {
            match receiver_multipliers.last_mut() {
                Some((j, acc)) if *j == row.receiver => *acc += y,
                _ => receiver_multipliers.push((row.receiver, y.clone())),
            }
        }
        let gamma = (0..lp.num_transmitters)
            .map(|k| {
                if !lp.active[k] {
                    return Rational::zero();
                }
                let col: Rational = lp
                    .rows
                    .iter()
                    .zip(&row_multipliers)
                    .filter(|(row, _)| row.support.contains(&k))
                    .map(|(_, y)| y.clone())
                    .sum();
                col - &lp.objective[k]
            })
            .collect();
        let value = row_multipliers.iter().sum();
        Self {
            row_multipliers,
            receiver_multipliers,
            gamma,
            value,
        }
    }
}

pub fn solve_optimal_dof(lp: &LinearProgram) -> Result<(DoFAssignment, DualCertificate), LpError> {
    let cols = lp.columns();
    let problem = Problem {
        objective: cols.iter().map(|&k| lp.objective[k].clone()).collect(),
        constraints: lp.region_constraints(&cols),
    };
    let sol = simplex::solve(&problem)?;
    let mut d = vec![Rational::zero(); lp.num_transmitters];
    for (x, &k) in sol.x.into_iter().zip(&cols) {
        d[k] = x;
    }
    let dual = DualCertificate::from_rows(lp, sol.duals);
    debug_assert_eq!(dual.value, sol.value);
    Ok((DoFAssignment::new(d), dual))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub receiver: usize,
    pub interferer: Option<usize>,
    pub lhs: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionCheck {
    pub inside: bool,
    pub violations: Vec<Violation>,
    pub negative: Vec<usize>,
}

pub fn check_region(network: &DemandNetwork, d: &DoFAssignment) -> Result<RegionCheck, LpError> {
    let k = network.num_transmitters();
    if d.d.len() != k {
        return Err(LpError::Dimension {
            expected: k,
            got: d.d.len(),
        });
    }
    let lp = build_lp(network);
    let violations: Vec<Violation> = lp
        .rows
        .iter()
        .filter_map(|row| {
            let lhs = lp.row_value(row, &d.d);
            (lhs > Rational::one()).then_some(Violation {
                receiver: row.receiver,
                interferer: row.interferer,
                lhs,
            })
        })
        .collect();
    let negative: Vec<usize> = (0..k).filter(|&t| d.d[t].is_negative()).collect();
    Ok(RegionCheck {
        inside: violations.is_empty() && negative.is_empty(),
        violations,
        negative,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceProbe {
    /// Some optimal point has its two largest coordinates equal.
    pub top_two_equal: bool,
    /// Some optimal point has a strictly unique largest coordinate.
    pub strict_max_possible: bool,
    pub max_component: Rational,
    pub unique: bool,
    pub coordinate_max: Vec<Rational>,
    pub coordinate_min: Vec<Rational>,
}

/// Explores the optimal face `{d in region : w·d = optimum}` with auxiliary LPs.
pub fn optimal_face_probe(
    lp: &LinearProgram,
    optimum: &DoFAssignment,
) -> Result<FaceProbe, LpError> {
    let cols = lp.columns();
    let n = cols.len();
    let value: Rational = cols.iter().map(|&k| &lp.objective[k] * &optimum.d[k]).sum();
    let mut base = lp.region_constraints(&cols);
    base.push(Constraint {
        coeffs: cols.iter().map(|&k| lp.objective[k].clone()).collect(),
        sense: Sense::Eq,
        rhs: value,
    });

    let unit = |idx: usize, sign: i64| -> Vec<Rational> {
        (0..n)
            .map(|c| {
                if c == idx {
                    rational(sign, 1)
                } else {
                    Rational::zero()
                }
            })
            .collect()
    };

    let mut coordinate_max = vec![Rational::zero(); lp.num_transmitters];
    let mut coordinate_min = vec![Rational::zero(); lp.num_transmitters];
    for (c, &k) in cols.iter().enumerate() {
        let hi = simplex::solve(&Problem {
            objective: unit(c, 1),
            constraints: base.clone(),
        })?;
        let lo = simplex::solve(&Problem {
            objective: unit(c, -1),
            constraints: base.clone(),
        })?;
        coordinate_max[k] = hi.value;
        coordinate_min[k] = -lo.value;
    }
    let max_component = coordinate_max
        .iter()
        .max()
        .cloned()
        .unwrap_or_else(Rational::zero);
    let unique = coordinate_max == coordinate_min;

    // d_a = d_b >= every other coordinate, for some pair (a, b).
    let mut top_two_equal = false;
    'pairs: for a in 0..n {
        for b in (a + 1)..n {
            let mut rows = base.clone();
            let mut tie = vec![Rational::zero(); n];
            tie[a] = Rational::one();
            tie[b] = -Rational::one();
            rows.push(Constraint {
                coeffs: tie,
                sense: Sense::Eq,
                rhs: Rational::zero(),
            });
            for c in (0..n).filter(|&c| c != a && c != b) {
                let mut dom = vec![Rational::zero(); n];
                dom[a] = Rational::one();
                dom[c] = -Rational::one();
                rows.push(Constraint {
                    coeffs: dom,
                    sense: Sense::Ge,
                    rhs: Rational::zero(),
                });
            }
            let feasible = simplex::solve(&Problem {
                objective: vec![Rational::zero(); n],
                constraints: rows,
            });
            match feasible {
                Ok(_) => {
                    top_two_equal = true;
                    break 'pairs;
                }
                Err(SimplexError::Infeasible) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    // max t s.t. d_a - d_c >= t for all c != a, t >= 0, over the face.
    let mut strict_max_possible = false;
    if n >= 2 {
        for a in 0..n {
            let mut rows: Vec<Constraint> = base
                .iter()
                .map(|c| {
                    let mut coeffs = c.coeffs.clone();
                    coeffs.push(Rational::zero());
                    Constraint {
                        coeffs,
                        sense: c.sense,
                        rhs: c.rhs.clone(),
                    }
                })
                .collect();
            for c in (0..n).filter(|&c| c != a) {
                let mut coeffs = vec![Rational::zero(); n + 1];
                coeffs[a] = Rational::one();
                coeffs[c] = -Rational::one();
                coeffs[n] = -Rational::one();
                rows.push(Constraint {
                    coeffs,
                    sense: Sense::Ge,
                    rhs: Rational::zero(),
                });
            }
            let mut objective = vec![Rational::zero(); n + 1];
            objective[n] = Rational::one();
            let sol = simplex::solve(&Problem {
                objective,
                constraints: rows,
            });
            match sol {
                Ok(s) if s.value.is_positive() => {
                    strict_max_possible = true;
                    break;
                }
                Ok(_) | Err(SimplexError::Infeasible) => {}
                Err(e) => return Err(e.into()),
            }
        }
    } else {
        strict_max_possible = n == 1;
    }

    Ok(FaceProbe {
        top_two_equal,
        strict_max_possible,
        max_component,
        unique,
        coordinate_max,
        coordinate_min,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KktReport {
    pub primal_feasible: bool,
    pub dual_feasible: bool,
    pub complementary_slackness: bool,
    pub stationarity: bool,
}

impl KktReport {
    pub fn holds(&self) -> bool {
        self.primal_feasible
            && self.dual_feasible
            && self.complementary_slackness
            && self.stationarity
    }
}

/// Exact KKT check of a primal/dual pair against the linearized LP.
///
/// Stationarity is `A^T lambda - gamma - w = 0` on active coordinates;
/// complementary slackness is `lambda_r (1 - a_r·d) = 0` and `gamma_k d_k = 0`.
pub fn verify_kkt(lp: &LinearProgram, primal: &DoFAssignment, dual: &DualCertificate) -> KktReport {
    let one = Rational::one();
    let slack: Vec<Rational> = lp
        .rows
        .iter()
        .map(|row| &one - lp.row_value(row, &primal.d))
        .collect();
    let primal_feasible = slack.iter().all(|s| !s.is_negative())
        && primal.d.iter().all(|x| !x.is_negative())
        && (0..lp.num_transmitters).all(|k| lp.active[k] || primal.d[k].is_zero());
    let dual_feasible = dual.row_multipliers.len() == lp.rows.len()
        && dual.row_multipliers.iter().all(|y| !y.is_negative())
        && dual.gamma.iter().all(|g| !g.is_negative());
    let complementary_slackness = dual
        .row_multipliers
        .iter()
        .zip(&slack)
        .all(|(y, s)| (y * s).is_zero())
        && dual
            .gamma
            .iter()
            .zip(&primal.d)
            .all(|(g, x)| (g * x).is_zero());
    let stationarity = dual.row_multipliers.len() == lp.rows.len()
        && (0..lp.num_transmitters).filter(|&k| lp.active[k]).all(|k| {
            let col: Rational = lp
                .rows
                .iter()
                .zip(&dual.row_multipliers)
                .filter(|(row, _)| row.support.contains(&k))
                .map(|(_, y)| y.clone())
                .sum();
            col - &dual.gamma[k] - &lp.objective[k] == Rational::zero()
        });
    KktReport {
        primal_feasible,
        dual_feasible,
        complementary_slackness,
        stationarity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkClass {
    Regular,
    Irregular,
    MultipleAccess,
}

impl fmt::Display for NetworkClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NetworkClass::Regular => "Regular",
            NetworkClass::Irregular => "Irregular",
            NetworkClass::MultipleAccess => "MultipleAccess",
        })
    }
}

/// `K` here is the number of active transmitters.
pub fn classify(network: &DemandNetwork) -> Result<NetworkClass, LpError> {
    let k = network.num_active();
    if network.demands().iter().any(|s| s.len() + 1 >= k) {
        return Ok(NetworkClass::MultipleAccess);
    }
    let lp = build_lp(network);
    let (opt, _) = solve_optimal_dof(&lp)?;
    let probe = optimal_face_probe(&lp, &opt)?;
    let mut positive = opt.d.iter().filter(|x| x.is_positive());
    let first = positive.next();
    let equal = match first {
        Some(v) => positive.all(|x| x == v),
        None => false,
    };
    Ok(if probe.unique && equal {
        NetworkClass::Regular
    } else {
        NetworkClass::Irregular
    })
}

/// Least common multiple of the denominators of the positive coordinates.
pub fn common_denominator(d: &DoFAssignment) -> BigInt {
    d.d.iter()
        .filter(|x| x.is_positive())
        .fold(BigInt::one(), |acc, x| acc.lcm(x.denom()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(k: usize, sets: &[&[usize]]) -> DemandNetwork {
        DemandNetwork::from_one_based(k, sets).unwrap()
    }

    fn six() -> DemandNetwork {
        net(6, &[&[1, 4], &[2, 5], &[3, 6]])
    }

    fn five() -> DemandNetwork {
        net(5, &[&[1, 5], &[1, 2], &[3, 4, 5]])
    }

    fn four() -> DemandNetwork {
        net(4, &[&[1, 2], &[1, 3], &[1, 4]])
    }

    fn rs(v: &[(i64, i64)]) -> Vec<Rational> {
        v.iter().map(|&(n, d)| rational(n, d)).collect()
    }

    #[test]
    fn row_counts() {
        assert_eq!(build_lp(&six()).rows.len(), 12);
        let mac = net(2, &[&[1, 2]]);
        let lp = build_lp(&mac);
        assert_eq!(lp.rows.len(), 1);
        assert_eq!(lp.rows[0].support, vec![0, 1]);
        assert_eq!(build_lp(&five()).rows.len(), 8);
    }

    #[test]
    fn rows_have_unit_rhs_and_support() {
        let lp = build_lp(&six());
        for row in &lp.rows {
            let i = row.interferer.unwrap();
            let mut expect = six().demand(row.receiver).to_vec();
            expect.push(i);
            expect.sort_unstable();
            assert_eq!(row.support, expect);
        }
    }

    #[test]
    fn paper_optima() {
        let (d, dual) = solve_optimal_dof(&build_lp(&six())).unwrap();
        assert_eq!(d.d, vec![rational(1, 3); 6]);
        assert_eq!(d.total, rational(2, 1));
        assert_eq!(dual.value, d.total);

        let (d, _) = solve_optimal_dof(&build_lp(&five())).unwrap();
        assert_eq!(d.d, rs(&[(2, 5), (2, 5), (1, 5), (1, 5), (1, 5)]));
        assert_eq!(d.total, rational(7, 5));

        let (d, _) = solve_optimal_dof(&build_lp(&four())).unwrap();
        assert_eq!(d.d, rs(&[(0, 1), (1, 2), (1, 2), (1, 2)]));
        assert_eq!(d.total, rational(3, 2));
    }

    #[test]
    fn region_checks() {
        let uniform = DoFAssignment::new(vec![rational(1, 3); 6]);
        assert!(check_region(&six(), &uniform).unwrap().inside);

        let mut d = vec![rational(1, 3); 6];
        d[0] = rational(1, 2);
        let check = check_region(&six(), &DoFAssignment::new(d)).unwrap();
        assert!(!check.inside);
        assert!(check
            .violations
            .iter()
            .any(|v| v.receiver == 1 && v.interferer == Some(0) && v.lhs == rational(7, 6)));

        assert!(
            check_region(&five(), &DoFAssignment::zeros(5))
                .unwrap()
                .inside
        );
        assert!(check_region(&five(), &DoFAssignment::zeros(4)).is_err());
    }

    #[test]
    fn probe_examples() {
        let lp = build_lp(&six());
        let (d, _) = solve_optimal_dof(&lp).unwrap();
        let p = optimal_face_probe(&lp, &d).unwrap();
        assert!(p.top_two_equal && p.unique);
        assert_eq!(p.max_component, rational(1, 3));

        let lp = build_lp(&four());
        let (d, _) = solve_optimal_dof(&lp).unwrap();
        let p = optimal_face_probe(&lp, &d).unwrap();
        assert_eq!(p.max_component, rational(1, 2));

        let lp = build_lp(&net(2, &[&[1, 2]]));
        let (d, _) = solve_optimal_dof(&lp).unwrap();
        let p = optimal_face_probe(&lp, &d).unwrap();
        assert!(!p.unique);
        assert_eq!(p.coordinate_max, vec![rational(1, 1); 2]);
        assert_eq!(p.coordinate_min, vec![rational(0, 1); 2]);
    }

    #[test]
    fn kkt_examples() {
        let lp = build_lp(&six());
        let (d, dual) = solve_optimal_dof(&lp).unwrap();
        assert!(verify_kkt(&lp, &d, &dual).holds());

        let report = verify_kkt(&lp, &d, &DualCertificate::zeros(&lp));
        assert!(!report.stationarity);

        let single = net(2, &[&[1]]);
        let lp = build_lp(&single);
        let (d, dual) = solve_optimal_dof(&lp).unwrap();
        assert_eq!(d.d, rs(&[(1, 1), (0, 1)]));
        assert_eq!(d.total, rational(1, 1));
        assert!(verify_kkt(&lp, &d, &dual).holds());
    }

    #[test]
    fn classification() {
        assert_eq!(classify(&six()).unwrap(), NetworkClass::Regular);
        assert_eq!(classify(&five()).unwrap(), NetworkClass::Irregular);
        assert_eq!(
            classify(&net(3, &[&[1, 2, 3]])).unwrap(),
            NetworkClass::MultipleAccess
        );
        assert_eq!(classify(&four()).unwrap(), NetworkClass::Regular);
    }

    #[test]
    fn rational_text() {
        assert_eq!(format_rational(&rational(4, 10)), "2/5");
        assert_eq!(format_rational(&rational(2, 1)), "2");
        assert_eq!(parse_rational(" 7/5 "), Some(rational(7, 5)));
        assert_eq!(parse_rational("3"), Some(rational(3, 1)));
        assert_eq!(parse_rational("1/0"), None);
    }

    #[test]
    fn common_denominators() {
        let (d, _) = solve_optimal_dof(&build_lp(&five())).unwrap();
        assert_eq!(common_denominator(&d), BigInt::from(5));
        let (d, _) = solve_optimal_dof(&build_lp(&four())).unwrap();
        assert_eq!(common_denominator(&d), BigInt::from(2));
    }
}
