//! Brute-force optimum of the DoF region: every basic solution of the
//! inequality system is enumerated and the best feasible one kept. Built
//! straight from the demand sets, without the crate's LP builder.

use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub type Q = Ratio<i128>;

/// Maximal demand sets, deduplicated, 0-based.
pub fn prime_sets(demands: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = demands
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.sort_unstable();
            s.dedup();
            s
        })
        .collect();
    sets.sort();
    sets.dedup();
    sets.iter()
        .filter(|s| {
            !sets
                .iter()
                .any(|o| o.len() > s.len() && s.iter().all(|x| o.contains(x)))
        })
        .cloned()
        .collect()
}

/// Region rows `sum_{S_j + i} d <= 1` over active transmitters, as 0/1
/// vectors over the active index list.
pub fn region_rows(k: usize, demands: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<i8>>) {
    let active: Vec<usize> = (0..k)
        .filter(|t| demands.iter().any(|s| s.contains(t)))
        .collect();
    let pos = |t: usize| active.iter().position(|&a| a == t).unwrap();
    let mut rows = Vec::new();
    for s in prime_sets(demands) {
        let others: Vec<usize> = active.iter().copied().filter(|t| !s.contains(t)).collect();
        let mut base = vec![0i8; active.len()];
        for &t in &s {
            base[pos(t)] = 1;
        }
        if others.is_empty() {
            rows.push(base.clone());
        }
        for i in others {
            let mut r = base.clone();
            r[pos(i)] = 1;
            rows.push(r);
        }
    }
    rows.sort();
    rows.dedup();
    (active, rows)
}

fn solve_square(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Q>> {
    let n = b.len();
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| {
            let mut r = row.clone();
            r.push(*rhs);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col];
        for x in &mut m[col][col..] {
            *x /= p;
        }
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col && !row[col].is_zero() {
                let f = row[col];
                for (x, y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * y;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n]).collect())
}

fn next_combination(idx: &mut [usize], total: usize) -> bool {
    let k = idx.len();
    for i in (0..k).rev() {
        if idx[i] < total - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Maximum of `sum d` over the region, with the maximizing point in the
/// original transmitter indexing.
pub fn vertex_optimum(k: usize, demands: &[Vec<usize>]) -> (Q, Vec<Q>) {
    let (active, rows) = region_rows(k, demands);
    let n = active.len();
    if n == 0 {
        return (Q::zero(), vec![Q::zero(); k]);
    }
    // constraints a x <= b: region rows, then -x_t <= 0
    let mut cons: Vec<(Vec<Q>, Q)> = rows
        .iter()
        .map(|r| {
            (
                r.iter().map(|&v| Q::from_integer(v as i128)).collect(),
                Q::one(),
            )
        })
        .collect();
    for t in 0..n {
        let mut r = vec![Q::zero(); n];
        r[t] = -Q::one();
        cons.push((r, Q::zero()));
    }
    let mut best: Option<(Q, Vec<Q>)> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let a: Vec<Vec<Q>> = idx.iter().map(|&i| cons[i].0.clone()).collect();
        let b: Vec<Q> = idx.iter().map(|&i| cons[i].1).collect();
        if let Some(x) = solve_square(&a, &b) {
            let feasible = cons.iter().all(|(row, rhs)| {
                let lhs: Q = row.iter().zip(&x).map(|(p, q)| p * q).sum();
                !(lhs - rhs).is_positive()
            });
            if feasible {
                let value: Q = x.iter().sum();
                if best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, x));
                }
            }
        }
        if !next_combination(&mut idx, cons.len()) {
            break;
        }
    }
    let (value, x) = best.expect("region is a nonempty polytope");
    let mut full = vec![Q::zero(); k];
    for (p, &t) in active.iter().enumerate() {
        full[t] = x[p];
    }
    (value, full)
}
