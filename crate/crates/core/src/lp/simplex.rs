//! Dense two-phase tableau simplex over exact rationals with Bland's rule.
//!
//! Pivoting first runs on `Ratio<i64>` with checked arithmetic. If any
//! operation overflows, the whole solve restarts on `BigRational`, so results
//! are always exact.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{CheckedAdd, CheckedDiv, CheckedMul, CheckedSub, One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SimplexError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<BigRational>,
    pub sense: Sense,
    pub rhs: BigRational,
}

/// `maximize objective·x  s.t. constraints, x >= 0`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub objective: Vec<BigRational>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<BigRational>,
    pub value: BigRational,
    /// One multiplier per constraint, for the constraint as written
    /// (nonnegative for binding `Le` rows of a maximization).
    pub duals: Vec<BigRational>,
    pub pivots: usize,
}

struct Overflow;

trait Exact: Clone + PartialOrd + Sized {
    fn nil() -> Self;
    fn unit() -> Self;
    fn is_nil(&self) -> bool;
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn plus(&self, o: &Self) -> Result<Self, Overflow>;
    fn minus(&self, o: &Self) -> Result<Self, Overflow>;
    fn times(&self, o: &Self) -> Result<Self, Overflow>;
    fn over(&self, o: &Self) -> Result<Self, Overflow>;
    fn negated(&self) -> Self;
    fn from_big(b: &BigRational) -> Result<Self, Overflow>;
    fn to_big(&self) -> BigRational;
}

impl Exact for Ratio<i64> {
    fn nil() -> Self {
        Zero::zero()
    }
    fn unit() -> Self {
        One::one()
    }
    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_pos(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_neg(&self) -> bool {
        Signed::is_negative(self)
    }
    fn plus(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_add(o).ok_or(Overflow)
    }
    fn minus(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_sub(o).ok_or(Overflow)
    }
    fn times(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_mul(o).ok_or(Overflow)
    }
    fn over(&self, o: &Self) -> Result<Self, Overflow> {
        self.checked_div(o).ok_or(Overflow)
    }
    fn negated(&self) -> Self {
        -*self
    }
    fn from_big(b: &BigRational) -> Result<Self, Overflow> {
        let n: i64 = b.numer().try_into().map_err(|_| Overflow)?;
        let d: i64 = b.denom().try_into().map_err(|_| Overflow)?;
        Ok(Ratio::new(n, d))
    }
    fn to_big(&self) -> BigRational {
        BigRational::new(BigInt::from(*self.numer()), BigInt::from(*self.denom()))
    }
}

impl Exact for BigRational {
    fn nil() -> Self {
        Zero::zero()
    }
    fn unit() -> Self {
        One::one()
    }
    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }
    fn is_pos(&self) -> bool {
        Signed::is_positive(self)
    }
    fn is_neg(&self) -> bool {
        Signed::is_negative(self)
    }
    fn plus(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self + o)
    }
    fn minus(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self - o)
    }
    fn times(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self * o)
    }
    fn over(&self, o: &Self) -> Result<Self, Overflow> {
        Ok(self / o)
    }
    fn negated(&self) -> Self {
        -self.clone()
    }
    fn from_big(b: &BigRational) -> Result<Self, Overflow> {
        Ok(b.clone())
    }
    fn to_big(&self) -> BigRational {
        self.clone()
    }
}

pub fn solve(problem: &Problem) -> Result<Solution, SimplexError> {
    match Tableau::<Ratio<i64>>::run(problem) {
        Ok(result) => result,
        Err(Overflow) => match Tableau::<BigRational>::run(problem) {
            Ok(result) => result,
            Err(Overflow) => unreachable!("big rationals do not overflow"),
        },
    }
}

struct Tableau<T> {
    /// m constraint rows followed by the objective row; last column is the rhs.
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    num_structural: usize,
    /// Column that started as the identity column of each row.
    identity_col: Vec<usize>,
    /// -1 where the row was negated to make its rhs nonnegative.
    flipped: Vec<bool>,
    artificial: Vec<bool>,
    pivots: usize,
}

impl<T: Exact> Tableau<T> {
    fn run(problem: &Problem) -> Result<Result<Solution, SimplexError>, Overflow> {
        let mut tab = Self::build(problem)?;
        let m = tab.basis.len();
        let width = tab.rows[0].len() - 1;

        if tab.artificial.iter().any(|&a| a) {
            let phase_one: Vec<T> = (0..width)
                .map(|j| {
                    if tab.artificial[j] {
                        T::unit().negated()
                    } else {
                        T::nil()
                    }
                })
                .collect();
            tab.load_objective(&phase_one)?;
            match tab.iterate(false)? {
                Ok(()) => {}
                Err(e) => return Ok(Err(e)),
            }
            if tab.rows[m][width].is_neg() {
                return Ok(Err(SimplexError::Infeasible));
            }
            tab.evict_artificials()?;
        }

        let mut cost = vec![T::nil(); width];
        for (j, c) in problem.objective.iter().enumerate() {
            cost[j] = T::from_big(c)?;
        }
        tab.load_objective(&cost)?;
        if let Err(e) = tab.iterate(true)? {
            return Ok(Err(e));
        }

        let mut x = vec![BigRational::zero(); tab.num_structural];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < tab.num_structural {
                x[b] = tab.rows[i][width].to_big();
            }
        }
        let value = tab.rows[m][width].to_big();
        let mut duals = Vec::with_capacity(m);
        for r in 0..m {
            let col = tab.identity_col[r];
            let mut y = T::nil();
            for (i, &b) in tab.basis.iter().enumerate() {
                if !cost[b].is_nil() && !tab.rows[i][col].is_nil() {
                    y = y.plus(&cost[b].times(&tab.rows[i][col])?)?;
                }
            }
            let y = y.to_big();
            duals.push(if tab.flipped[r] { -y } else { y });
        }
        Ok(Ok(Solution {
            x,
            value,
            duals,
            pivots: tab.pivots,
        }))
    }

    fn build(problem: &Problem) -> Result<Self, Overflow> {
        let n = problem.objective.len();
        let m = problem.constraints.len();
        let mut extra = 0;
        for c in &problem.constraints {
            let negative = Signed::is_negative(&c.rhs);
            extra += match (c.sense, negative) {
                (Sense::Le, false) | (Sense::Ge, true) => 1,
                (Sense::Eq, _) => 1,
                _ => 2,
            };
        }
        let width = n + extra;
        let mut rows = Vec::with_capacity(m + 1);
        let mut basis = Vec::with_capacity(m);
        let mut identity_col = Vec::with_capacity(m);
        let mut flipped = Vec::with_capacity(m);
        let mut artificial = vec![false; width];
        let mut next = n;
        for c in &problem.constraints {
            assert_eq!(c.coeffs.len(), n, "constraint width mismatch");
            let flip = Signed::is_negative(&c.rhs);
            let sense = match (c.sense, flip) {
                (s, false) => s,
                (Sense::Le, true) => Sense::Ge,
                (Sense::Ge, true) => Sense::Le,
                (Sense::Eq, true) => Sense::Eq,
            };
            let mut row = vec![T::nil(); width + 1];
            for (j, a) in c.coeffs.iter().enumerate() {
                let v = T::from_big(a)?;
                row[j] = if flip { v.negated() } else { v };
            }
            let rhs = T::from_big(&c.rhs)?;
            row[width] = if flip { rhs.negated() } else { rhs };
            match sense {
                Sense::Le => {
                    row[next] = T::unit();
                    basis.push(next);
                    identity_col.push(next);
                    next += 1;
                }
                Sense::Ge => {
                    row[next] = T::unit().negated();
                    row[next + 1] = T::unit();
                    artificial[next + 1] = true;
                    basis.push(next + 1);
                    identity_col.push(next + 1);
                    next += 2;
                }
                Sense::Eq => {
                    row[next] = T::unit();
                    artificial[next] = true;
                    basis.push(next);
                    identity_col.push(next);
                    next += 1;
                }
            }
            rows.push(row);
            flipped.push(flip);
        }
        rows.push(vec![T::nil(); width + 1]);
        Ok(Self {
            rows,
            basis,
            num_structural: n,
            identity_col,
            flipped,
            artificial,
            pivots: 0,
        })
    }

    /// Objective row becomes `c_B B^-1 A - c` for maximizing `cost`.
    fn load_objective(&mut self, cost: &[T]) -> Result<(), Overflow> {
        let m = self.basis.len();
        let width = self.rows[0].len() - 1;
        let mut obj = vec![T::nil(); width + 1];
        for j in 0..=width {
            let mut acc = if j < width {
                cost[j].negated()
            } else {
                T::nil()
            };
            for i in 0..m {
                let cb = &cost[self.basis[i]];
                if !cb.is_nil() && !self.rows[i][j].is_nil() {
                    acc = acc.plus(&cb.times(&self.rows[i][j])?)?;
                }
            }
            obj[j] = acc;
        }
        self.rows[m] = obj;
        Ok(())
    }

    fn iterate(&mut self, bar_artificial: bool) -> Result<Result<(), SimplexError>, Overflow> {
        let m = self.basis.len();
        let width = self.rows[0].len() - 1;
        loop {
            let entering = (0..width)
                .find(|&j| !(bar_artificial && self.artificial[j]) && self.rows[m][j].is_neg());
            let Some(col) = entering else {
                return Ok(Ok(()));
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..m {
                let a = &self.rows[i][col];
                if !a.is_pos() {
                    continue;
                }
                let ratio = self.rows[i][width].over(a)?;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        if ratio < best || (ratio == best && self.basis[i] < self.basis[r]) {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((row, _)) = leave else {
                return Ok(Err(SimplexError::Unbounded));
            };
            self.pivot(row, col)?;
        }
    }

    fn pivot(&mut self, row: usize, col: usize) -> Result<(), Overflow> {
        let width = self.rows[0].len();
        let p = self.rows[row][col].clone();
        for j in 0..width {
            if !self.rows[row][j].is_nil() {
                self.rows[row][j] = self.rows[row][j].over(&p)?;
            }
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row || r[col].is_nil() {
                continue;
            }
            let factor = r[col].clone();
            for j in 0..width {
                if !pivot_row[j].is_nil() {
                    r[j] = r[j].minus(&factor.times(&pivot_row[j])?)?;
                }
            }
        }
        self.basis[row] = col;
        self.pivots += 1;
        Ok(())
    }

    /// After phase one, pivot zero-level artificials out of the basis where a
    /// non-artificial column allows it. Rows where none does are redundant.
    fn evict_artificials(&mut self) -> Result<(), Overflow> {
        let m = self.basis.len();
        let width = self.rows[0].len() - 1;
        for i in 0..m {
            if !self.artificial[self.basis[i]] {
                continue;
            }
            if let Some(col) =
                (0..width).find(|&j| !self.artificial[j] && !self.rows[i][j].is_nil())
            {
                self.pivot(i, col)?;
            }
        }
        Ok(())
    }
}
