use std::ops::Mul;

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagError {
    #[error("diagonal size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("diagonal matrix is singular at position {position}")]
    Singular { position: usize },
}

/// Default relative tolerance for comparing diagonal entries.
pub const EPS_EQ: f64 = 1e-9;

/// `|a - b| <= eps * max(|a|, |b|)`; with `eps = 0` this is exact equality.
pub fn approx_eq(a: Complex64, b: Complex64, eps: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).norm() <= eps * a.norm().max(b.norm())
}

/// Relative distance used by [`approx_eq`].
pub fn relative_gap(a: Complex64, b: Complex64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

/// A τ×τ diagonal complex matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMatrix {
    entries: Vec<Complex64>,
}

impl DiagonalMatrix {
    pub fn new(entries: Vec<Complex64>) -> Self {
        assert!(
            !entries.is_empty(),
            "diagonal matrix needs at least one entry"
        );
        Self { entries }
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn identity(size: usize) -> Self {
        Self::scaled_identity(size, Complex64::new(1.0, 0.0))
    }

    pub fn scaled_identity(size: usize, kappa: Complex64) -> Self {
        Self::new(vec![kappa; size])
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Complex64] {
        &mut self.entries
    }

    pub fn get(&self, position: usize) -> Complex64 {
        self.entries[position]
    }

    pub fn is_invertible(&self) -> bool {
        self.entries.iter().all(|z| *z != Complex64::new(0.0, 0.0))
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self, DiagError> {
        self.check_size(other)?;
        Ok(Self::new(
            self.entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a * b)
                .collect(),
        ))
    }

    pub fn inverse(&self) -> Result<Self, DiagError> {
        if let Some(position) = self.entries.iter().position(|z| z.norm() == 0.0) {
            return Err(DiagError::Singular { position });
        }
        Ok(Self::new(self.entries.iter().map(|z| z.inv()).collect()))
    }

    /// Integer power; negative exponents invert.
    pub fn powi(&self, exponent: i32) -> Result<Self, DiagError> {
        if exponent < 0 {
            self.inverse()?.powi(-exponent)
        } else {
            Ok(Self::new(
                self.entries.iter().map(|z| z.powi(exponent)).collect(),
            ))
        }
    }

    pub fn approx_eq(&self, other: &Self, eps: f64) -> Result<bool, DiagError> {
        self.check_size(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .all(|(a, b)| approx_eq(*a, *b, eps)))
    }

    /// Largest entrywise relative gap to `other`.
    pub fn max_relative_gap(&self, other: &Self) -> Result<f64, DiagError> {
        self.check_size(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| relative_gap(*a, *b))
            .fold(0.0, f64::max))
    }

    /// Applies the matrix to the rows of a τ-row column-major block.
    pub fn scale_rows(&self, column: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(column.len(), self.size());
        column
            .iter()
            .zip(&self.entries)
            .map(|(v, h)| v * h)
            .collect()
    }

    fn check_size(&self, other: &Self) -> Result<(), DiagError> {
        if self.size() != other.size() {
            Err(DiagError::SizeMismatch {
                left: self.size(),
                right: other.size(),
            })
        } else {
            Ok(())
        }
    }
}

impl Mul for &DiagonalMatrix {
    type Output = DiagonalMatrix;

    fn mul(self, rhs: Self) -> DiagonalMatrix {
        self.checked_mul(rhs).expect("diagonal sizes must match")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn product_with_inverse_is_identity() {
        let a = DiagonalMatrix::from_real(&[2.0, 4.0]);
        let b = DiagonalMatrix::from_real(&[0.5, 0.25]);
        assert_eq!(&a * &b, DiagonalMatrix::identity(2));
        assert_eq!(a.inverse().unwrap(), b);
    }

    #[test]
    fn singular_inverse_errors() {
        let a = DiagonalMatrix::from_real(&[1.0, 0.0]);
        assert_eq!(a.inverse(), Err(DiagError::Singular { position: 1 }));
        assert!(!a.is_invertible());
    }

    #[test]
    fn size_mismatch_errors() {
        let a = DiagonalMatrix::identity(2);
        let b = DiagonalMatrix::identity(3);
        assert!(matches!(
            a.checked_mul(&b),
            Err(DiagError::SizeMismatch { .. })
        ));
        assert!(a.approx_eq(&b, EPS_EQ).is_err());
    }

    #[test]
    fn tolerance_is_relative() {
        let a = DiagonalMatrix::new(vec![c(1e6, 0.0)]);
        let b = DiagonalMatrix::new(vec![c(1e6 + 1e-4, 0.0)]);
        assert!(a.approx_eq(&b, EPS_EQ).unwrap());
        let b = DiagonalMatrix::new(vec![c(1e6 + 1.0, 0.0)]);
        assert!(!a.approx_eq(&b, EPS_EQ).unwrap());
        assert!(!approx_eq(c(1.0, 0.0), c(1.0 + 1e-15, 0.0), 0.0));
    }

    #[test]
    fn powers() {
        let a = DiagonalMatrix::new(vec![c(0.0, 2.0), c(3.0, 0.0)]);
        let sq = a.powi(2).unwrap();
        assert_eq!(sq.entries(), &[c(-4.0, 0.0), c(9.0, 0.0)]);
        let back = &a.powi(-1).unwrap() * &a;
        assert!(back.approx_eq(&DiagonalMatrix::identity(2), 1e-15).unwrap());
    }

    fn arb_diag(n: usize) -> impl Strategy<Value = DiagonalMatrix> {
        prop::collection::vec((0.1f64..3.0, -3.2f64..3.2), n).prop_map(|v| {
            DiagonalMatrix::new(
                v.into_iter()
                    .map(|(r, t)| Complex64::from_polar(r, t))
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn multiplication_is_associative(a in arb_diag(4), b in arb_diag(4), cc in arb_diag(4)) {
            let left = &(&a * &b) * &cc;
            let right = &a * &(&b * &cc);
            prop_assert!(left.approx_eq(&right, 1e-12).unwrap());
        }

        #[test]
        fn multiplication_commutes(a in arb_diag(3), b in arb_diag(3)) {
            prop_assert!((&a * &b).approx_eq(&(&b * &a), 1e-15).unwrap());
        }
    }
}
