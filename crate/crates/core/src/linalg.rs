//! Small dense complex helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::diag::DiagonalMatrix;

pub type CMatrix = DMatrix<Complex64>;

/// Relative singular-value threshold for numeric rank.
pub const EPS_RANK: f64 = 1e-9;

/// Side-by-side concatenation; all blocks must share the row count.
pub fn hstack(rows: usize, blocks: &[CMatrix]) -> CMatrix {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows);
        out.view_mut((0, at), (rows, b.ncols())).copy_from(b);
        at += b.ncols();
    }
    out
}

/// `diag(h) * m`.
pub fn diag_mul(h: &DiagonalMatrix, m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for (r, mut row) in out.row_iter_mut().enumerate() {
        row *= h.get(r);
    }
    out
}

fn threshold(m: &CMatrix, sv: &nalgebra::DVector<f64>) -> f64 {
    let top = sv.iter().copied().fold(0.0, f64::max);
    top * m.nrows().max(m.ncols()) as f64 * EPS_RANK
}

/// Numeric rank: singular values above `sigma_max * size * EPS_RANK`.
pub fn rank(m: &CMatrix) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let thr = threshold(m, &sv);
    sv.iter().filter(|&&s| s > thr && s > 0.0).count()
}

/// Orthonormal basis of the column space.
pub fn column_basis(m: &CMatrix) -> CMatrix {
    if m.ncols() == 0 {
        return CMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let thr = threshold(m, &svd.singular_values);
    let u = svd.u.expect("left vectors requested");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thr && svd.singular_values[i] > 0.0)
        .collect();
    let mut out = CMatrix::zeros(m.nrows(), keep.len());
    for (c, &i) in keep.iter().enumerate() {
        out.set_column(c, &u.column(i));
    }
    out
}

/// `(I - Q Q^H) m` for an orthonormal `Q`.
pub fn project_out(q: &CMatrix, m: &CMatrix) -> CMatrix {
    if q.ncols() == 0 {
        return m.clone();
    }
    m - q * (q.adjoint() * m)
}

/// Whether `e_i` lies in the column space of `m`.
pub fn contains_basis_vector(m: &CMatrix, i: usize) -> bool {
    let mut e = CMatrix::zeros(m.nrows(), 1);
    e[(i, 0)] = Complex64::new(1.0, 0.0);
    rank(&hstack(m.nrows(), &[m.clone(), e])) == rank(m)
}

/// `log2 det(I + a G^H G)`.
pub fn log2_det_gram(g: &CMatrix, a: f64) -> f64 {
    let n = g.ncols();
    if n == 0 {
        return 0.0;
    }
    let gram = CMatrix::identity(n, n) + g.adjoint() * g * Complex64::new(a, 0.0);
    match gram.clone().cholesky() {
        Some(ch) => {
            let l = ch.l();
            2.0 * (0..n).map(|i| l[(i, i)].re.log2()).sum::<f64>()
        }
        None => gram.determinant().norm().log2(),
    }
}

/// Scales every column to unit norm; zero columns stay zero.
pub fn normalize_columns(m: &CMatrix) -> CMatrix {
    let mut out = m.clone();
    for mut col in out.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= Complex64::new(norm, 0.0);
        }
    }
    out
}
