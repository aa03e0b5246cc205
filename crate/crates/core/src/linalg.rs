//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Relative threshold below which singular values count as zero.
pub const RANK_TOL: f64 = 1e-12;

/// Orthonormal basis (as columns) of the null space of `g`.
///
/// `g` is padded with zero rows to a square matrix so that the SVD returns
/// a complete set of right singular vectors.
pub fn null_space(g: &DMatrix<f64>) -> DMatrix<f64> {
    let d = g.ncols();
    if g.nrows() == 0 {
        return DMatrix::identity(d, d);
    }
    let rows = g.nrows().max(d);
    let mut padded = DMatrix::zeros(rows, d);
    padded.view_mut((0, 0), (g.nrows(), d)).copy_from(g);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let smax = svd.singular_values.max();
    let cut = RANK_TOL * smax.max(1.0);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s <= cut)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(d, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the column span of `b`.
pub fn column_space(b: &DMatrix<f64>) -> DMatrix<f64> {
    if b.ncols() == 0 {
        return DMatrix::zeros(b.nrows(), 0);
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let smax = svd.singular_values.max();
    let cut = RANK_TOL * smax.max(f64::MIN_POSITIVE);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > cut)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(b.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Largest singular value together with a unit right singular vector.
pub fn top_singular(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    if m.ncols() == 0 || m.nrows() == 0 {
        return (0.0, DVector::zeros(m.ncols()));
    }
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let (imax, smax) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    (smax, v_t.row(imax).transpose())
}

pub fn max_column_abs_sum(m: &DMatrix<f64>) -> f64 {
    m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

pub fn max_row_abs_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}
