use nalgebra::DMatrix;

use super::Matrix;
use crate::error::{HandaError, Result};

/// Singular values below this make the polar factor ill-defined.
pub const RANK_TOL: f64 = 1e-12;

/// Nearest matrix with orthonormal rows in Frobenius norm: for
/// `W = U Σ Vᵀ` this is `U Vᵀ`. Requires `rows ≤ cols` and full row rank.
pub fn orthogonalize(w: &Matrix) -> Result<Matrix> {
    if w.rows() > w.cols() {
        return Err(HandaError::shape(
            "orthogonalize",
            format!("{}x{} is tall; row-orthonormality needs rows <= cols", w.rows(), w.cols()),
        ));
    }
    if !w.is_finite() {
        return Err(HandaError::Degenerate("orthogonalize: non-finite entries".into()));
    }
    let dm = DMatrix::from_row_slice(w.rows(), w.cols(), w.as_slice());
    let svd = dm.svd(true, true);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin >= RANK_TOL) {
        return Err(HandaError::Degenerate(format!(
            "orthogonalize: smallest singular value {smin:e} below {RANK_TOL:e}"
        )));
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => unreachable!("both factors were requested"),
    };
    let polar = u * v_t;
    Ok(Matrix::from_fn(w.rows(), w.cols(), |i, j| polar[(i, j)]))
}

/// Columns whose norm is within this of one count as already feasible, so a
/// rescaled column (norm 1 up to rounding) is never rescaled again.
pub const CLIP_SLACK: f64 = 1e-13;

/// Rescales every column whose ℓ2 norm exceeds one onto the unit sphere;
/// shorter columns are left untouched.
pub fn unit_clip_columns(w: &Matrix) -> Matrix {
    let norms = w.column_norms();
    let mut out = w.clone();
    for (j, &n) in norms.iter().enumerate() {
        if n > 1.0 + CLIP_SLACK {
            for i in 0..w.rows() {
                out[(i, j)] /= n;
            }
        }
    }
    out
}

/// `‖W Wᵀ − I‖_F`.
pub fn row_orthonormality_residual(w: &Matrix) -> f64 {
    let gram = w.matmul_nt(w).expect("square by construction");
    gram.sub(&Matrix::identity(w.rows()))
        .expect("same shape")
        .frobenius_norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn orthonormal_rows_are_fixed_points() {
        let mut rng = Rng::new(3);
        let q = orthogonalize(&rng.normal_matrix(3, 5)).unwrap();
        let again = orthogonalize(&q).unwrap();
        assert!(again.max_abs_diff(&q) <= 1e-10);
    }

    #[test]
    fn positive_diagonal_maps_to_identity() {
        let d = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 3.0]]);
        assert!(orthogonalize(&d).unwrap().max_abs_diff(&Matrix::identity(2)) <= 1e-12);
    }

    #[test]
    fn polar_factor_beats_random_orthonormal_candidates() {
        let mut rng = Rng::new(17);
        let w = rng.normal_matrix(3, 5);
        let r = orthogonalize(&w).unwrap();
        assert!(row_orthonormality_residual(&r) <= 1e-8);
        let best = w.sub(&r).unwrap().frobenius_norm();
        for _ in 0..2000 {
            // random candidate with orthonormal rows via Gram–Schmidt
            let g = rng.normal_matrix(3, 5);
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for i in 0..3 {
                let mut v = g.row(i).to_vec();
                for u in &rows {
                    let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                    for (a, b) in v.iter_mut().zip(u) {
                        *a -= p * b;
                    }
                }
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                rows.push(v.into_iter().map(|a| a / n).collect());
            }
            let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
            let cand = Matrix::from_rows(&refs);
            assert!(w.sub(&cand).unwrap().frobenius_norm() >= best - 1e-12);
        }
    }

    #[test]
    fn rank_deficiency_is_degenerate() {
        let w = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]]);
        assert!(matches!(orthogonalize(&w), Err(HandaError::Degenerate(_))));
        assert!(orthogonalize(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn tall_input_is_rejected() {
        assert!(orthogonalize(&Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn clip_examples() {
        let inside = Matrix::from_rows(&[&[0.3], &[0.4]]);
        assert_eq!(unit_clip_columns(&inside), inside);
        let outside = Matrix::from_rows(&[&[3.0], &[4.0]]);
        assert!(unit_clip_columns(&outside).max_abs_diff(&Matrix::from_rows(&[&[0.6], &[0.8]])) <= 1e-15);
    }

    #[test]
    fn clip_bounds_random_columns() {
        let mut rng = Rng::new(8);
        let w = rng.uniform_matrix(6, 9, -3.0, 3.0);
        let c = unit_clip_columns(&w);
        assert!(c.column_norms().iter().all(|&n| n <= 1.0 + 1e-12));
    }
}
