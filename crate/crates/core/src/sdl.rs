//! Shared dictionary learning.
//!
//! Source and target samples are projected into one `k`-dimensional space by
//! `R = A·B·X`, where `B` is a domain-specific row-orthonormal projection and
//! `A` is shared. The reconstruction objective ties these to the orthonormal
//! projections `P` and the shared dictionary `D`:
//!
//! ```text
//! L = ‖P_s X_s − D A B_s X_s‖²_F / n_s + ‖P_t X_t − D A B_t X_t‖²_F / n_t
//! ```

use crate::error::{HandaError, Result};
use crate::numerics::{
    orthogonalize, row_orthonormality_residual, unit_clip_columns, Matrix, ParamBlock, ParamSet,
    Rng,
};

/// The six dictionary-learning matrices. Also used, with identical layout,
/// to carry their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct SdlParams {
    /// `k × m_s`, orthonormal rows.
    pub p_s: Matrix,
    /// `k × m_t`, orthonormal rows.
    pub p_t: Matrix,
    /// `k × k` shared dictionary, columns in the unit ball.
    pub d: Matrix,
    /// `k × k` shared projection, columns in the unit ball.
    pub a: Matrix,
    /// `k × m_s`, orthonormal rows.
    pub b_s: Matrix,
    /// `k × m_t`, orthonormal rows.
    pub b_t: Matrix,
}

impl SdlParams {
    /// Random orthonormal projections with `D = A = I`.
    pub fn init(k: usize, m_s: usize, m_t: usize, rng: &mut Rng) -> Result<Self> {
        if k == 0 || k > m_s.min(m_t) {
            return Err(HandaError::contract(format!(
                "latent dimension k={k} must be in 1..=min(m_s={m_s}, m_t={m_t})"
            )));
        }
        Ok(SdlParams {
            p_s: orthogonalize(&rng.normal_matrix(k, m_s))?,
            p_t: orthogonalize(&rng.normal_matrix(k, m_t))?,
            d: Matrix::identity(k),
            a: Matrix::identity(k),
            b_s: orthogonalize(&rng.normal_matrix(k, m_s))?,
            b_t: orthogonalize(&rng.normal_matrix(k, m_t))?,
        })
    }

    pub fn zeros(k: usize, m_s: usize, m_t: usize) -> Self {
        SdlParams {
            p_s: Matrix::zeros(k, m_s),
            p_t: Matrix::zeros(k, m_t),
            d: Matrix::zeros(k, k),
            a: Matrix::zeros(k, k),
            b_s: Matrix::zeros(k, m_s),
            b_t: Matrix::zeros(k, m_t),
        }
    }

    pub fn zeros_like(&self) -> Self {
        SdlParams::zeros(self.k(), self.m_s(), self.m_t())
    }

    pub fn k(&self) -> usize {
        self.a.rows()
    }

    pub fn m_s(&self) -> usize {
        self.b_s.cols()
    }

    pub fn m_t(&self) -> usize {
        self.b_t.cols()
    }

    fn check_inputs(&self, op: &'static str, x_s: &Matrix, x_t: &Matrix) -> Result<()> {
        if x_s.rows() != self.m_s() {
            return Err(HandaError::shape(
                op,
                format!("source batch has {} features, expected {}", x_s.rows(), self.m_s()),
            ));
        }
        if x_t.rows() != self.m_t() {
            return Err(HandaError::shape(
                op,
                format!("target batch has {} features, expected {}", x_t.rows(), self.m_t()),
            ));
        }
        Ok(())
    }

    /// `(A B_s X_s, A B_t X_t)`, both with `k` rows.
    pub fn represent(&self, x_s: &Matrix, x_t: &Matrix) -> Result<(Matrix, Matrix)> {
        self.check_inputs("sdl_represent", x_s, x_t)?;
        Ok((self.represent_source(x_s)?, self.represent_target(x_t)?))
    }

    pub fn represent_source(&self, x_s: &Matrix) -> Result<Matrix> {
        self.a.matmul(&self.b_s.matmul(x_s)?)
    }

    pub fn represent_target(&self, x_t: &Matrix) -> Result<Matrix> {
        self.a.matmul(&self.b_t.matmul(x_t)?)
    }

    fn residual(p: &Matrix, da: &Matrix, b: &Matrix, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let bx = b.matmul(x)?;
        let recon = da.matmul(&bx)?;
        Ok((p.matmul(x)?.sub(&recon)?, bx))
    }

    /// Batch-normalized reconstruction upper bound.
    pub fn loss(&self, x_s: &Matrix, x_t: &Matrix) -> Result<f64> {
        self.check_inputs("sdl_loss", x_s, x_t)?;
        let da = self.d.matmul(&self.a)?;
        let (e_s, _) = Self::residual(&self.p_s, &da, &self.b_s, x_s)?;
        let (e_t, _) = Self::residual(&self.p_t, &da, &self.b_t, x_t)?;
        Ok(batch_mean(e_s.sum_sq(), x_s.cols()) + batch_mean(e_t.sum_sq(), x_t.cols()))
    }

    /// Exact gradient of [`SdlParams::loss`] with respect to all six matrices.
    pub fn grads(&self, x_s: &Matrix, x_t: &Matrix) -> Result<SdlParams> {
        self.check_inputs("sdl_grads", x_s, x_t)?;
        let da = self.d.matmul(&self.a)?;
        let mut g = self.zeros_like();

        for (p, b, x, gp, gb) in [
            (&self.p_s, &self.b_s, x_s, &mut g.p_s, &mut g.b_s),
            (&self.p_t, &self.b_t, x_t, &mut g.p_t, &mut g.b_t),
        ] {
            let n = x.cols();
            if n == 0 {
                continue;
            }
            let c = 2.0 / n as f64;
            let (e, bx) = Self::residual(p, &da, b, x)?;
            // L = c/2 ‖E‖², E = P X − D A B X
            *gp = e.matmul_nt(x)?.scale(c);
            let abx = self.a.matmul(&bx)?;
            g.d.axpy(-c, &e.matmul_nt(&abx)?)?;
            let dte = self.d.matmul_tn(&e)?;
            g.a.axpy(-c, &dte.matmul_nt(&bx)?)?;
            *gb = da.matmul_tn(&e)?.matmul_nt(x)?.scale(-c);
        }
        Ok(g)
    }

    /// Pulls gradients with respect to `R_s = A B_s X_s` and `R_t = A B_t X_t`
    /// back onto `A`, `B_s` and `B_t`. The other blocks of the result are zero.
    pub fn chain_backward(
        &self,
        x_s: &Matrix,
        x_t: &Matrix,
        grad_r_s: &Matrix,
        grad_r_t: &Matrix,
    ) -> Result<SdlParams> {
        let mut g = self.zeros_like();
        for (b, x, gr, gb) in [
            (&self.b_s, x_s, grad_r_s, &mut g.b_s),
            (&self.b_t, x_t, grad_r_t, &mut g.b_t),
        ] {
            if x.cols() == 0 {
                continue;
            }
            let bx = b.matmul(x)?;
            g.a.axpy(1.0, &gr.matmul_nt(&bx)?)?;
            *gb = self.a.matmul_tn(gr)?.matmul_nt(x)?;
        }
        Ok(g)
    }

    /// Column-clips `D` and `A` into the unit ball and replaces the four
    /// projections by their nearest row-orthonormal matrices.
    pub fn project(&self) -> Result<SdlParams> {
        let orth = |w: &Matrix, name: &str| {
            orthogonalize(w).map_err(|e| match e {
                HandaError::Degenerate(msg) => HandaError::Degenerate(format!("{name}: {msg}")),
                other => other,
            })
        };
        Ok(SdlParams {
            p_s: orth(&self.p_s, "P_s")?,
            p_t: orth(&self.p_t, "P_t")?,
            d: unit_clip_columns(&self.d),
            a: unit_clip_columns(&self.a),
            b_s: orth(&self.b_s, "B_s")?,
            b_t: orth(&self.b_t, "B_t")?,
        })
    }

    /// Projects only the encoder blocks `A`, `B_s`, `B_t`, leaving `D`,
    /// `P_s` and `P_t` bit-for-bit unchanged.
    pub fn project_encoder(&self) -> Result<SdlParams> {
        let full = self.project()?;
        Ok(SdlParams {
            a: full.a,
            b_s: full.b_s,
            b_t: full.b_t,
            ..self.clone()
        })
    }

    /// Largest orthogonality residual `‖W Wᵀ − I‖_F` over the four projections.
    pub fn max_orthonormality_residual(&self) -> f64 {
        [&self.p_s, &self.p_t, &self.b_s, &self.b_t]
            .into_iter()
            .map(row_orthonormality_residual)
            .fold(0.0, f64::max)
    }

    /// Largest column norm over `D` and `A`.
    pub fn max_dictionary_column_norm(&self) -> f64 {
        self.d
            .column_norms()
            .into_iter()
            .chain(self.a.column_norms())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SdlParams) -> f64 {
        self.blocks()
            .iter()
            .zip(other.blocks())
            .flat_map(|(a, b)| a.values.iter().zip(b.values).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

fn batch_mean(total: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

impl ParamSet for SdlParams {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        vec![
            ParamBlock::new("P_s", self.p_s.as_slice()),
            ParamBlock::new("P_t", self.p_t.as_slice()),
            ParamBlock::new("D", self.d.as_slice()),
            ParamBlock::new("A", self.a.as_slice()),
            ParamBlock::new("B_s", self.b_s.as_slice()),
            ParamBlock::new("B_t", self.b_t.as_slice()),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.p_s.as_mut_slice(),
            self.p_t.as_mut_slice(),
            self.d.as_mut_slice(),
            self.a.as_mut_slice(),
            self.b_s.as_mut_slice(),
            self.b_t.as_mut_slice(),
        ]
    }
}

/// Free-function form of [`SdlParams::represent`].
pub fn sdl_represent(params: &SdlParams, x_s: &Matrix, x_t: &Matrix) -> Result<(Matrix, Matrix)> {
    params.represent(x_s, x_t)
}

pub fn sdl_loss(params: &SdlParams, x_s: &Matrix, x_t: &Matrix) -> Result<f64> {
    params.loss(x_s, x_t)
}

pub fn sdl_grads(params: &SdlParams, x_s: &Matrix, x_t: &Matrix) -> Result<SdlParams> {
    params.grads(x_s, x_t)
}

pub fn sdl_project(params: &SdlParams) -> Result<SdlParams> {
    params.project()
}
