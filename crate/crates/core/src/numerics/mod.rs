//! Dense linear algebra, seeded sampling, fully-connected networks and the
//! constraint projections used by training.

mod matrix;
mod mlp;
mod project;
mod rng;

pub use matrix::{matmul3, Matrix};
pub use mlp::{Activation, Layer, MlpCache, MlpParams};
pub use project::{orthogonalize, row_orthonormality_residual, unit_clip_columns, CLIP_SLACK, RANK_TOL};
pub use rng::Rng;

use crate::error::{HandaError, Result};

/// Named, flat view of one parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamBlock<'a> {
    pub name: String,
    pub values: &'a [f64],
}

impl<'a> ParamBlock<'a> {
    pub fn new(name: impl Into<String>, values: &'a [f64]) -> Self {
        ParamBlock {
            name: name.into(),
            values,
        }
    }
}

/// A collection of trainable tensors that can be updated in place.
///
/// Gradients are represented by a value of the same type, so `blocks()` of a
/// parameter set and of its gradient line up one-to-one.
pub trait ParamSet {
    fn blocks(&self) -> Vec<ParamBlock<'_>>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|b| b.values.len()).sum()
    }
}

impl ParamSet for Matrix {
    fn blocks(&self) -> Vec<ParamBlock<'_>> {
        vec![ParamBlock::new("matrix", self.as_slice())]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

fn apply_step<P: ParamSet>(params: &mut P, grads: &P, step: f64) -> Result<()> {
    let gblocks = grads.blocks();
    let plen: Vec<usize> = params.blocks().iter().map(|b| b.values.len()).collect();
    if plen.len() != gblocks.len() || plen.iter().zip(&gblocks).any(|(p, g)| *p != g.values.len()) {
        return Err(HandaError::shape(
            "sgd_step",
            "gradient layout does not match parameters",
        ));
    }
    if let Some(bad) = gblocks.iter().find(|b| b.values.iter().any(|v| !v.is_finite())) {
        return Err(HandaError::NonFiniteGradient(bad.name.clone()));
    }
    if step == 0.0 {
        return Ok(());
    }
    for (p, g) in params.blocks_mut().into_iter().zip(&gblocks) {
        for (pv, gv) in p.iter_mut().zip(g.values) {
            *pv -= step * gv;
        }
    }
    Ok(())
}

/// Plain gradient descent: `params ← params − lr · grads`.
pub fn sgd_step<P: ParamSet>(params: &mut P, grads: &P, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(HandaError::contract(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    apply_step(params, grads, lr)
}

/// Gradient ascent: `params ← params + lr · grads`.
pub fn sgd_ascent_step<P: ParamSet>(params: &mut P, grads: &P, lr: f64) -> Result<()> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(HandaError::contract(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    apply_step(params, grads, -lr)
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, 1e-6)`, the comparison used for
/// gradient checks.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_params() {
        let mut p = Matrix::from_rows(&[&[1.0, 2.0]]);
        let g = Matrix::from_rows(&[&[5.0, -3.0]]);
        sgd_step(&mut p, &g, 0.0).unwrap();
        assert_eq!(p, Matrix::from_rows(&[&[1.0, 2.0]]));
    }

    #[test]
    fn hand_step() {
        let mut p = Matrix::from_rows(&[&[1.0]]);
        sgd_step(&mut p, &Matrix::from_rows(&[&[2.0]]), 0.1).unwrap();
        assert!((p[(0, 0)] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn two_steps_equal_one_summed_step() {
        let mut rng = Rng::new(5);
        let p0 = rng.normal_matrix(3, 3);
        let g1 = rng.normal_matrix(3, 3);
        let g2 = rng.normal_matrix(3, 3);
        let mut a = p0.clone();
        sgd_step(&mut a, &g1, 0.1).unwrap();
        sgd_step(&mut a, &g2, 0.1).unwrap();
        let mut b = p0;
        sgd_step(&mut b, &g1.add(&g2).unwrap(), 0.1).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-14);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = Matrix::zeros(1, 2);
        let g = Matrix::from_rows(&[&[1.0, f64::NAN]]);
        assert!(matches!(sgd_step(&mut p, &g, 0.1), Err(HandaError::NonFiniteGradient(_))));
        assert_eq!(p, Matrix::zeros(1, 2));
    }

    #[test]
    fn mismatched_gradient_is_shape_error() {
        let mut p = Matrix::zeros(2, 2);
        assert!(sgd_step(&mut p, &Matrix::zeros(1, 2), 0.1).is_err());
    }
}
