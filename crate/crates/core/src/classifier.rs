//! Shared multi-class hinge classifier over the feature-net embedding.

use crate::error::{HandaError, Result};
use crate::numerics::{Matrix, MlpParams, Rng};
use crate::sdl::SdlParams;

/// `h_C`: embedding (`d_N`) → one raw score per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    pub net: MlpParams,
    num_classes: usize,
}

impl ClassifierHead {
    /// Single affine layer from `input_dim` features to `num_classes` scores.
    pub fn new(input_dim: usize, num_classes: usize, rng: &mut Rng) -> Result<Self> {
        Self::from_net(MlpParams::new(&[input_dim, num_classes], rng)?, num_classes)
    }

    pub fn from_net(net: MlpParams, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(HandaError::contract(format!(
                "classifier needs at least two classes, got {num_classes}"
            )));
        }
        if net.output_dim() != num_classes {
            return Err(HandaError::shape(
                "ClassifierHead",
                format!("network emits {} scores for {num_classes} classes", net.output_dim()),
            ));
        }
        Ok(ClassifierHead { net, num_classes })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }
}

fn check_labels(scores: &Matrix, labels: &[usize]) -> Result<()> {
    if scores.cols() != labels.len() {
        return Err(HandaError::shape(
            "hinge_loss",
            format!("{} score columns for {} labels", scores.cols(), labels.len()),
        ));
    }
    if labels.is_empty() {
        return Err(HandaError::contract("hinge loss needs at least one sample"));
    }
    if scores.rows() < 2 {
        return Err(HandaError::contract("hinge loss needs at least two classes"));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= scores.rows()) {
        return Err(HandaError::contract(format!(
            "label {bad} outside [0, {})",
            scores.rows()
        )));
    }
    Ok(())
}

/// Highest-scoring class other than `y`; ties go to the smaller index.
fn runner_up(scores: &Matrix, col: usize, y: usize) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for c in 0..scores.rows() {
        if c != y && (best == usize::MAX || scores[(c, col)] > best_score) {
            best = c;
            best_score = scores[(c, col)];
        }
    }
    best
}

/// Mean Crammer–Singer hinge `max(0, 1 + max_{j≠y} s_j − s_y)` over the
/// columns of `scores` (`C × n`).
pub fn hinge_loss(scores: &Matrix, labels: &[usize]) -> Result<f64> {
    Ok(hinge_loss_with_grad(scores, labels)?.0)
}

/// Hinge loss and its subgradient with respect to `scores`. At the kink
/// (margin exactly zero) the zero branch is taken.
pub fn hinge_loss_with_grad(scores: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    check_labels(scores, labels)?;
    let n = labels.len() as f64;
    let mut grad = Matrix::zeros(scores.rows(), scores.cols());
    let mut total = 0.0;
    for (col, &y) in labels.iter().enumerate() {
        let j = runner_up(scores, col, y);
        let margin = 1.0 + scores[(j, col)] - scores[(y, col)];
        if margin > 0.0 {
            total += margin;
            grad[(j, col)] += 1.0 / n;
            grad[(y, col)] -= 1.0 / n;
        }
    }
    Ok((total / n, grad))
}

fn branch_scores(head: &ClassifierHead, feature_net: &MlpParams, r: &Matrix) -> Result<Matrix> {
    head.net.apply(&feature_net.apply(r)?)
}

/// `½ hinge(source) + ½ hinge(labeled target)` on representations `r`.
pub fn classifier_loss(
    head: &ClassifierHead,
    feature_net: &MlpParams,
    r_s: &Matrix,
    y_s: &[usize],
    r_t: &Matrix,
    y_t: &[usize],
) -> Result<f64> {
    if y_t.is_empty() {
        return Err(HandaError::contract("labeled target batch is empty"));
    }
    let l_s = hinge_loss(&branch_scores(head, feature_net, r_s)?, y_s)?;
    let l_t = hinge_loss(&branch_scores(head, feature_net, r_t)?, y_t)?;
    Ok(0.5 * l_s + 0.5 * l_t)
}

/// Subgradients of the classification loss through `h_C ∘ φ_N ∘ (A·B·X)`.
#[derive(Debug, Clone)]
pub struct ClassifierGrads {
    pub loss: f64,
    pub head: MlpParams,
    pub feature_net: MlpParams,
    /// `a`, `b_s`, `b_t` populated; `d`, `p_s`, `p_t` are identically zero
    /// because the loss does not depend on them.
    pub sdl: SdlParams,
}

/// Which branches of the convex combination contribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branches {
    Both,
    TargetOnly,
}

pub fn classifier_grads(
    head: &ClassifierHead,
    feature_net: &MlpParams,
    sdl: &SdlParams,
    x_s: &Matrix,
    y_s: &[usize],
    x_t: &Matrix,
    y_t: &[usize],
) -> Result<ClassifierGrads> {
    classifier_grads_with(head, feature_net, sdl, x_s, y_s, x_t, y_t, Branches::Both)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn classifier_grads_with(
    head: &ClassifierHead,
    feature_net: &MlpParams,
    sdl: &SdlParams,
    x_s: &Matrix,
    y_s: &[usize],
    x_t: &Matrix,
    y_t: &[usize],
    branches: Branches,
) -> Result<ClassifierGrads> {
    if y_t.is_empty() {
        return Err(HandaError::contract("labeled target batch is empty"));
    }
    let (x_s, y_s): (Matrix, &[usize]) = match branches {
        Branches::Both => (x_s.clone(), y_s),
        Branches::TargetOnly => (Matrix::zeros(sdl.m_s(), 0), &[]),
    };
    let (r_s, r_t) = sdl.represent(&x_s, x_t)?;
    let n_s = r_s.cols();
    let r = r_s.hcat(&r_t)?;
    let (f, cache_n) = feature_net.forward(&r)?;
    let (scores, cache_c) = head.net.forward(&f)?;

    let (loss, g_scores) = match branches {
        Branches::Both => {
            let (l_s, g_s) = hinge_loss_with_grad(&scores.column_range(0, n_s), y_s)?;
            let (l_t, g_t) = hinge_loss_with_grad(&scores.column_range(n_s, scores.cols()), y_t)?;
            (0.5 * l_s + 0.5 * l_t, g_s.scale(0.5).hcat(&g_t.scale(0.5))?)
        }
        Branches::TargetOnly => hinge_loss_with_grad(&scores, y_t)?,
    };
    let (head_grad, g_f) = head.net.backward(&cache_c, &g_scores)?;
    let (feature_grad, g_r) = feature_net.backward(&cache_n, &g_f)?;
    let sdl_grad = sdl.chain_backward(
        &x_s,
        x_t,
        &g_r.column_range(0, n_s),
        &g_r.column_range(n_s, g_r.cols()),
    )?;
    Ok(ClassifierGrads {
        loss,
        head: head_grad,
        feature_net: feature_grad,
        sdl: sdl_grad,
    })
}

/// Arg-max class per column; ties resolve to the smallest class index.
pub fn argmax_columns(scores: &Matrix) -> Vec<usize> {
    (0..scores.cols())
        .map(|col| {
            let mut best = 0;
            for c in 1..scores.rows() {
                if scores[(c, col)] > scores[(best, col)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Predicted labels and raw scores for representations `r`.
pub fn predict(
    head: &ClassifierHead,
    feature_net: &MlpParams,
    r: &Matrix,
) -> Result<(Vec<usize>, Matrix)> {
    let scores = branch_scores(head, feature_net, r)?;
    Ok((argmax_columns(&scores), scores))
}

/// Column-wise softmax of raw scores.
pub fn softmax_columns(scores: &Matrix) -> Matrix {
    let mut out = scores.clone();
    for col in 0..scores.cols() {
        let max = (0..scores.rows())
            .map(|r| scores[(r, col)])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for r in 0..scores.rows() {
            let e = (scores[(r, col)] - max).exp();
            out[(r, col)] = e;
            z += e;
        }
        for r in 0..scores.rows() {
            out[(r, col)] /= z;
        }
    }
    out
}
