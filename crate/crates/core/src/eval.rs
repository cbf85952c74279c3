//! Accuracy over repeated runs, ROC AUC, paired t-test and a deterministic
//! 2-D PCA for embedding dumps.

use statrs::function::beta::beta_reg;

use crate::error::{HandaError, Result};
use crate::numerics::Matrix;

/// Predictions of one run on a fixed test set.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_id: String,
    pub predictions: Vec<usize>,
    /// Raw classifier scores, classes × samples.
    pub scores: Matrix,
    pub truth: Vec<usize>,
}

impl RunResult {
    pub fn new(
        run_id: impl Into<String>,
        predictions: Vec<usize>,
        scores: Matrix,
        truth: Vec<usize>,
    ) -> Result<Self> {
        if predictions.len() != truth.len() || scores.cols() != truth.len() {
            return Err(HandaError::shape(
                "RunResult",
                format!(
                    "{} predictions, {} score columns, {} labels",
                    predictions.len(),
                    scores.cols(),
                    truth.len()
                ),
            ));
        }
        let classes = scores.rows();
        if predictions.iter().chain(&truth).any(|&c| c >= classes) {
            return Err(HandaError::contract(format!("label outside [0, {classes})")));
        }
        Ok(RunResult {
            run_id: run_id.into(),
            predictions,
            scores,
            truth,
        })
    }

    pub fn accuracy(&self) -> f64 {
        accuracy(&self.predictions, &self.truth)
    }
}

/// Fraction of positions where `pred == truth`; 0 for empty input.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// Mean and sample standard deviation of `values` (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean per-run accuracy and its sample standard deviation.
pub fn average_accuracy(runs: &[RunResult]) -> Result<(f64, f64)> {
    let first = runs
        .first()
        .ok_or_else(|| HandaError::contract("average_accuracy needs at least one run"))?;
    if runs.iter().any(|r| r.truth.len() != first.truth.len()) {
        return Err(HandaError::contract("runs have different test set sizes"));
    }
    let accs: Vec<f64> = runs.iter().map(RunResult::accuracy).collect();
    Ok(mean_std(&accs))
}

/// Mann–Whitney estimate of `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
pub fn auc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(HandaError::shape(
            "auc",
            format!("{} scores for {} labels", scores.len(), truth.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(HandaError::contract("auc scores contain NaN"));
    }
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(HandaError::contract("auc needs both positive and negative samples"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the midrank, kept integral
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let twice_mid = (i + 1 + j) as u64;
        rank_sum2 += twice_mid * order[i..j].iter().filter(|&&k| truth[k]).count() as u64;
        i = j;
    }
    let n_pos = n_pos as u64;
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg as u64) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub df: usize,
    /// Set when the differences have zero variance.
    pub degenerate: bool,
}

/// Two-sided paired t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(HandaError::shape(
            "paired_t_test",
            format!("{} vs {} observations", a.len(), b.len()),
        ));
    }
    if a.len() < 2 {
        return Err(HandaError::contract("paired t-test needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(HandaError::contract("paired t-test inputs must be finite"));
    }
    let df = d.len() - 1;
    let (mean, sd) = mean_std(&d);
    if sd == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
        return Ok(TTest {
            t,
            p,
            df,
            degenerate: true,
        });
    }
    let t = mean / (sd / (d.len() as f64).sqrt());
    let nu = df as f64;
    let p = beta_reg(nu / 2.0, 0.5, nu / (nu + t * t));
    Ok(TTest {
        t,
        p,
        df,
        degenerate: false,
    })
}

/// Top-two principal axes of a point cloud and the projected coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2 {
    pub mean: Vec<f64>,
    pub components: [Vec<f64>; 2],
    /// Variance along each component (n − 1 denominator).
    pub variances: [f64; 2],
    /// 2 × n projection of the centred data.
    pub projected: Matrix,
}

const PCA_TOL: f64 = 1e-9;
const PCA_MAX_ITERS: usize = 100_000;

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

fn mat_vec(c: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..c.rows())
        .map(|i| c.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

fn remove_component(v: &mut [f64], u: &[f64]) {
    let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
    v.iter_mut().zip(u).for_each(|(x, y)| *x -= dot * y);
}

/// Power iteration; `against` is projected out every step.
fn dominant(c: &Matrix, against: Option<&[f64]>) -> Vec<f64> {
    let d = c.rows();
    let mut v: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 / d as f64).collect();
    if let Some(u) = against {
        remove_component(&mut v, u);
    }
    normalize(&mut v);
    let mut prev = f64::INFINITY;
    for _ in 0..PCA_MAX_ITERS {
        let mut w = mat_vec(c, &v);
        if let Some(u) = against {
            remove_component(&mut w, u);
        }
        if normalize(&mut w) <= f64::MIN_POSITIVE {
            return v;
        }
        let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = w;
        // remaining error of a linearly converging sequence: δ ρ / (1 − ρ)
        let rho = (delta / prev).min(0.999_999);
        prev = delta;
        if delta == 0.0 || (rho > 0.0 && delta * rho / (1.0 - rho) <= PCA_TOL * 1e-3) {
            break;
        }
    }
    v
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Deterministic PCA onto two components of `x` (features × samples).
pub fn fit_pca_2d(x: &Matrix) -> Result<Pca2> {
    let (d, n) = x.shape();
    if n < 2 || d < 2 {
        return Err(HandaError::contract(format!(
            "pca_2d needs at least 2 samples and 2 dimensions, got {d}×{n}"
        )));
    }
    if !x.is_finite() {
        return Err(HandaError::contract("pca_2d input contains NaN or Inf"));
    }
    let mean: Vec<f64> = x.row_sums().iter().map(|s| s / n as f64).collect();
    let xc = Matrix::from_fn(d, n, |i, j| x[(i, j)] - mean[i]);
    let cov = xc.matmul_nt(&xc)?.scale(1.0 / (n as f64 - 1.0));
    let trace: f64 = (0..d).map(|i| cov[(i, i)]).sum();
    let scale = x.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if trace <= 1e-24 * scale.max(1.0).powi(2) {
        return Err(HandaError::Degenerate("pca_2d input has zero variance".into()));
    }
    let mut v1 = dominant(&cov, None);
    fix_sign(&mut v1);
    let l1: f64 = mat_vec(&cov, &v1).iter().zip(&v1).map(|(a, b)| a * b).sum();
    let deflated = Matrix::from_fn(d, d, |i, j| cov[(i, j)] - l1 * v1[i] * v1[j]);
    let mut v2 = dominant(&deflated, Some(&v1));
    fix_sign(&mut v2);
    let l2: f64 = mat_vec(&cov, &v2).iter().zip(&v2).map(|(a, b)| a * b).sum();
    let projected = Matrix::from_fn(2, n, |r, j| {
        let v = if r == 0 { &v1 } else { &v2 };
        (0..d).map(|i| v[i] * xc[(i, j)]).sum()
    });
    Ok(Pca2 {
        mean,
        components: [v1, v2],
        variances: [l1, l2.max(0.0)],
        projected,
    })
}

/// 2 × n projection of `x` onto its top two principal components.
pub fn pca_2d(x: &Matrix) -> Result<Matrix> {
    Ok(fit_pca_2d(x)?.projected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn run(pred: Vec<usize>, truth: Vec<usize>) -> RunResult {
        let n = truth.len();
        RunResult::new("r", pred, Matrix::zeros(2, n), truth).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let (m, s) = average_accuracy(&[run(vec![0, 1], vec![0, 1])]).unwrap();
        assert_eq!((m, s), (1.0, 0.0));
        let (m, s) = average_accuracy(&[run(vec![0, 0], vec![0, 1]), run(vec![0, 1], vec![0, 1])])
            .unwrap();
        assert_eq!(m, 0.75);
        assert!((s - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert!(average_accuracy(&[]).is_err());
        assert!(average_accuracy(&[run(vec![0], vec![0]), run(vec![0, 1], vec![0, 1])]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn auc_complement_without_ties() {
        let mut rng = Rng::new(11);
        let s: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let y: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        assert_eq!(auc(&s, &y).unwrap() + auc(&neg, &y).unwrap(), 1.0);
    }

    #[test]
    fn t_test_examples() {
        let a = [1.0, 2.0, 3.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert_eq!((r.t, r.p, r.degenerate), (0.0, 1.0, true));
        let r = paired_t_test(&[2.0, 3.0, 4.0, 5.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(r.degenerate && r.t == f64::INFINITY && r.p == 0.0);
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn t_test_two_degrees_of_freedom_closed_form() {
        // with ν = 2 the two-sided p-value is 1 − t / sqrt(2 + t²)
        let r = paired_t_test(&[3.0, 1.0, 2.5], &[0.0, 0.0, 0.0]).unwrap();
        let expect = 1.0 - r.t / (2.0 + r.t * r.t).sqrt();
        assert!((r.p - expect).abs() < 1e-13, "{} vs {expect}", r.p);
    }

    #[test]
    fn pca_of_planar_data_preserves_distances() {
        let mut rng = Rng::new(12);
        let x = Matrix::from_fn(2, 15, |i, _| if i == 0 { 3.0 } else { 1.0 } * rng.normal());
        let y = pca_2d(&x).unwrap();
        for a in 0..15 {
            for b in 0..15 {
                let dx = ((x[(0, a)] - x[(0, b)]).powi(2) + (x[(1, a)] - x[(1, b)]).powi(2)).sqrt();
                let dy = ((y[(0, a)] - y[(0, b)]).powi(2) + (y[(1, a)] - y[(1, b)]).powi(2)).sqrt();
                assert!((dx - dy).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pca_of_line_has_no_second_variance() {
        let x = Matrix::from_fn(5, 10, |i, j| (i as f64 + 1.0) * (j as f64 - 4.5));
        let p = fit_pca_2d(&x).unwrap();
        assert!(p.variances[1] < 1e-9 * p.variances[0]);
        let row2 = p.projected.row(1);
        assert!(row2.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn pca_rejects_constant_data() {
        let x = Matrix::filled(3, 6, 2.0);
        assert!(matches!(pca_2d(&x), Err(HandaError::Degenerate(_))));
    }

    #[test]
    fn pca_reprojection_is_idempotent() {
        let mut rng = Rng::new(13);
        let x = Matrix::from_fn(6, 30, |i, _| (6 - i) as f64 * rng.normal());
        let y = pca_2d(&x).unwrap();
        let z = pca_2d(&y).unwrap();
        assert!(y.max_abs_diff(&z) < 1e-9, "{}", y.max_abs_diff(&z));
    }
}
