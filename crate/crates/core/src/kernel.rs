//! Kernel two-sample statistics and adversarial kernel matching.
//!
//! The kernel is a uniform mixture of Gaussian RBF kernels
//! `k(a, b) = (1/Q) Σ_q exp(−‖a − b‖² / 2σ_q²)` evaluated on learned
//! embeddings. A feature network `φ_N` embeds the shared representation and a
//! kernel network `φ_M` re-embeds it before the kernel is applied; `φ_M` plays
//! the maximizing role of the min–max game and everything upstream of it the
//! minimizing one.

use serde::{Deserialize, Serialize};

use crate::error::{HandaError, Result};
use crate::numerics::{Matrix, MlpParams};
use crate::sdl::SdlParams;

/// Bandwidths used when nothing else is configured.
pub const DEFAULT_BANDWIDTHS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Estimator {
    /// V-statistic, diagonal included. Always non-negative.
    Biased,
    /// U-statistic, diagonal excluded. For equal sample sizes the cross term
    /// also excludes `i == j`, so identical samples score exactly zero.
    #[default]
    Unbiased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub bandwidths: Vec<f64>,
    /// Multiply every bandwidth by the pooled median pairwise distance.
    pub median_rescale: bool,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            bandwidths: DEFAULT_BANDWIDTHS.to_vec(),
            median_rescale: false,
        }
    }
}

impl KernelSpec {
    pub fn new(bandwidths: Vec<f64>, median_rescale: bool) -> Result<Self> {
        let spec = KernelSpec {
            bandwidths,
            median_rescale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn single(sigma: f64) -> Result<Self> {
        Self::new(vec![sigma], false)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bandwidths.is_empty() {
            return Err(HandaError::contract("kernel needs at least one bandwidth"));
        }
        if let Some(bad) = self.bandwidths.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(HandaError::contract(format!("bandwidth {bad} is not positive")));
        }
        Ok(())
    }

    fn effective_bandwidths(&self, x: &Matrix, y: &Matrix) -> Result<Vec<f64>> {
        self.validate()?;
        if self.median_rescale {
            let m = median_heuristic(x, y)?;
            Ok(self.bandwidths.iter().map(|s| s * m.value).collect())
        } else {
            Ok(self.bandwidths.clone())
        }
    }
}

/// Result of [`median_heuristic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedianBandwidth {
    pub value: f64,
    /// Set when every pooled point coincided and `1.0` was substituted.
    pub fallback: bool,
}

/// Median pairwise Euclidean distance over the pooled columns of `x` and `y`.
pub fn median_heuristic(x: &Matrix, y: &Matrix) -> Result<MedianBandwidth> {
    if x.rows() != y.rows() {
        return Err(HandaError::shape(
            "median_heuristic",
            format!("{} vs {} features", x.rows(), y.rows()),
        ));
    }
    let pooled = x.hcat(y)?.transpose();
    let n = pooled.rows();
    if n < 2 {
        return Err(HandaError::contract("median heuristic needs at least two points"));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(pooled.row(i), pooled.row(j)).sqrt());
        }
    }
    let len = d.len();
    let mid = len / 2;
    let (_, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let med = if len % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if med > 0.0 {
        Ok(MedianBandwidth {
            value: med,
            fallback: false,
        })
    } else {
        log::warn!("median heuristic: all points coincide, using bandwidth scale 1.0");
        Ok(MedianBandwidth {
            value: 1.0,
            fallback: true,
        })
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Kernel value and `−∂k/∂a / (a − b)` for the mixture.
#[inline]
fn kernel_and_slope(d2: f64, inv_two_sig2: &[f64]) -> (f64, f64) {
    let q = inv_two_sig2.len() as f64;
    let mut k = 0.0;
    let mut slope = 0.0;
    for &c in inv_two_sig2 {
        let e = (-d2 * c).exp();
        k += e;
        slope += 2.0 * c * e;
    }
    (k / q, slope / q)
}

/// Order-independent sum, so that swapping the two samples reproduces the
/// statistic bit for bit.
fn canonical_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

struct Weights {
    xx: f64,
    yy: f64,
    xy: f64,
    include_diag: bool,
    /// Equal-size unbiased form: the cross term also skips `i == j`.
    paired: bool,
}

fn weights(n: usize, m: usize, estimator: Estimator) -> Result<Weights> {
    let (n, m) = (n as f64, m as f64);
    match estimator {
        Estimator::Biased => {
            if n < 1.0 || m < 1.0 {
                return Err(HandaError::contract("MMD needs at least one sample per side"));
            }
            Ok(Weights {
                xx: 1.0 / (n * n),
                yy: 1.0 / (m * m),
                xy: 2.0 / (n * m),
                include_diag: true,
                paired: false,
            })
        }
        Estimator::Unbiased => {
            if n < 2.0 || m < 2.0 {
                return Err(HandaError::contract(
                    "unbiased MMD needs at least two samples per side",
                ));
            }
            let paired = n == m;
            Ok(Weights {
                xx: 1.0 / (n * (n - 1.0)),
                yy: 1.0 / (m * (m - 1.0)),
                xy: if paired { 2.0 / (n * (n - 1.0)) } else { 2.0 / (n * m) },
                include_diag: false,
                paired,
            })
        }
    }
}

/// Squared MMD between the columns of `x` and `y`.
pub fn mmd2(x: &Matrix, y: &Matrix, spec: &KernelSpec, estimator: Estimator) -> Result<f64> {
    Ok(mmd2_impl(x, y, spec, estimator, false)?.0)
}

/// Squared MMD together with its gradients with respect to every column of
/// `x` and `y`. When `median_rescale` is set the bandwidth scale is treated
/// as a constant.
pub fn mmd2_with_grad(
    x: &Matrix,
    y: &Matrix,
    spec: &KernelSpec,
    estimator: Estimator,
) -> Result<(f64, Matrix, Matrix)> {
    let (v, g) = mmd2_impl(x, y, spec, estimator, true)?;
    let (gx, gy) = g.expect("gradients requested");
    Ok((v, gx, gy))
}

#[allow(clippy::type_complexity)]
fn mmd2_impl(
    x: &Matrix,
    y: &Matrix,
    spec: &KernelSpec,
    estimator: Estimator,
    want_grad: bool,
) -> Result<(f64, Option<(Matrix, Matrix)>)> {
    if x.rows() != y.rows() {
        return Err(HandaError::shape(
            "mmd2",
            format!("{} vs {} features", x.rows(), y.rows()),
        ));
    }
    let w = weights(x.cols(), y.cols(), estimator)?;
    let bw = spec.effective_bandwidths(x, y)?;
    let inv: Vec<f64> = bw.iter().map(|s| 1.0 / (2.0 * s * s)).collect();

    let xs = x.transpose();
    let ys = y.transpose();
    let (n, m, dim) = (xs.rows(), ys.rows(), x.rows());
    let mut gx = Matrix::zeros(n, dim);
    let mut gy = Matrix::zeros(m, dim);

    // Within-sample terms; derivative of k(a, b) w.r.t. a is −slope·(a − b),
    // and each unordered pair appears twice in the double sum.
    let within = |pts: &Matrix, weight: f64, grad: &mut Matrix| -> f64 {
        let cnt = pts.rows();
        let mut sum = if w.include_diag { cnt as f64 } else { 0.0 };
        for i in 0..cnt {
            for j in i + 1..cnt {
                let (a, b) = (pts.row(i), pts.row(j));
                let (k, slope) = kernel_and_slope(sq_dist(a, b), &inv);
                sum += 2.0 * k;
                if want_grad {
                    let c = -2.0 * weight * slope;
                    for f in 0..dim {
                        let diff = a[f] - b[f];
                        grad[(i, f)] += c * diff;
                        grad[(j, f)] -= c * diff;
                    }
                }
            }
        }
        sum * weight
    };
    let term_x = within(&xs, w.xx, &mut gx);
    let term_y = within(&ys, w.yy, &mut gy);

    let mut cross = Vec::with_capacity(n * m);
    for i in 0..n {
        let a = xs.row(i);
        for j in 0..m {
            if w.paired && i == j {
                continue;
            }
            let b = ys.row(j);
            let (k, slope) = kernel_and_slope(sq_dist(a, b), &inv);
            cross.push(k);
            if want_grad {
                let c = w.xy * slope;
                for f in 0..dim {
                    let diff = a[f] - b[f];
                    gx[(i, f)] += c * diff;
                    gy[(j, f)] -= c * diff;
                }
            }
        }
    }
    let term_xy = canonical_sum(cross) * w.xy;
    let value = (term_x + term_y) - term_xy;
    let grads = want_grad.then(|| (gx.transpose(), gy.transpose()));
    Ok((value, grads))
}

/// The two adversarial networks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvNets {
    /// `φ_N`: shared representation (`k`) → embedding (`d_N`).
    pub feature_net: MlpParams,
    /// `φ_M`: embedding (`d_N`) → kernel embedding (`d_M`).
    pub kernel_net: MlpParams,
}

impl AdvNets {
    pub fn new(feature_net: MlpParams, kernel_net: MlpParams) -> Result<Self> {
        if feature_net.output_dim() != kernel_net.input_dim() {
            return Err(HandaError::shape(
                "AdvNets::new",
                format!(
                    "feature net emits {} but kernel net expects {}",
                    feature_net.output_dim(),
                    kernel_net.input_dim()
                ),
            ));
        }
        Ok(AdvNets {
            feature_net,
            kernel_net,
        })
    }

    fn embed(&self, r: &Matrix) -> Result<Matrix> {
        self.kernel_net.apply(&self.feature_net.apply(r)?)
    }
}

/// MMD² between `φ_M(φ_N(r_s))` and `φ_M(φ_N(r_t))`.
pub fn adv_loss(
    nets: &AdvNets,
    r_s: &Matrix,
    r_t: &Matrix,
    spec: &KernelSpec,
    estimator: Estimator,
) -> Result<f64> {
    if r_s.rows() != nets.feature_net.input_dim() || r_t.rows() != nets.feature_net.input_dim() {
        return Err(HandaError::shape(
            "adv_loss",
            format!(
                "representations have {}/{} rows, feature net expects {}",
                r_s.rows(),
                r_t.rows(),
                nets.feature_net.input_dim()
            ),
        ));
    }
    mmd2(&nets.embed(r_s)?, &nets.embed(r_t)?, spec, estimator)
}

/// Gradients of the adversarial loss through `φ_M ∘ φ_N ∘ (A·B·X)`.
#[derive(Debug, Clone)]
pub struct AdvGrads {
    pub loss: f64,
    pub feature_net: MlpParams,
    pub kernel_net: MlpParams,
    /// Only `a`, `b_s` and `b_t` are populated.
    pub sdl: SdlParams,
}

pub fn adv_grads(
    nets: &AdvNets,
    sdl: &SdlParams,
    x_s: &Matrix,
    x_t: &Matrix,
    spec: &KernelSpec,
    estimator: Estimator,
) -> Result<AdvGrads> {
    let (r_s, r_t) = sdl.represent(x_s, x_t)?;
    let n_s = r_s.cols();
    let r = r_s.hcat(&r_t)?;
    let (f, cache_n) = nets.feature_net.forward(&r)?;
    let (e, cache_m) = nets.kernel_net.forward(&f)?;
    let e_s = e.column_range(0, n_s);
    let e_t = e.column_range(n_s, e.cols());
    let (loss, g_es, g_et) = mmd2_with_grad(&e_s, &e_t, spec, estimator)?;
    let g_e = g_es.hcat(&g_et)?;
    let (kernel_grad, g_f) = nets.kernel_net.backward(&cache_m, &g_e)?;
    let (feature_grad, g_r) = nets.feature_net.backward(&cache_n, &g_f)?;
    let sdl_grad = sdl.chain_backward(
        x_s,
        x_t,
        &g_r.column_range(0, n_s),
        &g_r.column_range(n_s, g_r.cols()),
    )?;
    Ok(AdvGrads {
        loss,
        feature_net: feature_grad,
        kernel_net: kernel_grad,
        sdl: sdl_grad,
    })
}
