//! The alternating min–max training loop, convergence detection, grid search
//! and ablations.

mod ablation;
mod grid;

pub use ablation::{ablate, train_target_only, AblationMode};
pub use grid::{grid_search, GridCell, GridResult, Scorer, DEFAULT_BETA_GRID, DEFAULT_GAMMA_GRID};

use serde::{Deserialize, Serialize};

use crate::classifier::{classifier_grads_with, predict, Branches, ClassifierHead};
use crate::data::DomainDataset;
use crate::error::{HandaError, Result};
use crate::kernel::{adv_grads, adv_loss, AdvNets, Estimator, KernelSpec};
use crate::numerics::{sgd_ascent_step, sgd_step, Matrix, MlpParams, Rng};
use crate::sdl::SdlParams;

/// Trailing-window stability test applied to every loss trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub window: usize,
    pub tol: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            window: 200,
            tol: 0.1,
        }
    }
}

/// Shapes of the learned networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Architecture {
    /// Shared representation size; `None` picks `min(m_s, m_t, 128)`.
    pub k: Option<usize>,
    pub feature_hidden_layers: usize,
    pub feature_width: usize,
    /// `d_N`, output size of the feature network.
    pub feature_dim: usize,
    pub kernel_hidden_layers: usize,
    pub kernel_width: usize,
    /// `d_M`, output size of the kernel network.
    pub kernel_dim: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            k: None,
            feature_hidden_layers: 2,
            feature_width: 64,
            feature_dim: 64,
            kernel_hidden_layers: 1,
            kernel_width: 64,
            kernel_dim: 32,
        }
    }
}

impl Architecture {
    pub fn resolve_k(&self, m_s: usize, m_t: usize) -> usize {
        self.k.unwrap_or_else(|| m_s.min(m_t).min(128))
    }

    fn dims(input: usize, hidden: usize, width: usize, output: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(width).take(hidden));
        dims.push(output);
        dims
    }

    pub fn feature_dims(&self, k: usize) -> Vec<usize> {
        Self::dims(k, self.feature_hidden_layers, self.feature_width, self.feature_dim)
    }

    pub fn kernel_dims(&self) -> Vec<usize> {
        Self::dims(self.feature_dim, self.kernel_hidden_layers, self.kernel_width, self.kernel_dim)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the dictionary loss.
    pub beta: f64,
    /// Weight of the adversarial loss.
    pub gamma: f64,
    pub b_s: usize,
    pub b_l: usize,
    /// Capped at the number of unlabeled target samples.
    pub b_u: usize,
    pub n_d: usize,
    pub n_a: usize,
    pub n_c: usize,
    pub lr_sdl: f64,
    pub lr_adv_min: f64,
    pub lr_adv_max: f64,
    pub lr_cls: f64,
    pub max_outer_iters: usize,
    pub seed: u64,
    /// `None` runs exactly `max_outer_iters` iterations.
    pub stop: Option<StopRule>,
    /// Draw new minibatches before each phase instead of once per iteration.
    pub fresh_batches_per_phase: bool,
    pub kernel: KernelSpec,
    pub estimator: Estimator,
    pub arch: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 1e-4,
            gamma: 1.0,
            b_s: 64,
            b_l: 16,
            b_u: 64,
            n_d: 1,
            n_a: 1,
            n_c: 1,
            lr_sdl: 1e-3,
            lr_adv_min: 1e-3,
            lr_adv_max: 1e-3,
            lr_cls: 1e-3,
            max_outer_iters: 2000,
            seed: 0,
            stop: Some(StopRule::default()),
            fresh_batches_per_phase: false,
            kernel: KernelSpec::default(),
            estimator: Estimator::default(),
            arch: Architecture::default(),
        }
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HandaError::contract(format!("{name} must be finite and >= 0, got {v}")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HandaError::contract(format!("{name} must be finite and > 0, got {v}")))
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_nonneg("beta", self.beta)?;
        check_nonneg("gamma", self.gamma)?;
        check_positive("lr_sdl", self.lr_sdl)?;
        check_positive("lr_adv_min", self.lr_adv_min)?;
        check_positive("lr_adv_max", self.lr_adv_max)?;
        check_positive("lr_cls", self.lr_cls)?;
        if self.b_s == 0 || self.b_l == 0 || self.b_u == 0 {
            return Err(HandaError::contract("batch sizes must be at least 1"));
        }
        if self.n_d + self.n_a + self.n_c == 0 {
            return Err(HandaError::contract("n_d + n_a + n_c must be at least 1"));
        }
        if let Some(rule) = &self.stop {
            if rule.window < 2 {
                return Err(HandaError::contract("stop window must be at least 2"));
            }
            check_positive("stop tol", rule.tol)?;
        }
        self.kernel.validate()?;
        let a = &self.arch;
        if a.feature_dim == 0 || a.kernel_dim == 0 || a.feature_width == 0 || a.kernel_width == 0 {
            return Err(HandaError::contract("network widths must be at least 1"));
        }
        if a.k == Some(0) {
            return Err(HandaError::contract("k must be at least 1"));
        }
        Ok(())
    }
}

/// Per-iteration raw (unweighted) loss values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Traces {
    pub iter: Vec<usize>,
    pub l_sdl: Vec<f64>,
    pub l_adv: Vec<f64>,
    pub l_c: Vec<f64>,
}

impl Traces {
    pub fn len(&self) -> usize {
        self.iter.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iter.is_empty()
    }

    pub fn series(&self) -> [(&'static str, &[f64]); 3] {
        [("l_sdl", &self.l_sdl), ("l_adv", &self.l_adv), ("l_c", &self.l_c)]
    }

    fn push(&mut self, iter: usize, l_sdl: f64, l_adv: f64, l_c: f64) {
        self.iter.push(iter);
        self.l_sdl.push(l_sdl);
        self.l_adv.push(l_adv);
        self.l_c.push(l_c);
    }

    /// CSV with header `iter,l_sdl,l_adv,l_c`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,l_sdl,l_adv,l_c\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.iter[i], self.l_sdl[i], self.l_adv[i], self.l_c[i]
            ));
        }
        out
    }
}

fn stddev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// True when, for every trace, the standard deviation of the last `window`
/// values is at most `tol` times the trace's full range (floored at 1e-12).
/// Traces shorter than the window are never converged.
pub fn check_converged(traces: &Traces, rule: &StopRule) -> bool {
    if traces.len() < rule.window.max(1) {
        return false;
    }
    traces.series().iter().all(|(_, xs)| {
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = (hi - lo).max(1e-12);
        stddev(&xs[xs.len() - rule.window..]) <= rule.tol * range
    })
}

/// All learned parameters plus the loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub sdl: SdlParams,
    pub nets: AdvNets,
    pub head: ClassifierHead,
    pub traces: Traces,
    /// Outer iteration at which the stop rule fired.
    pub converged_at: Option<usize>,
}

impl ModelState {
    /// Fresh parameters; every block draws from its own split of `seed`.
    pub fn init(m_s: usize, m_t: usize, classes: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(cfg.seed);
        let k = cfg.arch.resolve_k(m_s, m_t);
        let sdl = SdlParams::init(k, m_s, m_t, &mut root.split(1))?;
        let feature_net = MlpParams::new(&cfg.arch.feature_dims(k), &mut root.split(2))?;
        let kernel_net = MlpParams::new(&cfg.arch.kernel_dims(), &mut root.split(3))?;
        let head = ClassifierHead::new(cfg.arch.feature_dim, classes, &mut root.split(4))?;
        Ok(ModelState {
            sdl,
            nets: AdvNets::new(feature_net, kernel_net)?,
            head,
            traces: Traces::default(),
            converged_at: None,
        })
    }

    /// `φ_N(A·B_t·X)` for target columns.
    pub fn embed_target(&self, x_t: &Matrix) -> Result<Matrix> {
        self.nets.feature_net.apply(&self.sdl.represent_target(x_t)?)
    }

    pub fn embed_source(&self, x_s: &Matrix) -> Result<Matrix> {
        self.nets.feature_net.apply(&self.sdl.represent_source(x_s)?)
    }

    /// Labels and raw scores for target columns.
    pub fn predict_target(&self, x_t: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        predict(&self.head, &self.nets.feature_net, &self.sdl.represent_target(x_t)?)
    }

    pub fn predict_source(&self, x_s: &Matrix) -> Result<(Vec<usize>, Matrix)> {
        predict(&self.head, &self.nets.feature_net, &self.sdl.represent_source(x_s)?)
    }
}

/// Checked training inputs.
struct Inputs<'a> {
    xs: &'a Matrix,
    ys: &'a [usize],
    xl: &'a Matrix,
    yl: &'a [usize],
    xu: &'a Matrix,
    classes: usize,
}

fn check_inputs<'a>(
    source: &'a DomainDataset,
    labeled: &'a DomainDataset,
    unlabeled: &'a DomainDataset,
    cfg: &TrainConfig,
    need_source: bool,
) -> Result<Inputs<'a>> {
    cfg.validate()?;
    let ys = source.require_labels()?;
    let yl = labeled.require_labels()?;
    if labeled.dim() != unlabeled.dim() && !unlabeled.is_empty() {
        return Err(HandaError::shape(
            "train",
            format!(
                "labeled target has {} features, unlabeled {}",
                labeled.dim(),
                unlabeled.dim()
            ),
        ));
    }
    if cfg.b_l > labeled.len() {
        return Err(HandaError::contract(format!(
            "b_l = {} exceeds the {} labeled target samples",
            cfg.b_l,
            labeled.len()
        )));
    }
    if need_source {
        if cfg.b_s > source.len() {
            return Err(HandaError::contract(format!(
                "b_s = {} exceeds the {} source samples",
                cfg.b_s,
                source.len()
            )));
        }
        let present = |y: &[usize], c: usize| {
            let mut seen = vec![false; c];
            y.iter().for_each(|&v| seen[v] = true);
            seen
        };
        let c = source.class_count().max(labeled.class_count());
        if present(ys, c) != present(yl, c) {
            return Err(HandaError::contract(
                "source and labeled target contain different class sets",
            ));
        }
    }
    let classes = source.class_count().max(labeled.class_count());
    if classes < 2 {
        return Err(HandaError::contract("training needs at least two classes"));
    }
    Ok(Inputs {
        xs: source.features(),
        ys,
        xl: labeled.features(),
        yl,
        xu: unlabeled.features(),
        classes,
    })
}

struct Batch {
    xs: Matrix,
    ys: Vec<usize>,
    xl: Matrix,
    yl: Vec<usize>,
    /// `[labeled | unlabeled]` target columns.
    xt: Matrix,
}

fn draw(inputs: &Inputs, cfg: &TrainConfig, rng: &mut Rng) -> Result<Batch> {
    let is = rng.sample_without_replacement(inputs.xs.cols(), cfg.b_s.min(inputs.xs.cols()));
    let il = rng.sample_without_replacement(inputs.xl.cols(), cfg.b_l);
    let iu = rng.sample_without_replacement(inputs.xu.cols(), cfg.b_u.min(inputs.xu.cols()));
    let xl = inputs.xl.select_columns(&il);
    let xt = if iu.is_empty() {
        xl.clone()
    } else {
        xl.hcat(&inputs.xu.select_columns(&iu))?
    };
    Ok(Batch {
        xs: inputs.xs.select_columns(&is),
        ys: is.iter().map(|&i| inputs.ys[i]).collect(),
        yl: il.iter().map(|&i| inputs.yl[i]).collect(),
        xl,
        xt,
    })
}

fn finite(value: f64, what: &str, iter: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(HandaError::NonFinite {
            what: what.to_string(),
            iter,
        })
    }
}

/// Tags the failing iteration on errors raised inside an update.
fn at_iter<T>(r: Result<T>, iter: usize) -> Result<T> {
    r.map_err(|e| match e {
        HandaError::NonFiniteGradient(block) => HandaError::NonFinite {
            what: format!("gradient of {block}"),
            iter,
        },
        other => other,
    })
}

/// Phase counts for one call of the loop.
#[derive(Debug, Clone, Copy)]
struct Phases {
    n_d: usize,
    n_a: usize,
    n_c: usize,
    branches: Branches,
}

fn run_loop(
    state: &mut ModelState,
    inputs: &Inputs,
    cfg: &TrainConfig,
    phases: Phases,
    max_iters: usize,
    rng: &mut Rng,
) -> Result<()> {
    let target_only = phases.branches == Branches::TargetOnly;
    let start = state.traces.len();
    for step in 0..max_iters {
        let iter = start + step;
        let mut batch = draw(inputs, cfg, rng)?;

        // dictionary phase
        let l_sdl = if target_only {
            0.0
        } else {
            finite(state.sdl.loss(&batch.xs, &batch.xt)?, "l_sdl", iter)?
        };
        for _ in 0..phases.n_d {
            let g = state.sdl.grads(&batch.xs, &batch.xt)?;
            at_iter(sgd_step(&mut state.sdl, &g, cfg.lr_sdl * cfg.beta), iter)?;
            state.sdl = state.sdl.project()?;
        }

        // adversarial phase
        if cfg.fresh_batches_per_phase {
            batch = draw(inputs, cfg, rng)?;
        }
        let mut l_adv = None;
        for _ in 0..phases.n_a {
            let g = adv_grads(&state.nets, &state.sdl, &batch.xs, &batch.xt, &cfg.kernel, cfg.estimator)?;
            l_adv.get_or_insert(finite(g.loss, "l_adv", iter)?);
            at_iter(
                sgd_ascent_step(&mut state.nets.kernel_net, &g.kernel_net, cfg.lr_adv_max * cfg.gamma),
                iter,
            )?;
            let g = adv_grads(&state.nets, &state.sdl, &batch.xs, &batch.xt, &cfg.kernel, cfg.estimator)?;
            let lr = cfg.lr_adv_min * cfg.gamma;
            at_iter(sgd_step(&mut state.nets.feature_net, &g.feature_net, lr), iter)?;
            at_iter(sgd_step(&mut state.sdl, &g.sdl, lr), iter)?;
            state.sdl = state.sdl.project_encoder()?;
        }
        let l_adv = match l_adv {
            Some(v) => v,
            None if target_only => 0.0,
            None => {
                let (r_s, r_t) = state.sdl.represent(&batch.xs, &batch.xt)?;
                finite(adv_loss(&state.nets, &r_s, &r_t, &cfg.kernel, cfg.estimator)?, "l_adv", iter)?
            }
        };

        // classification phase
        if cfg.fresh_batches_per_phase {
            batch = draw(inputs, cfg, rng)?;
        }
        let mut l_c = None;
        let cls_steps = phases.n_c.max(usize::from(phases.n_c == 0));
        for s in 0..cls_steps {
            let g = classifier_grads_with(
                &state.head,
                &state.nets.feature_net,
                &state.sdl,
                &batch.xs,
                &batch.ys,
                &batch.xl,
                &batch.yl,
                phases.branches,
            )?;
            l_c.get_or_insert(finite(g.loss, "l_c", iter)?);
            if s < phases.n_c {
                at_iter(sgd_step(&mut state.head.net, &g.head, cfg.lr_cls), iter)?;
                at_iter(sgd_step(&mut state.nets.feature_net, &g.feature_net, cfg.lr_cls), iter)?;
                at_iter(sgd_step(&mut state.sdl, &g.sdl, cfg.lr_cls), iter)?;
                state.sdl = state.sdl.project_encoder()?;
            }
        }
        let l_c = l_c.expect("at least one classifier evaluation");

        state.traces.push(iter, l_sdl, l_adv, l_c);
        if (iter + 1) % 100 == 0 {
            log::info!("iter {iter}: l_sdl={l_sdl:.6} l_adv={l_adv:.6} l_c={l_c:.6}");
        } else {
            log::debug!("iter {iter}: l_sdl={l_sdl:.6} l_adv={l_adv:.6} l_c={l_c:.6}");
        }
        if let Some(rule) = &cfg.stop {
            if check_converged(&state.traces, rule) {
                state.converged_at = Some(iter);
                log::info!("converged at outer iteration {iter}");
                break;
            }
        }
    }
    Ok(())
}

/// Runs the alternating procedure from a fresh initialization.
pub fn train(
    source: &DomainDataset,
    target_labeled: &DomainDataset,
    target_unlabeled: &DomainDataset,
    cfg: &TrainConfig,
) -> Result<ModelState> {
    let inputs = check_inputs(source, target_labeled, target_unlabeled, cfg, true)?;
    let mut state = ModelState::init(source.dim(), target_labeled.dim(), inputs.classes, cfg)?;
    let mut rng = Rng::new(cfg.seed).split(5);
    let phases = Phases {
        n_d: cfg.n_d,
        n_a: cfg.n_a,
        n_c: cfg.n_c,
        branches: Branches::Both,
    };
    run_loop(&mut state, &inputs, cfg, phases, cfg.max_outer_iters, &mut rng)?;
    Ok(state)
}

/// Two-stage variant: dictionary updates alone until the stop rule fires (or
/// the iteration budget runs out), then adversarial and classifier updates
/// with the dictionary frozen. Each stage has the full iteration budget.
pub fn train_sequential(
    source: &DomainDataset,
    target_labeled: &DomainDataset,
    target_unlabeled: &DomainDataset,
    cfg: &TrainConfig,
) -> Result<ModelState> {
    let inputs = check_inputs(source, target_labeled, target_unlabeled, cfg, true)?;
    let mut state = ModelState::init(source.dim(), target_labeled.dim(), inputs.classes, cfg)?;
    let mut rng = Rng::new(cfg.seed).split(5);
    let first = Phases {
        n_d: cfg.n_d.max(1),
        n_a: 0,
        n_c: 0,
        branches: Branches::Both,
    };
    run_loop(&mut state, &inputs, cfg, first, cfg.max_outer_iters, &mut rng)?;
    state.converged_at = None;
    log::info!("dictionary stage finished after {} iterations", state.traces.len());
    let second = Phases {
        n_d: 0,
        n_a: cfg.n_a,
        n_c: cfg.n_c.max(1),
        branches: Branches::Both,
    };
    // the second stage judges convergence on its own traces only
    let offset = state.traces.len();
    let mut stage = ModelState {
        traces: Traces::default(),
        converged_at: None,
        ..state.clone()
    };
    run_loop(&mut stage, &inputs, cfg, second, cfg.max_outer_iters, &mut rng)?;
    for i in 0..stage.traces.len() {
        state.traces.push(
            offset + i,
            stage.traces.l_sdl[i],
            stage.traces.l_adv[i],
            stage.traces.l_c[i],
        );
    }
    Ok(ModelState {
        traces: state.traces,
        converged_at: stage.converged_at.map(|i| i + offset),
        ..stage
    })
}

pub(crate) fn train_target_only_impl(
    source_dim: usize,
    target_labeled: &DomainDataset,
    cfg: &TrainConfig,
) -> Result<ModelState> {
    let empty = DomainDataset::with_classes(
        "none",
        Matrix::zeros(target_labeled.dim(), 0),
        Some(Vec::new()),
        target_labeled.class_count(),
    )?;
    let source = DomainDataset::with_classes(
        "none",
        Matrix::zeros(source_dim, 0),
        Some(Vec::new()),
        target_labeled.class_count(),
    )?;
    let inputs = check_inputs(&source, target_labeled, &empty, cfg, false)?;
    let mut state = ModelState::init(source_dim, target_labeled.dim(), inputs.classes, cfg)?;
    let mut rng = Rng::new(cfg.seed).split(5);
    let phases = Phases {
        n_d: 0,
        n_a: 0,
        n_c: cfg.n_c.max(1),
        branches: Branches::TargetOnly,
    };
    run_loop(&mut state, &inputs, cfg, phases, cfg.max_outer_iters, &mut rng)?;
    Ok(state)
}
