use std::fmt;
use std::str::FromStr;

use super::{train, train_sequential, train_target_only_impl, ModelState, TrainConfig};
use crate::error::{HandaError, Result};
use crate::experiment::{evaluate, Experiment, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationMode {
    Full,
    NoSdl,
    NoAdv,
    Sequential,
    /// Number of hidden layers in the feature network, 1 to 5.
    Depth(usize),
}

impl AblationMode {
    pub const ALL: [AblationMode; 9] = [
        AblationMode::Full,
        AblationMode::NoSdl,
        AblationMode::NoAdv,
        AblationMode::Sequential,
        AblationMode::Depth(1),
        AblationMode::Depth(2),
        AblationMode::Depth(3),
        AblationMode::Depth(4),
        AblationMode::Depth(5),
    ];

    /// The configuration this mode trains with.
    pub fn apply(self, cfg: &TrainConfig) -> Result<TrainConfig> {
        let mut cfg = cfg.clone();
        match self {
            AblationMode::Full | AblationMode::Sequential => {}
            AblationMode::NoSdl => {
                cfg.n_d = 0;
                cfg.beta = 0.0;
            }
            AblationMode::NoAdv => {
                cfg.n_a = 0;
                cfg.gamma = 0.0;
            }
            AblationMode::Depth(h) => {
                if !(1..=5).contains(&h) {
                    return Err(HandaError::contract(format!("depth must lie in 1..=5, got {h}")));
                }
                cfg.arch.feature_hidden_layers = h;
            }
        }
        Ok(cfg)
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AblationMode::Full => write!(f, "full"),
            AblationMode::NoSdl => write!(f, "nosdl"),
            AblationMode::NoAdv => write!(f, "noadv"),
            AblationMode::Sequential => write!(f, "sequential"),
            AblationMode::Depth(h) => write!(f, "depth{h}"),
        }
    }
}

impl FromStr for AblationMode {
    type Err = HandaError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let mode = match s.as_str() {
            "full" => AblationMode::Full,
            "nosdl" | "no-sdl" => AblationMode::NoSdl,
            "noadv" | "no-adv" => AblationMode::NoAdv,
            "sequential" | "seq" => AblationMode::Sequential,
            _ => match s.strip_prefix("depth").and_then(|d| d.parse::<usize>().ok()) {
                Some(h) if (1..=5).contains(&h) => AblationMode::Depth(h),
                _ => return Err(HandaError::contract(format!("unknown ablation mode '{s}'"))),
            },
        };
        Ok(mode)
    }
}

/// Trained model and its test metrics for one ablation mode.
#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub mode: AblationMode,
    pub state: ModelState,
    pub metrics: Metrics,
}

pub fn ablate(mode: AblationMode, exp: &Experiment, cfg: &TrainConfig) -> Result<AblationOutcome> {
    let run_cfg = mode.apply(cfg)?;
    let state = match mode {
        AblationMode::Sequential => train_sequential(&exp.source, &exp.labeled, &exp.unlabeled, &run_cfg),
        _ => train(&exp.source, &exp.labeled, &exp.unlabeled, &run_cfg),
    }
    .map_err(|e| e.context(format!("ablation {mode}")))?;
    let (metrics, _) = evaluate(&state, exp, &mode.to_string())?;
    Ok(AblationOutcome {
        mode,
        state,
        metrics,
    })
}

/// Same network and optimizer trained on the labeled target samples alone.
pub fn train_target_only(exp: &Experiment, cfg: &TrainConfig) -> Result<(ModelState, Metrics)> {
    let state = train_target_only_impl(exp.source.dim(), &exp.labeled, cfg)?;
    let (metrics, _) = evaluate(&state, exp, "target-only")?;
    Ok((state, metrics))
}
