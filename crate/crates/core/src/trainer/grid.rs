use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::data::{split_target, DomainDataset, SplitSpec};
use crate::error::{HandaError, Result};
use crate::eval::accuracy;
use crate::experiment::Experiment;
use crate::numerics::{Matrix, Rng};

pub const DEFAULT_BETA_GRID: [f64; 4] = [1e-2, 1e-3, 1e-4, 1e-5];
pub const DEFAULT_GAMMA_GRID: [f64; 4] = [1e-2, 1e-1, 1.0, 10.0];

/// How a grid cell is validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scorer {
    /// Pseudo-label the unlabeled target with the forward model, train a
    /// target → source model on those labels and score it on held-out
    /// labeled source samples. No target label is used for scoring.
    #[default]
    Reverse,
    /// Hold out half of each class of the labeled target and score on it.
    Holdout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    /// Position in row-major (β, γ) order.
    pub index: usize,
    pub beta: f64,
    pub gamma: f64,
    pub seed: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    /// Cells in grid order.
    pub cells: Vec<GridCell>,
}

fn rank(a: &GridCell, b: &GridCell) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.beta.total_cmp(&b.beta))
        .then(a.gamma.total_cmp(&b.gamma))
}

impl GridResult {
    /// Cells by descending score; ties go to the lower β, then lower γ.
    pub fn ranked(&self) -> Vec<&GridCell> {
        let mut cells: Vec<&GridCell> = self.cells.iter().collect();
        cells.sort_by(|a, b| rank(a, b));
        cells
    }

    pub fn best(&self) -> &GridCell {
        self.ranked()[0]
    }

    /// `beta,gamma,score` rows in ranked order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,gamma,score\n");
        for c in self.ranked() {
            out.push_str(&format!("{},{},{}\n", c.beta, c.gamma, c.score));
        }
        out
    }
}

/// Seed of grid cell `index`, derived from the base seed only.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    Rng::new(seed).split(index as u64).next_u64()
}

fn min_class_count(ds: &DomainDataset) -> Result<usize> {
    Ok(ds
        .class_indices()?
        .iter()
        .map(Vec::len)
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0))
}

fn reverse_score(exp: &Experiment, cfg: &TrainConfig) -> Result<f64> {
    let per_class = min_class_count(&exp.labeled)?;
    let src = split_target(&exp.source, &SplitSpec::new(per_class, cfg.seed))?;
    let src_train_idx: Vec<usize> = src.labeled_idx.iter().chain(&src.unlabeled_idx).copied().collect();
    let src_train = exp.source.subset(&src_train_idx, "source.train");
    let forward = train(&src_train, &exp.labeled, &exp.unlabeled, cfg)?;
    let (pseudo, _) = forward.predict_target(exp.unlabeled.features())?;

    let mut labels = exp.labeled.require_labels()?.to_vec();
    labels.extend(pseudo);
    let features: Matrix = exp.labeled.features().hcat(exp.unlabeled.features())?;
    let rev_source = DomainDataset::with_classes("target.pseudo", features, Some(labels), exp.classes())?;
    let mut rev_cfg = cfg.clone();
    rev_cfg.b_s = rev_cfg.b_s.min(rev_source.len());
    let reverse = train(&rev_source, &src.labeled, &src.unlabeled, &rev_cfg)?;
    let (pred, _) = reverse.predict_target(src.test.features())?;
    Ok(accuracy(&pred, src.test.require_labels()?))
}

fn holdout_score(exp: &Experiment, cfg: &TrainConfig) -> Result<f64> {
    let per_class = min_class_count(&exp.labeled)?;
    if per_class < 2 {
        return Err(HandaError::contract(
            "holdout scoring needs at least two labeled target samples per class",
        ));
    }
    let spec = SplitSpec {
        labeled_per_class: per_class.div_ceil(2),
        seed: cfg.seed,
        test_fraction: 1.0,
    };
    let parts = split_target(&exp.labeled, &spec)?;
    let mut cell_cfg = cfg.clone();
    cell_cfg.b_l = cell_cfg.b_l.min(parts.labeled.len());
    let state = train(&exp.source, &parts.labeled, &exp.unlabeled, &cell_cfg)?;
    let (pred, _) = state.predict_target(parts.test.features())?;
    Ok(accuracy(&pred, parts.test.require_labels()?))
}

/// One training run (two for the reverse scorer) per (β, γ) cell. Cells run
/// on `jobs` threads; the result does not depend on `jobs`.
pub fn grid_search(
    exp: &Experiment,
    beta_grid: &[f64],
    gamma_grid: &[f64],
    cfg: &TrainConfig,
    scorer: Scorer,
    jobs: usize,
) -> Result<GridResult> {
    if beta_grid.is_empty() || gamma_grid.is_empty() {
        return Err(HandaError::contract("grids must be non-empty"));
    }
    let cells: Vec<(usize, f64, f64)> = beta_grid
        .iter()
        .flat_map(|&b| gamma_grid.iter().map(move |&g| (b, g)))
        .enumerate()
        .map(|(i, (b, g))| (i, b, g))
        .collect();
    let run = |&(index, beta, gamma): &(usize, f64, f64)| -> Result<GridCell> {
        let seed = cell_seed(cfg.seed, index);
        let cell_cfg = TrainConfig {
            beta,
            gamma,
            seed,
            ..cfg.clone()
        };
        let score = match scorer {
            Scorer::Reverse => reverse_score(exp, &cell_cfg),
            Scorer::Holdout => holdout_score(exp, &cell_cfg),
        }
        .map_err(|e| e.context(format!("grid cell {index} (beta={beta}, gamma={gamma})")))?;
        log::info!("grid cell {index}: beta={beta} gamma={gamma} score={score}");
        Ok(GridCell {
            index,
            beta,
            gamma,
            seed,
            score,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HandaError::contract(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<GridCell>> = pool.install(|| cells.par_iter().map(run).collect());
    Ok(GridResult {
        cells: results.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(index: usize, beta: f64, gamma: f64, score: f64) -> GridCell {
        GridCell {
            index,
            beta,
            gamma,
            seed: 0,
            score,
        }
    }

    #[test]
    fn ties_break_on_lowest_beta_then_gamma() {
        let r = GridResult {
            cells: vec![
                cell(0, 1e-2, 1.0, 0.9),
                cell(1, 1e-3, 10.0, 0.9),
                cell(2, 1e-3, 0.1, 0.9),
                cell(3, 1e-5, 1.0, 0.5),
            ],
        };
        let best = r.best();
        assert_eq!((best.beta, best.gamma), (1e-3, 0.1));
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("0.001,0.1,"));
    }

    #[test]
    fn cell_seeds_differ_and_repeat() {
        assert_eq!(cell_seed(3, 5), cell_seed(3, 5));
        assert_ne!(cell_seed(3, 5), cell_seed(3, 6));
    }
}
