//! Prepared source/target data for one experiment and evaluation of trained
//! models on the held-out target split.

use crate::classifier::softmax_columns;
use crate::data::{split_target, DomainDataset, SplitSpec, Standardizer};
use crate::error::Result;
use crate::eval::{auc, RunResult};
use crate::trainer::ModelState;

/// Source plus the labeled / unlabeled / test partition of the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub source: DomainDataset,
    pub labeled: DomainDataset,
    pub unlabeled: DomainDataset,
    pub test: DomainDataset,
    /// True labels of `unlabeled`, used only for reporting.
    pub unlabeled_truth: Vec<usize>,
}

impl Experiment {
    /// Splits `target` and, when `standardize` is set, standardizes each
    /// domain with statistics from the source and from labeled + unlabeled
    /// target respectively.
    pub fn prepare(
        source: &DomainDataset,
        target: &DomainDataset,
        split: &SplitSpec,
        standardize: bool,
    ) -> Result<Self> {
        source.require_labels()?;
        let parts = split_target(target, split)?;
        let mut exp = Experiment {
            source: source.clone(),
            labeled: parts.labeled,
            unlabeled: parts.unlabeled,
            test: parts.test,
            unlabeled_truth: parts.unlabeled_truth,
        };
        if standardize {
            let s = Standardizer::fit(&[source.features()])?;
            let t = Standardizer::fit(&[exp.labeled.features(), exp.unlabeled.features()])?;
            exp.source = s.apply_dataset(&exp.source)?;
            exp.labeled = t.apply_dataset(&exp.labeled)?;
            exp.unlabeled = t.apply_dataset(&exp.unlabeled)?;
            exp.test = t.apply_dataset(&exp.test)?;
        }
        Ok(exp)
    }

    pub fn classes(&self) -> usize {
        self.source.class_count().max(self.labeled.class_count())
    }
}

/// Test-split metrics of one trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// Only for two-class tasks: AUC of the class-1 softmax probability.
    pub auc: Option<f64>,
    pub n_test: usize,
    pub iterations: usize,
    pub converged_at: Option<usize>,
}

impl Metrics {
    /// `key: value` lines.
    pub fn to_text(&self) -> String {
        let mut out = format!("accuracy: {}\n", self.accuracy);
        if let Some(a) = self.auc {
            out.push_str(&format!("auc: {a}\n"));
        }
        out.push_str(&format!("n_test: {}\n", self.n_test));
        out.push_str(&format!("iterations: {}\n", self.iterations));
        match self.converged_at {
            Some(i) => out.push_str(&format!("converged_at: {i}\n")),
            None => out.push_str("converged_at: none\n"),
        }
        out
    }
}

/// Scores the model on `exp.test`.
pub fn evaluate(state: &ModelState, exp: &Experiment, run_id: &str) -> Result<(Metrics, RunResult)> {
    let truth = exp.test.require_labels()?.to_vec();
    let (pred, scores) = state.predict_target(exp.test.features())?;
    let run = RunResult::new(run_id, pred, scores, truth)?;
    let auc = if run.scores.rows() == 2 {
        let probs = softmax_columns(&run.scores);
        let positive: Vec<bool> = run.truth.iter().map(|&y| y == 1).collect();
        if positive.iter().any(|&p| p) && positive.iter().any(|&p| !p) {
            Some(auc(probs.row(1), &positive)?)
        } else {
            None
        }
    } else {
        None
    };
    let metrics = Metrics {
        accuracy: run.accuracy(),
        auc,
        n_test: run.truth.len(),
        iterations: state.traces.len(),
        converged_at: state.converged_at,
    };
    Ok((metrics, run))
}
