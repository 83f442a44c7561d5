//! Training and prediction for any classifier behind one interface.

use mlreg::dataio::StoredModel;
use mlreg::estimators::{BrTrainer, CbmTrainer, CrfTrainer, Estimator, PccTrainer};
use mlreg::fpredict::{gfm, lsf_marginals, LsfTrainer, Predictor, Strategy};
use mlreg::linreg::{train_with_early_stopping, EarlyStopConfig, Resumable};
use mlreg::metrics::mean_instance_f1;
use mlreg::{LabelVector, MultiLabelDataset, SparseInstance, SupportSet};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Classifier, RunConfig};
use crate::error::{CliError, Result};

/// Any of the five trainers, snapshotting into a storable model.
pub enum AnyTrainer<'a> {
    Br(BrTrainer<'a>),
    Pcc(PccTrainer),
    Cbm(CbmTrainer<'a>),
    Crf(CrfTrainer<'a>),
    Lsf(LsfTrainer<'a>),
}

impl<'a> AnyTrainer<'a> {
    /// `support` is only used by the CRF, whose likelihood is normalized over it.
    pub fn new(config: &RunConfig, train: &'a MultiLabelDataset, support: &SupportSet) -> Result<Self> {
        config.validate()?;
        let penalty = config.penalty();
        Ok(match config.classifier {
            Classifier::Br => AnyTrainer::Br(BrTrainer::new(train, &penalty)?),
            Classifier::Pcc => AnyTrainer::Pcc(PccTrainer::new(train, config.pcc_order.as_deref(), &penalty)?),
            Classifier::Cbm => AnyTrainer::Cbm(CbmTrainer::new(train, &config.cbm_config(), &penalty)?),
            Classifier::Crf => AnyTrainer::Crf(CrfTrainer::new(train, support.clone(), &config.crf_config())?),
            Classifier::Lsf => AnyTrainer::Lsf(LsfTrainer::new(train, &penalty)?),
        })
    }

    /// Current training objective (penalized, per-row mean).
    pub fn objective(&self) -> f64 {
        match self {
            AnyTrainer::Br(t) => t.objective(),
            AnyTrainer::Pcc(t) => t.objective(),
            AnyTrainer::Cbm(t) => t.objective_trace().last().copied().unwrap_or(f64::NAN),
            AnyTrainer::Crf(t) => t.objective(),
            AnyTrainer::Lsf(t) => t.objective(),
        }
    }

    /// Iterations between validation checks: the gradient-based CRF makes
    /// far smaller steps than the Newton and EM solvers.
    pub fn checkpoint_interval(&self) -> usize {
        match self {
            AnyTrainer::Crf(_) => 10,
            _ => 1,
        }
    }
}

impl Resumable for AnyTrainer<'_> {
    type Snapshot = StoredModel;

    fn advance(&mut self, iterations: usize) -> mlreg::Result<()> {
        match self {
            AnyTrainer::Br(t) => t.advance(iterations),
            AnyTrainer::Pcc(t) => t.advance(iterations),
            AnyTrainer::Cbm(t) => t.advance(iterations),
            AnyTrainer::Crf(t) => t.advance(iterations),
            AnyTrainer::Lsf(t) => t.advance(iterations),
        }
    }

    fn iterations(&self) -> usize {
        match self {
            AnyTrainer::Br(t) => t.iterations(),
            AnyTrainer::Pcc(t) => t.iterations(),
            AnyTrainer::Cbm(t) => t.iterations(),
            AnyTrainer::Crf(t) => t.iterations(),
            AnyTrainer::Lsf(t) => t.iterations(),
        }
    }

    fn is_finished(&self) -> bool {
        match self {
            AnyTrainer::Br(t) => t.is_finished(),
            AnyTrainer::Pcc(t) => t.is_finished(),
            AnyTrainer::Cbm(t) => t.is_finished(),
            AnyTrainer::Crf(t) => t.is_finished(),
            AnyTrainer::Lsf(t) => t.is_finished(),
        }
    }

    fn snapshot(&self) -> StoredModel {
        match self {
            AnyTrainer::Br(t) => StoredModel::Joint(Estimator::Br(t.snapshot())),
            AnyTrainer::Pcc(t) => StoredModel::Joint(Estimator::Pcc(t.snapshot())),
            AnyTrainer::Cbm(t) => StoredModel::Joint(Estimator::Cbm(t.snapshot())),
            AnyTrainer::Crf(t) => StoredModel::Joint(Estimator::Crf(t.snapshot())),
            AnyTrainer::Lsf(t) => StoredModel::Lsf(t.snapshot()),
        }
    }
}

/// Records the objective after every single iteration.
struct Logged<'t, 'a> {
    inner: &'t mut AnyTrainer<'a>,
    objectives: Vec<(usize, f64)>,
}

impl Logged<'_, '_> {
    fn step(&mut self) -> mlreg::Result<bool> {
        let before = self.inner.iterations();
        self.inner.advance(1)?;
        let now = self.inner.iterations();
        if now == before {
            return Ok(false);
        }
        let objective = self.inner.objective();
        log::info!("iteration {now}: objective {objective:.8}");
        self.objectives.push((now, objective));
        Ok(true)
    }
}

impl Resumable for Logged<'_, '_> {
    type Snapshot = StoredModel;

    fn advance(&mut self, iterations: usize) -> mlreg::Result<()> {
        for _ in 0..iterations {
            if !self.step()? {
                break;
            }
        }
        Ok(())
    }

    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    fn is_finished(&self) -> bool {
        self.inner.is_finished()
    }

    fn snapshot(&self) -> StoredModel {
        self.inner.snapshot()
    }
}

/// Label sets for `instances` under `strategy`.
pub fn predict_all(
    config: &RunConfig,
    strategy: Strategy,
    model: &StoredModel,
    support: Option<&SupportSet>,
    instances: &[SparseInstance],
) -> Result<Vec<LabelVector>> {
    match model {
        StoredModel::Joint(estimator) => {
            let predictor = Predictor {
                strategy,
                support,
                beam_width: config.beam_width,
                sample_count: config.sample_count,
                seed: config.seed,
            };
            Ok(predictor.predict_all(estimator, instances)?)
        }
        StoredModel::Lsf(lsf) => {
            if !strategy.uses_gfm() {
                return Err(CliError::Usage(format!("lsf predicts with gfm only, not `{strategy}`")));
            }
            let predictions = instances
                .par_iter()
                .map(|x| Ok(gfm(&lsf_marginals(lsf, x)?).labels))
                .collect::<mlreg::Result<Vec<_>>>()?;
            Ok(predictions)
        }
    }
}

/// Mean instance F1 of `model` on `data`.
pub fn score(
    config: &RunConfig,
    strategy: Strategy,
    model: &StoredModel,
    support: Option<&SupportSet>,
    data: &MultiLabelDataset,
) -> Result<f64> {
    let predictions = predict_all(config, strategy, model, support, data.instances())?;
    Ok(mean_instance_f1(data.labels(), &predictions)?)
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TrainingLog {
    /// `(iteration, objective)` after every iteration.
    pub objectives: Vec<(usize, f64)>,
    /// `(iteration, validation instance F1)` at every checkpoint.
    pub checkpoints: Vec<(usize, f64)>,
    /// Iteration of the returned model.
    pub chosen_iteration: usize,
    pub total_iterations: usize,
    pub early_stopped: bool,
}

/// Trains `config.classifier`; with early stopping on, checkpoints are scored
/// on `validation` under the configured prediction strategy.
pub fn train_model(
    config: &RunConfig,
    train: &MultiLabelDataset,
    validation: Option<&MultiLabelDataset>,
    support: &SupportSet,
) -> Result<(StoredModel, TrainingLog)> {
    let mut trainer = AnyTrainer::new(config, train, support)?;
    let interval = trainer.checkpoint_interval();
    let mut logged = Logged {
        inner: &mut trainer,
        objectives: Vec::new(),
    };
    if !config.early_stop {
        while !logged.is_finished() && logged.step()? {}
        let total = logged.iterations();
        let model = logged.snapshot();
        let log = TrainingLog {
            objectives: logged.objectives,
            chosen_iteration: total,
            total_iterations: total,
            ..TrainingLog::default()
        };
        return Ok((model, log));
    }

    let validation =
        validation.ok_or_else(|| CliError::Usage("early stopping needs validation data".into()))?;
    let stop = EarlyStopConfig {
        evaluation_interval: interval,
        patience: config.patience,
        min_iterations: 0,
    };
    let outcome = train_with_early_stopping(
        &mut logged,
        |model: &StoredModel| match score(config, config.prediction, model, Some(support), validation) {
            Ok(f1) => f1,
            Err(e) => {
                log::warn!("validation scoring failed: {e}");
                f64::NEG_INFINITY
            }
        },
        &stop,
    )?;
    let total = logged.iterations();
    log::info!(
        "early stopping chose iteration {} of {total} (validation F1 {:.4})",
        outcome.best_iteration,
        outcome.best_score
    );
    let log = TrainingLog {
        objectives: logged.objectives,
        checkpoints: outcome.history,
        chosen_iteration: outcome.best_iteration,
        total_iterations: total,
        early_stopped: true,
    };
    Ok((outcome.model, log))
}
