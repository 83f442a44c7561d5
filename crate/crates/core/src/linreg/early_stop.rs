use crate::error::{Error, Result};

/// A trainer that can run more iterations on demand and snapshot its model.
pub trait Resumable {
    type Snapshot;

    /// Runs up to `iterations` more iterations (fewer if training finishes).
    fn advance(&mut self, iterations: usize) -> Result<()>;

    /// Iterations performed so far.
    fn iterations(&self) -> usize;

    /// Converged or out of iteration budget.
    fn is_finished(&self) -> bool;

    fn snapshot(&self) -> Self::Snapshot;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EarlyStopConfig {
    /// Iterations between validation checks.
    pub evaluation_interval: usize,
    /// Non-improving checks tolerated before halting.
    pub patience: usize,
    /// Never halt (other than by finishing) before this many iterations.
    pub min_iterations: usize,
}

impl Default for EarlyStopConfig {
    fn default() -> Self {
        Self {
            evaluation_interval: 1,
            patience: 5,
            min_iterations: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EarlyStopOutcome<S> {
    pub model: S,
    pub best_iteration: usize,
    pub best_score: f64,
    /// `(iteration, validation score)` for every checkpoint.
    pub history: Vec<(usize, f64)>,
}

/// Trains in chunks of `evaluation_interval` iterations, scoring a snapshot
/// after each chunk, and returns the best-scoring snapshot.
///
/// Halts after `patience` consecutive checks without strict improvement (once
/// `min_iterations` have run) or when the trainer finishes.
pub fn train_with_early_stopping<T, F>(
    trainer: &mut T,
    mut validation_score: F,
    stop: &EarlyStopConfig,
) -> Result<EarlyStopOutcome<T::Snapshot>>
where
    T: Resumable,
    F: FnMut(&T::Snapshot) -> f64,
{
    if stop.evaluation_interval == 0 {
        return Err(Error::InvalidConfig("evaluation_interval must be positive".into()));
    }
    let mut best: Option<(T::Snapshot, usize, f64)> = None;
    let mut history = Vec::new();
    let mut stale = 0usize;
    while !trainer.is_finished() {
        let before = trainer.iterations();
        trainer.advance(stop.evaluation_interval)?;
        if trainer.iterations() == before {
            break;
        }
        let snapshot = trainer.snapshot();
        let score = validation_score(&snapshot);
        let iteration = trainer.iterations();
        history.push((iteration, score));
        log::debug!("checkpoint at iteration {iteration}: validation score {score:.6}");
        match &best {
            Some((_, _, best_score)) if !(score > *best_score) => stale += 1,
            _ => {
                best = Some((snapshot, iteration, score));
                stale = 0;
            }
        }
        if stale > 0 && stale >= stop.patience && iteration >= stop.min_iterations {
            break;
        }
    }
    let (model, best_iteration, best_score) = match best {
        Some(b) => b,
        None => {
            // Nothing left to run: score the trainer as it stands.
            let snapshot = trainer.snapshot();
            let score = validation_score(&snapshot);
            history.push((trainer.iterations(), score));
            (snapshot, trainer.iterations(), score)
        }
    };
    Ok(EarlyStopOutcome {
        model,
        best_iteration,
        best_score,
        history,
    })
}
