//! Ablation over the four regularizers: L1 (L), early stopping (E),
//! support inference (S) and GFM prediction (G).
//!
//! Every grid cell is trained once per seed. Each checkpoint of that run is
//! scored on the validation split under every prediction strategy the
//! requested letter combinations need, and early stopping is replayed per
//! strategy from those scores (strict improvement, fixed patience). A letter
//! combination then picks, among its admissible cells, the one with the best
//! mean validation F1, and reports that cell's mean test F1.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use mlreg::dataio::StoredModel;
use mlreg::fpredict::Strategy;
use mlreg::linreg::Resumable;
use mlreg::{build_support, MultiLabelDataset, SupportSet};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Classifier, RunConfig};
use crate::engine::{score, AnyTrainer};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Letters {
    pub l1: bool,
    pub early_stop: bool,
    pub support: bool,
    pub gfm: bool,
}

impl Letters {
    pub const NO_REG: Letters = Letters::new(false, false, false, false);
    pub const ALL4: Letters = Letters::new(true, true, true, true);

    pub const fn new(l1: bool, early_stop: bool, support: bool, gfm: bool) -> Self {
        Self {
            l1,
            early_stop,
            support,
            gfm,
        }
    }

    /// The columns of the usual ablation table.
    pub fn standard() -> Vec<Letters> {
        vec![
            Letters::NO_REG,
            Letters::new(true, false, false, false),
            Letters::new(false, true, false, false),
            Letters::new(true, true, false, false),
            Letters::new(true, true, true, false),
            Letters::new(true, true, false, true),
            Letters::ALL4,
        ]
    }

    /// Prediction strategy for `classifier`. Without S the CRF still
    /// normalizes over the support, and CBM's plain MAP is support-restricted.
    pub fn strategy(self, classifier: Classifier) -> Strategy {
        match (self.support, self.gfm) {
            (true, true) => Strategy::SupportGfm,
            (true, false) => Strategy::SupportMap,
            (false, true) if classifier == Classifier::Crf => Strategy::SupportGfm,
            (false, true) => Strategy::SampleGfm,
            (false, false) => Strategy::Map,
        }
    }
}

impl fmt::Display for Letters {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Letters::NO_REG {
            return f.write_str("No REG");
        }
        if *self == Letters::ALL4 {
            return f.write_str("All4");
        }
        let parts: Vec<&str> = [(self.l1, "L"), (self.early_stop, "E"), (self.support, "S"), (self.gfm, "G")]
            .into_iter()
            .filter_map(|(on, name)| on.then_some(name))
            .collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for Letters {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "none" | "noreg" | "no-reg" | "no reg" => return Ok(Letters::NO_REG),
            "all4" => return Ok(Letters::ALL4),
            _ => {}
        }
        let mut letters = Letters::NO_REG;
        for part in key.split('+') {
            let slot = match part {
                "l" => &mut letters.l1,
                "e" => &mut letters.early_stop,
                "s" => &mut letters.support,
                "g" => &mut letters.gfm,
                _ => return Err(CliError::Usage(format!("unknown ablation letter `{part}` in `{s}`"))),
            };
            if *slot {
                return Err(CliError::Usage(format!("letter `{part}` repeated in `{s}`")));
            }
            *slot = true;
        }
        Ok(letters)
    }
}

/// One table row: a classifier, optionally with the CRF pairwise terms removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowSpec {
    pub classifier: Classifier,
    pub crf_pairwise: bool,
}

impl RowSpec {
    pub fn new(classifier: Classifier) -> Self {
        Self {
            classifier,
            crf_pairwise: true,
        }
    }

    pub fn name(&self) -> String {
        if self.classifier == Classifier::Crf && !self.crf_pairwise {
            "crf-nopair".into()
        } else {
            self.classifier.to_string()
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationPlan {
    pub rows: Vec<RowSpec>,
    pub combos: Vec<Letters>,
    pub lambdas: Vec<f64>,
    /// Nonzero L1 ratios tried when L is on; `alpha = 0` is always in the grid.
    pub alphas: Vec<f64>,
    /// Seeds for the randomized parts (CBM initialization, sampling).
    pub seeds: Vec<u64>,
    /// Everything else (components, iteration limits, patience, beam width...).
    pub base: RunConfig,
}

impl AblationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.combos.is_empty() || self.lambdas.is_empty() || self.seeds.is_empty() {
            return Err(CliError::Usage("ablation needs classifiers, combinations, a lambda grid and seeds".into()));
        }
        if self.rows.iter().any(|r| r.classifier == Classifier::Lsf) {
            return Err(CliError::Usage("lsf has no joint model to ablate".into()));
        }
        if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(CliError::Usage("alpha grid values must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Train, validation and test splits with the training support.
pub struct Splits {
    pub train: MultiLabelDataset,
    pub validation: MultiLabelDataset,
    pub test: MultiLabelDataset,
    pub support: SupportSet,
}

impl Splits {
    pub fn new(train: MultiLabelDataset, validation: MultiLabelDataset, test: MultiLabelDataset) -> Self {
        let support = build_support(&train);
        Self {
            train,
            validation,
            test,
            support,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub letters: String,
    pub strategy: String,
    /// Mean test instance F1 over seeds of the selected grid cell.
    pub test_f1: Option<f64>,
    pub validation_f1: Option<f64>,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    /// Mean iteration of the returned models.
    pub iteration: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub name: String,
    pub cells: Vec<AblationCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationTable {
    pub columns: Vec<String>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Test F1 of `row` under `letters`, if that cell succeeded.
    pub fn f1(&self, row: &str, letters: Letters) -> Option<f64> {
        let column = self.columns.iter().position(|c| *c == letters.to_string())?;
        self.rows.iter().find(|r| r.name == row)?.cells[column].test_f1
    }

    /// Fixed-width text rendering.
    pub fn render(&self) -> String {
        let mut out = format!("{:<12}", "");
        for c in &self.columns {
            out.push_str(&format!("{c:>9}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!("{:<12}", row.name));
            for cell in &row.cells {
                match cell.test_f1 {
                    Some(f) => out.push_str(&format!("{f:>9.4}")),
                    None => out.push_str(&format!("{:>9}", "failed")),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Validation and test F1 of one model under one strategy.
#[derive(Debug, Clone, Copy)]
struct Outcome {
    validation: f64,
    test: f64,
    iteration: usize,
}

/// Per strategy: the early-stopped and the fully trained outcome.
type Trajectory = BTreeMap<Strategy, (Outcome, Outcome)>;

struct Replay {
    best: Option<(f64, usize, StoredModel)>,
    stale: usize,
    halted: bool,
}

fn trajectory(config: &RunConfig, strategies: &[Strategy], splits: &Splits) -> Result<Trajectory> {
    let support = Some(&splits.support);
    let mut trainer = AnyTrainer::new(config, &splits.train, &splits.support)?;
    let interval = trainer.checkpoint_interval();
    let mut replays: Vec<Replay> = strategies
        .iter()
        .map(|_| Replay {
            best: None,
            stale: 0,
            halted: false,
        })
        .collect();
    while !trainer.is_finished() {
        let before = trainer.iterations();
        trainer.advance(interval)?;
        let iteration = trainer.iterations();
        if iteration == before {
            break;
        }
        if replays.iter().all(|r| r.halted) {
            continue;
        }
        let model = trainer.snapshot();
        for (replay, &strategy) in replays.iter_mut().zip(strategies) {
            if replay.halted {
                continue;
            }
            let f1 = score(config, strategy, &model, support, &splits.validation)?;
            match &replay.best {
                Some((best, _, _)) if !(f1 > *best) => {
                    replay.stale += 1;
                    replay.halted = replay.stale >= config.patience;
                }
                _ => {
                    replay.best = Some((f1, iteration, model.clone()));
                    replay.stale = 0;
                }
            }
        }
    }

    let final_model = trainer.snapshot();
    let final_iteration = trainer.iterations();
    let mut out = Trajectory::new();
    for (replay, &strategy) in replays.into_iter().zip(strategies) {
        let full = Outcome {
            validation: score(config, strategy, &final_model, support, &splits.validation)?,
            test: score(config, strategy, &final_model, support, &splits.test)?,
            iteration: final_iteration,
        };
        let early = match replay.best {
            Some((validation, iteration, model)) => Outcome {
                validation,
                test: score(config, strategy, &model, support, &splits.test)?,
                iteration,
            },
            None => full,
        };
        out.insert(strategy, (early, full));
    }
    Ok(out)
}

struct Job {
    row: usize,
    lambda: f64,
    alpha: f64,
    seed: u64,
}

/// Runs the whole plan on one set of splits.
pub fn run_ablation(plan: &AblationPlan, splits: &Splits) -> Result<AblationTable> {
    plan.validate()?;
    let needs_l1 = plan.combos.iter().any(|c| c.l1);
    let mut jobs = Vec::new();
    for (row, spec) in plan.rows.iter().enumerate() {
        let mut alphas = vec![0.0];
        if needs_l1 && spec.classifier.supports_l1() {
            alphas.extend(plan.alphas.iter().copied().filter(|&a| a > 0.0));
        }
        for &lambda in &plan.lambdas {
            for &alpha in &alphas {
                for &seed in &plan.seeds {
                    jobs.push(Job { row, lambda, alpha, seed });
                }
            }
        }
    }

    let results: Vec<Result<Trajectory>> = jobs
        .par_iter()
        .map(|job| {
            let spec = &plan.rows[job.row];
            let config = RunConfig {
                classifier: spec.classifier,
                crf_pairwise: spec.crf_pairwise,
                lambda: job.lambda,
                alpha: job.alpha,
                seed: job.seed,
                early_stop: false,
                ..plan.base.clone()
            };
            let mut strategies: Vec<Strategy> = plan.combos.iter().map(|c| c.strategy(spec.classifier)).collect();
            strategies.sort();
            strategies.dedup();
            let result = trajectory(&config, &strategies, splits);
            match &result {
                Ok(_) => log::info!(
                    "{} lambda={} alpha={} seed={} done",
                    spec.name(),
                    job.lambda,
                    job.alpha,
                    job.seed
                ),
                Err(e) => log::warn!("{} lambda={} alpha={}: {e}", spec.name(), job.lambda, job.alpha),
            }
            result
        })
        .collect();

    let mut rows = Vec::with_capacity(plan.rows.len());
    for (r, spec) in plan.rows.iter().enumerate() {
        // (lambda, alpha) -> per-seed trajectories, in grid order
        let mut cells: Vec<((f64, f64), Vec<&Result<Trajectory>>)> = Vec::new();
        for (job, result) in jobs.iter().zip(&results).filter(|(j, _)| j.row == r) {
            match cells.iter_mut().find(|(key, _)| *key == (job.lambda, job.alpha)) {
                Some((_, runs)) => runs.push(result),
                None => cells.push(((job.lambda, job.alpha), vec![result])),
            }
        }
        let row_cells = plan
            .combos
            .iter()
            .map(|&letters| select_cell(letters, spec.classifier, &cells))
            .collect();
        rows.push(AblationRow {
            name: spec.name(),
            cells: row_cells,
        });
    }
    Ok(AblationTable {
        columns: plan.combos.iter().map(Letters::to_string).collect(),
        rows,
    })
}

type CellRuns<'r> = ((f64, f64), Vec<&'r Result<Trajectory>>);

fn select_cell(letters: Letters, classifier: Classifier, cells: &[CellRuns]) -> AblationCell {
    let strategy = letters.strategy(classifier);
    let mut best: Option<(f64, f64, f64, (f64, f64))> = None;
    let mut last_error = None;
    for ((lambda, alpha), runs) in cells {
        if *alpha > 0.0 && !letters.l1 {
            continue;
        }
        let mut outcomes = Vec::with_capacity(runs.len());
        for run in runs {
            match run {
                Ok(t) => {
                    let (early, full) = t[&strategy];
                    outcomes.push(if letters.early_stop { early } else { full });
                }
                Err(e) => last_error = Some(e.to_string()),
            }
        }
        if outcomes.len() != runs.len() {
            continue;
        }
        let n = outcomes.len() as f64;
        let validation = outcomes.iter().map(|o| o.validation).sum::<f64>() / n;
        let test = outcomes.iter().map(|o| o.test).sum::<f64>() / n;
        let iteration = outcomes.iter().map(|o| o.iteration as f64).sum::<f64>() / n;
        if best.is_none_or(|(v, ..)| validation > v) {
            best = Some((validation, test, iteration, (*lambda, *alpha)));
        }
    }
    match best {
        Some((validation, test, iteration, (lambda, alpha))) => AblationCell {
            letters: letters.to_string(),
            strategy: strategy.to_string(),
            test_f1: Some(test),
            validation_f1: Some(validation),
            lambda: Some(lambda),
            alpha: Some(alpha),
            iteration: Some(iteration),
            error: None,
        },
        None => AblationCell {
            letters: letters.to_string(),
            strategy: strategy.to_string(),
            test_f1: None,
            validation_f1: None,
            lambda: None,
            alpha: None,
            iteration: None,
            error: Some(last_error.unwrap_or_else(|| "no admissible grid cell".into())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn letter_names_round_trip() {
        for letters in Letters::standard() {
            let name = letters.to_string();
            assert_eq!(name.parse::<Letters>().unwrap(), letters, "{name}");
        }
        assert_eq!("L+E+S+G".parse::<Letters>().unwrap(), Letters::ALL4);
        assert!("L+L".parse::<Letters>().is_err());
        assert!("X".parse::<Letters>().is_err());
    }

    #[test]
    fn strategies_per_classifier() {
        let g_only = Letters::new(true, true, false, true);
        assert_eq!(g_only.strategy(Classifier::Br), Strategy::SampleGfm);
        assert_eq!(g_only.strategy(Classifier::Crf), Strategy::SupportGfm);
        assert_eq!(Letters::NO_REG.strategy(Classifier::Cbm), Strategy::Map);
        assert_eq!(Letters::ALL4.strategy(Classifier::Pcc), Strategy::SupportGfm);
    }
}
