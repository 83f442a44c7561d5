//! Block Newton solver for elastic-net logistic and softmax regression.
//!
//! Each iteration visits the score vectors in turn. For one vector the smooth
//! loss is expanded to second order, the expansion plus the exact penalty is
//! minimized by coordinate descent with soft-thresholding, and the step is
//! backtracked until the true objective decreases sufficiently. The objective
//! is therefore non-increasing across iterations.

use std::borrow::Cow;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::types::SparseInstance;

use super::early_stop::Resumable;
use super::model::LinearModel;
use super::{log_sum_exp, sigmoid, soft_threshold, softplus, ElasticNetConfig, INTERCEPT_LIMIT};

const ARMIJO_SIGMA: f64 = 0.01;
const MAX_HALVINGS: usize = 30;
const MIN_CURVATURE: f64 = 1e-12;
/// Predicted decreases smaller than this are below the rounding noise of the
/// line-search objective difference; such steps are taken without a search.
const NEGLIGIBLE_DECREASE: f64 = 1e-14;
const MAX_INNER_PASSES: usize = 30;
/// Inner passes stop once the largest scaled move falls below this fraction
/// of the first pass's.
const INNER_REDUCTION: f64 = 0.05;

/// One training row with an instance weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedExample {
    pub instance: SparseInstance,
    pub class_id: usize,
    pub weight: f64,
}

impl WeightedExample {
    pub fn new(instance: SparseInstance, class_id: usize, weight: f64) -> Self {
        Self {
            instance,
            class_id,
            weight,
        }
    }
}

/// Rows, per-row target distributions and instance weights.
#[derive(Debug, Clone)]
pub struct TrainingProblem<'a> {
    rows: Vec<Cow<'a, SparseInstance>>,
    num_classes: usize,
    dim: usize,
    /// Row-major `N × C`.
    targets: Vec<f64>,
    weights: Vec<f64>,
    normalizer: Option<f64>,
}

impl<'a> TrainingProblem<'a> {
    /// Problem with one observed class per row and unit weights.
    pub fn hard(rows: Vec<&'a SparseInstance>, classes: &[usize], num_classes: usize) -> Result<Self> {
        Self::hard_rows(rows.into_iter().map(Cow::Borrowed).collect(), classes, num_classes)
    }

    /// Like [`TrainingProblem::hard`] for rows the problem owns.
    pub fn hard_owned(rows: Vec<SparseInstance>, classes: &[usize], num_classes: usize) -> Result<Self> {
        Self::hard_rows(rows.into_iter().map(Cow::Owned).collect(), classes, num_classes)
    }

    fn hard_rows(rows: Vec<Cow<'a, SparseInstance>>, classes: &[usize], num_classes: usize) -> Result<Self> {
        if classes.len() != rows.len() {
            return Err(Error::InvalidDataset(format!(
                "{} rows but {} class ids",
                rows.len(),
                classes.len()
            )));
        }
        let mut targets = vec![0.0; rows.len() * num_classes];
        for (i, &c) in classes.iter().enumerate() {
            if c >= num_classes {
                return Err(Error::InvalidDataset(format!(
                    "class id {c} out of range for {num_classes} classes"
                )));
            }
            targets[i * num_classes + c] = 1.0;
        }
        Self::build(rows, targets, num_classes)
    }

    /// Problem with a target distribution per row (row-major `N × C`).
    pub fn soft(rows: Vec<&'a SparseInstance>, targets: Vec<f64>, num_classes: usize) -> Result<Self> {
        Self::check_soft(rows.len(), &targets, num_classes)?;
        Self::build(rows.into_iter().map(Cow::Borrowed).collect(), targets, num_classes)
    }

    fn check_soft(n: usize, targets: &[f64], num_classes: usize) -> Result<()> {
        if targets.len() != n * num_classes {
            return Err(Error::InvalidDataset("target matrix has the wrong shape".into()));
        }
        for (i, t) in targets.chunks(num_classes.max(1)).enumerate() {
            let sum: f64 = t.iter().sum();
            if t.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDataset(format!(
                    "row {i} target is not a probability distribution"
                )));
            }
        }
        Ok(())
    }

    fn build(rows: Vec<Cow<'a, SparseInstance>>, targets: Vec<f64>, num_classes: usize) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty("training problem has no rows".into()));
        }
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!(
                "logistic regression needs at least 2 classes, got {num_classes}"
            )));
        }
        let dim = rows[0].dim();
        if let Some(x) = rows.iter().find(|x| x.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.dim(),
            });
        }
        let n = rows.len();
        Ok(Self {
            rows,
            num_classes,
            dim,
            targets,
            weights: vec![1.0; n],
            normalizer: None,
        })
    }

    pub fn from_examples(examples: &'a [WeightedExample], num_classes: usize) -> Result<Self> {
        let classes: Vec<usize> = examples.iter().map(|e| e.class_id).collect();
        let problem = Self::hard(examples.iter().map(|e| &e.instance).collect(), &classes, num_classes)?;
        problem.with_weights(examples.iter().map(|e| e.weight).collect())
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.set_weights(weights)?;
        Ok(self)
    }

    /// Divides the data term by `normalizer` instead of the total weight.
    pub fn with_normalizer(mut self, normalizer: f64) -> Result<Self> {
        if !(normalizer > 0.0 && normalizer.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid normalizer {normalizer}")));
        }
        self.normalizer = Some(normalizer);
        Ok(self)
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.rows.len() {
            return Err(Error::InvalidDataset(format!(
                "{} weights for {} rows",
                weights.len(),
                self.rows.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDataset("weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::ZeroTotalWeight);
        }
        self.weights = weights;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &SparseInstance {
        &self.rows[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn target(&self, row: usize, class: usize) -> f64 {
        self.targets[row * self.num_classes + class]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer.unwrap_or_else(|| self.total_weight())
    }

    fn check_model(&self, model: &LinearModel) -> Result<()> {
        if model.num_classes() != self.num_classes {
            return Err(Error::InvalidConfig(format!(
                "model has {} classes, problem has {}",
                model.num_classes(),
                self.num_classes
            )));
        }
        if model.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: model.dim(),
            });
        }
        Ok(())
    }

    /// Class whose target column drives score vector `v`.
    fn class_of_vector(&self, v: usize) -> usize {
        if self.num_classes == 2 {
            1
        } else {
            v
        }
    }
}

/// Per-row loss `-Σ_c t_c log p_c` from the stored linear scores of that row.
fn row_loss(problem: &TrainingProblem, row: usize, scores: &[f64]) -> f64 {
    if problem.num_classes == 2 {
        softplus(scores[0]) - problem.target(row, 1) * scores[0]
    } else {
        let lse = log_sum_exp(scores);
        lse - scores
            .iter()
            .enumerate()
            .map(|(c, s)| problem.target(row, c) * s)
            .sum::<f64>()
    }
}

/// Per-row `p_v` for each stored score vector.
fn row_probabilities(problem: &TrainingProblem, scores: &[f64]) -> Vec<f64> {
    if problem.num_classes == 2 {
        vec![sigmoid(scores[0])]
    } else {
        let lse = log_sum_exp(scores);
        scores.iter().map(|s| (s - lse).exp()).collect()
    }
}

/// Weighted mean negative log-likelihood (the smooth part of the objective).
pub fn mean_negative_log_likelihood(problem: &TrainingProblem, model: &LinearModel) -> Result<f64> {
    problem.check_model(model)?;
    let mut total = 0.0;
    for (i, x) in problem.rows.iter().enumerate() {
        if problem.weights[i] == 0.0 {
            continue;
        }
        total += problem.weights[i] * row_loss(problem, i, &model.linear_scores(x)?);
    }
    Ok(total / problem.normalizer())
}

/// Smooth loss plus the elastic-net penalty.
pub fn penalized_objective(
    problem: &TrainingProblem,
    model: &LinearModel,
    config: &ElasticNetConfig,
) -> Result<f64> {
    let loss = mean_negative_log_likelihood(problem, model)?;
    Ok(loss + penalty(model.weights(), config))
}

/// `λ Σ [(1-α) w² + α |w|]` over the feature weights of `model`.
pub fn elastic_net_penalty(model: &LinearModel, config: &ElasticNetConfig) -> f64 {
    penalty(model.weights(), config)
}

fn penalty(weights: &[Vec<f64>], config: &ElasticNetConfig) -> f64 {
    let (l1, l2) = (config.l1(), config.l2());
    weights
        .iter()
        .flatten()
        .map(|w| l1 * w.abs() + l2 * w * w)
        .sum()
}

/// Gradient of [`mean_negative_log_likelihood`] with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub intercepts: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
}

pub fn loss_gradient(problem: &TrainingProblem, model: &LinearModel) -> Result<LossGradient> {
    problem.check_model(model)?;
    let v_count = model.intercepts().len();
    let mut intercepts = vec![0.0; v_count];
    let mut weights = vec![vec![0.0; problem.dim]; v_count];
    let norm = problem.normalizer();
    for (i, x) in problem.rows.iter().enumerate() {
        let wi = problem.weights[i];
        if wi == 0.0 {
            continue;
        }
        let probs = row_probabilities(problem, &model.linear_scores(x)?);
        for v in 0..v_count {
            let r = wi * (probs[v] - problem.target(i, problem.class_of_vector(v))) / norm;
            intercepts[v] += r;
            for (j, xv) in x.iter() {
                weights[v][j] += r * xv;
            }
        }
    }
    Ok(LossGradient {
        intercepts,
        weights,
    })
}

fn coordinate_violation(g: f64, w: f64, config: &ElasticNetConfig) -> f64 {
    let (l1, l2) = (config.l1(), config.l2());
    if w != 0.0 {
        (g + 2.0 * l2 * w + l1 * w.signum()).abs()
    } else {
        (g.abs() - l1).max(0.0)
    }
}

fn intercept_violation(g: f64, b: f64) -> f64 {
    // At the box limit a gradient pushing further out is not a violation.
    if (b >= INTERCEPT_LIMIT && g < 0.0) || (b <= -INTERCEPT_LIMIT && g > 0.0) {
        0.0
    } else {
        g.abs()
    }
}

/// Largest violation of the elastic-net KKT conditions at `model`.
pub fn kkt_violation(
    problem: &TrainingProblem,
    model: &LinearModel,
    config: &ElasticNetConfig,
) -> Result<f64> {
    let grad = loss_gradient(problem, model)?;
    let mut worst = 0.0f64;
    for v in 0..grad.intercepts.len() {
        worst = worst.max(intercept_violation(grad.intercepts[v], model.intercepts()[v]));
        for (g, w) in grad.weights[v].iter().zip(&model.weights()[v]) {
            worst = worst.max(coordinate_violation(*g, *w, config));
        }
    }
    Ok(worst)
}

/// Compressed sparse column view of the rows.
#[derive(Debug, Clone)]
struct Columns {
    ptr: Vec<usize>,
    rows: Vec<usize>,
    values: Vec<f64>,
}

impl Columns {
    fn build(rows: &[Cow<SparseInstance>], dim: usize) -> Self {
        let mut counts = vec![0usize; dim + 1];
        for x in rows {
            for &j in x.indices() {
                counts[j + 1] += 1;
            }
        }
        for j in 0..dim {
            counts[j + 1] += counts[j];
        }
        let ptr = counts.clone();
        let nnz = ptr[dim];
        let mut next = counts;
        let mut col_rows = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        for (i, x) in rows.iter().enumerate() {
            for (j, v) in x.iter() {
                col_rows[next[j]] = i;
                values[next[j]] = v;
                next[j] += 1;
            }
        }
        Self {
            ptr,
            rows: col_rows,
            values,
        }
    }

    fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.ptr[j]..self.ptr[j + 1];
        self.rows[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    fn is_empty(&self, j: usize) -> bool {
        self.ptr[j] == self.ptr[j + 1]
    }
}

/// Resumable elastic-net trainer.
///
/// Owns its [`TrainingProblem`] so instance weights can be swapped between
/// calls (as the EM loop of a mixture model does) while keeping a warm start.
#[derive(Debug, Clone)]
pub struct ElasticNetTrainer<'a> {
    problem: TrainingProblem<'a>,
    config: ElasticNetConfig,
    intercepts: Vec<f64>,
    weights: Vec<Vec<f64>>,
    /// Row-major `N × V` linear scores.
    scores: Vec<f64>,
    /// Per-row log-normalizer (multinomial only).
    lse: Vec<f64>,
    columns: Arc<Columns>,
    iterations: usize,
    converged: bool,
    last_violation: f64,
}

impl<'a> ElasticNetTrainer<'a> {
    pub fn new(problem: TrainingProblem<'a>, config: ElasticNetConfig) -> Result<Self> {
        let init = LinearModel::zeros(problem.num_classes, problem.dim)?;
        Self::with_initial(problem, config, &init)
    }

    /// Starts from `initial` instead of the zero model.
    pub fn with_initial(
        problem: TrainingProblem<'a>,
        config: ElasticNetConfig,
        initial: &LinearModel,
    ) -> Result<Self> {
        let columns = Arc::new(Columns::build(&problem.rows, problem.dim));
        Self::with_columns(problem, config, initial, columns)
    }

    /// Like [`ElasticNetTrainer::with_initial`], reusing the column index of
    /// `other`, which must have been built over the very same rows.
    pub(crate) fn with_columns_of(
        problem: TrainingProblem<'a>,
        config: ElasticNetConfig,
        initial: &LinearModel,
        other: &ElasticNetTrainer,
    ) -> Result<Self> {
        if problem.len() != other.problem.len() || problem.dim != other.problem.dim {
            return Err(Error::InvalidDataset("trainers do not share their rows".into()));
        }
        Self::with_columns(problem, config, initial, Arc::clone(&other.columns))
    }

    fn with_columns(
        problem: TrainingProblem<'a>,
        config: ElasticNetConfig,
        initial: &LinearModel,
        columns: Arc<Columns>,
    ) -> Result<Self> {
        config.validate()?;
        problem.check_model(initial)?;
        let v_count = initial.intercepts().len();
        let mut trainer = Self {
            intercepts: initial
                .intercepts()
                .iter()
                .map(|b| b.clamp(-INTERCEPT_LIMIT, INTERCEPT_LIMIT))
                .collect(),
            weights: initial.weights().to_vec(),
            scores: vec![0.0; problem.len() * v_count],
            lse: vec![0.0; problem.len()],
            columns,
            problem,
            config,
            iterations: 0,
            converged: false,
            last_violation: f64::INFINITY,
        };
        trainer.refresh_scores();
        Ok(trainer)
    }

    fn v_count(&self) -> usize {
        self.intercepts.len()
    }

    fn is_multinomial(&self) -> bool {
        self.problem.num_classes > 2
    }

    fn refresh_scores(&mut self) {
        let v_count = self.v_count();
        for (i, x) in self.problem.rows.iter().enumerate() {
            for v in 0..v_count {
                self.scores[i * v_count + v] = self.intercepts[v] + x.dot(&self.weights[v]);
            }
            if self.is_multinomial() {
                self.lse[i] = log_sum_exp(&self.scores[i * v_count..(i + 1) * v_count]);
            }
        }
    }

    pub fn problem(&self) -> &TrainingProblem<'a> {
        &self.problem
    }

    pub fn config(&self) -> &ElasticNetConfig {
        &self.config
    }

    /// Replaces the instance weights, keeping the current parameters.
    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        self.problem.set_weights(weights)?;
        self.converged = false;
        self.last_violation = f64::INFINITY;
        Ok(())
    }

    /// Replaces the per-row target distributions (row-major `N × C`).
    pub fn set_soft_targets(&mut self, targets: Vec<f64>) -> Result<()> {
        TrainingProblem::check_soft(self.problem.len(), &targets, self.problem.num_classes)?;
        self.problem.targets = targets;
        self.converged = false;
        self.last_violation = f64::INFINITY;
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    /// KKT violation measured after the last iteration.
    pub fn last_violation(&self) -> f64 {
        self.last_violation
    }

    pub fn model(&self) -> LinearModel {
        LinearModel::from_parts(
            self.problem.num_classes,
            self.problem.dim,
            self.intercepts.clone(),
            self.weights.clone(),
        )
        .expect("trainer keeps parameters finite")
    }

    /// Current penalized objective, from the cached scores.
    pub fn objective(&self) -> f64 {
        let v_count = self.v_count();
        let mut total = 0.0;
        for i in 0..self.problem.len() {
            let wi = self.problem.weights[i];
            if wi != 0.0 {
                total += wi * row_loss(&self.problem, i, &self.scores[i * v_count..(i + 1) * v_count]);
            }
        }
        total / self.problem.normalizer() + penalty(&self.weights, &self.config)
    }

    /// `p_v` for every row, from the cached scores.
    fn class_probabilities(&self, v: usize) -> Vec<f64> {
        let v_count = self.v_count();
        (0..self.problem.len())
            .map(|i| {
                let s = self.scores[i * v_count + v];
                if self.is_multinomial() {
                    (s - self.lse[i]).exp()
                } else {
                    sigmoid(s)
                }
            })
            .collect()
    }

    /// Smooth-loss gradient of block `v`: the intercept entry and one entry per feature.
    fn block_gradient(&self, v: usize, probs: &[f64]) -> (f64, Vec<f64>) {
        let class = self.problem.class_of_vector(v);
        let norm = self.problem.normalizer();
        let residual: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| self.problem.weights[i] * (p - self.problem.target(i, class)) / norm)
            .collect();
        let g0 = residual.iter().sum();
        let g = (0..self.problem.dim)
            .map(|j| self.columns.column(j).map(|(i, x)| residual[i] * x).sum())
            .collect();
        (g0, g)
    }

    /// Smooth-loss change of the rows in `moved` when block `v` shifts by `step * u`.
    fn block_loss_change(&self, v: usize, moved: &[usize], u: &[f64], step: f64) -> f64 {
        let v_count = self.v_count();
        let class = self.problem.class_of_vector(v);
        let mut total = 0.0;
        let mut shifted = vec![0.0; v_count];
        for &i in moved {
            let wi = self.problem.weights[i];
            if wi == 0.0 {
                continue;
            }
            let delta = step * u[i];
            let row = &self.scores[i * v_count..(i + 1) * v_count];
            let change = if self.is_multinomial() {
                shifted.copy_from_slice(row);
                shifted[v] += delta;
                log_sum_exp(&shifted) - self.lse[i]
            } else {
                softplus(row[0] + delta) - softplus(row[0])
            };
            total += wi * (change - self.problem.target(i, class) * delta);
        }
        total / self.problem.normalizer()
    }

    /// One Newton step on block `v`.
    ///
    /// The smooth loss is replaced by its exact second-order expansion in the
    /// block (row curvatures `p (1 - p)`), which is minimized together with the
    /// elastic-net penalty by cheap coordinate passes. The resulting direction
    /// is then scaled back until the true objective decreases sufficiently.
    fn newton_block(&mut self, v: usize) {
        let n = self.problem.len();
        let dim = self.problem.dim;
        let norm = self.problem.normalizer();
        let (l1, l2) = (self.config.l1(), self.config.l2());
        let probs = self.class_probabilities(v);
        let (g0, g) = self.block_gradient(v, &probs);
        let h: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| self.problem.weights[i] * p * (1.0 - p) / norm)
            .collect();
        let a0: f64 = h.iter().sum();
        let a: Vec<f64> = (0..dim)
            .map(|j| self.columns.column(j).map(|(i, x)| h[i] * x * x).sum::<f64>() + 2.0 * l2)
            .collect();
        let candidates: Vec<usize> = (0..dim)
            .filter(|&j| !(self.columns.is_empty(j) && self.weights[v][j] == 0.0))
            .collect();

        // inner coordinate descent on the quadratic model; u = X d
        let b = self.intercepts[v];
        let w = &self.weights[v];
        let mut d0 = 0.0;
        let mut d = vec![0.0; dim];
        let mut u = vec![0.0; n];
        let mut first_change = 0.0;
        for pass in 0..MAX_INNER_PASSES {
            let mut largest = 0.0f64;
            if a0 >= MIN_CURVATURE {
                let grad = g0 + h.iter().zip(&u).map(|(hi, ui)| hi * ui).sum::<f64>();
                let target = (b + d0 - grad / a0).clamp(-INTERCEPT_LIMIT, INTERCEPT_LIMIT);
                let delta = target - (b + d0);
                if delta != 0.0 {
                    d0 += delta;
                    u.iter_mut().for_each(|ui| *ui += delta);
                    largest = largest.max(delta.abs() * a0.sqrt());
                }
            }
            for &j in &candidates {
                let z = w[j] + d[j];
                // after the first pass only nonzero coordinates are revisited
                if pass > 0 && z == 0.0 {
                    continue;
                }
                if a[j] < MIN_CURVATURE {
                    continue;
                }
                let grad = g[j] + self.columns.column(j).map(|(i, x)| h[i] * x * u[i]).sum::<f64>() + 2.0 * l2 * z;
                let target = soft_threshold(a[j] * z - grad, l1) / a[j];
                let delta = target - z;
                if delta != 0.0 {
                    d[j] += delta;
                    self.columns.column(j).for_each(|(i, x)| u[i] += delta * x);
                    largest = largest.max(delta.abs() * a[j].sqrt());
                }
            }
            if pass == 0 {
                first_change = largest;
            }
            if largest <= INNER_REDUCTION * first_change {
                break;
            }
        }

        let changed: Vec<usize> = candidates.iter().copied().filter(|&j| d[j] != 0.0).collect();
        if d0 == 0.0 && changed.is_empty() {
            return;
        }
        let penalty_change = |beta: f64| {
            changed
                .iter()
                .map(|&j| {
                    let (old, new) = (w[j], w[j] + beta * d[j]);
                    l1 * (new.abs() - old.abs()) + l2 * (new * new - old * old)
                })
                .sum::<f64>()
        };
        let predicted = g0 * d0 + changed.iter().map(|&j| g[j] * d[j]).sum::<f64>() + penalty_change(1.0);
        let moved: Vec<usize> = (0..n).filter(|&i| u[i] != 0.0).collect();
        let mut accepted = None;
        if predicted > -NEGLIGIBLE_DECREASE {
            accepted = Some(1.0);
        } else {
            let mut beta = 1.0;
            for _ in 0..MAX_HALVINGS {
                let change = self.block_loss_change(v, &moved, &u, beta) + penalty_change(beta);
                if change <= ARMIJO_SIGMA * beta * predicted {
                    accepted = Some(beta);
                    break;
                }
                beta *= 0.5;
            }
        }
        let Some(beta) = accepted else {
            return;
        };
        self.intercepts[v] = (self.intercepts[v] + beta * d0).clamp(-INTERCEPT_LIMIT, INTERCEPT_LIMIT);
        for &j in &changed {
            self.weights[v][j] += beta * d[j];
        }
        let v_count = self.v_count();
        for &i in &moved {
            self.scores[i * v_count + v] += beta * u[i];
            if self.is_multinomial() {
                self.lse[i] = log_sum_exp(&self.scores[i * v_count..(i + 1) * v_count]);
            }
        }
    }

    /// KKT violation recomputed from the cached scores without moving anything.
    fn exact_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for v in 0..self.v_count() {
            let (g0, g) = self.block_gradient(v, &self.class_probabilities(v));
            worst = worst.max(intercept_violation(g0, self.intercepts[v]));
            for (j, gj) in g.into_iter().enumerate() {
                if self.columns.is_empty(j) && self.weights[v][j] == 0.0 {
                    continue;
                }
                worst = worst.max(coordinate_violation(gj, self.weights[v][j], &self.config));
            }
        }
        worst
    }

    /// Runs up to `sweeps` more Newton iterations (one step per score vector),
    /// stopping early once converged. Not capped by `max_iterations`; returns
    /// the number of iterations performed.
    pub fn run(&mut self, sweeps: usize) -> Result<usize> {
        if !self.converged && sweeps > 0 && self.last_violation.is_infinite() {
            self.last_violation = self.exact_violation();
            self.converged = self.last_violation <= self.config.tolerance;
        }
        let mut done = 0;
        while done < sweeps && !self.converged {
            for v in 0..self.v_count() {
                self.newton_block(v);
            }
            self.iterations += 1;
            done += 1;
            let objective = self.objective();
            if !objective.is_finite() {
                return Err(Error::NonFiniteObjective(format!(
                    "objective {objective} after iteration {}",
                    self.iterations
                )));
            }
            self.last_violation = self.exact_violation();
            self.converged = self.last_violation <= self.config.tolerance;
            log::trace!(
                "iteration {} objective {objective:.10} violation {:.3e}",
                self.iterations,
                self.last_violation
            );
        }
        Ok(done)
    }

    /// Runs until convergence or `max_iterations` total iterations.
    pub fn train(mut self) -> Result<LinearModel> {
        let remaining = self.config.max_iterations.saturating_sub(self.iterations);
        self.run(remaining)?;
        Ok(self.model())
    }
}

impl Resumable for ElasticNetTrainer<'_> {
    type Snapshot = LinearModel;

    fn advance(&mut self, iterations: usize) -> Result<()> {
        let remaining = self.config.max_iterations.saturating_sub(self.iterations);
        self.run(iterations.min(remaining)).map(|_| ())
    }

    fn iterations(&self) -> usize {
        self.iterations
    }

    fn is_finished(&self) -> bool {
        self.converged || self.iterations >= self.config.max_iterations
    }

    fn snapshot(&self) -> LinearModel {
        self.model()
    }
}

/// Trains to convergence (or `max_iterations`) on weighted examples.
pub fn train_elastic_net(
    examples: &[WeightedExample],
    num_classes: usize,
    config: &ElasticNetConfig,
) -> Result<LinearModel> {
    let problem = TrainingProblem::from_examples(examples, num_classes)?;
    ElasticNetTrainer::new(problem, *config)?.train()
}
