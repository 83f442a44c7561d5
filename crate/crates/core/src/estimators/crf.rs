use rand::RngCore;

use crate::error::{Error, Result};
use crate::linreg::{log_sum_exp, Resumable};
use crate::types::{LabelVector, MultiLabelDataset, SparseInstance, SupportSet};

use super::{check_instance, check_labels, JointEstimator};

/// Joint state of a label pair `(y_l, y_m)`, `l < m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairState {
    OffOff = 0,
    OffOn = 1,
    OnOff = 2,
    OnOn = 3,
}

impl PairState {
    pub fn of(first: bool, second: bool) -> Self {
        match (first, second) {
            (false, false) => PairState::OffOff,
            (false, true) => PairState::OffOn,
            (true, false) => PairState::OnOff,
            (true, true) => PairState::OnOn,
        }
    }
}

fn pair_count(l: usize) -> usize {
    l * l.saturating_sub(1) / 2
}

/// Position of the unordered pair `l < m` in the pairwise table.
fn pair_index(l: usize, m: usize, num_labels: usize) -> usize {
    l * num_labels - l * (l + 1) / 2 + (m - l - 1)
}

/// Pairwise log-linear model with support-restricted normalization.
///
/// Unary weights are stored per label over `D + 1` inputs; the last one acts on
/// a constant feature 1 (a per-label bias).
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    num_labels: usize,
    num_features: usize,
    /// `L × (D + 1)`.
    unary: Vec<Vec<f64>>,
    /// Four indicator weights per pair `l < m`, indexed by [`PairState`].
    pairwise: Vec<[f64; 4]>,
    include_pairwise: bool,
    support: SupportSet,
}

impl CrfModel {
    pub fn new(
        unary: Vec<Vec<f64>>,
        pairwise: Vec<[f64; 4]>,
        include_pairwise: bool,
        support: SupportSet,
    ) -> Result<Self> {
        let num_labels = unary.len();
        if num_labels == 0 {
            return Err(Error::Empty("CRF needs at least one label".into()));
        }
        let width = unary[0].len();
        if width == 0 || unary.iter().any(|u| u.len() != width) {
            return Err(Error::InvalidConfig("unary weight rows must share the width D + 1".into()));
        }
        if pairwise.len() != pair_count(num_labels) {
            return Err(Error::InvalidConfig(format!(
                "expected {} label pairs, got {}",
                pair_count(num_labels),
                pairwise.len()
            )));
        }
        if !include_pairwise && pairwise.iter().flatten().any(|&w| w != 0.0) {
            return Err(Error::InvalidConfig("pairwise weights must be zero when disabled".into()));
        }
        if unary.iter().flatten().chain(pairwise.iter().flatten()).any(|w| !w.is_finite()) {
            return Err(Error::InvalidConfig("CRF weights must be finite".into()));
        }
        if support.is_empty() {
            return Err(Error::Empty("CRF support is empty".into()));
        }
        if let Some(y) = support.combinations().iter().find(|y| y.num_labels() != num_labels) {
            return Err(Error::LabelSpaceMismatch {
                expected: num_labels,
                actual: y.num_labels(),
            });
        }
        Ok(Self {
            num_labels,
            num_features: width - 1,
            unary,
            pairwise,
            include_pairwise,
            support,
        })
    }

    /// All-zero weights.
    pub fn zeros(num_labels: usize, num_features: usize, include_pairwise: bool, support: SupportSet) -> Result<Self> {
        Self::new(
            vec![vec![0.0; num_features + 1]; num_labels],
            vec![[0.0; 4]; pair_count(num_labels)],
            include_pairwise,
            support,
        )
    }

    pub fn unary(&self) -> &[Vec<f64>] {
        &self.unary
    }

    pub fn pairwise(&self) -> &[[f64; 4]] {
        &self.pairwise
    }

    /// Weights of the pair `(l, m)` with `l < m`.
    pub fn pair_weights(&self, l: usize, m: usize) -> Option<&[f64; 4]> {
        (l < m && m < self.num_labels).then(|| &self.pairwise[pair_index(l, m, self.num_labels)])
    }

    pub fn include_pairwise(&self) -> bool {
        self.include_pairwise
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    /// `w_l · x + bias_l` for every label.
    pub fn unary_scores(&self, x: &SparseInstance) -> Result<Vec<f64>> {
        check_instance(x, self.num_features)?;
        Ok(self.unary.iter().map(|u| x.dot(u) + u[self.num_features]).collect())
    }

    fn pair_score(&self, y: &LabelVector) -> f64 {
        if !self.include_pairwise {
            return 0.0;
        }
        let bits = y.to_bits();
        let l = self.num_labels;
        let mut total = 0.0;
        for a in 0..l {
            for b in a + 1..l {
                total += self.pairwise[pair_index(a, b, l)][PairState::of(bits[a], bits[b]) as usize];
            }
        }
        total
    }

    fn score_with(&self, unary: &[f64], y: &LabelVector) -> f64 {
        y.labels().iter().map(|&l| unary[l]).sum::<f64>() + self.pair_score(y)
    }
}

impl JointEstimator for CrfModel {
    fn num_labels(&self) -> usize {
        self.num_labels
    }

    fn num_features(&self) -> usize {
        self.num_features
    }

    /// Unnormalized log score.
    fn log_joint(&self, x: &SparseInstance, y: &LabelVector) -> Result<f64> {
        check_labels(y, self.num_labels)?;
        Ok(self.score_with(&self.unary_scores(x)?, y))
    }

    fn log_joint_many(&self, x: &SparseInstance, ys: &[LabelVector]) -> Result<Vec<f64>> {
        let unary = self.unary_scores(x)?;
        ys.iter()
            .map(|y| {
                check_labels(y, self.num_labels)?;
                Ok(self.score_with(&unary, y))
            })
            .collect()
    }

    fn sample(&self, _x: &SparseInstance, _rng: &mut dyn RngCore) -> Result<LabelVector> {
        Err(Error::Unsupported("sampling from a CRF".into()))
    }

    fn sample_many(
        &self,
        _x: &SparseInstance,
        _count: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<LabelVector>> {
        Err(Error::Unsupported("sampling from a CRF".into()))
    }

    fn is_normalized(&self) -> bool {
        false
    }
}

/// Softmax of the CRF scores over the combinations of `support`.
pub fn crf_support_distribution(model: &CrfModel, x: &SparseInstance, support: &SupportSet) -> Result<Vec<f64>> {
    if support.is_empty() {
        return Err(Error::Empty("support is empty".into()));
    }
    let scores = model.log_joint_many(x, support.combinations())?;
    let lse = log_sum_exp(&scores);
    Ok(scores.iter().map(|s| (s - lse).exp()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrfConfig {
    /// L2 strength on unary (non-bias) and pairwise weights.
    pub l2_lambda: f64,
    pub include_pairwise: bool,
    pub max_iterations: usize,
    /// Convergence threshold on the largest absolute gradient entry.
    pub tolerance: f64,
}

impl Default for CrfConfig {
    fn default() -> Self {
        Self {
            l2_lambda: 1e-3,
            include_pairwise: true,
            max_iterations: 300,
            tolerance: 1e-6,
        }
    }
}

impl CrfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("invalid l2_lambda {}", self.l2_lambda)));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be positive".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be positive".into()));
        }
        Ok(())
    }
}

const MAX_HALVINGS: usize = 30;
const ARMIJO_SIGMA: f64 = 1e-4;

/// Full-batch gradient descent on
/// `-(1/N) Σ_i log p_S(y_i|x_i) + λ (||unary||² + ||pairwise||²)`,
/// with Barzilai-Borwein step sizes and Armijo backtracking.
///
/// Parameters are flattened as the unary rows followed by the pairwise table.
pub struct CrfTrainer<'a> {
    dataset: &'a MultiLabelDataset,
    support: SupportSet,
    /// Support position of each training label vector.
    targets: Vec<usize>,
    /// Pair states of every support combination, `|S| × P`.
    states: Vec<Vec<u8>>,
    config: CrfConfig,
    params: Vec<f64>,
    objective: f64,
    gradient: Vec<f64>,
    step: f64,
    iterations: usize,
    converged: bool,
}

impl<'a> CrfTrainer<'a> {
    pub fn new(dataset: &'a MultiLabelDataset, support: SupportSet, config: &CrfConfig) -> Result<Self> {
        config.validate()?;
        if support.is_empty() {
            return Err(Error::Empty("CRF support is empty".into()));
        }
        let targets = dataset
            .labels()
            .iter()
            .map(|y| {
                support
                    .position(y)
                    .ok_or_else(|| Error::InvalidDataset(format!("training labels {{{y}}} are not in the support")))
            })
            .collect::<Result<Vec<_>>>()?;
        let l = dataset.num_labels();
        let states = support
            .combinations()
            .iter()
            .map(|y| {
                let bits = y.to_bits();
                let mut s = Vec::with_capacity(pair_count(l));
                for a in 0..l {
                    for b in a + 1..l {
                        s.push(PairState::of(bits[a], bits[b]) as u8);
                    }
                }
                s
            })
            .collect();
        let size = l * (dataset.num_features() + 1) + 4 * pair_count(l);
        let mut trainer = Self {
            dataset,
            support,
            targets,
            states,
            config: *config,
            params: vec![0.0; size],
            objective: 0.0,
            gradient: Vec::new(),
            step: 1.0,
            iterations: 0,
            converged: false,
        };
        let (objective, gradient) = trainer.evaluate(&trainer.params)?;
        trainer.objective = objective;
        trainer.gradient = gradient;
        trainer.converged = trainer.max_gradient() <= config.tolerance;
        Ok(trainer)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &[f64] {
        &self.params
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn is_converged(&self) -> bool {
        self.converged
    }

    pub fn objective(&self) -> f64 {
        self.objective
    }

    fn width(&self) -> usize {
        self.dataset.num_features() + 1
    }

    fn unary_len(&self) -> usize {
        self.dataset.num_labels() * self.width()
    }

    fn is_penalized(&self, idx: usize) -> bool {
        idx >= self.unary_len() || idx % self.width() != self.width() - 1
    }

    fn max_gradient(&self) -> f64 {
        self.gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()))
    }

    pub fn model_at(&self, params: &[f64]) -> Result<CrfModel> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                actual: params.len(),
            });
        }
        let (unary, pairwise) = params.split_at(self.unary_len());
        CrfModel::new(
            unary.chunks(self.width()).map(<[f64]>::to_vec).collect(),
            pairwise.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
            self.config.include_pairwise,
            self.support.clone(),
        )
    }

    pub fn model(&self) -> CrfModel {
        self.model_at(&self.params).expect("trainer keeps parameters finite")
    }

    /// Penalized negative mean log-likelihood at `params`.
    pub fn objective_at(&self, params: &[f64]) -> Result<f64> {
        self.evaluate(params).map(|(f, _)| f)
    }

    /// Gradient of [`CrfTrainer::objective_at`]. Pairwise entries are zero
    /// when pairwise terms are disabled.
    pub fn gradient_at(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(params).map(|(_, g)| g)
    }

    fn evaluate(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let model = self.model_at(params)?;
        let width = self.width();
        let l = self.dataset.num_labels();
        let combos = self.support.combinations();
        let pair_scores: Vec<f64> = combos.iter().map(|y| model.pair_score(y)).collect();
        let mut gradient = vec![0.0; params.len()];
        // Σ_i (q_i(s) - 1[s = y_i]) per support combination, for the pairwise gradient
        let mut residual = vec![0.0; combos.len()];
        let mut loss = 0.0;
        let mut scores = vec![0.0; combos.len()];
        let mut label_residual = vec![0.0; l];
        for (i, x) in self.dataset.instances().iter().enumerate() {
            let unary = model.unary_scores(x)?;
            for (s, y) in combos.iter().enumerate() {
                scores[s] = y.labels().iter().map(|&k| unary[k]).sum::<f64>() + pair_scores[s];
            }
            let lse = log_sum_exp(&scores);
            let target = self.targets[i];
            loss += lse - scores[target];
            label_residual.iter_mut().for_each(|r| *r = 0.0);
            for (s, y) in combos.iter().enumerate() {
                let q = (scores[s] - lse).exp();
                residual[s] += q;
                for &k in y.labels() {
                    label_residual[k] += q;
                }
            }
            residual[target] -= 1.0;
            for &k in combos[target].labels() {
                label_residual[k] -= 1.0;
            }
            for (k, &r) in label_residual.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                let row = &mut gradient[k * width..(k + 1) * width];
                for (j, v) in x.iter() {
                    row[j] += r * v;
                }
                row[width - 1] += r;
            }
        }
        let n = self.dataset.len() as f64;
        if self.config.include_pairwise {
            let offset = self.unary_len();
            for (s, &r) in residual.iter().enumerate() {
                if r == 0.0 {
                    continue;
                }
                for (p, &state) in self.states[s].iter().enumerate() {
                    gradient[offset + 4 * p + state as usize] += r;
                }
            }
        }
        let lambda = self.config.l2_lambda;
        let mut penalty = 0.0;
        for (idx, g) in gradient.iter_mut().enumerate() {
            *g /= n;
            if self.is_penalized(idx) {
                penalty += lambda * params[idx] * params[idx];
                *g += 2.0 * lambda * params[idx];
            }
        }
        let objective = loss / n + penalty;
        if !objective.is_finite() {
            return Err(Error::NonFiniteObjective(format!("CRF objective {objective}")));
        }
        Ok((objective, gradient))
    }

    /// One gradient step with backtracking.
    fn iterate(&mut self) -> Result<()> {
        let mut step = self.step;
        for _ in 0..=MAX_HALVINGS {
            let candidate: Vec<f64> = self
                .params
                .iter()
                .zip(&self.gradient)
                .map(|(p, g)| p - step * g)
                .collect();
            let squared: f64 = self.gradient.iter().map(|g| g * g).sum();
            match self.evaluate(&candidate) {
                Ok((objective, gradient)) if objective <= self.objective - ARMIJO_SIGMA * step * squared => {
                    // Barzilai-Borwein step for the next iteration
                    let (mut ss, mut sy) = (0.0, 0.0);
                    for i in 0..candidate.len() {
                        let s = candidate[i] - self.params[i];
                        let y = gradient[i] - self.gradient[i];
                        ss += s * s;
                        sy += s * y;
                    }
                    self.step = if sy > 0.0 { (ss / sy).clamp(1e-10, 1e10) } else { step * 2.0 };
                    self.params = candidate;
                    self.objective = objective;
                    self.gradient = gradient;
                    self.iterations += 1;
                    self.converged = self.max_gradient() <= self.config.tolerance;
                    return Ok(());
                }
                _ => step *= 0.5,
            }
        }
        if self.max_gradient() <= self.config.tolerance * 10.0 {
            // no representable progress left near the optimum
            self.converged = true;
            self.iterations += 1;
            return Ok(());
        }
        Err(Error::NonFiniteObjective(format!(
            "line search failed after {MAX_HALVINGS} halvings at iteration {}",
            self.iterations
        )))
    }

    pub fn train(mut self) -> Result<CrfModel> {
        while !self.is_finished() {
            self.iterate()?;
        }
        Ok(self.model())
    }
}

impl Resumable for CrfTrainer<'_> {
    type Snapshot = CrfModel;

    fn advance(&mut self, iterations: usize) -> Result<()> {
        for _ in 0..iterations {
            if self.is_finished() {
                break;
            }
            self.iterate()?;
        }
        Ok(())
    }

    fn iterations(&self) -> usize {
        self.iterations
    }

    fn is_finished(&self) -> bool {
        self.converged || self.iterations >= self.config.max_iterations
    }

    fn snapshot(&self) -> CrfModel {
        self.model()
    }
}

/// Maximum-likelihood CRF training with the partition function restricted to `support`.
pub fn crf_train(dataset: &MultiLabelDataset, support: SupportSet, config: &CrfConfig) -> Result<CrfModel> {
    CrfTrainer::new(dataset, support, config)?.train()
}
