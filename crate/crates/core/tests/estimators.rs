mod common;

use common::{noisy_dataset, rng};
use mlreg::dataio::{generate_synthetic, SyntheticSpec};
use mlreg::estimators::{
    br_train, crf_support_distribution, BrModel, CbmConfig, CbmModel, CbmTrainer, CrfConfig, CrfTrainer,
    Estimator, Gating, JointEstimator, PccModel,
};
use mlreg::fpredict::{marginals_from_posterior, marginals_from_samples, SupportPosterior};
use mlreg::linreg::{ElasticNetConfig, LinearModel, Resumable};
use mlreg::{LabelVector, SparseInstance, SupportSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_linear(r: &mut ChaCha8Rng, classes: usize, dim: usize) -> LinearModel {
    let v = LinearModel::score_vectors_for(classes);
    LinearModel::from_parts(
        classes,
        dim,
        (0..v).map(|_| r.gen_range(-1.5..1.5)).collect(),
        (0..v).map(|_| (0..dim).map(|_| r.gen_range(-1.5..1.5)).collect()).collect(),
    )
    .unwrap()
}

fn random_br(r: &mut ChaCha8Rng, l: usize, d: usize) -> BrModel {
    BrModel::new((0..l).map(|_| random_linear(r, 2, d)).collect()).unwrap()
}

fn random_estimators(r: &mut ChaCha8Rng, l: usize, d: usize) -> Vec<Estimator> {
    let mut order: Vec<usize> = (0..l).collect();
    order.reverse();
    let pcc = PccModel::new(order, (0..l).map(|j| random_linear(r, 2, d + j)).collect()).unwrap();
    let cbm = CbmModel::new(
        Gating::Linear(random_linear(r, 3, d)),
        (0..3).map(|_| random_br(r, l, d)).collect(),
    )
    .unwrap();
    vec![Estimator::Br(random_br(r, l, d)), Estimator::Pcc(pcc), Estimator::Cbm(cbm)]
}

fn random_x(r: &mut ChaCha8Rng, d: usize) -> SparseInstance {
    SparseInstance::from_dense(&(0..d).map(|_| r.gen_range(-1.0..1.0)).collect::<Vec<_>>()).unwrap()
}

fn enumerate(l: usize) -> Vec<LabelVector> {
    (0..1u64 << l).map(|m| LabelVector::from_mask(l, m)).collect()
}

#[test]
fn joints_sum_to_one() {
    let mut r = rng(1);
    for l in [1, 4, 7, 10] {
        let all = enumerate(l);
        for estimator in random_estimators(&mut r, l, 3) {
            let x = random_x(&mut r, 3);
            let total: f64 = estimator
                .log_joint_many(&x, &all)
                .unwrap()
                .into_iter()
                .map(f64::exp)
                .sum();
            assert!((total - 1.0).abs() < 1e-9, "{} L={l}: {total}", estimator.kind());
        }
    }
}

#[test]
fn sampled_marginals_match_enumeration() {
    let mut r = rng(2);
    let l = 5;
    let all = enumerate(l);
    for estimator in random_estimators(&mut r, l, 3) {
        let x = random_x(&mut r, 3);
        let scores = estimator.log_joint_many(&x, &all).unwrap();
        let exact = marginals_from_posterior(&SupportPosterior::from_log_scores(all.clone(), &scores).unwrap());
        let samples = estimator.sample_many(&x, 50_000, &mut r).unwrap();
        let sampled = marginals_from_samples(&samples, l).unwrap();
        for label in 0..l {
            for s in 1..=l {
                let gap = (sampled.get(label, s) - exact.get(label, s)).abs();
                assert!(gap < 0.02, "{} ({label}, {s}): {gap}", estimator.kind());
            }
        }
        assert!((sampled.p_empty() - exact.p_empty()).abs() < 0.02);
    }
}

fn cbm_data(seed: u64) -> mlreg::MultiLabelDataset {
    let mut spec = SyntheticSpec::new(300, 30, 5, 3);
    spec.seed = seed;
    spec.features_per_row = 8;
    spec.signal_fraction = 0.5;
    spec.noise_rate = 0.1;
    generate_synthetic(&spec).unwrap().dataset
}

#[test]
fn em_objective_never_increases() {
    for seed in 0..10 {
        let data = cbm_data(seed);
        let config = CbmConfig {
            components: 3,
            max_em_iterations: 20,
            em_tolerance: 0.0,
            seed,
            ..CbmConfig::default()
        };
        let penalty = ElasticNetConfig::new(1e-3, 0.5);
        let mut trainer = CbmTrainer::new(&data, &config, &penalty).unwrap();
        while !trainer.is_finished() {
            trainer.advance(1).unwrap();
        }
        let trace = trainer.objective_trace();
        assert!(trace.len() >= 20, "seed {seed}: only {} iterations", trace.len());
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-6, "seed {seed}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn unpenalized_em_log_likelihood_never_decreases() {
    for seed in 0..10 {
        let data = cbm_data(100 + seed);
        let config = CbmConfig {
            components: 3,
            max_em_iterations: 20,
            em_tolerance: 0.0,
            seed,
            ..CbmConfig::default()
        };
        let mut trainer = CbmTrainer::new(&data, &config, &ElasticNetConfig::new(0.0, 0.0)).unwrap();
        while !trainer.is_finished() {
            trainer.advance(1).unwrap();
        }
        for w in trainer.log_likelihood_trace().windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "seed {seed}: {} then {}", w[0], w[1]);
        }
    }
}

#[test]
fn single_component_cbm_agrees_with_br() {
    let mut r = rng(3);
    let data = noisy_dataset(&mut r, 150, 4, 3);
    let penalty = ElasticNetConfig::new(1e-2, 0.5);
    let br = br_train(&data, &penalty).unwrap();
    let config = CbmConfig {
        components: 1,
        max_em_iterations: 200,
        inner_iterations: 10,
        em_tolerance: 1e-12,
        ..CbmConfig::default()
    };
    let cbm = mlreg::estimators::cbm_train_em(&data, &config, &penalty).unwrap();
    for x in data.instances().iter().take(30) {
        let (a, b) = (br.marginals(x).unwrap(), cbm.marginals(x).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-3, "{p} vs {q}");
        }
    }
}

#[test]
fn crf_gradient_matches_central_differences() {
    let mut r = rng(4);
    let data = noisy_dataset(&mut r, 40, 3, 3);
    for include_pairwise in [true, false] {
        let config = CrfConfig {
            l2_lambda: 0.0,
            include_pairwise,
            ..CrfConfig::default()
        };
        let support = mlreg::build_support(&data);
        let trainer = CrfTrainer::new(&data, support, &config).unwrap();
        let params: Vec<f64> = (0..trainer.num_parameters())
            .map(|_| r.gen_range(-1.0..1.0))
            .collect();
        let params: Vec<f64> = if include_pairwise {
            params
        } else {
            // disabled pairwise parameters must stay zero
            let unary = 3 * 4;
            params.iter().enumerate().map(|(i, &p)| if i < unary { p } else { 0.0 }).collect()
        };
        let grad = trainer.gradient_at(&params).unwrap();
        let h = 1e-5;
        let limit = if include_pairwise { params.len() } else { 12 };
        for i in 0..limit {
            let (mut up, mut down) = (params.clone(), params.clone());
            up[i] += h;
            down[i] -= h;
            let numeric = (trainer.objective_at(&up).unwrap() - trainer.objective_at(&down).unwrap()) / (2.0 * h);
            assert!(
                (grad[i] - numeric).abs() <= 1e-5 * numeric.abs().max(1e-3),
                "parameter {i}: {} vs {numeric}",
                grad[i]
            );
        }
    }
}

#[test]
fn crf_support_distribution_is_normalized() {
    let mut r = rng(5);
    let data = noisy_dataset(&mut r, 60, 3, 4);
    let support = mlreg::build_support(&data);
    let model = mlreg::estimators::crf_train(&data, support.clone(), &CrfConfig::default()).unwrap();
    for x in data.instances().iter().take(20) {
        let p = crf_support_distribution(&model, x, &support).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn crf_without_pairwise_on_full_support_equals_br() {
    let mut r = rng(6);
    for l in [1, 2, 4] {
        let data = noisy_dataset(&mut r, 80, 3, l);
        let lambda = 1e-2;
        let crf = mlreg::estimators::crf_train(
            &data,
            SupportSet::all_combinations(l).unwrap(),
            &CrfConfig {
                l2_lambda: lambda,
                include_pairwise: false,
                max_iterations: 5000,
                tolerance: 1e-10,
            },
        )
        .unwrap();
        let mut penalty = ElasticNetConfig::new(lambda, 0.0);
        penalty.tolerance = 1e-10;
        penalty.max_iterations = 5000;
        let br = br_train(&data, &penalty).unwrap();
        let all = enumerate(l);
        for x in data.instances().iter().take(10) {
            let p = crf_support_distribution(&crf, x, &SupportSet::all_combinations(l).unwrap()).unwrap();
            let support = SupportSet::all_combinations(l).unwrap();
            for (y, pc) in support.combinations().iter().zip(&p) {
                let pb = br.log_joint(x, y).unwrap().exp();
                assert!((pc - pb).abs() < 1e-6, "L={l} {y}: crf {pc} vs br {pb}");
            }
            assert_eq!(all.len(), p.len());
        }
    }
}
