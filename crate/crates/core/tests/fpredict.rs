mod common;

use common::rng;
use mlreg::dataio::{generate_synthetic, split_train_validation, SyntheticSpec};
use mlreg::estimators::{br_train, cbm_train_em, CbmConfig, Estimator};
use mlreg::fpredict::{
    brute_force_best, brute_force_expected_f1, gfm, lsf_marginals, lsf_train, marginals_from_posterior,
    support_map, Predictor, Strategy, SupportPosterior,
};
use mlreg::linreg::ElasticNetConfig;
use mlreg::metrics::mean_instance_f1;
use mlreg::{build_support, LabelVector, MultiLabelDataset, SparseInstance};
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn lv(l: usize, ids: &[usize]) -> LabelVector {
    LabelVector::new(l, ids.iter().copied()).unwrap()
}

/// Random distribution over a random subset of the `2^L` combinations.
fn random_posterior(r: &mut ChaCha8Rng, l: usize) -> SupportPosterior {
    let total = 1usize << l;
    let size = r.gen_range(1..=total);
    let combos: Vec<LabelVector> = index::sample(r, total, size)
        .into_iter()
        .map(|m| LabelVector::from_mask(l, m as u64))
        .collect();
    let raw: Vec<f64> = combos.iter().map(|_| r.gen::<f64>().powi(3)).collect();
    let z: f64 = raw.iter().sum();
    SupportPosterior::new(combos, raw.iter().map(|v| v / z).collect()).unwrap()
}

#[test]
fn toy_example_is_exact() {
    let post = SupportPosterior::new(vec![lv(3, &[0]), lv(3, &[1]), lv(3, &[2])], vec![0.5, 0.4, 0.1]).unwrap();
    let pred = gfm(&marginals_from_posterior(&post));
    assert_eq!(pred.labels, lv(3, &[0, 1]));
    assert!((pred.expected_f1 - 0.6).abs() < 1e-12);
    let map = support_map(&post);
    assert_eq!(map, lv(3, &[0]));
    assert!((brute_force_expected_f1(&post, &map).unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn gfm_matches_exhaustive_search() {
    let mut r = rng(1);
    for case in 0..500 {
        let l = 1 + case % 8;
        let post = random_posterior(&mut r, l);
        let pred = gfm(&marginals_from_posterior(&post));
        let best = brute_force_best(&post).unwrap();
        assert!((pred.expected_f1 - best.expected_f1).abs() < 1e-9, "case {case}");
        let map_value = brute_force_expected_f1(&post, &support_map(&post)).unwrap();
        assert!(pred.expected_f1 >= map_value - 1e-12);
        assert_eq!(pred.labels.cardinality(), pred.cardinality);
    }
}

#[test]
fn posterior_marginals_are_coherent() {
    let mut r = rng(2);
    for case in 0..100 {
        let l = 1 + case % 8;
        let m = marginals_from_posterior(&random_posterior(&mut r, l));
        let mut total = m.p_empty();
        for s in 1..=l {
            let column: f64 = (0..l).map(|label| m.get(label, s)).sum();
            let q = m.cardinality_probability(s);
            assert!((column - s as f64 * q).abs() < 1e-9);
            total += q;
        }
        assert!((total - 1.0).abs() < 1e-9);
    }
}

/// Three classes written as three labels, one per row.
fn disguised_multiclass(r: &mut ChaCha8Rng, n: usize) -> MultiLabelDataset {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..n {
        let c = r.gen_range(0..3);
        let center = [[1.0, 0.0], [-0.5, 0.9], [-0.5, -0.9]][c];
        let x = [center[0] + r.gen_range(-1.0..1.0), center[1] + r.gen_range(-1.0..1.0)];
        xs.push(SparseInstance::from_dense(&x).unwrap());
        ys.push(lv(3, &[c]));
    }
    MultiLabelDataset::new(xs, ys, 2, 3).unwrap()
}

#[test]
fn support_map_keeps_multiclass_predictions_single_label() {
    let mut r = rng(3);
    let train = disguised_multiclass(&mut r, 300);
    let test = disguised_multiclass(&mut r, 300);
    let br = Estimator::Br(br_train(&train, &ElasticNetConfig::new(1e-3, 0.5)).unwrap());
    let support = build_support(&train);
    let map = Predictor::new(Strategy::Map).predict_all(&br, test.instances()).unwrap();
    let restricted = Predictor::new(Strategy::SupportMap)
        .with_support(&support)
        .predict_all(&br, test.instances())
        .unwrap();
    assert!(restricted.iter().all(|y| y.cardinality() == 1));
    // plain thresholding does produce invalid sets on this data
    assert!(map.iter().any(|y| y.cardinality() != 1));
}

/// Dependent labels: small cluster label sets plus one optional label each.
fn dependent_labels(seed: u64) -> (MultiLabelDataset, MultiLabelDataset) {
    let mut spec = SyntheticSpec::new(2000, 200, 8, 12);
    spec.seed = seed;
    spec.noise_rate = 0.0;
    spec.features_per_row = 6;
    spec.signal_fraction = 0.4;
    spec.optional_labels_per_cluster = 1;
    let data = generate_synthetic(&spec).unwrap().dataset;
    split_train_validation(&data, 0.25, 1).unwrap()
}

#[test]
fn lsf_with_gfm_beats_thresholding() {
    let penalty = ElasticNetConfig::new(1e-4, 0.5);
    let (mut lsf_total, mut map_total) = (0.0, 0.0);
    for seed in 0..3 {
        let (train, test) = dependent_labels(seed);
        let lsf = lsf_train(&train, &penalty).unwrap();
        let lsf_pred: Vec<LabelVector> = test
            .instances()
            .iter()
            .map(|x| gfm(&lsf_marginals(&lsf, x).unwrap()).labels)
            .collect();
        lsf_total += mean_instance_f1(test.labels(), &lsf_pred).unwrap();
        let br = Estimator::Br(br_train(&train, &penalty).unwrap());
        let map = Predictor::new(Strategy::Map).predict_all(&br, test.instances()).unwrap();
        map_total += mean_instance_f1(test.labels(), &map).unwrap();
    }
    assert!(lsf_total > map_total, "lsf {} vs thresholded br {}", lsf_total / 3.0, map_total / 3.0);
}

#[test]
fn gfm_on_cbm_beats_cbm_map() {
    // weak enough that the posterior is not underconfident on unit-norm rows
    let penalty = ElasticNetConfig::new(1e-4, 0.5);
    let config = CbmConfig {
        components: 12,
        ..CbmConfig::default()
    };
    let (mut gfm_total, mut map_total) = (0.0, 0.0);
    for seed in 0..3 {
        let (train, test) = dependent_labels(seed);
        let support = build_support(&train);
        let cbm = Estimator::Cbm(cbm_train_em(&train, &config, &penalty).unwrap());
        for (strategy, total) in [(Strategy::SupportGfm, &mut gfm_total), (Strategy::SupportMap, &mut map_total)] {
            let pred = Predictor::new(strategy)
                .with_support(&support)
                .predict_all(&cbm, test.instances())
                .unwrap();
            *total += mean_instance_f1(test.labels(), &pred).unwrap();
        }
    }
    assert!(gfm_total > map_total, "gfm {} vs map {}", gfm_total / 3.0, map_total / 3.0);
}
