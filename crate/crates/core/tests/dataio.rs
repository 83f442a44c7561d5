use std::collections::BTreeSet;

use mlreg::dataio::{
    archive_stats, encode_archive, generate_synthetic, load_model, parse_dataset, save_model, split_train_validation,
    write_dataset, ModelArchive, StoredModel, SyntheticSpec,
};
use mlreg::estimators::{br_train, Estimator, JointEstimator};
use mlreg::linreg::ElasticNetConfig;

fn synthetic(seed: u64) -> mlreg::MultiLabelDataset {
    let mut spec = SyntheticSpec::new(2000, 200, 8, 12);
    spec.seed = seed;
    generate_synthetic(&spec).unwrap().dataset
}

fn br_archive(data: &mlreg::MultiLabelDataset, lambda: f64, alpha: f64) -> ModelArchive {
    let model = br_train(data, &ElasticNetConfig::new(lambda, alpha)).unwrap();
    ModelArchive::new(StoredModel::Joint(Estimator::Br(model)))
}

#[test]
fn dataset_file_round_trip() {
    let data = synthetic(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.txt");
    write_dataset(&data, &path).unwrap();
    let parsed = parse_dataset(&path).unwrap();
    assert_eq!(parsed, data);
    let again = dir.path().join("again.txt");
    write_dataset(&parsed, &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn split_partitions_rows() {
    let data = synthetic(4);
    let (train, validation) = split_train_validation(&data, 0.2, 9).unwrap();
    assert_eq!((train.len(), validation.len()), (1600, 400));
    let mut all: Vec<String> = data.iter().map(|(x, y)| format!("{x:?}{y:?}")).collect();
    let mut parts: Vec<String> = train
        .iter()
        .chain(validation.iter())
        .map(|(x, y)| format!("{x:?}{y:?}"))
        .collect();
    all.sort();
    parts.sort();
    assert_eq!(all, parts);
}

#[test]
fn generator_is_deterministic_per_seed() {
    assert_eq!(synthetic(5), synthetic(5));
    assert_ne!(synthetic(5), synthetic(6));
}

#[test]
fn lasso_selects_relevant_features() {
    let mut spec = SyntheticSpec::new(2000, 200, 8, 12);
    spec.seed = 1;
    spec.noise_rate = 0.05;
    let data = generate_synthetic(&spec).unwrap();
    let model = br_train(&data.dataset, &ElasticNetConfig::new(1e-2, 1.0)).unwrap();
    let selected: BTreeSet<usize> = model
        .models()
        .iter()
        .flat_map(|m| m.weights()[0].iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(j, _)| j))
        .collect();
    assert!(!selected.is_empty());
    let relevant = selected.iter().filter(|&&j| data.truth.is_relevant(j)).count();
    let share = relevant as f64 / selected.len() as f64;
    assert!(share >= 0.8, "{relevant} of {} selected features are relevant", selected.len());
}

#[test]
fn l1_shrinks_archives_more_than_feature_sets() {
    let data = synthetic(2);
    let sparse = archive_stats(&br_archive(&data, 1e-2, 0.5)).unwrap();
    let dense = archive_stats(&br_archive(&data, 1e-2, 0.0)).unwrap();
    assert!(
        (sparse.byte_size as f64) < 0.5 * dense.byte_size as f64,
        "{} vs {} bytes",
        sparse.byte_size,
        dense.byte_size
    );
    assert!(sparse.selected_feature_count as f64 > sparse.mean_nonzero_per_label);
}

#[test]
fn save_load_save_is_byte_identical() {
    let data = synthetic(7);
    let archive = br_archive(&data, 1e-3, 0.5).with("lambda", 1e-3);
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.bin");
    let second = dir.path().join("b.bin");
    let stats = save_model(&archive, &first).unwrap();
    let loaded = load_model(&first).unwrap();
    save_model(&loaded, &second).unwrap();
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
    assert_eq!(stats.byte_size, encode_archive(&archive).unwrap().len());

    let (StoredModel::Joint(a), StoredModel::Joint(b)) = (&archive.model, &loaded.model) else {
        panic!("expected joint models");
    };
    for (x, y) in data.iter().take(50) {
        assert_eq!(a.log_joint(x, y).unwrap().to_bits(), b.log_joint(x, y).unwrap().to_bits());
    }
}
