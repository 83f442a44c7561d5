//! One function per subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use mlreg::dataio::{
    archive_stats, generate_synthetic, load_model, parse_dataset, parse_dataset_str, save_model, split_train_validation,
    write_dataset, ModelArchive, StoredModel, SyntheticSpec,
};
use mlreg::fpredict::Strategy;
use mlreg::metrics::evaluate;
use mlreg::{build_support, LabelVector, MultiLabelDataset, SupportSet};
use rayon::prelude::*;
use serde::Serialize;

use crate::ablate::{run_ablation, AblationPlan, AblationTable, Letters, RowSpec, Splits};
use crate::args::{AblateArgs, DataArgs, EvalArgs, GenSyntheticArgs, ModelSizeArgs, PredictArgs, TrainArgs, TuneArgs};
use crate::config::{Classifier, RunConfig};
use crate::engine::{predict_all, score, train_model, TrainingLog};
use crate::error::{CliError, Result};
use crate::output::{parse_label_lists, read_label_lists, sidecar, write_json, write_manifest, write_predictions};

fn check_compatible(a: &MultiLabelDataset, b: &MultiLabelDataset, what: &str) -> Result<()> {
    if a.num_features() != b.num_features() || a.num_labels() != b.num_labels() {
        return Err(CliError::Usage(format!(
            "{what} has D={} L={}, training data has D={} L={}",
            b.num_features(),
            b.num_labels(),
            a.num_features(),
            a.num_labels()
        )));
    }
    Ok(())
}

/// Training rows and, if needed, validation rows (from a file or split off).
fn training_data(
    data: &DataArgs,
    need_validation: bool,
    seed: u64,
) -> Result<(MultiLabelDataset, Option<MultiLabelDataset>)> {
    let full = parse_dataset(&data.train)?;
    match (&data.validation, need_validation) {
        (Some(path), _) => {
            let validation = parse_dataset(path)?;
            check_compatible(&full, &validation, "validation data")?;
            Ok((full, Some(validation)))
        }
        (None, true) => {
            let (train, validation) = split_train_validation(&full, data.validation_fraction, seed)?;
            Ok((train, Some(validation)))
        }
        (None, false) => Ok((full, None)),
    }
}

fn archive_for(model: StoredModel, config: &RunConfig, train_path: &Path, log: &TrainingLog) -> ModelArchive {
    let mut archive = ModelArchive::new(model);
    for (key, value) in config.metadata() {
        archive = archive.with(key, value);
    }
    archive
        .with("train_path", train_path.display())
        .with("iterations", log.chosen_iteration)
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainingLog> {
    let config = args.model.to_config();
    config.validate()?;
    let (train, validation) = training_data(&args.data, config.early_stop, config.seed)?;
    let support = build_support(&train);
    let (model, log) = train_model(&config, &train, validation.as_ref(), &support)?;
    let archive = archive_for(model, &config, &args.data.train, &log);
    let stats = save_model(&archive, &args.out)?;
    let log_path = sidecar(&args.out, "log.json");
    write_json(&log, &log_path)?;
    write_manifest("train", config.seed, &config, &[&args.out, &log_path])?;
    println!(
        "trained {} for {} iterations (kept {}), {} bytes, {} nonzero weights",
        config.classifier, log.total_iterations, log.chosen_iteration, stats.byte_size, stats.nonzero_weight_count
    );
    Ok(log)
}

#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub lambda: f64,
    pub log10_lambda: f64,
    pub alpha: f64,
    pub max_iterations: usize,
    pub validation_f1: Option<f64>,
    pub chosen_iteration: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub classifier: Classifier,
    pub prediction: String,
    pub cells: Vec<GridCell>,
    /// Index of the selected cell.
    pub best: Option<usize>,
}

pub fn cmd_tune(args: &TuneArgs) -> Result<TuneReport> {
    let base = args.model.to_config();
    base.validate()?;
    if args.lambdas.is_empty() || args.alphas.is_empty() {
        return Err(CliError::Usage("lambda and alpha grids must be nonempty".into()));
    }
    let iterations = args.iterations.clone().unwrap_or_else(|| vec![base.max_iterations]);
    if iterations.is_empty() {
        return Err(CliError::Usage("iteration grid must be nonempty".into()));
    }
    let (train, validation) = training_data(&args.data, true, base.seed)?;
    let validation = validation.expect("tuning always has validation data");
    let support = build_support(&train);

    let mut grid = Vec::new();
    for &lambda in &args.lambdas {
        for &alpha in &args.alphas {
            for &max_iterations in &iterations {
                grid.push(RunConfig {
                    lambda,
                    alpha,
                    max_iterations,
                    ..base.clone()
                });
            }
        }
    }
    let results: Vec<Result<(StoredModel, TrainingLog, f64)>> = grid
        .par_iter()
        .map(|config| {
            config.validate()?;
            let (model, log) = train_model(config, &train, Some(&validation), &support)?;
            let f1 = score(config, config.prediction, &model, Some(&support), &validation)?;
            log::info!("lambda={} alpha={} iterations={}: validation F1 {f1:.4}", config.lambda, config.alpha, config.max_iterations);
            Ok((model, log, f1))
        })
        .collect();

    let mut cells = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, (config, result)) in grid.iter().zip(&results).enumerate() {
        let (validation_f1, chosen_iteration, error) = match result {
            Ok((_, log, f1)) => {
                if best.is_none_or(|(_, b)| *f1 > b) {
                    best = Some((i, *f1));
                }
                (Some(*f1), Some(log.chosen_iteration), None)
            }
            Err(e) => {
                log::warn!("grid cell lambda={} alpha={} failed: {e}", config.lambda, config.alpha);
                (None, None, Some(e.to_string()))
            }
        };
        cells.push(GridCell {
            lambda: config.lambda,
            log10_lambda: config.lambda.log10(),
            alpha: config.alpha,
            max_iterations: config.max_iterations,
            validation_f1,
            chosen_iteration,
            error,
        });
    }
    let report = TuneReport {
        classifier: base.classifier,
        prediction: base.prediction.to_string(),
        cells,
        best: best.map(|(i, _)| i),
    };
    write_json(&report, &args.out)?;
    let mut outputs: Vec<&Path> = vec![&args.out];
    if let (Some(path), Some((i, _))) = (&args.save_best, best) {
        let (model, log, _) = results[i].as_ref().map_err(|e| CliError::Usage(e.to_string()))?;
        let archive = archive_for(model.clone(), &grid[i], &args.data.train, log);
        save_model(&archive, path)?;
        outputs.push(path);
    }
    write_manifest("tune", base.seed, &base, &outputs)?;
    match best {
        Some((i, f1)) => println!(
            "best cell: lambda={} alpha={} iterations={} validation F1 {f1:.4}",
            grid[i].lambda, grid[i].alpha, grid[i].max_iterations
        ),
        None => return Err(CliError::Usage("every grid cell failed".into())),
    }
    Ok(report)
}

/// Archive paths are recorded as given; relative ones may also be relative
/// to the archive's own directory.
fn resolve_recorded(path: &str, archive: &Path) -> PathBuf {
    let candidate = PathBuf::from(path);
    if candidate.is_relative() && !candidate.exists() {
        if let Some(dir) = archive.parent() {
            let beside = dir.join(&candidate);
            if beside.exists() {
                return beside;
            }
        }
    }
    candidate
}

fn needs_support(strategy: Strategy, kind: &str) -> bool {
    match strategy {
        Strategy::SupportMap | Strategy::SupportGfm => kind != "lsf",
        Strategy::Map => kind == "cbm" || kind == "crf",
        Strategy::SampleGfm => false,
    }
}

pub fn cmd_predict(args: &PredictArgs) -> Result<Vec<LabelVector>> {
    let archive = load_model(&args.model)?;
    let meta = &archive.metadata;
    let kind = archive.model.kind();
    let parse_meta = |key: &str| meta.get(key).map(String::as_str);
    let mut config = RunConfig {
        classifier: kind.parse()?,
        ..RunConfig::default()
    };
    if let Some(p) = parse_meta("prediction") {
        config.prediction = p.parse()?;
    }
    let number = |key: &str| -> Result<Option<u64>> {
        parse_meta(key)
            .map(|v| v.parse::<u64>().map_err(|_| CliError::Usage(format!("archive metadata {key}={v} is not a number"))))
            .transpose()
    };
    config.beam_width = args.beam_width.or(number("beam_width")?.map(|v| v as usize)).unwrap_or(config.beam_width);
    config.sample_count = args.sample_count.or(number("sample_count")?.map(|v| v as usize)).unwrap_or(config.sample_count);
    config.seed = args.seed.or(number("seed")?).unwrap_or(config.seed);
    if let Some(p) = args.prediction {
        config.prediction = p;
    }
    config.validate()?;

    let data = parse_dataset(&args.data)?;
    let support: Option<SupportSet> = if needs_support(config.prediction, kind) {
        let source = match (&args.support_data, parse_meta("train_path")) {
            (Some(path), _) => path.clone(),
            (None, Some(recorded)) => resolve_recorded(recorded, &args.model),
            (None, None) => {
                return Err(CliError::Usage(format!(
                    "strategy {} needs a support; pass --support-data",
                    config.prediction
                )))
            }
        };
        let source_data = parse_dataset(&source)?;
        Some(build_support(&source_data))
    } else {
        None
    };
    let predictions = predict_all(&config, config.prediction, &archive.model, support.as_ref(), data.instances())?;
    write_predictions(&predictions, &args.out)?;
    write_manifest("predict", config.seed, &config, &[&args.out])?;
    println!("wrote {} predictions ({})", predictions.len(), config.prediction);
    Ok(predictions)
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalJson {
    pub instance_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub subset_accuracy: f64,
    pub hamming_loss: f64,
    pub n_instances: usize,
}

/// Label sets of a truth file, which is either a dataset (rows contain a tab)
/// or a label-list file.
fn read_truth(path: &Path) -> Result<(Vec<Vec<usize>>, Option<usize>)> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    let is_dataset = text
        .lines()
        .any(|line| line.starts_with("#meta") || line.contains('\t'));
    if is_dataset {
        let data = parse_dataset_str(&text, path)?;
        let lists = data.labels().iter().map(|y| y.labels().to_vec()).collect();
        Ok((lists, Some(data.num_labels())))
    } else {
        Ok((parse_label_lists(&text, path)?, None))
    }
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalJson> {
    let (truth, declared) = read_truth(&args.truth)?;
    let predicted = read_label_lists(&args.predictions)?;
    if truth.len() != predicted.len() {
        return Err(CliError::Usage(format!(
            "{} true label sets but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let largest = truth.iter().chain(&predicted).flatten().map(|&l| l + 1).max().unwrap_or(1);
    let l = declared.unwrap_or(0).max(largest);
    let to_vectors = |lists: &[Vec<usize>]| -> Result<Vec<LabelVector>> {
        lists.iter().map(|ids| Ok(LabelVector::new(l, ids.iter().copied())?)).collect()
    };
    let report = evaluate(&to_vectors(&truth)?, &to_vectors(&predicted)?)?;
    let json = EvalJson {
        instance_f1: report.mean_instance_f1,
        precision: report.mean_precision,
        recall: report.mean_recall,
        subset_accuracy: report.subset_accuracy,
        hamming_loss: report.hamming_loss,
        n_instances: report.n_instances,
    };
    match &args.out {
        Some(path) => {
            write_json(&json, path)?;
            write_manifest("eval", 0, serde_json::json!({"truth": args.truth, "predictions": args.predictions}), &[path])?;
            println!("instance F1 {:.6} over {} instances", json.instance_f1, json.n_instances);
        }
        None => println!("{}", serde_json::to_string_pretty(&json)?),
    }
    Ok(json)
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeReport {
    pub kind: String,
    pub num_labels: usize,
    pub num_features: usize,
    pub byte_size: usize,
    pub nonzero_weight_count: usize,
    pub selected_feature_count: usize,
    pub mean_nonzero_per_label: f64,
}

pub fn cmd_model_size(args: &ModelSizeArgs) -> Result<SizeReport> {
    let archive = load_model(&args.model)?;
    let stats = archive_stats(&archive)?;
    let report = SizeReport {
        kind: archive.model.kind().to_string(),
        num_labels: archive.model.num_labels(),
        num_features: archive.model.num_features(),
        byte_size: stats.byte_size,
        nonzero_weight_count: stats.nonzero_weight_count,
        selected_feature_count: stats.selected_feature_count,
        mean_nonzero_per_label: stats.mean_nonzero_per_label,
    };
    match &args.out {
        Some(path) => {
            write_json(&report, path)?;
            write_manifest("model-size", 0, serde_json::json!({"model": args.model}), &[path])?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct TruthJson<'a> {
    cluster_ids: &'a [usize],
    cluster_labels: Vec<&'a [usize]>,
    cluster_optional: Vec<&'a [usize]>,
    optional_label_rate: f64,
    cluster_features: &'a [Vec<usize>],
    noise_features: &'a [usize],
    noise_rate: f64,
}

pub fn synthetic_spec(args: &GenSyntheticArgs) -> SyntheticSpec {
    SyntheticSpec {
        noise_rate: args.noise_rate,
        irrelevant_feature_fraction: args.irrelevant_fraction,
        seed: args.seed,
        max_labels_per_cluster: args.max_labels,
        features_per_row: args.features_per_row,
        signal_fraction: args.signal_fraction,
        optional_labels_per_cluster: args.optional_labels,
        optional_label_rate: args.optional_rate,
        ..SyntheticSpec::new(args.n, args.d, args.l, args.clusters)
    }
}

pub fn cmd_gen_synthetic(args: &GenSyntheticArgs) -> Result<()> {
    let spec = synthetic_spec(args);
    let data = generate_synthetic(&spec)?;
    write_dataset(&data.dataset, &args.out)?;
    let truth = &data.truth;
    let truth_path = sidecar(&args.out, "truth.json");
    write_json(
        &TruthJson {
            cluster_ids: &truth.cluster_ids,
            cluster_labels: truth.cluster_labels.iter().map(|y| y.labels()).collect(),
            cluster_optional: truth.cluster_optional.iter().map(|y| y.labels()).collect(),
            optional_label_rate: truth.optional_label_rate,
            cluster_features: &truth.cluster_features,
            noise_features: &truth.noise_features,
            noise_rate: truth.noise_rate,
        },
        &truth_path,
    )?;
    write_manifest(
        "gen-synthetic",
        spec.seed,
        serde_json::json!({
            "n": spec.n, "d": spec.d, "l": spec.l, "clusters": spec.k_true,
            "noise_rate": spec.noise_rate, "irrelevant_fraction": spec.irrelevant_feature_fraction,
            "features_per_row": spec.features_per_row, "signal_fraction": spec.signal_fraction,
            "max_labels": spec.max_labels_per_cluster,
            "optional_labels": spec.optional_labels_per_cluster, "optional_rate": spec.optional_label_rate,
        }),
        &[&args.out, &truth_path],
    )?;
    println!("wrote {} rows to {}", spec.n, args.out.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationReport<'a> {
    lambdas: &'a [f64],
    alphas: &'a [f64],
    seeds: &'a [u64],
    table: &'a AblationTable,
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<AblationTable> {
    let base = args.model.to_config();
    let (rest, test) = match (&args.data, &args.train, &args.test) {
        (Some(path), _, _) => split_train_validation(&parse_dataset(path)?, args.test_fraction, args.split_seed)?,
        (None, Some(train), Some(test)) => {
            let (train, test) = (parse_dataset(train)?, parse_dataset(test)?);
            check_compatible(&train, &test, "test data")?;
            (train, test)
        }
        _ => return Err(CliError::Usage("pass --data, or --train with --test".into())),
    };
    let (train, validation) = match &args.validation {
        Some(path) => {
            let validation = parse_dataset(path)?;
            check_compatible(&rest, &validation, "validation data")?;
            (rest, validation)
        }
        None => split_train_validation(&rest, args.validation_fraction, args.split_seed.wrapping_add(1))?,
    };
    let mut rows: Vec<RowSpec> = args.classifiers.iter().map(|&c| RowSpec::new(c)).collect();
    if args.crf_nopair {
        rows.push(RowSpec {
            classifier: Classifier::Crf,
            crf_pairwise: false,
        });
    }
    let plan = AblationPlan {
        rows,
        combos: args.combos.iter().map(|c| c.parse()).collect::<Result<Vec<Letters>>>()?,
        lambdas: args.lambdas.clone(),
        alphas: args.alphas.clone(),
        seeds: if args.no_average { vec![base.seed] } else { args.seeds.clone() },
        base,
    };
    let table = run_ablation(&plan, &Splits::new(train, validation, test))?;
    write_json(
        &AblationReport {
            lambdas: &plan.lambdas,
            alphas: &plan.alphas,
            seeds: &plan.seeds,
            table: &table,
        },
        &args.out,
    )?;
    write_manifest("ablate", args.split_seed, &plan.base, &[&args.out])?;
    print!("{}", table.render());
    Ok(table)
}
