//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mlreg::fpredict::Strategy;

use crate::config::{Classifier, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "mlreg", version, about = "Regularized multi-label classifiers with F1-optimal prediction")]
pub struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one classifier and save it as a model archive.
    Train(TrainArgs),
    /// Grid search over lambda, alpha and iteration limits on validation data.
    Tune(TuneArgs),
    /// Predict label sets with a saved model.
    Predict(PredictArgs),
    /// Score predictions against true label sets.
    Eval(EvalArgs),
    /// Ablation table over L1, early stopping, support inference and GFM.
    Ablate(AblateArgs),
    /// Size and sparsity of a model archive.
    ModelSize(ModelSizeArgs),
    /// Write clustered synthetic multi-label data.
    GenSynthetic(GenSyntheticArgs),
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse::<Strategy>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Classifier::Br)]
    pub classifier: Classifier,

    /// map, support-map, support-gfm or sample-gfm.
    #[arg(long, value_parser = parse_strategy, default_value = "support-gfm")]
    pub prediction: Strategy,

    /// Overall penalty strength.
    #[arg(long, default_value_t = 1e-3)]
    pub lambda: f64,

    /// L1 share of the penalty (0 is pure L2).
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,

    /// CBM mixture components.
    #[arg(long, default_value_t = 20)]
    pub components: usize,

    #[arg(long, default_value_t = mlreg::fpredict::DEFAULT_BEAM_WIDTH)]
    pub beam_width: usize,

    #[arg(long, default_value_t = mlreg::fpredict::DEFAULT_SAMPLE_COUNT)]
    pub sample_count: usize,

    /// Comma-separated label ids giving the chain order.
    #[arg(long, value_delimiter = ',')]
    pub pcc_order: Option<Vec<usize>>,

    /// Drop the CRF label-pair terms.
    #[arg(long)]
    pub no_pairwise: bool,

    /// Keep the checkpoint with the best validation F1.
    #[arg(long)]
    pub early_stop: bool,

    #[arg(long, default_value_t = 5)]
    pub patience: usize,

    #[arg(long, default_value_t = 300)]
    pub max_iterations: usize,

    #[arg(long, default_value_t = 50)]
    pub em_iterations: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl ModelArgs {
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            classifier: self.classifier,
            prediction: self.prediction,
            lambda: self.lambda,
            alpha: self.alpha,
            components: self.components,
            beam_width: self.beam_width,
            sample_count: self.sample_count,
            pcc_order: self.pcc_order.clone(),
            crf_pairwise: !self.no_pairwise,
            early_stop: self.early_stop,
            patience: self.patience,
            max_iterations: self.max_iterations,
            em_iterations: self.em_iterations,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Training dataset.
    #[arg(long)]
    pub train: PathBuf,

    /// Validation dataset; when absent it is split off the training data.
    #[arg(long)]
    pub validation: Option<PathBuf>,

    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub data: DataArgs,

    /// Model archive to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub model: ModelArgs,

    #[command(flatten)]
    pub data: DataArgs,

    #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2")]
    pub lambdas: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.9")]
    pub alphas: Vec<f64>,

    /// Iteration limits to try; defaults to --max-iterations.
    #[arg(long, value_delimiter = ',')]
    pub iterations: Option<Vec<usize>>,

    /// Grid report (JSON).
    #[arg(long)]
    pub out: PathBuf,

    /// Also save the selected model here.
    #[arg(long)]
    pub save_best: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Dataset whose rows are predicted (labels, if any, are ignored).
    #[arg(long)]
    pub data: PathBuf,

    /// Predictions file: one comma-separated label list per line.
    #[arg(long)]
    pub out: PathBuf,

    /// Overrides the strategy stored in the archive.
    #[arg(long, value_parser = parse_strategy)]
    pub prediction: Option<Strategy>,

    /// Dataset whose label sets form the support; defaults to the training
    /// data recorded in the archive.
    #[arg(long)]
    pub support_data: Option<PathBuf>,

    #[arg(long)]
    pub beam_width: Option<usize>,

    #[arg(long)]
    pub sample_count: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// True label sets: a dataset or a label-list file.
    #[arg(long)]
    pub truth: PathBuf,

    #[arg(long)]
    pub predictions: PathBuf,

    /// Report (JSON); printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Base settings; lambda, alpha and early stopping are set per cell.
    #[command(flatten)]
    pub model: ModelArgs,

    /// One dataset, split into train, validation and test.
    #[arg(long, conflicts_with_all = ["train", "test"])]
    pub data: Option<PathBuf>,

    #[arg(long, requires = "test")]
    pub train: Option<PathBuf>,

    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,

    #[arg(long)]
    pub validation: Option<PathBuf>,

    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,

    #[arg(long, default_value_t = 0.2)]
    pub validation_fraction: f64,

    /// Seed of the data splits.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,

    #[arg(long, value_delimiter = ',', default_value = "br,pcc,cbm,crf")]
    pub classifiers: Vec<Classifier>,

    /// Letter combinations such as `none`, `L+E`, `L+E+S`, `all4`.
    #[arg(long, value_delimiter = ',', default_value = "none,L,E,L+E,L+E+S,L+E+G,all4")]
    pub combos: Vec<String>,

    #[arg(long, value_delimiter = ',', default_value = "1e-5,1e-4,1e-3")]
    pub lambdas: Vec<f64>,

    #[arg(long, value_delimiter = ',', default_value = "0.5,0.9")]
    pub alphas: Vec<f64>,

    /// Runs of the randomized methods to average.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub seeds: Vec<u64>,

    /// Single run with --seed instead of averaging over --seeds.
    #[arg(long)]
    pub no_average: bool,

    /// Add a CRF row without label-pair terms.
    #[arg(long)]
    pub crf_nopair: bool,

    /// Table (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelSizeArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Report (JSON); printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,

    #[arg(long, default_value_t = 200)]
    pub d: usize,

    #[arg(long, default_value_t = 8)]
    pub l: usize,

    /// Latent clusters.
    #[arg(long, default_value_t = 12)]
    pub clusters: usize,

    /// Probability of flipping each label bit.
    #[arg(long, default_value_t = 0.0)]
    pub noise_rate: f64,

    #[arg(long, default_value_t = 0.5)]
    pub irrelevant_fraction: f64,

    #[arg(long, default_value_t = 6)]
    pub features_per_row: usize,

    #[arg(long, default_value_t = 0.4)]
    pub signal_fraction: f64,

    #[arg(long, default_value_t = 3)]
    pub max_labels: usize,

    /// Extra labels per cluster that appear at random.
    #[arg(long, default_value_t = 1)]
    pub optional_labels: usize,

    #[arg(long, default_value_t = 0.5)]
    pub optional_rate: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Dataset to write; the ground truth goes to `<out>.truth.json`.
    #[arg(long)]
    pub out: PathBuf,
}
