//! `fnd`: batch driver for ingest → preprocess → vectorize → train → evaluate → project.
//!
//! Exit status: 0 success, 2 usage or configuration error, 1 runtime error.

mod commands;
mod data;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fnd_core::pipeline::KernelChoice;
use fnd_core::vectorize::FeatureSpace;

#[derive(Parser, Debug)]
#[command(
    name = "fnd",
    version,
    about = "Fake-news detection with classical text features and SVMs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a vectorizer + SVM pipeline and write model.fnd and train.log.
    Train(TrainArgs),
    /// Score a held-out split; writes metrics.json, confusion.tsv and roc.tsv.
    Eval(EvalArgs),
    /// Print `label<TAB>decision<TAB>flag` for each input document.
    Predict(PredictArgs),
    /// Project documents to 2 or 3 dimensions with t-SNE; writes tsne.tsv.
    Tsne(TsneArgs),
    /// Write the stratified train/test split as train.csv and test.csv.
    Split(SplitArgs),
}

#[derive(Args, Debug, Default)]
pub struct CommonArgs {
    /// Flat key = value file; flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct DataArgs {
    /// ISOT file of real articles (title,text,subject,date).
    #[arg(long, value_name = "CSV")]
    pub data_real: Option<PathBuf>,
    /// ISOT file of fake articles (title,text,subject,date).
    #[arg(long, value_name = "CSV")]
    pub data_fake: Option<PathBuf>,
    /// Single text,label file (label 1 real, 0 fake).
    #[arg(long, value_name = "CSV")]
    pub fixture: Option<PathBuf>,
    /// Directory written by `fnd split`.
    #[arg(long, value_name = "DIR")]
    pub split_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "FND_OUT_DIR", value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct CbowArgs {
    /// Word vector dimension.
    #[arg(long)]
    pub cbow_dim: Option<usize>,
    /// Context half-width.
    #[arg(long)]
    pub cbow_window: Option<usize>,
    /// Noise samples per positive example.
    #[arg(long)]
    pub cbow_negatives: Option<usize>,
    #[arg(long)]
    pub cbow_epochs: Option<usize>,
    /// Initial learning rate.
    #[arg(long, allow_negative_numbers = true)]
    pub cbow_lr: Option<f64>,
    /// Minimum corpus frequency for a word to get a vector.
    #[arg(long)]
    pub cbow_min_count: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub cbow: CbowArgs,
    /// bow, tfidf or w2v.
    #[arg(long)]
    pub vectorizer: Option<FeatureSpace>,
    /// linear or rbf.
    #[arg(long)]
    pub kernel: Option<KernelChoice>,
    /// Misclassification penalty R.
    #[arg(long = "r", value_name = "R", allow_negative_numbers = true)]
    pub r: Option<f64>,
    /// RBF width; defaults to 1 / (d · feature variance).
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Minimum document frequency for a vocabulary term.
    #[arg(long)]
    pub min_df: Option<u64>,
    /// Fraction of each class held out for testing.
    #[arg(long, allow_negative_numbers = true)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solver stopping tolerance on the KKT violation.
    #[arg(long, allow_negative_numbers = true)]
    pub tolerance: Option<f64>,
    /// Solver iteration budget.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Log solver progress every this many iterations (0 disables).
    #[arg(long)]
    pub progress_every: Option<usize>,
    /// Stopword file, one word per line.
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// Expected feature space; refused if the model was trained on another.
    #[arg(long)]
    pub vectorizer: Option<FeatureSpace>,
    /// Expected kernel; refused if the model uses another.
    #[arg(long)]
    pub kernel: Option<KernelChoice>,
    /// Score every input document instead of the held-out half.
    #[arg(long)]
    pub all: bool,
    /// Override the split recorded in the model.
    #[arg(long, allow_negative_numbers = true)]
    pub test_fraction: Option<f64>,
    /// Override the split seed recorded in the model.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Trained model file.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    /// A document to score; repeatable.
    #[arg(long)]
    pub text: Vec<String>,
    /// File with one document per line; `-` reads standard input.
    #[arg(long, value_name = "FILE")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub vectorizer: Option<FeatureSpace>,
    #[arg(long)]
    pub kernel: Option<KernelChoice>,
}

#[derive(Args, Debug, Default)]
pub struct TsneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[command(flatten)]
    pub cbow: CbowArgs,
    /// Feature space to project (default tfidf).
    #[arg(long)]
    pub vectorizer: Option<FeatureSpace>,
    /// Reuse the vectorizer of a trained model instead of fitting one.
    #[arg(long, value_name = "FILE")]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub min_df: Option<u64>,
    /// Output dimension, 2 or 3.
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub learning_rate: Option<f64>,
    /// Maximum number of points, drawn per class.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "FILE")]
    pub stopwords: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct SplitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, allow_negative_numbers = true)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Predict(a) => commands::predict(a),
        Command::Tsne(a) => commands::tsne(a),
        Command::Split(a) => commands::split(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fnd: error {e}");
            e.exit_code()
        }
    }
}
