use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

mod commands;
mod config;

#[derive(Parser, Debug)]
#[command(name = "eduvae", version, about = "Question analytics with a partial VAE")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// `key = value` file; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a 2PL synthetic answer set and its ground truth.
    Synth(SynthArgs),
    /// Train a p-VAE and write a checkpoint and ELBO trace.
    Train(TrainArgs),
    /// Held-out imputation accuracy and MAE of p-VAE and baselines.
    Eval(EvalArgs),
    /// Per-question difficulty from the imputed matrix.
    Difficulty(DifficultyArgs),
    /// Per-question quality score and the entropy baseline.
    Quality(QualityArgs),
    /// Compare question-selection strategies by target MAE.
    Select(SelectArgs),
}

const COMMANDS: [&str; 6] = ["synth", "train", "eval", "difficulty", "quality", "select"];

fn existing_file(s: &str) -> Result<PathBuf, String> {
    let p = PathBuf::from(s);
    if p.is_file() {
        Ok(p)
    } else {
        Err(format!("file `{s}` does not exist"))
    }
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Answer CSV with `student_id,question_id,is_correct[,timestamp]`.
    #[arg(long, value_name = "CSV", value_parser = existing_file)]
    answers: PathBuf,

    /// Drop questions with fewer answers (applied to a fixed point).
    #[arg(long, default_value_t = 0)]
    min_question_answers: usize,

    /// Drop students with fewer answers (applied to a fixed point).
    #[arg(long, default_value_t = 0)]
    min_student_answers: usize,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[command(flatten)]
    data: DataArgs,

    /// Checkpoint written by `train`.
    #[arg(long, value_name = "PATH", value_parser = existing_file)]
    model: PathBuf,

    /// Report path (default: stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    students: usize,
    #[arg(long, default_value_t = 300)]
    questions: usize,
    /// Expected share of observed entries.
    #[arg(long, default_value_t = 0.2)]
    density: f64,
    /// Ability-biased observation with this bandwidth (MCAR when absent).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Directory for `answers.csv`, `questions.tsv`, `students.tsv`.
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Checkpoint path.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// ELBO trace path (default: `<out>.trace.tsv`).
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Train / validation / test shares of the students.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    split: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    latent_dim: usize,
    #[arg(long, default_value_t = 16)]
    embedding_dim: usize,
    #[arg(long, default_value_t = 32)]
    pointwise_dim: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    /// Upper bound of the per-row conditioning dropout rate.
    #[arg(long, default_value_t = 0.7)]
    max_dropout: f64,
    #[arg(long, default_value_t = 1)]
    mc_samples: usize,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct EvalArgs {
    #[command(flatten)]
    io: ModelArgs,
    /// Any of pvae, irt, random, majority.
    #[arg(long, value_delimiter = ',', default_values_t = commands::METHODS.map(String::from))]
    methods: Vec<String>,
    /// Share of each test row given to the predictor.
    #[arg(long, default_value_t = 0.5)]
    conditioning_fraction: f64,
    /// Posterior draws per p-VAE prediction.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    #[arg(long, default_value_t = 300)]
    irt_epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    irt_learning_rate: f64,
    #[arg(long, default_value_t = 1e-4)]
    irt_l2: f64,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct DifficultyArgs {
    #[command(flatten)]
    io: ModelArgs,
    /// pvae, random, majority, or observed.
    #[arg(long, default_value = "pvae")]
    scheme: String,
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// `question_id  a  b` truth; appends a Spearman row per scheme.
    #[arg(long, value_name = "TSV", value_parser = existing_file)]
    truth: Option<PathBuf>,
    /// `question_id,topics` metadata for a topic ranking.
    #[arg(long, value_name = "CSV", value_parser = existing_file, requires = "topics_out")]
    meta: Option<PathBuf>,
    #[arg(long, value_name = "PATH", requires = "meta")]
    topics_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct QualityArgs {
    #[command(flatten)]
    io: ModelArgs,
    /// Cap on sampled answers per question.
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// `question_id  a  b` truth; appends Spearman rows for R and entropy.
    #[arg(long, value_name = "TSV", value_parser = existing_file)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
struct SelectArgs {
    #[command(flatten)]
    io: ModelArgs,
    /// Any of ours, rand, sing.
    #[arg(long, value_delimiter = ',', default_values_t = ["ours".to_string(), "rand".into(), "sing".into()])]
    strategies: Vec<String>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 100)]
    students_per_run: usize,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    target_fraction: f64,
    #[arg(long, default_value_t = 30)]
    reward_samples: usize,
    /// Posterior draws behind each target MAE.
    #[arg(long, default_value_t = 50)]
    impute_samples: usize,
    /// Candidate pool: answerable or all.
    #[arg(long, default_value = "answerable")]
    pool: String,
    /// Trace one personalized session for this student id instead.
    #[arg(long, value_name = "ID")]
    session: Option<String>,
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let args = match config::expand(raw, &COMMANDS) {
        Ok(a) => a,
        Err(e) => {
            let _ = Cli::command().error(clap::error::ErrorKind::InvalidValue, e).print();
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be ≥ 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
