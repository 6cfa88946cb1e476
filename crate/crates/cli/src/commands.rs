use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use eduvae::analytics::{
    difficulty, difficulty_baselines, quality_report, spearman, topic_ranking, write_topic_tsv, DifficultyReport, DifficultyScheme,
};
use eduvae::baselines::{fit_irt, IrtConfig};
use eduvae::data::{
    hold_out_targets, ingest_csv, matrix_records, preprocess, split_students, write_csv, CsvSchema, QuestionMeta, SparseAnswerMatrix,
    StudentSplit,
};
use eduvae::eval::{evaluate_imputation, IrtPredictor, MajorityPredictor, PVaePredictor, Predictor, RandomPredictor};
use eduvae::pvae::{train, Checkpoint, FeatureCache, TrainConfig};
use eduvae::rng;
use eduvae::selection::{
    evaluate_strategies, run_session, CandidatePool, EvaluationConfig, ReplayOracle, Strategy, StrategyConfig,
};
use eduvae::synth::{generate_ground_truth, read_question_tsv, sample_answers, ObservationModel, QuestionTruth};

use crate::{Cli, Command, DataArgs, DifficultyArgs, EvalArgs, ModelArgs, QualityArgs, SelectArgs, SynthArgs, TrainArgs};

pub const METHODS: [&str; 4] = ["pvae", "irt", "random", "majority"];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(eduvae::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(eduvae::Error::InvalidArgument(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<eduvae::Error> for CliError {
    fn from(e: eduvae::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => synth(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval(a, seed),
        Command::Difficulty(a) => difficulty_cmd(a, seed),
        Command::Quality(a) => quality(a, seed),
        Command::Select(a) => select(a, seed),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Report sink: the given file or stdout.
fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_matrix(d: &DataArgs) -> Result<SparseAnswerMatrix> {
    let ingested = ingest_csv(&d.answers, &CsvSchema::default())?;
    if ingested.skipped > 0 {
        log::warn!("skipped {} malformed rows of {}", ingested.skipped, d.answers.display());
    }
    let m = preprocess(&ingested.records, d.min_question_answers, d.min_student_answers)?;
    log::info!("{} students × {} questions, {} answers", m.n_students(), m.n_questions(), m.n_observed());
    Ok(m)
}

struct Loaded {
    matrix: SparseAnswerMatrix,
    checkpoint: Checkpoint,
    split: StudentSplit,
}

/// Matrix plus checkpoint; the split is rebuilt from the training seed and
/// ratios so the test students match the ones held out at training time.
fn load(io: &ModelArgs, seed: u64) -> Result<Loaded> {
    let matrix = load_matrix(&io.data)?;
    let checkpoint = Checkpoint::load(&io.model)?;
    if checkpoint.question_ids != matrix.question_ids() {
        return Err(usage(format!(
            "--answers: question set ({} questions) does not match the checkpoint ({} questions)",
            matrix.n_questions(),
            checkpoint.question_ids.len()
        )));
    }
    let (split_seed, ratios) = match &checkpoint.split {
        Some(s) => (s.seed, s.ratios),
        None => (checkpoint.config.as_ref().map_or(seed, |c| c.seed), [0.8, 0.1, 0.1]),
    };
    let split = split_students(matrix.n_students(), ratios, split_seed)?;
    Ok(Loaded { matrix, checkpoint, split })
}

fn synth(a: SynthArgs, seed: u64) -> Result<()> {
    let obs = match a.bandwidth {
        Some(bandwidth) => ObservationModel::AbilityBiased { density: a.density, bandwidth },
        None => ObservationModel::Mcar { density: a.density },
    };
    obs.validate()?;
    let truth = generate_ground_truth(a.students, a.questions, seed)?;
    let sample = sample_answers(&truth, &obs, seed)?;
    fs::create_dir_all(&a.out_dir)?;
    let mut w = create(&a.out_dir.join("answers.csv"))?;
    write_csv(&mut w, &matrix_records(&sample.matrix))?;
    w.flush()?;
    let mut w = create(&a.out_dir.join("questions.tsv"))?;
    truth.write_question_tsv(&mut w)?;
    w.flush()?;
    let mut w = create(&a.out_dir.join("students.tsv"))?;
    truth.write_student_tsv(&mut w)?;
    w.flush()?;
    log::info!("wrote {} answers to {}", sample.matrix.n_observed(), a.out_dir.display());
    Ok(())
}

fn train_cmd(a: TrainArgs, seed: u64) -> Result<()> {
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        latent_dim: a.latent_dim,
        embedding_dim: a.embedding_dim,
        pointwise_dim: a.pointwise_dim,
        hidden_dim: a.hidden_dim,
        dropout: (0.0, a.max_dropout),
        mc_samples: a.mc_samples,
        seed,
    };
    config.validate()?;
    let ratios = [a.split[0], a.split[1], a.split[2]];
    let matrix = load_matrix(&a.data)?;
    let split = split_students(matrix.n_students(), ratios, seed)?;
    let outcome = train(&matrix, &split, &config)?;

    let checkpoint = Checkpoint {
        model: outcome.model,
        config: Some(config),
        question_ids: matrix.question_ids().to_vec(),
        split: Some(eduvae::pvae::SplitRecord { seed, ratios }),
    };
    checkpoint.save(&a.out)?;
    let trace_path = a.trace.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".trace.tsv");
        p.into()
    });
    let mut w = create(&trace_path)?;
    writeln!(w, "epoch\ttrain_elbo\tvalidation_elbo")?;
    for e in &outcome.trace {
        writeln!(w, "{}\t{}\t{}", e.epoch, e.train_elbo, e.validation_elbo)?;
    }
    w.flush()?;
    Ok(())
}

fn eval(a: EvalArgs, seed: u64) -> Result<()> {
    for m in &a.methods {
        if !METHODS.contains(&m.as_str()) {
            return Err(usage(format!("--methods: unknown method `{m}` (expected one of {})", METHODS.join(", "))));
        }
    }
    if !(a.conditioning_fraction > 0.0 && a.conditioning_fraction < 1.0) {
        return Err(usage(format!("--conditioning-fraction must lie in (0, 1), got {}", a.conditioning_fraction)));
    }
    if a.samples == 0 {
        return Err(usage("--samples must be ≥ 1"));
    }
    let irt_config = IrtConfig { epochs: a.irt_epochs, learning_rate: a.irt_learning_rate, l2: a.irt_l2 };
    irt_config.validate()?;
    let l = load(&a.io, seed)?;
    let mut out = sink(&a.io.out)?;
    writeln!(out, "method\taccuracy\tmae\tn_targets\tn_students")?;
    for m in &a.methods {
        let scores = match m.as_str() {
            "pvae" => {
                let p = PVaePredictor { model: &l.checkpoint.model, samples: a.samples };
                evaluate_imputation(&p, &l.matrix, &l.split.test, a.conditioning_fraction, seed)?
            }
            "irt" => {
                let params = fit_irt(&l.matrix, &l.split, &irt_config)?;
                evaluate_imputation(&IrtPredictor { params: &params }, &l.matrix, &l.split.test, a.conditioning_fraction, seed)?
            }
            "random" => evaluate_imputation(&RandomPredictor, &l.matrix, &l.split.test, a.conditioning_fraction, seed)?,
            _ => {
                let p = MajorityPredictor::fit(&l.matrix, &l.split.train)?;
                evaluate_imputation(&p, &l.matrix, &l.split.test, a.conditioning_fraction, seed)?
            }
        };
        writeln!(out, "{m}\t{}\t{}\t{}\t{}", scores.accuracy, scores.mae, scores.n_targets, scores.n_students)?;
    }
    out.flush()?;
    Ok(())
}

fn read_truth(path: &Path) -> Result<HashMap<String, QuestionTruth>> {
    let rows = read_question_tsv(BufReader::new(File::open(path)?))?;
    Ok(rows.into_iter().map(|t| (t.question_id.clone(), t)).collect())
}

/// Spearman correlation over the questions present in both `ids` and the
/// truth table.
fn spearman_vs_truth(ids: &[String], scores: &[f64], truth: &HashMap<String, QuestionTruth>, pick: fn(&QuestionTruth) -> f64) -> Result<f64> {
    let (mut s, mut t) = (Vec::new(), Vec::new());
    for (id, &v) in ids.iter().zip(scores) {
        if let Some(q) = truth.get(id) {
            s.push(v);
            t.push(pick(q));
        }
    }
    if s.len() < ids.len() {
        log::warn!("{} questions have no ground-truth row", ids.len() - s.len());
    }
    Ok(spearman(&s, &t)?.unwrap_or(f64::NAN))
}

fn difficulty_report(scheme: &str, l: &Loaded, samples: usize, seed: u64) -> Result<DifficultyReport> {
    Ok(match scheme {
        "pvae" => difficulty(&l.checkpoint.model, &l.matrix, samples, seed)?,
        other => {
            let scheme: DifficultyScheme = other.parse().map_err(|_| usage(format!("--scheme: unknown scheme `{other}`")))?;
            difficulty_baselines(&l.matrix, scheme, seed)?
        }
    })
}

fn difficulty_cmd(a: DifficultyArgs, seed: u64) -> Result<()> {
    if a.samples == 0 {
        return Err(usage("--samples must be ≥ 1"));
    }
    let valid = a.scheme == "pvae" || a.scheme.parse::<DifficultyScheme>().is_ok();
    if !valid {
        return Err(usage(format!("--scheme: unknown scheme `{}`", a.scheme)));
    }
    let l = load(&a.io, seed)?;
    let report = difficulty_report(&a.scheme, &l, a.samples, seed)?;
    let mut out = sink(&a.io.out)?;
    report.write_tsv(&mut out)?;
    if let Some(path) = &a.truth {
        let truth = read_truth(path)?;
        for scheme in ["pvae", "observed", "majority", "random"] {
            let r = if scheme == a.scheme { report.clone() } else { difficulty_report(scheme, &l, a.samples, seed)? };
            let rho = spearman_vs_truth(&r.question_ids, &r.difficulty, &truth, |q| q.difficulty)?;
            writeln!(out, "#spearman\t{scheme}\t{rho}")?;
        }
    }
    out.flush()?;
    if let (Some(meta), Some(topics_out)) = (&a.meta, &a.topics_out) {
        let meta = QuestionMeta::read(File::open(meta)?, &l.matrix)?;
        let ranking = topic_ranking(&report, &meta)?;
        let mut w = create(topics_out)?;
        write_topic_tsv(&ranking, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn quality(a: QualityArgs, seed: u64) -> Result<()> {
    if a.samples == 0 {
        return Err(usage("--samples must be ≥ 1"));
    }
    let l = load(&a.io, seed)?;
    let report = quality_report(&l.checkpoint.model, &l.matrix, a.samples, seed)?;
    let mut out = sink(&a.io.out)?;
    report.write_tsv(&mut out)?;
    if let Some(path) = &a.truth {
        let truth = read_truth(path)?;
        let r = spearman_vs_truth(&report.question_ids, &report.reward, &truth, |q| q.discrimination)?;
        let e = spearman_vs_truth(&report.question_ids, &report.entropy, &truth, |q| q.discrimination)?;
        writeln!(out, "#spearman\tR\t{r}")?;
        writeln!(out, "#spearman\tentropy\t{e}")?;
    }
    out.flush()?;
    Ok(())
}

fn select(a: SelectArgs, seed: u64) -> Result<()> {
    let strategies: Vec<Strategy> = a
        .strategies
        .iter()
        .map(|s| s.parse().map_err(|_| usage(format!("--strategies: unknown strategy `{s}`"))))
        .collect::<Result<_>>()?;
    let pool = match a.pool.as_str() {
        "answerable" => CandidatePool::Answerable,
        "all" => CandidatePool::All,
        other => return Err(usage(format!("--pool: expected `answerable` or `all`, got `{other}`"))),
    };
    if a.impute_samples == 0 {
        return Err(usage("--impute-samples must be ≥ 1"));
    }
    if !(a.target_fraction > 0.0 && a.target_fraction < 1.0) {
        return Err(usage(format!("--target-fraction must lie in (0, 1), got {}", a.target_fraction)));
    }
    let strategy = StrategyConfig { steps: a.steps, reward_samples: a.reward_samples, pool, seed };
    strategy.validate()?;
    let l = load(&a.io, seed)?;
    let model = &l.checkpoint.model;
    let imputer = PVaePredictor { model, samples: a.impute_samples };
    let mut out = sink(&a.io.out)?;
    match &a.session {
        Some(id) => {
            let i = l.matrix.student_index(id).ok_or_else(|| usage(format!("--session: unknown student `{id}`")))?;
            let (cond, targets) = hold_out_targets(l.matrix.row(i), a.target_fraction, rng::derive(seed, &[rng::HOLDOUT, i as u64]))?;
            let cache = FeatureCache::new(model);
            let session = run_session(model, &cache, &imputer as &dyn Predictor, i, &ReplayOracle { row: &cond }, targets, &strategy)?;
            session.write_tsv(l.matrix.question_ids(), &mut out)?;
        }
        None => {
            let config = EvaluationConfig { strategy, runs: a.runs, students_per_run: a.students_per_run, target_fraction: a.target_fraction };
            let table = evaluate_strategies(model, &imputer, &l.matrix, &l.split.test, &strategies, &config)?;
            table.write_tsv(&mut out)?;
        }
    }
    out.flush()?;
    Ok(())
}
