//! Command-line front end: train/decode single models, calibrate score
//! sets, run the word and session benchmarks, and print session
//! statistics. All heavy lifting lives in the library; this binary only
//! parses arguments, wires files to library calls, and maps errors to
//! exit statuses (0 success, 2 input error, 3 model/data mismatch).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use neurocrf::data::ocr::load_ocr;
use neurocrf::data::sessions::{
    label_entropy_at_position, label_entropy_for_length, length_histogram, load_events,
    segment_sessions,
};
use neurocrf::data::synthetic::{
    synthetic_ocr, synthetic_sessions, SyntheticOcrConfig, SyntheticSessionsConfig,
};
use neurocrf::error::Error;
use neurocrf::evaluation::{evaluate_scored, fit_calibration};
use neurocrf::harness::ocr::run_ocr_benchmark;
use neurocrf::harness::report::write_benchmark_output;
use neurocrf::harness::sessions::{
    prepare_session_experiments, run_sessions_benchmark, write_session_manifests,
    SessionPipelineConfig,
};
use neurocrf::harness::BenchmarkConfig;
use neurocrf::model::NeuroCrfModel;
use neurocrf::training::{train, TrainConfig};
use neurocrf::types::Architecture;

#[derive(Parser)]
#[command(name = "neurocrf", version, about = "Neural CRF sequence authentication toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct HyperArgs {
    /// Learning rate.
    #[arg(long)]
    eta: Option<f64>,
    /// Weight-elimination strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// Cap on training sequence presentations.
    #[arg(long)]
    max_examples: Option<usize>,
}

impl HyperArgs {
    fn apply(&self, hyper: &mut neurocrf::types::HyperParams) {
        if let Some(eta) = self.eta {
            hyper.learning_rate = eta;
        }
        if let Some(lambda) = self.lambda {
            hyper.regularization = lambda;
        }
        if let Some(max) = self.max_examples {
            hyper.max_sgd_examples = max;
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// Architectures to benchmark (repeatable); default all three.
    #[arg(long = "arch", value_parser = parse_arch)]
    arch: Vec<Architecture>,
    /// Iterations per model.
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    /// Base seed; per-unit seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for tables, manifests and plot data.
    #[arg(long, default_value = "neurocrf-out")]
    out_dir: PathBuf,
    /// Bounded worker count; default uses all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Restrict to these model ids (words or users).
    #[arg(long = "only", value_delimiter = ',')]
    only: Vec<String>,
    #[command(flatten)]
    hyper: HyperArgs,
}

impl BenchArgs {
    fn to_config(&self) -> BenchmarkConfig {
        let mut config = BenchmarkConfig::default();
        if !self.arch.is_empty() {
            config.architectures = self.arch.clone();
        }
        config.iterations = self.iterations;
        config.base_seed = self.seed;
        config.workers = self.workers;
        if !self.only.is_empty() {
            config.model_filter = Some(self.only.clone());
        }
        self.hyper.apply(&mut config.hyper);
        config
    }
}

fn parse_arch(s: &str) -> Result<Architecture, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on an OCR-format corpus and save it.
    Train {
        /// Corpus in the tab-separated letter format.
        #[arg(long)]
        data: PathBuf,
        /// Train only on instances of this word (becomes the model id).
        #[arg(long)]
        word: Option<String>,
        /// Model id when no --word is given.
        #[arg(long, default_value = "model")]
        model_id: String,
        #[arg(long = "arch", value_parser = parse_arch, default_value = "crf-mlp")]
        arch: Architecture,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "neurocrf-out")]
        out_dir: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Decode every sequence of an OCR-format file with a saved model.
    Decode {
        /// Saved model file.
        #[arg(long)]
        model: PathBuf,
        /// Sequences in the tab-separated letter format.
        #[arg(long)]
        data: PathBuf,
    },
    /// Fit a score threshold from self/non-self score files (one score
    /// per line) and report the rates on those same scores.
    Calibrate {
        #[arg(long = "self")]
        self_scores: PathBuf,
        #[arg(long = "nonself")]
        nonself_scores: PathBuf,
    },
    /// Word-authentication benchmark on an OCR-format corpus.
    BenchmarkOcr {
        /// Corpus path; omit with --synthetic.
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Generate the standard-shape synthetic corpus instead.
        #[arg(long)]
        synthetic: bool,
        /// Seed of the synthetic corpus (not the experiment seed).
        #[arg(long, default_value_t = 0)]
        synthetic_seed: u64,
        /// Pixel-flip noise of the synthetic corpus (defaults to the
        /// generator's standard setting).
        #[arg(long)]
        synthetic_noise: Option<f64>,
        /// Only words of exactly this length.
        #[arg(long)]
        length: Option<usize>,
        /// Impostor sample size per experiment.
        #[arg(long, default_value_t = 100)]
        nonself: usize,
        /// Train fraction of each word's instances.
        #[arg(long, default_value_t = 2.0 / 3.0)]
        ratio: f64,
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// User-authentication benchmark on a session event log.
    BenchmarkSessions {
        /// Event log (`user,timestamp,label,text` header); omit with
        /// --synthetic.
        #[arg(long, conflicts_with = "synthetic")]
        data: Option<PathBuf>,
        /// Generate the five-user synthetic log instead.
        #[arg(long)]
        synthetic: bool,
        /// Seed of the synthetic log (not the experiment seed).
        #[arg(long, default_value_t = 0)]
        synthetic_seed: u64,
        /// Session-ending pause in seconds.
        #[arg(long, default_value_t = neurocrf::data::sessions::SESSION_GAP_SECONDS)]
        gap_seconds: u64,
        /// Fraction of each user's sequences in the train period.
        #[arg(long, default_value_t = 0.9)]
        train_fraction: f64,
        #[command(flatten)]
        bench: BenchArgs,
    },
    /// Session statistics of an event log: length histogram and label
    /// entropy by position and by session length.
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = neurocrf::data::sessions::SESSION_GAP_SECONDS)]
        gap_seconds: u64,
    },
}

fn exit_status(err: &Error) -> u8 {
    match err {
        Error::DimensionMismatch { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_status(&err))
        }
    }
}

fn run(command: Command) -> neurocrf::Result<()> {
    match command {
        Command::Train {
            data,
            word,
            model_id,
            arch,
            seed,
            out_dir,
            hyper,
        } => cmd_train(data, word, model_id, arch, seed, out_dir, hyper),
        Command::Decode { model, data } => cmd_decode(model, data),
        Command::Calibrate {
            self_scores,
            nonself_scores,
        } => cmd_calibrate(self_scores, nonself_scores),
        Command::BenchmarkOcr {
            data,
            synthetic,
            synthetic_seed,
            synthetic_noise,
            length,
            nonself,
            ratio,
            bench,
        } => cmd_benchmark_ocr(
            data,
            synthetic,
            synthetic_seed,
            synthetic_noise,
            length,
            nonself,
            ratio,
            bench,
        ),
        Command::BenchmarkSessions {
            data,
            synthetic,
            synthetic_seed,
            gap_seconds,
            train_fraction,
            bench,
        } => cmd_benchmark_sessions(
            data,
            synthetic,
            synthetic_seed,
            gap_seconds,
            train_fraction,
            bench,
        ),
        Command::Stats { data, gap_seconds } => cmd_stats(data, gap_seconds),
    }
}

fn cmd_train(
    data: PathBuf,
    word: Option<String>,
    model_id: String,
    arch: Architecture,
    seed: u64,
    out_dir: PathBuf,
    hyper: HyperArgs,
) -> neurocrf::Result<()> {
    let corpus = load_ocr(&data)?;
    let (dataset, id) = match word {
        Some(word) => {
            let instances: Vec<_> = corpus
                .sequences
                .iter()
                .filter(|s| neurocrf::data::ocr::sequence_word(&corpus.alphabet, s) == word)
                .cloned()
                .collect();
            if instances.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "word {word:?} has no instances in {}",
                    data.display()
                )));
            }
            (corpus.with_sequences(instances)?, word)
        }
        None => (corpus, model_id),
    };

    let mut config = TrainConfig::new(arch);
    config.model_id = id.clone();
    hyper.apply(&mut config.hyper);
    let (model, report) = train(&dataset, &config, seed)?;

    std::fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;
    let model_path = out_dir.join(format!("{id}.model"));
    model.save(&model_path)?;
    let report_path = out_dir.join(format!("{id}.train.json"));
    let mut lines = String::new();
    for record in &report.trace {
        lines.push_str(&record.to_json_line());
        lines.push('\n');
    }
    std::fs::write(&report_path, lines).map_err(io_err(&report_path))?;

    println!(
        "trained {} ({}) on {} sequences: consumed {}, converged {}, final train token error {:.4}",
        id,
        arch,
        dataset.sequences.len(),
        report.sequences_consumed,
        report.converged,
        report.final_train_token_error
    );
    println!("model: {}", model_path.display());
    println!("report: {}", report_path.display());
    Ok(())
}

fn cmd_decode(model_path: PathBuf, data: PathBuf) -> neurocrf::Result<()> {
    let model = NeuroCrfModel::load(&model_path)?;
    let dataset = load_ocr(&data)?;
    for seq in &dataset.sequences {
        let result = neurocrf::decoder::viterbi(&model, &seq.observations)?;
        let labels: Vec<&str> = result
            .labels
            .iter()
            .map(|&i| model.alphabet().label(i).unwrap_or("?"))
            .collect();
        println!(
            "{}\t{}\t{}\t{}",
            seq.sequence_id,
            labels.join(""),
            result.score,
            result.probability
        );
    }
    Ok(())
}

fn read_scores(path: &PathBuf) -> neurocrf::Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut scores = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        scores.push(line.parse::<f64>().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: format!("bad score: {e}"),
        })?);
    }
    Ok(scores)
}

fn cmd_calibrate(self_path: PathBuf, nonself_path: PathBuf) -> neurocrf::Result<()> {
    let self_scores = read_scores(&self_path)?;
    let nonself_scores = read_scores(&nonself_path)?;
    let calibration = fit_calibration(&self_scores, &nonself_scores)?;
    // Rates on the fitting scores themselves; token accuracy is not
    // defined here, so the combined F column is omitted.
    let report = evaluate_scored(&self_scores, &nonself_scores, 100.0)?;
    println!("slope {}", calibration.slope);
    println!("intercept {}", calibration.intercept);
    println!("threshold {}", calibration.threshold);
    println!("r_square {}", calibration.r_square);
    println!("frr {}", report.frr);
    println!("far {}", report.far);
    println!("accuracy {}", report.accuracy);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_benchmark_ocr(
    data: Option<PathBuf>,
    synthetic: bool,
    synthetic_seed: u64,
    synthetic_noise: Option<f64>,
    length: Option<usize>,
    nonself: usize,
    ratio: f64,
    bench: BenchArgs,
) -> neurocrf::Result<()> {
    let corpus = match (&data, synthetic) {
        (Some(path), _) => load_ocr(path)?,
        (None, true) => {
            let mut config = SyntheticOcrConfig::default();
            config.seed = synthetic_seed;
            if let Some(noise) = synthetic_noise {
                config.noise = noise;
            }
            synthetic_ocr(&config)?
        }
        (None, false) => {
            return Err(Error::InvalidArgument(
                "either --data or --synthetic is required".into(),
            ))
        }
    };
    let mut config = bench.to_config();
    config.length_filter = length;
    config.nonself_count = nonself;
    config.train_ratio = ratio;

    let output = run_ocr_benchmark(&corpus, &config)?;
    write_benchmark_output(&bench.out_dir, &output)?;
    print_summary(&output, &bench.out_dir);
    Ok(())
}

fn cmd_benchmark_sessions(
    data: Option<PathBuf>,
    synthetic: bool,
    synthetic_seed: u64,
    gap_seconds: u64,
    train_fraction: f64,
    bench: BenchArgs,
) -> neurocrf::Result<()> {
    let events = match (&data, synthetic) {
        (Some(path), _) => load_events(path)?,
        (None, true) => {
            let mut config = SyntheticSessionsConfig::default();
            config.seed = synthetic_seed;
            synthetic_sessions(&config)
        }
        (None, false) => {
            return Err(Error::InvalidArgument(
                "either --data or --synthetic is required".into(),
            ))
        }
    };
    let mut pipeline = SessionPipelineConfig::default();
    pipeline.gap_seconds = gap_seconds;
    pipeline.train_fraction = train_fraction;
    let config = bench.to_config();

    let output = run_sessions_benchmark(&events, &config, &pipeline)?;
    write_benchmark_output(&bench.out_dir, &output)?;
    let prepared = prepare_session_experiments(&events, &pipeline)?;
    write_session_manifests(&bench.out_dir, &prepared)?;
    print_summary(&output, &bench.out_dir);
    Ok(())
}

fn print_summary(output: &neurocrf::harness::BenchmarkOutput, out_dir: &PathBuf) {
    for aggregate in &output.aggregates {
        println!(
            "{}: {} models, accuracy {:.2} ± {:.2}, token accuracy {:.2} ± {:.2}, r² {:.2}",
            aggregate.architecture,
            aggregate.models,
            aggregate.mean.accuracy,
            aggregate.std.accuracy,
            aggregate.mean.token_accuracy,
            aggregate.std.token_accuracy,
            aggregate.mean.r_square
        );
    }
    for notice in &output.skipped {
        println!("skipped: {notice}");
    }
    println!("tables written to {}", out_dir.display());
}

fn cmd_stats(data: PathBuf, gap_seconds: u64) -> neurocrf::Result<()> {
    let events = load_events(&data)?;
    if events.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{} holds no events",
            data.display()
        )));
    }
    let mut by_user: std::collections::BTreeMap<&str, Vec<_>> = std::collections::BTreeMap::new();
    for event in &events {
        by_user.entry(&event.user).or_default().push(event.clone());
    }
    let mut sessions = Vec::new();
    for user_events in by_user.values() {
        sessions.extend(segment_sessions(user_events, gap_seconds));
    }

    println!("users {}", by_user.len());
    println!("events {}", events.len());
    println!("sessions {}", sessions.len());
    println!("length histogram:");
    let histogram = length_histogram(&sessions);
    for (length, count) in &histogram {
        println!("  {length} {count}");
    }
    println!("label entropy by position (bits):");
    let max_len = histogram.keys().max().copied().unwrap_or(0);
    for position in 0..max_len {
        match label_entropy_at_position(&sessions, position) {
            Ok(h) => println!("  {position} {h:.4}"),
            Err(_) => break,
        }
    }
    println!("label entropy by session length (bits):");
    for length in histogram.keys() {
        if let Ok(h) = label_entropy_for_length(&sessions, *length) {
            println!("  {length} {h:.4}");
        }
    }
    Ok(())
}

fn io_err(path: &PathBuf) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}
