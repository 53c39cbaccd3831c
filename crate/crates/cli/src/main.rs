use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pardec::aup::{compute_aup, format_curve, parse_curve, AupConfig};
use pardec::denoiser::{fit_order_policy, ngram_train, OrderPolicy};
use pardec::engine::{DecodeMode, EngineConfig};
use pardec::harness::io::{read_json, read_records, read_text, read_trajectories, to_jsonl, write_atomic, write_json};
use pardec::harness::{
    ablate, build_records, evaluate_with_transcripts, gen_corpus, load_model, parse_taus,
    record_trajectories, render_svg, run_pipeline, sweep, CorpusConfig, CorpusFile, HarnessError,
    ModelSpec, TaskSet,
};
use pardec::sequence::Schedule;

#[derive(Parser)]
#[command(name = "pardec", version, about = "Parallel decoding experiments for diffusion language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score accuracy-parallelism curves.
    Aup {
        #[command(subcommand)]
        command: AupCommand,
    },
    /// Generate synthetic corpora.
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    /// Train n-gram denoisers.
    Ngram {
        #[command(subcommand)]
        command: NgramCommand,
    },
    /// Record teacher trajectories.
    Traj {
        #[command(subcommand)]
        command: TrajCommand,
    },
    /// Build distillation records from trajectories.
    Distill {
        #[command(subcommand)]
        command: DistillCommand,
    },
    /// Fit order policies from distillation records.
    Policy {
        #[command(subcommand)]
        command: PolicyCommand,
    },
    /// Decode a task set once.
    Decode {
        #[command(subcommand)]
        command: DecodeCommand,
    },
    /// Evaluate a threshold grid and score the resulting curve.
    Sweep(SweepArgs),
    /// Run the decoding-strategy ablation grid.
    Ablate(AblateArgs),
    /// Run every stage from a pipeline config.
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
}

#[derive(Subcommand)]
enum AupCommand {
    Compute {
        /// CSV file with a `rho,acc` header.
        #[arg(long)]
        curve: PathBuf,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        alpha: f64,
        /// Best accuracy for the task; defaults to the curve maximum.
        #[arg(long, allow_negative_numbers = true)]
        ymax: Option<f64>,
        #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
        margin: f64,
        /// Print the full result as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        vocab: u32,
        #[arg(long, default_value_t = 200)]
        sequences: usize,
        /// Content tokens per sequence, EOS excluded.
        #[arg(long, default_value_t = 48)]
        len: usize,
        /// Markov order of the source.
        #[arg(long, default_value_t = 2)]
        structure: usize,
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long)]
        prompt_len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum NgramCommand {
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        order: usize,
        #[arg(long, default_value_t = 0.1)]
        smoothing: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum TrajCommand {
    Record {
        #[arg(long)]
        model: ModelSpec,
        #[arg(long)]
        tasks: PathBuf,
        /// Trajectory length; references are padded with EOS.
        #[arg(long)]
        len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum DistillCommand {
    Build {
        #[arg(long)]
        traj: PathBuf,
        /// Records per trajectory.
        #[arg(long, default_value_t = 4)]
        records: usize,
        #[arg(long, default_value_t = 0.0)]
        t_start: f64,
        #[arg(long, default_value_t = 0.8)]
        t_end: f64,
        #[arg(long, default_value_t = 16)]
        k_start: usize,
        #[arg(long, default_value_t = 32)]
        k_end: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum PolicyCommand {
    Fit {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = OrderPolicy::DEFAULT_G_MIN)]
        g_min: f64,
        #[arg(long, default_value_t = OrderPolicy::DEFAULT_G_MAX)]
        g_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long)]
    model: ModelSpec,
    /// Corpus or task-set JSON.
    #[arg(long)]
    tasks: PathBuf,
    /// Engine settings as JSON; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl EngineArgs {
    fn load(&self) -> Result<(std::sync::Arc<dyn pardec::denoiser::Denoiser>, TaskSet, EngineConfig), HarnessError> {
        let tasks: TaskSet = read_json(&self.tasks)?;
        let config = match &self.config {
            Some(p) => read_json(p)?,
            None => EngineConfig::default(),
        };
        tasks.validate(Some(config.max_len))?;
        let model = load_model(&self.model, &tasks.vocab)?;
        Ok((model, tasks, config))
    }
}

#[derive(Subcommand)]
enum DecodeCommand {
    Run {
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        mode: Option<DecodeMode>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    engine: EngineArgs,
    /// `START:END:STEP` or a comma-separated list.
    #[arg(long)]
    taus: String,
    #[arg(long, default_value_t = 3.0)]
    alpha: f64,
    #[arg(long)]
    out_curve: PathBuf,
    #[arg(long)]
    out_svg: Option<PathBuf>,
    /// Full sweep report as JSON.
    #[arg(long)]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum PipelineCommand {
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    write_atomic(path, text.as_bytes())
}

fn execute(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Aup {
            command: AupCommand::Compute { curve, alpha, ymax, margin, json },
        } => {
            let points = parse_curve(&read_text(&curve)?).map_err(|e| HarnessError::Parse {
                path: curve.clone(),
                message: e.to_string(),
            })?;
            let config = AupConfig { alpha, y_max_override: ymax, margin };
            let result = compute_aup(&points, &config)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            if json {
                println!("{}", serde_json::to_string_pretty(&result.to_json()).expect("json value"));
            } else {
                println!("AUP {:.1}", result.score);
                for p in &result.excluded {
                    eprintln!("excluded {p}");
                }
            }
        }
        Command::Corpus {
            command: CorpusCommand::Gen { seed, vocab, sequences, len, structure, tasks, prompt_len, out },
        } => {
            let corpus = gen_corpus(&CorpusConfig {
                seed,
                vocab_size: vocab,
                sequences,
                length: len,
                structure,
                tasks,
                prompt_len,
                ..Default::default()
            })?;
            write_json(&out, &corpus)?;
            eprintln!("wrote {} sequences and {} tasks to {}", corpus.sequences.len(), corpus.tasks.len(), out.display());
        }
        Command::Ngram {
            command: NgramCommand::Train { corpus, order, smoothing, out },
        } => {
            let file: CorpusFile = read_json(&corpus)?;
            let model = ngram_train(&file.sequences, order, smoothing, &file.vocab)?;
            write_json(&out, &model.to_file())?;
        }
        Command::Traj {
            command: TrajCommand::Record { model, tasks, len, seed, out },
        } => {
            let tasks: TaskSet = read_json(&tasks)?;
            let teacher = load_model(&model, &tasks.vocab)?;
            let lines = record_trajectories(teacher.as_ref(), &tasks, len, seed)?;
            write_atomic(&out, &to_jsonl(&lines))?;
        }
        Command::Distill {
            command: DistillCommand::Build { traj, records, t_start, t_end, k_start, k_end, seed, out },
        } => {
            let lines = read_trajectories(&traj)?;
            let schedule = Schedule { t_start, t_end, k_start, k_end };
            let built = build_records(&lines, &schedule, records, seed)?;
            write_atomic(&out, &to_jsonl(&built))?;
        }
        Command::Policy {
            command: PolicyCommand::Fit { records, g_min, g_max, out },
        } => {
            let (records, vocab) = read_records(&records)?;
            let policy = fit_order_policy(&records, &vocab, g_min, g_max)?;
            write_json(&out, &policy)?;
        }
        Command::Decode {
            command: DecodeCommand::Run { engine, mode, tau, seed, out },
        } => {
            let (model, tasks, mut config) = engine.load()?;
            config.mode = mode.unwrap_or(config.mode);
            config.tau = tau.unwrap_or(config.tau);
            config.seed = seed.unwrap_or(config.seed);
            let report = evaluate_with_transcripts(model.as_ref(), &tasks, &config)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_json(&out, &report)?;
            println!(
                "{} tasks: accuracy {:.1}%, TPF {:.2}, {:.2}s",
                report.tasks.len(),
                report.accuracy,
                report.mean_tpf,
                report.wall_clock_s
            );
        }
        Command::Sweep(args) => {
            let (model, tasks, config) = args.engine.load()?;
            let taus = parse_taus(&args.taus)?;
            let report = sweep(model.as_ref(), &tasks, &taus, &config, &AupConfig::with_alpha(args.alpha))?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_text(&args.out_curve, &format_curve(&report.curve))?;
            if let Some(svg) = &args.out_svg {
                write_text(svg, &render_svg(&[(&model.describe(), &report.curve)]))?;
            }
            if let Some(path) = &args.out_report {
                write_json(path, &report)?;
            }
            for row in &report.rows {
                println!("tau {:<6} TPF {:>6.2}  accuracy {:>5.1}%", row.tau, row.mean_tpf, row.accuracy);
            }
            println!("AUP {:.1}", report.aup.score);
        }
        Command::Ablate(args) => {
            let (model, tasks, config) = args.engine.load()?;
            let report = ablate(model.as_ref(), &tasks, &config)?;
            write_json(&args.out, &report)?;
            for c in &report.cells {
                println!(
                    "{:<13} early_stop={:<5} refresh={:<5} TPF {:>6.2} ({:+.1}%)  accuracy {:>5.1}% ({:+.1})",
                    c.mode.to_string(),
                    c.early_stop,
                    c.refresh,
                    c.mean_tpf,
                    c.tpf_delta_pct,
                    c.accuracy,
                    c.accuracy_delta
                );
            }
        }
        Command::Pipeline {
            command: PipelineCommand::Run { config },
        } => {
            let summary = run_pipeline(&config)?;
            println!(
                "AUP base {:.1}, policy {:.1}; {} artifacts in {}",
                summary.base_aup,
                summary.policy_aup,
                summary.manifest.artifacts.len() + 1,
                summary.output_dir.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
