mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "sigrec", version, about = "Recover Objective-C method signatures from stripped headers")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load a workspace directory and print a summary.
    Ingest {
        #[arg(long)]
        workspace: PathBuf,
    },
    /// Lint method declarations, one per line (`ORIGINAL => CANDIDATE` to
    /// check the selector against an original).
    Lint {
        file: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run inference over every ambiguous method of a workspace.
    Infer(InferArgs),
    /// Build a benchmark manifest from ground-truth and stripped headers.
    BenchBuild(BenchBuildArgs),
    /// Score traces against a benchmark manifest.
    BenchEval(BenchEvalArgs),
    /// Print a stored report.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Scripted,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Json,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long)]
    pub workspace: PathBuf,
    #[arg(long, value_enum, default_value_t = BackendKind::Scripted)]
    pub backend: BackendKind,
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub max_turns: Option<usize>,
    #[arg(long)]
    pub pool_size: Option<usize>,
    /// `medium=X,low=Y`
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON agent configuration (lint settings, weights, budgets).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub no_tools: bool,
    #[arg(long)]
    pub no_feedback: bool,
    #[arg(long)]
    pub stable_stop: bool,
}

#[derive(Args, Debug)]
pub struct BenchBuildArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long)]
    pub stripped: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub n_per_bin: usize,
    #[arg(long, default_value_t = 0.70)]
    pub eval_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to --seed.
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub include_oversize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchEvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// traces.jsonl from `infer`; without it the stripped types are scored as is.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Score every sampled framework, not only the eval split.
    #[arg(long)]
    pub all_splits: bool,
    /// Also score matched methods that have no ambiguous position.
    #[arg(long)]
    pub all_methods: bool,
    #[arg(long)]
    pub count_redundant: bool,
    #[arg(long, default_value_t = 10)]
    pub stability_k: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            return report(CliError::Usage(first));
        }
    };
    let res = match cli.cmd {
        Command::Ingest { workspace } => commands::ingest(&workspace),
        Command::Lint { file, config, json } => commands::lint(&file, config.as_deref(), json),
        Command::Infer(a) => commands::infer(&a),
        Command::BenchBuild(a) => commands::bench_build(&a),
        Command::BenchEval(a) => commands::bench_eval(&a),
        Command::Report { report, format } => commands::report(&report, format),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    let line = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{line}");
    ExitCode::from(e.exit_code())
}
