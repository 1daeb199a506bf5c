//! `nerfsynth`: synthesize plugin repositories from papers, run the
//! benchmark, and inspect run artifacts.
//!
//! Exit codes: 0 success, 1 run failure, 2 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "nerfsynth", version, about = "Paper-to-plugin synthesis and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a plugin repository from one paper.
    Synth(SynthArgs),
    /// Run the benchmark over a manifest of papers.
    Eval(EvalArgs),
    /// Summarize the artifacts of an earlier run.
    Inspect(InspectArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SandboxMode {
    Stub,
    Host,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Settings shared by `synth` and `eval`.
#[derive(Args, Debug)]
pub struct RunArgs {
    /// Knowledge base of paper/repository exemplars.
    #[arg(long, value_name = "DIR")]
    pub kb: Option<PathBuf>,
    /// Plugin grammar file [default: built-in grammar]
    #[arg(long, value_name = "FILE")]
    pub grammar: Option<PathBuf>,
    /// Gateway config or mock script (JSON) [default: no model]
    #[arg(long, value_name = "FILE")]
    pub llm: Option<PathBuf>,
    /// Where smoke tests run; `host` invokes $NERFSYNTH_SHIM.
    #[arg(long, value_enum, default_value_t = SandboxMode::Stub)]
    pub sandbox: SandboxMode,
    /// Smoke-test training iterations [default: 3000]
    #[arg(long, value_name = "N")]
    pub smoke_iters: Option<u64>,
    /// Critique iterations after synthesis [default: 5]
    #[arg(long, value_name = "N")]
    pub max_refine: Option<usize>,
    /// Run settings file (JSON); flags override its values.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Paper in markdown.
    #[arg(long, value_name = "FILE")]
    pub paper: PathBuf,
    /// Output directory for the repository and logs.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Evaluation PSNR to refine towards; refinement is skipped without it.
    #[arg(long, value_name = "F")]
    pub psnr_target: Option<f64>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Benchmark manifest (JSON).
    #[arg(long, value_name = "FILE")]
    pub bench: PathBuf,
    /// Judgments: a directory of `<id>.json` files or one `{id: [items]}` file.
    #[arg(long, value_name = "PATH")]
    pub judgments: Option<PathBuf>,
    /// Output directory for report.csv and report.json.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Report format printed to stdout.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// Output directory of a `synth` run.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    /// Grammar to validate the repository against [default: built-in grammar]
    #[arg(long, value_name = "FILE")]
    pub grammar: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Run(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Inspect(a) => commands::inspect(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
