use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use reachzono::surrogate::FeedbackMode;
use reachzono::sysim::CVariant;
use reachzono_cli::{load, run_all, run_stage, CliResult, Overrides, Stage};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StageArg {
    Simulate,
    BuildModel,
    FitContext,
    Propagate,
    Tighten,
    GenLabels,
    InitWeights,
    Predict,
    Calibrate,
    Evaluate,
    Report,
    /// Every stage in order.
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CArg {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeedbackArg {
    Raw,
    Inflated,
}

/// Data-driven output reachability with a calibrated transformer surrogate.
#[derive(Debug, Parser)]
#[command(name = "reachzono", version)]
struct Cli {
    #[arg(value_enum)]
    stage: StageArg,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `paths.out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `seeds.master`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output matrix of the reference system.
    #[arg(long, value_enum)]
    c_variant: Option<CArg>,
    /// What the surrogate feeds back into its context.
    #[arg(long, value_enum)]
    feedback: Option<FeedbackArg>,
}

fn run(cli: &Cli) -> CliResult<()> {
    let overrides = Overrides {
        seed: cli.seed,
        c_variant: cli.c_variant.map(|c| match c {
            CArg::A => CVariant::A,
            CArg::B => CVariant::B,
            CArg::C => CVariant::C,
        }),
        feedback: cli.feedback.map(|f| match f {
            FeedbackArg::Raw => FeedbackMode::Raw,
            FeedbackArg::Inflated => FeedbackMode::Inflated,
        }),
        out: cli.out.clone(),
    };
    let exp = load(&cli.config, &overrides)?;
    let stage = match cli.stage {
        StageArg::All => {
            for m in run_all(&exp)? {
                println!("{}: {} outputs", m.stage, m.outputs.len());
            }
            return Ok(());
        }
        StageArg::Simulate => Stage::Simulate,
        StageArg::BuildModel => Stage::BuildModel,
        StageArg::FitContext => Stage::FitContext,
        StageArg::Propagate => Stage::Propagate,
        StageArg::Tighten => Stage::Tighten,
        StageArg::GenLabels => Stage::GenLabels,
        StageArg::InitWeights => Stage::InitWeights,
        StageArg::Predict => Stage::Predict,
        StageArg::Calibrate => Stage::Calibrate,
        StageArg::Evaluate => Stage::Evaluate,
        StageArg::Report => Stage::Report,
    };
    let m = run_stage(&exp, stage)?;
    for (path, sum) in &m.outputs {
        println!("{path} {sum}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("reachzono: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
