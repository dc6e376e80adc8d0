//! `amc`: synthesize noisy modulated frames, render them as constellation
//! images, and train/evaluate a vision-transformer classifier over them.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on runtime errors.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::{EvalArgs, FinetuneArgs, GenerateArgs, RenderArgs, TrainArgs};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "amc",
    version,
    about = "Modulation-classification toolkit: signal synthesis, constellation imaging, \
             and a from-scratch vision-transformer classifier",
    after_help = "Relative output paths are resolved under $AMC_OUTPUT_ROOT when it is set."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled constellation-image dataset with a manifest
    Generate(GenerateArgs),
    /// Train the base classifier on a generated dataset
    Train(TrainArgs),
    /// Fine-tune a checkpoint's classifier head on a small dataset
    Finetune(FinetuneArgs),
    /// Evaluate a checkpoint; prints accuracy and macro precision/recall/F1
    Eval(EvalArgs),
    /// Render the gray, enhanced-gray, and three-channel encodings of one frame
    Render(RenderArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests print to stdout and succeed; real
            // usage errors exit 1.
            let code = u8::from(err.use_stderr());
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli.command {
        Command::Generate(args) => commands::cmd_generate(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Finetune(args) => commands::cmd_finetune(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Render(args) => commands::cmd_render(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
