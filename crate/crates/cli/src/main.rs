//! `prefaudit`: one entry point for every pipeline step.
//!
//! Exit codes: 0 success, 1 findings or validation failures, 2 usage,
//! configuration or I/O errors.

mod commands;
mod io;
mod train;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;

#[derive(Debug, Parser)]
#[command(name = "prefaudit", version, about = "Explainable smart-contract vulnerability detection at desk scale")]
struct Cli {
    /// Data root: default location of outputs, and fallback for relative inputs.
    #[arg(long, env = "PREFAUDIT_DATA_DIR", default_value = "data", global = true)]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Drop near-duplicate sources that share a file name.
    Dedup(commands::DedupArgs),
    /// Run the pattern scanner; exits 1 when anything is found.
    Scan(commands::ScanArgs),
    /// Generate candidate explanations with the offline template generators.
    Gen(commands::GenArgs),
    /// Score candidates and select one explanation per contract.
    Score(commands::ScoreArgs),
    /// Assemble the fine-tuning JSONL from labeled contracts and reviewed explanations.
    BuildSft(commands::BuildSftArgs),
    /// Validate preference pairs and emit the preference JSONL.
    BuildDpo(commands::BuildDpoArgs),
    /// Train one stage or the whole pre-train / fine-tune / preference pipeline.
    Train(train::TrainArgs),
    /// Score predictions against gold labels.
    Eval(commands::EvalArgs),
    /// Run the review service.
    Serve(commands::ServeArgs),
    /// Find the confusion matrices consistent with printed metrics.
    Reconstruct(commands::ReconstructArgs),
    /// Check a dataset manifest for internal consistency.
    Manifest(commands::ManifestArgs),
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let data = cli.data_dir.as_path();
    match cli.command {
        Command::Dedup(a) => commands::dedup_cmd(data, a),
        Command::Scan(a) => commands::scan_cmd(data, a),
        Command::Gen(a) => commands::gen_cmd(data, a),
        Command::Score(a) => commands::score_cmd(data, a),
        Command::BuildSft(a) => commands::build_sft_cmd(data, a),
        Command::BuildDpo(a) => commands::build_dpo_cmd(data, a),
        Command::Train(a) => train::run(data, a).map(|()| Outcome::Clean),
        Command::Eval(a) => commands::eval_cmd(data, a),
        Command::Serve(a) => commands::serve_cmd(data, a),
        Command::Reconstruct(a) => commands::reconstruct_cmd(a),
        Command::Manifest(a) => commands::manifest_cmd(data, a),
    }
}

fn main() -> ExitCode {
    // clap exits 2 on usage errors and 0 on --help / --version by itself.
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(io::exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
