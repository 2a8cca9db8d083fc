use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use transdeno_cli::commands;

/// Transform-domain dynamic soft-threshold denoising of feature maps.
#[derive(Parser)]
#[command(name = "transdeno", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate clean/noisy synthetic scene pairs plus a manifest.
    GenData {
        /// key=value scene description (H, W, C, n_targets, target_size,
        /// amplitude, background, looks, seed, count)
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the denoiser over one tensor file.
    Denoise {
        #[arg(long = "in")]
        input: PathBuf,
        /// Parameter checkpoint
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Print an evaluation report as single-line JSON (needs --clean)
        #[arg(long)]
        report: bool,
        /// Clean reference tensor for the report
        #[arg(long, requires = "report")]
        clean: Option<PathBuf>,
    },
    /// Train on a generated scene directory with plain SGD.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        /// key=value training configuration
        #[arg(long)]
        config: PathBuf,
        /// Output checkpoint path
        #[arg(long)]
        out: PathBuf,
        /// Output CSV loss history path
        #[arg(long)]
        loss_csv: PathBuf,
    },
    /// Verify analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Time the forward pass.
    Bench {
        /// Map size as CxHxW, e.g. 4x16x16
        #[arg(long)]
        size: String,
        #[arg(long)]
        iters: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData { spec, out_dir } => commands::gen_data(spec, out_dir),
        Command::Denoise {
            input,
            params,
            out,
            report,
            clean,
        } => commands::denoise(input, params, out, *report, clean.as_deref()),
        Command::Train {
            data_dir,
            config,
            out,
            loss_csv,
        } => commands::train(data_dir, config, out, loss_csv),
        Command::Gradcheck { eps, seed } => {
            return match commands::gradcheck(*eps, *seed) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(4),
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(commands::exit_code(&e) as u8)
                }
            }
        }
        Command::Bench { size, iters } => commands::bench(size, *iters),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
