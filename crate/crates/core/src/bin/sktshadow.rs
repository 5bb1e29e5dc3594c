use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sktshadow::acceptance;
use sktshadow::pipeline::{self, exit};
use sktshadow::plots::export_plots;

#[derive(Parser)]
#[command(name = "sktshadow", version, about = "Blow-up branches of the shadow cross-diffusion system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the pipeline described by a JSON config.
    Run { config: PathBuf },
    /// Run the acceptance suite and print one line per criterion.
    Verify {
        /// Grid size (power of two >= 64).
        #[arg(long, default_value_t = 256)]
        n: usize,
    },
    /// Write gnuplot data and a driver script for a finished run directory.
    Plots { dir: PathBuf },
}

fn code(c: i32) -> ExitCode {
    ExitCode::from(c as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match pipeline::run(&config) {
            Ok(report) => {
                for f in &report.summary.failures {
                    let at = f.eps.map(|e| format!(" at eps = {e:e}")).unwrap_or_default();
                    eprintln!("stage {} ({}) failed{at}: {}", f.stage, f.sign, f.error);
                }
                let passed = report.summary.checks.iter().filter(|c| c.passed).count();
                println!(
                    "{}: {} files, {passed}/{} checks passed",
                    report.out_dir.display(),
                    report.summary.files.len(),
                    report.summary.checks.len()
                );
                code(report.exit_code())
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(pipeline::exit_code(&e))
            }
        },
        Command::Verify { n } => {
            let results = match pipeline::with_pool(|| acceptance::run_all(n)) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {e}");
                    return code(pipeline::exit_code(&e));
                }
            };
            for r in &results {
                println!("{r}");
            }
            if results.iter().all(|r| r.passed) {
                code(exit::OK)
            } else {
                code(exit::ACCEPTANCE)
            }
        }
        Command::Plots { dir } => match export_plots(&dir) {
            Ok(files) => {
                for f in files {
                    println!("{f}");
                }
                code(exit::OK)
            }
            Err(e) => {
                eprintln!("error: {e}");
                code(pipeline::exit_code(&e))
            }
        },
    }
}
