use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tcav_cli::commands;
use tcav_cli::config::{self, Resolved};
use tcav_cli::report;
use tcav_core::Result;

#[derive(Debug, Parser)]
#[command(
    name = "tcav",
    version,
    about = "Concept sensitivity testing for image classifiers"
)]
struct Cli {
    /// Pipeline configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides `paths.output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write concept sets, negative pools and the synthetic dataset as PNGs.
    GenerateConcepts,
    /// Train the reference classifier and write its checkpoint.
    Train,
    /// Dump layer activations (and class gradients) for the chosen split.
    DumpActivations {
        /// Comma-separated layer names; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<String>>,
    },
    /// Train CAVs and compute TCAV scores with significance tests.
    RunTcav,
    /// Render a results file as a table, CSV and SVG charts.
    Report {
        /// Results file; defaults to the one under the output directory.
        results: Option<PathBuf>,
    },
}

fn resolved(cli: &Cli) -> Result<Resolved> {
    config::resolve(cli.config.as_deref(), cli.seed, cli.out.as_deref())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenerateConcepts => {
            let r = resolved(cli)?;
            for (dir, n) in commands::generate_concepts(&r)? {
                println!("{n:>5} images  {}", dir.display());
            }
        }
        Command::Train => {
            let r = resolved(cli)?;
            let s = commands::train(&r)?;
            for e in &s.trace {
                match e.val_accuracy {
                    Some(va) => println!(
                        "epoch {:>3}  loss {:.4}  acc {:.3}  val acc {va:.3}",
                        e.epoch, e.train_loss, e.train_accuracy
                    ),
                    None => println!(
                        "epoch {:>3}  loss {:.4}  acc {:.3}",
                        e.epoch, e.train_loss, e.train_accuracy
                    ),
                }
            }
            println!(
                "test accuracy {:.4}  macro F1 {:.4}  ({} images)",
                s.metrics.accuracy, s.metrics.macro_f1, s.test_size
            );
            println!("checkpoint {}", r.checkpoint.display());
        }
        Command::DumpActivations { layers } => {
            let r = resolved(cli)?;
            for p in commands::dump_activations(&r, layers.clone())? {
                println!("{}", p.display());
            }
        }
        Command::RunTcav => {
            let r = resolved(cli)?;
            let doc = commands::run_tcav(&r)?;
            for w in &doc.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report::render_table(&doc));
            println!("results {}", r.results_path().display());
        }
        Command::Report { results } => {
            let (path, out_dir, cfg) = match (results, cli.config.is_some()) {
                (Some(p), false) => {
                    let dir = cli
                        .out
                        .clone()
                        .or_else(|| p.parent().map(PathBuf::from))
                        .unwrap_or_default();
                    (p.clone(), dir, Default::default())
                }
                (p, _) => {
                    let r = resolved(cli)?;
                    let path = p.clone().unwrap_or_else(|| r.results_path());
                    (path, r.output_dir.clone(), r.config.report.clone())
                }
            };
            let (doc, written) = commands::report(&path, &out_dir, &cfg)?;
            if !doc.complete {
                eprintln!(
                    "warning: {} is from an interrupted run; results are partial",
                    path.display()
                );
            }
            if doc.results.is_empty() {
                eprintln!("warning: {} holds no results", path.display());
            }
            print!("{}", report::render_table(&doc));
            for p in written {
                println!("wrote {}", p.display());
            }
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(tcav_cli::exit_code(e.kind()) as u8)
        }
    }
}
