//! `kinlab`: simulate pedigrees, run estimators, verify against closed forms.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kinlab::estimators::write_reports;
use kinlab::harness::{self, Cell, Scenario};
use kinlab::Error;

#[derive(Parser)]
#[command(name = "kinlab", version, about = "Intergenerational transmission simulator and estimator lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every replication and write population CSVs plus a manifest.
    Simulate(Common),
    /// Run the configured estimators on simulated or ingested tables.
    Estimate(Common),
    /// Simulate, estimate and compare with the analytic values.
    Verify(Common),
    /// Surname-size sweep and weight diagnostic.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the scenario's `output`, else `out/<name>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_IO: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) | Error::IngestAborted { .. } => EXIT_IO,
        _ => EXIT_CONFIG,
    }
}

fn create(dir: &Path, name: &str) -> kinlab::Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_cells(dir: &Path, cells: &[Cell]) -> kinlab::Result<()> {
    let reports: Vec<_> = cells.iter().map(|c| c.report.clone()).collect();
    let mut w = create(dir, "estimates.csv")?;
    write_reports(&mut w, &reports)?;
    w.flush()?;
    Ok(())
}

fn run(cmd: Command) -> Result<u8, Error> {
    let (Command::Simulate(c) | Command::Estimate(c) | Command::Verify(c) | Command::Sweep(c)) = &cmd;
    let scenario = Scenario::load(&c.config).map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", c.config.display()))),
        e => e,
    })?;
    let master = c.seed.unwrap_or_else(|| scenario.master_seed());
    let out = c
        .out
        .clone()
        .or_else(|| scenario.output.clone())
        .unwrap_or_else(|| Path::new("out").join(&scenario.name));
    harness::with_threads(c.threads, || -> Result<u8, Error> {
        match &cmd {
            Command::Simulate(_) => {
                let m = harness::write_populations(&scenario, master, &out)?;
                for e in &m.replications {
                    println!("{}\t{} rows\tseed {}", e.file, e.rows, e.seed);
                }
                Ok(0)
            }
            Command::Estimate(_) => {
                let (cells, reports) = harness::estimate_tables(&scenario, master, &out)?;
                write_cells(&out, &cells)?;
                if scenario.ingest.is_some() {
                    let mut w = create(&out, "validation.json")?;
                    serde_json::to_writer_pretty(&mut w, &reports)?;
                    w.flush()?;
                }
                let flagged = cells.iter().filter(|c| c.is_error()).count();
                println!("{} estimates ({flagged} flagged) -> {}", cells.len(), out.join("estimates.csv").display());
                Ok(0)
            }
            Command::Verify(_) => {
                let (v, cells) = harness::verify(&scenario, master)?;
                write_cells(&out, &cells)?;
                let mut w = create(&out, "verification.csv")?;
                harness::write_verification(&mut w, &v)?;
                w.flush()?;
                for r in &v.rows {
                    let status = match r.pass {
                        Some(true) => "pass",
                        Some(false) => "FAIL",
                        None => "-",
                    };
                    let analytic = r.analytic.map_or("-".to_string(), |a| format!("{a:.5}"));
                    let z = r.z.map_or("-".to_string(), |z| format!("{z:+.2}"));
                    println!(
                        "{status:4}  {:<20} {:<22} {:<14} analytic {analytic:>9}  mean {:.5}  se {:.5}  z {z}",
                        r.estimator, r.regime, r.bin, r.mc_mean, r.mc_se
                    );
                }
                println!("{} of {} checked cells failed", v.failed, v.cells);
                Ok(if v.passed { 0 } else { EXIT_VERIFY })
            }
            Command::Sweep(_) => {
                let s = harness::run_sweep(&scenario, master)?;
                let mut w = create(&out, "sweep.csv")?;
                harness::write_sweep(&mut w, &s)?;
                w.flush()?;
                println!(
                    "grouping trend p = {:.3e} ({}), direct {}",
                    s.grouping_trend_p,
                    if s.grouping_increasing { "increasing" } else { "not increasing" },
                    if s.direct_flat { "flat" } else { "not flat" }
                );
                Ok(0)
            }
        }
    })?
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("kinlab: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
