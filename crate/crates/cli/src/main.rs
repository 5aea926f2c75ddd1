mod config;

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fracsync::harness::{
    report_range, run_sweep, write_trials, Algorithm, SweepParam, SweepSpec, TrialEngine,
};
use fracsync::sync::Synchronizer;
use fracsync::ComplexSignal;

use config::{parse_algorithms, parse_grid, ExperimentArgs, FileConfig};

#[derive(Parser)]
#[command(
    name = "fracsync",
    version,
    about = "Chirp-based frame and frequency synchronization experiments"
)]
struct Cli {
    /// TOML file with the same keys as the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte-Carlo trials at one operating point and write one row per trial.
    Trial {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        trials: Option<u64>,
        /// `all` or a comma-separated list: proposed, schmidl-cox, correlation.
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep one parameter and write aggregated statistics.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// phi2opt, ts-length, cfo or osnr.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values or start:step:stop.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        algorithm: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write trial-level rows here.
        #[arg(long)]
        trials_out: Option<PathBuf>,
        /// Run on one thread.
        #[arg(long)]
        serial: bool,
    },
    /// Print the CFO range of the configured training sequence.
    Range {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Time shift within the block; defaults to the frame offset's residue.
        #[arg(long, allow_hyphen_values = true)]
        delta_t: Option<f64>,
    },
    /// Training-sequence utilities.
    Ts {
        #[command(subcommand)]
        command: TsCommand,
    },
    /// Write one received frame (proposed training sequence) after the channel.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0)]
        trial_id: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Estimate frame offset and CFO of a received signal.
    Estimate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// Blocks to search; defaults to the experiment's frame.
        #[arg(long)]
        block_count: Option<usize>,
    },
}

#[derive(Subcommand)]
enum TsCommand {
    /// Write the 4-QAM training symbols.
    Export {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

/// Sample file layout.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// `index,real,imag` rows.
    Csv,
    /// Interleaved little-endian f64 pairs.
    Raw,
}

impl Format {
    fn resolve(given: Option<Format>, path: Option<&Path>) -> Format {
        given.unwrap_or(match path.and_then(|p| p.extension()) {
            Some(ext) if ext == "csv" => Format::Csv,
            Some(_) => Format::Raw,
            None => Format::Csv,
        })
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_signal(signal: &ComplexSignal, path: Option<&Path>, format: Option<Format>) -> Result<()> {
    let mut w = output(path)?;
    match Format::resolve(format, path) {
        Format::Csv => signal.write_csv(&mut w)?,
        Format::Raw => signal.write_f64le(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let algorithms = |flag: &Option<String>| {
        parse_algorithms(
            flag.as_deref()
                .or(file.algorithm.as_deref())
                .unwrap_or("all"),
        )
    };
    match &cli.command {
        Command::Trial {
            exp,
            trials,
            algorithm,
            out,
        } => {
            let engine = TrialEngine::new(exp.experiment(&file)?)?;
            let trials = trials.or(file.trials).unwrap_or(1);
            let mut reports = Vec::new();
            for a in algorithms(algorithm)? {
                for i in 0..trials {
                    reports.push(engine.run(a, i)?);
                }
            }
            let mut w = output(out.as_deref().or(file.out.as_deref()))?;
            write_trials(&reports, &mut w)?;
            w.flush()?;
        }
        Command::Sweep {
            exp,
            param,
            grid,
            trials,
            algorithm,
            out,
            trials_out,
            serial,
        } => {
            let Some(param) = param.as_deref().or(file.param.as_deref()) else {
                bail!("sweep needs --param");
            };
            let grid = match (grid, &file.grid) {
                (Some(g), _) => parse_grid(g)?,
                (None, Some(g)) => g.clone(),
                (None, None) => bail!("sweep needs --grid"),
            };
            let spec = SweepSpec {
                param: param.parse::<SweepParam>()?,
                grid,
                trials: trials.or(file.trials).unwrap_or(1000),
                base: exp.experiment(&file)?,
                algorithms: algorithms(algorithm)?,
                parallel: !serial,
            };
            let result = run_sweep(&spec)?;
            let mut w = output(out.as_deref().or(file.out.as_deref()))?;
            result.write_csv(&mut w)?;
            w.flush()?;
            if let Some(p) = trials_out {
                let mut w = output(Some(p))?;
                result.write_trials_csv(&mut w)?;
                w.flush()?;
            }
        }
        Command::Range { exp, delta_t } => {
            let e = exp.experiment(&file)?;
            let range = match delta_t {
                Some(dt) => report_range(&e.geometry, *dt, e.channel.r_s)?,
                None => e.cfo_range()?,
            };
            println!("cfo_range_hz = {range}");
            println!("+-{:.3} GHz", range / 1e9);
        }
        Command::Ts {
            command: TsCommand::Export { exp, out, format },
        } => {
            let e = exp.experiment(&file)?;
            let ts = e.geometry.build(e.channel.r_s)?;
            write_signal(
                &ts.to_signal(),
                out.as_deref().or(file.out.as_deref()),
                *format,
            )?;
        }
        Command::Simulate {
            exp,
            trial_id,
            out,
            format,
        } => {
            let e = exp.experiment(&file)?;
            let rx = TrialEngine::new(e)?.received(Algorithm::Proposed, *trial_id)?;
            write_signal(&rx, out.as_deref().or(file.out.as_deref()), *format)?;
        }
        Command::Estimate {
            exp,
            input,
            format,
            block_count,
        } => {
            let e = exp.experiment(&file)?;
            let r_s = e.channel.r_s;
            let reader = BufReader::new(
                File::open(input).with_context(|| format!("opening {}", input.display()))?,
            );
            let rx = match Format::resolve(*format, Some(input)) {
                Format::Csv => ComplexSignal::read_csv(reader, r_s)?,
                Format::Raw => ComplexSignal::read_f64le(reader, r_s)?,
            };
            let ts = e.geometry.build(r_s)?;
            let n_s = e.geometry.n_s();
            let blocks = block_count
                .unwrap_or_else(|| e.block_count().min((rx.len() / n_s).saturating_sub(1)));
            let est = Synchronizer::new(&ts, e.reference)?.estimate(rx.samples(), r_s, blocks)?;
            println!("mu_hat = {}", est.mu_hat);
            println!("gamma_hat_hz = {}", est.gamma_hat);
            println!("delta_t = {}", est.delta_t);
            println!("delta_f = {}", est.delta_f);
            println!("delta_n = [{}, {}]", est.det_1.delta_n, est.det_2.delta_n);
            println!("block = {}", est.det_1.b_hat);
            println!("blocks_consistent = {}", est.blocks_consistent);
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    run(Cli::parse())
}
