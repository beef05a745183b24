use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use modejump::cli::{self, apply_overrides, compare_tsv, exit_code, humanize_tsv, run_experiment, write_csv, Report};
use modejump::config::{Algorithm, DataSource, RunConfig};
use modejump::{Error, Result};

#[derive(Parser)]
#[command(name = "modejump", version, about = "Mode jumping MCMC for Bayesian variable selection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Source {
    Example1,
    Fixture,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated dataset as CSV.
    GenData {
        #[arg(long, value_enum, default_value = "example1")]
        source: Source,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Covariates (fixture only).
        #[arg(long, default_value_t = 8)]
        p: usize,
        /// Observations (fixture only).
        #[arg(long, default_value_t = 100)]
        t: usize,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run the configured algorithm and write TSV reports.
    Run(RunArgs),
    /// Score every model exactly (small p only).
    Enumerate(RunArgs),
    /// Run MJMCMC, MC3, RS and TOP on the same budget and compare.
    Compare(RunArgs),
    /// Print the reports found in an output directory.
    Report { dir: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Config file in key=value form. Defaults to the simulated example.
    config: Option<PathBuf>,
    /// Override a config key, e.g. --set run.seed=7.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; overrides run.output.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Do not print tables.
    #[arg(long, short)]
    quiet: bool,
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("MODEJUMP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::Config(vec![format!("MODEJUMP_THREADS={v:?} is not a positive integer")]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::ResourceLimit(format!("thread pool: {e}")))
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let text = match &args.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Config(vec![format!("{}: {e}", p.display())]))?,
        None => String::new(),
    };
    let mut c = RunConfig::parse(&apply_overrides(&text, &args.overrides)?)?;
    if let Some(o) = &args.out {
        c.output = Some(o.clone());
    }
    Ok(c)
}

fn finish(report: &Report, config: &RunConfig, quiet: bool) -> Result<()> {
    if let Some(dir) = &config.output {
        for f in report.write(dir)? {
            if !quiet {
                eprintln!("wrote {}", f.display());
            }
        }
    }
    if !quiet {
        print!("{}", report.human());
    }
    Ok(())
}

fn print_dir(dir: &Path) -> Result<()> {
    let mut found = false;
    for name in ["summary.tsv", "inclusion.tsv", "models.tsv", "bias_rmse.tsv", "compare.tsv"] {
        let p = dir.join(name);
        if let Ok(text) = fs::read_to_string(&p) {
            found = true;
            println!("== {name}");
            print!("{}", humanize_tsv(&text));
            println!();
        }
    }
    if found {
        Ok(())
    } else {
        Err(Error::Data(format!("no reports in {}", dir.display())))
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData { source, seed, p, t, out } => {
            let mut c = RunConfig::example1();
            c.data = match source {
                Source::Example1 => DataSource::Example1 { seed },
                Source::Fixture => DataSource::Fixture { p, t, seed },
            };
            write_csv(&out, &cli::load_data(&c)?)
        }
        Command::Run(args) => {
            let c = load_config(&args)?;
            finish(&run_experiment(&c)?, &c, args.quiet)
        }
        Command::Enumerate(args) => {
            let mut c = load_config(&args)?;
            c.algorithm = Algorithm::Enumerate;
            finish(&run_experiment(&c)?, &c, args.quiet)
        }
        Command::Compare(args) => {
            let c = load_config(&args)?;
            let table = compare_tsv(&cli::compare(&c)?);
            if let Some(dir) = &c.output {
                fs::create_dir_all(dir)?;
                let p = dir.join("compare.tsv");
                fs::write(&p, &table)?;
                if !args.quiet {
                    eprintln!("wrote {}", p.display());
                }
            }
            if !args.quiet {
                print!("{}", humanize_tsv(&table));
            }
            Ok(())
        }
        Command::Report { dir } => print_dir(&dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
