use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sirbandit::environments::SCENARIO_NAMES;
use sirbandit::harness::{
    generate_synthetic_log, replay_all, run_experiment, synthetic_log_config, write_outputs, write_replay_csv,
    ExperimentConfig, InteractionLog, Overrides, ReplayConfig,
};
use sirbandit::Error;

#[derive(Parser)]
#[command(
    name = "sirbandit",
    version,
    about = "Particle-based Thompson sampling and Bayes-UCB bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo regret sweep and write CSVs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Evaluate policies on a logged interaction file.
    Replay {
        log: PathBuf,
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Write a synthetic logistic interaction log.
    GenLog {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// List the built-in scenarios.
    Scenarios,
}

#[derive(Args, Debug, Default)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    realizations: Option<usize>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

impl OverrideArgs {
    fn to_overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            realizations: self.realizations,
            particles: self.particles,
            horizon: self.horizon,
            output_dir: self.output_dir.clone(),
            jobs: self.jobs,
        }
    }
}

/// Exit code for a run where too many realizations aborted.
const EXIT_ABORTED: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8, Error> {
    match cmd {
        Command::Scenarios => {
            for name in SCENARIO_NAMES {
                println!("{name}");
            }
            Ok(0)
        }
        Command::Run { config, overrides } => run(&config, &overrides),
        Command::Replay { log, config, overrides } => replay(&log, &config, &overrides),
        Command::GenLog { config, overrides } => gen_log(&config, &overrides),
    }
}

fn run(path: &Path, args: &OverrideArgs) -> Result<u8, Error> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    cfg.apply(&args.to_overrides())?;
    let result = run_experiment(&cfg)?;
    let files = write_outputs(&result, &cfg.output_dir, cfg.raw_output)?;
    println!("policy\tfinal_mean_cum_regret\tstd_error\tdegenerate_events");
    for tr in &result.traces {
        println!(
            "{}\t{:.4}\t{:.4}\t{}",
            tr.policy,
            tr.final_mean(),
            tr.final_standard_error(),
            tr.degenerate_events
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    let aborted = result.aborted();
    if aborted > 0 {
        eprintln!("{aborted} of {} realizations aborted", result.realizations.len());
        for r in result.realizations.iter().filter_map(|r| r.aborted.as_ref()) {
            eprintln!("  {r}");
        }
    }
    if result.exceeds_abort_limit() {
        eprintln!("error: more than 1% of realizations aborted");
        return Ok(EXIT_ABORTED);
    }
    Ok(0)
}

fn replay(log_path: &Path, config: &Path, args: &OverrideArgs) -> Result<u8, Error> {
    let mut cfg = ReplayConfig::from_file(config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(m) = args.particles {
        if m == 0 {
            return Err(Error::Config {
                field: "experiment.particles".into(),
                message: "must be at least 1".into(),
            });
        }
        cfg.particles = m;
    }
    if let Some(d) = &args.output_dir {
        cfg.output_dir = Some(d.clone());
    }
    let log = InteractionLog::load(log_path)?;
    if log.records.is_empty() {
        return Err(Error::Config {
            field: "log".into(),
            message: "log has no records".into(),
        });
    }
    let results = replay_all(&log, &cfg)?;
    write_replay_csv(&results, std::io::stdout().lock())?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("replay.csv");
        write_replay_csv(&results, std::fs::File::create(&path)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(0)
}

fn gen_log(config: &Path, args: &OverrideArgs) -> Result<u8, Error> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::Io(format!("{}: {e}", config.display())))?;
    let (mut spec, mut output) = synthetic_log_config(&text)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(dir) = &args.output_dir {
        std::fs::create_dir_all(dir)?;
        output = dir.join(output.file_name().unwrap_or(output.as_os_str()));
    }
    let (log, _) = generate_synthetic_log(&spec)?;
    log.save(&output)?;
    println!("wrote {} records to {}", log.records.len(), output.display());
    Ok(0)
}
