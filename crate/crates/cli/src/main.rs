use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use magsteer_core::matrices::{BackactionScaling, ChannelMode};
use magsteer_core::scenario::{MeasureName, Scenario};
use magsteer_core::sweep::{self, Summary, SweepRow};
use magsteer_core::{parse_scenario, PRESETS};

#[derive(Parser, Debug)]
#[command(name = "magsteer", version, about = "Steady-state, conditional and feedback Gaussian dynamics of chirally coupled magnon modes")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Filter both ports as one channel with vector C_L + C_R.
    #[arg(long = "literal-paper-C", global = true)]
    literal_paper_c: bool,

    /// Back-action normalisation of the homodyne filter.
    #[arg(long, global = true, value_enum)]
    backaction: Option<Backaction>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Backaction {
    Sme,
    FullRate,
    Printed,
}

impl From<Backaction> for BackactionScaling {
    fn from(b: Backaction) -> Self {
        match b {
            Backaction::Sme => BackactionScaling::Sme,
            Backaction::FullRate => BackactionScaling::FullRate,
            Backaction::Printed => BackactionScaling::Printed,
        }
    }
}

#[derive(clap::Args, Debug)]
struct TableArgs {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// CSV destination (default: `output.csv` of the config, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary destination (default: `output.summary` of the config).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Measures at the configured point.
    Steady(TableArgs),
    /// Measures along the configured sweep axis.
    Sweep(TableArgs),
    /// Fidelity and ensemble measures under state-based feedback.
    Feedback(TableArgs),
    /// Seeded trajectories of the filtered means and the ensemble check.
    Trajectory {
        /// Scenario JSON file.
        #[arg(long)]
        config: PathBuf,
        /// Dump prefix; files are `<prefix>_<stream>.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `solver.trajectory.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `solver.trajectory.n_traj`.
        #[arg(long)]
        n_traj: Option<usize>,
        /// Write the ensemble report here instead of stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a built-in preset.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        /// CSV destination (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// JSON summary destination.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Also write the preset's scenario JSON.
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
}

struct Filter {
    scaling: Option<BackactionScaling>,
    flattened: bool,
}

impl Filter {
    fn apply(&self, s: &mut Scenario) {
        let scaling = self.scaling.unwrap_or(s.scaling);
        let mode = if self.flattened { ChannelMode::Flattened } else { s.channel_mode };
        s.set_filter(scaling, mode);
    }
}

fn load(path: &Path, filter: &Filter) -> Result<Scenario> {
    let mut s = parse_scenario(path).with_context(|| format!("reading scenario {}", path.display()))?;
    filter.apply(&mut s);
    Ok(s)
}

fn emit_rows(rows: &[SweepRow], measures: &[MeasureName], out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => sweep::write_csv_file(rows, measures, &p).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let stdout = std::io::stdout();
            sweep::write_csv(rows, measures, stdout.lock())?;
        }
    }
    Ok(())
}

fn emit_summary(summary: &Summary, path: Option<PathBuf>) -> Result<()> {
    if let Some(p) = path {
        summary.write_json(&p).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn pick(flag: Option<PathBuf>, config: &Option<String>) -> Option<PathBuf> {
    flag.or_else(|| config.as_ref().map(PathBuf::from))
}

fn table(args: TableArgs, filter: &Filter, command: &str) -> Result<()> {
    let s = load(&args.config, filter)?;
    let rows = match command {
        "steady" => vec![sweep::run_steady(&s)],
        "sweep" => sweep::run_sweep(&s)?,
        "feedback" => sweep::run_feedback(&s)?,
        _ => unreachable!(),
    };
    let out = &s.config.output;
    emit_rows(&rows, &out.measures, pick(args.out, &out.csv))?;
    emit_summary(&Summary::new(&s, command, &rows), pick(args.summary, &out.summary))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let filter = Filter {
        scaling: cli.backaction.map(Into::into),
        flattened: cli.literal_paper_c,
    };
    match cli.command {
        Command::Steady(a) => table(a, &filter, "steady"),
        Command::Sweep(a) => table(a, &filter, "sweep"),
        Command::Feedback(a) => table(a, &filter, "feedback"),
        Command::Trajectory {
            config,
            out,
            seed,
            n_traj,
            report,
        } => {
            let s = load(&config, &filter)?;
            let tc = &s.config.solver.trajectory;
            let seed = seed.unwrap_or(tc.seed);
            let n_traj = n_traj.unwrap_or(tc.n_traj);
            let (rep, records) = sweep::run_trajectory(&s, n_traj, seed, tc.dump)?;
            let prefix = out
                .or_else(|| s.config.output.trajectory_prefix.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("trajectory"));
            for r in &records {
                let path = PathBuf::from(format!("{}_{}.csv", prefix.display(), r.stream));
                r.write_csv_file(&path).with_context(|| format!("writing {}", path.display()))?;
            }
            let mut text = serde_json::to_string_pretty(&rep)?;
            text.push('\n');
            match report {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => std::io::stdout().lock().write_all(text.as_bytes())?,
            }
            for (stream, e) in &rep.failures {
                eprintln!("trajectory {stream}: {e}");
            }
            Ok(())
        }
        Command::Preset {
            name,
            out,
            summary,
            emit_config,
        } => {
            let scaling = filter.scaling.unwrap_or_default();
            let mode = if filter.flattened { ChannelMode::Flattened } else { ChannelMode::PerChannel };
            let run = sweep::run_preset(&name, scaling, mode)?;
            if let Some(p) = emit_config {
                std::fs::write(&p, run.config.to_json()?).with_context(|| format!("writing {}", p.display()))?;
            }
            emit_rows(&run.rows, &run.config.output.measures, out)?;
            emit_summary(&run.summary, summary)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
