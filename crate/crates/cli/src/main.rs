//! `trackpatch`: runs tracking, attack and defense experiments from one
//! TOML config and writes CSV/JSON artifacts.
//!
//! Exit codes: 0 success, 1 user error (bad flags, config or input),
//! 2 internal failure.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trackpatch::error::Error;
use trackpatch::experiment::{self as exp, ExperimentConfig, REFERENCE_CONFIG};
use trackpatch::tracker::Profile;

#[derive(Parser)]
#[command(name = "trackpatch", version, about = "Kalman-filter MOT attack and defense workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the reference configuration with every default.
    InitConfig {
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track every input trace; writes trajectories.csv and frames.jsonl.
    Track(Common),
    /// Track and score against ground truth with CLEAR metrics.
    Evaluate(Common),
    /// Attack every trace and compare runs with and without the patch.
    Attack(Common),
    /// Attack under each defense variant and quantile.
    Ablate(Common),
    /// Monte-Carlo study of deviation growth.
    Theory(Common),
    /// Time tracking with the patch off and on.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// jia2d | apollo2d | ab3dmot | apollo3d
    #[arg(long)]
    profile: Option<String>,
    /// off | on | full | gaussian | elimination | outlier-unaware | axis-unaware
    #[arg(long)]
    defense: Option<String>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    jobs: Option<usize>,
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::Io(_)
            | Error::MalformedRow { .. }
            | Error::NonContiguousFrames { .. }
            | Error::NoTarget
            | Error::TargetAbsent { .. }
            | Error::TargetNotTracked { .. }
            | Error::NoFeasibleLambda
            | Error::EmptyGroundTruth
            | Error::UnitsMismatch => Failure::User(e.to_string()),
            other => Failure::Internal(other.to_string()),
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output.dir = o.clone();
    }
    if let Some(p) = &c.profile {
        cfg.profile = Profile::parse(p).ok_or_else(|| Failure::User(format!("unknown profile {p:?}")))?;
    }
    if let Some(d) = &c.defense {
        cfg.defense = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(dir: &Path, written: &[PathBuf]) {
    println!("wrote {} files to {}", written.len(), dir.display());
}

fn run(command: Command) -> Result<(), Failure> {
    let common = match &command {
        Command::InitConfig { out } => {
            match out {
                Some(p) => std::fs::write(p, REFERENCE_CONFIG)
                    .map_err(|e| Failure::User(format!("{}: {e}", p.display())))?,
                None => print!("{REFERENCE_CONFIG}"),
            }
            return Ok(());
        }
        Command::Track(c)
        | Command::Evaluate(c)
        | Command::Attack(c)
        | Command::Ablate(c)
        | Command::Theory(c)
        | Command::Bench(c) => c,
    };
    let cfg = load_config(common)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Internal(e.to_string()))?;
    pool.install(|| execute(&command, &cfg))
}

fn execute(command: &Command, cfg: &ExperimentConfig) -> Result<(), Failure> {
    let dir = cfg.output.dir.as_path();
    let written = match command {
        Command::InitConfig { .. } => unreachable!("handled before config loading"),
        Command::Track(_) => {
            let traces = exp::load_traces(cfg)?;
            let runs = exp::track(cfg, &traces)?;
            let files = [
                ("trajectories.csv", exp::trajectories_csv(&runs, cfg.dims())),
                ("frames.jsonl", exp::frame_log(&runs)),
            ];
            exp::write_artifacts(cfg, "track", dir, &files)?
        }
        Command::Evaluate(_) => {
            let traces = exp::load_traces(cfg)?;
            let runs = exp::track(cfg, &traces)?;
            let rep = exp::evaluate_runs(cfg, &traces, &runs)?;
            if let Some(a) = &rep.aggregate {
                println!("MOTA {:.4}  MOTP {:.4}  F1 {:.4}  MT {:.3}  ML {:.3}", a.mota, a.motp, a.f1, a.mt, a.ml);
            }
            let files = [("evaluate.json", exp::to_json(&rep)), ("evaluate.csv", exp::eval_csv(&rep))];
            exp::write_artifacts(cfg, "evaluate", dir, &files)?
        }
        Command::Attack(_) | Command::Ablate(_) => {
            let traces = exp::load_traces(cfg)?;
            let (name, rep) = if matches!(command, Command::Attack(_)) {
                ("attack", exp::attack_eval(cfg, &traces)?)
            } else {
                ("ablate", exp::ablate(cfg, &traces)?)
            };
            for s in &rep.skipped {
                eprintln!("skipped {}: {}", s.trace, s.reason);
            }
            if rep.traces.is_empty() {
                return Err(Failure::User("no trace could be attacked".into()));
            }
            print!("{}", exp::summary_csv(&rep));
            let files = [
                (format!("{name}.json"), exp::to_json(&rep)),
                (format!("{name}.csv"), exp::attack_csv(&rep)),
                ("summary.csv".to_string(), exp::summary_csv(&rep)),
                ("plot.csv".to_string(), exp::plot_csv(&rep)),
            ];
            let files: Vec<(&str, String)> = files.iter().map(|(n, b)| (n.as_str(), b.clone())).collect();
            exp::write_artifacts(cfg, name, dir, &files)?
        }
        Command::Theory(_) => {
            let rep = exp::run_theory(cfg)?;
            for r in &rep.reports {
                println!("{:<12} mean D10 {:.4}  mean D11 {:.4}  ratio {:.2}", r.layout, r.mean_d10, r.mean_d11, r.ratio);
            }
            let files = [("theory.csv", exp::theory_csv(&rep)), ("theory.json", exp::theory_json(&rep))];
            exp::write_artifacts(cfg, "theory", dir, &files)?
        }
        Command::Bench(_) => {
            let traces = exp::load_traces(cfg)?;
            let rep = exp::bench(cfg, &traces)?;
            for r in &rep.rows {
                println!("{:<12} defense {:<3} {:>5} frames  {:.4} s  {:.0} fps", r.trace, r.defense, r.frames, r.seconds, r.fps);
            }
            let files = [("bench.csv", exp::bench_csv(&rep)), ("bench.json", exp::to_json(&rep))];
            exp::write_artifacts(cfg, "bench", dir, &files)?
        }
    };
    report(dir, &written);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
    }
}
