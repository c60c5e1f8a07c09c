//! Command-line front end. The binary only calls [`main`].

pub mod config;
pub mod refine;
pub mod synth;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::denoiser::protocol::{serve, Fault};
use crate::evalblend::{eval_permuted, EvalReport};
use crate::pipeline::{prepare, Scene};
use crate::schedule::{default_sigma_max, NoiseSchedule, ScheduleKind, DEFAULT_SIGMA_MIN, DEFAULT_STEPS};
use crate::signal::read_wav;
use crate::{Error, Result};

pub use config::{Manifest, RunConfig};
pub use refine::{refine_command, RefineOptions};
pub use synth::synth_command;

pub const LOG_ENV: &str = "DDRM_REFINE_LOG";

#[derive(Debug, Parser)]
#[command(name = "ddrm-refine", version, about = "Refine source-separation outputs by posterior sampling")]
pub struct Cli {
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine every scene of a run config (or re-run a manifest).
    Refine {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `sampler.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Scenes processed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic scene and a refine config for it.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the spec's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score estimates against references under the best permutation.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        estimates: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        references: Vec<PathBuf>,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the noise schedule and whether it covers the measurement noise.
    ScheduleCheck(ScheduleCheck),
    /// Identity denoiser speaking the wire protocol, for testing.
    ProtocolEcho {
        /// `tcp:HOST:PORT` or `unix:PATH`; stdin/stdout when absent.
        #[arg(long)]
        listen: Option<String>,
        /// none, bad-magic, truncate, shape, silent, exit
        #[arg(long, default_value = "none")]
        fault: Fault,
        /// Exit after the first connection.
        #[arg(long)]
        once: bool,
    },
}

#[derive(Debug, Args)]
pub struct ScheduleCheck {
    /// Take schedule and noise from a run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_kind, default_value = "geometric")]
    kind: ScheduleKind,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    steps: usize,
    #[arg(long, default_value_t = DEFAULT_SIGMA_MIN)]
    sigma_min: f64,
    #[arg(long)]
    sigma_max: Option<f64>,
    /// Largest spectral measurement noise std to check against.
    #[arg(long, default_value_t = 0.0)]
    sigma_bar: f64,
}

fn parse_kind(s: &str) -> std::result::Result<ScheduleKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown schedule kind `{s}`"))
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, level)).init();
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Refine { config, seed, jobs, out } => {
            let summary = refine_command(&config, &RefineOptions { seed, jobs, output: out })?;
            println!("{}", summary.output_dir.display());
            Ok(())
        }
        Command::Synth { config, out } => {
            let path = synth_command(&config, out.as_deref())?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Eval { estimates, references, out } => {
            let report = eval_command(&estimates, &references)?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidInput(e.to_string()))?;
            if let Some(p) = out {
                std::fs::write(p, format!("{text}\n"))?;
            }
            println!("{text}");
            Ok(())
        }
        Command::ScheduleCheck(args) => schedule_check(&args, &mut std::io::stdout().lock()),
        Command::ProtocolEcho { listen, fault, once } => protocol_echo(listen.as_deref(), fault, once),
    }
}

pub fn eval_command(estimates: &[PathBuf], references: &[PathBuf]) -> Result<EvalReport> {
    if estimates.len() != references.len() {
        return Err(Error::config(
            "references",
            format!("{} estimates but {} references", estimates.len(), references.len()),
        ));
    }
    let read = |p: &[PathBuf]| p.iter().map(read_wav).collect::<Result<Vec<_>>>();
    eval_permuted(&read(estimates)?, &read(references)?)
}

fn schedule_check(args: &ScheduleCheck, out: &mut impl Write) -> Result<()> {
    let mut rows: Vec<(String, NoiseSchedule, f64)> = Vec::new();
    match &args.config {
        Some(path) => {
            let cfg = RunConfig::load(path)?;
            let settings = cfg.settings();
            for s in &cfg.scenes {
                let read_all = |p: &[PathBuf]| p.iter().map(read_wav).collect::<Result<Vec<_>>>();
                let scene = Scene {
                    mixture: s.mixture.as_ref().map(read_wav).transpose()?,
                    estimates: read_all(&s.estimates)?,
                    references: None,
                };
                let sigma_bar = prepare(&scene, &settings)?.max_sigma_bar;
                rows.push((s.name.clone(), settings.sampler.schedule.resolve(sigma_bar)?, sigma_bar));
            }
        }
        None => {
            let hi = args.sigma_max.unwrap_or_else(|| default_sigma_max(args.sigma_bar));
            let schedule = NoiseSchedule::build(args.kind, args.steps, args.sigma_min, hi)?;
            rows.push(("-".into(), schedule, args.sigma_bar));
        }
    }
    let mut infeasible = None;
    for (name, schedule, sigma_bar) in &rows {
        writeln!(out, "# scene {name}: {:?}, T = {}", schedule.kind, schedule.steps())?;
        writeln!(out, "t\tsigma_t")?;
        for (t, s) in schedule.sigmas().iter().enumerate() {
            writeln!(out, "{t}\t{s:.6e}")?;
        }
        let ok = schedule.is_feasible(*sigma_bar);
        writeln!(
            out,
            "# max sigma_bar = {sigma_bar:.6e}, sigma_T = {:.6e}: {}",
            schedule.sigma_max(),
            if ok { "feasible" } else { "INFEASIBLE" }
        )?;
        if !ok && infeasible.is_none() {
            infeasible = Some(Error::ScheduleTooSmall {
                component: 0,
                sigma_max: schedule.sigma_max(),
                sigma_bar: *sigma_bar,
            });
        }
    }
    infeasible.map_or(Ok(()), Err)
}

fn echo(frame: crate::denoiser::protocol::Frame) -> crate::denoiser::protocol::Frame {
    frame
}

fn protocol_echo(listen: Option<&str>, fault: Fault, once: bool) -> Result<()> {
    let wrap = |e| Error::Protocol { step: 0, source: e };
    let Some(addr) = listen else {
        let n = serve(std::io::stdin().lock(), std::io::stdout().lock(), fault, echo).map_err(wrap)?;
        log::info!("protocol-echo: served {n} frames");
        return Ok(());
    };
    #[cfg(unix)]
    if let Some(path) = addr.strip_prefix("unix:") {
        let listener = std::os::unix::net::UnixListener::bind(path)?;
        announce(&format!("unix:{path}"))?;
        for stream in listener.incoming() {
            let stream = stream?;
            let reader = stream.try_clone()?;
            if once {
                serve(reader, stream, fault, echo).map_err(wrap)?;
                return Ok(());
            }
            std::thread::spawn(move || log_result(serve(reader, stream, fault, echo)));
        }
        return Ok(());
    }
    let listener = std::net::TcpListener::bind(addr.strip_prefix("tcp:").unwrap_or(addr))?;
    announce(&format!("tcp:{}", listener.local_addr()?))?;
    for stream in listener.incoming() {
        let stream = stream?;
        stream.set_nodelay(true)?;
        let reader = stream.try_clone()?;
        if once {
            serve(reader, stream, fault, echo).map_err(wrap)?;
            return Ok(());
        }
        std::thread::spawn(move || log_result(serve(reader, stream, fault, echo)));
    }
    Ok(())
}

/// First stdout line of a listening server: the address to connect to.
fn announce(addr: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "listening on {addr}")?;
    out.flush()?;
    Ok(())
}

fn log_result(r: std::result::Result<u64, crate::denoiser::protocol::ProtocolError>) {
    match r {
        Ok(n) => log::info!("protocol-echo: connection closed after {n} frames"),
        Err(e) => log::warn!("protocol-echo: {e}"),
    }
}

/// Parses arguments as the binary would, for tests and examples.
pub fn parse_from<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verbs_parse() {
        for args in [
            vec!["x", "refine", "--config", "a.json", "--jobs", "2", "--seed", "3"],
            vec!["x", "synth", "--config", "s.json"],
            vec!["x", "eval", "--estimates", "a.wav", "b.wav", "--references", "c.wav", "d.wav"],
            vec!["x", "schedule-check", "--kind", "linear-beta", "--steps", "10"],
            vec!["x", "-v", "protocol-echo", "--fault", "truncate"],
        ] {
            parse_from(args.clone()).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
        assert!(parse_from(["x", "protocol-echo", "--fault", "nope"]).is_err());
    }

    #[test]
    fn schedule_check_table_and_feasibility() {
        let args = ScheduleCheck {
            config: None,
            kind: ScheduleKind::Geometric,
            steps: 2,
            sigma_min: 0.01,
            sigma_max: Some(1.0),
            sigma_bar: 0.5,
        };
        let mut buf = Vec::new();
        schedule_check(&args, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("1\t1.000000e-1"));
        assert!(text.contains("feasible"));
        let tight = ScheduleCheck { sigma_bar: 2.0, ..args };
        let err = schedule_check(&tight, &mut Vec::new()).unwrap_err();
        assert_eq!(err.exit_code(), 5);
    }
}
