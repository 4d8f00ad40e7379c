use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use manet_core::report::{
    prepare_out_dir, write_energy, write_json, write_metrics_file, write_plots, write_trace,
};
use manet_core::sweep::{run_sweep, ExecMode, Scenario, SweepSpec};
use manet_core::{Protocol, ScenarioConfig, SimError, Simulator};

#[derive(Parser)]
#[command(name = "manetsim", version, about = "Deterministic MANET routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Also write trace.csv with one line per frame event.
        #[arg(long)]
        trace: bool,
        /// Also write trajectory.csv sampled once per second.
        #[arg(long)]
        trajectory: bool,
        /// Output directory (default: run-<protocol>-<nodes>-seed<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Run a preset campaign over protocols, node counts and seeds.
    Sweep {
        #[arg(long, value_parser = parse_scenario)]
        scenario: Scenario,
        /// Comma separated subset of aodv,dsdv,dsr.
        #[arg(long, value_delimiter = ',', value_parser = parse_protocol)]
        protocols: Option<Vec<Protocol>>,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        seeds: u64,
        /// Write one SVG chart per metric under plots/.
        #[arg(long)]
        plots: bool,
        /// Output directory (default: sweep-<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        /// Run points one after another instead of on all cores.
        #[arg(long)]
        sequential: bool,
    },
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

fn parse_protocol(s: &str) -> Result<Protocol, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

fn run(config: &Path, seed: u64, trace: bool, trajectory: bool, out: Option<PathBuf>, force: bool) -> Result<(), SimError> {
    let text = fs::read_to_string(config)
        .map_err(|e| SimError::Argument(format!("cannot read {}: {e}", config.display())))?;
    let cfg = ScenarioConfig::from_json(&text)?;
    let out = out.unwrap_or_else(|| PathBuf::from(format!("run-{}-{}-seed{seed}", cfg.protocol, cfg.nodes)));
    prepare_out_dir(&out, force)?;

    let sim = Simulator::new(cfg.clone(), seed)?.with_trace(trace);
    if trajectory {
        sim.mobility()
            .write_csv(fs::File::create(out.join("trajectory.csv"))?, cfg.duration_s, 1.0)?;
    }
    let result = sim.run()?;
    write_metrics_file(&out.join("metrics.csv"), std::slice::from_ref(&result.metrics))?;
    write_energy(fs::File::create(out.join("energy.csv"))?, &result.meters)?;
    if let Some(t) = &result.trace {
        write_trace(fs::File::create(out.join("trace.csv"))?, t)?;
    }
    let meta = json!({
        "tool": "manetsim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "run",
        "seed": seed,
        "config": cfg,
        "flows": result.flows,
        "counters": result.counters,
        "event_digest": format!("{:016x}", result.event_digest),
    });
    write_json(&out.join("metadata.json"), &meta)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

struct SweepArgs {
    scenario: Scenario,
    protocols: Option<Vec<Protocol>>,
    seeds: u64,
    plots: bool,
    out: Option<PathBuf>,
    force: bool,
    sequential: bool,
}

fn sweep(a: SweepArgs) -> Result<(), SimError> {
    let mut spec = SweepSpec::preset(a.scenario, a.seeds);
    if let Some(p) = a.protocols {
        spec.protocols = p;
    }
    let name = match a.scenario {
        Scenario::Sim1 => "sim1",
        Scenario::Sim2 => "sim2",
    };
    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("sweep-{name}")));
    prepare_out_dir(&out, a.force)?;

    let mode = if a.sequential {
        ExecMode::Sequential
    } else {
        ExecMode::default()
    };
    let result = run_sweep(&spec, mode)?;
    write_metrics_file(&out.join("metrics.csv"), &result.rows())?;

    let mut configs = Vec::new();
    for &p in &spec.protocols {
        for &n in &spec.nodes {
            configs.push(spec.config_for(p, n)?);
        }
    }
    let runs: Vec<_> = result
        .runs
        .iter()
        .map(|r| {
            json!({
                "protocol": r.metrics.protocol,
                "nodes": r.metrics.nodes,
                "seed": r.metrics.seed,
                "event_digest": format!("{:016x}", r.event_digest),
                "flows": r.flows,
                "counters": r.counters,
            })
        })
        .collect();
    let meta = json!({
        "tool": "manetsim",
        "version": env!("CARGO_PKG_VERSION"),
        "command": "sweep",
        "scenario": spec.scenario,
        "protocols": spec.protocols,
        "nodes": spec.nodes,
        "seeds": spec.seeds,
        "configs": configs,
        "runs": runs,
    });
    write_json(&out.join("metadata.json"), &meta)?;
    if a.plots {
        write_plots(&out, &result.averages)?;
    }
    eprintln!("wrote {} ({} runs)", out.display(), result.runs.len());
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
    let res = match cli.command {
        Command::Run {
            config,
            seed,
            trace,
            trajectory,
            out,
            force,
        } => run(&config, seed, trace, trajectory, out, force),
        Command::Sweep {
            scenario,
            protocols,
            seeds,
            plots,
            out,
            force,
            sequential,
        } => sweep(SweepArgs {
            scenario,
            protocols,
            seeds,
            plots,
            out,
            force,
            sequential,
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("manetsim: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &SimError) -> u8 {
    if e.is_invariant() {
        2
    } else {
        1
    }
}
