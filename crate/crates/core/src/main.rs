use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use rmcat_core::harness::{
    output, run_scenario, scenario_by_name, write_outputs, ControllerKind, SimConfig,
    SCENARIO_NAMES,
};

#[derive(Parser)]
#[command(name = "rmcat", version, about = "RTP congestion control simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario with one media controller.
    Run {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "gcc")]
        controller: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run every scenario for both media controllers in parallel.
    Sweep {
        #[arg(long)]
        all: bool,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Summarize the utilization of finished runs.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> anyhow::Result<SimConfig> {
    match path {
        Some(p) => Ok(SimConfig::load(p)?),
        None => Ok(SimConfig::default()),
    }
}

fn run_one(
    scenario: &str,
    kind: ControllerKind,
    seed: u64,
    cfg: SimConfig,
    out: &Path,
) -> anyhow::Result<()> {
    let spec = scenario_by_name(scenario, kind, cfg)?.with_seed(seed);
    let result = run_scenario(&spec).with_context(|| format!("{scenario}/{kind}"))?;
    write_outputs(&result, out)?;
    let agg = &result.interval_utilization()[0];
    println!(
        "{scenario} {kind} seed={seed}: utilization {:.1}%, {} events",
        agg.utilization * 100.0,
        result.events_dispatched
    );
    if !result.invariants.all_ok() {
        eprintln!("warning: invariant violated: {:?}", result.invariants);
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run {
            scenario,
            controller,
            seed,
            out,
            config,
        } => {
            let kind: ControllerKind = controller.parse()?;
            if kind == ControllerKind::Reno {
                bail!("reno is cross traffic only; pick gcc or scream");
            }
            let cfg = load_config(config.as_deref())?;
            run_one(&scenario, kind, seed, cfg, &out)
        }
        Cmd::Sweep {
            all,
            seeds,
            out,
            config,
        } => {
            if !all {
                bail!("sweep currently requires --all");
            }
            let cfg = load_config(config.as_deref())?;
            let mut jobs: Vec<(&str, ControllerKind, u64)> = Vec::new();
            for s in SCENARIO_NAMES {
                for k in [ControllerKind::Gcc, ControllerKind::Scream] {
                    jobs.extend(seeds.iter().map(|seed| (s, k, *seed)));
                }
            }
            jobs.par_iter().try_for_each(|(s, k, seed)| {
                let dir = out.join(format!("{s}_{k}_s{seed}"));
                run_one(s, *k, *seed, cfg.clone(), &dir)
            })
        }
        Cmd::Report { input } => {
            let rows = output::write_report(&input)?;
            if rows.is_empty() {
                bail!("no summary.csv found under {}", input.display());
            }
            print!("{}", output::format_table(&rows));
            Ok(())
        }
    }
}
