//! Command-line driver: `run`, `ablate`, `optimize-shards`, and `plot`.
//!
//! Every command is a deterministic function of its arguments and input
//! file bytes; rerunning an invocation rewrites byte-identical files.

use std::error::Error;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use sbn_core::config::{parse_config, serialize_config};
use sbn_core::plot::{parse_fig_csv, render_grouped_bars};
use sbn_core::report::{fig_matrix_csv, runs_csv, summary_json, RunRecord};
use sbn_core::sharding::{energy_model, optimal_shards, EnergyModelParams};
use sbn_core::sim::{run_scenario, Scenario, ScenarioConfig, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "sbn",
    version,
    about = "Deterministic simulator for a sharded, backscatter-assisted blockchain network"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Execute one configured scenario and write runs.csv + summary.json.
    Run {
        /// Configuration file (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `sim.runs`.
        #[arg(long)]
        runs: Option<u32>,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Also write the effective configuration next to the results.
        #[arg(long)]
        emit_config: bool,
    },
    /// Execute a variant x scenario cross-product and write the mean
    /// matrices alongside runs.csv + summary.json.
    Ablate {
        /// Configuration file shared by every cell.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated subset of: sbn, no-sbc, no-shard, no-sc.
        #[arg(long)]
        variants: String,
        /// Comma-separated subset of: na, fa, ba.
        #[arg(long)]
        scenarios: String,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the shard-count energy model and print the optimum.
    OptimizeShards {
        /// Committee size the shards partition.
        #[arg(long)]
        z: u32,
        /// Energy of one intra-shard message, J.
        #[arg(long)]
        e_intra: f64,
        /// Energy of one global (cross-shard) message, J.
        #[arg(long)]
        e_global: f64,
        /// Smallest admissible shard.
        #[arg(long, default_value_t = 4)]
        min_shard_size: u32,
        /// Also write an `n,energy_J` sweep over every feasible count.
        #[arg(long)]
        sweep: Option<PathBuf>,
    },
    /// Render the two mean matrices as one grouped-bar SVG.
    Plot {
        /// Energy matrix (fig6_energy.csv).
        #[arg(long)]
        energy: PathBuf,
        /// Latency matrix (fig6_latency.csv).
        #[arg(long)]
        latency: PathBuf,
        /// Output SVG path.
        #[arg(long)]
        out: PathBuf,
    },
}

fn read(path: &Path) -> Result<String, Box<dyn Error>> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write(path: &Path, bytes: &str) -> Result<(), Box<dyn Error>> {
    fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn records_of(cfg: &ScenarioConfig) -> Result<Vec<RunRecord>, Box<dyn Error>> {
    let rows = run_scenario(cfg)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, metrics)| RunRecord {
            variant: cfg.variant,
            scenario: cfg.scenario,
            seed: cfg.seed.wrapping_add(i as u64),
            run: i as u32,
            metrics,
        })
        .collect())
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    runs: Option<u32>,
    out: &Path,
    emit_config: bool,
) -> Result<(), Box<dyn Error>> {
    let mut cfg = parse_config(&read(config)?)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = runs {
        cfg.runs = r;
    }
    let records = records_of(&cfg)?;
    fs::create_dir_all(out)?;
    write(&out.join("runs.csv"), &runs_csv(&records))?;
    write(&out.join("summary.json"), &summary_json(&records))?;
    if emit_config {
        write(&out.join("effective.config"), &serialize_config(&cfg))?;
    }
    println!(
        "wrote {} runs ({} {}) to {}",
        records.len(),
        cfg.variant.label(),
        cfg.scenario.label(),
        out.display()
    );
    Ok(())
}

fn parse_list<T: std::str::FromStr<Err = String>>(
    raw: &str,
    what: &str,
) -> Result<Vec<T>, Box<dyn Error>> {
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(T::from_str)
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(format!("at least one {what} is required").into());
    }
    Ok(items)
}

fn cmd_ablate(
    config: &Path,
    variants: &str,
    scenarios: &str,
    out: &Path,
) -> Result<(), Box<dyn Error>> {
    let base = parse_config(&read(config)?)?;
    let variants: Vec<Variant> = parse_list(variants, "variant")?;
    let scenarios: Vec<Scenario> = parse_list(scenarios, "scenario")?;

    let mut records = Vec::new();
    for &v in &variants {
        for &s in &scenarios {
            let cfg = ScenarioConfig { variant: v, scenario: s, ..base.clone() };
            records.extend(records_of(&cfg)?);
            println!("{} {}: {} runs done", v.label(), s.label(), cfg.runs);
        }
    }

    fs::create_dir_all(out)?;
    write(&out.join("runs.csv"), &runs_csv(&records))?;
    write(&out.join("summary.json"), &summary_json(&records))?;
    let energy = fig_matrix_csv(&records, &variants, &scenarios, "total_energy_J")
        .expect("known metric");
    let latency = fig_matrix_csv(&records, &variants, &scenarios, "mean_service_latency_ms")
        .expect("known metric");
    write(&out.join("fig6_energy.csv"), &energy)?;
    write(&out.join("fig6_latency.csv"), &latency)?;
    println!("wrote {} cells to {}", variants.len() * scenarios.len(), out.display());
    Ok(())
}

fn cmd_optimize_shards(
    z: u32,
    e_intra: f64,
    e_global: f64,
    min_shard_size: u32,
    sweep: Option<&Path>,
) -> Result<(), Box<dyn Error>> {
    let p = EnergyModelParams { z, e_intra_j: e_intra, e_global_j: e_global, min_shard_size };
    let opt = optimal_shards(&p)?;
    println!("n_c = {}", opt.n_continuous);
    println!("n_star = {}", opt.n_star);
    println!("m_sizes = {:?}", opt.m_sizes);
    println!("E(n_star) = {} J", opt.energy_j);
    if let Some(path) = sweep {
        let mut csv = String::from("n,energy_J\n");
        for n in 1..=p.max_shards() {
            let e = energy_model(f64::from(n), &p)?;
            csv.push_str(&format!("{n},{e}\n"));
        }
        write(path, &csv)?;
        println!("wrote sweep of {} counts to {}", p.max_shards(), path.display());
    }
    Ok(())
}

fn cmd_plot(energy: &Path, latency: &Path, out: &Path) -> Result<(), Box<dyn Error>> {
    let e = parse_fig_csv(&read(energy)?)?;
    let l = parse_fig_csv(&read(latency)?)?;
    let svg = render_grouped_bars(&[
        ("Mean total energy (J)", &e),
        ("Mean service latency (ms)", &l),
    ])?;
    write(out, &svg)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run { config, seed, runs, out, emit_config } => {
            cmd_run(config, *seed, *runs, out, *emit_config)
        }
        Cmd::Ablate { config, variants, scenarios, out } => {
            cmd_ablate(config, variants, scenarios, out)
        }
        Cmd::OptimizeShards { z, e_intra, e_global, min_shard_size, sweep } => {
            cmd_optimize_shards(*z, *e_intra, *e_global, *min_shard_size, sweep.as_deref())
        }
        Cmd::Plot { energy, latency, out } => cmd_plot(energy, latency, out),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
