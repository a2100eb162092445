//! Command-line front end: data generation, ingestion, experiment sweeps,
//! channel privacy checks and the copy-probability solver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use corr_rr::domain::uniform_domains;
use corr_rr::grr::ldp_ratio;
use corr_rr::harness::{run_experiment_with_workers, write_results_csv, ExperimentConfig, RunMetadata};
use corr_rr::ingest::{load_csv, run_recipe, write_dataset, DatasetMetadata, PreprocessRecipe};
use corr_rr::mechanisms::{mechanism_channel, ChannelMechanism, Mechanism, PairwisePyModel, PriorTable};
use corr_rr::pyopt::{py_report, PairContext};
use corr_rr::synth::{gen_synthetic, SynthSpec};
use corr_rr::MarginalTable;

/// Slack allowed on top of `e^ε` when checking an enumerated channel.
const LDP_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "corr-rr", version, about = "Correlated randomized response simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate hub-and-spoke correlated categorical data.
    Synth {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess a raw categorical table into the coded format.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        /// clave, nursery, mushroom, or a path to a JSON recipe.
        #[arg(long)]
        recipe: String,
        #[arg(long)]
        out: PathBuf,
        /// Treat the first line of the input as column names.
        #[arg(long)]
        header: bool,
    },
    /// Run an experiment sweep described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        /// Overrides the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Enumerate a mechanism's full-record channel and check its LDP ratio.
    CheckLdp {
        /// SPL, RSFD, RSRFD, CORR_RR (phase II) or CORR_RR_PHASE1.
        #[arg(long)]
        mechanism: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        /// Copy probability used for every attribute pair.
        #[arg(long, default_value_t = 0.5)]
        py: f64,
        /// Comma-separated prior shared by every attribute (RSRFD only).
        #[arg(long)]
        prior: Option<String>,
    },
    /// Solve for the MSE-optimal copy probability of one attribute pair.
    Pyopt {
        /// Comma-separated marginal of the selected attribute.
        #[arg(long)]
        fa: String,
        /// Comma-separated marginal of the derived attribute.
        #[arg(long)]
        fb: String,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        n_prime: usize,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_row(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad number `{s}`")))
        .collect()
}

fn synth(spec: SynthSpec, out: &Path) -> Result<()> {
    let ds = gen_synthetic(&spec)?;
    write_dataset(&ds, &DatasetMetadata::for_synthetic(&spec, &ds), out)?;
    println!("wrote {} records ({} attributes, k={}) to {}", ds.n(), ds.d(), spec.k, out.display());
    Ok(())
}

fn ingest(input: &Path, recipe: &str, out: &Path, header: bool) -> Result<()> {
    let recipe = PreprocessRecipe::resolve(recipe)?;
    let table = load_csv(input, header)?;
    let ingested = run_recipe(&table, &recipe)?;
    let meta = DatasetMetadata::for_ingested(&recipe, &ingested);
    write_dataset(&ingested.dataset, &meta, out)?;
    println!(
        "{}: n={} d={} k={} (dropped {} rows) -> {}",
        recipe.name,
        meta.n,
        meta.d,
        meta.k,
        meta.dropped_rows,
        out.display()
    );
    Ok(())
}

fn run(config: &Path, out: &Path, workers: usize, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let rows = run_experiment_with_workers(&cfg, workers)?;
    write_results_csv(&rows, out)?;
    let meta_path = out.with_extension("meta.json");
    let meta = RunMetadata::new(&cfg, &rows)?;
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n")
        .with_context(|| format!("writing {}", meta_path.display()))?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn check_ldp(mechanism: &str, epsilon: f64, d: usize, k: usize, py: f64, prior: Option<&str>) -> Result<bool> {
    let channel_mech = if mechanism.eq_ignore_ascii_case("CORR_RR_PHASE1") {
        ChannelMechanism::CorrRrPhase1
    } else {
        match mechanism.parse::<Mechanism>()? {
            Mechanism::Spl => ChannelMechanism::Spl,
            Mechanism::RsFd => ChannelMechanism::RsFd,
            Mechanism::RsRfd => {
                let domains = uniform_domains(d, k)?;
                let table = match prior {
                    Some(text) => {
                        let row = parse_row(text)?;
                        MarginalTable::new(vec![row; d])
                    }
                    None => MarginalTable::uniform(&domains),
                };
                ChannelMechanism::RsRfd(PriorTable::new(table, &domains)?)
            }
            Mechanism::CorrRr => ChannelMechanism::CorrRrPhase2(PairwisePyModel::constant(d, py)?),
        }
    };
    let channel = mechanism_channel(&channel_mech, epsilon, d, k)?;
    let ratio = ldp_ratio(&channel);
    let bound = epsilon.exp();
    let pass = ratio <= bound + LDP_TOL;
    println!(
        "{} eps={epsilon} d={d} k={k}: ldp_ratio={ratio:.12} e^eps={bound:.12} {}",
        channel_mech.name(),
        if pass { "PASS" } else { "FAIL" }
    );
    Ok(pass)
}

fn pyopt(fa: &str, fb: &str, epsilon: f64, n_prime: usize, json: bool) -> Result<()> {
    let (fa, fb) = (parse_row(fa)?, parse_row(fb)?);
    if fa.len() != fb.len() {
        bail!("marginals have different lengths ({} and {})", fa.len(), fb.len());
    }
    let ctx = PairContext::new(&fa, &fb, epsilon, n_prime)?;
    let report = py_report(&ctx);
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("p_y* = {:.6}", report.p_y);
        println!("avg_mse(0)    = {:.6e}", report.mse_at_0);
        println!("avg_mse(p_y*) = {:.6e}", report.mse_at_opt);
        println!("avg_mse(1)    = {:.6e}", report.mse_at_1);
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { n, d, k, rho, seed, out } => synth(SynthSpec { n, d, k, rho, seed }, &out)?,
        Command::Ingest { input, recipe, out, header } => ingest(&input, &recipe, &out, header)?,
        Command::Run { config, out, workers, seed } => run(&config, &out, workers, seed)?,
        Command::CheckLdp { mechanism, epsilon, d, k, py, prior } => {
            if !check_ldp(&mechanism, epsilon, d, k, py, prior.as_deref())? {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Pyopt { fa, fb, epsilon, n_prime, json } => pyopt(&fa, &fb, epsilon, n_prime, json)?,
    }
    Ok(ExitCode::SUCCESS)
}
