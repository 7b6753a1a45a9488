//! `stealth` — audit a black-box tabular classifier on a √N query budget.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use stealth_core::cluster::{bicluster, ClusterConfig};
use stealth_core::data::{synth_biased, write_csv};
use stealth_core::pipeline::{emit_report, ExperimentConfig, Method, RunOutput, Runner};

#[derive(Parser)]
#[command(name = "stealth", version, about = "Query-budgeted black-box model auditing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the report CSVs.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Repeats per run; overrides the config value.
    #[arg(long)]
    repeats: Option<usize>,
    /// Turn the lying scaffold on.
    #[arg(long)]
    adversary: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full experiment: per-method scores, win/tie/loss table, and (with
    /// the adversary) explanation-overlap reports.
    Run(RunArgs),
    /// Explanation-overlap experiment against the lying scaffold.
    Rq1(RunArgs),
    /// Surrogate-vs-baseline score comparison.
    Rq2(RunArgs),
    /// Comparison against the bias-mitigation baselines.
    Rq3(RunArgs),
    /// Inspect the bi-cluster tree of the first configured dataset.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Print the tree as indented text.
        #[arg(long)]
        dump: bool,
    },
    /// Generate a synthetic biased dataset as CSV plus schema JSON.
    Synth {
        /// Number of rows.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Probability an unprivileged row is forced unfavorable.
        #[arg(long, default_value_t = 0.8)]
        bias: f64,
        /// Label flip probability.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_json_file(&args.config)
        .with_context(|| format!("loading config {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(repeats) = args.repeats {
        cfg.repeats = repeats;
    }
    if args.adversary {
        cfg.adversary = true;
    }
    Ok(cfg)
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = load_config(&args)?;
    let runner = Runner::new(cfg)?;
    let output = runner.run_all()?;
    emit_report(&output, &args.out)?;
    println!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_rq1(args: RunArgs) -> Result<()> {
    let mut cfg = load_config(&args)?;
    cfg.adversary = true;
    let runner = Runner::new(cfg)?;
    let rq1 = runner.run_rq1()?;
    let output = RunOutput {
        records: vec![],
        rq1,
        wtl: None,
    };
    emit_report(&output, &args.out)?;
    println!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_rq2_rq3(args: RunArgs, all_methods: bool) -> Result<()> {
    let mut cfg = load_config(&args)?;
    if all_methods {
        cfg.methods = Method::ALL.to_vec();
    } else if !cfg.methods.contains(&Method::Baseline) {
        cfg.methods.push(Method::Baseline);
    }
    cfg.explain_influence = false;
    let runner = Runner::new(cfg)?;
    let (records, wtl) = runner.run_rq2_rq3()?;
    let output = RunOutput {
        records,
        rq1: vec![],
        wtl: Some(wtl),
    };
    emit_report(&output, &args.out)?;
    println!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_cluster(config: PathBuf, seed: Option<u64>, dump: bool) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let runner = Runner::new(cfg.clone())?;
    let units = runner.units()?;
    let unit = units.first().context("config lists no datasets")?;
    let cluster_cfg = ClusterConfig {
        seed: cfg.seed,
        ..cfg.cluster.clone()
    };
    let data = unit.data.without_labels();
    let tree = bicluster(&data, &cluster_cfg)?;
    let leaves = tree.leaf_rows();
    println!(
        "{}: {} rows, {} leaves (threshold {})",
        unit.dataset_name,
        data.n_rows(),
        leaves.len(),
        cluster_cfg.effective_threshold(data.n_rows())
    );
    if dump {
        print!("{}", tree.dump());
    }
    Ok(())
}

fn cmd_synth(n: usize, bias: f64, noise: f64, seed: u64, out: PathBuf) -> Result<()> {
    if !(0.0..=1.0).contains(&bias) || !(0.0..=1.0).contains(&noise) {
        bail!("bias and noise must lie in [0, 1]");
    }
    let (ds, schema) = synth_biased(n, bias, noise, seed)?;
    std::fs::create_dir_all(&out)?;
    let csv_path = out.join("synth.csv");
    let schema_path = out.join("synth.schema.json");
    write_csv(&ds, &schema, &csv_path)?;
    let schema_json = serde_json::to_string_pretty(&schema)?;
    std::fs::write(&schema_path, schema_json)?;
    println!(
        "wrote {} rows to {} (schema: {})",
        n,
        csv_path.display(),
        schema_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Rq1(args) => cmd_rq1(args),
        Command::Rq2(args) => cmd_rq2_rq3(args, false),
        Command::Rq3(args) => cmd_rq2_rq3(args, true),
        Command::Cluster { config, seed, dump } => cmd_cluster(config, seed, dump),
        Command::Synth {
            n,
            bias,
            noise,
            seed,
            out,
        } => cmd_synth(n, bias, noise, seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
