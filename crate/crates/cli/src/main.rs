use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphon_transfer::pipeline::{self, RunConfig, Stages};
use graphon_transfer::Error;

#[derive(Parser)]
#[command(name = "graphon", version, about = "Transfer-operator analysis of random walks on graphons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a random walk (or SDE) and write the trajectory.
    Simulate(ConfigArgs),
    /// Read a signal column from CSV, scale it to [0, 1] and write the trajectory.
    Ingest(ConfigArgs),
    /// Estimate operators, the spectrum and clusters.
    Analyze(ConfigArgs),
    /// Estimate operators and the rank-r reconstructions.
    Reconstruct(ConfigArgs),
    /// Write plotting tables for a completed run directory.
    Plotdata {
        /// Run directory containing spectral_model.json.
        dir: PathBuf,
    },
    /// Full pipeline: data, operators, spectrum, clusters, reconstructions.
    Run(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Plain-text `key = value` configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Re-run the configuration recorded in a manifest.json.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Override any configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Builtin graphon, e.g. triple-peak, two-block(0.8,0.2), lemon-slice.
    #[arg(long)]
    graphon: Option<String>,
    /// Grid graphon CSV.
    #[arg(long)]
    graphon_csv: Option<PathBuf>,
    /// Signal CSV to ingest.
    #[arg(long)]
    signal: Option<PathBuf>,
    /// Column of the signal CSV (1-based index or header name).
    #[arg(long)]
    column: Option<String>,
    /// Trajectory CSV with values in [0, 1].
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    m: Option<usize>,
    #[arg(short, long)]
    n: Option<usize>,
    /// Number of clusters / reconstruction rank, or `auto`.
    #[arg(short, long)]
    r: Option<String>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut map = match (&self.config, &self.manifest) {
            (Some(path), _) => RunConfig::parse_kv(&std::fs::read_to_string(path)?)?,
            (_, Some(path)) => {
                let m: pipeline::Manifest = graphon_transfer::io::read_json(path)?;
                m.config
            }
            _ => BTreeMap::new(),
        };
        let flags = [
            ("graphon", self.graphon.clone()),
            ("graphon_csv", path_str(&self.graphon_csv)),
            ("signal", path_str(&self.signal)),
            ("column", self.column.clone()),
            ("trajectory", path_str(&self.trajectory)),
            ("pipeline", self.pipeline.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("n", self.n.map(|v| v.to_string())),
            ("r", self.r.clone()),
            ("output", path_str(&self.output)),
        ];
        // A source given on the command line replaces the one in the file.
        const SOURCES: [&str; 4] = ["graphon", "graphon_csv", "signal", "trajectory"];
        if flags.iter().any(|(k, v)| SOURCES.contains(k) && v.is_some()) {
            for k in SOURCES {
                map.remove(k);
            }
        }
        for (k, v) in flags {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        RunConfig::from_pairs(&map)
    }
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn report(dir: &Path, res: &pipeline::RunResult) {
    let values: Vec<String> = res.spectral_values().iter().map(|v| format!("{v:.4}")).collect();
    println!("pipeline     {}", res.pipeline);
    println!("spectrum     {}", values.join(" "));
    println!("rank         {} (gap ratio {:.3})", res.r, res.gap.ratio);
    if let Some(cm) = &res.clusters {
        println!("cluster sizes {:?}", cm.sizes());
    }
    for w in &res.warnings {
        println!("warning      {w}");
    }
    println!("output       {}", dir.display());
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    let stages = |cluster, reconstruct| Stages { cluster, reconstruct };
    match cli.command {
        Command::Simulate(a) | Command::Ingest(a) => {
            let (dir, t) = pipeline::simulate(&a.resolve()?)?;
            println!("wrote {} states to {}", t.states.len(), dir.join("trajectory.csv").display());
        }
        Command::Analyze(a) => {
            let (dir, res) = pipeline::run(&a.resolve()?, stages(true, false))?;
            report(&dir, &res);
        }
        Command::Reconstruct(a) => {
            let (dir, res) = pipeline::run(&a.resolve()?, stages(false, true))?;
            report(&dir, &res);
        }
        Command::Run(a) => {
            let (dir, res) = pipeline::run(&a.resolve()?, Stages::ALL)?;
            report(&dir, &res);
        }
        Command::Plotdata { dir } => {
            for f in pipeline::emit_plot_data(&dir)? {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
