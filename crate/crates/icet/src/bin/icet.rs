use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use icet::bench::{render_table, run_monte_carlo, write_error_histogram, write_records, AlgoSelection, McReport, ScenarioConfig};
use icet::dump::{voxel_dump, write_voxel_ellipses, SolutionJson};
use icet::io::{load_environment, load_scan, save_environment, save_scan};
use icet_core::{
    generate_trial_pair, icet_match, ndt_match, CorrespondenceMode, EnvironmentKind, IcetConfig,
    NdtConfig, ScanSpec, StateVector, TrialSpec,
};
use log::info;

#[derive(Parser)]
#[command(name = "icet", version, about = "Voxel scan matching with predicted accuracy, and an NDT baseline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a reference/new scan pair and write it to --out.
    Simulate(SimulateArgs),
    /// Match two scan files and print the solution as JSON.
    Match(MatchArgs),
    /// Run a Monte-Carlo benchmark and write the report and raw records.
    Benchmark(BenchmarkArgs),
    /// Print error tables from one or more benchmark reports.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Algo {
    Icet,
    Ndt,
    Both,
}

impl From<Algo> for AlgoSelection {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Icet => AlgoSelection::Icet,
            Algo::Ndt => AlgoSelection::Ndt,
            Algo::Both => AlgoSelection::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Correspondence {
    Colocated,
    Nn,
}

impl From<Correspondence> for CorrespondenceMode {
    fn from(c: Correspondence) -> Self {
        match c {
            Correspondence::Colocated => CorrespondenceMode::CoLocated,
            Correspondence::Nn => CorrespondenceMode::NearestNeighbor,
        }
    }
}

#[derive(Args)]
struct GridArgs {
    /// Voxel width.
    #[arg(long)]
    voxel_width: Option<f64>,
    #[arg(long, value_enum)]
    correspondence: Option<Correspondence>,
}

#[derive(Args)]
struct SimulateArgs {
    /// t-intersection, tunnel, or custom:<environment.json>
    #[arg(long, default_value = "t-intersection")]
    env: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Per-axis point noise standard deviation.
    #[arg(long, default_value_t = 2.0)]
    sigma: f64,
    /// True transform as x,y,theta.
    #[arg(long, default_value = "5,10,0.1", allow_hyphen_values = true)]
    truth: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    new: PathBuf,
    #[arg(long, value_enum, default_value = "icet")]
    algo: Algo,
    #[command(flatten)]
    grid: GridArgs,
    /// Include the per-iteration log.
    #[arg(long)]
    log: bool,
    /// Directory for a reference voxel dump and ellipse table.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Scenario JSON. Command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    algo: Option<Algo>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// McReport JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
}

fn parse_env(spec: &str, cfg: &mut ScenarioConfig) -> Result<()> {
    match spec {
        "t-intersection" => cfg.environment = EnvironmentKind::TIntersection,
        "tunnel" => cfg.environment = EnvironmentKind::Tunnel,
        other => {
            let Some(path) = other.strip_prefix("custom:") else {
                bail!("unknown environment {other:?}; expected t-intersection, tunnel or custom:<file>");
            };
            cfg.environment = EnvironmentKind::Custom;
            cfg.custom_environment = Some(load_environment(Path::new(path))?);
        }
    }
    Ok(())
}

fn apply_grid(args: &GridArgs, cfg: &mut ScenarioConfig) {
    if let Some(a) = args.voxel_width {
        let mode = cfg.grid.correspondence;
        cfg.grid = icet_core::GridConfig::new(a).with_correspondence(mode);
    }
    if let Some(c) = args.correspondence {
        cfg.grid.correspondence = c.into();
    }
}

fn parse_truth(s: &str) -> Result<StateVector> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad transform {s:?}"))?;
    if v.len() != 3 {
        bail!("transform needs three components, got {}", v.len());
    }
    Ok(StateVector::new(v[0], v[1], v[2]))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = ScenarioConfig::default();
    parse_env(&args.env, &mut cfg)?;
    apply_grid(&args.grid, &mut cfg);
    let env = cfg.build_environment()?;
    let truth = parse_truth(&args.truth)?;
    let spec = ScanSpec { noise_sigma: args.sigma, ..ScanSpec::default() };
    if !cfg.grid.resolves_noise(args.sigma) {
        log::warn!("voxel width {} is under ten noise standard deviations", cfg.grid.voxel_width);
    }
    let trial = TrialSpec { true_transform: truth, ref_seed: 2 * args.seed, new_seed: 2 * args.seed + 1 };
    let pair = generate_trial_pair(&env, &trial, &spec)?;
    fs::create_dir_all(&args.out)?;
    for (name, scan, seed) in [
        ("reference.csv", &pair.reference, trial.ref_seed),
        ("new.csv", &pair.new, trial.new_seed),
    ] {
        let meta = [("seed", seed.to_string()), ("sigma", args.sigma.to_string())];
        save_scan(&args.out.join(name), scan, &meta)?;
    }
    save_environment(&args.out.join("environment.json"), &env)?;
    write_json(&args.out.join("truth.json"), &pair.truth)?;
    let dump = voxel_dump(&pair.reference, &cfg.grid)?;
    write_json(&args.out.join("reference_voxels.json"), &dump)?;
    write_voxel_ellipses(File::create(args.out.join("reference_ellipses.csv"))?, &dump)?;
    info!("wrote {} and {} points to {}", pair.reference.len(), pair.new.len(), args.out.display());
    Ok(())
}

fn run_match(args: MatchArgs) -> Result<()> {
    let reference = load_scan(&args.reference).with_context(|| format!("reading {}", args.reference.display()))?;
    let new = load_scan(&args.new).with_context(|| format!("reading {}", args.new.display()))?;
    let mut cfg = ScenarioConfig::default();
    apply_grid(&args.grid, &mut cfg);
    let x0 = StateVector::zero();
    let out = match args.algo {
        Algo::Icet => {
            let icfg = IcetConfig { record_log: args.log, ..IcetConfig::default() };
            SolutionJson::from_icet(&icet_match(&reference, &new, &cfg.grid, &icfg, &x0)?, args.log)
        }
        Algo::Ndt => SolutionJson::from_ndt(&ndt_match(&reference, &new, &NdtConfig::matching(&cfg.grid), &x0)?),
        Algo::Both => bail!("match runs one algorithm; pick icet or ndt"),
    };
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let dump = voxel_dump(&reference, &cfg.grid)?;
        write_json(&dir.join("reference_voxels.json"), &dump)?;
        write_voxel_ellipses(File::create(dir.join("reference_ellipses.csv"))?, &dump)?;
    }
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    serde_json::to_writer_pretty(&mut lock, &out)?;
    writeln!(lock)?;
    Ok(())
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let mut cfg: ScenarioConfig = match &args.config {
        Some(p) => serde_json::from_reader(File::open(p).with_context(|| format!("opening {}", p.display()))?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(e) = &args.env {
        parse_env(e, &mut cfg)?;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(a) = args.algo {
        cfg.algorithms = a.into();
    }
    apply_grid(&args.grid, &mut cfg);
    info!("running {} trials", cfg.trials);
    let report = run_monte_carlo(&cfg)?;
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_records(BufWriter::new(File::create(args.out.join("records.csv"))?), &report.records)?;
    for (name, algo) in [("icet", icet::dump::Algorithm::Icet), ("ndt", icet::dump::Algorithm::Ndt)] {
        let rs: Vec<_> = report.records.iter().filter(|r| r.algorithm == algo).cloned().collect();
        if rs.is_empty() {
            continue;
        }
        for (k, axis) in ["x", "y", "theta"].iter().enumerate() {
            let path = args.out.join(format!("{name}_error_hist_{axis}.csv"));
            write_error_histogram(File::create(path)?, &rs, k, 30)?;
        }
    }
    print!("{}", render_table(&report));
    Ok(())
}

fn compare(args: CompareArgs) -> Result<()> {
    for p in &args.reports {
        let report: McReport = serde_json::from_reader(File::open(p).with_context(|| format!("opening {}", p.display()))?)?;
        println!("{}", p.display());
        print!("{}", render_table(&report));
        println!();
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Match(a) => run_match(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Compare(a) => compare(a),
    }
}
