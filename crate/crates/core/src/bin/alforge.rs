use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use alforge::benchgen::{assemble, BenchmarkSpec};
use alforge::driver::{compare_summaries, run_sweep, RunSummary};
use alforge::{Error, ErrorKind, RunConfig};

#[derive(Parser)]
#[command(name = "alforge", version, about = "Active learning over contaminated unlabeled pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic contaminated pool, its test set and manifest.
    Benchgen(BenchgenArgs),
    /// Run one experiment (or a seed sweep) and write metrics.
    Run(RunArgs),
    /// Tabulate run summaries by cost per accuracy point.
    Compare(CompareArgs),
}

#[derive(Args)]
struct BenchgenArgs {
    /// Output pool path; `.test.ds` and `.manifest` files are written beside it.
    #[arg(long)]
    out: PathBuf,
    /// Config file whose [benchmark] section provides the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n_id: Option<usize>,
    #[arg(long)]
    n_ambiguous: Option<usize>,
    #[arg(long)]
    n_ood: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    ood_offset: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of random, least_confidence, entropy, random_cl, distance_cl.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated seeds to sweep instead of a single run.
    #[arg(long, value_delimiter = ',', conflicts_with = "seed")]
    seeds: Vec<u64>,
    /// Pool file; omit to generate the benchmark from the config.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    test_set: Option<PathBuf>,
    /// `section.key=value` override, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Output prefix: writes PREFIX.csv and PREFIX.json (PREFIX-seedN.* for sweeps).
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Parallel experiments for sweeps.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CompareArgs {
    /// Run summary JSON files.
    summaries: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn benchgen(args: BenchgenArgs) -> Result<(), Error> {
    let mut spec = match &args.config {
        Some(p) => RunConfig::load(p)?.benchmark,
        None => BenchmarkSpec::default(),
    };
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut spec.classes, args.k);
    set(&mut spec.dim, args.dim);
    set(&mut spec.n_id, args.n_id);
    set(&mut spec.n_ambiguous, args.n_ambiguous);
    set(&mut spec.n_ood, args.n_ood);
    set(&mut spec.n_test, args.n_test);
    if let Some(v) = args.separation {
        spec.class_separation = v;
    }
    if let Some(v) = args.ood_offset {
        spec.ood_offset = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    spec.validate()?;
    info!("benchmark spec: {spec:?}");
    let bench = assemble(&spec)?;
    let paths = bench.write(&args.out)?;
    println!("{}", bench.manifest.summary().trim_end());
    println!(
        "wrote {}, {}, {}",
        paths.pool.display(),
        paths.test.display(),
        paths.manifest.display()
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = &args.strategy {
        cfg.set("experiment.strategy", s)?;
    }
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(p) = &args.dataset {
        cfg.dataset = Some(p.clone());
    }
    if let Some(p) = &args.test_set {
        cfg.test_set = Some(p.clone());
    }
    cfg.validate()?;
    info!("resolved config:\n{}", cfg.render());

    let data = cfg.load_data()?;
    let sweep = !args.seeds.is_empty();
    let configs: Vec<_> = if sweep {
        args.seeds
            .iter()
            .map(|&seed| {
                let mut e = cfg.experiment.clone();
                e.seed = seed;
                e
            })
            .collect()
    } else {
        vec![cfg.experiment.clone()]
    };
    for (e, result) in configs.iter().zip(run_sweep(&data, &configs, args.jobs)) {
        let report = result?;
        let prefix = if sweep {
            let mut p = args.out.clone().into_os_string();
            p.push(format!("-seed{}", e.seed));
            PathBuf::from(p)
        } else {
            args.out.clone()
        };
        let summary = report.summary();
        write(&prefix.with_extension("csv"), &report.csv())?;
        write(&prefix.with_extension("json"), &summary.to_json())?;
        let cpa = summary
            .cost_per_accuracy
            .map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"));
        println!(
            "{} seed {}: accuracy {:.2}%, cost {}, cost/acc {}{}",
            summary.strategy,
            summary.seed,
            summary.final_accuracy,
            summary.final_cost,
            cpa,
            if summary.exhausted { " (pool exhausted)" } else { "" }
        );
    }
    Ok(())
}

fn compare(args: CompareArgs) -> Result<(), Error> {
    let summaries = args
        .summaries
        .iter()
        .map(RunSummary::read)
        .collect::<Result<Vec<_>, _>>()?;
    let table = compare_summaries(&summaries)?;
    print!("{}", table.to_text());
    match &args.csv {
        Some(p) => write(p, &table.to_csv())?,
        None => print!("\n{}", table.to_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AL_FORGE_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Benchgen(a) => benchgen(a),
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
