//! Command-line front end: dataset generation, one-shot selection, the
//! benchmark grid, the recovery-bound calculator, and the instability
//! replication.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dpsis::bench::{
    default_epsilon_grid, emit_accuracy_plot, emit_csv, instability_counts, run_experiment,
    DatasetSource, ExperimentConfig, InstabilityExperiment, Method,
};
use dpsis::data::{gen_instability_w1, gen_instability_w1w2, gen_synth_fan, SynthSpec, Target};
use dpsis::metrics::{recovery_bound, BoundInput};
use dpsis::selectors::{
    dp_sis, lasso_topk, sis, two_stage_select, LassoParams, TwoStageParams,
};
use dpsis::{Error, Result};

#[derive(Parser)]
#[command(name = "dpsis", version, about = "Differentially private feature selection from correlations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic or instability dataset as CSV plus a metadata sidecar.
    Gen(GenArgs),
    /// Run one selection and print the chosen feature indices.
    Select(SelectArgs),
    /// Run the full (method, epsilon, k, trial) benchmark grid.
    Bench(BenchArgs),
    /// Evaluate the exact-recovery probability bound.
    Bound(BoundArgs),
    /// Replicate the SIS vs two-stage instability comparison.
    ReplicateInstability(ReplicateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Synth,
    W1,
    W1w2,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "synth")]
    kind: GenKind,
    /// Sample count (synth only).
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Feature count (synth only).
    #[arg(long, default_value_t = 2000)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; a `.meta` sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DatasetArgs {
    /// CSV dataset path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Target column (name or 0-based index) for --csv.
    #[arg(long)]
    target: Option<String>,
    /// Use the synthetic benchmark generator with this many samples.
    #[arg(long)]
    synth_n: Option<usize>,
    #[arg(long)]
    synth_d: Option<usize>,
    #[arg(long)]
    synth_seed: Option<u64>,
    /// Use an instability dataset: w1 or w1w2.
    #[arg(long)]
    instability: Option<String>,
}

impl DatasetArgs {
    fn source(&self) -> Result<(String, DatasetSource)> {
        if let Some(path) = &self.csv {
            let target = Target::parse(self.target.as_deref().ok_or_else(|| {
                Error::BadConfig("--csv requires --target".into())
            })?);
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into());
            return Ok((name, DatasetSource::Csv { path: path.clone(), target }));
        }
        if let Some(kind) = &self.instability {
            let seed = self.synth_seed.unwrap_or(0);
            return match kind.as_str() {
                "w1" => Ok(("w1".into(), DatasetSource::InstabilityW1 { seed })),
                "w1w2" => Ok(("w1w2".into(), DatasetSource::InstabilityW1W2 { seed })),
                other => Err(Error::BadConfig(format!("unknown instability kind {other:?}"))),
            };
        }
        let mut spec = SynthSpec::new(
            self.synth_n.unwrap_or(100),
            self.synth_d.unwrap_or(2000),
            self.synth_seed.unwrap_or(0),
        );
        spec.n_nonzero = spec.n_nonzero.min(spec.d);
        Ok(("synth".into(), DatasetSource::Synthetic(spec)))
    }
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// sis, dp-sis, two-stage, dp-two-stage, or lasso-topk.
    #[arg(long, default_value = "dp-sis")]
    method: Method,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Plain-text key = value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Comma-separated method list.
    #[arg(long)]
    methods: Option<String>,
    /// Comma-separated epsilon grid; default 15 log-spaced in [0.1, 20].
    #[arg(long)]
    epsilons: Option<String>,
    /// Comma-separated k list.
    #[arg(long)]
    ks: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Record wall times as zero so repeated runs are byte-identical.
    #[arg(long, default_value_t = false)]
    no_timing: bool,
    /// Dataset label used in output rows and file names.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    k: usize,
    /// Gap between the k-th and (k+1)-th absolute correlations.
    #[arg(long)]
    xi: f64,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long)]
    epsilon: f64,
}

#[derive(Args)]
struct ReplicateArgs {
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    #[arg(long, default_value = "instability_counts.csv")]
    out: PathBuf,
}

fn parse_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::BadConfig(format!("expected `key = value`, got {line:?}")));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| Error::BadConfig(format!("bad {what} entry {p:?}")))
        })
        .collect()
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let ds = match args.kind {
        GenKind::Synth => {
            let mut spec = SynthSpec::new(args.n, args.d, args.seed);
            spec.n_nonzero = spec.n_nonzero.min(spec.d);
            gen_synth_fan(&spec)
        }
        GenKind::W1 => gen_instability_w1(args.seed),
        GenKind::W1w2 => gen_instability_w1w2(args.seed),
    };
    ds.write_csv(&args.out)?;
    println!("wrote {} ({} x {})", args.out.display(), ds.n(), ds.d());
    Ok(())
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let (_, source) = args.dataset.source()?;
    let ds = source.load()?;
    let selected = match args.method {
        Method::Sis => sis(&ds, args.k)?,
        Method::DpSis => dp_sis(&ds, args.k, args.epsilon, args.gamma, args.seed)?.indices,
        Method::LassoTopk => lasso_topk(&ds, &LassoParams::new(args.lambda), args.k)?.0,
        Method::TwoStage | Method::DpTwoStage => {
            let params = TwoStageParams {
                k: args.k,
                block_count: None,
                lasso: LassoParams::new(args.lambda),
                private_selection: args.method == Method::DpTwoStage,
                epsilon: args.epsilon,
                gamma: args.gamma,
            };
            two_stage_select(&ds, &params, args.seed)?
        }
    };
    let list: Vec<String> = selected.iter().map(|i| i.to_string()).collect();
    println!("{}", list.join(" "));
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let file = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let get = |key: &str| file.get(key).map(String::as_str);

    // Dataset: flags win over the config file.
    let mut dataset = args.dataset.clone();
    if dataset.csv.is_none() && dataset.instability.is_none() {
        if let Some(p) = get("csv") {
            dataset.csv = Some(PathBuf::from(p));
        }
        if let Some(t) = get("target") {
            dataset.target.get_or_insert_with(|| t.to_string());
        }
        if let Some(i) = get("instability") {
            dataset.instability = Some(i.to_string());
        }
        if let Some(n) = get("synth-n") {
            dataset.synth_n.get_or_insert(parse_list::<usize>(n, "synth-n")?[0]);
        }
        if let Some(d) = get("synth-d") {
            dataset.synth_d.get_or_insert(parse_list::<usize>(d, "synth-d")?[0]);
        }
        if let Some(s) = get("synth-seed") {
            dataset.synth_seed.get_or_insert(parse_list::<u64>(s, "synth-seed")?[0]);
        }
    }
    let (default_name, source) = dataset.source()?;

    let methods_str = args
        .methods
        .clone()
        .or_else(|| get("methods").map(String::from))
        .unwrap_or_else(|| "dp-sis,dp-two-stage".into());
    let methods: Vec<Method> = parse_list(&methods_str, "method")?;

    let epsilons = match args.epsilons.clone().or_else(|| get("epsilons").map(String::from)) {
        Some(s) => parse_list(&s, "epsilon")?,
        None => default_epsilon_grid(),
    };
    let ks = match args.ks.clone().or_else(|| get("ks").map(String::from)) {
        Some(s) => parse_list(&s, "k")?,
        None => vec![5],
    };
    let trials = args
        .trials
        .or(get("trials").and_then(|s| s.parse().ok()))
        .unwrap_or(100);
    let master_seed = args
        .master_seed
        .or(get("master-seed").and_then(|s| s.parse().ok()))
        .unwrap_or(0);
    let lambda = args
        .lambda
        .or(get("lambda").and_then(|s| s.parse().ok()))
        .unwrap_or(0.1);
    let gamma = args
        .gamma
        .or(get("gamma").and_then(|s| s.parse().ok()))
        .unwrap_or(0.5);
    let output_dir = args
        .output_dir
        .clone()
        .or_else(|| get("output-dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let record_timing = !(args.no_timing || get("no-timing") == Some("true"));
    let dataset_name = args
        .name
        .clone()
        .or_else(|| get("name").map(String::from))
        .unwrap_or(default_name);

    let cfg = ExperimentConfig {
        dataset_name: dataset_name.clone(),
        source,
        methods,
        epsilons,
        ks,
        trials,
        master_seed,
        lambda,
        gamma,
        record_timing,
    };
    let rows = run_experiment(&cfg)?;
    std::fs::create_dir_all(&output_dir).map_err(|source| Error::Io {
        path: output_dir.clone(),
        source,
    })?;
    let csv_path = output_dir.join(format!("{dataset_name}_results.csv"));
    emit_csv(&rows, &csv_path)?;
    println!("wrote {} ({} rows)", csv_path.display(), rows.len());
    let plot_path = output_dir.join(format!("{dataset_name}_accuracy.svg"));
    match emit_accuracy_plot(&rows, &plot_path) {
        Ok(()) => println!("wrote {}", plot_path.display()),
        Err(Error::NothingToPlot) => {
            println!("skipped plot: no private-method rows");
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

fn cmd_bound(args: &BoundArgs) -> Result<()> {
    let value = recovery_bound(&BoundInput {
        d: args.d,
        k: args.k,
        xi: args.xi,
        gamma: args.gamma,
        epsilon: args.epsilon,
    })?;
    println!("{value}");
    Ok(())
}

fn cmd_replicate(args: &ReplicateArgs) -> Result<()> {
    let mut out = String::from("experiment,feature,sis_count,two_stage_count\n");
    for experiment in [InstabilityExperiment::W1, InstabilityExperiment::W1W2] {
        let (sis_counts, two_stage_counts) =
            instability_counts(experiment, args.reps, args.seed, args.k, args.lambda)?;
        for (j, (s, t)) in sis_counts.iter().zip(&two_stage_counts).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", experiment.name(), j, s, t);
        }
    }
    std::fs::write(&args.out, out).map_err(|source| Error::Io {
        path: args.out.clone(),
        source,
    })?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Select(args) => cmd_select(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Bound(args) => cmd_bound(args),
        Command::ReplicateInstability(args) => cmd_replicate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
