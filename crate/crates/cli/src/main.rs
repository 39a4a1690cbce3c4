use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spatial_causal::bayes::{
    default_priors, fit_chains, write_chain_binary, write_chain_csv, write_latent_csv,
    ChainSettings, Model, ModelData, RHAT_GATE,
};
use spatial_causal::datagen::{
    generate_network_dataset, generate_paired_binary_dataset, Dataset, Design, ScenarioConfig,
};
use spatial_causal::harness::{
    analyze_csv, generate_standin, read_observed_csv, reproduction_specs, run_main_simulation,
    run_motivating_network, run_motivating_pairs, run_spec, write_observed_csv, write_table,
    AnalysisOptions, ExperimentSpec, ObservedData, PaperTable, ResultTable, TableFormat,
    STANDIN_UNITS,
};
use spatial_causal::scenario::{build_scenario, IndependenceQuery, Scenario};
use spatial_causal::spatial::AdjacencyStructure;

const EXIT_FAILURE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "spatial-causal",
    version,
    about = "Local and interference effects under unmeasured spatial confounding"
)]
struct Cli {
    /// Repeat for more log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study described by flags and/or a config file.
    Simulate(SimulateArgs),
    /// Rerun one of the published simulation tables.
    Reproduce(ReproduceArgs),
    /// OLS and Bayesian analysis of an observed dataset.
    Analyze(AnalyzeArgs),
    /// Test a conditional independence in a scenario graph and list its trails.
    Dsep(DsepArgs),
    /// One Bayesian fit with its draws written to disk.
    Fit(FitArgs),
    /// Write a simulated dataset and its edge list.
    Generate(GenerateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Grid {
    /// One row per scenario at its default parameters.
    Main,
    /// The parameter-variation grid of the motivating studies (OLS only).
    Motivating,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat `key = value` file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "main")]
    grid: Grid,
    /// paired-binary, paired-gaussian or network-line.
    #[arg(long)]
    design: Option<String>,
    /// Scenario id (2a..2f) or `all`.
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n_units: Option<usize>,
    #[arg(long, conflicts_with = "n_units")]
    n_pairs: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated subset of `ols,bayes`.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Semicolon-separated OLS conditioning sets, e.g. `(Z);(Z,Zbar,C)`.
    #[arg(long)]
    conditioning: Option<String>,
    #[command(flatten)]
    chain: ChainArgs,
    /// Scenario parameter override, e.g. `--set phi_z=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(flatten)]
    output: TableOutput,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    n_burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
}

impl ChainArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        for (key, value) in [
            ("n_iter", self.n_iter),
            ("n_burnin", self.n_burnin),
            ("thin", self.thin),
            ("n_chains", self.chains),
        ] {
            if let Some(v) = value {
                out.push((key, v.to_string()));
            }
        }
        out
    }

    fn apply(&self, chain: &mut ChainSettings, n_chains: &mut usize) {
        chain.n_iter = self.n_iter.unwrap_or(chain.n_iter);
        chain.n_burnin = self.n_burnin.unwrap_or(chain.n_burnin);
        chain.thin = self.thin.unwrap_or(chain.thin);
        *n_chains = self.chains.unwrap_or(*n_chains);
    }
}

#[derive(Args)]
struct TableOutput {
    /// Result table; `.md` selects markdown, anything else CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Additional markdown copy of the table.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// 1, 2, S1 or S2.
    #[arg(long)]
    table: PaperTable,
    /// Published replication counts and sample sizes instead of desk scale.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 2024)]
    seed: u64,
    #[command(flatten)]
    output: TableOutput,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// CSV with columns `y`, `z` and numeric covariates.
    #[arg(long)]
    data: PathBuf,
    /// Edge list, one whitespace-separated pair of 1-based unit indices per line.
    #[arg(long)]
    edges: PathBuf,
    /// Log-transform the exposure before neighborhood averaging.
    #[arg(long)]
    log_exposure: bool,
    /// Graph degree for the neighborhood exposure.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u8).range(1..=2))]
    exposure_degree: u8,
    /// Graph degree for the spatial precision matrices; repeat for several fits.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    gh_adjacency: Vec<u8>,
    /// Comma-separated covariate columns; default all other numeric columns.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Write the report rows as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DsepArgs {
    /// Scenario id, 2a..2f or `full`.
    #[arg(long)]
    scenario: Scenario,
    /// Query of the form `X _||_ Y | A,B`.
    #[arg(long)]
    query: String,
    /// Drop the latent common cause of the two exposures.
    #[arg(long)]
    nonspatial_exposure: bool,
    /// Drop the latent common cause of the two confounders.
    #[arg(long)]
    nonspatial_confounder: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    /// Comma-separated covariate columns; default all other numeric columns.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Graph degree for the spatial precision matrices.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    gh_adjacency: u8,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for `chain<k>.csv` and `latent<k>.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Also write each chain in the binary format as `chain<k>.bin`.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// paired-binary, paired-gaussian or network-line; ignored with --standin.
    #[arg(long, default_value = "network-line")]
    design: String,
    #[arg(long, default_value = "2f")]
    scenario: Scenario,
    #[arg(long, default_value_t = 200)]
    n_units: usize,
    /// Observational stand-in: scenario 2f on a nearest-neighbor map graph.
    #[arg(long)]
    standin: bool,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    edges: PathBuf,
    /// Also write the latent confounder and neighborhood averages.
    #[arg(long)]
    truth: Option<PathBuf>,
}

/// Failure with a chosen exit status.
struct Exit(u8);

fn split_override(s: &str) -> anyhow::Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .with_context(|| format!("expected KEY=VALUE, got `{s}`"))
}

fn emit(table: &ResultTable, output: &TableOutput) -> anyhow::Result<()> {
    match &output.out {
        Some(path) => {
            write_table(table, path, TableFormat::from_path(path))?;
            info!("wrote {}", path.display());
        }
        None => print!("{}", table.to_markdown()),
    }
    if let Some(path) = &output.markdown {
        write_table(table, path, TableFormat::Markdown)?;
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let mut spec = ExperimentSpec::new(Design::Network, 200, 100);
    if let Some(path) = &args.config {
        spec = ExperimentSpec::from_config_file(spec, path)?;
    }
    let mut settings: Vec<(&str, String)> = Vec::new();
    let flags = [
        ("design", args.design.clone()),
        ("scenario", args.scenario.clone()),
        ("n_units", args.n_units.map(|v| v.to_string())),
        ("n_pairs", args.n_pairs.map(|v| v.to_string())),
        ("reps", args.reps.map(|v| v.to_string())),
        ("methods", args.methods.clone()),
        ("seed", args.seed.map(|v| v.to_string())),
        ("conditioning", args.conditioning.clone()),
    ];
    settings.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))));
    settings.extend(args.chain.pairs());
    for (key, value) in &settings {
        spec.set(key, value)?;
    }
    for o in &args.overrides {
        let (key, value) = split_override(o)?;
        spec.set(key, value)?;
    }
    spec.validate()?;
    let table = match (args.grid, spec.design) {
        (Grid::Main, _) => run_main_simulation(&spec)?,
        (Grid::Motivating, Design::PairedBinary) => run_motivating_pairs(&spec)?,
        (Grid::Motivating, Design::Network) => run_motivating_network(&spec)?,
        (Grid::Motivating, Design::PairedGaussian) => {
            bail!(spatial_causal::Error::InvalidArgument(
                "the motivating grid exists for paired-binary and network-line only".into()
            ))
        }
    };
    let output = TableOutput {
        out: args.output.out.clone().or(spec.output.clone()),
        markdown: args
            .output
            .markdown
            .clone()
            .or(spec.markdown_output.clone()),
    };
    emit(&table, &output)
}

fn reproduce(args: &ReproduceArgs) -> anyhow::Result<()> {
    let mut table = ResultTable::new();
    for spec in reproduction_specs(args.table, args.full, args.seed) {
        info!(
            "{} n = {}: {} replications",
            spec.design.name(),
            spec.n_units,
            spec.n_replications
        );
        table.extend(run_spec(args.table, &spec)?);
    }
    emit(&table, &args.output)
}

fn analyze(args: &AnalyzeArgs) -> anyhow::Result<()> {
    let mut options = AnalysisOptions {
        log_exposure: args.log_exposure,
        exposure_degree: args.exposure_degree,
        covariates: args.covariates.clone(),
        seed: args.seed,
        ..AnalysisOptions::default()
    };
    if !args.gh_adjacency.is_empty() {
        options.gh_degrees = args.gh_adjacency.clone();
    }
    args.chain.apply(&mut options.chain, &mut options.n_chains);
    let report = analyze_csv(&args.data, &args.edges, &options)?;
    print!("{}", report.to_text());
    if let Some(path) = &args.out {
        report.write_csv(path)?;
    }
    Ok(())
}

fn dsep(args: &DsepArgs) -> anyhow::Result<()> {
    let query: IndependenceQuery = args.query.parse()?;
    let dag = build_scenario(
        args.scenario,
        !args.nonspatial_exposure,
        !args.nonspatial_confounder,
    );
    let separated = dag.d_separated(query.x, query.y, &query.cond)?;
    let report = dag.trail_report(query.x, query.y, &query.cond)?;
    println!(
        "{}: {} {}",
        args.scenario,
        args.query.trim(),
        if separated {
            "holds (d-separated)"
        } else {
            "fails (d-connected)"
        }
    );
    print!("{report}");
    println!();
    println!("source\tsink\tpath\tstatus\treason");
    for row in report.rows() {
        println!("{}", row.join("\t"));
    }
    Ok(())
}

fn fit(args: &FitArgs) -> anyhow::Result<()> {
    let data = read_observed_csv(&args.data, args.covariates.as_deref())?;
    let graph = AdjacencyStructure::read_edge_file(&args.edges, Some(data.n()))?;
    let dataset = Dataset::from_observed(graph.clone(), data.y, data.z, data.c)?;
    let gh = if args.gh_adjacency == 2 {
        graph.second_degree()
    } else {
        graph
    };
    let priors = default_priors(&dataset, &gh)?;
    let model = Model::new(
        ModelData::from_dataset(&dataset).with_gh_adjacency(gh)?,
        priors,
    )?;
    let mut settings = ChainSettings::default();
    let mut n_chains = 2;
    args.chain.apply(&mut settings, &mut n_chains);
    let result = fit_chains(&model, &settings, n_chains, args.seed)?;
    fs::create_dir_all(&args.out)?;
    for (k, chain) in result.chains.iter().enumerate() {
        let file = |name: &str| args.out.join(format!("{name}{}.{}", k + 1, "csv"));
        write_chain_csv(chain, &file("chain"))?;
        write_latent_csv(chain, &file("latent"))?;
        if args.binary {
            write_chain_binary(chain, &args.out.join(format!("chain{}.bin", k + 1)))?;
        }
    }
    for name in ["beta_z", "beta_zbar"] {
        let s = result.summary(name)?;
        println!(
            "{name}: mean {:.4}, 95% interval [{:.4}, {:.4}], split R-hat {:.4}",
            s.mean,
            s.lower,
            s.upper,
            result.rhat(name)?
        );
    }
    println!("draws written to {}", args.out.display());
    if !result.converged() {
        warn!("split R-hat is not below {RHAT_GATE}; run longer chains");
        return Err(Exit(EXIT_NOT_CONVERGED).into());
    }
    Ok(())
}

fn write_truth(ds: &Dataset, path: &Path) -> anyhow::Result<()> {
    let (Some(u), Some(ubar)) = (&ds.u, &ds.ubar) else {
        return Ok(());
    };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["zbar", "u", "ubar"])?;
    for i in 0..ds.n() {
        w.write_record([ds.zbar[i], u[i], ubar[i]].map(|v| format!("{v:.16e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn generate(args: &GenerateArgs) -> anyhow::Result<()> {
    if args.standin {
        let (data, graph) = generate_standin(STANDIN_UNITS, args.seed)?;
        write_observed_csv(&data, &args.data)?;
        graph.write_edge_list(fs::File::create(&args.edges)?)?;
        return Ok(());
    }
    let design: Design = args.design.parse()?;
    let mut cfg = ScenarioConfig::defaults(args.scenario, design);
    for o in &args.overrides {
        let (key, value) = split_override(o)?;
        cfg.set(key, value)?;
    }
    cfg.validate(design)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let ds = match design {
        Design::PairedBinary => generate_paired_binary_dataset(args.n_units / 2, &cfg, &mut rng)?,
        Design::PairedGaussian => {
            let adj = AdjacencyStructure::pairs(args.n_units / 2)?;
            generate_network_dataset(&adj, &cfg, cfg.n_covariates(), &mut rng)?
        }
        Design::Network => {
            let adj = AdjacencyStructure::line(args.n_units)?;
            generate_network_dataset(&adj, &cfg, cfg.n_covariates(), &mut rng)?
        }
    };
    let observed = ObservedData {
        y: ds.y.clone(),
        z: ds.z.clone(),
        c: ds.c.clone(),
        covariate_names: (1..=ds.p()).map(|j| format!("c{j}")).collect(),
    };
    write_observed_csv(&observed, &args.data)?;
    ds.adjacency
        .write_edge_list(fs::File::create(&args.edges)?)?;
    if let Some(path) = &args.truth {
        write_truth(&ds, path)?;
    }
    Ok(())
}

fn exit_status(err: &anyhow::Error) -> u8 {
    if let Some(Exit(code)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    match err.downcast_ref::<spatial_causal::Error>() {
        Some(spatial_causal::Error::Io(_)) | None => EXIT_FAILURE,
        Some(_) => EXIT_INVALID,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reproduce(a) => reproduce(a),
        Command::Analyze(a) => analyze(a),
        Command::Dsep(a) => dsep(a),
        Command::Fit(a) => fit(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_status(&err);
            if code != EXIT_NOT_CONVERGED {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(code)
        }
    }
}

impl std::fmt::Debug for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit status {}", self.0)
    }
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit status {}", self.0)
    }
}

impl std::error::Error for Exit {}
