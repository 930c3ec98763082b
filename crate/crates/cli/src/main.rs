use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use mixcopula::eval::karlis::{bivariate_poisson_mixture_generate, BivPoissonMixtureParams};
use mixcopula::eval::presets::example1;
use mixcopula::eval::study::{records_csv, run_simulation_study, Study, DEFAULT_KL_DRAWS};
use mixcopula::model::generate;
use mixcopula::rng::stream;
use mixcopula::sampler::{write_draws, Manifest};
use mixcopula::viz::{circle_csv, correlation_circle, eigen_csv, project, scores_csv, DEFAULT_MC_DRAWS};
use mixcopula::{
    fit, load_dataset, sweep, ChainConfig, Error, Family, MarginParams, MixedDataset, MixtureParams, Result, Schema,
    VariableKind,
};

#[derive(Parser)]
#[command(name = "mixcopula", version, about = "Clustering of mixed data with Gaussian copula mixtures")]
struct Cli {
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// More progress output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one mixture and write the estimate, partition and diagnostics.
    Fit(FitArgs),
    /// Fit a grid of families and component counts and tabulate BIC/ICL.
    Select(SelectArgs),
    /// Generate a dataset from a preset or a parameter file.
    Simulate(SimulateArgs),
    /// Export a component's PCA map (scores, correlation circle, eigenvalues).
    Visualize(VisualizeArgs),
    /// Run a replicated simulation study.
    Eval(EvalArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Delimited data file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Schema file (`name = kind` per line).
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args, Clone)]
struct ChainArgs {
    /// Post-burn-in iterations per chain.
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    burnin: usize,
    #[arg(long, default_value_t = 10)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Discrete dimension above which the latent step uses Metropolis–Hastings.
    #[arg(long, default_value_t = 6)]
    mh_threshold: usize,
    /// EM restarts for the starting point.
    #[arg(long, default_value_t = 5)]
    em_restarts: usize,
}

impl ChainArgs {
    fn config(&self, g: usize, family: Family) -> ChainConfig {
        let mut cfg = ChainConfig::new(g, family);
        cfg.iterations = self.iters;
        cfg.burn_in = self.burnin;
        cfg.n_chains = self.chains;
        cfg.seed = self.seed;
        cfg.mh_latent_threshold = self.mh_threshold;
        cfg.em_restarts = self.em_restarts;
        cfg
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long)]
    g: usize,
    /// local, homo or hetero.
    #[arg(long, default_value = "hetero")]
    family: Family,
    #[command(flatten)]
    chain: ChainArgs,
    /// Also write every kept draw of the best chain.
    #[arg(long)]
    keep_draws: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, default_value_t = 1)]
    gmin: usize,
    #[arg(long, default_value_t = 5)]
    gmax: usize,
    /// Comma-separated families.
    #[arg(long, value_delimiter = ',', default_value = "local,homo,hetero")]
    families: Vec<Family>,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// example1 or karlis.
    #[arg(long, conflicts_with = "params", required_unless_present = "params")]
    preset: Option<String>,
    /// Mixture parameter document (JSON) to sample from.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VisualizeArgs {
    /// Fit output directory or its theta.json.
    #[arg(long)]
    fit: PathBuf,
    #[command(flatten)]
    input: DataArgs,
    /// Component, 1-based.
    #[arg(long)]
    component: usize,
    /// Two 1-based axes.
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    axes: Vec<usize>,
    /// Gibbs draws per row for conditional latent means.
    #[arg(long, default_value_t = DEFAULT_MC_DRAWS)]
    mc_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// example1 or karlis.
    #[arg(long)]
    study: String,
    #[arg(long, value_delimiter = ',', default_value = "1600")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    burnin: usize,
    #[arg(long, default_value_t = 1)]
    chains: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_KL_DRAWS)]
    kl_draws: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Writes through a temporary file in the target directory, then renames.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn load(input: &DataArgs) -> Result<MixedDataset> {
    let data = load_dataset(&input.data, &input.schema, None)?;
    info!("loaded {} rows × {} columns", data.n(), data.schema().len());
    Ok(data)
}

fn cmd_fit(a: &FitArgs) -> Result<()> {
    let mut cfg = a.chain.config(a.g, a.family);
    cfg.keep_draws = a.keep_draws;
    cfg.validate()?;
    out_dir(&a.out)?;
    let data = load(&a.input)?;
    let r = fit(&data, &cfg)?;
    info!("best chain {} with log-likelihood {:.4}", r.best_chain, r.loglik);

    write_atomic(&a.out.join("theta.json"), r.theta.to_json()?.as_bytes())?;
    let g = r.theta.g();
    let mut part = String::from("row_id,z");
    for k in 1..=g {
        let _ = write!(part, ",t{k}");
    }
    part.push('\n');
    for (i, (z, t)) in r.partition.iter().zip(&r.posterior).enumerate() {
        let _ = write!(part, "{},{}", i + 1, z + 1);
        for v in t {
            let _ = write!(part, ",{v:.10}");
        }
        part.push('\n');
    }
    write_atomic(&a.out.join("partition.csv"), part.as_bytes())?;

    let mut acc = String::from("chain,move,component,variable,accepted,proposed,rate\n");
    let names: Vec<&str> = data.schema().columns().iter().map(|c| c.name.as_str()).collect();
    for ch in &r.chains {
        let l = &ch.acceptance.latent;
        if l.proposed > 0 {
            let _ = writeln!(acc, "{},latent,NA,NA,{},{},{:.6}", ch.chain, l.accepted, l.proposed, l.rate());
        }
        for (k, row) in ch.acceptance.margins.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let _ = writeln!(acc, "{},margin,{},{},{},{},{:.6}", ch.chain, k + 1, names[j], c.accepted, c.proposed, c.rate());
            }
        }
    }
    write_atomic(&a.out.join("acceptance.csv"), acc.as_bytes())?;

    let manifest = Manifest {
        config: cfg,
        best_chain: r.best_chain,
        loglik: r.loglik,
        chains: r.chains.clone(),
        wall_time_secs: r.wall_time_secs,
    };
    write_atomic(&a.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    if a.keep_draws {
        let tmp = tempfile::NamedTempFile::new_in(&a.out).map_err(|e| Error::Io {
            path: a.out.clone(),
            source: e,
        })?;
        write_draws(tmp.path(), &r.draws)?;
        let target = a.out.join("draws.ndjson");
        tmp.persist(&target).map_err(|e| Error::Io {
            path: target,
            source: e.error,
        })?;
    }
    Ok(())
}

fn cmd_select(a: &SelectArgs) -> Result<()> {
    if a.gmin < 1 {
        return Err(Error::Config("g must be ≥ 1".into()));
    }
    if a.gmin > a.gmax {
        return Err(Error::Config(format!("gmin {} exceeds gmax {}", a.gmin, a.gmax)));
    }
    let base = a.chain.config(a.gmin, a.families[0]);
    base.validate()?;
    out_dir(&a.out)?;
    let data = load(&a.input)?;
    let g_range: Vec<usize> = (a.gmin..=a.gmax).collect();
    let report = sweep(&data, &g_range, &a.families, &base)?;
    write_atomic(&a.out.join("criteria.csv"), report.to_csv().as_bytes())?;
    write_atomic(&a.out.join("criteria.json"), report.to_json()?.as_bytes())?;
    if let Some(c) = report.best_bic_cell() {
        info!("best BIC: {} g={}", c.family, c.g);
    }
    if let Some(c) = report.best_icl_cell() {
        info!("best ICL: {} g={}", c.family, c.g);
    }
    Ok(())
}

/// Schema x1..xe matching the margin families of a parameter document.
fn schema_for(theta: &MixtureParams) -> Result<Schema> {
    let names: Vec<String> = (1..=theta.dim()).map(|j| format!("x{j}")).collect();
    let kinds: Vec<(&str, VariableKind)> = theta.components[0]
        .margins
        .iter()
        .zip(&names)
        .map(|(m, n)| {
            let k = match m {
                MarginParams::Gaussian { .. } => VariableKind::Continuous,
                MarginParams::Poisson { .. } => VariableKind::Integer,
                MarginParams::Ordinal { probs } => VariableKind::Ordinal { levels: probs.len() as u32 },
            };
            (n.as_str(), k)
        })
        .collect();
    Schema::from_kinds(&kinds)
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    if a.n == 0 {
        return Err(Error::Config("n must be ≥ 1".into()));
    }
    let mut rng = stream(a.seed, &[]);
    let (data, labels, truth) = match (a.preset.as_deref(), &a.params) {
        (Some(p), _) => match p.parse::<Study>()? {
            Study::Example1 => {
                let (schema, theta) = example1();
                let gen = generate(a.n, &theta, &schema, &mut rng)?;
                (gen.data, gen.labels, theta.to_json()?)
            }
            Study::Karlis => {
                let params = BivPoissonMixtureParams::default();
                let (data, labels) = bivariate_poisson_mixture_generate(&params, a.n, &mut rng)?;
                (data, labels, serde_json::to_string_pretty(&params)?)
            }
        },
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            let theta = MixtureParams::from_json(&text)?;
            let schema = schema_for(&theta)?;
            let gen = generate(a.n, &theta, &schema, &mut rng)?;
            (gen.data, gen.labels, theta.to_json()?)
        }
        (None, None) => return Err(Error::Config("either --preset or --params is required".into())),
    };
    out_dir(&a.out)?;
    write_atomic(&a.out.join("data.csv"), data.to_csv_string().as_bytes())?;
    write_atomic(&a.out.join("data.schema"), data.schema().to_schema_text().as_bytes())?;
    let mut lab = String::from("row_id,z\n");
    for (i, z) in labels.iter().enumerate() {
        let _ = writeln!(lab, "{},{}", i + 1, z + 1);
    }
    write_atomic(&a.out.join("labels.csv"), lab.as_bytes())?;
    write_atomic(&a.out.join("truth.json"), truth.as_bytes())?;
    Ok(())
}

fn cmd_visualize(a: &VisualizeArgs) -> Result<()> {
    if a.axes.len() != 2 || a.axes.contains(&0) {
        return Err(Error::Config("--axes takes two 1-based axis numbers".into()));
    }
    if a.axes[0] == a.axes[1] {
        return Err(Error::Config("axes must differ".into()));
    }
    if a.component == 0 {
        return Err(Error::Config("components are numbered from 1".into()));
    }
    let path = if a.fit.is_dir() { a.fit.join("theta.json") } else { a.fit.clone() };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::Io { path, source: e })?;
    let theta = MixtureParams::from_json(&text)?;
    let data = load(&a.input)?;
    let k = a.component - 1;
    let axes = (a.axes[0] - 1, a.axes[1] - 1);
    let (pca, rows) = project(&data, &theta, k, axes, a.mc_draws, a.seed)?;
    let names: Vec<String> = data.schema().columns().iter().map(|c| c.name.clone()).collect();
    let circle = correlation_circle(&pca, axes, &names)?;
    out_dir(&a.out)?;
    write_atomic(&a.out.join("pca_scores.csv"), scores_csv(k, axes, &rows).as_bytes())?;
    write_atomic(&a.out.join("pca_circle.csv"), circle_csv(axes, &circle).as_bytes())?;
    write_atomic(&a.out.join("pca_eigen.csv"), eigen_csv(&pca).as_bytes())?;
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let study: Study = a.study.parse()?;
    let mut cfg = ChainConfig::new(2, Family::Heteroscedastic);
    cfg.iterations = a.iters;
    cfg.burn_in = a.burnin;
    cfg.n_chains = a.chains;
    cfg.validate()?;
    out_dir(&a.out)?;
    let recs = run_simulation_study(study, &a.sizes, a.replicates, &cfg, a.seed, a.kl_draws)?;
    write_atomic(&a.out.join("study.csv"), records_csv(&recs).as_bytes())?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Visualize(a) => cmd_visualize(a),
        Command::Eval(a) => cmd_eval(a),
    }
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
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
