use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mi_cluster::clustering::{self, ClustererSpec, Method};
use mi_cluster::engine::{Engine, EngineKind, EngineOptions};
use mi_cluster::gmm::Constraint;
use mi_cluster::harness::io;
use mi_cluster::harness::sim::{ModelId, SimModelSpec};
use mi_cluster::harness::{run_experiment, ExperimentConfig};
use mi_cluster::mechanisms::{ampute, MechanismSpec};
use mi_cluster::pooling::{self, consensus, instability_single, total_instability};
use mi_cluster::{Error, Result, RngSeed};

#[derive(Parser)]
#[command(name = "micluster", version, about = "Cluster analysis of incomplete data by multiple imputation")]
struct Cli {
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Token marking a missing cell in input and output CSVs.
    #[arg(long, global = true, default_value = "NA")]
    na_token: String,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset and apply a missingness mechanism.
    Simulate {
        #[arg(long)]
        model: ModelId,
        /// none, mcar, mar1 or mar2.
        #[arg(long, default_value = "none")]
        mechanism: String,
        #[arg(long, default_value_t = 0.0)]
        tau: f64,
        /// Receives complete.csv, incomplete.csv and labels.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Produce completed datasets and chain diagnostics.
    Impute {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        engine: EngineKind,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[command(flatten)]
        chain: ChainArgs,
        /// Receives imputation_<m>.csv and diagnostics.csv.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Cluster a complete dataset.
    Cluster {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        clusterer: ClustererArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pool partitions of the completed datasets into a consensus partition.
    Pool {
        /// Label files, one per completed dataset.
        #[arg(long, num_args = 1.., required = true)]
        labels: Vec<PathBuf>,
        #[arg(long)]
        k: usize,
        /// Directory of imputation_<m>.csv matching the label files; with
        /// `--instability-rounds` it yields the total instability.
        #[arg(long)]
        imputations: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        instability_rounds: usize,
        #[command(flatten)]
        clusterer: ClustererArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Total instability for each number of clusters up to `k_max`.
    ChooseK {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        engine: EngineKind,
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value_t = 6)]
        k_max: usize,
        #[arg(long, default_value_t = 20)]
        instability_rounds: usize,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long, default_value = "kmeans")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a replicated experiment described by a TOML file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// 0/1 predictor matrix for the FCS engines.
    #[arg(long)]
    predictors: Option<PathBuf>,
}

impl ChainArgs {
    fn options(&self) -> Result<EngineOptions> {
        Ok(EngineOptions {
            burn_in: self.burn_in,
            thin: self.thin,
            l: self.l,
            predictors: self.predictors.as_deref().map(io::load_predictor_matrix).transpose()?,
        })
    }
}

#[derive(Args)]
struct ClustererArgs {
    #[arg(long, default_value = "mixture")]
    method: Method,
    /// Number of clusters; for `pool` this is taken from `--k`.
    #[arg(long = "clusters", default_value_t = 2)]
    clusters: usize,
    #[arg(long, default_value = "homo")]
    constraint: Constraint,
}

impl ClustererArgs {
    fn spec(&self, k: usize) -> ClustererSpec {
        let mut spec = ClustererSpec::new(self.method, k);
        spec.constraint = self.constraint;
        spec
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } | Error::Config(_) | Error::Csv(_) => 2,
        e if e.is_chain_failure() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(cli: Cli) -> Result<()> {
    let seed = RngSeed(cli.seed);
    let na = cli.na_token.as_str();
    match cli.command {
        Command::Simulate {
            model,
            mechanism,
            tau,
            out_dir,
        } => {
            let sim = SimModelSpec::new(model);
            let full = sim.generate(&mut seed.derive("generate", 0).rng())?;
            let spec = match mechanism.as_str() {
                "none" => None,
                "mcar" => Some(MechanismSpec::mcar(tau)),
                "mar1" => Some(MechanismSpec::mar1(tau)),
                "mar2" => Some(MechanismSpec::mar2(tau)),
                other => return Err(Error::Config(format!("unknown mechanism '{other}'"))),
            };
            std::fs::create_dir_all(&out_dir)?;
            let incomplete = match spec {
                Some(s) => ampute(&full, &s, &mut seed.derive("ampute", 0).rng())?,
                None => full.clone(),
            };
            io::save_csv(&full, &out_dir.join("complete.csv"), na)?;
            io::save_csv(&incomplete, &out_dir.join("incomplete.csv"), na)?;
            io::save_labels(full.ref_labels().expect("simulated labels"), &out_dir.join("labels.csv"))?;
        }
        Command::Impute {
            input,
            engine,
            k,
            m,
            chain,
            out_dir,
        } => {
            let data = io::load_csv(&input, na)?;
            let engine = Engine::new(engine, k, m, &chain.options()?)?;
            let res = engine.impute(&data, seed)?;
            io::save_imputations(&res.completed, data.names(), &out_dir)?;
            io::write_diagnostics(create(&out_dir.join("diagnostics.csv"))?, &res.diagnostics)?;
        }
        Command::Cluster { input, clusterer, out } => {
            let data = io::load_csv(&input, na)?;
            if !data.is_complete() {
                return Err(Error::Config(format!("{} has missing values", input.display())));
            }
            let spec = clusterer.spec(clusterer.clusters);
            let p = clustering::cluster(&spec, data.values(), &mut seed.rng())?;
            io::save_labels(&p, &out)?;
        }
        Command::Pool {
            labels,
            k,
            imputations,
            instability_rounds,
            clusterer,
            out,
        } => {
            let parts = labels.iter().map(|p| io::load_labels(p)).collect::<Result<Vec<_>>>()?;
            let c = consensus(&parts, k, &mut seed.derive("consensus", 0).rng())?;
            io::save_labels(&c.partition, &out)?;
            println!("consensus_objective,{}", io::format_value(c.objective));
            if let (Some(dir), true) = (imputations, instability_rounds > 0) {
                let copies = io::load_imputations(&dir)?;
                if copies.len() != parts.len() {
                    return Err(Error::DimensionMismatch {
                        expected: parts.len(),
                        got: copies.len(),
                    });
                }
                let spec = clusterer.spec(k);
                let v = copies
                    .iter()
                    .enumerate()
                    .map(|(m, d)| {
                        let mut rng = seed.derive("instability", m as u64).rng();
                        instability_single(d, &spec, instability_rounds, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                println!("total_instability,{}", io::format_value(total_instability(&parts, &v)?));
            }
        }
        Command::ChooseK {
            input,
            engine,
            m,
            k_max,
            instability_rounds,
            chain,
            method,
            out,
        } => {
            let data = io::load_csv(&input, na)?;
            let engine = Engine::new(engine, 2, m, &chain.options()?)?;
            let spec = ClustererSpec::new(method, 2);
            let res = pooling::choose_k(&data, &engine, &spec, k_max, instability_rounds, seed)?;
            io::write_instability_table(create(&out)?, &[(method.name(), engine.kind().name(), &res)])?;
            println!("best_k,{}", res.best_k);
        }
        Command::Experiment { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let base = config.parent().unwrap_or(Path::new("."));
            let mut spec = cfg.to_spec(base)?;
            spec.seed = cfg.seed.unwrap_or(cli.seed);
            let results = run_experiment(&spec)?;
            let results_path = base.join(cfg.results_path.as_deref().unwrap_or(Path::new("results.csv")));
            let summary_path = base.join(cfg.summary_path.as_deref().unwrap_or(Path::new("summary.csv")));
            results.write_csv(create(&results_path)?)?;
            results.write_summary_csv(create(&summary_path)?)?;
        }
    }
    Ok(())
}
