use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use diffnoise::estimate::{estimate_adaptive_with, estimate_lga};
use diffnoise::model::ou::{default_alpha_box, default_beta_box, ou_model};
use diffnoise::noise_test::DEFAULT_TAU;
use diffnoise::sim::{contaminate, simulate_ou_exact, simulate_path, EulerOptions};
use diffnoise::study::{read_records, write_records, StudyConfig, StudyReport};
use diffnoise::{
    derive_scheme, ingest_csv, noise_test, run_study, ColumnSpec, Error, NoiseDistribution, NoiseSpec,
    ObservationSeries, OuConfig, ParamBox,
};

#[derive(Parser)]
#[command(name = "diffnoise", version, about = "Estimation and noise detection for diffusions observed with noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an OU path, add noise and write observations as CSV.
    Simulate(SimulateArgs),
    /// Fit the OU model to observations (CSV in, JSON out).
    Estimate(EstimateArgs),
    /// Test for observation noise (CSV in, JSON out).
    Test(TestArgs),
    /// Run a Monte Carlo study from a TOML or JSON config.
    Study(StudyArgs),
}

#[derive(Args)]
struct Step {
    /// Observation step.
    #[arg(long, conflicts_with = "gamma")]
    h: Option<f64>,
    /// Use h = n^(-gamma).
    #[arg(long)]
    gamma: Option<f64>,
}

impl Step {
    fn resolve(&self, n: usize) -> anyhow::Result<f64> {
        match (self.h, self.gamma) {
            (Some(h), _) => Ok(h),
            (None, Some(g)) => Ok((n as f64).powf(-g)),
            (None, None) => bail!("one of --h and --gamma is required"),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[command(flatten)]
    step: Step,
    /// OU model file (TOML); the 2-D reference model when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Noise variance `s · I`.
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseKind,
    /// Initial state, comma separated; all ones when absent.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    /// Use Euler–Maruyama with this many substeps instead of the exact transition.
    #[arg(long)]
    euler_substeps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the latent path here.
    #[arg(long)]
    latent: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum NoiseKind {
    Gaussian,
    Uniform,
    Laplace,
}

impl From<NoiseKind> for NoiseDistribution {
    fn from(k: NoiseKind) -> Self {
        match k {
            NoiseKind::Gaussian => NoiseDistribution::Gaussian,
            NoiseKind::Uniform => NoiseDistribution::Uniform,
            NoiseKind::Laplace => NoiseDistribution::Laplace,
        }
    }
}

#[derive(Args)]
struct Input {
    /// CSV file with one row per observation.
    input: PathBuf,
    /// Observation step in the chosen time unit.
    #[arg(long)]
    h: f64,
    /// Columns to use, by header name or zero-based index; all but a leading `t` when absent.
    #[arg(long, value_delimiter = ',')]
    columns: Option<Vec<String>>,
    /// The file has no header row.
    #[arg(long)]
    no_header: bool,
}

impl Input {
    fn load(&self) -> anyhow::Result<ObservationSeries> {
        let spec = match &self.columns {
            None => ColumnSpec::AllValues,
            Some(cols) => match cols.iter().map(|c| c.parse::<usize>()).collect::<Result<Vec<_>, _>>() {
                Ok(idx) => ColumnSpec::Indices(idx),
                Err(_) => ColumnSpec::Names(cols.clone()),
            },
        };
        Ok(ingest_csv(&self.input, self.h, &spec, !self.no_header)?)
    }
}

/// Search boxes for estimation; defaults apply to missing entries.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxFile {
    alpha_box: Option<ParamBox>,
    beta_box: Option<ParamBox>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// TOML file with `alpha_box` and/or `beta_box`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Attach the plug-in covariance, assuming Gaussian noise.
    #[arg(long)]
    cov: bool,
    /// Also fit the raw-increment Gaussian estimator.
    #[arg(long)]
    lga: bool,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    input: Input,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct StudyArgs {
    /// Study config (TOML or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config thread count.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for report.json, records.jsonl, estimates.csv and rejections.csv.
    #[arg(long, default_value = "study-out")]
    out: PathBuf,
    /// Rebuild the report from an existing records.jsonl instead of simulating.
    #[arg(long)]
    from_records: Option<PathBuf>,
}

#[derive(Serialize)]
struct TestOutput {
    z: f64,
    p_value: f64,
    level: f64,
    reject: bool,
    n: usize,
    p: usize,
    k: usize,
    tau: f64,
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn emit_json<T: Serialize>(value: &T, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            let mut w = create(path)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => {
            let mut out = io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        }
    }
    Ok(())
}

fn simulate(args: &SimulateArgs) -> anyhow::Result<()> {
    let ou = match &args.config {
        Some(path) => toml::from_str::<OuConfig>(&read_text(path)?).context("parsing model file")?,
        None => OuConfig::reference_2d(),
    };
    let d = ou.dim();
    let (alpha, beta) = (ou.alpha()?, ou.beta()?);
    let x0 = args.x0.clone().unwrap_or_else(|| vec![1.0; d]);
    let h = args.step.resolve(args.n)?;
    let path = match args.euler_substeps {
        None => simulate_ou_exact(d, &alpha, &beta, &x0, args.n, h, 0, (args.seed, 0))?,
        Some(substeps) => simulate_path(
            &ou.model()?,
            &alpha,
            &beta,
            &x0,
            args.n,
            h,
            &EulerOptions { substeps, burn_in: 0 },
            (args.seed, 0),
        )?,
    };
    let noise = NoiseSpec::new(DMatrix::identity(d, d) * args.lambda, args.noise.into())?;
    let obs = contaminate(&path, &noise, (args.seed, 1))?;
    if let Some(latent) = &args.latent {
        path.write_csv(create(latent)?)?;
    }
    match &args.output {
        Some(p) => obs.write_csv(create(p)?)?,
        None => obs.write_csv(io::stdout().lock())?,
    }
    Ok(())
}

fn estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let obs = args.input.load()?;
    let d = obs.dim();
    let boxes: BoxFile = match &args.config {
        Some(path) => toml::from_str(&read_text(path)?).context("parsing box file")?,
        None => BoxFile::default(),
    };
    let model = ou_model(
        d,
        boxes.alpha_box.unwrap_or_else(|| default_alpha_box(d)),
        boxes.beta_box.unwrap_or_else(|| default_beta_box(d)),
    )?;
    let scheme = derive_scheme(obs.n(), obs.h(), args.tau)?;
    let moments = args.cov.then(|| vec![3.0; d]);
    let result = estimate_adaptive_with(&obs, &scheme, &model, moments.as_deref())?;
    let lga = if args.lga { Some(estimate_lga(&obs, &model)?) } else { None };

    #[derive(Serialize)]
    struct Output<'a> {
        #[serde(flatten)]
        adaptive: &'a diffnoise::EstimationResult,
        #[serde(skip_serializing_if = "Option::is_none")]
        lga: Option<diffnoise::LgaEstimate>,
    }
    emit_json(
        &Output {
            adaptive: &result,
            lga,
        },
        args.output.as_deref(),
    )
}

fn test(args: &TestArgs) -> anyhow::Result<()> {
    let obs = args.input.load()?;
    let scheme = derive_scheme(obs.n(), obs.h(), args.tau)?;
    let res = noise_test(&obs, &scheme, args.level)?;
    emit_json(
        &TestOutput {
            z: res.z,
            p_value: res.p_value,
            level: res.level,
            reject: res.reject,
            n: res.n,
            p: res.p,
            k: res.k,
            tau: res.tau,
        },
        args.output.as_deref(),
    )
}

fn study(args: &StudyArgs) -> anyhow::Result<()> {
    let mut config = StudyConfig::parse(&read_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(threads) = args.threads {
        config.threads = Some(threads);
    }
    config.validate()?;
    let report = match &args.from_records {
        Some(path) => {
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            StudyReport::from_records(config, read_records(BufReader::new(file))?)?
        }
        None => run_study(&config)?,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    if args.from_records.is_none() {
        let mut w = create(&args.out.join("records.jsonl"))?;
        write_records(&report.records, &mut w)?;
        w.flush()?;
    }
    emit_json(&report, Some(&args.out.join("report.json")))?;
    report.write_estimates_csv(create(&args.out.join("estimates.csv"))?)?;
    report.write_rejections_csv(create(&args.out.join("rejections.csv"))?)?;
    eprintln!(
        "{} replications in {:.1} s; {} with failures; output in {}",
        report.config.replications,
        report.runtime.total_seconds,
        report.replications_with_failures,
        args.out.display()
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_degenerate_data() => 2,
        Some(e) if e.is_non_convergence() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Test(a) => test(a),
        Command::Study(a) => study(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
