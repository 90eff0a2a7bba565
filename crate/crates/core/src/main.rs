use std::fs::File;
use std::io::{stdout, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ggm::bounds;
use ggm::dice::{dice, DiceOptions};
use ggm::harness::{run_experiment, Algorithm, ExperimentConfig, ExperimentKind, SampleScale};
use ggm::io;
use ggm::model::{build_instance, ModelFamily};
use ggm::regression::L0Strategy;
use ggm::sampling::{MeanMode, Sampler};
use ggm::slice::slice;

#[derive(Parser, Debug)]
#[command(name = "ggm", version, about = "Gaussian graphical model structure recovery")]
struct Cli {
    /// Seed for every random draw [default: 0, or the config file's base seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FamilyArg {
    TriangleCloud,
    ThreeNode,
    FourNode,
    RegularRandom,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum AlgoArg {
    Dice,
    Slice,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StrategyArg {
    Exhaustive,
    Bnb,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KindArg {
    FailureVsSigma,
    ScatterAtSigma,
    SampleComplexityCurve,
    PopulationExactness,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Dice => Algorithm::Dice,
            AlgoArg::Slice => Algorithm::Slice,
        }
    }
}

impl From<StrategyArg> for L0Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Exhaustive => L0Strategy::Exhaustive,
            StrategyArg::Bnb => L0Strategy::BranchAndBound,
        }
    }
}

impl From<KindArg> for ExperimentKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::FailureVsSigma => ExperimentKind::FailureVsSigma,
            KindArg::ScatterAtSigma => ExperimentKind::ScatterAtSigma,
            KindArg::SampleComplexityCurve => ExperimentKind::SampleComplexityCurve,
            KindArg::PopulationExactness => ExperimentKind::PopulationExactness,
        }
    }
}

#[derive(Args, Debug, Default)]
struct FamilyArgs {
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long)]
    p: Option<usize>,
    /// Degree of the random regular graph.
    #[arg(long = "graph-d")]
    graph_d: Option<usize>,
    #[arg(long)]
    kappa0: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Cloud variance for the triangle-cloud family.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    #[arg(long)]
    kappa_min: Option<f64>,
    #[arg(long)]
    kappa_max: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a model and write it as JSON.
    Gen {
        #[command(flatten)]
        family: FamilyArgs,
        /// Weak-link strength for the triangle families.
        #[arg(long)]
        kappa: Option<f64>,
        /// Degree of the random regular graph (same as --graph-d).
        #[arg(long)]
        d: Option<usize>,
    },
    /// Draw samples from a model file and write them as CSV.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        /// Write an x1..xp header row.
        #[arg(long)]
        header: bool,
    },
    /// Recover the graph from a samples file.
    Recover {
        #[arg(long, value_enum, default_value = "slice")]
        algo: AlgoArg,
        #[arg(long, value_enum, default_value = "exhaustive")]
        strategy: StrategyArg,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        samples: PathBuf,
        /// Estimate the covariance around the sample mean.
        #[arg(long)]
        centered: bool,
    },
    /// Plan sample sizes (natural logarithms throughout).
    Bounds {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
    /// Run a parameter sweep.
    Experiment {
        /// JSON config; flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        #[command(flatten)]
        family: FamilyArgs,
        /// Weak-link strength for the triangle families.
        #[arg(long = "model-kappa")]
        model_kappa: Option<f64>,
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated sweep values.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
        /// Read sample-size sweep values as multiples of the planned sample size.
        #[arg(long)]
        bound_multiple: bool,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        population: bool,
        #[arg(long, env = "GGM_JOBS")]
        jobs: Option<usize>,
        /// Record wall-clock time per trial.
        #[arg(long)]
        timing: bool,
    },
}

/// A problem with the command line rather than with the data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn need<T>(v: Option<T>, flag: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| usage(format!("missing required flag {flag}")))
}

fn build_family(
    args: &FamilyArgs,
    kappa: (Option<f64>, &str),
    d: Option<usize>,
    seed: u64,
) -> anyhow::Result<ModelFamily> {
    let (kappa, kappa_flag) = kappa;
    let family = need(args.family, "--family")?;
    Ok(match family {
        FamilyArg::TriangleCloud => ModelFamily::TriangleCloud {
            kappa: need(kappa, kappa_flag)?,
            epsilon: need(args.eps, "--eps")?,
            sigma2: args.sigma2,
            p: need(args.p, "--p")?,
        },
        FamilyArg::ThreeNode => ModelFamily::ThreeNode {
            kappa0: need(args.kappa0.or(kappa), "--kappa0")?,
            epsilon: need(args.eps, "--eps")?,
        },
        FamilyArg::FourNode => ModelFamily::FourNode {
            kappa: need(kappa, kappa_flag)?,
            epsilon: need(args.eps, "--eps")?,
        },
        FamilyArg::RegularRandom => ModelFamily::RegularRandom {
            p: need(args.p, "--p")?,
            d: need(args.graph_d.or(d), "--graph-d")?,
            kappa_min: need(args.kappa_min, "--kappa-min")?,
            kappa_max: need(args.kappa_max.or(args.kappa_min), "--kappa-max")?,
            seed,
        },
    })
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(stdout().lock())),
    })
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Gen { family, kappa, d } => {
            let spec = build_family(&family, (kappa, "--kappa"), d, seed)?;
            let m = build_instance(&spec)?;
            let mut w = output(&cli.out)?;
            io::write_model(&m, &mut w)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Sample { model, n, header } => {
            let m = io::read_model(open(&model)?)?;
            let s = Sampler::new(&m)?.sample(n, seed)?;
            let mut w = output(&cli.out)?;
            io::write_samples(&s, &mut w, header)?;
            w.flush()?;
        }
        Command::Recover {
            algo,
            strategy,
            d,
            kappa,
            samples,
            centered,
        } => {
            let mode = if centered {
                MeanMode::Centered
            } else {
                MeanMode::KnownZeroMean
            };
            let s = io::read_samples(open(&samples)?, mode)?;
            let g = match algo {
                AlgoArg::Dice => dice(
                    &s,
                    d,
                    kappa,
                    DiceOptions {
                        strategy: strategy.into(),
                    },
                )?,
                AlgoArg::Slice => slice(&s, d, kappa, strategy.into())?,
            };
            let mut w = output(&cli.out)?;
            io::write_graph(&g, &mut w)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Bounds { p, d, kappa, delta } => {
            let plan = bounds::plan(p, d, kappa, delta)?;
            let mut w = output(&cli.out)?;
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &plan)?;
                    writeln!(w)?;
                    eprint!("{}", plan.table());
                }
                Format::Csv => write!(w, "{}", plan.table())?,
            }
            w.flush()?;
        }
        Command::Experiment {
            config,
            kind,
            family,
            model_kappa,
            algo,
            strategy,
            trials,
            sweep,
            bound_multiple,
            n,
            d,
            kappa,
            delta,
            population,
            jobs,
            timing,
        } => {
            let mut cfg = match &config {
                Some(path) => serde_json::from_reader::<_, ExperimentConfig>(open(path)?)
                    .with_context(|| format!("cannot parse {}", path.display()))?,
                None => {
                    let spec = build_family(&family, (model_kappa, "--model-kappa"), d, seed)?;
                    ExperimentConfig::new(need(kind, "--kind")?.into(), spec)
                }
            };
            if config.is_some() {
                if let Some(k) = kind {
                    cfg.experiment = k.into();
                }
                if family.family.is_some() {
                    cfg.family = build_family(&family, (model_kappa, "--model-kappa"), d, seed)?;
                }
            }
            if let Some(s) = cli.seed {
                cfg.base_seed = s;
            }
            if let Some(a) = algo {
                cfg.algorithm = a.into();
            }
            if let Some(s) = strategy {
                cfg.strategy = s.into();
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(s) = sweep {
                cfg.sweep = s;
            }
            if bound_multiple {
                cfg.sample_scale = SampleScale::BoundMultiple;
            }
            cfg.n = n.or(cfg.n);
            cfg.d = d.or(cfg.d);
            cfg.kappa = kappa.or(cfg.kappa);
            if let Some(x) = delta {
                cfg.delta = x;
            }
            cfg.population |= population;
            cfg.jobs = jobs.or(cfg.jobs);
            cfg.timing |= timing;
            if cfg.trials == 0 {
                return Err(usage("--trials must be at least 1"));
            }
            let out = cli.out.clone().or_else(|| cfg.output.clone());
            let report = run_experiment(&cfg)?;
            let mut w = output(&out)?;
            match cli.format.unwrap_or(Format::Csv) {
                Format::Csv => report.write_csv(&mut w)?,
                Format::Json => {
                    serde_json::to_writer_pretty(&mut w, &report)?;
                    writeln!(w)?;
                }
            }
            w.flush()?;
            for s in &report.summaries {
                eprintln!(
                    "{}={} failure={:.3} recovery={:.3} errors={}",
                    report.sweep_param, s.sweep_value, s.failure_probability, s.recovery_rate, s.errors
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
