use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use sparse_cdma::bp::{bp_decode, BpOptions, FactorGraph};
use sparse_cdma::channel::{random_bits, sigma0_sq_from_psd_db, transmit, ChannelInstance};
use sparse_cdma::chip_bound::{bound_csv, bound_table};
use sparse_cdma::ensembles::{sample_signature, CodeEnsemble, EnsembleKind, EnsembleSpec, GainKind, SignatureMatrix};
use sparse_cdma::experiment::{recipe, NOISELESS_MODEL_VARIANCE, run_sweep, SweepConfig, RECIPES};
use sparse_cdma::metrics::{MetricOptions, PerformanceReport, SolutionTag};
use sparse_cdma::popdyn::{classify_point, solve_rs, ClassifyOptions, ConvergenceCriterion, Init, ModelParams, PopulationDynamics, RsSolution};
use sparse_cdma::stability::{solution_lambda, DEFAULT_BURN_IN, DEFAULT_WINDOW};
use sparse_cdma::Error;

#[derive(Parser)]
#[command(name = "spcdma", version, about = "Sparsely spread CDMA: BP decoding, population dynamics and sweeps")]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a signature matrix and transmit random bits.
    Generate(GenerateArgs),
    /// Decode a channel instance with belief propagation.
    Decode(DecodeArgs),
    /// Run population dynamics at one PSD.
    Popdyn(PopdynArgs),
    /// Estimate the stability parameter of a population-dynamics solution.
    Stability(StabilityArgs),
    /// Run a parameter sweep from a config file or a named recipe.
    Sweep(SweepArgs),
    /// Zero-noise single-chip information bound as CSV.
    ChipBound(ChipBoundArgs),
    /// Print the default sweep configuration (or a recipe).
    Defaults {
        #[arg(long)]
        recipe: Option<String>,
    },
}

#[derive(Args, Clone)]
struct EnsembleArgs {
    #[arg(long, default_value = "regular")]
    kind: String,
    /// Chips per user.
    #[arg(long, default_value_t = 3.0)]
    c: f64,
    /// Users per chip.
    #[arg(long, default_value_t = 3.0)]
    l: f64,
    #[arg(long, default_value = "bpsk")]
    gain: String,
}

impl EnsembleArgs {
    fn code(&self) -> Result<CodeEnsemble, Error> {
        let kind: EnsembleKind = self.kind.parse()?;
        let gain: GainKind = self.gain.parse()?;
        Ok(CodeEnsemble::new(kind, self.c, self.l)?.with_gain(gain))
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    /// Number of chips N.
    #[arg(long)]
    chips: usize,
    /// Number of users K; defaults to alpha * N.
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    psd_db: f64,
    /// Also write the sent bits and noise.
    #[arg(long)]
    fixture: bool,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value_t = 500)]
    max_sweeps: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Include posterior magnetisations in the output.
    #[arg(long)]
    magnetizations: bool,
}

#[derive(Copy, Clone, ValueEnum)]
enum InitArg {
    Random,
    Ferromagnetic,
    /// Both initialisations in lockstep with coexistence classification.
    Dual,
}

#[derive(Args)]
struct PopdynArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long)]
    psd_db: f64,
    #[arg(long, default_value_t = 50_000)]
    population: usize,
    #[arg(long, value_enum, default_value = "dual")]
    init: InitArg,
    #[arg(long, default_value_t = 2000)]
    max_sweeps: usize,
    /// Run exactly this many sweeps instead of stopping at convergence (single init only).
    #[arg(long)]
    sweeps: Option<usize>,
    /// Save the final state of a single-init run into this directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue a run saved with --checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Also evaluate performance metrics with this many samples per term.
    #[arg(long)]
    metrics: Option<usize>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[arg(long)]
    psd_db: f64,
    #[arg(long, default_value_t = 50_000)]
    population: usize,
    #[arg(long, value_enum, default_value = "ferromagnetic")]
    init: InitArg,
    /// Sweeps before tracking starts.
    #[arg(long, default_value_t = 500)]
    sweeps: usize,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, conflicts_with = "recipe")]
    config: Option<PathBuf>,
    #[arg(long)]
    recipe: Option<String>,
}

#[derive(Args)]
struct ChipBoundArgs {
    #[arg(long, default_value_t = 10)]
    l_max: usize,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidEnsemble(_) | Error::Infeasible { .. } | Error::Parse { .. } => Failure::Invalid(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> String {
    format!("{}\n", serde_json::to_string_pretty(v).expect("json"))
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<(), Failure> {
    let code = a.ensemble.code()?;
    let users = a.users.unwrap_or_else(|| (a.chips as f64 * code.load()).round() as usize);
    let spec = EnsembleSpec::new(code, a.chips, users)?;
    let matrix = sample_signature(&spec, cli.seed)?;
    let bits = random_bits(users, cli.seed);
    let inst = transmit(&matrix, &bits, sigma0_sq_from_psd_db(a.psd_db), cli.seed)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    emit(Some(&dir.join("matrix.txt")), &matrix.to_text())?;
    emit(Some(&dir.join("instance.txt")), &inst.to_text(a.fixture))?;
    Ok(())
}

fn decode(cli: &Cli, a: &DecodeArgs) -> Result<(), Failure> {
    let matrix = SignatureMatrix::from_text(&read(&a.matrix)?)?;
    let inst = ChannelInstance::from_text(&read(&a.instance)?)?;
    if !(0.0..1.0).contains(&a.damping) {
        return Err(Failure::Invalid("damping must lie in [0, 1)".into()));
    }
    let graph = if inst.sigma0_sq > 0.0 {
        FactorGraph::nishimori(&matrix, &inst)?
    } else {
        FactorGraph::new(&matrix, &inst.received, NOISELESS_MODEL_VARIANCE, 1.0)?
    };
    let res = bp_decode(
        &graph,
        &BpOptions {
            max_sweeps: a.max_sweeps,
            tol: a.tol,
            damping: a.damping,
        },
    );
    let ber = (!inst.bits.is_empty()).then(|| {
        res.estimates
            .iter()
            .zip(&inst.bits)
            .map(|(&e, &b)| if e == 0 { 0.5 } else if e != b { 1.0 } else { 0.0 })
            .sum::<f64>()
            / inst.bits.len() as f64
    });
    let mut v = json!({
        "seed": cli.seed,
        "sweeps": res.sweeps,
        "converged": res.converged,
        "ber": ber,
    });
    if a.magnetizations {
        v["magnetizations"] = json!(res.magnetizations);
    }
    emit(cli.out.as_deref(), &pretty(&v))
}

fn report_json(sol: &RsSolution, tag: SolutionTag, samples: Option<usize>, seed: u64) -> Result<Value, Failure> {
    let mut state = sol.state.clone();
    let summary = state.summary(10_000);
    let mut v = json!({
        "init": sol.init(),
        "sweeps": sol.sweeps(),
        "converged": sol.converged,
        "mean_m": summary.mean_m,
        "p_b": summary.p_b,
    });
    if let Some(n) = samples {
        let opts = MetricOptions {
            samples: n,
            overlap_samples: n,
        };
        let rep = PerformanceReport::evaluate(sol, tag, None, &opts, seed)?;
        v["report"] = serde_json::to_value(&rep).expect("json");
    }
    Ok(v)
}

fn single_init(init: InitArg) -> Init {
    match init {
        InitArg::Random => Init::Random,
        _ => Init::Ferromagnetic,
    }
}

fn popdyn(cli: &Cli, a: &PopdynArgs) -> Result<(), Failure> {
    if let Some(dir) = &a.resume {
        let mut state = PopulationDynamics::load_checkpoint(dir)?;
        state.run(a.sweeps.unwrap_or(0));
        if let Some(c) = &a.checkpoint {
            state.save_checkpoint(c)?;
        }
        let sol = RsSolution { state, converged: false };
        return emit(cli.out.as_deref(), &pretty(&report_json(&sol, SolutionTag::Unique, a.metrics, cli.seed)?));
    }
    let code = a.ensemble.code()?;
    let params = ModelParams::at_psd_db(code, a.psd_db);
    let criterion = ConvergenceCriterion {
        max_sweeps: a.max_sweeps,
        ..Default::default()
    };
    let v = match a.init {
        InitArg::Dual => {
            let opts = ClassifyOptions {
                population: a.population,
                criterion,
                ..Default::default()
            };
            let (verdict, out) = classify_point(code, a.psd_db, &opts, cli.seed);
            json!({
                "seed": cli.seed,
                "verdict": serde_json::to_value(&verdict).expect("json"),
                "ferromagnetic": report_json(&out.ferromagnetic, SolutionTag::Good, a.metrics, cli.seed)?,
                "random": report_json(&out.random, SolutionTag::Bad, a.metrics, cli.seed)?,
            })
        }
        init => {
            let init = single_init(init);
            let sol = match a.sweeps {
                Some(n) => {
                    let mut state = PopulationDynamics::new(params, a.population, init, cli.seed);
                    state.run(n);
                    RsSolution { state, converged: false }
                }
                None => solve_rs(params, a.population, init, &criterion, cli.seed),
            };
            if let Some(c) = &a.checkpoint {
                sol.state.save_checkpoint(c)?;
            }
            let mut v = report_json(&sol, SolutionTag::Unique, a.metrics, cli.seed)?;
            v["seed"] = json!(cli.seed);
            v
        }
    };
    emit(cli.out.as_deref(), &pretty(&v))
}

fn stability(cli: &Cli, a: &StabilityArgs) -> Result<(), Failure> {
    let code = a.ensemble.code()?;
    let params = ModelParams::at_psd_db(code, a.psd_db);
    let mut state = PopulationDynamics::new(params, a.population, single_init(a.init), cli.seed);
    state.run(a.sweeps);
    let sol = RsSolution { state, converged: false };
    let lambda = solution_lambda(&sol, a.burn_in, a.window)?;
    let v = json!({
        "seed": cli.seed,
        "psd_db": a.psd_db,
        "sweeps": a.sweeps,
        "lambda": serde_json::to_value(lambda).expect("json"),
        "noisy": lambda.is_noisy(),
    });
    emit(cli.out.as_deref(), &pretty(&v))
}

fn sweep(cli: &Cli, a: &SweepArgs) -> Result<i32, Failure> {
    let mut config = match (&a.config, &a.recipe) {
        (Some(p), _) => SweepConfig::from_toml(&read(p)?)?,
        (None, Some(r)) => recipe(r)?,
        (None, None) => return Err(Failure::Invalid("give --config or --recipe".into())),
    };
    if let Some(out) = &cli.out {
        config.run.output_dir = out.clone();
    }
    if cli.threads > 0 {
        config.run.threads = cli.threads;
    }
    let (manifest, status) = run_sweep(&config)?;
    eprintln!("{status}: {} artifacts, {} failures", manifest.artifacts.len(), manifest.failures.len());
    Ok(status.exit_code())
}

fn run(cli: &Cli) -> Result<i32, Failure> {
    if cli.threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match &cli.command {
        Command::Generate(a) => generate(cli, a)?,
        Command::Decode(a) => decode(cli, a)?,
        Command::Popdyn(a) => popdyn(cli, a)?,
        Command::Stability(a) => stability(cli, a)?,
        Command::Sweep(a) => return sweep(cli, a),
        Command::ChipBound(a) => emit(cli.out.as_deref(), &bound_csv(&bound_table(a.l_max)?))?,
        Command::Defaults { recipe: r } => {
            let c = match r {
                Some(name) => recipe(name)?,
                None => SweepConfig::default(),
            };
            let mut text = format!("# recipes: {}\n", RECIPES.join(", "));
            text.push_str(&c.to_toml());
            emit(cli.out.as_deref(), &text)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
