use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use modelopt::envelope::{envelope_trace, EnvelopeOptions};
use modelopt::solver::{run, SolverConfig};
use modelopt::{ProblemInstance, ProblemKind, StepsizeParams};
use modelopt_bench::config::{GridKind, WORKERS_ENV};
use modelopt_bench::{plot, sweep, BenchError, ConvexConfig, Method, ProblemSpec, SweepConfig};

#[derive(Parser)]
#[command(name = "modelopt", version, about = "Stochastic model-based optimization experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a problem instance and write it as text.
    Generate(GenerateArgs),
    /// Run a θ-grid sweep; writes results.csv and manifest.json.
    Sweep(SweepArgs),
    /// Render SVG figures from a results CSV.
    Plot(PlotArgs),
    /// Run the convex-mode rate suite; writes a JSON report.
    Convex(ConvexArgs),
    /// Envelope gradient norms along one run's iterates, as CSV.
    EnvelopeTrace(EnvelopeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_kind)]
    model: ProblemKind,
    #[arg(long, default_value_t = modelopt::problems::DEFAULT_M)]
    m: usize,
    #[arg(long, default_value_t = modelopt::problems::DEFAULT_N)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    cond_kappa: f64,
    #[arg(long, default_value_t = 0.2)]
    p_fail: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file (stdout when omitted).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config; the flags below override its fields.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Single problem, replacing the config's problem list.
    #[arg(long, value_parser = parse_kind)]
    model: Option<ProblemKind>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    cond_kappa: Option<f64>,
    #[arg(long)]
    p_fail: Option<f64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    theta_grid: Option<Vec<f64>>,
    /// Use the default grid extended by decades up to 1e8.
    #[arg(long)]
    extended_grid: bool,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Reuse the update sample as the reference sample (`ξ' = ξ`).
    #[arg(long)]
    shared_reference: bool,
}

#[derive(Args)]
struct PlotArgs {
    /// results.csv written by `sweep`.
    results: PathBuf,
    #[arg(long, short, default_value = "figures")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct ConvexArgs {
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u64>>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct EnvelopeArgs {
    /// Instance file written by `generate`.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long, default_value = "SGD-G", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10)]
    epochs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of recorded iterates along the run.
    #[arg(long, default_value_t = 20)]
    points: u64,
    /// Envelope parameter; defaults to twice the weak-convexity estimate plus one.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<ProblemKind, String> {
    ProblemKind::parse(s).ok_or_else(|| format!("unknown model {s:?}"))
}

fn parse_method(s: &str) -> Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), BenchError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| BenchError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sweep_config(a: SweepArgs) -> Result<SweepConfig, BenchError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| BenchError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))?
        }
        None => SweepConfig {
            problems: Vec::new(),
            methods: Vec::new(),
            theta_grid: None,
            grid: GridKind::Default,
            seeds: vec![0],
            epochs: modelopt_bench::config::DEFAULT_EPOCHS,
            alpha: modelopt_bench::config::DEFAULT_ALPHA,
            output_dir: PathBuf::from("results"),
            workers: 0,
            reference_sample: Default::default(),
        },
    };
    if let Some(model) = a.model {
        cfg.problems = vec![ProblemSpec {
            model,
            m: a.m.unwrap_or(modelopt::problems::DEFAULT_M),
            n: a.n.unwrap_or(modelopt::problems::DEFAULT_N),
            cond_kappa: a.cond_kappa.unwrap_or(1.0),
            p_fail: a.p_fail.unwrap_or(0.2),
        }];
    } else if a.m.is_some() || a.n.is_some() || a.cond_kappa.is_some() || a.p_fail.is_some() {
        return Err(BenchError::Config("--m/--n/--cond-kappa/--p-fail require --model".into()));
    }
    if let Some(v) = a.methods {
        cfg.methods = v;
    }
    if a.extended_grid {
        cfg.grid = GridKind::Extended;
        cfg.theta_grid = None;
    }
    if let Some(v) = a.theta_grid {
        cfg.theta_grid = Some(v);
    }
    if let Some(v) = a.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.output_dir {
        cfg.output_dir = v;
    }
    if let Some(v) = a.workers {
        if cfg.workers == 0 || a.config.is_none() {
            cfg.workers = v;
        }
    }
    if a.shared_reference {
        cfg.reference_sample = modelopt::ReferenceSample::Shared;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn convex_config(a: ConvexArgs) -> Result<ConvexConfig, BenchError> {
    let mut cfg: ConvexConfig = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| BenchError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", p.display())))?
        }
        None => serde_json::from_str(r#"{"seeds":[0]}"#).expect("defaults parse"),
    };
    if let Some(v) = a.seeds {
        cfg.seeds = v;
    }
    if let Some(v) = a.horizons {
        cfg.horizons = v;
    }
    if let Some(v) = a.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = a.output {
        cfg.output = v;
    }
    if let Some(v) = a.workers {
        if cfg.workers == 0 {
            cfg.workers = v;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn envelope_cmd(a: EnvelopeArgs) -> Result<(), BenchError> {
    let text = std::fs::read_to_string(&a.instance).map_err(|e| BenchError::io(&a.instance, e))?;
    let problem = ProblemInstance::from_text(&text)?;
    let (model, policy) = a
        .method
        .solver_parts()
        .ok_or_else(|| BenchError::Config("envelope-trace supports the model-based methods only".into()))?;
    if a.points == 0 {
        return Err(BenchError::Config("--points must be positive".into()));
    }
    let mut cfg = SolverConfig::new(&problem, model, policy, StepsizeParams::experiment(a.theta, a.alpha, 0), a.epochs, a.seed);
    cfg.early_stop = false;
    cfg.record_iterates = true;
    cfg.record_stride = (cfg.horizon(&problem) / a.points).max(1);
    let rec = run(&problem, &cfg)?;
    let opts = match a.rho {
        Some(rho) => EnvelopeOptions::new(rho),
        None => EnvelopeOptions::for_problem(&problem),
    };
    let mut iterates = rec.iterates.clone();
    iterates.push(rec.final_x.clone());
    let grads = envelope_trace(&problem, &iterates, &opts)?;
    let mut out = String::from("k,objective,envelope_grad_norm_sq\n");
    for (i, (x, g)) in iterates.iter().zip(&grads).enumerate() {
        let k = if i + 1 == iterates.len() { rec.iterations_run + 1 } else { i as u64 * cfg.record_stride + 1 };
        out.push_str(&format!("{k},{},{g}\n", problem.objective(x)?));
    }
    emit(a.out.as_ref(), &out)
}

fn dispatch(cmd: Cmd) -> Result<(), BenchError> {
    match cmd {
        Cmd::Generate(a) => {
            let p = ProblemInstance::generate(a.m, a.n, a.cond_kappa, a.p_fail, a.model, a.seed)?;
            emit(a.out.as_ref(), &p.to_text())
        }
        Cmd::Sweep(a) => {
            let cfg = sweep_config(a)?;
            let path = sweep::sweep(&cfg)?;
            println!("{}", path.display());
            Ok(())
        }
        Cmd::Plot(a) => {
            for p in plot::emit_plots(&a.results, &a.output_dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Cmd::Convex(a) => {
            let cfg = convex_config(a)?;
            let path = modelopt_bench::convex::write_convex_report(&cfg)?;
            println!("{}", path.display());
            Ok(())
        }
        Cmd::EnvelopeTrace(a) => envelope_cmd(a),
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
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
