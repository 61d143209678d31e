use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dasl::compiler::{compile, evaluate_with, explain, fuse_loss, Plan};
use dasl::experiments::config::CONFIG_KEYS;
use dasl::experiments::gradsuite::gradcheck_suite;
use dasl::experiments::{load_mnist, parse_kv, run_mnist_experiment, run_relations_experiment, ExperimentConfig};
use dasl::interp::{bind_theory, BindOptions, DataSources, EqualityMode, ExternRegistry, Interpretation, SamplerSet};
use dasl::logic::{load_theory, CheckedTheory};
use dasl::oracle::{agreement_suite, default_signature};
use dasl::semantics::{loss, EqualityParams};
use dasl::tensor::{load_checkpoint, Graph};
use dasl::trainer::{install_default_samplers, train, TrainConfig};

#[derive(Parser)]
#[command(
    name = "dasl",
    version,
    about = "Compile, train and check first-order theories with neural symbols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check and compile a theory, then print the plan.
    Compile(TheoryArgs),
    /// Train the neural symbols of a theory against its axioms.
    Train(TrainArgs),
    /// Evaluate every axiom of a theory on its full domains.
    Eval(EvalArgs),
    /// Compare compiled crisp evaluation with the classical model checker.
    OracleCheck(OracleArgs),
    /// Digit classification with labeled examples and unlabeled sum triples.
    Mnist(MnistArgs),
    /// Baseline against rule-masked classifier on synthetic box relations.
    SynthRel(SynthArgs),
    /// Reverse-mode gradients against central differences on random graphs.
    Gradcheck(GradArgs),
}

#[derive(Args)]
struct TheoryArgs {
    /// Theory source file.
    theory: PathBuf,
    /// Directory `from` paths are resolved against [default: the theory's directory].
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Seed for parameter initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Crisp equality instead of the Gaussian density ratio.
    #[arg(long)]
    crisp_equality: bool,
    /// Equality parameters as `eps,mu,sigma`.
    #[arg(long, value_name = "EPS,MU,SIGMA")]
    equality: Option<String>,
    /// Sum per-conjunct losses instead of one root conjunction.
    #[arg(long)]
    fused: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    theory: TheoryArgs,
    /// Flat `key = value` file with trainer settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<u64>,
    /// Directory for metrics.csv and checkpoints.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    theory: TheoryArgs,
    /// Parameters saved by `train`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Largest formula depth.
    #[arg(long, default_value_t = 4)]
    depth: usize,
    /// Largest domain size.
    #[arg(long, default_value_t = 4)]
    max_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print one line per trial.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Flat `key = value` file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed count (`5` means 0..5) or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<u64>,
    /// Output directory for the results CSV and per-run metrics.
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
#[command(after_help = format!("config keys: {CONFIG_KEYS}"))]
struct MnistArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Labeled examples per class, or `all`.
    #[arg(long)]
    ntr: Option<String>,
    /// Unlabeled triples per class, or `all`.
    #[arg(long)]
    triples: Option<String>,
    /// `on` or `off`.
    #[arg(long)]
    knowledge: Option<String>,
    /// `on` or `off`.
    #[arg(long)]
    curriculum: Option<String>,
    /// Directory with the four MNIST IDX files [default: $DASL_DATA_DIR].
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

#[derive(Args)]
#[command(after_help = format!("config keys: {CONFIG_KEYS}"))]
struct SynthArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Fraction of the 50,000-pair pool used for training.
    #[arg(long)]
    regime: Option<f64>,
}

#[derive(Args)]
struct GradArgs {
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

type CliResult = Result<ExitCode, String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => cmd_compile(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::OracleCheck(a) => cmd_oracle(&a),
        Command::Mnist(a) => cmd_mnist(&a),
        Command::SynthRel(a) => cmd_synth(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn load(args: &TheoryArgs) -> Result<(CheckedTheory, Interpretation, Plan), String> {
    let src = fs::read_to_string(&args.theory).map_err(|e| format!("{}: {e}", args.theory.display()))?;
    let theory = load_theory(&src).map_err(|es| {
        es.iter()
            .map(|e| format!("{}: {e}", args.theory.display()))
            .collect::<Vec<_>>()
            .join("\n")
    })?;
    let equality = if args.crisp_equality {
        EqualityMode::Crisp
    } else if let Some(s) = &args.equality {
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse().map_err(|_| format!("bad equality parameter `{p}`")))
            .collect::<Result<_, _>>()?;
        let [eps, mu, sigma] = v[..] else {
            return Err("--equality takes three values".into());
        };
        EqualityMode::Gaussian(EqualityParams::new(eps, mu, sigma).map_err(|e| e.to_string())?)
    } else {
        EqualityMode::Gaussian(EqualityParams::default())
    };
    let base_dir = args.data_dir.clone().unwrap_or_else(|| {
        args.theory
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    let options = BindOptions {
        equality,
        seed: args.seed,
        base_dir,
        ..BindOptions::default()
    };
    let interp = bind_theory(&theory, &ExternRegistry::with_defaults(), &DataSources::new(), options)
        .map_err(|e| e.to_string())?;
    let mut plan = compile(&theory, &interp).map_err(|e| e.to_string())?;
    if args.fused {
        plan = fuse_loss(plan);
    }
    Ok((theory, interp, plan))
}

fn cmd_compile(args: &TheoryArgs) -> CliResult {
    let (_, _, plan) = load(args)?;
    print!("{}", explain(&plan));
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: &TrainArgs) -> CliResult {
    let (_, mut interp, mut plan) = load(&args.theory)?;
    let mut config = TrainConfig {
        curriculum: false,
        seed: args.theory.seed,
        ..TrainConfig::default()
    };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        for (k, v) in parse_kv(&text).map_err(|e| e.to_string())? {
            config.set(&k, &v).map_err(|e| e.to_string())?;
        }
    }
    if let Some(v) = args.iterations {
        config.iterations = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.eval_every {
        config.eval_every = v;
    }
    if let Some(v) = &args.out {
        config.out_dir = Some(v.clone());
    }
    let mut samplers = SamplerSet::new();
    install_default_samplers(&plan, &interp, &mut samplers, config.batch_size, config.seed);
    let report = train(&mut plan, &mut interp, &mut samplers, &config, None, None).map_err(|e| e.to_string())?;
    let first = report.losses.first().copied().unwrap_or(0.0);
    let last = report.losses.last().copied().unwrap_or(0.0);
    println!("iterations {}: loss {first:.6} -> {last:.6}", config.iterations);
    if let Some(d) = &config.out_dir {
        println!("metrics and checkpoints in {}", d.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: &EvalArgs) -> CliResult {
    let (_, mut interp, plan) = load(&args.theory)?;
    if let Some(path) = &args.checkpoint {
        load_checkpoint(&mut interp.store, path).map_err(|e| e.to_string())?;
    }
    let mut g = Graph::new();
    let batch = evaluate_with(&plan, &interp, &mut SamplerSet::new(), &mut g, false).map_err(|e| e.to_string())?;
    println!("{:<24} {:>12} {:>10} {:>12}", "axiom", "logit", "truth", "loss");
    for a in &batch.axioms {
        let Some(node) = a.logit else { continue };
        let l = g.value(node).item();
        println!(
            "{:<24} {l:>12.6} {:>10.6} {:>12.6e}",
            a.name,
            1.0 / (1.0 + (-l).exp()),
            loss(l)
        );
    }
    println!("total loss {:.6e}", g.value(batch.loss).item());
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle(args: &OracleArgs) -> CliResult {
    let sig = load_theory(&default_signature(args.max_size)).map_err(|e| format!("{e:?}"))?;
    let report = agreement_suite(&sig, args.depth, args.trials, args.seed).map_err(|e| e.to_string())?;
    if args.verbose {
        report.transcript.iter().for_each(|l| println!("{l}"));
    }
    for c in &report.counterexamples {
        println!("counterexample:\n{c}");
    }
    println!("agreement {}/{}", report.agreements, report.trials);
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

/// Experiment config from defaults, then the config file, then flags.
fn experiment_config(
    base: ExperimentConfig,
    common: &ExperimentArgs,
    flags: Vec<(&str, String)>,
) -> Result<ExperimentConfig, String> {
    let mut config = base;
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        config
            .apply(&parse_kv(&text).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    }
    let mut all = flags;
    all.extend(common.seeds.clone().map(|v| ("seeds", v)));
    all.extend(common.iterations.map(|v| ("iterations", v.to_string())));
    all.extend(common.batch_size.map(|v| ("batch_size", v.to_string())));
    all.extend(common.lr.map(|v| ("lr", v.to_string())));
    all.extend(common.eval_every.map(|v| ("eval_every", v.to_string())));
    for (k, v) in all {
        config.set(k, &v).map_err(|e| e.to_string())?;
    }
    config.train.out_dir = Some(common.out.clone());
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

fn cmd_mnist(args: &MnistArgs) -> CliResult {
    let mut flags = Vec::new();
    flags.extend(args.ntr.clone().map(|v| ("ntr", v)));
    flags.extend(args.triples.clone().map(|v| ("triples", v)));
    flags.extend(args.knowledge.clone().map(|v| ("knowledge", v)));
    flags.extend(args.curriculum.clone().map(|v| ("curriculum", v)));
    let config = experiment_config(ExperimentConfig::mnist(), &args.common, flags)?;
    let dir = args
        .data_dir
        .clone()
        .or_else(|| config.data_dir.clone())
        .or_else(|| std::env::var_os("DASL_DATA_DIR").map(PathBuf::from))
        .ok_or("no data directory: pass --data-dir or set DASL_DATA_DIR")?;
    let data = load_mnist(&dir).map_err(|e| e.to_string())?;
    let table = run_mnist_experiment(&config, &data).map_err(|e| e.to_string())?;
    let path = args.common.out.join("mnist_results.csv");
    table.write_csv(&path).map_err(|e| e.to_string())?;
    print!("{}", table.summary);
    println!("results written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(args: &SynthArgs) -> CliResult {
    let flags = args.regime.map(|v| ("regime", v.to_string())).into_iter().collect();
    let config = experiment_config(ExperimentConfig::synth_relations(), &args.common, flags)?;
    let table = run_relations_experiment(&config).map_err(|e| e.to_string())?;
    let path = args.common.out.join("synth_rel_results.csv");
    table.write_csv(&path).map_err(|e| e.to_string())?;
    print!("{}", table.summary);
    println!("results written to {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_gradcheck(args: &GradArgs) -> CliResult {
    let cases = gradcheck_suite(args.trials, args.seed).map_err(|e| e.to_string())?;
    println!(
        "{:>5}  {:<9} {:>6} {:>12}  {:<4}  graph",
        "trial", "kind", "coords", "max rel err", "ok"
    );
    let mut failed = 0;
    for c in &cases {
        let ok = c.report.passed();
        failed += usize::from(!ok);
        println!(
            "{:>5}  {:<9} {:>6} {:>12.3e}  {:<4}  {}",
            c.trial,
            c.kind.name(),
            c.report.coordinates,
            c.report.max_rel_error,
            if ok { "pass" } else { "FAIL" },
            c.label
        );
    }
    println!("{} of {} passed", cases.len() - failed, cases.len());
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
