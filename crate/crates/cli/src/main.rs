use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tireforce::config::RunConfig;
use tireforce::eval::Method;
use tireforce::preprocess::Axis;
use tireforce::workflow;
use tireforce::Error;

/// Tire force estimation from inner-liner accelerometer signals.
#[derive(Debug, Parser)]
#[command(name = "tireforce", version)]
struct Cli {
    /// TOML run configuration; unset keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the fully resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// Override one configuration key, e.g. `--set mlp_max_epochs=200`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Revolutions per schedule entry.
    #[arg(long, global = true)]
    revolutions: Option<usize>,
    /// Number of schedule entries kept.
    #[arg(long, global = true)]
    conditions: Option<usize>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the test schedule into raw CSV files.
    Generate,
    /// Turn raw traces into per-axis contact-patch windows.
    Preprocess,
    /// Train one estimator on the processed split.
    Train {
        /// mlp, forest or rnn.
        method: String,
        /// fx, fy or fz.
        axis: String,
        /// Number of trees for the forest.
        #[arg(long)]
        n_trees: Option<usize>,
    },
    /// Score saved models on the test split.
    Evaluate {
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
    /// k-fold cross-validation.
    Crossval {
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long = "axis")]
        axes: Vec<String>,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Train and score several methods on the same split.
    Compare {
        #[arg(long = "method")]
        methods: Vec<String>,
        #[arg(long = "axis")]
        axes: Vec<String>,
    },
}

fn resolve(cli: &Cli) -> tireforce::Result<RunConfig> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    let mut cfg = RunConfig::from_toml_with(&text, &overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if cli.revolutions.is_some() {
        cfg.revolutions = cli.revolutions;
    }
    if cli.conditions.is_some() {
        cfg.conditions = cli.conditions;
    }
    match &cli.command {
        Some(Command::Train { n_trees: Some(n), .. }) => cfg.forest_n_trees = *n,
        Some(Command::Crossval { folds: Some(k), .. }) => cfg.cv_folds = *k,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn config_parse<T>(r: tireforce::Result<T>) -> tireforce::Result<T> {
    r.map_err(|e| Error::Config(e.to_string()))
}

fn parse_list<T>(items: &[String], f: fn(&str) -> tireforce::Result<T>) -> tireforce::Result<Vec<T>> {
    items
        .iter()
        .flat_map(|s| s.split(','))
        .filter(|s| !s.is_empty())
        .map(|s| config_parse(f(s)))
        .collect()
}

fn run(cli: Cli) -> tireforce::Result<()> {
    let cfg = resolve(&cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(Error::Config("no command given; see --help".into()));
    };
    match command {
        Command::Generate => {
            let m = workflow::cmd_generate(&cfg)?;
            let usable: Vec<String> = m.usable.iter().map(|(a, n)| format!("{a} {n}")).collect();
            println!("{} traces in {}; usable: {}", m.traces, workflow::Layout::new(&cfg).raw().display(), usable.join(", "));
        }
        Command::Preprocess => {
            let m = workflow::cmd_preprocess(&cfg)?;
            println!("{} traces, {} skipped", m.traces, m.skipped);
            for (axis, s) in &m.axes {
                println!("{axis}: {} windows ({} train, {} validation, {} test)", s.windows, s.train, s.validation, s.test);
            }
        }
        Command::Train { method, axis, .. } => {
            let method = config_parse(Method::parse(&method))?;
            if method == Method::Oracle {
                return Err(Error::Config("the oracle is not trainable".into()));
            }
            let axis = config_parse(Axis::parse(&axis))?;
            let (_, m) = workflow::cmd_train(&cfg, method, axis)?;
            println!(
                "{method} {axis}: {} train, {} validation -> {}",
                m.train_size,
                m.validation_size,
                workflow::Layout::new(&cfg).model_file(method, axis).display()
            );
        }
        Command::Evaluate { methods, axes } => {
            let r = workflow::cmd_evaluate(&cfg, &parse_list(&methods, Method::parse)?, &parse_list(&axes, Axis::parse)?)?;
            print!("{}", workflow::render_report(&r));
        }
        Command::Crossval { methods, axes, .. } => {
            let r = workflow::cmd_crossval(&cfg, &parse_list(&methods, Method::parse)?, &parse_list(&axes, Axis::parse)?)?;
            print!("{}", workflow::render_report(&r));
        }
        Command::Compare { methods, axes } => {
            let r = workflow::cmd_compare(&cfg, &parse_list(&methods, Method::parse)?, &parse_list(&axes, Axis::parse)?)?;
            print!("{}", workflow::render_report(&r));
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Diverged { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
