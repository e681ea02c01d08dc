use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rambo_bench::plot::emit_plots;
use rambo_bench::records::load_csv;
use rambo_bench::runner::{write_outputs, ExperimentOutcome};
use rambo_bench::summary::{markdown_table, summarize};
use rambo_bench::{
    run_ablation, run_experiment, sweep_k, sweep_lambda_ot, ExperimentConfig, Method, Timing,
};

#[derive(Parser, Debug)]
#[command(author, version, about = "Seeded active learning benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Every configured method over seeds and budgets.
    Run(Common),
    /// All eight component toggles of RAMBO plus the random baseline.
    Ablate(Common),
    /// RAMBO over a grid of OT loss weights.
    SweepLambdaOt {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Every configured method over a grid of initial pool sizes.
    SweepK {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<usize>>,
    },
    /// Redraw charts from a results CSV.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, env = "RAMBO_OUTPUT_DIR")]
        output: Option<PathBuf>,
    },
    /// Print the default config as JSON.
    DefaultConfig,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TimingArg {
    Wall,
    Off,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "RAMBO_OUTPUT_DIR")]
    output: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    budgets: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda_ot: Option<f64>,
    #[arg(long)]
    timing: Option<TimingArg>,
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = &self.output {
            cfg.output_dir = v.clone();
        }
        if let Some(v) = &self.seeds {
            cfg.seeds = v.clone();
        }
        if let Some(v) = &self.budgets {
            cfg.budgets = v.clone();
        }
        if let Some(v) = &self.methods {
            cfg.methods = v
                .iter()
                .map(|m| Method::parse(m))
                .collect::<Result<_, _>>()?;
        }
        let r = &mut cfg.rambo;
        r.k = self.k.unwrap_or(r.k);
        r.k1 = self.k1.unwrap_or(r.k1);
        r.b = self.b.unwrap_or(r.b);
        r.n = self.n.unwrap_or(r.n);
        r.m = self.m.or(r.m);
        r.lambda_ot = self.lambda_ot.unwrap_or(r.lambda_ot);
        if let Some(t) = self.timing {
            cfg.timing = match t {
                TimingArg::Wall => Timing::Wall,
                TimingArg::Off => Timing::Off,
            };
        }
        cfg.threads = self.threads.unwrap_or(cfg.threads);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn finish(outcome: ExperimentOutcome, cfg: &ExperimentConfig, stem: &str) -> Result<()> {
    let dir = &cfg.output_dir;
    write_outputs(&outcome, cfg, dir, stem)?;
    let plots = emit_plots(&outcome.records, dir)?;
    print!("{}", markdown_table(&summarize(&outcome.records)));
    println!(
        "{} runs, {} failures, config {}; wrote {}.csv and {} plot files to {}",
        outcome.records.len(),
        outcome.failures.len(),
        cfg.hash(),
        stem,
        plots.len(),
        dir.display()
    );
    if !outcome.failures.is_empty() {
        bail!(
            "{} runs failed, see {stem}_failures.jsonl",
            outcome.failures.len()
        );
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run(c) => {
            let cfg = c.resolve()?;
            finish(run_experiment(&cfg)?, &cfg, "results")
        }
        Command::Ablate(c) => {
            let cfg = c.resolve()?;
            finish(run_ablation(&cfg)?, &cfg, "ablation")
        }
        Command::SweepLambdaOt { common, values } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = values {
                cfg.lambda_ot_grid = v;
            }
            finish(sweep_lambda_ot(&cfg)?, &cfg, "sweep_lambda_ot")
        }
        Command::SweepK { common, values } => {
            let mut cfg = common.resolve()?;
            if let Some(v) = values {
                cfg.k_grid = v;
            }
            finish(sweep_k(&cfg)?, &cfg, "sweep_k")
        }
        Command::Plot { input, output } => {
            let records =
                load_csv(&input).with_context(|| format!("reading {}", input.display()))?;
            if records.is_empty() {
                bail!("{} holds no records", input.display());
            }
            let dir =
                output.unwrap_or_else(|| input.parent().map(PathBuf::from).unwrap_or_default());
            for p in emit_plots(&records, &dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::DefaultConfig => {
            println!("{}", ExperimentConfig::default().to_json());
            Ok(())
        }
    }
}
