use std::io::{self, BufRead, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use graphbench::ablation::run_grid;
use graphbench::dsl::{eval_query, parse_query, DEFAULT_RENDER_CAP};
use graphbench::graph::{load_graph, load_split, stats_with, LabelView};
use graphbench::runner::{run_experiment, ExperimentConfig};
use graphbench::tokens::CountingMode;

#[derive(Parser)]
#[command(name = "graphbench", version, about = "LLM-graph interaction harness for node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write results.csv, episodes.csv, report.md and transcripts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key, e.g. `--set mode=code --set seeds=[0,1]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run an ablation grid and write heatmaps/*.csv.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print dataset statistics as JSON.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "chars_div_4")]
        counting_mode: String,
    },
    /// Evaluate query-language expressions read from stdin, one per line.
    Repl {
        #[arg(long)]
        dataset: PathBuf,
        /// Without splits every label reads as None.
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_RENDER_CAP)]
        render_cap: usize,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Run { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let report = run_experiment(&cfg)?;
            println!("{} {} {}", report.dataset, report.mode, report.cell());
        }
        Command::Grid { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let (_, path) = run_grid(&cfg)?;
            println!("{}", path.display());
        }
        Command::Stats {
            dataset,
            counting_mode,
        } => {
            let mode = CountingMode::from_name(&counting_mode)
                .with_context(|| format!("unknown counting mode {counting_mode:?}"))?;
            let graph = load_graph(&dataset)?;
            println!("{}", serde_json::to_string_pretty(&stats_with(&graph, &mode))?);
        }
        Command::Repl {
            dataset,
            splits,
            seed,
            render_cap,
        } => {
            let graph = load_graph(&dataset)?;
            let labels = match splits {
                Some(p) => LabelView::from_split(&graph, &load_split(&p)?)?,
                None => LabelView::new(Default::default(), (0..graph.num_nodes()).collect())?,
            };
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for line in io::stdin().lock().lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match parse_query(&line) {
                    Ok(expr) => writeln!(out, "{}", eval_query(&graph, &labels, &expr, render_cap, seed))?,
                    Err(e) => writeln!(out, "Invalid query: {e}")?,
                }
            }
        }
    }
    Ok(())
}
