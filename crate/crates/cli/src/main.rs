use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ergmx_cli::files::{self, write_json};
use ergmx_cli::{
    cmd_boot, cmd_enumerate, cmd_fit, cmd_fivenets, cmd_gof, cmd_sim_study, cmd_simulate,
    GlobalOpts,
};
use ergmx_core::{AttributeTable, FitOptions};

/// Exact maximum-likelihood estimation of exponential-family random graph
/// models on small networks.
#[derive(Parser)]
#[command(name = "ergmx", version, about)]
struct Cli {
    /// Directory for persistent support-table caching.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,

    /// Cap the number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct NetworkInput {
    /// Network file (native JSON format).
    #[arg(long)]
    networks: PathBuf,

    /// Input format: `native` or `adj` (adjacency-matrix blocks).
    #[arg(long, default_value = "native")]
    format: String,

    /// Directedness of adjacency-matrix input (native files carry their own).
    #[arg(long, default_value_t = true)]
    directed: bool,
}

impl NetworkInput {
    fn load(&self) -> Result<Vec<ergmx_core::Network>> {
        match self.format.as_str() {
            "native" => files::load_networks(&self.networks),
            "adj" => files::load_adjacency(&self.networks, self.directed),
            other => bail!("unknown input format '{other}' (expected 'native' or 'adj')"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fit a pooled model to a sample of networks.
    Fit {
        #[command(flatten)]
        input: NetworkInput,

        /// Model formula, e.g. "edges + ttriad".
        #[arg(long)]
        model: String,

        /// Gradient sup-norm tolerance.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,

        /// Iteration cap for the optimizer.
        #[arg(long, default_value_t = 200)]
        max_iter: usize,

        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Draw exact samples from a model.
    Simulate {
        #[arg(long)]
        model: String,

        /// Comma-separated parameter values, one per model term.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Vec<f64>,

        /// Node count.
        #[arg(long)]
        n: usize,

        #[arg(long, default_value_t = true)]
        directed: bool,

        /// Number of networks to draw.
        #[arg(long)]
        count: usize,

        /// RNG seed; generated and recorded when omitted.
        #[arg(long)]
        seed: Option<u64>,

        /// Node attribute, `name=v1,v2,...` (repeatable).
        #[arg(long = "attr")]
        attrs: Vec<String>,

        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Regenerate the five-network demo sample.
    Fivenets {
        #[arg(long)]
        seed: Option<u64>,

        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Exact goodness-of-fit of a recorded fit.
    Gof {
        /// Result file from `fit`.
        #[arg(long)]
        result: PathBuf,

        #[command(flatten)]
        input: NetworkInput,

        /// Confidence level of the exact intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,

        /// Output file; `.csv` writes CSV, anything else plot-ready JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Bootstrap standard errors of a recorded fit.
    Boot {
        /// Result file from `fit`.
        #[arg(long)]
        result: PathBuf,

        #[command(flatten)]
        input: NetworkInput,

        /// Number of bootstrap replicates.
        #[arg(long, short = 'R', default_value_t = 1000)]
        replicates: usize,

        #[arg(long)]
        seed: Option<u64>,

        #[arg(long)]
        out: Option<PathBuf>,
    },

    /// Run or resume a simulation study from a config file.
    SimStudy {
        #[arg(long)]
        config: PathBuf,

        /// Line-delimited record checkpoint; completed replications are
        /// skipped on resume.
        #[arg(long)]
        checkpoint: Option<PathBuf>,

        /// Write per-replication records (JSONL) here.
        #[arg(long)]
        out_records: Option<PathBuf>,

        /// Write aggregate bias/power/type-I rates (CSV) here.
        #[arg(long)]
        out_aggregates: Option<PathBuf>,
    },

    /// Build a support table and print its summary.
    Enumerate {
        #[arg(long)]
        n: usize,

        #[arg(long, default_value_t = true)]
        directed: bool,

        #[arg(long)]
        model: String,

        /// Permit billion-scale streaming builds (n = 6 directed, n = 8
        /// undirected).
        #[arg(long)]
        allow_large: bool,

        /// Memory cap: maximum number of distinct statistic rows.
        #[arg(long)]
        max_rows: Option<usize>,

        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_attrs(specs: &[String], n: usize) -> Result<AttributeTable> {
    let mut attrs = AttributeTable::new(n);
    for spec in specs {
        let (name, values) = spec
            .split_once('=')
            .with_context(|| format!("--attr '{spec}' is not of the form name=v1,v2,..."))?;
        let values: Vec<f64> = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("--attr '{spec}' has a non-numeric value"))?;
        attrs.insert(name.trim(), values)?;
    }
    Ok(attrs)
}

fn run(cli: Cli) -> Result<()> {
    let global = GlobalOpts {
        cache_dir: cli.cache_dir,
        threads: cli.threads,
    };
    global.init_threads();

    match cli.command {
        Command::Fit {
            input,
            model,
            tol,
            max_iter,
            out,
        } => {
            let networks = input.load()?;
            let opts = FitOptions {
                grad_tol: tol,
                max_iter,
                ..FitOptions::default()
            };
            let result = cmd_fit(&networks, &model, &opts, &global)?;
            write_json(out.as_deref(), &result)?;
        }
        Command::Simulate {
            model,
            theta,
            n,
            directed,
            count,
            seed,
            attrs,
            out,
        } => {
            let attrs = parse_attrs(&attrs, n)?;
            let doc = cmd_simulate(&model, &theta, n, directed, count, seed, &attrs, &global)?;
            write_json(out.as_deref(), &doc)?;
        }
        Command::Fivenets { seed, out } => {
            let doc = cmd_fivenets(seed, &global)?;
            write_json(out.as_deref(), &doc)?;
        }
        Command::Gof {
            result,
            input,
            level,
            out,
        } => {
            let result = files::load_result(&result)?;
            let networks = input.load()?;
            let report = cmd_gof(&result, &networks, level, &global)?;
            match &out {
                Some(p) if p.extension().is_some_and(|e| e == "csv") => {
                    std::fs::write(p, report.to_csv())
                        .with_context(|| format!("cannot write {}", p.display()))?;
                }
                _ => write_json(out.as_deref(), &report.to_json())?,
            }
        }
        Command::Boot {
            result,
            input,
            replicates,
            seed,
            out,
        } => {
            let result = files::load_result(&result)?;
            let networks = input.load()?;
            let doc = cmd_boot(&result, &networks, replicates, seed, &global)?;
            write_json(out.as_deref(), &doc)?;
        }
        Command::SimStudy {
            config,
            checkpoint,
            out_records,
            out_aggregates,
        } => {
            let result = cmd_sim_study(&config, checkpoint.as_deref(), &global)?;
            if let Some(p) = &out_records {
                std::fs::write(p, result.records_jsonl())
                    .with_context(|| format!("cannot write {}", p.display()))?;
            }
            match &out_aggregates {
                Some(p) => std::fs::write(p, result.aggregates_csv())
                    .with_context(|| format!("cannot write {}", p.display()))?,
                None => print!("{}", result.aggregates_csv()),
            }
        }
        Command::Enumerate {
            n,
            directed,
            model,
            allow_large,
            max_rows,
            out,
        } => {
            let doc = cmd_enumerate(n, directed, &model, allow_large, max_rows, &global)?;
            write_json(out.as_deref(), &doc)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
