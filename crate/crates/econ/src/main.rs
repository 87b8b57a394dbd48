use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use econ::config::{RunConfig, ScorerKind};
use econ::error::exit;
use econ::pipeline::{Pipeline, StageStatus};
use econ::{report, EconError, Result};
use econ_core::experiment::FilterK;
use econ_core::predictor::Ablation;

/// Stock movement and abnormal-volatility prediction from prices, macro
/// series and filtered tweets.
///
/// Exit codes: 0 success, 2 bad usage, 3 invalid configuration,
/// 4 missing or malformed input file, 5 stage failure.
#[derive(Parser)]
#[command(name = "econ", version, about, long_about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory (overrides run.out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed (overrides run.seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Rerun stages even when their inputs are unchanged.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a planted-signal dataset into <out>/data.
    Synth(Common),
    /// Score sentiment, calibrate k and keep the top-k tweets per stock-day.
    Filter {
        #[command(flatten)]
        common: Common,
        /// Tweets kept per stock-day: a positive integer, `all` or `auto`.
        #[arg(long)]
        k: Option<String>,
        /// Sentiment source: lexicon or import.
        #[arg(long)]
        scorer: Option<String>,
        /// Calibration slack.
        #[arg(long)]
        slack: Option<f64>,
    },
    /// Pretrain tweet and sector embeddings on masked-company sectors.
    PretrainSector(Common),
    /// Train the predictor.
    Train {
        #[command(flatten)]
        common: Common,
        /// full, A, I or none (default: predictor.ablation).
        #[arg(long, value_parser = parse_ablation)]
        ablation: Option<Ablation>,
    },
    /// Score a trained predictor on the test split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_ablation)]
        ablation: Option<Ablation>,
    },
    /// Compare run directories: CSV tables and SVG plots.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
    /// Print the configuration: defaults, or a file with overrides applied.
    Config {
        #[arg(long)]
        defaults: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run every stage, skipping those whose inputs are unchanged.
    Run(Common),
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    s.parse().map_err(|e: econ_core::Error| e.to_string())
}

fn load(common: &Common, edit: impl FnOnce(&mut RunConfig) -> Result<()>) -> Result<Pipeline> {
    let mut cfg = RunConfig::load(common.config.as_deref(), std::env::vars())?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = out.clone();
    }
    edit(&mut cfg)?;
    cfg.validate()?;
    let dir = cfg.run.out_dir.clone();
    let mut p = Pipeline::new(cfg, dir)?;
    p.force = common.force;
    Ok(p)
}

fn print_history(p: &Pipeline) {
    for (stage, status) in &p.history {
        let s = match status {
            StageStatus::Ran => "done",
            StageStatus::Skipped => "unchanged, skipped",
        };
        eprintln!("{stage}: {s}");
    }
}

fn run(cli: Cli) -> Result<()> {
    let no_edit = |_: &mut RunConfig| Ok(());
    match cli.cmd {
        Cmd::Synth(c) => {
            let mut p = load(&c, no_edit)?;
            p.synth()?;
            print_history(&p);
        }
        Cmd::Filter { common, k, scorer, slack } => {
            let mut p = load(&common, |cfg| {
                if let Some(k) = k {
                    cfg.filter.k = k.parse::<FilterK>().map_err(|e| EconError::Config(format!("--k: {e}")))?;
                }
                if let Some(s) = scorer {
                    cfg.run.scorer = match s.as_str() {
                        "lexicon" => ScorerKind::Lexicon,
                        "import" => ScorerKind::Import,
                        other => return Err(EconError::Config(format!("--scorer: unknown scorer {other:?}"))),
                    };
                }
                if let Some(s) = slack {
                    cfg.filter.slack = s;
                }
                Ok(())
            })?;
            p.filter()?;
            print_history(&p);
        }
        Cmd::PretrainSector(c) => {
            let mut p = load(&c, no_edit)?;
            p.pretrain()?;
            print_history(&p);
        }
        Cmd::Train { common, ablation } => {
            let mut p = load(&common, no_edit)?;
            let ab = ablation.unwrap_or(p.cfg.predictor.ablation);
            p.train(ab)?;
            print_history(&p);
        }
        Cmd::Evaluate { common, ablation } => {
            let mut p = load(&common, no_edit)?;
            let ab = ablation.unwrap_or(p.cfg.predictor.ablation);
            p.evaluate(ab)?;
            print_history(&p);
            println!("{}", econ::io::read_text(&p.dir.metrics(ab))?.trim_end());
        }
        Cmd::Report { runs, out } => {
            let r = report::render(&runs, &out)?;
            eprintln!("wrote {} files to {}", r.files.len(), out.display());
            print!("{}", econ::io::read_text(&out.join("report.csv"))?);
        }
        Cmd::Config { defaults, config } => {
            let cfg = if defaults {
                RunConfig::default()
            } else {
                RunConfig::load(config.as_deref(), std::env::vars())?
            };
            print!("{}", cfg.documented());
        }
        Cmd::Run(c) => {
            let mut p = load(&c, no_edit)?;
            let res = p.run_all();
            print_history(&p);
            res?;
            print!("{}", econ::io::read_text(&p.dir.report_dir().join("report.csv"))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("econ: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
