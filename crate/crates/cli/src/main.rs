//! Batch driver for the sanitize/embed/align/fuse/eval pipeline.
//!
//! Every subcommand reads its inputs through `manifest.json` in the output
//! directory, so stages can run one at a time or all at once with `run`.
//! Exit codes: 0 success, 1 usage, 2 validation, 3 numeric failure. On any
//! stage failure a one-line JSON error record goes to stderr and, when the
//! output directory is writable, to `error.json` inside it, marking the run
//! as failed for anything that consumes partial outputs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crossnet::diagnostics::run_invariant_suite;
use crossnet::pipeline::{
    align_stage, embed_stage, eval_stage, fuse_stage, run_pipeline, sanitize_stage, sweep_stage,
    tmr_stage, Manifest, PipelineConfig,
};
use crossnet::Error;

mod config;

#[derive(Parser)]
#[command(
    name = "crossnet",
    version,
    about = "Privacy-preserving cross-network user embeddings",
    after_help = "Precedence: defaults, then --config file, then --set pairs, \
then CROSSNET_OUT_DIR, then the dedicated flags."
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. --set eps_a=2 (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// First input graph.
    #[arg(long, global = true, value_name = "PATH")]
    graph_a: Option<PathBuf>,
    /// Second input graph.
    #[arg(long, global = true, value_name = "PATH")]
    graph_b: Option<PathBuf>,
    /// Output directory (CROSSNET_OUT_DIR overrides the config file).
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Master seed; every stage derives its own stream and records it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Draw a fresh master seed instead of the configured one.
    #[arg(long, global = true)]
    non_deterministic: bool,
    /// Fuse with flat stacked propagation instead of the hierarchy.
    #[arg(long, global = true)]
    ablation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Perturb attributes, edges, and post text under the budget.
    Sanitize,
    /// Train per-network user embeddings from the sanitized graphs.
    Embed,
    /// Learn the cross-network map and predict anchor users.
    Align,
    /// Fuse the two embedding spaces across the anchor ties.
    Fuse,
    /// Score interest prediction and the two attribute attacks.
    Eval,
    /// Run all five stages in order.
    Run,
    /// Rerun the pipeline per attribute-budget grid point into one CSV.
    Sweep {
        /// Attribute budgets to sweep.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,15")]
        grid: Vec<f64>,
    },
    /// Rate per-type leakage and split a total budget accordingly.
    Tmr {
        /// Budget to divide; defaults to the configured budget's sum.
        #[arg(long)]
        total: Option<f64>,
        /// Graph to rate; defaults to graph A.
        #[arg(long, value_name = "PATH")]
        graph: Option<PathBuf>,
    },
    /// Check fast numeric invariants, one pass/fail line per property.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Sanitize => "sanitize",
            Command::Embed => "embed",
            Command::Align => "align",
            Command::Fuse => "fuse",
            Command::Eval => "eval",
            Command::Run => "run",
            Command::Sweep { .. } => "sweep",
            Command::Tmr { .. } => "tmr",
            Command::Verify => "verify",
        }
    }
}

fn build_config(common: &Common) -> crossnet::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &common.config {
        for (key, value) in config::load_file(path)? {
            config::apply(&mut cfg, &key, &value)?;
        }
    }
    for pair in &common.set {
        let Some((key, value)) = pair.split_once('=') else {
            return Err(Error::Config(format!("--set {pair:?}: expected KEY=VALUE")));
        };
        config::apply(&mut cfg, key.trim(), value.trim())?;
    }
    if let Ok(dir) = std::env::var("CROSSNET_OUT_DIR") {
        if !dir.is_empty() {
            cfg.out_dir = PathBuf::from(dir);
        }
    }
    if let Some(p) = &common.graph_a {
        cfg.graph_a = p.clone();
    }
    if let Some(p) = &common.graph_b {
        cfg.graph_b = p.clone();
    }
    if let Some(p) = &common.out_dir {
        cfg.out_dir = p.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.non_deterministic {
        cfg.deterministic = false;
    }
    if common.ablation {
        cfg.ablation = true;
    }
    Ok(cfg)
}

fn dispatch(command: &Command, cfg: &PipelineConfig) -> crossnet::Result<()> {
    match command {
        Command::Sanitize => {
            let (a, b) = sanitize_stage(cfg)?;
            println!("{}", a.display());
            println!("{}", b.display());
        }
        Command::Embed => {
            let m = Manifest::load(&cfg.out_dir)?;
            let ga = m.get(&cfg.out_dir, "sanitize", "graph_a")?;
            let gb = m.get(&cfg.out_dir, "sanitize", "graph_b")?;
            let (za, zb) = embed_stage(cfg, &ga, &gb)?;
            println!("{}", za.display());
            println!("{}", zb.display());
        }
        Command::Align => {
            let m = Manifest::load(&cfg.out_dir)?;
            let za = m.get(&cfg.out_dir, "embed", "z_a")?;
            let zb = m.get(&cfg.out_dir, "embed", "z_b")?;
            let out = align_stage(cfg, &za, &zb)?;
            println!("{}", out.mapping.display());
            println!("{}", out.anchors.display());
        }
        Command::Fuse => {
            let m = Manifest::load(&cfg.out_dir)?;
            let ga = m.get(&cfg.out_dir, "sanitize", "graph_a")?;
            let gb = m.get(&cfg.out_dir, "sanitize", "graph_b")?;
            let za = m.get(&cfg.out_dir, "embed", "z_a")?;
            let zb = m.get(&cfg.out_dir, "embed", "z_b")?;
            let anchors = m.get(&cfg.out_dir, "align", "anchors")?;
            let (fa, fb) = fuse_stage(cfg, &ga, &gb, &za, &zb, &anchors)?;
            println!("{}", fa.display());
            println!("{}", fb.display());
        }
        Command::Eval => {
            let m = Manifest::load(&cfg.out_dir)?;
            let ga = m.get(&cfg.out_dir, "sanitize", "graph_a")?;
            let gb = m.get(&cfg.out_dir, "sanitize", "graph_b")?;
            let fa = m.get(&cfg.out_dir, "fuse", "fused_a")?;
            let fb = m.get(&cfg.out_dir, "fuse", "fused_b")?;
            let report = eval_stage(cfg, &ga, &gb, &fa, &fb)?;
            println!("{}", report.display());
        }
        Command::Run => {
            run_pipeline(cfg)?;
            println!("{}", cfg.out_dir.join("manifest.json").display());
        }
        Command::Sweep { grid } => {
            let csv = sweep_stage(cfg, grid)?;
            println!("{}", csv.display());
        }
        Command::Tmr { total, graph } => {
            let total = total.unwrap_or_else(|| cfg.budget.total());
            let graph = graph.clone().unwrap_or_else(|| cfg.graph_a.clone());
            let report = tmr_stage(cfg, &graph, total)?;
            println!("{}", report.display());
        }
        Command::Verify => unreachable!("verify is handled before dispatch"),
    }
    Ok(())
}

/// Prints the error record to stderr and marks the output directory.
fn report_failure(command: &Command, cfg: Option<&PipelineConfig>, err: &Error) -> ExitCode {
    let code = err.exit_code();
    let record = serde_json::json!({
        "command": command.name(),
        "error": err.to_string(),
        "exit_code": code,
    });
    eprintln!("{record}");
    if let Some(cfg) = cfg {
        if !cfg.out_dir.as_os_str().is_empty() && std::fs::create_dir_all(&cfg.out_dir).is_ok() {
            let _ = std::fs::write(
                cfg.out_dir.join("error.json"),
                record.to_string() + "\n",
            );
        }
    }
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    if let Command::Verify = cli.command {
        let seed = cli.common.seed.unwrap_or(0);
        let mut all_pass = true;
        for report in run_invariant_suite(seed) {
            let verdict = if report.pass { "PASS" } else { "FAIL" };
            println!("{verdict} {}: {}", report.name, report.detail);
            all_pass &= report.pass;
        }
        return if all_pass { ExitCode::SUCCESS } else { ExitCode::from(3) };
    }

    let cfg = match build_config(&cli.common) {
        Ok(cfg) => cfg,
        Err(e) => return report_failure(&cli.command, None, &e),
    };
    match dispatch(&cli.command, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_failure(&cli.command, Some(&cfg), &e),
    }
}
