use std::path::PathBuf;
use std::process::ExitCode;

use algsample_cli::{
    cmd_infer, cmd_persist, cmd_sample, cmd_subsample, cmd_verify, parse_box, CliError, PipelineConfig,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "algsample", version, about = "Certified sampling of real varieties and homology inference")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// key = value configuration file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    system: Option<PathBuf>,
    /// Bounds lo1,hi1,lo2,hi2,...; a single pair applies to every variable.
    #[arg(long = "box", global = true, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    tmax: Option<f64>,
    #[arg(long, global = true)]
    pmax: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `internal` or the path of an external solver executable.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Output directory (or file, for `persist` and `subsample`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    dynamic_split: bool,
    #[arg(long, global = true, value_name = "RHO")]
    dynamic_sample: Option<f64>,
    #[arg(long, global = true)]
    priority_search: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a certified (delta, epsilon)-sample of the system's real points in the box.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many solver calls, leaving a checkpoint.
        #[arg(long)]
        max_calls: Option<usize>,
    },
    /// Vietoris-Rips persistence diagram of a sample.
    Persist {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        simplex_cap: Option<usize>,
        /// Build the full Rips complex instead of collapsing edges first.
        #[arg(long)]
        no_collapse: bool,
    },
    /// Corner test on a diagram: lower bounds on Betti numbers and an SVG plot.
    Infer {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Ambient dimension; defaults to the diagram's metadata.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Greedy thinning of a sample; the certificate epsilon grows by the radius.
    Subsample {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        radius: f64,
    },
    /// Check certified distances of a sample, and coverage of a reference cloud.
    Verify {
        input: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Sample CSV of reference points on the variety.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

fn pipeline(common: &Common) -> Result<PipelineConfig, CliError> {
    let base = match &common.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    let flags = PipelineConfig {
        system: common.system.clone(),
        region: common.region.as_deref().map(parse_box).transpose()?,
        epsilon: common.epsilon,
        delta: common.delta,
        dynamic_split: common.dynamic_split.then_some(true),
        dynamic_sample: common.dynamic_sample,
        priority_search: common.priority_search.then_some(true),
        tmax: common.tmax,
        pmax: common.pmax,
        seed: common.seed,
        workers: common.workers,
        backend: common.backend.clone(),
        out: common.out.clone(),
        ..Default::default()
    };
    Ok(base.overlay(flags))
}

/// `out` names a file unless it is an existing directory or has no extension.
fn output_file(out: Option<&PathBuf>, default_name: &str) -> PathBuf {
    match out {
        Some(p) if p.is_dir() || p.extension().is_none() => p.join(default_name),
        Some(p) => p.clone(),
        None => PathBuf::from(default_name),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sample { common, resume, max_calls } => {
            let mut cfg = pipeline(&common)?;
            cfg.max_calls = max_calls.or(cfg.max_calls);
            let out = cmd_sample(&cfg, resume)?;
            let c = &out.cloud.certificate;
            println!(
                "{} points, certificate ({:e}, {:e}), {} solver calls, seed {}",
                out.cloud.len(),
                c.delta,
                c.epsilon,
                c.calls,
                out.cloud.seed
            );
            if out.cloud.is_empty() {
                eprintln!("note: V_ℝ empty in the region");
            }
            println!("wrote {} and {}", out.csv.display(), out.log.display());
        }
        Command::Persist { input, common, simplex_cap, no_collapse } => {
            let cfg = pipeline(&common)?;
            let tmax = cfg.tmax.ok_or_else(|| CliError::Parse("--tmax is required".into()))?;
            let pmax = cfg.pmax.unwrap_or(2);
            let out = output_file(cfg.out.as_ref(), "diagram.csv");
            let diag = cmd_persist(&input, tmax, pmax, simplex_cap.or(cfg.simplex_cap), !no_collapse, &out)?;
            for d in 0..=pmax {
                let total = diag.in_dim(d).count();
                let essential = diag.in_dim(d).filter(|p| p.death.is_infinite()).count();
                println!("H{d}: {total} intervals, {essential} alive at {tmax}");
            }
            println!("wrote {}", out.display());
        }
        Command::Infer { input, common, n } => {
            let cfg = pipeline(&common)?;
            let verdict = cmd_infer(&input, n, cfg.epsilon, cfg.delta, &cfg.out_dir())?;
            for w in &verdict.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", verdict.to_text());
        }
        Command::Subsample { input, common, radius } => {
            let cfg = pipeline(&common)?;
            let out = output_file(cfg.out.as_ref(), "subsample.csv");
            let thin = cmd_subsample(&input, radius, cfg.seed.unwrap_or(0), &out)?;
            println!(
                "{} points, certificate ({:e}, {:e}); wrote {}",
                thin.len(),
                thin.certificate.delta,
                thin.certificate.epsilon,
                out.display()
            );
        }
        Command::Verify { input, common, reference } => {
            let cfg = pipeline(&common)?;
            let report = cmd_verify(&cfg, &input, reference.as_deref())?;
            println!("{}", report.message);
            if !report.passed {
                return Err(CliError::Verification(format!("verification failed: {}", report.message)));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
