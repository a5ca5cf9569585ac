use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use iosearch::run::{self, RunConfig, SearchOutcome, SearchRunOptions};

#[derive(Parser)]
#[command(name = "iosearch", version, about = "Feature-subset search with masked IO autoencoders")]
struct Cli {
    /// Worker threads for candidate and repetition training.
    #[arg(long, global = true, env = "IOSEARCH_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory; overrides `output_dir` from the config.
    #[arg(long, env = "IOSEARCH_OUT")]
    out: Option<PathBuf>,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Print the evaluation budget and exit without training.
    #[arg(long)]
    dry_run: bool,
    /// Continue from the checkpointed trace in the run directory.
    #[arg(long)]
    resume: bool,
    #[arg(long, hide = true)]
    stop_after: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, split and normalise the dataset and cache it in the run directory.
    Prepare(RunArgs),
    /// Forward search, kernel search and the final test comparison.
    Search(SearchArgs),
    /// Same as `search`, coarse-to-fine over reduced images.
    HierSearch(SearchArgs),
    /// Recompute the test comparison of a finished run.
    Evaluate {
        #[arg(long, env = "IOSEARCH_OUT")]
        out: PathBuf,
    },
    /// Search the clean images and each noise variant, then cluster the picks.
    NoiseSuite(RunArgs),
    /// Re-emit artifacts of a finished run and print a summary.
    Report {
        #[arg(long, env = "IOSEARCH_OUT")]
        out: PathBuf,
    },
}

fn load(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let Some(out) = args.out.clone().or_else(|| cfg.output_dir.clone()) else {
        bail!(iosearch::Error::Config("no run directory: pass --out or set output_dir".into()));
    };
    Ok((cfg, out))
}

fn search(args: &SearchArgs, hier: bool) -> Result<()> {
    let (cfg, out) = load(&args.run)?;
    if args.dry_run {
        let (ds, _) = run::load_or_prepare(&cfg, &out)?;
        let h = cfg.hier.clone().or_else(|| hier.then(Default::default));
        let b = run::plan_budget(&cfg, ds.feature_shape(), h.as_ref())?;
        println!(
            "budget: at most {} candidate trainings over {} steps, {} repetitions per step ({} classifier trainings)",
            b.candidate_evaluations, b.steps, b.repetitions_per_step, b.accuracy_trainings
        );
        return Ok(());
    }
    let opts = SearchRunOptions {
        resume: args.resume,
        stop_after: args.stop_after,
        hier,
    };
    match run::cmd_search(&cfg, &out, &opts)? {
        SearchOutcome::Completed(record) => print!("{}", run::summarize(&record)),
        SearchOutcome::Paused(trace) => println!("paused after {} steps; rerun with --resume", trace.steps.len()),
    }
    println!("run directory: {}", out.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Prepare(args) => {
            let (cfg, out) = load(args)?;
            let manifest = run::cmd_prepare(&cfg, &out)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Search(args) => search(args, false)?,
        Command::HierSearch(args) => search(args, true)?,
        Command::Evaluate { out } => {
            let ev = run::cmd_evaluate(out)?;
            println!(
                "k = {}, {} kernels: plain {:.4} ± {:.4}, augmented {:.4} ± {:.4}",
                ev.k, ev.kernel_count, ev.plain.mean, ev.plain.std, ev.augmented.mean, ev.augmented.std
            );
        }
        Command::NoiseSuite(args) => {
            let (cfg, out) = load(args)?;
            let suite = run::cmd_noise_suite(&cfg, &out)?;
            for v in &suite.variants {
                match &v.error {
                    None => println!("{}: ok", v.name),
                    Some(e) => println!("{}: failed: {e}", v.name),
                }
            }
            if let Some(st) = &suite.stability {
                for it in &st.iterations {
                    println!("iteration {}: {} clusters, agreement {:.3}", it.iteration, it.cluster_count, it.agreement);
                }
            }
        }
        Command::Report { out } => {
            let (manifest, summary) = run::cmd_report(out)?;
            print!("{summary}");
            println!("{} artifacts in {}", manifest.files.len(), Path::new(out).join(run::ARTIFACT_DIR).display());
        }
    }
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    e.chain()
        .find_map(|c| c.downcast_ref::<iosearch::Error>())
        .map(|e| e.exit_code() as u8)
        .unwrap_or(2)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
