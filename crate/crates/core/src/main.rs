use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cpsynth::cli;
use cpsynth::config::RunConfig;
use cpsynth::Error;

#[derive(Parser)]
#[command(name = "cpsynth", version, about = "Copy-paste dataset synthesis and detection evaluation")]
struct Args {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides CPSYNTH_OUT and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive boxes from masks and export cutouts.
    Annotate,
    /// Synthesize the configured image set.
    Synth,
    /// Write augmented samples of a dataset for inspection.
    AugmentPreview {
        #[arg(long)]
        dataset: PathBuf,
        /// Image directory (default: `images/` beside the dataset, else its directory).
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        count: usize,
    },
    /// Score detections against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        results: PathBuf,
        /// COCO file of object-free images for FP_N.
        #[arg(long)]
        negatives: Option<PathBuf>,
        /// Split tags to report separately (repeatable).
        #[arg(long = "subset")]
        subsets: Vec<String>,
    },
    /// Per-split class frequencies.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf, Error> {
    flag.or_else(|| std::env::var_os("CPSYNTH_OUT").map(PathBuf::from))
        .or_else(|| cfg.path(&cfg.paths.output))
        .ok_or_else(|| Error::Config("no output directory: pass --out, set CPSYNTH_OUT, or set paths.output".into()))
}

fn run(args: Args) -> Result<(), Error> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = output_dir(args.out, &cfg)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::io(Path::new("thread pool"), std::io::Error::other(e.to_string())))?;
    pool.install(|| match args.command {
        Command::Annotate => {
            let r = cli::cmd_annotate(&cfg, &out)?;
            println!("annotated {} images, {} failures", r.annotated, r.failures.len());
            Ok(())
        }
        Command::Synth => {
            let s = cli::cmd_synth(&cfg, &out)?;
            println!("synthesized {} images, {} objects -> {}", s.images, s.objects, out.display());
            Ok(())
        }
        Command::AugmentPreview { dataset, images, count } => {
            cli::cmd_augment_preview(&cfg, &dataset, images.as_deref(), count, &out)?;
            println!("wrote {count} previews to {}", out.display());
            Ok(())
        }
        Command::Eval { gt, results, negatives, subsets } => {
            let r = cli::cmd_eval(&cfg, &gt, &results, negatives.as_deref(), &subsets, &out)?;
            print!("{}", r.to_text_table());
            Ok(())
        }
        Command::Stats { dataset } => {
            cli::cmd_stats(&dataset, &out)?;
            println!("wrote class frequencies to {}", out.display());
            Ok(())
        }
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
