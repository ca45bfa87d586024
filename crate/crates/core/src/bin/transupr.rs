use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use transupr::pipeline::{self, CoarseMode, PipelineConfig, PREDICTIONS_DIR, REPORT_FILE};
use transupr::Result;

#[derive(Parser)]
#[command(name = "transupr", version, about = "Uncertain-point refinement for LiDAR range-image segmentation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic labeled corpus with oracle probabilities.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Number of scans.
        #[arg(long)]
        scans: Option<usize>,
        /// Scene seed of the first scan.
        #[arg(long)]
        first_seed: Option<u64>,
    },
    /// Project every scan and dump range images as PGM.
    Project {
        #[command(flatten)]
        common: Common,
    },
    /// Train the refiner on a labeled corpus.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Run the full pipeline and write predicted labels.
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Stop after the KNN stage.
        #[arg(long)]
        no_refiner: bool,
        /// Replace the KNN vote with plain back-projection.
        #[arg(long)]
        no_knn: bool,
    },
    /// Score predicted labels against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Directory of predicted `.label` files; defaults to `<output>/predictions`.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Write colored PLY files.
    Export {
        #[command(flatten)]
        common: Common,
        /// Directory of `.label` files to color by; ground truth when omitted.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Pipeline config (TOML). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    c_u: Option<f64>,
    #[arg(long)]
    boundary_budget: Option<usize>,
    #[arg(long)]
    n_u: Option<usize>,
    #[arg(long)]
    knn_k: Option<usize>,
    /// Sets every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Coarse probability source: loaded or oracle.
    #[arg(long)]
    mode: Option<CoarseMode>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.paths.input = p.clone();
        }
        if let Some(p) = &self.output {
            cfg.paths.output = p.clone();
        }
        if let Some(v) = self.c_u {
            cfg.selection.c_u = v;
        }
        if let Some(v) = self.boundary_budget {
            cfg.selection.boundary_budget = v;
        }
        if let Some(v) = self.n_u {
            cfg.selection.n_u = v;
        }
        if let Some(v) = self.knn_k {
            cfg.knn.k = v;
        }
        if let Some(s) = self.seed {
            cfg.selection.seed = s;
            cfg.oracle.seed = s;
            cfg.train.seed = s;
            cfg.refine.seed = s;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen {
            common,
            scans,
            first_seed,
        } => {
            let mut cfg = common.resolve()?;
            if let Some(n) = scans {
                cfg.corpus.scans = n;
            }
            if let Some(s) = first_seed {
                cfg.corpus.first_seed = s;
            }
            let out = cfg.paths.output.clone();
            let ids = pipeline::generate_corpus(&cfg, &out)?;
            cfg.echo(&out)?;
            println!("wrote {} scans to {}", ids.len(), out.display());
        }
        Command::Project { common } => {
            let cfg = common.resolve()?;
            for (id, points, valid) in pipeline::run_project(&cfg)? {
                println!("{id} points={points} valid_pixels={valid}");
            }
            cfg.echo(&cfg.paths.output)?;
        }
        Command::Train { common, epochs } => {
            let mut cfg = common.resolve()?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let outcome = pipeline::run_train(&cfg)?;
            for l in &outcome.log {
                println!("{l}");
            }
            println!(
                "trained on {} scans ({} pool entries); checkpoint in {}",
                outcome.scans,
                outcome.pool_entries,
                cfg.paths.output.display()
            );
        }
        Command::Refine {
            common,
            checkpoint,
            no_refiner,
            no_knn,
        } => {
            let mut cfg = common.resolve()?;
            cfg.disable_refiner |= no_refiner;
            cfg.disable_knn |= no_knn;
            if checkpoint.is_some() {
                cfg.paths.checkpoint = checkpoint;
            }
            let model = pipeline::load_model(&cfg)?;
            let outcome = pipeline::run_refine(&cfg, model.as_ref())?;
            for s in &outcome.scans {
                println!("{} points={} pool={} changed={}", s.scan_id, s.points, s.pool, s.changed);
            }
            let report = cfg.paths.output.join(REPORT_FILE);
            if report.exists() {
                print!("{}", std::fs::read_to_string(&report).unwrap_or_default());
            }
        }
        Command::Eval { common, predictions } => {
            let cfg = common.resolve()?;
            let map = cfg.class_map()?;
            let pred = predictions.unwrap_or_else(|| cfg.paths.output.join(PREDICTIONS_DIR));
            let cm = pipeline::run_eval(&pred, &cfg.paths.input, &map)?;
            print!("{}", cm.report(Some(&map))?);
            let out = &cfg.paths.output;
            transupr::kitti_io::write_atomic(&out.join("eval.txt"), cm.report(Some(&map))?.as_bytes())?;
            transupr::kitti_io::write_atomic(&out.join("eval.kv"), cm.key_values(Some(&map))?.as_bytes())?;
        }
        Command::Export { common, labels } => {
            let cfg = common.resolve()?;
            let ids = pipeline::run_export(&cfg, labels.as_deref())?;
            println!("wrote {} PLY files to {}", ids.len(), cfg.paths.output.join("ply").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
