use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tttk_cli::commands::{self, DataSource, RenderRequest, Split};
use tttk_cli::RunConfig;

/// Traveltime tomography: eikonal solves, datasets, linearized inversion and
/// learned inversion.
#[derive(Parser)]
#[command(name = "tttk", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for the parallel library routines.
    #[arg(long, global = true, env = "TTTK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SourceArgs {
    /// Sheared measurements, `[N_s, N_s]` or `[n, N_s, N_s]`.
    #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
    data: Option<PathBuf>,
    /// Dataset directory to read measurements from.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
}

impl SourceArgs {
    fn source(&self) -> DataSource {
        match (&self.data, &self.dataset) {
            (Some(p), _) => DataSource::File(p.clone()),
            (None, Some(dir)) => DataSource::Dataset {
                dir: dir.clone(),
                split: self.split,
            },
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Traveltimes from one boundary source.
    Solve {
        /// `[n, n]` slowness tensor; unit slowness when omitted.
        #[arg(long)]
        slowness: Option<PathBuf>,
        /// Source angle in radians.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        angle: f64,
        #[arg(long, short)]
        out: PathBuf,
        /// Grey-level PNG; defaults to the output path with a png extension.
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Synthetic dataset of inclusions and their measurements.
    GenData {
        #[arg(long, short)]
        out: PathBuf,
        /// Overrides the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Assemble the linearized kernel, optionally applying it to fields.
    Linearize {
        /// Dense kernel output `[N_h, n_rho, n_theta]`.
        #[arg(long, short)]
        out: PathBuf,
        /// Polar fields `[n_rho, n_theta]` or `[n, n_rho, n_theta]`.
        #[arg(long, requires = "data_out")]
        apply: Option<PathBuf>,
        #[arg(long, requires = "apply")]
        data_out: Option<PathBuf>,
    },
    /// Filtered back-projection of sheared measurements.
    Fbp {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Train the inverse network on a dataset's training split.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Checkpoint directory.
        #[arg(long, short)]
        out: PathBuf,
        /// Overrides the shuffling seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the initialization seed.
        #[arg(long)]
        init_seed: Option<u64>,
    },
    /// Run a trained network.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Mean and per-sample PSNR of predictions against dataset labels.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        /// Per-sample values.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Draw a polar field on the unit disk, optionally beside its reference.
    Render {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, conflicts_with = "dataset")]
        reference: Option<PathBuf>,
        /// Use the dataset labels of `split` as reference.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Split::Test)]
        split: Split,
        /// Panel side in pixels.
        #[arg(long, default_value_t = 256)]
        size: u32,
        /// Value mapped to full saturation; largest magnitude when omitted.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Solve {
            slowness,
            angle,
            out,
            image,
        } => {
            let image = image.unwrap_or_else(|| out.with_extension("png"));
            let u = commands::solve(&cfg, slowness.as_deref(), angle, &out, &image)?;
            println!("{} sweeps; wrote {} and {}", u.sweeps, out.display(), image.display());
        }
        Command::GenData { out, seed } => {
            if let Some(s) = seed {
                cfg.dataset.seed = s;
            }
            let ds = commands::gen_data(&cfg, &out)?;
            println!(
                "{} samples ({} train, {} test) in {}",
                ds.len(),
                ds.train_range().len(),
                ds.test_range().len(),
                out.display()
            );
        }
        Command::Linearize { out, apply, data_out } => {
            let apply = apply.as_deref().zip(data_out.as_deref());
            let k = commands::linearize(&cfg, &out, apply)?;
            println!("kernel {:?} with n_quad {} in {}", k.shape(), k.n_quad(), out.display());
        }
        Command::Fbp { source, out } => {
            let fields = commands::fbp(&cfg, &source.source(), &out)?;
            println!("{} reconstructions in {}", fields.len(), out.display());
        }
        Command::Train {
            dataset,
            out,
            seed,
            init_seed,
        } => {
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(s) = init_seed {
                cfg.net.init_seed = s;
            }
            let h = commands::train(&cfg, &dataset, &out, |r| {
                let psnr = r.test_psnr.map(|p| format!(" test psnr {p:.2} dB")).unwrap_or_default();
                println!(
                    "epoch {:>4} batch {:>4} lr {:.2e} loss {:.6e}{psnr}",
                    r.epoch, r.batch, r.lr, r.train_loss
                );
            })?;
            println!(
                "train loss {:.6e} -> {:.6e}; checkpoint in {}",
                h.initial_train_loss,
                h.final_train_loss,
                out.display()
            );
        }
        Command::Predict { checkpoint, source, out } => {
            commands::predict(&cfg, &checkpoint, &source.source(), &out)?;
            println!("predictions in {}", out.display());
        }
        Command::Eval {
            pred,
            dataset,
            split,
            csv,
        } => {
            let report = commands::eval(&cfg, &pred, &dataset, split)?;
            if let Some(path) = &csv {
                std::fs::write(path, report.csv()).with_context(|| format!("writing {}", path.display()))?;
            }
            match report.mean {
                Some(m) => println!("mean PSNR {m:.4} dB over {} samples", report.psnr.len()),
                None => println!("mean PSNR undefined (no sample with finite PSNR)"),
            }
        }
        Command::Render {
            field,
            index,
            reference,
            dataset,
            split,
            size,
            scale,
            out,
        } => {
            let side = commands::render_field(
                &cfg,
                &RenderRequest {
                    field: &field,
                    index,
                    reference: reference.as_deref(),
                    dataset: dataset.as_deref().map(|d| (d, split)),
                    size,
                    scale,
                    out: &out,
                },
            )?;
            println!("wrote {} (scale {})", out.display(), side.scale);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e) as u8)
        }
    }
}
