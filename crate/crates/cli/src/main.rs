//! `wavelut` command line tool: batch enhancement of frame directories,
//! lattice fitting, benchmarking and quality metrics.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use wavelut::fit::{fit_lattice, FitConfig, TrainingPair};
use wavelut::lattice::io::{load_wlut4d, parse_cube, save_wlut4d, slice_at, write_cube};
use wavelut::lattice::Lattice4D;
use wavelut::losses::monotone_loss;
use wavelut::metrics::evaluate_clip;
use wavelut::pipeline::{
    benchmark, enhance_clip, frame_prior, load_frame, load_frames, save_frame, save_frames,
    EnhanceConfig, Enhancer,
};
use wavelut::wavelet::dwt2;
use wavelut::{Error, Frame};

#[derive(Parser)]
#[command(name = "wavelut", version, about = "Wavelet-prior 4D LUT enhancement of low-light frame sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Threads {
    /// Worker threads; overrides the config file.
    #[arg(long, env = "WAVELUT_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Enhance a directory of PNG/PPM frames.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// JSON enhancement config; an identity lattice is used without one.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
        /// Write the per-frame fusion weights to this CSV file.
        #[arg(long)]
        fusion_report: Option<PathBuf>,
    },
    /// Fit a lattice to paired low-light and reference frames.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Fitted lattice in WLUT4D format.
        #[arg(long)]
        output: PathBuf,
        /// JSON fit config; defaults apply without one.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Starting lattice; an identity lattice of size `--n` otherwise.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 17)]
        n: usize,
        /// Loss history CSV.
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        threads: Threads,
    },
    /// Time the pipeline and the interpolation stage on random frames.
    Bench {
        #[arg(long, default_value_t = 1920)]
        width: usize,
        #[arg(long, default_value_t = 1080)]
        height: usize,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, env = "WAVELUT_THREADS", default_value_t = 8)]
        threads: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// PSNR and SSIM of the frames in `--a` against the references in `--b`.
    Metrics {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        peak: f64,
        /// Per-frame CSV output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Create, inspect and convert lattice files.
    #[command(subcommand)]
    Lut(LutCommand),
    /// Write the four Haar sub-bands of an image (details offset by 0.5).
    Dwt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum LutCommand {
    /// Write an identity lattice.
    Identity {
        #[arg(long, default_value_t = 17)]
        n: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print size, axes and value statistics of a WLUT4D file.
    Inspect { path: PathBuf },
    /// Convert `.cube` to WLUT4D, or one prior slice of a WLUT4D to `.cube`.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Prior-axis index of the slice written to a `.cube` file.
        #[arg(long, default_value_t = 0)]
        slice: usize,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 1;
    };
    match e.root() {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidSize(_) | Error::Shape(_) => 2,
        Error::Io { .. } | Error::Format(_) | Error::EmptySequence(_) => 3,
        Error::Numeric(_) | Error::Diverged { .. } => 4,
        Error::Stage { .. } => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(BufWriter::new(file))
}

fn load_config(path: Option<&Path>) -> Result<EnhanceConfig> {
    Ok(match path {
        Some(p) => EnhanceConfig::load(p)?,
        None => EnhanceConfig::default(),
    })
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("threads must be >= 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Enhance {
            input,
            output,
            config,
            threads,
            fusion_report,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if threads.threads.is_some() {
                cfg.threads = threads.threads;
            }
            let enhancer = Enhancer::from_config(&cfg)?;
            let clip = load_frames(&input, 30.0)?;
            let start = Instant::now();
            let (out, report) = enhance_clip(&clip, &enhancer)?;
            let elapsed = start.elapsed().as_secs_f64();
            let written = save_frames(&out, &output, cfg.output)?;
            if let Some(p) = fusion_report {
                report.write_csv(create(&p)?)?;
            }
            println!(
                "enhanced {} frames in {:.3} s ({:.1} FPS), wrote {} files to {}",
                out.len(),
                elapsed,
                out.len() as f64 / elapsed.max(f64::MIN_POSITIVE),
                written.len(),
                output.display()
            );
        }
        Command::Fit {
            input,
            reference,
            output,
            config,
            init,
            n,
            history,
            threads,
        } => {
            install_threads(threads.threads)?;
            let cfg = match config {
                Some(p) => FitConfig::load(p)?,
                None => FitConfig::default(),
            };
            let init = match init {
                Some(p) => load_wlut4d(p)?,
                None => Lattice4D::identity(n)?,
            };
            let inputs = load_frames(&input, 30.0)?;
            let refs = load_frames(&reference, 30.0)?;
            if inputs.len() != refs.len() {
                bail!(Error::InvalidArgument(format!(
                    "{} input frames but {} references",
                    inputs.len(),
                    refs.len()
                )));
            }
            let fusion = Default::default();
            let pairs: Vec<TrainingPair> = inputs
                .frames()
                .iter()
                .zip(refs.frames())
                .map(|(i, r)| TrainingPair::with_computed_prior(i.clone(), r.clone(), &fusion))
                .collect::<wavelut::Result<_>>()?;
            let out = fit_lattice(&init, &pairs, &cfg)?;
            save_wlut4d(&out.lattice, &output)?;
            if let Some(p) = history {
                out.history.write_csv(create(&p)?)?;
            }
            println!(
                "total loss {:.6} -> {:.6} over {} steps; wrote {}",
                out.initial_loss,
                out.best_loss,
                cfg.warmup_steps + cfg.steps,
                output.display()
            );
        }
        Command::Bench {
            width,
            height,
            frames,
            threads,
            config,
            seed,
            json,
        } => {
            let enhancer = Enhancer::from_config(&load_config(config.as_deref())?)?;
            let report = benchmark(&enhancer, width, height, frames, threads, seed)?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(p) = json {
                std::fs::write(&p, &text).map_err(|e| Error::Io { path: p, source: e })?;
            }
            println!("{text}");
        }
        Command::Metrics { a, b, peak, csv } => {
            let (ca, cb) = (load_frames(&a, 30.0)?, load_frames(&b, 30.0)?);
            let report = evaluate_clip(ca.frames(), cb.frames(), peak)?;
            if let Some(p) = csv {
                report.write_csv(create(&p)?)?;
            }
            println!("{}", report.to_json());
        }
        Command::Lut(cmd) => lut(cmd)?,
        Command::Dwt { input, output } => {
            let frame = load_frame(&input)?;
            let bands = dwt2(&frame)?;
            std::fs::create_dir_all(&output).map_err(|e| Error::Io {
                path: output.clone(),
                source: e,
            })?;
            let shifted = |f: &Frame| -> wavelut::Result<Frame> {
                Frame::new(
                    f.height(),
                    f.width(),
                    f.channels(),
                    f.data().iter().map(|v| v + 0.5).collect(),
                )
            };
            save_frame(&bands.ll, output.join("ll.png"), 8)?;
            save_frame(&shifted(&bands.lh)?, output.join("lh.png"), 8)?;
            save_frame(&shifted(&bands.hl)?, output.join("hl.png"), 8)?;
            save_frame(&shifted(&bands.hh)?, output.join("hh.png"), 8)?;
            let prior = frame_prior(&frame, &Default::default())?;
            let mean = prior.values().iter().map(|&v| v as f64).sum::<f64>() / prior.values().len() as f64;
            println!(
                "{}x{} -> bands {}x{}{}; mean lookup prior {mean:.4}",
                frame.width(),
                frame.height(),
                bands.ll.width(),
                bands.ll.height(),
                if bands.padded { " (edge-padded)" } else { "" }
            );
        }
    }
    Ok(())
}

fn lut(cmd: LutCommand) -> Result<()> {
    match cmd {
        LutCommand::Identity { n, output } => {
            save_wlut4d(&Lattice4D::identity(n)?, &output)?;
            println!("wrote identity lattice n={n} to {}", output.display());
        }
        LutCommand::Inspect { path } => {
            let lut = load_wlut4d(&path)?;
            let values = lut.values();
            let min = values.iter().copied().fold(f32::INFINITY, f32::min);
            let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mean = values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64;
            let uniform = lut.axes().iter().all(|a| a.is_uniform());
            println!("n: {}", lut.n());
            println!("points: {}", lut.num_points());
            println!("axes: {}", if uniform { "uniform" } else { "non-uniform" });
            println!("values: min {min:.6} max {max:.6} mean {mean:.6}");
            println!("monotone violation: {:.6}", monotone_loss(&lut));
        }
        LutCommand::Convert {
            input,
            output,
            slice,
        } => {
            let ext = |p: &Path| p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            match (ext(&input).as_deref(), ext(&output).as_deref()) {
                (Some("cube"), _) => {
                    let text = std::fs::read_to_string(&input).map_err(|e| Error::Io {
                        path: input.clone(),
                        source: e,
                    })?;
                    save_wlut4d(&parse_cube(&text)?.to_4d()?, &output)?;
                }
                (_, Some("cube")) => {
                    let lut = load_wlut4d(&input)?;
                    let title = format!("slice {slice} of {}", input.display());
                    write_cube(&slice_at(&lut, slice)?, &title, create(&output)?).map_err(|e| {
                        Error::Io {
                            path: output.clone(),
                            source: e,
                        }
                    })?;
                }
                _ => bail!(Error::InvalidArgument(
                    "convert needs a .cube file on one side".into()
                )),
            }
            println!("wrote {}", output.display());
        }
    }
    Ok(())
}
