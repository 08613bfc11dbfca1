//! Command-line front end.
//!
//! Every command that writes an output also writes `<output>.manifest.json`
//! holding the resolved invocation; `sl0sr replay <manifest>` reruns it.

mod bench;
mod manifest;

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use bench::{median, reconstruct, run_bench, BenchCell, BenchResult, Solver};
pub use manifest::{manifest_path, RunManifest};

use crate::dictionary::{
    harvest_pairs, load_dictionary, save_dictionary, train_coupled, CodingSolver, TrainingConfig,
};
use crate::imaging::{center_crop_to_multiple, degrade, read_image, write_image, DegradationConfig, Image};
use crate::metrics::{compare, SsimConfig};
use crate::sl0::Sl0Config;
use crate::superres::SrConfig;
use crate::{Error, Result};
use manifest::to_json;

#[derive(Parser, Debug)]
#[command(name = "sl0sr", version, about = "Smoothed-l0 sparse-representation super-resolution")]
pub struct Cli {
    /// Worker threads for patch coding (0 = all cores).
    #[arg(long, env = "SL0SR_THREADS", global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Command {
    /// Blur and decimate an HR image.
    Degrade(DegradeArgs),
    /// Train a coupled dictionary from a directory of HR images.
    Train(TrainArgs),
    /// Super-resolve an LR image.
    Sr(SrArgs),
    /// PSNR/SSIM of candidates against a reference.
    Eval(EvalArgs),
    /// Degrade, reconstruct and score a corpus with several solvers.
    Bench(BenchArgs),
    /// Rerun a command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DegradationArgs {
    #[arg(long, default_value_t = 2)]
    pub scale: usize,
    #[arg(long, default_value_t = 0.8)]
    pub blur_sigma: f64,
    /// Kernel half-width; defaults to ceil(3·sigma).
    #[arg(long)]
    pub blur_radius: Option<usize>,
}

impl DegradationArgs {
    fn config(&self) -> DegradationConfig {
        DegradationConfig {
            scale: self.scale,
            blur_sigma: self.blur_sigma,
            blur_radius: self.blur_radius,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Sl0Args {
    #[arg(long, default_value_t = Sl0Config::default().sigma_min)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = Sl0Config::default().sigma_decrease_factor)]
    pub sigma_decrease: f64,
    #[arg(long, default_value_t = Sl0Config::default().inner_iterations)]
    pub inner_iterations: usize,
    #[arg(long, default_value_t = Sl0Config::default().step_scale)]
    pub step_scale: f64,
}

impl Sl0Args {
    fn config(&self) -> Sl0Config {
        Sl0Config {
            sigma_min: self.sigma_min,
            sigma_decrease_factor: self.sigma_decrease,
            inner_iterations: self.inner_iterations,
            step_scale: self.step_scale,
            ..Sl0Config::default()
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReconArgs {
    #[arg(long, default_value_t = SrConfig::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = SrConfig::default().nu)]
    pub nu: f64,
    #[arg(long, default_value_t = SrConfig::default().max_global_iters)]
    pub max_global_iters: usize,
    #[arg(long, default_value_t = SrConfig::default().global_tol)]
    pub global_tol: f64,
    #[arg(long, default_value_t = 5)]
    pub lr_patch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub overlap: usize,
    #[arg(long, default_value_t = crate::dictionary::DEFAULT_ISTA_L1_WEIGHT)]
    pub l1_weight: f64,
    #[arg(long, default_value_t = crate::dictionary::DEFAULT_ISTA_ITERS)]
    pub ista_iters: usize,
    #[command(flatten)]
    pub sl0: Sl0Args,
    #[command(flatten)]
    pub degradation: DegradationArgs,
    /// Runs per measurement; stage times are medians.
    #[arg(long, default_value_t = 1)]
    pub repeat: usize,
}

impl ReconArgs {
    fn config(&self) -> SrConfig {
        SrConfig {
            scale: self.degradation.scale,
            lr_patch_size: self.lr_patch_size,
            overlap: self.overlap,
            lambda: self.lambda,
            nu: self.nu,
            max_global_iters: self.max_global_iters,
            global_tol: self.global_tol,
            coding: CodingSolver::Sl0(self.sl0.config()),
            degradation: self.degradation.config(),
        }
    }

    fn ista(&self) -> CodingSolver {
        CodingSolver::Ista {
            l1_weight: self.l1_weight,
            max_iters: self.ista_iters,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DegradeArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[command(flatten)]
    pub degradation: DegradationArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    pub image_dir: PathBuf,
    pub output: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub atoms: usize,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub lr_patch_size: usize,
    /// LR overlap of harvested training patches.
    #[arg(long, default_value_t = 1)]
    pub overlap: usize,
    #[arg(long, default_value_t = 1.0)]
    pub mod_ridge: f64,
    #[command(flatten)]
    pub sl0: Sl0Args,
    #[command(flatten)]
    pub degradation: DegradationArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SrArgs {
    pub input: PathBuf,
    /// Not read with `--solver bicubic`.
    pub dict: PathBuf,
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Solver::Sl0)]
    pub solver: Solver,
    #[command(flatten)]
    pub recon: ReconArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Markdown,
    Csv,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    pub reference: PathBuf,
    #[arg(required = true)]
    pub candidates: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
    pub format: TableFormat,
    /// PSNR peak; 1.0 for [0, 1] intensities.
    #[arg(long, default_value_t = 1.0)]
    pub peak: f64,
    /// Write the table here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchArgs {
    pub image_dir: PathBuf,
    pub dict: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "bicubic,ista,sl0")]
    pub solvers: Vec<Solver>,
    #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
    pub format: TableFormat,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub recon: ReconArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write the primary output here instead of the recorded path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match execute(&cli.command, cli.threads) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command on a pool of `threads` workers.
pub fn execute(command: &Command, threads: Option<usize>) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Degrade(a) => cmd_degrade(a, threads),
        Command::Train(a) => cmd_train(a, threads),
        Command::Sr(a) => cmd_sr(a, threads),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a, threads),
        Command::Replay(a) => cmd_replay(a, threads),
    })
}

fn manifest(command: &Command, threads: Option<usize>) -> RunManifest {
    let mut m = RunManifest::new(command.clone());
    m.threads = threads;
    m
}

pub fn cmd_degrade(a: &DegradeArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let cfg = a.degradation.config();
    cfg.validate()?;
    if cfg.scale < 2 {
        return Err(Error::invalid("--scale must be at least 2"));
    }
    let hr = read_image(&a.input)?;
    let (hr, crop) = center_crop_to_multiple(&hr, cfg.scale)?;
    if !crop.is_identity() {
        eprintln!(
            "cropped {}x{} to {}x{} at ({}, {})",
            crop.original_width, crop.original_height, crop.width, crop.height, crop.left, crop.top
        );
    }
    let y = degrade(&hr, &cfg)?;
    write_image(&y, &a.output)?;
    let mut m = manifest(&Command::Degrade(a.clone()), threads);
    m.inputs = vec![a.input.clone()];
    m.outputs = vec![a.output.clone()];
    m.config = to_json(&cfg);
    m.wall_times.insert("total".into(), start.elapsed().as_secs_f64());
    m.results = serde_json::json!({ "crop": crop, "output_width": y.width(), "output_height": y.height() });
    m.write_for(&a.output)?;
    println!("{}x{} -> {}x{}", hr.width(), hr.height(), y.width(), y.height());
    Ok(())
}

/// Image files (`.pgm`, `.png`) in `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::invalid(format!("no .pgm or .png images in {}", dir.display())));
    }
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn cmd_train(a: &TrainArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let files = list_images(&a.image_dir)?;
    let images = files.iter().map(read_image).collect::<Result<Vec<Image>>>()?;
    let deg = a.degradation.config();
    let pairs = harvest_pairs(&images, &deg, a.lr_patch_size, a.overlap)?;
    let harvest = start.elapsed().as_secs_f64();
    let cfg = TrainingConfig {
        atom_count: a.atoms,
        epochs: a.epochs,
        coding: a.sl0.config(),
        mod_ridge: a.mod_ridge,
        seed: a.seed,
    };
    let t = Instant::now();
    let (dict, report) = train_coupled(&pairs, &cfg)?;
    let training = t.elapsed().as_secs_f64();
    save_dictionary(&dict, &a.output)?;

    let mut m = manifest(&Command::Train(a.clone()), threads);
    m.seed = Some(a.seed);
    m.inputs = files;
    m.outputs = vec![a.output.clone()];
    m.config = serde_json::json!({ "training": cfg, "degradation": deg, "lr_patch_size": a.lr_patch_size, "overlap": a.overlap });
    m.wall_times.insert("harvest".into(), harvest);
    m.wall_times.insert("training".into(), training);
    m.wall_times.insert("total".into(), start.elapsed().as_secs_f64());
    m.results = serde_json::json!({
        "pairs": pairs.len(),
        "final_rmse": report.final_rmse,
        "input_rms": report.input_rms,
        "report": report,
    });
    m.write_for(&a.output)?;
    println!(
        "trained {} atoms on {} pairs; final RMSE {:.6} (input RMS {:.6})",
        dict.atom_count(),
        report.pairs_used,
        report.final_rmse,
        report.input_rms
    );
    Ok(())
}

pub fn cmd_sr(a: &SrArgs, threads: Option<usize>) -> Result<()> {
    let cfg = a.recon.config();
    cfg.validate()?;
    let y = read_image(&a.input)?;
    let dict = match a.solver {
        Solver::Bicubic => None,
        _ => Some(load_dictionary(&a.dict)?),
    };
    let ista = a.recon.ista();
    let (x, report) = reconstruct(&y, dict.as_ref(), a.solver, &cfg, &ista, a.recon.repeat)?;
    write_image(&x, &a.output)?;

    let mut m = manifest(&Command::Sr(a.clone()), threads);
    m.inputs = vec![a.input.clone()];
    if dict.is_some() {
        m.inputs.push(a.dict.clone());
    }
    m.outputs = vec![a.output.clone()];
    let mut resolved = cfg;
    if a.solver == Solver::Ista {
        resolved.coding = ista;
    }
    m.config = serde_json::json!({ "solver": a.solver, "sr": resolved });
    let w = report.wall_times;
    for (k, v) in [("extract", w.extract), ("coding", w.coding), ("assembly", w.assembly), ("global", w.global), ("total", w.total)] {
        m.wall_times.insert(k.into(), v);
    }
    m.results = to_json(&report);
    m.write_for(&a.output)?;
    println!(
        "{}x{} -> {}x{} [{}] patches {}, mean sparsity {:.2}, global iterations {}, coding {:.2}s, global {:.2}s, total {:.2}s",
        y.width(),
        y.height(),
        x.width(),
        x.height(),
        a.solver.name(),
        report.patch_count,
        report.mean_patch_sparsity,
        report.global_iterations_used,
        w.coding,
        w.global,
        w.total
    );
    Ok(())
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let reference = read_image(&a.reference)?;
    let candidates = a
        .candidates
        .iter()
        .map(|p| Ok((stem(p), read_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let table = compare(&reference, &candidates, a.peak, &SsimConfig::default())?;
    let text = match a.format {
        TableFormat::Markdown => table.to_markdown(),
        TableFormat::Csv => table.to_csv(),
    };
    emit(&text, a.output.as_deref())
}

pub fn cmd_bench(a: &BenchArgs, threads: Option<usize>) -> Result<()> {
    let start = Instant::now();
    let files = list_images(&a.image_dir)?;
    let images = files
        .iter()
        .map(|p| Ok((stem(p), read_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let cfg = a.recon.config();
    cfg.validate()?;
    let needs_dict = a.solvers.iter().any(|s| *s != Solver::Bicubic);
    let dict = if needs_dict { Some(load_dictionary(&a.dict)?) } else { None };
    let result = run_bench(&images, dict.as_ref(), &a.solvers, &cfg, &a.recon.ista(), a.recon.repeat)?;
    let text = match a.format {
        TableFormat::Markdown => result.to_markdown(),
        TableFormat::Csv => result.to_csv(),
    };
    emit(&text, a.output.as_deref())?;
    if let Some(out) = &a.output {
        let mut m = manifest(&Command::Bench(a.clone()), threads);
        m.inputs = files;
        m.inputs.push(a.dict.clone());
        m.outputs = vec![out.clone()];
        m.config = serde_json::json!({ "sr": cfg, "ista": a.recon.ista(), "solvers": a.solvers });
        m.wall_times.insert("total".into(), start.elapsed().as_secs_f64());
        m.results = to_json(&result);
        m.write_for(out)?;
    }
    Ok(())
}

pub fn cmd_replay(a: &ReplayArgs, threads: Option<usize>) -> Result<()> {
    let m = RunManifest::read(&a.manifest)?;
    let mut command = m.invocation;
    if let Some(out) = &a.output {
        match &mut command {
            Command::Degrade(c) => c.output = out.clone(),
            Command::Train(c) => c.output = out.clone(),
            Command::Sr(c) => c.output = out.clone(),
            Command::Eval(c) => c.output = Some(out.clone()),
            Command::Bench(c) => c.output = Some(out.clone()),
            Command::Replay(_) => {}
        }
    }
    if matches!(command, Command::Replay(_)) {
        return Err(Error::format("manifest", "a replay manifest cannot be replayed"));
    }
    execute(&command, threads.or(m.threads))
}
