//! Degrade → reconstruct → evaluate over a corpus, per solver.

use std::fmt::Write as _;
use std::time::Instant;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::dictionary::{CodingSolver, CoupledDictionary};
use crate::imaging::{center_crop_to_multiple, degrade, Image};
use crate::metrics::{csv_field, fmt_psnr, psnr, sig6, ssim, SsimConfig};
use crate::superres::{bicubic_upscale, super_resolve, SrConfig, SrReport, StageTimes};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Sl0,
    Ista,
    Bicubic,
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Sl0 => "sl0",
            Solver::Ista => "ista",
            Solver::Bicubic => "bicubic",
        }
    }
}

/// Runs one reconstruction `repeat` times; stage times are medians.
pub fn reconstruct(
    y: &Image,
    dict: Option<&CoupledDictionary>,
    solver: Solver,
    config: &SrConfig,
    ista: &CodingSolver,
    repeat: usize,
) -> Result<(Image, SrReport)> {
    let repeat = repeat.max(1);
    let mut runs = Vec::with_capacity(repeat);
    for _ in 0..repeat {
        let out = match solver {
            Solver::Bicubic => bicubic_upscale(y, config.scale)?,
            Solver::Sl0 | Solver::Ista => {
                let dict = dict.ok_or_else(|| Error::Config(format!("solver {} needs a dictionary", solver.name())))?;
                let mut cfg = *config;
                if solver == Solver::Ista {
                    cfg.coding = *ista;
                }
                super_resolve(y, dict, &cfg)?
            }
        };
        runs.push(out);
    }
    let times: Vec<StageTimes> = runs.iter().map(|(_, r)| r.wall_times).collect();
    let (image, mut report) = runs.pop().expect("at least one run");
    report.wall_times = median_times(&times);
    Ok((image, report))
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn median_times(t: &[StageTimes]) -> StageTimes {
    let pick = |f: fn(&StageTimes) -> f64| median(&mut t.iter().map(f).collect::<Vec<_>>());
    StageTimes {
        extract: pick(|s| s.extract),
        coding: pick(|s| s.coding),
        assembly: pick(|s| s.assembly),
        global: pick(|s| s.global),
        total: pick(|s| s.total),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub psnr: f64,
    pub ssim: f64,
    pub coding_seconds: f64,
    pub total_seconds: f64,
    pub mean_patch_sparsity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub images: Vec<String>,
    pub solvers: Vec<Solver>,
    /// `cells[image][solver]`.
    pub cells: Vec<Vec<BenchCell>>,
}

impl BenchResult {
    fn column(&self, s: usize) -> impl Iterator<Item = &BenchCell> {
        self.cells.iter().map(move |row| &row[s])
    }

    fn solver_index(&self, solver: Solver) -> Option<usize> {
        self.solvers.iter().position(|&s| s == solver)
    }

    pub fn mean_psnr(&self, solver: Solver) -> Option<f64> {
        let s = self.solver_index(solver)?;
        Some(self.column(s).map(|c| c.psnr).sum::<f64>() / self.images.len() as f64)
    }

    pub fn mean_ssim(&self, solver: Solver) -> Option<f64> {
        let s = self.solver_index(solver)?;
        Some(self.column(s).map(|c| c.ssim).sum::<f64>() / self.images.len() as f64)
    }

    pub fn coding_seconds(&self, solver: Solver) -> Option<f64> {
        let s = self.solver_index(solver)?;
        Some(self.column(s).map(|c| c.coding_seconds).sum())
    }

    pub fn total_seconds(&self, solver: Solver) -> Option<f64> {
        let s = self.solver_index(solver)?;
        Some(self.column(s).map(|c| c.total_seconds).sum())
    }

    /// Percentage of ISTA coding time saved by SL0.
    pub fn time_saving(&self) -> Option<f64> {
        let (a, b) = (self.coding_seconds(Solver::Sl0)?, self.coding_seconds(Solver::Ista)?);
        (b > 0.0).then(|| 100.0 * (1.0 - a / b))
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| image |");
        for v in &self.solvers {
            let _ = write!(s, " {0} PSNR(dB) | {0} SSIM |", v.name());
        }
        s.push_str("\n|---|");
        s.push_str(&"---:|---:|".repeat(self.solvers.len()));
        s.push('\n');
        for (name, row) in self.images.iter().zip(&self.cells) {
            let _ = write!(s, "| {name} |");
            for c in row {
                let _ = write!(s, " {} | {:.4} |", fmt_psnr(c.psnr), c.ssim);
            }
            s.push('\n');
        }
        s.push_str("| Average |");
        for &v in &self.solvers {
            let _ = write!(
                s,
                " {} | {:.4} |",
                fmt_psnr(self.mean_psnr(v).unwrap_or(f64::NAN)),
                self.mean_ssim(v).unwrap_or(f64::NAN)
            );
        }
        s.push_str("\n\n| solver | coding (s) | total (s) |\n|---|---:|---:|\n");
        for &v in &self.solvers {
            let _ = writeln!(
                s,
                "| {} | {:.2} | {:.2} |",
                v.name(),
                self.coding_seconds(v).unwrap_or(0.0),
                self.total_seconds(v).unwrap_or(0.0)
            );
        }
        if let Some(t) = self.time_saving() {
            let _ = writeln!(s, "\nTime saving of sl0 over ista (coding): {t:.1} %");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,solver,psnr_db,ssim,coding_s,total_s\n");
        for (name, row) in self.images.iter().zip(&self.cells) {
            for (v, c) in self.solvers.iter().zip(row) {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{:.2},{:.2}",
                    csv_field(name),
                    v.name(),
                    sig6(c.psnr),
                    sig6(c.ssim),
                    c.coding_seconds,
                    c.total_seconds
                );
            }
        }
        for &v in &self.solvers {
            let _ = writeln!(
                s,
                "Average,{},{},{},{:.2},{:.2}",
                v.name(),
                sig6(self.mean_psnr(v).unwrap_or(f64::NAN)),
                sig6(self.mean_ssim(v).unwrap_or(f64::NAN)),
                self.coding_seconds(v).unwrap_or(0.0),
                self.total_seconds(v).unwrap_or(0.0)
            );
        }
        s
    }
}

/// Center-crops every HR image, degrades it with `config.degradation`,
/// reconstructs with each solver and scores against the cropped original.
pub fn run_bench(
    images: &[(String, Image)],
    dict: Option<&CoupledDictionary>,
    solvers: &[Solver],
    config: &SrConfig,
    ista: &CodingSolver,
    repeat: usize,
) -> Result<BenchResult> {
    if images.is_empty() {
        return Err(Error::invalid("benchmark corpus is empty"));
    }
    if solvers.is_empty() {
        return Err(Error::invalid("no solvers selected"));
    }
    let ssim_cfg = SsimConfig::default();
    let mut cells = Vec::with_capacity(images.len());
    for (name, hr) in images {
        let start = Instant::now();
        let (hr, _) = center_crop_to_multiple(hr, config.scale)?;
        let y = degrade(&hr, &config.degradation)?;
        let mut row = Vec::with_capacity(solvers.len());
        for &solver in solvers {
            let (x, rep) = reconstruct(&y, dict, solver, config, ista, repeat)?;
            row.push(BenchCell {
                psnr: psnr(&hr, &x, 1.0)?,
                ssim: ssim(&hr, &x, &ssim_cfg)?,
                coding_seconds: rep.wall_times.coding,
                total_seconds: rep.wall_times.total,
                mean_patch_sparsity: rep.mean_patch_sparsity,
            });
        }
        log::info!("{name}: {:.1}s", start.elapsed().as_secs_f64());
        cells.push(row);
    }
    Ok(BenchResult {
        images: images.iter().map(|(n, _)| n.clone()).collect(),
        solvers: solvers.to_vec(),
        cells,
    })
}
