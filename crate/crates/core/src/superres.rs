//! Patch-wise sparse-representation super-resolution: code every LR patch
//! against `D_l`, synthesise HR patches with `D_h`, average them into `X₀`,
//! then refine `X₀` under the global reconstruction constraint
//! `J(X) = ‖X − X₀‖² + λ‖SHX − Y‖²`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dictionary::{CodingSolver, CoupledDictionary, LrCoder};
use crate::imaging::{bicubic_resize, degrade_adjoint, degrade_plane, DegradationConfig, Image, Plane};
use crate::patches::{extract, merge, plan_grid, remove_mean, PatchGrid, PatchVector};
use crate::sl0::l0_count;
use crate::{Error, Result};

/// Maximum number of step halvings per global iteration.
const MAX_HALVINGS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SrConfig {
    pub scale: usize,
    pub lr_patch_size: usize,
    /// Overlap between neighbouring LR patches, in LR pixels.
    pub overlap: usize,
    /// Weight of the data term.
    pub lambda: f64,
    /// Gradient step size.
    pub nu: f64,
    pub max_global_iters: usize,
    /// Stop once the relative objective decrease falls below this.
    pub global_tol: f64,
    pub coding: CodingSolver,
    pub degradation: DegradationConfig,
}

impl Default for SrConfig {
    fn default() -> Self {
        Self {
            scale: 2,
            lr_patch_size: 5,
            overlap: 1,
            lambda: 0.1,
            nu: 0.5,
            max_global_iters: 100,
            global_tol: 1e-5,
            coding: CodingSolver::default(),
            degradation: DegradationConfig::default(),
        }
    }
}

impl SrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::Config(format!("nu must be positive, got {}", self.nu)));
        }
        if self.lr_patch_size == 0 || self.overlap >= self.lr_patch_size {
            return Err(Error::Config(format!(
                "overlap {} must be smaller than lr_patch_size {}",
                self.overlap, self.lr_patch_size
            )));
        }
        if !(self.global_tol >= 0.0) {
            return Err(Error::Config("global_tol must be >= 0".into()));
        }
        if self.degradation.scale != self.scale {
            return Err(Error::Config(format!(
                "degradation scale {} differs from scale {}",
                self.degradation.scale, self.scale
            )));
        }
        self.degradation.validate()?;
        self.coding.validate()
    }

    /// Checks that `dict` has the geometry this configuration expects.
    pub fn check_dictionary(&self, dict: &CoupledDictionary) -> Result<()> {
        if dict.scale != self.scale || dict.lr_patch_size != self.lr_patch_size {
            return Err(Error::Config(format!(
                "dictionary is for scale {} with {}x{} LR patches; configuration asks for scale {} with {}x{}",
                dict.scale, dict.lr_patch_size, dict.lr_patch_size, self.scale, self.lr_patch_size, self.lr_patch_size
            )));
        }
        if dict.hr_patch_size != self.scale * self.lr_patch_size {
            return Err(Error::Config(format!(
                "dictionary HR patch size {} != {}",
                dict.hr_patch_size,
                self.scale * self.lr_patch_size
            )));
        }
        Ok(())
    }
}

/// Wall-clock seconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub extract: f64,
    pub coding: f64,
    pub assembly: f64,
    pub global: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SrReport {
    pub patch_count: usize,
    pub mean_patch_sparsity: f64,
    pub global_iterations_used: usize,
    pub objective_trace: Vec<f64>,
    pub wall_times: StageTimes,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub iterations: usize,
    /// `J` at `X₀` followed by `J` after every accepted step.
    pub objective_trace: Vec<f64>,
    /// Step size after backtracking.
    pub final_nu: f64,
}

/// Codes one mean-removed LR patch against `√m_l · D_l`.
pub fn code_patch(d_low: &DMatrix<f64>, y_zero_mean: &[f64], coding: &CodingSolver) -> Result<DVector<f64>> {
    if y_zero_mean.len() != d_low.nrows() {
        return Err(Error::invalid(format!(
            "patch has {} values, dictionary rows {}",
            y_zero_mean.len(),
            d_low.nrows()
        )));
    }
    let coder = LrCoder::new(d_low, (d_low.nrows() as f64).sqrt(), coding)?;
    let a = coder.code_batch(&DMatrix::from_column_slice(y_zero_mean.len(), 1, y_zero_mean))?;
    Ok(a.column(0).into_owned())
}

/// `√m_h · D_h α + lr_mean`.
pub fn reconstruct_patch(d_high: &DMatrix<f64>, alpha: &DVector<f64>, lr_mean: f64) -> Result<Vec<f64>> {
    if alpha.len() != d_high.ncols() {
        return Err(Error::invalid(format!(
            "{} coefficients for {} atoms",
            alpha.len(),
            d_high.ncols()
        )));
    }
    let k = (d_high.nrows() as f64).sqrt();
    Ok((d_high * alpha).iter().map(|v| k * v + lr_mean).collect())
}

/// Overlap-averages HR patches into `X₀`.
pub fn assemble_x0(hr_patches: &[PatchVector], hr_grid: &PatchGrid) -> Result<Image> {
    merge(hr_patches, hr_grid)
}

fn objective(x: &Plane, x0: &Plane, y: &Plane, lambda: f64, deg: &DegradationConfig) -> Result<(f64, Plane)> {
    let r = degrade_plane(x, deg)?.sub(y);
    Ok((x.sub(x0).norm_squared() + lambda * r.norm_squared(), r))
}

/// Gradient descent on `J` from `X₀` with step halving on any increase.
/// Iterates are unconstrained; the result is clamped to `[0, 1]`.
pub fn global_reconstruct(x0: &Image, y: &Image, config: &SrConfig) -> Result<(Image, GlobalReport)> {
    let (x, report) = global_reconstruct_plane(x0.as_plane(), y.as_plane(), config)?;
    Ok((Image::from_plane(x)?, report))
}

pub fn global_reconstruct_plane(x0: &Plane, y: &Plane, config: &SrConfig) -> Result<(Plane, GlobalReport)> {
    config.validate()?;
    let deg = &config.degradation;
    let s = deg.scale;
    let (w, h) = x0.dims();
    if (w, h) != (s * y.width(), s * y.height()) {
        return Err(Error::invalid(format!(
            "X0 is {w}x{h} but Y is {}x{} at scale {s}",
            y.width(),
            y.height()
        )));
    }
    let lambda = config.lambda;
    let mut nu = config.nu;
    let mut x = x0.clone();
    let (mut j, mut r) = objective(&x, x0, y, lambda, deg)?;
    let mut report = GlobalReport { iterations: 0, objective_trace: vec![j], final_nu: nu };
    for _ in 0..config.max_global_iters {
        if j == 0.0 {
            break;
        }
        let grad = x.sub(x0).add_scaled(lambda, &degrade_adjoint(&r, w, h, deg)?);
        if grad.norm_squared() == 0.0 {
            break;
        }
        let mut accepted = None;
        for halving in 0..=MAX_HALVINGS {
            if halving > 0 {
                nu *= 0.5;
            }
            let cand = x.add_scaled(-nu, &grad);
            let (jc, rc) = objective(&cand, x0, y, lambda, deg)?;
            if !jc.is_finite() {
                return Err(Error::Numerical("global reconstruction diverged".into()));
            }
            if jc <= j {
                accepted = Some((cand, jc, rc));
                break;
            }
        }
        let Some((cand, jc, rc)) = accepted else { break };
        let rel = (j - jc) / j;
        x = cand;
        j = jc;
        r = rc;
        report.iterations += 1;
        report.objective_trace.push(j);
        if rel < config.global_tol {
            break;
        }
    }
    report.final_nu = nu;
    Ok((x, report))
}

/// The full pipeline on an LR image.
pub fn super_resolve(y: &Image, dict: &CoupledDictionary, config: &SrConfig) -> Result<(Image, SrReport)> {
    config.validate()?;
    config.check_dictionary(dict)?;
    dict.check()?;
    let start = Instant::now();
    let mut times = StageTimes::default();

    let grid = plan_grid(y.width(), y.height(), config.lr_patch_size, config.overlap)?;
    let hr_grid = grid.scaled(config.scale);
    let lr = extract(y, &grid)?;
    let ml = dict.lr_dim();
    let mut targets = DMatrix::zeros(ml, lr.len());
    let mut means = Vec::with_capacity(lr.len());
    for (k, p) in lr.iter().enumerate() {
        let (z, mean) = remove_mean(p);
        targets.column_mut(k).copy_from_slice(&z.values);
        means.push(mean);
    }
    times.extract = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let coder = LrCoder::new(&dict.d_low, (ml as f64).sqrt(), &config.coding)?;
    let codes = coder.code_batch(&targets)?;
    times.coding = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let k = (dict.hr_dim() as f64).sqrt();
    let hr = &dict.d_high * &codes;
    let hr_patches: Vec<PatchVector> = hr_grid
        .positions()
        .into_iter()
        .enumerate()
        .map(|(c, anchor)| PatchVector {
            values: hr.column(c).iter().map(|v| k * v + means[c]).collect(),
            mean: 0.0,
            anchor,
        })
        .collect();
    let x0 = assemble_x0(&hr_patches, &hr_grid)?;
    times.assembly = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (x, global) = global_reconstruct(&x0, y, config)?;
    times.global = t.elapsed().as_secs_f64();
    times.total = start.elapsed().as_secs_f64();

    let sparsity = codes
        .column_iter()
        .map(|c| l0_count(c.as_slice()) as f64)
        .sum::<f64>()
        / codes.ncols().max(1) as f64;
    let report = SrReport {
        patch_count: grid.len(),
        mean_patch_sparsity: sparsity,
        global_iterations_used: global.iterations,
        objective_trace: global.objective_trace,
        wall_times: times,
    };
    Ok((x, report))
}

/// Bicubic upscaling by `scale`, the comparison baseline.
pub fn bicubic_upscale(y: &Image, scale: usize) -> Result<(Image, SrReport)> {
    let start = Instant::now();
    let out = bicubic_resize(y, scale * y.width(), scale * y.height())?;
    let total = start.elapsed().as_secs_f64();
    Ok((
        out,
        SrReport {
            wall_times: StageTimes { total, ..Default::default() },
            ..Default::default()
        },
    ))
}
