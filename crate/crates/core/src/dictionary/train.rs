//! Coupled dictionary training: LR-consistent SL0 coding alternated with a
//! ridge-regularised MOD update of the concatenated dictionary.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CodingSolver, CoupledDictionary, LrCoder};
use crate::imaging::{center_crop_to_multiple, degrade, DegradationConfig, Image};
use crate::patches::{extract, plan_grid, remove_mean};
use crate::sl0::{Sl0Config, SUPPORT_THRESHOLD};
use crate::{Error, Result};

/// Pairs whose scaled LR block is shorter than this carry no structure and
/// are dropped.
const FLAT_NORM: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub atom_count: usize,
    pub epochs: usize,
    pub coding: Sl0Config,
    /// ρ in `D = ZAᵀ(AAᵀ + ρ·diag(AAᵀ))⁻¹`.
    pub mod_ridge: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            atom_count: 1024,
            epochs: 20,
            coding: Sl0Config::default(),
            mod_ridge: 1.0,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.coding.validate()?;
        if self.atom_count == 0 {
            return Err(Error::invalid("atom_count must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.mod_ridge >= 0.0 && self.mod_ridge.is_finite()) {
            return Err(Error::invalid(format!("mod_ridge must be >= 0, got {}", self.mod_ridge)));
        }
        Ok(())
    }
}

/// Mean-removed LR patch and its HR counterpart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub lr: Vec<f64>,
    pub hr: Vec<f64>,
}

/// Degrades each image with `degradation` and collects corresponding
/// mean-removed LR/HR patches on the LR grid and its scaled HR grid.
pub fn harvest_pairs(
    images: &[Image],
    degradation: &DegradationConfig,
    lr_patch_size: usize,
    overlap: usize,
) -> Result<Vec<TrainingPair>> {
    degradation.validate()?;
    let s = degradation.scale;
    let mut pairs = Vec::new();
    for hr in images {
        let (hr, _) = center_crop_to_multiple(hr, s)?;
        let lr = degrade(&hr, degradation)?;
        let grid = plan_grid(lr.width(), lr.height(), lr_patch_size, overlap)?;
        let hr_grid = grid.scaled(s);
        for (y, x) in extract(&lr, &grid)?.iter().zip(extract(&hr, &hr_grid)?.iter()) {
            pairs.push(TrainingPair {
                lr: remove_mean(y).0.values,
                hr: remove_mean(x).0.values,
            });
        }
    }
    Ok(pairs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// `Σ‖zⱼ − Dαⱼ‖²` with the codes of this epoch, before the update.
    pub coding_error: f64,
    /// Ridge-penalised MOD objective before and after the update.
    pub mod_objective_before: f64,
    pub mod_objective_after: f64,
    /// `Σ‖zⱼ − Dαⱼ‖²` right after the update.
    pub updated_error: f64,
    pub dead_atoms: usize,
    pub mean_sparsity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochReport>,
    pub pairs_used: usize,
    pub pairs_dropped: usize,
    /// RMS of the concatenated training vectors.
    pub input_rms: f64,
    /// Reconstruction RMSE after the final update.
    pub final_rmse: f64,
}

/// Epoch-by-epoch training state.
pub struct Trainer {
    z: DMatrix<f64>,
    d: DMatrix<f64>,
    ml: usize,
    lr_patch_size: usize,
    hr_patch_size: usize,
    scale: usize,
    config: TrainingConfig,
    reports: Vec<EpochReport>,
    dropped: usize,
}

fn integer_sqrt(v: usize) -> Option<usize> {
    let r = (v as f64).sqrt().round() as usize;
    (r * r == v).then_some(r)
}

impl Trainer {
    /// Builds the concatenated training matrix and the seeded initial
    /// dictionary (distinct training vectors, normalised).
    pub fn new(pairs: &[TrainingPair], config: &TrainingConfig) -> Result<Self> {
        config.validate()?;
        let first = pairs
            .first()
            .ok_or_else(|| Error::invalid("no training pairs"))?;
        let (ml, mh) = (first.lr.len(), first.hr.len());
        let lr_patch_size = integer_sqrt(ml)
            .filter(|&p| p > 0)
            .ok_or_else(|| Error::invalid(format!("LR vector length {ml} is not a square")))?;
        let hr_patch_size = integer_sqrt(mh)
            .filter(|&p| p > 0 && p % lr_patch_size == 0)
            .ok_or_else(|| Error::invalid(format!("HR vector length {mh} does not match LR patch size {lr_patch_size}")))?;
        if let Some(bad) = pairs.iter().position(|p| p.lr.len() != ml || p.hr.len() != mh) {
            return Err(Error::invalid(format!("pair {bad} has inconsistent vector lengths")));
        }
        if pairs.len() < config.atom_count {
            return Err(Error::invalid(format!(
                "{} training pairs for {} atoms",
                pairs.len(),
                config.atom_count
            )));
        }
        let (sl, sh) = (1.0 / (ml as f64).sqrt(), 1.0 / (mh as f64).sqrt());
        let kept: Vec<&TrainingPair> = pairs
            .iter()
            .filter(|p| p.lr.iter().map(|v| v * v).sum::<f64>().sqrt() * sl > FLAT_NORM)
            .collect();
        if kept.len() < config.atom_count {
            return Err(Error::DegenerateData(format!(
                "only {} of {} training pairs have LR structure; {} atoms requested",
                kept.len(),
                pairs.len(),
                config.atom_count
            )));
        }
        let m = ml + mh;
        let mut z = DMatrix::zeros(m, kept.len());
        for (j, p) in kept.iter().enumerate() {
            let mut col = z.column_mut(j);
            for (i, v) in p.lr.iter().enumerate() {
                col[i] = v * sl;
            }
            for (i, v) in p.hr.iter().enumerate() {
                col[ml + i] = v * sh;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let picks = rand::seq::index::sample(&mut rng, kept.len(), config.atom_count);
        let mut d = DMatrix::zeros(m, config.atom_count);
        for (c, j) in picks.iter().enumerate() {
            let col = z.column(j);
            d.column_mut(c).copy_from(&(col / col.norm()));
        }
        Ok(Self {
            z,
            d,
            ml,
            lr_patch_size,
            hr_patch_size,
            scale: hr_patch_size / lr_patch_size,
            config: *config,
            reports: Vec::new(),
            dropped: pairs.len() - kept.len(),
        })
    }

    /// Replaces the initial dictionary; columns are normalised.
    pub fn with_initial_dictionary(mut self, d: DMatrix<f64>) -> Result<Self> {
        if d.shape() != self.d.shape() {
            return Err(Error::invalid(format!(
                "initial dictionary is {:?}, expected {:?}",
                d.shape(),
                self.d.shape()
            )));
        }
        let mut d = d;
        for mut c in d.column_iter_mut() {
            let norm = c.norm();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::invalid("initial dictionary has a zero or non-finite column"));
            }
            c.unscale_mut(norm);
        }
        self.d = d;
        Ok(self)
    }

    /// Concatenated dictionary `[D_l; D_h]`.
    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// Concatenated training vectors, one per column.
    pub fn training_matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn reports(&self) -> &[EpochReport] {
        &self.reports
    }

    /// Codes the LR block of every training vector against `D_l`.
    pub fn code(&self) -> Result<DMatrix<f64>> {
        let coder = LrCoder::new(
            &self.d.rows(0, self.ml).into_owned(),
            1.0,
            &CodingSolver::Sl0(self.config.coding),
        )?;
        coder.code_batch(&self.z.rows(0, self.ml).into_owned())
    }

    fn error(&self, d: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
        (&self.z - d * a).norm_squared()
    }

    /// MOD update for fixed codes, column renormalisation and dead-atom
    /// replacement.
    pub fn update(&mut self, codes: &DMatrix<f64>) -> Result<EpochReport> {
        let n = self.d.ncols();
        if codes.shape() != (n, self.z.ncols()) {
            return Err(Error::invalid(format!(
                "codes are {:?}, expected {:?}",
                codes.shape(),
                (n, self.z.ncols())
            )));
        }
        let rho = self.config.mod_ridge;
        let coding_error = self.error(&self.d, codes);
        let gram = codes * codes.transpose();
        let touched: Vec<usize> = (0..n).filter(|&j| gram[(j, j)] > 0.0).collect();
        let penalty = |d: &DMatrix<f64>| -> f64 {
            touched
                .iter()
                .map(|&j| rho * gram[(j, j)] * d.column(j).norm_squared())
                .sum()
        };
        let mod_objective_before = coding_error + penalty(&self.d);

        let mut d_new = self.d.clone();
        if !touched.is_empty() {
            let mut m = gram.select_rows(&touched).select_columns(&touched);
            for (k, _) in touched.iter().enumerate() {
                m[(k, k)] *= 1.0 + rho;
            }
            let rhs = codes.select_rows(&touched) * self.z.transpose();
            let solved = match m.clone().cholesky() {
                Some(ch) => ch.solve(&rhs),
                None => m
                    .lu()
                    .solve(&rhs)
                    .ok_or_else(|| Error::Numerical("MOD normal equations are singular; use mod_ridge > 0".into()))?,
            };
            for (k, &j) in touched.iter().enumerate() {
                d_new.column_mut(j).copy_from(&solved.row(k).transpose());
            }
        }
        let mod_objective_after = self.error(&d_new, codes) + penalty(&d_new);
        let updated_error = self.error(&d_new, codes);

        let mut a = codes.clone();
        let mut dead: Vec<usize> = Vec::new();
        for j in 0..n {
            let norm = d_new.column(j).norm();
            if norm > 0.0 && norm.is_finite() {
                d_new.column_mut(j).unscale_mut(norm);
                a.row_mut(j).scale_mut(norm);
            } else {
                dead.push(j);
            }
        }
        let mut used = vec![false; n];
        for c in 0..a.ncols() {
            let col = a.column(c);
            let max = col.amax();
            if max == 0.0 {
                continue;
            }
            for (j, v) in col.iter().enumerate() {
                if v.abs() > SUPPORT_THRESHOLD * max {
                    used[j] = true;
                }
            }
        }
        for (j, &u) in used.iter().enumerate() {
            if !u && !dead.contains(&j) {
                dead.push(j);
            }
        }
        dead.sort_unstable();
        if !dead.is_empty() {
            let resid = &self.z - &d_new * &a;
            let errs: Vec<f64> = resid.column_iter().map(|c| c.norm_squared()).collect();
            let mut order: Vec<usize> = (0..errs.len()).collect();
            order.sort_by(|&x, &y| errs[y].total_cmp(&errs[x]).then(x.cmp(&y)));
            for (&j, &w) in dead.iter().zip(&order) {
                let col: DVector<f64> = self.z.column(w).into_owned();
                d_new.column_mut(j).copy_from(&(&col / col.norm()));
            }
        }
        if d_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("dictionary update produced non-finite entries".into()));
        }
        self.d = d_new;

        let mean_sparsity = codes
            .column_iter()
            .map(|c| crate::sl0::l0_count(c.as_slice()) as f64)
            .sum::<f64>()
            / codes.ncols() as f64;
        let report = EpochReport {
            epoch: self.reports.len(),
            coding_error,
            mod_objective_before,
            mod_objective_after,
            updated_error,
            dead_atoms: dead.len(),
            mean_sparsity,
        };
        log::info!(
            "epoch {}: error {:.4} -> {:.4}, {} dead atoms, mean sparsity {:.2}",
            report.epoch,
            report.coding_error,
            report.updated_error,
            report.dead_atoms,
            report.mean_sparsity
        );
        self.reports.push(report.clone());
        Ok(report)
    }

    /// One coding pass followed by one update.
    pub fn epoch(&mut self) -> Result<EpochReport> {
        let codes = self.code()?;
        self.update(&codes)
    }

    pub fn finish(self) -> (CoupledDictionary, TrainingReport) {
        let total = self.z.len() as f64;
        let input_rms = (self.z.norm_squared() / total).sqrt();
        let final_rmse = self
            .reports
            .last()
            .map(|r| (r.updated_error / total).sqrt())
            .unwrap_or(f64::NAN);
        let mh = self.d.nrows() - self.ml;
        let dict = CoupledDictionary {
            d_low: self.d.rows(0, self.ml).into_owned(),
            d_high: self.d.rows(self.ml, mh).into_owned(),
            lr_patch_size: self.lr_patch_size,
            hr_patch_size: self.hr_patch_size,
            scale: self.scale,
        };
        let report = TrainingReport {
            pairs_used: self.z.ncols(),
            pairs_dropped: self.dropped,
            epochs: self.reports,
            input_rms,
            final_rmse,
        };
        (dict, report)
    }
}

/// Runs `config.epochs` epochs from the seeded initialisation.
pub fn train_coupled(pairs: &[TrainingPair], config: &TrainingConfig) -> Result<(CoupledDictionary, TrainingReport)> {
    let mut trainer = Trainer::new(pairs, config)?;
    for _ in 0..config.epochs {
        trainer.epoch()?;
    }
    Ok(trainer.finish())
}
