//! Sparse coding of mean-removed LR patches against `D_l`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{column_norms, columns_are_zero_mean, zero_mean_basis};
use crate::sl0::{sl0_solve_batch, FeasibleSet, IstaSolver, Sl0Config};
use crate::{Error, Result};

/// Columns per parallel work item. Fixed so results do not depend on the
/// number of worker threads.
pub const CODING_CHUNK: usize = 128;

/// Atoms whose LR part is shorter than this are excluded from coding.
const ACTIVE_NORM: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "solver", rename_all = "lowercase")]
pub enum CodingSolver {
    Sl0(Sl0Config),
    Ista { l1_weight: f64, max_iters: usize },
}

impl Default for CodingSolver {
    fn default() -> Self {
        CodingSolver::Sl0(Sl0Config::default())
    }
}

/// ISTA settings used when only the solver is chosen.
pub const DEFAULT_ISTA_L1_WEIGHT: f64 = 1e-3;
pub const DEFAULT_ISTA_ITERS: usize = 300;

impl CodingSolver {
    pub fn default_ista() -> Self {
        CodingSolver::Ista {
            l1_weight: DEFAULT_ISTA_L1_WEIGHT,
            max_iters: DEFAULT_ISTA_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CodingSolver::Sl0(c) => c.validate(),
            CodingSolver::Ista { l1_weight, max_iters } => {
                if !(*l1_weight > 0.0 && l1_weight.is_finite()) {
                    return Err(Error::invalid(format!("l1_weight must be positive, got {l1_weight}")));
                }
                if *max_iters == 0 {
                    return Err(Error::invalid("max_iters must be at least 1"));
                }
                Ok(())
            }
        }
    }
}

enum Engine {
    Sl0(Arc<FeasibleSet>, Sl0Config),
    Ista(IstaSolver, f64, usize),
}

/// Codes targets `y` against `lr_scale · D_l`.
///
/// Atoms are normalised before coding and the coefficients mapped back, so
/// codes do not depend on the relative scale of individual atoms. When every
/// atom is zero-mean the problem is solved in an orthonormal basis of the
/// zero-mean subspace, where the reduced dictionary has full row rank.
pub struct LrCoder {
    engine: Engine,
    basis_t: Option<DMatrix<f64>>,
    active: Vec<usize>,
    /// `1 / (lr_scale · ‖d_lowⱼ‖)` for active atoms.
    inv_norms: Vec<f64>,
    atoms: usize,
    rows: usize,
}

impl LrCoder {
    pub fn new(d_low: &DMatrix<f64>, lr_scale: f64, solver: &CodingSolver) -> Result<Self> {
        solver.validate()?;
        let (m, n) = d_low.shape();
        let norms = column_norms(d_low);
        let active: Vec<usize> = (0..n).filter(|&j| norms[j] > ACTIVE_NORM).collect();
        if active.is_empty() {
            return Err(Error::DegenerateData("dictionary has no active LR atoms".into()));
        }
        let mut normalized = d_low.select_columns(&active);
        for (c, &j) in active.iter().enumerate() {
            normalized.column_mut(c).unscale_mut(norms[j]);
        }
        let basis_t = columns_are_zero_mean(&normalized, 1e-9).then(|| zero_mean_basis(m).transpose());
        let reduced = match &basis_t {
            Some(qt) => qt * &normalized,
            None => normalized,
        };
        let engine = match *solver {
            CodingSolver::Sl0(cfg) => Engine::Sl0(Arc::new(FeasibleSet::new(reduced)?), cfg),
            CodingSolver::Ista { l1_weight, max_iters } => {
                Engine::Ista(IstaSolver::new(reduced)?, l1_weight, max_iters)
            }
        };
        let inv_norms = active.iter().map(|&j| 1.0 / (lr_scale * norms[j])).collect();
        Ok(Self {
            engine,
            basis_t,
            active,
            inv_norms,
            atoms: n,
            rows: m,
        })
    }

    pub fn atoms(&self) -> usize {
        self.atoms
    }

    pub fn active_atoms(&self) -> &[usize] {
        &self.active
    }

    pub fn uses_zero_mean_basis(&self) -> bool {
        self.basis_t.is_some()
    }

    /// Codes every column of `targets` (m_l × k); returns the n × k codes.
    pub fn code_batch(&self, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if targets.nrows() != self.rows {
            return Err(Error::invalid(format!(
                "targets have {} rows, dictionary has {}",
                targets.nrows(),
                self.rows
            )));
        }
        let k = targets.ncols();
        let starts: Vec<usize> = (0..k).step_by(CODING_CHUNK).collect();
        let parts = starts
            .par_iter()
            .map(|&s| {
                let cols = targets.columns(s, CODING_CHUNK.min(k - s));
                let reduced = match &self.basis_t {
                    Some(qt) => qt * cols,
                    None => cols.into_owned(),
                };
                match &self.engine {
                    Engine::Sl0(set, cfg) => sl0_solve_batch(set, &reduced, cfg),
                    Engine::Ista(solver, w, iters) => solver.solve_batch(&reduced, *w, *iters),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros(self.atoms, k);
        for (&s, part) in starts.iter().zip(&parts) {
            for c in 0..part.ncols() {
                let mut col = out.column_mut(s + c);
                for (r, &j) in self.active.iter().enumerate() {
                    col[j] = part[(r, c)] * self.inv_norms[r];
                }
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("sparse coding produced non-finite coefficients".into()));
        }
        Ok(out)
    }
}
