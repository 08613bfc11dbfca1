//! Coupled low/high-resolution dictionaries sharing one coefficient space.

mod coder;
mod io;
mod train;

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use coder::{CodingSolver, LrCoder, CODING_CHUNK, DEFAULT_ISTA_ITERS, DEFAULT_ISTA_L1_WEIGHT};
pub use io::{decode_dictionary, encode_dictionary, load_dictionary, save_dictionary, MAGIC, VERSION};
pub use train::{
    harvest_pairs, train_coupled, EpochReport, Trainer, TrainingConfig, TrainingPair, TrainingReport,
};

const NORM_TOL: f64 = 1e-6;

/// `d_low` (m_l × n) and `d_high` (m_h × n). Every concatenated column
/// `[d_lowⱼ; d_highⱼ]` has unit norm.
#[derive(Clone, Debug, PartialEq)]
pub struct CoupledDictionary {
    pub d_low: DMatrix<f64>,
    pub d_high: DMatrix<f64>,
    pub lr_patch_size: usize,
    pub hr_patch_size: usize,
    pub scale: usize,
}

impl CoupledDictionary {
    pub fn atom_count(&self) -> usize {
        self.d_low.ncols()
    }

    pub fn lr_dim(&self) -> usize {
        self.d_low.nrows()
    }

    pub fn hr_dim(&self) -> usize {
        self.d_high.nrows()
    }

    /// Fails with [`crate::Error::Invariant`] listing every violation.
    pub fn check(&self) -> crate::Result<()> {
        let v = validate_dictionary(self);
        if v.is_empty() {
            Ok(())
        } else {
            let list: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            Err(crate::Error::Invariant(list.join("; ")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: &'static str,
    pub column: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.column {
            Some(j) => write!(f, "{} (column {j}): {}", self.invariant, self.detail),
            None => write!(f, "{}: {}", self.invariant, self.detail),
        }
    }
}

/// Empty iff the dictionary satisfies all of its invariants.
pub fn validate_dictionary(dict: &CoupledDictionary) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |invariant, column, detail: String| out.push(Violation { invariant, column, detail });
    let (ml, n) = dict.d_low.shape();
    let (mh, nh) = dict.d_high.shape();
    if n != nh {
        push("shape", None, format!("d_low has {n} columns, d_high has {nh}"));
    }
    if n <= ml {
        push("overcomplete", None, format!("atom count {n} must exceed m_l = {ml}"));
    }
    if dict.lr_patch_size * dict.lr_patch_size != ml {
        push("lr_patch_size", None, format!("{}² != m_l = {ml}", dict.lr_patch_size));
    }
    if dict.hr_patch_size * dict.hr_patch_size != mh {
        push("hr_patch_size", None, format!("{}² != m_h = {mh}", dict.hr_patch_size));
    }
    if dict.hr_patch_size != dict.scale * dict.lr_patch_size {
        push(
            "scale",
            None,
            format!(
                "hr_patch_size {} != scale {} x lr_patch_size {}",
                dict.hr_patch_size, dict.scale, dict.lr_patch_size
            ),
        );
    }
    if n == nh {
        for j in 0..n {
            let lo = dict.d_low.column(j);
            let hi = dict.d_high.column(j);
            if lo.iter().chain(hi.iter()).any(|v| !v.is_finite()) {
                push("finite", Some(j), "non-finite entry".into());
                continue;
            }
            if lo.iter().chain(hi.iter()).all(|&v| v == 0.0) {
                push("nonzero_column", Some(j), "column is entirely zero".into());
                continue;
            }
            let norm = (lo.norm_squared() + hi.norm_squared()).sqrt();
            if (norm - 1.0).abs() > NORM_TOL {
                push("unit_norm", Some(j), format!("concatenated norm {norm}"));
            }
        }
    }
    out
}
