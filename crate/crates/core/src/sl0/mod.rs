//! Sparse representation by smoothed-ℓ0 annealing.
//!
//! The ℓ0 "norm" of a vector is replaced by the smooth surrogate
//! `n − Σ exp(−vᵢ²/σ²)`. Starting from the minimum-ℓ2 feasible point, the
//! solver maximises `F_σ(α) = Σ exp(−αᵢ²/σ²)` over the affine set
//! `{α : Dα = x}` for a geometrically decreasing sequence of σ, each level
//! seeded with the previous level's result. Every ascent step is followed by
//! an exact projection back onto the constraint set, so returned solutions are
//! feasible to machine precision.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

mod ista;

pub use ista::{ista_l1_solve, ista_l1_solve_traced, ista_objective, soft_threshold, IstaSolver};

/// Entries with `|αᵢ| ≤ SUPPORT_THRESHOLD · max|α|` count as zero when
/// reporting supports and ℓ0 counts.
pub const SUPPORT_THRESHOLD: f64 = 1e-3;

/// Annealing parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sl0Config {
    /// Ratio between consecutive σ levels, in (0, 1).
    pub sigma_decrease_factor: f64,
    /// Annealing stops once σ drops below this value.
    pub sigma_min: f64,
    /// Steepest-ascent iterations per σ level (L).
    pub inner_iterations: usize,
    /// The ascent step is `step_scale · σ² · ∇F_σ / 2`.
    pub step_scale: f64,
    /// σ₁ = `sigma_initial_scale · max|α₀ᵢ|`.
    pub sigma_initial_scale: f64,
}

impl Default for Sl0Config {
    fn default() -> Self {
        Self {
            sigma_decrease_factor: 0.5,
            sigma_min: 1e-4,
            inner_iterations: 3,
            step_scale: 2.0,
            sigma_initial_scale: 2.0,
        }
    }
}

impl Sl0Config {
    pub fn validate(&self) -> Result<()> {
        let c = self.sigma_decrease_factor;
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::invalid(format!(
                "sigma_decrease_factor must lie in (0, 1), got {c}"
            )));
        }
        for (name, v) in [
            ("sigma_min", self.sigma_min),
            ("step_scale", self.step_scale),
            ("sigma_initial_scale", self.sigma_initial_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.inner_iterations == 0 {
            return Err(Error::invalid("inner_iterations must be at least 1"));
        }
        Ok(())
    }

    /// The σ levels visited for an initial solution with `max|α₀ᵢ| = max_abs`.
    pub fn sigma_schedule(&self, max_abs: f64) -> Vec<f64> {
        let mut sigmas = Vec::new();
        let mut sigma = self.sigma_initial_scale * max_abs;
        while sigma >= self.sigma_min && sigma > 0.0 {
            sigmas.push(sigma);
            sigma *= self.sigma_decrease_factor;
        }
        sigmas
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma must be positive, got {sigma}")))
    }
}

/// `n − Σ exp(−vᵢ²/σ²)`, the smoothed ℓ0 count of `v`.
pub fn smoothed_l0_norm(v: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    let s2 = sigma * sigma;
    let mass: f64 = v.iter().map(|x| (-x * x / s2).exp()).sum();
    Ok(v.len() as f64 - mass)
}

/// Gradient of `F_σ(v) = Σ exp(−vᵢ²/σ²)`: component i is `−(2vᵢ/σ²)·exp(−vᵢ²/σ²)`.
pub fn smoothed_l0_gradient(v: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let s2 = sigma * sigma;
    Ok(v.iter()
        .map(|x| -(2.0 * x / s2) * (-x * x / s2).exp())
        .collect())
}

/// A full-row-rank, overcomplete dictionary together with its pseudo-inverse
/// `Dᵀ(DDᵀ)⁻¹`. Built once per dictionary and shared by every problem posed
/// against it.
#[derive(Clone, Debug)]
pub struct FeasibleSet {
    dictionary: DMatrix<f64>,
    pinv: DMatrix<f64>,
}

impl FeasibleSet {
    pub fn new(dictionary: DMatrix<f64>) -> Result<Self> {
        let (m, n) = dictionary.shape();
        if m == 0 || n <= m {
            return Err(Error::invalid(format!(
                "dictionary must be overcomplete (n > m), got {m} x {n}"
            )));
        }
        if dictionary.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dictionary has non-finite entries"));
        }
        let gram = &dictionary * dictionary.transpose();
        let chol = gram
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Singular("D·Dᵀ is not positive definite".into()))?;
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if !(lo > 0.0) || (lo / hi).powi(2) < 1e-13 {
            return Err(Error::Singular(format!(
                "dictionary is rank deficient (pivot ratio {:.3e})",
                lo / hi
            )));
        }
        let pinv = chol.solve(&dictionary).transpose();
        Ok(Self { dictionary, pinv })
    }

    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.dictionary
    }

    /// Signal dimension m.
    pub fn rows(&self) -> usize {
        self.dictionary.nrows()
    }

    /// Number of atoms n.
    pub fn atoms(&self) -> usize {
        self.dictionary.ncols()
    }

    pub fn min_l2(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.pinv * x
    }

    pub fn project(&self, alpha: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let residual = &self.dictionary * alpha - x;
        alpha - &self.pinv * residual
    }

    pub fn residual_norm(&self, alpha: &DVector<f64>, x: &DVector<f64>) -> f64 {
        (&self.dictionary * alpha - x).norm()
    }

    /// `A ← A − P(DA − X)` for a block of columns.
    fn project_columns(&self, a: &mut DMatrix<f64>, x: &DMatrix<f64>, scratch: &mut DMatrix<f64>) {
        scratch.copy_from(x);
        scratch.gemm(1.0, &self.dictionary, a, -1.0);
        a.gemm(-1.0, &self.pinv, scratch, 1.0);
    }
}

/// `min ‖α‖₀ s.t. Dα = x` for one target.
#[derive(Clone, Debug)]
pub struct SparseProblem {
    set: Arc<FeasibleSet>,
    target: DVector<f64>,
}

impl SparseProblem {
    pub fn new(dictionary: DMatrix<f64>, target: DVector<f64>) -> Result<Self> {
        Self::with_set(Arc::new(FeasibleSet::new(dictionary)?), target)
    }

    /// Reuses an existing factorisation.
    pub fn with_set(set: Arc<FeasibleSet>, target: DVector<f64>) -> Result<Self> {
        if target.len() != set.rows() {
            return Err(Error::invalid(format!(
                "target has length {}, dictionary has {} rows",
                target.len(),
                set.rows()
            )));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("target has non-finite entries"));
        }
        Ok(Self { set, target })
    }

    pub fn set(&self) -> &Arc<FeasibleSet> {
        &self.set
    }

    pub fn dictionary(&self) -> &DMatrix<f64> {
        self.set.dictionary()
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    /// `‖Dα − x‖₂`.
    pub fn residual_norm(&self, alpha: &DVector<f64>) -> f64 {
        self.set.residual_norm(alpha, &self.target)
    }
}

/// `α = Dᵀ(DDᵀ)⁻¹x`, the feasible point of least ℓ2 norm.
pub fn min_l2_solution(problem: &SparseProblem) -> DVector<f64> {
    problem.set.min_l2(&problem.target)
}

/// Orthogonal projection of `alpha` onto `{α : Dα = x}`.
pub fn project_feasible(problem: &SparseProblem, alpha: &DVector<f64>) -> Result<DVector<f64>> {
    if alpha.len() != problem.set.atoms() {
        return Err(Error::invalid(format!(
            "alpha has length {}, dictionary has {} atoms",
            alpha.len(),
            problem.set.atoms()
        )));
    }
    Ok(problem.set.project(alpha, &problem.target))
}

/// Per-run diagnostics of a single solve.
#[derive(Clone, Debug, Default)]
pub struct Sl0Trace {
    /// σ of every annealing level, in visiting order.
    pub sigmas: Vec<f64>,
    /// `‖Dα − x‖ / (1 + ‖x‖)` after every projection.
    pub residuals: Vec<f64>,
}

pub fn sl0_solve(problem: &SparseProblem, config: &Sl0Config) -> Result<DVector<f64>> {
    let x = DMatrix::from_column_slice(problem.target.len(), 1, problem.target.as_slice());
    let a = sl0_solve_batch(&problem.set, &x, config)?;
    Ok(a.column(0).into_owned())
}

/// Same iteration as [`sl0_solve`], recording σ levels and the residual after
/// every projection.
pub fn sl0_solve_traced(
    problem: &SparseProblem,
    config: &Sl0Config,
) -> Result<(DVector<f64>, Sl0Trace)> {
    config.validate()?;
    let set = &problem.set;
    let x = &problem.target;
    let mut trace = Sl0Trace::default();
    if x.iter().all(|&v| v == 0.0) {
        return Ok((DVector::zeros(set.atoms()), trace));
    }
    let scale = 1.0 + x.norm();
    let mut alpha = set.min_l2(x);
    let max_abs = alpha.amax();
    for sigma in config.sigma_schedule(max_abs) {
        trace.sigmas.push(sigma);
        let s2 = sigma * sigma;
        for _ in 0..config.inner_iterations {
            alpha.apply(|v| *v -= config.step_scale * *v * (-*v * *v / s2).exp());
            alpha = set.project(&alpha, x);
            trace.residuals.push(set.residual_norm(&alpha, x) / scale);
        }
    }
    Ok((alpha, trace))
}

/// Solves one problem per column of `targets` (m × k) against a shared
/// dictionary; returns the n × k coefficient matrix.
///
/// Columns are independent: each follows its own σ schedule and is retired as
/// soon as its schedule ends.
pub fn sl0_solve_batch(
    set: &FeasibleSet,
    targets: &DMatrix<f64>,
    config: &Sl0Config,
) -> Result<DMatrix<f64>> {
    config.validate()?;
    if targets.nrows() != set.rows() {
        return Err(Error::invalid(format!(
            "targets have {} rows, dictionary has {}",
            targets.nrows(),
            set.rows()
        )));
    }
    let n = set.atoms();
    let k = targets.ncols();
    let mut out = set.min_l2_batch(targets);

    // (column, current sigma); zero targets stay at α = 0.
    let mut live: Vec<(usize, f64)> = Vec::with_capacity(k);
    for j in 0..k {
        if targets.column(j).iter().all(|&v| v == 0.0) {
            out.column_mut(j).fill(0.0);
            continue;
        }
        let sigma = config.sigma_initial_scale * out.column(j).amax();
        if sigma >= config.sigma_min {
            live.push((j, sigma));
        }
    }
    if live.is_empty() {
        return Ok(out);
    }

    let mut a = gather(&out, &live);
    let mut x = gather(targets, &live);
    let mut scratch = DMatrix::zeros(set.rows(), live.len());
    let step = config.step_scale;
    loop {
        for _ in 0..config.inner_iterations {
            for (c, &(_, sigma)) in live.iter().enumerate() {
                let s2 = sigma * sigma;
                for v in a.column_mut(c).iter_mut() {
                    *v -= step * *v * (-*v * *v / s2).exp();
                }
            }
            set.project_columns(&mut a, &x, &mut scratch);
        }
        for entry in live.iter_mut() {
            entry.1 *= config.sigma_decrease_factor;
        }
        if live.iter().any(|&(_, s)| s < config.sigma_min) {
            let keep: Vec<usize> = (0..live.len())
                .filter(|&c| live[c].1 >= config.sigma_min)
                .collect();
            for (c, &(j, sigma)) in live.iter().enumerate() {
                if sigma < config.sigma_min {
                    out.column_mut(j).copy_from(&a.column(c));
                }
            }
            if keep.is_empty() {
                break;
            }
            a = a.select_columns(&keep);
            x = x.select_columns(&keep);
            live = keep.iter().map(|&c| live[c]).collect();
            scratch = DMatrix::zeros(set.rows(), live.len());
        }
    }
    debug_assert_eq!(out.shape(), (n, k));
    Ok(out)
}

impl FeasibleSet {
    pub fn min_l2_batch(&self, targets: &DMatrix<f64>) -> DMatrix<f64> {
        &self.pinv * targets
    }
}

fn gather(m: &DMatrix<f64>, live: &[(usize, f64)]) -> DMatrix<f64> {
    let idx: Vec<usize> = live.iter().map(|&(j, _)| j).collect();
    m.select_columns(&idx)
}

/// Indices of entries above the relative hard threshold.
pub fn support(alpha: &[f64]) -> Vec<usize> {
    let max = alpha.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Vec::new();
    }
    alpha
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > SUPPORT_THRESHOLD * max)
        .map(|(i, _)| i)
        .collect()
}

/// ℓ0 count under the relative hard threshold.
pub fn l0_count(alpha: &[f64]) -> usize {
    support(alpha).len()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_f(v: &[f64], sigma: f64) -> f64 {
        v.iter().map(|x| (-x * x / (sigma * sigma)).exp()).sum()
    }

    #[test]
    fn smoothed_norm_examples() {
        assert_eq!(smoothed_l0_norm(&[0.0, 0.0, 0.0], 1.0).unwrap(), 0.0);
        let near = smoothed_l0_norm(&[1.0, 0.0, 0.0, 0.0], 0.01).unwrap();
        assert!((near - 1.0).abs() < 1e-6);
        let v = smoothed_l0_norm(&[1.0, 1.0], 1.0).unwrap();
        assert!((v - (2.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-15);
        assert!((v - 1.26424).abs() < 1e-5);
        assert!(smoothed_l0_norm(&[1.0], 0.0).is_err());
        assert!(smoothed_l0_norm(&[1.0], -1.0).is_err());
    }

    #[test]
    fn gradient_closed_forms() {
        assert!(smoothed_l0_gradient(&[0.0; 4], 0.3)
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
        let sigma = 0.7;
        let v = vec![sigma / 2f64.sqrt(); 3];
        let expected = -(2f64.sqrt() / sigma) * (-0.5f64).exp();
        for g in smoothed_l0_gradient(&v, sigma).unwrap() {
            assert!((g - expected).abs() < 1e-14);
        }
        assert!(smoothed_l0_gradient(&v, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            v in prop::collection::vec(-3.0f64..3.0, 1..8),
            sigma in 0.2f64..3.0,
        ) {
            let g = smoothed_l0_gradient(&v, sigma).unwrap();
            for i in 0..v.len() {
                let h = 1e-6 * v[i].abs().max(1.0);
                // F is separable, so only the i-th term changes.
                let fd = (smooth_f(&[v[i] + h], sigma) - smooth_f(&[v[i] - h], sigma)) / (2.0 * h);
                let denom = g[i].abs().max(1e-6);
                prop_assert!((fd - g[i]).abs() / denom < 1e-5, "i={} fd={} g={}", i, fd, g[i]);
            }
        }

        #[test]
        fn smoothed_norm_is_bounded(v in prop::collection::vec(-5.0f64..5.0, 0..10), sigma in 0.01f64..10.0) {
            let s = smoothed_l0_norm(&v, sigma).unwrap();
            prop_assert!(s >= 0.0 && s <= v.len() as f64);
        }
    }

    #[test]
    fn config_validation() {
        assert!(Sl0Config::default().validate().is_ok());
        let bad = Sl0Config {
            sigma_decrease_factor: 1.0,
            ..Sl0Config::default()
        };
        assert!(bad.validate().is_err());
        let bad = Sl0Config {
            inner_iterations: 0,
            ..Sl0Config::default()
        };
        assert!(bad.validate().is_err());
        let sched = Sl0Config::default().sigma_schedule(1.0);
        assert!(sched.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(sched[0], 2.0);
        assert!(*sched.last().unwrap() >= 1e-4);
    }

    #[test]
    fn min_l2_hand_example() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let p = SparseProblem::new(d, DVector::from_vec(vec![2.0, 0.0])).unwrap();
        let a = min_l2_solution(&p);
        assert!((a - DVector::from_vec(vec![1.0, 0.0, 1.0])).amax() < 1e-14);
    }

    #[test]
    fn min_l2_orthonormal_rows_is_transpose() {
        let s = 1.0 / 2f64.sqrt();
        let d = DMatrix::from_row_slice(2, 4, &[s, s, 0.0, 0.0, 0.0, 0.0, s, -s]);
        let x = DVector::from_vec(vec![0.3, -1.2]);
        let p = SparseProblem::new(d.clone(), x.clone()).unwrap();
        assert!((min_l2_solution(&p) - d.transpose() * x).amax() < 1e-14);
        let z = SparseProblem::new(d, DVector::zeros(2)).unwrap();
        assert_eq!(min_l2_solution(&z).amax(), 0.0);
    }

    #[test]
    fn rank_deficient_dictionary_is_rejected() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 2.0, 0.0, 2.0]);
        assert!(matches!(FeasibleSet::new(d), Err(Error::Singular(_))));
        let square = DMatrix::identity(3, 3);
        assert!(matches!(FeasibleSet::new(square), Err(Error::InvalidArgument(_))));
    }

    fn random_problem(rng: &mut ChaCha8Rng, m: usize, n: usize) -> SparseProblem {
        let d = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
        let x = DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
        SparseProblem::new(d, x).unwrap()
    }

    #[test]
    fn projection_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = random_problem(&mut rng, 6, 15);
            let tol = 1e-8 * (1.0 + p.target().norm());
            let alpha = DVector::from_fn(15, |_, _| rng.gen_range(-2.0..2.0));
            let once = project_feasible(&p, &alpha).unwrap();
            assert!(p.residual_norm(&once) <= tol);
            let twice = project_feasible(&p, &once).unwrap();
            assert!((&twice - &once).amax() < 1e-10);
            let from_origin = project_feasible(&p, &DVector::zeros(15)).unwrap();
            assert!((from_origin - min_l2_solution(&p)).amax() < 1e-12);
        }
        let p = random_problem(&mut rng, 4, 9);
        assert!(project_feasible(&p, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn zero_target_short_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_problem(&mut rng, 5, 10);
        let zero = SparseProblem::with_set(p.set().clone(), DVector::zeros(5)).unwrap();
        let a = sl0_solve(&zero, &Sl0Config::default()).unwrap();
        assert_eq!(a.amax(), 0.0);
    }

    #[test]
    fn duplicated_identity_is_a_symmetric_tie() {
        // Supports {0} and {3} are both minimal; the minimum-ℓ2 start splits
        // the mass evenly and the iteration preserves that symmetry exactly.
        let mut d = DMatrix::zeros(3, 6);
        for i in 0..3 {
            d[(i, i)] = 1.0;
            d[(i, i + 3)] = 1.0;
        }
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let p = SparseProblem::new(d, x).unwrap();
        let (a, trace) = sl0_solve_traced(&p, &Sl0Config::default()).unwrap();
        assert_eq!(support(a.as_slice()), vec![0, 3]);
        assert_eq!(a[0], a[3]);
        assert!(trace.residuals.iter().all(|&r| r <= 1e-8));
    }

    #[test]
    fn duplicated_identity_with_unequal_copies_finds_single_atom() {
        let mut d = DMatrix::zeros(3, 6);
        for i in 0..3 {
            d[(i, i)] = 1.0;
            d[(i, i + 3)] = 0.9;
        }
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let p = SparseProblem::new(d, x).unwrap();
        let (a, trace) = sl0_solve_traced(&p, &Sl0Config::default()).unwrap();
        let supp = support(a.as_slice());
        assert_eq!(supp.len(), 1, "alpha = {a}");
        assert!(supp == vec![0] || supp == vec![3]);
        assert!((d_times(&p, &a) - 1.0).abs() < 1e-8);
        assert!(trace.residuals.iter().all(|&r| r <= 1e-8));
    }

    fn d_times(p: &SparseProblem, a: &DVector<f64>) -> f64 {
        (p.dictionary() * a)[0]
    }

    #[test]
    fn batch_matches_single_column_solves() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_problem(&mut rng, 8, 20);
        let targets = DMatrix::from_fn(8, 9, |_, j| if j == 4 { 0.0 } else { rng.gen_range(-1.0..1.0) });
        let batch = sl0_solve_batch(p.set(), &targets, &Sl0Config::default()).unwrap();
        for j in 0..9 {
            let single = SparseProblem::with_set(p.set().clone(), targets.column(j).into_owned()).unwrap();
            let (a, _) = sl0_solve_traced(&single, &Sl0Config::default()).unwrap();
            assert!((batch.column(j) - a).amax() < 1e-9);
        }
        assert_eq!(batch.column(4).amax(), 0.0);
    }
}
