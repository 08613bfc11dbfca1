//! ℓ1 baseline: iterative shrinkage-thresholding for
//! `min ½‖Dα − x‖₂² + w‖α‖₁`.

use nalgebra::{DMatrix, DVector};

use super::SparseProblem;
use crate::linalg::spectral_norm_sq;
use crate::{Error, Result};

pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn ista_objective(d: &DMatrix<f64>, x: &DVector<f64>, alpha: &DVector<f64>, l1_weight: f64) -> f64 {
    0.5 * (d * alpha - x).norm_squared() + l1_weight * alpha.lp_norm(1)
}

/// Dictionary with its transpose and the step `1/L`, where `L` is the power
/// iteration estimate of `‖D‖₂²` inflated by 1% so that the step never
/// exceeds the reciprocal Lipschitz constant.
#[derive(Clone, Debug)]
pub struct IstaSolver {
    dictionary: DMatrix<f64>,
    transposed: DMatrix<f64>,
    step: f64,
}

impl IstaSolver {
    pub fn new(dictionary: DMatrix<f64>) -> Result<Self> {
        let lipschitz = 1.01 * spectral_norm_sq(&dictionary);
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::invalid("ISTA needs a non-zero finite dictionary"));
        }
        Ok(Self {
            transposed: dictionary.transpose(),
            dictionary,
            step: 1.0 / lipschitz,
        })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// One problem per column of `targets`.
    pub fn solve_batch(&self, targets: &DMatrix<f64>, l1_weight: f64, max_iters: usize) -> Result<DMatrix<f64>> {
        check_weight(l1_weight)?;
        if targets.nrows() != self.dictionary.nrows() {
            return Err(Error::invalid(format!(
                "targets have {} rows, dictionary has {}",
                targets.nrows(),
                self.dictionary.nrows()
            )));
        }
        let k = targets.ncols();
        let mut alpha = DMatrix::zeros(self.dictionary.ncols(), k);
        let mut residual = DMatrix::zeros(self.dictionary.nrows(), k);
        let threshold = l1_weight * self.step;
        for _ in 0..max_iters {
            residual.copy_from(targets);
            residual.gemm(1.0, &self.dictionary, &alpha, -1.0);
            alpha.gemm(-self.step, &self.transposed, &residual, 1.0);
            alpha.apply(|v| *v = soft_threshold(*v, threshold));
        }
        Ok(alpha)
    }

    fn solve_traced(&self, x: &DVector<f64>, l1_weight: f64, max_iters: usize) -> (DVector<f64>, Vec<f64>) {
        let mut alpha = DVector::zeros(self.dictionary.ncols());
        let threshold = l1_weight * self.step;
        let mut trace = vec![ista_objective(&self.dictionary, x, &alpha, l1_weight)];
        for _ in 0..max_iters {
            let grad = &self.transposed * (&self.dictionary * &alpha - x);
            alpha -= grad * self.step;
            alpha.apply(|v| *v = soft_threshold(*v, threshold));
            trace.push(ista_objective(&self.dictionary, x, &alpha, l1_weight));
        }
        (alpha, trace)
    }
}

fn check_weight(l1_weight: f64) -> Result<()> {
    if l1_weight > 0.0 && l1_weight.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("l1_weight must be positive, got {l1_weight}")))
    }
}

pub fn ista_l1_solve(problem: &SparseProblem, l1_weight: f64, max_iters: usize) -> Result<DVector<f64>> {
    Ok(ista_l1_solve_traced(problem, l1_weight, max_iters)?.0)
}

/// Returns the solution and the objective after every iteration (entry 0 is
/// the objective at α = 0).
pub fn ista_l1_solve_traced(
    problem: &SparseProblem,
    l1_weight: f64,
    max_iters: usize,
) -> Result<(DVector<f64>, Vec<f64>)> {
    check_weight(l1_weight)?;
    let solver = IstaSolver::new(problem.dictionary().clone())?;
    Ok(solver.solve_traced(problem.target(), l1_weight, max_iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sl0::support;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_target_gives_zero() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let p = SparseProblem::new(d, DVector::zeros(2)).unwrap();
        assert_eq!(ista_l1_solve(&p, 0.1, 50).unwrap().amax(), 0.0);
        assert!(ista_l1_solve(&p, 0.0, 50).is_err());
    }

    #[test]
    fn orthonormal_case_is_soft_thresholding() {
        // Rows of [I | 0] are orthonormal and ‖D‖₂ = 1; with step ≈ 1 the
        // fixed point on the first block is the soft-thresholded target.
        let mut d = DMatrix::zeros(3, 4);
        for i in 0..3 {
            d[(i, i)] = 1.0;
        }
        let x = DVector::from_vec(vec![0.9, -0.05, -0.4]);
        let p = SparseProblem::new(d.clone(), x.clone()).unwrap();
        let a = ista_l1_solve(&p, 0.1, 2000).unwrap();
        let expected = (d.transpose() * x).map(|v| soft_threshold(v, 0.1));
        assert!((a - expected).amax() < 1e-9);
    }

    #[test]
    fn objective_never_increases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let d = DMatrix::from_fn(8, 16, |_, _| rng.gen_range(-1.0..1.0));
            let x = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
            let p = SparseProblem::new(d, x).unwrap();
            let (_, trace) = ista_l1_solve_traced(&p, 0.05, 200).unwrap();
            assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn planted_support_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (m, n) = (8, 12);
        let mut hits = 0;
        for _ in 0..20 {
            let mut d = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
            for mut c in d.column_iter_mut() {
                let norm = c.norm();
                c /= norm;
            }
            let i = rng.gen_range(0..n);
            let j = (i + rng.gen_range(1..n)) % n;
            let mut truth = DVector::zeros(n);
            truth[i] = rng.gen_range(0.8..1.5);
            truth[j] = -rng.gen_range(0.8..1.5);
            let x = &d * &truth;
            let oracle = brute_force_support(&d, &x);
            let p = SparseProblem::new(d, x).unwrap();
            let a = ista_l1_solve(&p, 1e-3, 50_000).unwrap();
            let mut found = support(a.as_slice());
            found.retain(|&k| a[k].abs() > 0.05);
            if found == oracle {
                hits += 1;
            }
        }
        assert!(hits >= 18, "hits = {hits}");
    }

    /// Smallest support (size ≤ 2) that reproduces `x` exactly.
    fn brute_force_support(d: &DMatrix<f64>, x: &DVector<f64>) -> Vec<usize> {
        let n = d.ncols();
        for i in 0..n {
            let c = d.column(i);
            let coef = c.dot(x) / c.norm_squared();
            if (c * coef - x).norm() < 1e-9 {
                return vec![i];
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let sub = d.select_columns(&[i, j]);
                let sol = (sub.transpose() * &sub).cholesky().unwrap().solve(&(sub.transpose() * x));
                if (&sub * sol - x).norm() < 1e-9 {
                    return vec![i, j];
                }
            }
        }
        Vec::new()
    }
}
