//! Importance-weighted, ridge-regularized empirical risk minimization:
//!
//! ```text
//! minimize  sum_i z_i phi(y_i h . x_i) + lambda ||h||^2
//! ```
//!
//! The squared loss has the closed form `(Sigma_z + lambda I)^-1 v_z`; every
//! loss can be handed to the damped Newton solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UpalError};
use crate::losses::{LossKind, LossSpec};
use crate::pool::{Hypothesis, LabeledPool};

/// Relative pivot tolerance for the SPD factorization.
pub const PIVOT_TOL: f64 = 1e-12;
/// Relative ridge added when a lambda = 0 system turns out singular.
pub const JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop once `||grad|| <= grad_tol * max(1, sum z)`.
    pub grad_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
        }
    }
}

/// Weighted second moments of the pool: `Sigma_z = sum z_i x_i x_i^T`,
/// `v_z = sum z_i y_i x_i`, `c = sum z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    pub sigma_z: DMatrix<f64>,
    pub v_z: DVector<f64>,
    pub c: f64,
}

impl WeightedMoments {
    pub fn zeros(d: usize) -> Self {
        Self {
            sigma_z: DMatrix::zeros(d, d),
            v_z: DVector::zeros(d),
            c: 0.0,
        }
    }

    pub fn from_weights(pool: &LabeledPool, z: &[f64]) -> Result<Self> {
        check_weights(pool, z)?;
        let mut m = Self::zeros(pool.dim());
        for (i, &w) in z.iter().enumerate() {
            if w != 0.0 {
                m.add_point(pool, i, w);
            }
        }
        Ok(m)
    }

    /// Rank-one update for one more unit of weight `w` on point `i`.
    pub fn add_point(&mut self, pool: &LabeledPool, i: usize, w: f64) {
        let x = pool.point(i);
        self.sigma_z.ger(w, &x, &x, 1.0);
        self.v_z.axpy(w * pool.label(i), &x, 1.0);
        self.c += w;
    }

    pub fn dim(&self) -> usize {
        self.v_z.len()
    }
}

/// One weighted ERM instance.
#[derive(Debug, Clone)]
pub struct ErmProblem<'a> {
    pool: &'a LabeledPool,
    z: &'a [f64],
    loss: LossSpec,
    lambda: f64,
    // rows of the pool with z_i > 0
    active_x: DMatrix<f64>,
    active_y: DVector<f64>,
    active_z: DVector<f64>,
}

impl<'a> ErmProblem<'a> {
    pub fn new(pool: &'a LabeledPool, z: &'a [f64], loss: LossSpec, lambda: f64) -> Result<Self> {
        check_weights(pool, z)?;
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(UpalError::InvalidConfig(format!(
                "ridge coefficient must be finite and >= 0, got {lambda}"
            )));
        }
        let active: Vec<usize> = (0..z.len()).filter(|&i| z[i] > 0.0).collect();
        let active_x = pool.points().select_rows(&active);
        let active_y = DVector::from_iterator(active.len(), active.iter().map(|&i| pool.label(i)));
        let active_z = DVector::from_iterator(active.len(), active.iter().map(|&i| z[i]));
        Ok(Self {
            pool,
            z,
            loss,
            lambda,
            active_x,
            active_y,
            active_z,
        })
    }

    pub fn pool(&self) -> &LabeledPool {
        self.pool
    }

    pub fn weights(&self) -> &[f64] {
        self.z
    }

    pub fn loss(&self) -> LossSpec {
        self.loss
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn weight_sum(&self) -> f64 {
        self.active_z.sum()
    }

    pub fn dim(&self) -> usize {
        self.pool.dim()
    }

    fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn moments(&self) -> WeightedMoments {
        let xz = DMatrix::from_fn(self.active_x.nrows(), self.dim(), |r, c| {
            self.active_x[(r, c)] * self.active_z[r]
        });
        WeightedMoments {
            sigma_z: xz.transpose() * &self.active_x,
            v_z: xz.transpose() * &self.active_y,
            c: self.weight_sum(),
        }
    }

    pub fn objective(&self, h: &Hypothesis) -> f64 {
        let scores = &self.active_x * h.weights();
        let data: f64 = scores
            .iter()
            .zip(self.active_y.iter().zip(self.active_z.iter()))
            .map(|(&s, (&y, &w))| w * self.loss.point_loss(s, y))
            .sum();
        data + self.lambda * h.weights().norm_squared()
    }

    pub fn gradient(&self, h: &Hypothesis) -> DVector<f64> {
        let scores = &self.active_x * h.weights();
        let coef = DVector::from_iterator(
            scores.len(),
            scores
                .iter()
                .zip(self.active_y.iter().zip(self.active_z.iter()))
                .map(|(&s, (&y, &w))| w * self.loss.point_grad(s, y)),
        );
        self.active_x.tr_mul(&coef) + h.weights() * (2.0 * self.lambda)
    }

    pub fn hessian(&self, h: &Hypothesis) -> DMatrix<f64> {
        let scores = &self.active_x * h.weights();
        let d = self.dim();
        let weighted = DMatrix::from_fn(self.active_x.nrows(), d, |r, c| {
            let curv = self.active_z[r] * self.loss.point_curvature(scores[r], self.active_y[r]);
            self.active_x[(r, c)] * curv
        });
        let mut hess = weighted.tr_mul(&self.active_x);
        for k in 0..d {
            hess[(k, k)] += 2.0 * self.lambda;
        }
        hess
    }
}

fn check_weights(pool: &LabeledPool, z: &[f64]) -> Result<()> {
    if z.len() != pool.len() {
        return Err(UpalError::DimensionMismatch {
            expected: pool.len(),
            got: z.len(),
        });
    }
    if z.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(UpalError::InvalidConfig(
            "importance weights must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// Cholesky factor of `a` when its smallest pivot clears
/// `PIVOT_TOL * trace / d`; otherwise the offending pivot and threshold.
fn checked_cholesky(a: &DMatrix<f64>) -> std::result::Result<Cholesky<f64, Dyn>, (f64, f64)> {
    let d = a.nrows();
    let threshold = PIVOT_TOL * a.trace() / d as f64;
    if !(threshold > 0.0) {
        return Err((0.0, threshold));
    }
    let chol = Cholesky::new(a.clone()).ok_or((f64::NEG_INFINITY, threshold))?;
    let pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .map(|l| l * l)
        .fold(f64::INFINITY, f64::min);
    if pivot > threshold {
        Ok(chol)
    } else {
        Err((pivot, threshold))
    }
}

fn solve_refined(a: &DMatrix<f64>, chol: &Cholesky<f64, Dyn>, b: &DVector<f64>) -> DVector<f64> {
    let mut x = chol.solve(b);
    let r = b - a * &x;
    x += chol.solve(&r);
    x
}

/// Solves `A x = b` for symmetric positive definite `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(UpalError::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let chol = checked_cholesky(a).map_err(|_| UpalError::NotPositiveDefinite)?;
    Ok(solve_refined(a, &chol, b))
}

/// `(Sigma_z + lambda I)^-1 v_z` from precomputed moments.
pub fn closed_form_from_moments(moments: &WeightedMoments, lambda: f64) -> Result<Hypothesis> {
    let d = moments.dim();
    let mut a = moments.sigma_z.clone();
    for k in 0..d {
        a[(k, k)] += lambda;
    }
    let chol = checked_cholesky(&a)
        .map_err(|(pivot, threshold)| UpalError::SingularSystem { pivot, threshold })?;
    Hypothesis::new(solve_refined(&a, &chol, &moments.v_z))
}

/// Closed-form minimizer of the weighted squared-loss objective.
pub fn closed_form_squared(problem: &ErmProblem<'_>) -> Result<Hypothesis> {
    if problem.loss.kind != LossKind::Squared {
        return Err(UpalError::InvalidConfig(
            "closed form only exists for the squared loss".into(),
        ));
    }
    closed_form_from_moments(&problem.moments(), problem.lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErmFit {
    pub hypothesis: Hypothesis,
    pub iterations: usize,
    pub grad_norm: f64,
    pub objective: f64,
    /// Ridge actually used; differs from the problem's when jitter kicked in.
    pub lambda: f64,
    pub jittered: bool,
}

/// Minimizes the weighted objective with damped Newton steps and Armijo
/// backtracking, starting from the better of `warm_start` and 0.
pub fn solve_weighted_erm(
    problem: &ErmProblem<'_>,
    warm_start: &Hypothesis,
    opts: &SolverOptions,
) -> Result<ErmFit> {
    warm_start.check_dim(problem.dim())?;
    let c = problem.weight_sum();
    if c == 0.0 && problem.lambda == 0.0 {
        return Err(UpalError::InvalidConfig(
            "ERM needs nonzero weights or a positive ridge coefficient".into(),
        ));
    }

    let mut jittered = false;
    let owned;
    let problem = if problem.lambda == 0.0 {
        let m = problem.moments();
        if checked_cholesky(&m.sigma_z).is_err() {
            let lambda = JITTER * m.sigma_z.trace() / problem.dim() as f64;
            if !(lambda > 0.0) {
                return Err(UpalError::SingularSystem {
                    pivot: 0.0,
                    threshold: 0.0,
                });
            }
            jittered = true;
            owned = problem.with_lambda(lambda);
            &owned
        } else {
            problem
        }
    } else {
        problem
    };

    let tol = opts.grad_tol * c.max(1.0);
    let zero = Hypothesis::zeros(problem.dim());
    let (mut h, mut f) = {
        let fw = problem.objective(warm_start);
        let f0 = problem.objective(&zero);
        if fw <= f0 {
            (warm_start.clone(), fw)
        } else {
            (zero, f0)
        }
    };

    let mut grad = problem.gradient(&h);
    let mut gnorm = grad.norm();
    for iter in 0..opts.max_iter {
        if gnorm <= tol {
            return Ok(ErmFit {
                hypothesis: h,
                iterations: iter,
                grad_norm: gnorm,
                objective: f,
                lambda: problem.lambda,
                jittered,
            });
        }
        let step = newton_direction(&problem.hessian(&h), &grad)?;
        let slope = grad.dot(&step);

        let mut t = 1.0;
        let mut accepted = None;
        while t >= 1e-12 {
            let cand = Hypothesis::new(h.weights() + &step * t)?;
            let fc = problem.objective(&cand);
            if fc <= f + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let (cand, fc) = match accepted {
            Some(ok) => ok,
            None => {
                // Objective differences are lost in round-off; fall back on
                // the gradient norm to decide whether the full step helps.
                let cand = Hypothesis::new(h.weights() + &step)?;
                let g = problem.gradient(&cand);
                if g.norm() < gnorm {
                    let fc = problem.objective(&cand);
                    (cand, fc)
                } else {
                    return Err(UpalError::NonConvergence {
                        iterations: iter + 1,
                        grad_norm: gnorm,
                    });
                }
            }
        };
        h = cand;
        f = fc;
        grad = problem.gradient(&h);
        gnorm = grad.norm();
    }
    if gnorm <= tol {
        return Ok(ErmFit {
            hypothesis: h,
            iterations: opts.max_iter,
            grad_norm: gnorm,
            objective: f,
            lambda: problem.lambda,
            jittered,
        });
    }
    Err(UpalError::NonConvergence {
        iterations: opts.max_iter,
        grad_norm: gnorm,
    })
}

fn newton_direction(hess: &DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let d = hess.nrows();
    let neg = -grad;
    if let Ok(chol) = checked_cholesky(hess) {
        return Ok(solve_refined(hess, &chol, &neg));
    }
    // Levenberg damping on the step system only.
    let base = (hess.trace() / d as f64).abs().max(1e-300);
    let mut mu = 1e-8 * base;
    for _ in 0..20 {
        let mut damped = hess.clone();
        for k in 0..d {
            damped[(k, k)] += mu;
        }
        if let Ok(chol) = checked_cholesky(&damped) {
            return Ok(chol.solve(&neg));
        }
        mu *= 100.0;
    }
    Ok(neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one_point() -> LabeledPool {
        LabeledPool::from_rows(&[vec![2.0]], vec![1.0]).unwrap()
    }

    #[test]
    fn closed_form_one_point() {
        let pool = one_point();
        let z = [1.0];
        let p = ErmProblem::new(&pool, &z, LossSpec::squared(), 0.0).unwrap();
        assert_relative_eq!(closed_form_squared(&p).unwrap().weights()[0], 0.5, epsilon = 1e-15);
        let p = ErmProblem::new(&pool, &z, LossSpec::squared(), 1.0).unwrap();
        assert_relative_eq!(closed_form_squared(&p).unwrap().weights()[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn closed_form_singular_without_ridge() {
        let pool = LabeledPool::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], vec![1.0, -1.0]).unwrap();
        let z = [1.0, 1.0];
        let p = ErmProblem::new(&pool, &z, LossSpec::squared(), 0.0).unwrap();
        assert!(matches!(closed_form_squared(&p), Err(UpalError::SingularSystem { .. })));
        let p = ErmProblem::new(&pool, &z, LossSpec::logistic(), 0.0).unwrap();
        assert!(closed_form_squared(&p).is_err());
    }

    #[test]
    fn jitter_rescues_rank_deficient_iterative_solve() {
        let pool = LabeledPool::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], vec![1.0, 1.0]).unwrap();
        let z = [1.0, 0.0];
        let p = ErmProblem::new(&pool, &z, LossSpec::squared(), 0.0).unwrap();
        let fit = solve_weighted_erm(&p, &Hypothesis::zeros(2), &SolverOptions::default()).unwrap();
        assert!(fit.jittered);
        assert!(fit.lambda > 0.0);
        assert_relative_eq!(fit.hypothesis.weights().sum(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_weights_with_ridge_gives_zero() {
        let pool = one_point();
        let z = [0.0];
        let p = ErmProblem::new(&pool, &z, LossSpec::logistic(), 1.0).unwrap();
        let fit = solve_weighted_erm(&p, &Hypothesis::from_slice(&[3.0]).unwrap(), &SolverOptions::default())
            .unwrap();
        assert_eq!(fit.hypothesis.weights()[0], 0.0);
        let p = ErmProblem::new(&pool, &z, LossSpec::logistic(), 0.0).unwrap();
        assert!(solve_weighted_erm(&p, &Hypothesis::zeros(1), &SolverOptions::default()).is_err());
    }

    #[test]
    fn logistic_separable_pair_is_stationary() {
        let pool = LabeledPool::from_rows(&[vec![1.0, 0.5], vec![-1.0, -0.3]], vec![1.0, -1.0]).unwrap();
        let z = [1.0, 1.0];
        let p = ErmProblem::new(&pool, &z, LossSpec::logistic(), 0.1).unwrap();
        let fit = solve_weighted_erm(&p, &Hypothesis::zeros(2), &SolverOptions::default()).unwrap();
        assert!(fit.grad_norm <= 1e-8 * 2.0);
        assert!(p.gradient(&fit.hypothesis).norm() <= 2e-8);
    }

    #[test]
    fn spd_solve_simple_systems() {
        let b = DVector::from_vec(vec![3.0, -1.0, 2.5]);
        assert_eq!(spd_solve(&DMatrix::identity(3, 3), &b).unwrap(), b);
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let x = spd_solve(&a, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![1.0, 2.0]), epsilon = 1e-15);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            spd_solve(&bad, &DVector::from_vec(vec![1.0, 1.0])),
            Err(UpalError::NotPositiveDefinite)
        ));
    }

    #[test]
    fn rejects_negative_weights_and_ridge() {
        let pool = one_point();
        assert!(ErmProblem::new(&pool, &[-1.0], LossSpec::squared(), 0.0).is_err());
        assert!(ErmProblem::new(&pool, &[1.0], LossSpec::squared(), -1.0).is_err());
        assert!(ErmProblem::new(&pool, &[1.0, 2.0], LossSpec::squared(), 0.0).is_err());
    }
}
