//! Problem instance and primal/dual objective evaluation.

use crate::loss::{LossModel, Regularizer};
use crate::matrix::DataMatrix;
use thiserror::Error;

/// Absolute slack allowed on gap nonnegativity checks, sized for
/// double-precision accumulation over up to ~1e6 terms.
pub const TOL_NUM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("regularization weight lambda must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("dual variable {index} = {value} is outside the feasible box")]
    InfeasibleDual { index: usize, value: f64 },
}

/// A regularized empirical risk minimization instance
/// `min_w (1/n) sum_i phi(A_i' w) + lambda g(w)`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub matrix: DataMatrix,
    pub loss: LossModel,
    pub reg: Regularizer,
    pub lambda: f64,
}

/// Fenchel-gap decomposition of the duality gap: the total gap equals
/// `lambda * gap_g + mean(gap_phi)`, with every component nonnegative.
#[derive(Debug, Clone)]
pub struct GapDecomposition {
    pub gap_g: f64,
    pub gap_phi: Vec<f64>,
    pub lambda: f64,
}

impl GapDecomposition {
    pub fn total(&self) -> f64 {
        let mean = self.gap_phi.iter().sum::<f64>() / self.gap_phi.len() as f64;
        self.lambda * self.gap_g + mean
    }
}

impl ProblemInstance {
    pub fn new(
        matrix: DataMatrix,
        loss: LossModel,
        reg: Regularizer,
        lambda: f64,
    ) -> Result<Self, ProblemError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ProblemError::BadLambda(lambda));
        }
        Ok(ProblemInstance {
            matrix,
            loss,
            reg,
            lambda,
        })
    }

    pub fn n(&self) -> usize {
        self.matrix.n()
    }

    pub fn d(&self) -> usize {
        self.matrix.d()
    }

    /// Primal objective `P(w) = (1/n) sum_i phi(A_i' w) + lambda g(w)`.
    ///
    /// Sums accumulate left to right so repeated evaluations are bitwise
    /// reproducible.
    pub fn primal_value(&self, w: &[f64]) -> f64 {
        assert_eq!(w.len(), self.d(), "primal point has wrong dimension");
        let n = self.n();
        let mut loss_sum = 0.0;
        for i in 0..n {
            loss_sum += self.loss.value(self.matrix.column_dot(i, w));
        }
        loss_sum / n as f64 + self.lambda * self.reg.value(w)
    }

    /// The aggregate `(1/(lambda n)) sum_i alpha_i A_i` maintained by the solver.
    pub fn alpha_bar(&self, alpha: &[f64]) -> Vec<f64> {
        assert_eq!(alpha.len(), self.n(), "dual point has wrong dimension");
        let mut bar = vec![0.0; self.d()];
        let scale = 1.0 / (self.lambda * self.n() as f64);
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                self.matrix.add_scaled_column(i, a * scale, &mut bar);
            }
        }
        bar
    }

    fn check_dual_feasible(&self, alpha: &[f64]) -> Result<(), ProblemError> {
        assert_eq!(alpha.len(), self.n(), "dual point has wrong dimension");
        for (i, &a) in alpha.iter().enumerate() {
            if !self.loss.dual_feasible(a) {
                return Err(ProblemError::InfeasibleDual { index: i, value: a });
            }
        }
        Ok(())
    }

    /// Dual objective `D(alpha) = -lambda g*(alpha_bar) - (1/n) sum_i phi*(-alpha_i)`.
    pub fn dual_value(&self, alpha: &[f64]) -> Result<f64, ProblemError> {
        let bar = self.alpha_bar(alpha);
        self.dual_value_given_bar(alpha, &bar)
    }

    /// Dual objective with a precomputed aggregate, for callers that already
    /// maintain `alpha_bar` incrementally.
    pub fn dual_value_given_bar(
        &self,
        alpha: &[f64],
        alpha_bar: &[f64],
    ) -> Result<f64, ProblemError> {
        self.check_dual_feasible(alpha)?;
        let n = self.n() as f64;
        let mut conj_sum = 0.0;
        for &a in alpha {
            conj_sum += self.loss.conjugate(-a);
        }
        Ok(-self.lambda * self.reg.conjugate(alpha_bar) - conj_sum / n)
    }

    /// Duality gap `P(w) - D(alpha)`; nonnegative up to [`TOL_NUM`].
    pub fn duality_gap(&self, w: &[f64], alpha: &[f64]) -> Result<f64, ProblemError> {
        Ok(self.primal_value(w) - self.dual_value(alpha)?)
    }

    /// Per-term Fenchel gaps: `gap_g = g(w) + g*(abar) - <w, abar>` and
    /// `gap_phi[i] = phi(A_i'w) + phi*(-alpha_i) + <A_i'w, alpha_i>`.
    pub fn gap_decomposition(
        &self,
        w: &[f64],
        alpha: &[f64],
    ) -> Result<GapDecomposition, ProblemError> {
        assert_eq!(w.len(), self.d(), "primal point has wrong dimension");
        self.check_dual_feasible(alpha)?;
        let bar = self.alpha_bar(alpha);
        let dot: f64 = w.iter().zip(&bar).map(|(a, b)| a * b).sum();
        let gap_g = self.reg.value(w) + self.reg.conjugate(&bar) - dot;
        let gap_phi = alpha
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let margin = self.matrix.column_dot(i, w);
                self.loss.value(margin) + self.loss.conjugate(-a) + margin * a
            })
            .collect();
        Ok(GapDecomposition {
            gap_g,
            gap_phi,
            lambda: self.lambda,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_instance(loss: LossModel, lambda: f64) -> ProblemInstance {
        // single example A_1 = e_1 in two dimensions
        let m = DataMatrix::from_columns(2, vec![vec![(0, 1.0)]]).unwrap();
        ProblemInstance::new(m, loss, Regularizer::L2, lambda).unwrap()
    }

    fn random_instance(
        rng: &mut ChaCha8Rng,
        kind: LossKind,
        d: usize,
        n: usize,
    ) -> ProblemInstance {
        let mut cols: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        for _ in 0..n {
            let mut col = Vec::new();
            for j in 0..d {
                if rng.random_bool(0.6) {
                    col.push((j, rng.random_range(-2.0..2.0)));
                }
            }
            cols.push(col);
        }
        let m = DataMatrix::from_columns(d, cols).unwrap();
        let loss = LossModel::new(kind, rng.random_range(0.3..3.0)).unwrap();
        ProblemInstance::new(m, loss, Regularizer::L2, rng.random_range(0.01..2.0)).unwrap()
    }

    fn random_feasible_alpha(rng: &mut ChaCha8Rng, loss: &LossModel, n: usize) -> Vec<f64> {
        let (lo, hi) = loss.dual_box();
        let hi = hi.min(3.0);
        (0..n).map(|_| rng.random_range(lo..hi)).collect()
    }

    #[test]
    fn primal_examples() {
        let sh = LossModel::smoothed_hinge(1.0).unwrap();
        let p = unit_instance(sh, 0.7);
        assert_eq!(p.primal_value(&[0.0, 0.0]), 0.5);

        let qh = LossModel::squared_hinge(1.0).unwrap();
        let p = unit_instance(qh, 1.0);
        assert_eq!(p.primal_value(&[0.0, 0.0]), 0.5);

        let p = unit_instance(sh, 1.0);
        assert_eq!(p.primal_value(&[2.0, 0.0]), 2.0);
    }

    #[test]
    fn dual_examples() {
        let sh = LossModel::smoothed_hinge(1.0).unwrap();
        let p = unit_instance(sh, 1.0);
        assert_eq!(p.dual_value(&[0.0]).unwrap(), 0.0);
        assert!((p.dual_value(&[1.0]).unwrap() - 0.0).abs() < 1e-15);
        assert!(matches!(
            p.dual_value(&[2.0]),
            Err(ProblemError::InfeasibleDual { index: 0, .. })
        ));
    }

    #[test]
    fn gap_example_at_zero() {
        let sh = LossModel::smoothed_hinge(1.0).unwrap();
        let p = unit_instance(sh, 1.0);
        assert_eq!(p.duality_gap(&[0.0, 0.0], &[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn weak_duality_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for kind in [LossKind::SmoothedHinge, LossKind::SquaredHinge] {
            for _ in 0..500 {
                let p = random_instance(&mut rng, kind, 4, 6);
                let w: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let alpha = random_feasible_alpha(&mut rng, &p.loss, 6);
                let gap = p.duality_gap(&w, &alpha).unwrap();
                assert!(gap >= -TOL_NUM, "weak duality violated: {gap}");
            }
        }
    }

    #[test]
    fn gap_decomposition_matches_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for kind in [LossKind::SmoothedHinge, LossKind::SquaredHinge] {
            for _ in 0..200 {
                let p = random_instance(&mut rng, kind, 5, 7);
                let w: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
                let alpha = random_feasible_alpha(&mut rng, &p.loss, 7);
                let gap = p.duality_gap(&w, &alpha).unwrap();
                let dec = p.gap_decomposition(&w, &alpha).unwrap();
                assert!((dec.total() - gap).abs() <= TOL_NUM);
                assert!(dec.gap_g >= -TOL_NUM);
                for &g in &dec.gap_phi {
                    assert!(g >= -TOL_NUM);
                }
            }
        }
    }

    #[test]
    fn reg_gap_vanishes_when_w_equals_alpha_bar() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let p = random_instance(&mut rng, LossKind::SmoothedHinge, 5, 7);
        let alpha = random_feasible_alpha(&mut rng, &p.loss, 7);
        let w = p.alpha_bar(&alpha);
        let dec = p.gap_decomposition(&w, &alpha).unwrap();
        assert!(dec.gap_g.abs() < 1e-14);
    }

    #[test]
    fn optimality_conditions_give_zero_gap() {
        // With alpha_i = -phi'(A_i'w) and w = alpha_bar, both gap parts vanish.
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        for kind in [LossKind::SmoothedHinge, LossKind::SquaredHinge] {
            let p = random_instance(&mut rng, kind, 4, 6);
            // fixed-point iteration on the optimality conditions
            let mut w = vec![0.0; 4];
            for _ in 0..20_000 {
                let alpha: Vec<f64> = (0..6)
                    .map(|i| -p.loss.derivative(p.matrix.column_dot(i, &w)))
                    .collect();
                let bar = p.alpha_bar(&alpha);
                for (wj, bj) in w.iter_mut().zip(&bar) {
                    *wj += 0.5 * (bj - *wj);
                }
            }
            let alpha: Vec<f64> = (0..6)
                .map(|i| -p.loss.derivative(p.matrix.column_dot(i, &w)))
                .collect();
            let w_fp = p.alpha_bar(&alpha);
            let gap = p.duality_gap(&w_fp, &alpha).unwrap();
            assert!(gap.abs() < 1e-7, "gap at fixed point: {gap}");
        }
    }

    #[test]
    fn rejects_bad_lambda() {
        let m = DataMatrix::from_columns(1, vec![vec![(0, 1.0)]]).unwrap();
        let sh = LossModel::smoothed_hinge(1.0).unwrap();
        assert!(ProblemInstance::new(m, sh, Regularizer::L2, 0.0).is_err());
    }
}
