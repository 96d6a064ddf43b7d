//! Smooth loss families and the quadratic regularizer.
//!
//! Both losses are convex with (1/gamma)-Lipschitz derivative. Conjugates
//! return `f64::INFINITY` outside their effective domain instead of erroring,
//! so dual feasibility can be reported cleanly by callers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("smoothness parameter gamma must be positive and finite, got {0}")]
    BadGamma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    SmoothedHinge,
    SquaredHinge,
}

/// A scalar loss `phi(a)` with smoothness parameter `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub kind: LossKind,
    pub gamma: f64,
}

impl LossModel {
    pub fn new(kind: LossKind, gamma: f64) -> Result<Self, LossError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(LossError::BadGamma(gamma));
        }
        Ok(LossModel { kind, gamma })
    }

    pub fn smoothed_hinge(gamma: f64) -> Result<Self, LossError> {
        Self::new(LossKind::SmoothedHinge, gamma)
    }

    pub fn squared_hinge(gamma: f64) -> Result<Self, LossError> {
        Self::new(LossKind::SquaredHinge, gamma)
    }

    /// Loss value `phi(a)`.
    pub fn value(&self, a: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            LossKind::SmoothedHinge => {
                if a >= 1.0 {
                    0.0
                } else if a <= 1.0 - g {
                    1.0 - a - g / 2.0
                } else {
                    (1.0 - a) * (1.0 - a) / (2.0 * g)
                }
            }
            LossKind::SquaredHinge => {
                let t = (1.0 - a).max(0.0);
                t * t / (2.0 * g)
            }
        }
    }

    /// Derivative `phi'(a)`; lies in `[-1, 0]` for the smoothed hinge and in
    /// `(-inf, 0]` for the squared hinge.
    pub fn derivative(&self, a: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            LossKind::SmoothedHinge => {
                if a >= 1.0 {
                    0.0
                } else if a <= 1.0 - g {
                    -1.0
                } else {
                    (a - 1.0) / g
                }
            }
            LossKind::SquaredHinge => {
                if a >= 1.0 {
                    0.0
                } else {
                    (a - 1.0) / g
                }
            }
        }
    }

    /// Fenchel conjugate `phi*(b) = sup_a { a b - phi(a) }`.
    ///
    /// Finite exactly on `[-1, 0]` (smoothed hinge) or `(-inf, 0]` (squared
    /// hinge), where it equals `b + gamma b^2 / 2`; `+inf` elsewhere.
    pub fn conjugate(&self, b: f64) -> f64 {
        let g = self.gamma;
        match self.kind {
            LossKind::SmoothedHinge => {
                if (-1.0..=0.0).contains(&b) {
                    b + g * b * b / 2.0
                } else {
                    f64::INFINITY
                }
            }
            LossKind::SquaredHinge => {
                if b <= 0.0 {
                    b + g * b * b / 2.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Interval of dual variables `alpha` for which `phi*(-alpha)` is finite.
    /// The upper end may be `+inf`.
    pub fn dual_box(&self) -> (f64, f64) {
        match self.kind {
            LossKind::SmoothedHinge => (0.0, 1.0),
            LossKind::SquaredHinge => (0.0, f64::INFINITY),
        }
    }

    pub fn dual_feasible(&self, alpha: f64) -> bool {
        let (lo, hi) = self.dual_box();
        alpha >= lo && alpha <= hi
    }
}

/// The regularizer `g`; only the 1-strongly-convex quadratic
/// `g(w) = ||w||^2 / 2` is supported, for which `g* = g` and the conjugate
/// gradient is the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    L2,
}

impl Regularizer {
    pub fn value(&self, w: &[f64]) -> f64 {
        match self {
            Regularizer::L2 => 0.5 * w.iter().map(|x| x * x).sum::<f64>(),
        }
    }

    pub fn conjugate(&self, s: &[f64]) -> f64 {
        match self {
            Regularizer::L2 => 0.5 * s.iter().map(|x| x * x).sum::<f64>(),
        }
    }

    /// Strong convexity modulus (fixed at 1).
    pub fn modulus(&self) -> f64 {
        1.0
    }
}
