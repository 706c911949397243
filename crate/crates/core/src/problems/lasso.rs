//! Sparse regression `min λ·‖x‖₁ + (ρ/2)‖Ax − y‖²`, with the exact 1-norm
//! or its Huber smoothing.
//!
//! Coordinates: `x` (domain, `n`), `r = Ax − y` (image, `m`); the data `y`
//! enters through a unit primal source that is absorbed before iterating.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{assemble, oracle};
use crate::algebra::BlockIndex;
use crate::elements::{Element, Kind, PRIMAL_SCALE};
use crate::engine::System;
use crate::interconnect::ConstraintSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LassoVariant {
    Huber,
    Augmented,
}

/// Generator settings for a random instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoParams {
    pub rows: usize,
    pub cols: usize,
    pub lambda: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for LassoParams {
    fn default() -> Self {
        Self {
            rows: 10,
            cols: 20,
            lambda: 1.0,
            rho: 10.0,
            epsilon: 0.01,
            noise: 0.01,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoInstance {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub lambda: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl LassoInstance {
    pub fn new(a: DMatrix<f64>, y: DVector<f64>, lambda: f64, rho: f64, epsilon: f64) -> Result<Self> {
        let inst = Self {
            a,
            y,
            lambda,
            rho,
            epsilon,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a.nrows() != self.y.len() {
            return Err(Error::Dimension {
                expected: self.a.nrows(),
                got: self.y.len(),
            });
        }
        if self.a.nrows() == 0 || self.a.ncols() == 0 {
            return Err(Error::param("a", "matrix must be nonempty"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda", format!("must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::param("rho", format!("must be finite and >= 0, got {}", self.rho)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", format!("must be finite and > 0, got {}", self.epsilon)));
        }
        if self.a.iter().chain(self.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::param("a", "non-finite data"));
        }
        Ok(())
    }

    /// Gaussian `A` with variance `1/m`, a 3-sparse ground truth and noisy `y`.
    pub fn random(p: &LassoParams) -> Result<Self> {
        if p.rows == 0 || p.cols == 0 {
            return Err(Error::param("rows", "dimensions must be >= 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let entry = Normal::new(0.0, 1.0 / (p.rows as f64).sqrt()).expect("valid normal");
        let a = DMatrix::from_fn(p.rows, p.cols, |_, _| entry.sample(&mut rng));
        let x_true = Self::ground_truth(p.cols);
        let noise = Normal::new(0.0, p.noise.abs()).map_err(|e| Error::param("noise", e.to_string()))?;
        let y = &a * &x_true + DVector::from_fn(p.rows, |_, _| noise.sample(&mut rng));
        Self::new(a, y, p.lambda, p.rho, p.epsilon)
    }

    /// Nonzeros `2, −1.5, 1` at positions `2, 7, 13` (those that fit).
    pub fn ground_truth(n: usize) -> DVector<f64> {
        let mut x = DVector::zeros(n);
        for (i, v) in [(2, 2.0), (7, -1.5), (13, 1.0)] {
            if i < n {
                x[i] = v;
            }
        }
        x
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn huber(&self, x: f64) -> f64 {
        let e = self.epsilon;
        if x.abs() <= e {
            self.lambda * x * x / (2.0 * e)
        } else {
            self.lambda * (x.abs() - 0.5 * e)
        }
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.y
    }

    pub fn objective(&self, variant: LassoVariant, x: &DVector<f64>) -> f64 {
        let fit = 0.5 * self.rho * self.residual(x).norm_squared();
        let reg: f64 = match variant {
            LassoVariant::Huber => x.iter().map(|&v| self.huber(v)).sum(),
            LassoVariant::Augmented => self.lambda * x.abs().sum(),
        };
        fit + reg
    }

    pub fn huber_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let e = self.epsilon;
        let reg = x.map(|v| {
            if v.abs() <= e {
                self.lambda * v / e
            } else {
                self.lambda * v.signum()
            }
        });
        reg + self.a.transpose() * self.residual(x) * self.rho
    }

    /// Distance of `0` from the subdifferential of the chosen objective.
    pub fn optimality_residual(&self, variant: LassoVariant, x: &DVector<f64>) -> f64 {
        match variant {
            LassoVariant::Huber => self.huber_gradient(x).norm(),
            LassoVariant::Augmented => {
                let g = self.a.transpose() * self.residual(x) * self.rho;
                let mut acc = 0.0;
                for i in 0..x.len() {
                    let v = if x[i] != 0.0 {
                        g[i] + self.lambda * x[i].signum()
                    } else {
                        (g[i].abs() - self.lambda).max(0.0)
                    };
                    acc += v * v;
                }
                acc.sqrt()
            }
        }
    }

    /// `λ ≥ ρ‖Aᵀy‖∞` forces the exact-norm solution to zero.
    pub fn zero_threshold(&self) -> f64 {
        self.rho * (self.a.transpose() * &self.y).amax()
    }
}

/// Coordinate ranges of a built LASSO system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LassoLayout {
    pub x: BlockIndex,
    pub r: BlockIndex,
}

impl LassoLayout {
    pub fn new(inst: &LassoInstance) -> Self {
        let (m, n) = (inst.rows(), inst.cols());
        Self {
            x: BlockIndex { offset: 0, length: n },
            r: BlockIndex { offset: n, length: m },
        }
    }
}

fn build(inst: &LassoInstance, variant: LassoVariant) -> Result<System> {
    inst.validate()?;
    let (m, n) = (inst.rows(), inst.cols());
    let sigma = n + m;
    let mut cs = ConstraintSet::new(n + m + 1);
    for i in 0..m {
        let mut terms: Vec<(usize, f64)> = (0..n).map(|j| (j, inst.a[(i, j)])).collect();
        terms.push((sigma, -inst.y[i]));
        cs.define(n + i, &terms)?;
    }
    let x_kind = match variant {
        LassoVariant::Huber => Kind::HuberL1 {
            weight: inst.lambda,
            half_width: inst.epsilon,
        },
        LassoVariant::Augmented => Kind::SoftThreshold { weight: inst.lambda },
    };
    let mut elements = Vec::with_capacity(n + m);
    for j in 0..n {
        elements.push(Element::from_problem(x_kind, BlockIndex::new(j, 1)?)?);
    }
    let r_kind = Kind::Quadratic {
        weight: inst.rho,
        target: 0.0,
    };
    for i in 0..m {
        elements.push(Element::from_problem(r_kind, BlockIndex::new(n + i, 1)?)?);
    }
    assemble(&cs, elements, Some(sigma))
}

/// Huber-smoothed variant: `HuberL1(λ, ε)` on `x`, `Quadratic(ρ)` on `r`.
pub fn build_lasso_huber(inst: &LassoInstance) -> Result<System> {
    build(inst, LassoVariant::Huber)
}

/// Exact 1-norm: `SoftThreshold(λ)` on `x`, augmentation `Quadratic(ρ)` on `r`.
pub fn build_lasso_augmented(inst: &LassoInstance) -> Result<System> {
    build(inst, LassoVariant::Augmented)
}

pub fn build_lasso(inst: &LassoInstance, variant: LassoVariant) -> Result<System> {
    build(inst, variant)
}

/// Transformed fixed point `d⋆` corresponding to a minimizer `x⋆`.
///
/// Primal values are `a_x = x⋆`, `a_r = Ax⋆ − y`; duals are `b_r = −ρ·r`
/// and `b_x = −Aᵀ b_r`; then `d = (a − b)/√2` coordinatewise.
pub fn fixed_point_from_solution(inst: &LassoInstance, x: &DVector<f64>) -> DVector<f64> {
    let (m, n) = (inst.rows(), inst.cols());
    let r = inst.residual(x);
    let b_r = &r * -inst.rho;
    let b_x = -(inst.a.transpose() * &b_r);
    let mut d = DVector::zeros(n + m);
    for j in 0..n {
        d[j] = (x[j] - b_x[j]) / PRIMAL_SCALE;
    }
    for i in 0..m {
        d[n + i] = (r[i] - b_r[i]) / PRIMAL_SCALE;
    }
    d
}

/// Smooth minimizer of the Huber objective: gradient descent with
/// backtracking, refined by Newton steps once close.
pub fn oracle_lasso_huber(inst: &LassoInstance) -> Result<DVector<f64>> {
    inst.validate()?;
    let f = |x: &DVector<f64>| inst.objective(LassoVariant::Huber, x);
    let g = |x: &DVector<f64>| inst.huber_gradient(x);
    let x = oracle::gradient_descent(f, g, DVector::zeros(inst.cols()), 1e-6, 2_000_000)?;
    let ata = inst.a.transpose() * &inst.a * inst.rho;
    let hess = |x: &DVector<f64>| {
        let mut h = ata.clone();
        for i in 0..x.len() {
            if x[i].abs() <= inst.epsilon {
                h[(i, i)] += inst.lambda / inst.epsilon;
            }
        }
        h
    };
    oracle::newton_refine(f, g, hess, x, 1e-10, 1_000)
}

/// Exact-norm minimizer by cyclic coordinate descent.
pub fn oracle_lasso(inst: &LassoInstance) -> Result<DVector<f64>> {
    inst.validate()?;
    oracle::lasso_coordinate_descent(&inst.a, &inst.y, inst.lambda, inst.rho, 1e-12, 1_000_000)
}
