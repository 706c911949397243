//! Minimax (Chebyshev) design of linear-phase FIR filters on a frequency grid.
//!
//! The amplitude of an odd-length symmetric filter with `K = (N + 1)/2`
//! cosine coefficients is `A(ω) = Σₖ hₖ cos(kω)`. The weighted errors
//! `eⱼ = Wⱼ(A(ωⱼ) − Dⱼ)` are image coordinates of `h` and the unit source;
//! an ℓ∞-epigraph element on `(e, δ)` carries a linear cost on `δ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{assemble, oracle};
use crate::algebra::BlockIndex;
use crate::elements::{Element, Kind};
use crate::engine::System;
use crate::interconnect::ConstraintSet;
use crate::{Error, Result};

/// Lowpass design settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirParams {
    pub num_taps: usize,
    /// Band edges in radians.
    pub passband_edge: f64,
    pub stopband_edge: f64,
    pub grid_points: usize,
    pub passband_weight: f64,
    pub stopband_weight: f64,
    pub delta_cost: f64,
    /// Coupling looseness of the split design; `inf` decouples the copies.
    pub split_rho: f64,
}

impl Default for FirParams {
    fn default() -> Self {
        Self {
            num_taps: 15,
            passband_edge: 0.4 * PI,
            stopband_edge: 0.6 * PI,
            grid_points: 128,
            passband_weight: 1.0,
            stopband_weight: 1.0,
            delta_cost: 1.0,
            split_rho: 0.01,
        }
    }
}

/// Discretized minimax problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirSpec {
    pub num_taps: usize,
    pub grid: Vec<f64>,
    pub desired: Vec<f64>,
    pub weights: Vec<f64>,
    pub delta_cost: f64,
    /// Grid points with `ω < split_at` go to the first half of a split design.
    pub split_at: f64,
}

impl FirSpec {
    pub fn new(
        num_taps: usize,
        grid: Vec<f64>,
        desired: Vec<f64>,
        weights: Vec<f64>,
        delta_cost: f64,
        split_at: f64,
    ) -> Result<Self> {
        let spec = Self {
            num_taps,
            grid,
            desired,
            weights,
            delta_cost,
            split_at,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Two equal-size uniform grids on `[0, ω_p]` and `[ω_s, π]`.
    pub fn lowpass(p: &FirParams) -> Result<Self> {
        let (wp, ws) = (p.passband_edge, p.stopband_edge);
        if !(wp > 0.0 && wp < ws && ws < PI) {
            return Err(Error::param(
                "passband_edge",
                format!("need 0 < passband_edge < stopband_edge < π, got {wp} and {ws}"),
            ));
        }
        if p.grid_points < 4 || !p.grid_points.is_multiple_of(2) {
            return Err(Error::param("grid_points", format!("must be even and >= 4, got {}", p.grid_points)));
        }
        let half = p.grid_points / 2;
        let lin = |lo: f64, hi: f64| (0..half).map(move |i| lo + (hi - lo) * i as f64 / (half - 1) as f64);
        let grid: Vec<f64> = lin(0.0, wp).chain(lin(ws, PI)).collect();
        let desired = (0..p.grid_points).map(|j| if j < half { 1.0 } else { 0.0 }).collect();
        let weights = (0..p.grid_points)
            .map(|j| if j < half { p.passband_weight } else { p.stopband_weight })
            .collect();
        Self::new(p.num_taps, grid, desired, weights, p.delta_cost, 0.5 * (wp + ws))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_taps == 0 || self.num_taps.is_multiple_of(2) {
            return Err(Error::param("num_taps", format!("must be odd, got {}", self.num_taps)));
        }
        if self.grid.is_empty() {
            return Err(Error::param("grid", "must be nonempty"));
        }
        if self.desired.len() != self.grid.len() || self.weights.len() != self.grid.len() {
            return Err(Error::Dimension {
                expected: self.grid.len(),
                got: self.desired.len().min(self.weights.len()),
            });
        }
        if self.grid.iter().any(|w| !(0.0..=PI).contains(w)) {
            return Err(Error::param("grid", "frequencies must lie in [0, π]"));
        }
        if self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::param("weights", "must be finite and > 0"));
        }
        if !(self.delta_cost > 0.0 && self.delta_cost.is_finite()) {
            return Err(Error::param("delta_cost", "must be finite and > 0"));
        }
        Ok(())
    }

    pub fn half_taps(&self) -> usize {
        self.num_taps.div_ceil(2)
    }

    /// `C[j, k] = cos(k ωⱼ)`.
    pub fn cosine_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.grid.len(), self.half_taps(), |j, k| (k as f64 * self.grid[j]).cos())
    }

    /// Weighted error `W(C h − D)` on the grid.
    pub fn weighted_error(&self, h: &DVector<f64>) -> DVector<f64> {
        let amp = self.cosine_matrix() * h;
        DVector::from_fn(self.grid.len(), |j, _| self.weights[j] * (amp[j] - self.desired[j]))
    }

    pub fn max_error(&self, h: &DVector<f64>) -> f64 {
        self.weighted_error(h).amax()
    }

    fn sub(&self, idx: &[usize]) -> Self {
        Self {
            num_taps: self.num_taps,
            grid: idx.iter().map(|&j| self.grid[j]).collect(),
            desired: idx.iter().map(|&j| self.desired[j]).collect(),
            weights: idx.iter().map(|&j| self.weights[j]).collect(),
            delta_cost: self.delta_cost,
            split_at: self.split_at,
        }
    }

    /// Grid halves below and above `split_at`.
    pub fn split(&self) -> (Self, Self) {
        let (lo, hi): (Vec<usize>, Vec<usize>) = (0..self.grid.len()).partition(|&j| self.grid[j] < self.split_at);
        (self.sub(&lo), self.sub(&hi))
    }
}

/// Impulse response `t[0..N]` from cosine coefficients.
pub fn taps_from_cosine(h: &DVector<f64>) -> Vec<f64> {
    let k = h.len();
    let n = 2 * k - 1;
    let mut t = vec![0.0; n];
    t[k - 1] = h[0];
    for i in 1..k {
        t[k - 1 - i] = 0.5 * h[i];
        t[k - 1 + i] = 0.5 * h[i];
    }
    t
}

/// Coordinate ranges of an unsplit FIR system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirLayout {
    pub h: BlockIndex,
    pub e: BlockIndex,
    pub delta: usize,
}

impl FirLayout {
    pub fn new(spec: &FirSpec) -> Self {
        let k = spec.half_taps();
        let g = spec.grid.len();
        Self {
            h: BlockIndex { offset: 0, length: k },
            e: BlockIndex { offset: k, length: g },
            delta: k + g,
        }
    }
}

/// `e = W(C h − D·σ)` with an ℓ∞ epigraph on `(e, δ)` and free `h`.
pub fn build_minimax_fir(spec: &FirSpec) -> Result<System> {
    spec.validate()?;
    let lay = FirLayout::new(spec);
    let k = spec.half_taps();
    let sigma = lay.delta + 1;
    let c = spec.cosine_matrix();
    let mut cs = ConstraintSet::new(sigma + 1);
    for j in 0..spec.grid.len() {
        let w = spec.weights[j];
        let mut terms: Vec<(usize, f64)> = (0..k).map(|i| (i, w * c[(j, i)])).collect();
        terms.push((sigma, -w * spec.desired[j]));
        cs.define(lay.e.offset + j, &terms)?;
    }
    let mut elements = Vec::with_capacity(k + 1);
    for i in 0..k {
        elements.push(free(i)?);
    }
    elements.push(Element::from_problem(
        Kind::LinfEpigraph {
            delta_cost: spec.delta_cost,
        },
        BlockIndex::new(lay.e.offset, spec.grid.len() + 1)?,
    )?);
    assemble(&cs, elements, Some(sigma))
}

fn free(i: usize) -> Result<Element> {
    Element::new(
        Kind::Quadratic {
            weight: 0.0,
            target: 0.0,
        },
        BlockIndex::new(i, 1)?,
    )
}

/// Coordinate ranges of a split FIR system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirSplitLayout {
    /// Copy pair `(h¹ₖ, h²ₖ)` sits at `2k, 2k + 1`.
    pub pairs: BlockIndex,
    /// Coupled copies of the two δ's, at `2K` and `2K + 1`.
    pub delta_copies: BlockIndex,
    pub e1: BlockIndex,
    pub delta1: usize,
    pub e2: BlockIndex,
    pub delta2: usize,
}

impl FirSplitLayout {
    fn new(k: usize, g1: usize, g2: usize) -> Self {
        let e1 = BlockIndex {
            offset: 2 * k + 2,
            length: g1,
        };
        let delta1 = e1.end();
        let e2 = BlockIndex {
            offset: delta1 + 1,
            length: g2,
        };
        Self {
            pairs: BlockIndex { offset: 0, length: 2 * k },
            delta_copies: BlockIndex {
                offset: 2 * k,
                length: 2,
            },
            e1,
            delta1,
            e2,
            delta2: e2.end(),
        }
    }

    pub fn of(spec: &FirSpec) -> Self {
        let (a, b) = spec.split();
        Self::new(spec.half_taps(), a.grid.len(), b.grid.len())
    }
}

/// Two sub-designs, one per grid half, each owning a copy of `h` and of
/// `δ`; copies are tied by `PairCoupling(1/ρ)` so small `ρ` couples tightly.
pub fn build_minimax_fir_split(spec: &FirSpec, rho: f64) -> Result<System> {
    spec.validate()?;
    if !(rho > 0.0) {
        return Err(Error::param("rho", format!("must be > 0 (inf decouples), got {rho}")));
    }
    let (s1, s2) = spec.split();
    if s1.grid.is_empty() || s2.grid.is_empty() {
        return Err(Error::param("split_at", "both grid halves must be nonempty"));
    }
    let k = spec.half_taps();
    let lay = FirSplitLayout::new(k, s1.grid.len(), s2.grid.len());
    let sigma = lay.delta2 + 1;
    let mut cs = ConstraintSet::new(sigma + 1);
    let halves = [(&s1, lay.e1, 0usize), (&s2, lay.e2, 1usize)];
    for (sub, e, copy) in halves {
        let c = sub.cosine_matrix();
        for j in 0..sub.grid.len() {
            let w = sub.weights[j];
            let mut terms: Vec<(usize, f64)> = (0..k).map(|i| (2 * i + copy, w * c[(j, i)])).collect();
            terms.push((sigma, -w * sub.desired[j]));
            cs.define(e.offset + j, &terms)?;
        }
    }
    cs.define(lay.delta_copies.offset, &[(lay.delta1, 1.0)])?;
    cs.define(lay.delta_copies.offset + 1, &[(lay.delta2, 1.0)])?;

    let coupling = Kind::PairCoupling { weight: 1.0 / rho };
    let mut elements = Vec::new();
    for i in 0..k {
        elements.push(Element::from_problem(coupling, BlockIndex::new(2 * i, 2)?)?);
    }
    elements.push(Element::from_problem(coupling, lay.delta_copies)?);
    let epi = Kind::LinfEpigraph {
        delta_cost: 0.5 * spec.delta_cost,
    };
    elements.push(Element::from_problem(epi, BlockIndex::new(lay.e1.offset, lay.e1.length + 1)?)?);
    elements.push(Element::from_problem(epi, BlockIndex::new(lay.e2.offset, lay.e2.length + 1)?)?);
    assemble(&cs, elements, Some(sigma))
}

/// Both copies of `h` from the primal readout of a split system.
pub fn split_copies(primal: &DVector<f64>, half_taps: usize) -> (DVector<f64>, DVector<f64>) {
    (
        DVector::from_fn(half_taps, |i, _| primal[2 * i]),
        DVector::from_fn(half_taps, |i, _| primal[2 * i + 1]),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct FirOracle {
    pub h: DVector<f64>,
    pub delta: f64,
}

/// Grid minimax LP `min δ` s.t. `−δ ≤ W(Ch − D) ≤ δ`.
pub fn oracle_minimax_lp(spec: &FirSpec) -> Result<FirOracle> {
    spec.validate()?;
    let k = spec.half_taps();
    let g = spec.grid.len();
    let c = spec.cosine_matrix();
    // Columns: h⁺ (k), h⁻ (k), δ, slacks (2g).
    let cols = 2 * k + 1 + 2 * g;
    let mut a = DMatrix::zeros(2 * g, cols);
    let mut b = DVector::zeros(2 * g);
    for j in 0..g {
        let w = spec.weights[j];
        for i in 0..k {
            a[(j, i)] = w * c[(j, i)];
            a[(j, k + i)] = -w * c[(j, i)];
            a[(g + j, i)] = -w * c[(j, i)];
            a[(g + j, k + i)] = w * c[(j, i)];
        }
        a[(j, 2 * k)] = -1.0;
        a[(g + j, 2 * k)] = -1.0;
        a[(j, 2 * k + 1 + j)] = 1.0;
        a[(g + j, 2 * k + 1 + g + j)] = 1.0;
        b[j] = w * spec.desired[j];
        b[g + j] = -w * spec.desired[j];
    }
    let mut cost = DVector::zeros(cols);
    cost[2 * k] = 1.0;
    let sol = oracle::simplex(&cost, &a, &b)?;
    let h = DVector::from_fn(k, |i, _| sol.x[i] - sol.x[k + i]);
    Ok(FirOracle { h, delta: sol.x[2 * k] })
}

/// Number of sign alternations among grid points where `|E| ≥ (1 − tol)·δ⋆`;
/// runs of equal sign count once.
pub fn count_alternations(error: &DVector<f64>, delta_star: f64, tol: f64) -> usize {
    let level = delta_star - tol * delta_star;
    let mut count = 0;
    let mut last = 0.0;
    for &e in error.iter() {
        if e.abs() >= level && e != 0.0 {
            let s = e.signum();
            if s != last {
                count += 1;
                last = s;
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run, DelayBank, RunOptions};

    #[test]
    fn single_point_single_tap() {
        let spec = FirSpec::new(1, vec![0.3], vec![0.7], vec![1.0], 1.0, 1.0).unwrap();
        let lp = oracle_minimax_lp(&spec).unwrap();
        assert!(lp.delta.abs() < 1e-12);
        assert!((lp.h[0] - 0.7).abs() < 1e-12);

        let sys = build_minimax_fir(&spec).unwrap();
        let res = run(&sys, &mut DelayBank::synchronous(), &RunOptions::new(1e-12, 100_000)).unwrap();
        assert!(res.converged());
        let a = res.primal().unwrap();
        let lay = FirLayout::new(&spec);
        assert!((a[0] - 0.7).abs() < 1e-9, "{}", a[0]);
        assert!(a[lay.delta].abs() < 1e-9);
    }

    #[test]
    fn lowpass_lp_is_equiripple() {
        let spec = FirSpec::lowpass(&FirParams::default()).unwrap();
        let lp = oracle_minimax_lp(&spec).unwrap();
        assert!((spec.max_error(&lp.h) - lp.delta).abs() < 1e-9);
        let alt = count_alternations(&spec.weighted_error(&lp.h), lp.delta, 0.05);
        assert!(alt >= spec.half_taps() + 2, "{alt}");
    }

    #[test]
    fn taps_are_symmetric() {
        let t = taps_from_cosine(&DVector::from_vec(vec![1.0, 0.4, -0.2]));
        assert_eq!(t, vec![-0.1, 0.2, 1.0, 0.2, -0.1]);
    }

    #[test]
    fn alternation_counting() {
        let e = DVector::from_vec(vec![1.0, 0.99, -1.0, 0.2, 1.0, -0.5, -1.0]);
        assert_eq!(count_alternations(&e, 1.0, 0.05), 4);
        assert_eq!(count_alternations(&DVector::zeros(3), 0.0, 0.05), 0);
    }

    #[test]
    fn spec_validation() {
        let bad = FirParams {
            passband_edge: 2.0,
            stopband_edge: 1.0,
            ..FirParams::default()
        };
        assert!(FirSpec::lowpass(&bad).is_err());
        assert!(FirSpec::new(4, vec![0.1], vec![1.0], vec![1.0], 1.0, 1.0).is_err());
        let spec = FirSpec::lowpass(&FirParams::default()).unwrap();
        assert!(build_minimax_fir_split(&spec, 0.0).is_err());
    }
}
