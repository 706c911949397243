//! Constitutive relations `c = m(d)`.
//!
//! Every element is the reflected resolvent `m = 2·prox_f − I` of its cost
//! term `f` with unit step. The map is nonexpansive exactly when `f` is
//! convex, which is the dissipativity property the convergence argument
//! relies on. Parameters stored in [`Kind`] are in *system* coordinates;
//! [`Element::from_problem`] converts costs written in terms of the primal
//! decision variables.

use std::f64::consts::SQRT_2;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::algebra::BlockIndex;
use crate::{Error, Result};

/// Ratio between a primal readout and the prox output under the canonical
/// pair transform: `a = (c + d)/√2 = √2·prox(d)`.
pub const PRIMAL_SCALE: f64 = SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

/// Cost term realized by an element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kind {
    /// `(w/2)(x − t)²`
    Quadratic { weight: f64, target: f64 },
    /// `λx²/(2ε)` for `|x| ≤ ε`, `λ(|x| − ε/2)` otherwise.
    HuberL1 { weight: f64, half_width: f64 },
    /// `λ|x|`
    SoftThreshold { weight: f64 },
    /// Indicator of `‖e‖∞ ≤ δ` plus `κ·δ`; the last block coordinate is `δ`.
    LinfEpigraph { delta_cost: f64 },
    /// `C·max(0, μ − z)`
    Hinge { weight: f64, margin: f64 },
    /// `(w/2)(u − v)²` on a two-coordinate block.
    PairCoupling { weight: f64 },
    /// `(w/2)·max(0, x − u)²` (upper) or `(w/2)·max(0, u − x)²` (lower).
    OneSidedPenalty { weight: f64, bound: f64, side: Side },
    /// `ρ·min(|x|/v, 1)`; nonconvex.
    CappedL1 { height: f64, notch_width: f64 },
}

impl Kind {
    pub fn validate(&self) -> Result<()> {
        fn nonneg(name: &'static str, v: f64) -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
            Ok(())
        }
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
            Ok(())
        }
        fn finite(name: &'static str, v: f64) -> Result<()> {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
            Ok(())
        }
        match *self {
            Kind::Quadratic { weight, target } => {
                nonneg("weight", weight)?;
                finite("target", target)
            }
            Kind::HuberL1 { weight, half_width } => {
                nonneg("weight", weight)?;
                positive("half_width", half_width)
            }
            Kind::SoftThreshold { weight } => nonneg("weight", weight),
            Kind::LinfEpigraph { delta_cost } => nonneg("delta_cost", delta_cost),
            Kind::Hinge { weight, margin } => {
                nonneg("weight", weight)?;
                finite("margin", margin)
            }
            Kind::PairCoupling { weight } => nonneg("weight", weight),
            Kind::OneSidedPenalty { weight, bound, .. } => {
                nonneg("weight", weight)?;
                finite("bound", bound)
            }
            Kind::CappedL1 {
                height,
                notch_width,
            } => {
                nonneg("height", height)?;
                positive("notch_width", notch_width)
            }
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, Kind::CappedL1 { .. })
    }

    /// Parameters of `g(p) = f(k·p)/k²` given those of `f`.
    pub fn rescaled(self, k: f64) -> Self {
        match self {
            Kind::Quadratic { weight, target } => Kind::Quadratic {
                weight,
                target: target / k,
            },
            Kind::HuberL1 { weight, half_width } => Kind::HuberL1 {
                weight: weight / k,
                half_width: half_width / k,
            },
            Kind::SoftThreshold { weight } => Kind::SoftThreshold { weight: weight / k },
            Kind::LinfEpigraph { delta_cost } => Kind::LinfEpigraph {
                delta_cost: delta_cost / k,
            },
            Kind::Hinge { weight, margin } => Kind::Hinge {
                weight: weight / k,
                margin: margin / k,
            },
            Kind::PairCoupling { weight } => Kind::PairCoupling { weight },
            Kind::OneSidedPenalty {
                weight,
                bound,
                side,
            } => Kind::OneSidedPenalty {
                weight,
                bound: bound / k,
                side,
            },
            Kind::CappedL1 {
                height,
                notch_width,
            } => Kind::CappedL1 {
                height: height / (k * k),
                notch_width: notch_width / k,
            },
        }
    }

    fn check_block(&self, block: &BlockIndex) -> Result<()> {
        match self {
            Kind::PairCoupling { .. } if block.length != 2 => Err(Error::Layout(format!(
                "pair coupling needs a 2-coordinate block, got {}",
                block.length
            ))),
            Kind::LinfEpigraph { .. } if block.length < 2 => Err(Error::Layout(
                "epigraph block needs at least one error coordinate and δ".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Scalar prox; `None` for the jointly coupled kinds.
    fn prox_scalar(&self, d: f64) -> Option<f64> {
        Some(match *self {
            Kind::Quadratic { weight, target } => prox_quadratic(d, weight, target),
            Kind::HuberL1 { weight, half_width } => prox_huber_l1(d, weight, half_width),
            Kind::SoftThreshold { weight } => prox_soft_threshold(d, weight),
            Kind::Hinge { weight, margin } => prox_hinge_margin(d, weight, margin),
            Kind::OneSidedPenalty {
                weight,
                bound,
                side,
            } => prox_one_sided(d, weight, bound, side),
            Kind::CappedL1 {
                height,
                notch_width,
            } => prox_capped_l1(d, height, notch_width),
            Kind::LinfEpigraph { .. } | Kind::PairCoupling { .. } => return None,
        })
    }

    fn cost_scalar(&self, x: f64) -> Option<f64> {
        Some(match *self {
            Kind::Quadratic { weight, target } => 0.5 * weight * (x - target).powi(2),
            Kind::HuberL1 { weight, half_width } => huber(x, weight, half_width),
            Kind::SoftThreshold { weight } => weight * x.abs(),
            Kind::Hinge { weight, margin } => weight * (margin - x).max(0.0),
            Kind::OneSidedPenalty {
                weight,
                bound,
                side,
            } => {
                let excess = match side {
                    Side::Upper => x - bound,
                    Side::Lower => bound - x,
                };
                0.5 * weight * excess.max(0.0).powi(2)
            }
            Kind::CappedL1 {
                height,
                notch_width,
            } => height * (x.abs() / notch_width).min(1.0),
            Kind::LinfEpigraph { .. } | Kind::PairCoupling { .. } => return None,
        })
    }
}

/// A cost term attached to one block of the system vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub kind: Kind,
    pub block: BlockIndex,
}

impl Element {
    /// Element with parameters already in system coordinates.
    pub fn new(kind: Kind, block: BlockIndex) -> Result<Self> {
        kind.validate()?;
        kind.check_block(&block)?;
        Ok(Self { kind, block })
    }

    /// Element whose cost is written in primal (readout) units.
    pub fn from_problem(kind: Kind, block: BlockIndex) -> Result<Self> {
        kind.validate()?;
        Self::new(kind.rescaled(PRIMAL_SCALE), block)
    }

    /// Declared dissipativity: every convex kind.
    pub fn dissipative(&self) -> bool {
        self.kind.is_convex()
    }

    pub fn prox(&self, d: &[f64], out: &mut [f64]) {
        debug_assert_eq!(d.len(), self.block.length);
        debug_assert_eq!(out.len(), d.len());
        match self.kind {
            Kind::LinfEpigraph { delta_cost } => {
                let (e, t) = d.split_at(d.len() - 1);
                let (pe, pt) = out.split_at_mut(d.len() - 1);
                pt[0] = project_linf_epigraph(e, t[0] - delta_cost, pe);
            }
            Kind::PairCoupling { weight } => {
                let [pu, pv] = prox_pair_coupling([d[0], d[1]], weight);
                out[0] = pu;
                out[1] = pv;
            }
            kind => {
                for (o, &x) in out.iter_mut().zip(d) {
                    *o = kind.prox_scalar(x).expect("scalar kind");
                }
            }
        }
    }

    /// `c = 2·prox(d) − d`.
    pub fn eval(&self, d: &[f64], out: &mut [f64]) {
        self.prox(d, out);
        for (o, &x) in out.iter_mut().zip(d) {
            *o = 2.0 * *o - x;
        }
    }

    pub fn eval_vec(&self, d: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; d.len()];
        self.eval(d, &mut out);
        out
    }

    /// System-coordinate cost at `p`; `+∞` outside the epigraph.
    pub fn cost(&self, p: &[f64]) -> f64 {
        match self.kind {
            Kind::LinfEpigraph { delta_cost } => {
                let (e, t) = p.split_at(p.len() - 1);
                let t = t[0];
                let emax = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                if emax > t + 1e-9 * (1.0 + t.abs()) {
                    f64::INFINITY
                } else {
                    delta_cost * t
                }
            }
            Kind::PairCoupling { weight } => 0.5 * weight * (p[0] - p[1]).powi(2),
            kind => p.iter().map(|&x| kind.cost_scalar(x).expect("scalar kind")).sum(),
        }
    }
}

fn huber(x: f64, weight: f64, half_width: f64) -> f64 {
    if x.abs() <= half_width {
        weight * x * x / (2.0 * half_width)
    } else {
        weight * (x.abs() - 0.5 * half_width)
    }
}

pub fn prox_quadratic(d: f64, weight: f64, target: f64) -> f64 {
    (d + weight * target) / (1.0 + weight)
}

pub fn prox_huber_l1(d: f64, weight: f64, half_width: f64) -> f64 {
    let slope = weight / half_width;
    if d.abs() <= half_width * (1.0 + slope) {
        d / (1.0 + slope)
    } else {
        d.signum() * (d.abs() - weight)
    }
}

pub fn prox_soft_threshold(d: f64, weight: f64) -> f64 {
    d.signum() * (d.abs() - weight).max(0.0)
}

fn prox_hinge_margin(d: f64, weight: f64, margin: f64) -> f64 {
    if d <= margin - weight {
        d + weight
    } else if d < margin {
        margin
    } else {
        d
    }
}

pub fn prox_hinge(d: f64, weight: f64) -> f64 {
    prox_hinge_margin(d, weight, 1.0)
}

pub fn prox_pair_coupling(d: [f64; 2], weight: f64) -> [f64; 2] {
    let shift = weight / (1.0 + 2.0 * weight) * (d[0] - d[1]);
    [d[0] - shift, d[1] + shift]
}

pub fn prox_one_sided(d: f64, weight: f64, bound: f64, side: Side) -> f64 {
    match side {
        Side::Upper if d > bound => (d + weight * bound) / (1.0 + weight),
        Side::Lower if d < bound => (d + weight * bound) / (1.0 + weight),
        _ => d,
    }
}

/// Global minimizer of `½(x − d)² + ρ·min(|x|/v, 1)`.
///
/// Compares the best point inside the notch (`|x| ≤ v`, soft threshold at
/// `ρ/v` clipped to the notch) with the best point on the plateau
/// (`|x| ≥ v`); ties go to the smaller magnitude.
pub fn prox_capped_l1(d: f64, height: f64, notch_width: f64) -> f64 {
    let objective = |x: f64| 0.5 * (x - d).powi(2) + height * (x.abs() / notch_width).min(1.0);
    let sign = if d < 0.0 { -1.0 } else { 1.0 };
    let notch = sign * (d.abs() - height / notch_width).clamp(0.0, notch_width);
    let plateau = if d.abs() >= notch_width {
        d
    } else {
        sign * notch_width
    };
    if objective(notch) <= objective(plateau) {
        notch
    } else {
        plateau
    }
}

/// Euclidean projection of `(e, t)` onto `{‖e‖∞ ≤ δ}`; writes the error part
/// into `out` and returns the projected `δ`.
pub fn project_linf_epigraph(e: &[f64], t: f64, out: &mut [f64]) -> f64 {
    let emax = e.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if emax <= t {
        out.copy_from_slice(e);
        return t;
    }
    let mut mags: Vec<f64> = e.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    // The clipped set is the k largest magnitudes; τ balances them against t.
    let mut acc = t;
    let mut tau = 0.0;
    for k in 0..mags.len() {
        acc += mags[k];
        tau = acc / (k as f64 + 2.0);
        let next = mags.get(k + 1).copied().unwrap_or(0.0);
        if tau >= next {
            break;
        }
    }
    let tau = tau.max(0.0);
    for (o, &x) in out.iter_mut().zip(e) {
        *o = x.signum() * x.abs().min(tau);
    }
    tau
}

pub fn eval_quadratic(d: f64, weight: f64, target: f64) -> f64 {
    2.0 * prox_quadratic(d, weight, target) - d
}

pub fn eval_huber_l1(d: f64, weight: f64, half_width: f64) -> f64 {
    2.0 * prox_huber_l1(d, weight, half_width) - d
}

pub fn eval_soft_threshold(d: f64, weight: f64) -> f64 {
    2.0 * prox_soft_threshold(d, weight) - d
}

/// Reflected epigraph projection on `(e..., δ)` with no cost on `δ`.
pub fn eval_linf_epigraph(d: &[f64]) -> Vec<f64> {
    assert!(d.len() >= 2, "need at least one error coordinate and δ");
    let (e, t) = d.split_at(d.len() - 1);
    let mut p = vec![0.0; d.len()];
    let (pe, pt) = p.split_at_mut(d.len() - 1);
    pt[0] = project_linf_epigraph(e, t[0], pe);
    p.iter().zip(d).map(|(p, x)| 2.0 * p - x).collect()
}

pub fn eval_hinge(d: f64, weight: f64) -> f64 {
    2.0 * prox_hinge(d, weight) - d
}

pub fn eval_pair_coupling(d: [f64; 2], weight: f64) -> [f64; 2] {
    let p = prox_pair_coupling(d, weight);
    [2.0 * p[0] - d[0], 2.0 * p[1] - d[1]]
}

pub fn eval_one_sided(d: f64, weight: f64, bound: f64, side: Side) -> f64 {
    2.0 * prox_one_sided(d, weight, bound, side) - d
}

pub fn eval_capped_l1(d: f64, height: f64, notch_width: f64) -> f64 {
    2.0 * prox_capped_l1(d, height, notch_width) - d
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DissipativityReport {
    pub samples: usize,
    /// Largest `‖m(d) − m(d⋆)‖ / ‖d − d⋆‖` seen.
    pub max_ratio: f64,
    pub pass: bool,
}

/// Samples `samples` points uniformly in the ball of `radius` around `center`
/// and reports the worst gain of the element about `center`.
pub fn dissipativity_probe(
    element: &Element,
    center: &[f64],
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<DissipativityReport> {
    if samples == 0 {
        return Err(Error::param("samples", "must be >= 1"));
    }
    if center.len() != element.block.length {
        return Err(Error::Dimension {
            expected: element.block.length,
            got: center.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m_center = element.eval_vec(center);
    let k = center.len();
    let mut max_ratio: f64 = 0.0;
    let mut d = vec![0.0; k];
    let mut c = vec![0.0; k];
    for _ in 0..samples {
        let offset = sample_ball(&mut rng, k, radius);
        let norm_e = offset.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm_e == 0.0 {
            continue;
        }
        for i in 0..k {
            d[i] = center[i] + offset[i];
        }
        element.eval(&d, &mut c);
        let norm_c = c
            .iter()
            .zip(&m_center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        max_ratio = max_ratio.max(norm_c / norm_e);
    }
    Ok(DissipativityReport {
        samples,
        max_ratio,
        pass: max_ratio <= 1.0 + 1e-10,
    })
}

/// Uniform sample from the `k`-ball of the given radius.
pub(crate) fn sample_ball(rng: &mut ChaCha8Rng, k: usize, radius: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r = radius * rng.random::<f64>().powf(1.0 / k as f64);
    if norm > 0.0 {
        for x in &mut v {
            *x *= r / norm;
        }
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Dense grid search of `½(x − d)² + f(x)` on `[−|d| − 10, |d| + 10]`:
    /// a coarse pass locates the basin, a fine pass (step 1e−6) refines it.
    fn grid_prox(d: f64, f: impl Fn(f64) -> f64) -> f64 {
        let obj = |x: f64| 0.5 * (x - d).powi(2) + f(x);
        let lo = -d.abs() - 10.0;
        let hi = d.abs() + 10.0;
        let coarse = 1e-3;
        let n = ((hi - lo) / coarse) as usize;
        let mut best = lo;
        for i in 0..=n {
            let x = lo + i as f64 * coarse;
            if obj(x) < obj(best) {
                best = x;
            }
        }
        let fine = 1e-6;
        let start = best - 2.0 * coarse;
        let mut refined = best;
        for i in 0..=(4.0 * coarse / fine) as usize {
            let x = start + i as f64 * fine;
            if obj(x) < obj(refined) {
                refined = x;
            }
        }
        refined
    }

    fn grid_element(kind: Kind, d: f64) -> f64 {
        let elem = Element::new(kind, BlockIndex::new(0, 1).unwrap()).unwrap();
        grid_prox(d, |x| elem.cost(&[x]))
    }

    #[test]
    fn quadratic_examples() {
        assert_abs_diff_eq!(eval_quadratic(3.0, 2.5, 3.0), 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_quadratic(5.0, 1.0, 0.0), 0.0);
        assert_abs_diff_eq!(prox_quadratic(0.0, 1.0, 2.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eval_quadratic(0.0, 1.0, 2.0), 2.0, epsilon = 1e-15);
        let kind = Kind::Quadratic {
            weight: 1.0,
            target: 2.0,
        };
        assert_abs_diff_eq!(grid_element(kind, 0.0), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn huber_examples() {
        assert_eq!(eval_huber_l1(0.0, 1.0, 1.0), 0.0);
        assert_abs_diff_eq!(prox_huber_l1(3.0, 1.0, 1.0), 2.0);
        assert_abs_diff_eq!(eval_huber_l1(3.0, 1.0, 1.0), 1.0);
        assert_abs_diff_eq!(prox_huber_l1(1.0, 1.0, 1.0), 0.5);
        assert_abs_diff_eq!(eval_huber_l1(1.0, 1.0, 1.0), 0.0);
        let kind = Kind::HuberL1 {
            weight: 1.0,
            half_width: 1.0,
        };
        assert_abs_diff_eq!(grid_element(kind, 3.0), 2.0, epsilon = 1e-4);
        assert_abs_diff_eq!(grid_element(kind, 1.0), 0.5, epsilon = 1e-4);
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(eval_soft_threshold(0.0, 1.0), 0.0);
        assert_abs_diff_eq!(prox_soft_threshold(2.0, 1.0), 1.0);
        assert_abs_diff_eq!(eval_soft_threshold(2.0, 1.0), 0.0);
        assert_abs_diff_eq!(prox_soft_threshold(0.5, 1.0), 0.0);
        assert_abs_diff_eq!(eval_soft_threshold(0.5, 1.0), -0.5);
    }

    #[test]
    fn hinge_examples() {
        for c in [0.0, 0.5, 3.0] {
            assert_abs_diff_eq!(prox_hinge(2.0, c), 2.0);
            assert_abs_diff_eq!(eval_hinge(2.0, c), 2.0);
        }
        assert_abs_diff_eq!(prox_hinge(-1.0, 1.0), 0.0);
        assert_abs_diff_eq!(eval_hinge(-1.0, 1.0), 1.0);
        assert_abs_diff_eq!(prox_hinge(0.5, 1.0), 1.0);
        assert_abs_diff_eq!(eval_hinge(0.5, 1.0), 1.5);
    }

    #[test]
    fn pair_coupling_examples() {
        assert_eq!(prox_pair_coupling([0.3, 0.3], 2.0), [0.3, 0.3]);
        let p = prox_pair_coupling([1.0, 0.0], 0.5);
        assert_abs_diff_eq!(p[0], 0.75);
        assert_abs_diff_eq!(p[1], 0.25);
        assert_eq!(eval_pair_coupling([1.7, -0.4], 0.0), [1.7, -0.4]);
    }

    #[test]
    fn pair_coupling_matches_normal_equations() {
        // argmin ½‖x − d‖² + (ρ/2)(x₀ − x₁)²  ⇔  [[1+ρ, −ρ], [−ρ, 1+ρ]] x = d.
        let rho: f64 = 0.5;
        let d = [1.0, 0.0];
        let det = (1.0 + rho).powi(2) - rho * rho;
        let x0 = ((1.0 + rho) * d[0] + rho * d[1]) / det;
        let x1 = (rho * d[0] + (1.0 + rho) * d[1]) / det;
        let p = prox_pair_coupling(d, rho);
        assert_abs_diff_eq!(p[0], x0, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], x1, epsilon = 1e-15);
    }

    #[test]
    fn one_sided_examples() {
        assert_abs_diff_eq!(eval_one_sided(-0.5, 3.0, 0.0, Side::Upper), -0.5);
        assert_abs_diff_eq!(prox_one_sided(2.0, 1.0, 0.0, Side::Upper), 1.0);
        assert_abs_diff_eq!(eval_one_sided(2.0, 1.0, 0.0, Side::Upper), 0.0);
        assert_abs_diff_eq!(prox_one_sided(-2.0, 1.0, 0.0, Side::Lower), -1.0);
        assert_abs_diff_eq!(eval_one_sided(-2.0, 1.0, 0.0, Side::Lower), 0.0);
    }

    #[test]
    fn capped_examples() {
        assert_eq!(prox_capped_l1(0.0, 1.0, 1.0), 0.0);
        assert_eq!(eval_capped_l1(0.0, 1.0, 1.0), 0.0);
        assert_abs_diff_eq!(prox_capped_l1(10.0, 1.0, 1.0), 10.0);
        assert_abs_diff_eq!(prox_capped_l1(0.3, 1.0, 1.0), 0.0);
        let kind = Kind::CappedL1 {
            height: 1.0,
            notch_width: 1.0,
        };
        assert_abs_diff_eq!(grid_element(kind, 10.0), 10.0, epsilon = 1e-4);
        assert_abs_diff_eq!(grid_element(kind, 0.3), 0.0, epsilon = 1e-4);
    }

    #[test]
    fn capped_narrow_notch_is_identity_beyond_threshold() {
        // v → 0⁺: staying costs ρ, shrinking to 0 costs d²/2, so any
        // |d| > √(2ρ) is left where it is.
        let rho: f64 = 0.5;
        let v = 1e-9;
        for d in [1.01, 1.5, -2.0, 7.0] {
            assert!(d * d / 2.0 > rho);
            assert_eq!(prox_capped_l1(d, rho, v), d);
        }
        assert_eq!(prox_capped_l1(0.99, rho, v), 0.0);
    }

    #[test]
    fn epigraph_examples() {
        let mut out = [0.0; 2];
        let t = project_linf_epigraph(&[0.5, -0.25], 1.0, &mut out);
        assert_eq!((out, t), ([0.5, -0.25], 1.0));

        let mut out = [0.0; 1];
        let t = project_linf_epigraph(&[2.0], 0.0, &mut out);
        assert_abs_diff_eq!(out[0], 1.0);
        assert_abs_diff_eq!(t, 1.0);

        let mut out = [9.0; 2];
        let t = project_linf_epigraph(&[0.0, 0.0], -3.0, &mut out);
        assert_eq!((out, t), ([0.0, 0.0], 0.0));

        assert_eq!(eval_linf_epigraph(&[0.5, 1.0]), vec![0.5, 1.0]);
    }

    #[test]
    fn epigraph_vertex_matches_grid_search() {
        // (0, 0, −3): brute force over feasible (e₀, e₁, δ) on a grid.
        let target = [0.0, 0.0, -3.0];
        let mut best = (f64::INFINITY, [0.0; 3]);
        let step = 0.05;
        for i in 0..=40 {
            let t = i as f64 * step;
            for j in -20..=20 {
                for k in -20..=20 {
                    let p = [j as f64 * step, k as f64 * step, t];
                    if p[0].abs() > t || p[1].abs() > t {
                        continue;
                    }
                    let dist: f64 = p.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum();
                    if dist < best.0 {
                        best = (dist, p);
                    }
                }
            }
        }
        assert_eq!(best.1, [0.0, 0.0, 0.0]);
        let mut out = [1.0; 2];
        assert_eq!(project_linf_epigraph(&[0.0, 0.0], -3.0, &mut out), 0.0);
        assert_eq!(out, [0.0, 0.0]);
    }

    /// Independent epigraph projection: minimize the convex 1-D function
    /// `Σ(|e_i| − τ)₊² + (τ − t)²` over `τ ≥ 0` by ternary search.
    fn epigraph_oracle(e: &[f64], t: f64) -> f64 {
        let phi = |tau: f64| {
            e.iter().map(|x| (x.abs() - tau).max(0.0).powi(2)).sum::<f64>() + (tau - t).powi(2)
        };
        let (mut lo, mut hi) = (0.0, e.iter().fold(t.abs(), |m, x| m.max(x.abs())) + 1.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if phi(m1) <= phi(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        0.5 * (lo + hi)
    }

    fn scalar_kind() -> impl Strategy<Value = Kind> {
        prop_oneof![
            (0.0..3.0f64, -3.0..3.0f64).prop_map(|(weight, target)| Kind::Quadratic { weight, target }),
            (0.0..3.0f64, 0.01..2.0f64)
                .prop_map(|(weight, half_width)| Kind::HuberL1 { weight, half_width }),
            (0.0..3.0f64).prop_map(|weight| Kind::SoftThreshold { weight }),
            (0.0..3.0f64, -1.0..2.0f64).prop_map(|(weight, margin)| Kind::Hinge { weight, margin }),
            (0.0..3.0f64, -2.0..2.0f64, any::<bool>()).prop_map(|(weight, bound, up)| {
                Kind::OneSidedPenalty {
                    weight,
                    bound,
                    side: if up { Side::Upper } else { Side::Lower },
                }
            }),
            (0.0..3.0f64, 0.05..2.0f64)
                .prop_map(|(height, notch_width)| Kind::CappedL1 { height, notch_width }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]

        #[test]
        fn scalar_prox_matches_grid(kind in scalar_kind(), d in -5.0..5.0f64) {
            let elem = Element::new(kind, BlockIndex::new(0, 1).unwrap()).unwrap();
            let mut p = [0.0];
            elem.prox(&[d], &mut p);
            let grid = grid_element(kind, d);
            let obj = |x: f64| 0.5 * (x - d).powi(2) + elem.cost(&[x]);
            prop_assert!(obj(p[0]) <= obj(grid) + 1e-9, "{kind:?} d={d}: {} vs {}", p[0], grid);
            // Only a genuine tie between separated minimizers may differ.
            if (obj(p[0]) - obj(grid)).abs() > 1e-6 {
                prop_assert!((p[0] - grid).abs() <= 1e-4, "{kind:?} d={d}: {} vs {}", p[0], grid);
            }
        }

        #[test]
        fn convex_kinds_are_nonexpansive(
            kind in scalar_kind(),
            d1 in -5.0..5.0f64,
            d2 in -5.0..5.0f64,
        ) {
            prop_assume!(kind.is_convex());
            let elem = Element::new(kind, BlockIndex::new(0, 1).unwrap()).unwrap();
            let (c1, c2) = (elem.eval_vec(&[d1])[0], elem.eval_vec(&[d2])[0]);
            prop_assert!((c1 - c2).abs() <= (d1 - d2).abs() + 1e-10);
        }

        #[test]
        fn pair_coupling_nonexpansive(
            w in 0.0..10.0f64,
            a in prop::array::uniform2(-5.0..5.0f64),
            b in prop::array::uniform2(-5.0..5.0f64),
        ) {
            let (ca, cb) = (eval_pair_coupling(a, w), eval_pair_coupling(b, w));
            let dc = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt();
            let dd = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            prop_assert!(dc <= dd + 1e-10);
        }

        #[test]
        fn epigraph_projection_properties(
            e in prop::collection::vec(-4.0..4.0f64, 1..12),
            t in -4.0..4.0f64,
        ) {
            let mut pe = vec![0.0; e.len()];
            let pt = project_linf_epigraph(&e, t, &mut pe);
            let emax = pe.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            prop_assert!(emax <= pt + 1e-12);
            // Idempotent.
            let mut again = vec![0.0; e.len()];
            let pt2 = project_linf_epigraph(&pe, pt, &mut again);
            prop_assert_eq!(pt2, pt);
            prop_assert_eq!(&again, &pe);
            // Agrees with the ternary-search oracle.
            let tau = epigraph_oracle(&e, t);
            prop_assert!((pt - tau.max(0.0)).abs() < 1e-7, "{pt} vs {tau}");
        }
    }

    #[test]
    fn fixed_points_at_minimizers() {
        let block = BlockIndex::new(0, 1).unwrap();
        let cases = [
            (Kind::Quadratic { weight: 2.0, target: 1.5 }, 1.5),
            (Kind::HuberL1 { weight: 1.0, half_width: 0.5 }, 0.0),
            (Kind::SoftThreshold { weight: 1.0 }, 0.0),
            (Kind::Hinge { weight: 1.0, margin: 1.0 }, 3.0),
            (Kind::OneSidedPenalty { weight: 1.0, bound: 0.0, side: Side::Upper }, -1.0),
            (Kind::CappedL1 { height: 1.0, notch_width: 1.0 }, 0.0),
        ];
        for (kind, minimizer) in cases {
            let e = Element::new(kind, block).unwrap();
            assert_abs_diff_eq!(e.eval_vec(&[minimizer])[0], minimizer, epsilon = 1e-15);
        }
        // Off the minimizer, m(d) ≠ d.
        let e = Element::new(Kind::SoftThreshold { weight: 1.0 }, block).unwrap();
        assert!((e.eval_vec(&[0.5])[0] - 0.5).abs() > 0.1);
    }

    #[test]
    fn rescaled_costs_agree() {
        // g(p) = f(k p)/k² must hold pointwise for every kind.
        let k = PRIMAL_SCALE;
        let kinds = [
            Kind::Quadratic { weight: 2.0, target: 0.7 },
            Kind::HuberL1 { weight: 1.3, half_width: 0.4 },
            Kind::SoftThreshold { weight: 0.8 },
            Kind::Hinge { weight: 1.1, margin: 1.0 },
            Kind::OneSidedPenalty { weight: 3.0, bound: -0.2, side: Side::Lower },
            Kind::CappedL1 { height: 0.4, notch_width: 0.3 },
        ];
        let block = BlockIndex::new(0, 1).unwrap();
        for kind in kinds {
            let f = Element::new(kind, block).unwrap();
            let g = Element::new(kind.rescaled(k), block).unwrap();
            for i in -40..=40 {
                let p = i as f64 * 0.05;
                assert_abs_diff_eq!(g.cost(&[p]), f.cost(&[k * p]) / (k * k), epsilon = 1e-12);
            }
        }
        let f = Element::new(Kind::PairCoupling { weight: 2.0 }, BlockIndex::new(0, 2).unwrap()).unwrap();
        let g = Element::from_problem(Kind::PairCoupling { weight: 2.0 }, BlockIndex::new(0, 2).unwrap()).unwrap();
        assert_abs_diff_eq!(g.cost(&[0.3, -0.1]), f.cost(&[0.3 * k, -0.1 * k]) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn block_and_parameter_validation() {
        let b1 = BlockIndex::new(0, 1).unwrap();
        let b3 = BlockIndex::new(0, 3).unwrap();
        assert!(Element::new(Kind::PairCoupling { weight: 1.0 }, b3).is_err());
        assert!(Element::new(Kind::LinfEpigraph { delta_cost: 0.0 }, b1).is_err());
        assert!(Element::new(Kind::SoftThreshold { weight: -1.0 }, b1).is_err());
        assert!(Element::new(Kind::HuberL1 { weight: 1.0, half_width: 0.0 }, b1).is_err());
        assert!(Element::new(Kind::CappedL1 { height: 1.0, notch_width: 0.0 }, b1).is_err());
        assert!(Element::new(Kind::Quadratic { weight: 1.0, target: f64::NAN }, b1).is_err());
    }

    #[test]
    fn probe_convex_elements_pass() {
        let b1 = BlockIndex::new(0, 1).unwrap();
        let b2 = BlockIndex::new(0, 2).unwrap();
        let b5 = BlockIndex::new(0, 5).unwrap();
        let elems = [
            Element::new(Kind::HuberL1 { weight: 1.0, half_width: 0.3 }, b1).unwrap(),
            Element::new(Kind::SoftThreshold { weight: 0.5 }, b1).unwrap(),
            Element::new(Kind::Hinge { weight: 2.0, margin: 1.0 }, b1).unwrap(),
            Element::new(Kind::PairCoupling { weight: 4.0 }, b2).unwrap(),
            Element::new(Kind::LinfEpigraph { delta_cost: 0.3 }, b5).unwrap(),
        ];
        for e in elems {
            let center = vec![0.2; e.block.length];
            let rep = dissipativity_probe(&e, &center, 1000, 2.0, 1).unwrap();
            assert!(rep.pass, "{:?}: {}", e.kind, rep.max_ratio);
        }
    }

    #[test]
    fn probe_quadratic_unit_weight_is_zero_map() {
        let e = Element::new(
            Kind::Quadratic { weight: 1.0, target: 0.0 },
            BlockIndex::new(0, 1).unwrap(),
        )
        .unwrap();
        let rep = dissipativity_probe(&e, &[0.7], 200, 1.0, 3).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn probe_capped_fails_across_jump() {
        // ρ = v = 1: the prox jumps from 0.5 to 1.5 at d = 1.5. About d⋆ = 1.4
        // a point just past the jump has gain far above one.
        let e = Element::new(
            Kind::CappedL1 { height: 1.0, notch_width: 1.0 },
            BlockIndex::new(0, 1).unwrap(),
        )
        .unwrap();
        let rep = dissipativity_probe(&e, &[1.4], 1000, 2.0, 7).unwrap();
        assert!(!rep.pass);
        assert!(rep.max_ratio > 1.0);
        assert!(!e.dissipative());
        // About the origin |m(d)| ≤ |d| still holds.
        let rep0 = dissipativity_probe(&e, &[0.0], 1000, 2.0, 7).unwrap();
        assert!(rep0.pass);
    }

    #[test]
    fn probe_rejects_bad_input() {
        let e = Element::new(Kind::SoftThreshold { weight: 1.0 }, BlockIndex::new(0, 1).unwrap()).unwrap();
        assert!(dissipativity_probe(&e, &[0.0], 0, 1.0, 0).is_err());
        assert!(dissipativity_probe(&e, &[0.0, 1.0], 5, 1.0, 0).is_err());
    }
}
