//! Sparse channel equalizer (nonconvex).
//!
//! Taps `x` carry a capped-ℓ1 cost; the overall response error `r = Gx − t`
//! appears twice as image coordinates, once with a soft upper bound and once
//! with a soft lower bound.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::assemble;
use crate::algebra::BlockIndex;
use crate::elements::{Element, Kind, Side};
use crate::engine::System;
use crate::interconnect::ConstraintSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// `0.8ⁿ` convolved with `[1, 0.5, 0.25]`, truncated.
    MinimumPhase,
    UnitImpulse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EqualizerParams {
    pub channel: Channel,
    pub channel_len: usize,
    pub taps: usize,
    pub target_delay: usize,
    /// Symmetric envelope half-width around the target.
    pub envelope: f64,
    pub rho: f64,
    pub notch_width: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
}

impl Default for EqualizerParams {
    fn default() -> Self {
        Self {
            channel: Channel::MinimumPhase,
            channel_len: 32,
            taps: 16,
            target_delay: 0,
            envelope: 0.1,
            rho: 0.1,
            notch_width: 0.05,
            rho_plus: 0.1,
            rho_minus: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualizerInstance {
    pub g: Vec<f64>,
    pub taps: usize,
    pub target_delay: usize,
    /// Per output sample bounds on `r = Gx − target`.
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub rho: f64,
    pub notch_width: f64,
    pub rho_plus: f64,
    pub rho_minus: f64,
}

pub fn channel(kind: Channel, len: usize) -> Vec<f64> {
    match kind {
        Channel::UnitImpulse => {
            let mut g = vec![0.0; len];
            g[0] = 1.0;
            g
        }
        Channel::MinimumPhase => {
            let geo: Vec<f64> = (0..len).map(|n| 0.8f64.powi(n as i32)).collect();
            let ker = [1.0, 0.5, 0.25];
            (0..len)
                .map(|n| (0..ker.len()).filter(|&k| k <= n).map(|k| ker[k] * geo[n - k]).sum())
                .collect()
        }
    }
}

impl EqualizerInstance {
    pub fn from_params(p: &EqualizerParams) -> Result<Self> {
        if p.channel_len == 0 {
            return Err(Error::param("channel_len", "must be >= 1"));
        }
        let g = channel(p.channel, p.channel_len);
        let nout = g.len() + p.taps.max(1) - 1;
        let inst = Self {
            g,
            taps: p.taps,
            target_delay: p.target_delay,
            upper: vec![p.envelope; nout],
            lower: vec![-p.envelope; nout],
            rho: p.rho,
            notch_width: p.notch_width,
            rho_plus: p.rho_plus,
            rho_minus: p.rho_minus,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn outputs(&self) -> usize {
        self.g.len() + self.taps - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.g.is_empty() || self.taps == 0 {
            return Err(Error::param("taps", "channel and equalizer must be nonempty"));
        }
        let nout = self.outputs();
        if self.target_delay >= nout {
            return Err(Error::param("target_delay", format!("must be < {nout}")));
        }
        if self.upper.len() != nout || self.lower.len() != nout {
            return Err(Error::Dimension {
                expected: nout,
                got: self.upper.len().min(self.lower.len()),
            });
        }
        // r = 0 is the exact target; the envelope must admit it.
        if let Some(j) = (0..nout).find(|&j| !(self.lower[j] <= 0.0 && 0.0 <= self.upper[j])) {
            return Err(Error::param(
                "envelope",
                format!("infeasible at the target impulse (output {j})"),
            ));
        }
        if !(self.notch_width > 0.0) {
            return Err(Error::param("notch_width", "must be > 0"));
        }
        for (name, v) in [("rho", self.rho), ("rho_plus", self.rho_plus), ("rho_minus", self.rho_minus)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Full convolution matrix, `outputs × taps`.
    pub fn convolution_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.outputs(), self.taps);
        for j in 0..self.taps {
            for (i, &gi) in self.g.iter().enumerate() {
                m[(i + j, j)] = gi;
            }
        }
        m
    }

    pub fn target(&self) -> DVector<f64> {
        let mut t = DVector::zeros(self.outputs());
        t[self.target_delay] = 1.0;
        t
    }

    /// Unconstrained least-squares equalizer.
    pub fn least_squares(&self) -> Result<DVector<f64>> {
        let svd = self.convolution_matrix().svd(true, true);
        svd.solve(&self.target(), 1e-12)
            .map_err(|e| Error::Oracle(e.to_string()))
    }
}

/// Taps with magnitude above `level`.
pub fn count_significant(x: &DVector<f64>, level: f64) -> usize {
    x.iter().filter(|v| v.abs() > level).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EqualizerLayout {
    pub x: BlockIndex,
    pub r_plus: BlockIndex,
    pub r_minus: BlockIndex,
}

impl EqualizerLayout {
    pub fn new(inst: &EqualizerInstance) -> Self {
        let l = inst.taps;
        let nout = inst.outputs();
        Self {
            x: BlockIndex { offset: 0, length: l },
            r_plus: BlockIndex { offset: l, length: nout },
            r_minus: BlockIndex {
                offset: l + nout,
                length: nout,
            },
        }
    }
}

pub fn build_sparse_equalizer(inst: &EqualizerInstance) -> Result<System> {
    inst.validate()?;
    let lay = EqualizerLayout::new(inst);
    let sigma = lay.r_minus.end();
    let gm = inst.convolution_matrix();
    let t = inst.target();
    let mut cs = ConstraintSet::new(sigma + 1);
    for j in 0..inst.outputs() {
        let mut terms: Vec<(usize, f64)> = (0..inst.taps).map(|k| (k, gm[(j, k)])).collect();
        terms.push((sigma, -t[j]));
        cs.define(lay.r_plus.offset + j, &terms)?;
        cs.define(lay.r_minus.offset + j, &terms)?;
    }
    let mut elements = Vec::new();
    let capped = Kind::CappedL1 {
        height: inst.rho,
        notch_width: inst.notch_width,
    };
    for k in 0..inst.taps {
        elements.push(Element::from_problem(capped, BlockIndex::new(k, 1)?)?);
    }
    for j in 0..inst.outputs() {
        let up = Kind::OneSidedPenalty {
            weight: inst.rho_plus,
            bound: inst.upper[j],
            side: Side::Upper,
        };
        elements.push(Element::from_problem(up, BlockIndex::new(lay.r_plus.offset + j, 1)?)?);
    }
    for j in 0..inst.outputs() {
        let lo = Kind::OneSidedPenalty {
            weight: inst.rho_minus,
            bound: inst.lower[j],
            side: Side::Lower,
        };
        elements.push(Element::from_problem(lo, BlockIndex::new(lay.r_minus.offset + j, 1)?)?);
    }
    assemble(&cs, elements, Some(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_and_convolution() {
        let g = channel(Channel::MinimumPhase, 4);
        let expect = [1.0, 0.8 + 0.5, 0.64 + 0.4 + 0.25, 0.512 + 0.32 + 0.2];
        for (a, b) in g.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let inst = EqualizerInstance::from_params(&EqualizerParams {
            channel_len: 3,
            taps: 2,
            ..EqualizerParams::default()
        })
        .unwrap();
        let m = inst.convolution_matrix();
        assert_eq!(m.shape(), (4, 2));
        assert_eq!(m[(1, 1)], inst.g[0]);
        assert_eq!(m[(3, 1)], inst.g[2]);
        assert_eq!(m[(3, 0)], 0.0);
    }

    #[test]
    fn infeasible_envelope_rejected() {
        let mut inst = EqualizerInstance::from_params(&EqualizerParams::default()).unwrap();
        inst.upper[3] = -0.1;
        assert!(build_sparse_equalizer(&inst).is_err());
        assert!(EqualizerInstance::from_params(&EqualizerParams {
            envelope: -0.1,
            ..EqualizerParams::default()
        })
        .is_err());
    }
}
