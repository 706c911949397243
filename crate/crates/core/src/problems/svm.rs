//! Decentralized soft-margin SVM training: one training vector per agent,
//! local classifier copies tied along the edges of a communication graph.
//!
//! Per agent `i` the domain coordinates are `(wᵢ, bᵢ)`. Image coordinates
//! are the margins `zᵢ = yᵢ(wᵢᵀxᵢ + bᵢ)` and, for every edge and classifier
//! coordinate, a pair of copies coupled by `PairCoupling(1/ρ)`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{make_regular_graph, Graph};
use super::{assemble, oracle};
use crate::algebra::BlockIndex;
use crate::elements::{Element, Kind};
use crate::engine::System;
use crate::interconnect::ConstraintSet;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub agents: usize,
    pub degree: usize,
    /// Hinge weight.
    pub c: f64,
    /// Coupling looseness; small values tie neighbouring copies tightly.
    pub rho: f64,
    /// Class centers sit at `±(separation, 0)`.
    pub separation: f64,
    pub spread: f64,
    /// Points with `y·x₁` below this are redrawn, which keeps the data separable.
    pub min_offset: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            agents: 30,
            degree: 4,
            c: 1.0,
            rho: 0.01,
            separation: 2.0,
            spread: 1.0,
            min_offset: 0.5,
            seed: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmInstance {
    /// One training vector per row.
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub graph: Graph,
    pub rho: f64,
    pub c: f64,
}

impl SvmInstance {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>, graph: Graph, rho: f64, c: f64) -> Result<Self> {
        let inst = Self {
            features,
            labels,
            graph,
            rho,
            c,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.agents();
        if n == 0 || self.features.ncols() == 0 {
            return Err(Error::param("features", "need at least one agent and one feature"));
        }
        if self.labels.len() != n || self.graph.nodes != n {
            return Err(Error::Dimension {
                expected: n,
                got: if self.labels.len() != n { self.labels.len() } else { self.graph.nodes },
            });
        }
        if self.labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::param("labels", "must be ±1"));
        }
        if n > 1 && !self.graph.is_connected() {
            return Err(Error::Disconnected);
        }
        if !(self.rho > 0.0) {
            return Err(Error::param("rho", format!("must be > 0 (inf decouples), got {}", self.rho)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::param("c", format!("must be finite and >= 0, got {}", self.c)));
        }
        Ok(())
    }

    /// Two Gaussian blobs with alternating labels on a circulant graph.
    pub fn random(p: &SvmParams) -> Result<Self> {
        let graph = make_regular_graph(p.agents, p.degree, p.seed)?;
        if !(p.spread > 0.0) {
            return Err(Error::param("spread", "must be > 0"));
        }
        if p.min_offset >= p.separation + 4.0 * p.spread {
            return Err(Error::param("min_offset", "too large for the blob geometry"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let noise = Normal::new(0.0, p.spread).expect("valid normal");
        let labels: Vec<f64> = (0..p.agents).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let mut features = DMatrix::zeros(p.agents, 2);
        for i in 0..p.agents {
            let y = labels[i];
            loop {
                let x0 = y * p.separation + noise.sample(&mut rng);
                let x1 = noise.sample(&mut rng);
                if y * x0 >= p.min_offset {
                    features[(i, 0)] = x0;
                    features[(i, 1)] = x1;
                    break;
                }
            }
        }
        Self::new(features, labels, graph, p.rho, p.c)
    }

    pub fn agents(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn objective(&self, w: &DVector<f64>, b: f64) -> f64 {
        let hinge: f64 = (0..self.agents())
            .map(|i| (1.0 - self.labels[i] * (self.features.row(i).transpose().dot(w) + b)).max(0.0))
            .sum();
        0.5 * w.norm_squared() + self.c * hinge
    }

    pub fn predict(&self, w: &DVector<f64>, b: f64) -> Vec<f64> {
        (0..self.agents())
            .map(|i| if self.features.row(i).transpose().dot(w) + b >= 0.0 { 1.0 } else { -1.0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvmLayout {
    pub agents: usize,
    pub dim: usize,
    /// `(wᵢ, bᵢ)` of agent `i` starts at `i·(dim + 1)`.
    pub classifiers: BlockIndex,
    pub margins: BlockIndex,
    /// Copies of edge `e`, coordinate `k` sit at `copies.offset + 2((dim + 1)e + k)`.
    pub copies: BlockIndex,
}

impl SvmLayout {
    pub fn new(inst: &SvmInstance) -> Self {
        let n = inst.agents();
        let q = inst.dim() + 1;
        Self {
            agents: n,
            dim: inst.dim(),
            classifiers: BlockIndex { offset: 0, length: n * q },
            margins: BlockIndex { offset: n * q, length: n },
            copies: BlockIndex {
                offset: n * q + n,
                length: 2 * q * inst.graph.edges.len(),
            },
        }
    }

    /// `(w, b)` of every agent from a primal readout.
    pub fn classifiers(&self, primal: &DVector<f64>) -> Vec<(DVector<f64>, f64)> {
        let q = self.dim + 1;
        (0..self.agents)
            .map(|i| {
                let w = DVector::from_fn(self.dim, |k, _| primal[i * q + k]);
                (w, primal[i * q + self.dim])
            })
            .collect()
    }
}

pub fn build_svm_decentralized(inst: &SvmInstance) -> Result<System> {
    inst.validate()?;
    let lay = SvmLayout::new(inst);
    let n = inst.agents();
    let dim = inst.dim();
    let q = dim + 1;
    let mut cs = ConstraintSet::new(lay.copies.end());
    for i in 0..n {
        let y = inst.labels[i];
        let mut terms: Vec<(usize, f64)> = (0..dim).map(|k| (i * q + k, y * inst.features[(i, k)])).collect();
        terms.push((i * q + dim, y));
        cs.define(lay.margins.offset + i, &terms)?;
    }
    for (e, &(i, j)) in inst.graph.edges.iter().enumerate() {
        for k in 0..q {
            let at = lay.copies.offset + 2 * (q * e + k);
            cs.define(at, &[(i * q + k, 1.0)])?;
            cs.define(at + 1, &[(j * q + k, 1.0)])?;
        }
    }

    let w_cost = Kind::Quadratic {
        weight: 1.0 / n as f64,
        target: 0.0,
    };
    let b_cost = Kind::Quadratic {
        weight: 0.0,
        target: 0.0,
    };
    let hinge = Kind::Hinge {
        weight: inst.c,
        margin: 1.0,
    };
    let coupling = Kind::PairCoupling { weight: 1.0 / inst.rho };
    let mut elements = Vec::new();
    for i in 0..n {
        for k in 0..dim {
            elements.push(Element::from_problem(w_cost, BlockIndex::new(i * q + k, 1)?)?);
        }
        elements.push(Element::from_problem(b_cost, BlockIndex::new(i * q + dim, 1)?)?);
    }
    for i in 0..n {
        elements.push(Element::from_problem(hinge, BlockIndex::new(lay.margins.offset + i, 1)?)?);
    }
    for p in 0..lay.copies.length / 2 {
        elements.push(Element::from_problem(coupling, BlockIndex::new(lay.copies.offset + 2 * p, 2)?)?);
    }
    assemble(&cs, elements, None)
}

/// Average of the agents' classifiers.
pub fn consensus(classifiers: &[(DVector<f64>, f64)]) -> (DVector<f64>, f64) {
    let n = classifiers.len() as f64;
    let dim = classifiers[0].0.len();
    let mut w = DVector::zeros(dim);
    let mut b = 0.0;
    for (wi, bi) in classifiers {
        w += wi;
        b += bi;
    }
    (w / n, b / n)
}

/// Largest `‖(wᵢ, bᵢ) − (wⱼ, bⱼ)‖` over graph edges.
pub fn consensus_gap(inst: &SvmInstance, classifiers: &[(DVector<f64>, f64)]) -> f64 {
    inst.graph
        .edges
        .iter()
        .map(|&(i, j)| {
            let dw = (&classifiers[i].0 - &classifiers[j].0).norm_squared();
            let db = (classifiers[i].1 - classifiers[j].1).powi(2);
            (dw + db).sqrt()
        })
        .fold(0.0, f64::max)
}

/// Centralized optimum from the dual QP.
pub fn oracle_svm_qp(inst: &SvmInstance) -> Result<oracle::SvmSolution> {
    inst.validate()?;
    oracle::svm_dual_qp(&inst.features, &inst.labels, inst.c, 1e-10, 5_000_000)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_instance_shape() {
        let inst = SvmInstance::random(&SvmParams::default()).unwrap();
        assert_eq!(inst.agents(), 30);
        assert_eq!(inst.graph.edges.len(), 60);
        assert!(inst.graph.degrees().iter().all(|&d| d == 4));
        for i in 0..30 {
            assert!(inst.labels[i] * inst.features[(i, 0)] >= 0.5);
        }
        let sys = build_svm_decentralized(&inst).unwrap();
        assert_eq!(sys.dim(), 90 + 30 + 360);
    }

    #[test]
    fn oracle_separates_default_data() {
        let inst = SvmInstance::random(&SvmParams::default()).unwrap();
        let sol = oracle_svm_qp(&inst).unwrap();
        assert_eq!(inst.predict(&sol.w, sol.b), inst.labels);
    }

    #[test]
    fn disconnected_graph_rejected() {
        let g = Graph::new(4, [(0, 1), (2, 3)]).unwrap();
        let x = DMatrix::from_row_slice(4, 1, &[1.0, 2.0, -1.0, -2.0]);
        let err = SvmInstance::new(x, vec![1.0, 1.0, -1.0, -1.0], g, 0.1, 1.0).unwrap_err();
        assert_eq!(err, Error::Disconnected);
    }
}
