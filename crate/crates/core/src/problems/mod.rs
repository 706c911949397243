//! Example systems and the independent solvers used to check them.

pub mod equalizer;
pub mod fir;
pub mod graph;
pub mod lasso;
pub mod oracle;
pub mod svm;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::algebra::PairTransform;
use crate::elements::Element;
use crate::engine::{run, DelayBank, RunOptions, System, DEFAULT_GAMMA};
use crate::interconnect::{absorb_sources, AffineInterconnection, ConstraintSet, SourceRelation};
use crate::{Error, Result};

pub use equalizer::{build_sparse_equalizer, EqualizerInstance, EqualizerParams};
pub use fir::{build_minimax_fir, build_minimax_fir_split, oracle_minimax_lp, FirParams, FirSpec};
pub use graph::{make_regular_graph, Graph};
pub use lasso::{
    build_lasso_augmented, build_lasso_huber, oracle_lasso, oracle_lasso_huber, LassoInstance, LassoParams,
    LassoVariant,
};
pub use svm::{build_svm_decentralized, oracle_svm_qp, SvmInstance, SvmParams};

/// Builds `G` from the constraints, absorbs the unit source at `sigma`
/// (which must be the last coordinate) and attaches the elements.
pub(crate) fn assemble(cs: &ConstraintSet, elements: Vec<Element>, sigma: Option<usize>) -> Result<System> {
    let ic = AffineInterconnection::from_constraints(cs);
    let ic = match sigma {
        Some(s) => {
            debug_assert_eq!(s + 1, cs.dim());
            absorb_sources(&ic, &[SourceRelation::primal_constant(s, 1.0)])?
        }
        None => ic,
    };
    System::new(ic, elements, PairTransform::canonical(), DEFAULT_GAMMA)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    LassoHuber,
    LassoAugmented,
    MinimaxFir,
    MinimaxFirSplit,
    Svm,
    SparseEqualizer,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 6] = [
        ProblemKind::LassoHuber,
        ProblemKind::LassoAugmented,
        ProblemKind::MinimaxFir,
        ProblemKind::MinimaxFirSplit,
        ProblemKind::Svm,
        ProblemKind::SparseEqualizer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::LassoHuber => "lasso_huber",
            ProblemKind::LassoAugmented => "lasso_augmented",
            ProblemKind::MinimaxFir => "minimax_fir",
            ProblemKind::MinimaxFirSplit => "minimax_fir_split",
            ProblemKind::Svm => "svm",
            ProblemKind::SparseEqualizer => "sparse_equalizer",
        }
    }

    pub fn has_oracle(self) -> bool {
        self != ProblemKind::SparseEqualizer
    }
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::param("problem", format!("unknown problem `{s}`")))
    }
}

/// Instance settings for every problem family.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemParams {
    pub lasso: LassoParams,
    pub fir: FirParams,
    pub svm: SvmParams,
    pub equalizer: EqualizerParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Lasso(LassoInstance, LassoVariant),
    Fir(FirSpec),
    FirSplit(FirSpec, f64),
    Svm(SvmInstance),
    Equalizer(EqualizerInstance),
}

/// A built example: instance, system, and the problem-level view of a readout.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ProblemKind,
    pub instance: Instance,
    pub system: System,
}

/// Solution-versus-oracle comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub problem: ProblemKind,
    pub solution: Vec<f64>,
    pub oracle_solution: Vec<f64>,
    /// `max |solution − oracle|`.
    pub solution_error: f64,
    pub metrics: BTreeMap<String, f64>,
    pub pass: bool,
}

/// Magnitude below which a LASSO coefficient counts as zero.
pub const SUPPORT_LEVEL: f64 = 1e-6;

pub fn support(x: &DVector<f64>) -> Vec<usize> {
    (0..x.len()).filter(|&i| x[i].abs() > SUPPORT_LEVEL).collect()
}

impl Scenario {
    pub fn build(kind: ProblemKind, params: &ProblemParams, gamma: f64) -> Result<Self> {
        let (instance, system) = match kind {
            ProblemKind::LassoHuber | ProblemKind::LassoAugmented => {
                let variant = if kind == ProblemKind::LassoHuber {
                    LassoVariant::Huber
                } else {
                    LassoVariant::Augmented
                };
                let inst = LassoInstance::random(&params.lasso)?;
                let sys = lasso::build_lasso(&inst, variant)?;
                (Instance::Lasso(inst, variant), sys)
            }
            ProblemKind::MinimaxFir => {
                let spec = FirSpec::lowpass(&params.fir)?;
                let sys = build_minimax_fir(&spec)?;
                (Instance::Fir(spec), sys)
            }
            ProblemKind::MinimaxFirSplit => {
                let spec = FirSpec::lowpass(&params.fir)?;
                let rho = params.fir.split_rho;
                let sys = build_minimax_fir_split(&spec, rho)?;
                (Instance::FirSplit(spec, rho), sys)
            }
            ProblemKind::Svm => {
                let inst = SvmInstance::random(&params.svm)?;
                let sys = build_svm_decentralized(&inst)?;
                (Instance::Svm(inst), sys)
            }
            ProblemKind::SparseEqualizer => {
                let inst = EqualizerInstance::from_params(&params.equalizer)?;
                let sys = build_sparse_equalizer(&inst)?;
                (Instance::Equalizer(inst), sys)
            }
        };
        Ok(Self {
            kind,
            instance,
            system: system.with_gamma(gamma)?,
        })
    }

    /// Problem variables from a primal readout: LASSO `x`, FIR cosine
    /// coefficients (averaged over copies when split), consensus `(w, b)`,
    /// equalizer taps.
    pub fn solution(&self, primal: &DVector<f64>) -> DVector<f64> {
        match &self.instance {
            Instance::Lasso(inst, _) => primal.rows(0, inst.cols()).into_owned(),
            Instance::Fir(spec) => primal.rows(0, spec.half_taps()).into_owned(),
            Instance::FirSplit(spec, _) => {
                let (a, b) = fir::split_copies(primal, spec.half_taps());
                (a + b) * 0.5
            }
            Instance::Svm(inst) => {
                let lay = svm::SvmLayout::new(inst);
                let (w, b) = svm::consensus(&lay.classifiers(primal));
                DVector::from_iterator(w.len() + 1, w.iter().copied().chain(std::iter::once(b)))
            }
            Instance::Equalizer(inst) => primal.rows(0, inst.taps).into_owned(),
        }
    }

    /// Problem-specific quality figures of a primal readout.
    pub fn metrics(&self, primal: &DVector<f64>) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        let sol = self.solution(primal);
        match &self.instance {
            Instance::Lasso(inst, variant) => {
                m.insert("objective".into(), inst.objective(*variant, &sol));
                m.insert("optimality_residual".into(), inst.optimality_residual(*variant, &sol));
                m.insert("support_size".into(), support(&sol).len() as f64);
            }
            Instance::Fir(spec) => {
                m.insert("max_error".into(), spec.max_error(&sol));
            }
            Instance::FirSplit(spec, _) => {
                let (a, b) = fir::split_copies(primal, spec.half_taps());
                m.insert("max_error".into(), spec.max_error(&sol));
                m.insert("copy_gap".into(), (a - b).amax());
            }
            Instance::Svm(inst) => {
                let lay = svm::SvmLayout::new(inst);
                let cls = lay.classifiers(primal);
                let (w, b) = svm::consensus(&cls);
                let pred = inst.predict(&w, b);
                let acc = pred.iter().zip(&inst.labels).filter(|(p, y)| p == y).count();
                m.insert("consensus_gap".into(), svm::consensus_gap(inst, &cls));
                m.insert("training_accuracy".into(), acc as f64 / inst.agents() as f64);
                m.insert("objective".into(), inst.objective(&w, b));
            }
            Instance::Equalizer(inst) => {
                let r = inst.convolution_matrix() * &sol - inst.target();
                let over = (0..r.len())
                    .map(|j| (r[j] - inst.upper[j]).max(inst.lower[j] - r[j]).max(0.0))
                    .fold(0.0, f64::max);
                m.insert("significant_taps".into(), equalizer::count_significant(&sol, 0.5 * inst.notch_width) as f64);
                m.insert("max_envelope_violation".into(), over);
            }
        }
        m
    }

    /// `d⋆` for monitoring: derived from the oracle minimizer for LASSO, a
    /// long synchronous run (tol 1e−12) elsewhere.
    pub fn reference_fixed_point(&self) -> Result<DVector<f64>> {
        if let Instance::Lasso(inst, variant) = &self.instance {
            let x = match variant {
                LassoVariant::Huber => oracle_lasso_huber(inst)?,
                LassoVariant::Augmented => oracle_lasso(inst)?,
            };
            return Ok(lasso::fixed_point_from_solution(inst, &x));
        }
        let res = run(
            &self.system,
            &mut DelayBank::synchronous(),
            &RunOptions::new(1e-12, 5_000_000),
        )?;
        if !res.converged() {
            return Err(Error::Oracle("reference run did not reach tolerance 1e-12".into()));
        }
        Ok(res.state.d)
    }

    /// Compares a primal readout with the problem's oracle.
    pub fn compare(&self, primal: &DVector<f64>) -> Result<Comparison> {
        let sol = self.solution(primal);
        let mut metrics = self.metrics(primal);
        let (oracle_sol, pass) = match &self.instance {
            Instance::Lasso(inst, LassoVariant::Huber) => {
                let x = oracle_lasso_huber(inst)?;
                let err = (&sol - &x).amax();
                (x, err <= 1e-4)
            }
            Instance::Lasso(inst, LassoVariant::Augmented) => {
                let x = oracle_lasso(inst)?;
                let same = support(&sol) == support(&x);
                metrics.insert("support_match".into(), if same { 1.0 } else { 0.0 });
                let err = (&sol - &x).amax();
                (x, same && err <= 1e-3)
            }
            Instance::Fir(spec) => {
                let lp = oracle_minimax_lp(spec)?;
                let ratio = spec.max_error(&sol) / lp.delta;
                let alt = fir::count_alternations(&spec.weighted_error(&sol), lp.delta, 0.05);
                metrics.insert("lp_optimum".into(), lp.delta);
                metrics.insert("max_error_ratio".into(), ratio);
                metrics.insert("alternations".into(), alt as f64);
                (lp.h, ratio <= 1.01)
            }
            Instance::FirSplit(spec, _) => {
                let lp = oracle_minimax_lp(spec)?;
                let ratio = spec.max_error(&sol) / lp.delta;
                metrics.insert("lp_optimum".into(), lp.delta);
                metrics.insert("max_error_ratio".into(), ratio);
                (lp.h, ratio <= 1.02)
            }
            Instance::Svm(inst) => {
                let qp = oracle_svm_qp(inst)?;
                let (w, b) = (sol.rows(0, inst.dim()).into_owned(), sol[inst.dim()]);
                let ours = inst.predict(&w, b);
                let theirs = inst.predict(&qp.w, qp.b);
                let agree = ours.iter().zip(&theirs).filter(|(a, b)| a == b).count() as f64 / inst.agents() as f64;
                metrics.insert("oracle_agreement".into(), agree);
                metrics.insert("oracle_objective".into(), inst.objective(&qp.w, qp.b));
                let mut x = qp.w.as_slice().to_vec();
                x.push(qp.b);
                (DVector::from_vec(x), agree == 1.0)
            }
            Instance::Equalizer(_) => {
                return Err(Error::NoOracle(
                    "sparse_equalizer is nonconvex; only local fixed points are computed".into(),
                ))
            }
        };
        Ok(Comparison {
            problem: self.kind,
            solution_error: (&sol - &oracle_sol).amax(),
            solution: sol.as_slice().to_vec(),
            oracle_solution: oracle_sol.as_slice().to_vec(),
            metrics,
            pass,
        })
    }
}
