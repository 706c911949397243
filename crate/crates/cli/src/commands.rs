use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use conserv_core::elements::{dissipativity_probe, Kind};
use conserv_core::engine::{self, DelayBank, Mode, RunOptions, RunResult, RunStatus};
use conserv_core::interconnect::{check_orthonormal, OrthonormalityReport};
use conserv_core::monitor::{certify_neutrality, certify_norm_reduction, NeutralityReport, NormReductionCertificate, FIXED_POINT_TOL};
use conserv_core::problems::{Comparison, ProblemKind, Scenario};

use crate::config::RunConfig;
use crate::trace::write_trace;
use crate::{CliError, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const COMPARE_FILE: &str = "compare.json";

/// Samples drawn by each certificate and probe.
const CERT_SAMPLES: usize = 100;
const PROBE_SAMPLES: usize = 1000;
const PROBE_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: ProblemKind,
    pub status: RunStatus,
    pub converged: bool,
    pub iterations: u64,
    pub normalized_iterations: f64,
    pub final_residual: Option<f64>,
    /// Readout `a`, present unless the run diverged.
    pub primal: Option<Vec<f64>>,
    /// Readout `b`.
    pub dual: Option<Vec<f64>>,
    /// Problem variables extracted from the primal readout.
    pub solution: Option<Vec<f64>>,
    pub metrics: BTreeMap<String, f64>,
    pub seed: u64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub kind: String,
    pub elements: usize,
    pub max_ratio: f64,
    pub pass: bool,
    /// Nonconvex kinds are not expected to pass; they do not affect the verdict.
    pub informational: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub problem: ProblemKind,
    pub iterations: u64,
    pub fixed_point_residual: f64,
    pub orthonormality: OrthonormalityReport,
    pub neutrality: NeutralityReport,
    pub norm_reduction: NormReductionCertificate,
    /// Only systems made of dissipative elements are expected to reduce norms.
    pub norm_reduction_applicable: bool,
    pub dissipativity: Vec<ProbeSummary>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub iterations: u64,
    #[serde(flatten)]
    pub comparison: Comparison,
}

fn delay_bank(cfg: &RunConfig) -> Result<DelayBank> {
    Ok(match cfg.mode {
        Mode::Sync => DelayBank::synchronous(),
        Mode::Async => DelayBank::new(Mode::Async, cfg.p, cfg.seed, cfg.granularity)?,
    })
}

fn prepare(cfg: &RunConfig) -> Result<Scenario> {
    cfg.validate()?;
    let sc = Scenario::build(cfg.problem, &cfg.instance, cfg.gamma)?;
    std::fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io {
        path: cfg.out.clone(),
        source,
    })?;
    Ok(sc)
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| CliError::Io { path, source })
}

fn not_converged(res: &RunResult) -> CliError {
    CliError::NotConverged(match res.final_residual {
        Some(r) => format!(
            "status {:?} after {} iterations, last self-residual {r:e}",
            res.status, res.state.iter
        ),
        None => format!("status {:?} before the first iteration", res.status),
    })
}

/// Runs to the tolerance, writing the trace and a summary to the output
/// directory whether or not the run converges.
pub fn run(cfg: &RunConfig) -> Result<Summary> {
    let sc = prepare(cfg)?;
    let mut opts = RunOptions::new(cfg.tol, cfg.max_iters);
    opts.record_objective = cfg.objective;
    opts.force_readout = true;
    if cfg.reference {
        opts.reference = Some(sc.reference_fixed_point()?);
    }
    let res = engine::run(&sc.system, &mut delay_bank(cfg)?, &opts)?;
    write_trace(&cfg.out.join(TRACE_FILE), &res.trace)?;

    let primal = res.primal();
    let summary = Summary {
        problem: cfg.problem,
        status: res.status,
        converged: res.converged(),
        iterations: res.state.iter,
        normalized_iterations: res.state.normalized_iter,
        final_residual: res.final_residual,
        primal: primal.as_ref().map(|p| p.as_slice().to_vec()),
        dual: res.readout.as_deref().map(|r| engine::dual(r).as_slice().to_vec()),
        solution: primal.as_ref().map(|p| sc.solution(p).as_slice().to_vec()),
        metrics: primal.as_ref().map(|p| sc.metrics(p)).unwrap_or_default(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    write_json(cfg.out.join(SUMMARY_FILE), &summary)?;
    if !res.converged() {
        return Err(not_converged(&res));
    }
    Ok(summary)
}

fn kind_name(kind: &Kind) -> &'static str {
    match kind {
        Kind::Quadratic { .. } => "quadratic",
        Kind::HuberL1 { .. } => "huber_l1",
        Kind::SoftThreshold { .. } => "soft_threshold",
        Kind::LinfEpigraph { .. } => "linf_epigraph",
        Kind::Hinge { .. } => "hinge",
        Kind::PairCoupling { .. } => "pair_coupling",
        Kind::OneSidedPenalty { .. } => "one_sided_penalty",
        Kind::CappedL1 { .. } => "capped_l1",
    }
}

/// Finds a fixed point, then checks orthonormality of the interconnection,
/// neutrality, norm reduction about the fixed point and per-element
/// dissipativity.
pub fn verify(cfg: &RunConfig) -> Result<VerifyReport> {
    let sc = prepare(cfg)?;
    let sys = &sc.system;
    // The certificates demand a fixed point to FIXED_POINT_TOL.
    let opts = RunOptions::new(cfg.tol.min(0.1 * FIXED_POINT_TOL), cfg.max_iters);
    let res = engine::run(sys, &mut delay_bank(cfg)?, &opts)?;
    if !res.converged() {
        return Err(not_converged(&res));
    }
    let d = &res.state.d;

    let orthonormality = check_orthonormal(sys.interconnection().matrix(), 1e-10);
    let neutrality = certify_neutrality(sys, d, CERT_SAMPLES, PROBE_RADIUS, cfg.seed)?;
    let norm_reduction = certify_norm_reduction(sys, d, CERT_SAMPLES, PROBE_RADIUS, cfg.seed, None)?;

    let mut probes: BTreeMap<&'static str, ProbeSummary> = BTreeMap::new();
    for (i, e) in sys.elements().iter().enumerate() {
        let center: Vec<f64> = e.block.range().map(|j| d[j]).collect();
        let rep = dissipativity_probe(e, &center, PROBE_SAMPLES, PROBE_RADIUS, cfg.seed.wrapping_add(i as u64))?;
        let entry = probes.entry(kind_name(&e.kind)).or_insert_with(|| ProbeSummary {
            kind: kind_name(&e.kind).to_owned(),
            elements: 0,
            max_ratio: 0.0,
            pass: true,
            informational: !e.dissipative(),
        });
        entry.elements += 1;
        entry.max_ratio = entry.max_ratio.max(rep.max_ratio);
        entry.pass &= rep.pass;
    }
    let dissipativity: Vec<ProbeSummary> = probes.into_values().collect();
    let norm_reduction_applicable = sys.elements().iter().all(|e| e.dissipative());

    let pass = orthonormality.pass
        && neutrality.pass
        && (norm_reduction.weak_pass || !norm_reduction_applicable)
        && dissipativity.iter().all(|p| p.pass || p.informational);
    let report = VerifyReport {
        problem: cfg.problem,
        iterations: res.state.iter,
        fixed_point_residual: res.final_residual.unwrap_or(f64::NAN),
        orthonormality,
        neutrality,
        norm_reduction,
        norm_reduction_applicable,
        dissipativity,
        pass,
    };
    write_json(cfg.out.join(VERIFY_FILE), &report)?;
    if !pass {
        return Err(CliError::CheckFailed(format!(
            "see {}",
            cfg.out.join(VERIFY_FILE).display()
        )));
    }
    Ok(report)
}

/// Runs to the tolerance and compares the result with the problem's
/// reference solver.
pub fn compare(cfg: &RunConfig) -> Result<CompareReport> {
    if !cfg.problem.has_oracle() {
        cfg.validate()?;
        return Err(conserv_core::Error::NoOracle(format!(
            "{} is nonconvex; only local fixed points are computed",
            cfg.problem
        ))
        .into());
    }
    let sc = prepare(cfg)?;
    let res = engine::run(&sc.system, &mut delay_bank(cfg)?, &RunOptions::new(cfg.tol, cfg.max_iters))?;
    let Some(primal) = res.primal() else {
        return Err(not_converged(&res));
    };
    let report = CompareReport {
        iterations: res.state.iter,
        comparison: sc.compare(&primal)?,
    };
    write_json(cfg.out.join(COMPARE_FILE), &report)?;
    if !report.comparison.pass {
        return Err(CliError::CheckFailed(format!(
            "{} does not match its reference solution (max difference {:e})",
            cfg.problem, report.comparison.solution_error
        )));
    }
    Ok(report)
}

