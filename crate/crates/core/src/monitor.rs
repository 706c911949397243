//! Residual traces, error-system checks and norm-reduction certificates.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::elements::sample_ball;
use crate::engine::System;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub normalized_iter: f64,
    pub self_residual: f64,
    pub oracle_residual: Option<f64>,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Oracle residuals when every record has one, self-residuals otherwise.
    pub fn residuals(&self) -> Vec<f64> {
        if !self.records.is_empty() && self.records.iter().all(|r| r.oracle_residual.is_some()) {
            self.records.iter().map(|r| r.oracle_residual.unwrap()).collect()
        } else {
            self.records.iter().map(|r| r.self_residual).collect()
        }
    }

    /// Self-residual of the last record at or before `normalized_iter`.
    pub fn self_residual_at(&self, normalized_iter: f64) -> Option<f64> {
        let k = self
            .records
            .partition_point(|r| r.normalized_iter <= normalized_iter + 1e-9);
        if k == 0 {
            None
        } else {
            Some(self.records[k - 1].self_residual)
        }
    }
}

/// `‖d − d⋆‖₂²`.
pub fn oracle_residual(d: &DVector<f64>, d_star: &DVector<f64>) -> Result<f64> {
    if d.len() != d_star.len() {
        return Err(Error::Dimension {
            expected: d_star.len(),
            got: d.len(),
        });
    }
    Ok((d - d_star).norm_squared())
}

/// Relative fixed-point tolerance demanded of a supplied `d⋆`.
pub const FIXED_POINT_TOL: f64 = 1e-8;

fn check_fixed_point(system: &System, d_star: &DVector<f64>) -> Result<DVector<f64>> {
    let c_star = system.eval_elements(d_star)?;
    let residual = (system.interconnection().apply(&c_star)? - d_star).norm();
    if residual > FIXED_POINT_TOL * (1.0 + d_star.norm()) {
        return Err(Error::NotFixedPoint { residual });
    }
    Ok(c_star)
}

fn perturbation(
    rng: &mut ChaCha8Rng,
    n: usize,
    radius: f64,
    support: Option<&[usize]>,
) -> DVector<f64> {
    match support {
        None => DVector::from_vec(sample_ball(rng, n, radius)),
        Some(idx) => {
            let sub = sample_ball(rng, idx.len(), radius);
            let mut e = DVector::zeros(n);
            for (&i, v) in idx.iter().zip(sub) {
                e[i] = v;
            }
            e
        }
    }
}

fn check_samples(samples: usize, radius: f64) -> Result<()> {
    if samples == 0 {
        return Err(Error::param("samples", "must be >= 1"));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::param("radius", format!("must be finite and > 0, got {radius}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeutralityReport {
    pub samples: usize,
    /// Largest `|‖G c′‖ − ‖c′‖| / ‖c′‖`.
    pub max_deviation: f64,
    pub pass: bool,
}

/// Checks that the interconnection passes the element increments
/// `c′ = m(d⋆ + e) − m(d⋆)` without changing their norm.
pub fn certify_neutrality(
    system: &System,
    d_star: &DVector<f64>,
    samples: usize,
    radius: f64,
    seed: u64,
) -> Result<NeutralityReport> {
    check_samples(samples, radius)?;
    let c_star = check_fixed_point(system, d_star)?;
    let g = system.interconnection().matrix();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation: f64 = 0.0;
    for _ in 0..samples {
        let e = perturbation(&mut rng, d_star.len(), radius, None);
        let c_inc = system.eval_elements(&(d_star + e))? - &c_star;
        let nc = c_inc.norm();
        if nc == 0.0 {
            continue;
        }
        let nd = (g * &c_inc).norm();
        max_deviation = max_deviation.max((nd - nc).abs() / nc);
    }
    Ok(NeutralityReport {
        samples,
        max_deviation,
        pass: max_deviation <= 1e-10,
    })
}

/// Outcome of sampling `‖m(d⋆ + e) − m(d⋆)‖ / ‖e‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReductionCertificate {
    pub samples: usize,
    pub max_ratio: f64,
    /// Samples with ratio below `1 − 1e−12`.
    pub strict_count: usize,
    /// Every ratio at most `1 + 1e−12`.
    pub weak_pass: bool,
    /// Every sample strictly reduced.
    pub strict_pass: bool,
}

pub const CERT_SLACK: f64 = 1e-12;

/// Samples perturbations `e ≠ 0` (restricted to `support` if given) and
/// records how much the elements shrink them.
pub fn certify_norm_reduction(
    system: &System,
    d_star: &DVector<f64>,
    samples: usize,
    radius: f64,
    seed: u64,
    support: Option<&[usize]>,
) -> Result<NormReductionCertificate> {
    check_samples(samples, radius)?;
    if let Some(idx) = support {
        if idx.is_empty() || idx.iter().any(|&i| i >= d_star.len()) {
            return Err(Error::param("support", "must be nonempty and in range"));
        }
    }
    let c_star = check_fixed_point(system, d_star)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio: f64 = 0.0;
    let mut strict_count = 0;
    let mut taken = 0;
    while taken < samples {
        let e = perturbation(&mut rng, d_star.len(), radius, support);
        let ne = e.norm();
        if ne == 0.0 {
            continue;
        }
        taken += 1;
        let c_inc = system.eval_elements(&(d_star + e))? - &c_star;
        let ratio = c_inc.norm() / ne;
        max_ratio = max_ratio.max(ratio);
        if ratio < 1.0 - CERT_SLACK {
            strict_count += 1;
        }
    }
    Ok(NormReductionCertificate {
        samples,
        max_ratio,
        strict_count,
        weak_pass: max_ratio <= 1.0 + CERT_SLACK,
        strict_pass: strict_count == samples,
    })
}

pub const STAT_THRESHOLDS: [f64; 3] = [1e-3, 1e-6, 1e-9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub monotone: bool,
    /// First iteration at or below each of [`STAT_THRESHOLDS`].
    pub iters_to: [Option<u64>; 3],
    pub final_residual: f64,
}

/// Monotonicity and threshold crossings of the trace's residual column.
pub fn trace_stats(trace: &RunTrace) -> Result<TraceStats> {
    if trace.is_empty() {
        return Err(Error::param("trace", "must be nonempty"));
    }
    let r = trace.residuals();
    let monotone = r.windows(2).all(|w| w[1] <= w[0] + CERT_SLACK);
    let iters_to = STAT_THRESHOLDS.map(|t| {
        r.iter()
            .position(|&x| x <= t)
            .map(|k| trace.records[k].iter)
    });
    Ok(TraceStats {
        monotone,
        iters_to,
        final_residual: *r.last().unwrap(),
    })
}

/// Synchronous trajectory of the error system, whose elements are the
/// originals shifted so that `e = 0` is the fixed point:
/// `e ← (1 − γ)e + γ·G(m(d⋆ + e) − m(d⋆))`. Returns `e[0..=iters]`.
pub fn error_trajectory(
    system: &System,
    d_star: &DVector<f64>,
    e0: &DVector<f64>,
    iters: usize,
) -> Result<Vec<DVector<f64>>> {
    let c_star = system.eval_elements(d_star)?;
    let g = system.interconnection().matrix();
    let gamma = system.gamma();
    let mut e = e0.clone();
    let mut out = Vec::with_capacity(iters + 1);
    out.push(e.clone());
    for _ in 0..iters {
        let c_inc = system.eval_elements(&(d_star + &e))? - &c_star;
        e = e * (1.0 - gamma) + (g * c_inc) * gamma;
        out.push(e.clone());
    }
    Ok(out)
}

/// Synchronous trajectory `d[0..=iters]` of the original system.
pub fn state_trajectory(system: &System, d0: &DVector<f64>, iters: usize) -> Result<Vec<DVector<f64>>> {
    let mut st = crate::engine::SystemState::from_vector(d0.clone());
    let mut out = Vec::with_capacity(iters + 1);
    out.push(st.d.clone());
    for _ in 0..iters {
        st = crate::engine::step_sync(system, &st)?;
        out.push(st.d.clone());
    }
    Ok(out)
}

/// Seed-averaged self-residual sampled at the given normalized iterations;
/// a trace that already stopped contributes its final value.
pub fn mean_residual_curve(traces: &[RunTrace], at: &[f64]) -> Vec<f64> {
    at.iter()
        .map(|&x| {
            let vals: Vec<f64> = traces
                .iter()
                .filter_map(|t| t.self_residual_at(x))
                .collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        })
        .collect()
}

/// Trailing moving average over `window` samples.
pub fn moving_average(x: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    for i in 0..x.len() {
        acc += x[i];
        if i >= w {
            acc -= x[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}
