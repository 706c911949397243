//! Iteration of `d ← (1 − γ)·d + γ·(G m(d) + s)` with synchronous or
//! Bernoulli-triggered sample-and-hold registers on the element inputs.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra::{check_partition, BlockIndex, DecisionPair, PairTransform, TransformedPair};
use crate::elements::Element;
use crate::interconnect::AffineInterconnection;
use crate::monitor::{oracle_residual, RunTrace, TraceRecord};
use crate::{Error, Result};

/// Default averaging weight.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Elements attached to an interconnection.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    interconnection: AffineInterconnection,
    elements: Vec<Element>,
    transform: PairTransform,
    gamma: f64,
    owner: Vec<usize>,
}

impl System {
    pub fn new(
        interconnection: AffineInterconnection,
        elements: Vec<Element>,
        transform: PairTransform,
        gamma: f64,
    ) -> Result<Self> {
        let n = interconnection.dim();
        let blocks: Vec<BlockIndex> = elements.iter().map(|e| e.block).collect();
        check_partition(&blocks, n)?;
        check_gamma(gamma)?;
        let mut owner = vec![0; n];
        for (k, e) in elements.iter().enumerate() {
            for i in e.block.range() {
                owner[i] = k;
            }
        }
        Ok(Self {
            interconnection,
            elements,
            transform,
            gamma,
            owner,
        })
    }

    pub fn dim(&self) -> usize {
        self.interconnection.dim()
    }

    pub fn interconnection(&self) -> &AffineInterconnection {
        &self.interconnection
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn transform(&self) -> PairTransform {
        self.transform
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        check_gamma(gamma)?;
        self.gamma = gamma;
        Ok(())
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.set_gamma(gamma)?;
        Ok(self)
    }

    /// Same elements on a different interconnection of equal size.
    pub fn with_interconnection(&self, ic: AffineInterconnection) -> Result<Self> {
        if ic.dim() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: ic.dim(),
            });
        }
        Self::new(ic, self.elements.clone(), self.transform, self.gamma)
    }

    fn check_dim(&self, d: &DVector<f64>) -> Result<()> {
        if d.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: d.len(),
            });
        }
        Ok(())
    }

    fn eval_into(&self, d: &DVector<f64>, c: &mut DVector<f64>) {
        for e in &self.elements {
            let r = e.block.range();
            e.eval(&d.as_slice()[r.clone()], &mut c.as_mut_slice()[r]);
        }
    }

    /// `c = m(d)` blockwise.
    pub fn eval_elements(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(d)?;
        let mut c = DVector::zeros(d.len());
        self.eval_into(d, &mut c);
        Ok(c)
    }

    /// Undamped map `G m(d) + s`.
    pub fn map(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        let c = self.eval_elements(d)?;
        self.interconnection.apply(&c)
    }

    /// `‖G m(d) + s − d‖₂`.
    pub fn self_residual(&self, d: &DVector<f64>) -> Result<f64> {
        Ok((self.map(d)? - d).norm())
    }

    /// Proximal points `p = (m(d) + d)/2` of every element.
    pub fn prox_points(&self, d: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(d)?;
        let mut p = DVector::zeros(d.len());
        for e in &self.elements {
            let r = e.block.range();
            e.prox(&d.as_slice()[r.clone()], &mut p.as_mut_slice()[r]);
        }
        Ok(p)
    }

    /// Total cost in problem units, `Σ f(√2·p) = 2·Σ g(p)`.
    ///
    /// Meaningful for the canonical transform, where each element's system
    /// cost is half its problem cost at the scaled argument.
    pub fn objective(&self, d: &DVector<f64>) -> Result<f64> {
        let p = self.prox_points(d)?;
        Ok(2.0
            * self
                .elements
                .iter()
                .map(|e| e.cost(&p.as_slice()[e.block.range()]))
                .sum::<f64>())
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::param("gamma", format!("must lie in (0, 1], got {gamma}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sync,
    Async,
}

/// Unit sharing one Bernoulli trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    #[default]
    Coordinate,
    Block,
}

/// Sample-and-hold registers between the interconnection and the elements.
#[derive(Debug, Clone)]
pub struct DelayBank {
    mode: Mode,
    p: f64,
    seed: u64,
    granularity: Granularity,
    rng: ChaCha8Rng,
}

impl DelayBank {
    pub fn synchronous() -> Self {
        Self {
            mode: Mode::Sync,
            p: 1.0,
            seed: 0,
            granularity: Granularity::Coordinate,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn asynchronous(p: f64, seed: u64) -> Result<Self> {
        Self::new(Mode::Async, p, seed, Granularity::Coordinate)
    }

    pub fn new(mode: Mode, p: f64, seed: u64, granularity: Granularity) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::param("p", format!("must lie in (0, 1], got {p}")));
        }
        Ok(Self {
            mode,
            p: if mode == Mode::Sync { 1.0 } else { p },
            seed,
            granularity,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    /// Restarts the trigger sequence.
    pub fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    /// Trigger mask for one step.
    fn draw(&mut self, system: &System, mask: &mut [bool]) {
        match self.mode {
            Mode::Sync => mask.fill(true),
            Mode::Async => match self.granularity {
                Granularity::Coordinate => {
                    for m in mask.iter_mut() {
                        *m = self.rng.random::<f64>() < self.p;
                    }
                }
                Granularity::Block => {
                    for e in &system.elements {
                        let fire = self.rng.random::<f64>() < self.p;
                        mask[e.block.range()].fill(fire);
                    }
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub d: DVector<f64>,
    pub iter: u64,
    pub normalized_iter: f64,
}

impl SystemState {
    pub fn zeros(n: usize) -> Self {
        Self::from_vector(DVector::zeros(n))
    }

    pub fn from_vector(d: DVector<f64>) -> Self {
        Self {
            d,
            iter: 0,
            normalized_iter: 0.0,
        }
    }
}

pub fn step_sync(system: &System, state: &SystemState) -> Result<SystemState> {
    let next = system.map(&state.d)?;
    let g = system.gamma;
    let d = state.d.map(|x| (1.0 - g) * x) + next * g;
    finish_step(state, d, 1.0)
}

pub fn step_async(system: &System, state: &SystemState, bank: &mut DelayBank) -> Result<SystemState> {
    if bank.mode != Mode::Async {
        return Err(Error::param("mode", "step_async needs an asynchronous delay bank"));
    }
    let next = system.map(&state.d)?;
    let mut mask = vec![false; system.dim()];
    bank.draw(system, &mut mask);
    let g = system.gamma;
    let mut d = state.d.clone();
    for (i, fire) in mask.into_iter().enumerate() {
        if fire {
            d[i] = (1.0 - g) * d[i] + g * next[i];
        }
    }
    finish_step(state, d, bank.p)
}

fn finish_step(state: &SystemState, d: DVector<f64>, p: f64) -> Result<SystemState> {
    let iter = state.iter + 1;
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged { iter });
    }
    Ok(SystemState {
        d,
        iter,
        normalized_iter: state.normalized_iter + p,
    })
}

/// Per-pair `(a, b) = M⁻¹(c, d)` with `c = m(d)`.
pub fn readout(system: &System, state: &SystemState) -> Result<Vec<DecisionPair>> {
    let c = system.eval_elements(&state.d)?;
    let t = system.transform;
    Ok(c.iter()
        .zip(state.d.iter())
        .map(|(&c, &d)| t.inverse_transform(TransformedPair::new(c, d)))
        .collect())
}

/// Primal parts of a readout.
pub fn primal(pairs: &[DecisionPair]) -> DVector<f64> {
    DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.a))
}

/// Dual parts of a readout.
pub fn dual(pairs: &[DecisionPair]) -> DVector<f64> {
    DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub tol: f64,
    pub max_iters: u64,
    /// Starting point; zeros when absent.
    pub initial: Option<DVector<f64>>,
    /// Fixed point used for the oracle residual column.
    pub reference: Option<DVector<f64>>,
    pub record_objective: bool,
    /// Read out even without convergence.
    pub force_readout: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 100_000,
            initial: None,
            reference: None,
            record_objective: false,
            force_readout: false,
        }
    }
}

impl RunOptions {
    pub fn new(tol: f64, max_iters: u64) -> Self {
        Self {
            tol,
            max_iters,
            ..Self::default()
        }
    }

    pub fn with_reference(mut self, d_star: DVector<f64>) -> Self {
        self.reference = Some(d_star);
        self
    }

    pub fn with_initial(mut self, d0: DVector<f64>) -> Self {
        self.initial = Some(d0);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: RunStatus,
    pub state: SystemState,
    pub final_residual: Option<f64>,
    pub readout: Option<Vec<DecisionPair>>,
    pub trace: RunTrace,
}

impl RunResult {
    pub fn converged(&self) -> bool {
        self.status == RunStatus::Converged
    }

    pub fn primal(&self) -> Option<DVector<f64>> {
        self.readout.as_deref().map(primal)
    }
}

/// Full refresh of the cached candidate after this many partial updates.
const REFRESH_EVERY: usize = 64;

/// Cached `c = m(d)` and candidate `G c + s` for the current `d`.
struct Workspace {
    c: DVector<f64>,
    next: DVector<f64>,
    partial: usize,
    mask: Vec<bool>,
    dirty: Vec<bool>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(system: &System, d: &DVector<f64>) -> Self {
        let n = system.dim();
        let mut ws = Self {
            c: DVector::zeros(n),
            next: DVector::zeros(n),
            partial: 0,
            mask: vec![false; n],
            dirty: vec![false; system.elements.len()],
            scratch: Vec::new(),
        };
        ws.refresh(system, d);
        ws
    }

    fn refresh(&mut self, system: &System, d: &DVector<f64>) {
        system.eval_into(d, &mut self.c);
        system.interconnection.apply_into(&self.c, &mut self.next);
        self.partial = 0;
    }

    /// Applies the candidate at triggered coordinates, then updates the cache.
    fn advance(&mut self, system: &System, d: &mut DVector<f64>) {
        let g = system.gamma;
        let n = d.len();
        let mut fired = 0;
        self.dirty.fill(false);
        for i in 0..n {
            if self.mask[i] {
                d[i] = (1.0 - g) * d[i] + g * self.next[i];
                self.dirty[system.owner[i]] = true;
                fired += 1;
            }
        }
        if 2 * fired > n || self.partial >= REFRESH_EVERY {
            self.refresh(system, d);
            return;
        }
        let gm = system.interconnection.matrix();
        for (k, e) in system.elements.iter().enumerate() {
            if !self.dirty[k] {
                continue;
            }
            let r = e.block.range();
            self.scratch.resize(r.len(), 0.0);
            e.eval(&d.as_slice()[r.clone()], &mut self.scratch);
            for (j, &c_new) in r.zip(&self.scratch) {
                let delta = c_new - self.c[j];
                if delta != 0.0 {
                    self.next.axpy(delta, &gm.column(j), 1.0);
                    self.c[j] = c_new;
                }
            }
        }
        self.partial += 1;
    }
}

/// Iterates until `‖G m(d) + s − d‖ ≤ tol·(1 + ‖d‖)` or `max_iters` steps.
///
/// Record `k` of the trace describes the state after `k` steps; the
/// stopping test runs before each step, so a run started at a fixed point
/// takes zero steps and `max_iters = 0` yields an empty trace.
pub fn run(system: &System, bank: &mut DelayBank, opts: &RunOptions) -> Result<RunResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", format!("must be > 0, got {}", opts.tol)));
    }
    let n = system.dim();
    let d0 = opts.initial.clone().unwrap_or_else(|| DVector::zeros(n));
    system.check_dim(&d0)?;
    if let Some(r) = &opts.reference {
        system.check_dim(r)?;
    }
    let mut state = SystemState::from_vector(d0);
    let mut ws = Workspace::new(system, &state.d);
    let mut trace = RunTrace::default();
    let mut final_residual = None;

    let status = loop {
        if state.iter >= opts.max_iters {
            break RunStatus::MaxIters;
        }
        let residual = (&ws.next - &state.d).norm();
        if !residual.is_finite() {
            break RunStatus::Diverged;
        }
        final_residual = Some(residual);
        trace.records.push(TraceRecord {
            iter: state.iter,
            normalized_iter: state.normalized_iter,
            self_residual: residual,
            oracle_residual: match &opts.reference {
                Some(r) => Some(oracle_residual(&state.d, r)?),
                None => None,
            },
            objective: if opts.record_objective {
                Some(system.objective(&state.d)?)
            } else {
                None
            },
        });
        if residual <= opts.tol * (1.0 + state.d.norm()) {
            break RunStatus::Converged;
        }
        bank.draw(system, &mut ws.mask);
        ws.advance(system, &mut state.d);
        state.iter += 1;
        state.normalized_iter += bank.p;
        if state.d.iter().any(|x| !x.is_finite()) {
            break RunStatus::Diverged;
        }
    };

    let readout = if status == RunStatus::Converged || (opts.force_readout && status != RunStatus::Diverged) {
        Some(readout(system, &state)?)
    } else {
        None
    };
    Ok(RunResult {
        status,
        state,
        final_residual,
        readout,
        trace,
    })
}
