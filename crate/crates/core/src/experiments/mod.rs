//! Resonance scans, time traces, ion-vs-model comparisons and peak
//! detection.

mod ion;
mod peaks;

pub use ion::{compare_ion_model, exchange_period, ComparisonResult, ComparisonSpec};
pub use peaks::{find_peaks, Peak, PeakPolarity, DEFAULT_PROMINENCE};

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    observables, propagate_density, propagate_state, Hamiltonian, Observables, PropagationOptions,
    SpectralPropagator, TimeGrid, Trajectory,
};
use crate::effective::{k_photon_channel, Branch, ChannelOutcome, KPhotonChannel};
use crate::error::{Error, Result};
use crate::models::{rabi_stark_hamiltonian, LindbladParams, ModelParams};
use crate::qspace::{basis_state, DensityMatrix, HilbertSpace, QubitLabel};

/// Extra Fock levels used by the truncation re-check.
pub const CONVERGENCE_PADDING: usize = 10;
/// Largest change of a recorded observable tolerated by the re-check.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-3;

/// Truncation for a k-photon experiment starting near Fock number `n0`.
pub fn default_n_max(n0: usize, k: usize) -> usize {
    n0 + k + 10
}

/// A bare or σx-basis product state |label, n⟩.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct InitialState {
    pub label: QubitLabel,
    pub n: usize,
}

impl InitialState {
    pub fn new(label: QubitLabel, n: usize) -> Self {
        Self { label, n }
    }

    pub fn state(&self, space: HilbertSpace) -> Result<crate::qspace::StateVector> {
        basis_state(space, self.label, self.n)
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.label, self.n)
    }
}

impl FromStr for InitialState {
    type Err = Error;

    /// Accepts `e,3`, `|g,5>` and `+,2`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('|').trim_end_matches(['>', '⟩']);
        let bad = || Error::InvalidParameter {
            name: "initial state",
            reason: format!("expected `label,n`, got `{s}`"),
        };
        let (l, n) = t.split_once(',').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        Ok(Self::new(l.parse()?, n))
    }
}

impl TryFrom<String> for InitialState {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitialState> for String {
    fn from(s: InitialState) -> String {
        s.to_string()
    }
}

/// Scalar recorded at the end of each scan point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Observable {
    NMean,
    SigmaPP,
    Parity,
    Population(InitialState),
}

impl Observable {
    pub fn evaluate(&self, o: &Observables) -> Result<f64> {
        Ok(match self {
            Observable::NMean => o.n_mean,
            Observable::SigmaPP => o.sigma_pp,
            Observable::Parity => o.parity,
            Observable::Population(s) => o.population(s.label, s.n).ok_or(
                Error::FockIndexOutOfRange {
                    n: s.n,
                    n_max: o.blocks.len().saturating_sub(1),
                },
            )?,
        })
    }

    /// Highest Fock number the observable refers to.
    pub fn fock_reach(&self) -> usize {
        match self {
            Observable::Population(s) => s.n,
            _ => 0,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::NMean => f.write_str("n_mean"),
            Observable::SigmaPP => f.write_str("sigma_pp"),
            Observable::Parity => f.write_str("parity"),
            Observable::Population(s) => {
                f.write_str(&crate::dynamics::population_name(s.label, s.n))
            }
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    /// `n_mean`, `sigma_pp`, `parity` or a population such as `P_e_8`.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "n_mean" => Ok(Observable::NMean),
            "sigma_pp" => Ok(Observable::SigmaPP),
            "parity" => Ok(Observable::Parity),
            other => {
                let rest = other.strip_prefix("P_").ok_or_else(|| Error::InvalidParameter {
                    name: "observable",
                    reason: format!("unknown observable `{other}`"),
                })?;
                let (l, n) = rest.rsplit_once('_').ok_or_else(|| Error::InvalidParameter {
                    name: "observable",
                    reason: format!("expected P_<label>_<n>, got `{other}`"),
                })?;
                Ok(Observable::Population(format!("{l},{n}").parse()?))
            }
        }
    }
}

impl TryFrom<String> for Observable {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Observable> for String {
    fn from(o: Observable) -> String {
        o.to_string()
    }
}

/// The swept coordinate of a scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    Omega0,
    Gamma,
    G,
    /// (ω − ω₀)/ω at fixed ω.
    DetuningRatio,
}

impl SweptParameter {
    pub fn apply(&self, base: &ModelParams, x: f64) -> ModelParams {
        let mut p = *base;
        match self {
            SweptParameter::Omega0 => p.omega0 = x,
            SweptParameter::Gamma => p.gamma = x,
            SweptParameter::G => p.g = x,
            SweptParameter::DetuningRatio => p.omega0 = p.omega * (1.0 - x),
        }
        p
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweptParameter::Omega0 => "omega0",
            SweptParameter::Gamma => "gamma",
            SweptParameter::G => "g",
            SweptParameter::DetuningRatio => "detuning_ratio",
        }
    }
}

/// Odd-k channel whose π/(2|Ω⁽ᵏ⁾|) sets the evolution time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRef {
    pub k: usize,
    pub n: usize,
    pub branch: Branch,
}

impl ChannelRef {
    pub fn transfer_time(&self, p: &ModelParams) -> Result<f64> {
        match k_photon_channel(p, self.n, self.k, self.branch)? {
            ChannelOutcome::Allowed(c) => c.transfer_time(),
            ChannelOutcome::Forbidden { reason, .. } => Err(Error::InvalidParameter {
                name: "time channel",
                reason,
            }),
        }
    }
}

/// How long each scan point evolves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRule {
    Fixed { t: f64 },
    /// Channel time evaluated at every swept point; points where it is
    /// undefined are skipped.
    PerPoint(ChannelRef),
    /// Channel time evaluated once, at swept value `at`.
    PanelFixed { channel: ChannelRef, at: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub parameter: SweptParameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    /// Values of the parameters that are not swept.
    pub base: ModelParams,
    pub initial: InitialState,
    pub time: TimeRule,
    pub observable: Observable,
    pub n_max: usize,
    pub min_prominence: f64,
    pub polarity: PeakPolarity,
    /// Repeat the scan with [`CONVERGENCE_PADDING`] more Fock levels.
    pub convergence_check: bool,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl ScanSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("start", self.start), ("stop", self.stop), ("step", self.step)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.step <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "step",
                reason: format!("must be positive, got {}", self.step),
            });
        }
        if self.stop < self.start {
            return Err(Error::InvalidParameter {
                name: "stop",
                reason: format!("empty sweep range [{}, {}]", self.start, self.stop),
            });
        }
        if let TimeRule::Fixed { t } = self.time {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: "t",
                    reason: format!("evolution time must be finite and non-negative, got {t}"),
                });
            }
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter {
                name: "workers",
                reason: "need at least one worker".into(),
            });
        }
        self.base.validate()?;
        let reach = self.initial.n.max(self.observable.fock_reach());
        if reach > self.n_max {
            return Err(Error::FockIndexOutOfRange {
                n: reach,
                n_max: self.n_max,
            });
        }
        Ok(())
    }

    /// Inclusive grid start, start + step, … ≤ stop.
    pub fn values(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceVerdict {
    pub n_max: usize,
    pub n_max_check: usize,
    pub max_difference: f64,
    pub tolerance: f64,
    pub converged: bool,
}

impl ConvergenceVerdict {
    fn new(n_max: usize, max_difference: f64) -> Self {
        Self {
            n_max,
            n_max_check: n_max + CONVERGENCE_PADDING,
            max_difference,
            tolerance: CONVERGENCE_TOLERANCE,
            converged: max_difference <= CONVERGENCE_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub parameter: SweptParameter,
    pub observable: Observable,
    pub values: Vec<f64>,
    /// Evolution time used at each point (NaN when skipped).
    pub times: Vec<f64>,
    /// Observable at each point (NaN when skipped).
    pub observations: Vec<f64>,
    /// Reason for each skipped point.
    pub skipped: Vec<Option<String>>,
    pub peaks: Vec<Peak>,
    pub convergence: Option<ConvergenceVerdict>,
}

impl ScanResult {
    pub fn n_skipped(&self) -> usize {
        self.skipped.iter().filter(|s| s.is_some()).count()
    }

    pub fn find_peaks(&self, min_prominence: f64, polarity: PeakPolarity) -> Vec<Peak> {
        find_peaks(&self.values, &self.observations, min_prominence, polarity)
    }
}

fn with_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(job()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidParameter {
                    name: "workers",
                    reason: e.to_string(),
                })?;
            Ok(pool.install(job))
        }
    }
}

/// Observable after evolving the initial state for `t` under constant H.
fn evolve_point(p: &ModelParams, space: HilbertSpace, spec: &ScanSpec, t: f64) -> Result<f64> {
    p.validate()?;
    let h = rabi_stark_hamiltonian(p, space);
    let psi = SpectralPropagator::new(&h)?.evolve(&spec.initial.state(space)?, t)?;
    spec.observable.evaluate(&observables(&psi))
}

fn point_time(spec: &ScanSpec, fixed: Option<f64>, p: &ModelParams) -> Result<f64> {
    match (spec.time, fixed) {
        (_, Some(t)) => Ok(t),
        (TimeRule::PerPoint(c), None) => c.transfer_time(p),
        _ => unreachable!("fixed and panel rules are resolved before the sweep"),
    }
}

fn sweep(spec: &ScanSpec, n_max: usize, fixed: Option<f64>) -> Result<Vec<(f64, f64, Option<String>)>> {
    let space = HilbertSpace::new(n_max)?;
    let values = spec.values();
    with_pool(spec.workers, || {
        values
            .par_iter()
            .map(|&x| {
                let p = spec.parameter.apply(&spec.base, x);
                let outcome = point_time(spec, fixed, &p)
                    .and_then(|t| evolve_point(&p, space, spec, t).map(|v| (t, v)));
                match outcome {
                    Ok((t, v)) => (t, v, None),
                    Err(e) => {
                        log::debug!("{} = {x}: skipped ({e})", spec.parameter.name());
                        (f64::NAN, f64::NAN, Some(e.to_string()))
                    }
                }
            })
            .collect()
    })
}

/// Sweeps one parameter and records the observable after the evolution
/// time of each point. Points are independent; the result does not depend
/// on scheduling.
pub fn run_scan(spec: &ScanSpec) -> Result<ScanResult> {
    spec.validate()?;
    let fixed = match spec.time {
        TimeRule::Fixed { t } => Some(t),
        TimeRule::PanelFixed { channel, at } => {
            Some(channel.transfer_time(&spec.parameter.apply(&spec.base, at))?)
        }
        TimeRule::PerPoint(_) => None,
    };
    let rows = sweep(spec, spec.n_max, fixed)?;
    let values = spec.values();
    let mut times = Vec::with_capacity(rows.len());
    let mut observations = Vec::with_capacity(rows.len());
    let mut skipped = Vec::with_capacity(rows.len());
    for (t, v, s) in rows {
        times.push(t);
        observations.push(v);
        skipped.push(s);
    }
    let n_skipped = skipped.iter().filter(|s| s.is_some()).count();
    if n_skipped > 0 {
        log::warn!("{n_skipped} of {} scan points skipped", values.len());
    }
    let convergence = if spec.convergence_check {
        let check = sweep(spec, spec.n_max + CONVERGENCE_PADDING, fixed)?;
        let diff = observations
            .iter()
            .zip(&check)
            .filter(|(a, b)| a.is_finite() && b.1.is_finite())
            .map(|(a, b)| (a - b.1).abs())
            .fold(0.0, f64::max);
        Some(ConvergenceVerdict::new(spec.n_max, diff))
    } else {
        None
    };
    let peaks = find_peaks(&values, &observations, spec.min_prominence, spec.polarity);
    Ok(ScanResult {
        parameter: spec.parameter,
        observable: spec.observable,
        values,
        times,
        observations,
        skipped,
        peaks,
        convergence,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub params: ModelParams,
    pub initial: InitialState,
    pub grid: TimeGrid,
    /// Mode decay; `None` propagates the pure state.
    pub kappa: Option<f64>,
    pub n_max: usize,
    pub options: PropagationOptions,
    pub convergence_check: bool,
}

fn trace_at(spec: &TraceSpec, n_max: usize) -> Result<Trajectory> {
    spec.params.validate()?;
    let space = HilbertSpace::new(n_max)?;
    let h = rabi_stark_hamiltonian(&spec.params, space);
    let psi0 = spec.initial.state(space)?;
    match spec.kappa {
        None => propagate_state(Hamiltonian::Constant(&h), &psi0, &spec.grid, &spec.options),
        Some(k) => propagate_density(
            &h,
            &LindbladParams::new(k)?,
            &DensityMatrix::from_pure(&psi0),
            &spec.grid,
            &spec.options,
        ),
    }
}

/// Populations, ⟨a†a⟩, ⟨σ+σ−⟩ and parity on the grid, from a pure
/// state or (with κ) through the master equation.
pub fn run_trace(spec: &TraceSpec) -> Result<Trajectory> {
    trace_at(spec, spec.n_max)
}

/// Re-runs a trace with more Fock levels and compares every series the
/// two runs share.
pub fn trace_convergence(spec: &TraceSpec, traj: &Trajectory) -> Result<ConvergenceVerdict> {
    let check = trace_at(spec, spec.n_max + CONVERGENCE_PADDING)?;
    Ok(ConvergenceVerdict::new(spec.n_max, max_series_difference(traj, &check)))
}

pub(crate) fn max_series_difference(a: &Trajectory, b: &Trajectory) -> f64 {
    a.columns()
        .filter_map(|(name, col)| b.series(name).map(|other| (col, other)))
        .flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs()))
        .fold(0.0, f64::max)
}

/// One row of a channel table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelRow {
    pub n: usize,
    pub branch: Branch,
    pub outcome: RowOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowOutcome {
    Allowed(KPhotonChannel),
    Forbidden { reason: String },
    /// An intermediate detuning vanishes, so the perturbative channel is
    /// undefined for this row only.
    Singular { reason: String },
}

/// k-photon channels for every n in `ns` and both branches.
pub fn channel_table(p: &ModelParams, k: usize, ns: impl IntoIterator<Item = usize>) -> Result<Vec<ChannelRow>> {
    p.validate()?;
    let mut rows = Vec::new();
    for n in ns {
        for branch in [Branch::Plus, Branch::Minus] {
            let outcome = match k_photon_channel(p, n, k, branch) {
                Ok(ChannelOutcome::Allowed(c)) => RowOutcome::Allowed(c),
                Ok(ChannelOutcome::Forbidden { reason, .. }) => RowOutcome::Forbidden { reason },
                Err(Error::Singular(reason)) => RowOutcome::Singular { reason },
                Err(e) => return Err(e),
            };
            rows.push(ChannelRow { n, branch, outcome });
        }
    }
    Ok(rows)
}
