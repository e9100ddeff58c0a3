use serde::{Deserialize, Serialize};

use super::peaks::{find_peaks, PeakPolarity};
use super::{max_series_difference, ConvergenceVerdict, InitialState, CONVERGENCE_PADDING};
use crate::dynamics::{
    evolve_state, observables, Hamiltonian, PropagationOptions, TimeGrid, Trajectory,
    NORM_DRIFT_FACTOR,
};
use crate::error::{Error, Result};
use crate::models::{
    ion_calibration_with_tolerance, rotated_rabi_stark_hamiltonian, to_model_frame, IonCalibration,
    IonDriveParams, IonHamiltonian,
};
use crate::qspace::{HilbertSpace, LabelBasis};

/// Fraction of a population's range a feature must span to count as the
/// exchange rather than an off-resonant ripple.
const EXCHANGE_FRACTION: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub drives: IonDriveParams,
    pub initial: InitialState,
    /// Times in the units of the drive frequencies.
    pub grid: TimeGrid,
    pub n_max: usize,
    pub options: PropagationOptions,
    /// Populations entering the deviation; empty means every σx-basis
    /// population.
    pub tracked: Vec<InitialState>,
    /// State the initial one exchanges with. Its first major maximum sets
    /// the period; without it the first major dip of the initial
    /// population is used.
    pub partner: Option<InitialState>,
    /// Largest accepted mismatch of Ω_b/Ω_r from the balancing ratio.
    pub balance_tolerance: f64,
    pub convergence_check: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonResult {
    pub calibration: IonCalibration,
    /// Calibrated model, σx-basis populations.
    pub model: Trajectory,
    /// Ion simulation mapped into the model frame.
    pub ion: Trajectory,
    /// Largest tracked |P_ion − P_model| at each sample.
    pub deviation: Vec<f64>,
    pub max_deviation: f64,
    /// Largest deviation of each tracked population.
    pub per_population: Vec<(String, f64)>,
    /// Exchange period, from the partner population when one is given.
    pub model_period: Option<f64>,
    pub ion_period: Option<f64>,
    pub lamb_dicke_warning: bool,
    pub convergence: Option<ConvergenceVerdict>,
}

/// Period of a two-level exchange: twice the time of the first extremum
/// whose prominence reaches half the range of the series. `polarity`
/// selects a rising partner population (maxima) or the decaying initial
/// one (minima).
pub fn exchange_period(times: &[f64], population: &[f64], polarity: PeakPolarity) -> Option<f64> {
    let t0 = *times.first()?;
    let (lo, hi) = population
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let range = hi - lo;
    if !(range > 0.0) {
        return None;
    }
    find_peaks(times, population, EXCHANGE_FRACTION * range, polarity)
        .first()
        .map(|p| 2.0 * (p.location - t0))
}

fn ion_trajectory(spec: &ComparisonSpec, cal: &IonCalibration, n_max: usize) -> Result<Trajectory> {
    let space = HilbertSpace::new(n_max)?;
    let psi0 = spec.initial.state(space)?;
    let h = IonHamiltonian::new(&spec.drives, space)?;
    if h.truncation_warning() {
        log::warn!("displacement matrix leaks {:e} out of the truncated space", h.leakage());
    }
    let times = spec.grid.times();
    let (states, stats) = evolve_state(
        Hamiltonian::TimeDependent(&h),
        &psi0,
        spec.grid.t_start,
        &times,
        &spec.options,
    )?;
    let budget = NORM_DRIFT_FACTOR * spec.options.tol;
    let mut traj = Trajectory::new(spec.grid, LabelBasis::SigmaX);
    for (psi, &t) in states.iter().zip(&times) {
        let drift = (psi.norm() - 1.0).abs();
        if drift > budget {
            return Err(Error::NormDrift { drift, budget });
        }
        traj.max_drift = traj.max_drift.max(drift);
        traj.push(t, &observables(&to_model_frame(psi, &cal.derived, t)));
    }
    traj.stats = stats;
    Ok(traj)
}

fn model_trajectory(spec: &ComparisonSpec, cal: &IonCalibration) -> Result<Trajectory> {
    let space = HilbertSpace::new(spec.n_max)?;
    let h = rotated_rabi_stark_hamiltonian(&cal.model, space);
    let opts = PropagationOptions {
        basis: LabelBasis::SigmaX,
        ..spec.options
    };
    crate::dynamics::propagate_state(Hamiltonian::Constant(&h), &spec.initial.state(space)?, &spec.grid, &opts)
}

/// Propagates the exact ion Hamiltonian and the calibrated model from the
/// same initial state and compares their σx-basis populations in the
/// model frame.
pub fn compare_ion_model(spec: &ComparisonSpec) -> Result<ComparisonResult> {
    spec.options.validate()?;
    let cal = ion_calibration_with_tolerance(&spec.drives, spec.balance_tolerance)?;
    let frequency = cal.derived.omega_dd.abs();
    let limit = std::f64::consts::PI / frequency;
    let dt = spec.grid.dt();
    if frequency > 0.0 && dt >= limit {
        return Err(Error::Aliasing { dt, frequency, limit });
    }
    for s in std::iter::once(&spec.initial)
        .chain(&spec.tracked)
        .chain(spec.partner.as_ref())
    {
        if s.n > spec.n_max {
            return Err(Error::FockIndexOutOfRange {
                n: s.n,
                n_max: spec.n_max,
            });
        }
    }
    let lamb_dicke_warning = spec.drives.lamb_dicke_flag(spec.n_max);
    if lamb_dicke_warning {
        log::warn!("eta sqrt(n_max) is outside the Lamb-Dicke regime");
    }

    let model = model_trajectory(spec, &cal)?;
    let ion = ion_trajectory(spec, &cal, spec.n_max)?;

    let names: Vec<String> = if spec.tracked.is_empty() {
        model
            .names()
            .iter()
            .filter(|n| n.starts_with("P_"))
            .cloned()
            .collect()
    } else {
        spec.tracked
            .iter()
            .map(|s| crate::dynamics::population_name(s.label, s.n))
            .collect()
    };
    let mut deviation = vec![0.0f64; model.len()];
    let mut per_population = Vec::with_capacity(names.len());
    for name in names {
        let (a, b) = match (model.series(&name), ion.series(&name)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InvalidParameter {
                    name: "tracked",
                    reason: format!("`{name}` is not a σx-basis population"),
                })
            }
        };
        let mut worst = 0.0f64;
        for (i, (x, y)) in a.iter().zip(b).enumerate() {
            let d = (x - y).abs();
            deviation[i] = deviation[i].max(d);
            worst = worst.max(d);
        }
        per_population.push((name, worst));
    }
    let max_deviation = deviation.iter().copied().fold(0.0, f64::max);

    let (watched, polarity) = match spec.partner {
        Some(s) => (s, PeakPolarity::Maxima),
        None => (spec.initial, PeakPolarity::Minima),
    };
    let watched = crate::dynamics::population_name(watched.label, watched.n);
    let period = |t: &Trajectory| {
        t.series(&watched)
            .and_then(|p| exchange_period(&t.times, p, polarity))
    };
    let model_period = period(&model);
    let ion_period = period(&ion);

    let convergence = if spec.convergence_check {
        let check = ion_trajectory(spec, &cal, spec.n_max + CONVERGENCE_PADDING)?;
        Some(ConvergenceVerdict::new(spec.n_max, max_series_difference(&ion, &check)))
    } else {
        None
    };

    Ok(ComparisonResult {
        calibration: cal,
        model,
        ion,
        deviation,
        max_deviation,
        per_population,
        model_period,
        ion_period,
        lamb_dicke_warning,
        convergence,
    })
}
