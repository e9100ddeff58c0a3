//! Time evolution of pure states and density matrices.

mod dop853_tableau;
mod integrator;
mod observables;


pub use integrator::{integrate, StepControl, StepStats};
pub use observables::{
    density_observables, observables, population_name, Observables, QubitBlock,
};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::LindbladParams;
use crate::qspace::{
    ladder_ops, DensityMatrix, HilbertSpace, LabelBasis, QOperator, QubitLabel, StateVector, C64, I,
    ZERO,
};
use crate::sparse::CsrMatrix;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const MIN_TOL: f64 = 1e-12;
pub const MAX_TOL: f64 = 1e-6;

/// Norm drift allowed for unitary runs, as a multiple of tol.
pub const NORM_DRIFT_FACTOR: f64 = 100.0;
/// Largest |tr ρ − 1| tolerated during master-equation runs.
pub const TRACE_BUDGET: f64 = 1e-7;
/// Most negative eigenvalue of ρ tolerated during master-equation runs.
pub const POSITIVITY_BUDGET: f64 = 1e-6;

/// A Hamiltonian with explicit time dependence.
pub trait TimeDependentHamiltonian: Send + Sync {
    fn space(&self) -> HilbertSpace;

    /// Dense H(t).
    fn at(&self, t: f64) -> QOperator;

    /// out = −i H(t) ψ
    fn apply_minus_i(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let h = self.at(t);
        let y = h.matrix() * DVector::from_column_slice(psi);
        for (o, v) in out.iter_mut().zip(y.iter()) {
            *o = -I * v;
        }
    }
}

/// Generator of a unitary run.
#[derive(Clone, Copy)]
pub enum Hamiltonian<'a> {
    Constant(&'a QOperator),
    TimeDependent(&'a dyn TimeDependentHamiltonian),
}

impl Hamiltonian<'_> {
    pub fn space(&self) -> HilbertSpace {
        match self {
            Hamiltonian::Constant(h) => h.space(),
            Hamiltonian::TimeDependent(h) => h.space(),
        }
    }
}

/// How a constant Hamiltonian is propagated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Exact eigendecomposition propagator for constant H.
    #[default]
    Auto,
    /// Always use the adaptive integrator.
    RungeKutta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationOptions {
    pub tol: f64,
    pub method: Method,
    /// Basis of the recorded population series.
    pub basis: LabelBasis,
    pub store_states: bool,
    pub max_steps: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            method: Method::Auto,
            basis: LabelBasis::Bare,
            store_states: false,
            max_steps: 200_000_000,
        }
    }
}

impl PropagationOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_TOL..=MAX_TOL).contains(&self.tol) {
            return Err(Error::InvalidParameter {
                name: "tol",
                reason: format!("must lie in [{MIN_TOL:e}, {MAX_TOL:e}], got {:e}", self.tol),
            });
        }
        Ok(())
    }

    fn control(&self) -> StepControl {
        StepControl {
            max_steps: self.max_steps,
            ..StepControl::uniform(self.tol)
        }
    }
}

/// Output sampling: `n_samples` equally spaced instants in [t_start, t_end].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub n_samples: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_samples: usize) -> Result<Self> {
        if !(t_start.is_finite() && t_end.is_finite() && t_end > t_start) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("need finite t_end > t_start, got [{t_start}, {t_end}]"),
            });
        }
        if n_samples < 2 {
            return Err(Error::InvalidParameter {
                name: "n_samples",
                reason: format!("need at least 2 samples, got {n_samples}"),
            });
        }
        Ok(Self {
            t_start,
            t_end,
            n_samples,
        })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / (self.n_samples - 1) as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_samples)
            .map(|i| {
                if i + 1 == self.n_samples {
                    self.t_end
                } else {
                    self.t_start + dt * i as f64
                }
            })
            .collect()
    }
}

/// Sampled observables of one run.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub times: Vec<f64>,
    pub basis: LabelBasis,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    #[serde(skip)]
    pub states: Option<Vec<StateVector>>,
    #[serde(skip)]
    pub densities: Option<Vec<DensityMatrix>>,
    pub stats: StepStats,
    /// Largest |‖ψ‖ − 1| (or |tr ρ − 1|) seen at the samples.
    pub max_drift: f64,
}

impl Trajectory {
    pub(crate) fn new(grid: TimeGrid, basis: LabelBasis) -> Self {
        Self {
            grid,
            times: Vec::with_capacity(grid.n_samples),
            basis,
            names: Vec::new(),
            columns: Vec::new(),
            states: None,
            densities: None,
            stats: StepStats::default(),
            max_drift: 0.0,
        }
    }

    pub(crate) fn push(&mut self, t: f64, obs: &Observables) {
        let named = obs.named(self.basis);
        if self.names.is_empty() {
            self.names = named.iter().map(|(k, _)| k.clone()).collect();
            self.columns = vec![Vec::with_capacity(self.grid.n_samples); named.len()];
        }
        for (col, (_, v)) in self.columns.iter_mut().zip(named) {
            col.push(v);
        }
        self.times.push(t);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn population(&self, label: QubitLabel, n: usize) -> Option<&[f64]> {
        self.series(&population_name(label, n))
    }

    /// (time, value) of the largest sample of a series.
    pub fn max_of(&self, name: &str) -> Option<(f64, f64)> {
        let s = self.series(name)?;
        s.iter()
            .enumerate()
            .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((i, v)),
            })
            .map(|(i, v)| (self.times[i], v))
    }

    /// Iterator over (name, column) pairs in recording order.
    pub fn columns(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.names
            .iter()
            .map(String::as_str)
            .zip(self.columns.iter().map(Vec::as_slice))
    }
}

fn check_space(expected: HilbertSpace, found: HilbertSpace) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            expected: expected.dim(),
            found: found.dim(),
        });
    }
    Ok(())
}

/// Exact propagator of a constant Hermitian H through its eigenbasis.
pub struct SpectralPropagator {
    space: HilbertSpace,
    values: DVector<f64>,
    vectors: DMatrix<C64>,
}

impl SpectralPropagator {
    pub fn new(h: &QOperator) -> Result<Self> {
        let m = h.matrix();
        let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
            .ok_or_else(|| Error::Eigen("Hermitian eigensolver did not converge".into()))?;
        Ok(Self {
            space: h.space(),
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// Coefficients of ψ in the eigenbasis.
    pub fn coefficients(&self, psi: &StateVector) -> Result<DVector<C64>> {
        check_space(self.space, psi.space())?;
        Ok(self.vectors.adjoint() * psi.amplitudes())
    }

    /// e^{−iHt} applied to the state with eigen-coefficients `c`.
    pub fn evolve_coefficients(&self, c: &DVector<C64>, t: f64) -> StateVector {
        let phased = DVector::from_iterator(
            c.len(),
            c.iter()
                .zip(self.values.iter())
                .map(|(ci, l)| ci * C64::from_polar(1.0, -l * t)),
        );
        StateVector::from_raw(self.space, &self.vectors * phased)
    }

    pub fn evolve(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        Ok(self.evolve_coefficients(&self.coefficients(psi)?, t))
    }
}

/// Right-hand side −iHψ for the integrator.
fn unitary_rhs<'a>(h: Hamiltonian<'a>) -> Box<dyn FnMut(f64, &[C64], &mut [C64]) + 'a> {
    match h {
        Hamiltonian::Constant(op) => {
            let csr = CsrMatrix::from_dense(op.matrix());
            Box::new(move |_t, y, out| csr.mul_vec_scaled(-I, y, out))
        }
        Hamiltonian::TimeDependent(td) => Box::new(move |t, y, out| td.apply_minus_i(t, y, out)),
    }
}

/// ψ(t) at each instant of `times` (ascending, ≥ t0), from ψ(t0) = psi0.
pub fn evolve_state(
    h: Hamiltonian<'_>,
    psi0: &StateVector,
    t0: f64,
    times: &[f64],
    opts: &PropagationOptions,
) -> Result<(Vec<StateVector>, StepStats)> {
    opts.validate()?;
    check_space(h.space(), psi0.space())?;
    let space = psi0.space();
    if let (Hamiltonian::Constant(op), Method::Auto) = (h, opts.method) {
        let prop = SpectralPropagator::new(op)?;
        let c = prop.coefficients(psi0)?;
        let states = times
            .iter()
            .map(|&t| prop.evolve_coefficients(&c, t - t0))
            .collect();
        return Ok((states, StepStats::default()));
    }
    let mut out = Vec::with_capacity(times.len());
    let stats = integrate(
        unitary_rhs(h),
        t0,
        psi0.amplitudes().as_slice(),
        times,
        &opts.control(),
        |_, _, y| {
            out.push(StateVector::from_raw(space, DVector::from_column_slice(y)));
            Ok(())
        },
    )?;
    Ok((out, stats))
}

/// Solves i dψ/dt = H(t)ψ and records observables on `grid`.
pub fn propagate_state(
    h: Hamiltonian<'_>,
    psi0: &StateVector,
    grid: &TimeGrid,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    check_space(h.space(), psi0.space())?;
    let space = psi0.space();
    let times = grid.times();
    let budget = NORM_DRIFT_FACTOR * opts.tol;
    let norm0 = psi0.norm();
    let mut traj = Trajectory::new(*grid, opts.basis);
    let mut states = opts.store_states.then(Vec::new);

    let mut record = |t: f64, amp: &[C64], traj: &mut Trajectory| -> Result<()> {
        let norm = amp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let drift = (norm - norm0).abs();
        traj.max_drift = traj.max_drift.max(drift);
        if drift > budget {
            return Err(Error::NormDrift { drift, budget });
        }
        traj.push(t, &observables::observables_of_amplitudes(space, amp));
        if let Some(s) = states.as_mut() {
            s.push(StateVector::from_raw(space, DVector::from_column_slice(amp)));
        }
        Ok(())
    };

    if let (Hamiltonian::Constant(op), Method::Auto) = (h, opts.method) {
        let prop = SpectralPropagator::new(op)?;
        let c = prop.coefficients(psi0)?;
        for &t in &times {
            let psi = prop.evolve_coefficients(&c, t - grid.t_start);
            record(t, psi.amplitudes().as_slice(), &mut traj)?;
        }
    } else {
        let mut sink = Trajectory::new(*grid, opts.basis);
        let stats = integrate(
            unitary_rhs(h),
            grid.t_start,
            psi0.amplitudes().as_slice(),
            &times,
            &opts.control(),
            |_, t, y| record(t, y, &mut sink),
        )?;
        sink.stats = stats;
        traj = sink;
    }
    traj.states = states;
    Ok(traj)
}

/// Master-equation right-hand side on a column-major ρ using sparse
/// operators: −i(H_eff ρ − ρ H_eff†) + 2κ aρa†, H_eff = H − iκ a†a.
pub(crate) struct LindbladRhs {
    h_eff: CsrMatrix,
    a: CsrMatrix,
    kappa: f64,
    scratch: Vec<C64>,
}

impl LindbladRhs {
    pub(crate) fn new(h: &QOperator, lp: &LindbladParams) -> Self {
        let l = ladder_ops(h.space());
        let a = l.a.embed();
        let num = l.number.embed();
        let h_eff = h.matrix() - num.matrix() * C64::new(0.0, lp.kappa);
        let d = h.dim();
        Self {
            h_eff: CsrMatrix::from_dense(&h_eff),
            a: CsrMatrix::from_dense(a.matrix()),
            kappa: lp.kappa,
            scratch: vec![ZERO; d * d],
        }
    }

    pub(crate) fn eval(&mut self, rho: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|x| *x = ZERO);
        self.h_eff.left_mul_add(rho, -I, out);
        self.h_eff.right_mul_adjoint_add(rho, I, out);
        if self.kappa != 0.0 {
            self.scratch.iter_mut().for_each(|x| *x = ZERO);
            self.a.left_mul_add(rho, C64::new(1.0, 0.0), &mut self.scratch);
            self.a
                .right_mul_adjoint_add(&self.scratch, C64::new(2.0 * self.kappa, 0.0), out);
        }
    }
}

/// Integrates the master equation with constant H and records observables.
pub fn propagate_density(
    h: &QOperator,
    lp: &LindbladParams,
    rho0: &DensityMatrix,
    grid: &TimeGrid,
    opts: &PropagationOptions,
) -> Result<Trajectory> {
    opts.validate()?;
    check_space(h.space(), rho0.space())?;
    let space = h.space();
    let d = space.dim();
    let mut rhs = LindbladRhs::new(h, lp);
    let mut traj = Trajectory::new(*grid, opts.basis);
    let mut snaps = opts.store_states.then(Vec::new);
    let times = grid.times();
    let stats = integrate(
        |_t, y, out| rhs.eval(y, out),
        grid.t_start,
        rho0.matrix().as_slice(),
        &times,
        &opts.control(),
        |_, t, y| {
            let m = DMatrix::from_column_slice(d, d, y);
            let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
            let drift = (tr - 1.0).abs();
            traj.max_drift = traj.max_drift.max(drift);
            if drift > TRACE_BUDGET {
                return Err(Error::TraceDrift {
                    drift,
                    budget: TRACE_BUDGET,
                });
            }
            let rho = DensityMatrix::from_raw(space, m);
            let min_eigenvalue = rho.min_eigenvalue();
            if min_eigenvalue < -POSITIVITY_BUDGET {
                return Err(Error::PositivityViolation { min_eigenvalue, t });
            }
            traj.push(t, &observables::observables_of_matrix(space, rho.matrix()));
            if let Some(s) = snaps.as_mut() {
                s.push(rho);
            }
            Ok(())
        },
    )?;
    traj.stats = stats;
    traj.densities = snaps;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{rabi_stark_hamiltonian, ModelParams};
    use crate::qspace::basis_state;
    use approx::assert_abs_diff_eq;

    #[test]
    fn grid_validation_and_times() {
        assert!(TimeGrid::new(1.0, 1.0, 5).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 1).is_err());
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        assert_eq!(g.times(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn tolerance_range() {
        assert!(PropagationOptions::with_tol(1e-5).validate().is_err());
        assert!(PropagationOptions::with_tol(1e-13).validate().is_err());
        assert!(PropagationOptions::with_tol(1e-9).validate().is_ok());
    }

    #[test]
    fn zero_hamiltonian_is_static() {
        let s = HilbertSpace::new(3).unwrap();
        let h = QOperator::zeros(s);
        let psi = basis_state(s, QubitLabel::Plus, 1).unwrap();
        let grid = TimeGrid::new(0.0, 10.0, 11).unwrap();
        for method in [Method::Auto, Method::RungeKutta] {
            let opts = PropagationOptions {
                method,
                basis: LabelBasis::SigmaX,
                ..Default::default()
            };
            let tr = propagate_state(Hamiltonian::Constant(&h), &psi, &grid, &opts).unwrap();
            assert!(tr.population(QubitLabel::Plus, 1).unwrap().iter().all(|p| (p - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn resonant_doublet_transfer() {
        let s = HilbertSpace::new(8).unwrap();
        let p = ModelParams::new(2.25, 1.0, -0.25, 0.02).unwrap();
        let h = rabi_stark_hamiltonian(&p, s);
        let psi = basis_state(s, QubitLabel::E, 2).unwrap();
        let t = std::f64::consts::FRAC_PI_2 / (0.02 * 3f64.sqrt());
        let grid = TimeGrid::new(0.0, t, 2).unwrap();
        let tr = propagate_state(Hamiltonian::Constant(&h), &psi, &grid, &Default::default()).unwrap();
        assert!(tr.population(QubitLabel::G, 3).unwrap()[1] >= 0.98);
    }

    #[test]
    fn spectral_and_runge_kutta_agree() {
        let s = HilbertSpace::new(6).unwrap();
        let p = ModelParams::new(1.3, 1.0, -0.2, 0.15).unwrap();
        let h = rabi_stark_hamiltonian(&p, s);
        let psi = basis_state(s, QubitLabel::G, 2).unwrap();
        let times = [0.0, 3.3, 17.0, 40.0];
        let (a, _) = evolve_state(Hamiltonian::Constant(&h), &psi, 0.0, &times, &Default::default()).unwrap();
        let opts = PropagationOptions {
            method: Method::RungeKutta,
            tol: 1e-11,
            ..Default::default()
        };
        let (b, stats) = evolve_state(Hamiltonian::Constant(&h), &psi, 0.0, &times, &opts).unwrap();
        assert!(stats.accepted > 0);
        for (x, y) in a.iter().zip(&b) {
            assert!((x.amplitudes() - y.amplitudes()).norm() < 1e-8);
        }
    }

    #[test]
    fn photon_decay_is_exponential() {
        let s = HilbertSpace::new(3).unwrap();
        let kappa = 0.05;
        let rho0 = DensityMatrix::from_pure(&basis_state(s, QubitLabel::G, 1).unwrap());
        let grid = TimeGrid::new(0.0, 20.0, 41).unwrap();
        let tr = propagate_density(
            &QOperator::zeros(s),
            &LindbladParams::new(kappa).unwrap(),
            &rho0,
            &grid,
            &Default::default(),
        )
        .unwrap();
        for (t, n) in tr.times.iter().zip(tr.series("n_mean").unwrap()) {
            assert_abs_diff_eq!(*n, (-2.0 * kappa * t).exp(), epsilon = 1e-6);
        }
    }

    #[test]
    fn lindblad_rhs_matches_dense_reference() {
        let s = HilbertSpace::new(4).unwrap();
        let p = ModelParams::new(1.1, 1.0, 0.3, 0.2).unwrap();
        let h = rabi_stark_hamiltonian(&p, s);
        let lp = LindbladParams::new(0.07).unwrap();
        let v = DVector::from_fn(s.dim(), |i, _| C64::new((i as f64).cos(), 0.1 * i as f64));
        let rho = DensityMatrix::from_pure(&StateVector::normalized(s, v).unwrap());
        let dense = crate::models::lindblad_rhs(&h, &lp, &rho).unwrap();
        let mut fast = LindbladRhs::new(&h, &lp);
        let mut out = vec![ZERO; s.dim() * s.dim()];
        fast.eval(rho.matrix().as_slice(), &mut out);
        for (a, b) in out.iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
