//! Rabi-Stark Hamiltonians, the mode-decay master equation and the
//! trapped-ion realization.

mod ion;

pub use ion::{
    design_ion_drives, ion_calibration, ion_calibration_with_tolerance, ion_full_hamiltonian,
    ion_ld_hamiltonian, to_model_frame, CarrierPhase, IonCalibration, IonDerivedParams,
    IonDriveParams, IonHamiltonian, IonLdHamiltonian, IonTarget, BALANCE_TOLERANCE,
    LAMB_DICKE_THRESHOLD, MODEL_BASIS_NOTE,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::TimeDependentHamiltonian;
use crate::error::{Error, Result};
use crate::qspace::{embed, ladder_ops, qubit_ops, DensityMatrix, HilbertSpace, QOperator, C64};

/// Couplings of H = (ω₀/2)σz + ω a†a + γ a†a σz + g(σ+ + σ−)(a + a†).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub omega0: f64,
    pub omega: f64,
    pub gamma: f64,
    pub g: f64,
}

impl ModelParams {
    pub fn new(omega0: f64, omega: f64, gamma: f64, g: f64) -> Result<Self> {
        let p = Self {
            omega0,
            omega,
            gamma,
            g,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega0", self.omega0),
            ("omega", self.omega),
            ("gamma", self.gamma),
            ("g", self.g),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.omega <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "omega",
                reason: format!("mode frequency must be positive, got {}", self.omega),
            });
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParameter {
                name: "g",
                reason: format!("Rabi coupling must be non-negative, got {}", self.g),
            });
        }
        Ok(())
    }

    /// |γ| ≥ ω: the spectrum is unbounded below and every perturbative
    /// channel with an (ω ∓ γ) denominator breaks down.
    pub fn spectral_collapse(&self) -> bool {
        self.gamma.abs() >= self.omega
    }
}

/// Mode-decay strength κ of the master equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LindbladParams {
    pub kappa: f64,
}

impl LindbladParams {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: format!("must be finite and non-negative, got {kappa}"),
            });
        }
        Ok(Self { kappa })
    }
}

/// Lab-frame Rabi-Stark Hamiltonian.
pub fn rabi_stark_hamiltonian(p: &ModelParams, space: HilbertSpace) -> QOperator {
    let s = qubit_ops();
    let l = ladder_ops(space);
    let quad = &l.a.embed() + &l.a_dag.embed();
    free_hamiltonian(p, space) + (&embed(&s.x, &crate::qspace::ModeOperator::identity(space)) * &quad).scaled(C64::new(p.g, 0.0))
}

/// Diagonal part (ω₀/2)σz + ω a†a + γ a†a σz.
pub fn free_hamiltonian(p: &ModelParams, space: HilbertSpace) -> QOperator {
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for (q, sz) in [(0usize, 1.0), (1, -1.0)] {
        for n in 0..=space.n_max() {
            let nf = n as f64;
            let e = 0.5 * p.omega0 * sz + p.omega * nf + p.gamma * nf * sz;
            let i = space.index(q, n);
            m[(i, i)] = C64::new(e, 0.0);
        }
    }
    QOperator::new(space, m).expect("dimension fixed by construction")
}

/// Interaction-picture Hamiltonian w.r.t. the diagonal part:
/// H_I(t) = Σ_n Ω_n(σ+ e^{iδ⁺_n t} + σ− e^{iδ⁻_n t})|n+1⟩⟨n| + h.c.
pub fn interaction_picture_hamiltonian(p: &ModelParams, space: HilbertSpace, t: f64) -> QOperator {
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for n in 0..space.n_max() {
        let rabi = p.g * ((n + 1) as f64).sqrt();
        let shifted = p.omega0 + p.gamma * (2 * n + 1) as f64;
        let delta_plus = p.omega + shifted;
        let delta_minus = p.omega - shifted;
        // σ+ |n+1⟩⟨n| : |g,n⟩ → |e,n+1⟩
        let up = C64::from_polar(rabi, delta_plus * t);
        // σ− |n+1⟩⟨n| : |e,n⟩ → |g,n+1⟩
        let down = C64::from_polar(rabi, delta_minus * t);
        let (e_n1, g_n) = (space.index(0, n + 1), space.index(1, n));
        let (g_n1, e_n) = (space.index(1, n + 1), space.index(0, n));
        m[(e_n1, g_n)] = up;
        m[(g_n, e_n1)] = up.conj();
        m[(g_n1, e_n)] = down;
        m[(e_n, g_n1)] = down.conj();
    }
    QOperator::new(space, m).expect("dimension fixed by construction")
}

/// H_I(t) as a time-dependent generator; ψ_I(t) = e^{iH₀t} ψ(t).
#[derive(Clone, Copy, Debug)]
pub struct InteractionPictureHamiltonian {
    params: ModelParams,
    space: HilbertSpace,
}

impl InteractionPictureHamiltonian {
    pub fn new(params: &ModelParams, space: HilbertSpace) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: *params,
            space,
        })
    }
}

impl TimeDependentHamiltonian for InteractionPictureHamiltonian {
    fn space(&self) -> HilbertSpace {
        self.space
    }

    fn at(&self, t: f64) -> QOperator {
        interaction_picture_hamiltonian(&self.params, self.space, t)
    }

    fn apply_minus_i(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let p = &self.params;
        let sp = self.space;
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        let mi = C64::new(0.0, -1.0);
        for n in 0..sp.n_max() {
            let rabi = p.g * ((n + 1) as f64).sqrt();
            let shifted = p.omega0 + p.gamma * (2 * n + 1) as f64;
            let up = C64::from_polar(rabi, (p.omega + shifted) * t);
            let down = C64::from_polar(rabi, (p.omega - shifted) * t);
            let (e_n1, g_n) = (sp.index(0, n + 1), sp.index(1, n));
            let (g_n1, e_n) = (sp.index(1, n + 1), sp.index(0, n));
            out[e_n1] += mi * up * psi[g_n];
            out[g_n] += mi * up.conj() * psi[e_n1];
            out[g_n1] += mi * down * psi[e_n];
            out[e_n] += mi * down.conj() * psi[g_n1];
        }
    }
}

/// Rabi-Stark Hamiltonian with the qubit roles rotated (σz → σx, σx → σy):
/// (ω₀/2)σx + ω a†a + g σy(a + a†) + γ a†a σx. Diagonal in {|±⟩} ⊗ |n⟩.
pub fn rotated_rabi_stark_hamiltonian(p: &ModelParams, space: HilbertSpace) -> QOperator {
    let s = qubit_ops();
    let l = ladder_ops(space);
    let id = crate::qspace::ModeOperator::identity(space);
    let sx = embed(&s.x, &id);
    let num = l.number.embed();
    let quad = &l.a.embed() + &l.a_dag.embed();
    let terms = [
        sx.scaled(C64::new(0.5 * p.omega0, 0.0)),
        num.scaled(C64::new(p.omega, 0.0)),
        (&embed(&s.y, &id) * &quad).scaled(C64::new(p.g, 0.0)),
        (&num * &sx).scaled(C64::new(p.gamma, 0.0)),
    ];
    terms
        .into_iter()
        .fold(QOperator::zeros(space), |acc, t| acc + t)
}

/// Parity Π = σz (−1)^{a†a}.
pub fn parity_operator(space: HilbertSpace) -> QOperator {
    let d = space.dim();
    let mut m = DMatrix::zeros(d, d);
    for (q, sz) in [(0usize, 1.0), (1, -1.0)] {
        for n in 0..=space.n_max() {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let i = space.index(q, n);
            m[(i, i)] = C64::new(sz * sign, 0.0);
        }
    }
    QOperator::new(space, m).expect("dimension fixed by construction")
}

/// dρ/dt = −i[H, ρ] + κ(2aρa† − a†aρ − ρa†a).
pub fn lindblad_rhs(h: &QOperator, p: &LindbladParams, rho: &DensityMatrix) -> Result<DMatrix<C64>> {
    if h.space() != rho.space() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: rho.space().dim(),
        });
    }
    let l = ladder_ops(h.space());
    let a = l.a.embed();
    let r = rho.matrix();
    let hm = h.matrix();
    let mi = C64::new(0.0, -1.0);
    let mut out = (hm * r - r * hm) * mi;
    if p.kappa != 0.0 {
        let am = a.matrix();
        let num = am.adjoint() * am;
        let diss = am * r * am.adjoint() * C64::new(2.0, 0.0) - &num * r - r * &num;
        out += diss * C64::new(p.kappa, 0.0);
    }
    Ok(out)
}
