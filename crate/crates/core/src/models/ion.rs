//! Single trapped ion driven on the carrier and both first sidebands.
//!
//! Frequencies are angular (rad per time unit); the CLI works in rad/ms so
//! that 2π·1 kHz = 2π rad/ms. Nothing here assumes a particular unit.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::dynamics::TimeDependentHamiltonian;
use crate::error::{Error, Result};
use crate::qspace::{displacement_op, HilbertSpace, QOperator, StateVector, C64, I, ZERO};

/// Allowed mismatch between Ω_b/Ω_r and the balancing ratio.
pub const BALANCE_TOLERANCE: f64 = 1e-3;

/// η√n_max above which the Lamb-Dicke expansion is flagged as unreliable.
pub const LAMB_DICKE_THRESHOLD: f64 = 0.3;

const PHASE_TOLERANCE: f64 = 1e-9;

pub const MODEL_BASIS_NOTE: &str = "the calibrated model is (w0/2)sx + w a'a + g sy(a + a') + gamma a'a sx: \
the Rabi-Stark Hamiltonian with sx in the role of sz, diagonal in {|+>, |->} x |n>";

/// Laboratory drive settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonDriveParams {
    /// Trap frequency ν.
    pub nu: f64,
    /// Lamb-Dicke parameter η.
    pub eta: f64,
    /// Red-sideband Rabi frequency Ω_r.
    pub omega_r: f64,
    /// Blue-sideband Rabi frequency Ω_b.
    pub omega_b: f64,
    /// Carrier Rabi frequency Ω_S.
    pub omega_s: f64,
    pub delta_r: f64,
    pub delta_b: f64,
    pub phi_r: f64,
    pub phi_b: f64,
    pub phi_s: f64,
}

/// Which carrier phase is in use; fixes the sign of the engineered Stark term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CarrierPhase {
    /// φ_S = 0, negative Stark coupling.
    Zero,
    /// φ_S = −π (equivalently π), positive Stark coupling.
    MinusPi,
}

impl CarrierPhase {
    pub fn phase(self) -> f64 {
        match self {
            CarrierPhase::Zero => 0.0,
            CarrierPhase::MinusPi => -PI,
        }
    }

    /// +1 for φ_S = 0, −1 for φ_S = −π.
    fn sign(self) -> f64 {
        match self {
            CarrierPhase::Zero => 1.0,
            CarrierPhase::MinusPi => -1.0,
        }
    }

    fn classify(phi: f64) -> Option<Self> {
        if phi.abs() < PHASE_TOLERANCE {
            Some(CarrierPhase::Zero)
        } else if (phi.abs() - PI).abs() < PHASE_TOLERANCE {
            Some(CarrierPhase::MinusPi)
        } else {
            None
        }
    }
}

impl IonDriveParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("nu", self.nu),
            ("eta", self.eta),
            ("omega_r", self.omega_r),
            ("omega_b", self.omega_b),
            ("omega_s", self.omega_s),
            ("delta_r", self.delta_r),
            ("delta_b", self.delta_b),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite, got {v}"),
                });
            }
        }
        if self.nu <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "nu",
                reason: "trap frequency must be positive".into(),
            });
        }
        for (name, v) in fields[1..5].iter() {
            if *v < 0.0 {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        for (name, phi) in [("phi_r", self.phi_r), ("phi_b", self.phi_b), ("phi_s", self.phi_s)] {
            if CarrierPhase::classify(phi).is_none() {
                return Err(Error::UnsupportedPhases(format!(
                    "{name} = {phi}; only 0 and -pi are supported"
                )));
            }
        }
        Ok(())
    }

    pub fn carrier_phase(&self) -> Result<CarrierPhase> {
        CarrierPhase::classify(self.phi_s)
            .ok_or_else(|| Error::UnsupportedPhases(format!("phi_s = {}", self.phi_s)))
    }

    /// η√n_max ≥ [`LAMB_DICKE_THRESHOLD`].
    pub fn lamb_dicke_flag(&self, n_max: usize) -> bool {
        self.eta * (n_max as f64).sqrt() >= LAMB_DICKE_THRESHOLD
    }
}

/// Parameters realized by a drive set, from second-order bookkeeping of
/// the sideband and carrier cross terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonDerivedParams {
    /// Ω₀ = Ω_S(1 − η²/2)
    pub omega_0: f64,
    /// ε_S = Ω_S/ν
    pub eps_s: f64,
    /// Ω_DD = (δ_r + δ_b)/2
    pub omega_dd: f64,
    /// ωᴿ = (δ_r − δ_b)/2
    pub omega_rot: f64,
    /// ω₀ᴿ from the branch's Ω_DD relation.
    pub omega0_rot: f64,
    pub g_eff: f64,
    pub gamma_eff: f64,
    pub g_jc: f64,
    pub g_ajc: f64,
    pub g1_r: f64,
    pub g1_b: f64,
    pub g2_r: f64,
    pub g2_b: f64,
    /// Ω_b/Ω_r that makes g_JC = g_aJC.
    pub balance_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IonCalibration {
    pub carrier: CarrierPhase,
    pub derived: IonDerivedParams,
    /// Equivalent Rabi-Stark couplings, in the drive's frequency units.
    pub model: ModelParams,
    pub basis_note: &'static str,
}

/// Calibration with the default balance tolerance.
pub fn ion_calibration(d: &IonDriveParams) -> Result<IonCalibration> {
    ion_calibration_with_tolerance(d, BALANCE_TOLERANCE)
}

pub fn ion_calibration_with_tolerance(d: &IonDriveParams, balance_tol: f64) -> Result<IonCalibration> {
    d.validate()?;
    let carrier = d.carrier_phase()?;
    for (name, phi) in [("phi_r", d.phi_r), ("phi_b", d.phi_b)] {
        if CarrierPhase::classify(phi) != Some(CarrierPhase::MinusPi) {
            return Err(Error::UnsupportedPhases(format!(
                "{name} = {phi}; the sideband drives must have phase -pi"
            )));
        }
    }
    let s = carrier.sign();
    let eta = d.eta;
    let omega_0 = d.omega_s * (1.0 - 0.5 * eta * eta);
    let eps_s = d.omega_s / d.nu;
    let omega_dd = 0.5 * (d.delta_r + d.delta_b);
    let omega_rot = 0.5 * (d.delta_r - d.delta_b);
    // Ω_DD = ±Ω₀ − ω₀ᴿ
    let omega0_rot = s * omega_0 - omega_dd;
    let gamma_eff = -s * 0.5 * eta * eta * d.omega_s;
    let g1_r = 0.25 * eta * d.omega_r;
    let g1_b = 0.25 * eta * d.omega_b;
    let g2_r = g1_r * eps_s;
    let g2_b = g1_b * eps_s;
    let g_jc = g1_r + s * g2_r;
    let g_ajc = g1_b - s * g2_b;
    let balance_ratio = (1.0 + s * eps_s) / (1.0 - s * eps_s);

    if d.omega_r <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "omega_r",
            reason: "calibration needs a red-sideband drive".into(),
        });
    }
    let ratio = d.omega_b / d.omega_r;
    if (ratio - balance_ratio).abs() > balance_tol {
        return Err(Error::UnbalancedDrives {
            ratio,
            required: balance_ratio,
        });
    }
    let model = ModelParams::new(omega0_rot, omega_rot, gamma_eff, g_jc)?;
    Ok(IonCalibration {
        carrier,
        derived: IonDerivedParams {
            omega_0,
            eps_s,
            omega_dd,
            omega_rot,
            omega0_rot,
            g_eff: g_jc,
            gamma_eff,
            g_jc,
            g_ajc,
            g1_r,
            g1_b,
            g2_r,
            g2_b,
            balance_ratio,
        },
        model,
        basis_note: MODEL_BASIS_NOTE,
    })
}

/// Target model couplings expressed relative to ωᴿ, plus the fixed hardware.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IonTarget {
    pub nu: f64,
    pub eta: f64,
    pub omega_s: f64,
    pub gamma_ratio: f64,
    pub g_ratio: f64,
    pub omega0_ratio: f64,
}

/// Inverse of [`ion_calibration`]: drive settings realizing a target model.
/// The sign of `gamma_ratio` selects the carrier phase.
pub fn design_ion_drives(t: &IonTarget) -> Result<IonDriveParams> {
    if t.gamma_ratio == 0.0 || !t.gamma_ratio.is_finite() {
        return Err(Error::InvalidParameter {
            name: "gamma_ratio",
            reason: "the engineered Stark term is never zero".into(),
        });
    }
    if !(t.eta > 0.0 && t.omega_s > 0.0 && t.nu > 0.0) {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: "eta, omega_s and nu must be positive".into(),
        });
    }
    let carrier = if t.gamma_ratio < 0.0 {
        CarrierPhase::Zero
    } else {
        CarrierPhase::MinusPi
    };
    let s = carrier.sign();
    let gamma = -s * 0.5 * t.eta * t.eta * t.omega_s;
    let omega_rot = gamma / t.gamma_ratio;
    let g = t.g_ratio * omega_rot;
    let omega0_rot = t.omega0_ratio * omega_rot;
    let omega_0 = t.omega_s * (1.0 - 0.5 * t.eta * t.eta);
    let omega_dd = s * omega_0 - omega0_rot;
    let eps = t.omega_s / t.nu;
    let omega_r = 4.0 * g / (t.eta * (1.0 + s * eps));
    let omega_b = omega_r * (1.0 + s * eps) / (1.0 - s * eps);
    let d = IonDriveParams {
        nu: t.nu,
        eta: t.eta,
        omega_r,
        omega_b,
        omega_s: t.omega_s,
        delta_r: omega_dd + omega_rot,
        delta_b: omega_dd - omega_rot,
        phi_r: -PI,
        phi_b: -PI,
        phi_s: carrier.phase(),
    };
    d.validate()?;
    Ok(d)
}

/// Maps an ion-frame state into the frame of the calibrated model,
/// exp(i[(Ω_DD/2)σx − ωᴿ a†a]t) ψ.
pub fn to_model_frame(psi: &StateVector, derived: &IonDerivedParams, t: f64) -> StateVector {
    let space = psi.space();
    let f = space.fock_dim();
    let theta = 0.5 * derived.omega_dd * t;
    let (c, s) = (C64::new(theta.cos(), 0.0), C64::new(0.0, theta.sin()));
    let amp = psi.amplitudes();
    let mut out = DVector::zeros(space.dim());
    for n in 0..f {
        let ph = C64::from_polar(1.0, -derived.omega_rot * n as f64 * t);
        let (e, g) = (amp[n], amp[f + n]);
        out[n] = ph * (c * e + s * g);
        out[f + n] = ph * (s * e + c * g);
    }
    StateVector::from_raw(space, out)
}

/// Exact ion Hamiltonian
/// H(t) = Σ_j (Ω_j/2) σ+ D(iη e^{iνt}) e^{−iΔ_j t} e^{iφ_j} + h.c.
/// with Δ_red = δ_r − ν, Δ_blue = δ_b + ν, Δ_carrier = 0.
///
/// Uses D(iη e^{iνt}) = P D(iη) P† with P = diag(e^{imνt}), so one
/// displacement matrix serves every t.
#[derive(Clone, Debug)]
pub struct IonHamiltonian {
    space: HilbertSpace,
    nu: f64,
    /// Row-major D(iη) and its adjoint.
    d0: Vec<C64>,
    d0_adj: Vec<C64>,
    drives: Vec<(C64, f64)>,
    leakage: f64,
    truncation_warning: bool,
}

impl IonHamiltonian {
    pub fn new(d: &IonDriveParams, space: HilbertSpace) -> Result<Self> {
        d.validate()?;
        let disp = displacement_op(space, C64::new(0.0, d.eta));
        if disp.truncation_warning {
            log::warn!(
                "displacement truncation leakage {:.3e} at n_max = {}",
                disp.leakage,
                space.n_max()
            );
        }
        let m = disp.op.matrix();
        let f = space.fock_dim();
        let mut d0 = Vec::with_capacity(f * f);
        let mut d0_adj = Vec::with_capacity(f * f);
        for r in 0..f {
            for c in 0..f {
                d0.push(m[(r, c)]);
                d0_adj.push(m[(c, r)].conj());
            }
        }
        let drives = [
            (d.omega_r, d.phi_r, d.delta_r - d.nu),
            (d.omega_b, d.phi_b, d.delta_b + d.nu),
            (d.omega_s, d.phi_s, 0.0),
        ]
        .into_iter()
        .filter(|(w, _, _)| *w != 0.0)
        .map(|(w, phi, det)| (C64::from_polar(0.5 * w, phi), det))
        .collect();
        Ok(Self {
            space,
            nu: d.nu,
            d0,
            d0_adj,
            drives,
            leakage: disp.leakage,
            truncation_warning: disp.truncation_warning,
        })
    }

    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    pub fn truncation_warning(&self) -> bool {
        self.truncation_warning
    }

    fn envelope(&self, t: f64) -> C64 {
        self.drives
            .iter()
            .map(|(amp, det)| amp * C64::from_polar(1.0, -det * t))
            .sum()
    }

    fn trap_phases(&self, t: f64) -> Vec<C64> {
        let step = C64::from_polar(1.0, self.nu * t);
        let mut p = Vec::with_capacity(self.space.fock_dim());
        let mut acc = C64::new(1.0, 0.0);
        for m in 0..self.space.fock_dim() {
            // resync against accumulated rounding every few levels
            if m % 8 == 0 {
                acc = C64::from_polar(1.0, m as f64 * self.nu * t);
            }
            p.push(acc);
            acc *= step;
        }
        p
    }

    /// out = scale · P M P† x for row-major M.
    fn conjugated_apply(m: &[C64], p: &[C64], x: &[C64], scale: C64, out: &mut [C64]) {
        let f = p.len();
        let mut u = [ZERO; 64];
        let mut heap;
        let u: &mut [C64] = if f <= 64 {
            &mut u[..f]
        } else {
            heap = vec![ZERO; f];
            &mut heap
        };
        for n in 0..f {
            u[n] = p[n].conj() * x[n];
        }
        for r in 0..f {
            let row = &m[r * f..(r + 1) * f];
            let mut acc = ZERO;
            for (a, b) in row.iter().zip(u.iter()) {
                acc += a * b;
            }
            out[r] = scale * p[r] * acc;
        }
    }
}

impl TimeDependentHamiltonian for IonHamiltonian {
    fn space(&self) -> HilbertSpace {
        self.space
    }

    fn at(&self, t: f64) -> QOperator {
        let f = self.space.fock_dim();
        let fe = self.envelope(t);
        let p = self.trap_phases(t);
        let mut m = DMatrix::zeros(2 * f, 2 * f);
        for r in 0..f {
            for c in 0..f {
                let v = fe * p[r] * self.d0[r * f + c] * p[c].conj();
                m[(r, f + c)] = v;
                m[(f + c, r)] = v.conj();
            }
        }
        QOperator::new(self.space, m).expect("dimension fixed by construction")
    }

    fn apply_minus_i(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let f = self.space.fock_dim();
        let fe = self.envelope(t);
        let p = self.trap_phases(t);
        let (pe, pg) = psi.split_at(f);
        let (oe, og) = out.split_at_mut(f);
        Self::conjugated_apply(&self.d0, &p, pg, -I * fe, oe);
        Self::conjugated_apply(&self.d0_adj, &p, pe, -I * fe.conj(), og);
    }
}

/// Exact-displacement ion Hamiltonian at one instant.
pub fn ion_full_hamiltonian(d: &IonDriveParams, space: HilbertSpace, t: f64) -> Result<QOperator> {
    Ok(IonHamiltonian::new(d, space)?.at(t))
}

/// Lamb-Dicke expansion of the ion Hamiltonian after the vibrational RWA:
/// [c_r e^{−iδ_r t} a + c_b e^{−iδ_b t} a† + c_S(1 − η²/2 − η² a†a)] σ+ + h.c.
/// with c_j = i^{[j≠S]} η^{[j≠S]} (Ω_j/2) e^{iφ_j}. At φ = −π this is
/// −i g_r a σ+ e^{−iδ_r t} − i g_b a† σ+ e^{−iδ_b t} − g_S σ+ + h.c.
#[derive(Clone, Debug)]
pub struct IonLdHamiltonian {
    space: HilbertSpace,
    red: C64,
    blue: C64,
    carrier: C64,
    eta_sq: f64,
    delta_r: f64,
    delta_b: f64,
}

impl IonLdHamiltonian {
    pub fn new(d: &IonDriveParams, space: HilbertSpace) -> Result<Self> {
        d.validate()?;
        Ok(Self {
            space,
            red: I * C64::from_polar(0.5 * d.eta * d.omega_r, d.phi_r),
            blue: I * C64::from_polar(0.5 * d.eta * d.omega_b, d.phi_b),
            carrier: C64::from_polar(0.5 * d.omega_s, d.phi_s),
            eta_sq: d.eta * d.eta,
            delta_r: d.delta_r,
            delta_b: d.delta_b,
        })
    }

    /// Red and blue sideband coefficients at time t.
    fn coefficients(&self, t: f64) -> (C64, C64) {
        (
            self.red * C64::from_polar(1.0, -self.delta_r * t),
            self.blue * C64::from_polar(1.0, -self.delta_b * t),
        )
    }

    fn carrier_diag(&self, n: usize) -> C64 {
        self.carrier * (1.0 - 0.5 * self.eta_sq - self.eta_sq * n as f64)
    }
}

impl TimeDependentHamiltonian for IonLdHamiltonian {
    fn space(&self) -> HilbertSpace {
        self.space
    }

    fn at(&self, t: f64) -> QOperator {
        let f = self.space.fock_dim();
        let (r, b) = self.coefficients(t);
        let mut m = DMatrix::zeros(2 * f, 2 * f);
        for n in 0..f {
            m[(n, f + n)] = self.carrier_diag(n);
            if n + 1 < f {
                let sq = ((n + 1) as f64).sqrt();
                // a: |n+1⟩ → |n⟩ ; a†: |n⟩ → |n+1⟩
                m[(n, f + n + 1)] = r * sq;
                m[(n + 1, f + n)] = b * sq;
            }
        }
        let upper = m.clone();
        m += upper.adjoint();
        QOperator::new(self.space, m).expect("dimension fixed by construction")
    }

    fn apply_minus_i(&self, t: f64, psi: &[C64], out: &mut [C64]) {
        let f = self.space.fock_dim();
        let (r, b) = self.coefficients(t);
        let (rc, bc) = (r.conj(), b.conj());
        let (pe, pg) = psi.split_at(f);
        let (oe, og) = out.split_at_mut(f);
        for n in 0..f {
            let cd = self.carrier_diag(n);
            let mut ke = cd * pg[n];
            let mut kg = cd.conj() * pe[n];
            if n + 1 < f {
                let sq = ((n + 1) as f64).sqrt();
                ke += r * sq * pg[n + 1];
                kg += bc * sq * pe[n + 1];
            }
            if n > 0 {
                let sq = (n as f64).sqrt();
                ke += b * sq * pg[n - 1];
                kg += rc * sq * pe[n - 1];
            }
            oe[n] = -I * ke;
            og[n] = -I * kg;
        }
    }
}

/// Lamb-Dicke ion Hamiltonian at one instant.
pub fn ion_ld_hamiltonian(d: &IonDriveParams, space: HilbertSpace, t: f64) -> Result<QOperator> {
    Ok(IonLdHamiltonian::new(d, space)?.at(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::{ladder_ops, ModeOperator};
    use approx::assert_abs_diff_eq;

    const TWO_PI: f64 = 2.0 * PI;

    fn fig4a() -> IonDriveParams {
        // rad/ms
        let omega_s = TWO_PI * 120.0;
        let eta: f64 = 0.1;
        let omega_0 = omega_s * (1.0 - 0.5 * eta * eta);
        let omega_rot = TWO_PI * 1.5;
        let omega0_rot = 3.0 * omega_rot;
        let dd = omega_0 - omega0_rot;
        IonDriveParams {
            nu: TWO_PI * 4980.0,
            eta,
            omega_r: TWO_PI * 2.94,
            omega_b: TWO_PI * 2.94 * (1.0 + 120.0 / 4980.0) / (1.0 - 120.0 / 4980.0),
            omega_s,
            delta_r: dd + omega_rot,
            delta_b: dd - omega_rot,
            phi_r: -PI,
            phi_b: -PI,
            phi_s: 0.0,
        }
    }

    #[test]
    fn rejects_unsupported_phases() {
        let mut d = fig4a();
        d.phi_s = 0.5;
        assert!(matches!(d.validate(), Err(Error::UnsupportedPhases(_))));
        let mut d = fig4a();
        d.phi_r = 0.0;
        assert!(matches!(ion_calibration(&d), Err(Error::UnsupportedPhases(_))));
    }

    #[test]
    fn calibration_branch_zero() {
        let c = ion_calibration(&fig4a()).unwrap();
        assert_eq!(c.carrier, CarrierPhase::Zero);
        assert_abs_diff_eq!(c.derived.gamma_eff / TWO_PI, -0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(c.derived.omega_rot / TWO_PI, 1.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c.derived.omega0_rot / TWO_PI, 4.5, epsilon = 1e-9);
        assert_abs_diff_eq!(c.derived.g_jc, c.derived.g_ajc, epsilon = 1e-12);
        assert_abs_diff_eq!(
            c.derived.omega_dd,
            c.derived.omega_0 - c.derived.omega0_rot,
            epsilon = 1e-9
        );
        assert_eq!(c.model.omega, c.derived.omega_rot);
    }

    #[test]
    fn calibration_branch_minus_pi() {
        let d = design_ion_drives(&IonTarget {
            nu: TWO_PI * 4980.0,
            eta: 0.1,
            omega_s: TWO_PI * 120.0,
            gamma_ratio: 0.4,
            g_ratio: 0.05,
            omega0_ratio: -1.0,
        })
        .unwrap();
        assert_eq!(d.phi_s, -PI);
        let c = ion_calibration(&d).unwrap();
        let x = c.derived;
        assert!(x.gamma_eff > 0.0);
        assert_abs_diff_eq!(x.omega_dd, -(x.omega_0 + x.omega0_rot), epsilon = 1e-9);
        assert_abs_diff_eq!(x.g_eff, 0.25 * d.eta * d.omega_r * (1.0 - x.eps_s), epsilon = 1e-12);
        assert_abs_diff_eq!(c.model.gamma / c.model.omega, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(c.model.g / c.model.omega, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(c.model.omega0 / c.model.omega, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn unbalanced_drives_rejected() {
        let mut d = fig4a();
        d.omega_b = TWO_PI * 3.08;
        assert!(matches!(ion_calibration(&d), Err(Error::UnbalancedDrives { .. })));
        assert!(ion_calibration_with_tolerance(&d, 5e-3).is_ok());
    }

    #[test]
    fn design_round_trip() {
        let target = IonTarget {
            nu: TWO_PI * 4980.0,
            eta: 0.05,
            omega_s: TWO_PI * 120.0,
            gamma_ratio: -0.1,
            g_ratio: 0.3,
            omega0_ratio: -2.4385,
        };
        let d = design_ion_drives(&target).unwrap();
        let c = ion_calibration(&d).unwrap();
        assert_abs_diff_eq!(c.model.g / c.model.omega, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(c.model.omega0 / c.model.omega, -2.4385, epsilon = 1e-12);
        assert_abs_diff_eq!(d.omega_r / TWO_PI, 35.2, epsilon = 0.1);
        assert_abs_diff_eq!(d.omega_b / TWO_PI, 36.9, epsilon = 0.1);
        assert_abs_diff_eq!(c.derived.omega_dd / TWO_PI, 123.5, epsilon = 0.1);
    }

    #[test]
    fn full_hamiltonian_hermitian_and_fast_apply_consistent() {
        let s = HilbertSpace::new(12).unwrap();
        let d = fig4a();
        let h = IonHamiltonian::new(&d, s).unwrap();
        let psi: Vec<C64> = (0..s.dim())
            .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()))
            .collect();
        for &t in &[0.0, 1.3e-3, 0.271, 0.9] {
            let m = h.at(t);
            assert!(m.is_hermitian(1e-12));
            let mut out = vec![ZERO; s.dim()];
            h.apply_minus_i(t, &psi, &mut out);
            let expect = m.matrix() * DVector::from_column_slice(&psi) * (-I);
            for (a, b) in out.iter().zip(expect.iter()) {
                assert!((a - b).norm() < 1e-9 * (1.0 + b.norm()));
            }
        }
    }

    #[test]
    fn zero_eta_has_no_mode_coupling() {
        let s = HilbertSpace::new(6).unwrap();
        let mut d = fig4a();
        d.eta = 0.0;
        let h = ion_full_hamiltonian(&d, s, 0.37).unwrap();
        let num = ladder_ops(s).number.embed();
        assert!(h.commutator(&num).max_abs() < 1e-12);
    }

    #[test]
    fn red_sideband_first_order_in_eta() {
        // ⟨e,0|H|g,1⟩ over one trap period: only the resonant a-term
        // survives, −i(ηΩ_r/2) up to O(η³)
        let s = HilbertSpace::new(8).unwrap();
        let eta = 0.01;
        let d = IonDriveParams {
            nu: 100.0,
            eta,
            omega_r: 1.0,
            omega_b: 0.0,
            omega_s: 0.0,
            delta_r: 0.0,
            delta_b: 0.0,
            phi_r: -PI,
            phi_b: 0.0,
            phi_s: 0.0,
        };
        let h = IonHamiltonian::new(&d, s).unwrap();
        let samples = 64;
        let period = 2.0 * PI / d.nu;
        let mut acc = ZERO;
        for k in 0..samples {
            let t = period * k as f64 / samples as f64;
            acc += h.at(t).matrix()[(s.index(0, 0), s.index(1, 1))];
        }
        acc /= samples as f64;
        let expect = -I * 0.5 * eta * d.omega_r;
        assert!((acc - expect).norm() < eta.powi(3));
    }

    #[test]
    fn ld_hamiltonian_examples() {
        let s = HilbertSpace::new(5).unwrap();
        let mut d = fig4a();
        d.omega_r = 0.0;
        d.omega_b = 0.0;
        d.phi_s = -PI;
        let h = ion_ld_hamiltonian(&d, s, 0.0).unwrap();
        assert!(h.is_hermitian(1e-12));
        let omega_0 = d.omega_s * (1.0 - 0.5 * d.eta * d.eta);
        let gamma = 0.5 * d.eta * d.eta * d.omega_s;
        for n in 0..=5 {
            let v = h.matrix()[(s.index(0, n), s.index(1, n))];
            assert_abs_diff_eq!(v.re, -(0.5 * omega_0 - gamma * n as f64), epsilon = 1e-10);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn ld_apply_matches_matrix() {
        let s = HilbertSpace::new(7).unwrap();
        let h = IonLdHamiltonian::new(&fig4a(), s).unwrap();
        let psi: Vec<C64> = (0..s.dim())
            .map(|i| C64::new((i as f64 * 1.7).cos(), (i as f64 * 0.3).sin()))
            .collect();
        for &t in &[0.0, 0.013, 2.2] {
            let m = h.at(t);
            assert!(m.is_hermitian(1e-12));
            let mut out = vec![ZERO; s.dim()];
            h.apply_minus_i(t, &psi, &mut out);
            let expect = m.matrix() * DVector::from_column_slice(&psi) * (-I);
            for (a, b) in out.iter().zip(expect.iter()) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn ld_matches_explicit_operator_form() {
        // −i g_r a σ+ e^{−iδ_r t} − i g_b a† σ+ e^{−iδ_b t} − g_S σ+ + h.c.
        let s = HilbertSpace::new(6).unwrap();
        let mut d = fig4a();
        d.phi_s = -PI;
        let t = 0.0123;
        let l = ladder_ops(s);
        let q = crate::qspace::qubit_ops();
        let (gr, gb) = (0.5 * d.eta * d.omega_r, 0.5 * d.eta * d.omega_b);
        let omega_0 = d.omega_s * (1.0 - 0.5 * d.eta * d.eta);
        let gamma = 0.5 * d.eta * d.eta * d.omega_s;
        let fock = s.fock_dim();
        let gs = DMatrix::from_fn(fock, fock, |i, j| {
            if i == j {
                C64::new(0.5 * omega_0 - gamma * i as f64, 0.0)
            } else {
                ZERO
            }
        });
        let k = l.a.matrix() * C64::from_polar(gr, -d.delta_r * t) * (-I)
            + l.a_dag.matrix() * C64::from_polar(gb, -d.delta_b * t) * (-I)
            - gs;
        let half = crate::qspace::embed(&q.plus, &ModeOperator::new(s, k).unwrap());
        let expect = &half + &half.adjoint();
        let h = ion_ld_hamiltonian(&d, s, t).unwrap();
        assert!(h.max_abs_diff(&expect) < 1e-10);
    }

    #[test]
    fn model_frame_is_unitary_and_trivial_at_zero() {
        let s = HilbertSpace::new(4).unwrap();
        let c = ion_calibration(&fig4a()).unwrap();
        let psi = crate::qspace::basis_state(s, crate::qspace::QubitLabel::E, 2).unwrap();
        let same = to_model_frame(&psi, &c.derived, 0.0);
        assert!(same.fidelity(&psi).unwrap() > 1.0 - 1e-15);
        let moved = to_model_frame(&psi, &c.derived, 0.37);
        assert_abs_diff_eq!(moved.norm(), 1.0, epsilon = 1e-14);
        // |±⟩ populations are untouched by the σx rotation
        let plus = crate::qspace::basis_state(s, crate::qspace::QubitLabel::Plus, 2).unwrap();
        let moved = to_model_frame(&plus, &c.derived, 0.37);
        assert_abs_diff_eq!(moved.fidelity(&plus).unwrap(), 1.0, epsilon = 1e-14);
    }
}
