use nalgebra::DMatrix;
use serde::Serialize;

use crate::qspace::{DensityMatrix, HilbertSpace, LabelBasis, QubitLabel, StateVector, C64};

/// Reduced qubit block at one Fock number: (ρ_ee, ρ_gg, ρ_eg).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QubitBlock {
    pub ee: f64,
    pub gg: f64,
    pub eg: C64,
}

impl QubitBlock {
    /// ⟨label| ρ_n |label⟩ for any of the four labels.
    pub fn population(&self, label: QubitLabel) -> f64 {
        match label {
            QubitLabel::E => self.ee,
            QubitLabel::G => self.gg,
            QubitLabel::Plus => 0.5 * (self.ee + self.gg) + self.eg.re,
            QubitLabel::Minus => 0.5 * (self.ee + self.gg) - self.eg.re,
        }
    }
}

/// Expectation values of a state or density matrix.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observables {
    pub n_mean: f64,
    /// ⟨σ+σ−⟩, the bare excited-state population.
    pub sigma_pp: f64,
    /// ⟨σz(−1)^{a†a}⟩
    pub parity: f64,
    pub blocks: Vec<QubitBlock>,
}

impl Observables {
    pub fn population(&self, label: QubitLabel, n: usize) -> Option<f64> {
        self.blocks.get(n).map(|b| b.population(label))
    }

    pub fn total_population(&self) -> f64 {
        self.blocks.iter().map(|b| b.ee + b.gg).sum()
    }

    /// Named scalar values; populations are given in `basis`.
    pub fn named(&self, basis: LabelBasis) -> Vec<(String, f64)> {
        let mut out = vec![
            ("n_mean".to_string(), self.n_mean),
            ("sigma_pp".to_string(), self.sigma_pp),
            ("parity".to_string(), self.parity),
        ];
        for label in basis.labels() {
            for (n, b) in self.blocks.iter().enumerate() {
                out.push((population_name(label, n), b.population(label)));
            }
        }
        out
    }

    fn from_blocks(blocks: Vec<QubitBlock>) -> Self {
        let mut n_mean = 0.0;
        let mut sigma_pp = 0.0;
        let mut parity = 0.0;
        for (n, b) in blocks.iter().enumerate() {
            n_mean += n as f64 * (b.ee + b.gg);
            sigma_pp += b.ee;
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            parity += s * (b.ee - b.gg);
        }
        Self {
            n_mean,
            sigma_pp,
            parity,
            blocks,
        }
    }
}

/// Column name of a population series, e.g. `P_e_3` or `P_+_2`.
pub fn population_name(label: QubitLabel, n: usize) -> String {
    format!("P_{}_{}", label.symbol(), n)
}

pub(crate) fn observables_of_amplitudes(space: HilbertSpace, amp: &[C64]) -> Observables {
    let f = space.fock_dim();
    let blocks = (0..f)
        .map(|n| {
            let (e, g) = (amp[n], amp[f + n]);
            QubitBlock {
                ee: e.norm_sqr(),
                gg: g.norm_sqr(),
                eg: e * g.conj(),
            }
        })
        .collect();
    Observables::from_blocks(blocks)
}

pub(crate) fn observables_of_matrix(space: HilbertSpace, rho: &DMatrix<C64>) -> Observables {
    let f = space.fock_dim();
    let blocks = (0..f)
        .map(|n| QubitBlock {
            ee: rho[(n, n)].re,
            gg: rho[(f + n, f + n)].re,
            eg: rho[(n, f + n)],
        })
        .collect();
    Observables::from_blocks(blocks)
}

pub fn observables(psi: &StateVector) -> Observables {
    observables_of_amplitudes(psi.space(), psi.amplitudes().as_slice())
}

pub fn density_observables(rho: &DensityMatrix) -> Observables {
    observables_of_matrix(rho.space(), rho.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qspace::basis_state;
    use approx::assert_abs_diff_eq;
    use nalgebra::DVector;

    fn sp() -> HilbertSpace {
        HilbertSpace::new(4).unwrap()
    }

    #[test]
    fn fock_state() {
        let o = observables(&basis_state(sp(), QubitLabel::E, 3).unwrap());
        assert_eq!(o.n_mean, 3.0);
        assert_eq!(o.population(QubitLabel::E, 3), Some(1.0));
        assert_eq!(o.parity, -1.0);
    }

    #[test]
    fn superposition() {
        let s = sp();
        let mut v = DVector::zeros(s.dim());
        v[s.index(0, 0)] = C64::new(1.0, 0.0);
        v[s.index(1, 1)] = C64::new(1.0, 0.0);
        let o = observables(&StateVector::normalized(s, v).unwrap());
        assert_abs_diff_eq!(o.n_mean, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(o.sigma_pp, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn sigma_x_basis() {
        let o = observables(&basis_state(sp(), QubitLabel::Plus, 2).unwrap());
        assert_abs_diff_eq!(o.population(QubitLabel::Plus, 2).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.population(QubitLabel::Minus, 2).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(o.population(QubitLabel::E, 2).unwrap(), 0.5, epsilon = 1e-15);
        let named = o.named(LabelBasis::SigmaX);
        assert!(named.iter().any(|(k, v)| k == "P_+_2" && (*v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn density_and_state_agree() {
        let psi = basis_state(sp(), QubitLabel::Minus, 1).unwrap();
        let a = observables(&psi);
        let b = density_observables(&DensityMatrix::from_pure(&psi));
        for n in 0..=4 {
            for l in [QubitLabel::E, QubitLabel::G, QubitLabel::Plus, QubitLabel::Minus] {
                assert_abs_diff_eq!(a.population(l, n).unwrap(), b.population(l, n).unwrap(), epsilon = 1e-15);
            }
        }
    }
}
