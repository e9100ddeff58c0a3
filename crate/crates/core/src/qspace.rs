//! Operators and states on the composite qubit ⊗ truncated-Fock space.
//!
//! Coordinates are ordered qubit-first: index = qubit_index·(n_max+1) + n,
//! with qubit_index 0 for |e⟩ and 1 for |g⟩. Ladder operators drop every
//! matrix element that would leave the truncated space.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// A 2×2 operator on the qubit factor, in the (|e⟩, |g⟩) basis.
pub type QubitMatrix = Matrix2<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Number of top Fock levels excluded from the displacement-operator
/// interior block when estimating truncation leakage.
pub const DISPLACEMENT_PADDING: usize = 5;

/// Leakage above which a truncated displacement operator is flagged.
pub const DISPLACEMENT_LEAKAGE_LIMIT: f64 = 1e-6;

/// Qubit ⊗ Fock space truncated at `n_max` bosons.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HilbertSpace {
    n_max: usize,
}

impl HilbertSpace {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::InvalidParameter {
                name: "n_max",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn fock_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        2 * self.fock_dim()
    }

    /// Composite coordinate of |qubit, n⟩ where qubit 0 is |e⟩ and 1 is |g⟩.
    pub fn index(&self, qubit: usize, n: usize) -> usize {
        debug_assert!(qubit < 2 && n <= self.n_max);
        qubit * self.fock_dim() + n
    }

    /// Fock number of a composite coordinate.
    pub fn fock_of(&self, index: usize) -> usize {
        index % self.fock_dim()
    }

    fn check_fock(&self, n: usize) -> Result<()> {
        if n > self.n_max {
            return Err(Error::FockIndexOutOfRange { n, n_max: self.n_max });
        }
        Ok(())
    }

    fn same_as(&self, other: &HilbertSpace) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

/// Qubit labels of the bare basis {e, g} and the σx eigenbasis {+, −}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitLabel {
    E,
    G,
    Plus,
    Minus,
}

impl QubitLabel {
    /// Amplitudes on (|e⟩, |g⟩).
    pub fn amplitudes(self) -> [C64; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            QubitLabel::E => [ONE, ZERO],
            QubitLabel::G => [ZERO, ONE],
            QubitLabel::Plus => [C64::new(h, 0.0), C64::new(h, 0.0)],
            QubitLabel::Minus => [C64::new(h, 0.0), C64::new(-h, 0.0)],
        }
    }

    pub fn basis(self) -> LabelBasis {
        match self {
            QubitLabel::E | QubitLabel::G => LabelBasis::Bare,
            QubitLabel::Plus | QubitLabel::Minus => LabelBasis::SigmaX,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            QubitLabel::E => "e",
            QubitLabel::G => "g",
            QubitLabel::Plus => "+",
            QubitLabel::Minus => "-",
        }
    }
}

impl fmt::Display for QubitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for QubitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "e" | "excited" => Ok(QubitLabel::E),
            "g" | "ground" => Ok(QubitLabel::G),
            "+" | "plus" => Ok(QubitLabel::Plus),
            "-" | "minus" => Ok(QubitLabel::Minus),
            other => Err(Error::InvalidParameter {
                name: "qubit label",
                reason: format!("unknown label `{other}` (expected e, g, plus or minus)"),
            }),
        }
    }
}

/// Basis in which qubit populations are reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelBasis {
    #[default]
    Bare,
    SigmaX,
}

impl LabelBasis {
    /// The two labels, ordered like the qubit coordinate (e/+ first).
    pub fn labels(self) -> [QubitLabel; 2] {
        match self {
            LabelBasis::Bare => [QubitLabel::E, QubitLabel::G],
            LabelBasis::SigmaX => [QubitLabel::Plus, QubitLabel::Minus],
        }
    }
}

/// Operator acting on the Fock factor only.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeOperator {
    space: HilbertSpace,
    matrix: DMatrix<C64>,
}

impl ModeOperator {
    pub fn new(space: HilbertSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.fock_dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn identity(space: HilbertSpace) -> Self {
        let d = space.fock_dim();
        Self {
            space,
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.adjoint(),
        }
    }

    /// Lift to the composite space as 1 ⊗ self.
    pub fn embed(&self) -> QOperator {
        embed(&QubitMatrix::identity(), self)
    }
}

/// Operator on the full qubit ⊗ Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct QOperator {
    space: HilbertSpace,
    matrix: DMatrix<C64>,
}

impl QOperator {
    pub fn new(space: HilbertSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let d = space.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(Self { space, matrix })
    }

    pub fn zeros(space: HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space,
            matrix: DMatrix::zeros(d, d),
        }
    }

    pub fn identity(space: HilbertSpace) -> Self {
        let d = space.dim();
        Self {
            space,
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            space: self.space,
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        Self {
            space: self.space,
            matrix: &self.matrix * c,
        }
    }

    /// Largest entrywise deviation from Hermiticity.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in i..d {
                let e = (self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm();
                worst = worst.max(e);
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Largest entrywise |self − other|.
    pub fn max_abs_diff(&self, other: &QOperator) -> f64 {
        assert_eq!(self.space, other.space, "operators on different spaces");
        self.matrix
            .iter()
            .zip(other.matrix.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn commutator(&self, other: &QOperator) -> QOperator {
        &(self * other) - &(other * self)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<DVector<C64>> {
        self.space.same_as(&psi.space)?;
        Ok(&self.matrix * &psi.amplitudes)
    }

    pub fn expectation(&self, psi: &StateVector) -> Result<C64> {
        let h_psi = self.apply(psi)?;
        Ok(psi.amplitudes.dotc(&h_psi))
    }

    /// Diagonal part of the operator.
    pub fn diagonal(&self) -> QOperator {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            m[(i, i)] = self.matrix[(i, i)];
        }
        QOperator {
            space: self.space,
            matrix: m,
        }
    }
}

impl<'a> Add<&'a QOperator> for &'a QOperator {
    type Output = QOperator;
    fn add(self, rhs: &QOperator) -> QOperator {
        assert_eq!(self.space, rhs.space, "operators on different spaces");
        QOperator {
            space: self.space,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl Add for QOperator {
    type Output = QOperator;
    fn add(self, rhs: QOperator) -> QOperator {
        &self + &rhs
    }
}

impl<'a> Sub<&'a QOperator> for &'a QOperator {
    type Output = QOperator;
    fn sub(self, rhs: &QOperator) -> QOperator {
        assert_eq!(self.space, rhs.space, "operators on different spaces");
        QOperator {
            space: self.space,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl Sub for QOperator {
    type Output = QOperator;
    fn sub(self, rhs: QOperator) -> QOperator {
        &self - &rhs
    }
}

impl<'a> Mul<&'a QOperator> for &'a QOperator {
    type Output = QOperator;
    fn mul(self, rhs: &QOperator) -> QOperator {
        assert_eq!(self.space, rhs.space, "operators on different spaces");
        QOperator {
            space: self.space,
            matrix: &self.matrix * &rhs.matrix,
        }
    }
}

impl Mul for QOperator {
    type Output = QOperator;
    fn mul(self, rhs: QOperator) -> QOperator {
        &self * &rhs
    }
}

impl Mul<f64> for QOperator {
    type Output = QOperator;
    fn mul(self, rhs: f64) -> QOperator {
        self.scaled(C64::new(rhs, 0.0))
    }
}

/// Normalized pure state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    space: HilbertSpace,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Wraps amplitudes that must already be normalized to within 1e-9.
    pub fn new(space: HilbertSpace, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { space, amplitudes })
    }

    pub fn normalized(space: HilbertSpace, amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized { norm });
        }
        Self::new(space, amplitudes / C64::new(norm, 0.0))
    }

    /// Used by propagators whose output is only approximately normalized.
    pub(crate) fn from_raw(space: HilbertSpace, amplitudes: DVector<C64>) -> Self {
        Self { space, amplitudes }
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        self.space.same_as(&other.space)?;
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn fidelity(&self, other: &StateVector) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }
}

/// Density matrix on the composite space.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    space: HilbertSpace,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-10), unit trace (1e-8) and positivity (−1e-8).
    pub fn new(space: HilbertSpace, matrix: DMatrix<C64>) -> Result<Self> {
        let op = QOperator::new(space, matrix)?;
        let herm = op.hermiticity_error();
        if herm > 1e-10 {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (deviation {herm:e})"
            )));
        }
        let rho = Self {
            space,
            matrix: op.into_matrix(),
        };
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr} != 1")));
        }
        let min = rho.min_eigenvalue();
        if min < -1e-8 {
            return Err(Error::InvalidDensityMatrix(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(rho)
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        let m = &psi.amplitudes * psi.amplitudes.adjoint();
        Self {
            space: psi.space,
            matrix: m,
        }
    }

    pub(crate) fn from_raw(space: HilbertSpace, matrix: DMatrix<C64>) -> Self {
        Self { space, matrix }
    }

    pub fn space(&self) -> HilbertSpace {
        self.space
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        // symmetrize to absorb round-off before the Hermitian solver
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        SymmetricEigen::new(h)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Annihilation, creation and number operators on the Fock factor.
#[derive(Clone, Debug)]
pub struct LadderOps {
    pub a: ModeOperator,
    pub a_dag: ModeOperator,
    pub number: ModeOperator,
}

pub fn ladder_ops(space: HilbertSpace) -> LadderOps {
    let d = space.fock_dim();
    let mut a = DMatrix::zeros(d, d);
    let mut num = DMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    for n in 0..d {
        num[(n, n)] = C64::new(n as f64, 0.0);
    }
    let a_dag = a.adjoint();
    LadderOps {
        a: ModeOperator { space, matrix: a },
        a_dag: ModeOperator {
            space,
            matrix: a_dag,
        },
        number: ModeOperator { space, matrix: num },
    }
}

/// Pauli matrices and qubit ladder operators, σ+ = |e⟩⟨g|.
#[derive(Clone, Copy, Debug)]
pub struct Paulis {
    pub x: QubitMatrix,
    pub y: QubitMatrix,
    pub z: QubitMatrix,
    pub plus: QubitMatrix,
    pub minus: QubitMatrix,
}

pub fn qubit_ops() -> Paulis {
    Paulis {
        x: QubitMatrix::new(ZERO, ONE, ONE, ZERO),
        y: QubitMatrix::new(ZERO, -I, I, ZERO),
        z: QubitMatrix::new(ONE, ZERO, ZERO, -ONE),
        plus: QubitMatrix::new(ZERO, ONE, ZERO, ZERO),
        minus: QubitMatrix::new(ZERO, ZERO, ONE, ZERO),
    }
}

/// qubit ⊗ mode with the qubit factor as the slow index.
pub fn embed(qubit: &QubitMatrix, mode: &ModeOperator) -> QOperator {
    let space = mode.space;
    let f = space.fock_dim();
    let mut m = DMatrix::zeros(2 * f, 2 * f);
    for qi in 0..2 {
        for qj in 0..2 {
            let q = qubit[(qi, qj)];
            if q == ZERO {
                continue;
            }
            for r in 0..f {
                for c in 0..f {
                    m[(qi * f + r, qj * f + c)] = q * mode.matrix[(r, c)];
                }
            }
        }
    }
    QOperator { space, matrix: m }
}

/// |label⟩ ⊗ |n⟩
pub fn basis_state(space: HilbertSpace, label: QubitLabel, n: usize) -> Result<StateVector> {
    space.check_fock(n)?;
    let amps = label.amplitudes();
    let mut v = DVector::zeros(space.dim());
    v[space.index(0, n)] = amps[0];
    v[space.index(1, n)] = amps[1];
    Ok(StateVector {
        space,
        amplitudes: v,
    })
}

/// Truncated displacement operator with a leakage estimate.
#[derive(Clone, Debug)]
pub struct Displacement {
    pub op: ModeOperator,
    /// Largest column-norm deficit on the interior block
    /// (columns n ≤ n_max − [`DISPLACEMENT_PADDING`]).
    pub leakage: f64,
    pub truncation_warning: bool,
}

/// ln(k!) for k = 0..=n.
pub(crate) fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Generalized Laguerre polynomials L_k^{(alpha)}(x) for k = 0..=k_max.
pub(crate) fn laguerre_sequence(k_max: usize, alpha: f64, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(1.0);
    if k_max == 0 {
        return out;
    }
    out.push(1.0 + alpha - x);
    for k in 1..k_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * out[k] - (kf + alpha) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
    out
}

/// D(z) = exp(z a† − z* a) from the closed-form Laguerre matrix elements
/// ⟨m|D(z)|n⟩ = √(n!/m!) z^{m−n} e^{−|z|²/2} L_n^{(m−n)}(|z|²) for m ≥ n.
pub fn displacement_op(space: HilbertSpace, z: C64) -> Displacement {
    let d = space.fock_dim();
    let r = z.norm();
    if r == 0.0 {
        return Displacement {
            op: ModeOperator::identity(space),
            leakage: 0.0,
            truncation_warning: false,
        };
    }
    let x = r * r;
    let ln_r = r.ln();
    let unit = z / r;
    let lnf = ln_factorials(d);
    let damp = -0.5 * x;
    let mut m = DMatrix::zeros(d, d);
    for alpha in 0..d {
        let lag = laguerre_sequence(d - 1 - alpha, alpha as f64, x);
        let phase = unit.powu(alpha as u32);
        // (−z*)^α has phase (−unit*)^α
        let phase_upper = (-unit.conj()).powu(alpha as u32);
        for (n, l) in lag.iter().enumerate() {
            let mm = n + alpha;
            let mag = (0.5 * (lnf[n] - lnf[mm]) + alpha as f64 * ln_r + damp).exp() * l;
            m[(mm, n)] = phase * mag;
            if alpha > 0 {
                m[(n, mm)] = phase_upper * mag;
            }
        }
    }
    let interior = d.saturating_sub(1 + DISPLACEMENT_PADDING);
    let leakage = (0..=interior)
        .map(|c| 1.0 - m.column(c).norm_squared())
        .fold(0.0_f64, f64::max)
        .max(0.0);
    Displacement {
        op: ModeOperator { space, matrix: m },
        leakage,
        truncation_warning: leakage > DISPLACEMENT_LEAKAGE_LIMIT,
    }
}
