//! Perturbative analytics of the interaction-picture Rabi-Stark model:
//! first-order detunings, second-order Stark shifts and odd-k photon
//! channels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelParams;

/// Denominators smaller than this multiple of the coupling mark a channel
/// as near-resonant.
pub const NEAR_RESONANCE_FACTOR: f64 = 10.0;

/// Bisection stops once the bracket is narrower than this.
pub const ROOT_TOLERANCE: f64 = 1e-10;

/// Sign changes found by subdividing the bracket into this many cells.
const ROOT_SUBDIVISIONS: usize = 4000;

/// Anti-JC (`Plus`, |g,n⟩ ↔ |e,n+k⟩) or JC (`Minus`, |e,n⟩ ↔ |g,n+k⟩).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Branch::Plus => "+",
            Branch::Minus => "-",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for Branch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "+" | "plus" | "ajc" | "anti-jc" => Ok(Branch::Plus),
            "-" | "minus" | "jc" => Ok(Branch::Minus),
            other => Err(Error::InvalidParameter {
                name: "branch",
                reason: format!("unknown branch `{other}`"),
            }),
        }
    }
}

/// First-order quantities of the doublet coupling |n⟩ and |n+1⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetuningSet {
    pub n: usize,
    /// ω⁰_n = ω₀ + γ(2n+1)
    pub omega0_n: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    /// Ω_n = g√(n+1)
    pub rabi: f64,
}

impl DetuningSet {
    pub fn delta(&self, branch: Branch) -> f64 {
        match branch {
            Branch::Plus => self.delta_plus,
            Branch::Minus => self.delta_minus,
        }
    }
}

pub fn detunings(p: &ModelParams, n: usize) -> DetuningSet {
    let omega0_n = p.omega0 + p.gamma * (2 * n + 1) as f64;
    DetuningSet {
        n,
        omega0_n,
        delta_plus: p.omega + omega0_n,
        delta_minus: p.omega - omega0_n,
        rabi: p.g * ((n + 1) as f64).sqrt(),
    }
}

/// Second-order level shifts of |e,n⟩ and |g,n⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarkShift {
    pub n: usize,
    pub delta_e: f64,
    pub delta_g: f64,
}

fn ratio(num: f64, den: f64, what: impl FnOnce() -> String) -> Result<f64> {
    if num == 0.0 {
        return Ok(0.0);
    }
    if den == 0.0 {
        return Err(Error::Singular(what()));
    }
    Ok(num / den)
}

/// Δ^e_n = Ω²_{n−1}/δ⁺_{n−1} − Ω²_n/δ⁻_n and
/// Δ^g_n = Ω²_{n−1}/δ⁻_{n−1} − Ω²_n/δ⁺_n, with Ω_{−1} = 0.
pub fn stark_shifts(p: &ModelParams, n: usize) -> Result<StarkShift> {
    let cur = detunings(p, n);
    let (lower_e, lower_g) = if n == 0 {
        (0.0, 0.0)
    } else {
        let prev = detunings(p, n - 1);
        let w = prev.rabi * prev.rabi;
        (
            ratio(w, prev.delta_plus, || format!("delta+_{} = 0", n - 1))?,
            ratio(w, prev.delta_minus, || format!("delta-_{} = 0", n - 1))?,
        )
    };
    let w = cur.rabi * cur.rabi;
    Ok(StarkShift {
        n,
        delta_e: lower_e - ratio(w, cur.delta_minus, || format!("delta-_{n} = 0"))?,
        delta_g: lower_g - ratio(w, cur.delta_plus, || format!("delta+_{n} = 0"))?,
    })
}

/// An odd-k selective channel |n⟩ → |n+k⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KPhotonChannel {
    pub k: usize,
    pub n: usize,
    pub branch: Branch,
    /// δ⁽ᵏ⁾_{n±} = (k−1)ω + δ±_{n+(k−1)/2}
    pub delta_k: f64,
    /// Signed effective Rabi rate Ω⁽ᵏ⁾_{n±}.
    pub omega_k: f64,
    /// Stark-shifted detuning, k = 3 only, when the shifts are finite.
    pub shifted_delta: Option<f64>,
    /// Some intermediate denominator is within [`NEAR_RESONANCE_FACTOR`]
    /// couplings of zero, so the perturbative rate is unreliable.
    pub near_resonant: bool,
}

impl KPhotonChannel {
    /// π/(2|Ω⁽ᵏ⁾|), the time of a full population transfer on resonance.
    pub fn transfer_time(&self) -> Result<f64> {
        if self.omega_k == 0.0 {
            return Err(Error::Singular(format!(
                "k = {} channel from n = {} has zero rate",
                self.k, self.n
            )));
        }
        Ok(std::f64::consts::FRAC_PI_2 / self.omega_k.abs())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ChannelOutcome {
    Allowed(KPhotonChannel),
    /// Even k: the k-th order term oscillates and averages out.
    Forbidden { k: usize, reason: String },
}

impl ChannelOutcome {
    pub fn allowed(self) -> Option<KPhotonChannel> {
        match self {
            ChannelOutcome::Allowed(c) => Some(c),
            ChannelOutcome::Forbidden { .. } => None,
        }
    }
}

/// δ⁽ˢ⁾_{n±} for odd s.
fn channel_detuning(p: &ModelParams, n: usize, s: usize, branch: Branch) -> f64 {
    (s - 1) as f64 * p.omega + detunings(p, n + (s - 1) / 2).delta(branch)
}

fn double_factorial(k: usize) -> f64 {
    (1..=k).rev().step_by(2).map(|x| x as f64).product()
}

pub fn k_photon_channel(p: &ModelParams, n: usize, k: usize, branch: Branch) -> Result<ChannelOutcome> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "photon number must be at least 1".into(),
        });
    }
    if k % 2 == 0 {
        return Ok(ChannelOutcome::Forbidden {
            k,
            reason: "parity sigma_z(-1)^(a'a) is conserved, so |n> -> |n+k> with even k \
                     never flips the qubit; the k-th order term averages out under the RWA"
                .into(),
        });
    }
    let delta_k = channel_detuning(p, n, k, branch);
    let coupling = p.g * ((n + k) as f64).sqrt();
    let threshold = NEAR_RESONANCE_FACTOR * coupling;
    let mut near_resonant = false;
    let mut product = 1.0;
    for s in (1..k).step_by(2) {
        let d = channel_detuning(p, n, s, branch);
        if d == 0.0 {
            return Err(Error::Singular(format!(
                "intermediate detuning delta({s})_{n}{branch} vanishes"
            )));
        }
        near_resonant |= d.abs() < threshold;
        product /= d;
    }
    let half = (k - 1) / 2;
    let stark_den = p.omega - branch.sign() * p.gamma;
    if half > 0 {
        if stark_den == 0.0 {
            return Err(Error::Singular("omega -/+ gamma = 0".into()));
        }
        near_resonant |= stark_den.abs() < threshold;
    }
    let ladder: f64 = ((n + 1)..=(n + k)).map(|x| x as f64).product();
    let omega_k =
        p.g.powi(k as i32) / (double_factorial(k - 1) * stark_den.powi(half as i32)) * ladder.sqrt() * product;
    let shifted_delta = if k == 3 {
        shifted_three_photon_detuning(p, n, branch).ok()
    } else {
        None
    };
    Ok(ChannelOutcome::Allowed(KPhotonChannel {
        k,
        n,
        branch,
        delta_k,
        omega_k,
        shifted_delta,
        near_resonant,
    }))
}

/// δ̃⁽³⁾_{n+} = δ⁽³⁾_{n+} + Δ^e_{n+3} − Δ^g_n,
/// δ̃⁽³⁾_{n−} = δ⁽³⁾_{n−} + Δ^g_{n+3} − Δ^e_n.
pub fn shifted_three_photon_detuning(p: &ModelParams, n: usize, branch: Branch) -> Result<f64> {
    let bare = channel_detuning(p, n, 3, branch);
    let lo = stark_shifts(p, n)?;
    let hi = stark_shifts(p, n + 3)?;
    Ok(match branch {
        Branch::Plus => bare + hi.delta_e - lo.delta_g,
        Branch::Minus => bare + hi.delta_g - lo.delta_e,
    })
}

/// How resonance roots in ω₀ are located.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ResonanceMode {
    /// Closed-form zero of δ⁽ᵏ⁾.
    Unshifted,
    /// Zeros of δ̃⁽³⁾ inside [lo, hi]; k = 3 only.
    Shifted { lo: f64, hi: f64 },
}

/// ω₀ values where the k-photon channel from n is resonant. `p.omega0` is
/// ignored.
pub fn solve_resonance(
    p: &ModelParams,
    k: usize,
    n: usize,
    branch: Branch,
    mode: ResonanceMode,
) -> Result<Vec<f64>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: format!("resonances exist for odd k only, got {k}"),
        });
    }
    let m = n + (k - 1) / 2;
    let stark = p.gamma * (2 * m + 1) as f64;
    match mode {
        ResonanceMode::Unshifted => Ok(vec![match branch {
            Branch::Plus => -(k as f64) * p.omega - stark,
            Branch::Minus => k as f64 * p.omega - stark,
        }]),
        ResonanceMode::Shifted { lo, hi } => {
            if k != 3 {
                return Err(Error::InvalidParameter {
                    name: "k",
                    reason: "Stark-shifted resonances are available for k = 3 only".into(),
                });
            }
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "bracket",
                    reason: format!("need finite lo < hi, got [{lo}, {hi}]"),
                });
            }
            let f = |w0: f64| {
                let q = ModelParams { omega0: w0, ..*p };
                shifted_three_photon_detuning(&q, n, branch).ok()
            };
            let roots = bracket_roots(f, lo, hi);
            if roots.is_empty() {
                return Err(Error::NoRoot {
                    what: format!("shifted delta(3)_{n}{branch}"),
                    lo,
                    hi,
                });
            }
            Ok(roots)
        }
    }
}

/// Sign changes of f on a uniform subdivision, refined by bisection.
/// Sign changes across poles are recognised by |f| growing as the bracket
/// shrinks and are discarded.
fn bracket_roots(f: impl Fn(f64) -> Option<f64>, lo: f64, hi: f64) -> Vec<f64> {
    let cells = ROOT_SUBDIVISIONS;
    let h = (hi - lo) / cells as f64;
    let mut roots = Vec::new();
    let mut prev = (lo, f(lo));
    for i in 1..=cells {
        let x = if i == cells { hi } else { lo + h * i as f64 };
        let cur = (x, f(x));
        if let (Some(fa), Some(fb)) = (prev.1, cur.1) {
            if fa == 0.0 {
                roots.push(prev.0);
            } else if fa.signum() != fb.signum() && fb != 0.0 {
                if let Some(r) = bisect(&f, prev.0, cur.0, fa, fb) {
                    roots.push(r);
                }
            }
        }
        prev = cur;
    }
    if let Some(0.0) = prev.1 {
        roots.push(prev.0);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 10.0 * ROOT_TOLERANCE);
    roots
}

fn bisect(f: &impl Fn(f64) -> Option<f64>, mut a: f64, mut b: f64, mut fa: f64, fb: f64) -> Option<f64> {
    let start = fa.abs().max(fb.abs());
    while b - a > ROOT_TOLERANCE {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    let mid = 0.5 * (a + b);
    let end = f(mid)?.abs();
    // a pole leaves |f| large; a root leaves it far below the starting values
    (end <= start).then_some(mid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn mp(omega0: f64, gamma: f64, g: f64) -> ModelParams {
        ModelParams::new(omega0, 1.0, gamma, g).unwrap()
    }

    #[test]
    fn detuning_examples() {
        let d = detunings(&mp(2.25, -0.25, 0.02), 2);
        assert_abs_diff_eq!(d.delta_minus, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.rabi, 0.034641016151377546, epsilon = 1e-15);
        let p = mp(0.7, 0.0, 0.1);
        assert_eq!(detunings(&p, 0).delta_plus, detunings(&p, 5).delta_plus);
        assert_eq!(detunings(&p, 0).delta_minus, detunings(&p, 5).delta_minus);
    }

    #[test]
    fn stark_shift_examples() {
        let p = mp(0.5, 0.0, 0.1);
        let s = stark_shifts(&p, 1).unwrap();
        assert_abs_diff_eq!(s.delta_e, 0.01 / 1.5 - 0.02 / 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.delta_e, -0.0333333333333, epsilon = 1e-12);
        let s0 = stark_shifts(&p, 0).unwrap();
        let d0 = detunings(&p, 0);
        assert_abs_diff_eq!(s0.delta_e, -0.01 / d0.delta_minus, epsilon = 1e-15);
        let z = stark_shifts(&mp(0.5, -0.2, 0.0), 3).unwrap();
        assert_eq!((z.delta_e, z.delta_g), (0.0, 0.0));
    }

    #[test]
    fn stark_shift_singular_on_first_order_resonance() {
        // δ⁻_2 = 0
        assert!(matches!(stark_shifts(&mp(2.25, -0.25, 0.02), 2), Err(Error::Singular(_))));
    }

    #[test]
    fn k1_channel_is_first_order() {
        let p = mp(1.37, -0.21, 0.07);
        for n in 0..6 {
            for b in [Branch::Plus, Branch::Minus] {
                let c = k_photon_channel(&p, n, 1, b).unwrap().allowed().unwrap();
                let d = detunings(&p, n);
                assert_eq!(c.delta_k, d.delta(b));
                assert_eq!(c.omega_k, d.rabi);
            }
        }
    }

    #[test]
    fn three_photon_fig2_point() {
        let p = mp(2.2, -0.4, 0.1);
        let c = k_photon_channel(&p, 5, 3, Branch::Plus).unwrap().allowed().unwrap();
        assert_abs_diff_eq!(c.delta_k, 0.0, epsilon = 1e-12);
        // g³√(8·7·6)/(2·δ⁺_5·(ω−γ)), δ⁺_5 = 1 + 2.2 − 4.4
        let expect = 1e-3 * 336f64.sqrt() / (2.0 * -1.2 * 1.4);
        assert_abs_diff_eq!(c.omega_k, expect, epsilon = 1e-15);
        assert_abs_diff_eq!(c.omega_k, -5.455e-3, epsilon = 1e-6);
    }

    #[test]
    fn five_photon_rate_matches_recursive_product() {
        let p = mp(-3.1, 0.9, 0.1);
        let c = k_photon_channel(&p, 2, 5, Branch::Minus).unwrap().allowed().unwrap();
        assert_abs_diff_eq!(c.delta_k, 0.0, epsilon = 1e-12);
        let d1 = detunings(&p, 2).delta_minus;
        let d3 = 2.0 + detunings(&p, 3).delta_minus;
        let expect = 1e-5 * (3.0f64 * 4.0 * 5.0 * 6.0 * 7.0).sqrt() / (8.0 * 1.9f64.powi(2) * d1 * d3);
        assert_abs_diff_eq!(c.omega_k, expect, epsilon = 1e-17);
    }

    #[test]
    fn even_k_is_forbidden() {
        let p = mp(2.0, -0.1, 0.1);
        for k in [2, 4, 6] {
            assert!(matches!(
                k_photon_channel(&p, 1, k, Branch::Plus).unwrap(),
                ChannelOutcome::Forbidden { .. }
            ));
        }
    }

    #[test]
    fn intermediate_resonance_is_an_error() {
        // δ⁺_0 = 0 kills the k = 3 channel from n = 0
        let p = mp(-1.1, 0.1, 0.1);
        assert!(matches!(
            k_photon_channel(&p, 0, 3, Branch::Plus),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn unshifted_roots() {
        let p = mp(0.0, 0.9, 0.1);
        for (n0, expect) in [(2, -3.1), (3, -4.9), (4, -6.7)] {
            let r = solve_resonance(&p, 5, n0, Branch::Minus, ResonanceMode::Unshifted).unwrap();
            assert_abs_diff_eq!(r[0], expect, epsilon = 1e-12);
        }
        let p = mp(0.0, -0.25, 0.02);
        let r = solve_resonance(&p, 1, 2, Branch::Minus, ResonanceMode::Unshifted).unwrap();
        assert_abs_diff_eq!(r[0], 1.0 + 0.25 * 5.0, epsilon = 1e-15);
        let p = mp(0.0, -0.1, 0.1);
        let r = solve_resonance(&p, 3, 0, Branch::Plus, ResonanceMode::Unshifted).unwrap();
        assert_abs_diff_eq!(r[0], -2.7, epsilon = 1e-15);
    }

    #[test]
    fn shifted_root_near_scanned_peak() {
        let p = mp(0.0, -0.4, 0.1);
        let r = solve_resonance(&p, 3, 5, Branch::Plus, ResonanceMode::Shifted { lo: 2.25, hi: 2.45 })
            .unwrap();
        assert_eq!(r.len(), 1);
        assert!((r[0] - 2.317).abs() < 0.02, "root {}", r[0]);
        let q = ModelParams { omega0: r[0], ..p };
        assert!(shifted_three_photon_detuning(&q, 5, Branch::Plus).unwrap().abs() < 1e-8);
    }

    #[test]
    fn shifted_root_rejects_poles() {
        // δ⁺_5 = 0 at ω₀ = 3.4 is a pole of Δ^g_5; no root sits there
        let p = mp(0.0, -0.4, 0.1);
        let r = solve_resonance(&p, 3, 5, Branch::Plus, ResonanceMode::Shifted { lo: 1.5, hi: 3.5 })
            .unwrap();
        for x in &r {
            let q = ModelParams { omega0: *x, ..p };
            assert!(shifted_three_photon_detuning(&q, 5, Branch::Plus).unwrap().abs() < 1e-6);
        }
        assert!(r.iter().any(|x| (x - 2.317).abs() < 0.02));
    }

    #[test]
    fn shifted_resonance_errors() {
        let p = mp(0.0, -0.4, 0.1);
        assert!(matches!(
            solve_resonance(&p, 3, 5, Branch::Plus, ResonanceMode::Shifted { lo: 10.0, hi: 11.0 }),
            Err(Error::NoRoot { .. })
        ));
        assert!(solve_resonance(&p, 5, 5, Branch::Plus, ResonanceMode::Shifted { lo: 0.0, hi: 1.0 }).is_err());
        assert!(solve_resonance(&p, 2, 5, Branch::Plus, ResonanceMode::Unshifted).is_err());
    }

    #[test]
    fn branch_parsing() {
        assert_eq!("+".parse::<Branch>().unwrap(), Branch::Plus);
        assert_eq!("jc".parse::<Branch>().unwrap(), Branch::Minus);
        assert!("x".parse::<Branch>().is_err());
    }

    #[test]
    fn near_resonance_flag() {
        // at ω₀ = 3.35, δ⁺_5 = −0.05 is well inside 10 g√8
        let c = k_photon_channel(&mp(3.35, -0.4, 0.1), 5, 3, Branch::Plus)
            .unwrap()
            .allowed()
            .unwrap();
        assert!(c.near_resonant);
        let c = k_photon_channel(&mp(2.2, -0.4, 0.01), 5, 3, Branch::Plus)
            .unwrap()
            .allowed()
            .unwrap();
        assert!(!c.near_resonant);
    }
}
