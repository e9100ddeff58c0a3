//! Oracles shared by the integration and acceptance tests.

#![allow(dead_code)]

use rabi_stark::models::{interaction_picture_hamiltonian, ModelParams};
use rabi_stark::qspace::{HilbertSpace, C64};

/// Second-order energy shift of |q, n⟩ (q = 0 for e, 1 for g) read off the
/// second-order Dyson term
///     U₂(T) = −∫₀ᵀ dt₁ ∫₀^{t₁} dt₂ H_I(t₁) H_I(t₂),
/// whose diagonal grows as −iΔT plus bounded oscillations. Both integrals
/// are done by the trapezoidal rule with step `dt`; the shift is −Im U₂/T.
pub fn dyson_shift(p: &ModelParams, q: usize, n: usize, t_total: f64, dt: f64) -> f64 {
    let space = HilbertSpace::new(n + 2).unwrap();
    let d = space.dim();
    let i0 = space.index(q, n);
    let steps = (t_total / dt).round() as usize;
    let column = |t: f64| -> Vec<C64> {
        let h = interaction_picture_hamiltonian(p, space, t);
        (0..d).map(|j| h.matrix()[(j, i0)]).collect()
    };
    let row = |t: f64| -> Vec<C64> {
        let h = interaction_picture_hamiltonian(p, space, t);
        (0..d).map(|j| h.matrix()[(i0, j)]).collect()
    };
    // w(t₁) = ∫₀^{t₁} H_I(t₂)[:, i0] dt₂
    let mut w = vec![C64::new(0.0, 0.0); d];
    let mut prev_col = column(0.0);
    let mut prev_integrand = C64::new(0.0, 0.0);
    let mut u2 = C64::new(0.0, 0.0);
    for s in 1..=steps {
        let t = s as f64 * dt;
        let col = column(t);
        for j in 0..d {
            w[j] += (col[j] + prev_col[j]) * (0.5 * dt);
        }
        let r = row(t);
        let integrand: C64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
        u2 -= (integrand + prev_integrand) * (0.5 * dt);
        prev_integrand = integrand;
        prev_col = col;
    }
    -u2.im / (steps as f64 * dt)
}

/// |error| allowed for [`dyson_shift`]: the bounded oscillating part of
/// U₂ over T, the trapezoidal phase error, and a fourth-order allowance
/// g⁴(n+2)²/δ³ for comparing against a second-order formula.
pub fn dyson_bound(p: &ModelParams, n: usize, t_total: f64, dt: f64) -> f64 {
    let mut osc = 0.0;
    let mut secular = 0.0;
    let mut min_delta = f64::INFINITY;
    let mut max_delta: f64 = 0.0;
    for m in n.saturating_sub(1)..=n {
        let rabi2 = p.g * p.g * (m + 1) as f64;
        let shifted = p.omega0 + p.gamma * (2 * m + 1) as f64;
        for delta in [p.omega + shifted, p.omega - shifted] {
            osc += 2.0 * rabi2 / (delta * delta);
            secular += rabi2 / delta.abs();
            min_delta = min_delta.min(delta.abs());
            max_delta = max_delta.max(delta.abs());
        }
    }
    let quad = secular * (max_delta * dt).powi(2) / 6.0;
    osc / t_total + quad + p.g.powi(4) * ((n + 2) as f64).powi(2) / min_delta.powi(3)
}
