//! Dormand–Prince 8(5,3) with its 7th-order continuous extension, on flat
//! complex state vectors.

use super::dop853_tableau::{A, B, C, D, E3, E5, N_EXT, N_STAGES};
use crate::error::{Error, Result};
use crate::qspace::{C64, ZERO};

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;

/// Step-size controller settings.
#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Upper bound on |h|; `None` lets the controller decide.
    pub h_max: Option<f64>,
    /// Local errors are measured per unit time, the unit being the
    /// integration span divided by this factor. Accumulated error over a
    /// run then stays near `span_fraction · tol`.
    pub span_fraction: f64,
}

impl StepControl {
    pub fn uniform(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            max_steps: 200_000_000,
            h_max: None,
            span_fraction: 10.0,
        }
    }
}

/// Counters of one integration.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

struct Workspace {
    k: Vec<Vec<C64>>,
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    dense: [Vec<C64>; 7],
}

/// out = y + h Σ_{j<s} a_sj k_j
fn stage(y: &[C64], k: &[Vec<C64>], row: &[f64], s: usize, h: f64, out: &mut [C64]) {
    out.copy_from_slice(y);
    for (j, &a) in row.iter().enumerate().take(s) {
        if a == 0.0 {
            continue;
        }
        let c = a * h;
        for (o, kj) in out.iter_mut().zip(&k[j]) {
            *o += kj * c;
        }
    }
}

fn error_norm(y: &[C64], ynew: &[C64], k: &[Vec<C64>], h: f64, ctl: &StepControl) -> f64 {
    let n = y.len();
    let (mut e5, mut e3) = (0.0, 0.0);
    for i in 0..n {
        let sc = ctl.atol + ctl.rtol * y[i].norm().max(ynew[i].norm());
        let (mut a5, mut a3) = (ZERO, ZERO);
        for j in 0..=N_STAGES {
            if E5[j] != 0.0 {
                a5 += k[j][i] * E5[j];
            }
            if E3[j] != 0.0 {
                a3 += k[j][i] * E3[j];
            }
        }
        e5 += (a5.norm() / sc).powi(2);
        e3 += (a3.norm() / sc).powi(2);
    }
    if e5 == 0.0 && e3 == 0.0 {
        return 0.0;
    }
    h.abs() * e5 / ((e5 + 0.01 * e3) * n as f64).sqrt()
}

fn rms_scaled(v: &[C64], y: &[C64], ctl: &StepControl) -> f64 {
    let mut acc = 0.0;
    for (x, s) in v.iter().zip(y) {
        let sc = ctl.atol + ctl.rtol * s.norm();
        acc += (x.norm() / sc).powi(2);
    }
    (acc / v.len() as f64).sqrt()
}

/// Integrates y' = f(t, y) from `t0`, reporting the dense-output solution
/// at each of `samples` (ascending, all ≥ t0) through `on_sample`.
pub fn integrate<F, S>(
    mut f: F,
    t0: f64,
    y0: &[C64],
    samples: &[f64],
    ctl: &StepControl,
    mut on_sample: S,
) -> Result<StepStats>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, f64, &[C64]) -> Result<()>,
{
    let n = y0.len();
    let mut stats = StepStats::default();
    let mut y = y0.to_vec();
    let mut next = 0;
    while next < samples.len() && samples[next] <= t0 {
        on_sample(next, samples[next], &y)?;
        next += 1;
    }
    if next == samples.len() {
        return Ok(stats);
    }
    let t_end = *samples.last().expect("non-empty");
    let v = || vec![ZERO; n];
    let mut w = Workspace {
        k: (0..N_EXT).map(|_| v()).collect(),
        ytmp: v(),
        ynew: v(),
        dense: [v(), v(), v(), v(), v(), v(), v()],
    };
    let mut t = t0;
    f(t, &y, &mut w.k[0]);
    stats.evaluations += 1;
    let f0 = w.k[0].clone();
    let mut h = initial_step(&mut f, t, &y, &f0, ctl, t_end - t0, &mut stats);
    let time_unit_inv = (t_end - t0) / ctl.span_fraction;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::TooManySteps(ctl.max_steps));
        }
        if let Some(hm) = ctl.h_max {
            h = h.min(hm);
        }
        let remaining = t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h });
        }

        for s in 1..N_STAGES {
            stage(&y, &w.k, &A[s], s, h, &mut w.ytmp);
            let (_, tail) = w.k.split_at_mut(s);
            f(t + C[s] * h, &w.ytmp, &mut tail[0]);
        }
        let mut ynew = std::mem::take(&mut w.ynew);
        ynew.copy_from_slice(&y);
        for (j, &b) in B.iter().enumerate() {
            if b == 0.0 {
                continue;
            }
            let c = b * h;
            for (o, kj) in ynew.iter_mut().zip(&w.k[j]) {
                *o += kj * c;
            }
        }
        f(t + h, &ynew, &mut w.k[N_STAGES]);
        stats.evaluations += N_STAGES;

        let err = error_norm(&y, &ynew, &w.k, h, ctl) * time_unit_inv / h;
        if !err.is_finite() {
            w.ynew = ynew;
            h *= FAC_MIN;
            stats.rejected += 1;
            last_rejected = true;
            continue;
        }

        if err <= 1.0 {
            stats.accepted += 1;
            let t_new = t + h;
            let needs_dense = next < samples.len() && samples[next] < t_new;
            if needs_dense {
                for s in N_STAGES + 1..N_EXT {
                    stage(&y, &w.k, &A[s], s, h, &mut w.ytmp);
                    let (_, tail) = w.k.split_at_mut(s);
                    f(t + C[s] * h, &w.ytmp, &mut tail[0]);
                }
                stats.evaluations += N_EXT - N_STAGES - 1;
                for i in 0..n {
                    let dy = ynew[i] - y[i];
                    let f_old = w.k[0][i];
                    let f_new = w.k[N_STAGES][i];
                    w.dense[0][i] = dy;
                    w.dense[1][i] = f_old * h - dy;
                    w.dense[2][i] = dy * 2.0 - (f_new + f_old) * h;
                    for (r, drow) in D.iter().enumerate() {
                        let mut acc = ZERO;
                        for (j, &d) in drow.iter().enumerate() {
                            if d != 0.0 {
                                acc += w.k[j][i] * d;
                            }
                        }
                        w.dense[3 + r][i] = acc * h;
                    }
                }
            }
            while next < samples.len() && (samples[next] <= t_new || last) {
                let s = samples[next];
                if s >= t_new {
                    on_sample(next, s, &ynew)?;
                } else {
                    let x = (s - t) / h;
                    for i in 0..n {
                        let mut acc = ZERO;
                        for (r, fr) in w.dense.iter().enumerate().rev() {
                            acc += fr[i];
                            acc *= if (6 - r) % 2 == 0 { x } else { 1.0 - x };
                        }
                        w.ytmp[i] = acc + y[i];
                    }
                    on_sample(next, s, &w.ytmp)?;
                }
                next += 1;
            }
            std::mem::swap(&mut y, &mut ynew);
            w.ynew = ynew;
            w.k.swap(0, N_STAGES);
            t = t_new;
            if last || next == samples.len() {
                return Ok(stats);
            }
            let mut fac = err.powf(1.0 / 7.0) / SAFETY;
            fac = fac.clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            w.ynew = ynew;
            stats.rejected += 1;
            let fac = (err.powf(1.0 / 7.0) / SAFETY).min(1.0 / FAC_MIN);
            h /= fac;
            last_rejected = true;
        }
    }
}

/// Hairer's starting-step heuristic.
fn initial_step<F>(
    f: &mut F,
    t: f64,
    y: &[C64],
    f0: &[C64],
    ctl: &StepControl,
    span: f64,
    stats: &mut StepStats,
) -> f64
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let d0 = rms_scaled(y, y, ctl);
    let d1 = rms_scaled(f0, y, ctl);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    if let Some(hm) = ctl.h_max {
        h0 = h0.min(hm);
    }
    let y1: Vec<C64> = y.iter().zip(f0).map(|(a, b)| a + b * h0).collect();
    let mut f1 = vec![ZERO; y.len()];
    f(t + h0, &y1, &mut f1);
    stats.evaluations += 1;
    let diff: Vec<C64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms_scaled(&diff, y, ctl) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 8.0)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(w: f64) -> impl FnMut(f64, &[C64], &mut [C64]) {
        move |_t, y, out| out[0] = C64::new(0.0, -w) * y[0]
    }

    #[test]
    fn exponential_phase_at_samples() {
        let w = 1.7;
        let samples: Vec<f64> = (0..=50).map(|i| i as f64 * 0.37).collect();
        let mut got = vec![ZERO; samples.len()];
        integrate(
            oscillator(w),
            0.0,
            &[C64::new(1.0, 0.0)],
            &samples,
            &StepControl::uniform(1e-10),
            |i, _, y| {
                got[i] = y[0];
                Ok(())
            },
        )
        .unwrap();
        for (t, y) in samples.iter().zip(&got) {
            let exact = C64::from_polar(1.0, -w * t);
            assert!((y - exact).norm() < 1e-8, "t = {t}: {y} vs {exact}");
        }
    }

    #[test]
    fn dense_output_between_steps() {
        let samples: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
        let mut worst: f64 = 0.0;
        integrate(
            |t: f64, _y: &[C64], out: &mut [C64]| out[0] = C64::new(t.cos(), 0.0),
            0.0,
            &[ZERO],
            &samples,
            &StepControl::uniform(1e-9),
            |_, t, y| {
                worst = worst.max((y[0].re - t.sin()).abs());
                Ok(())
            },
        )
        .unwrap();
        assert!(worst < 100.0 * 1e-9, "{worst}");
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let err_at = |tol: f64| {
            let mut e = 0.0;
            integrate(
                oscillator(3.0),
                0.0,
                &[C64::new(1.0, 0.0)],
                &[50.0],
                &StepControl::uniform(tol),
                |_, t, y| {
                    e = (y[0] - C64::from_polar(1.0, -3.0 * t)).norm();
                    Ok(())
                },
            )
            .unwrap();
            e
        };
        let coarse = err_at(1e-6);
        let fine = err_at(1e-8);
        assert!(fine * 2.0 < coarse, "{coarse} {fine}");
    }

    #[test]
    fn step_budget_is_enforced() {
        let ctl = StepControl {
            max_steps: 10,
            ..StepControl::uniform(1e-12)
        };
        let r = integrate(oscillator(50.0), 0.0, &[C64::new(1.0, 0.0)], &[100.0], &ctl, |_, _, _| Ok(()));
        assert!(matches!(r, Err(Error::TooManySteps(10))));
    }

    #[test]
    fn sample_at_start_needs_no_steps() {
        let stats = integrate(oscillator(1.0), 0.0, &[C64::new(1.0, 0.0)], &[0.0], &StepControl::uniform(1e-9), |_, _, y| {
            assert_eq!(y[0], C64::new(1.0, 0.0));
            Ok(())
        })
        .unwrap();
        assert_eq!(stats.accepted, 0);
    }
}
