use serde::{Deserialize, Serialize};

/// Default prominence threshold, in observable units.
pub const DEFAULT_PROMINENCE: f64 = 0.1;

/// Whether resonances show up as maxima or as dips of the observable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeakPolarity {
    #[default]
    Maxima,
    Minima,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Refined location on the x axis.
    pub location: f64,
    /// Observable value at the refined location.
    pub height: f64,
    pub prominence: f64,
    /// Full width at half prominence.
    pub width: f64,
}

/// Local extrema of `ys(xs)` whose prominence reaches `min_prominence`.
///
/// Non-finite samples are dropped first. Single-sample peaks are refined
/// with the parabola through their neighbours; plateaus report their
/// midpoint. The result is sorted by location.
pub fn find_peaks(xs: &[f64], ys: &[f64], min_prominence: f64, polarity: PeakPolarity) -> Vec<Peak> {
    let sign = match polarity {
        PeakPolarity::Maxima => 1.0,
        PeakPolarity::Minima => -1.0,
    };
    let (x, y): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, sign * b))
        .unzip();
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                if let Some(p) = describe(&x, &y, i, j, min_prominence) {
                    peaks.push(Peak {
                        height: sign * p.height,
                        ..p
                    });
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks.sort_by(|a, b| a.location.total_cmp(&b.location));
    peaks
}

fn describe(x: &[f64], y: &[f64], lo: usize, hi: usize, min_prominence: f64) -> Option<Peak> {
    let top = y[lo];
    let n = y.len();

    let mut left = lo;
    let mut left_min = top;
    while left > 0 && y[left - 1] <= top {
        left -= 1;
        left_min = left_min.min(y[left]);
    }
    let mut right = hi;
    let mut right_min = top;
    while right + 1 < n && y[right + 1] <= top {
        right += 1;
        right_min = right_min.min(y[right]);
    }
    let prominence = top - left_min.max(right_min);
    if !(prominence >= min_prominence) || prominence <= 0.0 {
        return None;
    }

    let (location, height) = if lo == hi {
        parabolic_vertex((x[lo - 1], y[lo - 1]), (x[lo], y[lo]), (x[lo + 1], y[lo + 1]))
    } else {
        (0.5 * (x[lo] + x[hi]), top)
    };

    let level = top - 0.5 * prominence;
    let mut l = lo;
    while l > left && y[l] > level {
        l -= 1;
    }
    let xl = crossing(x, y, l, l + 1, level);
    let mut r = hi;
    while r < right && y[r] > level {
        r += 1;
    }
    let xr = crossing(x, y, r, r - 1, level);

    Some(Peak {
        location,
        height,
        prominence,
        width: xr - xl,
    })
}

/// x where the segment from sample `out` (below level) to `inside` (above)
/// crosses `level`; the outer sample itself when it is not below.
fn crossing(x: &[f64], y: &[f64], out: usize, inside: usize, level: f64) -> f64 {
    if y[out] > level || y[inside] == y[out] {
        return x[out];
    }
    let f = (level - y[out]) / (y[inside] - y[out]);
    x[out] + f * (x[inside] - x[out])
}

/// Vertex of the parabola through three points, clamped to their span.
fn parabolic_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let (x0, y0) = a;
    let (x1, y1) = b;
    let (x2, y2) = c;
    let d = (x0 - x1) * (x0 - x2) * (x1 - x2);
    if d == 0.0 {
        return b;
    }
    let ca = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / d;
    let cb = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / d;
    let cc = (x1 * x2 * (x1 - x2) * y0 + x2 * x0 * (x2 - x0) * y1 + x0 * x1 * (x0 - x1) * y2) / d;
    if ca >= 0.0 {
        return b;
    }
    let xv = (-cb / (2.0 * ca)).clamp(x0.min(x2), x0.max(x2));
    (xv, ca * xv * xv + cb * xv + cc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, dx: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * dx).collect()
    }

    #[test]
    fn triangle_has_one_peak_at_apex() {
        let x = grid(11, 1.0);
        let y: Vec<f64> = x.iter().map(|v| 5.0 - (v - 5.0f64).abs()).collect();
        let p = find_peaks(&x, &y, 0.1, PeakPolarity::Maxima);
        assert_eq!(p.len(), 1);
        assert!((p[0].location - 5.0).abs() < 1e-12);
        assert!((p[0].height - 5.0).abs() < 1e-12);
        assert!((p[0].prominence - 5.0).abs() < 1e-12);
        assert!((p[0].width - 5.0).abs() < 1e-12);
    }

    #[test]
    fn flat_data_has_no_peaks() {
        let x = grid(20, 0.1);
        assert!(find_peaks(&x, &[0.3; 20], 0.0, PeakPolarity::Maxima).is_empty());
        assert!(find_peaks(&x, &[0.3; 20], 0.0, PeakPolarity::Minima).is_empty());
    }

    #[test]
    fn too_few_points() {
        assert!(find_peaks(&[0.0, 1.0], &[0.0, 1.0], 0.0, PeakPolarity::Maxima).is_empty());
    }

    #[test]
    fn parabola_is_refined_between_samples() {
        let x = grid(21, 0.1);
        let y: Vec<f64> = x.iter().map(|v| 1.0 - (v - 1.03).powi(2)).collect();
        let p = find_peaks(&x, &y, 0.01, PeakPolarity::Maxima);
        assert_eq!(p.len(), 1);
        assert!((p[0].location - 1.03).abs() < 1e-12);
        assert!((p[0].height - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prominence_filters_ripples() {
        let x = grid(400, 0.01);
        let y: Vec<f64> = x
            .iter()
            .map(|v| (-((v - 2.0) / 0.1f64).powi(2)).exp() + 0.01 * (40.0 * v).sin())
            .collect();
        let p = find_peaks(&x, &y, 0.1, PeakPolarity::Maxima);
        assert_eq!(p.len(), 1);
        assert!((p[0].location - 2.0).abs() < 0.01);
    }

    #[test]
    fn minima_are_reported_with_original_heights() {
        let x = grid(11, 1.0);
        let y: Vec<f64> = x.iter().map(|v| 3.0 + (v - 4.0f64).abs()).collect();
        let p = find_peaks(&x, &y, 0.5, PeakPolarity::Minima);
        assert_eq!(p.len(), 1);
        assert!((p[0].location - 4.0).abs() < 1e-12);
        assert!((p[0].height - 3.0).abs() < 1e-12);
    }

    #[test]
    fn plateau_reports_midpoint() {
        let x = grid(7, 1.0);
        let y = [0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 0.0];
        let p = find_peaks(&x, &y, 0.1, PeakPolarity::Maxima);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].location, 3.0);
    }

    #[test]
    fn nan_samples_are_ignored() {
        let x = grid(7, 1.0);
        let y = [0.0, 1.0, f64::NAN, 3.0, 2.0, 1.0, 0.0];
        let p = find_peaks(&x, &y, 0.1, PeakPolarity::Maxima);
        assert_eq!(p.len(), 1);
        assert!((p[0].location - 3.0).abs() < 1.0);
    }
}
