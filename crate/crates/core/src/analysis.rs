//! Least-squares fit of accuracy against the logarithm of the reduction
//! factor, and synthetic-to-real gaps.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::invalid;
use crate::train::SummaryStats;

/// `y = a * ln(x) + b`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurveFit {
    pub a: f64,
    pub b: f64,
    pub rms_residual: f64,
    pub n_points: usize,
}

impl CurveFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.a * libm::log(x) + self.b
    }
}

/// Ordinary least squares of `y` on `ln x` via the closed-form normal
/// equations (centred to avoid cancellation).
pub fn fit_log_curve(points: &[(f64, f64)]) -> Result<CurveFit> {
    if points.len() < 2 {
        return invalid!("a line fit needs at least 2 points, got {}", points.len());
    }
    if let Some(&(x, _)) = points.iter().find(|&&(x, _)| !(x > 0.0 && x.is_finite())) {
        return invalid!("x values must be positive and finite, got {x}");
    }
    if points.iter().any(|&(_, y)| !y.is_finite()) {
        return invalid!("y values must be finite");
    }
    let n = points.len() as f64;
    let u: Vec<f64> = points.iter().map(|&(x, _)| libm::log(x)).collect();
    let u_mean = u.iter().sum::<f64>() / n;
    let y_mean = points.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let (mut suu, mut suy) = (0.0, 0.0);
    for (ui, &(_, y)) in u.iter().zip(points) {
        suu += (ui - u_mean) * (ui - u_mean);
        suy += (ui - u_mean) * (y - y_mean);
    }
    if suu == 0.0 {
        return Err(Error::DegenerateDesign(alloc::format!("all {} x values are equal", points.len())));
    }
    let a = suy / suu;
    let b = y_mean - a * u_mean;
    let sse: f64 = u
        .iter()
        .zip(points)
        .map(|(ui, &(_, y))| {
            let r = y - a * ui - b;
            r * r
        })
        .sum();
    Ok(CurveFit { a, b, rms_residual: libm::sqrt(sse / n), n_points: points.len() })
}

/// `(real top-1 mean - synthetic top-1 mean) * 100`, in percentage points.
pub fn compute_gap(real: &SummaryStats, synth: &SummaryStats) -> f64 {
    (real.top1_mean - synth.top1_mean) * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(top1: f64) -> SummaryStats {
        SummaryStats { k: 5, top1_mean: top1, top1_std: 0.0, top5_mean: 1.0, top5_std: 0.0 }
    }

    #[test]
    fn recovers_planted_coefficients() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, -2.23 * libm::log(x) + 85.61)).collect();
        let f = fit_log_curve(&pts).unwrap();
        assert!((f.a + 2.23).abs() < 1e-12 && (f.b - 85.61).abs() < 1e-12);
        assert!(f.rms_residual < 1e-9);
        assert_eq!(f.n_points, 4);
    }

    fn sse(pts: &[(f64, f64)], a: f64, b: f64) -> f64 {
        pts.iter()
            .map(|&(x, y)| {
                let r = y - a * libm::log(x) - b;
                r * r
            })
            .sum()
    }

    proptest::proptest! {
        #[test]
        fn matches_uncentred_normal_equations(
            pts in proptest::collection::vec((0.01f64..100.0, -50.0f64..50.0), 2..12),
        ) {
            let f = match fit_log_curve(&pts) { Ok(f) => f, Err(_) => return Ok(()) };
            let (mut s1, mut su, mut suu, mut sy, mut suy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for &(x, y) in &pts {
                let u = libm::log(x);
                s1 += 1.0; su += u; suu += u * u; sy += y; suy += u * y;
            }
            let det = s1 * suu - su * su;
            proptest::prop_assume!(det.abs() > 1e-6);
            let a = (s1 * suy - su * sy) / det;
            let b = (suu * sy - su * suy) / det;
            proptest::prop_assert!((f.a - a).abs() < 1e-6 * (1.0 + a.abs()));
            proptest::prop_assert!((f.b - b).abs() < 1e-6 * (1.0 + b.abs()));
            let best = sse(&pts, f.a, f.b);
            for (da, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3)] {
                proptest::prop_assert!(sse(&pts, f.a + da, f.b + db) >= best - 1e-9);
            }
            let mut reversed = pts.clone();
            reversed.reverse();
            let g = fit_log_curve(&reversed).unwrap();
            proptest::prop_assert!((g.rms_residual - f.rms_residual).abs() < 1e-9);
        }
    }

    #[test]
    fn two_points_interpolate() {
        let f = fit_log_curve(&[(1.0, 3.0), (4.0, 5.0)]).unwrap();
        assert!(f.rms_residual < 1e-12);
        assert!((f.eval(1.0) - 3.0).abs() < 1e-12);
        assert!((f.eval(4.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn constant_y() {
        let f = fit_log_curve(&[(1.0, 7.0), (2.0, 7.0), (8.0, 7.0)]).unwrap();
        assert_eq!(f.a, 0.0);
        assert!((f.b - 7.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(fit_log_curve(&[(2.0, 1.0), (2.0, 3.0)]), Err(Error::DegenerateDesign(_))));
        assert!(matches!(fit_log_curve(&[(0.0, 1.0), (2.0, 3.0)]), Err(Error::Validation(_))));
        assert!(matches!(fit_log_curve(&[(-1.0, 1.0), (2.0, 3.0)]), Err(Error::Validation(_))));
        assert!(fit_log_curve(&[(1.0, 1.0)]).is_err());
        assert!(fit_log_curve(&[]).is_err());
    }

    #[test]
    fn gap_in_percentage_points() {
        assert!((compute_gap(&stats(0.878), &stats(0.648)) - 23.0).abs() < 1e-9);
        assert_eq!(compute_gap(&stats(0.5), &stats(0.5)), 0.0);
        assert_eq!(compute_gap(&stats(0.3), &stats(0.7)), -compute_gap(&stats(0.7), &stats(0.3)));
    }
}
