//! Shape summary of a sweep, computed from `(value, min_db)` pairs only.

use std::fmt::Write as _;

use crate::config::TrendSection;

#[derive(Debug, Clone, PartialEq)]
pub struct TrendPoint {
    pub value: f64,
    pub min_db: Option<f64>,
    pub max_db: Option<f64>,
    pub angle_rad: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrendReport {
    pub param: String,
    pub points: Vec<TrendPoint>,
    /// Index into `points` of the lowest `min_db`.
    pub best: Option<usize>,
    /// `min_db` never rises on the way to the best point.
    pub non_increasing_to_best: bool,
    /// `min_db` never falls after the best point.
    pub non_decreasing_after_best: bool,
    /// Best point lies strictly below the first successful point.
    pub improves: bool,
    /// Trailing window lies inside the plateau band.
    pub plateau: bool,
    pub failures: usize,
}

impl TrendReport {
    pub fn from_points(param: &str, points: Vec<TrendPoint>, opts: &TrendSection) -> Self {
        let ok: Vec<(usize, f64)> = points
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.min_db.map(|v| (i, v)))
            .collect();
        let tol = opts.monotone_tol_db;
        let best_pos = ok
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(k, _)| k);
        let values: Vec<f64> = ok.iter().map(|&(_, v)| v).collect();
        let (non_increasing_to_best, non_decreasing_after_best, improves) = match best_pos {
            Some(b) => (
                values[..=b].windows(2).all(|w| w[1] <= w[0] + tol),
                values[b..].windows(2).all(|w| w[1] >= w[0] - tol),
                values[b] < values[0] - tol,
            ),
            None => (false, false, false),
        };
        Self {
            param: param.to_string(),
            best: best_pos.map(|k| ok[k].0),
            non_increasing_to_best,
            non_decreasing_after_best,
            improves,
            plateau: plateau(&values, opts.plateau_fraction, opts.plateau_band_db),
            failures: points.len() - ok.len(),
            points,
        }
    }

    pub fn best_point(&self) -> Option<&TrendPoint> {
        self.best.map(|i| &self.points[i])
    }

    /// `key=value` lines.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "param={}", self.param);
        let _ = writeln!(out, "points={}", self.points.len());
        let _ = writeln!(out, "failures={}", self.failures);
        if let Some(p) = self.best_point() {
            let _ = writeln!(out, "best_value={}", psrlab::detection::fmt_num(p.value));
            let _ = writeln!(out, "best_min_db={}", psrlab::detection::fmt_num(p.min_db.unwrap_or(f64::NAN)));
        }
        let _ = writeln!(out, "non_increasing_to_best={}", self.non_increasing_to_best);
        let _ = writeln!(out, "non_decreasing_after_best={}", self.non_decreasing_after_best);
        let _ = writeln!(out, "improves={}", self.improves);
        let _ = writeln!(out, "plateau={}", self.plateau);
        out
    }
}

/// Size of the trailing window: `ceil(fraction · n)`, at least 2.
pub fn plateau_window(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).ceil() as usize).max(2)
}

/// Whether the last `plateau_window` values span at most `band_db`.
pub fn plateau(values: &[f64], fraction: f64, band_db: f64) -> bool {
    let w = plateau_window(values.len(), fraction);
    if values.len() < w {
        return false;
    }
    let tail = &values[values.len() - w..];
    let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo <= band_db
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[f64]) -> Vec<TrendPoint> {
        v.iter()
            .enumerate()
            .map(|(i, &m)| TrendPoint {
                value: i as f64,
                min_db: if m.is_nan() { None } else { Some(m) },
                max_db: None,
                angle_rad: None,
                error: if m.is_nan() { Some("x".into()) } else { None },
            })
            .collect()
    }

    #[test]
    fn improve_then_plateau() {
        let r = TrendReport::from_points("p", pts(&[-0.1, -0.5, -0.8, -0.81, -0.82]), &TrendSection::default());
        assert_eq!(r.best, Some(4));
        assert!(r.improves && r.plateau && r.non_increasing_to_best && r.non_decreasing_after_best);
    }

    #[test]
    fn deteriorates_after_minimum() {
        let r = TrendReport::from_points("p", pts(&[-1.0, -0.8, -0.5, -0.2, 0.0]), &TrendSection::default());
        assert_eq!(r.best, Some(0));
        assert!(r.non_decreasing_after_best);
        assert!(!r.improves);
        assert!(!r.plateau);
    }

    #[test]
    fn failures_are_skipped() {
        let r = TrendReport::from_points("p", pts(&[-0.2, f64::NAN, -0.4, -0.41]), &TrendSection::default());
        assert_eq!(r.failures, 1);
        assert_eq!(r.best, Some(3));
        assert!(r.non_increasing_to_best);
        let none = TrendReport::from_points("p", pts(&[f64::NAN]), &TrendSection::default());
        assert_eq!(none.best, None);
        assert!(!none.plateau);
    }

    #[test]
    fn window_sizes() {
        assert_eq!(plateau_window(7, 0.2), 2);
        assert_eq!(plateau_window(10, 0.2), 2);
        assert_eq!(plateau_window(11, 0.2), 3);
        assert_eq!(plateau_window(1, 0.2), 2);
        assert!(!plateau(&[0.0], 0.2, 1.0));
        assert!(plateau(&[5.0, 1.0, 1.04], 0.2, 0.05));
    }
}
