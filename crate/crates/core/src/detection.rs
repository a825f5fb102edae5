//! Balanced homodyne detection: efficiency chain, phase scans, Gaussian
//! tomography and inference of the source squeezing from measured noise.
//!
//! Scan variances are in shot-noise units. The shot-noise reference is the
//! vacuum sent through the same chain, which is 1 SNU for every efficiency.

use std::fmt::Write as _;

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::gaussian::{check_unit_interval, GaussianError, GaussianState, VACUUM_VARIANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("measured {measured_snu} SNU is at or below the loss floor {floor} SNU")]
    Unphysical { measured_snu: f64, floor: f64 },
    #[error("scan has {distinct} distinct phases modulo pi; at least 3 are needed")]
    RankDeficient { distinct: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Losses between the cell and the photocurrent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionChain {
    pub path_transmission: f64,
    pub quantum_efficiency: f64,
    /// Fringe visibility between signal and local oscillator.
    pub visibility: f64,
}

impl DetectionChain {
    pub fn new(path_transmission: f64, quantum_efficiency: f64, visibility: f64) -> Result<Self, DetectionError> {
        let chain = Self {
            path_transmission,
            quantum_efficiency,
            visibility,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn ideal() -> Self {
        Self {
            path_transmission: 1.0,
            quantum_efficiency: 1.0,
            visibility: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        check_unit_interval("path transmission", self.path_transmission)?;
        check_unit_interval("quantum efficiency", self.quantum_efficiency)?;
        check_unit_interval("visibility", self.visibility)?;
        Ok(())
    }
}

/// `η = T · QE · V²`; the visibility enters as a mode-overlap power penalty.
pub fn effective_efficiency(chain: &DetectionChain) -> Result<f64, DetectionError> {
    chain.validate()?;
    Ok(chain.path_transmission * chain.quantum_efficiency * chain.visibility * chain.visibility)
}

/// Detected variance of `X cos φ + P sin φ` in SNU.
pub fn detect(state: &GaussianState, chain: &DetectionChain, phi: f64) -> Result<f64, DetectionError> {
    let eta = effective_efficiency(chain)?;
    Ok(state.apply_loss(eta)?.quadrature_variance(phi) / VACUUM_VARIANCE)
}

/// Minimum detected noise over all phases, in dB.
pub fn detect_min_db(state: &GaussianState, chain: &DetectionChain) -> Result<f64, DetectionError> {
    let eta = effective_efficiency(chain)?;
    let (v, _) = state.apply_loss(eta)?.min_variance();
    Ok(10.0 * (v / VACUUM_VARIANCE).log10())
}

/// Undo a loss `η` on a measured noise level: `V = (M - (1 - η)) / η`.
pub fn infer_source_db(measured_db: f64, eta: f64) -> Result<f64, DetectionError> {
    if !measured_db.is_finite() {
        return Err(DetectionError::Domain("measured noise must be finite".into()));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(DetectionError::Domain(format!("efficiency must lie in (0, 1], got {eta}")));
    }
    let measured = 10f64.powf(measured_db / 10.0);
    let floor = 1.0 - eta;
    if measured <= floor {
        return Err(DetectionError::Unphysical {
            measured_snu: measured,
            floor,
        });
    }
    Ok(10.0 * ((measured - floor) / eta).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub phi: f64,
    /// SNU.
    pub variance: f64,
    /// Number of photocurrent samples behind `variance`; 0 for exact values.
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneScan {
    pub points: Vec<ScanPoint>,
    /// Variance that defines 1 SNU.
    pub sql_reference: f64,
}

impl HomodyneScan {
    pub fn min_snu(&self) -> Option<f64> {
        self.points.iter().map(|p| p.variance).reduce(f64::min)
    }

    pub fn max_snu(&self) -> Option<f64> {
        self.points.iter().map(|p| p.variance).reduce(f64::max)
    }
}

/// `n` phases evenly covering `[0, span)`.
pub fn phase_grid(n: usize, span: f64) -> Vec<f64> {
    (0..n).map(|i| span * i as f64 / n as f64).collect()
}

/// Detected noise versus local-oscillator phase.
///
/// With `samples_per_point == 0` every point is the exact detected variance.
/// Otherwise each point is the unbiased sample variance of that many draws
/// from the detected quadrature distribution; point `i` uses its own ChaCha8
/// stream derived from `seed`, so the result does not depend on scheduling.
pub fn synthesize_scan(
    state: &GaussianState,
    chain: &DetectionChain,
    phi_grid: &[f64],
    samples_per_point: usize,
    seed: u64,
) -> Result<HomodyneScan, DetectionError> {
    if phi_grid.is_empty() {
        return Err(DetectionError::Domain("phase grid is empty".into()));
    }
    if samples_per_point == 1 {
        return Err(DetectionError::Domain("a sample variance needs at least 2 samples".into()));
    }
    let eta = effective_efficiency(chain)?;
    let detected = state.apply_loss(eta)?;
    let points = phi_grid
        .par_iter()
        .enumerate()
        .map(|(i, &phi)| {
            let exact = detected.quadrature_variance(phi) / VACUUM_VARIANCE;
            if samples_per_point == 0 {
                return ScanPoint { phi, variance: exact, samples: 0 };
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let normal = Normal::new(0.0, exact.sqrt()).expect("positive variance");
            let (mut mean, mut m2) = (0.0, 0.0);
            for k in 0..samples_per_point {
                let x: f64 = normal.sample(&mut rng);
                let delta = x - mean;
                mean += delta / (k + 1) as f64;
                m2 += delta * (x - mean);
            }
            ScanPoint {
                phi,
                variance: m2 / (samples_per_point - 1) as f64,
                samples: samples_per_point,
            }
        })
        .collect();
    Ok(HomodyneScan { points, sql_reference: 1.0 })
}

/// Shot-noise calibration scan: the signal port blocked, vacuum through the chain.
pub fn sql_scan(
    chain: &DetectionChain,
    phi_grid: &[f64],
    samples_per_point: usize,
    seed: u64,
) -> Result<HomodyneScan, DetectionError> {
    synthesize_scan(&GaussianState::vacuum(), chain, phi_grid, samples_per_point, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFit {
    pub state: GaussianState,
    /// Standard errors of `(Σ₀₀, Σ₁₁, Σ₀₁)`, quadrature-variance units.
    /// Zero for exact scans.
    pub std_errors: [f64; 3],
    /// RMS residual of the fit in SNU.
    pub residual_rms: f64,
}

fn distinct_phases(points: &[ScanPoint]) -> usize {
    let mut phases: Vec<f64> = points.iter().map(|p| p.phi.rem_euclid(std::f64::consts::PI)).collect();
    phases.sort_by(f64::total_cmp);
    let mut distinct = 0;
    let mut last: Option<f64> = None;
    for &p in &phases {
        if last.is_none_or(|l| p - l > 1e-9) {
            distinct += 1;
        }
        last = Some(p);
    }
    // 0 and π - ε are the same phase
    if distinct > 1 && phases[0] + std::f64::consts::PI - phases[phases.len() - 1] <= 1e-9 {
        distinct -= 1;
    }
    distinct
}

/// Least-squares fit of `V(φ) = Σ₀₀ cos²φ + Σ₁₁ sin²φ + Σ₀₁ sin 2φ`.
///
/// Sampled points are weighted by the inverse of their sampling variance
/// `2V²/(N-1)`; exact points are weighted equally.
pub fn fit_covariance(scan: &HomodyneScan) -> Result<CovarianceFit, DetectionError> {
    let pts = &scan.points;
    if pts.iter().any(|p| !(p.variance > 0.0) || !p.variance.is_finite() || !p.phi.is_finite()) {
        return Err(DetectionError::Domain("scan variances must be positive and finite".into()));
    }
    if !(scan.sql_reference > 0.0) {
        return Err(DetectionError::Domain("shot-noise reference must be positive".into()));
    }
    let distinct = distinct_phases(pts);
    if distinct < 3 {
        return Err(DetectionError::RankDeficient { distinct });
    }
    let sampled = pts.iter().all(|p| p.samples > 1);
    let mut normal = Matrix3::<f64>::zeros();
    let mut rhs = Vector3::<f64>::zeros();
    for p in pts {
        let v = p.variance / scan.sql_reference * VACUUM_VARIANCE;
        let (s, c) = p.phi.sin_cos();
        let row = Vector3::new(c * c, s * s, 2.0 * s * c);
        let w = if sampled { (p.samples - 1) as f64 / (2.0 * v * v) } else { 1.0 };
        normal += row * row.transpose() * w;
        rhs += row * (w * v);
    }
    let inverse = normal
        .try_inverse()
        .ok_or(DetectionError::RankDeficient { distinct })?;
    let theta = inverse * rhs;
    let cov = Matrix2::new(theta[0], theta[2], theta[2], theta[1]);
    let state = GaussianState::centered(cov)?;

    let residuals: Vec<f64> = pts
        .iter()
        .map(|p| p.variance / scan.sql_reference - state.quadrature_variance(p.phi) / VACUUM_VARIANCE)
        .collect();
    let residual_rms = (residuals.iter().map(|r| r * r).sum::<f64>() / pts.len() as f64).sqrt();
    let std_errors = if sampled {
        [inverse[(0, 0)].sqrt(), inverse[(1, 1)].sqrt(), inverse[(2, 2)].sqrt()]
    } else {
        [0.0; 3]
    };
    Ok(CovarianceFit {
        state,
        std_errors,
        residual_rms,
    })
}

/// Wigner function sampled on a square grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub half_width: f64,
    /// Row `i` is `x_i`, column `j` is `p_j`, both `linspace(-h, h, n)`.
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    pub fn n_points(&self) -> usize {
        self.values.nrows()
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        grid_coordinate(self.half_width, self.n_points(), i)
    }

    /// Trapezoid-free cell sum `Σ W dx dp`.
    pub fn integral(&self) -> f64 {
        let step = 2.0 * self.half_width / (self.n_points() - 1) as f64;
        self.values.sum() * step * step
    }
}

fn grid_coordinate(half_width: f64, n: usize, i: usize) -> f64 {
    -half_width + 2.0 * half_width * i as f64 / (n - 1) as f64
}

pub fn wigner_grid(state: &GaussianState, half_width: f64, n_points: usize) -> Result<WignerGrid, DetectionError> {
    if n_points < 2 {
        return Err(DetectionError::Domain("a Wigner grid needs at least 2 points".into()));
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(DetectionError::Domain("half width must be positive".into()));
    }
    let mut values = DMatrix::zeros(n_points, n_points);
    for i in 0..n_points {
        let x = grid_coordinate(half_width, n_points, i);
        for j in 0..n_points {
            values[(i, j)] = state.wigner(x, grid_coordinate(half_width, n_points, j))?;
        }
    }
    Ok(WignerGrid { half_width, values })
}

/// Nine significant digits, the fixed number format of every CSV output.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.8e}")
}

pub const SCAN_HEADER: &str = "phi_rad,variance_snu,samples";

pub fn scan_to_csv(scan: &HomodyneScan) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for p in &scan.points {
        let _ = writeln!(out, "{},{},{}", fmt_num(p.phi), fmt_num(p.variance), p.samples);
    }
    out
}

pub fn scan_from_csv(text: &str) -> Result<HomodyneScan, DetectionError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(DetectionError::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    if header.trim() != SCAN_HEADER {
        return Err(DetectionError::Parse {
            line: 1,
            message: format!("expected header `{SCAN_HEADER}`"),
        });
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        let parse_err = |message: String| DetectionError::Parse { line: idx + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", fields.len())));
        }
        let phi = fields[0].parse::<f64>().map_err(|e| parse_err(format!("phi_rad: {e}")))?;
        let variance = fields[1]
            .parse::<f64>()
            .map_err(|e| parse_err(format!("variance_snu: {e}")))?;
        let samples = fields[2].parse::<usize>().map_err(|e| parse_err(format!("samples: {e}")))?;
        points.push(ScanPoint { phi, variance, samples });
    }
    if points.is_empty() {
        return Err(DetectionError::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    Ok(HomodyneScan { points, sql_reference: 1.0 })
}

pub fn wigner_to_csv(grid: &WignerGrid) -> String {
    let n = grid.n_points();
    let mut out = format!("# half_width={}\n# n={n}\n", fmt_num(grid.half_width));
    for i in 0..n {
        let row: Vec<String> = (0..n).map(|j| fmt_num(grid.values[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shear::pure_shear_min_variance;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn lab_chain() -> DetectionChain {
        DetectionChain::new(0.8, 0.95, 0.99).unwrap()
    }

    #[test]
    fn efficiency_products() {
        assert_eq!(effective_efficiency(&DetectionChain::ideal()).unwrap(), 1.0);
        assert_relative_eq!(effective_efficiency(&lab_chain()).unwrap(), 0.744876, epsilon = 1e-12);
        assert_eq!(effective_efficiency(&DetectionChain::new(0.3, 1.0, 1.0).unwrap()).unwrap(), 0.3);
        assert!(DetectionChain::new(1.1, 1.0, 1.0).is_err());
        assert!(DetectionChain::new(1.0, -0.1, 1.0).is_err());
    }

    #[test]
    fn vacuum_detects_as_shot_noise() {
        for phi in [0.0, 0.4, 2.0] {
            assert_relative_eq!(detect(&GaussianState::vacuum(), &lab_chain(), phi).unwrap(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn lossy_detection_of_four_db_state() {
        let r = 0.4 * 10f64.ln() / 2.0;
        let s = GaussianState::squeezed_vacuum(r, 0.0);
        let eta = 0.744876;
        let expected = eta * 10f64.powf(-0.4) + (1.0 - eta);
        let v = detect(&s, &lab_chain(), 0.0).unwrap();
        assert_relative_eq!(v, expected, epsilon = 1e-12);
        assert!((v - 0.5516).abs() < 1e-4);
        assert_relative_eq!(detect_min_db(&s, &lab_chain()).unwrap(), 10.0 * v.log10(), epsilon = 1e-12);
    }

    #[test]
    fn ideal_detection_is_quadrature_variance() {
        let s = GaussianState::squeezed_vacuum(0.7, 0.3);
        for phi in [0.0, 1.0, 2.5] {
            assert_relative_eq!(
                detect(&s, &DetectionChain::ideal(), phi).unwrap(),
                s.quadrature_variance(phi) / VACUUM_VARIANCE,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn inference_values() {
        assert_eq!(infer_source_db(0.0, 0.37).unwrap(), 0.0);
        let v = infer_source_db(-3.5, 0.919).unwrap();
        assert!((v + 4.00).abs() < 0.01, "{v}");
        // the full chain over-corrects
        let v = infer_source_db(-3.5, 0.744876).unwrap();
        assert_relative_eq!(v, -5.8978007776, epsilon = 1e-9);
        assert!(matches!(infer_source_db(-10.0, 0.5), Err(DetectionError::Unphysical { .. })));
        assert!(infer_source_db(-1.0, 0.0).is_err());
        assert!(infer_source_db(-1.0, 1.2).is_err());
    }

    #[test]
    fn analytic_scan_is_exact() {
        let s = GaussianState::squeezed_vacuum(0.5, 0.2);
        let grid = phase_grid(12, 2.0 * PI);
        let scan = synthesize_scan(&s, &lab_chain(), &grid, 0, 1).unwrap();
        for p in &scan.points {
            assert_eq!(p.variance, detect(&s, &lab_chain(), p.phi).unwrap());
            assert_eq!(p.samples, 0);
        }
    }

    #[test]
    fn sampled_scan_is_seeded() {
        let s = GaussianState::squeezed_vacuum(0.5, 0.2);
        let grid = phase_grid(8, PI);
        let a = synthesize_scan(&s, &lab_chain(), &grid, 500, 7).unwrap();
        let b = synthesize_scan(&s, &lab_chain(), &grid, 500, 7).unwrap();
        let c = synthesize_scan(&s, &lab_chain(), &grid, 500, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(synthesize_scan(&s, &lab_chain(), &[], 0, 0).is_err());
    }

    #[test]
    fn sheared_scan_period_and_extremes() {
        let v = GaussianState::vacuum();
        let s = crate::shear::shear_step(&v, 2.0);
        let grid = phase_grid(4000, 2.0 * PI);
        let scan = synthesize_scan(&s, &DetectionChain::ideal(), &grid, 0, 0).unwrap();
        let half = grid.len() / 2;
        for i in 0..half {
            assert!((scan.points[i].variance - scan.points[i + half].variance).abs() < 1e-12);
        }
        let min = scan.min_snu().unwrap();
        assert!(min >= pure_shear_min_variance(2.0) / VACUUM_VARIANCE - 1e-15);
        assert!(min - pure_shear_min_variance(2.0) / VACUUM_VARIANCE < 1e-4);
        assert!((scan.max_snu().unwrap() - s.max_variance().0 / VACUUM_VARIANCE).abs() < 1e-4 * scan.max_snu().unwrap());
    }

    #[test]
    fn fit_round_trip() {
        let flat = synthesize_scan(&GaussianState::vacuum(), &DetectionChain::ideal(), &phase_grid(5, PI), 0, 0).unwrap();
        assert_relative_eq!(fit_covariance(&flat).unwrap().state.cov(), GaussianState::vacuum().cov(), epsilon = 1e-15);

        let s = crate::shear::shear_step(&GaussianState::vacuum(), 2.0);
        let scan = synthesize_scan(&s, &DetectionChain::ideal(), &phase_grid(9, PI), 0, 0).unwrap();
        let fit = fit_covariance(&scan).unwrap();
        assert!((fit.state.cov() - s.cov()).abs().max() < 1e-10);
        assert!(fit.residual_rms < 1e-12);
        let phi_min = fit.state.min_variance().1;
        assert!((fit.state.quadrature_variance(phi_min) - fit.state.min_variance().0).abs() < 1e-10);
    }

    #[test]
    fn fit_needs_three_phases() {
        let s = GaussianState::squeezed_vacuum(0.3, 0.0);
        let scan = synthesize_scan(&s, &DetectionChain::ideal(), &[0.0, 1.0, PI, 1.0 + PI], 0, 0).unwrap();
        assert_eq!(fit_covariance(&scan), Err(DetectionError::RankDeficient { distinct: 2 }));
        let scan = synthesize_scan(&s, &DetectionChain::ideal(), &[0.0, 1.0, 2.0], 0, 0).unwrap();
        assert!(fit_covariance(&scan).is_ok());
    }

    #[test]
    fn wigner_grid_properties() {
        let g = wigner_grid(&GaussianState::vacuum(), 2.0, 5).unwrap();
        assert_relative_eq!(g.values[(2, 2)], 2.0 / PI, epsilon = 1e-15);
        let s = GaussianState::squeezed_vacuum(0.4, 0.7);
        let g = wigner_grid(&s, 5.0, 501).unwrap();
        assert!((g.integral() - 1.0).abs() < 1e-3);
        let n = g.n_points();
        for i in (0..n).step_by(37) {
            for j in (0..n).step_by(41) {
                assert!((g.values[(i, j)] - g.values[(n - 1 - i, n - 1 - j)]).abs() < 1e-14);
            }
        }
        assert!(wigner_grid(&s, 1.0, 1).is_err());
        assert!(wigner_grid(&s, 0.0, 4).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let s = GaussianState::squeezed_vacuum(0.3, 0.1);
        let scan = synthesize_scan(&s, &DetectionChain::ideal(), &phase_grid(4, PI), 100, 3).unwrap();
        let text = scan_to_csv(&scan);
        assert!(text.starts_with("phi_rad,variance_snu,samples\n0.00000000e0,"));
        let back = scan_from_csv(&text).unwrap();
        assert_eq!(back.points.len(), 4);
        for (a, b) in back.points.iter().zip(&scan.points) {
            assert!((a.variance - b.variance).abs() <= 1e-8 * b.variance);
            assert_eq!(a.samples, b.samples);
        }
        assert!(matches!(scan_from_csv("phi_rad,variance_snu,samples\n"), Err(DetectionError::Parse { .. })));
        assert!(matches!(
            scan_from_csv("phi_rad,variance_snu,samples\n0.1,x,0\n"),
            Err(DetectionError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn wigner_csv_header() {
        let g = wigner_grid(&GaussianState::vacuum(), 1.0, 3).unwrap();
        let text = wigner_to_csv(&g);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# half_width=1.00000000e0");
        assert_eq!(lines[1], "# n=3");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[3].split(',').count(), 3);
    }
}
