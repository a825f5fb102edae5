//! Single-mode Gaussian quadrature algebra.
//!
//! Quadratures follow `X = (a + a†)/2`, `P = (a - a†)/2i`, so the vacuum has
//! variance 1/4 in every quadrature and the Heisenberg bound reads
//! `det Σ >= 1/16`. Shot-noise units (SNU) divide a variance by 1/4.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

/// Quadrature variance of the vacuum state.
pub const VACUUM_VARIANCE: f64 = 0.25;

/// Determinant of a pure single-mode covariance matrix.
pub const PURE_DETERMINANT: f64 = VACUUM_VARIANCE * VACUUM_VARIANCE;

const SYMPLECTIC_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("transform is not symplectic: det S = {det}")]
    NonSymplectic { det: f64 },
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("covariance matrix is singular or indefinite (det = {det})")]
    SingularCovariance { det: f64 },
    #[error("covariance matrix is not symmetric")]
    NotSymmetric,
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
}

/// Mean quadrature pair and covariance matrix of one optical mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianState {
    mean: Vector2<f64>,
    cov: Matrix2<f64>,
}

impl GaussianState {
    /// Builds a state from a mean and a covariance.
    ///
    /// The covariance must be symmetric (to 1e-12 relative) and positive
    /// definite. The uncertainty relation is not enforced here because
    /// fitted or sampled covariances may violate it slightly; see
    /// [`GaussianState::satisfies_uncertainty`].
    pub fn new(mean: Vector2<f64>, cov: Matrix2<f64>) -> Result<Self, GaussianError> {
        if !mean.iter().chain(cov.iter()).all(|v| v.is_finite()) {
            return Err(GaussianError::Domain("non-finite state entry".into()));
        }
        let scale = cov.abs().max().max(f64::MIN_POSITIVE);
        if (cov[(0, 1)] - cov[(1, 0)]).abs() > 1e-12 * scale {
            return Err(GaussianError::NotSymmetric);
        }
        let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        let cov = Matrix2::new(cov[(0, 0)], off, off, cov[(1, 1)]);
        if cov[(0, 0)] <= 0.0 || cov.determinant() <= 0.0 {
            return Err(GaussianError::NotPositiveDefinite);
        }
        Ok(Self { mean, cov })
    }

    /// Zero-mean state with the given covariance.
    pub fn centered(cov: Matrix2<f64>) -> Result<Self, GaussianError> {
        Self::new(Vector2::zeros(), cov)
    }

    pub fn vacuum() -> Self {
        Self {
            mean: Vector2::zeros(),
            cov: Matrix2::identity() * VACUUM_VARIANCE,
        }
    }

    /// Pure squeezed vacuum with minimum variance `VACUUM_VARIANCE * exp(-2r)`
    /// along the quadrature at angle `angle`.
    pub fn squeezed_vacuum(r: f64, angle: f64) -> Self {
        let base = Matrix2::new(
            VACUUM_VARIANCE * (-2.0 * r).exp(),
            0.0,
            0.0,
            VACUUM_VARIANCE * (2.0 * r).exp(),
        );
        let rot = rotation_matrix(angle);
        Self {
            mean: Vector2::zeros(),
            cov: rot * base * rot.transpose(),
        }
    }

    pub fn mean(&self) -> Vector2<f64> {
        self.mean
    }

    pub fn cov(&self) -> Matrix2<f64> {
        self.cov
    }

    pub fn det(&self) -> f64 {
        self.cov.determinant()
    }

    /// `det Σ >= 1/16 - tol`.
    pub fn satisfies_uncertainty(&self, tol: f64) -> bool {
        self.det() >= PURE_DETERMINANT - tol
    }

    pub fn apply_symplectic(&self, s: &SymplecticTransform) -> Self {
        let m = s.matrix();
        let cov = m * self.cov * m.transpose();
        let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
        Self {
            mean: m * self.mean,
            cov: Matrix2::new(cov[(0, 0)], off, off, cov[(1, 1)]),
        }
    }

    /// Beamsplitter loss with transmissivity `eta`, mixing in vacuum.
    pub fn apply_loss(&self, eta: f64) -> Result<Self, GaussianError> {
        check_unit_interval("transmissivity", eta)?;
        Ok(Self {
            mean: self.mean * eta.sqrt(),
            cov: self.cov * eta + Matrix2::identity() * ((1.0 - eta) * VACUUM_VARIANCE),
        })
    }

    /// Variance of `X cos φ + P sin φ`.
    pub fn quadrature_variance(&self, phi: f64) -> f64 {
        let c = Vector2::new(phi.cos(), phi.sin());
        (c.transpose() * self.cov * c)[(0, 0)]
    }

    /// Smallest quadrature variance and the angle in `[0, π)` where it occurs.
    ///
    /// An isotropic covariance has no preferred angle; 0 is returned.
    pub fn min_variance(&self) -> (f64, f64) {
        let (a, b, c) = (self.cov[(0, 0)], self.cov[(1, 1)], self.cov[(0, 1)]);
        let half_diff = 0.5 * (a - b);
        let radius = half_diff.hypot(c);
        let variance = 0.5 * (a + b) - radius;
        if radius <= 1e-15 * (a + b).abs() {
            return (variance, 0.0);
        }
        // V(φ) = (a+b)/2 + R cos(2φ - θ); the minimum sits at 2φ = θ + π.
        let theta = c.atan2(half_diff);
        (variance, wrap_half_turn(0.5 * (theta + PI)))
    }

    /// Largest quadrature variance and its angle in `[0, π)`.
    pub fn max_variance(&self) -> (f64, f64) {
        let (vmin, angle) = self.min_variance();
        let trace = self.cov.trace();
        (trace - vmin, wrap_half_turn(angle + 0.5 * PI))
    }

    /// Gaussian Wigner function at phase-space point `(x, p)`.
    pub fn wigner(&self, x: f64, p: f64) -> Result<f64, GaussianError> {
        let det = self.det();
        if det <= 0.0 || !det.is_finite() {
            return Err(GaussianError::SingularCovariance { det });
        }
        let inv = self
            .cov
            .try_inverse()
            .ok_or(GaussianError::SingularCovariance { det })?;
        let r = Vector2::new(x - self.mean[0], p - self.mean[1]);
        let q = (r.transpose() * inv * r)[(0, 0)];
        Ok((-0.5 * q).exp() / (2.0 * PI * det.sqrt()))
    }

    /// Rotate the quadrature frame by `phi` (a phase shift of the mode).
    pub fn rotated(&self, phi: f64) -> Self {
        self.apply_symplectic(&SymplecticTransform::rotation(phi))
    }
}

/// A real 2×2 matrix with unit determinant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymplecticTransform(Matrix2<f64>);

impl SymplecticTransform {
    pub fn new(m: Matrix2<f64>) -> Result<Self, GaussianError> {
        let det = m.determinant();
        if !det.is_finite() || (det - 1.0).abs() > SYMPLECTIC_TOL {
            return Err(GaussianError::NonSymplectic { det });
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    /// Phase-space rotation by `phi`.
    pub fn rotation(phi: f64) -> Self {
        Self(rotation_matrix(phi))
    }

    /// Shear `[[1, 0], [-g, 1]]`: the phase quadrature picks up `-g X`.
    pub fn shear(g: f64) -> Self {
        Self(Matrix2::new(1.0, 0.0, -g, 1.0))
    }

    /// Squeeze `diag(e^{-r}, e^{r})`.
    pub fn squeeze(r: f64) -> Self {
        Self(Matrix2::new((-r).exp(), 0.0, 0.0, r.exp()))
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        self.0
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &SymplecticTransform) -> Self {
        Self(self.0 * first.0)
    }
}

/// A variance expressed relative to shot noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseFigure {
    pub value_db: f64,
    pub snu: f64,
}

impl NoiseFigure {
    pub fn from_snu(snu: f64) -> Result<Self, GaussianError> {
        if !(snu > 0.0) || !snu.is_finite() {
            return Err(GaussianError::Domain(format!(
                "noise level must be positive, got {snu}"
            )));
        }
        Ok(Self {
            value_db: 10.0 * snu.log10(),
            snu,
        })
    }

    pub fn from_db(db: f64) -> Result<Self, GaussianError> {
        if !db.is_finite() {
            return Err(GaussianError::Domain(format!("non-finite dB value {db}")));
        }
        Ok(Self {
            value_db: db,
            snu: 10f64.powf(db / 10.0),
        })
    }

    /// Back to quadrature variance units.
    pub fn variance(&self) -> f64 {
        self.snu * VACUUM_VARIANCE
    }
}

/// Normalize a quadrature variance to shot noise.
pub fn to_snu(variance: f64) -> Result<NoiseFigure, GaussianError> {
    if !(variance > 0.0) {
        return Err(GaussianError::Domain(format!(
            "variance must be positive, got {variance}"
        )));
    }
    NoiseFigure::from_snu(variance / VACUUM_VARIANCE)
}

pub fn from_db(db: f64) -> Result<NoiseFigure, GaussianError> {
    NoiseFigure::from_db(db)
}

pub(crate) fn check_unit_interval(name: &str, v: f64) -> Result<(), GaussianError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(GaussianError::Domain(format!(
            "{name} must lie in [0, 1], got {v}"
        )));
    }
    Ok(())
}

fn rotation_matrix(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(c, -s, s, c)
}

fn wrap_half_turn(angle: f64) -> f64 {
    let a = angle.rem_euclid(PI);
    if a >= PI {
        0.0
    } else {
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn shear_vacuum(g: f64) -> GaussianState {
        GaussianState::vacuum().apply_symplectic(&SymplecticTransform::shear(g))
    }

    #[test]
    fn vacuum_convention() {
        let v = GaussianState::vacuum();
        assert_eq!(v.cov(), Matrix2::new(0.25, 0.0, 0.0, 0.25));
        assert_eq!(v.det(), 1.0 / 16.0);
        assert_eq!(v.apply_symplectic(&SymplecticTransform::identity()), v);
        for k in 0..16 {
            assert_relative_eq!(v.quadrature_variance(k as f64 * 0.4), 0.25, epsilon = 1e-15);
        }
        assert_eq!(v.min_variance(), (0.25, 0.0));
    }

    #[test]
    fn shear_by_two_matches_hand_product() {
        // [[1,0],[-2,1]] · I/4 · [[1,-2],[0,1]] = 1/4 [[1,-2],[-2,5]]
        let s = shear_vacuum(2.0);
        let expected = Matrix2::new(1.0, -2.0, -2.0, 5.0) * 0.25;
        assert_relative_eq!(s.cov(), expected, epsilon = 1e-15);
        let (vmin, angle) = s.min_variance();
        // characteristic polynomial of 1/4 [[1,-2],[-2,5]] gives (3 - 2√2)/4
        assert_relative_eq!(vmin, (3.0 - 2.0 * 2f64.sqrt()) / 4.0, epsilon = 1e-15);
        assert_relative_eq!(vmin, 0.042893, epsilon = 5e-7);
        assert_relative_eq!(s.quadrature_variance(angle), vmin, epsilon = 1e-12);
        assert_relative_eq!(to_snu(vmin).unwrap().value_db, -7.6555, epsilon = 1e-4);
    }

    #[test]
    fn shear_by_one_closed_form() {
        // trace 3/4, det 1/16  =>  λ = (3 ± √5)/8
        let (vmin, _) = shear_vacuum(1.0).min_variance();
        assert_relative_eq!(vmin, (3.0 - 5f64.sqrt()) / 8.0, epsilon = 1e-15);
        assert_relative_eq!(to_snu(vmin).unwrap().value_db, -4.1798, epsilon = 1e-4);
    }

    #[test]
    fn rotation_shifts_min_angle() {
        let s = GaussianState::squeezed_vacuum(0.4, 0.3);
        let (_, a0) = s.min_variance();
        assert_relative_eq!(a0, 0.3, epsilon = 1e-12);
        let r = s.apply_symplectic(&SymplecticTransform::rotation(0.5));
        let (_, a1) = r.min_variance();
        assert_relative_eq!(a1, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn non_symplectic_rejected() {
        let err = SymplecticTransform::new(Matrix2::new(2.0, 0.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, GaussianError::NonSymplectic { .. }));
        assert!(SymplecticTransform::new(Matrix2::new(1.0, 3.0, 0.0, 1.0 + 1e-10)).is_ok());
    }

    #[test]
    fn loss_endpoints_and_domain() {
        let s = shear_vacuum(2.0);
        assert_eq!(s.apply_loss(1.0).unwrap().cov(), s.cov());
        assert_relative_eq!(
            s.apply_loss(0.0).unwrap().cov(),
            GaussianState::vacuum().cov(),
            epsilon = 1e-15
        );
        assert!(s.apply_loss(1.2).is_err());
        assert!(s.apply_loss(-0.1).is_err());
        assert!(s.apply_loss(f64::NAN).is_err());
    }

    #[test]
    fn loss_on_minus_four_db_state() {
        let snu_in = 10f64.powf(-0.4);
        let s = GaussianState::centered(Matrix2::new(0.25 * snu_in, 0.0, 0.0, 0.25 / snu_in)).unwrap();
        let out = s.apply_loss(0.744876).unwrap();
        let nf = to_snu(out.min_variance().0).unwrap();
        assert_relative_eq!(nf.snu, 0.744876 * snu_in + 0.255124, epsilon = 1e-12);
        assert_relative_eq!(nf.snu, 0.5517, epsilon = 1e-4);
        assert_relative_eq!(nf.value_db, -2.583, epsilon = 1e-3);
    }

    #[test]
    fn wigner_values() {
        let v = GaussianState::vacuum();
        assert_relative_eq!(v.wigner(0.0, 0.0).unwrap(), 2.0 / PI, epsilon = 1e-15);
        assert!(v.wigner(40.0, -40.0).unwrap() < 1e-300);
        // Riemann sum over [-5,5]^2, step 0.01
        let s = shear_vacuum(1.0);
        let h = 0.01;
        let mut total = 0.0;
        for i in 0..=1000 {
            for j in 0..=1000 {
                let x = -5.0 + i as f64 * h;
                let p = -5.0 + j as f64 * h;
                total += s.wigner(x, p).unwrap() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-4, "integral {total}");
    }

    #[test]
    fn noise_figures() {
        assert_eq!(to_snu(0.25).unwrap().value_db, 0.0);
        assert_relative_eq!(from_db(-3.5).unwrap().snu, 0.44668, epsilon = 5e-6);
        assert_relative_eq!(from_db(-4.0).unwrap().snu, 0.39811, epsilon = 5e-6);
        assert!(to_snu(0.0).is_err());
        assert!(to_snu(-1.0).is_err());
    }

    #[test]
    fn constructor_checks() {
        assert_eq!(
            GaussianState::centered(Matrix2::new(1.0, 0.2, 0.3, 1.0)).unwrap_err(),
            GaussianError::NotSymmetric
        );
        assert_eq!(
            GaussianState::centered(Matrix2::new(1.0, 2.0, 2.0, 1.0)).unwrap_err(),
            GaussianError::NotPositiveDefinite
        );
    }

    #[test]
    fn homodyne_grid_matches_min_variance() {
        let s = GaussianState::squeezed_vacuum(0.7, 1.1).apply_loss(0.6).unwrap();
        let n = 10_000;
        let grid_min = (0..n)
            .map(|k| s.quadrature_variance(PI * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min);
        let (vmin, _) = s.min_variance();
        // second-order in the grid step
        let (vmax, _) = s.max_variance();
        let bound = (vmax - vmin) * (PI / n as f64).powi(2);
        assert!(grid_min >= vmin - 1e-15 && grid_min - vmin <= bound);
    }

    #[test]
    fn monte_carlo_quadrature_variance() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let s = GaussianState::squeezed_vacuum(0.5, 0.4).apply_loss(0.8).unwrap();
        let chol = s.cov().cholesky().unwrap().l();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let phi: f64 = 1.3;
        let c = Vector2::new(phi.cos(), phi.sin());
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let z = Vector2::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            let q = c.dot(&(chol * z));
            acc += q * q;
        }
        let sampled = acc / n as f64;
        let exact = s.quadrature_variance(phi);
        let se = exact * (2.0 / n as f64).sqrt();
        assert!((sampled - exact).abs() < 5.0 * se, "{sampled} vs {exact}");
    }

    fn arb_transform() -> impl Strategy<Value = SymplecticTransform> {
        (-2.0..2.0f64, -1.5..1.5f64, -3.0..3.0f64, -3.0..3.0f64).prop_map(|(r, g, a, b)| {
            SymplecticTransform::rotation(a)
                .compose(&SymplecticTransform::shear(g))
                .compose(&SymplecticTransform::squeeze(r))
                .compose(&SymplecticTransform::rotation(b))
        })
    }

    proptest! {
        #[test]
        fn symplectic_preserves_determinant(t in arb_transform(), eta in 0.05..1.0f64) {
            let s = GaussianState::vacuum().apply_loss(eta).unwrap();
            let out = s.apply_symplectic(&t);
            prop_assert!(((out.det() - s.det()) / s.det()).abs() < 1e-10);
        }

        #[test]
        fn compositions_respect_uncertainty(
            ops in prop::collection::vec((arb_transform(), 0.0..1.0f64), 1..6)
        ) {
            let mut s = GaussianState::vacuum();
            for (t, eta) in ops {
                s = s.apply_symplectic(&t).apply_loss(eta).unwrap();
            }
            prop_assert!(s.det() >= PURE_DETERMINANT - 1e-12);
        }

        #[test]
        fn losses_compose(t in arb_transform(), e1 in 0.0..1.0f64, e2 in 0.0..1.0f64) {
            let s = GaussianState::vacuum().apply_symplectic(&t);
            let a = s.apply_loss(e1).unwrap().apply_loss(e2).unwrap();
            let b = s.apply_loss(e1 * e2).unwrap();
            let scale = s.cov().abs().max().max(1.0);
            prop_assert!((a.cov() - b.cov()).abs().max() <= 1e-12 * scale);
        }

        #[test]
        fn min_variance_is_attained(t in arb_transform()) {
            let s = GaussianState::vacuum().apply_symplectic(&t);
            let (v, angle) = s.min_variance();
            prop_assert!((0.0..PI).contains(&angle));
            let scale = s.cov().abs().max();
            prop_assert!((s.quadrature_variance(angle) - v).abs() <= 1e-12 * scale);
            prop_assert!((s.quadrature_variance(angle + PI) - v).abs() <= 1e-12 * scale);
        }

        #[test]
        fn db_round_trip(db in -30.0..30.0f64) {
            let nf = from_db(db).unwrap();
            let back = to_snu(nf.variance()).unwrap();
            prop_assert!((back.value_db - db).abs() < 1e-12);
        }
    }
}
