//! Phenomenological self-rotation medium: a quadrature shear interleaved
//! with absorption, integrated over thin slices.

use crate::gaussian::{GaussianError, GaussianState, SymplecticTransform, VACUUM_VARIANCE};

pub const DEFAULT_SHEAR_SLICES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearMediumConfig {
    /// Integrated self-rotation shear (dimensionless).
    pub g_total: f64,
    /// Integrated intensity absorption; end-to-end transmission is `exp(-alpha_total)`.
    pub alpha_total: f64,
    pub n_slices: usize,
}

impl ShearMediumConfig {
    pub fn new(g_total: f64, alpha_total: f64, n_slices: usize) -> Result<Self, GaussianError> {
        let cfg = Self {
            g_total,
            alpha_total,
            n_slices,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn lossless(g_total: f64) -> Self {
        Self {
            g_total,
            alpha_total: 0.0,
            n_slices: DEFAULT_SHEAR_SLICES,
        }
    }

    pub fn validate(&self) -> Result<(), GaussianError> {
        if self.n_slices == 0 {
            return Err(GaussianError::Domain("n_slices must be at least 1".into()));
        }
        if !self.g_total.is_finite() {
            return Err(GaussianError::Domain("g_total must be finite".into()));
        }
        if !(self.alpha_total >= 0.0) || !self.alpha_total.is_finite() {
            return Err(GaussianError::Domain(format!(
                "alpha_total must be finite and non-negative, got {}",
                self.alpha_total
            )));
        }
        Ok(())
    }

    pub fn transmission(&self) -> f64 {
        (-self.alpha_total).exp()
    }
}

pub fn shear_step(state: &GaussianState, dg: f64) -> GaussianState {
    state.apply_symplectic(&SymplecticTransform::shear(dg))
}

/// Shear then loss, `n_slices` times.
pub fn propagate(
    state: &GaussianState,
    cfg: &ShearMediumConfig,
) -> Result<GaussianState, GaussianError> {
    cfg.validate()?;
    let n = cfg.n_slices as f64;
    let dg = cfg.g_total / n;
    let eta = (-cfg.alpha_total / n).exp();
    let mut s = *state;
    for _ in 0..cfg.n_slices {
        s = shear_step(&s, dg).apply_loss(eta)?;
    }
    Ok(s)
}

/// Minimum quadrature variance of vacuum after a lossless shear `g`.
pub fn pure_shear_min_variance(g: f64) -> f64 {
    // eigenvalues of (1/4)[[1, -g], [-g, 1 + g^2]]; written to avoid
    // cancellation at large g
    let disc = (g * g + 4.0).sqrt();
    VACUUM_VARIANCE * 2.0 / ((2.0 + g * g) + g.abs() * disc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_shear_is_identity() {
        let s = GaussianState::squeezed_vacuum(0.3, 0.2);
        assert_relative_eq!(shear_step(&s, 0.0).cov(), s.cov(), epsilon = 1e-16);
        let out = propagate(&s, &ShearMediumConfig::new(0.0, 0.0, 17).unwrap()).unwrap();
        assert_relative_eq!(out.cov(), s.cov(), epsilon = 1e-15);
    }

    #[test]
    fn shear_group_property() {
        let v = GaussianState::vacuum();
        let twice = shear_step(&shear_step(&v, 1.0), 1.0);
        let once = shear_step(&v, 2.0);
        assert_relative_eq!(twice.cov(), once.cov(), epsilon = 1e-14);
    }

    #[test]
    fn closed_form_values() {
        assert_relative_eq!(pure_shear_min_variance(0.0), 0.25, epsilon = 1e-16);
        assert_relative_eq!(pure_shear_min_variance(1.0), (3.0 - 5f64.sqrt()) / 8.0, epsilon = 1e-15);
        assert_relative_eq!(pure_shear_min_variance(2.0), (3.0 - 2.0 * 2f64.sqrt()) / 4.0, epsilon = 1e-15);
        // algebraic form quoted for the oracle
        for g in [0.3, 1.7, 4.0] {
            let direct = 0.25 * ((2.0 + g * g) - g * (g * g + 4.0f64).sqrt()) / 2.0;
            assert_relative_eq!(pure_shear_min_variance(g), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn lossless_slices_independent_of_count() {
        for n in [1, 7, 1000] {
            let out = propagate(&GaussianState::vacuum(), &ShearMediumConfig::new(2.0, 0.0, n).unwrap()).unwrap();
            assert_relative_eq!(out.min_variance().0, 0.042893218813452, epsilon = 1e-12);
            assert_relative_eq!(out.det(), 1.0 / 16.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn absorption_degrades_squeezing() {
        let lossless = propagate(&GaussianState::vacuum(), &ShearMediumConfig::new(2.0, 0.0, 1000).unwrap()).unwrap();
        let lossy = propagate(&GaussianState::vacuum(), &ShearMediumConfig::new(2.0, 0.693, 1000).unwrap()).unwrap();
        let reference = propagate(&GaussianState::vacuum(), &ShearMediumConfig::new(2.0, 0.693, 100_000).unwrap()).unwrap();
        assert!(lossy.min_variance().0 > lossless.min_variance().0);
        assert!(lossy.det() > 1.0 / 16.0);
        // slice-integration error at n = 1000 is O(1/n)
        assert!((lossy.min_variance().0 - reference.min_variance().0).abs() < 1e-3);
    }

    #[test]
    fn invalid_configs() {
        assert!(ShearMediumConfig::new(1.0, 0.0, 0).is_err());
        assert!(ShearMediumConfig::new(1.0, -0.1, 10).is_err());
        assert!(ShearMediumConfig::new(f64::NAN, 0.0, 10).is_err());
    }
}
