//! Propagation of the signal sideband through the vapor cell.
//!
//! The cell is cut into thin slices. In each slice the atoms are linearized
//! about their local steady state, the coupled atom-field equations are solved
//! in the frequency domain at the analysis frequency ω, and the resulting
//! 2×2 transfer and added-noise matrices are applied to the signal spectrum.
//! The classical drive is absorbed and phase-shifted slice by slice.
//!
//! Quadrature spectra at ω ≠ 0 are complex Hermitian; the state reported to
//! callers is their real (symmetrized) part, which is what a spectrum
//! analyzer at ±ω measures.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4};
use rayon::prelude::*;
use thiserror::Error;

use crate::atom::{
    linearize, AtomConstants, AtomError, AtomicModel, DriveField, EnsembleConfig, LinearizedAtom,
    MagneticField, QuantizationAxis, C64,
};
use crate::gaussian::{GaussianError, GaussianState, PURE_DETERMINANT, VACUUM_VARIANCE};

pub const DEFAULT_SLICES: usize = 200;
/// Doubling stops here; a change larger than [`NONCONVERGED_TOLERANCE`] at
/// this resolution is an error.
pub const MAX_SLICES: usize = 3200;
pub const NONCONVERGED_TOLERANCE: f64 = 1e-4;
const MAX_CONDITION: f64 = 1e12;
/// Below this fraction of Γ the drive is treated as fully absorbed; `⟨L_d⟩/Ω`
/// loses all precision long before Ω underflows.
const EXTINCTION: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
    #[error("resolvent at ω = {omega:e} rad/s is singular (condition number {condition:e})")]
    SingularResolvent { omega: f64, condition: f64 },
    #[error("slice integration did not converge: min variance moved by {change:e} SNU at {n_slices} slices")]
    NonConverged { n_slices: usize, change: f64 },
    #[error("output state violates the uncertainty bound (det = {det:e})")]
    Unphysical { det: f64 },
    #[error("value out of domain: {0}")]
    Domain(String),
}

/// Sideband frequency of the noise measurement, rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct AnalysisFrequency(f64);

impl AnalysisFrequency {
    pub fn new(omega: f64) -> Result<Self, PropagationError> {
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(PropagationError::Domain(format!(
                "analysis frequency must be finite and >= 0, got {omega}"
            )));
        }
        Ok(Self(omega))
    }

    pub fn from_mhz(mhz: f64) -> Result<Self, PropagationError> {
        Self::new(2.0 * PI * mhz * 1e6)
    }

    pub fn omega(self) -> f64 {
        self.0
    }
}

impl Default for AnalysisFrequency {
    /// 5 MHz. Below a few MHz the X-scheme spectrum is dominated by
    /// optical-pumping noise and shows no squeezing.
    fn default() -> Self {
        Self(2.0 * PI * 5e6)
    }
}

/// Quadrature map of one slice: `S ← T S T† + N_add`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceTransfer {
    pub t: Matrix2<C64>,
    /// Hermitian, positive semidefinite.
    pub n_add: Matrix2<C64>,
}

impl SliceTransfer {
    pub fn identity() -> Self {
        Self {
            t: Matrix2::identity(),
            n_add: Matrix2::zeros(),
        }
    }

    pub fn apply(&self, spectrum: &Matrix2<C64>) -> Matrix2<C64> {
        let out = self.t * spectrum * self.t.adjoint() + self.n_add;
        (out + out.adjoint()) * C64::from(0.5)
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &SliceTransfer) -> SliceTransfer {
        SliceTransfer {
            t: next.t * self.t,
            n_add: next.t * self.n_add * next.t.adjoint() + next.n_add,
        }
    }
}

/// Per-slice response coefficients before exponentiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceGenerator {
    /// Field-to-field gain `dq/dz = K q + noise`.
    pub k: Matrix2<C64>,
    /// Symmetrized noise density added per unit `z`.
    pub n: Matrix2<C64>,
}

/// Collective coupling `N κ` of a unit-strength transition per unit of the
/// normalized coordinate `z/L`, rad/s: `OD Γ / 4`.
pub fn collective_coupling(ensemble: &EnsembleConfig, constants: &AtomConstants) -> f64 {
    ensemble.optical_depth(constants) * constants.gamma / 4.0
}

/// Frequency-domain generator of the field equations for atoms linearized in
/// `atom`, with collective coupling `coupling` (see [`collective_coupling`]).
///
/// The atoms respond as `δλ(ω) = (-iω - A)⁻¹ (B δq + F)`, which is fed back
/// into `∂_z δq = coupling · C δλ`.
pub fn slice_generator(
    atom: &LinearizedAtom,
    coupling: f64,
    omega: AnalysisFrequency,
) -> Result<SliceGenerator, PropagationError> {
    if !(coupling >= 0.0) || !coupling.is_finite() {
        return Err(PropagationError::Domain("coupling must be finite and >= 0".into()));
    }
    let m = atom.drift.nrows();
    let w = omega.omega();
    let resolvent_arg = nalgebra::DMatrix::from_fn(m, m, |i, j| {
        C64::new(-atom.drift[(i, j)], if i == j { -w } else { 0.0 })
    });
    let r = resolvent_arg
        .clone()
        .try_inverse()
        .ok_or(PropagationError::SingularResolvent {
            omega: w,
            condition: f64::INFINITY,
        })?;
    let condition = one_norm(&resolvent_arg) * one_norm(&r);
    if !(condition <= MAX_CONDITION) {
        return Err(PropagationError::SingularResolvent { omega: w, condition });
    }
    let b = atom.field_input.map(C64::from);
    let c = atom.field_output.map(C64::from);
    let cr = &c * &r;
    let k = &cr * &b * C64::from(coupling);
    let two_d = atom.diffusion.map(|z| C64::from(2.0 * z.re));
    let n = &cr * two_d * cr.adjoint() * C64::from(coupling);
    let to2 = |x: &nalgebra::DMatrix<C64>| Matrix2::new(x[(0, 0)], x[(0, 1)], x[(1, 0)], x[(1, 1)]);
    let n = to2(&n);
    Ok(SliceGenerator {
        k: to2(&k),
        n: (n + n.adjoint()) * C64::from(0.5),
    })
}

fn one_norm(m: &nalgebra::DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Transfer of one slice of thickness `dz` (in units of the cell length):
/// `T = exp(K dz)` and `N_add = ∫₀^dz exp(K s) N exp(K† s) ds`, the integral
/// evaluated exactly with Van Loan's block exponential.
pub fn slice_transfer(generator: &SliceGenerator, dz: f64) -> SliceTransfer {
    // the block exponential contains exp(+K† dz), so N_add cancels badly on
    // optically thick slices; evaluate on dz / 2^s and compose exactly
    let norm = (generator.k * C64::from(dz)).iter().map(|z| z.norm()).sum::<f64>();
    let halvings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let mut step = van_loan(generator, dz / 2f64.powi(halvings));
    for _ in 0..halvings {
        step = step.then(&step);
    }
    step
}

fn van_loan(generator: &SliceGenerator, dz: f64) -> SliceTransfer {
    let k = generator.k * C64::from(dz);
    let n = generator.n * C64::from(dz);
    let mut block = Matrix4::<C64>::zeros();
    block.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-k));
    block.fixed_view_mut::<2, 2>(0, 2).copy_from(&n);
    block.fixed_view_mut::<2, 2>(2, 2).copy_from(&k.adjoint());
    let e = block.exp();
    let f12: Matrix2<C64> = e.fixed_view::<2, 2>(0, 2).into();
    let f22: Matrix2<C64> = e.fixed_view::<2, 2>(2, 2).into();
    let n_add = f22.adjoint() * f12;
    SliceTransfer {
        t: k.exp(),
        n_add: (n_add + n_add.adjoint()) * C64::from(0.5),
    }
}

/// One slice of length `L/n_slices` for atoms linearized in `atom`;
/// `coupling` is the whole-cell [`collective_coupling`].
pub fn slice_response(
    atom: &LinearizedAtom,
    coupling: f64,
    n_slices: usize,
    omega: AnalysisFrequency,
) -> Result<SliceTransfer, PropagationError> {
    if n_slices == 0 {
        return Err(PropagationError::Domain("n_slices must be at least 1".into()));
    }
    let generator = slice_generator(atom, coupling, omega)?;
    Ok(slice_transfer(&generator, 1.0 / n_slices as f64))
}

/// Everything that defines a simulated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub model: AtomicModel,
    pub constants: AtomConstants,
    pub ensemble: EnsembleConfig,
    pub drive: DriveField,
    pub field: MagneticField,
    pub omega: AnalysisFrequency,
    pub n_slices: usize,
}

/// Effective homogeneous density of the reference cell, m⁻³. The vapor at
/// 74 °C is about 400 times denser, but without Doppler averaging every atom
/// sees the drive at the same detuning, so the homogeneous model needs a much
/// smaller optical depth to reach the same absorption.
pub const REFERENCE_DENSITY: f64 = 2e15;
pub const REFERENCE_LENGTH: f64 = 0.075;
pub const REFERENCE_TEMPERATURE: f64 = 347.15;
pub const REFERENCE_POWER: f64 = 6e-3;
pub const REFERENCE_WAIST: f64 = 2e-3;
/// 2π·800 MHz above `F=2 → F'=1`, i.e. 16.7 MHz below `F'=2`.
pub const REFERENCE_DETUNING: f64 = 2.0 * PI * 800e6;
/// 150 mG transverse field, in gauss.
pub const REFERENCE_B_X: f64 = 0.15;

impl Default for CellConfig {
    /// Reference cell: X-scheme, 6 mW on a 2 mm waist, 150 mG along x.
    fn default() -> Self {
        Self {
            model: crate::atom::default_x_scheme(),
            constants: AtomConstants::default(),
            ensemble: EnsembleConfig {
                number_density: REFERENCE_DENSITY,
                length: REFERENCE_LENGTH,
                temperature: REFERENCE_TEMPERATURE,
            },
            drive: DriveField {
                power: REFERENCE_POWER,
                waist: REFERENCE_WAIST,
                detuning: REFERENCE_DETUNING,
            },
            field: MagneticField { b_x: REFERENCE_B_X, b_z: 0.0 },
            omega: AnalysisFrequency::default(),
            n_slices: DEFAULT_SLICES,
        }
    }
}

impl CellConfig {
    pub fn validate(&self) -> Result<(), PropagationError> {
        self.model.validate()?;
        self.ensemble.validate()?;
        self.drive.validate()?;
        MagneticField::new(self.field.b_x, self.field.b_z)?;
        if self.n_slices == 0 {
            return Err(PropagationError::Domain("n_slices must be at least 1".into()));
        }
        Ok(())
    }

    pub fn axis(&self) -> QuantizationAxis {
        self.field.dominant_axis()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    /// Symmetrized output spectrum in the frame of the transmitted drive.
    pub state: GaussianState,
    /// Complex quadrature spectrum (lab phase reference).
    pub spectrum: Matrix2<C64>,
    pub drive_in: C64,
    pub drive_out: C64,
    pub axis: QuantizationAxis,
    pub n_slices: usize,
}

impl CellOutput {
    /// Intensity transmission of the drive.
    pub fn drive_transmission(&self) -> f64 {
        if self.drive_in.norm() == 0.0 {
            1.0
        } else {
            (self.drive_out / self.drive_in).norm_sqr()
        }
    }
}

/// Propagate a zero-mean sideband state through the cell.
///
/// The drive enters with a real Rabi frequency. In every slice the atoms are
/// solved at the drive value entering that slice, and the drive is then
/// advanced by `Ω ← Ω exp(-2i N κ χ dz)` with `χ = ⟨L_d⟩/Ω`.
pub fn propagate_cell(input: &GaussianState, cell: &CellConfig) -> Result<CellOutput, PropagationError> {
    cell.validate()?;
    if input.mean().norm() != 0.0 {
        return Err(PropagationError::Domain(
            "sideband input states carry no mean field".into(),
        ));
    }
    let axis = cell.axis();
    let coupling = collective_coupling(&cell.ensemble, &cell.constants);
    let dz = 1.0 / cell.n_slices as f64;
    let drive_in = C64::from(crate::atom::rabi_from_power(&cell.drive, &cell.constants)?);
    let mut rabi = drive_in;
    let mut spectrum = input.cov().map(C64::from);

    if coupling > 0.0 {
        for _ in 0..cell.n_slices {
            let atom = linearize(
                &cell.model,
                rabi,
                cell.drive.detuning,
                &cell.field,
                axis,
                &cell.constants,
            )?;
            let generator = slice_generator(&atom, coupling, cell.omega)?;
            spectrum = slice_transfer(&generator, dz).apply(&spectrum);
            if rabi.norm() > 0.0 {
                let chi = atom.drive_coherence / rabi;
                rabi *= (C64::new(0.0, -2.0) * coupling * chi * dz).exp();
                if rabi.norm() < EXTINCTION * cell.constants.gamma {
                    rabi = C64::from(0.0);
                }
            }
        }
    }

    let phase = if rabi.norm() > 0.0 { rabi.arg() } else { 0.0 };
    let lab = GaussianState::centered(spectrum.map(|z| z.re))?;
    let state = lab.rotated(-phase);
    let det = state.det();
    if det < PURE_DETERMINANT - 1e-9 {
        return Err(PropagationError::Unphysical { det });
    }
    Ok(CellOutput {
        state,
        spectrum,
        drive_in,
        drive_out: rabi,
        axis,
        n_slices: cell.n_slices,
    })
}

/// Propagate with slice doubling until the minimum variance changes by less
/// than `tolerance_snu`. Returns the finer of the last two results.
pub fn propagate_cell_converged(
    input: &GaussianState,
    cell: &CellConfig,
    tolerance_snu: f64,
) -> Result<CellOutput, PropagationError> {
    let mut cfg = cell.clone();
    let mut coarse = propagate_cell(input, &cfg)?;
    loop {
        cfg.n_slices *= 2;
        let fine = propagate_cell(input, &cfg)?;
        let change = (fine.state.min_variance().0 - coarse.state.min_variance().0).abs() / VACUUM_VARIANCE;
        if change <= tolerance_snu {
            return Ok(fine);
        }
        if cfg.n_slices >= MAX_SLICES {
            if change > NONCONVERGED_TOLERANCE {
                return Err(PropagationError::NonConverged {
                    n_slices: cfg.n_slices,
                    change,
                });
            }
            return Ok(fine);
        }
        coarse = fine;
    }
}

/// Laboratory knob varied in a sweep, in the units used at the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepParameter {
    BxMilliGauss,
    BzMilliGauss,
    DetuningMHz,
    PowerMilliWatt,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::BxMilliGauss => "b_x_mG",
            SweepParameter::BzMilliGauss => "b_z_mG",
            SweepParameter::DetuningMHz => "detuning_MHz",
            SweepParameter::PowerMilliWatt => "power_mW",
        }
    }

    pub fn apply(self, cell: &mut CellConfig, value: f64) {
        match self {
            SweepParameter::BxMilliGauss => cell.field.b_x = value * 1e-3,
            SweepParameter::BzMilliGauss => cell.field.b_z = value * 1e-3,
            SweepParameter::DetuningMHz => cell.drive.detuning = 2.0 * PI * value * 1e6,
            SweepParameter::PowerMilliWatt => cell.drive.power = value * 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Squeezing {
    pub min_snu: f64,
    pub max_snu: f64,
    /// Quadrature angle of the minimum, radians in `[0, π)`.
    pub angle: f64,
}

impl Squeezing {
    pub fn of(state: &GaussianState) -> Self {
        let (min, angle) = state.min_variance();
        Self {
            min_snu: min / VACUUM_VARIANCE,
            max_snu: state.max_variance().0 / VACUUM_VARIANCE,
            angle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub outcome: Result<Squeezing, PropagationError>,
}

/// Propagate vacuum at every grid value. Points are evaluated in parallel and
/// returned in grid order; a failing point does not stop the sweep.
pub fn squeezing_vs(cell: &CellConfig, parameter: SweepParameter, values: &[f64]) -> Vec<SweepPoint> {
    values
        .par_iter()
        .map(|&value| {
            let mut cfg = cell.clone();
            parameter.apply(&mut cfg, value);
            let outcome = propagate_cell(&GaussianState::vacuum(), &cfg).map(|out| Squeezing::of(&out.state));
            SweepPoint { value, outcome }
        })
        .collect()
}
