//! Microscopic atomic engine: level scheme, dipole couplings, Lindblad
//! decay, interaction Hamiltonian with Zeeman terms, mean-value steady state,
//! and the drift and diffusion matrices of the linearized Heisenberg-Langevin
//! equations.
//!
//! Fluctuations are expressed in a generalized Gell-Mann basis of traceless
//! Hermitian operators `λ_k` (normalized `Tr λ_k λ_l = 2 δ_kl`), so the drift
//! matrix is real and the trace mode (which carries no fluctuation) is
//! removed.
//!
//! All frequencies are angular (rad/s). Magnetic fields are in gauss.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

const TWO_PI: f64 = 2.0 * PI;
const MAX_ITERATIONS: usize = 100_000;
const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("scheme mismatch: {0}")]
    SchemeMismatch(String),
    #[error("invalid atomic model: {0}")]
    InvalidModel(String),
    #[error("value out of domain: {0}")]
    Domain(String),
    #[error("steady state is not unique (null space dimension {null_dim})")]
    DegenerateSteadyState { null_dim: usize },
    #[error("steady state failed a physicality check: {0}")]
    UnphysicalSteadyState(String),
    #[error("drift matrix is unstable (max real eigenvalue {max_re:e})")]
    UnstableDrift { max_re: f64 },
    #[error("diffusion matrix has a negative eigenvalue {min_eig:e}")]
    NegativeDiffusion { min_eig: f64 },
    #[error("Hamiltonian is not Hermitian (max deviation {0:e})")]
    NonHermitian(f64),
    #[error("linear algebra failed to converge: {0}")]
    Numerical(&'static str),
    #[error("could not parse atomic model: {0}")]
    Parse(String),
}

// ---------------------------------------------------------------------------
// Constants and physical configuration
// ---------------------------------------------------------------------------

/// Reference data for the ⁸⁷Rb D1 line used to convert laboratory knobs into
/// angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConstants {
    /// Natural linewidth, rad/s.
    pub gamma: f64,
    /// Saturation intensity, W/m².
    pub saturation_intensity: f64,
    /// μ_B/ħ, rad/s per gauss.
    pub bohr_magneton: f64,
    /// Transition wavelength, m.
    pub wavelength: f64,
}

impl Default for AtomConstants {
    fn default() -> Self {
        Self {
            gamma: TWO_PI * 5.75e6,
            // 4.49 mW/cm²
            saturation_intensity: 44.9,
            bohr_magneton: TWO_PI * 1.3996e6,
            wavelength: 794.979e-9,
        }
    }
}

impl AtomConstants {
    /// Resonant cross section `3λ²/2π` of a unit-strength transition.
    pub fn resonant_cross_section(&self) -> f64 {
        3.0 * self.wavelength * self.wavelength / TWO_PI
    }
}

/// Frequency of the F=2 → F'=2 line above F=2 → F'=1 (2A of 5²P₁/₂), rad/s.
pub const D1_EXCITED_SPLITTING: f64 = TWO_PI * 816.656e6;

/// Linear-y drive laser.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveField {
    /// W.
    pub power: f64,
    /// 1/e² intensity radius, m.
    pub waist: f64,
    /// `ω_laser - ω(F=2 → F'=1)`, rad/s.
    pub detuning: f64,
}

impl DriveField {
    pub fn validate(&self) -> Result<(), AtomError> {
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(AtomError::Domain(format!("drive power must be >= 0, got {}", self.power)));
        }
        if !(self.waist > 0.0) || !self.waist.is_finite() {
            return Err(AtomError::Domain(format!("beam waist must be > 0, got {}", self.waist)));
        }
        if !self.detuning.is_finite() {
            return Err(AtomError::Domain("detuning must be finite".into()));
        }
        Ok(())
    }

    /// Peak intensity `2P/(π w²)`, W/m².
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }
}

/// Rabi frequency `Γ √(I / 2 I_sat)` of the drive at the cell entrance.
pub fn rabi_from_power(drive: &DriveField, constants: &AtomConstants) -> Result<f64, AtomError> {
    drive.validate()?;
    Ok(constants.gamma * (drive.peak_intensity() / (2.0 * constants.saturation_intensity)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizationAxis {
    /// Transverse, along the signal polarization.
    X,
    /// Along the propagation direction.
    Z,
}

/// Lab-frame magnetic field in gauss. `b_x` is transverse, `b_z` is along
/// the beam.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MagneticField {
    pub b_x: f64,
    pub b_z: f64,
}

impl MagneticField {
    pub fn new(b_x: f64, b_z: f64) -> Result<Self, AtomError> {
        if !b_x.is_finite() || !b_z.is_finite() {
            return Err(AtomError::Domain("magnetic field must be finite".into()));
        }
        Ok(Self { b_x, b_z })
    }

    /// The axis carrying the larger field component. A zero field (or a tie)
    /// quantizes along the beam.
    pub fn dominant_axis(&self) -> QuantizationAxis {
        if self.b_x.abs() > self.b_z.abs() {
            QuantizationAxis::X
        } else {
            QuantizationAxis::Z
        }
    }

    /// Components `(x', y', z')` in the frame whose z' is `axis`.
    ///
    /// For axis x the frame is `x' = ŷ, y' = ẑ, z' = x̂`.
    pub fn in_frame(&self, axis: QuantizationAxis) -> [f64; 3] {
        match axis {
            QuantizationAxis::Z => [self.b_x, 0.0, self.b_z],
            QuantizationAxis::X => [0.0, self.b_z, self.b_x],
        }
    }
}

/// Atomic vapor filling the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleConfig {
    /// m⁻³.
    pub number_density: f64,
    /// Cell length, m.
    pub length: f64,
    /// K; informational only.
    pub temperature: f64,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<(), AtomError> {
        if !(self.number_density >= 0.0) || !self.number_density.is_finite() {
            return Err(AtomError::Domain("number density must be >= 0".into()));
        }
        if !(self.length >= 0.0) || !self.length.is_finite() {
            return Err(AtomError::Domain("cell length must be >= 0".into()));
        }
        Ok(())
    }

    /// Resonant optical depth of a unit-strength transition, `n σ₀ L`.
    pub fn optical_depth(&self, constants: &AtomConstants) -> f64 {
        self.number_density * constants.resonant_cross_section() * self.length
    }

    /// Atoms inside the beam volume `π w² L`.
    pub fn atoms_in_beam(&self, waist: f64) -> f64 {
        self.number_density * PI * waist * waist * self.length
    }
}

/// Saturated vapor number density of rubidium over the liquid phase
/// (T above 39.3 °C), m⁻³.
pub fn rubidium_vapor_density(temperature_kelvin: f64) -> f64 {
    const TORR: f64 = 133.322;
    const K_B: f64 = 1.380649e-23;
    let t = temperature_kelvin;
    let log_p = 15.88253 - 4529.635 / t + 0.00058663 * t - 2.99138 * t.log10();
    10f64.powf(log_p) * TORR / (K_B * t)
}

// ---------------------------------------------------------------------------
// Level scheme and couplings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Manifold {
    Ground,
    Excited,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub label: String,
    pub manifold: Manifold,
    /// Magnetic quantum number.
    pub m: f64,
    /// Energy relative to the laser-frame reference, rad/s. For excited
    /// levels this is measured from the F=2 → F'=1 line.
    #[serde(default)]
    pub energy_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelScheme {
    pub levels: Vec<Level>,
    pub g_factor_ground: f64,
    pub g_factor_excited: f64,
}

impl LevelScheme {
    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn index_of(&self, label: &str) -> Result<usize, AtomError> {
        self.levels
            .iter()
            .position(|l| l.label == label)
            .ok_or_else(|| AtomError::SchemeMismatch(format!("unknown level `{label}`")))
    }

    pub fn indices(&self, manifold: Manifold) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.levels[i].manifold == manifold).collect()
    }

    pub fn validate(&self) -> Result<(), AtomError> {
        let mut seen = HashSet::new();
        for l in &self.levels {
            if !seen.insert(l.label.as_str()) {
                return Err(AtomError::InvalidModel(format!("duplicate level label `{}`", l.label)));
            }
            if !l.energy_offset.is_finite() || !l.m.is_finite() {
                return Err(AtomError::InvalidModel(format!("level `{}` has non-finite data", l.label)));
            }
            if ((2.0 * l.m).round() - 2.0 * l.m).abs() > 1e-12 {
                return Err(AtomError::InvalidModel(format!(
                    "level `{}`: m = {} is not a half-integer",
                    l.label, l.m
                )));
            }
        }
        if self.indices(Manifold::Ground).is_empty() || self.indices(Manifold::Excited).is_empty() {
            return Err(AtomError::InvalidModel(
                "scheme needs at least one ground and one excited level".into(),
            ));
        }
        if !self.g_factor_ground.is_finite() || !self.g_factor_excited.is_finite() {
            return Err(AtomError::InvalidModel("g-factors must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    SigmaPlus,
    SigmaMinus,
    Pi,
}

impl Polarization {
    /// `m_excited - m_ground` for absorption.
    pub fn delta_m(self) -> i32 {
        match self {
            Polarization::SigmaPlus => 1,
            Polarization::SigmaMinus => -1,
            Polarization::Pi => 0,
        }
    }

    fn from_delta_m(dm: i32) -> Option<Self> {
        match dm {
            1 => Some(Polarization::SigmaPlus),
            -1 => Some(Polarization::SigmaMinus),
            0 => Some(Polarization::Pi),
            _ => None,
        }
    }

    fn slot(self) -> usize {
        match self {
            Polarization::SigmaPlus => 0,
            Polarization::Pi => 1,
            Polarization::SigmaMinus => 2,
        }
    }

    pub const ALL: [Polarization; 3] = [Polarization::SigmaPlus, Polarization::Pi, Polarization::SigmaMinus];
}

/// Which optical field may drive a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingRole {
    Drive,
    Signal,
    Both,
}

impl CouplingRole {
    fn admits(self, field: FieldKind) -> bool {
        matches!(
            (self, field),
            (CouplingRole::Both, _)
                | (CouplingRole::Drive, FieldKind::Drive)
                | (CouplingRole::Signal, FieldKind::Signal)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Drive,
    Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub ground: String,
    pub excited: String,
    pub polarization: Polarization,
    /// Relative dipole matrix element (signed).
    pub dipole_weight: f64,
    pub role: CouplingRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CouplingTable {
    pub entries: Vec<Coupling>,
}

impl CouplingTable {
    pub fn validate(&self, scheme: &LevelScheme) -> Result<(), AtomError> {
        for c in &self.entries {
            let g = scheme.index_of(&c.ground)?;
            let e = scheme.index_of(&c.excited)?;
            if scheme.levels[g].manifold != Manifold::Ground || scheme.levels[e].manifold != Manifold::Excited {
                return Err(AtomError::SchemeMismatch(format!(
                    "coupling {} -> {} must join a ground level to an excited level",
                    c.ground, c.excited
                )));
            }
            let dm = scheme.levels[e].m - scheme.levels[g].m;
            if (dm - c.polarization.delta_m() as f64).abs() > 1e-12 {
                return Err(AtomError::InvalidModel(format!(
                    "coupling {} -> {} violates the {:?} selection rule (Δm = {dm})",
                    c.ground, c.excited, c.polarization
                )));
            }
            if !c.dipole_weight.is_finite() {
                return Err(AtomError::InvalidModel("dipole weight must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn drive_transitions(&self) -> usize {
        self.entries.iter().filter(|c| c.role.admits(FieldKind::Drive)).count()
    }

    fn weight_between(&self, ground: &str, excited: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|c| c.ground == ground && c.excited == excited)
            .map(|c| c.dipole_weight)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub excited: String,
    pub ground: String,
    pub fraction: f64,
}

/// Relaxation processes of the Lindblad master equation.
///
/// Spontaneous emission from each excited level at rate `population_decay`
/// is split over ground levels by `branching`; decays sharing a polarization
/// channel are coherent, with signs taken from the coupling table. Transit
/// through the beam replaces the atom by an unpolarized ground-state atom at
/// rate `ground_relax`. `excited_dephasing` damps optical coherences only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayModel {
    pub population_decay: BTreeMap<String, f64>,
    pub branching: Vec<Branch>,
    pub ground_relax: f64,
    #[serde(default)]
    pub excited_dephasing: f64,
}

impl DecayModel {
    pub fn validate(&self, scheme: &LevelScheme) -> Result<(), AtomError> {
        if !(self.ground_relax >= 0.0) || !(self.excited_dephasing >= 0.0) {
            return Err(AtomError::InvalidModel("relaxation rates must be >= 0".into()));
        }
        for (label, &rate) in &self.population_decay {
            let i = scheme.index_of(label)?;
            if scheme.levels[i].manifold != Manifold::Excited {
                return Err(AtomError::InvalidModel(format!("decay listed for ground level `{label}`")));
            }
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(AtomError::InvalidModel(format!("decay rate of `{label}` must be >= 0")));
            }
        }
        let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
        for b in &self.branching {
            let e = scheme.index_of(&b.excited)?;
            let g = scheme.index_of(&b.ground)?;
            if scheme.levels[e].manifold != Manifold::Excited || scheme.levels[g].manifold != Manifold::Ground {
                return Err(AtomError::InvalidModel(format!(
                    "branch {} -> {} must go from excited to ground",
                    b.excited, b.ground
                )));
            }
            let dm = scheme.levels[e].m - scheme.levels[g].m;
            if Polarization::from_delta_m(dm.round() as i32).is_none() || (dm - dm.round()).abs() > 1e-12 {
                return Err(AtomError::InvalidModel(format!(
                    "branch {} -> {} is not dipole allowed",
                    b.excited, b.ground
                )));
            }
            if !(b.fraction >= 0.0) {
                return Err(AtomError::InvalidModel("branching fractions must be >= 0".into()));
            }
            *sums.entry(b.excited.as_str()).or_default() += b.fraction;
        }
        for (label, &rate) in &self.population_decay {
            if rate > 0.0 {
                let s = sums.get(label.as_str()).copied().unwrap_or(0.0);
                if (s - 1.0).abs() > 1e-12 {
                    return Err(AtomError::InvalidModel(format!(
                        "branching of `{label}` sums to {s}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn decay_of(&self, label: &str) -> f64 {
        self.population_decay.get(label).copied().unwrap_or(0.0)
    }

    /// Damping rate Γ_μν of the coherence `σ_μν` in the absence of fields.
    pub fn coherence_decay(&self, scheme: &LevelScheme, mu: usize, nu: usize) -> f64 {
        let rate = |i: usize| match scheme.levels[i].manifold {
            Manifold::Excited => self.decay_of(&scheme.levels[i].label),
            Manifold::Ground => 0.0,
        };
        let dephase = |i: usize| match scheme.levels[i].manifold {
            Manifold::Excited => self.excited_dephasing,
            Manifold::Ground => 0.0,
        };
        let mixed = scheme.levels[mu].manifold != scheme.levels[nu].manifold;
        0.5 * (rate(mu) + rate(nu)) + self.ground_relax + if mixed { dephase(mu).max(dephase(nu)) } else { 0.0 }
    }
}

/// Level scheme, couplings and decay bundled together; this is the unit that
/// is read from and written to scheme files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomicModel {
    pub scheme: LevelScheme,
    pub couplings: CouplingTable,
    pub decay: DecayModel,
}

impl AtomicModel {
    pub fn validate(&self) -> Result<(), AtomError> {
        self.scheme.validate()?;
        self.couplings.validate(&self.scheme)?;
        self.decay.validate(&self.scheme)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, AtomError> {
        let model: AtomicModel = toml::from_str(text).map_err(|e| AtomError::Parse(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("atomic model serializes")
    }

    pub fn dim(&self) -> usize {
        self.scheme.dim()
    }

    /// Lindblad jump operators.
    pub fn jump_operators(&self) -> Vec<CMatrix> {
        let n = self.dim();
        let scheme = &self.scheme;
        let mut jumps = Vec::new();
        for pol in Polarization::ALL {
            let mut l = CMatrix::zeros(n, n);
            for b in &self.decay.branching {
                let (Ok(e), Ok(g)) = (scheme.index_of(&b.excited), scheme.index_of(&b.ground)) else {
                    continue;
                };
                let dm = (scheme.levels[e].m - scheme.levels[g].m).round() as i32;
                if dm != pol.delta_m() {
                    continue;
                }
                let sign = self
                    .couplings
                    .weight_between(&b.ground, &b.excited)
                    .map(|w| if w < 0.0 { -1.0 } else { 1.0 })
                    .unwrap_or(1.0);
                l[(g, e)] += C64::from(sign * (self.decay.decay_of(&b.excited) * b.fraction).sqrt());
            }
            if l.iter().any(|z| z.norm() > 0.0) {
                jumps.push(l);
            }
        }
        let ground = scheme.indices(Manifold::Ground);
        if self.decay.ground_relax > 0.0 {
            let amp = (self.decay.ground_relax / ground.len() as f64).sqrt();
            for &g in &ground {
                for j in 0..n {
                    let mut l = CMatrix::zeros(n, n);
                    l[(g, j)] = C64::from(amp);
                    jumps.push(l);
                }
            }
        }
        if self.decay.excited_dephasing > 0.0 {
            let mut l = CMatrix::zeros(n, n);
            for e in scheme.indices(Manifold::Excited) {
                l[(e, e)] = C64::from((2.0 * self.decay.excited_dephasing).sqrt());
            }
            jumps.push(l);
        }
        jumps
    }

    /// Atomic lowering operator seen by a field with spherical components
    /// `weights` (indexed σ₊, π, σ₋).
    pub fn lowering_operator(&self, weights: &[C64; 3], field: FieldKind) -> Result<CMatrix, AtomError> {
        let n = self.dim();
        let mut l = CMatrix::zeros(n, n);
        for c in &self.couplings.entries {
            if !c.role.admits(field) {
                continue;
            }
            let g = self.scheme.index_of(&c.ground)?;
            let e = self.scheme.index_of(&c.excited)?;
            l[(g, e)] += weights[c.polarization.slot()].conj() * c.dipole_weight;
        }
        Ok(l)
    }
}

/// Four-level X scheme: ground `g-`, `g+` and excited `e-`, `e+` with
/// m = ∓1/2. The drive arms are σ₊ (g- → e+) and σ₋ (g+ → e-); the π
/// transitions g∓ → e∓ are used by the signal when the atoms are quantized
/// along its polarization. Every transition has weight 1/√2 and each excited
/// level decays equally to both ground levels.
pub fn default_x_scheme() -> AtomicModel {
    let constants = AtomConstants::default();
    let level = |label: &str, manifold, m: f64| Level {
        label: label.into(),
        manifold,
        m,
        energy_offset: if manifold == Manifold::Excited { D1_EXCITED_SPLITTING } else { 0.0 },
    };
    let scheme = LevelScheme {
        levels: vec![
            level("g-", Manifold::Ground, -0.5),
            level("g+", Manifold::Ground, 0.5),
            level("e-", Manifold::Excited, -0.5),
            level("e+", Manifold::Excited, 0.5),
        ],
        g_factor_ground: 0.5,
        g_factor_excited: 0.5,
    };
    let w = FRAC_1_SQRT_2;
    let coupling = |g: &str, e: &str, polarization, dipole_weight, role| Coupling {
        ground: g.into(),
        excited: e.into(),
        polarization,
        dipole_weight,
        role,
    };
    let couplings = CouplingTable {
        entries: vec![
            coupling("g-", "e+", Polarization::SigmaPlus, w, CouplingRole::Both),
            coupling("g+", "e-", Polarization::SigmaMinus, w, CouplingRole::Both),
            coupling("g-", "e-", Polarization::Pi, -w, CouplingRole::Signal),
            coupling("g+", "e+", Polarization::Pi, w, CouplingRole::Signal),
        ],
    };
    let branch = |e: &str, g: &str| Branch {
        excited: e.into(),
        ground: g.into(),
        fraction: 0.5,
    };
    let decay = DecayModel {
        population_decay: [("e-".to_string(), constants.gamma), ("e+".to_string(), constants.gamma)]
            .into_iter()
            .collect(),
        branching: vec![branch("e-", "g-"), branch("e-", "g+"), branch("e+", "g-"), branch("e+", "g+")],
        ground_relax: TWO_PI * 10e3,
        excited_dephasing: 0.0,
    };
    AtomicModel {
        scheme,
        couplings,
        decay,
    }
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

/// Spherical components (σ₊, π, σ₋) of the drive and signal polarizations in
/// the frame quantized along `axis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationWeights {
    pub drive: [C64; 3],
    pub signal: [C64; 3],
}

impl PolarizationWeights {
    pub fn component(weights: &[C64; 3], pol: Polarization) -> C64 {
        weights[pol.slot()]
    }
}

/// Decompose the y-polarized drive and x-polarized signal.
///
/// With `e₊ = -(x' + i y')/√2`, `e₋ = (x' - i y')/√2`, `e₀ = z'`, the
/// component of a field `ε` along `e_q` is `e_q* · ε`.
pub fn polarization_decomposition(axis: QuantizationAxis) -> PolarizationWeights {
    let s = FRAC_1_SQRT_2;
    let zero = C64::new(0.0, 0.0);
    match axis {
        QuantizationAxis::Z => PolarizationWeights {
            drive: [I * s, zero, I * s],
            signal: [C64::from(-s), zero, C64::from(s)],
        },
        QuantizationAxis::X => PolarizationWeights {
            drive: [C64::from(-s), zero, C64::from(s)],
            signal: [zero, C64::from(1.0), zero],
        },
    }
}

// ---------------------------------------------------------------------------
// Hamiltonian and Liouvillian
// ---------------------------------------------------------------------------

/// Rotating-frame Hamiltonian plus the field lowering operators it was built
/// from.
#[derive(Debug, Clone)]
pub struct AtomHamiltonian {
    pub matrix: CMatrix,
    pub drive_lowering: CMatrix,
    pub signal_lowering: CMatrix,
    pub axis: QuantizationAxis,
}

/// Assemble `H = Σ_e (E_e - Δ)|e⟩⟨e| + ½(Ω L_d† + Ω* L_d) + g_F μ_B B·F`.
///
/// `rabi` is the complex drive Rabi frequency, `detuning` the laser detuning
/// from the reference line (see [`DriveField::detuning`]).
pub fn build_hamiltonian(
    model: &AtomicModel,
    rabi: C64,
    detuning: f64,
    field: &MagneticField,
    axis: QuantizationAxis,
    constants: &AtomConstants,
) -> Result<AtomHamiltonian, AtomError> {
    model.couplings.validate(&model.scheme)?;
    let n = model.dim();
    let weights = polarization_decomposition(axis);
    let drive_lowering = model.lowering_operator(&weights.drive, FieldKind::Drive)?;
    let signal_lowering = model.lowering_operator(&weights.signal, FieldKind::Signal)?;

    let mut h = CMatrix::zeros(n, n);
    for (i, level) in model.scheme.levels.iter().enumerate() {
        let shift = match level.manifold {
            Manifold::Excited => level.energy_offset - detuning,
            Manifold::Ground => level.energy_offset,
        };
        h[(i, i)] = C64::from(shift);
    }
    h += (drive_lowering.adjoint() * rabi + &drive_lowering * rabi.conj()) * C64::from(0.5);

    let b = field.in_frame(axis);
    for (manifold, g_factor) in [
        (Manifold::Ground, model.scheme.g_factor_ground),
        (Manifold::Excited, model.scheme.g_factor_excited),
    ] {
        let (fx, fy, fz) = angular_momentum(&model.scheme, manifold);
        let larmor = g_factor * constants.bohr_magneton;
        h += (fx * C64::from(b[0]) + fy * C64::from(b[1]) + fz * C64::from(b[2])) * C64::from(larmor);
    }

    let dev = (&h - h.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if dev > 1e-12 * h.iter().map(|z| z.norm()).fold(1.0, f64::max) {
        return Err(AtomError::NonHermitian(dev));
    }
    Ok(AtomHamiltonian {
        matrix: h,
        drive_lowering,
        signal_lowering,
        axis,
    })
}

/// `(F_x, F_y, F_z)` restricted to one manifold. The total F of the manifold
/// is taken as the largest |m| present.
fn angular_momentum(scheme: &LevelScheme, manifold: Manifold) -> (CMatrix, CMatrix, CMatrix) {
    let n = scheme.dim();
    let idx = scheme.indices(manifold);
    let f = idx.iter().map(|&i| scheme.levels[i].m.abs()).fold(0.0, f64::max);
    let mut fz = CMatrix::zeros(n, n);
    let mut fp = CMatrix::zeros(n, n);
    for &i in &idx {
        let m = scheme.levels[i].m;
        fz[(i, i)] = C64::from(m);
        if let Some(&j) = idx.iter().find(|&&j| (scheme.levels[j].m - (m + 1.0)).abs() < 1e-12) {
            fp[(j, i)] = C64::from((f * (f + 1.0) - m * (m + 1.0)).sqrt());
        }
    }
    let fm = fp.adjoint();
    let fx = (&fp + &fm) * C64::from(0.5);
    let fy = (&fp - &fm) * (-0.5 * I);
    (fx, fy, fz)
}

/// Hamiltonian plus jump operators, with the generator stored as a
/// superoperator on row-major `vec(ρ)`.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub hamiltonian: CMatrix,
    pub jumps: Vec<CMatrix>,
    sup: CMatrix,
    sup_adjoint: CMatrix,
}

impl Liouvillian {
    /// `L(ρ) = -i[H, ρ] + Σ (L ρ L† - ½{L†L, ρ})`.
    pub fn new(hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Self {
        let n = hamiltonian.nrows();
        let id = CMatrix::identity(n, n);
        let decay_sum = jumps.iter().fold(CMatrix::zeros(n, n), |acc, l| acc + l.adjoint() * l);
        // vec(A X B) = (A ⊗ Bᵀ) vec(X) for row-major vec
        let effective = &hamiltonian * (-I) - &decay_sum * C64::from(0.5);
        let mut sup = effective.kronecker(&id) + id.kronecker(&effective.adjoint().transpose());
        for l in &jumps {
            sup += l.kronecker(&l.conjugate());
        }
        let sup_adjoint = sup.adjoint();
        Self {
            hamiltonian,
            jumps,
            sup,
            sup_adjoint,
        }
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        unvec(&(&self.sup * vec(rho)), self.dim())
    }

    /// Heisenberg-picture generator `L†(X) = i[H, X] + Σ (L† X L - ½{L†L, X})`,
    /// the Hilbert-Schmidt adjoint of [`Liouvillian::apply`].
    pub fn adjoint(&self, x: &CMatrix) -> CMatrix {
        unvec(&(&self.sup_adjoint * vec(x)), self.dim())
    }

    pub fn superoperator(&self) -> &CMatrix {
        &self.sup
    }

    pub fn adjoint_superoperator(&self) -> &CMatrix {
        &self.sup_adjoint
    }
}

fn vec(x: &CMatrix) -> nalgebra::DVector<C64> {
    let n = x.nrows();
    nalgebra::DVector::from_fn(n * n, |i, _| x[(i / n, i % n)])
}

fn unvec(v: &nalgebra::DVector<C64>, n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |a, b| v[a * n + b])
}

fn hermitian_eigenvalues(m: &CMatrix, what: &'static str) -> Result<nalgebra::DVector<f64>, AtomError> {
    m.clone()
        .try_symmetric_eigen(f64::EPSILON, MAX_ITERATIONS)
        .map(|e| e.eigenvalues)
        .ok_or(AtomError::Numerical(what))
}

// ---------------------------------------------------------------------------
// Steady state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SteadyState {
    pub rho: CMatrix,
    /// `‖L(ρ)‖ / ‖L‖` in Frobenius norms.
    pub relative_residual: f64,
}

/// Fixed point of the Liouvillian, normalized to unit trace.
pub fn steady_state(liouvillian: &Liouvillian) -> Result<SteadyState, AtomError> {
    let n = liouvillian.dim();
    let sup = liouvillian.superoperator();
    let scale = sup.norm();
    if !scale.is_finite() {
        return Err(AtomError::Numerical("non-finite Liouvillian"));
    }
    let svd = sup
        .clone()
        .try_svd(false, true, f64::EPSILON, MAX_ITERATIONS)
        .ok_or(AtomError::Numerical("steady-state SVD"))?;
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let null_tol = 1e-11 * scale.max(f64::MIN_POSITIVE);
    let null_dim = order.iter().take_while(|&&k| svd.singular_values[k] <= null_tol).count();
    if null_dim > 1 {
        return Err(AtomError::DegenerateSteadyState { null_dim });
    }
    let k = order[0];
    let mut rho = CMatrix::zeros(n, n);
    for idx in 0..n * n {
        rho[(idx / n, idx % n)] = v_t[(k, idx)].conj();
    }
    let trace = rho.trace();
    if trace.norm() < 1e-14 {
        return Err(AtomError::UnphysicalSteadyState("null vector has zero trace".into()));
    }
    rho /= trace;
    let rho = (&rho + rho.adjoint()) * C64::from(0.5);

    let residual = liouvillian.apply(&rho).norm() / scale.max(f64::MIN_POSITIVE);
    let min_eig = hermitian_eigenvalues(&rho, "steady-state spectrum")?.min();
    if min_eig < -1e-9 {
        return Err(AtomError::UnphysicalSteadyState(format!("negative population {min_eig:e}")));
    }
    if residual > 1e-9 {
        return Err(AtomError::UnphysicalSteadyState(format!("residual {residual:e}")));
    }
    Ok(SteadyState {
        rho,
        relative_residual: residual,
    })
}

// ---------------------------------------------------------------------------
// Fluctuation coordinates
// ---------------------------------------------------------------------------

/// Generalized Gell-Mann matrices for an `n`-level system.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    ops: Vec<CMatrix>,
    /// Column k is `vec(λ_k)`.
    vectorized: CMatrix,
}

impl OperatorBasis {
    pub fn gell_mann(n: usize) -> Self {
        let unit = |j: usize, k: usize| {
            let mut m = CMatrix::zeros(n, n);
            m[(j, k)] = C64::from(1.0);
            m
        };
        let mut ops = Vec::with_capacity(n * n - 1);
        for j in 0..n {
            for k in j + 1..n {
                ops.push(unit(j, k) + unit(k, j));
                ops.push((unit(k, j) - unit(j, k)) * I);
            }
        }
        for l in 1..n {
            let mut m = CMatrix::zeros(n, n);
            for j in 0..l {
                m[(j, j)] = C64::from(1.0);
            }
            m[(l, l)] = C64::from(-(l as f64));
            ops.push(m * C64::from((2.0 / (l * (l + 1)) as f64).sqrt()));
        }
        let vectorized = CMatrix::from_fn(n * n, ops.len(), |i, k| ops[k][(i / n, i % n)]);
        Self { ops, vectorized }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn vectorized(&self) -> &CMatrix {
        &self.vectorized
    }

    /// Coefficients `½ Tr(λ_k X)`; the identity part of `X` is dropped.
    pub fn coordinates(&self, x: &CMatrix) -> Vec<C64> {
        self.ops.iter().map(|l| (l * x).trace() * 0.5).collect()
    }

    /// `⟨λ_k⟩ = Tr(ρ λ_k)`.
    pub fn expectations(&self, rho: &CMatrix) -> Vec<f64> {
        self.ops.iter().map(|l| (rho * l).trace().re).collect()
    }

    /// Symmetrized equal-time covariance `Re⟨λ_k λ_l⟩ - ⟨λ_k⟩⟨λ_l⟩`.
    pub fn equal_time_covariance(&self, rho: &CMatrix) -> DMatrix<f64> {
        let m = self.len();
        let mean = self.expectations(rho);
        DMatrix::from_fn(m, m, |k, l| (rho * &self.ops[k] * &self.ops[l]).trace().re - mean[k] * mean[l])
    }
}

/// Drift matrix `A` with `d δλ/dt = A δλ`.
pub fn drift_matrix(liouvillian: &Liouvillian, basis: &OperatorBasis) -> Result<DMatrix<f64>, AtomError> {
    drift_from_images(basis, &heisenberg_images(liouvillian, basis))
}

/// Columns are `vec(L†(λ_k))`.
fn heisenberg_images(liouvillian: &Liouvillian, basis: &OperatorBasis) -> CMatrix {
    liouvillian.adjoint_superoperator() * basis.vectorized()
}

fn drift_from_images(basis: &OperatorBasis, images: &CMatrix) -> Result<DMatrix<f64>, AtomError> {
    // A_kl = ½ Tr(λ_l L†(λ_k)) = ½ ⟨λ_l, L†(λ_k)⟩
    let overlaps = basis.vectorized().adjoint() * images;
    let a = overlaps.transpose().map(|z| 0.5 * z.re);
    let max_re = drift_eigenvalues(&a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    if max_re > 1e-6 {
        return Err(AtomError::UnstableDrift { max_re });
    }
    Ok(a)
}

/// `Tr(X Y)` without forming the product.
fn trace_product(x: &CMatrix, y: &CMatrix) -> C64 {
    let n = x.nrows();
    let mut acc = C64::from(0.0);
    for a in 0..n {
        for b in 0..n {
            acc += x[(a, b)] * y[(b, a)];
        }
    }
    acc
}

/// Eigenvalues of a real drift matrix, computed on the norm-scaled matrix.
pub fn drift_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>, AtomError> {
    let scale = a.norm();
    if !scale.is_finite() {
        return Err(AtomError::Numerical("non-finite drift matrix"));
    }
    if scale == 0.0 {
        return Ok(vec![C64::from(0.0); a.nrows()]);
    }
    let scaled = a / scale;
    // the real QR iteration occasionally stalls on exactly degenerate spectra
    // (resonant drive, zero field); a diagonal shift changes the iteration
    // path without changing the eigenvectors
    let n = a.nrows();
    let eig = [0.0, 0.1234567, -0.3141593, 0.6180339]
        .iter()
        .find_map(|&shift| {
            let shifted = &scaled - DMatrix::<f64>::identity(n, n) * shift;
            shifted
                .try_schur(f64::EPSILON, MAX_ITERATIONS)
                .map(|s| s.complex_eigenvalues().iter().map(|z| z + shift).collect::<Vec<C64>>())
        })
        .ok_or(AtomError::Numerical("drift spectrum"))?;
    Ok(eig.into_iter().map(|z| z * scale).collect())
}

/// Langevin diffusion matrix from the generalized Einstein relation
///
/// `2 D_kl = ⟨L†(λ_k λ_l)⟩ - ⟨L†(λ_k) λ_l⟩ - ⟨λ_k L†(λ_l)⟩`,
///
/// so that `⟨F_k(t) F_l(t')⟩ = 2 D_kl δ(t - t')`. The result is Hermitian;
/// its real part is the symmetrized (measurable) noise.
pub fn diffusion_matrix(
    liouvillian: &Liouvillian,
    rho: &CMatrix,
    basis: &OperatorBasis,
) -> Result<CMatrix, AtomError> {
    diffusion_from_images(liouvillian, rho, basis, &heisenberg_images(liouvillian, basis))
}

fn diffusion_from_images(
    liouvillian: &Liouvillian,
    rho: &CMatrix,
    basis: &OperatorBasis,
    image_vecs: &CMatrix,
) -> Result<CMatrix, AtomError> {
    let ops = basis.ops();
    let m = ops.len();
    let n = liouvillian.dim();
    let images: Vec<CMatrix> = (0..m).map(|k| unvec(&image_vecs.column(k).into_owned(), n)).collect();
    // ⟨L†(X)⟩ = Tr(L(ρ) X); it vanishes at the steady state but is kept so the
    // relation holds for any ρ
    let l_rho = liouvillian.apply(rho);
    let l_rho_ops: Vec<CMatrix> = ops.iter().map(|l| &l_rho * l).collect();
    let rho_images: Vec<CMatrix> = images.iter().map(|x| rho * x).collect();
    let rho_ops: Vec<CMatrix> = ops.iter().map(|l| rho * l).collect();
    let mut d = CMatrix::zeros(m, m);
    for k in 0..m {
        for l in k..m {
            let two_d = trace_product(&l_rho_ops[k], &ops[l])
                - trace_product(&rho_images[k], &ops[l])
                - trace_product(&rho_ops[k], &images[l]);
            d[(k, l)] = two_d * 0.5;
            d[(l, k)] = (two_d * 0.5).conj();
        }
    }
    let scale = d.norm().max(1.0);
    let shifted = &d + CMatrix::identity(m, m) * C64::from(1e-6 * scale);
    if shifted.cholesky().is_none() {
        let min_eig = hermitian_eigenvalues(&d, "diffusion spectrum")?.min();
        if min_eig < -1e-6 * scale {
            return Err(AtomError::NegativeDiffusion { min_eig });
        }
    }
    Ok(d)
}

/// Linearized response of one atom at a given local drive.
#[derive(Debug, Clone)]
pub struct LinearizedAtom {
    pub hamiltonian: AtomHamiltonian,
    pub rho: CMatrix,
    /// Real drift matrix over the Gell-Mann coordinates.
    pub drift: DMatrix<f64>,
    /// Hermitian diffusion matrix.
    pub diffusion: CMatrix,
    /// Signal quadrature input: `d δλ/dt ⊃ B (δX, δP)ᵀ`, per unit √κ.
    pub field_input: DMatrix<f64>,
    /// Signal quadrature output: `∂_z (δX, δP)ᵀ = √κ N · C δλ`.
    pub field_output: DMatrix<f64>,
    /// `⟨L_d⟩`, the drive-polarized atomic coherence.
    pub drive_coherence: C64,
}

pub fn linearize(
    model: &AtomicModel,
    rabi: C64,
    detuning: f64,
    field: &MagneticField,
    axis: QuantizationAxis,
    constants: &AtomConstants,
) -> Result<LinearizedAtom, AtomError> {
    if !rabi.re.is_finite() || !rabi.im.is_finite() || !detuning.is_finite() {
        return Err(AtomError::Domain("drive must be finite".into()));
    }
    let hamiltonian = build_hamiltonian(model, rabi, detuning, field, axis, constants)?;
    let liouvillian = Liouvillian::new(hamiltonian.matrix.clone(), model.jump_operators());
    let ss = steady_state(&liouvillian)?;
    let basis = OperatorBasis::gell_mann(model.dim());
    let images = heisenberg_images(&liouvillian, &basis);
    let drift = drift_from_images(&basis, &images)?;
    let diffusion = diffusion_from_images(&liouvillian, &ss.rho, &basis, &images)?;
    let (field_input, field_output) = field_coupling(&hamiltonian.signal_lowering, &ss.rho, &basis);
    let drive_coherence = (&ss.rho * &hamiltonian.drive_lowering).trace();
    Ok(LinearizedAtom {
        hamiltonian,
        rho: ss.rho,
        drift,
        diffusion,
        field_input,
        field_output,
        drive_coherence,
    })
}

/// Input and output maps between signal quadratures and atomic coordinates.
///
/// With the atom coupled to the travelling signal as `√κ (a L† + a† L)`, the
/// Heisenberg equations pick up `i√κ (δa ⟨[L†, λ_k]⟩ + δa† ⟨[L, λ_k]⟩)`, which
/// for `δa = δX + i δP` is `-2√κ (Im β_k δX + Re β_k δP)` with
/// `β_k = ⟨[L†, λ_k]⟩`. The field obeys `∂_z δa = -i√κ N δL`.
pub fn field_coupling(lowering: &CMatrix, rho: &CMatrix, basis: &OperatorBasis) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = basis.len();
    let raising = lowering.adjoint();
    let mut input = DMatrix::zeros(m, 2);
    for (k, lk) in basis.ops().iter().enumerate() {
        let beta = (rho * (&raising * lk - lk * &raising)).trace();
        input[(k, 0)] = -2.0 * beta.im;
        input[(k, 1)] = -2.0 * beta.re;
    }
    let ell = basis.coordinates(lowering);
    let mut output = DMatrix::zeros(2, m);
    for (k, c) in ell.iter().enumerate() {
        output[(0, k)] = c.im;
        output[(1, k)] = -c.re;
    }
    (input, output)
}
