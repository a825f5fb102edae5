//! Experiment description read from TOML.
//!
//! Every table rejects unknown keys. Quantities carry their unit in the key
//! name and use laboratory units (mG, mW, MHz, mm, cm, degrees); conversion to
//! SI happens here and nowhere else.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use psrlab::atom::{AtomicModel, DriveField, EnsembleConfig, MagneticField};
use psrlab::detection::DetectionChain;
use psrlab::propagation::{
    AnalysisFrequency, CellConfig, REFERENCE_B_X, REFERENCE_DENSITY, REFERENCE_DETUNING, REFERENCE_LENGTH,
    REFERENCE_POWER, REFERENCE_WAIST,
};
use psrlab::shear::ShearMediumConfig;
use serde::Deserialize;

use crate::error::{ExplabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    /// Phenomenological shear-plus-absorption medium.
    Shear,
    /// Multilevel atoms with Langevin noise, propagated slice by slice.
    #[default]
    #[value(alias = "microscopic")]
    #[serde(alias = "microscopic")]
    Micro,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Shear => "shear",
            Tier::Micro => "micro",
        })
    }
}

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    BxMilliGauss,
    BzMilliGauss,
    DetuningMHz,
    PowerMilliWatt,
    PhaseDeg,
    ShearG,
    Alpha,
}

impl Param {
    pub const ALL: [Param; 7] = [
        Param::BxMilliGauss,
        Param::BzMilliGauss,
        Param::DetuningMHz,
        Param::PowerMilliWatt,
        Param::PhaseDeg,
        Param::ShearG,
        Param::Alpha,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::BxMilliGauss => "b_x_mG",
            Param::BzMilliGauss => "b_z_mG",
            Param::DetuningMHz => "detuning_MHz",
            Param::PowerMilliWatt => "power_mW",
            Param::PhaseDeg => "phase_deg",
            Param::ShearG => "shear_g",
            Param::Alpha => "alpha",
        }
    }

    pub fn supports(self, tier: Tier) -> bool {
        match self {
            Param::PhaseDeg => true,
            Param::ShearG | Param::Alpha => tier == Tier::Shear,
            _ => tier == Tier::Micro,
        }
    }

    /// Set this parameter on `cfg`, in the units of its name.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) {
        match self {
            Param::BxMilliGauss => cfg.field.b_x_mg = value,
            Param::BzMilliGauss => cfg.field.b_z_mg = value,
            Param::DetuningMHz => cfg.drive.detuning_mhz = value,
            Param::PowerMilliWatt => cfg.drive.power_mw = value,
            Param::PhaseDeg => cfg.detection.phase_deg = Some(value),
            Param::ShearG => cfg.shear.g = value,
            Param::Alpha => cfg.shear.alpha = value,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = ExplabError;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Param::ALL.iter().map(|p| p.name()).collect();
            ExplabError::Config(format!("unknown sweep parameter `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    /// Effective homogeneous number density, m⁻³.
    pub density_m3: f64,
    pub length_cm: f64,
    pub temperature_c: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            density_m3: REFERENCE_DENSITY,
            length_cm: REFERENCE_LENGTH * 1e2,
            temperature_c: 74.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    pub power_mw: f64,
    pub waist_mm: f64,
    /// Laser detuning from `F=2 → F'=1`; `F'=2` sits at +816.656 MHz.
    pub detuning_mhz: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            power_mw: REFERENCE_POWER * 1e3,
            waist_mm: REFERENCE_WAIST * 1e3,
            detuning_mhz: REFERENCE_DETUNING / (2.0 * PI * 1e6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldSection {
    /// Transverse field, along the drive polarization.
    pub b_x_mg: f64,
    /// Longitudinal field, along the beam.
    pub b_z_mg: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            b_x_mg: REFERENCE_B_X * 1e3,
            b_z_mg: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub frequency_mhz: f64,
    pub slices: usize,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            frequency_mhz: AnalysisFrequency::default().omega() / (2.0 * PI * 1e6),
            slices: psrlab::propagation::DEFAULT_SLICES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtomSection {
    /// Level-scheme TOML; relative paths are resolved against the config file.
    pub scheme_file: Option<PathBuf>,
    pub ground_relax_khz: Option<f64>,
    pub excited_dephasing_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShearSection {
    pub g: f64,
    pub alpha: f64,
    pub slices: usize,
}

impl Default for ShearSection {
    fn default() -> Self {
        Self {
            g: 2.0,
            alpha: 0.0,
            slices: psrlab::shear::DEFAULT_SHEAR_SLICES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionSection {
    pub transmission: f64,
    pub qe: f64,
    pub visibility: f64,
    /// Fixed local-oscillator phase. When absent, noise is reported at the
    /// best and worst phases.
    pub phase_deg: Option<f64>,
}

impl Default for DetectionSection {
    fn default() -> Self {
        Self {
            transmission: 1.0,
            qe: 1.0,
            visibility: 1.0,
            phase_deg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: String,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub points: usize,
    /// Samples per phase; 0 gives exact variances.
    pub samples: usize,
    pub span_deg: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            points: 72,
            samples: 0,
            span_deg: 360.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendSection {
    /// Fraction of the grid, counted from the end, that must be flat.
    pub plateau_fraction: f64,
    pub plateau_band_db: f64,
    /// Slack allowed when testing monotonicity.
    pub monotone_tol_db: f64,
}

impl Default for TrendSection {
    fn default() -> Self {
        Self {
            plateau_fraction: 0.2,
            plateau_band_db: 0.05,
            monotone_tol_db: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tier: Tier,
    pub seed: u64,
    pub ensemble: EnsembleSection,
    pub drive: DriveSection,
    pub field: FieldSection,
    pub analysis: AnalysisSection,
    pub atom: AtomSection,
    pub shear: ShearSection,
    pub detection: DetectionSection,
    pub sweep: Option<SweepSection>,
    pub scan: ScanSection,
    pub trend: TrendSection,
    pub output: OutputSection,
}

/// A validated sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub param: Param,
    pub values: Vec<f64>,
}

fn config_err(msg: impl Into<String>) -> ExplabError {
    ExplabError::Config(msg.into())
}

fn require(ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(config_err(msg))
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and validate a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ExplabError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(scheme) = &cfg.atom.scheme_file {
            if scheme.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.atom.scheme_file = Some(base.join(scheme));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        require(finite_nonneg(self.ensemble.density_m3), "ensemble.density_m3 must be >= 0")?;
        require(finite_nonneg(self.ensemble.length_cm), "ensemble.length_cm must be >= 0")?;
        require(self.ensemble.temperature_c.is_finite(), "ensemble.temperature_c must be finite")?;
        require(finite_nonneg(self.drive.power_mw), "drive.power_mw must be >= 0")?;
        require(self.drive.waist_mm.is_finite() && self.drive.waist_mm > 0.0, "drive.waist_mm must be > 0")?;
        require(self.drive.detuning_mhz.is_finite(), "drive.detuning_mhz must be finite")?;
        require(
            self.field.b_x_mg.is_finite() && self.field.b_z_mg.is_finite(),
            "field components must be finite",
        )?;
        require(finite_nonneg(self.analysis.frequency_mhz), "analysis.frequency_mhz must be >= 0")?;
        require(self.analysis.slices >= 1, "analysis.slices must be at least 1")?;
        if let Some(v) = self.atom.ground_relax_khz {
            require(finite_nonneg(v), "atom.ground_relax_khz must be >= 0")?;
        }
        if let Some(v) = self.atom.excited_dephasing_mhz {
            require(finite_nonneg(v), "atom.excited_dephasing_mhz must be >= 0")?;
        }
        require(self.shear.g.is_finite(), "shear.g must be finite")?;
        require(finite_nonneg(self.shear.alpha), "shear.alpha must be >= 0")?;
        require(self.shear.slices >= 1, "shear.slices must be at least 1")?;
        self.chain()?;
        if let Some(phi) = self.detection.phase_deg {
            require(phi.is_finite(), "detection.phase_deg must be finite")?;
        }
        require(self.scan.points >= 1, "scan.points must be at least 1")?;
        require(self.scan.samples != 1, "scan.samples must be 0 (exact) or at least 2")?;
        require(
            self.scan.span_deg.is_finite() && self.scan.span_deg > 0.0,
            "scan.span_deg must be > 0",
        )?;
        let t = &self.trend;
        require(
            t.plateau_fraction > 0.0 && t.plateau_fraction <= 1.0,
            "trend.plateau_fraction must lie in (0, 1]",
        )?;
        require(finite_nonneg(t.plateau_band_db), "trend.plateau_band_db must be >= 0")?;
        require(finite_nonneg(t.monotone_tol_db), "trend.monotone_tol_db must be >= 0")?;
        if self.sweep.is_some() {
            self.sweep_grid()?;
        }
        Ok(())
    }

    pub fn chain(&self) -> Result<DetectionChain> {
        let d = &self.detection;
        DetectionChain::new(d.transmission, d.qe, d.visibility).map_err(|e| config_err(format!("detection: {e}")))
    }

    /// The validated `[sweep]` grid: `steps` points from `from` to `to`.
    pub fn sweep_grid(&self) -> Result<SweepGrid> {
        let s = self.sweep.as_ref().ok_or_else(|| config_err("no sweep configured"))?;
        let param: Param = s.param.parse()?;
        require(param.supports(self.tier), &format!("parameter {param} is not available in the {} tier", self.tier))?;
        require(s.steps >= 1, "sweep.steps must be at least 1")?;
        require(s.from.is_finite() && s.to.is_finite(), "sweep bounds must be finite")?;
        require(s.from <= s.to, "sweep.from must not exceed sweep.to")?;
        let values = if s.steps == 1 {
            vec![s.from]
        } else {
            (0..s.steps)
                .map(|i| s.from + (s.to - s.from) * i as f64 / (s.steps - 1) as f64)
                .collect()
        };
        Ok(SweepGrid { param, values })
    }

    pub fn atomic_model(&self) -> Result<AtomicModel> {
        let mut model = match &self.atom.scheme_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| ExplabError::io(path, e))?;
                AtomicModel::from_toml(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?
            }
            None => psrlab::atom::default_x_scheme(),
        };
        if let Some(khz) = self.atom.ground_relax_khz {
            model.decay.ground_relax = 2.0 * PI * khz * 1e3;
        }
        if let Some(mhz) = self.atom.excited_dephasing_mhz {
            model.decay.excited_dephasing = 2.0 * PI * mhz * 1e6;
        }
        model.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(model)
    }

    pub fn cell(&self) -> Result<CellConfig> {
        let field = MagneticField::new(self.field.b_x_mg * 1e-3, self.field.b_z_mg * 1e-3)
            .map_err(|e| config_err(e.to_string()))?;
        let cell = CellConfig {
            model: self.atomic_model()?,
            ensemble: EnsembleConfig {
                number_density: self.ensemble.density_m3,
                length: self.ensemble.length_cm * 1e-2,
                temperature: self.ensemble.temperature_c + 273.15,
            },
            drive: DriveField {
                power: self.drive.power_mw * 1e-3,
                waist: self.drive.waist_mm * 1e-3,
                detuning: 2.0 * PI * self.drive.detuning_mhz * 1e6,
            },
            field,
            omega: AnalysisFrequency::from_mhz(self.analysis.frequency_mhz).map_err(|e| config_err(e.to_string()))?,
            n_slices: self.analysis.slices,
            ..CellConfig::default()
        };
        cell.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(cell)
    }

    pub fn shear_medium(&self) -> Result<ShearMediumConfig> {
        ShearMediumConfig::new(self.shear.g, self.shear.alpha, self.shear.slices).map_err(|e| config_err(e.to_string()))
    }

    /// Local-oscillator phases of a scan, radians.
    pub fn scan_phases(&self) -> Vec<f64> {
        psrlab::detection::phase_grid(self.scan.points, self.scan.span_deg.to_radians())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_reference_cell() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        let cell = cfg.cell().unwrap();
        let reference = CellConfig::default();
        assert_eq!(cell.ensemble.number_density, reference.ensemble.number_density);
        assert!((cell.ensemble.length - reference.ensemble.length).abs() < 1e-15);
        assert!((cell.drive.power - reference.drive.power).abs() < 1e-15);
        assert!((cell.drive.detuning - reference.drive.detuning).abs() < 1e-3);
        assert!((cell.field.b_x - reference.field.b_x).abs() < 1e-15);
        assert!((cell.omega.omega() - reference.omega.omega()).abs() < 1e-6);
        assert_eq!(cell.model, reference.model);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(matches!(ExperimentConfig::from_toml("sede = 3"), Err(ExplabError::Config(_))));
        assert!(ExperimentConfig::from_toml("[drive]\npower_mW = 3").is_err());
    }

    #[test]
    fn sweep_grid_rules() {
        let sweep = |body: &str| ExperimentConfig::from_toml(&format!("[sweep]\n{body}"));
        let cfg = sweep("param = \"b_x_mG\"\nfrom = 0\nto = 300\nsteps = 7").unwrap();
        assert_eq!(cfg.sweep_grid().unwrap().values, vec![0.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0]);
        let cfg = sweep("param = \"power_mW\"\nfrom = 2\nto = 9\nsteps = 1").unwrap();
        assert_eq!(cfg.sweep_grid().unwrap().values, vec![2.0]);
        assert!(sweep("param = \"b_x_mG\"\nfrom = 0\nto = 300\nsteps = 0").is_err());
        assert!(sweep("param = \"b_x_mG\"\nfrom = 300\nto = 0\nsteps = 3").is_err());
        assert!(sweep("param = \"b_y_mG\"\nfrom = 0\nto = 1\nsteps = 3").is_err());
        assert!(sweep("param = \"shear_g\"\nfrom = 0\nto = 1\nsteps = 3").is_err());
        assert!(ExperimentConfig::from_toml("tier = \"shear\"\n[sweep]\nparam = \"alpha\"\nfrom = 0\nto = 1\nsteps = 3").is_ok());
    }

    #[test]
    fn atom_overrides() {
        let cfg = ExperimentConfig::from_toml("[atom]\nground_relax_khz = 20\nexcited_dephasing_mhz = 1").unwrap();
        let model = cfg.atomic_model().unwrap();
        assert!((model.decay.ground_relax - 2.0 * PI * 2e4).abs() < 1e-9);
        assert!((model.decay.excited_dephasing - 2.0 * PI * 1e6).abs() < 1e-6);
    }

    #[test]
    fn detection_chain_is_checked() {
        assert!(ExperimentConfig::from_toml("[detection]\nqe = 1.2").is_err());
        let cfg = ExperimentConfig::from_toml("[detection]\ntransmission = 0.8\nqe = 0.95\nvisibility = 0.99").unwrap();
        assert!((psrlab::detection::effective_efficiency(&cfg.chain().unwrap()).unwrap() - 0.744876).abs() < 1e-12);
    }
}
