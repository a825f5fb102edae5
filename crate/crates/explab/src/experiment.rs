//! Single simulations, parameter sweeps and phase scans.

use std::fmt::Write as _;

use psrlab::atom::QuantizationAxis;
use psrlab::detection::{effective_efficiency, fmt_num, synthesize_scan, HomodyneScan};
use psrlab::gaussian::{GaussianState, VACUUM_VARIANCE};
use psrlab::propagation::propagate_cell;
use psrlab::shear::propagate;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Tier};
use crate::error::{ExplabError, Result};
use crate::trend::{TrendPoint, TrendReport};

pub const SWEEP_HEADER: &str = "param,value,min_db,max_db,angle_rad,error";

/// Outcome of one simulated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub tier: Tier,
    /// Signal state leaving the medium.
    pub source: GaussianState,
    /// Same state after the detection chain.
    pub detected: GaussianState,
    pub eta: f64,
    pub axis: Option<QuantizationAxis>,
    pub drive_transmission: Option<f64>,
}

fn db(variance: f64) -> f64 {
    10.0 * (variance / VACUUM_VARIANCE).log10()
}

impl Simulation {
    /// Detected `(min_db, max_db, angle_rad)`. With a fixed local-oscillator
    /// phase both noise levels are the one at that phase.
    pub fn detected_noise(&self, phase_deg: Option<f64>) -> (f64, f64, f64) {
        match phase_deg {
            Some(deg) => {
                let phi = deg.to_radians();
                let v = db(self.detected.quadrature_variance(phi));
                (v, v, phi)
            }
            None => {
                let (lo, angle) = self.detected.min_variance();
                (db(lo), db(self.detected.max_variance().0), angle)
            }
        }
    }

    /// `key=value` lines.
    pub fn report(&self, phase_deg: Option<f64>) -> String {
        let (min_db, max_db, angle) = self.detected_noise(phase_deg);
        let mut out = String::new();
        let _ = writeln!(out, "tier={}", self.tier);
        if let Some(axis) = self.axis {
            let _ = writeln!(out, "quantization_axis={}", if axis == QuantizationAxis::X { "x" } else { "z" });
        }
        let _ = writeln!(out, "source_min_db={}", fmt_num(db(self.source.min_variance().0)));
        let _ = writeln!(out, "source_max_db={}", fmt_num(db(self.source.max_variance().0)));
        let _ = writeln!(out, "source_det={}", fmt_num(self.source.det()));
        let _ = writeln!(out, "eta={}", fmt_num(self.eta));
        let _ = writeln!(out, "min_db={}", fmt_num(min_db));
        let _ = writeln!(out, "max_db={}", fmt_num(max_db));
        let _ = writeln!(out, "angle_rad={}", fmt_num(angle));
        if let Some(t) = self.drive_transmission {
            let _ = writeln!(out, "drive_transmission={}", fmt_num(t));
        }
        out
    }
}

/// Send vacuum through the configured medium and detection chain.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Simulation> {
    let eta = effective_efficiency(&cfg.chain()?).map_err(|e| ExplabError::Config(e.to_string()))?;
    let vacuum = GaussianState::vacuum();
    let (source, axis, drive_transmission) = match cfg.tier {
        Tier::Shear => {
            let medium = cfg.shear_medium()?;
            let out = propagate(&vacuum, &medium).map_err(|e| ExplabError::Simulation(e.to_string()))?;
            (out, None, None)
        }
        Tier::Micro => {
            let cell = cfg.cell()?;
            let out = propagate_cell(&vacuum, &cell).map_err(|e| ExplabError::Simulation(e.to_string()))?;
            (out.state, Some(out.axis), Some(out.drive_transmission()))
        }
    };
    let detected = source.apply_loss(eta).map_err(|e| ExplabError::Simulation(e.to_string()))?;
    Ok(Simulation {
        tier: cfg.tier,
        source,
        detected,
        eta,
        axis,
        drive_transmission,
    })
}

/// Run the configured sweep. Points are simulated in parallel and reported in
/// grid order. A failing point is kept with its error message; the sweep
/// fails only when every point fails.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<TrendReport> {
    let grid = cfg.sweep_grid()?;
    // configuration problems surface before any work is done
    match cfg.tier {
        Tier::Micro => {
            cfg.cell()?;
        }
        Tier::Shear => {
            cfg.shear_medium()?;
        }
    }
    let points: Vec<TrendPoint> = grid
        .values
        .par_iter()
        .map(|&value| {
            let mut point_cfg = cfg.clone();
            grid.param.apply(&mut point_cfg, value);
            match simulate(&point_cfg) {
                Ok(sim) => {
                    let (min_db, max_db, angle) = sim.detected_noise(point_cfg.detection.phase_deg);
                    TrendPoint {
                        value,
                        min_db: Some(min_db),
                        max_db: Some(max_db),
                        angle_rad: Some(angle),
                        error: None,
                    }
                }
                Err(e) => TrendPoint {
                    value,
                    min_db: None,
                    max_db: None,
                    angle_rad: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    if points.iter().all(|p| p.error.is_some()) {
        return Err(ExplabError::AllPointsFailed {
            count: points.len(),
            first: points[0].error.clone().unwrap_or_default(),
        });
    }
    Ok(TrendReport::from_points(grid.param.name(), points, &cfg.trend))
}

fn csv_field(text: &str) -> String {
    text.replace([',', '\n', '\r'], ";")
}

pub fn sweep_to_csv(report: &TrendReport) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt_num).unwrap_or_default();
    for p in &report.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            report.param,
            fmt_num(p.value),
            opt(p.min_db),
            opt(p.max_db),
            opt(p.angle_rad),
            p.error.as_deref().map(csv_field).unwrap_or_default()
        );
    }
    out
}

/// Homodyne scan of the simulated output over `[scan]` phases.
pub fn run_scan(cfg: &ExperimentConfig) -> Result<HomodyneScan> {
    let sim = simulate(cfg)?;
    synthesize_scan(&sim.source, &cfg.chain()?, &cfg.scan_phases(), cfg.scan.samples, cfg.seed)
        .map_err(|e| ExplabError::Simulation(e.to_string()))
}
