use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use explab::config::{ExperimentConfig, SweepSection, Tier};
use explab::experiment::{run_scan, run_sweep, simulate, sweep_to_csv};
use explab::plot::{plot_svg, PlotOptions};
use explab::ExplabError;
use psrlab::detection::{
    effective_efficiency, fit_covariance, fmt_num, infer_source_db, scan_from_csv, scan_to_csv, wigner_grid,
    wigner_to_csv, DetectionChain,
};
use psrlab::gaussian::VACUUM_VARIANCE;

#[derive(Parser)]
#[command(name = "explab", version, about = "Simulate and analyze vacuum squeezing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one configuration and print key=value results.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        tier: Option<Tier>,
    },
    /// Sweep one parameter and write a CSV table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        from: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        to: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also render the sweep as SVG.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Homodyne noise versus local-oscillator phase.
    ScanPhase {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        points: Option<usize>,
        /// Samples per phase; 0 gives exact variances.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correct a measured noise level for detection losses.
    Infer {
        #[arg(long, allow_hyphen_values = true)]
        measured_db: f64,
        #[arg(long, default_value_t = 1.0)]
        transmission: f64,
        #[arg(long, default_value_t = 1.0)]
        qe: f64,
        #[arg(long, default_value_t = 1.0)]
        visibility: f64,
    },
    /// Fit a covariance matrix to a phase scan.
    Tomo {
        #[arg(long)]
        scan: PathBuf,
        /// Wigner-function grid output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1.5)]
        half_width: f64,
        #[arg(long, default_value_t = 101)]
        n: usize,
    },
    /// Render a sweep or scan CSV as SVG.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        #[arg(long)]
        title: Option<String>,
    },
}

fn read(path: &Path) -> Result<String, ExplabError> {
    std::fs::read_to_string(path).map_err(|source| ExplabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), ExplabError> {
    std::fs::write(path, text).map_err(|source| ExplabError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn detection_err(e: psrlab::detection::DetectionError) -> ExplabError {
    match e {
        psrlab::detection::DetectionError::Parse { line, message } => ExplabError::Parse { line, message },
        psrlab::detection::DetectionError::Gaussian(_) => ExplabError::Simulation(e.to_string()),
        other => ExplabError::Config(other.to_string()),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { config, tier } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(t) = tier {
                cfg.tier = t;
            }
            cfg.validate()?;
            print!("{}", simulate(&cfg)?.report(cfg.detection.phase_deg));
        }
        Command::Sweep {
            config,
            param,
            from,
            to,
            steps,
            out,
            svg,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            let base = cfg.sweep.clone();
            let sweep = match (
                param.or(base.as_ref().map(|s| s.param.clone())),
                from.or(base.as_ref().map(|s| s.from)),
                to.or(base.as_ref().map(|s| s.to)),
                steps.or(base.as_ref().map(|s| s.steps)),
            ) {
                (Some(param), Some(from), Some(to), Some(steps)) => SweepSection { param, from, to, steps },
                _ => {
                    return Err(ExplabError::Config(
                        "a sweep needs --param, --from, --to and --steps, or a [sweep] table".into(),
                    )
                    .into())
                }
            };
            cfg.sweep = Some(sweep);
            cfg.validate()?;
            let out = out
                .or(cfg.output.csv.clone())
                .ok_or_else(|| ExplabError::Config("no output CSV given (--out or output.csv)".into()))?;
            let report = run_sweep(&cfg)?;
            let csv = sweep_to_csv(&report);
            write(&out, &csv)?;
            if let Some(svg_path) = svg.or(cfg.output.svg.clone()) {
                write(&svg_path, &plot_svg(&csv, &PlotOptions::default())?)?;
            }
            print!("{}", report.summary());
        }
        Command::ScanPhase {
            config,
            points,
            samples,
            seed,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(p) = points {
                cfg.scan.points = p;
            }
            if let Some(s) = samples {
                cfg.scan.samples = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let scan = run_scan(&cfg)?;
            write(&out, &scan_to_csv(&scan))?;
            let to_db = |v: f64| fmt_num(10.0 * v.log10());
            println!("points={}", scan.points.len());
            println!("min_db={}", to_db(scan.min_snu().unwrap_or(f64::NAN)));
            println!("max_db={}", to_db(scan.max_snu().unwrap_or(f64::NAN)));
            if let Some(p) = scan.points.iter().min_by(|a, b| a.variance.total_cmp(&b.variance)) {
                println!("min_phi_rad={}", fmt_num(p.phi));
            }
        }
        Command::Infer {
            measured_db,
            transmission,
            qe,
            visibility,
        } => {
            let chain = DetectionChain::new(transmission, qe, visibility).map_err(detection_err)?;
            let eta = effective_efficiency(&chain).map_err(detection_err)?;
            let source = infer_source_db(measured_db, eta).map_err(detection_err)?;
            println!("eta={}", fmt_num(eta));
            println!("source_db={}", fmt_num(source));
        }
        Command::Tomo {
            scan,
            out,
            half_width,
            n,
        } => {
            let parsed = scan_from_csv(&read(&scan)?).map_err(detection_err)?;
            let fit = fit_covariance(&parsed).map_err(detection_err)?;
            let cov = fit.state.cov();
            let (lo, angle) = fit.state.min_variance();
            let (hi, _) = fit.state.max_variance();
            println!("sigma_xx={}", fmt_num(cov[(0, 0)]));
            println!("sigma_pp={}", fmt_num(cov[(1, 1)]));
            println!("sigma_xp={}", fmt_num(cov[(0, 1)]));
            println!("min_db={}", fmt_num(10.0 * (lo / VACUUM_VARIANCE).log10()));
            println!("max_db={}", fmt_num(10.0 * (hi / VACUUM_VARIANCE).log10()));
            println!("angle_rad={}", fmt_num(angle));
            println!("residual_rms={}", fmt_num(fit.residual_rms));
            if let Some(path) = out {
                let grid = wigner_grid(&fit.state, half_width, n).map_err(|e| ExplabError::Config(e.to_string()))?;
                write(&path, &wigner_to_csv(&grid))?;
            }
        }
        Command::Plot {
            input,
            out,
            x,
            y,
            title,
        } => {
            let svg = plot_svg(&read(&input)?, &PlotOptions { x, y, title })
                .with_context(|| format!("plotting {}", input.display()))?;
            write(&out, &svg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<ExplabError>().map_or(2, ExplabError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
