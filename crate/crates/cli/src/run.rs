//! Mode dispatch and CSV output.

use crate::config::{InitialState, Mode, SimConfig, Spacing};
use contmeas_core::moments::{integrate_moments_strided, moments_from_ket};
use contmeas_core::operator::coherent_state;
use contmeas_core::thermal::diffusion_coefficient;
use contmeas_core::verify;
use contmeas_core::{
    evolve, fock_state, lambda_from_temperature, make_oscillator_ops, moments_from_density, nbar,
    oscillator_model, run_trajectories, steady_state, thermal_state, DensityMatrix, Error,
    EvolveOptions, MeasurementModel, MomentParams, MomentState, OscillatorOps, ThermalSpec,
    TrajectoryOptions, C64,
};
use serde::Serialize;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

/// Environment variable that replaces `[output] dir`.
pub const OUTPUT_DIR_ENV: &str = "CONTMEAS_OUTPUT_DIR";

/// Leak above which a trajectory record is flagged.
const TRAJECTORY_LEAK_WARN: f64 = 1e-6;

#[derive(Debug)]
pub enum RunError {
    Io(PathBuf, io::Error),
    Csv(csv::Error),
    Model(Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            RunError::Csv(e) => write!(f, "csv: {e}"),
            RunError::Model(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Model(e)
    }
}

impl From<csv::Error> for RunError {
    fn from(e: csv::Error) -> Self {
        RunError::Csv(e)
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub csv: PathBuf,
    pub manifest: PathBuf,
    /// Diagnostics crossed a warning threshold, or a verify check failed.
    pub flagged: bool,
    pub notes: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    mode: &'static str,
    seed: Option<u64>,
    csv: String,
    config: &'a SimConfig,
}

/// CSV path: `--out` wins, then the environment override for the directory,
/// then `[output] dir`; the file name defaults to `<mode>.csv`.
pub fn output_path(cfg: &SimConfig, cli_out: Option<&Path>, env_dir: Option<&str>) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    let dir = env_dir.map(PathBuf::from).unwrap_or_else(|| cfg.output.dir.clone());
    let file = cfg
        .output
        .file
        .clone()
        .unwrap_or_else(|| format!("{}.csv", cfg.mode.name()));
    dir.join(file)
}

pub fn manifest_path(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.toml")
}

/// 17 significant digits; NaN and infinities as `NaN`, `inf`, `-inf`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

struct Table {
    writer: csv::Writer<fs::File>,
}

impl Table {
    fn create(path: &Path, header: &[&str]) -> Result<Self, RunError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| RunError::Io(dir.to_path_buf(), e))?;
        }
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(header)?;
        Ok(Table { writer })
    }

    fn row(&mut self, prefix: &[String], values: &[f64]) -> Result<(), RunError> {
        let fields = prefix.iter().cloned().chain(values.iter().map(|&v| fmt_f64(v)));
        self.writer.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self) -> Result<(), RunError> {
        self.writer.flush().map_err(|e| RunError::Csv(e.into()))
    }
}

const MOMENT_HEADER: [&str; 9] = ["t", "meanP", "meanQ", "P2", "PQ", "Q2", "trace_drift", "min_eig", "leak"];

fn moment_values(s: &MomentState) -> [f64; 5] {
    [s.mean_p, s.mean_q, s.p2, s.pq, s.q2]
}

/// Runs the configured mode, writing the CSV to `csv_path` and the manifest
/// next to it.
pub fn run(cfg: &SimConfig, csv_path: &Path) -> Result<RunReport, RunError> {
    let mut report = RunReport {
        csv: csv_path.to_path_buf(),
        manifest: manifest_path(csv_path),
        flagged: false,
        notes: Vec::new(),
    };
    match cfg.mode {
        Mode::Evolve => run_evolve(cfg, &mut report)?,
        Mode::Moments => run_moments(cfg, &mut report)?,
        Mode::Trajectories => run_trajectories_mode(cfg, &mut report)?,
        Mode::SteadyState => run_steady_state(cfg, &mut report)?,
        Mode::ThermalScan => run_thermal_scan(cfg, &mut report)?,
        Mode::Verify => run_verify(&mut report)?,
    }
    write_manifest(cfg, &report)?;
    Ok(report)
}

fn write_manifest(cfg: &SimConfig, report: &RunReport) -> Result<(), RunError> {
    let manifest = Manifest {
        program: "contmeas",
        version: env!("CARGO_PKG_VERSION"),
        mode: cfg.mode.name(),
        seed: cfg.trajectories.seed,
        csv: report.csv.display().to_string(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).expect("config serializes");
    fs::write(&report.manifest, text).map_err(|e| RunError::Io(report.manifest.clone(), e))
}

fn build(cfg: &SimConfig) -> Result<(OscillatorOps, MeasurementModel), Error> {
    let ops = make_oscillator_ops(cfg.oscillator.dim, cfg.oscillator.omega, cfg.oscillator.hbar)?;
    let m = if cfg.model.kappa == 0.0 && cfg.model.lambda == 0.0 {
        let b = ops.q.scale_real(ops.omega);
        MeasurementModel::unmonitored(ops.p.clone(), b, None, ops.hbar)?
    } else {
        oscillator_model(&ops, cfg.model.kappa, cfg.model.lambda)?
    };
    Ok((ops, m))
}

fn initial_density(cfg: &SimConfig) -> Result<DensityMatrix, Error> {
    let dim = cfg.oscillator.dim;
    match cfg.initial {
        InitialState::Fock { n } => fock_state(dim, n),
        InitialState::Coherent { alpha_re, alpha_im } => coherent_state(dim, C64::new(alpha_re, alpha_im)),
        InitialState::Thermal { nbar } => thermal_state(dim, nbar),
        InitialState::Moments { .. } => Err(Error::InvalidArgument(
            "explicit moments do not define a density matrix".into(),
        )),
    }
}

fn run_evolve(cfg: &SimConfig, report: &mut RunReport) -> Result<(), RunError> {
    let (ops, m) = build(cfg)?;
    let rho0 = initial_density(cfg)?;
    let opts = EvolveOptions::new(cfg.time.t_final, cfg.time.dt).with_stride(cfg.time.output_stride);
    let series = evolve(&rho0, &m, &ops.h, &opts)?;
    let mut table = Table::create(&report.csv, &MOMENT_HEADER)?;
    for ((t, rho), d) in series.times.iter().zip(&series.states).zip(&series.diagnostics) {
        let s = moments_from_density(rho, &ops)?;
        let mut row = vec![*t];
        row.extend(moment_values(&s));
        row.extend([d.trace_drift, d.min_eigenvalue, d.leak]);
        table.row(&[], &row)?;
    }
    table.finish()?;
    report.flagged = series.flagged();
    report.notes.extend(series.warnings.iter().map(|w| format!("{w:?}")));
    Ok(())
}

fn run_moments(cfg: &SimConfig, report: &mut RunReport) -> Result<(), RunError> {
    let params = MomentParams::new(
        cfg.oscillator.omega,
        cfg.model.lambda,
        cfg.model.kappa,
        cfg.oscillator.hbar,
    )?;
    let s0 = match cfg.initial {
        InitialState::Moments {
            mean_p,
            mean_q,
            p2,
            pq,
            q2,
        } => MomentState {
            mean_p,
            mean_q,
            p2,
            pq,
            q2,
        },
        _ => {
            let ops = make_oscillator_ops(cfg.oscillator.dim, cfg.oscillator.omega, cfg.oscillator.hbar)?;
            moments_from_density(&initial_density(cfg)?, &ops)?
        }
    };
    let series = integrate_moments_strided(&s0, &params, cfg.time.t_final, cfg.time.dt, cfg.time.output_stride)?;
    let mut table = Table::create(&report.csv, &MOMENT_HEADER)?;
    for (t, s) in series.times.iter().zip(&series.states) {
        let mut row = vec![*t];
        row.extend(moment_values(s));
        row.extend([f64::NAN; 3]);
        table.row(&[], &row)?;
    }
    table.finish()?;
    Ok(())
}

fn run_trajectories_mode(cfg: &SimConfig, report: &mut RunReport) -> Result<(), RunError> {
    let (ops, m) = build(cfg)?;
    let rho0 = initial_density(cfg)?;
    let seed = cfg.trajectories.seed.expect("validated: seed present");
    let opts = TrajectoryOptions::new(cfg.time.t_final, cfg.time.dt).with_stride(cfg.time.output_stride);
    let records = run_trajectories(&rho0, &m, &ops.h, &opts, cfg.trajectories.n_traj, seed)?;
    let header = ["traj", "t", "a", "meanP", "meanQ", "P2", "PQ", "Q2", "log_weight", "leak"];
    let mut table = Table::create(&report.csv, &header)?;
    let dim = cfg.oscillator.dim;
    let mut worst_leak: f64 = 0.0;
    for (index, rec) in records.iter().enumerate() {
        let label = [index.to_string()];
        let mut prev = 0usize;
        for (t, psi) in rec.times.iter().zip(&rec.states) {
            let step = (t / rec.dt).round() as usize;
            // readout averaged over the steps since the previous row
            let (a, lw) = if step == 0 {
                (f64::NAN, 0.0)
            } else {
                let window = &rec.readouts[prev..step];
                (window.iter().sum::<f64>() / window.len() as f64, rec.log_weight[step - 1])
            };
            prev = step;
            let s = moments_from_ket(psi, &ops)?;
            let leak = psi[dim - 1].norm_sqr() + psi[dim - 2].norm_sqr();
            worst_leak = worst_leak.max(leak);
            let mut row = vec![*t, a];
            row.extend(moment_values(&s));
            row.extend([lw, leak]);
            table.row(&label, &row)?;
        }
    }
    table.finish()?;
    if worst_leak > TRAJECTORY_LEAK_WARN {
        report.flagged = true;
        report.notes.push(format!("truncation leak {worst_leak:.3e} in a conditioned state"));
    }
    Ok(())
}

fn run_steady_state(cfg: &SimConfig, report: &mut RunReport) -> Result<(), RunError> {
    let (ops, m) = build(cfg)?;
    let ss = steady_state(&m, &ops.h)?;
    let s = moments_from_density(&ss.state, &ops)?;
    let header = [
        "meanP", "meanQ", "P2", "PQ", "Q2", "residual", "sigma_min", "sigma_2", "min_eig", "leak",
    ];
    let mut table = Table::create(&report.csv, &header)?;
    let mut row = moment_values(&s).to_vec();
    row.extend([
        ss.residual,
        ss.smallest_singular_value,
        ss.second_singular_value,
        ss.state.min_eigenvalue(),
        ss.leak,
    ]);
    table.row(&[], &row)?;
    table.finish()?;
    if ss.flagged {
        report.flagged = true;
        report
            .notes
            .push(format!("steady state not resolved in the basis (leak {:.3e})", ss.leak));
    }
    Ok(())
}

pub fn temperature_grid(t_min: f64, t_max: f64, n: usize, spacing: Spacing) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let f = k as f64 / (n - 1) as f64;
            match spacing {
                Spacing::Linear => t_min + (t_max - t_min) * f,
                Spacing::Log => t_min * (t_max / t_min).powf(f),
            }
        })
        .collect()
}

fn run_thermal_scan(cfg: &SimConfig, report: &mut RunReport) -> Result<(), RunError> {
    let th = &cfg.thermal;
    let (omega, hbar) = (cfg.oscillator.omega, cfg.oscillator.hbar);
    let mut table = Table::create(&report.csv, &["lambda", "T", "nbar", "D"])?;
    for t in temperature_grid(th.t_min, th.t_max, th.n_points, th.spacing) {
        let spec = ThermalSpec::with_kb(t, omega, hbar, th.kb)?;
        let lambda = lambda_from_temperature(cfg.model.kappa, &spec)?;
        let d = diffusion_coefficient(lambda * omega, &spec)?;
        table.row(&[], &[lambda, t, nbar(&spec), d])?;
    }
    table.finish()?;
    Ok(())
}

fn run_verify(report: &mut RunReport) -> Result<(), RunError> {
    let checks = verify::run_all();
    let mut writer = csv::Writer::from_path(&report.csv)?;
    writer.write_record(["check", "passed", "value", "tolerance"])?;
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{:<width$}  {status}  {:.3e}  (tol {:.0e})", c.name, c.value, c.tolerance);
        writer.write_record([
            c.name.to_string(),
            c.passed.to_string(),
            fmt_f64(c.value),
            fmt_f64(c.tolerance),
        ])?;
    }
    writer.flush().map_err(|e| RunError::Csv(e.into()))?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    report.flagged = failed > 0;
    Ok(())
}
