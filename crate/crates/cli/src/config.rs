//! Run configuration: TOML schema, defaults and validation.

use contmeas_core::operator::{coherent_ket, thermal_state};
use contmeas_core::C64;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;

pub const DEFAULT_DIM: usize = 40;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_OUTPUT_STRIDE: usize = 10;
pub const DEFAULT_THERMAL_POINTS: usize = 50;
pub const STEADY_STATE_MAX_DIM: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evolve,
    Moments,
    Trajectories,
    SteadyState,
    ThermalScan,
    Verify,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Evolve => "evolve",
            Mode::Moments => "moments",
            Mode::Trajectories => "trajectories",
            Mode::SteadyState => "steady-state",
            Mode::ThermalScan => "thermal-scan",
            Mode::Verify => "verify",
        }
    }

    fn needs_model(self) -> bool {
        matches!(self, Mode::Evolve | Mode::Moments | Mode::Trajectories | Mode::SteadyState)
    }

    fn needs_time(self) -> bool {
        matches!(self, Mode::Evolve | Mode::Moments | Mode::Trajectories)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub mode: Mode,
    pub oscillator: OscillatorConfig,
    pub model: ModelConfig,
    pub initial: InitialState,
    pub time: TimeConfig,
    pub trajectories: TrajectoryConfig,
    pub thermal: ThermalConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OscillatorConfig {
    pub dim: usize,
    pub omega: f64,
    pub hbar: f64,
}

/// `kappa = lambda = 0` selects the unmonitored model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelConfig {
    pub kappa: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialState {
    Fock { n: usize },
    Coherent { alpha_re: f64, alpha_im: f64 },
    Thermal { nbar: f64 },
    /// Explicit moments; `moments` mode only.
    Moments {
        mean_p: f64,
        mean_q: f64,
        p2: f64,
        pq: f64,
        q2: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeConfig {
    pub t_final: f64,
    pub dt: f64,
    pub output_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryConfig {
    pub n_traj: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThermalConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub n_points: usize,
    pub kb: f64,
    pub spacing: Spacing,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// File name inside `dir`; `<mode>.csv` when absent.
    pub file: Option<String>,
}

/// Values supplied on the command line, applied before validation.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigError {
    Parse { line: usize, message: String },
    Invalid(Vec<FieldError>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            ConfigError::Invalid(errors) => {
                write!(f, "{} invalid field(s):", errors.len())?;
                for e in errors {
                    write!(f, "\n  {}: {}", e.field, e.message)?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    #[serde(default)]
    oscillator: RawOscillator,
    #[serde(default)]
    model: RawModel,
    #[serde(default)]
    initial: RawInitial,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    trajectories: RawTrajectories,
    #[serde(default)]
    thermal: RawThermal,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOscillator {
    dim: Option<i64>,
    omega: Option<f64>,
    hbar: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kappa: Option<f64>,
    lambda: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    kind: Option<String>,
    n: Option<i64>,
    alpha_re: Option<f64>,
    alpha_im: Option<f64>,
    nbar: Option<f64>,
    mean_p: Option<f64>,
    mean_q: Option<f64>,
    p2: Option<f64>,
    pq: Option<f64>,
    q2: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    t_final: Option<f64>,
    dt: Option<f64>,
    output_stride: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTrajectories {
    n_traj: Option<i64>,
    seed: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawThermal {
    t_min: Option<f64>,
    t_max: Option<f64>,
    n_points: Option<i64>,
    kb: Option<f64>,
    spacing: Option<Spacing>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    file: Option<String>,
}

/// Parses and validates a configuration; the mode must be given by the
/// top-level `mode` key.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    parse_config_with(text, &Overrides::default())
}

/// As [`parse_config`], with command-line values taking precedence.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<SimConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
        message: e.message().to_string(),
    })?;
    Validator::default().finish(raw, overrides)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[derive(Default)]
struct Validator {
    errors: Vec<FieldError>,
}

impl Validator {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn positive(&mut self, field: &str, v: f64) -> f64 {
        if !(v > 0.0 && v.is_finite()) {
            self.push(field, format!("must be positive and finite, got {v}"));
        }
        v
    }

    fn nonnegative(&mut self, field: &str, v: f64) -> f64 {
        if !(v >= 0.0 && v.is_finite()) {
            self.push(field, format!("must be non-negative and finite, got {v}"));
        }
        v
    }

    fn finite(&mut self, field: &str, v: f64) -> f64 {
        if !v.is_finite() {
            self.push(field, format!("must be finite, got {v}"));
        }
        v
    }

    fn count(&mut self, field: &str, v: i64, min: i64) -> usize {
        if v < min {
            self.push(field, format!("must be at least {min}, got {v}"));
            return min.max(0) as usize;
        }
        v as usize
    }

    fn required<T>(&mut self, field: &str, v: Option<T>, mode: Mode) -> Option<T> {
        if v.is_none() {
            self.push(field, format!("required in {} mode", mode.name()));
        }
        v
    }

    fn finish(mut self, raw: RawConfig, overrides: &Overrides) -> Result<SimConfig, ConfigError> {
        let mode = match (overrides.mode, raw.mode) {
            (Some(cli), Some(file)) if cli != file => {
                self.push(
                    "mode",
                    format!("config says {} but {} was requested", file.name(), cli.name()),
                );
                cli
            }
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => {
                self.push("mode", "missing");
                return Err(ConfigError::Invalid(self.errors));
            }
        };

        let dim = self.count("oscillator.dim", raw.oscillator.dim.unwrap_or(DEFAULT_DIM as i64), 2);
        if mode == Mode::SteadyState && dim > STEADY_STATE_MAX_DIM {
            self.push(
                "oscillator.dim",
                format!("steady-state mode supports dim <= {STEADY_STATE_MAX_DIM}, got {dim}"),
            );
        }
        let omega = self.positive("oscillator.omega", raw.oscillator.omega.unwrap_or(1.0));
        let hbar = raw.oscillator.hbar.unwrap_or(1.0);
        let hbar = if mode == Mode::Moments {
            self.nonnegative("oscillator.hbar", hbar)
        } else {
            self.positive("oscillator.hbar", hbar)
        };

        let model = self.model(&raw.model, mode);
        let initial = self.initial(&raw.initial, mode, dim, hbar);
        let time = self.time(&raw.time, mode);

        let n_traj = self.count("trajectories.n_traj", raw.trajectories.n_traj.unwrap_or(1), 1);
        let seed = match overrides.seed.map(|s| s as i64).or(raw.trajectories.seed) {
            Some(s) if s < 0 => {
                self.push("trajectories.seed", format!("must be non-negative, got {s}"));
                None
            }
            s => s.map(|s| s as u64),
        };
        if mode == Mode::Trajectories && seed.is_none() {
            self.push("trajectories.seed", "required in trajectories mode (config or --seed)");
        }

        let thermal = self.thermal(&raw.thermal, mode);

        if !self.errors.is_empty() {
            return Err(ConfigError::Invalid(self.errors));
        }
        Ok(SimConfig {
            mode,
            oscillator: OscillatorConfig { dim, omega, hbar },
            model,
            initial,
            time,
            trajectories: TrajectoryConfig { n_traj, seed },
            thermal,
            output: OutputConfig {
                dir: raw.output.dir.unwrap_or_else(|| PathBuf::from(".")),
                file: raw.output.file,
            },
        })
    }

    fn model(&mut self, raw: &RawModel, mode: Mode) -> ModelConfig {
        let needs = mode.needs_model();
        let kappa = if needs || mode == Mode::ThermalScan {
            self.required("model.kappa", raw.kappa, mode)
        } else {
            raw.kappa
        };
        let lambda = if needs {
            self.required("model.lambda", raw.lambda, mode)
        } else {
            raw.lambda
        };
        let kappa = kappa.map(|k| self.nonnegative("model.kappa", k)).unwrap_or(0.0);
        let lambda = lambda.map(|l| self.nonnegative("model.lambda", l)).unwrap_or(0.0);
        if kappa == 0.0 {
            match mode {
                Mode::Evolve | Mode::Trajectories if lambda == 0.0 => {}
                Mode::Evolve | Mode::Trajectories => {
                    self.push("model.kappa", "must be positive unless lambda = 0 as well")
                }
                Mode::Moments | Mode::SteadyState | Mode::ThermalScan => {
                    self.push("model.kappa", format!("must be positive in {} mode", mode.name()))
                }
                Mode::Verify => {}
            }
        }
        ModelConfig { kappa, lambda }
    }

    fn initial(&mut self, raw: &RawInitial, mode: Mode, dim: usize, hbar: f64) -> InitialState {
        let kind = raw.kind.as_deref().unwrap_or("fock");
        let state = match kind {
            "fock" => {
                let n = self.count("initial.n", raw.n.unwrap_or(0), 0);
                if n >= dim {
                    self.push("initial.n", format!("must be below oscillator.dim = {dim}, got {n}"));
                }
                InitialState::Fock { n }
            }
            "coherent" => {
                let alpha_re = self.finite("initial.alpha_re", raw.alpha_re.unwrap_or(0.0));
                let alpha_im = self.finite("initial.alpha_im", raw.alpha_im.unwrap_or(0.0));
                if mode != Mode::Verify && mode != Mode::ThermalScan && alpha_re.is_finite() && alpha_im.is_finite() {
                    if let Err(e) = coherent_ket(dim, C64::new(alpha_re, alpha_im)) {
                        self.push("initial.alpha_re", format!("coherent state does not fit in dim {dim}: {e}"));
                    }
                }
                InitialState::Coherent { alpha_re, alpha_im }
            }
            "thermal" => {
                let nbar = self.nonnegative("initial.nbar", raw.nbar.unwrap_or(0.0));
                if mode != Mode::Verify && mode != Mode::ThermalScan && nbar >= 0.0 && nbar.is_finite() {
                    if let Err(e) = thermal_state(dim, nbar) {
                        self.push("initial.nbar", format!("thermal state does not fit in dim {dim}: {e}"));
                    }
                }
                InitialState::Thermal { nbar }
            }
            "moments" => {
                if mode != Mode::Moments {
                    self.push("initial.kind", "\"moments\" is only valid in moments mode");
                }
                let mut get = |field: &str, v: Option<f64>, default: f64| self.finite(field, v.unwrap_or(default));
                InitialState::Moments {
                    mean_p: get("initial.mean_p", raw.mean_p, 0.0),
                    mean_q: get("initial.mean_q", raw.mean_q, 0.0),
                    p2: get("initial.p2", raw.p2, 0.5),
                    pq: get("initial.pq", raw.pq, 0.0),
                    q2: get("initial.q2", raw.q2, 0.5),
                }
            }
            other => {
                self.push(
                    "initial.kind",
                    format!("unknown kind {other:?} (fock, coherent, thermal, moments)"),
                );
                InitialState::Fock { n: 0 }
            }
        };
        if mode == Mode::Moments && hbar == 0.0 && !matches!(state, InitialState::Moments { .. }) {
            self.push("initial.kind", "hbar = 0 requires kind = \"moments\"");
        }
        state
    }

    fn time(&mut self, raw: &RawTime, mode: Mode) -> TimeConfig {
        let t_final = if mode.needs_time() {
            self.required("time.t_final", raw.t_final, mode)
                .map(|t| self.positive("time.t_final", t))
                .unwrap_or(0.0)
        } else {
            raw.t_final.unwrap_or(0.0)
        };
        let dt = self.positive("time.dt", raw.dt.unwrap_or(DEFAULT_DT));
        if mode.needs_time() && dt > t_final && t_final > 0.0 {
            self.push("time.dt", format!("must not exceed time.t_final = {t_final}, got {dt}"));
        }
        let output_stride = self.count(
            "time.output_stride",
            raw.output_stride.unwrap_or(DEFAULT_OUTPUT_STRIDE as i64),
            1,
        );
        TimeConfig {
            t_final,
            dt,
            output_stride,
        }
    }

    fn thermal(&mut self, raw: &RawThermal, mode: Mode) -> ThermalConfig {
        let scan = mode == Mode::ThermalScan;
        let t_min = if scan {
            self.required("thermal.t_min", raw.t_min, mode)
                .map(|t| self.positive("thermal.t_min", t))
                .unwrap_or(0.0)
        } else {
            raw.t_min.unwrap_or(0.0)
        };
        let t_max = if scan {
            self.required("thermal.t_max", raw.t_max, mode)
                .map(|t| self.positive("thermal.t_max", t))
                .unwrap_or(0.0)
        } else {
            raw.t_max.unwrap_or(0.0)
        };
        if scan && t_min > 0.0 && t_max <= t_min {
            self.push("thermal.t_max", format!("must exceed thermal.t_min = {t_min}, got {t_max}"));
        }
        ThermalConfig {
            t_min,
            t_max,
            n_points: self.count(
                "thermal.n_points",
                raw.n_points.unwrap_or(DEFAULT_THERMAL_POINTS as i64),
                2,
            ),
            kb: self.positive("thermal.kb", raw.kb.unwrap_or(1.0)),
            spacing: raw.spacing.unwrap_or(Spacing::Linear),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_evolve_uses_defaults() {
        let cfg = parse_config("mode = \"evolve\"\n[model]\nkappa = 0.1\nlambda = 0.2\n[time]\nt_final = 1.0\n").unwrap();
        assert_eq!(cfg.oscillator.dim, DEFAULT_DIM);
        assert_eq!(cfg.time.dt, DEFAULT_DT);
        assert_eq!(cfg.initial, InitialState::Fock { n: 0 });
    }

    #[test]
    fn line_numbers() {
        assert_eq!(line_of("a\nb\nc", 0), 1);
        assert_eq!(line_of("a\nb\nc", 2), 2);
        assert_eq!(line_of("a\nb\nc", 4), 3);
    }
}
