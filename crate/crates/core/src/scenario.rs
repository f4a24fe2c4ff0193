//! JSON scenario files.
//!
//! Rates are given either in units of `ν` (`kappa_nu`) or in rad/s
//! (`kappa_si`, converted with `nu_si`); exactly one form per field.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bch::{compile_linear_beamsplitter, trotterize, Compensation, NonlinearSwapSpec, PulseSchedule, Sideband};
use crate::covariance::{BathModel, GaussianState};
use crate::error::{Error, Result};
use crate::optimize::{ControlVector, ObjectiveKind, Occupation, OptimizationReport, OptimizerSettings, Strategy};
use crate::params::{FeasibilityInput, SystemParams};
use crate::PERIOD;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Parameter block as written in the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_si: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_si: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0_si: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_si: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_m_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_m_si: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar_env: Option<f64>,
}

impl RawParams {
    pub fn from_params(p: &SystemParams) -> Self {
        Self {
            nu_si: None,
            kappa_nu: Some(p.kappa),
            kappa_si: None,
            g0_nu: Some(p.g0),
            g0_si: None,
            delta_nu: Some(p.delta),
            delta_si: None,
            gamma_m_nu: Some(p.gamma_m),
            gamma_m_si: None,
            nbar_env: Some(p.nbar_env),
        }
    }

    /// Converts to units of `ν`; `nu_si` falls back to the feasibility block.
    pub fn resolve(&self, fallback_nu_si: Option<f64>) -> Result<SystemParams> {
        let nu_si = self.nu_si.or(fallback_nu_si);
        let pick = |name: &str, nu: Option<f64>, si: Option<f64>, default: f64| -> Result<f64> {
            match (nu, si) {
                (Some(_), Some(_)) => Err(Error::schema(
                    format!("params.{name}"),
                    format!("give either {name}_nu or {name}_si, not both"),
                )),
                (Some(v), None) => Ok(v),
                (None, Some(v)) => match nu_si {
                    Some(n) if n > 0.0 => Ok(v / n),
                    _ => Err(Error::schema(
                        format!("params.{name}_si"),
                        "SI rates need a positive nu_si (in params or feasibility)",
                    )),
                },
                (None, None) => Ok(default),
            }
        };
        let d = SystemParams::default();
        let p = SystemParams {
            nu: 1.0,
            kappa: pick("kappa", self.kappa_nu, self.kappa_si, d.kappa)?,
            g0: pick("g0", self.g0_nu, self.g0_si, d.g0)?,
            delta: pick("delta", self.delta_nu, self.delta_si, d.delta)?,
            gamma_m: pick("gamma_m", self.gamma_m_nu, self.gamma_m_si, d.gamma_m)?,
            nbar_env: self.nbar_env.unwrap_or(d.nbar_env),
        };
        p.validate().map_err(|e| Error::schema("params", e.to_string()))?;
        Ok(p)
    }
}

/// State of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    /// Thermal occupation `n`.
    Thermal(f64),
    /// Coherent amplitude `[Re α, Im α]`.
    Coherent([f64; 2]),
}

impl ModeSpec {
    pub fn is_pure(&self) -> bool {
        matches!(self, ModeSpec::Coherent(_) | ModeSpec::Thermal(0.0))
    }

    pub fn occupation(&self) -> f64 {
        match *self {
            ModeSpec::Thermal(n) => n,
            ModeSpec::Coherent([re, im]) => re * re + im * im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub cavity: ModeSpec,
    pub mechanics: ModeSpec,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            cavity: ModeSpec::Thermal(0.0),
            mechanics: ModeSpec::Thermal(10.0),
        }
    }
}

impl InitialState {
    pub fn gaussian(&self) -> GaussianState {
        let n = |m: &ModeSpec| match m {
            ModeSpec::Thermal(n) => *n,
            ModeSpec::Coherent(_) => 0.0,
        };
        let mut s = GaussianState::thermal(n(&self.cavity), n(&self.mechanics));
        for (mode, spec) in [(0, &self.cavity), (1, &self.mechanics)] {
            if let ModeSpec::Coherent([re, im]) = spec {
                s = s.displaced(mode, Complex64::new(*re, *im));
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    #[default]
    Covariance,
    Fock,
    Lindblad,
}

/// Truncation and step control for the Fock engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FockSettings {
    /// `[cavity, mechanics]` Fock dimensions.
    pub dims: [usize; 2],
    /// Keep the `g₀ n_c x_m` term of the full model.
    #[serde(default = "default_true")]
    pub keep_residual: bool,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
}

fn default_true() -> bool {
    true
}

fn default_max_step() -> f64 {
    0.05
}

impl Default for FockSettings {
    fn default() -> Self {
        Self {
            dims: [12, 24],
            keep_residual: true,
            max_step: default_max_step(),
        }
    }
}

/// Linear sideband cycle for the compiler control source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearCompileSpec {
    /// Pulse coupling amplitude (units of `ν`).
    pub g: f64,
    pub t1: f64,
    pub tf: f64,
    #[serde(default)]
    pub sideband: Sideband,
    #[serde(default)]
    pub compensation: Compensation,
    /// Cycles sharing `t₁` and `t_f`.
    #[serde(default = "one")]
    pub repetitions: f64,
}

fn one() -> f64 {
    1.0
}

impl LinearCompileSpec {
    /// Compiles `repetitions` cycles with `t₁/r`, `t_f/r`; the compensation
    /// is recompiled for the shorter cycle rather than rescaled.
    pub fn compile(&self, params: &SystemParams) -> Result<PulseSchedule> {
        let r = self.repetitions;
        if !(r.is_finite() && r >= 1.0) {
            return Err(Error::Domain(format!("repetitions must be ≥ 1, got {r}")));
        }
        let cycle = compile_linear_beamsplitter(
            params,
            self.g,
            self.t1 / r,
            self.tf / r,
            self.sideband,
            self.compensation,
        )?;
        if r == 1.0 {
            return Ok(cycle);
        }
        let mut base = cycle;
        base.segments.iter_mut().for_each(|s| s.duration *= r);
        base.effective_time *= r;
        trotterize(&base, r)
    }
}

/// Where the coupling schedule `G(t)` comes from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSource {
    /// Free evolution.
    #[default]
    None,
    /// Inline `[Re G, Im G, duration]` rows.
    Segments { segments: Vec<[f64; 3]> },
    /// JSON file holding segment rows, a control vector, a pulse schedule or
    /// an optimization report.
    File { path: PathBuf },
    /// Linear sideband cycle from the pulse compiler.
    Compiler { linear: LinearCompileSpec },
    /// Best control of an optimization report.
    Optimizer { path: PathBuf },
}

/// Optimizer configuration for `optimize` and `sweep-kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerBlock {
    pub g_max_nu: f64,
    #[serde(default = "default_segments")]
    pub segments: usize,
    #[serde(default)]
    pub partial: bool,
    #[serde(default)]
    pub objective: ObjectiveKind,
    #[serde(default)]
    pub occupation: Occupation,
    #[serde(default = "default_strategy")]
    pub strategy: Strategy,
    /// Trotter repetitions of the analytic seed.
    #[serde(default = "default_seed_repetitions")]
    pub seed_repetitions: f64,
    #[serde(default)]
    pub settings: Option<OptimizerSettings>,
}

fn default_segments() -> usize {
    crate::optimize::DEFAULT_SEGMENTS
}

fn default_strategy() -> Strategy {
    Strategy::AnalyticSeed
}

fn default_seed_repetitions() -> f64 {
    7.5
}

/// Nested double-cavity swap for `fock-swap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwapBlock {
    pub alpha: f64,
    /// Target `s = g₀τ₁`; sets `Ω = s/(g₀ t₁ t₂)`.
    pub s: f64,
    pub t1: f64,
    pub tf: f64,
    pub tf_prime: f64,
    /// `[antisymmetric, symmetric, mechanics]` Fock dimensions.
    pub dims: [usize; 3],
    /// Initial coherent mechanical amplitude.
    #[serde(default = "one")]
    pub mechanical_alpha: f64,
    /// Cycle count; defaults to the predicted swap.
    #[serde(default)]
    pub cycles: Option<usize>,
    #[serde(default = "default_coefficient_change")]
    pub max_coefficient_change: f64,
}

fn default_coefficient_change() -> f64 {
    0.01
}

impl SwapBlock {
    pub fn spec(&self, params: &SystemParams) -> Result<NonlinearSwapSpec> {
        if !(params.g0 > 0.0) {
            return Err(Error::schema("params.g0_nu", "the nonlinear swap needs g0 > 0"));
        }
        let t2 = 2.0 * self.t1 + self.tf;
        Ok(NonlinearSwapSpec {
            omega: self.s / (params.g0 * self.t1 * t2),
            t1: self.t1,
            tf: self.tf,
            tf_prime: self.tf_prime,
            alpha: self.alpha,
        })
    }
}

/// Scenario file layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: RawParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility: Option<FeasibilityInput>,
    #[serde(default)]
    pub initial: InitialState,
    #[serde(default)]
    pub bath_model: BathModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_budget_periods: Option<f64>,
    #[serde(default)]
    pub engine: Engine,
    /// Output sampling interval.
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fock: Option<FockSettings>,
    #[serde(default)]
    pub control: ControlSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub swap: Option<SwapBlock>,
}

fn schema_version() -> u32 {
    SCENARIO_SCHEMA_VERSION
}

fn default_dt() -> f64 {
    0.01
}

/// Validated scenario with rates in units of `ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub params: SystemParams,
    pub feasibility: Option<FeasibilityInput>,
    pub initial: InitialState,
    pub bath_model: BathModel,
    /// Units of `1/ν`.
    pub time_budget: f64,
    pub engine: Engine,
    pub dt: f64,
    pub fock: FockSettings,
    pub control: ControlSource,
    pub optimizer: Option<OptimizerBlock>,
    pub swap: Option<SwapBlock>,
    /// Directory used to resolve relative paths.
    pub base_dir: PathBuf,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_json_in(text, Path::new("."))
    }

    /// Parses `text`, resolving relative file references against `base_dir`.
    pub fn from_json_in(text: &str, base_dir: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: RawScenario = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
        Self::from_raw(raw, base_dir)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut s = Self::from_json_in(&text, base)?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .and_then(|n| n.to_str())
                .unwrap_or("scenario")
                .to_string();
        }
        Ok(s)
    }

    pub fn from_raw(raw: RawScenario, base_dir: &Path) -> Result<Self> {
        if raw.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::schema(
                "schema_version",
                format!(
                    "unsupported version {} (expected {SCENARIO_SCHEMA_VERSION})",
                    raw.schema_version
                ),
            ));
        }
        if let Some(f) = &raw.feasibility {
            f.validate().map_err(|e| Error::schema("feasibility", e.to_string()))?;
        }
        let params = raw.params.resolve(raw.feasibility.map(|f| f.nu_si))?;
        let time_budget = match (raw.time_budget, raw.time_budget_periods) {
            (Some(_), Some(_)) => {
                return Err(Error::schema(
                    "time_budget",
                    "give time_budget or time_budget_periods, not both",
                ))
            }
            (Some(t), None) => t,
            (None, Some(p)) => p * PERIOD / params.nu,
            (None, None) => return Err(Error::schema("time_budget", "missing time budget")),
        };
        if !(time_budget.is_finite() && time_budget > 0.0) {
            return Err(Error::schema(
                "time_budget",
                format!("must be positive, got {time_budget}"),
            ));
        }
        if !(raw.dt.is_finite() && raw.dt > 0.0) {
            return Err(Error::schema("dt", format!("must be positive, got {}", raw.dt)));
        }
        for (path, m) in [
            ("initial.cavity", raw.initial.cavity),
            ("initial.mechanics", raw.initial.mechanics),
        ] {
            let bad = match m {
                ModeSpec::Thermal(n) => !(n.is_finite() && n >= 0.0),
                ModeSpec::Coherent([a, b]) => !(a.is_finite() && b.is_finite()),
            };
            if bad {
                return Err(Error::schema(path, "occupations must be finite and non-negative"));
            }
            if raw.engine == Engine::Fock && !m.is_pure() {
                return Err(Error::schema(
                    path,
                    "the fock engine needs pure initial states; use lindblad",
                ));
            }
        }
        let fock = raw.fock.unwrap_or_default();
        if matches!(raw.engine, Engine::Fock | Engine::Lindblad) && fock.dims.iter().any(|&d| d < 2) {
            return Err(Error::schema("fock.dims", "every Fock dimension must be ≥ 2"));
        }
        match &raw.control {
            ControlSource::File { path } | ControlSource::Optimizer { path } => {
                if !base_dir.join(path).is_file() {
                    return Err(Error::schema(
                        "control.path",
                        format!("{} does not exist", path.display()),
                    ));
                }
            }
            ControlSource::Segments { segments } => {
                if let Some(k) = segments
                    .iter()
                    .position(|s| !(s[2] > 0.0 && s.iter().all(|v| v.is_finite())))
                {
                    return Err(Error::schema(
                        format!("control.segments[{k}]"),
                        "need finite G and duration > 0",
                    ));
                }
            }
            _ => {}
        }
        Ok(Self {
            name: raw.name.unwrap_or_default(),
            seed: raw.seed,
            params,
            feasibility: raw.feasibility,
            initial: raw.initial,
            bath_model: raw.bath_model,
            time_budget,
            engine: raw.engine,
            dt: raw.dt,
            fock,
            control: raw.control,
            optimizer: raw.optimizer,
            swap: raw.swap,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// File form with every rate in units of `ν`.
    pub fn to_raw(&self) -> RawScenario {
        RawScenario {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: (!self.name.is_empty()).then(|| self.name.clone()),
            seed: self.seed,
            params: RawParams::from_params(&self.params),
            feasibility: self.feasibility,
            initial: self.initial,
            bath_model: self.bath_model,
            time_budget: Some(self.time_budget),
            time_budget_periods: None,
            engine: self.engine,
            dt: self.dt,
            fock: Some(self.fock.clone()),
            control: self.control.clone(),
            optimizer: self.optimizer.clone(),
            swap: self.swap.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("scenario serializes")
    }

    /// Piecewise-constant `(G, duration)` segments of the control source.
    pub fn control_segments(&self) -> Result<Vec<(Complex64, f64)>> {
        match &self.control {
            ControlSource::None => Ok(Vec::new()),
            ControlSource::Segments { segments } => {
                Ok(segments.iter().map(|s| (Complex64::new(s[0], s[1]), s[2])).collect())
            }
            ControlSource::Compiler { linear } => linear.compile(&self.params)?.to_coupling_segments(),
            ControlSource::File { path } => read_control_file(&self.base_dir.join(path)),
            ControlSource::Optimizer { path } => {
                let text = std::fs::read_to_string(self.base_dir.join(path))?;
                let r: OptimizationReport = parse_json(&text)?;
                Ok(segments_of(&r.best))
            }
        }
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))
}

fn segments_of(cv: &ControlVector) -> Vec<(Complex64, f64)> {
    cv.values.iter().copied().zip(cv.durations.iter().copied()).collect()
}

/// Reads segment rows, a control vector, a pulse schedule or a report.
pub fn read_control_file(path: &Path) -> Result<Vec<(Complex64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::schema("", e.to_string()))?;
    if value.get("best").is_some() {
        let r: OptimizationReport = parse_json(&text)?;
        Ok(segments_of(&r.best))
    } else if value.get("values").is_some() {
        let cv: ControlVector = parse_json(&text)?;
        Ok(segments_of(&cv))
    } else if value.get("segments").is_some() {
        PulseSchedule::from_json(&text)?.to_coupling_segments()
    } else {
        let rows: Vec<[f64; 3]> = parse_json(&text)?;
        Ok(rows.iter().map(|s| (Complex64::new(s[0], s[1]), s[2])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_defaults() {
        let s = Scenario::from_json(r#"{"time_budget_periods": 0.8}"#).unwrap();
        assert_eq!(s.params, SystemParams::default());
        assert_eq!(s.engine, Engine::Covariance);
        assert!((s.time_budget - 0.8 * PERIOD).abs() < 1e-15);
        assert!(s.control_segments().unwrap().is_empty());
    }

    #[test]
    fn si_rates_convert_with_nu_si() {
        let s =
            Scenario::from_json(r#"{"params": {"nu_si": 2e6, "kappa_si": 1e6, "g0_nu": 0.01}, "time_budget": 1.0}"#)
                .unwrap();
        assert_eq!(s.params.kappa, 0.5);
        assert_eq!(s.params.g0, 0.01);
    }

    #[test]
    fn both_forms_rejected_with_path() {
        let e = Scenario::from_json(r#"{"params": {"kappa_nu": 1, "kappa_si": 1, "nu_si": 1}, "time_budget": 1}"#)
            .unwrap_err();
        assert!(
            matches!(&e, Error::Schema { path, .. } if path == "params.kappa"),
            "{e}"
        );
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn si_without_reference_frequency_rejected() {
        let e = Scenario::from_json(r#"{"params": {"kappa_si": 1}, "time_budget": 1}"#).unwrap_err();
        assert!(matches!(e, Error::Schema { .. }));
    }

    #[test]
    fn schema_errors_carry_json_path() {
        let e = Scenario::from_json(
            r#"{"time_budget": 1, "initial": {"cavity": {"thermal": "hot"}, "mechanics": {"thermal": 1}}}"#,
        )
        .unwrap_err();
        match e {
            Error::Schema { path, .. } => assert_eq!(path, "initial.cavity.thermal"),
            other => panic!("{other}"),
        }
        let e = Scenario::from_json(r#"{"time_budget": 1, "bogus": 3}"#).unwrap_err();
        assert!(matches!(e, Error::Schema { .. }));
    }

    #[test]
    fn fock_engine_rejects_thermal_state() {
        let e = Scenario::from_json(r#"{"time_budget": 1, "engine": "fock"}"#).unwrap_err();
        assert!(matches!(&e, Error::Schema { path, .. } if path == "initial.mechanics"));
    }

    #[test]
    fn missing_control_file_rejected() {
        let e =
            Scenario::from_json(r#"{"time_budget": 1, "control": {"kind": "file", "path": "nope.json"}}"#).unwrap_err();
        assert!(matches!(&e, Error::Schema { path, .. } if path == "control.path"));
    }

    #[test]
    fn params_round_trip_bit_exactly() {
        let p = SystemParams {
            nu: 1.0,
            kappa: 0.1 + 0.2,
            g0: 1.0 / 3.0,
            delta: std::f64::consts::E,
            gamma_m: 1e-300,
            nbar_env: 123.456_789_012_345_67,
        };
        let mut s = Scenario::from_json(r#"{"time_budget": 1}"#).unwrap();
        s.params = p;
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back.params, p);
        assert_eq!(back, s);
    }

    #[test]
    fn compiler_control_source() {
        let s = Scenario::from_json(
            r#"{"time_budget": 10, "control": {"kind": "compiler", "linear": {"g": 10, "t1": 0.01, "tf": 0.1}}}"#,
        )
        .unwrap();
        let segs = s.control_segments().unwrap();
        assert_eq!(segs.len(), 3);
        assert!(segs[0].0.im != 0.0);
    }

    #[test]
    fn control_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let rows = dir.path().join("rows.json");
        std::fs::write(&rows, "[[0.5, -0.25, 1.0], [0.0, 1.0, 0.5]]").unwrap();
        let segs = read_control_file(&rows).unwrap();
        assert_eq!(
            segs,
            vec![(Complex64::new(0.5, -0.25), 1.0), (Complex64::new(0.0, 1.0), 0.5)]
        );
        let cv = ControlVector::uniform(3, 1.5, 1.0, false).unwrap();
        let cvp = dir.path().join("cv.json");
        std::fs::write(&cvp, serde_json::to_string(&cv).unwrap()).unwrap();
        assert_eq!(read_control_file(&cvp).unwrap().len(), 3);
        let sc = Scenario::from_json_in(
            r#"{"time_budget": 2, "control": {"kind": "file", "path": "cv.json"}}"#,
            dir.path(),
        )
        .unwrap();
        assert_eq!(sc.control_segments().unwrap().len(), 3);
    }
}
