//! Run directories, scenario execution and the figure reproductions.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bch::{compile_nonlinear_swap, repeat, swap_timing, ControlTarget, PulseSchedule};
use crate::covariance::{
    phonon_number, photon_number, propagate, thermal_phonon_number, Coupling, GaussianState, PropagateOptions,
};
use crate::error::{Error, Result};
use crate::fock::{
    lindblad_evolve, CavityBasis, DensityMatrix, Dissipator, DoubleCavityModel, EvolveOptions, FockState,
    FockTrajectory, MixedModeState, ModeState, SingleCavityModel, DEFAULT_DENSITY_BUDGET, DEFAULT_STATE_BUDGET,
};
use crate::optimize::{
    analytic_seed, continuation, kappa_sweep, optimize, ControlVector, OptScenario, OptimizationReport,
    OptimizerSettings, Strategy, SweepStrategy, SweepTable,
};
use crate::params::{derive_g0, pulse_power_requirement, FeasibilityInput, Regime, SystemParams};
use crate::quadratic::QuadraticHamiltonian;
use crate::scenario::{Engine, ModeSpec, Scenario, SwapBlock};
use crate::symplectic::segment_propagator;
use crate::PERIOD;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Effective exponential cooling rate `ln(n₀/n_f)/t` in units of `ν`.
pub fn cooling_rate(n0: f64, nf: f64, t: f64) -> Result<f64> {
    if !(n0 > 0.0 && nf > 0.0) {
        return Err(Error::UndefinedRate(format!(
            "occupations must be positive (n₀ = {n0}, n_f = {nf})"
        )));
    }
    if !(t > 0.0) {
        return Err(Error::UndefinedRate(format!("duration must be positive, got {t}")));
    }
    Ok((n0 / nf).ln() / t)
}

/// Cooling rate between the first and last phonon numbers of a trajectory.
pub fn trajectory_cooling_rate(times: &[f64], phonons: &[f64]) -> Result<f64> {
    match (times.first(), times.last(), phonons.first(), phonons.last()) {
        (Some(&t0), Some(&t1), Some(&n0), Some(&nf)) => cooling_rate(n0, nf, t1 - t0),
        _ => Err(Error::UndefinedRate("empty trajectory".into())),
    }
}

/// Output file listed in a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub command: String,
    pub created: String,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

/// Timestamped output directory with a manifest of its files.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    manifest: Manifest,
}

impl RunDir {
    pub fn create(base: &Path, label: &str, command: &str, seed: u64) -> Result<Self> {
        let now = chrono::Local::now();
        let stamp = now.format("%Y%m%dT%H%M%S").to_string();
        fs::create_dir_all(base)?;
        let mut path = base.join(format!("{label}-{stamp}"));
        let mut k = 1;
        while path.exists() {
            path = base.join(format!("{label}-{stamp}-{k}"));
            k += 1;
        }
        fs::create_dir(&path)?;
        Ok(Self {
            path,
            manifest: Manifest {
                schema_version: MANIFEST_SCHEMA_VERSION,
                command: command.into(),
                created: now.to_rfc3339(),
                seed,
                files: Vec::new(),
            },
        })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8], description: &str, columns: &[&str]) -> Result<PathBuf> {
        let p = self.file(name);
        fs::write(&p, bytes)?;
        self.manifest.files.push(ManifestEntry {
            file: name.into(),
            description: description.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
        });
        Ok(p)
    }

    /// Writes CSV bytes and records the header as the column list.
    pub fn write_csv(&mut self, name: &str, bytes: &[u8], description: &str) -> Result<PathBuf> {
        let header = String::from_utf8_lossy(bytes).lines().next().unwrap_or("").to_string();
        let cols: Vec<&str> = header.split(',').filter(|c| !c.is_empty()).collect();
        self.write(name, bytes, description, &cols)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T, description: &str) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(value).expect("serializable output");
        self.write(name, text.as_bytes(), description, &[])
    }

    pub fn finish(self) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(self.path.join("manifest.json"), text)?;
        Ok(self.path)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Key numbers of a scenario run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub engine: Engine,
    pub t_final: f64,
    pub initial_phonon_number: f64,
    pub final_phonon_number: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_thermal_phonon_number: Option<f64>,
    pub final_photon_number: f64,
    /// `ln(n₀/n_f)/t`, absent when undefined.
    pub cooling_rate: Option<f64>,
}

/// Engine output before it is written to disk.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub summary: RunSummary,
    pub trajectory_csv: Vec<u8>,
}

fn single_cavity_states(sc: &Scenario) -> Vec<MixedModeState> {
    [sc.initial.cavity, sc.initial.mechanics]
        .iter()
        .map(|m| match *m {
            ModeSpec::Thermal(0.0) => MixedModeState::Pure(ModeState::Fock(0)),
            ModeSpec::Thermal(n) => MixedModeState::Thermal(n),
            ModeSpec::Coherent([re, im]) => MixedModeState::Pure(ModeState::coherent(Complex64::new(re, im))),
        })
        .collect()
}

/// Runs the scenario's engine over its time budget.
pub fn simulate(sc: &Scenario) -> Result<SimulationOutput> {
    let segs = sc.control_segments()?;
    let t_final = sc.time_budget;
    let covered: f64 = segs.iter().map(|s| s.1).sum();
    if covered > t_final * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "control spans {covered} but the time budget is {t_final}"
        )));
    }
    match sc.engine {
        Engine::Covariance => {
            let opts = PropagateOptions {
                dt: sc.dt,
                bath: sc.bath_model,
                ..Default::default()
            };
            let traj = propagate(
                &sc.initial.gaussian(),
                &sc.params,
                &Coupling::Piecewise(segs),
                t_final,
                &opts,
            )?;
            let last = traj.last();
            let (n0, nf) = (phonon_number(&traj.states[0]), phonon_number(last));
            Ok(SimulationOutput {
                summary: RunSummary {
                    engine: sc.engine,
                    t_final,
                    initial_phonon_number: n0,
                    final_phonon_number: nf,
                    final_thermal_phonon_number: Some(thermal_phonon_number(last)),
                    final_photon_number: photon_number(last),
                    cooling_rate: cooling_rate(n0, nf, t_final).ok(),
                },
                trajectory_csv: csv_bytes(|b| traj.write_csv(b))?,
            })
        }
        Engine::Fock | Engine::Lindblad => {
            let budget = if sc.engine == Engine::Fock {
                DEFAULT_STATE_BUDGET
            } else {
                DEFAULT_DENSITY_BUDGET
            };
            let model = SingleCavityModel::new(&sc.params, sc.fock.dims, budget)?;
            let proto = model.linearized_protocol(&segs, t_final, sc.fock.keep_residual, sc.fock.max_step)?;
            let opts = EvolveOptions {
                sample_dt: sc.dt,
                max_step: sc.fock.max_step,
                ..Default::default()
            };
            let states = single_cavity_states(sc);
            let traj = if sc.engine == Engine::Fock {
                let pure: Vec<ModeState> = states
                    .iter()
                    .map(|m| match m {
                        MixedModeState::Pure(p) => Ok(*p),
                        MixedModeState::Thermal(_) => Err(Error::schema("initial", "fock engine needs pure states")),
                    })
                    .collect::<Result<_>>()?;
                let psi = FockState::product(model.config(), &pure)?;
                crate::fock::evolve(&model.basis, &psi, &proto, &model.observables(), &opts)?.1
            } else {
                let rho = DensityMatrix::product(model.config(), &states)?;
                let diss: Vec<Dissipator> = if sc.params.kappa > 0.0 {
                    vec![Dissipator::cavity(0, sc.params.kappa)]
                } else {
                    Vec::new()
                };
                lindblad_evolve(&model.basis, &rho, &proto, &diss, &model.observables(), budget, &opts)?.1
            };
            let n_m = traj.column("n_m").unwrap_or_default();
            let n_c = traj.last("n_c").unwrap_or(f64::NAN);
            let nf = *n_m.last().unwrap_or(&f64::NAN);
            let n0 = n_m.first().copied().unwrap_or(f64::NAN);
            Ok(SimulationOutput {
                summary: RunSummary {
                    engine: sc.engine,
                    t_final,
                    initial_phonon_number: n0,
                    final_phonon_number: nf,
                    final_thermal_phonon_number: None,
                    final_photon_number: n_c,
                    cooling_rate: cooling_rate(n0, nf, t_final).ok(),
                },
                trajectory_csv: csv_bytes(|b| traj.write_csv(b))?,
            })
        }
    }
}

/// `simulate` plus a run directory with config copy, CSV and summary.
pub fn run_scenario(sc: &Scenario, out_base: &Path) -> Result<(PathBuf, RunSummary)> {
    let out = simulate(sc)?;
    let label = if sc.name.is_empty() { "simulate" } else { &sc.name };
    let mut dir = RunDir::create(out_base, label, "simulate", sc.seed)?;
    dir.write(
        "scenario.json",
        sc.to_json().as_bytes(),
        "resolved scenario (rates in units of nu)",
        &[],
    )?;
    dir.write_csv("trajectory.csv", &out.trajectory_csv, "phonon trajectory")?;
    dir.write_json("summary.json", &out.summary, "final occupations and cooling rate")?;
    Ok((dir.finish()?, out.summary))
}

/// Optimizer problem described by a scenario's `optimizer` block.
pub fn opt_scenario(sc: &Scenario) -> Result<(OptScenario, ControlVector)> {
    let block = sc
        .optimizer
        .as_ref()
        .ok_or_else(|| Error::schema("optimizer", "missing optimizer block"))?;
    let opt = OptScenario {
        params: sc.params,
        initial: sc.initial.gaussian(),
        time_budget: sc.time_budget,
        objective: block.objective,
        occupation: block.occupation,
        bath: sc.bath_model,
    };
    let segs = sc.control_segments()?;
    let initial = if !segs.is_empty() {
        ControlVector::from_segments(&segs, block.g_max_nu, block.partial)?
    } else {
        match block.strategy {
            Strategy::AnalyticSeed => {
                analytic_seed(&sc.params, block.g_max_nu, sc.time_budget, block.seed_repetitions)?
            }
            _ => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sc.seed);
                ControlVector::random(block.segments, sc.time_budget, block.g_max_nu, block.partial, &mut rng)?
            }
        }
    };
    Ok((opt, initial))
}

/// Settings of the scenario's optimizer block with CLI overrides.
pub fn optimizer_settings(sc: &Scenario, budget: Option<usize>, seed: Option<u64>) -> OptimizerSettings {
    let mut s = sc.optimizer.as_ref().and_then(|b| b.settings).unwrap_or_default();
    s.seed = seed.unwrap_or(sc.seed);
    if let Some(b) = budget {
        s.budget = b;
    }
    s
}

/// Writes the optimized control as `(t_start, duration, re_g, im_g)` rows.
pub fn control_csv(cv: &ControlVector) -> Result<Vec<u8>> {
    csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["t_start", "duration", "re_g", "im_g"])?;
        let mut t = 0.0;
        for (g, d) in cv.values.iter().zip(&cv.durations) {
            w.write_record([t.to_string(), d.to_string(), g.re.to_string(), g.im.to_string()])?;
            t += d;
        }
        w.flush()?;
        Ok(())
    })
}

fn history_csv(r: &OptimizationReport) -> Result<Vec<u8>> {
    csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["evaluations", "stage", "objective"])?;
        for h in &r.history {
            w.write_record([h.evaluations.to_string(), h.stage.to_string(), h.objective.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Phonon trajectory of the best control, sampled every `dt`.
pub fn control_trajectory_csv(cv: &ControlVector, sc: &OptScenario, dt: f64) -> Result<Vec<u8>> {
    let opts = PropagateOptions {
        dt,
        bath: sc.bath,
        check_uncertainty: false,
        record_steps: true,
    };
    let traj = propagate(&sc.initial, &sc.params, &cv.coupling(), cv.total_time(), &opts)?;
    csv_bytes(|b| traj.write_csv(b))
}

/// Writes a report, its control, history and trajectory into `dir`.
pub fn write_report(dir: &mut RunDir, prefix: &str, report: &OptimizationReport, sc: &OptScenario) -> Result<()> {
    dir.write_json(&format!("{prefix}report.json"), report, "optimization report")?;
    dir.write_csv(
        &format!("{prefix}control.csv"),
        &control_csv(&report.best)?,
        "optimized coupling schedule",
    )?;
    dir.write_csv(
        &format!("{prefix}history.csv"),
        &history_csv(report)?,
        "objective after accepted steps",
    )?;
    dir.write_csv(
        &format!("{prefix}trajectory.csv"),
        &control_trajectory_csv(&report.best, sc, 0.01)?,
        "moments under the optimized control",
    )?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fig1Config {
    pub n0: f64,
    pub g_max: f64,
    /// Schedule length in mechanical periods.
    pub periods: f64,
    /// Trotter repetitions of the analytic seed (4 segments each).
    pub seed_repetitions: f64,
    pub settings: OptimizerSettings,
}

impl Default for Fig1Config {
    fn default() -> Self {
        Self {
            n0: 100.0,
            g_max: 1.0,
            periods: 0.57,
            seed_repetitions: 5.0,
            settings: OptimizerSettings::default().with_budget(20_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig1Result {
    pub config: Fig1Config,
    pub seed: ControlVector,
    pub report: OptimizationReport,
    /// Rate from `n₀` to the optimized thermal occupation.
    pub cooling_rate: Option<f64>,
}

/// Fully coupled optimization from `n₀ = 100` at `G_max = ν`.
pub fn reproduce_fig1(cfg: &Fig1Config) -> Result<(Fig1Result, OptScenario)> {
    let sc = OptScenario::thermal(SystemParams::default(), cfg.n0, cfg.periods * PERIOD);
    let seed = analytic_seed(&sc.params, cfg.g_max, sc.time_budget, cfg.seed_repetitions)?;
    let report = optimize(&seed, &sc, Strategy::AnalyticSeed, &cfg.settings)?;
    let rate = cooling_rate(cfg.n0, report.best_objective, report.best.total_time()).ok();
    Ok((
        Fig1Result {
            config: *cfg,
            seed,
            report,
            cooling_rate: rate,
        },
        sc,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Config {
    pub n0: f64,
    pub g_max: f64,
    pub periods: f64,
    pub kappas: Vec<f64>,
    pub settings: OptimizerSettings,
    /// Also run the κ continuation seeded with the analytic 30-pulse set.
    pub continuation: bool,
}

impl Default for Fig2Config {
    fn default() -> Self {
        Self {
            n0: 10.0,
            g_max: 10.0,
            periods: 0.8,
            kappas: vec![0.0, 0.5, 1.0, 2.0],
            settings: OptimizerSettings::default().with_budget(10_000),
            continuation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig2Result {
    pub config: Fig2Config,
    pub table: SweepTable,
    /// κ = 0, 300-pulse analytic set before optimization.
    pub reference_point: Option<f64>,
    /// Final occupations of the κ continuation.
    pub continuation: Vec<(f64, f64)>,
    pub continuation_violations: Vec<String>,
}

impl Fig2Result {
    /// κ points where the analytic 30-pulse result beats both random starts.
    pub fn analytic_wins(&self) -> usize {
        self.config
            .kappas
            .iter()
            .filter(|&&k| {
                let after = |s| self.table.row(k, s).map(|r| r.after);
                match (
                    after(SweepStrategy::Analytic30),
                    after(SweepStrategy::RandomFull),
                    after(SweepStrategy::RandomPartial),
                ) {
                    (Some(a), rf, rp) => rf.is_none_or(|v| a <= v) && rp.is_none_or(|v| a <= v),
                    _ => false,
                }
            })
            .count()
    }
}

pub fn reproduce_fig2(cfg: &Fig2Config) -> Result<Fig2Result> {
    let template = OptScenario::thermal(SystemParams::default(), cfg.n0, cfg.periods * PERIOD);
    let table = kappa_sweep(&template, cfg.g_max, &cfg.kappas, &SweepStrategy::ALL, &cfg.settings)?;
    let reference_point = table
        .rows
        .iter()
        .find(|r| r.kappa == 0.0 && r.strategy == SweepStrategy::Analytic300)
        .map(|r| r.before);
    let (continuation_rows, continuation_violations) = if cfg.continuation {
        let seed = SweepStrategy::Analytic30.seed_control(&template, cfg.g_max, cfg.settings.seed)?;
        let c = continuation(&seed, &template, &cfg.kappas, &cfg.settings)?;
        (
            c.kappas
                .iter()
                .zip(&c.reports)
                .map(|(k, r)| (*k, r.best_objective))
                .collect(),
            c.trend_violations,
        )
    } else {
        (Vec::new(), Vec::new())
    };
    let mut table = table;
    table.trend_violations.extend(continuation_violations.iter().cloned());
    Ok(Fig2Result {
        config: cfg.clone(),
        table,
        reference_point,
        continuation: continuation_rows,
        continuation_violations,
    })
}

/// Outcome of a nested double-cavity swap in the Fock simulator.
#[derive(Debug, Clone)]
pub struct SwapRun {
    pub schedule: PulseSchedule,
    pub cycles: usize,
    pub trajectory: FockTrajectory,
    pub initial_n_m: f64,
    pub final_n_m: f64,
    pub final_n_s: f64,
    pub final_n_a: f64,
}

impl SwapRun {
    /// Fraction of the initial mechanical energy found in the symmetric mode.
    pub fn transfer(&self) -> f64 {
        self.final_n_s / self.initial_n_m
    }
}

/// Nested swap schedule for `block`, optionally without the `β p_a` drive.
pub fn swap_schedule(
    params: &SystemParams,
    block: &SwapBlock,
    without_counter_drive: bool,
) -> Result<(PulseSchedule, usize)> {
    let spec = block.spec(params)?;
    let mut cycle = compile_nonlinear_swap(params, &spec)?;
    if without_counter_drive {
        for seg in cycle.segments.iter_mut() {
            seg.controls.retain(|c| c.0 != ControlTarget::DrivePa);
        }
    }
    let n = block
        .cycles
        .unwrap_or_else(|| (swap_timing(params, &spec).cycles_for_swap.round() as usize).max(1));
    Ok((repeat(&cycle, n), n))
}

pub fn run_swap(params: &SystemParams, block: &SwapBlock, without_counter_drive: bool) -> Result<SwapRun> {
    let (schedule, cycles) = swap_schedule(params, block, without_counter_drive)?;
    let model = DoubleCavityModel::new(params, CavityBasis::SymmetricAntisymmetric, block.dims)?;
    let psi = model.initial_state(Complex64::new(block.mechanical_alpha, 0.0))?;
    let opts = EvolveOptions {
        max_coefficient_change: block.max_coefficient_change,
        ..Default::default()
    };
    let (_, trajectory) = model.evolve(&psi, &schedule, &opts)?;
    let get = |name: &str| trajectory.last(name).unwrap_or(f64::NAN);
    let initial_n_m = trajectory
        .column("n_m")
        .and_then(|c| c.first().copied())
        .unwrap_or(f64::NAN);
    Ok(SwapRun {
        cycles,
        initial_n_m,
        final_n_m: get("n_m"),
        final_n_s: get("n_s"),
        final_n_a: get("n_a"),
        schedule,
        trajectory,
    })
}

/// Gaussian prediction for the swap: per cycle the free Hamiltonian
/// `Δn_s + νn_m` acts for the cycle length and the predicted quadratic
/// terms for `t'_f`. Returns `(t, n_s, n_m)` at every cycle end.
pub fn linear_swap_prediction(params: &SystemParams, block: &SwapBlock, cycles: usize) -> Result<Vec<(f64, f64, f64)>> {
    let spec = block.spec(params)?;
    let cycle = compile_nonlinear_swap(params, &spec)?;
    let t_cycle = cycle.total_time();
    // modes (s, m)
    let index = |q: &str| match q {
        "x_s" => Some(0),
        "p_s" => Some(1),
        "x_m" => Some(2),
        "p_m" => Some(3),
        _ => None,
    };
    let mut h = QuadraticHamiltonian::zeros(2);
    h.add_oscillator(0, params.delta).add_oscillator(1, params.nu);
    let scale = spec.tf_prime / t_cycle;
    for term in cycle.predicted.terms() {
        let op = term.operator.as_str();
        let parsed = if let Some(q) = op.strip_suffix("^2") {
            index(q).map(|i| (i, i))
        } else if let Some((a, b)) = op.split_once('*') {
            index(a).zip(index(b))
        } else {
            None
        };
        if let Some((i, j)) = parsed {
            h.add_product(i, j, term.coefficient * scale);
        }
    }
    let prop = segment_propagator(&h, t_cycle)?;
    let s = Matrix4::from_fn(|i, j| prop.s[(i, j)]);
    let d = Vector4::from_iterator(prop.d.iter().copied());
    let mut state = GaussianState::vacuum().displaced(1, Complex64::new(block.mechanical_alpha, 0.0));
    let mut out = vec![(0.0, photon_number(&state), phonon_number(&state))];
    for k in 1..=cycles {
        state = state.transformed(&s, &d);
        out.push((k as f64 * t_cycle, photon_number(&state), phonon_number(&state)));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Config {
    pub params: SystemParams,
    pub swap: SwapBlock,
    /// Added to every Fock dimension for the truncation check.
    pub extra_dims: usize,
}

impl Default for Fig4Config {
    fn default() -> Self {
        Self {
            params: SystemParams {
                g0: 0.3,
                delta: 1.0,
                ..Default::default()
            },
            swap: SwapBlock {
                alpha: 4.0,
                s: 0.1,
                t1: 0.0025,
                tf: 0.025,
                tf_prime: 0.3,
                dims: [5, 6, 9],
                mechanical_alpha: 1.0,
                cycles: None,
                max_coefficient_change: 0.01,
            },
            extra_dims: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Result {
    pub config: Fig4Config,
    pub cycles: usize,
    pub swap_time: f64,
    pub initial_n_m: f64,
    pub final_n_m: f64,
    pub final_n_s: f64,
    pub final_n_a: f64,
    /// `n_s(T)/n_m(0)`.
    pub transfer: f64,
    pub enlarged_transfer: f64,
    /// Relative change of `n_s(T)` with the enlarged truncation.
    pub truncation_change: f64,
}

pub fn reproduce_fig4(cfg: &Fig4Config) -> Result<(Fig4Result, FockTrajectory)> {
    let base = run_swap(&cfg.params, &cfg.swap, false)?;
    let mut big = cfg.swap.clone();
    big.dims.iter_mut().for_each(|d| *d += cfg.extra_dims);
    let enlarged = run_swap(&cfg.params, &big, false)?;
    let result = Fig4Result {
        config: cfg.clone(),
        cycles: base.cycles,
        swap_time: base.schedule.total_time(),
        initial_n_m: base.initial_n_m,
        final_n_m: base.final_n_m,
        final_n_s: base.final_n_s,
        final_n_a: base.final_n_a,
        transfer: base.transfer(),
        enlarged_transfer: enlarged.transfer(),
        truncation_change: (enlarged.final_n_s - base.final_n_s).abs() / base.final_n_s.abs().max(1e-300),
    };
    Ok((result, base.trajectory))
}

/// One row of the feasibility table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityItem {
    pub name: String,
    pub value: f64,
    pub unit: String,
    pub note: String,
}

/// Membrane setup: 1 MHz, 50 pg, 1 cm cavity at 1064 nm.
pub fn membrane_setup() -> FeasibilityInput {
    FeasibilityInput {
        nu_si: 2.0 * PI * 1e6,
        m_eff: 5e-11,
        cavity_length: 1e-2,
        wavelength: 1064e-9,
        kappa_si: 0.75 * 2.0 * PI * 1e6,
        q_factor: 2e4,
        t_env: 1.0,
    }
}

/// Short cavity setup: 10 kHz, 100 pg, cavity length 4λ.
pub fn short_cavity_setup() -> FeasibilityInput {
    FeasibilityInput {
        nu_si: 2.0 * PI * 1e4,
        m_eff: 1e-10,
        cavity_length: 4.0 * 1064e-9,
        wavelength: 1064e-9,
        kappa_si: 2.0 * PI * 1e4,
        q_factor: 2e4,
        t_env: 1.0,
    }
}

pub fn feasibility_table() -> Result<Vec<FeasibilityItem>> {
    let item = |name: &str, value: f64, unit: &str, note: &str| FeasibilityItem {
        name: name.into(),
        value,
        unit: unit.into(),
        note: note.into(),
    };
    let membrane = membrane_setup();
    let short = short_cavity_setup();
    let g0_m = derive_g0(&membrane)?;
    let g0_s = derive_g0(&short)?;
    let p_m = SystemParams::from_feasibility(&membrane, 1.0)?;
    let p_s = SystemParams::from_feasibility(&short, 1.0)?;
    let t10 = 0.75 * PERIOD;
    Ok(vec![
        item(
            "g0_membrane",
            g0_m,
            "Hz",
            "(ω_c/L)·x_zpf at ν = 2π·1 MHz, m = 5e-11 kg, L = 1 cm",
        ),
        item(
            "g0_short_cavity",
            g0_s,
            "Hz",
            "(ω_c/L)·x_zpf at ν = 2π·10 kHz, m = 1e-10 kg, L = 4λ",
        ),
        item("g0_membrane_nu", p_m.g0, "nu", "membrane coupling in units of ν"),
        item(
            "g0_short_cavity_nu",
            p_s.g0,
            "nu",
            "short-cavity coupling in units of ν",
        ),
        item(
            "omega_min_linear_membrane",
            pulse_power_requirement(&p_m, Regime::Linear)?,
            "nu",
            "Ω ≫ 10ν²/g0",
        ),
        item(
            "omega_min_nonlinear_short_cavity",
            pulse_power_requirement(&p_s, Regime::Nonlinear)?,
            "nu",
            "Ω g0 > 10²ν²",
        ),
        item(
            "membrane_thermal_occupation",
            membrane.thermal_occupation(),
            "",
            "Bose occupation at T_env = 1 K",
        ),
        item(
            "gamma_10_pulse_target",
            1.3,
            "nu",
            "cooling rate of the 10-pulse 0.75-period sequence",
        ),
        item(
            "required_ratio_10_pulse",
            (1.3 * t10).exp(),
            "",
            "n₀/n_f = exp(Γ t) for Γ = 1.3ν over 0.75 periods",
        ),
        item(
            "gamma_fig1_reference",
            cooling_rate(100.0, 2e-7, 0.57 * PERIOD)?,
            "nu",
            "ln(100 / 2e-7) over 0.57 periods",
        ),
    ])
}

pub fn feasibility_csv(items: &[FeasibilityItem]) -> Result<Vec<u8>> {
    csv_bytes(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["name", "value", "unit", "note"])?;
        for i in items {
            w.write_record([i.name.as_str(), &i.value.to_string(), &i.unit, &i.note])?;
        }
        w.flush()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cooling_rate_examples() {
        assert_eq!(cooling_rate(10.0, 10.0, 3.0).unwrap(), 0.0);
        let g = cooling_rate(100.0, 2e-7, 0.57 * PERIOD).unwrap();
        assert!((g - 5.6).abs() < 0.05, "{g}");
        assert_relative_eq!((1.3f64 * 0.75 * PERIOD).exp(), 459.0, max_relative = 0.01);
        assert!(matches!(cooling_rate(0.0, 1.0, 1.0), Err(Error::UndefinedRate(_))));
        assert!(matches!(cooling_rate(1.0, -1.0, 1.0), Err(Error::UndefinedRate(_))));
    }

    #[test]
    fn free_evolution_keeps_phonon_column_constant() {
        let sc = Scenario::from_json(r#"{"time_budget": 2.0, "dt": 0.1}"#).unwrap();
        let out = simulate(&sc).unwrap();
        let text = String::from_utf8(out.trajectory_csv).unwrap();
        let mut rows = text.lines();
        assert!(rows.next().unwrap().starts_with("t,n_phonon"));
        let n: Vec<f64> = rows.map(|r| r.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert_eq!(n.len(), 21);
        assert!(n.iter().all(|v| (v - 10.0).abs() < 1e-12));
        assert!(out.summary.cooling_rate.unwrap().abs() < 1e-12);
    }

    #[test]
    fn run_directory_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let sc = Scenario::from_json(
            r#"{"name": "bs", "seed": 7, "time_budget": 1.0, "dt": 0.05,
                "control": {"kind": "segments", "segments": [[0.3, -0.2, 0.5], [0.0, 0.4, 0.5]]}}"#,
        )
        .unwrap();
        let (a, _) = run_scenario(&sc, dir.path()).unwrap();
        let (b, _) = run_scenario(&sc, dir.path()).unwrap();
        assert_ne!(a, b);
        let read = |p: &Path| fs::read(p.join("trajectory.csv")).unwrap();
        assert_eq!(read(&a), read(&b));
        let manifest: Manifest = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest.seed, 7);
        assert!(manifest
            .files
            .iter()
            .any(|f| f.file == "trajectory.csv" && f.columns[0] == "t"));
        // the copied config reproduces the run
        let again = Scenario::load(&a.join("scenario.json")).unwrap();
        assert_eq!(simulate(&again).unwrap().trajectory_csv, read(&a));
    }

    #[test]
    fn lindblad_engine_runs_from_scenario() {
        let sc = Scenario::from_json(
            r#"{"time_budget": 0.5, "dt": 0.25, "engine": "lindblad", "params": {"g0_nu": 0.01},
                "initial": {"cavity": {"thermal": 0}, "mechanics": {"thermal": 0.5}},
                "fock": {"dims": [4, 8]}}"#,
        )
        .unwrap();
        let out = simulate(&sc).unwrap();
        // truncated thermal distribution at 8 levels
        assert!(
            (out.summary.initial_phonon_number - 0.5).abs() < 2e-3,
            "{:?}",
            out.summary
        );
    }

    #[test]
    fn feasibility_numbers() {
        let t = feasibility_table().unwrap();
        let get = |n: &str| t.iter().find(|i| i.name == n).unwrap().value;
        assert!((get("g0_membrane") / 75.0 - 1.0).abs() < 0.1);
        let g = get("g0_short_cavity");
        assert!(g > 1e5 && g < 1e7, "{g}");
        assert!((get("required_ratio_10_pulse") / 459.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn linear_prediction_conserves_excitations() {
        let cfg = Fig4Config::default();
        let mut p = cfg.params;
        p.g0 = 0.01;
        let pred = linear_swap_prediction(&p, &cfg.swap, 10).unwrap();
        assert_eq!(pred.len(), 11);
        assert!((pred[0].2 - 1.0).abs() < 1e-12);
        // swap rate s: a quarter of the swap after cycles_for_swap/4 cycles
        assert!(pred[10].1 > 0.0 && pred[10].2 < 1.0);
    }
}
