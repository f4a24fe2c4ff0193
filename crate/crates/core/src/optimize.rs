//! Optimization of piecewise-constant coupling schedules `G(t)`.
//!
//! The optimizer alternates projected BFGS descent stages (central
//! finite-difference gradients) with simulated-annealing stages. Every
//! evaluation propagates the Gaussian moments through the schedule.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bch::{compile_linear_beamsplitter, trotterize, Compensation, ControlTarget, Sideband};
use crate::covariance::{
    phonon_number, propagate, thermal_phonon_number, BathModel, Coupling, GaussianState, PropagateOptions,
};
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::PERIOD;

pub const REPORT_SCHEMA_VERSION: u32 = 1;
/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "OPTOPULSE_WORKERS";
pub const DEFAULT_SEGMENTS: usize = 30;

/// Worker threads from `OPTOPULSE_WORKERS`, defaulting to the available cores.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

fn project_value(g: Complex64, g_max: f64) -> Complex64 {
    let r = g.norm();
    if r <= g_max {
        return g;
    }
    let mut p = g * (g_max / r);
    while p.norm() > g_max {
        p *= 1.0 - f64::EPSILON;
    }
    p
}

/// Per-segment couplings over fixed segment durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlVector {
    pub values: Vec<Complex64>,
    pub durations: Vec<f64>,
    pub g_max: f64,
    /// Real couplings only (`x_c x_m` interaction).
    pub partial: bool,
}

impl ControlVector {
    /// Validates the layout and projects onto `|G_k| ≤ g_max`.
    pub fn new(values: Vec<Complex64>, durations: Vec<f64>, g_max: f64, partial: bool) -> Result<Self> {
        if values.is_empty() || values.len() != durations.len() {
            return Err(Error::Dimension(format!(
                "{} values for {} durations",
                values.len(),
                durations.len()
            )));
        }
        if !(g_max.is_finite() && g_max > 0.0) {
            return Err(Error::Domain(format!("g_max must be positive, got {g_max}")));
        }
        if let Some(d) = durations.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::Domain(format!("segment durations must be positive, got {d}")));
        }
        if values.iter().any(|g| !g.is_finite()) {
            return Err(Error::Domain("non-finite control value".into()));
        }
        let mut cv = Self {
            values,
            durations,
            g_max,
            partial,
        };
        cv.project();
        Ok(cv)
    }

    /// `n` equal segments spanning `total_time`, all zero.
    pub fn uniform(n: usize, total_time: f64, g_max: f64, partial: bool) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("segment count must be ≥ 1".into()));
        }
        Self::new(
            vec![Complex64::new(0.0, 0.0); n],
            vec![total_time / n as f64; n],
            g_max,
            partial,
        )
    }

    /// Uniformly distributed over the feasible disc (or interval when partial).
    pub fn random<R: rand::Rng>(n: usize, total_time: f64, g_max: f64, partial: bool, rng: &mut R) -> Result<Self> {
        let mut cv = Self::uniform(n, total_time, g_max, partial)?;
        for g in cv.values.iter_mut() {
            *g = if partial {
                Complex64::new(rng.random_range(-g_max..=g_max), 0.0)
            } else {
                let r = g_max * rng.random::<f64>().sqrt();
                Complex64::from_polar(r, rng.random_range(0.0..2.0 * PI))
            };
        }
        cv.project();
        Ok(cv)
    }

    pub fn from_segments(segments: &[(Complex64, f64)], g_max: f64, partial: bool) -> Result<Self> {
        Self::new(
            segments.iter().map(|s| s.0).collect(),
            segments.iter().map(|s| s.1).collect(),
            g_max,
            partial,
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    pub fn project(&mut self) {
        for g in self.values.iter_mut() {
            if self.partial {
                g.im = 0.0;
            }
            *g = project_value(*g, self.g_max);
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.values
            .iter()
            .all(|g| g.norm() <= self.g_max && (!self.partial || g.im == 0.0))
    }

    /// Optimization variables: `(Re G_k, Im G_k)` or `Re G_k` when partial.
    pub fn flat(&self) -> Vec<f64> {
        if self.partial {
            self.values.iter().map(|g| g.re).collect()
        } else {
            self.values.iter().flat_map(|g| [g.re, g.im]).collect()
        }
    }

    /// Sets the variables without projecting.
    pub fn with_flat(&self, x: &[f64]) -> Self {
        let mut out = self.clone();
        if self.partial {
            for (g, &v) in out.values.iter_mut().zip(x) {
                *g = Complex64::new(v, 0.0);
            }
        } else {
            for (k, g) in out.values.iter_mut().enumerate() {
                *g = Complex64::new(x[2 * k], x[2 * k + 1]);
            }
        }
        out
    }

    pub fn with_partial(&self, partial: bool) -> Self {
        let mut out = self.clone();
        out.partial = partial;
        out.project();
        out
    }

    pub fn coupling(&self) -> Coupling {
        Coupling::Piecewise(
            self.values
                .iter()
                .copied()
                .zip(self.durations.iter().copied())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    #[default]
    Final,
    MinOverTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupation {
    /// Phonon number of the fluctuations only.
    #[default]
    Thermal,
    /// Including the coherent displacement.
    Total,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptScenario {
    pub params: SystemParams,
    pub initial: GaussianState,
    /// Upper bound on the schedule length.
    pub time_budget: f64,
    #[serde(default)]
    pub objective: ObjectiveKind,
    #[serde(default)]
    pub occupation: Occupation,
    #[serde(default)]
    pub bath: BathModel,
}

impl OptScenario {
    /// Cavity in vacuum, mechanics thermal with `n0` phonons.
    pub fn thermal(params: SystemParams, n0: f64, time_budget: f64) -> Self {
        Self {
            params,
            initial: GaussianState::thermal(0.0, n0),
            time_budget,
            objective: ObjectiveKind::Final,
            occupation: Occupation::Thermal,
            bath: BathModel::default(),
        }
    }

    pub fn with_kappa(&self, kappa: f64) -> Self {
        let mut s = self.clone();
        s.params.kappa = kappa;
        s
    }

    fn occupation_of(&self, st: &GaussianState) -> f64 {
        match self.occupation {
            Occupation::Thermal => thermal_phonon_number(st),
            Occupation::Total => phonon_number(st),
        }
    }
}

/// Outcome of one schedule evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub objective: f64,
    pub final_phonon_number: f64,
    pub final_thermal_phonon_number: f64,
}

pub fn evaluate(control: &ControlVector, scenario: &OptScenario) -> Result<Evaluation> {
    let t_final = control.total_time();
    if t_final > scenario.time_budget * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "schedule length {t_final} exceeds the time budget {}",
            scenario.time_budget
        )));
    }
    let longest = control.durations.iter().copied().fold(0.0, f64::max);
    let opts = match scenario.objective {
        ObjectiveKind::Final => PropagateOptions {
            dt: longest,
            bath: scenario.bath,
            check_uncertainty: false,
            record_steps: false,
        },
        ObjectiveKind::MinOverTime => PropagateOptions {
            dt: longest.min(0.02),
            bath: scenario.bath,
            check_uncertainty: false,
            record_steps: true,
        },
    };
    let traj = propagate(&scenario.initial, &scenario.params, &control.coupling(), t_final, &opts)?;
    let last = traj.last();
    if !last.is_finite() {
        return Err(Error::Instability {
            t: t_final,
            detail: "non-finite moments".into(),
        });
    }
    let objective = match scenario.objective {
        ObjectiveKind::Final => scenario.occupation_of(last),
        ObjectiveKind::MinOverTime => traj
            .states
            .iter()
            .map(|s| scenario.occupation_of(s))
            .fold(f64::INFINITY, f64::min),
    };
    Ok(Evaluation {
        objective,
        final_phonon_number: phonon_number(last),
        final_thermal_phonon_number: thermal_phonon_number(last),
    })
}

/// Final (or minimum) phonon number; `+∞` when propagation fails.
pub fn objective(control: &ControlVector, scenario: &OptScenario) -> f64 {
    match evaluate(control, scenario) {
        Ok(e) if e.objective.is_finite() => e.objective,
        _ => f64::INFINITY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// Amplitude only, then amplitude and phase.
    #[serde(rename = "a")]
    AmplitudeThenPhase,
    /// Start from the supplied (analytic) seed.
    #[serde(rename = "b")]
    AnalyticSeed,
    /// Continuation over κ (or over time when κ = 0).
    #[serde(rename = "c")]
    Continuation,
    /// Independent random restarts.
    #[serde(rename = "d")]
    RandomRestart,
}

impl std::str::FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a" => Ok(Strategy::AmplitudeThenPhase),
            "b" => Ok(Strategy::AnalyticSeed),
            "c" => Ok(Strategy::Continuation),
            "d" => Ok(Strategy::RandomRestart),
            other => Err(Error::Domain(format!(
                "unknown strategy `{other}` (expected a, b, c or d)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub budget: usize,
    pub seed: u64,
    /// Finite-difference step as a fraction of `g_max`.
    pub fd_step: f64,
    pub descent_iterations: usize,
    pub anneal_batches: usize,
    pub batch_size: usize,
    pub temperature_decay: f64,
    /// Proposal standard deviation as a fraction of `g_max`.
    pub proposal_scale: f64,
    /// Number of starts for random-restart runs.
    pub restarts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            budget: 20_000,
            seed: 0,
            fd_step: 1e-6,
            descent_iterations: 60,
            anneal_batches: 4,
            batch_size: 50,
            temperature_decay: 0.95,
            proposal_scale: 0.05,
            restarts: 4,
        }
    }
}

impl OptimizerSettings {
    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Descent,
    Annealing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub kind: StageKind,
    pub label: String,
    pub evaluations_start: usize,
    pub evaluations_end: usize,
    pub objective_start: f64,
    pub objective_end: f64,
    pub accepted: usize,
}

/// Objective after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub stage: usize,
    pub evaluations: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub schema_version: u32,
    pub strategy: Strategy,
    pub seed: u64,
    pub budget: usize,
    pub evaluations: usize,
    pub initial_objective: f64,
    pub best_objective: f64,
    pub best: ControlVector,
    pub final_phonon_number: f64,
    pub final_thermal_phonon_number: f64,
    /// Schedule length in units of `2π/ν`.
    pub total_time_periods: f64,
    pub objective_kind: ObjectiveKind,
    pub occupation: Occupation,
    pub history: Vec<HistoryPoint>,
    pub stages: Vec<StageRecord>,
}

impl OptimizationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

struct Evaluator<'a> {
    scenario: &'a OptScenario,
    budget: usize,
    used: usize,
    best: Option<(f64, ControlVector)>,
    pool: &'a rayon::ThreadPool,
}

impl<'a> Evaluator<'a> {
    fn remaining(&self) -> usize {
        self.budget - self.used
    }

    /// Evaluates as many of `cvs` as the budget allows, in parallel.
    fn eval_many(&mut self, cvs: &[ControlVector], track: bool) -> Vec<f64> {
        let n = cvs.len().min(self.remaining());
        let scenario = self.scenario;
        let values: Vec<f64> = self
            .pool
            .install(|| cvs[..n].par_iter().map(|c| objective(c, scenario)).collect());
        self.used += n;
        if track {
            for (c, &f) in cvs[..n].iter().zip(&values) {
                self.offer(f, c);
            }
        }
        values
    }

    fn eval(&mut self, cv: &ControlVector) -> Option<f64> {
        self.eval_many(std::slice::from_ref(cv), true).first().copied()
    }

    fn offer(&mut self, f: f64, cv: &ControlVector) {
        if cv.is_feasible() && self.best.as_ref().is_none_or(|b| f < b.0) {
            self.best = Some((f, cv.clone()));
        }
    }

    /// Central-difference gradient, `None` when the budget cannot cover it.
    fn gradient(&mut self, cv: &ControlVector, h: f64) -> Option<Vec<f64>> {
        let x = cv.flat();
        let n = x.len();
        if self.remaining() < 2 * n {
            return None;
        }
        let probes: Vec<ControlVector> = (0..n)
            .flat_map(|i| {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[i] += h;
                dn[i] -= h;
                [cv.with_flat(&up), cv.with_flat(&dn)]
            })
            .collect();
        let f = self.eval_many(&probes, false);
        Some((0..n).map(|i| (f[2 * i] - f[2 * i + 1]) / (2.0 * h)).collect())
    }
}

/// Central-difference gradient of the objective with step `h`.
pub fn finite_difference_gradient(cv: &ControlVector, scenario: &OptScenario, h: f64) -> Vec<f64> {
    let x = cv.flat();
    (0..x.len())
        .map(|i| {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            (objective(&cv.with_flat(&up), scenario) - objective(&cv.with_flat(&dn), scenario)) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Run<'a, 'b> {
    ev: &'b mut Evaluator<'a>,
    settings: &'b OptimizerSettings,
    rng: &'b mut ChaCha8Rng,
    history: &'b mut Vec<HistoryPoint>,
    stages: &'b mut Vec<StageRecord>,
}

impl Run<'_, '_> {
    fn push_stage(&mut self, kind: StageKind, label: &str, e0: usize, f0: f64, f1: f64, accepted: usize) {
        self.stages.push(StageRecord {
            kind,
            label: label.into(),
            evaluations_start: e0,
            evaluations_end: self.ev.used,
            objective_start: f0,
            objective_end: f1,
            accepted,
        });
    }

    /// Projected BFGS with Armijo backtracking.
    fn descent(&mut self, start: ControlVector, f_start: f64, label: &str) -> (ControlVector, f64) {
        let e0 = self.ev.used;
        let stage = self.stages.len();
        let h = self.settings.fd_step * start.g_max;
        let (mut cv, mut f) = (start, f_start);
        let mut accepted = 0;
        let Some(mut g) = self.ev.gradient(&cv, h) else {
            return (cv, f);
        };
        let n = g.len();
        let base_scale = |g: &[f64]| 0.1 * cv_gmax(g);
        fn cv_gmax(g: &[f64]) -> f64 {
            1.0 / g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300)
        }
        let g_max = cv.g_max;
        let identity = |scale: f64| {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                m[i * n + i] = scale;
            }
            m
        };
        let mut hinv = identity(base_scale(&g) * g_max);
        for _ in 0..self.settings.descent_iterations {
            if !f.is_finite() {
                break;
            }
            let mut d: Vec<f64> = (0..n).map(|i| -dot(&hinv[i * n..(i + 1) * n], &g)).collect();
            if dot(&d, &g) >= 0.0 {
                hinv = identity(base_scale(&g) * g_max);
                d = (0..n).map(|i| -hinv[i * n + i] * g[i]).collect();
            }
            let x = cv.flat();
            let mut alpha = 1.0;
            let mut step = None;
            for _ in 0..30 {
                let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + alpha * b).collect();
                let mut cand = cv.with_flat(&trial);
                cand.project();
                let xs = cand.flat();
                let s: Vec<f64> = xs.iter().zip(&x).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &s);
                if s.iter().all(|v| *v == 0.0) {
                    break;
                }
                let Some(fc) = self.ev.eval(&cand) else { break };
                if fc <= f + 1e-4 * decrease.min(0.0) && fc < f {
                    step = Some((cand, fc, s));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((cand, fc, s)) = step else { break };
            let Some(g_new) = self.ev.gradient(&cand, h) else {
                cv = cand;
                f = fc;
                accepted += 1;
                self.history.push(HistoryPoint {
                    stage,
                    evaluations: self.ev.used,
                    objective: f,
                });
                break;
            };
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                // H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ
                let rho = 1.0 / sy;
                let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], &y)).collect();
                let yhy = dot(&y, &hy);
                for i in 0..n {
                    for j in 0..n {
                        hinv[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                    }
                }
            }
            let improvement = f - fc;
            cv = cand;
            f = fc;
            g = g_new;
            accepted += 1;
            self.history.push(HistoryPoint {
                stage,
                evaluations: self.ev.used,
                objective: f,
            });
            if improvement <= 1e-14 * f.abs().max(1e-300) {
                break;
            }
        }
        self.push_stage(StageKind::Descent, label, e0, f_start, f, accepted);
        (cv, f)
    }

    /// Metropolis batches around the current point with geometric cooling.
    fn anneal(&mut self, start: ControlVector, f_start: f64, label: &str) -> (ControlVector, f64) {
        let e0 = self.ev.used;
        let stage = self.stages.len();
        let (mut cv, mut f) = (start, f_start);
        let mut temperature = f_start.abs().max(1e-300);
        let normal = Normal::new(0.0, self.settings.proposal_scale * cv.g_max).expect("finite scale");
        let mut accepted = 0;
        for _ in 0..self.settings.anneal_batches {
            if self.ev.remaining() == 0 {
                break;
            }
            let x = cv.flat();
            let proposals: Vec<ControlVector> = (0..self.settings.batch_size)
                .map(|_| {
                    let trial: Vec<f64> = x.iter().map(|v| v + normal.sample(self.rng)).collect();
                    let mut c = cv.with_flat(&trial);
                    c.project();
                    c
                })
                .collect();
            let values = self.ev.eval_many(&proposals, true);
            for (p, fp) in proposals.into_iter().zip(values) {
                let u: f64 = self.rng.random();
                if fp.is_finite() && (fp <= f || u < (-(fp - f) / temperature).exp()) {
                    cv = p;
                    f = fp;
                    accepted += 1;
                    self.history.push(HistoryPoint {
                        stage,
                        evaluations: self.ev.used,
                        objective: f,
                    });
                }
            }
            temperature *= self.settings.temperature_decay;
        }
        self.push_stage(StageKind::Annealing, label, e0, f_start, f, accepted);
        (cv, f)
    }

    /// Alternating descent and annealing until the budget share is spent.
    fn hybrid(&mut self, start: ControlVector, budget: usize, label: &str) -> (ControlVector, f64) {
        let stop = (self.ev.used + budget).min(self.ev.budget);
        let saved = self.ev.budget;
        self.ev.budget = stop;
        let mut cv = start;
        let Some(mut f) = self.ev.eval(&cv) else {
            self.ev.budget = saved;
            return (cv.clone(), f64::INFINITY);
        };
        while self.ev.remaining() > 0 {
            let before = self.ev.used;
            (cv, f) = self.descent(cv, f, &format!("{label}/descent"));
            if self.ev.remaining() == 0 {
                break;
            }
            (cv, f) = self.anneal(cv, f, &format!("{label}/annealing"));
            if self.ev.used == before {
                break;
            }
        }
        self.ev.budget = saved;
        (cv, f)
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Precondition(format!("cannot start worker threads: {e}")))
}

/// Runs the hybrid optimizer from `initial` under `strategy`.
///
/// The best feasible control found is returned, so the result never exceeds
/// the objective of the (projected) initial control.
pub fn optimize(
    initial: &ControlVector,
    scenario: &OptScenario,
    strategy: Strategy,
    settings: &OptimizerSettings,
) -> Result<OptimizationReport> {
    if settings.budget == 0 {
        return Err(Error::Domain("evaluation budget must be ≥ 1".into()));
    }
    scenario.params.validate()?;
    let mut start = initial.clone();
    start.project();
    if start.total_time() > scenario.time_budget * (1.0 + 1e-12) {
        return Err(Error::Precondition(format!(
            "control spans {} but the time budget is {}",
            start.total_time(),
            scenario.time_budget
        )));
    }
    let pool = thread_pool()?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut history = Vec::new();
    let mut stages = Vec::new();

    let (initial_objective, best_objective, best, evaluations) = match strategy {
        Strategy::Continuation if scenario.params.kappa > 0.0 || settings.budget >= 3 => {
            let mut cv = start.clone();
            let initial_objective = objective(&start, scenario);
            let mut used = 1;
            let ladder: Vec<OptScenario> = if scenario.params.kappa > 0.0 {
                [0.0, 0.5, 1.0]
                    .iter()
                    .map(|s| scenario.with_kappa(scenario.params.kappa * s))
                    .collect()
            } else {
                vec![scenario.clone(); 3]
            };
            let time_scales = if scenario.params.kappa > 0.0 {
                [1.0; 3]
            } else {
                [0.5, 0.75, 1.0]
            };
            let share = (settings.budget - 1) / ladder.len();
            for (k, (sc, ts)) in ladder.iter().zip(time_scales).enumerate() {
                let mut rung = cv.clone();
                let scale = ts * start.total_time() / rung.total_time();
                rung.durations.iter_mut().for_each(|d| *d *= scale);
                let mut ev = Evaluator {
                    scenario: sc,
                    budget: if k + 1 == ladder.len() {
                        settings.budget - used
                    } else {
                        share
                    },
                    used: 0,
                    best: None,
                    pool: &pool,
                };
                let mut run = Run {
                    ev: &mut ev,
                    settings,
                    rng: &mut rng,
                    history: &mut history,
                    stages: &mut stages,
                };
                let budget = run.ev.budget;
                run.hybrid(rung.clone(), budget, &format!("rung{k}"));
                used += ev.used;
                if let Some((_, b)) = ev.best {
                    cv = b;
                }
            }
            // the final rung runs the target scenario; keep the seed if it was better
            let f = objective(&cv, scenario);
            let (bf, b) = if f <= initial_objective {
                (f, cv)
            } else {
                (initial_objective, start.clone())
            };
            (initial_objective, bf, b, used.min(settings.budget))
        }
        _ => {
            let mut ev = Evaluator {
                scenario,
                budget: settings.budget,
                used: 0,
                best: None,
                pool: &pool,
            };
            let initial_objective = ev.eval(&start).expect("budget ≥ 1");
            let mut run = Run {
                ev: &mut ev,
                settings,
                rng: &mut rng,
                history: &mut history,
                stages: &mut stages,
            };
            match strategy {
                Strategy::AmplitudeThenPhase => {
                    let half = (settings.budget - 1) / 2;
                    let (cv, _) = run.hybrid(start.with_partial(true), half, "amplitude");
                    let rest = run.ev.remaining();
                    run.hybrid(cv.with_partial(start.partial), rest, "amplitude_phase");
                }
                Strategy::RandomRestart => {
                    let k = settings.restarts.max(1);
                    let share = (settings.budget - 1) / k;
                    for r in 0..k {
                        let s = if r == 0 {
                            start.clone()
                        } else {
                            let mut c = ControlVector::random(start.len(), 1.0, start.g_max, start.partial, run.rng)?;
                            c.durations = start.durations.clone();
                            c
                        };
                        let b = if r + 1 == k { run.ev.remaining() } else { share };
                        run.hybrid(s, b, &format!("restart{r}"));
                    }
                }
                _ => {
                    let rest = run.ev.remaining();
                    run.hybrid(start.clone(), rest, "hybrid");
                }
            }
            let (bf, b) = ev.best.clone().expect("initial point evaluated");
            (initial_objective, bf, b, ev.used)
        }
    };

    let e = evaluate(&best, scenario).ok();
    Ok(OptimizationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        strategy,
        seed: settings.seed,
        budget: settings.budget,
        evaluations,
        initial_objective,
        best_objective,
        final_phonon_number: e.map_or(f64::INFINITY, |e| e.final_phonon_number),
        final_thermal_phonon_number: e.map_or(f64::INFINITY, |e| e.final_thermal_phonon_number),
        total_time_periods: best.total_time() / (PERIOD / scenario.params.nu),
        objective_kind: scenario.objective,
        occupation: scenario.occupation,
        best,
        history,
        stages,
    })
}

/// Red-sideband four-segment cycle (pulse, free, counter-pulse,
/// compensation) repeated `repetitions` times.
///
/// Pulses run at `|G| = g_max`; the compensation keeps its area at
/// `|G| ≤ g_max`. The cycles jointly target a complete swap, using the
/// shortest pulses that fit `time_budget`; when no full swap fits, the
/// largest swap angle that does is used.
pub fn analytic_seed(params: &SystemParams, g_max: f64, time_budget: f64, repetitions: f64) -> Result<ControlVector> {
    if !(time_budget > 0.0 && g_max > 0.0) {
        return Err(Error::Domain("time budget and g_max must be positive".into()));
    }
    if !(repetitions.is_finite() && repetitions >= 1.0) {
        return Err(Error::Domain(format!("repetitions must be ≥ 1, got {repetitions}")));
    }
    let gp = SQRT_2 * g_max;
    let (r, delta) = (repetitions, params.delta.abs());
    // per cycle: t₁·t_f = k, length 2t₁ + t_f + 2Δk
    let k_full = PI / (2.0 * r * gp * params.nu);
    let length = |t1: f64, k: f64| r * (2.0 * t1 + k / t1 + 2.0 * delta * k);
    let budget = time_budget * (1.0 - 1e-9);
    let (t1, k) = {
        let room = budget / r - 2.0 * delta * k_full;
        let disc = room * room - 8.0 * k_full;
        if room > 0.0 && disc >= 0.0 {
            ((room - disc.sqrt()) / 4.0, k_full)
        } else {
            // shortest cycle for a given k sits at t₁ = √(k/2): 2√(2k) + 2Δk = B/r
            let b = budget / r;
            let sk = if delta > 0.0 {
                (-2.0 * SQRT_2 + (8.0 + 8.0 * delta * b).sqrt()) / (4.0 * delta)
            } else {
                b / (2.0 * SQRT_2)
            };
            let k = sk * sk;
            ((k / 2.0).sqrt(), k)
        }
    };
    let tf = k / t1;
    let mut cycle = compile_linear_beamsplitter(params, gp, t1, tf, Sideband::Red, Compensation::Separate)?;
    if let Some(comp) = cycle.segments.last_mut() {
        let area = comp.amplitude(ControlTarget::GReal) * comp.duration;
        if area.abs() > 0.0 {
            let amp = area.signum() * gp;
            comp.controls = vec![(ControlTarget::GReal, amp)];
            comp.duration = area / amp;
        }
    }
    // stretch to r cycles' worth of time so the Trotter split restores the cycle
    let mut base = cycle.clone();
    base.segments.iter_mut().for_each(|s| s.duration *= r);
    let sched = trotterize(&base, r)?;
    let segs = sched.to_coupling_segments()?;
    debug_assert!(length(t1, k) <= time_budget);
    ControlVector::from_segments(&segs, g_max, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStrategy {
    RandomPartial,
    RandomFull,
    Analytic30,
    Analytic300,
}

impl SweepStrategy {
    pub const ALL: [SweepStrategy; 4] = [
        SweepStrategy::RandomPartial,
        SweepStrategy::RandomFull,
        SweepStrategy::Analytic30,
        SweepStrategy::Analytic300,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepStrategy::RandomPartial => "random_partial",
            SweepStrategy::RandomFull => "random_full",
            SweepStrategy::Analytic30 => "analytic_30",
            SweepStrategy::Analytic300 => "analytic_300",
        }
    }

    /// Starting control for this protocol arm.
    pub fn seed_control(&self, scenario: &OptScenario, g_max: f64, seed: u64) -> Result<ControlVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = scenario.time_budget;
        match self {
            SweepStrategy::RandomPartial => ControlVector::random(DEFAULT_SEGMENTS, t, g_max, true, &mut rng),
            SweepStrategy::RandomFull => ControlVector::random(DEFAULT_SEGMENTS, t, g_max, false, &mut rng),
            SweepStrategy::Analytic30 => analytic_seed(&scenario.params, g_max, t, 7.5),
            SweepStrategy::Analytic300 => analytic_seed(&scenario.params, g_max, t, 75.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: f64,
    pub strategy: SweepStrategy,
    pub segments: usize,
    pub before: f64,
    pub after: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub seed: u64,
    pub budget: usize,
    pub rows: Vec<SweepRow>,
    /// Expected trends that did not hold.
    pub trend_violations: Vec<String>,
}

impl SweepTable {
    pub fn row(&self, kappa: f64, strategy: SweepStrategy) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.kappa == kappa && r.strategy == strategy)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["kappa", "strategy", "segments", "before", "after", "evaluations"])?;
        for r in &self.rows {
            w.write_record([
                r.kappa.to_string(),
                r.strategy.name().to_string(),
                r.segments.to_string(),
                format!("{:.10e}", r.before),
                format!("{:.10e}", r.after),
                r.evaluations.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fig. 2 protocol: every strategy at every κ with the same budget.
pub fn kappa_sweep(
    template: &OptScenario,
    g_max: f64,
    kappas: &[f64],
    strategies: &[SweepStrategy],
    settings: &OptimizerSettings,
) -> Result<SweepTable> {
    if kappas.is_empty() || strategies.is_empty() {
        return Err(Error::Domain("κ list and strategy list must be nonempty".into()));
    }
    let mut jobs = Vec::new();
    for (i, &kappa) in kappas.iter().enumerate() {
        for (j, &s) in strategies.iter().enumerate() {
            jobs.push((i, kappa, j, s));
        }
    }
    let run = |&(i, kappa, j, s): &(usize, f64, usize, SweepStrategy)| -> Result<SweepRow> {
        let sc = template.with_kappa(kappa);
        // random starts share a seed across κ so the arms differ only by κ
        let seed = settings.seed.wrapping_add(1000 * j as u64 + 1);
        let start = s.seed_control(&sc, g_max, seed)?;
        let rs = OptimizerSettings {
            seed: settings.seed.wrapping_add((i * 1000 + j) as u64),
            ..*settings
        };
        let report = optimize(&start, &sc, Strategy::AnalyticSeed, &rs)?;
        Ok(SweepRow {
            kappa,
            strategy: s,
            segments: start.len(),
            before: report.initial_objective,
            after: report.best_objective,
            evaluations: report.evaluations,
        })
    };
    let pool = thread_pool()?;
    let rows: Vec<SweepRow> = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    let mut trend_violations = Vec::new();
    for r in &rows {
        if r.after > r.before {
            trend_violations.push(format!(
                "κ = {}: {} optimized {} above its seed {}",
                r.kappa,
                r.strategy.name(),
                r.after,
                r.before
            ));
        }
    }
    for &kappa in kappas {
        let get = |s| rows.iter().find(|r| r.kappa == kappa && r.strategy == s);
        if let (Some(a), Some(rf)) = (get(SweepStrategy::Analytic30), get(SweepStrategy::RandomFull)) {
            if a.after > rf.after {
                trend_violations.push(format!(
                    "κ = {kappa}: analytic 30-pulse result {} above random-start {}",
                    a.after, rf.after
                ));
            }
        }
    }
    Ok(SweepTable {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: settings.seed,
        budget: settings.budget,
        rows,
        trend_violations,
    })
}

/// Reports for successive κ values, each seeded with the previous optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationResult {
    pub kappas: Vec<f64>,
    pub reports: Vec<OptimizationReport>,
    /// Non-monotone steps of the final occupation in κ.
    pub trend_violations: Vec<String>,
}

pub fn continuation(
    initial: &ControlVector,
    template: &OptScenario,
    kappas: &[f64],
    settings: &OptimizerSettings,
) -> Result<ContinuationResult> {
    if kappas.is_empty() {
        return Err(Error::Domain("κ list must be nonempty".into()));
    }
    let mut cv = initial.clone();
    let mut reports: Vec<OptimizationReport> = Vec::new();
    let mut trend_violations = Vec::new();
    for &kappa in kappas {
        let r = optimize(&cv, &template.with_kappa(kappa), Strategy::AnalyticSeed, settings)?;
        if let Some(prev) = reports.last() {
            if r.best_objective < prev.best_objective {
                trend_violations.push(format!(
                    "κ = {kappa}: {} below the previous κ's {}",
                    r.best_objective, prev.best_objective
                ));
            }
        }
        cv = r.best.clone();
        reports.push(r);
    }
    Ok(ContinuationResult {
        kappas: kappas.to_vec(),
        reports,
        trend_violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::{prop, prop_assert, proptest, ProptestConfig};

    fn fig2_scenario(kappa: f64) -> OptScenario {
        OptScenario::thermal(SystemParams::default().with_kappa(kappa), 10.0, 0.8 * PERIOD)
    }

    #[test]
    fn zero_control_leaves_thermal_occupation() {
        let sc = fig2_scenario(0.0);
        let cv = ControlVector::uniform(10, sc.time_budget, 10.0, false).unwrap();
        assert_abs_diff_eq!(objective(&cv, &sc), 10.0, epsilon = 1e-9);
    }

    #[test]
    fn projection_enforces_bound_exactly() {
        let cv = ControlVector::new(
            vec![
                Complex64::new(3.0, 4.0),
                Complex64::new(0.1, 0.2),
                Complex64::new(-7.0, 7.0),
            ],
            vec![0.1; 3],
            1.0 / 3.0,
            false,
        )
        .unwrap();
        assert!(cv.is_feasible());
        assert!(cv.values.iter().all(|g| g.norm() <= 1.0 / 3.0));
        let p = cv.with_partial(true);
        assert!(p.values.iter().all(|g| g.im == 0.0) && p.is_feasible());
    }

    #[test]
    fn invalid_controls_rejected() {
        assert!(ControlVector::uniform(0, 1.0, 1.0, false).is_err());
        assert!(ControlVector::new(vec![Complex64::new(0.0, 0.0)], vec![-1.0], 1.0, false).is_err());
        assert!(ControlVector::new(vec![Complex64::new(0.0, 0.0)], vec![1.0], 0.0, false).is_err());
    }

    #[test]
    fn over_budget_schedule_is_infinite() {
        let sc = fig2_scenario(0.0);
        let cv = ControlVector::uniform(4, 2.0 * sc.time_budget, 1.0, false).unwrap();
        assert!(objective(&cv, &sc).is_infinite());
    }

    #[test]
    fn analytic_seed_cools_within_budget() {
        let sc = fig2_scenario(0.0);
        let seed = analytic_seed(&sc.params, 10.0, sc.time_budget, 7.5).unwrap();
        // half of the last cycle spans two or three segments depending on timing
        assert!((30..=31).contains(&seed.len()), "{}", seed.len());
        assert!(seed.total_time() <= sc.time_budget);
        assert!(seed.is_feasible());
        let f = objective(&seed, &sc);
        assert!(f < 10.0, "analytic seed objective {f}");
        let long = analytic_seed(&sc.params, 10.0, sc.time_budget, 75.0).unwrap();
        assert!((300..=301).contains(&long.len()), "{}", long.len());
        assert!(objective(&long, &sc) < 10.0);
    }

    #[test]
    fn budget_one_returns_initial_point() {
        let sc = fig2_scenario(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cv = ControlVector::random(6, sc.time_budget, 2.0, false, &mut rng).unwrap();
        let r = optimize(
            &cv,
            &sc,
            Strategy::AnalyticSeed,
            &OptimizerSettings::default().with_budget(1),
        )
        .unwrap();
        assert_eq!(r.evaluations, 1);
        assert_eq!(r.best, cv);
        assert_eq!(r.best_objective, r.initial_objective);
    }

    #[test]
    fn optimizer_improves_and_is_deterministic() {
        let sc = fig2_scenario(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cv = ControlVector::random(8, sc.time_budget, 2.0, false, &mut rng).unwrap();
        let settings = OptimizerSettings::default().with_budget(600).with_seed(5);
        let a = optimize(&cv, &sc, Strategy::AnalyticSeed, &settings).unwrap();
        let b = optimize(&cv, &sc, Strategy::AnalyticSeed, &settings).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.best_objective < a.initial_objective);
        assert!(a.evaluations <= 600);
        assert!(a.best.is_feasible());
        // accepted descent steps never increase the objective
        for stage in 0..a.stages.len() {
            if a.stages[stage].kind != StageKind::Descent {
                continue;
            }
            let h: Vec<f64> = a
                .history
                .iter()
                .filter(|p| p.stage == stage)
                .map(|p| p.objective)
                .collect();
            assert!(h.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn every_strategy_respects_budget_and_seed() {
        let sc = fig2_scenario(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cv = ControlVector::random(5, sc.time_budget, 2.0, false, &mut rng).unwrap();
        for s in [
            Strategy::AmplitudeThenPhase,
            Strategy::AnalyticSeed,
            Strategy::Continuation,
            Strategy::RandomRestart,
        ] {
            let r = optimize(&cv, &sc, s, &OptimizerSettings::default().with_budget(300)).unwrap();
            assert!(r.evaluations <= 300, "{s:?} used {}", r.evaluations);
            assert!(r.best_objective <= r.initial_objective, "{s:?}");
            assert!(r.best.is_feasible());
            assert!(r.best.total_time() <= sc.time_budget * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gradient_matches_finer_stencil() {
        let sc = fig2_scenario(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let cv = ControlVector::random(6, sc.time_budget, 2.0, false, &mut rng).unwrap();
            let h = 1e-6 * cv.g_max;
            let g1 = finite_difference_gradient(&cv, &sc, h);
            let g2 = finite_difference_gradient(&cv, &sc, h / 2.0);
            let scale = g2.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (a, b) in g1.iter().zip(&g2) {
                assert!((a - b).abs() <= 1e-3 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("c".parse::<Strategy>().unwrap(), Strategy::Continuation);
        assert!("e".parse::<Strategy>().is_err());
        assert_eq!(serde_json::to_string(&Strategy::AmplitudeThenPhase).unwrap(), "\"a\"");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn objective_nonnegative_without_decay(vals in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..6)) {
            let sc = fig2_scenario(0.0);
            let n = vals.len();
            let cv = ControlVector::new(
                vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect(),
                vec![sc.time_budget / n as f64; n],
                2.0,
                false,
            ).unwrap();
            prop_assert!(cv.is_feasible());
            prop_assert!(objective(&cv, &sc) >= -1e-9);
        }
    }
}
