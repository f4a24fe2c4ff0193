//! Gaussian first and second moments of the cavity + mechanics system under
//! the linearized Hamiltonian
//! `H = Δa†a + νb†b + (G a + G* a†) x_m + |G|² x_m`
//! with cavity decay.
//!
//! Moments evolve as `d⟨R⟩/dt = M⟨R⟩ + σc` and `dγ/dt = Mγ + γMᵀ + D`,
//! with `γ_ij = 2Re{⟨R_iR_j⟩ − ⟨R_i⟩⟨R_j⟩}` so that the vacuum is `γ = 1`.

use std::io::Write;

use nalgebra::{DMatrix, Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::CouplingHistory;
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::quadratic::{symplectic_form, QuadraticHamiltonian};

/// Tolerance on the smallest eigenvalue of `γ + iσ`.
pub const UNCERTAINTY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: Vector4<f64>,
    pub gamma: Matrix4<f64>,
}

impl GaussianState {
    pub fn vacuum() -> Self {
        Self {
            mean: Vector4::zeros(),
            gamma: Matrix4::identity(),
        }
    }

    /// Thermal state with `n_c` photons and `n_m` phonons.
    pub fn thermal(n_c: f64, n_m: f64) -> Self {
        let (a, b) = (2.0 * n_c + 1.0, 2.0 * n_m + 1.0);
        Self {
            mean: Vector4::zeros(),
            gamma: Matrix4::from_diagonal(&Vector4::new(a, a, b, b)),
        }
    }

    /// Displaces mode `mode` (0 = cavity, 1 = mechanics) by the coherent
    /// amplitude `alpha`, so that `⟨x⟩ = √2 Re α`, `⟨p⟩ = √2 Im α`.
    pub fn displaced(mut self, mode: usize, alpha: Complex64) -> Self {
        self.mean[2 * mode] += std::f64::consts::SQRT_2 * alpha.re;
        self.mean[2 * mode + 1] += std::f64::consts::SQRT_2 * alpha.im;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(self.gamma.iter()).all(|v| v.is_finite())
    }

    /// Smallest eigenvalue of the real form of `γ + iσ`.
    pub fn uncertainty_margin(&self) -> f64 {
        let s = sigma4();
        let mut big = DMatrix::<f64>::zeros(8, 8);
        for i in 0..4 {
            for j in 0..4 {
                big[(i, j)] = self.gamma[(i, j)];
                big[(i + 4, j + 4)] = self.gamma[(i, j)];
                big[(i, j + 4)] = -s[(i, j)];
                big[(i + 4, j)] = s[(i, j)];
            }
        }
        big.symmetric_eigenvalues().min()
    }

    pub fn satisfies_uncertainty(&self) -> bool {
        self.uncertainty_margin() >= -UNCERTAINTY_TOL * self.gamma.amax().max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_finite() {
            return Err(Error::Domain("Gaussian state has non-finite entries".into()));
        }
        let asym = (self.gamma - self.gamma.transpose()).amax();
        if asym > 1e-9 * self.gamma.amax().max(1.0) {
            return Err(Error::Domain(format!(
                "covariance matrix is not symmetric ({asym:.3e})"
            )));
        }
        if !self.satisfies_uncertainty() {
            return Err(Error::Domain(format!(
                "covariance matrix violates the uncertainty relation (min eigenvalue {:.3e})",
                self.uncertainty_margin()
            )));
        }
        Ok(())
    }

    /// Applies the affine map `R → S R + d`.
    pub fn transformed(&self, s: &Matrix4<f64>, d: &Vector4<f64>) -> Self {
        Self {
            mean: s * self.mean + d,
            gamma: s * self.gamma * s.transpose(),
        }
    }
}

/// Total mechanical occupation, thermal plus coherent.
pub fn phonon_number(state: &GaussianState) -> f64 {
    thermal_phonon_number(state) + 0.5 * (state.mean[2].powi(2) + state.mean[3].powi(2))
}

/// Mechanical occupation from the covariance matrix alone.
pub fn thermal_phonon_number(state: &GaussianState) -> f64 {
    (state.gamma[(2, 2)] + state.gamma[(3, 3)] - 2.0) / 4.0
}

pub fn photon_number(state: &GaussianState) -> f64 {
    (state.gamma[(0, 0)] + state.gamma[(1, 1)] - 2.0) / 4.0 + 0.5 * (state.mean[0].powi(2) + state.mean[1].powi(2))
}

fn sigma4() -> Matrix4<f64> {
    let s = symplectic_form(2);
    Matrix4::from_fn(|i, j| s[(i, j)])
}

/// Linearized two-mode Hamiltonian for coupling `G`.
///
/// `Ga + G*a† = √2 (Re G · x_c − Im G · p_c)` and `a†a = (x² + p² − 1)/2`
/// with the constant dropped.
pub fn build_linear_hamiltonian(params: &SystemParams, g: Complex64) -> QuadraticHamiltonian {
    let mut h = QuadraticHamiltonian::zeros(2);
    h.add_oscillator(0, params.delta).add_oscillator(1, params.nu);
    h.add_product(0, 2, std::f64::consts::SQRT_2 * g.re)
        .add_product(1, 2, -std::f64::consts::SQRT_2 * g.im)
        .add_linear(2, g.norm_sqr());
    h
}

/// Dissipation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BathModel {
    /// `M = σV − (κ/2)P`, `D = (κ/2)P` with `P = diag(0, 1, 0, 1)`: damping
    /// acts on the momentum quadratures of both modes. Not completely
    /// positive for `κ > 0` (steady states can dip below the vacuum).
    Quadrature,
    /// Cavity amplitude decay at rate `κ` on both quadratures (Lindblad
    /// operator `√(2κ) a`) and a mechanical bath of damping `γ_m` at
    /// occupation `n̄`.
    #[default]
    Extended,
}

impl BathModel {
    /// The quadrature model can leave the physical state space, so the
    /// uncertainty check only applies to the extended model or to `κ = 0`.
    pub fn enforces_uncertainty(&self, params: &SystemParams) -> bool {
        match self {
            BathModel::Extended => true,
            BathModel::Quadrature => params.kappa == 0.0,
        }
    }
}

/// Drift matrix `M`.
pub fn drift_matrix(h: &QuadraticHamiltonian, params: &SystemParams, bath: BathModel) -> Matrix4<f64> {
    let g = h.generator();
    let mut m = Matrix4::from_fn(|i, j| g[(i, j)]);
    match bath {
        BathModel::Quadrature => {
            m[(1, 1)] -= params.kappa / 2.0;
            m[(3, 3)] -= params.kappa / 2.0;
        }
        BathModel::Extended => {
            m[(0, 0)] -= params.kappa;
            m[(1, 1)] -= params.kappa;
            m[(2, 2)] -= params.gamma_m / 2.0;
            m[(3, 3)] -= params.gamma_m / 2.0;
        }
    }
    m
}

/// Diffusion matrix `D` in `dγ/dt = Mγ + γMᵀ + D`.
pub fn diffusion_matrix(params: &SystemParams, bath: BathModel) -> Matrix4<f64> {
    let d = match bath {
        BathModel::Quadrature => Vector4::new(0.0, 0.5, 0.0, 0.5) * params.kappa,
        BathModel::Extended => {
            let c = 2.0 * params.kappa;
            let m = params.gamma_m * (2.0 * params.nbar_env + 1.0);
            Vector4::new(c, c, m, m)
        }
    };
    Matrix4::from_diagonal(&d)
}

/// Residual `Mγ + γMᵀ + D` of the Lyapunov equation.
pub fn lyapunov_residual(m: &Matrix4<f64>, d: &Matrix4<f64>, gamma: &Matrix4<f64>) -> Matrix4<f64> {
    m * gamma + gamma * m.transpose() + d
}

/// Exact propagator of the moment equations over a fixed step with constant
/// drift: `mean → Φ mean + b`, `γ → Φ γ Φᵀ + Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStep {
    pub phi: Matrix4<f64>,
    pub b: Vector4<f64>,
    pub q: Matrix4<f64>,
}

impl MomentStep {
    pub fn new(h: &QuadraticHamiltonian, params: &SystemParams, bath: BathModel, tau: f64) -> Self {
        let m = drift_matrix(h, params, bath);
        let d = diffusion_matrix(params, bath);
        let sc = sigma4() * Vector4::from_fn(|i, _| h.c[i]);

        let mut aug = DMatrix::<f64>::zeros(5, 5);
        for i in 0..4 {
            for j in 0..4 {
                aug[(i, j)] = m[(i, j)] * tau;
            }
            aug[(i, 4)] = sc[i] * tau;
        }
        let e = aug.exp();
        let phi = Matrix4::from_fn(|i, j| e[(i, j)]);
        let b = Vector4::from_fn(|i, _| e[(i, 4)]);

        // Van Loan: exp([[−M, D], [0, Mᵀ]]τ) = [[·, F12], [0, F22]], Q = F22ᵀ F12.
        let q = if d.amax() == 0.0 {
            Matrix4::zeros()
        } else {
            let mut vl = DMatrix::<f64>::zeros(8, 8);
            for i in 0..4 {
                for j in 0..4 {
                    vl[(i, j)] = -m[(i, j)] * tau;
                    vl[(i, j + 4)] = d[(i, j)] * tau;
                    vl[(i + 4, j + 4)] = m[(j, i)] * tau;
                }
            }
            let f = vl.exp();
            let f12 = Matrix4::from_fn(|i, j| f[(i, j + 4)]);
            let f22 = Matrix4::from_fn(|i, j| f[(i + 4, j + 4)]);
            let q = f22.transpose() * f12;
            (q + q.transpose()) * 0.5
        };
        Self { phi, b, q }
    }

    pub fn apply(&self, s: &GaussianState) -> GaussianState {
        let gamma = self.phi * s.gamma * self.phi.transpose() + self.q;
        GaussianState {
            mean: self.phi * s.mean + self.b,
            gamma: (gamma + gamma.transpose()) * 0.5,
        }
    }
}

/// Coupling input for [`propagate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Constant `G` for the given duration, back to back.
    Piecewise(Vec<(Complex64, f64)>),
    /// Sampled `G(t)`, linearly interpolated and integrated with RK4.
    Sampled(CouplingHistory),
}

impl Coupling {
    pub fn duration(&self) -> f64 {
        match self {
            Coupling::Piecewise(segs) => segs.iter().map(|s| s.1).sum(),
            Coupling::Sampled(h) => h.t_final(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagateOptions {
    pub dt: f64,
    pub bath: BathModel,
    /// Check `γ + iσ ⪰ 0` at every sample (where the bath model allows it).
    pub check_uncertainty: bool,
    /// Keep every step in the trajectory; otherwise only segment ends.
    pub record_steps: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            bath: BathModel::default(),
            check_uncertainty: true,
            record_steps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<GaussianState>,
}

impl Trajectory {
    fn push(&mut self, t: f64, s: GaussianState) {
        self.times.push(t);
        self.states.push(s);
    }

    pub fn last(&self) -> &GaussianState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn phonon_numbers(&self) -> Vec<f64> {
        self.states.iter().map(phonon_number).collect()
    }

    /// Columns `t, n_phonon, mean_0..3, gamma upper triangle (10 entries)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "n_phonon".to_string()];
        header.extend((0..4).map(|i| format!("mean_{i}")));
        for i in 0..4 {
            for j in i..4 {
                header.push(format!("gamma_{i}{j}"));
            }
        }
        w.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![t.to_string(), phonon_number(s).to_string()];
            row.extend(s.mean.iter().map(|v| v.to_string()));
            for i in 0..4 {
                for j in i..4 {
                    row.push(s.gamma[(i, j)].to_string());
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_state(s: &GaussianState, t: f64, check: bool) -> Result<()> {
    if !s.is_finite() {
        return Err(Error::Instability {
            t,
            detail: "non-finite moments".into(),
        });
    }
    if check && !s.satisfies_uncertainty() {
        return Err(Error::Instability {
            t,
            detail: format!(
                "uncertainty relation violated (min eigenvalue {:.3e})",
                s.uncertainty_margin()
            ),
        });
    }
    Ok(())
}

/// Propagates `state` under `coupling` up to `t_final`.
///
/// Piecewise-constant couplings use exact matrix-exponential steps of at
/// most `dt`; sampled couplings use classical RK4 with step `dt`. If the
/// coupling ends before `t_final` the remaining time is free evolution.
pub fn propagate(
    state: &GaussianState,
    params: &SystemParams,
    coupling: &Coupling,
    t_final: f64,
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(Error::Precondition(format!("dt must be positive, got {}", opts.dt)));
    }
    if !(t_final >= 0.0) {
        return Err(Error::Precondition(format!(
            "t_final must be non-negative, got {t_final}"
        )));
    }
    params.validate()?;
    let check = opts.check_uncertainty && opts.bath.enforces_uncertainty(params);
    match coupling {
        Coupling::Piecewise(segs) => propagate_piecewise(state, params, segs, t_final, opts, check),
        Coupling::Sampled(hist) => {
            if hist.t_final() + 1e-9 < t_final && !hist.is_empty() {
                return Err(Error::Precondition(format!(
                    "coupling history ends at {} before t_final = {t_final}",
                    hist.t_final()
                )));
            }
            propagate_rk4(state, params, hist, t_final, opts, check)
        }
    }
}

fn propagate_piecewise(
    state: &GaussianState,
    params: &SystemParams,
    segs: &[(Complex64, f64)],
    t_final: f64,
    opts: &PropagateOptions,
    check: bool,
) -> Result<Trajectory> {
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state.clone()],
    };
    let mut s = state.clone();
    let mut t = 0.0;
    let covered: f64 = segs.iter().map(|x| x.1).sum();
    let tail = (t_final - covered).max(0.0);
    let pieces = segs
        .iter()
        .copied()
        .chain((tail > 0.0).then_some((Complex64::new(0.0, 0.0), tail)));
    for (g, duration) in pieces {
        let duration = duration.min(t_final - t);
        if duration <= 0.0 {
            break;
        }
        if duration.is_nan() || !g.is_finite() {
            return Err(Error::Domain("non-finite coupling segment".into()));
        }
        let n = (duration / opts.dt - 1e-9).ceil().max(1.0) as usize;
        let h = build_linear_hamiltonian(params, g);
        let step = MomentStep::new(&h, params, opts.bath, duration / n as f64);
        for k in 0..n {
            s = step.apply(&s);
            let tk = t + duration * (k + 1) as f64 / n as f64;
            if opts.record_steps || k + 1 == n {
                check_state(&s, tk, check)?;
                traj.push(tk, s.clone());
            }
        }
        t += duration;
    }
    Ok(traj)
}

fn propagate_rk4(
    state: &GaussianState,
    params: &SystemParams,
    hist: &CouplingHistory,
    t_final: f64,
    opts: &PropagateOptions,
    check: bool,
) -> Result<Trajectory> {
    let d = diffusion_matrix(params, opts.bath);
    let sig = sigma4();
    let rhs = |t: f64, mean: &Vector4<f64>, gamma: &Matrix4<f64>| {
        let h = build_linear_hamiltonian(params, hist.value_at(t));
        let m = drift_matrix(&h, params, opts.bath);
        let c = Vector4::from_fn(|i, _| h.c[i]);
        (m * mean + sig * c, m * gamma + gamma * m.transpose() + d)
    };
    let n = (t_final / opts.dt - 1e-9).ceil().max(1.0) as usize;
    let h = t_final / n as f64;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![state.clone()],
    };
    let (mut x, mut g) = (state.mean, state.gamma);
    for k in 0..n {
        let t = k as f64 * h;
        let (a1, b1) = rhs(t, &x, &g);
        let (a2, b2) = rhs(t + h / 2.0, &(x + a1 * (h / 2.0)), &(g + b1 * (h / 2.0)));
        let (a3, b3) = rhs(t + h / 2.0, &(x + a2 * (h / 2.0)), &(g + b2 * (h / 2.0)));
        let (a4, b4) = rhs(t + h, &(x + a3 * h), &(g + b3 * h));
        x += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        g += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
        g = (g + g.transpose()) * 0.5;
        let s = GaussianState { mean: x, gamma: g };
        let tk = (k + 1) as f64 * h;
        if opts.record_steps || k + 1 == n {
            check_state(&s, tk, check)?;
            traj.push(tk, s);
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::PERIOD;
    use proptest::prelude::*;

    fn free_params(kappa: f64) -> SystemParams {
        SystemParams {
            kappa,
            ..Default::default()
        }
    }

    fn exact() -> PropagateOptions {
        PropagateOptions {
            dt: 0.01,
            ..Default::default()
        }
    }

    #[test]
    fn occupation_formulas() {
        assert_eq!(phonon_number(&GaussianState::vacuum()), 0.0);
        assert!((phonon_number(&GaussianState::thermal(0.0, 10.0)) - 10.0).abs() < 1e-15);
        let coh = GaussianState::vacuum().displaced(1, Complex64::new(1.0, 0.0));
        assert!((coh.mean[2] - 2f64.sqrt()).abs() < 1e-15);
        assert!((phonon_number(&coh) - 1.0).abs() < 1e-15);
        assert_eq!(thermal_phonon_number(&coh), 0.0);
    }

    #[test]
    fn hamiltonian_structure() {
        let p = SystemParams::default();
        let h0 = build_linear_hamiltonian(&p, Complex64::new(0.0, 0.0));
        assert_eq!(h0.v, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0; 4])));
        assert!(h0.c.amax() == 0.0);

        let hr = build_linear_hamiltonian(&p, Complex64::new(0.3, 0.0));
        assert!((hr.coefficient(0, 2) - 0.3 * 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(hr.coefficient(1, 2), 0.0);
        assert!((hr.c[2] - 0.09).abs() < 1e-15);

        let hi = build_linear_hamiltonian(&p, Complex64::new(0.0, 0.3));
        assert_eq!(hi.coefficient(0, 2), 0.0);
        assert!(hi.coefficient(1, 2).abs() > 0.0);
        for (i, j) in [(0, 1), (0, 3), (1, 3), (2, 3)] {
            assert_eq!(hi.coefficient(i, j), 0.0);
        }
    }

    #[test]
    fn hamiltonian_matches_operator_expansion() {
        // Evaluate (G a + G* a†) x_m on classical phase-space points, a = (x + ip)/√2.
        let p = SystemParams::default();
        let g = Complex64::new(0.4, -0.7);
        let h = build_linear_hamiltonian(&p, g);
        for r in [[0.3, -1.2, 0.8, 0.1], [1.0, 0.5, -0.4, 2.0]] {
            let a = Complex64::new(r[0], r[1]) / 2f64.sqrt();
            let coupling = ((g * a + g.conj() * a.conj()) * r[2]).re;
            let oracle =
                0.5 * (r[0] * r[0] + r[1] * r[1]) + 0.5 * (r[2] * r[2] + r[3] * r[3]) + coupling + g.norm_sqr() * r[2];
            let rv = nalgebra::DVector::from_row_slice(&r);
            let value = 0.5 * (rv.transpose() * &h.v * &rv)[0] + h.c.dot(&rv);
            assert!((value - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn drift_matrix_cases() {
        let zero = QuadraticHamiltonian::zeros(2);
        assert_eq!(
            drift_matrix(&zero, &free_params(0.0), BathModel::Quadrature),
            Matrix4::zeros()
        );
        let m = drift_matrix(&zero, &free_params(0.6), BathModel::Quadrature);
        assert_eq!(m, Matrix4::from_diagonal(&Vector4::new(0.0, -0.3, 0.0, -0.3)));
        let m = drift_matrix(&zero, &free_params(0.6), BathModel::Extended);
        assert_eq!(m, Matrix4::from_diagonal(&Vector4::new(-0.6, -0.6, 0.0, 0.0)));
    }

    #[test]
    fn free_drift_is_unit_rotation() {
        let p = SystemParams::default();
        let h = build_linear_hamiltonian(&p, Complex64::new(0.0, 0.0));
        let t: f64 = 0.7;
        let e = (drift_matrix(&h, &p, BathModel::Quadrature) * t).exp();
        let (c, s) = (t.cos(), t.sin());
        let rot = Matrix4::new(c, s, 0.0, 0.0, -s, c, 0.0, 0.0, 0.0, 0.0, c, s, 0.0, 0.0, -s, c);
        assert!((e - rot).amax() < 1e-14);
    }

    #[test]
    fn free_evolution_conserves_phonons() {
        let p = free_params(0.0);
        let s0 = GaussianState::thermal(0.0, 10.0).displaced(1, Complex64::new(0.5, 0.2));
        let traj = propagate(&s0, &p, &Coupling::Piecewise(vec![]), PERIOD, &exact()).unwrap();
        for n in traj.phonon_numbers() {
            assert!((n - phonon_number(&s0)).abs() < 1e-9);
        }
        assert!((traj.last().mean - s0.mean).amax() < 1e-9);
    }

    #[test]
    fn cavity_relaxes_and_mechanics_untouched() {
        // Decoupled Lyapunov solution: γ_c(t) = e^{−2κt}(2n+1) + 1 − e^{−2κt}.
        let p = free_params(1.0);
        let s0 = GaussianState::thermal(5.0, 0.0);
        let traj = propagate(&s0, &p, &Coupling::Piecewise(vec![]), 3.0, &exact()).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let e = (-2.0 * t).exp();
            let oracle = 11.0 * e + 1.0 - e;
            assert!((s.gamma[(0, 0)] - oracle).abs() < 1e-10);
            assert!((s.gamma[(1, 1)] - oracle).abs() < 1e-10);
            assert!((s.gamma[(2, 2)] - 1.0).abs() < 1e-12);
            assert!((s.gamma[(3, 3)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_bath_damps_momenta_only() {
        // Δ = ν = 0 isolates the dissipator: p variances relax to ½.
        let p = SystemParams {
            delta: 0.0,
            nu: 1e-300,
            kappa: 1.0,
            ..Default::default()
        };
        let opts = PropagateOptions {
            bath: BathModel::Quadrature,
            ..exact()
        };
        let s = propagate(
            &GaussianState::thermal(2.0, 2.0),
            &p,
            &Coupling::Piecewise(vec![]),
            2.0,
            &opts,
        )
        .unwrap();
        let g = s.last().gamma;
        let oracle = 5.0 * (-2.0f64).exp() + 0.5 * (1.0 - (-2.0f64).exp());
        assert!((g[(0, 0)] - 5.0).abs() < 1e-12);
        assert!((g[(1, 1)] - oracle).abs() < 1e-10);
        assert!((g[(3, 3)] - oracle).abs() < 1e-10);
    }

    #[test]
    fn exact_and_rk4_paths_agree() {
        let p = SystemParams {
            kappa: 0.3,
            gamma_m: 0.05,
            nbar_env: 1.0,
            ..Default::default()
        };
        let g = Complex64::new(0.2, 0.1);
        let s0 = GaussianState::thermal(0.5, 3.0).displaced(0, Complex64::new(0.3, 0.0));
        let a = propagate(&s0, &p, &Coupling::Piecewise(vec![(g, 4.0)]), 4.0, &exact()).unwrap();
        let hist = CouplingHistory {
            samples: vec![(0.0, g), (4.0, g)],
            dt: 4.0,
        };
        let opts = PropagateOptions {
            dt: 1e-3,
            ..Default::default()
        };
        let b = propagate(&s0, &p, &Coupling::Sampled(hist), 4.0, &opts).unwrap();
        assert!((a.last().gamma - b.last().gamma).amax() < 1e-9);
        assert!((a.last().mean - b.last().mean).amax() < 1e-9);
    }

    #[test]
    fn steady_state_solves_lyapunov() {
        let p = SystemParams {
            kappa: 0.5,
            gamma_m: 0.1,
            nbar_env: 2.0,
            ..Default::default()
        };
        let g = Complex64::new(0.1, 0.0);
        let h = build_linear_hamiltonian(&p, g);
        let m = drift_matrix(&h, &p, BathModel::Extended);
        let dm = DMatrix::from_fn(4, 4, |i, j| m[(i, j)]);
        assert!(dm.complex_eigenvalues().iter().all(|z| z.re < 0.0));
        let opts = PropagateOptions {
            dt: 1.0,
            record_steps: false,
            ..Default::default()
        };
        let s = propagate(
            &GaussianState::thermal(0.0, 10.0),
            &p,
            &Coupling::Piecewise(vec![(g, 600.0)]),
            600.0,
            &opts,
        )
        .unwrap();
        let r = lyapunov_residual(&m, &diffusion_matrix(&p, BathModel::Extended), &s.last().gamma);
        assert!(r.amax() < 1e-6, "residual {}", r.amax());
    }

    #[test]
    fn unphysical_state_is_reported() {
        let s0 = GaussianState {
            mean: Vector4::zeros(),
            gamma: Matrix4::identity() * 0.5,
        };
        let err = propagate(&s0, &free_params(0.0), &Coupling::Piecewise(vec![]), 0.1, &exact()).unwrap_err();
        assert!(matches!(err, Error::Instability { .. }));
    }

    #[test]
    fn csv_has_expected_columns() {
        let traj = propagate(
            &GaussianState::vacuum(),
            &free_params(0.0),
            &Coupling::Piecewise(vec![]),
            0.05,
            &exact(),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header.split(',').count(), 16);
        assert_eq!(text.lines().count(), traj.times.len() + 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn closed_evolution_keeps_determinant_at_least_one(
            gs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, 0.05f64..0.5), 1..6),
            n0 in 0.0f64..5.0,
        ) {
            let segs: Vec<_> = gs.iter().map(|&(a, b, d)| (Complex64::new(a, b), d)).collect();
            let total: f64 = segs.iter().map(|s| s.1).sum();
            let traj = propagate(&GaussianState::thermal(0.0, n0), &free_params(0.0), &Coupling::Piecewise(segs), total, &exact()).unwrap();
            for s in &traj.states {
                prop_assert!(s.gamma.determinant() >= 1.0 - 1e-8);
            }
        }
    }
}
