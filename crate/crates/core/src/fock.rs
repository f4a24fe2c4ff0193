//! Truncated Fock-space simulation of the full optomechanical Hamiltonians.
//!
//! Operators are sparse CSR matrices over the product basis (last mode
//! fastest). Pure states are dense vectors and density matrices are dense
//! square arrays. Time-dependent generators are linear combinations of fixed
//! operators whose coefficients are frozen at each step midpoint; each step is
//! integrated with a Taylor series of the exponential action.

use std::f64::consts::SQRT_2;
use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::bch::{ControlTarget, PulseSchedule};
use crate::drive::DriveSegment;
use crate::error::{Error, Result};
use crate::params::SystemParams;

pub const DEFAULT_STATE_BUDGET: usize = 200_000;
pub const DEFAULT_DENSITY_BUDGET: usize = 1_000;
pub const NORM_TOLERANCE: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Sparse operator over the truncated product basis.
pub type Operator = CsMat<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Cavity,
    Symmetric,
    Antisymmetric,
    Mechanical,
}

impl ModeLabel {
    pub fn short(&self) -> &'static str {
        match self {
            ModeLabel::Cavity => "c",
            ModeLabel::Symmetric => "s",
            ModeLabel::Antisymmetric => "a",
            ModeLabel::Mechanical => "m",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FockConfig {
    pub dims: Vec<usize>,
    pub labels: Vec<ModeLabel>,
    pub budget: usize,
}

impl FockConfig {
    pub fn new(dims: Vec<usize>, labels: Vec<ModeLabel>) -> Result<Self> {
        Self::with_budget(dims, labels, DEFAULT_STATE_BUDGET)
    }

    pub fn with_budget(dims: Vec<usize>, labels: Vec<ModeLabel>, budget: usize) -> Result<Self> {
        let cfg = Self { dims, labels, budget };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() != self.labels.len() {
            return Err(Error::Dimension(format!(
                "{} dims for {} mode labels",
                self.dims.len(),
                self.labels.len()
            )));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(Error::Domain(format!("every mode needs at least 2 levels, got {d}")));
        }
        let dim = self
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .unwrap_or(usize::MAX);
        if dim > self.budget {
            return Err(Error::Budget {
                dim,
                budget: self.budget,
            });
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Index of the first mode carrying `label`.
    pub fn mode(&self, label: ModeLabel) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Same layout with every dimension increased by `extra`.
    pub fn enlarged(&self, extra: usize) -> Result<Self> {
        Self::with_budget(
            self.dims.iter().map(|d| d + extra).collect(),
            self.labels.clone(),
            self.budget,
        )
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    /// Occupation of `mode` in basis state `index`.
    pub fn level(&self, index: usize, mode: usize) -> usize {
        (index / self.strides()[mode]) % self.dims[mode]
    }

    fn levels_of(&self, mode: usize) -> Vec<f64> {
        let stride = self.strides()[mode];
        (0..self.total_dim())
            .map(|i| ((i / stride) % self.dims[mode]) as f64)
            .collect()
    }
}

/// Single-mode factor of a monomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeOperator {
    X,
    P,
    N,
    A,
    Adag,
}

impl ModeOperator {
    fn degree(&self) -> usize {
        match self {
            ModeOperator::N => 2,
            _ => 1,
        }
    }

    /// Action on `|n⟩` in a mode truncated at `dim` levels.
    fn act(&self, n: usize, dim: usize) -> [Option<(usize, Complex64)>; 2] {
        let up = (n + 1 < dim).then(|| ((n + 1), ((n + 1) as f64).sqrt()));
        let down = (n > 0).then(|| (n - 1, (n as f64).sqrt()));
        let r = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            ModeOperator::N => [(n > 0).then(|| (n, Complex64::new(n as f64, 0.0))), None],
            ModeOperator::A => [down.map(|(m, a)| (m, Complex64::new(a, 0.0))), None],
            ModeOperator::Adag => [up.map(|(m, a)| (m, Complex64::new(a, 0.0))), None],
            ModeOperator::X => [
                down.map(|(m, a)| (m, Complex64::new(a * r, 0.0))),
                up.map(|(m, a)| (m, Complex64::new(a * r, 0.0))),
            ],
            ModeOperator::P => [
                down.map(|(m, a)| (m, Complex64::new(0.0, -a * r))),
                up.map(|(m, a)| (m, Complex64::new(0.0, a * r))),
            ],
        }
    }
}

/// `coefficient · F₁F₂…F_k` with `(mode, factor)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coefficient: f64,
    pub factors: Vec<(usize, ModeOperator)>,
}

impl Term {
    pub fn degree(&self) -> usize {
        self.factors.iter().map(|f| f.1.degree()).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianTermList {
    pub terms: Vec<Term>,
}

impl HamiltonianTermList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, coefficient: f64, factors: &[(usize, ModeOperator)]) -> &mut Self {
        self.terms.push(Term {
            coefficient,
            factors: factors.to_vec(),
        });
        self
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        for (k, t) in self.terms.iter().enumerate() {
            if t.degree() > 3 {
                return Err(Error::Domain(format!("term {k} has degree {} > 3", t.degree())));
            }
            if let Some(f) = t.factors.iter().find(|f| f.0 >= n_modes) {
                return Err(Error::Dimension(format!("term {k} acts on mode {} of {n_modes}", f.0)));
            }
            if !t.coefficient.is_finite() {
                return Err(Error::Domain(format!("term {k} has a non-finite coefficient")));
            }
        }
        Ok(())
    }
}

fn push_product(tri: &mut TriMat<Complex64>, factors: &[(usize, ModeOperator)], scale: Complex64, config: &FockConfig) {
    let strides = config.strides();
    let mut current: Vec<(usize, Complex64)> = Vec::with_capacity(8);
    let mut next: Vec<(usize, Complex64)> = Vec::with_capacity(8);
    for col in 0..config.total_dim() {
        current.clear();
        current.push((col, scale));
        for &(mode, op) in factors.iter().rev() {
            next.clear();
            for &(idx, amp) in &current {
                let n = (idx / strides[mode]) % config.dims[mode];
                for (m, a) in op.act(n, config.dims[mode]).into_iter().flatten() {
                    let j = idx + m * strides[mode] - n * strides[mode];
                    next.push((j, amp * a));
                }
            }
            std::mem::swap(&mut current, &mut next);
        }
        for &(row, amp) in &current {
            tri.add_triplet(row, col, amp);
        }
    }
}

/// The ordered product `F₁F₂…F_k` of truncated single-mode operators.
pub fn product_operator(factors: &[(usize, ModeOperator)], config: &FockConfig) -> Operator {
    let d = config.total_dim();
    let mut tri = TriMat::new((d, d));
    push_product(&mut tri, factors, ONE, config);
    tri.to_csr()
}

/// Number operator of one mode.
pub fn number_operator(mode: usize, config: &FockConfig) -> Operator {
    product_operator(&[(mode, ModeOperator::N)], config)
}

fn adjoint(op: &Operator) -> Operator {
    op.transpose_view().to_csr().map(|z| z.conj())
}

/// Largest entry of `H − H†`.
pub fn hermiticity_error(op: &Operator) -> f64 {
    let diff = op - &adjoint(op);
    diff.data().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Assembles `Σ c_k · ½(T_k + T_kᵀ)` where `T_kᵀ` is the reversed product.
///
/// Rounding-level asymmetry left after the check is projected out.
pub fn build_hamiltonian(terms: &HamiltonianTermList, config: &FockConfig) -> Result<Operator> {
    config.validate()?;
    terms.validate(config.n_modes())?;
    let d = config.total_dim();
    let mut tri = TriMat::new((d, d));
    for t in &terms.terms {
        let half = Complex64::new(0.5 * t.coefficient, 0.0);
        push_product(&mut tri, &t.factors, half, config);
        let reversed: Vec<_> = t.factors.iter().rev().copied().collect();
        push_product(&mut tri, &reversed, half, config);
    }
    let h: Operator = tri.to_csr();
    let scale = h.data().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let err = hermiticity_error(&h);
    if err > 1e-12 * scale.max(1.0) {
        return Err(Error::NonHermitian(format!(
            "assembled Hamiltonian has ‖H − H†‖_max = {err:.3e}"
        )));
    }
    Ok((&h + &adjoint(&h)).map(|z| z * 0.5))
}

/// Bound on the spectral norm, `√(‖A‖₁‖A‖_∞)`.
pub fn norm_bound(op: &Operator) -> f64 {
    let mut rows = vec![0.0f64; op.rows()];
    let mut cols = vec![0.0f64; op.cols()];
    for (v, (r, c)) in op.iter() {
        rows[r] += v.norm();
        cols[c] += v.norm();
    }
    let m = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    (m(&rows) * m(&cols)).sqrt()
}

fn accumulate_vec(op: &Operator, c: Complex64, x: ArrayView1<Complex64>, y: &mut ArrayViewMut1<Complex64>) {
    for (row, v) in op.outer_iterator().enumerate() {
        let mut s = ZERO;
        for (col, &a) in v.iter() {
            s += a * x[col];
        }
        y[row] += c * s;
    }
}

fn accumulate_mat(op: &Operator, c: Complex64, x: ArrayView2<Complex64>, y: &mut ArrayViewMut2<Complex64>) {
    for (row, v) in op.outer_iterator().enumerate() {
        let mut out = y.row_mut(row);
        let out = out.as_slice_mut().expect("row-major output");
        for (col, &a) in v.iter() {
            let f = c * a;
            let src = x.row(col);
            let src = src.as_slice().expect("row-major input");
            for (o, xi) in out.iter_mut().zip(src) {
                *o += f * xi;
            }
        }
    }
}

const TILE: usize = 32;

/// `b ← a† (+ b if accumulate)`, tiled for cache locality.
fn adjoint_into(a: &Array2<Complex64>, b: &mut Array2<Complex64>, accumulate: bool) {
    let n = a.nrows();
    for i0 in (0..n).step_by(TILE) {
        for j0 in (0..n).step_by(TILE) {
            for i in i0..(i0 + TILE).min(n) {
                for j in j0..(j0 + TILE).min(n) {
                    let v = a[(j, i)].conj();
                    if accumulate {
                        b[(i, j)] += v;
                    } else {
                        b[(i, j)] = v;
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct FockState {
    pub amplitudes: Array1<Complex64>,
}

/// Initial condition of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeState {
    Fock(usize),
    Coherent { re: f64, im: f64 },
}

impl ModeState {
    pub fn coherent(alpha: Complex64) -> Self {
        ModeState::Coherent {
            re: alpha.re,
            im: alpha.im,
        }
    }

    fn amplitudes(&self, dim: usize) -> Result<Array1<Complex64>> {
        let mut v = Array1::zeros(dim);
        match *self {
            ModeState::Fock(n) => {
                if n >= dim {
                    return Err(Error::Domain(format!("Fock level {n} outside a {dim}-level mode")));
                }
                v[n] = ONE;
            }
            ModeState::Coherent { re, im } => {
                let alpha = Complex64::new(re, im);
                let mut a = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
                for n in 0..dim {
                    v[n] = a;
                    a *= alpha / ((n + 1) as f64).sqrt();
                }
                let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                v.mapv_inplace(|z| z / norm);
            }
        }
        Ok(v)
    }
}

fn kron(a: &Array1<Complex64>, b: &Array1<Complex64>) -> Array1<Complex64> {
    let mut out = Array1::zeros(a.len() * b.len());
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i * b.len() + j] = x * y;
        }
    }
    out
}

impl FockState {
    pub fn vacuum(config: &FockConfig) -> Self {
        let mut amplitudes = Array1::zeros(config.total_dim());
        amplitudes[0] = ONE;
        Self { amplitudes }
    }

    /// Product state; coherent amplitudes are truncated and renormalized.
    pub fn product(config: &FockConfig, modes: &[ModeState]) -> Result<Self> {
        if modes.len() != config.n_modes() {
            return Err(Error::Dimension(format!(
                "{} mode states for {} modes",
                modes.len(),
                config.n_modes()
            )));
        }
        let mut v = Array1::from_elem(1, ONE);
        for (m, s) in modes.iter().enumerate() {
            v = kron(&v, &s.amplitudes(config.dims[m])?);
        }
        Ok(Self { amplitudes: v })
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `|⟨self|other⟩|²`.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .norm_sqr()
    }

    pub fn expectation(&self, op: &Operator) -> f64 {
        let mut y = Array1::zeros(self.amplitudes.len());
        accumulate_vec(op, ONE, self.amplitudes.view(), &mut y.view_mut());
        self.amplitudes
            .iter()
            .zip(y.iter())
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
            .re
    }
}

/// `⟨n_mode⟩` of a pure state.
pub fn mode_energy(state: &FockState, config: &FockConfig, mode: usize) -> f64 {
    config
        .levels_of(mode)
        .iter()
        .zip(state.amplitudes.iter())
        .map(|(n, a)| n * a.norm_sqr())
        .sum()
}

#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub rho: Array2<Complex64>,
}

/// Mixed initial condition of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixedModeState {
    Pure(ModeState),
    /// Truncated and renormalized thermal distribution with mean `nbar`.
    Thermal(f64),
}

impl DensityMatrix {
    pub fn from_pure(state: &FockState) -> Self {
        let a = &state.amplitudes;
        let n = a.len();
        Self {
            rho: Array2::from_shape_fn((n, n), |(i, j)| a[i] * a[j].conj()),
        }
    }

    pub fn product(config: &FockConfig, modes: &[MixedModeState]) -> Result<Self> {
        if modes.len() != config.n_modes() {
            return Err(Error::Dimension(format!(
                "{} mode states for {} modes",
                modes.len(),
                config.n_modes()
            )));
        }
        let mut rho = Array2::from_elem((1, 1), ONE);
        for (m, s) in modes.iter().enumerate() {
            let d = config.dims[m];
            let single = match *s {
                MixedModeState::Pure(p) => {
                    let v = p.amplitudes(d)?;
                    Array2::from_shape_fn((d, d), |(i, j)| v[i] * v[j].conj())
                }
                MixedModeState::Thermal(nbar) => {
                    if !(nbar.is_finite() && nbar >= 0.0) {
                        return Err(Error::Domain(format!("thermal occupation must be ≥ 0, got {nbar}")));
                    }
                    let q = nbar / (1.0 + nbar);
                    let w: Vec<f64> = (0..d).map(|n| q.powi(n as i32)).collect();
                    let z: f64 = w.iter().sum();
                    Array2::from_shape_fn(
                        (d, d),
                        |(i, j)| if i == j { Complex64::new(w[i] / z, 0.0) } else { ZERO },
                    )
                }
            };
            let (r, s) = (rho.nrows(), single.nrows());
            rho = Array2::from_shape_fn((r * s, r * s), |(i, j)| rho[(i / s, j / s)] * single[(i % s, j % s)]);
        }
        Ok(Self { rho })
    }

    pub fn trace(&self) -> f64 {
        self.rho.diag().iter().map(|z| z.re).sum()
    }

    /// `Tr(ρ O)`.
    pub fn expectation(&self, op: &Operator) -> f64 {
        let mut s = ZERO;
        for (v, (i, j)) in op.iter() {
            s += v * self.rho[(j, i)];
        }
        s.re
    }

    pub fn mode_occupation(&self, config: &FockConfig, mode: usize) -> f64 {
        config
            .levels_of(mode)
            .iter()
            .zip(self.rho.diag().iter())
            .map(|(n, z)| n * z.re)
            .sum()
    }

    /// First moments and covariance matrix `γ_ij = ⟨{ΔR_i, ΔR_j}⟩` of the
    /// quadratures of `modes`, ordered `(x, p)` per mode.
    pub fn quadrature_moments(&self, config: &FockConfig, modes: &[usize]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let quads: Vec<(usize, ModeOperator)> = modes
            .iter()
            .flat_map(|&m| [(m, ModeOperator::X), (m, ModeOperator::P)])
            .collect();
        let mean: Vec<f64> = quads
            .iter()
            .map(|&q| self.expectation(&product_operator(&[q], config)))
            .collect();
        let n = quads.len();
        let mut gamma = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let a = self.expectation(&product_operator(&[quads[i], quads[j]], config));
                let b = self.expectation(&product_operator(&[quads[j], quads[i]], config));
                let g = a + b - 2.0 * mean[i] * mean[j];
                gamma[i][j] = g;
                gamma[j][i] = g;
            }
        }
        (mean, gamma)
    }
}

/// Time-dependent generator `H(t) = Σ_k c_k(t) O_k` over fixed operators.
#[derive(Debug, Clone)]
pub struct OperatorBasis {
    pub config: FockConfig,
    pub names: Vec<String>,
    pub operators: Vec<Operator>,
    bounds: Vec<f64>,
}

impl OperatorBasis {
    /// Each entry is symmetrized and checked like a one-term Hamiltonian.
    pub fn new(config: FockConfig, monomials: &[(&str, Vec<(usize, ModeOperator)>)]) -> Result<Self> {
        let mut names = Vec::new();
        let mut operators = Vec::new();
        for (name, factors) in monomials {
            let mut t = HamiltonianTermList::new();
            t.push(1.0, factors);
            let op =
                build_hamiltonian(&t, &config).map_err(|e| Error::NonHermitian(format!("operator {name}: {e}")))?;
            names.push(name.to_string());
            operators.push(op);
        }
        let bounds = operators.iter().map(norm_bound).collect();
        Ok(Self {
            config,
            names,
            operators,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    fn bound(&self, coefs: &[f64]) -> f64 {
        coefs.iter().zip(&self.bounds).map(|(c, b)| c.abs() * b).sum()
    }

    /// Combined Hamiltonian for fixed coefficients.
    pub fn hamiltonian(&self, coefs: &[f64]) -> Operator {
        let d = self.config.total_dim();
        let mut h = Operator::zero((d, d));
        for (c, op) in coefs.iter().zip(&self.operators) {
            if *c != 0.0 {
                h = &h + &op.map(|z| z * c);
            }
        }
        h
    }
}

/// One step of constant coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub duration: f64,
    pub coefficients: Vec<f64>,
    /// Last step of a schedule segment.
    pub segment_end: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Protocol {
    pub steps: Vec<Step>,
}

impl Protocol {
    pub fn total_time(&self) -> f64 {
        self.steps.iter().map(|s| s.duration).sum()
    }

    /// Piecewise-constant coefficients, each segment split into steps no
    /// longer than `max_step`.
    pub fn piecewise(segments: &[(Vec<f64>, f64)], max_step: f64) -> Result<Self> {
        let mut steps = Vec::new();
        for (coefs, d) in segments {
            if !(d.is_finite() && *d >= 0.0) {
                return Err(Error::Domain(format!("segment duration must be ≥ 0, got {d}")));
            }
            let n = (d / max_step).ceil().max(1.0) as usize;
            for k in 0..n {
                steps.push(Step {
                    duration: d / n as f64,
                    coefficients: coefs.clone(),
                    segment_end: k + 1 == n,
                });
            }
        }
        Ok(Self { steps })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Longest step with frozen coefficients.
    pub max_step: f64,
    /// Largest change per step of a coefficient driven by the classical
    /// amplitude (`g₀ X`, `g₀ P`).
    pub max_coefficient_change: f64,
    /// Spacing of the uniform sampling grid.
    pub sample_dt: f64,
    pub norm_tolerance: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            max_step: 0.01,
            max_coefficient_change: 0.01,
            sample_dt: 0.05,
            norm_tolerance: NORM_TOLERANCE,
        }
    }
}

/// Observables sampled at segment boundaries and on a uniform grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FockTrajectory {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    /// State norm (pure) or trace (mixed).
    pub norms: Vec<f64>,
}

impl FockTrajectory {
    fn new(names: Vec<String>) -> Self {
        Self {
            names,
            ..Default::default()
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.values.iter().map(|v| v[k]).collect())
    }

    /// Value of `name` at the sample closest to `t`.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let k = self.names.iter().position(|n| n == name)?;
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.values[i][k])
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        self.column(name)?.last().copied()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        header.push("norm".into());
        w.write_record(&header)?;
        for ((t, v), n) in self.times.iter().zip(&self.values).zip(&self.norms) {
            let mut row = vec![format!("{t:.10e}")];
            row.extend(v.iter().map(|x| format!("{x:.10e}")));
            row.push(format!("{n:.15e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

const TAYLOR_STRIDE: f64 = 5.0;
const MAX_TAYLOR_TERMS: usize = 60;
const TAYLOR_TOL: f64 = 1e-14;

fn max_abs<D: ndarray::Dimension>(a: &ndarray::Array<Complex64, D>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `x ← exp(h·L) x` for a linear map with `‖L‖ ≤ bound`.
fn taylor_step<D, F>(x: &mut ndarray::Array<Complex64, D>, h: f64, bound: f64, apply: F)
where
    D: ndarray::Dimension,
    F: Fn(&ndarray::Array<Complex64, D>) -> ndarray::Array<Complex64, D>,
{
    let m = ((h * bound) / TAYLOR_STRIDE).ceil().max(1.0) as usize;
    let tau = h / m as f64;
    for _ in 0..m {
        let scale = max_abs(x);
        let mut term = x.clone();
        let mut small = 0;
        for k in 1..=MAX_TAYLOR_TERMS {
            term = apply(&term);
            term.mapv_inplace(|z| z * (tau / k as f64));
            *x += &term;
            let t = max_abs(&term);
            small = if t <= TAYLOR_TOL * scale { small + 1 } else { 0 };
            if t == 0.0 || small == 2 {
                break;
            }
        }
    }
}

/// Unitary evolution of a pure state under the protocol.
pub fn evolve(
    basis: &OperatorBasis,
    psi0: &FockState,
    protocol: &Protocol,
    observables: &[(String, Operator)],
    opts: &EvolveOptions,
) -> Result<(FockState, FockTrajectory)> {
    let d = basis.config.total_dim();
    if psi0.amplitudes.len() != d {
        return Err(Error::Dimension(format!(
            "state of length {} for dimension {d}",
            psi0.amplitudes.len()
        )));
    }
    let n0 = psi0.norm();
    if (n0 - 1.0).abs() > opts.norm_tolerance {
        return Err(Error::Precondition(format!("initial state norm {n0} is not 1")));
    }
    let mut psi = psi0.amplitudes.clone();
    let mut traj = FockTrajectory::new(observables.iter().map(|o| o.0.clone()).collect());
    let record = |traj: &mut FockTrajectory, t: f64, psi: &Array1<Complex64>| {
        let s = FockState {
            amplitudes: psi.clone(),
        };
        traj.times.push(t);
        traj.values
            .push(observables.iter().map(|o| s.expectation(&o.1)).collect());
        traj.norms.push(s.norm());
    };
    record(&mut traj, 0.0, &psi);
    let mut t = 0.0;
    let mut next_sample = opts.sample_dt;
    for step in &protocol.steps {
        let coefs: Vec<Complex64> = step.coefficients.iter().map(|&c| -I * c).collect();
        let apply = |x: &Array1<Complex64>| {
            let mut y = Array1::zeros(d);
            for (c, op) in coefs.iter().zip(&basis.operators) {
                if *c != ZERO {
                    accumulate_vec(op, *c, x.view(), &mut y.view_mut());
                }
            }
            y
        };
        taylor_step(&mut psi, step.duration, basis.bound(&step.coefficients), apply);
        t += step.duration;
        let norm = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > opts.norm_tolerance {
            return Err(Error::NormDrift { t, drift: norm - 1.0 });
        }
        if step.segment_end || t >= next_sample - 1e-12 {
            record(&mut traj, t, &psi);
            while next_sample <= t + 1e-12 {
                next_sample += opts.sample_dt;
            }
        }
    }
    Ok((FockState { amplitudes: psi }, traj))
}

/// Decay channel `√(2r(n̄+1)) a` plus `√(2r n̄) a†` on one mode, so that
/// amplitudes decay at rate `r` and occupations at `2r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dissipator {
    pub mode: usize,
    pub rate: f64,
    pub nbar: f64,
}

impl Dissipator {
    pub fn cavity(mode: usize, kappa: f64) -> Self {
        Self {
            mode,
            rate: kappa,
            nbar: 0.0,
        }
    }
}

/// Master-equation evolution `dρ/dt = −i[H, ρ] + Σ (LρL† − ½{L†L, ρ})`.
pub fn lindblad_evolve(
    basis: &OperatorBasis,
    rho0: &DensityMatrix,
    protocol: &Protocol,
    dissipators: &[Dissipator],
    observables: &[(String, Operator)],
    budget: usize,
    opts: &EvolveOptions,
) -> Result<(DensityMatrix, FockTrajectory)> {
    let d = basis.config.total_dim();
    if d > budget {
        return Err(Error::Budget { dim: d, budget });
    }
    if rho0.rho.dim() != (d, d) {
        return Err(Error::Dimension(format!(
            "density matrix {:?} for dimension {d}",
            rho0.rho.dim()
        )));
    }
    let mut jumps: Vec<Operator> = Vec::new();
    for diss in dissipators {
        if diss.mode >= basis.config.n_modes() || !(diss.rate >= 0.0 && diss.nbar >= 0.0) {
            return Err(Error::Domain(format!("invalid dissipator {diss:?}")));
        }
        let lower = product_operator(&[(diss.mode, ModeOperator::A)], &basis.config);
        let raise = product_operator(&[(diss.mode, ModeOperator::Adag)], &basis.config);
        let down = 2.0 * diss.rate * (diss.nbar + 1.0);
        let up = 2.0 * diss.rate * diss.nbar;
        if down > 0.0 {
            jumps.push(lower.map(|z| z * down.sqrt()));
        }
        if up > 0.0 {
            jumps.push(raise.map(|z| z * up.sqrt()));
        }
    }
    let mut loss = Operator::zero((d, d));
    for l in &jumps {
        loss = &loss + &(&adjoint(l) * l);
    }
    let neg_half_loss = loss.map(|z| -0.5 * z);
    let jump_bound: f64 = jumps.iter().map(|l| norm_bound(l).powi(2)).sum();

    let mut rho = rho0.rho.clone();
    let mut traj = FockTrajectory::new(observables.iter().map(|o| o.0.clone()).collect());
    let record = |traj: &mut FockTrajectory, t: f64, rho: &Array2<Complex64>| {
        let s = DensityMatrix { rho: rho.clone() };
        traj.times.push(t);
        traj.values
            .push(observables.iter().map(|o| s.expectation(&o.1)).collect());
        traj.norms.push(s.trace());
    };
    record(&mut traj, 0.0, &rho);
    let mut t = 0.0;
    let mut next_sample = opts.sample_dt;
    for step in &protocol.steps {
        // Heff = −iH − ½ΣL†L;  A = Heff ρ,  dρ = A + A† + Σ L (L ρ)†
        let mut heff = neg_half_loss.clone();
        for (c, op) in step.coefficients.iter().zip(&basis.operators) {
            if *c != 0.0 {
                heff = &heff + &op.map(|z| -I * c * z);
            }
        }
        // −i[H, ρ] only sees energy differences: centre the spectrum of H
        let (lo, hi) = heff
            .diag()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), z| {
                (lo.min(-z.1.im), hi.max(-z.1.im))
            });
        if lo.is_finite() {
            let mut centre = TriMat::new((d, d));
            for k in 0..d {
                centre.add_triplet(k, k, I * (0.5 * (lo + hi)));
            }
            heff = &heff + &centre.to_csr();
        }
        let apply = |x: &Array2<Complex64>| {
            let mut a = Array2::zeros((d, d));
            accumulate_mat(&heff, ONE, x.view(), &mut a.view_mut());
            let mut out = a.clone();
            adjoint_into(&a, &mut out, true);
            let mut lx = Array2::zeros((d, d));
            let mut lxd = Array2::zeros((d, d));
            for l in &jumps {
                lx.fill(ZERO);
                accumulate_mat(l, ONE, x.view(), &mut lx.view_mut());
                adjoint_into(&lx, &mut lxd, false);
                accumulate_mat(l, ONE, lxd.view(), &mut out.view_mut());
            }
            out
        };
        let bound = 2.0 * norm_bound(&heff) + jump_bound;
        taylor_step(&mut rho, step.duration, bound, apply);
        t += step.duration;
        let tr: f64 = rho.diag().iter().map(|z| z.re).sum();
        if !tr.is_finite() || (tr - 1.0).abs() > opts.norm_tolerance {
            return Err(Error::NormDrift { t, drift: tr - 1.0 });
        }
        if step.segment_end || t >= next_sample - 1e-12 {
            record(&mut traj, t, &rho);
            while next_sample <= t + 1e-12 {
                next_sample += opts.sample_dt;
            }
        }
    }
    Ok((DensityMatrix { rho }, traj))
}

/// Number operators of every mode, named `n_<label>` (indexed when repeated).
pub fn number_observables(config: &FockConfig) -> Vec<(String, Operator)> {
    let mut out = Vec::new();
    for (m, l) in config.labels.iter().enumerate() {
        let repeated = config.labels.iter().filter(|&&x| x == *l).count() > 1;
        let name = if repeated {
            let k = config.labels[..m].iter().filter(|&&x| x == *l).count() + 1;
            format!("n_{}{k}", l.short())
        } else {
            format!("n_{}", l.short())
        };
        out.push((name, number_operator(m, config)));
    }
    out
}

type Monomial = (&'static str, Vec<(usize, ModeOperator)>);

/// Basis in which the double-cavity system is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CavityBasis {
    /// `(a_a, a_s, b)` with `a_{a,s} = (a₁ ± a₂)/√2`.
    #[default]
    SymmetricAntisymmetric,
    /// `(a₁, a₂, b)`.
    TwoCavity,
}

/// Double cavity coupled to one mechanical mode, driven on `a_a`.
///
/// The driven mode is split into a classical amplitude `w = X + iP` obeying
/// `dw/dt = −iΔw + (f_p − i f_x)` and quantum fluctuations, which is exact.
#[derive(Debug, Clone)]
pub struct DoubleCavityModel {
    pub params: SystemParams,
    pub cavity_basis: CavityBasis,
    pub basis: OperatorBasis,
}

impl DoubleCavityModel {
    /// `dims` lists `(a_a, a_s, b)` or `(a₁, a₂, b)` truncations.
    pub fn new(params: &SystemParams, cavity_basis: CavityBasis, dims: [usize; 3]) -> Result<Self> {
        params.validate()?;
        use ModeOperator::{N, P, X};
        let (labels, monomials): (Vec<ModeLabel>, Vec<Monomial>) = match cavity_basis {
            CavityBasis::SymmetricAntisymmetric => (
                vec![ModeLabel::Antisymmetric, ModeLabel::Symmetric, ModeLabel::Mechanical],
                vec![
                    ("n_a", vec![(0, N)]),
                    ("n_s", vec![(1, N)]),
                    ("n_m", vec![(2, N)]),
                    ("x_a*x_s*x_m", vec![(0, X), (1, X), (2, X)]),
                    ("p_a*p_s*x_m", vec![(0, P), (1, P), (2, X)]),
                    ("x_s*x_m", vec![(1, X), (2, X)]),
                    ("p_s*x_m", vec![(1, P), (2, X)]),
                    ("x_s", vec![(1, X)]),
                    ("p_s", vec![(1, P)]),
                ],
            ),
            CavityBasis::TwoCavity => (
                vec![ModeLabel::Cavity, ModeLabel::Cavity, ModeLabel::Mechanical],
                vec![
                    ("n_1", vec![(0, N)]),
                    ("n_2", vec![(1, N)]),
                    ("n_m", vec![(2, N)]),
                    ("n_1*x_m", vec![(0, N), (2, X)]),
                    ("n_2*x_m", vec![(1, N), (2, X)]),
                    ("x_1*x_m", vec![(0, X), (2, X)]),
                    ("p_1*x_m", vec![(0, P), (2, X)]),
                    ("x_2*x_m", vec![(1, X), (2, X)]),
                    ("p_2*x_m", vec![(1, P), (2, X)]),
                    ("x_1", vec![(0, X)]),
                    ("p_1", vec![(0, P)]),
                    ("x_2", vec![(1, X)]),
                    ("p_2", vec![(1, P)]),
                ],
            ),
        };
        let config = FockConfig::new(dims.to_vec(), labels)?;
        Ok(Self {
            params: *params,
            cavity_basis,
            basis: OperatorBasis::new(config, &monomials)?,
        })
    }

    pub fn config(&self) -> &FockConfig {
        &self.basis.config
    }

    /// Undriven Hamiltonian as a term list in the model's basis.
    pub fn hamiltonian_terms(&self) -> HamiltonianTermList {
        use ModeOperator::{N, P, X};
        let p = &self.params;
        let mut t = HamiltonianTermList::new();
        t.push(p.delta, &[(0, N)])
            .push(p.delta, &[(1, N)])
            .push(p.nu, &[(2, N)]);
        match self.cavity_basis {
            CavityBasis::SymmetricAntisymmetric => {
                t.push(p.g0, &[(0, X), (1, X), (2, X)])
                    .push(p.g0, &[(0, P), (1, P), (2, X)]);
            }
            CavityBasis::TwoCavity => {
                t.push(p.g0, &[(0, N), (2, X)]).push(-p.g0, &[(1, N), (2, X)]);
            }
        }
        t
    }

    /// Product state with the mechanical mode coherent and both cavity modes in vacuum.
    pub fn initial_state(&self, mechanical_alpha: Complex64) -> Result<FockState> {
        FockState::product(
            self.config(),
            &[
                ModeState::Fock(0),
                ModeState::Fock(0),
                ModeState::coherent(mechanical_alpha),
            ],
        )
    }

    /// `n_a`, `n_s`, `n_m` fluctuation occupations.
    pub fn observables(&self) -> Vec<(String, Operator)> {
        let cfg = self.config();
        match self.cavity_basis {
            CavityBasis::SymmetricAntisymmetric => number_observables(cfg),
            CavityBasis::TwoCavity => {
                use ModeOperator::{Adag, A, N};
                let mode_sum = |sign: f64| {
                    let mut t = HamiltonianTermList::new();
                    t.push(0.5, &[(0, N)])
                        .push(0.5, &[(1, N)])
                        .push(0.5 * sign, &[(0, Adag), (1, A)])
                        .push(0.5 * sign, &[(1, Adag), (0, A)]);
                    build_hamiltonian(&t, cfg).expect("mode number is Hermitian")
                };
                vec![
                    ("n_a".into(), mode_sum(1.0)),
                    ("n_s".into(), mode_sum(-1.0)),
                    ("n_m".into(), number_operator(2, cfg)),
                ]
            }
        }
    }

    /// Coefficients for classical amplitude `w` and direct `a_s` drives.
    fn coefficients(&self, w: Complex64, fs: (f64, f64)) -> Vec<f64> {
        let p = &self.params;
        match self.cavity_basis {
            CavityBasis::SymmetricAntisymmetric => {
                vec![p.delta, p.delta, p.nu, p.g0, p.g0, p.g0 * w.re, p.g0 * w.im, fs.0, fs.1]
            }
            CavityBasis::TwoCavity => {
                let (gx, gp) = (p.g0 * w.re / SQRT_2, p.g0 * w.im / SQRT_2);
                let (sx, sp) = (fs.0 / SQRT_2, fs.1 / SQRT_2);
                vec![p.delta, p.delta, p.nu, p.g0, -p.g0, gx, gp, -gx, -gp, sx, sp, -sx, -sp]
            }
        }
    }

    /// Steps for a compiled schedule using `DriveXa`, `DrivePa`, `DriveXs`
    /// and `DrivePs` controls.
    pub fn protocol(&self, schedule: &PulseSchedule, opts: &EvolveOptions) -> Result<Protocol> {
        schedule.validate()?;
        let delta = self.params.delta;
        let mut w = Complex64::new(0.0, 0.0);
        let mut steps = Vec::new();
        for seg in &schedule.segments {
            if let Some(c) = seg.controls.iter().find(|c| c.0.is_linear_regime() && c.1 != 0.0) {
                return Err(Error::UnsupportedSequence(format!(
                    "control {:?} in segment `{}` has no double-cavity counterpart",
                    c.0, seg.label
                )));
            }
            let u = Complex64::new(
                seg.amplitude(ControlTarget::DrivePa),
                -seg.amplitude(ControlTarget::DriveXa),
            );
            let fs = (
                seg.amplitude(ControlTarget::DriveXs),
                seg.amplitude(ControlTarget::DrivePs),
            );
            let d = seg.duration;
            let w_max = w.norm() + u.norm() * d;
            let rate = self.params.g0 * (delta.abs() * w_max + u.norm());
            let n = (d / opts.max_step)
                .ceil()
                .max((d * rate / opts.max_coefficient_change).ceil())
                .max(1.0) as usize;
            let h = d / n as f64;
            for k in 0..n {
                let mid = classical_flow(w, u, delta, h / 2.0);
                steps.push(Step {
                    duration: h,
                    coefficients: self.coefficients(mid, fs),
                    segment_end: k + 1 == n,
                });
                w = classical_flow(w, u, delta, h);
            }
        }
        Ok(Protocol { steps })
    }

    pub fn evolve(
        &self,
        psi0: &FockState,
        schedule: &PulseSchedule,
        opts: &EvolveOptions,
    ) -> Result<(FockState, FockTrajectory)> {
        let protocol = self.protocol(schedule, opts)?;
        evolve(&self.basis, psi0, &protocol, &self.observables(), opts)
    }
}

/// Exact solution of `dw/dt = −iΔw + u` after time `tau`.
pub fn classical_flow(w: Complex64, u: Complex64, delta: f64, tau: f64) -> Complex64 {
    let rot = Complex64::new(0.0, -delta * tau).exp();
    if (delta * tau).abs() < 1e-8 {
        w * rot + u * tau * (ONE - I * delta * tau / 2.0)
    } else {
        w * rot + u * (ONE - rot) / (I * delta)
    }
}

/// Single cavity and mechanical mode `(c, m)`.
///
/// Supports the full driven Hamiltonian
/// `Δn_c + νn_m + g₀ n_c x_m + √2Ω(cos φ x_c − sin φ p_c)` and the linearized
/// model `Δn_c + νn_m + √2 Re G x_c x_m − √2 Im G p_c x_m + |G|² x_m`, the
/// latter optionally keeping the residual `g₀ n_c x_m`.
#[derive(Debug, Clone)]
pub struct SingleCavityModel {
    pub params: SystemParams,
    pub basis: OperatorBasis,
}

impl SingleCavityModel {
    pub fn new(params: &SystemParams, dims: [usize; 2], budget: usize) -> Result<Self> {
        params.validate()?;
        use ModeOperator::{N, P, X};
        let config = FockConfig::with_budget(dims.to_vec(), vec![ModeLabel::Cavity, ModeLabel::Mechanical], budget)?;
        let monomials = vec![
            ("n_c", vec![(0, N)]),
            ("n_m", vec![(1, N)]),
            ("n_c*x_m", vec![(0, N), (1, X)]),
            ("x_c*x_m", vec![(0, X), (1, X)]),
            ("p_c*x_m", vec![(0, P), (1, X)]),
            ("x_m", vec![(1, X)]),
            ("x_c", vec![(0, X)]),
            ("p_c", vec![(0, P)]),
        ];
        Ok(Self {
            params: *params,
            basis: OperatorBasis::new(config, &monomials)?,
        })
    }

    pub fn config(&self) -> &FockConfig {
        &self.basis.config
    }

    pub fn observables(&self) -> Vec<(String, Operator)> {
        number_observables(self.config())
    }

    pub fn driven_protocol(&self, drive: &[DriveSegment], max_step: f64) -> Result<Protocol> {
        let p = &self.params;
        let segments = drive
            .iter()
            .map(|s| {
                s.validate()?;
                let (c, sn) = (s.phi.cos(), s.phi.sin());
                Ok((
                    vec![
                        p.delta,
                        p.nu,
                        p.g0,
                        0.0,
                        0.0,
                        0.0,
                        SQRT_2 * s.omega * c,
                        -SQRT_2 * s.omega * sn,
                    ],
                    s.duration,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Protocol::piecewise(&segments, max_step)
    }

    /// Linearized model for piecewise-constant `G`, with an undriven tail up to `t_final`.
    pub fn linearized_protocol(
        &self,
        segments: &[(Complex64, f64)],
        t_final: f64,
        keep_residual: bool,
        max_step: f64,
    ) -> Result<Protocol> {
        let p = &self.params;
        let g0 = if keep_residual { p.g0 } else { 0.0 };
        let coefs = |g: Complex64| vec![p.delta, p.nu, g0, SQRT_2 * g.re, -SQRT_2 * g.im, g.norm_sqr(), 0.0, 0.0];
        let mut list: Vec<(Vec<f64>, f64)> = segments.iter().map(|&(g, d)| (coefs(g), d)).collect();
        let used: f64 = segments.iter().map(|s| s.1).sum();
        if t_final > used + 1e-12 {
            list.push((coefs(ZERO), t_final - used));
        }
        Protocol::piecewise(&list, max_step)
    }
}
