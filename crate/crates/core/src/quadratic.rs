//! Quadratic Hamiltonians `H = ½ RᵀVR + cᵀR` over `N` modes.
//!
//! `R = (x_1, p_1, ..., x_N, p_N)` and the classical flow generated by `H`
//! is `dR/dt = σ(VR + c)` with `σ = ⊕ [[0, 1], [−1, 0]]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Block-diagonal symplectic form for `n_modes` modes.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        s[(2 * k, 2 * k + 1)] = 1.0;
        s[(2 * k + 1, 2 * k)] = -1.0;
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticHamiltonian {
    pub v: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl QuadraticHamiltonian {
    pub fn zeros(n_modes: usize) -> Self {
        Self {
            v: DMatrix::zeros(2 * n_modes, 2 * n_modes),
            c: DVector::zeros(2 * n_modes),
        }
    }

    pub fn new(v: DMatrix<f64>, c: DVector<f64>) -> Result<Self> {
        if !v.is_square() || v.nrows() != c.len() || !v.nrows().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "V is {}x{}, c has length {}",
                v.nrows(),
                v.ncols(),
                c.len()
            )));
        }
        let asym = (&v - v.transpose()).amax();
        if asym > 1e-12 * (1.0 + v.amax()) {
            return Err(Error::Domain(format!("V is not symmetric (max asymmetry {asym:.3e})")));
        }
        Ok(Self { v, c })
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn n_modes(&self) -> usize {
        self.dim() / 2
    }

    /// Adds `coef · R_i R_j` (symmetrized when `i ≠ j`).
    pub fn add_product(&mut self, i: usize, j: usize, coef: f64) -> &mut Self {
        if i == j {
            self.v[(i, i)] += 2.0 * coef;
        } else {
            self.v[(i, j)] += coef;
            self.v[(j, i)] += coef;
        }
        self
    }

    /// Adds `coef · R_i`.
    pub fn add_linear(&mut self, i: usize, coef: f64) -> &mut Self {
        self.c[i] += coef;
        self
    }

    /// Adds `coef · (x_k² + p_k²)/2`, i.e. `coef · (n_k + ½)`.
    pub fn add_oscillator(&mut self, mode: usize, coef: f64) -> &mut Self {
        self.v[(2 * mode, 2 * mode)] += coef;
        self.v[(2 * mode + 1, 2 * mode + 1)] += coef;
        self
    }

    /// Coefficient of the monomial `R_i R_j` in the expanded polynomial.
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.5 * self.v[(i, i)]
        } else {
            self.v[(i, j)]
        }
    }

    /// Generator `σV` of the linear part of the flow.
    pub fn generator(&self) -> DMatrix<f64> {
        symplectic_form(self.n_modes()) * &self.v
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            v: &self.v * s,
            c: &self.c * s,
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            v: &self.v + &other.v,
            c: &self.c + &other.c,
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        self.plus(&other.scaled(-1.0))
    }

    /// Largest absolute entry over `V` and `c`.
    pub fn max_abs(&self) -> f64 {
        self.v.amax().max(self.c.amax())
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.max_abs() <= tol
    }

    /// `i[H1, H2]` with constant terms dropped.
    pub fn lie_bracket(h1: &Self, h2: &Self) -> Result<Self> {
        if h1.dim() != h2.dim() {
            return Err(Error::Dimension(format!(
                "bracket of {}- and {}-dimensional Hamiltonians",
                h1.dim(),
                h2.dim()
            )));
        }
        let s = symplectic_form(h1.n_modes());
        let v2s = &h2.v * &s;
        let v1s = &h1.v * &s;
        let v = &v2s * &h1.v - &v1s * &h2.v;
        let c = &v2s * &h1.c - &v1s * &h2.c;
        Ok(Self { v, c })
    }

    /// Monomial coefficients keyed like `p_c*p_m`, `x_m^2`, `x_m`.
    pub fn terms(&self, labels: &[&str], tol: f64) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let name = |k: usize| {
            let q = if k.is_multiple_of(2) { "x" } else { "p" };
            let mode = labels.get(k / 2).copied().unwrap_or("?");
            format!("{q}_{mode}")
        };
        for i in 0..self.dim() {
            for j in i..self.dim() {
                let coef = self.coefficient(i, j);
                if coef.abs() > tol {
                    let key = if i == j {
                        format!("{}^2", name(i))
                    } else {
                        format!("{}*{}", name(i), name(j))
                    };
                    out.push((key, coef));
                }
            }
        }
        for i in 0..self.dim() {
            if self.c[i].abs() > tol {
                out.push((name(i), self.c[i]));
            }
        }
        out
    }
}
