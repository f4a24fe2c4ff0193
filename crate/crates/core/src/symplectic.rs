//! Exact affine phase-space propagators for piecewise-constant quadratic
//! Hamiltonians, BCH effective Hamiltonians and Bogoliubov transformations.

use nalgebra::{DMatrix, DVector, Matrix2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadratic::{symplectic_form, QuadraticHamiltonian};

/// Affine map `R → S R + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinePropagator {
    pub s: DMatrix<f64>,
    pub d: DVector<f64>,
}

impl AffinePropagator {
    pub fn identity(dim: usize) -> Self {
        Self {
            s: DMatrix::identity(dim, dim),
            d: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &Self) -> Result<Self> {
        if self.dim() != next.dim() {
            return Err(Error::Dimension(format!(
                "composing {}- and {}-dimensional propagators",
                self.dim(),
                next.dim()
            )));
        }
        Ok(Self {
            s: &next.s * &self.s,
            d: &next.s * &self.d + &next.d,
        })
    }

    /// Inverse using `S⁻¹ = −σ Sᵀ σ`.
    pub fn inverse(&self) -> Self {
        let sig = symplectic_form(self.dim() / 2);
        let s_inv = -(&sig * self.s.transpose() * &sig);
        let d = -(&s_inv * &self.d);
        Self { s: s_inv, d }
    }

    pub fn apply(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.s * r + &self.d
    }

    /// `max |S σ Sᵀ − σ|`.
    pub fn symplectic_error(&self) -> f64 {
        let sig = symplectic_form(self.dim() / 2);
        (&self.s * &sig * self.s.transpose() - sig).amax()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (&self.s - &other.s).amax().max((&self.d - &other.d).amax())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("propagator serializes")
    }
}

/// Exact flow of `h` for `duration`, from the augmented exponential
/// `exp([[σV, σc], [0, 0]] t)`.
pub fn segment_propagator(h: &QuadraticHamiltonian, duration: f64) -> Result<AffinePropagator> {
    if !(duration >= 0.0) {
        return Err(Error::Precondition(format!(
            "duration must be non-negative, got {duration}"
        )));
    }
    let n = h.dim();
    if duration == 0.0 {
        return Ok(AffinePropagator::identity(n));
    }
    let sig = symplectic_form(h.n_modes());
    let a = &sig * &h.v;
    let b = &sig * &h.c;
    let mut aug = DMatrix::<f64>::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * duration));
    aug.view_mut((0, n), (n, 1)).copy_from(&(b * duration));
    let e = aug.exp();
    Ok(AffinePropagator {
        s: e.view((0, 0), (n, n)).into_owned(),
        d: e.view((0, n), (n, 1)).column(0).into_owned(),
    })
}

/// Right-to-left composition: the last element acts first.
pub fn compose(seq: &[AffinePropagator]) -> Result<AffinePropagator> {
    let Some(last) = seq.last() else {
        return Err(Error::Dimension("cannot compose an empty sequence".into()));
    };
    seq.iter().rev().skip(1).try_fold(last.clone(), |acc, p| acc.then(p))
}

/// Time-ordered composition of `(h, duration)` segments.
pub fn evolve_segments(segments: &[(QuadraticHamiltonian, f64)]) -> Result<AffinePropagator> {
    let dim = segments.first().map_or(0, |s| s.0.dim());
    segments
        .iter()
        .try_fold(AffinePropagator::identity(dim), |acc, (h, t)| {
            acc.then(&segment_propagator(h, *t)?)
        })
}

/// `H'(R) = H(S R + d)`: `V' = SᵀVS`, `c' = Sᵀ(Vd + c)` (constant dropped).
pub fn conjugate_hamiltonian(h: &QuadraticHamiltonian, p: &AffinePropagator) -> Result<QuadraticHamiltonian> {
    if h.dim() != p.dim() {
        return Err(Error::Dimension(format!(
            "{}-dimensional Hamiltonian under a {}-dimensional map",
            h.dim(),
            p.dim()
        )));
    }
    let v = p.s.transpose() * &h.v * &p.s;
    let c = p.s.transpose() * (&h.v * &p.d + &h.c);
    Ok(QuadraticHamiltonian {
        v: (&v + v.transpose()) * 0.5,
        c,
    })
}

/// Highest nested bracket order tried before declaring the series open.
pub const MAX_BCH_ORDER: usize = 6;

/// Effective Hamiltonian of the block `{−Ωô (t_p), h (t_f), +Ωô (t_p)}` in
/// the strong-pulse limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BchEffective {
    /// `h + Ω t_p · i[h, ô]`.
    pub first_order: QuadraticHamiltonian,
    /// Sum of the higher nested brackets.
    pub residual: QuadraticHamiltonian,
    /// Order at which the nested brackets vanish.
    pub terminating_order: usize,
}

impl BchEffective {
    /// The full transformed Hamiltonian `h ∘ P`, with `P` the flow of the
    /// first pulse.
    pub fn exact(&self) -> QuadraticHamiltonian {
        self.first_order.plus(&self.residual)
    }
}

/// Transforms `h` by the pulse `−Ω ô` of length `t_p`.
///
/// The nested brackets `ad_ô^k h` must vanish at some finite order (for
/// quadratic generators this is the nilpotent case); the first-order part
/// and the remainder are returned separately.
pub fn bch_effective_hamiltonian(
    h: &QuadraticHamiltonian,
    pulse: &QuadraticHamiltonian,
    omega: f64,
    t_p: f64,
) -> Result<BchEffective> {
    let theta = omega * t_p;
    let pulse_scale = pulse.max_abs();
    // term_k = (θ^k / k!) (i[·, ô])^k h
    let mut term = h.clone();
    let mut first_order = h.clone();
    let mut residual = QuadraticHamiltonian::zeros(h.n_modes());
    for k in 1..=MAX_BCH_ORDER + 1 {
        let bracket = QuadraticHamiltonian::lie_bracket(&term, pulse)?;
        if bracket.max_abs() <= 1e-12 * term.max_abs() * pulse_scale {
            return Ok(BchEffective {
                first_order,
                residual,
                terminating_order: k,
            });
        }
        if k > MAX_BCH_ORDER {
            break;
        }
        term = bracket.scaled(theta / k as f64);
        if k == 1 {
            first_order = first_order.plus(&term);
        } else {
            residual = residual.plus(&term);
        }
    }
    let labels = ["1", "2", "3", "4", "5", "6"];
    let offending = QuadraticHamiltonian::lie_bracket(&QuadraticHamiltonian::lie_bracket(h, pulse)?, pulse)?;
    Err(Error::UnsupportedSequence(format!(
        "nested brackets of the pulse generator do not terminate; i[i[h, o], o] has terms {:?}",
        offending.terms(&labels[..h.n_modes().min(6)], 1e-12)
    )))
}

/// Single-mode Bogoliubov transformation `b = u a + v a†` diagonalizing
/// `α x² + β p²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovParams {
    pub u: Complex64,
    pub v: Complex64,
    pub alpha: f64,
    pub beta: f64,
    pub delta_prime: f64,
    pub z_plus: f64,
    pub z_minus: f64,
}

/// `u, v = ½(√α ± √β)/(αβ)^{1/4}` and `Δ' = 2√(αβ)`, so that
/// `αx² + βp² = Δ'(b†b + ½)`.
pub fn bogoliubov_from_quadratic(alpha: f64, beta: f64) -> Result<BogoliubovParams> {
    if !(alpha.is_finite() && beta.is_finite() && alpha > 0.0 && beta > 0.0) {
        return Err(Error::Domain(format!("need α, β > 0, got {alpha}, {beta}")));
    }
    let (sa, sb) = (alpha.sqrt(), beta.sqrt());
    let q = (alpha * beta).powf(0.25);
    Ok(BogoliubovParams {
        u: Complex64::new(0.5 * (sa + sb) / q, 0.0),
        v: Complex64::new(0.5 * (sa - sb) / q, 0.0),
        alpha,
        beta,
        delta_prime: 2.0 * (alpha * beta).sqrt(),
        z_plus: (alpha / beta).powf(0.25),
        z_minus: (beta / alpha).powf(0.25),
    })
}

impl BogoliubovParams {
    pub fn normalization(&self) -> f64 {
        self.u.norm_sqr() - self.v.norm_sqr()
    }

    /// Real map `(x, p) → (x', p')` induced on the quadratures.
    pub fn quadrature_map(&self) -> Matrix2<f64> {
        let (s, d) = (self.u + self.v, self.u - self.v);
        Matrix2::new(s.re, -d.im, s.im, d.re)
    }

    /// The transformation with `v → −v`, whose quadrature map is the inverse
    /// transpose of this one.
    pub fn mirrored(&self) -> Self {
        Self {
            v: -self.v,
            alpha: self.beta,
            beta: self.alpha,
            z_plus: self.z_minus,
            z_minus: self.z_plus,
            ..*self
        }
    }

    /// Largest entry of `Mᵀ (Δ' 1) M − 2 diag(α, β)`: zero when
    /// `Δ'(x'² + p'²)/2` reproduces `αx² + βp²`.
    pub fn congruence_deviation(&self) -> f64 {
        let m = self.quadrature_map();
        let lhs = m.transpose() * m * self.delta_prime;
        let rhs = Matrix2::new(2.0 * self.alpha, 0.0, 0.0, 2.0 * self.beta);
        (lhs - rhs).amax()
    }
}

/// Spectral-norm deviation of the form `x_s x_m + p_s p_m` after the two
/// modes are transformed by `on_s` and `on_m`.
pub fn beamsplitter_invariance_check(on_s: &BogoliubovParams, on_m: &BogoliubovParams) -> f64 {
    let mut t = DMatrix::<f64>::zeros(4, 4);
    t.view_mut((0, 0), (2, 2)).copy_from(&on_s.quadrature_map());
    t.view_mut((2, 2), (2, 2)).copy_from(&on_m.quadrature_map());
    let mut bs = QuadraticHamiltonian::zeros(2);
    bs.add_product(0, 2, 1.0).add_product(1, 3, 1.0);
    let transformed = t.transpose() * &bs.v * &t;
    (transformed - &bs.v).singular_values().max()
}
