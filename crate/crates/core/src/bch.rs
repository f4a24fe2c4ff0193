//! Analytical pulse schedules built from BCH blocks `{−Ωô, 0, Ωô}`.
//!
//! Segment amplitudes are operator coefficients: a `GImag` control of
//! amplitude `A` adds `A · p_c x_m` to the Hamiltonian, a `DriveXa` control
//! adds `A · x_a`, and so on. [`PulseSchedule::to_coupling_segments`] maps the
//! linear-regime channels back to the complex coupling `G`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::drive::DriveSegment;
use crate::error::{Error, Result};
use crate::params::SystemParams;
use crate::quadratic::QuadraticHamiltonian;
use crate::symplectic::{bch_effective_hamiltonian, conjugate_hamiltonian, segment_propagator};

/// Strong-pulse validity threshold for `Ω t₁`.
pub const STRONG_PULSE_RATIO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlTarget {
    /// `x_c x_m`
    GReal,
    /// `p_c x_m`
    GImag,
    DriveXa,
    DrivePa,
    DriveXs,
    DrivePs,
}

impl ControlTarget {
    pub fn operator(&self) -> &'static str {
        match self {
            ControlTarget::GReal => "x_c*x_m",
            ControlTarget::GImag => "p_c*x_m",
            ControlTarget::DriveXa => "x_a",
            ControlTarget::DrivePa => "p_a",
            ControlTarget::DriveXs => "x_s",
            ControlTarget::DrivePs => "p_s",
        }
    }

    pub fn is_linear_regime(&self) -> bool {
        matches!(self, ControlTarget::GReal | ControlTarget::GImag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    /// Simultaneously applied controls; empty for free evolution.
    pub controls: Vec<(ControlTarget, f64)>,
    pub duration: f64,
    pub label: String,
}

impl PulseSegment {
    pub fn free(duration: f64, label: &str) -> Self {
        Self {
            controls: Vec::new(),
            duration,
            label: label.into(),
        }
    }

    pub fn pulse(target: ControlTarget, amplitude: f64, duration: f64, label: &str) -> Self {
        Self {
            controls: vec![(target, amplitude)],
            duration,
            label: label.into(),
        }
    }

    pub fn amplitude(&self, target: ControlTarget) -> f64 {
        self.controls.iter().filter(|c| c.0 == target).map(|c| c.1).sum()
    }

    pub fn is_free(&self) -> bool {
        self.controls.iter().all(|c| c.1 == 0.0)
    }
}

/// One predicted effective-Hamiltonian term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTerm {
    pub operator: String,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicted {
    /// Linear regime: full quadratic effective Hamiltonian over `(x_c, p_c, x_m, p_m)`.
    Quadratic(QuadraticHamiltonian),
    /// Nonlinear regime: correction terms on top of the free Hamiltonian.
    Terms(Vec<PredictedTerm>),
}

impl Predicted {
    pub fn terms(&self) -> Vec<PredictedTerm> {
        match self {
            Predicted::Quadratic(h) => h
                .terms(&["c", "m"], 1e-14)
                .into_iter()
                .map(|(operator, coefficient)| PredictedTerm { operator, coefficient })
                .collect(),
            Predicted::Terms(t) => t.clone(),
        }
    }

    pub fn coefficient(&self, operator: &str) -> f64 {
        self.terms()
            .iter()
            .filter(|t| t.operator == operator)
            .map(|t| t.coefficient)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSchedule {
    pub segments: Vec<PulseSegment>,
    pub predicted: Predicted,
    /// Time over which `predicted` acts per cycle.
    pub effective_time: f64,
    pub warnings: Vec<String>,
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl PulseSchedule {
    pub fn total_time(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Flattened `(label, duration)` time vector.
    pub fn time_vector(&self) -> Vec<(String, f64)> {
        self.segments.iter().map(|s| (s.label.clone(), s.duration)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.segments.iter().enumerate() {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(Error::Domain(format!(
                    "segment {k} has non-positive duration {}",
                    s.duration
                )));
            }
            if s.controls.iter().any(|c| !c.1.is_finite()) {
                return Err(Error::Domain(format!("segment {k} has a non-finite amplitude")));
            }
        }
        Ok(())
    }

    /// Piecewise-constant `G` for the covariance engine:
    /// `Re G = A_x/√2`, `Im G = −A_p/√2`.
    pub fn to_coupling_segments(&self) -> Result<Vec<(Complex64, f64)>> {
        self.segments
            .iter()
            .map(|s| {
                if let Some(c) = s.controls.iter().find(|c| !c.0.is_linear_regime()) {
                    return Err(Error::UnsupportedSequence(format!(
                        "{} drive has no linear-regime coupling equivalent",
                        c.0.operator()
                    )));
                }
                let g = Complex64::new(
                    s.amplitude(ControlTarget::GReal) / SQRT_2,
                    -s.amplitude(ControlTarget::GImag) / SQRT_2,
                );
                Ok((g, s.duration))
            })
            .collect()
    }

    /// Laser drive form `{omega, phi, duration}` of a schedule that drives a
    /// single cavity mode: `f_x x + f_p p = Ω(a† e^{−iφ} + a e^{iφ})`.
    pub fn to_drive_segments(&self) -> Result<Vec<DriveSegment>> {
        let mut mode = None;
        self.segments
            .iter()
            .map(|s| {
                let (mut fx, mut fp) = (0.0, 0.0);
                for &(t, a) in &s.controls {
                    let (m, is_x) = match t {
                        ControlTarget::DriveXa => ('a', true),
                        ControlTarget::DrivePa => ('a', false),
                        ControlTarget::DriveXs => ('s', true),
                        ControlTarget::DrivePs => ('s', false),
                        _ => {
                            return Err(Error::UnsupportedSequence(
                                "coupling channels need the coupling inversion, not a direct drive".into(),
                            ))
                        }
                    };
                    if *mode.get_or_insert(m) != m {
                        return Err(Error::UnsupportedSequence("schedule drives more than one mode".into()));
                    }
                    if is_x {
                        fx += a;
                    } else {
                        fp += a;
                    }
                }
                DriveSegment::new(fx.hypot(fp) / SQRT_2, (-fp).atan2(fx), s.duration)
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::schema(e.path().to_string(), e.inner().to_string()))?;
        s.validate()?;
        Ok(s)
    }
}

/// Free two-mode Hamiltonian `Δ(x_c² + p_c²)/2 + ν(x_m² + p_m²)/2`.
pub fn free_hamiltonian(params: &SystemParams) -> QuadraticHamiltonian {
    let mut h = QuadraticHamiltonian::zeros(2);
    h.add_oscillator(0, params.delta).add_oscillator(1, params.nu);
    h
}

fn control_operator(target: ControlTarget) -> Result<QuadraticHamiltonian> {
    let mut h = QuadraticHamiltonian::zeros(2);
    match target {
        ControlTarget::GReal => h.add_product(0, 2, 1.0),
        ControlTarget::GImag => h.add_product(1, 2, 1.0),
        other => {
            return Err(Error::UnsupportedSequence(format!(
                "{} is not a linear-regime control",
                other.operator()
            )))
        }
    };
    Ok(h)
}

/// Quadratic Hamiltonian of a linear-regime segment (free part plus controls).
pub fn segment_hamiltonian(params: &SystemParams, segment: &PulseSegment) -> Result<QuadraticHamiltonian> {
    let mut h = free_hamiltonian(params);
    for &(t, a) in &segment.controls {
        h = h.plus(&control_operator(t)?.scaled(a));
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sideband {
    /// Beam-splitter `x_c x_m + p_c p_m`.
    #[default]
    Red,
    /// Two-mode squeezing `x_c x_m − p_c p_m`.
    Blue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compensation {
    /// `x_c x_m` correction applied during the free segment.
    #[default]
    Concurrent,
    /// `x_c x_m` correction as a fourth pulse of length `t₁`.
    Separate,
}

fn resonance_warning(delta: f64, target: f64, what: &str) -> Option<String> {
    ((delta - target).abs() > 1e-9 * target.abs().max(1.0))
        .then(|| format!("resonance condition violated: Δ = {delta} but {what} requires Δ = {target}"))
}

/// Linear-regime sideband sequence `{∓G p_c x_m, 0, ±G p_c x_m}` with time
/// vector `(t₁, t_f, t₁)`.
///
/// With `θ = G t₁` the block transforms the free Hamiltonian into
/// `H₀ + θ(ν p_c p_m − Δ x_c x_m) + (θ²/2)(Δ x_m² + ν p_c²)`. For the red
/// sideband a `2θΔ x_c x_m` correction flips the sign of the `x_c x_m` term,
/// giving `θν (x_c x_m + p_c p_m)` at `Δ = ν`. Reversing the pulse order
/// without correction gives the blue sideband `θν (x_c x_m − p_c p_m)`.
pub fn compile_linear_beamsplitter(
    params: &SystemParams,
    g: f64,
    t1: f64,
    tf: f64,
    sideband: Sideband,
    compensation: Compensation,
) -> Result<PulseSchedule> {
    params.validate()?;
    if !(t1 > 0.0 && tf > 0.0) || !g.is_finite() {
        return Err(Error::Domain(format!(
            "need t₁, t_f > 0 and finite G, got {t1}, {tf}, {g}"
        )));
    }
    let mut warnings: Vec<String> = resonance_warning(params.delta, params.nu, "the sideband sequence")
        .into_iter()
        .collect();
    let theta = g * t1;
    let h0 = free_hamiltonian(params);
    let mut metadata = BTreeMap::new();
    metadata.insert("theta".into(), theta.into());
    metadata.insert("sequence".into(), "linear_sideband".into());

    let sign = match sideband {
        Sideband::Red => 1.0,
        Sideband::Blue => -1.0,
    };
    let first = PulseSegment::pulse(ControlTarget::GImag, -sign * g, t1, "pulse");
    let last = PulseSegment::pulse(ControlTarget::GImag, sign * g, t1, "counter_pulse");
    let o = control_operator(ControlTarget::GImag)?;
    let eff = bch_effective_hamiltonian(&h0, &o, sign * g, t1)?;

    let (segments, predicted) = match (sideband, g == 0.0) {
        (_, true) => (vec![PulseSegment::free(tf, "free")], h0.clone()),
        (Sideband::Blue, false) => (vec![first, PulseSegment::free(tf, "free"), last], eff.exact()),
        (Sideband::Red, false) => {
            let corr = 2.0 * theta * params.delta;
            let x = control_operator(ControlTarget::GReal)?;
            let p1 = segment_propagator(&o.scaled(-g), t1)?;
            match compensation {
                Compensation::Concurrent => {
                    let free = PulseSegment::pulse(ControlTarget::GReal, corr, tf, "free_compensated");
                    let predicted = eff.exact().plus(&conjugate_hamiltonian(&x.scaled(corr), &p1)?);
                    (vec![first, free, last], predicted)
                }
                Compensation::Separate => {
                    let comp = PulseSegment::pulse(ControlTarget::GReal, corr * tf / t1, t1, "compensation");
                    // The correction pulse acts outside the BCH block: to first
                    // order it adds its time-averaged generator.
                    let predicted = eff.exact().plus(&x.scaled(corr));
                    warnings.push(
                        "separate compensation: Trotter error of order (θΔ t_f)² independent of pulse strength".into(),
                    );
                    (vec![first, PulseSegment::free(tf, "free"), last, comp], predicted)
                }
            }
        }
    };
    let rate = match (sideband, g == 0.0) {
        (_, true) => 0.0,
        _ => theta * params.nu,
    };
    metadata.insert("sideband_coefficient".into(), rate.into());
    Ok(PulseSchedule {
        segments,
        predicted: Predicted::Quadratic(predicted),
        effective_time: tf,
        warnings,
        metadata,
    })
}

/// Parameters of the double-cavity nested swap sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSwapSpec {
    /// Pulse strength on `x_a`.
    pub omega: f64,
    pub t1: f64,
    pub tf: f64,
    pub tf_prime: f64,
    pub alpha: f64,
}

/// Beam-splitter coefficient `ν g₀ τ₁` and derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwapTiming {
    pub tau1: f64,
    pub t2: f64,
    pub t3: f64,
    pub beta: f64,
    /// `s = g₀ τ₁`.
    pub s: f64,
    /// Number of cycles for a complete swap, `π/(2ν s t'_f)`.
    pub cycles_for_swap: f64,
    pub counter_area: f64,
}

pub fn swap_timing(params: &SystemParams, spec: &NonlinearSwapSpec) -> SwapTiming {
    let theta = spec.omega * spec.t1;
    let t2 = 2.0 * spec.t1 + spec.tf;
    let tau1 = theta * t2;
    let s = params.g0 * tau1;
    SwapTiming {
        tau1,
        t2,
        t3: 2.0 * t2 + spec.tf_prime,
        beta: -((spec.alpha + 2.0) / 2.0) * params.delta * theta,
        s,
        cycles_for_swap: FRAC_PI_2 / (params.nu * s * spec.tf_prime),
        counter_area: spec.alpha / 2.0 * params.delta.powi(2) * tau1 * spec.tf_prime,
    }
}

/// Resonant detuning `2ν/(α − 2)`.
pub fn nonlinear_resonance(params: &SystemParams, alpha: f64) -> Result<f64> {
    if (alpha - 2.0).abs() < 1e-12 {
        return Err(Error::Domain("α = 2 makes the resonance condition singular".into()));
    }
    Ok(2.0 * params.nu / (alpha - 2.0))
}

/// One cycle of the nested double-cavity sequence
/// `{{−Ωx_a, βp_a, Ωx_a}, 0, {Ωx_a, −βp_a, −Ωx_a}}` with time vector
/// `((t₁, t_f, t₁), t'_f, (t₁, t_f, t₁))`, followed by an `x_a` counter pulse.
///
/// The inner block adds `g₀Ωt₁ p_s x_m − (α/2)ΔΩt₁ p_a` (with
/// `β = −((α+2)/2)ΔΩt₁`); the outer nesting acts on the free period with
/// `τ₁ = Ωt₁t₂` and produces the predicted terms below. The counter pulse of
/// area `(α/2)Δ²τ₁t'_f` removes the accumulated `x_a` drive.
pub fn compile_nonlinear_swap(params: &SystemParams, spec: &NonlinearSwapSpec) -> Result<PulseSchedule> {
    params.validate()?;
    let resonance = nonlinear_resonance(params, spec.alpha)?;
    for (name, v) in [("t1", spec.t1), ("tf", spec.tf), ("tf_prime", spec.tf_prime)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !spec.omega.is_finite() {
        return Err(Error::Domain("Ω must be finite".into()));
    }
    let mut warnings: Vec<String> = resonance_warning(params.delta, resonance, "the nested swap")
        .into_iter()
        .collect();
    let ratio = spec.omega * spec.t1;
    if ratio.abs() < STRONG_PULSE_RATIO {
        warnings.push(format!(
            "strong-pulse limit not reached: Ωt₁ = {ratio:.3} < {STRONG_PULSE_RATIO}"
        ));
    }
    let tm = swap_timing(params, spec);
    let (om, t1, tf) = (spec.omega, spec.t1, spec.tf);
    let beta = tm.beta;
    use ControlTarget::{DrivePa, DriveXa};
    let segments = vec![
        PulseSegment::pulse(DriveXa, -om, t1, "inner1_pulse"),
        PulseSegment::pulse(DrivePa, beta, tf, "inner1_drive"),
        PulseSegment::pulse(DriveXa, om, t1, "inner1_counter"),
        PulseSegment::free(spec.tf_prime, "outer_free"),
        PulseSegment::pulse(DriveXa, om, t1, "inner2_pulse"),
        PulseSegment::pulse(DrivePa, -beta, tf, "inner2_drive"),
        PulseSegment::pulse(DriveXa, -om, t1, "inner2_counter"),
        PulseSegment::pulse(DriveXa, tm.counter_area / t1, t1, "xa_counter"),
    ];

    let (g0, d, nu, a, s) = (params.g0, params.delta, params.nu, spec.alpha, tm.s);
    let term = |op: &str, c: f64| PredictedTerm {
        operator: op.into(),
        coefficient: c,
    };
    let predicted = vec![
        term("x_s*x_m", s * d * (1.0 - a / 2.0)),
        term("p_s*p_m", -nu * s),
        term("p_s^2", nu * s * s / 2.0),
        term("x_m^2", (1.0 - a) * d * s * s / 2.0),
        term("x_a*x_m^2", g0 * g0 * tm.tau1),
        term("x_a", -(a / 2.0) * d * d * tm.tau1),
    ];

    let mut metadata = BTreeMap::new();
    metadata.insert("sequence".into(), "double_cavity_swap".into());
    metadata.insert("tau1".into(), tm.tau1.into());
    metadata.insert("t2".into(), tm.t2.into());
    metadata.insert("t3".into(), tm.t3.into());
    metadata.insert("beta".into(), beta.into());
    metadata.insert("s".into(), s.into());
    metadata.insert("cycles_for_swap".into(), tm.cycles_for_swap.into());
    metadata.insert("resonant_delta".into(), resonance.into());
    metadata.insert("counter_area".into(), tm.counter_area.into());
    metadata.insert("omega_t1".into(), ratio.into());
    Ok(PulseSchedule {
        segments,
        predicted: Predicted::Terms(predicted),
        effective_time: spec.tf_prime,
        warnings,
        metadata,
    })
}

/// Concatenates `n` copies of the schedule.
pub fn repeat(schedule: &PulseSchedule, n: usize) -> PulseSchedule {
    let mut out = schedule.clone();
    out.segments = (0..n).flat_map(|_| schedule.segments.iter().cloned()).collect();
    out.metadata.insert("repetitions".into(), n.into());
    out
}

/// Splits the schedule into `repetitions` shorter cycles.
///
/// Each copy keeps the amplitudes and divides every duration by
/// `repetitions`, so the total time is unchanged. A fractional repetition
/// count ends with a partial cycle cut at the total time.
pub fn trotterize(schedule: &PulseSchedule, repetitions: f64) -> Result<PulseSchedule> {
    if !(repetitions.is_finite() && repetitions >= 1.0) {
        return Err(Error::Domain(format!("repetitions must be ≥ 1, got {repetitions}")));
    }
    let total = schedule.total_time();
    let scaled: Vec<PulseSegment> = schedule
        .segments
        .iter()
        .map(|s| PulseSegment {
            duration: s.duration / repetitions,
            ..s.clone()
        })
        .collect();
    let mut segments = Vec::new();
    let mut t = 0.0;
    let eps = 1e-12 * total.max(1.0);
    'outer: loop {
        for s in &scaled {
            let remaining = total - t;
            if remaining <= eps {
                break 'outer;
            }
            let d = if s.duration <= remaining + eps {
                s.duration
            } else {
                remaining
            };
            segments.push(PulseSegment {
                duration: d,
                ..s.clone()
            });
            t += d;
        }
    }
    let mut out = schedule.clone();
    out.segments = segments;
    out.effective_time = schedule.effective_time / repetitions;
    out.metadata.insert("trotter_repetitions".into(), repetitions.into());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symplectic::{evolve_segments, AffinePropagator};

    fn resonant() -> SystemParams {
        SystemParams::default()
    }

    fn oracle(params: &SystemParams, s: &PulseSchedule) -> AffinePropagator {
        let segs: Vec<_> = s
            .segments
            .iter()
            .map(|seg| (segment_hamiltonian(params, seg).unwrap(), seg.duration))
            .collect();
        evolve_segments(&segs).unwrap()
    }

    fn relative_error(params: &SystemParams, s: &PulseSchedule) -> f64 {
        let Predicted::Quadratic(h) = &s.predicted else {
            panic!()
        };
        let exact = oracle(params, s);
        let pred = segment_propagator(h, s.effective_time).unwrap();
        (&exact.s - &pred.s).norm() / pred.s.norm()
    }

    #[test]
    fn red_sideband_coefficients() {
        let p = resonant();
        let s = compile_linear_beamsplitter(&p, 1.0, 0.01, 0.5, Sideband::Red, Compensation::Concurrent).unwrap();
        assert!(s.warnings.is_empty());
        assert_eq!(s.segments.len(), 3);
        let pr = &s.predicted;
        assert!((pr.coefficient("x_c*x_m") - 0.01).abs() < 1e-15);
        assert!((pr.coefficient("p_c*p_m") - 0.01).abs() < 1e-15);
        assert!((pr.coefficient("x_m^2") - (0.5 - 1.5 * 1e-4)).abs() < 1e-15);
        assert!((pr.coefficient("p_c^2") - (0.5 + 0.5 * 1e-4)).abs() < 1e-15);
        // Counter pulse is the exact negation of the pulse.
        assert_eq!(
            s.segments[0].amplitude(ControlTarget::GImag),
            -s.segments[2].amplitude(ControlTarget::GImag)
        );
    }

    #[test]
    fn blue_sideband_operator() {
        let p = resonant();
        let s = compile_linear_beamsplitter(&p, 2.0, 0.05, 0.5, Sideband::Blue, Compensation::Concurrent).unwrap();
        let pr = &s.predicted;
        assert!((pr.coefficient("x_c*x_m") - 0.1).abs() < 1e-15);
        assert!((pr.coefficient("p_c*p_m") + 0.1).abs() < 1e-15);
        assert!(s.segments[0].amplitude(ControlTarget::GImag) > 0.0);
    }

    #[test]
    fn zero_strength_is_free_evolution() {
        let p = resonant();
        let s = compile_linear_beamsplitter(&p, 0.0, 0.01, 0.5, Sideband::Red, Compensation::Concurrent).unwrap();
        assert!(s.segments.iter().all(|x| x.is_free()));
        let Predicted::Quadratic(h) = &s.predicted else {
            panic!()
        };
        assert!(h.minus(&free_hamiltonian(&p)).is_zero(0.0));
    }

    #[test]
    fn off_resonance_warns() {
        let p = SystemParams {
            delta: 1.2,
            ..Default::default()
        };
        let s = compile_linear_beamsplitter(&p, 1.0, 0.01, 0.5, Sideband::Red, Compensation::Concurrent).unwrap();
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn strong_pulse_convergence_slope() {
        let p = resonant();
        let theta = 0.3;
        let errs: Vec<(f64, f64)> = [1e2, 1e3, 1e4]
            .iter()
            .map(|&om| {
                let s = compile_linear_beamsplitter(&p, om, theta / om, 0.4, Sideband::Red, Compensation::Concurrent)
                    .unwrap();
                (om, relative_error(&p, &s))
            })
            .collect();
        let slope = (errs[2].1.ln() - errs[0].1.ln()) / (errs[2].0.ln() - errs[0].0.ln());
        assert!((-1.2..=-0.8).contains(&slope), "slope {slope}, errors {errs:?}");
    }

    #[test]
    fn separate_compensation_error_saturates() {
        let p = resonant();
        let err = |om: f64| {
            let s = compile_linear_beamsplitter(&p, om, 0.3 / om, 0.4, Sideband::Red, Compensation::Separate).unwrap();
            relative_error(&p, &s)
        };
        let (e3, e4) = (err(1e3), err(1e4));
        assert!(e4 > 0.5 * e3, "{e3} {e4}");
    }

    #[test]
    fn coupling_mapping() {
        let seg = PulseSegment {
            controls: vec![(ControlTarget::GReal, 1.0), (ControlTarget::GImag, 2.0)],
            duration: 0.1,
            label: "x".into(),
        };
        let s = PulseSchedule {
            segments: vec![seg.clone()],
            predicted: Predicted::Terms(vec![]),
            effective_time: 0.1,
            warnings: vec![],
            metadata: BTreeMap::new(),
        };
        let (g, _) = s.to_coupling_segments().unwrap()[0];
        assert!((g - Complex64::new(1.0 / SQRT_2, -2.0 / SQRT_2)).norm() < 1e-15);
        // The covariance-engine Hamiltonian reproduces the segment operators.
        let p = resonant();
        let hc = crate::covariance::build_linear_hamiltonian(&p, g);
        let hs = segment_hamiltonian(&p, &seg).unwrap();
        assert!((hc.v - hs.v).amax() < 1e-15);
    }

    #[test]
    fn nonlinear_resonance_and_rejection() {
        let p = resonant();
        assert!((nonlinear_resonance(&p, 4.0).unwrap() - 1.0).abs() < 1e-15);
        let spec = NonlinearSwapSpec {
            omega: 1000.0,
            t1: 0.005,
            tf: 0.04,
            tf_prime: 0.3,
            alpha: 2.0,
        };
        assert!(compile_nonlinear_swap(&p, &spec).is_err());
    }

    #[test]
    fn nonlinear_beamsplitter_pair_balanced_at_resonance() {
        for alpha in [3.0, 4.0, 6.0, 10.0] {
            let p = SystemParams {
                g0: 0.3,
                delta: 2.0 / (alpha - 2.0),
                ..Default::default()
            };
            let spec = NonlinearSwapSpec {
                omega: 4000.0,
                t1: 0.0025,
                tf: 0.025,
                tf_prime: 0.3,
                alpha,
            };
            let s = compile_nonlinear_swap(&p, &spec).unwrap();
            assert!(s.warnings.is_empty(), "{:?}", s.warnings);
            let pr = &s.predicted;
            assert!((pr.coefficient("x_s*x_m") - pr.coefficient("p_s*p_m")).abs() < 1e-14);
        }
    }

    #[test]
    fn nonlinear_warnings_and_structure() {
        let p = SystemParams {
            g0: 0.3,
            delta: 1.5,
            ..Default::default()
        };
        let spec = NonlinearSwapSpec {
            omega: 100.0,
            t1: 0.005,
            tf: 0.04,
            tf_prime: 0.3,
            alpha: 4.0,
        };
        let s = compile_nonlinear_swap(&p, &spec).unwrap();
        assert_eq!(s.warnings.len(), 2);
        assert_eq!(s.segments.len(), 8);
        let amp = |k: usize, t| s.segments[k].amplitude(t);
        assert_eq!(amp(0, ControlTarget::DriveXa), -amp(2, ControlTarget::DriveXa));
        assert_eq!(amp(4, ControlTarget::DriveXa), -amp(6, ControlTarget::DriveXa));
        assert_eq!(amp(1, ControlTarget::DrivePa), -amp(5, ControlTarget::DrivePa));
        let tm = swap_timing(&p, &spec);
        assert!((tm.beta - (-3.0 * 1.5 * 0.5)).abs() < 1e-14);
        assert!((s.total_time() - (tm.t3 + spec.t1)).abs() < 1e-14);
    }

    #[test]
    fn trotterize_counts_and_time() {
        let p = resonant();
        let base = compile_linear_beamsplitter(&p, 10.0, 0.1, 0.1, Sideband::Red, Compensation::Separate).unwrap();
        assert_eq!(base.segments.len(), 4);
        let same = trotterize(&base, 1.0).unwrap();
        assert_eq!(same.segments, base.segments);
        let t30 = trotterize(&base, 7.5).unwrap();
        assert_eq!(t30.segments.len(), 30);
        let t300 = trotterize(&base, 75.0).unwrap();
        assert_eq!(t300.segments.len(), 300);
        for t in [&t30, &t300] {
            assert!((t.total_time() - base.total_time()).abs() < 1e-12);
        }
        assert_eq!(
            t30.segments[29].amplitude(ControlTarget::GImag),
            base.segments[1].amplitude(ControlTarget::GImag)
        );
        assert!(trotterize(&base, 0.5).is_err());
    }

    #[test]
    fn repeat_concatenates() {
        let p = resonant();
        let base = compile_linear_beamsplitter(&p, 10.0, 0.1, 0.1, Sideband::Red, Compensation::Concurrent).unwrap();
        let r = repeat(&base, 3);
        assert_eq!(r.segments.len(), 9);
        assert!((r.total_time() - 3.0 * base.total_time()).abs() < 1e-14);
    }

    #[test]
    fn drive_form_of_nonlinear_schedule() {
        let p = SystemParams {
            g0: 0.3,
            ..Default::default()
        };
        let spec = NonlinearSwapSpec {
            omega: 4000.0,
            t1: 0.0025,
            tf: 0.025,
            tf_prime: 0.3,
            alpha: 4.0,
        };
        let s = compile_nonlinear_swap(&p, &spec).unwrap();
        let d = s.to_drive_segments().unwrap();
        assert_eq!(d.len(), s.segments.len());
        // Ω√2 (x cos φ − p sin φ) reproduces f_x x + f_p p.
        for (seg, ds) in s.segments.iter().zip(&d) {
            let fx = seg.amplitude(ControlTarget::DriveXa);
            let fp = seg.amplitude(ControlTarget::DrivePa);
            assert!((ds.omega * SQRT_2 * ds.phi.cos() - fx).abs() < 1e-9 * (1.0 + fx.abs()));
            assert!((-ds.omega * SQRT_2 * ds.phi.sin() - fp).abs() < 1e-9 * (1.0 + fp.abs()));
        }
        let back = PulseSchedule::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }
}
