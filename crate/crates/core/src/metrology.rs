//! Quantum and classical Fisher information for the position parameter.

use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::kernels::{honest_fidelity_defect, q_sum, QWeight};
use crate::model::{Complex, ProbeSpec, Unitary2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QfiMethod {
    ClosedForm,
    FiniteDifference,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QfiResult {
    pub value: f64,
    pub method: QfiMethod,
    /// Standard error, Monte Carlo estimates only.
    pub stderr: Option<f64>,
    /// Set when the finite-difference step is too coarse for the probe
    /// (`dy·β·N² > 0.1`).
    pub step_warning: bool,
}

impl QfiResult {
    pub fn closed(value: f64) -> Self {
        Self { value, method: QfiMethod::ClosedForm, stderr: None, step_warning: false }
    }
}

/// Default step `1e-3 / (β N)`.
pub fn default_fd_step(probe: &ProbeSpec) -> f64 {
    1e-3 / (probe.beta() * probe.n_photons() as f64)
}

fn infidelity(u: &Unitary2, probe: &ProbeSpec, y: f64, h: f64) -> Result<f64> {
    let d = honest_fidelity_defect(u, probe, y, h)?;
    // 1 − |1 + d| without subtracting nearly equal numbers
    let one_plus = (Complex::new(1.0, 0.0) + d).norm();
    Ok(-(2.0 * d.re + d.norm_sqr()) / (1.0 + one_plus))
}

/// Single-step estimate `8/h² · (1 − |⟨φ_y|φ_{y±h}⟩|)`, averaged over the two
/// signs of `h` so the odd-order terms of a general `U` drop out.
pub fn qfi_fidelity_estimate(u: &Unitary2, probe: &ProbeSpec, y: f64, h: f64) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return param(format!("finite-difference step must be positive, got {h}"));
    }
    let gap = 0.5 * (infidelity(u, probe, y, h)? + infidelity(u, probe, y, -h)?);
    let f = 8.0 / (h * h) * gap;
    if !f.is_finite() {
        return Err(Error::Numeric(format!("non-finite fidelity at y = {y}, h = {h}")));
    }
    Ok(f)
}

/// QFI from the fidelity with one Richardson step over `dy` and `dy/2`.
pub fn qfi_finite_difference(u: &Unitary2, probe: &ProbeSpec, y: f64, dy: f64) -> Result<QfiResult> {
    let coarse = qfi_fidelity_estimate(u, probe, y, dy)?;
    let fine = qfi_fidelity_estimate(u, probe, y, 0.5 * dy)?;
    let value = ((4.0 * fine - coarse) / 3.0).max(0.0);
    let n = probe.n_photons() as f64;
    Ok(QfiResult {
        value,
        method: QfiMethod::FiniteDifference,
        stderr: None,
        step_warning: dy * probe.beta() * n * n > 0.1,
    })
}

/// `2 N (N+1) β²`, the QFI under the balanced beam splitter.
pub fn qfi_closed_form_balanced(probe: &ProbeSpec) -> QfiResult {
    let n = probe.n_photons() as f64;
    QfiResult::closed(2.0 * n * (n + 1.0) * probe.beta().powi(2))
}

/// `8 β² N²`, the single-sided QFI under pure reflection.
pub fn qfi_closed_form_single_sided(probe: &ProbeSpec) -> Result<QfiResult> {
    if !probe.is_single_sided() || (probe.amp_l().norm_sqr() - 1.0).abs() > 1e-12 {
        return param("single-sided closed form needs psi_l = 1, psi_r = 0");
    }
    let n = probe.n_photons() as f64;
    Ok(QfiResult::closed(8.0 * (probe.beta() * n).powi(2)))
}

/// Per-copy FI of the balanced measurement, `2 β² N²`. Multiply by `M` for `M` copies.
pub fn fi_closed_form_measurement(probe: &ProbeSpec) -> QfiResult {
    let n = probe.n_photons() as f64;
    QfiResult::closed(2.0 * (probe.beta() * n).powi(2))
}

/// Ratio of the single-sided QFI to the balanced one, `4N / (N + 1)`.
pub fn single_sided_advantage(n_photons: u32) -> f64 {
    let n = n_photons as f64;
    8.0 * n * n / (2.0 * n * (n + 1.0))
}

/// The closed-form QFI for an arbitrary prover unitary:
///
/// ```text
/// F = −16 e^{−2β²N²y²} N² y² β⁴ |S1|² + 4 Re S2
/// S1 = Σ_Q C [ψl*ψr a12^{N−Q} b12^Q (N−Q) + ψl ψr* a21^{N−Q} b21^Q Q]
/// S2 = Σ_Q C [ |ψl|² a11.. 2β²Q²
///            + (ψl*ψr a12.. + ψl ψr* a21..) e^{−β²N²y²} β²((N−Q)² + Q²)(1 − 2β²N²y²)
///            + |ψr|² a22.. 2β²(N−Q)² ]
/// ```
///
/// with `a_pq = U*_{0p} U_{0q}`, `b_pq = U*_{1p} U_{1q}`.
pub fn qfi_general_expression(u: &Unitary2, probe: &ProbeSpec, y: f64) -> Result<QfiResult> {
    if !y.is_finite() {
        return param("position must be finite");
    }
    let n = probe.n_photons();
    let nf = n as f64;
    let b2 = probe.beta().powi(2);
    let [pl, pr] = probe.amps();
    let w = |p: usize, q: usize| QWeight::new(u.get(0, p).conj() * u.get(0, q), u.get(1, p).conj() * u.get(1, q));
    let (w11, w12, w21, w22) = (w(0, 0)?, w(0, 1)?, w(1, 0)?, w(1, 1)?);
    let c12 = pl.conj() * pr;
    let c21 = pl * pr.conj();
    let ny2 = b2 * nf * nf * y * y;

    let s1 = c12 * q_sum(w12, |q| nf - q as f64, n)? + c21 * q_sum(w21, |q| q as f64, n)?;
    let cross_kernel = |q: u32| {
        let (a, b) = (nf - q as f64, q as f64);
        (-ny2).exp() * b2 * (a * a + b * b) * (1.0 - 2.0 * ny2)
    };
    let s2 = pl.norm_sqr() * q_sum(w11, |q| 2.0 * b2 * (q as f64).powi(2), n)?
        + c12 * q_sum(w12, cross_kernel, n)?
        + c21 * q_sum(w21, cross_kernel, n)?
        + pr.norm_sqr() * q_sum(w22, |q| 2.0 * b2 * (nf - q as f64).powi(2), n)?;
    let value = -16.0 * (-2.0 * ny2).exp() * nf * nf * y * y * b2 * b2 * s1.norm_sqr() + 4.0 * s2.re;
    if !value.is_finite() {
        return Err(Error::Numeric("general QFI expression is not finite".into()));
    }
    Ok(QfiResult::closed(value))
}
