//! Cheater strategies, their effective mode matrix, attack optimisation and
//! the P1/P2 bounds.
//!
//! Two cheaters straddle the claimed position. Each first mixes the incoming
//! pulse with an ancilla (`V` on the left, `W` on the right), keeps one output
//! and sends the other across; in the second round they apply `P` and `Q`.
//! Only the products below survive into the outgoing state:
//!
//! ```text
//! U′00 = V00 P00   U′01 = W01 P10
//! U′10 = V01 Q10   U′11 = W00 Q00
//! ```

pub mod simplex;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::kernels::{attack_overlap, overlap_general, KernelParams};
use crate::model::{probe_inner_product, Complex, Ensemble, Mat2, ProbeSpec, Unitary2};
use simplex::{minimize, SimplexOptions};

/// Slack on the effective-matrix column norms.
pub const EFFECTIVE_NORM_TOL: f64 = 1e-12;
/// Floor applied to frame-operator eigenvalues.
pub const EIGEN_FLOOR: f64 = 1e-12;
/// Largest ensemble handled by the Gram-matrix route.
pub const MAX_FORGERY_ENSEMBLE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackStrategy {
    pub v: Unitary2,
    pub w: Unitary2,
    pub p: Unitary2,
    pub q: Unitary2,
}

fn swap() -> Unitary2 {
    crate::model::make_reflection_u()
}

impl AttackStrategy {
    pub fn new(v: Unitary2, w: Unitary2, p: Unitary2, q: Unitary2) -> Self {
        Self { v, w, p, q }
    }

    pub fn identity() -> Self {
        let i = Unitary2::identity();
        Self::new(i, i, i, i)
    }

    /// Every sub-operation a swap; reproduces the pure reflection exactly.
    pub fn reflection_mimic() -> Self {
        Self::new(swap(), swap(), swap(), swap())
    }

    /// Copies the first column of `u` and discards the second:
    /// `U′ = [[U00, 0], [U10, 0]]` with `P00 = Q10 = 1`.
    pub fn half_mimic(u: &Unitary2) -> Self {
        let (a, b) = (u.get(0, 0), u.get(1, 0));
        let v = Unitary2::new(Mat2::new([[a, b], [-b.conj(), a.conj()]]))
            .expect("a unit column completes to a unitary");
        Self::new(v, Unitary2::identity(), Unitary2::identity(), swap())
    }

    /// Sixteen angles, four per sub-operation in the order `V, W, P, Q`.
    pub fn from_angles(x: &[f64]) -> Result<Self> {
        if x.len() != 16 {
            return param(format!("strategy needs 16 angles, got {}", x.len()));
        }
        let u = |k: usize| Unitary2::from_angles(x[4 * k], x[4 * k + 1], x[4 * k + 2], x[4 * k + 3]);
        Ok(Self::new(u(0), u(1), u(2), u(3)))
    }
}

/// The cheaters' effective 2×2 mode matrix; in general not unitary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveU {
    pub m: Mat2,
}

impl EffectiveU {
    pub fn column_norms(&self) -> [f64; 2] {
        [self.m.column_norm(0), self.m.column_norm(1)]
    }
}

pub fn effective_u(s: &AttackStrategy) -> EffectiveU {
    let m = Mat2::new([
        [s.v.get(0, 0) * s.p.get(0, 0), s.w.get(0, 1) * s.p.get(1, 0)],
        [s.v.get(0, 1) * s.q.get(1, 0), s.w.get(0, 0) * s.q.get(0, 0)],
    ]);
    let e = EffectiveU { m };
    debug_assert!(e.column_norms().iter().all(|&n| n <= 1.0 + EFFECTIVE_NORM_TOL));
    e
}

/// `|⟨φ_{y″}|γ_{y′}⟩|²` for one probe.
pub fn attack_fidelity(u: &Unitary2, s: &AttackStrategy, probe: &ProbeSpec, y_est: f64, y_fake: f64) -> Result<f64> {
    Ok(attack_overlap(u, &effective_u(s).m, probe, y_est, y_fake)?.norm_sqr())
}

/// `Σ p_i |⟨φ_{i,y″}|γ_{i,y′}⟩|²` for a fixed effective matrix.
pub fn ensemble_attack_fidelity(u: &Unitary2, u_prime: &Mat2, ens: &Ensemble, y_est: f64, y_fake: f64) -> Result<f64> {
    ens.items().iter().try_fold(0.0, |acc, (w, p)| {
        Ok(acc + w * attack_overlap(u, u_prime, p, y_est, y_fake)?.norm_sqr())
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AttackSearch {
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub evals_per_restart: usize,
    pub seed: u64,
}

impl Default for AttackSearch {
    fn default() -> Self {
        Self { restarts: 32, evals_per_restart: 2000, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackOutcome {
    pub strategy: AttackStrategy,
    pub fidelity: f64,
    /// Some restart's simplex collapsed before its budget ran out.
    pub converged: bool,
    /// Restart that produced the optimum, or `None` if a named strategy won.
    pub restart: Option<usize>,
    pub evaluations: usize,
}

fn wrap_angles(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.rem_euclid(std::f64::consts::TAU)).collect()
}

/// Maximise the ensemble-averaged attack fidelity over all four sub-operations.
///
/// Every restart runs an independent simplex search from a random angle
/// vector drawn from its own ChaCha stream, so the result does not depend on
/// how restarts are scheduled. The identity, reflection-mimic and half-mimic
/// strategies are scored as well and compete with the searched optima. Ties
/// go to the named strategies first and then to the lowest restart index.
pub fn optimize_attack(u: &Unitary2, ens: &Ensemble, y_est: f64, y_fake: f64, search: &AttackSearch) -> Result<AttackOutcome> {
    if search.evals_per_restart == 0 {
        return param("attack search budget must be at least 1");
    }
    // reject bad geometry up front rather than inside the objective
    ensemble_attack_fidelity(u, u.matrix(), ens, y_est, y_fake)?;

    let objective = |x: &[f64]| -> f64 {
        let s = AttackStrategy::from_angles(x).expect("16 angles");
        match ensemble_attack_fidelity(u, &effective_u(&s).m, ens, y_est, y_fake) {
            Ok(f) => -f,
            Err(_) => f64::NAN,
        }
    };
    let opts = SimplexOptions { max_evals: search.evals_per_restart, ..Default::default() };

    let runs: Vec<_> = (0..search.restarts)
        .into_par_iter()
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
            rng.set_stream(idx as u64);
            let x0: Vec<f64> = (0..16).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            minimize(&objective, &x0, &opts)
        })
        .collect();

    let mut best: Option<AttackOutcome> = None;
    let mut evaluations = 0;
    for s in [AttackStrategy::identity(), AttackStrategy::reflection_mimic(), AttackStrategy::half_mimic(u)] {
        let f = ensemble_attack_fidelity(u, &effective_u(&s).m, ens, y_est, y_fake)?;
        evaluations += 1;
        if best.as_ref().is_none_or(|b| f > b.fidelity) {
            best = Some(AttackOutcome { strategy: s, fidelity: f, converged: false, restart: None, evaluations: 0 });
        }
    }
    let mut converged = false;
    for (idx, r) in runs.iter().enumerate() {
        evaluations += r.evals;
        converged |= r.converged;
        let f = -r.f;
        if !f.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| f > b.fidelity) {
            let strategy = AttackStrategy::from_angles(&wrap_angles(&r.x))?;
            best = Some(AttackOutcome { strategy, fidelity: f, converged: false, restart: Some(idx), evaluations: 0 });
        }
    }
    let mut out = best.ok_or_else(|| Error::Numeric("attack search produced no finite value".into()))?;
    out.converged = converged;
    out.evaluations = evaluations;
    Ok(out)
}

/// `Σ p_i max(|ψ_il|², |ψ_ir|²)`.
pub fn p1_upper_bound(ens: &Ensemble) -> f64 {
    ens.items().iter().map(|(w, p)| w * p.dominant_weight()).sum()
}

/// `√(Σ_ij p_i p_j |⟨ψ_i|ψ_j⟩|)`.
pub fn p2_upper_bound(ens: &Ensemble) -> Result<f64> {
    let mut s = 0.0;
    for (wi, pi) in ens.items() {
        for (wj, pj) in ens.items() {
            s += wi * wj * probe_inner_product(pi, pj)?.norm();
        }
    }
    Ok(s.sqrt())
}

/// `1 − ½ Σ_ij p_i p_j ‖ρ_i − ρ_j‖₁` with the pure-state trace norm `2√(1 − |⟨ψ_i|ψ_j⟩|²)`.
pub fn p2_lower_bound(ens: &Ensemble) -> Result<f64> {
    let mut s = 0.0;
    for (i, (wi, pi)) in ens.items().iter().enumerate() {
        for (wj, pj) in ens.items().iter().skip(i + 1) {
            let c2 = probe_inner_product(pi, pj)?.norm_sqr().min(1.0);
            s += 2.0 * wi * wj * (1.0 - c2).sqrt();
        }
    }
    Ok(1.0 - s)
}

/// Best forging success `max_ρ Σ p_i ⟨φ_i|ρ|φ_i⟩`: the top eigenvalue of the
/// frame operator `Σ p_i |φ_i⟩⟨φ_i|`, obtained from the weighted Gram matrix
/// `D^{1/2} G D^{1/2}` with `G_ij = ⟨φ_{i,y″}|φ_{j,y″}⟩`.
pub fn p2_optimal_forgery(ens: &Ensemble, u: &Unitary2, y_est: f64) -> Result<f64> {
    let k = ens.len();
    if k > MAX_FORGERY_ENSEMBLE {
        return Err(Error::Unsupported(format!("forgery oracle handles at most {MAX_FORGERY_ENSEMBLE} states, got {k}")));
    }
    let kp = KernelParams::for_positions(ens.beta(), ens.n_photons(), y_est, y_est)?;
    let mut g = DMatrix::<Complex>::zeros(k, k);
    for (i, (wi, pi)) in ens.items().iter().enumerate() {
        for (j, (wj, pj)) in ens.items().iter().enumerate() {
            let o = overlap_general(u.matrix(), pi.amps(), u.matrix(), pj.amps(), &kp)?;
            g[(i, j)] = o * (wi * wj).sqrt();
        }
    }
    // symmetrise away rounding so the Hermitian solver sees an exact Hermitian input
    let g = (&g + g.adjoint()) * Complex::new(0.5, 0.0);
    let eig = g.symmetric_eigen();
    let top = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::Numeric("frame operator eigenvalue is not finite".into()));
    }
    Ok(top.max(EIGEN_FLOOR))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub p1_upper: f64,
    pub p2_upper: f64,
    pub p2_lower: f64,
    pub p2_exact_for_measurement: f64,
}

pub fn bound_report(ens: &Ensemble, u: &Unitary2, y_est: f64) -> Result<BoundReport> {
    Ok(BoundReport {
        p1_upper: p1_upper_bound(ens),
        p2_upper: p2_upper_bound(ens)?,
        p2_lower: p2_lower_bound(ens)?,
        p2_exact_for_measurement: p2_optimal_forgery(ens, u, y_est)?,
    })
}
