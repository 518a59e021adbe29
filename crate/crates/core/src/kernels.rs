//! Analytic overlap machinery: Gaussian δ kernels, the binomial Q-sum and the
//! honest / cheater state overlaps built from them.
//!
//! A state is described by a 2×2 mode matrix and the side amplitudes
//! `(ψ_l, ψ_r)`. The overlap of two such states is a sum over input sides
//! `p` (bra) and `q` (ket) of `conj(ψ_p) ψ'_q` times a Q-sum whose per-photon
//! factors are `a = conj(U_{0p}) U'_{0q}` and `b = conj(U_{1p}) U'_{1q}`.

use crate::error::{param, Error, Result};
use crate::model::{Complex, Mat2, ProbeSpec, Unitary2};

/// Slack on `|a|, |b| ≤ 1` for Q-sum weights.
pub const QWEIGHT_TOL: f64 = 1e-12;
/// Slack on the column norms of a cheater's effective matrix.
pub const COLUMN_NORM_TOL: f64 = 1e-9;

/// Above this photon number binomials are handled in log space.
const EXACT_BINOMIAL_MAX: u32 = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelParams {
    pub beta: f64,
    pub n: u32,
    /// Position offset `Δy = y′ − y″`.
    pub dy: f64,
    /// The `N·y″` shift carried by the cross kernels.
    pub y_shift: f64,
}

impl KernelParams {
    pub fn new(beta: f64, n: u32, dy: f64, y_shift: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return param(format!("beta must be positive, got {beta}"));
        }
        if n == 0 {
            return param("N must be at least 1");
        }
        if !(dy.is_finite() && y_shift.is_finite()) {
            return param("kernel offsets must be finite");
        }
        Ok(Self { beta, n, dy, y_shift })
    }

    /// Kernels for `⟨φ_{y″}|·_{y′}⟩`.
    pub fn for_positions(beta: f64, n: u32, y_est: f64, y_fake: f64) -> Result<Self> {
        Self::new(beta, n, y_fake - y_est, n as f64 * y_est)
    }

    /// Non-negative exponent `E` with `δ_pq(Q) = exp(-E)`; `p, q ∈ {1, 2}`.
    fn exponent_unchecked(&self, p: u8, q: u8, qq: u32) -> f64 {
        let n = self.n as f64;
        let qf = qq as f64;
        let b2 = self.beta * self.beta;
        let arg = match (p, q) {
            (1, 1) => qf * self.dy,
            (1, 2) => self.dy * (n - qf) + self.y_shift,
            (2, 1) => self.dy * qf + self.y_shift,
            _ => (n - qf) * self.dy,
        };
        b2 * arg * arg
    }

    pub fn exponent(&self, p: u8, q: u8, qq: u32) -> Result<f64> {
        check_pq(p, q)?;
        if qq > self.n {
            return param(format!("Q = {qq} outside 0..={}", self.n));
        }
        Ok(self.exponent_unchecked(p, q, qq))
    }
}

fn check_pq(p: u8, q: u8) -> Result<()> {
    if !(1..=2).contains(&p) || !(1..=2).contains(&q) {
        return param(format!("kernel indices must be 1 or 2, got ({p}, {q})"));
    }
    Ok(())
}

/// The Gaussian overlap kernel `δ_pq(Q)`:
///
/// ```text
/// δ11 = exp(-β²Q²Δy²)              δ12 = exp(-β²[Δy(N-Q) + Ny″]²)
/// δ21 = exp(-β²[ΔyQ + Ny″]²)       δ22 = exp(-β²(N-Q)²Δy²)
/// ```
pub fn delta_pq(p: u8, q: u8, qq: u32, params: &KernelParams) -> Result<f64> {
    Ok((-params.exponent(p, q, qq)?).exp())
}

/// Per-photon factors of a Q-sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QWeight {
    pub a: Complex,
    pub b: Complex,
}

impl QWeight {
    pub fn new(a: Complex, b: Complex) -> Result<Self> {
        for z in [a, b] {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return param("Q-sum weights must be finite");
            }
            if z.norm() > 1.0 + QWEIGHT_TOL {
                return param(format!("Q-sum weight modulus {} exceeds 1", z.norm()));
            }
        }
        Ok(Self { a, b })
    }

    /// Weights for bra side `p` of `bra` against ket side `q` of `ket` (0-based).
    fn from_columns(bra: &Mat2, p: usize, ket: &Mat2, q: usize) -> Result<Self> {
        Self::new(bra.get(0, p).conj() * ket.get(0, q), bra.get(1, p).conj() * ket.get(1, q))
    }
}

fn binomial_u128(n: u32, k: u32) -> u128 {
    let k = k.min(n - k) as u128;
    let n = n as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        // exact at every step: c·(n-i) is divisible by (i+1)
        c = c * (n - i) / (i + 1);
    }
    c
}

fn ln_factorials(n: u32) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Binomial coefficients `C(n, Q)` for `Q = 0..=n` as `f64`, exact for `n ≤ 64`.
pub fn binomial_row(n: u32) -> Vec<f64> {
    if n <= EXACT_BINOMIAL_MAX {
        (0..=n).map(|k| binomial_u128(n, k) as f64).collect()
    } else {
        let lf = ln_factorials(n);
        (0..=n)
            .map(|k| (lf[n as usize] - lf[k as usize] - lf[(n - k) as usize]).exp())
            .collect()
    }
}

fn powers(z: Complex, n: u32) -> Vec<Complex> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = Complex::new(1.0, 0.0);
    out.push(acc);
    for _ in 0..n {
        acc *= z;
        out.push(acc);
    }
    out
}

/// `Σ_Q C(N,Q) a^{N-Q} b^Q kernel(Q)`.
///
/// Exact integer binomials and repeated multiplication up to `N = 64`;
/// beyond that every term is assembled from its log-magnitude and phase so
/// neither the binomial nor the powers can overflow or underflow early.
pub fn q_sum(w: QWeight, kernel: impl Fn(u32) -> f64, n: u32) -> Result<Complex> {
    if n == 0 {
        return param("q_sum needs N ≥ 1");
    }
    let mut total = Complex::new(0.0, 0.0);
    if n <= EXACT_BINOMIAL_MAX {
        let pa = powers(w.a, n);
        let pb = powers(w.b, n);
        for qq in 0..=n {
            let c = binomial_u128(n, qq) as f64;
            total += pa[(n - qq) as usize] * pb[qq as usize] * (c * kernel(qq));
        }
    } else {
        let lf = ln_factorials(n);
        let (ra, tha) = w.a.to_polar();
        let (rb, thb) = w.b.to_polar();
        let (la, lb) = (ra.ln(), rb.ln());
        for qq in 0..=n {
            let (na, nb) = ((n - qq) as f64, qq as f64);
            let k = kernel(qq);
            if k == 0.0 || (ra == 0.0 && na > 0.0) || (rb == 0.0 && nb > 0.0) {
                continue;
            }
            let mut ln_mag = lf[n as usize] - lf[qq as usize] - lf[(n - qq) as usize];
            if na > 0.0 {
                ln_mag += na * la;
            }
            if nb > 0.0 {
                ln_mag += nb * lb;
            }
            let phase = na * tha + nb * thb;
            total += Complex::from_polar(ln_mag.exp(), phase) * k;
        }
    }
    if !(total.re.is_finite() && total.im.is_finite()) {
        return Err(Error::Numeric("q_sum produced a non-finite value".into()));
    }
    Ok(total)
}

/// Overlap split as `base + defect`, where `base` uses unit kernels
/// (the `Δy = 0, y″ = 0` overlap) and `defect` carries `δ_pq − 1`.
/// Keeping the two apart lets `1 − |overlap|` be formed without cancellation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OverlapParts {
    pub base: Complex,
    pub defect: Complex,
}

impl OverlapParts {
    pub fn value(&self) -> Complex {
        self.base + self.defect
    }
}

/// `⟨φ(bra_u, bra_amps)_{y_est} | φ(ket_u, ket_amps)_{y_fake}⟩` in split form.
pub fn overlap_parts(
    bra_u: &Mat2,
    bra_amps: [Complex; 2],
    ket_u: &Mat2,
    ket_amps: [Complex; 2],
    kp: &KernelParams,
) -> Result<OverlapParts> {
    let mut base = Complex::new(0.0, 0.0);
    let mut defect = Complex::new(0.0, 0.0);
    for p in 0..2 {
        for q in 0..2 {
            let weight = bra_amps[p].conj() * ket_amps[q];
            if weight == Complex::new(0.0, 0.0) {
                continue;
            }
            let w = QWeight::from_columns(bra_u, p, ket_u, q)?;
            let (pp, qq) = (p as u8 + 1, q as u8 + 1);
            base += weight * (w.a + w.b).powu(kp.n);
            let d = q_sum(w, |k| (-kp.exponent_unchecked(pp, qq, k)).exp_m1(), kp.n)?;
            defect += weight * d;
        }
    }
    Ok(OverlapParts { base, defect })
}

/// General overlap between two probe states built from arbitrary mode matrices.
pub fn overlap_general(
    bra_u: &Mat2,
    bra_amps: [Complex; 2],
    ket_u: &Mat2,
    ket_amps: [Complex; 2],
    kp: &KernelParams,
) -> Result<Complex> {
    Ok(overlap_parts(bra_u, bra_amps, ket_u, ket_amps, kp)?.value())
}

fn check_effective(u_prime: &Mat2) -> Result<()> {
    if !u_prime.is_finite() {
        return param("effective matrix has non-finite entries");
    }
    for col in 0..2 {
        let norm = u_prime.column_norm(col);
        if norm > 1.0 + COLUMN_NORM_TOL {
            return param(format!("effective matrix column {col} has norm {norm} > 1 (unphysical attack)"));
        }
    }
    Ok(())
}

/// `⟨φ_{y″}|γ_{y′}⟩`: honest output under `u` at the verifier estimate
/// against the cheaters' output under `u_prime` at their target position.
pub fn attack_overlap(
    u: &Unitary2,
    u_prime: &Mat2,
    probe: &ProbeSpec,
    y_est: f64,
    y_fake: f64,
) -> Result<Complex> {
    check_effective(u_prime)?;
    let kp = KernelParams::for_positions(probe.beta(), probe.n_photons(), y_est, y_fake)?;
    overlap_general(u.matrix(), probe.amps(), u_prime, probe.amps(), &kp)
}

/// `⟨φ_y|φ_{y+dy}⟩` for the honest prover.
pub fn honest_fidelity(u: &Unitary2, probe: &ProbeSpec, y: f64, dy: f64) -> Result<Complex> {
    attack_overlap(u, u.matrix(), probe, y, y + dy)
}

/// `⟨φ_y|φ_{y+dy}⟩ − 1`, computed without forming the overlap itself.
///
/// For unitary `u` the unit-kernel part equals `⟨ψ|ψ⟩ = 1` identically, so
/// only the `δ − 1` sums remain.
pub fn honest_fidelity_defect(u: &Unitary2, probe: &ProbeSpec, y: f64, dy: f64) -> Result<Complex> {
    let kp = KernelParams::for_positions(probe.beta(), probe.n_photons(), y, y + dy)?;
    Ok(overlap_parts(u.matrix(), probe.amps(), u.matrix(), probe.amps(), &kp)?.defect)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_balanced_u, make_reflection_u};
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    #[test]
    fn delta_examples() {
        let kp = KernelParams::new(1.0, 4, 0.5, 0.0).unwrap();
        assert_eq!(delta_pq(1, 1, 0, &kp).unwrap(), 1.0);
        assert!((delta_pq(1, 1, 2, &kp).unwrap() - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(delta_pq(2, 2, 4, &kp).unwrap(), 1.0);
        assert!(delta_pq(1, 1, 5, &kp).is_err());
        assert!(delta_pq(0, 1, 0, &kp).is_err());
        assert!(delta_pq(1, 3, 0, &kp).is_err());
    }

    #[test]
    fn cross_kernels_carry_shift() {
        let kp = KernelParams::new(2.0, 3, 0.1, 0.6).unwrap();
        let want12 = (-(4.0f64) * (0.1 * 2.0 + 0.6f64).powi(2)).exp();
        let want21 = (-(4.0f64) * (0.1 * 1.0 + 0.6f64).powi(2)).exp();
        assert!((delta_pq(1, 2, 1, &kp).unwrap() - want12).abs() < 1e-15);
        assert!((delta_pq(2, 1, 1, &kp).unwrap() - want21).abs() < 1e-15);
    }

    #[test]
    fn binomials_exact() {
        assert_eq!(binomial_u128(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(binomial_u128(10, 0), 1);
        assert_eq!(binomial_u128(10, 10), 1);
        let row = binomial_row(100);
        assert!((row[50] / 1.008_913_445_455_642e29 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_sum_identities() {
        let half = QWeight::new(c(0.5, 0.0), c(0.5, 0.0)).unwrap();
        for n in [1, 5, 40, 64, 65, 200] {
            let v = q_sum(half, |_| 1.0, n).unwrap();
            assert!((v - 1.0).norm() < 1e-12, "n={n}: {v}");
        }
        let one = QWeight::new(c(1.0, 0.0), c(1.0, 0.0)).unwrap();
        for n in 2..20u32 {
            let v = q_sum(one, |q| (q * q) as f64, n).unwrap();
            let want = (n * (n + 1)) as f64 * 2f64.powi(n as i32 - 2);
            assert!((v.re / want - 1.0).abs() < 1e-14);
            let alt = q_sum(one, |q| if q % 2 == 0 { q as f64 } else { -(q as f64) }, n).unwrap();
            assert!(alt.norm() < 1e-9 * 2f64.powi(n as i32));
        }
    }

    #[test]
    fn q_sum_log_space_matches_exact_near_threshold() {
        let w = QWeight::new(c(0.3, 0.4), c(-0.2, 0.7)).unwrap();
        let k = |q: u32| (-(q as f64) * 0.01).exp();
        // 64 takes the exact path, 65 the log path; compare against recurrences
        for n in [64u32, 65] {
            let direct = q_sum(w, k, n).unwrap();
            let mut pa = vec![c(1.0, 0.0)];
            let mut pb = vec![c(1.0, 0.0)];
            for i in 0..n as usize {
                pa.push(pa[i] * w.a);
                pb.push(pb[i] * w.b);
            }
            let row = binomial_row(n);
            let mut want = c(0.0, 0.0);
            let mut scale = 0.0;
            for q in 0..=n as usize {
                let t = pa[n as usize - q] * pb[q] * row[q] * k(q as u32);
                want += t;
                scale += t.norm();
            }
            assert!((direct - want).norm() <= 1e-13 * scale, "n={n}");
        }
    }

    #[test]
    fn q_sum_handles_zero_weights() {
        let w = QWeight::new(c(0.0, 0.0), c(0.8, 0.0)).unwrap();
        for n in [3u32, 100] {
            let v = q_sum(w, |_| 1.0, n).unwrap();
            assert!((v.re - 0.8f64.powi(n as i32)).abs() < 1e-14);
        }
        assert!(QWeight::new(c(1.1, 0.0), c(0.0, 0.0)).is_err());
    }

    #[test]
    fn self_overlap_is_one() {
        let u = make_balanced_u();
        let p = ProbeSpec::real(3, 1.3, 0.6, 0.8).unwrap();
        for y in [-1.0, 0.0, 0.7] {
            let f = honest_fidelity(&u, &p, y, 0.0).unwrap();
            assert!((f - 1.0).norm() < 1e-13);
        }
    }

    #[test]
    fn defect_matches_overlap() {
        let u = Unitary2::from_angles(0.3, 1.1, 0.7, -0.4);
        let p = ProbeSpec::new(4, 0.9, c(0.6, 0.0), c(0.0, 0.8)).unwrap();
        let f = honest_fidelity(&u, &p, 0.2, 0.05).unwrap();
        let d = honest_fidelity_defect(&u, &p, 0.2, 0.05).unwrap();
        assert!((f - 1.0 - d).norm() < 1e-14);
    }

    #[test]
    fn reflection_mimic_is_perfect() {
        let u = make_reflection_u();
        let p = ProbeSpec::real(5, 1.0, 0.6, 0.8).unwrap();
        let f = attack_overlap(&u, u.matrix(), &p, 0.4, 0.4).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_unphysical_effective_matrix() {
        let u = make_balanced_u();
        let p = ProbeSpec::single_sided(2, 1.0).unwrap();
        let m = Mat2::from_real([[1.0, 0.0], [0.5, 0.0]]);
        assert!(matches!(attack_overlap(&u, &m, &p, 0.0, 0.0), Err(Error::Parameter(_))));
    }

    fn arb_unit() -> impl Strategy<Value = Unitary2> {
        (0.0..6.3f64, 0.0..6.3f64, 0.0..1.6f64, 0.0..6.3f64)
            .prop_map(|(a, b, c, d)| Unitary2::from_angles(a, b, c, d))
    }

    fn arb_probe(max_n: u32) -> impl Strategy<Value = ProbeSpec> {
        (1..=max_n, 0.3..3.0f64, 0.0..std::f64::consts::FRAC_PI_2, 0.0..6.3f64).prop_map(|(n, beta, t, ph)| {
            ProbeSpec::new(n, beta, Complex::new(t.cos(), 0.0), Complex::from_polar(t.sin(), ph)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn kernels_in_unit_interval(p in 1u8..=2, q in 1u8..=2, n in 1u32..40, beta in 0.1..5.0f64,
                                    dy in -1.0..1.0f64, ys in -0.2..0.2f64, frac in 0.0..1.0f64) {
            let kp = KernelParams::new(beta, n, dy, ys).unwrap();
            let qq = (frac * n as f64).floor() as u32;
            let v = delta_pq(p, q, qq, &kp).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }

        #[test]
        fn fidelity_bounded(u in arb_unit(), probe in arb_probe(24), y in -2.0..2.0f64, dy in -1.0..1.0f64) {
            let f = honest_fidelity(&u, &probe, y, dy).unwrap();
            prop_assert!(f.norm() <= 1.0 + 1e-10);
        }

        #[test]
        fn fidelity_conjugate_symmetry(u in arb_unit(), probe in arb_probe(12), y in -1.0..1.0f64, dy in -0.5..0.5f64) {
            let fwd = honest_fidelity(&u, &probe, y, dy).unwrap();
            let back = honest_fidelity(&u, &probe, y + dy, -dy).unwrap();
            prop_assert!((fwd - back.conj()).norm() < 1e-12);
        }

        #[test]
        fn perfect_mimicry(u in arb_unit(), probe in arb_probe(30), y in -2.0..2.0f64) {
            let f = attack_overlap(&u, u.matrix(), &probe, y, y).unwrap();
            prop_assert!((f - 1.0).norm() < 1e-12);
        }
    }
}
