//! Measurement model and the two-step cheater detection protocol.
//!
//! With the balanced prover splitter `U` and the measurement `R = U*`, every
//! honest N-photon outcome lands entirely in one output port, and the
//! detector positions enter the likelihood only through their centred sum.
//! In the narrow-regulator limit an outcome therefore reduces to a port label
//! and one Gaussian scalar `r` with mean `−N y` and standard deviation
//! `1/(√2 β)` for either port.
//!
//! Cheaters that act on the genuine states change the port statistics: some
//! photons may be lost, and outcomes may split across both ports (`Mixed`).

pub mod kde;
pub mod protocol;
pub mod tv;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::kernels::{overlap_general, KernelParams};
use crate::metrology::{QfiMethod, QfiResult};
use crate::model::{make_balanced_u, Complex, Mat2, ProbeSpec, Unitary2};

pub use kde::{kde_build, KdeEstimate, PortKde};
pub use protocol::{
    error_exponents, estimate_error_probability, run_detection_trial, DetectionVerdict, ErrorExponents,
    ErrorSummary, ProtocolConfig, Scenario,
};
pub use tv::{kde_deviation_bound, kde_bound_terms, tv_distance, tv_q1_q2, IntegrationRange, KdeDeviationBound, KdeBoundTerms};

/// Where the N photons of one round were detected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Zero,
    One,
    /// Photons found in both ports; impossible for an honest prover.
    Mixed,
}

impl Port {
    pub const ALL: [Port; 3] = [Port::Zero, Port::One, Port::Mixed];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasurementSample {
    pub port: Port,
    pub r: f64,
}

/// Prover splitter and verifier measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasurementSetup {
    pub u: Unitary2,
    pub r: Unitary2,
}

impl MeasurementSetup {
    /// Balanced `U` with `R = U*`, the only configuration the reduction covers.
    pub fn balanced() -> Self {
        let u = make_balanced_u();
        Self { u, r: u.conj() }
    }

    pub fn validate(&self) -> Result<()> {
        let bal = make_balanced_u();
        if self.u.matrix().max_abs_diff(bal.matrix()) > 1e-12
            || self.r.matrix().max_abs_diff(bal.conj().matrix()) > 1e-12
        {
            return Err(Error::Unsupported(
                "the reduced measurement model needs the balanced U and R = U*".into(),
            ));
        }
        Ok(())
    }
}

/// Standard deviation of the position statistic, `1/(√2 β)`.
pub fn statistic_sd(beta: f64) -> f64 {
    1.0 / (std::f64::consts::SQRT_2 * beta)
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Port-resolved outcome law: port masses plus one Gaussian shape for `r`.
/// Masses may sum to less than one; the remainder is the chance that some
/// photons never arrive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReducedDistribution {
    pub weights: [f64; 3],
    pub center: f64,
    pub sd: f64,
}

impl ReducedDistribution {
    pub fn new(weights: [f64; 3], center: f64, sd: f64) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return param("port weights must be finite and non-negative");
        }
        if weights.iter().sum::<f64>() > 1.0 + 1e-9 {
            return param("port weights exceed one");
        }
        if !(center.is_finite() && sd.is_finite() && sd > 0.0) {
            return param("statistic needs a finite centre and positive spread");
        }
        Ok(Self { weights, center, sd })
    }

    /// Honest outcome law for `probe` with the prover at `y`.
    pub fn honest(probe: &ProbeSpec, y: f64) -> Result<Self> {
        let n = probe.n_photons() as f64;
        Self::new(
            [probe.amp_l().norm_sqr(), probe.amp_r().norm_sqr(), 0.0],
            -n * y,
            statistic_sd(probe.beta()),
        )
    }

    /// Outcome law when cheaters with effective matrix `u_prime` act on the
    /// genuine state and impersonate a prover at `y_fake`.
    pub fn under_attack(setup: &MeasurementSetup, probe: &ProbeSpec, u_prime: &Mat2, y_fake: f64) -> Result<Self> {
        setup.validate()?;
        let n = probe.n_photons();
        let [pl, pr] = probe.amps();
        // port amplitudes A = U† U′
        let a = *setup.u.adjoint().matrix() * *u_prime;
        let kappa = (-(probe.beta() * n as f64 * y_fake).powi(2)).exp();
        let mut w = [0.0; 3];
        for (q, slot) in w.iter_mut().take(2).enumerate() {
            let (a0, a1) = (a.get(q, 0), a.get(q, 1));
            let cross = (pl.conj() * pr * (a0.conj() * a1).powu(n)).re;
            *slot = (pl.norm_sqr() * a0.norm_sqr().powi(n as i32)
                + pr.norm_sqr() * a1.norm_sqr().powi(n as i32)
                + 2.0 * kappa * cross)
                .max(0.0);
        }
        let kp = KernelParams::for_positions(probe.beta(), n, y_fake, y_fake)?;
        let total = overlap_general(u_prime, probe.amps(), u_prime, probe.amps(), &kp)?.re.clamp(0.0, 1.0);
        w[2] = (total - w[0] - w[1]).max(0.0);
        Self::new(w, -(n as f64) * y_fake, statistic_sd(probe.beta()))
    }

    /// `t·a + (1−t)·b`; both must share the statistic's shape.
    pub fn mixture(a: &Self, b: &Self, t: f64) -> Result<Self> {
        if (a.center - b.center).abs() > 1e-12 || (a.sd - b.sd).abs() > 1e-12 {
            return param("mixture components must share centre and spread");
        }
        if !(0.0..=1.0).contains(&t) {
            return param("mixture weight must lie in [0, 1]");
        }
        let w = std::array::from_fn(|k| t * a.weights[k] + (1.0 - t) * b.weights[k]);
        Self::new(w, a.center, a.sd)
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn lost_mass(&self) -> f64 {
        (1.0 - self.total_mass()).max(0.0)
    }

    pub fn density(&self, port: Port, r: f64) -> f64 {
        self.weights[port.index()] * normal_pdf(r, self.center, self.sd)
    }

    /// One round; `None` when photons are lost.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<MeasurementSample> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut port = None;
        for p in Port::ALL {
            acc += self.weights[p.index()];
            if u < acc {
                port = Some(p);
                break;
            }
        }
        let port = port?;
        let r = Normal::new(self.center, self.sd).expect("validated spread").sample(rng);
        Some(MeasurementSample { port, r })
    }
}

/// Probability that all N photons leave on one side when no beam splitter
/// precedes the detectors, for a state prepared with mode matrix `m`.
pub fn one_sided_probability(probe: &ProbeSpec, m: &Mat2, y: f64) -> f64 {
    let n = probe.n_photons();
    let [pl, pr] = probe.amps();
    let kappa = (-(probe.beta() * n as f64 * y).powi(2)).exp();
    (0..2)
        .map(|s| {
            let (m0, m1): (Complex, Complex) = (m.get(s, 0), m.get(s, 1));
            let cross = (pl.conj() * pr * (m0.conj() * m1).powu(n)).re;
            pl.norm_sqr() * m0.norm_sqr().powi(n as i32) + pr.norm_sqr() * m1.norm_sqr().powi(n as i32) + 2.0 * kappa * cross
        })
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

/// One honest round.
pub fn sample_honest<R: Rng + ?Sized>(setup: &MeasurementSetup, probe: &ProbeSpec, y: f64, rng: &mut R) -> Result<MeasurementSample> {
    setup.validate()?;
    ReducedDistribution::honest(probe, y)?
        .sample(rng)
        .ok_or_else(|| Error::Numeric("honest distribution lost photons".into()))
}

/// Monte Carlo Fisher information `E[(∂_y ln p)²]` from honest samples,
/// with score `−N (r + N y) / s²`.
pub fn score_fisher_information<R: Rng + ?Sized>(
    setup: &MeasurementSetup,
    probe: &ProbeSpec,
    y: f64,
    samples: usize,
    rng: &mut R,
) -> Result<QfiResult> {
    if samples < 2 {
        return param("need at least two samples");
    }
    let n = probe.n_photons() as f64;
    let s2 = statistic_sd(probe.beta()).powi(2);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let x = sample_honest(setup, probe, y, rng)?;
        let score = -n * (x.r + n * y) / s2;
        let v = score * score;
        sum += v;
        sum_sq += v * v;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = (sum_sq / k - mean * mean).max(0.0) * k / (k - 1.0);
    Ok(QfiResult { value: mean, method: QfiMethod::MonteCarlo, stderr: Some((var / k).sqrt()), step_warning: false })
}

/// Position estimate from the sample mean of the statistic, `−mean(r)/N`.
pub fn estimate_position(samples: &[MeasurementSample], n_photons: u32) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mean = samples.iter().map(|s| s.r).sum::<f64>() / samples.len() as f64;
    Some(-mean / n_photons as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::{effective_u, AttackStrategy};
    use crate::model::make_reflection_u;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn setup_validation() {
        assert!(MeasurementSetup::balanced().validate().is_ok());
        let bad = MeasurementSetup { u: make_reflection_u(), r: make_reflection_u() };
        assert!(matches!(bad.validate(), Err(Error::Unsupported(_))));
        let p = ProbeSpec::single_sided(1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_honest(&bad, &p, 0.0, &mut rng).is_err());
    }

    #[test]
    fn single_sided_always_port_zero() {
        let p = ProbeSpec::single_sided(3, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_honest(&MeasurementSetup::balanced(), &p, 0.4, &mut rng).unwrap().port, Port::Zero);
        }
    }

    #[test]
    fn honest_moments() {
        let p = ProbeSpec::real(2, 1.5, 0.6, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<_> = (0..200_000).map(|_| sample_honest(&MeasurementSetup::balanced(), &p, 0.0, &mut rng).unwrap()).collect();
        let mean = xs.iter().map(|s| s.r).sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|s| (s.r - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let frac0 = xs.iter().filter(|s| s.port == Port::Zero).count() as f64 / xs.len() as f64;
        assert!(mean.abs() < 0.005);
        assert!((var - 1.0 / (2.0 * 1.5 * 1.5)).abs() < 0.003);
        assert!((frac0 - 0.36).abs() < 0.005);
        assert!(estimate_position(&xs, 2).unwrap().abs() < 0.003);
        assert!(estimate_position(&[], 2).is_none());
    }

    #[test]
    fn score_fi_small_run() {
        let p = ProbeSpec::real(2, 1.0, 0.6, 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = score_fisher_information(&MeasurementSetup::balanced(), &p, 0.3, 100_000, &mut rng).unwrap();
        assert!((r.value - 8.0).abs() < 4.0 * r.stderr.unwrap());
        assert_eq!(r.method, QfiMethod::MonteCarlo);
    }

    #[test]
    fn faithful_mimic_keeps_honest_ports() {
        let setup = MeasurementSetup::balanced();
        let p = ProbeSpec::real(3, 1.0, 0.6, 0.8).unwrap();
        let d = ReducedDistribution::under_attack(&setup, &p, setup.u.matrix(), 0.2).unwrap();
        let h = ReducedDistribution::honest(&p, 0.2).unwrap();
        for k in 0..3 {
            assert!((d.weights[k] - h.weights[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn half_mimic_loses_photons() {
        let setup = MeasurementSetup::balanced();
        let p = ProbeSpec::real(4, 1.0, 3f64.sqrt() / 2.0, 0.5).unwrap();
        let m = effective_u(&AttackStrategy::half_mimic(&setup.u)).m;
        let d = ReducedDistribution::under_attack(&setup, &p, &m, 0.0).unwrap();
        assert!(d.total_mass() <= p.dominant_weight() + 1e-12);
        assert!((d.weights[0] - 0.75).abs() < 1e-12);
        assert!(d.lost_mass() > 0.2);
    }

    #[test]
    fn one_sided_probabilities() {
        let p = ProbeSpec::real(4, 1.0, 0.6, 0.8).unwrap();
        assert!((one_sided_probability(&p, make_reflection_u().matrix(), 0.3) - 1.0).abs() < 1e-12);
        assert!((one_sided_probability(&p, &Mat2::identity(), 0.0) - 1.0).abs() < 1e-12);
        let bal = one_sided_probability(&p, make_balanced_u().matrix(), 5.0);
        assert!((bal - 2.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn mixture_rules() {
        let a = ReducedDistribution::new([0.75, 0.25, 0.0], 0.0, 1.0).unwrap();
        let b = ReducedDistribution::new([0.25, 0.75, 0.0], 0.0, 1.0).unwrap();
        let m = ReducedDistribution::mixture(&a, &b, 0.5).unwrap();
        assert_eq!(m.weights, [0.5, 0.5, 0.0]);
        let c = ReducedDistribution::new([0.5, 0.5, 0.0], 1.0, 1.0).unwrap();
        assert!(ReducedDistribution::mixture(&a, &c, 0.5).is_err());
        assert!(ReducedDistribution::new([0.7, 0.7, 0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn lossy_distribution_samples_none() {
        let d = ReducedDistribution::new([0.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(d.sample(&mut rng).is_none());
    }
}
