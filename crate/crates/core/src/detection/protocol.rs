//! The two-step decision rule and its Monte Carlo error rates.
//!
//! Step 1 rejects whenever a round loses photons, and uses extra rounds
//! without the verifier beam splitter to catch the two special cheater forms
//! (pure reflection or pure phase), which always send all photons to one side.
//! Step 2 compares the product of the honest laws against the product of the
//! two port-resolved KDEs and rejects when their TV distance exceeds `ε`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::kde::PortKde;
use super::tv::{
    deviation_bound_from_t, kde_bias_offset, kde_bound_terms, tv_product, tv_q1_q2, tv_reduced_vs_kde, two_members, KdeDeviationBound,
};
use super::{one_sided_probability, MeasurementSample, MeasurementSetup, ReducedDistribution};
use crate::attack::{effective_u, AttackStrategy};
use crate::error::{param, Result};
use crate::model::{Ensemble, Geometry, Mat2, ProbeSpec};

/// Honest one-sided probabilities at or above this make the special-form
/// check uninformative, so it is skipped.
const ONE_SIDED_SATURATION: f64 = 1.0 - 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    Honest,
    /// Cheaters act on the genuine states with this strategy.
    AttackOnState(AttackStrategy),
    /// Cheaters discard the states and emit samples from a fixed law.
    Forge(ReducedDistribution),
}

impl Scenario {
    fn tag(&self) -> u64 {
        match self {
            Scenario::Honest => 1,
            Scenario::AttackOnState(_) => 2,
            Scenario::Forge(_) => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProtocolConfig {
    pub ensemble: Ensemble,
    pub setup: MeasurementSetup,
    pub geometry: Geometry,
    /// `None` picks `¼ TV(Q_1, Q_2)`.
    pub epsilon: Option<f64>,
    /// Extra no-splitter rounds, as a fraction of `M`.
    pub overhead_fraction: f64,
    /// Strategy used for the state-attack scenario.
    pub attack: AttackStrategy,
    /// Forged law; `None` uses the even mixture of the honest laws.
    pub forge: Option<ReducedDistribution>,
}

impl ProtocolConfig {
    pub fn new(ensemble: Ensemble, geometry: Geometry) -> Result<Self> {
        two_members(&ensemble)?;
        let setup = MeasurementSetup::balanced();
        Ok(Self {
            ensemble,
            setup,
            geometry,
            epsilon: None,
            overhead_fraction: 0.1,
            attack: AttackStrategy::half_mimic(&setup.u),
            forge: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.setup.validate()?;
        two_members(&self.ensemble)?;
        if let Some(e) = self.epsilon {
            check_epsilon(e)?;
        }
        if !(self.overhead_fraction.is_finite() && (0.0..=1.0).contains(&self.overhead_fraction)) {
            return param("overhead fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Honest laws `Q_1, Q_2` at the verifier estimate.
    pub fn honest_laws(&self) -> Result<[ReducedDistribution; 2]> {
        let [(_, a), (_, b)] = two_members(&self.ensemble)?;
        let y = self.geometry.y_est;
        Ok([ReducedDistribution::honest(a, y)?, ReducedDistribution::honest(b, y)?])
    }

    pub fn forge_law(&self) -> Result<ReducedDistribution> {
        match self.forge {
            Some(q) => Ok(q),
            None => {
                let [q1, q2] = self.honest_laws()?;
                ReducedDistribution::mixture(&q1, &q2, 0.5)
            }
        }
    }

    pub fn epsilon(&self) -> Result<f64> {
        match self.epsilon {
            Some(e) => Ok(e),
            None => Ok(0.25 * tv_q1_q2(&self.ensemble, self.geometry.y_est)?),
        }
    }

    pub fn overhead_rounds(&self, m_samples: usize) -> usize {
        (self.overhead_fraction * m_samples as f64).ceil() as usize
    }
}

fn check_epsilon(e: f64) -> Result<()> {
    if !(e.is_finite() && e > 0.0) {
        return param(format!("threshold ε must be positive and finite, got {e}"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetectionVerdict {
    /// No photons lost and no special form flagged.
    pub step1_pass: bool,
    pub special_form_flag: bool,
    pub photons_lost: bool,
    /// `TV(Q_1⊗Q_2, P̂_1⊗P̂_2)`; absent when step 1 already rejected.
    pub tv_stat: Option<f64>,
    /// `TV(Q_1, P̂_1) + TV(Q_2, P̂_2)`, the upper bound on `tv_stat`.
    pub tv_decomposition: Option<f64>,
    pub threshold: f64,
    pub cheater_flag: bool,
}

/// Per-member sampling law for one scenario.
struct MemberSource {
    law: ReducedDistribution,
    /// Chance that all photons leave on one side in a no-splitter round.
    p_one_sided: f64,
}

fn member_sources(cfg: &ProtocolConfig, scenario: &Scenario) -> Result<[MemberSource; 2]> {
    let [(_, a), (_, b)] = two_members(&cfg.ensemble)?;
    let g = cfg.geometry;
    let u = cfg.setup.u.matrix();
    let honest = |p: &ProbeSpec| -> Result<MemberSource> {
        Ok(MemberSource { law: ReducedDistribution::honest(p, g.y_true)?, p_one_sided: one_sided_probability(p, u, g.y_true) })
    };
    match scenario {
        Scenario::Honest => Ok([honest(a)?, honest(b)?]),
        Scenario::AttackOnState(s) => {
            let m: Mat2 = effective_u(s).m;
            let src = |p: &ProbeSpec| -> Result<MemberSource> {
                Ok(MemberSource {
                    law: ReducedDistribution::under_attack(&cfg.setup, p, &m, g.y_fake)?,
                    p_one_sided: one_sided_probability(p, &m, g.y_fake),
                })
            };
            Ok([src(a)?, src(b)?])
        }
        Scenario::Forge(q0) => {
            // the forger reproduces the average honest one-sided rate
            let p = 0.5 * (one_sided_probability(a, u, g.y_est) + one_sided_probability(b, u, g.y_est));
            Ok([MemberSource { law: *q0, p_one_sided: p }, MemberSource { law: *q0, p_one_sided: p }])
        }
    }
}

/// One run of the protocol with `m_samples` rounds, split evenly between the
/// two ensemble members, plus the no-splitter overhead rounds.
pub fn run_detection_trial<R: Rng + ?Sized>(
    cfg: &ProtocolConfig,
    scenario: &Scenario,
    m_samples: usize,
    rng: &mut R,
) -> Result<DetectionVerdict> {
    cfg.validate()?;
    let epsilon = cfg.epsilon()?;
    check_epsilon(epsilon)?;
    if m_samples < 4 {
        return param(format!("need at least 4 rounds, got {m_samples}"));
    }
    let honest_laws = cfg.honest_laws()?;
    let sources = member_sources(cfg, scenario)?;
    let [(_, a), (_, b)] = two_members(&cfg.ensemble)?;
    let u = cfg.setup.u.matrix();
    let y = cfg.geometry.y_est;
    let honest_one_sided =
        0.5 * (one_sided_probability(a, u, y) + one_sided_probability(b, u, y));

    // Step 1a: no-splitter rounds.
    let mut photons_lost = false;
    let overhead = cfg.overhead_rounds(m_samples);
    let mut all_one_sided = overhead > 0;
    for _ in 0..overhead {
        let src = &sources[rng.random_range(0..2)];
        let x: f64 = rng.random();
        if x >= src.law.total_mass() {
            photons_lost = true;
        } else if x >= src.p_one_sided {
            all_one_sided = false;
        }
    }
    let special_form_flag = all_one_sided && honest_one_sided < ONE_SIDED_SATURATION;

    // Step 1b: measured rounds.
    let half = m_samples / 2;
    let mut samples: [Vec<MeasurementSample>; 2] = [Vec::with_capacity(half), Vec::with_capacity(m_samples - half)];
    for (k, count) in [half, m_samples - half].into_iter().enumerate() {
        for _ in 0..count {
            match sources[k].law.sample(rng) {
                Some(s) => samples[k].push(s),
                None => photons_lost = true,
            }
        }
    }

    let step1_pass = !photons_lost && !special_form_flag;
    let (tv_stat, tv_decomposition) = if step1_pass {
        let p1 = PortKde::build(&samples[0])?;
        let p2 = PortKde::build(&samples[1])?;
        let stat = tv_product(&honest_laws[0], &honest_laws[1], &p1, &p2);
        let split = tv_reduced_vs_kde(&honest_laws[0], &p1) + tv_reduced_vs_kde(&honest_laws[1], &p2);
        (Some(stat), Some(split))
    } else {
        (None, None)
    };
    let cheater_flag = !step1_pass || tv_stat.is_some_and(|t| t > epsilon);
    Ok(DetectionVerdict {
        step1_pass,
        special_form_flag,
        photons_lost,
        tv_stat,
        tv_decomposition,
        threshold: epsilon,
        cheater_flag,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorExponents {
    /// Samples per KDE, `M/2`.
    pub m_per_member: usize,
    pub epsilon: f64,
    pub tv12: f64,
    /// Forge scenario: `t_1 = ¼TV(Q_1,Q_2) − ε/2 − a(Q_0)/m^{2/5}`.
    pub forge: KdeDeviationBound,
    /// Honest scenario: worse of the two members at `ε/2`.
    pub honest: KdeDeviationBound,
    pub xi1: f64,
    pub xi2: f64,
}

/// Exponents of the honest and forge scenarios for `m_samples` total rounds.
pub fn error_exponents(ens: &Ensemble, epsilon: f64, m_samples: usize, y_est: f64, q0: &ReducedDistribution) -> Result<ErrorExponents> {
    check_epsilon(epsilon)?;
    let [(_, a), (_, b)] = two_members(ens)?;
    let m = (m_samples / 2).max(1);
    let tv12 = tv_q1_q2(ens, y_est)?;
    let honest = [a, b]
        .into_iter()
        .map(|p| {
            let t = kde_bound_terms(&ReducedDistribution::honest(p, y_est)?)?;
            Ok(deviation_bound_from_t(0.5 * epsilon - kde_bias_offset(m, &t), m))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min_by(|x, y| x.t.total_cmp(&y.t))
        .expect("two members");
    let t1 = 0.25 * tv12 - 0.5 * epsilon - kde_bias_offset(m, &kde_bound_terms(q0)?);
    let forge = deviation_bound_from_t(t1, m);
    Ok(ErrorExponents { m_per_member: m, epsilon, tv12, xi1: forge.xi, xi2: honest.xi, forge, honest })
}

/// Analytic total error bound
/// `2e^{−mξ_2} + max{w^M, 2e^{−mξ_1}}`, `w` the largest port weight.
pub fn total_error_bound(ens: &Ensemble, ex: &ErrorExponents, m_samples: usize) -> f64 {
    let w = ens.items().iter().map(|(_, p)| p.dominant_weight()).fold(0.0, f64::max);
    let honest = if ex.honest.valid { 2.0 * ex.honest.bound } else { 2.0 };
    let forge = if ex.forge.valid { 2.0 * ex.forge.bound } else { 2.0 };
    honest + w.powi(m_samples as i32).max(forge)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub m_samples: usize,
    pub trials: usize,
    pub epsilon: f64,
    /// Honest runs flagged as cheating.
    pub false_alarms: usize,
    /// State-attack runs that passed.
    pub attack_misses: usize,
    /// Forge runs that passed.
    pub forge_misses: usize,
    /// State-attack runs that passed step 1 (before step 2).
    pub attack_step1_passes: usize,
    pub p_false_alarm: f64,
    pub p_miss_attack: f64,
    pub p_miss_forge: f64,
    /// `P(cheater|honest) + max(P_1(honest|cheater), P_2(honest|cheater))`.
    pub p_total: f64,
    pub exponents: ErrorExponents,
    pub bound_false_alarm: f64,
    pub bound_attack: f64,
    pub bound_forge: f64,
    pub bound_total: f64,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Random stream for one trial; depends only on its arguments.
pub fn trial_rng(seed: u64, scenario: &Scenario, m_samples: usize, trial: u64) -> ChaCha8Rng {
    let key = mix(mix(mix(seed) ^ scenario.tag()) ^ m_samples as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(trial);
    rng
}

fn count_flags(cfg: &ProtocolConfig, scenario: &Scenario, m: usize, trials: usize, seed: u64) -> Result<Vec<DetectionVerdict>> {
    (0..trials)
        .into_par_iter()
        .map(|t| run_detection_trial(cfg, scenario, m, &mut trial_rng(seed, scenario, m, t as u64)))
        .collect()
}

/// Runs all three scenarios `trials` times each at `m_samples` rounds.
pub fn estimate_error_probability(cfg: &ProtocolConfig, m_samples: usize, trials: usize, seed: u64) -> Result<ErrorSummary> {
    if trials < 100 {
        return param(format!("need at least 100 trials, got {trials}"));
    }
    cfg.validate()?;
    let epsilon = cfg.epsilon()?;
    let q0 = cfg.forge_law()?;
    let cfg = &ProtocolConfig { epsilon: Some(epsilon), ..cfg.clone() };
    let honest = count_flags(cfg, &Scenario::Honest, m_samples, trials, seed)?;
    let attack = count_flags(cfg, &Scenario::AttackOnState(cfg.attack), m_samples, trials, seed)?;
    let forge = count_flags(cfg, &Scenario::Forge(q0), m_samples, trials, seed)?;

    let false_alarms = honest.iter().filter(|v| v.cheater_flag).count();
    let attack_misses = attack.iter().filter(|v| !v.cheater_flag).count();
    let forge_misses = forge.iter().filter(|v| !v.cheater_flag).count();
    let attack_step1_passes = attack.iter().filter(|v| v.step1_pass).count();
    let rate = |k: usize| k as f64 / trials as f64;

    let ex = error_exponents(&cfg.ensemble, epsilon, m_samples, cfg.geometry.y_est, &q0)?;
    let w = cfg.ensemble.items().iter().map(|(_, p)| p.dominant_weight()).fold(0.0, f64::max);
    let vacuous = |b: &KdeDeviationBound| if b.valid { 2.0 * b.bound } else { 2.0 };
    Ok(ErrorSummary {
        m_samples,
        trials,
        epsilon,
        false_alarms,
        attack_misses,
        forge_misses,
        attack_step1_passes,
        p_false_alarm: rate(false_alarms),
        p_miss_attack: rate(attack_misses),
        p_miss_forge: rate(forge_misses),
        p_total: rate(false_alarms) + rate(attack_misses).max(rate(forge_misses)),
        bound_false_alarm: vacuous(&ex.honest),
        bound_attack: w.powi(m_samples as i32),
        bound_forge: vacuous(&ex.forge),
        bound_total: total_error_bound(&cfg.ensemble, &ex, m_samples),
        exponents: ex,
    })
}
