//! Experiment configuration read from `--config`. Every field has a default,
//! so an empty object `{}` is a valid configuration.

use serde::{Deserialize, Serialize};

use secrange::model::{make_balanced_u, make_reflection_u};
use secrange::{Complex, Ensemble, Geometry, ProbeSpec, Unitary2};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: Option<u64>,
    pub qfi: QfiConfig,
    pub fi: FiConfig,
    pub attack: AttackConfig,
    pub detect: DetectConfig,
    pub oracle_check: OracleConfig,
}

impl Config {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Splitter choice: a named matrix or the four Euler angles of
/// `Unitary2::from_angles`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum UnitarySpec {
    Named(NamedUnitary),
    Angles { angles: [f64; 4] },
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedUnitary {
    Balanced,
    Reflection,
    Identity,
}

impl Default for UnitarySpec {
    fn default() -> Self {
        UnitarySpec::Named(NamedUnitary::Balanced)
    }
}

impl UnitarySpec {
    pub fn build(&self) -> Result<Unitary2, CliError> {
        match self {
            UnitarySpec::Named(NamedUnitary::Balanced) => Ok(make_balanced_u()),
            UnitarySpec::Named(NamedUnitary::Reflection) => Ok(make_reflection_u()),
            UnitarySpec::Named(NamedUnitary::Identity) => Ok(Unitary2::identity()),
            UnitarySpec::Angles { angles: [g, a, t, b] } => {
                if ![g, a, t, b].iter().all(|v| v.is_finite()) {
                    return Err(CliError::Config("unitary angles must be finite".into()));
                }
                Ok(Unitary2::from_angles(*g, *a, *t, *b))
            }
        }
    }
}

/// One probe: side amplitudes and a relative phase on the right side.
#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeAmps {
    pub amp_l: f64,
    pub amp_r: f64,
    #[serde(default)]
    pub phase: f64,
}

impl ProbeAmps {
    pub fn build(&self, n: u32, beta: f64) -> Result<ProbeSpec, CliError> {
        Ok(ProbeSpec::new(n, beta, Complex::new(self.amp_l, 0.0), Complex::from_polar(self.amp_r, self.phase))?)
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Member {
    pub weight: f64,
    #[serde(flatten)]
    pub amps: ProbeAmps,
}

/// Ensemble members; empty means the two-state reference ensemble.
pub fn build_ensemble(members: &[Member], n: u32, beta: f64) -> Result<Ensemble, CliError> {
    if members.is_empty() {
        return Ok(Ensemble::two_state_reference(n, beta)?);
    }
    let items = members
        .iter()
        .map(|m| m.amps.build(n, beta).map(|p| (m.weight, p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble::new(items)?)
}

fn check_photons(ns: &[u32]) -> Result<(), CliError> {
    if ns.is_empty() {
        return Err(CliError::Config("photon number list is empty".into()));
    }
    if ns.contains(&0) {
        return Err(CliError::Config("photon numbers must be at least 1".into()));
    }
    Ok(())
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct QfiConfig {
    pub n: Vec<u32>,
    pub beta: f64,
    pub probe: ProbeAmps,
    pub y: f64,
    pub unitary: UnitarySpec,
    /// Finite-difference step; `None` picks `1e-3/(βN)`.
    pub dy: Option<f64>,
}

impl Default for QfiConfig {
    fn default() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            n: (1..=20).collect(),
            beta: 1.0,
            probe: ProbeAmps { amp_l: s, amp_r: s, phase: 0.0 },
            y: 0.0,
            unitary: UnitarySpec::default(),
            dy: None,
        }
    }
}

impl QfiConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_photons(&self.n)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FiConfig {
    pub n: Vec<u32>,
    pub beta: f64,
    pub probe: ProbeAmps,
    pub y: f64,
    /// Monte Carlo samples per row; `--trials` overrides.
    pub samples: usize,
}

impl Default for FiConfig {
    fn default() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Self { n: vec![1, 2, 4, 8], beta: 1.0, probe: ProbeAmps { amp_l: s, amp_r: s, phase: 0.0 }, y: 0.0, samples: 100_000 }
    }
}

impl FiConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_photons(&self.n)?;
        if self.samples < 2 {
            return Err(CliError::Config("fi.samples must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    pub n: Vec<u32>,
    pub beta: f64,
    pub ensemble: Vec<Member>,
    pub unitary: UnitarySpec,
    pub y_est: f64,
    pub y_fake: f64,
    /// Simplex restarts; `--trials` overrides.
    pub restarts: usize,
    pub evals_per_restart: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            n: vec![1, 2, 4, 8],
            beta: 1.0,
            ensemble: Vec::new(),
            unitary: UnitarySpec::default(),
            y_est: 0.0,
            y_fake: 0.0,
            restarts: 16,
            evals_per_restart: 2000,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        check_photons(&self.n)?;
        if self.restarts == 0 || self.evals_per_restart == 0 {
            return Err(CliError::Config("attack.restarts and attack.evals_per_restart must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectConfig {
    pub n: u32,
    pub beta: f64,
    /// Exactly two members; empty means the reference ensemble.
    pub ensemble: Vec<Member>,
    pub m: Vec<usize>,
    /// `--trials` overrides.
    pub trials: usize,
    pub epsilon: Option<f64>,
    pub overhead_fraction: f64,
    pub y_true: f64,
    pub y_fake: f64,
    pub y_est: f64,
    pub d: f64,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            n: 4,
            beta: 1.0,
            ensemble: Vec::new(),
            m: vec![64, 256, 1024],
            trials: 200,
            epsilon: None,
            overhead_fraction: 0.1,
            y_true: 0.0,
            y_fake: 0.0,
            y_est: 0.0,
            d: 1.0,
        }
    }
}

impl DetectConfig {
    pub fn geometry(&self) -> Result<Geometry, CliError> {
        Ok(Geometry::new(self.y_true, self.y_fake, self.y_est, self.d)?)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        check_photons(&[self.n])?;
        if self.m.is_empty() || self.m.iter().any(|&m| m < 4) {
            return Err(CliError::Config("detect.m needs values of at least 4".into()));
        }
        if self.trials < 100 {
            return Err(CliError::Config(format!("detection needs at least 100 trials, got {}", self.trials)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Random instances per check; `--trials` overrides.
    pub instances: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { instances: 100 }
    }
}
