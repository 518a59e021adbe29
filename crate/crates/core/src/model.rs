//! Domain types shared by every other module.
//!
//! Conventions: the speed of light is 1 and the propagation time is chosen so
//! that both verifiers' pulses are centred on the origin when they meet a
//! prover at `y = 0`. With that choice time and the verifier separation drop
//! out of every final formula, so neither is represented here.

use std::fmt;
use std::ops::Mul;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

/// Complex amplitude type used throughout the crate.
pub type Complex = Complex64;

/// Tolerance used by constructors that validate unitarity and normalisation.
pub const VALIDATION_TOL: f64 = 1e-12;

/// A raw 2×2 complex matrix, row-major.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub m: [[Complex; 2]; 2],
}

impl Mat2 {
    pub const fn new(m: [[Complex; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn from_real(m: [[f64; 2]; 2]) -> Self {
        Self::new([
            [Complex::new(m[0][0], 0.0), Complex::new(m[0][1], 0.0)],
            [Complex::new(m[1][0], 0.0), Complex::new(m[1][1], 0.0)],
        ])
    }

    pub fn identity() -> Self {
        Self::from_real([[1.0, 0.0], [0.0, 1.0]])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex {
        self.m[row][col]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn conj(&self) -> Self {
        let m = &self.m;
        Self::new([[m[0][0].conj(), m[0][1].conj()], [m[1][0].conj(), m[1][1].conj()]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.m;
        Self::new([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn det(&self) -> Complex {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Euclidean norm of column `col`.
    pub fn column_norm(&self, col: usize) -> f64 {
        (self.m[0][col].norm_sqr() + self.m[1][col].norm_sqr()).sqrt()
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.m;
        let b = &rhs.m;
        let mut out = [[Complex::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2::new(out)
    }
}

impl fmt::Debug for Mat2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.m[0][0], self.m[0][1], self.m[1][0], self.m[1][1])
    }
}

/// A validated 2×2 unitary: a beam splitter acting on two spatial modes.
///
/// Entry `(i, j)` is the amplitude for input mode `j` to leave in mode `i`,
/// so the left input maps to `U00 l + U10 r` and the right input to
/// `U01 l + U11 r`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat2", into = "Mat2")]
pub struct Unitary2(Mat2);

impl Unitary2 {
    pub fn new(m: Mat2) -> Result<Self> {
        if !m.is_finite() {
            return param("unitary has non-finite entries");
        }
        let dev = unitarity_defect(&m);
        if dev >= VALIDATION_TOL {
            return param(format!("matrix is not unitary: max |U^H U - I| = {dev:.3e}"));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Mat2::identity())
    }

    /// Full U(2) parametrisation by four angles:
    /// `e^{i g} [[e^{i a} cos t, e^{i b} sin t], [-e^{-i b} sin t, e^{-i a} cos t]]`.
    pub fn from_angles(global: f64, diag_phase: f64, mixing: f64, off_phase: f64) -> Self {
        let g = Complex::from_polar(1.0, global);
        let (s, c) = mixing.sin_cos();
        let m = Mat2::new([
            [g * Complex::from_polar(c, diag_phase), g * Complex::from_polar(s, off_phase)],
            [-g * Complex::from_polar(s, -off_phase), g * Complex::from_polar(c, -diag_phase)],
        ]);
        Self(m)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex {
        self.0.get(row, col)
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.conj())
    }
}

impl TryFrom<Mat2> for Unitary2 {
    type Error = crate::Error;

    fn try_from(m: Mat2) -> Result<Self> {
        Self::new(m)
    }
}

impl From<Unitary2> for Mat2 {
    fn from(u: Unitary2) -> Mat2 {
        u.0
    }
}

impl Mul for Unitary2 {
    type Output = Unitary2;

    fn mul(self, rhs: Unitary2) -> Unitary2 {
        Unitary2(self.0 * rhs.0)
    }
}

impl fmt::Debug for Unitary2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Unitary2({:?})", self.0)
    }
}

/// Largest entrywise deviation of `m^H m` from the identity.
pub fn unitarity_defect(m: &Mat2) -> f64 {
    (m.adjoint() * *m).max_abs_diff(&Mat2::identity())
}

/// The prover's balanced beam splitter `(1/√2) [[1, 1], [-1, 1]]`.
pub fn make_balanced_u() -> Unitary2 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Unitary2(Mat2::from_real([[s, s], [-s, s]]))
}

/// Pure reflection `[[0, 1], [1, 0]]`, the single-sided ranging operation.
pub fn make_reflection_u() -> Unitary2 {
    Unitary2(Mat2::from_real([[0.0, 1.0], [1.0, 0.0]]))
}

/// One N-photon probe: a frequency-entangled NOON state with Gaussian
/// spectral envelope `exp(-k²/2β²)`, split between the left (Alice) and
/// right (Bob) inputs with amplitudes `amp_l`, `amp_r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProbeSpec {
    n_photons: u32,
    beta: f64,
    amp_l: Complex,
    amp_r: Complex,
}

impl ProbeSpec {
    pub fn new(n_photons: u32, beta: f64, amp_l: Complex, amp_r: Complex) -> Result<Self> {
        if n_photons == 0 {
            return param("photon number must be at least 1");
        }
        if !(beta.is_finite() && beta > 0.0) {
            return param(format!("bandwidth must be positive and finite, got {beta}"));
        }
        for z in [amp_l, amp_r] {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return param("probe amplitudes must be finite");
            }
        }
        let norm = amp_l.norm_sqr() + amp_r.norm_sqr();
        if (norm - 1.0).abs() > VALIDATION_TOL {
            return param(format!("|psi_l|^2 + |psi_r|^2 = {norm}, expected 1"));
        }
        Ok(Self { n_photons, beta, amp_l, amp_r })
    }

    /// Real amplitudes, the common case.
    pub fn real(n_photons: u32, beta: f64, amp_l: f64, amp_r: f64) -> Result<Self> {
        Self::new(n_photons, beta, Complex::new(amp_l, 0.0), Complex::new(amp_r, 0.0))
    }

    /// All photons sent from the left.
    pub fn single_sided(n_photons: u32, beta: f64) -> Result<Self> {
        Self::real(n_photons, beta, 1.0, 0.0)
    }

    /// Same side amplitudes, different photon number and bandwidth.
    pub fn with_shape(&self, n_photons: u32, beta: f64) -> Result<Self> {
        Self::new(n_photons, beta, self.amp_l, self.amp_r)
    }

    pub fn n_photons(&self) -> u32 {
        self.n_photons
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn amp_l(&self) -> Complex {
        self.amp_l
    }

    pub fn amp_r(&self) -> Complex {
        self.amp_r
    }

    pub fn amps(&self) -> [Complex; 2] {
        [self.amp_l, self.amp_r]
    }

    pub fn is_single_sided(&self) -> bool {
        self.amp_r.norm_sqr() <= VALIDATION_TOL
    }

    /// `max(|ψ_l|², |ψ_r|²)`.
    pub fn dominant_weight(&self) -> f64 {
        self.amp_l.norm_sqr().max(self.amp_r.norm_sqr())
    }
}

/// `⟨a|b⟩` for two probes with identical pulse shapes. Only the side
/// amplitudes contribute because the common envelope integrates to one.
pub fn probe_inner_product(a: &ProbeSpec, b: &ProbeSpec) -> Result<Complex> {
    if a.n_photons != b.n_photons || a.beta != b.beta {
        return param("probe_inner_product needs probes with the same N and beta");
    }
    Ok(a.amp_l.conj() * b.amp_l + a.amp_r.conj() * b.amp_r)
}

/// A weighted set of probes the verifiers draw challenges from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ensemble {
    items: Vec<(f64, ProbeSpec)>,
}

impl Ensemble {
    pub fn new(items: Vec<(f64, ProbeSpec)>) -> Result<Self> {
        let Some((_, first)) = items.first() else {
            return param("ensemble must contain at least one probe");
        };
        let (n, beta) = (first.n_photons, first.beta);
        let mut total = 0.0;
        for (w, p) in &items {
            if !(w.is_finite() && *w > 0.0) {
                return param(format!("ensemble weights must be positive, got {w}"));
            }
            if p.n_photons != n || p.beta != beta {
                return param("all ensemble probes must share N and beta");
            }
            total += w;
        }
        if (total - 1.0).abs() > VALIDATION_TOL {
            return param(format!("ensemble weights sum to {total}, expected 1"));
        }
        Ok(Self { items })
    }

    /// Equal-weight ensemble over real `(ψ_l, ψ_r)` pairs.
    pub fn uniform_real(n_photons: u32, beta: f64, sides: &[(f64, f64)]) -> Result<Self> {
        let w = 1.0 / sides.len() as f64;
        let items = sides
            .iter()
            .map(|&(l, r)| ProbeSpec::real(n_photons, beta, l, r).map(|p| (w, p)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(items)
    }

    /// The two-state ensemble `{(√3/2, 1/2), (1/2, √3/2)}` with equal weights.
    pub fn two_state_reference(n_photons: u32, beta: f64) -> Result<Self> {
        let c = 3f64.sqrt() / 2.0;
        Self::uniform_real(n_photons, beta, &[(c, 0.5), (0.5, c)])
    }

    pub fn items(&self) -> &[(f64, ProbeSpec)] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_photons(&self) -> u32 {
        self.items[0].1.n_photons
    }

    pub fn beta(&self) -> f64 {
        self.items[0].1.beta
    }

    /// The same side amplitudes and weights at a different photon number / bandwidth.
    pub fn with_shape(&self, n_photons: u32, beta: f64) -> Result<Self> {
        let items = self
            .items
            .iter()
            .map(|(w, p)| p.with_shape(n_photons, beta).map(|p| (*w, p)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(items)
    }
}

/// Positions along the verifier axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Geometry {
    /// Where the honest prover actually sits.
    pub y_true: f64,
    /// The position the cheaters try to impersonate.
    pub y_fake: f64,
    /// The verifiers' current position estimate.
    pub y_est: f64,
    /// Cheater separation; recorded for reports only.
    pub d: f64,
}

impl Geometry {
    pub fn new(y_true: f64, y_fake: f64, y_est: f64, d: f64) -> Result<Self> {
        if ![y_true, y_fake, y_est, d].iter().all(|v| v.is_finite()) {
            return param("geometry values must be finite");
        }
        if d <= 0.0 {
            return param("cheater separation d must be positive");
        }
        Ok(Self { y_true, y_fake, y_est, d })
    }

    /// Prover at the origin, cheaters aiming at the origin too.
    pub fn centered() -> Self {
        Self { y_true: 0.0, y_fake: 0.0, y_est: 0.0, d: 1.0 }
    }
}
