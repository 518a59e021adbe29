//! Brute-force references for the analytic kernels.
//!
//! Nothing here uses the binomial grouping or the closed-form Gaussian
//! kernels. Overlaps are assembled literally: every photon is routed through
//! its own coordinate map for every side pattern, the pulse is sampled on a
//! grid, and the overlap integral is done by trapezoid.
//!
//! In the narrow-regulator limit a branch amplitude depends on the detected
//! positions only through one signed sum, so the transverse directions carry
//! a common normalisation and drop out. Only the longitudinal integral is
//! done numerically, with the pulse normalised so that a state overlaps
//! itself with value one. The readout time is fixed so that the returning
//! pulses are centred at the origin.

use crate::detection::{MeasurementSetup, Port};
use crate::error::{param, Error, Result};
use crate::model::{Complex, Mat2, ProbeSpec, Unitary2};
use crate::quadrature::trapezoid;

/// Largest photon number for the quadrature oracle.
pub const MAX_QUADRATURE_PHOTONS: u32 = 3;
/// Largest photon number for literal index-vector enumeration.
pub const MAX_INDEX_PHOTONS: u32 = 12;
/// Pulse centres must sit at least this many `1/β` inside the grid.
const COVERAGE_WIDTHS: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, points: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return param(format!("bad grid range [{x_min}, {x_max}]"));
        }
        if points < 1024 || !points.is_power_of_two() {
            return param(format!("grid points must be a power of two ≥ 1024, got {points}"));
        }
        Ok(Self { x_min, x_max, points })
    }

    /// `[−10/β, 10/β]` with 4096 points.
    pub fn default_for(beta: f64) -> Self {
        Self { x_min: -10.0 / beta, x_max: 10.0 / beta, points: 4096 }
    }

    /// Default grid widened to hold every pulse centre that `n` photons can
    /// produce with the prover at any of `ys`.
    pub fn for_positions(beta: f64, n: u32, ys: &[f64]) -> Self {
        let reach = 2.0 * n as f64 * ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
        Self { x_min: -10.0 / beta - reach, x_max: 10.0 / beta + reach, points: 4096 }
    }

    pub fn refined(&self) -> Self {
        Self { points: 2 * self.points, ..*self }
    }

    fn covers(&self, centre: f64, beta: f64) -> Result<()> {
        let pad = COVERAGE_WIDTHS / beta;
        if centre - pad < self.x_min || centre + pad > self.x_max {
            let missing = (self.x_min - (centre - pad)).max(centre + pad - self.x_max);
            return Err(Error::Coverage { missing, limit: 0.0 });
        }
        Ok(())
    }
}

/// Real pulse with unit `L²` norm, `(β²/π)^{1/4} exp(−β²x²/2)`.
fn pulse(beta: f64, x: f64) -> f64 {
    (beta * beta / std::f64::consts::PI).powf(0.25) * (-0.5 * beta * beta * x * x).exp()
}

/// Where the source photon of branch `branch` sat, given that it was
/// detected on side `side` at `z` with the prover at `y`: transmitted photons
/// keep their coordinate, redirected ones are mirrored about `y`.
fn source_coordinate(branch: usize, side: usize, z: f64, y: f64) -> f64 {
    if side == branch {
        z
    } else {
        2.0 * y - z
    }
}

/// The pulse argument of one branch as an affine function `slope·s + offset`
/// of the longitudinal coordinate `s = Σ_j c_j z_j`, `c_j = +1` for side 0.
fn branch_argument(branch: usize, sides: &[usize], y: f64) -> (f64, f64) {
    // evaluate Σ_j x_j at s = 0 and at s = n, where z_j = c_j exactly
    let n = sides.len() as f64;
    let at = |s: f64| -> f64 {
        sides
            .iter()
            .map(|&i| {
                let c = if i == 0 { 1.0 } else { -1.0 };
                source_coordinate(branch, i, c * s / n, y)
            })
            .sum()
    };
    let offset = at(0.0);
    ((at(n) - offset) / n, offset)
}

/// `∫ g(bra argument) g(ket argument) ds` for one side pattern.
pub fn oracle_delta(bra_branch: usize, ket_branch: usize, sides: &[usize], beta: f64, y_bra: f64, y_ket: f64, grid: &GridSpec) -> Result<f64> {
    if bra_branch > 1 || ket_branch > 1 || sides.iter().any(|&i| i > 1) || sides.is_empty() {
        return param("branches and sides must be 0 or 1, with at least one photon");
    }
    let (sa, oa) = branch_argument(bra_branch, sides, y_bra);
    let (sb, ob) = branch_argument(ket_branch, sides, y_ket);
    grid.covers(-oa / sa, beta)?;
    grid.covers(-ob / sb, beta)?;
    Ok(trapezoid(|s| pulse(beta, sa * s + oa) * pulse(beta, sb * s + ob), grid.x_min, grid.x_max, grid.points))
}

fn index_vectors(n: u32) -> impl Iterator<Item = Vec<usize>> {
    (0..1u32 << n).map(move |bits| (0..n).map(|j| ((bits >> j) & 1) as usize).collect())
}

/// `Σ_{i⃗ ∈ {0,1}^n} Π_j f[i_j] · kernel(#ones)` by enumeration.
pub fn oracle_index_sum(factors: [Complex; 2], kernel: impl Fn(u32) -> f64, n: u32) -> Result<Complex> {
    if n == 0 || n > MAX_INDEX_PHOTONS {
        return Err(Error::Unsupported(format!("index enumeration needs 1 ≤ N ≤ {MAX_INDEX_PHOTONS}, got {n}")));
    }
    let mut total = Complex::new(0.0, 0.0);
    for v in index_vectors(n) {
        let ones = v.iter().filter(|&&i| i == 1).count() as u32;
        let prod = v.iter().fold(Complex::new(1.0, 0.0), |acc, &i| acc * factors[i]);
        total += prod * kernel(ones);
    }
    Ok(total)
}

/// Overlap of the bra state (mode matrix `bra_u` at `y_bra`) with the ket
/// state (`ket_u` at `y_ket`) by side-pattern enumeration and quadrature.
#[allow(clippy::too_many_arguments)]
pub fn oracle_overlap_general(
    bra_u: &Mat2,
    bra_amps: [Complex; 2],
    ket_u: &Mat2,
    ket_amps: [Complex; 2],
    beta: f64,
    n: u32,
    y_bra: f64,
    y_ket: f64,
    grid: &GridSpec,
) -> Result<Complex> {
    if n == 0 || n > MAX_QUADRATURE_PHOTONS {
        return Err(Error::Unsupported(format!("quadrature oracle needs 1 ≤ N ≤ {MAX_QUADRATURE_PHOTONS}, got {n}")));
    }
    let mut total = Complex::new(0.0, 0.0);
    for sides in index_vectors(n) {
        for p in 0..2 {
            for q in 0..2 {
                let weight = bra_amps[p].conj() * ket_amps[q];
                let modes = sides
                    .iter()
                    .fold(Complex::new(1.0, 0.0), |acc, &i| acc * bra_u.get(i, p).conj() * ket_u.get(i, q));
                if weight * modes == Complex::new(0.0, 0.0) {
                    continue;
                }
                total += weight * modes * oracle_delta(p, q, &sides, beta, y_bra, y_ket, grid)?;
            }
        }
    }
    Ok(total)
}

/// `⟨φ_{y_est}|γ_{y_fake}⟩` by quadrature.
pub fn oracle_overlap(u: &Unitary2, u_prime: &Mat2, probe: &ProbeSpec, y_est: f64, y_fake: f64, grid: &GridSpec) -> Result<Complex> {
    oracle_overlap_general(u.matrix(), probe.amps(), u_prime, probe.amps(), probe.beta(), probe.n_photons(), y_est, y_fake, grid)
}

/// Single-photon detection densities tabulated on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementDensity {
    pub grid: GridSpec,
    /// Density of the detected coordinate for ports 0 and 1.
    pub ports: [Vec<f64>; 2],
}

impl MeasurementDensity {
    fn dx(&self) -> f64 {
        (self.grid.x_max - self.grid.x_min) / (self.grid.points - 1) as f64
    }

    fn x(&self, i: usize) -> f64 {
        self.grid.x_min + i as f64 * self.dx()
    }

    fn moment(&self, port: Port, k: i32) -> Result<f64> {
        let col = match port {
            Port::Zero => &self.ports[0],
            Port::One => &self.ports[1],
            Port::Mixed => return Err(Error::Unsupported("a single photon cannot split".into())),
        };
        let v: Vec<f64> = col.iter().enumerate().map(|(i, d)| d * self.x(i).powi(k)).collect();
        Ok(crate::quadrature::trapezoid_values(&v, self.dx()))
    }

    pub fn mass(&self, port: Port) -> Result<f64> {
        self.moment(port, 0)
    }

    pub fn total_mass(&self) -> f64 {
        self.mass(Port::Zero).unwrap_or(0.0) + self.mass(Port::One).unwrap_or(0.0)
    }

    pub fn mean(&self, port: Port) -> Result<f64> {
        Ok(self.moment(port, 1)? / self.mass(port)?)
    }

    pub fn variance(&self, port: Port) -> Result<f64> {
        let m = self.mean(port)?;
        Ok(self.moment(port, 2)? / self.mass(port)? - m * m)
    }
}

/// Exact single-photon outcome densities after the prover's `U` and the
/// verifiers' `R`. Port 0 combines the left mode at `z` with the right mode
/// at `−z`; port 1 the left mode at `−w` with the right mode at `w`.
pub fn oracle_measurement_density(setup: &MeasurementSetup, probe: &ProbeSpec, y: f64, grid: &GridSpec) -> Result<MeasurementDensity> {
    if probe.n_photons() != 1 {
        return Err(Error::Unsupported("the measurement oracle handles one photon only".into()));
    }
    let beta = probe.beta();
    for c in [0.0, 2.0 * y, -2.0 * y] {
        grid.covers(c, beta)?;
    }
    let (u, r) = (setup.u, setup.r);
    let [pl, pr] = probe.amps();
    let g = |x: f64| pulse(beta, x);
    let left = |x: f64| pl * u.get(0, 0) * g(x) + pr * u.get(0, 1) * g(2.0 * y - x);
    let right = |x: f64| pl * u.get(1, 0) * g(2.0 * y - x) + pr * u.get(1, 1) * g(x);
    let dx = (grid.x_max - grid.x_min) / (grid.points - 1) as f64;
    let mut ports = [Vec::with_capacity(grid.points), Vec::with_capacity(grid.points)];
    for i in 0..grid.points {
        let z = grid.x_min + i as f64 * dx;
        ports[0].push((r.get(0, 0) * left(z) + r.get(1, 0) * right(-z)).norm_sqr());
        ports[1].push((r.get(0, 1) * left(-z) + r.get(1, 1) * right(z)).norm_sqr());
    }
    Ok(MeasurementDensity { grid: *grid, ports })
}

/// One row of an oracle certification run.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct CertificationRow {
    pub check: &'static str,
    pub instances: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
}

impl CertificationRow {
    pub fn passed(&self) -> bool {
        self.max_deviation < self.tolerance
    }
}

fn random_angles<R: rand::Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

fn random_probe<R: rand::Rng>(rng: &mut R, n: u32, beta: f64) -> Result<ProbeSpec> {
    let a = random_angles(rng, 3);
    let t = a[0] / 4.0;
    ProbeSpec::new(n, beta, Complex::from_polar(t.cos(), a[1]), Complex::from_polar(t.sin(), a[2]))
}

/// Compares every analytic kernel with its brute-force reference on
/// `instances` random inputs each.
pub fn certify(instances: usize, seed: u64) -> Result<Vec<CertificationRow>> {
    use crate::attack::{effective_u, AttackStrategy};
    use crate::detection::ReducedDistribution;
    use crate::kernels::{attack_overlap, delta_pq, honest_fidelity, q_sum, KernelParams, QWeight};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut dev = [0.0f64; 5];
    for _ in 0..instances {
        let n = rng.random_range(1..=MAX_QUADRATURE_PHOTONS);
        let beta = rng.random_range(0.5..2.0);
        let (y_est, y_fake) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let grid = GridSpec::for_positions(beta, n, &[y_est, y_fake]);
        let a = random_angles(&mut rng, 4);
        let u = Unitary2::from_angles(a[0], a[1], a[2], a[3]);
        let probe = random_probe(&mut rng, n, beta)?;

        let sides: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let ones = sides.iter().filter(|&&i| i == 1).count() as u32;
        let kp = KernelParams::for_positions(beta, n, y_est, y_fake)?;
        for (p, q) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let o = oracle_delta(p, q, &sides, beta, y_est, y_fake, &grid)?;
            dev[0] = dev[0].max((o - delta_pq(p as u8 + 1, q as u8 + 1, ones, &kp)?).abs());
        }

        let m = effective_u(&AttackStrategy::from_angles(&random_angles(&mut rng, 16))?).m;
        let o = oracle_overlap(&u, &m, &probe, y_est, y_fake, &grid)?;
        let an = attack_overlap(&u, &m, &probe, y_est, y_fake)?;
        dev[1] = dev[1].max((o - an).norm() / an.norm().max(1e-3));

        let dy = rng.random_range(-0.5..0.5);
        let g = GridSpec::for_positions(beta, n, &[y_est, y_est + dy]);
        let o = oracle_overlap(&u, u.matrix(), &probe, y_est, y_est + dy, &g)?;
        let an = honest_fidelity(&u, &probe, y_est, dy)?;
        dev[2] = dev[2].max((o - an).norm() / an.norm().max(1e-3));

        let n_big = rng.random_range(1..=MAX_INDEX_PHOTONS);
        let r = random_angles(&mut rng, 4);
        let (fa, fb) = (Complex::from_polar(r[0] / std::f64::consts::TAU, r[1]), Complex::from_polar(r[2] / std::f64::consts::TAU, r[3]));
        let kp_big = KernelParams::for_positions(beta, n_big, y_est, y_fake)?;
        let (kp_, kq_) = (rng.random_range(1..=2u8), rng.random_range(1..=2u8));
        let kernel = |q: u32| (-kp_big.exponent(kp_, kq_, q).unwrap_or(f64::INFINITY)).exp();
        let o = oracle_index_sum([fa, fb], kernel, n_big)?;
        let an = q_sum(QWeight::new(fa, fb)?, kernel, n_big)?;
        let scale = (0..=n_big)
            .map(|q| fa.norm().powi((n_big - q) as i32) * fb.norm().powi(q as i32))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        dev[3] = dev[3].max((o - an).norm() / an.norm().max(scale));

        let single = random_probe(&mut rng, 1, beta)?;
        let d = oracle_measurement_density(&MeasurementSetup::balanced(), &single, 0.0, &GridSpec::default_for(beta))?;
        let reduced = ReducedDistribution::honest(&single, 0.0)?;
        dev[4] = dev[4].max((d.total_mass() - 1.0).abs());
        for (port, k) in [(Port::Zero, 0), (Port::One, 1)] {
            dev[4] = dev[4].max((d.mass(port)? - reduced.weights[k]).abs());
            if reduced.weights[k] > 1e-3 {
                dev[4] = dev[4].max((d.mean(port)? - reduced.center).abs());
                dev[4] = dev[4].max((d.variance(port)? - reduced.sd * reduced.sd).abs());
            }
        }
    }
    let names = ["delta_pq", "attack_overlap", "honest_fidelity", "q_sum", "measurement_density"];
    let tol = [1e-6, 1e-6, 1e-6, 1e-10, 1e-6];
    Ok((0..5).map(|k| CertificationRow { check: names[k], instances, max_deviation: dev[k], tolerance: tol[k] }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{attack_overlap, delta_pq, q_sum, KernelParams, QWeight};
    use crate::model::{make_balanced_u, make_reflection_u};

    #[test]
    fn certification_passes_and_is_seeded() {
        let a = certify(10, 4).unwrap();
        assert!(a.iter().all(|r| r.passed()), "{a:?}");
        assert_eq!(a, certify(10, 4).unwrap());
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(-1.0, 1.0, 1000).is_err());
        assert!(GridSpec::new(-1.0, 1.0, 512).is_err());
        assert!(GridSpec::new(1.0, -1.0, 1024).is_err());
        assert!(GridSpec::new(-1.0, 1.0, 2048).is_ok());
    }

    #[test]
    fn coordinate_maps_reproduce_kernel_arguments() {
        // branch 0 with Q redirected photons: s + 2Qy; branch 1: −s + 2(N−Q)y
        let sides = [0, 1, 1];
        assert_eq!(branch_argument(0, &sides, 0.5), (1.0, 2.0));
        assert_eq!(branch_argument(1, &sides, 0.5), (-1.0, 1.0));
    }

    #[test]
    fn delta_matches_closed_form() {
        let beta = 1.3;
        let (y_bra, y_ket) = (0.2, 0.45);
        let grid = GridSpec::for_positions(beta, 3, &[y_bra, y_ket]);
        let kp = KernelParams::for_positions(beta, 3, y_bra, y_ket).unwrap();
        for sides in index_vectors(3) {
            let qq = sides.iter().filter(|&&i| i == 1).count() as u32;
            for p in 0..2 {
                for q in 0..2 {
                    let o = oracle_delta(p, q, &sides, beta, y_bra, y_ket, &grid).unwrap();
                    let a = delta_pq(p as u8 + 1, q as u8 + 1, qq, &kp).unwrap();
                    assert!((o - a).abs() < 1e-10, "{p}{q} Q={qq}: {o} vs {a}");
                }
            }
        }
    }

    #[test]
    fn cross_kernel_shift_sign_at_two_photons() {
        let beta = 1.0;
        let grid = GridSpec::for_positions(beta, 2, &[0.3]);
        // δ12 at Δy = 0 is exp(−β²(2y″)²), from one side pattern with Q = 1
        let o = oracle_delta(0, 1, &[0, 1], beta, 0.3, 0.3, &grid).unwrap();
        assert!((o - (-0.36f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn coverage_is_enforced() {
        let tight = GridSpec::new(-2.0, 2.0, 1024).unwrap();
        assert!(matches!(oracle_delta(0, 0, &[0], 1.0, 0.0, 0.0, &tight), Err(Error::Coverage { .. })));
    }

    #[test]
    fn index_sum_examples() {
        let (a, b) = (Complex::new(0.3, 0.2), Complex::new(-0.4, 0.5));
        let one = oracle_index_sum([a, b], |_| 1.0, 7).unwrap();
        assert!((one - (a + b).powu(7)).norm() < 1e-14);
        let half = Complex::new(0.5, 0.0);
        let alt = oracle_index_sum([half, half], |q| if q % 2 == 0 { 1.0 } else { -1.0 }, 5).unwrap();
        assert!(alt.norm() < 1e-15);
        let w = QWeight::new(a, b).unwrap();
        let k = |q: u32| (-0.1 * q as f64).exp();
        assert!((oracle_index_sum([a, b], k, 12).unwrap() - q_sum(w, k, 12).unwrap()).norm() < 1e-13);
        assert!(matches!(oracle_index_sum([a, b], k, 13), Err(Error::Unsupported(_))));
    }

    #[test]
    fn overlap_matches_analytic_for_balanced() {
        let u = make_balanced_u();
        let p = ProbeSpec::real(1, 1.0, 0.6, 0.8).unwrap();
        let grid = GridSpec::for_positions(1.0, 1, &[0.1, 0.4]);
        let o = oracle_overlap(&u, u.matrix(), &p, 0.1, 0.4, &grid).unwrap();
        let a = attack_overlap(&u, u.matrix(), &p, 0.1, 0.4).unwrap();
        assert!((o - a).norm() < 1e-8);
        let self_overlap = oracle_overlap(&u, u.matrix(), &p, 0.1, 0.1, &grid).unwrap();
        assert!((self_overlap - 1.0).norm() < 1e-8);
    }

    #[test]
    fn overlap_limits() {
        let p = ProbeSpec::real(4, 1.0, 0.6, 0.8).unwrap();
        let grid = GridSpec::default_for(1.0);
        assert!(matches!(oracle_overlap(&make_reflection_u(), &Mat2::identity(), &p, 0.0, 0.0, &grid), Err(Error::Unsupported(_))));
        let one = ProbeSpec::single_sided(1, 1.0).unwrap();
        assert!(oracle_measurement_density(&MeasurementSetup::balanced(), &p, 0.0, &grid).is_err());
        assert!(oracle_measurement_density(&MeasurementSetup::balanced(), &one, 0.0, &grid).is_ok());
    }

    #[test]
    fn measurement_density_moments() {
        let beta = 1.4;
        let grid = GridSpec::default_for(beta);
        let p = ProbeSpec::real(1, beta, 0.6, 0.8).unwrap();
        let d = oracle_measurement_density(&MeasurementSetup::balanced(), &p, 0.0, &grid).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-10);
        assert!((d.mass(Port::Zero).unwrap() - 0.36).abs() < 1e-10);
        for port in [Port::Zero, Port::One] {
            assert!(d.mean(port).unwrap().abs() < 1e-10);
            assert!((d.variance(port).unwrap() - 1.0 / (2.0 * beta * beta)).abs() < 1e-10);
        }
        // a one-sided probe keeps its whole mass centred at −y
        let left = ProbeSpec::single_sided(1, beta).unwrap();
        let d = oracle_measurement_density(&MeasurementSetup::balanced(), &left, 0.05, &GridSpec::for_positions(beta, 1, &[0.05])).unwrap();
        assert!((d.mean(Port::Zero).unwrap() + 0.05).abs() < 1e-10);
    }
}
