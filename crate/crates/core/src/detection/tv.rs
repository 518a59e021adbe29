//! Total variation distances and the KDE concentration bound.

use super::kde::{gaussian_kernel, PortKde, GAUSSIAN_MU, GAUSSIAN_R};
use super::{Port, ReducedDistribution};
use crate::error::{param, Error, Result};
use crate::model::Ensemble;
use crate::quadrature::adaptive_simpson;

/// Absolute tolerance for adaptive TV integrals.
pub const TV_TOL: f64 = 1e-5;
/// Largest probability mass allowed outside an integration range.
pub const COVERAGE_LIMIT: f64 = 1e-4;

/// Grid spacing is `min(sd, h) / GRID_RESOLUTION`.
const GRID_RESOLUTION: f64 = 8.0;
const GRID_MAX_POINTS: usize = 4097;
const GRID_MARGIN: f64 = 8.0;
/// The kernel recurrence is re-anchored this often to stop drift.
const RECURRENCE_RESET: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationRange {
    pub lo: f64,
    pub hi: f64,
}

impl IntegrationRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return param(format!("bad integration range [{lo}, {hi}]"));
        }
        Ok(Self { lo, hi })
    }
}

fn coverage_check(f: &impl Fn(f64) -> f64, range: &IntegrationRange, expected: f64) -> Result<()> {
    let mass = adaptive_simpson(f, range.lo, range.hi, 1e-9, 64)?;
    let missing = expected - mass;
    if missing > COVERAGE_LIMIT {
        return Err(Error::Coverage { missing, limit: COVERAGE_LIMIT });
    }
    Ok(())
}

/// `½∫|f − g|` over `range` by adaptive Simpson. Both densities must keep
/// all but `1e-4` of their unit mass inside the range.
pub fn tv_distance(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, range: &IntegrationRange) -> Result<f64> {
    coverage_check(&f, range, 1.0)?;
    coverage_check(&g, range, 1.0)?;
    Ok(0.5 * adaptive_simpson(&|x| (f(x) - g(x)).abs(), range.lo, range.hi, 2.0 * TV_TOL, 64)?)
}

/// Range covering both distributions' port components out to eight spreads.
fn reduced_range(a: &ReducedDistribution, b: &ReducedDistribution) -> Result<IntegrationRange> {
    let lo = a.center.min(b.center) - GRID_MARGIN * a.sd.max(b.sd);
    let hi = a.center.max(b.center) + GRID_MARGIN * a.sd.max(b.sd);
    IntegrationRange::new(lo, hi)
}

/// `TV(A, B) = ½ Σ_q ∫|A(q, r) − B(q, r)| dr` for port-resolved laws.
pub fn tv_reduced(a: &ReducedDistribution, b: &ReducedDistribution) -> Result<f64> {
    let range = reduced_range(a, b)?;
    let mut total = 0.0;
    for p in Port::ALL {
        let (wa, wb) = (a.weights[p.index()], b.weights[p.index()]);
        if wa == 0.0 && wb == 0.0 {
            continue;
        }
        coverage_check(&|x| a.density(p, x), &range, wa)?;
        coverage_check(&|x| b.density(p, x), &range, wb)?;
        total += adaptive_simpson(&|x| (a.density(p, x) - b.density(p, x)).abs(), range.lo, range.hi, TV_TOL, 64)?;
    }
    Ok(0.5 * total)
}

/// `TV(Q_1, Q_2)` between the honest outcome laws of a two-state ensemble
/// evaluated at the verifier estimate `y_est`.
pub fn tv_q1_q2(ens: &Ensemble, y_est: f64) -> Result<f64> {
    let [(_, p1), (_, p2)] = two_members(ens)?;
    tv_reduced(&ReducedDistribution::honest(p1, y_est)?, &ReducedDistribution::honest(p2, y_est)?)
}

pub(crate) fn two_members(ens: &Ensemble) -> Result<[&(f64, crate::model::ProbeSpec); 2]> {
    match ens.items() {
        [a, b] => Ok([a, b]),
        _ => Err(Error::Unsupported(format!("detection needs a two-state ensemble, got {} states", ens.len()))),
    }
}

/// Uniform grid used to tabulate one port component.
#[derive(Clone, Copy, Debug)]
struct Grid {
    lo: f64,
    dx: f64,
    n: usize,
}

impl Grid {
    fn covering(lo: f64, hi: f64, dx: f64) -> Self {
        let n = (((hi - lo) / dx).ceil() as usize + 1).clamp(2, GRID_MAX_POINTS);
        Self { lo, dx: (hi - lo) / (n - 1) as f64, n }
    }

    fn x(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.dx
    }

    fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5 * self.dx
        } else {
            self.dx
        }
    }
}

/// Adds `scale · K_h(x − v)` for every sample `v` onto the grid, using the
/// Gaussian's multiplicative recurrence along the grid.
fn scatter_kde(samples: &[f64], h: f64, scale: f64, grid: &Grid, out: &mut [f64]) {
    let reach = 9.0 * h;
    let d = grid.dx / h;
    let step_ratio = (-d * d).exp();
    for &v in samples {
        let first = (((v - reach - grid.lo) / grid.dx).ceil().max(0.0)) as usize;
        let last = (((v + reach - grid.lo) / grid.dx).floor().min((grid.n - 1) as f64)) as isize;
        if (first as isize) > last {
            continue;
        }
        let (mut val, mut ratio) = (0.0, 0.0);
        for (k, slot) in out.iter_mut().enumerate().take(last as usize + 1).skip(first) {
            if (k - first).is_multiple_of(RECURRENCE_RESET) {
                let u = (grid.x(k) - v) / h;
                val = gaussian_kernel(u);
                ratio = (-u * d - 0.5 * d * d).exp();
            }
            *slot += scale * val / h;
            val *= ratio;
            ratio *= step_ratio;
        }
    }
}

/// Both laws of one port tabulated on a shared grid.
struct PortTable {
    grid: Grid,
    truth: Vec<f64>,
    estimate: Vec<f64>,
}

fn port_table(q: &ReducedDistribution, p: &PortKde, port: Port) -> Option<PortTable> {
    let w = q.weights[port.index()];
    let span = p.span(port);
    if w == 0.0 && span.is_none() {
        return None;
    }
    let h = p.bandwidth();
    let (mut lo, mut hi) = (q.center, q.center);
    if let Some((a, b)) = span {
        lo = lo.min(a);
        hi = hi.max(b);
    }
    let pad = GRID_MARGIN * (q.sd + h);
    let grid = Grid::covering(lo - pad, hi + pad, q.sd.min(h) / GRID_RESOLUTION);
    let truth = (0..grid.n).map(|i| q.density(port, grid.x(i))).collect();
    let mut estimate = vec![0.0; grid.n];
    scatter_kde(p.port_samples(port), h, 1.0 / p.total() as f64, &grid, &mut estimate);
    Some(PortTable { grid, truth, estimate })
}

fn port_tables(q: &ReducedDistribution, p: &PortKde) -> Vec<PortTable> {
    Port::ALL.iter().filter_map(|&port| port_table(q, p, port)).collect()
}

/// `TV(Q, P̂)` by trapezoid quadrature on per-port grids.
pub fn tv_reduced_vs_kde(q: &ReducedDistribution, p: &PortKde) -> f64 {
    let mut total = 0.0;
    for t in port_tables(q, p) {
        for i in 0..t.grid.n {
            total += t.grid.weight(i) * (t.truth[i] - t.estimate[i]).abs();
        }
    }
    0.5 * total
}

/// `TV(Q_1 ⊗ Q_2, P̂_1 ⊗ P̂_2)` evaluated on the product of the per-port
/// grids, without the triangle-inequality split.
pub fn tv_product(q1: &ReducedDistribution, q2: &ReducedDistribution, p1: &PortKde, p2: &PortKde) -> f64 {
    let (t1, t2) = (port_tables(q1, p1), port_tables(q2, p2));
    let mut total = 0.0;
    for a in &t1 {
        for b in &t2 {
            for i in 0..a.grid.n {
                let (qa, pa, wa) = (a.truth[i], a.estimate[i], a.grid.weight(i));
                let mut row = 0.0;
                for j in 0..b.grid.n {
                    row += b.grid.weight(j) * (qa * b.truth[j] - pa * b.estimate[j]).abs();
                }
                total += wa * row;
            }
        }
    }
    0.5 * total
}

/// TV between discrete distributions on the same support.
pub fn tv_discrete(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return param("discrete distributions need equal support sizes");
    }
    Ok(0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Outer product `a ⊗ b`, flattened row-major.
pub fn product_discrete(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// The two integrals that control the KDE bias and variance terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KdeBoundTerms {
    /// `∫√Q`
    pub sqrt_integral: f64,
    /// `∫|Q″|`
    pub curvature_integral: f64,
}

/// `∫√Q` and `∫|Q″|` for a port-resolved law, summed over ports.
pub fn kde_bound_terms(q: &ReducedDistribution) -> Result<KdeBoundTerms> {
    let (mu, s) = (q.center, q.sd);
    let range = IntegrationRange::new(mu - 40.0 * s, mu + 40.0 * s)?;
    let mut sqrt_integral = 0.0;
    let mut curvature_integral = 0.0;
    for p in Port::ALL {
        let w = q.weights[p.index()];
        if w == 0.0 {
            continue;
        }
        let second = |x: f64| {
            let z = (x - mu) / s;
            q.density(p, x) * (z * z - 1.0) / (s * s)
        };
        sqrt_integral += adaptive_simpson(&|x| q.density(p, x).sqrt(), range.lo, range.hi, 1e-10, 64)?;
        curvature_integral += adaptive_simpson(&|x| second(x).abs(), range.lo, range.hi, 1e-10, 64)?;
    }
    Ok(KdeBoundTerms { sqrt_integral, curvature_integral })
}

/// `P(TV(Q, Q̂) > ε) ≤ exp(−m ξ)` with `ξ = 2t²` and
/// `t = ε − (½√R ∫√Q + ¼ μ ∫|Q″|) / m^{2/5}`. Invalid when `t ≤ 0`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct KdeDeviationBound {
    pub t: f64,
    pub xi: f64,
    pub bound: f64,
    pub valid: bool,
}

pub fn kde_deviation_bound(epsilon: f64, m: usize, terms: &KdeBoundTerms) -> KdeDeviationBound {
    let t = epsilon - kde_bias_offset(m, terms);
    deviation_bound_from_t(t, m)
}

/// `(½√R ∫√Q + ¼ μ ∫|Q″|) / m^{2/5}`.
pub fn kde_bias_offset(m: usize, terms: &KdeBoundTerms) -> f64 {
    (0.5 * GAUSSIAN_R.sqrt() * terms.sqrt_integral + 0.25 * GAUSSIAN_MU * terms.curvature_integral)
        / (m as f64).powf(0.4)
}

pub(crate) fn deviation_bound_from_t(t: f64, m: usize) -> KdeDeviationBound {
    if t > 0.0 {
        let xi = 2.0 * t * t;
        KdeDeviationBound { t, xi, bound: (-(m as f64) * xi).exp(), valid: true }
    } else {
        KdeDeviationBound { t, xi: 0.0, bound: 1.0, valid: false }
    }
}
