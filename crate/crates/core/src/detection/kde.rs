//! Gaussian kernel density estimates with the `h = M^{-1/5}` bandwidth.

use std::f64::consts::PI;

use super::{MeasurementSample, Port};
use crate::error::{param, Result};

/// `∫K²` for the standard Gaussian kernel.
pub const GAUSSIAN_R: f64 = 0.282_094_791_773_878_14;
/// `∫u²K(u)du` for the standard Gaussian kernel.
pub const GAUSSIAN_MU: f64 = 1.0;

/// Kernel support is truncated at this many bandwidths.
const KERNEL_CUTOFF: f64 = 9.0;

#[inline]
pub fn gaussian_kernel(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

pub fn default_bandwidth(m: usize) -> f64 {
    (m as f64).powf(-0.2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KdeEstimate {
    samples: Vec<f64>,
    bandwidth: f64,
}

/// KDE with the default bandwidth `M^{-1/5}`.
pub fn kde_build(samples: &[f64]) -> Result<KdeEstimate> {
    if samples.len() < 2 {
        return param(format!("a KDE needs at least 2 samples, got {}", samples.len()));
    }
    KdeEstimate::with_bandwidth(samples, default_bandwidth(samples.len()))
}

impl KdeEstimate {
    pub fn with_bandwidth(samples: &[f64], bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return param("a KDE needs samples");
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return param("bandwidth must be positive");
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return param("KDE samples must be finite");
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        Ok(Self { samples: s, bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn density(&self, x: f64) -> f64 {
        kernel_sum(&self.samples, self.bandwidth, x) / self.samples.len() as f64
    }

    /// Smallest and largest sample.
    pub fn span(&self) -> (f64, f64) {
        (self.samples[0], self.samples[self.samples.len() - 1])
    }
}

/// `Σ_i K_h(x − x_i)` over sorted `xs`, skipping samples beyond the cutoff.
fn kernel_sum(xs: &[f64], h: f64, x: f64) -> f64 {
    let lo = xs.partition_point(|&v| v < x - KERNEL_CUTOFF * h);
    let hi = xs.partition_point(|&v| v <= x + KERNEL_CUTOFF * h);
    xs[lo..hi].iter().map(|&v| gaussian_kernel((x - v) / h)).sum::<f64>() / h
}

/// Port-resolved estimate `P̂(q, r) = (1/M) Σ_{i: q_i = q} K_h(r − r_i)`.
///
/// All ports share one bandwidth set by the total sample count, so the
/// estimate integrates to one over ports and positions together.
#[derive(Clone, Debug, PartialEq)]
pub struct PortKde {
    per_port: [Vec<f64>; 3],
    total: usize,
    bandwidth: f64,
}

impl PortKde {
    pub fn build(samples: &[MeasurementSample]) -> Result<Self> {
        if samples.len() < 2 {
            return param(format!("a KDE needs at least 2 samples, got {}", samples.len()));
        }
        Self::with_bandwidth(samples, default_bandwidth(samples.len()))
    }

    pub fn with_bandwidth(samples: &[MeasurementSample], bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return param("bandwidth must be positive");
        }
        let mut per_port: [Vec<f64>; 3] = Default::default();
        for s in samples {
            if !s.r.is_finite() {
                return param("sample statistic must be finite");
            }
            per_port[s.port.index()].push(s.r);
        }
        for v in per_port.iter_mut() {
            v.sort_by(f64::total_cmp);
        }
        Ok(Self { per_port, total: samples.len(), bandwidth })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn port_samples(&self, port: Port) -> &[f64] {
        &self.per_port[port.index()]
    }

    pub fn port_mass(&self, port: Port) -> f64 {
        self.per_port[port.index()].len() as f64 / self.total as f64
    }

    pub fn density(&self, port: Port, r: f64) -> f64 {
        let xs = &self.per_port[port.index()];
        if xs.is_empty() {
            return 0.0;
        }
        kernel_sum(xs, self.bandwidth, r) / self.total as f64
    }

    /// Smallest and largest sample in `port`, if any.
    pub fn span(&self, port: Port) -> Option<(f64, f64)> {
        let xs = &self.per_port[port.index()];
        Some((*xs.first()?, *xs.last()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_simpson;

    #[test]
    fn bandwidth_rule() {
        let k = kde_build(&[0.0; 32]).unwrap();
        assert!((k.bandwidth() - 0.5).abs() < 1e-15);
        assert!(kde_build(&[1.0]).is_err());
        assert!(KdeEstimate::with_bandwidth(&[1.0], 0.0).is_err());
        assert!(KdeEstimate::with_bandwidth(&[f64::NAN], 1.0).is_err());
    }

    #[test]
    fn kernel_constants() {
        let r = adaptive_simpson(&|u: f64| gaussian_kernel(u).powi(2), -12.0, 12.0, 1e-13, 8).unwrap();
        let mu = adaptive_simpson(&|u: f64| u * u * gaussian_kernel(u), -14.0, 14.0, 1e-13, 8).unwrap();
        assert!((r - GAUSSIAN_R).abs() < 1e-11);
        assert!((GAUSSIAN_R - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-16);
        assert!((mu - GAUSSIAN_MU).abs() < 1e-11);
    }

    #[test]
    fn repeated_spike_is_one_gaussian() {
        let k = kde_build(&[1.5; 10]).unwrap();
        let h = k.bandwidth();
        for x in [-1.0, 1.0, 1.5, 2.7] {
            let want = gaussian_kernel((x - 1.5) / h) / h;
            assert!((k.density(x) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let k = kde_build(&xs).unwrap();
        let total = adaptive_simpson(&|x| k.density(x), -15.0, 15.0, 1e-9, 16).unwrap();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn port_kde_masses() {
        let s = vec![
            MeasurementSample { port: Port::Zero, r: 0.1 },
            MeasurementSample { port: Port::Zero, r: -0.3 },
            MeasurementSample { port: Port::One, r: 0.4 },
            MeasurementSample { port: Port::Zero, r: 1.0 },
        ];
        let k = PortKde::build(&s).unwrap();
        assert_eq!(k.port_mass(Port::Zero), 0.75);
        assert_eq!(k.port_mass(Port::Mixed), 0.0);
        assert_eq!(k.density(Port::Mixed, 0.0), 0.0);
        assert_eq!(k.span(Port::One), Some((0.4, 0.4)));
        let total: f64 = Port::ALL
            .iter()
            .map(|&p| adaptive_simpson(&|x| k.density(p, x), -12.0, 12.0, 1e-10, 8).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
}
