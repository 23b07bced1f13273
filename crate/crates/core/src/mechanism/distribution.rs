use rand::Rng;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const REGULARITY_GRID: usize = 1000;

/// Family of a client's privacy-sensitivity prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind<T> {
    Uniform { low: T, high: T },
    /// Normal(mean, std_dev) conditioned on `[low, high]`.
    TruncatedGaussian { mean: T, std_dev: T, low: T, high: T },
}

/// A validated prior over privacy sensitivities.
///
/// Construction rejects supports that reach below zero and any prior whose
/// virtual cost `c + F(c)/f(c)` is not strictly increasing on a
/// 1000-point grid over the support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostDistribution<T> {
    kind: DistributionKind<T>,
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl<T: Scalar> CostDistribution<T> {
    pub fn uniform(low: T, high: T) -> Result<Self> {
        if !(low.is_finite() && high.is_finite()) || low < T::zero() || high <= low {
            return Err(Error::Distribution(format!(
                "uniform support [{low}, {high}] must satisfy 0 <= low < high"
            )));
        }
        Self::checked(DistributionKind::Uniform { low, high })
    }

    pub fn truncated_gaussian(mean: T, std_dev: T, low: T, high: T) -> Result<Self> {
        if !(mean.is_finite() && std_dev.is_finite() && low.is_finite() && high.is_finite()) {
            return Err(Error::Distribution("gaussian parameters must be finite".into()));
        }
        if std_dev <= T::zero() {
            return Err(Error::Distribution(format!("std_dev {std_dev} must be positive")));
        }
        if low < T::zero() || high <= low {
            return Err(Error::Distribution(format!(
                "truncation [{low}, {high}] must satisfy 0 <= low < high"
            )));
        }
        Self::checked(DistributionKind::TruncatedGaussian {
            mean,
            std_dev,
            low,
            high,
        })
    }

    fn checked(kind: DistributionKind<T>) -> Result<Self> {
        let dist = Self { kind };
        let (low, high) = dist.support();
        let (lo, hi) = (low.as_f64(), high.as_f64());
        let mut prev = f64::NEG_INFINITY;
        for i in 0..REGULARITY_GRID {
            let c = lo + (hi - lo) * i as f64 / (REGULARITY_GRID - 1) as f64;
            let density = dist.pdf_f64(c);
            if !(density > 0.0) {
                return Err(Error::Distribution(format!("density vanishes at c = {c}")));
            }
            let v = dist.virtual_cost_f64(c);
            if !(v > prev) {
                return Err(Error::Distribution(format!(
                    "virtual cost is not strictly increasing near c = {c}"
                )));
            }
            prev = v;
        }
        Ok(dist)
    }

    pub fn kind(&self) -> DistributionKind<T> {
        self.kind
    }

    pub fn support(&self) -> (T, T) {
        match self.kind {
            DistributionKind::Uniform { low, high } => (low, high),
            DistributionKind::TruncatedGaussian { low, high, .. } => (low, high),
        }
    }

    pub fn contains(&self, c: T) -> bool {
        let (low, high) = self.support();
        c >= low && c <= high
    }

    pub fn cdf(&self, c: T) -> T {
        T::lit(self.cdf_f64(c.as_f64()))
    }

    pub fn pdf(&self, c: T) -> T {
        T::lit(self.pdf_f64(c.as_f64()))
    }

    fn cdf_f64(&self, c: f64) -> f64 {
        match self.kind {
            DistributionKind::Uniform { low, high } => {
                let (a, b) = (low.as_f64(), high.as_f64());
                ((c - a) / (b - a)).clamp(0.0, 1.0)
            }
            DistributionKind::TruncatedGaussian {
                mean,
                std_dev,
                low,
                high,
            } => {
                let (mu, sd) = (mean.as_f64(), std_dev.as_f64());
                let c = c.clamp(low.as_f64(), high.as_f64());
                let lo = std_normal_cdf((low.as_f64() - mu) / sd);
                let hi = std_normal_cdf((high.as_f64() - mu) / sd);
                (std_normal_cdf((c - mu) / sd) - lo) / (hi - lo)
            }
        }
    }

    fn pdf_f64(&self, c: f64) -> f64 {
        match self.kind {
            DistributionKind::Uniform { low, high } => {
                let (a, b) = (low.as_f64(), high.as_f64());
                if c < a || c > b {
                    0.0
                } else {
                    1.0 / (b - a)
                }
            }
            DistributionKind::TruncatedGaussian {
                mean,
                std_dev,
                low,
                high,
            } => {
                let (mu, sd, a, b) = (mean.as_f64(), std_dev.as_f64(), low.as_f64(), high.as_f64());
                if c < a || c > b {
                    return 0.0;
                }
                let mass = std_normal_cdf((b - mu) / sd) - std_normal_cdf((a - mu) / sd);
                std_normal_pdf((c - mu) / sd) / (sd * mass)
            }
        }
    }

    /// `c + F(c)/f(c)` without the support check.
    fn virtual_cost_f64(&self, c: f64) -> f64 {
        match self.kind {
            DistributionKind::Uniform { low, .. } => 2.0 * c - low.as_f64(),
            DistributionKind::TruncatedGaussian {
                mean, std_dev, low, ..
            } => {
                // The truncation mass cancels in F/f.
                let (mu, sd) = (mean.as_f64(), std_dev.as_f64());
                let x = (c - mu) / sd;
                let head = std_normal_cdf(x) - std_normal_cdf((low.as_f64() - mu) / sd);
                c + sd * head / std_normal_pdf(x)
            }
        }
    }

    /// Virtual cost `c + F(c)/f(c)`; errors when `c` is off-support.
    pub fn virtual_cost(&self, c: T) -> Result<T> {
        if !c.is_finite() || !self.contains(c) {
            let (low, high) = self.support();
            return Err(Error::domain(format!(
                "sensitivity {c} outside support [{low}, {high}]"
            )));
        }
        match self.kind {
            DistributionKind::Uniform { low, .. } => Ok(c + c - low),
            DistributionKind::TruncatedGaussian { .. } => {
                Ok(T::lit(self.virtual_cost_f64(c.as_f64())))
            }
        }
    }

    /// Inverse CDF by bisection on the support.
    pub fn quantile(&self, u: f64) -> T {
        let (low, high) = self.support();
        let (mut lo, mut hi) = (low.as_f64(), high.as_f64());
        if let DistributionKind::Uniform { .. } = self.kind {
            return T::lit((lo + u * (hi - lo)).clamp(lo, hi));
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_f64(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        T::lit(0.5 * (lo + hi))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        self.quantile(rng.gen::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_support() {
        assert!(CostDistribution::<f64>::uniform(-0.1, 1.0).is_err());
        assert!(CostDistribution::<f64>::uniform(1.0, 1.0).is_err());
        assert!(CostDistribution::<f64>::truncated_gaussian(0.5, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn uniform_cdf_and_pdf() {
        let d = CostDistribution::<f64>::uniform(0.0, 2.0).unwrap();
        assert_eq!(d.cdf(1.0), 0.5);
        assert_eq!(d.pdf(1.0), 0.5);
        assert_eq!(d.virtual_cost(0.5).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_cdf_is_normalised() {
        let d = CostDistribution::<f64>::truncated_gaussian(0.5, 0.2, 0.0, 1.0).unwrap();
        assert!(d.cdf(0.0).abs() < 1e-15);
        assert!((d.cdf(1.0) - 1.0).abs() < 1e-12);
        assert!((d.cdf(0.5) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = CostDistribution::<f64>::truncated_gaussian(0.3, 0.4, 0.0, 2.0).unwrap();
        for u in [0.01, 0.2, 0.5, 0.77, 0.99] {
            let c = d.quantile(u);
            assert!((d.cdf(c) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let d = CostDistribution::<f32>::uniform(0.0, 1.0).unwrap();
        assert_eq!(d.virtual_cost(0.3).unwrap(), 0.6);
    }
}
