use crate::error::{Error, Result};

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::config("delta", format!("must lie in (0, 1), got {delta}")))
    }
}

/// Gaussian noise multiplier giving `(epsilon, delta)`-DP over
/// `participations` noisy releases: `c2 * sqrt(T_k ln(1/delta)) / epsilon`.
/// An infinite budget yields zero noise.
pub fn noise_sigma(participations: usize, epsilon: f64, delta: f64, c2: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(c2 > 0.0 && c2.is_finite()) {
        return Err(Error::config("c2", format!("must be > 0, got {c2}")));
    }
    if participations == 0 {
        return Err(Error::domain("noise is undefined for a client that never trains"));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::config(
            "epsilon",
            format!("selected client has privacy budget {epsilon}; budgets of trained clients must be > 0"),
        ));
    }
    Ok(c2 * (participations as f64 * (1.0 / delta).ln()).sqrt() / epsilon)
}

/// Inverse of [`noise_sigma`]: the budget spent by `participations`
/// releases at noise multiplier `sigma`.
pub fn implied_epsilon(participations: usize, sigma: f64, delta: f64, c2: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("sigma must be >= 0, got {sigma}")));
    }
    Ok(c2 * (participations as f64 * (1.0 / delta).ln()).sqrt() / sigma)
}

/// Scales `g` in place so its L2 norm is at most `bound`; returns the factor.
pub fn clip_in_place(g: &mut [f64], bound: f64) -> f64 {
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = 1.0 / (norm / bound).max(1.0);
    if scale < 1.0 {
        g.iter_mut().for_each(|x| *x *= scale);
    }
    scale
}

pub fn clip(g: &[f64], bound: f64) -> Vec<f64> {
    let mut out = g.to_vec();
    clip_in_place(&mut out, bound);
    out
}
