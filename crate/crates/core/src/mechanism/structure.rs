use crate::scalar::Scalar;

/// Clause of the threshold structure that a selection plan violates.
/// Ranks are one-based positions in ascending virtual-cost order.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureViolation {
    NotOnSimplex { total: f64 },
    LengthMismatch,
    /// A client other than the cheapest is selected more often than `1/N`.
    ExcessBeyondFirst { rank: usize },
    /// Two clients sit strictly between `0` and `1/N`.
    MultiplePartial { first: usize, second: usize },
    /// A client after the threshold is still selected.
    SelectedAfterThreshold { rank: usize },
}

impl std::fmt::Display for StructureViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::NotOnSimplex { total } => write!(f, "probabilities sum to {total}, not 1"),
            Self::LengthMismatch => write!(f, "order and probabilities differ in length"),
            Self::ExcessBeyondFirst { rank } => {
                write!(f, "rank {rank} exceeds 1/N but only rank 1 may")
            }
            Self::MultiplePartial { first, second } => {
                write!(f, "ranks {first} and {second} both lie strictly inside (0, 1/N)")
            }
            Self::SelectedAfterThreshold { rank } => {
                write!(f, "rank {rank} is selected after the threshold")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub passed: bool,
    pub violation: Option<StructureViolation>,
    /// One-based threshold rank implied by the plan when it passes.
    pub threshold: Option<usize>,
}

impl StructureReport {
    fn fail(v: StructureViolation) -> Self {
        Self {
            passed: false,
            violation: Some(v),
            threshold: None,
        }
    }
}

/// Checks the threshold structure with tolerance `1e-9`.
pub fn verify_structure<T: Scalar>(p: &[T], order: &[usize]) -> StructureReport {
    verify_structure_with_tol(p, order, 1e-9)
}

/// Checks, in the given ascending virtual-cost order, that at most rank 1
/// exceeds `1/N`, at most one rank lies strictly inside `(0, 1/N)`, ranks
/// before it sit at `1/N` and every rank after it is zero. Values within
/// `tol` of `0` or `1/N` count as equal to them.
pub fn verify_structure_with_tol<T: Scalar>(p: &[T], order: &[usize], tol: f64) -> StructureReport {
    if p.len() != order.len() || order.iter().any(|&k| k >= p.len()) {
        return StructureReport::fail(StructureViolation::LengthMismatch);
    }
    let n = p.len();
    let total: f64 = p.iter().map(|x| x.as_f64()).sum();
    if n == 0 || (total - 1.0).abs() > tol.max(1e-9) * n as f64 || p.iter().any(|x| x.as_f64() < -tol) {
        return StructureReport::fail(StructureViolation::NotOnSimplex { total });
    }
    let u = 1.0 / n as f64;
    let ranked: Vec<f64> = order.iter().map(|&k| p[k].as_f64()).collect();

    let mut partial: Option<usize> = None;
    let mut threshold = n;
    let mut closed = false;
    for (r, &q) in ranked.iter().enumerate().skip(1) {
        let rank = r + 1;
        if q > u + tol {
            return StructureReport::fail(StructureViolation::ExcessBeyondFirst { rank });
        }
        let is_zero = q <= tol;
        let is_unbiased = q >= u - tol;
        if closed {
            if is_zero {
                continue;
            }
            if !is_unbiased {
                if let Some(first) = partial {
                    return StructureReport::fail(StructureViolation::MultiplePartial {
                        first,
                        second: rank,
                    });
                }
            }
            return StructureReport::fail(StructureViolation::SelectedAfterThreshold { rank });
        }
        if is_unbiased {
            continue;
        }
        closed = true;
        if is_zero {
            threshold = rank - 1;
        } else {
            partial = Some(rank);
            threshold = rank;
        }
    }
    StructureReport {
        passed: true,
        violation: None,
        threshold: Some(threshold.max(1)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_plan_passes() {
        let r = verify_structure(&[0.45, 0.25, 0.25, 0.05], &[0, 1, 2, 3]);
        assert!(r.passed, "{r:?}");
        assert_eq!(r.threshold, Some(4));
    }

    #[test]
    fn uniform_passes() {
        let p = [0.2; 5];
        let r = verify_structure(&p, &[4, 3, 2, 1, 0]);
        assert!(r.passed);
        assert_eq!(r.threshold, Some(5));
    }

    #[test]
    fn misplaced_mass_fails() {
        let r = verify_structure(&[0.5, 0.1, 0.4], &[0, 1, 2]);
        assert!(!r.passed);
        assert_eq!(r.violation, Some(StructureViolation::ExcessBeyondFirst { rank: 3 }));
    }

    #[test]
    fn two_partials_fail() {
        let r = verify_structure(&[0.6, 0.2, 0.1, 0.1], &[0, 1, 2, 3]);
        assert_eq!(
            r.violation,
            Some(StructureViolation::MultiplePartial { first: 2, second: 3 })
        );
    }

    #[test]
    fn gap_then_selection_fails() {
        let r = verify_structure(&[0.5, 0.0, 0.25, 0.25], &[0, 1, 2, 3]);
        assert_eq!(r.violation, Some(StructureViolation::SelectedAfterThreshold { rank: 3 }));
    }

    #[test]
    fn respects_order() {
        // Cheapest client is position 2.
        let r = verify_structure(&[0.0, 0.3, 0.7], &[2, 1, 0]);
        assert!(r.passed);
        assert_eq!(r.threshold, Some(2));
        assert!(!verify_structure(&[0.0, 0.3, 0.7], &[0, 1, 2]).passed);
    }

    #[test]
    fn point_mass_and_off_simplex() {
        let r = verify_structure(&[1.0, 0.0, 0.0], &[0, 1, 2]);
        assert!(r.passed);
        assert_eq!(r.threshold, Some(1));
        assert!(!verify_structure(&[0.5, 0.4], &[0, 1]).passed);
    }
}
