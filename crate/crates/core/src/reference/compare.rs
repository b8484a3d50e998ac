//! Error metrics between a candidate surface and a reference.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MeaError, Result};
use crate::geometry::{sample_interior, DomainSpec, Point, PointCloud};
use crate::residual::{pairwise_sum, SurfaceField};

/// Size of the fixed interior cloud used for comparisons.
pub const COMPARISON_POINTS: usize = 10_000;
pub const COMPARISON_SEED: u64 = 0x5eed_c0de;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMetrics {
    pub rmse: f64,
    /// RMSE over the RMS of the reference, as a fraction (not percent).
    pub rel_l2: f64,
    pub max_abs: f64,
}

impl FieldMetrics {
    pub fn rel_l2_percent(&self) -> f64 {
        100.0 * self.rel_l2
    }
}

/// Metrics of `candidate - reference`, normalized by the reference.
pub fn compare_values(candidate: &[f64], reference: &[f64]) -> Result<FieldMetrics> {
    if candidate.is_empty() {
        return Err(MeaError::EmptyCloud);
    }
    if candidate.len() != reference.len() {
        return Err(MeaError::Config(format!("{} candidate values against {} reference values", candidate.len(), reference.len())));
    }
    let n = candidate.len() as f64;
    let d2: Vec<f64> = candidate.iter().zip(reference).map(|(c, r)| (c - r) * (c - r)).collect();
    let r2: Vec<f64> = reference.iter().map(|r| r * r).collect();
    let rmse = (pairwise_sum(&d2) / n).sqrt();
    let rms = (pairwise_sum(&r2) / n).sqrt();
    if rms == 0.0 {
        return Err(MeaError::ZeroReference);
    }
    let max_abs = candidate.iter().zip(reference).map(|(c, r)| (c - r).abs()).fold(0.0, f64::max);
    Ok(FieldMetrics { rmse, rel_l2: rmse / rms, max_abs })
}

pub fn compare_fields(candidate: &dyn SurfaceField, reference: &dyn SurfaceField, points: &[Point]) -> Result<FieldMetrics> {
    if points.is_empty() {
        return Err(MeaError::EmptyCloud);
    }
    compare_values(&candidate.values(points)?, &reference.values(points)?)
}

/// The fixed-seed interior cloud shared by all comparisons on a domain.
pub fn comparison_cloud(domain: &DomainSpec) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(COMPARISON_SEED);
    sample_interior(domain, COMPARISON_POINTS, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_fields_have_zero_error() {
        let r = [1.0, -2.0, 3.0];
        assert_eq!(compare_values(&r, &r).unwrap(), FieldMetrics { rmse: 0.0, rel_l2: 0.0, max_abs: 0.0 });
    }

    #[test]
    fn constant_offset() {
        let r = [1.0, -1.0, 1.0, -1.0];
        let c: Vec<f64> = r.iter().map(|v| v + 1e-3).collect();
        let m = compare_values(&c, &r).unwrap();
        assert!((m.rmse - 1e-3).abs() < 1e-15 && (m.rel_l2_percent() - 0.1).abs() < 1e-12 && (m.max_abs - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(compare_values(&[1.0], &[0.0]), Err(MeaError::ZeroReference)));
        assert!(matches!(compare_values(&[], &[]), Err(MeaError::EmptyCloud)));
        assert!(compare_values(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn comparison_cloud_is_fixed() {
        let d = DomainSpec::Disk { radius: 2.0 };
        assert_eq!(comparison_cloud(&d).unwrap(), comparison_cloud(&d).unwrap());
        assert_eq!(comparison_cloud(&d).unwrap().len(), COMPARISON_POINTS);
    }

    proptest! {
        #[test]
        fn rmse_and_max_are_symmetric_but_rel_l2_is_not(
            a in prop::collection::vec(-10.0f64..10.0, 1..40),
            shift in 0.5f64..3.0,
        ) {
            let b: Vec<f64> = a.iter().map(|v| shift * v + 0.25).collect();
            let ab = compare_values(&a, &b).unwrap();
            let ba = compare_values(&b, &a);
            prop_assume!(ba.is_ok());
            let ba = ba.unwrap();
            prop_assert!((ab.rmse - ba.rmse).abs() <= 1e-12 * ab.rmse.max(1e-300));
            prop_assert_eq!(ab.max_abs, ba.max_abs);
            let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
            // each relative error uses its own second operand as the normalizer
            prop_assert!((ab.rel_l2 * rms(&b) - ba.rel_l2 * rms(&a)).abs() <= 1e-10 * (1.0 + ab.rmse));
        }
    }
}
