//! Gaussian-copula sampling of the demographic context.

use nalgebra::{Matrix3, Vector3};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use super::config::{AgeSpec, ContextConfig, TruncatedNormalSpec};
use super::SynthError;
use crate::datamodel::{DemographicContext, Gender};

/// Lower Cholesky factor of a correlation matrix, after checking symmetry,
/// unit diagonal and positive definiteness.
pub(crate) fn correlation_factor(c: &[[f64; 3]; 3]) -> Result<Matrix3<f64>, SynthError> {
    let m = Matrix3::from_fn(|i, j| c[i][j]);
    for i in 0..3 {
        if (m[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(SynthError::Config("context correlation needs a unit diagonal".into()));
        }
        for j in 0..3 {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 || !m[(i, j)].is_finite() {
                return Err(SynthError::Config("context correlation must be symmetric".into()));
            }
        }
    }
    m.cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| SynthError::Config("context correlation is not positive definite".into()))
}

fn std_normal() -> Normal {
    Normal::standard()
}

/// Correlated standard normals for (age, weight, height).
pub fn sample_latent<R: Rng + ?Sized>(l: &Matrix3<f64>, rng: &mut R) -> Vector3<f64> {
    let z = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
    l * z
}

/// Discrete uniform over `[min, max]` indexed by the quantile `u`.
fn age_from_quantile(spec: AgeSpec, u: f64) -> u32 {
    let span = spec.max - spec.min + 1;
    let idx = ((u * f64::from(span)).floor() as u32).min(span - 1);
    (spec.min + idx).clamp(18, 80)
}

/// Inverse CDF of a normal truncated to `[min, max]`, at quantile `u`.
fn truncated_normal_from_quantile(spec: TruncatedNormalSpec, u: f64) -> f64 {
    if spec.std == 0.0 {
        return spec.mean;
    }
    let n = std_normal();
    let lo = n.cdf((spec.min - spec.mean) / spec.std);
    let hi = n.cdf((spec.max - spec.mean) / spec.std);
    let p = (lo + u * (hi - lo)).clamp(1e-12, 1.0 - 1e-12);
    (spec.mean + spec.std * n.inverse_cdf(p)).clamp(spec.min, spec.max)
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Map latent normals through the marginals (probability-integral transform).
pub fn context_from_latent(cfg: &ContextConfig, latent: &Vector3<f64>, gender: Gender) -> DemographicContext {
    let n = std_normal();
    let u = latent.map(|z| n.cdf(z));
    DemographicContext {
        age: age_from_quantile(cfg.age, u[0]),
        gender,
        weight_kg: round1(truncated_normal_from_quantile(cfg.weight_kg, u[1])),
        height_cm: Some(round1(truncated_normal_from_quantile(cfg.height_cm, u[2]))),
    }
}

pub fn sample_context<R: Rng + ?Sized>(cfg: &ContextConfig, rng: &mut R) -> Result<DemographicContext, SynthError> {
    let l = correlation_factor(&cfg.correlation)?;
    let latent = sample_latent(&l, rng);
    let g = cfg.gender_weights;
    let idx = WeightedIndex::new([g.female, g.male, g.unspecified])
        .map_err(|e| SynthError::Config(format!("gender weights: {e}")))?;
    let gender = [Gender::Female, Gender::Male, Gender::Unspecified][idx.sample(rng)];
    Ok(context_from_latent(cfg, &latent, gender))
}
