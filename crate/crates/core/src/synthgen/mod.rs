//! Synthetic wearable users.
//!
//! Each user gets a demographic context drawn from a Gaussian copula, a
//! daily table simulated by per-metric AR(1) processes coupled through a
//! shared daily latent factor, Poisson-distributed activity sessions, and
//! bursty Markov missingness. Derived columns (sleep stages, percents, zone
//! split, bed and wake times, activity speed) are computed from the sampled
//! ones so every dataset satisfies the datamodel invariants.
//!
//! Generation is deterministic: user `i` draws from a ChaCha8 stream
//! selected by `i` under the cohort seed, so users can be generated in
//! parallel and in any order.

mod activities;
mod config;
mod context;
mod daily;
mod missing;

use chrono::Duration;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use activities::generate_activities;
pub use config::{
    ActivityProfile, AgeSpec, ContextConfig, ContextReference, GenderWeights, GeneratorConfig, MetricSpec,
    MissingSpec, MissingnessConfig, SleepStageConfig, TruncatedNormalSpec, ZoneSplitConfig, BASE_METRICS,
    DEFAULT_CONFIG_JSON, MISSINGNESS_GROUPS,
};
pub use context::{context_from_latent, sample_context, sample_latent};
pub use daily::{generate_daily, innovation_variance, simulate_base_metrics};
pub use missing::{check_steps_floor, entry_probability, inject_missingness, markov_mask, steps_floor};

use crate::datamodel::UserDataset;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("ConfigError: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub n_users: usize,
    pub config: GeneratorConfig,
}

/// Random stream for user `index` under `seed`.
pub fn user_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn user_id(index: usize) -> String {
    format!("user_{:04}", index + 1)
}

/// One complete user: context, daily table, activities, then missingness.
pub fn generate_user<R: rand::Rng + ?Sized>(
    cfg: &GeneratorConfig,
    user_id: &str,
    rng: &mut R,
) -> Result<UserDataset, SynthError> {
    cfg.validate()?;
    let context = sample_context(&cfg.context, rng)?;
    let daily = generate_daily(cfg, &context, rng);
    let dates: Vec<_> = daily.iter().map(|r| r.date).collect();
    let activities = generate_activities(cfg, &context, &dates, rng)?;
    let ds = UserDataset {
        user_id: user_id.to_string(),
        context,
        daily,
        activities,
        today: cfg.end_date,
    };
    debug_assert_eq!(ds.daily.first().map(|r| r.date), Some(cfg.end_date - Duration::days(i64::from(cfg.days) - 1)));
    inject_missingness(ds, &cfg.missingness, rng)
}

/// `n_users` datasets with ids `user_0001`, `user_0002`, ... in order.
pub fn generate_cohort(spec: &CohortSpec) -> Result<Vec<UserDataset>, SynthError> {
    if spec.n_users == 0 {
        return Err(SynthError::Config("n_users must be at least 1".into()));
    }
    spec.config.validate()?;
    (0..spec.n_users)
        .into_par_iter()
        .map(|i| {
            let mut rng = user_rng(spec.config.seed, i as u64);
            generate_user(&spec.config, &user_id(i), &mut rng)
        })
        .collect()
}

/// `k` distinct user ids chosen by seeded sampling without replacement,
/// returned in cohort order.
pub fn select_eval_users(cohort: &[UserDataset], k: usize, seed: u64) -> Result<Vec<String>, SynthError> {
    if k > cohort.len() {
        return Err(SynthError::Config(format!(
            "cannot select {k} users from a cohort of {}",
            cohort.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, cohort.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| cohort[i].user_id.clone()).collect())
}
