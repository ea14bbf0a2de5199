//! Bursty missingness: a two-state Markov chain per column group.

use rand::seq::index::sample;
use rand::Rng;

use super::config::{MissingSpec, MissingnessConfig, MISSINGNESS_GROUPS};
use super::SynthError;
use crate::datamodel::UserDataset;

/// Probability of moving from present to missing that yields a stationary
/// missing rate `rate` when a missing day stays missing with probability
/// `burst`: `rate * (1 - burst) / (1 - rate)`.
pub fn entry_probability(spec: MissingSpec) -> f64 {
    if spec.rate == 0.0 {
        return 0.0;
    }
    spec.rate * (1.0 - spec.burst) / (1.0 - spec.rate)
}

/// Number of days that must keep a steps value.
pub fn steps_floor(days: usize) -> usize {
    days.min(10)
}

/// Erased steps days are restored until the floor holds. A rate is rejected
/// when, on average, more than half of the floor would have to be restored
/// that way, since the realised rate would then be far below the
/// configured one.
pub fn check_steps_floor(rate: f64, days: usize) -> Result<(), SynthError> {
    let expected_kept = days as f64 * (1.0 - rate);
    if rate >= 1.0 || expected_kept < steps_floor(days) as f64 / 2.0 {
        return Err(SynthError::Config(format!(
            "steps missingness rate {rate} cannot keep steps on {} of {days} days",
            steps_floor(days)
        )));
    }
    Ok(())
}

/// Draw a missing-day mask of length `n` from the chain, starting in its
/// stationary distribution.
pub fn markov_mask<R: Rng + ?Sized>(spec: MissingSpec, n: usize, rng: &mut R) -> Vec<bool> {
    let enter = entry_probability(spec);
    let mut mask = Vec::with_capacity(n);
    let mut missing = rng.random::<f64>() < spec.rate;
    for _ in 0..n {
        mask.push(missing);
        let p = if missing { spec.burst } else { enter };
        missing = rng.random::<f64>() < p;
    }
    mask
}

/// Erase daily cells group by group. Columns in a group are erased together
/// on the same days; `datetime` is never touched. At least
/// `min(10, days)` days keep their steps value.
pub fn inject_missingness<R: Rng + ?Sized>(
    mut ds: UserDataset,
    cfg: &MissingnessConfig,
    rng: &mut R,
) -> Result<UserDataset, SynthError> {
    let days = ds.daily.len();
    let floor = steps_floor(days);
    check_steps_floor(cfg.spec_for("steps").rate, days)?;

    for (group, columns) in MISSINGNESS_GROUPS {
        let spec = cfg.spec_for(group);
        if spec.rate == 0.0 {
            continue;
        }
        let mut mask = markov_mask(spec, days, rng);
        if group == "steps" {
            let kept = mask.iter().filter(|m| !**m).count();
            if kept < floor {
                let erased: Vec<usize> = (0..days).filter(|&i| mask[i]).collect();
                for j in sample(rng, erased.len(), floor - kept) {
                    mask[erased[j]] = false;
                }
            }
        }
        for (record, missing) in ds.daily.iter_mut().zip(mask) {
            if missing {
                for c in columns {
                    record.clear(c);
                }
            }
        }
    }
    Ok(ds)
}
