use insight_core::datamodel::{
    load_cohort, save_cohort, validate_dataset, UserDataset, DAILY_COLUMNS,
};
use insight_core::synthgen::{
    context_from_latent, generate_cohort, generate_user, inject_missingness, sample_context,
    sample_latent, select_eval_users, user_rng, AgeSpec, CohortSpec, GeneratorConfig,
    MissingnessConfig, SynthError, TruncatedNormalSpec,
};
use nalgebra::Matrix3;
use proptest::prelude::*;

fn cfg_with_seed(seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        ..GeneratorConfig::default()
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Average ranks (ties share the mean rank).
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for k in i..=j {
            out[idx[k]] = r;
        }
        i = j + 1;
    }
    out
}

/// Lag-1 autocorrelation over days where both neighbours are present.
fn lag1(values: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.len() < 3 {
        return None;
    }
    let m = present.iter().sum::<f64>() / present.len() as f64;
    let denom: f64 = present.iter().map(|x| (x - m).powi(2)).sum();
    let num: f64 = values
        .windows(2)
        .filter_map(|w| Some((w[0]? - m) * (w[1]? - m)))
        .sum();
    (denom > 0.0).then(|| num / denom)
}

fn missing_fraction(cohort: &[UserDataset]) -> f64 {
    let cols = &DAILY_COLUMNS[1..];
    let (mut missing, mut total) = (0usize, 0usize);
    for ds in cohort {
        for r in &ds.daily {
            for c in cols {
                total += 1;
                if !r.is_present(c) {
                    missing += 1;
                }
            }
        }
    }
    missing as f64 / total as f64
}

#[test]
fn degenerate_marginals_reproduce_exact_context() {
    let mut cfg = GeneratorConfig::default().context;
    cfg.correlation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    cfg.age = AgeSpec { min: 40, max: 40 };
    cfg.weight_kg = TruncatedNormalSpec { mean: 70.0, std: 0.0, min: 70.0, max: 70.0 };
    cfg.height_cm = TruncatedNormalSpec { mean: 170.0, std: 0.0, min: 170.0, max: 170.0 };
    for seed in 0..20 {
        let c = sample_context(&cfg, &mut user_rng(seed, 0)).unwrap();
        assert_eq!((c.age, c.weight_kg, c.height_cm), (40, 70.0, Some(170.0)));
    }
}

#[test]
fn context_sampling_is_deterministic() {
    let cfg = GeneratorConfig::default();
    let a = sample_context(&cfg.context, &mut user_rng(42, 0)).unwrap();
    let b = sample_context(&cfg.context, &mut user_rng(42, 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn copula_reproduces_weight_height_correlation() {
    let mut cfg = GeneratorConfig::default().context;
    cfg.correlation = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.6], [0.0, 0.6, 1.0]];
    let c = cfg.correlation;
    let l = Matrix3::from_fn(|i, j| c[i][j]).cholesky().unwrap().l();
    let mut rng = user_rng(2024, 0);
    let (mut zw, mut zh, mut w, mut h) = (vec![], vec![], vec![], vec![]);
    for _ in 0..10_000 {
        let z = sample_latent(&l, &mut rng);
        let ctx = context_from_latent(&cfg, &z, insight_core::datamodel::Gender::Female);
        zw.push(z[1]);
        zh.push(z[2]);
        w.push(ctx.weight_kg);
        h.push(ctx.height_cm.unwrap());
    }
    let latent = pearson(&zw, &zh);
    assert!((latent - 0.6).abs() < 0.05, "latent correlation {latent}");
    // the marginal maps are monotone, so output ranks match latent ranks:
    // Spearman of a bivariate normal is (6/pi) asin(rho/2)
    let expected = 6.0 / std::f64::consts::PI * (0.3f64).asin();
    let spearman = pearson(&ranks(&w), &ranks(&h));
    assert!((spearman - expected).abs() < 0.05, "rank correlation {spearman} vs {expected}");
}

#[test]
fn one_day_dataset() {
    let cfg = GeneratorConfig { days: 1, ..cfg_with_seed(5) };
    for i in 0..20 {
        let ds = generate_user(&cfg, "u", &mut user_rng(cfg.seed, i)).unwrap();
        assert_eq!(ds.daily.len(), 1);
        assert!(ds.activities.iter().all(|a| a.date() == ds.daily[0].date));
        assert!(validate_dataset(&ds).is_empty());
    }
}

#[test]
fn steps_autocorrelation_survives_at_cohort_scale() {
    let cohort = generate_cohort(&CohortSpec { n_users: 56, config: cfg_with_seed(11) }).unwrap();
    let acs: Vec<f64> = cohort
        .iter()
        .filter_map(|ds| lag1(&ds.daily.iter().map(|r| r.steps.map(f64::from)).collect::<Vec<_>>()))
        .collect();
    let mean = acs.iter().sum::<f64>() / acs.len() as f64;
    assert!(mean > 0.2, "mean lag-1 autocorrelation {mean}");
}

#[test]
fn zero_missingness_leaves_data_untouched() {
    let mut cfg = cfg_with_seed(3);
    cfg.missingness = MissingnessConfig::uniform(0.0, 0.5);
    let ds = generate_user(&cfg, "u", &mut user_rng(3, 0)).unwrap();
    assert_eq!(missing_fraction(std::slice::from_ref(&ds)), 0.0);
    let again = inject_missingness(ds.clone(), &cfg.missingness, &mut user_rng(99, 0)).unwrap();
    assert_eq!(again, ds);
}

#[test]
fn full_steps_missingness_is_rejected() {
    let mut cfg = cfg_with_seed(3);
    cfg.missingness = MissingnessConfig::uniform(0.15, 0.5);
    cfg.missingness
        .overrides
        .insert("steps".into(), insight_core::synthgen::MissingSpec { rate: 1.0, burst: 0.5 });
    assert!(matches!(cfg.validate(), Err(SynthError::Config(_))));
    // 31 * (1 - 0.9) = 3.1 expected days, under half of the 10-day floor
    cfg.missingness
        .overrides
        .insert("steps".into(), insight_core::synthgen::MissingSpec { rate: 0.9, burst: 0.5 });
    assert!(matches!(
        generate_user(&cfg, "u", &mut user_rng(3, 0)),
        Err(SynthError::Config(_))
    ));
}

#[test]
fn steps_floor_holds_for_every_user() {
    let mut cfg = cfg_with_seed(8);
    cfg.missingness
        .overrides
        .insert("steps".into(), insight_core::synthgen::MissingSpec { rate: 0.6, burst: 0.8 });
    let cohort = generate_cohort(&CohortSpec { n_users: 56, config: cfg }).unwrap();
    for ds in &cohort {
        let kept = ds.daily.iter().filter(|r| r.steps.is_some()).count();
        assert!(kept >= 10, "{} kept {kept}", ds.user_id);
    }
}

#[test]
fn cohort_missingness_matches_configured_rate() {
    let cohort = generate_cohort(&CohortSpec { n_users: 56, config: cfg_with_seed(21) }).unwrap();
    let rate = missing_fraction(&cohort);
    assert!((rate - 0.15).abs() <= 0.03, "missing rate {rate}");
}

#[test]
fn sleep_columns_are_erased_jointly() {
    let cohort = generate_cohort(&CohortSpec { n_users: 10, config: cfg_with_seed(4) }).unwrap();
    for ds in &cohort {
        for r in &ds.daily {
            let present: Vec<bool> = insight_core::datamodel::SLEEP_COLUMNS.iter().map(|c| r.is_present(c)).collect();
            assert!(present.iter().all(|p| *p) || present.iter().all(|p| !*p));
        }
    }
}

#[test]
fn cohort_ids_selection_and_singleton() {
    let cohort = generate_cohort(&CohortSpec { n_users: 56, config: cfg_with_seed(1) }).unwrap();
    assert_eq!(cohort.len(), 56);
    assert_eq!(cohort[0].user_id, "user_0001");
    assert_eq!(cohort[55].user_id, "user_0056");
    let picked = select_eval_users(&cohort, 4, 9).unwrap();
    let unique: std::collections::BTreeSet<_> = picked.iter().collect();
    assert_eq!(unique.len(), 4);
    assert_eq!(picked, select_eval_users(&cohort, 4, 9).unwrap());

    let one = generate_cohort(&CohortSpec { n_users: 1, config: cfg_with_seed(1) }).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0], cohort[0]);
    assert!(generate_cohort(&CohortSpec { n_users: 0, config: cfg_with_seed(1) }).is_err());
}

fn dir_bytes(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn saved_cohort_is_byte_identical_and_round_trips() {
    let spec = CohortSpec { n_users: 8, config: cfg_with_seed(77) };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cohort = generate_cohort(&spec).unwrap();
    save_cohort(&cohort, a.path()).unwrap();
    save_cohort(&generate_cohort(&spec).unwrap(), b.path()).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    assert_eq!(load_cohort(a.path()).unwrap(), cohort);
}

#[test]
fn statistical_fidelity_gates() {
    let mut cfg = GeneratorConfig {
        missingness: MissingnessConfig::uniform(0.0, 0.0),
        ..GeneratorConfig::default()
    };
    let metrics = ["steps", "sleep_minutes", "resting_heart_rate", "heart_rate_variability", "active_zone_minutes", "stress_management_score", "awake_minutes"];
    let mut sums = vec![0.0; metrics.len()];
    let mut acs = vec![0.0; metrics.len()];
    let mut n = 0.0;
    let mut n_users = 0.0;
    for seed in 0..20 {
        cfg.seed = seed;
        let cohort = generate_cohort(&CohortSpec { n_users: 56, config: cfg.clone() }).unwrap();
        for ds in &cohort {
            n_users += 1.0;
            for (k, m) in metrics.iter().enumerate() {
                let series: Vec<Option<f64>> = ds.daily.iter().map(|r| r.numeric(m).unwrap()).collect();
                acs[k] += lag1(&series).unwrap_or(0.0);
                sums[k] += series.iter().flatten().sum::<f64>();
            }
            for r in &ds.daily {
                n += 1.0;
                let stages = r.deep_sleep_minutes.unwrap() + r.rem_sleep_minutes.unwrap() + r.light_sleep_minutes.unwrap();
                assert!((stages / r.sleep_minutes.unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }
    for (k, m) in metrics.iter().enumerate() {
        let spec = &cfg.metrics[*m];
        let mean = sums[k] / n;
        assert!((mean - spec.mean).abs() <= 0.1 * spec.mean, "{m}: mean {mean} vs {}", spec.mean);
        if spec.ar > 0.3 {
            let ac = acs[k] / n_users;
            assert!(ac > 0.0, "{m}: lag-1 autocorrelation {ac}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn generated_users_are_always_valid(seed in any::<u64>(), index in 0u64..1000, days in 1u32..=31) {
        let cfg = GeneratorConfig { days, ..cfg_with_seed(seed) };
        let ds = generate_user(&cfg, "user_x", &mut user_rng(seed, index)).unwrap();
        prop_assert_eq!(ds.daily.len(), days as usize);
        let v = validate_dataset(&ds);
        prop_assert!(v.is_empty(), "{:?}", v);
    }
}
