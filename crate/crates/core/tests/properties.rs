use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use engagecast_core::afm::{self, AfmConfig, AfmParams, AfmProblem, PracticeLog};
use engagecast_core::explain::{self, ImportanceTable};
use engagecast_core::features::{FeatureConfig, FeatureSchema};
use engagecast_core::ingest::{self, IngestConfig, InteractionEvent, MasteryEvent, Outcome};
use engagecast_core::predictors::{
    fit_supervised, predict_adams, predict_heuristic, AdamsConfig, DesignInfo, HeuristicStats, HyperParams,
    PredictorKind,
};
use engagecast_core::stats::{self, BootstrapConfig};
use engagecast_core::{synth, WeekId};
use engagecast_oracle as oracle;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn event(student: usize, offset_minutes: i64, seconds: f64, outcome: u8, skills: &[usize]) -> InteractionEvent {
    let start = Utc.with_ymd_and_hms(2011, 9, 5, 8, 0, 0).unwrap();
    InteractionEvent {
        student_id: format!("S{student}"),
        timestamp: start + Duration::minutes(offset_minutes),
        duration_seconds: seconds,
        outcome: match outcome % 3 {
            0 => Outcome::Correct,
            1 => Outcome::Incorrect,
            _ => Outcome::Hint,
        },
        kc_ids: skills.iter().map(|k| format!("K{k}")).collect(),
        opportunity: None,
        problem_id: format!("P{offset_minutes}"),
    }
}

fn events_strategy() -> impl Strategy<Value = Vec<InteractionEvent>> {
    prop::collection::vec(
        (0usize..4, 0i64..(6 * 7 * 24 * 60), 0.0f64..900.0, any::<u8>(), prop::collection::btree_set(0usize..5, 0..3)),
        1..120,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .map(|(s, t, d, o, k)| event(s, t, d, o, &k.into_iter().collect::<Vec<_>>()))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aggregation_ignores_event_order(events in events_strategy(), seed in any::<u64>()) {
        let cfg = IngestConfig::default();
        let panel = ingest::aggregate_weekly(&events, &cfg);
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(&ingest::aggregate_weekly(&shuffled, &cfg), &panel);

        let minutes: f64 = panel.rows.iter().map(|r| r.minutes).sum();
        let expected: f64 = events.iter().map(|e| e.duration_seconds / 60.0).sum();
        prop_assert!((minutes - expected).abs() <= 1e-9 * expected.max(1.0));
    }

    #[test]
    fn skill_targets_count_distinct_mastery(events in events_strategy(), picks in prop::collection::vec((any::<u8>(), 0usize..5, any::<u8>()), 0..30)) {
        let raw = ingest::aggregate_weekly(&events, &IngestConfig::default());
        let by_student = raw.by_student();
        let mastery: Vec<MasteryEvent> = picks
            .iter()
            .map(|&(s, k, w)| {
                let (sid, rows) = by_student[s as usize % by_student.len()];
                MasteryEvent { student_id: sid.to_string(), skill: format!("K{k}"), week: rows[w as usize % rows.len()].week }
            })
            .collect();
        // the first week per pair counts
        let mut first: BTreeMap<(String, String), WeekId> = BTreeMap::new();
        for m in &mastery {
            let e = first.entry((m.student_id.clone(), m.skill.clone())).or_insert(m.week);
            *e = (*e).min(m.week);
        }
        let mut dedup: Vec<MasteryEvent> = first
            .into_iter()
            .map(|((student_id, skill), week)| MasteryEvent { student_id, skill, week })
            .collect();
        dedup.sort();
        let (panel, _) = ingest::build_targets(&raw, &dedup, 1.5).unwrap();
        for (sid, rows) in panel.by_student() {
            prop_assert!(rows.iter().all(|r| r.y_skill >= 0.0 && r.y_min >= 0.0));
            let total: f64 = rows.iter().map(|r| r.y_skill).sum();
            let expected = dedup.iter().filter(|m| m.student_id == sid).count() as f64;
            prop_assert_eq!(total, expected);
        }
    }

    #[test]
    fn tukey_matches_brute_force(values in prop::collection::vec(prop_oneof![(-50i32..50).prop_map(f64::from), -1e3f64..1e3], 1..1000), k in 0.1f64..3.0) {
        prop_assert_eq!(stats::tukey_mask(&values, k).unwrap(), oracle::tukey_keep(&values, k));
    }

    #[test]
    fn adams_full_window_matches_brute_force(history in prop::collection::vec(0.0f64..200.0, 9..40), p in 1.0f64..99.0) {
        let st = HeuristicStats::new(&[1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap();
        let got = predict_adams(&AdamsConfig::new(p), &history, Some(&st)).unwrap();
        prop_assert_eq!(got, oracle::adams_window(&history, p, 9));
    }

    #[test]
    fn heuristic_predictions_are_nonnegative_and_finite(history in prop::collection::vec(0.0f64..500.0, 0..30), first in prop::collection::vec(0.0f64..100.0, 1..20)) {
        let st = HeuristicStats::new(&first, &first).unwrap();
        for kind in PredictorKind::ALL.into_iter().filter(|k| k.is_heuristic()) {
            let v = match kind.adams_percentile() {
                Some(p) => predict_adams(&AdamsConfig::new(p), &history, Some(&st)).unwrap(),
                None => predict_heuristic(kind, &history, &st),
            };
            prop_assert!(v.is_finite() && v >= 0.0, "{kind}: {v}");
        }
    }

    #[test]
    fn afm_gradient_matches_finite_differences(seed in any::<u64>(), ns in 1usize..=10, nk in 1usize..=5) {
        let (problem, obs, l2, x) = random_afm(seed, ns, nk);
        let f = |p: &[f64]| oracle::afm_objective(ns, nk, &obs, l2, p);
        prop_assert!((problem.objective(&x) - f(&x)).abs() <= 1e-9 * f(&x).abs().max(1.0));
        let fd = oracle::central_difference(f, &x, 1e-5);
        let err = oracle::relative_error(&problem.gradient(&x), &fd);
        prop_assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn ascent_never_decreases_the_objective(seed in any::<u64>(), ns in 1usize..=8, nk in 1usize..=4) {
        let (problem, _, _, x) = random_afm(seed, ns, nk);
        let out = problem.maximize(x, 200, 1e-9).unwrap();
        prop_assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        let k0 = ns + nk;
        prop_assert!(out.x[k0..].iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn correctness_is_monotone(theta in -3.0f64..3.0, beta in -3.0f64..3.0, gamma in 0.0f64..1.0, t in 0.0f64..30.0, d in 0.01f64..2.0) {
        let params = |th: f64| AfmParams::<f64> {
            window: None,
            theta: [("s".to_string(), th)].into(),
            beta: [("k".to_string(), beta)].into(),
            gamma: [("k".to_string(), gamma)].into(),
        };
        let p = |th: f64, opp: f64| afm::predict_correct(&params(th), "s", &[("k", opp)]).unwrap();
        prop_assert!(p(theta + d, t) > p(theta, t));
        prop_assert!(p(theta, t + d) >= p(theta, t));
    }

    #[test]
    fn normalized_importance_sums_to_one(raw in prop::collection::vec(-1e3f64..1e3, 1..80)) {
        let v = explain::normalize(&raw);
        prop_assert!(v.iter().all(|&x| x >= 0.0));
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn group_weights_partition_the_total(seed in any::<u64>(), folds in 1usize..6) {
        let schema = FeatureSchema::for_config(&FeatureConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<Vec<(String, f64)>> = (0..folds)
            .map(|_| schema.names().into_iter().map(|n| (n.to_string(), rng.random_range(0.0..5.0))).collect())
            .collect();
        let t = ImportanceTable::aggregate(PredictorKind::Ridge, &schema, &vectors).unwrap();
        for f in &t.folds {
            prop_assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert!((t.aggregate.values().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!((t.groups.values().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bootstrap_is_bitwise_reproducible(diffs in prop::collection::vec(-5.0f64..5.0, 2..60), seed in any::<u64>()) {
        let cfg = BootstrapConfig { replicates: 500, seed, ..Default::default() };
        let a = stats::bootstrap_ci(&diffs, &cfg).unwrap();
        let b = stats::bootstrap_ci(&diffs, &cfg).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
        prop_assert!(a.lower <= a.upper);
    }

    #[test]
    fn delta_pct_of_equal_maes_is_zero(m in 1e-6f64..1e4) {
        prop_assert_eq!(stats::delta_pct(m, m).unwrap(), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn importance_is_scale_invariant(seed in any::<u64>(), column in 0usize..4, c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 2.0 * r[1] + 0.5 * r[2] + rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<Vec<f64>> = x.iter().map(|r| {
            let mut r = r.clone();
            r[column] *= c;
            r
        }).collect();
        let names: Vec<String> = (0..4).map(|i| format!("f{i}")).collect();
        let design = DesignInfo { feature_names: &names, schema_hash: "h" };
        for kind in [PredictorKind::Ridge, PredictorKind::GradientBoost, PredictorKind::RandomForest] {
            let hp = match kind {
                PredictorKind::Ridge => HyperParams::default(),
                _ => HyperParams::default().with("n_trees", 20.0),
            };
            let imp = |x: &[Vec<f64>]| {
                let m = fit_supervised(kind, &hp, x, &y, design, 3).unwrap();
                explain::normalize(&explain::importance(&m).unwrap().into_iter().map(|(_, v)| v).collect::<Vec<_>>())
            };
            let (a, b) = (imp(&x), imp(&scaled));
            for (u, v) in a.iter().zip(&b) {
                prop_assert!((u - v).abs() < 1e-6, "{kind}: {a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn mastery_is_unique_and_follows_practice(seed in any::<u64>()) {
        let cohort = synth::generate(&synth::RegimeConfig { n_students: 6, n_weeks: 6, n_skills: 12, seed, ..Default::default() }).unwrap();
        let ingest_cfg = IngestConfig::default();
        let log = PracticeLog::build(&cohort.events, &ingest_cfg);
        let cfg = AfmConfig::default();
        let fits = afm::rolling_refit(&log, &cfg, seed).unwrap();
        let mastery = afm::mastery_sweep(&log, &fits, cfg.mastery_threshold);
        let pairs: BTreeSet<(&str, &str)> = mastery.iter().map(|m| (m.student_id.as_str(), m.skill.as_str())).collect();
        prop_assert_eq!(pairs.len(), mastery.len());
        for m in &mastery {
            let first = cohort
                .events
                .iter()
                .filter(|e| e.student_id == m.student_id && e.kc_ids.contains(&m.skill))
                .map(|e| ingest_cfg.week_of(&e.timestamp))
                .min()
                .unwrap();
            prop_assert!(m.week >= first);
        }
    }
}

type AfmCase = (AfmProblem<f64>, Vec<oracle::AfmObs>, (f64, f64, f64), Vec<f64>);

fn random_afm(seed: u64, ns: usize, nk: usize) -> AfmCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_obs = rng.random_range(5..60);
    let obs: Vec<oracle::AfmObs> = (0..n_obs)
        .map(|_| {
            let s = rng.random_range(0..ns);
            let mut skills: Vec<usize> = (0..nk).filter(|_| rng.random_bool(0.5)).collect();
            if skills.is_empty() {
                skills.push(rng.random_range(0..nk));
            }
            let terms = skills.into_iter().map(|k| (k, rng.random_range(0..12) as f64)).collect();
            (s, rng.random_bool(0.6), terms)
        })
        .collect();
    let l2 = (1.0, 0.1, 0.1);
    let terms: Vec<Vec<(u32, f64)>> = obs.iter().map(|(_, _, t)| t.iter().map(|&(k, o)| (k as u32, o)).collect()).collect();
    let problem = AfmProblem::new(ns, nk, obs.iter().zip(&terms).map(|((s, y, _), t)| (*s as u32, *y, t.as_slice())), l2);
    let x: Vec<f64> = (0..ns + 2 * nk)
        .map(|i| if i >= ns + nk { rng.random_range(0.0..0.3) } else { rng.random_range(-1.5..1.5) })
        .collect();
    (problem, obs, l2, x)
}
