use std::collections::{BTreeMap, BTreeSet};

use engagecast_core::afm::{self, PracticeLog};
use engagecast_core::eval::{self, CvFold, Forecast, Target, TaskData};
use engagecast_core::features::{self, FeatureConfig, StartQuartiles};
use engagecast_core::ingest::{InteractionEvent, Panel};
use engagecast_core::pipeline::{self, PrepareConfig, Prepared};
use engagecast_core::predictors::{HyperParams, PredictorKind};
use engagecast_core::synth::{self, RegimeConfig};
use engagecast_core::WeekId;
use proptest::prelude::*;

fn cohort(seed: u64) -> (Vec<InteractionEvent>, Prepared) {
    let cohort = synth::generate(&RegimeConfig { n_students: 24, n_weeks: 14, n_skills: 30, seed, ..Default::default() }).unwrap();
    let prepared = pipeline::prepare(&cohort.events, &PrepareConfig::default()).unwrap();
    (cohort.events, prepared)
}

fn fold_forecasts(
    panel: &Panel,
    prepared: &Prepared,
    quartiles: Option<&StartQuartiles>,
    fold: &CvFold,
    kind: PredictorKind,
) -> Vec<Forecast> {
    let cfg = FeatureConfig::default();
    let matrix = features::build_matrix(panel, &prepared.learner_state, quartiles, &cfg).unwrap();
    let data = TaskData::build(panel, &matrix, Target::Minutes).unwrap();
    let hp = HyperParams::default().with("n_trees", 15.0);
    eval::train_and_forecast(
        kind,
        &hp,
        &data,
        |s| fold.trains_on(data.target_week(s)),
        |s| fold.validates_on(data.target_week(s)),
        1,
    )
    .unwrap()
    .1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn truncation_leaves_the_past_unchanged(seed in 0u64..1000, cut in 5usize..12) {
        let (events, prepared) = cohort(seed);
        let full = &prepared.panel;
        let calendar = full.calendar();
        let t: WeekId = calendar[cut];
        let short = full.truncate_after(t);
        let cfg = FeatureConfig::default();
        let students: BTreeSet<String> = full.students().into_iter().map(String::from).collect();
        let quartiles = StartQuartiles::fit(full, &students, &cfg);

        // learner state refit from truncated events
        let cfg_prep = PrepareConfig::default();
        let kept: Vec<InteractionEvent> = events.iter().filter(|e| cfg_prep.ingest.week_of(&e.timestamp) <= t).cloned().collect();
        let log = PracticeLog::build(&kept, &cfg_prep.ingest);
        let fits = afm::rolling_refit(&log, &cfg_prep.afm, cfg_prep.seed).unwrap();
        let state = afm::afm_features(&log, &fits, cfg_prep.afm.learning_rate_form);
        let past: BTreeMap<_, _> = prepared.learner_state.iter().filter(|((_, w), _)| *w <= t).map(|(k, v)| (k.clone(), *v)).collect();
        prop_assert_eq!(&past, &state);

        let a = features::build_matrix(full, &prepared.learner_state, quartiles.as_ref(), &cfg).unwrap();
        let b = features::build_matrix(&short, &prepared.learner_state, quartiles.as_ref(), &cfg).unwrap();
        let early: Vec<_> = a.rows.iter().filter(|r| r.week <= t).collect();
        prop_assert_eq!(early.len(), b.rows.len());
        for (x, y) in early.iter().zip(&b.rows) {
            prop_assert_eq!(*x, y);
        }

        // folds whose validation window closes by t train and score the same rows
        let folds = eval::timeseries_cv(&full.weeks(), 3).unwrap();
        for fold in folds.iter().filter(|f| f.validate_last <= t) {
            for kind in [PredictorKind::AdamsP60, PredictorKind::LastValue, PredictorKind::GradientBoost] {
                let x = fold_forecasts(full, &prepared, quartiles.as_ref(), fold, kind);
                let y = fold_forecasts(&short, &prepared, quartiles.as_ref(), fold, kind);
                prop_assert!(!x.is_empty());
                prop_assert_eq!(&x, &y);
            }
        }
    }
}
