//! Events → AFM fits → mastery → target panel → learner-state features.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::afm::{self, AfmConfig, AfmParams, LearnerState, PracticeLog};
use crate::ingest::{self, ExclusionCounts, IngestConfig, InteractionEvent, MasteryEvent, Panel};
use crate::week::WeekId;
use crate::Error;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepareConfig {
    pub ingest: IngestConfig,
    pub afm: AfmConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub panel: Panel,
    pub mastery: Vec<MasteryEvent>,
    pub fits: BTreeMap<WeekId, AfmParams<f64>>,
    pub learner_state: BTreeMap<(String, WeekId), LearnerState>,
    pub excluded: ExclusionCounts,
}

pub fn prepare(events: &[InteractionEvent], cfg: &PrepareConfig) -> Result<Prepared, Error> {
    cfg.ingest.validate()?;
    let log = PracticeLog::build(events, &cfg.ingest);
    let fits = afm::rolling_refit(&log, &cfg.afm, cfg.seed)?;
    let mastery = afm::mastery_sweep(&log, &fits, cfg.afm.mastery_threshold);
    let raw = ingest::aggregate_weekly(events, &cfg.ingest);
    let (panel, excluded) = ingest::build_targets(&raw, &mastery, cfg.ingest.tukey_k)?;
    let learner_state = afm::afm_features(&log, &fits, cfg.afm.learning_rate_form);
    Ok(Prepared { panel, mastery, fits, learner_state, excluded })
}

/// Learner-state map as flat records for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerStateRecord {
    pub student_id: String,
    pub week: WeekId,
    #[serde(flatten)]
    pub state: LearnerState,
}

pub fn learner_state_records(map: &BTreeMap<(String, WeekId), LearnerState>) -> Vec<LearnerStateRecord> {
    map.iter()
        .map(|((s, w), st)| LearnerStateRecord { student_id: s.clone(), week: *w, state: *st })
        .collect()
}

pub fn learner_state_map(records: Vec<LearnerStateRecord>) -> BTreeMap<(String, WeekId), LearnerState> {
    records.into_iter().map(|r| ((r.student_id, r.week), r.state)).collect()
}
