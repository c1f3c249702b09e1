//! Event-log ingestion and construction of the student-week panel.
//!
//! Input is header-bearing delimited text (comma or tab, detected from the
//! header line) with the columns
//! `student_id,timestamp,duration_seconds,outcome,kc_ids,opportunity,problem_id`.
//! `kc_ids` is `;`-separated and may be empty.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::{DateTime, Duration, FixedOffset, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::stats;
use crate::week::WeekId;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("invalid ingest config: {0}")]
    InvalidConfig(String),
    #[error("mastery event references unknown student `{0}`")]
    UnknownStudent(String),
    #[error("mastery event for `{student}` in {week} lies outside the student's active range")]
    UnknownWeek { student: String, week: WeekId },
    #[error("panel row {line}: {reason}")]
    MalformedPanel { line: usize, reason: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Correct,
    Incorrect,
    Hint,
}

impl Outcome {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CORRECT" => Some(Self::Correct),
            "INCORRECT" => Some(Self::Incorrect),
            "HINT" => Some(Self::Hint),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Correct => "CORRECT",
            Self::Incorrect => "INCORRECT",
            Self::Hint => "HINT",
        }
    }

    /// First-attempt correctness: only `CORRECT` counts as a success.
    pub fn is_success(self) -> bool {
        matches!(self, Self::Correct)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub student_id: String,
    pub timestamp: DateTime<Utc>,
    pub duration_seconds: f64,
    pub outcome: Outcome,
    pub kc_ids: Vec<String>,
    pub opportunity: Option<u32>,
    pub problem_id: String,
}

pub const COLUMNS: [&str; 7] = [
    "student_id",
    "timestamp",
    "duration_seconds",
    "outcome",
    "kc_ids",
    "opportunity",
    "problem_id",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub tukey_k: f64,
    /// Offset applied to timestamps without a zone designator and used to
    /// place events on the local calendar. 0 means UTC.
    pub utc_offset_minutes: i32,
    /// Canonical column name → header name in the input file.
    pub column_map: BTreeMap<String, String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            tukey_k: 1.5,
            utc_offset_minutes: 0,
            column_map: BTreeMap::new(),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tukey_k > 0.0) {
            return Err(IngestError::InvalidConfig(format!("tukey_k must be > 0, got {}", self.tukey_k)));
        }
        FixedOffset::east_opt(self.utc_offset_minutes * 60)
            .ok_or_else(|| IngestError::InvalidConfig(format!("bad utc offset {}", self.utc_offset_minutes)))?;
        Ok(())
    }

    fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.column_map.get(canonical).map(String::as_str).unwrap_or(canonical)
    }

    /// ISO week of an event on the configured local calendar.
    pub fn week_of(&self, ts: &DateTime<Utc>) -> WeekId {
        let local = ts.naive_utc() + Duration::minutes(self.utc_offset_minutes as i64);
        WeekId::from_date(local.date())
    }

    fn parse_timestamp(&self, raw: &str) -> Option<DateTime<Utc>> {
        let raw = raw.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
            return Some(dt.with_timezone(&Utc));
        }
        const NAIVE: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
        let naive = NAIVE
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
            .or_else(|| {
                chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d")
                    .ok()
                    .and_then(|d| d.and_hms_opt(0, 0, 0))
            })?;
        Some((naive - Duration::minutes(self.utc_offset_minutes as i64)).and_utc())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the input (header is line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedEvents {
    pub events: Vec<InteractionEvent>,
    pub rows_read: usize,
    pub rejected: Vec<RejectedRow>,
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parses an event log. Malformed rows are rejected and counted; a missing
/// required column fails the whole file.
pub fn parse_events<R: Read>(mut input: R, config: &IngestConfig) -> Result<ParsedEvents> {
    config.validate()?;
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let header_line = text.lines().next().unwrap_or("");
    let delimiter = detect_delimiter(header_line);

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let mut index = HashMap::new();
    for canonical in COLUMNS {
        let name = config.header_for(canonical);
        let pos = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))?;
        index.insert(canonical, pos);
    }

    let mut events = Vec::new();
    let mut rejected = Vec::new();
    let mut rows_read = 0;
    for (i, record) in reader.records().enumerate() {
        rows_read += 1;
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        match parse_row(&record, &index, config) {
            Ok(ev) => events.push(ev),
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }
    Ok(ParsedEvents { events, rows_read, rejected })
}

fn parse_row(
    record: &csv::StringRecord,
    index: &HashMap<&str, usize>,
    config: &IngestConfig,
) -> std::result::Result<InteractionEvent, String> {
    let field = |name: &str| -> std::result::Result<&str, String> {
        record
            .get(index[name])
            .ok_or_else(|| format!("row has no `{name}` field"))
    };
    let student_id = field("student_id")?.trim();
    if student_id.is_empty() {
        return Err("empty student_id".into());
    }
    let ts_raw = field("timestamp")?;
    let timestamp = config
        .parse_timestamp(ts_raw)
        .ok_or_else(|| format!("bad timestamp `{ts_raw}`"))?;
    let dur_raw = field("duration_seconds")?;
    let duration_seconds: f64 = dur_raw
        .trim()
        .parse()
        .map_err(|_| format!("bad duration `{dur_raw}`"))?;
    if !duration_seconds.is_finite() || duration_seconds < 0.0 {
        return Err(format!("duration must be finite and ≥ 0, got `{dur_raw}`"));
    }
    let out_raw = field("outcome")?;
    let outcome = Outcome::parse(out_raw).ok_or_else(|| format!("bad outcome `{out_raw}`"))?;
    let kc_raw = field("kc_ids")?;
    let mut kc_ids = Vec::new();
    let mut seen = BTreeSet::new();
    for kc in kc_raw.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        if !seen.insert(kc) {
            return Err(format!("duplicate kc `{kc}`"));
        }
        kc_ids.push(kc.to_string());
    }
    let opp_raw = field("opportunity")?.trim();
    let opportunity = if opp_raw.is_empty() {
        None
    } else {
        let v: u32 = opp_raw.parse().map_err(|_| format!("bad opportunity `{opp_raw}`"))?;
        if v == 0 {
            return Err("opportunity must be positive".into());
        }
        Some(v)
    };
    let problem_id = field("problem_id")?.trim().to_string();
    Ok(InteractionEvent {
        student_id: student_id.to_string(),
        timestamp,
        duration_seconds,
        outcome,
        kc_ids,
        opportunity,
        problem_id,
    })
}

/// Writes events in the ingest format (comma-delimited, RFC 3339 UTC).
pub fn write_events<W: Write>(events: &[InteractionEvent], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for e in events {
        w.write_record([
            e.student_id.as_str(),
            &e.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            &e.duration_seconds.to_string(),
            e.outcome.as_str(),
            &e.kc_ids.join(";"),
            &e.opportunity.map(|o| o.to_string()).unwrap_or_default(),
            &e.problem_id,
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One student × ISO-week row. Targets refer to the row's own week; the
/// forecasting task predicts them from the features of the previous week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentWeek {
    pub student_id: String,
    pub week: WeekId,
    pub minutes: f64,
    pub problems: u32,
    pub opportunities: u32,
    pub skills_cum: u32,
    pub y_min: f64,
    pub y_skill: f64,
    pub excluded: bool,
}

/// Student-week rows sorted by `(student_id, week)`, contiguous per student.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub rows: Vec<StudentWeek>,
}

impl Panel {
    pub fn students(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.student_id.as_str()) {
                out.push(&r.student_id);
            }
        }
        out
    }

    /// Per-student contiguous row slices in student order.
    pub fn by_student(&self) -> Vec<(&str, &[StudentWeek])> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.rows.len() {
            if i == self.rows.len() || self.rows[i].student_id != self.rows[start].student_id {
                out.push((self.rows[start].student_id.as_str(), &self.rows[start..i]));
                start = i;
            }
        }
        out
    }

    pub fn student(&self, id: &str) -> Option<&[StudentWeek]> {
        let lo = self.rows.partition_point(|r| r.student_id.as_str() < id);
        let hi = self.rows.partition_point(|r| r.student_id.as_str() <= id);
        (lo < hi).then(|| &self.rows[lo..hi])
    }

    /// Sorted distinct weeks across the cohort.
    pub fn weeks(&self) -> Vec<WeekId> {
        self.rows.iter().map(|r| r.week).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// Contiguous calendar range from the first to the last cohort week.
    pub fn calendar(&self) -> Vec<WeekId> {
        match (self.rows.iter().map(|r| r.week).min(), self.rows.iter().map(|r| r.week).max()) {
            (Some(a), Some(b)) => WeekId::range_inclusive(a, b),
            _ => Vec::new(),
        }
    }

    /// Keeps only the listed students.
    pub fn restrict(&self, students: &BTreeSet<String>) -> Panel {
        Panel {
            rows: self.rows.iter().filter(|r| students.contains(&r.student_id)).cloned().collect(),
        }
    }

    /// Drops every row after `last`.
    pub fn truncate_after(&self, last: WeekId) -> Panel {
        Panel {
            rows: self.rows.iter().filter(|r| r.week <= last).cloned().collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "student_id",
            "week",
            "minutes",
            "problems",
            "opportunities",
            "y_min",
            "y_skill",
            "excluded",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.student_id.clone(),
                r.week.to_string(),
                r.minutes.to_string(),
                r.problems.to_string(),
                r.opportunities.to_string(),
                r.y_min.to_string(),
                r.y_skill.to_string(),
                r.excluded.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a panel file; `skills_cum` is rebuilt from `y_skill`.
    pub fn read_csv<R: Read>(input: R) -> Result<Panel> {
        let mut reader = csv::Reader::from_reader(input);
        let mut rows: Vec<StudentWeek> = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |what: &str| IngestError::MalformedPanel { line, reason: what.to_string() };
            let get = |j: usize| rec.get(j).ok_or_else(|| bad("missing field"));
            let y_skill: f64 = get(6)?.parse().map_err(|_| bad("y_skill"))?;
            rows.push(StudentWeek {
                student_id: get(0)?.to_string(),
                week: get(1)?.parse().map_err(|_| bad("week"))?,
                minutes: get(2)?.parse().map_err(|_| bad("minutes"))?,
                problems: get(3)?.parse().map_err(|_| bad("problems"))?,
                opportunities: get(4)?.parse().map_err(|_| bad("opportunities"))?,
                skills_cum: 0,
                y_min: get(5)?.parse().map_err(|_| bad("y_min"))?,
                y_skill,
                excluded: get(7)?.parse().map_err(|_| bad("excluded"))?,
            });
        }
        rows.sort_by(|a, b| (&a.student_id, a.week).cmp(&(&b.student_id, b.week)));
        let mut cum = 0.0;
        for i in 0..rows.len() {
            if i == 0 || rows[i].student_id != rows[i - 1].student_id {
                cum = 0.0;
            }
            cum += rows[i].y_skill;
            rows[i].skills_cum = cum.round() as u32;
        }
        Ok(Panel { rows })
    }
}

/// Sums events into student-week rows. Targets are left at zero and every
/// interior week without activity is materialized with zero counts.
pub fn aggregate_weekly(events: &[InteractionEvent], config: &IngestConfig) -> Panel {
    #[derive(Default)]
    struct Acc<'a> {
        problems: BTreeSet<&'a str>,
        opportunities: u32,
    }
    let mut acc: BTreeMap<(&str, WeekId), Acc> = BTreeMap::new();
    for e in events {
        let a = acc.entry((e.student_id.as_str(), config.week_of(&e.timestamp))).or_default();
        a.problems.insert(e.problem_id.as_str());
        if !e.kc_ids.is_empty() {
            a.opportunities += 1;
        }
    }
    // Durations are summed in sorted order so shuffled inputs give
    // bit-identical minutes.
    let mut seconds: BTreeMap<(&str, WeekId), Vec<f64>> = BTreeMap::new();
    for e in events {
        seconds
            .entry((e.student_id.as_str(), config.week_of(&e.timestamp)))
            .or_default()
            .push(e.duration_seconds);
    }

    let mut rows = Vec::new();
    let mut first_last: BTreeMap<&str, (WeekId, WeekId)> = BTreeMap::new();
    for &(s, w) in acc.keys() {
        first_last
            .entry(s)
            .and_modify(|fl| {
                fl.0 = fl.0.min(w);
                fl.1 = fl.1.max(w);
            })
            .or_insert((w, w));
    }
    for (s, (first, last)) in first_last {
        for w in WeekId::range_inclusive(first, last) {
            let (minutes, problems, opportunities) = match acc.get(&(s, w)) {
                Some(a) => {
                    let mut secs = seconds[&(s, w)].clone();
                    secs.sort_by(f64::total_cmp);
                    (secs.iter().sum::<f64>() / 60.0, a.problems.len() as u32, a.opportunities)
                }
                None => (0.0, 0, 0),
            };
            rows.push(StudentWeek {
                student_id: s.to_string(),
                week: w,
                minutes,
                problems,
                opportunities,
                skills_cum: 0,
                y_min: 0.0,
                y_skill: 0.0,
                excluded: false,
            });
        }
    }
    Panel { rows }
}

/// First week in which a student-skill pair was judged mastered.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MasteryEvent {
    pub student_id: String,
    pub skill: String,
    pub week: WeekId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionCounts {
    pub minutes: usize,
    pub skills: usize,
    pub total: usize,
}

/// Fills both targets and the Tukey exclusion flag. Fences are computed per
/// target over all student-weeks (pooled); a row is excluded when either
/// target is outside its fence.
pub fn build_targets(panel: &Panel, mastery: &[MasteryEvent], tukey_k: f64) -> Result<(Panel, ExclusionCounts)> {
    let mut out = panel.clone();
    let mut new_skills: HashMap<(&str, WeekId), u32> = HashMap::new();
    let mut seen_pairs = BTreeSet::new();
    for m in mastery {
        let rows = panel
            .student(&m.student_id)
            .ok_or_else(|| IngestError::UnknownStudent(m.student_id.clone()))?;
        if !rows.iter().any(|r| r.week == m.week) {
            return Err(IngestError::UnknownWeek { student: m.student_id.clone(), week: m.week });
        }
        // only the first mastery of each pair counts
        if seen_pairs.insert((m.student_id.as_str(), m.skill.as_str())) {
            *new_skills.entry((m.student_id.as_str(), m.week)).or_default() += 1;
        }
    }
    let mut cum = 0u32;
    for i in 0..out.rows.len() {
        if i == 0 || out.rows[i].student_id != out.rows[i - 1].student_id {
            cum = 0;
        }
        let r = &mut out.rows[i];
        let n = new_skills.get(&(r.student_id.as_str(), r.week)).copied().unwrap_or(0);
        cum += n;
        r.y_min = r.minutes;
        r.y_skill = n as f64;
        r.skills_cum = cum;
    }
    let mut counts = ExclusionCounts::default();
    if out.rows.is_empty() {
        return Ok((out, counts));
    }
    let ymin: Vec<f64> = out.rows.iter().map(|r| r.y_min).collect();
    let yskill: Vec<f64> = out.rows.iter().map(|r| r.y_skill).collect();
    let keep_min = stats::tukey_mask(&ymin, tukey_k)?;
    let keep_skill = stats::tukey_mask(&yskill, tukey_k)?;
    for (i, r) in out.rows.iter_mut().enumerate() {
        r.excluded = !(keep_min[i] && keep_skill[i]);
        counts.minutes += usize::from(!keep_min[i]);
        counts.skills += usize::from(!keep_skill[i]);
        counts.total += usize::from(r.excluded);
    }
    Ok((out, counts))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub events: usize,
    pub rejected: usize,
    pub reject_reasons: BTreeMap<String, usize>,
    pub students: usize,
    pub student_weeks: usize,
    pub zero_minute_weeks: usize,
    pub mastery_events: usize,
    pub excluded: ExclusionCounts,
}

impl IngestReport {
    pub fn new(parsed: &ParsedEvents, panel: &Panel, mastery: usize, excluded: ExclusionCounts) -> Self {
        let mut reject_reasons = BTreeMap::new();
        for r in &parsed.rejected {
            let key = r.reason.split(' ').take(2).collect::<Vec<_>>().join(" ");
            *reject_reasons.entry(key).or_insert(0) += 1;
        }
        Self {
            rows_read: parsed.rows_read,
            events: parsed.events.len(),
            rejected: parsed.rejected.len(),
            reject_reasons,
            students: panel.students().len(),
            student_weeks: panel.rows.len(),
            zero_minute_weeks: panel.rows.iter().filter(|r| r.minutes == 0.0).count(),
            mastery_events: mastery,
            excluded,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "student_id,timestamp,duration_seconds,outcome,kc_ids,opportunity,problem_id\n";

    fn parse(body: &str) -> ParsedEvents {
        parse_events(format!("{HEADER}{body}").as_bytes(), &IngestConfig::default()).unwrap()
    }

    #[test]
    fn empty_file_with_header() {
        let p = parse("");
        assert!(p.events.is_empty());
        assert_eq!(p.rows_read, 0);
        assert!(p.rejected.is_empty());
    }

    #[test]
    fn negative_duration_rejected() {
        let p = parse("s1,2011-06-09T10:00:00Z,-3,CORRECT,a,1,p1\n");
        assert!(p.events.is_empty());
        assert_eq!(p.rejected.len(), 1);
        assert_eq!(p.rejected[0].line, 2);
    }

    #[test]
    fn bad_timestamp_counted_and_order_preserved() {
        let p = parse(
            "s1,2011-06-09T10:00:00Z,30,CORRECT,a;b,,p1\n\
             s2,2011-06-09T11:00:00Z,40,HINT,,,p2\n\
             s1,not-a-time,40,HINT,a,,p2\n\
             s3,2011-06-10 08:00:00,50,incorrect,c,2,p3\n",
        );
        assert_eq!(p.rows_read, 4);
        assert_eq!(p.events.len(), 3);
        assert_eq!(p.rejected.len(), 1);
        assert_eq!(p.rejected[0].line, 4);
        let ids: Vec<_> = p.events.iter().map(|e| e.student_id.as_str()).collect();
        assert_eq!(ids, ["s1", "s2", "s3"]);
        assert_eq!(p.events[0].kc_ids, ["a", "b"]);
        assert!(p.events[1].kc_ids.is_empty());
        assert_eq!(p.events[2].outcome, Outcome::Incorrect);
        assert_eq!(p.events[2].opportunity, Some(2));
    }

    #[test]
    fn other_malformed_rows() {
        let p = parse(
            "s1,2011-06-09T10:00:00Z,abc,CORRECT,a,,p\n\
             s1,2011-06-09T10:00:00Z,1,MAYBE,a,,p\n\
             s1,2011-06-09T10:00:00Z,1,CORRECT,a;a,,p\n\
             s1,2011-06-09T10:00:00Z,1,CORRECT,a,0,p\n\
             s1,2011-06-09T10:00:00Z,NaN,CORRECT,a,,p\n\
             s1,2011-06-09T10:00:00Z\n",
        );
        assert_eq!(p.events.len(), 0);
        assert_eq!(p.rejected.len(), 6);
    }

    #[test]
    fn missing_column_fails_file() {
        let err = parse_events(
            "student_id,timestamp,duration_seconds,outcome,kc_ids,problem_id\n".as_bytes(),
            &IngestConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(c) if c == "opportunity"));
    }

    #[test]
    fn tab_delimited_and_column_map() {
        let mut cfg = IngestConfig::default();
        cfg.column_map.insert("student_id".into(), "Anon Student Id".into());
        let text = "Anon Student Id\ttimestamp\tduration_seconds\toutcome\tkc_ids\topportunity\tproblem_id\n\
                    s9\t2011-06-09T10:00:00+02:00\t12.5\tCORRECT\tk1\t\tp\n";
        let p = parse_events(text.as_bytes(), &cfg).unwrap();
        assert_eq!(p.events.len(), 1);
        assert_eq!(p.events[0].student_id, "s9");
        assert_eq!(p.events[0].timestamp.to_rfc3339(), "2011-06-09T08:00:00+00:00");
    }

    #[test]
    fn naive_timestamps_follow_offset() {
        let cfg = IngestConfig { utc_offset_minutes: -300, ..Default::default() };
        // Sunday 22:00 local (UTC-5) is Monday 03:00 UTC; the local calendar wins.
        let text = format!("{HEADER}s,2011-06-12 22:00:00,60,CORRECT,a,,p\n");
        let p = parse_events(text.as_bytes(), &cfg).unwrap();
        let e = &p.events[0];
        assert_eq!(e.timestamp.to_rfc3339(), "2011-06-13T03:00:00+00:00");
        assert_eq!(cfg.week_of(&e.timestamp).to_string(), "2011-W23");
        assert_eq!(IngestConfig::default().week_of(&e.timestamp).to_string(), "2011-W24");
    }

    fn ev(student: &str, ts: &str, secs: f64, problem: &str, kcs: &[&str]) -> InteractionEvent {
        InteractionEvent {
            student_id: student.into(),
            timestamp: DateTime::parse_from_rfc3339(ts).unwrap().with_timezone(&Utc),
            duration_seconds: secs,
            outcome: Outcome::Correct,
            kc_ids: kcs.iter().map(|s| s.to_string()).collect(),
            opportunity: None,
            problem_id: problem.into(),
        }
    }

    #[test]
    fn one_event_two_minutes() {
        let p = aggregate_weekly(&[ev("a", "2011-06-09T10:00:00Z", 120.0, "p", &["k"])], &IngestConfig::default());
        assert_eq!(p.rows.len(), 1);
        assert_eq!(p.rows[0].minutes, 2.0);
        assert_eq!(p.rows[0].problems, 1);
        assert_eq!(p.rows[0].opportunities, 1);
    }

    #[test]
    fn interior_gap_materialized() {
        let p = aggregate_weekly(
            &[
                ev("a", "2011-01-04T10:00:00Z", 60.0, "p", &["k"]),
                ev("a", "2011-01-18T10:00:00Z", 60.0, "p", &["k"]),
            ],
            &IngestConfig::default(),
        );
        let weeks: Vec<String> = p.rows.iter().map(|r| r.week.to_string()).collect();
        assert_eq!(weeks, ["2011-W01", "2011-W02", "2011-W03"]);
        assert_eq!(p.rows[1].minutes, 0.0);
        assert_eq!(p.rows[1].problems, 0);
    }

    #[test]
    fn hand_computed_panel() {
        // W23 = Jun 6–12 2011, W24 = Jun 13–19, W25 = Jun 20–26.
        let events = vec![
            ev("s1", "2011-06-06T09:00:00Z", 300.0, "p1", &["a"]),
            ev("s1", "2011-06-06T09:10:00Z", 180.0, "p1", &["b"]),
            ev("s1", "2011-06-12T23:59:00Z", 120.0, "p2", &[]),
            ev("s1", "2011-06-20T10:00:00Z", 600.0, "p3", &["a", "b"]),
            ev("s2", "2011-06-13T10:00:00Z", 60.0, "p1", &["a"]),
            ev("s2", "2011-06-14T10:00:00Z", 90.0, "p2", &["a"]),
            ev("s2", "2011-06-15T10:00:00Z", 30.0, "p2", &["c"]),
            ev("s2", "2011-06-21T10:00:00Z", 240.0, "p4", &["c"]),
            ev("s2", "2011-06-26T23:00:00Z", 60.0, "p4", &[]),
            ev("s2", "2011-06-22T10:00:00Z", 120.0, "p5", &["a"]),
        ];
        let p = aggregate_weekly(&events, &IngestConfig::default());
        let got: Vec<(&str, String, f64, u32, u32)> = p
            .rows
            .iter()
            .map(|r| (r.student_id.as_str(), r.week.to_string(), r.minutes, r.problems, r.opportunities))
            .collect();
        let want = vec![
            ("s1", "2011-W23".to_string(), 10.0, 2, 2),
            ("s1", "2011-W24".to_string(), 0.0, 0, 0),
            ("s1", "2011-W25".to_string(), 10.0, 1, 1),
            ("s2", "2011-W24".to_string(), 3.0, 2, 3),
            ("s2", "2011-W25".to_string(), 7.0, 2, 2),
        ];
        assert_eq!(got, want);
    }

    fn skeleton(rows: &[(&str, &str, f64)]) -> Panel {
        Panel {
            rows: rows
                .iter()
                .map(|&(s, w, m)| StudentWeek {
                    student_id: s.into(),
                    week: w.parse().unwrap(),
                    minutes: m,
                    problems: 0,
                    opportunities: 0,
                    skills_cum: 0,
                    y_min: 0.0,
                    y_skill: 0.0,
                    excluded: false,
                })
                .collect(),
        }
    }

    fn mastery(s: &str, k: &str, w: &str) -> MasteryEvent {
        MasteryEvent { student_id: s.into(), skill: k.into(), week: w.parse().unwrap() }
    }

    #[test]
    fn first_mastery_counting() {
        let panel = skeleton(&[("a", "2011-W10", 5.0), ("a", "2011-W11", 6.0)]);
        let (p, _) = build_targets(
            &panel,
            &[mastery("a", "A", "2011-W10"), mastery("a", "B", "2011-W10"), mastery("a", "A", "2011-W11")],
            1.5,
        )
        .unwrap();
        assert_eq!(p.rows[0].y_skill, 2.0);
        assert_eq!(p.rows[1].y_skill, 0.0);
        assert_eq!(p.rows[1].skills_cum, 2);
        assert_eq!(p.rows[1].y_min, 6.0);
    }

    #[test]
    fn no_mastery_means_zero_skills() {
        let panel = skeleton(&[("a", "2011-W10", 5.0), ("b", "2011-W11", 6.0)]);
        let (p, _) = build_targets(&panel, &[], 1.5).unwrap();
        assert!(p.rows.iter().all(|r| r.y_skill == 0.0));
    }

    #[test]
    fn unknown_student_or_week() {
        let panel = skeleton(&[("a", "2011-W10", 5.0)]);
        assert!(matches!(
            build_targets(&panel, &[mastery("z", "A", "2011-W10")], 1.5),
            Err(IngestError::UnknownStudent(_))
        ));
        assert!(matches!(
            build_targets(&panel, &[mastery("a", "A", "2011-W12")], 1.5),
            Err(IngestError::UnknownWeek { .. })
        ));
    }

    #[test]
    fn exclusion_matches_direct_fence() {
        let mins = [10.0, 12.0, 11.0, 13.0, 9.0, 400.0, 10.5, 0.0];
        let rows: Vec<(&str, String, f64)> = mins
            .iter()
            .enumerate()
            .map(|(i, &m)| ("a", format!("2011-W{:02}", i + 1), m))
            .collect();
        let rows: Vec<(&str, &str, f64)> = rows.iter().map(|(s, w, m)| (*s, w.as_str(), *m)).collect();
        let (p, counts) = build_targets(&skeleton(&rows), &[], 1.5).unwrap();
        // Sorted: 0, 9, 10, 10.5, 11, 12, 13, 400; Q1 at rank 1.75 = 9.75, Q3 at 5.25 = 12.25.
        // Fences [6.0, 16.0] exclude 0 and 400.
        let excluded: Vec<bool> = p.rows.iter().map(|r| r.excluded).collect();
        assert_eq!(excluded, [false, false, false, false, false, true, false, true]);
        assert_eq!(counts, ExclusionCounts { minutes: 2, skills: 0, total: 2 });
    }

    #[test]
    fn panel_csv_round_trip() {
        let panel = skeleton(&[("a", "2011-W10", 5.25), ("a", "2011-W11", 0.0), ("b", "2011-W11", 1.0 / 3.0)]);
        let (p, _) = build_targets(&panel, &[mastery("a", "A", "2011-W11")], 1.5).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let back = Panel::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }
}
