//! Run traces: one structured record per timestep plus a run header,
//! serialized as line-delimited JSON. Derived views: per-place observation
//! histograms (heatmap input) and human-readable timelines.
//!
//! Real values are rendered with nine significant digits so that a repeated
//! run serializes byte-identically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SelectionMode;
use crate::world::EventOutcome;

/// Fixed-precision rendering for reals carried in traces.
pub(crate) mod real9 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(value: &f64, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format!("{value:.8e}"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<f64, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("unknown entity {0:?}")]
    InvalidWhat(String),

    #[error("trace line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },

    #[error("trace is empty")]
    Empty,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Entity summary carried in the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatSummary {
    pub label: String,
    pub controllable: bool,
    pub initial: String,
}

/// Feature summary carried in the header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub label: String,
    pub values: [String; 2],
    pub initial: String,
}

/// First line of a trace: the run configuration and the world it ran in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub scenario: String,
    pub mode: String,
    pub timesteps: usize,
    pub horizon: usize,
    pub precision: f64,
    pub selection: SelectionMode,
    pub seed: u64,
    pub pruning: bool,
    pub wheres: Vec<String>,
    pub whats: Vec<WhatSummary>,
    pub features: Vec<FeatureSummary>,
    pub owner_order: Vec<String>,
}

/// One owner's planning step within a timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnerRecord {
    pub owner: String,
    /// Most likely level per state factor, as labels.
    pub belief: Vec<String>,
    /// The selected policy's action labels.
    pub policy: Vec<String>,
    /// Expected free energy of the selected policy.
    #[serde(with = "real9")]
    pub g: f64,
    /// Whether the actor gate let this owner execute its action.
    pub acted: bool,
}

/// The control that was sent, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub actor: String,
    pub kind: crate::world::ControlKind,
    pub target: String,
}

/// One moved entity inside an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovedRecord {
    pub what: String,
    pub from: String,
    pub to: String,
}

/// How the simulated controller responded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub outcome: EventOutcome,
    pub moved: Vec<MovedRecord>,
}

/// One observed modality outcome, as labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsRecord {
    pub of: String,
    pub at: String,
}

/// Everything that happened in one timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub timestep: usize,
    pub owners: Vec<OwnerRecord>,
    pub control: Option<ControlRecord>,
    pub event: Option<EventRecord>,
    /// Post-step observation, one entry per modality.
    pub observation: Vec<ObsRecord>,
}

/// A complete run: header plus one record per timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceLog {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    /// Header line followed by one record line per timestep.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        out.push_str(&serde_json::to_string(&self.header).expect("header serializes"));
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (line, header) = lines.next().ok_or(TraceError::Empty)?;
        let header: TraceHeader =
            serde_json::from_str(header).map_err(|source| TraceError::Json {
                line: line + 1,
                source,
            })?;
        let mut records = Vec::new();
        for (line, record) in lines {
            records.push(serde_json::from_str(record).map_err(|source| TraceError::Json {
                line: line + 1,
                source,
            })?);
        }
        Ok(Self { header, records })
    }

    pub fn write_jsonl(&self, path: impl AsRef<std::path::Path>) -> Result<(), TraceError> {
        std::fs::write(path, self.to_jsonl())?;
        Ok(())
    }

    pub fn read_jsonl(path: impl AsRef<std::path::Path>) -> Result<Self, TraceError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_jsonl(&text)
    }
}

/// Counts of one entity's observed positions across all timesteps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationHistogram {
    pub what: String,
    /// `(grid point, count)` in the world's grid-point order.
    pub counts: Vec<(String, u64)>,
}

impl ObservationHistogram {
    /// Count for a grid point; unknown labels count zero, which is how a
    /// restricted world reports places it cannot express.
    pub fn count(&self, label: &str) -> u64 {
        self.counts
            .iter()
            .find(|(l, _)| l == label)
            .map(|&(_, c)| c)
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&(_, c)| c).sum()
    }

    /// Comma-separated `where,count` grid.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("where,count\n");
        for (label, count) in &self.counts {
            out.push_str(&format!("{label},{count}\n"));
        }
        out
    }
}

/// Accumulates where one entity was observed, one count per timestep.
pub fn emit_heatmap(trace: &TraceLog, what: &str) -> Result<ObservationHistogram, TraceError> {
    if !trace.header.whats.iter().any(|w| w.label == what) {
        return Err(TraceError::InvalidWhat(what.to_string()));
    }
    let mut counts: Vec<(String, u64)> = trace
        .header
        .wheres
        .iter()
        .map(|l| (l.clone(), 0))
        .collect();
    for record in &trace.records {
        for obs in &record.observation {
            if obs.of == what {
                if let Some(entry) = counts.iter_mut().find(|(l, _)| l == &obs.at) {
                    entry.1 += 1;
                }
            }
        }
    }
    Ok(ObservationHistogram {
        what: what.to_string(),
        counts,
    })
}

/// One timestep of the timeline view.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub timestep: usize,
    /// `(owner, selected action, acted)` in iteration order.
    pub selections: Vec<(String, String, bool)>,
    pub control: Option<String>,
    pub outcome: Option<EventOutcome>,
}

impl std::fmt::Display for TimelineRow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t={:<3}", self.timestep)?;
        for (owner, action, acted) in &self.selections {
            let gate = if *acted { "acts" } else { "waits" };
            write!(f, " {owner}: {action} [{gate}]")?;
        }
        match (&self.control, self.outcome) {
            (Some(control), Some(outcome)) => write!(f, " | {control} | {outcome:?}"),
            _ => write!(f, " | no control"),
        }
    }
}

/// Ordered action/actor/outcome listing for a trace.
pub fn emit_timeline(trace: &TraceLog) -> Vec<TimelineRow> {
    trace
        .records
        .iter()
        .map(|record| TimelineRow {
            timestep: record.timestep,
            selections: record
                .owners
                .iter()
                .map(|o| {
                    let action = o.policy.first().cloned().unwrap_or_default();
                    (o.owner.clone(), action, o.acted)
                })
                .collect(),
            control: record.control.as_ref().map(|c| {
                format!(
                    "{} {} -> {}",
                    match c.kind {
                        crate::world::ControlKind::Move => "move",
                        crate::world::ControlKind::Hold => "hold",
                    },
                    c.actor,
                    c.target
                )
            }),
            outcome: record.event.as_ref().map(|e| e.outcome),
        })
        .collect()
}
