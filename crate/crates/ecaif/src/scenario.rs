//! Scenario files: a line-oriented declarative format with three sections.
//!
//! ```text
//! # comments start with '#'
//! [environment]
//! wheres P1 UO P6 P7 P8 P11 P12 P13 CO P5 P10 P15 Int. P9 P14
//! what UR5e controllable initial=UO reach=P1,UO,P6,P7,P8,P11,P12,P13,Int.,P9,P14
//! what object initial=P7
//! feature orientation of=COBOTTA values=facing-away,facing-target initial=facing-away
//! block actor=UR5e to=P14 when=orientation:facing-target carrying=yes
//! carry on
//!
//! [schedule]
//! prefer 0 object P12          # timestep 0 entries configure the initial models
//! prefer 1 object P5           # applied at the start of timestep 1
//! set 2 orientation facing-target
//!
//! [engine]
//! mode ecaif                   # or: mode agent UR5e
//! horizon 4
//! precision 16
//! select argmax                # or: sample
//! seed 0
//! timesteps 10
//! pruning on
//! order UR5e COBOTTA
//! ```
//!
//! Schedule entries are sorted by timestep; entries at timestep 0 take
//! effect before the run loop starts. Every label is validated against the
//! declared environment, and errors carry the offending line number.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SelectionMode;
use crate::env::{
    BlockRule, EnvironmentSpec, FeatureSpec, WhatEntry, WhatKind, WhereSpace,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid scenario at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
}

/// Whether the run plans over the whole declared world or over one agent's
/// restricted view of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunMode {
    Ecaif,
    AgentCentric { agent: String },
}

impl std::fmt::Display for RunMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunMode::Ecaif => write!(f, "ecaif"),
            RunMode::AgentCentric { agent } => write!(f, "agent:{agent}"),
        }
    }
}

/// Scheduled change of the preference over one entity's position modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceEntry {
    pub timestep: usize,
    /// Entity whose observed position the preference is about.
    pub what: String,
    /// Desired grid point.
    pub target: String,
    /// When set, only this owner's model receives the preference.
    pub owner: Option<String>,
    #[serde(skip)]
    pub line: usize,
}

/// Scheduled exogenous change of one feature value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub timestep: usize,
    pub feature: String,
    pub value: bool,
    #[serde(skip)]
    pub line: usize,
}

/// Everything a run needs: the world, the mode, the schedules, and the
/// engine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub env: EnvironmentSpec,
    pub mode: RunMode,
    pub preference_schedule: Vec<PreferenceEntry>,
    pub feature_schedule: Vec<FeatureEntry>,
    pub horizon: usize,
    pub precision: f64,
    pub selection: SelectionMode,
    pub seed: u64,
    pub timesteps: usize,
    pub pruning: bool,
    /// Owner iteration order, controllable entity labels.
    pub owner_order: Vec<String>,
}

/// Reads and validates a scenario file; the file stem becomes the name.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ScenarioError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    parse_scenario(&text, &name)
}

fn parse_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        message: message.into(),
    }
}

fn validation_err(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        line,
        message: message.into(),
    }
}

/// A raw directive: its 1-based line number and whitespace-split words.
struct Directive {
    line: usize,
    words: Vec<String>,
}

impl Directive {
    fn keyword(&self) -> &str {
        &self.words[0]
    }

    /// Value of a `key=value` word, if present.
    fn option(&self, key: &str) -> Option<&str> {
        let prefix = format!("{key}=");
        self.words.iter().find_map(|w| w.strip_prefix(&prefix))
    }

    fn require_option(&self, key: &str) -> Result<&str, ScenarioError> {
        self.option(key)
            .ok_or_else(|| parse_err(self.line, format!("missing {key}=... option")))
    }

    /// Positional words after the keyword, excluding `key=value` options.
    fn positional(&self) -> Vec<&str> {
        self.words[1..]
            .iter()
            .map(|w| w.as_str())
            .filter(|w| !w.contains('='))
            .collect()
    }

    /// Exactly one positional word.
    fn single(&self) -> Result<&str, ScenarioError> {
        let pos = self.positional();
        match pos.as_slice() {
            [one] => Ok(one),
            _ => Err(parse_err(
                self.line,
                format!("{} expects exactly one value", self.keyword()),
            )),
        }
    }
}

fn parse_on_off(line: usize, value: &str) -> Result<bool, ScenarioError> {
    match value {
        "on" | "yes" | "true" => Ok(true),
        "off" | "no" | "false" => Ok(false),
        other => Err(parse_err(line, format!("expected on/off, got {other:?}"))),
    }
}

fn parse_usize(line: usize, value: &str, what: &str) -> Result<usize, ScenarioError> {
    value.parse().map_err(|_| {
        parse_err(
            line,
            format!("{what} must be a non-negative integer, got {value:?}"),
        )
    })
}

struct RawFeatureEntry {
    timestep: usize,
    feature: String,
    value_label: String,
    line: usize,
}

/// Parses scenario text. `name` is only carried through into the config.
pub fn parse_scenario(text: &str, name: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut sections: Vec<(String, usize, Vec<Directive>)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(header) = trimmed.strip_prefix('[') {
            let section = header
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, "unterminated section header"))?;
            sections.push((section.to_string(), line, Vec::new()));
            continue;
        }
        let words: Vec<String> = trimmed.split_whitespace().map(str::to_string).collect();
        match sections.last_mut() {
            Some((_, _, directives)) => directives.push(Directive { line, words }),
            None => return Err(parse_err(line, "directive before any [section] header")),
        }
    }
    if sections.is_empty() {
        return Err(parse_err(0, "scenario file is empty"));
    }

    let mut env: Option<EnvironmentSpec> = None;
    let mut preference_schedule: Vec<PreferenceEntry> = Vec::new();
    let mut raw_features: Vec<RawFeatureEntry> = Vec::new();
    let mut mode = RunMode::Ecaif;
    let mut mode_line = 0usize;
    let mut horizon = 4usize;
    let mut horizon_line = 0usize;
    let mut precision = 16.0f64;
    let mut precision_line = 0usize;
    let mut selection = SelectionMode::Argmax;
    let mut seed = 0u64;
    let mut timesteps = 10usize;
    let mut timesteps_line = 0usize;
    let mut pruning = false;
    let mut order: Vec<(usize, String)> = Vec::new();

    for (section, section_line, directives) in &sections {
        match section.as_str() {
            "environment" => {
                env = Some(parse_environment(*section_line, directives)?);
            }
            "schedule" => {
                for d in directives {
                    match d.keyword() {
                        "prefer" => {
                            let pos = d.positional();
                            if pos.len() != 3 {
                                return Err(parse_err(
                                    d.line,
                                    "expected: prefer <timestep> <what> <where> [owner=<what>]",
                                ));
                            }
                            preference_schedule.push(PreferenceEntry {
                                timestep: parse_usize(d.line, pos[0], "timestep")?,
                                what: pos[1].to_string(),
                                target: pos[2].to_string(),
                                owner: d.option("owner").map(str::to_string),
                                line: d.line,
                            });
                        }
                        "set" => {
                            let pos = d.positional();
                            if pos.len() != 3 {
                                return Err(parse_err(
                                    d.line,
                                    "expected: set <timestep> <feature> <value>",
                                ));
                            }
                            raw_features.push(RawFeatureEntry {
                                timestep: parse_usize(d.line, pos[0], "timestep")?,
                                feature: pos[1].to_string(),
                                value_label: pos[2].to_string(),
                                line: d.line,
                            });
                        }
                        other => {
                            return Err(parse_err(
                                d.line,
                                format!("unknown schedule directive {other:?}"),
                            ))
                        }
                    }
                }
            }
            "engine" => {
                for d in directives {
                    let pos = d.positional();
                    match d.keyword() {
                        "mode" => {
                            mode_line = d.line;
                            mode = match pos.as_slice() {
                                ["ecaif"] => RunMode::Ecaif,
                                ["agent", agent] => RunMode::AgentCentric {
                                    agent: agent.to_string(),
                                },
                                _ => {
                                    return Err(parse_err(
                                        d.line,
                                        "expected: mode ecaif | mode agent <what>",
                                    ))
                                }
                            };
                        }
                        "horizon" => {
                            horizon_line = d.line;
                            horizon = parse_usize(d.line, d.single()?, "horizon")?;
                        }
                        "precision" => {
                            precision_line = d.line;
                            precision = d
                                .single()?
                                .parse()
                                .map_err(|_| parse_err(d.line, "precision must be a number"))?;
                        }
                        "select" => {
                            selection = match d.single()? {
                                "argmax" => SelectionMode::Argmax,
                                "sample" => SelectionMode::Sample,
                                other => {
                                    return Err(parse_err(
                                        d.line,
                                        format!("expected argmax or sample, got {other:?}"),
                                    ))
                                }
                            };
                        }
                        "seed" => {
                            seed = d.single()?.parse().map_err(|_| {
                                parse_err(d.line, "seed must be a non-negative integer")
                            })?;
                        }
                        "timesteps" => {
                            timesteps_line = d.line;
                            timesteps = parse_usize(d.line, d.single()?, "timesteps")?;
                        }
                        "pruning" => {
                            pruning = parse_on_off(d.line, d.single()?)?;
                        }
                        "order" => {
                            order = pos.iter().map(|w| (d.line, w.to_string())).collect();
                        }
                        other => {
                            return Err(parse_err(
                                d.line,
                                format!("unknown engine directive {other:?}"),
                            ))
                        }
                    }
                }
            }
            other => {
                return Err(parse_err(
                    *section_line,
                    format!("unknown section {other:?}"),
                ))
            }
        }
    }

    let env = env.ok_or_else(|| parse_err(0, "missing [environment] section"))?;

    // Schedule validation against the declared world.
    for entry in &preference_schedule {
        if env.what_index(&entry.what).is_none() {
            return Err(validation_err(
                entry.line,
                format!("unknown entity {:?}", entry.what),
            ));
        }
        if env.wheres.index_of(&entry.target).is_none() {
            return Err(validation_err(
                entry.line,
                format!("unknown grid point {:?}", entry.target),
            ));
        }
        if let Some(owner) = &entry.owner {
            match env.what_index(owner) {
                Some(i) if env.whats[i].is_controllable() => {}
                _ => {
                    return Err(validation_err(
                        entry.line,
                        format!("owner {owner:?} is not a controllable entity"),
                    ))
                }
            }
        }
    }
    let feature_schedule: Vec<FeatureEntry> = raw_features
        .into_iter()
        .map(|raw| {
            let feature = env.feature_index(&raw.feature).ok_or_else(|| {
                validation_err(raw.line, format!("unknown feature {:?}", raw.feature))
            })?;
            let values = &env.features[feature].values;
            let value = values
                .iter()
                .position(|v| v == &raw.value_label)
                .ok_or_else(|| {
                    validation_err(
                        raw.line,
                        format!(
                            "feature {} has values {:?}, got {:?}",
                            raw.feature, values, raw.value_label
                        ),
                    )
                })?;
            Ok(FeatureEntry {
                timestep: raw.timestep,
                feature: raw.feature,
                value: value == 1,
                line: raw.line,
            })
        })
        .collect::<Result<_, ScenarioError>>()?;

    for window in preference_schedule.windows(2) {
        if window[1].timestep < window[0].timestep {
            return Err(validation_err(
                window[1].line,
                "preference schedule is not sorted by timestep",
            ));
        }
    }
    for window in feature_schedule.windows(2) {
        if window[1].timestep < window[0].timestep {
            return Err(validation_err(
                window[1].line,
                "feature schedule is not sorted by timestep",
            ));
        }
    }

    // Engine validation.
    if let RunMode::AgentCentric { agent } = &mode {
        match env.what_index(agent) {
            Some(i) if env.whats[i].is_controllable() => {}
            _ => {
                return Err(validation_err(
                    mode_line,
                    format!("agent {agent:?} is not a controllable entity"),
                ))
            }
        }
    }
    if horizon < 1 {
        return Err(validation_err(horizon_line, "horizon must be at least 1"));
    }
    if !(precision.is_finite() && precision > 0.0) {
        return Err(validation_err(precision_line, "precision must be positive"));
    }
    if timesteps < 1 {
        return Err(validation_err(
            timesteps_line,
            "timesteps must be at least 1",
        ));
    }

    // Owner order: listed entities first, remaining controllables appended
    // in declaration order.
    let mut owner_order: Vec<String> = Vec::new();
    for (line, label) in &order {
        match env.what_index(label) {
            Some(i) if env.whats[i].is_controllable() => {}
            _ => {
                return Err(validation_err(
                    *line,
                    format!("{label:?} is not a controllable entity"),
                ))
            }
        }
        if owner_order.contains(label) {
            return Err(validation_err(
                *line,
                format!("{label:?} listed twice in owner order"),
            ));
        }
        owner_order.push(label.clone());
    }
    for i in env.controllables() {
        let label = &env.whats[i].label;
        if !owner_order.contains(label) {
            owner_order.push(label.clone());
        }
    }

    Ok(ScenarioConfig {
        name: name.to_string(),
        env,
        mode,
        preference_schedule,
        feature_schedule,
        horizon,
        precision,
        selection,
        seed,
        timesteps,
        pruning,
        owner_order,
    })
}

fn parse_environment(
    section_line: usize,
    directives: &[Directive],
) -> Result<EnvironmentSpec, ScenarioError> {
    let mut wheres: Option<(usize, WhereSpace)> = None;
    struct RawWhat {
        line: usize,
        label: String,
        controllable: bool,
        initial: String,
        reach: Vec<String>,
    }
    struct RawFeature {
        line: usize,
        label: String,
        of: String,
        values: [String; 2],
        initial: String,
    }
    struct RawBlock {
        line: usize,
        actor: String,
        to: String,
        feature: String,
        value: String,
        carrying: bool,
    }
    let mut raw_whats: Vec<RawWhat> = Vec::new();
    let mut raw_features: Vec<RawFeature> = Vec::new();
    let mut raw_blocks: Vec<RawBlock> = Vec::new();
    let mut carry = true;

    for d in directives {
        match d.keyword() {
            "wheres" => {
                let labels: Vec<String> =
                    d.words[1..].iter().map(|w| w.to_string()).collect();
                let space = WhereSpace::new(labels)
                    .map_err(|e| validation_err(d.line, e.to_string()))?;
                wheres = Some((d.line, space));
            }
            "what" => {
                let pos = d.positional();
                let (label, controllable) = match pos.as_slice() {
                    [label] => (label.to_string(), false),
                    [label, "controllable"] => (label.to_string(), true),
                    _ => {
                        return Err(parse_err(
                            d.line,
                            "expected: what <label> [controllable] initial=<where> [reach=<w,...>]",
                        ))
                    }
                };
                let reach = d
                    .option("reach")
                    .map(|r| r.split(',').map(str::to_string).collect())
                    .unwrap_or_default();
                raw_whats.push(RawWhat {
                    line: d.line,
                    label,
                    controllable,
                    initial: d.require_option("initial")?.to_string(),
                    reach,
                });
            }
            "feature" => {
                let pos = d.positional();
                let label = match pos.as_slice() {
                    [label] => label.to_string(),
                    _ => {
                        return Err(parse_err(
                            d.line,
                            "expected: feature <label> of=<what> values=<a,b> initial=<value>",
                        ))
                    }
                };
                let values: Vec<&str> = d.require_option("values")?.split(',').collect();
                let [a, b] = values.as_slice() else {
                    return Err(parse_err(d.line, "features take exactly two values"));
                };
                raw_features.push(RawFeature {
                    line: d.line,
                    label,
                    of: d.require_option("of")?.to_string(),
                    values: [a.to_string(), b.to_string()],
                    initial: d.require_option("initial")?.to_string(),
                });
            }
            "block" => {
                let when = d.require_option("when")?;
                let (feature, value) = when.split_once(':').ok_or_else(|| {
                    parse_err(d.line, "expected when=<feature>:<value>")
                })?;
                let carrying = match d.option("carrying") {
                    Some(v) => parse_on_off(d.line, v)?,
                    None => false,
                };
                raw_blocks.push(RawBlock {
                    line: d.line,
                    actor: d.require_option("actor")?.to_string(),
                    to: d.require_option("to")?.to_string(),
                    feature: feature.to_string(),
                    value: value.to_string(),
                    carrying,
                });
            }
            "carry" => {
                carry = parse_on_off(d.line, d.single()?)?;
            }
            other => {
                return Err(parse_err(
                    d.line,
                    format!("unknown environment directive {other:?}"),
                ))
            }
        }
    }

    let (_, wheres) = wheres
        .ok_or_else(|| parse_err(section_line, "missing wheres directive"))?;

    let mut whats = Vec::new();
    for raw in &raw_whats {
        let initial_where = wheres.index_of(&raw.initial).ok_or_else(|| {
            validation_err(raw.line, format!("unknown grid point {:?}", raw.initial))
        })?;
        let mut reach = BTreeSet::new();
        for label in &raw.reach {
            let idx = wheres.index_of(label).ok_or_else(|| {
                validation_err(raw.line, format!("unknown grid point {label:?} in reach"))
            })?;
            reach.insert(idx);
        }
        whats.push(WhatEntry {
            label: raw.label.clone(),
            kind: if raw.controllable {
                WhatKind::Controllable
            } else {
                WhatKind::NonControllable
            },
            reach,
            initial_where,
        });
    }

    let what_index = |line: usize, label: &str| {
        whats
            .iter()
            .position(|w: &WhatEntry| w.label == label)
            .ok_or_else(|| validation_err(line, format!("unknown entity {label:?}")))
    };

    let mut features = Vec::new();
    for raw in &raw_features {
        let initial = raw
            .values
            .iter()
            .position(|v| v == &raw.initial)
            .ok_or_else(|| {
                validation_err(
                    raw.line,
                    format!("initial value {:?} is not one of {:?}", raw.initial, raw.values),
                )
            })?;
        features.push(FeatureSpec {
            label: raw.label.clone(),
            what: what_index(raw.line, &raw.of)?,
            values: raw.values.clone(),
            initial: initial == 1,
        });
    }

    let mut block_rules = Vec::new();
    for raw in &raw_blocks {
        let feature = features
            .iter()
            .position(|f: &FeatureSpec| f.label == raw.feature)
            .ok_or_else(|| {
                validation_err(raw.line, format!("unknown feature {:?}", raw.feature))
            })?;
        let value = features[feature]
            .values
            .iter()
            .position(|v| v == &raw.value)
            .ok_or_else(|| {
                validation_err(
                    raw.line,
                    format!(
                        "feature {} has values {:?}, got {:?}",
                        raw.feature, features[feature].values, raw.value
                    ),
                )
            })?;
        let destination = wheres.index_of(&raw.to).ok_or_else(|| {
            validation_err(raw.line, format!("unknown grid point {:?}", raw.to))
        })?;
        block_rules.push(BlockRule {
            actor: what_index(raw.line, &raw.actor)?,
            destination,
            feature,
            value: value == 1,
            carrying_only: raw.carrying,
        });
    }

    EnvironmentSpec::new(wheres, whats, features, block_rules, carry)
        .map_err(|e| validation_err(section_line, e.to_string()))
}
