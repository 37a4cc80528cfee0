//! Declarative world description: grid points, entities with reach sets,
//! auxiliary binary features, and movement-blocking rules. Everything else
//! in the library is constructed from an [`EnvironmentSpec`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Configuration(String),

    #[error("{label} is not a controllable entity")]
    NotAController { label: String },

    #[error("invalid action: {0}")]
    InvalidAction(String),
}

/// The ordered set of grid-point names making up the observable space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhereSpace {
    labels: Vec<String>,
}

impl WhereSpace {
    pub fn new(labels: Vec<String>) -> Result<Self, EnvError> {
        if labels.is_empty() {
            return Err(EnvError::Configuration(
                "at least one grid point is required".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for label in &labels {
            if !seen.insert(label.clone()) {
                return Err(EnvError::Configuration(format!(
                    "duplicate grid point label {label:?}"
                )));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Whether an entity is driven by a controller or only moved by others.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WhatKind {
    Controllable,
    NonControllable,
}

/// One entity in the world: a robot (controllable) or an object whose
/// position only changes by being carried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatEntry {
    pub label: String,
    pub kind: WhatKind,
    /// Grid points this entity can be driven to. Empty for non-controllable
    /// entities.
    pub reach: BTreeSet<usize>,
    pub initial_where: usize,
}

impl WhatEntry {
    pub fn is_controllable(&self) -> bool {
        self.kind == WhatKind::Controllable
    }
}

/// Auxiliary binary observation attached to one entity, e.g. which way a
/// robot is facing. Changed only by the scenario schedule, never by actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub label: String,
    /// Index of the entity this feature belongs to.
    pub what: usize,
    /// Names for the false/true values, in that order.
    pub values: [String; 2],
    pub initial: bool,
}

/// Forbids an actor's move into a destination while a feature holds a given
/// value, optionally only when the actor is carrying an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRule {
    pub actor: usize,
    pub destination: usize,
    pub feature: usize,
    pub value: bool,
    pub carrying_only: bool,
}

/// Complete declarative description of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub wheres: WhereSpace,
    pub whats: Vec<WhatEntry>,
    pub features: Vec<FeatureSpec>,
    pub block_rules: Vec<BlockRule>,
    /// When set, a non-controllable entity co-located with a moving actor
    /// moves along with it.
    pub carry: bool,
}

impl EnvironmentSpec {
    pub fn new(
        wheres: WhereSpace,
        whats: Vec<WhatEntry>,
        features: Vec<FeatureSpec>,
        block_rules: Vec<BlockRule>,
        carry: bool,
    ) -> Result<Self, EnvError> {
        let spec = Self {
            wheres,
            whats,
            features,
            block_rules,
            carry,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), EnvError> {
        let m = self.wheres.len();
        if self.whats.is_empty() {
            return Err(EnvError::Configuration("at least one entity is required".into()));
        }
        let mut labels = BTreeSet::new();
        for what in &self.whats {
            if !labels.insert(what.label.clone()) {
                return Err(EnvError::Configuration(format!(
                    "duplicate entity label {:?}",
                    what.label
                )));
            }
            if what.initial_where >= m {
                return Err(EnvError::Configuration(format!(
                    "{} starts at grid index {} but only {} points exist",
                    what.label, what.initial_where, m
                )));
            }
            if let Some(&bad) = what.reach.iter().find(|&&w| w >= m) {
                return Err(EnvError::Configuration(format!(
                    "{} reaches grid index {bad} but only {m} points exist",
                    what.label
                )));
            }
            match what.kind {
                WhatKind::Controllable => {
                    if what.reach.is_empty() {
                        return Err(EnvError::Configuration(format!(
                            "controllable entity {} has an empty reach set",
                            what.label
                        )));
                    }
                    if !what.reach.contains(&what.initial_where) {
                        return Err(EnvError::Configuration(format!(
                            "{} starts at {} which is outside its reach set",
                            what.label,
                            self.wheres.label(what.initial_where)
                        )));
                    }
                }
                WhatKind::NonControllable => {
                    if !what.reach.is_empty() {
                        return Err(EnvError::Configuration(format!(
                            "non-controllable entity {} must have an empty reach set",
                            what.label
                        )));
                    }
                }
            }
        }
        if !self.whats.iter().any(WhatEntry::is_controllable) {
            return Err(EnvError::Configuration(
                "at least one controllable entity is required".into(),
            ));
        }
        for feature in &self.features {
            if feature.what >= self.whats.len() {
                return Err(EnvError::Configuration(format!(
                    "feature {} is attached to entity index {} which does not exist",
                    feature.label, feature.what
                )));
            }
            if !labels.insert(feature.label.clone()) {
                return Err(EnvError::Configuration(format!(
                    "feature label {:?} collides with another label",
                    feature.label
                )));
            }
        }
        for rule in &self.block_rules {
            let actor = self.whats.get(rule.actor).ok_or_else(|| {
                EnvError::Configuration(format!("block rule actor index {} out of range", rule.actor))
            })?;
            if !actor.is_controllable() {
                return Err(EnvError::Configuration(format!(
                    "block rule actor {} is not controllable",
                    actor.label
                )));
            }
            if rule.destination >= m {
                return Err(EnvError::Configuration(format!(
                    "block rule destination index {} out of range",
                    rule.destination
                )));
            }
            if rule.feature >= self.features.len() {
                return Err(EnvError::Configuration(format!(
                    "block rule feature index {} out of range",
                    rule.feature
                )));
            }
        }
        Ok(())
    }

    /// Number of grid points.
    pub fn where_count(&self) -> usize {
        self.wheres.len()
    }

    /// Number of entities.
    pub fn what_count(&self) -> usize {
        self.whats.len()
    }

    /// Indices of controllable entities, in declaration order.
    pub fn controllables(&self) -> Vec<usize> {
        self.whats
            .iter()
            .enumerate()
            .filter(|(_, w)| w.is_controllable())
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of non-controllable entities, in declaration order.
    pub fn non_controllables(&self) -> Vec<usize> {
        self.whats
            .iter()
            .enumerate()
            .filter(|(_, w)| !w.is_controllable())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn what_index(&self, label: &str) -> Option<usize> {
        self.whats.iter().position(|w| w.label == label)
    }

    pub fn feature_index(&self, label: &str) -> Option<usize> {
        self.features.iter().position(|f| f.label == label)
    }

    /// Restricts the world to one agent's point of view: only the grid
    /// points it can reach, itself, and the non-controllable entities that
    /// start inside that range. Other robots, and any features or block
    /// rules referring to dropped parts, are removed.
    pub fn restrict_to_agent(&self, agent: usize) -> Result<EnvironmentSpec, EnvError> {
        let entry = self
            .whats
            .get(agent)
            .ok_or_else(|| EnvError::Configuration(format!("entity index {agent} out of range")))?;
        if !entry.is_controllable() {
            return Err(EnvError::NotAController {
                label: entry.label.clone(),
            });
        }

        // Keep grid points in their original order, restricted to the reach set.
        let kept_wheres: Vec<usize> = (0..self.wheres.len())
            .filter(|w| entry.reach.contains(w))
            .collect();
        let where_map: Vec<Option<usize>> = {
            let mut map = vec![None; self.wheres.len()];
            for (new, &old) in kept_wheres.iter().enumerate() {
                map[old] = Some(new);
            }
            map
        };
        let wheres = WhereSpace::new(
            kept_wheres
                .iter()
                .map(|&w| self.wheres.label(w).to_string())
                .collect(),
        )?;

        let mut what_map = vec![None; self.whats.len()];
        let mut whats = Vec::new();
        for (i, what) in self.whats.iter().enumerate() {
            let keep = if i == agent {
                true
            } else {
                !what.is_controllable() && where_map[what.initial_where].is_some()
            };
            if !keep {
                continue;
            }
            what_map[i] = Some(whats.len());
            whats.push(WhatEntry {
                label: what.label.clone(),
                kind: what.kind,
                reach: what
                    .reach
                    .iter()
                    .filter_map(|&w| where_map[w])
                    .collect(),
                initial_where: where_map[what.initial_where]
                    .expect("kept entities start inside the restricted range"),
            });
        }

        let mut feature_map = vec![None; self.features.len()];
        let mut features = Vec::new();
        for (i, feature) in self.features.iter().enumerate() {
            if let Some(what) = what_map[feature.what] {
                feature_map[i] = Some(features.len());
                features.push(FeatureSpec {
                    label: feature.label.clone(),
                    what,
                    values: feature.values.clone(),
                    initial: feature.initial,
                });
            }
        }

        let block_rules = self
            .block_rules
            .iter()
            .filter_map(|rule| {
                Some(BlockRule {
                    actor: what_map[rule.actor]?,
                    destination: where_map[rule.destination]?,
                    feature: feature_map[rule.feature]?,
                    value: rule.value,
                    carrying_only: rule.carrying_only,
                })
            })
            .collect();

        EnvironmentSpec::new(wheres, whats, features, block_rules, self.carry)
    }
}
