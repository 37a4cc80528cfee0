//! Observation, hidden-state, and action spaces derived from an
//! [`EnvironmentSpec`]: one position modality per entity, one location
//! factor per entity (plus feature modalities/factors), and a
//! stop-or-move action per controllable entity and grid point.

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentSpec;

/// What a modality reports on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModalityKind {
    /// Position of entity `what`.
    Position { what: usize },
    /// Value of auxiliary feature `feature`.
    Feature { feature: usize },
}

/// One observation channel with a fixed number of outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Modality {
    pub label: String,
    pub levels: usize,
    pub kind: ModalityKind,
}

/// All observation channels, positions first, features after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpace {
    pub modalities: Vec<Modality>,
}

impl ObservationSpace {
    /// Number of position modalities.
    pub fn position_count(&self) -> usize {
        self.modalities
            .iter()
            .filter(|m| matches!(m.kind, ModalityKind::Position { .. }))
            .count()
    }
}

/// What a hidden-state factor tracks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorKind {
    Location { what: usize },
    Feature { feature: usize },
}

/// One hidden-state factor with a fixed number of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFactor {
    pub label: String,
    pub levels: usize,
    pub kind: FactorKind,
}

/// Factored hidden-state space. The joint space is the cartesian product
/// of the factors; `enumerate_joint` spells it out for small instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpace {
    pub factors: Vec<StateFactor>,
}

impl StateSpace {
    pub fn joint_size(&self) -> usize {
        self.factors.iter().map(|f| f.levels).product()
    }

    /// All joint assignments in mixed-radix order, last factor fastest.
    pub fn enumerate_joint(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::with_capacity(self.joint_size());
        let mut current = vec![0usize; self.factors.len()];
        loop {
            out.push(current.clone());
            let mut k = self.factors.len();
            loop {
                if k == 0 {
                    return out;
                }
                k -= 1;
                current[k] += 1;
                if current[k] < self.factors[k].levels {
                    break;
                }
                current[k] = 0;
            }
        }
    }
}

/// A single planner action: either hold position or drive one entity to a
/// grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionKind {
    Stop,
    MoveTo(usize),
}

/// An action together with the entity that performs it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub actor: usize,
    pub kind: ActionKind,
}

impl Action {
    /// Human-readable form, `Stop(UR5e)` or `Move(UR5e,P7)`.
    pub fn label(&self, env: &EnvironmentSpec) -> String {
        let actor = &env.whats[self.actor].label;
        match self.kind {
            ActionKind::Stop => format!("Stop({actor})"),
            ActionKind::MoveTo(w) => format!("Move({actor},{})", env.wheres.label(w)),
        }
    }
}

/// The ordered action set: for each controllable entity in declaration
/// order, its stop action followed by one move per grid point. The
/// stop-first ordering is what deterministic tie-breaking relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub actions: Vec<Action>,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> &Action {
        &self.actions[index]
    }
}

/// One position modality per entity, in declaration order, then one
/// two-level modality per feature.
pub fn build_observation_space(env: &EnvironmentSpec) -> ObservationSpace {
    let m = env.where_count();
    let mut modalities: Vec<Modality> = env
        .whats
        .iter()
        .enumerate()
        .map(|(what, entry)| Modality {
            label: entry.label.clone(),
            levels: m,
            kind: ModalityKind::Position { what },
        })
        .collect();
    for (feature, spec) in env.features.iter().enumerate() {
        modalities.push(Modality {
            label: spec.label.clone(),
            levels: 2,
            kind: ModalityKind::Feature { feature },
        });
    }
    ObservationSpace { modalities }
}

/// One location factor per entity, then one binary factor per feature.
/// Factors line up index-for-index with the observation modalities.
pub fn build_state_space(env: &EnvironmentSpec) -> StateSpace {
    let m = env.where_count();
    let mut factors: Vec<StateFactor> = env
        .whats
        .iter()
        .enumerate()
        .map(|(what, entry)| StateFactor {
            label: entry.label.clone(),
            levels: m,
            kind: FactorKind::Location { what },
        })
        .collect();
    for (feature, spec) in env.features.iter().enumerate() {
        factors.push(StateFactor {
            label: spec.label.clone(),
            levels: 2,
            kind: FactorKind::Feature { feature },
        });
    }
    StateSpace { factors }
}

/// Stop plus one move per grid point for each controllable entity;
/// `n_c * (m + 1)` actions in total.
pub fn build_action_space(env: &EnvironmentSpec) -> ActionSpace {
    let m = env.where_count();
    let mut actions = Vec::new();
    for actor in env.controllables() {
        actions.push(Action {
            actor,
            kind: ActionKind::Stop,
        });
        for w in 0..m {
            actions.push(Action {
                actor,
                kind: ActionKind::MoveTo(w),
            });
        }
    }
    ActionSpace { actions }
}
