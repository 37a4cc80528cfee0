//! Ground-truth world: actual entity positions and feature values, control
//! application with reach, blocking, and carry rules, and noiseless
//! observation. Failed moves are silent no-ops surfaced as events, the way
//! a controller that declines to generate a trajectory would look from the
//! outside.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::EnvironmentSpec;
use crate::spaces::{Action, ActionKind};

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("unknown feature index {0}")]
    InvalidFeature(usize),
}

/// Actual state of the world: a position per entity, a value per feature,
/// and which robot currently carries which object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub positions: Vec<usize>,
    pub features: Vec<bool>,
    /// Object index -> robot index currently designated as its carrier.
    pub carried_by: BTreeMap<usize, usize>,
}

impl WorldState {
    /// World at the declared initial placement.
    pub fn initial(env: &EnvironmentSpec) -> Self {
        Self {
            positions: env.whats.iter().map(|w| w.initial_where).collect(),
            features: env.features.iter().map(|f| f.initial).collect(),
            carried_by: BTreeMap::new(),
        }
    }
}

/// What gets sent to a controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Move,
    Hold,
}

/// Target position and mode for one robot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlValue {
    pub actor: usize,
    pub target: usize,
    pub kind: ControlKind,
}

/// How a control played out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventOutcome {
    Executed,
    NoopOutOfReach,
    NoopBlocked,
    Hold,
}

/// One entity's position change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovedWhat {
    pub what: usize,
    pub from: usize,
    pub to: usize,
}

/// Trace record of one applied control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldEvent {
    pub outcome: EventOutcome,
    pub moved: Vec<MovedWhat>,
}

/// Converts a planner action into a control value. A stop becomes a hold at
/// the actor's current position.
pub fn action_to_control(action: &Action, world: &WorldState, _env: &EnvironmentSpec) -> ControlValue {
    match action.kind {
        ActionKind::Stop => ControlValue {
            actor: action.actor,
            target: world.positions[action.actor],
            kind: ControlKind::Hold,
        },
        ActionKind::MoveTo(target) => ControlValue {
            actor: action.actor,
            target,
            kind: ControlKind::Move,
        },
    }
}

/// Applies one control. Moves outside the actor's reach, and moves matching
/// an active block rule, leave the world untouched and only produce an
/// event. A successful move takes along every object co-located with the
/// actor and updates carrier bookkeeping.
pub fn apply_control(
    world: &WorldState,
    control: &ControlValue,
    env: &EnvironmentSpec,
) -> (WorldState, WorldEvent) {
    if control.kind == ControlKind::Hold {
        return (
            world.clone(),
            WorldEvent {
                outcome: EventOutcome::Hold,
                moved: Vec::new(),
            },
        );
    }

    let actor = control.actor;
    let target = control.target;
    if !env.whats[actor].reach.contains(&target) {
        return (
            world.clone(),
            WorldEvent {
                outcome: EventOutcome::NoopOutOfReach,
                moved: Vec::new(),
            },
        );
    }

    let origin = world.positions[actor];
    let carrying = env.carry
        && env
            .non_controllables()
            .iter()
            .any(|&o| world.positions[o] == origin);
    let blocked = env.block_rules.iter().any(|rule| {
        rule.actor == actor
            && rule.destination == target
            && world.features[rule.feature] == rule.value
            && (!rule.carrying_only || carrying)
    });
    if blocked {
        return (
            world.clone(),
            WorldEvent {
                outcome: EventOutcome::NoopBlocked,
                moved: Vec::new(),
            },
        );
    }

    let mut next = world.clone();
    let mut moved = Vec::new();
    next.positions[actor] = target;
    if origin != target {
        moved.push(MovedWhat {
            what: actor,
            from: origin,
            to: target,
        });
    }
    if env.carry {
        for o in env.non_controllables() {
            if world.positions[o] == origin {
                next.positions[o] = target;
                next.carried_by.insert(o, actor);
                if origin != target {
                    moved.push(MovedWhat {
                        what: o,
                        from: origin,
                        to: target,
                    });
                }
            }
        }
    }
    // Arriving at an object's cell makes the actor its designated carrier,
    // releasing any previous carrier.
    for o in env.non_controllables() {
        if next.positions[o] == target {
            next.carried_by.insert(o, actor);
        }
    }

    (
        next,
        WorldEvent {
            outcome: EventOutcome::Executed,
            moved,
        },
    )
}

/// Noiseless observation: the exact position index per entity followed by
/// the exact value per feature.
pub fn observe(world: &WorldState, env: &EnvironmentSpec) -> Vec<usize> {
    let mut out = world.positions.clone();
    out.extend(world.features.iter().map(|&v| v as usize));
    let _ = env;
    out
}

/// Replaces one feature value, leaving positions untouched. Exogenous
/// changes arrive through the scenario schedule, never through actions.
pub fn set_feature(
    world: &WorldState,
    feature: usize,
    value: bool,
) -> Result<WorldState, WorldError> {
    if feature >= world.features.len() {
        return Err(WorldError::InvalidFeature(feature));
    }
    let mut next = world.clone();
    next.features[feature] = value;
    Ok(next)
}
