//! Environment-centric active inference for discrete transport tasks.
//!
//! The world is described declaratively — grid points, entities with reach
//! sets, optional binary features, and blocking rules — and everything else
//! is derived from it: observation variables as entity/place combinations,
//! hidden-state factors mirroring them, and a stop-or-move action per robot
//! and place. No entity is singled out as "the agent": every robot owns a
//! generative model of the whole scene, plans by minimizing expected free
//! energy over enumerated action sequences, and executes an action only
//! when that action is its own.
//!
//! The crate also ships a ground-truth simulator with carry and blocking
//! semantics, a scenario runner implementing the full perception/action
//! loop with preference and feature schedules, and trace tooling (timelines
//! and observation heatmaps). The agent-centric restriction of a world is
//! available as a baseline for comparison.

pub mod engine;
pub mod env;
pub mod math;
pub mod model;
pub mod runner;
pub mod scenario;
pub mod spaces;
pub mod trace;
pub mod world;

#[cfg(test)]
pub(crate) mod fixtures;

pub use engine::{
    enumerate_policies, evaluate_policies, expected_free_energy, expected_observation,
    infer_policy, infer_state, is_actor, policy_posterior, predict, select_action, select_policy,
    Belief, EngineError, Policy, PolicyEvaluation, PruneRules, SelectionMode, StepCost,
};
pub use env::{
    BlockRule, EnvError, EnvironmentSpec, FeatureSpec, WhatEntry, WhatKind, WhereSpace,
};
pub use math::{
    entropy, kl_divergence, normalize, softmax, Categorical, LogPreference, MathError,
};
pub use model::{
    build_generative_model, build_transitions, ActionTransitions, FactorTransition,
    GenerativeModel, Likelihood, TransitionTable,
};
pub use runner::{run, RunError};
pub use scenario::{load_scenario, parse_scenario, RunMode, ScenarioConfig, ScenarioError};
pub use spaces::{
    build_action_space, build_observation_space, build_state_space, Action, ActionKind,
    ActionSpace, Modality, ModalityKind, ObservationSpace, StateFactor, StateSpace,
};
pub use trace::{
    emit_heatmap, emit_timeline, ObservationHistogram, TimelineRow, TraceHeader, TraceLog,
    TraceRecord,
};
pub use world::{
    action_to_control, apply_control, observe, set_feature, ControlKind, ControlValue,
    EventOutcome, MovedWhat, WorldError, WorldEvent, WorldState,
};
