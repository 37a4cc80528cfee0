//! The outer perception/action loop. Per timestep: apply scheduled
//! preference and feature changes, then let each owner in turn infer the
//! state, enumerate and score policies, and choose an action; the first
//! owner whose chosen action is its own converts it to a control, the
//! simulator applies it, and the remaining owners sit the timestep out.
//! If nobody's action passes the actor gate, the world holds still.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{
    enumerate_policies, evaluate_policies, infer_state, is_actor, policy_posterior, select_policy,
    Belief, EngineError, PruneRules,
};
use crate::env::{EnvError, EnvironmentSpec};
use crate::math::{LogPreference, MathError};
use crate::model::{build_generative_model, GenerativeModel};
use crate::scenario::{RunMode, ScenarioConfig};
use crate::spaces::FactorKind;
use crate::trace::{
    ControlRecord, EventRecord, FeatureSummary, MovedRecord, ObsRecord, OwnerRecord, TraceHeader,
    TraceLog, TraceRecord, WhatSummary,
};
use crate::world::{action_to_control, apply_control, observe, set_feature, WorldError, WorldState};

/// Logit awarded to the preferred grid point; everything else stays at 0.
pub const PREFERENCE_GAIN: f64 = 4.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Env(#[from] EnvError),

    #[error(transparent)]
    Engine(#[from] EngineError),

    #[error(transparent)]
    World(#[from] WorldError),

    #[error(transparent)]
    Math(#[from] MathError),
}

/// Preference logits over one position modality: the target grid point gets
/// [`PREFERENCE_GAIN`], all other points 0. A target the world cannot
/// express (outside a restricted range) yields a flat preference.
pub fn preference_logits(env: &EnvironmentSpec, target: &str) -> LogPreference {
    let mut logits = vec![0.0; env.where_count()];
    if let Some(w) = env.wheres.index_of(target) {
        logits[w] = PREFERENCE_GAIN;
    }
    LogPreference::new(logits).expect("finite logits")
}

fn uniform_preferences(env: &EnvironmentSpec) -> Vec<LogPreference> {
    let mut prefs = vec![LogPreference::uniform(env.where_count()); env.what_count()];
    prefs.extend(env.features.iter().map(|_| LogPreference::uniform(2)));
    prefs
}

fn belief_labels(env: &EnvironmentSpec, model: &GenerativeModel, belief: &Belief) -> Vec<String> {
    model
        .states
        .factors
        .iter()
        .zip(&belief.factors)
        .map(|(factor, dist)| match factor.kind {
            FactorKind::Location { .. } => env.wheres.label(dist.argmax()).to_string(),
            FactorKind::Feature { feature } => {
                env.features[feature].values[dist.argmax()].clone()
            }
        })
        .collect()
}

fn observation_records(env: &EnvironmentSpec, observation: &[usize]) -> Vec<ObsRecord> {
    let n = env.what_count();
    observation
        .iter()
        .enumerate()
        .map(|(k, &outcome)| {
            if k < n {
                ObsRecord {
                    of: env.whats[k].label.clone(),
                    at: env.wheres.label(outcome).to_string(),
                }
            } else {
                let feature = &env.features[k - n];
                ObsRecord {
                    of: feature.label.clone(),
                    at: feature.values[outcome].clone(),
                }
            }
        })
        .collect()
}

fn header_for(config: &ScenarioConfig, env: &EnvironmentSpec, owners: &[usize]) -> TraceHeader {
    TraceHeader {
        scenario: config.name.clone(),
        mode: config.mode.to_string(),
        timesteps: config.timesteps,
        horizon: config.horizon,
        precision: config.precision,
        selection: config.selection,
        seed: config.seed,
        pruning: config.pruning,
        wheres: env.wheres.labels().to_vec(),
        whats: env
            .whats
            .iter()
            .map(|w| WhatSummary {
                label: w.label.clone(),
                controllable: w.is_controllable(),
                initial: env.wheres.label(w.initial_where).to_string(),
            })
            .collect(),
        features: env
            .features
            .iter()
            .map(|f| FeatureSummary {
                label: f.label.clone(),
                values: f.values.clone(),
                initial: f.values[f.initial as usize].clone(),
            })
            .collect(),
        owner_order: owners
            .iter()
            .map(|&o| env.whats[o].label.clone())
            .collect(),
    }
}

/// Executes a scenario and returns the full trace.
pub fn run(config: &ScenarioConfig) -> Result<TraceLog, RunError> {
    // Agent-centric mode plans and acts inside the agent's restricted view.
    let env = match &config.mode {
        RunMode::Ecaif => config.env.clone(),
        RunMode::AgentCentric { agent } => {
            let idx = config
                .env
                .what_index(agent)
                .ok_or_else(|| EnvError::Configuration(format!("unknown entity {agent:?}")))?;
            config.env.restrict_to_agent(idx)?
        }
    };

    // Owner iteration order, restricted to entities that survived the mode.
    let owners: Vec<usize> = config
        .owner_order
        .iter()
        .filter_map(|label| env.what_index(label))
        .filter(|&i| env.whats[i].is_controllable())
        .collect();

    let mut models: Vec<GenerativeModel> = owners
        .iter()
        .map(|&owner| {
            build_generative_model(
                &env,
                owner,
                uniform_preferences(&env),
                config.horizon,
                config.precision,
            )
        })
        .collect::<Result<_, _>>()?;

    let mut world = WorldState::initial(&env);

    // Timestep-0 schedule entries configure the initial models and world.
    apply_preferences(&env, &mut models, &owners, config, 0)?;
    for entry in config.feature_schedule.iter().filter(|e| e.timestep == 0) {
        if let Some(feature) = env.feature_index(&entry.feature) {
            world = set_feature(&world, feature, entry.value)?;
        }
    }

    let mut beliefs: Vec<Belief> = models.iter().map(Belief::from_prior).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut observation = observe(&world, &env);
    let header = header_for(config, &env, &owners);
    let mut records = Vec::with_capacity(config.timesteps);

    for timestep in 1..=config.timesteps {
        apply_preferences(&env, &mut models, &owners, config, timestep)?;
        for entry in config
            .feature_schedule
            .iter()
            .filter(|e| e.timestep == timestep)
        {
            if let Some(feature) = env.feature_index(&entry.feature) {
                world = set_feature(&world, feature, entry.value)?;
            }
        }

        let mut owner_records = Vec::with_capacity(owners.len());
        let mut control_record = None;
        let mut event_record = None;

        for (slot, &owner) in owners.iter().enumerate() {
            let model = &models[slot];
            let belief = infer_state(model, &beliefs[slot], &observation)?;
            beliefs[slot] = belief.clone();

            let rules = if config.pruning {
                PruneRules::from_belief(model, &belief)
            } else {
                PruneRules::none()
            };
            let policies = enumerate_policies(&model.actions, config.horizon, &rules)?;
            let g = evaluate_policies(model, &belief, &policies);
            let posterior = policy_posterior(&g, model.precision)?;
            let chosen = select_policy(&posterior, &policies, config.selection, &mut rng)?;
            let action_index = policies[chosen].actions[0];
            let action = *model.actions.get(action_index);
            let acted = is_actor(&action, owner);

            owner_records.push(OwnerRecord {
                owner: env.whats[owner].label.clone(),
                belief: belief_labels(&env, model, &belief),
                policy: policies[chosen].labels(&model.actions, &env),
                g: g[chosen],
                acted,
            });

            if acted {
                let control = action_to_control(&action, &world, &env);
                let (next, event) = apply_control(&world, &control, &env);
                world = next;
                control_record = Some(ControlRecord {
                    actor: env.whats[control.actor].label.clone(),
                    kind: control.kind,
                    target: env.wheres.label(control.target).to_string(),
                });
                event_record = Some(EventRecord {
                    outcome: event.outcome,
                    moved: event
                        .moved
                        .iter()
                        .map(|m| MovedRecord {
                            what: env.whats[m.what].label.clone(),
                            from: env.wheres.label(m.from).to_string(),
                            to: env.wheres.label(m.to).to_string(),
                        })
                        .collect(),
                });
                break;
            }
        }

        observation = observe(&world, &env);
        records.push(TraceRecord {
            timestep,
            owners: owner_records,
            control: control_record,
            event: event_record,
            observation: observation_records(&env, &observation),
        });
    }

    Ok(TraceLog { header, records })
}

fn apply_preferences(
    env: &EnvironmentSpec,
    models: &mut [GenerativeModel],
    owners: &[usize],
    config: &ScenarioConfig,
    timestep: usize,
) -> Result<(), RunError> {
    for entry in config
        .preference_schedule
        .iter()
        .filter(|e| e.timestep == timestep)
    {
        // Entities dropped by an agent-centric restriction have no modality
        // to prefer over; such entries are inert.
        let Some(modality) = env.what_index(&entry.what) else {
            continue;
        };
        let preference = preference_logits(env, &entry.target);
        for (slot, &owner) in owners.iter().enumerate() {
            let applies = match &entry.owner {
                Some(label) => env.whats[owner].label == *label,
                None => true,
            };
            if applies {
                models[slot].set_preference(modality, preference.clone())?;
            }
        }
    }
    Ok(())
}
