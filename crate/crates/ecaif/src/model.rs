//! Per-entity generative models assembled from an environment description:
//! identity likelihoods, action-conditioned factored transitions with
//! carry and blocking semantics, log preferences, and point priors.

use serde::{Deserialize, Serialize};

use crate::env::{EnvError, EnvironmentSpec};
use crate::math::{Categorical, LogPreference};
use crate::spaces::{
    build_action_space, build_observation_space, build_state_space, Action, ActionKind,
    ActionSpace, ObservationSpace, StateSpace,
};

/// Mixed-radix codec for assignments over a list of factor sizes; the last
/// component varies fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedRadix {
    sizes: Vec<usize>,
}

impl MixedRadix {
    pub fn new(sizes: Vec<usize>) -> Self {
        Self { sizes }
    }

    pub fn count(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn unrank(&self, mut rank: usize) -> Vec<usize> {
        let mut values = vec![0usize; self.sizes.len()];
        for k in (0..self.sizes.len()).rev() {
            values[k] = rank % self.sizes[k];
            rank /= self.sizes[k];
        }
        values
    }

    pub fn rank(&self, values: &[usize]) -> usize {
        debug_assert_eq!(values.len(), self.sizes.len());
        let mut rank = 0;
        for (k, &v) in values.iter().enumerate() {
            debug_assert!(v < self.sizes[k]);
            rank = rank * self.sizes[k] + v;
        }
        rank
    }
}

/// Column-stochastic map on one factor: `columns[src]` is the distribution
/// over the next level given current level `src`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub columns: Vec<Categorical>,
}

impl TransitionTable {
    pub fn identity(levels: usize) -> Self {
        Self {
            columns: (0..levels).map(|i| Categorical::delta(levels, i)).collect(),
        }
    }

    /// Applies the map to a distribution over current levels.
    pub fn push_forward(&self, current: &Categorical) -> Vec<f64> {
        let levels = self.columns.len();
        let mut out = vec![0.0; levels];
        for (src, col) in self.columns.iter().enumerate() {
            let w = current.get(src);
            if w == 0.0 {
                continue;
            }
            for (dst, &p) in col.probs().iter().enumerate() {
                out[dst] += w * p;
            }
        }
        out
    }

    pub fn is_deterministic(&self) -> bool {
        self.columns.iter().all(|c| c.as_delta().is_some())
    }
}

/// Transition of one factor under one action, optionally conditioned on the
/// current values of other factors. `tables` is indexed by the mixed-radix
/// rank of the conditioning assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTransition {
    pub conditions: Vec<usize>,
    pub tables: Vec<TransitionTable>,
}

impl FactorTransition {
    pub fn identity(levels: usize) -> Self {
        Self {
            conditions: Vec::new(),
            tables: vec![TransitionTable::identity(levels)],
        }
    }

    pub fn unconditioned(table: TransitionTable) -> Self {
        Self {
            conditions: Vec::new(),
            tables: vec![table],
        }
    }
}

/// Per-factor transition maps for a single action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTransitions {
    pub factors: Vec<FactorTransition>,
}

/// Observation likelihood for one modality: `columns[state]` is the
/// distribution over outcomes given the factor level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Likelihood {
    pub columns: Vec<Categorical>,
}

impl Likelihood {
    /// Noiseless one-to-one observation of the factor.
    pub fn identity(levels: usize) -> Self {
        Self {
            columns: (0..levels).map(|i| Categorical::delta(levels, i)).collect(),
        }
    }

    pub fn outcome_count(&self) -> usize {
        self.columns[0].len()
    }

    /// Probability of an outcome given a factor level.
    pub fn prob(&self, outcome: usize, state: usize) -> f64 {
        self.columns[state].get(outcome)
    }

    pub fn is_identity(&self) -> bool {
        self.columns
            .iter()
            .enumerate()
            .all(|(i, c)| c.as_delta() == Some(i))
    }
}

/// One controllable entity's categorical model of the whole environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    /// The controllable entity this model belongs to.
    pub owner: usize,
    pub observations: ObservationSpace,
    pub states: StateSpace,
    pub actions: ActionSpace,
    /// Likelihood per modality, aligned with the state factor of the same
    /// index.
    pub likelihood: Vec<Likelihood>,
    /// Transition maps per action, covering every actor's actions.
    pub transitions: Vec<ActionTransitions>,
    /// Log preference per modality.
    pub preferences: Vec<LogPreference>,
    /// Prior per factor.
    pub prior: Vec<Categorical>,
    pub horizon: usize,
    pub precision: f64,
}

impl GenerativeModel {
    pub fn factor_levels(&self) -> Vec<usize> {
        self.states.factors.iter().map(|f| f.levels).collect()
    }

    /// True when every transition column is a point mass; point beliefs
    /// then stay point beliefs under prediction.
    pub fn is_deterministic(&self) -> bool {
        self.transitions.iter().all(|at| {
            at.factors
                .iter()
                .all(|ft| ft.tables.iter().all(TransitionTable::is_deterministic))
        })
    }

    /// Replaces the preference for one modality.
    pub fn set_preference(
        &mut self,
        modality: usize,
        preference: LogPreference,
    ) -> Result<(), EnvError> {
        let levels = self
            .observations
            .modalities
            .get(modality)
            .ok_or_else(|| EnvError::Configuration(format!("modality {modality} out of range")))?
            .levels;
        if preference.len() != levels {
            return Err(EnvError::Configuration(format!(
                "preference length {} does not match modality levels {levels}",
                preference.len()
            )));
        }
        self.preferences[modality] = preference;
        Ok(())
    }
}

fn factor_sizes(env: &EnvironmentSpec) -> Vec<usize> {
    let m = env.where_count();
    let mut sizes = vec![m; env.what_count()];
    sizes.extend(std::iter::repeat_n(2, env.features.len()));
    sizes
}

fn validate_action(env: &EnvironmentSpec, action: &Action) -> Result<(), EnvError> {
    let entry = env
        .whats
        .get(action.actor)
        .ok_or_else(|| EnvError::InvalidAction(format!("actor index {} out of range", action.actor)))?;
    if !entry.is_controllable() {
        return Err(EnvError::InvalidAction(format!(
            "{} is not controllable",
            entry.label
        )));
    }
    if let ActionKind::MoveTo(w) = action.kind {
        if w >= env.where_count() {
            return Err(EnvError::InvalidAction(format!(
                "destination index {w} out of range"
            )));
        }
    }
    Ok(())
}

/// Builds the per-factor transition maps for one action.
///
/// A move drives the actor to its target when the target is inside the
/// actor's reach and no block rule fires; infeasible moves are no-ops with
/// maps identical to the actor's stop action. Non-controllable entities
/// co-located with the actor are carried along. Feature factors always
/// evolve by identity; only the scenario schedule changes them.
pub fn build_transitions(
    env: &EnvironmentSpec,
    action: &Action,
) -> Result<ActionTransitions, EnvError> {
    validate_action(env, action)?;

    let n = env.what_count();
    let sizes = factor_sizes(env);
    let identity_all = || ActionTransitions {
        factors: sizes.iter().map(|&s| FactorTransition::identity(s)).collect(),
    };

    let target = match action.kind {
        ActionKind::Stop => return Ok(identity_all()),
        ActionKind::MoveTo(w) => {
            if !env.whats[action.actor].reach.contains(&w) {
                return Ok(identity_all());
            }
            w
        }
    };

    // Block rules that can fire for this actor and destination. Rules that
    // require carrying are inert when the world does not carry at all.
    let rules: Vec<_> = env
        .block_rules
        .iter()
        .filter(|r| r.actor == action.actor && r.destination == target)
        .filter(|r| env.carry || !r.carrying_only)
        .collect();
    let rule_feature_factors: Vec<usize> = {
        let mut v: Vec<usize> = rules.iter().map(|r| n + r.feature).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let carried_factors: Vec<usize> = if env.carry {
        env.non_controllables()
    } else {
        Vec::new()
    };

    let mut factors = Vec::with_capacity(sizes.len());
    for (k, &levels) in sizes.iter().enumerate() {
        if k == action.actor {
            // Actor's own location: every level maps to the target unless a
            // block rule fires for that source location.
            let mut conditions = rule_feature_factors.clone();
            if rules.iter().any(|r| r.carrying_only) {
                conditions.extend(&carried_factors);
            }
            conditions.sort_unstable();
            conditions.dedup();
            factors.push(conditioned_tables(&sizes, &conditions, |assignment| {
                let columns = (0..levels)
                    .map(|src| {
                        // Cargo factors are only part of the conditioning when
                        // some rule needs the carrying status.
                        let carrying = carried_factors
                            .iter()
                            .any(|&f| assignment.get(&f) == Some(&src));
                        let blocked = rules.iter().any(|r| {
                            assignment[&(n + r.feature)] == r.value as usize
                                && (!r.carrying_only || carrying)
                        });
                        if blocked {
                            Categorical::delta(levels, src)
                        } else {
                            Categorical::delta(levels, target)
                        }
                    })
                    .collect();
                TransitionTable { columns }
            }));
        } else if k < n && !env.whats[k].is_controllable() && env.carry {
            // Carried object: moves with the actor when co-located and the
            // move is not blocked. Co-location implies the actor is carrying,
            // so carrying-only rules reduce to their feature condition here.
            let mut conditions = vec![action.actor];
            conditions.extend(&rule_feature_factors);
            conditions.sort_unstable();
            conditions.dedup();
            factors.push(conditioned_tables(&sizes, &conditions, |assignment| {
                let actor_at = assignment[&action.actor];
                let blocked = rules
                    .iter()
                    .any(|r| assignment[&(n + r.feature)] == r.value as usize);
                let columns = (0..levels)
                    .map(|src| {
                        if src == actor_at && !blocked {
                            Categorical::delta(levels, target)
                        } else {
                            Categorical::delta(levels, src)
                        }
                    })
                    .collect();
                TransitionTable { columns }
            }));
        } else {
            // Other robots, uncarried objects, and features stay put.
            factors.push(FactorTransition::identity(levels));
        }
    }
    Ok(ActionTransitions { factors })
}

fn conditioned_tables(
    sizes: &[usize],
    conditions: &[usize],
    build: impl Fn(&std::collections::BTreeMap<usize, usize>) -> TransitionTable,
) -> FactorTransition {
    if conditions.is_empty() {
        let table = build(&Default::default());
        return FactorTransition::unconditioned(table);
    }
    let radix = MixedRadix::new(conditions.iter().map(|&c| sizes[c]).collect());
    let tables = (0..radix.count())
        .map(|rank| {
            let values = radix.unrank(rank);
            let assignment = conditions.iter().cloned().zip(values).collect();
            build(&assignment)
        })
        .collect();
    FactorTransition {
        conditions: conditions.to_vec(),
        tables,
    }
}

/// Assembles the full generative model owned by one controllable entity:
/// identity likelihoods, transitions for every action of every actor, the
/// given preferences, and point priors at the declared initial positions
/// (uniform for feature factors until the first observation arrives).
pub fn build_generative_model(
    env: &EnvironmentSpec,
    owner: usize,
    preferences: Vec<LogPreference>,
    horizon: usize,
    precision: f64,
) -> Result<GenerativeModel, EnvError> {
    let entry = env
        .whats
        .get(owner)
        .ok_or_else(|| EnvError::Configuration(format!("entity index {owner} out of range")))?;
    if !entry.is_controllable() {
        return Err(EnvError::NotAController {
            label: entry.label.clone(),
        });
    }
    if horizon == 0 {
        return Err(EnvError::Configuration("horizon must be at least 1".into()));
    }
    if !(precision.is_finite() && precision > 0.0) {
        return Err(EnvError::Configuration(format!(
            "precision must be positive, got {precision}"
        )));
    }

    let observations = build_observation_space(env);
    let states = build_state_space(env);
    let actions = build_action_space(env);

    if preferences.len() != observations.modalities.len() {
        return Err(EnvError::Configuration(format!(
            "expected {} preferences, got {}",
            observations.modalities.len(),
            preferences.len()
        )));
    }
    for (modality, pref) in observations.modalities.iter().zip(&preferences) {
        if pref.len() != modality.levels {
            return Err(EnvError::Configuration(format!(
                "preference for modality {} has {} entries, expected {}",
                modality.label,
                pref.len(),
                modality.levels
            )));
        }
    }

    let likelihood = states
        .factors
        .iter()
        .map(|f| Likelihood::identity(f.levels))
        .collect();

    let transitions = actions
        .actions
        .iter()
        .map(|a| build_transitions(env, a))
        .collect::<Result<Vec<_>, _>>()?;

    let n = env.what_count();
    let prior = states
        .factors
        .iter()
        .enumerate()
        .map(|(k, f)| {
            if k < n {
                Categorical::delta(f.levels, env.whats[k].initial_where)
            } else {
                Categorical::uniform(f.levels)
            }
        })
        .collect();

    Ok(GenerativeModel {
        owner,
        observations,
        states,
        actions,
        likelihood,
        transitions,
        preferences,
        prior,
        horizon,
        precision,
    })
}
