//! State inference, policy enumeration, expected-free-energy scoring,
//! policy posteriors, and action selection.
//!
//! Scoring sums, over each future step of a policy, the divergence of the
//! predicted observations from the preferences (risk) plus the expected
//! observation-likelihood entropy (ambiguity). Lower is better. The policy
//! posterior is a tempered softmax of the negated scores.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{
    kl_divergence_clamped, normalize, softmax, Categorical, MathError, PROB_FLOOR,
};
use crate::model::{GenerativeModel, MixedRadix};
use crate::spaces::{Action, ActionKind, ActionSpace, FactorKind};

/// Cap on fixed-point sweeps during state inference.
const MAX_SWEEPS: usize = 16;
/// Entrywise convergence threshold for state inference.
const STATE_CONVERGENCE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid observation: {0}")]
    InvalidObservation(String),

    #[error("horizon must be at least 1, got {0}")]
    InvalidHorizon(usize),

    #[error("no policies to score")]
    NoPolicies,

    #[error("posterior has {posterior} entries but {policies} policies were given")]
    PosteriorMismatch { posterior: usize, policies: usize },

    #[error(transparent)]
    Math(#[from] MathError),
}

/// Factored posterior over the hidden state: one distribution per factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub factors: Vec<Categorical>,
}

impl Belief {
    /// The model's prior, before any observation.
    pub fn from_prior(model: &GenerativeModel) -> Self {
        Self {
            factors: model.prior.clone(),
        }
    }

    /// `Some(levels)` when every factor is a point mass.
    pub fn as_point(&self) -> Option<Vec<usize>> {
        self.factors.iter().map(Categorical::as_delta).collect()
    }
}

/// A candidate action sequence, one action index per future step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn labels(&self, actions: &ActionSpace, env: &crate::env::EnvironmentSpec) -> Vec<String> {
        self.actions
            .iter()
            .map(|&a| actions.get(a).label(env))
            .collect()
    }
}

/// Risk and ambiguity contributed by one future step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepCost {
    pub risk: f64,
    pub ambiguity: f64,
}

/// A policy together with its expected free energy and per-step breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub policy: Policy,
    /// Total expected free energy: the sum of every step's risk and
    /// ambiguity.
    pub g: f64,
    pub steps: Vec<StepCost>,
}

/// Optional enumeration filters. Both rules only ever discard policies that
/// are dominated under deterministic stop-first tie-breaking.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneRules {
    /// Believed location per entity; moves targeting the actor's own
    /// believed location are dropped.
    pub believed_locations: Option<Vec<usize>>,
    /// Drop policies that act again after stopping.
    pub stop_suffix: bool,
}

impl PruneRules {
    pub fn none() -> Self {
        Self::default()
    }

    /// Both rules enabled, with believed locations read off a belief.
    pub fn from_belief(model: &GenerativeModel, belief: &Belief) -> Self {
        let mut believed = Vec::new();
        for (k, factor) in model.states.factors.iter().enumerate() {
            if let FactorKind::Location { what } = factor.kind {
                if believed.len() <= what {
                    believed.resize(what + 1, 0);
                }
                believed[what] = belief.factors[k].argmax();
            }
        }
        Self {
            believed_locations: Some(believed),
            stop_suffix: true,
        }
    }
}

/// How the executed action is picked from the policy posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// First action of the lowest-index policy attaining the maximum
    /// posterior mass.
    Argmax,
    /// First action of a policy drawn from the posterior.
    Sample,
}

/// Per-factor Bayesian update from an observation.
///
/// Each factor's posterior is proportional to its (floored) prior times the
/// likelihood of the observed outcome. Factors are swept repeatedly until
/// the update settles, which with per-factor modalities happens after one
/// pass.
pub fn infer_state(
    model: &GenerativeModel,
    prior: &Belief,
    observation: &[usize],
) -> Result<Belief, EngineError> {
    if observation.len() != model.likelihood.len() {
        return Err(EngineError::InvalidObservation(format!(
            "expected {} outcomes, got {}",
            model.likelihood.len(),
            observation.len()
        )));
    }
    for (k, (&outcome, likelihood)) in observation.iter().zip(&model.likelihood).enumerate() {
        if outcome >= likelihood.outcome_count() {
            return Err(EngineError::InvalidObservation(format!(
                "outcome {outcome} out of range for modality {k}"
            )));
        }
    }

    let mut current = prior.factors.clone();
    for _ in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for (k, likelihood) in model.likelihood.iter().enumerate() {
            let weights: Vec<f64> = prior.factors[k]
                .probs()
                .iter()
                .enumerate()
                .map(|(x, &p)| p.max(PROB_FLOOR) * likelihood.prob(observation[k], x))
                .collect();
            let posterior = normalize(&weights).map_err(|_| {
                EngineError::InvalidObservation(format!(
                    "outcome {} has zero likelihood under every level of factor {k}",
                    observation[k]
                ))
            })?;
            for (old, new) in current[k].probs().iter().zip(posterior.probs()) {
                max_change = max_change.max((old - new).abs());
            }
            current[k] = posterior;
        }
        if max_change < STATE_CONVERGENCE_TOL {
            break;
        }
    }
    Ok(Belief { factors: current })
}

/// Enumerates action sequences of the given length in lexicographic order
/// over action indices, applying the pruning rules during generation.
pub fn enumerate_policies(
    actions: &ActionSpace,
    horizon: usize,
    rules: &PruneRules,
) -> Result<Vec<Policy>, EngineError> {
    if horizon < 1 {
        return Err(EngineError::InvalidHorizon(horizon));
    }
    let banned: Vec<bool> = actions
        .actions
        .iter()
        .map(|a| match (&rules.believed_locations, a.kind) {
            (Some(locations), ActionKind::MoveTo(w)) => locations.get(a.actor) == Some(&w),
            _ => false,
        })
        .collect();
    let stops: Vec<bool> = actions
        .actions
        .iter()
        .map(|a| a.kind == ActionKind::Stop)
        .collect();

    let mut out = Vec::new();
    let mut current = Vec::with_capacity(horizon);
    fill_policies(
        actions.len(),
        &banned,
        &stops,
        rules.stop_suffix,
        horizon,
        false,
        &mut current,
        &mut out,
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn fill_policies(
    action_count: usize,
    banned: &[bool],
    stops: &[bool],
    stop_suffix: bool,
    horizon: usize,
    stopped: bool,
    current: &mut Vec<usize>,
    out: &mut Vec<Policy>,
) {
    if current.len() == horizon {
        out.push(Policy {
            actions: current.clone(),
        });
        return;
    }
    for action in 0..action_count {
        if banned[action] {
            continue;
        }
        if stop_suffix && stopped && !stops[action] {
            continue;
        }
        current.push(action);
        fill_policies(
            action_count,
            banned,
            stops,
            stop_suffix,
            horizon,
            stopped || stops[action],
            current,
            out,
        );
        current.pop();
    }
}

/// One-step push of a belief through an action's transition maps.
///
/// Conditioned factors are averaged over the conditioning factors' current
/// distributions; with point beliefs this expectation is exact.
pub fn predict(model: &GenerativeModel, belief: &Belief, action: usize) -> Belief {
    let transitions = &model.transitions[action];
    let levels = model.factor_levels();
    let factors = transitions
        .factors
        .iter()
        .enumerate()
        .map(|(k, ft)| {
            let source = &belief.factors[k];
            let out = if ft.conditions.is_empty() {
                ft.tables[0].push_forward(source)
            } else {
                let radix = MixedRadix::new(ft.conditions.iter().map(|&c| levels[c]).collect());
                let mut acc = vec![0.0; levels[k]];
                for rank in 0..radix.count() {
                    let values = radix.unrank(rank);
                    let mut weight = 1.0;
                    for (ci, &c) in ft.conditions.iter().enumerate() {
                        weight *= belief.factors[c].get(values[ci]);
                        if weight == 0.0 {
                            break;
                        }
                    }
                    if weight == 0.0 {
                        continue;
                    }
                    let pushed = ft.tables[rank].push_forward(source);
                    for (i, v) in pushed.into_iter().enumerate() {
                        acc[i] += weight * v;
                    }
                }
                acc
            };
            Categorical::new(out).expect("stochastic maps preserve normalization")
        })
        .collect();
    Belief { factors }
}

/// Predicted observation distribution per modality: the likelihood applied
/// to the matching factor.
pub fn expected_observation(model: &GenerativeModel, belief: &Belief) -> Vec<Categorical> {
    model
        .likelihood
        .iter()
        .enumerate()
        .map(|(k, likelihood)| {
            let mut out = vec![0.0; likelihood.outcome_count()];
            for (x, &p) in belief.factors[k].probs().iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (o, &a) in likelihood.columns[x].probs().iter().enumerate() {
                    out[o] += p * a;
                }
            }
            Categorical::new(out).expect("likelihood columns are stochastic")
        })
        .collect()
}

/// Precomputed per-call quantities: softened preferences and the entropy of
/// each likelihood column.
struct EvalContext {
    soft_preferences: Vec<Categorical>,
    column_entropy: Vec<Vec<f64>>,
}

impl EvalContext {
    fn new(model: &GenerativeModel) -> Self {
        let soft_preferences = model
            .preferences
            .iter()
            .map(|p| p.to_categorical())
            .collect();
        let column_entropy = model
            .likelihood
            .iter()
            .map(|l| l.columns.iter().map(crate::math::entropy).collect())
            .collect();
        Self {
            soft_preferences,
            column_entropy,
        }
    }
}

fn step_cost(model: &GenerativeModel, belief: &Belief, ctx: &EvalContext) -> (f64, f64) {
    let observations = expected_observation(model, belief);
    let mut risk = 0.0;
    let mut ambiguity = 0.0;
    for (k, obs) in observations.iter().enumerate() {
        risk += kl_divergence_clamped(obs, &ctx.soft_preferences[k]);
        let mut expected_entropy = 0.0;
        for (x, &p) in belief.factors[k].probs().iter().enumerate() {
            if p > 0.0 {
                expected_entropy += p * ctx.column_entropy[k][x];
            }
        }
        ambiguity += expected_entropy;
    }
    (risk, ambiguity)
}

/// Scores one policy, rolling the belief forward step by step.
pub fn expected_free_energy(
    model: &GenerativeModel,
    belief: &Belief,
    policy: &Policy,
) -> PolicyEvaluation {
    let ctx = EvalContext::new(model);
    let mut rolled = belief.clone();
    let mut steps = Vec::with_capacity(policy.actions.len());
    let mut g = 0.0;
    for &action in &policy.actions {
        rolled = predict(model, &rolled, action);
        let (risk, ambiguity) = step_cost(model, &rolled, &ctx);
        steps.push(StepCost { risk, ambiguity });
        g += risk + ambiguity;
    }
    PolicyEvaluation {
        policy: policy.clone(),
        g,
        steps,
    }
}

/// Scores every policy in the list. Produces exactly the same numbers as
/// [`expected_free_energy`], sharing work across common policy prefixes and
/// memoizing per-state step costs when the model is deterministic and the
/// belief is a point mass.
pub fn evaluate_policies(
    model: &GenerativeModel,
    belief: &Belief,
    policies: &[Policy],
) -> Vec<f64> {
    let ctx = EvalContext::new(model);
    if model.is_deterministic() {
        if let Some(point) = belief.as_point() {
            if let Some(radix) = safe_radix(model) {
                return evaluate_point_policies(model, &ctx, &radix, &point, policies);
            }
        }
    }
    evaluate_dense_policies(model, &ctx, belief, policies)
}

fn safe_radix(model: &GenerativeModel) -> Option<MixedRadix> {
    let mut product: usize = 1;
    for factor in &model.states.factors {
        product = product.checked_mul(factor.levels)?;
    }
    let _ = product;
    Some(MixedRadix::new(model.factor_levels()))
}

fn evaluate_point_policies(
    model: &GenerativeModel,
    ctx: &EvalContext,
    radix: &MixedRadix,
    point: &[usize],
    policies: &[Policy],
) -> Vec<f64> {
    let levels = model.factor_levels();
    let belief_at = |rank: usize| {
        let values = radix.unrank(rank);
        Belief {
            factors: values
                .iter()
                .zip(&levels)
                .map(|(&v, &l)| Categorical::delta(l, v))
                .collect(),
        }
    };

    // (state, action) -> (next state, step cost)
    let mut memo: HashMap<(usize, usize), (usize, f64)> = HashMap::new();
    let root = radix.rank(point);
    let mut stack: Vec<(usize, f64)> = vec![(root, 0.0)];
    let mut previous: &[usize] = &[];
    let mut out = Vec::with_capacity(policies.len());

    for policy in policies {
        let shared = previous
            .iter()
            .zip(&policy.actions)
            .take_while(|(a, b)| a == b)
            .count();
        stack.truncate(shared + 1);
        for &action in &policy.actions[shared..] {
            let (state, g) = *stack.last().expect("stack starts with the root");
            let (next, cost) = *memo.entry((state, action)).or_insert_with(|| {
                let next_belief = predict(model, &belief_at(state), action);
                let next_point = next_belief
                    .as_point()
                    .expect("deterministic maps keep point beliefs pointed");
                let (risk, ambiguity) = step_cost(model, &next_belief, ctx);
                (radix.rank(&next_point), risk + ambiguity)
            });
            stack.push((next, g + cost));
        }
        out.push(stack.last().expect("policy has at least one step").1);
        previous = &policy.actions;
    }
    out
}

fn evaluate_dense_policies(
    model: &GenerativeModel,
    ctx: &EvalContext,
    belief: &Belief,
    policies: &[Policy],
) -> Vec<f64> {
    let mut stack: Vec<(Belief, f64)> = vec![(belief.clone(), 0.0)];
    let mut previous: &[usize] = &[];
    let mut out = Vec::with_capacity(policies.len());

    for policy in policies {
        let shared = previous
            .iter()
            .zip(&policy.actions)
            .take_while(|(a, b)| a == b)
            .count();
        stack.truncate(shared + 1);
        for &action in &policy.actions[shared..] {
            let (current, g) = stack.last().expect("stack starts with the root");
            let next = predict(model, current, action);
            let (risk, ambiguity) = step_cost(model, &next, ctx);
            let g = g + (risk + ambiguity);
            stack.push((next, g));
        }
        out.push(stack.last().expect("policy has at least one step").1);
        previous = &policy.actions;
    }
    out
}

/// Softmax of the negated scores at the given precision.
pub fn policy_posterior(g: &[f64], precision: f64) -> Result<Categorical, EngineError> {
    if g.is_empty() {
        return Err(EngineError::NoPolicies);
    }
    let negated: Vec<f64> = g.iter().map(|v| -v).collect();
    Ok(softmax(&negated, precision)?)
}

/// Scores the policies and returns the posterior over them.
pub fn infer_policy(
    model: &GenerativeModel,
    belief: &Belief,
    policies: &[Policy],
) -> Result<Categorical, EngineError> {
    if policies.is_empty() {
        return Err(EngineError::NoPolicies);
    }
    let g = evaluate_policies(model, belief, policies);
    policy_posterior(&g, model.precision)
}

/// Index of the policy the selection mode picks.
pub fn select_policy<R: Rng>(
    posterior: &Categorical,
    policies: &[Policy],
    mode: SelectionMode,
    rng: &mut R,
) -> Result<usize, EngineError> {
    if policies.is_empty() {
        return Err(EngineError::NoPolicies);
    }
    if posterior.len() != policies.len() {
        return Err(EngineError::PosteriorMismatch {
            posterior: posterior.len(),
            policies: policies.len(),
        });
    }
    Ok(match mode {
        SelectionMode::Argmax => posterior.argmax(),
        SelectionMode::Sample => {
            let draw: f64 = rng.gen();
            let mut cumulative = 0.0;
            let mut picked = posterior.len() - 1;
            for (i, &p) in posterior.probs().iter().enumerate() {
                cumulative += p;
                if draw < cumulative {
                    picked = i;
                    break;
                }
            }
            picked
        }
    })
}

/// First action of the selected policy, with a freshly seeded generator.
pub fn select_action(
    posterior: &Categorical,
    policies: &[Policy],
    mode: SelectionMode,
    seed: u64,
) -> Result<usize, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = select_policy(posterior, policies, mode, &mut rng)?;
    Ok(policies[policy].actions[0])
}

/// Whether the action belongs to the given entity. Its own stop counts.
pub fn is_actor(action: &Action, owner: usize) -> bool {
    action.actor == owner
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvironmentSpec;
    use crate::fixtures::{
        single_entity_env, transport_env, uniform_preferences,
    };
    use crate::math::LogPreference;
    use crate::model::{
        build_generative_model, ActionTransitions, FactorTransition, Likelihood,
    };
    use crate::spaces::{ObservationSpace, StateSpace};

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual} (tol {tol})"
        );
    }

    fn transport_model(owner: &str) -> (EnvironmentSpec, GenerativeModel) {
        let env = transport_env();
        let idx = env.what_index(owner).unwrap();
        let model =
            build_generative_model(&env, idx, uniform_preferences(&env), 4, 16.0).unwrap();
        (env, model)
    }

    fn action_index(env: &EnvironmentSpec, model: &GenerativeModel, label: &str) -> usize {
        model
            .actions
            .actions
            .iter()
            .position(|a| a.label(env) == label)
            .unwrap_or_else(|| panic!("no action labelled {label}"))
    }

    fn delta_belief(env: &EnvironmentSpec, positions: &[(&str, &str)]) -> Belief {
        let m = env.where_count();
        let factors = env
            .whats
            .iter()
            .map(|w| {
                let at = positions
                    .iter()
                    .find(|(label, _)| *label == w.label)
                    .map(|(_, place)| env.wheres.index_of(place).unwrap())
                    .unwrap_or(w.initial_where);
                Categorical::delta(m, at)
            })
            .collect();
        Belief { factors }
    }

    #[test]
    fn identity_likelihood_forces_delta_posterior() {
        let (env, model) = transport_model("UR5e");
        let p7 = env.wheres.index_of("P7").unwrap();
        let obs = vec![0, 0, p7];
        let posterior = infer_state(&model, &Belief::from_prior(&model), &obs).unwrap();
        assert_eq!(posterior.factors[2].as_delta(), Some(p7));
    }

    #[test]
    fn uniform_prior_still_gives_delta_under_identity_likelihood() {
        let (_env, model) = transport_model("UR5e");
        let uniform = Belief {
            factors: model.prior.iter().map(|p| Categorical::uniform(p.len())).collect(),
        };
        let posterior = infer_state(&model, &uniform, &[3, 5, 9]).unwrap();
        assert_eq!(posterior.as_point(), Some(vec![3, 5, 9]));
    }

    #[test]
    fn delta_posterior_regardless_of_conflicting_prior() {
        let (env, model) = transport_model("UR5e");
        let p12 = env.wheres.index_of("P12").unwrap();
        // Prior says the object is elsewhere; the observation wins outright.
        let prior = delta_belief(&env, &[("object", "P7")]);
        let posterior = infer_state(&model, &prior, &[0, 0, p12]).unwrap();
        assert_eq!(posterior.factors[2].as_delta(), Some(p12));
    }

    /// A free-standing one-factor model with a noisy two-level likelihood.
    fn noisy_binary_model() -> GenerativeModel {
        let observations = ObservationSpace {
            modalities: vec![crate::spaces::Modality {
                label: "signal".into(),
                levels: 2,
                kind: crate::spaces::ModalityKind::Position { what: 0 },
            }],
        };
        let states = StateSpace {
            factors: vec![crate::spaces::StateFactor {
                label: "signal".into(),
                levels: 2,
                kind: FactorKind::Location { what: 0 },
            }],
        };
        let actions = ActionSpace {
            actions: vec![Action {
                actor: 0,
                kind: ActionKind::Stop,
            }],
        };
        GenerativeModel {
            owner: 0,
            observations,
            states,
            actions,
            likelihood: vec![Likelihood {
                columns: vec![
                    Categorical::new(vec![0.9, 0.1]).unwrap(),
                    Categorical::new(vec![0.2, 0.8]).unwrap(),
                ],
            }],
            transitions: vec![ActionTransitions {
                factors: vec![FactorTransition::identity(2)],
            }],
            preferences: vec![LogPreference::uniform(2)],
            prior: vec![Categorical::uniform(2)],
            horizon: 1,
            precision: 1.0,
        }
    }

    #[test]
    fn noisy_likelihood_bayes_update() {
        let model = noisy_binary_model();
        let posterior = infer_state(&model, &Belief::from_prior(&model), &[0]).unwrap();
        // 0.45/0.55 and 0.10/0.55
        assert_close(posterior.factors[0].get(0), 0.8182, 1e-3);
        assert_close(posterior.factors[0].get(1), 0.1818, 1e-3);
    }

    #[test]
    fn out_of_range_observation_is_rejected() {
        let (_env, model) = transport_model("UR5e");
        let err = infer_state(&model, &Belief::from_prior(&model), &[0, 0, 99]).unwrap_err();
        assert!(matches!(err, EngineError::InvalidObservation(_)));
    }

    #[test]
    fn enumeration_counts() {
        let (_env, model) = transport_model("UR5e");
        let one = enumerate_policies(&model.actions, 1, &PruneRules::none()).unwrap();
        assert_eq!(one.len(), 32);
        let four = enumerate_policies(&model.actions, 4, &PruneRules::none()).unwrap();
        assert_eq!(four.len(), 1_048_576);
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let actions = ActionSpace {
            actions: (0..4)
                .map(|i| Action {
                    actor: 0,
                    kind: if i == 0 {
                        ActionKind::Stop
                    } else {
                        ActionKind::MoveTo(i - 1)
                    },
                })
                .collect(),
        };
        let policies = enumerate_policies(&actions, 2, &PruneRules::none()).unwrap();
        assert_eq!(policies.len(), 16);
        assert_eq!(policies[0].actions, vec![0, 0]);
        assert_eq!(policies[1].actions, vec![0, 1]);
        assert_eq!(policies[15].actions, vec![3, 3]);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let (_env, model) = transport_model("UR5e");
        assert!(matches!(
            enumerate_policies(&model.actions, 0, &PruneRules::none()).unwrap_err(),
            EngineError::InvalidHorizon(0)
        ));
    }

    #[test]
    fn stop_suffix_rule_drops_stop_then_move() {
        let actions = ActionSpace {
            actions: vec![
                Action {
                    actor: 0,
                    kind: ActionKind::Stop,
                },
                Action {
                    actor: 0,
                    kind: ActionKind::MoveTo(0),
                },
            ],
        };
        let rules = PruneRules {
            believed_locations: None,
            stop_suffix: true,
        };
        let policies = enumerate_policies(&actions, 2, &rules).unwrap();
        let seqs: Vec<Vec<usize>> = policies.into_iter().map(|p| p.actions).collect();
        assert_eq!(seqs, vec![vec![0, 0], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn believed_location_rule_bans_moves_to_current_position() {
        let (env, model) = transport_model("UR5e");
        let belief = Belief::from_prior(&model);
        let rules = PruneRules::from_belief(&model, &belief);
        let policies = enumerate_policies(&model.actions, 1, &rules).unwrap();
        let uo = env.wheres.index_of("UO").unwrap();
        let co = env.wheres.index_of("CO").unwrap();
        let ur5e = env.what_index("UR5e").unwrap();
        let cobotta = env.what_index("COBOTTA").unwrap();
        assert_eq!(policies.len(), 30);
        for p in &policies {
            let action = model.actions.get(p.actions[0]);
            if let ActionKind::MoveTo(w) = action.kind {
                assert!(!(action.actor == ur5e && w == uo));
                assert!(!(action.actor == cobotta && w == co));
            }
        }
    }

    #[test]
    fn carry_prediction_moves_object_with_actor() {
        let (env, model) = transport_model("UR5e");
        let belief = delta_belief(&env, &[("UR5e", "P7"), ("object", "P7")]);
        let mv = action_index(&env, &model, "Move(UR5e,P12)");
        let next = predict(&model, &belief, mv);
        let p12 = env.wheres.index_of("P12").unwrap();
        assert_eq!(next.factors[0].as_delta(), Some(p12));
        assert_eq!(next.factors[2].as_delta(), Some(p12));
    }

    #[test]
    fn stop_prediction_changes_nothing() {
        let (env, model) = transport_model("UR5e");
        let belief = delta_belief(&env, &[("UR5e", "UO")]);
        let stop = action_index(&env, &model, "Stop(UR5e)");
        let next = predict(&model, &belief, stop);
        assert_eq!(next, belief);
    }

    /// Flattened joint push-forward used as an independent cross-check: the
    /// joint distribution is advanced state by state and then marginalized.
    fn joint_push_forward(model: &GenerativeModel, belief: &Belief, action: usize) -> Vec<Vec<f64>> {
        let levels = model.factor_levels();
        let radix = MixedRadix::new(levels.clone());
        let joint_size = radix.count();
        let joint: Vec<f64> = (0..joint_size)
            .map(|rank| {
                radix
                    .unrank(rank)
                    .iter()
                    .zip(&belief.factors)
                    .map(|(&v, f)| f.get(v))
                    .product()
            })
            .collect();
        let transitions = &model.transitions[action];
        let mut next = vec![0.0; joint_size];
        for (rank, &mass) in joint.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let values = radix.unrank(rank);
            // Per-factor next distributions given this exact joint source.
            let dists: Vec<Vec<f64>> = transitions
                .factors
                .iter()
                .enumerate()
                .map(|(k, ft)| {
                    let table = if ft.conditions.is_empty() {
                        &ft.tables[0]
                    } else {
                        let cond_radix =
                            MixedRadix::new(ft.conditions.iter().map(|&c| levels[c]).collect());
                        let cond_values: Vec<usize> =
                            ft.conditions.iter().map(|&c| values[c]).collect();
                        &ft.tables[cond_radix.rank(&cond_values)]
                    };
                    table.columns[values[k]].probs().to_vec()
                })
                .collect();
            // Accumulate the product measure.
            let mut idx = vec![0usize; levels.len()];
            loop {
                let p: f64 = idx.iter().zip(&dists).map(|(&i, d)| d[i]).product();
                if p > 0.0 {
                    next[radix.rank(&idx)] += mass * p;
                }
                let mut k = levels.len();
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    idx[k] += 1;
                    if idx[k] < levels[k] {
                        break;
                    }
                    idx[k] = 0;
                }
                if idx.iter().all(|&i| i == 0) {
                    break;
                }
            }
        }
        // Marginalize per factor.
        let mut marginals: Vec<Vec<f64>> = levels.iter().map(|&l| vec![0.0; l]).collect();
        for (rank, &mass) in next.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let values = radix.unrank(rank);
            for (k, &v) in values.iter().enumerate() {
                marginals[k][v] += mass;
            }
        }
        marginals
    }

    #[test]
    fn out_of_reach_prediction_is_identity_and_matches_joint_oracle() {
        let (env, model) = transport_model("UR5e");
        let belief = delta_belief(&env, &[("UR5e", "P7"), ("object", "P7")]);
        let mv = action_index(&env, &model, "Move(UR5e,P5)");
        let next = predict(&model, &belief, mv);
        assert_eq!(next, belief);

        let oracle = joint_push_forward(&model, &belief, mv);
        for (k, marginal) in oracle.iter().enumerate() {
            for (v, &p) in marginal.iter().enumerate() {
                assert_close(next.factors[k].get(v), p, 1e-12);
            }
        }
    }

    #[test]
    fn expected_observation_identity_cases() {
        let (env, model) = transport_model("UR5e");
        let p12 = env.wheres.index_of("P12").unwrap();
        let belief = delta_belief(&env, &[("object", "P12")]);
        let obs = expected_observation(&model, &belief);
        assert_eq!(obs[2].as_delta(), Some(p12));

        let mut spread = belief.clone();
        spread.factors[2] = Categorical::uniform(env.where_count());
        let obs = expected_observation(&model, &spread);
        assert_close(obs[2].get(p12), 1.0 / 15.0, 1e-12);
    }

    #[test]
    fn expected_observation_mixes_through_noisy_likelihood() {
        let model = noisy_binary_model();
        let belief = Belief {
            factors: vec![Categorical::uniform(2)],
        };
        let obs = expected_observation(&model, &belief);
        assert_close(obs[0].get(0), 0.55, 1e-12);
        assert_close(obs[0].get(1), 0.45, 1e-12);
    }

    fn preference_model(initial: &str) -> (EnvironmentSpec, GenerativeModel) {
        let env = single_entity_env(initial);
        let prefs = vec![LogPreference::new(vec![0.1f64.ln(), 0.9f64.ln()]).unwrap()];
        let owner = 0;
        let model = build_generative_model(&env, owner, prefs, 1, 16.0).unwrap();
        (env, model)
    }

    #[test]
    fn risk_is_divergence_from_preference() {
        let (env, model) = preference_model("w2");
        let stop = action_index(&env, &model, "Stop(object)");
        let eval = expected_free_energy(
            &model,
            &Belief::from_prior(&model),
            &Policy { actions: vec![stop] },
        );
        assert_close(eval.g, 0.10536, 1e-4);
        assert_eq!(eval.steps.len(), 1);
        assert_eq!(eval.steps[0].ambiguity, 0.0);
        assert_close(eval.steps[0].risk, 0.10536, 1e-4);
    }

    #[test]
    #[allow(clippy::approx_constant)] // frozen hand-derived oracle value
    fn risk_away_from_preference_is_larger() {
        let (env, model) = preference_model("w1");
        let stop = action_index(&env, &model, "Stop(object)");
        let eval = expected_free_energy(
            &model,
            &Belief::from_prior(&model),
            &Policy { actions: vec![stop] },
        );
        assert_close(eval.g, 2.30259, 1e-4);
    }

    #[test]
    fn uniform_preferences_make_all_policies_equal() {
        let (_env, model) = transport_model("UR5e");
        let belief = Belief::from_prior(&model);
        let policies = enumerate_policies(&model.actions, 2, &PruneRules::none()).unwrap();
        let g = evaluate_policies(&model, &belief, &policies);
        let min = g.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max - min <= 1e-9);
    }

    #[test]
    fn evaluation_invariant_g_equals_step_sum() {
        let (env, model) = transport_model("UR5e");
        let belief = delta_belief(&env, &[]);
        let policies = enumerate_policies(&model.actions, 3, &PruneRules::none()).unwrap();
        for policy in policies.iter().step_by(997) {
            let eval = expected_free_energy(&model, &belief, policy);
            let total: f64 = eval.steps.iter().map(|s| s.risk + s.ambiguity).sum();
            assert_close(eval.g, total, 1e-9);
        }
    }

    #[test]
    fn batch_scores_match_single_policy_scores() {
        let (env, mut model) = transport_model("UR5e");
        let target = env.wheres.index_of("P12").unwrap();
        let mut logits = vec![0.0; env.where_count()];
        logits[target] = 4.0;
        model
            .set_preference(2, LogPreference::new(logits).unwrap())
            .unwrap();

        let belief = delta_belief(&env, &[]);
        let policies = enumerate_policies(&model.actions, 2, &PruneRules::none()).unwrap();
        let batch = evaluate_policies(&model, &belief, &policies);
        for (i, policy) in policies.iter().enumerate().step_by(41) {
            let single = expected_free_energy(&model, &belief, policy);
            assert_eq!(batch[i], single.g, "policy {i} diverged");
        }

        // Same check through the dense path, forced by a spread belief.
        let mut spread = belief.clone();
        spread.factors[1] = Categorical::uniform(env.where_count());
        let dense = evaluate_policies(&model, &spread, &policies);
        for (i, policy) in policies.iter().enumerate().step_by(59) {
            let single = expected_free_energy(&model, &spread, policy);
            assert_eq!(dense[i], single.g, "policy {i} diverged (dense)");
        }
    }

    #[test]
    fn prediction_preserves_normalization() {
        let (env, model) = transport_model("UR5e");
        let mut belief = Belief::from_prior(&model);
        belief.factors[2] = Categorical::uniform(env.where_count());
        for action in 0..model.actions.len() {
            let next = predict(&model, &belief, action);
            for factor in &next.factors {
                let sum: f64 = factor.probs().iter().sum();
                assert_close(sum, 1.0, 1e-9);
            }
        }
    }

    #[test]
    fn posterior_hand_values() {
        let posterior = policy_posterior(&[1.0, 2.0], 1.0).unwrap();
        assert_close(posterior.get(0), 0.7311, 1e-4);
        assert_close(posterior.get(1), 0.2689, 1e-4);
    }

    #[test]
    fn posterior_uniform_when_scores_tie() {
        let posterior = policy_posterior(&[3.0, 3.0, 3.0], 16.0).unwrap();
        for i in 0..3 {
            assert_close(posterior.get(i), 1.0 / 3.0, 1e-12);
        }
    }

    #[test]
    fn posterior_concentrates_at_high_precision() {
        let posterior = policy_posterior(&[1.0, 2.0], 6.0).unwrap();
        assert!(posterior.get(0) > 0.99);
    }

    #[test]
    fn posterior_argmax_matches_score_argmin_at_any_precision() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..200 {
            let len = rng.gen_range(2..20);
            let g: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..10.0)).collect();
            let precision = rng.gen_range(0.01..50.0);
            let posterior = policy_posterior(&g, precision).unwrap();
            let argmin = g
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v < g[best] { i } else { best });
            assert_eq!(posterior.argmax(), argmin);
        }
    }

    #[test]
    fn empty_policy_list_is_rejected() {
        assert!(matches!(
            policy_posterior(&[], 1.0).unwrap_err(),
            EngineError::NoPolicies
        ));
    }

    #[test]
    fn argmax_selection_takes_first_action_of_best_policy() {
        let (env, model) = transport_model("UR5e");
        let policies = vec![
            Policy {
                actions: vec![
                    action_index(&env, &model, "Move(UR5e,P7)"),
                    action_index(&env, &model, "Move(UR5e,P12)"),
                ],
            },
            Policy {
                actions: vec![
                    action_index(&env, &model, "Stop(UR5e)"),
                    action_index(&env, &model, "Stop(UR5e)"),
                ],
            },
        ];
        let posterior = Categorical::delta(2, 0);
        let action = select_action(&posterior, &policies, SelectionMode::Argmax, 0).unwrap();
        assert_eq!(
            model.actions.get(action).label(&env),
            "Move(UR5e,P7)"
        );
    }

    #[test]
    fn tied_posterior_falls_back_to_first_policy() {
        let (env, model) = transport_model("UR5e");
        let policies = enumerate_policies(&model.actions, 1, &PruneRules::none()).unwrap();
        let posterior = Categorical::uniform(policies.len());
        let action = select_action(&posterior, &policies, SelectionMode::Argmax, 0).unwrap();
        // Policy zero starts with the first actor's stop.
        assert_eq!(model.actions.get(action).label(&env), "Stop(UR5e)");
    }

    #[test]
    fn sampling_is_deterministic_for_a_fixed_seed() {
        let (_env, model) = transport_model("UR5e");
        let policies = enumerate_policies(&model.actions, 1, &PruneRules::none()).unwrap();
        let posterior = Categorical::uniform(policies.len());
        let first = select_action(&posterior, &policies, SelectionMode::Sample, 42).unwrap();
        for _ in 0..5 {
            let again = select_action(&posterior, &policies, SelectionMode::Sample, 42).unwrap();
            assert_eq!(first, again);
        }
    }

    #[test]
    fn actor_gate() {
        let (env, model) = transport_model("UR5e");
        let ur5e = env.what_index("UR5e").unwrap();
        let cobotta = env.what_index("COBOTTA").unwrap();
        let move_cobotta = action_index(&env, &model, "Move(COBOTTA,Int.)");
        let stop_ur5e = action_index(&env, &model, "Stop(UR5e)");
        let move_ur5e = action_index(&env, &model, "Move(UR5e,P7)");
        assert!(!is_actor(model.actions.get(move_cobotta), ur5e));
        assert!(is_actor(model.actions.get(stop_ur5e), ur5e));
        assert!(is_actor(model.actions.get(move_ur5e), ur5e));
        assert!(is_actor(model.actions.get(move_cobotta), cobotta));
    }
}
