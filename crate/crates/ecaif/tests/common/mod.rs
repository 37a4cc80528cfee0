//! Shared helpers for the integration suites: scenario loading, trace
//! digests, seeded random world generation, and an independent
//! expected-free-energy oracle that works on the flattened joint state
//! space instead of the factored one.
#![allow(dead_code)] // each test target uses a different subset

use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ecaif::math::{entropy, kl_divergence_clamped, normalize, Categorical, LogPreference};
use ecaif::model::MixedRadix;
use ecaif::{
    Belief, EnvironmentSpec, GenerativeModel, Policy, TraceLog, WhatEntry, WhatKind, WhereSpace,
};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

/// Controls that actually moved something, as `Actor -> Target` strings.
pub fn executed_moves(trace: &TraceLog) -> Vec<String> {
    trace
        .records
        .iter()
        .filter_map(|r| r.control.as_ref())
        .filter(|c| c.kind == ecaif::ControlKind::Move)
        .map(|c| format!("Move({},{})", c.actor, c.target))
        .collect()
}

/// True when every control after the moves is a hold.
pub fn only_holds_after_moves(trace: &TraceLog) -> bool {
    let mut seen_hold = false;
    for record in &trace.records {
        match &record.control {
            Some(c) if c.kind == ecaif::ControlKind::Hold => seen_hold = true,
            Some(_) if seen_hold => return false,
            _ => {}
        }
    }
    true
}

/// The object's observed positions with consecutive repeats collapsed.
pub fn path_of(trace: &TraceLog, what: &str) -> Vec<String> {
    let mut path: Vec<String> = Vec::new();
    for record in &trace.records {
        for obs in &record.observation {
            if obs.of == what && path.last() != Some(&obs.at) {
                path.push(obs.at.clone());
            }
        }
    }
    path
}

/// A random but always-valid world description.
pub fn random_env(rng: &mut ChaCha8Rng, max_whats: usize, max_wheres: usize) -> EnvironmentSpec {
    let m = rng.gen_range(1..=max_wheres);
    let n = rng.gen_range(1..=max_whats);
    let wheres = WhereSpace::new((0..m).map(|i| format!("w{i}")).collect()).unwrap();

    let mut whats = Vec::new();
    for i in 0..n {
        // Keep at least one controllable entity.
        let controllable = i == 0 || rng.gen_bool(0.6);
        let initial_where = rng.gen_range(0..m);
        let reach: BTreeSet<usize> = if controllable {
            let mut reach: BTreeSet<usize> =
                (0..m).filter(|_| rng.gen_bool(0.5)).collect();
            reach.insert(initial_where);
            reach
        } else {
            BTreeSet::new()
        };
        whats.push(WhatEntry {
            label: format!("e{i}"),
            kind: if controllable {
                WhatKind::Controllable
            } else {
                WhatKind::NonControllable
            },
            reach,
            initial_where,
        });
    }

    EnvironmentSpec::new(wheres, whats, vec![], vec![], rng.gen_bool(0.8)).unwrap()
}

/// Random world that may additionally carry a binary feature and a block
/// rule conditioned on it.
pub fn random_env_with_features(
    rng: &mut ChaCha8Rng,
    max_whats: usize,
    max_wheres: usize,
) -> EnvironmentSpec {
    let base = random_env(rng, max_whats, max_wheres);
    if !rng.gen_bool(0.5) {
        return base;
    }
    let features = vec![ecaif::FeatureSpec {
        label: "flag".into(),
        what: rng.gen_range(0..base.what_count()),
        values: ["lo".into(), "hi".into()],
        initial: rng.gen_bool(0.5),
    }];
    let controllables = base.controllables();
    let actor = controllables[rng.gen_range(0..controllables.len())];
    let destinations: Vec<usize> = base.whats[actor].reach.iter().cloned().collect();
    let block_rules = vec![ecaif::BlockRule {
        actor,
        destination: destinations[rng.gen_range(0..destinations.len())],
        feature: 0,
        value: rng.gen_bool(0.5),
        carrying_only: rng.gen_bool(0.5),
    }];
    EnvironmentSpec::new(base.wheres, base.whats, features, block_rules, base.carry).unwrap()
}

/// A point belief at uniformly random factor levels.
pub fn random_point_belief(rng: &mut ChaCha8Rng, model: &GenerativeModel) -> Belief {
    Belief {
        factors: model
            .states
            .factors
            .iter()
            .map(|f| Categorical::delta(f.levels, rng.gen_range(0..f.levels)))
            .collect(),
    }
}

/// A fully random (usually spread-out) belief.
pub fn random_spread_belief(rng: &mut ChaCha8Rng, model: &GenerativeModel) -> Belief {
    Belief {
        factors: model
            .states
            .factors
            .iter()
            .map(|f| random_categorical(rng, f.levels))
            .collect(),
    }
}

pub fn random_categorical(rng: &mut ChaCha8Rng, len: usize) -> Categorical {
    let weights: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
    normalize(&weights).unwrap()
}

pub fn random_policy(rng: &mut ChaCha8Rng, actions: usize, max_len: usize) -> Policy {
    let len = rng.gen_range(1..=max_len);
    Policy {
        actions: (0..len).map(|_| rng.gen_range(0..actions)).collect(),
    }
}

/// A hand-built model with random stochastic unconditioned transitions,
/// random likelihoods (possibly with a different outcome count than the
/// factor has levels), random preferences, and a random prior.
pub fn random_stochastic_model(rng: &mut ChaCha8Rng) -> GenerativeModel {
    use ecaif::model::{ActionTransitions, FactorTransition, TransitionTable};
    use ecaif::spaces::{
        Action, ActionKind, ActionSpace, FactorKind, Modality, ModalityKind, ObservationSpace,
        StateFactor, StateSpace,
    };

    let factor_count = rng.gen_range(1..=3);
    let mut levels = Vec::new();
    let mut joint = 1usize;
    for _ in 0..factor_count {
        let l = rng.gen_range(2..=4);
        if joint * l > 64 {
            levels.push(2);
            joint *= 2;
        } else {
            levels.push(l);
            joint *= l;
        }
    }

    let states = StateSpace {
        factors: levels
            .iter()
            .enumerate()
            .map(|(k, &l)| StateFactor {
                label: format!("f{k}"),
                levels: l,
                kind: FactorKind::Location { what: k },
            })
            .collect(),
    };
    let outcome_counts: Vec<usize> = levels
        .iter()
        .map(|&l| if rng.gen_bool(0.3) { rng.gen_range(2..=4) } else { l })
        .collect();
    let observations = ObservationSpace {
        modalities: outcome_counts
            .iter()
            .enumerate()
            .map(|(k, &o)| Modality {
                label: format!("f{k}"),
                levels: o,
                kind: ModalityKind::Position { what: k },
            })
            .collect(),
    };
    let action_count = rng.gen_range(2..=4);
    let actions = ActionSpace {
        actions: (0..action_count)
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
    let likelihood = levels
        .iter()
        .zip(&outcome_counts)
        .map(|(&l, &o)| ecaif::Likelihood {
            columns: (0..l).map(|_| random_categorical(rng, o)).collect(),
        })
        .collect();
    let transitions = (0..action_count)
        .map(|_| ActionTransitions {
            factors: levels
                .iter()
                .map(|&l| {
                    FactorTransition::unconditioned(TransitionTable {
                        columns: (0..l).map(|_| random_categorical(rng, l)).collect(),
                    })
                })
                .collect(),
        })
        .collect();
    let preferences = outcome_counts
        .iter()
        .map(|&o| {
            LogPreference::new((0..o).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
        })
        .collect();
    let prior = levels
        .iter()
        .map(|&l| random_categorical(rng, l))
        .collect();

    GenerativeModel {
        owner: 0,
        observations,
        states,
        actions,
        likelihood,
        transitions,
        preferences,
        prior,
        horizon: 3,
        precision: 16.0,
    }
}

/// Expected free energy computed on the flattened joint state space: the
/// joint belief is advanced through the action's joint transition kernel,
/// then marginalized per factor for the per-step risk and ambiguity. This
/// never touches the factored prediction path.
pub fn joint_efe(model: &GenerativeModel, belief: &Belief, policy: &Policy) -> f64 {
    let levels: Vec<usize> = model.states.factors.iter().map(|f| f.levels).collect();
    let radix = MixedRadix::new(levels.clone());
    let joint_size: usize = levels.iter().product();

    // Product-measure joint belief.
    let mut joint: Vec<f64> = (0..joint_size)
        .map(|rank| {
            radix
                .unrank(rank)
                .iter()
                .zip(&belief.factors)
                .map(|(&x, f)| f.get(x))
                .product()
        })
        .collect();

    let soft: Vec<Categorical> = model.preferences.iter().map(|p| p.to_categorical()).collect();
    let mut g = 0.0;

    for &action in &policy.actions {
        let transitions = &model.transitions[action];
        let mut next = vec![0.0; joint_size];
        for (source, &mass) in joint.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let values = radix.unrank(source);
            let dists: Vec<&[f64]> = transitions
                .factors
                .iter()
                .enumerate()
                .map(|(k, ft)| {
                    let table = if ft.conditions.is_empty() {
                        &ft.tables[0]
                    } else {
                        let cond_radix = MixedRadix::new(
                            ft.conditions.iter().map(|&c| levels[c]).collect(),
                        );
                        let cond_values: Vec<usize> =
                            ft.conditions.iter().map(|&c| values[c]).collect();
                        &ft.tables[cond_radix.rank(&cond_values)]
                    };
                    table.columns[values[k]].probs()
                })
                .collect();
            for (target, slot) in next.iter_mut().enumerate() {
                let target_values = radix.unrank(target);
                let p: f64 = target_values
                    .iter()
                    .zip(&dists)
                    .map(|(&v, d)| d[v])
                    .product();
                if p > 0.0 {
                    *slot += mass * p;
                }
            }
        }
        joint = next;

        // Per-factor marginals of the joint.
        let mut marginals: Vec<Vec<f64>> = levels.iter().map(|&l| vec![0.0; l]).collect();
        for (rank, &mass) in joint.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            for (k, &v) in radix.unrank(rank).iter().enumerate() {
                marginals[k][v] += mass;
            }
        }

        let mut risk = 0.0;
        let mut ambiguity = 0.0;
        for (k, likelihood) in model.likelihood.iter().enumerate() {
            let mut obs = vec![0.0; likelihood.outcome_count()];
            for (x, &p) in marginals[k].iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (o, &a) in likelihood.columns[x].probs().iter().enumerate() {
                    obs[o] += p * a;
                }
            }
            let obs = Categorical::new(obs).expect("marginal observation is a distribution");
            risk += kl_divergence_clamped(&obs, &soft[k]);
            for (x, &p) in marginals[k].iter().enumerate() {
                if p > 0.0 {
                    ambiguity += p * entropy(&likelihood.columns[x]);
                }
            }
        }
        g += risk + ambiguity;
    }
    g
}

/// Convenience: a deterministic generator for a named test.
pub fn rng_for(test: &str) -> ChaCha8Rng {
    let mut seed = 0u64;
    for b in test.bytes() {
        seed = seed.wrapping_mul(131).wrapping_add(b as u64);
    }
    ChaCha8Rng::seed_from_u64(seed)
}
