//! Shared test worlds: the two-arm transport grid used across the unit
//! tests, plus small synthetic environments.

use std::collections::BTreeSet;

use crate::env::{BlockRule, EnvironmentSpec, FeatureSpec, WhatEntry, WhatKind, WhereSpace};
use crate::math::LogPreference;
use crate::spaces::build_observation_space;

/// Grid points of the transport scene, grouped by who can reach them:
/// the first eight belong to UR5e, the next four to COBOTTA, the last
/// three to both.
pub const TRANSPORT_WHERES: [&str; 15] = [
    "P1", "UO", "P6", "P7", "P8", "P11", "P12", "P13", "CO", "P5", "P10", "P15", "Int.", "P9",
    "P14",
];

const UR5E_REACH: [&str; 11] = [
    "P1", "UO", "P6", "P7", "P8", "P11", "P12", "P13", "Int.", "P9", "P14",
];
const COBOTTA_REACH: [&str; 7] = ["CO", "P5", "P10", "P15", "Int.", "P9", "P14"];

fn reach_of(wheres: &WhereSpace, labels: &[&str]) -> BTreeSet<usize> {
    labels
        .iter()
        .map(|l| wheres.index_of(l).expect("known grid point"))
        .collect()
}

/// Two robot arms and one object on the fifteen-point grid.
pub fn transport_env() -> EnvironmentSpec {
    let wheres = WhereSpace::new(TRANSPORT_WHERES.iter().map(|s| s.to_string()).collect())
        .expect("labels are unique");
    let whats = vec![
        WhatEntry {
            label: "UR5e".into(),
            kind: WhatKind::Controllable,
            reach: reach_of(&wheres, &UR5E_REACH),
            initial_where: wheres.index_of("UO").unwrap(),
        },
        WhatEntry {
            label: "COBOTTA".into(),
            kind: WhatKind::Controllable,
            reach: reach_of(&wheres, &COBOTTA_REACH),
            initial_where: wheres.index_of("CO").unwrap(),
        },
        WhatEntry {
            label: "object".into(),
            kind: WhatKind::NonControllable,
            reach: BTreeSet::new(),
            initial_where: wheres.index_of("P7").unwrap(),
        },
    ];
    EnvironmentSpec::new(wheres, whats, vec![], vec![], true).expect("valid world")
}

/// The transport world plus COBOTTA's orientation feature and the rule that
/// blocks UR5e from carrying into P14 while COBOTTA faces the target.
pub fn transport_env_with_orientation() -> EnvironmentSpec {
    let base = transport_env();
    let features = vec![FeatureSpec {
        label: "orientation".into(),
        what: base.what_index("COBOTTA").unwrap(),
        values: ["facing-away".into(), "facing-target".into()],
        initial: false,
    }];
    let block_rules = vec![BlockRule {
        actor: base.what_index("UR5e").unwrap(),
        destination: base.wheres.index_of("P14").unwrap(),
        feature: 0,
        value: true,
        carrying_only: true,
    }];
    EnvironmentSpec::new(base.wheres, base.whats, features, block_rules, true)
        .expect("valid world")
}

/// `n` interchangeable robots on `m` grid points, everything reachable.
pub fn minimal_env(n: usize, m: usize) -> EnvironmentSpec {
    let wheres = WhereSpace::new((0..m).map(|i| format!("w{i}")).collect()).unwrap();
    let whats = (0..n)
        .map(|i| WhatEntry {
            label: format!("bot{i}"),
            kind: WhatKind::Controllable,
            reach: (0..m).collect(),
            initial_where: 0,
        })
        .collect();
    EnvironmentSpec::new(wheres, whats, vec![], vec![], true).unwrap()
}

/// A single self-propelled entity on two grid points.
pub fn single_entity_env(initial: &str) -> EnvironmentSpec {
    let wheres = WhereSpace::new(vec!["w1".into(), "w2".into()]).unwrap();
    let initial_where = wheres.index_of(initial).expect("w1 or w2");
    let whats = vec![WhatEntry {
        label: "object".into(),
        kind: WhatKind::Controllable,
        reach: [0, 1].into_iter().collect(),
        initial_where,
    }];
    EnvironmentSpec::new(wheres, whats, vec![], vec![], true).unwrap()
}

/// Flat (all-zero) preference per modality.
pub fn uniform_preferences(env: &EnvironmentSpec) -> Vec<LogPreference> {
    build_observation_space(env)
        .modalities
        .iter()
        .map(|m| LogPreference::uniform(m.levels))
        .collect()
}
