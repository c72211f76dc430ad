//! Graph routines over the junior relation.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::model::{Role, RoleId};

pub(crate) type RoleTable = BTreeMap<RoleId, Role>;

/// True when `to` is reachable from `from` along junior edges (including `from == to`).
pub(crate) fn dominates(roles: &RoleTable, from: &RoleId, to: &RoleId) -> bool {
    if from == to {
        return true;
    }
    let mut seen = BTreeSet::new();
    let mut stack = vec![from];
    while let Some(cur) = stack.pop() {
        if !seen.insert(cur) {
            continue;
        }
        if let Some(role) = roles.get(cur) {
            for j in &role.juniors {
                if j == to {
                    return true;
                }
                stack.push(j);
            }
        }
    }
    false
}

/// Downward closure: every seed plus all transitive juniors.
pub(crate) fn closure<'a>(
    roles: &RoleTable,
    seeds: impl IntoIterator<Item = &'a RoleId>,
) -> BTreeSet<RoleId> {
    let mut out = BTreeSet::new();
    let mut queue: VecDeque<&RoleId> = seeds.into_iter().collect();
    while let Some(cur) = queue.pop_front() {
        let Some(role) = roles.get(cur) else { continue };
        if out.insert(cur.clone()) {
            queue.extend(role.juniors.iter());
        }
    }
    out
}

/// Longest senior-chain length for every role, or `None` if the relation has a cycle.
pub(crate) fn levels(roles: &RoleTable) -> Option<BTreeMap<RoleId, u32>> {
    let mut indegree: BTreeMap<&RoleId, usize> = roles.keys().map(|k| (k, 0)).collect();
    for role in roles.values() {
        for j in &role.juniors {
            *indegree.get_mut(j)? += 1;
        }
    }
    let mut queue: VecDeque<&RoleId> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(k, _)| *k)
        .collect();
    let mut level: BTreeMap<RoleId, u32> = BTreeMap::new();
    let mut visited = 0usize;
    while let Some(cur) = queue.pop_front() {
        visited += 1;
        let here = *level.entry(cur.clone()).or_insert(0);
        for j in &roles[cur].juniors {
            let slot = level.entry(j.clone()).or_insert(0);
            *slot = (*slot).max(here + 1);
            let d = indegree.get_mut(j)?;
            *d -= 1;
            if *d == 0 {
                queue.push_back(j);
            }
        }
    }
    (visited == roles.len()).then_some(level)
}
