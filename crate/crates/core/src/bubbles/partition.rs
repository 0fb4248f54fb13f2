use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Assignment of the bubbles `1..=k` (1-based) to the `m` components.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub k: usize,
    pub groups: Vec<Vec<usize>>,
}

/// First violated admissibility condition, numbered 1 to 5, with the indices
/// that witness it.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("condition ({condition}) violated: {reason} (witness {witness:?})")]
pub struct PartitionViolation {
    pub condition: u8,
    pub witness: Vec<usize>,
    pub reason: &'static str,
}

impl Partition {
    pub fn new(k: usize, groups: Vec<Vec<usize>>) -> Self {
        Self { k, groups }
    }

    /// Odd bubbles in the first component, even ones in the second.
    pub fn odd_even(k: usize) -> Self {
        let odd = (1..=k).filter(|j| j % 2 == 1).collect();
        let even: Vec<usize> = (1..=k).filter(|j| j % 2 == 0).collect();
        let groups = if even.is_empty() { vec![odd] } else { vec![odd, even] };
        Self { k, groups }
    }

    pub fn m(&self) -> usize {
        self.groups.len()
    }

    /// Zero-based component index owning bubble `j` (1-based).
    pub fn component_of(&self, j: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&j))
    }

    pub fn validate(&self) -> Result<(), PartitionViolation> {
        validate_partition(self)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .groups
            .iter()
            .map(|g| format!("{{{}}}", g.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        write!(f, "k={} [{}]", self.k, parts.join(", "))
    }
}

/// Checks conditions (1) through (5) in order and reports the first failure.
pub fn validate_partition(p: &Partition) -> Result<(), PartitionViolation> {
    let fail = |condition, witness, reason| {
        Err(PartitionViolation {
            condition,
            witness,
            reason,
        })
    };
    if p.k == 0 || p.groups.is_empty() || p.groups.len() > p.k {
        return fail(2, vec![p.k, p.groups.len()], "need 1 <= m <= k");
    }
    // (1)
    if !p.groups[0].contains(&1) {
        return fail(1, vec![1], "bubble 1 must belong to the first component");
    }
    // (2)
    if let Some(i) = p.groups.iter().position(|g| g.is_empty()) {
        return fail(2, vec![i + 1], "empty component");
    }
    // (3)
    for i in 0..p.groups.len() {
        for j in i + 1..p.groups.len() {
            if let Some(&x) = p.groups[i].iter().find(|x| p.groups[j].contains(x)) {
                return fail(3, vec![x, i + 1, j + 1], "components overlap");
            }
        }
    }
    // (4)
    for g in &p.groups {
        if let Some(&x) = g.iter().find(|&&x| x == 0 || x > p.k) {
            return fail(4, vec![x], "index outside 1..=k");
        }
    }
    for j in 1..=p.k {
        if p.component_of(j).is_none() {
            return fail(4, vec![j], "bubble not assigned to any component");
        }
    }
    // (5)
    for g in &p.groups {
        let mut sorted = g.clone();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[1] == w[0] + 1 {
                return fail(5, vec![w[0], w[1]], "consecutive bubbles in one component");
            }
        }
    }
    Ok(())
}
