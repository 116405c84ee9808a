//! Reachable predecessor identification over an execution dependency graph,
//! and a path-enumeration oracle that defines the ground truth for it.
//!
//! A node `s` is a predecessor of `t` when some execution of the use case
//! visits `s` strictly before `t`. Alternative branches of an `alt` are
//! mutually exclusive, `opt` and `break` bodies may be skipped, a `loop`
//! body runs once, a `break` body leaves the nearest enclosing loop (or
//! the use case), and a return message ends the use case.

mod oracle;
mod outcome;

use std::collections::BTreeSet;

use num_traits::Float;
use serde::Serialize;

use crate::edg::ExecutionDependencyGraph;
use crate::model::{LookupError, NodeId, NodeKind};

pub use oracle::{oracle_all_predecessors, oracle_reachable_predecessors, OracleError, ORACLE_PATH_BUDGET};
pub use outcome::{element_outcomes, is_return_branch, scope_outcomes, Outcomes};

/// Pruned inference context of one target node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredecessorSet {
    pub target: NodeId,
    /// Members in document order.
    pub members: Vec<NodeId>,
    /// Node count of the use case including `@input` and the target.
    pub total_nodes: usize,
}

impl PredecessorSet {
    pub fn contains(&self, id: &str) -> bool {
        self.members.iter().any(|m| m == id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_set(&self) -> BTreeSet<NodeId> {
        self.members.iter().cloned().collect()
    }

    /// `|P(t)| / (|V| - 1)`.
    pub fn reduction_ratio<T: Float>(&self) -> T {
        let denom = self.total_nodes.saturating_sub(1).max(1);
        T::from(self.members.len()).unwrap() / T::from(denom).unwrap()
    }
}

/// Finishing behaviour of every node, children before parents.
fn node_outcomes(edg: &ExecutionDependencyGraph) -> Vec<Outcomes> {
    let mut out = vec![Outcomes::NONE; edg.len()];
    for idx in (0..edg.len()).rev() {
        let node = edg.node(idx);
        out[idx] = match node.kind {
            NodeKind::Input | NodeKind::Function => Outcomes::NORMAL,
            NodeKind::Output => Outcomes::RETURN,
            NodeKind::Control => {
                let kind = node.fragment.expect("control node without fragment kind");
                Outcomes::of_fragment(
                    kind,
                    edg.branches(idx)
                        .iter()
                        .map(|b| Outcomes::of_sequence(b.members.iter().map(|&m| out[m]))),
                )
            }
        };
    }
    out
}

/// True when the branch cannot let its fragment fall through to the next
/// sibling. See [`is_return_branch`] for the element-level form.
pub fn edg_is_return_branch(edg: &ExecutionDependencyGraph, fragment: usize, branch: usize) -> bool {
    let outcomes = node_outcomes(edg);
    let node = edg.node(fragment);
    let Some(kind) = node.fragment else {
        return false;
    };
    let b = &edg.branches(fragment)[branch];
    !Outcomes::of_sequence(b.members.iter().map(|&m| outcomes[m]))
        .lift(kind)
        .contains(Outcomes::NORMAL)
}

struct Traversal<'a> {
    edg: &'a ExecutionDependencyGraph,
    outcomes: Vec<Outcomes>,
    reached: Vec<bool>,
    visited: Vec<bool>,
}

impl Traversal<'_> {
    /// Walks containment parents and sequential predecessors; every
    /// sequential predecessor also contributes the parts of its subtree
    /// that can fall through to the next sibling.
    fn backward(&mut self, node: usize) {
        if self.visited[node] {
            return;
        }
        self.visited[node] = true;
        self.reached[node] = true;
        if let Some(p) = self.edg.parent(node) {
            self.backward(p);
        }
        for i in 0..self.edg.seq_preds(node).len() {
            let s = self.edg.seq_preds(node)[i];
            self.backward(s);
            self.explore_subtree(s, Outcomes::NORMAL);
        }
    }

    /// Adds the nodes under `node` that lie on some execution of `node`
    /// finishing with an outcome in `accepted`. Branches with no such
    /// execution (return branches) are skipped whole.
    fn explore_subtree(&mut self, node: usize, accepted: Outcomes) {
        let Some(kind) = self.edg.node(node).fragment else {
            return;
        };
        let branch_accepts = Outcomes::preimage(accepted, kind);
        if branch_accepts.is_empty() {
            return;
        }
        for b in 0..self.edg.branches(node).len() {
            let members = self.edg.branches(node)[b].members.clone();
            for (i, &child) in members.iter().enumerate() {
                let rest = Outcomes::of_sequence(members[i + 1..].iter().map(|&m| self.outcomes[m]));
                let mut child_accepts = branch_accepts & Outcomes::BREAK;
                if rest.intersects(branch_accepts) {
                    child_accepts = child_accepts | Outcomes::NORMAL;
                }
                if self.outcomes[child].intersects(child_accepts) {
                    self.reached[child] = true;
                    self.visited[child] = true;
                    self.explore_subtree(child, child_accepts);
                }
                if !self.outcomes[child].contains(Outcomes::NORMAL) {
                    break;
                }
            }
        }
    }
}

/// Reachable predecessors of `target`: backward traversal over containment
/// parents and sequential predecessors, subtree exploration of each
/// sequential predecessor with return branches filtered out, then removal
/// of the target itself. `@input` is always a member.
pub fn reachable_predecessors(
    edg: &ExecutionDependencyGraph,
    target: &str,
) -> Result<PredecessorSet, LookupError> {
    let t = edg.index_of(target)?;
    let mut tr = Traversal {
        edg,
        outcomes: node_outcomes(edg),
        reached: vec![false; edg.len()],
        visited: vec![false; edg.len()],
    };
    tr.backward(t);
    tr.reached[t] = false;
    if t != 0 {
        tr.reached[0] = true;
    }
    let members = tr
        .reached
        .iter()
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| edg.node(i).id.clone())
        .collect();
    Ok(PredecessorSet {
        target: edg.node(t).id.clone(),
        members,
        total_nodes: edg.len(),
    })
}

/// Predecessor sets of every node in document order (`@input` excluded).
pub fn all_predecessors(edg: &ExecutionDependencyGraph) -> Vec<PredecessorSet> {
    edg.nodes()
        .iter()
        .skip(1)
        .map(|n| reachable_predecessors(edg, n.id.as_str()).expect("node from graph"))
        .collect()
}

/// `|P(t)| / (|V| - 1)`: share of the other nodes kept as context.
pub fn context_reduction_ratio<T: Float>(
    edg: &ExecutionDependencyGraph,
    target: &str,
) -> Result<T, LookupError> {
    reachable_predecessors(edg, target).map(|p| p.reduction_ratio())
}
