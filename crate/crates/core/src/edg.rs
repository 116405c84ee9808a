//! Execution dependency graph: hierarchical containment edges plus
//! sequential precedence edges over the nodes of one use case.

use std::collections::HashMap;

use crate::model::{Element, FragmentKind, LookupError, NodeId, NodeKind, UseCase};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Set for control nodes.
    pub fragment: Option<FragmentKind>,
    pub parent: Option<usize>,
    /// `(fragment index, branch index)` of the branch holding this node.
    pub branch: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgBranch {
    pub label: String,
    /// Direct children in execution order.
    pub members: Vec<usize>,
}

/// Nodes are stored in document order, so a node's index is its
/// `doc_order` and index 0 is the root `@input`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecutionDependencyGraph {
    usecase: String,
    nodes: Vec<EdgNode>,
    index: HashMap<NodeId, usize>,
    e_h: Vec<(usize, usize)>,
    e_s: Vec<(usize, usize)>,
    branches: Vec<Vec<EdgBranch>>,
    top_level: Vec<usize>,
    seq_preds: Vec<Vec<usize>>,
}

/// Builds the graph in two phases: containment edges from block nesting,
/// then sequential edges between consecutive siblings of each scope.
pub fn build_edg(usecase: &UseCase) -> ExecutionDependencyGraph {
    let mut g = ExecutionDependencyGraph {
        usecase: usecase.name.clone(),
        nodes: vec![EdgNode {
            id: NodeId::input(),
            kind: NodeKind::Input,
            fragment: None,
            parent: None,
            branch: None,
        }],
        index: HashMap::new(),
        e_h: Vec::new(),
        e_s: Vec::new(),
        branches: vec![Vec::new()],
        top_level: Vec::new(),
        seq_preds: vec![Vec::new()],
    };
    g.index.insert(NodeId::input(), 0);

    // Phase 1: hierarchy.
    let top = g.add_scope(&usecase.body, 0, None);
    g.top_level = top;

    // Phase 2: sequential edges, top scope first, then each fragment's
    // branches in document order.
    let mut scopes: Vec<Vec<usize>> = vec![g.top_level.clone()];
    for node in 0..g.nodes.len() {
        for b in &g.branches[node] {
            scopes.push(b.members.clone());
        }
    }
    for scope in scopes {
        for pair in scope.windows(2) {
            g.e_s.push((pair[0], pair[1]));
            g.seq_preds[pair[1]].push(pair[0]);
        }
    }
    g
}

impl ExecutionDependencyGraph {
    fn add_scope(&mut self, scope: &[Element], parent: usize, branch: Option<(usize, usize)>) -> Vec<usize> {
        let mut members = Vec::with_capacity(scope.len());
        for elem in scope {
            let idx = self.nodes.len();
            self.nodes.push(EdgNode {
                id: elem.id().clone(),
                kind: elem.kind(),
                fragment: match elem {
                    Element::Fragment(f) => Some(f.kind),
                    _ => None,
                },
                parent: Some(parent),
                branch,
            });
            self.index.insert(elem.id().clone(), idx);
            self.branches.push(Vec::new());
            self.seq_preds.push(Vec::new());
            self.e_h.push((parent, idx));
            members.push(idx);
            if let Element::Fragment(f) = elem {
                for (b, br) in f.branches.iter().enumerate() {
                    let inner = self.add_scope(&br.elements, idx, Some((idx, b)));
                    self.branches[idx].push(EdgBranch {
                        label: br.label.clone(),
                        members: inner,
                    });
                }
            }
        }
        members
    }

    pub fn usecase(&self) -> &str {
        &self.usecase
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(&self) -> &NodeId {
        &self.nodes[0].id
    }

    pub fn nodes(&self) -> &[EdgNode] {
        &self.nodes
    }

    pub fn node(&self, idx: usize) -> &EdgNode {
        &self.nodes[idx]
    }

    pub fn index_of(&self, id: &str) -> Result<usize, LookupError> {
        self.index.get(id).copied().ok_or_else(|| LookupError::UnknownNode {
            usecase: self.usecase.clone(),
            node: id.to_string(),
        })
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn kind(&self, id: &str) -> Result<NodeKind, LookupError> {
        self.index_of(id).map(|i| self.nodes[i].kind)
    }

    pub fn doc_order(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Hierarchical edges `(parent, child)` as indices.
    pub fn hierarchical(&self) -> &[(usize, usize)] {
        &self.e_h
    }

    /// Sequential edges `(predecessor, successor)` as indices.
    pub fn sequential(&self) -> &[(usize, usize)] {
        &self.e_s
    }

    pub fn hierarchical_edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> + '_ {
        self.e_h.iter().map(|&(a, b)| (&self.nodes[a].id, &self.nodes[b].id))
    }

    pub fn sequential_edges(&self) -> impl Iterator<Item = (&NodeId, &NodeId)> + '_ {
        self.e_s.iter().map(|&(a, b)| (&self.nodes[a].id, &self.nodes[b].id))
    }

    pub fn parent(&self, idx: usize) -> Option<usize> {
        self.nodes[idx].parent
    }

    pub fn seq_preds(&self, idx: usize) -> &[usize] {
        &self.seq_preds[idx]
    }

    /// Branches of a control node; empty for every other kind.
    pub fn branches(&self, idx: usize) -> &[EdgBranch] {
        &self.branches[idx]
    }

    pub fn top_level(&self) -> &[usize] {
        &self.top_level
    }

    /// Direct children of `idx` across all of its branches.
    pub fn children(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        if idx == 0 {
            return Box::new(self.top_level.iter().copied()) as Box<dyn Iterator<Item = usize>>;
        }
        Box::new(self.branches[idx].iter().flat_map(|b| b.members.iter().copied()))
    }

    /// `(fragment id, branch label)` of the branch directly holding `id`.
    pub fn branch_of(&self, id: &str) -> Result<Option<(&NodeId, &str)>, LookupError> {
        let idx = self.index_of(id)?;
        Ok(self.nodes[idx]
            .branch
            .map(|(f, b)| (&self.nodes[f].id, self.branches[f][b].label.as_str())))
    }

    /// Whether `ancestor` is a strict hierarchical ancestor of `idx`.
    pub fn is_ancestor(&self, ancestor: usize, mut idx: usize) -> bool {
        while let Some(p) = self.nodes[idx].parent {
            if p == ancestor {
                return true;
            }
            idx = p;
        }
        false
    }
}

/// Node ids sorted by their pre-order position in the source.
pub fn document_order(edg: &ExecutionDependencyGraph) -> Vec<NodeId> {
    edg.nodes.iter().map(|n| n.id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esd::parse_document;
    use std::collections::BTreeSet;

    fn edges<'a>(it: impl Iterator<Item = (&'a NodeId, &'a NodeId)>) -> BTreeSet<(String, String)> {
        it.map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn set(pairs: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn demo_edges() {
        let doc = parse_document(include_str!("../fixtures/demo.esd")).unwrap();
        let g = build_edg(&doc.usecases[0]);
        assert_eq!(
            edges(g.hierarchical_edges()),
            set(&[("@input", "m1"), ("@input", "f1"), ("@input", "r_ok"), ("f1", "r_err"), ("f1", "m2")])
        );
        assert_eq!(edges(g.sequential_edges()), set(&[("m1", "f1"), ("f1", "r_ok")]));
        let order: Vec<String> = document_order(&g).iter().map(|n| n.to_string()).collect();
        assert_eq!(order, ["@input", "m1", "f1", "r_err", "m2", "r_ok"]);
        let (frag, label) = g.branch_of("m2").unwrap().unwrap();
        assert_eq!((frag.as_str(), label), ("f1", "active"));
        assert!(g.branch_of("m1").unwrap().is_none());
    }

    #[test]
    fn minimal_usecase() {
        let doc = parse_document(
            "usecase \"U\" { input {} participant a message m from a to a api \"X\" return r {} }
             api \"X\" { description \"\" request {} response {} }",
        )
        .unwrap();
        let g = build_edg(&doc.usecases[0]);
        assert_eq!(edges(g.hierarchical_edges()), set(&[("@input", "m"), ("@input", "r")]));
        assert_eq!(edges(g.sequential_edges()), set(&[("m", "r")]));
    }

    #[test]
    fn single_return() {
        let doc = parse_document("usecase \"U\" { input {} participant a return r {} }").unwrap();
        let g = build_edg(&doc.usecases[0]);
        let order: Vec<String> = document_order(&g).iter().map(|n| n.to_string()).collect();
        assert_eq!(order, ["@input", "r"]);
        assert_eq!(g.sequential().len(), 0);
    }

    #[test]
    fn nested_alt_inside_opt() {
        let doc = parse_document(
            "usecase \"U\" { input {} participant a
               opt o {
                 message x from a to a api \"X\"
                 alt g {
                   branch \"l\" { message y1 from a to a api \"X\" message y2 from a to a api \"X\" }
                   branch \"r\" { message z from a to a api \"X\" }
                 }
                 message w from a to a api \"X\"
               }
               return r {} }
             api \"X\" { description \"\" request {} response {} }",
        )
        .unwrap();
        let g = build_edg(&doc.usecases[0]);
        for id in ["y1", "y2", "z"] {
            let idx = g.index_of(id).unwrap();
            assert_eq!(g.node(g.parent(idx).unwrap()).id, "g");
        }
        for &(a, b) in g.sequential() {
            let (ba, bb) = (g.node(a).branch, g.node(b).branch);
            if let (Some((fa, la)), Some((fb, lb))) = (ba, bb) {
                if fa == fb {
                    assert_eq!(la, lb);
                }
            }
        }
        assert_eq!(
            edges(g.sequential_edges()),
            set(&[("o", "r"), ("x", "g"), ("g", "w"), ("y1", "y2")])
        );
    }
}
