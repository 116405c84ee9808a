use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::model::{DiagCode, Diagnostic, Element, FragmentKind, LookupError, NodeId, UseCase};

/// Paths enumerated before the oracle refuses.
pub const ORACLE_PATH_BUDGET: usize = 1 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("use case `{usecase}` has more than {limit} execution paths")]
    Budget { usecase: String, limit: usize },
    #[error(transparent)]
    Lookup(#[from] LookupError),
}

impl From<OracleError> for Diagnostic {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::Budget { .. } => Diagnostic::new(DiagCode::OracleBudget, e.to_string()),
            OracleError::Lookup(l) => l.into(),
        }
    }
}

#[derive(Clone, Copy)]
enum Cont<'a> {
    Seq(&'a [Element], usize),
    /// Marks the end of a loop body; a break unwinds to here.
    LoopExit,
    /// Marks the end of a break body that ran.
    BreakExit,
}

struct Enumerator<'a> {
    usecase: &'a UseCase,
    budget: usize,
    paths: usize,
    /// `before[t]` = nodes seen strictly before `t` on some path.
    before: Vec<BTreeSet<usize>>,
}

impl<'a> Enumerator<'a> {
    fn order(&self, e: &Element) -> usize {
        self.usecase.doc_order(e.id().as_str()).expect("indexed element")
    }

    fn emit(&mut self, path: &[usize]) -> Result<(), OracleError> {
        self.paths += 1;
        if self.paths > self.budget {
            return Err(OracleError::Budget {
                usecase: self.usecase.name.clone(),
                limit: self.budget,
            });
        }
        for (i, &t) in path.iter().enumerate() {
            self.before[t].extend(path[..i].iter().copied());
        }
        Ok(())
    }

    /// Runs the continuation stack to the end of every path it can take.
    fn run(&mut self, mut stack: Vec<Cont<'a>>, mut path: Vec<usize>) -> Result<(), OracleError> {
        loop {
            let Some(cont) = stack.pop() else {
                return self.emit(&path);
            };
            match cont {
                Cont::LoopExit => {}
                Cont::BreakExit => loop {
                    match stack.pop() {
                        None => return self.emit(&path),
                        Some(Cont::LoopExit) => break,
                        Some(_) => {}
                    }
                },
                Cont::Seq(elems, i) => {
                    let Some(elem) = elems.get(i) else { continue };
                    stack.push(Cont::Seq(elems, i + 1));
                    path.push(self.order(elem));
                    match elem {
                        Element::Message(_) => {}
                        Element::Return(_) => return self.emit(&path),
                        Element::Fragment(f) => {
                            let body = |b: usize| Cont::Seq(&f.branches[b].elements, 0);
                            match f.kind {
                                FragmentKind::Alt => {
                                    for b in 0..f.branches.len() {
                                        let mut s = stack.clone();
                                        s.push(body(b));
                                        self.run(s, path.clone())?;
                                    }
                                    return Ok(());
                                }
                                FragmentKind::Opt => {
                                    self.run(stack.clone(), path.clone())?;
                                    for b in 0..f.branches.len() {
                                        stack.push(body(b));
                                    }
                                }
                                FragmentKind::Loop => {
                                    stack.push(Cont::LoopExit);
                                    for b in 0..f.branches.len() {
                                        stack.push(body(b));
                                    }
                                }
                                FragmentKind::Break => {
                                    self.run(stack.clone(), path.clone())?;
                                    stack.push(Cont::BreakExit);
                                    for b in 0..f.branches.len() {
                                        stack.push(body(b));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Brute-force predecessor sets for every node, by enumerating all
/// execution paths of the use case. Sets include `@input` for every
/// target other than `@input` itself.
pub fn oracle_all_predecessors(
    usecase: &UseCase,
) -> Result<BTreeMap<NodeId, BTreeSet<NodeId>>, OracleError> {
    oracle_with_budget(usecase, ORACLE_PATH_BUDGET)
}

pub(crate) fn oracle_with_budget(
    usecase: &UseCase,
    budget: usize,
) -> Result<BTreeMap<NodeId, BTreeSet<NodeId>>, OracleError> {
    let n = usecase.node_count();
    let mut en = Enumerator {
        usecase,
        budget,
        paths: 0,
        before: vec![BTreeSet::new(); n],
    };
    en.run(vec![Cont::Seq(&usecase.body, 0)], vec![0])?;
    let ids = usecase.node_ids();
    Ok(ids
        .iter()
        .enumerate()
        .map(|(t, id)| {
            let mut set: BTreeSet<NodeId> = en.before[t].iter().map(|&i| ids[i].clone()).collect();
            if t != 0 {
                set.insert(NodeId::input());
            }
            set.remove(id);
            (id.clone(), set)
        })
        .collect())
}

/// Ground-truth predecessor set of one target.
pub fn oracle_reachable_predecessors(
    usecase: &UseCase,
    target: &str,
) -> Result<BTreeSet<NodeId>, OracleError> {
    if !usecase.contains(target) {
        return Err(LookupError::UnknownNode {
            usecase: usecase.name.clone(),
            node: target.to_string(),
        }
        .into());
    }
    let mut all = oracle_all_predecessors(usecase)?;
    Ok(all.remove(target).unwrap_or_default())
}
