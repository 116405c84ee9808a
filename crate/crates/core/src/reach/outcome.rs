//! How a scope can finish: by falling through to the next sibling, by a
//! `break` that leaves the nearest enclosing loop, or by a return message
//! that ends the use case.

use std::ops::{BitAnd, BitOr};

use crate::model::{Branch, Element, FragmentKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct Outcomes(u8);

impl Outcomes {
    pub const NONE: Outcomes = Outcomes(0);
    pub const NORMAL: Outcomes = Outcomes(1);
    pub const BREAK: Outcomes = Outcomes(2);
    pub const RETURN: Outcomes = Outcomes(4);

    pub fn contains(self, other: Outcomes) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn intersects(self, other: Outcomes) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    fn each(self) -> impl Iterator<Item = Outcomes> {
        [Outcomes::NORMAL, Outcomes::BREAK, Outcomes::RETURN]
            .into_iter()
            .filter(move |o| self.intersects(*o))
    }

    /// Outcome of a fragment of `kind` whose branch finished with `self`.
    pub fn lift(self, kind: FragmentKind) -> Outcomes {
        self.each()
            .map(|o| match (kind, o) {
                (FragmentKind::Loop, Outcomes::BREAK) => Outcomes::NORMAL,
                (FragmentKind::Break, Outcomes::NORMAL) => Outcomes::BREAK,
                (_, o) => o,
            })
            .fold(Outcomes::NONE, |a, b| a | b)
    }

    /// Branch outcomes that make a fragment of `kind` finish within
    /// `accepted`.
    pub fn preimage(accepted: Outcomes, kind: FragmentKind) -> Outcomes {
        [Outcomes::NORMAL, Outcomes::BREAK]
            .into_iter()
            .filter(|o| accepted.intersects(o.lift(kind)))
            .fold(Outcomes::NONE, |a, b| a | b)
    }

    /// Combined outcome of a fragment given the outcomes of its branches.
    /// `opt` and `break` may be skipped entirely.
    pub fn of_fragment(kind: FragmentKind, branches: impl IntoIterator<Item = Outcomes>) -> Outcomes {
        let lifted = branches
            .into_iter()
            .map(|b| b.lift(kind))
            .fold(Outcomes::NONE, |a, b| a | b);
        match kind {
            FragmentKind::Opt | FragmentKind::Break => lifted | Outcomes::NORMAL,
            FragmentKind::Alt | FragmentKind::Loop => lifted,
        }
    }

    /// Outcomes of running `items` in order, each with the given outcomes.
    pub fn of_sequence(items: impl IntoIterator<Item = Outcomes>) -> Outcomes {
        let mut acc = Outcomes::NONE;
        for o in items {
            acc = acc | Outcomes(o.0 & !Outcomes::NORMAL.0);
            if !o.contains(Outcomes::NORMAL) {
                return acc;
            }
        }
        acc | Outcomes::NORMAL
    }
}

impl BitOr for Outcomes {
    type Output = Outcomes;
    fn bitor(self, rhs: Outcomes) -> Outcomes {
        Outcomes(self.0 | rhs.0)
    }
}

impl BitAnd for Outcomes {
    type Output = Outcomes;
    fn bitand(self, rhs: Outcomes) -> Outcomes {
        Outcomes(self.0 & rhs.0)
    }
}

pub fn element_outcomes(elem: &Element) -> Outcomes {
    match elem {
        Element::Message(_) => Outcomes::NORMAL,
        Element::Return(_) => Outcomes::RETURN,
        Element::Fragment(f) => {
            Outcomes::of_fragment(f.kind, f.branches.iter().map(|b| scope_outcomes(&b.elements)))
        }
    }
}

pub fn scope_outcomes(elems: &[Element]) -> Outcomes {
    Outcomes::of_sequence(elems.iter().map(element_outcomes))
}

/// A branch is a return branch when no execution of it lets the enclosing
/// fragment fall through to its next sibling: it ends in a return message,
/// or in a fragment that cannot complete normally. The body of a `break`
/// always leaves the enclosing scope once it runs.
pub fn is_return_branch(kind: FragmentKind, branch: &Branch) -> bool {
    !scope_outcomes(&branch.elements)
        .lift(kind)
        .contains(Outcomes::NORMAL)
}
