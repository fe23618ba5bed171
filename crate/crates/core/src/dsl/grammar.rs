//! The finite search space: atom grid, guard predicates, node filters and
//! single-step productions.

use super::ast::{Extractor, Guard, Locator, NodeFilter, Pred};
use crate::nlp::PredicateKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    /// Atomic NLP predicates used everywhere a predicate is enumerated.
    pub atoms: Vec<PredicateKind>,
    pub ks: Vec<u32>,
    pub delimiters: Vec<char>,
    pub max_locator_depth: usize,
    pub max_extractor_depth: usize,
    /// Predicates tried in `Sat` guards, in enumeration order.
    pub guard_preds: Vec<Pred>,
    /// Filters tried in locator productions, in enumeration order.
    pub filters: Vec<NodeFilter>,
}

/// Knobs for the shape of the guard and filter spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub guard_negations: bool,
    pub guard_pairs: bool,
    pub filter_negations: bool,
    pub filter_pairs: bool,
}

impl Default for Shape {
    fn default() -> Self {
        Shape { guard_negations: true, guard_pairs: true, filter_negations: true, filter_pairs: false }
    }
}

impl Grammar {
    pub fn new(
        atoms: Vec<PredicateKind>,
        ks: Vec<u32>,
        delimiters: Vec<char>,
        max_locator_depth: usize,
        max_extractor_depth: usize,
        shape: Shape,
    ) -> Grammar {
        let guard_preds = guard_preds(&atoms, shape);
        let filters = filters(&atoms, shape);
        Grammar { atoms, ks, delimiters, max_locator_depth, max_extractor_depth, guard_preds, filters }
    }

    /// Every single-step extension of `e`; empty at the depth cap.
    pub fn extend_extractor(&self, e: &Extractor) -> Vec<Extractor> {
        if e.depth() >= self.max_extractor_depth {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.atoms.len() * (self.ks.len() + 1) + self.delimiters.len());
        for a in &self.atoms {
            for &k in &self.ks {
                out.push(Extractor::substring(e.clone(), Some(a.clone()), k));
            }
        }
        for a in &self.atoms {
            out.push(Extractor::filter(e.clone(), Pred::Atom(a.clone())));
        }
        let enclosing = match e {
            Extractor::Split(_, c) => Some(*c),
            _ => None,
        };
        for &c in &self.delimiters {
            if Some(c) != enclosing {
                out.push(Extractor::split(e.clone(), c));
            }
        }
        out
    }

    /// Every single-step extension of `l`; empty at the depth cap.
    pub fn extend_locator(&self, l: &Locator) -> Vec<Locator> {
        if l.depth() >= self.max_locator_depth {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(2 * self.filters.len());
        for f in &self.filters {
            out.push(Locator::children(l.clone(), f.clone()));
        }
        for f in &self.filters {
            out.push(Locator::descendants(l.clone(), f.clone()));
        }
        out
    }

    pub fn gen_guards(&self, l: &Locator) -> Vec<Guard> {
        let mut out = Vec::with_capacity(1 + self.guard_preds.len());
        out.push(Guard::IsSingleton(l.clone()));
        for p in &self.guard_preds {
            out.push(Guard::Sat(l.clone(), p.clone()));
        }
        out
    }

    /// All locators up to the depth cap, shallow first.
    pub fn all_locators(&self) -> Vec<Locator> {
        let mut out = vec![Locator::Root];
        let mut i = 0;
        while i < out.len() {
            let more = self.extend_locator(&out[i]);
            out.extend(more);
            i += 1;
        }
        out
    }

    /// All extractors up to the depth cap, shallow first.
    pub fn all_extractors(&self) -> Vec<Extractor> {
        let mut out = vec![Extractor::Content];
        let mut i = 0;
        while i < out.len() {
            let more = self.extend_extractor(&out[i]);
            out.extend(more);
            i += 1;
        }
        out
    }
}

fn guard_preds(atoms: &[PredicateKind], shape: Shape) -> Vec<Pred> {
    let mut out = vec![Pred::True];
    out.extend(atoms.iter().cloned().map(Pred::Atom));
    if shape.guard_negations {
        out.extend(atoms.iter().cloned().map(|a| Pred::negate(Pred::Atom(a))));
    }
    if shape.guard_pairs {
        for (i, a) in atoms.iter().enumerate() {
            for b in &atoms[i + 1..] {
                out.push(Pred::and(Pred::Atom(a.clone()), Pred::Atom(b.clone())));
            }
        }
        for (i, a) in atoms.iter().enumerate() {
            for b in &atoms[i + 1..] {
                out.push(Pred::or(Pred::Atom(a.clone()), Pred::Atom(b.clone())));
            }
        }
    }
    out
}

fn filters(atoms: &[PredicateKind], shape: Shape) -> Vec<NodeFilter> {
    let mut base = vec![NodeFilter::IsLeaf, NodeFilter::IsElem];
    for a in atoms {
        base.push(NodeFilter::MatchText(Pred::Atom(a.clone()), false));
        base.push(NodeFilter::MatchText(Pred::Atom(a.clone()), true));
    }
    let mut out = vec![NodeFilter::True];
    out.extend(base.iter().cloned());
    if shape.filter_negations {
        out.extend(base.iter().cloned().map(NodeFilter::negate));
    }
    if shape.filter_pairs {
        for (i, a) in base.iter().enumerate() {
            for b in &base[i + 1..] {
                out.push(NodeFilter::and(a.clone(), b.clone()));
            }
        }
        for (i, a) in base.iter().enumerate() {
            for b in &base[i + 1..] {
                out.push(NodeFilter::or(a.clone(), b.clone()));
            }
        }
    }
    out
}
