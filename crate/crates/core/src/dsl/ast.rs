use std::fmt;
use std::sync::Arc;

use crate::nlp::{EntityLabel, PredicateKind, TaskContext};

/// Boolean formula over NLP atoms, evaluated on a string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pred {
    True,
    Atom(PredicateKind),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
}

/// Boolean formula over node properties.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeFilter {
    True,
    IsLeaf,
    IsElem,
    /// Apply the predicate to the node's own text, or to its whole subtree text.
    MatchText(Pred, bool),
    And(Box<NodeFilter>, Box<NodeFilter>),
    Or(Box<NodeFilter>, Box<NodeFilter>),
    Not(Box<NodeFilter>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Locator {
    Root,
    Children(Arc<Locator>, NodeFilter),
    Descendants(Arc<Locator>, NodeFilter),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Guard {
    Sat(Locator, Pred),
    IsSingleton(Locator),
}

/// String pipeline over the located nodes. `Substring` takes an atom or,
/// with `None`, the trivially true predicate (the whole string).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Extractor {
    Content,
    Substring(Arc<Extractor>, Option<PredicateKind>, u32),
    Filter(Arc<Extractor>, Pred),
    Split(Arc<Extractor>, char),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Branch {
    pub guard: Guard,
    pub extractor: Extractor,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program {
    pub ctx: TaskContext,
    pub branches: Vec<Branch>,
}

impl Pred {
    pub fn atom(k: PredicateKind) -> Pred {
        Pred::Atom(k)
    }

    pub fn and(a: Pred, b: Pred) -> Pred {
        Pred::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Pred, b: Pred) -> Pred {
        Pred::Or(Box::new(a), Box::new(b))
    }

    pub fn negate(a: Pred) -> Pred {
        Pred::Not(Box::new(a))
    }

    pub fn atom_count(&self) -> usize {
        match self {
            Pred::True => 0,
            Pred::Atom(_) => 1,
            Pred::And(a, b) | Pred::Or(a, b) => a.atom_count() + b.atom_count(),
            Pred::Not(a) => a.atom_count(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Pred::True | Pred::Atom(_) => 1,
            Pred::And(a, b) | Pred::Or(a, b) => 1 + a.size() + b.size(),
            Pred::Not(a) => 1 + a.size(),
        }
    }

    pub fn atoms<'a>(&'a self, out: &mut Vec<&'a PredicateKind>) {
        match self {
            Pred::True => {}
            Pred::Atom(k) => out.push(k),
            Pred::And(a, b) | Pred::Or(a, b) => {
                a.atoms(out);
                b.atoms(out);
            }
            Pred::Not(a) => a.atoms(out),
        }
    }
}

impl NodeFilter {
    pub fn and(a: NodeFilter, b: NodeFilter) -> NodeFilter {
        NodeFilter::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: NodeFilter, b: NodeFilter) -> NodeFilter {
        NodeFilter::Or(Box::new(a), Box::new(b))
    }

    pub fn negate(a: NodeFilter) -> NodeFilter {
        NodeFilter::Not(Box::new(a))
    }

    /// Leaf properties (isLeaf, isElem, matchText) count as atoms.
    pub fn atom_count(&self) -> usize {
        match self {
            NodeFilter::True => 0,
            NodeFilter::IsLeaf | NodeFilter::IsElem | NodeFilter::MatchText(..) => 1,
            NodeFilter::And(a, b) | NodeFilter::Or(a, b) => a.atom_count() + b.atom_count(),
            NodeFilter::Not(a) => a.atom_count(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            NodeFilter::True | NodeFilter::IsLeaf | NodeFilter::IsElem => 1,
            NodeFilter::MatchText(p, _) => 1 + p.size(),
            NodeFilter::And(a, b) | NodeFilter::Or(a, b) => 1 + a.size() + b.size(),
            NodeFilter::Not(a) => 1 + a.size(),
        }
    }

    fn max_pred_atoms(&self) -> usize {
        match self {
            NodeFilter::True | NodeFilter::IsLeaf | NodeFilter::IsElem => 0,
            NodeFilter::MatchText(p, _) => p.atom_count(),
            NodeFilter::And(a, b) | NodeFilter::Or(a, b) => a.max_pred_atoms().max(b.max_pred_atoms()),
            NodeFilter::Not(a) => a.max_pred_atoms(),
        }
    }
}

impl Locator {
    pub fn children(inner: Locator, f: NodeFilter) -> Locator {
        Locator::Children(Arc::new(inner), f)
    }

    pub fn descendants(inner: Locator, f: NodeFilter) -> Locator {
        Locator::Descendants(Arc::new(inner), f)
    }

    /// `GetLeaves(ν)`.
    pub fn leaves(inner: Locator) -> Locator {
        Locator::descendants(inner, NodeFilter::IsLeaf)
    }

    /// Chain length; `GetRoot` has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Locator::Root => 1,
            Locator::Children(l, _) | Locator::Descendants(l, _) => 1 + l.depth(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Locator::Root => 1,
            Locator::Children(l, f) | Locator::Descendants(l, f) => 1 + l.size() + f.size(),
        }
    }

    pub(crate) fn filters(&self) -> Vec<&NodeFilter> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Locator::Children(l, f) | Locator::Descendants(l, f) = cur {
            out.push(f);
            cur = l;
        }
        out
    }
}

impl Guard {
    pub fn locator(&self) -> &Locator {
        match self {
            Guard::Sat(l, _) | Guard::IsSingleton(l) => l,
        }
    }

    pub fn depth(&self) -> usize {
        self.locator().depth()
    }

    pub fn size(&self) -> usize {
        match self {
            Guard::Sat(l, p) => 1 + l.size() + p.size(),
            Guard::IsSingleton(l) => 1 + l.size(),
        }
    }
}

impl Extractor {
    pub fn substring(inner: Extractor, p: Option<PredicateKind>, k: u32) -> Extractor {
        Extractor::Substring(Arc::new(inner), p, k)
    }

    pub fn filter(inner: Extractor, p: Pred) -> Extractor {
        Extractor::Filter(Arc::new(inner), p)
    }

    pub fn split(inner: Extractor, c: char) -> Extractor {
        Extractor::Split(Arc::new(inner), c)
    }

    /// `GetEntity(e, l)`.
    pub fn entity(inner: Extractor, l: EntityLabel) -> Extractor {
        Extractor::substring(inner, Some(PredicateKind::HasEntity(l)), 1)
    }

    /// Chain length; `ExtractContent` has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Extractor::Content => 1,
            Extractor::Substring(e, ..) | Extractor::Filter(e, _) | Extractor::Split(e, _) => 1 + e.depth(),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Extractor::Content => 1,
            Extractor::Substring(e, _, _) => 2 + e.size(),
            Extractor::Filter(e, p) => 1 + e.size() + p.size(),
            Extractor::Split(e, _) => 1 + e.size(),
        }
    }

    pub fn inner(&self) -> Option<&Extractor> {
        match self {
            Extractor::Content => None,
            Extractor::Substring(e, ..) | Extractor::Filter(e, _) | Extractor::Split(e, _) => Some(e),
        }
    }
}

impl Branch {
    pub fn new(guard: Guard, extractor: Extractor) -> Branch {
        Branch { guard, extractor }
    }

    pub fn size(&self) -> usize {
        self.guard.size() + self.extractor.size()
    }
}

impl Program {
    pub fn new(ctx: TaskContext, branches: Vec<Branch>) -> Program {
        Program { ctx, branches }
    }

    pub fn size(&self) -> usize {
        self.branches.iter().map(Branch::size).sum()
    }

    pub fn depth(&self) -> usize {
        self.branches.iter().map(|b| b.guard.depth().max(b.extractor.depth())).max().unwrap_or(0)
    }
}

/// Limits a parsed program must respect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AstBounds {
    pub max_locator_depth: usize,
    pub max_extractor_depth: usize,
    pub max_pred_atoms: usize,
    pub max_filter_atoms: usize,
}

impl Default for AstBounds {
    fn default() -> Self {
        AstBounds { max_locator_depth: 7, max_extractor_depth: 5, max_pred_atoms: 3, max_filter_atoms: 2 }
    }
}

impl AstBounds {
    pub fn check(&self, p: &Program) -> Result<(), String> {
        if p.branches.is_empty() {
            return Err("program has no branches".into());
        }
        for (i, b) in p.branches.iter().enumerate() {
            let loc = b.guard.locator();
            if loc.depth() > self.max_locator_depth {
                return Err(format!("branch {i}: locator depth {} exceeds {}", loc.depth(), self.max_locator_depth));
            }
            if b.extractor.depth() > self.max_extractor_depth {
                return Err(format!(
                    "branch {i}: extractor depth {} exceeds {}",
                    b.extractor.depth(),
                    self.max_extractor_depth
                ));
            }
            for f in loc.filters() {
                if f.atom_count() > self.max_filter_atoms || f.max_pred_atoms() > self.max_pred_atoms {
                    return Err(format!("branch {i}: node filter exceeds atom bounds"));
                }
            }
            if let Guard::Sat(_, p) = &b.guard {
                if p.atom_count() > self.max_pred_atoms {
                    return Err(format!("branch {i}: guard predicate exceeds atom bound"));
                }
            }
            let mut e = &b.extractor;
            loop {
                match e {
                    Extractor::Content => break,
                    Extractor::Substring(inner, _, k) => {
                        if *k == 0 {
                            return Err(format!("branch {i}: Substring with k = 0"));
                        }
                        e = inner;
                    }
                    Extractor::Filter(inner, p) => {
                        if p.atom_count() > self.max_pred_atoms {
                            return Err(format!("branch {i}: filter predicate exceeds atom bound"));
                        }
                        e = inner;
                    }
                    Extractor::Split(inner, _) => e = inner,
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Pred {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pred::True => f.write_str("⊤"),
            Pred::Atom(k) => write!(f, "{k}"),
            Pred::And(a, b) => write!(f, "({a} ∧ {b})"),
            Pred::Or(a, b) => write!(f, "({a} ∨ {b})"),
            Pred::Not(a) => write!(f, "¬{a}"),
        }
    }
}

impl fmt::Display for NodeFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeFilter::True => f.write_str("⊤"),
            NodeFilter::IsLeaf => f.write_str("isLeaf"),
            NodeFilter::IsElem => f.write_str("isElem"),
            NodeFilter::MatchText(p, b) => write!(f, "matchText({p}, {b})"),
            NodeFilter::And(a, b) => write!(f, "({a} ∧ {b})"),
            NodeFilter::Or(a, b) => write!(f, "({a} ∨ {b})"),
            NodeFilter::Not(a) => write!(f, "¬{a}"),
        }
    }
}

impl fmt::Display for Locator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Locator::Root => f.write_str("GetRoot"),
            Locator::Children(l, p) => write!(f, "GetChildren({l}, {p})"),
            Locator::Descendants(l, p) => write!(f, "GetDescendants({l}, {p})"),
        }
    }
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Guard::Sat(l, p) => write!(f, "Sat({l}, {p})"),
            Guard::IsSingleton(l) => write!(f, "IsSingleton({l})"),
        }
    }
}

fn escape_char(c: char) -> String {
    c.escape_default().to_string()
}

impl fmt::Display for Extractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extractor::Content => f.write_str("ExtractContent"),
            Extractor::Substring(e, p, k) => match p {
                Some(p) => write!(f, "Substring({e}, {p}, {k})"),
                None => write!(f, "Substring({e}, ⊤, {k})"),
            },
            Extractor::Filter(e, p) => write!(f, "Filter({e}, {p})"),
            Extractor::Split(e, c) => write!(f, "Split({e}, '{}')", escape_char(*c)),
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} → {}", self.guard, self.extractor)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.branches.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}
