use std::collections::BTreeSet;

use super::ast::{Extractor, Guard, Locator, NodeFilter, Pred, Program};
use crate::nlp::{Nlp, NlpError, PredicateKind, TaskContext};
use crate::webtree::{NodeId, NodePos, Webpage};

/// Deduplicated strings in lexicographic order.
pub type StringSet = BTreeSet<String>;

/// Located nodes as sorted pre-order positions.
pub type NodeSet = Vec<NodePos>;

/// Interpreter bound to a predicate provider and a question/keyword context.
#[derive(Clone, Copy)]
pub struct Interp<'a> {
    pub nlp: &'a Nlp,
    pub ctx: &'a TaskContext,
}

impl<'a> Interp<'a> {
    pub fn new(nlp: &'a Nlp, ctx: &'a TaskContext) -> Self {
        Interp { nlp, ctx }
    }

    pub fn atom(&self, k: &PredicateKind, z: &str) -> Result<bool, NlpError> {
        self.nlp.holds(k, z, self.ctx)
    }

    pub fn pred(&self, p: &Pred, z: &str) -> Result<bool, NlpError> {
        Ok(match p {
            Pred::True => true,
            Pred::Atom(k) => self.atom(k, z)?,
            Pred::And(a, b) => self.pred(a, z)? && self.pred(b, z)?,
            Pred::Or(a, b) => self.pred(a, z)? || self.pred(b, z)?,
            Pred::Not(a) => !self.pred(a, z)?,
        })
    }

    pub fn filter(&self, f: &NodeFilter, w: &Webpage, n: NodePos) -> Result<bool, NlpError> {
        Ok(match f {
            NodeFilter::True => true,
            NodeFilter::IsLeaf => w.is_leaf_at(n),
            NodeFilter::IsElem => w.is_elem_at(n),
            NodeFilter::MatchText(p, whole) => self.pred(p, w.text_at(n, *whole))?,
            NodeFilter::And(a, b) => self.filter(a, w, n)? && self.filter(b, w, n)?,
            NodeFilter::Or(a, b) => self.filter(a, w, n)? || self.filter(b, w, n)?,
            NodeFilter::Not(a) => !self.filter(a, w, n)?,
        })
    }

    /// One `GetChildren`/`GetDescendants` step over an already located set.
    pub fn step(&self, w: &Webpage, from: &[NodePos], descend: bool, f: &NodeFilter) -> Result<NodeSet, NlpError> {
        let mut out = Vec::new();
        if descend {
            // `from` is sorted, so nested subtrees are visited once.
            let mut covered = 0;
            for &p in from {
                let r = w.descendants_at(p);
                for q in r.start.max(covered)..r.end {
                    if self.filter(f, w, q)? {
                        out.push(q);
                    }
                }
                covered = covered.max(r.end);
            }
        } else {
            for &p in from {
                for &c in w.children_at(p) {
                    if self.filter(f, w, c)? {
                        out.push(c);
                    }
                }
            }
            out.sort_unstable();
        }
        Ok(out)
    }

    pub fn locate(&self, l: &Locator, w: &Webpage) -> Result<NodeSet, NlpError> {
        match l {
            Locator::Root => Ok(vec![0]),
            Locator::Children(inner, f) => self.step(w, &self.locate(inner, w)?, false, f),
            Locator::Descendants(inner, f) => self.step(w, &self.locate(inner, w)?, true, f),
        }
    }

    /// Guard truth on an already located node set.
    pub fn guard_holds(&self, g: &Guard, w: &Webpage, nodes: &[NodePos]) -> Result<bool, NlpError> {
        match g {
            Guard::IsSingleton(_) => Ok(nodes.len() == 1),
            Guard::Sat(_, p) => {
                for &n in nodes {
                    if self.pred(p, w.text_at(n, false))? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
        }
    }

    pub fn guard(&self, g: &Guard, w: &Webpage) -> Result<(bool, NodeSet), NlpError> {
        let nodes = self.locate(g.locator(), w)?;
        let holds = self.guard_holds(g, w, &nodes)?;
        Ok((holds, nodes))
    }

    /// Own texts of the nodes, empty texts dropped.
    pub fn content(&self, w: &Webpage, nodes: &[NodePos]) -> StringSet {
        nodes.iter().map(|&n| w.text_at(n, false)).filter(|t| !t.is_empty()).map(str::to_string).collect()
    }

    /// Applies the outermost production of `e` to the value of its inner extractor.
    pub fn extend(&self, e: &Extractor, input: &StringSet) -> Result<StringSet, NlpError> {
        let mut out = StringSet::new();
        match e {
            Extractor::Content => return Ok(input.clone()),
            Extractor::Substring(_, None, _) => return Ok(input.clone()),
            Extractor::Substring(_, Some(k), n) => {
                for s in input {
                    for span in self.nlp.extract_spans(s, k, self.ctx, *n as usize)? {
                        out.insert(span.text(s).to_string());
                    }
                }
            }
            Extractor::Filter(_, p) => {
                for s in input {
                    if self.pred(p, s)? {
                        out.insert(s.clone());
                    }
                }
            }
            Extractor::Split(_, c) => {
                for s in input {
                    out.extend(s.split(*c).map(str::trim).filter(|t| !t.is_empty()).map(str::to_string));
                }
            }
        }
        Ok(out)
    }

    pub fn extract(&self, e: &Extractor, w: &Webpage, nodes: &[NodePos]) -> Result<StringSet, NlpError> {
        match e.inner() {
            None => Ok(self.content(w, nodes)),
            Some(inner) => {
                let v = self.extract(inner, w, nodes)?;
                self.extend(e, &v)
            }
        }
    }
}

/// Result of running a program on one page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Run {
    pub output: StringSet,
    /// Index of the branch whose guard fired first.
    pub branch: Option<usize>,
}

pub fn run_program(p: &Program, w: &Webpage, nlp: &Nlp) -> Result<Run, NlpError> {
    let it = Interp::new(nlp, &p.ctx);
    for (i, b) in p.branches.iter().enumerate() {
        let (holds, nodes) = it.guard(&b.guard, w)?;
        if holds {
            return Ok(Run { output: it.extract(&b.extractor, w, &nodes)?, branch: Some(i) });
        }
    }
    Ok(Run { output: StringSet::new(), branch: None })
}

pub fn eval_program(p: &Program, w: &Webpage, nlp: &Nlp) -> Result<StringSet, NlpError> {
    Ok(run_program(p, w, nlp)?.output)
}

pub fn eval_locator(l: &Locator, w: &Webpage, nlp: &Nlp, ctx: &TaskContext) -> Result<Vec<NodeId>, NlpError> {
    Ok(Interp::new(nlp, ctx).locate(l, w)?.into_iter().map(|p| w.id_at(p)).collect())
}

pub fn eval_node_filter(f: &NodeFilter, w: &Webpage, n: NodeId, nlp: &Nlp, ctx: &TaskContext) -> Result<bool, NlpError> {
    let pos = w.pos(n).map_err(|e| NlpError::Config(e.to_string()))?;
    Interp::new(nlp, ctx).filter(f, w, pos)
}

pub fn eval_guard(g: &Guard, w: &Webpage, nlp: &Nlp, ctx: &TaskContext) -> Result<(bool, Vec<NodeId>), NlpError> {
    let (h, nodes) = Interp::new(nlp, ctx).guard(g, w)?;
    Ok((h, nodes.into_iter().map(|p| w.id_at(p)).collect()))
}

/// Extractor output for a set of node ids (unknown ids are ignored).
pub fn eval_extractor(
    e: &Extractor,
    nodes: &[NodeId],
    w: &Webpage,
    nlp: &Nlp,
    ctx: &TaskContext,
) -> Result<StringSet, NlpError> {
    let mut pos: Vec<NodePos> = nodes.iter().filter_map(|&n| w.pos(n).ok()).collect();
    pos.sort_unstable();
    pos.dedup();
    Interp::new(nlp, ctx).extract(e, w, &pos)
}
