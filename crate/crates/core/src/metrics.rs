//! Token-level scoring shared by synthesis, pruning and selection.

use std::cmp::Ordering;
use std::ops::{Add, AddAssign};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsl::{run_program, Extractor, Interp, Locator, NodeSet, Program, StringSet};
use crate::nlp::{Nlp, NlpError, TaskContext};
use crate::webtree::{tokenize_all, Corpus, TokenSet, Webpage};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("recall {0} outside [0,1]")]
    RecallRange(f64),
    #[error("labels reference unknown page {0:?}")]
    UnknownPage(String),
    #[error("page {0:?} is labeled twice")]
    DuplicateLabel(String),
    #[error("malformed labels JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Per-example token counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct CountTriple {
    pub tp: u64,
    pub pred: u64,
    pub gold: u64,
}

impl Add for CountTriple {
    type Output = CountTriple;
    fn add(self, o: CountTriple) -> CountTriple {
        CountTriple { tp: self.tp + o.tp, pred: self.pred + o.pred, gold: self.gold + o.gold }
    }
}

impl AddAssign for CountTriple {
    fn add_assign(&mut self, o: CountTriple) {
        *self = *self + o;
    }
}

impl std::iter::Sum for CountTriple {
    fn sum<I: Iterator<Item = CountTriple>>(it: I) -> CountTriple {
        it.fold(CountTriple::default(), Add::add)
    }
}

impl CountTriple {
    /// F1 as an exact fraction, `2tp / (pred + gold)` with `0/0 = 1`.
    pub fn f1_ratio(self) -> Ratio {
        Ratio::new(2 * self.tp, self.pred + self.gold)
    }

    /// Bound on the F1 of any output whose true positives are at most `tp`.
    pub fn ub_ratio(self) -> Ratio {
        Ratio::new(2 * self.tp, self.tp + self.gold)
    }
}

/// A non-negative fraction with `x/0` read as 1 (the both-empty convention).
#[derive(Debug, Clone, Copy)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Ratio {
        if den == 0 {
            Ratio { num: 1, den: 1 }
        } else {
            Ratio { num, den }
        }
    }

    pub const ZERO: Ratio = Ratio { num: 0, den: 1 };
    pub const ONE: Ratio = Ratio { num: 1, den: 1 };

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, o: &Ratio) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, o: &Ratio) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Ratio {
    fn cmp(&self, o: &Ratio) -> Ordering {
        (u128::from(self.num) * u128::from(o.den)).cmp(&(u128::from(o.num) * u128::from(self.den)))
    }
}

impl std::hash::Hash for Ratio {
    fn hash<H: std::hash::Hasher>(&self, h: &mut H) {
        let g = gcd(self.num, self.den);
        (self.num / g, self.den / g).hash(h);
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

pub fn counts_tokens(pred: &TokenSet, gold: &TokenSet) -> CountTriple {
    CountTriple {
        tp: pred.intersection(gold).count() as u64,
        pred: pred.len() as u64,
        gold: gold.len() as u64,
    }
}

pub fn counts(pred: &StringSet, gold: &StringSet) -> CountTriple {
    counts_tokens(&tokenize_all(pred), &tokenize_all(gold))
}

pub fn prf1(c: CountTriple) -> Prf1 {
    let both_empty = c.pred == 0 && c.gold == 0;
    let p = if c.pred == 0 {
        if both_empty { 1.0 } else { 0.0 }
    } else {
        c.tp as f64 / c.pred as f64
    };
    let r = if c.gold == 0 {
        if both_empty { 1.0 } else { 0.0 }
    } else {
        c.tp as f64 / c.gold as f64
    };
    let f1 = if both_empty {
        1.0
    } else if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    };
    Prf1 { p, r, f1 }
}

/// `2r / (1 + r)`: the best F1 reachable at recall `r`.
pub fn ub(recall: f64) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&recall) {
        return Err(MetricsError::RecallRange(recall));
    }
    Ok(2.0 * recall / (1.0 + recall))
}

/// Size of the symmetric difference of the two token sets.
pub fn hamming(a: &StringSet, b: &StringSet) -> usize {
    hamming_tokens(&tokenize_all(a), &tokenize_all(b))
}

pub fn hamming_tokens(a: &TokenSet, b: &TokenSet) -> usize {
    a.symmetric_difference(b).count()
}

/// One labeled page.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub page: Arc<Webpage>,
    pub gold: StringSet,
    pub gold_tokens: TokenSet,
}

impl Example {
    pub fn new(id: impl Into<String>, page: Arc<Webpage>, gold: StringSet) -> Example {
        let gold_tokens = tokenize_all(&gold);
        Example { id: id.into(), page, gold, gold_tokens }
    }
}

#[derive(Debug, Clone)]
pub struct ExampleSet {
    pub ctx: TaskContext,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub page_id: String,
    pub gold: Vec<String>,
}

/// Labels file: `{"examples":[{"page_id":..,"gold":[..]}]}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Labels {
    pub examples: Vec<LabelEntry>,
}

impl Labels {
    pub fn load(path: &Path) -> Result<Labels, MetricsError> {
        let s = std::fs::read_to_string(path)
            .map_err(|source| MetricsError::Io { path: path.display().to_string(), source })?;
        Ok(serde_json::from_str(&s)?)
    }

    pub fn page_ids(&self) -> Vec<String> {
        self.examples.iter().map(|e| e.page_id.clone()).collect()
    }
}

impl ExampleSet {
    pub fn from_labels(ctx: TaskContext, corpus: &Corpus, labels: &Labels) -> Result<ExampleSet, MetricsError> {
        let mut seen = std::collections::HashSet::new();
        let mut examples = Vec::with_capacity(labels.examples.len());
        for l in &labels.examples {
            if !seen.insert(l.page_id.as_str()) {
                return Err(MetricsError::DuplicateLabel(l.page_id.clone()));
            }
            let page = corpus.get(&l.page_id).ok_or_else(|| MetricsError::UnknownPage(l.page_id.clone()))?;
            examples.push(Example::new(&l.page_id, Arc::clone(&page.page), l.gold.iter().cloned().collect()));
        }
        Ok(ExampleSet { ctx, examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Micro-averaged score of a program and its per-example counts.
pub fn f1_program(p: &Program, e: &ExampleSet, nlp: &Nlp) -> Result<(Prf1, Vec<CountTriple>), NlpError> {
    let mut per = Vec::with_capacity(e.len());
    for ex in &e.examples {
        let out = run_program(p, &ex.page, nlp)?.output;
        per.push(counts_tokens(&tokenize_all(&out), &ex.gold_tokens));
    }
    Ok((prf1(per.iter().copied().sum()), per))
}

/// Recall of the own text of the nodes `l` locates: summed per example,
/// or, with `pooled`, over token sets pooled across pages.
pub fn recall_locator(l: &Locator, e: &ExampleSet, nlp: &Nlp, pooled: bool) -> Result<f64, NlpError> {
    let it = Interp::new(nlp, &e.ctx);
    let mut total = CountTriple::default();
    let mut pool_located = TokenSet::new();
    let mut pool_gold = TokenSet::new();
    for ex in &e.examples {
        let nodes = it.locate(l, &ex.page)?;
        let located = tokenize_all(&it.content(&ex.page, &nodes));
        if pooled {
            pool_located.extend(located);
            pool_gold.extend(ex.gold_tokens.iter().cloned());
        } else {
            total += counts_tokens(&located, &ex.gold_tokens);
        }
    }
    if pooled {
        total = counts_tokens(&pool_located, &pool_gold);
    }
    Ok(if total.gold == 0 { 1.0 } else { total.tp as f64 / total.gold as f64 })
}

/// An example after its locator ran: the located nodes are the extractor input.
#[derive(Debug, Clone)]
pub struct Propagated<'a> {
    pub page: &'a Webpage,
    pub nodes: NodeSet,
    pub gold_tokens: &'a TokenSet,
}

/// `ub` of the micro recall of `x` on propagated examples.
pub fn ub_extractor(x: &Extractor, e: &[Propagated<'_>], nlp: &Nlp, ctx: &TaskContext) -> Result<f64, NlpError> {
    let it = Interp::new(nlp, ctx);
    let mut total = CountTriple::default();
    for p in e {
        let out = it.extract(x, p.page, &p.nodes)?;
        total += counts_tokens(&tokenize_all(&out), p.gold_tokens);
    }
    Ok(total.ub_ratio().value())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

/// Evaluation report: `{"per_example":[..],"micro":{..}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_example: Vec<ExampleScore>,
    pub micro: Prf1,
}

impl EvalReport {
    pub fn from_counts(ids: &[String], per: &[CountTriple]) -> EvalReport {
        let per_example = ids
            .iter()
            .zip(per)
            .map(|(id, c)| {
                let s = prf1(*c);
                ExampleScore { id: id.clone(), p: s.p, r: s.r, f1: s.f1 }
            })
            .collect();
        EvalReport { per_example, micro: prf1(per.iter().copied().sum()) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Branch, Guard, NodeFilter, Pred};
    use crate::webtree::parse_html_str;
    use proptest::prelude::*;

    fn set(xs: &[&str]) -> StringSet {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn count_examples() {
        assert_eq!(counts(&set(&["a b"]), &set(&["b c"])), CountTriple { tp: 1, pred: 2, gold: 2 });
        let g = set(&["x y", "z"]);
        assert_eq!(counts(&g, &g), CountTriple { tp: 3, pred: 3, gold: 3 });
        assert_eq!(counts(&StringSet::new(), &g), CountTriple { tp: 0, pred: 0, gold: 3 });
    }

    #[test]
    fn prf1_examples() {
        let half = prf1(CountTriple { tp: 1, pred: 2, gold: 2 });
        assert_eq!((half.p, half.r, half.f1), (0.5, 0.5, 0.5));
        let one = prf1(CountTriple { tp: 4, pred: 4, gold: 4 });
        assert_eq!((one.p, one.r, one.f1), (1.0, 1.0, 1.0));
        let zero = prf1(CountTriple { tp: 0, pred: 5, gold: 3 });
        assert_eq!((zero.p, zero.r, zero.f1), (0.0, 0.0, 0.0));
        let empty = prf1(CountTriple::default());
        assert_eq!((empty.p, empty.r, empty.f1), (1.0, 1.0, 1.0));
        assert_eq!(prf1(CountTriple { tp: 0, pred: 0, gold: 2 }).f1, 0.0);
        assert_eq!(prf1(CountTriple { tp: 0, pred: 2, gold: 0 }).f1, 0.0);
    }

    #[test]
    fn ub_examples() {
        assert_eq!(ub(1.0).unwrap(), 1.0);
        assert_eq!(ub(0.0).unwrap(), 0.0);
        assert!((ub(0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(ub(1.5), Err(MetricsError::RecallRange(_))));
        assert!(ub(-0.1).is_err());
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&set(&["a b"]), &set(&["b c"])), 2);
        assert_eq!(hamming(&set(&["q"]), &set(&["q"])), 0);
    }

    #[test]
    fn ratio_order_and_convention() {
        assert_eq!(Ratio::new(2, 4), Ratio::new(1, 2));
        assert!(Ratio::new(2, 3) > Ratio::new(3, 5));
        assert_eq!(Ratio::new(0, 0), Ratio::ONE);
        assert_eq!(CountTriple::default().f1_ratio(), Ratio::ONE);
    }

    fn one_page_set(html: &str, gold: &[&str]) -> ExampleSet {
        let ctx = TaskContext::new("What is listed?", vec!["Items".into()]).unwrap();
        ExampleSet { ctx, examples: vec![Example::new("p", Arc::new(parse_html_str(html)), set(gold))] }
    }

    #[test]
    fn program_and_locator_scores() {
        let nlp = Nlp::baseline();
        let e = one_page_set("<h1>Home</h1><h2>Items</h2><ul><li>apple</li><li>pear</li></ul>", &["apple", "pear"]);
        let leaves = Locator::leaves(Locator::Root);
        let perfect = Program::new(e.ctx.clone(), vec![Branch::new(Guard::Sat(leaves.clone(), Pred::True), Extractor::Content)]);
        let (s, per) = f1_program(&perfect, &e, &nlp).unwrap();
        assert_eq!(s.f1, 1.0);
        assert_eq!(per, vec![CountTriple { tp: 2, pred: 2, gold: 2 }]);
        let nothing = Program::new(
            e.ctx.clone(),
            vec![Branch::new(Guard::IsSingleton(Locator::children(Locator::Root, NodeFilter::IsElem)), Extractor::Content)],
        );
        assert_eq!(f1_program(&nothing, &e, &nlp).unwrap().0.f1, 0.0);
        assert_eq!(recall_locator(&Locator::Root, &e, &nlp, false).unwrap(), 0.0);
        assert_eq!(recall_locator(&leaves, &e, &nlp, false).unwrap(), 1.0);
        let none = Locator::children(Locator::Root, NodeFilter::IsElem);
        assert_eq!(recall_locator(&none, &e, &nlp, false).unwrap(), 0.0);
        let report = EvalReport::from_counts(&["p".into()], &per);
        assert_eq!(report.micro.f1, 1.0);
        let j = serde_json::to_value(&report).unwrap();
        assert!(j.get("per_example").is_some() && j.get("micro").is_some());
    }

    #[test]
    fn pooled_recall_differs_from_micro() {
        // Two pages share the token "a": micro counts it twice, pooling once.
        let nlp = Nlp::baseline();
        let ctx = TaskContext::new("q", vec!["k".into()]).unwrap();
        let p1 = Arc::new(parse_html_str("<h1>a</h1>"));
        let p2 = Arc::new(parse_html_str("<h1>b</h1><p>c</p>"));
        let e = ExampleSet {
            ctx,
            examples: vec![Example::new("1", p1, set(&["a"])), Example::new("2", p2, set(&["a c"]))],
        };
        let micro = recall_locator(&Locator::Root, &e, &nlp, false).unwrap();
        let pooled = recall_locator(&Locator::Root, &e, &nlp, true).unwrap();
        assert!((micro - 1.0 / 3.0).abs() < 1e-12);
        assert!((pooled - 0.5).abs() < 1e-12);
    }

    fn token_sets() -> impl Strategy<Value = StringSet> {
        proptest::collection::btree_set(prop_oneof![Just("a"), Just("b c"), Just("d"), Just("e f g"), Just("A")], 0..4)
            .prop_map(|s| s.into_iter().map(String::from).collect())
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric(a in token_sets(), b in token_sets(), c in token_sets()) {
            prop_assert_eq!(hamming(&a, &b), hamming(&b, &a));
            prop_assert_eq!(hamming(&a, &a), 0);
            if hamming(&a, &b) == 0 {
                prop_assert_eq!(tokenize_all(&a), tokenize_all(&b));
            }
            prop_assert!(hamming(&a, &c) <= hamming(&a, &b) + hamming(&b, &c));
        }

        #[test]
        fn ub_monotone_and_bounded(r1 in 0.0f64..=1.0, r2 in 0.0f64..=1.0) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(ub(lo).unwrap() <= ub(hi).unwrap());
            prop_assert!(ub(hi).unwrap() <= 1.0);
        }

        #[test]
        fn micro_f1_is_prf1_of_sum(triples in proptest::collection::vec((0u64..5, 0u64..5, 0u64..5), 1..5)) {
            let cs: Vec<CountTriple> = triples.iter().map(|&(a, b, c)| CountTriple { tp: a.min(b).min(c), pred: b, gold: c }).collect();
            let sum: CountTriple = cs.iter().copied().sum();
            let exact = sum.f1_ratio().value();
            prop_assert!((prf1(sum).f1 - exact).abs() < 1e-12);
            prop_assert!(sum.ub_ratio() >= sum.f1_ratio());
        }
    }
}
