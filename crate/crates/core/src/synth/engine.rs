use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::{Arc, OnceLock};

use dashmap::DashMap;

use super::{SynthConfig, SynthError, Stats};
use crate::dsl::{Extractor, Grammar, Guard, Interp, Locator, NodeSet, StringSet};
use crate::metrics::{counts_tokens, CountTriple, Example, ExampleSet, Propagated};
use crate::nlp::Nlp;
use crate::webtree::{tokenize_all, TokenSet};

/// An exact rational score; `den > 0`.
#[derive(Debug, Clone, Copy)]
pub struct Score {
    pub num: i128,
    pub den: i128,
}

impl Score {
    pub const MIN: Score = Score { num: -(1 << 100), den: 1 };

    fn ratio(num: u64, den: u64) -> Score {
        if den == 0 {
            Score { num: 1, den: 1 }
        } else {
            Score { num: num as i128, den: den as i128 }
        }
    }

    fn int(v: i128) -> Score {
        Score { num: v, den: 1 }
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Score {
    fn eq(&self, o: &Score) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}

impl Eq for Score {}

impl PartialOrd for Score {
    fn partial_cmp(&self, o: &Score) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Score {
    fn cmp(&self, o: &Score) -> Ordering {
        (self.num * o.den).cmp(&(o.num * self.den))
    }
}

/// What a block search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    /// Micro F1 over the block.
    F1,
    /// `b·2tp − a·(pred + gold)` for `λ = a/b ≤ 1`; additive across blocks.
    Linear { a: u64, b: u64 },
}

impl Objective {
    pub fn initial(self) -> Score {
        match self {
            Objective::F1 => Score::int(0),
            Objective::Linear { .. } => Score::MIN,
        }
    }

    pub fn score(self, c: CountTriple) -> Score {
        match self {
            Objective::F1 => Score::ratio(2 * c.tp, c.pred + c.gold),
            Objective::Linear { a, b } => {
                let (a, b) = (a as i128, b as i128);
                Score::int(2 * b * c.tp as i128 - a * (c.pred + c.gold) as i128)
            }
        }
    }

    /// Best score of any output whose true positives are at most `tp`.
    pub fn bound(self, tp: u64, gold: u64) -> Score {
        match self {
            Objective::F1 => Score::ratio(2 * tp, tp + gold),
            Objective::Linear { a, b } => {
                let (a, b) = (a as i128, b as i128);
                Score::int((2 * b - a) * tp as i128 - a * gold as i128)
            }
        }
    }
}

/// Everything the search needs about one locator, on every example.
#[derive(Debug)]
pub struct LocInfo {
    pub nodes: Vec<NodeSet>,
    own_tp: Vec<u64>,
    sub_tp: Vec<u64>,
    /// Located tokens restricted to the gold vocabulary; kept for pooled recall.
    pooled: Option<(Vec<TokenSet>, Vec<TokenSet>)>,
    masks: OnceLock<Vec<u32>>,
}

/// Optimal extractors for one located input, grouped by summed counts.
#[derive(Debug, Clone)]
pub struct ExtResult {
    pub best: Score,
    pub groups: Vec<(CountTriple, Vec<Extractor>)>,
}

impl ExtResult {
    pub fn extractors(&self) -> impl Iterator<Item = &Extractor> {
        self.groups.iter().flat_map(|(_, xs)| xs)
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|(_, xs)| xs.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Guards sharing one locator, paired with the extractors optimal after it.
#[derive(Debug, Clone)]
pub struct BranchEntry {
    pub guards: Vec<Guard>,
    pub ext: Arc<ExtResult>,
}

#[derive(Debug, Clone)]
pub struct BranchResult {
    pub best: Score,
    pub entries: Vec<BranchEntry>,
}

impl BranchResult {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Guard, &Extractor)> {
        self.entries.iter().flat_map(|e| e.guards.iter().flat_map(move |g| e.ext.extractors().map(move |x| (g, x))))
    }

    pub fn count(&self) -> u128 {
        self.entries.iter().map(|e| e.guards.len() as u128 * e.ext.len() as u128).sum()
    }
}

enum MemoEntry {
    Found(Arc<ExtResult>),
    /// Nothing reached the threshold used.
    Below(Score),
}

/// Extractor results per positive block and located input. One memo must
/// only be used with one objective.
#[derive(Default)]
pub struct ExtMemo {
    map: HashMap<(u32, Vec<NodeSet>), MemoEntry>,
}

pub struct Engine<'a> {
    cfg: &'a SynthConfig,
    grammar: Grammar,
    nlp: &'a Nlp,
    e: &'a ExampleSet,
    gold_vocab: TokenSet,
    locs: DashMap<Locator, Arc<LocInfo>>,
}

impl<'a> Engine<'a> {
    pub fn new(e: &'a ExampleSet, cfg: &'a SynthConfig, nlp: &'a Nlp) -> Self {
        let gold_vocab = e.examples.iter().flat_map(|x| x.gold_tokens.iter().cloned()).collect();
        Engine { cfg, grammar: cfg.grammar(nlp), nlp, e, gold_vocab, locs: DashMap::new() }
    }

    pub fn cfg(&self) -> &SynthConfig {
        self.cfg
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn examples(&self) -> &'a ExampleSet {
        self.e
    }

    fn ex(&self) -> &'a [Example] {
        &self.e.examples
    }

    fn interp(&self) -> Interp<'_> {
        Interp::new(self.nlp, &self.e.ctx)
    }

    pub fn total_gold(&self) -> u64 {
        self.ex().iter().map(|x| x.gold_tokens.len() as u64).sum()
    }

    pub fn loc(&self, l: &Locator) -> Result<Arc<LocInfo>, SynthError> {
        if let Some(x) = self.locs.get(l) {
            return Ok(Arc::clone(&x));
        }
        let it = self.interp();
        let nodes: Vec<NodeSet> = match l {
            Locator::Root => vec![vec![0]; self.ex().len()],
            Locator::Children(inner, f) | Locator::Descendants(inner, f) => {
                let parent = self.loc(inner)?;
                let descend = matches!(l, Locator::Descendants(..));
                self.ex()
                    .iter()
                    .zip(&parent.nodes)
                    .map(|(x, from)| it.step(&x.page, from, descend, f))
                    .collect::<Result<_, _>>()?
            }
        };
        let mut own_tp = Vec::with_capacity(nodes.len());
        let mut sub_tp = Vec::with_capacity(nodes.len());
        let mut pooled = self.cfg.pooled_recall.then(|| (Vec::new(), Vec::new()));
        for (x, ns) in self.ex().iter().zip(&nodes) {
            let own: TokenSet = ns.iter().flat_map(|&n| x.page.own_tokens_at(n).iter().cloned()).collect();
            let sub: TokenSet = ns.iter().flat_map(|&n| x.page.subtree_tokens_at(n).iter().cloned()).collect();
            own_tp.push(own.intersection(&x.gold_tokens).count() as u64);
            sub_tp.push(sub.intersection(&x.gold_tokens).count() as u64);
            if let Some((o, s)) = pooled.as_mut() {
                o.push(own.intersection(&self.gold_vocab).cloned().collect());
                s.push(sub.intersection(&self.gold_vocab).cloned().collect());
            }
        }
        let info = Arc::new(LocInfo { nodes, own_tp, sub_tp, pooled, masks: OnceLock::new() });
        Ok(Arc::clone(self.locs.entry(l.clone()).or_insert(info).value()))
    }

    /// Truth of every `gen_guards(l)` member on every example, as bit masks.
    fn masks(&self, l: &Locator, info: &LocInfo) -> Result<Vec<u32>, SynthError> {
        if let Some(m) = info.masks.get() {
            return Ok(m.clone());
        }
        let it = self.interp();
        let mut out = Vec::new();
        for g in self.grammar.gen_guards(l) {
            let mut m = 0u32;
            for (i, (x, ns)) in self.ex().iter().zip(&info.nodes).enumerate() {
                if it.guard_holds(&g, &x.page, ns)? {
                    m |= 1 << i;
                }
            }
            out.push(m);
        }
        Ok(info.masks.get_or_init(|| out).clone())
    }

    fn loc_bound(&self, info: &LocInfo, pos: u32, obj: Objective, subtree: bool) -> Score {
        let idx = members(pos);
        if let Some((own, sub)) = &info.pooled {
            let located = if subtree { sub } else { own };
            let gold: TokenSet = idx.iter().flat_map(|&i| self.ex()[i].gold_tokens.iter().cloned()).collect();
            let hit: TokenSet = idx.iter().flat_map(|&i| located[i].iter().cloned()).filter(|t| gold.contains(t)).collect();
            return obj.bound(hit.len() as u64, gold.len() as u64);
        }
        let tps = if subtree { &info.sub_tp } else { &info.own_tp };
        let tp = idx.iter().map(|&i| tps[i]).sum();
        let gold = idx.iter().map(|&i| self.ex()[i].gold_tokens.len() as u64).sum();
        obj.bound(tp, gold)
    }

    fn classifying(&self, l: &Locator, info: &LocInfo, pos: u32, neg: u32) -> Result<Vec<Guard>, SynthError> {
        let masks = self.masks(l, info)?;
        Ok(self
            .grammar
            .gen_guards(l)
            .into_iter()
            .zip(masks)
            .filter(|(_, m)| m & pos == pos && m & neg == 0)
            .map(|(g, _)| g)
            .collect())
    }

    fn counts(&self, idx: &[usize], outs: &[StringSet]) -> CountTriple {
        idx.iter().zip(outs).map(|(&i, o)| counts_tokens(&tokenize_all(o), &self.ex()[i].gold_tokens)).sum()
    }

    /// Bottom-up extractor search on the located input of the `pos` examples.
    /// Returns every extractor at the best score if that score reaches `opt`.
    pub fn extractors(
        &self,
        pos: u32,
        info: &LocInfo,
        obj: Objective,
        opt: Score,
        stats: &mut Stats,
    ) -> Result<Option<ExtResult>, SynthError> {
        let prune = !self.cfg.no_prune;
        let it = self.interp();
        let idx = members(pos);
        let start: Vec<StringSet> = idx.iter().map(|&i| it.content(&self.ex()[i].page, &info.nodes[i])).collect();
        let c0 = self.counts(&idx, &start);
        let mut queue = VecDeque::from([(Extractor::Content, start, c0)]);
        let mut s_o = if prune { opt } else { Score::MIN };
        let mut found: BTreeMap<CountTriple, Vec<Extractor>> = BTreeMap::new();
        while let Some((e, outs, c)) = queue.pop_front() {
            if prune && obj.bound(c.tp, c.gold) < s_o {
                stats.pruned_extractors += 1;
                continue;
            }
            stats.extractors_expanded += 1;
            let sc = obj.score(c);
            match sc.cmp(&s_o) {
                Ordering::Greater => {
                    found.clear();
                    s_o = sc;
                    found.entry(c).or_default().push(e.clone());
                }
                Ordering::Equal => found.entry(c).or_default().push(e.clone()),
                Ordering::Less => {}
            }
            for e2 in self.grammar.extend_extractor(&e) {
                let outs2: Vec<StringSet> = outs.iter().map(|o| it.extend(&e2, o)).collect::<Result<_, _>>()?;
                let c2 = self.counts(&idx, &outs2);
                if prune && obj.bound(c2.tp, c2.gold) < s_o {
                    stats.pruned_extractors += 1;
                } else {
                    queue.push_back((e2, outs2, c2));
                }
            }
        }
        if found.is_empty() {
            return Ok(None);
        }
        Ok(Some(ExtResult { best: s_o, groups: found.into_iter().collect() }))
    }

    fn extractors_memo(
        &self,
        pos: u32,
        info: &LocInfo,
        obj: Objective,
        opt: Score,
        memo: &mut ExtMemo,
        stats: &mut Stats,
    ) -> Result<Option<Arc<ExtResult>>, SynthError> {
        let key = (pos, members(pos).into_iter().map(|i| info.nodes[i].clone()).collect::<Vec<_>>());
        match memo.map.get(&key) {
            Some(MemoEntry::Found(r)) => {
                stats.cache_hits += 1;
                return Ok(Some(Arc::clone(r)));
            }
            Some(MemoEntry::Below(used)) if opt >= *used => {
                stats.cache_hits += 1;
                return Ok(None);
            }
            _ => {}
        }
        let r = self.extractors(pos, info, obj, opt, stats)?.map(Arc::new);
        let entry = match &r {
            Some(r) => MemoEntry::Found(Arc::clone(r)),
            None => MemoEntry::Below(opt),
        };
        memo.map.insert(key, entry);
        Ok(r)
    }

    /// All optimal (guard, extractor) pairs for a block: guards true on
    /// `pos` and false on `neg`, extractors maximizing `obj` on `pos`.
    pub fn branch(
        &self,
        pos: u32,
        neg: u32,
        obj: Objective,
        memo: &mut ExtMemo,
        stats: &mut Stats,
    ) -> Result<BranchResult, SynthError> {
        stats.branch_searches += 1;
        if self.cfg.no_decomp {
            return self.branch_joint(pos, neg, obj, stats);
        }
        let mut opt = obj.initial();
        let mut entries = Vec::new();
        let mut stream = GuardStream::new(self, pos, neg, obj);
        while let Some((guards, info)) = stream.next(opt, stats)? {
            if !self.cfg.no_prune && self.loc_bound(&info, pos, obj, false) < opt {
                stats.pruned_guards += guards.len() as u64;
                continue;
            }
            let Some(r) = self.extractors_memo(pos, &info, obj, opt, memo, stats)? else { continue };
            match r.best.cmp(&opt) {
                Ordering::Greater => {
                    entries.clear();
                    opt = r.best;
                    entries.push(BranchEntry { guards, ext: r });
                }
                Ordering::Equal => entries.push(BranchEntry { guards, ext: r }),
                Ordering::Less => {}
            }
        }
        Ok(BranchResult { best: opt, entries })
    }

    /// Joint search: every locator, every classifying guard, every extractor.
    fn branch_joint(&self, pos: u32, neg: u32, obj: Objective, stats: &mut Stats) -> Result<BranchResult, SynthError> {
        let it = self.interp();
        let idx = members(pos);
        let extractors = self.grammar.all_extractors();
        let mut opt = obj.initial();
        let mut entries: Vec<BranchEntry> = Vec::new();
        for l in self.grammar.all_locators() {
            stats.locators_expanded += 1;
            let info = self.loc(&l)?;
            let guards = self.classifying(&l, &info, pos, neg)?;
            if guards.is_empty() {
                continue;
            }
            let mut local: BTreeMap<CountTriple, Vec<Extractor>> = BTreeMap::new();
            let mut local_best = Score::MIN;
            for x in &extractors {
                stats.pairs_evaluated += guards.len() as u64;
                let outs: Vec<StringSet> =
                    idx.iter().map(|&i| it.extract(x, &self.ex()[i].page, &info.nodes[i])).collect::<Result<_, _>>()?;
                let c = self.counts(&idx, &outs);
                let sc = obj.score(c);
                if sc > local_best {
                    local.clear();
                    local_best = sc;
                }
                if sc == local_best {
                    local.entry(c).or_default().push(x.clone());
                }
            }
            if local_best < opt {
                continue;
            }
            if local_best > opt {
                entries.clear();
                opt = local_best;
            }
            entries.push(BranchEntry { guards, ext: Arc::new(ExtResult { best: local_best, groups: local.into_iter().collect() }) });
        }
        Ok(BranchResult { best: opt, entries })
    }
}

/// Lazy stream of classifying guards, grouped by locator. Locators come
/// shallow first; a locator is extended only while the best score reachable
/// from its subtree text can still match `opt`.
pub struct GuardStream<'e, 'a> {
    engine: &'e Engine<'a>,
    pos: u32,
    neg: u32,
    obj: Objective,
    queue: VecDeque<Locator>,
}

impl<'e, 'a> GuardStream<'e, 'a> {
    pub fn new(engine: &'e Engine<'a>, pos: u32, neg: u32, obj: Objective) -> Self {
        GuardStream { engine, pos, neg, obj, queue: VecDeque::from([Locator::Root]) }
    }

    pub fn next(&mut self, opt: Score, stats: &mut Stats) -> Result<Option<(Vec<Guard>, Arc<LocInfo>)>, SynthError> {
        let en = self.engine;
        let prune = !en.cfg.no_prune;
        while let Some(l) = self.queue.pop_front() {
            let info = en.loc(&l)?;
            if prune && en.loc_bound(&info, self.pos, self.obj, true) < opt {
                stats.pruned_locators += 1;
                continue;
            }
            stats.locators_expanded += 1;
            for l2 in en.grammar.extend_locator(&l) {
                let i2 = en.loc(&l2)?;
                if prune && en.loc_bound(&i2, self.pos, self.obj, true) < opt {
                    stats.pruned_locators += 1;
                } else {
                    self.queue.push_back(l2);
                }
            }
            let guards = en.classifying(&l, &info, self.pos, self.neg)?;
            if !guards.is_empty() {
                return Ok(Some((guards, info)));
            }
        }
        Ok(None)
    }
}

pub(crate) fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask >> i & 1 == 1).collect()
}

/// The located nodes of `g` on the examples in `pos`, as extractor input.
pub fn propagate_examples<'a>(
    e: &'a ExampleSet,
    pos: &[usize],
    g: &Guard,
    nlp: &Nlp,
) -> Result<Vec<Propagated<'a>>, SynthError> {
    let it = Interp::new(nlp, &e.ctx);
    pos.iter()
        .map(|&i| {
            let x = &e.examples[i];
            Ok(Propagated { page: &x.page, nodes: it.locate(g.locator(), &x.page)?, gold_tokens: &x.gold_tokens })
        })
        .collect()
}
