//! Exhaustive reference synthesizer used to check the search.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use super::compose::product;
use super::engine::members;
use super::{Class, Family, OptimalSet, Stats, SynthConfig, SynthError};
use crate::dsl::{Extractor, Guard, Interp, NodeSet};
use crate::metrics::{counts, CountTriple, ExampleSet, Ratio};
use crate::nlp::Nlp;

struct Behavior {
    mask: u32,
    locset: usize,
    guards: Vec<Guard>,
}

type Groups = Arc<Vec<(CountTriple, Vec<usize>)>>;

struct Oracle {
    behaviors: Vec<Behavior>,
    /// `table[locset][x][i]`: counts of extractor `x` on example `i`.
    table: Vec<Vec<Vec<CountTriple>>>,
    groups: HashMap<(usize, u32), Groups>,
    best: Option<Ratio>,
    winners: Vec<(Vec<(usize, u32)>, Vec<usize>)>,
    sequences: u64,
}

/// Enumerates every guard, every extractor and every sequence of guard
/// behaviors that fires each branch on at least one example.
pub fn brute_force_synthesize(e: &ExampleSet, cfg: &SynthConfig, nlp: &Nlp) -> Result<OptimalSet, SynthError> {
    cfg.validate()?;
    let n = e.len();
    if n == 0 {
        return Err(SynthError::NoExamples);
    }
    let cap = cfg.max_examples.min(32);
    if n > cap {
        return Err(SynthError::TooManyExamples { n, cap });
    }
    let grammar = cfg.grammar(nlp);
    let it = Interp::new(nlp, &e.ctx);
    let locators = grammar.all_locators();
    let extractors: Vec<Extractor> = grammar.all_extractors();
    let guard_count: u128 = locators.iter().map(|l| grammar.gen_guards(l).len() as u128).sum();
    let space = guard_count * extractors.len() as u128;
    if space > u128::from(cfg.oracle_cap) {
        return Err(SynthError::CapExceeded { what: "brute-force guard × extractor space", count: space, cap: cfg.oracle_cap.into() });
    }

    let mut locsets: Vec<Vec<NodeSet>> = Vec::new();
    let mut locset_ids: HashMap<Vec<NodeSet>, usize> = HashMap::new();
    let mut behaviors: Vec<Behavior> = Vec::new();
    let mut behavior_ids: HashMap<(u32, usize), usize> = HashMap::new();
    for l in &locators {
        let nodes: Vec<NodeSet> = e.examples.iter().map(|x| it.locate(l, &x.page)).collect::<Result<_, _>>()?;
        let next = locsets.len();
        let id = *locset_ids.entry(nodes.clone()).or_insert(next);
        if id == next {
            locsets.push(nodes);
        }
        for g in grammar.gen_guards(l) {
            let mut mask = 0u32;
            for (i, x) in e.examples.iter().enumerate() {
                if it.guard_holds(&g, &x.page, &locsets[id][i])? {
                    mask |= 1 << i;
                }
            }
            if mask == 0 {
                continue;
            }
            let next = behaviors.len();
            let b = *behavior_ids.entry((mask, id)).or_insert(next);
            if b == next {
                behaviors.push(Behavior { mask, locset: id, guards: Vec::new() });
            }
            behaviors[b].guards.push(g);
        }
    }

    let mut table = Vec::with_capacity(locsets.len());
    for nodes in &locsets {
        let mut rows = Vec::with_capacity(extractors.len());
        for x in &extractors {
            let row: Vec<CountTriple> = e
                .examples
                .iter()
                .zip(nodes)
                .map(|(ex, ns)| Ok(counts(&it.extract(x, &ex.page, ns)?, &ex.gold)))
                .collect::<Result<_, SynthError>>()?;
            rows.push(row);
        }
        table.push(rows);
    }

    let mut o = Oracle { behaviors, table, groups: HashMap::new(), best: None, winners: Vec::new(), sequences: 0 };
    let mut seq = Vec::new();
    o.walk((1u32 << n) - 1, &mut seq);

    let families = o
        .winners
        .iter()
        .map(|(seq, combo)| {
            let blocks = seq
                .iter()
                .zip(combo)
                .map(|(&(b, fire), &g)| {
                    let beh = &o.behaviors[b];
                    let xs = &o.groups[&(beh.locset, fire)][g].1;
                    vec![Class { guards: beh.guards.clone(), extractors: xs.iter().map(|&k| extractors[k].clone()).collect() }]
                })
                .collect();
            Family { partition: seq.iter().map(|&(_, fire)| members(fire)).collect(), blocks }
        })
        .collect();
    let stats = Stats { pairs_evaluated: o.sequences, ..Stats::default() };
    Ok(OptimalSet { ctx: e.ctx.clone(), f1: o.best.unwrap_or(Ratio::ZERO), families, stats })
}

impl Oracle {
    fn walk(&mut self, remaining: u32, seq: &mut Vec<(usize, u32)>) {
        if remaining == 0 {
            self.score(seq);
            return;
        }
        for b in 0..self.behaviors.len() {
            let fire = self.behaviors[b].mask & remaining;
            if fire != 0 {
                seq.push((b, fire));
                self.walk(remaining & !fire, seq);
                seq.pop();
            }
        }
    }

    /// Extractors grouped by their counts summed over the firing examples.
    fn groups(&mut self, locset: usize, fire: u32) -> Groups {
        if let Some(g) = self.groups.get(&(locset, fire)) {
            return Arc::clone(g);
        }
        let idx = members(fire);
        let mut by: BTreeMap<CountTriple, Vec<usize>> = BTreeMap::new();
        for (k, row) in self.table[locset].iter().enumerate() {
            by.entry(idx.iter().map(|&i| row[i]).sum()).or_default().push(k);
        }
        let g: Groups = Arc::new(by.into_iter().collect());
        self.groups.insert((locset, fire), Arc::clone(&g));
        g
    }

    fn score(&mut self, seq: &[(usize, u32)]) {
        self.sequences += 1;
        let per: Vec<Groups> = seq.iter().map(|&(b, fire)| self.groups(self.behaviors[b].locset, fire)).collect();
        let options: Vec<Vec<usize>> = per.iter().map(|g| (0..g.len()).collect()).collect();
        for combo in product(&options) {
            let f = combo.iter().zip(&per).map(|(&k, g)| g[k].0).sum::<CountTriple>().f1_ratio();
            if self.best.is_none_or(|b| f > b) {
                self.best = Some(f);
                self.winners.clear();
            }
            if self.best == Some(f) {
                self.winners.push((seq.to_vec(), combo));
            }
        }
    }
}
