use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use super::engine::{BranchResult, Engine, ExtMemo, Objective};
use super::{mask_of, Class, Composition, Family, OptimalSet, Partition, Stats, SynthError};
use crate::metrics::{CountTriple, Ratio};

type Results = HashMap<(u32, u32), Arc<BranchResult>>;

/// `(E⁺, E⁻)` of every block: a guard must hold on its block and fail on
/// every later one.
fn blocks_of(p: &Partition) -> Vec<(u32, u32)> {
    (0..p.len())
        .map(|i| (mask_of(&p[i]), p[i + 1..].iter().fold(0, |m, b| m | mask_of(b))))
        .collect()
}

/// Runs every distinct block search. Searches sharing `E⁺` share a memo and
/// run in a fixed order, so results and statistics are reproducible.
fn run_branches(en: &Engine<'_>, parts: &[Partition], obj: Objective, stats: &mut Stats) -> Result<Results, SynthError> {
    let mut groups: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for p in parts {
        for (pos, neg) in blocks_of(p) {
            groups.entry(pos).or_default().insert(neg);
        }
    }
    let groups: Vec<(u32, Vec<u32>)> = groups.into_iter().map(|(p, n)| (p, n.into_iter().collect())).collect();
    let done: Vec<(Vec<((u32, u32), BranchResult)>, Stats)> = groups
        .par_iter()
        .map(|(pos, negs)| {
            let mut memo = ExtMemo::default();
            let mut st = Stats::default();
            let mut out = Vec::with_capacity(negs.len());
            for &neg in negs {
                out.push(((*pos, neg), en.branch(*pos, neg, obj, &mut memo, &mut st)?));
            }
            Ok((out, st))
        })
        .collect::<Result<_, SynthError>>()?;
    let mut res = HashMap::new();
    for (out, st) in done {
        *stats += st;
        res.extend(out.into_iter().map(|(k, r)| (k, Arc::new(r))));
    }
    Ok(res)
}

fn feasible<'r>(p: &Partition, res: &'r Results) -> Option<Vec<&'r BranchResult>> {
    let rs: Vec<&BranchResult> = blocks_of(p).iter().map(|k| res[k].as_ref()).collect();
    rs.iter().all(|r| !r.is_empty()).then_some(rs)
}

/// Linear totals are integers: every block score has denominator 1.
fn total(rs: &[&BranchResult]) -> i128 {
    rs.iter().map(|r| r.best.num).sum()
}

pub(super) fn solve(en: &Engine<'_>, parts: &[Partition]) -> Result<OptimalSet, SynthError> {
    match en.cfg().composition {
        Composition::Exact => exact(en, parts),
        Composition::PerBlock => per_block(en, parts),
    }
}

fn exact(en: &Engine<'_>, parts: &[Partition]) -> Result<OptimalSet, SynthError> {
    let mut stats = Stats::default();
    let run = |a: u64, b: u64, stats: &mut Stats| {
        stats.iterations += 1;
        run_branches(en, parts, Objective::Linear { a, b }, stats)
    };
    let (f1, res) = if en.total_gold() == 0 {
        // Only empty outputs score 1; if none exist, every program scores 0.
        let res = run(1, 1, &mut stats)?;
        let empty_ok = parts.iter().filter_map(|p| feasible(p, &res)).any(|rs| total(&rs) == 0);
        if empty_ok {
            (Ratio::ONE, res)
        } else {
            (Ratio::ZERO, run(0, 1, &mut stats)?)
        }
    } else {
        let mut lam = Ratio::ZERO;
        loop {
            let res = run(lam.num, lam.den, &mut stats)?;
            let better = parts
                .iter()
                .filter_map(|p| feasible(p, &res))
                .filter(|rs| total(rs) > 0)
                .map(|rs| rs.iter().map(|r| r.entries[0].ext.groups[0].0).sum::<CountTriple>().f1_ratio())
                .max();
            match better {
                Some(f) => {
                    debug_assert!(f > lam);
                    lam = f;
                }
                None => break (lam, res),
            }
        }
    };
    let mut families = Vec::new();
    for p in parts {
        let Some(rs) = feasible(p, &res) else { continue };
        if total(&rs) != 0 {
            continue;
        }
        let blocks = rs
            .iter()
            .map(|r| {
                r.entries
                    .iter()
                    .map(|e| Class { guards: e.guards.clone(), extractors: e.ext.extractors().cloned().collect() })
                    .collect()
            })
            .collect();
        families.push(Family { partition: p.clone(), blocks });
    }
    Ok(OptimalSet { ctx: en.examples().ctx.clone(), f1, families, stats })
}

fn per_block(en: &Engine<'_>, parts: &[Partition]) -> Result<OptimalSet, SynthError> {
    let mut stats = Stats { iterations: 1, ..Stats::default() };
    let res = run_branches(en, parts, Objective::F1, &mut stats)?;
    let mut best: Option<Ratio> = None;
    let mut winners: Vec<(&Partition, Vec<CountTriple>)> = Vec::new();
    for p in parts {
        let Some(rs) = feasible(p, &res) else { continue };
        let options: Vec<Vec<CountTriple>> = rs
            .iter()
            .map(|r| {
                let s: BTreeSet<CountTriple> = r.entries.iter().flat_map(|e| e.ext.groups.iter().map(|g| g.0)).collect();
                s.into_iter().collect()
            })
            .collect();
        for combo in product(&options) {
            let f = combo.iter().copied().sum::<CountTriple>().f1_ratio();
            if best.is_none_or(|b| f > b) {
                best = Some(f);
                winners.clear();
            }
            if best == Some(f) {
                winners.push((p, combo));
            }
        }
    }
    let families = winners
        .into_iter()
        .map(|(p, combo)| {
            let blocks = feasible(p, &res)
                .expect("winner is feasible")
                .iter()
                .zip(&combo)
                .map(|(r, t)| {
                    r.entries
                        .iter()
                        .filter_map(|e| {
                            let xs = &e.ext.groups.iter().find(|g| g.0 == *t)?.1;
                            Some(Class { guards: e.guards.clone(), extractors: xs.clone() })
                        })
                        .collect()
                })
                .collect();
            Family { partition: p.clone(), blocks }
        })
        .collect();
    Ok(OptimalSet { ctx: en.examples().ctx.clone(), f1: best.unwrap_or(Ratio::ZERO), families, stats })
}

/// Cartesian product of the option lists, in lexicographic order.
pub(super) fn product<T: Clone>(options: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for opts in options {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                opts.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o.clone());
                    v
                })
            })
            .collect();
    }
    out
}
