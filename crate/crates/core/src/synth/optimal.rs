use std::collections::BTreeSet;
use std::ops::AddAssign;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::SynthError;
use crate::dsl::{
    canonical, extractor_value, guard_value, parse_extractor, parse_guard, Branch, Extractor, Guard, Program,
};
use crate::metrics::Ratio;
use crate::nlp::TaskContext;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub locators_expanded: u64,
    pub extractors_expanded: u64,
    /// Guard × extractor pairs scored by the joint search.
    pub pairs_evaluated: u64,
    pub pruned_locators: u64,
    pub pruned_guards: u64,
    pub pruned_extractors: u64,
    pub cache_hits: u64,
    pub branch_searches: u64,
    pub iterations: u64,
}

impl Stats {
    pub fn nodes_expanded(&self) -> u64 {
        self.locators_expanded + self.extractors_expanded + self.pairs_evaluated
    }
}

impl AddAssign for Stats {
    fn add_assign(&mut self, o: Stats) {
        self.locators_expanded += o.locators_expanded;
        self.extractors_expanded += o.extractors_expanded;
        self.pairs_evaluated += o.pairs_evaluated;
        self.pruned_locators += o.pruned_locators;
        self.pruned_guards += o.pruned_guards;
        self.pruned_extractors += o.pruned_extractors;
        self.cache_hits += o.cache_hits;
        self.branch_searches += o.branch_searches;
        self.iterations += o.iterations;
    }
}

/// Every guard here pairs with every extractor here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Class {
    pub guards: Vec<Guard>,
    pub extractors: Vec<Extractor>,
}

impl Class {
    fn count(&self) -> u128 {
        self.guards.len() as u128 * self.extractors.len() as u128
    }
}

/// Programs sharing one ordered partition: branch `i` is any pair drawn
/// from any class of `blocks[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Family {
    pub partition: Vec<Vec<usize>>,
    pub blocks: Vec<Vec<Class>>,
}

impl Family {
    fn block_count(b: &[Class]) -> u128 {
        b.iter().map(Class::count).sum()
    }

    pub fn count(&self) -> u128 {
        self.blocks.iter().map(|b| Self::block_count(b)).product()
    }

    fn branch_at(block: &[Class], mut i: u128) -> Branch {
        for c in block {
            if i < c.count() {
                let nx = c.extractors.len() as u128;
                return Branch::new(c.guards[(i / nx) as usize].clone(), c.extractors[(i % nx) as usize].clone());
            }
            i -= c.count();
        }
        unreachable!("index within block count")
    }
}

/// The set of optimal programs, stored as a union of disjoint products.
#[derive(Debug, Clone)]
pub struct OptimalSet {
    pub ctx: TaskContext,
    pub f1: Ratio,
    pub families: Vec<Family>,
    pub stats: Stats,
}

impl OptimalSet {
    pub fn count(&self) -> u128 {
        self.families.iter().map(Family::count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// The `i`-th program in a fixed enumeration order.
    pub fn program_at(&self, mut i: u128) -> Option<Program> {
        for f in &self.families {
            let n = f.count();
            if i < n {
                let mut branches = Vec::with_capacity(f.blocks.len());
                for b in f.blocks.iter().rev() {
                    let m = Family::block_count(b);
                    branches.push(Family::branch_at(b, i % m));
                    i /= m;
                }
                branches.reverse();
                return Some(Program::new(self.ctx.clone(), branches));
            }
            i -= n;
        }
        None
    }

    /// A uniform draw from the set.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Option<Program> {
        let n = self.count();
        if n == 0 {
            return None;
        }
        self.program_at(rng.random_range(0..n))
    }

    pub fn contains(&self, p: &Program) -> bool {
        p.ctx == self.ctx
            && self.families.iter().any(|f| {
                f.blocks.len() == p.branches.len()
                    && f.blocks.iter().zip(&p.branches).all(|(b, br)| {
                        b.iter().any(|c| c.guards.contains(&br.guard) && c.extractors.contains(&br.extractor))
                    })
            })
    }

    /// The programs of minimum AST size, in the same factored form.
    pub fn min_size_subset(&self) -> OptimalSet {
        let class_min = |c: &Class| {
            c.guards.iter().map(Guard::size).min().unwrap_or(usize::MAX / 4)
                + c.extractors.iter().map(Extractor::size).min().unwrap_or(usize::MAX / 4)
        };
        let block_min = |b: &[Class]| b.iter().map(class_min).min().unwrap_or(usize::MAX / 4);
        let fam_min = |f: &Family| f.blocks.iter().map(|b| block_min(b)).sum::<usize>();
        let best = self.families.iter().map(fam_min).min();
        let families = self
            .families
            .iter()
            .filter(|f| Some(fam_min(f)) == best)
            .map(|f| Family {
                partition: f.partition.clone(),
                blocks: f
                    .blocks
                    .iter()
                    .map(|b| {
                        let m = block_min(b);
                        b.iter()
                            .filter(|c| class_min(c) == m)
                            .map(|c| {
                                let gm = c.guards.iter().map(Guard::size).min().unwrap_or(0);
                                let xm = c.extractors.iter().map(Extractor::size).min().unwrap_or(0);
                                Class {
                                    guards: c.guards.iter().filter(|g| g.size() == gm).cloned().collect(),
                                    extractors: c.extractors.iter().filter(|x| x.size() == xm).cloned().collect(),
                                }
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect();
        OptimalSet { ctx: self.ctx.clone(), f1: self.f1, families, stats: self.stats }
    }

    pub fn programs(&self, cap: u128) -> Result<Vec<Program>, SynthError> {
        let n = self.count();
        if n > cap {
            return Err(SynthError::CapExceeded { what: "optimal program count", count: n, cap });
        }
        Ok((0..n).filter_map(|i| self.program_at(i)).collect())
    }

    /// Canonical strings of every program.
    pub fn canonical_set(&self, cap: u128) -> Result<BTreeSet<String>, SynthError> {
        Ok(self.programs(cap)?.iter().map(canonical).collect())
    }

    pub fn to_file(&self) -> OptimalSetFile {
        OptimalSetFile {
            question: self.ctx.question.clone(),
            keywords: self.ctx.keywords.clone(),
            f1: self.f1.value(),
            f1_exact: [self.f1.num, self.f1.den],
            count: self.count().to_string(),
            families: self
                .families
                .iter()
                .map(|f| FamilyFile {
                    partition: f.partition.clone(),
                    blocks: f
                        .blocks
                        .iter()
                        .map(|b| {
                            b.iter()
                                .map(|c| ClassFile {
                                    guards: c.guards.iter().map(guard_value).collect(),
                                    extractors: c.extractors.iter().map(extractor_value).collect(),
                                })
                                .collect()
                        })
                        .collect(),
                })
                .collect(),
            stats: self.stats,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("serializable")
    }

    pub fn from_file(f: &OptimalSetFile) -> Result<OptimalSet, SynthError> {
        let ctx = TaskContext::new(f.question.clone(), f.keywords.clone()).map_err(|e| SynthError::Format(e.to_string()))?;
        let fmt = |e: crate::dsl::ParseError| SynthError::Format(e.to_string());
        let mut families = Vec::with_capacity(f.families.len());
        for fam in &f.families {
            let mut blocks = Vec::with_capacity(fam.blocks.len());
            for b in &fam.blocks {
                let mut classes = Vec::with_capacity(b.len());
                for c in b {
                    classes.push(Class {
                        guards: c.guards.iter().map(parse_guard).collect::<Result<_, _>>().map_err(fmt)?,
                        extractors: c.extractors.iter().map(parse_extractor).collect::<Result<_, _>>().map_err(fmt)?,
                    });
                }
                blocks.push(classes);
            }
            families.push(Family { partition: fam.partition.clone(), blocks });
        }
        let set = OptimalSet { ctx, f1: Ratio::new(f.f1_exact[0], f.f1_exact[1]), families, stats: f.stats };
        if set.count().to_string() != f.count {
            return Err(SynthError::Format(format!("count {} does not match the stored families", f.count)));
        }
        Ok(set)
    }

    pub fn from_json(s: &str) -> Result<OptimalSet, SynthError> {
        let f: OptimalSetFile = serde_json::from_str(s).map_err(|e| SynthError::Format(e.to_string()))?;
        OptimalSet::from_file(&f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassFile {
    pub guards: Vec<Value>,
    pub extractors: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyFile {
    pub partition: Vec<Vec<usize>>,
    pub blocks: Vec<Vec<ClassFile>>,
}

/// On-disk form of an [`OptimalSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSetFile {
    pub question: String,
    pub keywords: Vec<String>,
    pub f1: f64,
    pub f1_exact: [u64; 2],
    /// Decimal string; counts can exceed 64 bits.
    pub count: String,
    pub families: Vec<FamilyFile>,
    pub stats: Stats,
}
