//! Synthesis of every program with maximal F1 on a set of labeled pages.
//!
//! A program is an ordered list of branches. Branch `i` fires first on a
//! nonempty block of examples, so a program induces an ordered partition of
//! the examples and the search runs per partition and per block. Blocks are
//! scored with a linear surrogate of F1 whose optimum is found by iterating
//! on the ratio (see [`Composition::Exact`]).

mod compose;
mod engine;
mod optimal;
mod oracle;

use serde::{Deserialize, Serialize};

use crate::dsl::{Grammar, Shape};
use crate::metrics::ExampleSet;
use crate::nlp::{EntityLabel, Nlp, NlpError, PredicateKind, Threshold};

pub use engine::{propagate_examples, BranchEntry, BranchResult, Engine, ExtResult, GuardStream, Objective, Score};
pub use optimal::{Class, Family, OptimalSet, OptimalSetFile, Stats};
pub use oracle::brute_force_synthesize;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error("invalid synthesis config: {0}")]
    Config(String),
    #[error("no labeled examples")]
    NoExamples,
    #[error("{n} labeled examples exceed the cap of {cap}; label fewer pages or raise max_examples")]
    TooManyExamples { n: usize, cap: usize },
    #[error("{what}: {count} exceeds the cap of {cap}")]
    CapExceeded { what: &'static str, count: u128, cap: u128 },
    #[error("malformed program set: {0}")]
    Format(String),
}

/// How per-block results are combined into whole programs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// Exact: repeatedly maximize `2tp - λ(pred + gold)` per block, raising λ
    /// to the F1 of the best combination until no combination beats it.
    #[default]
    Exact,
    /// Keep only each block's F1 maxima, then combine by count signature.
    PerBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d_g: usize,
    pub d_e: usize,
    pub threshold_step: f64,
    /// Explicit keyword thresholds; overrides `threshold_step` when set.
    pub thresholds: Option<Vec<f64>>,
    pub delimiters: Vec<char>,
    pub ks: Vec<u32>,
    /// Entity labels; `None` takes the provider's vocabulary.
    pub labels: Option<Vec<EntityLabel>>,
    pub use_keyword: bool,
    pub use_answer: bool,
    pub guard_negations: bool,
    pub guard_pairs: bool,
    pub filter_negations: bool,
    pub filter_pairs: bool,
    pub no_prune: bool,
    pub no_decomp: bool,
    pub pooled_recall: bool,
    pub composition: Composition,
    pub max_examples: usize,
    /// Largest guard × extractor space the brute-force oracle accepts.
    pub oracle_cap: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            d_g: 7,
            d_e: 5,
            threshold_step: 0.05,
            thresholds: None,
            delimiters: vec![',', ';', '|', '('],
            ks: vec![1, 2, 3],
            labels: None,
            use_keyword: true,
            use_answer: true,
            guard_negations: true,
            guard_pairs: true,
            filter_negations: true,
            filter_pairs: false,
            no_prune: false,
            no_decomp: false,
            pooled_recall: false,
            composition: Composition::Exact,
            max_examples: 7,
            oracle_cap: 50_000_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.to_string()));
        if self.d_g < 1 || self.d_e < 1 {
            return bad("depth limits must be at least 1");
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return bad("k grid must be nonempty and positive");
        }
        if self.delimiters.is_empty() {
            return bad("delimiter alphabet is empty");
        }
        match &self.thresholds {
            Some(ts) if ts.is_empty() => return bad("threshold grid is empty"),
            Some(ts) if ts.iter().any(|t| !(0.0..=1.0).contains(t)) => return bad("thresholds must lie in [0,1]"),
            None if !(self.threshold_step > 0.0 && self.threshold_step <= 1.0) => {
                return bad("threshold step must lie in (0,1]")
            }
            _ => {}
        }
        if !self.use_keyword && !self.use_answer && self.labels.as_ref().is_some_and(Vec::is_empty) {
            return bad("atom grid is empty");
        }
        Ok(())
    }

    pub fn threshold_grid(&self) -> Vec<Threshold> {
        let mut out: Vec<Threshold> = match &self.thresholds {
            Some(ts) => ts.iter().filter_map(|&t| Threshold::from_f64(t)).collect(),
            None => {
                let step = Threshold::from_f64(self.threshold_step).unwrap_or(Threshold::ONE);
                Threshold::grid(step, Threshold::ONE, step)
            }
        };
        out.sort();
        out.dedup();
        out
    }

    /// The atomic predicates of the search space, keyword thresholds first.
    pub fn atoms(&self, nlp: &Nlp) -> Vec<PredicateKind> {
        let mut out = Vec::new();
        if self.use_keyword {
            out.extend(self.threshold_grid().into_iter().map(PredicateKind::KeywordMatch));
        }
        if self.use_answer {
            out.push(PredicateKind::HasAnswer);
        }
        let labels = self.labels.clone().unwrap_or_else(|| nlp.labels().to_vec());
        out.extend(labels.into_iter().map(PredicateKind::HasEntity));
        out
    }

    pub fn shape(&self) -> Shape {
        Shape {
            guard_negations: self.guard_negations,
            guard_pairs: self.guard_pairs,
            filter_negations: self.filter_negations,
            filter_pairs: self.filter_pairs,
        }
    }

    pub fn grammar(&self, nlp: &Nlp) -> Grammar {
        Grammar::new(self.atoms(nlp), self.ks.clone(), self.delimiters.clone(), self.d_g, self.d_e, self.shape())
    }
}

/// An ordered partition: blocks of example indices, each sorted.
pub type Partition = Vec<Vec<usize>>;

/// Every ordered set partition of `0..n`, by block count and then
/// lexicographically.
pub fn ordered_partitions(n: usize, cap: usize) -> Result<Vec<Partition>, SynthError> {
    if n == 0 {
        return Err(SynthError::NoExamples);
    }
    if n > cap {
        return Err(SynthError::TooManyExamples { n, cap });
    }
    let mut out = Vec::new();
    let mut labels = vec![0usize; n];
    for k in 1..=n {
        let mut level = Vec::new();
        surjections(0, k, &mut labels, &mut level);
        level.sort();
        out.extend(level);
    }
    Ok(out)
}

fn surjections(i: usize, k: usize, labels: &mut [usize], out: &mut Vec<Partition>) {
    if i == labels.len() {
        let mut blocks = vec![Vec::new(); k];
        for (e, &b) in labels.iter().enumerate() {
            blocks[b].push(e);
        }
        if blocks.iter().all(|b| !b.is_empty()) {
            out.push(blocks);
        }
        return;
    }
    for b in 0..k {
        labels[i] = b;
        surjections(i + 1, k, labels, out);
    }
}

pub(crate) fn mask_of(block: &[usize]) -> u32 {
    block.iter().fold(0, |m, &i| m | 1 << i)
}

/// Every program in the bounded space with maximal micro F1 on `e`.
pub fn synthesize(e: &ExampleSet, cfg: &SynthConfig, nlp: &Nlp) -> Result<OptimalSet, SynthError> {
    cfg.validate()?;
    let parts = ordered_partitions(e.len(), cfg.max_examples)?;
    let engine = Engine::new(e, cfg, nlp);
    compose::solve(&engine, &parts)
}

/// Branch search for one block with the plain F1 objective.
pub fn synthesize_branch(
    e: &ExampleSet,
    pos: &[usize],
    neg: &[usize],
    cfg: &SynthConfig,
    nlp: &Nlp,
) -> Result<(BranchResult, Stats), SynthError> {
    cfg.validate()?;
    if pos.is_empty() {
        return Err(SynthError::Config("positive block is empty".into()));
    }
    if e.len() > cfg.max_examples.min(32) {
        return Err(SynthError::TooManyExamples { n: e.len(), cap: cfg.max_examples.min(32) });
    }
    let engine = Engine::new(e, cfg, nlp);
    let mut stats = Stats::default();
    let mut memo = engine::ExtMemo::default();
    let r = engine.branch(mask_of(pos), mask_of(neg), Objective::F1, &mut memo, &mut stats)?;
    Ok((r, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ordered_bell(n: u64) -> u64 {
        // a(n) = Σ_k C(n,k) a(n-k), a(0) = 1
        let mut a = vec![1u64];
        for m in 1..=n {
            let mut s = 0;
            let mut c = 1u64;
            for k in 1..=m {
                c = c * (m - k + 1) / k;
                s += c * a[(m - k) as usize];
            }
            a.push(s);
        }
        a[n as usize]
    }

    #[test]
    fn partition_counts() {
        assert_eq!(ordered_partitions(1, 7).unwrap(), vec![vec![vec![0]]]);
        assert_eq!(
            ordered_partitions(2, 7).unwrap(),
            vec![vec![vec![0, 1]], vec![vec![0], vec![1]], vec![vec![1], vec![0]]]
        );
        for n in 1..=6 {
            let ps = ordered_partitions(n, 7).unwrap();
            assert_eq!(ps.len() as u64, ordered_bell(n as u64), "n = {n}");
            let uniq: std::collections::BTreeSet<_> = ps.iter().cloned().collect();
            assert_eq!(uniq.len(), ps.len());
            for p in &ps {
                let mut all: Vec<usize> = p.iter().flatten().copied().collect();
                all.sort();
                assert_eq!(all, (0..n).collect::<Vec<_>>());
            }
            assert!(ps.windows(2).all(|w| (w[0].len(), &w[0]) < (w[1].len(), &w[1])));
        }
        assert_eq!(ordered_partitions(3, 7).unwrap().len(), 13);
    }

    #[test]
    fn partition_caps() {
        assert!(matches!(ordered_partitions(0, 7), Err(SynthError::NoExamples)));
        assert!(matches!(ordered_partitions(8, 7), Err(SynthError::TooManyExamples { n: 8, cap: 7 })));
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().validate().is_ok());
        let c = SynthConfig { d_g: 0, ..SynthConfig::default() };
        assert!(c.validate().is_err());
        let c = SynthConfig { thresholds: Some(vec![]), ..SynthConfig::default() };
        assert!(c.validate().is_err());
        let c = SynthConfig { ks: vec![], ..SynthConfig::default() };
        assert!(c.validate().is_err());
        let grid = SynthConfig::default().threshold_grid();
        assert_eq!(grid.len(), 20);
        assert_eq!(grid[0].value(), 0.05);
        assert_eq!(grid[19], Threshold::ONE);
        let j: SynthConfig = serde_json::from_str(r#"{"d_g":3,"composition":"per_block"}"#).unwrap();
        assert_eq!((j.d_g, j.d_e, j.composition), (3, 5, Composition::PerBlock));
        assert!(serde_json::from_str::<SynthConfig>(r#"{"depth":3}"#).is_err());
    }
}
