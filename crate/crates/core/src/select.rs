//! Choosing one program from an optimal set by agreement on unlabeled pages.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{canonical, eval_program, Program, StringSet};
use crate::metrics::hamming_tokens;
use crate::nlp::{Nlp, NlpError};
use crate::synth::OptimalSet;
use crate::webtree::{tokenize_all, TokenSet, Webpage};

#[derive(Debug, thiserror::Error)]
pub enum SelectError {
    #[error("the optimal program set is empty")]
    EmptySet,
    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,
    #[error(transparent)]
    Nlp(#[from] NlpError),
}

/// Programs drawn uniformly with replacement from an optimal set.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub programs: Vec<Program>,
    pub seed: u64,
}

pub fn build_ensemble(set: &OptimalSet, n: usize, seed: u64) -> Result<Ensemble, SelectError> {
    if n == 0 {
        return Err(SelectError::EmptyEnsemble);
    }
    if set.is_empty() {
        return Err(SelectError::EmptySet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let programs = (0..n).map(|_| set.sample(&mut rng).expect("nonempty set")).collect();
    Ok(Ensemble { programs, seed })
}

/// Outputs of every ensemble member on every unlabeled page. Members with
/// the same canonical form share one row.
#[derive(Debug, Clone)]
pub struct OutputMatrix {
    /// Distinct programs in order of first appearance, with their outputs.
    pub distinct: Vec<(String, Program, Arc<Vec<StringSet>>)>,
    /// Row `j` is `distinct[rows[j]]`.
    pub rows: Vec<usize>,
    pub columns: usize,
}

impl OutputMatrix {
    pub fn row(&self, j: usize) -> &[StringSet] {
        &self.distinct[self.rows[j]].2
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// How many rows each distinct program occupies.
    pub fn multiplicities(&self) -> Vec<u64> {
        let mut m = vec![0; self.distinct.len()];
        for &r in &self.rows {
            m[r] += 1;
        }
        m
    }
}

pub fn ensemble_outputs(ens: &Ensemble, pages: &[Arc<Webpage>], nlp: &Nlp) -> Result<OutputMatrix, SelectError> {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut firsts: Vec<(String, &Program)> = Vec::new();
    let mut rows = Vec::with_capacity(ens.programs.len());
    for p in &ens.programs {
        let c = canonical(p);
        let next = firsts.len();
        let i = *index.entry(c.clone()).or_insert(next);
        if i == next {
            firsts.push((c, p));
        }
        rows.push(i);
    }
    let outputs: Vec<Vec<StringSet>> = firsts
        .par_iter()
        .map(|(_, p)| pages.iter().map(|w| eval_program(p, w, nlp)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    let distinct = firsts.into_iter().zip(outputs).map(|((c, p), o)| (c, p.clone(), Arc::new(o))).collect();
    Ok(OutputMatrix { distinct, rows, columns: pages.len() })
}

/// `Σ_j Σ_k hamming(π(i_k), O_jk)` for a program with outputs `outputs`.
pub fn transductive_loss(outputs: &[StringSet], m: &OutputMatrix) -> u64 {
    let mine: Vec<TokenSet> = outputs.iter().map(tokenize_all).collect();
    let theirs: Vec<Vec<TokenSet>> = m.distinct.iter().map(|(_, _, o)| o.iter().map(tokenize_all).collect()).collect();
    loss_tokens(&mine, &theirs, &m.multiplicities())
}

fn loss_tokens(mine: &[TokenSet], theirs: &[Vec<TokenSet>], mult: &[u64]) -> u64 {
    theirs
        .iter()
        .zip(mult)
        .map(|(row, &c)| c * mine.iter().zip(row).map(|(a, b)| hamming_tokens(a, b) as u64).sum::<u64>())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub program: String,
    pub count: u64,
    pub size: usize,
    pub loss: u64,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub program: Program,
    pub loss: u64,
    /// Distinct ensemble members by loss, then size, then canonical form.
    pub candidates: Vec<Candidate>,
}

/// Loss report: `{"n","seed","chosen","candidates":[..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossReport {
    pub n: usize,
    pub seed: u64,
    pub chosen: String,
    pub candidates: Vec<Candidate>,
}

/// The ensemble member with the least summed disagreement with the whole
/// ensemble on `pages`; ties go to the smaller, then the canonically first.
pub fn select_from(m: &OutputMatrix) -> Result<Selection, SelectError> {
    if m.is_empty() {
        return Err(SelectError::EmptyEnsemble);
    }
    let mult = m.multiplicities();
    let tokens: Vec<Vec<TokenSet>> = m.distinct.iter().map(|(_, _, o)| o.iter().map(tokenize_all).collect()).collect();
    let mut candidates: Vec<(Candidate, usize)> = tokens
        .par_iter()
        .enumerate()
        .map(|(i, mine)| {
            let (c, p, _) = &m.distinct[i];
            (Candidate { program: c.clone(), count: mult[i], size: p.size(), loss: loss_tokens(mine, &tokens, &mult) }, i)
        })
        .collect();
    candidates.sort_by(|(a, _), (b, _)| (a.loss, a.size, &a.program).cmp(&(b.loss, b.size, &b.program)));
    let (best, i) = &candidates[0];
    Ok(Selection {
        program: m.distinct[*i].1.clone(),
        loss: best.loss,
        candidates: candidates.into_iter().map(|(c, _)| c).collect(),
    })
}

pub fn select(
    set: &OptimalSet,
    pages: &[Arc<Webpage>],
    n: usize,
    seed: u64,
    nlp: &Nlp,
) -> Result<Selection, SelectError> {
    let ens = build_ensemble(set, n, seed)?;
    let m = ensemble_outputs(&ens, pages, nlp)?;
    select_from(&m)
}

pub fn select_random(set: &OptimalSet, seed: u64) -> Result<Program, SelectError> {
    set.sample(&mut ChaCha8Rng::seed_from_u64(seed)).ok_or(SelectError::EmptySet)
}

/// A uniform draw among the programs of minimum AST size.
pub fn select_shortest(set: &OptimalSet, seed: u64) -> Result<Program, SelectError> {
    select_random(&set.min_size_subset(), seed)
}

/// The empirical distribution over output matrices: each distinct matrix
/// with the number of ensemble rows producing it.
pub fn output_distribution(m: &OutputMatrix) -> Vec<(Vec<StringSet>, u64)> {
    let mut by: BTreeMap<Vec<StringSet>, u64> = BTreeMap::new();
    for j in 0..m.len() {
        *by.entry(m.row(j).to_vec()).or_default() += 1;
    }
    by.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{Branch, Extractor, Guard, Locator, Pred};
    use crate::metrics::Ratio;
    use crate::nlp::TaskContext;
    use crate::synth::{Class, Family, Stats};
    use crate::webtree::parse_html_str;

    fn ctx() -> TaskContext {
        TaskContext::new("q", vec!["k".into()]).unwrap()
    }

    fn single(guards: Vec<Guard>, extractors: Vec<Extractor>) -> OptimalSet {
        OptimalSet {
            ctx: ctx(),
            f1: Ratio::ONE,
            families: vec![Family { partition: vec![vec![0]], blocks: vec![vec![Class { guards, extractors }]] }],
            stats: Stats::default(),
        }
    }

    fn pages() -> Vec<Arc<Webpage>> {
        vec![
            Arc::new(parse_html_str("<h1>Home</h1><ul><li>a, b</li><li>c</li></ul>")),
            Arc::new(parse_html_str("<h1>Other</h1><p>d, e</p>")),
        ]
    }

    #[test]
    fn singleton_set() {
        let s = single(vec![Guard::Sat(Locator::Root, Pred::True)], vec![Extractor::Content]);
        let nlp = Nlp::baseline();
        let chosen = select(&s, &pages(), 10, 1, &nlp).unwrap();
        assert_eq!(canonical(&chosen.program), canonical(&s.program_at(0).unwrap()));
        assert_eq!(chosen.loss, 0);
        assert_eq!(canonical(&select_random(&s, 4).unwrap()), canonical(&chosen.program));
        assert_eq!(canonical(&select_shortest(&s, 4).unwrap()), canonical(&chosen.program));
        let e = build_ensemble(&s, 5, 2).unwrap();
        assert!(e.programs.iter().all(|p| p == &e.programs[0]));
    }

    #[test]
    fn errors() {
        let empty = OptimalSet { ctx: ctx(), f1: Ratio::ZERO, families: vec![], stats: Stats::default() };
        assert!(matches!(build_ensemble(&empty, 3, 0), Err(SelectError::EmptySet)));
        assert!(matches!(select_random(&empty, 0), Err(SelectError::EmptySet)));
        let s = single(vec![Guard::Sat(Locator::Root, Pred::True)], vec![Extractor::Content]);
        assert!(matches!(build_ensemble(&s, 0, 0), Err(SelectError::EmptyEnsemble)));
    }

    #[test]
    fn duplicate_members_share_rows_and_empty_corpus() {
        let xs = vec![Extractor::Content, Extractor::split(Extractor::Content, ',')];
        let s = single(vec![Guard::Sat(Locator::leaves(Locator::Root), Pred::True)], xs);
        let nlp = Nlp::baseline();
        let ens = build_ensemble(&s, 50, 9).unwrap();
        let m = ensemble_outputs(&ens, &pages(), &nlp).unwrap();
        assert_eq!(m.len(), 50);
        assert_eq!(m.distinct.len(), 2);
        for (j, p) in ens.programs.iter().enumerate() {
            let direct: Vec<StringSet> = pages().iter().map(|w| eval_program(p, w, &nlp).unwrap()).collect();
            assert_eq!(m.row(j), direct.as_slice());
        }
        let none = ensemble_outputs(&ens, &[], &nlp).unwrap();
        assert_eq!((none.len(), none.columns), (50, 0));
        assert!(none.row(0).is_empty());
    }

    #[test]
    fn shortest_prefers_smaller_programs() {
        let small = Extractor::Content;
        let big = Extractor::split(Extractor::split(Extractor::Content, ','), ';');
        let s = single(vec![Guard::Sat(Locator::Root, Pred::True)], vec![big, small.clone()]);
        for seed in 0..5 {
            assert_eq!(select_shortest(&s, seed).unwrap().branches[0].extractor, small);
        }
    }

    #[test]
    fn loss_of_identical_member_is_zero() {
        let s = single(vec![Guard::Sat(Locator::Root, Pred::True)], vec![Extractor::Content]);
        let nlp = Nlp::baseline();
        let m = ensemble_outputs(&build_ensemble(&s, 4, 0).unwrap(), &pages(), &nlp).unwrap();
        assert_eq!(transductive_loss(m.row(0), &m), 0);
        let dist = output_distribution(&m);
        assert_eq!(dist.len(), 1);
        assert_eq!(dist[0].1, 4);
    }

    #[test]
    fn majority_behavior_wins() {
        // Nine members agree on the unlabeled pages, one does not.
        let agree = Branch::new(Guard::Sat(Locator::leaves(Locator::Root), Pred::True), Extractor::Content);
        let outlier = Branch::new(Guard::Sat(Locator::Root, Pred::True), Extractor::Content);
        let mut programs = vec![Program::new(ctx(), vec![agree.clone()]); 9];
        programs.push(Program::new(ctx(), vec![outlier]));
        let nlp = Nlp::baseline();
        let m = ensemble_outputs(&Ensemble { programs: programs.clone(), seed: 0 }, &pages(), &nlp).unwrap();
        let chosen = select_from(&m).unwrap();
        assert_eq!(chosen.program.branches, vec![agree]);
        programs.reverse();
        let m2 = ensemble_outputs(&Ensemble { programs, seed: 0 }, &pages(), &nlp).unwrap();
        assert_eq!(select_from(&m2).unwrap().program, chosen.program);
    }
}
