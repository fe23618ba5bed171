//! Which pages to label next: cluster the corpus on cheap structural and
//! predicate features and propose one representative per uncovered cluster.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{Interp, Locator, NodeFilter, Pred};
use crate::nlp::{EntityLabel, Nlp, NlpError, PredicateKind, TaskContext, Threshold};
use crate::webtree::{Corpus, NodeType, Webpage};

/// Most pages a user is asked to label in one round.
pub const MAX_BUDGET: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum SuggestError {
    #[error("budget must be between 1 and {MAX_BUDGET}, got {0}")]
    Budget(usize),
    #[error("invalid feature config: {0}")]
    Config(String),
    #[error(transparent)]
    Nlp(#[from] NlpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub keyword_threshold: f64,
    /// Entity labels for the histogram; the provider's vocabulary if absent.
    pub labels: Option<Vec<EntityLabel>>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { keyword_threshold: 0.5, labels: None }
    }
}

impl FeatureConfig {
    fn labels(&self, nlp: &Nlp) -> Vec<EntityLabel> {
        self.labels.clone().unwrap_or_else(|| nlp.labels().to_vec())
    }

    fn threshold(&self) -> Result<Threshold, SuggestError> {
        Threshold::from_f64(self.keyword_threshold)
            .ok_or_else(|| SuggestError::Config(format!("keyword threshold {} is outside [0, 1]", self.keyword_threshold)))
    }
}

/// Feature vector of one page. Counts are bucketed by bit length so that
/// one long list does not outweigh every other feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PageFeatures(pub Vec<u32>);

impl PageFeatures {
    pub fn l1(&self, other: &PageFeatures) -> u64 {
        self.0.iter().zip(&other.0).map(|(a, b)| u64::from(a.abs_diff(*b))).sum()
    }
}

fn bucket(n: usize) -> u32 {
    usize::BITS - n.leading_zeros()
}

fn keyword_section(t: Threshold) -> Locator {
    Locator::descendants(Locator::Root, NodeFilter::MatchText(Pred::atom(PredicateKind::KeywordMatch(t)), false))
}

fn entity_filters(cfg: &FeatureConfig, nlp: &Nlp) -> Vec<NodeFilter> {
    cfg.labels(nlp).into_iter().map(|l| NodeFilter::MatchText(Pred::atom(PredicateKind::HasEntity(l)), false)).collect()
}

/// The fixed locator templates, all of depth at most two. Keyword templates
/// are included only when a task context is known.
pub fn templates(cfg: &FeatureConfig, nlp: &Nlp, keywords: bool) -> Result<Vec<Locator>, SuggestError> {
    let t = cfg.threshold()?;
    let ents = entity_filters(cfg, nlp);
    let mut one = vec![NodeFilter::True, NodeFilter::IsLeaf];
    if keywords {
        let kw = Pred::atom(PredicateKind::KeywordMatch(t));
        one.push(NodeFilter::MatchText(kw.clone(), false));
        one.push(NodeFilter::MatchText(kw, true));
    }
    one.extend(ents.iter().cloned());
    let mut out = Vec::new();
    for f in &one {
        out.push(Locator::children(Locator::Root, f.clone()));
        out.push(Locator::descendants(Locator::Root, f.clone()));
    }
    out.push(Locator::children(Locator::children(Locator::Root, NodeFilter::True), NodeFilter::True));
    if keywords {
        out.push(Locator::children(keyword_section(t), NodeFilter::True));
        out.push(Locator::descendants(keyword_section(t), NodeFilter::IsLeaf));
        for f in ents {
            out.push(Locator::descendants(keyword_section(t), f));
        }
    }
    Ok(out)
}

/// Template nonemptiness bits, then per-label entity counts (under keyword
/// sections when a context is given, else page-wide), then height, list,
/// table and leaf counts.
pub fn featurize(
    w: &Webpage,
    ctx: Option<&TaskContext>,
    cfg: &FeatureConfig,
    nlp: &Nlp,
) -> Result<PageFeatures, SuggestError> {
    // Entity predicates ignore the task; this stands in when none is given.
    let neutral = TaskContext { question: "-".into(), keywords: vec!["-".into()] };
    let it = Interp::new(nlp, ctx.unwrap_or(&neutral));
    let t = cfg.threshold()?;
    let mut v = Vec::new();
    for l in templates(cfg, nlp, ctx.is_some())? {
        v.push(u32::from(!it.locate(&l, w)?.is_empty()));
    }
    let scope = if ctx.is_some() { keyword_section(t) } else { Locator::Root };
    for f in entity_filters(cfg, nlp) {
        v.push(bucket(it.locate(&Locator::descendants(scope.clone(), f), w)?.len()));
    }
    let kinds = |k: NodeType| w.nodes().iter().filter(|n| n.kind == k).count();
    let leaves = (0..w.len()).filter(|&p| w.is_leaf_at(p)).count();
    v.extend([bucket(w.height()), bucket(kinds(NodeType::List)), bucket(kinds(NodeType::Table)), bucket(leaves)]);
    Ok(PageFeatures(v))
}

/// A k-medoids clustering: medoid indices and each point's cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub medoids: Vec<usize>,
    pub assignment: Vec<usize>,
}

/// Alternating k-medoids under L1 from a seeded farthest-first start.
/// Fewer than `k` clusters come back when there are fewer distinct points.
pub fn kmedoids(points: &[PageFeatures], k: usize, seed: u64) -> Clustering {
    let n = points.len();
    if n == 0 || k == 0 {
        return Clustering { medoids: Vec::new(), assignment: Vec::new() };
    }
    let d: Vec<Vec<u64>> = points.iter().map(|a| points.iter().map(|b| a.l1(b)).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medoids = vec![rng.random_range(0..n)];
    while medoids.len() < k {
        let far = (0..n).map(|i| (medoids.iter().map(|&m| d[i][m]).min().unwrap_or(0), std::cmp::Reverse(i))).max();
        match far {
            Some((gap, std::cmp::Reverse(i))) if gap > 0 => medoids.push(i),
            _ => break,
        }
    }
    let assign = |medoids: &[usize]| -> Vec<usize> {
        (0..n).map(|i| (0..medoids.len()).min_by_key(|&c| (d[i][medoids[c]], c)).unwrap_or(0)).collect()
    };
    let mut assignment = assign(&medoids);
    for _ in 0..100 {
        let next: Vec<usize> = (0..medoids.len())
            .map(|c| {
                let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
                members
                    .iter()
                    .copied()
                    .min_by_key(|&i| (members.iter().map(|&j| d[i][j]).sum::<u64>(), i))
                    .unwrap_or(medoids[c])
            })
            .collect();
        if next == medoids {
            break;
        }
        medoids = next;
        assignment = assign(&medoids);
    }
    Clustering { medoids, assignment }
}

/// Up to `budget` unlabeled page ids: the medoids of clusters holding no
/// labeled page, each next one farthest from everything labeled or
/// already suggested. With fewer than `budget` unlabeled pages, all of them.
pub fn suggest_labels(
    corpus: &Corpus,
    labeled: &[String],
    budget: usize,
    seed: u64,
    ctx: Option<&TaskContext>,
    cfg: &FeatureConfig,
    nlp: &Nlp,
) -> Result<Vec<String>, SuggestError> {
    if budget == 0 || budget > MAX_BUDGET {
        return Err(SuggestError::Budget(budget));
    }
    let labeled: BTreeSet<&str> = labeled.iter().map(String::as_str).collect();
    let is_labeled: Vec<bool> = corpus.pages().iter().map(|p| labeled.contains(p.id.as_str())).collect();
    let unlabeled = is_labeled.iter().filter(|l| !**l).count();
    if unlabeled < budget {
        return Ok(corpus.pages().iter().zip(&is_labeled).filter(|(_, l)| !**l).map(|(p, _)| p.id.clone()).collect());
    }
    let pages: Vec<Arc<Webpage>> = corpus.pages().iter().map(|p| Arc::clone(&p.page)).collect();
    let feats: Vec<PageFeatures> =
        pages.par_iter().map(|w| featurize(w, ctx, cfg, nlp)).collect::<Result<_, SuggestError>>()?;
    let distinct = feats.iter().collect::<BTreeSet<_>>().len();
    let cl = kmedoids(&feats, budget.min(distinct), seed);

    let mut open: Vec<(usize, usize)> = Vec::new();
    for (c, &m) in cl.medoids.iter().enumerate() {
        let members: Vec<usize> = (0..feats.len()).filter(|&i| cl.assignment[i] == c).collect();
        if members.iter().all(|&i| !is_labeled[i]) {
            open.push((m, members.len()));
        }
    }
    let mut anchors: Vec<usize> = (0..feats.len()).filter(|&i| is_labeled[i]).collect();
    let mut out = Vec::new();
    while !open.is_empty() {
        let key = |&(m, size): &(usize, usize)| {
            let gap = anchors.iter().map(|&a| feats[m].l1(&feats[a])).min().unwrap_or(u64::MAX);
            (gap, size, std::cmp::Reverse(m))
        };
        let (k, _) = open.iter().enumerate().max_by_key(|(_, o)| key(o)).expect("nonempty");
        let (m, _) = open.remove(k);
        anchors.push(m);
        out.push(corpus.pages()[m].id.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::webtree::{parse_html_str, CorpusPage};

    fn ctx() -> TaskContext {
        TaskContext::new("Which awards has this person received?", vec!["Awards".into()]).unwrap()
    }

    fn corpus(pages: &[(&str, &str)]) -> Corpus {
        Corpus::new(
            pages
                .iter()
                .map(|(id, html)| CorpusPage { id: id.to_string(), page: Arc::new(parse_html_str(html)) })
                .collect(),
        )
        .unwrap()
    }

    const LIST: &str = "<h1>Jo</h1><h2>Awards</h2><ul><li>Best Paper 2019</li><li>Gold Medal 2020</li></ul>";
    const TABLE: &str =
        "<h1>Jo</h1><h2>Teaching</h2><table><tr><td>CS 101</td><td>Fall</td></tr><tr><td>CS 202</td></tr></table><p>x</p>";

    #[test]
    fn one_node_page_has_no_locator_bits() {
        let nlp = Nlp::baseline();
        let cfg = FeatureConfig::default();
        let f = featurize(&parse_html_str(""), Some(&ctx()), &cfg, &nlp).unwrap();
        let bits = templates(&cfg, &nlp, true).unwrap().len();
        assert!(f.0[..bits].iter().all(|&b| b == 0));
    }

    #[test]
    fn identical_pages_have_equal_features() {
        let nlp = Nlp::baseline();
        let cfg = FeatureConfig::default();
        let a = featurize(&parse_html_str(LIST), Some(&ctx()), &cfg, &nlp).unwrap();
        let b = featurize(&parse_html_str(LIST), Some(&ctx()), &cfg, &nlp).unwrap();
        let c = featurize(&parse_html_str(TABLE), Some(&ctx()), &cfg, &nlp).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.0.len(), c.0.len());
    }

    #[test]
    fn identical_pages_give_one_suggestion() {
        let ids: Vec<String> = (0..7).map(|i| format!("p{i}")).collect();
        let c = corpus(&ids.iter().map(|i| (i.as_str(), LIST)).collect::<Vec<_>>());
        let s = suggest_labels(&c, &[], 5, 3, Some(&ctx()), &FeatureConfig::default(), &Nlp::baseline()).unwrap();
        assert_eq!(s.len(), 1);
    }

    fn two_clusters() -> Corpus {
        corpus(&[("l1", LIST), ("t1", TABLE), ("l2", LIST), ("t2", TABLE), ("l3", LIST), ("t3", TABLE)])
    }

    #[test]
    fn two_clusters_get_one_page_each() {
        for seed in 0..10 {
            let s = suggest_labels(&two_clusters(), &[], 2, seed, Some(&ctx()), &FeatureConfig::default(), &Nlp::baseline())
                .unwrap();
            assert_eq!(s.len(), 2);
            let kinds: BTreeSet<char> = s.iter().map(|id| id.chars().next().unwrap()).collect();
            assert_eq!(kinds.len(), 2, "seed {seed}: {s:?}");
        }
    }

    #[test]
    fn labeled_cluster_is_skipped() {
        let s = suggest_labels(&two_clusters(), &["l2".into()], 2, 0, Some(&ctx()), &FeatureConfig::default(), &Nlp::baseline())
            .unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].starts_with('t'));
    }

    #[test]
    fn few_unlabeled_pages_are_all_returned() {
        let c = corpus(&[("a", LIST), ("b", LIST), ("c", TABLE)]);
        let s = suggest_labels(&c, &["a".into()], 5, 0, Some(&ctx()), &FeatureConfig::default(), &Nlp::baseline()).unwrap();
        assert_eq!(s, vec!["b".to_string(), "c".to_string()]);
    }

    #[test]
    fn budget_is_bounded() {
        let nlp = Nlp::baseline();
        for b in [0, 6] {
            let r = suggest_labels(&two_clusters(), &[], b, 0, Some(&ctx()), &FeatureConfig::default(), &nlp);
            assert!(matches!(r, Err(SuggestError::Budget(_))));
        }
    }

    #[test]
    fn kmedoids_is_seed_deterministic() {
        let pts: Vec<PageFeatures> = (0..12u32).map(|i| PageFeatures(vec![i % 4, i / 4, (i * 7) % 5])).collect();
        for seed in 0..5 {
            assert_eq!(kmedoids(&pts, 3, seed), kmedoids(&pts, 3, seed));
            let cl = kmedoids(&pts, 3, seed);
            assert_eq!(cl.medoids.len(), 3);
            for (c, &m) in cl.medoids.iter().enumerate() {
                assert_eq!(cl.assignment[m], c);
            }
        }
    }
}
