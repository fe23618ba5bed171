//! Keyword, question-answering and entity predicates over strings.
//!
//! Predicates are answered by a [`Provider`]. Two are built in: a
//! deterministic rule-based [`Baseline`] and an HTTP [`Remote`] client.
//! [`Nlp`] wraps a provider with an in-memory memo and an optional
//! persistent [`cache::PersistentCache`].

mod baseline;
pub mod cache;
mod remote;

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub use baseline::{Baseline, Gazetteers};
pub use cache::PersistentCache;
pub use remote::Remote;

#[derive(Debug, thiserror::Error)]
pub enum NlpError {
    #[error("provider failure: {0}")]
    Provider(String),
    #[error("nlp configuration error: {0}")]
    Config(String),
}

/// A similarity threshold in `[0, 1]`, stored in units of 1/10000.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Threshold(u16);

impl Threshold {
    pub const SCALE: u16 = 10_000;
    pub const ZERO: Threshold = Threshold(0);
    pub const ONE: Threshold = Threshold(Self::SCALE);

    pub fn from_f64(x: f64) -> Option<Threshold> {
        if !(0.0..=1.0).contains(&x) {
            return None;
        }
        Some(Threshold((x * f64::from(Self::SCALE)).round() as u16))
    }

    pub fn from_units(units: u16) -> Option<Threshold> {
        (units <= Self::SCALE).then_some(Threshold(units))
    }

    pub fn units(self) -> u16 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / f64::from(Self::SCALE)
    }

    /// `lo, lo+step, ..., hi` (inclusive where reachable).
    pub fn grid(lo: Threshold, hi: Threshold, step: Threshold) -> Vec<Threshold> {
        if step.0 == 0 {
            return vec![lo];
        }
        (lo.0..=hi.0).step_by(step.0 as usize).map(Threshold).collect()
    }

    /// True when `score` meets this threshold.
    pub fn admits(self, score: f64) -> bool {
        score >= self.value()
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let x = f64::deserialize(d)?;
        Threshold::from_f64(x).ok_or_else(|| serde::de::Error::custom(format!("threshold {x} outside [0,1]")))
    }
}

/// Entity type name such as `ORG` or `DATE`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityLabel(pub String);

impl EntityLabel {
    pub fn new(s: impl Into<String>) -> Self {
        EntityLabel(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn default_labels() -> Vec<EntityLabel> {
    ["PERSON", "ORG", "DATE", "TIME", "LOC"].into_iter().map(EntityLabel::new).collect()
}

/// An atomic NLP predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PredicateKind {
    KeywordMatch(Threshold),
    HasAnswer,
    HasEntity(EntityLabel),
}

impl fmt::Display for PredicateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredicateKind::KeywordMatch(t) => write!(f, "matchKeyword({t})"),
            PredicateKind::HasAnswer => f.write_str("hasAnswer"),
            PredicateKind::HasEntity(l) => write!(f, "hasEntity({l})"),
        }
    }
}

/// The question and keywords a program is synthesized for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskContext {
    pub question: String,
    pub keywords: Vec<String>,
}

impl TaskContext {
    pub fn new(question: impl Into<String>, keywords: Vec<String>) -> Result<Self, NlpError> {
        let ctx = TaskContext { question: question.into(), keywords };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn validate(&self) -> Result<(), NlpError> {
        if self.question.trim().is_empty() {
            return Err(NlpError::Config("question is empty".into()));
        }
        if self.keywords.is_empty() {
            return Err(NlpError::Config("keyword list is empty".into()));
        }
        if let Some(k) = self.keywords.iter().find(|k| crate::webtree::token_spans(k).is_empty()) {
            return Err(NlpError::Config(format!("keyword {k:?} has no tokens")));
        }
        Ok(())
    }
}

/// A scored byte range of the queried string.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

impl Span {
    pub fn text<'a>(&self, z: &'a str) -> &'a str {
        &z[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateVerdict {
    pub holds: bool,
    pub score: f64,
}

/// Provider answer for one query: a verdict plus ranked candidate spans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub holds: bool,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<Span>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QueryKind {
    Keyword,
    Answer,
    Entity,
}

/// One predicate query in wire form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Query<'a> {
    pub kind: QueryKind,
    pub text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub question: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keywords: Option<&'a [String]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<Threshold>,
}

impl<'a> Query<'a> {
    pub fn new(kind: &'a PredicateKind, text: &'a str, ctx: &'a TaskContext) -> Self {
        let mut q = Query { kind: QueryKind::Keyword, text, question: None, keywords: None, label: None, threshold: None };
        match kind {
            PredicateKind::KeywordMatch(t) => {
                q.keywords = Some(&ctx.keywords);
                q.threshold = Some(*t);
            }
            PredicateKind::HasAnswer => {
                q.kind = QueryKind::Answer;
                q.question = Some(&ctx.question);
            }
            PredicateKind::HasEntity(l) => {
                q.kind = QueryKind::Entity;
                q.label = Some(l.as_str());
            }
        }
        q
    }

    /// Digest of every field that determines the answer.
    pub fn key(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("query serializes");
        Sha256::digest(&bytes).into()
    }
}

/// A source of predicate verdicts. Spans, when returned, must be sorted
/// by score descending then start ascending; they may overlap.
pub trait Provider: Send + Sync {
    fn evaluate(&self, q: &Query<'_>) -> Result<Response, NlpError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProviderMode {
    #[default]
    Baseline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    /// Remote mode only.
    pub endpoint: Option<String>,
    pub timeout_secs: u64,
    pub cache_path: Option<PathBuf>,
    pub entity_labels: Vec<EntityLabel>,
    pub org_gazetteer: Option<PathBuf>,
    pub loc_gazetteer: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            mode: ProviderMode::Baseline,
            endpoint: None,
            timeout_secs: 30,
            cache_path: None,
            entity_labels: default_labels(),
            org_gazetteer: None,
            loc_gazetteer: None,
        }
    }
}

/// Memoizing predicate facade shared by the interpreter and the synthesizer.
pub struct Nlp {
    provider: Box<dyn Provider>,
    labels: Vec<EntityLabel>,
    memo: DashMap<[u8; 32], Arc<Response>>,
    cache: Option<PersistentCache>,
    provider_calls: AtomicU64,
}

impl fmt::Debug for Nlp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nlp").field("labels", &self.labels).field("memo", &self.memo.len()).finish()
    }
}

impl Nlp {
    pub fn new(provider: Box<dyn Provider>, labels: Vec<EntityLabel>, cache: Option<PersistentCache>) -> Self {
        Nlp { provider, labels, memo: DashMap::new(), cache, provider_calls: AtomicU64::new(0) }
    }

    /// Rule-based provider with the built-in data files and no persistent cache.
    pub fn baseline() -> Self {
        Nlp::new(Box::new(Baseline::default()), default_labels(), None)
    }

    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, NlpError> {
        if cfg.entity_labels.is_empty() {
            return Err(NlpError::Config("entity label vocabulary is empty".into()));
        }
        let provider: Box<dyn Provider> = match &cfg.mode {
            ProviderMode::Baseline => {
                let gaz = Gazetteers::load(cfg.org_gazetteer.as_deref(), cfg.loc_gazetteer.as_deref())?;
                Box::new(Baseline::new(gaz))
            }
            ProviderMode::Remote => {
                let endpoint = cfg.endpoint.as_deref().filter(|e| !e.trim().is_empty());
                let endpoint = endpoint.ok_or_else(|| NlpError::Config("remote mode requires an endpoint".into()))?;
                Box::new(Remote::new(endpoint, std::time::Duration::from_secs(cfg.timeout_secs))?)
            }
        };
        let cache = cfg.cache_path.as_deref().map(PersistentCache::open).transpose()?;
        Ok(Nlp::new(provider, cfg.entity_labels.clone(), cache))
    }

    pub fn labels(&self) -> &[EntityLabel] {
        &self.labels
    }

    /// Number of queries that reached the provider (memo and cache misses).
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    fn check(&self, kind: &PredicateKind) -> Result<(), NlpError> {
        if let PredicateKind::HasEntity(l) = kind {
            if !self.labels.contains(l) {
                return Err(NlpError::Config(format!("unknown entity label {l}")));
            }
        }
        Ok(())
    }

    fn query(&self, kind: &PredicateKind, z: &str, ctx: &TaskContext) -> Result<Arc<Response>, NlpError> {
        self.check(kind)?;
        let q = Query::new(kind, z, ctx);
        let key = q.key();
        if let Some(r) = self.memo.get(&key) {
            return Ok(Arc::clone(&r));
        }
        let resp = match self.cache.as_ref().and_then(|c| c.get(&key)) {
            Some(r) => r,
            None => {
                self.provider_calls.fetch_add(1, Ordering::Relaxed);
                let r = self.provider.evaluate(&q)?;
                validate_response(&r, z)?;
                if let Some(c) = &self.cache {
                    c.put(key, &r)?;
                }
                r
            }
        };
        let resp = Arc::new(resp);
        self.memo.insert(key, Arc::clone(&resp));
        Ok(resp)
    }

    pub fn verdict(&self, kind: &PredicateKind, z: &str, ctx: &TaskContext) -> Result<PredicateVerdict, NlpError> {
        let r = self.query(kind, z, ctx)?;
        Ok(PredicateVerdict { holds: r.holds, score: r.score })
    }

    pub fn holds(&self, kind: &PredicateKind, z: &str, ctx: &TaskContext) -> Result<bool, NlpError> {
        Ok(self.query(kind, z, ctx)?.holds)
    }

    pub fn match_keyword(&self, z: &str, ctx: &TaskContext, t: Threshold) -> Result<PredicateVerdict, NlpError> {
        self.verdict(&PredicateKind::KeywordMatch(t), z, ctx)
    }

    pub fn has_answer(&self, z: &str, ctx: &TaskContext) -> Result<PredicateVerdict, NlpError> {
        self.verdict(&PredicateKind::HasAnswer, z, ctx)
    }

    pub fn has_entity(&self, z: &str, l: &EntityLabel, ctx: &TaskContext) -> Result<PredicateVerdict, NlpError> {
        self.verdict(&PredicateKind::HasEntity(l.clone()), z, ctx)
    }

    /// Up to `max_k` non-overlapping spans of `z`, best first.
    pub fn extract_spans(
        &self,
        z: &str,
        kind: &PredicateKind,
        ctx: &TaskContext,
        max_k: usize,
    ) -> Result<Vec<Span>, NlpError> {
        let r = self.query(kind, z, ctx)?;
        let Some(cands) = r.spans.as_ref() else { return Ok(Vec::new()) };
        let mut cands: Vec<Span> = cands.iter().map(|s| snap(z, *s)).collect();
        rank_spans(&mut cands);
        let mut picked: Vec<Span> = Vec::new();
        for s in &cands {
            if picked.len() >= max_k {
                break;
            }
            if picked.iter().all(|p| s.end <= p.start || p.end <= s.start) {
                picked.push(*s);
            }
        }
        Ok(picked)
    }
}

fn validate_response(r: &Response, z: &str) -> Result<(), NlpError> {
    if !(0.0..=1.0).contains(&r.score) {
        return Err(NlpError::Provider(format!("score {} outside [0,1]", r.score)));
    }
    for s in r.spans.iter().flatten() {
        let ok = s.start < s.end
            && s.end <= z.len()
            && z.is_char_boundary(s.start)
            && z.is_char_boundary(s.end)
            && (0.0..=1.0).contains(&s.score);
        if !ok {
            return Err(NlpError::Provider(format!("invalid span {}..{} for text of length {}", s.start, s.end, z.len())));
        }
    }
    Ok(())
}

/// Widens a span so it never cuts through a token.
fn snap(z: &str, mut s: Span) -> Span {
    let word = |c: char| c.is_alphanumeric();
    while s.start > 0 {
        let prev = z[..s.start].chars().next_back().expect("nonempty prefix");
        match z[s.start..].chars().next() {
            Some(cur) if word(prev) && word(cur) => s.start -= prev.len_utf8(),
            _ => break,
        }
    }
    while s.end < z.len() {
        let next = z[s.end..].chars().next().expect("nonempty suffix");
        match z[..s.end].chars().next_back() {
            Some(cur) if word(next) && word(cur) => s.end += next.len_utf8(),
            _ => break,
        }
    }
    s
}

/// Sorts candidate spans into canonical rank order.
pub(crate) fn rank_spans(spans: &mut Vec<Span>) {
    spans.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.start.cmp(&b.start))
            .then(b.end.cmp(&a.end))
    });
    spans.dedup_by(|a, b| a.start == b.start && a.end == b.end);
}
