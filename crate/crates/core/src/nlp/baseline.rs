//! Deterministic rule-based provider.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use super::{rank_spans, NlpError, Provider, Query, QueryKind, Response, Span};
use crate::webtree::{token_spans, tokenize};

const ORG_DATA: &str = include_str!("../../data/org.txt");
const LOC_DATA: &str = include_str!("../../data/loc.txt");
const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Minimum content-word overlap for `hasAnswer`.
const ANSWER_RATIO: f64 = 0.5;

static MONTH_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"\b(?:Jan(?:uary)?|Feb(?:ruary)?|Mar(?:ch)?|Apr(?:il)?|May|June?|July?|Aug(?:ust)?|Sep(?:t(?:ember)?)?|Oct(?:ober)?|Nov(?:ember)?|Dec(?:ember)?)\b(?:\.?\s+\d{1,2}(?:st|nd|rd|th)?\b)?(?:,?\s+(?:19|20)\d{2}\b)?",
    )
    .expect("month regex")
});
static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\b(?:19|20)\d{2}\b").expect("year regex"));
static CLOCK: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:[01]?\d|2[0-3]):[0-5]\d(?:\s?[ap]\.?m\b\.?)?|\b(?:1[0-2]|0?[1-9])\s?[ap]\.?m\b\.?")
        .expect("clock regex")
});
static YEAR_SUFFIX: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^['’](?:\d{4}|\d{2})\b").expect("suffix regex"));

/// Token sequences of known organizations and locations.
#[derive(Debug, Clone)]
pub struct Gazetteers {
    org: Vec<Vec<String>>,
    loc: Vec<Vec<String>>,
}

fn parse_gazetteer(data: &str) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = data
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| token_spans(l).into_iter().map(|(t, _, _)| t).collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .collect();
    out.sort();
    out.dedup();
    out
}

impl Default for Gazetteers {
    fn default() -> Self {
        Gazetteers { org: parse_gazetteer(ORG_DATA), loc: parse_gazetteer(LOC_DATA) }
    }
}

impl Gazetteers {
    pub fn from_strs(org: &str, loc: &str) -> Self {
        Gazetteers { org: parse_gazetteer(org), loc: parse_gazetteer(loc) }
    }

    /// Loads the given files; a missing argument falls back to the built-in list.
    pub fn load(org: Option<&Path>, loc: Option<&Path>) -> Result<Self, NlpError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| NlpError::Config(format!("gazetteer {}: {e}", p.display())))
        };
        let org = org.map(read).transpose()?;
        let loc = loc.map(read).transpose()?;
        Ok(Gazetteers::from_strs(org.as_deref().unwrap_or(ORG_DATA), loc.as_deref().unwrap_or(LOC_DATA)))
    }
}

/// Rule-based provider; a pure function of its inputs.
#[derive(Debug, Clone)]
pub struct Baseline {
    gazetteers: Gazetteers,
    stopwords: BTreeSet<String>,
}

impl Default for Baseline {
    fn default() -> Self {
        Baseline::new(Gazetteers::default())
    }
}

impl Baseline {
    pub fn new(gazetteers: Gazetteers) -> Self {
        let stopwords = STOPWORDS.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_lowercase).collect();
        Baseline { gazetteers, stopwords }
    }

    fn keyword(&self, z: &str, keywords: &[String], t: f64) -> Response {
        let toks = token_spans(z);
        let zset: BTreeSet<&str> = toks.iter().map(|(s, _, _)| s.as_str()).collect();
        let mut best = 0.0f64;
        let mut spans = Vec::new();
        for k in keywords {
            let kseq: Vec<String> = token_spans(k).into_iter().map(|(s, _, _)| s).collect();
            if kseq.is_empty() {
                continue;
            }
            let kset: BTreeSet<&str> = kseq.iter().map(String::as_str).collect();
            let mut contained = false;
            if kseq.len() <= toks.len() {
                for i in 0..=toks.len() - kseq.len() {
                    if toks[i..i + kseq.len()].iter().zip(&kseq).all(|(a, b)| a.0 == *b) {
                        contained = true;
                        spans.push(Span { start: toks[i].1, end: toks[i + kseq.len() - 1].2, score: 1.0 });
                    }
                }
            }
            let score = if contained { 1.0 } else { jaccard(&zset, &kset) };
            best = best.max(score);
            // A single token inside the keyword, scored as if it were the whole text.
            let single = if kset.len() == 1 { 1.0 } else { 1.0 / kset.len() as f64 };
            if single >= t {
                for (s, a, b) in &toks {
                    if kset.contains(s.as_str()) {
                        spans.push(Span { start: *a, end: *b, score: single });
                    }
                }
            }
        }
        spans.retain(|s| s.score >= t);
        rank_spans(&mut spans);
        Response { holds: best >= t, score: best, spans: Some(spans) }
    }

    fn content_words(&self, s: &str) -> BTreeSet<String> {
        tokenize(s).into_iter().filter(|t| !self.stopwords.contains(t)).collect()
    }

    fn overlap(&self, qwords: &BTreeSet<String>, z: &str) -> f64 {
        if qwords.is_empty() {
            return 0.0;
        }
        let zt = tokenize(z);
        qwords.iter().filter(|w| zt.contains(*w)).count() as f64 / qwords.len() as f64
    }

    fn answer(&self, z: &str, question: &str) -> Response {
        let qwords = self.content_words(question);
        let score = self.overlap(&qwords, z);
        let mut best: Option<Span> = None;
        let mut start = 0;
        for (i, ch) in z.char_indices().chain(std::iter::once((z.len(), '.'))) {
            if matches!(ch, '.' | '!' | '?' | '\n') {
                let seg = &z[start..i];
                let toks = token_spans(seg);
                if let (Some(first), Some(last)) = (toks.first(), toks.last()) {
                    let r = self.overlap(&qwords, seg);
                    if r >= ANSWER_RATIO && best.is_none_or(|b| r > b.score) {
                        best = Some(Span { start: start + first.1, end: start + last.2, score: r });
                    }
                }
                start = (i + ch.len_utf8()).min(z.len());
            }
        }
        Response { holds: score >= ANSWER_RATIO, score, spans: Some(best.into_iter().collect()) }
    }

    fn gazetteer_spans(list: &[Vec<String>], z: &str, out: &mut Vec<Span>) {
        let toks = token_spans(z);
        for entry in list {
            if entry.len() > toks.len() {
                continue;
            }
            for i in 0..=toks.len() - entry.len() {
                if toks[i..i + entry.len()].iter().zip(entry).all(|(a, b)| a.0 == *b) {
                    out.push(Span { start: toks[i].1, end: toks[i + entry.len() - 1].2, score: 1.0 });
                }
            }
        }
    }

    fn entity(&self, z: &str, label: &str) -> Result<Response, NlpError> {
        let mut spans = Vec::new();
        match label {
            "ORG" => {
                Self::gazetteer_spans(&self.gazetteers.org, z, &mut spans);
                for (_, a, b) in token_spans(z) {
                    let raw = &z[a..b];
                    if raw.chars().count() >= 2 && raw.chars().all(|c| c.is_alphabetic() && c.is_uppercase()) {
                        match YEAR_SUFFIX.find(&z[b..]) {
                            Some(m) => spans.push(Span { start: a, end: b + m.end(), score: 0.9 }),
                            None => spans.push(Span { start: a, end: b, score: 0.7 }),
                        }
                    }
                }
            }
            "LOC" => Self::gazetteer_spans(&self.gazetteers.loc, z, &mut spans),
            "PERSON" => {
                let toks = token_spans(z);
                let capitalized = |a: usize, b: usize| {
                    let mut cs = z[a..b].chars();
                    let first = cs.next().is_some_and(|c| c.is_uppercase() && c.is_alphabetic());
                    let rest: Vec<char> = cs.collect();
                    first && !rest.is_empty() && rest.iter().all(|c| c.is_alphabetic() && c.is_lowercase())
                };
                let mut i = 0;
                while i < toks.len() {
                    let mut j = i;
                    while j < toks.len()
                        && capitalized(toks[j].1, toks[j].2)
                        && (j == i || z[toks[j - 1].2..toks[j].1].chars().all(|c| c == ' '))
                    {
                        j += 1;
                    }
                    if j - i >= 2 {
                        spans.push(Span { start: toks[i].1, end: toks[j - 1].2, score: 0.8 });
                        i = j;
                    } else {
                        i += 1;
                    }
                }
            }
            "DATE" => {
                for m in MONTH_DATE.find_iter(z) {
                    spans.push(Span { start: m.start(), end: m.end(), score: 0.9 });
                }
                for m in YEAR.find_iter(z) {
                    spans.push(Span { start: m.start(), end: m.end(), score: 0.8 });
                }
            }
            "TIME" => {
                for m in CLOCK.find_iter(z) {
                    spans.push(Span { start: m.start(), end: m.end(), score: 0.9 });
                }
            }
            other => return Err(NlpError::Config(format!("baseline has no rule for entity label {other}"))),
        }
        rank_spans(&mut spans);
        let score = spans.first().map_or(0.0, |s| s.score);
        Ok(Response { holds: !spans.is_empty(), score, spans: Some(spans) })
    }
}

fn jaccard(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

impl Provider for Baseline {
    fn evaluate(&self, q: &Query<'_>) -> Result<Response, NlpError> {
        match q.kind {
            QueryKind::Keyword => {
                let kw = q.keywords.ok_or_else(|| NlpError::Config("keyword query without keywords".into()))?;
                let t = q.threshold.map_or(0.0, |t| t.value());
                Ok(self.keyword(q.text, kw, t))
            }
            QueryKind::Answer => {
                let question = q.question.ok_or_else(|| NlpError::Config("answer query without question".into()))?;
                Ok(self.answer(q.text, question))
            }
            QueryKind::Entity => {
                let l = q.label.ok_or_else(|| NlpError::Config("entity query without label".into()))?;
                self.entity(q.text, l)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{EntityLabel, Nlp, PredicateKind, TaskContext, Threshold};
    use super::*;
    use proptest::prelude::*;

    fn ctx(kw: &str) -> TaskContext {
        TaskContext::new("Which program committees has this researcher served on?", vec![kw.into()]).unwrap()
    }

    fn texts(z: &str, spans: &[Span]) -> Vec<String> {
        spans.iter().map(|s| s.text(z).to_string()).collect()
    }

    #[test]
    fn jaccard_fallback() {
        let b = Baseline::default();
        let r = b.keyword("program chair", &["Program Committee".into()], 0.3);
        assert!((r.score - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.holds);
        assert!(!b.keyword("program chair", &["Program Committee".into()], 0.35).holds);
    }

    #[test]
    fn entity_rules() {
        let nlp = Nlp::baseline();
        let c = ctx("x");
        let spans = |label: &str, z: &str| {
            let k = PredicateKind::HasEntity(EntityLabel::new(label));
            texts(z, &nlp.extract_spans(z, &k, &c, 5).unwrap())
        };
        assert_eq!(spans("PERSON", "Advised by Jane Doe and John Q Public."), ["Jane Doe"]);
        assert_eq!(spans("DATE", "From March 2012 to 2015"), ["March 2012", "2015"]);
        assert_eq!(spans("TIME", "Talk at 10:30 am"), ["10:30 am"]);
        assert_eq!(spans("LOC", "Austin, Texas"), ["Austin", "Texas"]);
        assert_eq!(spans("ORG", "Intern at Microsoft Research"), ["Microsoft Research"]);
        assert_eq!(spans("ORG", "OOPSLA’20 and ICSE"), ["OOPSLA’20", "ICSE"]);
        assert!(spans("DATE", "in 1850 and 2100").is_empty());
    }

    #[test]
    fn custom_gazetteer() {
        let b = Baseline::new(Gazetteers::from_strs("# orgs\nAcme Widgets\n", "Gotham\n"));
        assert!(b.entity("works at acme widgets", "ORG").unwrap().holds);
        assert!(!b.entity("works at Google inc", "LOC").unwrap().holds);
        assert!(b.entity("Gotham", "LOC").unwrap().holds);
    }

    #[test]
    fn answer_span_is_best_sentence() {
        let nlp = Nlp::baseline();
        let c = ctx("x");
        let z = "Hello there. I served on the program committee of PLDI! Bye";
        let s = nlp.extract_spans(z, &PredicateKind::HasAnswer, &c, 3).unwrap();
        assert_eq!(texts(z, &s), ["I served on the program committee of PLDI"]);
    }

    #[test]
    fn keyword_spans() {
        let nlp = Nlp::baseline();
        let c = ctx("Program Committee");
        let z = "Program Committee member; program chair";
        let full = PredicateKind::KeywordMatch(Threshold::from_f64(0.9).unwrap());
        assert_eq!(texts(z, &nlp.extract_spans(z, &full, &c, 5).unwrap()), ["Program Committee"]);
        let half = PredicateKind::KeywordMatch(Threshold::from_f64(0.5).unwrap());
        assert_eq!(texts(z, &nlp.extract_spans(z, &half, &c, 5).unwrap()), ["Program Committee", "program"]);
    }

    fn grid() -> impl Strategy<Value = Threshold> {
        (0u16..=20).prop_map(|i| Threshold::from_units(i * 500).unwrap())
    }

    fn text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just("PLDI'19"), Just("(PC)"), Just("program"), Just("Committee"), Just("Jane"), Just("Doe"),
                Just("March"), Just("2012"), Just("10:30"), Just("served"), Just("on"), Just(","), Just("."),
                Just("Austin"), Just("CAV"), Just("x"),
            ],
            0..10,
        )
        .prop_map(|w| w.join(" "))
    }

    fn kinds() -> impl Strategy<Value = PredicateKind> {
        prop_oneof![
            grid().prop_map(PredicateKind::KeywordMatch),
            Just(PredicateKind::HasAnswer),
            prop_oneof![Just("PERSON"), Just("ORG"), Just("DATE"), Just("TIME"), Just("LOC")]
                .prop_map(|l| PredicateKind::HasEntity(EntityLabel::new(l))),
        ]
    }

    proptest! {
        #[test]
        fn threshold_monotone(z in text(), t1 in grid(), t2 in grid()) {
            let nlp = Nlp::baseline();
            let c = ctx("Program Committee");
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            if nlp.match_keyword(&z, &c, hi).unwrap().holds {
                prop_assert!(nlp.match_keyword(&z, &c, lo).unwrap().holds);
            }
            let v = nlp.match_keyword(&z, &c, hi).unwrap();
            prop_assert_eq!(v.holds, v.score >= hi.value());
        }

        #[test]
        fn spans_disjoint_and_hold_in_isolation(z in text(), kind in kinds(), k in 1usize..4) {
            let nlp = Nlp::baseline();
            let c = ctx("Program Committee");
            let spans = nlp.extract_spans(&z, &kind, &c, k).unwrap();
            prop_assert!(spans.len() <= k);
            for (i, a) in spans.iter().enumerate() {
                prop_assert!(nlp.holds(&kind, a.text(&z), &c).unwrap(), "{:?} on {:?}", kind, a.text(&z));
                for b in &spans[i + 1..] {
                    prop_assert!(a.end <= b.start || b.end <= a.start);
                }
            }
            let shorter = nlp.extract_spans(&z, &kind, &c, k.saturating_sub(1).max(1)).unwrap();
            prop_assert_eq!(&spans[..shorter.len()], &shorter[..]);
        }

        #[test]
        fn deterministic_across_instances(z in text(), kind in kinds()) {
            let c = ctx("Program Committee");
            let a = Nlp::baseline().verdict(&kind, &z, &c).unwrap();
            let b = Nlp::baseline().verdict(&kind, &z, &c).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
