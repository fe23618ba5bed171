#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use webextract::dsl::{canonical, canonical_extractor, canonical_guard, eval_program, Extractor, Guard, Program, StringSet};
use webextract::metrics::{Example, ExampleSet, Labels};
use webextract::nlp::{default_labels, Baseline, EntityLabel, Gazetteers, Nlp, TaskContext};
use webextract::synth::{OptimalSet, SynthConfig};
use webextract::webtree::{parse_html_str, Corpus, Webpage};

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read_fixture(name: &str, file: &str) -> String {
    std::fs::read_to_string(fixture_dir(name).join(file)).unwrap()
}

pub fn set(xs: &[&str]) -> StringSet {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn motivating_nlp() -> Nlp {
    let gaz = Gazetteers::load(Some(&fixture_dir("motivating").join("org.txt")), None).unwrap();
    Nlp::new(Box::new(Baseline::new(gaz)), default_labels(), None)
}

pub fn motivating_ctx() -> TaskContext {
    TaskContext::new(
        "Which program committees has this researcher served on?",
        vec!["PC".into(), "Program Committee".into(), "Service".into()],
    )
    .unwrap()
}

pub fn motivating_page(f: &str) -> Arc<Webpage> {
    Arc::new(parse_html_str(&read_fixture("motivating", f)))
}

pub fn motivating_examples() -> ExampleSet {
    ExampleSet {
        ctx: motivating_ctx(),
        examples: vec![
            Example::new("a", motivating_page("a.html"), set(&["PLDI'21", "OOPSLA'20", "CAV'19"])),
            Example::new("b", motivating_page("b.html"), set(&["PLDI'20", "CAV'21"])),
        ],
    }
}

pub fn motivating_heldout() -> Example {
    Example::new("c", motivating_page("c.html"), set(&["PLDI'21", "ICSE'21", "CAV'20"]))
}

pub fn motivating_config() -> SynthConfig {
    serde_json::from_str(&read_fixture("motivating", "config.json")).unwrap()
}

const HEADERS: &[&str] = &["Service", "Program Committee", "Teaching", "Awards", "News"];
const ITEMS: &[&str] = &[
    "PLDI'21 (PC)",
    "CAV'20 (PC), ICSE'19 (SRC)",
    "NSF grant 2019",
    "Gates Hall",
    "Alice Smith",
    "POPL'20 (ERC)",
    "PC chair, FSE'22",
];

/// A small random page: a title, then one to three headed sections holding
/// a list or a paragraph.
pub fn random_page(rng: &mut ChaCha8Rng) -> String {
    let mut html = String::from("<h1>Home</h1>");
    for _ in 0..rng.random_range(1..=3) {
        html.push_str(&format!("<h2>{}</h2>", HEADERS.choose(rng).unwrap()));
        if rng.random_bool(0.7) {
            html.push_str("<ul>");
            for _ in 0..rng.random_range(1..=3) {
                html.push_str(&format!("<li>{}</li>", ITEMS.choose(rng).unwrap()));
            }
            html.push_str("</ul>");
        } else {
            html.push_str(&format!("<p>{}</p>", ITEMS.choose(rng).unwrap()));
        }
    }
    html
}

/// Gold for a page: whole leaf texts, comma pieces of them, or nothing.
fn random_gold(rng: &mut ChaCha8Rng, w: &Webpage) -> StringSet {
    let leaves: Vec<&str> =
        w.nodes().iter().filter(|n| w.is_leaf(n.id).unwrap() && n.id != w.root()).map(|n| n.text.as_str()).collect();
    let mut gold = StringSet::new();
    if leaves.is_empty() || rng.random_bool(0.1) {
        return gold;
    }
    for _ in 0..rng.random_range(1..=2) {
        let t = leaves.choose(rng).unwrap();
        if rng.random_bool(0.5) {
            let pieces: Vec<&str> = t.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            gold.insert(pieces.choose(rng).unwrap().to_string());
        } else {
            gold.insert(t.to_string());
        }
    }
    gold
}

/// A tiny synthesis problem: at most three labeled pages, depths at most
/// three, at most four atoms.
pub fn random_instance(seed: u64) -> (ExampleSet, SynthConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=3);
    let examples = (0..n)
        .map(|i| {
            let w = parse_html_str(&random_page(&mut rng));
            let gold = random_gold(&mut rng, &w);
            Example::new(format!("p{i}"), Arc::new(w), gold)
        })
        .collect();
    let keywords = vec![["Service", "PC", "Committee"].choose(&mut rng).unwrap().to_string()];
    let ctx = TaskContext::new("Which committees?", keywords).unwrap();
    let thresholds = if rng.random_bool(0.5) { vec![1.0] } else { vec![0.5, 1.0] };
    let mut labels = vec![EntityLabel::new("ORG")];
    if rng.random_bool(0.3) {
        labels.push(EntityLabel::new("DATE"));
    }
    let cfg = SynthConfig {
        d_g: rng.random_range(2..=3),
        d_e: rng.random_range(2..=3),
        thresholds: Some(thresholds),
        delimiters: if rng.random_bool(0.5) { vec![','] } else { vec![',', '('] },
        ks: vec![1],
        labels: Some(labels),
        use_answer: false,
        ..SynthConfig::default()
    };
    (ExampleSet { ctx, examples }, cfg)
}

pub fn planted_ctx() -> TaskContext {
    TaskContext::new("Which awards has this person received?", vec!["Award".into(), "Awards".into()]).unwrap()
}

/// Training examples, held-out test examples and the synthesis config of the
/// planted-generalizer fixture.
pub fn planted() -> (ExampleSet, ExampleSet, SynthConfig) {
    let dir = fixture_dir("planted");
    let corpus = Corpus::ingest_dir(&dir).unwrap();
    let load = |f: &str| ExampleSet::from_labels(planted_ctx(), &corpus, &Labels::load(&dir.join(f)).unwrap()).unwrap();
    let cfg = serde_json::from_str(&read_fixture("planted", "config.json")).unwrap();
    (load("labels.json"), load("test_labels.json"), cfg)
}

/// Lowercase alphanumeric runs.
pub fn tokens(s: &StringSet) -> BTreeSet<String> {
    s.iter()
        .flat_map(|x| x.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase))
        .collect()
}

/// Micro F1 of a program on labeled examples, counted directly.
pub fn micro_f1(p: &Program, e: &ExampleSet, nlp: &Nlp) -> f64 {
    let (mut tp, mut pred, mut gold) = (0usize, 0usize, 0usize);
    for x in &e.examples {
        let out = tokens(&eval_program(p, &x.page, nlp).unwrap());
        let g = tokens(&x.gold);
        tp += out.intersection(&g).count();
        pred += out.len();
        gold += g.len();
    }
    if pred + gold == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (pred + gold) as f64
    }
}

const MODULUS: u128 = (1 << 61) - 1;

type Point = [u128; 2];

fn var(kind: u8, k: usize, i: usize, canonical: &str) -> Point {
    let mut h = Sha256::new();
    h.update([kind]);
    h.update((k as u64).to_le_bytes());
    h.update((i as u64).to_le_bytes());
    h.update(canonical.as_bytes());
    let d = h.finalize();
    let word = |j: usize| u128::from(u64::from_le_bytes(d[j..j + 8].try_into().unwrap())) % MODULUS;
    [word(0), word(8)]
}

/// The set as a polynomial evaluated at two pseudo-random points: branch `i`
/// of a `k`-branch program contributes `u(k,i,guard) * v(k,i,extractor)`, a
/// program is the product over its branches and the set is the sum over its
/// programs. Distinct programs are distinct monomials, so distinct sets give
/// distinct polynomials; evaluation follows the factored form of the set.
pub fn set_polynomial(s: &OptimalSet) -> Point {
    let mut gmemo: HashMap<(usize, usize, &Guard), Point> = HashMap::new();
    let mut xmemo: HashMap<(usize, usize, &Extractor), Point> = HashMap::new();
    let mut total = [0; 2];
    for f in &s.families {
        let k = f.blocks.len();
        let mut prod = [1; 2];
        for (i, classes) in f.blocks.iter().enumerate() {
            let mut block = [0; 2];
            for c in classes {
                let (mut g, mut x) = ([0; 2], [0; 2]);
                for guard in &c.guards {
                    let v = gmemo.entry((k, i, guard)).or_insert_with(|| var(0, k, i, &canonical_guard(guard)));
                    g = [g[0] + v[0], g[1] + v[1]];
                }
                for ext in &c.extractors {
                    let v = xmemo.entry((k, i, ext)).or_insert_with(|| var(1, k, i, &canonical_extractor(ext)));
                    x = [x[0] + v[0], x[1] + v[1]];
                }
                for r in 0..2 {
                    block[r] = (block[r] + (g[r] % MODULUS) * (x[r] % MODULUS)) % MODULUS;
                }
            }
            for r in 0..2 {
                prod[r] = prod[r] * block[r] % MODULUS;
            }
        }
        for r in 0..2 {
            total[r] = (total[r] + prod[r]) % MODULUS;
        }
    }
    total
}

/// Equality of two optimal sets: same F1, same size, same programs. Small
/// sets are also compared as explicit canonical-string sets.
pub fn same_set(a: &OptimalSet, b: &OptimalSet) -> Result<(), String> {
    if a.f1 != b.f1 {
        return Err(format!("F1 {:?} vs {:?}", a.f1, b.f1));
    }
    if a.ctx != b.ctx {
        return Err("task contexts differ".into());
    }
    if a.count() != b.count() {
        return Err(format!("count {} vs {}", a.count(), b.count()));
    }
    if set_polynomial(a) != set_polynomial(b) {
        return Err("program sets differ".into());
    }
    if a.count() <= 20_000 {
        let (ca, cb) = (a.canonical_set(20_000).unwrap(), b.canonical_set(20_000).unwrap());
        if ca.len() as u128 != a.count() || ca != cb {
            return Err("canonical sets differ".into());
        }
    }
    Ok(())
}

/// The ensemble member minimizing summed token Hamming distance to every
/// member's outputs, ties broken by size then canonical form.
pub fn loss_argmin(members: &[Program], pages: &[Arc<Webpage>], nlp: &Nlp) -> (String, u64) {
    let outs: Vec<(String, usize, Vec<BTreeSet<String>>)> = members
        .iter()
        .map(|p| (canonical(p), p.size(), pages.iter().map(|w| tokens(&eval_program(p, w, nlp).unwrap())).collect()))
        .collect();
    let mut best: Option<(u64, usize, String)> = None;
    for (c, size, mine) in &outs {
        let loss: u64 = outs
            .iter()
            .map(|(_, _, other)| mine.iter().zip(other).map(|(a, b)| a.symmetric_difference(b).count() as u64).sum::<u64>())
            .sum();
        let key = (loss, *size, c.clone());
        if best.as_ref().is_none_or(|b| key < *b) {
            best = Some(key);
        }
    }
    let (loss, _, c) = best.expect("nonempty ensemble");
    (c, loss)
}
