//! Page trees that mirror the rendered nesting of an HTML document.
//!
//! A [`Webpage`] is a rooted tree of `(id, text, type)` nodes. An edge from
//! `n` to `n'` means the text of `n` is the header (or list/table container)
//! of the text of `n'`. The HTML front end follows the header hierarchy:
//! the first `<h1>` becomes the root, each `<h{i+1}>` hangs under the nearest
//! preceding `<h{i}>`, list items and table rows become children of their
//! list/table node, and plain text blocks become leaves under the governing
//! header.
//!
//! Nodes are stored in pre-order, so the position of a node in that order is
//! also its document order. Public operations are keyed by [`NodeId`];
//! the interpreter works on positions ([`NodePos`]) for speed.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use scraper::{ElementRef, Html, Node};
use serde::{Deserialize, Serialize};

/// Identifier of a node, unique within one page.
pub type NodeId = u32;

/// Position of a node in the pre-order of its page.
pub type NodePos = usize;

/// A set of lowercase tokens.
pub type TokenSet = BTreeSet<String>;

#[derive(Debug, thiserror::Error)]
pub enum WebtreeError {
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("invalid page tree: {0}")]
    InvalidTree(String),
    #[error("document is not valid UTF-8: {0}")]
    Decode(#[from] std::str::Utf8Error),
    #[error("duplicate page id {0:?} in corpus")]
    DuplicatePage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed corpus JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    List,
    Table,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: NodeId,
    pub text: String,
    #[serde(rename = "type")]
    pub kind: NodeType,
}

/// An immutable page tree.
#[derive(Debug, Clone)]
pub struct Webpage {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<NodePos>>,
    parent: Vec<Option<NodePos>>,
    index: HashMap<NodeId, NodePos>,
    source_uri: Option<String>,
    subtree_end: Vec<NodePos>,
    subtree_text: Vec<String>,
    own_tokens: Vec<TokenSet>,
    subtree_tokens: Vec<TokenSet>,
}

impl PartialEq for Webpage {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.children == other.children
            && self.source_uri == other.source_uri
    }
}

impl Eq for Webpage {}

impl Webpage {
    /// Builds a page from nodes, `(parent, child)` edges and a root id.
    ///
    /// Children keep the order in which their edges are listed. The edges
    /// must form a single tree rooted at `root` that spans every node.
    pub fn from_parts(
        nodes: Vec<TreeNode>,
        edges: &[(NodeId, NodeId)],
        root: NodeId,
        source_uri: Option<String>,
    ) -> Result<Self, WebtreeError> {
        let mut by_id: HashMap<NodeId, usize> = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if by_id.insert(n.id, i).is_some() {
                return Err(WebtreeError::InvalidTree(format!("duplicate node id {}", n.id)));
            }
        }
        if !by_id.contains_key(&root) {
            return Err(WebtreeError::UnknownNode(root));
        }
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
        let mut has_parent = vec![false; nodes.len()];
        for &(p, c) in edges {
            let pi = *by_id.get(&p).ok_or(WebtreeError::UnknownNode(p))?;
            let ci = *by_id.get(&c).ok_or(WebtreeError::UnknownNode(c))?;
            if has_parent[ci] {
                return Err(WebtreeError::InvalidTree(format!("node {c} has two parents")));
            }
            if c == root {
                return Err(WebtreeError::InvalidTree("root has a parent".into()));
            }
            has_parent[ci] = true;
            kids[pi].push(ci);
        }

        // Pre-order walk from the root; anything unreached is a disconnected node or a cycle.
        let mut order = Vec::with_capacity(nodes.len());
        let mut stack = vec![by_id[&root]];
        let mut seen = vec![false; nodes.len()];
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(WebtreeError::InvalidTree("cycle in edges".into()));
            }
            seen[i] = true;
            order.push(i);
            stack.extend(kids[i].iter().rev().copied());
        }
        if order.len() != nodes.len() {
            return Err(WebtreeError::InvalidTree(format!(
                "{} node(s) not reachable from root",
                nodes.len() - order.len()
            )));
        }

        let mut pos_of = vec![0usize; nodes.len()];
        for (pos, &i) in order.iter().enumerate() {
            pos_of[i] = pos;
        }
        let mut ordered = Vec::with_capacity(nodes.len());
        let mut children = Vec::with_capacity(nodes.len());
        let mut parent = vec![None; nodes.len()];
        for &i in &order {
            ordered.push(nodes[i].clone());
            let cs: Vec<NodePos> = kids[i].iter().map(|&c| pos_of[c]).collect();
            for &c in &cs {
                parent[c] = Some(pos_of[i]);
            }
            children.push(cs);
        }
        Ok(Self::assemble(ordered, children, parent, source_uri))
    }

    fn assemble(
        nodes: Vec<TreeNode>,
        children: Vec<Vec<NodePos>>,
        parent: Vec<Option<NodePos>>,
        source_uri: Option<String>,
    ) -> Self {
        let n = nodes.len();
        let index = nodes.iter().enumerate().map(|(p, node)| (node.id, p)).collect();
        let mut subtree_end = vec![0; n];
        for p in (0..n).rev() {
            subtree_end[p] = children[p].last().map_or(p + 1, |&c| subtree_end[c]);
        }
        let own_tokens: Vec<TokenSet> = nodes.iter().map(|node| tokenize(&node.text)).collect();
        let mut subtree_text = Vec::with_capacity(n);
        let mut subtree_tokens = Vec::with_capacity(n);
        for p in 0..n {
            let parts: Vec<&str> = (p..subtree_end[p])
                .map(|q| nodes[q].text.as_str())
                .filter(|t| !t.is_empty())
                .collect();
            subtree_text.push(parts.join("\n"));
            let mut toks = TokenSet::new();
            for q in p..subtree_end[p] {
                toks.extend(own_tokens[q].iter().cloned());
            }
            subtree_tokens.push(toks);
        }
        Webpage {
            nodes,
            children,
            parent,
            index,
            source_uri,
            subtree_end,
            subtree_text,
            own_tokens,
            subtree_tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn source_uri(&self) -> Option<&str> {
        self.source_uri.as_deref()
    }

    /// Nodes in document (pre-) order.
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    /// `(parent, child)` pairs in document order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::with_capacity(self.nodes.len().saturating_sub(1));
        for (p, cs) in self.children.iter().enumerate() {
            for &c in cs {
                out.push((self.nodes[p].id, self.nodes[c].id));
            }
        }
        out
    }

    pub fn root(&self) -> NodeId {
        self.nodes[0].id
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode, WebtreeError> {
        Ok(&self.nodes[self.pos(id)?])
    }

    pub fn pos(&self, id: NodeId) -> Result<NodePos, WebtreeError> {
        self.index.get(&id).copied().ok_or(WebtreeError::UnknownNode(id))
    }

    pub fn id_at(&self, pos: NodePos) -> NodeId {
        self.nodes[pos].id
    }

    pub fn children(&self, id: NodeId) -> Result<Vec<NodeId>, WebtreeError> {
        let p = self.pos(id)?;
        Ok(self.children[p].iter().map(|&c| self.nodes[c].id).collect())
    }

    /// Strict descendants in pre-order.
    pub fn descendants(&self, id: NodeId) -> Result<Vec<NodeId>, WebtreeError> {
        let p = self.pos(id)?;
        Ok(self.descendants_at(p).map(|q| self.nodes[q].id).collect())
    }

    pub fn is_leaf(&self, id: NodeId) -> Result<bool, WebtreeError> {
        Ok(self.is_leaf_at(self.pos(id)?))
    }

    /// True iff the parent of `id` is a list or table node.
    pub fn is_elem(&self, id: NodeId) -> Result<bool, WebtreeError> {
        Ok(self.is_elem_at(self.pos(id)?))
    }

    /// Own text, or own text followed by every non-empty descendant text
    /// joined with newlines when `whole_subtree` is set.
    pub fn node_text(&self, id: NodeId, whole_subtree: bool) -> Result<&str, WebtreeError> {
        Ok(self.text_at(self.pos(id)?, whole_subtree))
    }

    pub(crate) fn children_at(&self, p: NodePos) -> &[NodePos] {
        &self.children[p]
    }

    pub(crate) fn descendants_at(&self, p: NodePos) -> std::ops::Range<NodePos> {
        p + 1..self.subtree_end[p]
    }

    pub(crate) fn is_leaf_at(&self, p: NodePos) -> bool {
        self.children[p].is_empty()
    }

    pub(crate) fn is_elem_at(&self, p: NodePos) -> bool {
        self.parent[p].is_some_and(|q| matches!(self.nodes[q].kind, NodeType::List | NodeType::Table))
    }

    pub(crate) fn text_at(&self, p: NodePos, whole_subtree: bool) -> &str {
        if whole_subtree {
            &self.subtree_text[p]
        } else {
            &self.nodes[p].text
        }
    }

    pub(crate) fn own_tokens_at(&self, p: NodePos) -> &TokenSet {
        &self.own_tokens[p]
    }

    pub(crate) fn subtree_tokens_at(&self, p: NodePos) -> &TokenSet {
        &self.subtree_tokens[p]
    }

    fn depth_of(&self, p: NodePos) -> usize {
        let mut d = 0;
        let mut cur = p;
        while let Some(q) = self.parent[cur] {
            d += 1;
            cur = q;
        }
        d
    }

    /// Height of the tree in edges.
    pub fn height(&self) -> usize {
        (0..self.len()).map(|p| self.depth_of(p)).max().unwrap_or(0)
    }
}

/// Lowercased maximal runs of Unicode letters and digits, deduplicated.
pub fn tokenize(s: &str) -> TokenSet {
    token_spans(s).into_iter().map(|(t, _, _)| t).collect()
}

/// Tokens in order with their byte ranges in `s`.
pub fn token_spans(s: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in s.char_indices() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(i);
            }
        } else if let Some(st) = start.take() {
            out.push((s[st..i].to_lowercase(), st, i));
        }
    }
    if let Some(st) = start {
        out.push((s[st..].to_lowercase(), st, s.len()));
    }
    out
}

/// Token set of a collection of strings.
pub fn tokenize_all<'a, I: IntoIterator<Item = &'a String>>(strings: I) -> TokenSet {
    let mut out = TokenSet::new();
    for s in strings {
        for (t, _, _) in token_spans(s) {
            out.insert(t);
        }
    }
    out
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

const SKIPPED: &[&str] = &[
    "script", "style", "noscript", "img", "svg", "head", "template", "iframe", "object", "embed",
    "picture", "video", "audio", "canvas", "link", "meta", "title", "input", "select", "button",
    "textarea", "map", "area",
];

const BLOCKS: &[&str] = &[
    "p", "div", "section", "article", "blockquote", "pre", "address", "figcaption", "figure",
    "main", "header", "footer", "nav", "aside", "form", "fieldset", "legend", "details",
    "summary", "center", "dd", "dt", "caption",
];

fn heading_level(name: &str) -> Option<u8> {
    match name {
        "h1" => Some(1),
        "h2" => Some(2),
        "h3" => Some(3),
        "h4" => Some(4),
        "h5" => Some(5),
        "h6" => Some(6),
        _ => None,
    }
}

fn is_list(name: &str) -> bool {
    matches!(name, "ul" | "ol" | "dl" | "menu")
}

struct Builder {
    nodes: Vec<TreeNode>,
    children: Vec<Vec<NodePos>>,
    parent: Vec<Option<NodePos>>,
    headers: Vec<(u8, NodePos)>,
    pending: String,
    root_heading: Option<ego_tree::NodeId>,
}

impl Builder {
    fn add(&mut self, parent: NodePos, text: String, kind: NodeType) -> NodePos {
        let p = self.nodes.len();
        self.nodes.push(TreeNode { id: p as NodeId, text, kind });
        self.children.push(Vec::new());
        self.parent.push(Some(parent));
        self.children[parent].push(p);
        p
    }

    fn current(&self) -> NodePos {
        self.headers.last().map_or(0, |h| h.1)
    }

    fn flush(&mut self) {
        let text = collapse(&self.pending);
        self.pending.clear();
        if !text.is_empty() {
            let cur = self.current();
            self.add(cur, text, NodeType::None);
        }
    }

    fn walk(&mut self, el: ElementRef<'_>) {
        for child in el.children() {
            match child.value() {
                Node::Text(t) => self.pending.push_str(t),
                Node::Element(_) => {
                    let Some(child_el) = ElementRef::wrap(child) else { continue };
                    self.element(child_el);
                }
                _ => {}
            }
        }
    }

    fn element(&mut self, el: ElementRef<'_>) {
        let name = el.value().name();
        if SKIPPED.contains(&name) {
            return;
        }
        if let Some(level) = heading_level(name) {
            self.flush();
            if Some(el.id()) == self.root_heading {
                self.headers.truncate(1);
                return;
            }
            let text = collapse(&inline_text(el));
            if text.is_empty() {
                return;
            }
            while self.headers.len() > 1 && self.headers.last().is_some_and(|h| h.0 >= level) {
                self.headers.pop();
            }
            let cur = self.current();
            let p = self.add(cur, text, NodeType::None);
            self.headers.push((level, p));
        } else if is_list(name) {
            self.flush();
            let cur = self.current();
            let list = self.add(cur, String::new(), NodeType::List);
            self.list(el, list);
        } else if name == "table" {
            self.flush();
            let cur = self.current();
            self.table(el, cur);
        } else if matches!(name, "br" | "hr") {
            self.flush();
        } else if BLOCKS.contains(&name) {
            self.flush();
            self.walk(el);
            self.flush();
        } else {
            self.walk(el);
        }
    }

    fn list(&mut self, el: ElementRef<'_>, list: NodePos) {
        for item in el.children().filter_map(ElementRef::wrap) {
            let name = item.value().name();
            if SKIPPED.contains(&name) {
                continue;
            }
            if is_list(name) {
                // Malformed nesting: a list directly inside a list.
                let nested = self.add(list, String::new(), NodeType::List);
                self.list(item, nested);
                continue;
            }
            let mut text = String::new();
            let mut nested = Vec::new();
            collect_item(item, &mut text, &mut nested);
            let text = collapse(&text);
            if text.is_empty() && nested.len() == 1 && is_list(nested[0].value().name()) {
                let as_list = self.add(list, String::new(), NodeType::List);
                self.list(nested[0], as_list);
                continue;
            }
            if text.is_empty() && nested.is_empty() {
                continue;
            }
            let node = self.add(list, text, NodeType::None);
            for n in nested {
                if is_list(n.value().name()) {
                    let l = self.add(node, String::new(), NodeType::List);
                    self.list(n, l);
                } else {
                    self.table(n, node);
                }
            }
        }
    }

    fn table(&mut self, el: ElementRef<'_>, under: NodePos) {
        let caption = el
            .children()
            .filter_map(ElementRef::wrap)
            .find(|c| c.value().name() == "caption")
            .map(|c| collapse(&all_text(c)))
            .unwrap_or_default();
        let table = self.add(under, caption, NodeType::Table);
        let mut rows = Vec::new();
        collect_rows(el, &mut rows);
        for row in rows {
            let cells: Vec<String> = row
                .children()
                .filter_map(ElementRef::wrap)
                .filter(|c| matches!(c.value().name(), "td" | "th"))
                .map(|c| collapse(&all_text(c)))
                .filter(|t| !t.is_empty())
                .collect();
            if !cells.is_empty() {
                self.add(table, cells.join(" | "), NodeType::None);
            }
        }
    }
}

fn collect_rows<'a>(el: ElementRef<'a>, rows: &mut Vec<ElementRef<'a>>) {
    for c in el.children().filter_map(ElementRef::wrap) {
        match c.value().name() {
            "tr" => rows.push(c),
            "thead" | "tbody" | "tfoot" => collect_rows(c, rows),
            _ => {}
        }
    }
}

/// Text of a list item, excluding nested lists and tables (returned separately).
fn collect_item<'a>(el: ElementRef<'a>, text: &mut String, nested: &mut Vec<ElementRef<'a>>) {
    for child in el.children() {
        match child.value() {
            Node::Text(t) => text.push_str(t),
            Node::Element(e) => {
                let name = e.name();
                if SKIPPED.contains(&name) {
                    continue;
                }
                let Some(c) = ElementRef::wrap(child) else { continue };
                if is_list(name) || name == "table" {
                    nested.push(c);
                } else if BLOCKS.contains(&name) || heading_level(name).is_some() || name == "br" {
                    text.push(' ');
                    collect_item(c, text, nested);
                    text.push(' ');
                } else {
                    collect_item(c, text, nested);
                }
            }
            _ => {}
        }
    }
}

fn all_text(el: ElementRef<'_>) -> String {
    let mut text = String::new();
    let mut nested = Vec::new();
    collect_item(el, &mut text, &mut nested);
    for n in nested {
        text.push(' ');
        text.push_str(&all_text(n));
    }
    text
}

fn inline_text(el: ElementRef<'_>) -> String {
    all_text(el)
}

fn find_root_heading(el: ElementRef<'_>) -> Option<ElementRef<'_>> {
    for c in el.children().filter_map(ElementRef::wrap) {
        let name = c.value().name();
        if SKIPPED.contains(&name) || is_list(name) || name == "table" {
            continue;
        }
        if name == "h1" {
            return Some(c);
        }
        if let Some(h) = find_root_heading(c) {
            return Some(h);
        }
    }
    None
}

/// Parses HTML bytes; fails only when the bytes are not UTF-8.
pub fn parse_html(bytes: &[u8]) -> Result<Webpage, WebtreeError> {
    Ok(parse_html_str(std::str::from_utf8(bytes)?))
}

/// Lenient HTML → page tree conversion. Never fails; an empty document
/// becomes a single empty root.
pub fn parse_html_str(html: &str) -> Webpage {
    let doc = Html::parse_document(html);
    let top = doc.root_element();
    let body = top
        .children()
        .filter_map(ElementRef::wrap)
        .find(|c| c.value().name() == "body")
        .unwrap_or(top);
    let root_heading = find_root_heading(body);
    let root_text = root_heading.map(|h| collapse(&inline_text(h))).unwrap_or_default();

    let mut b = Builder {
        nodes: vec![TreeNode { id: 0, text: root_text, kind: NodeType::None }],
        children: vec![Vec::new()],
        parent: vec![None],
        headers: vec![(1, 0)],
        pending: String::new(),
        root_heading: root_heading.map(|h| h.id()),
    };
    b.walk(body);
    b.flush();
    Webpage::assemble(b.nodes, b.children, b.parent, None)
}

impl Webpage {
    pub fn with_source_uri(mut self, uri: impl Into<String>) -> Self {
        self.source_uri = Some(uri.into());
        self
    }
}

/// One page of a corpus with its stable identifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPage {
    pub id: String,
    pub page: Arc<Webpage>,
}

/// An ordered collection of pages with unique identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pages: Vec<CorpusPage>,
}

#[derive(Serialize, Deserialize)]
struct PageRecord {
    id: String,
    #[serde(default)]
    source_uri: Option<String>,
    nodes: Vec<TreeNode>,
    edges: Vec<(NodeId, NodeId)>,
    root: NodeId,
}

#[derive(Serialize, Deserialize)]
struct CorpusRecord {
    pages: Vec<PageRecord>,
}

impl Corpus {
    pub fn new(pages: Vec<CorpusPage>) -> Result<Self, WebtreeError> {
        let mut seen = HashSet::new();
        for p in &pages {
            if !seen.insert(p.id.as_str()) {
                return Err(WebtreeError::DuplicatePage(p.id.clone()));
            }
        }
        Ok(Corpus { pages })
    }

    pub fn pages(&self) -> &[CorpusPage] {
        &self.pages
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CorpusPage> {
        self.pages.iter().find(|p| p.id == id)
    }

    /// A sub-corpus without the given page ids, order preserved.
    pub fn without(&self, ids: &[String]) -> Corpus {
        Corpus {
            pages: self.pages.iter().filter(|p| !ids.contains(&p.id)).cloned().collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let rec = CorpusRecord {
            pages: self
                .pages
                .iter()
                .map(|p| PageRecord {
                    id: p.id.clone(),
                    source_uri: p.page.source_uri.clone(),
                    nodes: p.page.nodes.clone(),
                    edges: p.page.edges(),
                    root: p.page.root(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&rec).expect("corpus serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, WebtreeError> {
        let rec: CorpusRecord = serde_json::from_str(s)?;
        let mut pages = Vec::with_capacity(rec.pages.len());
        for r in rec.pages {
            let page = Webpage::from_parts(r.nodes, &r.edges, r.root, r.source_uri)?;
            pages.push(CorpusPage { id: r.id, page: Arc::new(page) });
        }
        Corpus::new(pages)
    }

    pub fn load(path: &Path) -> Result<Self, WebtreeError> {
        let s = std::fs::read_to_string(path)
            .map_err(|source| WebtreeError::Io { path: path.display().to_string(), source })?;
        Corpus::from_json(&s)
    }

    /// Reads every `.html`/`.htm` file of a directory, sorted by file name.
    /// Page ids are file stems.
    pub fn ingest_dir(dir: &Path) -> Result<Self, WebtreeError> {
        let io = |source| WebtreeError::Io { path: dir.display().to_string(), source };
        let mut files: Vec<_> = std::fs::read_dir(dir)
            .map_err(io)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(io)?
            .into_iter()
            .map(|e| e.path())
            .filter(|p| {
                p.is_file()
                    && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("html") || e.eq_ignore_ascii_case("htm"))
            })
            .collect();
        files.sort();
        let mut pages = Vec::with_capacity(files.len());
        for f in files {
            let bytes = std::fs::read(&f)
                .map_err(|source| WebtreeError::Io { path: f.display().to_string(), source })?;
            let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let id = f.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let page = parse_html(&bytes)?.with_source_uri(name);
            pages.push(CorpusPage { id, page: Arc::new(page) });
        }
        Corpus::new(pages)
    }
}
