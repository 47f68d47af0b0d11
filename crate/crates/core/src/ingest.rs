//! Corpus ingestion: anchor-text extraction from encyclopedia pages and
//! loading of seed topic / attribute tuple files.
//!
//! Pages come in two markup dialects, selected per file by extension:
//! raw wikitext (`[[target|anchor]]` links) and HTML (`<a>` elements).
//! Navigation and citation anchors are excluded by a fixed rule list.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest phrase kept at ingestion, in whitespace-delimited words.
pub const MAX_PHRASE_WORDS: usize = 8;

/// Wikitext link-target prefixes that mark non-content links.
const WIKI_NAMESPACE_EXCLUDES: &[&str] = &[
    "file:", "image:", "category:", "template:", "special:", "help:", "portal:", "wikipedia:",
    "talk:", "user:", "media:",
];

/// HTML class substrings that mark navigation or citation anchors.
const HTML_CLASS_EXCLUDES: &[&str] = &[
    "nav", "citation", "reference", "footnote", "mw-jump", "external", "toc",
];

/// A candidate stereotype phrase mined from one page.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePhrase {
    pub surface: String,
    pub source_page: String,
    pub anchor_count: u32,
}

/// Markup dialect of a page document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dialect {
    WikiText,
    Html,
}

impl Dialect {
    /// Dialect for a corpus file, decided by extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("wiki") | Some("wikitext") | Some("txt") => Some(Dialect::WikiText),
            Some("html") | Some("htm") => Some(Dialect::Html),
            _ => None,
        }
    }
}

/// Extract one candidate per distinct anchor text of a page, aggregating
/// repeats into `anchor_count`. Candidates appear in first-occurrence order.
pub fn extract_anchor_phrases(
    document: &str,
    source_page: &str,
    dialect: Dialect,
) -> Result<Vec<CandidatePhrase>> {
    let anchors = match dialect {
        Dialect::WikiText => wikitext_anchors(document)?,
        Dialect::Html => html_anchors(document)?,
    };
    let mut order: Vec<String> = Vec::new();
    let mut counts: std::collections::HashMap<String, u32> = std::collections::HashMap::new();
    for anchor in anchors {
        let Some(surface) = normalize_phrase(&anchor) else {
            continue;
        };
        match counts.get_mut(&surface) {
            Some(c) => *c += 1,
            None => {
                counts.insert(surface.clone(), 1);
                order.push(surface);
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|surface| {
            let anchor_count = counts[&surface];
            CandidatePhrase {
                surface,
                source_page: source_page.to_string(),
                anchor_count,
            }
        })
        .collect())
}

/// Merge per-page candidate lists into one aggregate, summing counts per
/// surface. The result is sorted by surface so it does not depend on page
/// processing order.
pub fn merge_candidates(per_page: Vec<Vec<CandidatePhrase>>) -> Vec<CandidatePhrase> {
    let mut merged: std::collections::BTreeMap<String, CandidatePhrase> =
        std::collections::BTreeMap::new();
    for list in per_page {
        for cand in list {
            match merged.get_mut(&cand.surface) {
                Some(existing) => existing.anchor_count += cand.anchor_count,
                None => {
                    merged.insert(cand.surface.clone(), cand);
                }
            }
        }
    }
    merged.into_values().collect()
}

fn normalize_phrase(raw: &str) -> Option<String> {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() || collapsed.split_whitespace().count() > MAX_PHRASE_WORDS {
        return None;
    }
    Some(collapsed)
}

fn line_of(text: &str, byte: usize) -> usize {
    text[..byte].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Anchor texts of `[[...]]` links, skipping excluded namespaces, section
/// self-links and anything inside `<ref>...</ref>`.
fn wikitext_anchors(document: &str) -> Result<Vec<String>> {
    let mut anchors = Vec::new();
    let bytes = document.as_bytes();
    let mut i = 0;
    let mut ref_depth = 0usize;
    while i < bytes.len() {
        if document[i..].starts_with("<ref") {
            // Self-closing <ref name="x"/> does not open a span.
            let close = document[i..]
                .find('>')
                .map(|p| i + p)
                .ok_or_else(|| Error::parse(format!("line {}", line_of(document, i)), "unterminated <ref tag"))?;
            if !document[i..=close].ends_with("/>") {
                ref_depth += 1;
            }
            i = close + 1;
            continue;
        }
        if document[i..].starts_with("</ref>") {
            ref_depth = ref_depth.saturating_sub(1);
            i += "</ref>".len();
            continue;
        }
        if document[i..].starts_with("[[") {
            let start = i;
            let end = document[i + 2..]
                .find("]]")
                .map(|p| i + 2 + p)
                .ok_or_else(|| {
                    Error::parse(
                        format!("line {}", line_of(document, start)),
                        "unterminated [[ link",
                    )
                })?;
            let inner = &document[i + 2..end];
            i = end + 2;
            if ref_depth > 0 {
                continue;
            }
            if let Some(anchor) = wikitext_link_anchor(inner) {
                anchors.push(anchor);
            }
            continue;
        }
        i += 1;
    }
    Ok(anchors)
}

fn wikitext_link_anchor(inner: &str) -> Option<String> {
    let (target, anchor) = match inner.split_once('|') {
        Some((t, a)) => (t.trim(), a.rsplit('|').next().unwrap_or(a).trim()),
        None => (inner.trim(), inner.trim()),
    };
    let lowered = target.to_lowercase();
    if WIKI_NAMESPACE_EXCLUDES.iter().any(|p| lowered.starts_with(p)) {
        return None;
    }
    // Unpiped section links render with their '#'; treat them as navigation.
    if target.starts_with('#') || (inner.split_once('|').is_none() && target.contains('#')) {
        return None;
    }
    (!anchor.is_empty()).then(|| anchor.to_string())
}

/// Anchor texts of `<a>` elements, skipping navigation/citation classes and
/// in-page fragment links.
fn html_anchors(document: &str) -> Result<Vec<String>> {
    let mut anchors = Vec::new();
    let lower = document.to_lowercase();
    let mut i = 0;
    while let Some(open_rel) = lower[i..].find("<a") {
        let open = i + open_rel;
        let tag_end = lower[open..]
            .find('>')
            .map(|p| open + p)
            .ok_or_else(|| Error::parse(format!("line {}", line_of(document, open)), "unterminated <a tag"))?;
        let attrs = &lower[open..tag_end];
        let close = lower[tag_end..]
            .find("</a>")
            .map(|p| tag_end + p)
            .ok_or_else(|| {
                Error::parse(
                    format!("line {}", line_of(document, open)),
                    "unterminated <a> element",
                )
            })?;
        let inner = &document[tag_end + 1..close];
        i = close + 4;

        let excluded_class = attr_value(attrs, "class")
            .map(|c| HTML_CLASS_EXCLUDES.iter().any(|e| c.contains(e)))
            .unwrap_or(false);
        let fragment_href = attr_value(attrs, "href")
            .map(|h| h.starts_with('#'))
            .unwrap_or(false);
        if excluded_class || fragment_href {
            continue;
        }
        anchors.push(strip_tags(inner));
    }
    Ok(anchors)
}

fn attr_value<'a>(attrs: &'a str, name: &str) -> Option<&'a str> {
    let pat = format!("{name}=\"");
    let start = attrs.find(&pat)? + pat.len();
    let end = attrs[start..].find('"')? + start;
    Some(&attrs[start..end])
}

fn strip_tags(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut in_tag = false;
    for c in html.chars() {
        match c {
            '<' => in_tag = true,
            '>' => in_tag = false,
            _ if !in_tag => out.push(c),
            _ => {}
        }
    }
    out
}

/// Manually specified stereotype topics, each with a hyponym word list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicSeeds {
    pub topics: Vec<Topic>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub hyponyms: Vec<String>,
}

impl TopicSeeds {
    /// Parse a seed file: unindented topic header lines, indented hyponym
    /// lines, `#` comments and blank lines ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read seed topics {}: {e}", path.display())))?;
        Self::parse(&raw).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let mut topics: Vec<Topic> = Vec::new();
        for (lineno, line) in raw.lines().enumerate() {
            let stripped = line.split('#').next().unwrap_or("");
            if stripped.trim().is_empty() {
                continue;
            }
            let indented = stripped.starts_with(' ') || stripped.starts_with('\t');
            let word = stripped.trim().to_string();
            if indented {
                let topic = topics.last_mut().ok_or_else(|| {
                    Error::Config(format!("line {}: hyponym before any topic header", lineno + 1))
                })?;
                if topic.hyponyms.contains(&word) {
                    return Err(Error::Config(format!(
                        "line {}: duplicate hyponym '{word}' in topic '{}'",
                        lineno + 1,
                        topic.name
                    )));
                }
                topic.hyponyms.push(word);
            } else {
                topics.push(Topic {
                    name: word,
                    hyponyms: Vec::new(),
                });
            }
        }
        if topics.is_empty() {
            return Err(Error::Config("seed file declares no topics".into()));
        }
        for t in &topics {
            if t.hyponyms.is_empty() {
                return Err(Error::Config(format!("topic '{}' has no hyponyms", t.name)));
            }
        }
        Ok(Self { topics })
    }

    pub fn topic_count(&self) -> usize {
        self.topics.len()
    }
}

/// Demographic attribute tuples (gender pairs in all shipped configs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeTuples {
    pub tuples: Vec<Vec<String>>,
    pub arity: usize,
}

impl AttributeTuples {
    /// Parse comma-separated tuples, one per line, `#` comments ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read attribute tuples {}: {e}", path.display()))
        })?;
        Self::parse(&raw).map_err(|e| match e {
            Error::Parse { location, message } => Error::Parse {
                location: format!("{}:{location}", path.display()),
                message,
            },
            other => other,
        })
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let mut tuples: Vec<Vec<String>> = Vec::new();
        let mut arity = 0usize;
        for (lineno, line) in raw.lines().enumerate() {
            let stripped = line.split('#').next().unwrap_or("").trim();
            if stripped.is_empty() {
                continue;
            }
            let entries: Vec<String> = stripped.split(',').map(|s| s.trim().to_string()).collect();
            if entries.iter().any(|e| e.is_empty()) {
                return Err(Error::parse(
                    format!("line {}", lineno + 1),
                    "empty attribute entry",
                ));
            }
            if arity == 0 {
                arity = entries.len();
                if arity < 2 {
                    return Err(Error::parse(
                        format!("line {}", lineno + 1),
                        "attribute tuples need at least two entries",
                    ));
                }
            } else if entries.len() != arity {
                return Err(Error::parse(
                    format!("line {}", lineno + 1),
                    format!("ragged tuple: expected {arity} entries, found {}", entries.len()),
                ));
            }
            let distinct: HashSet<&String> = entries.iter().collect();
            if distinct.len() != entries.len() {
                return Err(Error::parse(
                    format!("line {}", lineno + 1),
                    "entries within a tuple must be distinct",
                ));
            }
            tuples.push(entries);
        }
        if tuples.is_empty() {
            return Err(Error::Config("attribute file contains no tuples".into()));
        }
        Ok(Self { tuples, arity })
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    /// Every distinct attribute word, lowercased (for search-vocab exclusion).
    pub fn all_words_lowercase(&self) -> HashSet<String> {
        self.tuples
            .iter()
            .flatten()
            .map(|w| w.to_lowercase())
            .collect()
    }
}
