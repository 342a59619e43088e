//! CoNLL-U reading and writing for coreference-annotated corpora.
//!
//! The surface format is standard CoNLL-U: ten tab-separated columns, `#`
//! comment lines, a blank line between sentences, `# newdoc` starting a new
//! document, decimal ids `n.m` for empty nodes and range ids `n-m` for
//! multiword tokens (range lines carry no word of their own and are skipped).
//!
//! Coreference is carried in the MISC column under the `Entity` key. The
//! value is a concatenation of bracket events per token:
//!
//! - `(id`    opens a mention of cluster `id` at this token,
//! - `id)`    closes it after this token,
//! - `(id)`   is a one-token mention,
//! - `(id[k/n]` opens part `k` of an `n`-part discontinuous mention.
//!
//! Within one token, open events apply left to right, then close events;
//! closes pop the innermost open mention of their cluster. Only token forms,
//! sentence boundaries, comments and entity annotations survive a round
//! trip; lemmas, tags and syntax are read past and written back as `_`.

use crate::corpus::{
    Cluster, Corpus, Document, Mention, SentenceMeta, Span, Split, Token,
};
use std::collections::HashMap;
use std::fmt::Write as _;
use thiserror::Error;

/// Errors raised while reading or writing CoNLL-U data.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed line: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: unbalanced entity annotation for cluster {cluster_id}")]
    UnbalancedEntity { line: usize, cluster_id: String },
    #[error("line {line}: bad part index {k}/{n} for cluster {cluster_id}")]
    BadPartIndex {
        line: usize,
        cluster_id: String,
        k: usize,
        n: usize,
    },
    #[error("document {doc_id} cannot be serialized: {reason}")]
    Unserializable { doc_id: String, reason: String },
    #[error("cannot split {docs} documents with dev fraction {fraction}: one side would be empty")]
    TooFewDocs { docs: usize, fraction: f64 },
    #[error("dev fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("corpora have mismatched split tags: {a} vs {b}")]
    SplitMismatch { a: String, b: String },
    #[error("cannot merge an empty list of corpora")]
    EmptyMerge,
}

/// Corpus metadata applied while parsing.
#[derive(Debug, Clone)]
pub struct ParseOptions {
    pub name: String,
    pub language: String,
    pub split: Split,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            name: "corpus".to_string(),
            language: "und".to_string(),
            split: Split::Train,
        }
    }
}

// ---------------------------------------------------------------------------
// Entity events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
struct PartIndex {
    k: usize,
    n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Event {
    Open {
        cluster_id: String,
        part: Option<PartIndex>,
    },
    Close {
        cluster_id: String,
    },
}

fn malformed(line: usize, reason: impl Into<String>) -> IngestError {
    IngestError::MalformedLine {
        line,
        reason: reason.into(),
    }
}

/// Tokenize the value of a MISC `Entity=` entry into bracket events.
fn parse_entity_value(value: &str, line: usize) -> Result<Vec<Event>, IngestError> {
    let mut events = Vec::new();
    let mut rest = value;
    while !rest.is_empty() {
        if let Some(tail) = rest.strip_prefix('(') {
            let id_end = tail
                .find(|c| c == '(' || c == ')' || c == '[' || c == ']')
                .unwrap_or(tail.len());
            let cluster_id = &tail[..id_end];
            if cluster_id.is_empty() {
                return Err(malformed(line, format!("empty cluster id in {value:?}")));
            }
            let mut after = &tail[id_end..];
            let mut part = None;
            if let Some(bracketed) = after.strip_prefix('[') {
                let close = bracketed
                    .find(']')
                    .ok_or_else(|| malformed(line, format!("unterminated part index in {value:?}")))?;
                let inner = &bracketed[..close];
                let (k_str, n_str) = inner
                    .split_once('/')
                    .ok_or_else(|| malformed(line, format!("part index {inner:?} lacks '/'")))?;
                let k: usize = k_str
                    .parse()
                    .map_err(|_| malformed(line, format!("non-numeric part index {inner:?}")))?;
                let n: usize = n_str
                    .parse()
                    .map_err(|_| malformed(line, format!("non-numeric part index {inner:?}")))?;
                if k == 0 || n == 0 || k > n {
                    return Err(IngestError::BadPartIndex {
                        line,
                        cluster_id: cluster_id.to_string(),
                        k,
                        n,
                    });
                }
                part = Some(PartIndex { k, n });
                after = &bracketed[close + 1..];
            }
            events.push(Event::Open {
                cluster_id: cluster_id.to_string(),
                part,
            });
            if let Some(tail2) = after.strip_prefix(')') {
                events.push(Event::Close {
                    cluster_id: cluster_id.to_string(),
                });
                rest = tail2;
            } else {
                rest = after;
            }
        } else {
            let close = rest
                .find(')')
                .ok_or_else(|| malformed(line, format!("dangling entity event in {value:?}")))?;
            let cluster_id = &rest[..close];
            if cluster_id.is_empty() || cluster_id.contains(['(', '[', ']']) {
                return Err(malformed(line, format!("bad close event in {value:?}")));
            }
            events.push(Event::Close {
                cluster_id: cluster_id.to_string(),
            });
            rest = &rest[close + 1..];
        }
    }
    Ok(events)
}

#[derive(Debug)]
struct OpenItem {
    part: Option<PartIndex>,
    start: usize,
    line: usize,
    seq: usize,
}

#[derive(Debug)]
struct PendingParts {
    n: usize,
    parts: Vec<Span>,
    line: usize,
    seq: usize,
}

#[derive(Debug)]
struct RawMention {
    cluster_id: String,
    parts: Vec<Span>,
    seq: usize,
}

/// Reconstructs mentions from a stream of open/close events.
///
/// One per-cluster stack resolves nesting; discontinuous parts are buffered
/// until part `n/n` completes.
#[derive(Debug, Default)]
struct EntityAssembler {
    stacks: HashMap<String, Vec<OpenItem>>,
    pending: HashMap<String, PendingParts>,
    mentions: Vec<RawMention>,
    seq: usize,
}

impl EntityAssembler {
    fn open(&mut self, cluster_id: &str, part: Option<PartIndex>, token: usize, line: usize) {
        self.seq += 1;
        self.stacks
            .entry(cluster_id.to_string())
            .or_default()
            .push(OpenItem {
                part,
                start: token,
                line,
                seq: self.seq,
            });
    }

    fn close(&mut self, cluster_id: &str, token: usize, line: usize) -> Result<(), IngestError> {
        let item = self
            .stacks
            .get_mut(cluster_id)
            .and_then(|s| s.pop())
            .ok_or_else(|| IngestError::UnbalancedEntity {
                line,
                cluster_id: cluster_id.to_string(),
            })?;
        let span = Span::new(item.start, token + 1);
        match item.part {
            None => self.mentions.push(RawMention {
                cluster_id: cluster_id.to_string(),
                parts: vec![span],
                seq: item.seq,
            }),
            Some(PartIndex { k, n }) => {
                if k == 1 {
                    if self.pending.contains_key(cluster_id) {
                        return Err(IngestError::BadPartIndex {
                            line,
                            cluster_id: cluster_id.to_string(),
                            k,
                            n,
                        });
                    }
                    if n == 1 {
                        self.mentions.push(RawMention {
                            cluster_id: cluster_id.to_string(),
                            parts: vec![span],
                            seq: item.seq,
                        });
                    } else {
                        self.pending.insert(
                            cluster_id.to_string(),
                            PendingParts {
                                n,
                                parts: vec![span],
                                line,
                                seq: item.seq,
                            },
                        );
                    }
                } else {
                    let pending = self.pending.get_mut(cluster_id).ok_or_else(|| {
                        IngestError::BadPartIndex {
                            line,
                            cluster_id: cluster_id.to_string(),
                            k,
                            n,
                        }
                    })?;
                    if pending.n != n || pending.parts.len() != k - 1 {
                        return Err(IngestError::BadPartIndex {
                            line,
                            cluster_id: cluster_id.to_string(),
                            k,
                            n,
                        });
                    }
                    pending.parts.push(span);
                    if k == n {
                        let done = self.pending.remove(cluster_id).expect("pending exists");
                        self.mentions.push(RawMention {
                            cluster_id: cluster_id.to_string(),
                            parts: done.parts,
                            seq: done.seq,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Fail if any mention is still open or any discontinuous mention is
    /// missing parts.
    fn finish(self) -> Result<Vec<RawMention>, IngestError> {
        let mut worst: Option<IngestError> = None;
        let mut worst_line = usize::MAX;
        for (cluster_id, stack) in &self.stacks {
            for item in stack {
                if item.line < worst_line {
                    worst_line = item.line;
                    worst = Some(IngestError::UnbalancedEntity {
                        line: item.line,
                        cluster_id: cluster_id.clone(),
                    });
                }
            }
        }
        for (cluster_id, pending) in &self.pending {
            if pending.line < worst_line {
                worst_line = pending.line;
                worst = Some(IngestError::BadPartIndex {
                    line: pending.line,
                    cluster_id: cluster_id.clone(),
                    k: pending.parts.len() + 1,
                    n: pending.n,
                });
            }
        }
        match worst {
            Some(err) => Err(err),
            None => Ok(self.mentions),
        }
    }
}

/// Group raw mentions into clusters ordered by first appearance.
fn assemble_clusters(raw: Vec<RawMention>) -> Vec<Cluster> {
    let mut order: Vec<String> = Vec::new();
    let mut first_seq: HashMap<String, usize> = HashMap::new();
    let mut grouped: HashMap<String, Vec<RawMention>> = HashMap::new();
    for mention in raw {
        let entry = first_seq.entry(mention.cluster_id.clone());
        if let std::collections::hash_map::Entry::Vacant(v) = entry {
            v.insert(mention.seq);
            order.push(mention.cluster_id.clone());
        } else if let Some(seq) = first_seq.get_mut(&mention.cluster_id) {
            *seq = (*seq).min(mention.seq);
        }
        grouped
            .entry(mention.cluster_id.clone())
            .or_default()
            .push(mention);
    }
    order.sort_by_key(|id| (first_seq[id], id.clone()));
    order
        .into_iter()
        .map(|id| {
            let mut mentions: Vec<Mention> = grouped
                .remove(&id)
                .unwrap_or_default()
                .into_iter()
                .map(|raw| Mention {
                    parts: raw.parts,
                    cluster_id: id.clone(),
                })
                .collect();
            mentions.sort_by(|a, b| {
                (a.start(), a.end(), &a.parts).cmp(&(b.start(), b.end(), &b.parts))
            });
            Cluster { id, mentions }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct DocBuilder {
    doc_id: String,
    tokens: Vec<Token>,
    sentences: Vec<SentenceMeta>,
    assembler: EntityAssembler,
    last_line: usize,
}

impl DocBuilder {
    fn new(doc_id: String) -> Self {
        DocBuilder {
            doc_id,
            tokens: Vec::new(),
            sentences: Vec::new(),
            assembler: EntityAssembler::default(),
            last_line: 0,
        }
    }

    fn finish(
        self,
        language: &str,
        trailing_comments: Vec<String>,
    ) -> Result<Document, IngestError> {
        let raw = self.assembler.finish()?;
        Ok(Document {
            doc_id: self.doc_id,
            language: language.to_string(),
            tokens: self.tokens,
            clusters: assemble_clusters(raw),
            sentences: self.sentences,
            trailing_comments,
        })
    }
}

enum TokenId {
    Regular,
    EmptyNode,
    MultiwordRange,
}

fn classify_token_id(id: &str, line: usize) -> Result<TokenId, IngestError> {
    if let Some((a, b)) = id.split_once('-') {
        if a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok() {
            return Ok(TokenId::MultiwordRange);
        }
        return Err(malformed(line, format!("bad token id {id:?}")));
    }
    if let Some((a, b)) = id.split_once('.') {
        if a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok() {
            return Ok(TokenId::EmptyNode);
        }
        return Err(malformed(line, format!("bad token id {id:?}")));
    }
    if id.parse::<usize>().is_ok() {
        return Ok(TokenId::Regular);
    }
    Err(malformed(line, format!("bad token id {id:?}")))
}

fn entity_value(misc: &str) -> Option<&str> {
    if misc == "_" {
        return None;
    }
    misc.split('|')
        .find_map(|entry| entry.strip_prefix("Entity="))
}

/// Parse CoNLL-U text into a corpus with default metadata.
pub fn parse(text: &str) -> Result<Corpus, IngestError> {
    parse_with(text, &ParseOptions::default())
}

/// Parse CoNLL-U text; one document per `# newdoc` block.
///
/// Token lines outside any `# newdoc` block open an implicit document.
pub fn parse_with(text: &str, opts: &ParseOptions) -> Result<Corpus, IngestError> {
    let mut corpus = Corpus::new(opts.name.clone(), opts.language.clone(), opts.split);
    let mut current: Option<DocBuilder> = None;
    let mut pending_comments: Vec<String> = Vec::new();
    let mut sent_tokens: Vec<Token> = Vec::new();
    let mut auto_id = 0usize;

    fn flush_sentence(
        builder: &mut DocBuilder,
        pending_comments: &mut Vec<String>,
        sent_tokens: &mut Vec<Token>,
    ) {
        if sent_tokens.is_empty() && pending_comments.is_empty() {
            return;
        }
        if sent_tokens.is_empty() {
            // Comment-only block: leave comments pending so they attach to
            // the next sentence or end up as trailing comments.
            return;
        }
        builder.sentences.push(SentenceMeta {
            comments: std::mem::take(pending_comments),
        });
        builder.tokens.append(sent_tokens);
    }

    fn flush_doc(
        corpus: &mut Corpus,
        current: &mut Option<DocBuilder>,
        pending_comments: &mut Vec<String>,
        sent_tokens: &mut Vec<Token>,
        language: &str,
    ) -> Result<(), IngestError> {
        if let Some(mut builder) = current.take() {
            flush_sentence(&mut builder, pending_comments, sent_tokens);
            let trailing = std::mem::take(pending_comments);
            corpus.documents.push(builder.finish(language, trailing)?);
        }
        Ok(())
    }

    for (line_idx, raw_line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw_line.trim_end_matches(['\r']);
        if line.trim().is_empty() {
            if let Some(builder) = current.as_mut() {
                flush_sentence(builder, &mut pending_comments, &mut sent_tokens);
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let trimmed = comment.trim();
            if trimmed == "newdoc" || trimmed.starts_with("newdoc ") || trimmed.starts_with("newdoc\t")
            {
                flush_doc(
                    &mut corpus,
                    &mut current,
                    &mut pending_comments,
                    &mut sent_tokens,
                    &opts.language,
                )?;
                let doc_id = trimmed
                    .strip_prefix("newdoc")
                    .map(|rest| rest.trim())
                    .and_then(|rest| rest.strip_prefix("id"))
                    .map(|rest| rest.trim().trim_start_matches('=').trim().to_string())
                    .filter(|id| !id.is_empty())
                    .unwrap_or_else(|| {
                        auto_id += 1;
                        format!("doc_{auto_id}")
                    });
                current = Some(DocBuilder::new(doc_id));
            } else {
                pending_comments.push(line.to_string());
            }
            continue;
        }

        // Token line.
        let columns: Vec<&str> = line.split('\t').collect();
        if columns.len() != 10 {
            return Err(malformed(
                line_no,
                format!("expected 10 columns, found {}", columns.len()),
            ));
        }
        let builder = current.get_or_insert_with(|| {
            auto_id += 1;
            DocBuilder::new(format!("doc_{auto_id}"))
        });
        builder.last_line = line_no;
        let is_empty = match classify_token_id(columns[0], line_no)? {
            TokenId::MultiwordRange => continue,
            TokenId::EmptyNode => true,
            TokenId::Regular => false,
        };
        let index = builder.tokens.len() + sent_tokens.len();
        sent_tokens.push(Token {
            index,
            form: columns[1].to_string(),
            sentence_index: builder.sentences.len(),
            is_empty,
        });
        if let Some(value) = entity_value(columns[9]) {
            if value.is_empty() {
                return Err(malformed(line_no, "empty Entity value"));
            }
            let events = parse_entity_value(value, line_no)?;
            // Opens apply left to right, then closes.
            for event in &events {
                if let Event::Open { cluster_id, part } = event {
                    builder
                        .assembler
                        .open(cluster_id, part.clone(), index, line_no);
                }
            }
            for event in &events {
                if let Event::Close { cluster_id } = event {
                    builder.assembler.close(cluster_id, index, line_no)?;
                }
            }
        }
    }
    flush_doc(
        &mut corpus,
        &mut current,
        &mut pending_comments,
        &mut sent_tokens,
        &opts.language,
    )?;
    Ok(corpus)
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct OpenEv<'a> {
    end: usize,
    cluster_id: &'a str,
    part: Option<PartIndex>,
}

/// Serialize a corpus back to CoNLL-U text.
///
/// Each document is verified by re-interpreting its own bracket events; a
/// mention configuration the format cannot express (e.g. crossing mentions
/// within one cluster) raises [`IngestError::Unserializable`]. Any corpus
/// produced by [`parse`] serializes cleanly.
pub fn serialize(corpus: &Corpus) -> Result<String, IngestError> {
    let mut out = String::new();
    for doc in &corpus.documents {
        serialize_doc(doc, &mut out)?;
    }
    Ok(out)
}

fn serialize_doc(doc: &Document, out: &mut String) -> Result<(), IngestError> {
    let mut opens: HashMap<usize, Vec<OpenEv<'_>>> = HashMap::new();
    let mut closes: HashMap<usize, Vec<&str>> = HashMap::new();
    for cluster in &doc.clusters {
        for mention in &cluster.mentions {
            let n = mention.parts.len();
            for (k0, span) in mention.parts.iter().enumerate() {
                let part = if n > 1 {
                    Some(PartIndex { k: k0 + 1, n })
                } else {
                    None
                };
                if span.end > doc.tokens.len() || span.start >= span.end {
                    return Err(IngestError::Unserializable {
                        doc_id: doc.doc_id.clone(),
                        reason: format!("span {span} out of bounds"),
                    });
                }
                opens.entry(span.start).or_default().push(OpenEv {
                    end: span.end,
                    cluster_id: &cluster.id,
                    part,
                });
                closes.entry(span.end - 1).or_default().push(&cluster.id);
            }
        }
    }
    for token_opens in opens.values_mut() {
        // Outermost (longest) mentions open first; ties resolved by id so
        // output is deterministic.
        token_opens.sort_by(|a, b| {
            b.end
                .cmp(&a.end)
                .then_with(|| a.cluster_id.cmp(b.cluster_id))
                .then_with(|| part_key(&a.part).cmp(&part_key(&b.part)))
        });
    }
    for token_closes in closes.values_mut() {
        token_closes.sort();
    }

    verify_events(doc, &opens, &closes)?;

    writeln!(out, "# newdoc id = {}", doc.doc_id).expect("write to string");
    let mut token_pos = 0usize;
    for (sent_idx, meta) in doc.sentences.iter().enumerate() {
        for comment in &meta.comments {
            writeln!(out, "{comment}").expect("write to string");
        }
        let mut word_no = 0usize;
        let mut empty_no = 0usize;
        while token_pos < doc.tokens.len() && doc.tokens[token_pos].sentence_index == sent_idx {
            let token = &doc.tokens[token_pos];
            let id = if token.is_empty {
                empty_no += 1;
                format!("{word_no}.{empty_no}")
            } else {
                word_no += 1;
                empty_no = 0;
                word_no.to_string()
            };
            let misc = render_events(
                opens.get(&token.index).map(Vec::as_slice).unwrap_or(&[]),
                closes.get(&token.index).map(Vec::as_slice).unwrap_or(&[]),
                token.index,
            );
            let misc = if misc.is_empty() {
                "_".to_string()
            } else {
                format!("Entity={misc}")
            };
            writeln!(
                out,
                "{id}\t{form}\t_\t_\t_\t_\t_\t_\t_\t{misc}",
                form = token.form
            )
            .expect("write to string");
            token_pos += 1;
        }
        out.push('\n');
    }
    for comment in &doc.trailing_comments {
        writeln!(out, "{comment}").expect("write to string");
    }
    Ok(())
}

fn part_key(part: &Option<PartIndex>) -> (usize, usize) {
    match part {
        None => (0, 0),
        Some(PartIndex { k, n }) => (*k, *n),
    }
}

fn render_events(opens: &[OpenEv<'_>], closes: &[&str], token: usize) -> String {
    let mut remaining: HashMap<&str, usize> = HashMap::new();
    for id in closes {
        *remaining.entry(id).or_insert(0) += 1;
    }
    let mut rendered = String::new();
    for open in opens {
        rendered.push('(');
        rendered.push_str(open.cluster_id);
        if let Some(PartIndex { k, n }) = &open.part {
            let _ = write!(rendered, "[{k}/{n}]");
        }
        if open.end == token + 1 {
            let count = remaining
                .get_mut(open.cluster_id)
                .expect("close event exists for single-token part");
            *count -= 1;
            rendered.push(')');
        }
    }
    let mut leftover: Vec<&str> = Vec::new();
    for id in closes {
        if let Some(count) = remaining.get_mut(id) {
            if *count > 0 {
                *count -= 1;
                leftover.push(id);
            }
        }
    }
    for id in leftover {
        rendered.push_str(id);
        rendered.push(')');
    }
    rendered
}

/// Re-interpret the generated events and check they reproduce the document's
/// mentions exactly.
fn verify_events(
    doc: &Document,
    opens: &HashMap<usize, Vec<OpenEv<'_>>>,
    closes: &HashMap<usize, Vec<&str>>,
) -> Result<(), IngestError> {
    let mut assembler = EntityAssembler::default();
    for token in 0..doc.tokens.len() {
        if let Some(token_opens) = opens.get(&token) {
            for open in token_opens {
                assembler.open(open.cluster_id, open.part.clone(), token, 0);
            }
        }
        if let Some(token_closes) = closes.get(&token) {
            for id in token_closes {
                assembler.close(id, token, 0).map_err(|err| {
                    IngestError::Unserializable {
                        doc_id: doc.doc_id.clone(),
                        reason: err.to_string(),
                    }
                })?;
            }
        }
    }
    let raw = assembler.finish().map_err(|err| IngestError::Unserializable {
        doc_id: doc.doc_id.clone(),
        reason: err.to_string(),
    })?;
    let mut reconstructed: Vec<(&str, Vec<Span>)> = raw
        .iter()
        .map(|m| (m.cluster_id.as_str(), m.parts.clone()))
        .collect();
    let mut original: Vec<(&str, Vec<Span>)> = doc
        .clusters
        .iter()
        .flat_map(|c| c.mentions.iter().map(|m| (c.id.as_str(), m.parts.clone())))
        .collect();
    reconstructed.sort();
    original.sort();
    if reconstructed != original {
        return Err(IngestError::Unserializable {
            doc_id: doc.doc_id.clone(),
            reason: "entity events do not reproduce the annotated mentions".to_string(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Statistics, splits, filters
// ---------------------------------------------------------------------------

/// Corpus-level counts in the style of dataset overview tables.
///
/// `words` excludes empty nodes; those are counted separately under `empty`.
/// Percentages are stored at full precision; round only for display.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub docs: usize,
    pub sents: usize,
    pub words: usize,
    pub empty: usize,
    pub singleton_pct: f64,
    pub discont_pct: f64,
}

/// Count documents, sentences, words, empty nodes and the singleton /
/// discontinuity percentages.
pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats {
        docs: corpus.documents.len(),
        sents: 0,
        words: 0,
        empty: 0,
        singleton_pct: 0.0,
        discont_pct: 0.0,
    };
    let mut clusters = 0usize;
    let mut singletons = 0usize;
    let mut mentions = 0usize;
    let mut discontinuous = 0usize;
    for doc in &corpus.documents {
        stats.sents += doc.sentences.len();
        for token in &doc.tokens {
            if token.is_empty {
                stats.empty += 1;
            } else {
                stats.words += 1;
            }
        }
        for cluster in &doc.clusters {
            clusters += 1;
            if cluster.is_singleton() {
                singletons += 1;
            }
            for mention in &cluster.mentions {
                mentions += 1;
                if mention.is_discontinuous() {
                    discontinuous += 1;
                }
            }
        }
    }
    if clusters > 0 {
        stats.singleton_pct = 100.0 * singletons as f64 / clusters as f64;
    }
    if mentions > 0 {
        stats.discont_pct = 100.0 * discontinuous as f64 / mentions as f64;
    }
    stats
}

fn splitmix64_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic Fisher-Yates permutation of `0..n` driven by SplitMix64.
///
/// The generator is pinned here (rather than delegated to a RNG crate) so
/// that splits stay reproducible across toolchain and dependency upgrades.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = seed;
    for i in (1..n).rev() {
        let j = (splitmix64_next(&mut state) % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }
    order
}

/// Split a corpus into train/dev parts at document granularity.
///
/// Dev receives `round(dev_fraction * docs)` documents, chosen as the prefix
/// of the seeded permutation; both sides keep the original document order.
pub fn split_train_dev(
    corpus: &Corpus,
    dev_fraction: f64,
    seed: u64,
) -> Result<(Corpus, Corpus), IngestError> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(IngestError::InvalidFraction(dev_fraction));
    }
    let n = corpus.documents.len();
    let dev_count = (dev_fraction * n as f64).round() as usize;
    if dev_count == 0 || dev_count >= n {
        return Err(IngestError::TooFewDocs {
            docs: n,
            fraction: dev_fraction,
        });
    }
    let order = seeded_permutation(n, seed);
    let mut in_dev = vec![false; n];
    for &doc_idx in order.iter().take(dev_count) {
        in_dev[doc_idx] = true;
    }
    let mut train = Corpus::new(corpus.name.clone(), corpus.language.clone(), corpus.split);
    let mut dev = Corpus::new(corpus.name.clone(), corpus.language.clone(), Split::Dev);
    for (idx, doc) in corpus.documents.iter().enumerate() {
        if in_dev[idx] {
            dev.documents.push(doc.clone());
        } else {
            train.documents.push(doc.clone());
        }
    }
    Ok((train, dev))
}

/// Remove all singleton clusters; tokens are untouched.
pub fn filter_singletons(doc: &Document) -> Document {
    let mut out = doc.clone();
    out.clusters.retain(|c| c.mentions.len() > 1);
    out
}

/// Remove discontinuous mentions; clusters emptied by the removal are
/// deleted.
pub fn drop_discontinuous(doc: &Document) -> Document {
    let mut out = doc.clone();
    for cluster in &mut out.clusters {
        cluster.mentions.retain(|m| !m.is_discontinuous());
    }
    out.clusters.retain(|c| !c.mentions.is_empty());
    out
}

/// Apply [`filter_singletons`] and/or [`drop_discontinuous`] to every
/// document of a corpus.
pub fn filter_corpus(corpus: &Corpus, singletons: bool, discontinuous: bool) -> Corpus {
    let mut out = corpus.clone();
    out.documents = corpus
        .documents
        .iter()
        .map(|doc| {
            let mut doc = doc.clone();
            if discontinuous {
                doc = drop_discontinuous(&doc);
            }
            if singletons {
                doc = filter_singletons(&doc);
            }
            doc
        })
        .collect();
    out
}

/// Concatenate corpora of the same split into one multilingual corpus.
///
/// Document ids are prefixed with their source corpus name; each document
/// keeps its own language tag while the merged corpus is tagged `multi`.
pub fn merge_corpora(corpora: &[Corpus]) -> Result<Corpus, IngestError> {
    let first = corpora.first().ok_or(IngestError::EmptyMerge)?;
    for other in &corpora[1..] {
        if other.split != first.split {
            return Err(IngestError::SplitMismatch {
                a: first.split.to_string(),
                b: other.split.to_string(),
            });
        }
    }
    let name = corpora
        .iter()
        .map(|c| c.name.as_str())
        .collect::<Vec<_>>()
        .join("+");
    let mut merged = Corpus::new(name, "multi", first.split);
    for corpus in corpora {
        for doc in &corpus.documents {
            let mut doc = doc.clone();
            doc.doc_id = format!("{}/{}", corpus.name, doc.doc_id);
            merged.documents.push(doc);
        }
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate;

    fn conllu(lines: &[&str]) -> String {
        let mut text = String::new();
        for line in lines {
            text.push_str(line);
            text.push('\n');
        }
        text
    }

    fn token_line(id: &str, form: &str, misc: &str) -> String {
        format!("{id}\t{form}\t_\t_\t_\t_\t_\t_\t_\t{misc}")
    }

    #[test]
    fn parse_two_token_mention() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "the", "Entity=(e1"),
            &token_line("2", "cat", "Entity=e1)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        assert_eq!(corpus.documents.len(), 1);
        let doc = &corpus.documents[0];
        assert_eq!(doc.clusters.len(), 1);
        assert_eq!(doc.clusters[0].id, "e1");
        assert_eq!(
            doc.clusters[0].mentions[0].parts,
            vec![Span::new(0, 2)]
        );
    }

    #[test]
    fn parse_single_token_mention() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "it", "Entity=(e1)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let doc = &corpus.documents[0];
        assert_eq!(doc.clusters[0].mentions[0].parts, vec![Span::new(0, 1)]);
        assert!(doc.clusters[0].is_singleton());
    }

    #[test]
    fn parse_discontinuous_mention() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(e1[1/2])"),
            &token_line("2", "b", "_"),
            &token_line("3", "c", "Entity=(e1[2/2])"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let mention = &corpus.documents[0].clusters[0].mentions[0];
        assert_eq!(mention.parts, vec![Span::new(0, 1), Span::new(2, 3)]);
        assert!(mention.is_discontinuous());
    }

    #[test]
    fn parse_empty_node_and_multiword_range() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1-2", "vámonos", "_"),
            &token_line("1", "vamos", "_"),
            &token_line("2", "nos", "_"),
            &token_line("2.1", "_", "Entity=(e1)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let doc = &corpus.documents[0];
        assert_eq!(doc.tokens.len(), 3);
        assert!(doc.tokens[2].is_empty);
        assert_eq!(doc.clusters[0].mentions[0].parts, vec![Span::new(2, 3)]);
    }

    #[test]
    fn parse_nested_mentions_share_token() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(e1"),
            &token_line("2", "b", "Entity=(e2)"),
            &token_line("3", "c", "Entity=e1)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let doc = &corpus.documents[0];
        assert_eq!(doc.clusters.len(), 2);
        assert_eq!(doc.clusters[0].mentions[0].parts, vec![Span::new(0, 3)]);
        assert_eq!(doc.clusters[1].mentions[0].parts, vec![Span::new(1, 2)]);
    }

    #[test]
    fn parse_rejects_wrong_column_count() {
        let text = "1\tform\t_\n";
        match parse(text) {
            Err(IngestError::MalformedLine { line: 1, .. }) => {}
            other => panic!("expected malformed-line, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_unbalanced_entity() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(e1"),
            "",
        ]);
        match parse(&text) {
            Err(IngestError::UnbalancedEntity { line: 2, cluster_id }) => {
                assert_eq!(cluster_id, "e1");
            }
            other => panic!("expected unbalanced-entity, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_bad_part_index() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(e1[2/2])"),
            "",
        ]);
        match parse(&text) {
            Err(IngestError::BadPartIndex { k: 2, n: 2, .. }) => {}
            other => panic!("expected bad-part-index, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_missing_part() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(e1[1/2])"),
            "",
        ]);
        match parse(&text) {
            Err(IngestError::BadPartIndex { k: 2, n: 2, .. }) => {}
            other => panic!("expected bad-part-index for missing part, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_preserves_structure_and_comments() {
        let text = conllu(&[
            "# newdoc id = d1",
            "# sent_id = s1",
            "# text = a b c",
            "# custom note",
            &token_line("1", "a", "Entity=(e1"),
            &token_line("2", "b", "Entity=(e2)"),
            &token_line("3", "c", "Entity=e1)"),
            "",
            "# sent_id = s2",
            &token_line("1", "d", "Entity=(e1)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let serialized = serialize(&corpus).unwrap();
        let reparsed = parse(&serialized).unwrap();
        assert_eq!(corpus, reparsed);
        assert!(serialized.contains("# custom note"));
    }

    #[test]
    fn round_trip_nested_same_cluster() {
        let mut doc = Document::new("d1", "und");
        doc.sentences.push(SentenceMeta::default());
        for (i, form) in ["a", "b", "c"].iter().enumerate() {
            doc.tokens.push(Token {
                index: i,
                form: (*form).to_string(),
                sentence_index: 0,
                is_empty: false,
            });
        }
        doc.clusters.push(Cluster {
            id: "e1".into(),
            mentions: vec![
                Mention::continuous(Span::new(0, 3), "e1"),
                Mention::continuous(Span::new(0, 2), "e1"),
                Mention::continuous(Span::new(1, 2), "e1"),
            ],
        });
        let mut corpus = Corpus::new("c", "und", Split::Train);
        corpus.documents.push(doc);
        let serialized = serialize(&corpus).unwrap();
        let reparsed = parse(&serialized).unwrap();
        assert_eq!(corpus.documents[0].clusters, reparsed.documents[0].clusters);
    }

    #[test]
    fn serialize_rejects_crossing_same_cluster() {
        let mut doc = Document::new("d1", "und");
        doc.sentences.push(SentenceMeta::default());
        for i in 0..3 {
            doc.tokens.push(Token {
                index: i,
                form: format!("t{i}"),
                sentence_index: 0,
                is_empty: false,
            });
        }
        doc.clusters.push(Cluster {
            id: "e1".into(),
            mentions: vec![
                Mention::continuous(Span::new(0, 2), "e1"),
                Mention::continuous(Span::new(1, 3), "e1"),
            ],
        });
        let mut corpus = Corpus::new("c", "und", Split::Train);
        corpus.documents.push(doc);
        match serialize(&corpus) {
            Err(IngestError::Unserializable { .. }) => {}
            other => panic!("expected unserializable, got {other:?}"),
        }
    }

    #[test]
    fn serialize_empty_corpus() {
        let corpus = Corpus::new("c", "und", Split::Train);
        assert_eq!(serialize(&corpus).unwrap(), "");
    }

    #[test]
    fn stats_counts() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(e1)"),
            &token_line("2", "b", "Entity=(e2)"),
            &token_line("3", "c", "Entity=(e3[1/2])"),
            &token_line("4", "d", "_"),
            &token_line("5", "e", "Entity=(e3[2/2])"),
            "",
            &token_line("1", "f", "Entity=(e3)(e3"),
            &token_line("2", "g", "Entity=e3)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let stats = compute_stats(&corpus);
        assert_eq!(stats.docs, 1);
        assert_eq!(stats.sents, 2);
        assert_eq!(stats.words, 7);
        assert_eq!(stats.empty, 0);
        // Clusters: e1 (1 mention), e2 (1), e3 (3) -> 2 of 3 singleton.
        assert!((stats.singleton_pct - 100.0 * 2.0 / 3.0).abs() < 1e-12);
        // Mentions: 5 total, 1 discontinuous.
        assert!((stats.discont_pct - 20.0).abs() < 1e-12);
    }

    #[test]
    fn stats_singleton_percentage_three_clusters() {
        // Cluster sizes {3, 1, 1}: singleton_pct = 66.67, no discontinuity.
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(x)"),
            &token_line("2", "b", "Entity=(x)"),
            &token_line("3", "c", "Entity=(x)"),
            &token_line("4", "d", "Entity=(y)"),
            &token_line("5", "e", "Entity=(z)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let stats = compute_stats(&corpus);
        assert!((stats.singleton_pct - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(stats.discont_pct, 0.0);
    }

    #[test]
    fn stats_empty_corpus_has_zero_percentages() {
        let corpus = Corpus::new("c", "und", Split::Train);
        let stats = compute_stats(&corpus);
        assert_eq!(stats.singleton_pct, 0.0);
        assert_eq!(stats.discont_pct, 0.0);
    }

    fn synthetic_corpus(docs: usize) -> Corpus {
        let mut corpus = Corpus::new("c", "und", Split::Train);
        for i in 0..docs {
            let mut doc = Document::new(format!("d{i}"), "und");
            doc.sentences.push(SentenceMeta::default());
            doc.tokens.push(Token {
                index: 0,
                form: "w".into(),
                sentence_index: 0,
                is_empty: false,
            });
            corpus.documents.push(doc);
        }
        corpus
    }

    #[test]
    fn split_sizes_and_determinism() {
        let corpus = synthetic_corpus(100);
        let (train, dev) = split_train_dev(&corpus, 0.10, 13).unwrap();
        assert_eq!(train.documents.len(), 90);
        assert_eq!(dev.documents.len(), 10);
        let (train2, dev2) = split_train_dev(&corpus, 0.10, 13).unwrap();
        assert_eq!(train, train2);
        assert_eq!(dev, dev2);
        // Disjoint and exhaustive.
        let mut ids: Vec<&str> = train
            .documents
            .iter()
            .chain(dev.documents.iter())
            .map(|d| d.doc_id.as_str())
            .collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 100);
    }

    #[test]
    fn split_matches_independent_shuffle() {
        // Oracle: a from-scratch reimplementation of SplitMix64 + Fisher-Yates.
        fn oracle_permutation(n: usize, seed: u64) -> Vec<usize> {
            fn mix(state: &mut u64) -> u64 {
                *state = state.wrapping_add(0x9e3779b97f4a7c15);
                let mut z = *state;
                z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
                z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
                z ^ (z >> 31)
            }
            let mut order: Vec<usize> = (0..n).collect();
            let mut state = seed;
            let mut i = n.saturating_sub(1);
            while i >= 1 {
                let j = (mix(&mut state) % (i as u64 + 1)) as usize;
                order.swap(i, j);
                i -= 1;
            }
            order
        }
        let corpus = synthetic_corpus(10);
        let (_, dev) = split_train_dev(&corpus, 0.10, 7).unwrap();
        let expected_idx = oracle_permutation(10, 7)[0];
        assert_eq!(dev.documents.len(), 1);
        assert_eq!(dev.documents[0].doc_id, format!("d{expected_idx}"));
    }

    #[test]
    fn split_too_few_docs() {
        let corpus = synthetic_corpus(1);
        match split_train_dev(&corpus, 0.10, 1) {
            Err(IngestError::TooFewDocs { .. }) => {}
            other => panic!("expected too-few-docs, got {other:?}"),
        }
    }

    #[test]
    fn filter_singletons_examples() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(x)"),
            &token_line("2", "b", "Entity=(x)"),
            &token_line("3", "c", "Entity=(x)"),
            &token_line("4", "d", "Entity=(y)"),
            &token_line("5", "e", "Entity=(z)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let filtered = filter_singletons(&corpus.documents[0]);
        assert_eq!(filtered.clusters.len(), 1);
        assert_eq!(filtered.clusters[0].id, "x");
        assert_eq!(filtered.tokens, corpus.documents[0].tokens);
        // Identity when no singletons.
        let again = filter_singletons(&filtered);
        assert_eq!(again, filtered);
        // All singletons -> zero clusters.
        let singles = parse(&conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(x)"),
            "",
        ]))
        .unwrap();
        assert!(filter_singletons(&singles.documents[0]).clusters.is_empty());
    }

    #[test]
    fn drop_discontinuous_examples() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(m(x[1/2])"),
            &token_line("2", "b", "Entity=(x[2/2])m)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let doc = &corpus.documents[0];
        // Cluster m: continuous [0,2); cluster x: discontinuous.
        let dropped = drop_discontinuous(doc);
        assert_eq!(dropped.clusters.len(), 1);
        assert_eq!(dropped.clusters[0].id, "m");
        // Identity when nothing is discontinuous.
        assert_eq!(drop_discontinuous(&dropped), dropped);
    }

    #[test]
    fn drop_discontinuous_deletes_emptied_cluster() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(x[1/2])"),
            &token_line("2", "b", "_"),
            &token_line("3", "c", "Entity=(x[2/2])"),
            &token_line("4", "d", "Entity=(x[1/2])"),
            &token_line("5", "e", "_"),
            &token_line("6", "f", "Entity=(x[2/2])"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        let dropped = drop_discontinuous(&corpus.documents[0]);
        assert!(dropped.clusters.is_empty());
    }

    #[test]
    fn merge_corpora_prefixes_and_checks_split() {
        let a = parse_with(
            &conllu(&[
                "# newdoc id = d1",
                &token_line("1", "a", "Entity=(x)"),
                "",
            ]),
            &ParseOptions {
                name: "cs".into(),
                language: "cs".into(),
                split: Split::Train,
            },
        )
        .unwrap();
        let mut b = a.clone();
        b.name = "ru".into();
        b.language = "ru".into();
        for doc in &mut b.documents {
            doc.language = "ru".into();
        }
        let merged = merge_corpora(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(merged.documents.len(), 2);
        assert_eq!(merged.language, "multi");
        assert_eq!(merged.documents[0].doc_id, "cs/d1");
        assert_eq!(merged.documents[1].doc_id, "ru/d1");
        assert_eq!(merged.documents[1].language, "ru");

        let mut dev = b.clone();
        dev.split = Split::Dev;
        match merge_corpora(&[a, dev]) {
            Err(IngestError::SplitMismatch { .. }) => {}
            other => panic!("expected split-mismatch, got {other:?}"),
        }
    }

    #[test]
    fn merge_single_corpus_prefixes_ids() {
        let a = parse_with(
            &conllu(&[
                "# newdoc id = d1",
                &token_line("1", "a", "Entity=(x)"),
                "",
            ]),
            &ParseOptions {
                name: "cs".into(),
                language: "cs".into(),
                split: Split::Train,
            },
        )
        .unwrap();
        let merged = merge_corpora(std::slice::from_ref(&a)).unwrap();
        assert_eq!(merged.documents.len(), 1);
        assert_eq!(merged.documents[0].doc_id, "cs/d1");
    }

    #[test]
    fn parsed_fixture_validates() {
        let text = conllu(&[
            "# newdoc id = d1",
            &token_line("1", "a", "Entity=(e1"),
            &token_line("2", "b", "Entity=e1)"),
            &token_line("3", "c", "Entity=(e1)"),
            "",
        ]);
        let corpus = parse(&text).unwrap();
        assert!(validate(&corpus.documents[0]).is_empty());
    }
}
