//! In-memory representation of coreference-annotated documents.
//!
//! The representation is cluster-based: every mention carries the id of the
//! cluster it belongs to, and a document owns a flat list of clusters. Token
//! indices are document-global over the linearized token sequence (empty
//! nodes interleaved at their annotated positions), so mentions may freely
//! cross sentence boundaries. All types are plain data and are treated as
//! immutable after construction.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;

/// A single token of a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Document-level ordinal, 0-based, over the linearized token sequence.
    pub index: usize,
    /// Surface form.
    pub form: String,
    /// Ordinal of the containing sentence within the document.
    pub sentence_index: usize,
    /// True for empty nodes (tokens with decimal ids in CoNLL-U).
    pub is_empty: bool,
}

/// Half-open token-index interval `[start, end)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start < end, "span must be non-empty");
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start
    }

    /// True when the two spans share at least one token.
    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// A mention: one or more disjoint spans referring to an entity.
///
/// `parts.len() > 1` marks a discontinuous mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    /// Ordered (by start), pairwise disjoint spans.
    pub parts: Vec<Span>,
    /// Id of the cluster this mention belongs to.
    pub cluster_id: String,
}

impl Mention {
    pub fn continuous(span: Span, cluster_id: impl Into<String>) -> Self {
        Mention {
            parts: vec![span],
            cluster_id: cluster_id.into(),
        }
    }

    pub fn is_discontinuous(&self) -> bool {
        self.parts.len() > 1
    }

    /// First token index covered by the mention.
    pub fn start(&self) -> usize {
        self.parts.first().map(|s| s.start).unwrap_or(0)
    }

    /// One past the last token index covered by the mention.
    pub fn end(&self) -> usize {
        self.parts.last().map(|s| s.end).unwrap_or(0)
    }
}

/// All mentions of one entity, identified by a document-unique id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub mentions: Vec<Mention>,
}

impl Cluster {
    pub fn is_singleton(&self) -> bool {
        self.mentions.len() == 1
    }
}

/// Per-sentence metadata kept for lossless serialization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceMeta {
    /// Comment lines (without the leading `#`, trimmed) in original order.
    pub comments: Vec<String>,
}

/// A coreference-annotated document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub language: String,
    pub tokens: Vec<Token>,
    pub clusters: Vec<Cluster>,
    /// One entry per sentence; `tokens[i].sentence_index` points here.
    pub sentences: Vec<SentenceMeta>,
    /// Comment lines at the end of the document not attached to any sentence.
    pub trailing_comments: Vec<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, language: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            language: language.into(),
            tokens: Vec::new(),
            clusters: Vec::new(),
            sentences: Vec::new(),
            trailing_comments: Vec::new(),
        }
    }

    /// Iterate over all mentions of all clusters.
    pub fn mentions(&self) -> impl Iterator<Item = &Mention> {
        self.clusters.iter().flat_map(|c| c.mentions.iter())
    }
}

/// Dataset split tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// A named collection of documents with a split tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    /// Language code, or `multi` for joined corpora.
    pub language: String,
    pub documents: Vec<Document>,
    pub split: Split,
}

impl Corpus {
    pub fn new(name: impl Into<String>, language: impl Into<String>, split: Split) -> Self {
        Corpus {
            name: name.into(),
            language: language.into(),
            documents: Vec::new(),
            split,
        }
    }
}

/// Whether empty nodes count toward the document word count `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountConfig {
    pub count_empty_in_t: bool,
}

impl Default for CountConfig {
    fn default() -> Self {
        CountConfig {
            count_empty_in_t: true,
        }
    }
}

/// Number of words `T` in a document under the given counting configuration.
pub fn word_count(doc: &Document, config: CountConfig) -> usize {
    if config.count_empty_in_t {
        doc.tokens.len()
    } else {
        doc.tokens.iter().filter(|t| !t.is_empty).count()
    }
}

/// A single invariant violation found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Mention span reaches past the token sequence.
    SpanOutOfBounds {
        cluster_id: String,
        span: Span,
        token_count: usize,
    },
    /// The same mention (identical parts) appears more than once.
    DuplicateMention { parts: Vec<Span> },
    /// Two clusters share an id.
    DuplicateClusterId { cluster_id: String },
    /// Cluster with no mentions.
    EmptyCluster { cluster_id: String },
    /// Mention with no parts.
    EmptyMention { cluster_id: String },
    /// Mention parts are not sorted by start.
    UnsortedParts { cluster_id: String, parts: Vec<Span> },
    /// Mention parts overlap each other.
    OverlappingParts { cluster_id: String, parts: Vec<Span> },
    /// A mention's `cluster_id` disagrees with its containing cluster.
    ClusterIdMismatch {
        cluster_id: String,
        mention_cluster_id: String,
    },
    /// Token indices are not consecutive 0..T-1.
    BadTokenIndex { position: usize, index: usize },
    /// Token points at a nonexistent sentence.
    BadSentenceIndex { position: usize, sentence_index: usize },
}

impl Violation {
    /// Stable kebab-case code naming the violation kind.
    pub fn code(&self) -> &'static str {
        match self {
            Violation::SpanOutOfBounds { .. } => "span-out-of-bounds",
            Violation::DuplicateMention { .. } => "duplicate-mention",
            Violation::DuplicateClusterId { .. } => "duplicate-cluster-id",
            Violation::EmptyCluster { .. } => "empty-cluster",
            Violation::EmptyMention { .. } => "empty-mention",
            Violation::UnsortedParts { .. } => "unsorted-parts",
            Violation::OverlappingParts { .. } => "overlapping-parts",
            Violation::ClusterIdMismatch { .. } => "cluster-id-mismatch",
            Violation::BadTokenIndex { .. } => "bad-token-index",
            Violation::BadSentenceIndex { .. } => "bad-sentence-index",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SpanOutOfBounds {
                cluster_id,
                span,
                token_count,
            } => write!(
                f,
                "{}: cluster {cluster_id}: span {span} exceeds document length {token_count}",
                self.code()
            ),
            Violation::DuplicateMention { parts } => {
                write!(f, "{}: mention with parts ", self.code())?;
                for p in parts {
                    write!(f, "{p}")?;
                }
                write!(f, " occurs more than once")
            }
            Violation::DuplicateClusterId { cluster_id } => {
                write!(f, "{}: cluster id {cluster_id} reused", self.code())
            }
            Violation::EmptyCluster { cluster_id } => {
                write!(f, "{}: cluster {cluster_id} has no mentions", self.code())
            }
            Violation::EmptyMention { cluster_id } => {
                write!(f, "{}: cluster {cluster_id} has a mention with no parts", self.code())
            }
            Violation::UnsortedParts { cluster_id, .. } => {
                write!(f, "{}: cluster {cluster_id}: mention parts not sorted", self.code())
            }
            Violation::OverlappingParts { cluster_id, .. } => {
                write!(f, "{}: cluster {cluster_id}: mention parts overlap", self.code())
            }
            Violation::ClusterIdMismatch {
                cluster_id,
                mention_cluster_id,
            } => write!(
                f,
                "{}: mention tagged {mention_cluster_id} inside cluster {cluster_id}",
                self.code()
            ),
            Violation::BadTokenIndex { position, index } => write!(
                f,
                "{}: token at position {position} has index {index}",
                self.code()
            ),
            Violation::BadSentenceIndex {
                position,
                sentence_index,
            } => write!(
                f,
                "{}: token at position {position} points at sentence {sentence_index}",
                self.code()
            ),
        }
    }
}

/// Check all structural invariants of a document.
///
/// Returns an empty list iff the document is well-formed. Violations are
/// data, not errors: downstream code may choose to proceed on damaged input.
pub fn validate(doc: &Document) -> Vec<Violation> {
    let mut violations = Vec::new();
    let t = doc.tokens.len();

    for (position, token) in doc.tokens.iter().enumerate() {
        if token.index != position {
            violations.push(Violation::BadTokenIndex {
                position,
                index: token.index,
            });
        }
        if token.sentence_index >= doc.sentences.len() {
            violations.push(Violation::BadSentenceIndex {
                position,
                sentence_index: token.sentence_index,
            });
        }
    }

    let mut seen_ids: HashMap<&str, usize> = HashMap::new();
    for cluster in &doc.clusters {
        *seen_ids.entry(cluster.id.as_str()).or_insert(0) += 1;
    }
    for (id, count) in &seen_ids {
        if *count > 1 {
            violations.push(Violation::DuplicateClusterId {
                cluster_id: (*id).to_string(),
            });
        }
    }

    let mut seen_mentions: HashMap<&[Span], usize> = HashMap::new();
    for cluster in &doc.clusters {
        if cluster.mentions.is_empty() {
            violations.push(Violation::EmptyCluster {
                cluster_id: cluster.id.clone(),
            });
        }
        for mention in &cluster.mentions {
            if mention.parts.is_empty() {
                violations.push(Violation::EmptyMention {
                    cluster_id: cluster.id.clone(),
                });
                continue;
            }
            if mention.cluster_id != cluster.id {
                violations.push(Violation::ClusterIdMismatch {
                    cluster_id: cluster.id.clone(),
                    mention_cluster_id: mention.cluster_id.clone(),
                });
            }
            let mut sorted = true;
            let mut disjoint = true;
            for pair in mention.parts.windows(2) {
                if pair[1].start < pair[0].start {
                    sorted = false;
                }
                if pair[1].start < pair[0].end {
                    disjoint = false;
                }
            }
            if !sorted {
                violations.push(Violation::UnsortedParts {
                    cluster_id: cluster.id.clone(),
                    parts: mention.parts.clone(),
                });
            } else if !disjoint {
                violations.push(Violation::OverlappingParts {
                    cluster_id: cluster.id.clone(),
                    parts: mention.parts.clone(),
                });
            }
            for span in &mention.parts {
                if span.start >= span.end || span.end > t {
                    violations.push(Violation::SpanOutOfBounds {
                        cluster_id: cluster.id.clone(),
                        span: *span,
                        token_count: t,
                    });
                }
            }
            *seen_mentions.entry(mention.parts.as_slice()).or_insert(0) += 1;
        }
    }
    for (parts, count) in &seen_mentions {
        if *count > 1 {
            violations.push(Violation::DuplicateMention {
                parts: parts.to_vec(),
            });
        }
    }

    violations
}
